//! Synthetic segmentation data: coloured rectangles and discs on a noisy
//! grey background.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::rng::{uniform, Gaussian};
use crate::segmetrics::SegmentationMap;
use crate::tensorpatch::ImageTensor;

pub const IMAGE_SIZE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
/// Background plus one class per shape colour.
pub const NUM_CLASSES: usize = 4;

/// Base RGB colour of each foreground class (index `k - 1` for class `k`).
const CLASS_COLORS: [[f64; 3]; 3] = [[0.85, 0.15, 0.15], [0.15, 0.80, 0.20], [0.15, 0.25, 0.90]];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: ImageTensor,
    pub labels: SegmentationMap,
}

fn range(rng: &mut ChaCha20Rng, lo: usize, hi_inclusive: usize) -> usize {
    lo + ((uniform(rng) * (hi_inclusive - lo + 1) as f64) as usize).min(hi_inclusive - lo)
}

/// Sample `index` of the dataset identified by `seed`.
///
/// Each sample is drawn from its own ChaCha20 stream (`seed`, stream =
/// `index`), so samples can be generated independently and in any order.
pub fn gen_sample(seed: u64, index: u64) -> SyntheticSample {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut g = Gaussian::new(rng);
    let n = IMAGE_SIZE;

    let mut image = ImageTensor::zeros(n, n, IMAGE_CHANNELS);
    let mut labels = SegmentationMap::filled(n, n, 0);

    let grey = 0.35 + 0.25 * uniform(g.rng_mut());
    for r in 0..n {
        for c in 0..n {
            for ch in 0..IMAGE_CHANNELS {
                image.set(r, c, ch, (grey + 0.06 * g.sample()).clamp(0.0, 1.0));
            }
        }
    }

    // at most 3 shapes of at most 12x12 pixels: background always keeps the
    // majority of the 1024 pixels
    let n_shapes = range(g.rng_mut(), 1, 3);
    for _ in 0..n_shapes {
        let class = range(g.rng_mut(), 1, NUM_CLASSES - 1);
        let disc = uniform(g.rng_mut()) < 0.5;
        let (top, left, bottom, right);
        if disc {
            let radius = range(g.rng_mut(), 3, 6);
            let cy = range(g.rng_mut(), radius, n - 1 - radius);
            let cx = range(g.rng_mut(), radius, n - 1 - radius);
            (top, left, bottom, right) = (cy - radius, cx - radius, cy + radius, cx + radius);
        } else {
            let hgt = range(g.rng_mut(), 5, 12);
            let wid = range(g.rng_mut(), 5, 12);
            top = range(g.rng_mut(), 0, n - hgt);
            left = range(g.rng_mut(), 0, n - wid);
            (bottom, right) = (top + hgt - 1, left + wid - 1);
        }
        let base = CLASS_COLORS[class - 1];
        for r in top..=bottom {
            for c in left..=right {
                if disc {
                    let (cy, cx) = ((top + bottom) as f64 / 2.0, (left + right) as f64 / 2.0);
                    let rad = (bottom - top) as f64 / 2.0;
                    let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                    if dy * dy + dx * dx > rad * rad {
                        continue;
                    }
                }
                for (ch, b) in base.iter().enumerate() {
                    image.set(r, c, ch, (b + 0.05 * g.sample()).clamp(0.0, 1.0));
                }
                labels.set(r, c, class as u8);
            }
        }
    }
    SyntheticSample { image, labels }
}

/// Samples `0..n` of dataset `seed`.
pub fn gen_dataset(seed: u64, n: usize) -> Result<Vec<SyntheticSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    Ok((0..n as u64).map(|i| gen_sample(seed, i)).collect())
}

/// Writes `NNNNN.plt` (image) and `NNNNN.label.ppm` (labels) per sample.
pub fn save_dataset(dir: impl AsRef<Path>, samples: &[SyntheticSample]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        s.image.save(dir.join(format!("{i:05}.plt")))?;
        s.labels.save_ppm(dir.join(format!("{i:05}.label.ppm")))?;
    }
    Ok(())
}

/// Reads a directory written by [`save_dataset`], in index order.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<SyntheticSample>> {
    let dir = dir.as_ref();
    let mut images: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "plt"))
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(Error::Format(format!("no .plt images in {}", dir.display())));
    }
    images
        .into_iter()
        .map(|img_path| {
            let stem = img_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            let image = ImageTensor::load(&img_path)?;
            let labels = SegmentationMap::load_ppm(dir.join(format!("{stem}.label.ppm")))?;
            if (labels.height(), labels.width()) != (image.height(), image.width()) {
                return Err(Error::Format(format!("label map for {stem} does not match its image")));
            }
            Ok(SyntheticSample { image, labels })
        })
        .collect()
}
