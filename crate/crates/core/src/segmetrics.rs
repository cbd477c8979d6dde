//! Per-class IoU and mean IoU from streaming confusion counts.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorpatch::{read_ppm_bytes, write_ppm_bytes};

/// Ground-truth pixels with this label are excluded from every count.
pub const IGNORE_LABEL: u8 = 255;

/// `h × w` grid of class labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl SegmentationMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self { height, width, labels: vec![label; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: u8) {
        self.labels[row * self.width + col] = label;
    }

    /// Every label is `< num_classes` or [`IGNORE_LABEL`].
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l != IGNORE_LABEL && l as usize >= num_classes) {
            Some(&label) => Err(Error::Label { label, num_classes }),
            None => Ok(()),
        }
    }

    /// Indexed PPM: each pixel stores its label in all three channels.
    pub fn write_ppm<W: Write>(&self, w: &mut W) -> Result<()> {
        let rgb: Vec<u8> = self.labels.iter().flat_map(|&l| [l, l, l]).collect();
        write_ppm_bytes(w, self.width, self.height, &rgb)
    }

    pub fn read_ppm<R: Read>(r: &mut R) -> Result<Self> {
        let (w, h, rgb) = read_ppm_bytes(r)?;
        let labels = rgb
            .chunks_exact(3)
            .map(|px| {
                if px[0] == px[1] && px[1] == px[2] {
                    Ok(px[0])
                } else {
                    Err(Error::Format(format!("label PPM pixel {px:?} is not gray")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(h, w, labels)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_ppm(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_ppm(&mut bytes.as_slice())
    }
}

/// Per-class true positive, false positive and false negative counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    num_classes: usize,
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, tp: vec![0; num_classes], fp: vec![0; num_classes], fn_: vec![0; num_classes] }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Adds one prediction / ground-truth pair.
    ///
    /// Pixels whose ground truth is [`IGNORE_LABEL`] are skipped. A predicted
    /// [`IGNORE_LABEL`] on a labelled pixel counts only as a miss for the
    /// true class. Nothing is counted if either map is invalid.
    pub fn accumulate(&mut self, pred: &SegmentationMap, gt: &SegmentationMap) -> Result<()> {
        if (pred.height, pred.width) != (gt.height, gt.width) {
            return Err(Error::Shape(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.height, pred.width, gt.height, gt.width
            )));
        }
        pred.validate(self.num_classes)?;
        gt.validate(self.num_classes)?;
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            if g == IGNORE_LABEL {
                continue;
            }
            if p == g {
                self.tp[g as usize] += 1;
            } else {
                if p != IGNORE_LABEL {
                    self.fp[p as usize] += 1;
                }
                self.fn_[g as usize] += 1;
            }
        }
        Ok(())
    }

    /// Elementwise sum, for reducing per-image counts computed in parallel.
    pub fn merge(&mut self, other: &ConfusionCounts) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Shape(format!(
                "cannot merge counts for {} and {} classes",
                self.num_classes, other.num_classes
            )));
        }
        for k in 0..self.num_classes {
            self.tp[k] += other.tp[k];
            self.fp[k] += other.fp[k];
            self.fn_[k] += other.fn_[k];
        }
        Ok(())
    }

    /// `IoU_k = tp / (tp + fp + fn)`; classes with an empty union are
    /// reported as `None` and left out of the mean.
    pub fn miou(&self) -> MiouReport {
        let per_class: Vec<Option<f64>> = (0..self.num_classes)
            .map(|k| {
                let union = self.tp[k] + self.fp[k] + self.fn_[k];
                (union > 0).then(|| self.tp[k] as f64 / union as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let miou = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        MiouReport { per_class, miou }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    pub per_class: Vec<Option<f64>>,
    /// `None` when no class has any pixel in prediction or ground truth.
    pub miou: Option<f64>,
}

impl MiouReport {
    /// Mean IoU, or 0 when undefined.
    pub fn miou_or_zero(&self) -> f64 {
        self.miou.unwrap_or(0.0)
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("class     IoU\n");
        for (k, iou) in self.per_class.iter().enumerate() {
            match iou {
                Some(v) => writeln!(s, "{k:>5}  {v:.4}").unwrap(),
                None => writeln!(s, "{k:>5}     -").unwrap(),
            }
        }
        match self.miou {
            Some(m) => writeln!(s, " mIoU  {m:.4}").unwrap(),
            None => writeln!(s, " mIoU     -").unwrap(),
        }
        s
    }

    /// `key=value` lines: `iou.<class>=<value|none>` then `miou=<value|none>`.
    pub fn to_key_values(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v}"));
        let mut s = String::new();
        for (k, iou) in self.per_class.iter().enumerate() {
            writeln!(s, "iou.{k}={}", fmt(*iou)).unwrap();
        }
        writeln!(s, "miou={}", fmt(self.miou)).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(labels: &[u8]) -> SegmentationMap {
        SegmentationMap::new(1, labels.len(), labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let mut cc = ConfusionCounts::new(3);
        let m = SegmentationMap::filled(2, 5, 0);
        cc.accumulate(&m, &m).unwrap();
        assert_eq!(cc.tp, vec![10, 0, 0]);
        assert_eq!(cc.fp, vec![0; 3]);
        assert_eq!(cc.fn_, vec![0; 3]);
        assert_eq!(cc.miou().miou, Some(1.0));
    }

    #[test]
    fn ignored_ground_truth_counts_nothing() {
        let mut cc = ConfusionCounts::new(3);
        cc.accumulate(&map(&[0, 1, 2, 1]), &SegmentationMap::filled(1, 4, IGNORE_LABEL)).unwrap();
        assert_eq!(cc, ConfusionCounts::new(3));
        assert_eq!(cc.miou().miou, None);
    }

    #[test]
    fn four_pixel_case() {
        let mut cc = ConfusionCounts::new(3);
        cc.accumulate(&map(&[0, 1, 1, 2]), &map(&[0, 1, 2, 2])).unwrap();
        assert_eq!(cc.tp, vec![1, 1, 1]);
        assert_eq!(cc.fp, vec![0, 1, 0]);
        assert_eq!(cc.fn_, vec![0, 0, 1]);
        let r = cc.miou();
        assert_eq!(r.per_class, vec![Some(1.0), Some(0.5), Some(0.5)]);
        assert!((r.miou.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_excluded_from_mean() {
        let mut cc = ConfusionCounts::new(4);
        cc.accumulate(&map(&[0, 1]), &map(&[0, 1])).unwrap();
        let r = cc.miou();
        assert_eq!(r.per_class[3], None);
        assert_eq!(r.miou, Some(1.0));
    }

    #[test]
    fn errors_leave_counts_untouched() {
        let mut cc = ConfusionCounts::new(3);
        assert!(matches!(cc.accumulate(&map(&[0, 3]), &map(&[0, 0])), Err(Error::Label { label: 3, .. })));
        assert!(matches!(cc.accumulate(&map(&[0]), &map(&[0, 0])), Err(Error::Shape(_))));
        assert_eq!(cc, ConfusionCounts::new(3));
    }

    #[test]
    fn ignore_prediction_is_a_miss() {
        let mut cc = ConfusionCounts::new(2);
        cc.accumulate(&map(&[IGNORE_LABEL]), &map(&[1])).unwrap();
        assert_eq!((cc.tp[1], cc.fn_[1], cc.fp), (0, 1, vec![0, 0]));
    }

    #[test]
    fn reports() {
        let mut cc = ConfusionCounts::new(3);
        cc.accumulate(&map(&[0, 1, 1, 2]), &map(&[0, 1, 2, 2])).unwrap();
        let r = cc.miou();
        assert!(r.to_table().contains(" mIoU  0.6667"));
        let kv = r.to_key_values();
        assert!(kv.contains("iou.1=0.5\n"), "{kv}");
        assert!(kv.starts_with("iou.0=1\n"));
    }
}
