//! Image tensors and non-overlapping patch flattening.
//!
//! Layout everywhere is row-major over `(row, col, channel)` with channel
//! fastest. Patches are enumerated in raster order over the block grid and
//! each patch is flattened in the same `(row, col, channel)` order, so a
//! patch row has `p²c` entries. Model and image encryption both rely on
//! this order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::{expect_eof, read_f64s, read_magic, read_u32, write_f64s, write_u32};
use crate::linalg::Matrix;

pub const TENSOR_MAGIC: &[u8; 4] = b"PLT1";

/// `h × w × c` real image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("image contains non-finite values".into()));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    /// 8-bit samples mapped to `[0, 1]` by `v / 255`.
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, channels, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.index(row, col, ch);
        self.data[i] = v;
    }

    /// Writes the PLT1 tensor format.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        for d in [self.height, self.width, self.channels] {
            write_u32(w, u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?)?;
        }
        write_f64s(w, &self.data)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, TENSOR_MAGIC)?;
        let h = read_u32(r, "height")? as usize;
        let w = read_u32(r, "width")? as usize;
        let c = read_u32(r, "channels")? as usize;
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
        let data = read_f64s(r, n, "tensor data")?;
        expect_eof(r, "tensor")?;
        Self::new(h, w, c, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.data.len());
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// 8-bit binary PPM (P6). Requires 3 channels; values are clamped to
    /// `[0, 1]` and rounded to the nearest of 256 levels.
    pub fn write_ppm<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.channels != 3 {
            return Err(Error::Geometry(format!("PPM needs 3 channels, image has {}", self.channels)));
        }
        let bytes: Vec<u8> = self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        write_ppm_bytes(w, self.width, self.height, &bytes)
    }

    pub fn read_ppm<R: Read>(r: &mut R) -> Result<Self> {
        let (w, h, bytes) = read_ppm_bytes(r)?;
        Self::from_u8(h, w, 3, &bytes)
    }

    /// Loads PLT1 or P6 PPM, chosen by the leading magic bytes.
    pub fn load_any(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(b"P6") {
            Self::read_ppm(&mut bytes.as_slice())
        } else {
            Self::read_from(&mut bytes.as_slice())
        }
    }
}

pub(crate) fn write_ppm_bytes<W: Write>(w: &mut W, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(rgb)?;
    Ok(())
}

/// Returns `(width, height, rgb bytes)`.
pub(crate) fn read_ppm_bytes<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<u8>)> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    if !all.starts_with(b"P6") {
        return Err(Error::bad_magic(b"P6\0\0", &all[..all.len().min(2)]));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match all.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < all.len() && all[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < all.len() && all[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&all[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PPM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit PPM (maxval 255) supported, got {maxval}")));
    }
    match all.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("malformed PPM header".into())),
    }
    let need = width * height * 3;
    let body = &all[pos..];
    if body.len() != need {
        return Err(Error::Format(format!("PPM body has {} bytes, expected {need}", body.len())));
    }
    Ok((width, height, body.to_vec()))
}

/// Flattened non-overlapping patches of one image, one patch per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    patch_size: usize,
    channels: usize,
    grid_rows: usize,
    grid_cols: usize,
    data: Matrix,
}

impl PatchMatrix {
    /// Validates that `data` is `(grid_rows·grid_cols) × (p²c)`.
    pub fn new(patch_size: usize, channels: usize, grid: (usize, usize), data: Matrix) -> Result<Self> {
        let (grid_rows, grid_cols) = grid;
        let expected = (grid_rows * grid_cols, patch_size * patch_size * channels);
        if patch_size == 0 || channels == 0 || data.shape() != expected {
            return Err(Error::Geometry(format!(
                "patch data is {}x{}, grid {grid_rows}x{grid_cols} with p={patch_size}, c={channels} needs {}x{}",
                data.rows(),
                data.cols(),
                expected.0,
                expected.1
            )));
        }
        Ok(Self { patch_size, channels, grid_rows, grid_cols, data })
    }

    pub fn n_patches(&self) -> usize {
        self.data.rows()
    }

    pub fn patch_dim(&self) -> usize {
        self.data.cols()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    /// Same geometry, new patch rows (e.g. after multiplying by a key matrix).
    pub fn with_matrix(&self, data: Matrix) -> Result<Self> {
        Self::new(self.patch_size, self.channels, self.grid(), data)
    }
}

pub fn check_divisible(height: usize, width: usize, p: usize) -> Result<()> {
    if p == 0 || height % p != 0 || width % p != 0 {
        return Err(Error::Geometry(format!(
            "image {height}x{width} is not divisible into {p}x{p} patches"
        )));
    }
    Ok(())
}

/// Splits `x` into `hw/p²` flattened `p × p × c` patches.
pub fn to_patches(x: &ImageTensor, p: usize) -> Result<PatchMatrix> {
    check_divisible(x.height, x.width, p)?;
    let c = x.channels;
    let (gr, gc) = (x.height / p, x.width / p);
    let dim = p * p * c;
    let row_len = p * c;
    let mut out = Vec::with_capacity(gr * gc * dim);
    for br in 0..gr {
        for bc in 0..gc {
            for r in 0..p {
                let start = x.index(br * p + r, bc * p, 0);
                out.extend_from_slice(&x.data[start..start + row_len]);
            }
        }
    }
    PatchMatrix::new(p, c, (gr, gc), Matrix::new(gr * gc, dim, out)?)
}

/// Reassembles the image; exact inverse of [`to_patches`].
pub fn from_patches(pm: &PatchMatrix) -> Result<ImageTensor> {
    let p = pm.patch_size;
    let c = pm.channels;
    let (gr, gc) = pm.grid();
    if pm.data.shape() != (gr * gc, p * p * c) {
        return Err(Error::Geometry("patch matrix inconsistent with its grid".into()));
    }
    let mut img = ImageTensor::zeros(gr * p, gc * p, c);
    let row_len = p * c;
    for br in 0..gr {
        for bc in 0..gc {
            let patch = pm.data.row(br * gc + bc);
            for r in 0..p {
                let start = img.index(br * p + r, bc * p, 0);
                img.data[start..start + row_len].copy_from_slice(&patch[r * row_len..(r + 1) * row_len]);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_raster_order() {
        let x = ImageTensor::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pm = to_patches(&x, 2).unwrap();
        assert_eq!(pm.n_patches(), 1);
        assert_eq!(pm.matrix().row(0), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn from_single_patch() {
        let pm = PatchMatrix::new(2, 1, (1, 1), Matrix::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let x = from_patches(&pm).unwrap();
        assert_eq!(x.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((x.height(), x.width(), x.channels()), (2, 2, 1));
    }

    #[test]
    fn unit_patches_are_pixels() {
        let x = ImageTensor::new(2, 3, 2, (0..12).map(f64::from).collect()).unwrap();
        let pm = to_patches(&x, 1).unwrap();
        assert_eq!(pm.n_patches(), 6);
        assert_eq!(pm.matrix().row(4), &[8.0, 9.0]);
    }

    #[test]
    fn second_block_row_order() {
        // 4x4x1, p = 2: block (0,1) holds columns 2..4 of rows 0..2
        let x = ImageTensor::new(4, 4, 1, (0..16).map(f64::from).collect()).unwrap();
        let pm = to_patches(&x, 2).unwrap();
        assert_eq!(pm.matrix().row(1), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(pm.matrix().row(2), &[8.0, 9.0, 12.0, 13.0]);
    }

    #[test]
    fn non_divisible_is_geometry_error() {
        let x = ImageTensor::zeros(5, 4, 3);
        let err = to_patches(&x, 2).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
        assert!(err.to_string().contains("5x4"), "{err}");
    }

    #[test]
    fn inconsistent_grid_rejected() {
        let m = Matrix::zeros(3, 4);
        assert!(matches!(PatchMatrix::new(2, 1, (1, 2), m), Err(Error::Geometry(_))));
    }

    #[test]
    fn ppm_rejects_other_maxval() {
        let data = b"P6\n1 1\n65535\n\0\0\0\0\0\0".to_vec();
        assert!(ImageTensor::read_ppm(&mut data.as_slice()).is_err());
    }

    #[test]
    fn ppm_header_comments() {
        let mut data = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        data.extend([0, 51, 255, 255, 0, 0]);
        let x = ImageTensor::read_ppm(&mut data.as_slice()).unwrap();
        assert_eq!((x.height(), x.width()), (1, 2));
        assert_eq!(x.get(0, 0, 1), 0.2);
    }
}
