//! Secret keys and their expansion into the encryption matrix.
//!
//! A [`SecretKey`] is 32 opaque bytes. [`derive_matrices`] turns it into a
//! `(p²c)×(p²c)` matrix of i.i.d. standard-normal entries plus its inverse.
//!
//! Derivation, attempt `a = 0, 1, …, 7`:
//!
//! ```text
//! seed_a = SHA-256("patchlock/keygen/v1" ‖ key ‖ u32le(p) ‖ u32le(c) ‖ u32le(a))
//! stream = ChaCha20(seed_a)        (rand_chacha::ChaCha20Rng::from_seed)
//! entries, row-major = Box–Muller normals from the stream (see `rng`)
//! ```
//!
//! An attempt is rejected when the LU factorization reports a singular pivot
//! or the 1-norm condition estimate exceeds [`MAX_CONDITION`].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io_util::{expect_eof, read_exact_or_format, read_magic};
use crate::linalg::{Lu, Matrix};
use crate::rng::Gaussian;

pub const KEY_MAGIC: &[u8; 4] = b"PLK1";
pub const KEY_LEN: usize = 32;
pub const MAX_CONDITION: f64 = 1e6;
pub const MAX_ATTEMPTS: u32 = 8;
/// Upper bound on the matrix side `p²c`.
pub const MAX_SIDE: usize = 4096;
/// Every derived key satisfies `‖enc·inv − I‖_∞` at most this.
pub const INVERSE_RESIDUAL_TOL: f64 = 1e-8;

const DOMAIN: &[u8] = b"patchlock/keygen/v1";

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey([u8; KEY_LEN]);

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print key bytes
        write!(f, "SecretKey(..)")
    }
}

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses exactly 64 hex characters.
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != 2 * KEY_LEN {
            return Err(Error::Format(format!("hex key must be 64 characters, got {}", s.len())));
        }
        let mut out = [0u8; KEY_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|e| Error::Format(format!("invalid hex key: {e}")))?;
        Ok(Self(out))
    }

    /// Deterministic key from a 64-bit seed, for reproducible pipelines.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = [0u8; KEY_LEN];
        rng.fill_bytes(&mut out);
        Self(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(KEY_MAGIC)?;
        w.write_all(&self.0)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, KEY_MAGIC)?;
        let mut out = [0u8; KEY_LEN];
        read_exact_or_format(r, &mut out, "key bytes")?;
        expect_eof(r, "key")?;
        Ok(Self(out))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(4 + KEY_LEN);
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

/// Fresh key from the operating system's entropy source.
pub fn generate_key() -> Result<SecretKey> {
    let mut out = [0u8; KEY_LEN];
    OsRng.try_fill_bytes(&mut out).map_err(|e| Error::Environment(e.to_string()))?;
    Ok(SecretKey(out))
}

/// The encryption matrix derived from a key, with its inverse.
#[derive(Debug, Clone)]
pub struct KeyMaterial {
    /// Model-side matrix `E_enc`; left-multiplies the patch embedding.
    pub enc: Matrix,
    /// Image-side matrix `E_enc⁻¹`; right-multiplies flattened patches.
    pub inv: Matrix,
    pub patch_size: usize,
    pub channels: usize,
    /// 1-norm condition estimate of `enc`.
    pub kappa: f64,
}

impl KeyMaterial {
    pub fn side(&self) -> usize {
        self.enc.rows()
    }

    /// Wraps an explicit matrix (e.g. identity or a scaled identity in tests).
    pub fn from_matrix(enc: Matrix, patch_size: usize, channels: usize) -> Result<Self> {
        let side = check_geometry(patch_size, channels)?;
        if enc.shape() != (side, side) {
            return Err(Error::Shape(format!(
                "key matrix is {}x{}, expected {side}x{side} for p={patch_size}, c={channels}",
                enc.rows(),
                enc.cols()
            )));
        }
        let lu = Lu::factor(&enc)?;
        let inv = lu.inverse()?;
        let kappa = enc.norm_one() * lu.inverse_norm_one_estimate();
        Ok(Self { enc, inv, patch_size, channels, kappa })
    }

    /// `‖enc·inv − I‖_∞`.
    pub fn inverse_residual(&self) -> f64 {
        crate::linalg::mat_mul(&self.enc, &self.inv)
            .and_then(|p| p.identity_residual())
            .expect("square factors of equal side")
    }
}

fn check_geometry(patch_size: usize, channels: usize) -> Result<usize> {
    if patch_size == 0 || channels == 0 {
        return Err(Error::Geometry(format!("patch_size and channels must be >= 1 (p={patch_size}, c={channels})")));
    }
    let side = patch_size
        .checked_mul(patch_size)
        .and_then(|v| v.checked_mul(channels))
        .filter(|&s| s <= MAX_SIDE)
        .ok_or_else(|| Error::Geometry(format!("p²c exceeds {MAX_SIDE} (p={patch_size}, c={channels})")))?;
    Ok(side)
}

fn attempt_seed(key: &SecretKey, patch_size: usize, channels: usize, attempt: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(key.0);
    h.update((patch_size as u32).to_le_bytes());
    h.update((channels as u32).to_le_bytes());
    h.update(attempt.to_le_bytes());
    h.finalize().into()
}

/// Raw Gaussian draw for one attempt, before any conditioning check.
pub fn draw_matrix(key: &SecretKey, patch_size: usize, channels: usize, attempt: u32) -> Result<Matrix> {
    let side = check_geometry(patch_size, channels)?;
    let mut g = Gaussian::new(ChaCha20Rng::from_seed(attempt_seed(key, patch_size, channels, attempt)));
    let mut data = vec![0.0; side * side];
    g.fill(&mut data);
    Matrix::new(side, side, data)
}

/// Deterministically expands `key` into `E_enc` and `E_enc⁻¹` for patches of
/// `patch_size × patch_size × channels`.
pub fn derive_matrices(key: &SecretKey, patch_size: usize, channels: usize) -> Result<KeyMaterial> {
    check_geometry(patch_size, channels)?;
    let mut last_reason = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let enc = draw_matrix(key, patch_size, channels, attempt)?;
        let lu = match Lu::factor(&enc) {
            Ok(lu) => lu,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        let kappa = enc.norm_one() * lu.inverse_norm_one_estimate();
        if !(kappa <= MAX_CONDITION) {
            last_reason = format!("condition estimate {kappa:.3e} > {MAX_CONDITION:e}");
            continue;
        }
        let inv = match lu.inverse() {
            Ok(inv) => inv,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        let km = KeyMaterial { enc, inv, patch_size, channels, kappa };
        let residual = km.inverse_residual();
        if residual > INVERSE_RESIDUAL_TOL {
            last_reason = format!("inverse residual {residual:.3e}");
            continue;
        }
        return Ok(km);
    }
    Err(Error::Generation(format!("{MAX_ATTEMPTS} attempts exhausted; last: {last_reason}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_keys_are_distinct_and_usable() {
        let a = generate_key().unwrap();
        let b = generate_key().unwrap();
        assert_ne!(a, b);
        assert_eq!(a.as_bytes().len(), 32);
        derive_matrices(&a, 2, 3).unwrap();
    }

    #[test]
    fn hex_round_trip_and_errors() {
        let k = SecretKey::from_seed(9);
        assert_eq!(SecretKey::from_hex(&k.to_hex()).unwrap(), k);
        assert!(SecretKey::from_hex("abcd").is_err());
        assert!(SecretKey::from_hex(&"zz".repeat(32)).is_err());
    }

    #[test]
    fn key_file_rejects_wrong_magic() {
        let mut buf = b"PLW1".to_vec();
        buf.extend([0u8; 32]);
        let err = SecretKey::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("PLK1"), "{err}");
    }

    #[test]
    fn key_file_rejects_truncation() {
        let mut buf = b"PLK1".to_vec();
        buf.extend([0u8; 31]);
        assert!(matches!(SecretKey::read_from(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn zero_geometry_rejected() {
        let k = SecretKey::from_seed(1);
        assert!(matches!(derive_matrices(&k, 0, 3), Err(Error::Geometry(_))));
        assert!(matches!(derive_matrices(&k, 4, 0), Err(Error::Geometry(_))));
        assert!(matches!(derive_matrices(&k, 64, 2), Err(Error::Geometry(_))));
    }

    #[test]
    fn geometry_is_part_of_the_derivation() {
        let k = SecretKey::from_seed(5);
        let a = draw_matrix(&k, 2, 3, 0).unwrap();
        let b = draw_matrix(&k, 2, 3, 1).unwrap();
        assert_ne!(a, b);
        // same side 12 but different (p, c)
        let c = derive_matrices(&k, 1, 12).unwrap();
        assert_ne!(a, c.enc);
    }

    #[test]
    fn from_matrix_checks_side() {
        assert!(KeyMaterial::from_matrix(Matrix::identity(5), 2, 1).is_err());
        let km = KeyMaterial::from_matrix(Matrix::identity(4), 2, 1).unwrap();
        assert_eq!(km.kappa, 1.0);
    }
}
