//! Model-side and image-side encryption of the patch embedding.
//!
//! The owner replaces the embedding `E` with `E' = E_enc · E`
//! ([`encrypt_model`]); position embeddings stay in plaintext. A key holder
//! multiplies each flattened patch `b` of a test image by `E_enc⁻¹`
//! ([`encrypt_image`]). Then `(b · E_enc⁻¹) · E' = b · E`, so the first layer
//! output, and everything downstream, is unchanged.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::io_util::{read_exact_or_format, read_f64s, read_magic, read_u32, write_f64s, write_u32};
use crate::keygen::KeyMaterial;
use crate::linalg::{mat_mul, Matrix};
use crate::rng::Gaussian;
use crate::tensorpatch::{from_patches, to_patches, ImageTensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PLW1";

/// Default tolerance for [`verify_equivalence`].
pub const DEFAULT_EQUIVALENCE_TOL: f64 = 1e-6;

/// The protected asset: patch embedding `E` (`p²c × D`) and position
/// embeddings `E_pos` (`N × D`).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbedWeights {
    pub embedding: Matrix,
    pub position: Matrix,
    pub patch_size: usize,
    pub channels: usize,
    /// Metadata only: set once `embedding` holds `E_enc · E`.
    pub encrypted: bool,
}

impl PatchEmbedWeights {
    pub fn new(embedding: Matrix, position: Matrix, patch_size: usize, channels: usize) -> Result<Self> {
        let w = Self { embedding, position, patch_size, channels, encrypted: false };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let side = self.patch_size * self.patch_size * self.channels;
        if self.patch_size == 0 || self.channels == 0 {
            return Err(Error::Shape("patch_size and channels must be >= 1".into()));
        }
        if self.embedding.rows() != side {
            return Err(Error::Shape(format!(
                "embedding has {} rows, expected p²c = {side}",
                self.embedding.rows()
            )));
        }
        if self.position.cols() != self.embedding.cols() {
            return Err(Error::Shape(format!(
                "position embedding width {} != embed dim {}",
                self.position.cols(),
                self.embedding.cols()
            )));
        }
        Ok(())
    }

    /// Gaussian weights with standard deviation `std`.
    pub fn random<R: RngCore>(
        patch_size: usize,
        channels: usize,
        embed_dim: usize,
        n_patches: usize,
        std: f64,
        g: &mut Gaussian<R>,
    ) -> Result<Self> {
        let side = patch_size * patch_size * channels;
        let mut e = vec![0.0; side * embed_dim];
        g.fill(&mut e);
        let mut pos = vec![0.0; n_patches * embed_dim];
        g.fill(&mut pos);
        Self::new(
            Matrix::new(side, embed_dim, e.into_iter().map(|v| v * std).collect())?,
            Matrix::new(n_patches, embed_dim, pos.into_iter().map(|v| v * std).collect())?,
            patch_size,
            channels,
        )
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn n_patches(&self) -> usize {
        self.position.rows()
    }

    pub fn patch_dim(&self) -> usize {
        self.embedding.rows()
    }

    /// Writes one PLW1 block.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        for d in [self.patch_size, self.channels, self.embed_dim(), self.n_patches()] {
            write_u32(w, u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?)?;
        }
        w.write_all(&[u8::from(self.encrypted)])?;
        write_f64s(w, self.embedding.as_slice())?;
        write_f64s(w, self.position.as_slice())
    }

    /// Reads one PLW1 block, leaving any following bytes unread.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_magic(r, WEIGHTS_MAGIC)?;
        let p = read_u32(r, "patch size")? as usize;
        let c = read_u32(r, "channels")? as usize;
        let d = read_u32(r, "embed dim")? as usize;
        let n = read_u32(r, "patch count")? as usize;
        let mut flag = [0u8; 1];
        read_exact_or_format(r, &mut flag, "encrypted flag")?;
        let encrypted = match flag[0] {
            0 => false,
            1 => true,
            f => return Err(Error::Format(format!("encrypted flag must be 0 or 1, got {f}"))),
        };
        let side = p * p * c;
        let e = read_f64s(r, side * d, "embedding")?;
        let pos = read_f64s(r, n * d, "position embedding")?;
        let mut w = Self::new(Matrix::new(side, d, e)?, Matrix::new(n, d, pos)?, p, c)
            .map_err(|e| Error::Format(e.to_string()))?;
        w.encrypted = encrypted;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    /// Loads the leading PLW1 block of a file (a checkpoint's head block, if
    /// any, is ignored).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

/// First-layer output `z₀`, one row per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPatches {
    pub z0: Matrix,
}

fn check_image_geometry(x: &ImageTensor, w: &PatchEmbedWeights) -> Result<()> {
    let p = w.patch_size;
    if x.channels() != w.channels {
        return Err(Error::Shape(format!("image has {} channels, weights expect {}", x.channels(), w.channels)));
    }
    if x.height() % p != 0 || x.width() % p != 0 {
        return Err(Error::Shape(format!("image {}x{} not divisible by patch size {p}", x.height(), x.width())));
    }
    let n = x.height() * x.width() / (p * p);
    if n != w.n_patches() {
        return Err(Error::Shape(format!(
            "image yields {n} patches, position embedding has {}",
            w.n_patches()
        )));
    }
    Ok(())
}

/// `z₀ⁱ = xᵢ · E + E_posⁱ` for every flattened patch `xᵢ`.
pub fn patch_embed(x: &ImageTensor, w: &PatchEmbedWeights) -> Result<EmbeddedPatches> {
    check_image_geometry(x, w)?;
    let patches = to_patches(x, w.patch_size)?;
    let z0 = mat_mul(patches.matrix(), &w.embedding)?.add(&w.position)?;
    Ok(EmbeddedPatches { z0 })
}

fn check_key_fits(w: &PatchEmbedWeights, km: &KeyMaterial) -> Result<()> {
    if km.side() != w.patch_dim() || km.patch_size != w.patch_size || km.channels != w.channels {
        return Err(Error::Shape(format!(
            "key is {0}x{0} for p={1}, c={2}; weights need p={3}, c={4} (side {5})",
            km.side(),
            km.patch_size,
            km.channels,
            w.patch_size,
            w.channels,
            w.patch_dim()
        )));
    }
    Ok(())
}

/// Model side: `E' = E_enc · E`. Position embeddings are left untouched.
pub fn encrypt_model(w: &PatchEmbedWeights, km: &KeyMaterial) -> Result<PatchEmbedWeights> {
    if w.encrypted {
        return Err(Error::State("weights are already encrypted".into()));
    }
    check_key_fits(w, km)?;
    Ok(PatchEmbedWeights {
        embedding: mat_mul(&km.enc, &w.embedding)?,
        position: w.position.clone(),
        patch_size: w.patch_size,
        channels: w.channels,
        encrypted: true,
    })
}

/// Undoes [`encrypt_model`]: `E = E_enc⁻¹ · E'`. Used to move a model to a
/// new key without retraining.
pub fn decrypt_model(w: &PatchEmbedWeights, km: &KeyMaterial) -> Result<PatchEmbedWeights> {
    if !w.encrypted {
        return Err(Error::State("weights are not encrypted".into()));
    }
    check_key_fits(w, km)?;
    Ok(PatchEmbedWeights {
        embedding: mat_mul(&km.inv, &w.embedding)?,
        position: w.position.clone(),
        patch_size: w.patch_size,
        channels: w.channels,
        encrypted: false,
    })
}

/// Decrypts with `old` and re-encrypts with `new`.
pub fn rekey_model(w: &PatchEmbedWeights, old: &KeyMaterial, new: &KeyMaterial) -> Result<PatchEmbedWeights> {
    encrypt_model(&decrypt_model(w, old)?, new)
}

fn transform_patches(x: &ImageTensor, km: &KeyMaterial, m: &Matrix) -> Result<ImageTensor> {
    if x.channels() != km.channels {
        return Err(Error::Geometry(format!("image has {} channels, key expects {}", x.channels(), km.channels)));
    }
    let pm = to_patches(x, km.patch_size)?;
    let out = mat_mul(pm.matrix(), m)?;
    from_patches(&pm.with_matrix(out)?)
}

/// Image side: every flattened patch `b` becomes `b · E_enc⁻¹`.
pub fn encrypt_image(x: &ImageTensor, km: &KeyMaterial) -> Result<ImageTensor> {
    transform_patches(x, km, &km.inv)
}

/// Inverse of [`encrypt_image`]: multiplies patches by `E_enc`.
pub fn decrypt_image(x: &ImageTensor, km: &KeyMaterial) -> Result<ImageTensor> {
    transform_patches(x, km, &km.enc)
}

/// Outcome of comparing the plain and encrypted embedding routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub max_abs_diff: f64,
    pub mean_abs_diff: f64,
    pub tol: f64,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn between(reference: &EmbeddedPatches, candidate: &EmbeddedPatches, tol: f64) -> Result<Self> {
        let diff = candidate.z0.sub(&reference.z0)?;
        let n = diff.as_slice().len().max(1) as f64;
        let max_abs_diff = diff.as_slice().iter().fold(0.0, |m, v| f64::max(m, v.abs()));
        let mean_abs_diff = diff.as_slice().iter().map(|v| v.abs()).sum::<f64>() / n;
        Ok(Self { max_abs_diff, mean_abs_diff, tol, pass: max_abs_diff <= tol })
    }
}

impl std::fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}, max diff {:.3e} (tol {:.1e}), mean diff {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_abs_diff,
            self.tol,
            self.mean_abs_diff
        )
    }
}

/// Embeds `x` with the plain weights and `encrypt_image(x)` with
/// `encrypt_model(w)`, and compares.
pub fn verify_equivalence(
    x: &ImageTensor,
    plain_w: &PatchEmbedWeights,
    km: &KeyMaterial,
    tol: f64,
) -> Result<EquivalenceReport> {
    verify_equivalence_with(x, plain_w, km, km, tol)
}

/// Like [`verify_equivalence`] but the image and the model may use different
/// keys; with mismatched keys the check is expected to fail.
pub fn verify_equivalence_with(
    x: &ImageTensor,
    plain_w: &PatchEmbedWeights,
    image_key: &KeyMaterial,
    model_key: &KeyMaterial,
    tol: f64,
) -> Result<EquivalenceReport> {
    let reference = patch_embed(x, plain_w)?;
    let enc_w = encrypt_model(plain_w, model_key)?;
    let enc_x = encrypt_image(x, image_key)?;
    EquivalenceReport::between(&reference, &patch_embed(&enc_x, &enc_w)?, tol)
}
