//! Secret-key access control for patch-embedding models.
//!
//! A model owner left-multiplies the patch-embedding matrix `E` of a trained
//! model by a key-derived invertible matrix `E_enc`. An authorized user, who
//! can regenerate `E_enc` from the same key, right-multiplies every flattened
//! image patch by `E_enc⁻¹`. The two factors cancel inside the embedding:
//!
//! ```text
//! x̂ · E' = (x · E_enc⁻¹) · (E_enc · E) = x · E
//! ```
//!
//! so the protected model behaves exactly like the original for key holders,
//! and produces garbage for anyone else.
//!
//! Modules:
//!
//! - [`linalg`]: dense matrices, LU inversion, condition estimates.
//! - [`keygen`]: secret keys and deterministic expansion into `E_enc`.
//! - [`tensorpatch`]: image tensors and patch flattening.
//! - [`protect`]: model and image encryption, equivalence checks.
//! - [`segmetrics`]: confusion counts and mean IoU.
//! - [`toymodel`]: a small trainable segmentation model and synthetic data.
//! - [`experiments`]: baseline / correct-key / wrong-key evaluations.
//! - [`cli`]: the `patchlock` command-line front end.

pub mod cli;
pub mod error;
pub mod experiments;
mod io_util;
pub mod keygen;
pub mod linalg;
pub mod protect;
pub mod rng;
pub mod segmetrics;
pub mod tensorpatch;
pub mod toymodel;

pub use error::{Error, Result};
pub use keygen::{KeyMaterial, SecretKey};
pub use linalg::Matrix;
pub use protect::{EmbeddedPatches, EquivalenceReport, PatchEmbedWeights};
pub use segmetrics::{ConfusionCounts, MiouReport, SegmentationMap, IGNORE_LABEL};
pub use tensorpatch::{ImageTensor, PatchMatrix};
pub use toymodel::{SyntheticSample, ToyModel, TrainConfig};
