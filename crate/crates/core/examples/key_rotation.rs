//! Move a distributed model from one key to another without retraining.
//!
//! ```bash
//! cargo run -p patchlock --example key_rotation
//! ```

use patchlock::keygen::derive_matrices;
use patchlock::protect::{encrypt_image, encrypt_model, patch_embed, rekey_model, EquivalenceReport};
use patchlock::toymodel::{gen_sample, ModelConfig};
use patchlock::{SecretKey, ToyModel};

fn main() -> patchlock::Result<()> {
    let w = ToyModel::init(&ModelConfig::default(), 0)?.embed;
    let x = gen_sample(9, 0).image;
    let reference = patch_embed(&x, &w)?;

    let old = derive_matrices(&SecretKey::from_seed(1), 4, 3)?;
    let new = derive_matrices(&SecretKey::from_seed(2), 4, 3)?;
    let shipped = encrypt_model(&w, &old)?;
    let rotated = rekey_model(&shipped, &old, &new)?;

    let check = |label: &str, km| -> patchlock::Result<()> {
        let z = patch_embed(&encrypt_image(&x, km)?, &rotated)?;
        println!("{label}: {}", EquivalenceReport::between(&reference, &z, 1e-6)?);
        Ok(())
    };
    check("new key", &new)?;
    check("old key", &old)?;
    Ok(())
}
