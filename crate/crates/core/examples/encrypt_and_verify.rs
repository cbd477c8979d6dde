//! Encrypt a patch-embedding layer and an image with the same key, then check
//! that the embeddings match the plaintext pipeline.
//!
//! ```bash
//! cargo run -p patchlock --example encrypt_and_verify
//! ```

use patchlock::keygen::derive_matrices;
use patchlock::protect::{encrypt_image, encrypt_model, patch_embed, verify_equivalence_with, DEFAULT_EQUIVALENCE_TOL};
use patchlock::rng::Gaussian;
use patchlock::toymodel::gen_sample;
use patchlock::{PatchEmbedWeights, SecretKey};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> patchlock::Result<()> {
    let x = gen_sample(3, 0).image;
    let w = PatchEmbedWeights::random(4, 3, 32, 64, 0.1, &mut Gaussian::new(ChaCha20Rng::seed_from_u64(1)))?;

    let key = SecretKey::from_seed(7);
    let km = derive_matrices(&key, 4, 3)?;
    let w_enc = encrypt_model(&w, &km)?;
    let x_enc = encrypt_image(&x, &km)?;

    let plain = patch_embed(&x, &w)?;
    let enc = patch_embed(&x_enc, &w_enc)?;
    println!("z0[0,0..3] plain     {:?}", &plain.z0.row(0)[..3]);
    println!("z0[0,0..3] encrypted {:?}", &enc.z0.row(0)[..3]);

    let ok = verify_equivalence_with(&x, &w, &km, &km, DEFAULT_EQUIVALENCE_TOL)?;
    println!("matching key: {ok}");
    let bad = verify_equivalence_with(&x, &w, &derive_matrices(&SecretKey::from_seed(8), 4, 3)?, &km, DEFAULT_EQUIVALENCE_TOL)?;
    println!("other key:    {bad}");

    // the encrypted image is not a usable picture
    let spread = x_enc.data().iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    println!("encrypted image range [{:.2}, {:.2}]", spread.0, spread.1);
    Ok(())
}
