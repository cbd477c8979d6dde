//! Derive the secret matrix for a key and show its conditioning.
//!
//! ```bash
//! cargo run -p patchlock --example keygen_and_derive
//! ```

use patchlock::keygen::{derive_matrices, generate_key};
use patchlock::SecretKey;

fn main() -> patchlock::Result<()> {
    let fresh = generate_key()?;
    println!("fresh key: {}", fresh.to_hex());

    // seeded keys are reproducible
    let key = SecretKey::from_seed(42);
    for (p, c) in [(1, 3), (2, 3), (4, 3), (8, 3)] {
        let km = derive_matrices(&key, p, c)?;
        println!(
            "p={p} c={c}: {}x{}, condition ~{:.1}, |E E^-1 - I|max {:.2e}",
            km.side(),
            km.side(),
            km.kappa,
            km.inverse_residual()
        );
    }

    let again = derive_matrices(&key, 4, 3)?;
    assert_eq!(again.enc, derive_matrices(&key, 4, 3)?.enc);
    println!("E[0,0..4] = {:?}", &again.enc.row(0)[..4]);
    Ok(())
}
