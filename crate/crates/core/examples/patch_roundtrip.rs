//! Split an image into flattened patches and stitch it back together.
//!
//! ```bash
//! cargo run -p patchlock --example patch_roundtrip
//! ```

use patchlock::tensorpatch::{from_patches, to_patches};
use patchlock::toymodel::gen_sample;

fn main() -> patchlock::Result<()> {
    let x = gen_sample(0, 0).image;
    let pm = to_patches(&x, 4)?;
    let (gh, gw) = pm.grid();
    println!("{}x{}x{} image -> {} patches ({gh}x{gw}) of dim {}", x.height(), x.width(), x.channels(), pm.n_patches(), pm.patch_dim());

    // patch 1 starts at column 4; channel varies fastest
    println!("patch 1, first pixel: {:?}", &pm.matrix().row(1)[..3]);
    println!("image (0,4,..):       {:?}", [x.get(0, 4, 0), x.get(0, 4, 1), x.get(0, 4, 2)]);

    let back = from_patches(&pm)?;
    assert_eq!(back, x);
    println!("round trip exact");

    if let Err(e) = to_patches(&x, 5) {
        println!("p=5: {e}");
    }
    Ok(())
}
