//! Confusion counts and mIoU on hand-made maps, including ignored pixels.
//!
//! ```bash
//! cargo run -p patchlock --example evaluate_miou
//! ```

use patchlock::{ConfusionCounts, SegmentationMap, IGNORE_LABEL};

fn main() -> patchlock::Result<()> {
    let pred = SegmentationMap::new(1, 4, vec![0, 1, 1, 2])?;
    let gt = SegmentationMap::new(1, 4, vec![0, 1, 2, 2])?;
    let mut cc = ConfusionCounts::new(3);
    cc.accumulate(&pred, &gt)?;
    println!("tp {:?} fp {:?} fn {:?}", cc.tp, cc.fp, cc.fn_);
    print!("{}", cc.miou().to_table());

    // ignored ground truth contributes nothing; absent classes drop out of the mean
    let pred = SegmentationMap::new(2, 2, vec![0, 0, 3, 0])?;
    let gt = SegmentationMap::new(2, 2, vec![0, 0, IGNORE_LABEL, 0])?;
    let mut cc = ConfusionCounts::new(4);
    cc.accumulate(&pred, &gt)?;
    print!("{}", cc.miou().to_key_values());
    Ok(())
}
