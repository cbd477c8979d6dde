//! Train the toy model with the default recipe, then compare baseline,
//! correct-key and 50 wrong-key evaluations on the held-out split.
//!
//! ```bash
//! cargo run --release -p patchlock --example access_control_experiment
//! ```

use std::time::Instant;

use patchlock::experiments::{chance_level_miou, emit_boxplot_stats, run_access_control_experiment};
use patchlock::toymodel::{
    gen_dataset, train_with, TrainConfig, DEFAULT_TEST_DATA_SEED, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_DATA_SEED,
    DEFAULT_TRAIN_SIZE,
};
use patchlock::SecretKey;

fn main() -> patchlock::Result<()> {
    let cfg = TrainConfig::default();
    let train = gen_dataset(DEFAULT_TRAIN_DATA_SEED, DEFAULT_TRAIN_SIZE)?;
    let test = gen_dataset(DEFAULT_TEST_DATA_SEED, DEFAULT_TEST_SIZE)?;

    let start = Instant::now();
    let model = train_with(&cfg, &train, |t, lr, loss| {
        if t % 250 == 0 {
            println!("iter {t:>5}  lr {lr:.4}  loss {loss:.4}");
        }
    })?;
    println!("trained in {:.1?}", start.elapsed());

    let chance = chance_level_miou(&cfg.model, &test, 12345)?;
    println!("untrained (chance-level) mIoU: {chance:.4}");

    let key = SecretKey::from_seed(2024);
    let report = run_access_control_experiment(&model, &test, &key, 50, 7)?;
    print!("{}", report.summary_table());
    print!("{}", emit_boxplot_stats(&report)?);
    Ok(())
}
