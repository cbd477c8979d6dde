//! Train the toy segmenter for a short schedule and save a checkpoint.
//!
//! ```bash
//! cargo run --release -p patchlock --example train_toy -- /tmp/toy.plw
//! ```

use patchlock::experiments::evaluate;
use patchlock::toymodel::{gen_dataset, train_with, TrainConfig};
use patchlock::ToyModel;

fn main() -> patchlock::Result<()> {
    let out = std::env::args().nth(1);
    let cfg = TrainConfig { iterations: 400, ..TrainConfig::default() };
    let train = gen_dataset(0, 256)?;
    let test = gen_dataset(1, 32)?;

    let model = train_with(&cfg, &train, |t, lr, loss| {
        if t % 50 == 0 {
            println!("iter {t:>4}  lr {lr:.4}  loss {loss:.4}");
        }
    })?;
    println!("{} parameters", model.n_params());
    print!("{}", evaluate(&model, &test, None)?.miou().to_table());

    if let Some(path) = out {
        model.save(&path)?;
        assert_eq!(ToyModel::load(&path)?, model);
        println!("saved {path}");
    }
    Ok(())
}
