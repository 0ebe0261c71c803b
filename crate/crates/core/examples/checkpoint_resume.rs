//! Train part way, save a checkpoint, reload it, finish training, and
//! confirm the result matches an uninterrupted run bit for bit.
//!
//! ```text
//! cargo run --release --example checkpoint_resume -- [steps]
//! ```

use feast::data::{make_synthetic, SplitPart, SplitSpec, SynthSpec};
use feast::meta::{train, TrainConfig, TrainState};

fn main() -> feast::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(40, |s| s.parse().expect("steps"));
    let mut data = make_synthetic(&SynthSpec::default())?;
    let split = SplitSpec::default_for(data.table.n_subsets(), 0)?;
    data.table.standardize(split.part(SplitPart::Train))?;
    let (table, ids) = (&data.table, split.part(SplitPart::Train));
    let cfg = TrainConfig { meta_steps: steps, ..TrainConfig::new(5) };

    let straight = train(cfg.clone(), table, ids)?;

    let dir = std::env::temp_dir().join(format!("feast-checkpoint-{}", std::process::id()));
    let mut first = TrainState::new(cfg, table, ids)?;
    first.run(table, ids, steps / 2, |_| {})?;
    first.save(&dir)?;
    println!("saved step {} to {}", first.step, dir.display());

    let mut resumed = TrainState::load(&dir)?;
    resumed.run(table, ids, steps, |log| {
        if log.step % 10 == 0 {
            println!("step {:>4}: query loss {:.4}", log.step, log.query_loss);
        }
    })?;
    std::fs::remove_dir_all(&dir)?;

    let same = resumed.classifier.flatten() == straight.classifier.flatten()
        && resumed.generator.params.flatten() == straight.generator.params.flatten()
        && resumed.dictionary == straight.dictionary;
    println!("resumed run identical to uninterrupted run: {same}");
    Ok(())
}
