//! Meta-train every variant on the same data and evaluate them on the same
//! meta-test tasks.
//!
//! ```text
//! cargo run --release --example ablation_sweep -- [steps] [seed]
//! ```

use feast::data::{make_synthetic, SplitPart, SplitSpec, SynthSpec};
use feast::meta::{evaluate, train, TrainConfig, Variant};

fn main() -> feast::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(300, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let mut data = make_synthetic(&SynthSpec { seed, ..SynthSpec::default() })?;
    let split = SplitSpec::default_for(data.table.n_subsets(), seed)?;
    data.table.standardize(split.part(SplitPart::Train))?;

    println!("{:<16} {:>8} {:>8} {:>8}", "variant", "dp", "eo", "acc");
    for variant in Variant::ALL {
        let cfg = TrainConfig { variant, seed, meta_steps: steps, test_tasks: 300, ..TrainConfig::new(5) };
        let state = train(cfg, &data.table, split.part(SplitPart::Train))?;
        let s = evaluate(&state, &data.table, split.part(SplitPart::Test))?.summary();
        println!("{:<16} {:>8.4} {:>8.4} {:>8.4}", variant.name(), s.dp.mean, s.eo.mean, s.acc.mean);
    }
    Ok(())
}
