//! Meta-train one variant on synthetic biased data and report meta-test
//! fairness and accuracy.
//!
//! ```text
//! cargo run --release --example train_and_evaluate -- [variant] [steps] [seed]
//! ```

use std::time::Instant;

use feast::data::{make_synthetic, SplitPart, SplitSpec, SynthSpec};
use feast::meta::{evaluate, train, TrainConfig, Variant};

fn main() -> feast::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args
        .next()
        .map(|s| s.parse().expect("variant"))
        .unwrap_or_default();
    let steps: u64 = args.next().map_or(300, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let mut data = make_synthetic(&SynthSpec { seed, ..SynthSpec::default() })?;
    let split = SplitSpec::default_for(data.table.n_subsets(), seed)?;
    data.table.standardize(split.part(SplitPart::Train))?;

    let mut cfg = TrainConfig::new(5);
    cfg.variant = variant;
    cfg.meta_steps = steps;
    cfg.test_tasks = 300;
    cfg.seed = seed;

    let t0 = Instant::now();
    let state = train(cfg, &data.table, split.part(SplitPart::Train))?;
    let trained = t0.elapsed();
    let report = evaluate(&state, &data.table, split.part(SplitPart::Test))?;
    let s = report.summary();
    println!(
        "{variant}: dp {:.4} ± {:.4}  eo {:.4}  acc {:.4}  ({} partial)  train {:.1?} eval {:.1?}",
        s.dp.mean,
        s.dp.std,
        s.eo.mean,
        s.acc.mean,
        s.partial_tasks,
        trained,
        t0.elapsed() - trained
    );
    Ok(())
}
