//! Split subsets into meta-train / validation / meta-test and draw a few
//! 2-way K-shot episodes.
//!
//! ```text
//! cargo run --example episode_sampling -- [k_shot] [query_size]
//! ```

use feast::data::{make_synthetic, sample_episode, EpisodeConfig, SplitPart, SplitSpec, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> feast::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map_or(5, |s| s.parse().expect("k_shot"));
    let q: usize = args.next().map_or(10, |s| s.parse().expect("query_size"));

    let table = make_synthetic(&SynthSpec::default())?.table;
    let split = SplitSpec::default_for(table.n_subsets(), 0)?;
    for part in [SplitPart::Train, SplitPart::Val, SplitPart::Test] {
        println!("{part:?}: subsets {:?}", split.part(part));
    }

    let cfg = EpisodeConfig::new(k, q);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..3 {
        let ep = sample_episode(&table, split.part(SplitPart::Train), &cfg, &mut rng)?;
        let support = table.batch(&ep.support);
        let query = table.batch(&ep.query);
        println!(
            "subset {}: support labels {:?} attrs {:?}; query labels {:?} attrs {:?}",
            table.subset_names()[ep.subset],
            support.labels,
            support.attrs,
            query.labels,
            query.attrs
        );
    }
    Ok(())
}
