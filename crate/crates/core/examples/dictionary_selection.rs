//! Fill a small candidate dictionary with support sets keyed by their
//! regularized-loss gradients, watch FIFO eviction, and retrieve the set
//! nearest to a query direction.
//!
//! ```text
//! cargo run --example dictionary_selection
//! ```

use feast::auxiliary::{enqueue_candidate, init_dictionary, regularized_gradient, KeySpec};
use feast::data::{make_synthetic, sample_support, SynthSpec};
use feast::fairness::RegularizerKind;
use feast::models::{ClassifierConfig, ClassifierParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> feast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut table = make_synthetic(&SynthSpec::default())?.table;
    let subsets: Vec<usize> = (0..table.n_subsets()).collect();
    table.standardize(&subsets)?;
    let params = ClassifierParams::init(ClassifierConfig::new(table.n_features()), &mut rng);
    let spec = KeySpec { aux_size: 10, lambda: 1.0, regularizer: RegularizerKind::Dp };

    let mut dict = init_dictionary(&table, &subsets, &params, 4, 5, &spec, &mut rng)?;
    let steps = |d: &feast::auxiliary::CandidateDictionary| d.iter().map(|s| s.enqueue_step).collect::<Vec<_>>();
    println!("initial queue (oldest first): {:?}", steps(&dict));
    for _ in 0..3 {
        let support = sample_support(&table, 0, 5, 2, &mut rng)?;
        let evicted = enqueue_candidate(&mut dict, &table, &support, &params, &spec, &mut rng)?;
        println!(
            "enqueued step {}, evicted {:?}, queue {:?}",
            dict.next_step() - 1,
            evicted.map(|s| s.enqueue_step),
            steps(&dict)
        );
    }

    let support = sample_support(&table, 3, 5, 2, &mut rng)?;
    let direction = regularized_gradient(&table, &support, &params, spec.lambda, spec.regularizer)?;
    for set in dict.iter() {
        let d2: f64 = set.key.iter().zip(&direction).map(|(a, b)| (a - b) * (a - b)).sum();
        println!("step {:>2}: squared distance {d2:.5}", set.enqueue_step);
    }
    println!("selected step {}", dict.select(&direction)?.enqueue_step);
    Ok(())
}
