//! Fit the direction generator to one support set's regularized-loss
//! gradient and check that its output ignores the order of the set.
//!
//! ```text
//! cargo run --release --example generator -- [steps]
//! ```

use feast::auxiliary::regularized_gradient;
use feast::data::{make_synthetic, sample_support, SynthSpec};
use feast::fairness::RegularizerKind;
use feast::meta::meta_update_generator;
use feast::models::{ClassifierConfig, ClassifierParams, GeneratorConfig, GeneratorParams};
use feast::tensor::{AdamState, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> feast::Result<()> {
    let steps: usize = std::env::args().nth(1).map_or(300, |s| s.parse().expect("steps"));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut table = make_synthetic(&SynthSpec::default())?.table;
    table.standardize(&(0..table.n_subsets()).collect::<Vec<_>>())?;

    let classifier = ClassifierParams::init(ClassifierConfig::new(table.n_features()), &mut rng);
    let mut generator = GeneratorParams::init(GeneratorConfig::new(classifier.params.numel()), &mut rng);
    let mut opt = AdamState::for_params(1e-3, 0.0, generator.params.tensors());

    let support = sample_support(&table, 0, 5, 2, &mut rng)?;
    let (emb, _) = classifier.predict(&table.batch(&support).x)?;
    let target = regularized_gradient(&table, &support, &classifier, 1.0, RegularizerKind::Dp)?;
    println!("target direction: {} values, norm {:.4}", target.len(), target.iter().map(|v| v * v).sum::<f64>().sqrt());

    for step in 0..=steps {
        let loss = meta_update_generator(&mut generator, &emb, &target, &mut opt)?;
        if step % (steps / 5).max(1) == 0 {
            println!("step {step:>4}: estimation loss {loss:.6}");
        }
    }

    let reversed: Vec<&[f64]> = (0..emb.rows()).rev().map(|i| emb.row(i)).collect();
    let a = generator.predict(&emb)?;
    let b = generator.predict(&Tensor::from_rows(&reversed)?)?;
    let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("max output change after reversing the set: {diff:.2e}");
    Ok(())
}
