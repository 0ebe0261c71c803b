//! Compute ΔDP and ΔEO for hand-made predictions, including a task where
//! one label is missing from a group.
//!
//! ```text
//! cargo run --example fairness_metrics
//! ```

use feast::fairness::{delta_dp, delta_eo, GroupedScores};

fn show(name: &str, scores: &[f64], labels: &[usize], attrs: &[u8]) -> feast::Result<()> {
    let g = GroupedScores::new(scores, labels, attrs)?;
    let dp = delta_dp(&g).map_or_else(|_| "undefined".into(), |v| format!("{v:.3}"));
    let eo = match delta_eo(&g) {
        Ok(gap) if gap.partial => format!("{:.3} (partial)", gap.value),
        Ok(gap) => format!("{:.3}", gap.value),
        Err(_) => "undefined".into(),
    };
    println!("{name:<22} dp {dp:<8} eo {eo}");
    Ok(())
}

fn main() -> feast::Result<()> {
    show("maximal disparity", &[1.0, 1.0, 0.0, 0.0], &[0, 1, 0, 1], &[0, 0, 1, 1])?;
    show("constant predictor", &[0.7; 4], &[0, 1, 0, 1], &[0, 0, 1, 1])?;
    show("opposite label gaps", &[0.75, 0.25, 0.25, 0.75], &[0, 1, 0, 1], &[0, 0, 1, 1])?;
    show("group lacks label 1", &[0.5, 0.75, 0.25], &[0, 1, 0], &[0, 0, 1])?;
    show("one group only", &[0.2, 0.9], &[0, 1], &[1, 1])?;
    Ok(())
}
