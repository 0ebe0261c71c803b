//! Synthetic biased tabular data.
//!
//! Each sample draws a subset `s`, a sensitive attribute `a ~ Bern(p_s)` and
//! a latent merit `u ~ N(0, 1)`. The label is
//! `y = 1[u + coupling * delta * (a - 1/2) > 0]`, so `delta = 0` makes `y`
//! independent of `a`. Features (twelve columns by default):
//!
//! | block   | columns | distribution               |
//! |---------|---------|----------------------------|
//! | sensitive | 1     | `a`                         |
//! | merit   | 4       | `u + N(0, label_noise^2)`   |
//! | bias    | 4       | `delta * a + N(0, sigma^2)` |
//! | noise   | 3       | `N(0, sigma^2)`             |
//!
//! The bias block is a proxy for `a` whose group means are shifted by
//! `delta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CsvSchema, DatasetTable};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_subsets: usize,
    /// Group mean shift on the bias block, in units of `sigma`.
    pub delta: f64,
    /// Marginal `P(A = 1)`.
    pub p_sensitive: f64,
    /// Per-subset `P(A = 1)` is drawn uniformly within `p_sensitive ± spread`.
    pub subset_spread: f64,
    /// Strength of the label's dependence on `a`, relative to `delta`.
    pub label_coupling: f64,
    pub label_noise: f64,
    pub sigma: f64,
    pub merit_features: usize,
    pub bias_features: usize,
    pub noise_features: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 8000,
            n_subsets: 12,
            delta: 2.0,
            p_sensitive: 0.5,
            subset_spread: 0.3,
            label_coupling: 0.5,
            label_noise: 1.0,
            sigma: 1.0,
            merit_features: 4,
            bias_features: 4,
            noise_features: 3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad(format!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.p_sensitive > 0.0 && self.p_sensitive < 1.0) {
            return bad(format!("p_sensitive must lie in (0, 1), got {}", self.p_sensitive));
        }
        let (lo, hi) = (
            self.p_sensitive - self.subset_spread,
            self.p_sensitive + self.subset_spread,
        );
        if self.subset_spread < 0.0 || lo <= 0.0 || hi >= 1.0 {
            return bad(format!(
                "per-subset group probabilities [{lo}, {hi}] must stay inside (0, 1)"
            ));
        }
        if self.n_subsets == 0 || self.n_samples < self.n_subsets {
            return bad("need n_samples >= n_subsets >= 1".into());
        }
        if !(self.sigma > 0.0) || self.label_noise < 0.0 || self.label_coupling < 0.0 {
            return bad("sigma must be > 0; label_noise and label_coupling >= 0".into());
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        1 + self.merit_features + self.bias_features + self.noise_features
    }

    /// Column roles of the emitted CSV.
    pub fn schema() -> CsvSchema {
        CsvSchema::new("y", "a", "subset")
    }
}

/// Generating parameters written next to an emitted CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub subset_p_sensitive: Vec<f64>,
    pub schema: CsvSchema,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub table: DatasetTable,
    pub manifest: SynthManifest,
}

pub fn make_synthetic(spec: &SynthSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let subset_p: Vec<f64> = (0..spec.n_subsets)
        .map(|_| {
            if spec.subset_spread > 0.0 {
                spec.p_sensitive + rng.random_range(-spec.subset_spread..spec.subset_spread)
            } else {
                spec.p_sensitive
            }
        })
        .collect();

    let d = spec.n_features();
    let n = spec.n_samples;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    let mut subset_id = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rng.random_range(0..spec.n_subsets);
        let a = u8::from(rng.random::<f64>() < subset_p[s]);
        let af = f64::from(a);
        let u: f64 = std_normal.sample(&mut rng);
        let y = u8::from(u + spec.label_coupling * spec.delta * (af - 0.5) > 0.0);

        data.push(af);
        for _ in 0..spec.merit_features {
            data.push(u + spec.label_noise * std_normal.sample(&mut rng));
        }
        for _ in 0..spec.bias_features {
            data.push(spec.sigma * (spec.delta * af + std_normal.sample(&mut rng)));
        }
        for _ in 0..spec.noise_features {
            data.push(spec.sigma * std_normal.sample(&mut rng));
        }
        labels.push(y);
        sensitive.push(a);
        subset_id.push(s);
    }

    let mut feature_names = vec!["a".to_string()];
    feature_names.extend((0..spec.merit_features).map(|i| format!("merit{i}")));
    feature_names.extend((0..spec.bias_features).map(|i| format!("bias{i}")));
    feature_names.extend((0..spec.noise_features).map(|i| format!("noise{i}")));
    // Zero-padded so lexicographic subset order matches generation order.
    let subset_names = (0..spec.n_subsets).map(|i| format!("s{i:03}")).collect();

    let table = DatasetTable::new(
        Tensor::from_vec(n, d, data)?,
        labels,
        sensitive,
        subset_id,
        subset_names,
        feature_names,
        Some(0),
    )
    .map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{m} (increase n_samples)")),
        other => other,
    })?;
    Ok(SyntheticDataset {
        table,
        manifest: SynthManifest {
            spec: spec.clone(),
            subset_p_sensitive: subset_p,
            schema: SynthSpec::schema(),
        },
    })
}

/// Path of the JSON sidecar for a CSV: `data.csv` becomes `data.synth.json`.
pub fn sidecar_path(csv: &std::path::Path) -> std::path::PathBuf {
    csv.with_extension("synth.json")
}

impl SyntheticDataset {
    /// Writes the CSV and its JSON sidecar.
    pub fn write(&self, csv: &std::path::Path) -> Result<()> {
        self.table.write_csv(csv, &self.manifest.schema)?;
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(sidecar_path(csv), json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[u8], b: &[u8]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let mb = b.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            let (dx, dy) = (f64::from(x) - ma, f64::from(y) - mb);
            cov += dx * dy;
            va += dx * dx;
            vb += dy * dy;
        }
        cov / (va * vb).sqrt()
    }

    #[test]
    fn unbiased_construction_has_no_label_correlation() {
        let spec = SynthSpec {
            n_samples: 10_000,
            delta: 0.0,
            seed: 4,
            ..SynthSpec::default()
        };
        let t = make_synthetic(&spec).unwrap().table;
        assert!(corr(t.sensitive(), t.labels()).abs() < 0.05);
    }

    #[test]
    fn biased_construction_correlates() {
        let t = make_synthetic(&SynthSpec::default()).unwrap().table;
        assert!(corr(t.sensitive(), t.labels()) > 0.2);
        assert_eq!(t.n_features(), 12);
        assert_eq!(t.n_subsets(), 12);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = make_synthetic(&SynthSpec::default()).unwrap().table;
        let b = make_synthetic(&SynthSpec::default()).unwrap().table;
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs_rejected() {
        let neg = SynthSpec {
            delta: -1.0,
            ..SynthSpec::default()
        };
        assert!(matches!(make_synthetic(&neg), Err(Error::Validation(_))));
        let p = SynthSpec {
            p_sensitive: 1.0,
            ..SynthSpec::default()
        };
        assert!(matches!(make_synthetic(&p), Err(Error::Validation(_))));
    }
}
