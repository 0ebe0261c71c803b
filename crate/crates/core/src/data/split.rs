use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subset counts of the reference 34-subset partition: 22 / 6 / 6.
const REFERENCE_COUNTS: (usize, usize, usize) = (22, 6, 6);

/// Disjoint meta-train / validation / meta-test subset ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

impl SplitSpec {
    /// Shuffles subset ids with `seed` and cuts them into the given counts.
    pub fn random(n_subsets: usize, counts: (usize, usize, usize), seed: u64) -> Result<Self> {
        let (tr, va, te) = counts;
        if tr + va + te > n_subsets {
            return Err(Error::Validation(format!(
                "split {tr}/{va}/{te} needs more than {n_subsets} subsets"
            )));
        }
        let mut ids: Vec<usize> = (0..n_subsets).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut train = ids[..tr].to_vec();
        let mut val = ids[tr..tr + va].to_vec();
        let mut test = ids[tr + va..tr + va + te].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            train,
            val,
            test,
            seed,
        })
    }

    /// Scales the 22/6/6 reference proportions to `n_subsets`, keeping at
    /// least one subset per part.
    pub fn default_counts(n_subsets: usize) -> Result<(usize, usize, usize)> {
        if n_subsets < 3 {
            return Err(Error::Validation(format!(
                "need at least 3 subsets for a train/val/test split, got {n_subsets}"
            )));
        }
        let (rt, rv, re) = REFERENCE_COUNTS;
        let total = (rt + rv + re) as f64;
        let val = ((n_subsets as f64 * rv as f64 / total).round() as usize).max(1);
        let test = ((n_subsets as f64 * re as f64 / total).round() as usize).max(1);
        let train = n_subsets.saturating_sub(val + test).max(1);
        Ok((train, val, test))
    }

    pub fn default_for(n_subsets: usize, seed: u64) -> Result<Self> {
        Self::random(n_subsets, Self::default_counts(n_subsets)?, seed)
    }

    pub fn part(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    /// Checks pairwise disjointness and that ids are below `n_subsets`.
    pub fn validate(&self, n_subsets: usize) -> Result<()> {
        let mut seen = vec![None; n_subsets];
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in ids {
                let slot = seen.get_mut(id).ok_or_else(|| {
                    Error::Validation(format!("{name} subset id {id} out of range ({n_subsets})"))
                })?;
                if let Some(prev) = slot {
                    return Err(Error::Validation(format!(
                        "subset {id} appears in both {prev} and {name}"
                    )));
                }
                *slot = Some(name);
            }
        }
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::Validation("train and test splits must be non-empty".into()));
        }
        Ok(())
    }
}
