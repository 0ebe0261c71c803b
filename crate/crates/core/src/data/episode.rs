use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DatasetTable;
use crate::error::{Error, Result};

/// Maximum number of redraws spent satisfying the query constraint.
pub const MAX_QUERY_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub query_size: usize,
}

impl EpisodeConfig {
    pub fn new(k_shot: usize, query_size: usize) -> Self {
        Self {
            n_way: 2,
            k_shot,
            query_size,
        }
    }
}

/// A meta-task: `k_shot` support rows per class plus a disjoint query,
/// all drawn from one subset. Rows index the source [`DatasetTable`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub subset: usize,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

fn eligibility(table: &DatasetTable, subset: usize, cfg: &EpisodeConfig) -> Result<(), String> {
    let rows = table.subset_rows(subset);
    let name = &table.subset_names()[subset];
    for class in 0..cfg.n_way {
        let n = rows.iter().filter(|&&r| usize::from(table.labels()[r]) == class).count();
        if n < cfg.k_shot {
            return Err(format!(
                "subset `{name}` has {n} samples of class {class}, needs k_shot={}",
                cfg.k_shot
            ));
        }
    }
    if rows.len() < cfg.n_way * cfg.k_shot + cfg.query_size {
        return Err(format!(
            "subset `{name}` has {} samples, needs {} for support and query",
            rows.len(),
            cfg.n_way * cfg.k_shot + cfg.query_size
        ));
    }
    for a in 0..2u8 {
        if !rows.iter().any(|&r| table.sensitive()[r] == a) {
            return Err(format!(
                "subset `{name}` has no samples with sensitive attribute {a}; the query needs both groups"
            ));
        }
    }
    Ok(())
}

/// Draws one support set (`k_shot` rows per class) from `subset`.
pub fn sample_support<R: Rng + ?Sized>(
    table: &DatasetTable,
    subset: usize,
    k_shot: usize,
    n_way: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let rows = table.subset_rows(subset);
    let mut support = Vec::with_capacity(n_way * k_shot);
    for class in 0..n_way {
        let members: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| usize::from(table.labels()[r]) == class)
            .collect();
        if members.len() < k_shot {
            return Err(Error::SamplingInfeasible(format!(
                "subset `{}` has {} samples of class {class}, needs {k_shot}",
                table.subset_names()[subset],
                members.len()
            )));
        }
        support.extend(sample(rng, members.len(), k_shot).into_iter().map(|i| members[i]));
    }
    Ok(support)
}

/// Samples an N-way K-shot episode from one uniformly chosen eligible
/// subset of `subsets`. The query is redrawn until it contains both
/// sensitive groups, up to [`MAX_QUERY_ATTEMPTS`] times.
pub fn sample_episode<R: Rng + ?Sized>(
    table: &DatasetTable,
    subsets: &[usize],
    cfg: &EpisodeConfig,
    rng: &mut R,
) -> Result<Episode> {
    if cfg.n_way != 2 {
        return Err(Error::Validation(format!(
            "only binary tasks are supported (n_way=2), got {}",
            cfg.n_way
        )));
    }
    if cfg.k_shot == 0 || cfg.query_size < 2 {
        return Err(Error::Validation(
            "k_shot must be >= 1 and query_size >= 2".into(),
        ));
    }
    let mut reasons = Vec::new();
    let eligible: Vec<usize> = subsets
        .iter()
        .copied()
        .filter(|&s| match eligibility(table, s, cfg) {
            Ok(()) => true,
            Err(why) => {
                reasons.push(why);
                false
            }
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::SamplingInfeasible(if reasons.is_empty() {
            "no subsets given".into()
        } else {
            reasons.join("; ")
        }));
    }

    for _ in 0..MAX_QUERY_ATTEMPTS {
        let subset = eligible[rng.random_range(0..eligible.len())];
        let support = sample_support(table, subset, cfg.k_shot, cfg.n_way, rng)?;
        let rest: Vec<usize> = table
            .subset_rows(subset)
            .iter()
            .copied()
            .filter(|r| !support.contains(r))
            .collect();
        let query: Vec<usize> = sample(rng, rest.len(), cfg.query_size)
            .into_iter()
            .map(|i| rest[i])
            .collect();
        let has = |a: u8| query.iter().any(|&r| table.sensitive()[r] == a);
        if has(0) && has(1) {
            return Ok(Episode {
                subset,
                support,
                query,
            });
        }
    }
    Err(Error::SamplingInfeasible(format!(
        "no query with both sensitive groups after {MAX_QUERY_ATTEMPTS} attempts"
    )))
}
