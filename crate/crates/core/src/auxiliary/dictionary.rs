//! FIFO dictionary of candidate auxiliary sets keyed by their adaptation
//! directions, with nearest-key retrieval.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_support, DatasetTable};
use crate::error::{Error, Result};
use crate::fairness::{regularized_loss, RegularizerKind};
use crate::models::{ClassifierParams, ParamList};
use crate::tensor::Graph;

const INDEX_FILE: &str = "dictionary.json";
const KEYS_FILE: &str = "dictionary_keys.bin";

/// A candidate auxiliary set: row indices into the source table and the
/// flattened gradient used as its retrieval key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliarySet {
    pub rows: Vec<usize>,
    #[serde(skip)]
    pub key: Vec<f64>,
    pub enqueue_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDictionary {
    capacity: usize,
    queue: VecDeque<AuxiliarySet>,
    next_step: u64,
}

#[derive(Serialize, Deserialize)]
struct Index {
    capacity: usize,
    next_step: u64,
    key_len: usize,
    sets: Vec<AuxiliarySet>,
}

impl CandidateDictionary {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("dict-capacity", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            queue: VecDeque::with_capacity(capacity),
            next_step: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Step number the next enqueued set will receive.
    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &AuxiliarySet> {
        self.queue.iter()
    }

    pub fn get(&self, i: usize) -> Option<&AuxiliarySet> {
        self.queue.get(i)
    }

    /// Appends a set and returns the evicted oldest set when over capacity.
    pub fn push(&mut self, rows: Vec<usize>, key: Vec<f64>) -> Result<Option<AuxiliarySet>> {
        if let Some(first) = self.queue.front() {
            if first.key.len() != key.len() {
                return Err(Error::shape(
                    "CandidateDictionary::push",
                    format!("key length {} differs from stored {}", key.len(), first.key.len()),
                ));
            }
        }
        self.queue.push_back(AuxiliarySet {
            rows,
            key,
            enqueue_step: self.next_step,
        });
        self.next_step += 1;
        Ok(if self.queue.len() > self.capacity {
            self.queue.pop_front()
        } else {
            None
        })
    }

    /// The set whose key is nearest to `direction` in Euclidean distance;
    /// ties go to the older set.
    pub fn select(&self, direction: &[f64]) -> Result<&AuxiliarySet> {
        let mut best: Option<(f64, &AuxiliarySet)> = None;
        for set in &self.queue {
            if set.key.len() != direction.len() {
                return Err(Error::shape(
                    "select_auxiliary",
                    format!("direction length {}, key length {}", direction.len(), set.key.len()),
                ));
            }
            let d = sq_dist(&set.key, direction);
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, set));
            }
        }
        best.map(|(_, s)| s)
            .ok_or_else(|| Error::Selection("candidate dictionary is empty".into()))
    }

    /// Writes `dictionary.json` (capacity, step counter, rows per set) and
    /// `dictionary_keys.bin` (little-endian f64 key matrix, oldest first).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let key_len = self.queue.front().map_or(0, |s| s.key.len());
        let index = Index {
            capacity: self.capacity,
            next_step: self.next_step,
            key_len,
            sets: self.queue.iter().cloned().collect(),
        };
        std::fs::write(dir.join(INDEX_FILE), serde_json::to_vec_pretty(&index)?)?;
        let mut bytes = Vec::with_capacity(self.queue.len() * key_len * 8);
        for s in &self.queue {
            for v in &s.key {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(dir.join(KEYS_FILE), bytes)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index: Index = serde_json::from_slice(&std::fs::read(dir.join(INDEX_FILE))?)?;
        let keys = read_f64s(&dir.join(KEYS_FILE))?;
        if keys.len() != index.sets.len() * index.key_len {
            return Err(Error::Checkpoint(format!(
                "key matrix has {} values, expected {} sets × {}",
                keys.len(),
                index.sets.len(),
                index.key_len
            )));
        }
        if index.capacity == 0 || index.sets.len() > index.capacity {
            return Err(Error::Checkpoint("dictionary exceeds its capacity".into()));
        }
        let mut queue = VecDeque::with_capacity(index.capacity);
        let mut last = None;
        for (i, mut s) in index.sets.into_iter().enumerate() {
            if last.is_some_and(|l| s.enqueue_step <= l) || s.enqueue_step >= index.next_step {
                return Err(Error::Checkpoint("dictionary steps are not increasing".into()));
            }
            last = Some(s.enqueue_step);
            s.key = keys[i * index.key_len..(i + 1) * index.key_len].to_vec();
            queue.push_back(s);
        }
        Ok(Self {
            capacity: index.capacity,
            queue,
            next_step: index.next_step,
        })
    }
}

pub(crate) fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!(
            "{} is not a whole number of f64 values",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// How candidate sets are sized and keyed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeySpec {
    pub aux_size: usize,
    pub lambda: f64,
    pub regularizer: RegularizerKind,
}

/// Brings `rows` to exactly `target` samples. Shrinking keeps one random
/// representative of each (label, attribute) cell where room allows and
/// fills the rest uniformly; growing adds random unused rows from the
/// subset of the first row. Returns fewer rows only if that subset is
/// exhausted.
pub fn resize_rows<R: Rng + ?Sized>(
    table: &DatasetTable,
    rows: &[usize],
    target: usize,
    rng: &mut R,
) -> Vec<usize> {
    if rows.len() == target || rows.is_empty() {
        return rows.to_vec();
    }
    if rows.len() < target {
        let mut out = rows.to_vec();
        let pool: Vec<usize> = table
            .subset_rows(table.subset_of(rows[0]))
            .iter()
            .copied()
            .filter(|r| !rows.contains(r))
            .collect();
        let need = (target - rows.len()).min(pool.len());
        out.extend(sample(rng, pool.len(), need).into_iter().map(|i| pool[i]));
        return out;
    }

    let mut cells: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    for (pos, &r) in rows.iter().enumerate() {
        cells
            .entry((table.labels()[r], table.sensitive()[r]))
            .or_default()
            .push(pos);
    }
    let mut reps: Vec<usize> = cells
        .values()
        .map(|members| members[rng.random_range(0..members.len())])
        .collect();
    reps.shuffle(rng);
    reps.truncate(target);
    let rest: Vec<usize> = (0..rows.len()).filter(|p| !reps.contains(p)).collect();
    let fill = target - reps.len();
    reps.extend(sample(rng, rest.len(), fill).into_iter().map(|i| rest[i]));
    reps.sort_unstable();
    reps.into_iter().map(|p| rows[p]).collect()
}

/// Flattened `∇θ L_R` over `rows` at `params`.
pub fn regularized_gradient(
    table: &DatasetTable,
    rows: &[usize],
    params: &ClassifierParams,
    lambda: f64,
    regularizer: RegularizerKind,
) -> Result<Vec<f64>> {
    let batch = table.batch(rows);
    let mut g = Graph::new();
    let vars = params.register(&mut g);
    let loss = regularized_loss(&mut g, &params.config, &vars, &batch, lambda, regularizer)?;
    g.backward(loss.value)?;
    ParamList::flat_grads(&g, &vars)
}

/// Resizes `support` to the auxiliary size, keys it by its regularized-loss
/// gradient at `params`, and enqueues it. Returns any evicted set.
pub fn enqueue_candidate<R: Rng + ?Sized>(
    dict: &mut CandidateDictionary,
    table: &DatasetTable,
    support: &[usize],
    params: &ClassifierParams,
    spec: &KeySpec,
    rng: &mut R,
) -> Result<Option<AuxiliarySet>> {
    if support.is_empty() {
        return Err(Error::degenerate("enqueue_candidate", "empty support set"));
    }
    let rows = resize_rows(table, support, spec.aux_size, rng);
    let key = regularized_gradient(table, &rows, params, spec.lambda, spec.regularizer)?;
    dict.push(rows, key)
}

/// Convenience alias for [`CandidateDictionary::select`].
pub fn select_auxiliary<'a>(
    dict: &'a CandidateDictionary,
    direction: &[f64],
) -> Result<&'a AuxiliarySet> {
    dict.select(direction)
}

/// Fills a new dictionary with `capacity` random support sets drawn from
/// `subsets`, keyed at `params`.
pub fn init_dictionary<R: Rng + ?Sized>(
    table: &DatasetTable,
    subsets: &[usize],
    params: &ClassifierParams,
    capacity: usize,
    k_shot: usize,
    spec: &KeySpec,
    rng: &mut R,
) -> Result<CandidateDictionary> {
    let mut dict = CandidateDictionary::new(capacity)?;
    let eligible: Vec<usize> = subsets
        .iter()
        .copied()
        .filter(|&s| {
            (0..2u8).all(|c| {
                table
                    .subset_rows(s)
                    .iter()
                    .filter(|&&r| table.labels()[r] == c)
                    .count()
                    >= k_shot
            })
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::SamplingInfeasible(format!(
            "no training subset has {k_shot} samples of each class"
        )));
    }
    for _ in 0..capacity {
        let subset = eligible[rng.random_range(0..eligible.len())];
        let support = sample_support(table, subset, k_shot, 2, rng)?;
        enqueue_candidate(&mut dict, table, &support, params, spec, rng)?;
    }
    Ok(dict)
}
