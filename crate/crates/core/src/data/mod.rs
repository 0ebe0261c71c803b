//! Tabular fairness datasets, subset splits, episode sampling and
//! synthetic data generation.

mod episode;
mod split;
mod synthetic;
mod table;

pub use episode::{sample_episode, sample_support, Episode, EpisodeConfig, MAX_QUERY_ATTEMPTS};
pub use split::{SplitPart, SplitSpec};
pub use synthetic::{make_synthetic, sidecar_path, SynthManifest, SynthSpec, SyntheticDataset};
pub use table::{Batch, CsvSchema, DatasetTable, FeatureStats};
