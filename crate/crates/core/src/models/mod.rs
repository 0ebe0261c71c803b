//! The classifier and the adaptation-direction generator.

mod classifier;
mod generator;
mod params;

pub use classifier::{
    classifier_forward, ClassifierConfig, ClassifierOutput, ClassifierParams, EMBED_EPS,
};
pub use generator::{generator_forward, GeneratorConfig, GeneratorParams};
pub use params::{ParamEntry, ParamList};
