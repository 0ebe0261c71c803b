//! Checkpoint directories: a JSON manifest plus little-endian f64 blobs.
//!
//! ```text
//! manifest.json          config, step, layouts, optimizer settings, RNG, history
//! classifier.bin         classifier parameters in manifest order
//! generator.bin          generator parameters
//! classifier_adam.bin    first then second Adam moments
//! generator_adam.bin
//! dictionary/            dictionary.json + dictionary_keys.bin (if any)
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::engine::{StepLog, TrainState};
use crate::auxiliary::{read_f64s, CandidateDictionary};
use crate::error::{Error, Result};
use crate::models::{
    ClassifierConfig, ClassifierParams, GeneratorConfig, GeneratorParams, ParamEntry, ParamList,
};
use crate::tensor::AdamState;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct AdamSettings {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
}

impl AdamSettings {
    fn of(a: &AdamState) -> Self {
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            step: a.step,
        }
    }

    fn restore(&self, params: &ParamList, blob: &[f64]) -> Result<AdamState> {
        let mut a = AdamState::for_params(self.lr, self.weight_decay, params.tensors());
        a.beta1 = self.beta1;
        a.beta2 = self.beta2;
        a.eps = self.eps;
        a.step = self.step;
        let n = params.numel();
        if blob.len() != 2 * n {
            return Err(Error::Checkpoint(format!(
                "optimizer blob has {} values, expected {}",
                blob.len(),
                2 * n
            )));
        }
        a.set_flat_moments(&blob[..n], &blob[n..])?;
        Ok(a)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    /// u128 as a decimal string; JSON numbers cannot hold it exactly.
    word_pos: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: TrainConfig,
    step: u64,
    classifier_config: ClassifierConfig,
    generator_config: GeneratorConfig,
    classifier_layout: Vec<ParamEntry>,
    generator_layout: Vec<ParamEntry>,
    classifier_adam: AdamSettings,
    generator_adam: AdamSettings,
    rng: RngState,
    has_dictionary: bool,
    history: Vec<StepLog>,
}

fn write_f64s(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}

fn moments_blob(a: &AdamState) -> Vec<f64> {
    let (m, v) = a.flat_moments();
    [m, v].concat()
}

impl TrainState {
    /// Writes a checkpoint into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            step: self.step,
            classifier_config: self.classifier.config,
            generator_config: self.generator.config,
            classifier_layout: self.classifier.params.manifest(),
            generator_layout: self.generator.params.manifest(),
            classifier_adam: AdamSettings::of(&self.classifier_opt),
            generator_adam: AdamSettings::of(&self.generator_opt),
            rng: RngState {
                seed: self.rng.get_seed().to_vec(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            has_dictionary: self.dictionary.is_some(),
            history: self.history.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        write_f64s(&dir.join("classifier.bin"), self.classifier.flatten())?;
        write_f64s(&dir.join("generator.bin"), self.generator.params.flatten())?;
        write_f64s(&dir.join("classifier_adam.bin"), moments_blob(&self.classifier_opt))?;
        write_f64s(&dir.join("generator_adam.bin"), moments_blob(&self.generator_opt))?;
        if let Some(dict) = &self.dictionary {
            let d = dir.join("dictionary");
            std::fs::create_dir_all(&d)?;
            dict.save(&d)?;
        }
        Ok(())
    }

    /// Restores a state written by [`TrainState::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)
            .map_err(|e| Error::Checkpoint(format!("manifest.json: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let classifier = ClassifierParams::zeros(manifest.classifier_config);
        classifier.params.check_manifest(&manifest.classifier_layout)?;
        let classifier = classifier.unflatten(&read_f64s(&dir.join("classifier.bin"))?)?;

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let generator_shape = GeneratorParams::init(manifest.generator_config, &mut rng);
        generator_shape.params.check_manifest(&manifest.generator_layout)?;
        let generator = GeneratorParams {
            config: manifest.generator_config,
            params: generator_shape
                .params
                .unflatten(&read_f64s(&dir.join("generator.bin"))?)?,
        };

        let classifier_opt = manifest
            .classifier_adam
            .restore(&classifier.params, &read_f64s(&dir.join("classifier_adam.bin"))?)?;
        let generator_opt = manifest
            .generator_adam
            .restore(&generator.params, &read_f64s(&dir.join("generator_adam.bin"))?)?;

        let dictionary = if manifest.has_dictionary {
            Some(CandidateDictionary::load(dir.join("dictionary"))?)
        } else {
            None
        };

        let seed: [u8; 32] = manifest
            .rng
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| Error::Checkpoint("RNG seed must be 32 bytes".into()))?;
        let word_pos: u128 = manifest
            .rng
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("RNG word position is not an integer".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(manifest.rng.stream);
        rng.set_word_pos(word_pos);

        manifest.config.validate()?;
        Ok(Self {
            config: manifest.config,
            classifier,
            generator,
            classifier_opt,
            generator_opt,
            dictionary,
            step: manifest.step,
            history: manifest.history,
            rng,
        })
    }
}
