use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auxiliary::{AdaptationLossConfig, KeySpec};
use crate::data::EpisodeConfig;
use crate::error::{Error, Result};
use crate::fairness::RegularizerKind;

/// Training method. The `feast_*` variants switch off parts of the full
/// method; `maml` and `m_maml` are the unregularized baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Feast,
    FeastNoMi,
    FeastNoSelect,
    FeastNoBoth,
    Maml,
    MMaml,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Feast,
        Variant::FeastNoMi,
        Variant::FeastNoSelect,
        Variant::FeastNoBoth,
        Variant::Maml,
        Variant::MMaml,
    ];

    pub const ABLATIONS: [Variant; 4] = [
        Variant::Feast,
        Variant::FeastNoMi,
        Variant::FeastNoSelect,
        Variant::FeastNoBoth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Feast => "feast",
            Variant::FeastNoMi => "feast_no_mi",
            Variant::FeastNoSelect => "feast_no_select",
            Variant::FeastNoBoth => "feast_no_both",
            Variant::Maml => "maml",
            Variant::MMaml => "m_maml",
        }
    }

    /// Uses a dictionary and auxiliary sets at all.
    pub fn uses_aux(self) -> bool {
        !matches!(self, Variant::Maml | Variant::MMaml)
    }

    /// Picks the auxiliary set with the generator rather than at random.
    pub fn uses_selection(self) -> bool {
        matches!(self, Variant::Feast | Variant::FeastNoMi)
    }

    pub fn uses_mi(self) -> bool {
        matches!(self, Variant::Feast | Variant::FeastNoSelect)
    }

    /// Zeroes the sensitive-attribute feature column before use.
    pub fn blinds_sensitive(self) -> bool {
        self == Variant::MMaml
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Parameters at which dictionary keys are computed when enqueuing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyParams {
    /// The meta-parameters after this step's update.
    #[default]
    Meta,
    /// The task-adapted parameters.
    Adapted,
}

impl FromStr for KeyParams {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "meta" => Ok(Self::Meta),
            "adapted" => Ok(Self::Adapted),
            other => Err(format!("unknown key-params `{other}` (expected meta or adapted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Inner-loop learning rate.
    pub alpha: f64,
    /// Classifier meta learning rate.
    pub beta1: f64,
    /// Generator learning rate.
    pub beta2: f64,
    /// Adaptation steps.
    pub tau: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub k_shot: usize,
    pub aux_size: usize,
    /// Meta-training steps.
    pub meta_steps: u64,
    /// Meta-test tasks.
    pub test_tasks: usize,
    pub query_size: usize,
    pub dict_capacity: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub variant: Variant,
    pub regularizer: RegularizerKind,
    pub key_params: KeyParams,
    /// Loss or gradient norm above which training aborts.
    pub divergence_threshold: f64,
}

impl TrainConfig {
    /// Defaults for a `k_shot`-shot run; the auxiliary set holds `2 * k_shot`.
    pub fn new(k_shot: usize) -> Self {
        Self {
            alpha: 0.01,
            beta1: 0.001,
            beta2: 0.001,
            tau: 10,
            gamma: 0.5,
            lambda: 1.0,
            k_shot,
            aux_size: 2 * k_shot,
            meta_steps: 500,
            test_tasks: 500,
            query_size: 10,
            dict_capacity: 64,
            weight_decay: 1e-4,
            seed: 0,
            variant: Variant::Feast,
            regularizer: RegularizerKind::Dp,
            key_params: KeyParams::Meta,
            divergence_threshold: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("divergence-threshold", self.divergence_threshold),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [("gamma", self.gamma), ("lambda", self.lambda), ("weight-decay", self.weight_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be >= 0, got {v}")));
            }
        }
        for (key, v, min) in [
            ("tau", self.tau, 1),
            ("k-shot", self.k_shot, 1),
            ("aux-size", self.aux_size, 1),
            ("query-size", self.query_size, 2),
            ("dict-capacity", self.dict_capacity, 1),
        ] {
            if v < min {
                return Err(Error::config(key, format!("must be >= {min}, got {v}")));
            }
        }
        Ok(())
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig::new(self.k_shot, self.query_size)
    }

    /// λ after the variant is applied (zero for the baselines).
    pub fn effective_lambda(&self) -> f64 {
        if self.variant.uses_aux() {
            self.lambda
        } else {
            0.0
        }
    }

    /// γ after the variant is applied (zero for the baselines).
    pub fn effective_gamma(&self) -> f64 {
        if self.variant.uses_aux() {
            self.gamma
        } else {
            0.0
        }
    }

    pub fn loss_config(&self) -> AdaptationLossConfig {
        AdaptationLossConfig {
            gamma: self.effective_gamma(),
            lambda: self.effective_lambda(),
            regularizer: self.regularizer,
            use_mi: self.variant.uses_mi(),
        }
    }

    pub fn key_spec(&self) -> KeySpec {
        KeySpec {
            aux_size: self.aux_size,
            lambda: self.effective_lambda(),
            regularizer: self.regularizer,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(5)
    }
}
