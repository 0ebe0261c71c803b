//! Meta-training loop, task adaptation, and the meta-test protocol.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{KeyParams, TrainConfig};
use crate::auxiliary::{
    fairness_adaptation_loss, init_dictionary, regularized_gradient, resize_rows,
    AdaptationLossConfig, CandidateDictionary,
};
use crate::data::{sample_episode, Batch, DatasetTable};
use crate::error::{Error, Result};
use crate::fairness::{delta_dp, delta_eo, GroupedScores, MetricsReport, TaskMetrics};
use crate::models::{
    generator_forward, ClassifierConfig, ClassifierParams, GeneratorConfig, GeneratorParams,
    ParamList,
};
use crate::tensor::{AdamState, Graph, ParamUpdater, Tensor};

/// Losses recorded for one meta-training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    /// `L_FA` on the query set at the adapted parameters.
    pub query_loss: f64,
    /// Generator regression loss; absent when the generator is unused or
    /// its target was not finite.
    pub estimation_loss: Option<f64>,
    /// Enqueue step of the auxiliary set used.
    pub aux_step: Option<u64>,
}

/// Everything needed to continue meta-training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub classifier: ClassifierParams,
    pub generator: GeneratorParams,
    pub classifier_opt: AdamState,
    pub generator_opt: AdamState,
    /// `None` for variants without auxiliary sets.
    pub dictionary: Option<CandidateDictionary>,
    /// Completed meta-training steps.
    pub step: u64,
    pub history: Vec<StepLog>,
    pub(crate) rng: ChaCha8Rng,
}

/// The table as a variant sees it: `m_maml` gets the sensitive feature
/// column zeroed.
pub fn prepare_table<'a>(table: &'a DatasetTable, config: &TrainConfig) -> Cow<'a, DatasetTable> {
    if config.variant.blinds_sensitive() && table.sensitive_feature().is_some() {
        let mut t = table.clone();
        t.zero_sensitive_feature();
        Cow::Owned(t)
    } else {
        Cow::Borrowed(table)
    }
}

/// Per-task RNG for evaluation; independent of the variant.
pub fn task_rng(seed: u64, task: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task as u64 + 1);
    rng
}

impl TrainState {
    /// Initializes parameters, optimizers and (for auxiliary variants) the
    /// dictionary from `config.seed`.
    pub fn new(config: TrainConfig, table: &DatasetTable, train_subsets: &[usize]) -> Result<Self> {
        config.validate()?;
        let table = prepare_table(table, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let classifier = ClassifierParams::init(ClassifierConfig::new(table.n_features()), &mut rng);
        let generator = GeneratorParams::init(
            GeneratorConfig::new(classifier.params.numel()),
            &mut rng,
        );
        let classifier_opt =
            AdamState::for_params(config.beta1, config.weight_decay, classifier.params.tensors());
        let generator_opt =
            AdamState::for_params(config.beta2, config.weight_decay, generator.params.tensors());
        let dictionary = if config.variant.uses_aux() {
            Some(init_dictionary(
                &table,
                train_subsets,
                &classifier,
                config.dict_capacity,
                config.k_shot,
                &config.key_spec(),
                &mut rng,
            )?)
        } else {
            None
        };
        Ok(Self {
            config,
            classifier,
            generator,
            classifier_opt,
            generator_opt,
            dictionary,
            step: 0,
            history: Vec::new(),
            rng,
        })
    }

    /// Runs meta-training steps until `self.step == until`. `on_step` sees
    /// each step's log. On divergence the state is left as it was before
    /// the failing step.
    pub fn run(
        &mut self,
        table: &DatasetTable,
        train_subsets: &[usize],
        until: u64,
        mut on_step: impl FnMut(&StepLog),
    ) -> Result<()> {
        let table = prepare_table(table, &self.config);
        while self.step < until {
            let log = self.step_prepared(&table, train_subsets)?;
            on_step(&log);
        }
        Ok(())
    }

    /// One meta-training step on a table already passed through
    /// [`prepare_table`]. Atomic: on error nothing is changed.
    pub fn step_prepared(&mut self, table: &DatasetTable, train_subsets: &[usize]) -> Result<StepLog> {
        let mut rng = self.rng.clone();
        let cfg = &self.config;
        let step = self.step;
        let loss_cfg = cfg.loss_config();

        let episode = sample_episode(table, train_subsets, &cfg.episode(), &mut rng)?;
        let support = table.batch(&episode.support);
        let query = table.batch(&episode.query);

        let embeddings = if cfg.variant.uses_selection() {
            Some(self.classifier.predict(&support.x)?.0)
        } else {
            None
        };
        let chosen = choose_aux(self, embeddings.as_ref(), &mut rng)?;
        let aux = chosen.as_ref().map(|(rows, _)| table.batch(rows));

        let adapted =
            adapt(&self.classifier, &support, aux.as_ref(), cfg).map_err(|e| diverged(step, e))?;
        let (query_loss, cls_grads) = fa_loss_grads(&adapted, &query, aux.as_ref(), &loss_cfg)
            .map_err(|e| diverged(step, e))?;
        check_divergence(step, "query loss", query_loss, &cls_grads, cfg.divergence_threshold)?;

        let gen_update = match &embeddings {
            Some(emb) => {
                match regularized_gradient(table, &episode.support, &adapted, loss_cfg.lambda, loss_cfg.regularizer) {
                    Ok(target) => {
                        let (le, grads) = generator_loss_grads(&self.generator, emb, &target)
                            .map_err(|e| diverged(step, e))?;
                        check_divergence(step, "estimation loss", le, &grads, cfg.divergence_threshold)?;
                        Some((le, grads))
                    }
                    Err(Error::NonFinite { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        };

        let mut classifier = self.classifier.clone();
        let mut classifier_opt = self.classifier_opt.clone();
        classifier_opt.step(classifier.params.tensors_mut(), &cls_grads)?;

        let candidate = if self.dictionary.is_some() {
            let key_at = match cfg.key_params {
                KeyParams::Meta => &classifier,
                KeyParams::Adapted => &adapted,
            };
            let spec = cfg.key_spec();
            let rows = resize_rows(table, &episode.support, spec.aux_size, &mut rng);
            let key = regularized_gradient(table, &rows, key_at, spec.lambda, spec.regularizer)
                .map_err(|e| diverged(step, e))?;
            Some((rows, key))
        } else {
            None
        };

        let estimation_loss = match gen_update {
            Some((le, grads)) => {
                self.generator_opt
                    .step(self.generator.params.tensors_mut(), &grads)?;
                Some(le)
            }
            None => None,
        };
        self.classifier = classifier;
        self.classifier_opt = classifier_opt;
        if let (Some(dict), Some((rows, key))) = (self.dictionary.as_mut(), candidate) {
            dict.push(rows, key)?;
        }
        self.rng = rng;
        self.step += 1;
        let log = StepLog {
            step: self.step,
            query_loss,
            estimation_loss,
            aux_step: chosen.map(|(_, s)| s),
        };
        self.history.push(log.clone());
        Ok(log)
    }

    /// The auxiliary rows this state would use for a support set, for
    /// inspection and examples. `None` for variants without auxiliary sets.
    pub fn auxiliary_for(&self, support: &Batch, rng: &mut impl Rng) -> Result<Option<Vec<usize>>> {
        let emb = if self.config.variant.uses_selection() {
            Some(self.classifier.predict(&support.x)?.0)
        } else {
            None
        };
        Ok(choose_aux(self, emb.as_ref(), rng)?.map(|(rows, _)| rows))
    }
}

fn diverged(step: u64, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } | Error::AdaptationDiverged { .. } => Error::TrainingDiverged {
            step,
            detail: e.to_string(),
        },
        other => other,
    }
}

fn check_divergence(step: u64, what: &str, loss: f64, grads: &[Tensor], threshold: f64) -> Result<()> {
    let norm = grads.iter().map(|g| g.norm().powi(2)).sum::<f64>().sqrt();
    if !loss.is_finite() || loss.abs() > threshold {
        return Err(Error::TrainingDiverged {
            step,
            detail: format!("{what} {loss:e} exceeds {threshold:e}"),
        });
    }
    if !norm.is_finite() || norm > threshold {
        return Err(Error::TrainingDiverged {
            step,
            detail: format!("{what} gradient norm {norm:e} exceeds {threshold:e}"),
        });
    }
    Ok(())
}

/// Generator-selected or random auxiliary set, with its enqueue step.
fn choose_aux(
    state: &TrainState,
    embeddings: Option<&Tensor>,
    rng: &mut impl Rng,
) -> Result<Option<(Vec<usize>, u64)>> {
    let Some(dict) = state.dictionary.as_ref() else {
        return Ok(None);
    };
    if dict.is_empty() {
        return Err(Error::Selection("candidate dictionary is empty".into()));
    }
    let set = match embeddings {
        Some(emb) => {
            let direction = state.generator.predict(emb)?;
            dict.select(direction.data())?
        }
        None => dict
            .get(rng.random_range(0..dict.len()))
            .expect("index below len"),
    };
    Ok(Some((set.rows.clone(), set.enqueue_step)))
}

/// Value and parameter gradients of the fairness adaptation loss.
pub fn fa_loss_grads(
    params: &ClassifierParams,
    batch: &Batch,
    aux: Option<&Batch>,
    cfg: &AdaptationLossConfig,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = params.register(&mut g);
    let loss = fairness_adaptation_loss(&mut g, &params.config, &vars, batch, aux, cfg)?;
    g.backward(loss.value)?;
    Ok((g.value(loss.value).item(), ParamList::grads(&g, &vars)?))
}

/// `tau` plain gradient steps with rate `alpha` on the fairness adaptation
/// loss of `support`, starting from a copy of `theta`.
pub fn adapt(
    theta: &ClassifierParams,
    support: &Batch,
    aux: Option<&Batch>,
    cfg: &TrainConfig,
) -> Result<ClassifierParams> {
    if cfg.tau == 0 {
        return Err(Error::config("tau", "must be >= 1"));
    }
    let loss_cfg = cfg.loss_config();
    let mut adapted = theta.clone();
    for t in 0..cfg.tau {
        let (loss, grads) = fa_loss_grads(&adapted, support, aux, &loss_cfg).map_err(|e| match e {
            Error::NonFinite { op } => Error::AdaptationDiverged {
                step: t,
                detail: format!("non-finite value in {op}"),
            },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::AdaptationDiverged {
                step: t,
                detail: format!("loss {loss}"),
            });
        }
        for (p, g) in adapted.params.tensors_mut().iter_mut().zip(&grads) {
            for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv -= cfg.alpha * gv;
            }
        }
    }
    Ok(adapted)
}

/// First-order meta-update: the gradient of the query loss at `adapted` is
/// applied to `theta`. Returns the query loss.
pub fn meta_update_classifier(
    theta: &mut ClassifierParams,
    adapted: &ClassifierParams,
    query: &Batch,
    aux: Option<&Batch>,
    cfg: &TrainConfig,
    updater: &mut dyn ParamUpdater,
) -> Result<f64> {
    let (loss, grads) = fa_loss_grads(adapted, query, aux, &cfg.loss_config())?;
    check_divergence(0, "query loss", loss, &grads, cfg.divergence_threshold)?;
    updater.apply(theta.params.tensors_mut(), &grads)?;
    Ok(loss)
}

/// `|g(S) - target|^2` and its gradients with respect to the generator.
pub fn generator_loss_grads(
    phi: &GeneratorParams,
    embeddings: &Tensor,
    target: &[f64],
) -> Result<(f64, Vec<Tensor>)> {
    if target.len() != phi.config.out_dim {
        return Err(Error::shape(
            "generator_loss",
            format!("target length {}, generator output {}", target.len(), phi.config.out_dim),
        ));
    }
    let mut g = Graph::new();
    let vars = phi.register(&mut g);
    let x = g.constant(embeddings.clone());
    let out = generator_forward(&mut g, &phi.config, &vars, x)?;
    let t = g.constant(Tensor::from_vec(1, target.len(), target.to_vec())?);
    let d = g.sub(out, t)?;
    let sq = g.square(d)?;
    let loss = g.sum(sq)?;
    g.backward(loss)?;
    Ok((g.value(loss).item(), ParamList::grads(&g, &vars)?))
}

/// One update of the generator toward `target`, the regularized-loss
/// gradient of the support set. Returns the loss before the update.
pub fn meta_update_generator(
    phi: &mut GeneratorParams,
    embeddings: &Tensor,
    target: &[f64],
    updater: &mut dyn ParamUpdater,
) -> Result<f64> {
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "generator target",
        });
    }
    let (loss, grads) = generator_loss_grads(phi, embeddings, target)?;
    updater.apply(phi.params.tensors_mut(), &grads)?;
    Ok(loss)
}

/// Initializes a state and meta-trains it for `config.meta_steps` steps.
pub fn train(config: TrainConfig, table: &DatasetTable, train_subsets: &[usize]) -> Result<TrainState> {
    let mut state = TrainState::new(config, table, train_subsets)?;
    let until = state.config.meta_steps;
    state.run(table, train_subsets, until, |_| {})?;
    Ok(state)
}

/// Meta-test: `config.test_tasks` tasks from `subsets`, each adapted from
/// the meta-parameters with a frozen dictionary. Task `i` draws from its own
/// RNG stream, so the task sequence is the same for every variant.
pub fn evaluate(state: &TrainState, table: &DatasetTable, subsets: &[usize]) -> Result<MetricsReport> {
    let table = prepare_table(table, &state.config);
    let table = table.as_ref();
    let tasks = (0..state.config.test_tasks)
        .into_par_iter()
        .map(|i| evaluate_task(state, table, subsets, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { tasks })
}

fn evaluate_task(
    state: &TrainState,
    table: &DatasetTable,
    subsets: &[usize],
    task_id: usize,
) -> Result<TaskMetrics> {
    let cfg = &state.config;
    let mut rng = task_rng(cfg.seed, task_id);
    let episode = sample_episode(table, subsets, &cfg.episode(), &mut rng)?;
    let support = table.batch(&episode.support);
    let query = table.batch(&episode.query);
    let aux = state
        .auxiliary_for(&support, &mut rng)?
        .map(|rows| table.batch(&rows));
    let adapted = adapt(&state.classifier, &support, aux.as_ref(), cfg)?;
    let (_, probs) = adapted.predict(&query.x)?;

    let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, 1)).collect();
    let correct = (0..probs.rows())
        .filter(|&r| usize::from(probs.get(r, 1) > probs.get(r, 0)) == query.labels[r])
        .count();
    let grouped = GroupedScores::new(&scores, &query.labels, &query.attrs)?;
    let dp = delta_dp(&grouped)?;
    let (eo, partial) = match delta_eo(&grouped) {
        Ok(gap) => (Some(gap.value), gap.partial),
        Err(Error::MetricUndefined(_)) => (None, true),
        Err(e) => return Err(e),
    };
    Ok(TaskMetrics {
        task_id,
        dp,
        eo,
        acc: correct as f64 / query.len() as f64,
        partial,
    })
}
