//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use feast::auxiliary::{
    fairness_adaptation_loss, mi_loss, AdaptationLossConfig, CandidateDictionary, MiSide,
};
use feast::data::{Batch, DatasetTable};
use feast::error::Result;
use feast::fairness::{delta_dp, delta_eo, regularized_loss, GroupedScores, RegularizerKind};
use feast::models::{
    classifier_forward, generator_forward, ClassifierConfig, ClassifierParams, GeneratorConfig,
    GeneratorParams,
};
use feast::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Finite differences

/// Denominator floor of [`rel_err`]. Central differences carry roundoff of
/// about `eps * |f| / h ~ 1e-11`, so a vanishing gradient needs a floor well
/// above that.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)` over a whole tensor.
pub fn rel_err(a: &Tensor, n: &Tensor) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(n.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / a.norm().max(n.norm()).max(REL_FLOOR)
}

fn weights_like(t: &Tensor, seed: u64) -> Tensor {
    Tensor::uniform(t.rows(), t.cols(), 1.0, &mut rng(seed))
}

/// Largest per-leaf relative error between the graph gradient and central
/// differences of `build`. Non-scalar outputs are reduced with fixed random
/// weights so the whole Jacobian is exercised.
pub fn fd_check<F>(leaves: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    fd_check_with(leaves, FD_STEP, build).0
}

/// [`fd_check`] with an explicit step; also returns the largest analytic
/// gradient norm.
pub fn fd_check_with<F>(leaves: &[Tensor], h: f64, build: F) -> (f64, f64)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut probe = Graph::new();
    let pv: Vec<Var> = leaves.iter().map(|t| probe.constant(t.clone())).collect();
    let out = build(&mut probe, &pv).expect("forward");
    let w = weights_like(probe.value(out), 7);

    let eval = |g: &mut Graph, vars: &[Var]| -> Var {
        let o = build(g, vars).expect("forward");
        let wc = g.constant(w.clone());
        let m = g.mul(o, wc).expect("weight");
        g.sum(m).expect("sum")
    };
    let value_at = |ls: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ls.iter().map(|t| g.constant(t.clone())).collect();
        let o = eval(&mut g, &vars);
        g.value(o).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.param(t.clone())).collect();
    let loss = eval(&mut g, &vars);
    g.backward(loss).expect("backward");

    let mut worst: f64 = 0.0;
    let mut largest: f64 = 0.0;
    let mut work = leaves.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).expect("grad");
        let mut numeric = Tensor::zeros(leaves[k].rows(), leaves[k].cols());
        for i in 0..leaves[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = value_at(&work);
            work[k].data_mut()[i] = orig - h;
            let down = value_at(&work);
            work[k].data_mut()[i] = orig;
            numeric.data_mut()[i] = (up - down) / (2.0 * h);
        }
        largest = largest.max(analytic.norm());
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    (worst, largest)
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel: f64,
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Entries with magnitude in `[0.1, 1)` and random sign, away from kinks.
fn away_from_zero(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = r.random_range(0.1..1.0);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn dim(r: &mut ChaCha8Rng) -> usize {
    r.random_range(1..=4)
}

type Case = Box<dyn Fn(&mut ChaCha8Rng) -> f64>;

fn op_cases() -> Vec<(&'static str, Case)> {
    fn unary(
        f: fn(&mut Graph, Var) -> Result<Var>,
        gen: fn(usize, usize, &mut ChaCha8Rng) -> Tensor,
    ) -> Case {
        Box::new(move |r| {
            let (m, n) = (dim(r), dim(r));
            fd_check(&[gen(m, n, r)], |g, v| f(g, v[0]))
        })
    }
    fn binary(f: fn(&mut Graph, Var, Var) -> Result<Var>, positive_rhs: bool) -> Case {
        Box::new(move |r| {
            let (m, n) = (dim(r), dim(r));
            let a = Tensor::uniform(m, n, 1.0, r);
            let b = if positive_rhs {
                uniform(m, n, 0.5, 2.0, r)
            } else {
                Tensor::uniform(m, n, 1.0, r)
            };
            fd_check(&[a, b], |g, v| f(g, v[0], v[1]))
        })
    }
    fn row_op(f: fn(&mut Graph, Var, Var) -> Result<Var>, positive_row: bool) -> Case {
        Box::new(move |r| {
            let (m, n) = (dim(r), dim(r));
            let a = Tensor::uniform(m, n, 1.0, r);
            let b = if positive_row {
                uniform(1, n, 0.5, 2.0, r)
            } else {
                Tensor::uniform(1, n, 1.0, r)
            };
            fd_check(&[a, b], |g, v| f(g, v[0], v[1]))
        })
    }
    let sym = |m: usize, n: usize, r: &mut ChaCha8Rng| Tensor::uniform(m, n, 1.0, r);
    let pos = |m: usize, n: usize, r: &mut ChaCha8Rng| uniform(m, n, 0.5, 2.0, r);
    vec![
        (
            "matmul",
            Box::new(|r: &mut ChaCha8Rng| {
                let (m, k, n) = (dim(r), dim(r), dim(r));
                let a = Tensor::uniform(m, k, 1.0, r);
                let b = Tensor::uniform(k, n, 1.0, r);
                fd_check(&[a, b], |g, v| g.matmul(v[0], v[1]))
            }) as Case,
        ),
        ("transpose", unary(|g, a| g.transpose(a), sym)),
        ("add", binary(|g, a, b| g.add(a, b), false)),
        ("sub", binary(|g, a, b| g.sub(a, b), false)),
        ("mul", binary(|g, a, b| g.mul(a, b), false)),
        ("div", binary(|g, a, b| g.div(a, b), true)),
        ("add_bias", row_op(|g, a, b| g.add_bias(a, b), false)),
        ("mul_row", row_op(|g, a, b| g.mul_row(a, b), false)),
        ("div_row", row_op(|g, a, b| g.div_row(a, b), true)),
        ("scale", unary(|g, a| g.scale(a, -1.7), sym)),
        ("add_scalar", unary(|g, a| g.add_scalar(a, 0.3), sym)),
        ("relu", unary(|g, a| g.relu(a), away_from_zero)),
        ("square", unary(|g, a| g.square(a), sym)),
        ("exp", unary(|g, a| g.exp(a), sym)),
        ("log", unary(|g, a| g.log(a), pos)),
        ("sum", unary(|g, a| g.sum(a), sym)),
        ("mean", unary(|g, a| g.mean(a), sym)),
        ("sum_rows", unary(|g, a| g.sum_rows(a), sym)),
        ("mean_rows", unary(|g, a| g.mean_rows(a), sym)),
        ("l2_normalize_rows", unary(|g, a| g.l2_normalize_rows(a), away_from_zero)),
        ("l2_normalize_rows_eps", unary(|g, a| g.l2_normalize_rows_eps(a, 1e-3), sym)),
        ("softmax_rows", unary(|g, a| g.softmax_rows(a), sym)),
        ("log_softmax_rows", unary(|g, a| g.log_softmax_rows(a), sym)),
        (
            "layer_norm_rows",
            Box::new(|r: &mut ChaCha8Rng| {
                let (m, n) = (dim(r), r.random_range(2..=5));
                fd_check(&[Tensor::uniform(m, n, 1.0, r)], |g, v| g.layer_norm_rows(v[0], 1e-5))
            }),
        ),
        (
            "cross_entropy",
            Box::new(|r: &mut ChaCha8Rng| {
                let (m, n) = (dim(r), r.random_range(2..=4));
                let p = uniform(m, n, 0.1, 1.0, r);
                let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..n)).collect();
                fd_check(&[p], move |g, v| g.cross_entropy(v[0], &labels))
            }),
        ),
        ("mse", binary(|g, a, b| g.mse(a, b), false)),
        (
            "select_rows",
            Box::new(|r: &mut ChaCha8Rng| {
                let (m, n) = (dim(r), dim(r));
                let idx: Vec<usize> = (0..r.random_range(1..=5)).map(|_| r.random_range(0..m)).collect();
                fd_check(&[Tensor::uniform(m, n, 1.0, r)], move |g, v| g.select_rows(v[0], &idx))
            }),
        ),
        (
            "select_cols",
            Box::new(|r: &mut ChaCha8Rng| {
                let (m, n) = (dim(r), dim(r));
                let idx: Vec<usize> = (0..r.random_range(1..=5)).map(|_| r.random_range(0..n)).collect();
                fd_check(&[Tensor::uniform(m, n, 1.0, r)], move |g, v| g.select_cols(v[0], &idx))
            }),
        ),
    ]
}

/// A tiny classifier so finite differences stay cheap.
pub fn small_classifier(n_features: usize, r: &mut ChaCha8Rng) -> ClassifierParams {
    let cfg = ClassifierConfig {
        n_features,
        hidden: 5,
        embed: 4,
        classes: 2,
    };
    ClassifierParams::init(cfg, r)
}

/// True when every ReLU pre-activation is at least `margin` from zero and
/// every embedding-layer row has norm at least `margin`, so that central
/// differences never straddle a kink.
pub fn classifier_is_smooth(p: &ClassifierParams, x: &Tensor, margin: f64) -> bool {
    let t = p.params.tensors();
    let layer = |input: &Tensor, w: &Tensor, b: &Tensor| -> Tensor {
        let mut z = input.matmul(w).unwrap();
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                let v = z.get(i, j) + b.get(0, j);
                z.set(i, j, v);
            }
        }
        z
    };
    let relu_ok = |z: &Tensor| z.data().iter().all(|v| v.abs() >= margin);
    let relu = |z: &Tensor| {
        let mut out = z.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        out
    };
    let z1 = layer(x, &t[0], &t[1]);
    if !relu_ok(&z1) {
        return false;
    }
    let z2 = layer(&relu(&z1), &t[2], &t[3]);
    if !relu_ok(&z2) {
        return false;
    }
    let h = relu(&z2);
    (0..h.rows()).all(|i| h.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() >= margin)
}

/// A classifier and batches on which the forward pass is smooth.
pub fn smooth_setup(
    sizes: &[usize],
    r: &mut ChaCha8Rng,
) -> (ClassifierParams, Vec<Batch>) {
    loop {
        let n = r.random_range(2..=4);
        let p = small_classifier(n, r);
        let batches: Vec<Batch> = sizes.iter().map(|&m| random_batch(m, n, r)).collect();
        if batches.iter().all(|b| classifier_is_smooth(&p, &b.x, 1e-3)) {
            return (p, batches);
        }
    }
}

/// A random batch with both sensitive groups and both labels present.
pub fn random_batch(m: usize, n_features: usize, r: &mut ChaCha8Rng) -> Batch {
    assert!(m >= 2);
    let mut attrs: Vec<u8> = (0..m).map(|_| r.random_range(0..2u8)).collect();
    attrs[0] = 0;
    attrs[1] = 1;
    let mut labels: Vec<usize> = (0..m).map(|_| r.random_range(0..2usize)).collect();
    labels[0] = r.random_range(0..2);
    labels[1] = 1 - labels[0];
    Batch {
        rows: (0..m).collect(),
        x: Tensor::uniform(m, n_features, 1.5, r),
        labels,
        attrs,
    }
}

fn composite_cases() -> Vec<(&'static str, Case)> {
    fn reg(kind: RegularizerKind) -> Case {
        Box::new(move |r| {
            let m = r.random_range(2..=6);
            let (p, mut bs) = smooth_setup(&[m], r);
            let b = bs.remove(0);
            let lambda = r.random_range(0.1..2.0);
            let cfg = p.config;
            fd_check(p.params.tensors(), move |g, v| {
                Ok(regularized_loss(g, &cfg, v, &b, lambda, kind)?.value)
            })
        })
    }
    vec![
        ("L_R dp", reg(RegularizerKind::Dp)),
        ("L_R eo", reg(RegularizerKind::Eo)),
        (
            "L_MI embeddings+probs",
            Box::new(|r: &mut ChaCha8Rng| {
                let inst = MiInstance::random(r);
                let (sl, sa, al, aa) = (
                    inst.s_labels.clone(),
                    inst.s_attrs.clone(),
                    inst.a_labels.clone(),
                    inst.a_attrs.clone(),
                );
                let leaves = [
                    inst.s_emb.clone(),
                    inst.s_probs.clone(),
                    inst.a_emb.clone(),
                    inst.a_probs.clone(),
                ];
                fd_check(&leaves, move |g, v| {
                    Ok(mi_loss(
                        g,
                        MiSide { embeddings: v[0], probs: v[1], labels: &sl, attrs: &sa },
                        MiSide { embeddings: v[2], probs: v[3], labels: &al, attrs: &aa },
                    )?
                    .value)
                })
            }),
        ),
        (
            "L_MI through classifier",
            Box::new(|r: &mut ChaCha8Rng| {
                let sizes = [r.random_range(2..=6), r.random_range(2..=6)];
                let (p, mut bs) = smooth_setup(&sizes, r);
                let (a, s) = (bs.pop().unwrap(), bs.pop().unwrap());
                let cfg = p.config;
                fd_check(p.params.tensors(), move |g, v| {
                    let xs = g.constant(s.x.clone());
                    let xa = g.constant(a.x.clone());
                    let os = classifier_forward(g, &cfg, v, xs)?;
                    let oa = classifier_forward(g, &cfg, v, xa)?;
                    Ok(mi_loss(
                        g,
                        MiSide { embeddings: os.embeddings, probs: os.probs, labels: &s.labels, attrs: &s.attrs },
                        MiSide { embeddings: oa.embeddings, probs: oa.probs, labels: &a.labels, attrs: &a.attrs },
                    )?
                    .value)
                })
            }),
        ),
        (
            "L_FA",
            Box::new(|r: &mut ChaCha8Rng| {
                let sizes = [r.random_range(2..=6), r.random_range(2..=6)];
                let (p, mut bs) = smooth_setup(&sizes, r);
                let (a, s) = (bs.pop().unwrap(), bs.pop().unwrap());
                let lc = AdaptationLossConfig {
                    gamma: r.random_range(0.1..1.0),
                    lambda: r.random_range(0.1..2.0),
                    regularizer: if r.random_bool(0.5) { RegularizerKind::Dp } else { RegularizerKind::Eo },
                    use_mi: true,
                };
                let cfg = p.config;
                fd_check(p.params.tensors(), move |g, v| {
                    Ok(fairness_adaptation_loss(g, &cfg, v, &s, Some(&a), &lc)?.value)
                })
            }),
        ),
        (
            "L_E",
            Box::new(|r: &mut ChaCha8Rng| {
                let cfg = GeneratorConfig {
                    d_model: 4,
                    ff_hidden: 5,
                    head_hidden: 6,
                    out_dim: 7,
                };
                let phi = GeneratorParams::init(cfg, r);
                let emb = Tensor::uniform(r.random_range(1..=5), 4, 1.0, r);
                let target = Tensor::uniform(1, 7, 1.0, r);
                fd_check(phi.params.tensors(), move |g, v| {
                    let x = g.constant(emb.clone());
                    let out = generator_forward(g, &cfg, v, x)?;
                    let t = g.constant(target.clone());
                    let d = g.sub(out, t)?;
                    let sq = g.square(d)?;
                    g.sum(sq)
                })
            }),
        ),
    ]
}

/// Runs `instances` random finite-difference checks of every operation and
/// every composite loss.
pub fn gradcheck_suite(instances: usize) -> Vec<FdReport> {
    let mut out = Vec::new();
    for (i, (name, case)) in op_cases().into_iter().chain(composite_cases()).enumerate() {
        let mut r = rng(1000 + i as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            worst = worst.max(case(&mut r));
        }
        out.push(FdReport {
            name,
            instances,
            max_rel: worst,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// MI oracle

#[derive(Debug, Clone)]
pub struct MiInstance {
    pub s_emb: Tensor,
    pub s_probs: Tensor,
    pub s_labels: Vec<usize>,
    pub s_attrs: Vec<u8>,
    pub a_emb: Tensor,
    pub a_probs: Tensor,
    pub a_labels: Vec<usize>,
    pub a_attrs: Vec<u8>,
}

fn unit_rows(m: usize, d: usize, r: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::uniform(m, d, 1.0, r);
    for i in 0..m {
        let n = t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        for j in 0..d {
            let v = t.get(i, j) / n;
            t.set(i, j, v);
        }
    }
    t
}

fn prob_rows(m: usize, r: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(m, 2);
    for i in 0..m {
        let p = r.random_range(0.05..0.95);
        t.set(i, 0, 1.0 - p);
        t.set(i, 1, p);
    }
    t
}

impl MiInstance {
    /// `|S|, |A| <= 6`; attributes drawn with a random bias so that
    /// imbalanced and single-group sets occur.
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let d = r.random_range(2..=5);
        let (ms, ma) = (r.random_range(1..=6), r.random_range(1..=6));
        let bias_s = r.random_range(0.0..1.0);
        let bias_a = r.random_range(0.0..1.0);
        Self {
            s_emb: unit_rows(ms, d, r),
            s_probs: prob_rows(ms, r),
            s_labels: (0..ms).map(|_| r.random_range(0..2)).collect(),
            s_attrs: (0..ms).map(|_| u8::from(r.random_bool(bias_s))).collect(),
            a_emb: unit_rows(ma, d, r),
            a_probs: prob_rows(ma, r),
            a_labels: (0..ma).map(|_| r.random_range(0..2)).collect(),
            a_attrs: (0..ma).map(|_| u8::from(r.random_bool(bias_a))).collect(),
        }
    }

    pub fn has_matching_pair(&self) -> bool {
        self.s_attrs.iter().any(|a| self.a_attrs.contains(a))
    }

    pub fn graph_value(&self) -> (f64, bool) {
        let mut g = Graph::new();
        let se = g.param(self.s_emb.clone());
        let sp = g.param(self.s_probs.clone());
        let ae = g.param(self.a_emb.clone());
        let ap = g.param(self.a_probs.clone());
        let m = mi_loss(
            &mut g,
            MiSide { embeddings: se, probs: sp, labels: &self.s_labels, attrs: &self.s_attrs },
            MiSide { embeddings: ae, probs: ap, labels: &self.a_labels, attrs: &self.a_attrs },
        )
        .unwrap();
        (g.value(m.value).item(), m.degenerate)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Straight transcription of the loss: for every auxiliary sample j and
/// every support sample i sharing its attribute,
/// `-w_ij * (2 x_i.x_j - ln sum_k exp(2 x_i.x_k))` with k over the
/// auxiliary samples of that attribute and
/// `w_ij = p_i(y_j) / sum_{i'} p_i'(y_j)`; the total is divided by `|A|`.
pub fn mi_brute_force(inst: &MiInstance) -> f64 {
    let n_s = inst.s_attrs.len();
    let n_a = inst.a_attrs.len();
    let mut total = 0.0;
    for j in 0..n_a {
        let a = inst.a_attrs[j];
        let yj = inst.a_labels[j];
        let mut w_norm = 0.0;
        for i in 0..n_s {
            if inst.s_attrs[i] == a {
                w_norm += inst.s_probs.get(i, yj);
            }
        }
        for i in 0..n_s {
            if inst.s_attrs[i] != a {
                continue;
            }
            let w = inst.s_probs.get(i, yj) / w_norm;
            let xi = inst.s_emb.row(i);
            let mut z = 0.0;
            for k in 0..n_a {
                if inst.a_attrs[k] == a {
                    z += (2.0 * dot(xi, inst.a_emb.row(k))).exp();
                }
            }
            total += -w * (2.0 * dot(xi, inst.a_emb.row(j)) - z.ln());
        }
    }
    total / n_a as f64
}

// ---------------------------------------------------------------------------
// Metric fixtures

pub struct MetricFixture {
    pub name: &'static str,
    pub scores: Vec<f64>,
    pub labels: Vec<usize>,
    pub attrs: Vec<u8>,
    /// `None` means the metric is undefined.
    pub dp: Option<f64>,
    pub eo: Option<f64>,
    pub partial: bool,
}

/// Hand-computed cases. All values are dyadic so the expected results are
/// exact in binary floating point.
pub fn metric_fixtures() -> Vec<MetricFixture> {
    let f = |name, scores: &[f64], labels: &[usize], attrs: &[u8], dp, eo, partial| MetricFixture {
        name,
        scores: scores.to_vec(),
        labels: labels.to_vec(),
        attrs: attrs.to_vec(),
        dp,
        eo,
        partial,
    };
    vec![
        f("maximal disparity", &[1.0, 1.0, 0.0, 0.0], &[0, 1, 0, 1], &[0, 0, 1, 1], Some(1.0), Some(2.0), false),
        f("identical groups", &[0.25, 0.75, 0.25, 0.75], &[0, 1, 0, 1], &[0, 0, 1, 1], Some(0.0), Some(0.0), false),
        f("constant predictor", &[0.5; 6], &[0, 1, 1, 0, 1, 0], &[0, 0, 0, 1, 1, 1], Some(0.0), Some(0.0), false),
        f("unequal group sizes", &[0.5, 1.0, 0.25], &[0, 1, 0], &[0, 0, 1], Some(0.5), Some(0.25), true),
        f("opposite per-label gaps", &[0.75, 0.25, 0.25, 0.75], &[0, 1, 0, 1], &[0, 0, 1, 1], Some(0.0), Some(1.0), false),
        f("gap on one label", &[0.75, 0.25, 0.5, 0.5], &[1, 1, 0, 0], &[0, 1, 0, 1], Some(0.25), Some(0.5), false),
        f("missing positive cell", &[0.5, 0.75, 0.25], &[0, 1, 0], &[0, 0, 1], Some(0.375), Some(0.25), true),
        f("no shared label", &[0.75, 0.25], &[0, 1], &[0, 1], Some(0.5), None, true),
        f("single group", &[0.75, 0.25], &[0, 1], &[1, 1], None, None, false),
        f("equal groups, unequal cells", &[0.5, 1.0, 0.125, 0.375, 0.25, 0.75], &[1, 1, 0, 0, 1, 0], &[0, 0, 0, 0, 1, 1], Some(0.0), Some(1.0), false),
        f("group one higher", &[0.0, 0.25, 1.0, 0.75], &[0, 1, 0, 1], &[0, 0, 1, 1], Some(0.75), Some(1.5), false),
    ]
}

/// Checks one fixture, returning a description of the first mismatch.
pub fn check_fixture(fx: &MetricFixture) -> std::result::Result<(), String> {
    let g = GroupedScores::new(&fx.scores, &fx.labels, &fx.attrs).map_err(|e| e.to_string())?;
    match (fx.dp, delta_dp(&g)) {
        (Some(want), Ok(got)) if got == want => {}
        (None, Err(_)) => {}
        (want, got) => return Err(format!("{}: dp expected {want:?}, got {got:?}", fx.name)),
    }
    match (fx.eo, delta_eo(&g)) {
        (Some(want), Ok(gap)) if gap.value == want && gap.partial == fx.partial => {}
        (None, Err(_)) => {}
        (want, got) => return Err(format!("{}: eo expected {want:?}/{}, got {got:?}", fx.name, fx.partial)),
    }
    let sw = g.swapped();
    if delta_dp(&sw).ok() != delta_dp(&g).ok() {
        return Err(format!("{}: dp not symmetric", fx.name));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dictionary model check

#[derive(Debug, Clone)]
pub enum DictOp {
    Push { key: Vec<f64> },
    Select { query: Vec<f64> },
}

/// Applies `ops` to a dictionary and to a plain reference list, checking
/// capacity, eviction order, nearest-key selection with older-wins ties,
/// and that every stored key retrieves its own set when keys are distinct.
pub fn check_dictionary_ops(capacity: usize, ops: &[DictOp]) -> std::result::Result<(), String> {
    let mut dict = CandidateDictionary::new(capacity).map_err(|e| e.to_string())?;
    let mut model: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut step = 0u64;
    for (n, op) in ops.iter().enumerate() {
        match op {
            DictOp::Push { key } => {
                let evicted = dict.push(vec![n], key.clone()).map_err(|e| e.to_string())?;
                model.push((step, key.clone()));
                step += 1;
                let expected = (model.len() > capacity).then(|| model.remove(0));
                match (evicted, expected) {
                    (None, None) => {}
                    (Some(e), Some((s, _))) if e.enqueue_step == s => {}
                    (e, x) => return Err(format!("op {n}: evicted {e:?}, expected {x:?}")),
                }
                if dict.len() > capacity {
                    return Err(format!("op {n}: size {} over capacity", dict.len()));
                }
                let own = dict.select(key).map_err(|e| e.to_string())?;
                let dup_older = model
                    .iter()
                    .any(|(s, k)| k == key && *s < step - 1);
                if !dup_older && own.enqueue_step != step - 1 {
                    return Err(format!("op {n}: enqueue then select returned another set"));
                }
            }
            DictOp::Select { query } => {
                let got = dict.select(query);
                let mut best: Option<(f64, u64)> = None;
                for (s, k) in &model {
                    let d: f64 = k.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, *s));
                    }
                }
                match (got, best) {
                    (Err(_), None) => {}
                    (Ok(set), Some((_, s))) if set.enqueue_step == s => {}
                    (g, b) => return Err(format!("op {n}: selected {:?}, expected {b:?}", g.map(|s| s.enqueue_step))),
                }
            }
        }
        let steps: Vec<u64> = dict.iter().map(|s| s.enqueue_step).collect();
        let model_steps: Vec<u64> = model.iter().map(|(s, _)| *s).collect();
        if steps != model_steps {
            return Err(format!("op {n}: queue order {steps:?} != {model_steps:?}"));
        }
    }
    let distinct = model
        .iter()
        .enumerate()
        .all(|(i, (_, a))| model[i + 1..].iter().all(|(_, b)| a != b));
    if distinct {
        for (s, k) in &model {
            if dict.select(k).map(|x| x.enqueue_step).ok() != Some(*s) {
                return Err(format!("stored key of step {s} does not retrieve its set"));
            }
        }
    }
    Ok(())
}

/// Random operations over a small integer key lattice so ties happen.
pub fn random_dict_ops(n: usize, dim: usize, r: &mut ChaCha8Rng) -> Vec<DictOp> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| r.random_range(-3..=3) as f64).collect();
            if r.random_bool(0.6) {
                DictOp::Push { key: v }
            } else {
                DictOp::Select { query: v }
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Small tables

/// A table with `n_subsets` subsets of `per_subset` rows. Labels and
/// attributes are balanced within every subset; features are random.
pub fn toy_table(n_subsets: usize, per_subset: usize, n_features: usize, seed: u64) -> DatasetTable {
    let mut r = rng(seed);
    let n = n_subsets * per_subset;
    let features = Tensor::uniform(n, n_features, 1.0, &mut r);
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let sensitive: Vec<u8> = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
    let subset_ids: Vec<usize> = (0..n).map(|i| i / per_subset).collect();
    let names: Vec<String> = (0..n_subsets).map(|s| format!("t{s:02}")).collect();
    let feature_names: Vec<String> = (0..n_features).map(|j| format!("f{j}")).collect();
    DatasetTable::new(features, labels, sensitive, subset_ids, names, feature_names, None).unwrap()
}

/// A standardized synthetic table and its default split.
pub fn synth_setup(n_samples: usize, n_subsets: usize, seed: u64) -> (DatasetTable, feast::data::SplitSpec) {
    let spec = feast::data::SynthSpec {
        n_samples,
        n_subsets,
        seed,
        ..Default::default()
    };
    let mut table = feast::data::make_synthetic(&spec).unwrap().table;
    let split = feast::data::SplitSpec::default_for(n_subsets, seed).unwrap();
    table.standardize(&split.train).unwrap();
    (table, split)
}
