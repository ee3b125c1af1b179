//! Finite-difference gradient checks on micro models.
//!
//! Every case compares the tape's analytic gradient of a scalar loss with
//! central differences in 64-bit arithmetic, elementwise, using
//! `|a - n| / max(|a|, |n|, 1e-6)` as the relative error.

use std::fmt;

use crate::error::Result;
use crate::gan::{Discriminator, GenActivation, Generator};
use crate::graph::{Graph, Var};
use crate::layers::{Dense, DenseVars, LstmVars, LstmWeights};
use crate::rng::RngStream;
use crate::seq2seq::{
    encode_graph, training_loss, DropoutRates, Seq2SeqParams, Seq2SeqVars, Train,
};
use crate::tensor::Tensor;
use crate::text::PaddedBatch;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub seeds: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-3,
            seeds: 20,
        }
    }
}

pub const GROUPS: [&str; 9] = [
    "embedding",
    "dense",
    "lstm_cell",
    "bidirectional_encoder",
    "logits_softmax_ce",
    "bce_head",
    "seq2seq",
    "discriminator",
    "generator",
];

/// Outcome for one parameter group over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub group: &'static str,
    pub max_rel_error: f64,
    /// Tensor and seed where the largest error occurred.
    pub worst: String,
    pub elements: usize,
    pub passed: bool,
}

impl fmt::Display for GroupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} max_rel_err {:.3e}  elements {:>6}  worst {:<28} {}",
            self.group,
            self.max_rel_error,
            self.elements,
            self.worst,
            if self.passed { "ok" } else { "FAIL" }
        )
    }
}

/// Hook applied to each analytic gradient before comparison.
pub type Perturb<'a> = &'a dyn Fn(&str, &mut [f64]);

type LossFn = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

struct Case {
    params: Vec<(String, Tensor<f64>)>,
    loss: LossFn,
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn eval(case: &Case, params: &[(String, Tensor<f64>)]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| g.input(t.clone())).collect();
    let l = (case.loss)(&mut g, &vars)?;
    Ok(g.scalar(l))
}

/// Largest relative error of one case, with the tensor it came from.
fn check_case(
    case: &Case,
    cfg: &GradCheckConfig,
    group: &str,
    perturb: Option<Perturb<'_>>,
) -> Result<(f64, String, usize)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = case.params.iter().map(|(_, t)| g.param(t)).collect();
    let loss = (case.loss)(&mut g, &vars)?;
    g.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&case.params)
        .map(|(&v, (_, t))| {
            g.grad(v)
                .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();
    if let Some(p) = perturb {
        for a in &mut analytic {
            p(group, a);
        }
    }
    let mut params = case.params.clone();
    let (mut worst, mut worst_name, mut count) = (0.0f64, String::new(), 0usize);
    for k in 0..params.len() {
        for i in 0..params[k].1.len() {
            let orig = params[k].1.data()[i];
            params[k].1.data_mut()[i] = orig + cfg.step;
            let up = eval(case, &params)?;
            params[k].1.data_mut()[i] = orig - cfg.step;
            let down = eval(case, &params)?;
            params[k].1.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let err = rel_error(analytic[k][i], numeric);
            if err > worst || err.is_nan() {
                worst = if err.is_nan() { f64::INFINITY } else { err };
                worst_name = params[k].0.clone();
            }
            count += 1;
        }
    }
    Ok((worst, worst_name, count))
}

fn uniform(shape: &[usize], scale: f64, rng: &mut RngStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform(-scale, scale))
}

fn ids(rows: usize, t: usize, max: u32, rng: &mut RngStream) -> PaddedBatch {
    let rows: Vec<Vec<u32>> = (0..rows)
        .map(|_| {
            let len = 1 + rng.below(t);
            (0..len)
                .map(|_| 1 + rng.below(max as usize) as u32)
                .collect()
        })
        .collect();
    PaddedBatch::from_rows(&rows, t).expect("lengths within t")
}

/// `sum(tanh(x) * r)`: a smooth scalar readout with a non-trivial gradient.
fn readout(g: &mut Graph<f64>, x: Var, r: &Tensor<f64>) -> Result<Var> {
    let t = g.tanh(x);
    let rv = g.input(r.clone());
    let m = g.mul(t, rv)?;
    Ok(g.sum(m))
}

fn named(ts: Vec<(&str, &Tensor<f64>)>) -> Vec<(String, Tensor<f64>)> {
    ts.into_iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect()
}

fn dense_vars(v: &[Var]) -> DenseVars {
    DenseVars {
        kernel: v[0],
        bias: v[1],
    }
}

fn lstm_vars(v: &[Var], hidden: usize) -> LstmVars {
    LstmVars {
        kernel: v[0],
        recurrent: v[1],
        bias: v[2],
        hidden,
    }
}

fn seq2seq_vars(v: &[Var], hidden: usize) -> Seq2SeqVars {
    Seq2SeqVars {
        embedding: v[0],
        encoder_fwd: lstm_vars(&v[1..4], hidden),
        encoder_bwd: lstm_vars(&v[4..7], hidden),
        decoder: lstm_vars(&v[7..10], hidden),
        logits: dense_vars(&v[10..12]),
    }
}

fn with_bias_noise(mut d: Dense<f64>, rng: &mut RngStream) -> Dense<f64> {
    d.bias = uniform(d.bias.shape(), 0.3, rng);
    d
}

fn lstm_with_bias(input: usize, hidden: usize, rng: &mut RngStream) -> LstmWeights<f64> {
    let mut w = LstmWeights::new(input, hidden, rng);
    w.bias = uniform(&[4 * hidden], 0.3, rng);
    w
}

/// Smallest |pre-activation| over a stack of rectified layers.
fn relu_margin(layers: &[&Dense<f64>], x: &Tensor<f64>) -> f64 {
    let mut x = x.clone();
    let mut margin = f64::INFINITY;
    for d in layers {
        let mut z = x.matmul(&d.kernel).expect("micro shapes agree");
        let n = d.outputs();
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v += d.bias.data()[i % n];
            margin = margin.min(v.abs());
        }
        x = z.map(|v| v.max(0.0));
    }
    margin
}

const KINK_MARGIN: f64 = 1e-3;

// Micro dimensions.
const V: usize = 6;
const E: usize = 4;
const H: usize = 3;
const T: usize = 3;
const B: usize = 2;

fn build(group: &str, seed: u64) -> Case {
    let mut rng = RngStream::new(seed).substream(group);
    match group {
        "embedding" => {
            let table = uniform(&[V + 2, E], 0.5, &mut rng);
            let batch = ids(B, T, V as u32 + 1, &mut rng);
            let r = uniform(&[B, E], 1.0, &mut rng);
            Case {
                params: vec![("embedding".into(), table)],
                loss: Box::new(move |g, v| {
                    let mut acc = None;
                    for t in 0..batch.t_max() {
                        let x = g.gather(v[0], &batch.column(t))?;
                        let l = readout(g, x, &r)?;
                        acc = Some(match acc {
                            None => l,
                            Some(a) => g.add(a, l)?,
                        });
                    }
                    Ok(acc.expect("t_max >= 1"))
                }),
            }
        }
        "dense" => {
            let d = with_bias_noise(Dense::new(E, H, &mut rng), &mut rng);
            let x = uniform(&[B, E], 1.0, &mut rng);
            let r = uniform(&[B, H], 1.0, &mut rng);
            let mut params = named(vec![("dense/kernel", &d.kernel), ("dense/bias", &d.bias)]);
            params.push(("input".into(), x));
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let y = dense_vars(v).forward(g, v[2])?;
                    readout(g, y, &r)
                }),
            }
        }
        "lstm_cell" => {
            let w = lstm_with_bias(E, H, &mut rng);
            let x = uniform(&[B, E], 1.0, &mut rng);
            let h0 = uniform(&[B, H], 0.8, &mut rng);
            let c0 = uniform(&[B, H], 0.8, &mut rng);
            let (r1, r2) = (
                uniform(&[B, H], 1.0, &mut rng),
                uniform(&[B, H], 1.0, &mut rng),
            );
            let mut params = named(vec![
                ("lstm/kernel", &w.kernel),
                ("lstm/recurrent", &w.recurrent),
                ("lstm/bias", &w.bias),
            ]);
            params.extend([("x".into(), x), ("h0".into(), h0), ("c0".into(), c0)]);
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let lv = lstm_vars(v, H);
                    let (h, c) = crate::layers::lstm_cell(g, &lv, v[3], v[4], v[5])?;
                    let a = readout(g, h, &r1)?;
                    let b = readout(g, c, &r2)?;
                    g.add(a, b)
                }),
            }
        }
        "bidirectional_encoder" => {
            let mut p = Seq2SeqParams::<f64>::new(V + 2, V + 2, E, H, &mut rng);
            p.encoder_fwd.bias = uniform(&[4 * H], 0.3, &mut rng);
            p.encoder_bwd.bias = uniform(&[4 * H], 0.3, &mut rng);
            let batch = ids(B, T, V as u32 + 1, &mut rng);
            let r = uniform(&[B, 2 * H], 1.0, &mut rng);
            let params = named(p.named_tensors().into_iter().take(7).collect());
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let lat_vars = Seq2SeqVars {
                        embedding: v[0],
                        encoder_fwd: lstm_vars(&v[1..4], H),
                        encoder_bwd: lstm_vars(&v[4..7], H),
                        // Unused by the encoder.
                        decoder: lstm_vars(&v[1..4], H),
                        logits: dense_vars(&v[1..3]),
                    };
                    let lat = encode_graph(g, &lat_vars, &batch, None)?;
                    readout(g, lat, &r)
                }),
            }
        }
        "logits_softmax_ce" => {
            let d = with_bias_noise(Dense::new(H, V + 2, &mut rng), &mut rng);
            let h = uniform(&[B * T, H], 1.0, &mut rng);
            let targets: Vec<usize> = (0..B * T).map(|_| rng.below(V + 2)).collect();
            let mut params = named(vec![("logits/kernel", &d.kernel), ("logits/bias", &d.bias)]);
            params.push(("hidden".into(), h));
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let z = dense_vars(v).forward(g, v[2])?;
                    let fused = g.softmax_cross_entropy(z, &targets)?;
                    let p = g.softmax(z);
                    let split = g.cross_entropy(p, &targets)?;
                    g.add(fused, split)
                }),
            }
        }
        "bce_head" => {
            let d = with_bias_noise(Dense::new(E, 1, &mut rng), &mut rng);
            let x = uniform(&[4, E], 1.0, &mut rng);
            let labels: Vec<f64> = (0..4).map(|i| (i % 2) as f64).collect();
            let mut params = named(vec![("head/kernel", &d.kernel), ("head/bias", &d.bias)]);
            params.push(("features".into(), x));
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let z = dense_vars(v).forward(g, v[2])?;
                    let p = g.sigmoid(z);
                    let p = g.clamp(p, crate::graph::PROB_EPS, 1.0 - crate::graph::PROB_EPS);
                    g.binary_cross_entropy(p, &labels)
                }),
            }
        }
        "seq2seq" => {
            let mut p = Seq2SeqParams::<f64>::new(V + 2, V + 2, E, H, &mut rng);
            p.decoder.bias = uniform(&[4 * H], 0.3, &mut rng);
            p.logits.bias = uniform(&[V + 2], 0.3, &mut rng);
            let src = ids(B, T, V as u32 + 1, &mut rng);
            let tgt = ids(B, T, V as u32, &mut rng);
            let dropout_seed = rng.below(1 << 30) as u64;
            let params = named(p.named_tensors());
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let vars = seq2seq_vars(v, H);
                    let mut drop_rng = RngStream::new(dropout_seed);
                    let mut tr = Train {
                        rates: DropoutRates {
                            encoder: 0.5,
                            decoder: 0.5,
                            logits: 0.5,
                        },
                        rng: &mut drop_rng,
                    };
                    Ok(training_loss(g, &vars, &src, &tgt, 5e-2, 1e-2, Some(&mut tr))?.total)
                }),
            }
        }
        "discriminator" => {
            let (d, x) = loop {
                let mut d = Discriminator::<f64>::new(E, 5, &mut rng);
                for l in d.hidden.iter_mut().chain([&mut d.head]) {
                    l.bias = uniform(l.bias.shape(), 0.2, &mut rng);
                }
                let x = uniform(&[4, E], 1.0, &mut rng);
                if relu_margin(&d.hidden.iter().collect::<Vec<_>>(), &x) > KINK_MARGIN {
                    break (d, x);
                }
            };
            let labels = vec![1.0, 1.0, 0.0, 0.0];
            let mut params = named(d.named_tensors());
            params.push(("embeddings".into(), x));
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let dv = crate::gan::DiscriminatorVars {
                        hidden: [
                            dense_vars(&v[0..2]),
                            dense_vars(&v[2..4]),
                            dense_vars(&v[4..6]),
                        ],
                        head: dense_vars(&v[6..8]),
                    };
                    let p = dv.forward(g, v[8])?;
                    g.binary_cross_entropy(p, &labels)
                }),
            }
        }
        "generator" => {
            let (gen, disc, noise) = loop {
                let mut gen = Generator::<f64>::new(3, E, GenActivation::Relu, &mut rng);
                gen.dense.bias = uniform(&[E], 0.3, &mut rng);
                let disc = Discriminator::<f64>::new(E, 5, &mut rng);
                let noise = uniform(&[4, 3], 1.0, &mut rng);
                let mut stack = vec![&gen.dense];
                stack.extend(disc.hidden.iter());
                if relu_margin(&stack, &noise) > KINK_MARGIN {
                    break (gen, disc, noise);
                }
            };
            let params = named(gen.named_tensors());
            Case {
                params,
                loss: Box::new(move |g, v| {
                    let dv = disc.bind(g, false);
                    let z = g.input(noise.clone());
                    let gv = crate::gan::GeneratorVars {
                        dense: dense_vars(v),
                        activation: GenActivation::Relu,
                    };
                    let fake = gv.forward(g, z)?;
                    let p = dv.forward(g, fake)?;
                    g.binary_cross_entropy(p, &[1.0; 4])
                }),
            }
        }
        other => unreachable!("unknown gradient-check group {other}"),
    }
}

/// Check one group over every seed.
pub fn check_group(
    group: &'static str,
    cfg: &GradCheckConfig,
    perturb: Option<Perturb<'_>>,
) -> Result<GroupReport> {
    let (mut worst, mut where_, mut elements) = (0.0f64, String::new(), 0usize);
    for seed in 0..cfg.seeds {
        let case = build(group, seed);
        let (err, name, n) = check_case(&case, cfg, group, perturb)?;
        elements += n;
        if err > worst {
            worst = err;
            where_ = format!("{name} (seed {seed})");
        }
    }
    Ok(GroupReport {
        group,
        max_rel_error: worst,
        worst: where_,
        elements,
        passed: worst <= cfg.tolerance,
    })
}

/// Run every group.
pub fn run_gradcheck(
    cfg: &GradCheckConfig,
    perturb: Option<Perturb<'_>>,
) -> Result<Vec<GroupReport>> {
    GROUPS
        .iter()
        .map(|g| check_group(g, cfg, perturb))
        .collect()
}

/// Perturbation that scales the analytic gradient of `target` by 1.05.
pub fn corrupt_group(target: &str) -> impl Fn(&str, &mut [f64]) + '_ {
    move |group, grad| {
        if group == target {
            grad.iter_mut().for_each(|v| *v *= 1.05);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!((rel_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
        assert!((rel_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn small_groups_pass_with_few_seeds() {
        let cfg = GradCheckConfig {
            seeds: 2,
            ..Default::default()
        };
        for g in ["dense", "lstm_cell", "bce_head"] {
            let r = check_group(g, &cfg, None).unwrap();
            assert!(r.passed, "{r}");
            assert!(r.elements > 0);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let cfg = GradCheckConfig {
            seeds: 1,
            ..Default::default()
        };
        let hook = corrupt_group("dense");
        let r = check_group("dense", &cfg, Some(&hook)).unwrap();
        assert!(!r.passed);
        let other = check_group("lstm_cell", &cfg, Some(&hook)).unwrap();
        assert!(other.passed);
    }
}
