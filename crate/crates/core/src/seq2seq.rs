//! Stage 1: embedding → bidirectional LSTM encoder → repeat vector → LSTM
//! decoder → logits.
//!
//! The encoder's final forward and backward hidden states are concatenated
//! into a `2H` latent vector. The decoder receives that vector at every output
//! step (no teacher forcing) and a shared dense layer maps each decoder state
//! to a distribution over the target vocabulary.
//!
//! Padding positions take part in both the loss and the accuracy.

use std::fmt;

use log::info;

use crate::checkpoint::{params_checksum, Checkpoint};
use crate::error::{Error, Result};
use crate::graph::{DropoutMask, Graph, Var};
use crate::layers::{Dense, DenseVars, LstmVars, LstmWeights};
use crate::optim::{Adam, AdamConfig};
use crate::rng::RngStream;
use crate::tensor::{argmax, glorot_uniform, Scalar, Tensor};
use crate::text::{EncodedSplit, PaddedBatch};

/// Stage-1 hyperparameters. Defaults are the published configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqConfig {
    pub embed_dim: usize,
    pub units: usize,
    pub encoder_dropout: f64,
    pub decoder_dropout: f64,
    pub logits_dropout: f64,
    pub l2_encoder: f64,
    pub l2_decoder: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self {
            embed_dim: 256,
            units: 256,
            encoder_dropout: 0.5,
            decoder_dropout: 0.5,
            logits_dropout: 0.5,
            l2_encoder: 5e-5,
            l2_decoder: 1e-5,
            lr: 2e-3,
            beta1: 0.7,
            beta2: 0.97,
            epsilon: AdamConfig::DEFAULT_EPSILON,
            epochs: 400,
            batch_size: 30,
        }
    }
}

impl Seq2SeqConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("embed_dim", self.embed_dim),
            ("units", self.units),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be at least 1")));
            }
        }
        for (name, r) in [
            ("encoder_dropout", self.encoder_dropout),
            ("decoder_dropout", self.decoder_dropout),
            ("logits_dropout", self.logits_dropout),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::usage(format!("{name} must be in [0, 1), got {r}")));
            }
        }
        if self.l2_encoder < 0.0 || self.l2_decoder < 0.0 {
            return Err(Error::usage("L2 coefficients must be non-negative"));
        }
        if !(self.lr > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::usage("learning rate and epsilon must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::usage(format!("{name} must be in (0, 1), got {b}")));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// All encoder-decoder weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqParams<T> {
    /// `[source table size, E]`; row 0 is padding, the last row unknown words.
    pub embedding: Tensor<T>,
    pub encoder_fwd: LstmWeights<T>,
    pub encoder_bwd: LstmWeights<T>,
    /// Input width `2H`.
    pub decoder: LstmWeights<T>,
    /// `[H, target table size]`
    pub logits: Dense<T>,
}

impl<T: Scalar> Seq2SeqParams<T> {
    /// Glorot-initialised weights with zero biases.
    pub fn new(
        source_rows: usize,
        target_classes: usize,
        embed: usize,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Self {
        Self {
            embedding: glorot_uniform(&[source_rows, embed], rng),
            encoder_fwd: LstmWeights::new(embed, hidden, rng),
            encoder_bwd: LstmWeights::new(embed, hidden, rng),
            decoder: LstmWeights::new(2 * hidden, hidden, rng),
            logits: Dense::new(hidden, target_classes, rng),
        }
    }

    pub fn zeros(source_rows: usize, target_classes: usize, embed: usize, hidden: usize) -> Self {
        Self {
            embedding: Tensor::zeros(&[source_rows, embed]),
            encoder_fwd: LstmWeights::zeros(embed, hidden),
            encoder_bwd: LstmWeights::zeros(embed, hidden),
            decoder: LstmWeights::zeros(2 * hidden, hidden),
            logits: Dense::zeros(hidden, target_classes),
        }
    }

    pub fn hidden(&self) -> usize {
        self.encoder_fwd.hidden_size()
    }

    pub fn latent_width(&self) -> usize {
        2 * self.hidden()
    }

    pub fn source_rows(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn target_classes(&self) -> usize {
        self.logits.outputs()
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("embedding", &self.embedding),
            ("encoder_fwd/kernel", &self.encoder_fwd.kernel),
            ("encoder_fwd/recurrent", &self.encoder_fwd.recurrent),
            ("encoder_fwd/bias", &self.encoder_fwd.bias),
            ("encoder_bwd/kernel", &self.encoder_bwd.kernel),
            ("encoder_bwd/recurrent", &self.encoder_bwd.recurrent),
            ("encoder_bwd/bias", &self.encoder_bwd.bias),
            ("decoder/kernel", &self.decoder.kernel),
            ("decoder/recurrent", &self.decoder.recurrent),
            ("decoder/bias", &self.decoder.bias),
            ("logits/kernel", &self.logits.kernel),
            ("logits/bias", &self.logits.bias),
        ]
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("embedding", &mut self.embedding),
            ("encoder_fwd/kernel", &mut self.encoder_fwd.kernel),
            ("encoder_fwd/recurrent", &mut self.encoder_fwd.recurrent),
            ("encoder_fwd/bias", &mut self.encoder_fwd.bias),
            ("encoder_bwd/kernel", &mut self.encoder_bwd.kernel),
            ("encoder_bwd/recurrent", &mut self.encoder_bwd.recurrent),
            ("encoder_bwd/bias", &mut self.encoder_bwd.bias),
            ("decoder/kernel", &mut self.decoder.kernel),
            ("decoder/recurrent", &mut self.decoder.recurrent),
            ("decoder/bias", &mut self.decoder.bias),
            ("logits/kernel", &mut self.logits.kernel),
            ("logits/bias", &mut self.logits.bias),
        ]
    }

    /// Rebuild from named tensors, checking that the shapes fit together.
    pub fn from_named(mut get: impl FnMut(&str) -> Result<Tensor<T>>) -> Result<Self> {
        let lstm = |get: &mut dyn FnMut(&str) -> Result<Tensor<T>>,
                    prefix: &str|
         -> Result<LstmWeights<T>> {
            let w = LstmWeights {
                kernel: get(&format!("{prefix}/kernel"))?,
                recurrent: get(&format!("{prefix}/recurrent"))?,
                bias: get(&format!("{prefix}/bias"))?,
            };
            w.validate()?;
            Ok(w)
        };
        let p = Self {
            embedding: get("embedding")?,
            encoder_fwd: lstm(&mut get, "encoder_fwd")?,
            encoder_bwd: lstm(&mut get, "encoder_bwd")?,
            decoder: lstm(&mut get, "decoder")?,
            logits: Dense {
                kernel: get("logits/kernel")?,
                bias: get("logits/bias")?,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let e = self.embedding.cols();
        let bad = |what: &'static str, a: &[usize], b: &[usize]| Error::Shape {
            op: what,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        };
        if self.embedding.shape().len() != 2 {
            return Err(bad("embedding", self.embedding.shape(), &[]));
        }
        for w in [&self.encoder_fwd, &self.encoder_bwd, &self.decoder] {
            w.validate()?;
        }
        if self.encoder_fwd.input_size() != e || self.encoder_bwd.input_size() != e {
            return Err(bad(
                "encoder input",
                self.embedding.shape(),
                self.encoder_fwd.kernel.shape(),
            ));
        }
        if self.encoder_bwd.hidden_size() != h
            || self.decoder.hidden_size() != h
            || self.decoder.input_size() != 2 * h
        {
            return Err(bad("decoder input", self.decoder.kernel.shape(), &[2 * h]));
        }
        if self.logits.inputs() != h || self.logits.bias.shape() != [self.logits.outputs()] {
            return Err(bad("logits", self.logits.kernel.shape(), &[h]));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Seq2SeqParams<U> {
        let l = |w: &LstmWeights<T>| LstmWeights {
            kernel: w.kernel.cast(),
            recurrent: w.recurrent.cast(),
            bias: w.bias.cast(),
        };
        Seq2SeqParams {
            embedding: self.embedding.cast(),
            encoder_fwd: l(&self.encoder_fwd),
            encoder_bwd: l(&self.encoder_bwd),
            decoder: l(&self.decoder),
            logits: Dense {
                kernel: self.logits.kernel.cast(),
                bias: self.logits.bias.cast(),
            },
        }
    }

    /// Place every tensor on `g`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Seq2SeqVars {
        let embedding = if trainable {
            g.param(&self.embedding)
        } else {
            g.input(self.embedding.clone())
        };
        Seq2SeqVars {
            embedding,
            encoder_fwd: self.encoder_fwd.bind(g, trainable),
            encoder_bwd: self.encoder_bwd.bind(g, trainable),
            decoder: self.decoder.bind(g, trainable),
            logits: self.logits.bind(g, trainable),
        }
    }
}

impl<T: Scalar> Seq2SeqParams<T> {
    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.insert_section(SECTION, self.named_tensors());
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Self::from_named(|n| ck.get(&format!("{SECTION}/{n}")))
    }

    /// Hex sha256 over every named tensor.
    pub fn checksum(&self) -> String {
        params_checksum(self.named_tensors())
    }
}

/// Checkpoint section holding encoder-decoder tensors.
pub const SECTION: &str = "seq2seq";

/// Tape handles for bound [`Seq2SeqParams`].
#[derive(Clone, Copy, Debug)]
pub struct Seq2SeqVars {
    pub embedding: Var,
    pub encoder_fwd: LstmVars,
    pub encoder_bwd: LstmVars,
    pub decoder: LstmVars,
    pub logits: DenseVars,
}

impl Seq2SeqVars {
    /// Tape handles in the same order as [`Seq2SeqParams::named_tensors`].
    pub fn ordered(&self) -> [Var; 12] {
        [
            self.embedding,
            self.encoder_fwd.kernel,
            self.encoder_fwd.recurrent,
            self.encoder_fwd.bias,
            self.encoder_bwd.kernel,
            self.encoder_bwd.recurrent,
            self.encoder_bwd.bias,
            self.decoder.kernel,
            self.decoder.recurrent,
            self.decoder.bias,
            self.logits.kernel,
            self.logits.bias,
        ]
    }
}

/// Dropout rates applied while building a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DropoutRates {
    pub encoder: f64,
    pub decoder: f64,
    pub logits: f64,
}

impl DropoutRates {
    pub fn from_config(c: &Seq2SeqConfig) -> Self {
        Self {
            encoder: c.encoder_dropout,
            decoder: c.decoder_dropout,
            logits: c.logits_dropout,
        }
    }
}

/// Randomness for a training-mode pass; `None` means inference.
pub struct Train<'a> {
    pub rates: DropoutRates,
    pub rng: &'a mut RngStream,
}

fn run_direction<T: Scalar>(
    g: &mut Graph<T>,
    w: &LstmVars,
    inputs: &[Var],
    reverse: bool,
    zeros: Var,
) -> Result<Var> {
    let (mut h, mut c) = (zeros, zeros);
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let xp = w.project_input(g, inputs[t])?;
        (h, c) = w.step(g, xp, h, c)?;
    }
    Ok(h)
}

/// Latent vectors `[B, 2H]` on the tape.
pub fn encode_graph<T: Scalar>(
    g: &mut Graph<T>,
    vars: &Seq2SeqVars,
    source: &PaddedBatch,
    mut train: Option<&mut Train<'_>>,
) -> Result<Var> {
    let rows = g.value(vars.embedding).shape()[0];
    if let Some(bad) = source.ids().iter().find(|&&id| id as usize >= rows) {
        return Err(Error::Index {
            what: "source id",
            index: *bad as usize,
            size: rows,
        });
    }
    let b = source.rows();
    let e = g.value(vars.embedding).cols();
    let h = vars.encoder_fwd.hidden;
    let steps: Vec<Var> = (0..source.t_max())
        .map(|t| g.gather(vars.embedding, &source.column(t)))
        .collect::<Result<_>>()?;
    // One mask per direction, shared across time steps.
    let masked = |g: &mut Graph<T>, train: &mut Option<&mut Train<'_>>| -> Result<Vec<Var>> {
        match train {
            Some(tr) if tr.rates.encoder > 0.0 => {
                let mask = DropoutMask::sample(&[b, e], tr.rates.encoder, tr.rng);
                steps.iter().map(|&s| g.apply_mask(s, &mask)).collect()
            }
            _ => Ok(steps.clone()),
        }
    };
    let zeros = g.input(Tensor::zeros(&[b, h]));
    let fwd_in = masked(g, &mut train)?;
    let fwd = run_direction(g, &vars.encoder_fwd, &fwd_in, false, zeros)?;
    let bwd_in = masked(g, &mut train)?;
    let bwd = run_direction(g, &vars.encoder_bwd, &bwd_in, true, zeros)?;
    g.concat_cols(&[fwd, bwd])
}

/// Logits `[B·T, classes]` on the tape, rows ordered batch-major.
pub fn decode_graph<T: Scalar>(
    g: &mut Graph<T>,
    vars: &Seq2SeqVars,
    latent: Var,
    t_tgt: usize,
    mut train: Option<&mut Train<'_>>,
) -> Result<Var> {
    let lv = g.value(latent);
    let width = g.value(vars.decoder.kernel).shape()[0];
    if lv.shape().len() != 2 || lv.cols() != width {
        return Err(Error::Shape {
            op: "decode",
            lhs: lv.shape().to_vec(),
            rhs: vec![width],
        });
    }
    if t_tgt == 0 {
        return Err(Error::usage("target length must be at least 1"));
    }
    let b = lv.rows();
    let h = vars.decoder.hidden;
    let x = match &mut train {
        Some(tr) => g.dropout(latent, tr.rates.decoder, tr.rng, true)?,
        None => latent,
    };
    // The repeated input is identical at every step, so project it once.
    let xp = vars.decoder.project_input(g, x)?;
    let zeros = g.input(Tensor::zeros(&[b, h]));
    let (mut hs, mut cs) = (zeros, zeros);
    let mut outs = Vec::with_capacity(t_tgt);
    for _ in 0..t_tgt {
        (hs, cs) = vars.decoder.step(g, xp, hs, cs)?;
        outs.push(hs);
    }
    let seq = g.stack_steps(&outs)?;
    let flat = g.reshape(seq, &[b * t_tgt, h])?;
    let flat = match &mut train {
        Some(tr) => g.dropout(flat, tr.rates.logits, tr.rng, true)?,
        None => flat,
    };
    vars.logits.forward(g, flat)
}

/// Concatenated final encoder states `[B, 2H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch<T> {
    pub embeddings: Tensor<T>,
}

/// Encode a batch; dropout is active only when `training` is set.
pub fn encode<T: Scalar>(
    params: &Seq2SeqParams<T>,
    batch: &PaddedBatch,
    rng: &mut RngStream,
    training: bool,
    rates: DropoutRates,
) -> Result<LatentBatch<T>> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let mut tr = Train { rates, rng };
    let latent = encode_graph(&mut g, &vars, batch, training.then_some(&mut tr))?;
    Ok(LatentBatch {
        embeddings: g.value(latent).clone(),
    })
}

/// Inference-mode encoding, processed in chunks.
pub fn encode_all<T: Scalar>(params: &Seq2SeqParams<T>, batch: &PaddedBatch) -> Result<Tensor<T>> {
    let width = params.latent_width();
    let mut data = Vec::with_capacity(batch.rows() * width);
    let mut rng = RngStream::new(0);
    for chunk in chunks(batch.rows(), EVAL_CHUNK) {
        let sub = batch.select(&chunk);
        let lat = encode(params, &sub, &mut rng, false, DropoutRates::default())?;
        data.extend_from_slice(lat.embeddings.data());
    }
    Tensor::new(vec![batch.rows(), width], data)
}

/// Per-step target distributions `[B, t_tgt, classes]`.
pub fn decode<T: Scalar>(
    params: &Seq2SeqParams<T>,
    latent: &Tensor<T>,
    t_tgt: usize,
    rng: &mut RngStream,
    training: bool,
    rates: DropoutRates,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let lat = g.input(latent.clone());
    let mut tr = Train { rates, rng };
    let logits = decode_graph(&mut g, &vars, lat, t_tgt, training.then_some(&mut tr))?;
    let b = latent.rows();
    g.value(logits)
        .softmax()
        .reshape(&[b, t_tgt, params.target_classes()])
}

/// Fraction of all `B×T` positions whose argmax equals the target id.
pub fn token_accuracy<T: Scalar>(pred: &Tensor<T>, target: &PaddedBatch) -> Result<f64> {
    let want = [target.rows(), target.t_max()];
    if pred.shape().len() != 3 || pred.shape()[..2] != want {
        return Err(Error::Shape {
            op: "token_accuracy",
            lhs: pred.shape().to_vec(),
            rhs: want.to_vec(),
        });
    }
    Ok(count_correct(pred.data(), pred.cols(), target.ids()) as f64 / target.ids().len() as f64)
}

fn count_correct<T: Scalar>(probs: &[T], classes: usize, targets: &[u32]) -> usize {
    probs
        .chunks(classes)
        .zip(targets)
        .filter(|(row, &t)| argmax(row) == t as usize)
        .count()
}

/// Mean cross-entropy and accuracy of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 256;

fn chunks(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0..n)
        .collect::<Vec<_>>()
        .chunks(size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Inference-mode loss (cross-entropy only) and token accuracy.
pub fn evaluate<T: Scalar>(params: &Seq2SeqParams<T>, split: &EncodedSplit) -> Result<EvalResult> {
    if split.is_empty() {
        return Err(Error::usage("cannot evaluate an empty split"));
    }
    let classes = params.target_classes();
    if split.target.max_id() as usize >= classes {
        return Err(Error::Index {
            what: "target id",
            index: split.target.max_id() as usize,
            size: classes,
        });
    }
    let (mut loss, mut correct, mut positions) = (0.0, 0usize, 0usize);
    for chunk in chunks(split.len(), EVAL_CHUNK) {
        let src = split.source.select(&chunk);
        let tgt = split.target.select(&chunk);
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let latent = encode_graph(&mut g, &vars, &src, None)?;
        let logits = decode_graph(&mut g, &vars, latent, tgt.t_max(), None)?;
        let ce = g.softmax_cross_entropy(logits, &tgt.flat())?;
        let n = tgt.ids().len();
        loss += g.scalar(ce).as_f64() * n as f64;
        let probs = g.value(logits).softmax();
        correct += count_correct(probs.data(), classes, tgt.ids());
        positions += n;
    }
    Ok(EvalResult {
        loss: loss / positions as f64,
        accuracy: correct as f64 / positions as f64,
    })
}

/// Outputs of one training-mode forward pass.
pub struct ForwardLoss {
    /// Cross-entropy plus L2 penalties.
    pub total: Var,
    pub cross_entropy: Var,
    pub logits: Var,
}

/// Build the full training objective on `g`.
#[allow(clippy::too_many_arguments)]
pub fn training_loss<T: Scalar>(
    g: &mut Graph<T>,
    vars: &Seq2SeqVars,
    source: &PaddedBatch,
    target: &PaddedBatch,
    l2_encoder: f64,
    l2_decoder: f64,
    train: Option<&mut Train<'_>>,
) -> Result<ForwardLoss> {
    let (latent, logits) = match train {
        Some(tr) => {
            let latent = encode_graph(g, vars, source, Some(tr))?;
            (
                latent,
                decode_graph(g, vars, latent, target.t_max(), Some(tr))?,
            )
        }
        None => {
            let latent = encode_graph(g, vars, source, None)?;
            (latent, decode_graph(g, vars, latent, target.t_max(), None)?)
        }
    };
    let _ = latent;
    let ce = g.softmax_cross_entropy(logits, &target.flat())?;
    let enc = g.l2_penalty(
        &[
            vars.encoder_fwd.kernel,
            vars.encoder_fwd.recurrent,
            vars.encoder_bwd.kernel,
            vars.encoder_bwd.recurrent,
        ],
        T::from_f64_lossy(l2_encoder),
    );
    let dec = g.l2_penalty(
        &[vars.decoder.kernel, vars.decoder.recurrent],
        T::from_f64_lossy(l2_decoder),
    );
    let reg = g.add(enc, dec)?;
    let total = g.add(ce, reg)?;
    Ok(ForwardLoss {
        total,
        cross_entropy: ce,
        logits,
    })
}

/// Per-epoch training curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training objective (cross-entropy plus L2) over the epoch's batches.
    pub train_loss: f64,
    /// Training-mode token accuracy over the epoch's batches.
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            ));
        }
        out
    }

    pub fn best_val_acc(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.val_acc).reduce(f64::max)
    }
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:>4}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            self.epoch, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }
}

/// Result of [`train_seq2seq`].
#[derive(Clone, Debug)]
pub struct TrainedSeq2Seq<T> {
    pub final_params: Seq2SeqParams<T>,
    /// Parameters from the epoch with the highest validation accuracy.
    pub best_params: Seq2SeqParams<T>,
    pub best_epoch: usize,
    pub report: TrainReport,
}

/// Minibatch Adam on cross-entropy plus L2.
///
/// `rng` supplies three sub-streams: `init`, `shuffle`, and `dropout`.
/// `on_epoch` is called after every epoch, e.g. for logging.
pub fn train_seq2seq<T: Scalar>(
    config: &Seq2SeqConfig,
    train: &EncodedSplit,
    validation: &EncodedSplit,
    source_rows: usize,
    target_classes: usize,
    rng: &RngStream,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainedSeq2Seq<T>> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::usage(
            "training and validation splits must be non-empty",
        ));
    }
    let mut init = rng.substream("init/seq2seq");
    let mut params = Seq2SeqParams::<T>::new(
        source_rows,
        target_classes,
        config.embed_dim,
        config.units,
        &mut init,
    );
    let mut shuffle = rng.substream("shuffle/seq2seq");
    let mut drop_rng = rng.substream("dropout/seq2seq");
    let mut adam = Adam::new(
        params.named_tensors().into_iter().map(|(_, t)| t),
        config.adam(),
    );
    let rates = DropoutRates::from_config(config);

    let mut report = TrainReport::default();
    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        shuffle.shuffle(&mut order);
        let (mut loss_sum, mut correct, mut positions) = (0.0, 0usize, 0usize);
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let src = train.source.select(idx);
            let tgt = train.target.select(idx);
            let mut g = Graph::new();
            let vars = params.bind(&mut g, true);
            let mut tr = Train {
                rates,
                rng: &mut drop_rng,
            };
            let fl = training_loss(
                &mut g,
                &vars,
                &src,
                &tgt,
                config.l2_encoder,
                config.l2_decoder,
                Some(&mut tr),
            )?;
            let loss = g.scalar(fl.total).as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi + 1,
                    loss,
                });
            }
            g.backward(fl.total)?;
            adam.step(
                &g,
                params.named_tensors_mut().into_iter().map(|(_, t)| t),
                &vars.ordered(),
            )?;
            let n = tgt.ids().len();
            loss_sum += loss * n as f64;
            let logits = g.value(fl.logits);
            correct += count_correct(logits.data(), logits.cols(), tgt.ids());
            positions += n;
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                loss: f64::NAN,
            });
        }
        let val = evaluate(&params, validation)?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / positions as f64,
            train_acc: correct as f64 / positions as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
        };
        if m.val_acc > best.0 {
            best = (m.val_acc, epoch, params.clone());
        }
        info!("{m}");
        on_epoch(&m);
        report.epochs.push(m);
    }
    Ok(TrainedSeq2Seq {
        final_params: params,
        best_params: best.2,
        best_epoch: best.1,
        report,
    })
}
