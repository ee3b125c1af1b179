//! Stage 2: a generator mapping uniform noise to latent vectors, trained
//! against a discriminator while the encoder stays frozen.

use std::fmt;

use log::info;

use crate::checkpoint::{params_checksum, Checkpoint};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var, PROB_EPS};
use crate::layers::{Dense, DenseVars};
use crate::optim::{Adam, AdamConfig};
use crate::rng::RngStream;
use crate::seq2seq::{encode_all, Seq2SeqParams};
use crate::tensor::{Scalar, Tensor};
use crate::text::PaddedBatch;

/// Stage-2 hyperparameters. Defaults are the published configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_width: usize,
    pub disc_units: usize,
    /// Learning rate of the stacked model; the generator-specific rate wins.
    pub gan_lr: f64,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Bound generator outputs with tanh instead of a rectifier.
    pub tanh_output: bool,
    /// Noise rows used for the moment-gap probe.
    pub probe_size: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 8000,
            batch_size: 1900,
            noise_width: 512,
            disc_units: 1024,
            gan_lr: 1e-4,
            gen_lr: 4e-4,
            disc_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            tanh_output: false,
            probe_size: 1000,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gan_epochs", self.epochs),
            ("gan_batch", self.batch_size),
            ("noise_width", self.noise_width),
            ("disc_units", self.disc_units),
            ("probe_size", self.probe_size),
        ] {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be at least 1")));
            }
        }
        for (name, lr) in [
            ("gan_lr", self.gan_lr),
            ("gen_lr", self.gen_lr),
            ("disc_lr", self.disc_lr),
        ] {
            if !(lr > 0.0) {
                return Err(Error::usage(format!("{name} must be positive")));
            }
        }
        for (name, b) in [("gan_beta1", self.beta1), ("gan_beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::usage(format!("{name} must be in (0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// Output activation of the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenActivation {
    Relu,
    Tanh,
}

/// Single dense layer from noise to latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub dense: Dense<T>,
    pub activation: GenActivation,
}

impl<T: Scalar> Generator<T> {
    pub fn new(
        noise: usize,
        latent: usize,
        activation: GenActivation,
        rng: &mut RngStream,
    ) -> Self {
        Self {
            dense: Dense::new(noise, latent, rng),
            activation,
        }
    }

    pub fn noise_width(&self) -> usize {
        self.dense.inputs()
    }

    pub fn latent_width(&self) -> usize {
        self.dense.outputs()
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("dense/kernel", &self.dense.kernel),
            ("dense/bias", &self.dense.bias),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.dense.kernel, &mut self.dense.bias]
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> GeneratorVars {
        GeneratorVars {
            dense: self.dense.bind(g, trainable),
            activation: self.activation,
        }
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.insert_section(GENERATOR_SECTION, self.named_tensors());
        let act = match self.activation {
            GenActivation::Relu => "relu",
            GenActivation::Tanh => "tanh",
        };
        ck.set_meta("generator/activation", act);
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let activation = match ck.meta("generator/activation") {
            Some("tanh") => GenActivation::Tanh,
            Some("relu") | None => GenActivation::Relu,
            Some(other) => {
                return Err(Error::usage(format!(
                    "unknown generator activation {other:?}"
                )))
            }
        };
        let dense = Dense {
            kernel: ck.get(&format!("{GENERATOR_SECTION}/dense/kernel"))?,
            bias: ck.get(&format!("{GENERATOR_SECTION}/dense/bias"))?,
        };
        if dense.kernel.shape().len() != 2 || dense.bias.shape() != [dense.outputs()] {
            return Err(Error::Shape {
                op: "generator checkpoint",
                lhs: dense.kernel.shape().to_vec(),
                rhs: dense.bias.shape().to_vec(),
            });
        }
        Ok(Self { dense, activation })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GeneratorVars {
    pub dense: DenseVars,
    pub activation: GenActivation,
}

impl GeneratorVars {
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, noise: Var) -> Result<Var> {
        let z = self.dense.forward(g, noise)?;
        Ok(match self.activation {
            GenActivation::Relu => g.relu(z),
            GenActivation::Tanh => g.tanh(z),
        })
    }
}

/// Three rectified dense layers and a one-unit sigmoid head.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub hidden: [Dense<T>; 3],
    pub head: Dense<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(latent: usize, units: usize, rng: &mut RngStream) -> Self {
        Self {
            hidden: [
                Dense::new(latent, units, rng),
                Dense::new(units, units, rng),
                Dense::new(units, units, rng),
            ],
            head: Dense::new(units, 1, rng),
        }
    }

    pub fn zeros(latent: usize, units: usize) -> Self {
        Self {
            hidden: [
                Dense::zeros(latent, units),
                Dense::zeros(units, units),
                Dense::zeros(units, units),
            ],
            head: Dense::zeros(units, 1),
        }
    }

    pub fn latent_width(&self) -> usize {
        self.hidden[0].inputs()
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let [a, b, c] = &self.hidden;
        vec![
            ("dense1/kernel", &a.kernel),
            ("dense1/bias", &a.bias),
            ("dense2/kernel", &b.kernel),
            ("dense2/bias", &b.bias),
            ("dense3/kernel", &c.kernel),
            ("dense3/bias", &c.bias),
            ("head/kernel", &self.head.kernel),
            ("head/bias", &self.head.bias),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 8] {
        let [a, b, c] = &mut self.hidden;
        [
            &mut a.kernel,
            &mut a.bias,
            &mut b.kernel,
            &mut b.bias,
            &mut c.kernel,
            &mut c.bias,
            &mut self.head.kernel,
            &mut self.head.bias,
        ]
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> DiscriminatorVars {
        DiscriminatorVars {
            hidden: [
                self.hidden[0].bind(g, trainable),
                self.hidden[1].bind(g, trainable),
                self.hidden[2].bind(g, trainable),
            ],
            head: self.head.bind(g, trainable),
        }
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.insert_section(DISCRIMINATOR_SECTION, self.named_tensors());
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |n: &str| ck.get::<T>(&format!("{DISCRIMINATOR_SECTION}/{n}"));
        let dense = |i: &str| -> Result<Dense<T>> {
            Ok(Dense {
                kernel: get(&format!("{i}/kernel"))?,
                bias: get(&format!("{i}/bias"))?,
            })
        };
        let d = Self {
            hidden: [dense("dense1")?, dense("dense2")?, dense("dense3")?],
            head: dense("head")?,
        };
        let widths = [
            d.hidden[0].outputs(),
            d.hidden[1].inputs(),
            d.hidden[1].outputs(),
            d.hidden[2].inputs(),
            d.hidden[2].outputs(),
            d.head.inputs(),
        ];
        if widths.iter().any(|&w| w != widths[0]) || d.head.outputs() != 1 {
            return Err(Error::Shape {
                op: "discriminator checkpoint",
                lhs: widths.to_vec(),
                rhs: vec![d.head.outputs()],
            });
        }
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorVars {
    pub hidden: [DenseVars; 3],
    pub head: DenseVars,
}

impl DiscriminatorVars {
    pub fn ordered(&self) -> [Var; 8] {
        let [a, b, c] = self.hidden;
        [
            a.kernel,
            a.bias,
            b.kernel,
            b.bias,
            c.kernel,
            c.bias,
            self.head.kernel,
            self.head.bias,
        ]
    }

    /// Probability-of-real `[B, 1]`, clamped away from 0 and 1.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, emb: Var) -> Result<Var> {
        let mut x = emb;
        for layer in &self.hidden {
            let z = layer.forward(g, x)?;
            x = g.relu(z);
        }
        let z = self.head.forward(g, x)?;
        let p = g.sigmoid(z);
        let eps = T::from_f64_lossy(PROB_EPS);
        Ok(g.clamp(p, eps, T::one() - eps))
    }
}

pub const GENERATOR_SECTION: &str = "generator";
pub const DISCRIMINATOR_SECTION: &str = "discriminator";

/// i.i.d. uniform noise on `[-1, 1]`.
pub fn sample_noise<T: Scalar>(b: usize, n: usize, rng: &mut RngStream) -> Result<Tensor<T>> {
    if b == 0 || n == 0 {
        return Err(Error::usage("noise batch and width must be at least 1"));
    }
    Ok(Tensor::from_fn(&[b, n], |_| {
        T::from_f64_lossy(rng.uniform(-1.0, 1.0))
    }))
}

pub fn generator_forward<T: Scalar>(gen: &Generator<T>, noise: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let vars = gen.bind(&mut g, false);
    let x = g.input(noise.clone());
    let y = vars.forward(&mut g, x)?;
    Ok(g.value(y).clone())
}

pub fn discriminator_forward<T: Scalar>(
    disc: &Discriminator<T>,
    emb: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let vars = disc.bind(&mut g, false);
    let x = g.input(emb.clone());
    let y = vars.forward(&mut g, x)?;
    Ok(g.value(y).clone())
}

/// Distance between per-dimension moments of two embedding batches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentGap {
    /// L2 distance between the per-dimension means.
    pub mean_gap: f64,
    /// L2 distance between the per-dimension population standard deviations.
    pub std_gap: f64,
}

impl MomentGap {
    pub fn total(&self) -> f64 {
        self.mean_gap + self.std_gap
    }
}

pub fn embedding_moment_gap<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<MomentGap> {
    if real.shape().len() != 2 || fake.shape().len() != 2 || real.cols() != fake.cols() {
        return Err(Error::Shape {
            op: "embedding_moment_gap",
            lhs: real.shape().to_vec(),
            rhs: fake.shape().to_vec(),
        });
    }
    if real.rows() == 0 || fake.rows() == 0 {
        return Err(Error::usage("moment gap needs non-empty batches"));
    }
    let (rm, rs) = column_moments(real);
    let (fm, fs) = column_moments(fake);
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    Ok(MomentGap {
        mean_gap: dist(&rm, &fm),
        std_gap: dist(&rs, &fs),
    })
}

fn column_moments<T: Scalar>(t: &Tensor<T>) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (t.rows(), t.cols());
    let mut mean = vec![0.0; d];
    for row in t.data().chunks(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in t.data().chunks(d) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v.as_f64() - m).powi(2);
        }
    }
    (
        mean,
        var.into_iter().map(|s| (s / n as f64).sqrt()).collect(),
    )
}

/// One row of the stage-2 metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanEpoch {
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub disc_acc_real: f64,
    pub disc_acc_fake: f64,
}

impl fmt::Display for GanEpoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:>5}  gen {:.4}  disc {:.4}  acc_real {:.3}  acc_fake {:.3}",
            self.epoch, self.gen_loss, self.disc_loss, self.disc_acc_real, self.disc_acc_fake
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanReport {
    pub epochs: Vec<GanEpoch>,
    pub gap_initial: Option<MomentGap>,
    pub gap_final: Option<MomentGap>,
    /// Discriminator accuracy on the probe set before any update.
    pub initial_probe_accuracy: f64,
    pub encoder_checksum: String,
}

impl GanReport {
    pub const CSV_HEADER: &'static str = "epoch,gen_loss,disc_loss,disc_acc_real,disc_acc_fake";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                e.epoch, e.gen_loss, e.disc_loss, e.disc_acc_real, e.disc_acc_fake
            ));
        }
        out
    }

    /// Mean and population standard deviation over the last `window` epochs.
    pub fn tail_stats(&self, window: usize, pick: impl Fn(&GanEpoch) -> f64) -> Option<(f64, f64)> {
        if window == 0 || self.epochs.len() < window {
            return None;
        }
        let xs: Vec<f64> = self.epochs[self.epochs.len() - window..]
            .iter()
            .map(pick)
            .collect();
        let mean = xs.iter().sum::<f64>() / window as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window as f64;
        Some((mean, var.sqrt()))
    }
}

/// Result of [`train_gan`].
#[derive(Clone, Debug)]
pub struct TrainedGan<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub report: GanReport,
}

/// Cycles a shuffled index order without replacement, reshuffling when
/// exhausted.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize, rng: &mut RngStream) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        Self { order, pos: 0 }
    }

    fn next_batch(&mut self, b: usize, rng: &mut RngStream) -> Vec<usize> {
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            if self.pos == self.order.len() {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            let take = (b - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

fn select_rows<T: Scalar>(t: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let d = t.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(&t.data()[r * d..(r + 1) * d]);
    }
    Tensor::new(vec![rows.len(), d], data).expect("row selection keeps shape")
}

fn stack_rows<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(vec![a.rows() + b.rows(), a.cols()], data).expect("equal widths")
}

fn probe_accuracy<T: Scalar>(
    disc: &Discriminator<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<f64> {
    let half = T::from_f64_lossy(0.5);
    let pr = discriminator_forward(disc, real)?;
    let pf = discriminator_forward(disc, fake)?;
    let hits = pr.data().iter().filter(|&&p| p > half).count()
        + pf.data().iter().filter(|&&p| p <= half).count();
    Ok(hits as f64 / (pr.len() + pf.len()) as f64)
}

/// Adversarial training against embeddings of `real_sources` from a frozen
/// encoder.
///
/// Each epoch runs one discriminator step on a combined real/fake batch,
/// then one generator step on fresh noise through the fixed discriminator.
/// Sub-streams used: `init/generator`, `init/discriminator`, `shuffle/gan`,
/// `noise`, `probe`.
pub fn train_gan<T: Scalar>(
    config: &GanConfig,
    encoder: &Seq2SeqParams<T>,
    real_sources: &PaddedBatch,
    rng: &RngStream,
    mut on_epoch: impl FnMut(&GanEpoch),
) -> Result<TrainedGan<T>> {
    config.validate()?;
    if real_sources.is_empty() {
        return Err(Error::usage("no real sentences to train against"));
    }
    let checksum = encoder.checksum();
    info!("encoder checksum before stage 2: {checksum}");
    // The encoder is frozen and runs in inference mode, so every real
    // embedding is fixed for the whole run.
    let real = encode_all(encoder, real_sources)?;
    let latent = real.cols();

    let act = if config.tanh_output {
        GenActivation::Tanh
    } else {
        GenActivation::Relu
    };
    let mut gen = Generator::<T>::new(
        config.noise_width,
        latent,
        act,
        &mut rng.substream("init/generator"),
    );
    let mut disc = Discriminator::<T>::new(
        latent,
        config.disc_units,
        &mut rng.substream("init/discriminator"),
    );
    let mut gen_opt = Adam::new(
        gen.named_tensors().into_iter().map(|(_, t)| t),
        AdamConfig::new(config.gen_lr, config.beta1, config.beta2),
    );
    let mut disc_opt = Adam::new(
        disc.named_tensors().into_iter().map(|(_, t)| t),
        AdamConfig::new(config.disc_lr, config.beta1, config.beta2),
    );

    let mut shuffle = rng.substream("shuffle/gan");
    let mut noise_rng = rng.substream("noise");
    let probe_noise = sample_noise::<T>(
        config.probe_size,
        config.noise_width,
        &mut rng.substream("probe"),
    )?;
    // Balanced probe: as many fake rows as real ones.
    let probe_rows: Vec<usize> = (0..real.rows().min(config.probe_size)).collect();
    let probe_real = select_rows(&real, &probe_rows);

    let mut report = GanReport {
        encoder_checksum: checksum.clone(),
        ..Default::default()
    };
    let probe_fake = generator_forward(&gen, &probe_noise)?;
    report.gap_initial = Some(embedding_moment_gap(&real, &probe_fake)?);
    report.initial_probe_accuracy =
        probe_accuracy(&disc, &probe_real, &select_rows(&probe_fake, &probe_rows))?;

    let b = config.batch_size;
    let mut cycler = Cycler::new(real.rows(), &mut shuffle);
    let mut labels = vec![T::one(); b];
    labels.extend(std::iter::repeat_n(T::zero(), b));
    let ones = vec![T::one(); b];
    let half = T::from_f64_lossy(0.5);

    for epoch in 1..=config.epochs {
        // Discriminator step.
        let real_batch = select_rows(&real, &cycler.next_batch(b, &mut shuffle));
        let fake_batch =
            generator_forward(&gen, &sample_noise(b, config.noise_width, &mut noise_rng)?)?;
        let mut g = Graph::new();
        let dv = disc.bind(&mut g, true);
        let x = g.input(stack_rows(&real_batch, &fake_batch));
        let pred = dv.forward(&mut g, x)?;
        let loss = g.binary_cross_entropy(pred, &labels)?;
        let disc_loss = g.scalar(loss).as_f64();
        if !disc_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 1,
                loss: disc_loss,
            });
        }
        let p = g.value(pred).data();
        let disc_acc_real = p[..b].iter().filter(|&&v| v > half).count() as f64 / b as f64;
        let disc_acc_fake = p[b..].iter().filter(|&&v| v <= half).count() as f64 / b as f64;
        g.backward(loss)?;
        disc_opt.step(&g, disc.tensors_mut(), &dv.ordered())?;

        // Generator step: fakes labelled real through the fixed discriminator.
        let mut g = Graph::new();
        let gv = gen.bind(&mut g, true);
        let dv = disc.bind(&mut g, false);
        let z = g.input(sample_noise(b, config.noise_width, &mut noise_rng)?);
        let fake = gv.forward(&mut g, z)?;
        let pred = dv.forward(&mut g, fake)?;
        let loss = g.binary_cross_entropy(pred, &ones)?;
        let gen_loss = g.scalar(loss).as_f64();
        if !gen_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 2,
                loss: gen_loss,
            });
        }
        g.backward(loss)?;
        gen_opt.step(&g, gen.tensors_mut(), &[gv.dense.kernel, gv.dense.bias])?;

        let e = GanEpoch {
            epoch,
            gen_loss,
            disc_loss,
            disc_acc_real,
            disc_acc_fake,
        };
        if epoch % 100 == 0 || epoch == config.epochs {
            info!("{e}");
        }
        on_epoch(&e);
        report.epochs.push(e);
    }

    let probe_fake = generator_forward(&gen, &probe_noise)?;
    report.gap_final = Some(embedding_moment_gap(&real, &probe_fake)?);
    let after = encoder.checksum();
    if after != checksum {
        return Err(Error::Internal(format!(
            "encoder weights changed during stage 2 ({checksum} -> {after})"
        )));
    }
    info!("encoder checksum after stage 2: {after}");
    Ok(TrainedGan {
        generator: gen,
        discriminator: disc,
        report,
    })
}

/// Checksum of generator and discriminator tensors together.
pub fn gan_checksum<T: Scalar>(gen: &Generator<T>, disc: &Discriminator<T>) -> String {
    params_checksum(gen.named_tensors().into_iter().chain(disc.named_tensors()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{split_corpus, synthetic::synthetic_corpus, ParallelData};

    #[test]
    fn noise_bounds_and_determinism() {
        let a = sample_noise::<f64>(50, 20, &mut RngStream::new(3)).unwrap();
        let b = sample_noise::<f64>(50, 20, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(sample_noise::<f32>(0, 3, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn noise_moments() {
        let t = sample_noise::<f64>(1000, 1000, &mut RngStream::new(11)).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn generator_hand_values() {
        let gen = Generator {
            dense: Dense {
                kernel: Tensor::from_f64(&[2, 3], &[1.0, -2.0, 0.5, 0.25, 1.0, -1.0]).unwrap(),
                bias: Tensor::from_f64(&[3], &[0.0, 0.1, 0.2]).unwrap(),
            },
            activation: GenActivation::Relu,
        };
        let noise = Tensor::from_f64(&[1, 2], &[0.5, -0.4]).unwrap();
        let out: Tensor<f64> = generator_forward(&gen, &noise).unwrap();
        // pre-activations: 0.4, -1.3, 0.85
        let want = [0.4f64, 0.0, 0.85];
        for (o, w) in out.data().iter().zip(want) {
            assert!((o - w).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_outputs_non_negative_and_zero_for_zero_weights() {
        let mut rng = RngStream::new(1);
        let gen = Generator::<f32>::new(16, 12, GenActivation::Relu, &mut rng);
        let noise = sample_noise(40, 16, &mut rng).unwrap();
        assert!(generator_forward(&gen, &noise)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v >= 0.0));
        let zero = Generator {
            dense: Dense::<f32>::zeros(16, 12),
            activation: GenActivation::Relu,
        };
        assert!(generator_forward(&zero, &noise)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let bad = Tensor::<f32>::zeros(&[2, 15]);
        assert!(matches!(
            generator_forward(&gen, &bad),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn discriminator_range_and_zero_weights() {
        let mut rng = RngStream::new(2);
        let emb = sample_noise::<f64>(10, 8, &mut rng).unwrap();
        let zero = Discriminator::<f64>::zeros(8, 5);
        assert!(discriminator_forward(&zero, &emb)
            .unwrap()
            .data()
            .iter()
            .all(|&p| p == 0.5));
        let d = Discriminator::<f64>::new(8, 5, &mut rng);
        let p = discriminator_forward(&d, &emb.map(|v| v * 1e4)).unwrap();
        assert_eq!(p.shape(), &[10, 1]);
        assert!(p
            .data()
            .iter()
            .all(|&v| (PROB_EPS..=1.0 - PROB_EPS).contains(&v)));
        assert!(discriminator_forward(&d, &Tensor::zeros(&[1, 7])).is_err());
    }

    #[test]
    fn generator_loss_is_bce_against_one() {
        let mut rng = RngStream::new(4);
        let gen = Generator::<f64>::new(6, 4, GenActivation::Relu, &mut rng);
        let disc = Discriminator::<f64>::new(4, 3, &mut rng);
        let noise = sample_noise::<f64>(5, 6, &mut rng).unwrap();
        let p = discriminator_forward(&disc, &generator_forward(&gen, &noise).unwrap()).unwrap();
        let want = -p.data().iter().map(|p| p.ln()).sum::<f64>() / 5.0;

        let mut g = Graph::new();
        let gv = gen.bind(&mut g, true);
        let dv = disc.bind(&mut g, false);
        let z = g.input(noise);
        let f = gv.forward(&mut g, z).unwrap();
        let pred = dv.forward(&mut g, f).unwrap();
        let loss = g.binary_cross_entropy(pred, &[1.0; 5]).unwrap();
        assert!((g.scalar(loss) - want).abs() < 1e-12);
        g.backward(loss).unwrap();
        assert!(g.grad(gv.dense.kernel).unwrap().iter().any(|&v| v != 0.0));
        assert!(g.grad(dv.head.kernel).is_none());
    }

    #[test]
    fn moment_gap_closed_forms() {
        let mut rng = RngStream::new(6);
        let real = sample_noise::<f64>(30, 512, &mut rng).unwrap();
        let same = embedding_moment_gap(&real, &real).unwrap();
        assert_eq!((same.mean_gap, same.std_gap), (0.0, 0.0));
        let shifted = real.map(|v| v + 1.0);
        let gap = embedding_moment_gap(&real, &shifted).unwrap();
        assert!((gap.mean_gap - 512f64.sqrt()).abs() < 1e-9);
        assert!(gap.std_gap < 1e-9);
        assert!(embedding_moment_gap(&real, &Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn cycler_covers_without_replacement() {
        let mut rng = RngStream::new(0);
        let mut c = Cycler::new(10, &mut rng);
        let mut first: Vec<usize> = c.next_batch(4, &mut rng);
        first.extend(c.next_batch(6, &mut rng));
        first.sort();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        assert_eq!(c.next_batch(25, &mut rng).len(), 25);
    }

    #[test]
    fn short_run_keeps_encoder_and_moves_generator() {
        let c = synthetic_corpus(40, 3);
        let d = ParallelData::prepare(&split_corpus(&c).unwrap()).unwrap();
        let enc = Seq2SeqParams::<f32>::new(
            d.source_vocab.table_size(),
            d.target_vocab.table_size(),
            6,
            5,
            &mut RngStream::new(1),
        );
        let before = enc.checksum();
        let cfg = GanConfig {
            epochs: 5,
            batch_size: 8,
            noise_width: 7,
            disc_units: 9,
            probe_size: 20,
            ..Default::default()
        };
        let rng = RngStream::new(5);
        let out = train_gan(&cfg, &enc, &d.train.source, &rng, |_| {}).unwrap();
        assert_eq!(enc.checksum(), before);
        assert_eq!(out.report.encoder_checksum, before);
        assert_eq!(out.report.epochs.len(), 5);
        for e in &out.report.epochs {
            assert!(e.gen_loss >= 0.0 && e.disc_loss >= 0.0);
            assert!(
                (0.0..=1.0).contains(&e.disc_acc_real) && (0.0..=1.0).contains(&e.disc_acc_fake)
            );
        }
        let init = Generator::<f32>::new(
            7,
            10,
            GenActivation::Relu,
            &mut rng.substream("init/generator"),
        );
        assert_ne!(init.dense.kernel, out.generator.dense.kernel);
        let again = train_gan(&cfg, &enc, &d.train.source, &rng, |_| {}).unwrap();
        assert_eq!(
            gan_checksum(&again.generator, &again.discriminator),
            gan_checksum(&out.generator, &out.discriminator)
        );
        assert!(out
            .report
            .to_csv()
            .starts_with("epoch,gen_loss,disc_loss,disc_acc_real,disc_acc_fake\n1,"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = RngStream::new(9);
        let gen = Generator::<f32>::new(5, 4, GenActivation::Tanh, &mut rng);
        let disc = Discriminator::<f32>::new(4, 3, &mut rng);
        let mut ck = Checkpoint::new();
        gen.write_checkpoint(&mut ck);
        disc.write_checkpoint(&mut ck);
        let ck = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(Generator::<f32>::read_checkpoint(&ck).unwrap(), gen);
        assert_eq!(Discriminator::<f32>::read_checkpoint(&ck).unwrap(), disc);
    }
}
