//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! Defaults reproduce the published hyperparameters.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrgan::gan::GanConfig;
use lrgan::seq2seq::Seq2SeqConfig;

use crate::CliError;

/// Which stage-1 checkpoint feeds later stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage1 {
    Final,
    Best,
}

impl Stage1 {
    pub fn file_name(self) -> &'static str {
        match self {
            Stage1::Final => "final.ckpt",
            Stage1::Best => "best.ckpt",
        }
    }
}

impl FromStr for Stage1 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "final" => Ok(Stage1::Final),
            "best" => Ok(Stage1::Best),
            _ => Err(format!("expected final or best, got {s:?}")),
        }
    }
}

impl std::fmt::Display for Stage1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage1::Final => "final",
            Stage1::Best => "best",
        })
    }
}

/// Optional override of a self-calibrated threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Auto,
    Fixed(f64),
}

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Threshold::Auto);
        }
        s.parse()
            .map(Threshold::Fixed)
            .map_err(|_| format!("expected auto or a number, got {s:?}"))
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Auto => f.write_str("auto"),
            Threshold::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathValue(pub PathBuf);

impl FromStr for PathValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("path must not be empty".into());
        }
        Ok(PathValue(PathBuf::from(s)))
    }
}

impl std::fmt::Display for PathValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.display())
    }
}

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($field) ),*];

            /// `key=value` lines in declaration order.
            pub fn serialize(&self) -> String {
                let mut out = String::new();
                $( let _ = writeln!(out, "{}={}", stringify!($field), self.$field); )*
                out
            }

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
                match key {
                    $( stringify!($field) => {
                        self.$field = value.parse::<$ty>().map_err(|e| {
                            CliError::Usage(format!("invalid value {value:?} for {key}: {e}"))
                        })?;
                    } )*
                    _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }
        }
    };
}

run_config! {
    seed: u64 = 42,
    data: PathValue = PathValue("data/spa.txt".into()),
    max_pairs: usize = 20_000,
    out: PathValue = PathValue("runs".into()),
    epochs: usize = 400,
    batch: usize = 30,
    embed_dim: usize = 256,
    units: usize = 256,
    encoder_dropout: f64 = 0.5,
    decoder_dropout: f64 = 0.5,
    logits_dropout: f64 = 0.5,
    l2_encoder: f64 = 5e-5,
    l2_decoder: f64 = 1e-5,
    lr: f64 = 2e-3,
    beta1: f64 = 0.7,
    beta2: f64 = 0.97,
    gan_epochs: usize = 8000,
    gan_batch: usize = 1900,
    noise_width: usize = 512,
    disc_units: usize = 1024,
    gan_lr: f64 = 1e-4,
    gen_lr: f64 = 4e-4,
    disc_lr: f64 = 1e-4,
    gan_beta1: f64 = 0.9,
    gan_beta2: f64 = 0.999,
    gen_tanh: bool = false,
    probe_size: usize = 1000,
    stage1: Stage1 = Stage1::Final,
    n: usize = 1000,
    tau_nonsense: Threshold = Threshold::Auto,
    tau_unrelated: Threshold = Threshold::Auto,
}

impl RunConfig {
    /// Parse `key=value` text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key=value, got {raw:?}",
                    n + 1
                ))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn seq2seq(&self) -> Seq2SeqConfig {
        Seq2SeqConfig {
            embed_dim: self.embed_dim,
            units: self.units,
            encoder_dropout: self.encoder_dropout,
            decoder_dropout: self.decoder_dropout,
            logits_dropout: self.logits_dropout,
            l2_encoder: self.l2_encoder,
            l2_decoder: self.l2_decoder,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epochs: self.epochs,
            batch_size: self.batch,
            ..Default::default()
        }
    }

    pub fn gan(&self) -> GanConfig {
        GanConfig {
            epochs: self.gan_epochs,
            batch_size: self.gan_batch,
            noise_width: self.noise_width,
            disc_units: self.disc_units,
            gan_lr: self.gan_lr,
            gen_lr: self.gen_lr,
            disc_lr: self.disc_lr,
            beta1: self.gan_beta1,
            beta2: self.gan_beta2,
            tanh_output: self.gen_tanh,
            probe_size: self.probe_size,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.max_pairs == 0 || self.n == 0 {
            return Err(CliError::Usage("max_pairs and n must be at least 1".into()));
        }
        self.seq2seq().validate()?;
        self.gan().validate()?;
        Ok(())
    }

    pub fn encdec_dir(&self) -> PathBuf {
        self.out.0.join("encdec")
    }

    pub fn gan_dir(&self) -> PathBuf {
        self.out.0.join("gan")
    }

    pub fn generate_dir(&self) -> PathBuf {
        self.out.0.join("generate")
    }

    pub fn sweep_dir(&self) -> PathBuf {
        self.out.0.join("sweep")
    }
}
