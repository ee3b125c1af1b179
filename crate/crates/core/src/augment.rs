//! Stage 3: decode generator outputs into a labelled synthetic corpus.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gan::{generator_forward, sample_noise, Generator};
use crate::graph::Graph;
use crate::quality::{QualityLabel, QualityModel};
use crate::rng::RngStream;
use crate::seq2seq::{decode_graph, Seq2SeqParams};
use crate::tensor::{argmax, Scalar, Tensor};
use crate::text::Vocabulary;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSentence {
    pub text: String,
    /// Word ids with padding removed.
    pub ids: Vec<u32>,
    pub quality: QualityLabel,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedCorpus {
    pub sentences: Vec<GeneratedSentence>,
}

impl GeneratedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn label_counts(&self) -> Vec<(QualityLabel, usize)> {
        QualityLabel::ALL
            .iter()
            .map(|&l| (l, self.sentences.iter().filter(|s| s.quality == l).count()))
            .collect()
    }

    /// One sentence per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.text);
            out.push('\n');
        }
        out
    }

    /// `index,sentence,label` rows followed by a `#`-prefixed summary block.
    pub fn quality_report(&self) -> Result<String> {
        let m = quality_metrics(self)?;
        let mut out = String::from("index,sentence,label\n");
        for (i, s) in self.sentences.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", s.text, s.quality);
        }
        let _ = writeln!(out, "# sentences,{}", self.len());
        for (l, c) in self.label_counts() {
            let _ = writeln!(out, "# count_{l},{c}");
        }
        let _ = writeln!(out, "# repetition_rate,{:.6}", m.repetition_rate);
        let _ = writeln!(out, "# distinct_1,{:.6}", m.distinct_1);
        let _ = writeln!(out, "# distinct_2,{:.6}", m.distinct_2);
        let _ = writeln!(out, "# empty_rate,{:.6}", m.empty_rate);
        let _ = writeln!(out, "# mean_length,{:.6}", m.mean_length);
        Ok(out)
    }
}

/// Drop padding and map ids to words.
pub fn detokenize(ids: &[u32], vocab: &Vocabulary) -> Result<String> {
    let words: Vec<&str> = ids
        .iter()
        .filter(|&&id| id != 0)
        .map(|&id| {
            vocab.word(id).ok_or(Error::Index {
                what: "vocabulary id",
                index: id as usize,
                size: vocab.size() + 1,
            })
        })
        .collect::<Result<_>>()?;
    Ok(words.join(" "))
}

/// Greedy per-step argmax over padding and real words; the unknown-word
/// class is never emitted.
pub fn decode_greedy<T: Scalar>(
    decoder: &Seq2SeqParams<T>,
    latent: &Tensor<T>,
    t_tgt: usize,
    vocab_size: usize,
) -> Result<Vec<Vec<u32>>> {
    let classes = decoder.target_classes();
    if vocab_size + 1 > classes {
        return Err(Error::Shape {
            op: "decode_greedy",
            lhs: vec![vocab_size + 1],
            rhs: vec![classes],
        });
    }
    let mut g = Graph::new();
    let vars = decoder.bind(&mut g, false);
    let lat = g.input(latent.clone());
    let logits = decode_graph(&mut g, &vars, lat, t_tgt, None)?;
    let rows: Vec<u32> = g
        .value(logits)
        .data()
        .chunks(classes)
        .map(|row| argmax(&row[..=vocab_size]) as u32)
        .collect();
    Ok(rows
        .chunks(t_tgt)
        .map(|s| s.iter().copied().filter(|&id| id != 0).collect())
        .collect())
}

const GENERATE_CHUNK: usize = 256;

/// Noise → generator → frozen decoder → labelled sentences.
///
/// Each chunk of 256 sentences draws noise from its own indexed sub-stream.
pub fn generate_corpus<T: Scalar>(
    gen: &Generator<T>,
    decoder: &Seq2SeqParams<T>,
    vocab: &Vocabulary,
    quality: &QualityModel,
    n: usize,
    t_tgt: usize,
    rng: &RngStream,
) -> Result<GeneratedCorpus> {
    if n == 0 {
        return Err(Error::usage("number of sentences must be at least 1"));
    }
    if gen.latent_width() != decoder.latent_width() {
        return Err(Error::Shape {
            op: "generate_corpus",
            lhs: vec![gen.latent_width()],
            rhs: vec![decoder.latent_width()],
        });
    }
    let noise_rng = rng.substream("generate");
    let mut sentences = Vec::with_capacity(n);
    for (chunk, start) in (0..n).step_by(GENERATE_CHUNK).enumerate() {
        let b = GENERATE_CHUNK.min(n - start);
        let noise = sample_noise(b, gen.noise_width(), &mut noise_rng.indexed(chunk as u64))?;
        let latent = generator_forward(gen, &noise)?;
        for ids in decode_greedy(decoder, &latent, t_tgt, vocab.size())? {
            let text = detokenize(&ids, vocab)?;
            let label = quality.classify(&ids);
            sentences.push(GeneratedSentence {
                text,
                ids,
                quality: label,
            });
        }
    }
    Ok(GeneratedCorpus { sentences })
}

/// Corpus-level degeneracy statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityMetrics {
    pub repetition_rate: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub empty_rate: f64,
    pub mean_length: f64,
}

pub fn quality_metrics(c: &GeneratedCorpus) -> Result<QualityMetrics> {
    if c.is_empty() {
        return Err(Error::usage("cannot compute metrics of an empty corpus"));
    }
    let n = c.len() as f64;
    let rate = |l: QualityLabel| c.sentences.iter().filter(|s| s.quality == l).count() as f64 / n;
    let mut uni = HashSet::new();
    let mut bi = HashSet::new();
    let (mut n1, mut n2) = (0usize, 0usize);
    for s in &c.sentences {
        n1 += s.ids.len();
        uni.extend(s.ids.iter().copied());
        for w in s.ids.windows(2) {
            bi.insert((w[0], w[1]));
            n2 += 1;
        }
    }
    let ratio = |u: usize, t: usize| if t == 0 { 0.0 } else { u as f64 / t as f64 };
    Ok(QualityMetrics {
        repetition_rate: rate(QualityLabel::Repetition),
        distinct_1: ratio(uni.len(), n1),
        distinct_2: ratio(bi.len(), n2),
        empty_rate: rate(QualityLabel::Empty),
        mean_length: n1 as f64 / n,
    })
}

/// Order-preserving subset whose labels are in `keep`.
pub fn filter_corpus(c: &GeneratedCorpus, keep: &[QualityLabel]) -> GeneratedCorpus {
    GeneratedCorpus {
        sentences: c
            .sentences
            .iter()
            .filter(|s| keep.contains(&s.quality))
            .cloned()
            .collect(),
    }
}

pub const DEFAULT_KEEP: [QualityLabel; 1] = [QualityLabel::Good];
