//! Id encoding, zero padding, and one-hot targets.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::text::clean::words;
use crate::text::vocab::Vocabulary;

/// Right-padded id matrix, one row per sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedBatch {
    ids: Vec<u32>,
    t_max: usize,
    lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn from_rows(rows: &[Vec<u32>], t_max: usize) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::usage("padded length must be at least 1"));
        }
        let mut ids = Vec::with_capacity(rows.len() * t_max);
        let mut lengths = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() > t_max {
                return Err(Error::TooLong {
                    len: row.len(),
                    max: t_max,
                });
            }
            ids.extend_from_slice(row);
            ids.extend(std::iter::repeat_n(0, t_max - row.len()));
            lengths.push(row.len());
        }
        Ok(Self {
            ids,
            t_max,
            lengths,
        })
    }

    pub fn rows(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.t_max..(r + 1) * self.t_max]
    }

    /// Ids at time step `t` for every row.
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.rows())
            .map(|r| self.ids[r * self.t_max + t] as usize)
            .collect()
    }

    /// All ids, row-major, as class indices.
    pub fn flat(&self) -> Vec<usize> {
        self.ids.iter().map(|&i| i as usize).collect()
    }

    pub fn max_id(&self) -> u32 {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> PaddedBatch {
        let mut ids = Vec::with_capacity(rows.len() * self.t_max);
        let mut lengths = Vec::with_capacity(rows.len());
        for &r in rows {
            ids.extend_from_slice(self.row(r));
            lengths.push(self.lengths[r]);
        }
        PaddedBatch {
            ids,
            t_max: self.t_max,
            lengths,
        }
    }

    /// Integer id tensor `[B, T_max]`.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::new(
            vec![self.rows(), self.t_max],
            self.ids.iter().map(|&i| T::from_u32(i).unwrap()).collect(),
        )
    }
}

/// Longest sentence, in words.
pub fn longest<S: AsRef<str>>(sentences: &[S]) -> usize {
    sentences
        .iter()
        .map(|s| words(s.as_ref()).count())
        .max()
        .unwrap_or(0)
}

/// Encode cleaned sentences and right-pad them to `t_max` with zeros.
///
/// Every word must be in `vocab`, and no sentence may exceed `t_max` words.
pub fn encode_and_pad<S: AsRef<str>>(
    sentences: &[S],
    vocab: &Vocabulary,
    t_max: usize,
) -> Result<PaddedBatch> {
    let rows = sentences
        .iter()
        .map(|s| {
            words(s.as_ref())
                .map(|w| vocab.id(w).ok_or_else(|| Error::UnknownWord(w.to_string())))
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PaddedBatch::from_rows(&rows, t_max)
}

/// Evaluation-time encoding: unknown words map to [`Vocabulary::unknown_id`]
/// and sentences longer than `t_max` are truncated.
pub fn encode_lenient<S: AsRef<str>>(
    sentences: &[S],
    vocab: &Vocabulary,
    t_max: usize,
) -> Result<PaddedBatch> {
    let unk = vocab.unknown_id();
    let rows: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| {
            words(s.as_ref())
                .take(t_max)
                .map(|w| vocab.id(w).unwrap_or(unk))
                .collect()
        })
        .collect();
    PaddedBatch::from_rows(&rows, t_max)
}

/// One-hot planes `[B, T, vocab_size + 1]`; class 0 is padding.
pub fn one_hot_targets<T: Scalar>(batch: &PaddedBatch, vocab_size: usize) -> Result<Tensor<T>> {
    let classes = vocab_size + 1;
    if let Some(&bad) = batch.ids.iter().find(|&&i| i as usize >= classes) {
        return Err(Error::Index {
            what: "target id",
            index: bad as usize,
            size: classes,
        });
    }
    if batch.is_empty() {
        return Err(Error::usage("one_hot_targets needs a non-empty batch"));
    }
    let mut out = Tensor::zeros(&[batch.rows(), batch.t_max, classes]);
    for (pos, &id) in batch.ids.iter().enumerate() {
        out.data_mut()[pos * classes + id as usize] = T::one();
    }
    Ok(out)
}
