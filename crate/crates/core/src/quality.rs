//! Heuristic quality labels for generated sentences.
//!
//! A bigram model and a sentence-level co-occurrence (PMI) table are fitted
//! on the target-language training split, both with add-one smoothing. The
//! two thresholds default to the 5th percentile of the matching score over
//! the training sentences themselves.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QualityLabel {
    Good,
    Repetition,
    Nonsensical,
    Unrelated,
    Empty,
}

impl QualityLabel {
    pub const ALL: [QualityLabel; 5] = [
        QualityLabel::Good,
        QualityLabel::Repetition,
        QualityLabel::Nonsensical,
        QualityLabel::Unrelated,
        QualityLabel::Empty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityLabel::Good => "good",
            QualityLabel::Repetition => "repetition",
            QualityLabel::Nonsensical => "nonsensical",
            QualityLabel::Unrelated => "unrelated",
            QualityLabel::Empty => "empty",
        }
    }
}

impl fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QualityLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::usage(format!("unknown quality label {s:?}")))
    }
}

/// True if a token occurs three or more times, two neighbours are equal, or
/// a bigram occurs twice.
pub fn is_repetitive(ids: &[u32]) -> bool {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &id in ids {
        let c = counts.entry(id).or_default();
        *c += 1;
        if *c >= 3 {
            return true;
        }
    }
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return true;
    }
    let mut seen = HashSet::new();
    ids.windows(2).any(|w| !seen.insert((w[0], w[1])))
}

fn pair(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Linear-interpolated percentile of `xs` (`q` in `[0, 100]`).
pub fn percentile(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Bigram and co-occurrence statistics of a training corpus.
#[derive(Clone, Debug)]
pub struct QualityModel {
    vocab_size: usize,
    sentences: usize,
    context: HashMap<u32, u64>,
    bigrams: HashMap<(u32, u32), u64>,
    doc_freq: HashMap<u32, u64>,
    co_occur: HashMap<(u32, u32), u64>,
    /// Sentences whose mean bigram log-probability falls below this may be
    /// `nonsensical`.
    pub tau_nonsense: f64,
    /// Sentences whose mean pairwise PMI falls below this may be `unrelated`.
    pub tau_unrelated: f64,
}

pub const THRESHOLD_PERCENTILE: f64 = 5.0;

impl QualityModel {
    /// Fit on padding-free id sequences; `vocab_size` is the number of word
    /// types used for smoothing.
    pub fn fit(sentences: &[Vec<u32>], vocab_size: usize) -> Result<Self> {
        if sentences.iter().all(|s| s.len() < 2) {
            return Err(Error::usage(
                "quality model needs at least one sentence of two or more tokens",
            ));
        }
        let mut m = QualityModel {
            vocab_size: vocab_size.max(1),
            sentences: sentences.len(),
            context: HashMap::new(),
            bigrams: HashMap::new(),
            doc_freq: HashMap::new(),
            co_occur: HashMap::new(),
            tau_nonsense: f64::NEG_INFINITY,
            tau_unrelated: f64::NEG_INFINITY,
        };
        for s in sentences {
            for w in s.windows(2) {
                *m.context.entry(w[0]).or_default() += 1;
                *m.bigrams.entry((w[0], w[1])).or_default() += 1;
            }
            let mut types: Vec<u32> = s.clone();
            types.sort_unstable();
            types.dedup();
            for (i, &a) in types.iter().enumerate() {
                *m.doc_freq.entry(a).or_default() += 1;
                for &b in &types[i + 1..] {
                    *m.co_occur.entry((a, b)).or_default() += 1;
                }
            }
        }
        let bigram: Vec<f64> = sentences.iter().filter_map(|s| m.bigram_score(s)).collect();
        let pmi: Vec<f64> = sentences.iter().filter_map(|s| m.pmi_score(s)).collect();
        m.tau_nonsense = percentile(&bigram, THRESHOLD_PERCENTILE).unwrap_or(f64::NEG_INFINITY);
        m.tau_unrelated = percentile(&pmi, THRESHOLD_PERCENTILE).unwrap_or(f64::NEG_INFINITY);
        Ok(m)
    }

    /// Mean add-one-smoothed `ln P(w2 | w1)` over adjacent pairs.
    pub fn bigram_score(&self, ids: &[u32]) -> Option<f64> {
        if ids.len() < 2 {
            return None;
        }
        let v = self.vocab_size as f64;
        let total: f64 = ids
            .windows(2)
            .map(|w| {
                let c12 = self.bigrams.get(&(w[0], w[1])).copied().unwrap_or(0) as f64;
                let c1 = self.context.get(&w[0]).copied().unwrap_or(0) as f64;
                ((c12 + 1.0) / (c1 + v)).ln()
            })
            .sum();
        Some(total / (ids.len() - 1) as f64)
    }

    /// Mean add-one-smoothed sentence-level PMI over distinct token pairs.
    pub fn pmi_score(&self, ids: &[u32]) -> Option<f64> {
        let n = self.sentences as f64;
        let df = |a: u32| self.doc_freq.get(&a).copied().unwrap_or(0) as f64;
        let (mut total, mut count) = (0.0, 0usize);
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if a == b {
                    continue;
                }
                let co = self.co_occur.get(&pair(a, b)).copied().unwrap_or(0) as f64;
                total += ((co + 1.0) * (n + 1.0) / ((df(a) + 1.0) * (df(b) + 1.0))).ln();
                count += 1;
            }
        }
        (count > 0).then(|| total / count as f64)
    }

    pub fn has_unseen_bigram(&self, ids: &[u32]) -> bool {
        ids.windows(2)
            .any(|w| !self.bigrams.contains_key(&(w[0], w[1])))
    }

    pub fn has_unseen_pair(&self, ids: &[u32]) -> bool {
        ids.iter().enumerate().any(|(i, &a)| {
            ids[i + 1..]
                .iter()
                .any(|&b| a != b && !self.co_occur.contains_key(&pair(a, b)))
        })
    }

    /// Label a padding-free id sequence.
    ///
    /// The low-score labels also require evidence the training corpus never
    /// saw: an unseen word pair for `unrelated`, an unseen bigram for
    /// `nonsensical`.
    pub fn classify(&self, ids: &[u32]) -> QualityLabel {
        if ids.is_empty() {
            return QualityLabel::Empty;
        }
        if is_repetitive(ids) {
            return QualityLabel::Repetition;
        }
        if ids.len() < 2 {
            return QualityLabel::Good;
        }
        if self.pmi_score(ids).is_some_and(|s| s < self.tau_unrelated) && self.has_unseen_pair(ids)
        {
            return QualityLabel::Unrelated;
        }
        if self
            .bigram_score(ids)
            .is_some_and(|s| s < self.tau_nonsense)
            && self.has_unseen_bigram(ids)
        {
            return QualityLabel::Nonsensical;
        }
        QualityLabel::Good
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> QualityModel {
        let s = vec![
            vec![1, 2, 3],
            vec![1, 2, 4],
            vec![5, 6, 7, 8],
            vec![5, 6, 3],
            vec![9, 10],
            vec![1, 4, 3, 2],
        ];
        QualityModel::fit(&s, 10).unwrap()
    }

    #[test]
    fn exemplar_is_repetition() {
        // maryam discovered hes hes am am are are
        let ids = [11, 12, 13, 13, 14, 14, 15, 15];
        assert_eq!(toy().classify(&ids), QualityLabel::Repetition);
    }

    #[test]
    fn repetition_rules() {
        assert!(is_repetitive(&[1, 2, 1, 3, 1]));
        assert!(is_repetitive(&[1, 1]));
        assert!(is_repetitive(&[1, 2, 3, 1, 2]));
        assert!(!is_repetitive(&[1, 2, 3, 1]));
        assert!(!is_repetitive(&[]));
    }

    #[test]
    fn empty_and_single() {
        let m = toy();
        assert_eq!(m.classify(&[]), QualityLabel::Empty);
        assert_eq!(m.classify(&[99]), QualityLabel::Good);
    }

    #[test]
    fn training_sentences_are_good() {
        let m = toy();
        for s in [
            vec![1, 2, 3],
            vec![5, 6, 7, 8],
            vec![9, 10],
            vec![1, 4, 3, 2],
        ] {
            assert_eq!(m.classify(&s), QualityLabel::Good, "{s:?}");
        }
    }

    #[test]
    fn low_scores_need_unseen_evidence() {
        let mut m = toy();
        m.tau_unrelated = 10.0;
        m.tau_nonsense = 0.0;
        assert_eq!(m.classify(&[9, 7]), QualityLabel::Unrelated);
        assert_eq!(m.classify(&[9, 10]), QualityLabel::Good);
        m.tau_unrelated = f64::NEG_INFINITY;
        assert_eq!(m.classify(&[3, 2, 1]), QualityLabel::Nonsensical);
        assert_eq!(m.classify(&[5, 6, 7]), QualityLabel::Good);
    }

    #[test]
    fn bigram_score_hand_value() {
        let m = toy();
        // context(1) = 3, bigram(1,2) = 2, V = 10
        let want = (3.0f64 / 13.0).ln();
        assert!((m.bigram_score(&[1, 2]).unwrap() - want).abs() < 1e-12);
        // N = 6, df(9) = df(10) = 1, co = 1
        let pmi = (2.0f64 * 7.0 / 4.0).ln();
        assert!((m.pmi_score(&[9, 10]).unwrap() - pmi).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
        assert_eq!(percentile(&[0.0, 10.0], 5.0), Some(0.5));
        assert_eq!(percentile(&[], 5.0), None);
    }

    #[test]
    fn labels_parse() {
        for l in QualityLabel::ALL {
            assert_eq!(l.as_str().parse::<QualityLabel>().unwrap(), l);
        }
        assert!("fine".parse::<QualityLabel>().is_err());
    }
}
