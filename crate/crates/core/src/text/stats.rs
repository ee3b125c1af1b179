//! Per-language corpus characteristics.

use crate::error::{Error, Result};
use crate::text::clean::words;
use crate::text::vocab::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub avg_sentence_length: f64,
    pub max_sentence_length: usize,
    /// Mean of every token id in the encoded (unpadded) corpus.
    pub id_mean: f64,
    /// Population standard deviation of the same ids.
    pub id_std: f64,
}

/// Words outside `vocab` count as [`Vocabulary::unknown_id`].
pub fn corpus_stats<S: AsRef<str>>(sentences: &[S], vocab: &Vocabulary) -> Result<CorpusStats> {
    if sentences.is_empty() {
        return Err(Error::usage("corpus_stats needs at least one sentence"));
    }
    let unk = vocab.unknown_id() as f64;
    let mut total_words = 0usize;
    let mut max_len = 0usize;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for s in sentences {
        let mut len = 0;
        for w in words(s.as_ref()) {
            let id = vocab.id(w).map_or(unk, f64::from);
            sum += id;
            sum_sq += id * id;
            len += 1;
        }
        total_words += len;
        max_len = max_len.max(len);
    }
    let n = total_words.max(1) as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(CorpusStats {
        sentences: sentences.len(),
        avg_sentence_length: total_words as f64 / sentences.len() as f64,
        max_sentence_length: max_len,
        id_mean: if total_words == 0 { 0.0 } else { mean },
        id_std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        let v = Vocabulary::fit(&["a b", "a b c d"]).unwrap();
        let s = corpus_stats(&["a b", "a b c d"], &v).unwrap();
        assert_eq!(s.avg_sentence_length, 3.0);
        assert_eq!(s.max_sentence_length, 4);
        assert!(s.avg_sentence_length <= s.max_sentence_length as f64);
    }

    #[test]
    fn id_moments() {
        let v = Vocabulary::fit(&["a"]).unwrap();
        let s = corpus_stats(&["a a"], &v).unwrap();
        assert_eq!(s.id_mean, 1.0);
        assert_eq!(s.id_std, 0.0);

        // ids 1,1,2 -> mean 4/3, population variance 2/9
        let v = Vocabulary::fit(&["a a b"]).unwrap();
        let s = corpus_stats(&["a a b"], &v).unwrap();
        assert!((s.id_mean - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.id_std - (2.0f64 / 9.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_usage_error() {
        let v = Vocabulary::fit(&["a"]).unwrap();
        assert!(corpus_stats::<&str>(&[], &v).is_err());
    }
}
