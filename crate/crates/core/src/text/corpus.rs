//! Tab-separated parallel corpus ingestion and positional splits.

use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::text::clean::clean_sentence;

/// Ordered sentence pairs, as they appear in the source file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(String, String)>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<&str> {
        self.pairs.iter().map(|(s, _)| s.as_str()).collect()
    }

    pub fn targets(&self) -> Vec<&str> {
        self.pairs.iter().map(|(_, t)| t.as_str()).collect()
    }

    /// Cleaned copies of both sides.
    pub fn cleaned(&self) -> (Vec<String>, Vec<String>) {
        self.pairs
            .iter()
            .map(|(s, t)| (clean_sentence(s), clean_sentence(t)))
            .unzip()
    }

    fn slice(&self, start: usize, end: usize) -> ParallelCorpus {
        ParallelCorpus::new(self.pairs[start..end].to_vec())
    }
}

/// Lines skipped while loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Lines with fewer than two tab-separated fields.
    pub malformed: usize,
    /// Blank lines, or pairs where a side is empty after cleaning.
    pub empty: usize,
}

/// Parse `source<TAB>target[<TAB>ignored...]` lines, keeping the first
/// `max_pairs` usable ones in file order.
pub fn parse_corpus(text: &str, max_pairs: usize) -> (ParallelCorpus, LoadReport) {
    let mut report = LoadReport::default();
    let mut pairs = Vec::new();
    for line in text.lines() {
        if pairs.len() >= max_pairs {
            break;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            report.empty += 1;
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(src), Some(tgt)) = (fields.next(), fields.next()) else {
            report.malformed += 1;
            continue;
        };
        if clean_sentence(src).is_empty() || clean_sentence(tgt).is_empty() {
            report.empty += 1;
            continue;
        }
        pairs.push((src.to_string(), tgt.to_string()));
    }
    (ParallelCorpus::new(pairs), report)
}

pub fn load_corpus(path: &Path, max_pairs: usize) -> Result<(ParallelCorpus, LoadReport)> {
    let text = fs::read_to_string(path)?;
    let (corpus, report) = parse_corpus(&text, max_pairs);
    if report.malformed > 0 || report.empty > 0 {
        warn!(
            "{}: skipped {} malformed and {} empty lines",
            path.display(),
            report.malformed,
            report.empty
        );
    }
    Ok((corpus, report))
}

/// Positional train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplits {
    pub train: ParallelCorpus,
    pub validation: ParallelCorpus,
    pub test: ParallelCorpus,
}

pub const MIN_SPLIT_PAIRS: usize = 20;

/// 90/5/5 positional split: validation and test each take `len / 20` pairs
/// (1,000 of 20,000), test being the last block.
pub fn split_corpus(c: &ParallelCorpus) -> Result<CorpusSplits> {
    let n = c.len();
    if n < MIN_SPLIT_PAIRS {
        return Err(Error::usage(format!(
            "corpus has {n} pairs; at least {MIN_SPLIT_PAIRS} are needed to split"
        )));
    }
    let held = n / 20;
    let train_end = n - 2 * held;
    Ok(CorpusSplits {
        train: c.slice(0, train_end),
        validation: c.slice(train_end, n - held),
        test: c.slice(n - held, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> ParallelCorpus {
        ParallelCorpus::new((0..n).map(|i| (format!("s{i}"), format!("t{i}"))).collect())
    }

    #[test]
    fn keeps_file_order_and_limit() {
        let (c, r) = parse_corpus("a\tb\nc\td\ne\tf\n", 2);
        assert_eq!(
            c.pairs,
            vec![("a".into(), "b".into()), ("c".into(), "d".into())]
        );
        assert_eq!(r, LoadReport::default());
    }

    #[test]
    fn three_column_format() {
        let (c, _) = parse_corpus(
            "Hi.\tHola.\tCC-BY 2.0 (France) Attribution: tatoeba.org\r\n",
            10,
        );
        assert_eq!(c.pairs, vec![("Hi.".into(), "Hola.".into())]);
    }

    #[test]
    fn skips_and_counts_bad_lines() {
        let (c, r) = parse_corpus("only one field\n\n?!\t¡!\nok\tbien\n", 10);
        assert_eq!(c.len(), 1);
        assert_eq!(r.malformed, 1);
        assert_eq!(r.empty, 2);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus(Path::new("/definitely/not/here.tsv"), 10).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn split_sizes() {
        let s = split_corpus(&numbered(20_000)).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (18_000, 1_000, 1_000)
        );
        assert_eq!(s.test.pairs[999].0, "s19999");
        let s = split_corpus(&numbered(200)).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (180, 10, 10)
        );
    }

    #[test]
    fn split_is_an_ordered_partition() {
        let c = numbered(237);
        let s = split_corpus(&c).unwrap();
        let mut joined = s.train.pairs.clone();
        joined.extend(s.validation.pairs.clone());
        joined.extend(s.test.pairs.clone());
        assert_eq!(joined, c.pairs);
    }

    #[test]
    fn tiny_corpus_is_rejected() {
        assert!(matches!(split_corpus(&numbered(19)), Err(Error::Usage(_))));
    }
}
