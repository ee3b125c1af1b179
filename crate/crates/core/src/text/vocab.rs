//! Frequency-ranked word vocabulary with id 0 reserved for padding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::text::clean::words;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    /// `words[i]` has id `i + 1`.
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Rank words by descending count; ties keep first-occurrence order.
    pub fn fit<S: AsRef<str>>(sentences: &[S]) -> Result<Self> {
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut order = 0usize;
        for s in sentences {
            for w in words(s.as_ref()) {
                let e = counts.entry(w).or_insert_with(|| {
                    order += 1;
                    (0, order)
                });
                e.0 += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::usage("cannot fit a vocabulary on an empty corpus"));
        }
        let mut ranked: Vec<(&str, usize, usize)> = counts
            .into_iter()
            .map(|(w, (c, first))| (w, c, first))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        Self::from_words(ranked.into_iter().map(|(w, _, _)| w.to_string()).collect())
    }

    /// Vocabulary whose ids follow the given order, starting at 1.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::usage(format!("invalid vocabulary word {w:?}")));
            }
            if index.insert(w.clone(), i as u32 + 1).is_some() {
                return Err(Error::usage(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    /// Number of words (padding excluded).
    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Id used for out-of-vocabulary words at evaluation time.
    pub fn unknown_id(&self) -> u32 {
        self.words.len() as u32 + 1
    }

    /// Rows/classes a model needs: padding, every word, and the unknown id.
    pub fn table_size(&self) -> usize {
        self.words.len() + 2
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.words.get(id as usize - 1).map(String::as_str)
    }

    pub fn words(&self) -> impl Iterator<Item = (u32, &str)> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (i as u32 + 1, w.as_str()))
    }

    /// `id<TAB>word` lines sorted by id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, w) in self.words() {
            out.push_str(&format!("{id}\t{w}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (id, word) = line
                .split_once('\t')
                .ok_or_else(|| Error::usage(format!("vocabulary line {}: missing tab", n + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::usage(format!("vocabulary line {}: bad id {id:?}", n + 1)))?;
            if id != words.len() + 1 {
                return Err(Error::usage(format!(
                    "vocabulary line {}: expected id {}, found {id}",
                    n + 1,
                    words.len() + 1
                )));
            }
            words.push(word.to_string());
        }
        Self::from_words(words)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_ranking() {
        let v = Vocabulary::fit(&["a b a"]).unwrap();
        assert_eq!(v.id("a"), Some(1));
        assert_eq!(v.id("b"), Some(2));
    }

    #[test]
    fn ties_break_by_first_occurrence() {
        let v = Vocabulary::fit(&["x", "y"]).unwrap();
        assert_eq!(v.id("x"), Some(1));
        assert_eq!(v.id("y"), Some(2));
        let v = Vocabulary::fit(&["c b a", "a b c", "z"]).unwrap();
        let order: Vec<&str> = v.words().map(|(_, w)| w).collect();
        assert_eq!(order, ["c", "b", "a", "z"]);
    }

    #[test]
    fn round_trip_and_padding() {
        let v = Vocabulary::fit(&["the cat sat on the mat"]).unwrap();
        for (id, w) in v.words() {
            assert_eq!(v.id(w), Some(id));
            assert_eq!(v.word(v.id(w).unwrap()), Some(w));
        }
        assert_eq!(v.word(0), None);
        assert_eq!(v.unknown_id(), 6);
        assert_eq!(v.word(6), None);
    }

    #[test]
    fn empty_corpus_is_a_usage_error() {
        assert!(matches!(Vocabulary::fit::<&str>(&[]), Err(Error::Usage(_))));
        assert!(matches!(Vocabulary::fit(&["", "  "]), Err(Error::Usage(_))));
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::fit(&["él come pan", "yo como pan"]).unwrap();
        let text = v.to_tsv();
        assert!(text.starts_with("1\tpan\n"));
        assert_eq!(Vocabulary::from_tsv(&text).unwrap(), v);
        assert!(Vocabulary::from_tsv("2\tx\n").is_err());
    }
}
