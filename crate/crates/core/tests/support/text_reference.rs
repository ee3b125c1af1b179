//! A deliberately naive reference for the text pipeline.

use lrgan::text::{corpus_stats, parse_corpus, split_corpus, ParallelData};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Every punctuation character the generator below can emit.
const PUNCT: &[char] = &[
    '.', ',', '!', '?', '¿', '¡', '\'', '"', '-', ';', ':', '(', ')', '«', '»', '…', '%', '&', '*',
    '/', '@', '_',
];

const PIECES: &[&str] = &[
    "a", "b", "c", "Ab", "BA", "é", "Ñu", "c.", "¿d?", "e,", "(a)", "b+c", "$5", "«x»", "…",
    "don't", "¡Ya!", "50%", "a/b", "d", "-", "x_y", "@", "Ü", "ß",
];

fn ref_clean(s: &str) -> String {
    let kept: String = s.chars().filter(|c| !PUNCT.contains(c)).collect();
    let lower: String = kept.chars().flat_map(char::to_lowercase).collect();
    let mut out = String::new();
    let mut word = String::new();
    for c in lower.chars().chain(std::iter::once(' ')) {
        if c.is_whitespace() {
            if !word.is_empty() {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&word);
                word.clear();
            }
        } else {
            word.push(c);
        }
    }
    out
}

fn ref_words(s: &str) -> Vec<String> {
    s.split(' ')
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Selection by (count desc, first occurrence asc).
fn ref_vocab(sentences: &[String]) -> Vec<String> {
    let mut first: Vec<String> = Vec::new();
    for s in sentences {
        for w in ref_words(s) {
            if !first.contains(&w) {
                first.push(w);
            }
        }
    }
    let count = |w: &String| {
        sentences
            .iter()
            .flat_map(|s| ref_words(s))
            .filter(|x| x == w)
            .count()
    };
    let mut remaining: Vec<(usize, String)> = first.into_iter().enumerate().collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (ci, cb) = (count(&remaining[i].1), count(&remaining[best].1));
            if ci > cb || (ci == cb && remaining[i].0 < remaining[best].0) {
                best = i;
            }
        }
        out.push(remaining.remove(best).1);
    }
    out
}

fn ref_id(vocab: &[String], w: &str) -> Option<u32> {
    vocab.iter().position(|v| v == w).map(|p| p as u32 + 1)
}

/// Unknown words become `len + 1`; rows are truncated and zero-padded.
fn ref_encode(sentences: &[String], vocab: &[String], t: usize) -> Vec<u32> {
    let mut out = Vec::new();
    for s in sentences {
        let mut row: Vec<u32> = ref_words(s)
            .iter()
            .map(|w| ref_id(vocab, w).unwrap_or(vocab.len() as u32 + 1))
            .collect();
        row.truncate(t);
        row.resize(t, 0);
        out.extend(row);
    }
    out
}

fn ref_stats(sentences: &[String], vocab: &[String]) -> (f64, usize, f64, f64) {
    let lens: Vec<usize> = sentences.iter().map(|s| ref_words(s).len()).collect();
    let ids: Vec<f64> = sentences
        .iter()
        .flat_map(|s| ref_words(s))
        .map(|w| ref_id(vocab, &w).unwrap_or(vocab.len() as u32 + 1) as f64)
        .collect();
    let avg = lens.iter().sum::<usize>() as f64 / sentences.len() as f64;
    let max = lens.iter().copied().max().unwrap_or(0);
    let mean = if ids.is_empty() {
        0.0
    } else {
        ids.iter().sum::<f64>() / ids.len() as f64
    };
    let var = if ids.is_empty() {
        0.0
    } else {
        ids.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / ids.len() as f64
    };
    (avg, max, mean, var.sqrt())
}

pub fn sentence() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(prop::sample::select(PIECES), 0..8),
        prop::collection::vec(prop::sample::select(&[" ", "  ", " \u{a0}"][..]), 8),
    )
        .prop_map(|(ws, seps)| {
            let mut s = String::new();
            for (i, w) in ws.iter().enumerate() {
                if i > 0 {
                    s.push_str(seps[i]);
                }
                s.push_str(w);
            }
            s
        })
}

/// Compare every pipeline stage on one randomized corpus.
pub fn check_pipeline(pairs: &[(String, String)]) -> Result<(), TestCaseError> {
    let tsv: String = pairs
        .iter()
        .map(|(a, b)| format!("{a}\t{b}\tattribution\n"))
        .collect();
    let (corpus, _) = parse_corpus(&tsv, usize::MAX);

    let kept: Vec<(String, String)> = pairs
        .iter()
        .map(|(a, b)| (ref_clean(a), ref_clean(b)))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .collect();
    let (src, tgt) = corpus.cleaned();
    prop_assert_eq!(src.len(), kept.len());
    for (i, (a, b)) in kept.iter().enumerate() {
        prop_assert_eq!(&src[i], a);
        prop_assert_eq!(&tgt[i], b);
    }
    if kept.len() < 20 {
        prop_assert!(split_corpus(&corpus).is_err());
        return Ok(());
    }

    let n = kept.len();
    let held = n * 5 / 100;
    let (tr, rest) = kept.split_at(n - 2 * held);
    let (va, te) = rest.split_at(held);
    let splits = split_corpus(&corpus).unwrap();
    prop_assert_eq!(splits.train.len(), tr.len());
    prop_assert_eq!(splits.validation.len(), va.len());
    prop_assert_eq!(splits.test.len(), te.len());

    let data = ParallelData::prepare(&splits).unwrap();
    let side = |xs: &[(String, String)], first: bool| -> Vec<String> {
        xs.iter()
            .map(|(a, b)| if first { a.clone() } else { b.clone() })
            .collect()
    };
    for (first, vocab) in [(true, &data.source_vocab), (false, &data.target_vocab)] {
        let train_side = side(tr, first);
        let rv = ref_vocab(&train_side);
        let ours: Vec<String> = vocab.words().map(|(_, w)| w.to_string()).collect();
        prop_assert_eq!(&ours, &rv);

        let t = train_side
            .iter()
            .map(|s| ref_words(s).len())
            .max()
            .unwrap()
            .max(1);
        prop_assert_eq!(if first { data.t_src } else { data.t_tgt }, t);

        let pick = |s: &lrgan::text::EncodedSplit| {
            if first {
                s.source.ids().to_vec()
            } else {
                s.target.ids().to_vec()
            }
        };
        prop_assert_eq!(pick(&data.train), ref_encode(&train_side, &rv, t));
        prop_assert_eq!(pick(&data.validation), ref_encode(&side(va, first), &rv, t));
        prop_assert_eq!(pick(&data.test), ref_encode(&side(te, first), &rv, t));

        for part in [&train_side, &side(te, first)] {
            if part.is_empty() {
                continue;
            }
            let ours = corpus_stats(part, vocab).unwrap();
            let (avg, max, mean, std) = ref_stats(part, &rv);
            prop_assert!((ours.avg_sentence_length - avg).abs() < 1e-12);
            prop_assert_eq!(ours.max_sentence_length, max);
            prop_assert!((ours.id_mean - mean).abs() < 1e-9);
            prop_assert!((ours.id_std - std).abs() < 1e-6);
        }
    }
    Ok(())
}

pub fn corpus_strategy() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((sentence(), sentence()), 20..70)
}
