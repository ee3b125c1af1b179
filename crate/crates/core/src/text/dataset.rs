//! Encoded train/validation/test splits ready for the models.

use crate::error::Result;
use crate::text::batch::{encode_and_pad, encode_lenient, longest, PaddedBatch};
use crate::text::corpus::{CorpusSplits, ParallelCorpus};
use crate::text::vocab::Vocabulary;

#[derive(Clone, Debug)]
pub struct EncodedSplit {
    pub source_text: Vec<String>,
    pub target_text: Vec<String>,
    pub source: PaddedBatch,
    pub target: PaddedBatch,
}

impl EncodedSplit {
    pub fn len(&self) -> usize {
        self.source.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Vocabularies and padded lengths are fitted per language on the training
/// split; validation and test reuse them with unknown-word mapping.
#[derive(Clone, Debug)]
pub struct ParallelData {
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub t_src: usize,
    pub t_tgt: usize,
    pub train: EncodedSplit,
    pub validation: EncodedSplit,
    pub test: EncodedSplit,
}

impl ParallelData {
    pub fn prepare(splits: &CorpusSplits) -> Result<Self> {
        let (src, tgt) = splits.train.cleaned();
        let source_vocab = Vocabulary::fit(&src)?;
        let target_vocab = Vocabulary::fit(&tgt)?;
        let t_src = longest(&src).max(1);
        let t_tgt = longest(&tgt).max(1);
        let train = EncodedSplit {
            source: encode_and_pad(&src, &source_vocab, t_src)?,
            target: encode_and_pad(&tgt, &target_vocab, t_tgt)?,
            source_text: src,
            target_text: tgt,
        };
        let held = |c: &ParallelCorpus| -> Result<EncodedSplit> {
            let (s, t) = c.cleaned();
            Ok(EncodedSplit {
                source: encode_lenient(&s, &source_vocab, t_src)?,
                target: encode_lenient(&t, &target_vocab, t_tgt)?,
                source_text: s,
                target_text: t,
            })
        };
        let validation = held(&splits.validation)?;
        let test = held(&splits.test)?;
        Ok(Self {
            source_vocab,
            target_vocab,
            t_src,
            t_tgt,
            train,
            validation,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::corpus::split_corpus;

    #[test]
    fn held_out_words_map_to_unknown() {
        let mut pairs: Vec<(String, String)> = (0..18)
            .map(|_| ("Go home.".to_string(), "Ve a casa.".to_string()))
            .collect();
        pairs.push(("Go far away now!".into(), "¡Vete lejos!".into()));
        pairs.push(("Stop.".into(), "Para.".into()));
        let splits = split_corpus(&ParallelCorpus::new(pairs)).unwrap();
        let d = ParallelData::prepare(&splits).unwrap();
        assert_eq!(d.t_src, 2);
        assert_eq!(d.t_tgt, 3);
        // "go far away now" truncated to two tokens, "far" unknown.
        assert_eq!(
            d.validation.source.row(0),
            &[1, d.source_vocab.unknown_id()]
        );
        assert_eq!(d.test.target.row(0)[0], d.target_vocab.unknown_id());
    }
}
