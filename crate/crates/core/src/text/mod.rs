//! Corpus ingestion, cleaning, vocabularies, padding, splits, and statistics.

pub mod batch;
pub mod clean;
pub mod corpus;
pub mod dataset;
pub mod stats;
pub mod synthetic;
pub mod vocab;

pub use batch::{encode_and_pad, encode_lenient, one_hot_targets, PaddedBatch};
pub use clean::clean_sentence;
pub use corpus::{
    load_corpus, parse_corpus, split_corpus, CorpusSplits, LoadReport, ParallelCorpus,
};
pub use dataset::{EncodedSplit, ParallelData};
pub use stats::{corpus_stats, CorpusStats};
pub use vocab::Vocabulary;
