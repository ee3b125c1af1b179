//! Write a deterministic toy English-Spanish corpus in the tab-separated
//! sentence-pair layout.
//!
//! `cargo run -p lrgan-cli --example toy_corpus -- data/toy.tsv 200 42`

use std::path::PathBuf;

use lrgan::checkpoint::write_atomic;
use lrgan::text::synthetic::{synthetic_corpus, to_tsv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "data/toy.tsv".into()));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    write_atomic(&path, to_tsv(&synthetic_corpus(n, seed)).as_bytes())?;
    println!("wrote {n} pairs to {}", path.display());
    Ok(())
}
