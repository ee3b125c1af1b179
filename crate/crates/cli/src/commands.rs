//! One function per subcommand. Outputs are written only after the work
//! succeeds, each file atomically.

use std::path::Path;

use log::info;
use lrgan::augment::{filter_corpus, generate_corpus, DEFAULT_KEEP};
use lrgan::checkpoint::{write_atomic, Checkpoint};
use lrgan::gan::{gan_checksum, train_gan, Discriminator, Generator};
use lrgan::gradcheck::{corrupt_group, run_gradcheck, GradCheckConfig, GROUPS};
use lrgan::quality::QualityModel;
use lrgan::seq2seq::{evaluate, train_seq2seq, Seq2SeqParams};
use lrgan::text::{
    corpus_stats, encode_lenient, load_corpus, split_corpus, CorpusSplits, EncodedSplit,
    ParallelCorpus, ParallelData, Vocabulary,
};
use lrgan::RngStream;

use crate::config::{RunConfig, Threshold};
use crate::{CliError, CliResult};

pub const FINAL_CKPT: &str = "final.ckpt";
pub const BEST_CKPT: &str = "best.ckpt";
pub const SOURCE_VOCAB: &str = "source_vocab.tsv";
pub const TARGET_VOCAB: &str = "target_vocab.tsv";
pub const METRICS: &str = "metrics.csv";
pub const CONFIG_ECHO: &str = "config.txt";
pub const GAN_CKPT: &str = "gan.ckpt";
pub const CORPUS: &str = "corpus.txt";
pub const CORPUS_GOOD: &str = "corpus_good.txt";
pub const QUALITY: &str = "quality.csv";

pub fn echo_config(cfg: &RunConfig) {
    print!("{}", cfg.serialize());
}

fn load_splits(cfg: &RunConfig) -> CliResult<CorpusSplits> {
    let (corpus, report) = load_corpus(&cfg.data.0, cfg.max_pairs)?;
    info!(
        "loaded {} pairs from {} ({} malformed, {} empty after cleaning)",
        corpus.len(),
        cfg.data,
        report.malformed,
        report.empty
    );
    Ok(split_corpus(&corpus)?)
}

/// Outcome of stage-1 training, before anything is written.
pub struct EncDecRun {
    pub data: ParallelData,
    pub trained: lrgan::seq2seq::TrainedSeq2Seq<f32>,
}

/// Prepare data and train the encoder-decoder without touching the disk.
pub fn run_encdec(cfg: &RunConfig) -> CliResult<EncDecRun> {
    cfg.validate()?;
    let data = ParallelData::prepare(&load_splits(cfg)?)?;
    info!(
        "train {} / validation {} / test {}; source vocab {}, target vocab {}, T_src {}, T_tgt {}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        data.source_vocab.size(),
        data.target_vocab.size(),
        data.t_src,
        data.t_tgt
    );
    let trained = train_seq2seq::<f32>(
        &cfg.seq2seq(),
        &data.train,
        &data.validation,
        data.source_vocab.table_size(),
        data.target_vocab.table_size(),
        &RngStream::new(cfg.seed),
        |_| {},
    )?;
    Ok(EncDecRun { data, trained })
}

fn stage1_checkpoint(
    params: &Seq2SeqParams<f32>,
    cfg: &RunConfig,
    data: &ParallelData,
    epoch: usize,
) -> Checkpoint {
    let mut ck = Checkpoint::new();
    params.write_checkpoint(&mut ck);
    ck.set_meta("t_src", data.t_src.to_string());
    ck.set_meta("t_tgt", data.t_tgt.to_string());
    ck.set_meta("seed", cfg.seed.to_string());
    ck.set_meta("epoch", epoch.to_string());
    ck
}

pub fn cmd_train_encdec(cfg: &RunConfig) -> CliResult {
    echo_config(cfg);
    let EncDecRun { data, trained } = run_encdec(cfg)?;
    let dir = cfg.encdec_dir();
    stage1_checkpoint(&trained.final_params, cfg, &data, cfg.epochs).save(&dir.join(FINAL_CKPT))?;
    stage1_checkpoint(&trained.best_params, cfg, &data, trained.best_epoch)
        .save(&dir.join(BEST_CKPT))?;
    data.source_vocab.save(&dir.join(SOURCE_VOCAB))?;
    data.target_vocab.save(&dir.join(TARGET_VOCAB))?;
    write_atomic(&dir.join(METRICS), trained.report.to_csv().as_bytes())?;
    write_atomic(&dir.join(CONFIG_ECHO), cfg.serialize().as_bytes())?;

    let train = evaluate(&trained.final_params, &data.train)?;
    let val = evaluate(&trained.final_params, &data.validation)?;
    println!(
        "final train_loss={:.6} train_acc={:.6}",
        train.loss, train.accuracy
    );
    println!("final val_loss={:.6} val_acc={:.6}", val.loss, val.accuracy);
    println!(
        "best val_acc={:.6} at epoch {}",
        trained.report.best_val_acc().unwrap_or(f64::NAN),
        trained.best_epoch
    );
    println!("wrote {}", dir.display());
    Ok(())
}

/// Stage-1 artifacts as read back from disk.
pub struct Stage1 {
    pub params: Seq2SeqParams<f32>,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub t_src: usize,
    pub t_tgt: usize,
}

fn meta_usize(ck: &Checkpoint, key: &str, path: &Path) -> CliResult<usize> {
    ck.meta(key).and_then(|v| v.parse().ok()).ok_or_else(|| {
        CliError::Core(lrgan::Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("missing metadata {key}"),
        })
    })
}

pub fn load_stage1(cfg: &RunConfig) -> CliResult<Stage1> {
    let dir = cfg.encdec_dir();
    let path = dir.join(cfg.stage1.file_name());
    let ck = Checkpoint::load(&path)?;
    let params = Seq2SeqParams::<f32>::read_checkpoint(&ck)?;
    let source_vocab = Vocabulary::load(&dir.join(SOURCE_VOCAB))?;
    let target_vocab = Vocabulary::load(&dir.join(TARGET_VOCAB))?;
    if source_vocab.table_size() != params.source_rows()
        || target_vocab.table_size() != params.target_classes()
    {
        return Err(CliError::Core(lrgan::Error::Checkpoint {
            path,
            reason: "vocabulary files do not match the checkpoint".into(),
        }));
    }
    Ok(Stage1 {
        t_src: meta_usize(&ck, "t_src", &path)?,
        t_tgt: meta_usize(&ck, "t_tgt", &path)?,
        params,
        source_vocab,
        target_vocab,
    })
}

fn encode_with(s1: &Stage1, c: &ParallelCorpus) -> CliResult<EncodedSplit> {
    let (src, tgt) = c.cleaned();
    Ok(EncodedSplit {
        source: encode_lenient(&src, &s1.source_vocab, s1.t_src)?,
        target: encode_lenient(&tgt, &s1.target_vocab, s1.t_tgt)?,
        source_text: src,
        target_text: tgt,
    })
}

pub fn cmd_train_gan(cfg: &RunConfig) -> CliResult {
    echo_config(cfg);
    cfg.validate()?;
    let s1 = load_stage1(cfg)?;
    let splits = load_splits(cfg)?;
    let real = encode_with(&s1, &splits.train)?.source;
    let before = s1.params.checksum();
    println!("encoder checksum before: {before}");
    let trained = train_gan(
        &cfg.gan(),
        &s1.params,
        &real,
        &RngStream::new(cfg.seed),
        |_| {},
    )?;
    let after = s1.params.checksum();
    println!("encoder checksum after:  {after}");
    if before != after {
        return Err(CliError::Failed(
            "encoder weights changed during adversarial training".into(),
        ));
    }

    let dir = cfg.gan_dir();
    let mut ck = Checkpoint::new();
    trained.generator.write_checkpoint(&mut ck);
    trained.discriminator.write_checkpoint(&mut ck);
    ck.set_meta("encoder_checksum", after);
    ck.set_meta("seed", cfg.seed.to_string());
    ck.save(&dir.join(GAN_CKPT))?;
    write_atomic(&dir.join(METRICS), trained.report.to_csv().as_bytes())?;
    write_atomic(&dir.join(CONFIG_ECHO), cfg.serialize().as_bytes())?;

    let r = &trained.report;
    if let Some(last) = r.epochs.last() {
        println!(
            "final gen_loss={:.6} disc_loss={:.6}",
            last.gen_loss, last.disc_loss
        );
    }
    let window = 200.min(r.epochs.len());
    for (name, pick) in [
        (
            "gen_loss",
            (|e: &lrgan::gan::GanEpoch| e.gen_loss) as fn(&lrgan::gan::GanEpoch) -> f64,
        ),
        ("disc_loss", |e| e.disc_loss),
    ] {
        if let Some((m, s)) = r.tail_stats(window, pick) {
            println!("last {window} epochs {name}: mean={m:.6} std={s:.6}");
        }
    }
    if let (Some(a), Some(b)) = (r.gap_initial, r.gap_final) {
        println!("embedding moment gap: {:.6} -> {:.6}", a.total(), b.total());
    }
    println!(
        "gan checksum {}",
        gan_checksum(&trained.generator, &trained.discriminator)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn training_target_ids(s1: &Stage1, cfg: &RunConfig) -> CliResult<Vec<Vec<u32>>> {
    let splits = load_splits(cfg)?;
    let enc = encode_with(s1, &splits.train)?;
    Ok((0..enc.target.rows())
        .map(|r| {
            enc.target
                .row(r)
                .iter()
                .copied()
                .filter(|&id| id != 0)
                .collect()
        })
        .collect())
}

pub fn cmd_generate(cfg: &RunConfig) -> CliResult {
    echo_config(cfg);
    cfg.validate()?;
    let s1 = load_stage1(cfg)?;
    let gan_path = cfg.gan_dir().join(GAN_CKPT);
    let (generator, _) = load_gan(&gan_path)?;

    let mut quality = QualityModel::fit(&training_target_ids(&s1, cfg)?, s1.target_vocab.size())?;
    if let Threshold::Fixed(t) = cfg.tau_nonsense {
        quality.tau_nonsense = t;
    }
    if let Threshold::Fixed(t) = cfg.tau_unrelated {
        quality.tau_unrelated = t;
    }
    info!(
        "quality thresholds: nonsense {:.4}, unrelated {:.4}",
        quality.tau_nonsense, quality.tau_unrelated
    );

    let corpus = generate_corpus(
        &generator,
        &s1.params,
        &s1.target_vocab,
        &quality,
        cfg.n,
        s1.t_tgt,
        &RngStream::new(cfg.seed),
    )?;
    let report = corpus.quality_report()?;
    let good = filter_corpus(&corpus, &DEFAULT_KEEP);

    let dir = cfg.generate_dir();
    write_atomic(&dir.join(CORPUS), corpus.to_text().as_bytes())?;
    write_atomic(&dir.join(CORPUS_GOOD), good.to_text().as_bytes())?;
    write_atomic(&dir.join(QUALITY), report.as_bytes())?;
    for (label, count) in corpus.label_counts() {
        println!("{label:<12} {count}");
    }
    println!("kept {} of {} sentences", good.len(), corpus.len());
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn cmd_stats(cfg: &RunConfig) -> CliResult {
    echo_config(cfg);
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let data = ParallelData::prepare(&splits)?;
    println!(
        "{:<6} {:<8} {:>9} {:>10} {:>10} {:>10} {:>10}",
        "split", "side", "sentences", "avg_len", "max_len", "id_mean", "id_std"
    );
    for (split, enc) in [("train", &data.train), ("test", &data.test)] {
        for (side, text, vocab) in [
            ("source", &enc.source_text, &data.source_vocab),
            ("target", &enc.target_text, &data.target_vocab),
        ] {
            if text.is_empty() {
                continue;
            }
            let s = corpus_stats(text, vocab)?;
            println!(
                "{:<6} {:<8} {:>9} {:>10.4} {:>10} {:>10.4} {:>10.4}",
                split,
                side,
                s.sentences,
                s.avg_sentence_length,
                s.max_sentence_length,
                s.id_mean,
                s.id_std
            );
        }
    }
    println!(
        "vocabulary source={} target={}",
        data.source_vocab.size(),
        data.target_vocab.size()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> CliResult {
    echo_config(cfg);
    cfg.validate()?;
    let s1 = load_stage1(cfg)?;
    let splits = load_splits(cfg)?;
    for (name, part) in [
        ("train", &splits.train),
        ("validation", &splits.validation),
        ("test", &splits.test),
    ] {
        if part.is_empty() {
            continue;
        }
        let r = evaluate(&s1.params, &encode_with(&s1, part)?)?;
        println!("{name:<10} loss={:.6} acc={:.6}", r.loss, r.accuracy);
    }
    Ok(())
}

pub fn cmd_gradcheck(corrupt: Option<&str>) -> CliResult {
    if let Some(g) = corrupt {
        if !GROUPS.contains(&g) {
            return Err(CliError::Usage(format!(
                "unknown group {g:?}; expected one of {}",
                GROUPS.join(", ")
            )));
        }
    }
    let cfg = GradCheckConfig::default();
    let hook = corrupt.map(corrupt_group);
    let reports = run_gradcheck(&cfg, hook.as_ref().map(|h| h as &dyn Fn(&str, &mut [f64])))?;
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.group)
        .collect();
    if failed.is_empty() {
        println!("all {} groups within {:.0e}", reports.len(), cfg.tolerance);
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}

pub fn load_gan(path: &Path) -> CliResult<(Generator<f32>, Discriminator<f32>)> {
    let ck = Checkpoint::load(path)?;
    Ok((
        Generator::read_checkpoint(&ck)?,
        Discriminator::read_checkpoint(&ck)?,
    ))
}
