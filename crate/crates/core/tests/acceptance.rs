//! Acceptance criteria, one `[PASS]`/`[FAIL]` line each.
//!
//! Run with `cargo test -p lrgan-core --test acceptance -- --nocapture` to
//! see the report. The long full-scale replication only runs when
//! `LRGAN_FULL_SCALE` names a tab-separated sentence-pair file.

mod support;

use std::time::{Duration, Instant};

use lrgan::augment::generate_corpus;
use lrgan::gan::{train_gan, GanConfig, TrainedGan};
use lrgan::gradcheck::{run_gradcheck, GradCheckConfig};
use lrgan::quality::{QualityLabel, QualityModel};
use lrgan::seq2seq::{evaluate, train_seq2seq, Seq2SeqConfig, TrainedSeq2Seq};
use lrgan::text::synthetic::synthetic_corpus;
use lrgan::text::{load_corpus, split_corpus, ParallelData, Vocabulary};
use lrgan::RngStream;
use proptest::test_runner::{Config, TestRng, TestRunner};

const SEED: u64 = 42;

/// Straight to the process's stderr, so the report shows even when the test
/// harness captures output.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stderr().lock(), $($arg)*);
    }};
}

#[derive(Default)]
struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        let line = format!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        say!("{line}");
        self.lines.push((pass, line));
    }

    fn skip(&self, id: &str, why: &str) {
        say!("[SKIP] {id}: {why}");
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn training_targets(data: &ParallelData) -> Vec<Vec<u32>> {
    (0..data.train.target.rows())
        .map(|r| {
            data.train
                .target
                .row(r)
                .iter()
                .copied()
                .filter(|&id| id != 0)
                .collect()
        })
        .collect()
}

fn criterion_1(report: &mut Report) {
    let cfg = GradCheckConfig::default();
    let t = Instant::now();
    let groups = run_gradcheck(&cfg, None).expect("gradient check runs");
    let elapsed = t.elapsed();
    let worst = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = groups
        .iter()
        .filter(|g| !g.passed)
        .map(|g| g.group)
        .collect();
    for g in &groups {
        say!("       {g}");
    }
    report.record(
        "1 gradient correctness",
        failed.is_empty() && worst < 1e-3 && elapsed < Duration::from_secs(120),
        format!(
            "{} groups x {} seeds, step {:e}, max rel err {worst:.2e} (< 1e-3), failed {failed:?}, {:.0}s (< 120s)",
            groups.len(),
            cfg.seeds,
            cfg.step,
            secs(elapsed)
        ),
    );
}

fn criterion_2(report: &mut Report, data: &ParallelData) -> TrainedSeq2Seq<f32> {
    let cfg = Seq2SeqConfig {
        epochs: 300,
        batch_size: 30,
        ..Default::default()
    };
    let t = Instant::now();
    let trained = train_seq2seq::<f32>(
        &cfg,
        &data.train,
        &data.validation,
        data.source_vocab.table_size(),
        data.target_vocab.table_size(),
        &RngStream::new(SEED),
        |_| {},
    )
    .expect("stage 1 trains");
    let elapsed = t.elapsed();
    let last = *trained.report.epochs.last().unwrap();
    let eval = evaluate(&trained.final_params, &data.train).unwrap();
    let pass = eval.accuracy >= 0.95
        && eval.loss < 0.5
        && last.train_acc >= 0.95
        && last.train_loss < 0.5
        && elapsed < Duration::from_secs(15 * 60);
    report.record(
        "2 overfit capacity",
        pass,
        format!(
            "{} train pairs, 300 epochs: inference-mode train acc {:.4} loss {:.4}; last-epoch running acc {:.4} loss {:.4} \
             (need acc >= 0.95, loss < 0.5), {:.0}s (< 900s)",
            data.train.len(),
            eval.accuracy,
            eval.loss,
            last.train_acc,
            last.train_loss,
            secs(elapsed)
        ),
    );
    trained
}

fn criterion_3(
    report: &mut Report,
    data: &ParallelData,
    stage1: &TrainedSeq2Seq<f32>,
) -> TrainedGan<f32> {
    let cfg = GanConfig {
        epochs: 2000,
        batch_size: 64,
        ..Default::default()
    };
    let encoder = &stage1.final_params;
    let before = encoder.checksum();
    let bytes_before: Vec<Vec<u8>> = encoder
        .named_tensors()
        .iter()
        .map(|(_, t)| t.data().iter().flat_map(|v| v.to_le_bytes()).collect())
        .collect();
    let t = Instant::now();
    let gan = train_gan(
        &cfg,
        encoder,
        &data.train.source,
        &RngStream::new(SEED),
        |_| {},
    )
    .expect("stage 2 trains");
    let elapsed = t.elapsed();
    let bytes_after: Vec<Vec<u8>> = encoder
        .named_tensors()
        .iter()
        .map(|(_, t)| t.data().iter().flat_map(|v| v.to_le_bytes()).collect())
        .collect();

    let r = &gan.report;
    let (gm, gs) = r.tail_stats(200, |e| e.gen_loss).unwrap();
    let (dm, ds) = r.tail_stats(200, |e| e.disc_loss).unwrap();
    let plateau = gs < 0.25 * gm && ds < 0.25 * dm;
    report.record(
        "3a loss plateau",
        plateau,
        format!(
            "last 200 of {} epochs: gen std/mean {:.4}/{:.4} = {:.1}%, disc std/mean {:.3e}/{:.3e} = {:.1}% (< 25%)",
            r.epochs.len(),
            gs,
            gm,
            100.0 * gs / gm,
            ds,
            dm,
            100.0 * ds / dm
        ),
    );
    let (g0, g1) = (r.gap_initial.unwrap(), r.gap_final.unwrap());
    report.record(
        "3b embedding moment gap shrinks",
        g1.total() < g0.total(),
        format!(
            "mean+std gap {:.4} -> {:.4} (mean {:.4} -> {:.4}, std {:.4} -> {:.4})",
            g0.total(),
            g1.total(),
            g0.mean_gap,
            g1.mean_gap,
            g0.std_gap,
            g1.std_gap
        ),
    );
    report.record(
        "3c encoder frozen",
        bytes_before == bytes_after && before == encoder.checksum() && r.encoder_checksum == before,
        format!(
            "sha256 {}... identical before and after, raw bytes identical",
            &before[..16]
        ),
    );
    report.record(
        "3  stage-2 runtime",
        elapsed < Duration::from_secs(600),
        format!("{:.0}s (< 600s)", secs(elapsed)),
    );
    say!(
        "[INFO] 3  discriminator probe accuracy before training {:.3} at seed {SEED} (invariant target 0.5 +/- 0.15, checked over seeds in gan_properties)",
        r.initial_probe_accuracy
    );
    gan
}

fn criterion_4(
    report: &mut Report,
    data: &ParallelData,
    stage1: &TrainedSeq2Seq<f32>,
    gan: &TrainedGan<f32>,
) {
    let quality = QualityModel::fit(&training_targets(data), data.target_vocab.size()).unwrap();
    let n = 1000;
    let t = Instant::now();
    let run = || {
        generate_corpus(
            &gan.generator,
            &stage1.final_params,
            &data.target_vocab,
            &quality,
            n,
            data.t_tgt,
            &RngStream::new(SEED),
        )
        .expect("generation runs")
    };
    let a = run();
    let elapsed = t.elapsed();
    let b = run();

    let v = data.target_vocab.size() as u32;
    let valid = a.sentences.iter().all(|s| {
        s.ids.iter().all(|&id| (1..=v).contains(&id))
            && s.text
                .split(' ')
                .filter(|w| !w.is_empty())
                .all(|w| data.target_vocab.id(w).is_some())
    });
    let max_len = a.sentences.iter().map(|s| s.ids.len()).max().unwrap_or(0);
    let counts = a.label_counts();
    let partitioned = counts.iter().map(|(_, c)| c).sum::<usize>() == n
        && a.sentences.iter().all(|s| {
            QualityLabel::ALL
                .iter()
                .filter(|&&l| l == s.quality)
                .count()
                == 1
        });
    let identical =
        a.to_text() == b.to_text() && a.quality_report().unwrap() == b.quality_report().unwrap();
    report.record(
        "4 generation contract",
        a.len() == n
            && valid
            && max_len <= data.t_tgt
            && partitioned
            && identical
            && elapsed < Duration::from_secs(60),
        format!(
            "{} sentences, valid tokens {valid}, max length {max_len} (<= {}), labels {:?}, byte-identical rerun {identical}, {:.1}s (< 60s)",
            a.len(),
            data.t_tgt,
            counts.iter().map(|(l, c)| format!("{l}={c}")).collect::<Vec<_>>(),
            secs(elapsed)
        ),
    );
}

fn criterion_5(report: &mut Report) {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 50,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let outcome = runner.run(&support::text_reference::corpus_strategy(), |pairs| {
        support::text_reference::check_pipeline(&pairs)
    });
    let detail = match &outcome {
        Ok(()) => "50 randomized micro-corpora match the brute-force reference".to_string(),
        Err(e) => format!("mismatch: {e}"),
    };
    report.record("5 text-pipeline oracle", outcome.is_ok(), detail);
}

fn criterion_6(report: &mut Report, data: &ParallelData) {
    let english = [
        "maryam discovered the old letter",
        "hes at home",
        "i am here",
        "we are ready",
        "maryam is here",
        "they are at home",
    ];
    let vocab = Vocabulary::fit(&english).unwrap();
    let ids = |s: &str| -> Vec<u32> { s.split(' ').map(|w| vocab.id(w).unwrap()).collect() };
    let micro: Vec<Vec<u32>> = english.iter().map(|s| ids(s)).collect();
    let model = QualityModel::fit(&micro, vocab.size()).unwrap();
    let exemplar = model.classify(&ids("maryam discovered hes hes am am are are"));

    let desk = QualityModel::fit(&training_targets(data), data.target_vocab.size()).unwrap();
    let distinct = |s: &Vec<u32>| {
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        !s.is_empty() && u.len() == s.len()
    };
    let mut checked = 0;
    let mut bad = Vec::new();
    for (m, corpus) in [(&model, &micro), (&desk, &training_targets(data))] {
        for s in corpus.iter().filter(|s| distinct(s)) {
            checked += 1;
            let l = m.classify(s);
            if l != QualityLabel::Good {
                bad.push(format!("{s:?}={l}"));
            }
        }
    }
    report.record(
        "6 quality-metric fidelity",
        exemplar == QualityLabel::Repetition && bad.is_empty() && checked > 0,
        format!(
            "exemplar -> {exemplar}; {checked} all-distinct in-corpus sentences, non-good {bad:?}"
        ),
    );
}

fn criterion_7(report: &mut Report) {
    let Some(path) = std::env::var_os("LRGAN_FULL_SCALE") else {
        report.skip(
            "7 full-scale replication",
            "set LRGAN_FULL_SCALE=<sentence-pair file> to run (multi-hour)",
        );
        return;
    };
    let (corpus, _) = load_corpus(path.as_ref(), 20_000).expect("full corpus loads");
    let data = ParallelData::prepare(&split_corpus(&corpus).unwrap()).unwrap();
    let stage1 = train_seq2seq::<f32>(
        &Seq2SeqConfig::default(),
        &data.train,
        &data.validation,
        data.source_vocab.table_size(),
        data.target_vocab.table_size(),
        &RngStream::new(SEED),
        |_| {},
    )
    .expect("stage 1 trains");
    let test_acc = evaluate(&stage1.final_params, &data.test).unwrap().accuracy;
    let peak_val = stage1.report.best_val_acc().unwrap();
    report.record(
        "7a full-scale test accuracy",
        (test_acc - 0.693).abs() <= 0.05,
        format!("{:.1}% (69.3 +/- 5)", 100.0 * test_acc),
    );
    report.record(
        "7b full-scale peak validation accuracy",
        (peak_val - 0.714).abs() <= 0.05,
        format!("{:.1}% (71.4 +/- 5)", 100.0 * peak_val),
    );
    let gan = train_gan(
        &GanConfig::default(),
        &stage1.final_params,
        &data.train.source,
        &RngStream::new(SEED),
        |_| {},
    )
    .expect("stage 2 trains");
    let last = gan.report.epochs.last().unwrap();
    report.record(
        "7c full-scale GAN final losses",
        (last.gen_loss - 0.581).abs() <= 0.15 && (last.disc_loss - 0.438).abs() <= 0.15,
        format!(
            "generator {:.3} (0.581 +/- 0.15), discriminator {:.3} (0.438 +/- 0.15)",
            last.gen_loss, last.disc_loss
        ),
    );
}

#[test]
fn acceptance() {
    let mut report = Report::default();
    let corpus = synthetic_corpus(200, SEED);
    let data = ParallelData::prepare(&split_corpus(&corpus).unwrap()).unwrap();

    criterion_1(&mut report);
    let stage1 = criterion_2(&mut report, &data);
    let gan = criterion_3(&mut report, &data, &stage1);
    criterion_4(&mut report, &data, &stage1, &gan);
    criterion_5(&mut report);
    criterion_6(&mut report, &data);
    criterion_7(&mut report);

    let failed: Vec<&String> = report
        .lines
        .iter()
        .filter(|(p, _)| !p)
        .map(|(_, l)| l)
        .collect();
    say!(
        "acceptance: {} passed, {} failed",
        report.lines.len() - failed.len(),
        failed.len()
    );
    assert!(
        failed.is_empty(),
        "failed criteria:\n{}",
        failed
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
