//! Reduced-scale hyperparameter grid search.
//!
//! A sweep file uses the same `key=value` syntax as the run configuration:
//!
//! ```text
//! budget = 16
//! pairs = 5000
//! epochs = 80
//! vary.lr = 2e-3, 2e-4
//! vary.batch = 30, 60
//! subsample = 8      # optional
//! ```
//!
//! Every combination of the `vary.*` lists is trained on top of the base
//! configuration. Without `subsample` the product must fit in `budget`.

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use lrgan::checkpoint::write_atomic;
use lrgan::RngStream;

use crate::commands::{run_encdec, CONFIG_ECHO, METRICS};
use crate::config::RunConfig;
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub budget: usize,
    pub subsample: Option<usize>,
    pub pairs: Option<usize>,
    pub epochs: Option<usize>,
    /// `(config key, candidate values)` in file order.
    pub vary: Vec<(String, Vec<String>)>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_count(key: &str, v: &str) -> CliResult<usize> {
    v.parse().map_err(|_| {
        usage(format!(
            "sweep {key} must be a non-negative integer, got {v:?}"
        ))
    })
}

impl SweepSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut spec = SweepSpec {
            budget: 0,
            subsample: None,
            pairs: None,
            epochs: None,
            vary: Vec::new(),
        };
        let mut saw_budget = false;
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| usage(format!("sweep spec: expected key=value, got {raw:?}")))?;
            match k {
                "budget" => {
                    spec.budget = parse_count(k, v)?;
                    saw_budget = true;
                }
                "subsample" => spec.subsample = Some(parse_count(k, v)?),
                "pairs" => spec.pairs = Some(parse_count(k, v)?),
                "epochs" => spec.epochs = Some(parse_count(k, v)?),
                _ => {
                    let key = k
                        .strip_prefix("vary.")
                        .ok_or_else(|| usage(format!("unknown sweep key {k:?}")))?;
                    if !RunConfig::KEYS.contains(&key) {
                        return Err(usage(format!("cannot vary unknown config key {key:?}")));
                    }
                    if spec.vary.iter().any(|(name, _)| name == key) {
                        return Err(usage(format!("{key} is varied twice")));
                    }
                    let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                    if values.iter().any(String::is_empty) {
                        return Err(usage(format!("empty value in vary.{key}")));
                    }
                    spec.vary.push((key.to_string(), values));
                }
            }
        }
        if !saw_budget {
            return Err(usage("sweep spec must declare a budget"));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read sweep spec {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn product_size(&self) -> usize {
        self.vary.iter().map(|(_, v)| v.len()).product()
    }

    pub fn validate(&self) -> CliResult {
        if self.budget == 0 {
            return Err(usage("sweep budget must be at least 1"));
        }
        match self.subsample {
            Some(0) => Err(usage("subsample must be at least 1")),
            Some(k) if k > self.budget => Err(usage(format!(
                "subsample {k} exceeds budget {}",
                self.budget
            ))),
            None if self.product_size() > self.budget => Err(usage(format!(
                "{} combinations exceed budget {}; declare a subsample",
                self.product_size(),
                self.budget
            ))),
            _ => Ok(()),
        }
    }

    /// Every combination in row-major order, last key varying fastest.
    pub fn combinations(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.vary {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        out
    }

    /// Combinations to run: all of them, or a seeded random subset kept in
    /// grid order.
    pub fn selected(&self, seed: u64) -> Vec<Vec<(String, String)>> {
        let all = self.combinations();
        match self.subsample {
            Some(k) if k < all.len() => {
                let mut idx: Vec<usize> = (0..all.len()).collect();
                RngStream::new(seed).substream("sweep").shuffle(&mut idx);
                let mut keep = idx[..k].to_vec();
                keep.sort_unstable();
                keep.into_iter().map(|i| all[i].clone()).collect()
            }
            _ => all,
        }
    }

    /// Base configuration with the reduced-scale overrides and one
    /// combination applied.
    pub fn run_config(&self, base: &RunConfig, combo: &[(String, String)]) -> CliResult<RunConfig> {
        let mut cfg = base.clone();
        if let Some(p) = self.pairs {
            cfg.max_pairs = p;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        for (k, v) in combo {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub run: usize,
    pub combo: Vec<(String, String)>,
    pub outcome: Result<RunScore, String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunScore {
    pub best_val_acc: f64,
    pub final_val_acc: f64,
    pub final_train_acc: f64,
}

/// Successful runs by best validation accuracy, descending; failures last.
/// Ties keep run order.
pub fn rank(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => y
            .best_val_acc
            .total_cmp(&x.best_val_acc)
            .then(a.run.cmp(&b.run)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.run.cmp(&b.run),
    });
}

pub fn results_csv(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut out = String::from("rank,run");
    for (k, _) in &spec.vary {
        let _ = write!(out, ",{k}");
    }
    out.push_str(",best_val_acc,final_val_acc,final_train_acc,status\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(out, "{},{}", i + 1, r.run);
        for (_, v) in &r.combo {
            let _ = write!(out, ",{v}");
        }
        match &r.outcome {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    ",{:.6},{:.6},{:.6},ok",
                    s.best_val_acc, s.final_val_acc, s.final_train_acc
                );
            }
            Err(e) => {
                let _ = writeln!(out, ",,,,failed: {}", e.replace([',', '\n'], ";"));
            }
        }
    }
    out
}

fn run_one(cfg: &RunConfig, dir: &Path) -> CliResult<RunScore> {
    let run = run_encdec(cfg)?;
    let r = &run.trained.report;
    let last = r
        .epochs
        .last()
        .ok_or_else(|| CliError::Failed("run produced no epochs".into()))?;
    write_atomic(&dir.join(METRICS), r.to_csv().as_bytes())?;
    write_atomic(&dir.join(CONFIG_ECHO), cfg.serialize().as_bytes())?;
    Ok(RunScore {
        best_val_acc: r.best_val_acc().unwrap_or(f64::NAN),
        final_val_acc: last.val_acc,
        final_train_acc: last.train_acc,
    })
}

/// Train every selected combination in turn. A failing run is recorded and
/// the sweep moves on. All runs share the base seed.
pub fn run_sweep(spec: &SweepSpec, base: &RunConfig) -> CliResult<Vec<SweepRow>> {
    spec.validate()?;
    let combos = spec.selected(base.seed);
    let configs = combos
        .iter()
        .map(|c| spec.run_config(base, c))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(combos.len());
    for (i, (combo, cfg)) in combos.into_iter().zip(configs).enumerate() {
        let label: Vec<String> = combo.iter().map(|(k, v)| format!("{k}={v}")).collect();
        info!(
            "sweep run {}/{}: {}",
            i + 1,
            rows.capacity(),
            label.join(" ")
        );
        let dir = base.sweep_dir().join(format!("run_{i:03}"));
        let outcome = run_one(&cfg, &dir).map_err(|e| {
            warn!("sweep run {i} failed: {e}");
            e.to_string()
        });
        rows.push(SweepRow {
            run: i,
            combo,
            outcome,
        });
    }
    rank(&mut rows);
    Ok(rows)
}

pub fn cmd_sweep(spec_path: &Path, base: &RunConfig) -> CliResult {
    crate::commands::echo_config(base);
    let spec = SweepSpec::load(spec_path)?;
    let rows = run_sweep(&spec, base)?;
    let csv = results_csv(&spec, &rows);
    write_atomic(&base.sweep_dir().join("results.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_product() {
        let s = SweepSpec::parse(
            "budget=4\npairs=50\nepochs=10\nvary.lr = 2e-3, 2e-4\nvary.batch=10,30 # c\n",
        )
        .unwrap();
        assert_eq!(s.product_size(), 4);
        let combos = s.combinations();
        assert_eq!(combos.len(), 4);
        assert_eq!(
            combos[1],
            vec![("lr".into(), "2e-3".into()), ("batch".into(), "30".into())]
        );
        let cfg = s.run_config(&RunConfig::default(), &combos[3]).unwrap();
        assert_eq!(
            (cfg.lr, cfg.batch, cfg.max_pairs, cfg.epochs),
            (2e-4, 30, 50, 10)
        );
    }

    #[test]
    fn spec_errors() {
        assert!(SweepSpec::parse("vary.lr=1").is_err());
        assert!(SweepSpec::parse("budget=1\nvary.lr=1,2").is_err());
        assert!(SweepSpec::parse("budget=1\nsubsample=1\nvary.lr=1,2").is_ok());
        assert!(SweepSpec::parse("budget=2\nsubsample=3\nvary.lr=1,2").is_err());
        assert!(SweepSpec::parse("budget=2\nvary.nope=1").is_err());
        assert!(SweepSpec::parse("budget=2\nvary.lr=1,,2").is_err());
        assert!(SweepSpec::parse("budget=2\ncolour=red").is_err());
        let s = SweepSpec::parse("budget=2\nvary.lr=abc").unwrap();
        assert!(s
            .run_config(&RunConfig::default(), &s.combinations()[0])
            .is_err());
    }

    #[test]
    fn ranking_puts_failures_last() {
        let ok = |run, acc| SweepRow {
            run,
            combo: vec![],
            outcome: Ok(RunScore {
                best_val_acc: acc,
                final_val_acc: acc,
                final_train_acc: acc,
            }),
        };
        let mut rows = vec![
            SweepRow {
                run: 0,
                combo: vec![],
                outcome: Err("boom".into()),
            },
            ok(1, 0.5),
            ok(2, 0.9),
            ok(3, 0.5),
        ];
        rank(&mut rows);
        let order: Vec<usize> = rows.iter().map(|r| r.run).collect();
        assert_eq!(order, vec![2, 1, 3, 0]);
    }

    proptest! {
        #[test]
        fn subsample_is_a_sorted_subset(n in 1usize..6, m in 1usize..6, k in 1usize..30, seed in any::<u64>()) {
            let a: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let b: Vec<String> = (0..m).map(|i| i.to_string()).collect();
            let text = format!("budget=30\nsubsample={k}\nvary.lr={}\nvary.batch={}", a.join(","), b.join(","));
            let s = SweepSpec::parse(&text).unwrap();
            let all = s.combinations();
            prop_assert_eq!(all.len(), n * m);
            let sel = s.selected(seed);
            prop_assert_eq!(sel.len(), k.min(n * m));
            let pos: Vec<usize> = sel.iter().map(|c| all.iter().position(|x| x == c).unwrap()).collect();
            prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(sel, s.selected(seed));
        }
    }
}
