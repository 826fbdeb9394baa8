//! Evaluation: classification metrics with the report's class conventions,
//! observation-window sweeps over the full pipeline, and deterministic
//! long-format report files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{BinnedCascade, LabeledCascade};
use crate::delta::{train_delta, DeltaConfig};
use crate::error::{Result, VedsaError};
use crate::gamma::{train_gamma, GammaConfig, GammaModel};
use crate::survdist::DistFamily;

/// Precision/recall/F1 for one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn class_metrics(tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
    let precision = if tp + fp == 0 { 0.0 } else { 100.0 * tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { 100.0 * tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics { precision, recall, f1 }
}

/// One evaluated (dataset, family, window) cell. Confusion counts treat
/// viral as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub family: String,
    pub window_hours: f64,
    pub seed: u64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub viral: ClassMetrics,
    pub non_viral: ClassMetrics,
    pub macro_f1: f64,
}

/// Confusion counts and per-class metrics from aligned predicted/actual
/// label vectors (1 = viral). Metadata fields are left blank for the caller.
pub fn compute_metrics(predicted: &[u8], actual: &[u8]) -> Result<EvalReport> {
    if predicted.is_empty() {
        return Err(VedsaError::Domain("metrics need at least one prediction".into()));
    }
    if predicted.len() != actual.len() {
        return Err(VedsaError::Structure(format!(
            "{} predictions but {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.iter().all(|&l| l == actual[0]) {
        return Err(VedsaError::Domain(
            "metrics are undefined when labels contain a single class".into(),
        ));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p != 0, a != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let viral = class_metrics(tp, fp, fn_);
    // the same counts re-read with non-viral as positive
    let non_viral = class_metrics(tn, fn_, fp);
    let total = (tp + fp + tn + fn_) as f64;
    Ok(EvalReport {
        dataset: String::new(),
        family: String::new(),
        window_hours: 0.0,
        seed: 0,
        tp,
        fp,
        tn,
        fn_,
        accuracy: 100.0 * (tp + tn) as f64 / total,
        viral,
        non_viral,
        macro_f1: (viral.f1 + non_viral.f1) / 2.0,
    })
}

/// Declarative description of one sweep run; serializes to TOML/JSON and
/// reproduces the run exactly under the same seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub family: DistFamily,
    /// Observation windows in hours, each a multiple of gamma's bin length.
    pub windows: Vec<f64>,
    pub gamma: GammaConfig,
    pub delta: DeltaConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.gamma.validate()?;
        self.delta.validate()?;
        if self.windows.is_empty() {
            return Err(VedsaError::Config("sweep needs at least one window".into()));
        }
        let horizon = self.gamma.t_max as f64 * self.gamma.bin_length;
        for &w in &self.windows {
            let bins = w / self.gamma.bin_length;
            if bins < 1.0 || (bins - bins.round()).abs() > 1e-9 {
                return Err(VedsaError::Config(format!(
                    "window {w}h is not a positive multiple of the {}h bin",
                    self.gamma.bin_length
                )));
            }
            if w > horizon + 1e-9 {
                return Err(VedsaError::Config(format!(
                    "window {w}h exceeds the {horizon}h model horizon"
                )));
            }
        }
        if self.delta.input_len != self.gamma.t_max {
            return Err(VedsaError::Config(
                "delta input length must equal gamma t_max".into(),
            ));
        }
        Ok(())
    }

    fn window_bins(&self, window: f64) -> usize {
        (window / self.gamma.bin_length).round() as usize
    }
}

fn censored_prefix(binned: &BinnedCascade, bins: usize) -> BinnedCascade {
    let keep = bins.min(binned.counts.len());
    BinnedCascade { counts: binned.counts[..keep].to_vec(), bin_length: binned.bin_length }
}

fn curves_at_window(
    gamma: &GammaModel,
    data: &[LabeledCascade],
    bins: usize,
) -> Result<Vec<(Vec<f64>, u8)>> {
    data.iter()
        .map(|lc| {
            let curve = gamma.infer_survival(&censored_prefix(&lc.binned, bins))?;
            Ok((curve.values, lc.label))
        })
        .collect()
}

/// Trains gamma once on full-horizon training data, then for every window:
/// censors both splits, retrains delta on the censored curves, and evaluates
/// on the test split. Returns one report per window, in window order.
pub fn window_sweep(
    cfg: &RunConfig,
    train: &[LabeledCascade],
    test: &[LabeledCascade],
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let gamma_cfg = GammaConfig { family: cfg.family, seed: cfg.seed, ..cfg.gamma.clone() };
    let (gamma, _) = train_gamma(train, gamma_cfg)?;
    let mut reports = Vec::with_capacity(cfg.windows.len());
    for (wi, &window) in cfg.windows.iter().enumerate() {
        let bins = cfg.window_bins(window);
        let train_curves = curves_at_window(&gamma, train, bins)?;
        let delta_cfg = DeltaConfig {
            seed: cfg.seed.wrapping_add(wi as u64 + 1),
            ..cfg.delta.clone()
        };
        let (delta, _) = train_delta(&train_curves, delta_cfg)?;
        let test_curves = curves_at_window(&gamma, test, bins)?;
        let mut predicted = Vec::with_capacity(test_curves.len());
        let mut actual = Vec::with_capacity(test_curves.len());
        for (curve, label) in &test_curves {
            let p = delta.forward_values(curve)?;
            predicted.push(u8::from(p >= delta.config.threshold));
            actual.push(*label);
        }
        let mut report = compute_metrics(&predicted, &actual)?;
        report.dataset = cfg.dataset.clone();
        report.family = cfg.family.name().to_string();
        report.window_hours = window;
        report.seed = cfg.seed;
        reports.push(report);
    }
    Ok(reports)
}

const REPORT_HEADER: &str = "dataset,family,window_hours,class,precision,recall,f1,accuracy,seed";

/// One per-class row of the report file.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub family: String,
    pub window_hours: f64,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub seed: u64,
}

impl EvalReport {
    /// One row per class, non-viral first.
    pub fn rows(&self) -> Vec<ReportRow> {
        [("nonviral", self.non_viral), ("viral", self.viral)]
            .into_iter()
            .map(|(class, m)| ReportRow {
                dataset: self.dataset.clone(),
                family: self.family.clone(),
                window_hours: self.window_hours,
                class: class.to_string(),
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                accuracy: self.accuracy,
                seed: self.seed,
            })
            .collect()
    }
}

/// Writes reports as deterministic per-class CSV. Numbers use Rust's
/// shortest round-trip float formatting so a parse reproduces them exactly.
pub fn emit_report(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for report in reports {
        for row in report.rows() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.dataset,
                row.family,
                row.window_hours,
                row.class,
                row.precision,
                row.recall,
                row.f1,
                row.accuracy,
                row.seed
            )
            .expect("string formatting cannot fail");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses a file written by [`emit_report`].
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REPORT_HEADER => {}
        _ => {
            return Err(VedsaError::Parse {
                line: 1,
                message: format!("expected header '{REPORT_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(VedsaError::Parse {
                line: i + 1,
                message: format!("expected 9 fields, found {}", parts.len()),
            });
        }
        let field = |j: usize| -> Result<f64> {
            parts[j].parse().map_err(|_| VedsaError::Parse {
                line: i + 1,
                message: format!("bad number '{}'", parts[j]),
            })
        };
        rows.push(ReportRow {
            dataset: parts[0].to_string(),
            family: parts[1].to_string(),
            window_hours: field(2)?,
            class: parts[3].to_string(),
            precision: field(4)?,
            recall: field(5)?,
            f1: field(6)?,
            accuracy: field(7)?,
            seed: field(8)? as u64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_dataset, ClassSpec, SynthSpec};
    use crate::survdist::DistParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_confusion_example() {
        // TP=9, FN=1, FP=1, TN=9
        let mut predicted = vec![1u8; 9];
        predicted.extend([0]); // FN
        predicted.extend([1]); // FP
        predicted.extend(vec![0u8; 9]);
        let mut actual = vec![1u8; 10];
        actual.extend(vec![0u8; 10]);
        let m = compute_metrics(&predicted, &actual).unwrap();
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (9, 1, 1, 9));
        assert_eq!(m.accuracy, 90.0);
        assert_eq!(m.viral.precision, 90.0);
        assert_eq!(m.viral.recall, 90.0);
        assert_eq!(m.viral.f1, 90.0);
    }

    #[test]
    fn perfect_predictions_score_100() {
        let labels = [1u8, 0, 1, 0, 0];
        let m = compute_metrics(&labels, &labels).unwrap();
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.viral.f1, 100.0);
        assert_eq!(m.non_viral.f1, 100.0);
        assert_eq!(m.macro_f1, 100.0);
    }

    #[test]
    fn all_predicted_viral_degenerate() {
        let predicted = vec![1u8; 10];
        let actual = [1u8, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let m = compute_metrics(&predicted, &actual).unwrap();
        assert_eq!(m.viral.recall, 100.0);
        assert_eq!(m.non_viral.recall, 0.0);
    }

    #[test]
    fn rejects_empty_and_single_class() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1, 0], &[1, 1]).is_err());
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn metrics_match_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..50);
            let predicted: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let mut actual: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            if actual.iter().all(|&l| l == actual[0]) {
                let flip = rng.gen_range(0..n);
                actual[flip] ^= 1;
            }
            let m = compute_metrics(&predicted, &actual).unwrap();
            let tp = predicted.iter().zip(&actual).filter(|(&p, &a)| p == 1 && a == 1).count();
            let fp = predicted.iter().zip(&actual).filter(|(&p, &a)| p == 1 && a == 0).count();
            let tn = predicted.iter().zip(&actual).filter(|(&p, &a)| p == 0 && a == 0).count();
            let fn_ = predicted.iter().zip(&actual).filter(|(&p, &a)| p == 0 && a == 1).count();
            assert_eq!((m.tp, m.fp, m.tn, m.fn_), (tp as u64, fp as u64, tn as u64, fn_ as u64));
            assert_eq!(m.accuracy, 100.0 * (tp + tn) as f64 / n as f64);
        }
    }

    #[test]
    fn f1_is_harmonic_mean_and_bounded() {
        let predicted = [1u8, 1, 0, 0, 1, 0, 1, 1];
        let actual = [1u8, 0, 0, 1, 1, 0, 0, 1];
        let m = compute_metrics(&predicted, &actual).unwrap();
        for c in [m.viral, m.non_viral] {
            let expect = if c.precision + c.recall == 0.0 {
                0.0
            } else {
                2.0 * c.precision * c.recall / (c.precision + c.recall)
            };
            assert!((c.f1 - expect).abs() < 1e-12);
            assert!((0.0..=100.0).contains(&c.f1));
        }
        assert!((0.0..=100.0).contains(&m.accuracy));
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_report(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{REPORT_HEADER}\n"));
        assert!(read_report(&path).unwrap().is_empty());
    }

    #[test]
    fn report_round_trips_exactly() {
        let mut m = compute_metrics(&[1, 0, 1, 0, 1], &[1, 0, 0, 1, 1]).unwrap();
        m.dataset = "toy".into();
        m.family = "weibull".into();
        m.window_hours = 6.0;
        m.seed = 42;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_report(std::slice::from_ref(&m), &path).unwrap();
        let rows = read_report(&path).unwrap();
        assert_eq!(rows, m.rows());
    }

    #[test]
    fn emission_is_byte_stable() {
        let mut m = compute_metrics(&[1, 0, 1], &[1, 1, 0]).unwrap();
        m.dataset = "toy".into();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        emit_report(std::slice::from_ref(&m), &a).unwrap();
        emit_report(std::slice::from_ref(&m), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    fn tiny_synth(seed: u64) -> Vec<LabeledCascade> {
        let spec = SynthSpec {
            viral: ClassSpec {
                params: DistParams::Exponential { lambda: 0.2 },
                amplitude: 60.0,
                count: 12,
            },
            nonviral: ClassSpec {
                params: DistParams::Exponential { lambda: 0.2 },
                amplitude: 2.0,
                count: 12,
            },
            horizon_hours: 12.0,
            zeta2: 40,
            seed,
        };
        gen_dataset(&spec, 1.0, 12).unwrap().into_iter().map(|s| s.labeled).collect()
    }

    fn tiny_run_config() -> RunConfig {
        RunConfig {
            dataset: "synthetic".into(),
            family: DistFamily::Exponential,
            windows: vec![4.0, 12.0],
            gamma: GammaConfig {
                family: DistFamily::Exponential,
                hidden_size: 8,
                epochs: 3,
                t_max: 12,
                ..GammaConfig::default()
            },
            delta: DeltaConfig { input_len: 12, kernel_size: 3, epochs: 8, ..DeltaConfig::default() },
            seed: 3,
        }
    }

    #[test]
    fn sweep_emits_one_report_per_window() {
        let train = tiny_synth(1);
        let test = tiny_synth(2);
        let reports = window_sweep(&tiny_run_config(), &train, &test).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].window_hours, 4.0);
        assert_eq!(reports[1].window_hours, 12.0);
        for r in &reports {
            assert_eq!(r.dataset, "synthetic");
            assert_eq!(r.family, "exponential");
            assert_eq!(r.tp + r.fp + r.tn + r.fn_, test.len() as u64);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let train = tiny_synth(1);
        let test = tiny_synth(2);
        let cfg = tiny_run_config();
        let a = window_sweep(&cfg, &train, &test).unwrap();
        let b = window_sweep(&cfg, &train, &test).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_rejects_window_beyond_horizon() {
        let mut cfg = tiny_run_config();
        cfg.windows = vec![48.0];
        let train = tiny_synth(1);
        assert!(matches!(
            window_sweep(&cfg, &train, &train),
            Err(VedsaError::Config(_))
        ));
    }

    #[test]
    fn run_config_round_trips_through_serde() {
        let cfg = tiny_run_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.windows, cfg.windows);
        assert_eq!(back.dataset, cfg.dataset);
        assert_eq!(back.seed, cfg.seed);
    }
}
