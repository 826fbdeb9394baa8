//! Command-line front end: dataset ingestion, synthetic generation, model
//! training, prediction, evaluation, window sweeps, and gradient checking.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use vedsa::cascade::{make_labeled, LabeledCascade, ViralityConfig};
use vedsa::delta::{
    grad_check_delta, predict_pipeline, train_delta, DeltaConfig, DeltaModel, Prediction,
};
use vedsa::error::VedsaError;
use vedsa::eval::{compute_metrics, emit_report, window_sweep, RunConfig};
use vedsa::gamma::{grad_check_gamma, train_gamma, GammaConfig, GammaModel};
use vedsa::ingest::{
    build_dataset, calibrate_thresholds, parse_digg, parse_twitter, parse_weibo, read_canonical,
    write_canonical, Balance, SplitSpec,
};
use vedsa::synth::{gen_dataset, SynthSpec};
use vedsa::DistFamily;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "vedsa", version, about = "Viral cascade detection from censored early observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RawFormat {
    Twitter,
    Digg,
    Weibo,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw dataset file to the canonical cascade format.
    Ingest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: RawFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Weibo only: subsample to this many cascades.
        #[arg(long)]
        sample_to: Option<usize>,
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
    },
    /// Generate a synthetic dataset with known ground-truth hazards.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Optional sidecar file recording per-cascade ground truth.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Train the survival-function model on a canonical dataset.
    TrainGamma {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        family: Option<DistFamily>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the curve classifier against a trained gamma model.
    TrainDelta {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify cascades observed up to a censoring window.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long)]
        delta: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Observation window in hours.
        #[arg(long)]
        window: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a prediction file against labeled data.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "dataset")]
        dataset: String,
        #[arg(long)]
        family: Option<DistFamily>,
        #[arg(long, default_value_t = 0.0)]
        window: f64,
    },
    /// Train once, then evaluate across every observation window.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check analytic gradients against finite differences for every graph.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// The `[data]` section: labeling thresholds and split policy.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct DataSection {
    zeta1: Option<u64>,
    zeta2: Option<u64>,
    /// Viral fraction used to calibrate thresholds when zetas are absent.
    target_ratio: f64,
    max_len: usize,
    bin_length: f64,
    num_bins: usize,
    train_fraction: f64,
    seed: u64,
    balance: Balance,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            zeta1: None,
            zeta2: None,
            target_ratio: 0.05,
            max_len: 100_000,
            bin_length: 1.0,
            num_bins: 24,
            train_fraction: 0.8,
            seed: 0,
            balance: Balance::None,
        }
    }
}

/// The `[sweep]` section: grid description for `sweep`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct SweepSection {
    dataset: String,
    family: DistFamily,
    windows: Vec<f64>,
    seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            dataset: "dataset".into(),
            family: DistFamily::Weibull,
            windows: vec![2.0, 6.0, 10.0, 14.0, 18.0, 24.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default)]
struct FileConfig {
    data: DataSection,
    gamma: GammaConfig,
    delta: DeltaConfig,
    synth: Option<SynthSpec>,
    sweep: SweepSection,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, VedsaError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| VedsaError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn virality_config(
    cfg: &DataSection,
    cascades: &[vedsa::Cascade],
) -> Result<ViralityConfig, VedsaError> {
    match (cfg.zeta1, cfg.zeta2) {
        (Some(zeta1), Some(zeta2)) => {
            let vc = ViralityConfig { zeta1, zeta2, max_len: cfg.max_len };
            vc.validate()?;
            Ok(vc)
        }
        (None, None) => calibrate_thresholds(cascades, cfg.target_ratio, cfg.max_len),
        _ => Err(VedsaError::Config("set both zeta1 and zeta2, or neither".into())),
    }
}

/// Labels a whole canonical file without splitting (intermediates dropped).
fn label_all(
    path: &Path,
    data: &DataSection,
) -> Result<Vec<LabeledCascade>, VedsaError> {
    let cascades = read_canonical(path)?;
    let vc = virality_config(data, &cascades)?;
    let mut out = Vec::new();
    for c in &cascades {
        if let Some(lc) = make_labeled(c, &vc, data.bin_length, data.num_bins)? {
            out.push(lc);
        }
    }
    Ok(out)
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>, VedsaError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

fn write_predictions(preds: &[Prediction], path: &Path) -> Result<(), VedsaError> {
    let mut text = String::new();
    for p in preds {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8, VedsaError> {
    match cli.command {
        Command::Ingest { config, format, input, output, sample_to, sample_seed } => {
            load_config(config.as_deref())?; // validated even if unused: fail early
            let cascades = match format {
                RawFormat::Twitter => parse_twitter(&input)?,
                RawFormat::Digg => parse_digg(&input)?,
                RawFormat::Weibo => parse_weibo(&input, sample_to.map(|n| (n, sample_seed)))?,
            };
            write_canonical(&cascades, &output)?;
            println!("wrote {} cascades to {}", cascades.len(), output.display());
            Ok(0)
        }
        Command::Synth { config, output, truth } => {
            let cfg = load_config(Some(&config))?;
            let spec: SynthSpec = cfg.synth.ok_or_else(|| {
                VedsaError::Config("config file needs a [synth] section".into())
            })?;
            let generated = gen_dataset(&spec, cfg.data.bin_length, cfg.data.num_bins)?;
            let cascades: Vec<_> = generated.iter().map(|s| s.cascade.clone()).collect();
            write_canonical(&cascades, &output)?;
            if let Some(truth_path) = truth {
                let mut text = String::new();
                for s in &generated {
                    let record = serde_json::json!({
                        "id": s.cascade.id,
                        "label": s.labeled.label,
                        "true_params": s.true_params,
                    });
                    text.push_str(&record.to_string());
                    text.push('\n');
                }
                std::fs::write(&truth_path, text)?;
            }
            println!("wrote {} cascades to {}", cascades.len(), output.display());
            Ok(0)
        }
        Command::TrainGamma { config, data, output, family, epochs, seed } => {
            let cfg = load_config(config.as_deref())?;
            let mut gcfg = cfg.gamma;
            gcfg.bin_length = cfg.data.bin_length;
            gcfg.t_max = cfg.data.num_bins;
            if let Some(f) = family {
                gcfg.family = f;
            }
            if let Some(e) = epochs {
                gcfg.epochs = e;
            }
            if let Some(s) = seed {
                gcfg.seed = s;
            }
            let cascades = read_canonical(&data)?;
            let vc = virality_config(&cfg.data, &cascades)?;
            let split = SplitSpec {
                seed: cfg.data.seed,
                train_fraction: cfg.data.train_fraction,
                balance: cfg.data.balance,
            };
            let ds = build_dataset(&cascades, &vc, &split, cfg.data.bin_length, cfg.data.num_bins)?;
            let (model, trace) = train_gamma(&ds.train, gcfg)?;
            model.save(&output)?;
            println!(
                "trained gamma ({}) on {} cascades; final loss {:.6}",
                gcfg.family.name(),
                ds.train.len(),
                trace.last().copied().unwrap_or(f64::NAN)
            );
            Ok(0)
        }
        Command::TrainDelta { config, data, gamma, output, epochs, seed } => {
            let cfg = load_config(config.as_deref())?;
            let gamma = GammaModel::load(&gamma)?;
            let mut dcfg = cfg.delta;
            dcfg.input_len = gamma.config.t_max;
            if let Some(e) = epochs {
                dcfg.epochs = e;
            }
            if let Some(s) = seed {
                dcfg.seed = s;
            }
            let cascades = read_canonical(&data)?;
            let vc = virality_config(&cfg.data, &cascades)?;
            let split = SplitSpec {
                seed: cfg.data.seed,
                train_fraction: cfg.data.train_fraction,
                balance: cfg.data.balance,
            };
            let ds = build_dataset(
                &cascades,
                &vc,
                &split,
                gamma.config.bin_length,
                gamma.config.t_max,
            )?;
            let mut curves = Vec::with_capacity(ds.train.len());
            for lc in &ds.train {
                let curve = gamma.infer_survival(&lc.binned)?;
                curves.push((curve.values, lc.label));
            }
            let (model, trace) = train_delta(&curves, dcfg)?;
            model.save(&output)?;
            println!(
                "trained delta on {} curves; final loss {:.6}",
                curves.len(),
                trace.last().copied().unwrap_or(f64::NAN)
            );
            Ok(0)
        }
        Command::Predict { config, gamma, delta, data, window, output } => {
            load_config(config.as_deref())?;
            let gamma = GammaModel::load(&gamma)?;
            let delta = DeltaModel::load(&delta)?;
            let cascades = read_canonical(&data)?;
            let mut preds = Vec::with_capacity(cascades.len());
            for c in &cascades {
                preds.push(predict_pipeline(&gamma, &delta, c, window)?);
            }
            write_predictions(&preds, &output)?;
            println!("wrote {} predictions to {}", preds.len(), output.display());
            Ok(0)
        }
        Command::Eval { config, data, predictions, output, dataset, family, window } => {
            let cfg = load_config(config.as_deref())?;
            let labeled = label_all(&data, &cfg.data)?;
            let preds = read_predictions(&predictions)?;
            let by_id: std::collections::BTreeMap<&str, u8> =
                labeled.iter().map(|l| (l.id.as_str(), l.label)).collect();
            let mut predicted = Vec::with_capacity(preds.len());
            let mut actual = Vec::with_capacity(preds.len());
            for p in &preds {
                let label = by_id.get(p.id.as_str()).ok_or_else(|| {
                    VedsaError::Structure(format!("prediction for unknown cascade '{}'", p.id))
                })?;
                predicted.push(p.label);
                actual.push(*label);
            }
            let mut report = compute_metrics(&predicted, &actual)?;
            report.dataset = dataset;
            report.family = family.map(|f| f.name().to_string()).unwrap_or_default();
            report.window_hours = window;
            report.seed = cfg.data.seed;
            emit_report(std::slice::from_ref(&report), &output)?;
            println!(
                "accuracy {:.2} / viral F1 {:.2} -> {}",
                report.accuracy,
                report.viral.f1,
                output.display()
            );
            Ok(0)
        }
        Command::Sweep { config, train, test, output } => {
            let cfg = load_config(Some(&config))?;
            let mut gcfg = cfg.gamma;
            gcfg.bin_length = cfg.data.bin_length;
            gcfg.t_max = cfg.data.num_bins;
            let mut dcfg = cfg.delta;
            dcfg.input_len = gcfg.t_max;
            let run = RunConfig {
                dataset: cfg.sweep.dataset.clone(),
                family: cfg.sweep.family,
                windows: cfg.sweep.windows.clone(),
                gamma: gcfg,
                delta: dcfg,
                seed: cfg.sweep.seed,
            };
            let train = label_all(&train, &cfg.data)?;
            let test = label_all(&test, &cfg.data)?;
            let reports = window_sweep(&run, &train, &test)?;
            emit_report(&reports, &output)?;
            for r in &reports {
                println!(
                    "{} {} {:>5}h: accuracy {:.2} viral F1 {:.2}",
                    r.dataset, r.family, r.window_hours, r.accuracy, r.viral.f1
                );
            }
            Ok(0)
        }
        Command::Gradcheck { config, threshold, epsilon, seed } => {
            load_config(config.as_deref())?;
            let mut failed = false;
            for (name, err) in gradcheck_suite(epsilon, seed)? {
                let ok = err <= threshold;
                failed |= !ok;
                println!(
                    "{name}: max rel err {err:.3e} (threshold {threshold:.1e}) {}",
                    if ok { "PASS" } else { "FAIL" }
                );
            }
            Ok(if failed { EXIT_CHECK_FAILED } else { 0 })
        }
    }
}

/// Fixed small inputs exercising both model graphs for every family.
fn gradcheck_suite(epsilon: f64, seed: u64) -> Result<Vec<(String, f64)>, VedsaError> {
    use vedsa::cascade::Cascade;

    let vc = ViralityConfig { zeta1: 6, zeta2: 6, max_len: 1000 };
    let slow: Vec<f64> = vec![0.0, 3.0, 6.5];
    let fast: Vec<f64> = (0..12).map(|k| 0.6 * k as f64).collect();
    let mut data = Vec::new();
    for (i, events) in [slow, fast].into_iter().enumerate() {
        let c = Cascade::from_raw(format!("g{i}"), events)?;
        if let Some(lc) = make_labeled(&c, &vc, 1.0, 8)? {
            data.push(lc);
        }
    }

    let mut results = Vec::new();
    for family in [DistFamily::Exponential, DistFamily::Rayleigh, DistFamily::Weibull] {
        let gcfg = GammaConfig {
            family,
            hidden_size: 8,
            t_max: 8,
            seed,
            ..GammaConfig::default()
        };
        let err = grad_check_gamma(gcfg, &data, epsilon, 8, seed)?;
        results.push((format!("gamma/{}", family.name()), err));
    }

    let curves: Vec<(Vec<f64>, u8)> = (0..4)
        .map(|i| {
            let rate = if i % 2 == 0 { 0.3 } else { 0.01 };
            ((1..=24).map(|j| (-rate * j as f64).exp()).collect(), (i % 2 == 0) as u8)
        })
        .collect();
    let dcfg = DeltaConfig { dropout: 0.0, seed, ..DeltaConfig::default() };
    let err = grad_check_delta(dcfg, &curves, epsilon, 8, seed)?;
    results.push(("delta/conv-stack".into(), err));
    Ok(results)
}

fn exit_code_for(err: &VedsaError) -> u8 {
    match err {
        VedsaError::Usage(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

// keep FromStr in scope for clap's fallback value parser on DistFamily
#[allow(unused)]
fn _assert_family_parses() {
    let _ = DistFamily::from_str("weibull");
}
