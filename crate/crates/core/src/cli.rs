//! The `ssvep` command-line tool: dataset generation, training, prediction,
//! evaluation, gradient checking and feature dumps.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
//! 3 runtime or numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalData, EvalPlan, Method, Protocol, DEFAULT_FOLDS};
use crate::model::{LdaClassifier, Model, ProposedModel};
use crate::nn::{grad_check, GradCheckOptions, TrainConfig, GRADCHECK_TOL};
use crate::signal::storage::Dataset;
use crate::signal::{Condition, Epoch, Montage};
use crate::spectral::{magnitude_features, DEFAULT_BAND};
use crate::synth::{gen_dataset, GenConfig, SnrPreset};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit code for a library error: bad input is a usage error, everything
/// that goes wrong while computing is a runtime failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Shape { .. } | Error::Format { .. } | Error::Io { .. } | Error::Json(_) => {
            EXIT_USAGE
        }
        Error::InvalidState(_) | Error::Numerical(_) | Error::Diverged { .. } => EXIT_RUNTIME,
    }
}

/// Every tunable setting of a run, loadable with `--config` and printed by
/// `ssvep config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. It replaces `synth.seed` and `train.seed`, and every
    /// other random stream is derived from it.
    pub seed: u64,
    pub synth: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub k_folds: usize,
    pub cca_harmonics: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            k_folds: DEFAULT_FOLDS,
            cca_harmonics: crate::baselines::DEFAULT_CCA_HARMONICS,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            synth: GenConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if self.eval.k_folds < 2 {
            return Err(Error::invalid(format!("eval.k_folds must be >= 2, got {}", self.eval.k_folds)));
        }
        if self.eval.cca_harmonics == 0 {
            return Err(Error::invalid("eval.cca_harmonics must be >= 1"));
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            seed: self.seed,
            stimulus_freqs: self.synth.stimulus_freqs.clone(),
            cca_harmonics: self.eval.cca_harmonics,
            train: self.train,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ssvep", version, about = "SSVEP decoding for scalp and ear EEG during walking")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration (see `ssvep config` for the full schema)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the seed of the configuration file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for evaluation; results do not depend on it
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Suppress log output on standard error
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (manifest.json + epochs.bin)
    Synth(SynthArgs),
    /// Train LDA or the proposed network on one slice of a dataset
    Train(TrainArgs),
    /// Apply a saved model to a dataset slice
    Predict(PredictArgs),
    /// Run an evaluation protocol and write tables and statistics
    Eval(EvalArgs),
    /// Compare analytic network gradients with central finite differences
    Gradcheck(GradcheckArgs),
    /// Write the band-limited magnitude spectrum of one epoch as CSV
    FeaturesDump(FeaturesArgs),
    /// Print the effective run configuration as JSON
    Config,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// SNR preset: noiseless, high, paper-like or hard
    #[arg(long)]
    pub preset: Option<SnrPreset>,
    /// Number of subjects
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Trials per class in each condition
    #[arg(long)]
    pub trials_per_class: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Montage: scalp or ear
    #[arg(long)]
    pub montage: Montage,
    /// Condition: standing, walk08 or walk16
    #[arg(long)]
    pub condition: Condition,
    /// Restrict to one subject (default: all subjects pooled)
    #[arg(long)]
    pub subject: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub slice: SliceArgs,
    /// lda or proposed
    #[arg(long)]
    pub method: Method,
    /// Output model file
    #[arg(long)]
    pub model: PathBuf,
    /// Loss curve CSV for the proposed method (default: <model>.loss.csv)
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub slice: SliceArgs,
    /// Model file written by `ssvep train`
    #[arg(long)]
    pub model: PathBuf,
    /// Predictions CSV (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// session-dependent or session-to-session
    #[arg(long)]
    pub protocol: Protocol,
    /// Comma-separated methods: cca, lda, proposed
    #[arg(long, value_delimiter = ',', default_value = "cca,lda,proposed")]
    pub methods: Vec<Method>,
    /// Comma-separated montages (default: every montage in the dataset)
    #[arg(long, value_delimiter = ',')]
    pub montages: Vec<Montage>,
    /// Comma-separated test speeds (default: all speeds for
    /// session-dependent, walk08,walk16 for session-to-session)
    #[arg(long, alias = "speed", value_delimiter = ',')]
    pub speeds: Vec<Condition>,
    /// Folds of the session-dependent protocol (default: eval.k_folds)
    #[arg(long)]
    pub k_folds: Option<usize>,
    /// Report directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of consecutive seeds, starting at --seed
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Fault injection for testing the checker: scale the analytic gradient
    /// of the named tensor (e.g. time.lstm1.w_h) by 1.5
    #[arg(long, value_name = "TENSOR")]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Trial index in the manifest
    #[arg(long)]
    pub trial: usize,
    /// Montage: scalp or ear
    #[arg(long)]
    pub montage: Montage,
    /// Output CSV (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the 3 Hz high-pass applied before every model
    #[arg(long)]
    pub raw: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if !cli.global.quiet {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
            .format_timestamp(None)
            .try_init();
    }
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to `path`, or to `out` when no path is given.
fn emit(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<()> {
    match path {
        Some(p) => write_out(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Runs a parsed command, printing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = load_config(&cli.global)?;
    let say = |out: &mut dyn Write, text: String| writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e));
    match &cli.command {
        Command::Config => {
            emit(None, out, &cfg.to_json()?)?;
        }
        Command::Synth(a) => {
            if let Some(p) = a.preset {
                cfg.synth.preset = p;
            }
            if let Some(n) = a.subjects {
                cfg.synth.n_subjects = n;
            }
            if let Some(n) = a.trials_per_class {
                cfg.synth.trials_per_class = n;
            }
            cfg.synth.validate()?;
            let manifest = gen_dataset(&cfg.synth, &a.out)?;
            say(
                out,
                format!(
                    "{} trial pairs ({} subjects x {} conditions x {} per condition) written to {}",
                    manifest.trials.len(),
                    cfg.synth.n_subjects,
                    Condition::ALL.len(),
                    cfg.synth.trials_per_condition(),
                    a.out.display()
                ),
            )?;
        }
        Command::Train(a) => {
            let (data, epochs) = load_slice(&a.slice)?;
            let epochs: Vec<&Epoch> = epochs.iter().collect();
            let model = match a.method {
                Method::Cca => return Err(Error::invalid("CCA is training-free; train lda or proposed")),
                Method::Lda => Model::Lda(LdaClassifier::fit(&epochs, &cfg.synth.stimulus_freqs)?),
                Method::Proposed => {
                    let (m, curve) = ProposedModel::fit(&epochs, data.classes, &cfg.train)?;
                    let path = a.loss_csv.clone().unwrap_or_else(|| {
                        let mut p = a.model.clone().into_os_string();
                        p.push(".loss.csv");
                        p.into()
                    });
                    let mut text = String::from("epoch,loss\n");
                    for (i, l) in curve.iter().enumerate() {
                        text += &format!("{},{l}\n", i + 1);
                    }
                    write_out(&path, &text)?;
                    Model::Proposed(m)
                }
            };
            model.save(&a.model)?;
            say(out, format!("trained {} on {} epochs; model written to {}", a.method, epochs.len(), a.model.display()))?;
        }
        Command::Predict(a) => {
            let model = Model::load(&a.model)?;
            if model.montage() != a.slice.montage {
                return Err(Error::invalid(format!(
                    "model was trained on {} epochs, not {}",
                    model.montage(),
                    a.slice.montage
                )));
            }
            let (_, epochs) = load_slice(&a.slice)?;
            let mut text = String::from("subject,condition,label,prediction\n");
            let mut correct = 0;
            for e in &epochs {
                let p = model.predict(e)?;
                correct += (p == e.label) as usize;
                text += &format!("{},{},{},{p}\n", e.subject_id, e.condition.short_name(), e.label);
            }
            emit(a.out.as_deref(), out, &text)?;
            log::info!("accuracy {:.4} on {} epochs", correct as f64 / epochs.len() as f64, epochs.len());
        }
        Command::Eval(a) => {
            let k = a.k_folds.unwrap_or(cfg.eval.k_folds);
            let protocol = match a.protocol {
                Protocol::SessionDependent { .. } => Protocol::SessionDependent { k_folds: k },
                p => p,
            };
            let speeds = if !a.speeds.is_empty() {
                a.speeds.clone()
            } else if protocol == Protocol::SessionToSession {
                vec![Condition::Walk08, Condition::Walk16]
            } else {
                Condition::ALL.to_vec()
            };
            let ds = Dataset::load(&a.data)?;
            let montages = if a.montages.is_empty() {
                ds.manifest.montages.clone()
            } else {
                a.montages.clone()
            };
            let plan = EvalPlan {
                protocol,
                montages,
                speeds,
                methods: a.methods.clone(),
            };
            plan.validate()?;
            let data = EvalData::from_dataset(&ds, &plan.montages)?;
            let report = evaluate(&data, &plan, &cfg.eval_config(), cli.global.jobs)?;
            let run_config = serde_json::json!({ "config": cfg, "plan": plan });
            report.write(&a.out, &run_config)?;
            for m in &plan.montages {
                say(out, report.markdown(*m)?)?;
            }
        }
        Command::Gradcheck(a) => {
            let first = cli.global.seed.unwrap_or(0);
            let opts = GradCheckOptions {
                corrupt: a.corrupt.clone(),
                ..GradCheckOptions::default()
            };
            if let Some(name) = &a.corrupt {
                let names = crate::nn::TwoStreamNet::zeros(opts.arch)?.params().names();
                if !names.contains(name) {
                    return Err(Error::invalid(format!("unknown tensor '{name}'; one of {}", names.join(", "))));
                }
            }
            // worst relative error of each tensor over all seeds
            let mut worst: Vec<(String, f64, usize, usize)> = Vec::new();
            for seed in first..first + a.seeds.max(1) {
                let report = grad_check(seed, &opts)?;
                if worst.is_empty() {
                    worst = report.tensors.iter().map(|t| (t.name.clone(), 0.0, 0, 0)).collect();
                }
                for (w, t) in worst.iter_mut().zip(&report.tensors) {
                    w.1 = if t.max_rel_error.is_nan() { f64::NAN } else { w.1.max(t.max_rel_error) };
                    w.2 += t.checked;
                    w.3 += t.skipped;
                }
            }
            say(out, format!("{:<22} {:>12} {:>8} {:>8}", "tensor", "max_rel_err", "checked", "skipped"))?;
            let mut failed = Vec::new();
            for (name, err, checked, skipped) in &worst {
                say(out, format!("{name:<22} {err:>12.3e} {checked:>8} {skipped:>8}"))?;
                if !(*err < GRADCHECK_TOL) {
                    failed.push(name.clone());
                }
            }
            if !failed.is_empty() {
                eprintln!("gradient check failed (tolerance {GRADCHECK_TOL:e}): {}", failed.join(", "));
                return Ok(EXIT_CHECK_FAILED);
            }
            say(out, format!("all {} tensors within {GRADCHECK_TOL:e} over {} seeds", worst.len(), a.seeds.max(1)))?;
        }
        Command::FeaturesDump(a) => {
            let ds = Dataset::load(&a.data)?;
            if a.trial >= ds.trials().len() {
                return Err(Error::invalid(format!("trial {} out of range ({} trials)", a.trial, ds.trials().len())));
            }
            let mut epoch = ds.epoch(a.trial, a.montage)?;
            if !a.raw {
                epoch = crate::eval::highpass_epoch(epoch)?;
            }
            let f = magnitude_features(&epoch, DEFAULT_BAND)?;
            let mut text = String::from("channel");
            for hz in &f.bin_freqs {
                text += &format!(",{hz}");
            }
            text.push('\n');
            for (label, row) in a.montage.labels().iter().zip(f.matrix.iter_rows()) {
                text += label;
                for v in row {
                    text += &format!(",{v}");
                }
                text.push('\n');
            }
            emit(a.out.as_deref(), out, &text)?;
        }
    }
    Ok(EXIT_OK)
}

/// Preprocessed epochs of one montage and condition, for one subject or all.
fn load_slice(s: &SliceArgs) -> Result<(EvalData, Vec<Epoch>)> {
    let ds = Dataset::load(&s.data)?;
    let data = EvalData::from_dataset(&ds, &[s.montage])?;
    let subjects = match s.subject {
        Some(id) => vec![id],
        None => data.subjects(),
    };
    let mut epochs = Vec::new();
    for id in subjects {
        epochs.extend(data.epochs(id, s.condition, s.montage)?.iter().cloned());
    }
    Ok((data, epochs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(42);
        cfg.synth.preset = SnrPreset::High;
        cfg.train.epochs = 7;
        let text = cfg.to_json().unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_json(&text).unwrap().to_json().unwrap(), text);

        let partial = RunConfig::from_json(r#"{"seed": 3, "train": {"epochs": 2}}"#).unwrap();
        assert_eq!((partial.synth.seed, partial.train.seed, partial.train.epochs), (3, 3, 2));
        assert_eq!(partial.train.batch_size, 32);

        match RunConfig::from_json(r#"{"synth": {"n_subject": 3}}"#) {
            Err(e @ Error::InvalidArgument(_)) => {
                assert!(e.to_string().contains("n_subject"), "{e}");
                assert_eq!(exit_code(&e), EXIT_USAGE);
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::from_json(r#"{"verbose": true}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.eval.k_folds = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.synth.n_subjects = 0;
        assert_eq!(exit_code(&cfg.validate().unwrap_err()), EXIT_USAGE);
    }

    #[test]
    fn help_documents_every_subcommand() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        cmd.clone().debug_assert();
        let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
        for n in ["synth", "train", "predict", "eval", "gradcheck", "features-dump", "config"] {
            assert!(names.contains(&n), "{n}");
        }
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                assert!(id == "help" || id == "version" || arg.get_help().is_some(), "{} --{id}", sub.get_name());
                assert!(!arg.is_hide_set());
            }
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["ssvep", "eval", "--data", "x", "--protocol", "nonsense", "--out", "y"]), EXIT_USAGE);
        assert_eq!(run(["ssvep", "--quiet", "eval", "--data", "/nonexistent", "--protocol", "sd", "--methods", "knn", "--out", "y"]), EXIT_USAGE);
        assert_eq!(run(["ssvep", "frobnicate"]), EXIT_USAGE);
    }
}
