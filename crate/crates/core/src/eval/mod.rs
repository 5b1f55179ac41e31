//! Evaluation protocols over subjects: session-dependent k-fold
//! cross-validation within one walking condition, and session-to-session
//! transfer from standing to walking. Produces per-subject accuracy tables,
//! paired t-tests between methods and the report files.

pub mod stats;
pub mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_references, cca_classify, ReferenceBank};
use crate::error::{Error, Result};
use crate::model::{LdaClassifier, ProposedModel};
use crate::nn::TrainConfig;
use crate::rng;
use crate::signal::storage::Dataset;
use crate::signal::{design_highpass, filter_zero_phase, Condition, Epoch, FirFilter, Montage, HIGHPASS_HZ, HIGHPASS_TAPS};
use crate::synth::{for_each_trial, GenConfig, DEFAULT_FREQS};
use crate::Matrix;

pub use stats::{paired_ttest, TTestResult};
pub use table::{mean_sd, AccuracyTable, TableRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Cca,
    Lda,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cca, Method::Lda, Method::Proposed];

    /// CCA matches epochs against fixed references and never looks at the
    /// training folds.
    pub fn is_training_free(self) -> bool {
        self == Method::Cca
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cca => "CCA",
            Method::Lda => "LDA",
            Method::Proposed => "Proposed",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cca" => Ok(Method::Cca),
            "lda" => Ok(Method::Lda),
            "proposed" | "cnn" | "net" => Ok(Method::Proposed),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected cca, lda or proposed)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Protocol {
    /// Stratified k-fold cross-validation within one condition.
    SessionDependent { k_folds: usize },
    /// Train on every standing trial, test on a walking condition.
    SessionToSession,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::SessionDependent { .. } => "session-dependent",
            Protocol::SessionToSession => "session-to-session",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    /// `session-dependent` uses 5 folds.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "session-dependent" | "sd" => Ok(Protocol::SessionDependent { k_folds: DEFAULT_FOLDS }),
            "session-to-session" | "s2s" => Ok(Protocol::SessionToSession),
            other => Err(Error::invalid(format!(
                "unknown protocol '{other}' (expected session-dependent or session-to-session)"
            ))),
        }
    }
}

pub const DEFAULT_FOLDS: usize = 5;

/// One protocol run: which data slice, which method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub protocol: Protocol,
    pub montage: Montage,
    /// The tested condition.
    pub speed: Condition,
    pub method: Method,
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        match self.protocol {
            Protocol::SessionDependent { k_folds } if k_folds < 2 => {
                Err(Error::invalid(format!("session-dependent needs k_folds >= 2, got {k_folds}")))
            }
            Protocol::SessionToSession if self.speed == Condition::Standing => Err(Error::invalid(
                "session-to-session trains on standing, so the test speed must be walk08 or walk16",
            )),
            _ => Ok(()),
        }
    }
}

/// Settings shared by every protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Master seed for folds and network training.
    pub seed: u64,
    pub stimulus_freqs: Vec<f64>,
    pub cca_harmonics: usize,
    pub train: TrainConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            stimulus_freqs: DEFAULT_FREQS.to_vec(),
            cca_harmonics: crate::baselines::DEFAULT_CCA_HARMONICS,
            train: TrainConfig::default(),
        }
    }
}

/// Preprocessed epochs grouped by (subject, condition, montage), each
/// group in trial order.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub rate: f64,
    pub samples: usize,
    pub classes: usize,
    cells: BTreeMap<(u32, Condition, Montage), Vec<Epoch>>,
}

/// The 3 Hz zero-phase high-pass applied to every epoch before any method.
pub fn highpass_epoch(epoch: Epoch) -> Result<Epoch> {
    highpass(&design_highpass(HIGHPASS_HZ, epoch.rate, HIGHPASS_TAPS)?, epoch)
}

fn highpass(filter: &FirFilter, epoch: Epoch) -> Result<Epoch> {
    let rows: Vec<Vec<f64>> = epoch
        .data
        .iter_rows()
        .map(|r| filter_zero_phase(filter, r))
        .collect::<Result<_>>()?;
    Ok(Epoch {
        data: Matrix::from_rows(&rows)?,
        ..epoch
    })
}

impl EvalData {
    /// Groups raw epochs and applies the 3 Hz zero-phase high-pass to each.
    pub fn from_epochs(epochs: Vec<Epoch>, classes: usize) -> Result<Self> {
        let first = epochs.first().ok_or_else(|| Error::invalid("no epochs to evaluate"))?;
        let (rate, samples) = (first.rate, first.samples());
        if let Some(e) = epochs.iter().find(|e| e.rate != rate || e.samples() != samples) {
            return Err(Error::invalid(format!(
                "epochs differ in rate or length ({} Hz x {} vs {} Hz x {samples})",
                e.rate,
                e.samples(),
                rate
            )));
        }
        let filter = design_highpass(HIGHPASS_HZ, rate, HIGHPASS_TAPS)?;
        let filtered: Vec<Epoch> = epochs
            .into_par_iter()
            .map(|e| highpass(&filter, e))
            .collect::<Result<_>>()?;
        let mut cells: BTreeMap<_, Vec<Epoch>> = BTreeMap::new();
        for e in filtered {
            if e.label >= classes {
                return Err(Error::invalid(format!("label {} out of range for {classes} classes", e.label)));
            }
            cells.entry((e.subject_id, e.condition, e.montage)).or_default().push(e);
        }
        Ok(EvalData {
            rate,
            samples,
            classes,
            cells,
        })
    }

    pub fn from_dataset(ds: &Dataset, montages: &[Montage]) -> Result<Self> {
        let mut epochs = Vec::new();
        for &m in montages {
            if !ds.has_montage(m) {
                return Err(Error::invalid(format!("dataset has no {m} montage")));
            }
            for i in 0..ds.trials().len() {
                epochs.push(ds.epoch(i, m)?);
            }
        }
        Self::from_epochs(epochs, ds.manifest.class_count)
    }

    /// Generates the dataset in memory, rounding samples to 32-bit floats
    /// exactly as the on-disk format does.
    pub fn from_generator(cfg: &GenConfig, montages: &[Montage]) -> Result<Self> {
        let mut epochs = Vec::new();
        for_each_trial(cfg, |_, scalp, ear| {
            for mut e in [scalp, ear] {
                if montages.contains(&e.montage) {
                    e.data = e.data.map(|v| v as f32 as f64);
                    epochs.push(e);
                }
            }
            Ok(())
        })?;
        Self::from_epochs(epochs, cfg.class_count())
    }

    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.cells.keys().map(|k| k.0).collect();
        s.dedup();
        s
    }

    pub fn epochs(&self, subject: u32, condition: Condition, montage: Montage) -> Result<&[Epoch]> {
        match self.cells.get(&(subject, condition, montage)) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::invalid(format!(
                "no {montage} epochs for subject {subject} in condition {condition}"
            ))),
        }
    }

    /// Copy with labels permuted within every (subject, condition); both
    /// montages receive the same permutation.
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        let mut out = self.clone();
        for ((subject, condition, _), epochs) in out.cells.iter_mut() {
            let mut labels: Vec<usize> = epochs.iter().map(|e| e.label).collect();
            labels.shuffle(&mut rng::stream(seed, &format!("label-shuffle/{subject}/{condition}")));
            epochs.iter_mut().zip(labels).for_each(|(e, l)| e.label = l);
        }
        out
    }
}

/// Stratified k-fold split: each class's indices are shuffled with the
/// `"kfold"` stream of `seed` and dealt round-robin to the folds. Returns
/// `(train, test)` index lists, both sorted.
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("k-fold needs 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut r = rng::stream(seed, "kfold");
    let mut fold_of = vec![0; n];
    let mut next = 0;
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut r);
        for i in idx {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
            (train, test)
        })
        .collect())
}

/// Correct predictions of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: u32,
    pub correct: usize,
    pub total: usize,
}

impl SubjectResult {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// `(sum 1[pred == label]) / n`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

struct Runner<'a> {
    data: &'a EvalData,
    cfg: &'a EvalConfig,
    bank: ReferenceBank,
}

impl<'a> Runner<'a> {
    fn new(data: &'a EvalData, cfg: &'a EvalConfig) -> Result<Self> {
        if cfg.stimulus_freqs.len() != data.classes {
            return Err(Error::invalid(format!(
                "{} stimulus frequencies configured for {} classes",
                cfg.stimulus_freqs.len(),
                data.classes
            )));
        }
        cfg.train.validate()?;
        let bank = build_references(&cfg.stimulus_freqs, cfg.cca_harmonics, data.samples, data.rate)?;
        Ok(Runner { data, cfg, bank })
    }

    /// Trains `method` on `train` and returns a predictor for test epochs.
    fn fit(&self, method: Method, train: &[&Epoch], train_seed: &str) -> Result<Box<dyn Fn(&Epoch) -> Result<usize> + '_>> {
        Ok(match method {
            Method::Cca => Box::new(move |e: &Epoch| Ok(cca_classify(e, &self.bank)?.0)),
            Method::Lda => {
                let m = LdaClassifier::fit(train, &self.cfg.stimulus_freqs)?;
                Box::new(move |e: &Epoch| m.predict(e))
            }
            Method::Proposed => {
                let tc = TrainConfig {
                    seed: rng::child_seed(self.cfg.seed, train_seed),
                    ..self.cfg.train
                };
                let (m, _) = ProposedModel::fit(train, self.data.classes, &tc)?;
                Box::new(move |e: &Epoch| Ok(m.predict(e)?.0))
            }
        })
    }

    fn session_dependent(&self, montage: Montage, speed: Condition, method: Method, k: usize, subject: u32) -> Result<SubjectResult> {
        let epochs = self.data.epochs(subject, speed, montage)?;
        let labels: Vec<usize> = epochs.iter().map(|e| e.label).collect();
        // folds depend on neither montage nor method, so every method sees
        // the same splits
        let folds = kfold_split(&labels, k, rng::child_seed(self.cfg.seed, &format!("folds/{subject}/{speed}")))?;
        let mut correct = 0;
        for (f, (train_idx, test_idx)) in folds.iter().enumerate() {
            assert!(
                train_idx.iter().all(|i| test_idx.binary_search(i).is_err()),
                "train and test folds overlap"
            );
            let train: Vec<&Epoch> = train_idx.iter().map(|&i| &epochs[i]).collect();
            let predict = self.fit(method, &train, &format!("train/session-dependent/{montage}/{speed}/{subject}/{f}"))?;
            for &i in test_idx {
                correct += (predict(&epochs[i])? == epochs[i].label) as usize;
            }
        }
        Ok(SubjectResult {
            subject,
            correct,
            total: epochs.len(),
        })
    }

    /// One model trained on standing, tested on each of `speeds`.
    fn session_to_session(&self, montage: Montage, speeds: &[Condition], method: Method, subject: u32) -> Result<Vec<SubjectResult>> {
        if speeds.contains(&Condition::Standing) {
            return Err(Error::invalid("session-to-session cannot test on standing"));
        }
        let train: Vec<&Epoch> = self.data.epochs(subject, Condition::Standing, montage)?.iter().collect();
        let tests: Vec<&[Epoch]> = speeds
            .iter()
            .map(|&s| self.data.epochs(subject, s, montage))
            .collect::<Result<_>>()?;
        let predict = self.fit(method, &train, &format!("train/session-to-session/{montage}/{subject}"))?;
        tests
            .into_iter()
            .map(|test| {
                assert!(test.iter().all(|e| e.condition != Condition::Standing), "test set contains training trials");
                let correct = test
                    .iter()
                    .map(|e| Ok((predict(e)? == e.label) as usize))
                    .sum::<Result<usize>>()?;
                Ok(SubjectResult {
                    subject,
                    correct,
                    total: test.len(),
                })
            })
            .collect()
    }
}

/// Runs `f` over `items` on `jobs` worker threads (serially for `jobs <= 1`),
/// returning results in input order.
fn run_parallel<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

pub fn run_session_dependent(data: &EvalData, spec: &ProtocolSpec, cfg: &EvalConfig, jobs: usize) -> Result<Vec<SubjectResult>> {
    spec.validate()?;
    let Protocol::SessionDependent { k_folds } = spec.protocol else {
        return Err(Error::invalid("run_session_dependent needs a session-dependent protocol"));
    };
    let runner = Runner::new(data, cfg)?;
    run_parallel(jobs, &data.subjects(), |&s| {
        runner.session_dependent(spec.montage, spec.speed, spec.method, k_folds, s)
    })
}

pub fn run_session_to_session(data: &EvalData, spec: &ProtocolSpec, cfg: &EvalConfig, jobs: usize) -> Result<Vec<SubjectResult>> {
    spec.validate()?;
    if spec.protocol != Protocol::SessionToSession {
        return Err(Error::invalid("run_session_to_session needs the session-to-session protocol"));
    }
    let runner = Runner::new(data, cfg)?;
    let per_subject = run_parallel(jobs, &data.subjects(), |&s| {
        runner.session_to_session(spec.montage, &[spec.speed], spec.method, s)
    })?;
    Ok(per_subject.into_iter().flatten().collect())
}

/// Everything one `eval` invocation covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPlan {
    pub protocol: Protocol,
    pub montages: Vec<Montage>,
    pub speeds: Vec<Condition>,
    pub methods: Vec<Method>,
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        if self.montages.is_empty() || self.speeds.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("evaluation needs at least one montage, speed and method"));
        }
        for &montage in &self.montages {
            for &speed in &self.speeds {
                for &method in &self.methods {
                    ProtocolSpec {
                        protocol: self.protocol,
                        montage,
                        speed,
                        method,
                    }
                    .validate()?;
                }
            }
        }
        Ok(())
    }
}

/// One paired t-test between two methods at one speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub montage: Montage,
    pub speed: Condition,
    pub method_a: Method,
    pub method_b: Method,
    #[serde(flatten)]
    pub test: TTestResult,
}

/// Change of a method's mean accuracy from standing to a walking speed, in
/// absolute percentage points (negative means a drop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedDelta {
    pub montage: Montage,
    pub method: Method,
    pub speed: Condition,
    pub percentage_points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: Protocol,
    pub tables: BTreeMap<Montage, AccuracyTable>,
    pub comparisons: Vec<MethodComparison>,
    pub deltas: Vec<SpeedDelta>,
}

/// Runs every (montage, speed, method) cell of `plan`, parallel over
/// `jobs` threads; the report does not depend on `jobs`.
pub fn evaluate(data: &EvalData, plan: &EvalPlan, cfg: &EvalConfig, jobs: usize) -> Result<Report> {
    plan.validate()?;
    let runner = Runner::new(data, cfg)?;
    let subjects = data.subjects();
    let mut speeds = plan.speeds.clone();
    speeds.sort();
    speeds.dedup();
    let mut methods = plan.methods.clone();
    methods.sort();
    methods.dedup();

    // (montage, speed, method) -> per-subject accuracies
    let mut cells: BTreeMap<(Montage, Condition, Method), Vec<f64>> = BTreeMap::new();
    match plan.protocol {
        Protocol::SessionDependent { k_folds } => {
            let mut tasks = Vec::new();
            for &m in &plan.montages {
                for &sp in &speeds {
                    for &me in &methods {
                        for &s in &subjects {
                            tasks.push((m, sp, me, s));
                        }
                    }
                }
            }
            let results = run_parallel(jobs, &tasks, |&(m, sp, me, s)| {
                let r = runner.session_dependent(m, sp, me, k_folds, s)?;
                log::info!("{m} {sp} {me} S{s}: {:.3}", r.accuracy());
                Ok(r)
            })?;
            for (&(m, sp, me, _), r) in tasks.iter().zip(results) {
                cells.entry((m, sp, me)).or_default().push(r.accuracy());
            }
        }
        Protocol::SessionToSession => {
            let mut tasks = Vec::new();
            for &m in &plan.montages {
                for &me in &methods {
                    for &s in &subjects {
                        tasks.push((m, me, s));
                    }
                }
            }
            let results = run_parallel(jobs, &tasks, |&(m, me, s)| {
                let r = runner.session_to_session(m, &speeds, me, s)?;
                log::info!("{m} {me} S{s}: {:?}", r.iter().map(|x| x.accuracy()).collect::<Vec<_>>());
                Ok(r)
            })?;
            for (&(m, me, _), rs) in tasks.iter().zip(results) {
                for (&sp, r) in speeds.iter().zip(rs) {
                    cells.entry((m, sp, me)).or_default().push(r.accuracy());
                }
            }
        }
    }

    let mut tables = BTreeMap::new();
    let mut comparisons = Vec::new();
    let mut deltas = Vec::new();
    for &m in &plan.montages {
        let mut table = AccuracyTable::new(subjects.clone());
        for &sp in &speeds {
            for &me in &methods {
                table.insert(TableRow::new(sp, me, cells[&(m, sp, me)].clone()));
            }
            for (i, &a) in methods.iter().enumerate() {
                for &b in &methods[i + 1..] {
                    comparisons.push(MethodComparison {
                        montage: m,
                        speed: sp,
                        method_a: a,
                        method_b: b,
                        test: paired_ttest(&cells[&(m, sp, a)], &cells[&(m, sp, b)])?,
                    });
                }
            }
        }
        if speeds.contains(&Condition::Standing) {
            for &me in &methods {
                let base = table.row(Condition::Standing, me).expect("inserted").mean;
                for &sp in speeds.iter().filter(|&&s| s != Condition::Standing) {
                    deltas.push(SpeedDelta {
                        montage: m,
                        method: me,
                        speed: sp,
                        percentage_points: 100.0 * (table.row(sp, me).expect("inserted").mean - base),
                    });
                }
            }
        }
        table.validate()?;
        tables.insert(m, table);
    }
    Ok(Report {
        protocol: plan.protocol,
        tables,
        comparisons,
        deltas,
    })
}

pub const STATS_FILE: &str = "stats.json";
pub const RUN_CONFIG_FILE: &str = "run_config.json";

impl Report {
    /// Markdown for one montage, with a note on training-free CCA.
    pub fn markdown(&self, montage: Montage) -> Result<String> {
        let table = self
            .tables
            .get(&montage)
            .ok_or_else(|| Error::invalid(format!("report has no {montage} table")))?;
        let mut out = format!(
            "{} accuracy, {} ({} subjects)\n\n",
            montage.short_name(),
            self.protocol,
            table.subjects.len()
        );
        out += &table.to_markdown()?;
        if table.rows.iter().any(|r| r.method.is_training_free()) {
            out += "\nCCA is training-free: it ignores the training folds and the standing session.\n";
        }
        Ok(out)
    }

    pub fn stats_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "protocol": self.protocol.name(),
            "ttests": self.comparisons,
            "deltas_from_standing_percentage_points": self.deltas,
        });
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }

    /// Writes `table_<montage>.csv`, `table_<montage>.md`, `stats.json` and
    /// `run_config.json` into `dir` (created if needed).
    pub fn write(&self, dir: impl AsRef<Path>, run_config: &serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: String, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        for (m, table) in &self.tables {
            write(format!("table_{}.csv", m.short_name()), table.to_csv()?)?;
            write(format!("table_{}.md", m.short_name()), self.markdown(*m)?)?;
        }
        write(STATS_FILE.into(), self.stats_json()?)?;
        write(RUN_CONFIG_FILE.into(), serde_json::to_string_pretty(run_config)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SnrPreset;
    use proptest::prelude::*;

    fn small(preset: SnrPreset, subjects: usize, trials: usize) -> EvalData {
        let cfg = GenConfig {
            n_subjects: subjects,
            trials_per_class: trials,
            ..GenConfig::with_preset(preset)
        };
        EvalData::from_generator(&cfg, &Montage::ALL).unwrap()
    }

    #[test]
    fn kfold_ninety_by_five() {
        let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let folds = kfold_split(&labels, 5, 1).unwrap();
        let mut seen = vec![0; 90];
        for (train, test) in &folds {
            assert_eq!(test.len(), 18);
            for c in 0..3 {
                assert_eq!(test.iter().filter(|&&i| labels[i] == c).count(), 6);
            }
            assert_eq!(train.len() + test.len(), 90);
            test.iter().for_each(|&i| seen[i] += 1);
            assert!(train.iter().all(|i| !test.contains(i)));
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert_eq!(folds, kfold_split(&labels, 5, 1).unwrap());
        assert_ne!(folds, kfold_split(&labels, 5, 2).unwrap());
        assert!(kfold_split(&labels[..4], 5, 1).is_err());
        assert!(kfold_split(&labels, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn kfold_partition(labels in prop::collection::vec(0usize..3, 6..60), k in 2usize..6, seed in 0u64..100) {
            let folds = kfold_split(&labels, k, seed).unwrap();
            let mut seen = vec![0; labels.len()];
            for (_, test) in &folds {
                test.iter().for_each(|&i| seen[i] += 1);
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            for c in 0..3 {
                let sizes: Vec<usize> = folds.iter().map(|(_, t)| t.iter().filter(|&&i| labels[i] == c).count()).collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn accuracy_definition() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
        assert_eq!(accuracy(&[1; 90], &labels).unwrap(), 1.0 / 3.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn noiseless_cca_is_perfect_and_lda_transfers_at_high_snr() {
        let data = small(SnrPreset::Noiseless, 2, 5);
        let cfg = EvalConfig::default();
        for montage in Montage::ALL {
            for speed in Condition::ALL {
                let spec = ProtocolSpec {
                    protocol: Protocol::SessionDependent { k_folds: 5 },
                    montage,
                    speed,
                    method: Method::Cca,
                };
                let r = run_session_dependent(&data, &spec, &cfg, 1).unwrap();
                assert!(r.iter().all(|x| x.correct == x.total), "{montage} {speed}");
            }
        }
        // noiseless features make the LDA covariance singular
        let data = small(SnrPreset::High, 2, 5);
        for montage in Montage::ALL {
            let spec = ProtocolSpec {
                protocol: Protocol::SessionToSession,
                montage,
                speed: Condition::Walk16,
                method: Method::Lda,
            };
            let r = run_session_to_session(&data, &spec, &cfg, 1).unwrap();
            assert_eq!(r.len(), 2);
            assert!(r.iter().all(|x| x.total == 15 && x.accuracy() >= 0.8), "{montage} {r:?}");
        }
    }

    #[test]
    fn session_to_session_rejects_standing() {
        let data = small(SnrPreset::Noiseless, 1, 5);
        let spec = ProtocolSpec {
            protocol: Protocol::SessionToSession,
            montage: Montage::Ear18,
            speed: Condition::Standing,
            method: Method::Lda,
        };
        assert!(run_session_to_session(&data, &spec, &EvalConfig::default(), 1).is_err());
        let plan = EvalPlan {
            protocol: Protocol::SessionToSession,
            montages: vec![Montage::Ear18],
            speeds: vec![Condition::Standing],
            methods: vec![Method::Lda],
        };
        assert!(evaluate(&data, &plan, &EvalConfig::default(), 1).is_err());
    }

    #[test]
    fn missing_condition_is_an_error() {
        let data = small(SnrPreset::High, 1, 5);
        let scalp_only = EvalData {
            cells: data.cells.iter().filter(|(k, _)| k.2 == Montage::Scalp32).map(|(k, v)| (*k, v.clone())).collect(),
            ..data.clone()
        };
        let spec = ProtocolSpec {
            protocol: Protocol::SessionDependent { k_folds: 5 },
            montage: Montage::Ear18,
            speed: Condition::Standing,
            method: Method::Lda,
        };
        assert!(run_session_dependent(&scalp_only, &spec, &EvalConfig::default(), 1).is_err());
    }

    #[test]
    fn report_is_independent_of_jobs_and_counts_comparisons() {
        let data = small(SnrPreset::PaperLike, 3, 5);
        let plan = EvalPlan {
            protocol: Protocol::SessionDependent { k_folds: 5 },
            montages: vec![Montage::Ear18],
            speeds: Condition::ALL.to_vec(),
            methods: vec![Method::Cca, Method::Lda],
        };
        let cfg = EvalConfig::default();
        let serial = evaluate(&data, &plan, &cfg, 1).unwrap();
        let parallel = evaluate(&data, &plan, &cfg, 4).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.comparisons.len(), 3);
        assert_eq!(serial.deltas.len(), 4);
        assert_eq!(serial.stats_json().unwrap(), parallel.stats_json().unwrap());
        let t = &serial.tables[&Montage::Ear18];
        assert_eq!(t.rows.len(), 6);
        t.validate().unwrap();
    }

    #[test]
    fn shuffled_labels_keep_balance() {
        let data = small(SnrPreset::High, 1, 5);
        let shuffled = data.with_shuffled_labels(3);
        for key in data.cells.keys() {
            let mut a: Vec<usize> = data.cells[key].iter().map(|e| e.label).collect();
            let mut b: Vec<usize> = shuffled.cells[key].iter().map(|e| e.label).collect();
            assert_ne!(a, b);
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        let scalp = &shuffled.cells[&(1, Condition::Walk08, Montage::Scalp32)];
        let ear = &shuffled.cells[&(1, Condition::Walk08, Montage::Ear18)];
        assert!(scalp.iter().zip(ear).all(|(s, e)| s.label == e.label));
    }
}
