//! Experiment harness: simulated datasets for both cases, truncation
//! sweeps, the pipeline against standalone criteria, metrics, robustness
//! perturbations and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{select_argmin, CriterionId, ScoringOptions};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceBank, DEFAULT_TOP_K};
use crate::model_space::{ids, CandidateSet, FamilyLabel, TrendLabel};
use crate::pipeline::{run_inference, CandidateSpec, InferenceInput, PipelineConfig};
use crate::rcrus::{HeuristicProvider, Providers, RcrusConfig};
use crate::remote::{RemoteConfig, RemoteProvider};
use crate::sim::{
    derive_seed, generate, split_dataset, truncate_at_progress, ProcessKind, SimParams,
};
use crate::trajectory::Trajectory;

pub const PROPOSED: &str = "proposed";
pub const ALLOWED_N: [u32; 3] = [30, 50, 70];
pub const MAX_GENERATION_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Case1,
    Case2,
}

impl CaseId {
    pub fn spec(self) -> CandidateSpec {
        match self {
            CaseId::Case1 => CandidateSpec::Case1,
            CaseId::Case2 => CandidateSpec::Case2,
        }
    }

    pub fn default_per_class(self) -> usize {
        match self {
            CaseId::Case1 => 60,
            CaseId::Case2 => 120,
        }
    }

    /// `(class id, generating process)` pairs. Case 1 classes are whole
    /// families, generated from their linear members.
    pub fn classes(self) -> Vec<(&'static str, ProcessKind)> {
        match self {
            CaseId::Case1 => vec![
                (ids::WIENER_FAMILY, ProcessKind::LinearWiener),
                (ids::GAMMA_FAMILY, ProcessKind::HomogGamma),
            ],
            CaseId::Case2 => ProcessKind::ALL
                .iter()
                .map(|k| (k.model_id(), *k))
                .collect(),
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
        })
    }
}

impl std::str::FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "case1" | "1" => Ok(CaseId::Case1),
            "case2" | "2" => Ok(CaseId::Case2),
            other => Err(Error::Config(format!("unknown case {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    None,
    WrongHi,
    WrongContext,
    WrongBoth,
}

impl Perturbation {
    pub const ALL: [Perturbation; 4] = [
        Perturbation::None,
        Perturbation::WrongHi,
        Perturbation::WrongContext,
        Perturbation::WrongBoth,
    ];

    fn swaps_trajectory(self) -> bool {
        matches!(self, Perturbation::WrongHi | Perturbation::WrongBoth)
    }

    fn swaps_context(self) -> bool {
        matches!(self, Perturbation::WrongContext | Perturbation::WrongBoth)
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Perturbation::None => "none",
            Perturbation::WrongHi => "wrong_hi",
            Perturbation::WrongContext => "wrong_context",
            Perturbation::WrongBoth => "wrong_both",
        })
    }
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Perturbation::ALL
            .into_iter()
            .find(|p| p.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown perturbation {s:?}")))
    }
}

/// Experiment settings. Deserializes from a flat TOML table; missing keys
/// take the defaults of [`ExperimentConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub case: CaseId,
    pub n_values: Vec<u32>,
    /// `0` selects the case default.
    pub per_class_count: usize,
    pub seed: u64,
    pub criterion: CriterionId,
    pub provider_mode: ProviderMode,
    pub perturbation: Perturbation,
    pub output_path: Option<PathBuf>,
    pub delta: f64,
    pub top_k: usize,
    pub family_envelope: bool,
    /// Make the two providers disagree on every hierarchy.
    pub force_uncertain: bool,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub evidence_bank: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::new(CaseId::Case1)
    }
}

impl ExperimentConfig {
    pub fn new(case: CaseId) -> Self {
        ExperimentConfig {
            case,
            n_values: ALLOWED_N.to_vec(),
            per_class_count: 0,
            seed: 2024,
            criterion: CriterionId::Eal,
            provider_mode: ProviderMode::Heuristic,
            perturbation: Perturbation::None,
            output_path: None,
            delta: RcrusConfig::default().delta,
            top_k: DEFAULT_TOP_K,
            family_envelope: false,
            force_uncertain: false,
            endpoint: None,
            timeout_secs: 30.0,
            evidence_bank: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn per_class(&self) -> usize {
        if self.per_class_count == 0 {
            self.case.default_per_class()
        } else {
            self.per_class_count
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::Config("n_values must not be empty".into()));
        }
        if let Some(n) = self.n_values.iter().find(|n| !ALLOWED_N.contains(n)) {
            return Err(Error::Config(format!("n value {n} not in {ALLOWED_N:?}")));
        }
        if self.per_class() < 5 {
            return Err(Error::Config(format!(
                "per_class_count must be at least 5, got {}",
                self.per_class()
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        if self.provider_mode == ProviderMode::Remote && self.endpoint.is_none() {
            return Err(Error::Config(
                "remote provider mode needs an endpoint".into(),
            ));
        }
        RcrusConfig { delta: self.delta }.validate()
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            rcrus: RcrusConfig { delta: self.delta },
            criterion: self.criterion,
            scoring: self.scoring(),
            top_k: self.top_k,
            ..PipelineConfig::default()
        }
    }

    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            family_envelope: self.family_envelope,
            ..ScoringOptions::default()
        }
    }

    pub fn providers(&self) -> Providers {
        if self.force_uncertain {
            return Providers::always_uncertain();
        }
        match (self.provider_mode, &self.endpoint) {
            (ProviderMode::Remote, Some(url)) => {
                let remote = Arc::new(RemoteProvider::new(
                    RemoteConfig {
                        timeout_secs: self.timeout_secs,
                        ..RemoteConfig::new(url.clone())
                    },
                    HeuristicProvider::default(),
                ));
                Providers {
                    internal: remote.clone(),
                    contextual: remote,
                }
            }
            _ => Providers::default(),
        }
    }

    pub fn bank(&self) -> Result<EvidenceBank> {
        match &self.evidence_bank {
            Some(p) => crate::evidence::load_bank(p),
            None => Ok(EvidenceBank::starter()),
        }
    }
}

/// Plain-language description of where a health indicator comes from.
pub fn mechanism_context(family: FamilyLabel, trend: TrendLabel) -> &'static str {
    match (family, trend) {
        (FamilyLabel::W, TrendLabel::L) => {
            "vibration health indicator of a gearbox bearing under variable load with local fluctuations"
        }
        (FamilyLabel::W, TrendLabel::NL) => {
            "vibration health indicator of a rolling bearing under fluctuating load; degradation is accelerating"
        }
        (FamilyLabel::G, TrendLabel::L) => {
            "cumulative flank wear of a cutting tool; irreversible wear accumulates at a steady rate"
        }
        (FamilyLabel::G, TrendLabel::NL) => {
            "fatigue crack growth in a structural component; irreversible damage accumulating at an accelerating rate"
        }
    }
}

fn opposite(f: FamilyLabel) -> FamilyLabel {
    match f {
        FamilyLabel::W => FamilyLabel::G,
        FamilyLabel::G => FamilyLabel::W,
    }
}

/// Family and trend of the model a trajectory is labeled with.
fn labels_of(set: &CandidateSet, traj: &Trajectory) -> Result<(FamilyLabel, TrendLabel)> {
    let id = traj.true_model_id.as_deref().ok_or_else(|| {
        Error::Contract(format!(
            "{}: trajectory has no ground-truth label",
            traj.unit_id
        ))
    })?;
    let m = set.get(id).ok_or_else(|| {
        Error::Contract(format!(
            "{}: label {id} not in the candidate set",
            traj.unit_id
        ))
    })?;
    Ok((m.family, m.trend))
}

/// Applies a robustness perturbation. `wrong_hi` swaps in a prefix of the
/// same length from a pool trajectory of the opposite family (same trend
/// preferred); the ground-truth label is kept. `wrong_context` swaps in
/// the opposite-family mechanism description.
pub fn perturb_input(
    input: &InferenceInput,
    mode: Perturbation,
    pool: &[Trajectory],
    rng_seed: u64,
) -> Result<InferenceInput> {
    if mode == Perturbation::None {
        return Ok(input.clone());
    }
    let set = input.candidates.resolve();
    let (family, trend) = labels_of(&set, &input.trajectory)?;
    let mut out = input.clone();
    if mode.swaps_context() {
        out.context = mechanism_context(opposite(family), trend).to_string();
    }
    if mode.swaps_trajectory() {
        let target = input.trajectory.len();
        let other: Vec<(&Trajectory, TrendLabel)> = pool
            .iter()
            .filter_map(|t| match labels_of(&set, t) {
                Ok((f, tr)) if f == opposite(family) => Some((t, tr)),
                _ => None,
            })
            .collect();
        if other.is_empty() {
            return Err(Error::Contract(
                "wrong_hi needs opposite-family trajectories in the pool".into(),
            ));
        }
        let long_enough = |same_trend: bool| -> Vec<&Trajectory> {
            other
                .iter()
                .filter(|(t, tr)| t.len() >= target && (!same_trend || *tr == trend))
                .map(|(t, _)| *t)
                .collect()
        };
        let mut candidates = long_enough(true);
        if candidates.is_empty() {
            candidates = long_enough(false);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let donor = match candidates.choose(&mut rng) {
            Some(t) => (*t).clone(),
            None => other
                .iter()
                .map(|(t, _)| *t)
                .max_by_key(|t| t.len())
                .cloned()
                .expect("non-empty pool"),
        };
        let mut swapped = donor.prefix(target.min(donor.len()));
        swapped.unit_id = input.trajectory.unit_id.clone();
        swapped.true_model_id = input.trajectory.true_model_id.clone();
        out.trajectory = swapped;
    }
    Ok(out)
}

/// Generates `per_class` run-to-failure trajectories per class. Censored
/// draws are retried with fresh seeds.
pub fn generate_dataset(case: CaseId, per_class: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let mut out = Vec::with_capacity(per_class * case.classes().len());
    for (c, (class, kind)) in case.classes().into_iter().enumerate() {
        let units: Vec<Result<Trajectory>> = (0..per_class)
            .into_par_iter()
            .map(|i| {
                let unit = format!("{class}-{i:03}");
                for attempt in 0..MAX_GENERATION_ATTEMPTS {
                    let s = derive_seed(
                        seed,
                        (c as u64) * MAX_GENERATION_ATTEMPTS + attempt,
                        i as u64,
                    );
                    let params = SimParams::default_for(kind, s);
                    let sim = generate(&params, unit.clone())?;
                    if !sim.censored {
                        return Ok(sim.trajectory.with_label(class));
                    }
                }
                let p = SimParams::default_for(kind, 0);
                Err(Error::Censored {
                    threshold: p.failure_threshold,
                    max_steps: p.max_steps,
                })
            })
            .collect();
        for u in units {
            out.push(u?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[i][j]`: true class `i` predicted as class `j`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Accuracy plus macro-averaged precision and recall; F1 is the harmonic
/// mean of the two macro averages. Zero denominators count as 0.
pub fn compute_metrics(
    truth: &[String],
    predicted: &[String],
    classes: &[String],
) -> Result<Metrics> {
    if truth.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let index = |l: &str| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::Contract(format!("label {l:?} not among the classes")))
    };
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[index(t)?][index(p)?] += 1;
    }
    Ok(metrics_from_confusion(confusion))
}

pub fn metrics_from_confusion(confusion: Vec<Vec<usize>>) -> Metrics {
    let k = confusion.len();
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..k {
        let predicted: usize = (0..k).map(|j| confusion[j][i]).sum();
        let actual: usize = confusion[i].iter().sum();
        p += ratio(confusion[i][i], predicted);
        r += ratio(confusion[i][i], actual);
    }
    let (precision, recall) = if k == 0 {
        (0.0, 0.0)
    } else {
        (p / k as f64, r / k as f64)
    };
    Metrics {
        accuracy: ratio(correct, total),
        precision,
        recall,
        f1: harmonic_f1(precision, recall),
        confusion,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub n: u32,
    pub method: String,
    pub metrics: Metrics,
    /// Share of test units whose predicted family is right.
    pub family_accuracy: f64,
    /// Summed per-unit compute time.
    pub runtime_seconds: f64,
    /// unit id -> predicted model id
    pub predictions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case: CaseId,
    pub perturbation: Perturbation,
    pub classes: Vec<String>,
    pub test_count: usize,
    pub results: Vec<MethodResult>,
    pub runtime_seconds: f64,
}

impl MetricsReport {
    pub fn get(&self, n: u32, method: &str) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.n == n && r.method == method)
    }

    pub fn methods() -> Vec<String> {
        std::iter::once(PROPOSED.to_string())
            .chain(CriterionId::ALL.iter().map(|c| c.to_string()))
            .collect()
    }
}

struct UnitOutcome {
    predictions: Vec<(String, f64)>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let started = Instant::now();
    let bank = cfg.bank()?;
    let providers = cfg.providers();
    let pipeline_cfg = cfg.pipeline_config();
    let scoring = cfg.scoring();
    let spec = cfg.case.spec();
    let set = spec.resolve();

    let data = generate_dataset(cfg.case, cfg.per_class(), cfg.seed)?;
    let split = split_dataset(&data, derive_seed(cfg.seed, u64::MAX, 0))?;
    let threshold = SimParams::default_for(ProcessKind::LinearWiener, 0).failure_threshold;
    let methods = MetricsReport::methods();
    let classes: Vec<String> = set.ids().into_iter().map(String::from).collect();

    let mut results = Vec::new();
    for &n in &cfg.n_values {
        let outcomes: Vec<Result<UnitOutcome>> = split
            .test
            .par_iter()
            .enumerate()
            .map(|(i, unit)| {
                let truncated = truncate_at_progress(unit, n, threshold)?;
                let base = InferenceInput {
                    trajectory: truncated,
                    context: {
                        let (f, t) = labels_of(&set, unit)?;
                        mechanism_context(f, t).to_string()
                    },
                    candidates: spec.clone(),
                };
                let input = perturb_input(
                    &base,
                    cfg.perturbation,
                    &split.train,
                    derive_seed(cfg.seed, u64::from(n), i as u64),
                )?;
                let mut predictions = Vec::with_capacity(methods.len());
                let clock = Instant::now();
                let r = run_inference(&input, &bank, &providers, &pipeline_cfg)?;
                predictions.push((r.chosen.id, clock.elapsed().as_secs_f64()));
                for c in CriterionId::ALL {
                    let clock = Instant::now();
                    let (m, _) = select_argmin(&set, &input.trajectory, c, &scoring)?;
                    predictions.push((m.id, clock.elapsed().as_secs_f64()));
                }
                Ok(UnitOutcome { predictions })
            })
            .collect();
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let truth: Vec<String> = split
            .test
            .iter()
            .map(|t| t.true_model_id.clone().unwrap_or_default())
            .collect();
        for (mi, method) in methods.iter().enumerate() {
            let predicted: Vec<String> = outcomes
                .iter()
                .map(|o| o.predictions[mi].0.clone())
                .collect();
            let metrics = compute_metrics(&truth, &predicted, &classes)?;
            let family_hits = truth
                .iter()
                .zip(&predicted)
                .filter(|(t, p)| set.get(t).map(|m| m.family) == set.get(p).map(|m| m.family))
                .count();
            results.push(MethodResult {
                n,
                method: method.clone(),
                metrics,
                family_accuracy: family_hits as f64 / truth.len().max(1) as f64,
                runtime_seconds: outcomes.iter().map(|o| o.predictions[mi].1).sum(),
                predictions: split
                    .test
                    .iter()
                    .map(|t| t.unit_id.clone())
                    .zip(predicted)
                    .collect(),
            });
        }
    }
    let report = MetricsReport {
        case: cfg.case,
        perturbation: cfg.perturbation,
        classes,
        test_count: split.test.len(),
        results,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(path) = &cfg.output_path {
        let format = ReportFormat::from_path(path);
        emit_report(&report, path, format)?;
    }
    Ok(report)
}

/// Runs the experiment under every perturbation mode.
pub fn run_robustness(cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    Perturbation::ALL
        .into_iter()
        .map(|p| {
            run_experiment(&ExperimentConfig {
                perturbation: p,
                output_path: None,
                ..cfg.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    /// `.md` means markdown, anything else CSV.
    pub fn from_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md") | Some("markdown") => ReportFormat::Markdown,
            _ => ReportFormat::Csv,
        }
    }
}

const METRIC_NAMES: [&str; 6] = [
    "accuracy",
    "precision",
    "recall",
    "f1",
    "family_accuracy",
    "runtime_seconds",
];

fn metric_values(r: &MethodResult) -> [f64; 6] {
    [
        r.metrics.accuracy,
        r.metrics.precision,
        r.metrics.recall,
        r.metrics.f1,
        r.family_accuracy,
        r.runtime_seconds,
    ]
}

pub fn render_csv(report: &MetricsReport) -> String {
    let mut s = String::from("case,perturbation,n,method,metric,value\n");
    for r in &report.results {
        for (name, v) in METRIC_NAMES.iter().zip(metric_values(r)) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                report.case, report.perturbation, r.n, r.method, name, v
            );
        }
    }
    s
}

pub fn render_markdown(report: &MetricsReport) -> String {
    let mut s = format!(
        "# {} (perturbation: {}, test units: {})\n",
        report.case, report.perturbation, report.test_count
    );
    let mut ns: Vec<u32> = report.results.iter().map(|r| r.n).collect();
    ns.dedup();
    for n in ns {
        let _ = write!(s, "\n## n = {n}\n\n| Method | Acc | Prec | Rec | F1 | Family Acc |\n|---|---|---|---|---|---|\n");
        for r in report.results.iter().filter(|r| r.n == n) {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
                r.method, m.accuracy, m.precision, m.recall, m.f1, r.family_accuracy
            );
        }
        if let Some(p) = report.get(n, PROPOSED) {
            let _ = write!(
                s,
                "\nConfusion matrix ({PROPOSED}; rows true, columns predicted: {}):\n\n",
                report.classes.join(", ")
            );
            for row in &p.metrics.confusion {
                let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(s, "    {}", cells.join(" "));
            }
        }
    }
    s
}

/// Robustness table: one row per perturbation mode and n, proposed method.
pub fn render_robustness(reports: &[MetricsReport]) -> String {
    let mut s = String::from("| Perturbation | n | Acc | Prec | Rec | F1 | Family Acc |\n|---|---|---|---|---|---|---|\n");
    for rep in reports {
        for r in rep.results.iter().filter(|r| r.method == PROPOSED) {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
                rep.perturbation, r.n, m.accuracy, m.precision, m.recall, m.f1, r.family_accuracy
            );
        }
    }
    s
}

pub fn emit_report(
    report: &MetricsReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn metric_examples() {
        let classes = s(&["A", "B"]);
        let all = compute_metrics(&s(&["A", "B", "A"]), &s(&["A", "B", "A"]), &classes).unwrap();
        assert_eq!(
            (all.accuracy, all.precision, all.recall, all.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
        let none = compute_metrics(&s(&["A", "B", "A"]), &s(&["B", "A", "B"]), &classes).unwrap();
        assert_eq!(
            (none.accuracy, none.precision, none.recall, none.f1),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!((harmonic_f1(1.0, 0.968) - 0.983).abs() < 1e-3);
        assert!(compute_metrics(&s(&["A"]), &s(&[]), &classes).is_err());
        assert!(compute_metrics(&s(&["C"]), &s(&["A"]), &classes).is_err());
    }

    #[test]
    fn absent_class_predictions_count_as_zero_precision() {
        let m = compute_metrics(&s(&["A", "A"]), &s(&["A", "A"]), &s(&["A", "B"])).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.5);
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_toml_str("case = \"case2\"\nn_values = [30]\nseed = 7\ncriterion = \"bic\"\nperturbation = \"wrong_hi\"\n").unwrap();
        assert_eq!(cfg.case, CaseId::Case2);
        assert_eq!(cfg.per_class(), 120);
        assert_eq!(cfg.criterion, CriterionId::Bic);
        assert_eq!(cfg.perturbation, Perturbation::WrongHi);
        assert!(ExperimentConfig::from_toml_str("n_values = []").is_err());
        assert!(ExperimentConfig::from_toml_str("n_values = [40]").is_err());
        assert!(ExperimentConfig::from_toml_str("per_class_count = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("colour = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("provider_mode = \"remote\"").is_err());
    }

    #[test]
    fn dataset_sizes_and_labels() {
        let d = generate_dataset(CaseId::Case1, 10, 3).unwrap();
        assert_eq!(d.len(), 20);
        assert!(d.iter().all(|t| t.true_model_id.is_some()));
        assert_eq!(d, generate_dataset(CaseId::Case1, 10, 3).unwrap());
    }

    #[test]
    fn perturbation_modes() {
        let pool = generate_dataset(CaseId::Case1, 6, 11).unwrap();
        let unit = pool
            .iter()
            .find(|t| t.true_model_id.as_deref() == Some(ids::GAMMA_FAMILY))
            .unwrap();
        let input = InferenceInput {
            trajectory: truncate_at_progress(unit, 50, 50.0).unwrap(),
            context: mechanism_context(FamilyLabel::G, TrendLabel::L).into(),
            candidates: CandidateSpec::Case1,
        };
        assert_eq!(
            perturb_input(&input, Perturbation::None, &pool, 1).unwrap(),
            input
        );

        let hi = perturb_input(&input, Perturbation::WrongHi, &pool, 1).unwrap();
        assert_eq!(hi.context, input.context);
        assert_eq!(hi.trajectory.len(), input.trajectory.len());
        assert_eq!(hi.trajectory.true_model_id, input.trajectory.true_model_id);
        assert!(hi.trajectory.values.windows(2).any(|w| w[1] < w[0]));

        let both = perturb_input(&input, Perturbation::WrongBoth, &pool, 1).unwrap();
        assert_eq!(both.trajectory, hi.trajectory);
        assert_eq!(
            both.context,
            mechanism_context(FamilyLabel::W, TrendLabel::L)
        );

        let gamma_only: Vec<Trajectory> = pool
            .iter()
            .filter(|t| t.true_model_id == unit.true_model_id)
            .cloned()
            .collect();
        assert!(perturb_input(&input, Perturbation::WrongHi, &gamma_only, 1).is_err());
    }
}
