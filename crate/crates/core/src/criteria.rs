//! Statistical selection criteria and the argmin rule.
//!
//! All scores are "lower is better". With `n` increments, fitted maximum
//! log-likelihood `L` and `k` free parameters:
//!
//! | criterion | score                |
//! |-----------|----------------------|
//! | AIC       | `2k - 2L`            |
//! | BIC       | `k ln n - 2L`        |
//! | MDL       | `(k/2) ln n - L`     |
//! | EAL       | `-L / n`             |
//! | CV        | mean held-out NLL per increment over 5 contiguous folds |
//!
//! MDL is half of BIC, so the two always rank candidates identically.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{
    fit_kind, increments, loglik_params, min_increments, FitOptions, IncrementSeries,
};
use crate::model_space::{CandidateModel, CandidateSet, TrendLabel};
use crate::sim::ProcessKind;
use crate::trajectory::Trajectory;

pub const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionId {
    Aic,
    Bic,
    Mdl,
    Cv,
    Eal,
}

impl CriterionId {
    pub const ALL: [CriterionId; 5] = [
        CriterionId::Aic,
        CriterionId::Bic,
        CriterionId::Mdl,
        CriterionId::Cv,
        CriterionId::Eal,
    ];
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionId::Aic => "AIC",
            CriterionId::Bic => "BIC",
            CriterionId::Mdl => "MDL",
            CriterionId::Cv => "CV",
            CriterionId::Eal => "EAL",
        })
    }
}

impl FromStr for CriterionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(CriterionId::Aic),
            "bic" => Ok(CriterionId::Bic),
            "mdl" => Ok(CriterionId::Mdl),
            "cv" => Ok(CriterionId::Cv),
            "eal" => Ok(CriterionId::Eal),
            other => Err(Error::Config(format!("unknown criterion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub fit: FitOptions,
    /// Score each model by the better of its family's linear and nonlinear
    /// sub-forms instead of the form implied by its trend label.
    pub family_envelope: bool,
}

/// Information-criterion score from a fitted log-likelihood.
pub fn information_score(criterion: CriterionId, loglik: f64, k: usize, n: usize) -> f64 {
    if !loglik.is_finite() {
        return f64::INFINITY;
    }
    let k = k as f64;
    let nf = n as f64;
    match criterion {
        CriterionId::Aic => 2.0 * k - 2.0 * loglik,
        CriterionId::Bic => k * nf.ln() - 2.0 * loglik,
        CriterionId::Mdl => 0.5 * k * nf.ln() - loglik,
        CriterionId::Eal => -loglik / nf,
        CriterionId::Cv => panic!("CV is not an information criterion"),
    }
}

/// A criterion value plus the reason when it is `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Score {
    fn infinite(note: String) -> Score {
        Score {
            value: f64::INFINITY,
            note: Some(note),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub criterion: CriterionId,
    pub entries: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl ScoreTable {
    pub fn empty(criterion: CriterionId) -> Self {
        ScoreTable {
            criterion,
            entries: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }
}

/// Scores `model` on `traj`. Fitting failures give `+inf` with a note.
pub fn score(
    model: &CandidateModel,
    traj: &Trajectory,
    criterion: CriterionId,
    opts: &ScoringOptions,
) -> Score {
    let inc = match increments(traj) {
        Ok(inc) => inc,
        Err(e) => return Score::infinite(e.to_string()),
    };
    score_increments(model, &inc, criterion, opts)
}

pub fn score_increments(
    model: &CandidateModel,
    inc: &IncrementSeries,
    criterion: CriterionId,
    opts: &ScoringOptions,
) -> Score {
    let forms: Vec<(ProcessKind, usize)> = if opts.family_envelope {
        [TrendLabel::L, TrendLabel::NL]
            .into_iter()
            .map(|t| {
                let kind = ProcessKind::from_labels(model.family, t);
                (kind, kind.param_count())
            })
            .collect()
    } else {
        vec![(ProcessKind::of(model), model.param_count)]
    };

    let mut best: Option<Score> = None;
    for (kind, k) in forms {
        let s = score_form(kind, k, inc, criterion, &opts.fit);
        best = match best {
            Some(b) if b.value <= s.value => Some(b),
            _ => Some(s),
        };
    }
    best.expect("at least one form")
}

fn score_form(
    kind: ProcessKind,
    k: usize,
    inc: &IncrementSeries,
    criterion: CriterionId,
    opts: &FitOptions,
) -> Score {
    if criterion == CriterionId::Cv {
        return cross_validation(kind, inc, opts);
    }
    match fit_kind(kind, inc, opts) {
        Ok(fit) => {
            let value = information_score(criterion, fit.loglik, k, inc.len());
            if value.is_finite() {
                Score { value, note: None }
            } else {
                Score::infinite(format!("{kind}: non-finite score"))
            }
        }
        Err(e) => Score::infinite(format!("{kind}: {e}")),
    }
}

/// Mean held-out negative log-likelihood per increment over contiguous folds.
fn cross_validation(kind: ProcessKind, inc: &IncrementSeries, opts: &FitOptions) -> Score {
    let n = inc.len();
    if n < CV_FOLDS {
        return Score::infinite(format!(
            "{kind}: {n} increments is fewer than {CV_FOLDS} folds"
        ));
    }
    let bounds: Vec<usize> = (0..=CV_FOLDS).map(|f| f * n / CV_FOLDS).collect();
    let mut total = 0.0;
    for f in 0..CV_FOLDS {
        let (lo, hi) = (bounds[f], bounds[f + 1]);
        let train = inc.slice(0..lo).concat(&inc.slice(hi..n));
        let held = inc.slice(lo..hi);
        if train.len() < min_increments(kind) {
            return Score::infinite(format!(
                "{kind}: fold {f} leaves {} training increments",
                train.len()
            ));
        }
        let fit = match fit_kind(kind, &train, opts) {
            Ok(fit) => fit,
            Err(e) => return Score::infinite(format!("{kind}: fold {f}: {e}")),
        };
        let ll = match loglik_params(&fit.params, &held) {
            Ok(ll) if ll.is_finite() => ll,
            Ok(_) => {
                return Score::infinite(format!("{kind}: fold {f}: held-out data outside support"))
            }
            Err(e) => return Score::infinite(format!("{kind}: fold {f}: {e}")),
        };
        total += -ll / held.len() as f64;
    }
    Score {
        value: total / CV_FOLDS as f64,
        note: None,
    }
}

/// Scores every model of `set`.
pub fn score_table(
    set: &CandidateSet,
    traj: &Trajectory,
    criterion: CriterionId,
    opts: &ScoringOptions,
) -> ScoreTable {
    let mut table = ScoreTable::empty(criterion);
    for model in set.models() {
        let s = score(model, traj, criterion, opts);
        let value = if s.value.is_nan() {
            f64::INFINITY
        } else {
            s.value
        };
        table.entries.insert(model.id.clone(), value);
        if let Some(note) = s.note {
            table.notes.insert(model.id.clone(), note);
        }
    }
    table
}

/// Lowest-scoring model of `table` among `set`; ties go to fewer
/// parameters, then to the lexicographically smaller id.
pub fn argmin<'a>(set: &'a CandidateSet, table: &ScoreTable) -> Result<&'a CandidateModel> {
    set.models()
        .iter()
        .filter_map(|m| {
            let v = *table.entries.get(&m.id)?;
            v.is_finite().then_some((m, v))
        })
        .min_by(|(a, va), (b, vb)| {
            va.total_cmp(vb)
                .then(a.param_count.cmp(&b.param_count))
                .then(a.id.cmp(&b.id))
        })
        .map(|(m, _)| m)
        .ok_or(Error::NoApplicableModel)
}

/// Picks the model of `set` minimizing `criterion` on `traj`. A singleton
/// set is returned without scoring.
pub fn select_argmin(
    set: &CandidateSet,
    traj: &Trajectory,
    criterion: CriterionId,
    opts: &ScoringOptions,
) -> Result<(CandidateModel, ScoreTable)> {
    match set.models() {
        [] => Err(Error::Contract(
            "cannot select from an empty candidate set".into(),
        )),
        [only] => Ok((only.clone(), ScoreTable::empty(criterion))),
        _ => {
            let table = score_table(set, traj, criterion, opts);
            let chosen = argmin(set, &table)?.clone();
            Ok((chosen, table))
        }
    }
}
