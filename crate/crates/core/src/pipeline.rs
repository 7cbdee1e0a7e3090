//! End-to-end inference: hierarchy decisions, conditioning, then
//! statistical selection over whatever candidates remain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::criteria::{select_argmin, CriterionId, ScoreTable, ScoringOptions};
use crate::error::{Error, Result};
use crate::evidence::{tokenize, EvidenceBank, Query, RetrievedSet, DEFAULT_TOP_K};
use crate::fit::min_increments;
use crate::model_space::{
    case1_set, case2_set, condition, CandidateModel, CandidateSet, HierarchyId,
};
use crate::rcrus::{decide_all_hierarchies, HierarchyDecisionRecord, Providers, RcrusConfig};
use crate::sim::ProcessKind;
use crate::trajectory::Trajectory;

pub const DEFAULT_BANNED_TOKENS: [&str; 3] = ["RUL", "failure time", "remaining life"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSpec {
    Case1,
    Case2,
    Custom(CandidateSet),
}

impl CandidateSpec {
    pub fn resolve(&self) -> CandidateSet {
        match self {
            CandidateSpec::Case1 => case1_set(),
            CandidateSpec::Case2 => case2_set(),
            CandidateSpec::Custom(set) => set.clone(),
        }
    }
}

/// A trajectory already truncated at the inspection time, plus free-text
/// domain context. The context must not reveal failure times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceInput {
    pub trajectory: Trajectory,
    #[serde(default)]
    pub context: String,
    pub candidates: CandidateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rcrus: RcrusConfig,
    pub criterion: CriterionId,
    pub scoring: ScoringOptions,
    pub top_k: usize,
    pub banned_tokens: Vec<String>,
    /// Reject inputs with leakage warnings instead of only reporting them.
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rcrus: RcrusConfig::default(),
            criterion: CriterionId::Eal,
            scoring: ScoringOptions::default(),
            top_k: DEFAULT_TOP_K,
            banned_tokens: DEFAULT_BANNED_TOKENS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    Leakage,
    ShortWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputWarning {
    pub kind: WarningKind,
    pub message: String,
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && haystack.windows(phrase.len()).any(|w| w == phrase)
}

/// Leakage and short-window checks. Banned tokens match whole words,
/// case-insensitively.
pub fn validate_input(input: &InferenceInput, cfg: &PipelineConfig) -> Vec<InputWarning> {
    let mut warnings = Vec::new();
    let words = tokenize(&input.context);
    for banned in &cfg.banned_tokens {
        if contains_phrase(&words, &tokenize(banned)) {
            warnings.push(InputWarning {
                kind: WarningKind::Leakage,
                message: format!("context mentions {banned:?}"),
            });
        }
    }
    let needed = input
        .candidates
        .resolve()
        .models()
        .iter()
        .map(|m| min_increments(ProcessKind::of(m)))
        .max()
        .unwrap_or(0);
    let have = input.trajectory.len().saturating_sub(1);
    if have < needed {
        warnings.push(InputWarning {
            kind: WarningKind::ShortWindow,
            message: format!("{have} increments, candidate fits need {needed}"),
        });
    }
    warnings
}

/// Hierarchies on which `set` actually varies. For the Case 1 set this is
/// the family hierarchy only.
pub fn hierarchies_in_scope(set: &CandidateSet) -> Vec<HierarchyId> {
    HierarchyId::ALL
        .into_iter()
        .filter(|&h| {
            let mut labels = set.models().iter().map(|m| m.structural_label(h));
            let first = labels.next();
            labels.any(|l| Some(l) != first)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: CandidateModel,
    pub decisions: BTreeMap<HierarchyId, HierarchyDecisionRecord>,
    pub retained: CandidateSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreTable>,
    pub query: Option<Query>,
    pub evidence_trail: BTreeMap<HierarchyId, RetrievedSet>,
    pub diagnostics: Vec<String>,
}

pub fn run_inference(
    input: &InferenceInput,
    bank: &EvidenceBank,
    providers: &Providers,
    cfg: &PipelineConfig,
) -> Result<SelectionResult> {
    input.trajectory.validate()?;
    let warnings = validate_input(input, cfg);
    if cfg.strict {
        if let Some(w) = warnings.iter().find(|w| w.kind == WarningKind::Leakage) {
            return Err(Error::Contract(format!("leakage: {}", w.message)));
        }
    }
    let mut diagnostics: Vec<String> = warnings.into_iter().map(|w| w.message).collect();

    let candidates = input.candidates.resolve();
    let scope = hierarchies_in_scope(&candidates);
    let decisions = decide_all_hierarchies(
        &input.trajectory,
        &input.context,
        bank,
        providers,
        &cfg.rcrus,
        &scope,
        cfg.top_k,
    )?;
    for r in decisions.records.values() {
        for (who, a) in [("internal", &r.internal), ("contextual", &r.contextual)] {
            if let Some(note) = &a.note {
                diagnostics.push(format!("{} {who}: {note}", r.hierarchy));
            }
        }
    }

    let retained = condition(&candidates, &decisions.finals())?;
    if retained.is_empty() {
        return Err(Error::EmptyRetainedSet);
    }
    let (chosen, table) = select_argmin(&retained, &input.trajectory, cfg.criterion, &cfg.scoring)?;
    for (id, note) in &table.notes {
        diagnostics.push(format!("{id}: {note}"));
    }
    let scores = (retained.len() > 1).then_some(table);
    Ok(SelectionResult {
        chosen,
        decisions: decisions.records,
        retained,
        scores,
        query: decisions.query,
        evidence_trail: decisions.evidence,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::ids;
    use crate::sim::{generate, SimParams};

    fn input(
        kind: ProcessKind,
        seed: u64,
        context: &str,
        candidates: CandidateSpec,
    ) -> InferenceInput {
        let t = generate(&SimParams::default_for(kind, seed), "u")
            .unwrap()
            .trajectory;
        InferenceInput {
            trajectory: t,
            context: context.into(),
            candidates,
        }
    }

    #[test]
    fn scope_per_case() {
        assert_eq!(hierarchies_in_scope(&case1_set()), vec![HierarchyId::F]);
        assert_eq!(
            hierarchies_in_scope(&case2_set()),
            HierarchyId::ALL.to_vec()
        );
    }

    #[test]
    fn leakage_and_short_window_warnings() {
        let cfg = PipelineConfig::default();
        let mut inp = input(
            ProcessKind::LinearWiener,
            1,
            "gearbox vibration HI, variable load",
            CandidateSpec::Case2,
        );
        assert!(validate_input(&inp, &cfg).is_empty());
        inp.context = "failure time is 120 h".into();
        let w = validate_input(&inp, &cfg);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].kind, WarningKind::Leakage);
        inp.context = "a rule of thumb".into();
        assert!(validate_input(&inp, &cfg).is_empty());
        inp.trajectory = Trajectory::from_values("s", vec![0.0, 1.0]).unwrap();
        assert_eq!(validate_input(&inp, &cfg)[0].kind, WarningKind::ShortWindow);
    }

    #[test]
    fn strict_mode_rejects_leakage() {
        let cfg = PipelineConfig {
            strict: true,
            ..PipelineConfig::default()
        };
        let inp = input(
            ProcessKind::LinearWiener,
            1,
            "the RUL is 40 cycles",
            CandidateSpec::Case2,
        );
        let err =
            run_inference(&inp, &EvidenceBank::starter(), &Providers::default(), &cfg).unwrap_err();
        assert!(err.to_string().contains("leakage"));
    }

    #[test]
    fn result_invariants_and_determinism() {
        let bank = EvidenceBank::starter();
        let providers = Providers::default();
        let cfg = PipelineConfig::default();
        for (i, kind) in ProcessKind::ALL.into_iter().enumerate() {
            let inp = input(kind, 40 + i as u64, "", CandidateSpec::Case2);
            let a = run_inference(&inp, &bank, &providers, &cfg).unwrap();
            let b = run_inference(&inp, &bank, &providers, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.retained.contains(&a.chosen.id));
            assert_eq!(a.scores.is_some(), a.retained.len() > 1);
            assert_eq!(a.decisions.len(), 2);
            assert_eq!(a.evidence_trail.len(), 2);
        }
    }

    #[test]
    fn all_uncertain_degenerates_to_the_criterion() {
        let bank = EvidenceBank::starter();
        let cfg = PipelineConfig::default();
        let inp = input(ProcessKind::NonlinearWiener, 9, "", CandidateSpec::Case2);
        let r = run_inference(&inp, &bank, &Providers::always_uncertain(), &cfg).unwrap();
        assert_eq!(r.retained, case2_set());
        let (bare, _) = select_argmin(
            &case2_set(),
            &inp.trajectory,
            CriterionId::Eal,
            &cfg.scoring,
        )
        .unwrap();
        assert_eq!(r.chosen, bare);
    }

    #[test]
    fn empty_retained_set_is_an_error() {
        use crate::model_space::{FamilyLabel, HierarchyLabel, TrendLabel};
        use crate::rcrus::{Answer, FixedProvider};
        let set = CandidateSet::new(vec![
            CandidateModel::new(ids::LINEAR_WIENER, FamilyLabel::W, TrendLabel::L, 2).unwrap(),
            CandidateModel::new(ids::NONHOMOG_GAMMA, FamilyLabel::G, TrendLabel::NL, 3).unwrap(),
        ])
        .unwrap();
        let fixed = std::sync::Arc::new(FixedProvider {
            answers: BTreeMap::from([
                (
                    HierarchyId::F,
                    Answer::new(HierarchyLabel::Family(FamilyLabel::G), 0.9),
                ),
                (
                    HierarchyId::T,
                    Answer::new(HierarchyLabel::Trend(TrendLabel::L), 0.9),
                ),
            ]),
        });
        let providers = Providers {
            internal: fixed.clone(),
            contextual: fixed,
        };
        let inp = input(ProcessKind::HomogGamma, 3, "", CandidateSpec::Custom(set));
        let err = run_inference(
            &inp,
            &EvidenceBank::starter(),
            &providers,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyRetainedSet));
    }
}
