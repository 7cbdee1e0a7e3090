//! Per-hierarchy answers from two decision providers and the arbitration
//! rule that merges them into a label or an uncertain state.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{
    build_query, retrieve_top_k, EvidenceBank, Query, RetrievedSet, DEFAULT_TOP_K,
};
use crate::fit::{fit_kind, increments, FitOptions};
use crate::model_space::{ExtendedDecision, FamilyLabel, HierarchyId, HierarchyLabel, TrendLabel};
use crate::sim::ProcessKind;
use crate::trajectory::Trajectory;

pub const CONFIDENCE_FLOOR: f64 = 0.5;
pub const CONFIDENCE_CAP: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub label: HierarchyLabel,
    pub confidence: f64,
    /// Why a fallback or clamp was applied, if one was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Answer {
    pub fn new(label: HierarchyLabel, confidence: f64) -> Answer {
        Answer {
            label,
            confidence,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Answer {
        self.note = Some(note.into());
        self
    }

    fn check(&self, h: HierarchyId) -> Result<()> {
        if self.label.hierarchy() != h {
            return Err(Error::Contract(format!(
                "answer {} does not belong to hierarchy {h}",
                self.label
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Contract(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcrusConfig {
    /// Confidence margin.
    pub delta: f64,
}

impl Default for RcrusConfig {
    fn default() -> Self {
        RcrusConfig { delta: 0.05 }
    }
}

impl RcrusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!(
                "delta must be in [0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Merges the internal and evidence-conditioned answers:
///
/// 1. same label: that label;
/// 2. labels differ, internal more confident by more than `delta`: internal;
/// 3. labels differ, contextual more confident by more than `delta`: contextual;
/// 4. labels differ, confidences within `delta` (inclusive): uncertain.
pub fn arbitrate(
    internal: &Answer,
    contextual: &Answer,
    cfg: &RcrusConfig,
) -> Result<ExtendedDecision> {
    let h = internal.label.hierarchy();
    if contextual.label.hierarchy() != h {
        return Err(Error::Contract(format!(
            "cannot arbitrate {} against {}",
            internal.label, contextual.label
        )));
    }
    if internal.label == contextual.label {
        return Ok(ExtendedDecision::Label(contextual.label));
    }
    let gap = internal.confidence - contextual.confidence;
    Ok(if gap > cfg.delta {
        ExtendedDecision::Label(internal.label)
    } else if -gap > cfg.delta {
        ExtendedDecision::Label(contextual.label)
    } else {
        ExtendedDecision::Uncertain(h)
    })
}

/// Answers one hierarchy question about a trajectory.
///
/// Implementations must be deterministic for identical inputs unless they
/// document otherwise, and never produce an uncertain answer.
pub trait DecisionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn decide(
        &self,
        hierarchy: HierarchyId,
        traj: &Trajectory,
        context: &str,
        evidence: Option<&RetrievedSet>,
    ) -> Answer;
}

/// Calibration constants of the trajectory heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Negative-increment fraction below which the family is gamma.
    pub gamma_neg_fraction: f64,
    /// Fraction distance that buys full confidence.
    pub confidence_span: f64,
    pub monotone_bonus: f64,
    pub monotone_min_steps: usize,
    /// Likelihood-ratio critical value (chi-square, 1 dof, 5%).
    pub lr_critical: f64,
    pub lr_scale: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            gamma_neg_fraction: 0.02,
            confidence_span: 0.15,
            monotone_bonus: 0.2,
            monotone_min_steps: 30,
            lr_critical: 3.84,
            lr_scale: 4.0,
        }
    }
}

/// Deterministic trajectory-only answers.
#[derive(Debug, Clone, Default)]
pub struct HeuristicProvider {
    pub config: HeuristicConfig,
    pub fit: FitOptions,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl HeuristicProvider {
    pub fn new(config: HeuristicConfig) -> Self {
        HeuristicProvider {
            config,
            fit: FitOptions::default(),
        }
    }

    fn fallback(h: HierarchyId, why: String) -> Answer {
        let label = match h {
            HierarchyId::F => HierarchyLabel::Family(FamilyLabel::W),
            HierarchyId::T => HierarchyLabel::Trend(TrendLabel::L),
        };
        Answer::new(label, CONFIDENCE_FLOOR).with_note(why)
    }

    pub fn family(&self, traj: &Trajectory) -> Answer {
        let cfg = &self.config;
        let deltas = match increments(traj) {
            Ok(inc) if inc.len() >= 2 => inc.deltas,
            _ => {
                return Self::fallback(
                    HierarchyId::F,
                    "too few observations for family heuristic".into(),
                )
            }
        };
        if deltas.iter().all(|&d| d == deltas[0]) {
            return Self::fallback(
                HierarchyId::F,
                "constant increments, family undetermined".into(),
            );
        }
        let n = deltas.len();
        let p = deltas.iter().filter(|&&d| d < 0.0).count() as f64 / n as f64;
        let label = if p < cfg.gamma_neg_fraction {
            FamilyLabel::G
        } else {
            FamilyLabel::W
        };
        let mut confidence = (CONFIDENCE_FLOOR
            + (p - cfg.gamma_neg_fraction).abs() / cfg.confidence_span)
            .clamp(CONFIDENCE_FLOOR, CONFIDENCE_CAP);
        if n >= cfg.monotone_min_steps && deltas.iter().all(|&d| d > 0.0) {
            confidence += cfg.monotone_bonus;
        }
        Answer::new(
            HierarchyLabel::Family(label),
            confidence.min(CONFIDENCE_CAP),
        )
    }

    pub fn trend(&self, traj: &Trajectory) -> Answer {
        let cfg = &self.config;
        let family = match self.family(traj) {
            Answer {
                note: Some(why), ..
            } => return Self::fallback(HierarchyId::T, why),
            Answer {
                label: HierarchyLabel::Family(f),
                ..
            } => f,
            _ => unreachable!("family heuristic answers the family hierarchy"),
        };
        let inc = match increments(traj) {
            Ok(inc) => inc,
            Err(e) => return Self::fallback(HierarchyId::T, e.to_string()),
        };
        let linear = ProcessKind::from_labels(family, TrendLabel::L);
        let nonlinear = ProcessKind::from_labels(family, TrendLabel::NL);
        let (l, nl) = match (
            fit_kind(linear, &inc, &self.fit),
            fit_kind(nonlinear, &inc, &self.fit),
        ) {
            (Ok(l), Ok(nl)) => (l, nl),
            (Err(e), _) | (_, Err(e)) => {
                return Self::fallback(HierarchyId::T, format!("trend fit failed: {e}"));
            }
        };
        let stat = 2.0 * (nl.loglik - l.loglik);
        let label = if stat > cfg.lr_critical {
            TrendLabel::NL
        } else {
            TrendLabel::L
        };
        let sig = logistic((stat - cfg.lr_critical) / cfg.lr_scale);
        let confidence = sig.max(1.0 - sig).clamp(CONFIDENCE_FLOOR, CONFIDENCE_CAP);
        Answer::new(HierarchyLabel::Trend(label), confidence)
    }
}

impl DecisionProvider for HeuristicProvider {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn decide(
        &self,
        hierarchy: HierarchyId,
        traj: &Trajectory,
        _context: &str,
        _evidence: Option<&RetrievedSet>,
    ) -> Answer {
        match hierarchy {
            HierarchyId::F => self.family(traj),
            HierarchyId::T => self.trend(traj),
        }
    }
}

/// Blends a score-weighted vote of the retrieved hints with the heuristic.
#[derive(Debug, Clone, Default)]
pub struct EvidenceProvider {
    pub heuristic: HeuristicProvider,
}

impl EvidenceProvider {
    pub fn new(heuristic: HeuristicProvider) -> Self {
        EvidenceProvider { heuristic }
    }
}

/// Score-weighted mean of the hint signs (`+1` W/NL, `-1` G/L) for `h`;
/// `None` when no retrieved record carries a hint for `h`.
pub fn hint_vote(h: HierarchyId, evidence: &RetrievedSet) -> Option<f64> {
    let (num, den) = evidence
        .items
        .iter()
        .filter_map(|item| {
            let label = item.record.hint?.for_hierarchy(h)?;
            Some((item.score * label.sign(), item.score))
        })
        .fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b));
    (den > 0.0).then(|| num / den)
}

/// Internal answer as a signed score in `[-1, 1]`.
pub fn signed_score(answer: &Answer) -> f64 {
    let strength = ((answer.confidence - CONFIDENCE_FLOOR) / (CONFIDENCE_CAP - CONFIDENCE_FLOOR))
        .clamp(0.0, 1.0);
    answer.label.sign() * strength
}

impl DecisionProvider for EvidenceProvider {
    fn name(&self) -> &str {
        "evidence"
    }

    fn decide(
        &self,
        hierarchy: HierarchyId,
        traj: &Trajectory,
        context: &str,
        evidence: Option<&RetrievedSet>,
    ) -> Answer {
        let internal = self.heuristic.decide(hierarchy, traj, context, None);
        let f = signed_score(&internal);
        let u = match evidence.and_then(|e| hint_vote(hierarchy, e)) {
            Some(v) => 0.5 * v + 0.5 * f,
            None => f,
        };
        let positive = if u != 0.0 {
            u > 0.0
        } else if f != 0.0 {
            f > 0.0
        } else {
            internal.label.sign() > 0.0
        };
        let label = HierarchyLabel::from_sign(hierarchy, positive);
        let mut answer = Answer::new(
            label,
            CONFIDENCE_FLOOR + (CONFIDENCE_CAP - CONFIDENCE_FLOOR) * u.abs(),
        );
        answer.note = internal.note;
        answer
    }
}

/// Returns preset answers; useful to force agreement or disagreement.
#[derive(Debug, Clone)]
pub struct FixedProvider {
    pub answers: BTreeMap<HierarchyId, Answer>,
}

impl DecisionProvider for FixedProvider {
    fn name(&self) -> &str {
        "fixed"
    }

    fn decide(
        &self,
        hierarchy: HierarchyId,
        _traj: &Trajectory,
        _context: &str,
        _evidence: Option<&RetrievedSet>,
    ) -> Answer {
        self.answers
            .get(&hierarchy)
            .cloned()
            .unwrap_or_else(|| HeuristicProvider::fallback(hierarchy, "no preset answer".into()))
    }
}

/// The internal provider and the evidence-conditioned provider.
#[derive(Clone)]
pub struct Providers {
    pub internal: Arc<dyn DecisionProvider>,
    pub contextual: Arc<dyn DecisionProvider>,
}

impl Providers {
    pub fn heuristic(config: HeuristicConfig) -> Providers {
        let h = HeuristicProvider::new(config);
        Providers {
            internal: Arc::new(h.clone()),
            contextual: Arc::new(EvidenceProvider::new(h)),
        }
    }

    /// Providers that disagree with equal confidence on every hierarchy,
    /// so arbitration always yields the uncertain state.
    pub fn always_uncertain() -> Providers {
        let fixed = |f: FamilyLabel, t: TrendLabel| FixedProvider {
            answers: BTreeMap::from([
                (HierarchyId::F, Answer::new(HierarchyLabel::Family(f), 0.7)),
                (HierarchyId::T, Answer::new(HierarchyLabel::Trend(t), 0.7)),
            ]),
        };
        Providers {
            internal: Arc::new(fixed(FamilyLabel::W, TrendLabel::L)),
            contextual: Arc::new(fixed(FamilyLabel::G, TrendLabel::NL)),
        }
    }
}

impl Default for Providers {
    fn default() -> Self {
        Providers::heuristic(HeuristicConfig::default())
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("internal", &self.internal.name())
            .field("contextual", &self.contextual.name())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDecisionRecord {
    pub hierarchy: HierarchyId,
    pub internal: Answer,
    pub contextual: Answer,
    #[serde(rename = "final")]
    pub decision: ExtendedDecision,
}

/// Decision records plus the evidence each hierarchy saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDecisions {
    pub query: Option<Query>,
    pub records: BTreeMap<HierarchyId, HierarchyDecisionRecord>,
    pub evidence: BTreeMap<HierarchyId, RetrievedSet>,
}

impl HierarchyDecisions {
    pub fn finals(&self) -> BTreeMap<HierarchyId, ExtendedDecision> {
        self.records.iter().map(|(h, r)| (*h, r.decision)).collect()
    }
}

/// Builds the query, retrieves evidence and arbitrates each hierarchy in
/// `hierarchies`.
pub fn decide_all_hierarchies(
    traj: &Trajectory,
    context: &str,
    bank: &EvidenceBank,
    providers: &Providers,
    cfg: &RcrusConfig,
    hierarchies: &[HierarchyId],
    top_k: usize,
) -> Result<HierarchyDecisions> {
    cfg.validate()?;
    let query = build_query(traj, context).ok();
    let retrieved = match &query {
        Some(q) if !bank.is_empty() => retrieve_top_k(bank, q, top_k),
        _ => RetrievedSet::default(),
    };
    let mut records = BTreeMap::new();
    let mut evidence = BTreeMap::new();
    for &h in hierarchies {
        let internal = providers.internal.decide(h, traj, context, None);
        let contextual = providers
            .contextual
            .decide(h, traj, context, Some(&retrieved));
        internal.check(h)?;
        contextual.check(h)?;
        let decision = arbitrate(&internal, &contextual, cfg)?;
        records.insert(
            h,
            HierarchyDecisionRecord {
                hierarchy: h,
                internal,
                contextual,
                decision,
            },
        );
        evidence.insert(h, retrieved.clone());
    }
    Ok(HierarchyDecisions {
        query,
        records,
        evidence,
    })
}

/// [`decide_all_hierarchies`] with the default top-K.
pub fn decide_default(
    traj: &Trajectory,
    context: &str,
    bank: &EvidenceBank,
    providers: &Providers,
    cfg: &RcrusConfig,
) -> Result<HierarchyDecisions> {
    decide_all_hierarchies(
        traj,
        context,
        bank,
        providers,
        cfg,
        &HierarchyId::ALL,
        DEFAULT_TOP_K,
    )
}
