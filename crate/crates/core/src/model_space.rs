//! Candidate model space and the conditioning algebra.
//!
//! Every candidate carries one structural label per hierarchy: the process
//! family (Wiener / gamma) and the trend structure (linear / nonlinear).
//! Hierarchy decisions restrict the space by intersecting the label
//! subspaces of every hierarchy that was decided confidently.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HierarchyId {
    /// Stochastic process family.
    F,
    /// Trend structure.
    T,
}

impl HierarchyId {
    pub const ALL: [HierarchyId; 2] = [HierarchyId::F, HierarchyId::T];

    /// The two labels of this hierarchy, in a fixed order.
    pub fn labels(self) -> [HierarchyLabel; 2] {
        match self {
            HierarchyId::F => [
                HierarchyLabel::Family(FamilyLabel::W),
                HierarchyLabel::Family(FamilyLabel::G),
            ],
            HierarchyId::T => [
                HierarchyLabel::Trend(TrendLabel::L),
                HierarchyLabel::Trend(TrendLabel::NL),
            ],
        }
    }
}

impl fmt::Display for HierarchyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyId::F => f.write_str("F"),
            HierarchyId::T => f.write_str("T"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FamilyLabel {
    /// Wiener: Gaussian increments, non-monotone paths.
    W,
    /// Gamma: non-negative increments, monotone paths.
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrendLabel {
    L,
    NL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HierarchyLabel {
    Family(FamilyLabel),
    Trend(TrendLabel),
}

impl HierarchyLabel {
    pub fn hierarchy(self) -> HierarchyId {
        match self {
            HierarchyLabel::Family(_) => HierarchyId::F,
            HierarchyLabel::Trend(_) => HierarchyId::T,
        }
    }

    /// Parses a label token ("W", "G", "L", "NL"), case-insensitive.
    pub fn parse(token: &str) -> Option<HierarchyLabel> {
        match token.trim().to_ascii_uppercase().as_str() {
            "W" => Some(HierarchyLabel::Family(FamilyLabel::W)),
            "G" => Some(HierarchyLabel::Family(FamilyLabel::G)),
            "L" => Some(HierarchyLabel::Trend(TrendLabel::L)),
            "NL" => Some(HierarchyLabel::Trend(TrendLabel::NL)),
            _ => None,
        }
    }

    /// `+1` for W and NL, `-1` for G and L.
    pub fn sign(self) -> f64 {
        match self {
            HierarchyLabel::Family(FamilyLabel::W) | HierarchyLabel::Trend(TrendLabel::NL) => 1.0,
            _ => -1.0,
        }
    }

    /// Inverse of [`HierarchyLabel::sign`] within hierarchy `h`.
    pub fn from_sign(h: HierarchyId, positive: bool) -> HierarchyLabel {
        let [neg, pos] = match h {
            HierarchyId::F => [
                HierarchyLabel::Family(FamilyLabel::G),
                HierarchyLabel::Family(FamilyLabel::W),
            ],
            HierarchyId::T => [
                HierarchyLabel::Trend(TrendLabel::L),
                HierarchyLabel::Trend(TrendLabel::NL),
            ],
        };
        if positive {
            pos
        } else {
            neg
        }
    }
}

impl fmt::Display for HierarchyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyLabel::Family(FamilyLabel::W) => f.write_str("W"),
            HierarchyLabel::Family(FamilyLabel::G) => f.write_str("G"),
            HierarchyLabel::Trend(TrendLabel::L) => f.write_str("L"),
            HierarchyLabel::Trend(TrendLabel::NL) => f.write_str("NL"),
        }
    }
}

/// A hierarchy decision after arbitration: a label, or the uncertain
/// state of one hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtendedDecision {
    Label(HierarchyLabel),
    Uncertain(HierarchyId),
}

impl ExtendedDecision {
    pub fn is_uncertain(&self) -> bool {
        matches!(self, ExtendedDecision::Uncertain(_))
    }

    pub fn hierarchy(&self) -> HierarchyId {
        match self {
            ExtendedDecision::Label(l) => l.hierarchy(),
            ExtendedDecision::Uncertain(h) => *h,
        }
    }
}

impl fmt::Display for ExtendedDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedDecision::Label(l) => write!(f, "{l}"),
            ExtendedDecision::Uncertain(h) => write!(f, "U_{h}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateModel {
    pub id: String,
    pub family: FamilyLabel,
    pub trend: TrendLabel,
    /// Number of free parameters.
    pub param_count: usize,
}

impl CandidateModel {
    pub fn new(
        id: impl Into<String>,
        family: FamilyLabel,
        trend: TrendLabel,
        param_count: usize,
    ) -> Result<Self> {
        let id = id.into();
        if param_count < 2 {
            return Err(Error::Contract(format!(
                "model {id}: param_count must be >= 2, got {param_count}"
            )));
        }
        if id.is_empty() {
            return Err(Error::Contract("model id must be non-empty".into()));
        }
        Ok(CandidateModel {
            id,
            family,
            trend,
            param_count,
        })
    }

    pub fn structural_label(&self, h: HierarchyId) -> HierarchyLabel {
        structural_label(self, h)
    }
}

/// Label of `model` on hierarchy `h`.
pub fn structural_label(model: &CandidateModel, h: HierarchyId) -> HierarchyLabel {
    match h {
        HierarchyId::F => HierarchyLabel::Family(model.family),
        HierarchyId::T => HierarchyLabel::Trend(model.trend),
    }
}

/// Ordered, non-empty candidate set with unique ids.
///
/// Filtering operations may produce an empty set; only construction from
/// a model list rejects emptiness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CandidateModel>", into = "Vec<CandidateModel>")]
pub struct CandidateSet {
    models: Vec<CandidateModel>,
}

impl CandidateSet {
    pub fn new(models: Vec<CandidateModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Contract("candidate set must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for m in &models {
            if m.param_count < 2 {
                return Err(Error::Contract(format!(
                    "model {}: param_count must be >= 2",
                    m.id
                )));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::DuplicateId(m.id.clone()));
            }
        }
        Ok(CandidateSet { models })
    }

    fn filtered<F: Fn(&CandidateModel) -> bool>(&self, keep: F) -> CandidateSet {
        CandidateSet {
            models: self.models.iter().filter(|m| keep(m)).cloned().collect(),
        }
    }

    pub fn models(&self) -> &[CandidateModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CandidateModel> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.id.as_str()).collect()
    }

    /// Loads a JSON array of `{id, family, trend, param_count}` records.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let models: Vec<CandidateModel> =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: e.line(),
                msg: e.to_string(),
            })?;
        CandidateSet::new(models)
    }
}

impl TryFrom<Vec<CandidateModel>> for CandidateSet {
    type Error = Error;

    fn try_from(models: Vec<CandidateModel>) -> Result<Self> {
        CandidateSet::new(models)
    }
}

impl From<CandidateSet> for Vec<CandidateModel> {
    fn from(set: CandidateSet) -> Self {
        set.models
    }
}

/// Models of `set` whose label on `h` equals `label`, in input order.
pub fn subspace(set: &CandidateSet, h: HierarchyId, label: HierarchyLabel) -> Result<CandidateSet> {
    if label.hierarchy() != h {
        return Err(Error::Contract(format!(
            "label {label} does not belong to hierarchy {h}"
        )));
    }
    Ok(set.filtered(|m| structural_label(m, h) == label))
}

/// Intersection of the label subspaces over every confidently decided
/// hierarchy. All-uncertain decisions keep the whole set.
pub fn condition(
    set: &CandidateSet,
    decisions: &BTreeMap<HierarchyId, ExtendedDecision>,
) -> Result<CandidateSet> {
    let mut retained = set.clone();
    for (&h, decision) in decisions {
        if decision.hierarchy() != h {
            return Err(Error::Contract(format!(
                "decision {decision} filed under hierarchy {h}"
            )));
        }
        if let ExtendedDecision::Label(label) = decision {
            retained = subspace(&retained, h, *label)?;
        }
    }
    Ok(retained)
}

/// Model ids of the two shipped candidate sets.
pub mod ids {
    pub const WIENER_FAMILY: &str = "WienerFamily";
    pub const GAMMA_FAMILY: &str = "GammaFamily";
    pub const LINEAR_WIENER: &str = "LinearWiener";
    pub const NONLINEAR_WIENER: &str = "NonlinearWiener";
    pub const HOMOG_GAMMA: &str = "HomogGamma";
    pub const NONHOMOG_GAMMA: &str = "NonHomogGamma";
}

pub fn case1_set() -> CandidateSet {
    use FamilyLabel::*;
    CandidateSet::new(vec![
        CandidateModel::new(ids::WIENER_FAMILY, W, TrendLabel::L, 2).unwrap(),
        CandidateModel::new(ids::GAMMA_FAMILY, G, TrendLabel::L, 2).unwrap(),
    ])
    .unwrap()
}

pub fn case2_set() -> CandidateSet {
    use FamilyLabel::*;
    use TrendLabel::*;
    CandidateSet::new(vec![
        CandidateModel::new(ids::LINEAR_WIENER, W, L, 2).unwrap(),
        CandidateModel::new(ids::NONLINEAR_WIENER, W, NL, 3).unwrap(),
        CandidateModel::new(ids::HOMOG_GAMMA, G, L, 2).unwrap(),
        CandidateModel::new(ids::NONHOMOG_GAMMA, G, NL, 3).unwrap(),
    ])
    .unwrap()
}

/// `(Case 1, Case 2)` candidate sets.
pub fn default_case_sets() -> (CandidateSet, CandidateSet) {
    (case1_set(), case2_set())
}
