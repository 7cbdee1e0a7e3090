//! Local evidence bank: proposition records, an inverted index, query
//! construction from trajectory features and BM25 top-K retrieval.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::increments;
use crate::model_space::{FamilyLabel, HierarchyId, HierarchyLabel, TrendLabel};
use crate::trajectory::Trajectory;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 8;

/// Bank shipped with the crate (about sixty records over the three
/// corpus categories).
pub const STARTER_BANK: &str = include_str!("../data/starter_bank.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Mechanism,
    ProcessTheory,
    Review,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub category: Category,
    pub citation: String,
}

/// Label hints an author attached to a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hint {
    #[serde(default)]
    pub family: Option<FamilyLabel>,
    #[serde(default)]
    pub trend: Option<TrendLabel>,
}

impl Hint {
    pub fn for_hierarchy(&self, h: HierarchyId) -> Option<HierarchyLabel> {
        match h {
            HierarchyId::F => self.family.map(HierarchyLabel::Family),
            HierarchyId::T => self.trend.map(HierarchyLabel::Trend),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub id: u64,
    pub proposition: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<Hint>,
}

/// Lowercases, replaces every non-alphanumeric character by a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Posting {
    doc: usize,
    tf: u32,
}

/// Immutable record store with a term -> postings index.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceBank {
    records: Vec<EvidenceRecord>,
    postings: HashMap<String, Vec<Posting>>,
    doc_len: Vec<usize>,
    avg_len: f64,
}

impl EvidenceBank {
    pub fn from_records(records: Vec<EvidenceRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id) {
                return Err(Error::DuplicateId(r.id.to_string()));
            }
            if r.proposition.trim().is_empty() {
                return Err(Error::Contract(format!(
                    "record {} has an empty proposition",
                    r.id
                )));
            }
        }
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(records.len());
        for (doc, r) in records.iter().enumerate() {
            let tokens = tokenize(&r.proposition);
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
        }
        let avg_len = if records.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / records.len() as f64
        };
        Ok(EvidenceBank {
            records,
            postings,
            doc_len,
            avg_len,
        })
    }

    /// Parses line-delimited JSON records; `source` names the input in errors.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                msg,
            };
            let rec: EvidenceRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if rec.proposition.trim().is_empty() {
                return Err(err("empty proposition".into()));
            }
            if !seen.insert(rec.id) {
                return Err(err(format!("duplicate id {}", rec.id)));
            }
            records.push(rec);
        }
        EvidenceBank::from_records(records)
    }

    pub fn starter() -> Self {
        EvidenceBank::parse(STARTER_BANK, "starter_bank.jsonl").expect("shipped bank parses")
    }

    pub fn records(&self) -> &[EvidenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.records.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<EvidenceBank> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvidenceBank::parse(&text, &path.display().to_string())
}

/// Splits a raw document into sentence-level records, dropping fragments
/// with fewer than four alphanumeric characters. Ids start at `first_id`.
pub fn sentence_split_fallback(document: &str, doc_id: &str, first_id: u64) -> Vec<EvidenceRecord> {
    document
        .split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| s.chars().filter(|c| c.is_alphanumeric()).count() >= 4)
        .enumerate()
        .map(|(i, s)| EvidenceRecord {
            id: first_id + i as u64,
            proposition: s.to_owned(),
            provenance: Provenance {
                doc_id: doc_id.to_owned(),
                category: Category::Review,
                citation: doc_id.to_owned(),
            },
            hint: None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub neg_increment_fraction: f64,
    pub monotone: bool,
    pub trend_curvature: f64,
    pub noise_scale_ratio: f64,
}

const EPS: f64 = 1e-9;
/// Curvature above which the query calls the trend accelerating.
pub const CURVATURE_NONLINEAR: f64 = 0.2;

pub fn feature_summary(traj: &Trajectory) -> Result<FeatureSummary> {
    if traj.len() < 3 {
        return Err(Error::InvalidTrajectory(format!(
            "{}: features need at least 3 observations",
            traj.unit_id
        )));
    }
    let inc = increments(traj)?;
    let n = inc.len() as f64;
    let neg = inc.deltas.iter().filter(|&&d| d < 0.0).count() as f64 / n;
    let mean = inc.deltas.iter().sum::<f64>() / n;
    let sd = (inc.deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();

    // log-log slope of y against t over t > 0
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.values)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, y)| (t.ln(), y.max(EPS).ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            1.0
        }
    } else {
        1.0
    };

    let summary = FeatureSummary {
        neg_increment_fraction: neg,
        monotone: neg == 0.0,
        trend_curvature: slope - 1.0,
        noise_scale_ratio: sd / (mean.abs() + EPS),
    };
    if !(summary.trend_curvature.is_finite() && summary.noise_scale_ratio.is_finite()) {
        return Err(Error::InvalidTrajectory(format!(
            "{}: non-finite features",
            traj.unit_id
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub features: FeatureSummary,
}

/// Feature phrases describing the trajectory.
pub fn feature_phrases(f: &FeatureSummary) -> Vec<&'static str> {
    let mut phrases = vec![
        if f.monotone {
            "monotonic increase"
        } else {
            "local increases and decreases"
        },
        if f.trend_curvature > CURVATURE_NONLINEAR {
            "accelerating nonlinear trend"
        } else {
            "approximately linear trend"
        },
    ];
    if f.noise_scale_ratio > 1.0 {
        phrases.push("high measurement noise");
    }
    phrases
}

/// Reads only the (already truncated) trajectory and the context text.
pub fn build_query(traj: &Trajectory, context: &str) -> Result<Query> {
    let features = feature_summary(traj)?;
    let mut text = feature_phrases(&features).join("; ");
    let context = context.trim();
    if !context.is_empty() {
        text.push_str(". ");
        text.push_str(context);
    }
    Ok(Query { text, features })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub record: EvidenceRecord,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievedSet {
    pub items: Vec<RetrievedItem>,
}

impl RetrievedSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.items.iter().map(|i| i.record.id).collect()
    }
}

/// BM25 top-`k` over the bank. Each distinct query term counts once; zero
/// scores are dropped; equal scores are ordered by ascending record id.
pub fn retrieve_top_k(bank: &EvidenceBank, query: &Query, k: usize) -> RetrievedSet {
    retrieve_text(bank, &query.text, k)
}

pub fn retrieve_text(bank: &EvidenceBank, text: &str, k: usize) -> RetrievedSet {
    let terms: BTreeSet<String> = tokenize(text).into_iter().collect();
    let mut scores = vec![0.0; bank.len()];
    for term in &terms {
        let Some(postings) = bank.postings.get(term) else {
            continue;
        };
        let idf = bank.idf(postings.len());
        for p in postings {
            let tf = f64::from(p.tf);
            let norm = 1.0 - BM25_B + BM25_B * bank.doc_len[p.doc] as f64 / bank.avg_len;
            scores[p.doc] += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
        }
    }
    let mut ranked: Vec<(usize, f64)> = scores
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s > 0.0)
        .collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(bank.records[a.0].id.cmp(&bank.records[b.0].id))
    });
    ranked.truncate(k);
    RetrievedSet {
        items: ranked
            .into_iter()
            .map(|(doc, score)| RetrievedItem {
                record: bank.records[doc].clone(),
                score,
            })
            .collect(),
    }
}
