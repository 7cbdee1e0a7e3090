//! Decision provider backed by an HTTP text-generation endpoint.
//!
//! Request body `{"prompt": ..., "max_tokens": ...}`, response body
//! `{"text": ...}`. The first line of the reply must read `LABEL CONFIDENCE`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evidence::{feature_phrases, feature_summary, RetrievedSet};
use crate::model_space::{HierarchyId, HierarchyLabel};
use crate::rcrus::{Answer, DecisionProvider, HeuristicProvider, CONFIDENCE_FLOOR};
use crate::trajectory::Trajectory;

pub const ENDPOINT_ENV: &str = "DEGSEL_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_secs: f64,
    /// Extra attempts after a malformed reply.
    pub retries: u32,
    pub max_tokens: u32,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            timeout_secs: 30.0,
            retries: 1,
            max_tokens: 16,
        }
    }

    /// Reads the endpoint from the environment; `None` means internal-only mode.
    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .map(RemoteConfig::new)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

pub fn render_prompt(
    h: HierarchyId,
    traj: &Trajectory,
    context: &str,
    evidence: Option<&RetrievedSet>,
) -> String {
    let mut p = String::new();
    let (question, labels) = match h {
        HierarchyId::F => (
            "Which stochastic process family fits this health indicator: Wiener (W) or gamma (G)?",
            "W or G",
        ),
        HierarchyId::T => (
            "Is the degradation trend linear (L) or nonlinear (NL)?",
            "L or NL",
        ),
    };
    let _ = writeln!(p, "{question}");
    match feature_summary(traj) {
        Ok(f) => {
            let _ = writeln!(p, "Trajectory: {}.", feature_phrases(&f).join("; "));
        }
        Err(_) => {
            let _ = writeln!(p, "Trajectory: too short to summarize.");
        }
    }
    let _ = writeln!(p, "Observations: {}.", traj.len());
    if !context.trim().is_empty() {
        let _ = writeln!(p, "Context: {}", context.trim());
    }
    if let Some(e) = evidence.filter(|e| !e.is_empty()) {
        let _ = writeln!(p, "Evidence:");
        for item in &e.items {
            let _ = writeln!(p, "- [{}] {}", item.record.id, item.record.proposition);
        }
    }
    let _ = write!(
        p,
        "Answer on the first line with the label ({labels}) and a confidence in [0,1], e.g. \"{} 0.8\".",
        labels.split(' ').next().unwrap_or_default()
    );
    p
}

/// Parses `LABEL CONFIDENCE` from the first line. Out-of-range confidences
/// are clamped into `[0.5, 1]` and reported in the second tuple element.
pub fn parse_reply(h: HierarchyId, text: &str) -> Option<(Answer, Option<String>)> {
    let line = text.lines().find(|l| !l.trim().is_empty())?;
    let mut tokens = line.split_whitespace();
    let label = HierarchyLabel::parse(tokens.next()?.trim_matches(|c: char| !c.is_alphanumeric()))?;
    if label.hierarchy() != h {
        return None;
    }
    let raw: f64 = tokens
        .next()?
        .trim_end_matches([',', '.', ';'])
        .parse()
        .ok()?;
    if !raw.is_finite() {
        return None;
    }
    let confidence = raw.clamp(CONFIDENCE_FLOOR, 1.0);
    let warning = (confidence != raw).then(|| format!("confidence {raw} clamped to {confidence}"));
    Some((Answer::new(label, confidence), warning))
}

fn prompt_key(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub struct RemoteProvider {
    config: RemoteConfig,
    agent: ureq::Agent,
    fallback: HeuristicProvider,
    cache: RwLock<HashMap<String, String>>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig, fallback: HeuristicProvider) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(
                config.timeout_secs.max(0.001),
            )))
            .build()
            .into();
        RemoteProvider {
            config,
            agent,
            fallback,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    fn request(&self, prompt: &str) -> Result<String, ureq::Error> {
        let body = Request {
            prompt,
            max_tokens: self.config.max_tokens,
        };
        let reply: Reply = self
            .agent
            .post(&self.config.url)
            .send_json(&body)?
            .body_mut()
            .read_json()?;
        Ok(reply.text)
    }

    fn fall_back(&self, h: HierarchyId, traj: &Trajectory, context: &str, why: String) -> Answer {
        log::warn!("remote provider: {why}; using internal heuristic");
        let answer = self.fallback.decide(h, traj, context, None);
        let note = match answer.note {
            Some(ref inner) => format!("{why}; internal fallback ({inner})"),
            None => format!("{why}; internal fallback"),
        };
        answer.with_note(note)
    }
}

impl DecisionProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    /// Not deterministic: the answer depends on the remote service. Repeat
    /// prompts are served from the cache once a well-formed reply was seen.
    fn decide(
        &self,
        hierarchy: HierarchyId,
        traj: &Trajectory,
        context: &str,
        evidence: Option<&RetrievedSet>,
    ) -> Answer {
        let prompt = render_prompt(hierarchy, traj, context, evidence);
        let key = prompt_key(&prompt);
        let cached = self.cache.read().ok().and_then(|c| c.get(&key).cloned());
        if let Some(text) = cached {
            if let Some((answer, warning)) = parse_reply(hierarchy, &text) {
                return match warning {
                    Some(w) => answer.with_note(w),
                    None => answer,
                };
            }
        }
        let mut last = String::new();
        for _ in 0..=self.config.retries {
            let text = match self.request(&prompt) {
                Ok(t) => t,
                Err(e) => {
                    return self.fall_back(hierarchy, traj, context, format!("request failed: {e}"))
                }
            };
            if let Some((answer, warning)) = parse_reply(hierarchy, &text) {
                if let Ok(mut c) = self.cache.write() {
                    c.insert(key, text);
                }
                return match warning {
                    Some(w) => {
                        log::warn!("remote provider: {w}");
                        answer.with_note(w)
                    }
                    None => answer,
                };
            }
            last = text;
        }
        let shown: String = last.chars().take(40).collect();
        self.fall_back(
            hierarchy,
            traj,
            context,
            format!("malformed reply {shown:?}"),
        )
    }
}
