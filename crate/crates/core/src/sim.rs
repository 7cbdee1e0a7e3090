//! Run-to-failure trajectory generation for the four increment processes,
//! first hitting times, progress truncation and dataset splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{ids, CandidateModel, FamilyLabel, TrendLabel};
use crate::trajectory::Trajectory;

/// The four increment laws. `from_labels` maps a candidate's structural
/// labels onto the process it is fitted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessKind {
    LinearWiener,
    NonlinearWiener,
    HomogGamma,
    NonHomogGamma,
}

impl ProcessKind {
    pub const ALL: [ProcessKind; 4] = [
        ProcessKind::LinearWiener,
        ProcessKind::NonlinearWiener,
        ProcessKind::HomogGamma,
        ProcessKind::NonHomogGamma,
    ];

    pub fn from_labels(family: FamilyLabel, trend: TrendLabel) -> ProcessKind {
        match (family, trend) {
            (FamilyLabel::W, TrendLabel::L) => ProcessKind::LinearWiener,
            (FamilyLabel::W, TrendLabel::NL) => ProcessKind::NonlinearWiener,
            (FamilyLabel::G, TrendLabel::L) => ProcessKind::HomogGamma,
            (FamilyLabel::G, TrendLabel::NL) => ProcessKind::NonHomogGamma,
        }
    }

    pub fn of(model: &CandidateModel) -> ProcessKind {
        ProcessKind::from_labels(model.family, model.trend)
    }

    pub fn family(self) -> FamilyLabel {
        match self {
            ProcessKind::LinearWiener | ProcessKind::NonlinearWiener => FamilyLabel::W,
            _ => FamilyLabel::G,
        }
    }

    pub fn trend(self) -> TrendLabel {
        match self {
            ProcessKind::LinearWiener | ProcessKind::HomogGamma => TrendLabel::L,
            _ => TrendLabel::NL,
        }
    }

    pub fn is_nonlinear(self) -> bool {
        self.trend() == TrendLabel::NL
    }

    /// Id of the matching Case 2 candidate.
    pub fn model_id(self) -> &'static str {
        match self {
            ProcessKind::LinearWiener => ids::LINEAR_WIENER,
            ProcessKind::NonlinearWiener => ids::NONLINEAR_WIENER,
            ProcessKind::HomogGamma => ids::HOMOG_GAMMA,
            ProcessKind::NonHomogGamma => ids::NONHOMOG_GAMMA,
        }
    }

    pub fn param_count(self) -> usize {
        if self.is_nonlinear() {
            3
        } else {
            2
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.model_id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub kind: ProcessKind,
    /// Wiener drift.
    pub m: f64,
    /// Wiener diffusion.
    pub s: f64,
    /// Time-transform exponent; ignored (treated as 1) by linear kinds.
    pub beta: f64,
    /// Gamma shape rate.
    pub alpha: f64,
    /// Gamma scale.
    pub theta: f64,
    pub failure_threshold: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl SimParams {
    /// Shipped defaults: mean first hitting time near 100 steps for the
    /// linear kinds at a threshold of 50.
    pub fn default_for(kind: ProcessKind, seed: u64) -> SimParams {
        let base = SimParams {
            kind,
            m: 0.5,
            s: 0.4,
            beta: 1.0,
            alpha: 0.5,
            theta: 1.0,
            failure_threshold: 50.0,
            max_steps: 2_000,
            seed,
        };
        match kind {
            ProcessKind::LinearWiener | ProcessKind::HomogGamma => base,
            ProcessKind::NonlinearWiener => SimParams {
                m: 0.3,
                beta: 1.5,
                ..base
            },
            ProcessKind::NonHomogGamma => SimParams {
                alpha: 0.3,
                beta: 1.5,
                ..base
            },
        }
    }

    pub fn with_seed(self, seed: u64) -> SimParams {
        SimParams { seed, ..self }
    }

    /// Exponent actually used by the increment law.
    pub fn effective_beta(&self) -> f64 {
        if self.kind.is_nonlinear() {
            self.beta
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::Contract(format!("{what} must be positive, got {v}")));
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::Contract(format!(
                "s must be non-negative, got {}",
                self.s
            )));
        }
        if !self.m.is_finite() {
            return Err(Error::Contract("m must be finite".into()));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("theta", self.theta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        if !(self.failure_threshold > 0.0) {
            return bad("failure_threshold", self.failure_threshold);
        }
        if self.max_steps == 0 {
            return Err(Error::Contract("max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Increment of the power time scale at step `j`: `j^beta - (j-1)^beta`.
pub fn time_transform_increment(j: usize, beta: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::Contract(
            "time transform step index must be >= 1".into(),
        ));
    }
    Ok(d_j(j, beta))
}

pub(crate) fn d_j(j: usize, beta: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        return 1.0;
    }
    if beta == 1.0 {
        return 1.0;
    }
    // (j-1)^b * ((j/(j-1))^b - 1), evaluated without cancellation.
    let prev = (j - 1) as f64;
    prev.powf(beta) * (beta * (1.0 / prev).ln_1p()).exp_m1()
}

/// A generated path plus whether it stopped at `max_steps` before
/// reaching the failure threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub trajectory: Trajectory,
    pub censored: bool,
}

/// Draws a path from `X_0 = 0` at unit inspection interval until the
/// first step at or above the failure threshold, or `max_steps`.
pub fn generate(params: &SimParams, unit_id: impl Into<String>) -> Result<Simulated> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let beta = params.effective_beta();
    let mut values = Vec::with_capacity(params.max_steps.min(4096) + 1);
    values.push(0.0);
    let mut x = 0.0;
    let mut censored = true;

    let normal = |mean: f64| Normal::new(mean, params.s).expect("validated diffusion");
    let gamma = |shape: f64| Gamma::new(shape, params.theta).expect("validated gamma parameters");

    for j in 1..=params.max_steps {
        let dx = match params.kind {
            ProcessKind::LinearWiener => normal(params.m).sample(&mut rng),
            ProcessKind::NonlinearWiener => normal(params.m * d_j(j, beta)).sample(&mut rng),
            ProcessKind::HomogGamma => gamma(params.alpha).sample(&mut rng),
            ProcessKind::NonHomogGamma => gamma(params.alpha * d_j(j, beta)).sample(&mut rng),
        };
        x += dx;
        values.push(x);
        if x >= params.failure_threshold {
            censored = false;
            break;
        }
    }

    let trajectory = Trajectory::from_values(unit_id, values)?;
    Ok(Simulated {
        trajectory,
        censored,
    })
}

/// Smallest observation time with `y >= threshold`.
pub fn first_hitting_time(traj: &Trajectory, threshold: f64) -> Option<f64> {
    traj.values
        .iter()
        .position(|&y| y >= threshold)
        .map(|i| traj.times[i])
}

/// Keeps the observations with `t <= ceil(n_percent/100 * FHT)`.
pub fn truncate_at_progress(
    traj: &Trajectory,
    n_percent: u32,
    threshold: f64,
) -> Result<Trajectory> {
    if n_percent == 0 || n_percent > 100 {
        return Err(Error::Contract(format!(
            "progress percentage must be in (0, 100], got {n_percent}"
        )));
    }
    let fht = first_hitting_time(traj, threshold).ok_or_else(|| {
        Error::Contract(format!(
            "{}: threshold {threshold} never reached, progress undefined",
            traj.unit_id
        ))
    })?;
    let cutoff = (f64::from(n_percent) * fht / 100.0 - 1e-9).ceil();
    let keep = traj.times.iter().take_while(|&&t| t <= cutoff).count();
    if keep < 2 {
        return Err(Error::WindowTooShort(format!(
            "{}: {n_percent}% of FHT {fht} leaves {keep} point(s)",
            traj.unit_id
        )));
    }
    Ok(traj.prefix(keep))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Trajectory>,
    pub validation: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Seeded 60/20/20 split at trajectory level. Stratified by ground-truth
/// label when every trajectory carries one; train absorbs rounding.
pub fn split_dataset(trajs: &[Trajectory], seed: u64) -> Result<DatasetSplit> {
    if trajs.len() < 5 {
        return Err(Error::TooFewTrajectories {
            needed: 5,
            got: trajs.len(),
        });
    }
    let mut seen = HashSet::new();
    for t in trajs {
        if !seen.insert(t.unit_id.as_str()) {
            return Err(Error::DuplicateId(t.unit_id.clone()));
        }
    }

    let mut strata: BTreeMap<Option<&str>, Vec<&Trajectory>> = BTreeMap::new();
    if trajs.iter().all(|t| t.true_model_id.is_some()) {
        for t in trajs {
            strata
                .entry(t.true_model_id.as_deref())
                .or_default()
                .push(t);
        }
    } else {
        strata.insert(None, trajs.iter().collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit::default();
    for (_, mut members) in strata {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_val = n / 5;
        let n_test = n / 5;
        let n_train = n - n_val - n_test;
        let mut it = members.into_iter().cloned();
        split.train.extend(it.by_ref().take(n_train));
        split.validation.extend(it.by_ref().take(n_val));
        split.test.extend(it);
    }
    Ok(split)
}

/// Mixes a master seed with two stream coordinates (splitmix64 finalizer),
/// giving every generated unit its own random stream.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn time_transform_examples() {
        assert_eq!(time_transform_increment(1, 0.7).unwrap(), 1.0);
        assert_relative_eq!(
            time_transform_increment(2, 2.0).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        for j in 1..50 {
            assert_relative_eq!(
                time_transform_increment(j, 1.0).unwrap(),
                1.0,
                epsilon = 1e-12
            );
        }
        assert!(matches!(
            time_transform_increment(0, 1.5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn time_transform_telescopes() {
        for beta in [0.5, 1.0, 1.5, 2.0] {
            for n in [1usize, 7, 100, 10_000] {
                let sum: f64 = (1..=n).map(|j| d_j(j, beta)).sum();
                let exact = (n as f64).powf(beta);
                assert!(((sum - exact) / exact).abs() < 1e-9, "beta {beta} n {n}");
            }
        }
    }

    #[test]
    fn gamma_paths_are_monotone() {
        for kind in [ProcessKind::HomogGamma, ProcessKind::NonHomogGamma] {
            for seed in 0..50 {
                let sim = generate(&SimParams::default_for(kind, seed), "g").unwrap();
                assert!(sim.trajectory.values.windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }

    #[test]
    fn zero_noise_wiener_is_deterministic_line() {
        let params = SimParams {
            s: 0.0,
            ..SimParams::default_for(ProcessKind::LinearWiener, 3)
        };
        let sim = generate(&params, "w").unwrap();
        for (j, y) in sim.trajectory.values.iter().enumerate() {
            assert_relative_eq!(*y, 0.5 * j as f64, epsilon = 1e-9);
        }
        assert!(!sim.censored);
        assert_eq!(sim.trajectory.times.last().copied(), Some(100.0));
    }

    #[test]
    fn wiener_increment_mean_matches_drift() {
        let n = 10_000;
        let params = SimParams {
            s: 0.5,
            failure_threshold: f64::INFINITY,
            max_steps: n,
            ..SimParams::default_for(ProcessKind::LinearWiener, 17)
        };
        let sim = generate(&params, "w").unwrap();
        assert!(sim.censored);
        let mean = sim.trajectory.values[n] / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn censoring_is_flagged() {
        let params = SimParams {
            max_steps: 5,
            ..SimParams::default_for(ProcessKind::HomogGamma, 1)
        };
        let sim = generate(&params, "c").unwrap();
        assert!(sim.censored);
        assert_eq!(sim.trajectory.len(), 6);
    }

    #[test]
    fn fht_examples() {
        let t = Trajectory::new("u", vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, 5.0, 9.0]).unwrap();
        assert_eq!(first_hitting_time(&t, 5.0), Some(2.0));
        assert_eq!(first_hitting_time(&t, 100.0), None);
        assert_eq!(first_hitting_time(&t, 0.0), Some(0.0));
    }

    #[test]
    fn truncation_examples() {
        let values: Vec<f64> = (0..=100).map(|j| j as f64).collect();
        let t = Trajectory::from_values("u", values).unwrap();
        let cut = truncate_at_progress(&t, 30, 100.0).unwrap();
        assert_eq!(cut.times.last().copied(), Some(30.0));
        assert_eq!(truncate_at_progress(&t, 100, 100.0).unwrap(), t);

        // FHT = 10: ceil(0.3 * 10) = 3 -> t in {0, 1, 2, 3}
        let short = Trajectory::from_values("s", (0..=10).map(|j| j as f64).collect()).unwrap();
        assert_eq!(truncate_at_progress(&short, 30, 10.0).unwrap().len(), 4);

        let tiny = Trajectory::new("x", vec![0.0, 10.0, 20.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert!(matches!(
            truncate_at_progress(&tiny, 30, 0.5),
            Err(Error::WindowTooShort(_))
        ));
        assert!(truncate_at_progress(&tiny, 30, 5.0).is_err());
    }

    fn labelled(n: usize, classes: usize) -> Vec<Trajectory> {
        (0..n)
            .map(|i| {
                Trajectory::from_values(format!("u{i}"), vec![0.0, i as f64])
                    .unwrap()
                    .with_label(format!("c{}", i % classes))
            })
            .collect()
    }

    #[test]
    fn split_proportions() {
        let s = split_dataset(&labelled(120, 1), 1).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (72, 24, 24)
        );
        let s = split_dataset(&labelled(10, 2), 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
        assert_eq!(split_dataset(&labelled(10, 2), 1).unwrap(), s);
        assert!(split_dataset(&labelled(4, 1), 1).is_err());
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let s = split_dataset(&labelled(480, 4), 9).unwrap();
        assert_eq!(s.test.len(), 96);
        for c in 0..4 {
            let label = format!("c{c}");
            let count = s
                .test
                .iter()
                .filter(|t| t.true_model_id.as_deref() == Some(&label))
                .count();
            assert_eq!(count, 24);
        }
        let mut ids = HashSet::new();
        for t in s.train.iter().chain(&s.validation).chain(&s.test) {
            assert!(ids.insert(t.unit_id.clone()));
        }
        assert_eq!(ids.len(), 480);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generation_is_reproducible(seed in any::<u64>(), k in 0usize..4) {
            let params = SimParams::default_for(ProcessKind::ALL[k], seed);
            prop_assert_eq!(generate(&params, "a").unwrap(), generate(&params, "a").unwrap());
        }

        #[test]
        fn truncations_are_nested(seed in 0u64..500, n1 in 1u32..=100, n2 in 1u32..=100) {
            let (lo, hi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
            let sim = generate(&SimParams::default_for(ProcessKind::HomogGamma, seed), "p").unwrap();
            let a = truncate_at_progress(&sim.trajectory, lo, 50.0);
            let b = truncate_at_progress(&sim.trajectory, hi, 50.0).unwrap();
            if let Ok(a) = a {
                prop_assert!(a.len() <= b.len());
                prop_assert_eq!(&b.values[..a.len()], &a.values[..]);
            }
        }
    }
}
