use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-ordered health-indicator observations of a single unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub unit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_model_id: Option<String>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(unit_id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let traj = Trajectory {
            unit_id: unit_id.into(),
            true_model_id: None,
            times,
            values,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn with_label(mut self, model_id: impl Into<String>) -> Self {
        self.true_model_id = Some(model_id.into());
        self
    }

    /// Observations at unit inspection interval, `t = 0, 1, ...`.
    pub fn from_values(unit_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|j| j as f64).collect();
        Trajectory::new(unit_id, times, values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{}: {} times but {} values",
                self.unit_id,
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "{}: need at least 2 observations, got {}",
                self.unit_id,
                self.times.len()
            )));
        }
        if self
            .times
            .iter()
            .chain(&self.values)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidTrajectory(format!(
                "{}: non-finite entry",
                self.unit_id
            )));
        }
        if self.times[0] < 0.0 {
            return Err(Error::InvalidTrajectory(format!(
                "{}: negative time",
                self.unit_id
            )));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrajectory(format!(
                "{}: times must be strictly increasing",
                self.unit_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the first `len` observations.
    pub fn prefix(&self, len: usize) -> Trajectory {
        let len = len.min(self.len());
        Trajectory {
            unit_id: self.unit_id.clone(),
            true_model_id: self.true_model_id.clone(),
            times: self.times[..len].to_vec(),
            values: self.values[..len].to_vec(),
        }
    }
}

/// Writes one JSON record per line.
pub fn write_trajectories(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for t in trajs {
        let line = serde_json::to_string(t).expect("trajectory serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let traj: Trajectory = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        traj.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(traj);
    }
    Ok(out)
}
