//! Sampled trajectories and their CSV/JSON export.
//!
//! CSV column order: `t`, one column per state label, each derived column in
//! insertion order, then `e_k`, `orbit_value`, `h`, `stage` when per-sample
//! diagnostics are present. Missing `h` and `stage` values are empty cells.
//! Numbers use the shortest representation that round-trips.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FaultOn,
    FaultClear,
    SwitchOn,
    SwitchOff,
    Disturbance,
    Instability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub e_k: f64,
    pub orbit_value: f64,
    /// Switching function toward the next pending stage.
    pub h: Option<f64>,
    /// Stage active at the sample.
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derived: Vec<DerivedColumn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<SampleDiagnostics>,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn new(labels: Vec<String>) -> Self {
        Trajectory {
            labels,
            times: vec![],
            states: vec![],
            derived: vec![],
            diagnostics: vec![],
            events: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, x: Vec<f64>) {
        self.times.push(t);
        self.states.push(x);
    }

    pub fn add_derived(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.derived.push(DerivedColumn {
            name: name.into(),
            values,
        });
    }

    /// Values of one state component over time.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[i]).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(i) = self.labels.iter().position(|l| l == name) {
            return Some(self.component(i));
        }
        self.derived
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.clone())
    }

    /// Checks time ordering, array alignment and event ordering.
    pub fn check(&self) -> Result<()> {
        let n = self.times.len();
        if self.states.len() != n {
            return Err(Error::dim("trajectory states", n, self.states.len()));
        }
        if let Some(x) = self.states.iter().find(|x| x.len() != self.labels.len()) {
            return Err(Error::dim(
                "trajectory state width",
                self.labels.len(),
                x.len(),
            ));
        }
        for c in &self.derived {
            if c.values.len() != n {
                return Err(Error::dim("trajectory derived column", n, c.values.len()));
            }
        }
        if !self.diagnostics.is_empty() && self.diagnostics.len() != n {
            return Err(Error::dim(
                "trajectory diagnostics",
                n,
                self.diagnostics.len(),
            ));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Model(
                "trajectory time stamps not strictly increasing".into(),
            ));
        }
        if self.events.windows(2).any(|w| w[0].t > w[1].t) {
            return Err(Error::Model("trajectory events out of order".into()));
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.labels.iter().cloned());
        h.extend(self.derived.iter().map(|c| c.name.clone()));
        if !self.diagnostics.is_empty() {
            h.extend(["e_k", "orbit_value", "h", "stage"].map(String::from));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.check()?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        let mut row: Vec<String> = Vec::new();
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            row.clear();
            row.push(t.to_string());
            row.extend(x.iter().map(f64::to_string));
            row.extend(self.derived.iter().map(|c| c.values[k].to_string()));
            if let Some(d) = self.diagnostics.get(k) {
                row.push(d.e_k.to_string());
                row.push(d.orbit_value.to_string());
                row.push(d.h.map(|v| v.to_string()).unwrap_or_default());
                row.push(d.stage.map(|v| v.to_string()).unwrap_or_default());
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        self.check()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let t: Trajectory =
            serde_json::from_str(s).map_err(|e| Error::Input(format!("trajectory: {e}")))?;
        t.check()?;
        Ok(t)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}
