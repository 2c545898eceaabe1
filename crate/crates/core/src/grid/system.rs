//! Network description as ingested from JSON.
//!
//! Powers are given either in MW or in per-unit on `base_mva`, selected by the
//! top-level `units` field. Everything downstream works in per-unit.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Nominal electrical angular speed for a 60 Hz system, rad/s.
pub const OMEGA_S_60HZ: f64 = 120.0 * std::f64::consts::PI;

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUnits {
    Pu,
    Mw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Generator,
    NonGenerator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    #[serde(rename = "type")]
    pub bus_type: BusType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Series reactance, pu on system base.
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    /// Inertia constant on system base, seconds.
    pub h: f64,
    /// Mechanical power.
    pub pm: f64,
    /// Transient reactance between the internal EMF and the terminal bus, pu.
    /// Zero places the rotor angle directly on the terminal bus.
    #[serde(default)]
    pub xd_prime: f64,
    #[serde(default)]
    pub infinite: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: BusId,
    pub p: f64,
}

/// Controllable component: a device able to step its injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cc {
    pub bus: BusId,
    #[serde(default)]
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSystem {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base_mva: f64,
    #[serde(default = "default_omega_s")]
    pub omega_s: f64,
    pub units: PowerUnits,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub ccs: Vec<Cc>,
}

fn default_omega_s() -> f64 {
    OMEGA_S_60HZ
}

impl GridSystem {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let sys: GridSystem =
            serde_json::from_str(s).map_err(|e| Error::Input(format!("grid file: {e}")))?;
        sys.validate()?;
        Ok(sys)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Factor converting the file's power fields to per-unit.
    pub fn power_scale(&self) -> f64 {
        match self.units {
            PowerUnits::Pu => 1.0,
            PowerUnits::Mw => 1.0 / self.base_mva,
        }
    }

    pub fn to_pu(&self, p: f64) -> f64 {
        p * self.power_scale()
    }

    pub fn bus_index(&self) -> BTreeMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn infinite_generator(&self) -> Option<usize> {
        self.generators.iter().position(|g| g.infinite)
    }

    /// Structural checks that do not need any linear algebra.
    pub fn validate(&self) -> Result<()> {
        let input = |m: String| Err(Error::Input(m));
        if self.schema_version != SCHEMA_VERSION {
            return input(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.base_mva > 0.0) {
            return input(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if !(self.omega_s > 0.0) {
            return input(format!("omega_s must be positive, got {}", self.omega_s));
        }
        if self.buses.is_empty() {
            return input("no buses".into());
        }

        let mut types = BTreeMap::new();
        for b in &self.buses {
            if types.insert(b.id, b.bus_type).is_some() {
                return input(format!("duplicate bus id {}", b.id));
            }
        }
        let exists = |id: BusId, what: &str| -> Result<BusType> {
            types
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Input(format!("{what} references unknown bus {id}")))
        };

        for br in &self.branches {
            exists(br.from, "branch")?;
            exists(br.to, "branch")?;
            if br.from == br.to {
                return input(format!("branch {}-{} is a self loop", br.from, br.to));
            }
            if !(br.x > 0.0) {
                return input(format!(
                    "branch {}-{} has non-positive reactance {}",
                    br.from, br.to, br.x
                ));
            }
        }

        let mut gen_buses = BTreeSet::new();
        for g in &self.generators {
            if exists(g.bus, "generator")? != BusType::Generator {
                return input(format!("generator at non-generator bus {}", g.bus));
            }
            if !gen_buses.insert(g.bus) {
                return input(format!("more than one generator at bus {}", g.bus));
            }
            if !(g.h > 0.0) {
                return input(format!("generator at bus {} has inertia {}", g.bus, g.h));
            }
            if !(g.xd_prime >= 0.0) {
                return input(format!(
                    "generator at bus {} has negative xd_prime {}",
                    g.bus, g.xd_prime
                ));
            }
        }
        for (id, t) in &types {
            if *t == BusType::Generator && !gen_buses.contains(id) {
                return input(format!("generator bus {id} has no generator record"));
            }
        }
        if self.generators.iter().filter(|g| g.infinite).count() > 1 {
            return input("more than one infinite bus".into());
        }

        for l in &self.loads {
            exists(l.bus, "load")?;
        }
        for c in &self.ccs {
            if exists(c.bus, "cc")? != BusType::NonGenerator {
                return input(format!("controllable component at generator bus {}", c.bus));
            }
        }

        if !self.is_connected() {
            return Err(Error::Model("branch graph is disconnected".into()));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let idx = self.bus_index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let (a, b) = (idx[&br.from], idx[&br.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
