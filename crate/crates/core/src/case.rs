//! Case file model: network data, generator parameters and the solved
//! operating point the dynamic simulation starts from.
//!
//! Cases are JSON documents with four top-level sections (`system`,
//! `buses`, `branches`, `generators`). Angles are radians and impedances,
//! powers and voltages are per unit on the system base. See
//! `docs/case-format.md` for the field reference.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bundled TS-1 case: the IEEE 39-bus New England system with the unit-39
/// inertia reduced from H = 500 s to H = 100 s (2H from 1000 to 200).
pub const TS1_JSON: &str = include_str!("../data/ts1.json");

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid value at {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path} references unknown bus {bus}")]
    DanglingBus { path: String, bus: u32 },
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How generator `inertia` values are expressed in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InertiaUnit {
    /// The swing-equation coefficient M directly, in p.u.·s²/rad.
    #[default]
    M,
    /// Inertia constant H in seconds; converted with M = 2H/ω_s.
    H,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemInfo {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub inertia_unit: InertiaUnit,
}

/// Power-flow role of a bus. Informational only: the file already carries
/// the solved operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    #[default]
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    #[serde(rename = "type", default)]
    pub bus_type: BusType,
    /// Solved voltage magnitude, p.u.
    pub vm: f64,
    /// Solved voltage angle, rad.
    pub va: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
}

/// Pi-model branch. `tap` is the off-nominal ratio on the `from` side
/// (1.0 for lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "unit_tap")]
    pub tap: f64,
}

fn unit_tap() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    /// M or H depending on [`SystemInfo::inertia_unit`].
    pub inertia: f64,
    pub xd_prime: f64,
    /// Mechanical power, p.u.
    pub pm: f64,
    /// Terminal active power at the operating point, p.u.
    pub p_gen: f64,
    /// Terminal reactive power at the operating point, p.u.
    pub q_gen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSystemCase {
    pub system: SystemInfo,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

/// Parses and validates a case document.
pub fn load_case(text: &str) -> Result<PowerSystemCase, CaseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let case: PowerSystemCase =
        serde_path_to_error::deserialize(de).map_err(|err| CaseError::Schema {
            path: display_path(&err.path().to_string()),
            message: err.inner().to_string(),
        })?;
    case.validate()?;
    Ok(case)
}

pub fn load_case_file(path: impl AsRef<Path>) -> Result<PowerSystemCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_case(&text)
}

/// The bundled TS-1 case.
pub fn ts1() -> PowerSystemCase {
    load_case(TS1_JSON).expect("bundled TS-1 case is valid")
}

fn display_path(p: &str) -> String {
    if p.is_empty() || p == "." {
        "<root>".to_string()
    } else {
        p.to_string()
    }
}

fn invalid(path: String, message: impl Into<String>) -> CaseError {
    CaseError::Invalid {
        path,
        message: message.into(),
    }
}

fn require_finite(path: String, value: f64) -> Result<(), CaseError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be finite, got {value}")))
    }
}

fn require_positive(path: String, value: f64) -> Result<(), CaseError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must be strictly positive, got {value}"),
        ))
    }
}

impl PowerSystemCase {
    pub fn validate(&self) -> Result<(), CaseError> {
        require_positive("system.base_mva".into(), self.system.base_mva)?;
        require_positive("system.frequency_hz".into(), self.system.frequency_hz)?;
        if self.buses.is_empty() {
            return Err(invalid("buses".into(), "at least one bus is required"));
        }
        if self.generators.is_empty() {
            return Err(invalid(
                "generators".into(),
                "at least one generator is required",
            ));
        }

        let mut bus_ids = BTreeSet::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if !bus_ids.insert(bus.id) {
                return Err(invalid(
                    format!("buses[{i}].id"),
                    format!("duplicate bus id {}", bus.id),
                ));
            }
            require_positive(format!("buses[{i}].vm"), bus.vm)?;
            require_finite(format!("buses[{i}].va"), bus.va)?;
            require_finite(format!("buses[{i}].p_load"), bus.p_load)?;
            require_finite(format!("buses[{i}].q_load"), bus.q_load)?;
        }

        for (i, br) in self.branches.iter().enumerate() {
            for (field, bus) in [("from", br.from), ("to", br.to)] {
                if !bus_ids.contains(&bus) {
                    return Err(CaseError::DanglingBus {
                        path: format!("branches[{i}].{field}"),
                        bus,
                    });
                }
            }
            if br.from == br.to {
                return Err(invalid(
                    format!("branches[{i}].to"),
                    "branch connects a bus to itself",
                ));
            }
            require_finite(format!("branches[{i}].r"), br.r)?;
            if br.r < 0.0 {
                return Err(invalid(
                    format!("branches[{i}].r"),
                    "resistance must be nonnegative",
                ));
            }
            require_positive(format!("branches[{i}].x"), br.x)?;
            require_finite(format!("branches[{i}].b"), br.b)?;
            require_positive(format!("branches[{i}].tap"), br.tap)?;
        }

        let mut gen_ids = BTreeSet::new();
        let mut gen_buses = BTreeMap::new();
        for (i, g) in self.generators.iter().enumerate() {
            if !gen_ids.insert(g.id) {
                return Err(invalid(
                    format!("generators[{i}].id"),
                    format!("duplicate generator id {}", g.id),
                ));
            }
            if !bus_ids.contains(&g.bus) {
                return Err(CaseError::DanglingBus {
                    path: format!("generators[{i}].bus"),
                    bus: g.bus,
                });
            }
            if let Some(other) = gen_buses.insert(g.bus, g.id) {
                return Err(invalid(
                    format!("generators[{i}].bus"),
                    format!("bus {} already hosts generator {other}", g.bus),
                ));
            }
            require_positive(format!("generators[{i}].inertia"), g.inertia)?;
            require_positive(format!("generators[{i}].xd_prime"), g.xd_prime)?;
            require_finite(format!("generators[{i}].pm"), g.pm)?;
            require_finite(format!("generators[{i}].p_gen"), g.p_gen)?;
            require_finite(format!("generators[{i}].q_gen"), g.q_gen)?;
        }
        Ok(())
    }

    /// Synchronous speed ω_s = 2πf, rad/s.
    pub fn omega_sync(&self) -> f64 {
        2.0 * PI * self.system.frequency_hz
    }

    /// Swing-equation inertia coefficient M of each generator, in file order.
    pub fn inertia_m(&self) -> Vec<f64> {
        let ws = self.omega_sync();
        self.generators
            .iter()
            .map(|g| match self.system.inertia_unit {
                InertiaUnit::M => g.inertia,
                InertiaUnit::H => 2.0 * g.inertia / ws,
            })
            .collect()
    }

    pub fn machine_ids(&self) -> Vec<u32> {
        self.generators.iter().map(|g| g.id).collect()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generator(&self, id: u32) -> Option<&Generator> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }
}
