//! Grid case data: parsing, validation, generator merging, and the
//! quadratic rectangular-coordinate power-flow model built from it.

mod json;
mod matpower;
mod model;
mod quadratic;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use json::parse_case_json;
pub use matpower::parse_case_matpower;
pub use model::{ControlKind, ControlSpec, QuadraticModel};
pub use quadratic::{Quadratic, QuadraticBuilder, SparseSym};

/// Tolerance used when checking that merged generators share a voltage setpoint.
pub const VSET_AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// Per-unit bus data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number from the case file.
    pub id: u32,
    pub kind: BusKind,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
}

/// Per-unit Π-model branch. `from`/`to` index into [`NetworkCase::buses`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// Off-nominal turns ratio; 1.0 for lines.
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Apparent power limit in p.u., if any.
    pub flow_limit: Option<f64>,
    /// Lower bound on θ_from − θ_to in radians, if any.
    pub angle_min: Option<f64>,
    /// Upper bound on θ_from − θ_to in radians, if any.
    pub angle_max: Option<f64>,
}

/// Per-unit generator limits. `bus` indexes into [`NetworkCase::buses`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub vset: f64,
}

/// A parsed, validated grid in per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

/// Result of parsing a case file: the case plus non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct ParsedCase {
    pub case: NetworkCase,
    pub warnings: Vec<String>,
}

impl NetworkCase {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Bus indices that host more than one generator.
    pub fn buses_needing_merge(&self) -> Vec<usize> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for g in &self.generators {
            *counts.entry(g.bus).or_default() += 1;
        }
        counts
            .into_iter()
            .filter(|&(_, c)| c > 1)
            .map(|(b, _)| b)
            .collect()
    }

    /// Generator hosted by bus `bus`, assuming the case is merged.
    pub fn generator_at(&self, bus: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    /// Replace every group of generators sharing a bus by one equivalent unit.
    ///
    /// Active and reactive limits add up. Units on the same bus must agree on
    /// their voltage setpoint. Output generators are ordered by bus index.
    pub fn merge_generators(&self) -> Result<NetworkCase> {
        let mut merged: BTreeMap<usize, Generator> = BTreeMap::new();
        for g in &self.generators {
            match merged.get_mut(&g.bus) {
                None => {
                    merged.insert(g.bus, g.clone());
                }
                Some(m) => {
                    if (m.vset - g.vset).abs() > VSET_AGREEMENT_TOL {
                        return Err(Error::ConflictingSetpoint {
                            bus: self.buses[g.bus].id,
                            first: m.vset,
                            second: g.vset,
                        });
                    }
                    m.pmin += g.pmin;
                    m.pmax += g.pmax;
                    m.qmin += g.qmin;
                    m.qmax += g.qmax;
                }
            }
        }
        Ok(NetworkCase {
            generators: merged.into_values().collect(),
            ..self.clone()
        })
    }

    /// Check the structural invariants. Multiple generators per bus are allowed
    /// here; [`NetworkCase::merge_generators`] removes them.
    pub fn validate(&self) -> Result<()> {
        let n = self.buses.len();
        if n == 0 {
            return Err(Error::InvalidCase("case has no buses".into()));
        }
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(Error::InvalidCase(format!(
                "base MVA must be positive, got {}",
                self.base_mva
            )));
        }
        let mut seen = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if let Some(prev) = seen.insert(b.id, i) {
                return Err(Error::InvalidCase(format!(
                    "duplicate bus id {} (rows {} and {})",
                    b.id,
                    prev + 1,
                    i + 1
                )));
            }
            if b.vmin > b.vmax {
                return Err(Error::InvalidCase(format!(
                    "bus {}: Vmin {} exceeds Vmax {}",
                    b.id, b.vmin, b.vmax
                )));
            }
        }
        let slacks = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slacks != 1 {
            return Err(Error::InvalidCase(format!(
                "expected exactly one slack bus, found {slacks}"
            )));
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.from >= n || br.to >= n {
                return Err(Error::InvalidCase(format!(
                    "branch {} references a missing bus",
                    k + 1
                )));
            }
            if br.from == br.to {
                return Err(Error::InvalidCase(format!("branch {} is a self loop", k + 1)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::InvalidCase(format!(
                    "branch {} has zero impedance",
                    k + 1
                )));
            }
            for a in [br.angle_min, br.angle_max].into_iter().flatten() {
                if !(a > -FRAC_PI_2 && a < FRAC_PI_2) {
                    return Err(Error::InvalidCase(format!(
                        "branch {}: angle difference limit {a} rad outside (-pi/2, pi/2)",
                        k + 1
                    )));
                }
            }
        }
        for g in &self.generators {
            if g.bus >= n {
                return Err(Error::InvalidCase("generator on a missing bus".into()));
            }
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(Error::InvalidCase(format!(
                    "generator at bus {} has inverted limits",
                    self.buses[g.bus].id
                )));
            }
            if self.buses[g.bus].kind == BusKind::Pq {
                return Err(Error::InvalidCase(format!(
                    "generator attached to PQ bus {}",
                    self.buses[g.bus].id
                )));
            }
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.kind != BusKind::Pq && !self.generators.iter().any(|g| g.bus == i) {
                return Err(Error::InvalidCase(format!(
                    "bus {} is {:?} but hosts no generator",
                    b.id, b.kind
                )));
            }
        }
        if !self.is_connected() {
            return Err(Error::InvalidCase("bus graph is not connected".into()));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}

/// Column-oriented case data shared by the text and JSON readers. Values are
/// in the file's native units (MW, MVAr, degrees).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawCase {
    #[serde(rename = "baseMVA")]
    pub base_mva: f64,
    pub bus: Vec<Vec<f64>>,
    pub gen: Vec<Vec<f64>>,
    pub branch: Vec<Vec<f64>>,
}

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;

/// MATPOWER marks "no angle limit" with ±360 degrees.
const NO_ANGLE_LIMIT_DEG: f64 = 360.0;

impl RawCase {
    /// Convert to a validated per-unit [`NetworkCase`]. Out-of-service
    /// branches and generators are dropped with a warning.
    pub fn into_network(self, warnings: &mut Vec<String>) -> Result<NetworkCase> {
        let base = self.base_mva;
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::InvalidCase(format!(
                "baseMVA must be positive, got {base}"
            )));
        }
        let mut buses = Vec::with_capacity(self.bus.len());
        for (i, row) in self.bus.iter().enumerate() {
            check_cols("bus", i, row, BUS_COLS)?;
            let id = as_id("bus", i, row[0])?;
            let kind = match row[1] as i64 {
                1 => BusKind::Pq,
                2 => BusKind::Pv,
                3 => BusKind::Slack,
                4 => {
                    return Err(Error::InvalidCase(format!(
                        "bus {id} is isolated (type 4); isolated buses are not supported"
                    )))
                }
                t => return Err(Error::InvalidCase(format!("bus {id}: unknown type {t}"))),
            };
            buses.push(Bus {
                id,
                kind,
                pd: row[2] / base,
                qd: row[3] / base,
                gs: row[4] / base,
                bs: row[5] / base,
                vmax: row[11],
                vmin: row[12],
            });
        }
        let mut index: HashMap<u32, usize> = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if let Some(prev) = index.insert(b.id, i) {
                return Err(Error::InvalidCase(format!(
                    "duplicate bus id {} (rows {} and {})",
                    b.id,
                    prev + 1,
                    i + 1
                )));
            }
        }
        let lookup = |what: &str, row: usize, v: f64| -> Result<usize> {
            let id = as_id(what, row, v)?;
            index.get(&id).copied().ok_or_else(|| {
                Error::InvalidCase(format!("{what} row {}: unknown bus {id}", row + 1))
            })
        };

        let mut generators = Vec::new();
        for (i, row) in self.gen.iter().enumerate() {
            check_cols("gen", i, row, GEN_COLS)?;
            let bus = lookup("gen", i, row[0])?;
            if row[7] <= 0.0 {
                warnings.push(format!("gen row {}: out of service, ignored", i + 1));
                continue;
            }
            generators.push(Generator {
                bus,
                qmax: row[3] / base,
                qmin: row[4] / base,
                vset: row[5],
                pmax: row[8] / base,
                pmin: row[9] / base,
            });
        }

        let mut branches = Vec::new();
        for (i, row) in self.branch.iter().enumerate() {
            check_cols("branch", i, row, BRANCH_COLS)?;
            let from = lookup("branch", i, row[0])?;
            let to = lookup("branch", i, row[1])?;
            if row[10] <= 0.0 {
                warnings.push(format!("branch row {}: out of service, ignored", i + 1));
                continue;
            }
            let rate = row[5];
            let tap = if row[8] == 0.0 { 1.0 } else { row[8] };
            let angle = |v: Option<&f64>, sign: f64| -> Option<f64> {
                match v {
                    Some(&deg) if deg * sign < NO_ANGLE_LIMIT_DEG && deg.is_finite() => {
                        Some(deg.to_radians())
                    }
                    _ => None,
                }
            };
            let mut angle_min = angle(row.get(11), -1.0);
            let mut angle_max = angle(row.get(12), 1.0);
            // MATPOWER treats angmin = angmax = 0 as unconstrained
            if angle_min == Some(0.0) && angle_max == Some(0.0) {
                angle_min = None;
                angle_max = None;
            }
            branches.push(Branch {
                from,
                to,
                r: row[2],
                x: row[3],
                b: row[4],
                tap,
                shift: row[9].to_radians(),
                flow_limit: (rate > 0.0 && rate.is_finite()).then(|| rate / base),
                angle_min,
                angle_max,
            });
        }

        // A PV bus whose generators are all off behaves as PQ.
        for (i, b) in buses.iter_mut().enumerate() {
            if b.kind == BusKind::Pv && !generators.iter().any(|g| g.bus == i) {
                warnings.push(format!("bus {}: PV bus without generator treated as PQ", b.id));
                b.kind = BusKind::Pq;
            }
        }

        let case = NetworkCase {
            base_mva: base,
            buses,
            branches,
            generators,
        };
        case.validate()?;
        Ok(case)
    }
}

fn check_cols(what: &str, row: usize, data: &[f64], need: usize) -> Result<()> {
    if data.len() < need {
        return Err(Error::InvalidCase(format!(
            "{what} row {} has {} columns, need at least {need}",
            row + 1,
            data.len()
        )));
    }
    Ok(())
}

fn as_id(what: &str, row: usize, v: f64) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::InvalidCase(format!(
            "{what} row {}: bus number {v} is not a non-negative integer",
            row + 1
        )));
    }
    Ok(v as u32)
}
