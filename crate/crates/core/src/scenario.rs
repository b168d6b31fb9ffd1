//! Scenario files and the end-to-end solve they describe.
//!
//! A scenario names the controls at both endpoints; controls listed in
//! `frozen` keep one value along the whole path and the rest span the path
//! space, in model order. Powers are in p.u. unless `power_unit` is `"mw"`;
//! voltages are magnitudes in p.u. Unlisted voltage controls take the case
//! setpoint.
//!
//! ```json
//! {
//!   "case": "case9_variant1.m",
//!   "u0": { "P2": 0.5, "P3": 0.5, "V1": 1.0, "V2": 1.0, "V3": 1.0 },
//!   "u1": { "P2": 1.5, "P3": 1.3, "V1": 1.0, "V2": 1.0, "V3": 1.0 },
//!   "frozen": ["V1", "V2", "V3"],
//!   "k": 19
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case::{ControlKind, NetworkCase, QuadraticModel};
use crate::constraints::{ConstraintOptions, ConstraintSet, ControlLayout};
use crate::error::{Error, Result};
use crate::homotopy::{shortest_path, HomotopyParams, HomotopyStatus, StageRecord};
use crate::ipm::{GridProblem, IpmParams, IterationRecord};
use crate::metrics::{path_metrics, polyline_length};
use crate::path::{uniform_parameters, PathDiscretization};
use crate::powerflow::PowerFlowOptions;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerUnit {
    #[default]
    Pu,
    Mw,
}

fn default_k() -> usize {
    19
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Case file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<PathBuf>,
    pub u0: BTreeMap<String, f64>,
    pub u1: BTreeMap<String, f64>,
    #[serde(default)]
    pub frozen: Vec<String>,
    #[serde(default)]
    pub power_unit: PowerUnit,
    /// Number of interior corners.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Explicit interior parameters `t_1 < … < t_K` in `(0, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default)]
    pub constraints: ConstraintOptions,
    #[serde(default)]
    pub ipm: IpmParams,
    #[serde(default)]
    pub homotopy: HomotopyParams,
    #[serde(default)]
    pub power_flow: PowerFlowOptions,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Case path resolved against the directory of `scenario_file`.
    pub fn case_path(&self, scenario_file: &Path) -> Option<PathBuf> {
        let case = self.case.as_ref()?;
        Some(match scenario_file.parent() {
            Some(dir) if case.is_relative() => dir.join(case),
            _ => case.clone(),
        })
    }

    /// Full parameter vector `t_0 = 0, …, t_{K+1} = 1`.
    pub fn parameters(&self) -> Result<Vec<f64>> {
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        match &self.t {
            None => Ok(uniform_parameters(self.k)),
            Some(t) => {
                if t.len() != self.k {
                    return Err(Error::InvalidInput(format!(
                        "t has {} entries, expected k = {}",
                        t.len(),
                        self.k
                    )));
                }
                let mut full = Vec::with_capacity(self.k + 2);
                full.push(0.0);
                full.extend_from_slice(t);
                full.push(1.0);
                if full.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("t must be strictly increasing in (0, 1)".into()));
                }
                Ok(full)
            }
        }
    }

    /// Map named assignments onto the model's controls.
    pub fn resolve(&self, case: &NetworkCase, model: &QuadraticModel) -> Result<ResolvedScenario> {
        let controls = model.controls();
        let names: Vec<String> = controls.iter().map(|c| c.name()).collect();
        for key in self.u0.keys().chain(self.u1.keys()).chain(&self.frozen) {
            if !names.contains(key) {
                return Err(Error::InvalidInput(format!(
                    "unknown control {key}; available: {}",
                    names.join(", ")
                )));
            }
        }
        let scale = match self.power_unit {
            PowerUnit::Pu => 1.0,
            PowerUnit::Mw => 1.0 / case.base_mva,
        };
        let value = |map: &BTreeMap<String, f64>, c: usize| -> Result<f64> {
            let spec = &controls[c];
            let raw = match (map.get(&names[c]), spec.kind) {
                (Some(v), _) => *v,
                (None, ControlKind::VoltageSquared) => case
                    .generator_at(spec.bus)
                    .map(|g| g.vset)
                    .ok_or_else(|| Error::InvalidInput(format!("no setpoint for {}", names[c])))?,
                (None, ControlKind::ActivePower) => {
                    return Err(Error::InvalidInput(format!("missing value for {}", names[c])))
                }
            };
            if !raw.is_finite() {
                return Err(Error::InvalidInput(format!("{} is not finite", names[c])));
            }
            Ok(match spec.kind {
                ControlKind::ActivePower => raw * scale,
                ControlKind::VoltageSquared => raw * raw,
            })
        };
        let full0 = (0..controls.len()).map(|c| value(&self.u0, c)).collect::<Result<Vec<_>>>()?;
        let full1 = (0..controls.len()).map(|c| value(&self.u1, c)).collect::<Result<Vec<_>>>()?;
        let mut free = Vec::new();
        for c in 0..controls.len() {
            let frozen = self.frozen.contains(&names[c])
                || (!self.u0.contains_key(&names[c]) && !self.u1.contains_key(&names[c]));
            if frozen {
                if full0[c] != full1[c] {
                    return Err(Error::InvalidInput(format!(
                        "frozen control {} differs between endpoints",
                        names[c]
                    )));
                }
            } else {
                free.push(c);
            }
        }
        if free.is_empty() {
            return Err(Error::InvalidInput("no free controls".into()));
        }
        let layout = ControlLayout::new(full0.clone(), free.clone())?;
        let u0 = layout.restrict(&full0);
        let u1 = layout.restrict(&full1);
        if u0 == u1 {
            return Err(Error::InvalidInput("u0 and u1 coincide".into()));
        }
        Ok(ResolvedScenario {
            names: free.iter().map(|&c| names[c].clone()).collect(),
            layout,
            u0,
            u1,
            t: self.parameters()?,
        })
    }
}

/// A scenario mapped onto a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    /// Names of the free controls, in path order.
    pub names: Vec<String>,
    pub layout: ControlLayout,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: HomotopyStatus,
    pub controls: Vec<String>,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub k: usize,
    pub constraint_count: usize,
    pub max_violation_before: f64,
    /// Worst value of the constraints enforced by the final solve.
    pub max_violation_after: f64,
    pub max_violation_after_unrelaxed: f64,
    /// `‖v‖_∞` when the outer loop stopped.
    pub residual_relaxation: f64,
    pub path_diff_pct: f64,
    pub obj_fun_gap_pct: f64,
    pub path_length: f64,
    pub line_length: f64,
    pub wall_time_s: f64,
    pub stages: Vec<StageRecord>,
    pub iterations: Vec<Vec<IterationRecord>>,
}

/// Trace line: one inner iteration of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub stage: usize,
    #[serde(flatten)]
    pub record: IterationRecord,
}

#[derive(Debug, Clone)]
pub struct SolveRun {
    pub report: SolveReport,
    pub path: PathDiscretization,
    pub names: Vec<String>,
}

/// Run the homotopy and the final solve for `scenario` on `case`.
///
/// `observer` receives every inner iteration as it happens.
pub fn run_solve(
    case: &NetworkCase,
    scenario: &Scenario,
    mut observer: Option<&mut dyn FnMut(&TraceLine)>,
) -> Result<SolveRun> {
    let start = Instant::now();
    let model = QuadraticModel::build(case)?;
    let resolved = scenario.resolve(case, &model)?;
    let set = ConstraintSet::build(case, &model, resolved.layout.clone(), scenario.constraints)?
        .with_power_flow_options(scenario.power_flow);
    let problem = GridProblem { model: &model, set: &set };
    let exempt: Vec<usize> = set.determinant_index().into_iter().collect();
    let x0 = model.flat_start(&resolved.layout.full(&resolved.u0));
    let mut forward = |stage: usize, r: &IterationRecord| {
        if let Some(f) = observer.as_mut() {
            f(&TraceLine { stage, record: r.clone() });
        }
    };
    let out = shortest_path(
        &problem,
        resolved.t.clone(),
        resolved.u0.clone(),
        resolved.u1.clone(),
        &x0,
        &exempt,
        &scenario.homotopy,
        &scenario.ipm,
        Some(&mut forward),
    )?;
    let corners: Vec<&[f64]> = (0..=out.path.k() + 1).map(|k| out.path.corner(k)).collect();
    let metrics = path_metrics(&corners);
    let report = SolveReport {
        status: out.status,
        controls: resolved.names.clone(),
        u0: resolved.u0.clone(),
        u1: resolved.u1.clone(),
        k: out.path.k(),
        constraint_count: set.len(),
        max_violation_before: out.max_violation_before,
        max_violation_after: out.max_violation_after,
        max_violation_after_unrelaxed: out.max_violation_after_unrelaxed,
        residual_relaxation: out.v.norm_inf(),
        path_diff_pct: metrics.path_diff_pct,
        obj_fun_gap_pct: metrics.obj_fun_gap_pct,
        path_length: polyline_length(&corners),
        line_length: polyline_length(&[corners[0], corners[corners.len() - 1]]),
        wall_time_s: start.elapsed().as_secs_f64(),
        stages: out.stages,
        iterations: out.traces,
    };
    Ok(SolveRun {
        report,
        path: out.path,
        names: resolved.names,
    })
}
