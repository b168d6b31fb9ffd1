//! Feasible-path generation by shrinking constraint relaxations, followed by
//! a final small-barrier solve for the shortest path.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::{barrier_solve, BarrierProblem, BarrierStatus, IpmParams, IterationRecord};
use crate::path::PathDiscretization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomotopyParams {
    /// Margin applied to the worst violations.
    pub beta: f64,
    pub mu_hi: f64,
    pub mu_lo: f64,
    /// Stagnation tolerance on the change of the relaxation vector.
    pub eps_st: f64,
    /// Consecutive stagnating stages tolerated before giving up.
    pub patience: usize,
}

impl Default for HomotopyParams {
    fn default() -> Self {
        Self {
            beta: 1.01,
            mu_hi: 1e-1,
            mu_lo: 1e-6,
            eps_st: 1e-3,
            patience: 1,
        }
    }
}

impl HomotopyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(Error::InvalidInput("beta must exceed 1".into()));
        }
        if !(self.mu_hi > self.mu_lo && self.mu_lo > 0.0) {
            return Err(Error::InvalidInput("need mu_hi > mu_lo > 0".into()));
        }
        if !(self.eps_st >= 0.0) || self.patience == 0 {
            return Err(Error::InvalidInput("eps_st must be non-negative and patience positive".into()));
        }
        Ok(())
    }
}

/// Per-constraint relaxation amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationVector(pub Vec<f64>);

impl RelaxationVector {
    pub fn norm_inf(&self) -> f64 {
        self.0.iter().cloned().fold(0.0, f64::max)
    }

    /// Element-wise minimum with `other`.
    pub fn min(&self, other: &RelaxationVector) -> RelaxationVector {
        RelaxationVector(self.0.iter().zip(&other.0).map(|(a, b)| a.min(*b)).collect())
    }

    /// `‖self − other‖_∞`
    pub fn distance(&self, other: &RelaxationVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `v_j = β · max_i max(g_j(p_i), 0)`; entries listed in `exempt` stay 0.
pub fn relaxation_vector(values: &[DVector<f64>], beta: f64, exempt: &[usize]) -> RelaxationVector {
    let nc = values.first().map_or(0, |g| g.len());
    let mut v = vec![0.0; nc];
    for g in values {
        for (j, &gj) in g.iter().enumerate() {
            v[j] = f64::max(v[j], gj.max(0.0));
        }
    }
    for (j, vj) in v.iter_mut().enumerate() {
        *vj = if exempt.contains(&j) { 0.0 } else { beta * *vj };
    }
    RelaxationVector(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomotopyStatus {
    Success,
    StagnationFailure,
    InnerFailure,
}

/// One barrier solve of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub mu: f64,
    /// `‖v‖_∞` used in this stage's constraints.
    pub v_inf: f64,
    /// `‖v‖_∞` recomputed after the solve (before the polish: next stage's value).
    pub v_inf_after: f64,
    pub inner_status: Option<BarrierStatus>,
    pub inner_iterations: usize,
    /// Error metric at exit; absent when the solve errored.
    pub e_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HomotopyOutcome {
    pub status: HomotopyStatus,
    pub path: PathDiscretization,
    pub states: Vec<Vec<f64>>,
    /// Final relaxation vector of the outer loop.
    pub v: RelaxationVector,
    /// Worst constraint value over interior corners of the initial line.
    pub max_violation_before: f64,
    /// Worst value of the constraints enforced by the last solve (`g − v`
    /// with the final relaxation) over interior corners of the result.
    pub max_violation_after: f64,
    /// Worst unrelaxed constraint value over interior corners of the result.
    pub max_violation_after_unrelaxed: f64,
    /// Relaxation in effect for `max_violation_after`.
    pub final_relaxation: RelaxationVector,
    pub stages: Vec<StageRecord>,
    pub traces: Vec<Vec<IterationRecord>>,
}

fn max_value(values: &[DVector<f64>]) -> f64 {
    values.iter().map(|g| g.max()).fold(f64::NEG_INFINITY, f64::max)
}

/// Solve states along `path` sequentially from `start_state` at `u0`.
///
/// Each point warm-starts from the previous one. Fails if any power flow
/// (endpoints included) does not converge.
pub fn states_along<P: BarrierProblem>(
    problem: &P,
    path: &PathDiscretization,
    start_state: &[f64],
) -> Result<(Vec<DVector<f64>>, Vec<Vec<f64>>)> {
    let (_, mut warm) = problem
        .evaluate(path.u0(), start_state)
        .map_err(|e| Error::InfeasibleStart(format!("start point: {e}")))?;
    let mut values = Vec::with_capacity(path.k());
    let mut states = Vec::with_capacity(path.k());
    for i in 1..=path.k() {
        let (g, x) = problem
            .evaluate(path.interior(i), &warm)
            .map_err(|e| Error::InfeasibleStart(format!("point {i} of the initial path: {e}")))?;
        values.push(g);
        states.push(x.clone());
        warm = x;
    }
    problem
        .evaluate(path.u1(), &warm)
        .map_err(|e| Error::InfeasibleStart(format!("end point: {e}")))?;
    Ok((values, states))
}

/// Outer loop from the straight line between the path's endpoints.
///
/// `exempt` lists constraints whose relaxation is always 0. Inner solves
/// that stop on the iteration cap or a failed line search still return a
/// feasible path for their relaxed set, so the loop continues from it; any
/// other inner error stops the loop with [`HomotopyStatus::InnerFailure`].
pub fn shortest_path<P: BarrierProblem>(
    problem: &P,
    t: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    start_state: &[f64],
    exempt: &[usize],
    params: &HomotopyParams,
    ipm: &IpmParams,
    mut observer: Option<&mut dyn FnMut(usize, &IterationRecord)>,
) -> Result<HomotopyOutcome> {
    params.validate()?;
    ipm.validate()?;
    let mut path = PathDiscretization::init_line_path(u0, u1, t)?;
    let (values, mut states) = states_along(problem, &path, start_state)?;
    let max_violation_before = max_value(&values);
    let mut v = relaxation_vector(&values, params.beta, exempt);
    let mut stages = Vec::new();
    let mut traces = Vec::new();
    let mut stagnant = 0;
    let mut status = HomotopyStatus::Success;

    let mut run = |stage: usize,
                   relax: &[f64],
                   mu: f64,
                   path: PathDiscretization,
                   states: Vec<Vec<f64>>,
                   traces: &mut Vec<Vec<IterationRecord>>| {
        let mut obs = |r: &IterationRecord| {
            if let Some(f) = observer.as_mut() {
                f(stage, r);
            }
        };
        let out = barrier_solve(problem, relax, path, states, mu, ipm, Some(&mut obs));
        if let Ok(o) = &out {
            traces.push(o.trace.clone());
        }
        out
    };

    while v.norm_inf() > ipm.eps_ls {
        let stage = stages.len() + 1;
        let v_prev = v.clone();
        let out = run(stage, &v.0, params.mu_hi, path.clone(), states.clone(), &mut traces);
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                stages.push(StageRecord {
                    stage,
                    mu: params.mu_hi,
                    v_inf: v.norm_inf(),
                    v_inf_after: v.norm_inf(),
                    inner_status: None,
                    inner_iterations: 0,
                    e_mu: None,
                    error: Some(e.to_string()),
                });
                status = HomotopyStatus::InnerFailure;
                break;
            }
        };
        path = out.iterate.path.clone();
        states = out.iterate.states.clone();
        // s = −(g − v) at the returned iterate
        let nc = v.0.len();
        let values: Vec<DVector<f64>> = (0..path.k())
            .map(|i| {
                DVector::from_iterator(
                    nc,
                    (0..nc).map(|j| v_prev.0[j] - out.iterate.s[i * nc + j]),
                )
            })
            .collect();
        v = relaxation_vector(&values, params.beta, exempt).min(&v_prev);
        stages.push(StageRecord {
            stage,
            mu: params.mu_hi,
            v_inf: v_prev.norm_inf(),
            v_inf_after: v.norm_inf(),
            inner_status: Some(out.status),
            inner_iterations: out.iterations,
            e_mu: Some(out.e_mu),
            error: None,
        });
        log::info!(
            "stage {stage}: |v| {:.3e} -> {:.3e}, {} inner iterations ({:?})",
            v_prev.norm_inf(),
            v.norm_inf(),
            out.iterations,
            out.status
        );
        if v.distance(&v_prev) <= params.eps_st && v.norm_inf() > ipm.eps_ls {
            stagnant += 1;
            if stagnant >= params.patience {
                status = HomotopyStatus::StagnationFailure;
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    let mut final_relaxation = v.clone();
    if status == HomotopyStatus::Success {
        let relax: Vec<f64> = (0..v.0.len())
            .map(|j| if exempt.contains(&j) { 0.0 } else { ipm.eps_ls })
            .collect();
        let stage = stages.len() + 1;
        match run(stage, &relax, params.mu_lo, path.clone(), states.clone(), &mut traces) {
            Ok(out) => {
                log::info!("final solve: {} iterations ({:?})", out.iterations, out.status);
                stages.push(StageRecord {
                    stage,
                    mu: params.mu_lo,
                    v_inf: ipm.eps_ls,
                    v_inf_after: v.norm_inf(),
                    inner_status: Some(out.status),
                    inner_iterations: out.iterations,
                    e_mu: Some(out.e_mu),
                    error: None,
                });
                path = out.iterate.path;
                states = out.iterate.states;
                final_relaxation = RelaxationVector(relax);
            }
            Err(e) => {
                stages.push(StageRecord {
                    stage,
                    mu: params.mu_lo,
                    v_inf: ipm.eps_ls,
                    v_inf_after: v.norm_inf(),
                    inner_status: None,
                    inner_iterations: 0,
                    e_mu: None,
                    error: Some(e.to_string()),
                });
                status = HomotopyStatus::InnerFailure;
            }
        }
    }

    let after = crate::ipm::evaluate_all(problem, &[], &path, &states)?;
    let unrelaxed: Vec<DVector<f64>> = after.into_iter().map(|(g, _)| g).collect();
    let max_violation_after_unrelaxed = max_value(&unrelaxed);
    let relaxed: Vec<DVector<f64>> = unrelaxed
        .iter()
        .map(|g| g - DVector::from_column_slice(&final_relaxation.0))
        .collect();
    let max_violation_after = max_value(&relaxed);
    Ok(HomotopyOutcome {
        status,
        path,
        states,
        v,
        max_violation_before,
        max_violation_after,
        max_violation_after_unrelaxed,
        final_relaxation,
        stages,
        traces,
    })
}
