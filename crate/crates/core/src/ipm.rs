//! Log-barrier interior-point solver for the discretized path problem at a
//! fixed barrier parameter.
//!
//! Unknowns are the interior points `p`, slacks `s = −g(p)`, equality
//! multipliers `y` and inequality multipliers `z`. Each Newton step solves the
//! reduced system in `(Δp, Δy)`, permuted point by point into a
//! block-tridiagonal matrix with blocks of size `m + 1`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btd::BtdMatrix;
use crate::constraints::{ConstraintSet, DerivativeBundle};
use crate::case::QuadraticModel;
use crate::error::{Error, Result};
use crate::path::PathDiscretization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmParams {
    /// Fraction-to-boundary factor.
    pub tau: f64,
    /// Backtracking ratio.
    pub gamma: f64,
    /// Armijo constant.
    pub eta: f64,
    /// Smallest step length and Theorem-1 margin.
    pub eps_ls: f64,
    pub rho_max: f64,
    pub eps_tol: f64,
    pub iter_max: usize,
    /// Check every Newton step against the unreduced system.
    pub debug_kkt_check: bool,
}

impl Default for IpmParams {
    fn default() -> Self {
        Self {
            tau: 0.99,
            gamma: 0.5,
            eta: 1e-4,
            eps_ls: 1e-6,
            rho_max: 100.0,
            eps_tol: 1e-3,
            iter_max: 100,
            debug_kkt_check: false,
        }
    }
}

impl IpmParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.tau) && unit(self.gamma) && unit(self.eta) && unit(self.eps_ls)) {
            return Err(Error::InvalidInput("tau, gamma, eta and eps_ls must lie in (0, 1)".into()));
        }
        if !(self.rho_max > 0.0) || !(self.eps_tol > 0.0) {
            return Err(Error::InvalidInput("rho_max and eps_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Per-point constraint oracle used by the solver.
pub trait BarrierProblem: Sync {
    fn control_dim(&self) -> usize;
    fn constraint_count(&self) -> usize;
    /// Constraint values at `u` and the solved state, starting from `warm`.
    fn evaluate(&self, u: &[f64], warm: &[f64]) -> Result<(DVector<f64>, Vec<f64>)>;
    /// Values, Jacobian and `∇²(zᵀg)` at `u`.
    fn linearize(&self, u: &[f64], warm: &[f64], z: &[f64]) -> Result<PointLinearization>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointLinearization {
    pub g: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub hess: DMatrix<f64>,
    pub state: Vec<f64>,
}

/// Power-flow constrained points.
#[derive(Debug, Clone, Copy)]
pub struct GridProblem<'a> {
    pub model: &'a QuadraticModel,
    pub set: &'a ConstraintSet,
}

impl GridProblem<'_> {
    pub fn bundle(&self, u: &[f64], warm: &[f64]) -> Result<DerivativeBundle> {
        self.set.bundle(self.model, u, warm)
    }
}

impl BarrierProblem for GridProblem<'_> {
    fn control_dim(&self) -> usize {
        self.set.layout().dim()
    }

    fn constraint_count(&self) -> usize {
        self.set.len()
    }

    fn evaluate(&self, u: &[f64], warm: &[f64]) -> Result<(DVector<f64>, Vec<f64>)> {
        let e = self.set.eval(self.model, u, warm)?;
        Ok((e.g, e.x))
    }

    fn linearize(&self, u: &[f64], warm: &[f64], z: &[f64]) -> Result<PointLinearization> {
        let b = self.set.bundle(self.model, u, warm)?;
        let hess = self.set.lagrangian_hessian(self.model, &b, z);
        Ok(PointLinearization {
            g: b.g,
            jac: b.dg_du,
            hess,
            state: b.x,
        })
    }
}

/// Affine constraints `A u − b ≤ 0`, the same at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl BarrierProblem for LinearConstraints {
    fn control_dim(&self) -> usize {
        self.a.ncols()
    }

    fn constraint_count(&self) -> usize {
        self.a.nrows()
    }

    fn evaluate(&self, u: &[f64], _warm: &[f64]) -> Result<(DVector<f64>, Vec<f64>)> {
        Ok((&self.a * DVector::from_column_slice(u) - &self.b, Vec::new()))
    }

    fn linearize(&self, u: &[f64], warm: &[f64], _z: &[f64]) -> Result<PointLinearization> {
        let (g, state) = self.evaluate(u, warm)?;
        let m = self.control_dim();
        Ok(PointLinearization {
            g,
            jac: self.a.clone(),
            hess: DMatrix::zeros(m, m),
            state,
        })
    }
}

/// Primal-dual iterate. `s` and `z` are laid out point by point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierIterate {
    pub path: PathDiscretization,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub mu: f64,
    /// Solved state per interior point, used as warm starts.
    pub states: Vec<Vec<f64>>,
}

impl BarrierIterate {
    fn z_point(&self, i: usize, nc: usize) -> &[f64] {
        &self.z[i * nc..(i + 1) * nc]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub dp: DVector<f64>,
    pub dy: DVector<f64>,
    pub dz: DVector<f64>,
    pub ds: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierStatus {
    Converged,
    MaxIterations,
    /// The line search failed again after the inertia correction.
    LineSearchFailed,
}

/// One line of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "E_mu")]
    pub e_mu: f64,
    pub merit: f64,
    #[serde(rename = "M")]
    pub m: Option<u32>,
    pub alpha_z: f64,
    pub corrected: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kkt_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub iterate: BarrierIterate,
    pub status: BarrierStatus,
    /// Newton steps taken.
    pub iterations: usize,
    /// Error metric at the returned iterate.
    pub e_mu: f64,
    pub trace: Vec<IterationRecord>,
}

/// Relaxed values `g − v` for every interior point.
fn relaxed(g: &DVector<f64>, relax: &[f64]) -> DVector<f64> {
    if relax.is_empty() {
        g.clone()
    } else {
        g - DVector::from_column_slice(relax)
    }
}

/// Linearize all interior points with the current multipliers.
pub fn linearize_all<P: BarrierProblem>(
    problem: &P,
    relax: &[f64],
    it: &BarrierIterate,
) -> Result<Vec<PointLinearization>> {
    let nc = problem.constraint_count();
    (0..it.path.k())
        .into_par_iter()
        .map(|i| {
            let mut lin = problem.linearize(it.path.interior(i + 1), &it.states[i], it.z_point(i, nc))?;
            lin.g = relaxed(&lin.g, relax);
            Ok(lin)
        })
        .collect()
}

/// Evaluate relaxed constraints at every interior point of `path`.
pub fn evaluate_all<P: BarrierProblem>(
    problem: &P,
    relax: &[f64],
    path: &PathDiscretization,
    warm: &[Vec<f64>],
) -> Result<Vec<(DVector<f64>, Vec<f64>)>> {
    (0..path.k())
        .into_par_iter()
        .map(|i| {
            let (g, x) = problem.evaluate(path.interior(i + 1), &warm[i])?;
            Ok((relaxed(&g, relax), x))
        })
        .collect()
}

fn stack_jt_times(lin: &[PointLinearization], v: &[f64], m: usize) -> DVector<f64> {
    let nc = lin.first().map_or(0, |l| l.g.len());
    let mut out = DVector::zeros(lin.len() * m);
    for (i, l) in lin.iter().enumerate() {
        let vi = DVector::from_column_slice(&v[i * nc..(i + 1) * nc]);
        out.rows_mut(i * m, m).copy_from(&l.jac.tr_mul(&vi));
    }
    out
}

/// `∇_p L = ∇φ + D_𝒠ᵀ y + D_ℐᵀ z`.
pub fn lagrangian_gradient(it: &BarrierIterate, lin: &[PointLinearization]) -> DVector<f64> {
    let (_, de) = it.path.equality_constraints();
    it.path.objective_gradient() + de.tr_mul(&it.y) + stack_jt_times(lin, &it.z, it.path.dim())
}

/// Scaled optimality error `E_μ`.
pub fn error_metric(it: &BarrierIterate, lin: &[PointLinearization], params: &IpmParams) -> f64 {
    let k = it.path.k();
    let kn = it.z.len();
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    let rho_d = params
        .rho_max
        .max((l1(&it.y) + l1(&it.z)) / (k + kn) as f64)
        / params.rho_max;
    let rho_c = if kn == 0 {
        1.0
    } else {
        params.rho_max.max(l1(&it.z) / kn as f64) / params.rho_max
    };
    let grad = lagrangian_gradient(it, lin).amax();
    let comp = it
        .s
        .iter()
        .zip(&it.z)
        .map(|(s, z)| (s * z - it.mu).abs())
        .fold(0.0, f64::max);
    let (c, _) = it.path.equality_constraints();
    (grad / rho_d).max(comp / rho_c).max(c.amax())
}

/// `Φ_k = 2w_k [(1 + y_k − y_{k−1}) I, d_k; d_kᵀ, 0]` for `k = 1..=K+1`.
fn phi_block(path: &PathDiscretization, y: &[f64], d: &[DVector<f64>], k: usize) -> DMatrix<f64> {
    let kk = path.k();
    let m = path.dim();
    let yy = |j: usize| if j == 0 || j > kk { 0.0 } else { y[j - 1] };
    let w = path.w()[k - 1];
    let mut b = DMatrix::zeros(m + 1, m + 1);
    b.view_mut((0, 0), (m, m))
        .fill_diagonal(2.0 * w * (1.0 + yy(k) - yy(k - 1)));
    let dk = &d[k - 1] * (2.0 * w);
    b.view_mut((0, m), (m, 1)).copy_from(&dk);
    b.view_mut((m, 0), (1, m)).copy_from(&dk.transpose());
    b
}

/// The permuted reduced system and its right-hand side.
pub fn assemble_reduced_kkt(
    it: &BarrierIterate,
    lin: &[PointLinearization],
    deltas: &[f64],
) -> (BtdMatrix, DVector<f64>) {
    let k = it.path.k();
    let m = it.path.dim();
    let nc = lin.first().map_or(0, |l| l.g.len());
    let d = it.path.differences();
    let phis: Vec<DMatrix<f64>> = (1..=k + 1).map(|j| phi_block(&it.path, &it.y, &d, j)).collect();
    let mut btd = BtdMatrix::zeros(k, m + 1);
    let grad_l = lagrangian_gradient(it, lin);
    let (ce, _) = it.path.equality_constraints();
    let mut rhs = DVector::zeros(k * (m + 1));
    for i in 0..k {
        let l = &lin[i];
        let zi = &it.z[i * nc..(i + 1) * nc];
        let si = &it.s[i * nc..(i + 1) * nc];
        let sigma = DVector::from_iterator(nc, zi.iter().zip(si).map(|(z, s)| z / s));
        let mut gamma = l.jac.tr_mul(&(DMatrix::from_diagonal(&sigma) * &l.jac)) + &l.hess;
        for r in 0..m {
            gamma[(r, r)] += deltas[i];
        }
        let blk = btd.diag_mut(i);
        blk.view_mut((0, 0), (m, m)).copy_from(&gamma);
        *blk += &phis[i] + &phis[i + 1];
        if i + 1 < k {
            *btd.sub_mut(i) = -&phis[i + 1];
        }
        // −[∇L + D_iᵀ(Σ c + μ ⊘ s)]
        let inner = DVector::from_iterator(
            nc,
            (0..nc).map(|j| sigma[j] * l.g[j] + it.mu / si[j]),
        );
        let top = -(grad_l.rows(i * m, m) + l.jac.tr_mul(&inner));
        rhs.rows_mut(i * (m + 1), m).copy_from(&top);
        rhs[i * (m + 1) + m] = -ce[i];
    }
    (btd, rhs)
}

/// Solve the reduced system and recover `Δz`, `Δs`.
pub fn newton_step(it: &BarrierIterate, lin: &[PointLinearization], deltas: &[f64]) -> Result<NewtonStep> {
    let (btd, rhs) = assemble_reduced_kkt(it, lin, deltas);
    let sol = btd.factor()?.solve(&rhs);
    let k = it.path.k();
    let m = it.path.dim();
    let nc = lin.first().map_or(0, |l| l.g.len());
    let mut dp = DVector::zeros(k * m);
    let mut dy = DVector::zeros(k);
    for i in 0..k {
        dp.rows_mut(i * m, m).copy_from(&sol.rows(i * (m + 1), m));
        dy[i] = sol[i * (m + 1) + m];
    }
    let mut dz = DVector::zeros(k * nc);
    let mut ds = DVector::zeros(k * nc);
    for (i, l) in lin.iter().enumerate() {
        let jd = &l.jac * dp.rows(i * m, m);
        for j in 0..nc {
            let idx = i * nc + j;
            let (z, s) = (it.z[idx], it.s[idx]);
            let sigma = z / s;
            // Δz = Σ (D Δp + c + μ ⊘ z), Δs = Σ⁻¹ (μ ⊘ s − z − Δz)
            dz[idx] = sigma * (jd[j] + l.g[j] + it.mu / z);
            ds[idx] = (it.mu / s - z - dz[idx]) / sigma;
        }
    }
    Ok(NewtonStep { dp, dy, dz, ds })
}

/// Lower-bound magnitude `l_𝒠` for the equality-constraint curvature.
pub fn equality_curvature_bound(path: &PathDiscretization, y: &[f64]) -> f64 {
    let k = path.k();
    let yy = |j: usize| if j == 0 || j > k { 0.0 } else { y[j - 1] };
    let min = (1..=k + 1)
        .map(|j| path.w()[j - 1] * (yy(j) - yy(j - 1)))
        .fold(0.0, f64::min);
    -4.0 * (1.0 + (std::f64::consts::PI / (k + 1) as f64).cos()) * min
}

/// `δ_i = l_𝒠 + ‖∇²(z_iᵀ g)‖_F`.
pub fn inertia_correction(it: &BarrierIterate, lin: &[PointLinearization]) -> Vec<f64> {
    let le = equality_curvature_bound(&it.path, &it.y);
    lin.iter().map(|l| le + l.hess.norm()).collect()
}

/// Largest `α ≤ 1` keeping `z + α Δz ≥ (1 − τ) z`.
pub fn fraction_to_boundary(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    z.iter()
        .zip(dz)
        .filter(|(_, d)| **d < 0.0)
        .map(|(z, d)| -tau * z / d)
        .fold(1.0, f64::min)
}

/// `ψ = φ − μ Σ ln max(−g, 0)`; `+∞` when any value is non-negative.
pub fn merit(path: &PathDiscretization, values: &[DVector<f64>], mu: f64) -> f64 {
    let mut barrier = 0.0;
    for g in values {
        for &v in g.iter() {
            if !(v < 0.0) {
                return f64::INFINITY;
            }
            barrier += (-v).ln();
        }
    }
    path.objective() - mu * barrier
}

/// Accepted trial point of a line search.
#[derive(Debug, Clone)]
pub struct AcceptedTrial {
    pub path: PathDiscretization,
    pub values: Vec<DVector<f64>>,
    pub states: Vec<Vec<f64>>,
    pub merit: f64,
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    /// Backoff exponent of the accepted step.
    pub m: u32,
    pub step: f64,
    pub accepted: Option<AcceptedTrial>,
}

/// Backtracking on `ψ` with the Theorem-1 margin conditions.
#[allow(clippy::too_many_arguments)]
pub fn line_search<P: BarrierProblem>(
    problem: &P,
    relax: &[f64],
    it: &BarrierIterate,
    current_merit: f64,
    grad_psi: &DVector<f64>,
    dp: &DVector<f64>,
    params: &IpmParams,
) -> LineSearchResult {
    let slope = grad_psi.dot(dp);
    let p = DVector::from_column_slice(it.path.points());
    let mut m = 0u32;
    loop {
        let step = params.gamma.powi(m as i32);
        if step <= params.eps_ls {
            return LineSearchResult { m, step, accepted: None };
        }
        let trial = it.path.with_points((&p + dp * step).as_slice().to_vec());
        if trial.theorem1_margins(params.eps_ls).pass {
            if let Ok(evals) = evaluate_all(problem, relax, &trial, &it.states) {
                let (values, states): (Vec<_>, Vec<_>) = evals.into_iter().unzip();
                let psi = merit(&trial, &values, it.mu);
                if psi <= current_merit + params.eta * step * slope {
                    return LineSearchResult {
                        m,
                        step,
                        accepted: Some(AcceptedTrial {
                            path: trial,
                            values,
                            states,
                            merit: psi,
                        }),
                    };
                }
            }
        }
        m += 1;
    }
}

/// Dense `∇²_{pp} L` (without inertia correction).
pub fn dense_lagrangian_hessian(it: &BarrierIterate, lin: &[PointLinearization]) -> DMatrix<f64> {
    let m = it.path.dim();
    let mut h = it.path.objective_hessian().kron_identity(m) * 2.0
        + it.path.equality_hessian_term(&it.y).kron_identity(m);
    for (i, l) in lin.iter().enumerate() {
        let mut blk = h.view_mut((i * m, i * m), (m, m));
        blk += &l.hess;
    }
    h
}

/// Row-wise backward error `max_i |r_i| / (|A_i|·|x| + |b_i|)` of the
/// unreduced Newton system at a recovered step.
pub fn full_system_residual(it: &BarrierIterate, lin: &[PointLinearization], step: &NewtonStep) -> f64 {
    let k = it.path.k();
    let m = it.path.dim();
    let nc = lin.first().map_or(0, |l| l.g.len());
    let np = k * m;
    let ni = k * nc;
    let n = np + ni + k + ni;
    let mut a = DMatrix::zeros(n, n);
    let (ce, de) = it.path.equality_constraints();
    let de = de.to_dense();
    let mut di = DMatrix::zeros(ni, np);
    for (i, l) in lin.iter().enumerate() {
        di.view_mut((i * nc, i * m), (nc, m)).copy_from(&l.jac);
    }
    let (op, os, oy, oz) = (0, np, np + ni, np + ni + k);
    a.view_mut((op, op), (np, np)).copy_from(&dense_lagrangian_hessian(it, lin));
    a.view_mut((op, oy), (np, k)).copy_from(&de.transpose());
    a.view_mut((op, oz), (np, ni)).copy_from(&di.transpose());
    for j in 0..ni {
        a[(os + j, os + j)] = it.z[j] / it.s[j];
        a[(os + j, oz + j)] = 1.0;
        a[(oz + j, os + j)] = 1.0;
    }
    a.view_mut((oy, op), (k, np)).copy_from(&de);
    a.view_mut((oz, op), (ni, np)).copy_from(&di);
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(op, np).copy_from(&-lagrangian_gradient(it, lin));
    for j in 0..ni {
        rhs[os + j] = -(it.z[j] - it.mu / it.s[j]);
    }
    rhs.rows_mut(oy, k).copy_from(&-ce);
    for (i, l) in lin.iter().enumerate() {
        for j in 0..nc {
            rhs[oz + i * nc + j] = -(l.g[j] + it.s[i * nc + j]);
        }
    }
    let mut x = DVector::zeros(n);
    x.rows_mut(op, np).copy_from(&step.dp);
    x.rows_mut(os, ni).copy_from(&step.ds);
    x.rows_mut(oy, k).copy_from(&step.dy);
    x.rows_mut(oz, ni).copy_from(&step.dz);
    let r = &a * &x - &rhs;
    let ax = a.abs() * x.abs();
    (0..n)
        .map(|i| {
            let scale = ax[i] + rhs[i].abs();
            if scale > 0.0 {
                r[i].abs() / scale
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Start an iterate at `path`: `s = −g`, `y = 0`, `z = μ ⊘ s`.
pub fn initial_iterate<P: BarrierProblem>(
    problem: &P,
    relax: &[f64],
    path: PathDiscretization,
    states: Vec<Vec<f64>>,
    mu: f64,
    eps_ls: f64,
) -> Result<BarrierIterate> {
    if states.len() != path.k() {
        return Err(Error::InvalidInput("one warm-start state per interior point required".into()));
    }
    let evals = evaluate_all(problem, relax, &path, &states)
        .map_err(|e| Error::InfeasibleStart(format!("constraints not evaluable: {e}")))?;
    let mut s = Vec::with_capacity(path.k() * problem.constraint_count());
    let mut new_states = Vec::with_capacity(path.k());
    for (i, (g, x)) in evals.into_iter().enumerate() {
        if let Some(j) = g.iter().position(|v| !(*v < 0.0)) {
            return Err(Error::InfeasibleStart(format!(
                "constraint {j} at point {} has value {:e}",
                i + 1,
                g[j]
            )));
        }
        s.extend(g.iter().map(|v| -v));
        new_states.push(x);
    }
    if !path.theorem1_margins(eps_ls).pass {
        return Err(Error::InfeasibleStart("segment regularity margins fail at the start".into()));
    }
    let z = s.iter().map(|s| mu / s).collect();
    Ok(BarrierIterate {
        y: vec![0.0; path.k()],
        path,
        s,
        z,
        mu,
        states: new_states,
    })
}

/// Solve the barrier problem at fixed `μ` from a strictly feasible path.
///
/// `relax` (empty or one entry per constraint) is subtracted from every
/// constraint value. `observer` sees each trace record as it is produced.
pub fn barrier_solve<P: BarrierProblem>(
    problem: &P,
    relax: &[f64],
    path: PathDiscretization,
    states: Vec<Vec<f64>>,
    mu: f64,
    params: &IpmParams,
    mut observer: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<BarrierOutcome> {
    params.validate()?;
    if !(mu > 0.0) {
        return Err(Error::InvalidInput("barrier parameter must be positive".into()));
    }
    if !relax.is_empty() && relax.len() != problem.constraint_count() {
        return Err(Error::InvalidInput("relaxation vector has the wrong length".into()));
    }
    let mut it = initial_iterate(problem, relax, path, states, mu, params.eps_ls)?;
    let mut trace = Vec::new();
    let mut status = BarrierStatus::MaxIterations;
    let mut iterations = 0;
    let mut e_mu = f64::INFINITY;
    let mut lin = linearize_all(problem, relax, &it)?;
    for iter in 1..=params.iter_max {
        if iter > 1 {
            lin = linearize_all(problem, relax, &it)?;
        }
        e_mu = error_metric(&it, &lin, params);
        let values: Vec<DVector<f64>> = lin.iter().map(|l| l.g.clone()).collect();
        let psi = merit(&it.path, &values, mu);
        if e_mu <= params.eps_tol {
            status = BarrierStatus::Converged;
            let rec = IterationRecord {
                iter,
                e_mu,
                merit: psi,
                m: None,
                alpha_z: 0.0,
                corrected: false,
                kkt_residual: None,
            };
            emit(&mut observer, &mut trace, rec);
            break;
        }
        // ∇ψ_o = ∇φ + μ D_ℐᵀ (1 ⊘ s)
        let inv_s: Vec<f64> = it.s.iter().map(|s| 1.0 / s).collect();
        let grad_psi = it.path.objective_gradient() + stack_jt_times(&lin, &inv_s, it.path.dim()) * mu;

        let mut deltas = vec![0.0; it.path.k()];
        let mut corrected = false;
        let (step, search, residual) = loop {
            let attempt = newton_step(&it, &lin, &deltas);
            let (step, search, residual) = match attempt {
                Ok(step) => {
                    let residual = (params.debug_kkt_check && !corrected)
                        .then(|| full_system_residual(&it, &lin, &step));
                    let search = line_search(problem, relax, &it, psi, &grad_psi, &step.dp, params);
                    (Some(step), search, residual)
                }
                Err(Error::SingularBlock { .. }) => (
                    None,
                    LineSearchResult {
                        m: 0,
                        step: 0.0,
                        accepted: None,
                    },
                    None,
                ),
                Err(e) => return Err(e),
            };
            if search.accepted.is_some() || corrected {
                break (step, search, residual);
            }
            deltas = inertia_correction(&it, &lin);
            corrected = true;
        };
        let Some(trial) = search.accepted else {
            let rec = IterationRecord {
                iter,
                e_mu,
                merit: psi,
                m: None,
                alpha_z: 0.0,
                corrected,
                kkt_residual: residual,
            };
            emit(&mut observer, &mut trace, rec);
            status = BarrierStatus::LineSearchFailed;
            break;
        };
        let step = step.expect("accepted search implies a step");
        let alpha_z = fraction_to_boundary(&it.z, step.dz.as_slice(), params.tau);
        let scale = search.step * alpha_z;
        for (y, d) in it.y.iter_mut().zip(step.dy.iter()) {
            *y += scale * d;
        }
        for (z, d) in it.z.iter_mut().zip(step.dz.iter()) {
            *z += scale * d;
        }
        it.s = trial.values.iter().flat_map(|g| g.iter().map(|v| -v)).collect();
        it.path = trial.path;
        it.states = trial.states;
        iterations = iter;
        let rec = IterationRecord {
            iter,
            e_mu,
            merit: psi,
            m: Some(search.m),
            alpha_z,
            corrected,
            kkt_residual: residual,
        };
        emit(&mut observer, &mut trace, rec);
    }
    if status == BarrierStatus::MaxIterations {
        let lin = linearize_all(problem, relax, &it)?;
        e_mu = error_metric(&it, &lin, params);
        if e_mu <= params.eps_tol {
            status = BarrierStatus::Converged;
        }
    }
    Ok(BarrierOutcome {
        iterate: it,
        status,
        iterations,
        e_mu,
        trace,
    })
}

fn emit(
    observer: &mut Option<&mut dyn FnMut(&IterationRecord)>,
    trace: &mut Vec<IterationRecord>,
    rec: IterationRecord,
) {
    if let Some(f) = observer.as_mut() {
        f(&rec);
    }
    trace.push(rec);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::uniform_parameters;

    #[test]
    fn fraction_to_boundary_cases() {
        assert!((fraction_to_boundary(&[1.0, 1.0], &[-2.0, 0.5], 0.99) - 0.495).abs() < 1e-15);
        assert_eq!(fraction_to_boundary(&[1.0, 2.0], &[0.0, 0.5], 0.99), 1.0);
    }

    #[test]
    fn zero_multipliers_give_zero_bound() {
        let p = PathDiscretization::init_line_path(vec![0.0], vec![1.0], uniform_parameters(4)).unwrap();
        assert_eq!(equality_curvature_bound(&p, &[0.0; 4]), 0.0);
    }

    #[test]
    fn merit_blocks_violations() {
        let p = PathDiscretization::init_line_path(vec![0.0], vec![1.0], uniform_parameters(1)).unwrap();
        let ok = merit(&p, &[DVector::from_vec(vec![-1.0])], 0.1);
        assert!((ok - p.objective()).abs() < 1e-15);
        assert_eq!(merit(&p, &[DVector::from_vec(vec![0.0])], 0.1), f64::INFINITY);
    }

    #[test]
    fn unconstrained_straight_line_converges_immediately() {
        let lc = LinearConstraints {
            a: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DVector::from_vec(vec![10.0]),
        };
        let p = PathDiscretization::init_line_path(vec![0.0], vec![1.0], uniform_parameters(3)).unwrap();
        let out = barrier_solve(&lc, &[], p, vec![vec![]; 3], 1e-6, &IpmParams::default(), None).unwrap();
        assert_eq!(out.status, BarrierStatus::Converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let lc = LinearConstraints {
            a: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DVector::from_vec(vec![0.4]),
        };
        let p = PathDiscretization::init_line_path(vec![0.0], vec![1.0], uniform_parameters(3)).unwrap();
        let r = barrier_solve(&lc, &[], p, vec![vec![]; 3], 0.1, &IpmParams::default(), None);
        assert!(matches!(r, Err(Error::InfeasibleStart(_))));
    }
}
