//! Newton–Raphson solution of `f(x, u) = 0` for the state, warm-started so
//! that successive solves stay on one branch of the power-flow map.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::case::QuadraticModel;
use crate::dense::DenseLu;

/// Pivot ratio below which a Jacobian is treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Infinity-norm tolerance on the mismatch (p.u.).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_inf: f64,
    pub converged: bool,
    /// Set when a Newton step hit a singular Jacobian.
    pub singular: bool,
    /// Mismatch infinity norm before each Newton step, plus the final one.
    pub residual_history: Vec<f64>,
}

/// Solve for the state at full control vector `u`, starting from `x_guess`.
///
/// Never fails hard: divergence, a singular Jacobian, or a non-finite iterate
/// are reported through `converged == false`.
pub fn solve_power_flow(
    model: &QuadraticModel,
    u: &[f64],
    x_guess: &[f64],
    opts: PowerFlowOptions,
) -> PowerFlowResult {
    let mut x = DVector::from_column_slice(x_guess);
    let mut history = Vec::with_capacity(opts.max_iter + 1);
    let mut singular = false;
    let mut iterations = 0;
    let mut res = model.residual(x.as_slice(), u);
    let mut norm = res.amax();
    history.push(norm);
    while norm > opts.tol && iterations < opts.max_iter && norm.is_finite() {
        let lu = DenseLu::new(model.jacobian(x.as_slice()));
        if lu.is_singular(SINGULAR_PIVOT_RATIO) {
            singular = true;
            break;
        }
        res.neg_mut();
        lu.solve_mut(&mut res);
        x += &res;
        iterations += 1;
        res = model.residual(x.as_slice(), u);
        norm = res.amax();
        history.push(norm);
    }
    let converged = norm <= opts.tol && norm.is_finite();
    PowerFlowResult {
        x: x.as_slice().to_vec(),
        iterations,
        residual_inf: norm,
        converged,
        singular,
        residual_history: history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case_matpower;

    fn case9_model() -> QuadraticModel {
        let case = parse_case_matpower(include_str!("../../../data/case9.m"))
            .unwrap()
            .case;
        QuadraticModel::build(&case).unwrap()
    }

    // V1, P2, V2, P3, V3 with voltages at 1 p.u.
    fn variant1_u(p2: f64, p3: f64) -> Vec<f64> {
        vec![1.0, p2, 1.0, p3, 1.0]
    }

    #[test]
    fn lossless_unloaded_flat_start() {
        let text = "mpc.baseMVA = 100;
mpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 1 1 1.1 0.9; 3 1 0 0 0 0 1 1 0 1 1 1.1 0.9];
mpc.gen = [1 0 0 10 -10 1 100 1 10 0];
mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1; 2 3 0 0.2 0 0 0 0 0 0 1];";
        let case = parse_case_matpower(text).unwrap().case;
        let m = QuadraticModel::build(&case).unwrap();
        let u = vec![1.0];
        let r = solve_power_flow(&m, &u, &m.flat_start(&u), PowerFlowOptions::default());
        assert!(r.converged);
        assert!(r.iterations <= 1);
        for i in 0..3 {
            assert!((r.x[i] - 1.0).abs() < 1e-12);
            assert!(r.x[3 + i].abs() < 1e-12);
        }
    }

    #[test]
    fn case9_variant1_start_converges() {
        let m = case9_model();
        let u = variant1_u(0.5, 0.5);
        let r = solve_power_flow(&m, &u, &m.flat_start(&u), PowerFlowOptions::default());
        assert!(r.converged, "{r:?}");
        assert!(r.residual_inf < 1e-8);
        // quadratic convergence: residual ratios shrink near the end
        let h = &r.residual_history;
        assert!(h.len() >= 3);
        assert!(h[h.len() - 1] / h[h.len() - 2] < 1.0);
    }

    #[test]
    fn far_infeasible_injection_reports_failure() {
        let m = case9_model();
        let u = variant1_u(100.0, 100.0);
        let r = solve_power_flow(&m, &u, &m.flat_start(&u), PowerFlowOptions::default());
        assert!(!r.converged);
    }

    #[test]
    fn warm_starts_track_one_branch() {
        let m = case9_model();
        let mut prev = solve_power_flow(
            &m,
            &variant1_u(0.5, 0.5),
            &m.flat_start(&variant1_u(0.5, 0.5)),
            PowerFlowOptions::default(),
        );
        for k in 1..=50 {
            let t = k as f64 / 50.0;
            let u = variant1_u(0.5 + t, 0.5 + 0.8 * t);
            let r = solve_power_flow(&m, &u, &prev.x, PowerFlowOptions::default());
            assert!(r.converged);
            let jump = r
                .x
                .iter()
                .zip(&prev.x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(jump < 0.05, "jump {jump} at step {k}");
            prev = r;
        }
    }
}
