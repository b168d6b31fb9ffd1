//! Power-flow equations in rectangular coordinates.
//!
//! The state is `x = [e; f]` (real parts then imaginary parts of the bus
//! voltage phasors). Every equation is a quadratic form of `x`, optionally
//! minus one control entry:
//!
//! * slack bus: `f_s = 0` (angle reference) and `e_s² + f_s² − V_s² = 0`;
//! * PV bus: `P_b(x) + Pd_b − Pg_b = 0` and `e_b² + f_b² − V_b² = 0`;
//! * PQ bus: `P_b(x) + Pd_b = 0` and `Q_b(x) + Qd_b = 0`.
//!
//! Equation `b` is the active-power (or angle) row of bus `b`, equation
//! `n + b` the reactive-power (or voltage) row. Controls are ordered per
//! generator bus as `(Pg, V²)`; the slack bus contributes only `V²`.

use nalgebra::{DMatrix, DVector};

use super::quadratic::{Quadratic, QuadraticBuilder};
use super::{Branch, BusKind, NetworkCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// Generator active power output (p.u.).
    ActivePower,
    /// Squared generator voltage magnitude (p.u.²).
    VoltageSquared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    pub kind: ControlKind,
    /// Bus index (into `NetworkCase::buses`).
    pub bus: usize,
    /// External bus number.
    pub bus_id: u32,
    /// Equation that receives `−u` for this control.
    pub equation: usize,
}

impl ControlSpec {
    /// Scenario name of the control: `P<bus id>` or `V<bus id>`.
    pub fn name(&self) -> String {
        match self.kind {
            ControlKind::ActivePower => format!("P{}", self.bus_id),
            ControlKind::VoltageSquared => format!("V{}", self.bus_id),
        }
    }
}

/// Complex power flowing out of a branch end as two real quadratics.
#[derive(Debug, Clone)]
pub struct BranchPower {
    pub p: Quadratic,
    pub q: Quadratic,
}

/// The quadratic power-flow model `f(x, u) = q(x) − S u`.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    n: usize,
    slack: usize,
    equations: Vec<Quadratic>,
    controls: Vec<ControlSpec>,
    control_of_equation: Vec<Option<usize>>,
    p_injection: Vec<Quadratic>,
    q_injection: Vec<Quadratic>,
    branch_from: Vec<BranchPower>,
    branch_to: Vec<BranchPower>,
}

/// Admittance entries of one branch: (y_ff, y_ft, y_tf, y_tt) as (G, B) pairs.
pub(crate) fn branch_admittance(br: &Branch) -> [(f64, f64); 4] {
    let z2 = br.r * br.r + br.x * br.x;
    let (gs, bs) = (br.r / z2, -br.x / z2);
    let ytt = (gs, bs + 0.5 * br.b);
    let t2 = br.tap * br.tap;
    let yff = (ytt.0 / t2, ytt.1 / t2);
    let (c, s) = (br.shift.cos(), br.shift.sin());
    // y_ft = −ys / (tap · e^{−jθ}) = −ys · e^{jθ} / tap
    let yft = (-(gs * c - bs * s) / br.tap, -(gs * s + bs * c) / br.tap);
    // y_tf = −ys / (tap · e^{jθ}) = −ys · e^{−jθ} / tap
    let ytf = (-(gs * c + bs * s) / br.tap, -(bs * c - gs * s) / br.tap);
    [yff, yft, ytf, ytt]
}

/// Add `V_a · conj(y · V_c)` to `(p, q)`.
fn add_complex_power(
    n: usize,
    a: usize,
    c: usize,
    (g, b): (f64, f64),
    p: &mut QuadraticBuilder,
    q: &mut QuadraticBuilder,
) {
    let (ea, fa, ec, fc) = (a, n + a, c, n + c);
    // real: e_a (G e_c − B f_c) + f_a (G f_c + B e_c)
    p.product(ea, ec, g)
        .product(ea, fc, -b)
        .product(fa, fc, g)
        .product(fa, ec, b);
    // imag: f_a (G e_c − B f_c) − e_a (G f_c + B e_c)
    q.product(fa, ec, g)
        .product(fa, fc, -b)
        .product(ea, fc, -g)
        .product(ea, ec, -b);
}

impl QuadraticModel {
    /// Assemble the model from a merged case.
    pub fn build(case: &NetworkCase) -> Result<Self> {
        if !case.buses_needing_merge().is_empty() {
            return Err(Error::InvalidInput(
                "case has several generators on one bus; merge them first".into(),
            ));
        }
        let n = case.bus_count();
        let dim = 2 * n;
        let slack = case.slack();

        let mut p_inj: Vec<QuadraticBuilder> = (0..n).map(|_| QuadraticBuilder::new(dim)).collect();
        let mut q_inj: Vec<QuadraticBuilder> = (0..n).map(|_| QuadraticBuilder::new(dim)).collect();
        let mut branch_from = Vec::with_capacity(case.branches.len());
        let mut branch_to = Vec::with_capacity(case.branches.len());

        for (i, bus) in case.buses.iter().enumerate() {
            add_complex_power(n, i, i, (bus.gs, bus.bs), &mut p_inj[i], &mut q_inj[i]);
        }
        for br in &case.branches {
            let [yff, yft, ytf, ytt] = branch_admittance(br);
            let (f, t) = (br.from, br.to);
            let mut pf = QuadraticBuilder::new(dim);
            let mut qf = QuadraticBuilder::new(dim);
            let mut pt = QuadraticBuilder::new(dim);
            let mut qt = QuadraticBuilder::new(dim);
            add_complex_power(n, f, f, yff, &mut pf, &mut qf);
            add_complex_power(n, f, t, yft, &mut pf, &mut qf);
            add_complex_power(n, t, f, ytf, &mut pt, &mut qt);
            add_complex_power(n, t, t, ytt, &mut pt, &mut qt);
            add_complex_power(n, f, f, yff, &mut p_inj[f], &mut q_inj[f]);
            add_complex_power(n, f, t, yft, &mut p_inj[f], &mut q_inj[f]);
            add_complex_power(n, t, f, ytf, &mut p_inj[t], &mut q_inj[t]);
            add_complex_power(n, t, t, ytt, &mut p_inj[t], &mut q_inj[t]);
            branch_from.push(BranchPower {
                p: pf.build(),
                q: qf.build(),
            });
            branch_to.push(BranchPower {
                p: pt.build(),
                q: qt.build(),
            });
        }
        let p_injection: Vec<Quadratic> = p_inj.iter().map(|b| b.build()).collect();
        let q_injection: Vec<Quadratic> = q_inj.iter().map(|b| b.build()).collect();

        let mut equations = vec![Quadratic::default(); dim];
        let mut controls = Vec::new();
        let mut control_of_equation = vec![None; dim];
        for (i, bus) in case.buses.iter().enumerate() {
            let voltage_sq = {
                let mut b = QuadraticBuilder::new(dim);
                b.product(i, i, 1.0).product(n + i, n + i, 1.0);
                b.build()
            };
            match bus.kind {
                BusKind::Slack => {
                    let mut b = QuadraticBuilder::new(dim);
                    b.linear(n + i, 1.0);
                    equations[i] = b.build();
                    equations[n + i] = voltage_sq;
                }
                BusKind::Pv => {
                    let mut p = p_injection[i].clone();
                    p.c += bus.pd;
                    equations[i] = p;
                    equations[n + i] = voltage_sq;
                }
                BusKind::Pq => {
                    let mut p = p_injection[i].clone();
                    p.c += bus.pd;
                    let mut q = q_injection[i].clone();
                    q.c += bus.qd;
                    equations[i] = p;
                    equations[n + i] = q;
                }
            }
            if bus.kind != BusKind::Pq {
                if bus.kind == BusKind::Pv {
                    control_of_equation[i] = Some(controls.len());
                    controls.push(ControlSpec {
                        kind: ControlKind::ActivePower,
                        bus: i,
                        bus_id: bus.id,
                        equation: i,
                    });
                }
                control_of_equation[n + i] = Some(controls.len());
                controls.push(ControlSpec {
                    kind: ControlKind::VoltageSquared,
                    bus: i,
                    bus_id: bus.id,
                    equation: n + i,
                });
            }
        }

        Ok(Self {
            n,
            slack,
            equations,
            controls,
            control_of_equation,
            p_injection,
            q_injection,
            branch_from,
            branch_to,
        })
    }

    /// Build a model from raw parts: `f_k(x, u) = equations[k](x) − u_c` for
    /// every control `c` with `controls[c].equation == k`. Useful for toy
    /// models; injection and branch forms are left empty.
    pub fn from_parts(n: usize, equations: Vec<Quadratic>, controls: Vec<ControlSpec>) -> Result<Self> {
        if equations.len() != 2 * n {
            return Err(Error::InvalidInput(format!(
                "expected {} equations, got {}",
                2 * n,
                equations.len()
            )));
        }
        let mut control_of_equation = vec![None; 2 * n];
        for (c, spec) in controls.iter().enumerate() {
            if spec.equation >= 2 * n || control_of_equation[spec.equation].replace(c).is_some() {
                return Err(Error::InvalidInput(format!(
                    "control {c} has an invalid or duplicate equation"
                )));
            }
        }
        Ok(Self {
            n,
            slack: 0,
            equations,
            controls,
            control_of_equation,
            p_injection: vec![],
            q_injection: vec![],
            branch_from: vec![],
            branch_to: vec![],
        })
    }

    /// Number of buses.
    pub fn bus_count(&self) -> usize {
        self.n
    }

    /// State dimension `2n`.
    pub fn state_dim(&self) -> usize {
        2 * self.n
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn controls(&self) -> &[ControlSpec] {
        &self.controls
    }

    pub fn control_index(&self, name: &str) -> Option<usize> {
        self.controls.iter().position(|c| c.name() == name)
    }

    pub fn equations(&self) -> &[Quadratic] {
        &self.equations
    }

    pub fn equation_control(&self, k: usize) -> Option<usize> {
        self.control_of_equation[k]
    }

    /// Network active/reactive injection at bus `b` (loads excluded).
    pub fn injection(&self, b: usize) -> (&Quadratic, &Quadratic) {
        (&self.p_injection[b], &self.q_injection[b])
    }

    /// Complex power leaving branch `k` at its from and to ends.
    pub fn branch_power(&self, k: usize) -> (&BranchPower, &BranchPower) {
        (&self.branch_from[k], &self.branch_to[k])
    }

    /// `f(x, u)` for a full control vector.
    pub fn residual(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.equations.len(),
            self.equations.iter().enumerate().map(|(k, q)| {
                q.eval(x) - self.control_of_equation[k].map_or(0.0, |c| u[c])
            }),
        )
    }

    /// `J(x) = ∂f/∂x`, row `k` is `(H_k x + r_k)ᵀ`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let dim = self.state_dim();
        let mut j = DMatrix::zeros(dim, dim);
        for (k, q) in self.equations.iter().enumerate() {
            for &(a, b, v) in q.h.entries() {
                j[(k, b)] += v * x[a];
            }
            for &(a, v) in &q.r {
                j[(k, a)] += v;
            }
        }
        j
    }

    /// `J_0`, the constant part of the Jacobian.
    pub fn jacobian_constant(&self) -> DMatrix<f64> {
        self.jacobian(&vec![0.0; self.state_dim()])
    }

    /// `J_m = ∂J/∂x_m`; row `k` is row `m` of `H_k`.
    pub fn jacobian_slope(&self, m: usize) -> DMatrix<f64> {
        let dim = self.state_dim();
        let mut j = DMatrix::zeros(dim, dim);
        for (k, q) in self.equations.iter().enumerate() {
            for (c, v) in q.h.row(m) {
                j[(k, c)] += v;
            }
        }
        j
    }

    /// `Σ_m J_m v_m`, the linear part of the Jacobian evaluated at `v`.
    pub fn jacobian_linear(&self, v: &[f64]) -> DMatrix<f64> {
        let dim = self.state_dim();
        let mut j = DMatrix::zeros(dim, dim);
        for (k, q) in self.equations.iter().enumerate() {
            for &(a, b, h) in q.h.entries() {
                j[(k, b)] += h * v[a];
            }
        }
        j
    }

    /// `Σ_k θ_k H_k`, i.e. the matrix whose row `m` is `θᵀ J_m`.
    pub fn curvature_contraction(&self, theta: &[f64]) -> DMatrix<f64> {
        let dim = self.state_dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (k, q) in self.equations.iter().enumerate() {
            if theta[k] != 0.0 {
                q.h.add_to_dense(theta[k], &mut m);
            }
        }
        m
    }

    /// Flat start: `e = 1`, `f = 0`, scaled by the voltage control where known.
    pub fn flat_start(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.state_dim()];
        x[..self.n].fill(1.0);
        for (c, spec) in self.controls.iter().enumerate() {
            if spec.kind == ControlKind::VoltageSquared && u[c] > 0.0 {
                x[spec.bus] = u[c].sqrt();
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case_matpower;

    fn case9() -> NetworkCase {
        parse_case_matpower(include_str!("../../../../data/case9.m"))
            .unwrap()
            .case
    }

    #[test]
    fn control_layout_case9() {
        let m = QuadraticModel::build(&case9()).unwrap();
        let names: Vec<String> = m.controls().iter().map(|c| c.name()).collect();
        assert_eq!(names, ["V1", "P2", "V2", "P3", "V3"]);
        assert_eq!(m.state_dim(), 18);
    }

    #[test]
    fn jacobian_at_zero_is_constant_part() {
        let m = QuadraticModel::build(&case9()).unwrap();
        let j0 = m.jacobian(&[0.0; 18]);
        assert_eq!(j0, m.jacobian_constant());
        // only the slack angle row has a constant gradient
        let nnz: Vec<(usize, usize)> = (0..18)
            .flat_map(|r| (0..18).map(move |c| (r, c)))
            .filter(|&(r, c)| j0[(r, c)] != 0.0)
            .collect();
        assert_eq!(nnz, vec![(0, 9)]);
    }

    #[test]
    fn hessians_symmetric_and_low_rank() {
        let m = QuadraticModel::build(&case9()).unwrap();
        for q in m.equations() {
            let h = q.h.to_dense();
            assert_eq!(h, h.transpose());
            let sv = h.clone().svd(false, false).singular_values;
            let tol = 1e-10 * sv.max().max(1.0);
            assert!(sv.iter().filter(|&&s| s > tol).count() <= 4);
            let rows: Vec<usize> = (0..18)
                .filter(|&r| (0..18).filter(|&c| h[(r, c)] != 0.0).count() > 2)
                .collect();
            assert!(rows.len() <= 2, "dense rows {rows:?}");
        }
    }
}
