//! Inequality constraints `g(u) ≤ 0` at a single path point, together with
//! their first and second derivatives with respect to the free controls.
//!
//! Constraints come in three groups: control-only bounds, state bounds
//! evaluated at `x = φ(u)`, and an optional determinant constraint
//! `−|det J(x)| ≤ 0`. State derivatives go through the implicit function
//! theorem using a cached LU of `J(x)`; `J⁻¹` is never formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::case::{BusKind, ControlKind, NetworkCase, Quadratic, QuadraticBuilder, QuadraticModel};
use crate::dense::DenseLu;
use crate::error::{Error, Result};
use crate::powerflow::{solve_power_flow, PowerFlowOptions, SINGULAR_PIVOT_RATIO};

/// Upper clamp on `ln|det J|` before exponentiating.
pub const LOG_DET_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Voltage,
    ActivePower,
    ReactivePower,
    ApparentFlow,
    AngleDifference,
    Determinant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintGroup {
    /// Depends on the controls only.
    Control,
    /// Depends on the state only.
    State,
    /// The power-flow Jacobian determinant.
    Determinant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintInfo {
    pub kind: ConstraintKind,
    pub group: ConstraintGroup,
    /// Short human-readable tag such as `Qmin@3` or `Smax@4-5`.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintOptions {
    pub flow_limits: bool,
    pub angle_limits: bool,
    pub determinant: bool,
}

impl Default for ConstraintOptions {
    fn default() -> Self {
        Self {
            flow_limits: true,
            angle_limits: true,
            determinant: false,
        }
    }
}

/// Which entries of the full control vector are optimized. The others keep
/// the values in `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLayout {
    base: Vec<f64>,
    free: Vec<usize>,
}

impl ControlLayout {
    pub fn new(base: Vec<f64>, free: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; base.len()];
        for &c in &free {
            if c >= base.len() || std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidInput(format!("bad free control index {c}")));
            }
        }
        Ok(Self { base, free })
    }

    pub fn all_free(base: Vec<f64>) -> Self {
        let free = (0..base.len()).collect();
        Self { base, free }
    }

    /// Number of free controls.
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Expand free controls into a full control vector.
    pub fn full(&self, u: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (k, &c) in self.free.iter().enumerate() {
            full[c] = u[k];
        }
        full
    }

    /// Extract the free entries of a full control vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&c| full[c]).collect()
    }
}

#[derive(Debug, Clone)]
enum Expr {
    /// `sign · (u_index − bound)`
    Control { index: usize, sign: f64, bound: f64 },
    Quad(Quadratic),
    /// `p(x)² + q(x)² − limit²`
    Flow { p: Quadratic, q: Quadratic, limit_sq: f64 },
    Determinant,
}

/// The full inequality vector for one scenario.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    info: Vec<ConstraintInfo>,
    exprs: Vec<Expr>,
    layout: ControlLayout,
    pf: PowerFlowOptions,
}

/// Constraint values and the state at one point.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub x: Vec<f64>,
    pub g: DVector<f64>,
}

#[derive(Debug, Clone)]
struct DetData {
    abs_det: f64,
    /// `tr(J⁻¹ J_k)`
    traces: DVector<f64>,
    /// `J⁻¹ J_k`
    solved: Vec<DMatrix<f64>>,
}

/// Values and derivatives of all constraints at one point.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub x: Vec<f64>,
    pub g: DVector<f64>,
    /// `∂g/∂u`, one row per constraint, one column per free control.
    pub dg_du: DMatrix<f64>,
    /// `dx/du`, `2n × m`.
    pub dx_du: DMatrix<f64>,
    /// `∂g/∂x`; rows of control constraints are zero.
    pub dg_dx: DMatrix<f64>,
    lu: DenseLu,
    det: Option<DetData>,
}

impl DerivativeBundle {
    pub fn jacobian_lu(&self) -> &DenseLu {
        &self.lu
    }
}

fn bound_pair(
    out: &mut Vec<(ConstraintInfo, Expr)>,
    kind: ConstraintKind,
    tag: &str,
    value: &Quadratic,
    lo: f64,
    hi: f64,
) {
    if hi.is_finite() {
        let mut q = value.clone();
        q.c -= hi;
        out.push((info(kind, ConstraintGroup::State, format!("{tag}max")), Expr::Quad(q)));
    }
    if lo.is_finite() {
        let mut q = value.scaled(-1.0);
        q.c += lo;
        out.push((info(kind, ConstraintGroup::State, format!("{tag}min")), Expr::Quad(q)));
    }
}

fn info(kind: ConstraintKind, group: ConstraintGroup, label: String) -> ConstraintInfo {
    ConstraintInfo { kind, group, label }
}

impl ConstraintSet {
    /// Assemble the constraint set. Bounds that are infinite are left out.
    pub fn build(
        case: &NetworkCase,
        model: &QuadraticModel,
        layout: ControlLayout,
        opts: ConstraintOptions,
    ) -> Result<Self> {
        let controls = model.controls();
        if layout.base().len() != controls.len() {
            return Err(Error::InvalidInput(format!(
                "control layout has {} entries, model has {}",
                layout.base().len(),
                controls.len()
            )));
        }
        let n = model.bus_count();
        let dim = model.state_dim();
        let mut items: Vec<(ConstraintInfo, Expr)> = Vec::new();

        for (k, &c) in layout.free_indices().iter().enumerate() {
            let spec = &controls[c];
            let bus = &case.buses[spec.bus];
            let (kind, lo, hi) = match spec.kind {
                ControlKind::ActivePower => {
                    let gen = case.generator_at(spec.bus).ok_or_else(|| {
                        Error::InvalidCase(format!("no generator at bus {}", bus.id))
                    })?;
                    (ConstraintKind::ActivePower, gen.pmin, gen.pmax)
                }
                ControlKind::VoltageSquared => (
                    ConstraintKind::Voltage,
                    bus.vmin * bus.vmin,
                    bus.vmax * bus.vmax,
                ),
            };
            let name = spec.name();
            if hi.is_finite() {
                items.push((
                    info(kind, ConstraintGroup::Control, format!("{name}max")),
                    Expr::Control { index: k, sign: 1.0, bound: hi },
                ));
            }
            if lo.is_finite() {
                items.push((
                    info(kind, ConstraintGroup::Control, format!("{name}min")),
                    Expr::Control { index: k, sign: -1.0, bound: lo },
                ));
            }
        }

        for (i, bus) in case.buses.iter().enumerate() {
            if bus.kind != BusKind::Pq {
                continue;
            }
            let mut v = QuadraticBuilder::new(dim);
            v.product(i, i, 1.0).product(n + i, n + i, 1.0);
            let (lo, hi) = (bus.vmin * bus.vmin, bus.vmax * bus.vmax);
            bound_pair(&mut items, ConstraintKind::Voltage, &format!("V@{}:", bus.id), &v.build(), lo, hi);
        }
        for gen in &case.generators {
            let bus = &case.buses[gen.bus];
            let (_, q) = model.injection(gen.bus);
            let mut qg = q.clone();
            qg.c += bus.qd;
            bound_pair(
                &mut items,
                ConstraintKind::ReactivePower,
                &format!("Q@{}:", bus.id),
                &qg,
                gen.qmin,
                gen.qmax,
            );
        }
        let slack = case.slack();
        if let Some(gen) = case.generator_at(slack) {
            let (p, _) = model.injection(slack);
            let mut pg = p.clone();
            pg.c += case.buses[slack].pd;
            bound_pair(
                &mut items,
                ConstraintKind::ActivePower,
                &format!("P@{}:", case.buses[slack].id),
                &pg,
                gen.pmin,
                gen.pmax,
            );
        }
        if opts.flow_limits {
            for (k, br) in case.branches.iter().enumerate() {
                let Some(limit) = br.flow_limit.filter(|l| l.is_finite()) else {
                    continue;
                };
                let (from, to) = model.branch_power(k);
                let (a, b) = (case.buses[br.from].id, case.buses[br.to].id);
                for (end, bp) in [("f", from), ("t", to)] {
                    items.push((
                        info(
                            ConstraintKind::ApparentFlow,
                            ConstraintGroup::State,
                            format!("S@{a}-{b}{end}"),
                        ),
                        Expr::Flow {
                            p: bp.p.clone(),
                            q: bp.q.clone(),
                            limit_sq: limit * limit,
                        },
                    ));
                }
            }
        }
        if opts.angle_limits {
            for br in &case.branches {
                let (f, t) = (br.from, br.to);
                let (a, b) = (case.buses[f].id, case.buses[t].id);
                // V_f conj(V_t) = (e_f e_t + f_f f_t) + j (f_f e_t − e_f f_t)
                let mut re = QuadraticBuilder::new(dim);
                re.product(f, t, 1.0).product(n + f, n + t, 1.0);
                let re = re.build();
                let mut im = QuadraticBuilder::new(dim);
                im.product(n + f, t, 1.0).product(f, n + t, -1.0);
                let im = im.build();
                if let Some(hi) = br.angle_max {
                    let mut g = im.clone();
                    add_scaled(&mut g, &re, -hi.tan());
                    items.push((
                        info(
                            ConstraintKind::AngleDifference,
                            ConstraintGroup::State,
                            format!("A@{a}-{b}max"),
                        ),
                        Expr::Quad(g),
                    ));
                }
                if let Some(lo) = br.angle_min {
                    let mut g = im.scaled(-1.0);
                    add_scaled(&mut g, &re, lo.tan());
                    items.push((
                        info(
                            ConstraintKind::AngleDifference,
                            ConstraintGroup::State,
                            format!("A@{a}-{b}min"),
                        ),
                        Expr::Quad(g),
                    ));
                }
            }
        }
        if opts.determinant {
            items.push((
                info(
                    ConstraintKind::Determinant,
                    ConstraintGroup::Determinant,
                    "det".into(),
                ),
                Expr::Determinant,
            ));
        }
        let (info, exprs) = items.into_iter().unzip();
        Ok(Self {
            info,
            exprs,
            layout,
            pf: PowerFlowOptions::default(),
        })
    }

    pub fn with_power_flow_options(mut self, pf: PowerFlowOptions) -> Self {
        self.pf = pf;
        self
    }

    pub fn power_flow_options(&self) -> PowerFlowOptions {
        self.pf
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn info(&self) -> &[ConstraintInfo] {
        &self.info
    }

    pub fn layout(&self) -> &ControlLayout {
        &self.layout
    }

    /// Index of the determinant constraint, if enabled.
    pub fn determinant_index(&self) -> Option<usize> {
        self.exprs.iter().position(|e| matches!(e, Expr::Determinant))
    }

    /// Solve the power flow at `u` (free controls) from `warm_x`.
    pub fn solve_state(&self, model: &QuadraticModel, u: &[f64], warm_x: &[f64]) -> Result<Vec<f64>> {
        let full = self.layout.full(u);
        let r = solve_power_flow(model, &full, warm_x, self.pf);
        if r.converged {
            Ok(r.x)
        } else if r.singular {
            Err(Error::SingularJacobian)
        } else {
            Err(Error::PowerFlowDiverged {
                iterations: r.iterations,
                residual: r.residual_inf,
            })
        }
    }

    /// Constraint values at `u`, with the state solved from `warm_x`.
    pub fn eval(&self, model: &QuadraticModel, u: &[f64], warm_x: &[f64]) -> Result<PointEval> {
        let x = self.solve_state(model, u, warm_x)?;
        let g = self.values_at(model, u, &x)?;
        Ok(PointEval { x, g })
    }

    /// Constraint values for a given (already solved) state.
    pub fn values_at(&self, model: &QuadraticModel, u: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        let det = if self.determinant_index().is_some() {
            let lu = DenseLu::new(model.jacobian(x));
            Some(abs_det(&lu))
        } else {
            None
        };
        Ok(DVector::from_iterator(
            self.len(),
            self.exprs.iter().map(|e| match e {
                Expr::Control { index, sign, bound } => sign * (u[*index] - bound),
                Expr::Quad(q) => q.eval(x),
                Expr::Flow { p, q, limit_sq } => {
                    let (a, b) = (p.eval(x), q.eval(x));
                    a * a + b * b - limit_sq
                }
                Expr::Determinant => -det.unwrap_or(0.0),
            }),
        ))
    }

    /// Solve the state and compute values plus first derivatives.
    pub fn bundle(&self, model: &QuadraticModel, u: &[f64], warm_x: &[f64]) -> Result<DerivativeBundle> {
        let x = self.solve_state(model, u, warm_x)?;
        self.bundle_at(model, u, x)
    }

    /// First derivatives at a solved state `x`.
    pub fn bundle_at(&self, model: &QuadraticModel, u: &[f64], x: Vec<f64>) -> Result<DerivativeBundle> {
        let lu = DenseLu::new(model.jacobian(&x));
        if lu.is_singular(SINGULAR_PIVOT_RATIO) {
            return Err(Error::SingularJacobian);
        }
        let dx_du = state_sensitivity_with(model, &self.layout, &lu);
        let dim = model.state_dim();
        let det = self
            .determinant_index()
            .map(|_| determinant_data(model, &lu));
        let mut dg_dx = DMatrix::zeros(self.len(), dim);
        let mut dg_du = DMatrix::zeros(self.len(), self.layout.dim());
        let mut g = DVector::zeros(self.len());
        for (j, e) in self.exprs.iter().enumerate() {
            match e {
                Expr::Control { index, sign, bound } => {
                    g[j] = sign * (u[*index] - bound);
                    dg_du[(j, *index)] = *sign;
                    continue;
                }
                Expr::Quad(q) => {
                    g[j] = q.eval(&x);
                    let grad = q.gradient(&x);
                    dg_dx.row_mut(j).copy_from(&grad.transpose());
                }
                Expr::Flow { p, q, limit_sq } => {
                    let (a, b) = (p.eval(&x), q.eval(&x));
                    g[j] = a * a + b * b - limit_sq;
                    let grad = p.gradient(&x) * (2.0 * a) + q.gradient(&x) * (2.0 * b);
                    dg_dx.row_mut(j).copy_from(&grad.transpose());
                }
                Expr::Determinant => {
                    let d = det.as_ref().expect("determinant data");
                    g[j] = -d.abs_det;
                    let grad = &d.traces * (-d.abs_det);
                    dg_dx.row_mut(j).copy_from(&grad.transpose());
                }
            }
            let row = dg_dx.row(j) * &dx_du;
            dg_du.row_mut(j).copy_from(&row);
        }
        Ok(DerivativeBundle {
            x,
            g,
            dg_du,
            dx_du,
            dg_dx,
            lu,
            det,
        })
    }

    /// `Σ_j z_j ∇²_x g_j(x)` over state and determinant constraints.
    pub fn state_hessian(&self, bundle: &DerivativeBundle, z: &[f64]) -> DMatrix<f64> {
        let x = &bundle.x;
        let dim = x.len();
        let mut h = DMatrix::zeros(dim, dim);
        for (j, e) in self.exprs.iter().enumerate() {
            let w = z[j];
            if w == 0.0 {
                continue;
            }
            match e {
                Expr::Control { .. } => {}
                Expr::Quad(q) => q.h.add_to_dense(w, &mut h),
                Expr::Flow { p, q, .. } => {
                    for part in [p, q] {
                        let v = part.eval(x);
                        let grad = part.gradient(x);
                        h.ger(2.0 * w, &grad, &grad, 1.0);
                        part.h.add_to_dense(2.0 * w * v, &mut h);
                    }
                }
                Expr::Determinant => {
                    let d = bundle.det.as_ref().expect("determinant data");
                    for m in 0..dim {
                        for k in 0..=m {
                            let tr = trace_product(&d.solved[m], &d.solved[k]);
                            let v = w * d.abs_det * (tr - d.traces[m] * d.traces[k]);
                            h[(m, k)] += v;
                            if m != k {
                                h[(k, m)] += v;
                            }
                        }
                    }
                }
            }
        }
        h
    }

    /// `∇²_{uu}(zᵀ g)` at the bundle's point.
    ///
    /// With `a = Σ z_j ∇_x g_j`, `θ₁ = J⁻ᵀ a` and
    /// `Θ₃ = Σ z_j ∇²_x g_j − Σ_r (θ₁)_r H_r`, the block is `Xᵀ Θ₃ X` where
    /// `X = dx/du`. Control constraints are affine and contribute nothing.
    pub fn lagrangian_hessian(
        &self,
        model: &QuadraticModel,
        bundle: &DerivativeBundle,
        z: &[f64],
    ) -> DMatrix<f64> {
        let m = self.layout.dim();
        if z.iter().all(|&v| v == 0.0) {
            return DMatrix::zeros(m, m);
        }
        let a = bundle.dg_dx.tr_mul(&DVector::from_column_slice(z));
        let theta1 = bundle.lu.solve_transpose(&a);
        let theta3 = self.state_hessian(bundle, z) - model.curvature_contraction(theta1.as_slice());
        let x = &bundle.dx_du;
        let h = x.tr_mul(&(theta3 * x));
        (&h + h.transpose()) * 0.5
    }
}

fn add_scaled(target: &mut Quadratic, other: &Quadratic, s: f64) {
    let mut b = QuadraticBuilder::from_quadratic(target);
    b.add(other, s);
    *target = b.build();
}

fn abs_det(lu: &DenseLu) -> f64 {
    let (sign, log) = lu.det_sign_logabs();
    if sign == 0 {
        0.0
    } else {
        log.min(LOG_DET_CLAMP).exp()
    }
}

fn determinant_data(model: &QuadraticModel, lu: &DenseLu) -> DetData {
    let dim = model.state_dim();
    let solved: Vec<DMatrix<f64>> = (0..dim)
        .map(|k| lu.solve_matrix(&model.jacobian_slope(k)))
        .collect();
    let traces = DVector::from_iterator(dim, solved.iter().map(|s| s.trace()));
    DetData {
        abs_det: abs_det(lu),
        traces,
        solved,
    }
}

/// `tr(A B)`
fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut t = 0.0;
    for i in 0..n {
        for k in 0..n {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

fn state_sensitivity_with(model: &QuadraticModel, layout: &ControlLayout, lu: &DenseLu) -> DMatrix<f64> {
    let dim = model.state_dim();
    let mut sel = DMatrix::zeros(dim, layout.dim());
    for (k, &c) in layout.free_indices().iter().enumerate() {
        sel[(model.controls()[c].equation, k)] = 1.0;
    }
    lu.solve_matrix(&sel)
}

/// `dx/du` at state `x` for the free controls of `layout`.
///
/// Since `∂f/∂u` is minus a selector, `dx/du = J⁻¹ S` with `S` picking the
/// equation each control enters.
pub fn state_sensitivity(model: &QuadraticModel, layout: &ControlLayout, x: &[f64]) -> Result<DMatrix<f64>> {
    let lu = DenseLu::new(model.jacobian(x));
    if lu.is_singular(SINGULAR_PIVOT_RATIO) {
        return Err(Error::SingularJacobian);
    }
    Ok(state_sensitivity_with(model, layout, &lu))
}

/// `d²x / (du_m duᵀ) = −J⁻¹ [Σ_k J_k X_{km}] X` with `X = dx/du`.
pub fn state_sensitivity_second(
    model: &QuadraticModel,
    x: &[f64],
    dx_du: &DMatrix<f64>,
    m: usize,
) -> Result<DMatrix<f64>> {
    let lu = DenseLu::new(model.jacobian(x));
    if lu.is_singular(SINGULAR_PIVOT_RATIO) {
        return Err(Error::SingularJacobian);
    }
    let col = dx_du.column(m).clone_owned();
    let t = model.jacobian_linear(col.as_slice()) * dx_du;
    Ok(-lu.solve_matrix(&t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case_matpower;

    fn case9() -> NetworkCase {
        parse_case_matpower(include_str!("../../../data/case9.m"))
            .unwrap()
            .case
    }

    fn variant1(case: &NetworkCase, model: &QuadraticModel) -> ConstraintSet {
        let layout = ControlLayout::new(vec![1.0, 0.5, 1.0, 0.5, 1.0], vec![1, 3]).unwrap();
        ConstraintSet::build(case, model, layout, ConstraintOptions::default()).unwrap()
    }

    #[test]
    fn layout_round_trip() {
        let l = ControlLayout::new(vec![1.0, 2.0, 3.0], vec![2, 0]).unwrap();
        assert_eq!(l.full(&[9.0, 8.0]), vec![8.0, 2.0, 9.0]);
        assert_eq!(l.restrict(&[8.0, 2.0, 9.0]), vec![9.0, 8.0]);
        assert!(ControlLayout::new(vec![1.0], vec![0, 0]).is_err());
    }

    #[test]
    fn case9_constraint_count() {
        let case = case9();
        let model = QuadraticModel::build(&case).unwrap();
        let set = variant1(&case, &model);
        // 4 control bounds, 12 PQ voltage, 6 gen Q, 2 slack P, 18 flow ends
        assert_eq!(set.len(), 42);
        assert!(set.determinant_index().is_none());
        let groups: Vec<ConstraintGroup> = set.info().iter().map(|i| i.group).collect();
        assert!(groups[..4].iter().all(|g| *g == ConstraintGroup::Control));
        assert!(groups[4..].iter().all(|g| *g == ConstraintGroup::State));
    }

    #[test]
    fn control_rows_are_unit() {
        let case = case9();
        let model = QuadraticModel::build(&case).unwrap();
        let set = variant1(&case, &model);
        let u = [0.8, 0.9];
        let b = set.bundle(&model, &u, &model.flat_start(&set.layout().full(&u))).unwrap();
        assert_eq!(b.dg_du.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert_eq!(b.dg_du.row(1).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0]);
        assert!((b.g[0] - (0.8 - 3.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_multipliers_give_zero_hessian() {
        let case = case9();
        let model = QuadraticModel::build(&case).unwrap();
        let set = variant1(&case, &model);
        let u = [0.8, 0.9];
        let b = set.bundle(&model, &u, &model.flat_start(&set.layout().full(&u))).unwrap();
        let h = set.lagrangian_hessian(&model, &b, &vec![0.0; set.len()]);
        assert_eq!(h, DMatrix::zeros(2, 2));
    }

    #[test]
    fn linear_model_has_no_second_derivative() {
        use crate::case::{ControlSpec, QuadraticBuilder};
        // f = x − u on one bus (two equations)
        let eqs: Vec<Quadratic> = (0..2)
            .map(|k| {
                let mut b = QuadraticBuilder::new(2);
                b.linear(k, 1.0);
                b.build()
            })
            .collect();
        let controls = (0..2)
            .map(|k| ControlSpec {
                kind: ControlKind::ActivePower,
                bus: 0,
                bus_id: 1,
                equation: k,
            })
            .collect();
        let model = QuadraticModel::from_parts(1, eqs, controls).unwrap();
        let layout = ControlLayout::all_free(vec![0.0, 0.0]);
        let x = [0.3, -0.2];
        let dx = state_sensitivity(&model, &layout, &x).unwrap();
        assert_eq!(dx, DMatrix::identity(2, 2));
        for m in 0..2 {
            let d2 = state_sensitivity_second(&model, &x, &dx, m).unwrap();
            assert!(d2.iter().all(|v| *v == 0.0));
        }
    }
}
