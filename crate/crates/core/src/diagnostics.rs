//! Finite-difference checks of every analytic derivative used by the solver.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::case::{ControlKind, NetworkCase, QuadraticModel};
use crate::constraints::{state_sensitivity_second, ConstraintOptions, ConstraintSet, ControlLayout};
use crate::error::{Error, Result};
use crate::path::PathDiscretization;

pub const FIRST_ORDER_TOL: f64 = 1e-5;
pub const SECOND_ORDER_TOL: f64 = 1e-4;

/// Deliberate corruption of one analytic quantity, to prove the checks bite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Hessian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub points: usize,
    /// Finite-difference step.
    pub step: f64,
    pub constraints: ConstraintOptions,
    pub fault: Option<Fault>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 20,
            step: 1e-6,
            constraints: ConstraintOptions {
                flow_limits: true,
                angle_limits: true,
                determinant: true,
            },
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyError {
    pub family: String,
    pub order: u8,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub points: usize,
    pub families: Vec<FamilyError>,
}

impl DerivativeReport {
    pub fn pass(&self) -> bool {
        self.families.iter().all(|f| f.pass)
    }

    fn record(&mut self, family: &str, order: u8, err: f64) {
        let threshold = if order == 1 { FIRST_ORDER_TOL } else { SECOND_ORDER_TOL };
        match self.families.iter_mut().find(|f| f.family == family) {
            Some(f) => {
                f.max_rel_error = f.max_rel_error.max(err);
                f.pass = f.max_rel_error <= f.threshold;
            }
            None => self.families.push(FamilyError {
                family: family.to_string(),
                order,
                max_rel_error: err,
                threshold,
                pass: err <= threshold,
            }),
        }
    }
}

/// `max |a − f| / max(max |a|, max |f|)`, or 0 when both vanish.
pub fn relative_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    let scale = analytic.amax().max(fd.amax());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - fd).amax() / scale
    }
}

/// Central differences of a matrix-valued map, one slice per coordinate.
fn central<F>(u: &[f64], h: f64, mut f: F) -> Result<Vec<DMatrix<f64>>>
where
    F: FnMut(&[f64]) -> Result<DMatrix<f64>>,
{
    let mut out = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[k] += h;
        dn[k] -= h;
        out.push((f(&up)? - f(&dn)?) / (2.0 * h));
    }
    Ok(out)
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// `[∂a/∂u_0, ∂a/∂u_1, …]` for column vectors `a`, side by side.
fn hstack(cols: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, |c| c.nrows());
    let mut m = DMatrix::zeros(rows, cols.iter().map(|c| c.ncols()).sum());
    let mut j = 0;
    for c in cols {
        m.view_mut((0, j), (rows, c.ncols())).copy_from(c);
        j += c.ncols();
    }
    m
}

/// Control box of a generator control: `[Pmin, Pmax]` or `[Vmin², Vmax²]`.
fn control_bounds(case: &NetworkCase, model: &QuadraticModel, c: usize) -> (f64, f64) {
    let spec = &model.controls()[c];
    match spec.kind {
        ControlKind::ActivePower => case
            .generator_at(spec.bus)
            .map_or((0.0, 1.0), |g| (g.pmin, g.pmax)),
        ControlKind::VoltageSquared => {
            let b = &case.buses[spec.bus];
            (b.vmin * b.vmin, b.vmax * b.vmax)
        }
    }
}

/// Sample `count` strictly feasible points (free controls, state) around the
/// centre of the control box.
pub fn random_feasible_points(
    case: &NetworkCase,
    model: &QuadraticModel,
    set: &ConstraintSet,
    rng: &mut StdRng,
    count: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let free = set.layout().free_indices().to_vec();
    let bounds: Vec<(f64, f64)> = free.iter().map(|&c| control_bounds(case, model, c)).collect();
    let centre: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut points = Vec::with_capacity(count);
    let attempts = 500 * count.max(1);
    for _ in 0..attempts {
        if points.len() == count {
            break;
        }
        let shrink: f64 = rng.random_range(0.0..0.5);
        let u: Vec<f64> = bounds
            .iter()
            .zip(&centre)
            .map(|((lo, hi), c)| c + shrink * (rng.random_range(*lo..=*hi) - c))
            .collect();
        let x0 = model.flat_start(&set.layout().full(&u));
        if let Ok(e) = set.eval(model, &u, &x0) {
            if e.g.max() < -1e-4 {
                points.push((u, e.x));
            }
        }
    }
    if points.len() < count {
        return Err(Error::InvalidInput(format!(
            "found only {} of {count} strictly feasible points",
            points.len()
        )));
    }
    Ok(points)
}

/// Check the power-flow and constraint derivatives at one solved point.
pub fn check_point(
    model: &QuadraticModel,
    set: &ConstraintSet,
    u: &[f64],
    x: &[f64],
    z: &[f64],
    step: f64,
    fault: Option<Fault>,
    report: &mut DerivativeReport,
) -> Result<()> {
    let b = set.bundle_at(model, u, x.to_vec())?;
    let m = u.len();
    let state = |v: &[f64]| set.solve_state(model, v, x);

    let fd = central(u, step, |v| Ok(column(&DVector::from_vec(state(v)?))))?;
    report.record("dx/du", 1, relative_error(&b.dx_du, &hstack(&fd)));

    let fd = central(u, step, |v| Ok(column(&set.values_at(model, v, &state(v)?)?)))?;
    let fd = hstack(&fd);
    let det = set.determinant_index();
    let rows: Vec<usize> = (0..set.len()).filter(|&j| Some(j) != det).collect();
    let pick = |a: &DMatrix<f64>, r: &[usize]| a.select_rows(r.iter());
    report.record("dg/du", 1, relative_error(&pick(&b.dg_du, &rows), &pick(&fd, &rows)));
    if let Some(d) = det {
        report.record("d|det J|/du", 1, relative_error(&pick(&b.dg_du, &[d]), &pick(&fd, &[d])));
    }

    for k in 0..m {
        let analytic = state_sensitivity_second(model, x, &b.dx_du, k)?;
        let fd = central(u, step, |v| {
            let xs = state(v)?;
            Ok(column(&set.bundle_at(model, v, xs)?.dx_du.column(k).clone_owned()))
        })?;
        report.record("d2x/du2", 2, relative_error(&analytic, &hstack(&fd)));
    }

    let zv = DVector::from_column_slice(z);
    let mut h = set.lagrangian_hessian(model, &b, z);
    if fault == Some(Fault::Hessian) {
        let bump = 1e-2 * h.amax().max(1.0);
        h[(0, 0)] += bump;
    }
    let fd = central(u, step, |v| {
        let bv = set.bundle_at(model, v, state(v)?)?;
        Ok(column(&bv.dg_du.tr_mul(&zv)))
    })?;
    report.record("hess(z'g)", 2, relative_error(&h, &hstack(&fd)));
    Ok(())
}

/// Check the path objective and equality-constraint derivatives on a random
/// path with random spacing.
pub fn check_path(rng: &mut StdRng, m: usize, k: usize, step: f64, report: &mut DerivativeReport) -> Result<()> {
    let mut cuts: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..0.98)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let kk = cuts.len();
    let mut t = vec![0.0];
    t.extend(cuts);
    t.push(1.0);
    let u0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u1: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p: Vec<f64> = (0..kk * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..kk).map(|_| rng.random_range(-1.0..1.0)).collect();
    let path = PathDiscretization::new(t, u0, u1, p.clone())?;
    let at = |q: &[f64]| path.with_points(q.to_vec());

    let fd = central(&p, step, |q| Ok(DMatrix::from_element(1, 1, at(q).objective())))?;
    let grad = column(&path.objective_gradient()).transpose();
    report.record("grad phi", 1, relative_error(&grad, &hstack(&fd)));

    let fd = central(&p, step, |q| Ok(column(&at(q).equality_constraints().0)))?;
    let (_, de) = path.equality_constraints();
    report.record("D_E", 1, relative_error(&de.to_dense(), &hstack(&fd)));

    let fd = central(&p, step, |q| Ok(column(&at(q).objective_gradient())))?;
    let hess = path.objective_hessian().kron_identity(m) * 2.0;
    report.record("hess phi", 2, relative_error(&hess, &hstack(&fd)));

    let fd = central(&p, step, |q| Ok(column(&at(q).equality_constraints().1.tr_mul(&y))))?;
    let hy = path.equality_hessian_term(&y).kron_identity(m);
    report.record("hess y'c_E", 2, relative_error(&hy, &hstack(&fd)));
    Ok(())
}

/// All derivative checks at `opts.points` random strictly feasible points of
/// `case` with every generator control free.
pub fn check_derivatives(case: &NetworkCase, opts: &CheckOptions) -> Result<DerivativeReport> {
    let model = QuadraticModel::build(case)?;
    let base: Vec<f64> = (0..model.controls().len())
        .map(|c| {
            let (lo, hi) = control_bounds(case, &model, c);
            0.5 * (lo + hi)
        })
        .collect();
    let set = ConstraintSet::build(case, &model, ControlLayout::all_free(base), opts.constraints)?;
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let points = random_feasible_points(case, &model, &set, &mut rng, opts.points)?;
    let mut report = DerivativeReport {
        points: points.len(),
        families: Vec::new(),
    };
    for (u, x) in &points {
        let z: Vec<f64> = (0..set.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        check_point(&model, &set, u, x, &z, opts.step, opts.fault, &mut report)?;
        check_path(&mut rng, u.len(), 6, opts.step, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_is_scale_free() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 2.2]);
        assert!((relative_error(&a, &f) - 0.2 / 2.2).abs() < 1e-15);
        assert!((relative_error(&(a.clone() * 1e6), &(f * 1e6)) - 0.2 / 2.2).abs() < 1e-12);
        assert_eq!(relative_error(&(a.clone() * 0.0), &(a * 0.0)), 0.0);
    }

    #[test]
    fn path_family_passes() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut report = DerivativeReport { points: 1, families: Vec::new() };
        check_path(&mut rng, 3, 5, 1e-6, &mut report).unwrap();
        assert_eq!(report.families.len(), 4);
        assert!(report.pass(), "{report:?}");
    }
}
