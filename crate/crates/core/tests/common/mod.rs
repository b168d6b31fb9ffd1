#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use spopf_core::ipm::{BarrierProblem, PointLinearization};
use spopf_core::{parse_case_matpower, ConstraintOptions, ConstraintSet, ControlLayout, NetworkCase, QuadraticModel};

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load_case(name: &str) -> NetworkCase {
    parse_case_matpower(&std::fs::read_to_string(data_path(name)).unwrap()).unwrap().case
}

/// case9 with all five controls free and the determinant constraint on.
pub struct Grid {
    pub case: NetworkCase,
    pub model: QuadraticModel,
    pub set: ConstraintSet,
}

impl Grid {
    pub fn case9_all_free() -> Self {
        let case = load_case("case9.m");
        let model = QuadraticModel::build(&case).unwrap();
        let layout = ControlLayout::all_free(vec![1.0; model.controls().len()]);
        let opts = ConstraintOptions {
            determinant: true,
            ..Default::default()
        };
        let set = ConstraintSet::build(&case, &model, layout, opts).unwrap();
        Self { case, model, set }
    }

    /// Feasible endpoints in model order `[V1², P2, V2², P3, V3²]`.
    pub fn endpoints() -> (Vec<f64>, Vec<f64>) {
        (vec![1.0, 1.2, 1.0, 0.9, 1.0], vec![1.02, 1.5, 1.01, 1.1, 1.03])
    }
}

/// Points outside the disc of radius `r` around `c`: `r² − ‖u − c‖² ≤ 0`.
pub struct DiscObstacle {
    pub c: [f64; 2],
    pub r: f64,
}

impl BarrierProblem for DiscObstacle {
    fn control_dim(&self) -> usize {
        2
    }

    fn constraint_count(&self) -> usize {
        1
    }

    fn evaluate(&self, u: &[f64], _warm: &[f64]) -> spopf_core::Result<(DVector<f64>, Vec<f64>)> {
        let (dx, dy) = (u[0] - self.c[0], u[1] - self.c[1]);
        Ok((DVector::from_element(1, self.r * self.r - dx * dx - dy * dy), Vec::new()))
    }

    fn linearize(&self, u: &[f64], warm: &[f64], z: &[f64]) -> spopf_core::Result<PointLinearization> {
        let (g, state) = self.evaluate(u, warm)?;
        let jac = DMatrix::from_row_slice(1, 2, &[-2.0 * (u[0] - self.c[0]), -2.0 * (u[1] - self.c[1])]);
        Ok(PointLinearization {
            g,
            jac,
            hess: DMatrix::identity(2, 2) * (-2.0 * z[0]),
            state,
        })
    }
}

/// Length of the shortest curve from `a` to `b` around the disc, assuming
/// the segment between them crosses it.
pub fn disc_geodesic(a: [f64; 2], b: [f64; 2], c: [f64; 2], r: f64) -> f64 {
    let va = [a[0] - c[0], a[1] - c[1]];
    let vb = [b[0] - c[0], b[1] - c[1]];
    let (da, db) = (va[0].hypot(va[1]), vb[0].hypot(vb[1]));
    let between = (va[0] * vb[0] + va[1] * vb[1]) / (da * db);
    let arc = between.acos() - (r / da).acos() - (r / db).acos();
    (da * da - r * r).sqrt() + (db * db - r * r).sqrt() + r * arc
}
