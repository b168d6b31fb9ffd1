//! Thin wrapper over a pivoted dense LU with transpose solves, determinant
//! sign/log-magnitude and a cheap reciprocal-condition estimate.

use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Pivoted LU factorization `P A = L U`.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: LU<f64, Dyn, Dyn>,
    l: DMatrix<f64>,
    u: DMatrix<f64>,
    rcond: f64,
}

impl DenseLu {
    pub fn new(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "LU of a non-square matrix");
        let lu = a.lu();
        let l = lu.l();
        let u = lu.u();
        let diag = u.diagonal();
        let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let rcond = if max == 0.0 || diag.is_empty() {
            if diag.is_empty() { 1.0 } else { 0.0 }
        } else {
            min / max
        };
        Self { lu, l, u, rcond }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Ratio of the smallest to largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        self.rcond
    }

    pub fn is_singular(&self, threshold: f64) -> bool {
        !(self.rcond > threshold)
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_mut(&mut x);
        x
    }

    pub fn solve_mut(&self, b: &mut DVector<f64>) {
        self.lu.p().permute_rows(b);
        self.l.solve_lower_triangular_with_diag_mut(b, 1.0);
        self.u.solve_upper_triangular_mut(b);
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.lu.p().permute_rows(&mut x);
        self.l.solve_lower_triangular_with_diag_mut(&mut x, 1.0);
        self.u.solve_upper_triangular_mut(&mut x);
        x
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        // Aᵀ = Uᵀ Lᵀ P
        let mut t = b.clone();
        self.u.tr_solve_upper_triangular_mut(&mut t);
        self.l.tr_solve_lower_triangular_mut(&mut t);
        self.lu.p().inv_permute_rows(&mut t);
        t
    }

    /// Sign of the determinant and `ln |det A|`. Sign is 0 when a pivot is exactly zero.
    pub fn det_sign_logabs(&self) -> (i8, f64) {
        let mut sign: f64 = self.lu.p().determinant();
        let mut log = 0.0;
        for v in self.u.diagonal().iter() {
            if *v == 0.0 {
                return (0, f64::NEG_INFINITY);
            }
            sign *= v.signum();
            log += v.abs().ln();
        }
        (sign as i8, log)
    }
}

/// Sign and log-magnitude of `det a`; sign 0 when numerically singular
/// (pivot ratio at or below `threshold`).
pub fn det_sign_logabs(a: &DMatrix<f64>, threshold: f64) -> (i8, f64) {
    if a.nrows() == 0 {
        return (1, 0.0);
    }
    let lu = DenseLu::new(a.clone());
    if lu.is_singular(threshold) {
        return (0, f64::NEG_INFINITY);
    }
    lu.det_sign_logabs()
}
