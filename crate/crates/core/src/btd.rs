//! Symmetric block-tridiagonal systems with dense square blocks.
//!
//! Factorization is block Gaussian elimination without pivoting across
//! blocks: `S_0 = A_0`, `S_i = A_i − B_i S_{i−1}⁻¹ B_iᵀ`, each Schur block
//! factored by pivoted dense LU. Storage and work are `O(K b²)` and `O(K b³)`.

use nalgebra::{DMatrix, DVector};

use crate::dense::DenseLu;
use crate::error::{Error, Result};

/// Reciprocal 1-norm condition number below which a Schur block is singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct BtdMatrix {
    block: usize,
    diag: Vec<DMatrix<f64>>,
    /// `sub[i]` is the block at row `i+1`, column `i`; the super-diagonal is its transpose.
    sub: Vec<DMatrix<f64>>,
}

impl BtdMatrix {
    /// Zero matrix with `k` diagonal blocks of size `block`.
    pub fn zeros(k: usize, block: usize) -> Self {
        Self {
            block,
            diag: vec![DMatrix::zeros(block, block); k],
            sub: vec![DMatrix::zeros(block, block); k.saturating_sub(1)],
        }
    }

    pub fn from_blocks(diag: Vec<DMatrix<f64>>, sub: Vec<DMatrix<f64>>) -> Result<Self> {
        let block = diag.first().map_or(0, |d| d.nrows());
        if diag.is_empty() || sub.len() + 1 != diag.len() {
            return Err(Error::InvalidInput("need K diagonal and K−1 sub-diagonal blocks".into()));
        }
        if diag.iter().chain(&sub).any(|b| b.nrows() != block || b.ncols() != block) {
            return Err(Error::InvalidInput("inconsistent block sizes".into()));
        }
        Ok(Self { block, diag, sub })
    }

    pub fn block_count(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn dim(&self) -> usize {
        self.block * self.diag.len()
    }

    pub fn diag(&self, i: usize) -> &DMatrix<f64> {
        &self.diag[i]
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.diag[i]
    }

    pub fn sub(&self, i: usize) -> &DMatrix<f64> {
        &self.sub[i]
    }

    pub fn sub_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.sub[i]
    }

    /// `A x`
    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let b = self.block;
        let mut y = DVector::zeros(self.dim());
        for i in 0..self.block_count() {
            let xi = x.rows(i * b, b);
            let mut yi = &self.diag[i] * xi;
            if i > 0 {
                yi += &self.sub[i - 1] * x.rows((i - 1) * b, b);
            }
            if i + 1 < self.block_count() {
                yi += self.sub[i].tr_mul(&x.rows((i + 1) * b, b));
            }
            y.rows_mut(i * b, b).copy_from(&yi);
        }
        y
    }

    /// Assemble the full matrix. Intended for tests and diagnostics only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.block;
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..self.block_count() {
            m.view_mut((i * b, i * b), (b, b)).copy_from(&self.diag[i]);
            if i > 0 {
                m.view_mut((i * b, (i - 1) * b), (b, b)).copy_from(&self.sub[i - 1]);
                m.view_mut(((i - 1) * b, i * b), (b, b))
                    .copy_from(&self.sub[i - 1].transpose());
            }
        }
        m
    }

    pub fn factor(&self) -> Result<BtdFactorization> {
        let mut schur = Vec::with_capacity(self.block_count());
        let mut prev: Option<DenseLu> = None;
        for i in 0..self.block_count() {
            let mut s = self.diag[i].clone();
            if let Some(lu) = &prev {
                let b = &self.sub[i - 1];
                // S_i = A_i − B_i S_{i−1}⁻¹ B_iᵀ
                let t = lu.solve_matrix(&b.transpose());
                s -= b * t;
            }
            let lu = DenseLu::new(s.clone());
            let rc = rcond(&s, &lu);
            if !(rc >= SINGULAR_RCOND) {
                return Err(Error::SingularBlock { block: i, rcond: rc });
            }
            if let Some(p) = prev.replace(lu) {
                schur.push(p);
            }
        }
        schur.extend(prev);
        Ok(BtdFactorization {
            block: self.block,
            schur,
            sub: self.sub.clone(),
        })
    }
}

/// `1 / (‖S‖₁ ‖S⁻¹‖₁)`, or 0 when a pivot vanishes.
fn rcond(s: &DMatrix<f64>, lu: &DenseLu) -> f64 {
    if lu.pivot_ratio() == 0.0 || !lu.pivot_ratio().is_finite() {
        return 0.0;
    }
    let inv = lu.solve_matrix(&DMatrix::identity(s.nrows(), s.ncols()));
    let r = 1.0 / (norm1(s) * norm1(&inv));
    if r.is_finite() {
        r
    } else {
        0.0
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct BtdFactorization {
    block: usize,
    schur: Vec<DenseLu>,
    sub: Vec<DMatrix<f64>>,
}

impl BtdFactorization {
    /// Solve `A X = B` for a matrix of right-hand sides.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.block;
        let k = self.schur.len();
        let mut y = rhs.clone();
        // forward: y_i −= B_i S_{i−1}⁻¹ y_{i−1}
        for i in 1..k {
            let t = self.schur[i - 1].solve_matrix(&y.rows((i - 1) * b, b).clone_owned());
            let upd = &self.sub[i - 1] * t;
            let mut yi = y.rows_mut(i * b, b);
            yi -= upd;
        }
        // backward: x_i = S_i⁻¹ (y_i − B_{i+1}ᵀ x_{i+1})
        for i in (0..k).rev() {
            let mut yi = y.rows(i * b, b).clone_owned();
            if i + 1 < k {
                yi -= self.sub[i].tr_mul(&y.rows((i + 1) * b, b));
            }
            let xi = self.schur[i].solve_matrix(&yi);
            y.rows_mut(i * b, b).copy_from(&xi);
        }
        y
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        let x = self.solve_matrix(&m);
        DVector::from_column_slice(x.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_blocks() {
        let k = 4;
        let m = BtdMatrix::from_blocks(vec![DMatrix::identity(3, 3); k], vec![DMatrix::zeros(3, 3); k - 1]).unwrap();
        let f = m.factor().unwrap();
        let b = DVector::from_fn(12, |i, _| i as f64 - 3.5);
        assert_eq!(f.solve(&b), b);
    }

    #[test]
    fn scaled_identity() {
        let m = BtdMatrix::from_blocks(vec![DMatrix::identity(2, 2) * 2.0; 3], vec![DMatrix::zeros(2, 2); 2]).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.factor().unwrap().solve(&b), b / 2.0);
    }

    #[test]
    fn singular_middle_block_is_named() {
        let mut diag = vec![DMatrix::identity(3, 3); 5];
        diag[2][(1, 1)] = 0.0;
        let m = BtdMatrix::from_blocks(diag, vec![DMatrix::zeros(3, 3); 4]).unwrap();
        match m.factor() {
            Err(Error::SingularBlock { block, .. }) => assert_eq!(block, 2),
            other => panic!("expected singular block, got {other:?}"),
        }
    }

    #[test]
    fn dense_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, 0.1, 0.3]);
        let m = BtdMatrix::from_blocks(vec![a.clone(), a], vec![s]).unwrap();
        let d = m.to_dense();
        assert_eq!(d, d.transpose());
        let x = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        assert!((&d * &x - m.mul(&x)).amax() < 1e-15);
        let sol = m.factor().unwrap().solve(&(&d * &x));
        assert!((sol - x).amax() < 1e-14);
    }
}
