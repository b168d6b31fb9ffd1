//! Piece-wise linear paths with fixed parameters `t_0 = 0 < t_1 < … < t_{K+1} = 1`.
//!
//! The objective is `φ(p) = Σ_k w_k ‖d_k‖²` with `d_k = p_k − p_{k−1}` and
//! `w_k = (t_k − t_{k−1})⁻² / (K+1)`. The equalities
//! `c_i = w_i ‖d_i‖² − w_{i+1} ‖d_{i+1}‖²` force equal weighted segment speeds.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `t_k = k / (K+1)` for `k = 0..=K+1`.
pub fn uniform_parameters(k: usize) -> Vec<f64> {
    let n = (k + 1) as f64;
    (0..=k + 1).map(|i| i as f64 / n).collect()
}

/// A discretized path: fixed endpoints, `K` interior corners of dimension `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDiscretization {
    t: Vec<f64>,
    w: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    p: Vec<f64>,
}

/// Sparse description of `D_𝒠`, the `K × mK` Jacobian of the equalities.
///
/// Row `i` (1-based) has blocks `−2w_i d_i` at point `i−1`,
/// `2w_i d_i + 2w_{i+1} d_{i+1}` at point `i` and `−2w_{i+1} d_{i+1}` at point `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityJacobian {
    m: usize,
    /// `b_k = w_k d_k` for `k = 1..=K+1` (stored 0-based).
    b: Vec<DVector<f64>>,
}

/// Symmetric tridiagonal `K × K` matrix; a block operator `T ⊗ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples entries `i` and `i+1`.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.diag.len();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for i in 0..k.saturating_sub(1) {
            m[(i, i + 1)] = self.off[i];
            m[(i + 1, i)] = self.off[i];
        }
        m
    }

    /// `(T ⊗ I_m)` as a dense matrix.
    pub fn kron_identity(&self, m: usize) -> DMatrix<f64> {
        self.to_dense().kronecker(&DMatrix::identity(m, m))
    }
}

/// Diagnostics for the full-rank condition on `D_𝒠`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `min_j ‖b_j‖_∞ / max_j ‖b_j‖_∞`
    pub ratio_b: f64,
    /// `(K+1)⁻¹ ‖Σ q_j‖_∞ / max_j ‖q_j‖_∞` with `q_j = b_j / (b_jᵀ b_j)`
    pub ratio_q: f64,
    pub pass: bool,
}

impl PathDiscretization {
    /// General constructor. `t` has `K+2` entries from 0 to 1; `p` holds the
    /// `K` interior points concatenated.
    pub fn new(t: Vec<f64>, u0: Vec<f64>, u1: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if t.len() < 3 {
            return Err(Error::InvalidInput("need at least one interior point".into()));
        }
        if t[0] != 0.0 || *t.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput("t must start at 0 and end at 1".into()));
        }
        if t.windows(2).any(|s| !(s[1] > s[0])) {
            return Err(Error::InvalidInput("t must be strictly increasing".into()));
        }
        let m = u0.len();
        if m == 0 || u1.len() != m {
            return Err(Error::InvalidInput("endpoint dimensions differ or are empty".into()));
        }
        let k = t.len() - 2;
        if p.len() != k * m {
            return Err(Error::InvalidInput(format!(
                "expected {} path entries, got {}",
                k * m,
                p.len()
            )));
        }
        let w = t
            .windows(2)
            .map(|s| (s[1] - s[0]).powi(-2) / (k + 1) as f64)
            .collect();
        Ok(Self { t, w, u0, u1, p })
    }

    /// Straight line `p_k = u0 + t_k (u1 − u0)`.
    pub fn init_line_path(u0: Vec<f64>, u1: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if u0 == u1 {
            return Err(Error::InvalidInput("endpoints coincide".into()));
        }
        let p = t[1..t.len() - 1]
            .iter()
            .flat_map(|&tk| u0.iter().zip(&u1).map(move |(a, b)| a + tk * (b - a)))
            .collect();
        Self::new(t, u0, u1, p)
    }

    /// Interior point count `K`.
    pub fn k(&self) -> usize {
        self.t.len() - 2
    }

    /// Control dimension `m`.
    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// `w_1..w_{K+1}`, stored 0-based.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    /// Interior points concatenated.
    pub fn points(&self) -> &[f64] {
        &self.p
    }

    pub fn set_points(&mut self, p: Vec<f64>) {
        assert_eq!(p.len(), self.p.len(), "path length changed");
        self.p = p;
    }

    /// Same discretization with other interior points.
    pub fn with_points(&self, p: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.set_points(p);
        out
    }

    /// Corner `k` for `k = 0..=K+1`, endpoints included.
    pub fn corner(&self, k: usize) -> &[f64] {
        let m = self.dim();
        if k == 0 {
            &self.u0
        } else if k == self.k() + 1 {
            &self.u1
        } else {
            &self.p[(k - 1) * m..k * m]
        }
    }

    /// Interior point `i` for `i = 1..=K`.
    pub fn interior(&self, i: usize) -> &[f64] {
        assert!(i >= 1 && i <= self.k());
        self.corner(i)
    }

    /// `d_k = p_k − p_{k−1}` for `k = 1..=K+1`, stored 0-based.
    pub fn differences(&self) -> Vec<DVector<f64>> {
        (1..=self.k() + 1)
            .map(|k| {
                DVector::from_iterator(
                    self.dim(),
                    self.corner(k).iter().zip(self.corner(k - 1)).map(|(a, b)| a - b),
                )
            })
            .collect()
    }

    pub fn objective(&self) -> f64 {
        self.differences()
            .iter()
            .zip(&self.w)
            .map(|(d, w)| w * d.norm_squared())
            .sum()
    }

    /// `∇φ`: block `i` is `2w_i d_i − 2w_{i+1} d_{i+1}`.
    pub fn objective_gradient(&self) -> DVector<f64> {
        let d = self.differences();
        let m = self.dim();
        let mut g = DVector::zeros(self.p.len());
        for i in 0..self.k() {
            let blk = &d[i] * (2.0 * self.w[i]) - &d[i + 1] * (2.0 * self.w[i + 1]);
            g.rows_mut(i * m, m).copy_from(&blk);
        }
        g
    }

    /// `c_𝒠` and `D_𝒠`.
    pub fn equality_constraints(&self) -> (DVector<f64>, EqualityJacobian) {
        let d = self.differences();
        let c = DVector::from_iterator(
            self.k(),
            (0..self.k()).map(|i| {
                self.w[i] * d[i].norm_squared() - self.w[i + 1] * d[i + 1].norm_squared()
            }),
        );
        let b = d.iter().zip(&self.w).map(|(d, w)| d * *w).collect();
        (c, EqualityJacobian { m: self.dim(), b })
    }

    /// `Y` with `∇²φ = 2 Y ⊗ I`.
    pub fn objective_hessian(&self) -> Tridiagonal {
        let k = self.k();
        Tridiagonal {
            diag: (0..k).map(|i| self.w[i] + self.w[i + 1]).collect(),
            off: (0..k.saturating_sub(1)).map(|i| -self.w[i + 1]).collect(),
        }
    }

    /// `T` with `∇²(yᵀ c_𝒠) = T ⊗ I`, using `y_0 = y_{K+1} = 0`.
    pub fn equality_hessian_term(&self, y: &[f64]) -> Tridiagonal {
        let k = self.k();
        assert_eq!(y.len(), k);
        let yy = |j: usize| if j == 0 || j > k { 0.0 } else { y[j - 1] };
        // 1-based: w_j = self.w[j-1]
        let w = |j: usize| self.w[j - 1];
        Tridiagonal {
            diag: (1..=k)
                .map(|j| 2.0 * (w(j) * (yy(j) - yy(j - 1)) + w(j + 1) * (yy(j + 1) - yy(j))))
                .collect(),
            off: (1..k)
                .map(|j| -2.0 * w(j + 1) * (yy(j + 1) - yy(j)))
                .collect(),
        }
    }

    /// Full-rank diagnostics for `D_𝒠`; fails when both ratios are not above `eps`.
    pub fn theorem1_margins(&self, eps: f64) -> Margins {
        let d = self.differences();
        let b: Vec<DVector<f64>> = d.iter().zip(&self.w).map(|(d, w)| d * *w).collect();
        let norms: Vec<f64> = b.iter().map(|v| v.amax()).collect();
        let max_b = norms.iter().cloned().fold(0.0, f64::max);
        let min_b = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_b > 0.0) || !max_b.is_finite() {
            return Margins {
                ratio_b: 0.0,
                ratio_q: 0.0,
                pass: false,
            };
        }
        let q: Vec<DVector<f64>> = b.iter().map(|v| v / v.norm_squared()).collect();
        let max_q = q.iter().map(|v| v.amax()).fold(0.0, f64::max);
        let sum = q.iter().fold(DVector::zeros(self.dim()), |acc, v| acc + v);
        let ratio_b = min_b / max_b;
        let ratio_q = sum.amax() / (self.k() + 1) as f64 / max_q;
        Margins {
            ratio_b,
            ratio_q,
            pass: ratio_b > eps && ratio_q > eps,
        }
    }

    /// Write `k,t_k,<names>` rows for all corners, endpoints included.
    pub fn write_csv<W: Write>(&self, names: &[String], mut out: W) -> Result<()> {
        assert_eq!(names.len(), self.dim());
        write!(out, "k,t_k")?;
        for n in names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for k in 0..=self.k() + 1 {
            write!(out, "{k},{}", fmt17(self.t[k]))?;
            for v in self.corner(k) {
                write!(out, ",{}", fmt17(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Read a path written by [`Self::write_csv`]. Returns the path and the column names.
    pub fn read_csv<R: BufRead>(input: R) -> Result<(Self, Vec<String>)> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty path file".into()))??;
        let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if cols.len() < 3 || cols[0] != "k" || cols[1] != "t_k" {
            return Err(Error::InvalidInput("path header must start with k,t_k".into()));
        }
        let names = cols[2..].to_vec();
        let mut t = Vec::new();
        let mut corners: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("path row {}: {e}", ln + 2)))?;
            if vals.len() != cols.len() {
                return Err(Error::InvalidInput(format!("path row {} has wrong width", ln + 2)));
            }
            if vals[0] != corners.len() as f64 {
                return Err(Error::InvalidInput(format!("path row {} out of order", ln + 2)));
            }
            t.push(vals[1]);
            corners.push(vals[2..].to_vec());
        }
        if corners.len() < 3 {
            return Err(Error::InvalidInput("path needs at least three corners".into()));
        }
        let u1 = corners.pop().unwrap();
        let u0 = corners.remove(0);
        let p = corners.concat();
        Ok((Self::new(t, u0, u1, p)?, names))
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl EqualityJacobian {
    pub fn k(&self) -> usize {
        self.b.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// `w_k d_k` for `k = 1..=K+1` (0-based).
    pub fn b(&self) -> &[DVector<f64>] {
        &self.b
    }

    /// Block of row `i` (1-based) at point `j` (1-based), if structurally non-zero.
    pub fn block(&self, i: usize, j: usize) -> Option<DVector<f64>> {
        if j + 1 == i {
            Some(&self.b[i - 1] * -2.0)
        } else if j == i {
            Some((&self.b[i - 1] + &self.b[i]) * 2.0)
        } else if j == i + 1 {
            Some(&self.b[i] * -2.0)
        } else {
            None
        }
    }

    /// `D_𝒠 v`
    pub fn mul(&self, v: &[f64]) -> DVector<f64> {
        let (k, m) = (self.k(), self.m);
        DVector::from_iterator(
            k,
            (1..=k).map(|i| {
                (i.saturating_sub(1).max(1)..=(i + 1).min(k))
                    .filter_map(|j| self.block(i, j).map(|b| b.dot(&DVector::from_column_slice(&v[(j - 1) * m..j * m]))))
                    .sum::<f64>()
            }),
        )
    }

    /// `D_𝒠ᵀ y`
    pub fn tr_mul(&self, y: &[f64]) -> DVector<f64> {
        let (k, m) = (self.k(), self.m);
        let mut out = DVector::zeros(k * m);
        for i in 1..=k {
            for j in i.saturating_sub(1).max(1)..=(i + 1).min(k) {
                if let Some(b) = self.block(i, j) {
                    let mut seg = out.rows_mut((j - 1) * m, m);
                    seg += b * y[i - 1];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (k, m) = (self.k(), self.m);
        let mut d = DMatrix::zeros(k, k * m);
        for i in 1..=k {
            for j in i.saturating_sub(1).max(1)..=(i + 1).min(k) {
                if let Some(b) = self.block(i, j) {
                    d.view_mut((i - 1, (j - 1) * m), (1, m)).copy_from(&b.transpose());
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_interpolation() {
        let p = PathDiscretization::init_line_path(vec![0.0, 0.0], vec![1.0, 1.0], uniform_parameters(3)).unwrap();
        assert_eq!(p.points(), &[0.25, 0.25, 0.5, 0.5, 0.75, 0.75]);
        assert!(PathDiscretization::init_line_path(vec![1.0], vec![1.0], uniform_parameters(3)).is_err());
    }

    #[test]
    fn default_weights() {
        let t: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64).collect();
        let p = PathDiscretization::init_line_path(vec![0.5, 0.5], vec![1.5, 1.3], t).unwrap();
        assert_eq!(p.k(), 19);
        for w in p.w() {
            assert!((w - 20.0).abs() < 1e-9);
        }
        assert!((p.objective() - 1.64).abs() < 1e-12);
        assert!(p.objective_gradient().amax() < 1e-12);
        let (c, _) = p.equality_constraints();
        assert!(c.amax() < 1e-12);
    }

    #[test]
    fn y_for_uniform_weights() {
        let t = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let p = PathDiscretization::init_line_path(vec![0.0], vec![1.0], t).unwrap();
        // w = 16 / 4 = 4
        let y = p.objective_hessian();
        assert_eq!(y.diag, vec![8.0, 8.0, 8.0]);
        assert_eq!(y.off, vec![-4.0, -4.0]);
        let t: Vec<f64> = vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let p = PathDiscretization::init_line_path(vec![0.0], vec![1.0], t).unwrap();
        assert!(p.w().iter().all(|w| (w - 3.0).abs() < 1e-12));
    }

    #[test]
    fn reversed_segment_fails_margins() {
        let p = PathDiscretization::new(vec![0.0, 0.5, 1.0], vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let m = p.theorem1_margins(1e-6);
        assert_eq!(m.ratio_b, 1.0);
        assert_eq!(m.ratio_q, 0.0);
        assert!(!m.pass);
    }

    #[test]
    fn straight_line_margins_are_one() {
        let p = PathDiscretization::init_line_path(vec![0.0, 1.0], vec![2.0, -1.0], uniform_parameters(5)).unwrap();
        let m = p.theorem1_margins(1e-6);
        assert!((m.ratio_b - 1.0).abs() < 1e-12);
        assert!((m.ratio_q - 1.0).abs() < 1e-12);
        assert!(m.pass);
    }

    #[test]
    fn zero_segment_fails_margins() {
        let p = PathDiscretization::new(uniform_parameters(2), vec![0.0], vec![1.0], vec![0.0, 0.5]).unwrap();
        assert!(!p.theorem1_margins(1e-6).pass);
    }

    #[test]
    fn csv_round_trip() {
        let p = PathDiscretization::new(uniform_parameters(2), vec![0.1, 0.2], vec![1.0, 1.0], vec![0.3, 1.0 / 3.0, 0.7, 0.9]).unwrap();
        let names = vec!["P2".to_string(), "P3".to_string()];
        let mut buf = Vec::new();
        p.write_csv(&names, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,t_k,P2,P3\n0,"));
        let (q, n) = PathDiscretization::read_csv(&buf[..]).unwrap();
        assert_eq!(n, names);
        assert_eq!(q, p);
    }

    #[test]
    fn jacobian_products_match_dense() {
        let p = PathDiscretization::new(uniform_parameters(3), vec![0.0, 0.0], vec![1.0, 2.0], vec![0.3, 0.1, 0.4, 1.2, 0.9, 1.1]).unwrap();
        let (_, dj) = p.equality_constraints();
        let d = dj.to_dense();
        let v = [0.1, -0.2, 0.3, 0.5, -0.7, 1.1];
        let y = [0.4, -1.0, 2.0];
        assert!((d.clone() * DVector::from_column_slice(&v) - dj.mul(&v)).amax() < 1e-13);
        assert!((d.transpose() * DVector::from_column_slice(&y) - dj.tr_mul(&y)).amax() < 1e-13);
        assert_eq!(d[(0, 4)], 0.0);
        assert_eq!(d[(2, 0)], 0.0);
    }
}
