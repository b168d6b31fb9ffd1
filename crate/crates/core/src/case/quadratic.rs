use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

/// Sparse symmetric matrix holding both triangles explicitly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `out += scale * H x`
    pub fn mul_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for &(i, j, v) in &self.entries {
            out[i] += scale * v * x[j];
        }
    }

    /// `xᵀ H x`
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, j, v)| x[i] * v * x[j]).sum()
    }

    /// `m += scale * H`
    pub fn add_to_dense(&self, scale: f64, m: &mut DMatrix<f64>) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += scale * v;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.add_to_dense(1.0, &mut m);
        m
    }

    /// Non-zero entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.0 == i)
            .map(|&(_, j, v)| (j, v))
    }
}

/// `q(x) = ½ xᵀHx + rᵀx + c` with sparse `H` and `r`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Quadratic {
    pub h: SparseSym,
    pub r: Vec<(usize, f64)>,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: &[f64]) -> f64 {
        0.5 * self.h.quad(x) + self.r.iter().map(|&(i, v)| v * x[i]).sum::<f64>() + self.c
    }

    /// `out += scale * ∇q(x)`
    pub fn gradient_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.h.mul_add(x, scale, out);
        for &(i, v) in &self.r {
            out[i] += scale * v;
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        self.gradient_add(x, 1.0, g.as_mut_slice());
        g
    }

    pub fn scaled(&self, s: f64) -> Quadratic {
        Quadratic {
            h: SparseSym {
                dim: self.h.dim,
                entries: self.h.entries.iter().map(|&(i, j, v)| (i, j, s * v)).collect(),
            },
            r: self.r.iter().map(|&(i, v)| (i, s * v)).collect(),
            c: s * self.c,
        }
    }
}

/// Accumulates monomials into a [`Quadratic`].
#[derive(Debug, Clone)]
pub struct QuadraticBuilder {
    dim: usize,
    h: BTreeMap<(usize, usize), f64>,
    r: BTreeMap<usize, f64>,
    c: f64,
}

impl QuadraticBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            h: BTreeMap::new(),
            r: BTreeMap::new(),
            c: 0.0,
        }
    }

    /// Add `coef * x_i * x_j`.
    pub fn product(&mut self, i: usize, j: usize, coef: f64) -> &mut Self {
        if coef == 0.0 {
            return self;
        }
        if i == j {
            *self.h.entry((i, i)).or_default() += 2.0 * coef;
        } else {
            *self.h.entry((i, j)).or_default() += coef;
            *self.h.entry((j, i)).or_default() += coef;
        }
        self
    }

    /// Add `coef * x_i`.
    pub fn linear(&mut self, i: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            *self.r.entry(i).or_default() += coef;
        }
        self
    }

    /// Start from an existing quadratic.
    pub fn from_quadratic(q: &Quadratic) -> Self {
        let mut b = Self::new(q.h.dim);
        b.add(q, 1.0);
        b
    }

    /// Add `s * q`.
    pub fn add(&mut self, q: &Quadratic, s: f64) -> &mut Self {
        for &(i, j, v) in &q.h.entries {
            *self.h.entry((i, j)).or_default() += s * v;
        }
        for &(i, v) in &q.r {
            *self.r.entry(i).or_default() += s * v;
        }
        self.c += s * q.c;
        self
    }

    pub fn constant(&mut self, c: f64) -> &mut Self {
        self.c += c;
        self
    }

    pub fn build(&self) -> Quadratic {
        Quadratic {
            h: SparseSym {
                dim: self.dim,
                entries: self
                    .h
                    .iter()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(&(i, j), &v)| (i, j, v))
                    .collect(),
            },
            r: self
                .r
                .iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|(&i, &v)| (i, v))
                .collect(),
            c: self.c,
        }
    }
}
