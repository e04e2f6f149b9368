//! Constant-coefficient second order operators: coefficient blocks,
//! ellipticity check and the factorized reduced form.
//!
//! A coefficient vector a = (a_gamma)_{|gamma|<=2} is stored as the blocks
//! a2 (n x n real symmetric, with off-diagonal entries halved once per the
//! multi-index convention a_lj = a_{e_l+e_j}/2), a1 (complex n-vector) and
//! the scalar a0. The reduced form carries the factor T with a2 = T T^t,
//! the drift b = T^{-1} a1 and lambda = a0 - (b.b)/4.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Eigenvalues at or below this are rejected by the ellipticity check.
pub const ELLIPTICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GammaCoeff {
    pub gamma: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub n: usize,
    pub coeffs: Vec<GammaCoeff>,
}

#[derive(Debug, Clone)]
pub struct CoefficientVector {
    pub n: usize,
    /// Second-order block, exactly symmetric.
    pub a2: DMatrix<f64>,
    /// First-order coefficients a_{e_j}.
    pub a1: Vec<C64>,
    /// Zeroth-order coefficient a_0.
    pub a0: C64,
}

impl CoefficientVector {
    /// Reads the blocks off a multi-index map.
    pub fn build(n: usize, gamma_map: &BTreeMap<Vec<u32>, C64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        let mut a2 = DMatrix::zeros(n, n);
        let mut a1 = vec![C64::new(0.0, 0.0); n];
        let mut a0 = C64::new(0.0, 0.0);
        for (gamma, &c) in gamma_map {
            if gamma.len() != n || gamma.iter().sum::<u32>() > 2 {
                return Err(Error::BadMultiIndex(gamma.clone()));
            }
            let order: u32 = gamma.iter().sum();
            match order {
                0 => a0 = c,
                1 => {
                    let j = gamma.iter().position(|&g| g == 1).unwrap();
                    a1[j] = c;
                }
                2 => {
                    if c.im != 0.0 {
                        return Err(Error::NonRealPrincipalPart(gamma.clone(), c.im));
                    }
                    if let Some(j) = gamma.iter().position(|&g| g == 2) {
                        a2[(j, j)] = c.re;
                    } else {
                        let mut it = gamma.iter().enumerate().filter(|(_, &g)| g == 1);
                        let l = it.next().unwrap().0;
                        let j = it.next().unwrap().0;
                        a2[(l, j)] = 0.5 * c.re;
                        a2[(j, l)] = 0.5 * c.re;
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(CoefficientVector { n, a2, a1, a0 })
    }

    pub fn from_spec(spec: &OperatorSpec) -> Result<Self> {
        let map: BTreeMap<Vec<u32>, C64> = spec
            .coeffs
            .iter()
            .map(|c| (c.gamma.clone(), C64::new(c.re, c.im)))
            .collect();
        Self::build(spec.n, &map)
    }

    /// Laplace operator in n variables.
    pub fn laplace(n: usize) -> Self {
        CoefficientVector {
            n,
            a2: DMatrix::identity(n, n),
            a1: vec![C64::new(0.0, 0.0); n],
            a0: C64::new(0.0, 0.0),
        }
    }

    /// Helmholtz operator Delta + kappa^2.
    pub fn helmholtz(n: usize, kappa2: C64) -> Self {
        let mut c = Self::laplace(n);
        c.a0 = kappa2;
        c
    }

    /// Laplace plus a constant first-order drift term.
    pub fn drift(n: usize, a1: &[f64]) -> Self {
        let mut c = Self::laplace(n);
        for (j, &v) in a1.iter().enumerate() {
            c.a1[j] = C64::new(v, 0.0);
        }
        c
    }

    /// Reconstructs the multi-index map from the blocks.
    pub fn to_gamma_map(&self) -> BTreeMap<Vec<u32>, C64> {
        let n = self.n;
        let mut m = BTreeMap::new();
        let zero = C64::new(0.0, 0.0);
        if self.a0 != zero {
            m.insert(vec![0; n], self.a0);
        }
        for j in 0..n {
            if self.a1[j] != zero {
                let mut g = vec![0; n];
                g[j] = 1;
                m.insert(g, self.a1[j]);
            }
        }
        for l in 0..n {
            for j in l..n {
                let v = if l == j {
                    self.a2[(l, l)]
                } else {
                    2.0 * self.a2[(l, j)]
                };
                if v != 0.0 {
                    let mut g = vec![0; n];
                    g[l] += 1;
                    g[j] += 1;
                    m.insert(g, C64::new(v, 0.0));
                }
            }
        }
        m
    }

    /// Smallest eigenvalue of a2; fails when it is not safely positive.
    pub fn check_ellipticity(&self) -> Result<f64> {
        let eig = self.a2.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= ELLIPTICITY_TOL {
            return Err(Error::NotElliptic(min));
        }
        Ok(min)
    }

    /// Cholesky-based reduction; see [`ReducedOperator`].
    pub fn reduce(&self) -> Result<ReducedOperator> {
        self.check_ellipticity()?;
        let chol = self
            .a2
            .clone()
            .cholesky()
            .ok_or(Error::NotElliptic(f64::NAN))?;
        let t = chol.l();
        let det_a2 = t.determinant().powi(2);
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or(Error::NotElliptic(f64::NAN))?;
        let a2_inv = self
            .a2
            .clone()
            .try_inverse()
            .ok_or(Error::NotElliptic(f64::NAN))?;
        // b = T^{-1} a1 (complex rhs over the real factor)
        let re = DVector::from_iterator(self.n, self.a1.iter().map(|c| c.re));
        let im = DVector::from_iterator(self.n, self.a1.iter().map(|c| c.im));
        let bre = &t_inv * re;
        let bim = &t_inv * im;
        let b: Vec<C64> = (0..self.n).map(|j| C64::new(bre[j], bim[j])).collect();
        let b_dot_b: C64 = b.iter().map(|v| v * v).sum();
        let lambda = self.a0 - 0.25 * b_dot_b;
        Ok(ReducedOperator {
            coeffs: self.clone(),
            t,
            t_inv,
            a2_inv,
            b,
            lambda,
            det_a2,
        })
    }
}

/// Factorized form: a2 = T T^t with T lower triangular, drift b = T^{-1} a1
/// and reduced zeroth coefficient lambda = a0 - (b.b)/4.
#[derive(Debug, Clone)]
pub struct ReducedOperator {
    pub coeffs: CoefficientVector,
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub a2_inv: DMatrix<f64>,
    pub b: Vec<C64>,
    pub lambda: C64,
    pub det_a2: f64,
}

impl ReducedOperator {
    pub fn n(&self) -> usize {
        self.coeffs.n
    }

    /// y = T^{-1} x for a point given as a 3-slot array (last slot unused in 2d).
    pub fn apply_t_inv(&self, x: &[f64; 3]) -> [f64; 3] {
        let n = self.n();
        let mut y = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                y[i] += self.t_inv[(i, j)] * x[j];
            }
        }
        y
    }

    pub fn apply_a2_inv(&self, x: &[f64; 3]) -> [f64; 3] {
        let n = self.n();
        let mut y = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                y[i] += self.a2_inv[(i, j)] * x[j];
            }
        }
        y
    }

    /// Relative Frobenius residual of T T^t against a2.
    pub fn factor_residual(&self) -> f64 {
        let r = &self.t * self.t.transpose() - &self.coeffs.a2;
        r.norm() / self.coeffs.a2.norm()
    }
}
