//! Fundamental solutions S_a of P[a,D] for the supported operator families,
//! with analytic gradient and Hessian and the principal-part/remainder split.
//!
//! With a2 = T T^t, b = T^{-1} a1 and lambda = a0 - (b.b)/4, the function
//!
//!   S_a(x) = det(a2)^{-1/2} exp(-b.(T^{-1}x)/2) S_lambda(|T^{-1}x|)
//!
//! is a fundamental solution, where S_lambda is the radial fundamental
//! solution of Delta + lambda. Families: lambda = 0 in any dimension
//! (anisotropic Laplace, with drift when a0 = (b.b)/4), n = 3 with any
//! complex lambda (exponential closed form), and n = 2 with real lambda
//! (J0/Y0 for lambda > 0, K0 for lambda < 0).
//!
//! For n = 2 every radial profile splits as S_lambda(r) = A(r) ln r + B(r)
//! with A, B even and analytic; the split drives the logarithmic quadrature
//! in the layer-potential assembly.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operator::{CoefficientVector, ReducedOperator, C64};
use crate::special::{
    bessel_i0, bessel_i1_over_x, bessel_j0, bessel_j1_over_x, bessel_k1, bessel_y1, EULER_GAMMA,
};

const ZERO: C64 = Complex64::new(0.0, 0.0);

/// Tolerance deciding that lambda is exactly zero / exactly real.
const LAMBDA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// lambda = 0: principal part only (times a drift factor when b != 0).
    LaplaceLike,
    /// n = 3, lambda != 0 (complex allowed). kappa = sqrt(lambda), principal branch.
    Helmholtz3d { kappa: C64 },
    /// n = 2, lambda > 0. kappa = sqrt(lambda).
    Helmholtz2d { kappa: f64 },
    /// n = 2, lambda < 0. mu = sqrt(-lambda).
    ModifiedHelmholtz2d { mu: f64 },
}

/// Values of the 2d radial profile split S_lambda = A ln r + B at one radius.
#[derive(Debug, Clone, Copy)]
pub struct Pieces2d {
    pub a: C64,
    /// A'(r)/r (even, finite at r = 0).
    pub ap_over_r: C64,
    pub b: C64,
    /// B'(r)/r (even, finite at r = 0).
    pub bp_over_r: C64,
}

#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    pub red: ReducedOperator,
    pub family: Family,
    /// det(a2)^{-1/2}.
    pub scale: f64,
    /// Surface measure of the unit sphere in n dimensions (2 pi or 4 pi).
    pub s_n: f64,
}

impl FundamentalSolution {
    pub fn new(red: ReducedOperator) -> Result<Self> {
        let n = red.n();
        if n != 2 && n != 3 {
            return Err(Error::UnsupportedDimension(n));
        }
        let lambda = red.lambda;
        let lam_scale = lambda.norm().max(1.0);
        let family = if lambda.norm() <= LAMBDA_TOL {
            Family::LaplaceLike
        } else if n == 3 {
            Family::Helmholtz3d {
                kappa: lambda.sqrt(),
            }
        } else if lambda.im.abs() <= LAMBDA_TOL * lam_scale {
            if lambda.re > 0.0 {
                Family::Helmholtz2d {
                    kappa: lambda.re.sqrt(),
                }
            } else {
                Family::ModifiedHelmholtz2d {
                    mu: (-lambda.re).sqrt(),
                }
            }
        } else {
            return Err(Error::UnsupportedFamily(format!(
                "n = 2 with non-real lambda = {lambda}"
            )));
        };
        let scale = 1.0 / red.det_a2.sqrt();
        let s_n = if n == 2 { 2.0 * PI } else { 4.0 * PI };
        Ok(FundamentalSolution {
            red,
            family,
            scale,
            s_n,
        })
    }

    pub fn from_coeffs(c: &CoefficientVector) -> Result<Self> {
        Self::new(c.reduce()?)
    }

    pub fn n(&self) -> usize {
        self.red.n()
    }

    pub fn lambda(&self) -> C64 {
        match self.family {
            Family::LaplaceLike => ZERO,
            _ => self.red.lambda,
        }
    }

    pub fn has_drift(&self) -> bool {
        self.red.b.iter().any(|v| v.norm() > 0.0)
    }

    /// exp(-b.y/2) for y = T^{-1}x.
    pub fn exp_factor(&self, y: &[f64; 3]) -> C64 {
        if !self.has_drift() {
            return C64::new(1.0, 0.0);
        }
        let mut dot = ZERO;
        for k in 0..self.n() {
            dot += self.red.b[k] * y[k];
        }
        (-0.5 * dot).exp()
    }

    /// Radial profile: (S_lambda, S_lambda') at rho > 0.
    pub fn radial(&self, rho: f64) -> (C64, C64) {
        match &self.family {
            Family::LaplaceLike => {
                if self.n() == 2 {
                    (
                        C64::new(rho.ln() / (2.0 * PI), 0.0),
                        C64::new(1.0 / (2.0 * PI * rho), 0.0),
                    )
                } else {
                    (
                        C64::new(-1.0 / (4.0 * PI * rho), 0.0),
                        C64::new(1.0 / (4.0 * PI * rho * rho), 0.0),
                    )
                }
            }
            Family::Helmholtz3d { kappa } => {
                let e = (C64::i() * kappa * rho).exp();
                let s = -e / (4.0 * PI * rho);
                let s1 = e * (C64::new(1.0, 0.0) - C64::i() * kappa * rho)
                    / (4.0 * PI * rho * rho);
                (s, s1)
            }
            Family::Helmholtz2d { kappa } => {
                let w = kappa * rho;
                let s = C64::new(0.25 * crate::special::bessel_y0(w), -0.25 * bessel_j0(w));
                let s1 = C64::new(
                    -0.25 * kappa * bessel_y1(w),
                    0.25 * kappa * bessel_j1_over_x(w) * w,
                );
                (s, s1)
            }
            Family::ModifiedHelmholtz2d { mu } => {
                let w = mu * rho;
                let s = C64::new(-crate::special::bessel_k0(w) / (2.0 * PI), 0.0);
                let s1 = C64::new(mu * bessel_k1(w) / (2.0 * PI), 0.0);
                (s, s1)
            }
        }
    }

    /// Radial second derivative from the ODE S'' + (n-1)/r S' + lambda S = 0.
    pub fn radial_second(&self, rho: f64, s: C64, s1: C64) -> C64 {
        let nm1 = (self.n() - 1) as f64;
        -nm1 * s1 / rho - self.lambda() * s
    }

    /// Log-coefficient constants of the 2d split: A(0) and B(0).
    pub fn split_constants(&self) -> (C64, C64) {
        let a0 = C64::new(1.0 / (2.0 * PI), 0.0);
        let b0 = match &self.family {
            Family::LaplaceLike => ZERO,
            Family::Helmholtz2d { kappa } => {
                C64::new(((kappa / 2.0).ln() + EULER_GAMMA) / (2.0 * PI), -0.25)
            }
            Family::ModifiedHelmholtz2d { mu } => {
                C64::new(((mu / 2.0).ln() + EULER_GAMMA) / (2.0 * PI), 0.0)
            }
            Family::Helmholtz3d { .. } => unreachable!("2d split on a 3d family"),
        };
        (a0, b0)
    }

    /// The split values at radius rho (n = 2 only).
    pub fn pieces_2d(&self, rho: f64) -> Pieces2d {
        let lambda = self.lambda();
        match &self.family {
            Family::LaplaceLike => Pieces2d {
                a: C64::new(1.0 / (2.0 * PI), 0.0),
                ap_over_r: ZERO,
                b: ZERO,
                bp_over_r: ZERO,
            },
            Family::Helmholtz2d { kappa } => {
                let w = kappa * rho;
                let a = C64::new(bessel_j0(w) / (2.0 * PI), 0.0);
                let ap_over_r =
                    C64::new(-kappa * kappa * bessel_j1_over_x(w) / (2.0 * PI), 0.0);
                self.finish_pieces(rho, lambda, a, ap_over_r)
            }
            Family::ModifiedHelmholtz2d { mu } => {
                let w = mu * rho;
                let a = C64::new(bessel_i0(w) / (2.0 * PI), 0.0);
                let ap_over_r = C64::new(mu * mu * bessel_i1_over_x(w) / (2.0 * PI), 0.0);
                self.finish_pieces(rho, lambda, a, ap_over_r)
            }
            Family::Helmholtz3d { .. } => unreachable!("2d split on a 3d family"),
        }
    }

    fn finish_pieces(&self, rho: f64, lambda: C64, a: C64, ap_over_r: C64) -> Pieces2d {
        let (_, b0) = self.split_constants();
        // series coefficients: A = a0 + a2 r^2 + a4 r^4, B = b0 + b2 r^2 + b4 r^4
        let a0 = C64::new(1.0 / (2.0 * PI), 0.0);
        let a2c = -lambda * a0 / 4.0;
        let a4c = -lambda * a2c / 16.0;
        let b2c = (-4.0 * a2c - lambda * b0) / 4.0;
        let b4c = (-8.0 * a4c - lambda * b2c) / 16.0;
        let wscale = lambda.norm().sqrt() * rho;
        if wscale < 1e-2 {
            let r2 = rho * rho;
            Pieces2d {
                a,
                ap_over_r,
                b: b0 + b2c * r2 + b4c * r2 * r2,
                bp_over_r: 2.0 * b2c + 4.0 * b4c * r2,
            }
        } else {
            let (s, s1) = self.radial(rho);
            let lnr = rho.ln();
            let b = s - a * lnr;
            let bp_over_r = (s1 - ap_over_r * rho * lnr - a / rho) / rho;
            Pieces2d {
                a,
                ap_over_r,
                b,
                bp_over_r,
            }
        }
    }

    fn check_point(&self, x: &[f64; 3]) -> Result<(f64, [f64; 3])> {
        let y = self.red.apply_t_inv(x);
        let rho = norm_n(&y, self.n());
        if rho < 1e-300 {
            return Err(Error::EvalAtOrigin);
        }
        Ok((rho, y))
    }

    pub fn eval(&self, x: &[f64; 3]) -> Result<C64> {
        let (rho, y) = self.check_point(x)?;
        let (s, _) = self.radial(rho);
        Ok(self.scale * self.exp_factor(&y) * s)
    }

    pub fn grad(&self, x: &[f64; 3]) -> Result<[C64; 3]> {
        let (rho, y) = self.check_point(x)?;
        let n = self.n();
        let (s, s1) = self.radial(rho);
        let e = self.exp_factor(&y);
        // grad = scale * e * [ -T^{-t} b/2 * S + T^{-t} y * S'/rho ]
        let mut g = [ZERO; 3];
        for j in 0..n {
            let mut tb = ZERO;
            let mut ty = ZERO;
            for k in 0..n {
                // (T^{-t})_{jk} = (T^{-1})_{kj}
                tb += self.red.t_inv[(k, j)] * self.red.b[k];
                ty += self.red.t_inv[(k, j)] * y[k];
            }
            g[j] = self.scale * e * (-0.5 * tb * s + ty * s1 / rho);
        }
        Ok(g)
    }

    pub fn hess(&self, x: &[f64; 3]) -> Result<[[C64; 3]; 3]> {
        let (rho, y) = self.check_point(x)?;
        let n = self.n();
        let (s, s1) = self.radial(rho);
        let s2 = self.radial_second(rho, s, s1);
        let e = self.exp_factor(&y);
        let yh: Vec<f64> = (0..n).map(|k| y[k] / rho).collect();
        // G_mk in the T^{-1} frame
        let mut gm = [[ZERO; 3]; 3];
        for m in 0..n {
            for k in 0..n {
                let bb = 0.25 * self.red.b[m] * self.red.b[k] * s;
                let cross = -0.5 * (self.red.b[k] * yh[m] + self.red.b[m] * yh[k]) * s1;
                let rad = yh[k] * yh[m] * s2;
                let delta = if m == k { 1.0 } else { 0.0 };
                let tang = (delta - yh[k] * yh[m]) * s1 / rho;
                gm[m][k] = e * (bb + cross + rad + tang);
            }
        }
        // Hess = scale * T^{-t} G T^{-1}
        let mut h = [[ZERO; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for m in 0..n {
                    for k in 0..n {
                        acc += self.red.t_inv[(m, i)] * gm[m][k] * self.red.t_inv[(k, j)];
                    }
                }
                h[i][j] = self.scale * acc;
            }
        }
        Ok(h)
    }

    /// Principal part S_n(T^{-1}x) / sqrt(det a2).
    pub fn principal(&self, x: &[f64; 3]) -> Result<C64> {
        let (rho, _) = self.check_point(x)?;
        let sn = if self.n() == 2 {
            C64::new(rho.ln() / (2.0 * PI), 0.0)
        } else {
            C64::new(-1.0 / (4.0 * PI * rho), 0.0)
        };
        Ok(self.scale * sn)
    }

    pub fn remainder(&self, x: &[f64; 3]) -> Result<C64> {
        Ok(self.eval(x)? - self.principal(x)?)
    }

    /// Leading term of the gradient: (s_n sqrt(det a2))^{-1} |T^{-1}x|^{-n} (a2)^{-1} x.
    pub fn lead_grad(&self, x: &[f64; 3]) -> Result<[C64; 3]> {
        let (rho, _) = self.check_point(x)?;
        let n = self.n();
        let ax = self.red.apply_a2_inv(x);
        let coef = self.scale / (self.s_n * rho.powi(n as i32));
        let mut g = [ZERO; 3];
        for j in 0..n {
            g[j] = C64::new(coef * ax[j], 0.0);
        }
        Ok(g)
    }

    /// P[a,D] S_a at x (zero off the origin, up to roundoff).
    pub fn apply_operator(&self, x: &[f64; 3]) -> Result<C64> {
        let n = self.n();
        let h = self.hess(x)?;
        let g = self.grad(x)?;
        let s = self.eval(x)?;
        let mut acc = self.red.coeffs.a0 * s;
        for l in 0..n {
            acc += self.red.coeffs.a1[l] * g[l];
            for j in 0..n {
                acc += self.red.coeffs.a2[(l, j)] * h[l][j];
            }
        }
        Ok(acc)
    }
}

pub fn norm_n(x: &[f64; 3], n: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..n {
        s += x[k] * x[k];
    }
    s.sqrt()
}
