//! Potential-type kernel classes: sampled norms for the K_s and
//! K_{s1,s2,s3} families, the sharp class with truncated-integral component,
//! the difference kernel Xi[mu], and checkers for the product and embedding
//! inequalities of the class calculus.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{dist, BoundarySurface, Density, Point};
use crate::operator::C64;
use crate::quadrature::integrate_truncated;

#[derive(Clone)]
pub enum KernelEval {
    /// Two-point function of ambient coordinates.
    Ambient(Arc<dyn Fn(&Point, &Point) -> C64 + Send + Sync>),
    /// Node-indexed evaluator (for kernels built from nodal data).
    Nodal(Arc<dyn Fn(usize, usize) -> C64 + Send + Sync>),
}

/// A two-point kernel on (dOmega)^2 minus the diagonal together with its
/// declared class exponents.
#[derive(Clone)]
pub struct KernelHandle {
    pub eval: KernelEval,
    pub exponents: (f64, f64, f64),
    pub homogeneity: Option<f64>,
    pub odd: Option<bool>,
}

impl KernelHandle {
    pub fn at(&self, surface: &BoundarySurface, i: usize, j: usize) -> C64 {
        match &self.eval {
            KernelEval::Ambient(f) => f(&surface.nodes[i], &surface.nodes[j]),
            KernelEval::Nodal(f) => f(i, j),
        }
    }

    pub fn ambient(
        f: Arc<dyn Fn(&Point, &Point) -> C64 + Send + Sync>,
        exponents: (f64, f64, f64),
    ) -> Self {
        KernelHandle {
            eval: KernelEval::Ambient(f),
            exponents,
            homogeneity: None,
            odd: None,
        }
    }

    /// Convolution kernel k(x - y) for k positively homogeneous of degree -h,
    /// declared in the standard class (h, h+1, 1).
    pub fn convolution(k: Arc<dyn Fn(&Point) -> C64 + Send + Sync>, h: f64, odd: bool) -> Self {
        let f = move |x: &Point, y: &Point| k(&[x[0] - y[0], x[1] - y[1], x[2] - y[2]]);
        KernelHandle {
            eval: KernelEval::Ambient(Arc::new(f)),
            exponents: (h, h + 1.0, 1.0),
            homogeneity: Some(-h),
            odd: Some(odd),
        }
    }

    /// Xi[mu](x, y) = mu(x) - mu(y), declared in (-alpha, 0, alpha).
    pub fn xi(mu: &Density) -> Self {
        let values = mu.values.clone();
        let alpha = mu.holder_exponent.unwrap_or(1.0);
        KernelHandle {
            eval: KernelEval::Nodal(Arc::new(move |i, j| values[i] - values[j])),
            exponents: (-alpha, 0.0, alpha),
            homogeneity: None,
            odd: None,
        }
    }
}

/// Where a sup was attained, for report auditing.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Attained {
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelNormReport {
    pub exponents: (f64, f64, f64),
    /// sup |x-y|^{s1} |K(x,y)| over sampled pairs.
    pub first_component: f64,
    pub first_attained: Attained,
    /// sup |x'-y|^{s2}/|x'-x''|^{s3} |K(x',y)-K(x'',y)| over admissible triples.
    pub second_component: f64,
    pub second_attained: Attained,
    /// sup over (x, r) of |truncated integral| (sharp norms only).
    pub sharp_component: Option<f64>,
    pub sharp_attained_radius: Option<f64>,
    pub pair_count: usize,
    pub triple_count: usize,
    pub seed: u64,
}

impl KernelNormReport {
    /// The class norm: sum of the two sup components (plus the truncated
    /// component for sharp norms).
    pub fn class_norm(&self) -> f64 {
        self.first_component + self.second_component + self.sharp_component.unwrap_or(0.0)
    }
}

/// sup over sampled pairs of |K(x,y)| |x-y|^s.
pub fn norm_ks(
    surface: &BoundarySurface,
    kernel: &KernelHandle,
    s: f64,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &(i, j) in pairs {
        for (a, b) in [(i, j), (j, i)] {
            let v = kernel.at(surface, a, b);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFiniteKernelValue(a, b));
            }
            let d = dist(&surface.nodes[a], &surface.nodes[b]);
            if d > 0.0 {
                best = best.max(v.norm() * d.powf(s));
            }
        }
    }
    Ok(best)
}

/// Admissible triples (x', x'', y) with y outside B(x', 2|x'-x''|):
/// x' uniform over nodes, x'' drawn from rotating dyadic separation bands,
/// y uniform over the admissible nodes. Fully deterministic in the seed.
pub fn sample_triples(
    surface: &BoundarySurface,
    count: usize,
    seed: u64,
) -> Vec<(usize, usize, usize)> {
    let n = surface.len();
    let span = surface.span();
    let min_sep = surface.min_spacing();
    let bands = ((span / min_sep).log2().ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 50 * count {
        attempts += 1;
        let xp = rng.gen_range(0..n);
        let band = attempts % bands;
        let lo = span * 0.5f64.powi(band as i32 + 1);
        let hi = span * 0.5f64.powi(band as i32);
        let mut xpp = None;
        for _ in 0..60 {
            let c = rng.gen_range(0..n);
            let d = dist(&surface.nodes[xp], &surface.nodes[c]);
            if c != xp && d >= lo && d < hi {
                xpp = Some(c);
                break;
            }
        }
        let Some(xpp) = xpp else { continue };
        let ball = 2.0 * dist(&surface.nodes[xp], &surface.nodes[xpp]);
        for _ in 0..60 {
            let y = rng.gen_range(0..n);
            if y != xp && y != xpp && dist(&surface.nodes[xp], &surface.nodes[y]) >= ball {
                out.push((xp, xpp, y));
                break;
            }
        }
    }
    out
}

/// Both sup components of the K_{s1,s2,s3} norm over the given samples.
pub fn norm_ks1s2s3(
    surface: &BoundarySurface,
    kernel: &KernelHandle,
    exponents: (f64, f64, f64),
    pairs: &[(usize, usize)],
    triples: &[(usize, usize, usize)],
    seed: u64,
) -> Result<KernelNormReport> {
    let (s1, s2, s3) = exponents;
    let mut first: f64 = 0.0;
    let mut first_at = (0usize, 0usize);
    for &(i, j) in pairs {
        for (a, b) in [(i, j), (j, i)] {
            let v = kernel.at(surface, a, b);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFiniteKernelValue(a, b));
            }
            let d = dist(&surface.nodes[a], &surface.nodes[b]);
            if d > 0.0 {
                let q = v.norm() * d.powf(s1);
                if q > first {
                    first = q;
                    first_at = (a, b);
                }
            }
        }
    }
    let mut second: f64 = 0.0;
    let mut second_at = (0usize, 0usize, 0usize);
    for &(xp, xpp, y) in triples {
        let v1 = kernel.at(surface, xp, y);
        let v2 = kernel.at(surface, xpp, y);
        let dy = dist(&surface.nodes[xp], &surface.nodes[y]);
        let dxx = dist(&surface.nodes[xp], &surface.nodes[xpp]);
        if dxx <= 0.0 || dy <= 0.0 {
            continue;
        }
        let q = (v1 - v2).norm() * dy.powf(s2) / dxx.powf(s3);
        if q > second {
            second = q;
            second_at = (xp, xpp, y);
        }
    }
    Ok(KernelNormReport {
        exponents,
        first_component: first,
        first_attained: Attained {
            indices: vec![first_at.0, first_at.1],
            value: first,
        },
        second_component: second,
        second_attained: Attained {
            indices: vec![second_at.0, second_at.1, second_at.2],
            value: second,
        },
        sharp_component: None,
        sharp_attained_radius: None,
        pair_count: pairs.len(),
        triple_count: triples.len(),
        seed,
    })
}

/// Adds the sup over (x, r) of |int_{dOmega \ B(x,r)} K| to the class norm.
pub fn sharp_norm(
    surface: &BoundarySurface,
    kernel: &KernelHandle,
    exponents: (f64, f64, f64),
    radii: &[f64],
    pairs: &[(usize, usize)],
    triples: &[(usize, usize, usize)],
    seed: u64,
) -> Result<KernelNormReport> {
    let mut report = norm_ks1s2s3(surface, kernel, exponents, pairs, triples, seed)?;
    let k = |i: usize, j: usize| kernel.at(surface, i, j);
    let mut best: f64 = 0.0;
    let mut best_r = radii.first().copied().unwrap_or(0.0);
    for i in 0..surface.len() {
        for &r in radii {
            let v = integrate_truncated(surface, &k, i, r).norm();
            if v > best {
                best = v;
                best_r = r;
            }
        }
    }
    report.sharp_component = Some(best);
    report.sharp_attained_radius = Some(best_r);
    Ok(report)
}

/// Counts sampled triples violating the product inequality
/// |K1 K2(x',y) - K1 K2(x'',y)| <=
///   N1 N2 ( d^{s3}/dy^{s2+t1} + 2^{|s1|} d^{t3}/dy^{t2+s1} )
/// with the sampled norms N1, N2 inflated by `inflation`.
pub fn check_product_inequality(
    surface: &BoundarySurface,
    k1: &KernelHandle,
    n1: f64,
    k2: &KernelHandle,
    n2: f64,
    triples: &[(usize, usize, usize)],
    inflation: f64,
) -> usize {
    let (s1, s2, s3) = k1.exponents;
    let (t1, t2, t3) = k2.exponents;
    let mut violations = 0;
    for &(xp, xpp, y) in triples {
        let lhs = (k1.at(surface, xp, y) * k2.at(surface, xp, y)
            - k1.at(surface, xpp, y) * k2.at(surface, xpp, y))
        .norm();
        let d = dist(&surface.nodes[xp], &surface.nodes[xpp]);
        let dy = dist(&surface.nodes[xp], &surface.nodes[y]);
        let rhs = (inflation * n1)
            * (inflation * n2)
            * (d.powf(s3) / dy.powf(s2 + t1)
                + 2.0f64.powf(s1.abs()) * d.powf(t3) / dy.powf(t2 + s1));
        if lhs > rhs {
            violations += 1;
        }
    }
    violations
}

/// Per-sample embedding inequality: lowering (s2, s3) by a > 0 can only
/// shrink the difference quotient, by at least 2^{-a} on admissible triples.
pub fn embedding_violations(
    surface: &BoundarySurface,
    kernel: &KernelHandle,
    exponents: (f64, f64, f64),
    a: f64,
    triples: &[(usize, usize, usize)],
) -> usize {
    let (_s1, s2, s3) = exponents;
    let mut violations = 0;
    for &(xp, xpp, y) in triples {
        let diff = (kernel.at(surface, xp, y) - kernel.at(surface, xpp, y)).norm();
        let d = dist(&surface.nodes[xp], &surface.nodes[xpp]);
        let dy = dist(&surface.nodes[xp], &surface.nodes[y]);
        if d <= 0.0 || dy <= 0.0 {
            continue;
        }
        let q = diff * dy.powf(s2) / d.powf(s3);
        let q_low = diff * dy.powf(s2 - a) / d.powf(s3 - a);
        if q_low > 2.0f64.powf(-a) * q * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    violations
}

/// Frozen-direction quotient: max over admissible triples of
/// |F(dir(x',y), |x'-y|) - F(dir(x'',y), |x''-y|)| |x'-y| / |x'-x''|.
pub fn frozen_direction_quotient(
    surface: &BoundarySurface,
    f: &dyn Fn(&Point, f64) -> f64,
    triples: &[(usize, usize, usize)],
) -> f64 {
    let mut best: f64 = 0.0;
    for &(xp, xpp, y) in triples {
        let dir_r = |a: usize| {
            let d = [
                surface.nodes[a][0] - surface.nodes[y][0],
                surface.nodes[a][1] - surface.nodes[y][1],
                surface.nodes[a][2] - surface.nodes[y][2],
            ];
            let r = crate::geometry::norm(&d);
            ([d[0] / r, d[1] / r, d[2] / r], r)
        };
        let (th1, r1) = dir_r(xp);
        let (th2, r2) = dir_r(xpp);
        let num = (f(&th1, r1) - f(&th2, r2)).abs();
        let dxx = dist(&surface.nodes[xp], &surface.nodes[xpp]);
        if dxx > 0.0 {
            best = best.max(num * r1 / dxx);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_curve, sample_pairs, PairPolicy, Shape};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn circle(n: usize) -> BoundarySurface {
        make_curve(Shape::Circle { r: 1.0 }, n).unwrap()
    }

    #[test]
    fn norm_ks_examples() {
        let s = circle(128);
        let pairs = sample_pairs(&s, PairPolicy::All);
        // |x-y|^{-1} against s = 1 gives exactly 1
        let k = KernelHandle::ambient(
            Arc::new(|x: &Point, y: &Point| Complex64::new(1.0 / dist(x, y), 0.0)),
            (1.0, 2.0, 1.0),
        );
        let v = norm_ks(&s, &k, 1.0, &pairs).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        // zero kernel
        let z = KernelHandle::ambient(
            Arc::new(|_: &Point, _: &Point| Complex64::new(0.0, 0.0)),
            (0.0, 0.0, 0.0),
        );
        assert_eq!(norm_ks(&s, &z, 1.0, &pairs).unwrap(), 0.0);
    }

    #[test]
    fn laplace_double_layer_kernel_is_bounded() {
        // on the unit circle the kernel is the constant 1/(4 pi); the sampled
        // K_0 norm must stabilize under refinement
        let norm_at = |n: usize| -> f64 {
            let s = circle(n);
            let normals = s.normals.clone();
            let nodes = s.nodes.clone();
            let k = KernelHandle {
                eval: KernelEval::Nodal(Arc::new(move |i, j| {
                    let z = [nodes[i][0] - nodes[j][0], nodes[i][1] - nodes[j][1], 0.0];
                    let d2 = z[0] * z[0] + z[1] * z[1];
                    Complex64::new(
                        -(normals[j][0] * z[0] + normals[j][1] * z[1]) / (2.0 * PI * d2),
                        0.0,
                    )
                })),
                exponents: (0.0, 1.0, 1.0),
                homogeneity: None,
                odd: None,
            };
            let pairs = sample_pairs(&s, PairPolicy::Auto { seed: 11 });
            norm_ks(&s, &k, 0.0, &pairs).unwrap()
        };
        let a = norm_at(128);
        let b = norm_at(256);
        assert!((a - 1.0 / (4.0 * PI)).abs() < 1e-12);
        assert!(b <= 1.02 * a);
    }

    #[test]
    fn xi_kernel_properties() {
        let s = circle(128);
        let pairs = sample_pairs(&s, PairPolicy::All);
        let triples = sample_triples(&s, 2000, 4);
        // constant density: zero kernel
        let xi = KernelHandle::xi(&Density::one(&s));
        let rep = norm_ks1s2s3(&s, &xi, xi.exponents, &pairs, &triples, 4).unwrap();
        assert_eq!(rep.first_component, 0.0);
        assert_eq!(rep.second_component, 0.0);
        // mu = x1: both components bounded by the Lipschitz constant 1
        let xi = KernelHandle::xi(&Density::coordinate(&s, 0));
        assert_eq!(xi.exponents, (-1.0, 0.0, 1.0));
        let rep = norm_ks1s2s3(&s, &xi, xi.exponents, &pairs, &triples, 4).unwrap();
        assert!(rep.first_component <= 1.0 + 1e-12);
        assert!(rep.second_component <= 1.0 + 1e-12);
        assert!(rep.first_component > 0.9);
        // antisymmetry, exact
        for &(i, j) in pairs.iter().take(200) {
            assert_eq!(xi.at(&s, i, j), -xi.at(&s, j, i));
        }
    }

    #[test]
    fn convolution_membership_first_component() {
        // k(z) = z1 z2 / |z|^3 is homogeneous of degree -1 (= -h): the first
        // component of the (h, h+1, 1) norm is bounded by max_{|th|=1} |k|.
        let s = make_curve(Shape::Ellipse { a: 2.0, b: 1.0 }, 128).unwrap();
        let k = KernelHandle::convolution(
            Arc::new(|z: &Point| {
                let d = crate::geometry::norm(z);
                Complex64::new(z[0] * z[1] / d.powi(3), 0.0)
            }),
            1.0,
            false,
        );
        let pairs = sample_pairs(&s, PairPolicy::All);
        let first = norm_ks(&s, &k, 1.0, &pairs).unwrap();
        // max over the unit circle of |th1 th2| = 1/2
        assert!(first <= 0.5 + 1e-13);
        assert!(first > 0.45);
    }

    #[test]
    fn sharp_norm_examples() {
        let s = make_curve(Shape::Ellipse { a: 2.0, b: 1.0 }, 256).unwrap();
        let pairs = sample_pairs(&s, PairPolicy::Auto { seed: 1 });
        let triples = sample_triples(&s, 1000, 1);
        // zero kernel
        let z = KernelHandle::ambient(
            Arc::new(|_: &Point, _: &Point| Complex64::new(0.0, 0.0)),
            (0.0, 0.0, 0.0),
        );
        let radii: Vec<f64> = (0..20).map(|k| 4.0 * 0.7f64.powi(k)).collect();
        let rep = sharp_norm(&s, &z, (0.0, 0.0, 0.0), &radii, &pairs, &triples, 1).unwrap();
        assert_eq!(rep.sharp_component, Some(0.0));
        // constant kernel: the truncated integral at the smallest radius is
        // essentially the surface measure
        let one = KernelHandle::ambient(
            Arc::new(|_: &Point, _: &Point| Complex64::new(1.0, 0.0)),
            (0.0, 0.0, 0.0),
        );
        let mut radii = radii.clone();
        radii.push(1e-9);
        let rep = sharp_norm(&s, &one, (0.0, 0.0, 0.0), &radii, &pairs, &triples, 1).unwrap();
        let measure: f64 = s.weights.iter().sum();
        let sharp = rep.sharp_component.unwrap();
        assert!((sharp - measure).abs() < 2.0 * measure / s.len() as f64);
    }

    #[test]
    fn odd_homogeneous_sharp_component_stable() {
        // z1^3/|z|^4 is odd and homogeneous of degree -(n-1) in 2d, so its
        // truncated integrals stay uniformly bounded. (Note z1 z2/|z|^3 is
        // even despite the product: its truncated integrals diverge like ln r
        // and are excluded from the odd-kernel bound.)
        let sup_for = |n: usize| -> f64 {
            let s = make_curve(Shape::Ellipse { a: 2.0, b: 1.0 }, n).unwrap();
            let k = KernelHandle::convolution(
                Arc::new(|z: &Point| {
                    let d2 = z[0] * z[0] + z[1] * z[1];
                    Complex64::new(z[0].powi(3) / (d2 * d2), 0.0)
                }),
                1.0,
                true,
            );
            let rmin = s.min_spacing();
            let rmax = s.span();
            let radii: Vec<f64> = (0..=40)
                .map(|q| rmin * (rmax / rmin).powf(q as f64 / 40.0))
                .collect();
            let kf = |i: usize, j: usize| k.at(&s, i, j);
            let mut best: f64 = 0.0;
            for i in 0..s.len() {
                for &r in &radii {
                    best = best.max(integrate_truncated(&s, &kf, i, r).norm());
                }
            }
            best
        };
        let a = sup_for(128);
        let b = sup_for(256);
        assert!(b <= 1.05 * a, "sharp component grew: {a} -> {b}");
    }

    #[test]
    fn product_inequality_trivial_cases() {
        let s = circle(128);
        let triples = sample_triples(&s, 3000, 7);
        let zero = KernelHandle::ambient(
            Arc::new(|_: &Point, _: &Point| Complex64::new(0.0, 0.0)),
            (0.0, 0.0, 0.0),
        );
        assert_eq!(
            check_product_inequality(&s, &zero, 0.0, &zero, 0.0, &triples, 1.05),
            0
        );
        // K2 = 1 in class (0, t2, t3): the inequality reduces to K1's bound
        let xi = KernelHandle::xi(&Density::coordinate(&s, 0));
        let pairs = sample_pairs(&s, PairPolicy::All);
        let rep = norm_ks1s2s3(&s, &xi, xi.exponents, &pairs, &triples, 7).unwrap();
        let one = KernelHandle::ambient(
            Arc::new(|_: &Point, _: &Point| Complex64::new(1.0, 0.0)),
            (0.0, 0.0, 1.0),
        );
        assert_eq!(
            check_product_inequality(&s, &xi, rep.class_norm(), &one, 1.0, &triples, 1.05),
            0
        );
    }

    #[test]
    fn embedding_inequality_every_sample() {
        let s = make_curve(Shape::Kite, 256).unwrap();
        let triples = sample_triples(&s, 5000, 13);
        let k = KernelHandle::ambient(
            Arc::new(|x: &Point, y: &Point| {
                let d = dist(x, y);
                Complex64::new((x[0] - y[0]) / (d * d), 0.0)
            }),
            (1.0, 2.0, 1.0),
        );
        assert_eq!(
            embedding_violations(&s, &k, (1.0, 2.0, 1.0), 0.5, &triples),
            0
        );
    }

    #[test]
    fn frozen_direction_lemma_bound() {
        // F(theta, r) = theta_1 theta_2 + sin r has Lip(F) <= 2 in the sum
        // metric; the quotient is bounded by Lip(F) (2 + diam).
        let s = make_curve(Shape::Ellipse { a: 2.0, b: 1.0 }, 256).unwrap();
        let triples = sample_triples(&s, 5000, 21);
        let f = |th: &Point, r: f64| th[0] * th[1] + r.sin();
        let q = frozen_direction_quotient(&s, &f, &triples);
        let bound = 2.0 * (2.0 + s.span());
        assert!(q <= bound, "quotient {q} exceeds {bound}");
    }

    #[test]
    fn triple_sampler_is_admissible_and_deterministic() {
        let s = circle(256);
        let t1 = sample_triples(&s, 1000, 42);
        let t2 = sample_triples(&s, 1000, 42);
        assert_eq!(t1, t2);
        assert!(t1.len() >= 900);
        for &(xp, xpp, y) in &t1 {
            let d = dist(&s.nodes[xp], &s.nodes[xpp]);
            assert!(d > 0.0);
            assert!(dist(&s.nodes[xp], &s.nodes[y]) >= 2.0 * d);
        }
    }
}
