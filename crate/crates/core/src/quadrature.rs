//! Boundary quadrature: periodic trapezoid, the Kress rule for logarithmic
//! kernels on 2d curves, truncated (punched-ball) sums and a Duffy rule for
//! 1/r-singular integrands on triangulated surfaces.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{cross, dist, mat_apply, norm, sub, BoundarySurface, Point};
use crate::operator::C64;

/// Weights R_m of the Kress quadrature for
/// int_0^{2pi} ln(4 sin^2((s-t)/2)) f(t) dt at s = s_i, t = t_j, m = i-j mod N.
pub fn kress_weights(n_nodes: usize) -> Vec<f64> {
    assert!(n_nodes % 2 == 0);
    let half = n_nodes / 2;
    let h = PI / half as f64;
    (0..n_nodes)
        .map(|m| {
            let mut acc = 0.0;
            for k in 1..half {
                acc += (k as f64 * m as f64 * h).cos() / k as f64;
            }
            let nyquist = (half as f64 * m as f64 * h).cos() / (half as f64).powi(2);
            -2.0 * PI / half as f64 * acc - PI * nyquist / half as f64 * (half as f64) / half as f64
        })
        .collect()
}

/// ln(4 sin^2(m h / 2)) for m = 0..N-1 (entry 0 is unused and set to 0).
pub fn log_sin_table(n_nodes: usize) -> Vec<f64> {
    let h = 2.0 * PI / n_nodes as f64;
    (0..n_nodes)
        .map(|m| {
            if m == 0 {
                0.0
            } else {
                (4.0 * (0.5 * m as f64 * h).sin().powi(2)).ln()
            }
        })
        .collect()
}

/// Plain weighted sum over the nodes.
pub fn integrate_smooth(surface: &BoundarySurface, values: &[C64]) -> Result<C64> {
    let mut acc = C64::new(0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteIntegrand(i));
        }
        acc += surface.weights[i] * v;
    }
    Ok(acc)
}

/// A kernel on (dOmega)^2 split as K(x,y) = L(x,y) ln|x-y|^2 + R(x,y) with
/// L and R smooth up to the diagonal; the closures receive node indices and
/// must return the diagonal limits at (i, i).
pub struct SplitKernel2d<'a> {
    pub log_coef: &'a (dyn Fn(usize, usize) -> C64 + Sync),
    pub smooth: &'a (dyn Fn(usize, usize) -> C64 + Sync),
}

/// Kress-weighted rule for the log factor plus periodic trapezoid for the
/// rest, at one target node. `split = None` reports the missing split.
pub fn integrate_weakly_singular_2d(
    surface: &BoundarySurface,
    split: Option<&SplitKernel2d>,
    target: usize,
) -> Result<C64> {
    let split = split.ok_or(Error::MissingSplit)?;
    if surface.n != 2 {
        return Err(Error::UnsupportedDimension(surface.n));
    }
    let n = surface.len();
    let kress = kress_weights(n);
    let h = 2.0 * PI / n as f64;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let m = (target + n - j) % n;
        let speed = surface.weights[j] / h;
        let l = (split.log_coef)(target, j);
        let r = (split.smooth)(target, j);
        // ln|x-y|^2 = ln(4 sin^2((s-t)/2)) + ln(|x-y|^2 / (4 sin^2))
        let ln_d2 = if j == target {
            (speed * speed).ln()
        } else {
            let d = dist(&surface.nodes[target], &surface.nodes[j]);
            let s2 = 4.0 * (0.5 * (surface.params[target] - surface.params[j])).sin().powi(2);
            (d * d / s2).ln()
        };
        acc += kress[m] * l * speed + h * (l * ln_d2 + r) * speed;
    }
    Ok(acc)
}

/// Sum over nodes at distance >= r from the target; the diagonal is always
/// excluded (kernels live off the diagonal).
pub fn integrate_truncated(
    surface: &BoundarySurface,
    kernel: &dyn Fn(usize, usize) -> C64,
    target: usize,
    radius: f64,
) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..surface.len() {
        if j == target {
            continue;
        }
        if dist(&surface.nodes[target], &surface.nodes[j]) >= radius {
            acc += surface.weights[j] * kernel(target, j);
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singularity {
    /// Bounded near the diagonal; the centroid rule is used everywhere.
    Bounded,
    /// O(1/|x-y|) near the diagonal; Duffy transform on the own triangle.
    InverseDistance,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Integral of kernel(x_i, .) over the whole surface: centroid rule away from
/// the target triangle, Duffy transform (3x3 Gauss per sub-triangle) on it.
pub fn duffy_integrate_3d(
    surface: &BoundarySurface,
    kernel: &dyn Fn(&Point, &Point) -> C64,
    target: usize,
    singularity: Option<Singularity>,
) -> Result<C64> {
    let sing = singularity.ok_or(Error::MissingSingularityDeclaration)?;
    if surface.n != 3 {
        return Err(Error::UnsupportedDimension(surface.n));
    }
    let x = surface.nodes[target];
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..surface.len() {
        if j == target {
            continue;
        }
        acc += surface.weights[j] * kernel(&x, &surface.nodes[j]);
    }
    match sing {
        Singularity::Bounded => {
            // no defensible value at y = x without a limit; drop the own patch
            // contribution of measure O(h^2) only if the kernel cannot be
            // evaluated there. Evaluate slightly off-center instead.
            acc += own_patch_offcenter(surface, kernel, target);
        }
        Singularity::InverseDistance => {
            acc += duffy_own_patch(surface, kernel, target);
        }
    }
    Ok(acc)
}

fn own_patch_offcenter(
    surface: &BoundarySurface,
    kernel: &dyn Fn(&Point, &Point) -> C64,
    target: usize,
) -> C64 {
    let tri = &surface.tris[target];
    let x = surface.nodes[target];
    let mut acc = C64::new(0.0, 0.0);
    // three interior points, each weighted a third of the patch measure
    for k in 0..3 {
        let v = tri.v[k];
        let c = [
            0.5 * (v[0] + (tri.v[(k + 1) % 3][0] + tri.v[(k + 2) % 3][0]) / 2.0),
            0.5 * (v[1] + (tri.v[(k + 1) % 3][1] + tri.v[(k + 2) % 3][1]) / 2.0),
            0.5 * (v[2] + (tri.v[(k + 1) % 3][2] + tri.v[(k + 2) % 3][2]) / 2.0),
        ];
        let y = surface.shape.project(&c);
        acc += surface.weights[target] / 3.0 * kernel(&x, &y);
    }
    acc
}

/// Duffy-transformed integral of the kernel over the target's own curved
/// triangle (three sub-triangles around the node, 3x3 Gauss each).
pub fn duffy_own_patch(
    surface: &BoundarySurface,
    kernel: &dyn Fn(&Point, &Point) -> C64,
    target: usize,
) -> C64 {
    let tri = &surface.tris[target];
    let x = surface.nodes[target];
    let c = [
        (tri.v[0][0] + tri.v[1][0] + tri.v[2][0]) / 3.0,
        (tri.v[0][1] + tri.v[1][1] + tri.v[2][1]) / 3.0,
        (tri.v[0][2] + tri.v[1][2] + tri.v[2][2]) / 3.0,
    ];
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..3 {
        let va = tri.v[k];
        let vb = tri.v[(k + 1) % 3];
        // p(u,v) = c + u [ (va - c) + v (vb - va) ], singular pre-image at u = 0
        let e_a = sub(&va, &c);
        let e_ab = sub(&vb, &va);
        for &(u, wu) in &GAUSS3 {
            for &(v, wv) in &GAUSS3 {
                let dir = [
                    e_a[0] + v * e_ab[0],
                    e_a[1] + v * e_ab[1],
                    e_a[2] + v * e_ab[2],
                ];
                let p = [c[0] + u * dir[0], c[1] + u * dir[1], c[2] + u * dir[2]];
                let dpu = dir;
                let dpv = [u * e_ab[0], u * e_ab[1], u * e_ab[2]];
                let dproj = surface.shape.project_diff(&p);
                let ju = mat_apply(&dproj, &dpu);
                let jv = mat_apply(&dproj, &dpv);
                let jac = norm(&cross(&ju, &jv));
                let y = surface.shape.project(&p);
                acc += wu * wv * jac * kernel(&x, &y);
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_curve, make_sphere, Shape};

    #[test]
    fn kress_rule_exactness() {
        let n = 64;
        let w = kress_weights(n);
        // f = 1: integral of ln(4 sin^2(t/2)) over the period is 0
        let total: f64 = w.iter().sum();
        assert!(total.abs() < 1e-12, "sum {total}");
        // f = cos(t): integral is -2 pi cos(s); at s = t_0 = 0
        let h = 2.0 * PI / n as f64;
        let mut acc = 0.0;
        for j in 0..n {
            let m = (n - j) % n;
            acc += w[m] * (j as f64 * h).cos();
        }
        assert!((acc + 2.0 * PI).abs() < 1e-12, "got {acc}");
        // f = cos(3t): integral is -2 pi cos(3 s)/3
        let mut acc = 0.0;
        for j in 0..n {
            let m = (n - j) % n;
            acc += w[m] * (3.0 * j as f64 * h).cos();
        }
        assert!((acc + 2.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_rule_examples() {
        let s = make_curve(Shape::Circle { r: 1.0 }, 64).unwrap();
        let one = vec![C64::new(1.0, 0.0); s.len()];
        let v = integrate_smooth(&s, &one).unwrap();
        assert!((v.re - 2.0 * PI).abs() < 1e-12 && v.im.abs() < 1e-15);
        let nu1: Vec<C64> = (0..s.len()).map(|i| C64::new(s.normals[i][0], 0.0)).collect();
        assert!(integrate_smooth(&s, &nu1).unwrap().norm() < 1e-12);

        let sp = make_sphere(Shape::Sphere { r: 1.0 }, 3).unwrap();
        let x1sq: Vec<C64> = sp.nodes.iter().map(|p| C64::new(p[0] * p[0], 0.0)).collect();
        let v = integrate_smooth(&sp, &x1sq).unwrap();
        assert!(
            (v.re - 4.0 * PI / 3.0).abs() < 0.005 * 4.0 * PI / 3.0,
            "x1^2 over sphere: {v}"
        );

        let bad = vec![C64::new(f64::NAN, 0.0); s.len()];
        assert!(matches!(
            integrate_smooth(&s, &bad),
            Err(Error::NonFiniteIntegrand(0))
        ));
    }

    #[test]
    fn missing_split_reported() {
        let s = make_curve(Shape::Circle { r: 1.0 }, 32).unwrap();
        assert!(matches!(
            integrate_weakly_singular_2d(&s, None, 0),
            Err(Error::MissingSplit)
        ));
    }

    #[test]
    fn log_potential_on_circles() {
        // L = 1/(4 pi), R = 0 is the Laplace single-layer kernel in 2d.
        let log_coef = |_i: usize, _j: usize| C64::new(1.0 / (4.0 * PI), 0.0);
        let smooth = |_i: usize, _j: usize| C64::new(0.0, 0.0);
        let split = SplitKernel2d {
            log_coef: &log_coef,
            smooth: &smooth,
        };
        let s1 = make_curve(Shape::Circle { r: 1.0 }, 64).unwrap();
        for target in [0, 13, 40] {
            let v = integrate_weakly_singular_2d(&s1, Some(&split), target).unwrap();
            assert!(v.norm() < 1e-10, "unit circle log potential {v}");
        }
        // radius 2: mean of ln|x-y| over the circle is ln 2, so the single
        // layer of the unit density is 2 ln 2 (perimeter 4 pi over 2 pi).
        let s2 = make_curve(Shape::Circle { r: 2.0 }, 64).unwrap();
        let v = integrate_weakly_singular_2d(&s2, Some(&split), 5).unwrap();
        assert!(
            (v.re - 2.0 * (2.0f64).ln()).abs() < 1e-10,
            "radius-2 circle: {v}"
        );
    }

    #[test]
    fn zero_log_part_reduces_to_trapezoid() {
        let s = make_curve(Shape::Ellipse { a: 2.0, b: 1.0 }, 64).unwrap();
        let vals: Vec<C64> = s
            .params
            .iter()
            .map(|&t| C64::new(t.cos() * t.sin() + 2.0, 0.0))
            .collect();
        let log_coef = |_: usize, _: usize| C64::new(0.0, 0.0);
        let smooth = |_i: usize, j: usize| vals[j];
        let split = SplitKernel2d {
            log_coef: &log_coef,
            smooth: &smooth,
        };
        let a = integrate_weakly_singular_2d(&s, Some(&split), 7).unwrap();
        let b = integrate_smooth(&s, &vals).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn weakly_singular_refinement_convergence() {
        // smooth density against the log kernel on an ellipse; errors must at
        // least halve when N doubles (spectral in practice)
        let shape = Shape::Ellipse { a: 2.0, b: 1.0 };
        let run = |n: usize| -> C64 {
            let s = make_curve(shape.clone(), n).unwrap();
            let mu: Vec<C64> = s.params.iter().map(|&t| C64::new(t.cos().exp(), 0.0)).collect();
            let log_coef = move |_i: usize, j: usize| mu[j] / (4.0 * PI);
            let smooth = |_: usize, _: usize| C64::new(0.0, 0.0);
            let split = SplitKernel2d {
                log_coef: &log_coef,
                smooth: &smooth,
            };
            integrate_weakly_singular_2d(&s, Some(&split), 0).unwrap()
        };
        let reference = run(512);
        let e16 = (run(16) - reference).norm();
        let e32 = (run(32) - reference).norm();
        let e64 = (run(64) - reference).norm();
        assert!(e32 <= 0.5 * e16 + 1e-13, "{e16} -> {e32}");
        assert!(e64 <= 0.5 * e32 + 1e-13, "{e32} -> {e64}");
    }

    #[test]
    fn truncated_sums() {
        let s = make_curve(Shape::Circle { r: 1.0 }, 128).unwrap();
        let one = |_: usize, _: usize| C64::new(1.0, 0.0);
        // larger than the diameter: empty sum
        assert_eq!(integrate_truncated(&s, &one, 0, 10.0).norm(), 0.0);
        // r = 0 keeps everything but the diagonal
        let v = integrate_truncated(&s, &one, 0, 0.0);
        let measure: f64 = s.weights.iter().sum();
        assert!((v.re - (measure - s.weights[0])).abs() < 1e-12);
        // monotone under shrinking radius
        let k = |i: usize, j: usize| {
            C64::new(1.0 / dist(&s.nodes[i], &s.nodes[j]), 0.0)
        };
        let big = integrate_truncated(&s, &k, 0, 1.0).norm();
        let small = integrate_truncated(&s, &k, 0, 0.01).norm();
        assert!(small >= big);
    }

    #[test]
    fn truncated_odd_kernel_bounded_under_refinement() {
        // k(z) = z_1/|z|^2 is odd and homogeneous of degree -(n-1) in 2d;
        // the truncated integrals must stay uniformly bounded.
        let sup_for = |n: usize| -> f64 {
            let s = make_curve(Shape::Circle { r: 1.0 }, n).unwrap();
            let k = |i: usize, j: usize| {
                let z = sub(&s.nodes[i], &s.nodes[j]);
                let d2 = z[0] * z[0] + z[1] * z[1];
                C64::new(z[0] / d2, 0.0)
            };
            let radii: Vec<f64> = (0..30).map(|q| 2.0 * (0.7f64).powi(q)).collect();
            radii
                .iter()
                .map(|&r| integrate_truncated(&s, &k, 0, r).norm())
                .fold(0.0, f64::max)
        };
        let s64 = sup_for(64);
        let s1024 = sup_for(1024);
        assert!(
            s1024 <= 1.05 * s64.max(1e-12),
            "odd-kernel sup grew: {s64} -> {s1024}"
        );
    }

    #[test]
    fn known_integrability_inequalities_discrete() {
        // sup_x sum w |x-y|^{-gamma} (gamma < n-1) and sup_x sum w |ln|x-y||
        // stay bounded under refinement
        let sup_pair = |n: usize| -> (f64, f64) {
            let s = make_curve(Shape::Ellipse { a: 2.0, b: 1.0 }, n).unwrap();
            let mut worst_pow: f64 = 0.0;
            let mut worst_log: f64 = 0.0;
            for i in 0..s.len() {
                let mut acc_p = 0.0;
                let mut acc_l = 0.0;
                for j in 0..s.len() {
                    if i == j {
                        continue;
                    }
                    let d = dist(&s.nodes[i], &s.nodes[j]);
                    acc_p += s.weights[j] * d.powf(-0.5);
                    acc_l += s.weights[j] * d.ln().abs();
                }
                worst_pow = worst_pow.max(acc_p);
                worst_log = worst_log.max(acc_l);
            }
            (worst_pow, worst_log)
        };
        let (p128, l128) = sup_pair(128);
        let (p256, l256) = sup_pair(256);
        assert!(p256 <= 1.05 * p128, "power sum grew {p128} -> {p256}");
        assert!(l256 <= 1.05 * l128, "log sum grew {l128} -> {l256}");
    }

    #[test]
    fn duffy_requires_declaration() {
        let sp = make_sphere(Shape::Sphere { r: 1.0 }, 1).unwrap();
        let k = |_: &Point, _: &Point| C64::new(0.0, 0.0);
        assert!(matches!(
            duffy_integrate_3d(&sp, &k, 0, None),
            Err(Error::MissingSingularityDeclaration)
        ));
        assert_eq!(
            duffy_integrate_3d(&sp, &k, 0, Some(Singularity::InverseDistance))
                .unwrap()
                .norm(),
            0.0
        );
    }

    #[test]
    fn duffy_inverse_distance_on_sphere() {
        // int_{S^2} dS(y)/|x-y| = 4 pi for |x| = 1
        let sp = make_sphere(Shape::Sphere { r: 1.0 }, 3).unwrap();
        let k = |x: &Point, y: &Point| C64::new(1.0 / dist(x, y), 0.0);
        for target in [0, 101, 777] {
            let v = duffy_integrate_3d(&sp, &k, target, Some(Singularity::InverseDistance))
                .unwrap();
            assert!(
                (v.re - 4.0 * PI).abs() < 0.01 * 4.0 * PI,
                "target {target}: {v}"
            );
        }
    }
}
