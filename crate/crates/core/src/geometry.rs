//! Closed boundaries: analytic curves in 2d, icosahedral triangulations of
//! spheres/ellipsoids in 3d, plus densities, moduli of continuity, the
//! tangential operators M_lr and grad_{dOmega}, and discrete Hoelder-type
//! seminorm estimation.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::C64;

pub type Point = [f64; 3];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometrySpec {
    Circle { r: f64, n: usize },
    Ellipse { a: f64, b: f64, n: usize },
    Kite { n: usize },
    Star { k: u32, eps: f64, n: usize },
    Sphere { r: f64, level: u32 },
    Ellipsoid { a: f64, b: f64, c: f64, level: u32 },
}

/// The shape descriptor kept by a built surface.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle { r: f64 },
    Ellipse { a: f64, b: f64 },
    Kite,
    Star { k: u32, eps: f64 },
    Sphere { r: f64 },
    Ellipsoid { axes: [f64; 3] },
}

impl Shape {
    /// Curve point with first and second parameter derivatives (2d shapes).
    pub fn curve(&self, t: f64) -> (Point, Point, Point) {
        let (s, c) = t.sin_cos();
        match *self {
            Shape::Circle { r } => (
                [r * c, r * s, 0.0],
                [-r * s, r * c, 0.0],
                [-r * c, -r * s, 0.0],
            ),
            Shape::Ellipse { a, b } => (
                [a * c, b * s, 0.0],
                [-a * s, b * c, 0.0],
                [-a * c, -b * s, 0.0],
            ),
            Shape::Kite => {
                let (s2, c2) = (2.0 * t).sin_cos();
                (
                    [c + 0.65 * c2 - 0.65, 1.5 * s, 0.0],
                    [-s - 1.3 * s2, 1.5 * c, 0.0],
                    [-c - 2.6 * c2, -1.5 * s, 0.0],
                )
            }
            Shape::Star { k, eps } => {
                let kf = k as f64;
                let (sk, ck) = (kf * t).sin_cos();
                let r = 1.0 + eps * ck;
                let r1 = -eps * kf * sk;
                let r2 = -eps * kf * kf * ck;
                (
                    [r * c, r * s, 0.0],
                    [r1 * c - r * s, r1 * s + r * c, 0.0],
                    [
                        r2 * c - 2.0 * r1 * s - r * c,
                        r2 * s + 2.0 * r1 * c - r * s,
                        0.0,
                    ],
                )
            }
            _ => panic!("curve() called on a 3d shape"),
        }
    }

    fn axes(&self) -> [f64; 3] {
        match *self {
            Shape::Sphere { r } => [r, r, r],
            Shape::Ellipsoid { axes } => axes,
            _ => panic!("axes() called on a 2d shape"),
        }
    }

    /// Radial projection onto the 3d surface.
    pub fn project(&self, u: &Point) -> Point {
        let d = self.axes();
        let rho =
            (u[0] * u[0] / (d[0] * d[0]) + u[1] * u[1] / (d[1] * d[1]) + u[2] * u[2] / (d[2] * d[2]))
                .sqrt();
        [u[0] / rho, u[1] / rho, u[2] / rho]
    }

    /// Differential of the radial projection at u (3x3).
    pub fn project_diff(&self, u: &Point) -> [[f64; 3]; 3] {
        let d = self.axes();
        let rho2 =
            u[0] * u[0] / (d[0] * d[0]) + u[1] * u[1] / (d[1] * d[1]) + u[2] * u[2] / (d[2] * d[2]);
        let rho = rho2.sqrt();
        // grad rho = (u_i/d_i^2)/rho
        let g = [
            u[0] / (d[0] * d[0] * rho),
            u[1] / (d[1] * d[1] * rho),
            u[2] / (d[2] * d[2] * rho),
        ];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { 1.0 / rho } else { 0.0 } - u[i] * g[j] / rho2;
            }
        }
        m
    }

    /// Exterior unit normal at a point on the 3d surface.
    pub fn normal_at(&self, p: &Point) -> Point {
        let d = self.axes();
        let w = [
            p[0] / (d[0] * d[0]),
            p[1] / (d[1] * d[1]),
            p[2] / (d[2] * d[2]),
        ];
        let nw = norm(&w);
        [w[0] / nw, w[1] / nw, w[2] / nw]
    }
}

#[derive(Debug, Clone)]
pub struct Triangle {
    pub v: [Point; 3],
}

#[derive(Debug, Clone)]
pub struct BoundarySurface {
    pub n: usize,
    pub shape: Shape,
    pub nodes: Vec<Point>,
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
    /// 2d: parameter values; empty in 3d.
    pub params: Vec<f64>,
    /// 2d: x'(t_i); empty in 3d.
    pub tangents: Vec<Point>,
    /// 2d: x''(t_i); empty in 3d.
    pub second: Vec<Point>,
    /// 3d: one triangle per node (the node is its projected centroid).
    pub tris: Vec<Triangle>,
    /// Declared smoothness class (m, alpha) of the boundary.
    pub smoothness: (u32, f64),
}

impl BoundarySurface {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Diagonal of the bounding box (an upper bound for the diameter within
    /// a factor 1, used to scale radii grids and separation bands).
    pub fn span(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        dist(&hi, &lo)
    }

    pub fn min_spacing(&self) -> f64 {
        if self.n == 2 {
            let m = self.len();
            (0..m)
                .map(|i| dist(&self.nodes[i], &self.nodes[(i + 1) % m]))
                .fold(f64::INFINITY, f64::min)
        } else {
            0.5 * self
                .weights
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        }
    }

    /// Unit tangent at node i (2d).
    pub fn unit_tangent(&self, i: usize) -> Point {
        let t = &self.tangents[i];
        let s = norm(t);
        [t[0] / s, t[1] / s, t[2] / s]
    }

    /// Speed |x'(t_i)| (2d).
    pub fn speed(&self, i: usize) -> f64 {
        norm(&self.tangents[i])
    }

    pub fn dump_nodes_csv(&self) -> String {
        let mut out = String::new();
        if self.n == 2 {
            out.push_str("x,y,nu_x,nu_y,w\n");
        } else {
            out.push_str("x,y,z,nu_x,nu_y,nu_z,w\n");
        }
        for i in 0..self.len() {
            let p = self.nodes[i];
            let nu = self.normals[i];
            if self.n == 2 {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    p[0], p[1], nu[0], nu[1], self.weights[i]
                ));
            } else {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    p[0], p[1], p[2], nu[0], nu[1], nu[2], self.weights[i]
                ));
            }
        }
        out
    }
}

/// Equispaced-parameter discretization of an analytic closed curve.
pub fn make_curve(shape: Shape, n_nodes: usize) -> Result<BoundarySurface> {
    match shape {
        Shape::Circle { r } if r <= 0.0 => {
            return Err(Error::BadShapeParams(format!("circle radius {r}")))
        }
        Shape::Ellipse { a, b } if a <= 0.0 || b <= 0.0 => {
            return Err(Error::BadShapeParams(format!("ellipse axes {a}, {b}")))
        }
        Shape::Star { k, eps } if k == 0 || eps.abs() >= 1.0 => {
            return Err(Error::BadShapeParams(format!(
                "star k={k} eps={eps} is not a simple curve"
            )))
        }
        Shape::Sphere { .. } | Shape::Ellipsoid { .. } => {
            return Err(Error::BadShapeParams("3d shape passed to make_curve".into()))
        }
        _ => {}
    }
    if n_nodes < 16 || n_nodes % 2 != 0 {
        return Err(Error::BadShapeParams(format!(
            "node count {n_nodes} must be even and >= 16"
        )));
    }
    let h = 2.0 * std::f64::consts::PI / n_nodes as f64;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut normals = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    let mut params = Vec::with_capacity(n_nodes);
    let mut tangents = Vec::with_capacity(n_nodes);
    let mut second = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let t = i as f64 * h;
        let (x, x1, x2) = shape.curve(t);
        let speed = norm(&x1);
        nodes.push(x);
        normals.push([x1[1] / speed, -x1[0] / speed, 0.0]);
        weights.push(speed * h);
        params.push(t);
        tangents.push(x1);
        second.push(x2);
    }
    Ok(BoundarySurface {
        n: 2,
        shape,
        nodes,
        normals,
        weights,
        params,
        tangents,
        second,
        tris: Vec::new(),
        smoothness: (2, 1.0),
    })
}

/// Icosahedral triangulation of a sphere or ellipsoid, refined `level` times.
/// Nodes are projected triangle centroids; weights integrate the curved
/// patch measure with a degree-2 rule on the flat triangle.
pub fn make_sphere(shape: Shape, level: u32) -> Result<BoundarySurface> {
    let axes = match shape {
        Shape::Sphere { r } => {
            if r <= 0.0 {
                return Err(Error::BadShapeParams(format!("sphere radius {r}")));
            }
            [r, r, r]
        }
        Shape::Ellipsoid { axes } => {
            if axes.iter().any(|&a| a <= 0.0) {
                return Err(Error::BadShapeParams(format!("ellipsoid axes {axes:?}")));
            }
            axes
        }
        _ => return Err(Error::BadShapeParams("2d shape passed to make_sphere".into())),
    };
    if !(1..=6).contains(&level) {
        return Err(Error::BadShapeParams(format!(
            "refinement level {level} outside 1..=6"
        )));
    }

    // unit icosahedron
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut verts: Vec<Point> = raw
        .iter()
        .map(|v| {
            let s = norm(v);
            [v[0] / s, v[1] / s, v[2] / s]
        })
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoint.get(&key) {
                return m;
            }
            let va = verts[key.0];
            let vb = verts[key.1];
            let m = [
                0.5 * (va[0] + vb[0]),
                0.5 * (va[1] + vb[1]),
                0.5 * (va[2] + vb[2]),
            ];
            let s = norm(&m);
            verts.push([m[0] / s, m[1] / s, m[2] / s]);
            midpoint.insert(key, verts.len() - 1);
            verts.len() - 1
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }

    // scale unit-sphere vertices onto the target surface
    for v in &mut verts {
        v[0] *= axes[0];
        v[1] *= axes[1];
        v[2] *= axes[2];
    }

    let surf_shape = shape.clone();
    let mut nodes = Vec::with_capacity(faces.len());
    let mut normals = Vec::with_capacity(faces.len());
    let mut weights = Vec::with_capacity(faces.len());
    let mut tris = Vec::with_capacity(faces.len());
    for f in &faces {
        let v0 = verts[f[0]];
        let v1 = verts[f[1]];
        let v2 = verts[f[2]];
        let centroid = [
            (v0[0] + v1[0] + v2[0]) / 3.0,
            (v0[1] + v1[1] + v2[1]) / 3.0,
            (v0[2] + v1[2] + v2[2]) / 3.0,
        ];
        let node = surf_shape.project(&centroid);
        let e1 = sub(&v1, &v0);
        let e2 = sub(&v2, &v0);
        // degree-2 rule at reference edge midpoints for the patch measure
        let mut w = 0.0;
        for (s, t) in [(0.5, 0.0), (0.0, 0.5), (0.5, 0.5)] {
            let p = [
                v0[0] + s * e1[0] + t * e2[0],
                v0[1] + s * e1[1] + t * e2[1],
                v0[2] + s * e1[2] + t * e2[2],
            ];
            let dp = surf_shape.project_diff(&p);
            let m1 = mat_apply(&dp, &e1);
            let m2 = mat_apply(&dp, &e2);
            w += norm(&cross(&m1, &m2)) / 6.0;
        }
        nodes.push(node);
        normals.push(surf_shape.normal_at(&node));
        weights.push(w);
        tris.push(Triangle { v: [v0, v1, v2] });
    }
    Ok(BoundarySurface {
        n: 3,
        shape: surf_shape,
        nodes,
        normals,
        weights,
        params: Vec::new(),
        tangents: Vec::new(),
        second: Vec::new(),
        tris,
        smoothness: (2, 1.0),
    })
}

pub fn mat_apply(m: &[[f64; 3]; 3], v: &Point) -> Point {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn build_surface(spec: &GeometrySpec) -> Result<BoundarySurface> {
    match *spec {
        GeometrySpec::Circle { r, n } => make_curve(Shape::Circle { r }, n),
        GeometrySpec::Ellipse { a, b, n } => make_curve(Shape::Ellipse { a, b }, n),
        GeometrySpec::Kite { n } => make_curve(Shape::Kite, n),
        GeometrySpec::Star { k, eps, n } => make_curve(Shape::Star { k, eps }, n),
        GeometrySpec::Sphere { r, level } => make_sphere(Shape::Sphere { r }, level),
        GeometrySpec::Ellipsoid { a, b, c, level } => {
            make_sphere(Shape::Ellipsoid { axes: [a, b, c] }, level)
        }
    }
}

// ---------------------------------------------------------------------------
// densities
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct Ambient {
    pub f: Arc<dyn Fn(&Point) -> C64 + Send + Sync>,
    pub grad: Arc<dyn Fn(&Point) -> [C64; 3] + Send + Sync>,
}

/// A boundary density: nodal values, optionally backed by an ambient closed
/// form (required for tangential calculus in 3d) and/or an explicit
/// parameter-derivative table (used for rough 2d densities).
#[derive(Clone)]
pub struct Density {
    pub values: Vec<C64>,
    pub ambient: Option<Ambient>,
    pub dparam: Option<Vec<C64>>,
    pub holder_exponent: Option<f64>,
}

impl Density {
    pub fn from_nodal(values: Vec<C64>) -> Self {
        Density {
            values,
            ambient: None,
            dparam: None,
            holder_exponent: None,
        }
    }

    pub fn from_ambient(
        surface: &BoundarySurface,
        f: Arc<dyn Fn(&Point) -> C64 + Send + Sync>,
        grad: Arc<dyn Fn(&Point) -> [C64; 3] + Send + Sync>,
    ) -> Self {
        let values = surface.nodes.iter().map(|p| f(p)).collect();
        Density {
            values,
            ambient: Some(Ambient { f, grad }),
            dparam: None,
            holder_exponent: None,
        }
    }

    pub fn one(surface: &BoundarySurface) -> Self {
        let n = surface.len();
        Density {
            values: vec![C64::new(1.0, 0.0); n],
            ambient: Some(Ambient {
                f: Arc::new(|_| C64::new(1.0, 0.0)),
                grad: Arc::new(|_| [Complex64::new(0.0, 0.0); 3]),
            }),
            dparam: Some(vec![C64::new(0.0, 0.0); n]),
            holder_exponent: Some(1.0),
        }
    }

    /// Coordinate function x_axis restricted to the boundary.
    pub fn coordinate(surface: &BoundarySurface, axis: usize) -> Self {
        let f: Arc<dyn Fn(&Point) -> C64 + Send + Sync> =
            Arc::new(move |p: &Point| C64::new(p[axis], 0.0));
        let grad: Arc<dyn Fn(&Point) -> [C64; 3] + Send + Sync> = Arc::new(move |_p: &Point| {
            let mut g = [Complex64::new(0.0, 0.0); 3];
            g[axis] = C64::new(1.0, 0.0);
            g
        });
        let mut d = Self::from_ambient(surface, f, grad);
        d.holder_exponent = Some(1.0);
        d
    }

    /// cos(t) in the curve parameter (2d).
    pub fn cos_param(surface: &BoundarySurface) -> Self {
        let values = surface.params.iter().map(|&t| C64::new(t.cos(), 0.0)).collect();
        let dparam = surface
            .params
            .iter()
            .map(|&t| C64::new(-t.sin(), 0.0))
            .collect();
        Density {
            values,
            ambient: None,
            dparam: Some(dparam),
            holder_exponent: Some(1.0),
        }
    }

    /// Component of the exterior normal as a density (2d nodal with an
    /// analytic parameter derivative from the curvature data).
    pub fn normal_component(surface: &BoundarySurface, axis: usize) -> Self {
        assert!(surface.n == 2);
        let m = surface.len();
        let mut values = Vec::with_capacity(m);
        let mut dparam = Vec::with_capacity(m);
        for i in 0..m {
            values.push(C64::new(surface.normals[i][axis], 0.0));
            // nu = (x2', -x1')/|x'|; d nu/dt from x'' by the quotient rule
            let x1 = surface.tangents[i];
            let x2 = surface.second[i];
            let sp = norm(&x1);
            let raw = [x1[1], -x1[0], 0.0];
            let draw = [x2[1], -x2[0], 0.0];
            let dsp = dot(&x1, &x2) / sp;
            let d = (draw[axis] * sp - raw[axis] * dsp) / (sp * sp);
            dparam.push(C64::new(d, 0.0));
        }
        Density {
            values,
            ambient: None,
            dparam: Some(dparam),
            holder_exponent: Some(1.0),
        }
    }

    /// Parameter derivative at every node (2d): explicit table if present,
    /// ambient chain rule otherwise, spectral differentiation as fallback.
    pub fn param_derivative(&self, surface: &BoundarySurface) -> Vec<C64> {
        if let Some(d) = &self.dparam {
            return d.clone();
        }
        if let Some(amb) = &self.ambient {
            return (0..surface.len())
                .map(|i| {
                    let g = (amb.grad)(&surface.nodes[i]);
                    let t = surface.tangents[i];
                    g[0] * t[0] + g[1] * t[1] + g[2] * t[2]
                })
                .collect();
        }
        spectral_derivative(&self.values)
    }

    pub fn scale(&self, factor: C64) -> Self {
        Density {
            values: self.values.iter().map(|v| v * factor).collect(),
            ambient: None,
            dparam: self
                .dparam
                .as_ref()
                .map(|d| d.iter().map(|v| v * factor).collect()),
            holder_exponent: self.holder_exponent,
        }
    }
}

/// Pointwise product of two densities (nodal; parameter derivative by the
/// product rule when both sides carry one).
pub fn density_product(surface: &BoundarySurface, a: &Density, b: &Density) -> Density {
    let values: Vec<C64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .collect();
    let da = a.dparam.clone().or_else(|| {
        (a.ambient.is_some() || surface.n == 2).then(|| a.param_derivative(surface))
    });
    let db = b.dparam.clone().or_else(|| {
        (b.ambient.is_some() || surface.n == 2).then(|| b.param_derivative(surface))
    });
    let dparam = match (da, db) {
        (Some(da), Some(db)) => Some(
            (0..values.len())
                .map(|i| da[i] * b.values[i] + a.values[i] * db[i])
                .collect(),
        ),
        _ => None,
    };
    let ambient = match (&a.ambient, &b.ambient) {
        (Some(fa), Some(fb)) => {
            let (fa, fb) = (fa.clone(), fb.clone());
            let (ga, gb) = (fa.clone(), fb.clone());
            Some(Ambient {
                f: Arc::new(move |p: &Point| (fa.f)(p) * (fb.f)(p)),
                grad: Arc::new(move |p: &Point| {
                    let va = (ga.f)(p);
                    let vb = (gb.f)(p);
                    let da = (ga.grad)(p);
                    let db = (gb.grad)(p);
                    [
                        da[0] * vb + va * db[0],
                        da[1] * vb + va * db[1],
                        da[2] * vb + va * db[2],
                    ]
                }),
            })
        }
        _ => None,
    };
    Density {
        values,
        ambient,
        dparam,
        holder_exponent: None,
    }
}

// ---------------------------------------------------------------------------
// spectral differentiation (2d periodic grid)
// ---------------------------------------------------------------------------

/// d/dt on the equispaced periodic grid, exact for trigonometric polynomials
/// of degree below N/2.
pub fn spectral_derivative(values: &[C64]) -> Vec<C64> {
    let n = values.len();
    assert!(n % 2 == 0, "spectral derivative needs an even grid");
    let h = 2.0 * std::f64::consts::PI / n as f64;
    // d_m = (-1)^m / (2 tan(m h / 2)), m = 1..N-1
    let coef: Vec<f64> = (1..n)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * 0.5 / (0.5 * m as f64 * h).tan()
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for m in 1..n {
                acc += coef[m - 1] * values[(i + n - m) % n];
            }
            acc
        })
        .collect()
}

// ---------------------------------------------------------------------------
// tangential operators
// ---------------------------------------------------------------------------

/// M_lr[f] = nu_l d_r f - nu_r d_l f at the nodes.
pub fn tangential_m(
    surface: &BoundarySurface,
    l: usize,
    r: usize,
    f: &Density,
) -> Result<Density> {
    if surface.n == 2 {
        let dpar = f.param_derivative(surface);
        let m = surface.len();
        let mut values = Vec::with_capacity(m);
        for i in 0..m {
            let nu = surface.normals[i];
            let th = surface.unit_tangent(i);
            let dfds = dpar[i] / surface.speed(i);
            values.push(dfds * (nu[l] * th[r] - nu[r] * th[l]));
        }
        Ok(Density::from_nodal(values))
    } else {
        let amb = f.ambient.as_ref().ok_or(Error::NeedsAmbientForm)?;
        let values = (0..surface.len())
            .map(|i| {
                let g = (amb.grad)(&surface.nodes[i]);
                let nu = surface.normals[i];
                g[r] * nu[l] - g[l] * nu[r]
            })
            .collect();
        Ok(Density::from_nodal(values))
    }
}

/// Tangential gradient of an ambient density: grad f - (nu . grad f) nu.
pub fn tangential_gradient(surface: &BoundarySurface, f: &Density) -> Result<Vec<[C64; 3]>> {
    let amb = f.ambient.as_ref().ok_or(Error::NeedsAmbientForm)?;
    Ok((0..surface.len())
        .map(|i| {
            let g = (amb.grad)(&surface.nodes[i]);
            let nu = surface.normals[i];
            let gn = g[0] * nu[0] + g[1] * nu[1] + g[2] * nu[2];
            [g[0] - gn * nu[0], g[1] - gn * nu[1], g[2] - gn * nu[2]]
        })
        .collect())
}

/// Tangential gradient for any 2d density via the parameter derivative.
pub fn tangential_gradient_2d(surface: &BoundarySurface, f: &Density) -> Vec<[C64; 3]> {
    assert!(surface.n == 2);
    let dpar = f.param_derivative(surface);
    (0..surface.len())
        .map(|i| {
            let th = surface.unit_tangent(i);
            let dfds = dpar[i] / surface.speed(i);
            [dfds * th[0], dfds * th[1], dfds * th[2]]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// moduli of continuity and seminorm estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulus {
    Power { alpha: f64 },
    /// omega_theta(r) = r^theta |ln r| capped at the breakpoint e^{-1/theta}.
    Omega { theta: f64 },
}

impl Modulus {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match *self {
            Modulus::Power { alpha } => r.powf(alpha),
            Modulus::Omega { theta } => {
                let r_theta = (-1.0 / theta).exp();
                if r <= r_theta {
                    r.powf(theta) * r.ln().abs()
                } else {
                    r_theta.powf(theta) * r_theta.ln().abs()
                }
            }
        }
    }

    pub fn breakpoint(&self) -> Option<f64> {
        match *self {
            Modulus::Power { .. } => None,
            Modulus::Omega { theta } => Some((-1.0 / theta).exp()),
        }
    }
}

/// Node-pair selection policy for sup-type estimators.
#[derive(Debug, Clone, Copy)]
pub enum PairPolicy {
    /// All pairs for small node sets, stratified dyadic bands otherwise.
    Auto { seed: u64 },
    All,
    Stratified { per_band: usize, seed: u64 },
}

/// Index pairs (i < j) under the policy. Stratified sampling buckets all
/// pairs by dyadic separation and draws a fixed budget per band.
pub fn sample_pairs(surface: &BoundarySurface, policy: PairPolicy) -> Vec<(usize, usize)> {
    let n = surface.len();
    let all = |out: &mut Vec<(usize, usize)>| {
        for i in 0..n {
            for j in (i + 1)..n {
                out.push((i, j));
            }
        }
    };
    let mut out = Vec::new();
    match policy {
        PairPolicy::All => all(&mut out),
        PairPolicy::Auto { seed } => {
            if n <= 512 {
                all(&mut out)
            } else {
                return sample_pairs(
                    surface,
                    PairPolicy::Stratified {
                        per_band: 1000,
                        seed,
                    },
                );
            }
        }
        PairPolicy::Stratified { per_band, seed } => {
            let span = surface.span();
            let min_sep = surface.min_spacing();
            let bands = ((span / min_sep).log2().ceil() as usize).max(1);
            let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); bands + 1];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = dist(&surface.nodes[i], &surface.nodes[j]);
                    if d <= 0.0 {
                        continue;
                    }
                    let k = ((span / d).log2().floor() as usize).min(bands);
                    buckets[k].push((i, j));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for bucket in buckets {
                if bucket.len() <= per_band {
                    out.extend(bucket);
                } else {
                    for _ in 0..per_band {
                        out.push(bucket[rng.gen_range(0..bucket.len())]);
                    }
                }
            }
        }
    }
    out
}

/// sup over sampled pairs of |f(x)-f(y)| / omega(|x-y|).
pub fn holder_seminorm(
    surface: &BoundarySurface,
    values: &[C64],
    modulus: &Modulus,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    let distinct = surface
        .nodes
        .iter()
        .any(|p| dist(p, &surface.nodes[0]) > 0.0);
    if !distinct {
        return Err(Error::DegenerateNodeSet);
    }
    let mut best: f64 = 0.0;
    for &(i, j) in pairs {
        let d = dist(&surface.nodes[i], &surface.nodes[j]);
        if d <= 0.0 {
            continue;
        }
        let q = (values[i] - values[j]).norm() / modulus.eval(d);
        best = best.max(q);
    }
    Ok(best)
}

/// sup over pairs of |f(y)-f(x)-grad_dOmega f(x).(y-x)| / (|x-y| omega(|x-y|)).
pub fn taylor_defect(
    surface: &BoundarySurface,
    f: &Density,
    modulus: &Modulus,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    let grads = tangential_gradient(surface, f)?;
    let mut best: f64 = 0.0;
    for &(i, j) in pairs {
        for (x, y) in [(i, j), (j, i)] {
            let d = sub(&surface.nodes[y], &surface.nodes[x]);
            let dn = norm(&d);
            if dn <= 0.0 {
                continue;
            }
            let lin = grads[x][0] * d[0] + grads[x][1] * d[1] + grads[x][2] * d[2];
            let defect = (f.values[y] - f.values[x] - lin).norm();
            best = best.max(defect / (dn * modulus.eval(dn)));
        }
    }
    Ok(best)
}
