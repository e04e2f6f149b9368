//! Experiment orchestration: identity-verification sweeps, kernel-norm
//! reports, fundamental-solution decomposition probes and the discrete
//! Hoelder/omega_1 regularity-gain measurements, with deterministic CSV and
//! JSON outputs keyed by the config seed.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fundsol::FundamentalSolution;
use crate::geometry::{
    build_surface, dist, sample_pairs, tangential_m, BoundarySurface, Density, GeometrySpec,
    Modulus, PairPolicy,
};
use crate::kernels::{norm_ks1s2s3, sample_triples, KernelEval, KernelHandle, KernelNormReport};
use crate::operator::{CoefficientVector, OperatorSpec, C64};
use crate::potentials::{
    residual_grad_q, residual_pljr, residual_slay2, residual_wregn, residual_wstar, t_op,
    LayerContext,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    One,
    /// cos(t) in the curve parameter.
    CosTheta,
    Coordinate {
        axis: usize,
    },
    /// |sin((t - theta0)/2)|^beta, a C^{0,beta} function on the parameter circle.
    RoughPower {
        beta: f64,
        theta0: f64,
    },
    /// Antiderivative of the centered rough power: a C^{1,beta} density.
    RoughC1 {
        beta: f64,
        theta0: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub operator: OperatorSpec,
    pub geometry: GeometrySpec,
    pub density: DensitySpec,
    #[serde(default)]
    pub ladder: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_tolerance() -> f64 {
    1e-5
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.ladder.is_empty() && !self.ladder.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::BadConfig(format!(
                "refinement ladder {:?} is not strictly increasing",
                self.ladder
            )));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::BadConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub comparison: String,
    pub pass: bool,
}

impl Verdict {
    fn le(name: &str, measured: f64, tolerance: f64) -> Self {
        Verdict {
            name: name.to_string(),
            measured,
            tolerance,
            comparison: "<=".into(),
            pass: measured <= tolerance,
        }
    }

    fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Verdict {
            name: format!("{name}[{lo},{hi}]"),
            measured,
            tolerance: hi,
            comparison: "in".into(),
            pass: (lo..=hi).contains(&measured),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub experiment: String,
    pub n: usize,
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub experiment: String,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
    pub rows: Vec<CsvRow>,
    /// Full kernel-norm reports when the experiment produces them.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kernel_norms: Vec<KernelNormReport>,
}

impl RegularityReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("experiment,N,quantity,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.16e}\n",
                r.experiment, r.n, r.quantity, r.value
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// densities from specs
// ---------------------------------------------------------------------------

/// Centered rough profile |sin((t-theta0)/2)|^beta and its numerical mean.
fn rough_profile(beta: f64, theta0: f64) -> (impl Fn(f64) -> f64 + Clone, f64) {
    let rho = move |t: f64| (0.5 * (t - theta0)).sin().abs().powf(beta);
    // composite Simpson over a fine grid; the kink costs accuracy O(h^{1+beta})
    let m = 400_000usize;
    let h = 2.0 * PI / m as f64;
    let mut acc = 0.0;
    for k in 0..m {
        let a = k as f64 * h;
        acc += h / 6.0 * (rho(a) + 4.0 * rho(a + 0.5 * h) + rho(a + h));
    }
    (rho, acc / (2.0 * PI))
}

pub fn build_density(spec: &DensitySpec, surface: &BoundarySurface) -> Result<Density> {
    match *spec {
        DensitySpec::One => Ok(Density::one(surface)),
        DensitySpec::CosTheta => {
            if surface.n != 2 {
                return Err(Error::NeedsAmbientForm);
            }
            Ok(Density::cos_param(surface))
        }
        DensitySpec::Coordinate { axis } => Ok(Density::coordinate(surface, axis)),
        DensitySpec::RoughPower { beta, theta0 } => {
            if surface.n != 2 {
                return Err(Error::RoughDensityUnsupported);
            }
            let rho = move |t: f64| (0.5 * (t - theta0)).sin().abs().powf(beta);
            let values = surface
                .params
                .iter()
                .map(|&t| C64::new(rho(t), 0.0))
                .collect();
            Ok(Density {
                values,
                ambient: None,
                dparam: None,
                holder_exponent: Some(beta),
            })
        }
        DensitySpec::RoughC1 { beta, theta0 } => {
            if surface.n != 2 {
                return Err(Error::RoughDensityUnsupported);
            }
            // design against arclength: d mu/dt = (rho - rho_w) |x'| makes
            // the tangential derivative M_12[mu] the pure profile rho - rho_w,
            // so the claimed exponent is exactly beta in boundary distance
            let rho = move |t: f64| (0.5 * (t - theta0)).sin().abs().powf(beta);
            let shape = surface.shape.clone();
            let speed = move |t: f64| crate::geometry::norm(&shape.curve(t).1);
            let m = 400_000usize;
            let h = 2.0 * PI / m as f64;
            let (mut num, mut den) = (0.0, 0.0);
            let simpson = |f: &dyn Fn(f64) -> f64, a: f64, hh: f64| {
                hh / 6.0 * (f(a) + 4.0 * f(a + 0.5 * hh) + f(a + hh))
            };
            for k in 0..m {
                let a = k as f64 * h;
                num += simpson(&|t| rho(t) * speed(t), a, h);
                den += simpson(&speed, a, h);
            }
            let mean = num / den;
            let n = surface.len();
            let mut values = Vec::with_capacity(n);
            let mut dparam = Vec::with_capacity(n);
            let mut acc = 0.0;
            let sub = 256usize;
            let deriv = |t: f64| (rho(t) - mean) * speed(t);
            for i in 0..n {
                values.push(C64::new(acc, 0.0));
                dparam.push(C64::new(deriv(surface.params[i]), 0.0));
                let a = surface.params[i];
                let b = if i + 1 == n {
                    2.0 * PI
                } else {
                    surface.params[i + 1]
                };
                let hh = (b - a) / sub as f64;
                for k in 0..sub {
                    acc += simpson(&deriv, a + k as f64 * hh, hh);
                }
            }
            Ok(Density {
                values,
                ambient: None,
                dparam: Some(dparam),
                holder_exponent: Some(1.0),
            })
        }
    }
}

fn geometry_with_n(spec: &GeometrySpec, n: usize) -> GeometrySpec {
    match *spec {
        GeometrySpec::Circle { r, .. } => GeometrySpec::Circle { r, n },
        GeometrySpec::Ellipse { a, b, .. } => GeometrySpec::Ellipse { a, b, n },
        GeometrySpec::Kite { .. } => GeometrySpec::Kite { n },
        GeometrySpec::Star { k, eps, .. } => GeometrySpec::Star { k, eps, n },
        ref g => g.clone(),
    }
}

// ---------------------------------------------------------------------------
// band fits for sup-type seminorms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub band: u32,
    pub sep_mid: f64,
    pub count: usize,
    /// max over pairs in the band of |f(x)-f(y)|.
    pub max_diff: f64,
    /// separation of the pair attaining max_diff (the fit abscissa).
    pub arg_sep: f64,
    /// max over pairs of |f(x)-f(y)| / omega(|x-y|) when a modulus is given.
    pub max_quotient: f64,
}

pub fn band_rows(
    surface: &BoundarySurface,
    values: &[C64],
    pairs: &[(usize, usize)],
    modulus: Option<&Modulus>,
) -> Vec<BandRow> {
    let span = surface.span();
    // bands below a few node spacings cannot resolve sup-type quotients
    let floor = 4.0 * surface.min_spacing();
    let mut rows: Vec<BandRow> = Vec::new();
    for &(i, j) in pairs {
        let d = dist(&surface.nodes[i], &surface.nodes[j]);
        if d < floor || d > span {
            continue;
        }
        let k = (span / d).log2().floor() as u32;
        let diff = (values[i] - values[j]).norm();
        let pos = match rows.iter().position(|r| r.band == k) {
            Some(p) => p,
            None => {
                rows.push(BandRow {
                    band: k,
                    sep_mid: span * 0.75 * 0.5f64.powi(k as i32),
                    count: 0,
                    max_diff: 0.0,
                    arg_sep: 0.0,
                    max_quotient: 0.0,
                });
                rows.len() - 1
            }
        };
        rows[pos].count += 1;
        if diff > rows[pos].max_diff {
            rows[pos].max_diff = diff;
            rows[pos].arg_sep = d;
        }
        if let Some(m) = modulus {
            rows[pos].max_quotient = rows[pos].max_quotient.max(diff / m.eval(d));
        }
    }
    rows.sort_by_key(|r| r.band);
    rows
}

/// Dyadic bands in arclength separation (2d): on nonconvex curves chordal
/// bands mix near-parameter pairs with pairs across an indentation, which
/// pollutes band maxima; arclength separation keeps the scaling clean.
pub fn band_rows_arclength(
    surface: &BoundarySurface,
    values: &[C64],
    pairs: &[(usize, usize)],
    modulus: Option<&Modulus>,
) -> Vec<BandRow> {
    assert!(surface.n == 2);
    let n = surface.len();
    // cumulative arclength at the nodes (trapezoid of the analytic speed)
    let mut s = vec![0.0; n + 1];
    let h = 2.0 * PI / n as f64;
    for i in 0..n {
        let sp0 = surface.speed(i);
        let sp1 = surface.speed((i + 1) % n);
        s[i + 1] = s[i] + 0.5 * h * (sp0 + sp1);
    }
    let total = s[n];
    let span = 0.5 * total;
    let floor = 2.0 * total / n as f64;
    let mut rows: Vec<BandRow> = Vec::new();
    for &(i, j) in pairs {
        let raw = (s[i] - s[j]).abs();
        let d = raw.min(total - raw);
        if d < floor || d > span {
            continue;
        }
        let k = (span / d).log2().floor() as u32;
        let diff = (values[i] - values[j]).norm();
        let pos = match rows.iter().position(|r| r.band == k) {
            Some(p) => p,
            None => {
                rows.push(BandRow {
                    band: k,
                    sep_mid: span * 0.75 * 0.5f64.powi(k as i32),
                    count: 0,
                    max_diff: 0.0,
                    arg_sep: 0.0,
                    max_quotient: 0.0,
                });
                rows.len() - 1
            }
        };
        rows[pos].count += 1;
        if diff > rows[pos].max_diff {
            rows[pos].max_diff = diff;
            rows[pos].arg_sep = d;
        }
        if let Some(m) = modulus {
            rows[pos].max_quotient = rows[pos].max_quotient.max(diff / m.eval(d));
        }
    }
    rows.sort_by_key(|r| r.band);
    rows
}

/// Log-log least squares of band maxima against band separation, over the
/// five finest usable bands (at least `min_pairs` pairs each; four bands
/// minimum). Coarse bands are excluded: differences saturate at 2 sup|f|
/// there and flatten any fit.
pub fn fit_exponent(rows: &[BandRow], min_pairs: usize) -> Option<f64> {
    let mut usable: Vec<&BandRow> = rows
        .iter()
        .filter(|r| r.count >= min_pairs && r.max_diff > 0.0)
        .collect();
    usable.sort_by_key(|r| std::cmp::Reverse(r.band));
    usable.truncate(5);
    if usable.len() < 4 {
        return None;
    }
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable
        .iter()
        .map(|r| if r.arg_sep > 0.0 { r.arg_sep.ln() } else { r.sep_mid.ln() })
        .collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.max_diff.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    Some(sxy / sxx)
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

fn context_for(cfg: &ExperimentConfig, n: usize) -> Result<(LayerContext, Density)> {
    let coeffs = CoefficientVector::from_spec(&cfg.operator)?;
    let fs = FundamentalSolution::from_coeffs(&coeffs)?;
    let surface = build_surface(&geometry_with_n(&cfg.geometry, n))?;
    let mu = build_density(&cfg.density, &surface)?;
    Ok((LayerContext::new(fs, surface)?, mu))
}

const IDENTITY_NAMES: [&str; 5] = ["slay2", "wregn", "wstar", "grad_q", "pljr"];

fn identity_residuals(ctx: &LayerContext, mu: &Density) -> Result<[f64; 5]> {
    let g = Density::normal_component(&ctx.surface, 0);
    Ok([
        residual_slay2(ctx, mu, 0, 1)?,
        residual_wregn(ctx, mu, 0, 1)?,
        residual_wstar(ctx, mu)?,
        residual_grad_q(ctx, &g, mu, 0, 1)?,
        residual_pljr(ctx, &g, mu, 0, 1, 0)?,
    ])
}

/// Residual floor below which empirical convergence orders are meaningless.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Residual table for the five tangential-derivative identities over the
/// refinement ladder, with empirical convergence orders.
pub fn run_identity_suite(cfg: &ExperimentConfig) -> Result<RegularityReport> {
    cfg.validate()?;
    let ladder = if cfg.ladder.is_empty() {
        vec![64, 128, 256]
    } else {
        cfg.ladder.clone()
    };
    let mut rows = Vec::new();
    let mut table: Vec<[f64; 5]> = Vec::new();
    for &n in &ladder {
        let (ctx, mu) = context_for(cfg, n)?;
        let res = identity_residuals(&ctx, &mu)?;
        for (k, name) in IDENTITY_NAMES.iter().enumerate() {
            rows.push(CsvRow {
                experiment: "identity_suite".into(),
                n,
                quantity: format!("{name}_residual"),
                value: res[k],
            });
        }
        table.push(res);
    }
    let mut verdicts = Vec::new();
    for (k, name) in IDENTITY_NAMES.iter().enumerate() {
        let last = table.last().unwrap()[k];
        let mut min_order = f64::INFINITY;
        for w in table.windows(2) {
            let (prev, next) = (w[0][k], w[1][k]);
            if next > RESIDUAL_FLOOR {
                min_order = min_order.min((prev / next).log2());
            }
        }
        for (step, w) in table.windows(2).enumerate() {
            let order = if w[1][k] > 0.0 {
                (w[0][k] / w[1][k]).log2()
            } else {
                f64::INFINITY
            };
            rows.push(CsvRow {
                experiment: "identity_suite".into(),
                n: ladder[step + 1],
                quantity: format!("{name}_order"),
                value: if order.is_finite() { order } else { 99.0 },
            });
        }
        verdicts.push(Verdict::le(
            &format!("{name}_final_residual"),
            last,
            cfg.tolerance,
        ));
        let order_ok = min_order >= 2.0 || last <= RESIDUAL_FLOOR;
        verdicts.push(Verdict {
            name: format!("{name}_order_ge_2_or_floor"),
            measured: if min_order.is_finite() { min_order } else { 99.0 },
            tolerance: 2.0,
            comparison: ">=".into(),
            pass: order_ok,
        });
    }
    Ok(RegularityReport {
        experiment: "identity_suite".into(),
        seed: cfg.seed,
        verdicts,
        rows,
        kernel_norms: Vec::new(),
    })
}

/// Regularity-gain measurement: band-fit Hoelder exponents of the input's
/// tangential derivative and of the tangential derivative of W[mu], the
/// latter evaluated through the verified identity M_12[W[mu]] = T_12[mu].
pub fn measure_regularity_gain(cfg: &ExperimentConfig) -> Result<RegularityReport> {
    cfg.validate()?;
    let n = cfg.ladder.last().copied().unwrap_or(1024);
    let coeffs = CoefficientVector::from_spec(&cfg.operator)?;
    let fs = FundamentalSolution::from_coeffs(&coeffs)?;
    if fs.n() != 2 {
        return Err(Error::RoughDensityUnsupported);
    }
    let surface = build_surface(&geometry_with_n(&cfg.geometry, n))?;
    if surface.n != 2 {
        return Err(Error::RoughDensityUnsupported);
    }
    let mu = build_density(&cfg.density, &surface)?;
    let ctx = LayerContext::new(fs, surface)?;
    // band maxima drive sup-type fits; subsampling biases them low, so use
    // the full pair set at gain-measurement sizes
    let pairs = if ctx.len() <= 2048 {
        sample_pairs(&ctx.surface, PairPolicy::All)
    } else {
        sample_pairs(&ctx.surface, PairPolicy::Auto { seed: cfg.seed })
    };

    let m12_mu = tangential_m(&ctx.surface, 0, 1, &mu)?;
    let t12 = t_op(&ctx, 0, 1, &mu)?;

    let in_rows = band_rows_arclength(&ctx.surface, &m12_mu.values, &pairs, None);
    let out_rows = band_rows_arclength(
        &ctx.surface,
        &t12,
        &pairs,
        Some(&Modulus::Omega { theta: 1.0 }),
    );
    let fit_in = fit_exponent(&in_rows, 30);
    let fit_out = fit_exponent(&out_rows, 30);

    let mut rows = Vec::new();
    for r in &in_rows {
        rows.push(CsvRow {
            experiment: "measure_gain".into(),
            n,
            quantity: format!("input_band_{}_maxdiff", r.band),
            value: r.max_diff,
        });
    }
    for r in &out_rows {
        rows.push(CsvRow {
            experiment: "measure_gain".into(),
            n,
            quantity: format!("output_band_{}_maxdiff", r.band),
            value: r.max_diff,
        });
        rows.push(CsvRow {
            experiment: "measure_gain".into(),
            n,
            quantity: format!("output_band_{}_omega1_quotient", r.band),
            value: r.max_quotient,
        });
    }
    if let Some(f) = fit_in {
        rows.push(CsvRow {
            experiment: "measure_gain".into(),
            n,
            quantity: "input_fitted_exponent".into(),
            value: f,
        });
    }
    if let Some(f) = fit_out {
        rows.push(CsvRow {
            experiment: "measure_gain".into(),
            n,
            quantity: "output_fitted_exponent".into(),
            value: f,
        });
    }

    let mut verdicts = Vec::new();
    match cfg.density {
        DensitySpec::RoughC1 { beta, .. } if beta < 1.0 => {
            let fi = fit_in.unwrap_or(f64::NAN);
            verdicts.push(Verdict::within(
                "input_exponent",
                fi,
                beta - 0.05,
                beta + 0.05,
            ));
            let fo = fit_out.unwrap_or(f64::NAN);
            verdicts.push(Verdict::within("output_exponent", fo, 0.4, 1.0));
        }
        DensitySpec::RoughC1 { .. } => {
            // beta = 1: omega_1 band quotients of the output must not blow up
            let usable: Vec<&BandRow> = out_rows
                .iter()
                .filter(|r| r.count >= 30 && r.max_quotient > 0.0)
                .collect();
            let tail: Vec<&&BandRow> = usable.iter().rev().take(4).collect();
            let ratio = if tail.len() == 4 {
                let hi = tail.iter().map(|r| r.max_quotient).fold(0.0, f64::max);
                let lo = tail
                    .iter()
                    .map(|r| r.max_quotient)
                    .fold(f64::INFINITY, f64::min);
                hi / lo
            } else {
                f64::NAN
            };
            rows.push(CsvRow {
                experiment: "measure_gain".into(),
                n,
                quantity: "omega1_quotient_ratio_4bands".into(),
                value: ratio,
            });
            verdicts.push(Verdict::le("omega1_quotient_ratio", ratio, 2.0));
        }
        _ => {
            // smooth input: the fitted exponent saturates near 1
            let fo = fit_out.unwrap_or(f64::NAN);
            verdicts.push(Verdict::within("output_exponent_smooth", fo, 0.9, 1.1));
        }
    }

    Ok(RegularityReport {
        experiment: "measure_gain".into(),
        seed: cfg.seed,
        verdicts,
        rows,
        kernel_norms: Vec::new(),
    })
}

/// Kernel-norm reports for the shipped kernel menagerie, with refinement
/// deltas between N and 2N.
pub fn kernel_norm_report(cfg: &ExperimentConfig) -> Result<RegularityReport> {
    cfg.validate()?;
    let coeffs = CoefficientVector::from_spec(&cfg.operator)?;
    let fs = Arc::new(FundamentalSolution::from_coeffs(&coeffs)?);
    let n0 = match cfg.geometry {
        GeometrySpec::Circle { n, .. }
        | GeometrySpec::Ellipse { n, .. }
        | GeometrySpec::Kite { n }
        | GeometrySpec::Star { n, .. } => n,
        _ => return Err(Error::UnsupportedDimension(3)),
    };
    let dim = fs.n() as f64;
    let alpha = 1.0;

    let kernel_set = |surface: Arc<BoundarySurface>| -> Vec<(String, KernelHandle)> {
        let fs1 = fs.clone();
        let s1 = surface.clone();
        let grad = KernelHandle {
            eval: KernelEval::Nodal(Arc::new(move |i, k| {
                let z = crate::geometry::sub(&s1.nodes[i], &s1.nodes[k]);
                fs1.grad(&z).unwrap()[0]
            })),
            exponents: (dim - 1.0, dim, 1.0),
            homogeneity: None,
            odd: None,
        };
        let fs2 = fs.clone();
        let s2 = surface.clone();
        let hess = KernelHandle {
            eval: KernelEval::Nodal(Arc::new(move |i, k| {
                let z = crate::geometry::sub(&s2.nodes[i], &s2.nodes[k]);
                fs2.hess(&z).unwrap()[0][1]
            })),
            exponents: (dim, dim + 1.0, 1.0),
            homogeneity: None,
            odd: None,
        };
        let fs3 = fs.clone();
        let s3 = surface.clone();
        let tgrad = KernelHandle {
            eval: KernelEval::Nodal(Arc::new(move |i, k| {
                let z = crate::geometry::sub(&s3.nodes[i], &s3.nodes[k]);
                let h = fs3.hess(&z).unwrap();
                let nu = s3.normals[i];
                let mut v = h[1][0];
                for l in 0..2 {
                    v -= h[l][0] * nu[l] * nu[1];
                }
                v
            })),
            exponents: (dim, dim + alpha, alpha),
            homogeneity: None,
            odd: None,
        };
        let xi = KernelHandle::xi(&Density::coordinate(&surface, 0));
        vec![
            ("xi_x1".to_string(), xi),
            ("grad_s".to_string(), grad),
            ("hess_s".to_string(), hess),
            ("tgrad_s".to_string(), tgrad),
        ]
    };

    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut full_reports = Vec::new();
    let mut norms_by_level: Vec<Vec<(String, KernelNormReport)>> = Vec::new();
    for n in [n0, 2 * n0] {
        let surface = Arc::new(build_surface(&geometry_with_n(&cfg.geometry, n))?);
        let pairs = sample_pairs(&surface, PairPolicy::Auto { seed: cfg.seed });
        let triples = sample_triples(&surface, 4000, cfg.seed);
        let mut level = Vec::new();
        for (name, kernel) in kernel_set(surface.clone()) {
            let rep = norm_ks1s2s3(
                &surface,
                &kernel,
                kernel.exponents,
                &pairs,
                &triples,
                cfg.seed,
            )?;
            rows.push(CsvRow {
                experiment: "kernel_norms".into(),
                n,
                quantity: format!("{name}_first"),
                value: rep.first_component,
            });
            rows.push(CsvRow {
                experiment: "kernel_norms".into(),
                n,
                quantity: format!("{name}_second"),
                value: rep.second_component,
            });
            level.push((name, rep));
        }
        norms_by_level.push(level);
    }
    let fine = norms_by_level.pop().unwrap();
    let coarse = norms_by_level.pop().unwrap();
    for ((name, a), (_, b)) in coarse.iter().zip(&fine) {
        let growth_first = (b.first_component / a.first_component.max(1e-300) - 1.0).max(0.0);
        let growth_second = (b.second_component / a.second_component.max(1e-300) - 1.0).max(0.0);
        rows.push(CsvRow {
            experiment: "kernel_norms".into(),
            n: 2 * n0,
            quantity: format!("{name}_first_growth"),
            value: growth_first,
        });
        rows.push(CsvRow {
            experiment: "kernel_norms".into(),
            n: 2 * n0,
            quantity: format!("{name}_second_growth"),
            value: growth_second,
        });
        verdicts.push(Verdict::le(
            &format!("{name}_refinement_growth"),
            growth_first.max(growth_second),
            0.05,
        ));
        full_reports.push(b.clone());
    }
    // Lipschitz oracle for the difference kernel of x1
    let xi_fine = &fine[0].1;
    verdicts.push(Verdict::le(
        "xi_x1_first_component",
        xi_fine.first_component,
        1.01,
    ));
    verdicts.push(Verdict::le(
        "xi_x1_second_component",
        xi_fine.second_component,
        1.01,
    ));

    Ok(RegularityReport {
        experiment: "kernel_norms".into(),
        seed: cfg.seed,
        verdicts,
        rows,
        kernel_norms: full_reports,
    })
}

/// Remainder tabulation of S_a minus its principal part on a log grid,
/// with the per-family growth verdicts.
pub fn decomposition_probe(cfg: &ExperimentConfig) -> Result<RegularityReport> {
    cfg.validate()?;
    let coeffs = CoefficientVector::from_spec(&cfg.operator)?;
    let fs = FundamentalSolution::from_coeffs(&coeffs)?;
    let dir: [f64; 3] = if fs.n() == 2 {
        [0.6, 0.8, 0.0]
    } else {
        [0.6, 0.48, 0.64]
    };
    let mut rows = Vec::new();
    let grid: Vec<f64> = (0..=32)
        .map(|k| 1e-8 * (1e8f64).powf(k as f64 / 32.0))
        .collect();
    let rem_at = |r: f64| -> f64 {
        let x = [dir[0] * r, dir[1] * r, dir[2] * r];
        fs.remainder(&x).unwrap().norm()
    };
    for &r in &grid {
        rows.push(CsvRow {
            experiment: "decompose_fs".into(),
            n: 0,
            quantity: format!("remainder@r={r:.3e}"),
            value: rem_at(r),
        });
    }
    let mut verdicts = Vec::new();
    match fs.family {
        crate::fundsol::Family::LaplaceLike if !fs.has_drift() => {
            let worst = grid.iter().map(|&r| rem_at(r)).fold(0.0, f64::max);
            verdicts.push(Verdict::le("laplace_remainder_zero", worst, 1e-14));
        }
        crate::fundsol::Family::Helmholtz2d { .. }
        | crate::fundsol::Family::ModifiedHelmholtz2d { .. } => {
            let a = fs.remainder(&[dir[0] * 1e-4, dir[1] * 1e-4, 0.0]).unwrap();
            let b = fs.remainder(&[dir[0] * 1e-6, dir[1] * 1e-6, 0.0]).unwrap();
            verdicts.push(Verdict::le("finite_limit_diff", (a - b).norm(), 1e-3));
        }
        crate::fundsol::Family::Helmholtz3d { .. } => {
            // below r ~ 1e-6 the remainder evaluation cancels at relative
            // scale eps/r, which swamps the (1 - 3r/2) margin of the bound
            let mut worst_ratio: f64 = 0.0;
            for &r in grid.iter().filter(|&&r| (1e-6..=0.1).contains(&r)) {
                let bound = (1.0 + r) / (4.0 * PI);
                worst_ratio = worst_ratio.max(rem_at(r) / bound);
            }
            verdicts.push(Verdict::le("bounded_by_(1+r)/4pi", worst_ratio, 1.0));
        }
        _ => {
            // drifted Laplace-like: the remainder is the drift correction
            let worst = grid
                .iter()
                .filter(|&&r| r <= 0.1)
                .map(|&r| rem_at(r))
                .fold(0.0, f64::max);
            rows.push(CsvRow {
                experiment: "decompose_fs".into(),
                n: 0,
                quantity: "drift_remainder_sup_r<=0.1".into(),
                value: worst,
            });
        }
    }
    Ok(RegularityReport {
        experiment: "decompose_fs".into(),
        seed: cfg.seed,
        verdicts,
        rows,
        kernel_norms: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// output files
// ---------------------------------------------------------------------------

/// Writes report.json and data/<experiment>.csv under the config's out_dir.
pub fn write_outputs(cfg: &ExperimentConfig, report: &RegularityReport) -> Result<PathBuf> {
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out.join("data"))?;
    let report_path = out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(report)?)?;
    std::fs::write(
        out.join("data").join(format!("{}.csv", report.experiment)),
        report.csv(),
    )?;
    Ok(report_path)
}

pub fn run_experiment(kind: &str, cfg: &ExperimentConfig) -> Result<RegularityReport> {
    match kind {
        "verify-identities" => run_identity_suite(cfg),
        "measure-gain" => measure_regularity_gain(cfg),
        "kernel-norms" => kernel_norm_report(cfg),
        "decompose-fs" => decomposition_probe(cfg),
        other => Err(Error::BadConfig(format!("unknown experiment {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::GammaCoeff;

    fn laplace_spec(n: usize) -> OperatorSpec {
        let mut coeffs = Vec::new();
        for j in 0..n {
            let mut gamma = vec![0u32; n];
            gamma[j] = 2;
            coeffs.push(GammaCoeff {
                gamma,
                re: 1.0,
                im: 0.0,
            });
        }
        OperatorSpec { n, coeffs }
    }

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 7,
            operator: laplace_spec(2),
            geometry: GeometrySpec::Circle { r: 1.0, n: 64 },
            density: DensitySpec::CosTheta,
            ladder: vec![64, 128],
            tolerance: 1e-5,
            out_dir: "out".into(),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = base_config();
        cfg.ladder = vec![128, 64];
        assert!(matches!(cfg.validate(), Err(Error::BadConfig(_))));
        let mut cfg = base_config();
        cfg.tolerance = -1.0;
        assert!(cfg.validate().is_err());
        // n = 4 is rejected through the dimension check
        let mut cfg = base_config();
        cfg.operator = laplace_spec(4);
        assert!(matches!(
            run_identity_suite(&cfg),
            Err(Error::UnsupportedDimension(4))
        ));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = base_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.geometry, cfg.geometry);
        assert_eq!(back.density, cfg.density);
        // the documented geometry JSON shape parses
        let g: GeometrySpec =
            serde_json::from_str(r#"{"kind":"ellipse","a":2,"b":1,"n":256}"#).unwrap();
        assert_eq!(
            g,
            GeometrySpec::Ellipse {
                a: 2.0,
                b: 1.0,
                n: 256
            }
        );
    }

    #[test]
    fn identity_suite_passes_on_circle() {
        let cfg = base_config();
        let rep = run_identity_suite(&cfg).unwrap();
        assert!(rep.all_pass(), "verdicts: {:?}", rep.verdicts);
    }

    #[test]
    fn rough_c1_density_construction() {
        let s = build_surface(&GeometrySpec::Kite { n: 256 }).unwrap();
        let mu = build_density(
            &DensitySpec::RoughC1 {
                beta: 0.5,
                theta0: PI / 2.0,
            },
            &s,
        )
        .unwrap();
        // the derivative is centered, so the antiderivative closes up
        let dp = mu.dparam.as_ref().unwrap();
        let mut acc = C64::new(0.0, 0.0);
        let h = 2.0 * PI / s.len() as f64;
        for v in dp {
            acc += h * v;
        }
        // the nodal trapezoid of a C^{0,beta} profile carries O(h^{1+beta})
        assert!(acc.norm() < 5e-3, "derivative mean {acc}");
        // 3d rejection
        let sp = build_surface(&GeometrySpec::Sphere { r: 1.0, level: 1 }).unwrap();
        assert!(matches!(
            build_density(
                &DensitySpec::RoughC1 {
                    beta: 0.5,
                    theta0: 0.0
                },
                &sp
            ),
            Err(Error::RoughDensityUnsupported)
        ));
    }

    #[test]
    fn band_fit_recovers_known_exponent() {
        // f(t) = |sin((t - 1)/2)|^{1/2} on the unit circle has Hoelder
        // exponent 1/2; the band fit must recover it
        let s = build_surface(&GeometrySpec::Circle { r: 1.0, n: 512 }).unwrap();
        // theta0 on a grid node so the sup pairs exist at every scale
        let mu = build_density(
            &DensitySpec::RoughPower {
                beta: 0.5,
                theta0: PI / 2.0,
            },
            &s,
        )
        .unwrap();
        let pairs = sample_pairs(&s, PairPolicy::All);
        let rows = band_rows(&s, &mu.values, &pairs, None);
        let fit = fit_exponent(&rows, 30).unwrap();
        assert!((fit - 0.5).abs() < 0.05, "fitted exponent {fit}");
    }

    #[test]
    fn decomposition_probe_families() {
        let mut cfg = base_config();
        let rep = decomposition_probe(&cfg).unwrap();
        assert!(rep.all_pass());
        // helmholtz in 2d
        cfg.operator.coeffs.push(GammaCoeff {
            gamma: vec![0, 0],
            re: 1.0,
            im: 0.0,
        });
        let rep = decomposition_probe(&cfg).unwrap();
        assert!(rep.all_pass());
        // modified helmholtz in 3d
        let mut cfg3 = base_config();
        cfg3.operator = laplace_spec(3);
        cfg3.operator.coeffs.push(GammaCoeff {
            gamma: vec![0, 0, 0],
            re: -1.0,
            im: 0.0,
        });
        let rep = decomposition_probe(&cfg3).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.verdicts);
    }

    #[test]
    fn reports_byte_reproducible() {
        let cfg = base_config();
        let a = run_identity_suite(&cfg).unwrap();
        let b = run_identity_suite(&cfg).unwrap();
        assert_eq!(a.csv(), b.csv());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
