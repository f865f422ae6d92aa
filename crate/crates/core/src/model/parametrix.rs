//! The oscillatory parametrix 𝔈_{n,ε} = 𝔈⁺ + 𝔈⁻, evaluated by direct
//! quadrature in ξ and by its stationary-phase leading term.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use super::eikonal::{critical_point, eigen_pair, wkb_minus, wkb_plus, RayPoint};
use super::flow::{self, ray_start, rk4_ray, Ray, RAY_DIM, RAY_DT};
use super::ModelCoefficients;
use crate::error::{Error, Result};
use crate::pauli::{Spinor, C64};

/// Fourier transform â(ξ) = ∫e^{−ixξ}a(x)dx of a two-component profile.
pub trait Spectrum: Sync {
    fn eval(&self, xi: f64) -> Spinor;
    /// |ξ| beyond which |â| < 1e−12·max|â|.
    fn cutoff(&self) -> f64;
    /// a(x).
    fn profile(&self, x: f64) -> Spinor;
}

/// a(x) = v·e^{−x²/(2w²)}.
#[derive(Clone, Copy, Debug)]
pub struct GaussianSpectrum {
    pub v: Spinor,
    pub width: f64,
}

impl Spectrum for GaussianSpectrum {
    fn eval(&self, xi: f64) -> Spinor {
        let w = self.width;
        self.v * C64::new(w * (2.0 * PI).sqrt() * (-0.5 * w * w * xi * xi).exp(), 0.0)
    }

    fn cutoff(&self) -> f64 {
        (2.0 * 1e12f64.ln()).sqrt() / self.width
    }

    fn profile(&self, x: f64) -> Spinor {
        self.v * C64::new((-0.5 * x * x / (self.width * self.width)).exp(), 0.0)
    }
}

/// A profile sampled on a uniform grid; â by the trapezoid sum.
#[derive(Clone, Debug)]
pub struct SampledSpectrum {
    pub x: Vec<f64>,
    pub a: Vec<Spinor>,
    cut: f64,
}

impl SampledSpectrum {
    pub fn new(x: Vec<f64>, a: Vec<Spinor>) -> Result<Self> {
        if x.len() != a.len() || x.len() < 4 {
            return Err(Error::Invalid("sampled profile needs matching grids with at least four points".into()));
        }
        let peak = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let edge = a[0].norm().max(a[a.len() - 1].norm());
        if edge > 1e-12 * peak.max(1e-300) {
            return Err(Error::Resolution(format!("profile is {edge:.2e} at the sampling-box boundary")));
        }
        let mut s = Self { x, a, cut: 0.0 };
        let dx = s.x[1] - s.x[0];
        let kmax = PI / dx;
        let top = s.eval(0.0).norm().max(1e-300);
        let mut cut = kmax;
        let steps = 2000;
        for k in (0..=steps).rev() {
            let xi = kmax * k as f64 / steps as f64;
            if s.eval(xi).norm().max(s.eval(-xi).norm()) > 1e-12 * top {
                cut = (xi + kmax / steps as f64).min(kmax);
                break;
            }
        }
        s.cut = cut;
        Ok(s)
    }
}

impl Spectrum for SampledSpectrum {
    fn eval(&self, xi: f64) -> Spinor {
        let dx = self.x[1] - self.x[0];
        let mut s = Spinor::zeros();
        for (x, a) in self.x.iter().zip(&self.a) {
            s += a * C64::from_polar(dx, -x * xi);
        }
        s
    }

    fn cutoff(&self) -> f64 {
        self.cut
    }

    fn profile(&self, x: f64) -> Spinor {
        let dx = self.x[1] - self.x[0];
        let u = (x - self.x[0]) / dx;
        if u < 0.0 || u > (self.x.len() - 1) as f64 {
            return Spinor::zeros();
        }
        let j = (u.floor() as usize).min(self.x.len() - 2);
        let s = u - j as f64;
        self.a[j] * C64::new(1.0 - s, 0.0) + self.a[j + 1] * C64::new(s, 0.0)
    }
}

/// One (n, ε, â) request.
pub struct ParametrixJob<'a> {
    pub n: usize,
    pub eps: f64,
    pub spectrum: &'a dyn Spectrum,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParametrixEval {
    pub t: f64,
    pub n: usize,
    pub eps: f64,
    pub x: Vec<f64>,
    /// Direct quadrature of both branches.
    #[serde(skip)]
    pub quadrature: Vec<Spinor>,
    /// Stationary-phase leading term (zero outside I_t).
    #[serde(skip)]
    pub stationary: Vec<Spinor>,
    pub cone: (f64, f64),
    pub dxi: f64,
    pub fine_nodes: usize,
}

impl ParametrixEval {
    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn l2(values: &[Spinor], dx: f64) -> f64 {
        (values.iter().map(|v| v.norm_squared()).sum::<f64>() * dx).sqrt()
    }

    pub fn linf(values: &[Spinor]) -> f64 {
        values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureOptions {
    /// Coarse ζ nodes spanning the ξ-cutoff.
    pub coarse_nodes: usize,
    /// Fan spacing in the initial position.
    pub dy: f64,
    /// Upper bound on (fine ξ nodes) × (x points).
    pub budget: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { coarse_nodes: 640, dy: 0.02, budget: 4e9 }
    }
}

struct Fans {
    zeta: Vec<f64>,
    y: Vec<f64>,
    rays: Vec<Ray>,
}

impl Fans {
    fn ray(&self, iz: usize, iy: usize) -> &Ray {
        &self.rays[iz * self.y.len() + iy]
    }

    /// The fan ray through x at angle index iz, by cubic Hermite interpolation in y.
    fn locate(&self, iz: usize, t: f64, x: f64) -> Option<RayPoint> {
        let ny = self.y.len();
        let xs = |j: usize| self.ray(iz, j)[flow::X];
        if x < xs(0) || x > xs(ny - 1) {
            return None;
        }
        let (mut lo, mut hi) = (0, ny - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if xs(mid) <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let j = lo;
        let h = self.y[j + 1] - self.y[j];
        let (r0, r1) = (self.ray(iz, j), self.ray(iz, j + 1));
        let herm = |s: f64, f0: f64, d0: f64, f1: f64, d1: f64| {
            let (s2, s3) = (s * s, s * s * s);
            (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * h * d1
        };
        let dherm = |s: f64, f0: f64, d0: f64, f1: f64, d1: f64| {
            let s2 = s * s;
            ((6.0 * s2 - 6.0 * s) * f0 + (3.0 * s2 - 4.0 * s + 1.0) * h * d0 + (-6.0 * s2 + 6.0 * s) * f1 + (3.0 * s2 - 2.0 * s) * h * d1) / h
        };
        let mut s = (x - r0[flow::X]) / (r1[flow::X] - r0[flow::X]);
        for _ in 0..20 {
            let f = herm(s, r0[flow::X], r0[flow::XY], r1[flow::X], r1[flow::XY]) - x;
            let d = dherm(s, r0[flow::X], r0[flow::XY], r1[flow::X], r1[flow::XY]) * h;
            let step = f / d;
            s = (s - step).clamp(0.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        // neighbours for Catmull-Rom tangents of components without tracked derivatives
        let rm = self.ray(iz, j.saturating_sub(1));
        let rp = self.ray(iz, (j + 2).min(ny - 1));
        let hm = self.y[j] - self.y[j.saturating_sub(1)];
        let hp = self.y[(j + 2).min(ny - 1)] - self.y[j + 1];
        let tangent = |k: usize, a: &Ray, b: &Ray, span: f64| if span > 0.0 { (b[k] - a[k]) / span } else { 0.0 };
        let mut ray = [0.0; RAY_DIM];
        let pairs = [(flow::X, flow::XY), (flow::Z, flow::ZY), (flow::XY, flow::XYY), (flow::ZY, flow::ZYY), (flow::I1, flow::I1Y), (flow::I2, flow::I2Y), (flow::I3, flow::I3Y)];
        for (k, dk) in pairs {
            ray[k] = herm(s, r0[k], r0[dk], r1[k], r1[dk]);
        }
        for k in [flow::XZ, flow::ZZ, flow::XYY, flow::ZYY, flow::I1Y, flow::I2Y, flow::I3Y] {
            let d0 = tangent(k, rm, r1, hm + h);
            let d1 = tangent(k, r0, rp, h + hp);
            ray[k] = herm(s, r0[k], d0, r1[k], d1);
        }
        ray[flow::X] = x;
        let y = self.y[j] + s * h;
        Some(RayPoint { t, x, xi: self.zeta[iz].tan(), y, ray })
    }
}

fn catmull_rom(s: f64) -> [f64; 4] {
    let (s2, s3) = (s * s, s * s * s);
    [0.5 * (-s3 + 2.0 * s2 - s), 0.5 * (3.0 * s3 - 5.0 * s2 + 2.0), 0.5 * (-3.0 * s3 + 4.0 * s2 + s), 0.5 * (s3 - s2)]
}

fn hermite(s: f64) -> [f64; 4] {
    let (s2, s3) = (s * s, s * s * s);
    [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2]
}

/// Per-(x, coarse node) data shared by both branches.
#[derive(Clone, Copy, Default)]
struct Node {
    phi: f64,
    dphi: f64,
    theta1: f64,
    plus: [Spinor; 2],
    minus: [Spinor; 2],
    ok: bool,
}

/// Evaluates the parametrix for every job at each of the increasing times on the grid `x`.
/// Rays are shared across jobs and integrated once through all times.
pub fn evaluate_parametrix_series(
    c: &ModelCoefficients,
    times: &[f64],
    x: &[f64],
    jobs: &[ParametrixJob],
    opts: &QuadratureOptions,
) -> Result<Vec<Vec<ParametrixEval>>> {
    if x.len() < 2 || jobs.is_empty() {
        return Err(Error::Invalid("parametrix needs an x grid and at least one job".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::Invalid("times must be non-negative and increasing".into()));
    }
    let xi_cut = jobs.iter().map(|j| j.spectrum.cutoff()).fold(0.0, f64::max);
    let tmax = times.last().copied().unwrap_or(0.0);
    let (xmin, xmax) = (x[0], x[x.len() - 1]);
    let lam_max = c.lambda_max(xmin - 2.0 - 2.0 * tmax, xmax + 2.0 + 2.0 * tmax);
    c.check_positive(xmin - lam_max * tmax - 1.0, xmax + lam_max * tmax + 1.0)?;
    // coarse ζ nodes, two extra on each side for Catmull-Rom stencils
    let z_cut = xi_cut.atan();
    let nk = opts.coarse_nodes.max(16);
    let dz = 2.0 * z_cut / (nk - 1) as f64;
    let zeta: Vec<f64> = (0..nk + 4).map(|k| -z_cut + (k as f64 - 2.0) * dz).collect();
    if zeta[nk + 3] >= FRAC_PI_2 {
        return Err(Error::Invalid("coarse zeta grid too wide".into()));
    }
    let pad = lam_max * tmax + 0.2;
    let ny = (((xmax - xmin) + 2.0 * pad) / opts.dy).ceil() as usize + 1;
    let y: Vec<f64> = (0..ny).map(|k| xmin - pad + k as f64 * opts.dy).collect();
    let mut fans = Fans { zeta: zeta.clone(), y: y.clone(), rays: Vec::with_capacity(zeta.len() * ny) };
    for &z in &zeta {
        for &yy in &y {
            fans.rays.push(ray_start(yy, z));
        }
    }
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / RAY_DT).ceil() as usize;
            let dt = span / steps as f64;
            fans.rays.par_iter_mut().for_each(|r| {
                for _ in 0..steps {
                    *r = rk4_ray(c, r, dt);
                }
            });
        }
        now = t;
        let mut row = Vec::with_capacity(jobs.len());
        for job in jobs {
            row.push(evaluate_at(c, t, x, job, &fans, dz, nk, opts)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Single-time convenience wrapper.
pub fn evaluate_parametrix(c: &ModelCoefficients, n: usize, eps: f64, spectrum: &dyn Spectrum, t: f64, x: &[f64]) -> Result<ParametrixEval> {
    let jobs = [ParametrixJob { n, eps, spectrum }];
    let mut v = evaluate_parametrix_series(c, &[t], x, &jobs, &QuadratureOptions::default())?;
    Ok(v.remove(0).remove(0))
}

#[allow(clippy::too_many_arguments)]
fn evaluate_at(c: &ModelCoefficients, t: f64, x: &[f64], job: &ParametrixJob, fans: &Fans, dz: f64, nk: usize, opts: &QuadratureOptions) -> Result<ParametrixEval> {
    let (n, eps) = (job.n, job.eps);
    let nz = fans.zeta.len();
    // coarse data per x
    let nodes: Vec<Vec<Node>> = x
        .par_iter()
        .map(|&xx| {
            (0..nz)
                .map(|iz| match fans.locate(iz, t, xx) {
                    None => Node::default(),
                    Some(rp) => {
                        let p = wkb_plus(c, n, &rp);
                        let m = wkb_minus(c, n, &rp);
                        let j2 = 1.0 + rp.xi * rp.xi;
                        let undo = C64::from_polar(1.0, p.theta_mu);
                        Node {
                            phi: p.phase,
                            dphi: rp.y * j2,
                            theta1: p.theta_mu,
                            plus: [p.b0 * undo, p.b1 * undo],
                            minus: [m.b0 * undo, m.b1 * undo],
                            ok: true,
                        }
                    }
                })
                .collect()
        })
        .collect();
    if let Some(ix) = nodes.iter().position(|row| row.iter().any(|nd| !nd.ok)) {
        return Err(Error::Numerical(format!("ray fan does not cover x = {} at t = {t}", x[ix])));
    }
    // |∂_ξφ| = |H|, and dphi stores H(1 + ξ²)
    let mut hmax: f64 = 1e-3;
    for row in &nodes {
        for (iz, nd) in row.iter().enumerate() {
            let xi = fans.zeta[iz].tan();
            hmax = hmax.max((nd.dphi / (1.0 + xi * xi)).abs());
        }
    }
    let xi_cut = job.spectrum.cutoff().min(fans.zeta[nk + 1].tan());
    let dxi = eps / (10.0 * hmax);
    let nf = (2.0 * xi_cut / dxi).ceil() as usize + 1;
    if nf as f64 * x.len() as f64 > opts.budget {
        let floor = eps * nf as f64 * x.len() as f64 / opts.budget;
        return Err(Error::Budget(format!(
            "{nf} quadrature nodes x {} points exceeds the budget {:.1e}; use eps >= {floor:.2e}",
            x.len(),
            opts.budget
        )));
    }
    let dxi = 2.0 * xi_cut / (nf - 1) as f64;
    struct Fine {
        k: usize,
        hw: [f64; 4],
        cw: [f64; 4],
        pp: C64,
        pm: C64,
    }
    let z0 = fans.zeta[2];
    let fine: Vec<Fine> = (0..nf)
        .into_par_iter()
        .map(|j| {
            let xi = -xi_cut + j as f64 * dxi;
            let u = (xi.atan() - z0) / dz;
            let k = (u.floor().max(0.0) as usize).min(nk - 2);
            let s = u - k as f64;
            let (uu, _) = eigen_pair(xi);
            let (_, wm) = eigen_pair(-xi);
            let ap = job.spectrum.eval(xi);
            let am = job.spectrum.eval(-xi);
            Fine { k: k + 2, hw: hermite(s), cw: catmull_rom(s), pp: uu[0] * ap[0] + uu[1] * ap[1], pm: wm[0] * am[0] + wm[1] * am[1] }
        })
        .collect();
    let pref = dxi / (2.0 * PI * eps.sqrt());
    let e = C64::new(eps, 0.0);
    let quadrature: Vec<Spinor> = nodes
        .par_iter()
        .map(|row| {
            let mut acc = Spinor::zeros();
            for f in &fine {
                let k = f.k;
                let (a, b) = (&row[k], &row[k + 1]);
                let phi = f.hw[0] * a.phi + f.hw[1] * dz * a.dphi + f.hw[2] * b.phi + f.hw[3] * dz * b.dphi;
                let st = [&row[k - 1], a, b, &row[k + 2]];
                let mut theta = 0.0;
                let mut cp = Spinor::zeros();
                let mut cm = Spinor::zeros();
                for q in 0..4 {
                    let w = f.cw[q];
                    theta += w * st[q].theta1;
                    cp += (st[q].plus[0] + st[q].plus[1] * e) * C64::new(w, 0.0);
                    cm += (st[q].minus[0] + st[q].minus[1] * e) * C64::new(w, 0.0);
                }
                let ep = C64::from_polar(1.0, phi / eps - theta);
                let em = C64::from_polar(1.0, -phi / eps - theta);
                acc += cp * (ep * f.pp) + cm * (em * f.pm);
            }
            acc * C64::new(pref, 0.0)
        })
        .collect();
    let cone = if t > 0.0 { flow::cone_interval(c, t)? } else { (0.0, 0.0) };
    let stationary: Vec<Result<Spinor>> = x
        .par_iter()
        .map(|&xx| {
            let Some(rp) = critical_point(c, t, xx)? else { return Ok(Spinor::zeros()) };
            let p = wkb_plus(c, n, &rp);
            let m = wkb_minus(c, n, &rp);
            let d2 = rp.phi_xixi();
            let xi = rp.xi;
            let (uu, _) = eigen_pair(xi);
            let (_, wm) = eigen_pair(-xi);
            let ap = job.spectrum.eval(xi);
            let am = job.spectrum.eval(-xi);
            let pp = uu[0] * ap[0] + uu[1] * ap[1];
            let pm = wm[0] * am[0] + wm[1] * am[1];
            let gp = C64::new(0.0, 1.0 / (2.0 * PI * d2)).sqrt();
            let gm = C64::new(0.0, -1.0 / (2.0 * PI * d2)).sqrt();
            Ok(p.b(eps) * (C64::from_polar(1.0, p.phase / eps) * gp * pp) + m.b(eps) * (C64::from_polar(1.0, m.phase / eps) * gm * pm))
        })
        .collect();
    let stationary = stationary.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ParametrixEval { t, n, eps, x: x.to_vec(), quadrature, stationary, cone, dxi, fine_nodes: nf })
}
