//! Eikonal phase φ and WKB amplitudes b = b₀ + εb₁ for both propagation branches.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use super::flow::{self, integrate_ray, invert_point, FlowField, Ray, RAY_DT};
use super::{japanese, ModelCoefficients};
use crate::error::{Error, Result};
use crate::pauli::{Spinor, C64, I};

/// A ray from (y, arctan ξ) observed at (t, x); all phase and amplitude data
/// at (t, x, ξ) follow from it.
#[derive(Clone, Copy, Debug)]
pub struct RayPoint {
    pub t: f64,
    pub x: f64,
    pub xi: f64,
    pub y: f64,
    pub ray: Ray,
}

impl RayPoint {
    /// φ = yξ − ⟨ξ⟩⁻¹λ(y)⁻¹∫₀ᵗλ²∘F.
    pub fn phi(&self, c: &ModelCoefficients) -> f64 {
        self.y * self.xi - self.ray[flow::I1] / (japanese(self.xi) * c.lambda.eval(self.y))
    }

    /// ∂ₓφ = tan ζ_t.
    pub fn p(&self) -> f64 {
        self.ray[flow::Z].tan()
    }

    /// ∂_ξφ = H.
    pub fn h(&self) -> f64 {
        self.y
    }

    /// ∂ₓH = 1/∂_yF̃.
    pub fn dh_dx(&self) -> f64 {
        1.0 / self.ray[flow::XY]
    }

    /// ∂²_ξφ = ∂_ξH = −∂_ζF̃ / (⟨ξ⟩²∂_yF̃).
    pub fn phi_xixi(&self) -> f64 {
        let j = japanese(self.xi);
        -self.ray[flow::XZ] / (j * j * self.ray[flow::XY])
    }

    /// ∂ₓ∂ₓφ.
    pub fn p_x(&self) -> f64 {
        let cz = self.ray[flow::Z].cos();
        self.ray[flow::ZY] / (cz * cz * self.ray[flow::XY])
    }
}

/// The observation of (t, x, ξ).
pub fn ray_point(c: &ModelCoefficients, t: f64, x: f64, xi: f64) -> Result<RayPoint> {
    let (y, ray) = invert_point(c, t, x, xi.atan(), None, RAY_DT)?;
    Ok(RayPoint { t, x, xi, y, ray })
}

/// φ(t, x, ξ) by the semi-explicit formula.
pub fn phase(c: &ModelCoefficients, t: f64, x: f64, xi: f64) -> Result<f64> {
    Ok(ray_point(c, t, x, xi)?.phi(c))
}

/// Ξ(t, x): the ξ with ∂_ξφ(t, x, ξ) = 0, i.e. the ray from y = 0 reaching x.
/// Defined for x in the open cone interval I_t.
pub fn critical_point(c: &ModelCoefficients, t: f64, x: f64) -> Result<Option<RayPoint>> {
    if t <= 0.0 {
        return Ok(None);
    }
    let (lo_x, hi_x) = flow::cone_interval(c, t)?;
    if x <= lo_x || x >= hi_x {
        return Ok(None);
    }
    let (mut lo, mut hi) = (-FRAC_PI_2, FRAC_PI_2);
    let mut z = ((x - 0.5 * (lo_x + hi_x)) / (0.5 * (hi_x - lo_x))).clamp(-0.999, 0.999).asin();
    for _ in 0..100 {
        let r = integrate_ray(c, 0.0, z, t, RAY_DT);
        let res = r[flow::X] - x;
        if res.abs() < 1e-13 * (1.0 + x.abs()) || hi - lo < 1e-15 {
            return Ok(Some(RayPoint { t, x: r[flow::X], xi: z.tan(), y: 0.0, ray: r }));
        }
        if res > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let next = z - res / r[flow::XZ];
        z = if r[flow::XZ] > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    Err(Error::NoConvergence { iterations: 100, residual: f64::NAN })
}

/// Phase derivatives on a (t, x, ξ) grid.
#[derive(Clone, Debug, Serialize)]
pub struct EikonalTable {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// Values at index (it·n_x + ix)·n_ξ + iξ.
    pub phi: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_xi: Vec<f64>,
    pub phi_xixi: Vec<f64>,
    /// Ξ(t, x) where defined (index it·n_x + ix).
    pub xi_crit: Vec<Option<f64>>,
    /// I_t per time.
    pub cone: Vec<(f64, f64)>,
    /// min of −∂²_ξφ·⟨ξ⟩³/t over samples with t > 0.
    pub concavity_constant: f64,
    /// min of |∂_ξφ| / (t⟨ξ⟩⁻² + d(x, I_t)) over samples with x outside I_t.
    pub nonstationary_constant: f64,
}

impl EikonalTable {
    pub fn idx(&self, it: usize, ix: usize, ik: usize) -> usize {
        (it * self.x.len() + ix) * self.xi.len() + ik
    }
}

/// Tabulates φ and its derivatives on the flow's (t, x) grid and the given ξ grid.
pub fn solve_eikonal(c: &ModelCoefficients, flow: &FlowField, xi: &[f64]) -> Result<EikonalTable> {
    let tmax = *flow.t.last().unwrap();
    if tmax > flow.t_valid + 1e-12 {
        return Err(Error::Validity { t: tmax, t_valid: flow.t_valid });
    }
    let (nt, nx, nk) = (flow.t.len(), flow.x.len(), xi.len());
    let pts: Vec<Result<RayPoint>> =
        (0..nt * nx * nk).into_par_iter().map(|idx| ray_point(c, flow.t[idx / (nx * nk)], flow.x[(idx / nk) % nx], xi[idx % nk])).collect();
    let mut tab = EikonalTable {
        t: flow.t.clone(),
        x: flow.x.clone(),
        xi: xi.to_vec(),
        phi: Vec::with_capacity(pts.len()),
        phi_x: Vec::with_capacity(pts.len()),
        phi_xi: Vec::with_capacity(pts.len()),
        phi_xixi: Vec::with_capacity(pts.len()),
        xi_crit: Vec::with_capacity(nt * nx),
        cone: Vec::with_capacity(nt),
        concavity_constant: f64::INFINITY,
        nonstationary_constant: f64::INFINITY,
    };
    for p in pts {
        let p = p?;
        tab.phi.push(p.phi(c));
        tab.phi_x.push(p.p());
        tab.phi_xi.push(p.h());
        tab.phi_xixi.push(p.phi_xixi());
    }
    for &t in &flow.t {
        tab.cone.push(flow::cone_interval(c, t)?);
    }
    for it in 0..nt {
        for ix in 0..nx {
            tab.xi_crit.push(critical_point(c, flow.t[it], flow.x[ix])?.map(|p| p.xi));
        }
    }
    for it in 0..nt {
        let t = flow.t[it];
        if t <= 0.0 {
            continue;
        }
        let (a, b) = tab.cone[it];
        for ix in 0..nx {
            let x = flow.x[ix];
            let d = if x < a { a - x } else if x > b { x - b } else { 0.0 };
            for (ik, &k) in xi.iter().enumerate() {
                let idx = tab.idx(it, ix, ik);
                let j = japanese(k);
                tab.concavity_constant = tab.concavity_constant.min(-tab.phi_xixi[idx] * j.powi(3) / t);
                if d > 0.0 {
                    tab.nonstationary_constant = tab.nonstationary_constant.min(tab.phi_xi[idx].abs() / (t / (j * j) + d));
                }
            }
        }
    }
    Ok(tab)
}

/// Amplitude data at one (t, x, ξ): α = |∂ₓH|^{1/2}e^{−iΘ−i∫s}, b₀, b₁.
#[derive(Clone, Copy, Debug)]
pub struct WkbValue {
    /// φ for the positive branch, −φ(t, x, −ξ) for the negative one.
    pub phase: f64,
    /// Θ = 2n⟨ξ⟩²λ(H)²∫μ/λ³, the viscous part of arg α (with ξ the ray momentum).
    pub theta_mu: f64,
    pub alpha: C64,
    pub b0: Spinor,
    pub b1: Spinor,
}

impl WkbValue {
    pub fn b(&self, eps: f64) -> Spinor {
        self.b0 + self.b1 * C64::new(eps, 0.0)
    }
}

/// Eigenvector u(p) of σ₁ + pσ₃ for ⟨p⟩, and w = iσ₂u for −⟨p⟩.
pub fn eigen_pair(p: f64) -> (Spinor, Spinor) {
    let th = FRAC_PI_2 - p.atan();
    let (s, co) = (0.5 * th).sin_cos();
    (Spinor::new(C64::new(co, 0.0), C64::new(s, 0.0)), Spinor::new(C64::new(s, 0.0), C64::new(-co, 0.0)))
}

struct AmplitudeJet {
    theta_mu: f64,
    alpha: C64,
    alpha_x: C64,
    p: f64,
    p_x: f64,
    lam: f64,
    lam1: f64,
}

fn amplitude_jet(c: &ModelCoefficients, n: usize, rp: &RayPoint) -> AmplitudeJet {
    let r = &rp.ray;
    let j2 = 1.0 + rp.xi * rp.xi;
    let [ly, ly1, _, _] = c.lambda.jet(rp.y);
    let nf = n as f64;
    let theta_mu = 2.0 * nf * j2 * ly * ly * r[flow::I2];
    let xy = r[flow::XY];
    let alpha = C64::from_polar(xy.powf(-0.5), -theta_mu - r[flow::I3]);
    let dlog = C64::new(-0.5 * r[flow::XYY] / xy, -2.0 * nf * j2 * (2.0 * ly * ly1 * r[flow::I2] + ly * ly * r[flow::I2Y]) - r[flow::I3Y]);
    let [lx, lx1, _, _] = c.lambda.jet(r[flow::X]);
    AmplitudeJet { theta_mu, alpha, alpha_x: alpha * dlog / xy, p: rp.p(), p_x: rp.p_x(), lam: lx, lam1: lx1 }
}

/// Positive branch at (t, x, ξ): phase φ, b₀ = αu, b₁ = βw.
pub fn wkb_plus(c: &ModelCoefficients, n: usize, rp: &RayPoint) -> WkbValue {
    let a = amplitude_jet(c, n, rp);
    let jp = japanese(a.p);
    let (sin_t, cos_t) = (1.0 / jp, a.p / jp);
    let p_t = -a.lam1 * jp - a.lam * a.p * a.p_x / jp;
    let th_x = -a.p_x / (jp * jp);
    let th_t = -p_t / (jp * jp);
    let g = I * a.alpha * (0.5 * th_t) - I * a.lam * (a.alpha_x * sin_t + a.alpha * (0.5 * th_x * cos_t))
        + a.alpha * C64::new(0.0, -0.5 * a.lam1 * sin_t);
    let beta = g / (2.0 * a.lam * jp);
    let (u, w) = eigen_pair(a.p);
    WkbValue { phase: rp.phi(c), theta_mu: a.theta_mu, alpha: a.alpha, b0: u * a.alpha, b1: w * beta }
}

/// Negative branch at (t, x, −ξ) where ξ = rp.xi: phase −φ(t, x, ξ),
/// p⁻ = −∂ₓφ, α⁻ = α(t, x, ξ), b₀ = α⁻w(p⁻), b₁ = β⁻u(p⁻).
pub fn wkb_minus(c: &ModelCoefficients, n: usize, rp: &RayPoint) -> WkbValue {
    let a = amplitude_jet(c, n, rp);
    let pm = -a.p;
    let pm_x = -a.p_x;
    let jp = japanese(pm);
    let (sin_t, cos_t) = (1.0 / jp, pm / jp);
    let p_t = a.lam1 * jp + a.lam * pm * pm_x / jp;
    let th_x = -pm_x / (jp * jp);
    let th_t = -p_t / (jp * jp);
    let g = -I * a.alpha * (0.5 * th_t) - I * a.lam * (a.alpha_x * sin_t + a.alpha * (0.5 * th_x * cos_t))
        + a.alpha * C64::new(0.0, -0.5 * a.lam1 * sin_t);
    let beta = -g / (2.0 * a.lam * jp);
    let (u, w) = eigen_pair(pm);
    WkbValue { phase: -rp.phi(c), theta_mu: a.theta_mu, alpha: a.alpha, b0: w * a.alpha, b1: u * beta }
}

/// b₀, b₁ for one branch on a (t, x, ξ) grid.
#[derive(Clone, Debug)]
pub struct WkbAmplitude {
    pub n: usize,
    pub eps: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub alpha: Vec<C64>,
    pub b0: Vec<Spinor>,
    pub b1: Vec<Spinor>,
}

impl WkbAmplitude {
    pub fn b(&self, idx: usize) -> Spinor {
        self.b0[idx] + self.b1[idx] * C64::new(self.eps, 0.0)
    }
}

/// Positive-branch amplitude b = b₀ + εb₁ tabulated on a grid.
pub fn transport_amplitude(c: &ModelCoefficients, n: usize, eps: f64, t: &[f64], x: &[f64], xi: &[f64]) -> Result<WkbAmplitude> {
    let (nx, nk) = (x.len(), xi.len());
    let vals: Vec<Result<WkbValue>> = (0..t.len() * nx * nk)
        .into_par_iter()
        .map(|idx| {
            let rp = ray_point(c, t[idx / (nx * nk)], x[(idx / nk) % nx], xi[idx % nk])?;
            Ok(wkb_plus(c, n, &rp))
        })
        .collect();
    let mut out = WkbAmplitude { n, eps, t: t.to_vec(), x: x.to_vec(), xi: xi.to_vec(), alpha: vec![], b0: vec![], b1: vec![] };
    for v in vals {
        let v = v?;
        out.alpha.push(v.alpha);
        out.b0.push(v.b0);
        out.b1.push(v.b1);
    }
    Ok(out)
}

/// The branch-`sign` WKB wave b e^{i·phase/ε} at (t, x) for frequency ξ.
pub fn wkb_wave(c: &ModelCoefficients, n: usize, eps: f64, sign: i8, t: f64, x: f64, xi: f64) -> Result<Spinor> {
    let v = if sign > 0 { wkb_plus(c, n, &ray_point(c, t, x, xi)?) } else { wkb_minus(c, n, &ray_point(c, t, x, -xi)?) };
    Ok(v.b(eps) * C64::from_polar(1.0, v.phase / eps))
}

/// Pointwise residual (εD_t + 𝔇_{n,ε})(b e^{i·phase/ε}) at (t, x) by high-order
/// central differences in t and x with step `step`.
pub fn wkb_residual(c: &ModelCoefficients, n: usize, eps: f64, sign: i8, t: f64, x: f64, xi: f64, step: f64) -> Result<Spinor> {
    // eighth-order central weights for the first and second derivative
    const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    const D2: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let wave = |tt: f64, xx: f64| wkb_wave(c, n, eps, sign, tt, xx, xi);
    let f0 = wave(t, x)?;
    let mut fx = Spinor::zeros();
    let mut fxx = f0 * C64::new(D2[0], 0.0);
    let mut ft = Spinor::zeros();
    for k in 1..=4 {
        let kf = k as f64;
        let (xp, xm) = (wave(t, x + kf * step)?, wave(t, x - kf * step)?);
        fx += (xp - xm) * C64::new(D1[k - 1], 0.0);
        fxx += (xp + xm) * C64::new(D2[k], 0.0);
        let (tp, tm) = (wave(t + kf * step, x)?, wave(t - kf * step, x)?);
        ft += (tp - tm) * C64::new(D1[k - 1], 0.0);
    }
    fx /= C64::new(step, 0.0);
    fxx /= C64::new(step * step, 0.0);
    ft /= C64::new(step, 0.0);
    let nf = n as f64;
    let [l, l1, _, _] = c.lambda.jet(x);
    let [mu, mu1, mu2, _] = c.mu.jet(x);
    let s = c.s.eval(x);
    // D = −i∂; ½(λD + Dλ) = λD + λ′/(2i); DμD = −(μ∂² + μ′∂)
    let mi = C64::new(0.0, -1.0);
    let dx = fx * mi;
    let sym = dx * C64::new(l, 0.0) + f0 * C64::new(0.0, -0.5 * l1);
    let dmd = -(fxx * C64::new(mu, 0.0) + fx * C64::new(mu1, 0.0));
    let a = sym * C64::new(eps, 0.0) + dmd * C64::new(2.0 * nf * eps.powi(3), 0.0) - f0 * C64::new(nf * eps.powi(3) * mu2 / 2.0, 0.0);
    let bop = f0 * C64::new(l, 0.0) + (dx * C64::new(2.0 * mu, 0.0) + f0 * C64::new(0.0, -mu1)) * C64::new(nf * eps * eps, 0.0);
    let out = Spinor::new(
        ft[0] * mi * eps + a[0] + bop[1] + f0[0] * C64::new(eps * s, 0.0),
        ft[1] * mi * eps - a[1] + bop[0] + f0[1] * C64::new(eps * s, 0.0),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_speed_phase_and_critical_point() {
        let c = ModelCoefficients::flat();
        for &(t, x, xi) in &[(0.4, 0.3, 2.0), (0.1, -1.5, -7.0), (0.0, 0.8, 3.0)] {
            let rp = ray_point(&c, t, x, xi).unwrap();
            assert!((rp.phi(&c) - (x * xi - t * japanese(xi))).abs() < 1e-12);
            assert!((rp.h() - (x - t * xi / japanese(xi))).abs() < 1e-12);
        }
        let (t, x) = (0.5, 0.3);
        let cp = critical_point(&c, t, x).unwrap().unwrap();
        assert!((cp.xi - x / (t * t - x * x).sqrt()).abs() < 1e-10);
        assert!(critical_point(&c, t, 0.6).unwrap().is_none());
    }

    #[test]
    fn amplitude_at_time_zero_is_unimodular() {
        let c = ModelCoefficients::parse("1 + 0.3*tanh(x)", "0.2", "0.1").unwrap();
        for &xi in &[-3.0, 0.0, 1.5] {
            let v = wkb_plus(&c, 3, &ray_point(&c, 0.0, 0.4, xi).unwrap());
            assert!((v.alpha - C64::new(1.0, 0.0)).norm() < 1e-14);
            assert!((v.b0.norm() - 1.0).abs() < 1e-14);
            let m = wkb_minus(&c, 3, &ray_point(&c, 0.0, 0.4, -xi).unwrap());
            assert!((m.b0.norm() - 1.0).abs() < 1e-14);
            assert!(v.b0.dotc(&m.b0).norm() < 1e-14);
        }
    }

    #[test]
    fn viscous_amplitude_closed_form() {
        let c = ModelCoefficients::parse("1", "1", "0").unwrap();
        let (n, t, x, xi) = (2, 0.3, 0.1, 1.7);
        let v = wkb_plus(&c, n, &ray_point(&c, t, x, xi).unwrap());
        let want = C64::from_polar(1.0, -2.0 * n as f64 * t * japanese(xi) * xi);
        assert!((v.alpha - want).norm() < 1e-10);
    }

    #[test]
    fn inviscid_amplitude_is_real_positive() {
        let c = ModelCoefficients::parse("1 + 0.3*tanh(x)", "0", "0").unwrap();
        let v = wkb_plus(&c, 5, &ray_point(&c, 0.5, 0.2, -1.0).unwrap());
        assert!(v.alpha.im.abs() < 1e-15 && v.alpha.re > 0.0);
        let rp = ray_point(&c, 0.5, 0.2, -1.0).unwrap();
        assert!((v.alpha.re - rp.dh_dx().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn phase_derivatives_match_differences() {
        let c = ModelCoefficients::parse("1 + 0.3*tanh(x)", "0", "0").unwrap();
        let (t, x, xi, d) = (0.4, 0.3, 1.2, 1e-3);
        let f = |tt: f64, xx: f64, kk: f64| phase(&c, tt, xx, kk).unwrap();
        let rp = ray_point(&c, t, x, xi).unwrap();
        let dxi = (f(t, x, xi + d) - f(t, x, xi - d)) / (2.0 * d);
        assert!((dxi - rp.h()).abs() < 1e-6);
        let dx = (f(t, x + d, xi) - f(t, x - d, xi)) / (2.0 * d);
        assert!((dx - rp.p()).abs() < 1e-6);
        let dt = (f(t + d, x, xi) - f(t - d, x, xi)) / (2.0 * d);
        assert!((dt + c.lambda.eval(x) * japanese(rp.p())).abs() < 1e-5);
        let dxixi = (f(t, x, xi + d) - 2.0 * f(t, x, xi) + f(t, x, xi - d)) / (d * d);
        assert!((dxixi - rp.phi_xixi()).abs() < 1e-4);
    }

    #[test]
    fn wkb_residual_is_second_order() {
        let c = ModelCoefficients::parse("1 + 0.3*tanh(x)", "0.2*cos(x)", "0.1*sin(x)").unwrap();
        for sign in [1i8, -1] {
            let r = |eps: f64| wkb_residual(&c, 2, eps, sign, 0.4, 0.25, 0.8, eps / 40.0).unwrap().norm();
            let ratio = r(0.04) / r(0.02);
            assert!((ratio - 4.0).abs() < 1.2, "branch {sign}: ratio {ratio}");
        }
    }
}
