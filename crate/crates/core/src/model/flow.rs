//! Bicharacteristic flow of λ(x)⟨ξ⟩ in the compactified variable ζ = arctan ξ:
//! ẋ = λ(x) sin ζ, ζ̇ = −λ′(x) cos ζ, with first and second variations and the
//! path integrals needed by the eikonal phase and the WKB amplitude.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use super::ModelCoefficients;
use crate::error::{Error, Result};

/// Default RK4 step for ray integration.
pub const RAY_DT: f64 = 0.01;

pub const X: usize = 0;
pub const Z: usize = 1;
/// ∂x/∂y, ∂ζ/∂y with y the initial position.
pub const XY: usize = 2;
pub const ZY: usize = 3;
/// ∂x/∂ζ₀, ∂ζ/∂ζ₀ with ζ₀ the initial angle.
pub const XZ: usize = 4;
pub const ZZ: usize = 5;
pub const XYY: usize = 6;
pub const ZYY: usize = 7;
/// ∫λ², ∫μ sin ζ/λ², ∫s along the ray, and their y-derivatives.
pub const I1: usize = 8;
pub const I2: usize = 9;
pub const I3: usize = 10;
pub const I1Y: usize = 11;
pub const I2Y: usize = 12;
pub const I3Y: usize = 13;
pub const RAY_DIM: usize = 14;

pub type Ray = [f64; RAY_DIM];

pub fn ray_start(y: f64, zeta0: f64) -> Ray {
    let mut r = [0.0; RAY_DIM];
    r[X] = y;
    r[Z] = zeta0;
    r[XY] = 1.0;
    r[ZZ] = 1.0;
    r
}

pub fn ray_rhs(c: &ModelCoefficients, r: &Ray) -> Ray {
    let [l, l1, l2, l3] = c.lambda.jet(r[X]);
    let (sz, cz) = r[Z].sin_cos();
    let mu = c.mu.eval(r[X]);
    let mu1 = c.mu.deriv(1, r[X]);
    let s1 = c.s.deriv(1, r[X]);
    let (xy, zy) = (r[XY], r[ZY]);
    let mut d = [0.0; RAY_DIM];
    d[X] = l * sz;
    d[Z] = -l1 * cz;
    // variational matrix [[λ′ sin ζ, λ cos ζ], [−λ″ cos ζ, λ′ sin ζ]]
    let (j11, j12, j21, j22) = (l1 * sz, l * cz, -l2 * cz, l1 * sz);
    d[XY] = j11 * xy + j12 * zy;
    d[ZY] = j21 * xy + j22 * zy;
    d[XZ] = j11 * r[XZ] + j12 * r[ZZ];
    d[ZZ] = j21 * r[XZ] + j22 * r[ZZ];
    d[XYY] = j11 * r[XYY] + j12 * r[ZYY] + l2 * sz * xy * xy + 2.0 * l1 * cz * xy * zy - l * sz * zy * zy;
    d[ZYY] = j21 * r[XYY] + j22 * r[ZYY] - l3 * cz * xy * xy + 2.0 * l2 * sz * xy * zy + l1 * cz * zy * zy;
    d[I1] = l * l;
    d[I2] = mu * sz / (l * l);
    d[I3] = c.s.eval(r[X]);
    d[I1Y] = 2.0 * l * l1 * xy;
    d[I2Y] = (mu1 / (l * l) - 2.0 * mu * l1 / (l * l * l)) * sz * xy + mu * cz / (l * l) * zy;
    d[I3Y] = s1 * xy;
    d
}

fn axpy(r: &Ray, a: f64, k: &Ray) -> Ray {
    std::array::from_fn(|i| r[i] + a * k[i])
}

pub fn rk4_ray(c: &ModelCoefficients, r: &Ray, dt: f64) -> Ray {
    let k1 = ray_rhs(c, r);
    let k2 = ray_rhs(c, &axpy(r, 0.5 * dt, &k1));
    let k3 = ray_rhs(c, &axpy(r, 0.5 * dt, &k2));
    let k4 = ray_rhs(c, &axpy(r, dt, &k3));
    std::array::from_fn(|i| r[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn advance(c: &ModelCoefficients, mut r: Ray, span: f64, max_dt: f64) -> Ray {
    if span <= 0.0 {
        return r;
    }
    let n = (span / max_dt).ceil().max(1.0) as usize;
    let dt = span / n as f64;
    for _ in 0..n {
        r = rk4_ray(c, &r, dt);
    }
    r
}

/// The ray from (y, ζ₀) at time t.
pub fn integrate_ray(c: &ModelCoefficients, y: f64, zeta0: f64, t: f64, max_dt: f64) -> Ray {
    advance(c, ray_start(y, zeta0), t, max_dt)
}

/// The ray from (y, ζ₀) at each of the increasing times `times`.
pub fn integrate_ray_times(c: &ModelCoefficients, y: f64, zeta0: f64, times: &[f64], max_dt: f64) -> Vec<Ray> {
    let mut r = ray_start(y, zeta0);
    let mut now = 0.0;
    times
        .iter()
        .map(|&t| {
            r = advance(c, r, t - now, max_dt);
            now = t;
            r
        })
        .collect()
}

/// Solves F̃(t, y, ζ₀) = x for y by safeguarded Newton iteration on the ray.
pub fn invert_point(c: &ModelCoefficients, t: f64, x: f64, zeta0: f64, guess: Option<f64>, max_dt: f64) -> Result<(f64, Ray)> {
    let mut y = guess.unwrap_or_else(|| x - t * c.lambda.eval(x) * zeta0.sin());
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let r = integrate_ray(c, y, zeta0, t, max_dt);
        let res = r[X] - x;
        if !res.is_finite() {
            return Err(Error::NonFinite(format!("ray from y = {y} at t = {t}")));
        }
        if res.abs() < 1e-12 * (1.0 + x.abs()) {
            return Ok((y, r));
        }
        last = res;
        if res > 0.0 {
            hi = hi.min(y);
        } else {
            lo = lo.max(y);
        }
        let mut next = y - res / r[XY];
        if !(r[XY] > 0.0) || !next.is_finite() || next <= lo || next >= hi {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if res > 0.0 {
                y - res.abs().max(0.1)
            } else {
                y + res.abs().max(0.1)
            };
        }
        y = next;
    }
    Err(Error::NoConvergence { iterations: 60, residual: last.abs() })
}

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Λ(y) = ∫₀ʸ dy/λ by composite eight-point Gauss–Legendre.
pub fn lambda_primitive(c: &ModelCoefficients, y: f64) -> f64 {
    let panels = (y.abs() / 0.05).ceil().max(1.0) as usize;
    let w = y / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * w;
        for k in 0..4 {
            for sgn in [-1.0, 1.0] {
                s += GL_WEIGHTS[k] / c.lambda.eval(mid + sgn * 0.5 * w * GL_NODES[k]);
            }
        }
    }
    0.5 * w * s
}

/// Λ⁻¹(v) by Newton iteration with Λ′ = 1/λ.
pub fn lambda_primitive_inverse(c: &ModelCoefficients, v: f64) -> Result<f64> {
    let mut y = v * c.lambda.eval(0.0);
    for _ in 0..50 {
        let r = lambda_primitive(c, y) - v;
        if r.abs() < 1e-14 * (1.0 + v.abs()) {
            return Ok(y);
        }
        y -= r * c.lambda.eval(y);
    }
    Err(Error::NoConvergence { iterations: 50, residual: (lambda_primitive(c, y) - v).abs() })
}

/// F_±(t, x) = Λ⁻¹(Λ(x) ± t), the limits of F̃ as ζ → ±π/2.
pub fn flow_limit(c: &ModelCoefficients, t: f64, x: f64, sign: f64) -> Result<f64> {
    lambda_primitive_inverse(c, lambda_primitive(c, x) + sign * t)
}

/// Endpoints (x_t⁻, x_t⁺) of the cone interval I_t.
pub fn cone_interval(c: &ModelCoefficients, t: f64) -> Result<(f64, f64)> {
    Ok((flow_limit(c, t, 0.0, -1.0)?, flow_limit(c, t, 0.0, 1.0)?))
}

/// Forward flow tabulated on a (t, x, ζ) grid.
#[derive(Clone, Debug)]
pub struct FlowField {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub zeta: Vec<f64>,
    /// F̃, G̃ and ∂ₓF̃ at index (it·n_x + ix)·n_ζ + iζ.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub dfdx: Vec<f64>,
    /// F_± on the (t, x) grid.
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    /// Largest grid time up to which infₓ ∂ₓF̃ ≥ 1/2.
    pub t_valid: f64,
    pub max_dt: f64,
}

impl FlowField {
    pub fn idx(&self, it: usize, ix: usize, iz: usize) -> usize {
        (it * self.x.len() + ix) * self.zeta.len() + iz
    }
}

pub fn integrate_flow(c: &ModelCoefficients, t: &[f64], x: &[f64], zeta: &[f64]) -> Result<FlowField> {
    if t.is_empty() || x.is_empty() || zeta.is_empty() {
        return Err(Error::Invalid("flow grids must be non-empty".into()));
    }
    if t.windows(2).any(|w| w[1] < w[0]) || t[0] < 0.0 {
        return Err(Error::Invalid("time grid must be non-negative and increasing".into()));
    }
    if zeta.iter().any(|z| z.abs() > FRAC_PI_2 + 1e-15) {
        return Err(Error::Invalid("zeta grid must lie in [-pi/2, pi/2]".into()));
    }
    let (nt, nx, nz) = (t.len(), x.len(), zeta.len());
    let rays: Vec<Vec<Ray>> = (0..nx * nz)
        .into_par_iter()
        .map(|k| integrate_ray_times(c, x[k / nz], zeta[k % nz], t, RAY_DT))
        .collect();
    let mut f = vec![0.0; nt * nx * nz];
    let mut g = f.clone();
    let mut dfdx = f.clone();
    for (k, series) in rays.iter().enumerate() {
        for (it, r) in series.iter().enumerate() {
            let idx = it * nx * nz + k;
            f[idx] = r[X];
            g[idx] = r[Z];
            dfdx[idx] = r[XY];
        }
    }
    let mut t_valid = t[0];
    for it in 0..nt {
        let worst = dfdx[it * nx * nz..(it + 1) * nx * nz].iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if worst >= 0.5 {
            t_valid = t[it];
        } else {
            break;
        }
    }
    let mut f_plus = vec![0.0; nt * nx];
    let mut f_minus = vec![0.0; nt * nx];
    for it in 0..nt {
        for ix in 0..nx {
            f_plus[it * nx + ix] = flow_limit(c, t[it], x[ix], 1.0)?;
            f_minus[it * nx + ix] = flow_limit(c, t[it], x[ix], -1.0)?;
        }
    }
    Ok(FlowField { t: t.to_vec(), x: x.to_vec(), zeta: zeta.to_vec(), f, g, dfdx, f_plus, f_minus, t_valid, max_dt: RAY_DT })
}

/// H̃ on the same (t, x, ζ) grid: H̃(t, ·, ζ) inverts F̃(t, ·, ζ).
#[derive(Clone, Debug)]
pub struct InverseFlow {
    pub h: Vec<f64>,
    pub max_residual: f64,
}

pub fn invert_flow(c: &ModelCoefficients, flow: &FlowField) -> Result<InverseFlow> {
    let tmax = *flow.t.last().unwrap();
    if tmax > flow.t_valid + 1e-12 {
        return Err(Error::Validity { t: tmax, t_valid: flow.t_valid });
    }
    let (nt, nx, nz) = (flow.t.len(), flow.x.len(), flow.zeta.len());
    let out: Vec<Result<(f64, f64)>> = (0..nt * nx * nz)
        .into_par_iter()
        .map(|idx| {
            let iz = idx % nz;
            let ix = (idx / nz) % nx;
            let it = idx / (nx * nz);
            let (t, x, z) = (flow.t[it], flow.x[ix], flow.zeta[iz]);
            // bracket from the tabulated monotone map y ↦ F̃(t, y, ζ)
            let col: Vec<f64> = (0..nx).map(|j| flow.f[flow.idx(it, j, iz)]).collect();
            let guess = match col.partition_point(|&v| v < x) {
                0 => x - (col[0] - flow.x[0]),
                j if j >= nx => x - (col[nx - 1] - flow.x[nx - 1]),
                j => {
                    let s = (x - col[j - 1]) / (col[j] - col[j - 1]);
                    flow.x[j - 1] + s * (flow.x[j] - flow.x[j - 1])
                }
            };
            let (y, r) = invert_point(c, t, x, z, Some(guess), flow.max_dt)?;
            Ok((y, (r[X] - x).abs()))
        })
        .collect();
    let mut h = Vec::with_capacity(out.len());
    let mut max_residual: f64 = 0.0;
    for v in out {
        let (y, res) = v?;
        h.push(y);
        max_residual = max_residual.max(res);
    }
    Ok(InverseFlow { h, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_model() -> ModelCoefficients {
        ModelCoefficients::parse("1 + 0.3*tanh(x)", "0.1*cos(x)", "0.2*sin(x)").unwrap()
    }

    #[test]
    fn unit_speed_flow_is_explicit() {
        let c = ModelCoefficients::flat();
        for &(y, z, t) in &[(0.3, 0.4, 0.7), (-1.0, -1.2, 0.5), (0.0, 1.5, 1.0)] {
            let r = integrate_ray(&c, y, z, t, RAY_DT);
            assert!((r[X] - (y + t * f64::sin(z))).abs() < 1e-12);
            assert!((r[Z] - z).abs() < 1e-14);
            assert!((r[XZ] - t * f64::cos(z)).abs() < 1e-12);
            assert!((r[I1] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn variations_match_finite_differences() {
        let c = tanh_model();
        let (y, z, t, d) = (0.2, 0.6, 0.8, 1e-4);
        let r = integrate_ray(&c, y, z, t, RAY_DT);
        let rp = integrate_ray(&c, y + d, z, t, RAY_DT);
        let rm = integrate_ray(&c, y - d, z, t, RAY_DT);
        for (k, dk) in [(X, XY), (Z, ZY), (XY, XYY), (ZY, ZYY), (I1, I1Y), (I2, I2Y), (I3, I3Y)] {
            let fd = (rp[k] - rm[k]) / (2.0 * d);
            assert!((fd - r[dk]).abs() < 1e-7, "component {k}: fd {fd} vs {}", r[dk]);
        }
        let zp = integrate_ray(&c, y, z + d, t, RAY_DT);
        let zm = integrate_ray(&c, y, z - d, t, RAY_DT);
        assert!(((zp[X] - zm[X]) / (2.0 * d) - r[XZ]).abs() < 1e-7);
        assert!(((zp[Z] - zm[Z]) / (2.0 * d) - r[ZZ]).abs() < 1e-7);
    }

    #[test]
    fn vertical_rows_reproduce_closed_form_limits() {
        let c = tanh_model();
        let t = [0.0, 0.25, 0.5];
        let x = [-1.0, 0.0, 0.7];
        let z = [-FRAC_PI_2, 0.0, FRAC_PI_2];
        let flow = integrate_flow(&c, &t, &x, &z).unwrap();
        for it in 0..3 {
            for ix in 0..3 {
                assert!((flow.f[flow.idx(it, ix, 2)] - flow.f_plus[it * 3 + ix]).abs() < 1e-8);
                assert!((flow.f[flow.idx(it, ix, 0)] - flow.f_minus[it * 3 + ix]).abs() < 1e-8);
                assert!((flow.f[flow.idx(0, ix, 1)] - x[ix]).abs() < 1e-15);
            }
        }
        assert_eq!(flow.t_valid, 0.5);
    }

    #[test]
    fn flow_round_trip() {
        let c = tanh_model();
        let t = [0.0, 0.3, 0.6];
        let x: Vec<f64> = (0..9).map(|k| -2.0 + 0.5 * k as f64).collect();
        let z: Vec<f64> = (0..7).map(|k| -1.3 + 2.6 * k as f64 / 6.0).collect();
        let flow = integrate_flow(&c, &t, &x, &z).unwrap();
        let inv = invert_flow(&c, &flow).unwrap();
        assert!(inv.max_residual < 1e-9);
        for it in 0..3 {
            for ix in 0..9 {
                for iz in 0..7 {
                    let y = inv.h[flow.idx(it, ix, iz)];
                    let back = integrate_ray(&c, y, z[iz], t[it], RAY_DT)[X];
                    assert!((back - x[ix]).abs() < 1e-9);
                    if it == 0 {
                        assert!((y - x[ix]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn primitive_inverse_round_trip() {
        let c = tanh_model();
        for &y in &[-2.0, -0.3, 0.0, 1.7] {
            let v = lambda_primitive(&c, y);
            assert!((lambda_primitive_inverse(&c, v).unwrap() - y).abs() < 1e-12);
        }
        let flat = ModelCoefficients::flat();
        assert!((flow_limit(&flat, 0.4, 0.1, 1.0).unwrap() - 0.5).abs() < 1e-13);
    }
}
