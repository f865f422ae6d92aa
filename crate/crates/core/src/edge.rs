//! Edge trajectories on the crossing set, slow envelope coefficients,
//! the traveling envelope, wavepacket synthesis and edge-speed formulas.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3x4, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fft::{wavenumbers, Fft1};
use crate::model::Profile;
use crate::pauli::{c, Spinor, C64};
use crate::pde::{Grid2, SpinorField};
use crate::symbol::{
    edge_vector_field, eigenlines, find_crossing, lambda_gap, DiracSymbol, PhasePoint, SymbolKind,
};

/// Gap below which the trajectory is truncated.
pub const EDGE_GAP_TOL: f64 = 1e-6;
/// Largest accepted distance from Γ after projection.
pub const GAMMA_TOL: f64 = 1e-8;
/// Largest accepted envelope value on the sampling-box boundary.
pub const DECAY_TOL: f64 = 1e-12;

/// Samples of an edge trajectory at uniform times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeTrajectory {
    pub t: Vec<f64>,
    pub z: Vec<PhasePoint>,
    /// λ along the trajectory.
    pub lambda: Vec<f64>,
    /// max |pⱼ| after projection.
    pub residual: Vec<f64>,
    /// Reason for stopping early, if any.
    pub truncated: Option<String>,
}

impl EdgeTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    pub fn last(&self) -> &PhasePoint {
        self.z.last().expect("trajectory has at least the start point")
    }

    /// Length of the x-projection of the path, by the polygon rule.
    pub fn arc_length(&self) -> f64 {
        self.z.windows(2).map(|w| (w[1].x[0] - w[0].x[0]).hypot(w[1].x[1] - w[0].x[1])).sum()
    }
}

fn max_abs(p: &[f64; 3]) -> f64 {
    p.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// At most two minimal-norm Gauss–Newton steps onto Γ.
fn project_to_gamma(sym: &DiracSymbol, z: PhasePoint) -> Result<(PhasePoint, f64)> {
    let mut v = Vector4::from(z.to_array());
    let mut res = f64::INFINITY;
    for it in 0..=2 {
        let pz = PhasePoint::from_array(v.into());
        let p = sym.components(&pz)?;
        res = max_abs(&p);
        if res < 1e-14 || it == 2 {
            break;
        }
        let g = sym.gradients(&pz)?;
        let jm = Matrix3x4::from_fn(|j, k| g[j][k]);
        let inv = (jm * jm.transpose())
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Jacobian of the crossing equations is singular".into()))?;
        v -= jm.transpose() * (inv * Vector3::from(p));
    }
    Ok((PhasePoint::from_array(v.into()), res))
}

fn field_step(sym: &DiracSymbol, z: &PhasePoint, dt: f64) -> Result<PhasePoint> {
    let at = |w: [f64; 4], k: &[f64; 4], a: f64| PhasePoint::from_array([w[0] + a * k[0], w[1] + a * k[1], w[2] + a * k[2], w[3] + a * k[3]]);
    let w = z.to_array();
    let k1 = edge_vector_field(sym, z)?;
    let k2 = edge_vector_field(sym, &at(w, &k1, 0.5 * dt))?;
    let k3 = edge_vector_field(sym, &at(w, &k2, 0.5 * dt))?;
    let k4 = edge_vector_field(sym, &at(w, &k3, dt))?;
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = w[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(PhasePoint::from_array(out))
}

/// RK4 along the edge vector field with projection onto Γ after every step.
/// The number of steps is ⌈T/dt⌉ so that the last sample lands on T.
pub fn integrate_edge_ode(sym: &DiracSymbol, z0: &PhasePoint, t_end: f64, dt: f64) -> Result<EdgeTrajectory> {
    if !(t_end >= 0.0) || !(dt > 0.0) || !t_end.is_finite() {
        return Err(Error::Invalid(format!("edge integration needs T ≥ 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    let start = find_crossing(sym, z0)?;
    let lam0 = lambda_gap(sym, &start)?;
    if lam0 < EDGE_GAP_TOL {
        return Err(Error::GapCollapse { lambda: lam0, tol: EDGE_GAP_TOL });
    }
    let steps = (t_end / dt).ceil() as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let mut tr = EdgeTrajectory {
        t: vec![0.0],
        z: vec![start],
        lambda: vec![lam0],
        residual: vec![max_abs(&sym.components(&start)?)],
        truncated: None,
    };
    let mut z = start;
    for k in 1..=steps {
        let next = field_step(sym, &z, h).and_then(|p| project_to_gamma(sym, p));
        let (p, res) = match next {
            Ok(v) => v,
            Err(e) => {
                tr.truncated = Some(format!("step {k}: {e}"));
                break;
            }
        };
        if !(res < GAMMA_TOL) {
            tr.truncated = Some(format!("step {k}: projection left residual {res:.3e}"));
            break;
        }
        let lam = match lambda_gap(sym, &p) {
            Ok(l) if l >= EDGE_GAP_TOL => l,
            Ok(l) => {
                tr.truncated = Some(format!("step {k}: gap collapse, lambda = {l:.3e}"));
                break;
            }
            Err(e) => {
                tr.truncated = Some(format!("step {k}: {e}"));
                break;
            }
        };
        z = p;
        tr.t.push(k as f64 * h);
        tr.z.push(p);
        tr.lambda.push(lam);
        tr.residual.push(res);
    }
    Ok(tr)
}

/// Slow coefficients accumulated along an edge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeCoefficients {
    pub t: Vec<f64>,
    /// Position in the straightened edge coordinate, solving ẋ = λ(x), x(0) = 0.
    pub coord: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub nu: Vec<f64>,
    pub s_int: Vec<f64>,
}

impl EdgeCoefficients {
    /// (ρ, ν, S) at time t by linear interpolation.
    pub fn at(&self, t: f64) -> Result<(f64, f64, f64)> {
        let n = self.t.len();
        let (t0, t1) = (self.t[0], self.t[n - 1]);
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return Err(Error::Invalid(format!("time {t} outside the coefficient range [{t0}, {t1}]")));
        }
        if n == 1 {
            return Ok((self.rho[0], self.nu[0], self.s_int[0]));
        }
        let k = self.t.partition_point(|&v| v <= t).clamp(1, n - 1);
        let w = ((t - self.t[k - 1]) / (self.t[k] - self.t[k - 1])).clamp(0.0, 1.0);
        let lerp = |v: &[f64]| v[k - 1] + w * (v[k] - v[k - 1]);
        Ok((lerp(&self.rho), lerp(&self.nu), lerp(&self.s_int)))
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = [f64; 5]> + '_ {
        (0..self.t.len()).map(move |k| [self.t[k], self.coord[k], self.rho[k], self.nu[k], self.s_int[k]])
    }
}

fn accumulate(t: Vec<f64>, coord: Vec<f64>, lambda: Vec<f64>, mu: &Profile, s: &Profile) -> Result<EdgeCoefficients> {
    let lam0 = lambda[0];
    if !(lam0 > 0.0) {
        return Err(Error::Precondition(format!("lambda at the start of the edge is {lam0}, must be positive")));
    }
    let rho: Vec<f64> = lambda.iter().map(|l| l / lam0).collect();
    let n = t.len();
    let (mut nu, mut s_int) = (vec![0.0; n], vec![0.0; n]);
    for k in 1..n {
        let dt = t[k] - t[k - 1];
        let f = |j: usize| mu.eval(coord[j]) / (rho[j] * rho[j]);
        nu[k] = nu[k - 1] + 0.5 * dt * (f(k - 1) + f(k));
        s_int[k] = s_int[k - 1] + 0.5 * dt * (s.eval(coord[k - 1]) + s.eval(coord[k]));
    }
    Ok(EdgeCoefficients { t, coord, lambda, rho, nu, s_int })
}

/// ρ, ν, S along a trajectory. With `lambda = None` the gap λ of the symbol
/// along the trajectory is used and the edge coordinate is ∫λ; with a profile
/// the coordinate solves ẋ = λ(x) by RK4 on the trajectory time grid.
pub fn model_coefficients_along_edge(traj: &EdgeTrajectory, lambda: Option<&Profile>, mu: &Profile, s: &Profile) -> Result<EdgeCoefficients> {
    match lambda {
        None => {
            let mut coord = vec![0.0; traj.len()];
            for k in 1..traj.len() {
                coord[k] = coord[k - 1] + 0.5 * (traj.t[k] - traj.t[k - 1]) * (traj.lambda[k - 1] + traj.lambda[k]);
            }
            accumulate(traj.t.clone(), coord, traj.lambda.clone(), mu, s)
        }
        Some(p) => profile_coefficients(&traj.t, p, mu, s),
    }
}

/// ρ, ν, S for the one-dimensional model ẋ = λ(x) from x = 0 on a time grid.
pub fn profile_coefficients(t: &[f64], lambda: &Profile, mu: &Profile, s: &Profile) -> Result<EdgeCoefficients> {
    if t.is_empty() || t[0] != 0.0 {
        return Err(Error::Invalid("time grid must start at 0".into()));
    }
    let mut coord = vec![0.0; t.len()];
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        let x = coord[k - 1];
        let k1 = lambda.eval(x);
        let k2 = lambda.eval(x + 0.5 * h * k1);
        let k3 = lambda.eval(x + 0.5 * h * k2);
        let k4 = lambda.eval(x + h * k3);
        coord[k] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let lam = coord.iter().map(|&x| lambda.eval(x)).collect();
    accumulate(t.to_vec(), coord, lam, mu, s)
}

/// Uniform time grid 0, dt, …, T with the last point exactly at T.
pub fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end / dt).ceil().max(0.0) as usize;
    if steps == 0 {
        return vec![0.0];
    }
    (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect()
}

/// The traveling envelope at one time, on the grid [−L/2, L/2).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeState {
    pub t: f64,
    pub rho: f64,
    pub nu: f64,
    pub s_int: f64,
    pub len: f64,
    pub a: Vec<C64>,
}

impl EnvelopeState {
    pub fn dx(&self) -> f64 {
        self.len / self.a.len() as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        envelope_coords(self.a.len(), self.len)
    }

    pub fn l2(&self) -> f64 {
        (self.a.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx()).sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// Local cubic interpolation, zero outside the grid.
    pub fn sample(&self, y: f64) -> C64 {
        let n = self.a.len() as isize;
        let s = (y + 0.5 * self.len) / self.dx();
        let j = s.floor() as isize;
        let u = s - j as f64;
        if j < 1 || j + 2 >= n {
            return c(0.0, 0.0);
        }
        let w = [
            -u * (u - 1.0) * (u - 2.0) / 6.0,
            (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
            -(u + 1.0) * u * (u - 2.0) / 2.0,
            (u + 1.0) * u * (u - 1.0) / 6.0,
        ];
        (0..4).map(|i| self.a[(j - 1 + i as isize) as usize] * w[i]).sum()
    }
}

pub fn envelope_coords(n: usize, len: f64) -> Vec<f64> {
    (0..n).map(|j| -0.5 * len + j as f64 * len / n as f64).collect()
}

/// â_t(ξ) = √ρ e^{−iS − iνρ²ξ²} â₀(ρξ), evaluated on a grid zero-padded to twice the
/// length. â₀ is evaluated off-grid by the exact trigonometric sum; mass that the
/// dilation would push past the band or out of the box is reported as an error.
pub fn evolve_envelope(a0: &[C64], len: f64, t: f64, rho: f64, nu: f64, s_int: f64) -> Result<EnvelopeState> {
    let n = a0.len();
    if n < 4 || !(len > 0.0) {
        return Err(Error::Invalid("envelope grid needs at least 4 points and positive length".into()));
    }
    if !(rho > 0.0) || !nu.is_finite() || !s_int.is_finite() {
        return Err(Error::Invalid(format!("envelope coefficients must satisfy rho > 0 and be finite, got rho = {rho}, nu = {nu}, S = {s_int}")));
    }
    let edge = a0[0].norm().max(a0[n - 1].norm());
    let peak = a0.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if edge > DECAY_TOL * peak.max(1.0) {
        return Err(Error::Invalid(format!("initial envelope does not decay at the box boundary (|a| = {edge:.3e})")));
    }
    let dx = len / n as f64;
    let x = envelope_coords(n, len);
    let total: f64 = a0.iter().map(|v| v.norm_sqr()).sum();
    if rho < 1.0 {
        let mut hat = a0.to_vec();
        Fft1::new(n).forward(&mut hat);
        let band = rho * PI / dx;
        let k = wavenumbers(n, len, false);
        let outside: f64 = hat.iter().zip(&k).filter(|(_, &k)| k.abs() > band).map(|(v, _)| v.norm_sqr()).sum::<f64>() / n as f64;
        if outside > 1e-8 * total.max(f64::MIN_POSITIVE) {
            return Err(Error::Resolution(format!(
                "dilation by rho = {rho} aliases {:.3e} of the envelope mass past the band",
                outside / total
            )));
        }
    }
    let m = 2 * n;
    let big = 2.0 * len;
    let xi = wavenumbers(m, big, false);
    let sr = rho.sqrt();
    let nyquist = PI / dx;
    let mut hat: Vec<C64> = xi
        .par_iter()
        .map(|&k| {
            let eta = rho * k;
            if eta.abs() > nyquist {
                return c(0.0, 0.0);
            }
            let a0hat: C64 = a0.iter().zip(&x).map(|(v, &xx)| v * C64::from_polar(1.0, -eta * xx)).sum::<C64>() * dx;
            let mult = C64::from_polar(sr, -s_int - nu * eta * eta);
            // shift so that index 0 of the output sits at −L
            a0hat * mult * C64::from_polar(1.0, -k * len)
        })
        .collect();
    Fft1::new(m).inverse(&mut hat);
    let out: Vec<C64> = hat.iter().map(|v| v / dx).collect();
    let kept: Vec<C64> = out[n / 2..n / 2 + n].to_vec();
    let kept_mass: f64 = kept.iter().map(|v| v.norm_sqr()).sum();
    let all_mass: f64 = out.iter().map(|v| v.norm_sqr()).sum();
    if all_mass - kept_mass > 1e-8 * all_mass.max(f64::MIN_POSITIVE) {
        return Err(Error::Resolution(format!(
            "evolved envelope leaves the box: {:.3e} of the mass lies outside [-L/2, L/2)",
            (all_mass - kept_mass) / all_mass
        )));
    }
    Ok(EnvelopeState { t, rho, nu, s_int, len, a: kept })
}

/// Envelope of a wavepacket as a function of the rescaled variable y.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// π^{−1/2} w^{−1} e^{−|y|²/(2w²)}, unit L² norm.
    Gaussian { width: f64 },
    /// π^{−1/2}(w₁w₂)^{−1/2} e^{−y₁²/(2w₁²) − y₂²/(2w₂²)}, unit L² norm.
    EllipticGaussian { widths: [f64; 2] },
    /// N e^{−½ yᵀQy} with Q = Q_re + iQ_im complex symmetric, Re Q positive definite, unit L² norm.
    ComplexGaussian { q_re: [[f64; 2]; 2], q_im: [[f64; 2]; 2] },
    /// Traveling mode of a straight wall in a constant field `b`.
    MagneticEdgeMode { b: f64 },
    /// Real and imaginary parts as expressions in `x1`, `x2` (standing for y₁, y₂).
    Expression { re: String, #[serde(default)] im: Option<String> },
    #[serde(skip)]
    Function(Arc<dyn Fn([f64; 2]) -> C64 + Send + Sync>),
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Gaussian { width } => write!(f, "Gaussian(width = {width})"),
            Envelope::EllipticGaussian { widths } => write!(f, "EllipticGaussian(widths = {widths:?})"),
            Envelope::ComplexGaussian { q_re, q_im } => write!(f, "ComplexGaussian({q_re:?}, {q_im:?})"),
            Envelope::MagneticEdgeMode { b } => write!(f, "MagneticEdgeMode(b = {b})"),
            Envelope::Expression { re, im } => write!(f, "Expression({re}, {im:?})"),
            Envelope::Function(_) => write!(f, "Function"),
        }
    }
}

impl Envelope {
    pub fn standard() -> Self {
        Envelope::Gaussian { width: 1.0 }
    }

    /// Traveling mode of the wall m = x₂ with A = (−Bx₂, 0): the superposition over
    /// ξ₁ of transverse ground states centred at x₂ = −ξ₁B/c², c = √(1 + B²),
    /// with a standard Gaussian profile along the wall.
    pub fn magnetic_edge_mode(b: f64) -> Self {
        let c2 = 1.0 + b * b;
        let c = c2.sqrt();
        let beta = b / c2;
        let a = 1.0 + c * beta * beta;
        Envelope::ComplexGaussian {
            q_re: [[1.0 / a, 0.0], [0.0, c - c2 * beta * beta / a]],
            q_im: [[0.0, c * beta / a], [c * beta / a, 0.0]],
        }
    }

    /// A callable version of the envelope.
    pub fn compile(&self) -> Result<Arc<dyn Fn([f64; 2]) -> C64 + Send + Sync>> {
        Ok(match self {
            Envelope::MagneticEdgeMode { b } => {
                if !b.is_finite() {
                    return Err(Error::Invalid(format!("field strength must be finite, got {b}")));
                }
                return Envelope::magnetic_edge_mode(*b).compile();
            }
            Envelope::Gaussian { width } => {
                let w = *width;
                if !(w > 0.0) {
                    return Err(Error::Invalid(format!("Gaussian width must be positive, got {w}")));
                }
                Arc::new(move |y: [f64; 2]| c((-(y[0] * y[0] + y[1] * y[1]) / (2.0 * w * w)).exp() / (PI.sqrt() * w), 0.0))
            }
            Envelope::EllipticGaussian { widths } => {
                let [w1, w2] = *widths;
                if !(w1 > 0.0 && w2 > 0.0) {
                    return Err(Error::Invalid(format!("Gaussian widths must be positive, got {widths:?}")));
                }
                let norm = 1.0 / (PI * w1 * w2).sqrt();
                Arc::new(move |y: [f64; 2]| c(norm * (-0.5 * (y[0] * y[0] / (w1 * w1) + y[1] * y[1] / (w2 * w2))).exp(), 0.0))
            }
            Envelope::ComplexGaussian { q_re, q_im } => {
                let (r, i) = (*q_re, *q_im);
                let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
                if !(r[0][0] > 0.0 && det > 0.0) || r[0][1] != r[1][0] || i[0][1] != i[1][0] {
                    return Err(Error::Invalid("complex Gaussian needs symmetric Q with positive definite real part".into()));
                }
                let norm = det.powf(0.25) / PI.sqrt();
                Arc::new(move |y: [f64; 2]| {
                    let quad = |q: &[[f64; 2]; 2]| q[0][0] * y[0] * y[0] + 2.0 * q[0][1] * y[0] * y[1] + q[1][1] * y[1] * y[1];
                    C64::from_polar(norm * (-0.5 * quad(&r)).exp(), -0.5 * quad(&i))
                })
            }
            Envelope::Expression { re, im } => {
                let re = Expr::parse(re)?;
                let im = im.as_deref().map(Expr::parse).transpose()?;
                Arc::new(move |y: [f64; 2]| c(re.eval(y), im.as_ref().map_or(0.0, |e| e.eval(y))))
            }
            Envelope::Function(f) => f.clone(),
        })
    }
}

/// A wavepacket h^{−1/2} e^{is + iξ⋆·(x−x⋆)/h} A((x−x⋆)/√h) u.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WavepacketSpec {
    pub x_star: [f64; 2],
    #[serde(default)]
    pub xi_star: [f64; 2],
    pub envelope: Envelope,
    /// Orientation as [[Re u₁, Im u₁], [Re u₂, Im u₂]]; defaults to (1, 0).
    #[serde(default)]
    pub orientation: Option<[[f64; 2]; 2]>,
    #[serde(default)]
    pub phase: f64,
}

impl WavepacketSpec {
    pub fn gaussian(x_star: [f64; 2], xi_star: [f64; 2], u: Spinor) -> Self {
        Self { x_star, xi_star, envelope: Envelope::standard(), orientation: Some(spinor_to_rows(&u)), phase: 0.0 }
    }

    /// Orientation along ℒ⁻ (sign < 0) or ℒ⁺ (sign > 0) of the symbol at (x⋆, ξ⋆).
    pub fn with_line(mut self, sym: &DiracSymbol, sign: i8) -> Result<Self> {
        let (m, p) = eigenlines(sym, &PhasePoint::new(self.x_star, self.xi_star))?;
        let v = if sign < 0 { m.v } else { p.v };
        self.orientation = Some(spinor_to_rows(&v));
        Ok(self)
    }

    pub fn u(&self) -> Spinor {
        match self.orientation {
            Some(r) => Spinor::new(c(r[0][0], r[0][1]), c(r[1][0], r[1][1])),
            None => Spinor::new(c(1.0, 0.0), c(0.0, 0.0)),
        }
    }
}

pub fn spinor_to_rows(u: &Spinor) -> [[f64; 2]; 2] {
    [[u[0].re, u[0].im], [u[1].re, u[1].im]]
}

/// Samples the wavepacket on the grid.
pub fn synthesize_wavepacket(spec: &WavepacketSpec, h: f64, grid: &Grid2) -> Result<SpinorField> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("h must be positive, got {h}")));
    }
    grid.check_resolution(h)?;
    let a = spec.envelope.compile()?;
    let sh = h.sqrt();
    let (xs, xi, ph) = (spec.x_star, spec.xi_star, spec.phase);
    let y_of = |x: [f64; 2]| [(x[0] - xs[0]) / sh, (x[1] - xs[1]) / sh];
    let edge = boundary_points(grid).into_iter().map(|x| a(y_of(x)).norm()).fold(0.0f64, f64::max);
    if edge > DECAY_TOL {
        return Err(Error::Invalid(format!("envelope does not decay at the box boundary (|A| = {edge:.3e})")));
    }
    let u = spec.u();
    let field = SpinorField::from_fn(grid.clone(), h, |x| {
        let y = y_of(x);
        let phase = C64::from_polar(1.0 / h.sqrt(), ph + (xi[0] * (x[0] - xs[0]) + xi[1] * (x[1] - xs[1])) / h);
        u * (a(y) * phase)
    });
    if !field.is_finite() {
        return Err(Error::NonFinite("synthesized wavepacket".into()));
    }
    Ok(field)
}

fn boundary_points(grid: &Grid2) -> Vec<[f64; 2]> {
    let (x1, x2) = (grid.coords(0), grid.coords(1));
    let mut pts = Vec::new();
    for &a in &x1 {
        pts.push([a, x2[0]]);
        pts.push([a, x2[x2.len() - 1]]);
    }
    for &b in &x2 {
        pts.push([x1[0], b]);
        pts.push([x1[x1.len() - 1], b]);
    }
    pts
}

/// Inputs for the predicted traveling packet on a domain wall.
#[derive(Clone, Debug)]
pub struct EdgePrediction {
    pub symbol: DiracSymbol,
    pub z0: PhasePoint,
    pub h: f64,
    /// Initial one-dimensional envelope along the edge on [−L/2, L/2).
    pub a0: Vec<C64>,
    pub envelope_len: f64,
    pub mu: Profile,
    pub s: Profile,
    pub dt: f64,
}

impl EdgePrediction {
    /// Standard Gaussian packet: the edge envelope is π^{−1/4}e^{−y²/2}.
    pub fn gaussian(symbol: DiracSymbol, z0: PhasePoint, h: f64) -> Self {
        let n = 1024;
        let len = 48.0;
        let a0 = envelope_coords(n, len).iter().map(|&y| c(PI.powf(-0.25) * (-0.5 * y * y).exp(), 0.0)).collect();
        Self { symbol, z0, h, a0, envelope_len: len, mu: Profile::constant(0.0), s: Profile::constant(0.0), dt: 1e-3 }
    }

    /// The trajectory, coefficients and envelope up to time t.
    pub fn envelope_at(&self, t: f64) -> Result<(EdgeTrajectory, EnvelopeState)> {
        let traj = integrate_edge_ode(&self.symbol, &self.z0, t, self.dt)?;
        if let Some(reason) = &traj.truncated {
            return Err(Error::Numerical(format!("edge trajectory stopped before t = {t}: {reason}")));
        }
        let co = model_coefficients_along_edge(&traj, None, &self.mu, &self.s)?;
        let (rho, nu, s_int) = co.at(t)?;
        let env = evolve_envelope(&self.a0, self.envelope_len, t, rho, nu, s_int)?;
        Ok((traj, env))
    }

    /// Φ_t = h^{−1/2} e^{iξ_t·(x−x_t)/h} a_t(y∥) c^{1/4} g₀(c^{1/2} y⊥) u⁻ with
    /// y = (x − x_t)/√h split along the direction of travel and across it,
    /// c = |∇m(x_t)| and u⁻ spanning ℒ⁻ at (x_t, ξ_t).
    pub fn field_at(&self, grid: &Grid2, t: f64) -> Result<SpinorField> {
        let SymbolKind::DomainWall { m } = &self.symbol.kind else {
            return Err(Error::Precondition("the traveling-packet prediction is implemented for domain-wall symbols".into()));
        };
        grid.check_resolution(self.h)?;
        let (traj, env) = self.envelope_at(t)?;
        let zt = *traj.last();
        let v = edge_vector_field(&self.symbol, &zt)?;
        let speed = v[0].hypot(v[1]);
        if speed < 1e-12 {
            return Err(Error::Numerical("edge velocity vanishes".into()));
        }
        let tau = [v[0] / speed, v[1] / speed];
        let gm = m.grad(zt.x);
        let cgrad = (gm[0].hypot(gm[1]) * self.symbol.scale.abs()).max(f64::MIN_POSITIVE);
        let u = eigenlines(&self.symbol, &zt)?.0.v;
        let sh = self.h.sqrt();
        let h = self.h;
        let (xt, xit) = (zt.x, zt.xi);
        let norm = PI.powf(-0.25) * cgrad.powf(0.25) / sh;
        Ok(SpinorField::from_fn(grid.clone(), h, |x| {
            let d = [x[0] - xt[0], x[1] - xt[1]];
            let y_par = (d[0] * tau[0] + d[1] * tau[1]) / sh;
            let y_perp = (-d[0] * tau[1] + d[1] * tau[0]) / sh;
            let tr = norm * (-0.5 * cgrad * y_perp * y_perp).exp();
            let ph = C64::from_polar(1.0, (xit[0] * d[0] + xit[1] * d[1]) / h);
            u * (env.sample(y_par) * ph * tr)
        }))
    }
}

/// Geometric data entering the edge-speed formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedModel {
    Plain,
    Magnetic { grad_m: [f64; 2], b: f64 },
    /// `g` acts on covectors; `b_eff` is the effective field.
    Strained { g: [[f64; 2]; 2], grad_m: [f64; 2], b_eff: f64 },
}

/// 1, ‖∇m‖/√(‖∇m‖² + B²), or ‖dm‖_g/√(‖dm‖_g² + B_eff²).
pub fn predicted_speed(model: &SpeedModel) -> Result<f64> {
    let ratio = |n2: f64, b: f64| -> Result<f64> {
        if !(n2 > 0.0) {
            return Err(Error::Precondition("the gradient of m vanishes at the interface point".into()));
        }
        Ok((n2 / (n2 + b * b)).sqrt())
    };
    match *model {
        SpeedModel::Plain => Ok(1.0),
        SpeedModel::Magnetic { grad_m, b } => ratio(grad_m[0] * grad_m[0] + grad_m[1] * grad_m[1], b),
        SpeedModel::Strained { g, grad_m, b_eff } => {
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let sym = (g[0][1] - g[1][0]).abs() <= 1e-12 * (g[0][1].abs() + g[1][0].abs()).max(1.0);
            if !(g[0][0] > 0.0) || !(det > 0.0) || !sym {
                return Err(Error::Invalid(format!("metric {g:?} is not symmetric positive definite")));
            }
            let n2 = grad_m[0] * (g[0][0] * grad_m[0] + g[0][1] * grad_m[1]) + grad_m[1] * (g[1][0] * grad_m[0] + g[1][1] * grad_m[1]);
            ratio(n2, b_eff)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn straight_wall_moves_left_at_unit_speed() {
        let sym = DiracSymbol::domain_wall("x2").unwrap();
        let tr = integrate_edge_ode(&sym, &PhasePoint::new([0.0, 0.0], [0.0, 0.0]), 1.0, 0.01).unwrap();
        let z = tr.last();
        assert!(tr.truncated.is_none());
        assert!((z.x[0] + 1.0).abs() < 1e-10 && z.x[1].abs() < 1e-10);
        assert!(z.xi[0].abs() < 1e-10 && z.xi[1].abs() < 1e-10);
        assert!(tr.max_residual() < GAMMA_TOL);
    }

    #[test]
    fn circular_wall_closes_after_two_pi() {
        let sym = DiracSymbol::domain_wall("x1^2 + x2^2 - 1").unwrap();
        let tr = integrate_edge_ode(&sym, &PhasePoint::new([1.0, 0.0], [0.0, 0.0]), 2.0 * PI, 0.005).unwrap();
        let z = tr.last();
        assert!(tr.truncated.is_none());
        assert!((z.x[0] - 1.0).hypot(z.x[1]) < 1e-6, "end {:?}", z.x);
        assert!(tr.max_residual() < GAMMA_TOL);
        assert!((tr.arc_length() - 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn magnetic_wall_speed() {
        let sym = DiracSymbol::magnetic("x2", "-x2", "0").unwrap();
        let tr = integrate_edge_ode(&sym, &PhasePoint::new([0.0, 0.0], [0.0, 0.0]), 1.0, 0.01).unwrap();
        let z = tr.last();
        assert_abs_diff_eq!(z.x[0], -1.0 / 2f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(z.x[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn trajectory_converges_at_fourth_order() {
        let sym = DiracSymbol::domain_wall("x2 - 0.3*sin(x1)").unwrap();
        let z0 = PhasePoint::new([0.0, 0.0], [0.0, 0.0]);
        let end = |dt: f64| *integrate_edge_ode(&sym, &z0, 2.0, dt).unwrap().last();
        let (a, b, r) = (end(0.2), end(0.1), end(0.0125));
        let err = |p: &PhasePoint| (p.x[0] - r.x[0]).hypot(p.x[1] - r.x[1]);
        let ratio = err(&a) / err(&b);
        assert!(ratio > 10.0 && ratio < 24.0, "ratio {ratio}");
    }

    #[test]
    fn gap_collapse_is_reported() {
        // the gradient of m = x2·(x1 + 1) vanishes on the wall at x1 = −1
        let sym = DiracSymbol::domain_wall("x2*(x1 + 1)").unwrap();
        let start = integrate_edge_ode(&sym, &PhasePoint::new([-1.0, 0.0], [0.0, 0.0]), 1.0, 0.01);
        assert!(matches!(start, Err(Error::GapCollapse { .. })));
        let tr = integrate_edge_ode(&sym, &PhasePoint::new([0.0, 0.0], [0.0, 0.0]), 2.0, 0.01).unwrap();
        assert!(tr.z.iter().all(|z| z.x[0] > -1.0));
        assert!(tr.lambda.iter().all(|&l| l >= EDGE_GAP_TOL));
    }

    #[test]
    fn coefficients_for_flat_and_viscous_models() {
        let t = time_grid(1.0, 0.01);
        let flat = profile_coefficients(&t, &Profile::constant(1.0), &Profile::constant(0.0), &Profile::constant(0.0)).unwrap();
        assert!(flat.rho.iter().all(|&r| r == 1.0) && flat.nu.iter().all(|&v| v == 0.0));
        let visc = profile_coefficients(&t, &Profile::constant(1.0), &Profile::constant(1.0), &Profile::constant(0.0)).unwrap();
        for (tt, nu) in visc.t.iter().zip(&visc.nu) {
            assert_abs_diff_eq!(*nu, *tt, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_follows_the_closed_form_flow() {
        // ẋ = 1 + ½ tanh x has the implicit solution ∫dx/λ = t
        let lam = Profile::parse("1 + 0.5*tanh(x)").unwrap();
        let t = time_grid(1.0, 0.01);
        let co = profile_coefficients(&t, &lam, &Profile::constant(0.0), &Profile::constant(0.0)).unwrap();
        let prim = |x: f64| 4.0 * x / 3.0 - 2.0 / 3.0 * ((2.0 * x.cosh() + x.sinh()) / 2.0).ln();
        for k in (0..t.len()).step_by(10) {
            let x = co.coord[k];
            assert!((prim(x) - t[k]).abs() < 1e-8, "t {} prim {}", t[k], prim(x));
            assert_abs_diff_eq!(co.rho[k], lam.eval(x) / lam.eval(0.0), epsilon = 1e-14);
        }
    }

    fn gaussian_envelope(n: usize, len: f64) -> Vec<C64> {
        envelope_coords(n, len).iter().map(|&y| c(PI.powf(-0.25) * (-0.5 * y * y).exp(), 0.0)).collect()
    }

    #[test]
    fn identity_coefficients_leave_envelope_unchanged() {
        let a0 = gaussian_envelope(256, 24.0);
        let st = evolve_envelope(&a0, 24.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        for (a, b) in st.a.iter().zip(&a0) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dilation_preserves_norm_and_shape() {
        let a0 = gaussian_envelope(512, 32.0);
        let st = evolve_envelope(&a0, 32.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        let l0 = (a0.iter().map(|v| v.norm_sqr()).sum::<f64>() * 32.0 / 512.0).sqrt();
        assert!((st.l2() - l0).abs() < 1e-10);
        // â(ξ)√ρ â₀(ρξ) ↔ ρ^{−1/2} a₀(x/ρ)
        for (y, v) in st.coords().iter().zip(&st.a) {
            let want = PI.powf(-0.25) * (-0.5 * (y / 2.0).powi(2)).exp() / 2f64.sqrt();
            assert!((v - c(want, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn viscous_envelope_disperses_like_inverse_square_root() {
        let a0 = gaussian_envelope(4096, 1024.0);
        let at = |nu: f64| evolve_envelope(&a0, 1024.0, nu, 1.0, nu, 0.0).unwrap().linf();
        let r = at(10.0) / at(40.0);
        assert!((r - 2.0).abs() < 0.2, "ratio {r}");
    }

    #[test]
    fn aliasing_is_reported() {
        let a0 = gaussian_envelope(64, 64.0);
        assert!(matches!(evolve_envelope(&a0, 64.0, 0.0, 0.3, 0.0, 0.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn gaussian_packet_peak_and_norm() {
        let u = Spinor::new(c(1.0, 0.0), c(0.0, 0.0));
        let spec = WavepacketSpec::gaussian([0.0, 0.0], [0.0, 0.0], u);
        for h in [0.04, 0.01] {
            let g = Grid2::square(512, 4.0).unwrap();
            let f = synthesize_wavepacket(&spec, h, &g).unwrap();
            assert!((f.linf() - 1.0 / (h * PI).sqrt()).abs() < 1e-12 / h);
            assert!((f.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lminus_packet_has_no_lplus_component() {
        let sym = DiracSymbol::domain_wall("x2").unwrap();
        let spec = WavepacketSpec::gaussian([0.3, 0.0], [0.0, 0.0], Spinor::new(c(1.0, 0.0), c(0.0, 0.0))).with_line(&sym, -1).unwrap();
        let g = Grid2::square(256, 4.0).unwrap();
        let f = synthesize_wavepacket(&spec, 0.04, &g).unwrap();
        let lp = eigenlines(&sym, &PhasePoint::new([0.3, 0.0], [0.0, 0.0])).unwrap().1.v;
        for idx in 0..g.size() {
            assert!(lp.dotc(&f.at(idx)).norm() < 1e-12);
        }
    }

    #[test]
    fn complex_gaussian_is_normalized() {
        let env = Envelope::magnetic_edge_mode(1.5).compile().unwrap();
        let (n, len) = (256, 16.0);
        let d = len / n as f64;
        let mut m = 0.0;
        for i in 0..n {
            for j in 0..n {
                m += env([-0.5 * len + i as f64 * d, -0.5 * len + j as f64 * d]).norm_sqr() * d * d;
            }
        }
        assert!((m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn under_resolved_grid_is_rejected() {
        let spec = WavepacketSpec::gaussian([0.0, 0.0], [0.0, 0.0], Spinor::new(c(1.0, 0.0), c(0.0, 0.0)));
        let g = Grid2::square(32, 8.0).unwrap();
        assert!(matches!(synthesize_wavepacket(&spec, 0.01, &g), Err(Error::Resolution(_))));
    }

    #[test]
    fn prediction_tracks_the_trajectory() {
        let sym = DiracSymbol::domain_wall("x2").unwrap();
        let g = Grid2::square(512, 6.0).unwrap();
        let t = 0.5;
        let mut norms = Vec::new();
        for h in [0.04, 0.02] {
            let p = EdgePrediction::gaussian(sym.clone(), PhasePoint::new([0.0, 0.0], [0.0, 0.0]), h);
            let f = p.field_at(&g, t).unwrap();
            let (mut m, mut cx, mut cy) = (0.0, 0.0, 0.0);
            for idx in 0..g.size() {
                let w = f.at(idx).norm_squared();
                let x = g.point(idx);
                m += w;
                cx += w * x[0];
                cy += w * x[1];
            }
            assert!((cx / m + t).hypot(cy / m) < 2.0 * h.sqrt());
            norms.push(f.norm());
        }
        assert!((norms[0] - norms[1]).abs() < 1e-6 && (norms[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn speed_formulas() {
        assert_eq!(predicted_speed(&SpeedModel::Plain).unwrap(), 1.0);
        let s = predicted_speed(&SpeedModel::Magnetic { grad_m: [0.0, 1.0], b: 1.0 }).unwrap();
        assert_abs_diff_eq!(s, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        let id = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(predicted_speed(&SpeedModel::Strained { g: id, grad_m: [0.3, 0.4], b_eff: 0.0 }).unwrap(), 1.0);
        let dil = [[4.0, 0.0], [0.0, 4.0]];
        assert_eq!(predicted_speed(&SpeedModel::Strained { g: dil, grad_m: [0.3, 0.4], b_eff: 0.0 }).unwrap(), 1.0);
        assert!(predicted_speed(&SpeedModel::Strained { g: id, grad_m: [0.3, 0.4], b_eff: 0.1 }).unwrap() < 1.0);
        assert!(predicted_speed(&SpeedModel::Strained { g: [[1.0, 0.0], [0.0, -1.0]], grad_m: [1.0, 0.0], b_eff: 0.0 }).is_err());
    }
}
