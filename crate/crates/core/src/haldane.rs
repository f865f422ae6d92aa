//! Haldane-model Bloch Hamiltonians, Dirac points, cones and strain geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::edge::{predicted_speed, SpeedModel};
use crate::error::{Error, Result};
use crate::pauli::{c, Hermitian2, C64};
use crate::symbol::{DiracSymbol, Field, SymbolKind};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Lattice vectors v₁ = −½(1, √3), v₂ = ½(1, −√3).
pub const V1: [f64; 2] = [-0.5, -0.5 * SQRT3];
pub const V2: [f64; 2] = [0.5, -0.5 * SQRT3];

/// Unperturbed Dirac point in the component convention.
pub const XI_STAR: [f64; 2] = [2.0 * PI / 3.0, -2.0 * PI / 3.0];

/// How ξ enters the hopping phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Phases e^{iξ₁}, e^{iξ₂}: ξ holds the components along the dual basis.
    Components,
    /// Phases e^{iξ·v₁}, e^{iξ·v₂} with Cartesian ξ.
    LatticeVectors,
}

impl PhaseConvention {
    /// The two phase arguments θⱼ(ξ) and their gradients.
    pub fn phases(self, xi: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        match self {
            PhaseConvention::Components => (xi, [[1.0, 0.0], [0.0, 1.0]]),
            PhaseConvention::LatticeVectors => {
                let d = |v: [f64; 2]| xi[0] * v[0] + xi[1] * v[1];
                ([d(V1), d(V2)], [V1, V2])
            }
        }
    }
}

/// Result of testing which convention places a zero of ω at ξ⋆.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConventionReport {
    pub chosen: PhaseConvention,
    pub residual_components: f64,
    pub residual_lattice_vectors: f64,
}

/// Picks the convention for which the isotropic ω vanishes at ξ⋆.
pub fn resolve_convention() -> Result<ConventionReport> {
    let res = |conv| HaldaneModel { a: [0.0, 0.0], m: 0.0, convention: conv }.omega(XI_STAR).norm();
    let (rc, rl) = (res(PhaseConvention::Components), res(PhaseConvention::LatticeVectors));
    let chosen = if rc < 1e-12 {
        PhaseConvention::Components
    } else if rl < 1e-12 {
        PhaseConvention::LatticeVectors
    } else {
        return Err(Error::Numerical(format!("neither phase convention has a Dirac point at xi_star ({rc:.3e}, {rl:.3e})")));
    };
    Ok(ConventionReport { chosen, residual_components: rc, residual_lattice_vectors: rl })
}

/// Anisotropic Haldane model with hopping anisotropy a and mass parameter m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaldaneModel {
    #[serde(default)]
    pub a: [f64; 2],
    #[serde(default)]
    pub m: f64,
    #[serde(default = "default_convention")]
    pub convention: PhaseConvention,
}

fn default_convention() -> PhaseConvention {
    PhaseConvention::Components
}

impl HaldaneModel {
    pub fn new(a: [f64; 2], m: f64) -> Self {
        Self { a, m, convention: default_convention() }
    }

    /// ω_a(ξ) = (1 − a₁ − a₂) + (1 + a₁)e^{iθ₁} + (1 + a₂)e^{iθ₂}.
    pub fn omega(&self, xi: [f64; 2]) -> C64 {
        let (th, _) = self.convention.phases(xi);
        c(1.0 - self.a[0] - self.a[1], 0.0) + C64::from_polar(1.0 + self.a[0], th[0]) + C64::from_polar(1.0 + self.a[1], th[1])
    }

    /// (∂_{ξ₁}ω, ∂_{ξ₂}ω).
    pub fn omega_grad(&self, xi: [f64; 2]) -> [C64; 2] {
        let (th, dth) = self.convention.phases(xi);
        let e = [C64::from_polar(1.0 + self.a[0], th[0]) * c(0.0, 1.0), C64::from_polar(1.0 + self.a[1], th[1]) * c(0.0, 1.0)];
        [e[0] * dth[0][0] + e[1] * dth[1][0], e[0] * dth[0][1] + e[1] * dth[1][1]]
    }

    /// β(ξ) = sin θ₁ − sin θ₂ − sin(θ₁ − θ₂).
    pub fn beta(&self, xi: [f64; 2]) -> f64 {
        let (th, _) = self.convention.phases(xi);
        th[0].sin() - th[1].sin() - (th[0] - th[1]).sin()
    }

    /// H(ξ) with off-diagonal entry ω (lower left) and diagonal ±2mβ.
    pub fn bloch_matrix(&self, xi: [f64; 2]) -> Hermitian2 {
        let w = self.omega(xi);
        Hermitian2::new(w.re, w.im, 2.0 * self.m * self.beta(xi), 0.0)
    }

    /// Bands (E₋, E₊).
    pub fn bands(&self, xi: [f64; 2]) -> [f64; 2] {
        self.bloch_matrix(xi).eigenvalues()
    }
}

/// Bands on an n×n grid of [−π, π)², rows (ξ₁, ξ₂, E₋, E₊).
pub fn band_scan(model: &HaldaneModel, n: usize) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let xi = [-PI + 2.0 * PI * i as f64 / n as f64, -PI + 2.0 * PI * j as f64 / n as f64];
            let e = model.bands(xi);
            out.push([xi[0], xi[1], e[0], e[1]]);
        }
    }
    out
}

/// A Dirac point with its cone data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeData {
    pub xi: [f64; 2],
    pub omega_residual: f64,
    pub iterations: usize,
    /// (∂_{ξ₁}ω, ∂_{ξ₂}ω) in the model's ξ coordinates.
    pub gradient: Option<[C64; 2]>,
    /// ∂ω with respect to Cartesian momentum k, where θⱼ = k·vⱼ.
    pub cartesian_gradient: Option<[C64; 2]>,
    /// 2mβ(ξ).
    pub mass: f64,
    pub beta: f64,
    pub condition_number: Option<f64>,
}

impl ConeData {
    /// |c| where ω(ξ_a + ξ) ≈ c(k₁ + ik₂) in Cartesian momentum.
    pub fn cone_coefficient(&self) -> Option<f64> {
        self.cartesian_gradient.map(|g| g[0].norm())
    }

    /// |∂_{k₂}ω − i∂_{k₁}ω| / |∂_{k₁}ω|, zero for an isotropic cone c(k₁ + ik₂).
    pub fn anisotropy(&self) -> Option<f64> {
        self.cartesian_gradient.map(|g| (g[1] - c(0.0, 1.0) * g[0]).norm() / g[0].norm())
    }
}

/// Newton iteration on (Re ω, Im ω) with the analytic Jacobian.
pub fn find_dirac_point(model: &HaldaneModel, guess: Option<[f64; 2]>) -> Result<ConeData> {
    if model.a[0].hypot(model.a[1]) >= 0.2 {
        return Err(Error::Precondition(format!("anisotropy |a| = {:.3} is outside the Newton basin (< 0.2)", model.a[0].hypot(model.a[1]))));
    }
    let mut xi = guess.unwrap_or(match model.convention {
        PhaseConvention::Components => XI_STAR,
        PhaseConvention::LatticeVectors => lattice_guess(),
    });
    let mut w = model.omega(xi);
    for it in 0..50 {
        if w.norm() < 1e-13 {
            return Ok(point_data(model, xi, it));
        }
        let g = model.omega_grad(xi);
        let (a, b, cc, d) = (g[0].re, g[1].re, g[0].im, g[1].im);
        let det = a * d - b * cc;
        if det.abs() < 1e-14 {
            return Err(Error::NoConvergence { iterations: it, residual: w.norm() });
        }
        xi = [xi[0] - (d * w.re - b * w.im) / det, xi[1] - (-cc * w.re + a * w.im) / det];
        w = model.omega(xi);
        if !w.norm().is_finite() || w.norm() > 10.0 {
            return Err(Error::NoConvergence { iterations: it + 1, residual: w.norm() });
        }
    }
    if w.norm() < 1e-12 {
        Ok(point_data(model, xi, 50))
    } else {
        Err(Error::NoConvergence { iterations: 50, residual: w.norm() })
    }
}

fn lattice_guess() -> [f64; 2] {
    // Cartesian k with k·v₁ = 2π/3, k·v₂ = −2π/3
    let det = V1[0] * V2[1] - V1[1] * V2[0];
    let (r1, r2) = (XI_STAR[0], XI_STAR[1]);
    [(r1 * V2[1] - r2 * V1[1]) / det, (V1[0] * r2 - V2[0] * r1) / det]
}

fn point_data(model: &HaldaneModel, xi: [f64; 2], iterations: usize) -> ConeData {
    let beta = model.beta(xi);
    ConeData {
        xi,
        omega_residual: model.omega(xi).norm(),
        iterations,
        gradient: None,
        cartesian_gradient: None,
        mass: 2.0 * model.m * beta,
        beta,
        condition_number: None,
    }
}

/// Complex gradient of ω at a verified zero by central differences with one
/// Richardson step, also expressed in Cartesian momentum.
pub fn extract_cone(model: &HaldaneModel, xi_a: [f64; 2]) -> Result<ConeData> {
    let res = model.omega(xi_a).norm();
    if res > 1e-10 {
        return Err(Error::Precondition(format!("|omega| = {res:.3e} at the supplied point; not a Dirac point")));
    }
    let g = richardson_gradient(model, xi_a, 1e-3);
    // k-derivatives: θⱼ = k·vⱼ, so ∂_k = Σⱼ vⱼ ∂_{θⱼ}
    let dtheta = match model.convention {
        PhaseConvention::Components => g,
        PhaseConvention::LatticeVectors => {
            // ∂_ξ = V ∂_θ with rows V1, V2 as columns; invert
            let m = [[V1[0], V2[0]], [V1[1], V2[1]]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            [(g[0] * m[1][1] - g[1] * m[0][1]) / det, (g[1] * m[0][0] - g[0] * m[1][0]) / det]
        }
    };
    let cart = [dtheta[0] * V1[0] + dtheta[1] * V2[0], dtheta[0] * V1[1] + dtheta[1] * V2[1]];
    // rows Re, Im of the real 2×2 Jacobian
    let jm = nalgebra::Matrix2::new(g[0].re, g[1].re, g[0].im, g[1].im);
    let sv = jm.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin < 1e-10 * smax.max(1.0) {
        return Err(Error::Numerical("flat band: the cone gradient is degenerate".into()));
    }
    let mut data = point_data(model, xi_a, 0);
    data.gradient = Some(g);
    data.cartesian_gradient = Some(cart);
    data.condition_number = Some(smax / smin);
    Ok(data)
}

fn central_gradient(model: &HaldaneModel, xi: [f64; 2], d: f64) -> [C64; 2] {
    let f = |e: [f64; 2]| model.omega([xi[0] + e[0], xi[1] + e[1]]);
    [(f([d, 0.0]) - f([-d, 0.0])) / (2.0 * d), (f([0.0, d]) - f([0.0, -d])) / (2.0 * d)]
}

/// (4 D(δ/2) − D(δ))/3 for the central difference D.
pub fn richardson_gradient(model: &HaldaneModel, xi: [f64; 2], d: f64) -> [C64; 2] {
    let a = central_gradient(model, xi, d);
    let b = central_gradient(model, xi, 0.5 * d);
    [(b[0] * 4.0 - a[0]) / 3.0, (b[1] * 4.0 - a[1]) / 3.0]
}

/// Central-difference gradient error against the analytic one, for ratio tests.
pub fn gradient_error(model: &HaldaneModel, xi: [f64; 2], d: f64) -> f64 {
    let num = central_gradient(model, xi, d);
    let ex = model.omega_grad(xi);
    (num[0] - ex[0]).norm().max((num[1] - ex[1]).norm())
}

/// Position-dependent cone frame α₁(x), α₂(x), Dirac-point shift ξ(x) and mass m(x).
#[derive(Clone, Debug)]
pub struct StrainField {
    pub alpha: [[Field; 2]; 2],
    pub shift: [Field; 2],
    pub m: Field,
}

/// Expression sources for a strain field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainSources {
    pub alpha: [[String; 2]; 2],
    #[serde(default = "zero_shift")]
    pub shift: [String; 2],
    pub m: String,
}

fn zero_shift() -> [String; 2] {
    ["0".into(), "0".into()]
}

impl StrainField {
    pub fn parse(src: &StrainSources) -> Result<Self> {
        let f = Field::parse;
        Ok(Self {
            alpha: [[f(&src.alpha[0][0])?, f(&src.alpha[0][1])?], [f(&src.alpha[1][0])?, f(&src.alpha[1][1])?]],
            shift: [f(&src.shift[0])?, f(&src.shift[1])?],
            m: f(&src.m)?,
        })
    }

    /// Constant frame from cone data: p₁ + ip₂ follows the conjugate of ω so
    /// that the off-diagonal entry of the symbol reproduces the Bloch matrix.
    pub fn from_cone(cone: &ConeData, m: &str) -> Result<Self> {
        let g = cone.cartesian_gradient.ok_or_else(|| Error::Precondition("cone gradient not extracted".into()))?;
        let k = Field::constant;
        Ok(Self {
            alpha: [[k(g[0].re), k(g[1].re)], [k(g[0].im), k(g[1].im)]],
            shift: [k(0.0), k(0.0)],
            m: Field::parse(m)?,
        })
    }

    pub fn frame(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        [[self.alpha[0][0].eval(x), self.alpha[0][1].eval(x)], [self.alpha[1][0].eval(x), self.alpha[1][1].eval(x)]]
    }

    /// pⱼ = αⱼ·(ξ − ξ(x)), p₃ = m.
    pub fn symbol(&self) -> DiracSymbol {
        DiracSymbol::new(SymbolKind::Strained { alpha: self.alpha.clone(), shift: self.shift.clone(), m: self.m.clone() })
    }
}

/// Metric, rescaled mass and effective field at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoGeometry {
    /// g on covectors: |ξ|²_g = Σⱼ (αⱼ·ξ)².
    pub g: [[f64; 2]; 2],
    pub det_alpha: f64,
    pub m_tilde: f64,
    /// ∂₁ξ₂ − ∂₂ξ₁ of the shift.
    pub curl: f64,
    pub b_eff: f64,
    /// |dξ|_g = |curl|·√det g.
    pub field_norm: f64,
}

pub fn pseudo_geometry(strain: &StrainField, x: [f64; 2]) -> Result<PseudoGeometry> {
    let a = strain.frame(x);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-12 * scale * scale) || !det.is_finite() {
        return Err(Error::Invalid(format!("degenerate cone frame at {x:?}: det = {det:.3e}")));
    }
    let mut g = [[0.0; 2]; 2];
    for row in &a {
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += row[i] * row[j];
            }
        }
    }
    let d1 = strain.shift[0].grad(x);
    let d2 = strain.shift[1].grad(x);
    let curl = d2[0] - d1[1];
    Ok(PseudoGeometry {
        g,
        det_alpha: det,
        m_tilde: strain.m.eval(x) / det,
        curl,
        b_eff: curl / det,
        field_norm: curl.abs() * det.abs(),
    })
}

/// Edge speed measured in the metric g⁻¹ on vectors and the unit direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainedSpeed {
    pub speed: f64,
    /// Unit vector (in g⁻¹) tangent to m⁻¹(0).
    pub direction: [f64; 2],
}

/// ‖dm‖_g / √(‖dm‖_g² + |dξ|_g²) with the tangent direction of travel.
pub fn edge_speed_strained(strain: &StrainField, x: [f64; 2]) -> Result<StrainedSpeed> {
    let geo = pseudo_geometry(strain, x)?;
    let dm = strain.m.grad(x);
    if dm[0].hypot(dm[1]) < 1e-12 {
        return Err(Error::Precondition(format!("grad m vanishes at {x:?}")));
    }
    let speed = predicted_speed(&SpeedModel::Strained { g: geo.g, grad_m: dm, b_eff: geo.field_norm })?;
    // tangent R·dm with R the rotation by +π/2, oriented by the frame
    let s = geo.det_alpha.signum();
    let t = [-dm[1] * s, dm[0] * s];
    let gi = inverse2(&geo.g);
    let n = (t[0] * (gi[0][0] * t[0] + gi[0][1] * t[1]) + t[1] * (gi[1][0] * t[0] + gi[1][1] * t[1])).sqrt();
    Ok(StrainedSpeed { speed, direction: [t[0] / n, t[1] / n] })
}

fn inverse2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}
