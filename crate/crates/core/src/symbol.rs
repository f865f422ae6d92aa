//! Dirac symbols ∂(x,ξ) = Σ pⱼ(x,ξ)σⱼ on ℝ⁴ and their pointwise invariants.
//!
//! Phase-space coordinates are ordered z = (x₁, x₂, ξ₁, ξ₂). The Poisson
//! bracket is {f,g} = Σⱼ ∂_{ξⱼ}f ∂_{xⱼ}g − ∂_{xⱼ}f ∂_{ξⱼ}g throughout.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::pauli::{Hermitian2, Spinor};

/// Below this value of λ the eigenlines and the edge field are reported as a
/// gap collapse rather than returned.
pub const GAP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub xi: [f64; 2],
}

impl PhasePoint {
    pub fn new(x: [f64; 2], xi: [f64; 2]) -> Self {
        Self { x, xi }
    }

    pub fn from_array(z: [f64; 4]) -> Self {
        Self { x: [z[0], z[1]], xi: [z[2], z[3]] }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x[0], self.x[1], self.xi[0], self.xi[1]]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// A scalar function of x together with its symbolic gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub f: Expr,
    pub d: [Expr; 2],
    pub source: String,
}

impl Field {
    pub fn parse(src: &str) -> Result<Self> {
        let f = Expr::parse(src)?;
        Ok(Self::from_expr(f, src))
    }

    pub fn from_expr(f: Expr, source: &str) -> Self {
        let d = [f.diff(0), f.diff(1)];
        Self { f, d, source: source.to_string() }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_expr(Expr::Num(v), &format!("{v}"))
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.f.eval(x)
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        [self.d[0].eval(x), self.d[1].eval(x)]
    }

    /// Second derivatives [[∂₁₁, ∂₁₂], [∂₂₁, ∂₂₂]].
    pub fn hessian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let h11 = self.d[0].diff(0).eval(x);
        let h12 = self.d[0].diff(1).eval(x);
        let h22 = self.d[1].diff(1).eval(x);
        [[h11, h12], [h12, h22]]
    }
}

pub type CustomFn = Arc<dyn Fn(&PhasePoint) -> [f64; 3] + Send + Sync>;

#[derive(Clone)]
pub enum SymbolKind {
    /// p = (ξ₁, ξ₂, m(x)).
    DomainWall { m: Field },
    /// p = (ξ₁ − A₁(x), ξ₂ − A₂(x), m(x)).
    Magnetic { m: Field, a: [Field; 2] },
    /// p = C z with C a 3×4 coefficient matrix.
    Linear { c: [[f64; 4]; 3] },
    /// pⱼ = αⱼ(x)·(ξ − ξ₀(x)) for j = 1, 2 and p₃ = m(x); rows of `alpha` are α₁, α₂.
    Strained { alpha: [[Field; 2]; 2], shift: [Field; 2], m: Field },
    /// Arbitrary user function; gradients by central differences.
    Custom { name: String, f: CustomFn },
}

impl fmt::Debug for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::DomainWall { m } => write!(f, "DomainWall(m = {})", m.source),
            SymbolKind::Magnetic { m, a } => {
                write!(f, "Magnetic(m = {}, A = ({}, {}))", m.source, a[0].source, a[1].source)
            }
            SymbolKind::Linear { c } => write!(f, "Linear({c:?})"),
            SymbolKind::Strained { m, .. } => write!(f, "Strained(m = {})", m.source),
            SymbolKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiracSymbol {
    pub kind: SymbolKind,
    /// Overall multiplicative factor applied to all three components.
    pub scale: f64,
    /// Force the finite-difference gradient path even when analytic gradients exist.
    pub force_fd: bool,
}

impl DiracSymbol {
    pub fn new(kind: SymbolKind) -> Self {
        Self { kind, scale: 1.0, force_fd: false }
    }

    pub fn domain_wall(m: &str) -> Result<Self> {
        Ok(Self::new(SymbolKind::DomainWall { m: Field::parse(m)? }))
    }

    pub fn magnetic(m: &str, a1: &str, a2: &str) -> Result<Self> {
        Ok(Self::new(SymbolKind::Magnetic {
            m: Field::parse(m)?,
            a: [Field::parse(a1)?, Field::parse(a2)?],
        }))
    }

    pub fn linear(c: [[f64; 4]; 3]) -> Self {
        Self::new(SymbolKind::Linear { c })
    }

    pub fn custom(name: &str, f: CustomFn) -> Self {
        Self::new(SymbolKind::Custom { name: name.to_string(), f })
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale *= s;
        self
    }

    /// The three components (p₁, p₂, p₃) at z.
    pub fn components(&self, z: &PhasePoint) -> Result<[f64; 3]> {
        let x = z.x;
        let xi = z.xi;
        let p = match &self.kind {
            SymbolKind::DomainWall { m } => [xi[0], xi[1], m.eval(x)],
            SymbolKind::Magnetic { m, a } => [xi[0] - a[0].eval(x), xi[1] - a[1].eval(x), m.eval(x)],
            SymbolKind::Linear { c } => {
                let zz = z.to_array();
                let mut p = [0.0; 3];
                for (j, row) in c.iter().enumerate() {
                    p[j] = row.iter().zip(zz.iter()).map(|(a, b)| a * b).sum();
                }
                p
            }
            SymbolKind::Strained { alpha, shift, m } => {
                let d = [xi[0] - shift[0].eval(x), xi[1] - shift[1].eval(x)];
                let mut p = [0.0, 0.0, m.eval(x)];
                for j in 0..2 {
                    p[j] = alpha[j][0].eval(x) * d[0] + alpha[j][1].eval(x) * d[1];
                }
                p
            }
            SymbolKind::Custom { f, .. } => f(z),
        };
        let p = [p[0] * self.scale, p[1] * self.scale, p[2] * self.scale];
        if p.iter().all(|v| v.is_finite()) {
            Ok(p)
        } else {
            Err(Error::NonFinite(format!("symbol {:?} at {:?}", self.kind, z)))
        }
    }

    /// Gradients ∇pⱼ ∈ ℝ⁴ (rows), analytic when available.
    pub fn gradients(&self, z: &PhasePoint) -> Result<[[f64; 4]; 3]> {
        if self.force_fd {
            return self.gradients_fd(z, fd_step(z));
        }
        let x = z.x;
        let xi = z.xi;
        let g = match &self.kind {
            SymbolKind::DomainWall { m } => {
                let dm = m.grad(x);
                [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [dm[0], dm[1], 0.0, 0.0]]
            }
            SymbolKind::Magnetic { m, a } => {
                let dm = m.grad(x);
                let da1 = a[0].grad(x);
                let da2 = a[1].grad(x);
                [[-da1[0], -da1[1], 1.0, 0.0], [-da2[0], -da2[1], 0.0, 1.0], [dm[0], dm[1], 0.0, 0.0]]
            }
            SymbolKind::Linear { c } => *c,
            SymbolKind::Strained { alpha, shift, m } => {
                let d = [xi[0] - shift[0].eval(x), xi[1] - shift[1].eval(x)];
                let ds = [shift[0].grad(x), shift[1].grad(x)];
                let dm = m.grad(x);
                let mut g = [[0.0; 4], [0.0; 4], [dm[0], dm[1], 0.0, 0.0]];
                for j in 0..2 {
                    let a = [alpha[j][0].eval(x), alpha[j][1].eval(x)];
                    let da = [alpha[j][0].grad(x), alpha[j][1].grad(x)];
                    for l in 0..2 {
                        g[j][l] = da[0][l] * d[0] + da[1][l] * d[1] - a[0] * ds[0][l] - a[1] * ds[1][l];
                    }
                    g[j][2] = a[0];
                    g[j][3] = a[1];
                }
                g
            }
            SymbolKind::Custom { .. } => return self.gradients_fd(z, fd_step(z)),
        };
        let mut out = g;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v *= self.scale;
            }
        }
        if out.iter().flatten().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFinite(format!("gradient of {:?} at {:?}", self.kind, z)))
        }
    }

    /// Central finite-difference gradients with the given step.
    pub fn gradients_fd(&self, z: &PhasePoint, step: f64) -> Result<[[f64; 4]; 3]> {
        let base = z.to_array();
        let mut g = [[0.0; 4]; 3];
        for k in 0..4 {
            let mut zp = base;
            let mut zm = base;
            zp[k] += step;
            zm[k] -= step;
            let pp = self.components(&PhasePoint::from_array(zp))?;
            let pm = self.components(&PhasePoint::from_array(zm))?;
            for j in 0..3 {
                g[j][k] = (pp[j] - pm[j]) / (2.0 * step);
            }
        }
        Ok(g)
    }

    /// Whether the symbol is linear in z (then all invariants are z-independent).
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, SymbolKind::Linear { .. })
    }
}

/// Finite-difference step 1e-5 · max(1, |z|).
pub fn fd_step(z: &PhasePoint) -> f64 {
    1e-5 * z.norm().max(1.0)
}

/// Poisson bracket of two functions given their gradients in z = (x, ξ).
pub fn bracket(gf: &[f64; 4], gg: &[f64; 4]) -> f64 {
    gf[2] * gg[0] + gf[3] * gg[1] - gf[0] * gg[2] - gf[1] * gg[3]
}

/// Returns Σ pⱼσⱼ at z.
pub fn eval_symbol(sym: &DiracSymbol, z: &PhasePoint) -> Result<Hermitian2> {
    Ok(Hermitian2::traceless(sym.components(z)?))
}

/// The three brackets ({p₂,p₃}, {p₃,p₁}, {p₁,p₂}) from gradients.
pub fn brackets_from_gradients(g: &[[f64; 4]; 3]) -> [f64; 3] {
    [bracket(&g[1], &g[2]), bracket(&g[2], &g[0]), bracket(&g[0], &g[1])]
}

/// M = (1/2i){∂,∂} = {p₂,p₃}σ₁ + {p₃,p₁}σ₂ + {p₁,p₂}σ₃.
pub fn poisson_matrix(sym: &DiracSymbol, z: &PhasePoint) -> Result<Hermitian2> {
    let g = sym.gradients(z)?;
    Ok(Hermitian2::traceless(brackets_from_gradients(&g)))
}

/// λ = (Σ_{j<k} {pⱼ,p_k}²)^{1/4}.
pub fn lambda_gap(sym: &DiracSymbol, z: &PhasePoint) -> Result<f64> {
    Ok(poisson_matrix(sym, z)?.norm_vec().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenLine {
    pub v: Spinor,
    /// −1 for ℒ⁻, +1 for ℒ⁺.
    pub sign: i8,
    pub base: PhasePoint,
}

/// Unit eigenvectors of M for its negative (ℒ⁻) and positive (ℒ⁺) eigenvalues.
pub fn eigenlines(sym: &DiracSymbol, z: &PhasePoint) -> Result<(EigenLine, EigenLine)> {
    let m = poisson_matrix(sym, z)?;
    let lambda = m.norm_vec().sqrt();
    if lambda <= GAP_TOL {
        return Err(Error::GapCollapse { lambda, tol: GAP_TOL });
    }
    let vm = m.eigenvector(-1.0, 0.0).expect("nonzero matrix");
    let vp = m.eigenvector(1.0, 0.0).expect("nonzero matrix");
    Ok((EigenLine { v: vm, sign: -1, base: *z }, EigenLine { v: vp, sign: 1, base: *z }))
}

/// H = Σⱼ ∂_{ξⱼ}∂ ∂_{xⱼ} − ∂_{xⱼ}∂ ∂_{ξⱼ}, returned as the Hermitian coefficient
/// of each phase-space direction (x₁, x₂, ξ₁, ξ₂).
pub fn hamiltonian_field(sym: &DiracSymbol, z: &PhasePoint) -> Result<[Hermitian2; 4]> {
    let g = sym.gradients(z)?;
    let col = |k: usize| Hermitian2::traceless([g[0][k], g[1][k], g[2][k]]);
    Ok([col(2), col(3), col(0).scale(-1.0), col(1).scale(-1.0)])
}

/// V = −Tr(M·H)/(2λ²) as a vector in ℝ⁴.
pub fn edge_vector_field(sym: &DiracSymbol, z: &PhasePoint) -> Result<[f64; 4]> {
    let m = poisson_matrix(sym, z)?;
    let lambda2 = m.norm_vec();
    if lambda2.sqrt() <= GAP_TOL {
        return Err(Error::GapCollapse { lambda: lambda2.sqrt(), tol: GAP_TOL });
    }
    let h = hamiltonian_field(sym, z)?;
    let mut v = [0.0; 4];
    for k in 0..4 {
        // Tr(M H_k) = 2 (Pauli dot product) for traceless matrices
        v[k] = -m.half_trace_product(&h[k]) / lambda2;
    }
    Ok(v)
}

fn gradient_matrix(g: &[[f64; 4]; 3]) -> Matrix3x4<f64> {
    Matrix3x4::from_fn(|j, k| g[j][k])
}

/// Minimal-norm Gauss–Newton iteration onto Γ = ∩ pⱼ⁻¹(0).
/// Returns the point and the number of iterations used.
pub fn find_crossing_with(sym: &DiracSymbol, guess: &PhasePoint, max_iter: usize, tol: f64) -> Result<(PhasePoint, usize)> {
    let mut z = Vector4::from(guess.to_array());
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let pz = PhasePoint::from_array(z.into());
        let p = sym.components(&pz)?;
        residual = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual < tol {
            return Ok((pz, it));
        }
        if it == max_iter {
            break;
        }
        let jm = gradient_matrix(&sym.gradients(&pz)?);
        let jjt = jm * jm.transpose();
        let Some(inv) = jjt.try_inverse() else {
            return Err(Error::NoConvergence { iterations: it, residual });
        };
        let step = jm.transpose() * (inv * Vector3::from(p));
        z -= step;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

pub fn find_crossing(sym: &DiracSymbol, guess: &PhasePoint) -> Result<PhasePoint> {
    find_crossing_with(sym, guess, 50, 1e-11).map(|r| r.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub independent: bool,
    pub min_singular_value: f64,
    pub lambda: f64,
}

/// Smallest singular value of the 3×4 gradient matrix at a point of Γ.
pub fn check_transversality(sym: &DiracSymbol, z: &PhasePoint) -> Result<TransversalityReport> {
    let p = sym.components(z)?;
    let res = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if res > 1e-8 {
        return Err(Error::Precondition(format!("point not on the crossing set (residual {res:.3e})")));
    }
    let g = sym.gradients(z)?;
    let jm = gradient_matrix(&g);
    let sv = jm.svd(false, false).singular_values;
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda = Hermitian2::traceless(brackets_from_gradients(&g)).norm_vec().sqrt();
    Ok(TransversalityReport { independent: smin > 1e-8, min_singular_value: smin, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::c;

    fn pt(x1: f64, x2: f64, xi1: f64, xi2: f64) -> PhasePoint {
        PhasePoint::new([x1, x2], [xi1, xi2])
    }

    #[test]
    fn domain_wall_evaluation() {
        let s = DiracSymbol::domain_wall("x2").unwrap();
        let h = eval_symbol(&s, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(h.pauli(), [0.0, 0.0, 0.0]);
        let h = eval_symbol(&s, &pt(0.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(h.pauli(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn magnetic_with_zero_potential_is_domain_wall() {
        let a = DiracSymbol::magnetic("x2 + 0.3*x1^2", "0", "0").unwrap();
        let b = DiracSymbol::domain_wall("x2 + 0.3*x1^2").unwrap();
        for z in [pt(0.2, -0.4, 1.1, 0.3), pt(-1.0, 2.0, 0.0, -0.7)] {
            assert_eq!(eval_symbol(&a, &z).unwrap(), eval_symbol(&b, &z).unwrap());
            assert_eq!(poisson_matrix(&a, &z).unwrap(), poisson_matrix(&b, &z).unwrap());
        }
    }

    #[test]
    fn domain_wall_poisson_matrix_is_sigma1() {
        let s = DiracSymbol::domain_wall("x2").unwrap();
        for z in [pt(0.0, 0.0, 0.0, 0.0), pt(1.0, -2.0, 0.5, 3.0)] {
            let m = poisson_matrix(&s, &z).unwrap();
            assert_eq!(m.pauli(), [1.0, 0.0, 0.0]);
            assert!((lambda_gap(&s, &z).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn magnetic_poisson_matrix() {
        let b = 1.0;
        let s = DiracSymbol::magnetic("x2", &format!("-{b}*x2"), "0").unwrap();
        let m = poisson_matrix(&s, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((m.a - 1.0).abs() < 1e-15 && m.b.abs() < 1e-15 && (m.c + b).abs() < 1e-15);
        let l = lambda_gap(&s, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((l - 2f64.powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn scaling_doubles_lambda() {
        let s = DiracSymbol::domain_wall("x2 + 0.2*x1").unwrap();
        let z = pt(0.3, 0.1, 0.0, 0.0);
        let l1 = lambda_gap(&s, &z).unwrap();
        let l2 = lambda_gap(&s.clone().scaled(2.0), &z).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-14);
    }

    #[test]
    fn eigenlines_domain_wall() {
        let s = DiracSymbol::domain_wall("x2").unwrap();
        let (lm, lp) = eigenlines(&s, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((lm.v - Spinor::new(c(r, 0.0), c(-r, 0.0))).norm() < 1e-14);
        assert!((lp.v - Spinor::new(c(r, 0.0), c(r, 0.0))).norm() < 1e-14);
    }

    #[test]
    fn gap_collapse_reported() {
        let s = DiracSymbol::domain_wall("x2^2").unwrap();
        assert!(matches!(eigenlines(&s, &pt(0.0, 0.0, 0.0, 0.0)), Err(Error::GapCollapse { .. })));
        assert!(matches!(edge_vector_field(&s, &pt(0.0, 0.0, 0.0, 0.0)), Err(Error::GapCollapse { .. })));
    }

    #[test]
    fn hamiltonian_field_domain_wall() {
        let s = DiracSymbol::domain_wall("0.5*x1 + 2*x2").unwrap();
        let h = hamiltonian_field(&s, &pt(0.1, 0.2, 0.3, 0.4)).unwrap();
        assert_eq!(h[0].pauli(), [1.0, 0.0, 0.0]);
        assert_eq!(h[1].pauli(), [0.0, 1.0, 0.0]);
        assert_eq!(h[2].pauli(), [0.0, 0.0, -0.5]);
        assert_eq!(h[3].pauli(), [0.0, 0.0, -2.0]);
        let zero = DiracSymbol::domain_wall("0").unwrap();
        let hz = hamiltonian_field(&zero, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(hz[2].pauli(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn edge_field_examples() {
        let s = DiracSymbol::domain_wall("x2").unwrap();
        let v = edge_vector_field(&s, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(v, [-1.0, 0.0, 0.0, 0.0]);
        let circle = DiracSymbol::domain_wall("x1^2 + x2^2 - 1").unwrap();
        let v = edge_vector_field(&circle, &pt(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(v[0].abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
        let mag = DiracSymbol::magnetic("x2", "-x2", "0").unwrap();
        let v = edge_vector_field(&mag, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((v[0].hypot(v[1]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn crossing_search() {
        let s = DiracSymbol::domain_wall("x2").unwrap();
        let (z, _) = find_crossing_with(&s, &pt(0.3, 0.2, 0.1, -0.1), 50, 1e-11).unwrap();
        assert!(z.x[1].abs() < 1e-11 && z.xi[0].abs() < 1e-11 && z.xi[1].abs() < 1e-11);
        let on = pt(0.7, 0.0, 0.0, 0.0);
        let (z, it) = find_crossing_with(&s, &on, 50, 1e-11).unwrap();
        assert_eq!(it, 0);
        assert_eq!(z, on);
    }

    #[test]
    fn transversality() {
        let s = DiracSymbol::domain_wall("0.5*x2").unwrap();
        let r = check_transversality(&s, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(r.independent && (r.min_singular_value - 0.5).abs() < 1e-12);
        let flat = DiracSymbol::domain_wall("x2^2").unwrap();
        let r = check_transversality(&flat, &pt(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(!r.independent);
        assert!(check_transversality(&s, &pt(0.0, 1.0, 0.0, 0.0)).is_err());
    }
}
