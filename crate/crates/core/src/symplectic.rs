//! Linear symplectic and SU(2) normal form of linear Dirac symbols.
//!
//! A linear symbol ∂(z) = Σ (Cz)ⱼσⱼ with independent rows and nondegenerate
//! bracket matrix is brought to λ·∂₀ with
//! ∂₀(x,ξ) = ξ₁σ₃ + x₂σ₁ + ξ₂σ₂ = [[ξ₁, x₂ − iξ₂], [x₂ + iξ₂, −ξ₁]]
//! by a symplectic change of variables S and a conjugation by U ∈ SU(2):
//! U (∂∘S)(z) U† = λ ∂₀(z).
//!
//! Two independent constructions are provided. The primary one diagonalizes the
//! bracket matrix and completes the rescaled components to a Darboux basis. The
//! second reduces the quadratic form q = −det ∂ through the invariant subspaces
//! of its Hamiltonian matrix and recovers U from the resulting rotation.

use nalgebra::{Matrix2, Matrix3, Matrix3x4, Matrix4, SymmetricEigen, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{c, sigma, Hermitian2, Mat2, Spinor, C64};
use crate::symbol::{bracket, brackets_from_gradients};

pub type Mat4 = Matrix4<f64>;

/// Standard symplectic matrix J = [[0, I], [−I, 0]] in coordinates (x₁, x₂, ξ₁, ξ₂).
pub fn j4() -> Mat4 {
    let mut j = Mat4::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = -1.0;
    j[(3, 1)] = -1.0;
    j
}

/// Bracket matrix Π with {aᵀz, bᵀz} = aᵀΠb; equals Jᵀ.
pub fn pi4() -> Mat4 {
    j4().transpose()
}

/// max |SᵀJS − J|.
pub fn symplectic_residual(s: &Mat4) -> f64 {
    (s.transpose() * j4() * s - j4()).abs().max()
}

/// max(‖U†U − I‖_max, |det U − 1|).
pub fn su2_residual(u: &Mat2) -> f64 {
    let unit = (u.adjoint() * u - Mat2::identity()).iter().fold(0.0f64, |a, v| a.max(v.norm()));
    unit.max((u.determinant() - c(1.0, 0.0)).norm())
}

/// Coefficient rows (as 3×4) of the canonical symbol ∂₀: p = (x₂, ξ₂, ξ₁).
pub fn canonical_coefficients() -> [[f64; 4]; 3] {
    [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]]
}

/// ∂₀(z) as a Hermitian matrix.
pub fn canonical(z: &[f64; 4]) -> Hermitian2 {
    Hermitian2::traceless([z[1], z[3], z[2]])
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm4 {
    /// Hessian Q; the form is q(z) = ½⟨Qz, z⟩.
    pub q: Mat4,
}

impl QuadraticForm4 {
    pub fn new(q: Mat4) -> Result<Self> {
        let asym = (q - q.transpose()).abs().max();
        if asym > 1e-12 * q.abs().max().max(1.0) {
            return Err(Error::Invalid(format!("quadratic form not symmetric (asymmetry {asym:.2e})")));
        }
        Ok(Self { q: 0.5 * (q + q.transpose()) })
    }

    /// q = −det ∂ = Σ pⱼ² for a linear symbol, Q = 2CᵀC.
    pub fn from_linear_symbol(sym: &LinearDiracSymbol) -> Self {
        let cm = sym.matrix();
        Self { q: 2.0 * cm.transpose() * cm }
    }

    pub fn eval(&self, z: &[f64; 4]) -> f64 {
        let v = Vector4::from(*z);
        0.5 * v.dot(&(self.q * v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDiracSymbol {
    /// Rows c₁, c₂, c₃ with pⱼ(z) = cⱼ·z.
    pub c: [[f64; 4]; 3],
}

impl LinearDiracSymbol {
    pub fn new(c: [[f64; 4]; 3]) -> Self {
        Self { c }
    }

    pub fn matrix(&self) -> Matrix3x4<f64> {
        Matrix3x4::from_fn(|j, k| self.c[j][k])
    }

    pub fn eval(&self, z: &[f64; 4]) -> Hermitian2 {
        let mut p = [0.0; 3];
        for j in 0..3 {
            p[j] = (0..4).map(|k| self.c[j][k] * z[k]).sum();
        }
        Hermitian2::traceless(p)
    }

    /// Bracket matrix M = {p₂,p₃}σ₁ + {p₃,p₁}σ₂ + {p₁,p₂}σ₃ (constant).
    pub fn poisson_matrix(&self) -> Hermitian2 {
        Hermitian2::traceless(brackets_from_gradients(&self.c))
    }

    pub fn lambda(&self) -> f64 {
        self.poisson_matrix().norm_vec().sqrt()
    }

    /// Composition z ↦ ∂(Sz): rows become cⱼᵀS.
    pub fn compose(&self, s: &Mat4) -> Self {
        let m = self.matrix() * s;
        let mut c = [[0.0; 4]; 3];
        for j in 0..3 {
            for k in 0..4 {
                c[j][k] = m[(j, k)];
            }
        }
        Self { c }
    }

    /// Smallest singular value of C (independence of the rows).
    pub fn min_singular_value(&self) -> f64 {
        self.matrix().svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Unit vector spanning ker C (the kernel of q), when the rows are independent.
    pub fn kernel(&self) -> Vector4<f64> {
        let m = self.matrix();
        let mtm = m.transpose() * m;
        let eig = SymmetricEigen::new(mtm);
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v.abs() < acc.1 { (i, v.abs()) } else { acc });
        eig.eigenvectors.column(k).into_owned()
    }
}

/// L = JQ.
pub fn hamiltonian_matrix(q: &QuadraticForm4) -> Mat4 {
    j4() * q.q
}

/// Checks the spectral pattern {0, 0, ±iλ_L²} of L = JQ and returns λ_L² > 0.
pub fn check_signature(q: &QuadraticForm4) -> Result<f64> {
    let scale = q.q.abs().max();
    if scale == 0.0 {
        return Err(Error::Signature("zero quadratic form".into()));
    }
    let eig = SymmetricEigen::new(q.q);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = 1e-7 * scale;
    if ev[0].abs() > tol || ev[1] <= tol {
        return Err(Error::Signature(format!("Hessian eigenvalues {ev:?} are not of signature (0,+,+,+)")));
    }
    let l = hamiltonian_matrix(q);
    let l2 = l * l;
    let c4 = -0.5 * l2.trace();
    if c4 <= 0.0 {
        return Err(Error::Signature("L² has no negative spectrum".into()));
    }
    let c2 = c4.sqrt();
    // eigenvalues of L² must be {0, 0, −c², −c²}
    let ch = l2 * (l2 + Mat4::identity() * c4);
    if ch.abs().max() > 1e-7 * c4 * c4.max(1.0) {
        return Err(Error::Signature(format!("L² does not annihilate to the pattern (residual {:.2e})", ch.abs().max())));
    }
    Ok(c2)
}

fn null_space(m: &Mat4, dim: usize) -> Vec<Vector4<f64>> {
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
    idx.into_iter().take(dim).map(|i| vt.row(i).transpose().into_owned()).collect()
}

/// Orthogonal projector onto the span of orthonormal vectors.
fn project(basis: &[Vector4<f64>], v: &Vector4<f64>) -> Vector4<f64> {
    basis.iter().fold(Vector4::zeros(), |acc, b| acc + b * b.dot(v))
}

/// Coordinate vector with the largest projection onto `basis`, preferring the
/// given order on near-ties.
fn pivot_projection(basis: &[Vector4<f64>], order: &[usize]) -> Vector4<f64> {
    let mut best = Vector4::zeros();
    let mut best_norm = -1.0;
    for &k in order {
        let mut e = Vector4::zeros();
        e[k] = 1.0;
        let p = project(basis, &e);
        if p.norm() > best_norm + 1e-12 {
            best_norm = p.norm();
            best = p;
        }
    }
    best
}

fn top_left_det(s: &Mat4) -> f64 {
    s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)]
}

/// Rotation z ↦ (z₁, −z₄, z₃, z₂) used to repair a singular top-left block:
/// columns (u₁, u₂, u₃, u₄) of S become (u₁, u₄, u₃, −u₂).
pub fn repair_swap() -> Mat4 {
    let mut p = Mat4::zeros();
    p[(0, 0)] = 1.0;
    p[(3, 1)] = 1.0;
    p[(2, 2)] = 1.0;
    p[(1, 3)] = -1.0;
    p
}

/// exp(iπσ₃/4): rotation by −π/2 about the third Pauli axis, compensating
/// `repair_swap` on the canonical symbol.
pub fn repair_gauge() -> Mat2 {
    let a = std::f64::consts::FRAC_PI_4;
    Mat2::new(C64::from_polar(1.0, a), c(0.0, 0.0), c(0.0, 0.0), C64::from_polar(1.0, -a))
}

#[derive(Clone, Debug)]
pub struct QuadraticReduction {
    pub s: Mat4,
    /// λ with q∘S = λ²(x₂² + ξ₁² + ξ₂²).
    pub lambda: f64,
    pub repaired: bool,
}

/// Symplectic S with Sᵀ(∇²q)S = 2λ²·diag(0,1,1,1), built from the invariant
/// subspaces ker L² and ker(L² + λ_L⁴) of L = JQ (λ_L² = 2λ²).
pub fn reduce_quadratic_form(q: &QuadraticForm4) -> Result<QuadraticReduction> {
    let cc = check_signature(q)?;
    let l = hamiltonian_matrix(q);
    let l2 = l * l;
    let osc = null_space(&(l2 + Mat4::identity() * (cc * cc)), 2);
    let nil = null_space(&l2, 2);
    let ker_l = null_space(&l, 1);

    let mut u2 = pivot_projection(&osc, &[1, 3, 0, 2]);
    let mut u4 = -(l * u2) / cc;
    let n24 = u2.dot(&(q.q * u2)) / cc;
    u2 /= n24.sqrt();
    u4 /= n24.sqrt();

    let mut u3 = pivot_projection(&nil, &[2, 0, 1, 3]);
    u3 -= project(&ker_l, &u3);
    let n13 = u3.dot(&(q.q * u3)) / cc;
    u3 /= n13.sqrt();
    let u1 = (l * u3) / cc;

    if u1.norm() == 0.0 || u1.fixed_rows::<2>(0).norm() < 1e-12 * u1.norm() {
        return Err(Error::Precondition("projection of ker q to x-space vanishes".into()));
    }

    let mut s = Mat4::from_columns(&[u1, u2, u3, u4]);
    let mut repaired = false;
    if top_left_det(&s).abs() < 1e-8 {
        s *= repair_swap();
        repaired = true;
    }
    Ok(QuadraticReduction { s, lambda: (cc / 2.0).sqrt(), repaired })
}

/// U ∈ SU(2) with U σₖ U† = Σₗ R_{lk} σₗ for R ∈ SO(3), from the quaternion of R
/// (largest-component branch, that component made positive).
pub fn su2_from_so3(r: &Matrix3<f64>) -> Result<Mat2> {
    let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if orth > 1e-9 || (det - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "not a rotation: orthogonality residual {orth:.2e}, det {det:.6}"
        )));
    }
    let tr = r.trace();
    let cand = [1.0 + tr, 1.0 + 2.0 * r[(0, 0)] - tr, 1.0 + 2.0 * r[(1, 1)] - tr, 1.0 + 2.0 * r[(2, 2)] - tr];
    let k = (0..4).fold(0, |b, i| if cand[i] > cand[b] { i } else { b });
    let big = 0.5 * cand[k].max(0.0).sqrt();
    let f = 0.25 / big;
    let (w, x, y, z) = match k {
        0 => (big, (r[(2, 1)] - r[(1, 2)]) * f, (r[(0, 2)] - r[(2, 0)]) * f, (r[(1, 0)] - r[(0, 1)]) * f),
        1 => ((r[(2, 1)] - r[(1, 2)]) * f, big, (r[(0, 1)] + r[(1, 0)]) * f, (r[(0, 2)] + r[(2, 0)]) * f),
        2 => ((r[(0, 2)] - r[(2, 0)]) * f, (r[(0, 1)] + r[(1, 0)]) * f, big, (r[(1, 2)] + r[(2, 1)]) * f),
        _ => ((r[(1, 0)] - r[(0, 1)]) * f, (r[(0, 2)] + r[(2, 0)]) * f, (r[(1, 2)] + r[(2, 1)]) * f, big),
    };
    // U = w·I − i(xσ₁ + yσ₂ + zσ₃)
    Ok(Mat2::new(c(w, -z), c(-y, -x), c(y, -x), c(w, z)))
}

/// Rotation R ∈ SO(3) induced by U: R_{lk} = ½ Tr(σₗ U σₖ U†).
pub fn so3_from_su2(u: &Mat2) -> Matrix3<f64> {
    Matrix3::from_fn(|l, k| 0.5 * (sigma(l + 1) * u * sigma(k + 1) * u.adjoint()).trace().re)
}

#[derive(Clone, Debug)]
pub struct LinearReduction {
    pub s: Mat4,
    pub u: Mat2,
    pub lambda: f64,
    /// +1 unless the orientation fix (x₁, ξ₁) ↦ (−x₁, −ξ₁) was composed into S.
    pub nu: i8,
    pub repaired: bool,
}

fn check_linear_preconditions(sym: &LinearDiracSymbol) -> Result<f64> {
    if sym.min_singular_value() <= 1e-8 {
        return Err(Error::Precondition("rows of the linear symbol are dependent".into()));
    }
    let lambda = sym.lambda();
    if lambda <= 1e-8 {
        return Err(Error::Precondition("bracket matrix vanishes (lambda = 0)".into()));
    }
    let k = sym.kernel();
    if k.fixed_rows::<2>(0).norm() < 1e-10 {
        return Err(Error::Precondition("projection of ker q to x-space vanishes".into()));
    }
    Ok(lambda)
}

/// Primary route: diagonalize M, rescale, complete to a Darboux basis.
pub fn reduce_linear_symbol(sym: &LinearDiracSymbol) -> Result<LinearReduction> {
    let lambda = check_linear_preconditions(sym)?;
    let m = sym.poisson_matrix();
    let vm = m.eigenvector(-1.0, 0.0).expect("nonzero bracket matrix");
    let mut vp = m.eigenvector(1.0, 0.0).expect("nonzero bracket matrix");
    // Ũ = [v₋, v₊] with det Ũ = 1
    let det = vm[0] * vp[1] - vp[0] * vm[1];
    vp *= det.conj() / det.norm();
    let ut = Mat2::new(vm[0], vp[0], vm[1], vp[1]);
    let u0 = ut.adjoint();
    // components of U∂U† are R·p with R the rotation of U
    let rot = so3_from_su2(&u0);
    let cm = sym.matrix();
    let ct = (rot * cm) / lambda;
    let row = |k: usize| -> Vector4<f64> { ct.row(k).transpose().into_owned() };
    let (c1, c2, c3) = (row(0), row(1), row(2));

    // c₀ with {c₀,c₁} = {c₀,c₂} = 0 and {c₀,c₃} = −1, minimal norm
    let pi = pi4();
    let a = Matrix3x4::from_rows(&[(pi * c1).transpose(), (pi * c2).transpose(), (pi * c3).transpose()]);
    let rhs = Vector3::new(0.0, 0.0, -1.0);
    let aat = a * a.transpose();
    let inv = aat
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Darboux system".into()))?;
    let c0_min = a.transpose() * (inv * rhs);

    // x₁-axis image may be shifted along c₃ without changing the normal form
    for shift in [0.0, 1.0, -1.0, 2.0] {
        let c0 = c0_min + c3 * shift;
        let w = Mat4::from_columns(&[c0, c1, c3, c2]);
        let winv = w.try_inverse().ok_or_else(|| Error::Numerical("singular Darboux basis".into()))?;
        let s = winv.transpose();
        if top_left_det(&s).abs() >= 1e-8 {
            return Ok(LinearReduction { s, u: u0, lambda, nu: 1, repaired: shift != 0.0 });
        }
        let s2 = s * repair_swap();
        if top_left_det(&s2).abs() >= 1e-8 {
            return Ok(LinearReduction { s: s2, u: repair_gauge() * u0, lambda, nu: 1, repaired: true });
        }
    }
    Err(Error::Numerical("top-left block of S stays singular after repair".into()))
}

/// Second route: reduce q = −det ∂, then read the rotation B off λ⁻¹∂∘S.
pub fn reduce_linear_symbol_via_quadratic(sym: &LinearDiracSymbol) -> Result<LinearReduction> {
    check_linear_preconditions(sym)?;
    let qf = QuadraticForm4::from_linear_symbol(sym);
    let red = reduce_quadratic_form(&qf)?;
    let lambda = red.lambda;
    let mut s = red.s;
    let hat = sym.compose(&s);
    // B_{jk} = ∂p̂_k/∂w_j with w = (x₂, ξ₁, ξ₂)
    let widx = [1usize, 2, 3];
    let mut b = Matrix3::from_fn(|j, k| hat.c[k][widx[j]] / lambda);
    let mut nu = 1i8;
    if b.determinant() > 0.0 {
        // orientation fix (x₁, ξ₁) ↦ (−x₁, −ξ₁) flips w₂ = ξ₁
        let f = Mat4::from_diagonal(&Vector4::new(-1.0, 1.0, -1.0, 1.0));
        s *= f;
        for k in 0..3 {
            b[(1, k)] = -b[(1, k)];
        }
        nu = -1;
    }
    // target: w₁ → σ₁, w₂ → σ₃, w₃ → σ₂
    let perm = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
    let r = perm * b;
    let u = su2_from_so3(&r)?;
    Ok(LinearReduction { s, u, lambda, nu, repaired: red.repaired })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NormalFormReport {
    pub normal_form_residual: f64,
    pub symplectic_residual: f64,
    pub su2_residual: f64,
    pub lambda: f64,
    pub lambda_from_brackets: f64,
}

/// Residuals of U(∂∘S)(z)U† = λ∂₀(z) over 100 seeded random points, plus the
/// symplectic and SU(2) defects.
pub fn verify_normal_form(sym: &LinearDiracSymbol, s: &Mat4, u: &Mat2, lambda: f64) -> NormalFormReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let composed = sym.compose(s);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let lhs = u * composed.eval(&z).matrix() * u.adjoint();
        let rhs = canonical(&z).scale(lambda).matrix();
        worst = worst.max((lhs - rhs).norm());
    }
    NormalFormReport {
        normal_form_residual: worst,
        symplectic_residual: symplectic_residual(s),
        su2_residual: su2_residual(u),
        lambda,
        lambda_from_brackets: sym.lambda(),
    }
}

/// Poisson bracket of two linear forms.
pub fn linear_bracket(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    bracket(a, b)
}

/// Apply U to a spinor (convenience for reporting).
pub fn gauge_apply(u: &Mat2, v: &Spinor) -> Spinor {
    u * v
}

/// Matrix form helpers for serialization.
pub fn mat4_rows(m: &Mat4) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

pub fn mat2_rows(m: &Mat2) -> [[[f64; 2]; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| [m[(i, j)].re, m[(i, j)].im]))
}

pub fn identity2() -> Mat2 {
    Matrix2::identity()
}
