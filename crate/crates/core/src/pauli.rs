//! Pauli algebra for 2×2 Hermitian matrices.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Spinor = Vector2<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn sigma(j: usize) -> Mat2 {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    match j {
        0 => Mat2::new(o, z, z, o),
        1 => Mat2::new(z, o, o, z),
        2 => Mat2::new(z, -I, I, z),
        3 => Mat2::new(o, z, z, -o),
        _ => panic!("Pauli index {j} out of range"),
    }
}

/// The matrix aσ₁ + bσ₂ + cσ₃ + d·Id.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hermitian2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Hermitian2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn traceless(v: [f64; 3]) -> Self {
        Self { a: v[0], b: v[1], c: v[2], d: 0.0 }
    }

    pub fn pauli(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn norm_vec(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c).sqrt()
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(
            c(self.d + self.c, 0.0),
            c(self.a, -self.b),
            c(self.a, self.b),
            c(self.d - self.c, 0.0),
        )
    }

    /// Decompose a matrix into Pauli coefficients; the anti-Hermitian part is dropped.
    pub fn from_matrix(m: &Mat2) -> Self {
        let d = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
        let cc = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
        let a = 0.5 * (m[(0, 1)].re + m[(1, 0)].re);
        let b = 0.5 * (m[(1, 0)].im - m[(0, 1)].im);
        Self { a, b, c: cc, d }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let r = self.norm_vec();
        [self.d - r, self.d + r]
    }

    /// ½ Tr(A·B) restricted to the traceless parts plus the identity parts.
    pub fn half_trace_product(&self, o: &Hermitian2) -> f64 {
        self.a * o.a + self.b * o.b + self.c * o.c + self.d * o.d
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    pub fn apply(&self, v: &Spinor) -> Spinor {
        self.matrix() * v
    }

    /// Unit eigenvector for the eigenvalue d + sign·|n| (sign = ±1), with the
    /// phase fixed so that the first nonzero component is real and positive.
    /// Returns `None` when the traceless part vanishes.
    pub fn eigenvector(&self, sign: f64, tol: f64) -> Option<Spinor> {
        let r = self.norm_vec();
        if r <= tol {
            return None;
        }
        let mu = sign.signum() * r;
        let v1 = Spinor::new(c(self.a, -self.b), c(mu - self.c, 0.0));
        let v2 = Spinor::new(c(mu + self.c, 0.0), c(self.a, self.b));
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        Some(fix_phase(v / c(v.norm(), 0.0)))
    }
}

/// Normalize the phase of a spinor so its first component of modulus above
/// 1e-12 is real and positive.
pub fn fix_phase(v: Spinor) -> Spinor {
    let pivot = if v[0].norm() > 1e-12 { v[0] } else { v[1] };
    if pivot.norm() == 0.0 {
        return v;
    }
    let ph = pivot.conj() / pivot.norm();
    v * ph
}

pub fn dagger(m: &Mat2) -> Mat2 {
    m.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let h = Hermitian2::new(0.3, -1.2, 0.7, 0.1);
        let back = Hermitian2::from_matrix(&h.matrix());
        assert!((back.a - h.a).abs() < 1e-15 && (back.b - h.b).abs() < 1e-15);
        assert!((back.c - h.c).abs() < 1e-15 && (back.d - h.d).abs() < 1e-15);
        let m = sigma(1) * c(0.3, 0.0) + sigma(2) * c(-1.2, 0.0) + sigma(3) * c(0.7, 0.0) + sigma(0) * c(0.1, 0.0);
        assert!((m - h.matrix()).norm() < 1e-15);
    }

    #[test]
    fn eigenvectors_of_sigma_matrices() {
        let s3 = Hermitian2::traceless([0.0, 0.0, 1.0]);
        let vm = s3.eigenvector(-1.0, 1e-10).unwrap();
        let vp = s3.eigenvector(1.0, 1e-10).unwrap();
        assert!((vm - Spinor::new(c(0.0, 0.0), c(1.0, 0.0))).norm() < 1e-14);
        assert!((vp - Spinor::new(c(1.0, 0.0), c(0.0, 0.0))).norm() < 1e-14);
        let s1 = Hermitian2::traceless([1.0, 0.0, 0.0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let vm = s1.eigenvector(-1.0, 1e-10).unwrap();
        assert!((vm - Spinor::new(c(r, 0.0), c(-r, 0.0))).norm() < 1e-14);
        let vp = s1.eigenvector(1.0, 1e-10).unwrap();
        assert!((vp - Spinor::new(c(r, 0.0), c(r, 0.0))).norm() < 1e-14);
    }

    #[test]
    fn eigenpairs_general() {
        let h = Hermitian2::traceless([0.4, -0.9, -2.0]);
        let [lo, hi] = h.eigenvalues();
        for (s, mu) in [(-1.0, lo), (1.0, hi)] {
            let v = h.eigenvector(s, 1e-10).unwrap();
            assert!((h.apply(&v) - v * c(mu, 0.0)).norm() < 1e-13);
            assert!(v[0].im.abs() < 1e-15 && v[0].re > 0.0);
        }
        assert!(Hermitian2::default().eigenvector(1.0, 1e-10).is_none());
    }
}
