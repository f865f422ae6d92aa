//! Hermite functions and the block decomposition in the transverse variable.

use crate::error::{Error, Result};
use crate::pauli::C64;
use crate::pde::SpinorField;

/// Hermite functions g₀…g_N sampled on a uniform grid.
#[derive(Clone, Debug)]
pub struct HermiteBasis {
    pub n_max: usize,
    pub x: Vec<f64>,
    pub dx: f64,
    /// g[n][j] = g_n(x_j).
    pub g: Vec<Vec<f64>>,
}

/// g₀ … g_N at the points `xs` by the three-term recurrence
/// g_{n+1} = (√2·x·g_n − √n·g_{n−1}) / √(n+1).
pub fn hermite_values(n_max: usize, xs: &[f64]) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; xs.len()]; n_max + 1];
    let c0 = std::f64::consts::PI.powf(-0.25);
    for (j, &x) in xs.iter().enumerate() {
        g[0][j] = c0 * (-0.5 * x * x).exp();
        if n_max >= 1 {
            g[1][j] = std::f64::consts::SQRT_2 * x * g[0][j];
        }
        for n in 1..n_max {
            let nf = n as f64;
            g[n + 1][j] = (std::f64::consts::SQRT_2 * x * g[n][j] - nf.sqrt() * g[n - 1][j]) / (nf + 1.0).sqrt();
        }
    }
    g
}

/// Builds the basis on a uniform grid; the grid must be wide enough that
/// every g_n is below 1e-12 at both ends.
pub fn hermite_basis(n_max: usize, x: &[f64]) -> Result<HermiteBasis> {
    if x.len() < 2 {
        return Err(Error::Resolution("Hermite grid needs at least two points".into()));
    }
    let dx = x[1] - x[0];
    let g = hermite_values(n_max, x);
    let last = x.len() - 1;
    for (n, gn) in g.iter().enumerate() {
        let edge = gn[0].abs().max(gn[last].abs());
        if edge > 1e-12 {
            return Err(Error::Resolution(format!(
                "g_{n} = {edge:.2e} at the grid boundary; widen the grid beyond |x| = {:.2}",
                x[0].abs().max(x[last].abs())
            )));
        }
    }
    Ok(HermiteBasis { n_max, x: x.to_vec(), dx, g })
}

/// Semiclassical rescaling g_{n,h}(x) = h^{−1/4} g_n(x/√h).
pub fn semiclassical_values(n_max: usize, xs: &[f64], h: f64) -> Vec<Vec<f64>> {
    let sq = h.sqrt();
    let scaled: Vec<f64> = xs.iter().map(|x| x / sq).collect();
    let mut g = hermite_values(n_max, &scaled);
    let f = h.powf(-0.25);
    for row in g.iter_mut() {
        for v in row.iter_mut() {
            *v *= f;
        }
    }
    g
}

/// Coefficients of a field in the decomposition F = Σ fₙ ⊗ G_{n,h} with
/// G_n = (g_n, g_{n−1}).
#[derive(Clone, Debug)]
pub struct BlockCoefficients {
    /// f[n] = (f_{n,1}(x₁), f_{n,2}(x₁)) sampled on the x₁ grid; f_{0,2} ≡ 0.
    pub f: Vec<[Vec<C64>; 2]>,
    pub dx1: f64,
    /// ‖F‖² − Σ‖fₙ‖²: mass not captured by the truncated expansion.
    pub residual_mass: f64,
}

impl BlockCoefficients {
    pub fn block_mass(&self, n: usize) -> f64 {
        self.f[n].iter().flat_map(|c| c.iter()).map(|v| v.norm_sqr()).sum::<f64>() * self.dx1
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.f.len()).map(|n| self.block_mass(n)).sum()
    }

    /// Rebuild the field from the coefficients.
    pub fn reconstruct(&self, field: &SpinorField, h: f64) -> SpinorField {
        let grid = &field.grid;
        let x2 = grid.coords(1);
        let g = semiclassical_values(self.f.len() - 1, &x2, h);
        let mut out = SpinorField::zeros(grid.clone(), field.h);
        let n1 = grid.n[0];
        for (i2, _) in x2.iter().enumerate() {
            for i1 in 0..n1 {
                let idx = i2 * n1 + i1;
                let mut a = C64::new(0.0, 0.0);
                let mut b = C64::new(0.0, 0.0);
                for (n, fnn) in self.f.iter().enumerate() {
                    a += fnn[0][i1] * g[n][i2];
                    if n >= 1 {
                        b += fnn[1][i1] * g[n - 1][i2];
                    }
                }
                out.psi[0][idx] = a;
                out.psi[1][idx] = b;
            }
        }
        out
    }
}

/// Projects a field onto the blocks n = 0…N (x₂ is the transverse variable).
pub fn block_decompose(field: &SpinorField, n_max: usize, h: f64) -> BlockCoefficients {
    let grid = &field.grid;
    let (n1, n2) = (grid.n[0], grid.n[1]);
    let x2 = grid.coords(1);
    let dx2 = grid.dx(1);
    let g = semiclassical_values(n_max, &x2, h);
    let mut f = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut c1 = vec![C64::new(0.0, 0.0); n1];
        let mut c2 = vec![C64::new(0.0, 0.0); n1];
        for i2 in 0..n2 {
            let w1 = g[n][i2] * dx2;
            let w2 = if n >= 1 { g[n - 1][i2] * dx2 } else { 0.0 };
            for i1 in 0..n1 {
                let idx = i2 * n1 + i1;
                c1[i1] += field.psi[0][idx] * w1;
                if n >= 1 {
                    c2[i1] += field.psi[1][idx] * w2;
                }
            }
        }
        f.push([c1, c2]);
    }
    let mut out = BlockCoefficients { f, dx1: grid.dx(0), residual_mass: 0.0 };
    out.residual_mass = field.mass() - out.total_mass();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::{wavenumbers, Fft1};

    fn grid(n: usize, half: f64) -> Vec<f64> {
        (0..n).map(|j| -half + 2.0 * half * j as f64 / n as f64).collect()
    }

    #[test]
    fn ground_state_value_and_bound() {
        let xs = grid(512, 16.0);
        let b = hermite_basis(30, &xs).unwrap();
        let c0 = std::f64::consts::PI.powf(-0.25);
        assert!((b.g[0][256] - c0).abs() < 1e-15);
        for gn in &b.g {
            assert!(gn.iter().all(|v| v.abs() <= c0 + 1e-12));
        }
    }

    #[test]
    fn orthonormality() {
        let xs = grid(512, 16.0);
        let b = hermite_basis(20, &xs).unwrap();
        for m in 0..=20 {
            for n in 0..=20 {
                let ip: f64 = b.g[m].iter().zip(&b.g[n]).map(|(a, c)| a * c).sum::<f64>() * b.dx;
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "<g{m},g{n}> = {ip}");
            }
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        assert!(matches!(hermite_basis(10, &grid(64, 3.0)), Err(Error::Resolution(_))));
    }

    #[test]
    fn creation_relation_and_eigen_equation() {
        let n = 256;
        let len = 32.0;
        let xs = grid(n, len / 2.0);
        let b = hermite_basis(12, &xs).unwrap();
        let fft = Fft1::new(n);
        let k = wavenumbers(n, len, true);
        let k2 = wavenumbers(n, len, false);
        for m in 1..=12 {
            let mut d: Vec<C64> = b.g[m - 1].iter().map(|&v| C64::new(v, 0.0)).collect();
            let mult: Vec<C64> = k.iter().map(|&k| C64::new(0.0, k)).collect();
            fft.multiply(&mut d, &mult);
            let mut dd: Vec<C64> = b.g[m].iter().map(|&v| C64::new(v, 0.0)).collect();
            let mult2: Vec<C64> = k2.iter().map(|&k| C64::new(-k * k, 0.0)).collect();
            fft.multiply(&mut dd, &mult2);
            let s = (2.0 * m as f64).sqrt();
            for j in 0..n {
                let lhs = xs[j] * b.g[m - 1][j] - d[j].re;
                assert!((lhs - s * b.g[m][j]).abs() < 1e-8);
                let h = -dd[j].re + xs[j] * xs[j] * b.g[m][j];
                assert!((h - (2 * m + 1) as f64 * b.g[m][j]).abs() < 1e-8);
            }
        }
    }
}
