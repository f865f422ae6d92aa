//! Pseudospectral reference solver for the one-dimensional blocks
//! (hD_t + L)f = 0 and (εD_t + 𝔇_{n,ε})f = 0 on a periodic interval.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ModelCoefficients;
use crate::error::{Error, Result};
use crate::fft::{wavenumbers, Fft1};
use crate::pauli::C64;

/// Periodic interval [−L/2, L/2) with N points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1 {
    pub n: usize,
    pub len: f64,
}

impl Grid1 {
    pub fn new(n: usize, len: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() || !(len > 0.0) {
            return Err(Error::Invalid(format!("1D grid needs a power-of-two size ≥ 4 and positive length, got N = {n}, L = {len}")));
        }
        Ok(Self { n, len })
    }

    pub fn dx(&self) -> f64 {
        self.len / self.n as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| -0.5 * self.len + j as f64 * self.dx()).collect()
    }
}

/// Which block to evolve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockOperator {
    /// hλD + hλ′/(2i) + h²DμD − h²μ″/4 + hs, scalar.
    L { h: f64 },
    /// 𝔇_{n,ε}, two components.
    Dirac { n: usize, eps: f64 },
}

impl BlockOperator {
    pub fn components(&self) -> usize {
        match self {
            BlockOperator::L { .. } => 1,
            BlockOperator::Dirac { .. } => 2,
        }
    }

    /// The small parameter multiplying D_t.
    pub fn scale(&self) -> f64 {
        match *self {
            BlockOperator::L { h } => h,
            BlockOperator::Dirac { eps, .. } => eps,
        }
    }
}

pub type Block = Vec<Vec<C64>>;

/// The block operator with coefficients sampled on a grid.
pub struct BlockEvolver {
    pub grid: Grid1,
    pub op: BlockOperator,
    lam: Vec<f64>,
    mu: Vec<f64>,
    mu2: Vec<f64>,
    s: Vec<f64>,
    k: Vec<f64>,
    fft: Fft1,
}

impl BlockEvolver {
    pub fn new(c: &ModelCoefficients, grid: &Grid1, op: BlockOperator) -> Result<Self> {
        let x = grid.coords();
        let lam: Vec<f64> = x.iter().map(|&v| c.lambda.eval(v)).collect();
        if lam.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Invalid("lambda must be positive on the grid".into()));
        }
        match op {
            BlockOperator::L { h } if !(h > 0.0) => return Err(Error::Invalid("h must be positive".into())),
            BlockOperator::Dirac { n, eps } if n == 0 || !(eps > 0.0) => {
                return Err(Error::Invalid("the Dirac block needs n ≥ 1 and eps > 0".into()))
            }
            _ => {}
        }
        Ok(Self {
            grid: grid.clone(),
            op,
            mu: x.iter().map(|&v| c.mu.eval(v)).collect(),
            mu2: x.iter().map(|&v| c.mu.deriv(2, v)).collect(),
            s: x.iter().map(|&v| c.s.eval(v)).collect(),
            lam,
            k: wavenumbers(grid.n, grid.len, true),
            fft: Fft1::new(grid.n),
        })
    }

    fn deriv(&self, f: &[C64]) -> Vec<C64> {
        // D = −i∂ has multiplier k
        let mut v = f.to_vec();
        self.fft.forward(&mut v);
        for (a, &k) in v.iter_mut().zip(&self.k) {
            *a *= k;
        }
        self.fft.inverse(&mut v);
        v
    }

    fn mul(a: &[f64], f: &[C64]) -> Vec<C64> {
        a.iter().zip(f).map(|(a, v)| v * a).collect()
    }

    /// ½(λD + Dλ)f.
    fn sym_transport(&self, f: &[C64], df: &[C64]) -> Vec<C64> {
        let dl = self.deriv(&Self::mul(&self.lam, f));
        df.iter().zip(&dl).zip(&self.lam).map(|((d, e), l)| 0.5 * (d * l + e)).collect()
    }

    /// DμDf.
    fn viscous(&self, df: &[C64]) -> Vec<C64> {
        self.deriv(&Self::mul(&self.mu, df))
    }

    /// The operator applied to f.
    pub fn apply(&self, f: &Block) -> Block {
        match self.op {
            BlockOperator::L { h } => {
                let df = self.deriv(&f[0]);
                let tr = self.sym_transport(&f[0], &df);
                let vs = self.viscous(&df);
                vec![(0..self.grid.n)
                    .map(|j| h * tr[j] + h * h * vs[j] + f[0][j] * (-h * h * self.mu2[j] / 4.0 + h * self.s[j]))
                    .collect()]
            }
            BlockOperator::Dirac { n, eps } => {
                let nf = n as f64;
                let a_op = |g: &[C64]| -> Vec<C64> {
                    let dg = self.deriv(g);
                    let tr = self.sym_transport(g, &dg);
                    let vs = self.viscous(&dg);
                    (0..self.grid.n).map(|j| eps * tr[j] + 2.0 * nf * eps.powi(3) * vs[j] - g[j] * (nf * eps.powi(3) * self.mu2[j] / 2.0)).collect()
                };
                let b_op = |g: &[C64]| -> Vec<C64> {
                    let dg = self.deriv(g);
                    let dmg = self.deriv(&Self::mul(&self.mu, g));
                    (0..self.grid.n).map(|j| g[j] * self.lam[j] + nf * eps * eps * (dg[j] * self.mu[j] + dmg[j])).collect()
                };
                let (a1, a2) = (a_op(&f[0]), a_op(&f[1]));
                let (b1, b2) = (b_op(&f[0]), b_op(&f[1]));
                let out1 = (0..self.grid.n).map(|j| a1[j] + b2[j] + f[0][j] * (eps * self.s[j])).collect();
                let out2 = (0..self.grid.n).map(|j| -a2[j] + b1[j] + f[1][j] * (eps * self.s[j])).collect();
                vec![out1, out2]
            }
        }
    }

    /// Upper bound for the spectral radius of the generator −(i/scale)·op.
    pub fn generator_bound(&self) -> f64 {
        let kmax = PI / self.grid.dx();
        let lmax = self.lam.iter().fold(0.0f64, |a, &b| a.max(b));
        let mmax = self.mu.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let m2max = self.mu2.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let smax = self.s.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        match self.op {
            BlockOperator::L { h } => lmax * kmax + h * mmax * kmax * kmax + h * m2max / 4.0 + smax,
            BlockOperator::Dirac { n, eps } => {
                let nf = n as f64;
                lmax * kmax + 2.0 * nf * eps * eps * mmax * kmax * kmax + nf * eps * eps * m2max / 2.0 + lmax / eps + 2.0 * nf * eps * mmax * kmax + smax
            }
        }
    }

    /// Largest stable RK4 step, with margin below 2√2.
    pub fn max_dt(&self) -> f64 {
        2.5 / self.generator_bound()
    }

    fn rhs(&self, f: &Block) -> Block {
        let s = C64::new(0.0, -1.0 / self.op.scale());
        self.apply(f).into_iter().map(|c| c.into_iter().map(|v| v * s).collect()).collect()
    }

    fn combine(f: &Block, a: f64, k: &Block) -> Block {
        f.iter().zip(k).map(|(fc, kc)| fc.iter().zip(kc).map(|(x, y)| x + y * a).collect()).collect()
    }

    pub fn rk4_step(&self, f: &Block, dt: f64) -> Block {
        let k1 = self.rhs(f);
        let k2 = self.rhs(&Self::combine(f, 0.5 * dt, &k1));
        let k3 = self.rhs(&Self::combine(f, 0.5 * dt, &k2));
        let k4 = self.rhs(&Self::combine(f, dt, &k3));
        f.iter()
            .enumerate()
            .map(|(c, fc)| (0..fc.len()).map(|j| fc[j] + (k1[c][j] + 2.0 * k2[c][j] + 2.0 * k3[c][j] + k4[c][j]) * (dt / 6.0)).collect())
            .collect()
    }

    pub fn mass(&self, f: &Block) -> f64 {
        f.iter().flat_map(|c| c.iter()).map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Evolves f₀ to time t (negative t runs backward) with steps of at most |dt|.
    pub fn evolve(&self, f0: &Block, t: f64, dt: f64) -> Result<Block> {
        if f0.len() != self.op.components() || f0.iter().any(|c| c.len() != self.grid.n) {
            return Err(Error::Invalid("initial block does not match the grid".into()));
        }
        let bound = self.max_dt();
        if dt.abs() > bound {
            return Err(Error::StepSize { dt: dt.abs(), bound, rule: "RK4 stability dt <= 2.5 / (spectral radius of the generator)".into() });
        }
        if t == 0.0 {
            return Ok(f0.clone());
        }
        let steps = (t.abs() / dt.abs()).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let mut f = f0.clone();
        for step in 0..steps {
            f = self.rk4_step(&f, h);
            if f.iter().flat_map(|c| c.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Numerical(format!("non-finite block at step {}", step + 1)));
            }
        }
        Ok(f)
    }
}

/// Evolves a block with the requested operator.
pub fn evolve_block_1d(c: &ModelCoefficients, grid: &Grid1, op: BlockOperator, f0: &Block, t: f64, dt: f64) -> Result<Block> {
    BlockEvolver::new(c, grid, op)?.evolve(f0, t, dt)
}

/// Centroid ∫x|f|² / ∫|f|².
pub fn centroid(grid: &Grid1, f: &Block) -> f64 {
    let x = grid.coords();
    let (mut num, mut den) = (0.0, 0.0);
    for c in f {
        for (v, xx) in c.iter().zip(&x) {
            num += v.norm_sqr() * xx;
            den += v.norm_sqr();
        }
    }
    num / den
}
