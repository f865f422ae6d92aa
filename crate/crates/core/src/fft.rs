//! Thin wrappers over rustfft for periodic 1D and 2D grids.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::pauli::C64;

/// Angular wavenumbers 2πk/L in FFT order. The Nyquist mode is kept with
/// negative sign; `odd_safe` zeroes it (for odd-order derivatives).
pub fn wavenumbers(n: usize, len: f64, odd_safe: bool) -> Vec<f64> {
    (0..n)
        .map(|j| {
            if odd_safe && n % 2 == 0 && j == n / 2 {
                return 0.0;
            }
            let k = if j <= (n - 1) / 2 { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * k / len
        })
        .collect()
}

#[derive(Clone)]
pub struct Fft1 {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    /// Unnormalized forward transform Σ f_j e^{−2πijk/n}.
    pub fn forward(&self, data: &mut [C64]) {
        self.fwd.process(data);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [C64]) {
        self.inv.process(data);
        let s = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    /// Apply a Fourier multiplier: F⁻¹(m · F f).
    pub fn multiply(&self, data: &mut [C64], mult: &[C64]) {
        self.forward(data);
        for (v, m) in data.iter_mut().zip(mult) {
            *v *= m;
        }
        self.inverse(data);
    }
}

/// 2D transforms on arrays stored as `data[i2 * n1 + i1]` (x₁ is the fast index).
#[derive(Clone)]
pub struct Fft2 {
    pub n1: usize,
    pub n2: usize,
    f1: Fft1,
    f2: Fft1,
}

impl Fft2 {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self { n1, n2, f1: Fft1::new(n1), f2: Fft1::new(n2) }
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let (n1, n2) = (self.n1, self.n2);
        data.par_chunks_mut(n1).for_each(|row| {
            if inverse {
                self.f1.inv.process(row)
            } else {
                self.f1.fwd.process(row)
            }
        });
        // columns: transpose into a scratch buffer, transform, transpose back
        let mut t = vec![C64::new(0.0, 0.0); n1 * n2];
        t.par_chunks_mut(n2).enumerate().for_each(|(i1, col)| {
            for i2 in 0..n2 {
                col[i2] = data[i2 * n1 + i1];
            }
            if inverse {
                self.f2.inv.process(col)
            } else {
                self.f2.fwd.process(col)
            }
        });
        let scale = if inverse { 1.0 / (n1 * n2) as f64 } else { 1.0 };
        data.par_chunks_mut(n1).enumerate().for_each(|(i2, row)| {
            for i1 in 0..n1 {
                row[i1] = t[i1 * n2 + i2] * scale;
            }
        });
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, false);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_derivative_of_sine() {
        let n = 64;
        let len = 2.0 * PI;
        let f = Fft1::new(n);
        let k = wavenumbers(n, len, true);
        let mut data: Vec<C64> = (0..n).map(|j| C64::new((3.0 * j as f64 * len / n as f64).sin(), 0.0)).collect();
        let mult: Vec<C64> = k.iter().map(|&k| C64::new(0.0, k)).collect();
        f.multiply(&mut data, &mult);
        for (j, v) in data.iter().enumerate() {
            let x = j as f64 * len / n as f64;
            assert!((v.re - 3.0 * (3.0 * x).cos()).abs() < 1e-11 && v.im.abs() < 1e-11);
        }
    }

    #[test]
    fn fft2_roundtrip_and_mode() {
        let (n1, n2) = (16, 8);
        let f = Fft2::new(n1, n2);
        let mut data: Vec<C64> = (0..n1 * n2)
            .map(|idx| {
                let (i1, i2) = (idx % n1, idx / n1);
                C64::from_polar(1.0, 2.0 * PI * (2.0 * i1 as f64 / n1 as f64 - 1.0 * i2 as f64 / n2 as f64))
            })
            .collect();
        let orig = data.clone();
        f.forward(&mut data);
        let peak = 2 + (n2 - 1) * n1;
        assert!((data[peak].re - (n1 * n2) as f64).abs() < 1e-9);
        f.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
