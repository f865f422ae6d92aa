//! Model operator machinery on the straightened edge: Hermite blocks, the
//! bicharacteristic flow of λ(x)⟨ξ⟩, eikonal phases, WKB amplitudes, the
//! oscillatory parametrix and a pseudospectral 1D reference solver.

pub mod eikonal;
pub mod evolve1d;
pub mod flow;
pub mod hermite;
pub mod parametrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// A smooth function of one variable with symbolic derivatives up to order three.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub source: String,
    d: [Expr; 4],
    constant: Option<f64>,
}

impl Profile {
    pub fn parse(src: &str) -> Result<Self> {
        let f = Expr::parse(src)?;
        if f.uses_var(1) {
            return Err(Error::Invalid(format!("profile {src:?} must depend on x only")));
        }
        Ok(Self::from_expr(f, src))
    }

    pub fn from_expr(f: Expr, src: &str) -> Self {
        let d1 = f.diff(0);
        let d2 = d1.diff(0);
        let d3 = d2.diff(0);
        let constant = if f.uses_var(0) { None } else { Some(f.eval1(0.0)) };
        Self { source: src.to_string(), d: [f, d1, d2, d3], constant }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_expr(Expr::Num(v), &format!("{v}"))
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.constant {
            Some(c) => c,
            None => self.d[0].eval1(x),
        }
    }

    /// k-th derivative, k ≤ 3.
    pub fn deriv(&self, k: usize, x: f64) -> f64 {
        if k == 0 {
            return self.eval(x);
        }
        if self.constant.is_some() {
            return 0.0;
        }
        self.d[k].eval1(x)
    }

    /// (f, f', f'', f''') at x.
    pub fn jet(&self, x: f64) -> [f64; 4] {
        match self.constant {
            Some(c) => [c, 0.0, 0.0, 0.0],
            None => std::array::from_fn(|k| self.d[k].eval1(x)),
        }
    }
}

/// Coefficients λ > 0, μ, s of the model operator along the straightened edge.
#[derive(Clone, Debug)]
pub struct ModelCoefficients {
    pub lambda: Profile,
    pub mu: Profile,
    pub s: Profile,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelCoefficientSources {
    pub lambda: String,
    #[serde(default = "zero_src")]
    pub mu: String,
    #[serde(default = "zero_src")]
    pub s: String,
}

fn zero_src() -> String {
    "0".into()
}

impl ModelCoefficients {
    pub fn parse(lambda: &str, mu: &str, s: &str) -> Result<Self> {
        Ok(Self { lambda: Profile::parse(lambda)?, mu: Profile::parse(mu)?, s: Profile::parse(s)? })
    }

    pub fn from_sources(src: &ModelCoefficientSources) -> Result<Self> {
        Self::parse(&src.lambda, &src.mu, &src.s)
    }

    /// λ ≡ 1, μ ≡ s ≡ 0.
    pub fn flat() -> Self {
        Self { lambda: Profile::constant(1.0), mu: Profile::constant(0.0), s: Profile::constant(0.0) }
    }

    /// Checks λ ≥ floor > 0 on sampled points of [a, b].
    pub fn check_positive(&self, a: f64, b: f64) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for k in 0..=400 {
            let x = a + (b - a) * k as f64 / 400.0;
            let v = self.lambda.eval(x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("lambda({x}) = {v}")));
            }
            lo = lo.min(v);
        }
        if lo <= 0.0 {
            return Err(Error::Invalid(format!("lambda must be positive; minimum {lo:.3e} on [{a}, {b}]")));
        }
        Ok(lo)
    }

    pub fn lambda_max(&self, a: f64, b: f64) -> f64 {
        (0..=400).map(|k| self.lambda.eval(a + (b - a) * k as f64 / 400.0)).fold(0.0, f64::max)
    }
}

/// ⟨ξ⟩ = (1 + ξ²)^{1/2}.
pub fn japanese(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_jet_matches_closed_form() {
        let p = Profile::parse("1 + 0.3*tanh(x)").unwrap();
        let x: f64 = 0.7;
        let t = x.tanh();
        let s2 = 1.0 - t * t;
        let j = p.jet(x);
        assert!((j[0] - (1.0 + 0.3 * t)).abs() < 1e-15);
        assert!((j[1] - 0.3 * s2).abs() < 1e-14);
        assert!((j[2] + 0.6 * t * s2).abs() < 1e-14);
        assert!((j[3] - 0.3 * (-2.0 * s2 * s2 + 4.0 * t * t * s2)).abs() < 1e-13);
        assert!(Profile::parse("x2").is_err());
        assert_eq!(Profile::constant(2.0).jet(5.0), [2.0, 0.0, 0.0, 0.0]);
    }
}
