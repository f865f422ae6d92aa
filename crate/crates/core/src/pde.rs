//! Pseudospectral evolution of (hD_t + D)Ψ = 0 on a periodic box, where
//! D = σ₁(hD₁ − A₁) + σ₂(hD₂ − A₂) + mσ₃.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{wavenumbers, Fft2};
use crate::pauli::{Spinor, C64, I};
use crate::symbol::{poisson_matrix, DiracSymbol, PhasePoint, SymbolKind};

/// Periodic box [−L₁/2, L₁/2) × [−L₂/2, L₂/2) with N₁ × N₂ points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub n: [usize; 2],
    pub len: [f64; 2],
}

impl Grid2 {
    pub fn new(n: [usize; 2], len: [f64; 2]) -> Result<Self> {
        for k in 0..2 {
            if n[k] < 4 || !n[k].is_power_of_two() {
                return Err(Error::Invalid(format!("grid size N{} = {} must be a power of two ≥ 4", k + 1, n[k])));
            }
            if !(len[k] > 0.0 && len[k].is_finite()) {
                return Err(Error::Invalid(format!("box length L{} = {} must be positive", k + 1, len[k])));
            }
        }
        Ok(Self { n, len })
    }

    pub fn square(n: usize, len: f64) -> Result<Self> {
        Self::new([n, n], [len, len])
    }

    pub fn dx(&self, axis: usize) -> f64 {
        self.len[axis] / self.n[axis] as f64
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let d = self.dx(axis);
        (0..self.n[axis]).map(|j| -0.5 * self.len[axis] + j as f64 * d).collect()
    }

    pub fn size(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn cell_area(&self) -> f64 {
        self.dx(0) * self.dx(1)
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let (i1, i2) = (idx % self.n[0], idx / self.n[0]);
        [-0.5 * self.len[0] + i1 as f64 * self.dx(0), -0.5 * self.len[1] + i2 as f64 * self.dx(1)]
    }

    /// Requires at least eight points per √h in both directions.
    pub fn check_resolution(&self, h: f64) -> Result<()> {
        let need = h.sqrt() / 8.0;
        for k in 0..2 {
            if self.dx(k) > need * (1.0 + 1e-9) {
                return Err(Error::Resolution(format!(
                    "spacing dx{} = {:.4e} exceeds sqrt(h)/8 = {:.4e} for h = {h}",
                    k + 1,
                    self.dx(k),
                    need
                )));
            }
        }
        Ok(())
    }
}

/// Two complex components on a grid, with the semiclassical parameter h.
#[derive(Clone, Debug)]
pub struct SpinorField {
    pub grid: Grid2,
    pub h: f64,
    pub psi: [Vec<C64>; 2],
}

impl SpinorField {
    pub fn zeros(grid: Grid2, h: f64) -> Self {
        let n = grid.size();
        Self { grid, h, psi: [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]] }
    }

    pub fn from_fn(grid: Grid2, h: f64, f: impl Fn([f64; 2]) -> Spinor + Sync) -> Self {
        let vals: Vec<Spinor> = (0..grid.size()).into_par_iter().map(|idx| f(grid.point(idx))).collect();
        let psi = [vals.iter().map(|v| v[0]).collect(), vals.iter().map(|v| v[1]).collect()];
        Self { grid, h, psi }
    }

    pub fn at(&self, idx: usize) -> Spinor {
        Spinor::new(self.psi[0][idx], self.psi[1][idx])
    }

    pub fn mass(&self) -> f64 {
        let s: f64 = self.psi.iter().map(|c| c.par_iter().map(|v| v.norm_sqr()).sum::<f64>()).sum();
        s * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.mass().sqrt()
    }

    pub fn linf(&self) -> f64 {
        (0..self.grid.size()).map(|k| (self.psi[0][k].norm_sqr() + self.psi[1][k].norm_sqr()).sqrt()).fold(0.0, f64::max)
    }

    /// ⟨self, other⟩ = ∫ self† other.
    pub fn inner(&self, other: &SpinorField) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for c in 0..2 {
            s += self.psi[c].iter().zip(&other.psi[c]).map(|(a, b)| a.conj() * b).sum::<C64>();
        }
        s * self.grid.cell_area()
    }

    pub fn is_finite(&self) -> bool {
        self.psi.iter().all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    fn axpy(&mut self, a: C64, x: &SpinorField) {
        for c in 0..2 {
            self.psi[c].par_iter_mut().zip(&x.psi[c]).for_each(|(y, xv)| *y += a * xv);
        }
    }

    pub fn scale(&mut self, a: C64) {
        for c in 0..2 {
            self.psi[c].par_iter_mut().for_each(|y| *y *= a);
        }
    }

    /// Largest modulus on the outermost rows and columns of the box.
    pub fn boundary_max(&self) -> f64 {
        let (n1, n2) = (self.grid.n[0], self.grid.n[1]);
        let mut m: f64 = 0.0;
        for idx in 0..self.grid.size() {
            let (i1, i2) = (idx % n1, idx / n1);
            if i1 == 0 || i2 == 0 || i1 == n1 - 1 || i2 == n2 - 1 {
                m = m.max(self.at(idx).norm());
            }
        }
        m
    }
}

/// The periodic smooth wall ℓ·tanh((L/(2πℓ))·sin(2πx/L)): slope one at x = 0,
/// saturating at ±ℓ and crossing zero again at the seam x = ±L/2.
pub fn periodic_wall_expr(var: &str, ell: f64, len: f64) -> String {
    let k = 2.0 * PI / len;
    format!("{ell:.17e}*tanh({:.17e}*sin({k:.17e}*{var}))", 1.0 / (k * ell))
}

/// Vector potential A₁ = −B(L/2π)·sin(2πx₂/L), whose curl is B near x₂ = 0.
pub fn periodic_potential_expr(b: f64, len: f64) -> String {
    let k = 2.0 * PI / len;
    format!("{:.17e}*sin({k:.17e}*x2)", -b / k)
}

/// Mass and potential sampled on a grid, together with the symbol they come from.
#[derive(Clone, Debug)]
pub struct PdeModel {
    pub grid: Grid2,
    pub symbol: DiracSymbol,
    pub m: Vec<f64>,
    pub a: [Vec<f64>; 2],
    pub magnetic: bool,
}

impl PdeModel {
    /// Samples a domain-wall or magnetic symbol.
    pub fn from_symbol(symbol: DiracSymbol, grid: &Grid2) -> Result<Self> {
        let n = grid.size();
        let pts: Vec<[f64; 2]> = (0..n).map(|k| grid.point(k)).collect();
        let (m, a, magnetic): (Vec<f64>, [Vec<f64>; 2], bool) = match &symbol.kind {
            SymbolKind::DomainWall { m } => {
                (pts.par_iter().map(|&x| m.eval(x)).collect(), [vec![0.0; n], vec![0.0; n]], false)
            }
            SymbolKind::Magnetic { m, a } => (
                pts.par_iter().map(|&x| m.eval(x)).collect(),
                [pts.par_iter().map(|&x| a[0].eval(x)).collect(), pts.par_iter().map(|&x| a[1].eval(x)).collect()],
                true,
            ),
            other => {
                return Err(Error::Invalid(format!(
                    "the 2D solver supports domain-wall and magnetic symbols, got {other:?}"
                )))
            }
        };
        let s = symbol.scale;
        let m: Vec<f64> = m.into_iter().map(|v: f64| v * s).collect();
        let a = a.map(|c: Vec<f64>| c.into_iter().map(|v| v * s).collect::<Vec<f64>>());
        if m.iter().chain(&a[0]).chain(&a[1]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mass or potential on the grid".into()));
        }
        Ok(Self { grid: grid.clone(), symbol, m, a, magnetic })
    }

    /// Periodic straight wall along x₁ = axis, slope one, saturation ℓ.
    pub fn straight_wall(grid: &Grid2, ell: f64) -> Result<Self> {
        let sym = DiracSymbol::domain_wall(&periodic_wall_expr("x2", ell, grid.len[1]))?;
        Self::from_symbol(sym, grid)
    }

    /// Straight wall plus a constant magnetic field B near the interface.
    pub fn magnetic_wall(grid: &Grid2, ell: f64, b: f64) -> Result<Self> {
        let sym = DiracSymbol::magnetic(
            &periodic_wall_expr("x2", ell, grid.len[1]),
            &periodic_potential_expr(b, grid.len[1]),
            "0",
        )?;
        Self::from_symbol(sym, grid)
    }

    pub fn max_abs_m(&self) -> f64 {
        self.m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_a(&self) -> f64 {
        (0..self.grid.size()).map(|k| self.a[0][k].hypot(self.a[1][k])).fold(0.0, f64::max)
    }
}

/// Applies D with derivatives in frequency space; the ordering
/// ½((hD−A)σ + σ(hD−A)) coincides with σ(hD−A) for scalar potentials.
pub struct DiracOperator<'a> {
    pub model: &'a PdeModel,
    pub h: f64,
    fft: Fft2,
    k: [Vec<f64>; 2],
}

impl<'a> DiracOperator<'a> {
    pub fn new(model: &'a PdeModel, h: f64) -> Self {
        let g = &model.grid;
        Self {
            model,
            h,
            fft: Fft2::new(g.n[0], g.n[1]),
            k: [wavenumbers(g.n[0], g.len[0], true), wavenumbers(g.n[1], g.len[1], true)],
        }
    }

    /// Upper bound for the spectral radius of D.
    pub fn spectral_bound(&self) -> f64 {
        let g = &self.model.grid;
        let kmax = PI * (1.0 / (g.dx(0) * g.dx(0)) + 1.0 / (g.dx(1) * g.dx(1))).sqrt();
        self.h * kmax + self.model.max_abs_m() + self.model.max_abs_a()
    }

    /// Largest stable RK4 step for ∂_tΨ = −(i/h)DΨ with a margin below 2√2.
    pub fn max_dt(&self) -> f64 {
        2.5 * self.h / self.spectral_bound()
    }

    pub fn apply(&self, f: &SpinorField) -> SpinorField {
        let g = &self.model.grid;
        let n1 = g.n[0];
        // p[c][j] = (hD_j − A_j) ψ_c
        let mut p: Vec<Vec<C64>> = Vec::with_capacity(4);
        for c in 0..2 {
            let mut hat = f.psi[c].clone();
            self.fft.forward(&mut hat);
            for axis in 0..2 {
                let mut d = hat.clone();
                let k = &self.k[axis];
                let h = self.h;
                d.par_iter_mut().enumerate().for_each(|(idx, v)| {
                    let kk = if axis == 0 { k[idx % n1] } else { k[idx / n1] };
                    *v *= h * kk;
                });
                self.fft.inverse(&mut d);
                let a = &self.model.a[axis];
                d.par_iter_mut().zip(&f.psi[c]).zip(a).for_each(|((v, psi), av)| *v -= av * psi);
                p.push(d);
            }
        }
        let m = &self.model.m;
        let mut out = SpinorField::zeros(g.clone(), f.h);
        let (o0, o1) = out.psi.split_at_mut(1);
        o0[0].par_iter_mut().zip(o1[0].par_iter_mut()).enumerate().for_each(|(idx, (u0, u1))| {
            // σ₁P₁ψ + σ₂P₂ψ + mσ₃ψ with P_jψ_c = p[2c + j]
            *u0 = p[2][idx] - I * p[3][idx] + m[idx] * f.psi[0][idx];
            *u1 = p[0][idx] + I * p[1][idx] - m[idx] * f.psi[1][idx];
        });
        out
    }

    /// Generator −(i/h)D.
    fn rhs(&self, f: &SpinorField) -> SpinorField {
        let mut d = self.apply(f);
        d.scale(C64::new(0.0, -1.0 / self.h));
        d
    }

    pub fn rk4_step(&self, f: &SpinorField, dt: f64) -> SpinorField {
        let k1 = self.rhs(f);
        let mut y = f.clone();
        y.axpy(C64::new(0.5 * dt, 0.0), &k1);
        let k2 = self.rhs(&y);
        let mut y = f.clone();
        y.axpy(C64::new(0.5 * dt, 0.0), &k2);
        let k3 = self.rhs(&y);
        let mut y = f.clone();
        y.axpy(C64::new(dt, 0.0), &k3);
        let k4 = self.rhs(&y);
        let mut out = f.clone();
        out.axpy(C64::new(dt / 6.0, 0.0), &k1);
        out.axpy(C64::new(dt / 3.0, 0.0), &k2);
        out.axpy(C64::new(dt / 3.0, 0.0), &k3);
        out.axpy(C64::new(dt / 6.0, 0.0), &k4);
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Number of recorded frames after t = 0 (at most 50).
    pub frames: usize,
    /// Keep full fields for these frame indices (0 is the initial state).
    #[serde(default)]
    pub keep_fields: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Observables {
    pub mass: f64,
    pub linf: f64,
    pub center_of_mass: [f64; 2],
    pub interface_mass_fraction: f64,
    /// Fractions of the mass in ℒ⁻ and ℒ⁺ of M(x, 0), pointwise.
    pub line_projections: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub observables: Observables,
    pub field: Option<SpinorField>,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
    pub steps: usize,
    pub final_field: SpinorField,
}

/// Per-point data for the observables: distance-to-interface estimate and ℒ⁻ direction.
pub struct ObservableContext {
    dist: Vec<f64>,
    lminus: Vec<Option<Spinor>>,
}

impl ObservableContext {
    pub fn new(model: &PdeModel) -> Self {
        let g = &model.grid;
        let n = g.size();
        let pts: Vec<[f64; 2]> = (0..n).map(|k| g.point(k)).collect();
        let sym = &model.symbol;
        let data: Vec<(f64, Option<Spinor>)> = pts
            .par_iter()
            .map(|&x| {
                let z = PhasePoint::new(x, [0.0, 0.0]);
                let m = sym.components(&z).map(|p| p[2]).unwrap_or(f64::NAN);
                let gm = sym.gradients(&z).map(|gr| gr[2][0].hypot(gr[2][1])).unwrap_or(0.0);
                let dist = if gm > 1e-12 { m.abs() / gm } else { f64::INFINITY };
                let v = poisson_matrix(sym, &z).ok().filter(|mm| mm.norm_vec() > 1e-10).and_then(|mm| mm.eigenvector(-1.0, 0.0));
                (dist, v)
            })
            .collect();
        Self { dist: data.iter().map(|d| d.0).collect(), lminus: data.into_iter().map(|d| d.1).collect() }
    }
}

pub fn observables(field: &SpinorField, ctx: &ObservableContext) -> Observables {
    let g = &field.grid;
    let h = field.h;
    let area = g.cell_area();
    let band = 3.0 * h.sqrt();
    let (mut mass, mut linf, mut cx, mut cy, mut near, mut pm) = (0.0, 0.0f64, 0.0, 0.0, 0.0, 0.0);
    let mut resolved = 0.0;
    for idx in 0..g.size() {
        let v = field.at(idx);
        let w = v.norm_squared();
        let x = g.point(idx);
        mass += w;
        linf = linf.max(w.sqrt());
        cx += w * x[0];
        cy += w * x[1];
        if ctx.dist[idx] <= band {
            near += w;
        }
        if let Some(l) = ctx.lminus[idx] {
            pm += l.dotc(&v).norm_sqr();
            resolved += w;
        }
    }
    let frac = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Observables {
        mass: mass * area,
        linf,
        center_of_mass: [frac(cx, mass), frac(cy, mass)],
        interface_mass_fraction: frac(near, mass),
        line_projections: [frac(pm, resolved), frac(resolved - pm, resolved)],
    }
}

/// RK4 evolution with a step-size check and NaN detection.
pub fn evolve(model: &PdeModel, psi0: &SpinorField, opts: &EvolveOptions) -> Result<Evolution> {
    if psi0.grid != model.grid {
        return Err(Error::Invalid("field and model grids differ".into()));
    }
    if !(opts.t_end >= 0.0 && opts.dt > 0.0) {
        return Err(Error::Invalid(format!("need T ≥ 0 and dt > 0, got T = {}, dt = {}", opts.t_end, opts.dt)));
    }
    let h = psi0.h;
    let op = DiracOperator::new(model, h);
    let bound = op.max_dt();
    if opts.dt > bound {
        return Err(Error::StepSize {
            dt: opts.dt,
            bound,
            rule: "RK4 stability dt <= 2.5 h / (h pi |1/dx| + max|m| + max|A|)".into(),
        });
    }
    let frames = opts.frames.clamp(1, 50);
    let steps = (opts.t_end / opts.dt).ceil().max(1.0) as usize;
    let dt = opts.t_end / steps as f64;
    let ctx = ObservableContext::new(model);
    let keep = |k: usize| opts.keep_fields.contains(&k);
    let mut snaps = vec![Snapshot { t: 0.0, observables: observables(psi0, &ctx), field: keep(0).then(|| psi0.clone()) }];
    let frame_steps: Vec<usize> = (1..=frames).map(|k| ((k * steps) as f64 / frames as f64).round() as usize).collect();
    let mut psi = psi0.clone();
    let mut next = 0;
    for step in 1..=steps {
        psi = op.rk4_step(&psi, dt);
        if !psi.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite field at step {step} (t = {:.4}); dt = {dt:.3e}, bound {bound:.3e}",
                step as f64 * dt
            )));
        }
        while next < frame_steps.len() && frame_steps[next] == step {
            next += 1;
            snaps.push(Snapshot {
                t: step as f64 * dt,
                observables: observables(&psi, &ctx),
                field: keep(next).then(|| psi.clone()),
            });
        }
    }
    Ok(Evolution { snapshots: snaps, dt, steps, final_field: psi })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub t: f64,
    pub l2_error: f64,
    pub overlap: f64,
}

/// ‖Ψ − Φ‖ and |⟨Ψ,Φ⟩|/(‖Ψ‖‖Φ‖).
pub fn compare_to_prediction(t: f64, sim: &SpinorField, pred: &SpinorField) -> Result<Comparison> {
    if sim.grid != pred.grid {
        return Err(Error::Invalid("simulated and predicted fields live on different grids".into()));
    }
    let mut diff = sim.clone();
    diff.axpy(C64::new(-1.0, 0.0), pred);
    let denom = sim.norm() * pred.norm();
    let overlap = if denom > 0.0 { sim.inner(pred).norm() / denom } else { 0.0 };
    Ok(Comparison { t, l2_error: diff.norm(), overlap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> Grid2 {
        Grid2::square(32, 4.0).unwrap()
    }

    #[test]
    fn constant_mass_acts_as_sigma3() {
        let g = small_grid();
        let model = PdeModel::from_symbol(DiracSymbol::domain_wall("0.7").unwrap(), &g).unwrap();
        let f = SpinorField::from_fn(g.clone(), 0.1, |_| Spinor::new(c(1.0, 0.5), c(-0.3, 2.0)));
        let out = DiracOperator::new(&model, 0.1).apply(&f);
        for idx in 0..g.size() {
            assert!((out.psi[0][idx] - 0.7 * c(1.0, 0.5)).norm() < 1e-12);
            assert!((out.psi[1][idx] + 0.7 * c(-0.3, 2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_symbol_action() {
        let g = small_grid();
        let h = 0.2;
        let model = PdeModel::from_symbol(DiracSymbol::domain_wall("0").unwrap(), &g).unwrap();
        let k = [2.0 * PI * 3.0 / 4.0, -2.0 * PI / 4.0];
        let xi = [h * k[0], h * k[1]];
        let f = SpinorField::from_fn(g.clone(), h, |x| Spinor::new(C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]), c(0.0, 0.0)));
        let out = DiracOperator::new(&model, h).apply(&f);
        for idx in 0..g.size() {
            assert!(out.psi[0][idx].norm() < 1e-10);
            assert!((out.psi[1][idx] - c(xi[0], xi[1]) * f.psi[0][idx]).norm() < 1e-10);
        }
        assert!((out.norm() - xi[0].hypot(xi[1]) * f.norm()).abs() < 1e-10);
    }

    #[test]
    fn dirac_operator_is_symmetric() {
        let g = small_grid();
        let model = PdeModel::magnetic_wall(&g, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rand_field = || {
            SpinorField::from_fn(g.clone(), 0.1, |_| Spinor::new(c(0.0, 0.0), c(0.0, 0.0)))
        };
        let mut u = rand_field();
        let mut v = rand_field();
        for c_ in 0..2 {
            for k in 0..g.size() {
                u.psi[c_][k] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                v.psi[c_][k] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let op = DiracOperator::new(&model, 0.1);
        let lhs = op.apply(&u).inner(&v);
        let rhs = u.inner(&op.apply(&v));
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn free_mode_matches_matrix_exponential() {
        let g = small_grid();
        let h = 0.25;
        let model = PdeModel::from_symbol(DiracSymbol::domain_wall("0.4").unwrap(), &g).unwrap();
        let k = [2.0 * PI * 2.0 / 4.0, 2.0 * PI / 4.0];
        let (p1, p2, m) = (h * k[0], h * k[1], 0.4);
        let u0 = Spinor::new(c(0.6, 0.0), c(0.0, 0.8));
        let f = SpinorField::from_fn(g.clone(), h, |x| u0 * C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]));
        let op = DiracOperator::new(&model, h);
        let t_end = 0.5;
        let dt = op.max_dt() / 16.0;
        let res = evolve(&model, &f, &EvolveOptions { t_end, dt, frames: 1, keep_fields: vec![] }).unwrap();
        // exp(−i t H/h) with H = p1σ1 + p2σ2 + mσ3
        let e = (p1 * p1 + p2 * p2 + m * m).sqrt();
        let th = t_end * e / h;
        let hm = crate::pauli::Hermitian2::new(p1, p2, m, 0.0).matrix();
        let prop = crate::pauli::sigma(0) * c(th.cos(), 0.0) - hm * c(0.0, th.sin() / e);
        let want = prop * u0;
        let out = &res.final_field;
        for idx in [0, 17, 301] {
            let phase = C64::from_polar(1.0, k[0] * g.point(idx)[0] + k[1] * g.point(idx)[1]);
            let err = (out.at(idx) - want * phase).norm();
            assert!(err < 1e-8, "err {err}");
        }
    }

    #[test]
    fn step_size_violation_is_reported() {
        let g = small_grid();
        let model = PdeModel::straight_wall(&g, 1.0).unwrap();
        let f = SpinorField::zeros(g, 0.1);
        let err = evolve(&model, &f, &EvolveOptions { t_end: 0.1, dt: 1.0, frames: 1, keep_fields: vec![] }).unwrap_err();
        assert!(matches!(err, Error::StepSize { .. }));
    }

    #[test]
    fn wall_profile_has_unit_slope() {
        let g = small_grid();
        let model = PdeModel::straight_wall(&g, 1.0).unwrap();
        let z = PhasePoint::new([0.3, 0.0], [0.0, 0.0]);
        let gr = model.symbol.gradients(&z).unwrap();
        assert!((gr[2][1] - 1.0).abs() < 1e-14 && gr[2][0].abs() < 1e-14);
        let magn = PdeModel::magnetic_wall(&g, 1.0, 2.0).unwrap();
        let gr = magn.symbol.gradients(&z).unwrap();
        // curl A = ∂₁A₂ − ∂₂A₁ = B at the interface
        assert!((gr[0][1] - 2.0).abs() < 1e-12);
    }
}
