//! WebAssembly bindings for the static demo page. Every export takes plain
//! numbers or strings and returns a JSON string, so the same functions run
//! natively in tests.

use dirac_edge::edge::integrate_edge_ode;
use dirac_edge::haldane::{extract_cone, find_dirac_point, resolve_convention, HaldaneModel, XI_STAR};
use dirac_edge::symbol::{DiracSymbol, PhasePoint};
use dirac_edge::symplectic::{reduce_linear_symbol, verify_normal_form, LinearDiracSymbol};
use dirac_edge::Error;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn fail(msg: &str) -> Error {
    Error::Invalid(msg.into())
}

/// Edge trajectory of the wall m(x) = 0 from (x₁, x₂, 0, 0) as {t, x1, x2, xi1, xi2, lambda, truncated}.
pub fn edge_trace_json(m: &str, x1: f64, x2: f64, t_end: f64, dt: f64) -> Result<String, Error> {
    if !(t_end > 0.0 && dt > 0.0 && t_end / dt <= 2e5) {
        return Err(fail("need T > 0, dt > 0 and at most 200000 steps"));
    }
    let sym = DiracSymbol::domain_wall(m)?;
    let traj = integrate_edge_ode(&sym, &PhasePoint::new([x1, x2], [0.0, 0.0]), t_end, dt)?;
    let stride = (traj.len() / 2000).max(1);
    let pick = |f: &dyn Fn(usize) -> f64| (0..traj.len()).step_by(stride).map(f).collect::<Vec<f64>>();
    Ok(json!({
        "t": pick(&|k| traj.t[k]),
        "x1": pick(&|k| traj.z[k].x[0]),
        "x2": pick(&|k| traj.z[k].x[1]),
        "xi1": pick(&|k| traj.z[k].xi[0]),
        "xi2": pick(&|k| traj.z[k].xi[1]),
        "lambda": pick(&|k| traj.lambda[k]),
        "truncated": traj.truncated,
    })
    .to_string())
}

/// Dirac point, cone data and the two bands along ξ⋆ + s(1, 1) for s ∈ [−π, π].
pub fn haldane_json(a1: f64, a2: f64, m: f64, samples: usize) -> Result<String, Error> {
    if !(2..=4096).contains(&samples) {
        return Err(fail("samples must lie in 2..=4096"));
    }
    let conv = resolve_convention()?;
    let mut model = HaldaneModel::new([a1, a2], m);
    model.convention = conv.chosen;
    let point = find_dirac_point(&model, None)?;
    let cone = extract_cone(&model, point.xi)?;
    let (mut s, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..samples {
        let t = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / (samples - 1) as f64;
        let e = model.bands([XI_STAR[0] + t, XI_STAR[1] + t]);
        s.push(t);
        lo.push(e[0]);
        hi.push(e[1]);
    }
    Ok(json!({
        "dirac_point": point.xi,
        "omega_residual": point.omega_residual,
        "beta": cone.beta,
        "mass": cone.mass,
        "cone_coefficient": cone.cone_coefficient(),
        "anisotropy": cone.anisotropy(),
        "path": s,
        "lower": lo,
        "upper": hi,
    })
    .to_string())
}

/// Normal form of the linear symbol with 3×4 coefficients given row-major.
pub fn normal_form_json(coefficients: &[f64]) -> Result<String, Error> {
    if coefficients.len() != 12 || coefficients.iter().any(|v| !v.is_finite()) {
        return Err(fail("expected twelve finite coefficients"));
    }
    let mut c = [[0.0; 4]; 3];
    for (k, v) in coefficients.iter().enumerate() {
        c[k / 4][k % 4] = *v;
    }
    let sym = LinearDiracSymbol::new(c);
    let red = reduce_linear_symbol(&sym)?;
    let rep = verify_normal_form(&sym, &red.s, &red.u, red.lambda);
    Ok(json!({
        "lambda": red.lambda,
        "nu": red.nu,
        "s": dirac_edge::symplectic::mat4_rows(&red.s),
        "u": dirac_edge::symplectic::mat2_rows(&red.u),
        "report": rep,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn edge_trace(m: &str, x1: f64, x2: f64, t_end: f64, dt: f64) -> Result<String, JsError> {
    edge_trace_json(m, x1, x2, t_end, dt).map_err(to_js)
}

#[wasm_bindgen]
pub fn haldane(a1: f64, a2: f64, m: f64, samples: usize) -> Result<String, JsError> {
    haldane_json(a1, a2, m, samples).map_err(to_js)
}

#[wasm_bindgen]
pub fn normal_form(coefficients: &[f64]) -> Result<String, JsError> {
    normal_form_json(coefficients).map_err(to_js)
}
