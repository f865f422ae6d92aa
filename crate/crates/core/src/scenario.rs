//! Scenario files: a validated description of one pipeline run and the
//! artifacts it produces.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::edge::{
    integrate_edge_ode, model_coefficients_along_edge, predicted_speed, profile_coefficients, synthesize_wavepacket, time_grid, envelope_coords,
    evolve_envelope, EdgePrediction, Envelope, SpeedModel, WavepacketSpec,
};
use crate::error::{Error, Result};
use crate::haldane::{band_scan, edge_speed_strained, extract_cone, find_dirac_point, pseudo_geometry, resolve_convention, HaldaneModel, StrainField, StrainSources};
use crate::io::{field_dump, write_csv, write_dump, write_json};
use crate::model::evolve1d::{BlockEvolver, BlockOperator, Grid1};
use crate::model::flow::cone_interval;
use crate::model::parametrix::{evaluate_parametrix_series, GaussianSpectrum, ParametrixEval, ParametrixJob, QuadratureOptions, Spectrum};
use crate::model::{ModelCoefficientSources, ModelCoefficients, Profile};
use crate::pauli::{c, Spinor, C64};
use crate::pde::{compare_to_prediction, evolve, periodic_potential_expr, periodic_wall_expr, DiracOperator, EvolveOptions, Grid2, PdeModel};
use crate::symbol::{check_transversality, edge_vector_field, eigenlines, find_crossing, lambda_gap, poisson_matrix, DiracSymbol, PhasePoint, SymbolKind};
use crate::symplectic::{mat2_rows, mat4_rows, reduce_linear_symbol, reduce_linear_symbol_via_quadratic, verify_normal_form, LinearDiracSymbol};

/// A parsed and validated scenario.
#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Subdirectory of the output root; defaults to the scenario name.
    pub output: Option<String>,
    pub task: Task,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum Task {
    Analyze(AnalyzeTask),
    Reduce(ReduceTask),
    EdgeTrace(EdgeTraceTask),
    Envelope(EnvelopeTask),
    Evolve(EvolveTask),
    ModelDispersion(ModelDispersionTask),
    Haldane(HaldaneTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Analyze(_) => "analyze",
            Task::Reduce(_) => "reduce",
            Task::EdgeTrace(_) => "edge-trace",
            Task::Envelope(_) => "envelope",
            Task::Evolve(_) => "evolve",
            Task::ModelDispersion(_) => "model-dispersion",
            Task::Haldane(_) => "haldane",
        }
    }
}

pub const TASK_NAMES: [&str; 7] = ["analyze", "reduce", "edge-trace", "envelope", "evolve", "model-dispersion", "haldane"];

/// Symbol description shared by the phase-space tasks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolSpec {
    DomainWall { m: String },
    Magnetic { m: String, a: [String; 2] },
    Linear { c: [[f64; 4]; 3] },
    /// Wall m = periodic tanh-saturated x₂ on a box of side `len`, optionally with
    /// a periodic potential of field strength `b` near the wall.
    PeriodicWall {
        ell: f64,
        #[serde(default)]
        len: Option<f64>,
        #[serde(default)]
        b: f64,
    },
    Strained(StrainSources),
}

impl SymbolSpec {
    /// `box_len` fills in the period of a periodic wall when the scenario leaves it out.
    pub fn build(&self, box_len: Option<f64>) -> Result<DiracSymbol> {
        match self {
            SymbolSpec::DomainWall { m } => DiracSymbol::domain_wall(m),
            SymbolSpec::Magnetic { m, a } => DiracSymbol::magnetic(m, &a[0], &a[1]),
            SymbolSpec::Linear { c } => Ok(DiracSymbol::linear(*c)),
            SymbolSpec::PeriodicWall { ell, len, b } => {
                let len = len.or(box_len).ok_or_else(|| Error::Invalid("periodic-wall needs `len` outside an evolve task".into()))?;
                positive("ell", *ell)?;
                positive("len", len)?;
                let m = periodic_wall_expr("x2", *ell, len);
                if *b == 0.0 {
                    DiracSymbol::domain_wall(&m)
                } else {
                    DiracSymbol::magnetic(&m, &periodic_potential_expr(*b, len), "0")
                }
            }
            SymbolSpec::Strained(src) => Ok(StrainField::parse(src)?.symbol()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeTask {
    pub symbol: SymbolSpec,
    /// Phase-space points (x₁, x₂, ξ₁, ξ₂).
    pub points: Vec<[f64; 4]>,
    /// Move each point onto the crossing set before analyzing it.
    #[serde(default)]
    pub project: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceTask {
    /// Explicit 3×4 coefficient matrices.
    #[serde(default)]
    pub symbols: Vec<[[f64; 4]; 3]>,
    /// Number of additional seeded random symbols with entries in [−1, 1].
    #[serde(default)]
    pub random: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTraceTask {
    pub symbol: SymbolSpec,
    pub z0: [f64; 4],
    pub t_end: f64,
    #[serde(default = "default_edge_dt")]
    pub dt: f64,
    #[serde(default = "zero_src")]
    pub mu: String,
    #[serde(default = "zero_src")]
    pub s: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeTask {
    pub coefficients: ModelCoefficientSources,
    pub t_end: f64,
    #[serde(default = "default_edge_dt")]
    pub dt: f64,
    #[serde(default = "default_env_n")]
    pub n: usize,
    #[serde(default = "default_env_len")]
    pub len: f64,
    /// Width of the initial Gaussian π^{−1/4}w^{−1/2}e^{−y²/(2w²)}.
    #[serde(default = "one")]
    pub width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub len: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    /// −1 for ℒ⁻, +1 for ℒ⁺.
    #[serde(default = "minus_one")]
    pub sign: i8,
    #[serde(default)]
    pub x_star: [f64; 2],
    #[serde(default)]
    pub xi_star: [f64; 2],
    #[serde(default = "Envelope::standard")]
    pub envelope: Envelope,
}

impl Default for PacketSpec {
    fn default() -> Self {
        Self { sign: -1, x_star: [0.0; 2], xi_star: [0.0; 2], envelope: Envelope::standard() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveTask {
    pub symbol: SymbolSpec,
    pub h: f64,
    pub grid: GridSpec,
    pub t_end: f64,
    /// Defaults to the stability bound.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub packet: PacketSpec,
    /// Write the final field as a binary dump.
    #[serde(default)]
    pub dump: bool,
    /// Compare the final field with the predicted traveling packet (domain walls only).
    #[serde(default)]
    pub predict: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl SampleRange {
    fn points(&self) -> Vec<f64> {
        let d = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + d * i as f64).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectSolveSpec {
    pub grid: GridSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDispersionTask {
    pub coefficients: ModelCoefficientSources,
    pub eps: f64,
    pub n: Vec<usize>,
    pub times: Vec<f64>,
    pub x: SampleRange,
    /// Initial profile v·e^{−x²/(2w²)} with v as [[Re, Im], [Re, Im]].
    #[serde(default = "default_v")]
    pub v: [[f64; 2]; 2],
    #[serde(default = "one")]
    pub width: f64,
    /// Also evolve the block directly and report the discrepancy.
    #[serde(default)]
    pub direct: Option<DirectSolveSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaldaneTask {
    #[serde(default)]
    pub a: [f64; 2],
    #[serde(default)]
    pub m: f64,
    /// Band-scan resolution per axis; 0 skips the scan.
    #[serde(default)]
    pub scan: usize,
    #[serde(default)]
    pub strain: Option<StrainSources>,
    /// Positions at which the strained edge speed is reported.
    #[serde(default)]
    pub samples: Vec<[f64; 2]>,
}

fn default_edge_dt() -> f64 {
    1e-3
}
fn default_env_n() -> usize {
    1024
}
fn default_env_len() -> f64 {
    48.0
}
fn default_frames() -> usize {
    10
}
fn one() -> f64 {
    1.0
}
fn minus_one() -> i8 {
    -1
}
fn zero_src() -> String {
    "0".into()
}
fn default_v() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 0.0]]
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("`{name}` must be positive, got {v}")))
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::Invalid(format!("`{name}` must not be empty")))
    } else {
        Ok(())
    }
}

/// Parses a scenario from JSON text and validates it.
pub fn parse_scenario(src: &str) -> Result<Scenario> {
    let value: Value = serde_json::from_str(src).map_err(|e| Error::Parse(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(Error::Parse("a scenario must be a JSON object".into()));
    };
    let name = match obj.remove("name") {
        Some(Value::String(s)) if !s.is_empty() => s,
        Some(_) => return Err(Error::Invalid("`name` must be a non-empty string".into())),
        None => return Err(Error::Invalid("missing field `name`".into())),
    };
    if !name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
        return Err(Error::Invalid(format!("`name` may only contain letters, digits, '-' and '_', got {name:?}")));
    }
    let seed = match obj.remove("seed") {
        None => 0,
        Some(v) => v.as_u64().ok_or_else(|| Error::Invalid("`seed` must be a non-negative integer".into()))?,
    };
    let output = match obj.remove("output") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(Error::Invalid("`output` must be a string".into())),
    };
    if !obj.contains_key("task") {
        return Err(Error::Invalid(format!("missing field `task` (one of {})", TASK_NAMES.join(", "))));
    }
    let task: Task = serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Invalid(e.to_string()))?;
    let scn = Scenario { name, seed, output, task };
    scn.validate()?;
    Ok(scn)
}

impl Scenario {
    /// Checks ranges that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        match &self.task {
            Task::Analyze(t) => nonempty("points", &t.points),
            Task::Reduce(t) => {
                if t.symbols.is_empty() && t.random == 0 {
                    return Err(Error::Invalid("reduce needs `symbols` or `random` > 0".into()));
                }
                Ok(())
            }
            Task::EdgeTrace(t) => {
                positive("t_end", t.t_end)?;
                positive("dt", t.dt)
            }
            Task::Envelope(t) => {
                positive("t_end", t.t_end)?;
                positive("dt", t.dt)?;
                positive("len", t.len)?;
                positive("width", t.width)?;
                if t.n < 16 {
                    return Err(Error::Invalid(format!("`n` must be at least 16, got {}", t.n)));
                }
                Ok(())
            }
            Task::Evolve(t) => {
                positive("h", t.h)?;
                positive("grid.len", t.grid.len)?;
                positive("t_end", t.t_end)?;
                if let Some(dt) = t.dt {
                    positive("dt", dt)?;
                }
                if t.packet.sign != 1 && t.packet.sign != -1 {
                    return Err(Error::Invalid(format!("`packet.sign` must be 1 or -1, got {}", t.packet.sign)));
                }
                if !(1..=50).contains(&t.frames) {
                    return Err(Error::Invalid(format!("`frames` must lie in 1..=50, got {}", t.frames)));
                }
                Ok(())
            }
            Task::ModelDispersion(t) => {
                positive("eps", t.eps)?;
                positive("width", t.width)?;
                nonempty("n", &t.n)?;
                nonempty("times", &t.times)?;
                if t.n.contains(&0) {
                    return Err(Error::Invalid("block indices `n` must be at least 1".into()));
                }
                if t.times.iter().any(|&s| !(s > 0.0)) || t.times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Invalid("`times` must be positive and increasing".into()));
                }
                if t.x.count < 2 || !(t.x.max > t.x.min) {
                    return Err(Error::Invalid("`x` needs count ≥ 2 and max > min".into()));
                }
                if let Some(d) = &t.direct {
                    positive("direct.grid.len", d.grid.len)?;
                }
                Ok(())
            }
            Task::Haldane(t) => {
                if t.scan == 1 {
                    return Err(Error::Invalid("`scan` must be 0 or at least 2".into()));
                }
                if !t.samples.is_empty() && t.strain.is_none() {
                    return Err(Error::Invalid("`samples` need a `strain` field".into()));
                }
                Ok(())
            }
        }
    }

    pub fn output_dir(&self, root: &Path) -> PathBuf {
        root.join(self.output.as_deref().unwrap_or(&self.name))
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&src)
}

/// Files written by a run and a JSON summary of the headline numbers.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

struct Sink {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Sink {
    fn csv<R: AsRef<[f64]>>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
        let p = self.dir.join(name);
        write_csv(&p, header, rows)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.dir.join(name);
        write_json(&p, v)?;
        self.artifacts.push(p);
        Ok(())
    }
}

/// Executes a scenario, writing its artifacts under `dir`.
pub fn run_scenario(scn: &Scenario, dir: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(dir)?;
    let mut sink = Sink { dir: dir.to_path_buf(), artifacts: Vec::new() };
    let summary = match &scn.task {
        Task::Analyze(t) => run_analyze(t, &mut sink)?,
        Task::Reduce(t) => run_reduce(t, scn.seed, &mut sink)?,
        Task::EdgeTrace(t) => run_edge_trace(t, &mut sink)?,
        Task::Envelope(t) => run_envelope(t, &mut sink)?,
        Task::Evolve(t) => run_evolve(t, &mut sink)?,
        Task::ModelDispersion(t) => run_dispersion(t, &mut sink)?,
        Task::Haldane(t) => run_haldane(t, &mut sink)?,
    };
    sink.json("summary.json", &summary)?;
    Ok(RunReport { artifacts: sink.artifacts, summary })
}

fn run_analyze(t: &AnalyzeTask, sink: &mut Sink) -> Result<Value> {
    let sym = t.symbol.build(None)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for z in &t.points {
        let mut z = PhasePoint::from_array(*z);
        if t.project {
            z = find_crossing(&sym, &z)?;
        }
        let p = sym.components(&z)?;
        let mm = poisson_matrix(&sym, &z)?.pauli();
        let lambda = lambda_gap(&sym, &z)?;
        let field = edge_vector_field(&sym, &z).ok();
        let lines = eigenlines(&sym, &z).ok();
        let tr = check_transversality(&sym, &z).ok();
        let v = field.unwrap_or([f64::NAN; 4]);
        let za = z.to_array();
        rows.push([za[0], za[1], za[2], za[3], p[0], p[1], p[2], mm[0], mm[1], mm[2], lambda, v[0], v[1], v[2], v[3]]);
        points.push(json!({
            "z": za,
            "components": p,
            "bracket_matrix": mm,
            "lambda": lambda,
            "edge_vector_field": field,
            "l_minus": lines.as_ref().map(|l| crate::edge::spinor_to_rows(&l.0.v)),
            "l_plus": lines.as_ref().map(|l| crate::edge::spinor_to_rows(&l.1.v)),
            "transversal": tr.as_ref().map(|r| r.independent),
            "min_singular_value": tr.as_ref().map(|r| r.min_singular_value),
        }));
    }
    sink.csv(
        "analyze.csv",
        &["x1", "x2", "xi1", "xi2", "p1", "p2", "p3", "m1", "m2", "m3", "lambda", "v_x1", "v_x2", "v_xi1", "v_xi2"],
        &rows,
    )?;
    sink.json("analyze.json", &points)?;
    Ok(json!({ "task": "analyze", "points": t.points.len() }))
}

fn run_reduce(t: &ReduceTask, seed: u64, sink: &mut Sink) -> Result<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<([[f64; 4]; 3], bool)> = t.symbols.iter().map(|c| (*c, true)).collect();
    for _ in 0..t.random {
        let mut c = [[0.0; 4]; 3];
        for row in c.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        list.push((c, false));
    }
    let mut rows = Vec::new();
    let mut details = Vec::new();
    let mut skipped = 0;
    let (mut worst_nf, mut worst_sp) = (0.0f64, 0.0f64);
    for (k, (coeffs, explicit)) in list.iter().enumerate() {
        let sym = LinearDiracSymbol::new(*coeffs);
        let red = match reduce_linear_symbol(&sym) {
            Ok(r) => r,
            Err(Error::Precondition(msg)) if !explicit => {
                skipped += 1;
                details.push(json!({ "index": k, "skipped": msg }));
                continue;
            }
            Err(e) => return Err(e),
        };
        let rep = verify_normal_form(&sym, &red.s, &red.u, red.lambda);
        let alt = reduce_linear_symbol_via_quadratic(&sym)?;
        let rep_alt = verify_normal_form(&sym, &alt.s, &alt.u, alt.lambda);
        let det_u = red.u.determinant();
        worst_nf = worst_nf.max(rep.normal_form_residual).max(rep_alt.normal_form_residual);
        worst_sp = worst_sp.max(rep.symplectic_residual).max(rep_alt.symplectic_residual);
        rows.push([
            k as f64,
            red.lambda,
            rep.lambda_from_brackets,
            red.nu as f64,
            rep.normal_form_residual,
            rep.symplectic_residual,
            rep.su2_residual,
            (det_u - c(1.0, 0.0)).norm(),
            rep_alt.normal_form_residual,
            rep_alt.symplectic_residual,
            (red.lambda - alt.lambda).abs(),
        ]);
        details.push(json!({
            "index": k,
            "coefficients": coeffs,
            "s": mat4_rows(&red.s),
            "u": mat2_rows(&red.u),
            "lambda": red.lambda,
            "nu": red.nu,
            "repaired": red.repaired,
        }));
    }
    sink.csv(
        "reduce.csv",
        &[
            "index",
            "lambda",
            "lambda_brackets",
            "nu",
            "normal_form_residual",
            "symplectic_residual",
            "su2_residual",
            "det_u_defect",
            "alt_normal_form_residual",
            "alt_symplectic_residual",
            "lambda_route_gap",
        ],
        &rows,
    )?;
    sink.json("reduce.json", &details)?;
    Ok(json!({
        "task": "reduce",
        "reduced": rows.len(),
        "skipped": skipped,
        "max_normal_form_residual": worst_nf,
        "max_symplectic_residual": worst_sp,
    }))
}

fn run_edge_trace(t: &EdgeTraceTask, sink: &mut Sink) -> Result<Value> {
    let sym = t.symbol.build(None)?;
    let traj = integrate_edge_ode(&sym, &PhasePoint::from_array(t.z0), t.t_end, t.dt)?;
    let rows: Vec<[f64; 7]> = (0..traj.len())
        .map(|k| {
            let z = traj.z[k].to_array();
            [traj.t[k], z[0], z[1], z[2], z[3], traj.lambda[k], traj.residual[k]]
        })
        .collect();
    sink.csv("trajectory.csv", &["t", "x1", "x2", "xi1", "xi2", "lambda", "residual"], &rows)?;
    let co = model_coefficients_along_edge(&traj, None, &Profile::parse(&t.mu)?, &Profile::parse(&t.s)?)?;
    sink.csv("coefficients.csv", &["t", "coord", "rho", "nu", "s_int"], co.csv_rows())?;
    let last = traj.last().to_array();
    let v = edge_vector_field(&sym, traj.last())?;
    Ok(json!({
        "task": "edge-trace",
        "steps": traj.len() - 1,
        "final_t": traj.t.last(),
        "final_z": last,
        "arc_length": traj.arc_length(),
        "speed": v[0].hypot(v[1]),
        "max_residual": traj.max_residual(),
        "truncated": traj.truncated,
    }))
}

fn run_envelope(t: &EnvelopeTask, sink: &mut Sink) -> Result<Value> {
    let co = ModelCoefficients::from_sources(&t.coefficients)?;
    let tg = time_grid(t.t_end, t.dt);
    let ec = profile_coefficients(&tg, &co.lambda, &co.mu, &co.s)?;
    sink.csv("coefficients.csv", &["t", "coord", "rho", "nu", "s_int"], ec.csv_rows())?;
    let (rho, nu, s_int) = ec.at(t.t_end)?;
    let w = t.width;
    let norm = std::f64::consts::PI.powf(-0.25) / w.sqrt();
    let a0: Vec<C64> = envelope_coords(t.n, t.len).iter().map(|&y| c(norm * (-0.5 * y * y / (w * w)).exp(), 0.0)).collect();
    let env = evolve_envelope(&a0, t.len, t.t_end, rho, nu, s_int)?;
    let rows: Vec<[f64; 4]> = env.coords().iter().zip(&env.a).map(|(&y, a)| [y, a.re, a.im, a.norm()]).collect();
    sink.csv("envelope.csv", &["y", "re", "im", "abs"], &rows)?;
    Ok(json!({
        "task": "envelope",
        "t": t.t_end,
        "coord": ec.coord.last(),
        "rho": rho,
        "nu": nu,
        "s_int": s_int,
        "l2": env.l2(),
        "linf": env.linf(),
    }))
}

/// Least-squares velocity of the centre of mass.
fn fit_velocity(t: &[f64], x: &[[f64; 2]]) -> [f64; 2] {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let var: f64 = t.iter().map(|s| (s - tm) * (s - tm)).sum();
    let mut v = [0.0; 2];
    for (j, vj) in v.iter_mut().enumerate() {
        let xm = x.iter().map(|p| p[j]).sum::<f64>() / n;
        *vj = t.iter().zip(x).map(|(s, p)| (s - tm) * (p[j] - xm)).sum::<f64>() / var;
    }
    v
}

fn speed_model(sym: &DiracSymbol, x: [f64; 2]) -> Option<SpeedModel> {
    match &sym.kind {
        SymbolKind::DomainWall { .. } => Some(SpeedModel::Plain),
        SymbolKind::Magnetic { m, a } => {
            let (g1, g2) = (a[0].grad(x), a[1].grad(x));
            Some(SpeedModel::Magnetic { grad_m: m.grad(x), b: g2[0] - g1[1] })
        }
        _ => None,
    }
}

fn run_evolve(t: &EvolveTask, sink: &mut Sink) -> Result<Value> {
    let grid = Grid2::square(t.grid.n, t.grid.len)?;
    let sym = t.symbol.build(Some(t.grid.len))?;
    let model = PdeModel::from_symbol(sym.clone(), &grid)?;
    let spec = WavepacketSpec { x_star: t.packet.x_star, xi_star: t.packet.xi_star, envelope: t.packet.envelope.clone(), orientation: None, phase: 0.0 }
        .with_line(&sym, t.packet.sign)?;
    let psi0 = synthesize_wavepacket(&spec, t.h, &grid)?;
    let dt = match t.dt {
        Some(dt) => dt,
        None => DiracOperator::new(&model, t.h).max_dt(),
    };
    let ev = evolve(&model, &psi0, &EvolveOptions { t_end: t.t_end, dt, frames: t.frames, keep_fields: vec![] })?;
    let rows: Vec<[f64; 8]> = ev
        .snapshots
        .iter()
        .map(|s| {
            let o = &s.observables;
            [s.t, o.mass, o.linf, o.center_of_mass[0], o.center_of_mass[1], o.interface_mass_fraction, o.line_projections[0], o.line_projections[1]]
        })
        .collect();
    sink.csv("observables.csv", &["t", "mass", "linf", "x1", "x2", "interface_fraction", "l_minus", "l_plus"], &rows)?;
    let times: Vec<f64> = ev.snapshots.iter().map(|s| s.t).collect();
    let com: Vec<[f64; 2]> = ev.snapshots.iter().map(|s| s.observables.center_of_mass).collect();
    let vel = fit_velocity(&times, &com);
    let measured = vel[0].hypot(vel[1]);
    let predicted = speed_model(&sym, t.packet.x_star).map(|m| predicted_speed(&m)).transpose()?;
    let drift = com.iter().map(|p| (p[1] - com[0][1]).abs()).fold(0.0, f64::max);
    let rel = predicted.map(|p| (measured - p).abs() / p);
    sink.csv(
        "speed.csv",
        &["measured_speed", "velocity_x1", "velocity_x2", "predicted_speed", "relative_error", "max_x2_drift"],
        [[measured, vel[0], vel[1], predicted.unwrap_or(f64::NAN), rel.unwrap_or(f64::NAN), drift]],
    )?;
    let mut overlap = None;
    if t.predict {
        let z0 = PhasePoint::new(t.packet.x_star, t.packet.xi_star);
        let pred = EdgePrediction::gaussian(sym.clone(), z0, t.h).field_at(&grid, t.t_end)?;
        let cmp = compare_to_prediction(t.t_end, &ev.final_field, &pred)?;
        sink.json("comparison.json", &cmp)?;
        overlap = Some(cmp.overlap);
    }
    if t.dump {
        let p = sink.dir.join("field.bin");
        write_dump(&p, &field_dump(&ev.final_field))?;
        sink.artifacts.push(p);
    }
    let m0 = rows[0][1];
    let mass_drift = rows.iter().map(|r| (r[1] - m0).abs()).fold(0.0, f64::max);
    Ok(json!({
        "task": "evolve",
        "steps": ev.steps,
        "dt": ev.dt,
        "measured_speed": measured,
        "predicted_speed": predicted,
        "relative_error": rel,
        "mass_drift": mass_drift,
        "overlap": overlap,
    }))
}

fn run_dispersion(t: &ModelDispersionTask, sink: &mut Sink) -> Result<Value> {
    let co = ModelCoefficients::from_sources(&t.coefficients)?;
    let v = Spinor::new(c(t.v[0][0], t.v[0][1]), c(t.v[1][0], t.v[1][1]));
    if v.norm() == 0.0 {
        return Err(Error::Invalid("`v` must be nonzero".into()));
    }
    let sp = GaussianSpectrum { v, width: t.width };
    let x = t.x.points();
    let jobs: Vec<ParametrixJob> = t.n.iter().map(|&n| ParametrixJob { n, eps: t.eps, spectrum: &sp }).collect();
    let res = evaluate_parametrix_series(&co, &t.times, &x, &jobs, &QuadratureOptions::default())?;
    let direct = match &t.direct {
        Some(d) => Some(direct_solutions(&co, t, &sp, &d.grid)?),
        None => None,
    };
    let mut rows = Vec::new();
    let mut sup_range = (f64::INFINITY, 0.0f64);
    let mut worst_out = 0.0f64;
    for (it, row) in res.iter().enumerate() {
        for (jn, e) in row.iter().enumerate() {
            let dx = e.dx();
            let total = ParametrixEval::l2(&e.quadrature, dx);
            let (lo, hi) = cone_interval(&co, e.t)?;
            let band = 3.0 * t.eps.sqrt();
            let outside: f64 = e
                .x
                .iter()
                .zip(&e.quadrature)
                .filter(|(&xx, _)| xx < lo - band || xx > hi + band)
                .map(|(_, w)| w.norm_squared())
                .sum::<f64>()
                * dx;
            let frac = outside / (total * total).max(f64::MIN_POSITIVE);
            let sup = ParametrixEval::linf(&e.quadrature);
            let gap: Vec<Spinor> = e.quadrature.iter().zip(&e.stationary).map(|(a, b)| a - b).collect();
            let (dq, ds) = match &direct {
                Some(d) => {
                    let f = d[jn][it].as_slice();
                    let diff = |vals: &[Spinor]| ParametrixEval::l2(&vals.iter().zip(f).map(|(a, b)| a - b).collect::<Vec<_>>(), dx);
                    (diff(&e.quadrature), diff(&e.stationary))
                }
                None => (f64::NAN, f64::NAN),
            };
            sup_range = (sup_range.0.min(sup * e.t.sqrt()), sup_range.1.max(sup * e.t.sqrt()));
            worst_out = worst_out.max(frac);
            rows.push([e.t, e.n as f64, sup, sup * e.t.sqrt(), total, frac, ParametrixEval::l2(&gap, dx), lo, hi, dq, ds]);
        }
    }
    sink.csv(
        "dispersion.csv",
        &["t", "n", "sup", "sup_sqrt_t", "l2", "outside_fraction", "stationary_gap", "cone_lo", "cone_hi", "direct_vs_quadrature", "direct_vs_stationary"],
        &rows,
    )?;
    Ok(json!({
        "task": "model-dispersion",
        "sup_sqrt_t_min": sup_range.0,
        "sup_sqrt_t_max": sup_range.1,
        "max_outside_fraction": worst_out,
    }))
}

/// Direct block solutions interpolated onto the sample points, indexed [job][time].
fn direct_solutions(co: &ModelCoefficients, t: &ModelDispersionTask, sp: &GaussianSpectrum, g: &GridSpec) -> Result<Vec<Vec<Vec<Spinor>>>> {
    let grid = Grid1::new(g.n, g.len)?;
    let xg = grid.coords();
    let x = t.x.points();
    if x[0] < xg[0] || *x.last().unwrap() > *xg.last().unwrap() {
        return Err(Error::Invalid("sample range must lie inside the direct-solve box".into()));
    }
    let eps = t.eps;
    let f0: Vec<Vec<C64>> = (0..2).map(|k| xg.iter().map(|&xx| sp.profile(xx / eps)[k] / eps.sqrt()).collect()).collect();
    let dx = grid.dx();
    let mut out = Vec::new();
    for &n in &t.n {
        let ev = BlockEvolver::new(co, &grid, BlockOperator::Dirac { n, eps })?;
        let dt = ev.max_dt();
        let mut f = f0.clone();
        let mut now = 0.0;
        let mut per_time = Vec::new();
        for &tt in &t.times {
            f = ev.evolve(&f, tt - now, dt)?;
            now = tt;
            per_time.push(
                x.iter()
                    .map(|&xx| {
                        let u = (xx - xg[0]) / dx;
                        let j = (u.floor() as usize).min(xg.len() - 2);
                        let s = u - j as f64;
                        let lerp = |k: usize| f[k][j] * (1.0 - s) + f[k][j + 1] * s;
                        Spinor::new(lerp(0), lerp(1))
                    })
                    .collect(),
            );
        }
        out.push(per_time);
    }
    Ok(out)
}

fn run_haldane(t: &HaldaneTask, sink: &mut Sink) -> Result<Value> {
    let conv = resolve_convention()?;
    let mut model = HaldaneModel::new(t.a, t.m);
    model.convention = conv.chosen;
    let point = find_dirac_point(&model, None)?;
    let cone = extract_cone(&model, point.xi)?;
    sink.json("cone.json", &json!({ "convention": conv, "cone": cone }))?;
    if t.scan >= 2 {
        sink.csv("bands.csv", &["xi1", "xi2", "e_minus", "e_plus"], band_scan(&model, t.scan))?;
    }
    let mut strained = Vec::new();
    if let Some(src) = &t.strain {
        let strain = StrainField::parse(src)?;
        for &x in &t.samples {
            let geo = pseudo_geometry(&strain, x)?;
            let sp = edge_speed_strained(&strain, x)?;
            strained.push([x[0], x[1], sp.speed, sp.direction[0], sp.direction[1], geo.det_alpha, geo.m_tilde, geo.b_eff, geo.field_norm]);
        }
        sink.csv("strain.csv", &["x1", "x2", "speed", "dir1", "dir2", "det_alpha", "m_tilde", "b_eff", "field_norm"], &strained)?;
    }
    Ok(json!({
        "task": "haldane",
        "convention": conv.chosen,
        "dirac_point": point.xi,
        "omega_residual": point.omega_residual,
        "beta": cone.beta,
        "mass": cone.mass,
        "cone_coefficient": cone.cone_coefficient(),
        "anisotropy": cone.anisotropy(),
        "max_strained_speed": strained.iter().map(|r| r[2]).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("dirac-edge-scenario-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_scenario("{\"name\": \"x\",\n \"task\": }").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_fields_and_tasks_are_rejected() {
        let e = parse_scenario(r#"{"name":"a","task":"reduce","random":3,"bogus":1}"#).unwrap_err();
        assert!(matches!(e, Error::Invalid(_)), "{e}");
        let e = parse_scenario(r#"{"name":"a","task":"sing"}"#).unwrap_err();
        assert!(matches!(e, Error::Invalid(_)), "{e}");
        let e = parse_scenario(r#"{"name":"a","random":3}"#).unwrap_err();
        assert!(e.to_string().contains("task"), "{e}");
    }

    #[test]
    fn non_positive_parameters_are_rejected() {
        let src = r#"{"name":"e","task":"evolve","symbol":{"kind":"periodic-wall","ell":1},"h":-0.1,"grid":{"n":64,"len":8},"t_end":0.1}"#;
        let e = parse_scenario(src).unwrap_err();
        assert!(matches!(e, Error::Invalid(_)) && e.to_string().contains("`h`"), "{e}");
    }

    #[test]
    fn step_size_violation_is_numerical() {
        let src = r#"{"name":"e","task":"evolve","symbol":{"kind":"periodic-wall","ell":1},"h":0.1,"grid":{"n":256,"len":6.4},"t_end":0.1,"dt":1.0}"#;
        let scn = parse_scenario(src).unwrap();
        let dir = tmp("cfl");
        let e = run_scenario(&scn, &dir).unwrap_err();
        assert!(e.is_numerical());
        assert!(matches!(e, Error::StepSize { .. }), "{e}");
    }

    #[test]
    fn seeded_reduce_is_reproducible() {
        let src = r#"{"name":"r","seed":11,"task":"reduce","random":20}"#;
        let scn = parse_scenario(src).unwrap();
        let (d1, d2) = (tmp("r1"), tmp("r2"));
        run_scenario(&scn, &d1).unwrap();
        run_scenario(&scn, &d2).unwrap();
        let a = std::fs::read(d1.join("reduce.csv")).unwrap();
        let b = std::fs::read(d2.join("reduce.csv")).unwrap();
        assert_eq!(a, b);
        let (_, rows) = crate::io::read_csv(d1.join("reduce.csv")).unwrap();
        assert!(rows.iter().all(|r| r[4] < 1e-9 && r[5] < 1e-9));
    }

    #[test]
    fn edge_trace_on_flat_wall_moves_at_unit_speed() {
        let src = r#"{"name":"t","task":"edge-trace","symbol":{"kind":"domain-wall","m":"x2"},"z0":[0,0,0,0],"t_end":1.0,"dt":0.01}"#;
        let scn = parse_scenario(src).unwrap();
        let rep = run_scenario(&scn, &tmp("trace")).unwrap();
        let z: Vec<f64> = serde_json::from_value(rep.summary["final_z"].clone()).unwrap();
        assert!((z[0] + 1.0).abs() < 1e-9 && z[1].abs() < 1e-9, "{z:?}");
    }

    #[test]
    fn haldane_reports_constants() {
        let src = r#"{"name":"h","task":"haldane","scan":8,"strain":{"alpha":[["1","0"],["0","1"]],"m":"x2"},"samples":[[0,0],[1,0.5]]}"#;
        let scn = parse_scenario(src).unwrap();
        let rep = run_scenario(&scn, &tmp("haldane")).unwrap();
        let beta = rep.summary["beta"].as_f64().unwrap();
        assert!((beta - 1.5 * 3f64.sqrt()).abs() < 1e-9);
        assert!(rep.summary["max_strained_speed"].as_f64().unwrap() <= 1.0);
    }

    #[test]
    fn velocity_fit_recovers_a_line() {
        let t = [0.0, 0.1, 0.2, 0.3];
        let x: Vec<[f64; 2]> = t.iter().map(|&s| [1.0 - 2.0 * s, 0.5 * s]).collect();
        let v = fit_velocity(&t, &x);
        assert!((v[0] + 2.0).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
    }
}
