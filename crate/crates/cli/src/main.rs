//! `dirac-edge`: runs scenario files and writes CSV/JSON artifacts plus a run manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dirac_edge::scenario::{parse_scenario, run_scenario, Scenario};
use dirac_edge::Error;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

const BUNDLED: [(&str, &str); 8] = [
    ("domain-wall-speed", include_str!("../scenarios/domain-wall-speed.json")),
    ("magnetic-speed", include_str!("../scenarios/magnetic-speed.json")),
    ("normal-form-suite", include_str!("../scenarios/normal-form-suite.json")),
    ("curved-wall-trace", include_str!("../scenarios/curved-wall-trace.json")),
    ("wall-analysis", include_str!("../scenarios/wall-analysis.json")),
    ("tanh-envelope", include_str!("../scenarios/tanh-envelope.json")),
    ("model-dispersion", include_str!("../scenarios/model-dispersion.json")),
    ("haldane-cone", include_str!("../scenarios/haldane-cone.json")),
];

const EXIT_IO: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dirac-edge", version, about = "Edge transport and normal forms for 2x2 Dirac operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output root; each scenario writes into its own subdirectory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "DIRAC_EDGE_THREADS")]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or `bundled:<name>`; repeat to run several in a worker pool.
    #[arg(long, required = true)]
    scenario: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios of any task.
    Run(RunArgs),
    /// Pointwise invariants of a symbol.
    Analyze(RunArgs),
    /// Symplectic and SU(2) normal form of linear symbols.
    Reduce(RunArgs),
    /// Edge trajectory and model coefficients.
    EdgeTrace(RunArgs),
    /// Traveling envelope of the one-dimensional model.
    Envelope(RunArgs),
    /// Two-dimensional evolution of a wavepacket.
    Evolve(RunArgs),
    /// Parametrix dispersion of a model block.
    ModelDispersion(RunArgs),
    /// Haldane-model Dirac point, cone and strained speed.
    Haldane(RunArgs),
    /// List bundled scenarios, or write them to a directory.
    Scenarios {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

impl Command {
    fn run_args(&self) -> Option<(&RunArgs, Option<&'static str>)> {
        Some(match self {
            Command::Run(a) => (a, None),
            Command::Analyze(a) => (a, Some("analyze")),
            Command::Reduce(a) => (a, Some("reduce")),
            Command::EdgeTrace(a) => (a, Some("edge-trace")),
            Command::Envelope(a) => (a, Some("envelope")),
            Command::Evolve(a) => (a, Some("evolve")),
            Command::ModelDispersion(a) => (a, Some("model-dispersion")),
            Command::Haldane(a) => (a, Some("haldane")),
            Command::Scenarios { .. } => return None,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_SCHEMA,
    }
}

fn kind_name(code: u8) -> &'static str {
    match code {
        EXIT_SCHEMA => "schema",
        EXIT_NUMERICAL => "numerical",
        _ => "io",
    }
}

fn read_source(spec: &str) -> Result<(String, String), Error> {
    if let Some(name) = spec.strip_prefix("bundled:") {
        return BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, s)| (n.to_string(), s.to_string()))
            .ok_or_else(|| Error::Invalid(format!("no bundled scenario named {name:?}")));
    }
    let path = Path::new(spec);
    let src = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{spec}: {e}")))?;
    let stem = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
    Ok((stem, src))
}

fn fail(dir: &Path, label: &str, e: &Error, verbose: bool) -> u8 {
    let code = exit_code(e);
    let diag = json!({ "scenario": label, "kind": kind_name(code), "exit_code": code, "error": e.to_string() });
    eprintln!("{diag}");
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = dirac_edge::io::write_json(dir.join("error.json"), &diag);
    } else if verbose {
        eprintln!("could not create {}", dir.display());
    }
    code
}

fn run_one(spec: &str, expect: Option<&str>, out: &Path, threads: usize, verbose: bool) -> u8 {
    let (label, src) = match read_source(spec) {
        Ok(v) => v,
        Err(e) => return fail(&out.join("invalid"), spec, &e, verbose),
    };
    let scn: Scenario = match parse_scenario(&src) {
        Ok(s) => s,
        Err(e) => return fail(&out.join(&label), spec, &e, verbose),
    };
    let dir = scn.output_dir(out);
    if let Some(task) = expect {
        if scn.task.name() != task {
            let e = Error::Invalid(format!("scenario {} has task {}, expected {task}", scn.name, scn.task.name()));
            return fail(&dir, spec, &e, verbose);
        }
    }
    if verbose {
        eprintln!("running {} ({}) into {}", scn.name, scn.task.name(), dir.display());
    }
    let start = Instant::now();
    let report = match run_scenario(&scn, &dir) {
        Ok(r) => r,
        Err(e) => return fail(&dir, spec, &e, verbose),
    };
    let wall = start.elapsed().as_secs_f64();
    let digest = Sha256::digest(src.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "scenario": scn.name,
        "source": spec,
        "task": scn.task.name(),
        "seed": scn.seed,
        "tool": "dirac-edge",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "scenario_sha256": hash,
        "wall_time_s": wall,
        "threads": threads,
        "artifacts": report.artifacts.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "summary": report.summary,
    });
    if let Err(e) = dirac_edge::io::write_json(dir.join("manifest.json"), &manifest) {
        return fail(&dir, spec, &e, verbose);
    }
    if verbose {
        eprintln!("{} finished in {wall:.2} s", scn.name);
    }
    println!("{}", serde_json::to_string(&json!({ "scenario": scn.name, "status": "ok", "dir": dir, "summary": report.summary })).unwrap());
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Scenarios { write } = &cli.command {
        for (name, src) in BUNDLED {
            if let Some(dir) = write {
                let p = dir.join(format!("{name}.json"));
                if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&p, src)) {
                    eprintln!("{}: {e}", p.display());
                    return ExitCode::from(EXIT_IO);
                }
            }
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let (args, expect) = cli.command.run_args().expect("run command");
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(EXIT_SCHEMA);
        }
        builder = builder.num_threads(n);
    }
    if let Err(e) = builder.build_global() {
        eprintln!("thread pool: {e}");
        return ExitCode::from(EXIT_IO);
    }
    let threads = rayon::current_num_threads();
    let codes: Vec<u8> = args.scenario.par_iter().map(|s| run_one(s, expect, &cli.out, threads, cli.verbose)).collect();
    ExitCode::from(codes.into_iter().max().unwrap_or(0))
}
