use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use exact_qcqp::certify::{certify_set, CertifyOptions, DEFAULT_TOL};
use exact_qcqp::exact::{extract_rank_one, run_pipeline, solve_relaxation, Exactness, PipelineConfig};
use exact_qcqp::gallery::{build_case, list_ids, run_acceptance};
use exact_qcqp::io::{write_atomic, ProblemDocument};
use exact_qcqp::model::GeoCop;
use exact_qcqp::oracle::{solve_sphere, Box2, DEFAULT_SAMPLES};
use exact_qcqp::plot::emit_plot;
use exact_qcqp::reduce::{facial_reduce, remove_redundant};
use exact_qcqp::sdp::{SdpStatus, SolverOptions};
use exact_qcqp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "exact-qcqp",
    version,
    about = "Certify and solve exact SDP relaxations of quadratically constrained problems"
)]
struct Cli {
    /// Feasibility and certification tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomized steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the result document to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Problem document (JSON).
    #[arg(long, conflicts_with = "case")]
    input: Option<PathBuf>,
    /// Built-in gallery case id.
    #[arg(long)]
    case: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the pairwise and structural exactness conditions.
    Certify(Source),
    /// Facial reduction followed by redundancy pruning.
    Reduce(Source),
    /// Solve the SDP relaxation and extract a rank-one point.
    Solve(Source),
    /// Brute-force reference value by sphere sampling (n ≤ 6).
    Oracle {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
    },
    /// Full pipeline: reduce, prune, certify, solve, extract.
    Pipeline(Source),
    /// Replay gallery cases against their expectations.
    Gallery {
        /// Case ids; all cases when empty.
        ids: Vec<String>,
        /// Print the available ids.
        #[arg(long)]
        list: bool,
        /// Print one case as a problem document with its expectations.
        #[arg(long, conflicts_with = "list")]
        show: Option<String>,
        /// Wall-clock budget in seconds.
        #[arg(long, default_value_t = 600)]
        budget: u64,
    },
    /// Raster (PPM) and vector (SVG) plot of the feasible slice z = 1.
    Plot {
        #[command(flatten)]
        src: Source,
        /// Pixels per side.
        #[arg(long, default_value_t = 800)]
        resolution: usize,
        /// Plot box as lo1,lo2,hi1,hi2.
        #[arg(long, value_delimiter = ',', num_args = 4, allow_hyphen_values = true)]
        r#box: Option<Vec<f64>>,
    },
}

struct Loaded {
    problem: GeoCop,
    doc_tol: Option<f64>,
    doc_seed: Option<u64>,
}

fn load(src: &Source) -> Result<Loaded> {
    match (&src.input, &src.case) {
        (Some(path), None) => {
            let bytes = std::fs::read(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read {}: {e}", path.display()))
            })?;
            let doc = ProblemDocument::parse(&bytes)?;
            Ok(Loaded {
                problem: doc.to_geocop()?,
                doc_tol: doc.options.tol,
                doc_seed: doc.options.seed,
            })
        }
        (None, Some(id)) => Ok(Loaded {
            problem: build_case(id)?.problem,
            doc_tol: None,
            doc_seed: None,
        }),
        _ => Err(Error::InvalidArgument(
            "give exactly one of --input or --case".into(),
        )),
    }
}

struct Settings {
    tol: f64,
    seed: u64,
}

fn settings(cli: &Cli, l: Option<&Loaded>) -> Result<Settings> {
    let tol = cli
        .tol
        .or(l.and_then(|l| l.doc_tol))
        .unwrap_or(DEFAULT_TOL);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument("--tol must be positive".into()));
    }
    Ok(Settings {
        tol,
        seed: cli.seed.or(l.and_then(|l| l.doc_seed)).unwrap_or(0),
    })
}

fn pipeline_config(s: &Settings) -> PipelineConfig {
    let mut c = PipelineConfig::with_tol(s.tol);
    c.seed = s.seed;
    c
}

/// Result document and exit code.
fn run(cli: &Cli) -> Result<(Value, u8)> {
    match &cli.command {
        Command::Certify(src) => {
            let l = load(src)?;
            let s = settings(cli, Some(&l))?;
            let opts = CertifyOptions {
                tol: s.tol,
                ..Default::default()
            };
            let r = certify_set(&l.problem.bset, &opts)?;
            let code = r.overall.exit_code() as u8;
            Ok((json!({"command": "certify", "tol": s.tol, "report": serde_json::to_value(&r)?}), code))
        }
        Command::Reduce(src) => {
            let l = load(src)?;
            let s = settings(cli, Some(&l))?;
            let red = facial_reduce(&l.problem, s.tol)?;
            let pruned = remove_redundant(&red.reduced.bset, s.tol)?;
            Ok((
                json!({"command": "reduce", "tol": s.tol, "reduction": serde_json::to_value(&red)?, "pruning": serde_json::to_value(&pruned)?}),
                0,
            ))
        }
        Command::Solve(src) => {
            let l = load(src)?;
            let s = settings(cli, Some(&l))?;
            let cfg = pipeline_config(&s);
            let sol = solve_relaxation(&l.problem, &SolverOptions::with_tol((0.1 * s.tol).max(1e-11)))?;
            let rank_one = if sol.status == SdpStatus::Optimal {
                Some(extract_rank_one(&sol.x, &l.problem, &cfg)?)
            } else {
                None
            };
            Ok((
                json!({"command": "solve", "tol": s.tol, "solution": serde_json::to_value(&sol)?, "rank_one": serde_json::to_value(&rank_one)?}),
                0,
            ))
        }
        Command::Oracle { src, samples } => {
            let l = load(src)?;
            let s = settings(cli, Some(&l))?;
            let r = solve_sphere(&l.problem, *samples, s.seed)?;
            Ok((
                json!({"command": "oracle", "seed": s.seed, "result": serde_json::to_value(&r)?}),
                0,
            ))
        }
        Command::Pipeline(src) => {
            let l = load(src)?;
            let s = settings(cli, Some(&l))?;
            let v = run_pipeline(&l.problem, &pipeline_config(&s))?;
            let code = if v.exactness == Exactness::CertifiedExact {
                0
            } else {
                v.cert.as_ref().map_or(3, |c| c.overall.exit_code() as u8)
            };
            Ok((
                json!({"command": "pipeline", "tol": s.tol, "seed": s.seed, "verdict": serde_json::to_value(&v)?}),
                code,
            ))
        }
        Command::Gallery {
            ids,
            list,
            show,
            budget,
        } => {
            if *list {
                return Ok((json!({"command": "gallery", "ids": list_ids()}), 0));
            }
            if let Some(id) = show {
                let c = build_case(id)?;
                let doc: Value =
                    serde_json::from_str(&ProblemDocument::from_geocop(&c.problem).to_canonical_json())?;
                return Ok((
                    json!({"command": "gallery", "id": c.id, "description": c.description,
                           "problem": doc, "expected": serde_json::to_value(&c.expected)?}),
                    0,
                ));
            }
            let names: Vec<&str> = if ids.is_empty() {
                list_ids().to_vec()
            } else {
                ids.iter().map(String::as_str).collect()
            };
            let r = run_acceptance(&names, Duration::from_secs(*budget));
            let code = if r.all_passed() { 0 } else { 2 };
            Ok((json!({"command": "gallery", "report": serde_json::to_value(&r)?}), code))
        }
        Command::Plot {
            src,
            resolution,
            r#box,
        } => {
            let l = load(src)?;
            let stem = cli
                .out
                .clone()
                .ok_or_else(|| Error::InvalidArgument("plot needs --out <stem>".into()))?;
            let bx = match r#box {
                Some(b) => Box2 {
                    lo: [b[0], b[1]],
                    hi: [b[2], b[3]],
                },
                None => Box2::square(2.5),
            };
            let r = emit_plot(&l.problem.bset, bx, *resolution, &stem)?;
            Ok((json!({"command": "plot", "box": serde_json::to_value(&bx)?, "output": serde_json::to_value(&r)?}), 0))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(doc, code)| {
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        // Plot writes its own files under the --out stem.
        if let (Some(path), false) = (&cli.out, matches!(cli.command, Command::Plot { .. })) {
            write_atomic(path, text.as_bytes())?;
        }
        print!("{text}");
        Ok(code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let mut err = json!({"error": e.to_string()});
            if let Error::Schema { path, .. } = &e {
                err["path"] = json!(path);
            }
            eprintln!("{err}");
            ExitCode::from(1)
        }
    }
}
