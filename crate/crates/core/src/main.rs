//! Command-line front end: `analyze`, `simulate`, `linearize`.
//!
//! Exit codes: 0 = ran (verdicts are data, not errors), 2 = usage or
//! configuration error, 3 = model parse error, 4 = I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dde_ident::config::{parse_complex, parse_config, AnalysisConfig};
use dde_ident::equilibrium::find_equilibria;
use dde_ident::model::ModelSpec;
use dde_ident::parse::parse_model;
use dde_ident::pipeline::{analyze, linearize_only, run_scaling};
use dde_ident::signal::{make_square_pulse, InputSignal};
use dde_ident::sim::{simulate_nonlinear, trajectory_to_csv};

const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dde-ident",
    version,
    about = "Structural identifiability testing for delayed differential models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model file to load.
    model: PathBuf,
    /// Configuration file (section syntax, see docs/model-format.md).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full identifiability pipeline and emit a JSON report.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Extra complex z samples, e.g. --z 2 --z 1+1i.
        #[arg(long = "z", value_name = "VALUE")]
        z: Vec<String>,
        /// Number of additional random z samples.
        #[arg(long)]
        samples: Option<usize>,
        /// Seed for the random z samples.
        #[arg(long)]
        seed: Option<u64>,
        /// Relative singular-value threshold for rank decisions.
        #[arg(long = "rank-tol")]
        rank_tol: Option<f64>,
        /// Write the report to this path instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Integrate the model and write a CSV trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Input shape.
        #[arg(long, value_parser = ["square", "constant"], default_value = "constant")]
        input: String,
        /// Horizon.
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// Step size.
        #[arg(long)]
        h: Option<f64>,
        /// Run the eps-scaling experiment and write its JSON report.
        #[arg(long = "eps-scaling")]
        eps_scaling: bool,
        /// Output CSV path (default: <model stem>.csv next to the model).
        #[arg(long)]
        output: Option<PathBuf>,
        /// JSON report path for --eps-scaling (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Find equilibria and print the linearized delay matrices.
    Linearize {
        #[command(flatten)]
        common: Common,
        /// Write the JSON dump to this path instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn read_file(path: &Path) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_IO
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), u8> {
    std::fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_IO
    })
}

fn load_model(path: &Path) -> Result<(ModelSpec, String), u8> {
    let source = read_file(path)?;
    match parse_model(&source) {
        Ok(spec) => Ok((spec, source)),
        Err(diags) => {
            eprintln!("error: {} does not parse:", path.display());
            for d in diags {
                eprintln!("  [{}..{}] {}", d.span.begin, d.span.end, d.message);
            }
            Err(EXIT_PARSE)
        }
    }
}

fn load_config(common: &Common) -> Result<AnalysisConfig, u8> {
    match &common.config {
        None => Ok(AnalysisConfig::default()),
        Some(path) => {
            let source = read_file(path)?;
            parse_config(&source).map_err(|e| {
                eprintln!("error: bad config {}: {e}", path.display());
                EXIT_USAGE
            })
        }
    }
}

fn emit(report: Option<&Path>, contents: &str) -> Result<(), u8> {
    match report {
        Some(path) => write_file(path, contents),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

fn run() -> Result<(), u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze {
            common,
            z,
            samples,
            seed,
            rank_tol,
            report,
        } => {
            let (spec, source) = load_model(&common.model)?;
            let mut cfg = load_config(&common)?;
            if !z.is_empty() {
                let mut zs = Vec::new();
                for s in &z {
                    zs.push(parse_complex(s).map_err(|e| {
                        eprintln!("error: bad --z value: {e}");
                        EXIT_USAGE
                    })?);
                }
                cfg.rank.z_user = zs;
            }
            if let Some(v) = samples {
                cfg.rank.samples = v;
            }
            if let Some(v) = seed {
                cfg.rank.seed = v;
            }
            if let Some(v) = rank_tol {
                if v <= 0.0 {
                    eprintln!("error: --rank-tol must be positive");
                    return Err(EXIT_USAGE);
                }
                cfg.rank.rel_tol = v;
            }
            let out = analyze(&spec, &source, &cfg);
            eprintln!("verdict: {}", out.verdict);
            emit(report.as_deref(), &out.to_json())
        }
        Command::Simulate {
            common,
            input,
            t_end,
            h,
            eps_scaling,
            output,
            report,
        } => {
            let (spec, _source) = load_model(&common.model)?;
            let mut cfg = load_config(&common)?;
            if let Some(v) = t_end {
                cfg.sim.t_end = v;
            }
            if let Some(v) = h {
                cfg.sim.h = v;
            }
            if cfg.sim.t_end <= 0.0 || cfg.sim.h <= 0.0 {
                eprintln!("error: T and h must be positive");
                return Err(EXIT_USAGE);
            }
            let point = cfg.resolve_point(&spec);
            let violations = dde_ident::model::validate(&spec, &point);
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("error: {}: {}", v.code, v.message);
                }
                return Err(EXIT_USAGE);
            }
            let res = find_equilibria(&spec, &point, &cfg.solver);
            let x_e = res
                .equilibria
                .first()
                .map(|e| e.x_e.clone())
                .unwrap_or_else(|| {
                    eprintln!("note: no equilibrium found; starting from the zero history");
                    vec![0.0; spec.n()]
                });

            if eps_scaling {
                let eq = res.equilibria.first().cloned().ok_or_else(|| {
                    eprintln!("error: eps-scaling needs an equilibrium");
                    EXIT_USAGE
                })?;
                let model = dde_ident::linearize::linearize(&spec, &point, &eq).map_err(|e| {
                    eprintln!("error: linearization failed: {e}");
                    EXIT_USAGE
                })?;
                let scaling = run_scaling(&spec, &point, &model, &cfg.sim).map_err(|e| {
                    eprintln!("error: scaling experiment failed: {e}");
                    EXIT_USAGE
                })?;
                let json = serde_json::to_string_pretty(&scaling).expect("report serializes");
                return emit(report.as_deref(), &json);
            }

            let u = match input.as_str() {
                "square" => {
                    make_square_pulse(spec.k(), cfg.sim.t_end, cfg.sim.amplitude)
                        .offset(&point.u_bar, true)
                }
                _ => InputSignal::constant(point.u_bar.clone()),
            };
            let phi = move |_t: f64| x_e.clone();
            let traj = simulate_nonlinear(&spec, &point, &phi, &u, cfg.sim.t_end, cfg.sim.h)
                .map_err(|e| {
                    eprintln!("error: simulation failed: {e}");
                    EXIT_USAGE
                })?;
            if let Some(d) = &traj.truncated {
                eprintln!("note: trajectory truncated: {d}");
            }
            let csv = trajectory_to_csv(&traj, &spec.state_names, &spec.input_names);
            let out_path = output.unwrap_or_else(|| common.model.with_extension("csv"));
            write_file(&out_path, &csv)?;
            eprintln!("wrote {}", out_path.display());
            Ok(())
        }
        Command::Linearize { common, report } => {
            let (spec, source) = load_model(&common.model)?;
            let cfg = load_config(&common)?;
            let out = linearize_only(&spec, &source, &cfg);
            eprintln!("{}", out.outcome);
            let json = serde_json::to_string_pretty(&out).expect("dump serializes");
            emit(report.as_deref(), &json)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
