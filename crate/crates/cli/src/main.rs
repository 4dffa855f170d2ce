//! `aerecovery` command-line driver.
//!
//! Exit codes: 0 success, 1 negative verdict, 2 usage or input error,
//! 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aerecovery::ensemble::{apply_measurement_map, generate, EnsembleSpec, MeasurementEnsemble};
use aerecovery::harness::{
    rate_curve, report_curve, report_table, rows_to_csv, run_sweep, summary_from_json, summary_to_json,
    SweepConfig,
};
use aerecovery::identifiability::{admissibility_probe, numerical_variety_dim, Verdict};
use aerecovery::io::{vector_from_json, write_atomic, MatrixDocument, MatrixJson, SCHEMA_VERSION};
use aerecovery::linalg::gaussian_matrix;
use aerecovery::recovery::{
    counterexample_search, distinct_solution_search, solve, SolveConfig, SolveOutcome, SolveStatus,
};
use aerecovery::{variety_dim, DenseMatrix, Error, FieldTag, MeasurementVector, SeedStream, VarietySpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "aerecovery", version, about = "Matrix recovery from linear trace measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (a directory for `sweep` and `report`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct SolverArgs {
    /// SolveConfig JSON; missing fields take their defaults.
    #[arg(long)]
    solver: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Formula and numerical dimension of a variety.
    Dim {
        #[arg(long)]
        variety: String,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Probe whether Q ↦ Tr(P^T Q) vanishes identically on a variety.
    Admissible {
        #[arg(long)]
        variety: String,
        /// Matrix JSON for P; a Gaussian P is drawn from `--seed` if absent.
        #[arg(long)]
        functional: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a measurement ensemble, e.g. `gauss:N20:4x4:C:seed7`.
    Generate {
        #[arg(long)]
        ensemble: String,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a point of a variety to measurements.
    Recover {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        variety: String,
        /// Measurement vector JSON.
        #[arg(long, conflicts_with = "plant")]
        measurements: Option<PathBuf>,
        /// Matrix JSON whose measurements are fitted.
        #[arg(long)]
        plant: Option<PathBuf>,
        /// Search for a preimage distinct from the plant; exit 1 if found.
        #[arg(long, requires = "plant")]
        distinct: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Search for a kernel element on the difference set; exit 1 if found.
    Counterexample {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        variety: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Plot data and a text table from a sweep summary.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::InvalidVariety(_)
            | Error::InvalidEnsemble(_)
            | Error::InvalidConfig(_)
            | Error::InvalidEntries(_)
            | Error::ShapeMismatch { .. }
            | Error::FieldMismatch { .. }
            | Error::NotHermitian { .. }
            | Error::OffVariety { .. }
            | Error::ZeroFunctional
            | Error::Unsupported(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Prints `text`, or writes it to `--out` when given.
fn emit(common: &Common, text: String) -> Result<(), Failure> {
    match &common.out {
        Some(path) => write_output(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn parse_variety(text: &str) -> Result<VarietySpec, Failure> {
    text.parse().map_err(Failure::from)
}

fn solver_config(args: &SolverArgs) -> Result<SolveConfig, Failure> {
    let mut cfg = match &args.solver {
        Some(path) => serde_json::from_str(&read_input(path)?).map_err(|e| Failure::Usage(format!("solver config: {e}")))?,
        None => SolveConfig::default(),
    };
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct DimReport {
    schema: u32,
    variety: String,
    counting_field: FieldTag,
    formula: usize,
    numerical: usize,
    numerical_real: usize,
    agree: bool,
}

fn cmd_dim(variety: &str, trials: usize, common: &Common) -> CmdResult {
    let spec = parse_variety(variety)?;
    let formula = variety_dim(&spec)?;
    let width = spec.counting_field().real_width();
    let real = numerical_variety_dim(&spec, trials, SeedStream::new(common.seed))?;
    let agree = real == formula * width;
    let rep = DimReport {
        schema: SCHEMA_VERSION,
        variety: spec.to_string(),
        counting_field: spec.counting_field(),
        formula,
        numerical: real / width,
        numerical_real: real,
        agree,
    };
    let text = match common.format {
        Format::Json => json_line(&rep),
        Format::Csv => format!(
            "variety,counting_field,formula,numerical,agree\n{},{},{},{},{}\n",
            spec,
            spec.counting_field().name(),
            formula,
            rep.numerical,
            agree
        ),
        Format::Text => format!(
            "formula {} ({}), numerical {}, {}\n",
            formula,
            spec.counting_field().name(),
            rep.numerical,
            if agree { "agree" } else { "disagree" }
        ),
    };
    emit(common, text)?;
    Ok(if agree { 0 } else { 1 })
}

fn cmd_admissible(variety: &str, functional: Option<&Path>, probes: usize, common: &Common) -> CmdResult {
    let spec = parse_variety(variety)?;
    let p = match functional {
        Some(path) => MatrixDocument::from_json(&read_input(path)?)?,
        None => {
            let (rows, cols) = spec.shape();
            let mut rng = SeedStream::new(common.seed).child(0).rng();
            DenseMatrix::from_nalgebra(spec.field, gaussian_matrix(&mut rng, rows, cols, spec.field))
        }
    };
    let verdict = admissibility_probe(&spec, &p, probes, SeedStream::new(common.seed).child(1))?;
    let text = match common.format {
        Format::Json => json_line(&serde_json::json!({ "schema": SCHEMA_VERSION, "result": verdict })),
        Format::Csv => format!(
            "variety,probes,verdict,max_abs_value\n{},{},{:?},{}\n",
            spec, verdict.probes_tried, verdict.verdict, verdict.max_abs_value
        ),
        Format::Text => format!(
            "{:?} after {} probes (max relative value {:.3e})\n",
            verdict.verdict, verdict.probes_tried, verdict.max_abs_value
        ),
    };
    emit(common, text)?;
    Ok(if verdict.verdict == Verdict::Admissible { 0 } else { 1 })
}

fn cmd_generate(ensemble: &str, common: &Common) -> CmdResult {
    let mut spec: EnsembleSpec = ensemble.parse()?;
    if common.seed != 0 {
        spec = spec.with_seed(common.seed);
    }
    if common.format == Format::Csv {
        return Err(Failure::Usage("generate writes JSON; csv is not supported".into()));
    }
    let e = generate(&spec)?;
    let text = match common.format {
        Format::Text if common.out.is_none() => format!("{} ({} matrices)\n", e.spec, e.len()),
        _ => {
            let mut s = e.to_json();
            s.push('\n');
            s
        }
    };
    emit(common, text)?;
    Ok(0)
}

/// Measurement vector input for `recover`: `[re, im]` pairs.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementDocument {
    schema: u32,
    field: FieldTag,
    values: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct OutcomeReport {
    schema: u32,
    status: SolveStatus,
    residual: f64,
    iterations: usize,
    restart_index: usize,
    restarts_run: usize,
    excluded: usize,
    solution: Option<MatrixJson>,
}

fn outcome_text(out: &SolveOutcome, format: Format, what: &str) -> String {
    let report = OutcomeReport {
        schema: SCHEMA_VERSION,
        status: out.status,
        residual: out.residual,
        iterations: out.iterations,
        restart_index: out.restart_index,
        restarts_run: out.restarts_run,
        excluded: out.excluded,
        solution: out.solution.as_ref().map(MatrixJson::from),
    };
    match format {
        Format::Json => json_line(&report),
        Format::Csv => format!(
            "status,residual,iterations,restart_index,restarts_run,excluded\n{:?},{},{},{},{},{}\n",
            out.status, out.residual, out.iterations, out.restart_index, out.restarts_run, out.excluded
        ),
        Format::Text => match out.status {
            SolveStatus::Converged => format!(
                "{what} found at restart {} (residual {:.3e}, {} iterations)\n",
                out.restart_index, out.residual, out.iterations
            ),
            _ => format!("no {what} found in {} restarts (best residual {:.3e})\n", out.restarts_run, out.residual),
        },
    }
}

fn load_ensemble(path: &Path) -> Result<MeasurementEnsemble, Failure> {
    Ok(MeasurementEnsemble::from_json(&read_input(path)?)?)
}

fn cmd_recover(
    ensemble: &Path,
    variety: &str,
    measurements: Option<&Path>,
    plant: Option<&Path>,
    distinct: bool,
    solver: &SolverArgs,
    common: &Common,
) -> CmdResult {
    let spec = parse_variety(variety)?;
    let e = load_ensemble(ensemble)?;
    let cfg = solver_config(solver)?;
    let seed = SeedStream::new(common.seed);
    let plant = plant.map(|p| read_input(p).and_then(|t| Ok(MatrixDocument::from_json(&t)?))).transpose()?;
    if distinct {
        let p = plant.expect("clap enforces --plant");
        let out = distinct_solution_search(&e, &p, &spec, &cfg, seed)?;
        emit(common, outcome_text(&out, common.format, "distinct preimage"))?;
        return Ok(if out.status == SolveStatus::Converged { 1 } else { 0 });
    }
    let b = match (measurements, plant) {
        (Some(path), _) => {
            let doc: MeasurementDocument = serde_json::from_str(&read_input(path)?)
                .map_err(|err| Failure::Usage(format!("measurements: {err}")))?;
            if doc.schema != SCHEMA_VERSION {
                return Err(Failure::Usage(format!("measurements: unsupported schema {}", doc.schema)));
            }
            MeasurementVector { values: vector_from_json(&doc.values), field: doc.field }
        }
        (None, Some(p)) => apply_measurement_map(&e, &p)?,
        (None, None) => return Err(Failure::Usage("recover needs --measurements or --plant".into())),
    };
    let out = solve(&e, &b, &spec, &cfg, seed)?;
    emit(common, outcome_text(&out, common.format, "solution"))?;
    Ok(if out.status == SolveStatus::Converged { 0 } else { 1 })
}

fn cmd_counterexample(ensemble: &Path, variety: &str, solver: &SolverArgs, common: &Common) -> CmdResult {
    let spec = parse_variety(variety)?;
    let e = load_ensemble(ensemble)?;
    let cfg = solver_config(solver)?;
    let out = counterexample_search(&e, &spec, &cfg, SeedStream::new(common.seed))?;
    emit(common, outcome_text(&out, common.format, "kernel element"))?;
    Ok(if out.status == SolveStatus::Converged { 1 } else { 0 })
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_sweep(config: &Path, workers: Option<usize>, seed: Option<u64>, out: &Path, format: Format) -> CmdResult {
    let mut cfg = SweepConfig::from_json(&read_input(config)?)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;
    let result = run_sweep(&cfg)?;
    ensure_dir(out)?;
    write_output(&out.join("sweep.csv"), &rows_to_csv(&result.rows))?;
    let json = summary_to_json(&result.summary);
    write_output(&out.join("sweep.json"), &json)?;
    for &test in &result.summary.tests {
        write_output(&out.join(format!("{test}.dat")), &rate_curve(&result.summary, test))?;
    }
    match format {
        Format::Json => print!("{json}"),
        Format::Csv => print!("{}", rows_to_csv(&result.rows)),
        Format::Text => {
            for w in &result.summary.warnings {
                eprintln!("warning: {w}");
            }
            for (test, t) in &result.summary.transitions {
                let t = t.map_or("none".to_string(), |n| n.to_string());
                println!("{test} transition {t}");
            }
        }
    }
    Ok(0)
}

fn cmd_report(input: &Path, out: Option<&Path>, format: Format) -> CmdResult {
    let summary = summary_from_json(&read_input(input)?).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        for &test in &summary.tests {
            write_output(&dir.join(format!("report_{test}.dat")), &report_curve(&summary, test))?;
        }
    }
    match format {
        Format::Text => print!("{}", report_table(&summary)),
        Format::Json => print!("{}", summary_to_json(&summary)),
        Format::Csv => {
            println!("N,test,rate,threshold");
            for &test in &summary.tests {
                for line in report_curve(&summary, test).lines().skip(1) {
                    let cols: Vec<&str> = line.split(' ').collect();
                    println!("{},{test},{},{}", cols[0], cols[1], cols[2]);
                }
            }
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Dim { variety, trials, common } => cmd_dim(&variety, trials, &common),
        Command::Admissible { variety, functional, probes, common } => {
            cmd_admissible(&variety, functional.as_deref(), probes, &common)
        }
        Command::Generate { ensemble, common } => cmd_generate(&ensemble, &common),
        Command::Recover { ensemble, variety, measurements, plant, distinct, solver, common } => cmd_recover(
            &ensemble,
            &variety,
            measurements.as_deref(),
            plant.as_deref(),
            distinct,
            &solver,
            &common,
        ),
        Command::Counterexample { ensemble, variety, solver, common } => {
            cmd_counterexample(&ensemble, &variety, &solver, &common)
        }
        Command::Sweep { config, workers, seed, out, format } => cmd_sweep(&config, workers, seed, &out, format),
        Command::Report { input, out, format } => cmd_report(&input, out.as_deref(), format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
