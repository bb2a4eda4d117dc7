use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::debug;

use cmcheck::assumptions::Verdict;
use cmcheck::cfa::{parse_cfa, parse_program, Cfa};
use cmcheck::driver::report::{emit_files, json_lines, text_summary};
use cmcheck::driver::{parse_config, run_pipeline, DriverError};

const EXIT_ERROR: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Text,
    Json,
}

/// Conditional model checker: proves a program safe, finds a bug, or
/// reports the condition under which it was verified.
#[derive(Debug, Parser)]
#[command(name = "cmcheck", version)]
struct Cli {
    /// Program in the imperative language (.imp) or as a CFA (.cfa).
    program: PathBuf,
    /// Named configuration: location, explicit or predicate.
    #[arg(long, conflicts_with = "pipeline")]
    config: Option<String>,
    /// JSON file describing a sequence of configurations.
    #[arg(long)]
    pipeline: Option<PathBuf>,
    /// Condition such as `fuel=100000` or `repeat-loc=3`; applies to every stage.
    #[arg(long = "condition", value_name = "K=V")]
    conditions: Vec<String>,
    /// Assumption automaton restricting the first stage.
    #[arg(long)]
    input_automaton: Option<PathBuf>,
    /// Directory for psi, automaton, witness and stats files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    emit: Emit,
}

fn read(path: &Path) -> Result<String, DriverError> {
    std::fs::read_to_string(path).map_err(|source| DriverError::Io { path: path.to_path_buf(), source })
}

fn load_program(path: &Path) -> Result<Cfa, DriverError> {
    let src = read(path)?;
    let program = |msg: String| DriverError::Program { path: path.to_path_buf(), msg };
    if path.extension().is_some_and(|e| e == "cfa") {
        parse_cfa(&src).map_err(|e| program(e.to_string()))
    } else {
        parse_program(&src).map_err(|e| program(e.to_string()))
    }
}

fn run(cli: &Cli) -> Result<Verdict, DriverError> {
    if let Ok(seed) = std::env::var("CMCHECK_SEED") {
        debug!("CMCHECK_SEED={seed} (no configuration uses randomness)");
    }
    let cfa = load_program(&cli.program)?;
    let pipeline_src = cli.pipeline.as_deref().map(read).transpose()?;
    let mut pipeline = parse_config(cli.config.as_deref(), pipeline_src.as_deref(), &cli.conditions)?;
    if let Some(a) = &cli.input_automaton {
        pipeline.stages[0].input_automaton = Some(a.clone());
    }
    let report = run_pipeline(&cfa, &pipeline, &cli.program.display().to_string())?;
    match cli.emit {
        Emit::Text => print!("{}", text_summary(&report)),
        Emit::Json => json_lines(&report).iter().for_each(|l| println!("{l}")),
    }
    if let Some(dir) = &cli.out_dir {
        emit_files(&report, dir)?;
    }
    Ok(report.verdict())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Verdict::True) => ExitCode::from(0),
        Ok(Verdict::False) => ExitCode::from(1),
        Ok(Verdict::Condition) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
