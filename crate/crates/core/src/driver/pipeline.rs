//! Running single analyses and sequences of them.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use thiserror::Error;

use crate::assumptions::{postprocess, Automaton, AutomatonError, CompositeCpa, Condition, Verdict};
use crate::cfa::Cfa;
use crate::conditions::GlobalMonitor;
use crate::cpa::Reached;
use crate::driver::config::{AnalysisConfig, ChainMode, ConfigError, Pipeline};
use crate::refine::{refine_loop, LoopOutcome, Witness};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {msg}")]
    Program { path: PathBuf, msg: String },
    #[error("automaton {automaton} does not fit program {program}: {source}")]
    Automaton { automaton: PathBuf, program: String, source: AutomatonError },
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct StageStats {
    pub posts: u64,
    pub reached: usize,
    pub art_nodes: usize,
    pub refinements: usize,
    pub refinement_failures: usize,
    pub predicates: usize,
    pub halted: Option<String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub name: String,
    pub verdict: Verdict,
    pub psi: Condition,
    pub automaton: Automaton,
    pub witness: Option<Witness>,
    pub stats: StageStats,
}

#[derive(Debug, Clone)]
pub enum StageResult {
    Ran(Box<StageReport>),
    Skipped(String),
}

#[derive(Debug, Clone)]
pub struct FinalReport {
    pub program: String,
    pub stages: Vec<StageResult>,
}

impl FinalReport {
    /// The last stage that ran; its outcome is the outcome of the pipeline.
    pub fn last(&self) -> &StageReport {
        self.stages
            .iter()
            .rev()
            .find_map(|s| match s {
                StageResult::Ran(r) => Some(&**r),
                StageResult::Skipped(_) => None,
            })
            .expect("the first stage always runs")
    }

    pub fn verdict(&self) -> Verdict {
        self.last().verdict
    }

    pub fn solved(&self) -> bool {
        self.verdict() != Verdict::Condition
    }

    pub fn total_ms(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| match s {
                StageResult::Ran(r) => r.stats.wall_ms,
                StageResult::Skipped(_) => 0.0,
            })
            .sum()
    }
}

/// One analysis run, optionally restricted by an input automaton.
pub fn run_analysis(cfa: &Cfa, config: &AnalysisConfig, input: Option<Arc<Automaton>>) -> StageReport {
    let start = Instant::now();
    let mut cpa = CompositeCpa::new(config.composite());
    if let Some(a) = input {
        cpa = cpa.with_observer(a);
    }
    let mut reached = Reached::new(&mut cpa, cfa, config.order);
    let mut monitor = GlobalMonitor::new(config.thresholds);
    let (outcome, rstats) = refine_loop(&mut cpa, cfa, &mut reached, &mut monitor, config.refine_options());
    let (psi, verdict) = postprocess(&reached);
    let (verdict, witness, halted) = match outcome {
        LoopOutcome::Bug(w) => (Verdict::False, Some(w), None),
        LoopOutcome::Complete => (verdict, None, None),
        LoopOutcome::Halted(r) => (verdict, None, Some(r.to_string())),
    };
    let automaton = Automaton::export(&reached, cfa);
    let stats = StageStats {
        posts: monitor.posts(),
        reached: reached.size(),
        art_nodes: reached.nodes().filter(|(_, n)| !n.removed).count(),
        refinements: rstats.refinements,
        refinement_failures: rstats.failures,
        predicates: cpa.precision.atom_count(),
        halted,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
    };
    info!("{}: {verdict} after {} posts", config.name, stats.posts);
    StageReport { name: config.name.clone(), verdict, psi, automaton, witness, stats }
}

pub fn load_automaton(path: &Path, cfa: &Cfa, program: &str) -> Result<Automaton, DriverError> {
    let src = std::fs::read_to_string(path).map_err(|source| DriverError::Io { path: path.to_path_buf(), source })?;
    let mismatch = |source| DriverError::Automaton { automaton: path.to_path_buf(), program: program.to_string(), source };
    let a = Automaton::parse(&src).map_err(mismatch)?;
    a.check_cfa(cfa).map_err(mismatch)?;
    Ok(a)
}

/// Runs the stages in order until one returns `TRUE` or `FALSE`.
pub fn run_pipeline(cfa: &Cfa, pipeline: &Pipeline, program: &str) -> Result<FinalReport, DriverError> {
    let mut stages = Vec::new();
    let mut carried: Option<Arc<Automaton>> = None;
    let mut done = false;
    for stage in &pipeline.stages {
        if done {
            stages.push(StageResult::Skipped(stage.name.clone()));
            continue;
        }
        let input = match &stage.input_automaton {
            Some(path) => Some(Arc::new(load_automaton(path, cfa, program)?)),
            None if pipeline.mode == ChainMode::ConditionPassing => carried.take(),
            None => None,
        };
        let report = run_analysis(cfa, stage, input);
        done = report.verdict != Verdict::Condition;
        carried = Some(Arc::new(report.automaton.clone()));
        stages.push(StageResult::Ran(Box::new(report)));
    }
    Ok(FinalReport { program: program.to_string(), stages })
}

/// Runs the same pipeline on many programs; `parallel` selects the rayon
/// pool (when compiled in) over a plain loop. Reports come back in input
/// order.
pub fn run_batch(
    programs: &[(String, Cfa)],
    pipeline: &Pipeline,
    parallel: bool,
) -> Vec<Result<FinalReport, DriverError>> {
    let one = |(name, cfa): &(String, Cfa)| run_pipeline(cfa, pipeline, name);
    if parallel {
        crate::par::map(programs, one)
    } else {
        crate::par::map_seq(programs, one)
    }
}
