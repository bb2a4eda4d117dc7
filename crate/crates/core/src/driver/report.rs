//! Report output: text summary, result files and json lines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::driver::pipeline::{DriverError, FinalReport, StageResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Verdict line followed by the stats block.
pub fn text_summary(report: &FinalReport) -> String {
    let mut out = format!("{}\n", report.verdict());
    out.push_str(&stats_block(report));
    out
}

pub fn stats_block(report: &FinalReport) -> String {
    let mut out = String::new();
    for (k, stage) in report.stages.iter().enumerate() {
        match stage {
            StageResult::Skipped(name) => {
                let _ = writeln!(out, "stage {} ({name}): skipped", k + 1);
            }
            StageResult::Ran(r) => {
                let s = &r.stats;
                let _ = writeln!(out, "stage {} ({}): {}", k + 1, r.name, r.verdict);
                let _ = writeln!(out, "  posts: {}", s.posts);
                let _ = writeln!(out, "  reached: {}", s.reached);
                let _ = writeln!(out, "  art-nodes: {}", s.art_nodes);
                let _ = writeln!(out, "  refinements: {}", s.refinements);
                let _ = writeln!(out, "  refinement-failures: {}", s.refinement_failures);
                let _ = writeln!(out, "  predicates: {}", s.predicates);
                let _ = writeln!(out, "  halted: {}", s.halted.as_deref().unwrap_or("no"));
                let _ = writeln!(out, "  time-ms: {:.3}", s.wall_ms);
            }
        }
    }
    let _ = writeln!(out, "total-time-ms: {:.3}", report.total_ms());
    out
}

/// Writes psi, automaton, witness (for `FALSE`) and stats into `dir`.
pub fn emit_files(report: &FinalReport, dir: &Path) -> Result<Vec<PathBuf>, DriverError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DriverError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let last = report.last();
    let mut files = vec![
        (dir.join("psi.txt"), last.psi.to_string()),
        (dir.join("automaton.txt"), last.automaton.to_string()),
        (dir.join("stats.txt"), text_summary(report)),
    ];
    if let Some(w) = &last.witness {
        files.push((dir.join("witness.txt"), w.to_string()));
    }
    let mut written = Vec::new();
    for (path, content) in files {
        std::fs::write(&path, content).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// One json object per stage, then one for the overall result.
pub fn json_lines(report: &FinalReport) -> Vec<String> {
    let mut out = Vec::new();
    for (k, stage) in report.stages.iter().enumerate() {
        let v = match stage {
            StageResult::Skipped(name) => json!({
                "schema": SCHEMA_VERSION,
                "kind": "stage",
                "index": k + 1,
                "name": name,
                "status": "skipped",
            }),
            StageResult::Ran(r) => json!({
                "schema": SCHEMA_VERSION,
                "kind": "stage",
                "index": k + 1,
                "name": r.name,
                "status": "ran",
                "verdict": r.verdict,
                "psi_clauses": r.psi.len(),
                "automaton_states": r.automaton.state_count(),
                "stats": r.stats,
            }),
        };
        out.push(v.to_string());
    }
    out.push(
        json!({
            "schema": SCHEMA_VERSION,
            "kind": "result",
            "program": report.program,
            "verdict": report.verdict(),
            "solved": report.solved(),
            "psi": report.last().psi.clauses().map(|c| c.to_string()).collect::<Vec<_>>(),
            "total_ms": report.total_ms(),
        })
        .to_string(),
    );
    out
}
