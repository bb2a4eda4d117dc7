//! Analysis configurations, condition flags and pipeline files.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::assumptions::composite::INT32_BOUNDS;
use crate::assumptions::{CompositeConfig, DomainKind};
use crate::conditions::{PathLimits, Thresholds};
use crate::cpa::WaitlistOrder;
use crate::refine::RefineOptions;

pub const CONFIG_NAMES: &[&str] = &["location", "explicit", "predicate"];

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub name: String,
    pub domain: DomainKind,
    pub order: WaitlistOrder,
    pub refinement: bool,
    pub overflow: bool,
    pub full_restart: bool,
    pub repeat_loc: Option<u32>,
    pub path_limits: PathLimits,
    pub thresholds: Thresholds,
    pub input_automaton: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown configuration `{0}` (expected one of: location, explicit, predicate)")]
    UnknownConfig(String),
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("condition flag must look like KEY=VALUE, got `{0}`")]
    BadFlag(String),
    #[error("refinement requires the predicate domain (configuration `{0}`)")]
    RefinementWithoutPredicates(String),
    #[error("pipeline file: {0}")]
    Pipeline(String),
    #[error("pipeline has no stages")]
    EmptyPipeline,
}

impl AnalysisConfig {
    pub fn named(name: &str) -> Result<AnalysisConfig, ConfigError> {
        let (domain, refinement) = match name {
            "location" => (DomainKind::Location, false),
            "explicit" => (DomainKind::Explicit, false),
            "predicate" => (DomainKind::Predicate, true),
            other => return Err(ConfigError::UnknownConfig(other.to_string())),
        };
        Ok(AnalysisConfig {
            name: name.to_string(),
            domain,
            order: WaitlistOrder::Dfs,
            refinement,
            overflow: false,
            full_restart: false,
            repeat_loc: None,
            path_limits: PathLimits::default(),
            thresholds: Thresholds::default(),
            input_automaton: None,
        })
    }

    /// Applies one `KEY=VALUE` condition.
    pub fn set_condition(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        let int = || value.trim().parse::<u64>().map_err(|_| bad());
        let small = || int().and_then(|n| u32::try_from(n).map_err(|_| bad()));
        match key {
            "path-length" => self.path_limits.length = Some(small()?),
            "assume-edges" => self.path_limits.assume_edges = Some(small()?),
            "repeat-loc" => self.repeat_loc = Some(small()?),
            "busy-edge" => self.thresholds.busy_edge = Some(int()?),
            "reached-size" => self.thresholds.max_reached = Some(int()? as usize),
            "fuel" => self.thresholds.fuel = Some(int()?),
            "pf-atoms" => self.thresholds.pf_atoms = Some(int()? as usize),
            "soft-time" => {
                let secs = value.trim().parse::<f64>().ok().filter(|s| s.is_finite() && *s >= 0.0).ok_or_else(bad)?;
                self.thresholds.soft_time = Some(Duration::from_secs_f64(secs));
            }
            other => return Err(ConfigError::UnknownCondition(other.to_string())),
        }
        Ok(())
    }

    pub fn set_flag(&mut self, flag: &str) -> Result<(), ConfigError> {
        let (k, v) = flag.split_once('=').ok_or_else(|| ConfigError::BadFlag(flag.to_string()))?;
        self.set_condition(k.trim(), v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.refinement && self.domain != DomainKind::Predicate {
            return Err(ConfigError::RefinementWithoutPredicates(self.name.clone()));
        }
        Ok(())
    }

    pub fn composite(&self) -> CompositeConfig {
        CompositeConfig {
            repeat_limit: self.repeat_loc,
            path_limits: self.path_limits,
            overflow: self.overflow.then_some(INT32_BOUNDS),
            ..CompositeConfig::new(self.domain)
        }
    }

    pub fn refine_options(&self) -> RefineOptions {
        RefineOptions { refine: self.refinement, full_restart: self.full_restart, pf_atoms: self.thresholds.pf_atoms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMode {
    #[default]
    Independent,
    ConditionPassing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub stages: Vec<AnalysisConfig>,
    pub mode: ChainMode,
}

impl Pipeline {
    pub fn single(config: AnalysisConfig) -> Pipeline {
        Pipeline { stages: vec![config], mode: ChainMode::Independent }
    }

    pub fn parse(src: &str) -> Result<Pipeline, ConfigError> {
        let spec: PipelineSpec = serde_json::from_str(src).map_err(|e| ConfigError::Pipeline(e.to_string()))?;
        if spec.stages.is_empty() {
            return Err(ConfigError::EmptyPipeline);
        }
        let mut stages = Vec::new();
        for s in spec.stages {
            let mut c = AnalysisConfig::named(&s.config)?;
            if let Some(name) = s.name {
                c.name = name;
            }
            if let Some(o) = s.order {
                c.order = o.into();
            }
            c.refinement = s.refinement.unwrap_or(c.refinement);
            c.overflow = s.overflow.unwrap_or(c.overflow);
            c.full_restart = s.full_restart.unwrap_or(c.full_restart);
            c.input_automaton = s.input_automaton;
            for (k, v) in s.conditions {
                let text = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                c.set_condition(&k, &text)?;
            }
            c.validate()?;
            stages.push(c);
        }
        Ok(Pipeline { stages, mode: spec.mode })
    }

    /// Applies command-line condition flags to every stage.
    pub fn override_conditions(&mut self, flags: &[String]) -> Result<(), ConfigError> {
        for stage in &mut self.stages {
            for f in flags {
                stage.set_flag(f)?;
            }
        }
        Ok(())
    }
}

/// Builds the pipeline described by command-line arguments. No arguments
/// select the predicate configuration with refinement.
pub fn parse_config(
    config: Option<&str>,
    pipeline_src: Option<&str>,
    conditions: &[String],
) -> Result<Pipeline, ConfigError> {
    let mut p = match pipeline_src {
        Some(src) => Pipeline::parse(src)?,
        None => Pipeline::single(AnalysisConfig::named(config.unwrap_or("predicate"))?),
    };
    p.override_conditions(conditions)?;
    for s in &p.stages {
        s.validate()?;
    }
    Ok(p)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineSpec {
    #[serde(default)]
    mode: ChainMode,
    stages: Vec<StageSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct StageSpec {
    config: String,
    name: Option<String>,
    order: Option<OrderSpec>,
    refinement: Option<bool>,
    overflow: Option<bool>,
    full_restart: Option<bool>,
    input_automaton: Option<PathBuf>,
    #[serde(default)]
    conditions: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OrderSpec {
    Dfs,
    Bfs,
}

impl From<OrderSpec> for WaitlistOrder {
    fn from(o: OrderSpec) -> WaitlistOrder {
        match o {
            OrderSpec::Dfs => WaitlistOrder::Dfs,
            OrderSpec::Bfs => WaitlistOrder::Bfs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_set_conditions() {
        let p = parse_config(Some("explicit"), None, &["repeat-loc=3".into()]).unwrap();
        assert_eq!(p.stages[0].domain, DomainKind::Explicit);
        assert_eq!(p.stages[0].repeat_loc, Some(3));
        let p = parse_config(None, None, &["path-length=90".into()]).unwrap();
        assert_eq!(p.stages[0].path_limits.length, Some(90));
    }

    #[test]
    fn default_is_predicate_with_refinement() {
        let p = parse_config(None, None, &[]).unwrap();
        assert_eq!(p.stages.len(), 1);
        assert_eq!(p.stages[0].domain, DomainKind::Predicate);
        assert!(p.stages[0].refinement);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert_eq!(
            parse_config(None, None, &["depth=3".into()]),
            Err(ConfigError::UnknownCondition("depth".into()))
        );
        assert!(matches!(
            Pipeline::parse(r#"{"stages": [{"config": "explicit", "colour": "red"}]}"#),
            Err(ConfigError::Pipeline(_))
        ));
        assert!(matches!(
            Pipeline::parse(r#"{"stages": [{"config": "explicit", "refinement": true}]}"#),
            Err(ConfigError::RefinementWithoutPredicates(_))
        ));
    }

    #[test]
    fn pipeline_file() {
        let p = Pipeline::parse(
            r#"{"mode": "condition-passing", "stages": [
                {"config": "explicit", "conditions": {"fuel": 10000}},
                {"config": "predicate", "order": "bfs"}]}"#,
        )
        .unwrap();
        assert_eq!(p.mode, ChainMode::ConditionPassing);
        assert_eq!(p.stages[0].thresholds.fuel, Some(10000));
        assert_eq!(p.stages[1].order, WaitlistOrder::Bfs);
    }
}
