//! Experiment configuration: a JSON document with `problem`, `solver` and
//! `run` blocks. Any field can be overridden with a dotted path.

use std::path::{Path, PathBuf};

use fcco_core::problem::ProblemConfig;
use fcco_core::schedule::ScheduleSpec;
use fcco_core::solver::{AdaptiveMode, Method, Projection, SolverConfig, StagewiseSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Seed of the problem instance, separate from the run seeds.
    #[serde(default)]
    pub problem_seed: u64,
    /// AUC only: read tasks from this CSV instead of generating them.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    /// Use the Jacobian-based tracker for v1/v2.
    pub single_point: bool,
    pub b1: usize,
    pub b2: usize,
    /// Defaults to the method's own preset.
    pub schedule: Option<ScheduleSpec>,
    pub adaptive: AdaptiveMode,
    pub projection: Projection,
    pub stagewise: StagewiseSpec,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            method: Method::MsvrV2,
            single_point: false,
            b1: 2,
            b2: 4,
            schedule: None,
            adaptive: AdaptiveMode::Off,
            projection: Projection::Auto,
            stagewise: StagewiseSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Methods run side by side on the same problem; defaults to
    /// `[solver.method]`.
    pub methods: Vec<Method>,
    pub iterations: usize,
    pub sample_budget: Option<u64>,
    pub seeds: Vec<u64>,
    pub trace_stride: usize,
    pub out: PathBuf,
    pub grad_target: Option<f64>,
    pub gap_target: Option<f64>,
    pub skip_tracking_errors: bool,
    /// Fill `wall_ns`. Off by default so that traces are reproducible.
    pub wall_clock: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            methods: Vec::new(),
            iterations: 1000,
            sample_budget: None,
            seeds: vec![0],
            trace_stride: 10,
            out: PathBuf::from("out"),
            grad_target: None,
            gap_target: None,
            skip_tracking_errors: false,
            wall_clock: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Learning rates; defaults to the schedule's `eta`.
    pub etas: Vec<f64>,
    /// Defaults to `[solver.method]`.
    pub methods: Vec<Method>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            alphas: vec![0.1, 0.5, 0.9, 1.0],
            betas: vec![0.1, 0.5, 0.9, 1.0],
            etas: Vec::new(),
            methods: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| HarnessError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    /// Every default written out, for provenance.
    pub fn resolved(&self) -> Value {
        let mut cfg = self.clone();
        if cfg.solver.schedule.is_none() {
            cfg.solver.schedule = Some(self.schedule_for(self.solver.method));
        }
        if cfg.sweep.methods.is_empty() {
            cfg.sweep.methods = vec![self.solver.method];
        }
        if cfg.run.methods.is_empty() {
            cfg.run.methods = vec![self.solver.method];
        }
        serde_json::to_value(cfg).expect("config serializes")
    }

    fn check(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(HarnessError::Config("run.seeds is empty".into()));
        }
        if self.run.trace_stride == 0 {
            return Err(HarnessError::Config("run.trace_stride must be at least 1".into()));
        }
        if self.data.is_some() && !matches!(self.problem, ProblemConfig::AucMultitask(_)) {
            return Err(HarnessError::Config("`data` is only read by auc-multitask problems".into()));
        }
        let finite = match &self.problem {
            ProblemConfig::QuadraticSc(c) => c.n.is_some(),
            ProblemConfig::PlComposition(c) => c.n.is_some(),
            ProblemConfig::AucMultitask(_) => true,
        };
        let methods = std::iter::once(self.solver.method)
            .chain(self.run.methods.iter().copied())
            .chain(self.sweep.methods.iter().copied());
        for m in methods {
            if m.needs_finite_sum() && !finite {
                return Err(HarnessError::Config(format!(
                    "{} needs a finite-sum problem; {} has infinite support",
                    m.name(),
                    self.problem.kind()
                )));
            }
        }
        Ok(())
    }

    pub fn run_methods(&self) -> Vec<Method> {
        if self.run.methods.is_empty() {
            vec![self.solver.method]
        } else {
            self.run.methods.clone()
        }
    }

    pub fn schedule_for(&self, method: Method) -> ScheduleSpec {
        match (&self.solver.schedule, method == self.solver.method) {
            (Some(s), true) => s.clone(),
            (Some(s), false) => ScheduleSpec {
                preset: method.default_preset(),
                ..s.clone()
            },
            (None, _) => ScheduleSpec {
                preset: method.default_preset(),
                ..ScheduleSpec::default()
            },
        }
    }

    /// Solver settings for `method` and one seed.
    pub fn solver_config(&self, method: Method, seed: u64) -> SolverConfig {
        let (tracker, grad) = method.pair(self.solver.single_point);
        SolverConfig {
            tracker,
            grad,
            schedule: self.schedule_for(method),
            iterations: self.run.iterations,
            b1: self.solver.b1,
            b2: self.solver.b2,
            seed,
            trace_stride: self.run.trace_stride,
            adaptive: self.solver.adaptive,
            projection: self.solver.projection,
            sample_budget: self.run.sample_budget,
            grad_target: self.run.grad_target,
            gap_target: self.run.gap_target,
            skip_tracking_errors: self.run.skip_tracking_errors,
        }
    }
}

/// Sets `a.b.c=value` in a JSON tree. The value is parsed as JSON when it
/// can be, and kept as a string otherwise. Missing objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::Config(format!("bad override path `{path}`")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{path}`: `{key}` is not inside an object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| HarnessError::Config(format!("`{path}` does not end inside an object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Run seeds after `--seed` and `FCCO_SEED`; the flag wins over the variable.
pub fn effective_seeds(cfg: &ExperimentConfig, flag: Option<u64>, env: Option<&str>) -> Result<Vec<u64>> {
    if let Some(s) = flag {
        return Ok(vec![s]);
    }
    if let Some(raw) = env {
        let s = raw
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("FCCO_SEED=`{raw}` is not an unsigned integer")))?;
        return Ok(vec![s]);
    }
    Ok(cfg.run.seeds.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"problem": {"kind": "quadratic-sc"}}"#).unwrap();
        assert_eq!(cfg.solver.b1, 2);
        assert_eq!(cfg.run.seeds, vec![0]);
        let r = cfg.resolved();
        assert_eq!(r["solver"]["schedule"]["preset"], "v2");
        assert_eq!(r["problem"]["m"], 20);
    }

    #[test]
    fn dotted_overrides() {
        let mut v: Value = serde_json::from_str(r#"{"problem": {"kind": "quadratic-sc"}}"#).unwrap();
        apply_override(&mut v, "solver.b1=5").unwrap();
        apply_override(&mut v, "solver.method=msvr-v1").unwrap();
        apply_override(&mut v, "run.seeds=[1,2,3]").unwrap();
        let cfg = ExperimentConfig::from_value(v).unwrap();
        assert_eq!(cfg.solver.b1, 5);
        assert_eq!(cfg.solver.method, Method::MsvrV1);
        assert_eq!(cfg.run.seeds, vec![1, 2, 3]);
        let mut v = Value::Null;
        assert!(apply_override(&mut v, "a.b=1").is_err());
        let mut v = serde_json::json!({});
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"problem": {"kind": "quadratic-sc", "mm": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problem": {"kind": "quadratic-sc"}, "solverr": {}}"#).is_err());
    }

    #[test]
    fn finite_sum_methods_need_finite_support() {
        let bad = r#"{"problem": {"kind": "quadratic-sc", "n": null}, "solver": {"method": "msvr-v3"}}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        let ok = r#"{"problem": {"kind": "quadratic-sc"}, "solver": {"method": "msvr-v3"}}"#;
        assert!(ExperimentConfig::from_json(ok).is_ok());
    }

    #[test]
    fn seed_precedence() {
        let cfg = ExperimentConfig::from_json(r#"{"problem": {"kind": "quadratic-sc"}, "run": {"seeds": [4, 5]}}"#).unwrap();
        assert_eq!(effective_seeds(&cfg, None, None).unwrap(), vec![4, 5]);
        assert_eq!(effective_seeds(&cfg, None, Some("9")).unwrap(), vec![9]);
        assert_eq!(effective_seeds(&cfg, Some(1), Some("9")).unwrap(), vec![1]);
        assert!(effective_seeds(&cfg, None, Some("x")).is_err());
    }
}
