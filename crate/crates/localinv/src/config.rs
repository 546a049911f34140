//! Run configuration: a JSON file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use localinv_core::cert::CertBudgets;
use localinv_core::inversion::{DerivativeMeasure, HadamardLevyOptions};
use localinv_core::suite::{self, CheckTolerances, ProblemRecord, RunOptions, Task};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_task")]
    pub task: String,
    /// Single problem to run; all applicable built-in problems when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Never embedded in the report, so that runs into different directories stay byte-identical.
    #[serde(default, skip_serializing)]
    pub output: Output,
}

fn default_task() -> String {
    Task::FullSuite.label().to_string()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: default_task(),
            problem: None,
            params: BTreeMap::new(),
            seed: None,
            budgets: Budgets::default(),
            tolerances: Tolerances::default(),
            output: Output::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub n_targets: usize,
    pub lipschitz_pairs: usize,
    pub self_map_samples: usize,
    pub fp_starts: usize,
    pub qne_samples: usize,
    pub probe_starts: usize,
    pub roundtrip_samples: usize,
    pub sheet_samples: usize,
    pub ode_steps: usize,
    pub weak_grid_step: f64,
    pub ladder: Vec<f64>,
    pub hl_s_max: f64,
    pub hl_ds: f64,
    pub hl_samples: usize,
    pub hl_measure: String,
}

impl Default for Budgets {
    fn default() -> Self {
        let cert = CertBudgets::default();
        let run = RunOptions::default();
        let hl = HadamardLevyOptions::default();
        Budgets {
            n_targets: cert.n_targets,
            lipschitz_pairs: cert.lipschitz_pairs,
            self_map_samples: cert.self_map_samples,
            fp_starts: cert.fp_starts,
            qne_samples: cert.qne_samples,
            probe_starts: run.fp_starts,
            roundtrip_samples: run.roundtrip_samples,
            sheet_samples: run.sheet_samples,
            ode_steps: run.ode_steps,
            weak_grid_step: run.weak_grid_step,
            ladder: run.ladder,
            hl_s_max: hl.s_max,
            hl_ds: hl.ds,
            hl_samples: hl.samples,
            hl_measure: hl.measure.label().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub oracle_abs: f64,
    pub derivative_rel: f64,
    pub fixed_set: f64,
    pub ode_defect: f64,
    pub rk4_gap: f64,
    pub constants: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let t = CheckTolerances::default();
        Tolerances {
            oracle_abs: t.oracle_abs,
            derivative_rel: t.derivative_rel,
            fixed_set: t.fixed_set,
            ode_defect: t.ode_defect,
            rk4_gap: t.rk4_gap,
            constants: t.constants,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: PathBuf::from("localinv-out"),
        }
    }
}

/// Command-line flags that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub task: Option<String>,
    pub problem: Option<String>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(task) = o.task {
            self.task = task;
        }
        if let Some(problem) = o.problem {
            self.problem = Some(problem);
        }
        if let Some(out) = o.out {
            self.output.dir = out;
        }
    }

    /// Check every field and resolve the work list.
    pub fn validate(&self) -> Result<Plan, CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let task = match Task::parse(&self.task) {
            Some(t) => t,
            None => return bad(format!("unknown task '{}'", self.task)),
        };
        let Some(seed) = self.seed else {
            return bad("a seed is required (config field \"seed\" or --seed)".into());
        };

        let t = &self.tolerances;
        for (name, value) in [
            ("oracle_abs", t.oracle_abs),
            ("derivative_rel", t.derivative_rel),
            ("fixed_set", t.fixed_set),
            ("ode_defect", t.ode_defect),
            ("rk4_gap", t.rk4_gap),
            ("constants", t.constants),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("tolerance {name} must be positive and finite, got {value}"));
            }
        }

        let b = &self.budgets;
        for (name, value) in [
            ("n_targets", b.n_targets),
            ("lipschitz_pairs", b.lipschitz_pairs),
            ("self_map_samples", b.self_map_samples),
            ("fp_starts", b.fp_starts),
            ("qne_samples", b.qne_samples),
            ("probe_starts", b.probe_starts),
            ("roundtrip_samples", b.roundtrip_samples),
            ("sheet_samples", b.sheet_samples),
            ("hl_samples", b.hl_samples),
        ] {
            if value == 0 {
                return bad(format!("budget {name} must be at least 1"));
            }
        }
        if b.ode_steps < 2 {
            return bad("budget ode_steps must be at least 2".into());
        }
        for (name, value) in [
            ("weak_grid_step", b.weak_grid_step),
            ("hl_s_max", b.hl_s_max),
            ("hl_ds", b.hl_ds),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("budget {name} must be positive and finite, got {value}"));
            }
        }
        if b.hl_ds > b.hl_s_max {
            return bad("budget hl_ds exceeds hl_s_max".into());
        }
        if b.ladder.is_empty()
            || b.ladder.iter().any(|r| !(r.is_finite() && *r > 0.0))
            || b.ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("ladder must be a non-empty strictly decreasing list of positive radii".into());
        }
        let measure = match b.hl_measure.as_str() {
            m if m == DerivativeMeasure::OperatorNorm.label() => DerivativeMeasure::OperatorNorm,
            m if m == DerivativeMeasure::SmallestSingular.label() => DerivativeMeasure::SmallestSingular,
            m => return bad(format!("unknown hl_measure '{m}'")),
        };

        let problems = match &self.problem {
            Some(name) => {
                let record = suite::lookup(name, &self.params).map_err(|e| CliError::Config(e.to_string()))?;
                if !task.applies_to(&record) {
                    return bad(format!("task '{}' does not apply to problem '{name}'", task.label()));
                }
                vec![record]
            }
            None => {
                if !self.params.is_empty() {
                    return bad("params require a problem".into());
                }
                suite::register_builtin()
                    .into_iter()
                    .filter(|r| task.applies_to(r))
                    .collect()
            }
        };

        let options = RunOptions {
            tolerances: CheckTolerances {
                oracle_abs: t.oracle_abs,
                derivative_rel: t.derivative_rel,
                fixed_set: t.fixed_set,
                ode_defect: t.ode_defect,
                rk4_gap: t.rk4_gap,
                constants: t.constants,
            },
            seed,
            budgets: CertBudgets {
                n_targets: b.n_targets,
                lipschitz_pairs: b.lipschitz_pairs,
                self_map_samples: b.self_map_samples,
                fp_starts: b.fp_starts,
                qne_samples: b.qne_samples,
                ..CertBudgets::default()
            },
            ladder: b.ladder.clone(),
            roundtrip_samples: b.roundtrip_samples,
            sheet_samples: b.sheet_samples,
            ode_steps: b.ode_steps,
            fp_starts: b.probe_starts,
            weak_grid_step: b.weak_grid_step,
            hadamard_levy: HadamardLevyOptions {
                s_max: b.hl_s_max,
                ds: b.hl_ds,
                samples: b.hl_samples,
                measure,
            },
        };
        Ok(Plan {
            config: self.clone(),
            task,
            problems,
            options,
        })
    }
}

/// A validated configuration ready to execute.
#[derive(Debug)]
pub struct Plan {
    pub config: RunConfig,
    pub task: Task,
    pub problems: Vec<ProblemRecord>,
    pub options: RunOptions,
}

/// Parse `LOCALINV_THREADS`; `None` leaves the choice to the thread pool.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("LOCALINV_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "LOCALINV_THREADS must be a positive integer, got '{s}'"
            ))),
        },
    }
}
