//! Named experiments, their persisted outputs and the command-line driver.
//!
//! Every experiment is split into independent trajectory jobs and a reducer.
//! Jobs run on a bounded worker pool; their records are merged in key order,
//! written as CSV next to the configuration, and the reducer turns them into
//! an [`ExperimentReport`]. Because the reducer reads only the records and
//! the configuration, [`replay`] recomputes a verdict from disk.

pub mod cli;
pub mod config;
mod experiments;
mod store;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{RunOptions, Solver, SolverSetup, TrajectoryRecord};
use crate::error::{Error, Result};

pub use config::Config;
pub use store::{persist, replay, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Absorbing,
    AttractorSize,
    AuxLinear,
    Averaging,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "absorbing" => Ok(Self::Absorbing),
            "attractor_size" => Ok(Self::AttractorSize),
            "aux_linear" => Ok(Self::AuxLinear),
            "averaging" => Ok(Self::Averaging),
            other => Err(Error::config("experiment.name", format!("unknown experiment `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Absorbing => "absorbing",
            Self::AttractorSize => "attractor_size",
            Self::AuxLinear => "aux_linear",
            Self::Averaging => "averaging",
        }
    }
}

/// An experiment: which one, its base configuration (which also holds the
/// sweep axes, horizon and tail window) and the ensemble seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: Config,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn from_config(config: Config, seed: u64) -> Result<Self> {
        let kind = ExperimentKind::parse(config.text("experiment.name"))?;
        let spec = ExperimentSpec { kind, config, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.problem()?;
        let horizon = c.f64("experiment.horizon")?;
        if !(horizon > 0.0) {
            return Err(Error::config("experiment.horizon", "horizon must be positive"));
        }
        match self.kind {
            ExperimentKind::Absorbing => {
                if c.usize("experiment.ensemble")? < 2 {
                    return Err(Error::config("experiment.ensemble", "need at least two initial data"));
                }
                let (lo, hi) = (c.f64("experiment.phi_min")?, c.f64("experiment.phi_max")?);
                if !(lo > 0.0 && hi > lo) {
                    return Err(Error::config("experiment.phi_min", "need 0 < phi_min < phi_max"));
                }
            }
            ExperimentKind::AttractorSize => {
                c.epsilons()?;
                let tail = c.f64("experiment.tail_start")?;
                if !(tail >= 0.0 && tail < horizon) {
                    return Err(Error::config("experiment.tail_start", "tail window must lie inside the horizon"));
                }
                if c.usize("experiment.ensemble")? == 0 {
                    return Err(Error::config("experiment.ensemble", "ensemble must not be empty"));
                }
            }
            ExperimentKind::AuxLinear => {
                if c.epsilons()?.len() < 4 {
                    return Err(Error::config("experiment.epsilons", "need at least four epsilons"));
                }
            }
            ExperimentKind::Averaging => {
                c.rhos()?;
                if c.epsilons()?.len() < 3 {
                    return Err(Error::config("experiment.epsilons", "need at least three epsilons"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Per-point summaries, fitted numbers, named checks and the verdict.
///
/// JSON keys: `experiment`, `verdict` (`pass` | `fail` | `not_applicable`),
/// `points` (list of `{key, values}`), `fits` (name to number), `checks`
/// (name to bool) and `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub verdict: Verdict,
    pub points: Vec<ReportPoint>,
    pub fits: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub key: String,
    pub values: BTreeMap<String, f64>,
}

impl ExperimentReport {
    fn new(experiment: ExperimentKind) -> Self {
        ExperimentReport {
            experiment,
            verdict: Verdict::Fail,
            points: Vec::new(),
            fits: BTreeMap::new(),
            checks: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn point(&mut self, key: impl Into<String>, values: &[(&str, f64)]) {
        self.points.push(ReportPoint {
            key: key.into(),
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }

    /// Pass when every recorded check holds.
    fn conclude(&mut self) {
        self.verdict = if self.checks.values().all(|c| *c) { Verdict::Pass } else { Verdict::Fail };
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// Raw records keyed by job, plus the report derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: BTreeMap<String, TrajectoryRecord>,
    pub report: ExperimentReport,
}

/// Runs every job of the experiment on `workers` threads (0 picks the
/// default) and reduces the merged records.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let jobs = experiments::jobs(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<Result<Vec<(String, TrajectoryRecord)>>> =
        pool.install(|| jobs.par_iter().map(|job| experiments::run_job(spec, job)).collect());
    let mut records = BTreeMap::new();
    for r in results {
        for (key, rec) in r? {
            records.insert(key, rec);
        }
    }
    let report = reduce(spec, &records)?;
    Ok(ExperimentOutcome { records, report })
}

/// Verdict from records alone.
pub fn reduce(spec: &ExperimentSpec, records: &BTreeMap<String, TrajectoryRecord>) -> Result<ExperimentReport> {
    experiments::reduce(spec, records)
}

fn spec_for(config: &Config, kind: ExperimentKind) -> Result<ExperimentSpec> {
    let mut c = config.clone();
    c.set("experiment.name", kind.name())?;
    ExperimentSpec::from_config(c, 0)
}

/// Absorbing-set experiment on the default pool.
pub fn exp_absorbing(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    Ok(run_experiment(&spec_for(&spec.config, ExperimentKind::Absorbing)?, 0)?.report)
}

/// Attractor-size sweep on the default pool.
pub fn exp_attractor_size(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    Ok(run_experiment(&spec_for(&spec.config, ExperimentKind::AttractorSize)?, 0)?.report)
}

/// Auxiliary linear scaling on the default pool.
pub fn exp_aux_linear(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    Ok(run_experiment(&spec_for(&spec.config, ExperimentKind::AuxLinear)?, 0)?.report)
}

/// Deviation from the averaged system on the default pool.
pub fn exp_averaging(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    Ok(run_experiment(&spec_for(&spec.config, ExperimentKind::Averaging)?, 0)?.report)
}

/// One trajectory from the configuration's initial data, with an extra
/// column `L` holding the auxiliary functional `2 L1 + L2`.
pub fn simulate(config: &Config) -> Result<TrajectoryRecord> {
    use crate::analysis::{functionals_l, l_depth, EnergyConfig};
    let problem = config.problem()?;
    let dim = problem.basis.modes();
    let stepper = config.stepper_for(&problem.forcing)?;
    let energy = EnergyConfig::new(&problem.kernel, config.f64("energy.c_e")?, config.f64("energy.varpi")?)?;
    let setup = SolverSetup {
        engine: config.engine()?,
        tail: config.tail_policy()?,
        min_depth: l_depth(&problem.kernel, &energy, stepper.dt),
        ..Default::default()
    };
    let u = config.field("initial.u", dim)?;
    let v = config.field("initial.v", dim)?;
    let mut solver = Solver::new(problem, stepper, setup, u, v)?;
    let opts = RunOptions { sample_every: config.usize("solver.sample_every")?, c_e: energy.c_e, snapshot_every: None };
    let mut failure = None;
    let rec = solver.run_with(config.f64("solver.horizon")?, &opts, |s, rec| match functionals_l(s, &energy) {
        Ok(l) => rec.push_extra("L", l.l),
        Err(e) => {
            failure.get_or_insert(e);
            rec.push_extra("L", f64::NAN);
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(rec),
    }
}
