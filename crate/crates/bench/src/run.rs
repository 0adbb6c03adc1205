use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tngeo::baselines::{random_search, simulated_annealing, SAConfig};
use tngeo::dmrg::TrainConfig;
use tngeo::geo::{derive_seed, geo_run_with_model, initial_model, Encoding, GeoConfig, RunResult, RunStatus};
use tngeo::knapsack::{brute_force_solve, KnapsackInstance, PenaltyConfig, DEFAULT_ORACLE_BUDGET};

use crate::error::{csv_err, io, json, Result};
use crate::report::{best_configs, write_csv};
use crate::suite::{Cell, Method, Suite};

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance: String,
    pub method: Method,
    pub selection: String,
    pub chi: usize,
    pub n_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub repetition: usize,
    pub seed: u64,
    pub best_cost: Option<f64>,
    pub valid: bool,
    pub n_f: usize,
    pub wall_time_ms: u64,
    pub status: String,
    pub error: Option<String>,
    pub n_objects: usize,
    pub n_knapsacks: usize,
    pub search_space: f64,
    pub optimal_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub instance: usize,
    pub cell: usize,
    pub method: Method,
    pub repetition: usize,
    pub seed: u64,
}

pub struct LoadedInstance {
    pub label: String,
    pub inst: KnapsackInstance,
}

pub struct RunOptions {
    pub workers: usize,
    pub oracle_budget: u64,
    pub dry_run: bool,
}

impl RunOptions {
    /// Flag (or environment) values win over the suite file.
    pub fn resolve(suite: &Suite, workers: Option<usize>, oracle_budget: Option<u64>, dry_run: bool) -> Self {
        Self {
            workers: workers.or(suite.workers).unwrap_or(1).max(1),
            oracle_budget: oracle_budget.or(suite.oracle_budget).unwrap_or(DEFAULT_ORACLE_BUDGET),
            dry_run,
        }
    }
}

/// Loads the instances, filling in missing optima when the search space fits the budget.
pub fn load_instances(suite: &Suite, oracle_budget: u64) -> Result<Vec<LoadedInstance>> {
    suite
        .instances
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(io(path))?;
            let mut inst = KnapsackInstance::from_json(&text)?;
            if inst.known_optimal_cost.is_none() && inst.search_space() <= oracle_budget as f64 {
                let (_, opt) = brute_force_solve(&inst, &PenaltyConfig::for_instance(&inst), oracle_budget)?;
                inst.known_optimal_cost = Some(opt);
            }
            let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(LoadedInstance { label, inst })
        })
        .collect()
}

/// Every (instance x cell x method x repetition), in that nesting order. Methods share
/// the seed of their (instance, cell, repetition) so comparisons are paired.
pub fn plan(suite: &Suite) -> Vec<Job> {
    let n_cells = suite.grid.cells().len();
    let mut jobs = Vec::new();
    for instance in 0..suite.instances.len() {
        for cell in 0..n_cells {
            for &method in &suite.methods {
                for repetition in 0..suite.repetitions {
                    let tag = ((instance * n_cells + cell) * suite.repetitions + repetition) as u64;
                    jobs.push(Job { instance, cell, method, repetition, seed: derive_seed(suite.seed, tag) });
                }
            }
        }
    }
    jobs
}

pub fn run_file_stem(label: &str, job: &Job) -> String {
    format!("{label}__{}__c{:03}__r{:03}", job.method, job.cell, job.repetition)
}

fn geo_config(inst: &KnapsackInstance, suite: &Suite, cell: &Cell, method: Method, seed: u64) -> GeoConfig {
    let encoding = if method == Method::GeoBinary { Encoding::Binary } else { Encoding::Integer };
    let mut cfg = GeoConfig::for_instance(inst, encoding, seed);
    cfg.beta = cell.beta;
    cfg.train = TrainConfig { learning_rate: cell.alpha, max_bond: cell.chi, epochs: cell.n_epochs };
    cfg.selection = cell.selection;
    cfg.max_iterations = suite.grid.max_iterations;
    if let Some(n) = suite.grid.n_samples {
        cfg.n_samples = n;
    }
    cfg
}

/// Upper bound on GEO's evaluations, for baseline budgets when no GEO method is run.
fn nominal_budget(inst: &KnapsackInstance, suite: &Suite) -> usize {
    let n_s = suite.grid.n_samples.unwrap_or(10 * inst.n_objects * inst.n_knapsacks);
    n_s * (suite.grid.max_iterations + 1)
}

fn failed(method: Method, seed: u64, message: String) -> RunResult {
    RunResult {
        method: method.name().into(),
        seed,
        config: serde_json::Value::Null,
        penalty: 0.0,
        trajectory: Vec::new(),
        best_cost: None,
        best_config: None,
        best_assignment: None,
        valid: false,
        n_f: 0,
        final_population_size: 0,
        optimal_cost: None,
        status: RunStatus::Failed,
        error: Some(message),
    }
}

struct Outcome {
    result: RunResult,
    wall_time_ms: u64,
}

fn execute(job: &Job, inst: &KnapsackInstance, suite: &Suite, cell: &Cell, budget: usize, models: Option<(&Path, &str)>) -> Outcome {
    let start = Instant::now();
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<RunResult> {
        match job.method {
            Method::GeoBinary | Method::GeoInteger => {
                let cfg = geo_config(inst, suite, cell, job.method, job.seed);
                let initial = models.map(|_| initial_model(inst, &cfg)).transpose()?;
                let (result, trained) = geo_run_with_model(inst, &cfg)?;
                if let (Some((dir, stem)), Some(initial)) = (models, initial) {
                    for (tag, m) in [("initial", &initial), ("trained", &trained)] {
                        let path = dir.join(format!("{stem}.{tag}.json"));
                        let text = serde_json::to_string(&m.to_checkpoint()).map_err(json(&path))?;
                        fs::write(&path, text).map_err(io(&path))?;
                    }
                }
                Ok(result)
            }
            Method::Sa => Ok(simulated_annealing(inst, &SAConfig::for_budget(inst, budget, job.seed)?)?),
            Method::Random => Ok(random_search(inst, budget, job.seed, None)?),
        }
    }));
    let result = match attempt {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => failed(job.method, job.seed, e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            failed(job.method, job.seed, format!("panic: {msg}"))
        }
    };
    Outcome { result, wall_time_ms: start.elapsed().as_millis() as u64 }
}

/// Summary of a finished (or dry) run.
pub struct RunReport {
    pub jobs: Vec<Job>,
    pub rows: Vec<SummaryRow>,
}

/// Executes the suite into `out`: `runs/*.json`, `summary.csv`, `best_configs.csv`
/// (and `models/` when requested). GEO runs go first; baselines then get the largest
/// GEO `n_f` of their instance.
pub fn cmd_run(suite: &Suite, out: &Path, opts: &RunOptions) -> Result<RunReport> {
    suite.validate()?;
    let jobs = plan(suite);
    if opts.dry_run {
        return Ok(RunReport { jobs, rows: Vec::new() });
    }
    let instances = load_instances(suite, opts.oracle_budget)?;
    let cells = suite.grid.cells();
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io(&runs_dir))?;
    let models_dir = out.join("models");
    if suite.save_models {
        fs::create_dir_all(&models_dir).map_err(io(&models_dir))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .expect("thread pool");

    let run_phase = |phase: &[usize], budgets: &[usize]| -> Result<Vec<(usize, Outcome)>> {
        pool.install(|| {
            phase
                .par_iter()
                .map(|&k| {
                    let job = &jobs[k];
                    let li = &instances[job.instance];
                    let stem = run_file_stem(&li.label, job);
                    let models = suite.save_models.then_some((models_dir.as_path(), stem.as_str()));
                    let outcome = execute(job, &li.inst, suite, &cells[job.cell], budgets[job.instance], models);
                    let path = runs_dir.join(format!("{stem}.json"));
                    fs::write(&path, outcome.result.to_json() + "\n").map_err(io(&path))?;
                    Ok((k, outcome))
                })
                .collect()
        })
    };

    let geo: Vec<usize> = (0..jobs.len()).filter(|&k| jobs[k].method.is_geo()).collect();
    let others: Vec<usize> = (0..jobs.len()).filter(|&k| !jobs[k].method.is_geo()).collect();
    let mut outcomes: Vec<Option<Outcome>> = (0..jobs.len()).map(|_| None).collect();
    for (k, o) in run_phase(&geo, &vec![0; instances.len()])? {
        outcomes[k] = Some(o);
    }
    let budgets: Vec<usize> = (0..instances.len())
        .map(|i| {
            geo.iter()
                .filter(|&&k| jobs[k].instance == i)
                .filter_map(|&k| outcomes[k].as_ref().map(|o| o.result.n_f))
                .max()
                .filter(|&n| n > 0)
                .unwrap_or_else(|| nominal_budget(&instances[i].inst, suite))
        })
        .collect();
    for (k, o) in run_phase(&others, &budgets)? {
        outcomes[k] = Some(o);
    }

    let rows: Vec<SummaryRow> = jobs
        .iter()
        .zip(outcomes)
        .map(|(job, o)| {
            let o = o.expect("every job ran");
            let li = &instances[job.instance];
            let cell = &cells[job.cell];
            SummaryRow {
                instance: li.label.clone(),
                method: job.method,
                selection: cell.selection.name().into(),
                chi: cell.chi,
                n_epochs: cell.n_epochs,
                alpha: cell.alpha,
                beta: cell.beta,
                repetition: job.repetition,
                seed: job.seed,
                best_cost: o.result.best_cost,
                valid: o.result.valid,
                n_f: o.result.n_f,
                wall_time_ms: o.wall_time_ms,
                status: match o.result.status {
                    RunStatus::Completed => "completed".into(),
                    RunStatus::Failed => "failed".into(),
                },
                error: o.result.error,
                n_objects: li.inst.n_objects,
                n_knapsacks: li.inst.n_knapsacks,
                search_space: li.inst.search_space(),
                optimal_cost: li.inst.known_optimal_cost,
            }
        })
        .collect();
    write_csv(&out.join("summary.csv"), &rows)?;
    write_csv(&out.join("best_configs.csv"), &best_configs(&rows))?;
    Ok(RunReport { jobs, rows })
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}
