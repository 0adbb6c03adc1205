//! Reference solvers on the reduced `M^N` space, run at the same evaluation budget as GEO.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{feasible, CostTracker, Encoding, IterationRecord, RunResult};
use crate::knapsack::{KnapsackInstance, PenaltyConfig};

pub fn random_search(inst: &KnapsackInstance, n_f: usize, seed: u64, penalty: Option<PenaltyConfig>) -> Result<RunResult> {
    inst.validate()?;
    if n_f == 0 {
        return Err(Error::Config("random search needs a positive budget".into()));
    }
    let pen = penalty.unwrap_or_else(|| PenaltyConfig::for_instance(inst));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracker = CostTracker::new(inst, Encoding::Integer, pen);
    let mut n_valid = 0;
    for _ in 0..n_f {
        let y: Vec<usize> = (0..inst.n_objects).map(|_| rng.gen_range(0..inst.n_knapsacks)).collect();
        n_valid += feasible(inst, Encoding::Integer, &y) as usize;
        tracker.cost(&y)?;
    }
    let echo = serde_json::json!({ "n_f": n_f, "seed": seed });
    let mut result = tracker.finish("random", seed, echo);
    result.trajectory.push(IterationRecord {
        iteration: 0,
        best_cost: tracker.best_cost(),
        n_valid_sampled: n_valid,
        n_equality_violations: 0,
        loss: None,
        n_f,
        symmetry_defect: None,
    });
    result.n_f = n_f;
    Ok(result)
}

/// Full iterations guaranteed whenever the budget allows.
pub const MIN_SA_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SAConfig {
    pub ensemble_size: usize,
    /// Full iterations, each costing `ensemble_size` evaluations.
    pub n_iterations: usize,
    /// Members that still move in one last partial iteration, so the budget is hit exactly.
    pub partial: usize,
    pub t_final: f64,
    pub seed: u64,
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
}

impl SAConfig {
    /// Splits a budget of `n_f` evaluations: the ensemble (`10 M N`, shrunk on small budgets
    /// so at least [`MIN_SA_ITERATIONS`] sweeps fit) is initialized, then full iterations,
    /// then the remainder.
    pub fn for_budget(inst: &KnapsackInstance, n_f: usize, seed: u64) -> Result<Self> {
        if n_f == 0 {
            return Err(Error::Config("simulated annealing needs a positive budget".into()));
        }
        let ensemble = (10 * inst.n_objects * inst.n_knapsacks).min((n_f / (MIN_SA_ITERATIONS + 1)).max(1));
        let moves = n_f - ensemble;
        Ok(Self {
            ensemble_size: ensemble,
            n_iterations: moves / ensemble,
            partial: moves % ensemble,
            t_final: 1.0,
            seed,
            penalty: None,
        })
    }

    pub fn total_evaluations(&self) -> usize {
        self.ensemble_size * (1 + self.n_iterations) + self.partial
    }

    /// Temperature updates, counting a partial final iteration.
    pub fn cooling_steps(&self) -> usize {
        self.n_iterations + usize::from(self.partial > 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble must be non-empty".into()));
        }
        if self.partial >= self.ensemble_size {
            return Err(Error::Config("partial iteration must be smaller than the ensemble".into()));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("final temperature must be positive, got {}", self.t_final)));
        }
        Ok(())
    }
}

/// Half the population standard deviation, or 1 when the costs are all equal.
pub fn initial_temperature(costs: &[f64]) -> f64 {
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let std = (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        0.5 * std
    } else {
        1.0
    }
}

/// Per-step multiplier taking `t_initial` to `t_final` in `steps` steps.
pub fn cooling_rate(t_initial: f64, t_final: f64, steps: usize) -> f64 {
    if steps == 0 {
        1.0
    } else {
        ((t_final / t_initial).ln() / steps as f64).exp()
    }
}

pub fn acceptance_probability(delta: f64, temperature: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else {
        (-delta / temperature).exp()
    }
}

/// Metropolis rule with a uniform draw `u` in `[0, 1)`.
pub fn metropolis_accept(delta: f64, temperature: f64, u: f64) -> bool {
    delta < 0.0 || u < acceptance_probability(delta, temperature)
}

/// Ensemble SA with single-object moves and geometric cooling; returns the best
/// assignment seen over the whole run.
pub fn simulated_annealing(inst: &KnapsackInstance, cfg: &SAConfig) -> Result<RunResult> {
    inst.validate()?;
    cfg.validate()?;
    let pen = cfg.penalty.unwrap_or_else(|| PenaltyConfig::for_instance(inst));
    let (n, m) = (inst.n_objects, inst.n_knapsacks);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tracker = CostTracker::new(inst, Encoding::Integer, pen);
    let mut evaluations = 0usize;

    let mut ensemble: Vec<Vec<usize>> = (0..cfg.ensemble_size)
        .map(|_| (0..n).map(|_| rng.gen_range(0..m)).collect())
        .collect();
    let mut costs = Vec::with_capacity(ensemble.len());
    for y in &ensemble {
        costs.push(tracker.cost(y)?);
        evaluations += 1;
    }
    let record = |iteration: usize, tracker: &CostTracker, ensemble: &[Vec<usize>], evaluations: usize| IterationRecord {
        iteration,
        best_cost: tracker.best_cost(),
        n_valid_sampled: ensemble.iter().filter(|y| feasible(inst, Encoding::Integer, y)).count(),
        n_equality_violations: 0,
        loss: None,
        n_f: evaluations,
        symmetry_defect: None,
    };
    let mut trajectory = vec![record(0, &tracker, &ensemble, evaluations)];

    let t_initial = initial_temperature(&costs);
    let rate = cooling_rate(t_initial, cfg.t_final, cfg.cooling_steps());
    let mut t = t_initial;
    for iteration in 1..=cfg.cooling_steps() {
        let movers = if iteration > cfg.n_iterations { cfg.partial } else { cfg.ensemble_size };
        for k in 0..movers {
            let mut proposal = ensemble[k].clone();
            if m > 1 {
                let i = rng.gen_range(0..n);
                let shift = rng.gen_range(1..m);
                proposal[i] = (proposal[i] + shift) % m;
            }
            let c = tracker.cost(&proposal)?;
            evaluations += 1;
            if metropolis_accept(c - costs[k], t, rng.gen::<f64>()) {
                ensemble[k] = proposal;
                costs[k] = c;
            }
        }
        t *= rate;
        trajectory.push(record(iteration, &tracker, &ensemble, evaluations));
    }

    let echo = serde_json::to_value(cfg).expect("config serializes");
    let mut result = tracker.finish("sa", cfg.seed, echo);
    result.trajectory = trajectory;
    result.n_f = evaluations;
    result.final_population_size = cfg.ensemble_size;
    Ok(result)
}
