//! The generative-enhanced optimization loop: sample, cost, select, weight, train, repeat.

use std::collections::{HashMap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dmrg::{nll_loss, sweep, TrainConfig, TwoSiteModel, WeightedDataset};
use crate::error::{Error, Result};
use crate::knapsack::{to_integer, BinaryAssignment, IntegerAssignment, KnapsackInstance, PenaltyConfig};
use crate::mps::Mps;
use crate::sampling::sample_batch;
use crate::symmetric::SymmetricMps;

pub const DEFAULT_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// `N * M` sites of dimension 2 on the symmetric assignment MPS.
    Binary,
    /// `N` sites of dimension `M` on an unconstrained random MPS.
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    Best,
    Symmetric,
    BestSymmetric,
}

impl Selection {
    pub const ALL: [Selection; 4] = [Selection::All, Selection::Best, Selection::Symmetric, Selection::BestSymmetric];

    pub fn name(&self) -> &'static str {
        match self {
            Selection::All => "all",
            Selection::Best => "best",
            Selection::Symmetric => "symmetric",
            Selection::BestSymmetric => "best_symmetric",
        }
    }
}

/// Unique configurations with their costs, in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub encoding: Encoding,
    entries: Vec<(Vec<usize>, f64)>,
}

impl Population {
    pub fn new(encoding: Encoding) -> Self {
        Self { encoding, entries: Vec::new() }
    }

    pub fn from_entries(encoding: Encoding, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut p = Self::new(encoding);
        for (x, c) in entries {
            if !p.insert(x.clone(), c) {
                return Err(Error::Input(format!("duplicate configuration {x:?}")));
            }
        }
        Ok(p)
    }

    /// Adds `x` unless present; returns whether it was new.
    pub fn insert(&mut self, x: Vec<usize>, cost: f64) -> bool {
        if self.entries.iter().any(|(y, _)| *y == x) {
            return false;
        }
        self.entries.push((x, cost));
        true
    }

    /// Appends the configurations not already present.
    pub fn merge(&mut self, batch: impl IntoIterator<Item = (Vec<usize>, f64)>) {
        let mut seen: HashSet<Vec<usize>> = self.entries.iter().map(|(x, _)| x.clone()).collect();
        for (x, c) in batch {
            if seen.insert(x.clone()) {
                self.entries.push((x, c));
            }
        }
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, c)| *c).collect()
    }

    pub fn configs(&self) -> Vec<Vec<usize>> {
        self.entries.iter().map(|(x, _)| x.clone()).collect()
    }
}

/// Whether a configuration satisfies the one-object-one-knapsack constraint.
pub fn equality_feasible(inst: &KnapsackInstance, encoding: Encoding, x: &[usize]) -> bool {
    match encoding {
        Encoding::Integer => x.len() == inst.n_objects && x.iter().all(|&j| j < inst.n_knapsacks),
        Encoding::Binary => {
            x.len() == inst.n_bits() && x.chunks(inst.n_knapsacks).all(|row| row.iter().sum::<usize>() == 1)
        }
    }
}

/// Full feasibility (assignment and capacity constraints).
pub fn feasible(inst: &KnapsackInstance, encoding: Encoding, x: &[usize]) -> bool {
    let f = match encoding {
        Encoding::Integer => inst.feasibility_integer(&IntegerAssignment(x.to_vec())),
        Encoding::Binary => BinaryAssignment::from_bits(inst.n_objects, inst.n_knapsacks, x)
            .and_then(|b| inst.feasibility_binary(&b)),
    };
    f.map(|f| f.feasible()).unwrap_or(false)
}

pub fn config_cost(inst: &KnapsackInstance, encoding: Encoding, pen: &PenaltyConfig, x: &[usize]) -> Result<f64> {
    match encoding {
        Encoding::Integer => inst.cost_integer(&IntegerAssignment(x.to_vec()), pen),
        Encoding::Binary => inst.cost_binary(&BinaryAssignment::from_bits(inst.n_objects, inst.n_knapsacks, x)?, pen),
    }
}

/// `p_k = exp(-beta (c_k - min c)) / sum`, the shift-stabilized Boltzmann weights.
pub fn softmax_weights(costs: &[f64], beta: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = costs.iter().map(|&c| (-beta * (c - min)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Applies a selection strategy. `capacity` bounds the best-type strategies; cost ties at
/// the cutoff go to the lexicographically smaller configuration.
pub fn select(pop: &Population, strategy: Selection, capacity: usize, inst: &KnapsackInstance) -> Result<Population> {
    let mut entries: Vec<(Vec<usize>, f64)> = pop.entries.clone();
    if matches!(strategy, Selection::Symmetric | Selection::BestSymmetric) {
        entries.retain(|(x, _)| equality_feasible(inst, pop.encoding, x));
        if entries.is_empty() {
            return Err(Error::EmptySelection(strategy.name().into()));
        }
    }
    if matches!(strategy, Selection::Best | Selection::BestSymmetric) && entries.len() > capacity {
        entries.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(capacity);
    }
    Ok(Population { encoding: pop.encoding, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoConfig {
    pub beta: f64,
    pub train: TrainConfig,
    pub n_samples: usize,
    pub selection: Selection,
    pub max_iterations: usize,
    pub encoding: Encoding,
    /// `None` uses [`PenaltyConfig::for_instance`].
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    pub seed: u64,
}

impl GeoConfig {
    /// Defaults: `beta = 0.01`, `alpha = 1e-3`, `chi = 8`, one epoch, `N_s = 10 M N`.
    pub fn for_instance(inst: &KnapsackInstance, encoding: Encoding, seed: u64) -> Self {
        Self {
            beta: 0.01,
            train: TrainConfig { learning_rate: 1e-3, max_bond: 8, epochs: 1 },
            n_samples: 10 * inst.n_objects * inst.n_knapsacks,
            selection: Selection::All,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            encoding,
            penalty: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("need at least one sample per iteration".into()));
        }
        if let Some(p) = self.penalty {
            PenaltyConfig::new(p.c_p)?;
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Best cost seen so far.
    pub best_cost: f64,
    /// Fully feasible configurations among this iteration's samples.
    pub n_valid_sampled: usize,
    /// Samples breaking the assignment constraint.
    pub n_equality_violations: usize,
    /// Training loss after this iteration's sweeps; absent for the initial draw.
    pub loss: Option<f64>,
    pub n_f: usize,
    /// Largest charge-forbidden entry of the model (binary encoding only).
    pub symmetry_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub penalty: f64,
    pub trajectory: Vec<IterationRecord>,
    pub best_cost: Option<f64>,
    /// Raw best configuration in the method's encoding.
    pub best_config: Option<Vec<usize>>,
    /// Best assignment as 1-based knapsack ids, when it decodes.
    pub best_assignment: Option<Vec<usize>>,
    pub valid: bool,
    /// Unique cost evaluations.
    pub n_f: usize,
    pub final_population_size: usize,
    pub optimal_cost: Option<f64>,
    pub status: RunStatus,
    pub error: Option<String>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }
}

/// Independent 64-bit seed for a sub-task, derived from the run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.wrapping_add(1 << 32));
    rng.next_u64()
}

/// Tracks unique cost evaluations and the best configuration seen.
pub(crate) struct CostTracker<'a> {
    inst: &'a KnapsackInstance,
    encoding: Encoding,
    pen: PenaltyConfig,
    cache: HashMap<Vec<usize>, f64>,
    pub best: Option<(Vec<usize>, f64)>,
}

impl<'a> CostTracker<'a> {
    pub fn new(inst: &'a KnapsackInstance, encoding: Encoding, pen: PenaltyConfig) -> Self {
        Self { inst, encoding, pen, cache: HashMap::new(), best: None }
    }

    pub fn cost(&mut self, x: &[usize]) -> Result<f64> {
        if let Some(&c) = self.cache.get(x) {
            return Ok(c);
        }
        let c = config_cost(self.inst, self.encoding, &self.pen, x)?;
        self.cache.insert(x.to_vec(), c);
        let better = match &self.best {
            None => true,
            Some((bx, bc)) => c < *bc || (c == *bc && x < bx.as_slice()),
        };
        if better {
            self.best = Some((x.to_vec(), c));
        }
        Ok(c)
    }

    pub fn n_f(&self) -> usize {
        self.cache.len()
    }

    pub fn best_cost(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.1)
    }

    pub fn finish(&self, method: &str, seed: u64, config: serde_json::Value) -> RunResult {
        let (best_config, best_cost) = match &self.best {
            Some((x, c)) => (Some(x.clone()), Some(*c)),
            None => (None, None),
        };
        let best_assignment = best_config.as_ref().and_then(|x| match self.encoding {
            Encoding::Integer => Some(IntegerAssignment(x.clone()).one_based()),
            Encoding::Binary => BinaryAssignment::from_bits(self.inst.n_objects, self.inst.n_knapsacks, x)
                .and_then(|b| to_integer(&b))
                .ok()
                .map(|y| y.one_based()),
        });
        let valid = best_config.as_ref().is_some_and(|x| feasible(self.inst, self.encoding, x));
        RunResult {
            method: method.into(),
            seed,
            config,
            penalty: self.pen.c_p,
            trajectory: Vec::new(),
            best_cost,
            best_config,
            best_assignment,
            valid,
            n_f: self.n_f(),
            final_population_size: 0,
            optimal_cost: self.inst.known_optimal_cost,
            status: RunStatus::Completed,
            error: None,
        }
    }
}

enum Model {
    Symmetric(SymmetricMps),
    Plain(Mps),
}

impl Model {
    fn mps(&self) -> &Mps {
        match self {
            Model::Symmetric(s) => s.mps(),
            Model::Plain(m) => m,
        }
    }

    fn sweep(&mut self, cfg: &TrainConfig, data: &WeightedDataset) -> Result<()> {
        match self {
            Model::Symmetric(s) => sweep(s, cfg, data).map(|_| ()),
            Model::Plain(m) => sweep(m, cfg, data).map(|_| ()),
        }
    }

    fn symmetry_defect(&self) -> Option<f64> {
        match self {
            Model::Symmetric(s) => Some(s.symmetry_defect()),
            Model::Plain(_) => None,
        }
    }

    fn canonicalize(&mut self) -> Result<()> {
        match self {
            Model::Symmetric(s) => TwoSiteModel::right_canonicalize(s),
            Model::Plain(m) => TwoSiteModel::right_canonicalize(m),
        }
    }
}

/// Initial model for an encoding: uniform over feasible strings (binary) or a random
/// right-canonical MPS with `d = M` (integer).
pub fn initial_model(inst: &KnapsackInstance, cfg: &GeoConfig) -> Result<Mps> {
    init_model(inst, cfg).map(|m| m.mps().clone())
}

fn init_model(inst: &KnapsackInstance, cfg: &GeoConfig) -> Result<Model> {
    match cfg.encoding {
        Encoding::Binary => Ok(Model::Symmetric(SymmetricMps::build_assignment(inst.n_objects, inst.n_knapsacks)?)),
        Encoding::Integer => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
            let m = Mps::random(inst.n_objects, inst.n_knapsacks, cfg.train.max_bond, &mut rng)?;
            let mut model = Model::Plain(m);
            model.canonicalize()?;
            Ok(model)
        }
    }
}

/// Runs GEO; only an invalid instance or configuration is an `Err`. Failures during the
/// loop end the run early with `status = failed` and the partial trajectory.
pub fn geo_run(inst: &KnapsackInstance, cfg: &GeoConfig) -> Result<RunResult> {
    geo_run_with_model(inst, cfg).map(|(r, _)| r)
}

/// [`geo_run`] that also hands back the final model.
pub fn geo_run_with_model(inst: &KnapsackInstance, cfg: &GeoConfig) -> Result<(RunResult, Mps)> {
    inst.validate()?;
    cfg.validate()?;
    if cfg.encoding == Encoding::Binary && inst.n_knapsacks < 2 {
        return Err(Error::Config("binary encoding needs at least two knapsacks".into()));
    }
    let pen = cfg.penalty.unwrap_or_else(|| PenaltyConfig::for_instance(inst));
    let mut tracker = CostTracker::new(inst, cfg.encoding, pen);
    let mut trajectory = Vec::new();
    let mut population = Population::new(cfg.encoding);
    let mut model = init_model(inst, cfg)?;

    let outcome = run_loop(inst, cfg, &mut model, &mut tracker, &mut population, &mut trajectory);
    let method = match cfg.encoding {
        Encoding::Binary => "geo_binary",
        Encoding::Integer => "geo_integer",
    };
    let echo = serde_json::to_value(cfg).expect("config serializes");
    let mut result = tracker.finish(method, cfg.seed, echo);
    result.trajectory = trajectory;
    result.final_population_size = population.len();
    if let Err(e) = outcome {
        result.status = RunStatus::Failed;
        result.error = Some(e.to_string());
    }
    Ok((result, model.mps().clone()))
}

fn run_loop(
    inst: &KnapsackInstance,
    cfg: &GeoConfig,
    model: &mut Model,
    tracker: &mut CostTracker,
    population: &mut Population,
    trajectory: &mut Vec<IterationRecord>,
) -> Result<()> {
    let draw = |model: &Model, tracker: &mut CostTracker, iteration: usize| -> Result<(Vec<(Vec<usize>, f64)>, usize, usize)> {
        let batch = sample_batch(model.mps(), cfg.n_samples, derive_seed(cfg.seed, iteration as u64))?;
        let mut costed = Vec::with_capacity(batch.len());
        let (mut n_valid, mut n_eq_bad) = (0, 0);
        for x in batch.configs {
            if !equality_feasible(inst, cfg.encoding, &x) {
                n_eq_bad += 1;
            } else if feasible(inst, cfg.encoding, &x) {
                n_valid += 1;
            }
            let c = tracker.cost(&x)?;
            costed.push((x, c));
        }
        Ok((costed, n_valid, n_eq_bad))
    };

    let (initial, n_valid, n_eq_bad) = draw(model, tracker, 0)?;
    population.merge(initial);
    let capacity = population.len();
    trajectory.push(IterationRecord {
        iteration: 0,
        best_cost: tracker.best_cost(),
        n_valid_sampled: n_valid,
        n_equality_violations: n_eq_bad,
        loss: None,
        n_f: tracker.n_f(),
        symmetry_defect: model.symmetry_defect(),
    });

    for iteration in 1..=cfg.max_iterations {
        *population = select(population, cfg.selection, capacity, inst)?;
        let weights = softmax_weights(&population.costs(), cfg.beta);
        let data = WeightedDataset::new(population.configs(), weights)?;
        for _ in 0..cfg.train.epochs {
            model.sweep(&cfg.train, &data)?;
        }
        let loss = nll_loss(model.mps(), &data)?;
        let (fresh, n_valid, n_eq_bad) = draw(model, tracker, iteration)?;
        population.merge(fresh);
        trajectory.push(IterationRecord {
            iteration,
            best_cost: tracker.best_cost(),
            n_valid_sampled: n_valid,
            n_equality_violations: n_eq_bad,
            loss: Some(loss),
            n_f: tracker.n_f(),
            symmetry_defect: model.symmetry_defect(),
        });
    }
    Ok(())
}

/// Validity rate and mean reward ratio over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub v: f64,
    /// Absent when no run found a valid solution.
    pub r: Option<f64>,
}

/// `V` = share of runs whose best assignment is feasible; `R` = mean over those runs of
/// best value / optimal value (costs are negated values).
pub fn metrics(results: &[RunResult], inst: &KnapsackInstance) -> Result<Metrics> {
    let opt = inst
        .known_optimal_cost
        .ok_or_else(|| Error::Precondition("metrics need a known optimal cost".into()))?;
    if results.is_empty() {
        return Err(Error::Input("no runs to summarize".into()));
    }
    let valid: Vec<f64> = results.iter().filter(|r| r.valid).filter_map(|r| r.best_cost).collect();
    let v = valid.len() as f64 / results.len() as f64;
    let r = if valid.is_empty() || opt == 0.0 {
        None
    } else {
        Some(valid.iter().map(|c| c / opt).sum::<f64>() / valid.len() as f64)
    };
    Ok(Metrics { v, r })
}
