//! Generalized multi-knapsack: every object goes into exactly one knapsack, knapsack
//! loads are capped, and the total value is maximized. Costs are minimized, so the value
//! enters with a minus sign and overloads are penalized.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub n_objects: usize,
    pub n_knapsacks: usize,
    /// `values[i][j]`: value of object `i` when placed in knapsack `j`.
    pub values: Vec<Vec<u64>>,
    pub weights: Vec<u64>,
    pub capacities: Vec<u64>,
    pub known_optimal_cost: Option<f64>,
    pub seed: Option<u64>,
}

impl KnapsackInstance {
    pub fn new(values: Vec<Vec<u64>>, weights: Vec<u64>, capacities: Vec<u64>) -> Result<Self> {
        let inst = Self {
            n_objects: weights.len(),
            n_knapsacks: capacities.len(),
            values,
            weights,
            capacities,
            known_optimal_cost: None,
            seed: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects == 0 || self.n_knapsacks == 0 {
            return Err(Error::Input("instance needs at least one object and one knapsack".into()));
        }
        if self.weights.len() != self.n_objects || self.capacities.len() != self.n_knapsacks {
            return Err(Error::Shape("weights/capacities do not match the declared sizes".into()));
        }
        if self.values.len() != self.n_objects || self.values.iter().any(|r| r.len() != self.n_knapsacks) {
            return Err(Error::Shape(format!("values must be {}x{}", self.n_objects, self.n_knapsacks)));
        }
        if self.weights.contains(&0) {
            return Err(Error::Input("weights must be positive".into()));
        }
        if self.capacities.contains(&0) {
            return Err(Error::Input("capacities must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(s).map_err(|e| Error::Input(format!("instance json: {e}")))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Size of the assignment-respecting search space, `M^N`.
    pub fn search_space(&self) -> f64 {
        (self.n_knapsacks as f64).powi(self.n_objects as i32)
    }

    /// Number of binary sites, `N * M`.
    pub fn n_bits(&self) -> usize {
        self.n_objects * self.n_knapsacks
    }

    fn loads_integer(&self, y: &IntegerAssignment) -> Vec<u64> {
        let mut loads = vec![0u64; self.n_knapsacks];
        for (i, &j) in y.0.iter().enumerate() {
            loads[j] += self.weights[i];
        }
        loads
    }

    fn overload(&self, loads: &[u64]) -> f64 {
        loads.iter().zip(&self.capacities).map(|(&l, &c)| l.saturating_sub(c) as f64).sum()
    }

    fn check_integer(&self, y: &IntegerAssignment) -> Result<()> {
        if y.0.len() != self.n_objects || y.0.iter().any(|&j| j >= self.n_knapsacks) {
            return Err(Error::Input(format!("assignment {:?} does not fit a {}x{} instance", y.0, self.n_objects, self.n_knapsacks)));
        }
        Ok(())
    }

    fn check_binary(&self, x: &BinaryAssignment) -> Result<()> {
        if x.n_objects != self.n_objects || x.n_knapsacks != self.n_knapsacks {
            return Err(Error::Shape(format!(
                "binary assignment is {}x{}, instance is {}x{}",
                x.n_objects, x.n_knapsacks, self.n_objects, self.n_knapsacks
            )));
        }
        Ok(())
    }

    pub fn cost_integer(&self, y: &IntegerAssignment, pen: &PenaltyConfig) -> Result<f64> {
        self.check_integer(y)?;
        let value: u64 = y.0.iter().enumerate().map(|(i, &j)| self.values[i][j]).sum();
        Ok(pen.c_p * self.overload(&self.loads_integer(y)) - value as f64)
    }

    /// Binary cost. Rows that are not one-hot carry no equality penalty here: the
    /// assignment constraint is enforced by the model or the selection strategy.
    pub fn cost_binary(&self, x: &BinaryAssignment, pen: &PenaltyConfig) -> Result<f64> {
        self.check_binary(x)?;
        let mut loads = vec![0u64; self.n_knapsacks];
        let mut value = 0u64;
        for i in 0..self.n_objects {
            for j in 0..self.n_knapsacks {
                if x.get(i, j) {
                    loads[j] += self.weights[i];
                    value += self.values[i][j];
                }
            }
        }
        Ok(pen.c_p * self.overload(&loads) - value as f64)
    }

    pub fn feasibility_integer(&self, y: &IntegerAssignment) -> Result<Feasibility> {
        self.check_integer(y)?;
        let loads = self.loads_integer(y);
        Ok(Feasibility {
            equality_ok: true,
            inequality_ok: loads.iter().zip(&self.capacities).all(|(l, c)| l <= c),
        })
    }

    pub fn feasibility_binary(&self, x: &BinaryAssignment) -> Result<Feasibility> {
        self.check_binary(x)?;
        let mut loads = vec![0u64; self.n_knapsacks];
        let mut equality_ok = true;
        for i in 0..self.n_objects {
            let mut ones = 0;
            for j in 0..self.n_knapsacks {
                if x.get(i, j) {
                    ones += 1;
                    loads[j] += self.weights[i];
                }
            }
            equality_ok &= ones == 1;
        }
        Ok(Feasibility {
            equality_ok,
            inequality_ok: loads.iter().zip(&self.capacities).all(|(l, c)| l <= c),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    pub equality_ok: bool,
    pub inequality_ok: bool,
}

impl Feasibility {
    pub fn feasible(&self) -> bool {
        self.equality_ok && self.inequality_ok
    }
}

/// Knapsack index per object, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntegerAssignment(pub Vec<usize>);

impl IntegerAssignment {
    pub fn from_one_based(y: &[usize]) -> Result<Self> {
        if y.contains(&0) {
            return Err(Error::Input("one-based knapsack ids start at 1".into()));
        }
        Ok(Self(y.iter().map(|&j| j - 1).collect()))
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&j| j + 1).collect()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// `N x M` 0/1 matrix, flattened object-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryAssignment {
    n_objects: usize,
    n_knapsacks: usize,
    bits: Vec<u8>,
}

impl BinaryAssignment {
    pub fn zeros(n_objects: usize, n_knapsacks: usize) -> Self {
        Self { n_objects, n_knapsacks, bits: vec![0; n_objects * n_knapsacks] }
    }

    /// From a flattened configuration such as an MPS sample.
    pub fn from_bits(n_objects: usize, n_knapsacks: usize, bits: &[usize]) -> Result<Self> {
        if bits.len() != n_objects * n_knapsacks {
            return Err(Error::Shape(format!("{} bits for a {n_objects}x{n_knapsacks} matrix", bits.len())));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Input("binary entries must be 0 or 1".into()));
        }
        Ok(Self { n_objects, n_knapsacks, bits: bits.iter().map(|&b| b as u8).collect() })
    }

    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged binary matrix".into()));
        }
        Self::from_bits(rows.len(), m, &rows.concat())
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n_knapsacks + j] == 1
    }

    pub fn bits(&self) -> Vec<usize> {
        self.bits.iter().map(|&b| b as usize).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_objects, self.n_knapsacks)
    }
}

pub fn to_binary(y: &IntegerAssignment, n_knapsacks: usize) -> Result<BinaryAssignment> {
    if y.0.iter().any(|&j| j >= n_knapsacks) {
        return Err(Error::Input(format!("knapsack index out of range in {:?}", y.0)));
    }
    let mut x = BinaryAssignment::zeros(y.0.len(), n_knapsacks);
    for (i, &j) in y.0.iter().enumerate() {
        x.bits[i * n_knapsacks + j] = 1;
    }
    Ok(x)
}

pub fn to_integer(x: &BinaryAssignment) -> Result<IntegerAssignment> {
    let mut y = Vec::with_capacity(x.n_objects);
    for i in 0..x.n_objects {
        let row = &x.bits[i * x.n_knapsacks..(i + 1) * x.n_knapsacks];
        let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &b)| b == 1).map(|(j, _)| j).collect();
        match ones.as_slice() {
            [j] => y.push(*j),
            _ => return Err(Error::InfeasibleEncoding(format!("row {i} is not one-hot: {row:?}"))),
        }
    }
    Ok(IntegerAssignment(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub c_p: f64,
}

impl PenaltyConfig {
    pub fn new(c_p: f64) -> Result<Self> {
        if !(c_p > 0.0 && c_p.is_finite()) {
            return Err(Error::Config(format!("penalty must be positive, got {c_p}")));
        }
        Ok(Self { c_p })
    }

    /// `1 + sum_i max_j v_ij`: one unit of overload outweighs any attainable value.
    pub fn for_instance(inst: &KnapsackInstance) -> Self {
        let bound: u64 = inst.values.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
        Self { c_p: 1.0 + bound as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub value_range: RangeInclusive<u64>,
    pub weight_range: RangeInclusive<u64>,
    /// Capacity = witness load times a factor drawn from this range, rounded up.
    pub slack_range: (f64, f64),
    pub oracle_budget: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { value_range: 1..=100, weight_range: 1..=50, slack_range: (1.0, 1.3), oracle_budget: DEFAULT_ORACLE_BUDGET }
    }
}

/// Random instance with a hidden feasible witness, which is returned alongside.
pub fn generate_with_witness(
    n_objects: usize,
    n_knapsacks: usize,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(KnapsackInstance, IntegerAssignment)> {
    if n_objects == 0 || n_knapsacks == 0 {
        return Err(Error::Input("instance needs at least one object and one knapsack".into()));
    }
    if *cfg.value_range.start() > *cfg.value_range.end()
        || *cfg.weight_range.start() == 0
        || *cfg.weight_range.start() > *cfg.weight_range.end()
    {
        return Err(Error::Config("value/weight ranges must be non-empty, weights positive".into()));
    }
    let (lo, hi) = cfg.slack_range;
    if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Config(format!("slack range ({lo}, {hi}) must satisfy 1 <= lo <= hi")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<Vec<u64>> = (0..n_objects)
        .map(|_| (0..n_knapsacks).map(|_| rng.gen_range(cfg.value_range.clone())).collect())
        .collect();
    let weights: Vec<u64> = (0..n_objects).map(|_| rng.gen_range(cfg.weight_range.clone())).collect();
    let witness = IntegerAssignment((0..n_objects).map(|_| rng.gen_range(0..n_knapsacks)).collect());
    let mut loads = vec![0u64; n_knapsacks];
    for (i, &j) in witness.0.iter().enumerate() {
        loads[j] += weights[i];
    }
    let capacities = loads
        .iter()
        .map(|&l| {
            let slack = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            ((l as f64 * slack).ceil() as u64).max(l).max(1)
        })
        .collect();
    let mut inst = KnapsackInstance::new(values, weights, capacities)?;
    inst.seed = Some(seed);
    if inst.search_space() <= cfg.oracle_budget as f64 {
        let (_, cost) = brute_force_solve(&inst, &PenaltyConfig::for_instance(&inst), cfg.oracle_budget)?;
        inst.known_optimal_cost = Some(cost);
    }
    Ok((inst, witness))
}

pub fn generate_instance(n_objects: usize, n_knapsacks: usize, cfg: &GeneratorConfig, seed: u64) -> Result<KnapsackInstance> {
    generate_with_witness(n_objects, n_knapsacks, cfg, seed).map(|(inst, _)| inst)
}

/// Exhaustive minimum over all `M^N` assignments; ties go to the lexicographically
/// smallest assignment.
pub fn brute_force_solve(inst: &KnapsackInstance, pen: &PenaltyConfig, budget: u64) -> Result<(IntegerAssignment, f64)> {
    inst.validate()?;
    let size = inst.search_space();
    if size > budget as f64 {
        return Err(Error::BudgetExceeded { size, budget });
    }
    let (n, m) = (inst.n_objects, inst.n_knapsacks);
    // split on the first object; each worker walks its block in lexicographic order
    let best = (0..m)
        .into_par_iter()
        .map(|first| {
            let mut y = vec![0usize; n];
            y[0] = first;
            let mut loads = vec![0u64; m];
            let mut value = 0u64;
            for (i, &j) in y.iter().enumerate() {
                loads[j] += inst.weights[i];
                value += inst.values[i][j];
            }
            let mut best_y = y.clone();
            let mut best_cost = pen.c_p * inst.overload(&loads) - value as f64;
            loop {
                // odometer over objects 1..n, last object fastest
                let mut i = n;
                loop {
                    if i == 1 {
                        return (best_y, best_cost);
                    }
                    i -= 1;
                    let old = y[i];
                    loads[old] -= inst.weights[i];
                    value -= inst.values[i][old];
                    if old + 1 < m {
                        y[i] = old + 1;
                        loads[old + 1] += inst.weights[i];
                        value += inst.values[i][old + 1];
                        break;
                    }
                    y[i] = 0;
                    loads[0] += inst.weights[i];
                    value += inst.values[i][0];
                }
                let cost = pen.c_p * inst.overload(&loads) - value as f64;
                if cost < best_cost {
                    best_cost = cost;
                    best_y.copy_from_slice(&y);
                }
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("at least one knapsack");
    Ok((IntegerAssignment(best.0), best.1))
}

/// Orderings applied by [`sort_heuristic`]; entry `k` is the original index of the
/// object (knapsack) now at position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutations {
    pub objects: Vec<usize>,
    pub knapsacks: Vec<usize>,
}

impl Permutations {
    /// Maps an assignment of the sorted instance back to the original labelling.
    pub fn unsort(&self, y: &IntegerAssignment) -> IntegerAssignment {
        let mut out = vec![0; y.0.len()];
        for (k, &j) in y.0.iter().enumerate() {
            out[self.objects[k]] = self.knapsacks[j];
        }
        IntegerAssignment(out)
    }
}

/// Objects by non-increasing weight, knapsacks by non-increasing capacity (both stable).
pub fn sort_heuristic(inst: &KnapsackInstance) -> (KnapsackInstance, Permutations) {
    let mut objects: Vec<usize> = (0..inst.n_objects).collect();
    objects.sort_by(|&a, &b| inst.weights[b].cmp(&inst.weights[a]));
    let mut knapsacks: Vec<usize> = (0..inst.n_knapsacks).collect();
    knapsacks.sort_by(|&a, &b| inst.capacities[b].cmp(&inst.capacities[a]));
    let sorted = KnapsackInstance {
        values: objects.iter().map(|&i| knapsacks.iter().map(|&j| inst.values[i][j]).collect()).collect(),
        weights: objects.iter().map(|&i| inst.weights[i]).collect(),
        capacities: knapsacks.iter().map(|&j| inst.capacities[j]).collect(),
        ..inst.clone()
    };
    (sorted, Permutations { objects, knapsacks })
}
