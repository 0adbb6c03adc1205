//! Two-site sweeping training of an MPS against the weighted negative log-likelihood
//! `L = -sum_x p(x) log P(x)` with `P(x) = Psi(x)^2 / Z`.
//!
//! Each update merges two neighbouring sites at the canonical center, takes one plain
//! gradient step on the merged tensor, and splits it again with a truncated SVD (block
//! SVD for symmetric models) so the center moves one site in the sweep direction.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::{apply_left, apply_right, dims3, Mps};
use crate::symmetric::SymmetricMps;
use crate::tensor::{contract, truncated_svd, DenseTensor};

/// Samples whose model probability falls below this are outside the model support.
pub const SUPPORT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_bond: usize,
    /// Full sweeps (left-to-right then right-to-left) per call to [`train`].
    pub epochs: usize,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, max_bond: usize, epochs: usize) -> Result<Self> {
        let cfg = Self { learning_rate, max_bond, epochs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_bond == 0 {
            return Err(Error::Config("max bond dimension must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Training pairs `(x, p(x))` with unique samples and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    samples: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl WeightedDataset {
    pub fn new(samples: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if samples.len() != weights.len() {
            return Err(Error::Input("one weight per sample required".into()));
        }
        if samples.is_empty() {
            return Err(Error::Input("empty dataset".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Input("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("weights sum to {total}, expected 1")));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.as_slice()) {
                return Err(Error::Input(format!("duplicate sample {s:?}")));
            }
        }
        Ok(Self { samples, weights })
    }

    /// Equal weight on each sample.
    pub fn uniform(samples: Vec<Vec<usize>>) -> Result<Self> {
        let n = samples.len().max(1);
        let w = vec![1.0 / n as f64; samples.len()];
        Self::new(samples, w)
    }

    pub fn samples(&self) -> &[Vec<usize>] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

/// A chain model that can be trained by two-site updates.
pub trait TwoSiteModel {
    fn mps(&self) -> &Mps;
    /// Brings the model into right-canonical form with unit norm.
    fn right_canonicalize(&mut self) -> Result<()>;
    /// Replaces sites `site, site + 1` by a factorization of `merged`; returns the
    /// truncation error. The canonical center ends on `site + 1` for
    /// [`Direction::LeftToRight`] and on `site` otherwise.
    fn split(&mut self, site: usize, merged: &DenseTensor, chi: usize, direction: Direction) -> Result<f64>;
}

impl TwoSiteModel for Mps {
    fn mps(&self) -> &Mps {
        self
    }

    fn right_canonicalize(&mut self) -> Result<()> {
        *self = Mps::right_canonicalize(self)?;
        Ok(())
    }

    fn split(&mut self, site: usize, merged: &DenseTensor, chi: usize, direction: Direction) -> Result<f64> {
        let s = merged.shape().to_vec();
        let (dl, d1, d2, dr) = (s[0], s[1], s[2], s[3]);
        let svd = truncated_svd(&merged.reshape(vec![dl * d1, d2 * dr])?, chi)?;
        let k = svd.kept();
        let sv = &svd.singular_values;
        let (left, right) = match direction {
            Direction::LeftToRight => (
                svd.u.reshape(vec![dl, d1, k])?,
                DenseTensor::from_fn(vec![k, d2, dr], |i| sv[i[0]] * svd.vt.get(&[i[0], i[1] * dr + i[2]])),
            ),
            Direction::RightToLeft => (
                DenseTensor::from_fn(vec![dl, d1, k], |i| svd.u.get(&[i[0] * d1 + i[1], i[2]]) * sv[i[2]]),
                svd.vt.reshape(vec![k, d2, dr])?,
            ),
        };
        self.set_tensor(site, left);
        self.set_tensor(site + 1, right);
        self.set_center(Some(match direction {
            Direction::LeftToRight => site + 1,
            Direction::RightToLeft => site,
        }));
        Ok(svd.truncation_error)
    }
}

impl TwoSiteModel for SymmetricMps {
    fn mps(&self) -> &Mps {
        SymmetricMps::mps(self)
    }

    fn right_canonicalize(&mut self) -> Result<()> {
        *self = self.right_canonicalized()?;
        Ok(())
    }

    fn split(&mut self, site: usize, merged: &DenseTensor, chi: usize, direction: Direction) -> Result<f64> {
        self.split_merged(site, merged, chi, direction == Direction::LeftToRight)
    }
}

/// `-sum_x p(x) log(Psi(x)^2 / Z)`.
pub fn nll_loss(m: &Mps, data: &WeightedDataset) -> Result<f64> {
    let z = m.norm_squared();
    if !(z > 0.0) {
        return Err(Error::Degenerate("MPS has zero norm".into()));
    }
    let mut loss = 0.0;
    for (x, &p) in data.samples.iter().zip(&data.weights) {
        let a = m.amplitude(x)?;
        let prob = a * a / z;
        if prob < SUPPORT_FLOOR {
            return Err(Error::Support { sample: x.clone(), probability: prob });
        }
        loss -= p * prob.ln();
    }
    Ok(loss)
}

/// Contracts sites `site` and `site + 1` into a `(left, d, d', right)` tensor.
pub fn merge(m: &Mps, site: usize) -> Result<DenseTensor> {
    if site + 1 >= m.len() {
        return Err(Error::Input(format!("no site pair starting at {site} in a {}-site chain", m.len())));
    }
    contract(m.tensor(site), &[2], m.tensor(site + 1), &[0])
}

/// Gradient of the NLL with respect to the merged tensor of sites `site, site + 1`.
///
/// Requires the canonical center on one of the two sites, so that `Z = |T|^2` and
/// `dZ/dT = 2T`; the result is `2T/Z - 2 sum_x p(x) Psi'(x) / Psi(x)`.
pub fn merged_gradient(m: &Mps, site: usize, data: &WeightedDataset) -> Result<DenseTensor> {
    match m.center() {
        Some(c) if c == site || c == site + 1 => {}
        other => {
            return Err(Error::Precondition(format!(
                "gradient at pair ({site}, {}) needs the canonical center there, found {other:?}",
                site + 1
            )))
        }
    }
    let merged = merge(m, site)?;
    let lefts: Vec<Vec<f64>> = data.samples.iter().map(|x| left_env(m, x, site)).collect();
    let rights: Vec<Vec<f64>> = data.samples.iter().map(|x| right_env(m, x, site + 2)).collect();
    gradient_from_envs(&merged, site, data, &lefts, &rights)
}

/// Row vector of sites `0..end` evaluated at `x`.
fn left_env(m: &Mps, x: &[usize], end: usize) -> Vec<f64> {
    let mut v = vec![1.0];
    for j in 0..end {
        v = apply_left(&v, m.tensor(j), x[j]);
    }
    v
}

/// Column vector of sites `start..L` evaluated at `x`.
fn right_env(m: &Mps, x: &[usize], start: usize) -> Vec<f64> {
    let mut v = vec![1.0];
    for j in (start..m.len()).rev() {
        v = apply_right(m.tensor(j), x[j], &v);
    }
    v
}

fn gradient_from_envs(
    merged: &DenseTensor,
    site: usize,
    data: &WeightedDataset,
    lefts: &[Vec<f64>],
    rights: &[Vec<f64>],
) -> Result<DenseTensor> {
    let s = merged.shape();
    let (dl, d1, d2, dr) = (s[0], s[1], s[2], s[3]);
    let z: f64 = merged.data().iter().map(|v| v * v).sum();
    if !(z > 0.0) {
        return Err(Error::Degenerate("merged tensor has zero norm".into()));
    }
    let mut grad = merged.scaled(2.0 / z);
    let md = merged.data();
    for (k, (x, &p)) in data.samples.iter().zip(&data.weights).enumerate() {
        if p == 0.0 {
            continue;
        }
        let (n1, n2) = (x[site], x[site + 1]);
        let (l, r) = (&lefts[k], &rights[k]);
        let mut psi = 0.0;
        for a in 0..dl {
            if l[a] == 0.0 {
                continue;
            }
            let base = ((a * d1 + n1) * d2 + n2) * dr;
            let row: f64 = md[base..base + dr].iter().zip(r).map(|(t, rv)| t * rv).sum();
            psi += l[a] * row;
        }
        if psi * psi / z < SUPPORT_FLOOR {
            return Err(Error::Support { sample: x.clone(), probability: psi * psi / z });
        }
        let coeff = 2.0 * p / psi;
        let gd = grad.data_mut();
        for a in 0..dl {
            if l[a] == 0.0 {
                continue;
            }
            let base = ((a * d1 + n1) * d2 + n2) * dr;
            let la = coeff * l[a];
            for (g, rv) in gd[base..base + dr].iter_mut().zip(r) {
                *g -= la * rv;
            }
        }
    }
    Ok(grad)
}

/// One merge / gradient step / split at pair `(site, site + 1)`.
///
/// Left-to-right expects the canonical center at `site`, right-to-left at `site + 1`.
pub fn two_site_update<M: TwoSiteModel>(
    model: &mut M,
    site: usize,
    direction: Direction,
    cfg: &TrainConfig,
    data: &WeightedDataset,
) -> Result<f64> {
    let expected = match direction {
        Direction::LeftToRight => site,
        Direction::RightToLeft => site + 1,
    };
    if model.mps().center() != Some(expected) {
        return Err(Error::Precondition(format!(
            "{direction:?} update at pair ({site}, {}) needs the center at {expected}, found {:?}",
            site + 1,
            model.mps().center()
        )));
    }
    let m = model.mps();
    let merged = merge(m, site)?;
    let lefts: Vec<Vec<f64>> = data.samples.iter().map(|x| left_env(m, x, site)).collect();
    let rights: Vec<Vec<f64>> = data.samples.iter().map(|x| right_env(m, x, site + 2)).collect();
    step_and_split(model, site, direction, cfg, data, merged, &lefts, &rights)
}

#[allow(clippy::too_many_arguments)]
fn step_and_split<M: TwoSiteModel>(
    model: &mut M,
    site: usize,
    direction: Direction,
    cfg: &TrainConfig,
    data: &WeightedDataset,
    merged: DenseTensor,
    lefts: &[Vec<f64>],
    rights: &[Vec<f64>],
) -> Result<f64> {
    let grad = gradient_from_envs(&merged, site, data, lefts, rights)?;
    let updated = merged.axpy(-cfg.learning_rate, &grad)?;
    let err = model.split(site, &updated, cfg.max_bond, direction)?;
    debug_assert!({
        let c = model.mps().center().expect("split sets the center");
        (model.mps().tensor(c).norm() - 1.0).abs() < 1e-8
    });
    Ok(err)
}

/// Statistics of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepStats {
    pub updates: usize,
    pub max_truncation_error: f64,
}

/// Right-canonicalize, then update every pair left to right and back again.
pub fn sweep<M: TwoSiteModel>(model: &mut M, cfg: &TrainConfig, data: &WeightedDataset) -> Result<SweepStats> {
    cfg.validate()?;
    model.right_canonicalize()?;
    let l = model.mps().len();
    let mut stats = SweepStats::default();
    if l < 2 {
        return Ok(stats);
    }
    for x in data.samples() {
        model.mps().check_config(x)?;
    }
    let n = data.len();

    // left to right: right environments are fixed for sites not yet visited
    let mut rights: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    for x in data.samples() {
        let m = model.mps();
        let mut envs = vec![Vec::new(); l + 1];
        envs[l] = vec![1.0];
        for j in (2..l).rev() {
            envs[j] = apply_right(m.tensor(j), x[j], &envs[j + 1]);
        }
        rights.push(envs);
    }
    let mut lefts: Vec<Vec<f64>> = vec![vec![1.0]; n];
    for site in 0..l - 1 {
        let merged = merge(model.mps(), site)?;
        let r: Vec<Vec<f64>> = rights.iter_mut().map(|e| std::mem::take(&mut e[site + 2])).collect();
        let err = step_and_split(model, site, Direction::LeftToRight, cfg, data, merged, &lefts, &r)?;
        stats.updates += 1;
        stats.max_truncation_error = stats.max_truncation_error.max(err);
        let t = model.mps().tensor(site);
        for (v, x) in lefts.iter_mut().zip(data.samples()) {
            *v = apply_left(v, t, x[site]);
        }
    }

    // right to left: left environments are fixed for sites not yet visited
    let mut lefts_all: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    for x in data.samples() {
        let m = model.mps();
        let mut envs = vec![Vec::new(); l];
        envs[0] = vec![1.0];
        for j in 0..l - 2 {
            envs[j + 1] = apply_left(&envs[j], m.tensor(j), x[j]);
        }
        lefts_all.push(envs);
    }
    let mut rights_running: Vec<Vec<f64>> = vec![vec![1.0]; n];
    for site in (0..l - 1).rev() {
        let merged = merge(model.mps(), site)?;
        let lv: Vec<Vec<f64>> = lefts_all.iter_mut().map(|e| std::mem::take(&mut e[site])).collect();
        let err = step_and_split(model, site, Direction::RightToLeft, cfg, data, merged, &lv, &rights_running)?;
        stats.updates += 1;
        stats.max_truncation_error = stats.max_truncation_error.max(err);
        let t = model.mps().tensor(site + 1);
        for (v, x) in rights_running.iter_mut().zip(data.samples()) {
            *v = apply_right(t, x[site + 1], v);
        }
    }
    Ok(stats)
}

/// `cfg.epochs` sweeps; returns the loss after training.
pub fn train<M: TwoSiteModel>(model: &mut M, cfg: &TrainConfig, data: &WeightedDataset) -> Result<f64> {
    for _ in 0..cfg.epochs {
        sweep(model, cfg, data)?;
    }
    nll_loss(model.mps(), data)
}

/// Shape of the merged tensor at a pair, for callers that build perturbations.
pub fn merged_shape(m: &Mps, site: usize) -> [usize; 4] {
    let (dl, d1, _) = dims3(m.tensor(site));
    let (_, d2, dr) = dims3(m.tensor(site + 1));
    [dl, d1, d2, dr]
}
