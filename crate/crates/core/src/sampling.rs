//! Exact autoregressive sampling from a right-canonical MPS.
//!
//! In right-canonical form everything to the right of a site contracts to the identity,
//! so the marginal of the next site given the prefix is just the squared norm of the
//! projected partial state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::{apply_left, Mps};

/// Conditional weights this far below zero are roundoff and get clamped.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleBatch {
    pub configs: Vec<Vec<usize>>,
    pub log_probs: Option<Vec<f64>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Per-draw generator: the batch seed picks the key, the draw index picks the stream.
pub fn draw_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// One exact draw, returning the configuration and its log-probability.
///
/// The MPS must be right-canonical (center at site 0); use [`sample_batch`] to have
/// that done automatically.
pub fn perfect_sample(m: &Mps, rng: &mut impl Rng) -> Result<(Vec<usize>, f64)> {
    if m.center() != Some(0) {
        return Err(Error::Precondition(format!(
            "perfect sampling needs a right-canonical MPS, center is {:?}",
            m.center()
        )));
    }
    let mut partial = vec![1.0];
    let mut config = Vec::with_capacity(m.len());
    let mut log_prob = 0.0;
    let mut weights = Vec::new();
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for (site, t) in m.tensors().iter().enumerate() {
        let d = t.shape()[1];
        weights.clear();
        candidates.clear();
        for n in 0..d {
            let v = apply_left(&partial, t, n);
            let w: f64 = v.iter().map(|x| x * x).sum();
            weights.push(w);
            candidates.push(v);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate(format!("all conditional weights vanish at site {site}")));
        }
        for w in weights.iter_mut() {
            if *w < 0.0 {
                if *w < -CLAMP_TOL {
                    return Err(Error::Numeric(format!("negative conditional weight {w:e} at site {site}")));
                }
                *w = 0.0;
            }
        }
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (n, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                pick = Some(n);
                acc += w;
                if u < acc {
                    break;
                }
            }
        }
        let n = pick.expect("positive total implies a positive weight");
        log_prob += (weights[n] / total).ln();
        partial = std::mem::take(&mut candidates[n]);
        config.push(n);
    }
    Ok((config, log_prob))
}

/// `n` independent draws; draw `k` uses stream `k` of `seed`, so results do not depend on
/// how the draws are scheduled.
pub fn sample_batch(m: &Mps, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Ok(SampleBatch { configs: Vec::new(), log_probs: Some(Vec::new()) });
    }
    let canon;
    let m = if m.center() == Some(0) {
        m
    } else {
        canon = m.right_canonicalize()?;
        &canon
    };
    let draws: Vec<(Vec<usize>, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|k| perfect_sample(m, &mut draw_rng(seed, k)))
        .collect::<Result<_>>()?;
    let (configs, log_probs) = draws.into_iter().unzip();
    Ok(SampleBatch { configs, log_probs: Some(log_probs) })
}
