//! Matrix product states over real scalars.
//!
//! Site `j` holds a tensor of shape `(left_bond, d_j, right_bond)`. The two boundary
//! bonds are explicit dimension-1 legs, so every site has three legs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{contract, qr, truncated_svd, DenseTensor};

/// How [`Mps::right_canonicalize_with`] factors each site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Canonicalization {
    /// Pairwise contraction of neighbours followed by an SVD, from the last site
    /// towards the first.
    #[default]
    Svd,
    /// Single-site QR sweep; never truncates.
    Qr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    tensors: Vec<DenseTensor>,
    center: Option<usize>,
}

impl Mps {
    pub fn new(tensors: Vec<DenseTensor>) -> Result<Self> {
        validate_chain(&tensors)?;
        Ok(Self { tensors, center: None })
    }

    /// One-hot product state `|config>`.
    pub fn product_state(config: &[usize], physical_dims: &[usize]) -> Result<Self> {
        if config.len() != physical_dims.len() || config.is_empty() {
            return Err(Error::Input("config and physical dims must be non-empty and equally long".into()));
        }
        let tensors = config
            .iter()
            .zip(physical_dims)
            .map(|(&n, &d)| {
                if n >= d {
                    return Err(Error::Input(format!("physical index {n} out of range 0..{d}")));
                }
                Ok(DenseTensor::from_fn(vec![1, d, 1], |i| if i[1] == n { 1.0 } else { 0.0 }))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::new(tensors)?;
        m.center = Some(0);
        Ok(m)
    }

    /// Bond-dimension-1 state with every entry equal to one (unnormalized uniform state).
    pub fn all_ones(n_sites: usize, d: usize) -> Result<Self> {
        if n_sites == 0 || d == 0 {
            return Err(Error::Input("need at least one site of positive dimension".into()));
        }
        Self::new((0..n_sites).map(|_| DenseTensor::from_fn(vec![1, d, 1], |_| 1.0)).collect())
    }

    /// Entries uniform on `[0, 1)`, bond `j` sized `min(chi, d^j, d^(L-j))`. Not canonical.
    pub fn random(n_sites: usize, d: usize, chi: usize, rng: &mut impl Rng) -> Result<Self> {
        if n_sites == 0 || d == 0 || chi == 0 {
            return Err(Error::Input("need positive sites, physical dimension and chi".into()));
        }
        let bonds: Vec<usize> = (0..=n_sites)
            .map(|j| exact_bond_bound(d, j.min(n_sites - j)).min(chi))
            .collect();
        let tensors = (0..n_sites)
            .map(|j| DenseTensor::from_fn(vec![bonds[j], d, bonds[j + 1]], |_| rng.gen::<f64>()))
            .collect();
        Self::new(tensors)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn tensor(&self, site: usize) -> &DenseTensor {
        &self.tensors[site]
    }

    pub(crate) fn set_tensor(&mut self, site: usize, t: DenseTensor) {
        self.tensors[site] = t;
    }

    /// Replaces a site tensor and forgets the canonical center.
    pub fn replace_tensor(&mut self, site: usize, t: DenseTensor) -> Result<()> {
        let old = self.tensors[site].shape().to_vec();
        if t.rank() != 3 || t.shape() != old.as_slice() {
            return Err(Error::Shape(format!("site {site} expects shape {old:?}, got {:?}", t.shape())));
        }
        self.tensors[site] = t;
        self.center = None;
        Ok(())
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub(crate) fn set_center(&mut self, c: Option<usize>) {
        self.center = c;
    }

    pub fn physical_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.shape()[1]).collect()
    }

    /// All `L + 1` bond dimensions including the two boundary bonds of size one.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.tensors.iter().map(|t| t.shape()[0]).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub(crate) fn check_config(&self, config: &[usize]) -> Result<()> {
        if config.len() != self.len() {
            return Err(Error::Input(format!(
                "configuration has {} entries, the MPS has {} sites",
                config.len(),
                self.len()
            )));
        }
        for (j, (&n, t)) in config.iter().zip(&self.tensors).enumerate() {
            if n >= t.shape()[1] {
                return Err(Error::Input(format!(
                    "physical index {n} at site {j} out of range 0..{}",
                    t.shape()[1]
                )));
            }
        }
        Ok(())
    }

    /// `Psi(config)`: the chain product of the selected site matrices.
    pub fn amplitude(&self, config: &[usize]) -> Result<f64> {
        self.check_config(config)?;
        let mut v = vec![1.0];
        for (t, &n) in self.tensors.iter().zip(config) {
            v = apply_left(&v, t, n);
        }
        Ok(v[0])
    }

    /// `Z = sum_x Psi(x)^2` by transfer-matrix contraction.
    pub fn norm_squared(&self) -> f64 {
        let mut env = vec![1.0];
        let mut dim = 1;
        for t in &self.tensors {
            let (dl, d, dr) = dims3(t);
            debug_assert_eq!(dl, dim);
            let data = t.data();
            let mut next = vec![0.0; dr * dr];
            for n in 0..d {
                // tmp[a', b] = sum_a env[a, a'] T[a, n, b]
                let mut tmp = vec![0.0; dl * dr];
                for a in 0..dl {
                    for a2 in 0..dl {
                        let e = env[a * dl + a2];
                        if e == 0.0 {
                            continue;
                        }
                        let row = &data[(a * d + n) * dr..(a * d + n + 1) * dr];
                        for b in 0..dr {
                            tmp[a2 * dr + b] += e * row[b];
                        }
                    }
                }
                for a2 in 0..dl {
                    let row = &data[(a2 * d + n) * dr..(a2 * d + n + 1) * dr];
                    for b in 0..dr {
                        let x = tmp[a2 * dr + b];
                        if x == 0.0 {
                            continue;
                        }
                        for b2 in 0..dr {
                            next[b * dr + b2] += x * row[b2];
                        }
                    }
                }
            }
            env = next;
            dim = dr;
        }
        env[0]
    }

    /// `|Psi(config)|^2 / Z`.
    pub fn probability(&self, config: &[usize]) -> Result<f64> {
        let z = self.norm_squared();
        if z <= 0.0 {
            return Err(Error::Degenerate("MPS has zero norm".into()));
        }
        let a = self.amplitude(config)?;
        Ok(a * a / z)
    }

    pub fn right_canonicalize(&self) -> Result<Mps> {
        self.right_canonicalize_with(Canonicalization::Svd)
    }

    /// Returns the same state, normalized, with every site but the first a right
    /// isometry (canonical center at site 0).
    pub fn right_canonicalize_with(&self, method: Canonicalization) -> Result<Mps> {
        let mut tensors = self.tensors.clone();
        let l = tensors.len();
        match method {
            Canonicalization::Svd => {
                for j in (1..l).rev() {
                    let (left, right) = split_pair_right(&tensors[j - 1], &tensors[j])?;
                    tensors[j - 1] = left;
                    tensors[j] = right;
                }
            }
            Canonicalization::Qr => {
                for j in (1..l).rev() {
                    let (dl, d, dr) = dims3(&tensors[j]);
                    let m = tensors[j].reshape(vec![dl, d * dr])?;
                    let (q, r) = qr(&m.transpose()?)?;
                    let k = q.shape()[1];
                    tensors[j] = q.transpose()?.reshape(vec![k, d, dr])?;
                    // absorb R^T into the left neighbour
                    tensors[j - 1] = contract(&tensors[j - 1], &[2], &r, &[1])?;
                }
            }
        }
        let norm = tensors[0].norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Degenerate("cannot canonicalize a zero-norm MPS".into()));
        }
        tensors[0].scale_in_place(1.0 / norm);
        Ok(Mps { tensors, center: Some(0) })
    }

    /// Max deviation of `sum_{n, r} T[a, n, r] T[a', n, r]` from the identity.
    pub fn right_isometry_defect(&self, site: usize) -> f64 {
        let t = &self.tensors[site];
        let g = contract(t, &[1, 2], t, &[1, 2]).expect("same tensor");
        g.max_abs_diff(&DenseTensor::identity(g.shape()[0]))
    }

    /// Max deviation of `sum_{a, n} T[a, n, r] T[a, n, r']` from the identity.
    pub fn left_isometry_defect(&self, site: usize) -> f64 {
        let t = &self.tensors[site];
        let g = contract(t, &[0, 1], t, &[0, 1]).expect("same tensor");
        g.max_abs_diff(&DenseTensor::identity(g.shape()[0]))
    }

    /// Largest violation of the mixed-canonical conditions around the recorded center,
    /// including `|Z - 1|`. `None` when no center is recorded.
    pub fn canonical_defect(&self) -> Option<f64> {
        let c = self.center?;
        let mut worst = (self.norm_squared() - 1.0).abs();
        for j in 0..c {
            worst = worst.max(self.left_isometry_defect(j));
        }
        for j in c + 1..self.len() {
            worst = worst.max(self.right_isometry_defect(j));
        }
        Some(worst)
    }

    pub fn to_checkpoint(&self) -> MpsCheckpoint {
        MpsCheckpoint {
            physical_dims: self.physical_dims(),
            bond_dims: self.bond_dims(),
            tensors: self.tensors.iter().map(|t| t.data().to_vec()).collect(),
            canonical_center: self.center,
        }
    }

    pub fn from_checkpoint(c: &MpsCheckpoint) -> Result<Self> {
        let l = c.physical_dims.len();
        if c.bond_dims.len() != l + 1 || c.tensors.len() != l {
            return Err(Error::Input("checkpoint dims do not describe a chain".into()));
        }
        let tensors = (0..l)
            .map(|j| {
                DenseTensor::new(
                    vec![c.bond_dims[j], c.physical_dims[j], c.bond_dims[j + 1]],
                    c.tensors[j].clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::new(tensors)?;
        if let Some(center) = c.canonical_center {
            if center >= l {
                return Err(Error::Input(format!("canonical center {center} out of range")));
            }
        }
        m.center = c.canonical_center;
        Ok(m)
    }
}

/// JSON checkpoint layout for a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsCheckpoint {
    pub physical_dims: Vec<usize>,
    pub bond_dims: Vec<usize>,
    /// Row-major `(left, physical, right)` data per site.
    pub tensors: Vec<Vec<f64>>,
    #[serde(default)]
    pub canonical_center: Option<usize>,
}

/// `d^k` saturating at `usize::MAX`.
pub fn exact_bond_bound(d: usize, k: usize) -> usize {
    let mut b: usize = 1;
    for _ in 0..k {
        b = b.saturating_mul(d);
    }
    b
}

pub(crate) fn dims3(t: &DenseTensor) -> (usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2])
}

/// `v^T T[:, n, :]`.
pub(crate) fn apply_left(v: &[f64], t: &DenseTensor, n: usize) -> Vec<f64> {
    let (dl, d, dr) = dims3(t);
    debug_assert_eq!(v.len(), dl);
    let data = t.data();
    let mut out = vec![0.0; dr];
    for (a, &va) in v.iter().enumerate() {
        if va == 0.0 {
            continue;
        }
        let row = &data[(a * d + n) * dr..(a * d + n + 1) * dr];
        for (o, &x) in out.iter_mut().zip(row) {
            *o += va * x;
        }
    }
    out
}

/// `T[:, n, :] v`.
pub(crate) fn apply_right(t: &DenseTensor, n: usize, v: &[f64]) -> Vec<f64> {
    let (dl, d, dr) = dims3(t);
    debug_assert_eq!(v.len(), dr);
    let data = t.data();
    (0..dl)
        .map(|a| {
            let row = &data[(a * d + n) * dr..(a * d + n + 1) * dr];
            row.iter().zip(v).map(|(x, y)| x * y).sum()
        })
        .collect()
}

/// Merges two neighbouring sites and splits them back with the right factor an isometry.
fn split_pair_right(left: &DenseTensor, right: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    let (dl, d1, _) = dims3(left);
    let (_, d2, dr) = dims3(right);
    let merged = contract(left, &[2], right, &[0])?;
    let m = merged.reshape(vec![dl * d1, d2 * dr])?;
    let svd = truncated_svd(&m, usize::MAX).map_err(|e| match e {
        Error::Degenerate(_) => Error::Degenerate("cannot canonicalize a zero-norm MPS".into()),
        other => other,
    })?;
    let k = svd.kept();
    let us = DenseTensor::from_fn(vec![dl, d1, k], |i| svd.u.get(&[i[0] * d1 + i[1], i[2]]) * svd.singular_values[i[2]]);
    let v = svd.vt.reshape(vec![k, d2, dr])?;
    Ok((us, v))
}

fn validate_chain(tensors: &[DenseTensor]) -> Result<()> {
    if tensors.is_empty() {
        return Err(Error::Input("an MPS needs at least one site".into()));
    }
    for (j, t) in tensors.iter().enumerate() {
        if t.rank() != 3 {
            return Err(Error::Shape(format!("site {j} has rank {}, expected 3", t.rank())));
        }
    }
    if tensors[0].shape()[0] != 1 || tensors[tensors.len() - 1].shape()[2] != 1 {
        return Err(Error::Shape("boundary bonds must have dimension 1".into()));
    }
    for j in 1..tensors.len() {
        if tensors[j - 1].shape()[2] != tensors[j].shape()[0] {
            return Err(Error::Shape(format!(
                "bond between sites {} and {j} mismatched: {} vs {}",
                j - 1,
                tensors[j - 1].shape()[2],
                tensors[j].shape()[0]
            )));
        }
    }
    Ok(())
}

/// Every configuration of the given physical dimensions, in lexicographic order.
pub fn enumerate_configs(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0; dims.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
