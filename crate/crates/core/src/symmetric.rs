//! U(1)-symmetric matrix product states.
//!
//! Every bond index carries an integer charge. A site tensor entry `T[a, n, b]` may be
//! nonzero only when `charge(a) + flux_j == charge(n) + charge(b)`, where `flux_j` is the
//! charge injected at site `j`. For the assignment constraint each object owns a segment
//! of `M` binary sites; the first site of a segment injects the segment's total charge
//! `b` and the bond leaving the segment carries charge 0, so the physical bits of a
//! segment must sum to `b`. Bonds between segments have dimension one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::{dims3, Mps, MpsCheckpoint};
use crate::tensor::{contract, numerical_rank, thin_svd, DenseTensor, SvdResult, RANK_EPS};

/// Tolerance on forbidden tensor entries.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeStructure {
    /// Charge label per index of each of the `L + 1` bonds (bond 0 is the left boundary).
    pub bond_charges: Vec<Vec<i64>>,
    /// Charge of each physical index per site.
    pub physical_charges: Vec<Vec<i64>>,
    /// Charge injected at each site: the segment total at a segment's first site, else 0.
    pub site_flux: Vec<i64>,
    /// Required total per constraint segment.
    pub total_charge: Vec<i64>,
    /// First site of each segment.
    pub segment_starts: Vec<usize>,
}

impl ChargeStructure {
    pub fn n_sites(&self) -> usize {
        self.physical_charges.len()
    }

    pub fn allowed(&self, site: usize, left: usize, n: usize, right: usize) -> bool {
        self.bond_charges[site][left] + self.site_flux[site]
            == self.physical_charges[site][n] + self.bond_charges[site + 1][right]
    }

    /// Charge on the bond between `site` and `site + 1` implied by a row index `(left, n)`.
    fn row_charge(&self, site: usize, left: usize, n: usize) -> i64 {
        self.bond_charges[site][left] + self.site_flux[site] - self.physical_charges[site][n]
    }

    /// Charge on the bond before `site` implied by a column index `(n, right)`.
    fn col_charge(&self, site: usize, n: usize, right: usize) -> i64 {
        self.physical_charges[site][n] + self.bond_charges[site + 1][right] - self.site_flux[site]
    }

    /// Residual charge remaining after each site; checks every segment closes at zero.
    pub fn satisfies(&self, config: &[usize]) -> bool {
        if config.len() != self.n_sites() {
            return false;
        }
        let mut residual = 0i64;
        for (j, &n) in config.iter().enumerate() {
            if self.segment_starts.contains(&j) && residual != 0 {
                return false;
            }
            residual += self.site_flux[j] - self.physical_charges[j][n];
            if residual < 0 {
                return false;
            }
        }
        residual == 0
    }

    /// Running residual charge after each site along `config`.
    pub fn residual_path(&self, config: &[usize]) -> Vec<i64> {
        let mut residual = 0i64;
        config
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                residual += self.site_flux[j] - self.physical_charges[j][n];
                residual
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMps {
    mps: Mps,
    charges: ChargeStructure,
}

/// Block-wise SVD together with the charge of each new bond index.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargedSvd {
    pub svd: SvdResult,
    pub bond_charges: Vec<i64>,
}

impl SymmetricMps {
    pub fn new(mps: Mps, charges: ChargeStructure) -> Result<Self> {
        let l = mps.len();
        if charges.n_sites() != l || charges.bond_charges.len() != l + 1 || charges.site_flux.len() != l {
            return Err(Error::Shape("charge structure does not match the MPS length".into()));
        }
        for j in 0..l {
            let (dl, d, dr) = dims3(mps.tensor(j));
            if charges.bond_charges[j].len() != dl
                || charges.bond_charges[j + 1].len() != dr
                || charges.physical_charges[j].len() != d
            {
                return Err(Error::Shape(format!("charge labels do not match the legs of site {j}")));
            }
        }
        let s = Self { mps, charges };
        let defect = s.symmetry_defect();
        if defect >= SYMMETRY_TOL {
            return Err(Error::SymmetryViolation { defect, tolerance: SYMMETRY_TOL });
        }
        Ok(s)
    }

    /// Uniform state over all assignments of `n_objects` objects to `n_knapsacks`
    /// knapsacks in the one-hot binary encoding (site `i * M + j` is bit `x_ij`).
    pub fn build_assignment(n_objects: usize, n_knapsacks: usize) -> Result<Self> {
        if n_objects == 0 || n_knapsacks < 2 {
            return Err(Error::Input("need at least one object and two knapsacks".into()));
        }
        let charges = assignment_charges(n_objects, n_knapsacks);
        let l = n_objects * n_knapsacks;
        let tensors = (0..l)
            .map(|j| {
                let shape = vec![charges.bond_charges[j].len(), 2, charges.bond_charges[j + 1].len()];
                DenseTensor::from_fn(shape, |i| if charges.allowed(j, i[0], i[1], i[2]) { 1.0 } else { 0.0 })
            })
            .collect();
        let raw = Self { mps: Mps::new(tensors)?, charges };
        raw.right_canonicalized()
    }

    pub fn mps(&self) -> &Mps {
        &self.mps
    }

    pub fn charges(&self) -> &ChargeStructure {
        &self.charges
    }

    pub fn into_parts(self) -> (Mps, ChargeStructure) {
        (self.mps, self.charges)
    }

    /// Overwrites one site tensor without any symmetry check. Used to inject faults in tests.
    pub fn set_tensor_unchecked(&mut self, site: usize, t: DenseTensor) -> Result<()> {
        self.mps.replace_tensor(site, t)
    }

    pub fn site_defect(&self, site: usize) -> f64 {
        let t = self.mps.tensor(site);
        let (dl, d, dr) = dims3(t);
        let mut worst = 0.0f64;
        for a in 0..dl {
            for n in 0..d {
                for b in 0..dr {
                    if !self.charges.allowed(site, a, n, b) {
                        worst = worst.max(t.get(&[a, n, b]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest absolute value among entries that violate charge conservation.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.mps.len()).map(|j| self.site_defect(j)).fold(0.0, f64::max)
    }

    /// Largest forbidden entry of a merged two-site tensor `(left, n, n', right)` for
    /// sites `site, site + 1`.
    pub fn merged_defect(&self, site: usize, merged: &DenseTensor) -> f64 {
        let s = merged.shape();
        let mut worst = 0.0f64;
        for a in 0..s[0] {
            for n1 in 0..s[1] {
                for n2 in 0..s[2] {
                    for b in 0..s[3] {
                        let lhs = self.charges.row_charge(site, a, n1);
                        let rhs = self.charges.col_charge(site + 1, n2, b);
                        if lhs != rhs {
                            worst = worst.max(merged.get(&[a, n1, n2, b]).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Right-canonical form via pairwise block SVD from the last site to the first.
    pub fn right_canonicalized(&self) -> Result<Self> {
        let mut out = self.clone();
        let l = out.mps.len();
        for j in (1..l).rev() {
            let merged = contract(out.mps.tensor(j - 1), &[2], out.mps.tensor(j), &[0])?;
            out.split_merged(j - 1, &merged, usize::MAX, false)?;
        }
        let norm = out.mps.tensor(0).norm();
        if norm == 0.0 {
            return Err(Error::Degenerate("cannot canonicalize a zero-norm MPS".into()));
        }
        let first = out.mps.tensor(0).scaled(1.0 / norm);
        out.mps.set_tensor(0, first);
        out.mps.set_center(Some(0));
        Ok(out)
    }

    /// Factors a merged tensor of sites `site, site + 1` with [`block_svd`]. With
    /// `singular_values_right` the spectrum is absorbed into the right factor (center
    /// moves to `site + 1`), otherwise into the left one (center at `site`).
    pub(crate) fn split_merged(
        &mut self,
        site: usize,
        merged: &DenseTensor,
        chi: usize,
        singular_values_right: bool,
    ) -> Result<f64> {
        let s = merged.shape().to_vec();
        let (dl, d1, d2, dr) = (s[0], s[1], s[2], s[3]);
        let row_charges: Vec<i64> = (0..dl * d1)
            .map(|r| self.charges.row_charge(site, r / d1, r % d1))
            .collect();
        let col_charges: Vec<i64> = (0..d2 * dr)
            .map(|c| self.charges.col_charge(site + 1, c / dr, c % dr))
            .collect();
        let m = merged.reshape(vec![dl * d1, d2 * dr])?;
        let ChargedSvd { svd, bond_charges } = block_svd(&m, &row_charges, &col_charges, chi)?;
        let k = svd.kept();
        let sv = &svd.singular_values;
        let (left, right) = if singular_values_right {
            let left = svd.u.reshape(vec![dl, d1, k])?;
            let right = DenseTensor::from_fn(vec![k, d2, dr], |i| sv[i[0]] * svd.vt.get(&[i[0], i[1] * dr + i[2]]));
            (left, right)
        } else {
            let left = DenseTensor::from_fn(vec![dl, d1, k], |i| svd.u.get(&[i[0] * d1 + i[1], i[2]]) * sv[i[2]]);
            (left, svd.vt.reshape(vec![k, d2, dr])?)
        };
        self.mps.set_tensor(site, left);
        self.mps.set_tensor(site + 1, right);
        self.charges.bond_charges[site + 1] = bond_charges;
        self.mps
            .set_center(Some(if singular_values_right { site + 1 } else { site }));
        Ok(svd.truncation_error)
    }

    pub fn to_checkpoint(&self) -> SymmetricCheckpoint {
        SymmetricCheckpoint { mps: self.mps.to_checkpoint(), charges: self.charges.clone() }
    }

    pub fn from_checkpoint(c: &SymmetricCheckpoint) -> Result<Self> {
        Self::new(Mps::from_checkpoint(&c.mps)?, c.charges.clone())
    }
}

/// JSON checkpoint of a symmetric model: the plain MPS layout plus a `charges` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricCheckpoint {
    #[serde(flatten)]
    pub mps: MpsCheckpoint,
    pub charges: ChargeStructure,
}

fn assignment_charges(n_objects: usize, n_knapsacks: usize) -> ChargeStructure {
    let l = n_objects * n_knapsacks;
    let mut bond_charges = Vec::with_capacity(l + 1);
    let mut site_flux = vec![0; l];
    let mut segment_starts = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        segment_starts.push(i * n_knapsacks);
        site_flux[i * n_knapsacks] = 1;
        // bond entering the segment, then the bonds inside it
        bond_charges.push(vec![0]);
        for _ in 1..n_knapsacks {
            bond_charges.push(vec![0, 1]);
        }
    }
    bond_charges.push(vec![0]);
    ChargeStructure {
        bond_charges,
        physical_charges: vec![vec![0, 1]; l],
        site_flux,
        total_charge: vec![1; n_objects],
        segment_starts,
    }
}

/// SVD of a charge-conserving matrix, one block per charge sector.
///
/// `row_charges[r]` and `col_charges[c]` label the matrix indices; entries with
/// differing labels must vanish. The `chi` globally largest singular values are kept,
/// except that every sector with a nonzero spectrum keeps at least one value whenever
/// `chi` is at least the number of such sectors. Kept values are rescaled to unit norm.
pub fn block_svd(m: &DenseTensor, row_charges: &[i64], col_charges: &[i64], chi: usize) -> Result<ChargedSvd> {
    if m.rank() != 2 || m.shape()[0] != row_charges.len() || m.shape()[1] != col_charges.len() {
        return Err(Error::Shape(format!(
            "block_svd: matrix {:?} with {} row and {} column labels",
            m.shape(),
            row_charges.len(),
            col_charges.len()
        )));
    }
    if chi == 0 {
        return Err(Error::Input("bond dimension chi must be positive".into()));
    }
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut defect = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            if row_charges[r] != col_charges[c] {
                defect = defect.max(m.get(&[r, c]).abs());
            }
        }
    }
    if defect > SYMMETRY_TOL {
        return Err(Error::SymmetryViolation { defect, tolerance: SYMMETRY_TOL });
    }

    let mut row_sets: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (r, &q) in row_charges.iter().enumerate() {
        row_sets.entry(q).or_default().push(r);
    }
    let mut col_sets: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (c, &q) in col_charges.iter().enumerate() {
        col_sets.entry(q).or_default().push(c);
    }

    struct Sector {
        charge: i64,
        rows: Vec<usize>,
        cols: Vec<usize>,
        u: nalgebra::DMatrix<f64>,
        s: Vec<f64>,
        vt: nalgebra::DMatrix<f64>,
    }
    let mut sectors = Vec::new();
    for (&q, rs) in &row_sets {
        let Some(cs) = col_sets.get(&q) else { continue };
        let block = nalgebra::DMatrix::from_fn(rs.len(), cs.len(), |i, j| m.get(&[rs[i], cs[j]]));
        let (u, s, vt) = thin_svd(&block)?;
        sectors.push(Sector { charge: q, rows: rs.clone(), cols: cs.clone(), u, s, vt });
    }

    let all: Vec<f64> = sectors.iter().flat_map(|s| s.s.iter().copied()).collect();
    if numerical_rank(&all) == 0 {
        return Err(Error::Degenerate("cannot factor a zero matrix".into()));
    }
    let max_sv = all.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_EPS * max_sv;

    // (value, sector, index within sector), sorted by value then charge
    let mut candidates: Vec<(f64, usize, usize)> = sectors
        .iter()
        .enumerate()
        .flat_map(|(si, sec)| sec.s.iter().enumerate().filter(|(_, &v)| v > cutoff).map(move |(k, &v)| (v, si, k)))
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(sectors[a.1].charge.cmp(&sectors[b.1].charge)).then(a.2.cmp(&b.2)));

    let keep_n = chi.min(candidates.len());
    let mut kept: Vec<(f64, usize, usize)> = candidates[..keep_n].to_vec();
    let live_sectors: Vec<usize> = {
        let mut v: Vec<usize> = candidates.iter().map(|c| c.1).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    if chi >= live_sectors.len() {
        for &sec in &live_sectors {
            if kept.iter().any(|c| c.1 == sec) {
                continue;
            }
            // swap out the smallest value of the sector holding the most kept values
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for c in &kept {
                *counts.entry(c.1).or_default() += 1;
            }
            let donor = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&s, _)| s)
                .expect("kept is non-empty");
            let pos = kept.iter().rposition(|c| c.1 == donor).expect("donor has kept values");
            kept.remove(pos);
            let best = candidates.iter().find(|c| c.1 == sec).copied().expect("live sector");
            kept.push(best);
        }
        kept.sort_by(|a, b| b.0.total_cmp(&a.0).then(sectors[a.1].charge.cmp(&sectors[b.1].charge)).then(a.2.cmp(&b.2)));
    }

    let total_sq: f64 = all.iter().map(|v| v * v).sum();
    let kept_sq: f64 = kept.iter().map(|c| c.0 * c.0).sum();
    let truncation_error = (total_sq - kept_sq).max(0.0).sqrt();
    let kept_norm = kept_sq.sqrt();
    let k = kept.len();
    let mut u = DenseTensor::zeros(vec![rows, k]);
    let mut vt = DenseTensor::zeros(vec![k, cols]);
    let mut bond_charges = Vec::with_capacity(k);
    let mut singular_values = Vec::with_capacity(k);
    for (col, &(v, si, idx)) in kept.iter().enumerate() {
        let sec = &sectors[si];
        for (i, &r) in sec.rows.iter().enumerate() {
            u.set(&[r, col], sec.u[(i, idx)]);
        }
        for (j, &c) in sec.cols.iter().enumerate() {
            vt.set(&[col, c], sec.vt[(idx, j)]);
        }
        bond_charges.push(sec.charge);
        singular_values.push(v / kept_norm);
    }
    Ok(ChargedSvd {
        svd: SvdResult { u, singular_values, vt, truncation_error, kept_norm },
        bond_charges,
    })
}
