//! Dense real tensors and the matrix decompositions used by every other module.
//!
//! Storage is row-major: the last leg is the fastest-varying index. Grouping legs
//! into a matrix index follows the same rule, so with legs `(bond, physical)` the
//! composite index is `d * bond + physical`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold below which singular values count as zero for rank decisions.
pub const RANK_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized leg in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        assert!(shape.iter().all(|&s| s > 0), "zero-sized leg in {shape:?}");
        Self { shape, data: vec![0.0; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    /// Builds a tensor by evaluating `f` on every multi-index in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0; t.shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, &t.shape);
        }
        t
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(vec![n, n], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| {
                debug_assert!(i < s);
                acc * s + i
            })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.flat_index(idx);
        self.data[k] = value;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self - alpha * other`, shapes must agree.
    pub fn axpy(&self, alpha: f64, other: &DenseTensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "axpy shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    /// Reorders legs: leg `k` of the result is leg `axes[k]` of `self`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        check_permutation(axes, self.rank())?;
        if axes.iter().enumerate().all(|(k, &a)| k == a) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let old_strides = self.strides();
        let perm_strides: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0; new_shape.len()];
        for _ in 0..self.data.len() {
            let src: usize = idx.iter().zip(&perm_strides).map(|(i, s)| i * s).sum();
            data.push(self.data[src]);
            increment(&mut idx, &new_shape);
        }
        Ok(Self { shape: new_shape, data })
    }

    /// Groups `row_legs` into the row index and `col_legs` into the column index.
    /// Within each group the first listed leg is the slowest-varying.
    pub fn matricize(&self, row_legs: &[usize], col_legs: &[usize]) -> Result<Self> {
        let axes: Vec<usize> = row_legs.iter().chain(col_legs).copied().collect();
        if check_permutation(&axes, self.rank()).is_err() {
            return Err(Error::Shape(format!(
                "legs {row_legs:?} | {col_legs:?} do not partition a rank-{} tensor",
                self.rank()
            )));
        }
        let rows = row_legs.iter().map(|&l| self.shape[l]).product();
        let cols = col_legs.iter().map(|&l| self.shape[l]).product();
        self.permute(&axes)?.reshape(vec![rows, cols])
    }

    /// Inverse of [`matricize`](Self::matricize): `shape` is the original tensor shape.
    pub fn unmatricize(&self, shape: &[usize], row_legs: &[usize], col_legs: &[usize]) -> Result<Self> {
        let axes: Vec<usize> = row_legs.iter().chain(col_legs).copied().collect();
        check_permutation(&axes, shape.len())?;
        let permuted_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let mut inverse = vec![0; axes.len()];
        for (k, &a) in axes.iter().enumerate() {
            inverse[a] = k;
        }
        self.reshape(permuted_shape)?.permute(&inverse)
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!("expected a 2-leg tensor, got shape {:?}", self.shape)));
        }
        Ok(DMatrix::from_row_slice(self.shape[0], self.shape[1], &self.data))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Self { shape: vec![r, c], data }
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Shape("transpose needs a 2-leg tensor".into()));
        }
        self.permute(&[1, 0])
    }

    pub fn matmul(&self, other: &DenseTensor) -> Result<Self> {
        contract(self, &[1], other, &[0])
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn check_permutation(axes: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if axes.len() != rank {
        return Err(Error::Shape(format!("{axes:?} is not a permutation of {rank} legs")));
    }
    for &a in axes {
        if a >= rank || seen[a] {
            return Err(Error::Shape(format!("{axes:?} is not a permutation of {rank} legs")));
        }
        seen[a] = true;
    }
    Ok(())
}

/// Sums over the paired legs `a_legs[k]` / `b_legs[k]`. The result carries the free
/// legs of `a` followed by the free legs of `b`, each in original order.
pub fn contract(a: &DenseTensor, a_legs: &[usize], b: &DenseTensor, b_legs: &[usize]) -> Result<DenseTensor> {
    if a_legs.len() != b_legs.len() {
        return Err(Error::Shape(format!(
            "contracting {} legs of a with {} legs of b",
            a_legs.len(),
            b_legs.len()
        )));
    }
    check_leg_list(a_legs, a.rank(), "a")?;
    check_leg_list(b_legs, b.rank(), "b")?;
    for (&la, &lb) in a_legs.iter().zip(b_legs) {
        if a.shape[la] != b.shape[lb] {
            return Err(Error::Shape(format!(
                "leg a[{la}] has dimension {} but leg b[{lb}] has {}",
                a.shape[la], b.shape[lb]
            )));
        }
    }
    let a_free: Vec<usize> = (0..a.rank()).filter(|l| !a_legs.contains(l)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|l| !b_legs.contains(l)).collect();
    let am = a.matricize(&a_free, a_legs)?.to_matrix()?;
    let bm = b.matricize(b_legs, &b_free)?.to_matrix()?;
    let prod = am * bm;
    let shape: Vec<usize> = a_free
        .iter()
        .map(|&l| a.shape[l])
        .chain(b_free.iter().map(|&l| b.shape[l]))
        .collect();
    let flat = DenseTensor::from_matrix(&prod);
    Ok(DenseTensor { shape, data: flat.data })
}

fn check_leg_list(legs: &[usize], rank: usize, which: &str) -> Result<()> {
    for (k, &l) in legs.iter().enumerate() {
        if l >= rank {
            return Err(Error::Shape(format!("leg {which}[{l}] out of range for rank {rank}")));
        }
        if legs[..k].contains(&l) {
            return Err(Error::Shape(format!("leg {which}[{l}] listed twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// Left isometry, `rows x kept`.
    pub u: DenseTensor,
    /// Kept singular values, non-increasing, rescaled to unit 2-norm.
    pub singular_values: Vec<f64>,
    /// Right isometry, `kept x cols`.
    pub vt: DenseTensor,
    /// Frobenius norm of the discarded spectrum, before rescaling.
    pub truncation_error: f64,
    /// 2-norm of the kept spectrum before rescaling.
    pub kept_norm: f64,
}

impl SvdResult {
    pub fn kept(&self) -> usize {
        self.singular_values.len()
    }

    /// `U diag(s) Vt` with the original (un-normalized) scale restored.
    pub fn reconstruct(&self) -> DenseTensor {
        let s = &self.singular_values;
        let us = DenseTensor::from_fn(self.u.shape().to_vec(), |i| self.u.get(i) * s[i[1]] * self.kept_norm);
        us.matmul(&self.vt).expect("factor shapes agree")
    }
}

/// Full thin SVD with singular values sorted non-increasing and the deterministic sign
/// convention applied. No truncation, no rescaling.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in SVD input".into()));
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD produced no U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD produced no V^T".into()))?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut u_sorted = DMatrix::zeros(u.nrows(), order.len());
    let mut vt_sorted = DMatrix::zeros(order.len(), vt.ncols());
    let mut s_sorted = Vec::with_capacity(order.len());
    for (k, &o) in order.iter().enumerate() {
        let sign = column_sign(u.column(o).iter());
        u_sorted.set_column(k, &(u.column(o) * sign));
        vt_sorted.set_row(k, &(vt.row(o) * sign));
        s_sorted.push(s[o].max(0.0));
    }
    Ok((u_sorted, s_sorted, vt_sorted))
}

/// +1 or -1 so that the largest-magnitude entry (first one on ties) is non-negative.
fn column_sign<'a>(col: impl Iterator<Item = &'a f64>) -> f64 {
    let mut best = 0.0f64;
    for &v in col {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Number of singular values above the relative zero threshold.
pub(crate) fn numerical_rank(s: &[f64]) -> usize {
    let max = s.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_EPS * max).count()
}

/// SVD keeping at most `chi` singular values, renormalized so the kept spectrum has unit norm.
pub fn truncated_svd(m: &DenseTensor, chi: usize) -> Result<SvdResult> {
    if chi == 0 {
        return Err(Error::Input("bond dimension chi must be positive".into()));
    }
    let mat = m.to_matrix()?;
    let (u, s, vt) = thin_svd(&mat)?;
    let keep = numerical_rank(&s).min(chi);
    if keep == 0 {
        return Err(Error::Degenerate("cannot factor a zero matrix".into()));
    }
    let truncation_error = s[keep..].iter().map(|v| v * v).sum::<f64>().sqrt();
    let kept_norm = s[..keep].iter().map(|v| v * v).sum::<f64>().sqrt();
    let singular_values = s[..keep].iter().map(|v| v / kept_norm).collect();
    Ok(SvdResult {
        u: DenseTensor::from_matrix(&u.columns(0, keep).into_owned()),
        singular_values,
        vt: DenseTensor::from_matrix(&vt.rows(0, keep).into_owned()),
        truncation_error,
        kept_norm,
    })
}

/// Thin QR: `q` has orthonormal columns, `q r` reproduces `m`.
pub fn qr(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    let mat = m.to_matrix()?;
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in QR input".into()));
    }
    let decomposition = mat.qr();
    let mut q = decomposition.q();
    let mut r = decomposition.r();
    for k in 0..q.ncols() {
        let sign = column_sign(q.column(k).iter());
        if sign < 0.0 {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    Ok((DenseTensor::from_matrix(&q), DenseTensor::from_matrix(&r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn gram_deviation(q: &DenseTensor) -> f64 {
        let qtq = contract(q, &[0], q, &[0]).unwrap();
        qtq.max_abs_diff(&DenseTensor::identity(qtq.shape()[0]))
    }

    #[test]
    fn contract_identity_with_vector() {
        let v = DenseTensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let out = contract(&DenseTensor::identity(2), &[1], &v, &[0]).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn contract_dot_product_is_scalar() {
        let a = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = DenseTensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let out = contract(&a, &[0], &b, &[0]).unwrap();
        assert!(out.shape().is_empty());
        assert_eq!(out.data(), &[11.0]);
    }

    #[test]
    fn contract_matches_nested_loops() {
        let a = random(vec![3, 4, 2], 1);
        let b = random(vec![2, 5, 3], 2);
        // sum over a[i, j, k] b[k, l, i]
        let out = contract(&a, &[0, 2], &b, &[2, 0]).unwrap();
        assert_eq!(out.shape(), &[4, 5]);
        for j in 0..4 {
            for l in 0..5 {
                let mut acc = 0.0;
                for i in 0..3 {
                    for k in 0..2 {
                        acc += a.get(&[i, j, k]) * b.get(&[k, l, i]);
                    }
                }
                assert!((out.get(&[j, l]) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contract_reports_mismatched_legs() {
        let a = random(vec![3, 4], 1);
        let b = random(vec![5, 2], 2);
        match contract(&a, &[1], &b, &[0]) {
            Err(Error::Shape(msg)) => assert!(msg.contains("a[1]") && msg.contains("b[0]")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(contract(&a, &[0, 0], &b, &[0, 1]).is_err());
        assert!(contract(&a, &[2], &b, &[0]).is_err());
    }

    #[test]
    fn contraction_is_bilinear() {
        let a = random(vec![3, 4, 2], 5);
        let b = random(vec![2, 4], 6);
        let lhs = contract(&a.scaled(2.5), &[2], &b, &[0]).unwrap();
        let rhs = contract(&a, &[2], &b, &[0]).unwrap().scaled(2.5);
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn matricize_round_trips() {
        let t = random(vec![2, 3, 4], 3);
        let m = t.matricize(&[0, 1], &[2]).unwrap();
        assert_eq!(m.shape(), &[6, 4]);
        assert_eq!(m.reshape(vec![2, 3, 4]).unwrap(), t);
        let m2 = t.matricize(&[2, 0], &[1]).unwrap();
        assert_eq!(m2.unmatricize(&[2, 3, 4], &[2, 0], &[1]).unwrap(), t);
    }

    #[test]
    fn matricize_uses_bond_major_composite_index() {
        // merged tensor legs: (k_left, n_i, n_next, k_right)
        let (dl, d, dr) = (3, 2, 2);
        let t = random(vec![dl, d, d, dr], 7);
        let m = t.matricize(&[0, 1], &[3, 2]).unwrap();
        for kl in 0..dl {
            for n1 in 0..d {
                for n2 in 0..d {
                    for kr in 0..dr {
                        assert_eq!(m.get(&[d * kl + n1, d * kr + n2]), t.get(&[kl, n1, n2, kr]));
                    }
                }
            }
        }
    }

    #[test]
    fn matricize_preserves_norm_and_rejects_bad_partitions() {
        let t = random(vec![2, 2, 2, 2], 9);
        let m = t.matricize(&[1, 3], &[0, 2]).unwrap();
        assert!((m.norm() - t.norm()).abs() < 1e-14);
        assert!(matches!(t.matricize(&[0, 1], &[1, 2]), Err(Error::Shape(_))));
        assert!(matches!(t.matricize(&[0], &[1, 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_spectrum_is_normalized() {
        let r = truncated_svd(&DenseTensor::identity(4), 4).unwrap();
        for s in &r.singular_values {
            assert!((s - 0.5).abs() < 1e-14);
        }
        assert_eq!(r.truncation_error, 0.0);
    }

    #[test]
    fn rank_one_has_no_truncation_error() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0];
        let m = DenseTensor::from_fn(vec![3, 2], |i| u[i[0]] * v[i[1]]);
        let r = truncated_svd(&m, 1).unwrap();
        assert_eq!(r.kept(), 1);
        assert!(r.truncation_error < 1e-12);
        assert!(r.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn full_rank_svd_reconstructs_and_factors_are_isometries() {
        let m = random(vec![5, 7], 11);
        let r = truncated_svd(&m, 10).unwrap();
        assert_eq!(r.kept(), 5);
        assert!(r.reconstruct().max_abs_diff(&m) < 1e-10);
        assert!(gram_deviation(&r.u) < 1e-10);
        assert!(gram_deviation(&r.vt.transpose().unwrap()) < 1e-10);
        assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let norm: f64 = r.singular_values.iter().map(|s| s * s).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_chi_and_zero_matrix_are_rejected() {
        assert!(matches!(truncated_svd(&DenseTensor::identity(2), 0), Err(Error::Input(_))));
        assert!(matches!(truncated_svd(&DenseTensor::zeros(vec![2, 2]), 2), Err(Error::Degenerate(_))));
        assert!(truncated_svd(&DenseTensor::zeros(vec![2, 2, 2]), 2).is_err());
    }

    #[test]
    fn qr_of_identity_is_identity() {
        let (q, r) = qr(&DenseTensor::identity(3)).unwrap();
        assert!(q.max_abs_diff(&DenseTensor::identity(3)) < 1e-14);
        assert!(r.max_abs_diff(&DenseTensor::identity(3)) < 1e-14);
    }

    #[test]
    fn qr_tall_and_wide() {
        let tall = random(vec![6, 3], 4);
        let (q, r) = qr(&tall).unwrap();
        assert!(gram_deviation(&q) < 1e-10);
        assert!(q.matmul(&r).unwrap().max_abs_diff(&tall) < 1e-10);
        let wide = random(vec![3, 6], 5);
        let (q, r) = qr(&wide).unwrap();
        assert!(gram_deviation(&q) < 1e-10);
        assert!(q.matmul(&r).unwrap().max_abs_diff(&wide) < 1e-10);
    }

    #[test]
    fn constructor_checks_invariants() {
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(DenseTensor::new(vec![0], vec![]).is_err());
    }
}
