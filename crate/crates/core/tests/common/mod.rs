//! Independent oracles shared by the integration tests. Nothing here calls the library's
//! own contraction or probability code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tngeo::mps::Mps;
use tngeo::tensor::DenseTensor;

/// All configurations in lexicographic order, last site fastest.
pub fn configs(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..d).map(move |n| {
                    let mut q = p.clone();
                    q.push(n);
                    q
                })
            })
            .collect();
    }
    out
}

/// `Psi(x)` by straight matrix-vector products over raw tensor data.
pub fn amplitude(tensors: &[DenseTensor], x: &[usize]) -> f64 {
    let mut v = vec![1.0];
    for (t, &n) in tensors.iter().zip(x) {
        let s = t.shape();
        let (dl, d, dr) = (s[0], s[1], s[2]);
        let data = t.data();
        let mut w = vec![0.0; dr];
        for a in 0..dl {
            for b in 0..dr {
                w[b] += v[a] * data[(a * d + n) * dr + b];
            }
        }
        v = w;
    }
    v[0]
}

/// Exact Born probabilities by enumeration.
pub fn probabilities(m: &Mps) -> (Vec<Vec<usize>>, Vec<f64>) {
    let xs = configs(&m.physical_dims());
    let amps: Vec<f64> = xs.iter().map(|x| amplitude(m.tensors(), x).powi(2)).collect();
    let z: f64 = amps.iter().sum();
    (xs, amps.into_iter().map(|a| a / z).collect())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random MPS with entries uniform on `[-1, 1)`, bonds capped at `chi`.
pub fn signed_mps(l: usize, d: usize, chi: usize, seed: u64) -> Mps {
    let mut r = rng(seed);
    let bonds: Vec<usize> = (0..=l)
        .map(|j| {
            let k = j.min(l - j) as u32;
            d.checked_pow(k).unwrap_or(usize::MAX).min(chi)
        })
        .collect();
    let tensors = (0..l)
        .map(|j| DenseTensor::from_fn(vec![bonds[j], d, bonds[j + 1]], |_| r.gen_range(-1.0..1.0)))
        .collect();
    Mps::new(tensors).unwrap()
}

/// Pearson chi-square p-value; expected counts below 5 are pooled into one bin.
pub fn chi_square_p(observed: &[usize], probs: &[f64]) -> f64 {
    let n: usize = observed.iter().sum();
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    } else if pooled_obs > 0.0 {
        return 0.0;
    }
    let dof = (bins.max(2) - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn total_variation(observed: &[usize], probs: &[f64]) -> f64 {
    let n: usize = observed.iter().sum();
    0.5 * observed.iter().zip(probs).map(|(&o, &p)| (o as f64 / n as f64 - p).abs()).sum::<f64>()
}

/// `-sum p log(Psi^2 / Z)` with sites `site, site + 1` replaced by a merged tensor,
/// `Z` by enumeration.
pub fn loss_with_merged(m: &Mps, site: usize, merged: &DenseTensor, samples: &[Vec<usize>], weights: &[f64]) -> f64 {
    let psi = |x: &[usize]| -> f64 {
        let mut v = vec![1.0];
        for j in 0..site {
            v = step(&v, m.tensor(j), x[j]);
        }
        let s = merged.shape();
        let (dl, d1, d2, dr) = (s[0], s[1], s[2], s[3]);
        let mut w = vec![0.0; dr];
        for a in 0..dl {
            for b in 0..dr {
                w[b] += v[a] * merged.data()[((a * d1 + x[site]) * d2 + x[site + 1]) * dr + b];
            }
        }
        v = w;
        for j in site + 2..m.len() {
            v = step(&v, m.tensor(j), x[j]);
        }
        v[0]
    };
    let z: f64 = configs(&m.physical_dims()).iter().map(|x| psi(x).powi(2)).sum();
    -samples.iter().zip(weights).map(|(x, p)| p * (psi(x).powi(2) / z).ln()).sum::<f64>()
}

fn step(v: &[f64], t: &DenseTensor, n: usize) -> Vec<f64> {
    let s = t.shape();
    let (dl, d, dr) = (s[0], s[1], s[2]);
    let mut w = vec![0.0; dr];
    for a in 0..dl {
        for b in 0..dr {
            w[b] += v[a] * t.data()[(a * d + n) * dr + b];
        }
    }
    w
}

/// Central differences of [`loss_with_merged`] for every merged entry.
pub fn finite_difference_gradient(
    m: &Mps,
    site: usize,
    samples: &[Vec<usize>],
    weights: &[f64],
    h: f64,
) -> DenseTensor {
    let a = m.tensor(site);
    let b = m.tensor(site + 1);
    let (dl, d1, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let (d2, dr) = (b.shape()[1], b.shape()[2]);
    let merged = DenseTensor::from_fn(vec![dl, d1, d2, dr], |i| {
        (0..k).map(|c| a.get(&[i[0], i[1], c]) * b.get(&[c, i[2], i[3]])).sum()
    });
    let mut g = DenseTensor::zeros(merged.shape().to_vec());
    for e in 0..merged.len() {
        let mut plus = merged.clone();
        plus.data_mut()[e] += h;
        let mut minus = merged.clone();
        minus.data_mut()[e] -= h;
        g.data_mut()[e] = (loss_with_merged(m, site, &plus, samples, weights)
            - loss_with_merged(m, site, &minus, samples, weights))
            / (2.0 * h);
    }
    g
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations; returns eigenvalues.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Mixed-canonical violation around `center`, by explicit loops: left isometries before
/// the center, right isometries after it, and `|Z - 1|` with `Z` by enumeration.
pub fn mixed_canonical_defect(m: &Mps, center: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, t) in m.tensors().iter().enumerate() {
        let s = t.shape();
        let (dl, d, dr) = (s[0], s[1], s[2]);
        let at = |a: usize, n: usize, b: usize| t.data()[(a * d + n) * dr + b];
        if j < center {
            for b in 0..dr {
                for c in 0..dr {
                    let g: f64 = (0..dl).flat_map(|a| (0..d).map(move |n| (a, n))).map(|(a, n)| at(a, n, b) * at(a, n, c)).sum();
                    worst = worst.max((g - if b == c { 1.0 } else { 0.0 }).abs());
                }
            }
        } else if j > center {
            for a in 0..dl {
                for c in 0..dl {
                    let g: f64 = (0..d).flat_map(|n| (0..dr).map(move |b| (n, b))).map(|(n, b)| at(a, n, b) * at(c, n, b)).sum();
                    worst = worst.max((g - if a == c { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }
    let z: f64 = configs(&m.physical_dims()).iter().map(|x| amplitude(m.tensors(), x).powi(2)).sum();
    worst.max((z - 1.0).abs())
}
