use std::fs;
use std::path::{Path, PathBuf};

use tngeo::geo::derive_seed;
use tngeo::knapsack::{generate_instance, GeneratorConfig};

use crate::error::{io, BenchError, Result};

/// Parses `"7x2,8x5"` into `(objects, knapsacks)` pairs; an empty string gives none.
pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (n, m) = t.split_once(['x', 'X']).ok_or_else(|| BenchError::Size(t.into()))?;
            match (n.trim().parse(), m.trim().parse()) {
                (Ok(n), Ok(m)) if n > 0 && m > 0 => Ok((n, m)),
                _ => Err(BenchError::Size(t.into())),
            }
        })
        .collect()
}

pub fn instance_file_name(index: usize, n: usize, m: usize) -> String {
    format!("instance_{index:03}_n{n}_m{m}.json")
}

/// Writes one instance per size; instance `k` is generated from `derive_seed(seed, k)`.
pub fn cmd_generate(sizes: &[(usize, usize)], seed: u64, oracle_budget: u64, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(io(out))?;
    let cfg = GeneratorConfig { oracle_budget, ..GeneratorConfig::default() };
    let mut written = Vec::with_capacity(sizes.len());
    for (k, &(n, m)) in sizes.iter().enumerate() {
        let inst = generate_instance(n, m, &cfg, derive_seed(seed, k as u64))?;
        let path = out.join(instance_file_name(k, n, m));
        fs::write(&path, inst.to_json() + "\n").map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
