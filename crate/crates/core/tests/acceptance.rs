//! Acceptance suite: one PASS/FAIL line per criterion, then a single assertion.
//!
//! Run with `cargo test -p tngeo --test acceptance -- --nocapture` to see the report.

mod common;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use tngeo::baselines::{cooling_rate, metropolis_accept, simulated_annealing, SAConfig};
use tngeo::dmrg::{merged_gradient, sweep, two_site_update, Direction, TrainConfig, WeightedDataset};
use tngeo::geo::{geo_run, geo_run_with_model, metrics, select, Encoding, GeoConfig, Metrics, Population, RunResult, Selection};
use tngeo::knapsack::{
    brute_force_solve, generate_instance, to_binary, BinaryAssignment, GeneratorConfig, IntegerAssignment, KnapsackInstance,
    PenaltyConfig, DEFAULT_ORACLE_BUDGET,
};
use tngeo::mps::Mps;
use tngeo::sampling::sample_batch;
use tngeo::symmetric::SymmetricMps;

// pinned tolerances
const UNIFORM_128: f64 = 1.0 / 128.0;
const SYMMETRY_TOL: f64 = 1e-10;
const CHI2_ALPHA: f64 = 0.001;
const TV_MAX: f64 = 0.02;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const CANONICAL_TOL: f64 = 1e-8;
const PARITY_V: f64 = 0.8;
const PARITY_R: f64 = 0.95;
const RUN_LIMIT: Duration = Duration::from_secs(60);
const TEMPERATURE_REL_TOL: f64 = 1e-9;
const SIGMAS: f64 = 3.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn worked_figure() -> Outcome {
    let start = Instant::now();
    let inst = generate_instance(7, 2, &GeneratorConfig::default(), 2024).unwrap();
    let (opt, _) = brute_force_solve(&inst, &PenaltyConfig::for_instance(&inst), DEFAULT_ORACLE_BUDGET).unwrap();
    let mut hits = 0;
    let mut probs = Vec::new();
    for seed in 0..10 {
        let mut cfg = GeoConfig::for_instance(&inst, Encoding::Integer, seed);
        cfg.train = TrainConfig { learning_rate: 1e-3, max_bond: 4, epochs: 1 };
        cfg.beta = 0.01;
        cfg.n_samples = 140;
        cfg.max_iterations = 50;
        cfg.selection = Selection::All;
        let (_, model) = geo_run_with_model(&inst, &cfg).unwrap();
        let p = common::probabilities(&model).1[index_of(&opt.0, 2)];
        probs.push(p);
        hits += usize::from(p > UNIFORM_128);
    }
    let elapsed = start.elapsed();
    let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        hits >= 8 && elapsed < Duration::from_secs(300),
        format!("P(optimum) > 1/128 in {hits}/10 runs (min {min:.4}), {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Position of `x` in lexicographic enumeration with uniform dimension `d`.
fn index_of(x: &[usize], d: usize) -> usize {
    x.iter().fold(0, |acc, &n| acc * d + n)
}

fn constraint_guarantee() -> Outcome {
    let sizes = [(6, 4), (5, 4), (6, 3), (4, 4), (5, 3), (6, 2), (3, 4), (4, 3), (5, 2), (6, 4)];
    let (mut samples, mut violations) = (0usize, 0usize);
    let mut worst_defect = 0.0f64;
    for (k, &(n, m)) in sizes.iter().enumerate() {
        let inst = generate_instance(n, m, &GeneratorConfig::default(), 500 + k as u64).unwrap();
        let mut cfg = GeoConfig::for_instance(&inst, Encoding::Binary, k as u64);
        cfg.n_samples = 200;
        cfg.max_iterations = 50;
        cfg.selection = Selection::All;
        let r = geo_run(&inst, &cfg).unwrap();
        assert!(r.error.is_none(), "{:?}", r.error);
        samples += cfg.n_samples * r.trajectory.len();
        violations += r.trajectory.iter().map(|t| t.n_equality_violations).sum::<usize>();

        let mut sym = cfg.clone();
        sym.selection = Selection::Symmetric;
        sym.max_iterations = 20;
        sym.n_samples = 10 * n * m;
        let r = geo_run(&inst, &sym).unwrap();
        assert!(r.error.is_none(), "{:?}", r.error);
        for t in &r.trajectory {
            worst_defect = worst_defect.max(t.symmetry_defect.unwrap());
        }
    }
    outcome(
        violations == 0 && samples >= 100_000 && worst_defect < SYMMETRY_TOL,
        format!("{violations} violations in {samples} samples; worst symmetry defect {worst_defect:.1e}"),
    )
}

fn sampler_fidelity() -> Outcome {
    let (mut worst_p, mut worst_tv) = (1.0f64, 0.0f64);
    let mut passed = true;
    for k in 0..20u64 {
        // at most 81 outcomes: with 50k exact draws the expected TV from sampling noise alone
        // is ~0.021 at 256 near-uniform outcomes and ~0.015 at 128, too close to the bound;
        // longer chains are covered by the chi-square tests in tests/sampling.rs
        let (l, d) = [(3, 2), (4, 2), (5, 2), (6, 2), (6, 2), (3, 3), (4, 3), (2, 4), (3, 4), (2, 8)][k as usize % 10];
        let m = common::signed_mps(l, d, 4, 100 + k).right_canonicalize().unwrap();
        let (xs, probs) = common::probabilities(&m);
        let batch = sample_batch(&m, 50_000, 7 + k).unwrap();
        let mut counts = vec![0usize; xs.len()];
        for c in &batch.configs {
            counts[index_of(c, d)] += 1;
        }
        let p = common::chi_square_p(&counts, &probs);
        let tv = common::total_variation(&counts, &probs);
        worst_p = worst_p.min(p);
        worst_tv = worst_tv.max(tv);
        passed &= p > CHI2_ALPHA && tv < TV_MAX;
    }
    outcome(passed, format!("min chi-square p = {worst_p:.4}, max TV = {worst_tv:.4}"))
}

fn random_dataset(space: &[Vec<usize>], n: usize, seed: u64) -> WeightedDataset {
    let mut r = common::rng(seed);
    let mut pool = space.to_vec();
    pool.shuffle(&mut r);
    pool.truncate(n);
    let raw: Vec<f64> = pool.iter().map(|_| r.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    WeightedDataset::new(pool, raw.into_iter().map(|w| w / total).collect()).unwrap()
}

fn relative_gradient_error(m: &Mps, site: usize, data: &WeightedDataset) -> f64 {
    let g = merged_gradient(m, site, data).unwrap();
    let fd = common::finite_difference_gradient(m, site, data.samples(), data.weights(), FD_STEP);
    let scale = g.data().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    g.max_abs_diff(&fd) / scale
}

/// Moves the center to `site` with real (small) updates.
fn move_center<M: tngeo::dmrg::TwoSiteModel>(model: &mut M, site: usize, data: &WeightedDataset) {
    let cfg = TrainConfig::new(1e-2, 16, 1).unwrap();
    for s in 0..site {
        two_site_update(model, s, Direction::LeftToRight, &cfg, data).unwrap();
    }
}

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        // integer encoding: plain 4-site MPS, d = 3
        let mut m = common::signed_mps(4, 3, 9, 300 + k).right_canonicalize().unwrap();
        let space = common::configs(&[3; 4]);
        let data = random_dataset(&space, 6 + k as usize, 400 + k);
        let site = k as usize % 3;
        move_center(&mut m, site, &data);
        worst = worst.max(relative_gradient_error(&m, site, &data));

        // binary encoding: symmetric assignment MPS, feasible data only
        let (n_obj, n_kn) = if k % 2 == 0 { (2, 2) } else { (2, 3) };
        let mut s = SymmetricMps::build_assignment(n_obj, n_kn).unwrap();
        let feasible: Vec<Vec<usize>> =
            common::configs(&vec![2; n_obj * n_kn]).into_iter().filter(|x| s.charges().satisfies(x)).collect();
        let data = random_dataset(&feasible, feasible.len().min(3 + k as usize), 500 + k);
        sweep(&mut s, &TrainConfig::new(5e-2, 8, 1).unwrap(), &data).unwrap();
        let site = k as usize % (n_obj * n_kn - 1);
        move_center(&mut s, site, &data);
        worst = worst.max(relative_gradient_error(s.mps(), site, &data));
    }
    outcome(worst < FD_REL_TOL, format!("max relative deviation from central differences {worst:.2e}"))
}

fn canonical_suite() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        let (l, d, chi) = [(5, 2, 4), (6, 3, 5), (4, 4, 16), (8, 2, 8), (3, 5, 25)][k as usize % 5];
        let m = common::signed_mps(l, d, chi, 600 + k).right_canonicalize().unwrap();
        worst = worst.max(common::mixed_canonical_defect(&m, 0));
        let space = common::configs(&vec![d; l]);
        let data = random_dataset(&space, 10, 700 + k);
        let cfg = TrainConfig::new(1e-2, chi.min(6), 1).unwrap();
        let mut model = m;
        for site in 0..l - 1 {
            two_site_update(&mut model, site, Direction::LeftToRight, &cfg, &data).unwrap();
            worst = worst.max(common::mixed_canonical_defect(&model, model.center().unwrap()));
        }
        for site in (0..l - 1).rev() {
            two_site_update(&mut model, site, Direction::RightToLeft, &cfg, &data).unwrap();
            worst = worst.max(common::mixed_canonical_defect(&model, model.center().unwrap()));
        }
    }
    for (n, m) in [(3, 2), (2, 3), (3, 3)] {
        let mut s = SymmetricMps::build_assignment(n, m).unwrap();
        worst = worst.max(common::mixed_canonical_defect(s.mps(), s.mps().center().unwrap()));
        let feasible: Vec<Vec<usize>> =
            common::configs(&vec![2; n * m]).into_iter().filter(|x| s.charges().satisfies(x)).collect();
        let data = random_dataset(&feasible, 4, 800);
        let cfg = TrainConfig::new(1e-2, 4, 1).unwrap();
        for site in 0..n * m - 1 {
            two_site_update(&mut s, site, Direction::LeftToRight, &cfg, &data).unwrap();
            worst = worst.max(common::mixed_canonical_defect(s.mps(), s.mps().center().unwrap()));
        }
        for site in (0..n * m - 1).rev() {
            two_site_update(&mut s, site, Direction::RightToLeft, &cfg, &data).unwrap();
            worst = worst.max(common::mixed_canonical_defect(s.mps(), s.mps().center().unwrap()));
        }
    }
    outcome(worst < CANONICAL_TOL, format!("worst isometry / norm defect {worst:.2e}"))
}

fn encoding_equivalence() -> Outcome {
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=4 {
        for m in 1..=3 {
            let inst = generate_instance(n, m, &GeneratorConfig::default(), (10 * n + m) as u64).unwrap();
            let pen = PenaltyConfig::for_instance(&inst);
            for y in common::configs(&vec![m; n]) {
                let y = IntegerAssignment(y);
                let ci = inst.cost_integer(&y, &pen).unwrap();
                let cb = inst.cost_binary(&to_binary(&y, m).unwrap(), &pen).unwrap();
                mismatches += usize::from(ci != cb);
                checked += 1;
            }
        }
    }
    // selection table
    let inst = KnapsackInstance::new(vec![vec![3, 1], vec![1, 5]], vec![1, 1], vec![2, 2]).unwrap();
    let pen = PenaltyConfig::for_instance(&inst);
    let rows: [[usize; 4]; 6] = [[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1], [1, 1, 1, 1], [0, 0, 0, 0]];
    let costs = [-6.0, -4.0, -2.0, -8.0, -10.0, 0.0];
    let table = [
        (Selection::All, [true, true, true, true, true, true]),
        (Selection::Best, [true, false, false, true, true, false]),
        (Selection::Symmetric, [true, true, true, true, false, false]),
        (Selection::BestSymmetric, [true, true, false, true, false, false]),
    ];
    let entries: Vec<(Vec<usize>, f64)> = rows
        .iter()
        .map(|x| (x.to_vec(), inst.cost_binary(&BinaryAssignment::from_bits(2, 2, x).unwrap(), &pen).unwrap()))
        .collect();
    let mut cells_ok = entries.iter().map(|e| e.1).collect::<Vec<_>>() == costs;
    let pop = Population::from_entries(Encoding::Binary, entries).unwrap();
    for (s, want) in table {
        let sel = select(&pop, s, 3, &inst).unwrap();
        for (row, &keep) in rows.iter().zip(&want) {
            cells_ok &= sel.entries().iter().any(|(x, _)| x == row) == keep;
        }
    }
    outcome(
        mismatches == 0 && cells_ok,
        format!("{checked} assignments, {mismatches} cost mismatches; selection table {}", if cells_ok { "matches" } else { "differs" }),
    )
}

struct ParityRow {
    v: [f64; 2],
    r: [f64; 2],
    sa_v: f64,
}

fn parity_sizes() -> Vec<(usize, usize)> {
    vec![
        (4, 2), (6, 2), (8, 2), (10, 2), (12, 2), (14, 2),
        (4, 3), (6, 3), (7, 3), (9, 3),
        (4, 4), (5, 4), (6, 4), (7, 4),
        (4, 5), (5, 5), (6, 5),
        (4, 6), (5, 6), (4, 7),
    ]
}

fn geo_cell(inst: &KnapsackInstance, enc: Encoding, chi: usize, epochs: usize, seeds: std::ops::Range<u64>) -> (Vec<RunResult>, Duration) {
    let mut slowest = Duration::ZERO;
    let runs = seeds
        .map(|seed| {
            let mut cfg = GeoConfig::for_instance(inst, enc, seed);
            cfg.train = TrainConfig { learning_rate: 1e-3, max_bond: chi, epochs };
            cfg.selection = Selection::BestSymmetric;
            let t = Instant::now();
            let r = geo_run(inst, &cfg).unwrap();
            slowest = slowest.max(t.elapsed());
            r
        })
        .collect();
    (runs, slowest)
}

fn oracle_parity() -> (Outcome, Vec<(KnapsackInstance, ParityRow)>) {
    let grid = [(4, 1), (4, 3), (8, 1), (8, 3)];
    let mut rows = Vec::new();
    let mut slowest = Duration::ZERO;
    for (k, &(n, m)) in parity_sizes().iter().enumerate() {
        let inst = generate_instance(n, m, &GeneratorConfig::default(), 1000 + k as u64).unwrap();
        assert!(inst.search_space() <= 2e4);
        let mut n_f = 0;
        let mut row = ParityRow { v: [0.0; 2], r: [0.0; 2], sa_v: 0.0 };
        for (e, enc) in [Encoding::Integer, Encoding::Binary].into_iter().enumerate() {
            let mut best: Option<Metrics> = None;
            for &(chi, epochs) in &grid {
                let (runs, t) = geo_cell(&inst, enc, chi, epochs, 0..10);
                slowest = slowest.max(t);
                n_f = n_f.max(runs.iter().map(|r| r.n_f).max().unwrap());
                let mt = metrics(&runs, &inst).unwrap();
                let key = |x: &Metrics| (x.v, x.r.unwrap_or(0.0));
                if best.as_ref().is_none_or(|b| key(&mt) > key(b)) {
                    best = Some(mt);
                }
                if mt.v == 1.0 && mt.r == Some(1.0) {
                    break; // nothing can beat a perfect cell
                }
            }
            let best = best.unwrap();
            row.v[e] = best.v;
            row.r[e] = best.r.unwrap_or(0.0);
        }
        let sa: Vec<RunResult> = (0..10)
            .map(|seed| simulated_annealing(&inst, &SAConfig::for_budget(&inst, n_f, seed).unwrap()).unwrap())
            .collect();
        row.sa_v = metrics(&sa, &inst).unwrap().v;
        rows.push((inst, row));
    }
    let mean = |f: &dyn Fn(&ParityRow) -> f64| rows.iter().map(|(_, r)| f(r)).sum::<f64>() / rows.len() as f64;
    let v = [mean(&|r| r.v[0]), mean(&|r| r.v[1])];
    let r = [mean(&|r| r.r[0]), mean(&|r| r.r[1])];
    let sa_min = rows.iter().map(|(_, r)| r.sa_v).fold(1.0, f64::min);
    let passed = (0..2).all(|e| v[e] >= PARITY_V && r[e] >= PARITY_R) && sa_min == 1.0 && slowest < RUN_LIMIT;
    let detail = format!(
        "integer V={:.3} R={:.4}; binary V={:.3} R={:.4}; SA min V={sa_min:.1}; slowest run {:.2}s",
        v[0], r[0], v[1], r[1], slowest.as_secs_f64()
    );
    (outcome(passed, detail), rows)
}

fn hyperparameter_trend(instances: &[(KnapsackInstance, ParityRow)]) -> Outcome {
    let picks: Vec<&KnapsackInstance> = instances.iter().map(|(i, _)| i).filter(|i| i.n_bits() <= 16).take(5).collect();
    let mut lines = Vec::new();
    let mut holds = true;
    for enc in [Encoding::Integer, Encoding::Binary] {
        let mean_r = |cells: &[(usize, usize)]| {
            let mut total = 0.0;
            let mut count = 0.0;
            for inst in &picks {
                for &(chi, epochs) in cells {
                    let (runs, _) = geo_cell(inst, enc, chi, epochs, 0..3);
                    total += metrics(&runs, inst).unwrap().r.unwrap_or(0.0);
                    count += 1.0;
                }
            }
            total / count
        };
        let small = mean_r(&[(4, 1), (4, 3)]);
        let large = mean_r(&[(32, 10)]);
        holds &= small >= large;
        lines.push(format!("{enc:?}: R(chi=4)={small:.4} vs R(chi=32,N_e=10)={large:.4}"));
    }
    outcome(holds, lines.join("; "))
}

fn sa_schedule() -> Outcome {
    let mut worst_t = 0.0f64;
    for (t0, steps) in [(250.0, 10), (3.5, 1000), (1.0, 7), (0.2, 50), (1e4, 12345)] {
        let r = cooling_rate(t0, 1.0, steps);
        let t = (0..steps).fold(t0, |t, _| t * r);
        worst_t = worst_t.max((t - 1.0).abs());
    }
    let mut rng = common::rng(99);
    let mut worst_sigma = 0.0f64;
    let n = 100_000;
    for (delta, temp) in [(0.5f64, 1.0f64), (2.0, 1.0), (1.0, 3.0), (10.0, 4.0), (0.01, 0.1)] {
        let p = (-delta / temp).exp();
        let accepted = (0..n).filter(|_| metropolis_accept(delta, temp, rng.gen::<f64>())).count();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        worst_sigma = worst_sigma.max((accepted as f64 / n as f64 - p).abs() / sigma);
    }
    outcome(
        worst_t < TEMPERATURE_REL_TOL && worst_sigma < SIGMAS,
        format!("final temperature rel. error {worst_t:.1e}; worst acceptance deviation {worst_sigma:.2} sigma"),
    )
}

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut report = |name: &str, o: Outcome, hard: bool| {
        let tag = match (o.passed, hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        println!("[{tag}] {name}: {}", o.detail);
        if !o.passed && hard {
            failures.push(name.to_string());
        }
    };
    report("worked-figure reproduction", worked_figure(), true);
    report("constraint guarantee", constraint_guarantee(), true);
    report("exact-sampler fidelity", sampler_fidelity(), true);
    report("gradient correctness", gradient_correctness(), true);
    report("canonical-form suite", canonical_suite(), true);
    report("encoding equivalence", encoding_equivalence(), true);
    let (parity, rows) = oracle_parity();
    report("oracle parity", parity, true);
    report("hyperparameter trend (warning only)", hyperparameter_trend(&rows), false);
    report("SA schedule algebra", sa_schedule(), true);
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
