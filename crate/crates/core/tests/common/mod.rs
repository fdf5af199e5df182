//! Independent oracles shared by the acceptance target and the oracle tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use denjoy_koebe::config::ExperimentConfig;
use denjoy_koebe::coordinate::{lemma1_check, CoordinateChange, CoordinateParams, Lemma1Report};
use denjoy_koebe::distortion::{distortion_along, naive_bound};
use denjoy_koebe::map::{ExpressionMap, NormalForm, Orientation};
use denjoy_koebe::orbit::{build_suitable_sequence, enumerate_suitable, expansion_check, laps, ExpansionFit, SuitableSequence};
use denjoy_koebe::runner::Setup;
use denjoy_koebe::structure::{CriticalStructure, StructureParams};
use denjoy_koebe::{Family, Interval, MapModel, Side};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn quadratic_config() -> ExperimentConfig {
    ExperimentConfig::load(&config_path("quadratic_a4.toml")).expect("quadratic config loads")
}

/// `g_n(t)`: `t` pulled back along every branch of `seq`.
pub fn compose_inverse(m: &MapModel, seq: &SuitableSequence, t: f64) -> f64 {
    seq.branches.iter().fold(t, |p, lap| lap.invert(m, p).expect("inverse branch"))
}

/// Five-point central difference of `g_n`.
pub fn fd_inverse_deriv(m: &MapModel, seq: &SuitableSequence, t: f64, h: f64) -> f64 {
    let g = |s: f64| compose_inverse(m, seq, s);
    (-g(t + 2.0 * h) + 8.0 * g(t + h) - 8.0 * g(t - h) + g(t - 2.0 * h)) / (12.0 * h)
}

/// Largest relative gap between the chain-rule ratio and the ratio of
/// numerical derivatives of the composed inverse branch, over `samples`
/// random (sequence, pair) draws with `1 ≤ n ≤ n_max`.
pub fn chain_rule_oracle(samples: usize, n_max: usize, seed: u64) -> (usize, f64) {
    let cfg = quadratic_config();
    let setup = Setup::build(&cfg).unwrap();
    let en = enumerate_suitable(&setup.map, &setup.structure, &cfg.roots(), n_max).unwrap();
    let candidates: Vec<usize> = (0..en.len()).filter(|&i| en.nodes[i].depth > 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let id = candidates[rng.gen_range(0..candidates.len())];
        let seq = en.sequence(id);
        let i0 = seq.intervals[0];
        let inner = |u: f64| i0.lo + (0.1 + 0.8 * u) * i0.len();
        let (x, y) = (inner(rng.gen()), inner(rng.gen()));
        let rep = distortion_along(&setup.map, &setup.structure, &seq, x, y, 1.0).unwrap();
        let h = 1e-4 * i0.len();
        let fd = fd_inverse_deriv(&setup.map, &seq, x, h).abs() / fd_inverse_deriv(&setup.map, &seq, y, h).abs();
        worst = worst.max((fd / rep.ratio - 1.0).abs());
    }
    (samples, worst)
}

/// A random suitable sequence of length `n` for the quadratic, found by
/// redrawing branch choices until the pullback is suitable.
fn random_sequence(m: &MapModel, cs: &CriticalStructure, roots: &[Interval], n: usize, rng: &mut ChaCha8Rng) -> SuitableSequence {
    loop {
        let root = roots[rng.gen_range(0..roots.len())];
        let choices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        if let Ok(seq) = build_suitable_sequence(m, cs, root, &choices) {
            return seq;
        }
    }
}

/// Closed-form distortion for `4x(1-x)` through the conjugacy
/// `s = (2/π)·asin√x` to the tent map, whose inverse branches are `s/2`
/// and `1 - s/2`. Tracks `(s, 1-s)` so `sin(π s)` keeps full precision.
pub fn conjugacy_ratio(choices: &[usize], x: f64, y: f64) -> f64 {
    let end = |p: f64| {
        let s = 2.0 / PI * p.sqrt().asin();
        let (mut s, mut sb) = (s, 2.0 / PI * (1.0 - p).sqrt().asin());
        for &c in choices {
            (s, sb) = if c == 0 { (s / 2.0, 0.5 + sb / 2.0) } else { (0.5 + sb / 2.0, s / 2.0) };
        }
        (PI * s.min(sb)).sin()
    };
    let start = |p: f64| (p * (1.0 - p)).sqrt();
    // |g'(p)| = sqrt(p_n(1-p_n)) / sqrt(p(1-p)) up to the constant 2^-n.
    (end(x) / start(x)) / (end(y) / start(y))
}

pub fn conjugacy_oracle(samples: usize, n_max: usize, seed: u64) -> (usize, f64) {
    let cfg = quadratic_config();
    let setup = Setup::build(&cfg).unwrap();
    let roots = cfg.roots();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.gen_range(1..=n_max);
        let seq = random_sequence(&setup.map, &setup.structure, &roots, n, &mut rng);
        let i0 = seq.intervals[0];
        let x = i0.lo + rng.gen::<f64>() * i0.len();
        let y = i0.lo + rng.gen::<f64>() * i0.len();
        let rep = distortion_along(&setup.map, &setup.structure, &seq, x, y, 1.0).unwrap();
        let closed = conjugacy_ratio(&seq.choices, x, y);
        worst = worst.max((rep.ratio / closed - 1.0).abs());
    }
    (samples, worst)
}

pub struct NaiveOutcome {
    pub maps: usize,
    pub pairs: usize,
    pub violations: usize,
    pub max_log_ratio_over_bound: f64,
}

/// Random cubic diffeomorphisms of `[0,1]` (possibly orientation-reversing)
/// with `K` and `β` brute-forced on a 10³-point grid. Pairs are pulled back
/// up to 30 steps and the exact ratio is compared with the naive bound.
pub fn naive_bound_brute_force(maps: usize, pairs_per_map: usize, seed: u64) -> NaiveOutcome {
    const GRID: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NaiveOutcome { maps: 0, pairs: 0, violations: 0, max_log_ratio_over_bound: 0.0 };
    while out.maps < maps {
        let a: f64 = rng.gen_range(-0.9..0.9);
        let b: f64 = rng.gen_range(-0.9..0.9);
        let flip = rng.gen_bool(0.5);
        let dp = |x: f64| 1.0 + a * (1.0 - 2.0 * x) + b * (-6.0 * x * x + 6.0 * x - 1.0);
        let grid: Vec<f64> = (0..GRID).map(|i| i as f64 / (GRID - 1) as f64).collect();
        let beta = grid.iter().map(|&x| dp(x).abs()).fold(f64::INFINITY, f64::min);
        if beta < 0.05 {
            continue;
        }
        let alpha = if out.maps.is_multiple_of(2) { 1.0 } else { 0.5 };
        let mut k = 0.0f64;
        for i in 0..GRID {
            for j in i + 1..GRID {
                k = k.max((dp(grid[i]) - dp(grid[j])).abs() / (grid[j] - grid[i]).powf(alpha));
            }
        }
        let p = format!("x + ({a})*x*(1.0-x) + ({b})*x*(1.0-x)*(2.0*x-1.0)");
        let q = format!("1.0 + ({a})*(1.0-2.0*x) + ({b})*(-6.0*x*x + 6.0*x - 1.0)");
        let (expr, deriv) = if flip { (format!("1.0 - ({p})"), format!("-({q})")) } else { (p, q) };
        let m = MapModel::builder(
            Family::Expression(ExpressionMap::parse(&expr, Some(&deriv)).unwrap()),
            Interval::new(0.0, 1.0),
        )
        .critical(vec![])
        .build()
        .unwrap();
        let lap = laps(&m).unwrap()[0];
        for _ in 0..pairs_per_map {
            let n = rng.gen_range(1..=30);
            let (mut x, mut y): (f64, f64) = (rng.gen(), rng.gen());
            let mut log_ratio = 0.0;
            let mut diffs = Vec::with_capacity(n);
            for _ in 0..n {
                x = lap.invert(&m, x).unwrap();
                y = lap.invert(&m, y).unwrap();
                // g_n'(x)/g_n'(y) = ∏ f'(y_j)/f'(x_j).
                log_ratio += (m.deriv(y, Side::TwoSided).unwrap() / m.deriv(x, Side::TwoSided).unwrap()).abs().ln();
                diffs.push(x - y);
            }
            let bound = naive_bound(k, beta, &diffs, alpha).unwrap();
            out.pairs += 1;
            if log_ratio.abs() > bound.ln() + 1e-12 {
                out.violations += 1;
            }
            if bound.ln() > 0.0 {
                out.max_log_ratio_over_bound = out.max_log_ratio_over_bound.max(log_ratio.abs() / bound.ln());
            }
        }
        out.maps += 1;
    }
    out
}

/// `v - |u|^γ` on `[-v, v]` with `v = 2^(1/(γ-1))`: the critical value `v`
/// lands on the fixed endpoint `-v`.
pub fn unimodal_normal_form(gamma: f64) -> MapModel {
    let v = 2f64.powf(1.0 / (gamma - 1.0));
    let nf = NormalForm { c: 0.0, gamma_left: gamma, gamma_right: gamma, sigma: -1.0, value: v, orientation: Orientation::FallingRight };
    MapModel::builder(Family::NormalForm(nf), Interval::new(-v, v)).build().unwrap()
}

pub fn lemma1_for(m: &MapModel, c: f64, radius: f64) -> Lemma1Report {
    let cs = CriticalStructure::build(m, &StructureParams::new(vec![radius], 100)).unwrap();
    let cc = CoordinateChange::build(&cs, &CoordinateParams::default()).unwrap();
    lemma1_check(m, &cc, c).unwrap()
}

/// `-σ|u|^γ` left of 0 and `|u|^γ` right of it, on `[-1/4, 1/4]`.
pub fn power_law(gamma: f64, sigma: f64) -> MapModel {
    let nf = NormalForm { c: 0.0, gamma_left: gamma, gamma_right: gamma, sigma, value: 0.0, orientation: Orientation::RisingRight };
    MapModel::builder(Family::NormalForm(nf), Interval::new(-0.25, 0.25)).build().unwrap()
}

/// Expansion along the fixed point `2/3` of the slope-2 tent map.
pub fn tent_expansion(steps: usize) -> ExpansionFit {
    let m = MapModel::tent(2.0).unwrap();
    let cs = CriticalStructure::build(&m, &StructureParams::new(vec![0.1], 100)).unwrap();
    expansion_check(&m, &cs, 2.0 / 3.0, steps).unwrap()
}
