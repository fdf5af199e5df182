//! One line per acceptance criterion. Exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use denjoy_koebe::exponent::{estimate_asymmetry, estimate_exponent};
use denjoy_koebe::runner::run_experiment;
use denjoy_koebe::{MapModel, Side};

const BOUND_RUNTIME: Duration = Duration::from_secs(60);
const CHAIN_RULE_TOL: f64 = 1e-5;
const CHAIN_RULE_SAMPLES: usize = 240;
const CHAIN_RULE_MAX_N: usize = 8;
const CONJUGACY_TOL: f64 = 1e-8;
const CONJUGACY_SAMPLES: usize = 150;
const CONJUGACY_MAX_N: usize = 20;
const NAIVE_MAPS: usize = 100;
const NAIVE_PAIRS: usize = 20;
const LEMMA1_QUADRATIC_TOL: f64 = 1e-4;
const LEMMA1_SPREAD_TOL: f64 = 1e-4;
const RECOVERY_TOL: f64 = 1e-3;
const EXPANSION_STEPS: usize = 30;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn bound_and_determinism() -> (Outcome, Outcome) {
    let cfg = common::quadratic_config();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let first = pool.install(|| run_experiment(&cfg, None)).expect("run succeeds");
    let elapsed = start.elapsed();
    let s = &first.summary;
    let full_depth = first.enumeration.per_length.len() == cfg.verification.n_max + 1;
    let c1 = outcome(
        s.violations == 0 && s.degenerate_pairs == 0 && full_depth && cfg.verification.pairs_per_sequence >= 50 && elapsed < BOUND_RUNTIME,
        format!(
            "{} sequences (n <= {}), {} pairs, {} violations, min log-margin {:.3e}, {:.1}s single-threaded",
            s.sequences,
            cfg.verification.n_max,
            s.pairs,
            s.violations,
            s.min_log_margin.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    );
    let second = run_experiment(&cfg, None).expect("run succeeds");
    let a = serde_json::to_vec(&first).unwrap();
    let b = serde_json::to_vec(&second).unwrap();
    let c8 = outcome(a == b, format!("{} bytes, identical across 1-thread and default pools: {}", a.len(), a == b));
    (c1, c8)
}

fn chain_rule() -> Outcome {
    let (n, worst) = common::chain_rule_oracle(CHAIN_RULE_SAMPLES, CHAIN_RULE_MAX_N, 2);
    outcome(worst <= CHAIN_RULE_TOL, format!("{n} samples, n <= {CHAIN_RULE_MAX_N}, max relative error {worst:.2e}"))
}

fn conjugacy() -> Outcome {
    let (n, worst) = common::conjugacy_oracle(CONJUGACY_SAMPLES, CONJUGACY_MAX_N, 3);
    outcome(worst <= CONJUGACY_TOL, format!("{n} samples, n <= {CONJUGACY_MAX_N}, max relative error {worst:.2e}"))
}

fn naive() -> Outcome {
    let o = common::naive_bound_brute_force(NAIVE_MAPS, NAIVE_PAIRS, 4);
    outcome(
        o.violations == 0 && o.maps == NAIVE_MAPS,
        format!(
            "{} maps, {} pairs, {} violations, max log-ratio/log-bound {:.3}",
            o.maps, o.pairs, o.violations, o.max_log_ratio_over_bound
        ),
    )
}

fn lemma1() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    let q = common::lemma1_for(&MapModel::quadratic(4.0).unwrap(), 0.5, 0.1);
    let (l, r) = (q.left.unwrap(), q.right.unwrap());
    passed &= (l.limit - 4.0).abs() <= LEMMA1_QUADRATIC_TOL && (r.limit + 4.0).abs() <= LEMMA1_QUADRATIC_TOL;
    parts.push(format!("quadratic {:+.8}/{:+.8}", l.limit, r.limit));
    for gamma in [1.5, 2.0, 3.0] {
        let rep = common::lemma1_for(&common::unimodal_normal_form(gamma), 0.0, 0.1);
        let (l, r) = (rep.left.unwrap(), rep.right.unwrap());
        passed &= l.limit.abs() > 1e-6 && r.limit.abs() > 1e-6;
        passed &= l.spread < LEMMA1_SPREAD_TOL && r.spread < LEMMA1_SPREAD_TOL;
        parts.push(format!("γ={gamma} {:+.6}/{:+.6} spread {:.1e}", l.limit, r.limit, l.spread.max(r.spread)));
    }
    outcome(passed, parts.join(", "))
}

fn recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    for gamma in [1.5, 2.0, 3.0] {
        for sigma in [-1.0, 2.0] {
            let m = common::power_law(gamma, sigma);
            for side in [Side::Left, Side::Right] {
                worst = worst.max((estimate_exponent(&m, 0.0, side).unwrap().gamma - gamma).abs());
            }
            worst = worst.max((estimate_asymmetry(&m, 0.0).unwrap().sigma - sigma).abs());
        }
    }
    outcome(worst <= RECOVERY_TOL, format!("6 maps, max error in γ and σ {worst:.2e}"))
}

fn tent_expansion() -> Outcome {
    let fit = common::tent_expansion(EXPANSION_STEPS);
    let raw = fit.derivs.iter().enumerate().all(|(k, &d)| d >= fit.k_const * fit.nu.powi(k as i32 + 1));
    outcome(
        fit.k_const == 1.0 && fit.nu == 2.0 && raw && fit.derivs.len() == EXPANSION_STEPS,
        format!("K = {}, ν = {}, raw inequality for k <= {}: {raw}", fit.k_const, fit.nu, fit.derivs.len()),
    )
}

fn main() {
    let (c1, c8) = bound_and_determinism();
    let results = [
        ("1 Denjoy-Koebe bound, quadratic a=4", c1),
        ("2 chain-rule oracle", chain_rule()),
        ("3 conjugacy oracle", conjugacy()),
        ("4 naive bound brute force", naive()),
        ("5 one-sided derivatives of h∘f", lemma1()),
        ("6 exponent and asymmetry recovery", recovery()),
        ("7 tent expansion constants", tent_expansion()),
        ("8 determinism", c8),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {} failed", results.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
