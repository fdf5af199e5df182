mod common;

use denjoy_koebe::coordinate::{CoordinateChange, CoordinateParams};
use denjoy_koebe::distortion::{distortion_along, factor_three_products, VisitCase};
use denjoy_koebe::orbit::{build_suitable_sequence, enumerate_suitable};
use denjoy_koebe::runner::Setup;
use denjoy_koebe::structure::{CriticalStructure, StructureParams};
use denjoy_koebe::{Interval, MapModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn chain_rule_matches_numerical_derivative() {
    let (_, worst) = common::chain_rule_oracle(200, 6, 21);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn quadratic_matches_tent_conjugacy() {
    let (_, worst) = common::conjugacy_oracle(100, 20, 22);
    assert!(worst < 1e-8, "worst relative error {worst}");
}

#[test]
fn conjugacy_closed_form_single_step() {
    // x = 0.75, y = 0.8 pulled back once along the left lap.
    let r = common::conjugacy_ratio(&[0], 0.75, 0.8);
    assert!((r - 0.894427191).abs() < 1e-9);
}

#[test]
fn worked_example_ratio() {
    let m = MapModel::quadratic(4.0).unwrap();
    let cs = CriticalStructure::build(&m, &StructureParams::new(vec![0.1], 100)).unwrap();
    let seq = build_suitable_sequence(&m, &cs, Interval::new(0.7, 0.85), &[0]).unwrap();
    let rep = distortion_along(&m, &cs, &seq, 0.75, 0.8, 1.0).unwrap();
    assert!((rep.xs[1] - 0.25).abs() < 1e-15);
    assert!((rep.ys[1] - (1.0 - 0.2f64.sqrt()) / 2.0).abs() < 1e-15);
    assert!((rep.ratio - 0.894427191).abs() < 1e-9);
}

#[test]
fn naive_bound_never_violated() {
    let o = common::naive_bound_brute_force(30, 20, 23);
    assert_eq!(o.violations, 0);
    assert!(o.max_log_ratio_over_bound <= 1.0);
}

#[test]
fn tent_ratio_is_one_on_linear_pieces() {
    let m = MapModel::tent(2.0).unwrap();
    let cs = CriticalStructure::build(&m, &StructureParams::new(vec![0.1], 100)).unwrap();
    let en = enumerate_suitable(&m, &cs, &[Interval::new(0.1, 0.3), Interval::new(0.7, 0.9)], 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in (0..en.len()).step_by(7) {
        let seq = en.sequence(id);
        let i0 = seq.intervals[0];
        let (x, y) = (i0.lo + rng.gen::<f64>() * i0.len(), i0.lo + rng.gen::<f64>() * i0.len());
        let rep = distortion_along(&m, &cs, &seq, x, y, 1.0).unwrap();
        assert_eq!(rep.ratio, 1.0);
    }
}

/// The per-visit factorization `h-ratio · f̃-ratio · chart-ratio` reproduces
/// the chain-rule ratio on random pairs.
#[test]
fn three_product_identity() {
    let cfg = common::quadratic_config();
    let setup = Setup::build(&cfg).unwrap();
    let consts = setup.constants(&cfg).unwrap();
    let en = enumerate_suitable(&setup.map, &setup.structure, &cfg.roots(), 9).unwrap();
    let with_visits: Vec<usize> = (0..en.len()).filter(|&i| en.sequence(i).tags.iter().any(|t| t.to_string() != "V")).collect();
    assert!(!with_visits.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = [0usize; 2];
    for _ in 0..1000 {
        let id = with_visits[rng.gen_range(0..with_visits.len())];
        let seq = en.sequence(id);
        let i0 = seq.intervals[0];
        let (x, y) = (i0.lo + rng.gen::<f64>() * i0.len(), i0.lo + rng.gen::<f64>() * i0.len());
        let d = factor_three_products(&setup.map, &setup.coordinate, &setup.structure, &seq, x, y, Some(&consts)).unwrap();
        assert!(d.max_identity_error < 1e-8, "identity error {}", d.max_identity_error);
        for v in &d.visits {
            assert!(v.triangle_holds);
            assert_ne!(v.estimate_holds, Some(false));
            match v.case {
                VisitCase::FirstLater => cases[0] += 1,
                VisitCase::Recurrent { .. } => cases[1] += 1,
                VisitCase::Initial => {}
            }
        }
    }
    assert!(cases.iter().all(|&c| c > 0), "visit cases seen: {cases:?}");
}

/// A root just below the critical value pulls back into the critical
/// neighbourhood on the first step.
#[test]
fn initial_visit_case() {
    let m = MapModel::quadratic(4.0).unwrap();
    let cs = CriticalStructure::build(&m, &StructureParams::new(vec![0.1], 100)).unwrap();
    let cc = CoordinateChange::build(&cs, &CoordinateParams::default()).unwrap();
    let seq = build_suitable_sequence(&m, &cs, Interval::new(0.97, 0.99), &[0, 0]).unwrap();
    assert_eq!(seq.tag_string(), "V.W1-.V");
    let d = factor_three_products(&m, &cc, &cs, &seq, 0.972, 0.985, None).unwrap();
    assert_eq!(d.visits.len(), 1);
    assert!(matches!(d.visits[0].case, VisitCase::Initial));
    assert!(d.visits[0].triangle_holds);
    assert!(d.max_identity_error < 1e-8);
}
