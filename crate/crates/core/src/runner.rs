//! End-to-end experiment: structures, constants, enumeration and the bound check.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::coordinate::{lemma1_check, CoordinateChange};
use crate::distortion::{dk_log_bound, estimate_constants, factor_three_products, koebe, BoundCheck, ConstantsReport, PairTrack, VisitCase};
use crate::error::{Error, Result};
use crate::exponent::{check_r_holder, estimate_asymmetry, estimate_exponent};
use crate::interval::Interval;
use crate::map::{MapModel, Side};
use crate::orbit::{enumerate_suitable, Enumeration};
use crate::report::{
    CriticalDiagnostics, EnumerationSummary, Provenance, RunReport, RunSummary, SequenceSummary, StructureSummary,
    ThreeProductSummary, Violation, SCHEMA_VERSION,
};
use crate::structure::CriticalStructure;

/// Everything built from a config before any sequence is examined.
pub struct Setup {
    pub map: MapModel,
    pub structure: CriticalStructure,
    pub coordinate: CoordinateChange,
}

impl Setup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let map = cfg.build_map()?;
        let structure = CriticalStructure::build(&map, &cfg.structure_params())?;
        let coordinate = CoordinateChange::build(&structure, &cfg.coordinate_params())?;
        Ok(Self { map, structure, coordinate })
    }

    pub fn constants(&self, cfg: &ExperimentConfig) -> Result<ConstantsReport> {
        estimate_constants(&self.map, &self.structure, &self.coordinate, &cfg.constant_params())
    }

    pub fn enumerate(&self, cfg: &ExperimentConfig) -> Result<Enumeration> {
        enumerate_suitable(&self.map, &self.structure, &cfg.roots(), cfg.verification.n_max)
    }
}

/// SHA-256 of the experiment sections of the config. The output section is
/// left out since it does not affect results.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let experiment = serde_json::json!({
        "map": cfg.map,
        "structure": cfg.structure,
        "coordinate": cfg.coordinate,
        "verification": cfg.verification,
    });
    let bytes = serde_json::to_vec(&experiment).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Pairs in a root interval: the endpoints, the two half-interval pairs,
/// then seeded uniform pairs (one random stream per root).
pub fn sample_pairs(root: Interval, count: usize, seed: u64, root_index: usize) -> Vec<(f64, f64)> {
    let mid = root.mid();
    let mut pairs = vec![(root.lo, root.hi), (root.lo, mid), (mid, root.hi)];
    pairs.truncate(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(root_index as u64 + 1);
    while pairs.len() < count {
        let x = root.lo + rng.gen::<f64>() * root.len();
        let y = root.lo + rng.gen::<f64>() * root.len();
        pairs.push((x, y));
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub sequence: usize,
    pub root: usize,
    pub length: usize,
    pub choices: String,
    pub tags: String,
    pub pair: usize,
    pub x: f64,
    pub y: f64,
    pub log_ratio: f64,
    pub log_noncritical: f64,
    pub log_critical: f64,
    pub holder_sum: f64,
    pub koebe_term: f64,
    pub log_bound: f64,
    pub log_margin: f64,
    pub status: &'static str,
}

pub const CSV_HEADER: &str =
    "sequence,root,length,choices,tags,pair,x,y,log_ratio,log_noncritical,log_critical,holder_sum,koebe_term,log_bound,log_margin,status";

impl CsvRow {
    pub fn write(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sequence,
            self.root,
            self.length,
            self.choices,
            self.tags,
            self.pair,
            self.x,
            self.y,
            self.log_ratio,
            self.log_noncritical,
            self.log_critical,
            self.holder_sum,
            self.koebe_term,
            self.log_bound,
            self.log_margin,
            self.status
        )
    }
}

struct NodeResult {
    tracks: Vec<PairTrack>,
    summary: SequenceSummary,
    violations: Vec<Violation>,
    rows: Vec<CsvRow>,
    three: Option<std::result::Result<crate::distortion::ThreeProductDiagnostic, String>>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn critical_diagnostics(setup: &Setup, cfg: &ExperimentConfig) -> Result<Vec<CriticalDiagnostics>> {
    let m = &setup.map;
    let v = &cfg.verification;
    setup
        .structure
        .entries
        .iter()
        .map(|e| {
            let lemma1 = lemma1_check(m, &setup.coordinate, e.c)?;
            Ok(CriticalDiagnostics {
                c: e.c,
                declared_gamma: e.gamma,
                left: estimate_exponent(m, e.c, Side::Left).map_err(|e| e.to_string()),
                right: estimate_exponent(m, e.c, Side::Right).map_err(|e| e.to_string()),
                asymmetry: estimate_asymmetry(m, e.c).map_err(|e| e.to_string()),
                r_holder: check_r_holder(m, e.c, e.gamma, v.alpha, v.holder_samples, v.seed).map_err(|e| e.to_string()),
                lemma1,
            })
        })
        .collect()
}

/// Runs the whole pipeline. CSV rows (one per sequence and pair) are
/// streamed to `csv` when given.
pub fn run_experiment(cfg: &ExperimentConfig, mut csv: Option<&mut dyn Write>) -> Result<RunReport> {
    cfg.validate()?;
    let setup = Setup::build(cfg)?;
    let critical_points = critical_diagnostics(&setup, cfg)?;
    let constants = setup.constants(cfg)?;
    let en = setup.enumerate(cfg)?;
    let (m, cs) = (&setup.map, &setup.structure);
    let v = &cfg.verification;

    let root_pairs: Vec<Vec<(f64, f64)>> = en
        .roots
        .iter()
        .enumerate()
        .map(|(r, iv)| sample_pairs(*iv, v.pairs_per_sequence, v.seed, r))
        .collect();
    let root_koebe: Vec<Vec<f64>> = root_pairs
        .iter()
        .map(|ps| ps.iter().map(|&(x, y)| koebe(x, y, cs.distance_to_postcritical(x, y))).collect())
        .collect();

    if let Some(out) = csv.as_deref_mut() {
        writeln!(out, "{CSV_HEADER}")?;
    }

    let mut sequences = Vec::with_capacity(en.len());
    let mut violations = Vec::new();
    let mut three = v.three_products.then(ThreeProductSummary::default);
    let want_rows = csv.is_some();
    let mut prev_tracks: Vec<Vec<PairTrack>> = Vec::new();
    for (depth, level) in en.levels.iter().enumerate() {
        let results: Vec<NodeResult> = en.nodes[level.clone()]
            .par_iter()
            .enumerate()
            .map(|(offset, node)| {
                let id = level.start + offset;
                let tracks: Vec<PairTrack> = match node.parent {
                    None => root_pairs[node.root].iter().map(|&(x, y)| PairTrack::new(x, y, v.alpha)).collect(),
                    Some(parent) => {
                        let lap = &en.laps[node.choice.expect("child has a choice")];
                        let parent_level = &en.levels[depth - 1];
                        prev_tracks[parent - parent_level.start]
                            .iter()
                            .map(|t| t.step(m, lap, &node.interval, node.tag, depth).map(|(n, _)| n))
                            .collect::<Result<_>>()?
                    }
                };
                evaluate_node(&setup, &en, id, tracks, &root_pairs[node.root], &root_koebe[node.root], &constants, cfg, want_rows)
            })
            .collect::<Result<_>>()?;
        let mut next_tracks = Vec::with_capacity(results.len());
        for r in results {
            if let Some(out) = csv.as_deref_mut() {
                for row in &r.rows {
                    row.write(out)?;
                }
            }
            if let (Some(summary), Some(diag)) = (three.as_mut(), r.three) {
                absorb_three(summary, r.summary.id, diag);
            }
            sequences.push(r.summary);
            violations.extend(r.violations);
            next_tracks.push(r.tracks);
        }
        prev_tracks = next_tracks;
    }

    let pairs = sequences.iter().map(|s| s.pairs).sum();
    let degenerate_pairs = sequences.iter().map(|s| s.degenerate).sum();
    let min_log_margin = sequences.iter().filter_map(|s| s.min_log_margin).min_by(f64::total_cmp);
    let summary = RunSummary {
        sequences: sequences.len(),
        pairs,
        degenerate_pairs,
        violations: violations.len(),
        min_log_margin,
        passed: violations.is_empty(),
    };
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance {
            config_sha256: config_hash(cfg),
            seed: v.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config: cfg.clone(),
        structure: StructureSummary {
            critical: cs.entries.clone(),
            cloud: cs.cloud.clone(),
            cloud_offset: cs.cloud_offset,
            noncritical: cs.noncritical.clone(),
            gap: cs.gap,
            shrinks: cs.shrinks.clone(),
            charts: setup.coordinate.charts().to_vec(),
        },
        critical_points,
        constants,
        enumeration: EnumerationSummary {
            roots: en.roots.clone(),
            sequences: en.len(),
            per_length: en.levels.iter().map(|l| l.len()).collect(),
            pruned_per_length: en.pruned.clone(),
        },
        sequences,
        three_products: three,
        violations,
        summary,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_node(
    setup: &Setup,
    en: &Enumeration,
    id: usize,
    tracks: Vec<PairTrack>,
    pairs: &[(f64, f64)],
    koebes: &[f64],
    constants: &ConstantsReport,
    cfg: &ExperimentConfig,
    want_rows: bool,
) -> Result<NodeResult> {
    let node = &en.nodes[id];
    let seq = (want_rows || cfg.verification.three_products).then(|| en.sequence(id));
    let (choices, tags) = match &seq {
        Some(s) if want_rows => (s.choice_string(), s.tag_string()),
        _ => (String::new(), String::new()),
    };
    let mut margins = Vec::with_capacity(tracks.len());
    let mut violations = Vec::new();
    let mut rows = Vec::new();
    let mut degenerate = 0;
    let mut max_abs_log_ratio = 0.0f64;
    for (p, (t, (&(x, y), &k))) in tracks.iter().zip(pairs.iter().zip(koebes)).enumerate() {
        let log_ratio = t.log_ratio();
        let check = if log_ratio.is_finite() { dk_log_bound(constants, t.holder_sum, k).ok() } else { None };
        let (log_bound, log_margin, status) = match check {
            Some(lb) => {
                let c = BoundCheck::new(lb, log_ratio);
                margins.push(c.log_margin);
                max_abs_log_ratio = max_abs_log_ratio.max(log_ratio.abs());
                if !c.holds {
                    violations.push(Violation { sequence: id, pair: p, x, y, log_ratio, log_bound: lb, log_margin: c.log_margin });
                }
                (lb, c.log_margin, if c.holds { "ok" } else { "violation" })
            }
            None => {
                degenerate += 1;
                (f64::NAN, f64::NAN, "degenerate")
            }
        };
        if want_rows {
            rows.push(CsvRow {
                sequence: id,
                root: node.root,
                length: node.depth,
                choices: choices.clone(),
                tags: tags.clone(),
                pair: p,
                x,
                y,
                log_ratio,
                log_noncritical: t.log_noncritical,
                log_critical: t.log_critical,
                holder_sum: t.holder_sum,
                koebe_term: k,
                log_bound,
                log_margin,
                status,
            });
        }
    }
    let three = match (&seq, cfg.verification.three_products) {
        (Some(s), true) => {
            let (x, y) = pairs[0];
            Some(
                factor_three_products(&setup.map, &setup.coordinate, &setup.structure, s, x, y, Some(constants))
                    .map_err(|e| e.to_string()),
            )
        }
        _ => None,
    };
    let summary = SequenceSummary {
        id,
        root: node.root,
        length: node.depth,
        choices: if want_rows { choices } else { seq.as_ref().map(|s| s.choice_string()).unwrap_or_default() },
        tags: if want_rows { tags } else { seq.as_ref().map(|s| s.tag_string()).unwrap_or_default() },
        pairs: tracks.len(),
        degenerate,
        min_log_margin: margins.iter().copied().min_by(f64::total_cmp),
        median_log_margin: median(margins),
        max_abs_log_ratio,
    };
    Ok(NodeResult { tracks, summary, violations, rows, three })
}

fn absorb_three(
    s: &mut ThreeProductSummary,
    id: usize,
    diag: std::result::Result<crate::distortion::ThreeProductDiagnostic, String>,
) {
    let diag = match diag {
        Ok(d) => d,
        Err(e) => {
            s.errors.push((id, e));
            return;
        }
    };
    s.sequences_checked += 1;
    s.visits += diag.visits.len();
    s.max_identity_error = s.max_identity_error.max(diag.max_identity_error);
    for v in &diag.visits {
        if !v.triangle_holds {
            s.triangle_failures += 1;
        }
        let failed = v.estimate_holds == Some(false);
        let counted = v.estimate_holds.is_some();
        let (checked, failures) = match v.case {
            VisitCase::Initial => (&mut s.initial_checked, &mut s.initial_failures),
            VisitCase::FirstLater => (&mut s.first_later_checked, &mut s.first_later_failures),
            VisitCase::Recurrent { .. } => (&mut s.recurrent_checked, &mut s.recurrent_failures),
        };
        *checked += counted as usize;
        *failures += failed as usize;
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
