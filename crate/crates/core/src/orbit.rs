//! Forward orbits, inverse branches and suitable sequences.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::{MapModel, Side};
use crate::structure::{BranchTag, CriticalStructure};

pub fn forward_orbit(m: &MapModel, x: f64, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(x);
    let mut cur = x;
    for step in 1..=n {
        cur = m.eval(cur)?;
        if !m.domain().contains(cur) || !cur.is_finite() {
            return Err(Error::Escape { step, value: cur });
        }
        out.push(cur);
    }
    Ok(out)
}

/// `D_xy`; `+inf` for maps without critical points.
pub fn distance_to_postcritical(cs: &CriticalStructure, x: f64, y: f64) -> f64 {
    cs.distance_to_postcritical(x, y)
}

const CERTIFY_NODES: usize = 256;

/// A piece on which `f` is certified strictly monotone, with its image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lap {
    pub index: usize,
    pub piece: Interval,
    pub increasing: bool,
    pub image: Interval,
    /// Critical point at an endpoint, used to solve via exact offsets.
    anchor: Option<(usize, f64)>,
}

impl Lap {
    /// Derivative-sign certificate: sampled derivatives are nonzero and of
    /// one sign in the interior (zeros are allowed at the endpoints).
    pub fn certify(m: &MapModel, piece: Interval, index: usize) -> Result<Self> {
        let fail = || Error::Branch { lo: piece.lo, hi: piece.hi };
        if !(piece.len() > 0.0) || !m.domain().interval.contains_interval(&piece) {
            return Err(fail());
        }
        let mut sign = 0.0;
        for (k, x) in piece.grid(CERTIFY_NODES).enumerate() {
            let side = if k == 0 { Side::Right } else { Side::Left };
            let d = m.deriv(x, side)?;
            if k == 0 || k == CERTIFY_NODES {
                continue;
            }
            if d == 0.0 || !d.is_finite() || (sign != 0.0 && d.signum() != sign) {
                return Err(fail());
            }
            sign = d.signum();
        }
        let (a, b) = (m.eval_lift(piece.lo)?, m.eval_lift(piece.hi)?);
        let increasing = sign > 0.0;
        if (b > a) != increasing {
            return Err(fail());
        }
        let anchor = m
            .critical_points()
            .iter()
            .enumerate()
            .filter(|(_, cp)| cp.c == piece.lo || cp.c == piece.hi)
            .map(|(i, cp)| Ok((i, m.eval_lift(cp.c)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { index, piece, increasing, image: Interval::new(a, b), anchor: anchor.first().copied() })
    }

    /// Derivative at `x`, one-sided towards the inside of the piece.
    pub fn deriv(&self, m: &MapModel, x: f64) -> Result<f64> {
        let side = if x <= self.piece.lo {
            Side::Right
        } else if x >= self.piece.hi {
            Side::Left
        } else {
            Side::TwoSided
        };
        m.deriv(x, side)
    }

    fn residual(&self, m: &MapModel, x: f64, y: f64) -> Result<f64> {
        match self.anchor {
            Some((i, v)) => Ok(m.offset_from_critical_value(x, i)? - (y - v)),
            None => Ok(m.eval_lift(x)? - y),
        }
    }

    /// The unique `x` in the piece with `f(x) = y`: bisection down to
    /// adjacent floats, then one guarded Newton step.
    pub fn invert(&self, m: &MapModel, y: f64) -> Result<f64> {
        let tol = 1e-13 * self.image.len().max(y.abs()).max(1.0);
        if y < self.image.lo - tol || y > self.image.hi + tol || !y.is_finite() {
            return Err(Error::NoPreimage { y, lo: self.image.lo, hi: self.image.hi });
        }
        let (at_lo, at_hi) = if self.increasing {
            (self.image.lo, self.image.hi)
        } else {
            (self.image.hi, self.image.lo)
        };
        if y == at_lo {
            return Ok(self.piece.lo);
        }
        if y == at_hi {
            return Ok(self.piece.hi);
        }
        let orient = if self.increasing { 1.0 } else { -1.0 };
        let (mut a, mut b) = (self.piece.lo, self.piece.hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let r = orient * self.residual(m, mid, y)?;
            if r == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if r < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let x = 0.5 * (a + b);
        let r = self.residual(m, x, y)?;
        let d = self.deriv(m, x)?;
        if r != 0.0 && d != 0.0 && d.is_finite() {
            let polished = x - r / d;
            if self.piece.contains(polished) && self.residual(m, polished, y)?.abs() < r.abs() {
                return Ok(polished);
            }
        }
        Ok(x)
    }

    /// `f⁻¹(iv)` within the piece.
    pub fn pull_back(&self, m: &MapModel, iv: &Interval) -> Result<Interval> {
        Ok(Interval::new(self.invert(m, iv.lo)?, self.invert(m, iv.hi)?))
    }
}

/// Certified laps of the map between consecutive critical points.
pub fn laps(m: &MapModel) -> Result<Vec<Lap>> {
    m.laps().into_iter().enumerate().map(|(i, piece)| Lap::certify(m, piece, i)).collect()
}

/// The point of `piece` mapped to `y`, after certifying monotonicity.
pub fn inverse_branch(m: &MapModel, piece: Interval, y: f64) -> Result<f64> {
    Lap::certify(m, piece, 0)?.invert(m, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuitableSequence {
    /// `I_0, …, I_n`.
    pub intervals: Vec<Interval>,
    pub tags: Vec<BranchTag>,
    /// Lap index used to pull `I_j` back to `I_{j+1}`.
    pub choices: Vec<usize>,
    pub branches: Vec<Lap>,
}

impl SuitableSequence {
    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// Branch tags of `I_0 … I_n`, e.g. `V.V.W1-`.
    pub fn tag_string(&self) -> String {
        self.tags.iter().map(ToString::to_string).collect::<Vec<_>>().join(".")
    }

    /// Lap indices, e.g. `0-1-1`, or `root` for the empty pullback.
    pub fn choice_string(&self) -> String {
        if self.choices.is_empty() {
            "root".into()
        } else {
            self.choices.iter().map(ToString::to_string).collect::<Vec<_>>().join("-")
        }
    }
}

fn classify_or_reject(cs: &CriticalStructure, iv: &Interval, index: usize) -> Result<BranchTag> {
    cs.classify(iv).ok_or_else(|| Error::NotSuitable {
        index,
        reason: format!("{iv} straddles a critical point or crosses the critical set boundary"),
    })
}

fn pull_back_checked(m: &MapModel, lap: &Lap, iv: &Interval, index: usize) -> Result<Interval> {
    let tol = 1e-13 * lap.image.len().max(1.0);
    if iv.lo < lap.image.lo - tol || iv.hi > lap.image.hi + tol {
        return Err(Error::NotSuitable { index, reason: format!("{iv} is not inside the image {}", lap.image) });
    }
    lap.pull_back(m, iv).map_err(|e| match e {
        Error::NoPreimage { .. } => Error::NotSuitable { index, reason: e.to_string() },
        other => other,
    })
}

/// Pulls `i0` back along the laps named in `choices` (one per step).
pub fn build_suitable_sequence(
    m: &MapModel,
    cs: &CriticalStructure,
    i0: Interval,
    choices: &[usize],
) -> Result<SuitableSequence> {
    if !m.domain().interval.contains_interval(&i0) {
        return Err(Error::NotSuitable { index: 0, reason: format!("{i0} is not inside the domain") });
    }
    let all = laps(m)?;
    let mut intervals = vec![i0];
    let mut tags = vec![classify_or_reject(cs, &i0, 0)?];
    let mut branches = Vec::with_capacity(choices.len());
    for (j, &choice) in choices.iter().enumerate() {
        let lap = *all.get(choice).ok_or_else(|| Error::NotSuitable {
            index: j + 1,
            reason: format!("no lap with index {choice}"),
        })?;
        let next = pull_back_checked(m, &lap, &intervals[j], j + 1)?;
        tags.push(classify_or_reject(cs, &next, j + 1)?);
        intervals.push(next);
        branches.push(lap);
    }
    Ok(SuitableSequence { intervals, tags, choices: choices.to_vec(), branches })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumNode {
    pub root: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub choice: Option<usize>,
    pub interval: Interval,
    pub tag: BranchTag,
}

/// Breadth-first tree of all suitable sequences up to a length.
///
/// Nodes are stored level by level; inside a level they are ordered by root
/// and then lexicographically by the choice vector, independently of the
/// number of worker threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub laps: Vec<Lap>,
    pub roots: Vec<Interval>,
    pub nodes: Vec<EnumNode>,
    pub levels: Vec<Range<usize>>,
    /// Candidate children rejected at each depth.
    pub pruned: Vec<usize>,
}

impl Enumeration {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sequence(&self, node: usize) -> SuitableSequence {
        let mut chain = vec![node];
        while let Some(p) = self.nodes[*chain.last().expect("nonempty")].parent {
            chain.push(p);
        }
        chain.reverse();
        let choices: Vec<usize> = chain.iter().filter_map(|&i| self.nodes[i].choice).collect();
        SuitableSequence {
            intervals: chain.iter().map(|&i| self.nodes[i].interval).collect(),
            tags: chain.iter().map(|&i| self.nodes[i].tag).collect(),
            branches: choices.iter().map(|&c| self.laps[c]).collect(),
            choices,
        }
    }
}

pub fn enumerate_suitable(m: &MapModel, cs: &CriticalStructure, roots: &[Interval], n_max: usize) -> Result<Enumeration> {
    let laps = laps(m)?;
    let mut nodes = Vec::new();
    for (r, iv) in roots.iter().enumerate() {
        if !m.domain().interval.contains_interval(iv) {
            return Err(Error::NotSuitable { index: 0, reason: format!("root {iv} is not inside the domain") });
        }
        nodes.push(EnumNode {
            root: r,
            parent: None,
            depth: 0,
            choice: None,
            interval: *iv,
            tag: classify_or_reject(cs, iv, 0)?,
        });
    }
    let mut levels: Vec<Range<usize>> = Vec::new();
    levels.push(0..nodes.len());
    let mut pruned = vec![0];
    for depth in 1..=n_max {
        let prev = levels[depth - 1].clone();
        let expanded: Vec<Vec<Option<EnumNode>>> = nodes[prev.clone()]
            .par_iter()
            .enumerate()
            .map(|(offset, parent)| {
                laps.iter()
                    .map(|lap| {
                        let next = match pull_back_checked(m, lap, &parent.interval, depth) {
                            Ok(iv) => iv,
                            Err(Error::NotSuitable { .. }) => return Ok(None),
                            Err(e) => return Err(e),
                        };
                        Ok(cs.classify(&next).map(|tag| EnumNode {
                            root: parent.root,
                            parent: Some(prev.start + offset),
                            depth,
                            choice: Some(lap.index),
                            interval: next,
                            tag,
                        }))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let start = nodes.len();
        let mut rejected = 0;
        for child in expanded.into_iter().flatten() {
            match child {
                Some(node) => nodes.push(node),
                None => rejected += 1,
            }
        }
        levels.push(start..nodes.len());
        pruned.push(rejected);
        if start == nodes.len() {
            break;
        }
    }
    Ok(Enumeration { laps, roots: roots.to_vec(), nodes, levels, pruned })
}

/// Growth fit `|(f^k)'(x)| ≥ K·ν^k` for `1 ≤ k ≤ n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub k_const: f64,
    pub nu: f64,
    pub orbit_length: usize,
    /// `|(f^k)'(x)|` for `k = 1..=n`.
    pub derivs: Vec<f64>,
    pub holds: bool,
}

impl ExpansionFit {
    /// `K = min(1, min D_k)` and the largest `ν` with `D_k ≥ K·ν^k` for all `k`.
    pub fn from_derivs(derivs: Vec<f64>) -> Self {
        let n = derivs.len();
        let k_const = derivs.iter().copied().fold(1.0f64, f64::min);
        let mut nu = derivs
            .iter()
            .enumerate()
            .map(|(k, d)| ((d / k_const).log2() / (k + 1) as f64).exp2())
            .fold(f64::INFINITY, f64::min);
        while nu > 0.0 && !derivs.iter().enumerate().all(|(k, &d)| d >= k_const * nu.powi(k as i32 + 1)) {
            nu = nu.next_down();
        }
        let holds = n > 0 && k_const > 0.0 && nu > 1.0;
        Self { k_const, nu, orbit_length: n, derivs, holds }
    }
}

/// Expansion along the orbit of `x` for `n` steps. The points
/// `x, f(x), …, f^(n-1)(x)` must avoid the critical set.
pub fn expansion_check(m: &MapModel, cs: &CriticalStructure, x: f64, n: usize) -> Result<ExpansionFit> {
    let orbit = forward_orbit(m, x, n)?;
    let mut derivs = Vec::with_capacity(n);
    let mut acc = 1.0f64;
    for (step, &p) in orbit[..n].iter().enumerate() {
        if cs.in_critical_set(p) {
            return Err(Error::Precondition { step });
        }
        acc *= m.deriv(p, Side::TwoSided)?.abs();
        derivs.push(acc);
    }
    Ok(ExpansionFit::from_derivs(derivs))
}

/// Uniform expansion constants for orbit segments outside the critical set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionEnvelope {
    pub k_const: f64,
    pub nu: f64,
    /// Smallest `|(f^k)'|` seen over all sampled segments of length at least `k`.
    pub min_derivs: Vec<f64>,
    pub sample_points: usize,
}

/// Samples orbit segments starting on a grid of the noncritical set, each
/// followed until it enters the critical set or reaches `max_steps`, and
/// picks the `(K, ν)` with `D_k ≥ K·ν^k` that maximizes `K^α·(ν^α - 1)`.
pub fn expansion_envelope(
    m: &MapModel,
    cs: &CriticalStructure,
    samples: usize,
    max_steps: usize,
    alpha: f64,
) -> Result<ExpansionEnvelope> {
    let total: f64 = cs.noncritical.iter().map(|v| v.len()).sum();
    let starts: Vec<f64> = cs
        .noncritical
        .iter()
        .flat_map(|v| {
            let k = ((samples as f64) * v.len() / total).ceil().max(1.0) as usize;
            v.grid(k).collect::<Vec<_>>()
        })
        .collect();
    let per_point: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&x| {
            let mut derivs = Vec::new();
            let (mut p, mut acc) = (x, 1.0f64);
            for _ in 0..max_steps {
                if cs.in_critical_set(p) {
                    break;
                }
                acc *= m.deriv(p, Side::TwoSided)?.abs();
                derivs.push(acc);
                p = m.eval(p)?;
            }
            Ok(derivs)
        })
        .collect::<Result<_>>()?;
    let mut min_derivs = vec![f64::INFINITY; max_steps];
    for ds in &per_point {
        for (k, &d) in ds.iter().enumerate() {
            min_derivs[k] = min_derivs[k].min(d);
        }
    }
    let observed = min_derivs.iter().take_while(|d| d.is_finite()).count();
    min_derivs.truncate(observed);
    let mut best = (0.0, 1.0, f64::NEG_INFINITY);
    for j in 1..=2000 {
        let nu = (j as f64 * 2.0f64.ln() * 4.0 / 2000.0).exp();
        let k_const = min_derivs
            .iter()
            .enumerate()
            .map(|(k, d)| d / nu.powi(k as i32 + 1))
            .fold(1.0f64, f64::min);
        let score = k_const.powf(alpha) * (nu.powf(alpha) - 1.0);
        if score > best.2 {
            best = (k_const, nu, score);
        }
    }
    let (k_const, nu, _) = best;
    if !(k_const > 0.0 && nu > 1.0) || min_derivs.is_empty() {
        return Err(Error::NotVeryGood { reason: "no uniform expansion outside the critical set".into(), iterate: None });
    }
    Ok(ExpansionEnvelope { k_const, nu, min_derivs, sample_points: starts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{critical_structure, HalfSide};

    fn quadratic() -> (MapModel, CriticalStructure) {
        let m = MapModel::quadratic(4.0).unwrap();
        let cs = critical_structure(&m, &[0.1], 100).unwrap();
        (m, cs)
    }

    #[test]
    fn orbits() {
        let m = MapModel::quadratic(4.0).unwrap();
        assert_eq!(forward_orbit(&m, 0.5, 3).unwrap(), vec![0.5, 1.0, 0.0, 0.0]);
        let t = MapModel::tent(2.0).unwrap();
        let o = forward_orbit(&t, 0.4, 2).unwrap();
        assert_eq!(o[0], 0.4);
        assert!((o[1] - 0.8).abs() < 1e-15 && (o[2] - 0.4).abs() < 1e-15);
        assert_eq!(forward_orbit(&m, 0.3, 0).unwrap(), vec![0.3]);
    }

    #[test]
    fn inverse_branches() {
        let m = MapModel::quadratic(4.0).unwrap();
        let left = Interval::new(0.0, 0.5);
        assert!((inverse_branch(&m, left, 0.75).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(inverse_branch(&m, left, 1.0).unwrap(), 0.5);
        let t = MapModel::tent(2.0).unwrap();
        assert!((inverse_branch(&t, left, 0.9).unwrap() - 0.45).abs() < 1e-15);
        assert!(matches!(inverse_branch(&m, left, 1.2), Err(Error::NoPreimage { .. })));
        assert!(matches!(inverse_branch(&m, Interval::new(0.4, 0.6), 0.9), Err(Error::Branch { .. })));
    }

    #[test]
    fn one_step_sequence() {
        let (m, cs) = quadratic();
        let seq = build_suitable_sequence(&m, &cs, Interval::new(0.7, 0.8), &[0]).unwrap();
        let i1 = seq.intervals[1];
        assert!((i1.lo - (1.0 - 0.3f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((i1.hi - 0.276_393_202_250_021).abs() < 1e-14);
        assert_eq!(seq.tags, vec![BranchTag::V, BranchTag::V]);
        assert_eq!(seq.tag_string(), "V.V");
    }

    #[test]
    fn empty_and_rejected_sequences() {
        let (m, cs) = quadratic();
        let seq = build_suitable_sequence(&m, &cs, Interval::new(0.45, 0.5), &[]).unwrap();
        assert_eq!(seq.tags, vec![BranchTag::W { index: 0, side: HalfSide::Minus }]);
        for choice in [0, 1] {
            let err = build_suitable_sequence(&m, &cs, Interval::new(0.9, 1.0), &[choice]).unwrap_err();
            assert!(matches!(err, Error::NotSuitable { index: 1, .. }), "{err:?}");
        }
    }

    #[test]
    fn enumeration_matches_direct_construction() {
        let (m, cs) = quadratic();
        let roots = [Interval::new(0.7, 0.8), Interval::new(0.2, 0.3)];
        let en = enumerate_suitable(&m, &cs, &roots, 6).unwrap();
        assert_eq!(en.levels.len(), 7);
        for node in 0..en.len() {
            let seq = en.sequence(node);
            let direct = build_suitable_sequence(&m, &cs, roots[en.nodes[node].root], &seq.choices).unwrap();
            assert_eq!(seq, direct);
        }
        let again = enumerate_suitable(&m, &cs, &roots, 6).unwrap();
        assert_eq!(en, again);
    }

    #[test]
    fn tent_expansion_is_exact() {
        let t = MapModel::tent(2.0).unwrap();
        let cs = critical_structure(&t, &[0.05], 50).unwrap();
        let fit = expansion_check(&t, &cs, 2.0 / 3.0, 30).unwrap();
        assert_eq!(fit.k_const, 1.0);
        assert_eq!(fit.nu, 2.0);
        assert!(fit.holds);
    }

    #[test]
    fn quadratic_expansion_until_critical_set() {
        let (m, cs) = quadratic();
        let fit = expansion_check(&m, &cs, 0.1, 5).unwrap();
        assert!(fit.holds && fit.nu > 1.0);
        for (k, d) in fit.derivs.iter().enumerate() {
            assert!(*d >= fit.k_const * fit.nu.powi(k as i32 + 1));
        }
        assert!(matches!(expansion_check(&m, &cs, 0.1, 7), Err(Error::Precondition { step: 5 })));
    }

    #[test]
    fn contracting_fixed_point_fails() {
        let e = crate::map::ExpressionMap::parse("0.5 * x + 0.25", Some("0.5")).unwrap();
        let m = MapModel::builder(crate::map::Family::Expression(e), Interval::new(0.0, 1.0))
            .critical(vec![])
            .build()
            .unwrap();
        let cs = critical_structure(&m, &[], 10).unwrap();
        let fit = expansion_check(&m, &cs, 0.5, 10).unwrap();
        assert!(!fit.holds);
    }
}
