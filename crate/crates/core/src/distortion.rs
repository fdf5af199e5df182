//! Distortion of inverse branches along suitable sequences, the constants of
//! the Denjoy-Koebe bound and the three-product diagnostics.
//!
//! Ratios are kept in log space throughout: for long sequences the bound
//! constants are large enough that `exp` overflows long before the
//! comparison stops being meaningful.

use serde::{Deserialize, Serialize};

use crate::coordinate::CoordinateChange;
use crate::error::{Error, Result};
use crate::exponent::estimate_holder;
use crate::interval::Interval;
use crate::map::{MapModel, Side};
use crate::orbit::{expansion_envelope, forward_orbit, Lap, SuitableSequence};
use crate::structure::{BranchTag, CriticalStructure, HalfSide};

/// A margin below `-LOG_MARGIN_TOL` (in log space) counts as a violation.
pub const LOG_MARGIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFactor {
    /// `i` in `1..=n`; the factor is `|f'(y_i)| / |f'(x_i)|`.
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub tag: BranchTag,
    pub deriv_x: f64,
    pub deriv_y: f64,
    pub log_factor: f64,
}

/// Running state of a pair pulled back step by step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTrack {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub holder_sum: f64,
    pub log_noncritical: f64,
    pub log_critical: f64,
}

impl PairTrack {
    pub fn new(x: f64, y: f64, alpha: f64) -> Self {
        Self { x, y, alpha, holder_sum: (x - y).abs().powf(alpha), log_noncritical: 0.0, log_critical: 0.0 }
    }

    pub fn log_ratio(&self) -> f64 {
        self.log_noncritical + self.log_critical
    }

    /// Pulls the pair back through `lap` into `target` (the next interval of
    /// the sequence, tagged `tag`). `index` is the new position in the sequence.
    pub fn step(&self, m: &MapModel, lap: &Lap, target: &Interval, tag: BranchTag, index: usize) -> Result<(Self, StepFactor)> {
        let x = lap.invert(m, self.x)?;
        let y = lap.invert(m, self.y)?;
        let tol = 1e-12 + 1e-9 * target.len();
        if target.distance_to(x) > tol || target.distance_to(y) > tol {
            return Err(Error::Consistency { index });
        }
        let deriv_x = lap.deriv(m, x)?;
        let deriv_y = lap.deriv(m, y)?;
        let log_factor = if x == y { 0.0 } else { deriv_y.abs().ln() - deriv_x.abs().ln() };
        let mut next = *self;
        next.x = x;
        next.y = y;
        next.holder_sum += (x - y).abs().powf(self.alpha);
        match tag {
            BranchTag::V => next.log_noncritical += log_factor,
            BranchTag::W { .. } => next.log_critical += log_factor,
        }
        Ok((next, StepFactor { index, x, y, tag, deriv_x, deriv_y, log_factor }))
    }
}

/// `bound / max(ratio, 1/ratio)` in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub log_bound: f64,
    pub log_margin: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(log_bound: f64, log_ratio: f64) -> Self {
        let log_margin = log_bound - log_ratio.abs();
        Self { log_bound, log_margin, holds: log_margin >= -LOG_MARGIN_TOL }
    }

    pub fn bound(&self) -> f64 {
        self.log_bound.exp()
    }

    pub fn margin(&self) -> f64 {
        self.log_margin.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub x: f64,
    pub y: f64,
    pub n: usize,
    pub alpha: f64,
    /// `x_0 … x_n` and `y_0 … y_n`.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub steps: Vec<StepFactor>,
    /// `log(|g_n'(x)| / |g_n'(y)|)`.
    pub log_ratio: f64,
    pub ratio: f64,
    pub log_noncritical: f64,
    pub log_critical: f64,
    pub holder_sum: f64,
    pub d_xy: f64,
    pub koebe_term: f64,
    pub bound: Option<BoundCheck>,
}

impl DistortionReport {
    pub fn attach_bound(&mut self, consts: &ConstantsReport) -> Result<BoundCheck> {
        let check = BoundCheck::new(dk_log_bound(consts, self.holder_sum, self.koebe_term)?, self.log_ratio);
        self.bound = Some(check);
        Ok(check)
    }
}

/// Exact distortion `|g_n'(x)| / |g_n'(y)| = ∏ |f'(y_i)| / |f'(x_i)|`.
pub fn distortion_along(
    m: &MapModel,
    cs: &CriticalStructure,
    seq: &SuitableSequence,
    x: f64,
    y: f64,
    alpha: f64,
) -> Result<DistortionReport> {
    let i0 = seq.intervals[0];
    if !i0.contains(x) || !i0.contains(y) {
        return Err(Error::Consistency { index: 0 });
    }
    let mut track = PairTrack::new(x, y, alpha);
    let mut xs = vec![x];
    let mut ys = vec![y];
    let mut steps = Vec::with_capacity(seq.len());
    for j in 0..seq.len() {
        let (next, factor) = track.step(m, &seq.branches[j], &seq.intervals[j + 1], seq.tags[j + 1], j + 1)?;
        track = next;
        xs.push(track.x);
        ys.push(track.y);
        steps.push(factor);
    }
    let d_xy = cs.distance_to_postcritical(x, y);
    let koebe_term = koebe(x, y, d_xy);
    let log_ratio = track.log_ratio();
    Ok(DistortionReport {
        x,
        y,
        n: seq.len(),
        alpha,
        xs,
        ys,
        steps,
        log_ratio,
        ratio: log_ratio.exp(),
        log_noncritical: track.log_noncritical,
        log_critical: track.log_critical,
        holder_sum: track.holder_sum,
        d_xy,
        koebe_term,
        bound: None,
    })
}

/// `|x - y| / D_xy`, with `0` for an empty post-critical set and `+inf` when `D_xy = 0`.
pub fn koebe(x: f64, y: f64, d_xy: f64) -> f64 {
    let d = (x - y).abs();
    if d == 0.0 {
        0.0
    } else if d_xy == 0.0 {
        f64::INFINITY
    } else {
        d / d_xy
    }
}

/// `exp((K/β)·Σ diffs^α)`.
pub fn naive_bound(k: f64, beta: f64, diffs: &[f64], alpha: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidConstant(format!("beta = {beta} must be positive")));
    }
    if !(k >= 0.0) {
        return Err(Error::InvalidConstant(format!("K = {k} must be nonnegative")));
    }
    let sum: f64 = diffs.iter().map(|d| d.abs().powf(alpha)).sum();
    Ok(((k / beta) * sum).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantParams {
    pub alpha: f64,
    pub samples: usize,
    pub safety: f64,
    pub seed: u64,
    pub expansion_samples: usize,
    pub expansion_steps: usize,
}

impl Default for ConstantParams {
    fn default() -> Self {
        Self { alpha: 1.0, samples: 2000, safety: 1.5, seed: 0, expansion_samples: 2000, expansion_steps: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub alpha: f64,
    pub safety: f64,
    pub k1: f64,
    pub beta1: f64,
    pub k2: f64,
    pub beta2: f64,
    pub k3: f64,
    pub beta3: f64,
    /// `sup h'` over the critical set.
    pub h_sup: f64,
    pub k4: f64,
    /// Distance between the critical set and the post-critical cloud.
    pub l: f64,
    pub tau: f64,
    pub expansion_k: f64,
    pub expansion_nu: f64,
    /// `max(1, diam)^(1-α)`, turning sums of `|d|` into sums of `|d|^α`.
    pub length_factor: f64,
    /// The asserted constants use `max(τ, 1/τ)`.
    pub tau_factor: f64,
    pub a: f64,
    pub b: f64,
    /// With `K4/τ` in place of `K4·max(τ, 1/τ)`.
    pub a_over_tau: f64,
    pub b_over_tau: f64,
    /// With `K4·τ`.
    pub a_times_tau: f64,
    pub b_times_tau: f64,
    pub convention: String,
}

const MIN_GRID: usize = 4096;
const TINY: f64 = 1e-12;

fn grid_min(iv: Interval, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for x in iv.grid(MIN_GRID) {
        let v = f(x)?.abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Pieces of the noncritical set on which `f'` is continuous.
fn noncritical_pieces(m: &MapModel, cs: &CriticalStructure) -> Vec<Interval> {
    let laps = m.laps();
    cs.noncritical
        .iter()
        .flat_map(|v| {
            laps.iter().filter_map(move |l| {
                let lo = v.lo.max(l.lo);
                let hi = v.hi.min(l.hi);
                (hi > lo).then(|| Interval::new(lo, hi))
            })
        })
        .collect()
}

/// `f̃'(h(x)) = f'(x)·h'(f(x))/h'(x)` on a half-neighborhood, through exact offsets.
fn tilde_exact(m: &MapModel, cc: &CoordinateChange, i: usize, x: f64, side: Side) -> Result<f64> {
    let chart = &cc.charts()[cc.critical()[i].chart];
    let d = m.offset_from_critical_value(x, i)?;
    Ok(m.deriv(x, side)? * chart.density(d) / cc.density(x)?)
}

pub fn estimate_constants(
    m: &MapModel,
    cs: &CriticalStructure,
    cc: &CoordinateChange,
    params: &ConstantParams,
) -> Result<ConstantsReport> {
    let ConstantParams { alpha, samples, safety, seed, .. } = *params;
    if !(safety >= 1.0) {
        return Err(Error::InvalidConstant(format!("safety factor {safety} below 1")));
    }
    let not_very_good = |name: &str, value: f64| Error::NotVeryGood {
        reason: format!("{name} = {value:e} is not positive"),
        iterate: None,
    };

    let (mut k1, mut beta1) = (0.0f64, f64::INFINITY);
    for piece in noncritical_pieces(m, cs) {
        let side = |x: f64| if x <= piece.lo { Side::Right } else if x >= piece.hi { Side::Left } else { Side::TwoSided };
        let df = |x: f64| m.deriv(x, side(x));
        k1 = k1.max(estimate_holder(df, piece, alpha, samples, seed)?.constant);
        beta1 = beta1.min(grid_min(piece, df)?.0);
    }
    if beta1 <= TINY {
        return Err(not_very_good("beta1", beta1));
    }

    let (mut k2, mut beta2) = (0.0f64, f64::INFINITY);
    let (mut k3, mut beta3, mut h_sup) = (0.0f64, f64::INFINITY, 0.0f64);
    for (i, e) in cs.entries.iter().enumerate() {
        for (tag, piece) in cs.half_pieces().into_iter().filter(|(t, _)| matches!(t, BranchTag::W { index, .. } if *index == i)) {
            let (side, punctured) = match tag {
                BranchTag::W { side: HalfSide::Minus, .. } => {
                    (Side::Left, Interval::new(piece.lo, e.c - piece.len() * 0.5f64.powi(20)))
                }
                _ => (Side::Right, Interval::new(e.c + piece.len() * 0.5f64.powi(20), piece.hi)),
            };
            let tilde = |x: f64| tilde_exact(m, cc, i, x, side);
            k2 = k2.max(estimate_holder(tilde, punctured, alpha, samples, seed)?.constant);
            beta2 = beta2.min(grid_min(punctured, tilde)?.0);
        }
        let u = e.neighborhood;
        let hp = |x: f64| cc.density(x);
        k3 = k3.max(estimate_holder(hp, u, 1.0, samples, seed)?.constant);
        let (lo, hi) = grid_min(u, hp)?;
        beta3 = beta3.min(lo);
        h_sup = h_sup.max(hi);
    }
    if cs.entries.is_empty() {
        beta2 = 1.0;
        beta3 = 1.0;
        h_sup = 1.0;
    }
    if beta2 <= TINY {
        return Err(not_very_good("beta2", beta2));
    }
    if beta3 <= TINY {
        return Err(not_very_good("beta3", beta3));
    }
    let l = cs.gap;
    if l <= TINY {
        return Err(not_very_good("L", l));
    }
    k1 *= safety;
    k2 *= safety;
    k3 *= safety;

    let env = expansion_envelope(m, cs, params.expansion_samples, params.expansion_steps, alpha)?;
    let diam = m.domain().len();
    let geometric = diam.powf(alpha) * env.nu.powf(alpha) / (env.k_const.powf(alpha) * (env.nu.powf(alpha) - 1.0));
    let k4 = ((k1 / beta1) * geometric).exp().max(1.0);
    let length_factor = diam.max(1.0).powf(1.0 - alpha);
    let tau = cc.tau_max();
    let assemble = |factor: f64| {
        let koebe_part = if factor == 0.0 { 0.0 } else { k4 * factor };
        let a = k1 / beta1
            + k3.max(h_sup).powf(alpha) * k2 / beta2
            + length_factor * k3 / beta3
            + length_factor * koebe_part / l;
        (a, koebe_part)
    };
    let tau_factor = if tau == 0.0 { 0.0 } else { tau.max(1.0 / tau) };
    let (a, b) = assemble(tau_factor);
    let (a_over_tau, b_over_tau) = assemble(if tau == 0.0 { 0.0 } else { 1.0 / tau });
    let (a_times_tau, b_times_tau) = assemble(tau);
    for (name, v) in [("A", a), ("B", b), ("K4", k4)] {
        if !v.is_finite() {
            return Err(Error::InvalidConstant(format!("{name} overflows")));
        }
    }
    Ok(ConstantsReport {
        alpha,
        safety,
        k1,
        beta1,
        k2,
        beta2,
        k3,
        beta3,
        h_sup,
        k4,
        l,
        tau,
        expansion_k: env.k_const,
        expansion_nu: env.nu,
        length_factor,
        tau_factor,
        a,
        b,
        a_over_tau,
        b_over_tau,
        a_times_tau,
        b_times_tau,
        convention: "c_j = beta_j; asserted bound uses K4*max(tau, 1/tau), 0 when tau = 0".into(),
    })
}

/// `A·holder_sum + B·koebe_term`, the log of the Denjoy-Koebe bound.
pub fn dk_log_bound(consts: &ConstantsReport, holder_sum: f64, koebe_term: f64) -> Result<f64> {
    if koebe_term.is_infinite() {
        return Err(Error::DegeneratePair);
    }
    let term = |c: f64, s: f64| if s == 0.0 { 0.0 } else { c * s };
    Ok(term(consts.a, holder_sum) + term(consts.b, koebe_term))
}

/// `exp(A·holder_sum + B·koebe_term)`; may be `+inf` for large constants.
pub fn dk_bound(consts: &ConstantsReport, holder_sum: f64, koebe_term: f64) -> Result<f64> {
    Ok(dk_log_bound(consts, holder_sum, koebe_term)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitCase {
    /// First visit at `i = 1`.
    Initial,
    /// First visit at `i = l > 1`.
    FirstLater,
    /// A later visit; `gap` steps after the previous one.
    Recurrent { gap: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitEstimate {
    pub index: usize,
    pub critical: usize,
    pub x: f64,
    pub y: f64,
    pub h_ratio: f64,
    pub tilde_ratio: f64,
    pub third_ratio: f64,
    pub chain_ratio: f64,
    pub identity_error: f64,
    /// `|x_{i-1} - y_{i-1}| / |x_{i-1} - v|`.
    pub u: f64,
    /// `|y_{i-1} - v| / |x_{i-1} - v| ≤ 1 + u`.
    pub triangle_holds: bool,
    pub case: VisitCase,
    pub estimate_rhs: Option<f64>,
    pub estimate_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeProductDiagnostic {
    pub visits: Vec<VisitEstimate>,
    pub log_h: f64,
    pub log_tilde: f64,
    pub log_third: f64,
    /// Critical part of the chain-rule product.
    pub log_chain: f64,
    pub max_identity_error: f64,
}

/// Splits the critical part of the chain-rule product into the `h'`, `f̃'`
/// and `h'∘f` products and evaluates the per-visit estimates of the proof.
pub fn factor_three_products(
    m: &MapModel,
    cc: &CoordinateChange,
    cs: &CriticalStructure,
    seq: &SuitableSequence,
    x: f64,
    y: f64,
    consts: Option<&ConstantsReport>,
) -> Result<ThreeProductDiagnostic> {
    let rep = distortion_along(m, cs, seq, x, y, 1.0)?;
    let d_xy = rep.d_xy;
    let mut visits = Vec::new();
    let mut previous: Option<usize> = None;
    let (mut log_h, mut log_tilde, mut log_third, mut log_chain) = (0.0, 0.0, 0.0, 0.0);
    let mut max_identity_error = 0.0f64;
    for step in &rep.steps {
        let (k, half) = match step.tag {
            BranchTag::W { index, side } => (index, side),
            BranchTag::V => continue,
        };
        let i = step.index;
        let (xi, yi) = (rep.xs[i], rep.ys[i]);
        let (xp, yp) = (rep.xs[i - 1], rep.ys[i - 1]);
        let e = &cs.entries[k];
        let chart = &cc.charts()[e.value_index];
        let side = if half == HalfSide::Minus { Side::Left } else { Side::Right };
        let h_ratio = cc.density(yi)? / cc.density(xi)?;
        let tilde_ratio = (cc.tilde_deriv(m, yi, side)? / cc.tilde_deriv(m, xi, side)?).abs();
        let (dx, dy) = (m.offset_from_critical_value(xi, k)?, m.offset_from_critical_value(yi, k)?);
        let third_ratio = chart.density(dx) / chart.density(dy);
        let chain_ratio = (step.deriv_y / step.deriv_x).abs();
        let product = h_ratio * tilde_ratio * third_ratio;
        let identity_error = ((product - chain_ratio) / chain_ratio).abs();
        if !(identity_error <= 1e-8) {
            return Err(Error::Factorization { index: i, error: identity_error });
        }
        max_identity_error = max_identity_error.max(identity_error);
        log_h += h_ratio.ln();
        log_tilde += tilde_ratio.ln();
        log_third += third_ratio.ln();
        log_chain += chain_ratio.ln();

        let (ax, ay) = (dx.abs(), dy.abs());
        let u = (xp - yp).abs() / ax;
        let triangle_holds = ay / ax <= (1.0 + u) * (1.0 + 1e-12);
        let (case, estimate_rhs) = match previous {
            None if i == 1 => (VisitCase::Initial, Some((x - y).abs() / d_xy)),
            None => {
                let image = forward_orbit(m, e.value, i - 1)?[i - 1];
                (VisitCase::FirstLater, consts.map(|c| c.k4 * (x - y).abs() / (x - image).abs()))
            }
            Some(p) => (
                VisitCase::Recurrent { gap: i - p },
                consts.map(|c| c.k4 * (rep.xs[p] - rep.ys[p]).abs() / c.l),
            ),
        };
        let estimate_holds = estimate_rhs.map(|rhs| u <= rhs * (1.0 + 1e-9) || xi == yi);
        visits.push(VisitEstimate {
            index: i,
            critical: k,
            x: xi,
            y: yi,
            h_ratio,
            tilde_ratio,
            third_ratio,
            chain_ratio,
            identity_error,
            u,
            triangle_holds,
            case,
            estimate_rhs,
            estimate_holds,
        });
        previous = Some(i);
    }
    Ok(ThreeProductDiagnostic { visits, log_h, log_tilde, log_third, log_chain, max_identity_error })
}
