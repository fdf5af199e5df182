//! Power-law data at critical points and sampled Hölder constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::{MapModel, Side};

/// Geometric offsets `2^-k·h0`, `k = 0..=levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub h0: f64,
    pub levels: usize,
    pub tolerance: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { h0: 1e-2, levels: 20, tolerance: 1e-2 }
    }
}

impl FitWindow {
    pub fn offsets(&self) -> Vec<f64> {
        (0..=self.levels).map(|k| self.h0 * 0.5f64.powi(k as i32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub side: Side,
    pub gamma: f64,
    pub coefficient: f64,
    pub residual: f64,
    pub window: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryEstimate {
    pub sigma: f64,
    pub spread: f64,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha: f64,
    pub constant: f64,
    pub sample_count: usize,
}

/// Adjacent pairs on this grid are always included, whatever the sample count.
pub const HOLDER_GRID: usize = 1024;

fn signed_point(c: f64, delta: f64, side: Side) -> f64 {
    match side {
        Side::Left => c - delta,
        _ => c + delta,
    }
}

fn one_sided(side: Side) -> Result<Side> {
    match side {
        Side::Left | Side::Right => Ok(side),
        Side::TwoSided => Err(Error::InvalidConstant("exponent fits are one-sided".into())),
    }
}

pub fn estimate_exponent(m: &MapModel, c: f64, side: Side) -> Result<ExponentFit> {
    estimate_exponent_with(m, c, side, &FitWindow::default())
}

/// Least-squares fit of `log|f'(c±δ)|` against `log δ` over the window.
pub fn estimate_exponent_with(m: &MapModel, c: f64, side: Side, window: &FitWindow) -> Result<ExponentFit> {
    let side = one_sided(side)?;
    let offsets = window.offsets();
    let mut derivs = Vec::with_capacity(offsets.len());
    for &d in &offsets {
        let x = signed_point(c, d, side);
        if !m.domain().contains(x) {
            return Err(Error::NotPowerLaw { c, reason: format!("no room on the {side:?} side") });
        }
        derivs.push(m.deriv(x, side)?);
    }
    if derivs.iter().all(|&d| d == 0.0) {
        return Err(Error::FlatCritical { c });
    }
    if derivs.iter().any(|d| *d == 0.0 || !d.is_finite()) {
        return Err(Error::NotPowerLaw { c, reason: "derivative vanishes or blows up inside the window".into() });
    }
    let xs: Vec<f64> = offsets.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = derivs.iter().map(|d| d.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    if residual > window.tolerance {
        return Err(Error::NotPowerLaw { c, reason: format!("log-log residual {residual:e}") });
    }
    let sign = derivs.last().copied().unwrap_or(1.0).signum();
    Ok(ExponentFit { side, gamma: slope + 1.0, coefficient: sign * intercept.exp(), residual, window: offsets })
}

pub fn estimate_asymmetry(m: &MapModel, c: f64) -> Result<AsymmetryEstimate> {
    estimate_asymmetry_with(m, c, &FitWindow::default())
}

/// Limit of `f'(c-δ)/f'(c+δ)`. The Cauchy spread is taken over the finer half
/// of the window.
pub fn estimate_asymmetry_with(m: &MapModel, c: f64, window: &FitWindow) -> Result<AsymmetryEstimate> {
    let left = estimate_exponent_with(m, c, Side::Left, window)?;
    let right = estimate_exponent_with(m, c, Side::Right, window)?;
    if (left.gamma - right.gamma).abs() > 1e-3 * left.gamma.max(right.gamma) {
        return Err(Error::ExponentMismatch { c, left: left.gamma, right: right.gamma });
    }
    let ratios: Vec<f64> = window
        .offsets()
        .iter()
        .map(|&d| Ok(m.deriv(c - d, Side::Left)? / m.deriv(c + d, Side::Right)?))
        .collect::<Result<_>>()?;
    let sigma = *ratios.last().expect("window is nonempty");
    let spread = ratios[ratios.len() / 2..]
        .iter()
        .map(|q| (q - sigma).abs())
        .fold(0.0, f64::max);
    if !sigma.is_finite() || spread > window.tolerance * sigma.abs().max(1.0) {
        return Err(Error::NoLimit { c, spread });
    }
    Ok(AsymmetryEstimate { sigma, spread, ratios })
}

/// Additive recurrence on the unit square with the plastic-number increments.
/// The first `n` pairs of a longer run are exactly the pairs of a shorter one.
fn r2_pairs(seed: u64, n: usize) -> impl Iterator<Item = (f64, f64)> {
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s1, s2): (f64, f64) = (rng.gen(), rng.gen());
    (1..=n).map(move |k| {
        let k = k as f64;
        ((s1 + k * a1).fract(), (s2 + k * a2).fract())
    })
}

/// Sampled Hölder constant of `dg` (the derivative of some `g`) on `iv`:
/// the largest `|dg(x) - dg(y)| / |x - y|^α` over `samples` quasi-random
/// pairs, adjacent pairs of a fixed grid and the endpoint pair.
pub fn estimate_holder<F>(dg: F, iv: Interval, alpha: f64, samples: usize, seed: u64) -> Result<HolderEstimate>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConstant(format!("Hölder order {alpha} outside (0, 1]")));
    }
    if !(iv.len() > 0.0) {
        return Err(Error::InvalidConstant(format!("degenerate interval {iv}")));
    }
    let ratio = |x: f64, y: f64, gx: f64, gy: f64| {
        if x == y {
            0.0
        } else {
            (gx - gy).abs() / (x - y).abs().powf(alpha)
        }
    };
    let nodes: Vec<f64> = iv.grid(HOLDER_GRID).collect();
    let values: Vec<f64> = nodes.iter().map(|&x| dg(x)).collect::<Result<_>>()?;
    let mut best = ratio(iv.lo, iv.hi, values[0], values[HOLDER_GRID]);
    for k in 0..HOLDER_GRID {
        best = best.max(ratio(nodes[k], nodes[k + 1], values[k], values[k + 1]));
    }
    for (u, v) in r2_pairs(seed, samples) {
        let x = iv.lo + u * iv.len();
        let y = iv.lo + v * iv.len();
        best = best.max(ratio(x, y, dg(x)?, dg(y)?));
    }
    if !best.is_finite() {
        return Err(Error::InvalidConstant(format!("Hölder ratio is not finite on {iv}")));
    }
    Ok(HolderEstimate { alpha, constant: best, sample_count: samples + HOLDER_GRID + 1 })
}

/// Hölder estimates of `r(x) = f'(x)/|x-c|^(γ-1)` on punctured one-sided
/// neighborhoods of `c`, returned as `(left, right)`.
pub fn check_r_holder(
    m: &MapModel,
    c: f64,
    gamma: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<(Option<HolderEstimate>, Option<HolderEstimate>)> {
    let dom = m.domain().interval;
    let others = m
        .critical_points()
        .iter()
        .filter(|cp| cp.c != c)
        .map(|cp| 0.5 * (cp.c - c).abs())
        .fold(f64::INFINITY, f64::min);
    let width = 1e-2f64.min(others);
    let r = |x: f64, side: Side| -> Result<f64> { Ok(m.deriv(x, side)? / (x - c).abs().powf(gamma - 1.0)) };
    let mut out = [None, None];
    for (slot, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let w = match side {
            Side::Left => width.min(c - dom.lo),
            _ => width.min(dom.hi - c),
        };
        if w <= 0.0 {
            continue;
        }
        let eps = w * 0.5f64.powi(20);
        let probes: Vec<f64> = (0..=20)
            .map(|k| r(signed_point(c, w * 0.5f64.powi(k), side), side))
            .collect::<Result<_>>()?;
        let hi = probes.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let lo = probes.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        if !hi.is_finite() || lo == 0.0 || hi / lo > 1e3 {
            return Err(Error::NotPowerLaw { c, reason: format!("r is unbounded or vanishing for exponent {gamma}") });
        }
        let iv = match side {
            Side::Left => Interval::new(c - w, c - eps),
            _ => Interval::new(c + eps, c + w),
        };
        out[slot] = Some(estimate_holder(|x| r(x, side), iv, alpha, samples, seed)?);
    }
    let [left, right] = out;
    Ok((left, right))
}
