//! The singular coordinate change `h` adapted to the critical values.
//!
//! Near a critical value `v` of exponent `γ` the density of `h` is
//! `|x - v|^-τ` with `τ = 1 - 1/γ`, so that `h(v + u) - h(v)` is the chart
//! `k(u) = γ·sign(u)·|u|^(1/γ)`. Away from the charts the density is 1, and a
//! quintic smootherstep blends the two on an outer collar of each chart.
//! `h` is anchored at the left end of the domain: it is the identity to the
//! left of the first chart and a translation between and after charts.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{estimate_exponent, FitWindow};
use crate::interval::{Domain, Interval};
use crate::map::{MapModel, Side};
use crate::structure::CriticalStructure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateParams {
    /// Per distinct critical value; a single entry applies to all, empty means default.
    pub chart_radii: Vec<f64>,
    /// Fraction of the chart radius used for the blend.
    pub collar: f64,
}

impl Default for CoordinateParams {
    fn default() -> Self {
        Self { chart_radii: Vec::new(), collar: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub center: f64,
    pub gamma: f64,
    pub tau: f64,
    pub radius: f64,
    /// Radius of the region where the density is exactly `|x - v|^-τ`.
    pub core: f64,
    /// `h(center)`.
    pub h_center: f64,
}

impl Chart {
    /// `k(u) = γ·sign(u)·|u|^(1/γ)`.
    pub fn local(&self, u: f64) -> f64 {
        self.gamma * u.signum() * u.abs().powf(1.0 / self.gamma)
    }

    pub fn local_inverse(&self, w: f64) -> f64 {
        w.signum() * (w.abs() / self.gamma).powf(self.gamma)
    }

    /// Density at offset `d` from the center, inside or outside the chart.
    pub fn density(&self, d: f64) -> f64 {
        let a = d.abs();
        if a <= self.core {
            a.powf(-self.tau)
        } else if a >= self.radius {
            1.0
        } else {
            let w = 1.0 - smootherstep((a - self.core) / (self.radius - self.core));
            w * a.powf(-self.tau) + (1.0 - w)
        }
    }
}

fn smootherstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

fn quadrature() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(24).expect("nonzero")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Kind {
    Linear,
    Core(usize),
    Collar(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Segment {
    lo: f64,
    hi: f64,
    h_lo: f64,
    h_hi: f64,
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Value,
    Derivative,
}

/// A critical point as seen by the coordinate change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartedCritical {
    pub c: f64,
    pub chart: usize,
    pub neighborhood: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateChange {
    domain: Domain,
    charts: Vec<Chart>,
    critical: Vec<ChartedCritical>,
    segments: Vec<Segment>,
}

pub fn build_coordinate_change(cs: &CriticalStructure, chart_radii: &[f64], collar: f64) -> Result<CoordinateChange> {
    CoordinateChange::build(cs, &CoordinateParams { chart_radii: chart_radii.to_vec(), collar })
}

/// Evaluates `h`, `h⁻¹`, `h'` or `(h⁻¹)'`.
pub fn apply_change(cc: &CoordinateChange, x: f64, direction: Direction, order: Order) -> Result<f64> {
    match (direction, order) {
        (Direction::Forward, Order::Value) => cc.forward(x),
        (Direction::Forward, Order::Derivative) => cc.density(x),
        (Direction::Inverse, Order::Value) => cc.inverse(x),
        (Direction::Inverse, Order::Derivative) => cc.inverse_deriv(x),
    }
}

impl CoordinateChange {
    pub fn build(cs: &CriticalStructure, params: &CoordinateParams) -> Result<Self> {
        let domain = cs.domain;
        let Interval { lo, hi } = domain.interval;
        if !(0.0..1.0).contains(&params.collar) {
            return Err(Error::Geometry(format!("collar fraction {} outside [0, 1)", params.collar)));
        }
        let nv = cs.values.len();
        if !(params.chart_radii.is_empty() || params.chart_radii.len() == 1 || params.chart_radii.len() == nv) {
            return Err(Error::Geometry(format!("{} chart radii for {nv} critical values", params.chart_radii.len())));
        }
        let mut charts: Vec<Chart> = cs
            .values
            .iter()
            .enumerate()
            .map(|(k, cv)| {
                let radius = match params.chart_radii.len() {
                    0 => cv.default_chart_radius,
                    1 => params.chart_radii[0],
                    _ => params.chart_radii[k],
                };
                Chart {
                    center: cv.value,
                    gamma: cv.gamma,
                    tau: 1.0 - 1.0 / cv.gamma,
                    radius,
                    core: radius * (1.0 - params.collar),
                    h_center: f64::NAN,
                }
            })
            .collect();

        for ch in &charts {
            if !(ch.radius > 0.0 && ch.radius.is_finite()) {
                return Err(Error::Geometry(format!("chart radius {} at {}", ch.radius, ch.center)));
            }
            if cs.critical_set().any(|u| u.contains(ch.center)) {
                return Err(Error::SemiGood(format!("critical value {} lies in the critical set", ch.center)));
            }
            let (l, r) = (ch.center - ch.radius, ch.center + ch.radius);
            if (l < lo && ch.center != lo) || (r > hi && ch.center != hi) {
                return Err(Error::Geometry(format!("chart at {} leaves the domain", ch.center)));
            }
            let open = Interval::new(l, r);
            if cs.critical_set().any(|u| u.overlaps(&open)) {
                return Err(Error::Geometry(format!("chart at {} meets a critical neighborhood", ch.center)));
            }
        }
        let mut order: Vec<usize> = (0..nv).collect();
        order.sort_by(|&a, &b| charts[a].center.total_cmp(&charts[b].center));
        for w in order.windows(2) {
            let (a, b) = (&charts[w[0]], &charts[w[1]]);
            if a.center + a.radius > b.center - b.radius {
                return Err(Error::Geometry(format!("charts at {} and {} overlap", a.center, b.center)));
            }
        }

        let mut cuts: Vec<(f64, f64, Kind)> = Vec::new();
        let mut cursor = lo;
        for &k in &order {
            let ch = &charts[k];
            let left = ch.radius.min(ch.center - lo);
            let right = ch.radius.min(hi - ch.center);
            let (cl, ol) = (ch.center - left, ch.center - ch.core.min(left));
            let (or, cr) = (ch.center + ch.core.min(right), ch.center + right);
            if cl > cursor {
                cuts.push((cursor, cl, Kind::Linear));
            }
            if ol > cl {
                cuts.push((cl, ol, Kind::Collar(k)));
            }
            if ch.center > ol {
                cuts.push((ol, ch.center, Kind::Core(k)));
            }
            if or > ch.center {
                cuts.push((ch.center, or, Kind::Core(k)));
            }
            if cr > or {
                cuts.push((or, cr, Kind::Collar(k)));
            }
            cursor = cursor.max(cr);
        }
        if hi > cursor {
            cuts.push((cursor, hi, Kind::Linear));
        }

        let mut segments = Vec::with_capacity(cuts.len());
        let mut h = lo;
        for (a, b, kind) in cuts {
            let delta = match kind {
                Kind::Linear => b - a,
                Kind::Core(k) => {
                    let ch = &charts[k];
                    if b == ch.center {
                        ch.local(b - a)
                    } else {
                        ch.local(b - ch.center)
                    }
                }
                Kind::Collar(k) => {
                    let ch = &charts[k];
                    quadrature().integrate(a, b, |t| ch.density(t - ch.center))
                }
            };
            if let Kind::Core(k) = kind {
                if b == charts[k].center {
                    charts[k].h_center = h + delta;
                } else {
                    charts[k].h_center = h;
                }
            }
            segments.push(Segment { lo: a, hi: b, h_lo: h, h_hi: h + delta, kind });
            h += delta;
        }

        let critical = cs
            .entries
            .iter()
            .map(|e| ChartedCritical { c: e.c, chart: e.value_index, neighborhood: e.neighborhood })
            .collect::<Vec<_>>();
        let cc = Self { domain, charts, critical, segments };
        for e in &cs.entries {
            let ch = &cc.charts[e.value_index];
            // h on f(U_i) must be given by the closed-form chart.
            if ch.tau > 0.0 && e.image_reach > ch.core {
                return Err(Error::Geometry(format!(
                    "image of the neighborhood of {} leaves the core of the chart at {}",
                    e.c, ch.center
                )));
            }
        }
        Ok(cc)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn critical(&self) -> &[ChartedCritical] {
        &self.critical
    }

    pub fn tau_max(&self) -> f64 {
        self.charts.iter().map(|c| c.tau).fold(0.0, f64::max)
    }

    fn segment_at(&self, x: f64) -> Result<&Segment> {
        if !self.domain.contains(x) {
            let Interval { lo, hi } = self.domain.interval;
            return Err(Error::Domain { x, lo, hi });
        }
        let ix = self.segments.partition_point(|s| s.hi < x);
        Ok(&self.segments[ix.min(self.segments.len() - 1)])
    }

    fn segment_at_h(&self, p: f64) -> Result<&Segment> {
        let (first, last) = (self.segments[0].h_lo, self.segments[self.segments.len() - 1].h_hi);
        if !(first..=last).contains(&p) {
            return Err(Error::Domain { x: p, lo: first, hi: last });
        }
        let ix = self.segments.partition_point(|s| s.h_hi < p);
        Ok(&self.segments[ix.min(self.segments.len() - 1)])
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        let s = self.segment_at(x)?;
        Ok(match s.kind {
            Kind::Linear => s.h_lo + (x - s.lo),
            Kind::Core(k) => {
                let ch = &self.charts[k];
                ch.h_center + ch.local(x - ch.center)
            }
            Kind::Collar(k) => {
                let ch = &self.charts[k];
                s.h_lo + quadrature().integrate(s.lo, x, |t| ch.density(t - ch.center))
            }
        })
    }

    /// `h(x) - h(x0)`, exact when both points share a linear segment.
    pub fn diff(&self, x: f64, x0: f64) -> Result<f64> {
        let (a, b) = (self.segment_at(x)?, self.segment_at(x0)?);
        if a == b && a.kind == Kind::Linear {
            Ok(x - x0)
        } else {
            Ok(self.forward(x)? - self.forward(x0)?)
        }
    }

    /// `h(v_k + d) - h(v_k)` for the chart `k`, without cancellation in the core.
    pub fn rel_value(&self, k: usize, d: f64) -> Result<f64> {
        let ch = &self.charts[k];
        if d.abs() <= ch.core {
            Ok(ch.local(d))
        } else {
            Ok(self.forward(ch.center + d)? - ch.h_center)
        }
    }

    pub fn inverse(&self, p: f64) -> Result<f64> {
        let s = self.segment_at_h(p)?;
        Ok(match s.kind {
            Kind::Linear => (s.lo + (p - s.h_lo)).clamp(s.lo, s.hi),
            Kind::Core(k) => {
                let ch = &self.charts[k];
                (ch.center + ch.local_inverse(p - ch.h_center)).clamp(s.lo, s.hi)
            }
            Kind::Collar(k) => {
                let ch = &self.charts[k];
                let (mut a, mut b) = (s.lo, s.hi);
                let mut x = s.lo + (p - s.h_lo) / (s.h_hi - s.h_lo) * (s.hi - s.lo);
                for _ in 0..100 {
                    let fx = self.forward(x)? - p;
                    if fx.abs() <= 1e-15 * p.abs().max(1.0) {
                        break;
                    }
                    if fx > 0.0 {
                        b = x;
                    } else {
                        a = x;
                    }
                    if b - a <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                        break;
                    }
                    let newton = x - fx / ch.density(x - ch.center);
                    x = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
                }
                x
            }
        })
    }

    /// `h'(x)`; singular at chart centers with `τ > 0`.
    pub fn density(&self, x: f64) -> Result<f64> {
        let s = self.segment_at(x)?;
        match s.kind {
            Kind::Linear => Ok(1.0),
            Kind::Core(k) | Kind::Collar(k) => {
                let ch = &self.charts[k];
                if x == ch.center && ch.tau > 0.0 {
                    return Err(Error::Singularity { x });
                }
                Ok(ch.density(x - ch.center))
            }
        }
    }

    pub fn inverse_deriv(&self, p: f64) -> Result<f64> {
        let x = self.inverse(p)?;
        Ok(1.0 / self.density(x)?)
    }

    /// Index of the critical point whose neighborhood contains `x`.
    pub fn critical_at(&self, x: f64) -> Option<usize> {
        self.critical.iter().position(|e| e.neighborhood.contains(x))
    }

    /// `f̃'(h(x))` for `f̃ = h∘f∘h⁻¹` by Richardson-extrapolated differences
    /// in the new coordinate. Inside a critical neighborhood `h` is a
    /// translation, so the stencil is laid out in the displacement from the
    /// critical point and images are read through exact offsets.
    pub fn tilde_deriv(&self, m: &MapModel, x: f64, side: Side) -> Result<f64> {
        let dom = self.domain.interval;
        let mut s = 1e-5 * self.domain.len();
        let anchor = self.critical_at(x);
        let t0 = match anchor {
            Some(i) => x - self.critical[i].c,
            None => self.forward(x)?,
        };
        match anchor {
            Some(_) if t0 == 0.0 && side == Side::TwoSided => return Err(Error::SideRequired { x }),
            Some(_) if t0 != 0.0 => s = s.min(0.25 * t0.abs()),
            Some(_) => {}
            None => {
                for e in &self.critical {
                    s = s.min(0.25 * (t0 - self.forward(e.c)?).abs());
                }
            }
        }
        let (lo_ok, hi_ok) = match anchor {
            Some(_) => (x - 2.0 * s >= dom.lo, x + 2.0 * s <= dom.hi),
            None => (t0 - 2.0 * s >= self.forward(dom.lo)?, t0 + 2.0 * s <= self.forward(dom.hi)?),
        };
        let g = |t: f64| -> Result<f64> {
            match anchor {
                Some(i) => self.rel_value(self.critical[i].chart, m.offset_at(i, t)?),
                None => self.forward(m.eval(self.inverse(t)?)?),
            }
        };
        let central = |s: f64| -> Result<f64> { Ok((g(t0 + s)? - g(t0 - s)?) / (2.0 * s)) };
        let forward = |s: f64| -> Result<f64> { Ok((-3.0 * g(t0)? + 4.0 * g(t0 + s)? - g(t0 + 2.0 * s)?) / (2.0 * s)) };
        let backward = |s: f64| -> Result<f64> { Ok((3.0 * g(t0)? - 4.0 * g(t0 - s)? + g(t0 - 2.0 * s)?) / (2.0 * s)) };
        let rich = |d: &dyn Fn(f64) -> Result<f64>| -> Result<f64> { Ok((4.0 * d(0.5 * s)? - d(s)?) / 3.0) };
        match side {
            Side::Left if lo_ok => rich(&backward),
            Side::Right if hi_ok => rich(&forward),
            Side::TwoSided if lo_ok && hi_ok => rich(&central),
            Side::TwoSided if lo_ok => rich(&backward),
            Side::TwoSided if hi_ok => rich(&forward),
            _ => Err(Error::SideRequired { x }),
        }
    }
}

/// The three factors of `f'(x) = h'(x)·f̃'(h(x))/h'(f(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationDeriv {
    pub x: f64,
    pub h_prime_x: f64,
    pub tilde_prime: f64,
    pub h_prime_fx: f64,
    pub value: f64,
    pub f_prime: f64,
    pub rel_error: f64,
}

pub fn representation_deriv(m: &MapModel, cc: &CoordinateChange, x: f64) -> Result<RepresentationDeriv> {
    let fx = m.eval(x)?;
    let h_prime_x = cc.density(x)?;
    let h_prime_fx = cc.density(fx)?;
    let tilde_prime = cc.tilde_deriv(m, x, Side::TwoSided)?;
    let value = h_prime_x * tilde_prime / h_prime_fx;
    let f_prime = m.deriv(x, Side::TwoSided)?;
    let rel_error = if f_prime == 0.0 { value.abs() } else { ((value - f_prime) / f_prime).abs() };
    Ok(RepresentationDeriv { x, h_prime_x, tilde_prime, h_prime_fx, value, f_prime, rel_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedLimit {
    pub side: Side,
    pub limit: f64,
    pub spread: f64,
    pub quotients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub c: f64,
    pub gamma: f64,
    pub left: Option<OneSidedLimit>,
    pub right: Option<OneSidedLimit>,
    /// `γ·|s|^(1/γ)` with `s = coefficient/γ` from the exponent fit, when available.
    pub expected_magnitude: Option<f64>,
}

/// One-sided derivatives of `h∘f` at the critical point `c`, read off
/// difference quotients over the geometric window.
pub fn lemma1_check(m: &MapModel, cc: &CoordinateChange, c: f64) -> Result<Lemma1Report> {
    let i = cc
        .critical
        .iter()
        .position(|e| e.c == c)
        .ok_or_else(|| Error::Lemma1Failure { c, reason: "not a charted critical point".into() })?;
    let chart = cc.critical[i].chart;
    let gamma = cc.charts[chart].gamma;
    let window = FitWindow::default();
    let dom = m.domain().interval;
    let mut out = [None, None];
    for (slot, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let sign = if side == Side::Left { -1.0 } else { 1.0 };
        if !dom.contains(c + sign * window.h0) {
            continue;
        }
        let quotients: Vec<f64> = window
            .offsets()
            .iter()
            .map(|&d| {
                let x = c + sign * d;
                Ok(cc.rel_value(chart, m.offset_from_critical_value(x, i)?)? / cc.diff(x, c)?)
            })
            .collect::<Result<_>>()?;
        let n = quotients.len();
        let limit = 2.0 * quotients[n - 1] - quotients[n - 2];
        let spread = quotients[n / 2..].iter().map(|q| (q - limit).abs()).fold(0.0, f64::max);
        if !limit.is_finite() || limit.abs() <= 1e-10 {
            return Err(Error::Lemma1Failure { c, reason: format!("{side:?} limit {limit:e} is zero or infinite") });
        }
        if spread > window.tolerance * limit.abs() {
            return Err(Error::Lemma1Failure { c, reason: format!("{side:?} quotients diverge (spread {spread:e})") });
        }
        out[slot] = Some(OneSidedLimit { side, limit, spread, quotients });
    }
    let expected_magnitude = estimate_exponent(m, c, Side::Right)
        .or_else(|_| estimate_exponent(m, c, Side::Left))
        .ok()
        .map(|fit| gamma * (fit.coefficient / gamma).abs().powf(1.0 / gamma));
    let [left, right] = out;
    Ok(Lemma1Report { c, gamma, left, right, expected_magnitude })
}
