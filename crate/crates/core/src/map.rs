//! One-dimensional maps on a compact interval with declared power-law
//! critical points.
//!
//! A [`MapModel`] couples a [`Family`] (the formula) with its phase space and
//! the critical points it is expected to have. Construction validates the
//! declaration by sampling: the domain must be invariant, each critical
//! point must be isolated, and the derivative must be continuous away from
//! the critical points.

use std::fmt;
use std::sync::Arc;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Domain, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    TwoSided,
}

/// Which of the two normal forms a power-law point takes.
///
/// `RisingRight`: `-σ|x-c|^γ⁻ + v` on the left, `|x-c|^γ⁺ + v` on the right.
/// `FallingRight`: `σ|x-c|^γ⁻ + v` on the left, `-|x-c|^γ⁺ + v` on the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    RisingRight,
    FallingRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub c: f64,
    pub gamma_left: f64,
    pub gamma_right: f64,
    pub sigma: f64,
    pub value: f64,
    pub orientation: Orientation,
}

impl NormalForm {
    fn coefficients(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::RisingRight => (-self.sigma, 1.0),
            Orientation::FallingRight => (self.sigma, -1.0),
        }
    }

    fn offset(&self, u: f64) -> f64 {
        let (kl, kr) = self.coefficients();
        if u < 0.0 {
            kl * (-u).powf(self.gamma_left)
        } else {
            kr * u.powf(self.gamma_right)
        }
    }

    fn deriv(&self, x: f64, side: Side) -> f64 {
        let (kl, kr) = self.coefficients();
        let u = x - self.c;
        let left = u < 0.0 || (u == 0.0 && side == Side::Left);
        if left {
            -kl * self.gamma_left * (-u).powf(self.gamma_left - 1.0)
        } else {
            kr * self.gamma_right * u.powf(self.gamma_right - 1.0)
        }
    }
}

/// A map given by an expression in `x`, with an optional derivative
/// expression. Without one, derivatives fall back to finite differences.
#[derive(Clone)]
pub struct ExpressionMap {
    source: String,
    derivative_source: Option<String>,
    value: Arc<Node<DefaultNumericTypes>>,
    derivative: Option<Arc<Node<DefaultNumericTypes>>>,
}

impl fmt::Debug for ExpressionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpressionMap")
            .field("source", &self.source)
            .field("derivative", &self.derivative_source)
            .finish()
    }
}

impl ExpressionMap {
    pub fn parse(expr: &str, derivative: Option<&str>) -> Result<Self> {
        let parse = |s: &str| {
            evalexpr::build_operator_tree::<DefaultNumericTypes>(s)
                .map(Arc::new)
                .map_err(|e| Error::Expression(format!("{s}: {e}")))
        };
        Ok(Self {
            source: expr.to_string(),
            derivative_source: derivative.map(str::to_string),
            value: parse(expr)?,
            derivative: derivative.map(parse).transpose()?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn derivative_source(&self) -> Option<&str> {
        self.derivative_source.as_deref()
    }

    fn eval_node(node: &Node<DefaultNumericTypes>, x: f64) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("x".into(), Value::Float(x))
            .map_err(|e| Error::Expression(e.to_string()))?;
        node.eval_number_with_context(&ctx)
            .map_err(|e| Error::Expression(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `a·x·(1-x)`.
    Quadratic { a: f64 },
    /// `s·x` for `x ≤ 1/2`, `s·(1-x)` for `x ≥ 1/2`.
    Tent { slope: f64 },
    NormalForm(NormalForm),
    Expression(ExpressionMap),
    /// Sub-families used on consecutive closed intervals.
    Piecewise(Vec<(Interval, Family)>),
    /// `φ∘f∘φ⁻¹` with `φ(x) = scale·x + shift`, `scale > 0`.
    AffineConjugate { inner: Box<Family>, scale: f64, shift: f64 },
}

impl Family {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Family::Quadratic { a } => a * x * (1.0 - x),
            Family::Tent { slope } => {
                if x <= 0.5 {
                    slope * x
                } else {
                    slope * (1.0 - x)
                }
            }
            Family::NormalForm(nf) => nf.value + nf.offset(x - nf.c),
            Family::Expression(e) => ExpressionMap::eval_node(&e.value, x)?,
            Family::Piecewise(pieces) => {
                let (_, fam) = piece_for(pieces, x, Side::TwoSided)?;
                fam.value(x)?
            }
            Family::AffineConjugate { inner, scale, shift } => {
                scale * inner.value((x - shift) / scale)? + shift
            }
        })
    }

    /// `f(c + u) - f(c)`, evaluated without cancellation where the family allows.
    fn offset(&self, c: f64, u: f64) -> Result<f64> {
        match self {
            Family::Quadratic { a } => Ok(a * u * (1.0 - 2.0 * c - u)),
            Family::Tent { slope } if c == 0.5 => Ok(-slope * u.abs()),
            Family::NormalForm(nf) if c == nf.c => Ok(nf.offset(u)),
            Family::Piecewise(pieces) => {
                let (ix, fam) = piece_for(pieces, c + u, Side::TwoSided)?;
                if pieces[ix].0.contains(c) {
                    fam.offset(c, u)
                } else {
                    Ok(self.value(c + u)? - self.value(c)?)
                }
            }
            Family::AffineConjugate { inner, scale, shift } => {
                Ok(scale * inner.offset((c - shift) / scale, u / scale)?)
            }
            _ => Ok(self.value(c + u)? - self.value(c)?),
        }
    }

    /// Analytic derivative where available; `None` requests finite differences.
    fn analytic_deriv(&self, x: f64, side: Side) -> Result<Option<f64>> {
        Ok(Some(match self {
            Family::Quadratic { a } => a * (1.0 - 2.0 * x),
            Family::Tent { slope } => {
                if x < 0.5 || (x == 0.5 && side == Side::Left) {
                    *slope
                } else {
                    -slope
                }
            }
            Family::NormalForm(nf) => nf.deriv(x, side),
            Family::Expression(e) => match &e.derivative {
                Some(node) => ExpressionMap::eval_node(node, x)?,
                None => return Ok(None),
            },
            Family::Piecewise(pieces) => {
                let (_, fam) = piece_for(pieces, x, side)?;
                return fam.analytic_deriv(x, side);
            }
            Family::AffineConjugate { inner, scale, shift } => {
                return inner.analytic_deriv((x - shift) / scale, side);
            }
        }))
    }

    /// Points where left and right derivatives may differ.
    fn kinks(&self) -> Vec<f64> {
        match self {
            Family::Tent { .. } => vec![0.5],
            Family::NormalForm(nf) => vec![nf.c],
            Family::Piecewise(pieces) => {
                let mut out: Vec<f64> = pieces.iter().skip(1).map(|(i, _)| i.lo).collect();
                for (i, fam) in pieces {
                    out.extend(fam.kinks().into_iter().filter(|k| i.contains(*k)));
                }
                out
            }
            Family::AffineConjugate { inner, scale, shift } => {
                inner.kinks().into_iter().map(|k| scale * k + shift).collect()
            }
            _ => Vec::new(),
        }
    }

    fn default_critical(&self) -> Option<Vec<CriticalPoint>> {
        match self {
            Family::Quadratic { .. } => Some(vec![CriticalPoint::symmetric(0.5, 2.0)]),
            Family::Tent { .. } => Some(vec![CriticalPoint::symmetric(0.5, 1.0)]),
            Family::NormalForm(nf) => Some(vec![CriticalPoint {
                c: nf.c,
                gamma_left: nf.gamma_left,
                gamma_right: nf.gamma_right,
            }]),
            Family::AffineConjugate { inner, scale, shift } => inner.default_critical().map(|v| {
                v.into_iter()
                    .map(|cp| CriticalPoint { c: scale * cp.c + shift, ..cp })
                    .collect()
            }),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Family::Quadratic { a } if !a.is_finite() => {
                Err(Error::InvalidMap("quadratic parameter must be finite".into()))
            }
            Family::Tent { slope } if !(slope.is_finite() && *slope > 0.0) => {
                Err(Error::InvalidMap("tent slope must be positive".into()))
            }
            Family::NormalForm(nf) => {
                if nf.gamma_left < 1.0 || nf.gamma_right < 1.0 {
                    return Err(Error::InvalidMap("normal-form exponents must be >= 1".into()));
                }
                if nf.sigma == 0.0 || !nf.sigma.is_finite() {
                    return Err(Error::InvalidMap("asymmetry must be nonzero".into()));
                }
                Ok(())
            }
            Family::Piecewise(pieces) => {
                if pieces.is_empty() {
                    return Err(Error::InvalidMap("piecewise map without pieces".into()));
                }
                for w in pieces.windows(2) {
                    if w[0].0.hi != w[1].0.lo {
                        return Err(Error::InvalidMap("piecewise intervals must be consecutive".into()));
                    }
                }
                pieces.iter().try_for_each(|(_, f)| f.validate())
            }
            Family::AffineConjugate { inner, scale, shift } => {
                if !(*scale > 0.0 && scale.is_finite() && shift.is_finite()) {
                    return Err(Error::InvalidMap("conjugating scale must be positive".into()));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }
}

fn piece_for(pieces: &[(Interval, Family)], x: f64, side: Side) -> Result<(usize, &Family)> {
    let hit = match side {
        Side::Left => pieces.iter().position(|(i, _)| i.lo < x && x <= i.hi),
        Side::Right => pieces.iter().position(|(i, _)| i.lo <= x && x < i.hi),
        Side::TwoSided => None,
    }
    .or_else(|| pieces.iter().position(|(i, _)| i.contains(x)));
    match hit {
        Some(ix) => Ok((ix, &pieces[ix].1)),
        None => {
            let lo = pieces.first().map_or(f64::NAN, |p| p.0.lo);
            let hi = pieces.last().map_or(f64::NAN, |p| p.0.hi);
            Err(Error::Domain { x, lo, hi })
        }
    }
}

/// Declared critical point with its left and right exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub c: f64,
    pub gamma_left: f64,
    pub gamma_right: f64,
}

impl CriticalPoint {
    pub fn symmetric(c: f64, gamma: f64) -> Self {
        Self { c, gamma_left: gamma, gamma_right: gamma }
    }
}

/// Relative slack for values that land just outside the domain.
const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MapModel {
    domain: Domain,
    family: Family,
    critical: Vec<CriticalPoint>,
    fd_step: f64,
}

pub struct MapBuilder {
    family: Family,
    interval: Interval,
    circle_wrap: bool,
    critical: Option<Vec<CriticalPoint>>,
    fd_step: f64,
}

impl MapBuilder {
    pub fn circle_wrap(mut self, wrap: bool) -> Self {
        self.circle_wrap = wrap;
        self
    }

    pub fn critical(mut self, points: Vec<CriticalPoint>) -> Self {
        self.critical = Some(points);
        self
    }

    pub fn fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn build(self) -> Result<MapModel> {
        let MapBuilder { family, interval, circle_wrap, critical, fd_step } = self;
        if !(interval.lo.is_finite() && interval.hi.is_finite() && interval.len() > 0.0) {
            return Err(Error::InvalidMap(format!("degenerate domain {interval}")));
        }
        if !(fd_step > 0.0 && fd_step < interval.len()) {
            return Err(Error::InvalidMap(format!("finite-difference step {fd_step} out of range")));
        }
        family.validate()?;
        let mut critical = match critical.or_else(|| family.default_critical()) {
            Some(c) => c,
            None => {
                return Err(Error::InvalidMap(
                    "expression and piecewise maps must declare their critical points".into(),
                ))
            }
        };
        critical.sort_by(|a, b| a.c.total_cmp(&b.c));
        for cp in &critical {
            if !interval.contains(cp.c) {
                return Err(Error::InvalidMap(format!("critical point {} outside domain", cp.c)));
            }
            if !(cp.gamma_left >= 1.0 && cp.gamma_right >= 1.0) {
                return Err(Error::InvalidMap(format!("exponent below 1 at {}", cp.c)));
            }
        }
        if critical.windows(2).any(|w| w[0].c == w[1].c) {
            return Err(Error::InvalidMap("duplicate critical point".into()));
        }
        let model = MapModel {
            domain: Domain::new(interval, circle_wrap),
            family,
            critical,
            fd_step,
        };
        model.check_invariant_domain()?;
        model.check_isolated()?;
        model.check_c1()?;
        Ok(model)
    }
}

const SAMPLE_GRID: usize = 2000;

impl MapModel {
    pub fn builder(family: Family, interval: Interval) -> MapBuilder {
        MapBuilder { family, interval, circle_wrap: false, critical: None, fd_step: 1e-6 }
    }

    pub fn quadratic(a: f64) -> Result<Self> {
        Self::builder(Family::Quadratic { a }, Interval::new(0.0, 1.0)).build()
    }

    pub fn tent(slope: f64) -> Result<Self> {
        Self::builder(Family::Tent { slope }, Interval::new(0.0, 1.0)).build()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            let Interval { lo, hi } = self.domain.interval;
            Err(Error::Domain { x, lo, hi })
        }
    }

    /// `f(x)`, reduced into `[a, b)` for circle maps. On an interval, values
    /// within `SNAP_TOL` (relative) outside an endpoint are snapped onto it,
    /// so endpoint fixed points survive rounding.
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let y = self.family.value(x)?;
        if self.domain.circle_wrap {
            return Ok(self.domain.reduce(y));
        }
        let Interval { lo, hi } = self.domain.interval;
        let tol = SNAP_TOL * self.domain.len().max(1.0);
        Ok(if y < lo && y >= lo - tol {
            lo
        } else if y > hi && y <= hi + tol {
            hi
        } else {
            y
        })
    }

    /// Unreduced value (the lift, for circle maps).
    pub fn eval_lift(&self, x: f64) -> Result<f64> {
        self.family.value(x)
    }

    /// `f(x) - f(c_i)` for the `i`-th declared critical point.
    pub fn offset_from_critical_value(&self, x: f64, i: usize) -> Result<f64> {
        self.check_domain(x)?;
        let c = self.critical[i].c;
        self.family.offset(c, x - c)
    }

    /// `f(c_i + u) - f(c_i)`; keeps full relative precision in `u`.
    pub fn offset_at(&self, i: usize, u: f64) -> Result<f64> {
        let c = self.critical[i].c;
        self.check_domain(c + u)?;
        self.family.offset(c, u)
    }

    fn is_special(&self, x: f64) -> bool {
        self.critical.iter().any(|cp| cp.c == x) || self.family.kinks().contains(&x)
    }

    fn fd_deriv(&self, x: f64, side: Side) -> Result<f64> {
        let h = self.fd_step;
        let f = |t: f64| self.family.value(t);
        Ok(match side {
            Side::TwoSided => (f(x + h)? - f(x - h)?) / (2.0 * h),
            Side::Left => (3.0 * f(x)? - 4.0 * f(x - h)? + f(x - 2.0 * h)?) / (2.0 * h),
            Side::Right => (-3.0 * f(x)? + 4.0 * f(x + h)? - f(x + 2.0 * h)?) / (2.0 * h),
        })
    }

    fn raw_deriv(&self, x: f64, side: Side) -> Result<f64> {
        match self.family.analytic_deriv(x, side)? {
            Some(d) => Ok(d),
            None => self.fd_deriv(x, side),
        }
    }

    /// Derivative of `f` at `x`. At kinks and declared critical points a
    /// two-sided request succeeds only if both one-sided derivatives agree.
    pub fn deriv(&self, x: f64, side: Side) -> Result<f64> {
        self.check_domain(x)?;
        if side == Side::TwoSided && self.is_special(x) {
            let l = self.raw_deriv(x, Side::Left)?;
            let r = self.raw_deriv(x, Side::Right)?;
            let tol = if self.family.analytic_deriv(x, Side::Left)?.is_some() {
                1e-12
            } else {
                1e-5
            };
            if (l - r).abs() <= tol * l.abs().max(r.abs()).max(1.0) {
                return Ok(0.5 * (l + r));
            }
            return Err(Error::SideRequired { x });
        }
        self.raw_deriv(x, side)
    }

    /// Closures of the complementary intervals of the critical set.
    pub fn laps(&self) -> Vec<Interval> {
        let Interval { lo, hi } = self.domain.interval;
        let mut cuts = vec![lo];
        cuts.extend(self.critical.iter().map(|cp| cp.c).filter(|&c| c > lo && c < hi));
        cuts.push(hi);
        cuts.windows(2).map(|w| Interval::new(w[0], w[1])).collect()
    }

    fn check_invariant_domain(&self) -> Result<()> {
        if self.domain.circle_wrap {
            return Ok(());
        }
        let Interval { lo, hi } = self.domain.interval;
        let tol = SNAP_TOL * self.domain.len().max(1.0);
        let pts = self.domain.interval.grid(SAMPLE_GRID).chain(self.critical.iter().map(|c| c.c));
        for x in pts {
            let y = self.family.value(x)?;
            if !(y.is_finite() && y >= lo - tol && y <= hi + tol) {
                return Err(Error::InvalidMap(format!(
                    "f({x}) = {y} leaves the domain [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn check_isolated(&self) -> Result<()> {
        let base = 1e-3 * self.domain.len();
        for cp in &self.critical {
            for k in 0..9 {
                let r = base * 0.5f64.powi(k);
                for (x, side) in [(cp.c - r, Side::Left), (cp.c + r, Side::Right)] {
                    if !self.domain.contains(x) {
                        continue;
                    }
                    let d = self.raw_deriv(x, side)?;
                    if d == 0.0 || !d.is_finite() {
                        return Err(Error::InvalidMap(format!(
                            "critical point {} is not isolated (f'({x}) = {d})",
                            cp.c
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sampled modulus-of-continuity check of `f'` away from critical points
    /// and kinks: refining the grid fourfold must shrink the largest jump.
    fn check_c1(&self) -> Result<()> {
        let exclusion = 1e-2 * self.domain.len();
        let mut special: Vec<f64> = self.critical.iter().map(|c| c.c).collect();
        special.extend(self.family.kinks());
        let max_jump = |n: usize| -> Result<(f64, f64)> {
            let nodes: Vec<f64> = self.domain.interval.grid(n).collect();
            let mut prev: Option<(f64, f64)> = None;
            let (mut jump, mut scale) = (0.0f64, 0.0f64);
            for &x in &nodes {
                let near = special.iter().any(|s| (x - s).abs() < exclusion);
                if near {
                    prev = None;
                    continue;
                }
                let d = self.raw_deriv(x, Side::TwoSided)?;
                if !d.is_finite() {
                    return Err(Error::InvalidMap(format!("derivative not finite at {x}")));
                }
                scale = scale.max(d.abs());
                if let Some((_, pd)) = prev {
                    jump = jump.max((d - pd).abs());
                }
                prev = Some((x, d));
            }
            Ok((jump, scale))
        };
        let (coarse, scale) = max_jump(1024)?;
        let (fine, _) = max_jump(4096)?;
        if fine > 0.5 * coarse + 1e-6 * (1.0 + scale) {
            return Err(Error::InvalidMap(format!(
                "derivative does not look continuous away from critical points \
                 (jump {fine:e} at fine grid vs {coarse:e})"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_form(gamma: f64, sigma: f64, orientation: Orientation) -> NormalForm {
        NormalForm { c: 0.0, gamma_left: gamma, gamma_right: gamma, sigma, value: 1.0, orientation }
    }

    #[test]
    fn quadratic_values_and_derivatives() {
        let m = MapModel::quadratic(4.0).unwrap();
        assert_eq!(m.eval(0.25).unwrap(), 0.75);
        assert_eq!(m.deriv(0.25, Side::TwoSided).unwrap(), 2.0);
        assert_eq!(m.deriv(0.5, Side::Left).unwrap(), 0.0);
        assert_eq!(m.deriv(0.5, Side::TwoSided).unwrap(), 0.0);
    }

    #[test]
    fn tent_kink_requires_side() {
        let m = MapModel::tent(2.0).unwrap();
        assert_eq!(m.eval(0.75).unwrap(), 0.5);
        assert_eq!(m.deriv(0.5, Side::Left).unwrap(), 2.0);
        assert_eq!(m.deriv(0.5, Side::Right).unwrap(), -2.0);
        assert!(matches!(m.deriv(0.5, Side::TwoSided), Err(Error::SideRequired { .. })));
    }

    #[test]
    fn normal_form_value() {
        let nf = normal_form(2.0, -1.0, Orientation::FallingRight);
        let m = MapModel::builder(Family::NormalForm(nf), Interval::new(-1.0, 1.0))
            .build()
            .unwrap();
        assert!((m.eval(0.1).unwrap() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let m = MapModel::quadratic(4.0).unwrap();
        assert!(matches!(m.eval(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn non_invariant_domain_is_rejected() {
        let err = MapModel::quadratic(4.5).unwrap_err();
        assert!(matches!(err, Error::InvalidMap(_)));
    }

    #[test]
    fn expression_map_with_fd_derivative() {
        let e = ExpressionMap::parse("x^3", None).unwrap();
        let m = MapModel::builder(Family::Expression(e), Interval::new(-0.5, 0.5))
            .critical(vec![CriticalPoint::symmetric(0.0, 3.0)])
            .build()
            .unwrap();
        let d = m.deriv(0.2, Side::TwoSided).unwrap();
        assert!((d - 0.12).abs() < 1e-9);
        assert!((m.deriv(0.2, Side::Left).unwrap() - 0.12).abs() < 1e-9);
        assert!(m.deriv(0.0, Side::TwoSided).unwrap().abs() < 1e-9);
    }

    #[test]
    fn expression_map_requires_declared_critical_points() {
        let e = ExpressionMap::parse("x^2", None).unwrap();
        let err = MapModel::builder(Family::Expression(e), Interval::new(-0.5, 0.5)).build();
        assert!(err.is_err());
    }

    #[test]
    fn undeclared_kink_fails_c1_check() {
        let e = ExpressionMap::parse("0.5 * math::abs(x - 0.3) + 0.1", Some("0.5 * (x - 0.3) / math::abs(x - 0.3)")).unwrap();
        let err = MapModel::builder(Family::Expression(e), Interval::new(0.0, 1.0))
            .critical(vec![])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidMap(_)));
    }

    #[test]
    fn offset_is_cancellation_free_for_quadratic() {
        let m = MapModel::quadratic(4.0).unwrap();
        let u = 1e-9;
        let d = m.offset_from_critical_value(0.5 + u, 0).unwrap();
        assert!((d / (-4.0 * u * u) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn affine_conjugate_preserves_derivative_shape() {
        let fam = Family::AffineConjugate {
            inner: Box::new(Family::Quadratic { a: 4.0 }),
            scale: 2.0,
            shift: 0.0,
        };
        let m = MapModel::builder(fam, Interval::new(0.0, 2.0)).build().unwrap();
        assert_eq!(m.critical_points()[0].c, 1.0);
        assert!((m.eval(0.5).unwrap() - 1.5).abs() < 1e-15);
        assert!((m.deriv(0.5, Side::TwoSided).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn laps_split_at_critical_points() {
        let m = MapModel::quadratic(4.0).unwrap();
        assert_eq!(m.laps(), vec![Interval::new(0.0, 0.5), Interval::new(0.5, 1.0)]);
    }

    #[test]
    fn piecewise_dispatch() {
        let fam = Family::Piecewise(vec![
            (Interval::new(0.0, 0.5), Family::Expression(ExpressionMap::parse("2.0 * x", Some("2.0")).unwrap())),
            (Interval::new(0.5, 1.0), Family::Expression(ExpressionMap::parse("2.0 - 2.0 * x", Some("-2.0")).unwrap())),
        ]);
        let m = MapModel::builder(fam, Interval::new(0.0, 1.0))
            .critical(vec![CriticalPoint::symmetric(0.5, 1.0)])
            .build()
            .unwrap();
        assert_eq!(m.eval(0.75).unwrap(), 0.5);
        assert_eq!(m.deriv(0.5, Side::Left).unwrap(), 2.0);
        assert_eq!(m.deriv(0.5, Side::Right).unwrap(), -2.0);
    }
}
