//! Critical points, their neighborhoods and the post-critical cloud.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Domain, Interval};
use crate::map::MapModel;

/// Grid on which post-critical points are deduplicated.
pub const CLOUD_EPS: f64 = 1e-9;
/// Maximum number of radius halvings.
pub const MAX_SHRINK_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub radii: Vec<f64>,
    pub postcritical_depth: usize,
    /// First iterate included in the post-critical cloud.
    pub postcritical_offset: usize,
}

impl StructureParams {
    pub fn new(radii: Vec<f64>, postcritical_depth: usize) -> Self {
        Self { radii, postcritical_depth, postcritical_offset: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HalfSide {
    Minus,
    Plus,
}

/// Where an interval of a suitable sequence lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BranchTag {
    V,
    W { index: usize, side: HalfSide },
}

impl fmt::Display for BranchTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchTag::V => write!(f, "V"),
            BranchTag::W { index, side: HalfSide::Minus } => write!(f, "W{}-", index + 1),
            BranchTag::W { index, side: HalfSide::Plus } => write!(f, "W{}+", index + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalEntry {
    pub c: f64,
    pub gamma: f64,
    pub value: f64,
    /// Index into [`CriticalStructure::values`].
    pub value_index: usize,
    pub requested_radius: f64,
    pub radius: f64,
    pub neighborhood: Interval,
    /// `max |f(x) - v|` over the neighborhood.
    pub image_reach: f64,
}

/// A distinct critical value with the critical points mapping onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub value: f64,
    pub gamma: f64,
    pub points: Vec<usize>,
    /// Half the distance to the nearest other marked point.
    pub default_chart_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusShrink {
    pub index: usize,
    pub from: f64,
    pub to: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalStructure {
    pub domain: Domain,
    pub entries: Vec<CriticalEntry>,
    pub values: Vec<CriticalValue>,
    /// Sorted, deduplicated post-critical points.
    pub cloud: Vec<f64>,
    pub cloud_offset: usize,
    pub cloud_depth: usize,
    /// Components of the noncritical set.
    pub noncritical: Vec<Interval>,
    /// Distance between the critical set and the cloud (`+inf` if either is empty).
    pub gap: f64,
    pub shrinks: Vec<RadiusShrink>,
}

/// Convenience wrapper with the cloud starting at the first iterate.
pub fn critical_structure(m: &MapModel, radii: &[f64], postcritical_depth: usize) -> Result<CriticalStructure> {
    CriticalStructure::build(m, &StructureParams::new(radii.to_vec(), postcritical_depth))
}

impl CriticalStructure {
    pub fn build(m: &MapModel, params: &StructureParams) -> Result<Self> {
        let domain = *m.domain();
        let cps = m.critical_points();
        let d = cps.len();
        if params.radii.len() != d && !(params.radii.len() == 1 && d > 0) {
            return Err(Error::Geometry(format!(
                "{} radii given for {d} critical points",
                params.radii.len()
            )));
        }
        if params.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Geometry("radii must be positive".into()));
        }
        if params.postcritical_offset == 0 {
            return Err(Error::Geometry("post-critical offset must be at least 1".into()));
        }
        let radius_of = |i: usize| if params.radii.len() == 1 { params.radii[0] } else { params.radii[i] };

        for cp in cps {
            if cp.gamma_left != cp.gamma_right {
                return Err(Error::ExponentMismatch { c: cp.c, left: cp.gamma_left, right: cp.gamma_right });
            }
        }

        let cloud = postcritical_cloud(m, params)?;

        let crit_values: Vec<f64> = (0..d).map(|i| m.eval(cps[i].c)).collect::<Result<_>>()?;
        for (i, &v) in crit_values.iter().enumerate() {
            if let Some(j) = cps.iter().position(|cp| domain.dist(cp.c, v) <= CLOUD_EPS) {
                return Err(Error::SemiGood(format!(
                    "critical value {v} of c{} coincides with critical point c{}",
                    i + 1,
                    j + 1
                )));
            }
        }

        let mut values: Vec<CriticalValue> = Vec::new();
        let mut value_index = vec![0usize; d];
        for i in 0..d {
            let v = crit_values[i];
            match values.iter().position(|cv| domain.dist(cv.value, v) <= CLOUD_EPS) {
                Some(k) => {
                    if values[k].gamma != cps[i].gamma_left {
                        return Err(Error::SemiGood(format!(
                            "critical points sharing the value {v} have exponents {} and {}",
                            values[k].gamma, cps[i].gamma_left
                        )));
                    }
                    values[k].points.push(i);
                    value_index[i] = k;
                }
                None => {
                    value_index[i] = values.len();
                    values.push(CriticalValue {
                        value: v,
                        gamma: cps[i].gamma_left,
                        points: vec![i],
                        default_chart_radius: 0.0,
                    });
                }
            }
        }
        let marked: Vec<f64> = {
            let mut pts: Vec<f64> = cps.iter().map(|c| c.c).collect();
            pts.extend(values.iter().map(|v| v.value));
            if !domain.circle_wrap {
                pts.push(domain.interval.lo);
                pts.push(domain.interval.hi);
            }
            pts
        };
        for cv in values.iter_mut() {
            let nearest = marked
                .iter()
                .map(|&p| domain.dist(p, cv.value))
                .filter(|&dist| dist > 1e-12 * domain.len())
                .fold(f64::INFINITY, f64::min);
            cv.default_chart_radius = if nearest.is_finite() { 0.5 * nearest } else { 0.25 * domain.len() };
        }

        let requested: Vec<f64> = (0..d).map(radius_of).collect();
        let mut radii = requested.clone();
        let mut halvings = vec![0usize; d];
        loop {
            let failing: Vec<(usize, Failure)> = (0..d)
                .filter_map(|i| {
                    check_neighborhood(m, &domain, cps[i].c, i, &radii, &crit_values, &values, value_index[i], &cloud)
                        .map(|f| (i, f))
                })
                .collect();
            if failing.is_empty() {
                break;
            }
            for (i, failure) in failing {
                if halvings[i] >= MAX_SHRINK_STEPS {
                    let c = cps[i].c;
                    return Err(match failure {
                        Failure::Cloud => Error::NotVeryGood {
                            reason: format!("no neighborhood of critical point {c} avoids the post-critical set"),
                            iterate: None,
                        },
                        Failure::Geometry(why) => Error::Geometry(format!("neighborhood of {c}: {why}")),
                    });
                }
                radii[i] *= 0.5;
                halvings[i] += 1;
            }
        }

        let entries: Vec<CriticalEntry> = (0..d)
            .map(|i| {
                let u = neighborhood(&domain, cps[i].c, radii[i]);
                Ok(CriticalEntry {
                    c: cps[i].c,
                    gamma: cps[i].gamma_left,
                    value: crit_values[i],
                    value_index: value_index[i],
                    requested_radius: requested[i],
                    radius: radii[i],
                    neighborhood: u,
                    image_reach: image_reach(m, i, &u)?,
                })
            })
            .collect::<Result<_>>()?;
        let shrinks = (0..d)
            .filter(|&i| halvings[i] > 0)
            .map(|i| RadiusShrink { index: i, from: requested[i], to: radii[i], halvings: halvings[i] })
            .collect();
        let noncritical = complement(&domain, &entries);
        let gap = entries
            .iter()
            .flat_map(|e| cloud.iter().map(move |&p| dist_to_interval(&domain, &e.neighborhood, p)))
            .fold(f64::INFINITY, f64::min);

        Ok(Self {
            domain,
            entries,
            values,
            cloud,
            cloud_offset: params.postcritical_offset,
            cloud_depth: params.postcritical_depth,
            noncritical,
            gap,
            shrinks,
        })
    }

    pub fn critical_set(&self) -> impl Iterator<Item = &Interval> {
        self.entries.iter().map(|e| &e.neighborhood)
    }

    /// The half-pieces `U_{i-}`, `U_{i+}`.
    pub fn half_pieces(&self) -> Vec<(BranchTag, Interval)> {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(index, e)| {
                let u = e.neighborhood;
                [
                    (BranchTag::W { index, side: HalfSide::Minus }, Interval::new(u.lo, e.c)),
                    (BranchTag::W { index, side: HalfSide::Plus }, Interval::new(e.c, u.hi)),
                ]
            })
            .filter(|(_, i)| i.len() > 0.0)
            .collect()
    }

    pub fn piece(&self, tag: BranchTag) -> Option<Interval> {
        match tag {
            BranchTag::V => None,
            BranchTag::W { index, side } => {
                let e = self.entries.get(index)?;
                Some(match side {
                    HalfSide::Minus => Interval::new(e.neighborhood.lo, e.c),
                    HalfSide::Plus => Interval::new(e.c, e.neighborhood.hi),
                })
            }
        }
    }

    /// Tag of the unique region containing `iv`, if any.
    pub fn classify(&self, iv: &Interval) -> Option<BranchTag> {
        if self.noncritical.iter().any(|v| v.contains_interval(iv)) {
            return Some(BranchTag::V);
        }
        self.half_pieces()
            .into_iter()
            .find(|(_, p)| p.contains_interval(iv))
            .map(|(tag, _)| tag)
    }

    /// Index of the critical neighborhood containing `x`.
    pub fn critical_index(&self, x: f64) -> Option<usize> {
        self.entries.iter().position(|e| e.neighborhood.contains(x))
    }

    pub fn in_critical_set(&self, x: f64) -> bool {
        self.critical_index(x).is_some()
    }

    /// `D_xy`: distance from `{x, y}` to the cloud, `+inf` when the cloud is empty.
    pub fn distance_to_postcritical(&self, x: f64, y: f64) -> f64 {
        self.cloud
            .iter()
            .flat_map(|&p| [self.domain.dist(x, p), self.domain.dist(y, p)])
            .fold(f64::INFINITY, f64::min)
    }
}

enum Failure {
    Cloud,
    Geometry(&'static str),
}

fn neighborhood(domain: &Domain, c: f64, r: f64) -> Interval {
    let Interval { lo, hi } = domain.interval;
    Interval::new((c - r).max(lo), (c + r).min(hi))
}

fn dist_to_interval(domain: &Domain, iv: &Interval, p: f64) -> f64 {
    if domain.circle_wrap {
        let l = domain.len();
        [p - l, p, p + l].iter().map(|&q| iv.distance_to(q)).fold(f64::INFINITY, f64::min)
    } else {
        iv.distance_to(p)
    }
}

#[allow(clippy::too_many_arguments)]
fn check_neighborhood(
    m: &MapModel,
    domain: &Domain,
    c: f64,
    i: usize,
    radii: &[f64],
    crit_values: &[f64],
    values: &[CriticalValue],
    own_value: usize,
    cloud: &[f64],
) -> Option<Failure> {
    let u = neighborhood(domain, c, radii[i]);
    let tol = 1e-12 * domain.len();
    if cloud.iter().any(|&p| dist_to_interval(domain, &u, p) <= tol) {
        return Some(Failure::Cloud);
    }
    let cps = m.critical_points();
    for (j, cp) in cps.iter().enumerate() {
        if j == i {
            continue;
        }
        let other = neighborhood(domain, cp.c, radii[j]);
        if u.contains(cp.c) || u.hi >= other.lo && other.hi >= u.lo {
            return Some(Failure::Geometry("overlaps another critical neighborhood"));
        }
    }
    for cv in values {
        let r = cv.default_chart_radius;
        let chart = Interval::new(cv.value - r, cv.value + r);
        if u.overlaps(&chart) || u.contains(cv.value) {
            return Some(Failure::Geometry("meets the chart of a critical value"));
        }
    }
    let _ = crit_values;
    match image_reach(m, i, &u) {
        Ok(reach) if reach <= values[own_value].default_chart_radius => None,
        _ => Some(Failure::Geometry("image leaves the chart of its critical value")),
    }
}

/// `f` is monotone on each half of `U_i`, so the endpoints bound the image.
fn image_reach(m: &MapModel, i: usize, u: &Interval) -> Result<f64> {
    Ok(m.offset_from_critical_value(u.lo, i)?.abs().max(m.offset_from_critical_value(u.hi, i)?.abs()))
}

fn postcritical_cloud(m: &MapModel, params: &StructureParams) -> Result<Vec<f64>> {
    let domain = m.domain();
    let cps = m.critical_points();
    let first = params.postcritical_offset;
    let last = first + params.postcritical_depth;
    let mut grid: BTreeMap<i64, f64> = BTreeMap::new();
    for cp in cps {
        let mut x = cp.c;
        for n in 1..last {
            let y = m.eval(x)?;
            if !domain.contains(y) {
                return Err(Error::Escape { step: n, value: y });
            }
            x = y;
            if n < first {
                continue;
            }
            if let Some(hit) = cps.iter().find(|other| domain.dist(other.c, x) <= CLOUD_EPS) {
                return Err(Error::NotVeryGood {
                    reason: format!(
                        "orbit of critical point {} returns to critical point {} at iterate {n}",
                        cp.c, hit.c
                    ),
                    iterate: Some(n),
                });
            }
            grid.entry((x / CLOUD_EPS).round() as i64).or_insert(x);
        }
    }
    Ok(grid.into_values().collect())
}

fn complement(domain: &Domain, entries: &[CriticalEntry]) -> Vec<Interval> {
    let mut us: Vec<Interval> = entries.iter().map(|e| e.neighborhood).collect();
    us.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let Interval { lo, hi } = domain.interval;
    let mut out = Vec::new();
    let mut start = lo;
    for u in &us {
        if u.lo > start {
            out.push(Interval::new(start, u.lo));
        }
        start = start.max(u.hi);
    }
    if hi > start {
        out.push(Interval::new(start, hi));
    }
    out
}
