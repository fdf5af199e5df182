use serde::{Deserialize, Serialize};

/// Closed interval `[lo, hi]` of the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Interior intersection (touching endpoints do not count).
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn distance_to(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    pub fn hull(points: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.min(p), hi.max(p)));
        Some(Self { lo, hi })
    }

    /// `n + 1` equally spaced nodes including both endpoints.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let n = n.max(1);
        (0..=n).map(move |i| {
            if i == n {
                self.hi
            } else {
                self.lo + self.len() * (i as f64) / (n as f64)
            }
        })
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Phase space: a compact interval, optionally with its endpoints identified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub interval: Interval,
    pub circle_wrap: bool,
}

impl Domain {
    pub fn new(interval: Interval, circle_wrap: bool) -> Self {
        Self { interval, circle_wrap }
    }

    pub fn len(&self) -> f64 {
        self.interval.len()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.interval.contains(x)
    }

    /// Euclidean distance, or arc distance when the domain is a circle.
    pub fn dist(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        if self.circle_wrap {
            d.min(self.len() - d).max(0.0)
        } else {
            d
        }
    }

    /// Reduce into `[lo, hi)` for circles; identity otherwise.
    pub fn reduce(&self, x: f64) -> f64 {
        if self.circle_wrap {
            let Interval { lo, .. } = self.interval;
            lo + (x - lo).rem_euclid(self.len())
        } else {
            x
        }
    }
}
