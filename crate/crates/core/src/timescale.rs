//! Time scales as finite unions of closed real segments.
//!
//! A time scale T is a nonempty closed subset of R. Within a bounded
//! window every such set that the rest of the crate needs is represented
//! exactly by an ordered list of pairwise disjoint closed segments, where
//! a degenerate segment [t, t] is an isolated point. The forward jump
//! sigma, backward jump rho, graininess mu(t) = sigma(t) - t, and point
//! classification all fall out of segment lookups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for membership tests and point-coincidence checks.
/// Instants within this distance of a member are treated as that member.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// One maximal closed segment [left, right] of a time scale; left == right
/// denotes an isolated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub left: f64,
    pub right: f64,
}

impl Segment {
    /// True when the segment is a single point (up to membership tolerance).
    #[inline]
    pub fn is_point(&self) -> bool {
        self.right - self.left <= MEMBERSHIP_TOL
    }

    /// Segment length; zero for isolated points.
    #[inline]
    pub fn length(&self) -> f64 {
        self.right - self.left
    }
}

/// How a time scale was produced. Retained so reports and serialized runs
/// can echo the construction instead of dumping raw segment lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// The continuum: one segment spanning the window.
    Reals,
    /// Uniform grid t0, t0 + h, t0 + 2h, ... with step h > 0.
    HGrid { h: f64 },
    /// Union of [k(a+b), k(a+b) + a] over integer k: stretches of length a
    /// separated by gaps of length b.
    Periodic { a: f64, b: f64 },
    /// Arbitrary segment list supplied directly.
    Explicit,
}

/// Classification of an instant by the behavior of the jump operators.
/// Follows the sigma/rho convention, so a window maximum is right-dense
/// (sigma(t) = t) and a window minimum is left-dense (rho(t) = t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PointClass {
    pub right_scattered: bool,
    pub right_dense: bool,
    pub left_scattered: bool,
    pub left_dense: bool,
}

/// Behavior of one side of a point; used when only one side matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideKind {
    Scattered,
    Dense,
}

impl PointClass {
    /// Isolated means scattered on both sides.
    #[inline]
    pub fn is_isolated(&self) -> bool {
        self.right_scattered && self.left_scattered
    }

    /// Dense means dense on both sides.
    #[inline]
    pub fn is_dense(&self) -> bool {
        self.right_dense && self.left_dense
    }

    /// Human-readable tag for reports.
    pub fn label(&self) -> &'static str {
        match (self.right_scattered, self.left_scattered) {
            (true, true) => "isolated",
            (true, false) => "right-scattered, left-dense",
            (false, true) => "right-dense, left-scattered",
            (false, false) => "dense",
        }
    }
}

/// A bounded time scale: ordered disjoint closed segments plus the
/// generator that produced them. The window is the hull
/// [min member, max member]; every query outside it is a membership error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeScale {
    segments: Vec<Segment>,
    generator: Generator,
    window: (f64, f64),
}

impl TimeScale {
    /// Continuum window [t0, t1].
    pub fn reals(t0: f64, t1: f64) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::Config(format!(
                "reals generator needs t0 < t1, got [{t0}, {t1}]"
            )));
        }
        Self::from_parts(vec![Segment { left: t0, right: t1 }], Generator::Reals)
    }

    /// Integer grid t0, t0 + 1, ... clipped to [t0, t1].
    pub fn integers(t0: f64, t1: f64) -> Result<Self> {
        Self::h_grid(1.0, t0, t1)
    }

    /// Uniform grid t0, t0 + h, t0 + 2h, ... clipped to [t0, t1].
    pub fn h_grid(h: f64, t0: f64, t1: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!("grid step must be positive, got {h}")));
        }
        if t1 < t0 {
            return Err(Error::Config(format!(
                "window reversed: [{t0}, {t1}]"
            )));
        }
        let n = ((t1 - t0) / h + MEMBERSHIP_TOL).floor() as usize;
        let segments = (0..=n)
            .map(|k| {
                let t = t0 + k as f64 * h;
                Segment { left: t, right: t }
            })
            .collect();
        Self::from_parts(segments, Generator::HGrid { h })
    }

    /// Periodic union of [k(a+b), k(a+b) + a] over integer k, clipped to
    /// [t0, t1]. Stretches of length a alternate with gaps of length b.
    pub fn periodic(a: f64, b: f64, t0: f64, t1: f64) -> Result<Self> {
        if !(a >= 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!(
                "periodic generator needs a >= 0 and b > 0, got a = {a}, b = {b}"
            )));
        }
        if t1 < t0 {
            return Err(Error::Config(format!("window reversed: [{t0}, {t1}]")));
        }
        let p = a + b;
        let k_lo = ((t0 - a) / p).floor() as i64 - 1;
        let k_hi = (t1 / p).ceil() as i64 + 1;
        let mut segments = Vec::new();
        for k in k_lo..=k_hi {
            let left = (k as f64 * p).max(t0);
            let right = (k as f64 * p + a).min(t1);
            if right >= left - MEMBERSHIP_TOL {
                segments.push(Segment {
                    left,
                    right: right.max(left),
                });
            }
        }
        Self::from_parts(segments, Generator::Periodic { a, b })
    }

    /// Time scale from an explicit segment list. Segments must be ordered,
    /// nonoverlapping, and separated by gaps wider than the membership
    /// tolerance; touching segments should be merged by the caller.
    pub fn explicit(segments: &[(f64, f64)]) -> Result<Self> {
        let segs = segments
            .iter()
            .map(|&(left, right)| Segment { left, right })
            .collect();
        Self::from_parts(segs, Generator::Explicit)
    }

    fn from_parts(segments: Vec<Segment>, generator: Generator) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyWindow);
        }
        for s in &segments {
            if !s.left.is_finite() || !s.right.is_finite() || s.right < s.left {
                return Err(Error::Config(format!(
                    "malformed segment [{}, {}]",
                    s.left, s.right
                )));
            }
        }
        for w in segments.windows(2) {
            if w[1].left - w[0].right <= MEMBERSHIP_TOL {
                return Err(Error::Config(format!(
                    "segments [{}, {}] and [{}, {}] are not separated by a gap",
                    w[0].left, w[0].right, w[1].left, w[1].right
                )));
            }
        }
        let window = (segments[0].left, segments[segments.len() - 1].right);
        Ok(Self {
            segments,
            generator,
            window,
        })
    }

    /// Hull [min member, max member].
    #[inline]
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Smallest member.
    #[inline]
    pub fn min(&self) -> f64 {
        self.window.0
    }

    /// Largest member.
    #[inline]
    pub fn max(&self) -> f64 {
        self.window.1
    }

    /// Segment list, ordered and disjoint.
    #[inline]
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Generator this scale was built from.
    #[inline]
    pub fn generator(&self) -> Generator {
        self.generator
    }

    /// Index of the segment containing t, if any.
    fn locate(&self, t: f64) -> Option<usize> {
        let i = self
            .segments
            .partition_point(|s| s.left <= t + MEMBERSHIP_TOL);
        if i == 0 {
            return None;
        }
        (t <= self.segments[i - 1].right + MEMBERSHIP_TOL).then_some(i - 1)
    }

    /// Membership test at tolerance [`MEMBERSHIP_TOL`].
    #[inline]
    pub fn contains(&self, t: f64) -> bool {
        self.locate(t).is_some()
    }

    fn member(&self, t: f64) -> Result<usize> {
        self.locate(t).ok_or(Error::NotMember {
            t,
            tol: MEMBERSHIP_TOL,
        })
    }

    /// The maximal segment containing t.
    pub fn segment_containing(&self, t: f64) -> Result<Segment> {
        Ok(self.segments[self.member(t)?])
    }

    /// Forward jump sigma(t) = inf { s in T : s > t }, with
    /// sigma(max) = max.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        let i = self.member(t)?;
        let s = self.segments[i];
        if t < s.right - MEMBERSHIP_TOL {
            Ok(t)
        } else if i + 1 < self.segments.len() {
            Ok(self.segments[i + 1].left)
        } else {
            Ok(s.right)
        }
    }

    /// Backward jump rho(t) = sup { s in T : s < t }, with rho(min) = min.
    pub fn rho(&self, t: f64) -> Result<f64> {
        let i = self.member(t)?;
        let s = self.segments[i];
        if t > s.left + MEMBERSHIP_TOL {
            Ok(t)
        } else if i > 0 {
            Ok(self.segments[i - 1].right)
        } else {
            Ok(s.left)
        }
    }

    /// Graininess mu(t) = sigma(t) - t; zero at right-dense points and at
    /// the window maximum.
    pub fn graininess(&self, t: f64) -> Result<f64> {
        Ok((self.sigma(t)? - t).max(0.0))
    }

    /// Classify t by the jump operators.
    pub fn classify(&self, t: f64) -> Result<PointClass> {
        let sigma = self.sigma(t)?;
        let rho = self.rho(t)?;
        let right_scattered = sigma - t > MEMBERSHIP_TOL;
        let left_scattered = t - rho > MEMBERSHIP_TOL;
        Ok(PointClass {
            right_scattered,
            right_dense: !right_scattered,
            left_scattered,
            left_dense: !left_scattered,
        })
    }

    /// Behavior of the right side of t: scattered when sigma(t) > t.
    pub fn right_kind(&self, t: f64) -> Result<SideKind> {
        Ok(if self.graininess(t)? > MEMBERSHIP_TOL {
            SideKind::Scattered
        } else {
            SideKind::Dense
        })
    }

    /// True when t is the window maximum (up to membership tolerance).
    #[inline]
    pub fn is_max(&self, t: f64) -> bool {
        (t - self.window.1).abs() <= MEMBERSHIP_TOL
    }

    /// True when t lies in the window hull (gaps included).
    #[inline]
    pub fn hull_contains(&self, t: f64) -> bool {
        t >= self.window.0 - MEMBERSHIP_TOL && t <= self.window.1 + MEMBERSHIP_TOL
    }

    /// Ordered sample of the whole window: every isolated point and segment
    /// endpoint exactly, with dense segments subdivided into steps no wider
    /// than `dense_step`. Endpoints are reproduced exactly by interpolation
    /// so downstream walks land on members.
    pub fn sample(&self, dense_step: f64) -> Result<Vec<f64>> {
        self.sample_clipped(self.window.0, self.window.1, dense_step)
    }

    /// Like [`sample`](Self::sample) but restricted to [t0, t1]; both
    /// bounds must be members.
    pub fn sample_between(&self, t0: f64, t1: f64, dense_step: f64) -> Result<Vec<f64>> {
        self.member(t0)?;
        self.member(t1)?;
        if t1 < t0 {
            return Err(Error::ReversedBounds { a: t0, b: t1 });
        }
        self.sample_clipped(t0, t1, dense_step)
    }

    fn sample_clipped(&self, t0: f64, t1: f64, dense_step: f64) -> Result<Vec<f64>> {
        if !(dense_step > 0.0) || !dense_step.is_finite() {
            return Err(Error::Config(format!(
                "dense_step must be positive, got {dense_step}"
            )));
        }
        let mut out = Vec::new();
        for s in &self.segments {
            let left = s.left.max(t0);
            let right = s.right.min(t1);
            if right < left - MEMBERSHIP_TOL {
                continue;
            }
            if right - left <= MEMBERSHIP_TOL {
                out.push(left);
                continue;
            }
            let n = ((right - left) / dense_step).ceil().max(1.0) as usize;
            for k in 0..=n {
                let th = k as f64 / n as f64;
                out.push(left * (1.0 - th) + right * th);
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyWindow);
        }
        Ok(out)
    }

    /// Distinct graininess values occurring in the window, ascending: one
    /// zero for any dense stretch plus each distinct gap width. The window
    /// maximum contributes nothing (its graininess is zero by convention
    /// but no step is ever taken from it).
    pub fn graininess_values(&self) -> Vec<f64> {
        let mut values = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            if !s.is_point() {
                values.push(0.0);
            }
            if i + 1 < self.segments.len() {
                values.push(self.segments[i + 1].left - s.right);
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup_by(|a, b| (*a - *b).abs() <= MEMBERSHIP_TOL);
        values
    }
}
