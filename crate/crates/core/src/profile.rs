//! Piecewise-linear time curves: load profiles, forecasts and schedules all
//! share this representation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ProfileError;

pub const DAY_S: f64 = 86_400.0;

/// Breakpoints `(time_s, value)` with strictly increasing times, linearly
/// interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        if points.is_empty() {
            return Err(ProfileError::Empty);
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(ProfileError::NotIncreasing(i + 1));
            }
        }
        Ok(PiecewiseLinear { points })
    }

    pub fn constant(value: f64, start_s: f64, end_s: f64) -> Self {
        let points = if end_s > start_s {
            vec![(start_s, value), (end_s, value)]
        } else {
            vec![(start_s, value)]
        };
        PiecewiseLinear { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].0
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Interpolated value; errors outside `[start, end]`.
    pub fn at(&self, t: f64) -> Result<f64, ProfileError> {
        if t < self.start() || t > self.end() || t.is_nan() {
            return Err(ProfileError::OutOfSpan {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        Ok(self.eval(t))
    }

    /// Interpolated value, holding the end values outside the span.
    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0].0 {
            return p[0].1;
        }
        if t >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let k = p.partition_point(|&(tk, _)| tk <= t);
        let (t0, v0) = p[k - 1];
        let (t1, v1) = p[k];
        if t == t0 {
            return v0;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Exact time average over the span (trapezoidal on each segment).
    pub fn mean(&self) -> f64 {
        let p = &self.points;
        if p.len() < 2 {
            return p[0].1;
        }
        let area: f64 = p.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
        area / (self.end() - self.start())
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        PiecewiseLinear {
            points: self.points.iter().map(|&(t, v)| (t, f(v))).collect(),
        }
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = ProfileError;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        PiecewiseLinear::new(points)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.points
    }
}

/// Active power demand curve in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct LoadProfile(PiecewiseLinear);

impl LoadProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        for (index, &(_, value)) in points.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(ProfileError::Negative { index, value });
            }
        }
        Ok(LoadProfile(PiecewiseLinear::new(points)?))
    }

    pub fn constant(p_mw: f64, duration_s: f64) -> Self {
        LoadProfile(PiecewiseLinear::constant(p_mw, 0.0, duration_s))
    }

    pub fn curve(&self) -> &PiecewiseLinear {
        &self.0
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.0
            .points()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)))
    }
}

impl TryFrom<Vec<(f64, f64)>> for LoadProfile {
    type Error = ProfileError;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        LoadProfile::new(points)
    }
}

impl From<LoadProfile> for Vec<(f64, f64)> {
    fn from(p: LoadProfile) -> Self {
        p.0.into()
    }
}

pub fn interpolate_profile(profile: &LoadProfile, t_s: f64) -> Result<f64, ProfileError> {
    profile.0.at(t_s)
}

pub type ProfileSet = BTreeMap<String, LoadProfile>;
