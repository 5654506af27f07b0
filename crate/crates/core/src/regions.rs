//! Axis-aligned boxes and finite unions of them.
//!
//! Infinity-norm balls are boxes, so dilation is per-axis inflation and the
//! erosion test `B_eps(x) ⊆ S` reduces to box subtraction.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("box bounds are inconsistent on axis {axis}: lower {lower} > upper {upper}")]
    Inverted { axis: usize, lower: f64, upper: f64 },
    #[error("region is empty")]
    Empty,
    #[error("region is unbounded or has non-finite bounds")]
    Unbounded,
    #[error("union has no boxes and no explicit dimension")]
    UnknownDimension,
}

/// Fragments narrower than this (relative to their magnitude) are rounding
/// noise left over by subtraction of decimal bounds and count as empty.
const SLIVER_REL: f64 = 1e-12;

fn sliver_tol(a: f64, b: f64) -> f64 {
    SLIVER_REL * 1f64.max(a.abs()).max(b.abs())
}

/// A product of intervals, each end independently open or closed.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_closed: Vec<bool>,
    pub upper_closed: Vec<bool>,
}

impl AxisBox {
    /// Closed box `[lower, upper]`.
    pub fn closed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, RegionError> {
        let n = lower.len();
        Self::with_flags(lower, upper, vec![true; n], vec![true; n])
    }

    pub fn with_flags(
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_closed: Vec<bool>,
        upper_closed: Vec<bool>,
    ) -> Result<Self, RegionError> {
        let n = lower.len();
        for len in [upper.len(), lower_closed.len(), upper_closed.len()] {
            if len != n {
                return Err(RegionError::Dimension { expected: n, got: len });
            }
        }
        for i in 0..n {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i] {
                return Err(RegionError::Inverted { axis: i, lower: lower[i], upper: upper[i] });
            }
        }
        Ok(AxisBox { lower, upper, lower_closed, upper_closed })
    }

    /// The closed infinity-norm ball of radius `eps` around `center`.
    pub fn ball(center: &[f64], eps: f64) -> Self {
        AxisBox {
            lower: center.iter().map(|c| c - eps).collect(),
            upper: center.iter().map(|c| c + eps).collect(),
            lower_closed: vec![true; center.len()],
            upper_closed: vec![true; center.len()],
        }
    }

    /// Degenerate closed box containing the single point `x`.
    pub fn point(x: &[f64]) -> Self {
        Self::ball(x, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// True when some axis admits no point at all.
    pub fn is_empty(&self) -> bool {
        (0..self.dim()).any(|i| {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            lo > hi || (lo == hi && !(self.lower_closed[i] && self.upper_closed[i]))
        })
    }

    fn is_negligible(&self) -> bool {
        self.is_empty()
            || (0..self.dim()).any(|i| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                hi > lo && hi - lo <= sliver_tol(lo, hi)
            })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| {
                let above = if self.lower_closed[i] { v >= self.lower[i] } else { v > self.lower[i] };
                let below = if self.upper_closed[i] { v <= self.upper[i] } else { v < self.upper[i] };
                above && below
            })
    }

    /// Minkowski sum with the closed ball of radius `eps`; all ends become closed.
    pub fn inflate(&self, eps: f64) -> Self {
        AxisBox {
            lower: self.lower.iter().map(|v| v - eps).collect(),
            upper: self.upper.iter().map(|v| v + eps).collect(),
            lower_closed: vec![true; self.dim()],
            upper_closed: vec![true; self.dim()],
        }
    }

    /// Infinity-norm distance from `x` to the closure of the box.
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (self.lower[i] - v).max(v - self.upper[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let n = self.dim();
        let mut out = self.clone();
        for i in 0..n {
            if other.lower[i] > out.lower[i] {
                out.lower[i] = other.lower[i];
                out.lower_closed[i] = other.lower_closed[i];
            } else if other.lower[i] == out.lower[i] {
                out.lower_closed[i] &= other.lower_closed[i];
            }
            if other.upper[i] < out.upper[i] {
                out.upper[i] = other.upper[i];
                out.upper_closed[i] = other.upper_closed[i];
            } else if other.upper[i] == out.upper[i] {
                out.upper_closed[i] &= other.upper_closed[i];
            }
        }
        (!out.is_empty()).then_some(out)
    }

    /// `self \ other` as a list of disjoint boxes, at most `2n` of them.
    ///
    /// Axes are peeled in order: on axis `i` the parts of the current slab
    /// below and above `other` are emitted, then the slab is narrowed to
    /// `other`'s extent on that axis.
    pub fn subtract(&self, other: &AxisBox) -> Vec<AxisBox> {
        if self.intersect(other).is_none() {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        let mut slab = self.clone();
        for i in 0..self.dim() {
            // part strictly below other's lower end
            if slab.lower[i] < other.lower[i]
                || (slab.lower[i] == other.lower[i] && slab.lower_closed[i] && !other.lower_closed[i])
            {
                let mut below = slab.clone();
                below.upper[i] = other.lower[i];
                below.upper_closed[i] = !other.lower_closed[i];
                if !below.is_negligible() {
                    out.push(below);
                }
                slab.lower[i] = other.lower[i];
                slab.lower_closed[i] = other.lower_closed[i];
            }
            if slab.upper[i] > other.upper[i]
                || (slab.upper[i] == other.upper[i] && slab.upper_closed[i] && !other.upper_closed[i])
            {
                let mut above = slab.clone();
                above.lower[i] = other.upper[i];
                above.lower_closed[i] = !other.upper_closed[i];
                if !above.is_negligible() {
                    out.push(above);
                }
                slab.upper[i] = other.upper[i];
                slab.upper_closed[i] = other.upper_closed[i];
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct AxisBoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower_closed: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper_closed: Option<Vec<bool>>,
}

impl Serialize for AxisBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let flags = |v: &Vec<bool>| (!v.iter().all(|&c| c)).then(|| v.clone());
        AxisBoxRepr {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            lower_closed: flags(&self.lower_closed),
            upper_closed: flags(&self.upper_closed),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AxisBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = AxisBoxRepr::deserialize(d)?;
        let n = r.lower.len();
        AxisBox::with_flags(
            r.lower,
            r.upper,
            r.lower_closed.unwrap_or_else(|| vec![true; n]),
            r.upper_closed.unwrap_or_else(|| vec![true; n]),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// A finite union of boxes sharing one dimension. No boxes means the empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxUnion {
    dim: usize,
    boxes: Vec<AxisBox>,
}

impl BoxUnion {
    pub fn new(dim: usize, boxes: Vec<AxisBox>) -> Result<Self, RegionError> {
        for b in &boxes {
            if b.dim() != dim {
                return Err(RegionError::Dimension { expected: dim, got: b.dim() });
            }
        }
        Ok(BoxUnion { dim, boxes })
    }

    pub fn empty(dim: usize) -> Self {
        BoxUnion { dim, boxes: Vec::new() }
    }

    pub fn single(b: AxisBox) -> Self {
        BoxUnion { dim: b.dim(), boxes: vec![b] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boxes(&self) -> &[AxisBox] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.iter().all(AxisBox::is_empty)
    }

    pub fn is_bounded(&self) -> bool {
        self.boxes.iter().all(AxisBox::is_bounded)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), RegionError> {
        if x.len() != self.dim {
            return Err(RegionError::Dimension { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, RegionError> {
        self.check_dim(x)?;
        Ok(self.boxes.iter().any(|b| b.contains(x)))
    }

    pub fn dilate(&self, eps: f64) -> BoxUnion {
        BoxUnion { dim: self.dim, boxes: self.boxes.iter().map(|b| b.inflate(eps)).collect() }
    }

    /// Whether the closed ball `B_eps(x)` is covered by the union.
    pub fn ball_in_union(&self, x: &[f64], eps: f64) -> Result<bool, RegionError> {
        self.check_dim(x)?;
        let mut remainder = vec![AxisBox::ball(x, eps)];
        for member in &self.boxes {
            remainder = remainder.iter().flat_map(|r| r.subtract(member)).collect();
            if remainder.is_empty() {
                return Ok(true);
            }
        }
        Ok(remainder.is_empty())
    }

    /// Infinity-norm distance from `x` to the closure of the union.
    pub fn distance_to(&self, x: &[f64]) -> Result<f64, RegionError> {
        self.check_dim(x)?;
        self.boxes
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| b.distance(x))
            .reduce(f64::min)
            .ok_or(RegionError::Empty)
    }

    /// Smallest closed box containing every member, if the union is nonempty.
    pub fn hull(&self) -> Option<AxisBox> {
        let mut it = self.boxes.iter().filter(|b| !b.is_empty());
        let first = it.next()?;
        let mut lower = first.lower.clone();
        let mut upper = first.upper.clone();
        for b in it {
            for i in 0..self.dim {
                lower[i] = lower[i].min(b.lower[i]);
                upper[i] = upper[i].max(b.upper[i]);
            }
        }
        Some(AxisBox::closed(lower, upper).expect("hull of valid boxes"))
    }

    /// Whether any member box meets any member of `other`.
    pub fn intersects(&self, other: &BoxUnion) -> bool {
        self.boxes.iter().any(|a| other.boxes.iter().any(|b| a.intersect(b).is_some()))
    }
}

#[derive(Serialize, Deserialize)]
struct BoxUnionRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    boxes: Vec<AxisBox>,
}

impl Serialize for BoxUnion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        BoxUnionRepr { dim: self.boxes.is_empty().then_some(self.dim), boxes: self.boxes.clone() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoxUnion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = BoxUnionRepr::deserialize(d)?;
        let dim = match (r.dim, r.boxes.first()) {
            (Some(n), _) => n,
            (None, Some(b)) => b.dim(),
            (None, None) => return Err(serde::de::Error::custom(RegionError::UnknownDimension)),
        };
        BoxUnion::new(dim, r.boxes).map_err(serde::de::Error::custom)
    }
}
