//! The uniform quantizer onto `2θℤⁿ` and its half-open cells.
//!
//! Lattice points are stored as integer indices; the real embedding of index
//! `c` is `2θ·c`. Two ways of mapping a region onto the lattice are provided
//! and must not be confused:
//!
//! * [`quantized_image`]: the set `{[x] : x ∈ region}` (every cell the region
//!   meets contributes its center),
//! * [`lattice_points_in`]: the lattice points lying inside the region.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regions::{AxisBox, BoxUnion};

/// Upper limit on the number of points a single enumeration may produce.
pub const MAX_ENUMERATION: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("non-finite coordinate {value} on axis {axis}")]
    NonFinite { axis: usize, value: f64 },
    #[error("quantization parameter must be positive and finite, got {0}")]
    BadTheta(f64),
    #[error("cannot enumerate lattice points of an unbounded region")]
    Unbounded,
    #[error("enumeration would produce more than {MAX_ENUMERATION} lattice points")]
    TooMany,
}

/// A point of `2θℤⁿ`, held by its integer indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub coords: Vec<i64>,
    pub theta: f64,
}

impl LatticePoint {
    pub fn embed(&self) -> Vec<f64> {
        embed(&self.coords, self.theta)
    }

    pub fn cell(&self) -> AxisBox {
        cell_of(&self.coords, self.theta)
    }
}

pub fn embed(coords: &[i64], theta: f64) -> Vec<f64> {
    coords.iter().map(|&c| embed_coord(c, theta)).collect()
}

#[inline]
pub fn embed_coord(c: i64, theta: f64) -> f64 {
    c as f64 * (2.0 * theta)
}

fn check_theta(theta: f64) -> Result<(), LatticeError> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(LatticeError::BadTheta(theta))
    }
}

/// Rounds `r` to the nearest integer when it is within a few ulps of it.
///
/// Decimal inputs such as `0.3` with `θ = 0.1` land a rounding error away
/// from the exact cell boundary; snapping resolves them the way exact
/// arithmetic would.
#[inline]
pub(crate) fn snap(r: f64) -> f64 {
    let n = r.round();
    if (r - n).abs() <= 16.0 * f64::EPSILON * r.abs().max(1.0) {
        n
    } else {
        r
    }
}

/// Index of the cell `[2θc − θ, 2θc + θ)` containing `v`.
///
/// Ties at odd multiples of `θ` go to the upper cell.
#[inline]
pub fn quantize_index(v: f64, theta: f64) -> i64 {
    snap(v / (2.0 * theta) + 0.5).floor() as i64
}

pub fn quantize(x: &[f64], theta: f64) -> Result<LatticePoint, LatticeError> {
    check_theta(theta)?;
    let coords = quantize_coords(x, theta)?;
    Ok(LatticePoint { coords, theta })
}

pub fn quantize_coords(x: &[f64], theta: f64) -> Result<Vec<i64>, LatticeError> {
    x.iter()
        .enumerate()
        .map(|(axis, &v)| {
            if v.is_finite() {
                Ok(quantize_index(v, theta))
            } else {
                Err(LatticeError::NonFinite { axis, value: v })
            }
        })
        .collect()
}

/// The half-open cell `Π [2θc − θ, 2θc + θ)`.
pub fn cell_of(coords: &[i64], theta: f64) -> AxisBox {
    let n = coords.len();
    AxisBox::with_flags(
        coords.iter().map(|&c| (2 * c - 1) as f64 * theta).collect(),
        coords.iter().map(|&c| (2 * c + 1) as f64 * theta).collect(),
        vec![true; n],
        vec![false; n],
    )
    .expect("cell bounds are ordered")
}

/// Lattice indices whose embedding lies in `b` on one axis.
fn points_range(b: &AxisBox, axis: usize, theta: f64) -> (i64, i64) {
    let lo = snap(b.lower[axis] / (2.0 * theta));
    let hi = snap(b.upper[axis] / (2.0 * theta));
    let mut first = lo.ceil() as i64;
    if !b.lower_closed[axis] && lo.fract() == 0.0 {
        first += 1;
    }
    let mut last = hi.floor() as i64;
    if !b.upper_closed[axis] && hi.fract() == 0.0 {
        last -= 1;
    }
    (first, last)
}

/// Indices of the cells met by `b` on one axis.
fn image_range(b: &AxisBox, axis: usize, theta: f64) -> (i64, i64) {
    let first = quantize_index(b.lower[axis], theta);
    let mut last = quantize_index(b.upper[axis], theta);
    if !b.upper_closed[axis] {
        // an open upper end sitting exactly on a cell's lower boundary does
        // not reach into that cell
        let r = snap(b.upper[axis] / (2.0 * theta) + 0.5);
        if r.fract() == 0.0 {
            last -= 1;
        }
    }
    (first, last)
}

fn enumerate_ranges(
    region: &BoxUnion,
    theta: f64,
    range: impl Fn(&AxisBox, usize, f64) -> (i64, i64),
) -> Result<Vec<Vec<i64>>, LatticeError> {
    check_theta(theta)?;
    if !region.is_bounded() {
        return Err(LatticeError::Unbounded);
    }
    let mut out = BTreeSet::new();
    for b in region.boxes().iter().filter(|b| !b.is_empty()) {
        let ranges: Vec<(i64, i64)> = (0..b.dim()).map(|i| range(b, i, theta)).collect();
        if ranges.iter().any(|(a, z)| a > z) {
            continue;
        }
        let count = ranges.iter().try_fold(1usize, |acc, (a, z)| acc.checked_mul((z - a + 1) as usize));
        match count {
            Some(c) if c + out.len() <= MAX_ENUMERATION => {}
            _ => return Err(LatticeError::TooMany),
        }
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'odometer: loop {
            out.insert(cur.clone());
            for i in (0..cur.len()).rev() {
                if cur[i] < ranges[i].1 {
                    cur[i] += 1;
                    continue 'odometer;
                }
                cur[i] = ranges[i].0;
            }
            break;
        }
        if b.dim() == 0 {
            break;
        }
    }
    Ok(out.into_iter().collect())
}

/// Lattice points of `2θℤⁿ` lying in `region`, sorted lexicographically.
pub fn lattice_points_in(region: &BoxUnion, theta: f64) -> Result<Vec<Vec<i64>>, LatticeError> {
    enumerate_ranges(region, theta, points_range)
}

/// The quantizer image `[region]ⁿ_θ`, sorted lexicographically.
pub fn quantized_image(region: &BoxUnion, theta: f64) -> Result<Vec<Vec<i64>>, LatticeError> {
    enumerate_ranges(region, theta, image_range)
}
