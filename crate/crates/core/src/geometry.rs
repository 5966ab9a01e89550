//! Discrete closed curves: periodic polylines with per-edge frames,
//! mass-lumped inner products and discrete arc-length derivatives.
//!
//! Edge `j` joins node `j - 1` to node `j` (indices taken mod `N`), so
//! `h_j = X_j - X_{j-1}`. Curves are stored without a duplicated closing
//! node. The outward normal of an edge is `n = -h^⊥ / |h|` where `⊥` is the
//! clockwise rotation `(x, y) ↦ (y, -x)`; this is outward only for clockwise
//! traversal, which is why loaders normalize orientation.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative edge-length threshold (w.r.t. the bounding-box diagonal) below
/// which an edge counts as degenerate.
pub const DEGENERATE_EDGE_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Clockwise rotation by π/2: `(x, y) ↦ (y, -x)`.
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A unit vector in the plane (normals, tangents).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec2(Vec2);

impl UnitVec2 {
    /// Normalizes `v`; returns `None` for zero or non-finite input.
    pub fn new_normalize(v: Vec2) -> Option<Self> {
        let len = v.norm();
        if len > 0.0 && len.is_finite() {
            Some(UnitVec2(v * (1.0 / len)))
        } else {
            None
        }
    }

    /// Wraps `v` without normalizing. Caller guarantees `|v| = 1`.
    pub fn new_unchecked(v: Vec2) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-12, "not a unit vector: {v:?}");
        UnitVec2(v)
    }

    /// Normal with angle `θ` in the convention `n = (sin θ, -cos θ)`.
    pub fn from_theta(theta: f64) -> Self {
        UnitVec2(Vec2::new(theta.sin(), -theta.cos()))
    }

    /// Inverse of [`UnitVec2::from_theta`], in `(-π, π]`.
    pub fn theta(self) -> f64 {
        self.0.x.atan2(-self.0.y)
    }

    pub fn x(self) -> f64 {
        self.0.x
    }

    pub fn y(self) -> f64 {
        self.0.y
    }

    pub fn as_vec(self) -> Vec2 {
        self.0
    }

    pub fn perp(self) -> UnitVec2 {
        UnitVec2(self.0.perp())
    }

    pub fn dot(self, other: UnitVec2) -> f64 {
        self.0.dot(other.0)
    }
}

impl Neg for UnitVec2 {
    type Output = UnitVec2;
    fn neg(self) -> UnitVec2 {
        UnitVec2(-self.0)
    }
}

/// Local frame of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub h: Vec2,
    pub len: f64,
    pub n: UnitVec2,
    pub tau: UnitVec2,
}

/// Periodic polyline with `N >= 3` distinct consecutive nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    nodes: Vec<Vec2>,
}

impl ClosedCurve {
    /// Builds a curve, rejecting too-short, non-finite or degenerate input.
    /// Orientation is not changed; see [`ensure_clockwise`].
    pub fn new(nodes: Vec<Vec2>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::TooFewNodes(nodes.len()));
        }
        if let Some(p) = nodes.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("node {p:?}")));
        }
        let curve = ClosedCurve { nodes };
        curve.check_edges()?;
        Ok(curve)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<Vec2> {
        self.nodes
    }

    /// Node `j` with periodic wraparound (accepts negative indices).
    pub fn node(&self, j: isize) -> Vec2 {
        let n = self.nodes.len() as isize;
        self.nodes[j.rem_euclid(n) as usize]
    }

    /// Edge vector `h_j = X_j - X_{j-1}`.
    pub fn edge(&self, j: usize) -> Vec2 {
        let n = self.nodes.len();
        self.nodes[j % n] - self.nodes[(j + n - 1) % n]
    }

    pub fn edges(&self) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.nodes.len()).map(move |j| self.edge(j))
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges().map(Vec2::norm).collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(Vec2::norm).sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (mut lo, mut hi) = (self.nodes[0], self.nodes[0]);
        for p in &self.nodes {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Vec2 {
        let sum = self.nodes.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
        sum * (1.0 / self.nodes.len() as f64)
    }

    pub fn reversed(&self) -> ClosedCurve {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        ClosedCurve { nodes }
    }

    pub fn translated(&self, v: Vec2) -> ClosedCurve {
        ClosedCurve {
            nodes: self.nodes.iter().map(|&p| p + v).collect(),
        }
    }

    /// Scales about the origin by `c > 0`.
    pub fn scaled(&self, c: f64) -> ClosedCurve {
        ClosedCurve {
            nodes: self.nodes.iter().map(|&p| p * c).collect(),
        }
    }

    fn check_edges(&self) -> Result<()> {
        let tol = DEGENERATE_EDGE_RATIO * self.bbox_diagonal();
        for (j, h) in self.edges().enumerate() {
            let len = h.norm();
            if !(len > tol) {
                return Err(Error::DegenerateEdge { edge: j, length: len });
            }
        }
        Ok(())
    }

    /// Checks `len` against the node count.
    pub(crate) fn expect_len(&self, len: usize) -> Result<()> {
        if len != self.nodes.len() {
            return Err(Error::LengthMismatch {
                expected: self.nodes.len(),
                got: len,
            });
        }
        Ok(())
    }
}

/// Per-edge frames; frame `j` is built from `h_j = X_j - X_{j-1}`.
pub fn edge_frames(curve: &ClosedCurve) -> Result<Vec<EdgeFrame>> {
    let tol = DEGENERATE_EDGE_RATIO * curve.bbox_diagonal();
    curve
        .edges()
        .enumerate()
        .map(|(j, h)| {
            let len = h.norm();
            if !(len > tol) {
                return Err(Error::DegenerateEdge { edge: j, length: len });
            }
            let n = UnitVec2::new_unchecked(-h.perp() * (1.0 / len));
            Ok(EdgeFrame {
                h,
                len,
                n,
                tau: n.perp(),
            })
        })
        .collect()
}

/// Signed enclosed area `½ Σ (x_j - x_{j-1})(y_j + y_{j-1})`, positive for
/// clockwise traversal.
pub fn polygon_area(curve: &ClosedCurve) -> f64 {
    let n = curve.len();
    let nodes = curve.nodes();
    let mut sum = 0.0;
    for j in 0..n {
        let a = nodes[(j + n - 1) % n];
        let b = nodes[j];
        sum += (b.x - a.x) * (b.y + a.y);
    }
    0.5 * sum
}

/// Reverses node order when needed so that `polygon_area > 0`.
pub fn ensure_clockwise(curve: ClosedCurve) -> Result<ClosedCurve> {
    let area = polygon_area(&curve);
    if area.abs() < 1e-14 {
        return Err(Error::ZeroArea);
    }
    Ok(if area > 0.0 { curve } else { curve.reversed() })
}

/// Mass-lumped inner product of two piecewise-linear nodal functions.
pub fn mass_lumped_inner_scalar(u: &[f64], v: &[f64], curve: &ClosedCurve) -> Result<f64> {
    curve.expect_len(u.len())?;
    curve.expect_len(v.len())?;
    let frames = edge_frames(curve)?;
    let n = curve.len();
    Ok(frames
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let prev = (j + n - 1) % n;
            0.5 * f.len * (u[prev] * v[prev] + u[j] * v[j])
        })
        .sum())
}

/// Mass-lumped inner product of two piecewise-constant (edgewise) functions.
pub fn mass_lumped_inner_edgewise(p: &[f64], q: &[f64], curve: &ClosedCurve) -> Result<f64> {
    curve.expect_len(p.len())?;
    curve.expect_len(q.len())?;
    let frames = edge_frames(curve)?;
    Ok(frames
        .iter()
        .zip(p.iter().zip(q))
        .map(|(f, (a, b))| f.len * a * b)
        .sum())
}

/// Edgewise arc-length derivative `(f_j - f_{j-1}) / |h_j|` of a nodal scalar.
pub fn discrete_ds(f: &[f64], curve: &ClosedCurve) -> Result<Vec<f64>> {
    curve.expect_len(f.len())?;
    let frames = edge_frames(curve)?;
    let n = curve.len();
    Ok((0..n).map(|j| (f[j] - f[(j + n - 1) % n]) / frames[j].len).collect())
}

/// Edgewise arc-length derivative of a nodal vector field.
pub fn discrete_ds_vec(f: &[Vec2], curve: &ClosedCurve) -> Result<Vec<Vec2>> {
    curve.expect_len(f.len())?;
    let frames = edge_frames(curve)?;
    let n = curve.len();
    Ok((0..n)
        .map(|j| (f[j] - f[(j + n - 1) % n]) * (1.0 / frames[j].len))
        .collect())
}

/// Half-step normal `-½ (h^m_j + h^{m+1}_j)^⊥ / |h^m_j|` per edge.
///
/// Not unit length in general and must not be normalized.
pub fn half_step_normal(old: &ClosedCurve, new: &ClosedCurve) -> Result<Vec<Vec2>> {
    old.expect_len(new.len())?;
    let frames = edge_frames(old)?;
    Ok(frames
        .iter()
        .enumerate()
        .map(|(j, f)| -(f.h + new.edge(j)).perp() * (0.5 / f.len))
        .collect())
}

/// Reads a `x,y` CSV (no closing duplicate) and normalizes to clockwise.
pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<ClosedCurve> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut nodes = Vec::new();
    for row in reader.deserialize() {
        let p: Vec2 = row?;
        nodes.push(p);
    }
    ensure_clockwise(ClosedCurve::new(nodes)?)
}

pub fn write_curve_csv(curve: &ClosedCurve, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["x", "y"])?;
    for p in curve.nodes() {
        writer.write_record([format!("{:.16e}", p.x), format!("{:.16e}", p.y)])?;
    }
    writer.flush()?;
    Ok(())
}

/// Clockwise ellipse with semi-axes `a`, `b`:
/// `X(ρ_j) = (a cos 2πρ_j, -b sin 2πρ_j)`, `ρ_j = j / N`.
pub fn ellipse(a: f64, b: f64, n: usize) -> Result<ClosedCurve> {
    let nodes = (0..n)
        .map(|j| {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            Vec2::new(a * phi.cos(), -b * phi.sin())
        })
        .collect();
    ClosedCurve::new(nodes)
}

pub fn circle(r: f64, n: usize) -> Result<ClosedCurve> {
    ellipse(r, r, n)
}
