//! Energy, area and mesh-quality indicators, per-step records and
//! convergence orders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anisotropy::Anisotropy;
use crate::error::{Error, Result};
use crate::geometry::{edge_frames, polygon_area, ClosedCurve};

pub use crate::polygon::{intersection_area, manifold_distance, SimplePolygon};

/// Manifold distance between the regions enclosed by two curves; fails on
/// self-intersecting input.
pub fn curve_distance(a: &ClosedCurve, b: &ClosedCurve) -> Result<f64> {
    Ok(manifold_distance(
        &SimplePolygon::from_curve(a)?,
        &SimplePolygon::from_curve(b)?,
    ))
}

/// `W = Σ_j |h_j| γ(n_j)`.
pub fn discrete_energy(curve: &ClosedCurve, a: &Anisotropy) -> Result<f64> {
    Ok(edge_frames(curve)?.iter().map(|f| f.len * a.gamma(f.n)).sum())
}

/// `max_j |h_j|γ(n_j) / min_j |h_j|γ(n_j)`.
pub fn weighted_mesh_ratio(curve: &ClosedCurve, a: &Anisotropy) -> Result<f64> {
    let (lo, hi) = edge_frames(curve)?
        .iter()
        .map(|f| f.len * a.gamma(f.n))
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), w| (lo.min(w), hi.max(w)));
    Ok(hi / lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub area: f64,
    pub energy: f64,
    /// `(A^m - A^0) / A^0`
    pub rel_area_loss: f64,
    /// `W^m / W^0`
    pub norm_energy: f64,
    pub mesh_ratio: f64,
    pub newton_iterations: usize,
}

impl DiagnosticsRecord {
    /// Evaluates the indicators on `curve`; `reference` holds `(A^0, W^0)`,
    /// or `None` when `curve` is the initial curve itself.
    pub fn evaluate(
        t: f64,
        curve: &ClosedCurve,
        a: &Anisotropy,
        reference: Option<(f64, f64)>,
        newton_iterations: usize,
    ) -> Result<Self> {
        let area = polygon_area(curve);
        let energy = discrete_energy(curve, a)?;
        let (area0, energy0) = reference.unwrap_or((area, energy));
        Ok(DiagnosticsRecord {
            t,
            area,
            energy,
            rel_area_loss: (area - area0) / area0,
            norm_energy: energy / energy0,
            mesh_ratio: weighted_mesh_ratio(curve, a)?,
            newton_iterations,
        })
    }
}

pub const DIAGNOSTICS_HEADER: [&str; 7] = [
    "t",
    "area",
    "energy",
    "rel_area_loss",
    "norm_energy",
    "mesh_ratio",
    "newton_iters",
];

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DIAGNOSTICS_HEADER)?;
    for r in records {
        w.write_record([
            format!("{:.16e}", r.t),
            format!("{:.16e}", r.area),
            format!("{:.16e}", r.energy),
            format!("{:.16e}", r.rel_area_loss),
            format!("{:.16e}", r.norm_energy),
            format!("{:.16e}", r.mesh_ratio),
            r.newton_iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics_csv(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(DIAGNOSTICS_HEADER) {
        return Err(Error::InvalidInput(format!(
            "expected diagnostics header {}",
            DIAGNOSTICS_HEADER.join(",")
        )));
    }
    let mut out = vec![];
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad number {:?}", &row[i])))
        };
        out.push(DiagnosticsRecord {
            t: num(0)?,
            area: num(1)?,
            energy: num(2)?,
            rel_area_loss: num(3)?,
            norm_energy: num(4)?,
            mesh_ratio: num(5)?,
            newton_iterations: row[6]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad count {:?}", &row[6])))?,
        });
    }
    Ok(out)
}

/// `order_i = log₂(e_{i-1} / e_i)` for consecutive `(h, e)` pairs with
/// halving `h`; one entry fewer than the input.
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::InvalidInput("need at least two (h, error) pairs".into()));
    }
    if let Some(&(_, e)) = errors.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(Error::NonPositiveError(e));
    }
    for w in errors.windows(2) {
        let ratio = w[0].0 / w[1].0;
        if (ratio - 2.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "mesh sizes must halve, got {} -> {}",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(errors.windows(2).map(|w| (w[0].1 / w[1].1).log2()).collect())
}
