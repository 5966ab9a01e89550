//! Auxiliary functions `P_α`, `Q`, the minimal stabilizing function `k₀(n)`
//! and angular tables of the stabilizer `k(n)`.
//!
//! For fixed `(n, n̂)`, `P_α` is nondecreasing in α, so the smallest feasible
//! α for one direction has a closed form. `k₀(n)` is the supremum of that
//! per-direction value over `n̂ ∈ S¹`, approximated on a uniform `n̂`-grid
//! anchored at `n` and polished by a bracketed golden-section search.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::anisotropy::{check_stability_condition, periodic_lerp, read_uniform_angle_table, Anisotropy};
use crate::error::{Error, Result};
use crate::geometry::{UnitVec2, Vec2};

/// Below this `t² = (n̂·n^⊥)²` the direction is treated as `n̂ = ±n`.
pub const T_SQUARED_THRESHOLD: f64 = 1e-14;

/// Default `n̂`-grid resolution for [`k0_at`].
pub const DEFAULT_NHAT_GRID: usize = 1024;

/// Default number of table angles.
pub const DEFAULT_TABLE_POINTS: usize = 20;

/// Table size used for time stepping. The linear interpolant of a
/// 20-angle table falls below k₀ by up to about 0.1 near its peaks, and
/// runs driven by it lose energy monotonicity (Case I shows period-two
/// energy oscillations).
pub const SIMULATION_TABLE_POINTS: usize = 720;

/// The local search never evaluates directions with `|n̂·n^⊥|` below this;
/// closer to `n̂ = n` the closed form loses accuracy to cancellation.
const REFINE_MIN_T: f64 = 1e-3;

const GOLDEN_ITERATIONS: usize = 80;

/// Resolution of the condition check done before building a table.
const CONDITION_CHECK_GRID: usize = 4096;

/// `P_α = 2 sqrt((γ(n) + α t²) γ(n))` with `t = n̂·n^⊥`.
pub fn p_alpha(gamma_n: f64, t: f64, alpha: f64) -> f64 {
    2.0 * ((gamma_n + alpha * t * t) * gamma_n).sqrt()
}

/// `Q = γ(n̂) + γ(n)(n·n̂) - (ξ·n^⊥)(n̂·n^⊥)`.
pub fn q_fn(a: &Anisotropy, n: UnitVec2, nhat: UnitVec2) -> f64 {
    let np = n.perp();
    a.gamma(nhat) + a.gamma(n) * n.dot(nhat) - a.xi(n).dot(np.as_vec()) * nhat.dot(np)
}

/// Smallest `α >= 0` with `P_α(n, n̂) >= Q(n, n̂)`.
pub fn min_alpha_for_direction(a: &Anisotropy, n: UnitVec2, nhat: UnitVec2) -> Result<f64> {
    let gamma = a.gamma(n);
    let q = q_fn(a, n, nhat);
    let p0 = 2.0 * gamma;
    if q <= p0 {
        return Ok(0.0);
    }
    let t = nhat.dot(n.perp());
    let t2 = t * t;
    if t2 < T_SQUARED_THRESHOLD {
        // n̂ = n gives Q = 2γ up to rounding
        if q <= p0 * (1.0 + 1e-12) {
            return Ok(0.0);
        }
        return Err(Error::ConditionViolated {
            angle: n.theta(),
            margin: 3.0 * gamma - a.gamma(-n),
        });
    }
    Ok((q * q / (4.0 * gamma) - gamma) / t2)
}

fn rotate(n: UnitVec2, phi: f64) -> UnitVec2 {
    let (s, c) = phi.sin_cos();
    let v = n.as_vec();
    UnitVec2::new_unchecked(Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y))
}

/// Grid approximation of `k₀(n) = sup_{n̂} min_alpha_for_direction(n, n̂)`.
pub fn k0_at(a: &Anisotropy, n: UnitVec2, grid_size_nhat: usize) -> Result<f64> {
    let grid = grid_size_nhat.max(64);
    let dphi = 2.0 * PI / grid as f64;
    let mut best = 0.0;
    let mut best_i = 0;
    for i in 0..grid {
        let alpha = min_alpha_for_direction(a, n, rotate(n, i as f64 * dphi))?;
        if alpha > best {
            best = alpha;
            best_i = i;
        }
    }
    if best == 0.0 {
        return Ok(0.0);
    }

    let center = best_i as f64 * dphi;
    let min_phi = REFINE_MIN_T.asin();
    let objective = |phi: f64| -> f64 {
        // keep away from n̂ = n, where t → 0
        let wrapped = (phi + PI).rem_euclid(2.0 * PI) - PI;
        let phi = if wrapped.abs() < min_phi {
            min_phi.copysign(wrapped)
        } else {
            wrapped
        };
        min_alpha_for_direction(a, n, rotate(n, phi)).unwrap_or(f64::NEG_INFINITY)
    };
    let refined = golden_section_max(objective, center - dphi, center + dphi);
    Ok(best.max(refined))
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

/// Stabilizer values on the uniform angle grid `θ_i = 2πi/M`
/// (`n = (sin θ, -cos θ)`), linearly interpolated and periodic in θ.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerTable {
    values: Vec<f64>,
}

impl StabilizerTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("stabilizer table is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("stabilizer values must be >= 0, got {v}")));
        }
        Ok(StabilizerTable { values })
    }

    pub fn zeros(points: usize) -> Self {
        StabilizerTable {
            values: vec![0.0; points.max(1)],
        }
    }

    /// A constant stabilizer `k(n) ≡ k`.
    pub fn constant(k: f64) -> Result<Self> {
        Self::new(vec![k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn angles(&self) -> Vec<f64> {
        let m = self.values.len();
        (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).collect()
    }

    pub fn eval_theta(&self, theta: f64) -> f64 {
        periodic_lerp(&self.values, theta)
    }

    pub fn eval(&self, n: UnitVec2) -> f64 {
        self.eval_theta(n.theta())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    /// Reads a `theta,k0` CSV written by [`StabilizerTable::write_csv`].
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_uniform_angle_table(path, "k0")?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }

    pub fn write_csv_to(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "k0"])?;
        for (theta, k) in self.angles().iter().zip(&self.values) {
            w.write_record([format!("{theta:.16e}"), format!("{k:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tabulates `safety × k₀` at `M_n` uniform angles after checking the
/// energy-stability condition on a fine grid.
pub fn build_stabilizer_table(
    a: &Anisotropy,
    points: usize,
    grid_size_nhat: usize,
    safety: f64,
) -> Result<StabilizerTable> {
    if points == 0 {
        return Err(Error::InvalidInput("stabilizer table needs at least one point".into()));
    }
    if !(safety >= 1.0) {
        return Err(Error::InvalidInput(format!("safety factor must be >= 1, got {safety}")));
    }
    let report = check_stability_condition(a, CONDITION_CHECK_GRID.max(8 * points));
    if !report.holds {
        return Err(Error::ConditionViolated {
            angle: report.worst_angle,
            margin: report.worst_margin,
        });
    }
    let values = (0..points)
        .into_par_iter()
        .map(|i| {
            let n = UnitVec2::from_theta(2.0 * PI * i as f64 / points as f64);
            k0_at(a, n, grid_size_nhat).map(|k| safety * k)
        })
        .collect::<Result<Vec<_>>>()?;
    StabilizerTable::new(values)
}
