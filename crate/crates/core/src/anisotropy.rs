//! Anisotropic surface energy densities γ(n), their one-homogeneous
//! extensions γ(p) and Cahn–Hoffman ξ-vectors.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{UnitVec2, Vec2};

/// Finite-difference step used by [`xi_numeric`].
pub const XI_FD_STEP: f64 = 1e-6;

/// `γ(θ) = 1 + β cos(kθ + phase)` with `n = (sin θ, -cos θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFoldParams {
    pub beta: f64,
    pub k: u32,
    #[serde(default)]
    pub phase: f64,
}

impl KFoldParams {
    pub fn new(beta: f64, k: u32, phase: f64) -> Result<Self> {
        if !(beta.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "k-fold anisotropy needs |beta| < 1, got {beta}"
            )));
        }
        if k == 0 {
            return Err(Error::InvalidInput("k-fold anisotropy needs k >= 1".into()));
        }
        Ok(KFoldParams { beta, k, phase })
    }

    /// The 3-fold anisotropy `1 + β cos 3θ`.
    pub fn three_fold(beta: f64) -> Result<Self> {
        Self::new(beta, 3, 0.0)
    }

    /// `|β| < 1/(k² - 1)` keeps the Wulff shape free of corners.
    pub fn is_weakly_anisotropic(&self) -> bool {
        let k2 = (self.k * self.k) as f64;
        k2 <= 1.0 || self.beta.abs() < 1.0 / (k2 - 1.0)
    }
}

/// γ sampled on the uniform grid `θ_i = 2πi/M`, interpolated linearly and
/// periodically in θ.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    values: Vec<f64>,
}

impl GammaTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidInput("gamma table needs at least 3 samples".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "gamma table values must be positive, got {v}"
            )));
        }
        Ok(GammaTable { values })
    }

    /// Reads a `theta,gamma` CSV on a uniform grid starting at θ = 0.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_uniform_angle_table(path, "gamma")?;
        Self::new(rows)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, theta: f64) -> f64 {
        periodic_lerp(&self.values, theta)
    }
}

/// Linear interpolation of samples on `θ_i = 2πi/M`, periodic in θ.
pub(crate) fn periodic_lerp(values: &[f64], theta: f64) -> f64 {
    let m = values.len();
    if m == 1 {
        return values[0];
    }
    let s = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * m as f64;
    let i = (s.floor() as usize).min(m - 1);
    let w = s - i as f64;
    (1.0 - w) * values[i] + w * values[(i + 1) % m]
}

/// Reads a two-column CSV whose first column is a uniform angle grid on
/// `[0, 2π)` starting at 0; returns the second column.
pub(crate) fn read_uniform_angle_table(path: impl AsRef<Path>, column: &str) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "theta" || &headers[1] != column {
        return Err(Error::InvalidInput(format!(
            "expected header `theta,{column}`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut thetas = Vec::new();
    let mut values = Vec::new();
    for row in reader.deserialize() {
        let (t, v): (f64, f64) = row?;
        thetas.push(t);
        values.push(v);
    }
    let m = thetas.len();
    for (i, t) in thetas.iter().enumerate() {
        let expected = 2.0 * PI * i as f64 / m as f64;
        if (t - expected).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "angle column must be the uniform grid 2πi/{m}; row {i} has {t}"
            )));
        }
    }
    Ok(values)
}

/// A surface energy density. Immutable, cheap to clone, `Send + Sync`.
#[derive(Debug, Clone, PartialEq)]
pub enum Anisotropy {
    /// γ ≡ 1.
    Isotropic,
    /// `γ(n) = sqrt((5/2 + 3/2 sgn(n₁)) n₁² + n₂²)`.
    CaseI,
    KFold(KFoldParams),
    /// User samples; ξ from [`xi_numeric`].
    Table(GammaTable),
    Scaled(f64, Box<Anisotropy>),
    Sum(Box<Anisotropy>, Box<Anisotropy>),
}

impl Anisotropy {
    pub fn kfold(beta: f64, k: u32, phase: f64) -> Result<Self> {
        Ok(Anisotropy::KFold(KFoldParams::new(beta, k, phase)?))
    }

    pub fn scaled(self, c: f64) -> Self {
        Anisotropy::Scaled(c, Box::new(self))
    }

    pub fn plus(self, other: Anisotropy) -> Self {
        Anisotropy::Sum(Box::new(self), Box::new(other))
    }

    pub fn label(&self) -> String {
        match self {
            Anisotropy::Isotropic => "isotropic".into(),
            Anisotropy::CaseI => "case1".into(),
            Anisotropy::KFold(p) => format!("kfold(beta={},k={},phase={})", p.beta, p.k, p.phase),
            Anisotropy::Table(t) => format!("table({} samples)", t.values.len()),
            Anisotropy::Scaled(c, a) => format!("{c}*{}", a.label()),
            Anisotropy::Sum(a, b) => format!("{}+{}", a.label(), b.label()),
        }
    }

    /// γ on the unit circle.
    pub fn gamma(&self, n: UnitVec2) -> f64 {
        match self {
            Anisotropy::Isotropic => 1.0,
            Anisotropy::CaseI => case1_gamma_ext(n.as_vec()),
            Anisotropy::KFold(p) => 1.0 + p.beta * (p.k as f64 * n.theta() + p.phase).cos(),
            Anisotropy::Table(t) => t.eval(n.theta()),
            Anisotropy::Scaled(c, a) => c * a.gamma(n),
            Anisotropy::Sum(a, b) => a.gamma(n) + b.gamma(n),
        }
    }

    /// Cahn–Hoffman vector `ξ = ∇γ(p)|_{p=n}`.
    pub fn xi(&self, n: UnitVec2) -> Vec2 {
        match self {
            Anisotropy::Isotropic => n.as_vec(),
            Anisotropy::CaseI => xi_case1(n),
            Anisotropy::KFold(p) => xi_kfold(p, n),
            // a piecewise-linear table always yields finite differences
            Anisotropy::Table(_) => xi_numeric(self, n).unwrap_or_else(|_| n.as_vec() * self.gamma(n)),
            Anisotropy::Scaled(c, a) => a.xi(n) * *c,
            Anisotropy::Sum(a, b) => a.xi(n) + b.xi(n),
        }
    }
}

fn case1_coefficient(p1: f64) -> f64 {
    // sgn(0) = 0
    let sgn = if p1 > 0.0 {
        1.0
    } else if p1 < 0.0 {
        -1.0
    } else {
        0.0
    };
    2.5 + 1.5 * sgn
}

fn case1_gamma_ext(p: Vec2) -> f64 {
    (case1_coefficient(p.x) * p.x * p.x + p.y * p.y).sqrt()
}

/// One-homogeneous extension `|p| γ(p/|p|)`, zero at the origin.
pub fn gamma_extension(a: &Anisotropy, p: Vec2) -> f64 {
    match a {
        Anisotropy::CaseI => case1_gamma_ext(p),
        _ => match UnitVec2::new_normalize(p) {
            Some(n) => p.norm() * a.gamma(n),
            None => 0.0,
        },
    }
}

/// `ξ = (a n₁, n₂) / γ(n)` with `a = 5/2 + 3/2 sgn(n₁)`.
pub fn xi_case1(n: UnitVec2) -> Vec2 {
    let a = case1_coefficient(n.x());
    let g = case1_gamma_ext(n.as_vec());
    Vec2::new(a * n.x(), n.y()) * (1.0 / g)
}

/// `ξ = γ(θ) n + kβ sin(kθ + phase) τ` with `τ = n^⊥`.
pub fn xi_kfold(params: &KFoldParams, n: UnitVec2) -> Vec2 {
    let arg = params.k as f64 * n.theta() + params.phase;
    let gamma = 1.0 + params.beta * arg.cos();
    let tangential = params.k as f64 * params.beta * arg.sin();
    n.as_vec() * gamma + n.perp().as_vec() * tangential
}

/// Central-difference gradient of γ(p) at `p = n`, with the normal component
/// replaced by γ(n) so that `ξ·n = γ(n)` holds exactly.
pub fn xi_numeric(a: &Anisotropy, n: UnitVec2) -> Result<Vec2> {
    let p = n.as_vec();
    let h = XI_FD_STEP;
    let g = |q: Vec2| gamma_extension(a, q);
    let gx = (g(p + Vec2::new(h, 0.0)) - g(p - Vec2::new(h, 0.0))) / (2.0 * h);
    let gy = (g(p + Vec2::new(0.0, h)) - g(p - Vec2::new(0.0, h))) / (2.0 * h);
    let gamma = a.gamma(n);
    if !(gx.is_finite() && gy.is_finite() && gamma.is_finite()) {
        return Err(Error::NonFinite(format!("γ near n = {:?}", n.as_vec())));
    }
    let tau = n.perp().as_vec();
    Ok(p * gamma + tau * Vec2::new(gx, gy).dot(tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub holds: bool,
    /// min over the grid of `3γ(n) - γ(-n)`.
    pub worst_margin: f64,
    pub worst_angle: f64,
}

/// Evaluates `3γ(n) - γ(-n)` on `θ_i = 2πi/grid_size`.
pub fn check_stability_condition(a: &Anisotropy, grid_size: usize) -> StabilityReport {
    let grid_size = grid_size.max(16);
    let (worst_margin, worst_angle) = (0..grid_size)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / grid_size as f64;
            let n = UnitVec2::from_theta(theta);
            (3.0 * a.gamma(n) - a.gamma(-n), theta)
        })
        .fold(
            (f64::INFINITY, 0.0),
            |best, cur| if cur.0 < best.0 { cur } else { best },
        );
    StabilityReport {
        holds: worst_margin > 0.0,
        worst_margin,
        worst_angle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn builtins() -> Vec<Anisotropy> {
        vec![
            Anisotropy::Isotropic,
            Anisotropy::CaseI,
            Anisotropy::kfold(1.0 / 3.0, 3, 0.0).unwrap(),
            Anisotropy::kfold(1.0 / 9.0, 3, 0.0).unwrap(),
            Anisotropy::kfold(0.2, 4, 0.3).unwrap(),
        ]
    }

    #[test]
    fn extension_values() {
        assert_eq!(gamma_extension(&Anisotropy::Isotropic, Vec2::new(3.0, 4.0)), 5.0);
        for a in builtins() {
            assert_eq!(gamma_extension(&a, Vec2::ZERO), 0.0);
        }
        assert_eq!(gamma_extension(&Anisotropy::CaseI, Vec2::new(2.0, 0.0)), 4.0);
    }

    #[test]
    fn case1_xi_examples() {
        let e = |v: Vec2, x: f64, y: f64| {
            assert_abs_diff_eq!(v.x, x, epsilon = 1e-15);
            assert_abs_diff_eq!(v.y, y, epsilon = 1e-15);
        };
        e(xi_case1(UnitVec2::new_unchecked(Vec2::new(1.0, 0.0))), 2.0, 0.0);
        e(xi_case1(UnitVec2::new_unchecked(Vec2::new(-1.0, 0.0))), -1.0, 0.0);
        e(xi_case1(UnitVec2::new_unchecked(Vec2::new(0.0, 1.0))), 0.0, 1.0);
        // ξ·n = γ at n = (1,0)
        assert_eq!(
            Anisotropy::CaseI.gamma(UnitVec2::new_unchecked(Vec2::new(1.0, 0.0))),
            2.0
        );
    }

    #[test]
    fn kfold_xi_examples() {
        let iso = KFoldParams::new(0.0, 3, 0.0).unwrap();
        for i in 0..16 {
            let n = UnitVec2::from_theta(i as f64 * 0.4);
            let xi = xi_kfold(&iso, n);
            assert_abs_diff_eq!((xi - n.as_vec()).norm(), 0.0, epsilon = 1e-15);
        }
        let p = KFoldParams::three_fold(1.0 / 3.0).unwrap();
        let xi = xi_kfold(&p, UnitVec2::from_theta(0.0));
        assert_abs_diff_eq!(xi.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(xi.y, -4.0 / 3.0, epsilon = 1e-15);
    }

    /// Central differences of γ(p) in each coordinate, step 1e-6, with no
    /// normal-component correction.
    fn fd_gradient(a: &Anisotropy, p: Vec2) -> Vec2 {
        let h = 1e-6;
        let g = |q: Vec2| gamma_extension(a, q);
        Vec2::new(
            (g(p + Vec2::new(h, 0.0)) - g(p - Vec2::new(h, 0.0))) / (2.0 * h),
            (g(p + Vec2::new(0.0, h)) - g(p - Vec2::new(0.0, h))) / (2.0 * h),
        )
    }

    #[test]
    fn kfold_xi_matches_gradient_at_pi_over_six() {
        let a = Anisotropy::kfold(1.0 / 3.0, 3, 0.0).unwrap();
        let n = UnitVec2::from_theta(PI / 6.0);
        let fd = fd_gradient(&a, n.as_vec());
        let xi = a.xi(n);
        assert!((fd - xi).norm() < 1e-6, "{fd:?} vs {xi:?}");
    }

    #[test]
    fn numeric_xi_agrees_with_closed_forms() {
        let iso = xi_numeric(&Anisotropy::Isotropic, UnitVec2::from_theta(0.7)).unwrap();
        assert!((iso - UnitVec2::from_theta(0.7).as_vec()).norm() < 1e-9);

        let kf = Anisotropy::kfold(1.0 / 3.0, 3, 0.0).unwrap();
        let n = UnitVec2::new_unchecked(Vec2::new(0.5f64.sqrt(), 0.5f64.sqrt()));
        assert!((xi_numeric(&Anisotropy::CaseI, n).unwrap() - xi_case1(n)).norm() < 1e-6);

        for i in 0..256 {
            let theta = 2.0 * PI * (i as f64 + 0.37) / 256.0;
            let n = UnitVec2::from_theta(theta);
            assert!((xi_numeric(&kf, n).unwrap() - kf.xi(n)).norm() < 1e-6);
            if n.x().abs() > 1e-3 {
                assert!((xi_numeric(&Anisotropy::CaseI, n).unwrap() - xi_case1(n)).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn xi_normal_component_is_gamma() {
        for a in builtins() {
            for i in 0..360 {
                let n = UnitVec2::from_theta(i as f64 * PI / 180.0 + 1e-3);
                assert_abs_diff_eq!(a.xi(n).dot(n.as_vec()), a.gamma(n), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn stability_condition_examples() {
        let r = check_stability_condition(&Anisotropy::Isotropic, 64);
        assert!(r.holds);
        assert_eq!(r.worst_margin, 2.0);

        let r = check_stability_condition(&Anisotropy::kfold(1.0 / 3.0, 3, 0.0).unwrap(), 360);
        assert!(r.holds);
        assert_abs_diff_eq!(r.worst_margin, 2.0 / 3.0, epsilon = 1e-12);

        let r = check_stability_condition(&Anisotropy::kfold(0.6, 3, 0.0).unwrap(), 360);
        assert!(!r.holds);
        assert_abs_diff_eq!(r.worst_margin, 2.0 - 2.4, epsilon = 1e-12);

        // Case I: grid minimum of 3γ(n) - γ(-n) by direct evaluation
        let grid = 720;
        let direct = (0..grid)
            .map(|i| {
                let n = UnitVec2::from_theta(2.0 * PI * i as f64 / grid as f64);
                3.0 * case1_gamma_ext(n.as_vec()) - case1_gamma_ext(-n.as_vec())
            })
            .fold(f64::INFINITY, f64::min);
        let r = check_stability_condition(&Anisotropy::CaseI, grid);
        assert!(r.holds);
        assert_eq!(r.worst_margin, direct);
    }

    #[test]
    fn weak_anisotropy_label() {
        assert!(KFoldParams::three_fold(0.1).unwrap().is_weakly_anisotropic());
        assert!(!KFoldParams::three_fold(1.0 / 3.0).unwrap().is_weakly_anisotropic());
        assert!(KFoldParams::three_fold(1.0).is_err());
    }

    #[test]
    fn table_interpolates_periodically() {
        let vals: Vec<f64> = (0..8).map(|i| 1.0 + 0.1 * (i as f64)).collect();
        let t = GammaTable::new(vals).unwrap();
        assert_abs_diff_eq!(t.eval(0.0), 1.0);
        assert_abs_diff_eq!(t.eval(2.0 * PI * 7.5 / 8.0), (1.7 + 1.0) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t.eval(-2.0 * PI * 0.5 / 8.0), (1.7 + 1.0) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn table_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let mut s = String::from("theta,gamma\n");
        let m = 64;
        for i in 0..m {
            let th = 2.0 * PI * i as f64 / m as f64;
            s += &format!("{th},{}\n", 1.0 + 0.2 * (3.0 * th).cos());
        }
        std::fs::write(&path, s).unwrap();
        let a = Anisotropy::Table(GammaTable::from_csv(&path).unwrap());
        let exact = Anisotropy::kfold(0.2, 3, 0.0).unwrap();
        let n = UnitVec2::from_theta(0.3);
        assert!((a.gamma(n) - exact.gamma(n)).abs() < 1e-2);
        assert_abs_diff_eq!(a.xi(n).dot(n.as_vec()), a.gamma(n), epsilon = 1e-12);
        std::fs::write(&path, "theta,gamma\n0,1\n0.5,1\n2,1\n").unwrap();
        assert!(GammaTable::from_csv(&path).is_err());
    }

    proptest! {
        #[test]
        fn extension_is_one_homogeneous(theta in -PI..PI, r in 0.1..10.0f64, c in 0.01..50.0f64) {
            let p = UnitVec2::from_theta(theta).as_vec() * r;
            for a in builtins() {
                let lhs = gamma_extension(&a, p * c);
                let rhs = c * gamma_extension(&a, p);
                prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn theta_round_trip(theta in -3.1..3.1f64) {
            prop_assert!((UnitVec2::from_theta(theta).theta() - theta).abs() < 1e-14);
        }
    }
}
