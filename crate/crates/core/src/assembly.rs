//! Surface energy matrix `G_k(n)`, lagged per-edge matrix fields and the
//! nonlinear residual / analytic Jacobian of one time step.
//!
//! All quadrature is mass-lumped on the old curve. For node `i` (touching
//! edges `i` and `i+1`) the rows are
//!
//! ```text
//! eq1_i  = W_i·(X_i - X_i^m)/τ + (flow term in μ)
//! eq2_i  = μ_i W_i - G_i h_i/|h_i^m| + G_{i+1} h_{i+1}/|h_{i+1}^m|
//! ```
//!
//! where `h_j` are new edge vectors, `G_j` the lagged edge matrices and
//! `W_i = ½(w_i + w_{i+1})` with `w_j = |h_j^m| n_j^{m+1/2} = ½ R(h_j^m + h_j)`,
//! `R` the counter-clockwise quarter turn. In the semi-implicit variant
//! `w_j = R h_j^m` and the system is linear.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::anisotropy::Anisotropy;
use crate::error::{Error, Result};
use crate::geometry::{edge_frames, ClosedCurve, UnitVec2, Vec2};
use crate::linalg::BlockJacobian;
use crate::stabilization::StabilizerTable;

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };
    pub const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };
    /// Counter-clockwise quarter turn `(x, y) ↦ (-y, x)`, i.e. `v ↦ -v^⊥`.
    pub const ROT: Mat2 = Mat2 {
        m: [[0.0, -1.0], [1.0, 0.0]],
    };

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 {
            m: [[a11, a12], [a21, a22]],
        }
    }

    /// `u vᵀ`.
    pub fn outer(u: Vec2, v: Vec2) -> Self {
        Mat2::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    pub fn transpose(self) -> Self {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn max_abs(self) -> f64 {
        self.m.iter().flatten().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + o * -1.0
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, c: f64) -> Mat2 {
        Mat2::new(self.m[0][0] * c, self.m[0][1] * c, self.m[1][0] * c, self.m[1][1] * c)
    }
}

/// `G_k = symmetric + antisymmetric` with `symmetric = γI + k nnᵀ` and
/// `antisymmetric = ξnᵀ - nξᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GSplit {
    pub symmetric: Mat2,
    pub antisymmetric: Mat2,
}

/// `G_k(n) = γ(n) I - n ξᵀ + ξ nᵀ + k n nᵀ`.
pub fn g_matrix(a: &Anisotropy, k: f64, n: UnitVec2) -> Mat2 {
    let s = g_split(a, k, n);
    s.symmetric + s.antisymmetric
}

pub fn g_split(a: &Anisotropy, k: f64, n: UnitVec2) -> GSplit {
    let nv = n.as_vec();
    let xi = a.xi(n);
    GSplit {
        symmetric: Mat2::IDENTITY * a.gamma(n) + Mat2::outer(nv, nv) * k,
        antisymmetric: Mat2::outer(xi, nv) - Mat2::outer(nv, xi),
    }
}

/// `|G_k(n) τ - (γ τ - (ξ·τ) n)|` with `τ = n^⊥`.
pub fn g_times_tangent_identity_check(a: &Anisotropy, k: f64, n: UnitVec2) -> f64 {
    let tau = n.perp().as_vec();
    let xi = a.xi(n);
    let lhs = g_matrix(a, k, n).apply(tau);
    let rhs = tau * a.gamma(n) - n.as_vec() * xi.dot(tau);
    (lhs - rhs).norm()
}

/// `G_k(n_j)` on every edge of a curve, with `k` read from the stabilizer table.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMatrixField(Vec<Mat2>);

impl EdgeMatrixField {
    pub fn new(curve: &ClosedCurve, a: &Anisotropy, ktable: &StabilizerTable) -> Result<Self> {
        let frames = edge_frames(curve)?;
        Ok(EdgeMatrixField(
            frames.iter().map(|f| g_matrix(a, ktable.eval(f.n), f.n)).collect(),
        ))
    }

    pub fn as_slice(&self) -> &[Mat2] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    SurfaceDiffusion,
    CurvatureFlow,
    #[serde(alias = "area_conserved")]
    AreaConservedCurvatureFlow,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::SurfaceDiffusion => "surface_diffusion",
            FlowKind::CurvatureFlow => "curvature_flow",
            FlowKind::AreaConservedCurvatureFlow => "area_conserved_curvature_flow",
        }
    }
}

/// Packs nodes and μ into the unknown layout `[x.., y.., μ..]`.
pub fn pack_unknowns(nodes: &[Vec2], mu: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = nodes.iter().map(|p| p.x).collect();
    u.extend(nodes.iter().map(|p| p.y));
    u.extend_from_slice(mu);
    u
}

pub fn unpack_unknowns(u: &[f64]) -> (Vec<Vec2>, Vec<f64>) {
    let n = u.len() / 3;
    let nodes = (0..n).map(|i| Vec2::new(u[i], u[n + i])).collect();
    (nodes, u[2 * n..].to_vec())
}

/// The nonlinear system of one time step, with everything that lives on the
/// old curve precomputed.
#[derive(Debug, Clone)]
pub struct ResidualSystem {
    flow: FlowKind,
    tau: f64,
    implicit: bool,
    old: Vec<Vec2>,
    /// `h_j^m`
    old_edges: Vec<Vec2>,
    /// `|h_j^m|`
    old_len: Vec<f64>,
    /// lumped nodal masses `½(|h_i^m| + |h_{i+1}^m|)`
    mass: Vec<f64>,
    perimeter: f64,
    g: Vec<Mat2>,
}

impl ResidualSystem {
    pub fn new(
        flow: FlowKind,
        old: &ClosedCurve,
        a: &Anisotropy,
        ktable: &StabilizerTable,
        tau: f64,
        implicit: bool,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {tau}")));
        }
        let frames = edge_frames(old)?;
        let n = old.len();
        let old_len: Vec<f64> = frames.iter().map(|f| f.len).collect();
        let mass = (0..n).map(|i| 0.5 * (old_len[i] + old_len[(i + 1) % n])).collect();
        Ok(ResidualSystem {
            flow,
            tau,
            implicit,
            old: old.nodes().to_vec(),
            old_edges: frames.iter().map(|f| f.h).collect(),
            perimeter: old_len.iter().sum(),
            old_len,
            mass,
            g: frames.iter().map(|f| g_matrix(a, ktable.eval(f.n), f.n)).collect(),
        })
    }

    pub fn nodes(&self) -> usize {
        self.old.len()
    }

    pub fn dim(&self) -> usize {
        3 * self.old.len()
    }

    pub fn flow(&self) -> FlowKind {
        self.flow
    }

    pub fn old_nodes(&self) -> &[Vec2] {
        &self.old
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.mass
    }

    /// `(μ, 1)^h / (1, 1)^h` on the old curve.
    pub fn lambda(&self, mu: &[f64]) -> f64 {
        self.mass.iter().zip(mu).map(|(m, v)| m * v).sum::<f64>() / self.perimeter
    }

    /// `W_i` for the given new nodes.
    pub fn half_step_weights(&self, nodes: &[Vec2]) -> Vec<Vec2> {
        let n = self.nodes();
        (0..n)
            .map(|i| {
                let ip = (i + 1) % n;
                let im = (i + n - 1) % n;
                let sum = if self.implicit {
                    (self.old_edges[i] + self.old_edges[ip] + nodes[ip] - nodes[im]) * 0.5
                } else {
                    self.old_edges[i] + self.old_edges[ip]
                };
                Mat2::ROT.apply(sum) * 0.5
            })
            .collect()
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let n = self.nodes();
        let (nodes, mu) = unpack_unknowns(u);
        let w = self.half_step_weights(&nodes);
        let lambda = match self.flow {
            FlowKind::AreaConservedCurvatureFlow => self.lambda(&mu),
            _ => 0.0,
        };
        let mut r = vec![0.0; 3 * n];
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let dx = nodes[i] - self.old[i];
            let flow_term = match self.flow {
                FlowKind::SurfaceDiffusion => (mu[i] - mu[im]) / self.old_len[i] - (mu[ip] - mu[i]) / self.old_len[ip],
                FlowKind::CurvatureFlow => self.mass[i] * mu[i],
                FlowKind::AreaConservedCurvatureFlow => self.mass[i] * (mu[i] - lambda),
            };
            r[i] = w[i].dot(dx) / self.tau + flow_term;

            let h_in = nodes[i] - nodes[im];
            let h_out = nodes[ip] - nodes[i];
            let eq2 = w[i] * mu[i] - self.g[i].apply(h_in) * (1.0 / self.old_len[i])
                + self.g[ip].apply(h_out) * (1.0 / self.old_len[ip]);
            r[n + i] = eq2.x;
            r[2 * n + i] = eq2.y;
        }
        Ok(r)
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<BlockJacobian> {
        self.check_len(u)?;
        let n = self.nodes();
        let (nodes, mu) = unpack_unknowns(u);
        let w = self.half_step_weights(&nodes);
        let quarter = if self.implicit { 0.25 } else { 0.0 };
        let rot = Mat2::ROT * quarter;
        let mut jac = BlockJacobian::zeros(n);
        for i in 0..n {
            let ip = (i + 1) % n;
            let dx = nodes[i] - self.old[i];
            let (li, lip) = (self.old_len[i], self.old_len[ip]);
            // d(W_i·dx)/dX_{i±1} = ±¼ Rᵀ dx
            let dw = rot.transpose().apply(dx) * (1.0 / self.tau);
            let g_in = self.g[i] * (1.0 / li);
            let g_out = self.g[ip] * (1.0 / lip);

            let minus = g_in - rot * mu[i];
            let centre = (g_in + g_out) * -1.0;
            let plus = g_out + rot * mu[i];

            let (mu_m, mu_c, mu_p) = match self.flow {
                FlowKind::SurfaceDiffusion => (-1.0 / li, 1.0 / li + 1.0 / lip, -1.0 / lip),
                _ => (0.0, self.mass[i], 0.0),
            };

            let fill = |blk: &mut [[f64; 3]; 3], eq1_x: Vec2, eq1_mu: f64, m: Mat2, w_mu: Vec2| {
                blk[0][0] += eq1_x.x;
                blk[0][1] += eq1_x.y;
                blk[0][2] += eq1_mu;
                blk[1][0] += m.m[0][0];
                blk[1][1] += m.m[0][1];
                blk[2][0] += m.m[1][0];
                blk[2][1] += m.m[1][1];
                blk[1][2] += w_mu.x;
                blk[2][2] += w_mu.y;
            };
            fill(jac.block_mut(i, 0), dw * -1.0, mu_m, minus, Vec2::ZERO);
            fill(jac.block_mut(i, 1), w[i] * (1.0 / self.tau), mu_c, centre, w[i]);
            fill(jac.block_mut(i, 2), dw, mu_p, plus, Vec2::ZERO);
        }
        if self.flow == FlowKind::AreaConservedCurvatureFlow {
            // -m_i λ = -(m_i / L) Σ_k m_k μ_k
            let mut uvec = vec![0.0; 3 * n];
            let mut vvec = vec![0.0; 3 * n];
            for i in 0..n {
                uvec[i] = -self.mass[i] / self.perimeter;
                vvec[2 * n + i] = self.mass[i];
            }
            jac.set_rank_one(uvec, vvec);
        }
        Ok(jac)
    }
}

pub fn assemble_residual(
    flow: FlowKind,
    old: &ClosedCurve,
    guess_nodes: &[Vec2],
    guess_mu: &[f64],
    a: &Anisotropy,
    ktable: &StabilizerTable,
    tau: f64,
) -> Result<Vec<f64>> {
    old.expect_len(guess_nodes.len())?;
    old.expect_len(guess_mu.len())?;
    ResidualSystem::new(flow, old, a, ktable, tau, true)?.residual(&pack_unknowns(guess_nodes, guess_mu))
}

pub fn assemble_jacobian(
    flow: FlowKind,
    old: &ClosedCurve,
    guess_nodes: &[Vec2],
    guess_mu: &[f64],
    a: &Anisotropy,
    ktable: &StabilizerTable,
    tau: f64,
) -> Result<BlockJacobian> {
    old.expect_len(guess_nodes.len())?;
    old.expect_len(guess_mu.len())?;
    ResidualSystem::new(flow, old, a, ktable, tau, true)?.jacobian(&pack_unknowns(guess_nodes, guess_mu))
}

/// Least-squares μ of `(μ n, ω)^h = (G_k(n) ∂_s X, ∂_s ω)^h` on a fixed curve.
/// The normal equations are diagonal, so this is a per-node projection.
pub fn compute_mu_diagnostic(curve: &ClosedCurve, a: &Anisotropy, ktable: &StabilizerTable) -> Result<Vec<f64>> {
    let frames = edge_frames(curve)?;
    let n = curve.len();
    let scale = curve.bbox_diagonal();
    (0..n)
        .map(|i| {
            let ip = (i + 1) % n;
            let (fi, fp) = (&frames[i], &frames[ip]);
            let gi = g_matrix(a, ktable.eval(fi.n), fi.n);
            let gp = g_matrix(a, ktable.eval(fp.n), fp.n);
            let w = Mat2::ROT.apply(fi.h + fp.h) * 0.5;
            let b = gi.apply(fi.h) * (1.0 / fi.len) - gp.apply(fp.h) * (1.0 / fp.len);
            let ww = w.norm_squared();
            if !(ww > 1e-28 * scale * scale) {
                return Err(Error::RankDeficient(i));
            }
            Ok(w.dot(b) / ww)
        })
        .collect()
}
