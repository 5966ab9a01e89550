//! Direct solver for the periodic block-tridiagonal Newton systems.
//!
//! Nodes are reordered `0, N-1, 1, N-2, ...` so that periodic neighbours are
//! at most two positions apart; with the three unknowns of a node kept
//! together the matrix becomes banded with 8 sub- and super-diagonals and is
//! factorized by banded LU with partial pivoting. A rank-one correction
//! (from eliminating the mean of μ) is handled by Sherman–Morrison.

use crate::error::{Error, Result};

/// Unknowns (and equations) per node.
pub const NODE_DOF: usize = 3;

/// Square band matrix. Entry `(i, j)` lives at `data[i * width + (j + kl - i)]`;
/// each row reserves `kl` extra super-diagonals for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            return 0.0;
        }
        self.data[self.index(i, j)]
    }

    /// Panics when `(i, j)` lies outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.index(i, j);
        self.data[k] += v;
    }

    pub fn factorize(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0; n];
        let mut lower = vec![0.0; n * kl];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.index(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.index(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::LinearSolveFailed(k));
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.index(k, j), self.index(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.index(k, k)];
            for i in k + 1..=last_row {
                let ik = self.index(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = 0.0;
                lower[k * kl + (i - k - 1)] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.index(k, j)];
                        let ij = self.index(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu {
            upper: self,
            lower,
            pivots,
        })
    }
}

/// LU factors of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    upper: BandMatrix,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let u = &self.upper;
        let (n, kl, ku) = (u.n, u.kl, u.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.lower[k * kl + (i - k - 1)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= u.data[u.index(k, j)] * b[j];
            }
            b[k] = s / u.data[u.index(k, k)];
        }
    }
}

/// A 3×3 block coupling the equations of one node to the unknowns of
/// another; rows `(eq1, eq2x, eq2y)`, columns `(x, y, μ)`.
pub type Block3 = [[f64; NODE_DOF]; NODE_DOF];

/// Jacobian with periodic nearest-neighbour block structure plus an
/// optional rank-one term `u vᵀ`.
///
/// Public (dense) layout: unknowns `[x_0..x_{N-1}, y_0..y_{N-1}, μ_0..μ_{N-1}]`,
/// rows `[eq1_0.., eq2x_0.., eq2y_0..]`; `u` and `v` use the same layouts.
#[derive(Debug, Clone)]
pub struct BlockJacobian {
    n: usize,
    /// `blocks[3 * i + d]` couples node `i` to node `i - 1 + d`.
    blocks: Vec<Block3>,
    rank_one: Option<(Vec<f64>, Vec<f64>)>,
}

impl BlockJacobian {
    pub fn zeros(n: usize) -> Self {
        BlockJacobian {
            n,
            blocks: vec![[[0.0; NODE_DOF]; NODE_DOF]; 3 * n],
            rank_one: None,
        }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Block for row node `i` and column node `i - 1 + d`, `d ∈ {0, 1, 2}`.
    pub fn block_mut(&mut self, i: usize, d: usize) -> &mut Block3 {
        &mut self.blocks[3 * i + d]
    }

    pub fn block(&self, i: usize, d: usize) -> &Block3 {
        &self.blocks[3 * i + d]
    }

    pub fn set_rank_one(&mut self, u: Vec<f64>, v: Vec<f64>) {
        assert_eq!(u.len(), NODE_DOF * self.n);
        assert_eq!(v.len(), NODE_DOF * self.n);
        self.rank_one = Some((u, v));
    }

    pub fn rank_one(&self) -> Option<(&[f64], &[f64])> {
        self.rank_one.as_ref().map(|(u, v)| (u.as_slice(), v.as_slice()))
    }

    fn neighbour(&self, i: usize, d: usize) -> usize {
        (i + self.n + d - 1) % self.n
    }

    /// Row-major dense copy in the public layout.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let dim = NODE_DOF * n;
        let mut m = vec![vec![0.0; dim]; dim];
        for i in 0..n {
            for d in 0..3 {
                let j = self.neighbour(i, d);
                let b = self.block(i, d);
                for (r, row) in b.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        m[r * n + i][c * n + j] += v;
                    }
                }
            }
        }
        if let Some((u, v)) = &self.rank_one {
            for (r, ur) in u.iter().enumerate() {
                if *ur != 0.0 {
                    for (c, vc) in v.iter().enumerate() {
                        m[r][c] += ur * vc;
                    }
                }
            }
        }
        m
    }

    /// `J x` in the public layout.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(x.len(), NODE_DOF * n);
        let mut y = vec![0.0; NODE_DOF * n];
        for i in 0..n {
            for d in 0..3 {
                let j = self.neighbour(i, d);
                let b = self.block(i, d);
                for r in 0..NODE_DOF {
                    y[r * n + i] += (0..NODE_DOF).map(|c| b[r][c] * x[c * n + j]).sum::<f64>();
                }
            }
        }
        if let Some((u, v)) = &self.rank_one {
            let s: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
            for (yi, ui) in y.iter_mut().zip(u) {
                *yi += ui * s;
            }
        }
        y
    }

    /// Solves `J x = b` (public layout).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let dim = NODE_DOF * n;
        if b.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        // zig-zag node order keeps periodic neighbours within two positions
        let mut position = vec![0; n];
        let (mut lo, mut hi) = (0, n - 1);
        for p in 0..n {
            if p % 2 == 0 {
                position[lo] = p;
                lo += 1;
            } else {
                position[hi] = p;
                hi = hi.wrapping_sub(1);
            }
        }
        let band = 3 * NODE_DOF - 1;
        let mut a = BandMatrix::zeros(dim, band, band);
        for i in 0..n {
            for d in 0..3 {
                let j = self.neighbour(i, d);
                let blk = self.block(i, d);
                for (r, row) in blk.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        if *v != 0.0 {
                            a.add(NODE_DOF * position[i] + r, NODE_DOF * position[j] + c, *v);
                        }
                    }
                }
            }
        }
        let to_band = |x: &[f64]| {
            let mut out = vec![0.0; dim];
            for i in 0..n {
                for r in 0..NODE_DOF {
                    out[NODE_DOF * position[i] + r] = x[r * n + i];
                }
            }
            out
        };
        let from_band = |x: &[f64]| {
            let mut out = vec![0.0; dim];
            for i in 0..n {
                for r in 0..NODE_DOF {
                    out[r * n + i] = x[NODE_DOF * position[i] + r];
                }
            }
            out
        };

        let lu = a.factorize()?;
        let mut y = to_band(b);
        lu.solve_in_place(&mut y);
        let y = from_band(&y);
        let Some((u, v)) = &self.rank_one else {
            return Ok(y);
        };
        let mut z = to_band(u);
        lu.solve_in_place(&mut z);
        let z = from_band(&z);
        let vy: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        let vz: f64 = v.iter().zip(&z).map(|(a, b)| a * b).sum();
        let denom = 1.0 + vz;
        if !(denom.abs() > 1e-14) {
            return Err(Error::LinearSolveFailed(dim));
        }
        let s = vy / denom;
        Ok(y.iter().zip(&z).map(|(yi, zi)| yi - s * zi).collect())
    }
}
