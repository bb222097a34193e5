//! Bravais lattices, their duals and Brillouin-zone grids.
//!
//! Fractional coordinates of a quasimomentum are `beta_j = gamma_j . k / 2pi`,
//! so `k = sum_j beta_j gamma*_j`. The fundamental domain of the dual lattice
//! is the half-open box `beta_j in [-1/2, 1/2)`.

use crate::{Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    dim: usize,
    basis: Vec<Vec<f64>>,
    dual: Vec<Vec<f64>>,
    cell_volume: f64,
}

/// Builds a lattice from `d` basis vectors of length `d`.
pub fn make_lattice(basis: &[Vec<f64>]) -> Result<Lattice> {
    Lattice::new(basis)
}

impl Lattice {
    pub fn new(basis: &[Vec<f64>]) -> Result<Self> {
        let d = basis.len();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidInput(format!(
                "lattice dimension must be 1, 2 or 3 (got {d})"
            )));
        }
        if basis.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidInput(
                "every basis vector needs one component per dimension".into(),
            ));
        }
        if basis.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("basis vectors must be finite".into()));
        }
        // columns are the basis vectors
        let b = DMatrix::from_fn(d, d, |i, j| basis[j][i]);
        let det = b.determinant();
        let scale: f64 = basis
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .product();
        if !(det.abs() > 1e-12 * scale) {
            return Err(Error::DegenerateLattice { det });
        }
        let inv_t = b
            .try_inverse()
            .ok_or(Error::DegenerateLattice { det })?
            .transpose();
        let dual = (0..d)
            .map(|j| (0..d).map(|i| 2.0 * PI * inv_t[(i, j)]).collect())
            .collect();
        Ok(Lattice {
            dim: d,
            basis: basis.to_vec(),
            dual,
            cell_volume: det.abs(),
        })
    }

    /// Cubic (or square, or 1D) lattice with spacing `a`.
    pub fn cubic(dim: usize, a: f64) -> Result<Self> {
        let basis: Vec<Vec<f64>> = (0..dim)
            .map(|j| (0..dim).map(|i| if i == j { a } else { 0.0 }).collect())
            .collect();
        Lattice::new(&basis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn dual_basis(&self) -> &[Vec<f64>] {
        &self.dual
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Volume of the Brillouin zone, `(2pi)^d / |M|`.
    pub fn bz_volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32) / self.cell_volume
    }

    /// Largest deviation of `gamma*_i . gamma_j` from `2pi delta_ij`, relative to 2pi.
    pub fn pairing_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let dot: f64 = (0..self.dim).map(|c| self.dual[i][c] * self.basis[j][c]).sum();
                let target = if i == j { 2.0 * PI } else { 0.0 };
                worst = worst.max((dot - target).abs() / (2.0 * PI));
            }
        }
        worst
    }

    /// `sum_j n_j gamma*_j`.
    pub fn dual_point(&self, n: &[i32]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (j, &nj) in n.iter().enumerate() {
            for c in 0..self.dim {
                g[c] += nj as f64 * self.dual[j][c];
            }
        }
        g
    }

    /// `sum_j x_j gamma_j`.
    pub fn lattice_point(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.dim];
        for (j, &xj) in x.iter().enumerate() {
            for c in 0..self.dim {
                r[c] += xj * self.basis[j][c];
            }
        }
        r
    }

    /// Fractional coordinates of a quasimomentum.
    pub fn fractional_k(&self, k: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|c| self.basis[j][c] * k[c]).sum::<f64>() / (2.0 * PI))
            .collect()
    }

    /// Quasimomentum from fractional coordinates.
    pub fn from_fractional_k(&self, beta: &[f64]) -> Vec<f64> {
        let mut k = vec![0.0; self.dim];
        for (j, &bj) in beta.iter().enumerate() {
            for c in 0..self.dim {
                k[c] += bj * self.dual[j][c];
            }
        }
        k
    }

    /// Fractional coordinates of a position, `x = sum_j xi_j gamma_j`.
    pub fn fractional_x(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|c| self.dual[j][c] * x[c]).sum::<f64>() / (2.0 * PI))
            .collect()
    }

    pub fn reduce_to_bz(&self, k: &[f64]) -> Vec<f64> {
        let beta: Vec<f64> = self.fractional_k(k).into_iter().map(reduce_unit).collect();
        self.from_fractional_k(&beta)
    }

    /// `true` when the basis vectors are parallel to the coordinate axes.
    pub fn is_rectangular(&self) -> bool {
        (0..self.dim).all(|j| {
            (0..self.dim).all(|c| c == j || self.basis[j][c].abs() <= 1e-14 * self.basis[j][j].abs())
        })
    }
}

/// Maps a real number into `[-1/2, 1/2)` modulo integers.
pub(crate) fn reduce_unit(b: f64) -> f64 {
    let mut r = b - (b + 0.5).floor();
    if r >= 0.5 {
        r -= 1.0;
    } else if r < -0.5 {
        r += 1.0;
    }
    r
}

pub fn reduce_to_bz(lat: &Lattice, k: &[f64]) -> Vec<f64> {
    lat.reduce_to_bz(k)
}

/// Uniform grid `k(m) = sum_j (m_j/N_j - 1/2) gamma*_j` over the Brillouin zone.
///
/// Points are stored row-major in the multi-index (last index fastest).
/// The grid contains the Gamma point exactly when every `N_j` is even, and is
/// then closed under `k -> -k` modulo the dual lattice.
#[derive(Clone, Debug)]
pub struct KGrid {
    lattice: Lattice,
    sizes: Vec<usize>,
    points: Vec<Vec<f64>>,
}

pub fn bz_grid(lat: &Lattice, sizes: &[usize]) -> Result<KGrid> {
    KGrid::new(lat, sizes)
}

impl KGrid {
    pub fn new(lat: &Lattice, sizes: &[usize]) -> Result<Self> {
        if sizes.len() != lat.dim() {
            return Err(Error::InvalidInput(format!(
                "grid needs {} sizes, got {}",
                lat.dim(),
                sizes.len()
            )));
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput("grid sizes must be at least 1".into()));
        }
        let total: usize = sizes.iter().product();
        let mut points = Vec::with_capacity(total);
        for idx in 0..total {
            let m = unflatten(idx, sizes);
            let beta: Vec<f64> = m
                .iter()
                .zip(sizes)
                .map(|(&mj, &nj)| mj as f64 / nj as f64 - 0.5)
                .collect();
            points.push(lat.from_fractional_k(&beta));
        }
        Ok(KGrid {
            lattice: lat.clone(),
            sizes: sizes.to_vec(),
            points,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn index(&self, m: &[usize]) -> usize {
        flatten(m, &self.sizes)
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        unflatten(i, &self.sizes)
    }

    /// Step vector `gamma*_j / N_j` along grid direction `j`.
    pub fn step(&self, j: usize) -> Vec<f64> {
        let n = self.sizes[j] as f64;
        self.lattice.dual_basis()[j].iter().map(|x| x / n).collect()
    }

    /// Index of the grid point `-k` (mod the dual lattice), if the grid has one.
    pub fn negated(&self, i: usize) -> Option<usize> {
        let m = self.multi_index(i);
        let mut out = Vec::with_capacity(m.len());
        for (&mj, &nj) in m.iter().zip(&self.sizes) {
            if nj % 2 != 0 {
                return None;
            }
            out.push((nj - mj) % nj);
        }
        Some(self.index(&out))
    }
}

/// Row-major flattening, last index fastest.
pub(crate) fn flatten(m: &[usize], sizes: &[usize]) -> usize {
    m.iter().zip(sizes).fold(0, |acc, (&mj, &nj)| acc * nj + mj)
}

pub(crate) fn unflatten(mut idx: usize, sizes: &[usize]) -> Vec<usize> {
    let mut m = vec![0; sizes.len()];
    for j in (0..sizes.len()).rev() {
        m[j] = idx % sizes[j];
        idx /= sizes[j];
    }
    m
}

/// Neighbor of node `i` along direction `dir` (forward if `forward`), with
/// the number of times the boundary was crossed (+1, -1 or 0).
pub(crate) fn neighbor(i: usize, sizes: &[usize], dir: usize, forward: bool) -> (usize, i32) {
    let mut m = unflatten(i, sizes);
    let n = sizes[dir];
    let wrap;
    if forward {
        if m[dir] + 1 == n {
            m[dir] = 0;
            wrap = 1;
        } else {
            m[dir] += 1;
            wrap = 0;
        }
    } else if m[dir] == 0 {
        m[dir] = n - 1;
        wrap = -1;
    } else {
        m[dir] -= 1;
        wrap = 0;
    }
    (flatten(&m, sizes), wrap)
}
