//! Bloch fibers `H(k) = 1/2 |k + G|^2 + V(G - G')` in a plane-wave basis,
//! their eigensolutions over Brillouin-zone grids, gap certification, and
//! the discrete Zak transform.
//!
//! With spin-orbit coupling the basis is doubled, index `2 g + s`, and the
//! fiber gains `1/4 sigma . (grad V x (p + k))`, assembled from the
//! convolution `grad V <-> i G V(G)`.

mod basis;
mod zak;

pub use basis::PlaneWaveBasis;
pub use zak::{bloch_function, zak_forward, zak_inverse, FiberData, RealSpaceBox};

use crate::lattice::KGrid;
use crate::linalg;
use crate::potential::FourierPotential;
use crate::{CMatrix, Error, Result, C64};
use rayon::prelude::*;

/// Gaps at or below this value count as closed.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct FiberMatrix {
    pub k: Vec<f64>,
    pub spin_orbit: bool,
    pub matrix: CMatrix,
}

/// Ascending eigenvalues with eigenvector columns.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

fn check_k(k: &[f64], dim: usize) -> Result<()> {
    if k.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "quasimomentum has {} components, lattice dimension is {dim}",
            k.len()
        )));
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(k.to_vec()));
    }
    Ok(())
}

fn pad3(v: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    out
}

fn cross(a: [C64; 3], b: [f64; 3]) -> [C64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `sigma . w` as a 2x2 block.
fn pauli_dot(w: [C64; 3]) -> [[C64; 2]; 2] {
    let i = C64::i();
    [[w[2], w[0] - i * w[1]], [w[0] + i * w[1], -w[2]]]
}

/// `i (G - G') V(G - G')` padded to three components.
fn grad_coeff(v: &FourierPotential, basis: &PlaneWaveBasis, a: usize, b: usize) -> (C64, [C64; 3]) {
    let diff: Vec<i32> = basis.indices()[a]
        .iter()
        .zip(&basis.indices()[b])
        .map(|(x, y)| x - y)
        .collect();
    let c = v.coeff(&diff);
    let g = pad3(&v.lattice().dual_point(&diff));
    let ic = c * C64::i();
    (c, [ic * g[0], ic * g[1], ic * g[2]])
}

pub fn build_fiber(
    v: &FourierPotential,
    k: &[f64],
    basis: &PlaneWaveBasis,
    spin_orbit: bool,
) -> Result<FiberMatrix> {
    let lat = basis.lattice();
    check_k(k, lat.dim())?;
    if v.lattice() != lat {
        return Err(Error::InvalidInput(
            "potential and basis are built on different lattices".into(),
        ));
    }
    if spin_orbit && !v.is_real() {
        return Err(Error::InvalidInput(
            "spin-orbit fibers need a potential declared real".into(),
        ));
    }
    let n = basis.len();
    let s = if spin_orbit { 2 } else { 1 };
    let mut h = CMatrix::zeros(s * n, s * n);
    for a in 0..n {
        for b in 0..n {
            let (c, gv) = grad_coeff(v, basis, a, b);
            let mut diag = c;
            if a == b {
                let q2: f64 = basis.vectors()[a]
                    .iter()
                    .zip(k)
                    .map(|(g, kk)| (g + kk) * (g + kk))
                    .sum();
                diag += C64::new(0.5 * q2, 0.0);
            }
            for sp in 0..s {
                h[(s * a + sp, s * b + sp)] = diag;
            }
            if spin_orbit {
                let kg: Vec<f64> = basis.vectors()[b].iter().zip(k).map(|(g, kk)| g + kk).collect();
                let w = cross(gv, pad3(&kg));
                let blk = pauli_dot(w);
                for i in 0..2 {
                    for j in 0..2 {
                        h[(2 * a + i, 2 * b + j)] += blk[i][j] * 0.25;
                    }
                }
            }
        }
    }
    Ok(FiberMatrix {
        k: k.to_vec(),
        spin_orbit,
        matrix: h,
    })
}

/// `dH/dk_j` at any `k` (the fiber is quadratic in `k`).
pub fn velocity_matrix(
    v: &FourierPotential,
    k: &[f64],
    basis: &PlaneWaveBasis,
    spin_orbit: bool,
    j: usize,
) -> CMatrix {
    let n = basis.len();
    let s = if spin_orbit { 2 } else { 1 };
    let mut m = CMatrix::zeros(s * n, s * n);
    for a in 0..n {
        let val = C64::new(basis.vectors()[a][j] + k[j], 0.0);
        for sp in 0..s {
            m[(s * a + sp, s * a + sp)] = val;
        }
    }
    if spin_orbit {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        for a in 0..n {
            for b in 0..n {
                let (_, gv) = grad_coeff(v, basis, a, b);
                let blk = pauli_dot(cross(gv, e));
                for i in 0..2 {
                    for jj in 0..2 {
                        m[(2 * a + i, 2 * b + jj)] += blk[i][jj] * 0.25;
                    }
                }
            }
        }
    }
    m
}

pub fn solve_fiber(f: &FiberMatrix, n_bands: usize) -> Result<Eigenpairs> {
    let size = f.matrix.nrows();
    if n_bands > size {
        return Err(Error::InvalidInput(format!(
            "requested {n_bands} bands from a fiber of size {size}"
        )));
    }
    if linalg::hermiticity_defect(&f.matrix) > 1e-13 {
        return Err(Error::Eigensolver {
            k: f.k.clone(),
            size,
        });
    }
    let (values, vectors) = linalg::eigh(&f.matrix).ok_or_else(|| Error::Eigensolver {
        k: f.k.clone(),
        size,
    })?;
    let scale = f.matrix.norm().max(1.0);
    for j in 0..n_bands {
        let col = vectors.column(j);
        let r = (&f.matrix * col - col * C64::new(values[j], 0.0)).norm();
        if r > 1e-10 * scale {
            return Err(Error::Eigensolver {
                k: f.k.clone(),
                size,
            });
        }
    }
    Ok(Eigenpairs {
        values: values[..n_bands].to_vec(),
        vectors: vectors.columns(0, n_bands).into_owned(),
    })
}

/// Eigensolutions on every point of a k-grid.
#[derive(Clone, Debug)]
pub struct BandData {
    grid: KGrid,
    basis: PlaneWaveBasis,
    potential: FourierPotential,
    spin_orbit: bool,
    n_bands: usize,
    energies: Vec<Vec<f64>>,
    vectors: Vec<CMatrix>,
}

pub fn band_structure(
    v: &FourierPotential,
    grid: &KGrid,
    basis: &PlaneWaveBasis,
    n_bands: usize,
    spin_orbit: bool,
) -> Result<BandData> {
    if grid.lattice() != basis.lattice() {
        return Err(Error::InvalidInput("grid and basis lattices differ".into()));
    }
    let solved: Vec<Eigenpairs> = grid
        .points()
        .par_iter()
        .map(|k| {
            let f = build_fiber(v, k, basis, spin_orbit)?;
            solve_fiber(&f, n_bands)
        })
        .collect::<Result<_>>()?;
    let (energies, vectors) = solved.into_iter().map(|e| (e.values, e.vectors)).unzip();
    Ok(BandData {
        grid: grid.clone(),
        basis: basis.clone(),
        potential: v.clone(),
        spin_orbit,
        n_bands,
        energies,
        vectors,
    })
}

impl BandData {
    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn potential(&self) -> &FourierPotential {
        &self.potential
    }

    pub fn spin_orbit(&self) -> bool {
        self.spin_orbit
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    /// Ascending energies at grid point `i`.
    pub fn energies(&self, i: usize) -> &[f64] {
        &self.energies[i]
    }

    /// Eigenvector columns at grid point `i`.
    pub fn vectors(&self, i: usize) -> &CMatrix {
        &self.vectors[i]
    }

    pub fn band(&self, n: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[n]).collect()
    }

    /// Vectors at grid point `i` re-expressed at `k + sum_j shift_j gamma*_j`.
    pub fn relabeled(&self, i: usize, shift: &[i32]) -> CMatrix {
        let table = self.basis.shift_table(shift);
        self.basis.relabel(&self.vectors[i], &table, self.spin_orbit)
    }
}

/// Minimal separation of a band window from the rest of the spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub window: (usize, usize),
    pub gap: f64,
    pub k_index: usize,
    pub k: Vec<f64>,
}

impl GapReport {
    pub fn is_isolated(&self) -> bool {
        self.gap > GAP_TOL
    }
}

/// Gap of the window `[lo, hi]`: minimum over the grid of the distance to
/// bands `lo - 1` and `hi + 1`.
pub fn check_gap(bd: &BandData, lo: usize, hi: usize) -> Result<GapReport> {
    if lo > hi || hi + 1 >= bd.n_bands {
        return Err(Error::WindowOutOfRange {
            lo,
            hi,
            computed: bd.n_bands,
        });
    }
    let mut best = (f64::INFINITY, 0);
    for (i, e) in bd.energies.iter().enumerate() {
        let mut g = e[hi + 1] - e[hi];
        if lo > 0 {
            g = g.min(e[lo] - e[lo - 1]);
        }
        if g < best.0 {
            best = (g, i);
        }
    }
    Ok(GapReport {
        window: (lo, hi),
        gap: best.0,
        k_index: best.1,
        k: bd.grid.point(best.1).to_vec(),
    })
}
