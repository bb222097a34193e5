use super::PlaneWaveBasis;
use crate::fft::AxisFfts;
use crate::lattice::{flatten, unflatten, KGrid, Lattice};
use rayon::prelude::*;
use std::f64::consts::PI;
use crate::{Error, Result, C64};

/// Periodic box of `cells_j` unit cells per direction, sampled with
/// `per_cell_j` points per cell. Positions are centered on the origin:
/// `x = sum_j (i_j / per_cell_j - cells_j / 2) gamma_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSpaceBox {
    lattice: Lattice,
    cells: Vec<usize>,
    per_cell: Vec<usize>,
}

impl RealSpaceBox {
    pub fn new(lat: &Lattice, cells: &[usize], per_cell: &[usize]) -> Result<Self> {
        let d = lat.dim();
        if cells.len() != d || per_cell.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "box needs {d} cell counts and {d} per-cell resolutions"
            )));
        }
        if cells.iter().chain(per_cell).any(|&n| n == 0) {
            return Err(Error::InvalidInput("box sizes must be positive".into()));
        }
        Ok(RealSpaceBox {
            lattice: lat.clone(),
            cells: cells.to_vec(),
            per_cell: per_cell.to_vec(),
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn per_cell(&self) -> &[usize] {
        &self.per_cell
    }

    /// Grid points per direction.
    pub fn shape(&self) -> Vec<usize> {
        self.cells.iter().zip(&self.per_cell).map(|(c, p)| c * p).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn points_per_cell(&self) -> usize {
        self.per_cell.iter().product()
    }

    /// Fractional coordinates of grid point `i`.
    pub fn fractional(&self, i: usize) -> Vec<f64> {
        unflatten(i, &self.shape())
            .iter()
            .zip(self.cells.iter().zip(&self.per_cell))
            .map(|(&m, (&c, &p))| m as f64 / p as f64 - c as f64 / 2.0)
            .collect()
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.lattice.lattice_point(&self.fractional(i))
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Positions of the sample points inside one cell, `y = sum_j (i_j/p_j) gamma_j`.
    pub fn cell_positions(&self) -> Vec<Vec<f64>> {
        (0..self.points_per_cell())
            .map(|i| {
                let frac: Vec<f64> = unflatten(i, &self.per_cell)
                    .iter()
                    .zip(&self.per_cell)
                    .map(|(&m, &p)| m as f64 / p as f64)
                    .collect();
                self.lattice.lattice_point(&frac)
            })
            .collect()
    }

    /// Box index of intra-cell point `y` in cell `c` (cells counted from the box corner).
    fn box_index(&self, c: &[usize], y: &[usize]) -> usize {
        let m: Vec<usize> = c
            .iter()
            .zip(y)
            .zip(&self.per_cell)
            .map(|((&cj, &yj), &p)| cj * p + yj)
            .collect();
        flatten(&m, &self.shape())
    }

    fn commensurate(&self, grid: &KGrid) -> Result<()> {
        if *grid.lattice() != self.lattice {
            return Err(Error::Incommensurate("box and grid lattices differ".into()));
        }
        if grid.sizes() != self.cells.as_slice() {
            return Err(Error::Incommensurate(format!(
                "k-grid sizes {:?} must equal box cell counts {:?}",
                grid.sizes(),
                self.cells
            )));
        }
        if self.cells.iter().any(|c| c % 2 != 0) {
            return Err(Error::Incommensurate(
                "cell counts must be even so grid momenta are periodic on the box".into(),
            ));
        }
        Ok(())
    }
}

/// Fiber functions `phi(k, y)` on the intra-cell sample points, one vector
/// per grid point.
#[derive(Clone, Debug)]
pub struct FiberData {
    pub values: Vec<Vec<C64>>,
}

/// Phase `2 pi sum_j (m_j tau_j / N_j - m_j / 2 - tau_j / 2 + N_j / 4)` that,
/// together with the `exp(-i pi sum_j c_j)` cell factor and a plain DFT over
/// cells, makes up `k(m).x` on the box.
fn twiddle(m: &[usize], tau: &[f64], cells: &[usize]) -> f64 {
    2.0 * PI
        * m.iter()
            .zip(tau)
            .zip(cells)
            .map(|((&mj, &t), &n)| mj as f64 * t / n as f64 - mj as f64 / 2.0 - t / 2.0 + n as f64 / 4.0)
            .sum::<f64>()
}

fn cell_sign(c: &[usize]) -> f64 {
    if c.iter().sum::<usize>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `phi(k, y) = L^{-1/2} sum_gamma exp(-i k.(y + gamma)) psi(y + gamma)`.
pub fn zak_forward(psi: &[C64], bx: &RealSpaceBox, grid: &KGrid) -> Result<FiberData> {
    bx.commensurate(grid)?;
    if psi.len() != bx.len() {
        return Err(Error::ShapeMismatch(format!(
            "wavefunction has {} samples, box has {}",
            psi.len(),
            bx.len()
        )));
    }
    let cells = bx.cells();
    let ncell = bx.cell_count();
    let npc = bx.points_per_cell();
    let norm = 1.0 / (ncell as f64).sqrt();
    let ffts = AxisFfts::new(cells);
    let cs: Vec<Vec<usize>> = (0..ncell).map(|c| unflatten(c, cells)).collect();
    let columns: Vec<Vec<C64>> = (0..npc)
        .into_par_iter()
        .map(|yi| {
            let y = unflatten(yi, bx.per_cell());
            let tau: Vec<f64> = y.iter().zip(bx.per_cell()).map(|(&a, &p)| a as f64 / p as f64).collect();
            let mut g: Vec<C64> = cs.iter().map(|c| psi[bx.box_index(c, &y)] * cell_sign(c)).collect();
            ffts.all(&mut g, false);
            for (z, m) in g.iter_mut().zip(&cs) {
                *z *= C64::from_polar(norm, -twiddle(m, &tau, cells));
            }
            g
        })
        .collect();
    let values = (0..ncell)
        .map(|m| columns.iter().map(|col| col[m]).collect())
        .collect();
    Ok(FiberData { values })
}

/// `psi(y + gamma) = L^{-1/2} sum_k exp(i k.(y + gamma)) phi(k, y)`.
pub fn zak_inverse(data: &FiberData, bx: &RealSpaceBox, grid: &KGrid) -> Result<Vec<C64>> {
    bx.commensurate(grid)?;
    let npc = bx.points_per_cell();
    if data.values.len() != grid.len() || data.values.iter().any(|v| v.len() != npc) {
        return Err(Error::ShapeMismatch(
            "fiber data must hold one vector of intra-cell samples per grid point".into(),
        ));
    }
    let cells = bx.cells();
    let ncell = bx.cell_count();
    // the inverse transform carries 1/ncell
    let scale = ncell as f64 / (ncell as f64).sqrt();
    let ffts = AxisFfts::new(cells);
    let cs: Vec<Vec<usize>> = (0..ncell).map(|c| unflatten(c, cells)).collect();
    let columns: Vec<Vec<C64>> = (0..npc)
        .into_par_iter()
        .map(|yi| {
            let y = unflatten(yi, bx.per_cell());
            let tau: Vec<f64> = y.iter().zip(bx.per_cell()).map(|(&a, &p)| a as f64 / p as f64).collect();
            let mut g: Vec<C64> = cs
                .iter()
                .enumerate()
                .map(|(m, mv)| data.values[m][yi] * C64::from_polar(1.0, twiddle(mv, &tau, cells)))
                .collect();
            ffts.all(&mut g, true);
            for (z, c) in g.iter_mut().zip(&cs) {
                *z *= scale * cell_sign(c);
            }
            g
        })
        .collect();
    let mut psi = vec![C64::default(); bx.len()];
    for (yi, col) in columns.iter().enumerate() {
        let y = unflatten(yi, bx.per_cell());
        for (c, z) in cs.iter().zip(col) {
            psi[bx.box_index(c, &y)] = *z;
        }
    }
    Ok(psi)
}

/// Periodic part `u(y) = M^{-1/2} sum_G c_G exp(i G.y)` of a scalar Bloch
/// state on the intra-cell points, normalized as a vector when every `G`
/// is resolved by the cell sampling.
pub fn bloch_function(basis: &PlaneWaveBasis, coeffs: &[C64], bx: &RealSpaceBox) -> Vec<C64> {
    let ys = bx.cell_positions();
    let norm = 1.0 / (ys.len() as f64).sqrt();
    ys.iter()
        .map(|y| {
            let mut acc = C64::default();
            for (g, c) in basis.vectors().iter().zip(coeffs) {
                let ph: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                acc += c * C64::from_polar(norm, ph);
            }
            acc
        })
        .collect()
}
