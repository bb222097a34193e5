//! Adiabatic charge transport for slowly deformed periodic potentials.
//!
//! The occupied projector `P(k, t)` of a [`PumpPath`] gives the field
//! `Theta = -i tr(P [d_t P, grad_k P])`, whose space-time integral is the
//! polarization change `dP = -(2pi)^{-d} int dt int dk Theta`. Cyclic
//! one-dimensional pumps are cross-checked against the Chern number of the
//! projector over the (k, t) torus and against direct evolution of every
//! occupied fiber state, `i eps du/dt = H(k, t) u`.

use crate::fiber::{build_fiber, velocity_matrix, PlaneWaveBasis, GAP_TOL};
use crate::geometry::{berry_curvature, chern_number, BlochFrame, Wrap};
use crate::lattice::{neighbor, KGrid};
use crate::linalg;
use crate::potential::PumpPath;
use crate::{CMatrix, Error, Result, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

/// How `d_t P` and `grad_k P` are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaMethod {
    /// First-order perturbation theory in the full truncated eigenbasis,
    /// `dP_mn = <m| dH |n> / (E_n - E_m)` between unoccupied `m` and occupied `n`.
    Perturbative,
    /// Centered differences of neighboring projectors on the grid.
    FiniteDifference,
}

/// Fiber eigensolutions of a pump path on a (k, t) grid.
#[derive(Clone, Debug)]
pub struct ProjectorField {
    path: PumpPath,
    grid: KGrid,
    basis: PlaneWaveBasis,
    times: Vec<f64>,
    energies: Vec<Vec<f64>>,
    vectors: Vec<CMatrix>,
    fermi_gap: Vec<f64>,
}

/// Eigensolutions at `n_times` time nodes per k-point: `t_j = j T / n_times`
/// for cyclic paths, `j = 0..=n_times` otherwise. Nodes are indexed
/// `k_index * n_t + t_index`.
pub fn snapshot_projectors(
    path: &PumpPath,
    grid: &KGrid,
    basis: &PlaneWaveBasis,
    n_times: usize,
) -> Result<ProjectorField> {
    if n_times == 0 {
        return Err(Error::InvalidInput("at least one time node is required".into()));
    }
    if grid.lattice() != path.lattice() || basis.lattice() != path.lattice() {
        return Err(Error::InvalidInput("path, grid and basis lattices differ".into()));
    }
    let occ = path.occupied();
    if occ >= basis.len() {
        return Err(Error::InvalidInput(format!(
            "{occ} occupied bands need a basis larger than {}",
            basis.len()
        )));
    }
    let period = path.period();
    let times: Vec<f64> = if path.is_cyclic() {
        (0..n_times).map(|j| period * j as f64 / n_times as f64).collect()
    } else {
        (0..=n_times).map(|j| period * j as f64 / n_times as f64).collect()
    };
    let potentials = times
        .iter()
        .map(|&t| path.potential_at_time(t))
        .collect::<Result<Vec<_>>>()?;
    let nt = times.len();
    let solved: Vec<(Vec<f64>, CMatrix)> = (0..grid.len() * nt)
        .into_par_iter()
        .map(|node| {
            let (ik, it) = (node / nt, node % nt);
            let k = grid.point(ik);
            let f = build_fiber(&potentials[it], k, basis, false)?;
            let (e, v) = linalg::eigh(&f.matrix).ok_or_else(|| Error::Eigensolver {
                k: k.to_vec(),
                size: basis.len(),
            })?;
            let gap = e[occ] - e[occ - 1];
            if gap <= GAP_TOL {
                return Err(Error::GapClosure {
                    k: k.to_vec(),
                    t: times[it],
                    gap,
                });
            }
            Ok((e, v))
        })
        .collect::<Result<_>>()?;
    let fermi_gap = (0..nt)
        .map(|it| {
            (0..grid.len())
                .map(|ik| {
                    let e = &solved[ik * nt + it].0;
                    e[occ] - e[occ - 1]
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (energies, vectors) = solved.into_iter().unzip();
    Ok(ProjectorField {
        path: path.clone(),
        grid: grid.clone(),
        basis: basis.clone(),
        times,
        energies,
        vectors,
        fermi_gap,
    })
}

impl ProjectorField {
    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn path(&self) -> &PumpPath {
        &self.path
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node(&self, k_index: usize, t_index: usize) -> usize {
        k_index * self.times.len() + t_index
    }

    pub fn energies(&self, node: usize) -> &[f64] {
        &self.energies[node]
    }

    /// All eigenvectors at a node (occupied ones first).
    pub fn vectors(&self, node: usize) -> &CMatrix {
        &self.vectors[node]
    }

    pub fn occupied_vectors(&self, node: usize) -> CMatrix {
        self.vectors[node].columns(0, self.path.occupied()).into_owned()
    }

    pub fn projector(&self, node: usize) -> CMatrix {
        let v = self.occupied_vectors(node);
        &v * v.adjoint()
    }

    /// Smallest gap above the occupied bands at each time node.
    pub fn fermi_gap(&self) -> &[f64] {
        &self.fermi_gap
    }

    /// Projector at a k-neighbor of `ik`, relabeled when the neighbor sits across the zone boundary.
    fn projector_near(&self, ik: usize, it: usize, dir: usize, forward: bool) -> CMatrix {
        let sizes = self.grid.sizes();
        let (jk, wrap) = neighbor(ik, sizes, dir, forward);
        let v = self.occupied_vectors(self.node(jk, it));
        let v = if wrap != 0 {
            let mut shift = vec![0; sizes.len()];
            shift[dir] = wrap;
            self.basis.relabel(&v, &self.basis.shift_table(&shift), false)
        } else {
            v
        };
        &v * v.adjoint()
    }
}

/// Theta at every (k, t) node, Cartesian components.
#[derive(Clone, Debug)]
pub struct ThetaField {
    pub k_sizes: Vec<usize>,
    pub times: Vec<f64>,
    pub period: f64,
    pub cyclic: bool,
    pub bz_volume: f64,
    pub cell_volume: f64,
    pub dual_basis: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

fn theta_from_derivatives(p: &CMatrix, dt: &CMatrix, dk: &CMatrix) -> f64 {
    let comm = dt * dk - dk * dt;
    let tr: C64 = (p * comm).trace();
    (C64::new(0.0, -1.0) * tr).re
}

pub fn theta_field(pf: &ProjectorField, method: ThetaMethod) -> Result<ThetaField> {
    let nt = pf.times.len();
    let lat = pf.grid.lattice();
    let d = lat.dim();
    let occ = pf.path.occupied();
    let theta: Vec<Vec<f64>> = match method {
        ThetaMethod::Perturbative => (0..pf.grid.len() * nt)
            .into_par_iter()
            .map(|node| {
                let (ik, it) = (node / nt, node % nt);
                let k = pf.grid.point(ik);
                let e = &pf.energies[node];
                let u = &pf.vectors[node];
                let dv = pf.path.derivative_at_time(pf.times[it])?;
                // dH/dt is the potential part only
                let mut dh = build_fiber(&dv, k, &pf.basis, false)?.matrix;
                for (a, g) in pf.basis.vectors().iter().enumerate() {
                    let q2: f64 = g.iter().zip(k).map(|(x, y)| (x + y) * (x + y)).sum();
                    dh[(a, a)] -= C64::new(0.5 * q2, 0.0);
                }
                let tm = u.adjoint() * dh * u;
                let mut out = vec![0.0; d];
                for (j, o) in out.iter_mut().enumerate() {
                    let vm = u.adjoint() * velocity_matrix(&pf.path.snapshots()[0], k, &pf.basis, false, j) * u;
                    let mut acc = 0.0;
                    for n in 0..occ {
                        for m in occ..e.len() {
                            let de = e[n] - e[m];
                            acc += 2.0 * (tm[(m, n)].conj() * vm[(m, n)]).im / (de * de);
                        }
                    }
                    *o = acc;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?,
        ThetaMethod::FiniteDifference => {
            let period = pf.path.period();
            let ht = period / if pf.path.is_cyclic() { nt as f64 } else { (nt - 1) as f64 };
            (0..pf.grid.len() * nt)
                .into_par_iter()
                .map(|node| {
                    let (ik, it) = (node / nt, node % nt);
                    let p = pf.projector(node);
                    let check = |a: &CMatrix, b: &CMatrix| -> Result<()> {
                        let dist = linalg::hermitian_norm(&(a - b));
                        if dist >= 1.0 {
                            return Err(Error::GridTooCoarse {
                                node,
                                overlap: 1.0 - dist,
                            });
                        }
                        Ok(())
                    };
                    let dtp = if pf.path.is_cyclic() {
                        let pp = pf.projector(pf.node(ik, (it + 1) % nt));
                        let pm = pf.projector(pf.node(ik, (it + nt - 1) % nt));
                        check(&p, &pp)?;
                        check(&p, &pm)?;
                        (pp - pm) / C64::new(2.0 * ht, 0.0)
                    } else if it == 0 {
                        let p1 = pf.projector(pf.node(ik, 1));
                        let p2 = pf.projector(pf.node(ik, 2.min(nt - 1)));
                        check(&p, &p1)?;
                        (p1 * C64::new(4.0, 0.0) - &p * C64::new(3.0, 0.0) - p2) / C64::new(2.0 * ht, 0.0)
                    } else if it == nt - 1 {
                        let p1 = pf.projector(pf.node(ik, nt - 2));
                        let p2 = pf.projector(pf.node(ik, nt.saturating_sub(3)));
                        check(&p, &p1)?;
                        (&p * C64::new(3.0, 0.0) - p1 * C64::new(4.0, 0.0) + p2) / C64::new(2.0 * ht, 0.0)
                    } else {
                        let pp = pf.projector(pf.node(ik, it + 1));
                        let pm = pf.projector(pf.node(ik, it - 1));
                        check(&p, &pp)?;
                        check(&p, &pm)?;
                        (pp - pm) / C64::new(2.0 * ht, 0.0)
                    };
                    // derivatives along fractional coordinates, then Cartesian
                    let mut frac = vec![0.0; d];
                    for (j, f) in frac.iter_mut().enumerate() {
                        let pp = pf.projector_near(ik, it, j, true);
                        let pm = pf.projector_near(ik, it, j, false);
                        check(&p, &pp)?;
                        check(&p, &pm)?;
                        let n = pf.grid.sizes()[j] as f64;
                        let dk = (pp - pm) * C64::new(n / 2.0, 0.0);
                        *f = theta_from_derivatives(&p, &dtp, &dk);
                    }
                    Ok((0..d)
                        .map(|c| {
                            (0..d)
                                .map(|j| lat.basis()[j][c] / (2.0 * PI) * frac[j])
                                .sum()
                        })
                        .collect())
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(ThetaField {
        k_sizes: pf.grid.sizes().to_vec(),
        times: pf.times.clone(),
        period: pf.path.period(),
        cyclic: pf.path.is_cyclic(),
        bz_volume: lat.bz_volume(),
        cell_volume: lat.cell_volume(),
        dual_basis: lat.dual_basis().to_vec(),
        theta,
    })
}

/// Polarization change in raw units and in pump quanta along each lattice direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Polarization {
    pub raw: Vec<f64>,
    pub quanta: Vec<f64>,
}

impl ThetaField {
    fn time_weights(&self) -> Vec<f64> {
        let nt = self.times.len();
        if self.cyclic {
            vec![self.period / nt as f64; nt]
        } else {
            let h = self.period / (nt - 1) as f64;
            (0..nt)
                .map(|j| if j == 0 || j == nt - 1 { h / 2.0 } else { h })
                .collect()
        }
    }

    fn quanta(&self, raw: &[f64]) -> Vec<f64> {
        self.dual_basis
            .iter()
            .map(|g| g.iter().zip(raw).map(|(a, b)| a * b).sum::<f64>() * self.cell_volume / (2.0 * PI))
            .collect()
    }

    /// Current `-(2pi)^{-d} int dk Theta(k, t)` at each time node.
    pub fn ksv_current(&self) -> Vec<Vec<f64>> {
        let nt = self.times.len();
        let nk: usize = self.k_sizes.iter().product();
        let d = self.k_sizes.len();
        let w = -self.bz_volume / nk as f64 / (2.0 * PI).powi(d as i32);
        (0..nt)
            .map(|it| {
                let mut j = vec![0.0; d];
                for ik in 0..nk {
                    for (c, x) in self.theta[ik * nt + it].iter().enumerate() {
                        j[c] += w * x;
                    }
                }
                j
            })
            .collect()
    }
}

pub fn ksv_polarization(tf: &ThetaField) -> Polarization {
    let wt = tf.time_weights();
    let current = tf.ksv_current();
    let d = tf.k_sizes.len();
    let mut raw = vec![0.0; d];
    for (j, w) in current.iter().zip(&wt) {
        for c in 0..d {
            raw[c] += j[c] * w;
        }
    }
    let quanta = tf.quanta(&raw);
    Polarization { raw, quanta }
}

/// Occupied eigenvectors as a frame over the (k, t) grid, k first.
fn occupied_frame(pf: &ProjectorField) -> Result<BlochFrame> {
    let nt = pf.times.len();
    let ht = pf.path.period() / if pf.path.is_cyclic() { nt as f64 } else { (nt - 1) as f64 };
    let columns = (0..pf.grid.len() * nt)
        .map(|node| pf.occupied_vectors(node))
        .collect();
    let gap = pf.fermi_gap.iter().copied().fold(f64::INFINITY, f64::min);
    BlochFrame::new(
        vec![pf.grid.len(), nt],
        vec![vec![pf.grid.step(0)[0], 0.0], vec![0.0, ht]],
        columns,
        vec![Wrap::Relabel(pf.basis.shift_table(&[1])), Wrap::Periodic],
        false,
        gap,
    )
}

/// Plaquette Chern number of the occupied projector over the (k, t) torus
/// of a cyclic one-dimensional pump, k first.
pub fn pump_chern(pf: &ProjectorField) -> Result<i64> {
    if !pf.path.is_cyclic() {
        return Err(Error::InvalidInput("pump Chern number needs a cyclic path".into()));
    }
    if pf.grid.lattice().dim() != 1 {
        return Err(Error::Unsupported("pump Chern number is defined for one dimension".into()));
    }
    chern_number(&berry_curvature(&occupied_frame(pf)?)?)
}

/// `Theta = -d_t A - d_k phi` from the occupied frame of a one-dimensional
/// path, with `A = i<u, d_k u>` and `phi = -i<u, d_t u>` on link phases and
/// centered differences of those. The stencil closes into the loop around
/// the four plaquettes at each node, so the value is gauge invariant.
/// `None` at the first and last time of an open path.
pub fn frame_theta(pf: &ProjectorField) -> Result<Vec<Option<f64>>> {
    if pf.grid.lattice().dim() != 1 {
        return Err(Error::Unsupported("frame formula is implemented for one dimension".into()));
    }
    let frame = occupied_frame(pf)?;
    let field = berry_curvature(&frame)?;
    let (nk, nt) = (pf.grid.len(), pf.times.len());
    let area = frame.steps()[0][0] * frame.steps()[1][1];
    let cyclic = pf.path.is_cyclic();
    Ok((0..nk * nt)
        .map(|node| {
            let (ik, it) = (node / nt, node % nt);
            if !cyclic && (it == 0 || it == nt - 1) {
                return None;
            }
            let (km, tm) = ((ik + nk - 1) % nk, (it + nt - 1) % nt);
            let loop_: f64 = [(km, tm), (ik, tm), (km, it), (ik, it)]
                .iter()
                .map(|&(a, b)| field.curvature[a * nt + b])
                .sum();
            Some(-loop_ / (4.0 * area))
        })
        .collect())
}

/// Result of evolving every occupied fiber state through the path.
#[derive(Clone, Debug)]
pub struct PropagatedPolarization {
    pub epsilon: f64,
    pub raw: Vec<f64>,
    pub quanta: Vec<f64>,
    /// `(t, J(t))` at every integration step including both ends.
    pub current: Vec<(f64, Vec<f64>)>,
    pub max_norm_drift: f64,
}

/// Per-k evolution with a fourth-order Magnus integrator of `steps` equal
/// steps. The current density is
/// `J(t) = (eps N_k |cell|)^{-1} sum_k sum_occ <u, v(k) u>`, and the
/// polarization change is its time integral (trapezoid rule).
pub fn propagated_polarization(
    path: &PumpPath,
    grid: &KGrid,
    basis: &PlaneWaveBasis,
    epsilon: f64,
    steps: usize,
) -> Result<PropagatedPolarization> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || steps == 0 {
        return Err(Error::InvalidInput("epsilon and the step count must be positive".into()));
    }
    let lat = path.lattice();
    let d = lat.dim();
    let occ = path.occupied();
    let period = path.period();
    let h = period / steps as f64;
    let gauss = [0.5 - 3f64.sqrt() / 6.0, 0.5 + 3f64.sqrt() / 6.0];
    let mut stage_times = Vec::with_capacity(2 * steps + 1);
    for s in 0..steps {
        let t0 = s as f64 * h;
        stage_times.push(t0 + gauss[0] * h);
        stage_times.push(t0 + gauss[1] * h);
    }
    let stage_pots = stage_times
        .iter()
        .map(|&t| path.potential_at_time(t.min(period)))
        .collect::<Result<Vec<_>>>()?;
    let v0 = path.potential_at_time(0.0)?;

    let per_k: Vec<(Vec<Vec<f64>>, f64)> = grid
        .points()
        .par_iter()
        .map(|k| {
            let f0 = build_fiber(&v0, k, basis, false)?;
            let (e, vecs) = linalg::eigh(&f0.matrix).ok_or_else(|| Error::Eigensolver {
                k: k.clone(),
                size: basis.len(),
            })?;
            if e[occ] - e[occ - 1] <= GAP_TOL {
                return Err(Error::GapClosure {
                    k: k.clone(),
                    t: 0.0,
                    gap: e[occ] - e[occ - 1],
                });
            }
            let mut u = vecs.columns(0, occ).into_owned();
            let vel: Vec<CMatrix> = (0..d).map(|j| velocity_matrix(&v0, k, basis, false, j)).collect();
            let current = |u: &CMatrix| -> Vec<f64> {
                vel.iter()
                    .map(|vm| (u.adjoint() * vm * u).trace().re)
                    .collect()
            };
            let mut series = Vec::with_capacity(steps + 1);
            series.push(current(&u));
            let mut drift = 0.0f64;
            for s in 0..steps {
                let h1 = build_fiber(&stage_pots[2 * s], k, basis, false)?.matrix;
                let h2 = build_fiber(&stage_pots[2 * s + 1], k, basis, false)?.matrix;
                let comm = &h2 * &h1 - &h1 * &h2;
                let kmat = (&h1 + &h2) * C64::new(h / (2.0 * epsilon), 0.0)
                    - comm * C64::new(0.0, 3f64.sqrt() * h * h / (12.0 * epsilon * epsilon));
                let prop = linalg::expm_hermitian(&kmat, 1.0).ok_or_else(|| Error::Eigensolver {
                    k: k.clone(),
                    size: basis.len(),
                })?;
                u = prop * u;
                let gram = u.adjoint() * &u;
                let dev = (gram - CMatrix::identity(occ, occ)).norm();
                drift = drift.max(dev);
                if dev > 1e-9 {
                    return Err(Error::NormDrift {
                        t: (s + 1) as f64 * h,
                        drift: dev,
                    });
                }
                series.push(current(&u));
            }
            Ok((series, drift))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / (epsilon * grid.len() as f64 * lat.cell_volume());
    let mut current = Vec::with_capacity(steps + 1);
    for s in 0..=steps {
        let mut j = vec![0.0; d];
        for (series, _) in &per_k {
            for c in 0..d {
                j[c] += series[s][c];
            }
        }
        current.push((s as f64 * h, j.into_iter().map(|x| x * scale).collect::<Vec<f64>>()));
    }
    let mut raw = vec![0.0; d];
    for s in 0..steps {
        for c in 0..d {
            raw[c] += 0.5 * h * (current[s].1[c] + current[s + 1].1[c]);
        }
    }
    let quanta = lat
        .dual_basis()
        .iter()
        .map(|g| g.iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>() * lat.cell_volume() / (2.0 * PI))
        .collect();
    Ok(PropagatedPolarization {
        epsilon,
        raw,
        quanta,
        current,
        max_norm_drift: per_k.iter().map(|x| x.1).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::potential::{FourierPotential, Interpolation};
    use rand::{Rng, SeedableRng};

    fn lat() -> Lattice {
        Lattice::cubic(1, 2.0 * PI).unwrap()
    }

    fn basis() -> PlaneWaveBasis {
        PlaneWaveBasis::new(&lat(), 6.5).unwrap()
    }

    fn sliding() -> PumpPath {
        PumpPath::sliding_cosine(&lat(), 1.0, 16, 1.0, true, Interpolation::Trigonometric).unwrap()
    }

    fn field(path: &PumpPath, nk: usize, nt: usize) -> ProjectorField {
        snapshot_projectors(path, &KGrid::new(&lat(), &[nk]).unwrap(), &basis(), nt).unwrap()
    }

    fn static_path() -> PumpPath {
        let v = FourierPotential::cosine(&lat(), &[1], 0.8).unwrap();
        PumpPath::constant(&v, 1.0, 1).unwrap()
    }

    #[test]
    fn projectors_are_rank_one_and_idempotent() {
        let pf = field(&sliding(), 16, 8);
        for node in 0..16 * 8 {
            let p = pf.projector(node);
            assert!((&p * &p - &p).norm() < 1e-10);
            assert!((p.adjoint() - &p).norm() < 1e-12);
            assert!((p.trace().re - 1.0).abs() < 1e-12);
        }
        assert!(pf.fermi_gap().iter().all(|&g| g > 0.1));
    }

    #[test]
    fn static_path_pumps_nothing() {
        let path = static_path();
        let pf = field(&path, 16, 8);
        for ik in 0..16 {
            let p0 = pf.projector(pf.node(ik, 0));
            for it in 1..8 {
                assert!((pf.projector(pf.node(ik, it)) - &p0).norm() < 1e-12);
            }
        }
        for method in [ThetaMethod::Perturbative, ThetaMethod::FiniteDifference] {
            let tf = theta_field(&pf, method).unwrap();
            assert!(tf.theta.iter().all(|t| t[0].abs() < 1e-12));
            assert!(ksv_polarization(&tf).quanta[0].abs() < 1e-12);
        }
        assert_eq!(pump_chern(&pf).unwrap(), 0);
        let grid = KGrid::new(&lat(), &[8]).unwrap();
        let prop = propagated_polarization(&path, &grid, &basis(), 1.0 / 16.0, 64).unwrap();
        assert!(prop.quanta[0].abs() < 1e-10);
        assert!(prop.max_norm_drift < 1e-10);
    }

    #[test]
    fn sliding_cosine_pumps_one_quantum() {
        let pf = field(&sliding(), 24, 24);
        assert_eq!(pump_chern(&pf).unwrap(), 1);
        let dp = ksv_polarization(&theta_field(&pf, ThetaMethod::Perturbative).unwrap()).quanta[0];
        assert!((dp - 1.0).abs() < 1e-5, "{dp}");
    }

    #[test]
    fn reversal_negates_the_pumped_charge() {
        let forward = ksv_polarization(&theta_field(&field(&sliding(), 16, 16), ThetaMethod::Perturbative).unwrap());
        let back = sliding().reversed().unwrap();
        let backward = ksv_polarization(&theta_field(&field(&back, 16, 16), ThetaMethod::Perturbative).unwrap());
        assert!((forward.raw[0] + backward.raw[0]).abs() < 1e-9);
    }

    #[test]
    fn theta_ignores_eigenvector_phases() {
        let mut pf = field(&sliding(), 16, 16);
        let before = theta_field(&pf, ThetaMethod::FiniteDifference).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for v in pf.vectors.iter_mut() {
            for mut col in v.column_iter_mut() {
                col *= C64::from_polar(1.0, rng.gen_range(-PI..PI));
            }
        }
        let after = theta_field(&pf, ThetaMethod::FiniteDifference).unwrap();
        for (a, b) in before.theta.iter().zip(&after.theta) {
            assert!((a[0] - b[0]).abs() < 1e-13);
        }
        let fresh = frame_theta(&field(&sliding(), 16, 16)).unwrap();
        for (a, b) in frame_theta(&pf).unwrap().iter().zip(&fresh) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn difference_formulas_converge_to_the_perturbative_theta() {
        // both stencils are second order: refining by two divides the error by about four
        let errors = |n: usize| {
            let coarse = field(&sliding(), 8, 8);
            let exact = theta_field(&coarse, ThetaMethod::Perturbative).unwrap();
            let pf = field(&sliding(), n, n);
            let fd = theta_field(&pf, ThetaMethod::FiniteDifference).unwrap();
            let fr = frame_theta(&pf).unwrap();
            let m = n / 8;
            let mut worst = [0.0f64; 2];
            for ik in 0..8 {
                for it in 0..8 {
                    let e = exact.theta[ik * 8 + it][0];
                    let node = (m * ik) * n + m * it;
                    worst[0] = worst[0].max((fd.theta[node][0] - e).abs());
                    worst[1] = worst[1].max((fr[node].unwrap() - e).abs());
                }
            }
            worst
        };
        let (a, b) = (errors(32), errors(64));
        for j in 0..2 {
            assert!(a[j] < [2.0, 0.1][j], "{a:?}");
            let ratio = a[j] / b[j];
            assert!((3.5..4.5).contains(&ratio), "{a:?} {b:?}");
        }
    }

    #[test]
    fn band_velocity_averages_out() {
        // q' = dE/dk - eps Theta averaged over the zone is -eps Theta averaged
        let pf = field(&sliding(), 32, 8);
        let tf = theta_field(&pf, ThetaMethod::Perturbative).unwrap();
        let current = tf.ksv_current();
        let eps = 1.0 / 32.0;
        let b = lat().bz_volume();
        for it in 0..8 {
            let mut mean_velocity = 0.0;
            let mut mean_rate = 0.0;
            for ik in 0..32 {
                let node = pf.node(ik, it);
                let u = pf.occupied_vectors(node);
                let vm = velocity_matrix(&pf.path.snapshots()[0], pf.grid.point(ik), &pf.basis, false, 0);
                let de = (u.adjoint() * vm * &u)[(0, 0)].re;
                mean_velocity += de / 32.0;
                mean_rate += (de - eps * tf.theta[node][0]) / 32.0;
            }
            assert!(mean_velocity.abs() < 1e-8, "{mean_velocity}");
            assert!((mean_rate * b / (2.0 * PI) - eps * current[it][0]).abs() < 1e-8);
        }
    }

    #[test]
    fn second_harmonic_slide_keeps_the_lowest_band_trivial() {
        // only the harmonic that does not open the lowest gap moves
        let m = 16;
        let mut times = Vec::new();
        let mut snaps = Vec::new();
        for j in 0..=m {
            let tau = j as f64 / m as f64;
            let c = C64::from_polar(0.4, -2.0 * PI * tau);
            times.push(tau);
            snaps.push(
                FourierPotential::new(
                    &lat(),
                    [
                        (vec![1], C64::new(1.0, 0.0)),
                        (vec![-1], C64::new(1.0, 0.0)),
                        (vec![2], c),
                        (vec![-2], c.conj()),
                    ],
                    true,
                )
                .unwrap(),
            );
        }
        let path = PumpPath::new(times, snaps, true, 1, Interpolation::Trigonometric).unwrap();
        let pf = field(&path, 24, 24);
        assert_eq!(pump_chern(&pf).unwrap(), 0);
        let dp = ksv_polarization(&theta_field(&pf, ThetaMethod::Perturbative).unwrap()).quanta[0];
        assert!(dp.abs() < 1e-5, "{dp}");
    }

    #[test]
    fn closed_gap_and_open_paths_are_rejected() {
        let free = PumpPath::constant(&FourierPotential::zero(&lat()), 1.0, 1).unwrap();
        let grid = KGrid::new(&lat(), &[8]).unwrap();
        assert!(matches!(
            snapshot_projectors(&free, &grid, &basis(), 4),
            Err(Error::GapClosure { .. })
        ));
        let v = FourierPotential::cosine(&lat(), &[1], 0.8).unwrap();
        let open = PumpPath::new(vec![0.0, 1.0], vec![v.clone(), v], false, 1, Interpolation::Linear).unwrap();
        let pf = snapshot_projectors(&open, &grid, &basis(), 4).unwrap();
        assert_eq!(pf.times().len(), 5);
        assert!(pump_chern(&pf).is_err());
        let fr = frame_theta(&pf).unwrap();
        assert!(fr[0].is_none() && fr[4].is_none() && fr[2].is_some());
    }
}
