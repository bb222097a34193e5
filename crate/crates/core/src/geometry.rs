//! Band geometry on discrete frames: gauge fixing by parallel transport,
//! Berry connection, plaquette curvature and Chern numbers, Wilson loops,
//! and the Rammal-Wilkinson coefficient.
//!
//! A [`BlochFrame`] is a field of orthonormal column blocks on a periodic
//! grid. Crossing the grid boundary either identifies nodes directly or
//! relabels plane-wave coefficients, which is how equivariance `phi(k + G)`
//! enters. The plaquette phase is
//! `F = Im log(<u1,u2><u2,u3><u3,u4><u4,u1>)` with corners
//! `(i,j), (i+1,j), (i+1,j+1), (i,j+1)`; it equals minus the Berry flux
//! `oint A` of the connection `A = i <phi, grad phi>`.

use crate::fiber::{check_gap, velocity_matrix, BandData, GAP_TOL};
use crate::lattice::{neighbor, unflatten};
use crate::linalg;
use crate::{CMatrix, Error, Result, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Link overlaps below this modulus mean the grid does not resolve the frame.
pub const MIN_LINK: f64 = 1e-6;
/// Allowed distance of a plaquette sum from an integer multiple of 2 pi, in units of 2 pi.
pub const CHERN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gauge {
    Raw,
    /// Parallel transport with distributed loop phases; `periodic` is false
    /// when a nonzero Chern number obstructs a smooth periodic frame.
    Transported { periodic: bool },
}

/// How a grid direction closes on itself.
#[derive(Clone, Debug)]
pub enum Wrap {
    /// The node after the last one is node 0 itself.
    Periodic,
    /// The node after the last one is node 0 with rows relabeled by the table.
    Relabel(Vec<Option<usize>>),
}

#[derive(Clone, Debug)]
pub struct BlochFrame {
    sizes: Vec<usize>,
    steps: Vec<Vec<f64>>,
    columns: Vec<CMatrix>,
    wraps: Vec<Wrap>,
    spin: bool,
    gap: f64,
    gauge: Gauge,
}

fn relabel_rows(v: &CMatrix, table: &[Option<usize>], spin: bool) -> CMatrix {
    let s = if spin { 2 } else { 1 };
    let mut out = CMatrix::zeros(v.nrows(), v.ncols());
    for (i, src) in table.iter().enumerate() {
        if let Some(j) = src {
            for a in 0..s {
                for c in 0..v.ncols() {
                    out[(s * i + a, c)] = v[(s * j + a, c)];
                }
            }
        }
    }
    out
}

impl BlochFrame {
    /// Generic frame. `steps[j]` is the parameter-space displacement of one
    /// grid step along direction `j`; `gap` is the certified spectral gap.
    pub fn new(
        sizes: Vec<usize>,
        steps: Vec<Vec<f64>>,
        columns: Vec<CMatrix>,
        wraps: Vec<Wrap>,
        spin: bool,
        gap: f64,
    ) -> Result<Self> {
        let total: usize = sizes.iter().product();
        if sizes.is_empty() || steps.len() != sizes.len() || wraps.len() != sizes.len() {
            return Err(Error::ShapeMismatch(
                "frame needs one step and one wrap rule per direction".into(),
            ));
        }
        if columns.len() != total || total == 0 {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} nodes, grid has {total}",
                columns.len()
            )));
        }
        let (r, c) = columns[0].shape();
        if columns.iter().any(|m| m.shape() != (r, c)) || c == 0 {
            return Err(Error::ShapeMismatch("frame blocks differ in shape".into()));
        }
        Ok(BlochFrame {
            sizes,
            steps,
            columns,
            wraps,
            spin,
            gap,
            gauge: Gauge::Raw,
        })
    }

    /// Frame of the band window `[lo, hi]` of a band structure, raw gauge.
    pub fn from_bands(bd: &BandData, lo: usize, hi: usize) -> Result<Self> {
        let report = check_gap(bd, lo, hi)?;
        if !report.is_isolated() {
            return Err(Error::Gapless {
                lo,
                hi,
                gap: report.gap,
                k: report.k,
            });
        }
        let grid = bd.grid();
        let d = grid.lattice().dim();
        let steps = (0..d).map(|j| grid.step(j)).collect();
        let columns = (0..grid.len())
            .map(|i| bd.vectors(i).columns(lo, hi - lo + 1).into_owned())
            .collect();
        let wraps = (0..d)
            .map(|j| {
                let mut e = vec![0; d];
                e[j] = 1;
                Wrap::Relabel(bd.basis().shift_table(&e))
            })
            .collect();
        BlochFrame::new(
            grid.sizes().to_vec(),
            steps,
            columns,
            wraps,
            bd.spin_orbit(),
            report.gap,
        )
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.steps
    }

    pub fn gauge(&self) -> &Gauge {
        &self.gauge
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.columns[0].ncols()
    }

    pub fn columns(&self, i: usize) -> &CMatrix {
        &self.columns[i]
    }

    /// Block of node `j` seen from a neighbor that crossed the boundary `wrap` times.
    fn seen_across(&self, j: usize, dir: usize, wrap: i32) -> CMatrix {
        match (&self.wraps[dir], wrap) {
            (Wrap::Relabel(table), 1) => relabel_rows(&self.columns[j], table, self.spin),
            (Wrap::Relabel(_), w) if w != 0 => {
                unreachable!("links are always taken forward")
            }
            _ => self.columns[j].clone(),
        }
    }

    /// Overlap matrix `<u(i), u(i + e_dir)>`.
    pub fn link_matrix(&self, i: usize, dir: usize) -> CMatrix {
        let (j, wrap) = neighbor(i, &self.sizes, dir, true);
        let b = self.seen_across(j, dir, wrap);
        self.columns[i].adjoint() * b
    }

    /// `det <u(i), u(i + e_dir)>`.
    pub fn link(&self, i: usize, dir: usize) -> C64 {
        linalg::det(&self.link_matrix(i, dir))
    }

    /// Multiplies node `i` by `exp(-i alpha_i)`, keeping the gauge label.
    pub fn rephased(&self, alpha: &[f64]) -> Result<Self> {
        if alpha.len() != self.columns.len() {
            return Err(Error::ShapeMismatch("one phase per node is required".into()));
        }
        let mut out = self.clone();
        for (m, &a) in out.columns.iter_mut().zip(alpha) {
            *m *= C64::from_polar(1.0, -a);
        }
        Ok(out)
    }

    /// Transport along the nodes of one closed line, spreading the loop
    /// holonomy evenly. Returns the eigenphases of the holonomy.
    fn transport_line(&mut self, nodes: &[usize], dir: usize, unwrap_from: Option<f64>) -> f64 {
        for w in nodes.windows(2) {
            let o = self.columns[w[0]].adjoint() * &self.columns[w[1]];
            let r = linalg::unitary_part(&o).adjoint();
            self.columns[w[1]] = &self.columns[w[1]] * r;
        }
        let last = *nodes.last().unwrap();
        let o = self.link_matrix(last, dir);
        let u = linalg::unitary_part(&o);
        let (mut phases, x) = linalg::unitary_log(&u);
        if let (Some(prev), 1) = (unwrap_from, phases.len()) {
            phases[0] += 2.0 * PI * ((prev - phases[0]) / (2.0 * PI)).round();
        }
        let n = nodes.len() as f64;
        for (step, &node) in nodes.iter().enumerate().skip(1) {
            let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                phases.len(),
                phases.iter().map(|&p| C64::from_polar(1.0, p * step as f64 / n)),
            ));
            let rot = &x * diag * x.adjoint();
            self.columns[node] = &self.columns[node] * rot;
        }
        phases.iter().sum()
    }
}

/// Parallel-transport gauge: along direction 1 at index 0 of direction 0,
/// then along direction 0 on every line, with loop phases distributed
/// uniformly and continued smoothly from line to line.
pub fn fix_gauge(frame: &BlochFrame) -> Result<BlochFrame> {
    if frame.gap <= GAP_TOL {
        return Err(Error::Gapless {
            lo: 0,
            hi: frame.rank() - 1,
            gap: frame.gap,
            k: Vec::new(),
        });
    }
    let mut out = frame.clone();
    match frame.sizes.len() {
        1 => {
            let nodes: Vec<usize> = (0..frame.sizes[0]).collect();
            out.transport_line(&nodes, 0, None);
            out.gauge = Gauge::Transported { periodic: true };
        }
        2 => {
            let (n0, n1) = (frame.sizes[0], frame.sizes[1]);
            let column: Vec<usize> = (0..n1).collect();
            out.transport_line(&column, 1, None);
            let mut prev = None;
            for j in 0..n1 {
                let row: Vec<usize> = (0..n0).map(|i| i * n1 + j).collect();
                prev = Some(out.transport_line(&row, 0, prev));
            }
            let field = berry_curvature(&out)?;
            let c = chern_number(&field)?;
            out.gauge = Gauge::Transported { periodic: c == 0 };
        }
        d => {
            return Err(Error::Unsupported(format!(
                "gauge fixing is implemented for one- and two-parameter frames, not {d}"
            )))
        }
    }
    Ok(out)
}

/// Curvature, connection and Rammal-Wilkinson samples on a grid.
#[derive(Clone, Debug, Default)]
pub struct BerryField {
    pub sizes: Vec<usize>,
    /// Plaquette phase per grid node (plaquette with that node as first corner).
    pub curvature: Vec<f64>,
    pub chern: Option<i64>,
    /// Distance of the plaquette sum from the nearest integer, in units of 2 pi.
    pub residual: f64,
    /// Connection per node in the parameter coordinates of the frame steps.
    pub connection: Vec<Vec<f64>>,
    pub rammal_wilkinson: Vec<[f64; 3]>,
}

/// Connection `A = i <phi, grad phi>` at every node from centered
/// differences of the link phases, `A . step_j = -(arg L_j(i) + arg L_j(i - e_j)) / 2`.
pub fn berry_connection(frame: &BlochFrame) -> Result<Vec<Vec<f64>>> {
    if frame.gauge == Gauge::Raw {
        return Err(Error::RawGauge);
    }
    let d = frame.sizes.len();
    let dim = frame.steps[0].len();
    if dim != d {
        return Err(Error::ShapeMismatch(
            "connection needs as many step vectors as parameter dimensions".into(),
        ));
    }
    let steps = nalgebra::DMatrix::from_fn(d, d, |j, c| frame.steps[j][c]);
    let lu = steps.lu();
    (0..frame.len())
        .map(|i| {
            let b = nalgebra::DVector::from_iterator(
                d,
                (0..d).map(|j| {
                    let (prev, _) = neighbor(i, &frame.sizes, j, false);
                    -(frame.link(i, j).arg() + frame.link(prev, j).arg()) / 2.0
                }),
            );
            let a = lu
                .solve(&b)
                .ok_or_else(|| Error::ShapeMismatch("degenerate frame steps".into()))?;
            Ok(a.iter().copied().collect())
        })
        .collect()
}

/// Plaquette phases of a two-parameter frame.
pub fn berry_curvature(frame: &BlochFrame) -> Result<BerryField> {
    if frame.sizes.len() != 2 {
        return Err(Error::Unsupported(
            "plaquette curvature needs a two-parameter frame".into(),
        ));
    }
    let n = frame.len();
    let links: Vec<[C64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| [frame.link(i, 0), frame.link(i, 1)])
        .collect();
    for (i, l) in links.iter().enumerate() {
        for z in l {
            if z.norm() < MIN_LINK {
                return Err(Error::GridTooCoarse {
                    node: i,
                    overlap: z.norm(),
                });
            }
        }
    }
    let curvature = (0..n)
        .map(|i| {
            let (right, _) = neighbor(i, &frame.sizes, 0, true);
            let (up, _) = neighbor(i, &frame.sizes, 1, true);
            let loop_ = links[i][0] * links[right][1] * links[up][0].conj() * links[i][1].conj();
            loop_.arg()
        })
        .collect();
    Ok(BerryField {
        sizes: frame.sizes.clone(),
        curvature,
        ..Default::default()
    })
}

/// Sum of plaquette phases over the torus divided by 2 pi.
pub fn chern_number(field: &BerryField) -> Result<i64> {
    let (c, residual) = chern_value(field);
    if residual > CHERN_TOL {
        return Err(Error::NonQuantized {
            value: c,
            residual,
        });
    }
    Ok(c.round() as i64)
}

fn chern_value(field: &BerryField) -> (f64, f64) {
    let c = field.curvature.iter().sum::<f64>() / (2.0 * PI);
    (c, (c - c.round()).abs())
}

impl BerryField {
    /// Fills `chern` and `residual`, failing when the sum is not quantized.
    pub fn with_chern(mut self) -> Result<Self> {
        let (c, r) = chern_value(&self);
        self.residual = r;
        self.chern = Some(chern_number(&self).map_err(|_| Error::NonQuantized {
            value: c,
            residual: r,
        })?);
        Ok(self)
    }
}

/// Gauge-invariant Wilson-loop (Berry) phases `-arg prod_links` of every
/// closed line along `dir`, in `(-pi, pi]`. For a one-parameter frame this
/// is the Zak phase.
pub fn wilson_loop_phases(frame: &BlochFrame, dir: usize) -> Vec<f64> {
    let n = frame.sizes[dir];
    (0..frame.len())
        .filter(|&i| unflatten(i, &frame.sizes)[dir] == 0)
        .map(|start| {
            let mut prod = C64::new(1.0, 0.0);
            let mut i = start;
            for _ in 0..n {
                prod *= frame.link(i, dir);
                i = neighbor(i, &frame.sizes, dir, true).0;
            }
            wrap_phase(-prod.arg())
        })
        .collect()
}

/// Maps a phase into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Rammal-Wilkinson vector and the share carried by the upper half of the
/// computed bands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RammalWilkinson {
    pub value: [f64; 3],
    pub tail: f64,
}

/// `M_l = 1/2 i eps_lij <d_i phi | (H - E_n) | d_j phi>` at grid node `i`,
/// from velocity matrix elements summed over the computed bands.
pub fn rammal_wilkinson(bd: &BandData, n: usize, i: usize) -> Result<RammalWilkinson> {
    let nb = bd.n_bands();
    if n >= nb {
        return Err(Error::WindowOutOfRange {
            lo: n,
            hi: n,
            computed: nb,
        });
    }
    let k = bd.grid().point(i);
    let e = bd.energies(i);
    let u = bd.vectors(i);
    let d = k.len();
    let mut vel: Vec<Vec<C64>> = Vec::with_capacity(d);
    for j in 0..d {
        let vm = velocity_matrix(bd.potential(), k, bd.basis(), bd.spin_orbit(), j);
        let col = vm * u.column(n);
        vel.push((0..nb).map(|m| (u.column(m).adjoint() * &col)[(0, 0)]).collect());
    }
    let mut x = [[C64::default(); 3]; 3];
    let mut x_tail = [[C64::default(); 3]; 3];
    for m in 0..nb {
        if m == n {
            continue;
        }
        let de = e[m] - e[n];
        if de.abs() < 1e-9 {
            return Err(Error::NearDegeneracy {
                n,
                m,
                gap: de.abs(),
                k: k.to_vec(),
            });
        }
        for a in 0..d {
            for b in 0..d {
                let term = vel[a][m].conj() * vel[b][m] / de;
                x[a][b] += term;
                if m >= nb / 2 {
                    x_tail[a][b] += term;
                }
            }
        }
    }
    let comp = |x: &[[C64; 3]; 3]| [-x[1][2].im, -x[2][0].im, -x[0][1].im];
    let value = comp(&x);
    let t = comp(&x_tail);
    Ok(RammalWilkinson {
        value,
        tail: (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt(),
    })
}

/// Rammal-Wilkinson samples of band `n` at every grid node.
pub fn rammal_wilkinson_field(bd: &BandData, n: usize) -> Result<Vec<RammalWilkinson>> {
    (0..bd.grid().len())
        .into_par_iter()
        .map(|i| rammal_wilkinson(bd, n, i))
        .collect()
}
