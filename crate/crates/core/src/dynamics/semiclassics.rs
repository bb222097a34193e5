use super::fields::{ExternalFields, FieldSample};
use super::interp::{Jet, TrigInterpolant};
use crate::fiber::{check_gap, BandData};
use crate::geometry::{berry_connection, rammal_wilkinson_field, BlochFrame, Gauge};
use crate::lattice::{KGrid, Lattice};
use crate::{Error, Result};

/// Interpolated band energy and, optionally, its connection and
/// Rammal-Wilkinson vector.
#[derive(Clone, Debug)]
pub struct BandModel {
    lattice: Lattice,
    band: usize,
    energy: TrigInterpolant,
    connection: Option<Vec<TrigInterpolant>>,
    rammal_wilkinson: Option<Vec<TrigInterpolant>>,
}

impl BandModel {
    /// Energy interpolant of band `n`, which must be isolated on the grid.
    pub fn from_bands(bd: &BandData, n: usize) -> Result<Self> {
        let report = check_gap(bd, n, n)?;
        if !report.is_isolated() {
            return Err(Error::Gapless {
                lo: n,
                hi: n,
                gap: report.gap,
                k: report.k,
            });
        }
        Ok(BandModel {
            lattice: bd.grid().lattice().clone(),
            band: n,
            energy: TrigInterpolant::new(bd.grid(), &bd.band(n))?,
            connection: None,
            rammal_wilkinson: None,
        })
    }

    /// Adds connection samples (one vector per grid node, Cartesian
    /// components) and Rammal-Wilkinson samples on the same grid.
    pub fn with_geometry(
        mut self,
        grid: &KGrid,
        connection: &[Vec<f64>],
        rammal_wilkinson: &[[f64; 3]],
    ) -> Result<Self> {
        let d = self.lattice.dim();
        if *grid.lattice() != self.lattice {
            return Err(Error::ShapeMismatch("geometry grid is on another lattice".into()));
        }
        if connection.len() != grid.len()
            || rammal_wilkinson.len() != grid.len()
            || connection.iter().any(|a| a.len() != d)
        {
            return Err(Error::ShapeMismatch(
                "geometry samples must match the grid".into(),
            ));
        }
        self.connection = Some(
            (0..d)
                .map(|c| {
                    let s: Vec<f64> = connection.iter().map(|a| a[c]).collect();
                    TrigInterpolant::new(grid, &s)
                })
                .collect::<Result<_>>()?,
        );
        self.rammal_wilkinson = Some(
            (0..3)
                .map(|c| {
                    let s: Vec<f64> = rammal_wilkinson.iter().map(|m| m[c]).collect();
                    TrigInterpolant::new(grid, &s)
                })
                .collect::<Result<_>>()?,
        );
        Ok(self)
    }

    /// Energy and geometry of band `n` from a gauge-fixed single-band frame
    /// built on the grid of `bd`.
    pub fn from_frame(bd: &BandData, n: usize, frame: &BlochFrame) -> Result<Self> {
        if *frame.gauge() == Gauge::Raw {
            return Err(Error::RawGauge);
        }
        if frame.rank() != 1 || frame.sizes() != bd.grid().sizes() {
            return Err(Error::ShapeMismatch(
                "frame must hold one band on the band-structure grid".into(),
            ));
        }
        let conn = berry_connection(frame)?;
        let rw: Vec<[f64; 3]> = rammal_wilkinson_field(bd, n)?
            .into_iter()
            .map(|m| m.value)
            .collect();
        BandModel::from_bands(bd, n)?.with_geometry(bd.grid(), &conn, &rw)
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn has_geometry(&self) -> bool {
        self.connection.is_some()
    }

    pub fn energy(&self, k: &[f64]) -> Jet {
        self.energy.jet(k)
    }

    /// Connection components at `k`.
    pub fn connection(&self, k: &[f64]) -> Result<Vec<Jet>> {
        let c = self
            .connection
            .as_ref()
            .ok_or_else(|| Error::MissingData("connection samples".into()))?;
        Ok(c.iter().map(|f| f.jet(k)).collect())
    }

    pub fn rammal_wilkinson(&self, k: &[f64]) -> Result<Vec<Jet>> {
        let m = self
            .rammal_wilkinson
            .as_ref()
            .ok_or_else(|| Error::MissingData("Rammal-Wilkinson samples".into()))?;
        Ok(m.iter().map(|f| f.jet(k)).collect())
    }
}

/// Phase-space point of the effective dynamics. `r` is the canonical
/// macroscopic position, `k` the canonical quasimomentum.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiclassicalState {
    pub r: Vec<f64>,
    pub k: Vec<f64>,
    pub band: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Zeroth,
    First,
}

/// A scalar symbol and its phase-space gradients.
#[derive(Clone, Debug)]
pub struct SymbolEval {
    pub value: f64,
    pub grad_k: Vec<f64>,
    pub grad_r: Vec<f64>,
}

fn embed(v: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn kinetic_momentum(state: &SemiclassicalState, f: &FieldSample) -> Vec<f64> {
    state.k.iter().zip(&f.a).map(|(k, a)| k - a).collect()
}

fn check_state(model: &BandModel, fields: &ExternalFields, state: &SemiclassicalState) -> Result<()> {
    let d = model.lattice.dim();
    if fields.dim() != d || state.r.len() != d || state.k.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "state, fields and band model must all be {d}-dimensional"
        )));
    }
    if state.band != model.band {
        return Err(Error::InvalidInput(format!(
            "state is in band {}, model describes band {}",
            state.band, model.band
        )));
    }
    Ok(())
}

/// `h0 = E_n(k - A(r)) + phi(r)`.
pub fn h0_eval(
    model: &BandModel,
    fields: &ExternalFields,
    state: &SemiclassicalState,
) -> Result<SymbolEval> {
    check_state(model, fields, state)?;
    let f = fields.sample(&state.r);
    let q = kinetic_momentum(state, &f);
    let e = model.energy(&q);
    let d = q.len();
    let grad_r = (0..d)
        .map(|i| f.grad_phi[i] - (0..d).map(|c| f.da[i][c] * e.grad[c]).sum::<f64>())
        .collect();
    Ok(SymbolEval {
        value: e.value + f.phi,
        grad_k: e.grad,
        grad_r,
    })
}

/// `h1 = (grad phi - grad E_n(q) x B) . A_n(q) - B . M_n(q)` with `q = k - A(r)`.
pub fn h1_eval(
    model: &BandModel,
    fields: &ExternalFields,
    state: &SemiclassicalState,
) -> Result<SymbolEval> {
    check_state(model, fields, state)?;
    let d = state.r.len();
    let f = fields.sample(&state.r);
    let q = kinetic_momentum(state, &f);
    let e = model.energy(&q);
    let conn = model.connection(&q)?;
    let rw = model.rammal_wilkinson(&q)?;

    let g = embed(&f.grad_phi);
    let b = f.b();
    let grad_b = f.grad_b();
    let ge = embed(&e.grad);
    let a = embed(&conn.iter().map(|j| j.value).collect::<Vec<_>>());
    let m = [rw[0].value, rw[1].value, rw[2].value];
    let force = {
        let eb = cross(ge, b);
        [g[0] - eb[0], g[1] - eb[1], g[2] - eb[2]]
    };
    let value = dot3(force, a) - dot3(b, m);

    // derivative with respect to q_c at fixed r
    let dq: Vec<f64> = (0..d)
        .map(|c| {
            let dge = embed(&(0..d).map(|x| e.hess[x][c]).collect::<Vec<_>>());
            let da = embed(&conn.iter().map(|j| j.grad[c]).collect::<Vec<_>>());
            let dm = [rw[0].grad[c], rw[1].grad[c], rw[2].grad[c]];
            -dot3(cross(dge, b), a) + dot3(force, da) - dot3(b, dm)
        })
        .collect();
    let grad_r = (0..d)
        .map(|i| {
            let dg = embed(&f.hess_phi[i]);
            let db = grad_b[i];
            let eb = cross(ge, db);
            let direct = dot3([dg[0] - eb[0], dg[1] - eb[1], dg[2] - eb[2]], a) - dot3(db, m);
            direct - (0..d).map(|c| f.da[i][c] * dq[c]).sum::<f64>()
        })
        .collect();
    Ok(SymbolEval {
        value,
        grad_k: dq,
        grad_r,
    })
}

/// Total symbol `h0 + eps h1` (or `h0` alone).
pub fn symbol_eval(
    model: &BandModel,
    fields: &ExternalFields,
    state: &SemiclassicalState,
    order: Order,
) -> Result<SymbolEval> {
    let mut h = h0_eval(model, fields, state)?;
    if order == Order::First {
        let h1 = h1_eval(model, fields, state)?;
        let eps = fields.epsilon();
        h.value += eps * h1.value;
        for (a, b) in h.grad_k.iter_mut().zip(&h1.grad_k) {
            *a += eps * b;
        }
        for (a, b) in h.grad_r.iter_mut().zip(&h1.grad_r) {
            *a += eps * b;
        }
    }
    Ok(h)
}

/// Physical position of the packet center: `r` at order zero,
/// `r + eps A_n(k - A(r))` at order one.
pub fn physical_position(
    model: &BandModel,
    fields: &ExternalFields,
    state: &SemiclassicalState,
    order: Order,
) -> Result<Vec<f64>> {
    if order == Order::Zeroth {
        return Ok(state.r.clone());
    }
    let f = fields.sample(&state.r);
    let q = kinetic_momentum(state, &f);
    let conn = model.connection(&q)?;
    let eps = fields.epsilon();
    Ok(state
        .r
        .iter()
        .zip(&conn)
        .map(|(r, a)| r + eps * a.value)
        .collect())
}

/// Physical kinetic momentum: `q = k - A(r)` at order zero,
/// `q_i + eps sum_c F_ic A_n,c(q)` with `F_ic = d_i A_c - d_c A_i` at order one.
pub fn physical_momentum(
    model: &BandModel,
    fields: &ExternalFields,
    state: &SemiclassicalState,
    order: Order,
) -> Result<Vec<f64>> {
    let f = fields.sample(&state.r);
    let q = kinetic_momentum(state, &f);
    if order == Order::Zeroth || !fields.has_vector_potential() {
        return Ok(q);
    }
    let conn = model.connection(&q)?;
    let eps = fields.epsilon();
    let d = q.len();
    Ok((0..d)
        .map(|i| {
            q[i] + eps
                * (0..d)
                    .map(|c| (f.da[i][c] - f.da[c][i]) * conn[c].value)
                    .sum::<f64>()
        })
        .collect())
}

/// Canonical state with the given physical position and kinetic momentum,
/// found by fixed point iteration of `r = R - eps A_n(q)`,
/// `q = Q - eps F(r) A_n(q)`, `k = q + A(r)`.
pub fn canonical_state(
    model: &BandModel,
    fields: &ExternalFields,
    position: &[f64],
    momentum: &[f64],
    order: Order,
) -> Result<SemiclassicalState> {
    let mut state = SemiclassicalState {
        r: position.to_vec(),
        k: momentum.to_vec(),
        band: model.band,
    };
    check_state(model, fields, &state)?;
    let with_potential = |state: &mut SemiclassicalState, q: &[f64]| {
        let a = fields.sample(&state.r).a;
        state.k = q.iter().zip(&a).map(|(q, a)| q + a).collect();
    };
    with_potential(&mut state, momentum);
    if order == Order::Zeroth {
        return Ok(state);
    }
    for _ in 0..100 {
        let p = physical_position(model, fields, &state, order)?;
        let m = physical_momentum(model, fields, &state, order)?;
        let f = fields.sample(&state.r);
        let mut q = kinetic_momentum(&state, &f);
        let mut change = 0.0f64;
        for ((r, p), target) in state.r.iter_mut().zip(&p).zip(position) {
            let dr = target - p;
            *r += dr;
            change = change.max(dr.abs());
        }
        for ((q, m), target) in q.iter_mut().zip(&m).zip(momentum) {
            let dq = target - m;
            *q += dq;
            change = change.max(dq.abs());
        }
        with_potential(&mut state, &q);
        if change < 1e-15 {
            break;
        }
    }
    Ok(state)
}

/// Samples of an integrated trajectory.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub s: Vec<f64>,
    pub r: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// Physical packet center, see [`physical_position`].
    pub position: Vec<Vec<f64>>,
    /// Kinetic momentum, see [`physical_momentum`].
    pub momentum: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }
}

fn flow(
    model: &BandModel,
    fields: &ExternalFields,
    state: &SemiclassicalState,
    order: Order,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = symbol_eval(model, fields, state, order)?;
    let all: Vec<f64> = h.grad_k.iter().chain(&h.grad_r).copied().collect();
    if all.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(all));
    }
    Ok((h.grad_k, h.grad_r.iter().map(|x| -x).collect()))
}

/// Hamilton's equations `dr/ds = grad_k h`, `dk/ds = -grad_r h` in the
/// macroscopic time `s`, fixed-step RK4 with `k` reduced to the Brillouin
/// zone after each step. Samples every `record_every` steps up to
/// `steps` steps.
pub fn integrate_semiclassics(
    model: &BandModel,
    fields: &ExternalFields,
    start: &SemiclassicalState,
    order: Order,
    ds: f64,
    steps: usize,
    record_every: usize,
) -> Result<Trajectory> {
    if !(ds > 0.0 && ds.is_finite()) || record_every == 0 {
        return Err(Error::InvalidInput(
            "step must be positive and the record stride nonzero".into(),
        ));
    }
    check_state(model, fields, start)?;
    let mut st = start.clone();
    st.k = model.lattice.reduce_to_bz(&st.k);
    let mut traj = Trajectory::default();
    let record = |traj: &mut Trajectory, st: &SemiclassicalState, n: usize| -> Result<()> {
        traj.s.push(n as f64 * ds);
        traj.r.push(st.r.clone());
        traj.k.push(st.k.clone());
        traj.energy.push(symbol_eval(model, fields, st, order)?.value);
        traj.position.push(physical_position(model, fields, st, order)?);
        traj.momentum.push(physical_momentum(model, fields, st, order)?);
        Ok(())
    };
    record(&mut traj, &st, 0)?;
    let shifted = |st: &SemiclassicalState, dr: &[f64], dk: &[f64], h: f64| SemiclassicalState {
        r: st.r.iter().zip(dr).map(|(a, b)| a + h * b).collect(),
        k: st.k.iter().zip(dk).map(|(a, b)| a + h * b).collect(),
        band: st.band,
    };
    for n in 1..=steps {
        let (r1, k1) = flow(model, fields, &st, order)?;
        let (r2, k2) = flow(model, fields, &shifted(&st, &r1, &k1, ds / 2.0), order)?;
        let (r3, k3) = flow(model, fields, &shifted(&st, &r2, &k2, ds / 2.0), order)?;
        let (r4, k4) = flow(model, fields, &shifted(&st, &r3, &k3, ds), order)?;
        let d = st.r.len();
        for j in 0..d {
            st.r[j] += ds / 6.0 * (r1[j] + 2.0 * r2[j] + 2.0 * r3[j] + r4[j]);
            st.k[j] += ds / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        st.k = model.lattice.reduce_to_bz(&st.k);
        if n % record_every == 0 {
            record(&mut traj, &st, n)?;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{band_structure, PlaneWaveBasis};
    use crate::potential::FourierPotential;
    use std::f64::consts::PI;

    fn cosine_band() -> BandData {
        let lat = Lattice::cubic(1, 2.0 * PI).unwrap();
        let v = FourierPotential::cosine(&lat, &[1], 2.0).unwrap();
        let basis = PlaneWaveBasis::new(&lat, 6.5).unwrap();
        let grid = KGrid::new(&lat, &[32]).unwrap();
        band_structure(&v, &grid, &basis, 4, false).unwrap()
    }

    #[test]
    fn free_fields_give_band_energy() {
        let bd = cosine_band();
        let model = BandModel::from_bands(&bd, 0).unwrap();
        let fields = ExternalFields::none(1, 0.1).unwrap();
        let st = SemiclassicalState {
            r: vec![0.4],
            k: bd.grid().point(5).to_vec(),
            band: 0,
        };
        let h = h0_eval(&model, &fields, &st).unwrap();
        assert!((h.value - bd.energies(5)[0]).abs() < 1e-12);
        assert_eq!(h.grad_r, vec![0.0]);
    }

    #[test]
    fn interpolated_velocity_matches_differences() {
        let bd = cosine_band();
        let model = BandModel::from_bands(&bd, 0).unwrap();
        let e = bd.band(0);
        let dk = bd.grid().step(0)[0];
        for i in 1..31 {
            let fd = (e[i + 1] - e[i - 1]) / (2.0 * dk);
            let jet = model.energy(bd.grid().point(i));
            // centered difference carries its own O(dk^2) error
            assert!((fd - jet.grad[0]).abs() < 2e-3, "{fd} {}", jet.grad[0]);
        }
        let k = [0.123];
        let h = 1e-6;
        let fd = (model.energy(&[k[0] + h]).value - model.energy(&[k[0] - h]).value) / (2.0 * h);
        assert!((fd - model.energy(&k).grad[0]).abs() < 1e-7);
    }

    #[test]
    fn ballistic_and_bloch_drift() {
        let bd = cosine_band();
        let model = BandModel::from_bands(&bd, 0).unwrap();
        let free = ExternalFields::none(1, 0.1).unwrap();
        let st = SemiclassicalState {
            r: vec![0.0],
            k: vec![0.2],
            band: 0,
        };
        let traj = integrate_semiclassics(&model, &free, &st, Order::Zeroth, 0.01, 100, 10).unwrap();
        let v = model.energy(&[0.2]).grad[0];
        for (s, r) in traj.s.iter().zip(&traj.r) {
            assert!((r[0] - s * v).abs() < 1e-12);
        }

        let force = ExternalFields::constant_force(&[1.0], 0.1).unwrap();
        let traj = integrate_semiclassics(&model, &force, &st, Order::Zeroth, 0.01, 1000, 50).unwrap();
        for (s, k) in traj.s.iter().zip(&traj.k) {
            let expect = model.lattice().reduce_to_bz(&[0.2 + s]);
            assert!((k[0] - expect[0]).abs() < 1e-10);
        }
        // ten Bloch periods
        assert!(traj.max_energy_drift() < 1e-8);
        assert!((traj.r.last().unwrap()[0] - traj.r[0][0]).abs() < 1e-8);
    }

    #[test]
    fn first_order_needs_geometry() {
        let bd = cosine_band();
        let model = BandModel::from_bands(&bd, 0).unwrap();
        let fields = ExternalFields::constant_force(&[1.0], 0.1).unwrap();
        let st = SemiclassicalState {
            r: vec![0.0],
            k: vec![0.0],
            band: 0,
        };
        assert!(matches!(h1_eval(&model, &fields, &st), Err(Error::MissingData(_))));
        let frame = crate::geometry::fix_gauge(&BlochFrame::from_bands(&bd, 0, 0).unwrap()).unwrap();
        let model = BandModel::from_frame(&bd, 0, &frame).unwrap();
        let h1 = h1_eval(&model, &fields, &st).unwrap();
        let a = model.connection(&[0.0]).unwrap()[0].value;
        assert!((h1.value - (-1.0 * a)).abs() < 1e-12);
        let none = ExternalFields::none(1, 0.1).unwrap();
        assert_eq!(h1_eval(&model, &none, &st).unwrap().value, 0.0);
    }
}
