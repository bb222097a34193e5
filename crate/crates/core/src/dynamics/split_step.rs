use super::fields::{ExternalFields, FieldTerm, ScalarField};
use super::wavepacket::{edge_weight, WavePacket, EDGE_WEIGHT_TOL};
use crate::fiber::RealSpaceBox;
use crate::lattice::unflatten;
use crate::fft::AxisFfts;
use crate::potential::FourierPotential;
use crate::{Error, Result, C64};
use std::f64::consts::PI;

/// Allowed deviation of the norm from one.
pub const NORM_TOL: f64 = 1e-9;

/// Expectation values at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub t: f64,
    /// Macroscopic time `eps t`.
    pub s: f64,
    pub mean_x: Vec<f64>,
    /// Circular mean of the momentum distribution folded into the zone.
    pub mean_k: Vec<f64>,
    pub norm: f64,
    pub energy: f64,
    pub edge_weight: f64,
}

/// Samples of a propagation.
#[derive(Clone, Debug, Default)]
pub struct Propagation {
    pub epsilon: f64,
    pub dt: f64,
    pub samples: Vec<Observables>,
}

impl Propagation {
    pub fn max_norm_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|o| (o.norm - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.samples.first().map(|o| o.energy).unwrap_or(0.0);
        self.samples
            .iter()
            .map(|o| (o.energy - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// Signed FFT frequency of index `m` on `n` points.
fn signed(m: usize, n: usize) -> i64 {
    if m < n.div_ceil(2) {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

fn depends_on(f: &ScalarField, j: usize) -> bool {
    f.terms.iter().any(|t| match t {
        FieldTerm::Monomial { powers, .. } => powers[j] != 0,
        FieldTerm::Cosine { wavevector, .. } => wavevector[j] != 0.0,
    })
}

/// Strang splitting of `1/2 |p - A(eps x)|^2 + V(x) + phi(eps x)`.
struct Propagator {
    bx: RealSpaceBox,
    ffts: AxisFfts,
    epsilon: f64,
    /// `V + phi` on the grid.
    potential: Vec<f64>,
    /// Momentum of every index in the full transform.
    momenta: Vec<Vec<f64>>,
    /// Per axis, `p_j - A_j` on the mixed grid (frequency along `j`,
    /// position along the others); empty when there is no vector potential.
    directional: Vec<Vec<f64>>,
}

impl Propagator {
    fn new(bx: &RealSpaceBox, v: &FourierPotential, fields: &ExternalFields) -> Result<Self> {
        let lat = bx.lattice();
        let d = lat.dim();
        if *v.lattice() != *lat || fields.dim() != d {
            return Err(Error::ShapeMismatch(
                "potential, fields and box must share the lattice".into(),
            ));
        }
        if !v.is_real() {
            return Err(Error::InvalidInput("propagation needs a real potential".into()));
        }
        let eps = fields.epsilon();
        let shape = bx.shape();
        let positions = bx.positions();
        let potential: Vec<f64> = positions
            .iter()
            .map(|x| {
                let r: Vec<f64> = x.iter().map(|c| eps * c).collect();
                v.value_at(x).re + fields.phi().value(&r)
            })
            .collect();
        let momentum = |m: &[usize]| -> Vec<f64> {
            let beta: Vec<f64> = m
                .iter()
                .zip(&shape)
                .zip(bx.cells())
                .map(|((&mj, &n), &c)| signed(mj, n) as f64 / c as f64)
                .collect();
            lat.from_fractional_k(&beta)
        };
        let momenta: Vec<Vec<f64>> = (0..bx.len()).map(|i| momentum(&unflatten(i, &shape))).collect();
        let mut directional = Vec::new();
        if fields.has_vector_potential() {
            if !lat.is_rectangular() {
                return Err(Error::Unsupported(
                    "vector potentials need a rectangular lattice".into(),
                ));
            }
            let a = fields.vector_potential();
            if (0..d).any(|j| depends_on(&a[j], j)) {
                return Err(Error::Unsupported(
                    "each component A_j must be independent of x_j".into(),
                ));
            }
            for j in 0..d {
                let gs = lat.dual_basis()[j][j];
                directional.push(
                    (0..bx.len())
                        .map(|i| {
                            let m = unflatten(i, &shape);
                            let p = signed(m[j], shape[j]) as f64 / bx.cells()[j] as f64 * gs;
                            let r: Vec<f64> = positions[i].iter().map(|c| eps * c).collect();
                            p - a[j].value(&r)
                        })
                        .collect(),
                );
            }
        }
        Ok(Propagator {
            bx: bx.clone(),
            ffts: AxisFfts::new(&shape),
            epsilon: eps,
            potential,
            momenta,
            directional,
        })
    }

    fn phases(values: &[f64], tau: f64, f: impl Fn(f64) -> f64) -> Vec<C64> {
        values.iter().map(|&x| C64::from_polar(1.0, -tau * f(x))).collect()
    }

    /// Runs `steps` steps of size `dt`, recording every `record_every`.
    fn run(&self, psi0: &[C64], dt: f64, steps: usize, record_every: usize) -> Result<Propagation> {
        let half_v = Propagator::phases(&self.potential, dt / 2.0, |x| x);
        let kinetic: Vec<C64> = self
            .momenta
            .iter()
            .map(|p| C64::from_polar(1.0, -dt * 0.5 * p.iter().map(|x| x * x).sum::<f64>()))
            .collect();
        let d = self.momenta[0].len();
        // nested directional factors: axis j < d-1 gets dt/2 twice, the last axis dt
        let dir_phases: Vec<Vec<C64>> = self
            .directional
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let tau = if j + 1 == d { dt } else { dt / 2.0 };
                Propagator::phases(w, tau, |x| 0.5 * x * x)
            })
            .collect();

        let mut psi = psi0.to_vec();
        let mut out = Propagation {
            epsilon: self.epsilon,
            dt,
            samples: vec![self.observe(&psi, 0.0)?],
        };
        for n in 1..=steps {
            mul(&mut psi, &half_v);
            if self.directional.is_empty() {
                self.ffts.all(&mut psi, false);
                mul(&mut psi, &kinetic);
                self.ffts.all(&mut psi, true);
            } else {
                let order: Vec<usize> = (0..d).chain((0..d.saturating_sub(1)).rev()).collect();
                for j in order {
                    self.ffts.apply(&mut psi, j, false);
                    mul(&mut psi, &dir_phases[j]);
                    self.ffts.apply(&mut psi, j, true);
                }
            }
            mul(&mut psi, &half_v);
            if n % record_every == 0 {
                let obs = self.observe(&psi, n as f64 * dt)?;
                if (obs.norm - 1.0).abs() > NORM_TOL {
                    return Err(Error::NormDrift {
                        t: obs.t,
                        drift: obs.norm - 1.0,
                    });
                }
                if obs.edge_weight > EDGE_WEIGHT_TOL {
                    return Err(Error::BoundaryContact {
                        t: obs.t,
                        weight: obs.edge_weight,
                    });
                }
                out.samples.push(obs);
            }
        }
        Ok(out)
    }

    fn observe(&self, psi: &[C64], t: f64) -> Result<Observables> {
        let lat = self.bx.lattice();
        let d = lat.dim();
        let shape = self.bx.shape();
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let mut mean_x = vec![0.0; d];
        let mut pot = 0.0;
        for (i, z) in psi.iter().enumerate() {
            let w = z.norm_sqr();
            for (m, x) in mean_x.iter_mut().zip(self.bx.position(i)) {
                *m += w * x;
            }
            pot += w * self.potential[i];
        }
        for m in mean_x.iter_mut() {
            *m /= norm2;
        }

        let mut hat = psi.to_vec();
        self.ffts.all(&mut hat, false);
        let total = psi.len() as f64;
        let mut circ = vec![C64::default(); d];
        let mut kin = 0.0;
        for (i, z) in hat.iter().enumerate() {
            let w = z.norm_sqr() / total;
            let m = unflatten(i, &shape);
            for j in 0..d {
                let beta = signed(m[j], shape[j]) as f64 / self.bx.cells()[j] as f64;
                circ[j] += C64::from_polar(w, 2.0 * PI * beta);
            }
            if self.directional.is_empty() {
                kin += w * 0.5 * self.momenta[i].iter().map(|x| x * x).sum::<f64>();
            }
        }
        if !self.directional.is_empty() {
            for (j, w) in self.directional.iter().enumerate() {
                let mut mixed = psi.to_vec();
                self.ffts.apply(&mut mixed, j, false);
                let n = shape[j] as f64;
                kin += mixed
                    .iter()
                    .zip(w)
                    .map(|(z, x)| z.norm_sqr() / n * 0.5 * x * x)
                    .sum::<f64>();
            }
        }
        let beta: Vec<f64> = circ.iter().map(|z| z.arg() / (2.0 * PI)).collect();
        let mean_k = lat.reduce_to_bz(&lat.from_fractional_k(&beta));
        Ok(Observables {
            t,
            s: self.epsilon * t,
            mean_x,
            mean_k,
            norm: norm2.sqrt(),
            energy: (kin + pot) / norm2,
            edge_weight: edge_weight(&self.bx, psi),
        })
    }
}

fn mul(psi: &mut [C64], f: &[C64]) {
    for (a, b) in psi.iter_mut().zip(f) {
        *a *= b;
    }
}

/// Full Schroedinger propagation of `1/2 |p - A(eps x)|^2 + V(x) + phi(eps x)`
/// by Strang splitting, `steps` steps of `dt` with observables every
/// `record_every` steps. With a vector potential the lattice must be
/// rectangular and `A_j` independent of `x_j`, so that each directional
/// kinetic factor is diagonal in a mixed representation.
pub fn split_step_propagate(
    packet: &WavePacket,
    v: &FourierPotential,
    fields: &ExternalFields,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<Propagation> {
    if !(dt > 0.0 && dt.is_finite()) || record_every == 0 {
        return Err(Error::InvalidInput(
            "time step must be positive and the record stride nonzero".into(),
        ));
    }
    if packet.psi.len() != packet.bx.len() {
        return Err(Error::ShapeMismatch("packet does not fill its box".into()));
    }
    Propagator::new(&packet.bx, v, fields)?.run(&packet.psi, dt, steps, record_every)
}
