//! Lattice-periodic potentials as finite dual-lattice Fourier series, and
//! time-keyed families of them for adiabatic pumps.

use crate::lattice::Lattice;
use crate::{Error, Result, C64};
use std::collections::BTreeMap;
use std::f64::consts::PI;

const REAL_TOL: f64 = 1e-12;

/// `V(x) = sum_n V(n) exp(i G_n . x)` with `G_n = sum_j n_j gamma*_j`.
#[derive(Clone, Debug)]
pub struct FourierPotential {
    lattice: Lattice,
    coeffs: BTreeMap<Vec<i32>, C64>,
    real: bool,
}

/// Builds a potential from `(n, V(n))` entries, checking conjugate symmetry
/// when `real` is set.
pub fn potential_from_coeffs(
    lat: &Lattice,
    entries: impl IntoIterator<Item = (Vec<i32>, C64)>,
    real: bool,
) -> Result<FourierPotential> {
    FourierPotential::new(lat, entries, real)
}

impl FourierPotential {
    pub fn new(
        lat: &Lattice,
        entries: impl IntoIterator<Item = (Vec<i32>, C64)>,
        real: bool,
    ) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (n, v) in entries {
            if n.len() != lat.dim() {
                return Err(Error::InvalidInput(format!(
                    "coefficient index {n:?} has {} components, lattice has dimension {}",
                    n.len(),
                    lat.dim()
                )));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidInput(format!("coefficient at {n:?} is not finite")));
            }
            if coeffs.insert(n.clone(), v).is_some() {
                return Err(Error::InvalidInput(format!("duplicate coefficient at {n:?}")));
            }
        }
        let pot = FourierPotential {
            lattice: lat.clone(),
            coeffs,
            real,
        };
        if real {
            pot.check_realness()?;
        }
        Ok(pot)
    }

    pub fn zero(lat: &Lattice) -> Self {
        FourierPotential {
            lattice: lat.clone(),
            coeffs: BTreeMap::new(),
            real: true,
        }
    }

    /// `2 amp cos(G_n . x)`, i.e. coefficients `amp` at `+n` and `-n`.
    pub fn cosine(lat: &Lattice, n: &[i32], amp: f64) -> Result<Self> {
        let m: Vec<i32> = n.iter().map(|x| -x).collect();
        Self::new(
            lat,
            [(n.to_vec(), C64::new(amp, 0.0)), (m, C64::new(amp, 0.0))],
            true,
        )
    }

    fn check_realness(&self) -> Result<()> {
        for (n, &v) in &self.coeffs {
            let m: Vec<i32> = n.iter().map(|x| -x).collect();
            let partner = self.coeff(&m);
            if (partner - v.conj()).norm() > REAL_TOL * v.norm().max(1.0) {
                return Err(Error::RealnessViolation {
                    n: m,
                    partner: format!("{partner}"),
                    expected: format!("{}", v.conj()),
                });
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeff(&self, n: &[i32]) -> C64 {
        self.coeffs.get(n).copied().unwrap_or_default()
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<i32>, &C64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn value_at(&self, x: &[f64]) -> C64 {
        let mut acc = C64::default();
        for (n, &v) in &self.coeffs {
            let g = self.lattice.dual_point(n);
            let phase: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += v * C64::from_polar(1.0, phase);
        }
        acc
    }

    /// Gradient `sum_n i G_n V(n) exp(i G_n . x)`.
    pub fn gradient_at(&self, x: &[f64]) -> Vec<C64> {
        let d = self.lattice.dim();
        let mut acc = vec![C64::default(); d];
        for (n, &v) in &self.coeffs {
            let g = self.lattice.dual_point(n);
            let phase: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
            let e = v * C64::from_polar(1.0, phase) * C64::i();
            for c in 0..d {
                acc[c] += e * g[c];
            }
        }
        acc
    }

    /// Pointwise values `V(x)`; imaginary parts vanish for real potentials.
    pub fn sample(&self, points: &[Vec<f64>]) -> Vec<C64> {
        points.iter().map(|x| self.value_at(x)).collect()
    }

    /// Largest `|n_j|` over stored coefficients.
    pub fn max_order(&self) -> i32 {
        self.coeffs
            .keys()
            .flat_map(|n| n.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    fn combine(parts: &[(&FourierPotential, C64)], real: bool) -> Result<FourierPotential> {
        let lat = parts[0].0.lattice.clone();
        let mut coeffs: BTreeMap<Vec<i32>, C64> = BTreeMap::new();
        for (p, w) in parts {
            for (n, &v) in &p.coeffs {
                *coeffs.entry(n.clone()).or_default() += v * *w;
            }
        }
        FourierPotential::new(&lat, coeffs, real)
    }
}

/// Coefficient interpolation rule of a pump path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    /// Piecewise linear between bracketing snapshots.
    Linear,
    /// Trigonometric interpolation through equally spaced snapshots of a cyclic path.
    Trigonometric,
}

/// Time-keyed potentials `V(t)` for `t in [0, T]`.
#[derive(Clone, Debug)]
pub struct PumpPath {
    times: Vec<f64>,
    snapshots: Vec<FourierPotential>,
    cyclic: bool,
    occupied: usize,
    interpolation: Interpolation,
    real: bool,
    // per coefficient: (frequency, amplitude) pairs in units of 1/T
    spectra: BTreeMap<Vec<i32>, Vec<(f64, C64)>>,
}

impl PumpPath {
    pub fn new(
        times: Vec<f64>,
        snapshots: Vec<FourierPotential>,
        cyclic: bool,
        occupied: usize,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if times.len() != snapshots.len() || times.len() < 2 {
            return Err(Error::InvalidInput(
                "a pump path needs at least two snapshots and one time per snapshot".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput("pump path must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("snapshot times must increase strictly".into()));
        }
        if occupied == 0 {
            return Err(Error::InvalidInput("at least one occupied band is required".into()));
        }
        let lat = snapshots[0].lattice().clone();
        if snapshots.iter().any(|s| *s.lattice() != lat) {
            return Err(Error::InvalidInput("all snapshots must share one lattice".into()));
        }
        if cyclic {
            let (first, last) = (&snapshots[0], snapshots.last().unwrap());
            let keys: std::collections::BTreeSet<&Vec<i32>> =
                first.coeffs.keys().chain(last.coeffs.keys()).collect();
            for n in keys {
                if (first.coeff(n) - last.coeff(n)).norm() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "cyclic path: final snapshot differs from the first at {n:?}"
                    )));
                }
            }
        }
        let real = snapshots.iter().all(|s| s.is_real());
        let mut path = PumpPath {
            times,
            snapshots,
            cyclic,
            occupied,
            interpolation,
            real,
            spectra: BTreeMap::new(),
        };
        if interpolation == Interpolation::Trigonometric {
            path.build_spectra()?;
        }
        Ok(path)
    }

    fn build_spectra(&mut self) -> Result<()> {
        if !self.cyclic {
            return Err(Error::InvalidInput(
                "trigonometric interpolation needs a cyclic path".into(),
            ));
        }
        let m = self.times.len() - 1;
        let period = self.period();
        for (j, &t) in self.times.iter().enumerate() {
            if (t - period * j as f64 / m as f64).abs() > 1e-12 * period {
                return Err(Error::InvalidInput(
                    "trigonometric interpolation needs equally spaced snapshot times".into(),
                ));
            }
        }
        let keys: std::collections::BTreeSet<Vec<i32>> = self
            .snapshots
            .iter()
            .flat_map(|s| s.coeffs.keys().cloned())
            .collect();
        for n in keys {
            let vals: Vec<C64> = self.snapshots[..m].iter().map(|s| s.coeff(&n)).collect();
            let mut terms = Vec::new();
            let half = m as i64 / 2;
            for q in -(m as i64 - 1) / 2..=half {
                let mut c = C64::default();
                for (j, v) in vals.iter().enumerate() {
                    c += v * C64::from_polar(1.0, -2.0 * PI * (q * j as i64) as f64 / m as f64);
                }
                c /= m as f64;
                if m % 2 == 0 && q == half {
                    terms.push((q as f64, c * 0.5));
                    terms.push((-(q as f64), c * 0.5));
                } else {
                    terms.push((q as f64, c));
                }
            }
            self.spectra.insert(n, terms);
        }
        Ok(())
    }

    /// Static path: the same potential at every time.
    pub fn constant(v: &FourierPotential, period: f64, occupied: usize) -> Result<Self> {
        PumpPath::new(
            vec![0.0, period],
            vec![v.clone(), v.clone()],
            true,
            occupied,
            Interpolation::Linear,
        )
    }

    /// One-dimensional sliding cosine `2 amp cos(gamma* x - theta(t))` along the
    /// first dual vector. Without `ramp`, `theta = 2 pi t/T`; with it,
    /// `theta = 2 pi (tau - sin(2 pi tau)/(2 pi))`, `tau = t/T`, which has
    /// vanishing velocity at both ends of the cycle.
    pub fn sliding_cosine(
        lat: &Lattice,
        amp: f64,
        snapshots: usize,
        period: f64,
        ramp: bool,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if snapshots < 2 {
            return Err(Error::InvalidInput("need at least two snapshots".into()));
        }
        let mut n = vec![0; lat.dim()];
        n[0] = 1;
        let m: Vec<i32> = n.iter().map(|x| -x).collect();
        let mut times = Vec::new();
        let mut snaps = Vec::new();
        for j in 0..=snapshots {
            let tau = j as f64 / snapshots as f64;
            let theta = if j == snapshots {
                0.0
            } else if ramp {
                2.0 * PI * tau - (2.0 * PI * tau).sin()
            } else {
                2.0 * PI * tau
            };
            let c = C64::from_polar(amp, -theta);
            times.push(period * tau);
            snaps.push(FourierPotential::new(
                lat,
                [(n.clone(), c), (m.clone(), c.conj())],
                true,
            )?);
        }
        PumpPath::new(times, snaps, true, 1, interpolation)
    }

    /// Path traversed backwards, `t -> T - t`.
    pub fn reversed(&self) -> Result<Self> {
        let period = self.period();
        let times = self.times.iter().rev().map(|t| period - t).collect();
        let snaps = self.snapshots.iter().rev().cloned().collect();
        PumpPath::new(times, snaps, self.cyclic, self.occupied, self.interpolation)
    }

    pub fn lattice(&self) -> &Lattice {
        self.snapshots[0].lattice()
    }

    pub fn period(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[FourierPotential] {
        &self.snapshots
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let period = self.period();
        if !(t >= 0.0 && t <= period) {
            return Err(Error::TimeOutOfRange { t, period });
        }
        Ok(())
    }

    /// Snapshot segment containing `t`; nodes belong to the segment on their right.
    fn segment(&self, t: f64) -> usize {
        let last = self.times.len() - 2;
        match self.times.iter().position(|&x| x > t) {
            Some(0) => 0,
            Some(i) => (i - 1).min(last),
            None => last,
        }
    }

    pub fn potential_at_time(&self, t: f64) -> Result<FourierPotential> {
        self.check_time(t)?;
        match self.interpolation {
            Interpolation::Linear => {
                let m = self.segment(t);
                let (t0, t1) = (self.times[m], self.times[m + 1]);
                let w = (t - t0) / (t1 - t0);
                if w == 0.0 {
                    return Ok(self.snapshots[m].clone());
                }
                if w == 1.0 {
                    return Ok(self.snapshots[m + 1].clone());
                }
                FourierPotential::combine(
                    &[
                        (&self.snapshots[m], C64::new(1.0 - w, 0.0)),
                        (&self.snapshots[m + 1], C64::new(w, 0.0)),
                    ],
                    self.real,
                )
            }
            Interpolation::Trigonometric => self.spectral_eval(t, false),
        }
    }

    /// Coefficient-wise time derivative `dV/dt`.
    pub fn derivative_at_time(&self, t: f64) -> Result<FourierPotential> {
        self.check_time(t)?;
        match self.interpolation {
            Interpolation::Linear => {
                let m = self.segment(t);
                let dt = self.times[m + 1] - self.times[m];
                FourierPotential::combine(
                    &[
                        (&self.snapshots[m], C64::new(-1.0 / dt, 0.0)),
                        (&self.snapshots[m + 1], C64::new(1.0 / dt, 0.0)),
                    ],
                    self.real,
                )
            }
            Interpolation::Trigonometric => self.spectral_eval(t, true),
        }
    }

    fn spectral_eval(&self, t: f64, derivative: bool) -> Result<FourierPotential> {
        let period = self.period();
        let tau = t / period;
        let mut entries = Vec::with_capacity(self.spectra.len());
        for (n, terms) in &self.spectra {
            let mut c = C64::default();
            for &(f, a) in terms {
                let e = a * C64::from_polar(1.0, 2.0 * PI * f * tau);
                c += if derivative {
                    e * C64::new(0.0, 2.0 * PI * f / period)
                } else {
                    e
                };
            }
            entries.push((n.clone(), c));
        }
        FourierPotential::new(self.lattice(), entries, self.real)
    }
}
