use super::fields::ExternalFields;
use super::semiclassics::{integrate_semiclassics, BandModel, Order, SemiclassicalState, Trajectory};
use super::split_step::{split_step_propagate, Propagation};
use super::wavepacket::{band_wavepacket, Envelope};
use crate::fiber::{BandData, RealSpaceBox};
use crate::geometry::BlochFrame;
use crate::lattice::Lattice;
use crate::potential::FourierPotential;
use crate::{Error, Result};

/// Largest deviations of the propagated packet center from a trajectory,
/// positions in macroscopic units.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterErrors {
    pub position: f64,
    pub momentum: f64,
    /// Position deviation at every sample.
    pub position_series: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sup_s |eps <x>(s) - r(s)|` and `sup_s |<k>(s) - k(s)|` (momentum
/// difference reduced to the zone) over samples with matching `s`.
pub fn compare_centers(full: &Propagation, sc: &Trajectory, lat: &Lattice) -> Result<CenterErrors> {
    if full.samples.len() != sc.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} propagation samples against {} trajectory samples",
            full.samples.len(),
            sc.len()
        )));
    }
    let eps = full.epsilon;
    let mut position = 0.0f64;
    let mut momentum = 0.0f64;
    let mut series = Vec::with_capacity(sc.len());
    for (i, o) in full.samples.iter().enumerate() {
        if (o.s - sc.s[i]).abs() > 1e-9 * (1.0 + o.s.abs()) {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} at s = {} against s = {}",
                o.s, sc.s[i]
            )));
        }
        let dr: Vec<f64> = o
            .mean_x
            .iter()
            .zip(&sc.position[i])
            .map(|(x, r)| eps * x - r)
            .collect();
        let dk: Vec<f64> = o.mean_k.iter().zip(&sc.k[i]).map(|(a, b)| a - b).collect();
        let e = norm(&dr);
        series.push(e);
        position = position.max(e);
        momentum = momentum.max(norm(&lat.reduce_to_bz(&dk)));
    }
    Ok(CenterErrors {
        position,
        momentum,
        position_series: series,
    })
}

/// Least-squares slope of `log error` against `log eps`.
pub fn fit_order(epsilons: &[f64], errors: &[f64]) -> Result<f64> {
    if epsilons.len() != errors.len() || epsilons.len() < 2 {
        return Err(Error::ShapeMismatch(
            "need at least two matching (eps, error) pairs".into(),
        ));
    }
    if epsilons.iter().chain(errors).any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidInput("errors and eps must be positive".into()));
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Discretization of a packet-versus-semiclassics run.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub per_cell: Vec<usize>,
    /// Largest allowed propagation step.
    pub dt: f64,
    /// Spacing of the compared samples in `s`.
    pub sample_ds: f64,
    /// Integrator steps per sample.
    pub substeps: usize,
    pub horizon: f64,
    /// Envelope width is `width_factor * sqrt(eps) * |first dual vector|`.
    pub width_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            per_cell: vec![16],
            dt: 0.02,
            sample_ds: 1.0 / 64.0,
            substeps: 4,
            horizon: 1.0,
            width_factor: 0.3,
        }
    }
}

/// One value of eps in a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub purity: f64,
    pub propagation: Propagation,
    pub zeroth: Trajectory,
    pub first: Option<Trajectory>,
    pub error_zeroth: CenterErrors,
    pub error_first: Option<CenterErrors>,
}

/// Builds a band packet centered at `(x_c, k0)` with the envelope center
/// `eps x_c` as canonical start, propagates it, and compares with the
/// order-zero (and, when the model carries geometry, order-one) flow.
/// The box has as many cells as the band grid.
#[allow(clippy::too_many_arguments)]
pub fn run_comparison(
    bd: &BandData,
    frame: &BlochFrame,
    model: &BandModel,
    v: &FourierPotential,
    fields: &ExternalFields,
    k0: &[f64],
    x_c: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepPoint> {
    let lat = bd.grid().lattice();
    let eps = fields.epsilon();
    let bx = RealSpaceBox::new(lat, bd.grid().sizes(), &cfg.per_cell)?;
    let env = Envelope {
        center_k: k0.to_vec(),
        width: cfg.width_factor * eps.sqrt() * norm(&lat.dual_basis()[0]),
        center_x: x_c.to_vec(),
    };
    let packet = band_wavepacket(&env, frame, bd, &bx)?;

    let n_samples = (cfg.horizon / cfg.sample_ds).round() as usize;
    let dt_sample = cfg.sample_ds / eps;
    let per_sample = (dt_sample / cfg.dt).ceil().max(1.0) as usize;
    let dt = dt_sample / per_sample as f64;
    let propagation = split_step_propagate(&packet, v, fields, dt, per_sample * n_samples, per_sample)?;

    let start = SemiclassicalState {
        r: x_c.iter().map(|x| eps * x).collect(),
        k: k0.to_vec(),
        band: model.band(),
    };
    let ds = cfg.sample_ds / cfg.substeps as f64;
    let steps = cfg.substeps * n_samples;
    let zeroth = integrate_semiclassics(model, fields, &start, Order::Zeroth, ds, steps, cfg.substeps)?;
    let error_zeroth = compare_centers(&propagation, &zeroth, lat)?;
    let (first, error_first) = if model.has_geometry() {
        let t = integrate_semiclassics(model, fields, &start, Order::First, ds, steps, cfg.substeps)?;
        let e = compare_centers(&propagation, &t, lat)?;
        (Some(t), Some(e))
    } else {
        (None, None)
    };
    Ok(SweepPoint {
        epsilon: eps,
        purity: packet.purity,
        propagation,
        zeroth,
        first,
        error_zeroth,
        error_first,
    })
}
