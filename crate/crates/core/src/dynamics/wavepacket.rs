use crate::fiber::{bloch_function, zak_forward, zak_inverse, BandData, FiberData, RealSpaceBox};
use crate::geometry::{BlochFrame, Gauge};
use crate::{Error, Result, C64};

/// Packet weight allowed in the outer layer of the box.
pub const EDGE_WEIGHT_TOL: f64 = 1e-6;

/// Periodized Gaussian envelope
/// `f(k) = sum_G exp(-|k + G - k0|^2 / (4 sigma^2)) exp(-i (k + G).x_c)`,
/// the Brillouin-zone image of a Gaussian of lattice-site amplitudes
/// centered at `x_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub center_k: Vec<f64>,
    pub width: f64,
    pub center_x: Vec<f64>,
}

impl Envelope {
    pub fn value(&self, lat: &crate::Lattice, k: &[f64]) -> C64 {
        let d = lat.dim();
        let diff: Vec<f64> = k.iter().zip(&self.center_k).map(|(a, b)| a - b).collect();
        let dk = lat.reduce_to_bz(&diff);
        let images = 7usize.pow(d as u32);
        let mut acc = C64::default();
        for i in 0..images {
            let n: Vec<i32> = crate::lattice::unflatten(i, &vec![7; d])
                .iter()
                .map(|&m| m as i32 - 3)
                .collect();
            let g = lat.dual_point(&n);
            let kappa: Vec<f64> = (0..d).map(|j| self.center_k[j] + dk[j] + g[j]).collect();
            let d2: f64 = (0..d).map(|j| (dk[j] + g[j]).powi(2)).sum();
            let ph: f64 = kappa.iter().zip(&self.center_x).map(|(a, b)| a * b).sum();
            acc += C64::from_polar((-d2 / (4.0 * self.width * self.width)).exp(), -ph);
        }
        acc
    }
}

/// Wave function on a [`RealSpaceBox`], normalized as a vector.
#[derive(Clone, Debug)]
pub struct WavePacket {
    pub bx: RealSpaceBox,
    pub psi: Vec<C64>,
    /// Weight in the target band, `<psi, P_n psi>`.
    pub purity: f64,
}

impl WavePacket {
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<x>` from the sampled density.
    pub fn mean_position(&self) -> Vec<f64> {
        let d = self.bx.lattice().dim();
        let mut out = vec![0.0; d];
        let mut w = 0.0;
        for (i, z) in self.psi.iter().enumerate() {
            let p = z.norm_sqr();
            w += p;
            for (o, x) in out.iter_mut().zip(self.bx.position(i)) {
                *o += p * x;
            }
        }
        out.iter().map(|x| x / w).collect()
    }
}

/// Weight of `psi` within one cell of the box faces.
pub fn edge_weight(bx: &RealSpaceBox, psi: &[C64]) -> f64 {
    let shape = bx.shape();
    let layer: Vec<usize> = bx.cells().iter().zip(bx.per_cell()).map(|(c, p)| p * (c / 16).max(1)).collect();
    let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let mut edge = 0.0;
    for (i, z) in psi.iter().enumerate() {
        let m = crate::lattice::unflatten(i, &shape);
        if m.iter().zip(&shape).zip(&layer).any(|((&m, &n), &l)| m < l || m + l >= n) {
            edge += z.norm_sqr();
        }
    }
    edge / total
}

/// Packet `psi = zak_inverse(f(k) u_n(k, .))` of the single band held by a
/// gauge-fixed frame on the grid of `bd`.
pub fn band_wavepacket(
    envelope: &Envelope,
    frame: &BlochFrame,
    bd: &BandData,
    bx: &RealSpaceBox,
) -> Result<WavePacket> {
    if *frame.gauge() == Gauge::Raw {
        return Err(Error::RawGauge);
    }
    if bd.spin_orbit() {
        return Err(Error::Unsupported("wave packets of spinor bands".into()));
    }
    let grid = bd.grid();
    if frame.rank() != 1 || frame.sizes() != grid.sizes() {
        return Err(Error::ShapeMismatch(
            "frame must hold one band on the band-structure grid".into(),
        ));
    }
    let lat = grid.lattice();
    let d = lat.dim();
    if envelope.center_k.len() != d || envelope.center_x.len() != d {
        return Err(Error::ShapeMismatch("envelope dimension differs from the lattice".into()));
    }
    if !(envelope.width > 0.0) {
        return Err(Error::InvalidInput("envelope width must be positive".into()));
    }
    for n in bd.basis().indices() {
        for (nj, &p) in n.iter().zip(bx.per_cell()) {
            if 2 * nj.unsigned_abs() as usize >= p {
                return Err(Error::Incommensurate(format!(
                    "plane wave {n:?} is not resolved by {p} points per cell"
                )));
            }
        }
    }

    let amp: Vec<C64> = grid.points().iter().map(|k| envelope.value(lat, k)).collect();

    let u: Vec<Vec<C64>> = (0..grid.len())
        .map(|i| {
            let c: Vec<C64> = frame.columns(i).column(0).iter().copied().collect();
            bloch_function(bd.basis(), &c, bx)
        })
        .collect();
    let data = FiberData {
        values: u
            .iter()
            .zip(&amp)
            .map(|(ui, a)| ui.iter().map(|z| z * a).collect())
            .collect(),
    };
    let mut psi = zak_inverse(&data, bx, grid)?;
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in psi.iter_mut() {
        *z /= norm;
    }
    let edge = edge_weight(bx, &psi);
    if edge > EDGE_WEIGHT_TOL {
        return Err(Error::BoundaryContact { t: 0.0, weight: edge });
    }
    let back = zak_forward(&psi, bx, grid)?;
    let purity = back
        .values
        .iter()
        .zip(&u)
        .map(|(phi, ui)| {
            ui.iter()
                .zip(phi)
                .map(|(a, b)| a.conj() * b)
                .sum::<C64>()
                .norm_sqr()
        })
        .sum();
    Ok(WavePacket {
        bx: bx.clone(),
        psi,
        purity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{band_structure, PlaneWaveBasis};
    use crate::geometry::fix_gauge;
    use crate::lattice::{KGrid, Lattice};
    use crate::potential::FourierPotential;
    use std::f64::consts::PI;

    fn setup(cells: usize) -> (BandData, BlochFrame, RealSpaceBox) {
        let lat = Lattice::cubic(1, 2.0 * PI).unwrap();
        let v = FourierPotential::cosine(&lat, &[1], 2.0).unwrap();
        let basis = PlaneWaveBasis::new(&lat, 5.5).unwrap();
        let grid = KGrid::new(&lat, &[cells]).unwrap();
        let bd = band_structure(&v, &grid, &basis, 3, false).unwrap();
        let frame = fix_gauge(&BlochFrame::from_bands(&bd, 0, 0).unwrap()).unwrap();
        let bx = RealSpaceBox::new(&lat, &[cells], &[16]).unwrap();
        (bd, frame, bx)
    }

    #[test]
    fn gaussian_packet_is_pure_and_centered() {
        let (bd, frame, bx) = setup(64);
        let env = Envelope {
            center_k: vec![0.1],
            width: 0.1,
            center_x: vec![3.0],
        };
        let wp = band_wavepacket(&env, &frame, &bd, &bx).unwrap();
        assert!((wp.norm() - 1.0).abs() < 1e-12);
        assert!(wp.purity > 1.0 - 1e-6, "purity {}", wp.purity);
        let a = 2.0 * PI;
        assert!((wp.mean_position()[0] - 3.0).abs() < a);
    }

    #[test]
    fn single_k_envelope_is_delocalized() {
        let (bd, frame, bx) = setup(16);
        let env = Envelope {
            center_k: vec![0.0],
            width: 1e-3,
            center_x: vec![0.0],
        };
        // a Bloch wave fills the box, so it touches the boundary
        assert!(matches!(
            band_wavepacket(&env, &frame, &bd, &bx),
            Err(Error::BoundaryContact { .. })
        ));
    }
}
