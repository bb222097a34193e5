//! Harper operators at rational flux `alpha = p/q`.
//!
//! A biperiodic symbol `h(K1, K2) = sum_n h(n) exp(i(n1 K1 + n2 K2))` is
//! quantized with `[K1, K2] = 2 pi i alpha` on the q-dimensional magnetic
//! Bloch fiber: `exp(iK2) = diag(exp(i(kappa2 + 2 pi alpha m)))`,
//! `exp(iK1)` is the cyclic shift `e_m -> e_{m+1}` with phase
//! `exp(i q kappa1)` on `e_{q-1} -> e_0`, and mixed monomials are Weyl
//! ordered, `exp(i(n1 K1 + n2 K2)) = exp(i pi alpha n1 n2) exp(i n1 K1) exp(i n2 K2)`.
//! The magnetic zone is `kappa1 in [0, 2pi/q)`, `kappa2 in [0, 2pi)`.

use crate::fiber::GAP_TOL;
use crate::geometry::{berry_curvature, chern_number, BlochFrame, Wrap};
use crate::linalg;
use crate::potential::FourierPotential;
use crate::{CMatrix, Error, Result, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Band ranges overlapping by less than this stay separate intervals.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Flux {
    p: i64,
    q: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Flux {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if q < 1 {
            return Err(Error::InvalidInput(format!("flux denominator must be positive (got {q})")));
        }
        if gcd(p, q) != 1 {
            return Err(Error::InvalidInput(format!("flux {p}/{q} is not reduced")));
        }
        let ok = if q == 1 { p == 0 || p == 1 } else { (0..q).contains(&p) };
        if !ok {
            return Err(Error::InvalidInput(format!("flux numerator {p} out of range for q = {q}")));
        }
        Ok(Flux { p, q })
    }

    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

/// All reduced `p/q` in `[0, 1)` with `q <= q_max`, ascending in `p/q`.
pub fn farey_fluxes(q_max: i64) -> Vec<Flux> {
    let mut out = Vec::new();
    for q in 1..=q_max.max(1) {
        for p in 0..q {
            if gcd(p, q) == 1 {
                out.push(Flux { p, q });
            }
        }
    }
    out.sort_by(|a, b| (a.p * b.q).cmp(&(b.p * a.q)));
    out
}

#[derive(Clone, Debug)]
pub struct HarperModel {
    flux: Flux,
    symbol: Vec<([i32; 2], C64)>,
}

impl HarperModel {
    pub fn new(flux: Flux, symbol: &[([i32; 2], C64)]) -> Result<Self> {
        for (n, c) in symbol {
            let partner: C64 = symbol
                .iter()
                .filter(|(m, _)| m[0] == -n[0] && m[1] == -n[1])
                .map(|(_, v)| *v)
                .sum();
            if (partner - c.conj()).norm() > 1e-12 * c.norm().max(1.0) {
                return Err(Error::RealnessViolation {
                    n: vec![-n[0], -n[1]],
                    partner: format!("{partner}"),
                    expected: format!("{}", c.conj()),
                });
            }
        }
        Ok(HarperModel {
            flux,
            symbol: symbol.to_vec(),
        })
    }

    pub fn flux(&self) -> Flux {
        self.flux
    }

    pub fn symbol(&self) -> &[([i32; 2], C64)] {
        &self.symbol
    }
}

/// `2 cos K1 + 2 cos K2`.
pub fn square_symbol() -> Vec<([i32; 2], C64)> {
    let one = C64::new(1.0, 0.0);
    vec![([1, 0], one), ([-1, 0], one), ([0, 1], one), ([0, -1], one)]
}

fn shift_matrix(q: usize, phase: C64, link: usize) -> CMatrix {
    let mut s = CMatrix::zeros(q, q);
    for m in 0..q {
        let to = (m + 1) % q;
        s[(to, m)] = if m == link { phase } else { C64::new(1.0, 0.0) };
    }
    s
}

fn matrix_power(m: &CMatrix, n: i32) -> CMatrix {
    let base = if n < 0 { m.adjoint() } else { m.clone() };
    let mut out = CMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..n.unsigned_abs() {
        out = &out * &base;
    }
    out
}

pub fn harper_matrix(model: &HarperModel, kappa: [f64; 2]) -> CMatrix {
    let q = model.flux.q as usize;
    harper_matrix_with_boundary(model, kappa, q - 1)
}

/// Harper matrix with the boundary phase `exp(i q kappa1)` placed on the
/// shift link `e_link -> e_{link+1}`; all placements are unitarily equivalent.
pub fn harper_matrix_with_boundary(model: &HarperModel, kappa: [f64; 2], link: usize) -> CMatrix {
    let q = model.flux.q as usize;
    let alpha = model.flux.alpha();
    let s = shift_matrix(q, C64::from_polar(1.0, q as f64 * kappa[0]), link % q);
    let dvals: Vec<C64> = (0..q)
        .map(|m| C64::from_polar(1.0, kappa[1] + 2.0 * PI * alpha * m as f64))
        .collect();
    let mut h = CMatrix::zeros(q, q);
    for (n, c) in &model.symbol {
        let sn = matrix_power(&s, n[0]);
        let weyl = C64::from_polar(1.0, PI * alpha * (n[0] * n[1]) as f64);
        for col in 0..q {
            let dn = dvals[col].powi(n[1]);
            for row in 0..q {
                h[(row, col)] += c * weyl * sn[(row, col)] * dn;
            }
        }
    }
    h
}

/// Point `(i, j)` of an `n1 x n2` grid over the magnetic zone.
fn kappa_at(q: i64, sizes: [usize; 2], i: usize, j: usize) -> [f64; 2] {
    [
        2.0 * PI * i as f64 / (q as f64 * sizes[0] as f64),
        2.0 * PI * j as f64 / sizes[1] as f64,
    ]
}

fn solve_grid(model: &HarperModel, sizes: [usize; 2]) -> Result<Vec<(Vec<f64>, CMatrix)>> {
    let q = model.flux.q;
    (0..sizes[0] * sizes[1])
        .into_par_iter()
        .map(|idx| {
            let kappa = kappa_at(q, sizes, idx / sizes[1], idx % sizes[1]);
            let h = harper_matrix(model, kappa);
            linalg::eigh(&h).ok_or_else(|| Error::Eigensolver {
                k: kappa.to_vec(),
                size: q as usize,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FluxSpectrum {
    pub flux: Flux,
    /// Range of each magnetic band over the grid.
    pub bands: Vec<(f64, f64)>,
    /// Union of band ranges as disjoint closed intervals.
    pub intervals: Vec<(f64, f64)>,
}

fn merge(bands: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in sorted {
        match out.last_mut() {
            Some(last) if lo < last.1 - MERGE_TOL => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

pub fn flux_spectrum(
    symbol: &[([i32; 2], C64)],
    flux: Flux,
    sizes: [usize; 2],
) -> Result<FluxSpectrum> {
    if sizes[0] == 0 || sizes[1] == 0 {
        return Err(Error::InvalidInput("magnetic grid sizes must be positive".into()));
    }
    let model = HarperModel::new(flux, symbol)?;
    let solved = solve_grid(&model, sizes)?;
    let q = flux.q as usize;
    let bands: Vec<(f64, f64)> = (0..q)
        .map(|r| {
            solved.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (e, _)| {
                (lo.min(e[r]), hi.max(e[r]))
            })
        })
        .collect();
    let intervals = merge(&bands);
    Ok(FluxSpectrum {
        flux,
        bands,
        intervals,
    })
}

/// Spectra for every reduced flux with denominator up to `q_max`.
pub fn butterfly_scan(
    symbol: &[([i32; 2], C64)],
    q_max: i64,
    sizes: [usize; 2],
) -> Result<Vec<FluxSpectrum>> {
    if q_max < 1 {
        return Err(Error::InvalidInput("q_max must be at least 1".into()));
    }
    farey_fluxes(q_max)
        .into_par_iter()
        .map(|f| flux_spectrum(symbol, f, sizes))
        .collect()
}

/// Eigenvector field of magnetic band `r` over the magnetic zone, raw gauge.
pub fn magnetic_frame(
    symbol: &[([i32; 2], C64)],
    flux: Flux,
    band: usize,
    sizes: [usize; 2],
) -> Result<BlochFrame> {
    let q = flux.q as usize;
    if band >= q {
        return Err(Error::WindowOutOfRange {
            lo: band,
            hi: band,
            computed: q,
        });
    }
    let model = HarperModel::new(flux, symbol)?;
    let solved = solve_grid(&model, sizes)?;
    let mut gap = f64::INFINITY;
    let mut at = 0;
    for (idx, (e, _)) in solved.iter().enumerate() {
        let mut g = f64::INFINITY;
        if band + 1 < q {
            g = g.min(e[band + 1] - e[band]);
        }
        if band > 0 {
            g = g.min(e[band] - e[band - 1]);
        }
        if g < gap {
            gap = g;
            at = idx;
        }
    }
    if gap <= GAP_TOL {
        return Err(Error::Gapless {
            lo: band,
            hi: band,
            gap,
            k: kappa_at(flux.q, sizes, at / sizes[1], at % sizes[1]).to_vec(),
        });
    }
    let columns = solved
        .into_iter()
        .map(|(_, v)| v.columns(band, 1).into_owned())
        .collect();
    BlochFrame::new(
        sizes.to_vec(),
        vec![
            vec![2.0 * PI / (flux.q as f64 * sizes[0] as f64), 0.0],
            vec![0.0, 2.0 * PI / sizes[1] as f64],
        ],
        columns,
        vec![Wrap::Periodic, Wrap::Periodic],
        false,
        gap,
    )
}

/// Plaquette Chern number of magnetic band `r`.
pub fn magnetic_band_chern(
    symbol: &[([i32; 2], C64)],
    flux: Flux,
    band: usize,
    sizes: [usize; 2],
) -> Result<i64> {
    let frame = magnetic_frame(symbol, flux, band, sizes)?;
    chern_number(&berry_curvature(&frame)?)
}

/// Chern numbers of all magnetic bands of a flux, `None` for bands that
/// touch a neighbor.
pub fn magnetic_chern_numbers(
    symbol: &[([i32; 2], C64)],
    flux: Flux,
    sizes: [usize; 2],
) -> Result<Vec<Option<i64>>> {
    (0..flux.q as usize)
        .map(|r| match magnetic_band_chern(symbol, flux, r, sizes) {
            Ok(c) => Ok(Some(c)),
            Err(Error::Gapless { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct LandauSpectrum {
    /// Rational flux used for the quantization.
    pub flux: Flux,
    /// Flux implied by `eta` before rounding.
    pub alpha_exact: f64,
    /// Circular distance between `alpha_exact` and `flux`.
    pub approximation_error: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Leading-order spectrum of Landau level `level` broadened by a weak
/// periodic potential: `(level + 1/2) + eta * spec(Harper(V))` with flux
/// `alpha = -eta det(dual basis) / (2 pi)`, rounded to the nearest
/// fraction with denominator at most `q_max`.
pub fn landau_effective_spectrum(
    v: &FourierPotential,
    eta: f64,
    level: u32,
    sizes: [usize; 2],
    q_max: i64,
) -> Result<LandauSpectrum> {
    let lat = v.lattice();
    if lat.dim() != 2 {
        return Err(Error::Unsupported("Landau regime needs a two-dimensional lattice".into()));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput("eta must be positive".into()));
    }
    let dual = lat.dual_basis();
    let det = dual[0][0] * dual[1][1] - dual[0][1] * dual[1][0];
    let raw = -eta * det / (2.0 * PI);
    let alpha_exact = raw - raw.floor();
    let circ = |a: f64, b: f64| {
        let d = (a - b).abs();
        d.min(1.0 - d)
    };
    let flux = farey_fluxes(q_max)
        .into_iter()
        .min_by(|a, b| {
            circ(alpha_exact, a.alpha())
                .total_cmp(&circ(alpha_exact, b.alpha()))
                .then(a.q.cmp(&b.q))
        })
        .expect("farey list is never empty");
    let symbol: Vec<([i32; 2], C64)> = v.coeffs().map(|(n, c)| ([n[0], n[1]], *c)).collect();
    let offset = level as f64 + 0.5;
    let intervals = if symbol.is_empty() {
        vec![(offset, offset)]
    } else {
        flux_spectrum(&symbol, flux, sizes)?
            .intervals
            .into_iter()
            .map(|(lo, hi)| (offset + eta * lo, offset + eta * hi))
            .collect()
    };
    Ok(LandauSpectrum {
        flux,
        alpha_exact,
        approximation_error: circ(alpha_exact, flux.alpha()),
        intervals,
    })
}
