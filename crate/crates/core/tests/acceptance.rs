//! Acceptance checks. One line per criterion; exits nonzero if any fails.

use bloch_core::dynamics::*;
use bloch_core::fiber::{band_structure, check_gap, PlaneWaveBasis};
use bloch_core::geometry::{berry_curvature, fix_gauge, wilson_loop_phases, wrap_phase, BerryField, BlochFrame};
use bloch_core::magnetic::{butterfly_scan, magnetic_chern_numbers, square_symbol, Flux, FluxSpectrum};
use bloch_core::pump::*;
use bloch_core::*;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

// ---------------------------------------------------------------- 1

fn free_particle() -> Result<Outcome> {
    let lat = Lattice::cubic(1, 2.0 * PI)?;
    let basis = PlaneWaveBasis::new(&lat, 5.5)?;
    let grid = KGrid::new(&lat, &[32])?;
    let n = basis.len();
    let bd = band_structure(&FourierPotential::zero(&lat), &grid, &basis, n, false)?;
    let mut err = 0.0f64;
    for (i, k) in grid.points().iter().enumerate() {
        let mut exact: Vec<f64> = (-5..=5).map(|g| 0.5 * (k[0] + g as f64).powi(2)).collect();
        exact.sort_by(f64::total_cmp);
        for (e, x) in bd.energies(i).iter().zip(&exact) {
            err = err.max((e - x).abs());
        }
    }
    outcome(n == 11 && err < 1e-12, format!("{n} plane waves, max |E - |k+G|^2/2| = {err:.2e} (tol 1e-12)"))
}

// ---------------------------------------------------------------- 2

fn max_pair_split(e: &[f64]) -> f64 {
    e.chunks(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max)
}

fn kramers() -> Result<Outcome> {
    let lat = Lattice::cubic(1, 2.0 * PI)?;
    let basis = PlaneWaveBasis::new(&lat, 5.5)?;
    let grid = KGrid::new(&lat, &[32])?;
    let nb = 2 * basis.len();
    let even = FourierPotential::cosine(&lat, &[1], 1.0)?;
    let bd = band_structure(&even, &grid, &basis, nb, true)?;
    let split_all = (0..grid.len()).map(|i| max_pair_split(bd.energies(i))).fold(0.0, f64::max);
    // 2 cos x + 0.6 sin x
    let odd = FourierPotential::new(
        &lat,
        [(vec![1], C64::new(1.0, -0.3)), (vec![-1], C64::new(1.0, 0.3))],
        true,
    )?;
    let origin = KGrid::new(&lat, &[2])?;
    let k0 = origin
        .points()
        .iter()
        .position(|k| k[0].abs() < 1e-15)
        .expect("grid contains k = 0");
    let bd0 = band_structure(&odd, &origin, &basis, nb, true)?;
    let split_0 = max_pair_split(bd0.energies(k0));
    outcome(
        split_all < 1e-9 && split_0 < 1e-9,
        format!("max pair splitting {split_all:.2e} on 32 points, {split_0:.2e} at k = 0 with sin term (tol 1e-9)"),
    )
}

// ---------------------------------------------------------------- 3, 4

/// Real potential with two harmonics on an oblique lattice. Two harmonics
/// always admit an inversion center, so the curvature vanishes.
fn two_harmonic() -> Result<FourierPotential> {
    let lat = Lattice::new(&[vec![2.0 * PI, 0.0], vec![0.6 * PI, 1.8 * PI]])?;
    let c = C64::from_polar(0.45, 0.7);
    FourierPotential::new(
        &lat,
        [
            (vec![1, 0], C64::new(1.0, 0.0)),
            (vec![-1, 0], C64::new(1.0, 0.0)),
            (vec![1, 1], c),
            (vec![-1, -1], c.conj()),
        ],
        true,
    )
}

/// Adds a third harmonic that breaks inversion, so the curvature is nonzero.
fn three_harmonic() -> Result<FourierPotential> {
    let v = two_harmonic()?;
    let c = C64::from_polar(0.6, -0.4);
    FourierPotential::new(
        v.lattice(),
        v.coeffs()
            .map(|(n, z)| (n.clone(), *z))
            .chain([(vec![0, 1], c), (vec![0, -1], c.conj())]),
        true,
    )
}

fn lowest_band_frame(v: &FourierPotential, n: usize) -> Result<BlochFrame> {
    let lat = v.lattice().clone();
    let basis = PlaneWaveBasis::new(&lat, 7.5)?;
    let grid = KGrid::new(&lat, &[n, n])?;
    let bd = band_structure(v, &grid, &basis, 4, false)?;
    let gap = check_gap(&bd, 0, 0)?;
    if !gap.is_isolated() {
        return Err(Error::InvalidInput(format!("band 0 is not isolated, gap {}", gap.gap)));
    }
    BlochFrame::from_bands(&bd, 0, 0)
}

fn mirror_plaquette(i: usize, n: usize) -> usize {
    let (a, b) = (i / n, i % n);
    // plaquette [k, k + h] maps to [-k - h, -k]
    ((2 * n - a - 1) % n) * n + (2 * n - b - 1) % n
}

fn curvature_symmetry() -> Result<Outcome> {
    let n = 24;
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, v) in [("two harmonics", two_harmonic()?), ("three harmonics", three_harmonic()?)] {
        let field: BerryField = berry_curvature(&lowest_band_frame(&v, n)?)?.with_chern()?;
        let anti = (0..n * n)
            .map(|i| (field.curvature[i] + field.curvature[mirror_plaquette(i, n)]).abs())
            .fold(0.0, f64::max);
        let peak = field.curvature.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let c = field.chern.unwrap_or(i64::MAX);
        pass &= anti < 1e-8 && c == 0 && field.residual < 1e-9;
        parts.push(format!(
            "{label}: max |F(k) + F(-k)| = {anti:.2e} (peak |F| {peak:.2e}), C = {c}, residual {:.2e}",
            field.residual
        ));
    }
    outcome(pass, format!("{} (tol 1e-8, 1e-9)", parts.join("; ")))
}

fn gauge_invariance() -> Result<Outcome> {
    let frame = lowest_band_frame(&three_harmonic()?, 24)?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(17);
    let alpha: Vec<f64> = (0..frame.len()).map(|_| rng.gen_range(-PI..PI)).collect();
    let other = frame.rephased(&alpha)?;
    let f0 = berry_curvature(&frame)?.with_chern()?;
    let f1 = berry_curvature(&other)?.with_chern()?;
    let dcurv = f0
        .curvature
        .iter()
        .zip(&f1.curvature)
        .map(|(a, b)| wrap_phase(a - b).abs())
        .fold(0.0, f64::max);
    let dzak = wilson_loop_phases(&frame, 0)
        .iter()
        .zip(wilson_loop_phases(&other, 0))
        .chain(wilson_loop_phases(&frame, 1).iter().zip(wilson_loop_phases(&other, 1)))
        .map(|(a, b)| wrap_phase(a - b).abs())
        .fold(0.0, f64::max);
    let same_chern = f0.chern.is_some() && f0.chern == f1.chern;
    outcome(
        dcurv < 1e-12 && same_chern && dzak < 1e-10,
        format!(
            "curvature change {dcurv:.2e} (tol 1e-12), Chern {:?} -> {:?}, Zak change {dzak:.2e} (tol 1e-10)",
            f0.chern, f1.chern
        ),
    )
}

// ---------------------------------------------------------------- 5

/// Chern numbers of the `q` bands at flux `p/q` from `r = q s_r + p t_r`, `|t_r| <= q/2`.
fn tknn(p: i64, q: i64) -> Vec<i64> {
    let t: Vec<i64> = (0..=q)
        .map(|r| {
            if r == 0 || r == q {
                return 0;
            }
            (-q / 2..=q / 2)
                .find(|t| (r - p * t).rem_euclid(q) == 0)
                .expect("solvable")
        })
        .collect();
    (1..=q as usize).map(|r| t[r] - t[r - 1]).collect()
}

fn butterfly() -> Result<Outcome> {
    let scan: Vec<FluxSpectrum> = butterfly_scan(&square_symbol(), 12, [64, 64])?;
    let find = |p: i64, q: i64| scan.iter().find(|s| s.flux.p() == p && s.flux.q() == q);

    let half = find(1, 2).ok_or_else(|| Error::InvalidInput("flux 1/2 missing".into()))?;
    let r8 = 8f64.sqrt();
    let expect = [(-r8, 0.0), (0.0, r8)];
    let dhalf = half
        .bands
        .iter()
        .zip(expect)
        .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
        .fold(0.0, f64::max);

    let chern = magnetic_chern_numbers(&square_symbol(), Flux::new(1, 3)?, [64, 64])?;
    let oracle: Vec<Option<i64>> = tknn(1, 3).into_iter().map(Some).collect();

    let mut dsym = 0.0f64;
    let mut matched = true;
    for s in &scan {
        let (p, q) = (s.flux.p(), s.flux.q());
        if p == 0 {
            continue;
        }
        match find(q - p, q) {
            Some(m) if m.intervals.len() == s.intervals.len() => {
                for (a, b) in s.intervals.iter().zip(&m.intervals) {
                    dsym = dsym.max((a.0 - b.0).abs()).max((a.1 - b.1).abs());
                }
            }
            _ => matched = false,
        }
    }
    outcome(
        scan.len() == 46 && dhalf < 1e-6 && chern == oracle && matched && dsym < 1e-9,
        format!(
            "{} fluxes; flux 1/2 band edges off by {dhalf:.2e} (tol 1e-6); flux 1/3 Chern {:?}, oracle {:?}; p/q vs (q-p)/q intervals differ by {dsym:.2e} (tol 1e-9)",
            scan.len(),
            chern,
            oracle
        ),
    )
}

// ---------------------------------------------------------------- 6, 7

struct Chain1d {
    v: FourierPotential,
    bd: bloch_core::fiber::BandData,
    frame: BlochFrame,
    model: BandModel,
}

fn chain_1d() -> Result<Chain1d> {
    let lat = Lattice::cubic(1, 2.0 * PI)?;
    let v = FourierPotential::cosine(&lat, &[1], 1.0)?;
    let basis = PlaneWaveBasis::new(&lat, 6.5)?;
    let grid = KGrid::new(&lat, &[64])?;
    let bd = band_structure(&v, &grid, &basis, 3, false)?;
    let frame = fix_gauge(&BlochFrame::from_bands(&bd, 0, 0)?)?;
    let model = BandModel::from_frame(&bd, 0, &frame)?;
    Ok(Chain1d { v, bd, frame, model })
}

fn semiclassics_convergence() -> Result<Outcome> {
    let c = chain_1d()?;
    let eps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let cfg = SweepConfig::default();
    let mut e0 = Vec::new();
    let mut e1 = Vec::new();
    for &e in &eps {
        let fields = ExternalFields::constant_force(&[1.0], e)?;
        let p = run_comparison(&c.bd, &c.frame, &c.model, &c.v, &fields, &[0.0], &[0.0], &cfg)?;
        e0.push(p.error_zeroth.position);
        e1.push(p.error_first.map(|x| x.position).unwrap_or(f64::INFINITY));
    }
    let slope = fit_order(&eps, &e0)?;
    let better = e0.iter().zip(&e1).all(|(a, b)| b <= a);
    outcome(
        (slope - 1.0).abs() <= 0.3 && better,
        format!(
            "order-0 slope {slope:.3} (1.0 +- 0.3); order-0 errors {}; order-1 errors {}",
            fmt_list(&e0),
            fmt_list(&e1)
        ),
    )
}

fn bloch_oscillation() -> Result<Outcome> {
    let c = chain_1d()?;
    let cfg = SweepConfig {
        horizon: 3.0,
        sample_ds: 1.0 / 1024.0,
        ..Default::default()
    };
    let eps = 1.0 / 64.0;
    let fields = ExternalFields::constant_force(&[1.0], eps)?;
    let p = run_comparison(&c.bd, &c.frame, &c.model, &c.v, &fields, &[0.0], &[0.0], &cfg)?;
    // force 1 and a unit dual vector: one period per unit of s
    let x: Vec<(f64, f64)> = p
        .propagation
        .samples
        .iter()
        .map(|o| (o.s, eps * o.mean_x[0]))
        .collect();
    let means: Vec<f64> = (0..3)
        .map(|m| {
            let w: Vec<f64> = x
                .iter()
                .filter(|(s, _)| *s >= m as f64 && *s < (m + 1) as f64)
                .map(|(_, v)| *v)
                .collect();
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, v)| (a.min(*v), b.max(*v)));
    let amplitude = (hi - lo) / 2.0;
    let drift = means.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    outcome(
        amplitude > 0.0 && drift < 0.05 * amplitude,
        format!(
            "amplitude {amplitude:.4e}, largest drift of period means {drift:.2e} = {:.2e} of amplitude (tol 5e-2)",
            drift / amplitude
        ),
    )
}

// ---------------------------------------------------------------- 8, 9, 10

fn pump_setup() -> Result<(PumpPath, PlaneWaveBasis)> {
    let lat = Lattice::cubic(1, 2.0 * PI)?;
    let path = PumpPath::sliding_cosine(&lat, 1.0, 16, 1.0, true, Interpolation::Trigonometric)?;
    let basis = PlaneWaveBasis::new(&lat, 6.5)?;
    Ok((path, basis))
}

fn ksv_reference(path: &PumpPath, basis: &PlaneWaveBasis) -> Result<(f64, i64)> {
    let grid = KGrid::new(path.lattice(), &[32])?;
    let pf = snapshot_projectors(path, &grid, basis, 32)?;
    let dp = ksv_polarization(&theta_field(&pf, ThetaMethod::Perturbative)?).quanta[0];
    Ok((dp, pump_chern(&pf)?))
}

fn thouless() -> Result<Outcome> {
    let (path, basis) = pump_setup()?;
    let (dp, c) = ksv_reference(&path, &basis)?;
    outcome(
        (dp - c as f64).abs() < 1e-6 && c == 1,
        format!("dP_KSV = {dp:.12} quanta, pump Chern {c} (tol 1e-6, expected 1)"),
    )
}

fn pump_convergence() -> Result<Outcome> {
    let (path, basis) = pump_setup()?;
    let (ksv, _) = ksv_reference(&path, &basis)?;
    let grid = KGrid::new(path.lattice(), &[32])?;
    let eps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let mut dev = Vec::new();
    let mut drift = 0.0f64;
    for &e in &eps {
        let p = propagated_polarization(&path, &grid, &basis, e, 4096)?;
        dev.push((p.quanta[0] - ksv).abs());
        drift = drift.max(p.max_norm_drift);
    }
    let ratios: Vec<f64> = dev.windows(2).map(|w| w[0] / w[1]).collect();
    let v0 = path.potential_at_time(0.0)?;
    let stat = PumpPath::constant(&v0, 1.0, 1)?;
    let ps = propagated_polarization(&stat, &grid, &basis, 1.0 / 16.0, 256)?;
    let still = ps.raw[0].abs();
    outcome(
        ratios.iter().all(|r| *r >= 1.5) && still < 1e-10,
        format!(
            "|dP_eps - dP_KSV| = {} with ratios {} (tol >= 1.5); static |dP| = {still:.2e} (tol 1e-10); norm drift {drift:.1e}",
            fmt_list(&dev),
            fmt_list(&ratios)
        ),
    )
}

fn dual_formula() -> Result<Outcome> {
    let (path, _) = pump_setup()?;
    let lat = path.lattice().clone();
    // the frame links wrap across the zone boundary, which needs a converged basis
    let basis = PlaneWaveBasis::new(&lat, 10.5)?;
    // centered differences err by even powers of h; two Richardson steps on nested grids
    let sizes = [64usize, 128, 256];
    let mut frames = Vec::new();
    let mut theta = None;
    for &n in &sizes {
        let pf = snapshot_projectors(&path, &KGrid::new(&lat, &[n])?, &basis, n)?;
        if theta.is_none() {
            theta = Some(theta_field(&pf, ThetaMethod::Perturbative)?);
        }
        frames.push(frame_theta(&pf)?);
    }
    let theta = theta.expect("coarsest grid solved");
    let n0 = sizes[0];
    let mut err = 0.0f64;
    let mut raw = 0.0f64;
    for ik in 0..n0 {
        for it in 0..n0 {
            let at = |level: usize| {
                let (m, n) = (1 << level, sizes[level]);
                frames[level][(m * ik) * n + m * it]
            };
            let (Some(a), Some(b), Some(c)) = (at(0), at(1), at(2)) else {
                continue;
            };
            let r1 = (4.0 * b - a) / 3.0;
            let r2 = (4.0 * c - b) / 3.0;
            let extrapolated = (16.0 * r2 - r1) / 15.0;
            let exact = theta.theta[ik * n0 + it][0];
            err = err.max((extrapolated - exact).abs());
            raw = raw.max((c - exact).abs());
        }
    }
    outcome(
        err < 1e-6,
        format!("max |Theta_frame - Theta_projector| = {err:.2e} (tol 1e-6; {raw:.2e} on the finest grid before extrapolation)"),
    )
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

type Check = (&'static str, fn() -> Result<Outcome>, Option<Duration>);

fn main() {
    let checks: [Check; 10] = [
        ("1 free particle", free_particle, Some(Duration::from_secs(1))),
        ("2 Kramers degeneracy", kramers, Some(Duration::from_secs(10))),
        ("3 curvature antisymmetry and zero Chern", curvature_symmetry, Some(Duration::from_secs(30))),
        ("4 gauge invariance", gauge_invariance, None),
        ("5 Hofstadter butterfly", butterfly, Some(Duration::from_secs(120))),
        ("6 semiclassical convergence", semiclassics_convergence, Some(Duration::from_secs(600))),
        ("7 Bloch oscillation", bloch_oscillation, None),
        ("8 Thouless quantization", thouless, Some(Duration::from_secs(60))),
        ("9 pump eps-convergence", pump_convergence, Some(Duration::from_secs(600))),
        ("10 dual formula", dual_formula, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run);
        let took = start.elapsed();
        let (mut pass, detail) = match result {
            Ok(Ok(o)) => (o.pass, o.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        let mut timing = format!("{:.2} s", took.as_secs_f64());
        if let Some(l) = limit {
            timing.push_str(&format!(" (limit {} s)", l.as_secs()));
            pass &= took <= l;
        }
        if !pass {
            failed += 1;
        }
        println!("{} [{name}] {detail}; {timing}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
