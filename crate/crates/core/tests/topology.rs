use bloch_core::fiber::{band_structure, PlaneWaveBasis};
use bloch_core::geometry::*;
use bloch_core::magnetic::*;
use bloch_core::pump::*;
use bloch_core::*;
use std::f64::consts::PI;

#[test]
fn harper_band_cannot_be_periodized() {
    let flux = magnetic::Flux::new(1, 3).unwrap();
    let frame = magnetic_frame(&square_symbol(), flux, 0, [24, 24]).unwrap();
    let c = magnetic_band_chern(&square_symbol(), flux, 0, [24, 24]).unwrap();
    assert_ne!(c, 0);
    let fixed = fix_gauge(&frame).unwrap();
    assert_eq!(fixed.gauge(), &Gauge::Transported { periodic: false });
}

#[test]
fn magnetic_chern_numbers_sum_to_zero() {
    for (p, q) in [(1, 5), (2, 5), (2, 7), (3, 7)] {
        let cs = magnetic_chern_numbers(&square_symbol(), magnetic::Flux::new(p, q).unwrap(), [32, 32]).unwrap();
        assert!(cs.iter().all(|c| c.is_some()), "{p}/{q}: {cs:?}");
        assert_eq!(cs.iter().map(|c| c.unwrap()).sum::<i64>(), 0, "{p}/{q}");
    }
}

#[test]
fn hexagonal_band_is_trivial_with_quantized_zak_phases() {
    let lat = Lattice::new(&[vec![2.0 * PI, 0.0], vec![PI, 3f64.sqrt() * PI]]).unwrap();
    let mut coeffs = Vec::new();
    for n in [[1, 0], [0, 1], [1, -1]] {
        coeffs.push((n.to_vec(), C64::new(0.6, 0.0)));
        coeffs.push((vec![-n[0], -n[1]], C64::new(0.6, 0.0)));
    }
    let v = FourierPotential::new(&lat, coeffs, true).unwrap();
    let basis = PlaneWaveBasis::new(&lat, 7.5).unwrap();
    let bd = band_structure(&v, &KGrid::new(&lat, &[18, 18]).unwrap(), &basis, 3, false).unwrap();
    let frame = BlochFrame::from_bands(&bd, 0, 0).unwrap();
    let field = berry_curvature(&frame).unwrap().with_chern().unwrap();
    assert_eq!(field.chern, Some(0));
    let fixed = fix_gauge(&frame).unwrap();
    assert_eq!(fixed.gauge(), &Gauge::Transported { periodic: true });
    // inversion symmetric, so every loop phase is 0 or pi
    for dir in 0..2 {
        for z in wilson_loop_phases(&frame, dir) {
            assert!(z.abs() < 1e-6 || (z.abs() - PI).abs() < 1e-6, "{z}");
        }
    }
}

#[test]
fn evolved_pump_approaches_the_adiabatic_charge() {
    let lat = Lattice::cubic(1, 2.0 * PI).unwrap();
    let path = PumpPath::sliding_cosine(&lat, 1.0, 16, 1.0, true, Interpolation::Trigonometric).unwrap();
    let basis = PlaneWaveBasis::new(&lat, 6.5).unwrap();
    let grid = KGrid::new(&lat, &[16]).unwrap();
    let pf = snapshot_projectors(&path, &grid, &basis, 32).unwrap();
    assert_eq!(pump_chern(&pf).unwrap(), 1);
    let ksv = ksv_polarization(&theta_field(&pf, ThetaMethod::Perturbative).unwrap()).quanta[0];
    let gaps: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0]
        .iter()
        .map(|&eps| {
            let p = propagated_polarization(&path, &grid, &basis, eps, 1024).unwrap();
            assert!(p.max_norm_drift < 1e-10);
            (p.quanta[0] - ksv).abs()
        })
        .collect();
    assert!(gaps[1] < 1e-2 && gaps[1] < gaps[0], "{gaps:?}");
}
