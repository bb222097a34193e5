//! Subcommand execution.

use crate::config::{Command, ConfigError, Harmonic, InterpolationChoice, RunSpec, ThetaChoice};
use crate::output::{csv, float, floats, json_float, numbered, spec_hash, write_atomic};
use bloch_core::dynamics::{fit_order, run_comparison, BandModel, ExternalFields, SweepConfig};
use bloch_core::fiber::{band_structure, check_gap, BandData, PlaneWaveBasis};
use bloch_core::geometry::{berry_connection, berry_curvature, fix_gauge, wilson_loop_phases, BlochFrame};
use bloch_core::magnetic::{flux_spectrum, magnetic_chern_numbers, square_symbol, Flux};
use bloch_core::pump::{
    ksv_polarization, propagated_polarization, pump_chern, snapshot_projectors, theta_field, ThetaMethod,
};
use bloch_core::{FourierPotential, Interpolation, KGrid, Lattice, PumpPath, C64};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] bloch_core::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(e) if e.is_numerical() => 3,
            RunError::Core(_) => 2,
            RunError::Io { .. } => 4,
        }
    }

    /// Machine-readable description for stderr.
    pub fn to_json(&self) -> Value {
        match self {
            RunError::Config(e) => json!({
                "error": "config",
                "message": e.message,
                "key": e.key,
                "line": e.line,
            }),
            RunError::Core(e) => {
                let mut v = json!({
                    "error": if e.is_numerical() { "numerical" } else { "input" },
                    "message": e.to_string(),
                });
                use bloch_core::Error as E;
                let detail = match e {
                    E::GapClosure { k, t, gap } => json!({"kind": "gap_closure", "k": k, "t": t, "gap": gap}),
                    E::Gapless { lo, hi, gap, k } => {
                        json!({"kind": "gapless", "window": [lo, hi], "k": k, "gap": gap})
                    }
                    E::GridTooCoarse { node, overlap } => {
                        json!({"kind": "grid_too_coarse", "node": node, "overlap": overlap})
                    }
                    E::NonQuantized { value, residual } => {
                        json!({"kind": "non_quantized", "value": value, "residual": residual})
                    }
                    E::NormDrift { t, drift } => json!({"kind": "norm_drift", "t": t, "drift": drift}),
                    E::BoundaryContact { t, weight } => {
                        json!({"kind": "boundary_contact", "t": t, "weight": weight})
                    }
                    _ => Value::Null,
                };
                if let Value::Object(m) = detail {
                    v.as_object_mut().unwrap().extend(m);
                }
                v
            }
            RunError::Io { path, source } => json!({
                "error": "io",
                "message": source.to_string(),
                "path": path.display().to_string(),
            }),
        }
    }
}

/// CSV text and JSON summary of one run.
pub struct Artifacts {
    pub csv: String,
    pub summary: Value,
}

/// Runs the spec on a pool with `threads` workers and writes both files.
pub fn run(spec: &RunSpec) -> Result<(PathBuf, PathBuf), RunError> {
    let artifacts = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ConfigError {
                key: Some("threads".into()),
                line: None,
                message: e.to_string(),
            })?
            .install(|| execute(spec))?,
        None => execute(spec)?,
    };
    let name = spec.command.name();
    let csv_path = PathBuf::from(spec.output.csv.clone().unwrap_or(format!("{name}.csv")));
    let json_path = PathBuf::from(spec.output.json.clone().unwrap_or(format!("{name}.json")));
    let mut summary = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "spec_hash": spec_hash(spec),
    });
    if let (Value::Object(m), Value::Object(extra)) = (&mut summary, artifacts.summary) {
        m.extend(extra);
    }
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write(&csv_path, &artifacts.csv)?;
    write(&json_path, &text)?;
    Ok((csv_path, json_path))
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    write_atomic(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn execute(spec: &RunSpec) -> Result<Artifacts, RunError> {
    match spec.command {
        Command::Bands => bands(spec),
        Command::Berry => berry(spec),
        Command::Butterfly => butterfly(spec),
        Command::Dynamics => dynamics(spec),
        Command::Pump => pump(spec),
    }
}

fn lattice(spec: &RunSpec) -> Result<Lattice, RunError> {
    Ok(Lattice::new(&spec.lattice.as_ref().expect("validated").basis)?)
}

/// Coefficients with missing `-n` partners filled in as conjugates.
fn coefficients(harmonics: &[Harmonic], cosines: &[(Vec<i32>, f64)]) -> BTreeMap<Vec<i32>, C64> {
    let mut out: BTreeMap<Vec<i32>, C64> = BTreeMap::new();
    for h in harmonics {
        *out.entry(h.n.clone()).or_default() += C64::new(h.re, h.im);
    }
    let given: Vec<Vec<i32>> = out.keys().cloned().collect();
    for n in given {
        let m: Vec<i32> = n.iter().map(|x| -x).collect();
        if !out.contains_key(&m) {
            let c = out[&n].conj();
            out.insert(m, c);
        }
    }
    for (n, amp) in cosines {
        let m: Vec<i32> = n.iter().map(|x| -x).collect();
        *out.entry(n.clone()).or_default() += C64::new(*amp, 0.0);
        if m != *n {
            *out.entry(m).or_default() += C64::new(*amp, 0.0);
        }
    }
    out
}

fn potential(spec: &RunSpec, lat: &Lattice) -> Result<FourierPotential, RunError> {
    let p = spec.potential.clone().unwrap_or_default();
    let cosines: Vec<(Vec<i32>, f64)> = p.cosines.iter().map(|c| (c.n.clone(), c.amp)).collect();
    Ok(FourierPotential::new(lat, coefficients(&p.harmonics, &cosines), true)?)
}

fn solve(spec: &RunSpec) -> Result<(FourierPotential, BandData), RunError> {
    let lat = lattice(spec)?;
    let v = potential(spec, &lat)?;
    let num = spec.numeric.as_ref().expect("validated");
    let basis = PlaneWaveBasis::new(&lat, num.cutoff)?;
    let grid = KGrid::new(&lat, &num.grid)?;
    let bd = band_structure(&v, &grid, &basis, num.bands, num.spin_orbit)?;
    Ok((v, bd))
}

fn bands(spec: &RunSpec) -> Result<Artifacts, RunError> {
    let (_, bd) = solve(spec)?;
    let num = spec.numeric.as_ref().expect("validated");
    let grid = bd.grid();
    let d = grid.lattice().dim();
    let nb = bd.n_bands();
    let mut header = numbered("k", d, 1);
    header.extend(numbered("E", nb, 0));
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let mut row = floats(grid.point(i));
            row.extend(floats(&bd.energies(i)[..nb]));
            row
        })
        .collect();
    let ranges: Vec<[f64; 2]> = (0..nb)
        .map(|n| {
            let e = bd.band(n);
            [e.iter().copied().fold(f64::INFINITY, f64::min), e.iter().copied().fold(f64::NEG_INFINITY, f64::max)]
        })
        .collect();
    let gaps: Vec<f64> = (0..nb.saturating_sub(1))
        .map(|n| {
            (0..grid.len())
                .map(|i| bd.energies(i)[n + 1] - bd.energies(i)[n])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let window_gap = if num.window[1] + 1 < nb {
        let r = check_gap(&bd, num.window[0], num.window[1])?;
        json!({"gap": r.gap, "k": r.k, "isolated": r.is_isolated()})
    } else {
        Value::Null
    };
    Ok(Artifacts {
        csv: csv(&header, &rows),
        summary: json!({
            "rows": grid.len(),
            "bands": nb,
            "cutoff": num.cutoff,
            "basis_size": bd.basis().len(),
            "window": num.window,
            "g": window_gap,
            "band_ranges": ranges,
            "min_gaps": gaps,
        }),
    })
}

fn window_frame(spec: &RunSpec, bd: &BandData) -> Result<BlochFrame, RunError> {
    let w = spec.numeric.as_ref().expect("validated").window;
    Ok(BlochFrame::from_bands(bd, w[0], w[1])?)
}

fn berry(spec: &RunSpec) -> Result<Artifacts, RunError> {
    let (_, bd) = solve(spec)?;
    let grid = bd.grid();
    let frame = window_frame(spec, &bd)?;
    let d = grid.lattice().dim();
    let zak: BTreeMap<String, Vec<f64>> = (0..d)
        .map(|j| (format!("direction_{}", j + 1), wilson_loop_phases(&frame, j)))
        .collect();
    if d == 1 {
        let fixed = fix_gauge(&frame)?;
        let conn = berry_connection(&fixed)?;
        let rows: Vec<Vec<String>> = (0..grid.len())
            .map(|i| vec![float(grid.point(i)[0]), float(conn[i][0])])
            .collect();
        return Ok(Artifacts {
            csv: csv(&["k_1".into(), "A_1".into()], &rows),
            summary: json!({"chern": null, "residual": null, "zak_phases": zak, "gap": frame.gap()}),
        });
    }
    let field = berry_curvature(&frame)?.with_chern()?;
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let mut row = floats(grid.point(i));
            row.push(float(field.curvature[i]));
            row
        })
        .collect();
    Ok(Artifacts {
        csv: csv(&["k_1".into(), "k_2".into(), "F".into()], &rows),
        summary: json!({
            "chern": field.chern,
            "residual": field.residual,
            "zak_phases": zak,
            "gap": frame.gap(),
        }),
    })
}

fn butterfly(spec: &RunSpec) -> Result<Artifacts, RunError> {
    let b = spec.butterfly.as_ref().expect("validated");
    let symbol: Vec<([i32; 2], C64)> = if b.symbol.is_empty() {
        square_symbol()
    } else {
        coefficients(&b.symbol, &[])
            .into_iter()
            .map(|(n, c)| ([n[0], n[1]], c))
            .collect()
    };
    let fluxes: Vec<Flux> = b
        .fluxes
        .as_ref()
        .expect("expanded during validation")
        .iter()
        .map(|&[p, q]| Flux::new(p, q))
        .collect::<Result<_, _>>()?;
    let spectra = fluxes
        .par_iter()
        .map(|&f| flux_spectrum(&symbol, f, b.grid))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for s in &spectra {
        for &(lo, hi) in &s.intervals {
            rows.push(vec![
                s.flux.p().to_string(),
                s.flux.q().to_string(),
                float(s.flux.alpha()),
                float(lo),
                float(hi),
            ]);
        }
    }
    let mut summary = json!({
        "fluxes": fluxes.len(),
        "q_max": b.q_max,
        "intervals": rows.len(),
    });
    if b.chern {
        let cherns = fluxes
            .par_iter()
            .map(|&f| magnetic_chern_numbers(&symbol, f, b.grid).map(|c| (format!("{}/{}", f.p(), f.q()), c)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        summary["chern"] = json!(cherns);
    }
    let header: Vec<String> = ["p", "q", "alpha", "lo", "hi"].iter().map(|s| s.to_string()).collect();
    Ok(Artifacts {
        csv: csv(&header, &rows),
        summary,
    })
}

fn dynamics(spec: &RunSpec) -> Result<Artifacts, RunError> {
    let (v, bd) = solve(spec)?;
    let dy = spec.dynamics.as_ref().expect("validated");
    let lat = bd.grid().lattice().clone();
    let d = lat.dim();
    let frame = fix_gauge(&window_frame(spec, &bd)?)?;
    let band = spec.numeric.as_ref().expect("validated").window[0];
    let model = if dy.first_order {
        BandModel::from_frame(&bd, band, &frame)?
    } else {
        BandModel::from_bands(&bd, band)?
    };
    let cfg = SweepConfig {
        per_cell: dy.per_cell.clone().unwrap_or(vec![16; d]),
        dt: dy.dt,
        sample_ds: dy.sample_ds,
        substeps: dy.substeps,
        horizon: dy.horizon,
        width_factor: dy.width_factor,
    };
    let zeros = vec![0.0; d];
    let x0 = dy.x0.clone().unwrap_or(zeros.clone());
    let force = dy.force.clone().unwrap_or(zeros);
    let mut header = vec!["epsilon".to_string(), "s".to_string()];
    header.extend(numbered("r", d, 1));
    header.extend(numbered("k", d, 1));
    header.extend(numbered("mean_x", d, 1));
    header.extend(numbered("mean_k", d, 1));
    header.push("norm".into());
    header.push("energy".into());
    header.extend(numbered("zeroth_x", d, 1));
    if model.has_geometry() {
        header.extend(numbered("first_x", d, 1));
    }
    let mut rows = Vec::new();
    let mut purity = Vec::new();
    let mut err0 = Vec::new();
    let mut err1 = Vec::new();
    let mut drift = Vec::new();
    for &eps in &dy.epsilons {
        let fields = if dy.magnetic != 0.0 {
            ExternalFields::uniform_magnetic(dy.magnetic, [force[0], force[1]], eps)?
        } else {
            ExternalFields::constant_force(&force, eps)?
        };
        let p = run_comparison(&bd, &frame, &model, &v, &fields, &dy.k0, &x0, &cfg)?;
        for (i, o) in p.propagation.samples.iter().enumerate() {
            let traj = p.first.as_ref().unwrap_or(&p.zeroth);
            let mut row = floats(&[eps, o.s]);
            row.extend(floats(&traj.r[i]));
            row.extend(floats(&traj.k[i]));
            row.extend(o.mean_x.iter().map(|x| float(eps * x)));
            row.extend(floats(&o.mean_k));
            row.extend(floats(&[o.norm, o.energy]));
            row.extend(floats(&p.zeroth.position[i]));
            if let Some(t) = &p.first {
                row.extend(floats(&t.position[i]));
            }
            rows.push(row);
        }
        purity.push(p.purity);
        err0.push(p.error_zeroth.position);
        if let Some(e) = &p.error_first {
            err1.push(e.position);
        }
        drift.push(p.propagation.max_norm_drift());
    }
    let order = |errs: &[f64]| -> Value {
        if errs.len() == dy.epsilons.len() && errs.len() >= 2 {
            fit_order(&dy.epsilons, errs).map(json_float).unwrap_or(Value::Null)
        } else {
            Value::Null
        }
    };
    Ok(Artifacts {
        csv: csv(&header, &rows),
        summary: json!({
            "epsilons": dy.epsilons,
            "purity": purity,
            "errors": {
                "zeroth": err0,
                "first": if model.has_geometry() { json!(err1) } else { Value::Null },
            },
            "fitted_order": {
                "zeroth": order(&err0),
                "first": order(&err1),
            },
            "max_norm_drift": drift,
        }),
    })
}

fn pump(spec: &RunSpec) -> Result<Artifacts, RunError> {
    let lat = lattice(spec)?;
    let num = spec.numeric.as_ref().expect("validated");
    let p = spec.pump.as_ref().expect("validated");
    let interpolation = match p.interpolation {
        InterpolationChoice::Linear => Interpolation::Linear,
        InterpolationChoice::Trigonometric => Interpolation::Trigonometric,
    };
    let path = PumpPath::sliding_cosine(&lat, p.amp, p.snapshots, p.period, p.ramp, interpolation)?;
    let basis = PlaneWaveBasis::new(&lat, num.cutoff)?;
    let grid = KGrid::new(&lat, &num.grid)?;
    let pf = snapshot_projectors(&path, &grid, &basis, p.times)?;
    let method = match p.theta {
        ThetaChoice::Perturbative => ThetaMethod::Perturbative,
        ThetaChoice::FiniteDifference => ThetaMethod::FiniteDifference,
    };
    let tf = theta_field(&pf, method)?;
    let ksv = ksv_polarization(&tf);
    let ksv_current = tf.ksv_current();
    let chern = pump_chern(&pf)?;
    let stride = p.steps / p.times;
    let mut rows = Vec::new();
    let mut dp = Vec::new();
    let mut drift = Vec::new();
    for &eps in &p.epsilons {
        let prop = propagated_polarization(&path, &grid, &basis, eps, p.steps)?;
        for (j, jk) in ksv_current.iter().enumerate() {
            let (t, je) = &prop.current[j * stride];
            rows.push(floats(&[eps, *t, je[0], jk[0]]));
        }
        dp.push(prop.quanta[0]);
        drift.push(prop.max_norm_drift);
    }
    let differences: Vec<f64> = dp.iter().map(|x| (x - ksv.quanta[0]).abs()).collect();
    let ratios: Vec<Value> = differences.windows(2).map(|w| json_float(w[0] / w[1])).collect();
    let header: Vec<String> = ["epsilon", "t", "J_eps", "J_ksv"].iter().map(|s| s.to_string()).collect();
    Ok(Artifacts {
        csv: csv(&header, &rows),
        summary: json!({
            "dP_eps": dp,
            "dP_ksv": ksv.quanta[0],
            "dP_ksv_raw": ksv.raw[0],
            "pump_chern": chern,
            "epsilons": p.epsilons,
            "convergence": {"differences": differences, "ratios": ratios},
            "max_norm_drift": drift,
        }),
    })
}
