//! Scenario execution: builds the grid, Hamiltonian and initial state from a
//! config, integrates, and writes the diagnostics CSV, snapshots and manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;

use crate::closure::{ClosureDiagnostics, ClosureModel, ClosureState, ClosureVariant};
use crate::densities;
use crate::error::{Error, Result};
use crate::grid::{Mode, PhaseGrid};
use crate::linalg;
use crate::liouvillian::{HybridWavefunction, Liouvillian};
use crate::model::HybridHamiltonian;
use crate::propagator::{Diagnostics, RunState};
use crate::scenario::config::{Diagnostic, InitialKind, RunKind, ScenarioConfig};
use crate::scenario::snapshot::Snapshot;
use crate::states::{self, PhaseProfile, QuantumProfile};
use crate::symbol::{MatrixSymbol, Profile};
use crate::trajectories::{self, Interpolation, TrajectoryEnsemble, VelocityHistory};

pub const WAVE_HEADER: &str =
    "t,norm,energy_re,energy_im,trace_D,rho_c_min,rho_q_min_eig,boundary_mass_p";
pub const CLOSURE_HEADER: &str = "t,mass,closure_energy,min_trace_dev,min_rho_eig";

/// Number of points on the advected loop of the `loop` diagnostic.
pub const LOOP_POINTS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: usize,
    pub wall_time: f64,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn phase_profile(c: &ScenarioConfig) -> PhaseProfile {
    let i = &c.initial;
    PhaseProfile {
        q0: i.q0,
        p0: i.p0,
        kappa: i.kappa,
        sigma_p: i.sigma_p,
        winding_q: i.winding_q,
    }
}

/// The configured initial hybrid wavefunction, normalized.
pub fn initial_state(c: &ScenarioConfig, grid: &PhaseGrid) -> Result<HybridWavefunction> {
    let i = &c.initial;
    let quantum = match (i.kind, grid.mode) {
        (InitialKind::GaussianProduct, Mode::FiniteDim) => QuantumProfile::Spinor {
            theta: i.theta,
            phi: i.phi,
        },
        (InitialKind::GaussianProduct, Mode::Continuum) => QuantumProfile::Bump {
            x0: i.x0,
            kappa: i.kappa_x,
            winding: i.winding_x,
        },
        (InitialKind::PlaneWaveProduct, Mode::Continuum) => QuantumProfile::PlaneWave {
            winding: i.winding_x,
            modulation: i.modulation,
        },
        (InitialKind::PlaneWaveProduct, Mode::FiniteDim) => {
            return Err(Error::ModeMismatch(
                "plane_wave_product needs a continuum grid".into(),
            ))
        }
    };
    states::gaussian_product(grid, &phase_profile(c), &quantum)
}

/// Initial closure state: D = |Ψ|² normalized, ρ̂ = (1 − μ)vv† + μ/n, u = 𝒜.
pub fn initial_closure_state(c: &ScenarioConfig, grid: &PhaseGrid) -> Result<ClosureState> {
    let prof = phase_profile(c).sample(grid)?;
    let mut d: Vec<f64> = prof.iter().map(|v| v.norm_sqr()).collect();
    let mass = d.iter().sum::<f64>() * grid.phase_weight();
    d.iter_mut().for_each(|v| *v /= mass);
    let n = grid.nx;
    let v = QuantumProfile::Spinor {
        theta: c.initial.theta,
        phi: c.initial.phi,
    }
    .sample(grid)?;
    let mu = c.initial.mixing;
    let mut rho = linalg::zeros(n);
    for a in 0..n {
        for b in 0..n {
            rho[a * n + b] = v[a] * v[b].conj() * (1.0 - mu);
        }
        rho[a * n + a] += C64::new(mu / n as f64, 0.0);
    }
    ClosureState::canonical(grid, d, ClosureState::uniform_rho(grid, &rho)?)
}

/// Observable used for the `pairing` column: sin(2πq/L_q) diag(1, −1, 1, …).
pub fn pairing_observable(grid: &PhaseGrid) -> MatrixSymbol {
    let n = grid.nx;
    let mut diag = linalg::zeros(n);
    for k in 0..n {
        diag[k * n + k] = C64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
    }
    MatrixSymbol::new(n).with(Profile::sin_q(2.0 * std::f64::consts::PI / grid.lq), diag)
}

fn fmt_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

struct Artifacts {
    dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.outputs.push(path);
        Ok(BufWriter::new(f))
    }
}

fn write_manifest(
    dir: &Path,
    config: &ScenarioConfig,
    wall_time: f64,
    status: &str,
    rows: usize,
    warnings: &[String],
) -> Result<PathBuf> {
    let path = dir.join("manifest.toml");
    let mut table = toml::Table::new();
    table.insert("software".into(), "hybridkvh".into());
    table.insert("version".into(), crate::VERSION.into());
    table.insert("status".into(), status.into());
    table.insert("wall_time_s".into(), wall_time.into());
    table.insert(
        "threads".into(),
        (rayon::current_num_threads() as i64).into(),
    );
    table.insert("rows".into(), (rows as i64).into());
    table.insert(
        "warnings".into(),
        toml::Value::Array(warnings.iter().map(|w| w.as_str().into()).collect()),
    );
    table.insert("config".into(), config.to_config_string().into());
    fs::write(
        &path,
        toml::to_string(&table).map_err(|e| Error::InvalidParameter(e.to_string()))?,
    )?;
    Ok(path)
}

/// Runs a scenario into `out_dir` (created if needed). On a solver failure the
/// rows written so far are flushed and the manifest records the error.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let mut art = Artifacts {
        dir: out_dir.to_path_buf(),
        outputs: Vec::new(),
    };
    let mut warnings = Vec::new();
    let mut rows = 0;
    let result = match config.run.kind {
        RunKind::Wave => run_wave(config, &mut art, &mut rows, &mut warnings),
        RunKind::Closure => run_closure(config, &mut art, &mut rows),
    };
    let wall_time = start.elapsed().as_secs_f64();
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    let manifest = write_manifest(out_dir, config, wall_time, &status, rows, &warnings)?;
    result?;
    art.outputs.push(manifest);
    Ok(RunReport {
        rows,
        wall_time,
        outputs: art.outputs,
        warnings,
    })
}

fn run_wave(
    config: &ScenarioConfig,
    art: &mut Artifacts,
    rows: &mut usize,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let grid = config.phase_grid()?;
    let h = config.hamiltonian(&grid)?;
    let l = Liouvillian::new(&grid, &h)?;
    let psi0 = initial_state(config, &grid)?;
    let run = &config.run;
    if run.dt > l.dt_max() {
        return Err(Error::StepTooLarge {
            dt: run.dt,
            dt_max: l.dt_max(),
        });
    }
    let pairing = run.diagnostics.contains(&Diagnostic::Pairing);
    let want_loop = run.diagnostics.contains(&Diagnostic::Loop);
    let observable = pairing.then(|| pairing_observable(&grid));
    let mut csv = if config.output.csv {
        let mut w = art.create("diagnostics.csv")?;
        let mut header = WAVE_HEADER.to_string();
        if pairing {
            header.push_str(",pairing_residual");
        }
        writeln!(w, "{header}")?;
        Some(w)
    } else {
        None
    };
    let snap_dir = art.dir.join("snapshots");
    let write_snaps = config.output.snapshots && run.snapshot_every > 0;
    if write_snaps {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut kept: Vec<HybridWavefunction> = Vec::new();
    let mut state = RunState::new(psi0, run.dt)?;
    let mut last = None;
    let mut body = || -> Result<()> {
        for step in 0..=run.steps {
            if step > 0 {
                state.step_rk4(&l)?;
            }
            let d = Diagnostics::measure(&l, &state.psi, state.t)?;
            let mut values = vec![
                d.t,
                d.norm,
                d.energy.re,
                d.energy.im,
                d.trace_d,
                d.rho_c_min,
                d.rho_q_min_eig,
                d.boundary_mass_p,
            ];
            if let Some(obs) = &observable {
                values
                    .push(densities::defining_identity_residual(obs, &state.psi, l.hbar)?.residual);
            }
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", fmt_row(&values))?;
            }
            *rows += 1;
            last = Some(d);
            if run.snapshot_every > 0 && step % run.snapshot_every == 0 {
                if write_snaps {
                    let path = snap_dir.join(format!("step_{step:08}.hkvh"));
                    Snapshot::from_wavefunction(&state.psi).save(&path)?;
                }
                if want_loop {
                    kept.push(state.psi.clone());
                }
            }
        }
        Ok(())
    };
    let outcome = body();
    if let Some(mut w) = csv {
        w.flush()?;
    }
    outcome?;
    if write_snaps {
        art.outputs.push(snap_dir);
    }
    if let Some(d) = last {
        if d.boundary_mass_p > run.boundary_mass_threshold {
            warnings.push(format!(
                "boundary mass {:e} exceeds {:e}; enlarge the momentum box",
                d.boundary_mass_p, run.boundary_mass_threshold
            ));
        }
    }
    if want_loop {
        write_loop(config, &h, &kept, art)?;
    }
    Ok(())
}

fn write_loop(
    config: &ScenarioConfig,
    h: &HybridHamiltonian,
    frames: &[HybridWavefunction],
    art: &mut Artifacts,
) -> Result<()> {
    let HybridHamiltonian::Separable { potential, .. } = h else {
        return Err(Error::UnsupportedVariant(
            "loop diagnostics need a separable hamiltonian",
        ));
    };
    let spacing = config.run.dt * config.run.snapshot_every as f64;
    let steps = frames.len().saturating_sub(1) / 2;
    if steps < 4 {
        return Err(Error::InsufficientSnapshots {
            need: 9,
            got: frames.len(),
        });
    }
    let history = VelocityHistory::new(
        frames,
        spacing,
        h,
        Interpolation::Trilinear,
        config.run.node_threshold,
    )?;
    let i = &config.initial;
    let lp =
        TrajectoryEnsemble::ellipse([i.q0, i.p0, i.x0], [0.5, 0.8 * i.sigma_p, 0.5], LOOP_POINTS)?;
    let loops = trajectories::advect_trajectories(&lp, &history, 0, steps)?;
    let mut tw = art.create("trajectories.csv")?;
    writeln!(tw, "{}", trajectories::TRAJECTORY_HEADER)?;
    for (k, e) in loops.iter().enumerate() {
        trajectories::write_trajectory_rows(&mut tw, 2.0 * spacing * k as f64, history.grid(), e)?;
    }
    tw.flush()?;
    let samples = trajectories::poincare_loop_rate(&loops, 0.0, 2.0 * spacing, potential)?;
    let mut lw = art.create("loop.csv")?;
    writeln!(lw, "{}", trajectories::LOOP_HEADER)?;
    trajectories::write_loop_rows(&mut lw, &samples)?;
    lw.flush()?;
    Ok(())
}

fn run_closure(config: &ScenarioConfig, art: &mut Artifacts, rows: &mut usize) -> Result<()> {
    let grid = config.phase_grid()?;
    let h = config.hamiltonian(&grid)?;
    let model = ClosureModel::new(&grid, &h)?;
    let mut state = initial_closure_state(config, &grid)?;
    let variant = if config.run.general {
        ClosureVariant::General
    } else {
        ClosureVariant::Reduced
    };
    let mut csv = if config.output.csv {
        let mut w = art.create("closure.csv")?;
        writeln!(w, "{CLOSURE_HEADER}")?;
        Some(w)
    } else {
        None
    };
    model.expected_vector_field(&state)?;
    let mut body = || -> Result<()> {
        for step in 0..=config.run.steps {
            if step > 0 {
                model.step(&mut state, config.run.dt, variant)?;
                if !state.d.iter().all(|v| v.is_finite())
                    || !state
                        .rho
                        .iter()
                        .all(|v| v.re.is_finite() && v.im.is_finite())
                {
                    return Err(Error::NonFinite {
                        step,
                        t: state.t,
                        detail: "closure fields".into(),
                    });
                }
            }
            let d = ClosureDiagnostics::measure(&model, &state);
            if let Some(w) = csv.as_mut() {
                writeln!(
                    w,
                    "{}",
                    fmt_row(&[d.t, d.mass, d.energy, d.max_trace_dev, d.min_rho_eig])
                )?;
            }
            *rows += 1;
        }
        Ok(())
    };
    let outcome = body();
    if let Some(mut w) = csv {
        w.flush()?;
    }
    outcome
}
