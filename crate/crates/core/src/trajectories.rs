//! Lagrangian trajectories of the hybrid velocity field 𝖷 = (p/M, −∂_qV, ∂_xS/m),
//! loop circulation ∮p dq and the phase carried along trajectories.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Axis, Mode, PhaseGrid};
use crate::liouvillian::HybridWavefunction;
use crate::model::{HybridHamiltonian, ModelParams, Potential};

/// Points (q, p, x) stored unwrapped; `wrapped` maps them into the periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub points: Vec<[f64; 3]>,
    /// Trajectories that entered a node region; they are no longer advanced.
    pub flagged: Vec<bool>,
    /// Whether the points are ordered along a closed loop.
    pub is_loop: bool,
}

impl TrajectoryEnsemble {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        let n = points.len();
        TrajectoryEnsemble {
            points,
            flagged: vec![false; n],
            is_loop: false,
        }
    }

    /// Closed loop s ↦ center + (a_q cos s, a_p sin s, a_x cos s) sampled at
    /// `n` equispaced parameter values.
    pub fn ellipse(center: [f64; 3], radii: [f64; 3], n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidParameter(format!(
                "a loop needs at least 8 points, got {n}"
            )));
        }
        let points = (0..n)
            .map(|i| {
                let s = 2.0 * PI * i as f64 / n as f64;
                [
                    center[0] + radii[0] * s.cos(),
                    center[1] + radii[1] * s.sin(),
                    center[2] + radii[2] * s.cos(),
                ]
            })
            .collect();
        let mut e = Self::new(points);
        e.is_loop = true;
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn wrapped(&self, grid: &PhaseGrid) -> Vec<[f64; 3]> {
        self.points.iter().map(|pt| wrap(grid, *pt)).collect()
    }

    /// ∮p dq along the loop, with dq/ds from the trigonometric interpolant in s.
    pub fn loop_integral(&self) -> Result<f64> {
        self.require_loop()?;
        let q: Vec<f64> = self.points.iter().map(|pt| pt[0]).collect();
        let dq = periodic_derivative(&q);
        let n = q.len() as f64;
        Ok(self
            .points
            .iter()
            .zip(&dq)
            .map(|(pt, d)| pt[1] * d)
            .sum::<f64>()
            * 2.0
            * PI
            / n)
    }

    /// ∮∂_xV dx along the loop.
    pub fn potential_circulation(&self, potential: &Potential) -> Result<f64> {
        self.require_loop()?;
        let x: Vec<f64> = self.points.iter().map(|pt| pt[2]).collect();
        let dx = periodic_derivative(&x);
        let n = x.len() as f64;
        Ok(self
            .points
            .iter()
            .zip(&dx)
            .map(|(pt, d)| potential.dx(pt[0], pt[2]) * d)
            .sum::<f64>()
            * 2.0
            * PI
            / n)
    }

    /// True when two non-neighbouring loop points come closer than 1e−3 of
    /// the mean point spacing.
    pub fn is_degenerate(&self) -> bool {
        let n = self.points.len();
        if !self.is_loop || n < 4 {
            return false;
        }
        let dist = |a: &[f64; 3], b: &[f64; 3]| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let mean = (0..n)
            .map(|i| dist(&self.points[i], &self.points[(i + 1) % n]))
            .sum::<f64>()
            / n as f64;
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if dist(&self.points[i], &self.points[j]) < 1e-3 * mean {
                    return true;
                }
            }
        }
        false
    }

    fn require_loop(&self) -> Result<()> {
        if !self.is_loop || self.points.len() < 8 {
            return Err(Error::InvalidParameter(
                "ensemble is not an ordered loop of at least 8 points".into(),
            ));
        }
        Ok(())
    }
}

fn wrap(grid: &PhaseGrid, pt: [f64; 3]) -> [f64; 3] {
    let w = |v: f64, l: f64| (v + 0.5 * l).rem_euclid(l) - 0.5 * l;
    [w(pt[0], grid.lq), w(pt[1], grid.lp), w(pt[2], grid.lx)]
}

/// d/ds of samples of a 2π-periodic function of s.
fn periodic_derivative(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = if k < n / 2 {
            k as f64
        } else if k == n / 2 && n % 2 == 0 {
            0.0
        } else {
            k as f64 - n as f64
        };
        *b *= C64::new(0.0, kk / n as f64);
    }
    inv.process(&mut buf);
    buf.into_iter().map(|v| v.re).collect()
}

/// Trigonometric interpolant of a hybrid wavefunction, evaluable off-grid
/// together with its first and second x-derivatives.
#[derive(Debug, Clone)]
pub struct SpectralInterpolant {
    grid: PhaseGrid,
    coeff: Vec<C64>,
    kq: Vec<f64>,
    kp: Vec<f64>,
    kx: Vec<f64>,
}

impl SpectralInterpolant {
    pub fn new(psi: &HybridWavefunction) -> Result<Self> {
        let g = &psi.grid;
        if g.mode != Mode::Continuum {
            return Err(Error::InvalidAxis {
                axis: Axis::X,
                mode: g.mode,
            });
        }
        Ok(SpectralInterpolant {
            grid: g.clone(),
            coeff: g.fourier_coefficients(&psi.data)?,
            kq: g.wavenumbers(Axis::Q),
            kp: g.wavenumbers(Axis::P),
            kx: g.wavenumbers(Axis::X),
        })
    }

    /// Basis values e^{ik(y − y₀)} along one axis; the Nyquist mode uses the
    /// symmetric cosine so the interpolant of real data stays real.
    fn basis(k: &[f64], y: f64, order: u32) -> Vec<C64> {
        let n = k.len();
        k.iter()
            .enumerate()
            .map(|(j, &kk)| {
                let ph = kk * y;
                if j == n / 2 {
                    match order {
                        0 => C64::new(ph.cos(), 0.0),
                        1 => C64::new(-kk * ph.sin(), 0.0),
                        _ => C64::new(-kk * kk * ph.cos(), 0.0),
                    }
                } else {
                    C64::from_polar(1.0, ph) * C64::new(0.0, kk).powu(order)
                }
            })
            .collect()
    }

    /// (Υ, ∂_xΥ, ∂²_xΥ) at an arbitrary point.
    pub fn eval(&self, pt: [f64; 3]) -> [C64; 3] {
        let g = &self.grid;
        let eq = Self::basis(&self.kq, pt[0] + 0.5 * g.lq, 0);
        let ep = Self::basis(&self.kp, pt[1] + 0.5 * g.lp, 0);
        let y = pt[2] + 0.5 * g.lx;
        let ex = [
            Self::basis(&self.kx, y, 0),
            Self::basis(&self.kx, y, 1),
            Self::basis(&self.kx, y, 2),
        ];
        let (np, nx) = (g.np, g.nx);
        let mut out = [C64::new(0.0, 0.0); 3];
        for (iq, bq) in eq.iter().enumerate() {
            for (ip, bp) in ep.iter().enumerate() {
                let line = &self.coeff[(iq * np + ip) * nx..(iq * np + ip + 1) * nx];
                let w = bq * bp;
                for (o, e) in out.iter_mut().zip(&ex) {
                    let s: C64 = line.iter().zip(e).map(|(c, b)| c * b).sum();
                    *o += w * s;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Trilinear interpolation of the sampled ∂_xS/m field.
    Trilinear,
    /// Trigonometric interpolation of Υ and its x-derivatives.
    Fourier,
}

#[derive(Debug, Clone)]
enum Frame {
    Trilinear {
        vx: Vec<f64>,
        mask: Vec<bool>,
    },
    Fourier {
        interp: Box<SpectralInterpolant>,
        threshold: f64,
    },
}

/// Snapshots of the hybrid velocity field at equal time spacing.
#[derive(Debug, Clone)]
pub struct VelocityHistory {
    grid: PhaseGrid,
    potential: Potential,
    params: ModelParams,
    spacing: f64,
    frames: Vec<Frame>,
}

fn inverse_mass(params: &ModelParams) -> f64 {
    if params.m.is_infinite() {
        0.0
    } else {
        1.0 / params.m
    }
}

impl VelocityHistory {
    pub fn new(
        snapshots: &[HybridWavefunction],
        spacing: f64,
        h: &HybridHamiltonian,
        interpolation: Interpolation,
        node_threshold: f64,
    ) -> Result<Self> {
        let (potential, params) = match h {
            HybridHamiltonian::Separable { potential, params } => (potential.clone(), *params),
            HybridHamiltonian::MatrixValued { .. } => {
                return Err(Error::UnsupportedVariant(
                    "trajectories need a separable hamiltonian",
                ))
            }
        };
        if snapshots.is_empty() {
            return Err(Error::InsufficientSnapshots { need: 1, got: 0 });
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "snapshot spacing must be positive, got {spacing}"
            )));
        }
        let grid = snapshots[0].grid.clone();
        h.check_grid(&grid)?;
        let im = inverse_mass(&params);
        let frames = snapshots
            .par_iter()
            .map(|psi| -> Result<Frame> {
                Ok(match interpolation {
                    Interpolation::Trilinear => {
                        let f = crate::madelung::LocalFields::compute(
                            psi,
                            params.hbar,
                            node_threshold,
                        )?;
                        Frame::Trilinear {
                            vx: f.sx.iter().map(|s| s * im).collect(),
                            mask: f.mask,
                        }
                    }
                    Interpolation::Fourier => {
                        let dmax = psi.density().into_iter().fold(0.0, f64::max);
                        Frame::Fourier {
                            interp: Box::new(SpectralInterpolant::new(psi)?),
                            threshold: node_threshold * dmax,
                        }
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VelocityHistory {
            grid,
            potential,
            params,
            spacing,
            frames,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    fn trilinear(&self, field: &[f64], mask: &[bool], pt: [f64; 3]) -> Option<f64> {
        let g = &self.grid;
        let w = wrap(g, pt);
        let locate = |v: f64, l: f64, h: f64, n: usize| {
            let u = (v + 0.5 * l) / h;
            let i = u.floor();
            ((i as i64).rem_euclid(n as i64) as usize, u - i)
        };
        let (iq, fq) = locate(w[0], g.lq, g.hq(), g.nq);
        let (ip, fp) = locate(w[1], g.lp, g.hp(), g.np);
        let (ix, fx) = locate(w[2], g.lx, g.hx(), g.nx);
        let mut acc = 0.0;
        for (dq, wq) in [(0, 1.0 - fq), (1, fq)] {
            for (dp, wp) in [(0, 1.0 - fp), (1, fp)] {
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let k = g.idx((iq + dq) % g.nq, (ip + dp) % g.np, (ix + dx) % g.nx);
                    if !mask[k] {
                        return None;
                    }
                    acc += wq * wp * wx * field[k];
                }
            }
        }
        Some(acc)
    }

    /// ∂_xS/m at a point of frame `frame`; `None` inside the node region.
    pub fn quantum_velocity(&self, frame: usize, pt: [f64; 3]) -> Option<f64> {
        match &self.frames[frame] {
            Frame::Trilinear { vx, mask } => self.trilinear(vx, mask, pt),
            Frame::Fourier { interp, threshold } => {
                let [v, vx, _] = interp.eval(pt);
                let d = v.norm_sqr();
                if d <= *threshold {
                    return None;
                }
                Some(self.params.hbar * inverse_mass(&self.params) * (v.conj() * vx).im / d)
            }
        }
    }

    /// 𝖷 at a point of frame `frame`.
    pub fn velocity(&self, frame: usize, pt: [f64; 3]) -> Option<[f64; 3]> {
        let vx = self.quantum_velocity(frame, pt)?;
        Some([
            pt[1] / self.params.big_m,
            -self.potential.dq(pt[0], pt[2]),
            vx,
        ])
    }

    /// 𝓛 = L_I + |∂_xS|²/2m + (ħ²/2m)Δ_x√D/√D at a point; needs Fourier frames.
    pub fn lagrangian(&self, frame: usize, pt: [f64; 3]) -> Result<Option<f64>> {
        let Frame::Fourier { interp, threshold } = &self.frames[frame] else {
            return Err(Error::InvalidParameter(
                "the hybrid Lagrangian along trajectories needs Fourier interpolation".into(),
            ));
        };
        let [v, vx, vxx] = interp.eval(pt);
        let d = v.norm_sqr();
        if d <= *threshold {
            return Ok(None);
        }
        let inv = v.conj() / d;
        let rx = inv * vx;
        let sx = self.params.hbar * rx.im;
        let qpot = (inv * vxx).re + rx.im * rx.im;
        let li = pt[1] * pt[1] / (2.0 * self.params.big_m) - self.potential.value(pt[0], pt[2]);
        Ok(Some(
            li + 0.5 * inverse_mass(&self.params) * sx * sx
                + self.params.kinetic_coefficient() * qpot,
        ))
    }

    /// S = ħ arg Υ at a point (wrapped to (−πħ, πħ]); needs Fourier frames.
    pub fn phase(&self, frame: usize, pt: [f64; 3]) -> Result<f64> {
        let Frame::Fourier { interp, .. } = &self.frames[frame] else {
            return Err(Error::InvalidParameter(
                "phase sampling along trajectories needs Fourier interpolation".into(),
            ));
        };
        Ok(self.params.hbar * interp.eval(pt)[0].arg())
    }
}

type Stage = [f64; 4];

fn rk4_step<F>(y: Stage, dt: f64, mut f: F) -> Option<Stage>
where
    F: FnMut(usize, Stage) -> Option<Stage>,
{
    let add = |a: Stage, s: f64, b: Stage| {
        [
            a[0] + s * b[0],
            a[1] + s * b[1],
            a[2] + s * b[2],
            a[3] + s * b[3],
        ]
    };
    let k1 = f(0, y)?;
    let k2 = f(1, add(y, 0.5 * dt, k1))?;
    let k3 = f(1, add(y, 0.5 * dt, k2))?;
    let k4 = f(2, add(y, dt, k3))?;
    Some([
        y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        y[3] + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    ])
}

/// RK4 advection through the history starting at frame `start`. Each step
/// spans two snapshot intervals, with the middle stages on the intermediate
/// snapshot. Returns the ensemble after every step, starting with the input.
pub fn advect_trajectories(
    ensemble: &TrajectoryEnsemble,
    history: &VelocityHistory,
    start: usize,
    steps: usize,
) -> Result<Vec<TrajectoryEnsemble>> {
    let need = start + 2 * steps + 1;
    if need > history.frames() {
        return Err(Error::InsufficientSnapshots {
            need,
            got: history.frames(),
        });
    }
    let dt = 2.0 * history.spacing;
    let mut out = vec![ensemble.clone()];
    for step in 0..steps {
        let prev = out.last().unwrap();
        let f0 = start + 2 * step;
        let moved: Vec<(Option<[f64; 3]>, bool)> = prev
            .points
            .par_iter()
            .zip(&prev.flagged)
            .map(|(pt, &flag)| {
                if flag {
                    return (None, true);
                }
                let r = rk4_step([pt[0], pt[1], pt[2], 0.0], dt, |stage, y| {
                    let v = history.velocity(f0 + stage, [y[0], y[1], y[2]])?;
                    Some([v[0], v[1], v[2], 0.0])
                });
                match r {
                    Some(y) => (Some([y[0], y[1], y[2]]), false),
                    None => (None, true),
                }
            })
            .collect();
        let mut next = prev.clone();
        for (i, (pt, flag)) in moved.into_iter().enumerate() {
            if let Some(pt) = pt {
                next.points[i] = pt;
            }
            next.flagged[i] = flag;
        }
        out.push(next);
    }
    Ok(out)
}

/// One row of the loop diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSample {
    pub t: f64,
    pub loop_integral: f64,
    /// d/dt ∮p dq by a fourth-order centered difference.
    pub lhs_rate: f64,
    /// ∮∂_xV dx.
    pub rhs_rate: f64,
    pub degenerate: bool,
}

/// Both sides of d/dt ∮_γ p dq = ∮_γ ∂_xV dx for a loop sampled at times
/// t0 + k·interval. Rows are produced for every sample with two neighbours on
/// each side.
pub fn poincare_loop_rate(
    loops: &[TrajectoryEnsemble],
    t0: f64,
    interval: f64,
    potential: &Potential,
) -> Result<Vec<LoopSample>> {
    if loops.len() < 5 {
        return Err(Error::InsufficientSnapshots {
            need: 5,
            got: loops.len(),
        });
    }
    if loops.iter().any(|l| l.flagged.iter().any(|&f| f)) {
        return Err(Error::InvalidParameter(
            "a loop point entered a node region".into(),
        ));
    }
    let integrals = loops
        .iter()
        .map(|l| l.loop_integral())
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(loops.len() - 4);
    for k in 2..loops.len() - 2 {
        let lhs = (integrals[k - 2] - 8.0 * integrals[k - 1] + 8.0 * integrals[k + 1]
            - integrals[k + 2])
            / (12.0 * interval);
        out.push(LoopSample {
            t: t0 + k as f64 * interval,
            loop_integral: integrals[k],
            lhs_rate: lhs,
            rhs_rate: loops[k].potential_circulation(potential)?,
            degenerate: loops[k].is_degenerate(),
        });
    }
    Ok(out)
}

/// Phase carried along one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTransport {
    /// S(t, Φ(t)) − S(0, Φ(0)), unwrapped in time.
    pub phase_change: f64,
    /// ∫𝓛(τ, Φ(τ)) dτ.
    pub action: f64,
    pub defect: f64,
}

/// Integrates Φ̇ = 𝖷(Φ) together with the action ∫𝓛 dτ from frame `start`
/// over `steps` double-interval steps, and compares with the change of S
/// along the trajectory.
pub fn phase_transport(
    history: &VelocityHistory,
    start_point: [f64; 3],
    start: usize,
    steps: usize,
) -> Result<PhaseTransport> {
    let need = start + 2 * steps + 1;
    if need > history.frames() {
        return Err(Error::InsufficientSnapshots {
            need,
            got: history.frames(),
        });
    }
    let hbar = history.params.hbar;
    let dt = 2.0 * history.spacing;
    let mut y = [start_point[0], start_point[1], start_point[2], 0.0];
    let mut s_prev = history.phase(start, start_point)?;
    let mut change = 0.0;
    for step in 0..steps {
        let f0 = start + 2 * step;
        let mut failure = None;
        let next = rk4_step(y, dt, |stage, z| {
            let pt = [z[0], z[1], z[2]];
            let v = history.velocity(f0 + stage, pt)?;
            match history.lagrangian(f0 + stage, pt) {
                Ok(Some(l)) => Some([v[0], v[1], v[2], l]),
                Ok(None) => None,
                Err(e) => {
                    failure.get_or_insert(e);
                    None
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        y =
            next.ok_or_else(|| Error::DegenerateState("trajectory entered a node region".into()))?;
        let s = history.phase(f0 + 2, [y[0], y[1], y[2]])?;
        let period = 2.0 * PI * hbar;
        let mut d = s - s_prev;
        d -= period * (d / period).round();
        change += d;
        s_prev = s;
    }
    Ok(PhaseTransport {
        phase_change: change,
        action: y[3],
        defect: (change - y[3]).abs(),
    })
}

/// Appends `t,id,q,p,x` rows (wrapped coordinates) for one ensemble.
pub fn write_trajectory_rows<W: Write>(
    w: &mut W,
    t: f64,
    grid: &PhaseGrid,
    e: &TrajectoryEnsemble,
) -> Result<()> {
    for (id, pt) in e.wrapped(grid).iter().enumerate() {
        writeln!(
            w,
            "{:.16e},{},{:.16e},{:.16e},{:.16e}",
            t, id, pt[0], pt[1], pt[2]
        )?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str = "t,id,q,p,x";
pub const LOOP_HEADER: &str = "t,loop_integral,lhs_rate,rhs_rate";

pub fn write_loop_rows<W: Write>(w: &mut W, rows: &[LoopSample]) -> Result<()> {
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.loop_integral, r.lhs_rate, r.rhs_rate
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterclockwise_ellipse_encloses_negative_action() {
        let e = TrajectoryEnsemble::ellipse([0.3, 0.1, 0.0], [0.5, 0.25, 0.0], 64).unwrap();
        let a = e.loop_integral().unwrap();
        assert!((a + PI * 0.5 * 0.25).abs() < 1e-13, "{a}");
    }

    #[test]
    fn flat_loop_has_no_potential_circulation() {
        let e = TrajectoryEnsemble::ellipse([0.0, 0.0, 1.0], [0.5, 0.5, 0.0], 64).unwrap();
        let v = crate::model::pendulum_bilinear(ModelParams::default());
        let HybridHamiltonian::Separable { potential, .. } = v else {
            unreachable!()
        };
        assert!(e.potential_circulation(&potential).unwrap().abs() < 1e-15);
    }

    #[test]
    fn interpolant_reproduces_grid_values() {
        let g = PhaseGrid::continuum(8, 8, 8, 2.0 * PI, 6.0, 2.0 * PI).unwrap();
        let psi = crate::liouvillian::probe_state(&g, 1.0);
        let it = SpectralInterpolant::new(&psi).unwrap();
        let dx = g.spectral_derivative(&psi.data, g.nx, Axis::X).unwrap();
        for &(iq, ip, ix) in &[(0, 0, 0), (3, 5, 2), (7, 1, 6)] {
            let k = g.idx(iq, ip, ix);
            let [v, vx, _] = it.eval([g.q(iq), g.p(ip), g.x(ix)]);
            assert!((v - psi.data[k]).norm() < 1e-12);
            assert!((vx - dx[k]).norm() < 1e-12);
        }
    }
}
