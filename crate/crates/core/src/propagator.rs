//! RK4 integration of iħ∂ₜΥ = L̂_ĤΥ, energy functional and a dense
//! exponential oracle for tiny grids.

use num_complex::Complex64 as C64;

use crate::densities;
use crate::error::{Error, Result};
use crate::linalg;
use crate::liouvillian::{HybridWavefunction, Liouvillian, DENSE_CAP};
use crate::model::HybridHamiltonian;

/// One row of the wave-run time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub norm: f64,
    pub energy: C64,
    pub trace_d: f64,
    pub rho_c_min: f64,
    pub rho_q_min_eig: f64,
    pub boundary_mass_p: f64,
}

impl Diagnostics {
    pub fn measure(l: &Liouvillian, psi: &HybridWavefunction, t: f64) -> Result<Self> {
        let s = densities::summarize(psi, l.hbar)?;
        Ok(Diagnostics {
            t,
            norm: psi.norm_sqr(),
            energy: total_energy(l, psi)?,
            trace_d: s.trace_d,
            rho_c_min: s.rho_c_min,
            rho_q_min_eig: s.rho_q_min_eig,
            boundary_mass_p: s.boundary_mass_p,
        })
    }
}

/// h(Υ) = ∫⟨Υ|L̂_ĤΥ⟩ dz.
pub fn total_energy(l: &Liouvillian, psi: &HybridWavefunction) -> Result<C64> {
    Ok(psi.inner(&l.apply(&psi.data)?))
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub psi: HybridWavefunction,
    pub t: f64,
    pub step: usize,
    pub dt: f64,
    pub series: Vec<Diagnostics>,
}

impl RunState {
    pub fn new(psi: HybridWavefunction, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(RunState {
            psi,
            t: 0.0,
            step: 0,
            dt,
            series: Vec::new(),
        })
    }

    fn rhs(l: &Liouvillian, v: &[C64]) -> Result<Vec<C64>> {
        let s = C64::new(0.0, -1.0 / l.hbar);
        Ok(l.apply(v)?.into_iter().map(|x| x * s).collect())
    }

    /// One classical RK4 step.
    pub fn step_rk4(&mut self, l: &Liouvillian) -> Result<()> {
        let dt_max = l.dt_max();
        if self.dt > dt_max {
            return Err(Error::StepTooLarge {
                dt: self.dt,
                dt_max,
            });
        }
        let dt = self.dt;
        let y = &self.psi.data;
        let axpy = |a: &[C64], s: f64, b: &[C64]| -> Vec<C64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let k1 = Self::rhs(l, y)?;
        let k2 = Self::rhs(l, &axpy(y, 0.5 * dt, &k1))?;
        let k3 = Self::rhs(l, &axpy(y, 0.5 * dt, &k2))?;
        let k4 = Self::rhs(l, &axpy(y, dt, &k3))?;
        let next: Vec<C64> = (0..y.len())
            .map(|i| y[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
            .collect();
        if let Some(bad) = next
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite {
                step: self.step + 1,
                t: self.t + dt,
                detail: format!("entry {bad} became {}", next[bad]),
            });
        }
        self.psi.data = next;
        self.step += 1;
        self.t = self.step as f64 * dt;
        Ok(())
    }

    pub fn record(&mut self, l: &Liouvillian) -> Result<Diagnostics> {
        let d = Diagnostics::measure(l, &self.psi, self.t)?;
        self.series.push(d);
        Ok(d)
    }
}

/// Integrates `steps` RK4 steps, recording diagnostics every step (and at
/// t = 0) and calling `on_snapshot` at t = 0 and every `snapshot_every` steps.
pub fn evolve<F>(
    psi0: HybridWavefunction,
    h: &HybridHamiltonian,
    dt: f64,
    steps: usize,
    snapshot_every: Option<usize>,
    mut on_snapshot: F,
) -> Result<RunState>
where
    F: FnMut(&RunState) -> Result<()>,
{
    let l = Liouvillian::new(&psi0.grid, h)?;
    evolve_with(psi0, &l, dt, steps, snapshot_every, &mut on_snapshot, true)
}

pub fn evolve_with<F>(
    psi0: HybridWavefunction,
    l: &Liouvillian,
    dt: f64,
    steps: usize,
    snapshot_every: Option<usize>,
    on_snapshot: &mut F,
    diagnostics: bool,
) -> Result<RunState>
where
    F: FnMut(&RunState) -> Result<()>,
{
    let mut state = RunState::new(psi0, dt)?;
    if diagnostics {
        state.record(l)?;
    }
    if snapshot_every.is_some() {
        on_snapshot(&state)?;
    }
    for _ in 0..steps {
        state.step_rk4(l)?;
        if diagnostics {
            state.record(l)?;
        }
        if let Some(every) = snapshot_every {
            if every > 0 && state.step % every == 0 {
                on_snapshot(&state)?;
            }
        }
    }
    Ok(state)
}

/// Spectral decomposition of a materialized Liouvillian, giving
/// Υ(t) = exp(−itL/ħ)Υ₀ for any t.
pub struct DenseOracle {
    dim: usize,
    hbar: f64,
    values: Vec<f64>,
    vectors: Vec<C64>,
}

impl DenseOracle {
    pub fn new(l: &Liouvillian) -> Result<Self> {
        let dim = l.dim();
        if dim > DENSE_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: DENSE_CAP,
            });
        }
        let m = l.materialize()?;
        let (values, vectors) = linalg::hermitian_eigen(&m, dim);
        Ok(DenseOracle {
            dim,
            hbar: l.hbar,
            values,
            vectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn propagate(&self, psi0: &HybridWavefunction, t: f64) -> Result<HybridWavefunction> {
        let d = self.dim;
        if psi0.data.len() != d {
            return Err(Error::shape(&[d], &[psi0.data.len()]));
        }
        let mut coeff = vec![C64::new(0.0, 0.0); d];
        for (k, c) in coeff.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..d {
                s += self.vectors[i * d + k].conj() * psi0.data[i];
            }
            *c = s * C64::from_polar(1.0, -t * self.values[k] / self.hbar);
        }
        let mut out = vec![C64::new(0.0, 0.0); d];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.vectors[i * d..(i + 1) * d];
            *o = row.iter().zip(&coeff).map(|(v, c)| v * c).sum();
        }
        HybridWavefunction::new(psi0.grid.clone(), out)
    }
}

pub fn dense_exponential_oracle(
    h: &HybridHamiltonian,
    psi0: &HybridWavefunction,
    t: f64,
) -> Result<HybridWavefunction> {
    let l = Liouvillian::new(&psi0.grid, h)?;
    DenseOracle::new(&l)?.propagate(psi0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use crate::liouvillian::probe_state;
    use crate::model::ModelParams;
    use crate::symbol::{MatrixSymbol, Profile};

    #[test]
    fn constant_hamiltonian_gives_phase() {
        let g = PhaseGrid::finite_dim(8, 8, 2, 2.0 * std::f64::consts::PI, 8.0).unwrap();
        let e = 0.8;
        let h = HybridHamiltonian::MatrixValued {
            symbol: MatrixSymbol::new(2).with_scalar(Profile::Const, e),
            params: ModelParams::default(),
        };
        let psi = probe_state(&g, 1.0);
        let dt = 1e-2;
        let end = evolve(psi.clone(), &h, dt, 1, None, |_| Ok(())).unwrap();
        let ph = C64::from_polar(1.0, -e * dt);
        let err = end
            .psi
            .data
            .iter()
            .zip(&psi.data)
            .map(|(a, b)| (a - b * ph).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-11);
    }

    #[test]
    fn step_guard_rejects_large_dt() {
        let g = PhaseGrid::finite_dim(8, 8, 2, 2.0 * std::f64::consts::PI, 8.0).unwrap();
        let h = crate::model::analytic_alpha(2, ModelParams::default());
        let l = Liouvillian::new(&g, &h).unwrap();
        let mut s = RunState::new(probe_state(&g, 1.0), 10.0 * l.dt_max()).unwrap();
        assert!(matches!(s.step_rk4(&l), Err(Error::StepTooLarge { .. })));
    }
}
