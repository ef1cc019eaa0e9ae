//! Initial-state constructors: products of a phase-space profile and a quantum
//! state.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Mode, PhaseGrid};
use crate::liouvillian::HybridWavefunction;

/// von Mises profile in q times a Gaussian in p:
/// Ψ(q, p) = exp(κ (cos(2π(q − q₀)/L_q) − 1)/2 − (p − p₀)²/4σ_p²) e^{i k_q q}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseProfile {
    pub q0: f64,
    pub p0: f64,
    pub kappa: f64,
    pub sigma_p: f64,
    /// Integer number of q-windings of an optional plane-wave factor.
    pub winding_q: i64,
}

impl Default for PhaseProfile {
    fn default() -> Self {
        PhaseProfile {
            q0: 0.0,
            p0: 0.0,
            kappa: 2.0,
            sigma_p: 0.5,
            winding_q: 0,
        }
    }
}

impl PhaseProfile {
    pub fn sample(&self, grid: &PhaseGrid) -> Result<Vec<C64>> {
        if !(self.sigma_p > 0.0) || self.kappa < 0.0 {
            return Err(Error::InvalidParameter(
                "sigma_p must be positive and kappa non-negative".into(),
            ));
        }
        let kq = 2.0 * PI / grid.lq;
        let mut out = Vec::with_capacity(grid.phase_len());
        for iq in 0..grid.nq {
            let q = grid.q(iq);
            let aq = 0.5 * self.kappa * ((kq * (q - self.q0)).cos() - 1.0);
            let wave = C64::from_polar(1.0, kq * self.winding_q as f64 * q);
            for ip in 0..grid.np {
                let dp = grid.p(ip) - self.p0;
                let a = aq - dp * dp / (4.0 * self.sigma_p * self.sigma_p);
                out.push(wave * a.exp());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumProfile {
    /// (cos θ/2, e^{iφ} sin θ/2, 0, …) on n levels.
    Spinor { theta: f64, phi: f64 },
    /// Explicit level amplitudes.
    Levels(Vec<C64>),
    /// e^{i k x}(1 + a cos(2πx/L_x)) on the continuum grid; k in windings.
    PlaneWave { winding: i64, modulation: f64 },
    /// von Mises bump exp(κ(cos(2π(x − x₀)/L_x) − 1)/2) e^{i k x}.
    Bump { x0: f64, kappa: f64, winding: i64 },
}

impl QuantumProfile {
    pub fn sample(&self, grid: &PhaseGrid) -> Result<Vec<C64>> {
        let n = grid.nx;
        let kx = 2.0 * PI / grid.lx;
        let v = match (self, grid.mode) {
            (QuantumProfile::Spinor { theta, phi }, Mode::FiniteDim) => {
                let mut v = vec![C64::new(0.0, 0.0); n];
                v[0] = C64::new((0.5 * theta).cos(), 0.0);
                if n > 1 {
                    v[1] = C64::from_polar((0.5 * theta).sin(), *phi);
                }
                v
            }
            (QuantumProfile::Levels(a), Mode::FiniteDim) => {
                if a.len() != n {
                    return Err(Error::shape(&[n], &[a.len()]));
                }
                a.clone()
            }
            (
                QuantumProfile::PlaneWave {
                    winding,
                    modulation,
                },
                Mode::Continuum,
            ) => (0..n)
                .map(|i| {
                    let x = grid.x(i);
                    C64::from_polar(1.0 + modulation * (kx * x).cos(), kx * *winding as f64 * x)
                })
                .collect(),
            (QuantumProfile::Bump { x0, kappa, winding }, Mode::Continuum) => (0..n)
                .map(|i| {
                    let x = grid.x(i);
                    let amp = (0.5 * kappa * ((kx * (x - x0)).cos() - 1.0)).exp();
                    C64::from_polar(amp, kx * *winding as f64 * x)
                })
                .collect(),
            (p, m) => {
                return Err(Error::ModeMismatch(format!(
                    "quantum profile {p:?} on a {m:?} grid"
                )))
            }
        };
        if v.iter().all(|c| c.norm() == 0.0) {
            return Err(Error::DegenerateState("quantum profile vanishes".into()));
        }
        Ok(v)
    }
}

/// Normalized product Υ(z, x) = Ψ(z) ψ(x).
pub fn product_state(
    grid: &PhaseGrid,
    phase: &[C64],
    quantum: &[C64],
) -> Result<HybridWavefunction> {
    if phase.len() != grid.phase_len() {
        return Err(Error::shape(&[grid.nq, grid.np], &[phase.len()]));
    }
    if quantum.len() != grid.nx {
        return Err(Error::shape(&[grid.nx], &[quantum.len()]));
    }
    let mut data = Vec::with_capacity(grid.len());
    for a in phase {
        for b in quantum {
            data.push(a * b);
        }
    }
    let mut psi = HybridWavefunction::new(grid.clone(), data)?;
    psi.normalize()?;
    Ok(psi)
}

pub fn gaussian_product(
    grid: &PhaseGrid,
    phase: &PhaseProfile,
    quantum: &QuantumProfile,
) -> Result<HybridWavefunction> {
    product_state(grid, &phase.sample(grid)?, &quantum.sample(grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_normalized() {
        let g = PhaseGrid::finite_dim(16, 32, 2, 2.0 * PI, 12.0).unwrap();
        let psi = gaussian_product(
            &g,
            &PhaseProfile::default(),
            &QuantumProfile::Spinor {
                theta: 1.0,
                phi: 0.4,
            },
        )
        .unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spinor_on_continuum_is_rejected() {
        let g = PhaseGrid::continuum(8, 8, 8, 1.0, 1.0, 1.0).unwrap();
        let r = QuantumProfile::Spinor {
            theta: 0.0,
            phi: 0.0,
        }
        .sample(&g);
        assert!(matches!(r, Err(Error::ModeMismatch(_))));
    }
}
