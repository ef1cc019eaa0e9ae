//! Polar (Madelung) variables of a continuum-mode hybrid wavefunction, the
//! hybrid Hamilton-Jacobi and continuity residuals, velocity field, hybrid
//! Lagrangian and hybrid currents.
//!
//! Every derivative of the phase is taken from the gauge-invariant expression
//! ħ Im(Ῡ∂Υ)/|Υ|², so no unwrapping is needed except for the stored S itself.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::densities;
use crate::error::{Error, Result};
use crate::grid::{Axis, Mode, PhaseGrid};
use crate::liouvillian::HybridWavefunction;
use crate::model::HybridHamiltonian;

/// Default node threshold relative to max D.
pub const DEFAULT_NODE_THRESHOLD: f64 = 1e-10;

/// Υ = √D e^{iS/ħ} on the hybrid grid, with the node mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MadelungFields {
    pub grid: PhaseGrid,
    pub hbar: f64,
    pub d: Vec<f64>,
    /// Phase in units of action, unwrapped along x on every (q, p) line.
    pub s: Vec<f64>,
    /// `true` where D is above the node threshold.
    pub mask: Vec<bool>,
    /// Absolute threshold on D.
    pub threshold: f64,
}

fn require_continuum(grid: &PhaseGrid) -> Result<()> {
    if grid.mode != Mode::Continuum {
        return Err(Error::ModeMismatch(
            "Madelung variables need a continuous quantum coordinate".into(),
        ));
    }
    Ok(())
}

fn node_mask(d: &[f64], relative: f64) -> Result<(Vec<bool>, f64)> {
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let threshold = relative * dmax;
    if !(dmax > 0.0) {
        return Err(Error::DegenerateState(
            "wavefunction vanishes everywhere".into(),
        ));
    }
    let mask: Vec<bool> = d.iter().map(|&v| v > threshold).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::DegenerateState(
            "every point lies below the node threshold".into(),
        ));
    }
    Ok((mask, threshold))
}

/// D = |Υ|², S = ħ arg Υ unwrapped along x; S = 0 below `node_threshold · max D`.
pub fn polar_decompose(
    psi: &HybridWavefunction,
    hbar: f64,
    node_threshold: f64,
) -> Result<MadelungFields> {
    let g = &psi.grid;
    require_continuum(g)?;
    let d = psi.density();
    let (mask, threshold) = node_mask(&d, node_threshold)?;
    let mut s = vec![0.0; d.len()];
    for (line, chunk) in psi.data.chunks_exact(g.nx).enumerate() {
        let base = line * g.nx;
        let mut prev: Option<f64> = None;
        for (k, v) in chunk.iter().enumerate() {
            if !mask[base + k] {
                continue;
            }
            let mut a = v.arg();
            if let Some(pv) = prev {
                a += 2.0 * PI * ((pv - a) / (2.0 * PI)).round();
            }
            prev = Some(a);
            s[base + k] = hbar * a;
        }
    }
    Ok(MadelungFields {
        grid: g.clone(),
        hbar,
        d,
        s,
        mask,
        threshold,
    })
}

/// √D e^{iS/ħ}; zero inside the node mask.
pub fn reconstruct(fields: &MadelungFields) -> HybridWavefunction {
    let data = (0..fields.d.len())
        .map(|k| {
            if fields.mask[k] {
                C64::from_polar(fields.d[k].sqrt(), fields.s[k] / fields.hbar)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    HybridWavefunction {
        grid: fields.grid.clone(),
        data,
    }
}

/// Gauge-invariant local quantities of one snapshot.
#[derive(Debug, Clone)]
pub struct LocalFields {
    pub d: Vec<f64>,
    pub mask: Vec<bool>,
    /// ∂_qS, ∂_pS, ∂_xS (zero at nodes).
    pub sq: Vec<f64>,
    pub sp: Vec<f64>,
    pub sx: Vec<f64>,
    /// Δ_x√D/√D (zero at nodes).
    pub quantum_potential: Vec<f64>,
    /// D ∂_xS = ħ Im(Ῡ∂_xΥ), smooth through nodes.
    pub momentum_x: Vec<f64>,
}

impl LocalFields {
    pub fn compute(psi: &HybridWavefunction, hbar: f64, node_threshold: f64) -> Result<Self> {
        let g = &psi.grid;
        require_continuum(g)?;
        let d = psi.density();
        let (mask, _) = node_mask(&d, node_threshold)?;
        let n = g.nx;
        let dq = g.spectral_derivative(&psi.data, n, Axis::Q)?;
        let dp = g.spectral_derivative(&psi.data, n, Axis::P)?;
        let dx = g.spectral_derivative(&psi.data, n, Axis::X)?;
        let dxx = g.laplacian_x(&psi.data)?;
        let len = d.len();
        let mut sq = vec![0.0; len];
        let mut sp = vec![0.0; len];
        let mut sx = vec![0.0; len];
        let mut qp = vec![0.0; len];
        let mut mx = vec![0.0; len];
        for k in 0..len {
            let v = psi.data[k];
            mx[k] = hbar * (v.conj() * dx[k]).im;
            if !mask[k] {
                continue;
            }
            let inv = v.conj() / d[k];
            sq[k] = hbar * (inv * dq[k]).im;
            sp[k] = hbar * (inv * dp[k]).im;
            let rx = inv * dx[k];
            sx[k] = hbar * rx.im;
            qp[k] = (inv * dxx[k]).re + rx.im * rx.im;
        }
        Ok(LocalFields {
            d,
            mask,
            sq,
            sp,
            sx,
            quantum_potential: qp,
            momentum_x: mx,
        })
    }
}

fn inverse_mass(h: &HybridHamiltonian) -> f64 {
    let m = h.params().m;
    if m.is_infinite() {
        0.0
    } else {
        1.0 / m
    }
}

fn require_separable(h: &HybridHamiltonian) -> Result<()> {
    match h {
        HybridHamiltonian::Separable { .. } => Ok(()),
        HybridHamiltonian::MatrixValued { .. } => Err(Error::UnsupportedVariant(
            "Madelung diagnostics need a separable hamiltonian",
        )),
    }
}

/// 𝖷 = (p/M, −∂_qV, ∂_xS/m); the x-component is zero at nodes.
pub fn velocity_field(
    psi: &HybridWavefunction,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<[Vec<f64>; 3]> {
    require_separable(h)?;
    let f = LocalFields::compute(psi, h.params().hbar, node_threshold)?;
    let [vq, vp] = h.interaction_vector_field(&psi.grid)?;
    let im = inverse_mass(h);
    Ok([vq, vp, f.sx.iter().map(|s| s * im).collect()])
}

/// 𝓛 = L_I + |∂_xS|²/2m + (ħ²/2m)Δ_x√D/√D.
pub fn hybrid_lagrangian(
    psi: &HybridWavefunction,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<Vec<f64>> {
    require_separable(h)?;
    let f = LocalFields::compute(psi, h.params().hbar, node_threshold)?;
    let li = h.interaction_lagrangian(&psi.grid)?;
    let im = inverse_mass(h);
    let kin = h.params().kinetic_coefficient();
    Ok((0..li.len())
        .map(|k| li[k] + 0.5 * im * f.sx[k] * f.sx[k] + kin * f.quantum_potential[k])
        .collect())
}

/// Classical and quantum components of the hybrid current.
#[derive(Debug, Clone)]
pub struct HybridCurrents {
    /// J_C = 𝒟 X_{H_I}, components along q and p.
    pub classical: [Vec<f64>; 2],
    /// J_Q along x.
    pub quantum: Vec<f64>,
}

/// J_C = 𝒟 X_{H_I};
/// J_Q = (1/m)(D∂_xS + ∂_p(pD∂_xS) + {D∂_xS, S}) − (ħ²/4mD){D, ∂_xD}.
pub fn hybrid_currents(
    psi: &HybridWavefunction,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<HybridCurrents> {
    require_separable(h)?;
    let g = &psi.grid;
    let hbar = h.params().hbar;
    let f = LocalFields::compute(psi, hbar, node_threshold)?;
    let joint = densities::joint_distribution(psi, hbar)?;
    let [vq, vp] = h.interaction_vector_field(g)?;
    let classical = [
        joint.iter().zip(&vq).map(|(a, b)| a * b).collect(),
        joint.iter().zip(&vp).map(|(a, b)| a * b).collect(),
    ];
    let im = inverse_mass(h);
    let n = g.nx;
    let len = f.d.len();
    let pm: Vec<f64> = (0..len)
        .map(|k| g.p((k / n) % g.np) * f.momentum_x[k])
        .collect();
    let d_pm = g.spectral_derivative_real(&pm, n, Axis::P)?;
    let mq = g.spectral_derivative_real(&f.momentum_x, n, Axis::Q)?;
    let mp = g.spectral_derivative_real(&f.momentum_x, n, Axis::P)?;
    let dx_d = g.spectral_derivative_real(&f.d, n, Axis::X)?;
    let d_q = g.spectral_derivative_real(&f.d, n, Axis::Q)?;
    let d_p = g.spectral_derivative_real(&f.d, n, Axis::P)?;
    let dxd_q = g.spectral_derivative_real(&dx_d, n, Axis::Q)?;
    let dxd_p = g.spectral_derivative_real(&dx_d, n, Axis::P)?;
    let quantum = (0..len)
        .map(|k| {
            let bracket_s = mq[k] * f.sp[k] - mp[k] * f.sq[k];
            let mut j = f.momentum_x[k] + d_pm[k] + bracket_s;
            if f.mask[k] {
                let bracket_d = d_q[k] * dxd_p[k] - d_p[k] * dxd_q[k];
                j -= 0.25 * hbar * hbar * bracket_d / f.d[k];
            }
            im * j
        })
        .collect();
    Ok(HybridCurrents { classical, quantum })
}

/// A residual field and its norm.
#[derive(Debug, Clone)]
pub struct Residual {
    pub field: Vec<f64>,
    pub norm: f64,
}

/// Time-derivative stencil over consecutive snapshots spaced `spacing` apart.
/// Two snapshots give the midpoint rule, three or more the centered difference
/// around the middle snapshot; both are second order.
#[derive(Debug, Clone, Copy)]
enum Stencil {
    Midpoint,
    Centered(usize),
}

fn stencil(snapshots: &[HybridWavefunction], spacing: f64) -> Result<Stencil> {
    if snapshots.len() < 2 {
        return Err(Error::InsufficientSnapshots {
            need: 2,
            got: snapshots.len(),
        });
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "snapshot spacing must be positive, got {spacing}"
        )));
    }
    let g = &snapshots[0].grid;
    require_continuum(g)?;
    if snapshots.iter().any(|s| s.grid != *g) {
        return Err(Error::ModeMismatch(
            "snapshots live on different grids".into(),
        ));
    }
    Ok(if snapshots.len() == 2 {
        Stencil::Midpoint
    } else {
        Stencil::Centered(snapshots.len() / 2)
    })
}

fn masked_l2(grid: &PhaseGrid, r: &[f64], mask: &[bool]) -> f64 {
    let s: f64 = r
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| v * v)
        .sum();
    (s * grid.cell_weight()).sqrt()
}

/// Spatial parts of both Madelung equations for one snapshot:
/// (|∂_xS|²/2m − (ħ²/2m)Q − L_I − {H_I,S}, (1/m)∂_x(D∂_xS) − {H_I,D}).
fn madelung_spatial(
    psi: &HybridWavefunction,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<(Vec<f64>, Vec<f64>, LocalFields)> {
    let g = &psi.grid;
    let f = LocalFields::compute(psi, h.params().hbar, node_threshold)?;
    let li = h.interaction_lagrangian(g)?;
    let [vq, vp] = h.interaction_vector_field(g)?;
    let im = inverse_mass(h);
    let kin = h.params().kinetic_coefficient();
    let n = g.nx;
    let div_x = g.spectral_derivative_real(&f.momentum_x, n, Axis::X)?;
    let d_q = g.spectral_derivative_real(&f.d, n, Axis::Q)?;
    let d_p = g.spectral_derivative_real(&f.d, n, Axis::P)?;
    let len = f.d.len();
    // {H_I, F} = −X_{H_I}·∇F with X_{H_I} = (∂_pH_I, −∂_qH_I).
    let s_part = (0..len)
        .map(|k| {
            let bracket = -(vq[k] * f.sq[k] + vp[k] * f.sp[k]);
            0.5 * im * f.sx[k] * f.sx[k] - kin * f.quantum_potential[k] - li[k] - bracket
        })
        .collect();
    let d_part = (0..len)
        .map(|k| {
            let bracket = -(vq[k] * d_q[k] + vp[k] * d_p[k]);
            im * div_x[k] - bracket
        })
        .collect();
    Ok((s_part, d_part, f))
}

/// Residuals of ∂ₜS + |∂_xS|²/2m − (ħ²/2m)Δ_x√D/√D − L_I − {H_I,S} = 0 and
/// ∂ₜD + (1/m)∂_x(D∂_xS) − {H_I,D} = 0 from consecutive snapshots.
///
/// The S-residual norm is the D-weighted RMS over the unmasked region; the
/// D-residual norm is the masked L² norm.
pub fn madelung_residuals(
    snapshots: &[HybridWavefunction],
    spacing: f64,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<(Residual, Residual)> {
    require_separable(h)?;
    let st = stencil(snapshots, spacing)?;
    let g = &snapshots[0].grid;
    h.check_grid(g)?;
    let hbar = h.params().hbar;
    let (a, b) = match st {
        Stencil::Midpoint => (&snapshots[0], &snapshots[1]),
        Stencil::Centered(c) => (&snapshots[c - 1], &snapshots[c + 1]),
    };
    let width = match st {
        Stencil::Midpoint => spacing,
        Stencil::Centered(_) => 2.0 * spacing,
    };
    let (s_sp, d_sp, f) = match st {
        Stencil::Midpoint => {
            let (s0, d0, f0) = madelung_spatial(a, h, node_threshold)?;
            let (s1, d1, f1) = madelung_spatial(b, h, node_threshold)?;
            let s = s0
                .iter()
                .zip(&s1)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<_>>();
            let d = d0
                .iter()
                .zip(&d1)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<_>>();
            let mut f = f0;
            for k in 0..f.d.len() {
                f.d[k] = 0.5 * (f.d[k] + f1.d[k]);
                f.mask[k] = f.mask[k] && f1.mask[k];
            }
            (s, d, f)
        }
        Stencil::Centered(c) => madelung_spatial(&snapshots[c], h, node_threshold)?,
    };
    let len = f.d.len();
    let mut rs = vec![0.0; len];
    let mut rd = vec![0.0; len];
    for k in 0..len {
        let (ua, ub) = (a.data[k], b.data[k]);
        rd[k] = (ub.norm_sqr() - ua.norm_sqr()) / width + d_sp[k];
        if f.mask[k] {
            rs[k] = hbar * (ua.conj() * ub).arg() / width + s_sp[k];
        }
    }
    let mut wsum = 0.0;
    let mut rsum = 0.0;
    for k in 0..len {
        if f.mask[k] {
            wsum += f.d[k];
            rsum += f.d[k] * rs[k] * rs[k];
        }
    }
    let s_norm = (rsum / wsum).sqrt();
    let d_norm = masked_l2(g, &rd, &f.mask);
    Ok((
        Residual {
            field: rs,
            norm: s_norm,
        },
        Residual {
            field: rd,
            norm: d_norm,
        },
    ))
}

fn continuity_spatial(
    psi: &HybridWavefunction,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<Vec<f64>> {
    let g = &psi.grid;
    let j = hybrid_currents(psi, h, node_threshold)?;
    let n = g.nx;
    let a = g.spectral_derivative_real(&j.classical[0], n, Axis::Q)?;
    let b = g.spectral_derivative_real(&j.classical[1], n, Axis::P)?;
    let c = g.spectral_derivative_real(&j.quantum, n, Axis::X)?;
    Ok((0..a.len()).map(|k| a[k] + b[k] + c[k]).collect())
}

/// Masked L² norm of ∂ₜ𝒟 + div_z J_C + ∂_x J_Q from consecutive snapshots.
pub fn continuity_residual(
    snapshots: &[HybridWavefunction],
    spacing: f64,
    h: &HybridHamiltonian,
    node_threshold: f64,
) -> Result<Residual> {
    require_separable(h)?;
    let st = stencil(snapshots, spacing)?;
    let g = &snapshots[0].grid;
    h.check_grid(g)?;
    let hbar = h.params().hbar;
    let (a, b, width, div, mask) = match st {
        Stencil::Midpoint => {
            let d0 = continuity_spatial(&snapshots[0], h, node_threshold)?;
            let d1 = continuity_spatial(&snapshots[1], h, node_threshold)?;
            let m0 = node_mask(&snapshots[0].density(), node_threshold)?.0;
            let m1 = node_mask(&snapshots[1].density(), node_threshold)?.0;
            let div = d0
                .iter()
                .zip(&d1)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<_>>();
            let mask = m0
                .iter()
                .zip(&m1)
                .map(|(x, y)| *x && *y)
                .collect::<Vec<_>>();
            (&snapshots[0], &snapshots[1], spacing, div, mask)
        }
        Stencil::Centered(c) => (
            &snapshots[c - 1],
            &snapshots[c + 1],
            2.0 * spacing,
            continuity_spatial(&snapshots[c], h, node_threshold)?,
            node_mask(&snapshots[c].density(), node_threshold)?.0,
        ),
    };
    let ja = densities::joint_distribution(a, hbar)?;
    let jb = densities::joint_distribution(b, hbar)?;
    let field: Vec<f64> = (0..div.len())
        .map(|k| (jb[k] - ja[k]) / width + div[k])
        .collect();
    let norm = masked_l2(g, &field, &mask);
    Ok(Residual { field, norm })
}

/// L² norm over x of ∂ₜρ_q + ∂_x∫(D∂_xS/m)dz.
pub fn quantum_marginal_residual(
    snapshots: &[HybridWavefunction],
    spacing: f64,
    h: &HybridHamiltonian,
) -> Result<f64> {
    require_separable(h)?;
    let st = stencil(snapshots, spacing)?;
    let g = &snapshots[0].grid;
    let hbar = h.params().hbar;
    let im = inverse_mass(h);
    let n = g.nx;
    let marginal = |psi: &HybridWavefunction| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for c in psi.data.chunks_exact(n) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v.norm_sqr();
            }
        }
        out.into_iter().map(|v| v * g.phase_weight()).collect()
    };
    let flux_div = |psi: &HybridWavefunction| -> Result<Vec<f64>> {
        let dx = g.spectral_derivative(&psi.data, n, Axis::X)?;
        let mut flux = vec![C64::new(0.0, 0.0); n];
        for (k, (v, d)) in psi.data.iter().zip(&dx).enumerate() {
            flux[k % n] += C64::new(hbar * im * (v.conj() * d).im * g.phase_weight(), 0.0);
        }
        let shape = [1, 1, n];
        let mult = crate::grid::first_derivative_multiplier(n, g.lx);
        Ok(g.apply_multiplier(&flux, shape, 2, &mult)
            .into_iter()
            .map(|v| v.re)
            .collect())
    };
    let (a, b, width, div) = match st {
        Stencil::Midpoint => {
            let d0 = flux_div(&snapshots[0])?;
            let d1 = flux_div(&snapshots[1])?;
            let div = d0
                .iter()
                .zip(&d1)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<_>>();
            (&snapshots[0], &snapshots[1], spacing, div)
        }
        Stencil::Centered(c) => (
            &snapshots[c - 1],
            &snapshots[c + 1],
            2.0 * spacing,
            flux_div(&snapshots[c])?,
        ),
    };
    let ra = marginal(a);
    let rb = marginal(b);
    let s: f64 = (0..n)
        .map(|k| {
            let r = (rb[k] - ra[k]) / width + div[k];
            r * r
        })
        .sum();
    Ok((s * g.hx()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Potential};

    fn grid() -> PhaseGrid {
        PhaseGrid::continuum(8, 8, 16, 2.0 * PI, 8.0, 2.0 * PI).unwrap()
    }

    #[test]
    fn plane_wave_phase_is_unwrapped() {
        let g = grid();
        let k = 3.0;
        let data = (0..g.len())
            .map(|i| C64::from_polar(0.5, k * g.x(i % g.nx)))
            .collect();
        let psi = HybridWavefunction::new(g.clone(), data).unwrap();
        let f = polar_decompose(&psi, 1.0, DEFAULT_NODE_THRESHOLD).unwrap();
        for line in f.s.chunks_exact(g.nx) {
            for (i, w) in line.windows(2).enumerate() {
                let step = w[1] - w[0];
                assert!((step - k * g.hx()).abs() < 1e-12, "step {i}: {step}");
            }
        }
        assert!(f.d.iter().all(|d| (d - 0.25).abs() < 1e-15));
    }

    #[test]
    fn vanishing_state_is_degenerate() {
        let psi = HybridWavefunction::zeros(grid());
        assert!(matches!(
            polar_decompose(&psi, 1.0, DEFAULT_NODE_THRESHOLD),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn single_snapshot_is_rejected() {
        let g = grid();
        let h = HybridHamiltonian::Separable {
            potential: Potential::default(),
            params: ModelParams::default(),
        };
        let psi = crate::liouvillian::probe_state(&g, 1.0);
        let r = madelung_residuals(&[psi], 1e-3, &h, DEFAULT_NODE_THRESHOLD);
        assert!(matches!(
            r,
            Err(Error::InsufficientSnapshots { need: 2, got: 1 })
        ));
    }
}
