//! Hybrid density operator D̂(z), joint distribution 𝒟(z, x), and the classical
//! and quantum marginals.
//!
//! The bracket term iħ{Υ, Υ†} is evaluated in the conservative form
//! (iħ/2)[∂_p M_q − ∂_q M_p] with M_k = (∂_kΥ)Υ† − Υ(∂_kΥ)†, the exact discrete
//! adjoint of the split bracket used by the Liouvillian. With it the pairing
//! ∫⟨Υ|L̂_ÂΥ⟩ = Tr∫ÂD̂ holds to round-off for every periodic symbol.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Axis, Mode};
use crate::linalg;
use crate::liouvillian::{HybridWavefunction, Liouvillian, PointTransform};
use crate::symbol::MatrixSymbol;

/// n×n Hermitian matrix per phase-space point, `(q, p, n·n)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperatorField {
    pub n: usize,
    pub data: Vec<C64>,
}

impl DensityOperatorField {
    pub fn at(&self, cell: usize) -> &[C64] {
        let n2 = self.n * self.n;
        &self.data[cell * n2..(cell + 1) * n2]
    }

    pub fn cells(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    /// ρ_c(z) = Tr D̂(z).
    pub fn trace_field(&self) -> Vec<f64> {
        (0..self.cells())
            .map(|c| linalg::trace(self.at(c), self.n).re)
            .collect()
    }

    /// Diagonal entries, i.e. 𝒟(z, i) in the level basis.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n;
        (0..self.cells())
            .flat_map(|c| (0..n).map(move |i| (c, i)))
            .map(|(c, i)| self.data[c * n * n + i * n + i].re)
            .collect()
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        (0..self.cells())
            .map(|c| linalg::hermiticity_defect(self.at(c), self.n))
            .fold(0.0, f64::max)
    }
}

fn require_finite(psi: &HybridWavefunction) -> Result<()> {
    if psi.grid.mode != Mode::FiniteDim {
        return Err(Error::ModeMismatch(
            "the full density operator is available on finite-dimensional grids; use joint_distribution".into(),
        ));
    }
    Ok(())
}

/// D̂ = ΥΥ† + ∂_p(pΥΥ†) + iħ{Υ, Υ†}.
pub fn hybrid_density_operator(
    psi: &HybridWavefunction,
    hbar: f64,
) -> Result<DensityOperatorField> {
    require_finite(psi)?;
    let g = &psi.grid;
    let n = g.nx;
    let n2 = n * n;
    let dq = g.spectral_derivative(&psi.data, n, Axis::Q)?;
    let dp = g.spectral_derivative(&psi.data, n, Axis::P)?;
    let cells = g.phase_len();
    let mut rho = Vec::with_capacity(cells * n2);
    let mut p_rho = Vec::with_capacity(cells * n2);
    let mut mq = Vec::with_capacity(cells * n2);
    let mut mp = Vec::with_capacity(cells * n2);
    for c in 0..cells {
        let p = g.p(c % g.np);
        let v = &psi.data[c * n..(c + 1) * n];
        let vq = &dq[c * n..(c + 1) * n];
        let vp = &dp[c * n..(c + 1) * n];
        for i in 0..n {
            for j in 0..n {
                let r = v[i] * v[j].conj();
                rho.push(r);
                p_rho.push(r * p);
                mq.push(vq[i] * v[j].conj() - v[i] * vq[j].conj());
                mp.push(vp[i] * v[j].conj() - v[i] * vp[j].conj());
            }
        }
    }
    let d_p_rho = g.spectral_derivative(&p_rho, n2, Axis::P)?;
    let dp_mq = g.spectral_derivative(&mq, n2, Axis::P)?;
    let dq_mp = g.spectral_derivative(&mp, n2, Axis::Q)?;
    let ih2 = C64::new(0.0, 0.5 * hbar);
    let data = (0..rho.len())
        .map(|k| rho[k] + d_p_rho[k] + ih2 * (dp_mq[k] - dq_mp[k]))
        .collect();
    Ok(DensityOperatorField { n, data })
}

/// 𝒟 = |Υ|² + ∂_p(p|Υ|²) + ħ[∂_q Im(Ῡ∂_pΥ) − ∂_p Im(Ῡ∂_qΥ)] at every hybrid
/// point (x or level fastest).
pub fn joint_distribution(psi: &HybridWavefunction, hbar: f64) -> Result<Vec<f64>> {
    let g = &psi.grid;
    let n = g.nx;
    let dq = g.spectral_derivative(&psi.data, n, Axis::Q)?;
    let dp = g.spectral_derivative(&psi.data, n, Axis::P)?;
    let len = psi.data.len();
    let mut p_rho = Vec::with_capacity(len);
    let mut jq = Vec::with_capacity(len);
    let mut jp = Vec::with_capacity(len);
    for k in 0..len {
        let p = g.p((k / n) % g.np);
        let v = psi.data[k];
        p_rho.push(v.norm_sqr() * p);
        jq.push((v.conj() * dq[k]).im);
        jp.push((v.conj() * dp[k]).im);
    }
    let d_p_rho = g.spectral_derivative_real(&p_rho, n, Axis::P)?;
    let dq_jp = g.spectral_derivative_real(&jp, n, Axis::Q)?;
    let dp_jq = g.spectral_derivative_real(&jq, n, Axis::P)?;
    Ok((0..len)
        .map(|k| psi.data[k].norm_sqr() + d_p_rho[k] + hbar * (dq_jp[k] - dp_jq[k]))
        .collect())
}

/// ρ_c(z) = ∫𝒟 dx (or the level sum).
pub fn classical_density(psi: &HybridWavefunction, hbar: f64) -> Result<Vec<f64>> {
    let joint = joint_distribution(psi, hbar)?;
    let g = &psi.grid;
    let hx = g.hx();
    Ok(joint
        .chunks_exact(g.nx)
        .map(|c| c.iter().sum::<f64>() * hx)
        .collect())
}

/// ρ̂ = ∫ΥΥ† dz as an nx×nx matrix. On the continuum grid the entries carry
/// the quantum cell weight so that Tr ρ̂ = ‖Υ‖².
pub fn quantum_density_matrix(psi: &HybridWavefunction) -> Vec<C64> {
    let g = &psi.grid;
    let n = g.nx;
    let mut rho = linalg::zeros(n);
    for v in psi.data.chunks_exact(n) {
        for i in 0..n {
            for j in 0..n {
                rho[i * n + j] += v[i] * v[j].conj();
            }
        }
    }
    let w = g.cell_weight();
    rho.iter_mut().for_each(|r| *r *= w);
    rho
}

/// ρ_q(x) = ∫𝒟(z, x) dz.
pub fn quantum_marginal(psi: &HybridWavefunction, hbar: f64) -> Result<Vec<f64>> {
    let joint = joint_distribution(psi, hbar)?;
    let g = &psi.grid;
    let mut out = vec![0.0; g.nx];
    for c in joint.chunks_exact(g.nx) {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    let w = g.phase_weight();
    Ok(out.into_iter().map(|v| v * w).collect())
}

/// Both sides of ∫⟨Υ|L̂_ÂΥ⟩dz = Tr∫ÂD̂ dz and their difference.
#[derive(Debug, Clone, Copy)]
pub struct PairingResidual {
    pub lhs: C64,
    pub rhs: C64,
    pub residual: f64,
}

pub fn defining_identity_residual(
    observable: &MatrixSymbol,
    psi: &HybridWavefunction,
    hbar: f64,
) -> Result<PairingResidual> {
    require_finite(psi)?;
    let g = &psi.grid;
    if !observable.is_periodic(g) {
        return Err(Error::InvalidParameter(
            "pairing identity requires a periodic observable".into(),
        ));
    }
    let l = Liouvillian::from_symbol(g, observable, hbar)?;
    let lhs = psi.inner(&l.apply(&psi.data)?);
    let d = hybrid_density_operator(psi, hbar)?;
    let a = observable.evaluate(g);
    let n = g.nx;
    let mut s = C64::new(0.0, 0.0);
    for c in 0..g.phase_len() {
        s += linalg::trace_product(&a.v[c * n * n..(c + 1) * n * n], d.at(c), n);
    }
    let rhs = s * g.phase_weight();
    Ok(PairingResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).norm(),
    })
}

/// Relative deviation of D̂(UΥ) from the transformed D̂(Υ): translated field for
/// phase-space shifts, ÛD̂Û† for quantum unitaries.
pub fn density_equivariance_residual(
    t: &PointTransform,
    psi: &HybridWavefunction,
    hbar: f64,
) -> Result<f64> {
    require_finite(psi)?;
    let g = &psi.grid;
    let n = g.nx;
    let n2 = n * n;
    let lhs = hybrid_density_operator(&t.apply(psi, hbar)?, hbar)?;
    let base = hybrid_density_operator(psi, hbar)?;
    let u = match &t.quantum {
        crate::liouvillian::QuantumAction::Unitary(u) => Some(u.clone()),
        crate::liouvillian::QuantumAction::Identity => None,
        q => {
            return Err(Error::ModeMismatch(format!(
                "{q:?} on a finite-dimensional grid"
            )))
        }
    };
    let wrap = |i: i64, m: usize| i.rem_euclid(m as i64) as usize;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for iq in 0..g.nq {
        for ip in 0..g.np {
            let src = wrap(iq as i64 - t.shift_q, g.nq) * g.np + wrap(ip as i64 - t.shift_p, g.np);
            let mut expected = base.at(src).to_vec();
            if let Some(u) = &u {
                expected =
                    linalg::matmul(&linalg::matmul(u, &expected, n), &linalg::adjoint(u, n), n);
            }
            let got = &lhs.data[(iq * g.np + ip) * n2..(iq * g.np + ip + 1) * n2];
            worst = worst.max(linalg::max_abs_diff(got, &expected));
            scale = scale.max(expected.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}

/// Scalar diagnostics of a wavefunction used in the run time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySummary {
    pub trace_d: f64,
    pub rho_c_min: f64,
    pub rho_q_min_eig: f64,
    pub boundary_mass_p: f64,
}

pub fn summarize(psi: &HybridWavefunction, hbar: f64) -> Result<DensitySummary> {
    let g = &psi.grid;
    let rho_c = classical_density(psi, hbar)?;
    let trace_d = g.integrate_phase_real(&rho_c)?;
    let rho_c_min = rho_c.iter().copied().fold(f64::INFINITY, f64::min);
    let rho_q = quantum_density_matrix(psi);
    let rho_q_min_eig = linalg::min_eigenvalue_hermitian(&rho_q, g.nx);
    let boundary_mass_p = g.boundary_mass(&psi.density(), g.nx)?;
    Ok(DensitySummary {
        trace_d,
        rho_c_min,
        rho_q_min_eig,
        boundary_mass_p,
    })
}

/// Trace distance ½‖ρ − σ‖₁ between Hermitian matrices.
pub fn trace_distance(a: &[C64], b: &[C64], n: usize) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    0.5 * linalg::hermitian_eigen(&d, n)
        .0
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use crate::liouvillian::probe_state;

    #[test]
    fn joint_distribution_is_diagonal_of_operator() {
        let g = PhaseGrid::finite_dim(16, 32, 2, 2.0 * std::f64::consts::PI, 12.0).unwrap();
        let psi = probe_state(&g, 1.0);
        let d = hybrid_density_operator(&psi, 1.0).unwrap();
        let j = joint_distribution(&psi, 1.0).unwrap();
        let diag = d.diagonal();
        for (a, b) in diag.iter().zip(&j) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!(d.max_hermiticity_defect() < 1e-12);
    }
}
