//! Closure model for a classical density D(z), a normalized density-matrix
//! field ρ̂(z) and a covector field u(z):
//!
//! ∂ₜD + div(D⟨X_Ĥ⟩) = 0,
//! ∂ₜρ̂ + ⟨X_Ĥ⟩·∇ρ̂ = −(i/ħ)[K̂, ρ̂],   K̂ = u·X_Ĥ − L_Ĥ,
//! (∂ₜ + £_{⟨X_Ĥ⟩})(u − 𝒜) = (u − 𝒜)·Tr(X_Ĥ ∇ρ̂),
//!
//! with ⟨X_Ĥ⟩ = Tr(ρ̂X_Ĥ). On u = 𝒜 the generator K̂ reduces to Ĥ.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Axis, Mode, PhaseGrid};
use crate::linalg;
use crate::model::HybridHamiltonian;
use crate::symbol::SymbolJets;

/// Trace deviation beyond which a density-matrix field is considered corrupt.
pub const TRACE_CORRUPTION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureState {
    pub grid: PhaseGrid,
    pub t: f64,
    /// D on the phase grid.
    pub d: Vec<f64>,
    /// ρ̂ as n×n row-major blocks per phase-space point.
    pub rho: Vec<C64>,
    /// u = (u_q, u_p).
    pub u: [Vec<f64>; 2],
}

impl ClosureState {
    /// State with u = 𝒜 = p dq.
    pub fn canonical(grid: &PhaseGrid, d: Vec<f64>, rho: Vec<C64>) -> Result<Self> {
        let u = canonical_one_form(grid);
        Self::new(grid, d, rho, u)
    }

    pub fn new(grid: &PhaseGrid, d: Vec<f64>, rho: Vec<C64>, u: [Vec<f64>; 2]) -> Result<Self> {
        if grid.mode != Mode::FiniteDim {
            return Err(Error::ModeMismatch(
                "the closure model lives on a finite-dimensional grid".into(),
            ));
        }
        let cells = grid.phase_len();
        let n = grid.nx;
        if d.len() != cells {
            return Err(Error::shape(&[grid.nq, grid.np], &[d.len()]));
        }
        if rho.len() != cells * n * n {
            return Err(Error::shape(&[grid.nq, grid.np, n * n], &[rho.len()]));
        }
        if u[0].len() != cells || u[1].len() != cells {
            return Err(Error::shape(&[grid.nq, grid.np], &[u[0].len(), u[1].len()]));
        }
        Ok(ClosureState {
            grid: grid.clone(),
            t: 0.0,
            d,
            rho,
            u,
        })
    }

    /// The same density matrix at every phase-space point.
    pub fn uniform_rho(grid: &PhaseGrid, rho0: &[C64]) -> Result<Vec<C64>> {
        let n = grid.nx;
        if rho0.len() != n * n {
            return Err(Error::shape(&[n, n], &[rho0.len()]));
        }
        Ok(rho0
            .iter()
            .copied()
            .cycle()
            .take(grid.phase_len() * n * n)
            .collect())
    }

    pub fn n(&self) -> usize {
        self.grid.nx
    }

    pub fn mass(&self) -> f64 {
        self.d.iter().sum::<f64>() * self.grid.phase_weight()
    }

    /// max_z |Tr ρ̂(z) − 1|.
    pub fn max_trace_deviation(&self) -> f64 {
        let n = self.n();
        self.rho
            .chunks_exact(n * n)
            .map(|r| (linalg::trace(r, n) - 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// min_z of the smallest eigenvalue of ρ̂(z).
    pub fn min_rho_eigenvalue(&self) -> f64 {
        let n = self.n();
        self.rho
            .par_chunks_exact(n * n)
            .map(|r| linalg::min_eigenvalue_hermitian(r, n))
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// max_z |u − 𝒜|.
    pub fn invariant_deviation(&self) -> f64 {
        let w = self.displacement();
        w[0].iter().chain(&w[1]).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// w = u − 𝒜.
    fn displacement(&self) -> [Vec<f64>; 2] {
        let g = &self.grid;
        [
            (0..g.phase_len())
                .map(|c| self.u[0][c] - g.p(c % g.np))
                .collect(),
            self.u[1].clone(),
        ]
    }

    fn check_finite(&self, step: usize) -> Result<()> {
        let bad_real = self
            .d
            .iter()
            .chain(&self.u[0])
            .chain(&self.u[1])
            .any(|v| !v.is_finite());
        let bad_rho = self
            .rho
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()));
        if bad_real || bad_rho {
            return Err(Error::NonFinite {
                step,
                t: self.t,
                detail: "closure fields".into(),
            });
        }
        Ok(())
    }
}

/// 𝒜 = p dq on the phase grid.
pub fn canonical_one_form(grid: &PhaseGrid) -> [Vec<f64>; 2] {
    [
        (0..grid.phase_len()).map(|c| grid.p(c % grid.np)).collect(),
        vec![0.0; grid.phase_len()],
    ]
}

/// Symbol jets of a matrix-valued Hamiltonian together with ħ.
#[derive(Debug, Clone)]
pub struct ClosureModel {
    pub grid: PhaseGrid,
    pub hbar: f64,
    jets: SymbolJets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureVariant {
    /// u ≡ 𝒜; only D and ρ̂ evolve.
    Reduced,
    /// D, ρ̂ and u evolve.
    General,
}

struct Rates {
    d: Vec<f64>,
    rho: Vec<C64>,
    w: Option<[Vec<f64>; 2]>,
}

fn tr_re(a: &[C64], b: &[C64], n: usize) -> f64 {
    linalg::trace_product(a, b, n).re
}

impl ClosureModel {
    pub fn new(grid: &PhaseGrid, h: &HybridHamiltonian) -> Result<Self> {
        let HybridHamiltonian::MatrixValued { symbol, params } = h else {
            return Err(Error::UnsupportedVariant(
                "the closure model needs a matrix-valued hamiltonian",
            ));
        };
        h.check_grid(grid)?;
        Ok(ClosureModel {
            grid: grid.clone(),
            hbar: params.hbar,
            jets: symbol.evaluate(grid),
        })
    }

    fn n(&self) -> usize {
        self.jets.n
    }

    fn block<'a>(&self, f: &'a [C64], cell: usize) -> &'a [C64] {
        let n2 = self.n() * self.n();
        &f[cell * n2..(cell + 1) * n2]
    }

    fn check_state(&self, state: &ClosureState) -> Result<()> {
        if state.grid != self.grid {
            return Err(Error::ModeMismatch(
                "state and model live on different grids".into(),
            ));
        }
        let dev = state.max_trace_deviation();
        if dev > TRACE_CORRUPTION {
            return Err(Error::StateCorruption(format!(
                "density-matrix trace deviates from 1 by {dev:e}"
            )));
        }
        Ok(())
    }

    fn vector_field_of(&self, rho: &[C64]) -> [Vec<f64>; 2] {
        let n = self.n();
        let cells = self.grid.phase_len();
        let vq = (0..cells)
            .map(|c| tr_re(self.block(rho, c), self.block(&self.jets.p, c), n))
            .collect();
        let vp = (0..cells)
            .map(|c| -tr_re(self.block(rho, c), self.block(&self.jets.q, c), n))
            .collect();
        [vq, vp]
    }

    /// ⟨X_Ĥ⟩ = (Tr ρ̂∂_pĤ, −Tr ρ̂∂_qĤ).
    pub fn expected_vector_field(&self, state: &ClosureState) -> Result<[Vec<f64>; 2]> {
        self.check_state(state)?;
        Ok(self.vector_field_of(&state.rho))
    }

    /// K̂ = u·X_Ĥ − L_Ĥ = Ĥ + w_q ∂_pĤ − w_p ∂_qĤ with w = u − 𝒜.
    fn generator(&self, cell: usize, w: Option<(f64, f64)>) -> Vec<C64> {
        let h = self.block(&self.jets.v, cell);
        match w {
            None => h.to_vec(),
            Some((wq, wp)) => {
                let hp = self.block(&self.jets.p, cell);
                let hq = self.block(&self.jets.q, cell);
                (0..h.len())
                    .map(|k| h[k] + hp[k] * wq - hq[k] * wp)
                    .collect()
            }
        }
    }

    /// ∫D Tr(ρ̂K̂) dz; equals ∫D Tr(ρ̂Ĥ) dz on u = 𝒜.
    pub fn energy(&self, state: &ClosureState) -> f64 {
        let n = self.n();
        let w = state.displacement();
        let s: f64 = (0..self.grid.phase_len())
            .map(|c| {
                let k = self.generator(c, Some((w[0][c], w[1][c])));
                state.d[c] * tr_re(self.block(&state.rho, c), &k, n)
            })
            .sum();
        s * self.grid.phase_weight()
    }

    /// max_z of |£_{⟨X⟩}𝒜 − ∇⟨L_Ĥ⟩ − Tr(Ĥ∇ρ̂)| over both components. ∇ρ̂ is
    /// spectral; derivatives of Ĥ and L_Ĥ = p∂_pĤ − Ĥ are exact, since both grow
    /// in p and are not periodic on the grid.
    pub fn lie_identity_residual(&self, state: &ClosureState) -> Result<f64> {
        self.check_state(state)?;
        let g = &self.grid;
        let n = self.n();
        let n2 = n * n;
        let rq = g.spectral_derivative(&state.rho, n2, Axis::Q)?;
        let rp = g.spectral_derivative(&state.rho, n2, Axis::P)?;
        let v = self.vector_field_of(&state.rho);
        let mut worst: f64 = 0.0;
        for c in 0..g.phase_len() {
            let p = g.p(c % g.np);
            let r = self.block(&state.rho, c);
            let (bq, bp) = (self.block(&rq, c), self.block(&rp, c));
            let h = self.block(&self.jets.v, c);
            let (hq, hp) = (self.block(&self.jets.q, c), self.block(&self.jets.p, c));
            let (hqp, hpp) = (self.block(&self.jets.qp, c), self.block(&self.jets.pp, c));
            // £_v𝒜 = (v^p + p∂_qv^q, p∂_pv^q).
            let dvq_q = tr_re(bq, hp, n) + tr_re(r, hqp, n);
            let dvq_p = tr_re(bp, hp, n) + tr_re(r, hpp, n);
            let lie_q = v[1][c] + p * dvq_q;
            let lie_p = p * dvq_p;
            let ell: Vec<C64> = (0..n2).map(|k| hp[k] * p - h[k]).collect();
            let ell_q: Vec<C64> = (0..n2).map(|k| hqp[k] * p - hq[k]).collect();
            let ell_p: Vec<C64> = (0..n2).map(|k| hpp[k] * p).collect();
            let rhs_q = tr_re(bq, &ell, n) + tr_re(r, &ell_q, n) + tr_re(h, bq, n);
            let rhs_p = tr_re(bp, &ell, n) + tr_re(r, &ell_p, n) + tr_re(h, bp, n);
            worst = worst.max((lie_q - rhs_q).abs()).max((lie_p - rhs_p).abs());
        }
        Ok(worst)
    }

    fn rates(&self, d: &[f64], rho: &[C64], w: Option<&[Vec<f64>; 2]>) -> Result<Rates> {
        let g = &self.grid;
        let n = self.n();
        let n2 = n * n;
        let cells = g.phase_len();
        let v = self.vector_field_of(rho);
        let flux_q: Vec<f64> = (0..cells).map(|c| d[c] * v[0][c]).collect();
        let flux_p: Vec<f64> = (0..cells).map(|c| d[c] * v[1][c]).collect();
        let fq = g.spectral_derivative_real(&flux_q, 1, Axis::Q)?;
        let fp = g.spectral_derivative_real(&flux_p, 1, Axis::P)?;
        let d_rate = (0..cells).map(|c| -(fq[c] + fp[c])).collect();
        let rq = g.spectral_derivative(rho, n2, Axis::Q)?;
        let rp = g.spectral_derivative(rho, n2, Axis::P)?;
        let scale = C64::new(0.0, -1.0 / self.hbar);
        let rho_rate: Vec<C64> = (0..cells)
            .into_par_iter()
            .flat_map_iter(|c| {
                let k = self.generator(c, w.map(|w| (w[0][c], w[1][c])));
                let comm = linalg::commutator(&k, self.block(rho, c), n);
                let (bq, bp) = (self.block(&rq, c), self.block(&rp, c));
                let (vq, vp) = (v[0][c], v[1][c]);
                (0..n2)
                    .map(move |e| -(bq[e] * vq + bp[e] * vp) + comm[e] * scale)
                    .collect::<Vec<_>>()
            })
            .collect();
        let w_rate = match w {
            None => None,
            Some(w) => {
                let wqq = g.spectral_derivative_real(&w[0], 1, Axis::Q)?;
                let wqp = g.spectral_derivative_real(&w[0], 1, Axis::P)?;
                let wpq = g.spectral_derivative_real(&w[1], 1, Axis::Q)?;
                let wpp = g.spectral_derivative_real(&w[1], 1, Axis::P)?;
                let mut rq_out = vec![0.0; cells];
                let mut rp_out = vec![0.0; cells];
                for c in 0..cells {
                    let r = self.block(rho, c);
                    let (bq, bp) = (self.block(&rq, c), self.block(&rp, c));
                    let (hq, hp) = (self.block(&self.jets.q, c), self.block(&self.jets.p, c));
                    let (hqq, hqp, hpp) = (
                        self.block(&self.jets.qq, c),
                        self.block(&self.jets.qp, c),
                        self.block(&self.jets.pp, c),
                    );
                    // ∂_i v^j by the product rule with exact second derivatives of Ĥ.
                    let dvq_q = tr_re(bq, hp, n) + tr_re(r, hqp, n);
                    let dvq_p = tr_re(bp, hp, n) + tr_re(r, hpp, n);
                    let dvp_q = -(tr_re(bq, hq, n) + tr_re(r, hqq, n));
                    let dvp_p = -(tr_re(bp, hq, n) + tr_re(r, hqp, n));
                    let (wq, wp) = (w[0][c], w[1][c]);
                    let (vq, vp) = (v[0][c], v[1][c]);
                    // Tr(X^j ∂_iρ̂) with X = (∂_pĤ, −∂_qĤ).
                    let src_q = wq * tr_re(hp, bq, n) - wp * tr_re(hq, bq, n);
                    let src_p = wq * tr_re(hp, bp, n) - wp * tr_re(hq, bp, n);
                    rq_out[c] = -(vq * wqq[c] + vp * wqp[c]) - (wq * dvq_q + wp * dvp_q) + src_q;
                    rp_out[c] = -(vq * wpq[c] + vp * wpp[c]) - (wq * dvq_p + wp * dvp_p) + src_p;
                }
                Some([rq_out, rp_out])
            }
        };
        Ok(Rates {
            d: d_rate,
            rho: rho_rate,
            w: w_rate,
        })
    }

    /// One RK4 step of the chosen variant.
    pub fn step(&self, state: &mut ClosureState, dt: f64, variant: ClosureVariant) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if state.grid != self.grid {
            return Err(Error::ModeMismatch(
                "state and model live on different grids".into(),
            ));
        }
        let w0 = match variant {
            ClosureVariant::Reduced => None,
            ClosureVariant::General => Some(state.displacement()),
        };
        let d0 = state.d.clone();
        let r0 = state.rho.clone();
        let axpy_r = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + s * y).collect()
        };
        let axpy_c = |a: &[C64], s: f64, b: &[C64]| -> Vec<C64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let axpy_w = |a: &Option<[Vec<f64>; 2]>, s: f64, b: &Option<[Vec<f64>; 2]>| match (a, b) {
            (Some(a), Some(b)) => Some([axpy_r(&a[0], s, &b[0]), axpy_r(&a[1], s, &b[1])]),
            _ => None,
        };
        let k1 = self.rates(&d0, &r0, w0.as_ref())?;
        let w1 = axpy_w(&w0, 0.5 * dt, &k1.w);
        let k2 = self.rates(
            &axpy_r(&d0, 0.5 * dt, &k1.d),
            &axpy_c(&r0, 0.5 * dt, &k1.rho),
            w1.as_ref(),
        )?;
        let w2 = axpy_w(&w0, 0.5 * dt, &k2.w);
        let k3 = self.rates(
            &axpy_r(&d0, 0.5 * dt, &k2.d),
            &axpy_c(&r0, 0.5 * dt, &k2.rho),
            w2.as_ref(),
        )?;
        let w3 = axpy_w(&w0, dt, &k3.w);
        let k4 = self.rates(
            &axpy_r(&d0, dt, &k3.d),
            &axpy_c(&r0, dt, &k3.rho),
            w3.as_ref(),
        )?;
        let s = dt / 6.0;
        for c in 0..d0.len() {
            state.d[c] = d0[c] + s * (k1.d[c] + 2.0 * k2.d[c] + 2.0 * k3.d[c] + k4.d[c]);
        }
        for e in 0..r0.len() {
            state.rho[e] = r0[e] + (k1.rho[e] + (k2.rho[e] + k3.rho[e]) * 2.0 + k4.rho[e]) * s;
        }
        if let Some(w0) = w0 {
            let (a, b, c3, d4) = (k1.w.unwrap(), k2.w.unwrap(), k3.w.unwrap(), k4.w.unwrap());
            let g = &self.grid;
            for i in 0..2 {
                for c in 0..d0.len() {
                    let w = w0[i][c] + s * (a[i][c] + 2.0 * b[i][c] + 2.0 * c3[i][c] + d4[i][c]);
                    state.u[i][c] = if i == 0 { g.p(c % g.np) + w } else { w };
                }
            }
        }
        state.t += dt;
        Ok(())
    }
}

/// One row of the closure time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub max_trace_dev: f64,
    pub min_rho_eig: f64,
}

impl ClosureDiagnostics {
    pub fn measure(model: &ClosureModel, state: &ClosureState) -> Self {
        ClosureDiagnostics {
            t: state.t,
            mass: state.mass(),
            energy: model.energy(state),
            max_trace_dev: state.max_trace_deviation(),
            min_rho_eig: state.min_rho_eigenvalue(),
        }
    }
}

/// Integrates `steps` steps, recording diagnostics at t = 0 and after every step.
pub fn run_closure(
    model: &ClosureModel,
    mut state: ClosureState,
    dt: f64,
    steps: usize,
    variant: ClosureVariant,
) -> Result<(ClosureState, Vec<ClosureDiagnostics>)> {
    model.check_state(&state)?;
    let mut series = vec![ClosureDiagnostics::measure(model, &state)];
    for step in 1..=steps {
        model.step(&mut state, dt, variant)?;
        state.check_finite(step)?;
        series.push(ClosureDiagnostics::measure(model, &state));
    }
    Ok((state, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::symbol::{MatrixSymbol, Profile};
    use std::f64::consts::PI;

    fn mixed() -> Vec<C64> {
        vec![
            C64::new(0.7, 0.0),
            C64::new(0.1, -0.2),
            C64::new(0.1, 0.2),
            C64::new(0.3, 0.0),
        ]
    }

    #[test]
    fn constant_matrix_energy_is_expectation() {
        let g = PhaseGrid::finite_dim(8, 8, 2, 2.0 * PI, 8.0).unwrap();
        let sz = linalg::sigma_z();
        let h = HybridHamiltonian::MatrixValued {
            symbol: MatrixSymbol::new(2).with(Profile::Const, sz),
            params: ModelParams::default(),
        };
        let model = ClosureModel::new(&g, &h).unwrap();
        let d = vec![1.0 / (g.lq * g.lp); g.phase_len()];
        let up = vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ];
        let s =
            ClosureState::canonical(&g, d, ClosureState::uniform_rho(&g, &up).unwrap()).unwrap();
        assert!((model.energy(&s) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn corrupted_trace_is_rejected() {
        let g = PhaseGrid::finite_dim(8, 8, 2, 2.0 * PI, 8.0).unwrap();
        let h = crate::model::analytic_alpha(2, ModelParams::default());
        let model = ClosureModel::new(&g, &h).unwrap();
        let mut rho0 = mixed();
        rho0[0] += 1e-6;
        let s = ClosureState::canonical(
            &g,
            vec![0.0; g.phase_len()],
            ClosureState::uniform_rho(&g, &rho0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            model.expected_vector_field(&s),
            Err(Error::StateCorruption(_))
        ));
    }

    #[test]
    fn canonical_form_has_no_displacement() {
        let g = PhaseGrid::finite_dim(8, 8, 2, 2.0 * PI, 8.0).unwrap();
        let s = ClosureState::canonical(
            &g,
            vec![0.0; g.phase_len()],
            ClosureState::uniform_rho(&g, &mixed()).unwrap(),
        )
        .unwrap();
        assert_eq!(s.invariant_deviation(), 0.0);
    }
}
