//! Hybrid Hamiltonians: separable Ĥ = −(ħ²/2m)Δ_x + p²/2M + V(q, x) on the
//! continuum grid, or Hermitian matrix fields Ĥ(q, p) on the n-level grid.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Axis, Mode, PhaseGrid};
use crate::linalg;
use crate::symbol::{MatrixSymbol, Profile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub hbar: f64,
    /// Quantum mass; `f64::INFINITY` switches the quantum kinetic term off.
    pub m: f64,
    /// Classical mass.
    pub big_m: f64,
    pub lambda: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            hbar: 1.0,
            m: 1.0,
            big_m: 1.0,
            lambda: 0.1,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("hbar", self.hbar), ("m", self.m), ("M", self.big_m)] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.hbar.is_finite() || !self.big_m.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(
                "hbar, M and lambda must be finite".into(),
            ));
        }
        Ok(())
    }

    /// ħ²/2m, zero when the quantum mass is infinite.
    pub fn kinetic_coefficient(&self) -> f64 {
        if self.m.is_infinite() {
            0.0
        } else {
            self.hbar * self.hbar / (2.0 * self.m)
        }
    }
}

/// amp · cos(kq·q + kx·x + phase)
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineTerm {
    pub amp: f64,
    pub kq: f64,
    pub kx: f64,
    pub phase: f64,
}

/// Trigonometric potential V(q, x) = constant + Σ cosine terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Potential {
    pub constant: f64,
    pub terms: Vec<CosineTerm>,
}

impl Potential {
    pub fn value(&self, q: f64, x: f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| t.amp * (t.kq * q + t.kx * x + t.phase).cos())
                .sum::<f64>()
    }

    pub fn dq(&self, q: f64, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amp * t.kq * (t.kq * q + t.kx * x + t.phase).sin())
            .sum()
    }

    pub fn dx(&self, q: f64, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amp * t.kx * (t.kq * q + t.kx * x + t.phase).sin())
            .sum()
    }

    /// (∂_qq, ∂_qx, ∂_xx)
    pub fn hessian(&self, q: f64, x: f64) -> (f64, f64, f64) {
        let mut h = (0.0, 0.0, 0.0);
        for t in &self.terms {
            let c = -t.amp * (t.kq * q + t.kx * x + t.phase).cos();
            h.0 += c * t.kq * t.kq;
            h.1 += c * t.kq * t.kx;
            h.2 += c * t.kx * t.kx;
        }
        h
    }

    pub fn translate(&self, a: f64, dx: f64) -> Self {
        Potential {
            constant: self.constant,
            terms: self
                .terms
                .iter()
                .map(|t| CosineTerm {
                    phase: t.phase + t.kq * a + t.kx * dx,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn is_periodic(&self, grid: &PhaseGrid) -> bool {
        let integral = |k: f64, l: f64| {
            let m = k * l / (2.0 * PI);
            (m - m.round()).abs() < 1e-9
        };
        self.terms
            .iter()
            .all(|t| integral(t.kq, grid.lq) && integral(t.kx, grid.lx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HybridHamiltonian {
    Separable {
        potential: Potential,
        params: ModelParams,
    },
    MatrixValued {
        symbol: MatrixSymbol,
        params: ModelParams,
    },
}

impl HybridHamiltonian {
    pub fn params(&self) -> &ModelParams {
        match self {
            HybridHamiltonian::Separable { params, .. } => params,
            HybridHamiltonian::MatrixValued { params, .. } => params,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            HybridHamiltonian::Separable { .. } => Mode::Continuum,
            HybridHamiltonian::MatrixValued { .. } => Mode::FiniteDim,
        }
    }

    /// Validates the Hamiltonian against a grid: mode, level count, Hermiticity
    /// and periodicity of the potential.
    pub fn check_grid(&self, grid: &PhaseGrid) -> Result<()> {
        self.params().validate()?;
        if self.mode() != grid.mode {
            return Err(Error::ModeMismatch(format!(
                "hamiltonian is {:?}, grid is {:?}",
                self.mode(),
                grid.mode
            )));
        }
        match self {
            HybridHamiltonian::Separable { potential, .. } => {
                if !potential.is_periodic(grid) {
                    return Err(Error::InvalidParameter(
                        "potential is not periodic on the grid".into(),
                    ));
                }
            }
            HybridHamiltonian::MatrixValued { symbol, .. } => {
                if symbol.n != grid.nx {
                    return Err(Error::ModeMismatch(format!(
                        "symbol has {} levels, grid has {}",
                        symbol.n, grid.nx
                    )));
                }
                if !symbol.is_hermitian(1e-13) {
                    return Err(Error::InvalidParameter(
                        "matrix-valued hamiltonian is not hermitian".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn separable(&self) -> Result<(&Potential, &ModelParams)> {
        match self {
            HybridHamiltonian::Separable { potential, params } => Ok((potential, params)),
            HybridHamiltonian::MatrixValued { .. } => Err(Error::UnsupportedVariant(
                "matrix-valued hamiltonian has no scalar interaction symbol",
            )),
        }
    }

    fn sample<F: Fn(f64, f64, f64) -> f64>(grid: &PhaseGrid, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        for iq in 0..grid.nq {
            let q = grid.q(iq);
            for ip in 0..grid.np {
                let p = grid.p(ip);
                for ix in 0..grid.nx {
                    out.push(f(q, p, grid.x(ix)));
                }
            }
        }
        out
    }

    /// H_I = p²/2M + V(q, x) on the hybrid grid.
    pub fn interaction_hamiltonian(&self, grid: &PhaseGrid) -> Result<Vec<f64>> {
        let (v, prm) = self.separable()?;
        let mm = prm.big_m;
        Ok(Self::sample(grid, |q, p, x| {
            p * p / (2.0 * mm) + v.value(q, x)
        }))
    }

    /// L_I = p²/2M − V(q, x) on the hybrid grid.
    pub fn interaction_lagrangian(&self, grid: &PhaseGrid) -> Result<Vec<f64>> {
        let (v, prm) = self.separable()?;
        let mm = prm.big_m;
        Ok(Self::sample(grid, |q, p, x| {
            p * p / (2.0 * mm) - v.value(q, x)
        }))
    }

    /// V(q, x) on the hybrid grid.
    pub fn potential_values(&self, grid: &PhaseGrid) -> Result<Vec<f64>> {
        let (v, _) = self.separable()?;
        Ok(Self::sample(grid, |q, _, x| v.value(q, x)))
    }

    /// ∂_xV on the hybrid grid.
    pub fn potential_x_gradient(&self, grid: &PhaseGrid) -> Result<Vec<f64>> {
        let (v, _) = self.separable()?;
        Ok(Self::sample(grid, |q, _, x| v.dx(q, x)))
    }

    /// L_Ĥ = p ∂_pĤ − Ĥ. Separable: the scalar part L_I per hybrid point (the
    /// kinetic operator is applied by the Liouvillian). Matrix-valued: an n×n
    /// matrix per phase-space point.
    pub fn hybrid_lagrangian_symbol(&self, grid: &PhaseGrid) -> Result<Vec<C64>> {
        match self {
            HybridHamiltonian::Separable { .. } => Ok(self
                .interaction_lagrangian(grid)?
                .into_iter()
                .map(|v| C64::new(v, 0.0))
                .collect()),
            HybridHamiltonian::MatrixValued { symbol, .. } => {
                let jets = symbol.evaluate(grid);
                let n2 = symbol.n * symbol.n;
                let mut out = Vec::with_capacity(jets.v.len());
                for cell in 0..grid.phase_len() {
                    let p = grid.p(cell % grid.np);
                    for k in cell * n2..(cell + 1) * n2 {
                        out.push(jets.p[k] * p - jets.v[k]);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Hamiltonian vector field X_{H_I} = (p/M, −∂_qV), with the kinetic part
    /// differentiated analytically.
    pub fn interaction_vector_field(&self, grid: &PhaseGrid) -> Result<[Vec<f64>; 2]> {
        let (v, prm) = self.separable()?;
        let mm = prm.big_m;
        Ok([
            Self::sample(grid, |_, p, _| p / mm),
            Self::sample(grid, |q, _, x| -v.dq(q, x)),
        ])
    }
}

/// X_h = (∂_p h, −∂_q h) by spectral differentiation of a periodic scalar field
/// with `inner` components per phase-space point.
pub fn hamiltonian_vector_field(
    grid: &PhaseGrid,
    h: &[f64],
    inner: usize,
) -> Result<[Vec<f64>; 2]> {
    let hq = grid.spectral_derivative_real(h, inner, Axis::Q)?;
    let hp = grid.spectral_derivative_real(h, inner, Axis::P)?;
    Ok([hp, hq.into_iter().map(|v| -v).collect()])
}

/// Coupling matrix α̂: σ_x for two levels, nearest-neighbour hopping otherwise.
pub fn alpha_matrix(n: usize) -> Vec<C64> {
    let mut a = linalg::zeros(n);
    for j in 0..n.saturating_sub(1) {
        a[j * n + j + 1] = C64::new(1.0, 0.0);
        a[(j + 1) * n + j] = C64::new(1.0, 0.0);
    }
    a
}

/// Continuum pendulum with bilinear coupling:
/// V = (1 − cos q) + (1 − cos x) + λ sin q sin x.
pub fn pendulum_bilinear(params: ModelParams) -> HybridHamiltonian {
    let l = params.lambda;
    let term = |amp, kq, kx| CosineTerm {
        amp,
        kq,
        kx,
        phase: 0.0,
    };
    let mut terms = vec![term(-1.0, 1.0, 0.0), term(-1.0, 0.0, 1.0)];
    if l != 0.0 {
        terms.push(term(0.5 * l, 1.0, -1.0));
        terms.push(term(-0.5 * l, 1.0, 1.0));
    }
    HybridHamiltonian::Separable {
        potential: Potential {
            constant: 2.0,
            terms,
        },
        params,
    }
}

/// `pendulum_bilinear` with λ forced to zero.
pub fn uncoupled(params: ModelParams) -> HybridHamiltonian {
    pendulum_bilinear(ModelParams {
        lambda: 0.0,
        ..params
    })
}

/// Ĥ(z) = p²/2M + (1 − cos q) + λ sin q · α̂ on n levels.
pub fn analytic_alpha(n: usize, params: ModelParams) -> HybridHamiltonian {
    let mut symbol = MatrixSymbol::new(n)
        .with_scalar(
            Profile::Quadratic {
                c: 0.5 / params.big_m,
            },
            1.0,
        )
        .with_scalar(Profile::Const, 1.0)
        .with_scalar(Profile::cos_q(1.0), -1.0);
    if params.lambda != 0.0 {
        let a: Vec<C64> = alpha_matrix(n)
            .into_iter()
            .map(|v| v * params.lambda)
            .collect();
        symbol.push(Profile::sin_q(1.0), a);
    }
    HybridHamiltonian::MatrixValued { symbol, params }
}

/// The bilinear pendulum projected on the n lowest plane waves e^{ikx} of a
/// quantum rotor, k = k_min, …, k_min + n − 1 with k_min = −⌊(n − 1)/2⌋.
pub fn pendulum_bilinear_levels(n: usize, params: ModelParams) -> HybridHamiltonian {
    let kmin = -(((n as i64) - 1) / 2);
    let ks: Vec<i64> = (0..n as i64).map(|j| kmin + j).collect();
    let kin = params.kinetic_coefficient();
    let mut h0 = linalg::zeros(n);
    let mut s = linalg::zeros(n);
    for (j, &kj) in ks.iter().enumerate() {
        h0[j * n + j] += C64::new(kin * (kj * kj) as f64 + 1.0, 0.0);
        for (l, &kl) in ks.iter().enumerate() {
            if (kj - kl).abs() == 1 {
                h0[j * n + l] -= C64::new(0.5, 0.0);
            }
            if kj == kl + 1 {
                s[j * n + l] = C64::new(0.0, -0.5);
            } else if kj == kl - 1 {
                s[j * n + l] = C64::new(0.0, 0.5);
            }
        }
    }
    let mut symbol = MatrixSymbol::new(n)
        .with_scalar(
            Profile::Quadratic {
                c: 0.5 / params.big_m,
            },
            1.0,
        )
        .with_scalar(Profile::Const, 1.0)
        .with_scalar(Profile::cos_q(1.0), -1.0)
        .with(Profile::Const, h0);
    if params.lambda != 0.0 {
        symbol.push(
            Profile::sin_q(1.0),
            s.into_iter().map(|v| v * params.lambda).collect(),
        );
    }
    HybridHamiltonian::MatrixValued { symbol, params }
}

pub const BUILTIN_POTENTIALS: [&str; 3] = ["uncoupled", "pendulum_bilinear", "analytic_alpha"];

/// Resolves a built-in Hamiltonian by name for the given grid mode.
pub fn builtin(name: &str, grid: &PhaseGrid, params: ModelParams) -> Result<HybridHamiltonian> {
    let h = match (name, grid.mode) {
        ("uncoupled", Mode::Continuum) => uncoupled(params),
        ("pendulum_bilinear", Mode::Continuum) => pendulum_bilinear(params),
        ("uncoupled", Mode::FiniteDim) => pendulum_bilinear_levels(
            grid.nx,
            ModelParams {
                lambda: 0.0,
                ..params
            },
        ),
        ("pendulum_bilinear", Mode::FiniteDim) => pendulum_bilinear_levels(grid.nx, params),
        ("analytic_alpha", Mode::FiniteDim) => analytic_alpha(grid.nx, params),
        ("analytic_alpha", Mode::Continuum) => {
            return Err(Error::ModeMismatch(
                "analytic_alpha requires a finite-dimensional grid".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unknown potential '{name}'"
            )))
        }
    };
    h.check_grid(grid)?;
    Ok(h)
}
