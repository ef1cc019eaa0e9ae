//! Periodic hybrid grid and Fourier-collocation calculus.
//!
//! Fields are stored flat with layout `(q, p, inner)`, `inner` fastest. For the
//! wavefunction `inner` is the quantum axis: `nx` points in continuum mode or the
//! `n` levels in finite-dimensional mode. Matrix fields use `inner = n * n`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Continuum,
    FiniteDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Q,
    P,
    X,
}

type Plan = Arc<dyn Fft<f64>>;

struct FftCache {
    plans: HashMap<usize, (Plan, Plan)>,
}

impl FftCache {
    fn new(lengths: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let mut plans = HashMap::new();
        for &n in lengths {
            plans
                .entry(n)
                .or_insert_with(|| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)));
        }
        FftCache { plans }
    }

    fn get(&self, n: usize) -> &(Plan, Plan) {
        &self.plans[&n]
    }
}

#[derive(Clone)]
pub struct PhaseGrid {
    pub nq: usize,
    pub np: usize,
    /// Quantum grid size (continuum) or number of levels (finite-dimensional).
    pub nx: usize,
    pub lq: f64,
    pub lp: f64,
    pub lx: f64,
    pub mode: Mode,
    fft: Arc<FftCache>,
}

impl fmt::Debug for PhaseGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseGrid")
            .field("nq", &self.nq)
            .field("np", &self.np)
            .field("nx", &self.nx)
            .field("lq", &self.lq)
            .field("lp", &self.lp)
            .field("lx", &self.lx)
            .field("mode", &self.mode)
            .finish()
    }
}

impl PartialEq for PhaseGrid {
    fn eq(&self, other: &Self) -> bool {
        self.nq == other.nq
            && self.np == other.np
            && self.nx == other.nx
            && self.lq == other.lq
            && self.lp == other.lp
            && self.lx == other.lx
            && self.mode == other.mode
    }
}

fn check_axis(name: &str, n: usize, len: f64) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidGrid(format!(
            "{name} must be an even integer >= 4, got {n}"
        )));
    }
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "length along {name} must be positive, got {len}"
        )));
    }
    Ok(())
}

impl PhaseGrid {
    /// Hybrid grid over (q, p, x) with a continuous quantum coordinate x.
    pub fn continuum(nq: usize, np: usize, nx: usize, lq: f64, lp: f64, lx: f64) -> Result<Self> {
        check_axis("nq", nq, lq)?;
        check_axis("np", np, lp)?;
        check_axis("nx", nx, lx)?;
        Ok(PhaseGrid {
            nq,
            np,
            nx,
            lq,
            lp,
            lx,
            mode: Mode::Continuum,
            fft: Arc::new(FftCache::new(&[nq, np, nx])),
        })
    }

    /// Phase-space grid carrying an `n`-level quantum system at every point.
    pub fn finite_dim(nq: usize, np: usize, n_levels: usize, lq: f64, lp: f64) -> Result<Self> {
        check_axis("nq", nq, lq)?;
        check_axis("np", np, lp)?;
        if n_levels == 0 {
            return Err(Error::InvalidGrid("n_levels must be at least 1".into()));
        }
        Ok(PhaseGrid {
            nq,
            np,
            nx: n_levels,
            lq,
            lp,
            lx: 1.0,
            mode: Mode::FiniteDim,
            fft: Arc::new(FftCache::new(&[nq, np])),
        })
    }

    pub fn hq(&self) -> f64 {
        self.lq / self.nq as f64
    }

    pub fn hp(&self) -> f64 {
        self.lp / self.np as f64
    }

    /// Quantum spacing; 1 in finite-dimensional mode so that sums over levels are plain sums.
    pub fn hx(&self) -> f64 {
        match self.mode {
            Mode::Continuum => self.lx / self.nx as f64,
            Mode::FiniteDim => 1.0,
        }
    }

    pub fn phase_weight(&self) -> f64 {
        self.hq() * self.hp()
    }

    /// Quadrature weight of one hybrid cell.
    pub fn cell_weight(&self) -> f64 {
        self.phase_weight() * self.hx()
    }

    pub fn q(&self, i: usize) -> f64 {
        -0.5 * self.lq + i as f64 * self.hq()
    }

    pub fn p(&self, j: usize) -> f64 {
        -0.5 * self.lp + j as f64 * self.hp()
    }

    pub fn x(&self, k: usize) -> f64 {
        -0.5 * self.lx + k as f64 * self.hx()
    }

    pub fn q_coords(&self) -> Vec<f64> {
        (0..self.nq).map(|i| self.q(i)).collect()
    }

    pub fn p_coords(&self) -> Vec<f64> {
        (0..self.np).map(|j| self.p(j)).collect()
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.nx).map(|k| self.x(k)).collect()
    }

    pub fn phase_len(&self) -> usize {
        self.nq * self.np
    }

    /// Number of complex entries of a wavefunction.
    pub fn len(&self) -> usize {
        self.nq * self.np * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, iq: usize, ip: usize, ix: usize) -> usize {
        (iq * self.np + ip) * self.nx + ix
    }

    /// Wavefunction shape `[nq, np, nx]` (x or level index fastest).
    pub fn dims(&self) -> [usize; 3] {
        [self.nq, self.np, self.nx]
    }

    fn axis_len(&self, axis: Axis) -> (usize, f64) {
        match axis {
            Axis::Q => (self.nq, self.lq),
            Axis::P => (self.np, self.lp),
            Axis::X => (self.nx, self.lx),
        }
    }

    /// Angular wavenumbers in FFT order with the Nyquist entry kept.
    pub fn wavenumbers(&self, axis: Axis) -> Vec<f64> {
        let (n, l) = self.axis_len(axis);
        fft_wavenumbers(n, l)
    }

    pub fn max_wavenumber(&self, axis: Axis) -> f64 {
        let (n, l) = self.axis_len(axis);
        PI * n as f64 / l
    }

    fn check_x(&self, axis: Axis) -> Result<()> {
        if axis == Axis::X && self.mode == Mode::FiniteDim {
            return Err(Error::InvalidAxis {
                axis,
                mode: self.mode,
            });
        }
        Ok(())
    }

    fn field_shape(&self, len: usize, inner: usize, axis: Axis) -> Result<[usize; 3]> {
        let expected = self.phase_len() * inner;
        if inner == 0 || len != expected {
            return Err(Error::shape(&[self.nq, self.np, inner], &[len]));
        }
        if axis == Axis::X && inner != self.nx {
            return Err(Error::shape(
                &[self.nq, self.np, self.nx],
                &[self.nq, self.np, inner],
            ));
        }
        Ok([self.nq, self.np, inner])
    }

    /// Fourier-collocation derivative of a field with `inner` components per
    /// phase-space point. The Nyquist mode is dropped so the discrete operator is
    /// real and antisymmetric.
    pub fn spectral_derivative(&self, f: &[C64], inner: usize, axis: Axis) -> Result<Vec<C64>> {
        self.check_x(axis)?;
        let shape = self.field_shape(f.len(), inner, axis)?;
        let (n, l) = self.axis_len(axis);
        let mult: Vec<C64> = first_derivative_multiplier(n, l);
        Ok(self.apply_multiplier(f, shape, dim_of(axis), &mult))
    }

    pub fn spectral_derivative_real(
        &self,
        f: &[f64],
        inner: usize,
        axis: Axis,
    ) -> Result<Vec<f64>> {
        let c: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        Ok(self
            .spectral_derivative(&c, inner, axis)?
            .into_iter()
            .map(|v| v.re)
            .collect())
    }

    /// Spectral x-Laplacian of a continuum-mode field (multiplier −k², Nyquist kept).
    pub fn laplacian_x(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.check_x(Axis::X)?;
        let shape = self.field_shape(f.len(), self.nx, Axis::X)?;
        let mult: Vec<C64> = self
            .wavenumbers(Axis::X)
            .iter()
            .map(|k| C64::new(-k * k, 0.0))
            .collect();
        Ok(self.apply_multiplier(f, shape, 2, &mult))
    }

    /// Applies a Fourier multiplier along dimension `dim` of a `shape`-d array.
    pub(crate) fn apply_multiplier(
        &self,
        data: &[C64],
        shape: [usize; 3],
        dim: usize,
        mult: &[C64],
    ) -> Vec<C64> {
        let n = shape[dim];
        let (fwd, inv) = self.fft.get(n);
        let stride: usize = shape[dim + 1..].iter().product();
        let outer: usize = shape[..dim].iter().product();
        let scale = 1.0 / n as f64;
        let lines: Vec<Vec<C64>> = (0..outer * stride)
            .into_par_iter()
            .map(|line| {
                let base = (line / stride) * n * stride + line % stride;
                let mut buf: Vec<C64> = (0..n).map(|k| data[base + k * stride]).collect();
                fwd.process(&mut buf);
                for (b, m) in buf.iter_mut().zip(mult) {
                    *b *= m * scale;
                }
                inv.process(&mut buf);
                buf
            })
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); data.len()];
        for (line, buf) in lines.into_iter().enumerate() {
            let base = (line / stride) * n * stride + line % stride;
            for (k, v) in buf.into_iter().enumerate() {
                out[base + k * stride] = v;
            }
        }
        out
    }

    /// Normalized discrete Fourier coefficients of a hybrid field over all three
    /// axes (FFT order along each axis).
    pub fn fourier_coefficients(&self, f: &[C64]) -> Result<Vec<C64>> {
        if f.len() != self.len() {
            return Err(Error::shape(&self.dims(), &[f.len()]));
        }
        let shape = self.dims();
        let mut data = f.to_vec();
        for dim in 0..3 {
            let n = shape[dim];
            let (fwd, _) = self.fft.get(n);
            let stride: usize = shape[dim + 1..].iter().product();
            let outer: usize = shape[..dim].iter().product();
            for line in 0..outer * stride {
                let base = (line / stride) * n * stride + line % stride;
                let mut buf: Vec<C64> = (0..n).map(|k| data[base + k * stride]).collect();
                fwd.process(&mut buf);
                for (k, v) in buf.into_iter().enumerate() {
                    data[base + k * stride] = v;
                }
            }
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        Ok(data)
    }

    /// {A, B} = ∂_qA ∂_pB − ∂_pA ∂_qB. `b` may have `inner` components like `a`
    /// or a single component broadcast over the components of `a`.
    pub fn poisson_bracket(&self, a: &[C64], b: &[C64], inner: usize) -> Result<Vec<C64>> {
        let inner_b = if b.len() == a.len() {
            inner
        } else if b.len() * inner == a.len() {
            1
        } else {
            return Err(Error::shape(&[a.len()], &[b.len()]));
        };
        let aq = self.spectral_derivative(a, inner, Axis::Q)?;
        let ap = self.spectral_derivative(a, inner, Axis::P)?;
        let bq = self.spectral_derivative(b, inner_b, Axis::Q)?;
        let bp = self.spectral_derivative(b, inner_b, Axis::P)?;
        Ok((0..a.len())
            .map(|i| {
                let j = if inner_b == 1 { i / inner } else { i };
                aq[i] * bp[j] - ap[i] * bq[j]
            })
            .collect())
    }

    /// ∫ f over the hybrid space: phase-space quadrature times the quantum
    /// quadrature (continuum) or the level sum (finite-dimensional).
    pub fn integrate(&self, f: &[C64]) -> Result<C64> {
        if f.len() != self.len() {
            return Err(Error::shape(&self.dims(), &[f.len()]));
        }
        let s: C64 = f.iter().sum();
        Ok(s * self.cell_weight())
    }

    pub fn integrate_real(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::shape(&self.dims(), &[f.len()]));
        }
        Ok(f.iter().sum::<f64>() * self.cell_weight())
    }

    /// ∫ f dz component-wise for a field with `inner` components per point.
    pub fn integrate_phase(&self, f: &[C64], inner: usize) -> Result<Vec<C64>> {
        if f.len() != self.phase_len() * inner {
            return Err(Error::shape(&[self.nq, self.np, inner], &[f.len()]));
        }
        let mut acc = vec![C64::new(0.0, 0.0); inner];
        for chunk in f.chunks_exact(inner) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let w = self.phase_weight();
        Ok(acc.into_iter().map(|a| a * w).collect())
    }

    pub fn integrate_phase_real(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.phase_len() {
            return Err(Error::shape(&[self.nq, self.np], &[f.len()]));
        }
        Ok(f.iter().sum::<f64>() * self.phase_weight())
    }

    /// Fraction of the total of a non-negative field held in the first and last
    /// p-cells.
    pub fn boundary_mass(&self, f: &[f64], inner: usize) -> Result<f64> {
        if f.len() != self.phase_len() * inner {
            return Err(Error::shape(&[self.nq, self.np, inner], &[f.len()]));
        }
        let mut edge = 0.0;
        let mut total = 0.0;
        for (cell, chunk) in f.chunks_exact(inner).enumerate() {
            let s: f64 = chunk.iter().sum();
            total += s;
            let ip = cell % self.np;
            if ip == 0 || ip == self.np - 1 {
                edge += s;
            }
        }
        if total == 0.0 {
            return Ok(0.0);
        }
        Ok(edge / total)
    }
}

fn dim_of(axis: Axis) -> usize {
    match axis {
        Axis::Q => 0,
        Axis::P => 1,
        Axis::X => 2,
    }
}

pub(crate) fn fft_wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let dk = 2.0 * PI / l;
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 {
                j as i64
            } else {
                j as i64 - n as i64
            };
            let m = if j == n / 2 { -(m.abs()) } else { m };
            m as f64 * dk
        })
        .collect()
}

pub(crate) fn first_derivative_multiplier(n: usize, l: f64) -> Vec<C64> {
    fft_wavenumbers(n, l)
        .into_iter()
        .enumerate()
        .map(|(j, k)| {
            if n % 2 == 0 && j == n / 2 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k)
            }
        })
        .collect()
}

/// Flat geometric structures on T*Q: 𝒜 = p dq, Ω = dq ∧ dp, 𝕁 = [[0, 1], [−1, 0]].
#[derive(Debug, Clone, Copy, Default)]
pub struct Geometry;

impl Geometry {
    pub const J: [[f64; 2]; 2] = [[0.0, 1.0], [-1.0, 0.0]];

    /// Components (𝒜_q, 𝒜_p) of the canonical one-form at momentum p.
    pub fn canonical_one_form(p: f64) -> [f64; 2] {
        [p, 0.0]
    }

    /// Ω(u, v) = u_q v_p − u_p v_q.
    pub fn omega(u: [f64; 2], v: [f64; 2]) -> f64 {
        u[0] * v[1] - u[1] * v[0]
    }

    pub fn j_apply(v: [f64; 2]) -> [f64; 2] {
        [
            Self::J[0][0] * v[0] + Self::J[0][1] * v[1],
            Self::J[1][0] * v[0] + Self::J[1][1] * v[1],
        ]
    }

    /// Extended one-form 𝖠 = p dq on the hybrid space, as components (q, p, x).
    pub fn extended_one_form(p: f64) -> [f64; 3] {
        [p, 0.0, 0.0]
    }

    /// Hamiltonian vector field components (∂_p h, −∂_q h) from the gradient.
    pub fn hamiltonian_vector(dh_dq: f64, dh_dp: f64) -> [f64; 2] {
        [dh_dp, -dh_dq]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PhaseGrid {
        PhaseGrid::continuum(16, 8, 8, 2.0 * PI, 2.0 * PI, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_odd_and_small_sizes() {
        assert!(PhaseGrid::continuum(6, 5, 8, 1.0, 1.0, 1.0).is_err());
        assert!(PhaseGrid::continuum(2, 8, 8, 1.0, 1.0, 1.0).is_err());
        assert!(PhaseGrid::continuum(8, 8, 8, 1.0, 0.0, 1.0).is_err());
        assert!(PhaseGrid::finite_dim(8, 8, 2, 1.0, 1.0).is_ok());
    }

    #[test]
    fn derivative_of_resolved_mode() {
        let g = grid();
        let k = 2.0 * PI / g.lq;
        let mut f = vec![C64::new(0.0, 0.0); g.len()];
        for iq in 0..g.nq {
            for ip in 0..g.np {
                for ix in 0..g.nx {
                    f[g.idx(iq, ip, ix)] = C64::new((k * g.q(iq)).sin(), 0.0);
                }
            }
        }
        let d = g.spectral_derivative(&f, g.nx, Axis::Q).unwrap();
        for iq in 0..g.nq {
            let exact = k * (k * g.q(iq)).cos();
            assert!((d[g.idx(iq, 3, 2)].re - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn x_axis_invalid_in_finite_mode() {
        let g = PhaseGrid::finite_dim(8, 8, 2, 1.0, 1.0).unwrap();
        let f = vec![C64::new(1.0, 0.0); g.len()];
        assert!(matches!(
            g.spectral_derivative(&f, 2, Axis::X),
            Err(Error::InvalidAxis { .. })
        ));
    }

    #[test]
    fn uniform_boundary_mass() {
        let g = grid();
        let f = vec![1.0; g.len()];
        let b = g.boundary_mass(&f, g.nx).unwrap();
        assert!((b - 2.0 / g.np as f64).abs() < 1e-15);
    }

    #[test]
    fn geometry_conventions() {
        let v = Geometry::j_apply(Geometry::j_apply([0.3, -1.2]));
        assert_eq!(v, [-0.3, 1.2]);
        assert_eq!(Geometry::omega([1.0, 0.0], [0.0, 1.0]), 1.0);
    }
}
