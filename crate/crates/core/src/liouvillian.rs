//! The hybrid Liouvillian L̂_Ĥ = iħ{Ĥ, ·} − L_Ĥ, its dense materialization,
//! the noncommutative commutator identity and the point-transform equivariance.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Axis, Mode, PhaseGrid};
use crate::linalg;
use crate::model::HybridHamiltonian;
use crate::symbol::{MatrixSymbol, SymbolJets};

pub const DENSE_CAP: usize = 4096;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct HybridWavefunction {
    pub grid: PhaseGrid,
    /// Layout `(q, p, x)` or `(q, p, level)`, quantum index fastest.
    pub data: Vec<C64>,
}

impl HybridWavefunction {
    pub fn new(grid: PhaseGrid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::shape(&grid.dims(), &[data.len()]));
        }
        Ok(HybridWavefunction { grid, data })
    }

    pub fn zeros(grid: PhaseGrid) -> Self {
        let data = vec![C64::new(0.0, 0.0); grid.len()];
        HybridWavefunction { grid, data }
    }

    /// ∫ Ῡ₁ Υ₂ over the hybrid space.
    pub fn inner(&self, other: &[C64]) -> C64 {
        let s: C64 = self.data.iter().zip(other).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.cell_weight()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_weight()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateState(format!(
                "cannot normalize a state with norm² = {n}"
            )));
        }
        let s = 1.0 / n.sqrt();
        for v in &mut self.data {
            *v *= s;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// |Υ|² at every hybrid point.
    pub fn density(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Pointwise coefficients of the Liouvillian.
#[derive(Debug, Clone)]
enum PointOps {
    /// n×n matrix per phase-space point.
    Dense {
        n: usize,
        aq: Vec<C64>,
        ap: Vec<C64>,
        ell: Vec<C64>,
    },
    /// Scalar per hybrid point (separable Hamiltonian on the continuum grid).
    Diagonal {
        aq: Vec<C64>,
        ap: Vec<C64>,
        ell: Vec<C64>,
    },
}

#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub grid: PhaseGrid,
    pub hbar: f64,
    ops: PointOps,
    /// ħ²/2m multiplying −Δ_x.
    kinetic: f64,
    /// ∂_qĤ does not vary along p and ∂_pĤ does not vary along q, so the split
    /// bracket reduces to the direct one.
    direct_bracket: bool,
}

fn p_independent(grid: &PhaseGrid, f: &[C64], inner: usize) -> bool {
    for iq in 0..grid.nq {
        let base = iq * grid.np * inner;
        let first = &f[base..base + inner];
        for ip in 1..grid.np {
            let off = base + ip * inner;
            if f[off..off + inner] != *first {
                return false;
            }
        }
    }
    true
}

fn q_independent(grid: &PhaseGrid, f: &[C64], inner: usize) -> bool {
    let row = grid.np * inner;
    (1..grid.nq).all(|iq| f[iq * row..(iq + 1) * row] == f[..row])
}

impl Liouvillian {
    pub fn new(grid: &PhaseGrid, h: &HybridHamiltonian) -> Result<Self> {
        h.check_grid(grid)?;
        match h {
            HybridHamiltonian::Separable { potential, params } => {
                let mut aq = Vec::with_capacity(grid.len());
                let mut ap = Vec::with_capacity(grid.len());
                let mut ell = Vec::with_capacity(grid.len());
                for iq in 0..grid.nq {
                    let q = grid.q(iq);
                    for ip in 0..grid.np {
                        let p = grid.p(ip);
                        for ix in 0..grid.nx {
                            let x = grid.x(ix);
                            aq.push(C64::new(potential.dq(q, x), 0.0));
                            ap.push(C64::new(p / params.big_m, 0.0));
                            ell.push(C64::new(
                                p * p / (2.0 * params.big_m) - potential.value(q, x),
                                0.0,
                            ));
                        }
                    }
                }
                let direct = p_independent(grid, &aq, grid.nx) && q_independent(grid, &ap, grid.nx);
                Ok(Liouvillian {
                    grid: grid.clone(),
                    hbar: params.hbar,
                    ops: PointOps::Diagonal { aq, ap, ell },
                    kinetic: params.kinetic_coefficient(),
                    direct_bracket: direct,
                })
            }
            HybridHamiltonian::MatrixValued { symbol, params } => {
                Self::from_symbol(grid, symbol, params.hbar)
            }
        }
    }

    /// Liouvillian of a matrix-valued symbol on a finite-dimensional grid.
    pub fn from_symbol(grid: &PhaseGrid, symbol: &MatrixSymbol, hbar: f64) -> Result<Self> {
        if grid.mode != Mode::FiniteDim || symbol.n != grid.nx {
            return Err(Error::ModeMismatch(format!(
                "{}-level symbol on a {:?} grid with nx = {}",
                symbol.n, grid.mode, grid.nx
            )));
        }
        Self::from_jets(grid, &symbol.evaluate(grid), hbar)
    }

    pub fn from_jets(grid: &PhaseGrid, jets: &SymbolJets, hbar: f64) -> Result<Self> {
        let n = jets.n;
        let n2 = n * n;
        if grid.mode != Mode::FiniteDim || n != grid.nx || jets.v.len() != grid.phase_len() * n2 {
            return Err(Error::shape(&[grid.phase_len() * n2], &[jets.v.len()]));
        }
        let mut ell = Vec::with_capacity(jets.v.len());
        for cell in 0..grid.phase_len() {
            let p = grid.p(cell % grid.np);
            for k in cell * n2..(cell + 1) * n2 {
                ell.push(jets.p[k] * p - jets.v[k]);
            }
        }
        let direct = p_independent(grid, &jets.q, n2) && q_independent(grid, &jets.p, n2);
        Ok(Liouvillian {
            grid: grid.clone(),
            hbar,
            ops: PointOps::Dense {
                n,
                aq: jets.q.clone(),
                ap: jets.p.clone(),
                ell,
            },
            kinetic: 0.0,
            direct_bracket: direct,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    fn pointwise(&self, coeff: &[C64], v: &[C64]) -> Vec<C64> {
        match &self.ops {
            PointOps::Diagonal { .. } => v.iter().zip(coeff).map(|(a, b)| a * b).collect(),
            PointOps::Dense { n, .. } => {
                let n = *n;
                let mut out = vec![C64::new(0.0, 0.0); v.len()];
                out.par_chunks_mut(n)
                    .zip(v.par_chunks(n))
                    .zip(coeff.par_chunks(n * n))
                    .for_each(|((o, x), m)| linalg::matvec_into(m, x, n, o));
                out
            }
        }
    }

    fn coefficients(&self) -> (&[C64], &[C64], &[C64]) {
        match &self.ops {
            PointOps::Dense { aq, ap, ell, .. } | PointOps::Diagonal { aq, ap, ell } => {
                (aq, ap, ell)
            }
        }
    }

    /// L̂Υ.
    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let g = &self.grid;
        if psi.len() != g.len() {
            return Err(Error::shape(&g.dims(), &[psi.len()]));
        }
        let nx = g.nx;
        let (aq, ap, ell) = self.coefficients();
        let dp = g.spectral_derivative(psi, nx, Axis::P)?;
        let dq = g.spectral_derivative(psi, nx, Axis::Q)?;
        let aq_dp = self.pointwise(aq, &dp);
        let ap_dq = self.pointwise(ap, &dq);
        let ell_psi = self.pointwise(ell, psi);
        let ih = I * self.hbar;
        let mut out: Vec<C64> = if self.direct_bracket {
            (0..psi.len())
                .map(|k| ih * (aq_dp[k] - ap_dq[k]) - ell_psi[k])
                .collect()
        } else {
            let dp_aq = g.spectral_derivative(&self.pointwise(aq, psi), nx, Axis::P)?;
            let dq_ap = g.spectral_derivative(&self.pointwise(ap, psi), nx, Axis::Q)?;
            (0..psi.len())
                .map(|k| ih * 0.5 * (aq_dp[k] + dp_aq[k] - ap_dq[k] - dq_ap[k]) - ell_psi[k])
                .collect()
        };
        if self.kinetic != 0.0 {
            let lap = g.laplacian_x(psi)?;
            for (o, l) in out.iter_mut().zip(lap) {
                *o -= l * self.kinetic;
            }
        }
        Ok(out)
    }

    /// Dense matrix of L̂ in the grid basis, row-major, built column by column.
    pub fn materialize(&self) -> Result<Vec<C64>> {
        let d = self.dim();
        if d > DENSE_CAP {
            return Err(Error::DimensionCap {
                dim: d,
                cap: DENSE_CAP,
            });
        }
        let cols: Vec<Vec<C64>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![C64::new(0.0, 0.0); d];
                e[j] = C64::new(1.0, 0.0);
                self.apply(&e)
            })
            .collect::<Result<_>>()?;
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        for (j, col) in cols.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                m[i * d + j] = v;
            }
        }
        Ok(m)
    }

    /// Spectral-radius bound ρ of L̂/ħ: transport, multiplication and kinetic
    /// parts added. The RK4 step is admissible for dt ≤ 0.5/ρ.
    pub fn spectral_radius_bound(&self) -> f64 {
        let g = &self.grid;
        let norm_of = |f: &[C64]| -> f64 {
            match &self.ops {
                PointOps::Diagonal { .. } => f.iter().map(|v| v.norm()).fold(0.0, f64::max),
                PointOps::Dense { n, .. } => f
                    .chunks_exact(n * n)
                    .map(linalg::frobenius)
                    .fold(0.0, f64::max),
            }
        };
        let (aq, ap, ell) = self.coefficients();
        let kx = if g.mode == Mode::Continuum {
            g.max_wavenumber(Axis::X)
        } else {
            0.0
        };
        norm_of(ap) * g.max_wavenumber(Axis::Q)
            + norm_of(aq) * g.max_wavenumber(Axis::P)
            + norm_of(ell) / self.hbar
            + self.kinetic * kx * kx / self.hbar
    }

    pub fn dt_max(&self) -> f64 {
        0.5 / self.spectral_radius_bound()
    }
}

/// Convenience wrapper around [`Liouvillian::apply`].
pub fn apply_liouvillian(h: &HybridHamiltonian, psi: &HybridWavefunction) -> Result<Vec<C64>> {
    Liouvillian::new(&psi.grid, h)?.apply(&psi.data)
}

pub fn materialize_liouvillian(h: &HybridHamiltonian, grid: &PhaseGrid) -> Result<Vec<C64>> {
    let d = grid.len();
    if d > DENSE_CAP {
        return Err(Error::DimensionCap {
            dim: d,
            cap: DENSE_CAP,
        });
    }
    Liouvillian::new(grid, h)?.materialize()
}

/// Which transpose enters the conjugate-symbol term of the commutator identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransposeKind {
    /// Transpose on the quantum factor only.
    Partial,
    /// Full transpose in the grid ⊗ quantum basis.
    Full,
}

/// Decaying, q-band-limited test state used to measure operator identities
/// away from the non-periodic p-boundary.
pub fn probe_state(grid: &PhaseGrid, sigma_p: f64) -> HybridWavefunction {
    let kq = 2.0 * std::f64::consts::PI / grid.lq;
    let mut data = Vec::with_capacity(grid.len());
    for iq in 0..grid.nq {
        let q = kq * grid.q(iq);
        let fq = C64::new(1.0 + 0.3 * q.cos(), 0.2 * q.sin());
        for ip in 0..grid.np {
            let p = grid.p(ip);
            let fp = (-p * p / (4.0 * sigma_p * sigma_p)).exp();
            for ix in 0..grid.nx {
                let v = match grid.mode {
                    Mode::FiniteDim => C64::new(0.0, 0.3).powu(ix as u32),
                    Mode::Continuum => {
                        let x = 2.0 * std::f64::consts::PI * grid.x(ix) / grid.lx;
                        C64::new(1.0 + 0.2 * x.cos(), 0.3 * x.sin())
                    }
                };
                data.push(fq * fp * v);
            }
        }
    }
    let mut psi = HybridWavefunction {
        grid: grid.clone(),
        data,
    };
    psi.normalize().expect("probe state is nonzero");
    psi
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// (PT(A B) v)[w, a] = Σ_{z,b} (AB)[(w,b),(z,a)] v[z,b] evaluated with n²
/// operator applications.
fn partial_transpose_product(
    a: &Liouvillian,
    b: &Liouvillian,
    v: &[C64],
    n: usize,
) -> Result<Vec<C64>> {
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for col in 0..n {
        for row in 0..n {
            let mut x = vec![C64::new(0.0, 0.0); v.len()];
            for cell in 0..v.len() / n {
                x[cell * n + col] = v[cell * n + row];
            }
            let y = a.apply(&b.apply(&x)?)?;
            for cell in 0..v.len() / n {
                out[cell * n + col] += y[cell * n + row];
            }
        }
    }
    Ok(out)
}

/// Result of the commutator identity check.
#[derive(Debug, Clone, Copy)]
pub struct CommutatorResidual {
    /// ‖R Υ‖ / ‖Υ‖ on the probe state.
    pub probe_relative: f64,
    /// Scale ‖[L_Ĥ, L_F̂]Υ‖ / ‖Υ‖ for reference.
    pub scale: f64,
    /// Largest entry of the materialized residual operator, when small enough.
    pub max_entry: Option<f64>,
}

/// Residual of [L̂_Ĥ, L̂_F̂] + [L̂_H̄, L̂_F̄]ᵀ − iħ L̂_{Ĥ,F̂}−{F̂,Ĥ}} with the
/// transpose taken as selected.
pub fn commutator_identity_residual(
    grid: &PhaseGrid,
    h: &MatrixSymbol,
    f: &MatrixSymbol,
    hbar: f64,
    kind: TransposeKind,
    probe: &HybridWavefunction,
) -> Result<CommutatorResidual> {
    if grid.mode != Mode::FiniteDim {
        return Err(Error::ModeMismatch(
            "commutator identity is defined for matrix-valued symbols".into(),
        ));
    }
    let n = grid.nx;
    let lh = Liouvillian::from_symbol(grid, h, hbar)?;
    let lf = Liouvillian::from_symbol(grid, f, hbar)?;
    let lhb = Liouvillian::from_symbol(grid, &h.conj(), hbar)?;
    let lfb = Liouvillian::from_symbol(grid, &f.conj(), hbar)?;
    let bracket = SymbolJets::symmetrized_bracket(&h.evaluate(grid), &f.evaluate(grid))?;
    let lb = Liouvillian::from_jets(grid, &bracket, hbar)?;

    let ih = I * hbar;
    let v = &probe.data;
    let direct: Vec<C64> = {
        let hf = lh.apply(&lf.apply(v)?)?;
        let fh = lf.apply(&lh.apply(v)?)?;
        hf.iter().zip(&fh).map(|(a, b)| a - b).collect()
    };
    let lbv = lb.apply(v)?;
    let conj_term = match kind {
        TransposeKind::Partial => {
            let hf = partial_transpose_product(&lhb, &lfb, v, n)?;
            let fh = partial_transpose_product(&lfb, &lhb, v, n)?;
            hf.iter().zip(&fh).map(|(a, b)| a - b).collect::<Vec<_>>()
        }
        TransposeKind::Full => {
            // Oᵀv = conj(O† conj v) and O = [L_H̄, L_F̄] is anti-Hermitian.
            let cv: Vec<C64> = v.iter().map(|x| x.conj()).collect();
            let hf = lhb.apply(&lfb.apply(&cv)?)?;
            let fh = lfb.apply(&lhb.apply(&cv)?)?;
            hf.iter().zip(&fh).map(|(a, b)| -(a - b).conj()).collect()
        }
    };
    let res: Vec<C64> = (0..v.len())
        .map(|k| direct[k] + conj_term[k] - ih * lbv[k])
        .collect();
    let nv = norm2(v);

    let max_entry = if grid.len() <= 256 {
        let d = grid.len();
        let mh = lh.materialize()?;
        let mf = lf.materialize()?;
        let mhb = lhb.materialize()?;
        let mfb = lfb.materialize()?;
        let mb = lb.materialize()?;
        let comm = |a: &[C64], b: &[C64]| -> Vec<C64> {
            let ab = dense_mul(a, b, d);
            let ba = dense_mul(b, a, d);
            ab.iter().zip(&ba).map(|(x, y)| x - y).collect()
        };
        let c1 = comm(&mh, &mf);
        let c2 = comm(&mhb, &mfb);
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let t = match kind {
                    TransposeKind::Full => c2[c * d + r],
                    TransposeKind::Partial => {
                        let (wr, ar) = (r / n, r % n);
                        let (wc, ac) = (c / n, c % n);
                        c2[(wr * n + ac) * d + wc * n + ar]
                    }
                };
                let e = c1[r * d + c] + t - ih * mb[r * d + c];
                worst = worst.max(e.norm());
            }
        }
        Some(worst)
    } else {
        None
    };

    Ok(CommutatorResidual {
        probe_relative: norm2(&res) / nv,
        scale: norm2(&direct) / nv,
        max_entry,
    })
}

fn dense_mul(a: &[C64], b: &[C64], d: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); d * d];
    c.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            for j in 0..d {
                row[j] += aik * b[k * d + j];
            }
        }
    });
    c
}

/// Sign of the compensating phase φ(q, p) = ±b·q carried by a momentum shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseConvention {
    Plus,
    Minus,
}

impl PhaseConvention {
    fn sign(self) -> f64 {
        match self {
            PhaseConvention::Plus => 1.0,
            PhaseConvention::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumAction {
    Identity,
    /// Constant n×n unitary (finite-dimensional mode).
    Unitary(Vec<C64>),
    /// Cyclic shift of the x-grid by whole cells (continuum mode).
    ShiftX(i64),
}

/// Phase-space translation by whole cells, with compensating phase, followed by
/// a quantum action.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTransform {
    pub shift_q: i64,
    pub shift_p: i64,
    pub quantum: QuantumAction,
    pub convention: PhaseConvention,
}

impl PointTransform {
    pub fn identity() -> Self {
        PointTransform {
            shift_q: 0,
            shift_p: 0,
            quantum: QuantumAction::Identity,
            convention: PhaseConvention::Plus,
        }
    }

    pub fn translation(shift_q: i64, shift_p: i64) -> Self {
        PointTransform {
            shift_q,
            shift_p,
            ..Self::identity()
        }
    }

    pub fn unitary(u: Vec<C64>) -> Self {
        PointTransform {
            quantum: QuantumAction::Unitary(u),
            ..Self::identity()
        }
    }

    pub fn with_convention(mut self, convention: PhaseConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Physical translation (a, b).
    pub fn offsets(&self, grid: &PhaseGrid) -> (f64, f64) {
        (
            self.shift_q as f64 * grid.hq(),
            self.shift_p as f64 * grid.hp(),
        )
    }

    fn validate(&self, grid: &PhaseGrid, hbar: f64) -> Result<()> {
        let (_, b) = self.offsets(grid);
        let winding = b * grid.lq / (2.0 * std::f64::consts::PI * hbar);
        if (winding - winding.round()).abs() > 1e-9 {
            return Err(Error::NonCommensurate(format!(
                "phase e^(i b q / hbar) with b = {b} winds {winding} times around q"
            )));
        }
        match (&self.quantum, grid.mode) {
            (QuantumAction::Identity, _) => Ok(()),
            (QuantumAction::Unitary(u), Mode::FiniteDim) => {
                let n = grid.nx;
                if u.len() != n * n {
                    return Err(Error::shape(&[n, n], &[u.len()]));
                }
                let uu = linalg::matmul(&linalg::adjoint(u, n), u, n);
                if linalg::max_abs_diff(&uu, &linalg::identity(n)) > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "quantum action is not unitary".into(),
                    ));
                }
                Ok(())
            }
            (QuantumAction::ShiftX(_), Mode::Continuum) => Ok(()),
            (q, m) => Err(Error::ModeMismatch(format!("{q:?} on a {m:?} grid"))),
        }
    }

    fn translate_cells(psi: &[C64], g: &PhaseGrid, sq: i64, sp: i64) -> Vec<C64> {
        let wrap = |i: i64, m: usize| i.rem_euclid(m as i64) as usize;
        let n = g.nx;
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        for iq in 0..g.nq {
            let src_q = wrap(iq as i64 - sq, g.nq);
            for ip in 0..g.np {
                let s0 = g.idx(src_q, wrap(ip as i64 - sp, g.np), 0);
                let d0 = g.idx(iq, ip, 0);
                out[d0..d0 + n].copy_from_slice(&psi[s0..s0 + n]);
            }
        }
        out
    }

    fn multiply_phase(&self, psi: &mut [C64], g: &PhaseGrid, hbar: f64, inverse: bool) {
        let (a, b) = self.offsets(g);
        let s = self.convention.sign() * if inverse { -1.0 } else { 1.0 };
        if b == 0.0 {
            return;
        }
        for iq in 0..g.nq {
            let phase = C64::from_polar(1.0, s * b * (g.q(iq) - a) / hbar);
            let row = iq * g.np * g.nx;
            for v in &mut psi[row..row + g.np * g.nx] {
                *v *= phase;
            }
        }
    }

    fn act_quantum(&self, psi: &mut [C64], g: &PhaseGrid, inverse: bool) {
        let n = g.nx;
        match &self.quantum {
            QuantumAction::Identity => {}
            QuantumAction::Unitary(u) => {
                let m = if inverse {
                    linalg::adjoint(u, n)
                } else {
                    u.clone()
                };
                let mut tmp = vec![C64::new(0.0, 0.0); n];
                for chunk in psi.chunks_exact_mut(n) {
                    linalg::matvec_into(&m, chunk, n, &mut tmp);
                    chunk.copy_from_slice(&tmp);
                }
            }
            QuantumAction::ShiftX(sx) => {
                let sx = if inverse { -sx } else { *sx };
                for chunk in psi.chunks_exact_mut(n) {
                    let src = chunk.to_vec();
                    for (ix, d) in chunk.iter_mut().enumerate() {
                        *d = src[(ix as i64 - sx).rem_euclid(n as i64) as usize];
                    }
                }
            }
        }
    }

    /// (UΥ)(z) = e^{iφ(η⁻¹z)/ħ} Û Υ(η⁻¹z) with η(q, p) = (q + a, p + b).
    pub fn apply(&self, psi: &HybridWavefunction, hbar: f64) -> Result<HybridWavefunction> {
        let g = &psi.grid;
        self.validate(g, hbar)?;
        let mut out = Self::translate_cells(&psi.data, g, self.shift_q, self.shift_p);
        self.multiply_phase(&mut out, g, hbar, false);
        self.act_quantum(&mut out, g, false);
        HybridWavefunction::new(g.clone(), out)
    }

    /// U⁻¹Υ.
    pub fn inverse_apply(&self, psi: &HybridWavefunction, hbar: f64) -> Result<HybridWavefunction> {
        let g = &psi.grid;
        self.validate(g, hbar)?;
        let mut tmp = psi.data.clone();
        self.act_quantum(&mut tmp, g, true);
        self.multiply_phase(&mut tmp, g, hbar, true);
        let out = Self::translate_cells(&tmp, g, -self.shift_q, -self.shift_p);
        HybridWavefunction::new(g.clone(), out)
    }

    /// The transformed Hamiltonian expected on the right-hand side of the
    /// equivariance relation: Â∘η for translations, U†ÂU for quantum unitaries.
    pub fn pullback(&self, h: &HybridHamiltonian, grid: &PhaseGrid) -> Result<HybridHamiltonian> {
        let (a, b) = self.offsets(grid);
        match h {
            HybridHamiltonian::MatrixValued { symbol, params } => {
                let mut s = symbol.translate(a, b);
                match &self.quantum {
                    QuantumAction::Identity => {}
                    QuantumAction::Unitary(u) => s = s.conjugate_by(u),
                    QuantumAction::ShiftX(_) => {
                        return Err(Error::ModeMismatch("x-shift of a matrix symbol".into()))
                    }
                }
                Ok(HybridHamiltonian::MatrixValued {
                    symbol: s,
                    params: *params,
                })
            }
            HybridHamiltonian::Separable { potential, params } => {
                if self.shift_p != 0 {
                    return Err(Error::UnsupportedVariant(
                        "momentum shifts leave the separable family",
                    ));
                }
                let dx = match self.quantum {
                    QuantumAction::ShiftX(s) => s as f64 * grid.hx(),
                    QuantumAction::Identity => 0.0,
                    QuantumAction::Unitary(_) => {
                        return Err(Error::ModeMismatch("unitary on the continuum grid".into()))
                    }
                };
                Ok(HybridHamiltonian::Separable {
                    potential: potential.translate(a, dx),
                    params: *params,
                })
            }
        }
    }
}

/// ‖U†L̂_Â(UΥ) − L̂_{pullback Â}Υ‖ / ‖Υ‖.
pub fn liouvillian_equivariance_residual(
    t: &PointTransform,
    h: &HybridHamiltonian,
    psi: &HybridWavefunction,
) -> Result<f64> {
    let hbar = h.params().hbar;
    let grid = &psi.grid;
    let l = Liouvillian::new(grid, h)?;
    let lpb = Liouvillian::new(grid, &t.pullback(h, grid)?)?;
    let u_psi = t.apply(psi, hbar)?;
    let lhs_inner = HybridWavefunction::new(grid.clone(), l.apply(&u_psi.data)?)?;
    let lhs = t.inverse_apply(&lhs_inner, hbar)?;
    let rhs = lpb.apply(&psi.data)?;
    let diff: Vec<C64> = lhs.data.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / norm2(&psi.data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::symbol::Profile;

    fn tiny() -> PhaseGrid {
        PhaseGrid::finite_dim(8, 8, 2, 2.0 * std::f64::consts::PI, 8.0).unwrap()
    }

    #[test]
    fn constant_symbol_is_multiplication() {
        let g = tiny();
        let s = MatrixSymbol::new(2).with_scalar(Profile::Const, 1.7);
        let l = Liouvillian::from_symbol(&g, &s, 1.0).unwrap();
        let psi = probe_state(&g, 1.0);
        let out = l.apply(&psi.data).unwrap();
        for (o, v) in out.iter().zip(&psi.data) {
            assert!((o - v * 1.7).norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_undoes_transform() {
        let g = tiny();
        let psi = probe_state(&g, 1.0);
        let u = linalg::unitary_exp(&linalg::sigma_y(), 2, 0.3);
        let t = PointTransform {
            shift_q: 2,
            shift_p: 1,
            quantum: QuantumAction::Unitary(u),
            convention: PhaseConvention::Plus,
        };
        let back = t.inverse_apply(&t.apply(&psi, 1.0).unwrap(), 1.0).unwrap();
        assert!(linalg::max_abs_diff(&back.data, &psi.data) < 1e-14);
    }

    #[test]
    fn materialized_matrix_is_hermitian() {
        let g = tiny();
        let h = crate::model::analytic_alpha(2, ModelParams::default());
        let m = materialize_liouvillian(&h, &g).unwrap();
        let d = g.len();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((m[i * d + j] - m[j * d + i].conj()).norm());
            }
        }
        assert!(worst < 1e-12, "hermiticity defect {worst}");
    }
}
