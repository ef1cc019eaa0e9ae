//! Batch invariant suites with a machine-readable pass/fail report.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closure::{run_closure, ClosureModel, ClosureState, ClosureVariant};
use crate::densities;
use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::linalg;
use crate::liouvillian::{
    commutator_identity_residual, liouvillian_equivariance_residual, probe_state,
    HybridWavefunction, Liouvillian, PointTransform, TransposeKind,
};
use crate::madelung;
use crate::model::{self, HybridHamiltonian, ModelParams};
use crate::propagator::{evolve_with, DenseOracle, RunState};
use crate::states::{self, PhaseProfile, QuantumProfile};
use crate::symbol::{MatrixSymbol, Profile};

pub const SUITES: [&str; 3] = ["identities", "convergence", "closure"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub suite: &'static str,
    pub name: &'static str,
    pub measured: f64,
    pub bound: Bound,
    pub limit: f64,
}

impl CheckEntry {
    pub fn pass(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.measured <= self.limit,
            Bound::AtLeast => self.measured >= self.limit,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub entries: Vec<CheckEntry>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(CheckEntry::pass)
    }

    fn push(
        &mut self,
        suite: &'static str,
        name: &'static str,
        measured: f64,
        bound: Bound,
        limit: f64,
    ) {
        self.entries.push(CheckEntry {
            suite,
            name,
            measured,
            bound,
            limit,
        });
    }

    /// `suite,check,status,measured,bound` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut o = String::from("suite,check,status,measured,bound\n");
        for e in &self.entries {
            let op = match e.bound {
                Bound::AtMost => "<=",
                Bound::AtLeast => ">=",
            };
            let _ = writeln!(
                o,
                "{},{},{},{:.6e},{} {:.1e}",
                e.suite,
                e.name,
                if e.pass() { "PASS" } else { "FAIL" },
                e.measured,
                op,
                e.limit
            );
        }
        o
    }
}

/// Runs one named suite.
pub fn check_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "identities" => identities(),
        "convergence" => convergence(),
        "closure" => closure(),
        other => Err(Error::InvalidParameter(format!(
            "unknown suite {other:?} (known: {})",
            SUITES.join(", ")
        ))),
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let a: Vec<C64> = (0..n * n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let ad = linalg::adjoint(&a, n);
    a.iter().zip(&ad).map(|(x, y)| (x + y) * 0.5).collect()
}

/// Random Hermitian observable built from low q- and p-harmonics of the grid.
pub fn random_observable(rng: &mut ChaCha8Rng, grid: &PhaseGrid) -> MatrixSymbol {
    let n = grid.nx;
    let (kq, kp) = (2.0 * PI / grid.lq, 2.0 * PI / grid.lp);
    let mut s = MatrixSymbol::new(n).with(Profile::Const, random_hermitian(rng, n));
    for _ in 0..3 {
        let profile = Profile::Harmonic {
            kq: kq * rng.gen_range(0..3) as f64,
            kp: kp * rng.gen_range(0..2) as f64,
            phase: rng.gen_range(0.0..2.0 * PI),
        };
        s.push(profile, random_hermitian(rng, n));
    }
    s
}

/// Normalized wavefunction with independent random entries.
pub fn random_state(rng: &mut ChaCha8Rng, grid: &PhaseGrid) -> HybridWavefunction {
    let data = (0..grid.len())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut psi = HybridWavefunction {
        grid: grid.clone(),
        data,
    };
    psi.normalize().expect("random state is nonzero");
    psi
}

/// Grid on which the commutator probe state is resolved and `cos p` is periodic.
pub fn commutator_grid() -> Result<PhaseGrid> {
    PhaseGrid::finite_dim(8, 64, 2, 2.0 * PI, 8.0 * PI)
}

/// The three symbol pairs of the commutator identity: a noncommuting matrix
/// pair, a scalar (commutative) pair, and a symbol with itself.
pub fn commutator_pairs() -> [(MatrixSymbol, MatrixSymbol); 3] {
    let h = MatrixSymbol::new(2).with(Profile::sin_q(1.0), linalg::sigma_x());
    let f = MatrixSymbol::new(2).with(Profile::cos_p(1.0), linalg::sigma_y());
    let hs = MatrixSymbol::new(2)
        .with_scalar(Profile::sin_q(1.0), 1.0)
        .with_scalar(Profile::Quadratic { c: 0.5 }, 1.0);
    let fs = MatrixSymbol::new(2).with_scalar(Profile::cos_p(1.0), 1.0);
    [(h.clone(), f), (hs, fs), (h.clone(), h)]
}

fn identities() -> Result<SuiteReport> {
    const S: &str = "identities";
    let mut r = SuiteReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20_251_018);

    let g = PhaseGrid::finite_dim(8, 16, 2, 2.0 * PI, 8.0)?;
    let psi = random_state(&mut rng, &g);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = random_observable(&mut rng, &g);
        let p = densities::defining_identity_residual(&a, &psi, 1.0)?;
        worst = worst.max(p.residual / p.lhs.norm().max(p.rhs.norm()).max(1.0));
    }
    r.push(S, "pairing_identity", worst, Bound::AtMost, 1e-10);

    let cg = commutator_grid()?;
    let probe = probe_state(&cg, 1.0);
    let mut worst: f64 = 0.0;
    for (h, f) in commutator_pairs() {
        let c = commutator_identity_residual(&cg, &h, &f, 1.0, TransposeKind::Partial, &probe)?;
        worst = worst.max(c.probe_relative);
    }
    r.push(S, "commutator_identity", worst, Bound::AtMost, 1e-8);

    let eg = PhaseGrid::finite_dim(16, 64, 2, 2.0 * PI, 16.0)?;
    let ep = probe_state(&eg, 0.5);
    let ham = model::analytic_alpha(2, ModelParams::default());
    let mut worst: f64 = 0.0;
    for (sq, sp) in [(1, 0), (0, 4), (3, 8)] {
        let t = PointTransform::translation(sq, sp);
        worst = worst
            .max(liouvillian_equivariance_residual(&t, &ham, &ep)?)
            .max(densities::density_equivariance_residual(&t, &ep, 1.0)?);
    }
    r.push(S, "shift_equivariance", worst, Bound::AtMost, 1e-8);
    let u = linalg::unitary_exp(&linalg::sigma_y(), 2, 0.7);
    let t = PointTransform::unitary(u);
    let sz = HybridHamiltonian::MatrixValued {
        symbol: MatrixSymbol::new(2).with(Profile::sin_q(1.0), linalg::sigma_z()),
        params: ModelParams::default(),
    };
    let worst = liouvillian_equivariance_residual(&t, &sz, &ep)?
        .max(densities::density_equivariance_residual(&t, &ep, 1.0)?);
    r.push(S, "unitary_equivariance", worst, Bound::AtMost, 1e-12);

    let d = densities::hybrid_density_operator(&ep, 1.0)?;
    let total: f64 = d.trace_field().iter().sum::<f64>() * eg.phase_weight();
    r.push(
        S,
        "density_trace",
        (total - 1.0).abs(),
        Bound::AtMost,
        1e-10,
    );
    r.push(
        S,
        "density_hermiticity",
        d.max_hermiticity_defect(),
        Bound::AtMost,
        1e-12,
    );

    let pg = PhaseGrid::continuum(8, 16, 16, 2.0 * PI, 8.0, 2.0 * PI)?;
    let cp = probe_state(&pg, 1.0);
    let fields = madelung::polar_decompose(&cp, 1.0, madelung::DEFAULT_NODE_THRESHOLD)?;
    let back = madelung::reconstruct(&fields);
    let mut worst: f64 = 0.0;
    for k in 0..cp.data.len() {
        if fields.mask[k] {
            worst = worst.max((back.data[k] - cp.data[k]).norm());
        }
    }
    r.push(S, "polar_roundtrip", worst, Bound::AtMost, 1e-12);

    let lg = PhaseGrid::finite_dim(32, 64, 2, 2.0 * PI, 16.0)?;
    let state = varied_closure_state(&lg)?;
    let m = ClosureModel::new(&lg, &model::analytic_alpha(2, ModelParams::default()))?;
    r.push(
        S,
        "lie_identity",
        m.lie_identity_residual(&state)?,
        Bound::AtMost,
        1e-10,
    );
    Ok(r)
}

/// Closure state with a z-dependent mixed ρ̂ and u = 𝒜.
pub fn varied_closure_state(grid: &PhaseGrid) -> Result<ClosureState> {
    let prof = PhaseProfile::default().sample(grid)?;
    let mut d: Vec<f64> = prof.iter().map(|v| v.norm_sqr()).collect();
    let mass = d.iter().sum::<f64>() * grid.phase_weight();
    d.iter_mut().for_each(|v| *v /= mass);
    let (kq, kp) = (2.0 * PI / grid.lq, 2.0 * PI / grid.lp);
    let mut rho = Vec::with_capacity(grid.phase_len() * 4);
    for iq in 0..grid.nq {
        for ip in 0..grid.np {
            let (q, p) = (grid.q(iq), grid.p(ip));
            let th = 1.0 + 0.4 * (kq * q).cos();
            let ph = 0.3 + 0.5 * (kp * p).sin();
            let v = [
                C64::new((0.5 * th).cos(), 0.0),
                C64::from_polar((0.5 * th).sin(), ph),
            ];
            for a in 0..2 {
                for b in 0..2 {
                    let mut e = v[a] * v[b].conj() * 0.7;
                    if a == b {
                        e += 0.15;
                    }
                    rho.push(e);
                }
            }
        }
    }
    ClosureState::canonical(grid, d, rho)
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    linalg::max_abs_diff(a, b)
}

fn convergence() -> Result<SuiteReport> {
    const S: &str = "convergence";
    let mut r = SuiteReport::default();
    let prm = ModelParams::default();

    let g = PhaseGrid::finite_dim(8, 8, 2, 2.0 * PI, 8.0)?;
    let h = model::analytic_alpha(2, prm);
    let psi = states::gaussian_product(
        &g,
        &PhaseProfile::default(),
        &QuantumProfile::Spinor {
            theta: 1.0,
            phi: 0.3,
        },
    )?;
    let l = Liouvillian::new(&g, &h)?;
    let oracle = DenseOracle::new(&l)?;
    let t_end = 0.5;
    let exact = oracle.propagate(&psi, t_end)?;
    let mut errs = Vec::new();
    for steps in [100usize, 200] {
        let dt = t_end / steps as f64;
        let end = evolve_with(
            psi.clone(),
            &l,
            dt,
            steps,
            None,
            &mut |_: &RunState| Ok(()),
            false,
        )?;
        errs.push(max_diff(&end.psi.data, &exact.data));
    }
    r.push(S, "rk4_oracle_error", errs[0], Bound::AtMost, 1e-8);
    let order = (errs[0] / errs[1]).log2();
    r.push(
        S,
        "rk4_order_deviation",
        (order - 4.0).abs(),
        Bound::AtMost,
        0.2,
    );

    let cg = PhaseGrid::continuum(32, 64, 16, 2.0 * PI, 12.0, 2.0 * PI)?;
    let ch = model::pendulum_bilinear(prm);
    let cpsi = states::gaussian_product(
        &cg,
        &PhaseProfile::default(),
        &QuantumProfile::PlaneWave {
            winding: 1,
            modulation: 0.3,
        },
    )?;
    let cl = Liouvillian::new(&cg, &ch)?;
    let dt = 1e-3;
    let mut frames = Vec::new();
    evolve_with(
        cpsi,
        &cl,
        dt,
        40,
        Some(1),
        &mut |s: &RunState| {
            frames.push(s.psi.clone());
            Ok(())
        },
        false,
    )?;
    let thr = madelung::DEFAULT_NODE_THRESHOLD;
    let window = |k: usize| {
        [
            frames[20 - k].clone(),
            frames[20].clone(),
            frames[20 + k].clone(),
        ]
    };
    let mut orders = [0.0f64; 3];
    let mut norms = [[0.0f64; 3]; 2];
    for (j, k) in [10usize, 5].into_iter().enumerate() {
        let w = window(k);
        let (rs, rd) = madelung::madelung_residuals(&w, dt * k as f64, &ch, thr)?;
        let c = madelung::continuity_residual(&w, dt * k as f64, &ch, thr)?;
        norms[j] = [rs.norm, rd.norm, c.norm];
    }
    for i in 0..3 {
        orders[i] = (norms[0][i] / norms[1][i]).log2();
    }
    let dev = orders.iter().map(|o| (o - 2.0).abs()).fold(0.0, f64::max);
    r.push(
        S,
        "madelung_stencil_order_deviation",
        dev,
        Bound::AtMost,
        0.2,
    );
    Ok(r)
}

fn closure() -> Result<SuiteReport> {
    const S: &str = "closure";
    let mut r = SuiteReport::default();
    let g = PhaseGrid::finite_dim(32, 64, 2, 2.0 * PI, 16.0)?;
    let m = ClosureModel::new(&g, &model::analytic_alpha(2, ModelParams::default()))?;
    let s0 = varied_closure_state(&g)?;
    let (red, rs) = run_closure(&m, s0.clone(), 1e-3, 200, ClosureVariant::Reduced)?;
    let (gen, _) = run_closure(&m, s0, 1e-3, 200, ClosureVariant::General)?;
    let a = rs[0];
    let mass = rs
        .iter()
        .map(|d| (d.mass - a.mass).abs())
        .fold(0.0, f64::max);
    let energy = rs
        .iter()
        .map(|d| ((d.energy - a.energy) / a.energy).abs())
        .fold(0.0, f64::max);
    let trace = rs.iter().map(|d| d.max_trace_dev).fold(0.0, f64::max);
    let eig = rs
        .iter()
        .map(|d| d.min_rho_eig)
        .fold(f64::INFINITY, f64::min);
    r.push(S, "mass_drift", mass, Bound::AtMost, 1e-9);
    r.push(S, "trace_deviation", trace, Bound::AtMost, 1e-8);
    r.push(S, "min_rho_eigenvalue", eig, Bound::AtLeast, -1e-8);
    r.push(S, "energy_drift", energy, Bound::AtMost, 1e-6);
    r.push(
        S,
        "invariant_manifold",
        gen.invariant_deviation(),
        Bound::AtMost,
        1e-9,
    );
    let agree = red
        .d
        .iter()
        .zip(&gen.d)
        .map(|(x, y)| (x - y).abs())
        .fold(max_diff(&red.rho, &gen.rho), f64::max);
    r.push(S, "general_vs_reduced", agree, Bound::AtMost, 1e-9);
    Ok(r)
}
