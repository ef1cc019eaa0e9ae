use std::f64::consts::PI;

use hybridkvh::closure::{run_closure, ClosureModel, ClosureState, ClosureVariant};
use hybridkvh::liouvillian::{HybridWavefunction, Liouvillian};
use hybridkvh::madelung::{self, LocalFields};
use hybridkvh::model::{self, ModelParams};
use hybridkvh::propagator::{evolve_with, RunState};
use hybridkvh::symbol::{MatrixSymbol, Profile};
use hybridkvh::{PhaseGrid, C64};

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Free motion H = p²/2 pulls the state back along q − pt and multiplies it
/// by the action phase e^{ip²t/2ħ}.
#[test]
fn free_particle_matches_covector_pullback() {
    let g = PhaseGrid::finite_dim(32, 64, 2, 2.0 * PI, 16.0).unwrap();
    let hbar = 0.7;
    let h = MatrixSymbol::new(2).with_scalar(Profile::Quadratic { c: 0.5 }, 1.0);
    let l = Liouvillian::from_symbol(&g, &h, hbar).unwrap();
    let amp = |q: f64, p: f64, level: usize| {
        let f = (0.8 * q.cos()).exp() * C64::from_polar(1.0, 0.5 * (2.0 * q).sin());
        let lv = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)][level];
        f * (-p * p / 2.0).exp() * lv
    };
    let sample = |t: f64| {
        let mut data = Vec::with_capacity(g.len());
        for iq in 0..g.nq {
            for ip in 0..g.np {
                let (q, p) = (g.q(iq), g.p(ip));
                for lv in 0..2 {
                    data.push(
                        amp(q - p * t, p, lv) * C64::from_polar(1.0, p * p * t / (2.0 * hbar)),
                    );
                }
            }
        }
        HybridWavefunction::new(g.clone(), data).unwrap()
    };
    let t = 0.5;
    let end = evolve_with(
        sample(0.0),
        &l,
        1e-3,
        500,
        None,
        &mut |_: &RunState| Ok(()),
        false,
    )
    .unwrap();
    let exact = sample(t);
    let err = max_abs_diff(&end.psi.data, &exact.data)
        / exact.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "relative error {err:e}");
}

fn pendulum_rhs(z: [f64; 2]) -> [f64; 2] {
    [z[1], -z[0].sin()]
}

/// Flow of q̇ = p, ṗ = −sin q over time `t` with fine RK4 steps.
fn pendulum_flow(mut z: [f64; 2], t: f64) -> [f64; 2] {
    let n = 400;
    let h = t / n as f64;
    for _ in 0..n {
        let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
        let k1 = pendulum_rhs(z);
        let k2 = pendulum_rhs(add(z, k1, 0.5 * h));
        let k3 = pendulum_rhs(add(z, k2, 0.5 * h));
        let k4 = pendulum_rhs(add(z, k3, h));
        for i in 0..2 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z
}

fn initial_density(q: f64, p: f64) -> f64 {
    (2.0 * (q.cos() - 1.0) - (p - 0.3).powi(2) / 0.5).exp()
}

/// Mixed state whose variation is confined to |p| ≲ 3, so the sheared field
/// stays periodic across the momentum box.
fn initial_rho(q: f64, p: f64) -> [C64; 4] {
    let bump = (-p * p / 2.0).exp();
    let th = 1.0 + 0.4 * q.cos() * bump;
    let ph = 0.3 + 0.5 * p * bump;
    let v = [
        C64::new((0.5 * th).cos(), 0.0),
        C64::from_polar((0.5 * th).sin(), ph),
    ];
    let mut r = [C64::new(0.0, 0.0); 4];
    for a in 0..2 {
        for b in 0..2 {
            r[a * 2 + b] = v[a] * v[b].conj() * 0.7 + if a == b { 0.15 } else { 0.0 };
        }
    }
    r
}

/// With a scalar Hamiltonian and u = 𝒜 the closure transports D and ρ̂ along
/// the classical characteristics: f(z, t) = f₀(Φ₋ₜ(z)).
#[test]
fn closure_transports_along_pendulum_characteristics() {
    let g = PhaseGrid::finite_dim(64, 128, 2, 2.0 * PI, 16.0).unwrap();
    let h = model::analytic_alpha(
        2,
        ModelParams {
            lambda: 0.0,
            ..ModelParams::default()
        },
    );
    let m = ClosureModel::new(&g, &h).unwrap();
    let mut d = Vec::new();
    let mut rho = Vec::new();
    for iq in 0..g.nq {
        for ip in 0..g.np {
            d.push(initial_density(g.q(iq), g.p(ip)));
            rho.extend(initial_rho(g.q(iq), g.p(ip)));
        }
    }
    let s0 = ClosureState::canonical(&g, d, rho).unwrap();
    let t = 0.5;
    let (end, _) = run_closure(&m, s0, 2.5e-3, 200, ClosureVariant::Reduced).unwrap();
    assert!((end.t - t).abs() < 1e-12);

    let (mut d_err, mut r_err) = (0.0f64, 0.0f64);
    for iq in 0..g.nq {
        for ip in 0..g.np {
            let [q, p] = pendulum_flow([g.q(iq), g.p(ip)], -t);
            let cell = iq * g.np + ip;
            d_err = d_err.max((end.d[cell] - initial_density(q, p)).abs());
            let r0 = initial_rho(q, p);
            r_err = r_err.max(max_abs_diff(&end.rho[cell * 4..cell * 4 + 4], &r0));
        }
    }
    assert!(d_err < 1e-5, "D error {d_err:e}");
    assert!(r_err < 1e-4, "rho error {r_err:e}");
}

/// Gauge-invariant gradients of S agree with the analytic phase gradients.
#[test]
fn madelung_gradients_match_analytic_phase() {
    let g = PhaseGrid::continuum(32, 64, 32, 2.0 * PI, 16.0, 2.0 * PI).unwrap();
    let hbar = 1.3;
    let kp = 2.0 * PI / g.lp;
    let phase = |q: f64, p: f64, x: f64| {
        0.4 * q.sin() + 0.2 * (kp * p).cos() + 2.0 * x + 0.3 * (x - q).sin()
    };
    let grad = |q: f64, p: f64, x: f64| {
        [
            0.4 * q.cos() - 0.3 * (x - q).cos(),
            -0.2 * kp * (kp * p).sin(),
            2.0 + 0.3 * (x - q).cos(),
        ]
    };
    let mut data = Vec::with_capacity(g.len());
    for iq in 0..g.nq {
        for ip in 0..g.np {
            for ix in 0..g.nx {
                let (q, p, x) = (g.q(iq), g.p(ip), g.x(ix));
                let r = (0.5 * (q.cos() + 0.5 * x.cos()) - p * p / 2.0).exp();
                data.push(C64::from_polar(r, phase(q, p, x)));
            }
        }
    }
    let psi = HybridWavefunction::new(g.clone(), data).unwrap();
    let f = LocalFields::compute(&psi, hbar, madelung::DEFAULT_NODE_THRESHOLD).unwrap();
    let dmax = f.d.iter().cloned().fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for iq in 0..g.nq {
        for ip in 0..g.np {
            for ix in 0..g.nx {
                let k = g.idx(iq, ip, ix);
                if f.d[k] < 1e-6 * dmax {
                    continue;
                }
                let gr = grad(g.q(iq), g.p(ip), g.x(ix));
                let got = [f.sq[k], f.sp[k], f.sx[k]];
                for a in 0..3 {
                    worst = worst.max((got[a] - hbar * gr[a]).abs());
                }
            }
        }
    }
    assert!(worst < 1e-7, "gradient error {worst:e}");

    let fields = madelung::polar_decompose(&psi, hbar, madelung::DEFAULT_NODE_THRESHOLD).unwrap();
    let back = madelung::reconstruct(&fields);
    for k in 0..g.len() {
        let expected = if fields.mask[k] {
            psi.data[k]
        } else {
            C64::new(0.0, 0.0)
        };
        assert!((back.data[k] - expected).norm() < 1e-14);
    }
}
