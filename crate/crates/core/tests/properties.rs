use std::f64::consts::PI;

use hybridkvh::densities;
use hybridkvh::liouvillian::{HybridWavefunction, Liouvillian};
use hybridkvh::scenario::checks::{random_observable, random_state};
use hybridkvh::scenario::snapshot::Snapshot;
use hybridkvh::{linalg, Mode, PhaseGrid, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid() -> PhaseGrid {
    PhaseGrid::finite_dim(16, 16, 2, 2.0 * PI, 8.0).unwrap()
}

/// Sum of three low harmonics cos(jq + 2πkp/Lp + φ) with |j|, |k| ≤ 1.
fn low_mode_field(g: &PhaseGrid, c: &[(i32, i32, f64, f64)]) -> Vec<C64> {
    let kp = 2.0 * PI / g.lp;
    let mut out = Vec::with_capacity(g.phase_len());
    for iq in 0..g.nq {
        for ip in 0..g.np {
            let (q, p) = (g.q(iq), g.p(ip));
            let v: f64 = c
                .iter()
                .map(|&(j, k, a, ph)| a * (j as f64 * q + k as f64 * kp * p + ph).cos())
                .sum();
            out.push(C64::new(v, 0.0));
        }
    }
    out
}

fn harmonic() -> impl Strategy<Value = (i32, i32, f64, f64)> {
    (-1i32..=1, -1i32..=1, -1.0f64..1.0, 0.0f64..2.0 * PI)
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn max_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bracket_is_antisymmetric(a in prop::collection::vec(harmonic(), 3), b in prop::collection::vec(harmonic(), 3)) {
        let g = grid();
        let (fa, fb) = (low_mode_field(&g, &a), low_mode_field(&g, &b));
        let ab = g.poisson_bracket(&fa, &fb, 1).unwrap();
        let ba = g.poisson_bracket(&fb, &fa, 1).unwrap();
        let sum: Vec<C64> = ab.iter().zip(&ba).map(|(x, y)| x + y).collect();
        prop_assert!(max_norm(&sum) <= 1e-13);
    }

    #[test]
    fn bracket_satisfies_jacobi(
        a in prop::collection::vec(harmonic(), 2),
        b in prop::collection::vec(harmonic(), 2),
        c in prop::collection::vec(harmonic(), 2),
    ) {
        let g = grid();
        let f = [low_mode_field(&g, &a), low_mode_field(&g, &b), low_mode_field(&g, &c)];
        let mut total = vec![C64::new(0.0, 0.0); g.phase_len()];
        for r in 0..3 {
            let (x, y, z) = (&f[r], &f[(r + 1) % 3], &f[(r + 2) % 3]);
            let yz = g.poisson_bracket(y, z, 1).unwrap();
            let t = g.poisson_bracket(x, &yz, 1).unwrap();
            total.iter_mut().zip(t).for_each(|(s, v)| *s += v);
        }
        prop_assert!(max_norm(&total) <= 1e-12);
    }

    #[test]
    fn bracket_of_constant_vanishes(a in prop::collection::vec(harmonic(), 3), c in -5.0f64..5.0) {
        let g = grid();
        let fa = low_mode_field(&g, &a);
        let k = vec![C64::new(c, 0.0); g.phase_len()];
        prop_assert!(max_norm(&g.poisson_bracket(&fa, &k, 1).unwrap()) <= 1e-13);
    }

    #[test]
    fn liouvillian_is_linear_and_hermitian(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_observable(&mut rng, &g);
        let l = Liouvillian::from_symbol(&g, &h, 1.0).unwrap();
        let u = random_state(&mut rng, &g);
        let v = random_state(&mut rng, &g);
        let (lu, lv) = (l.apply(&u.data).unwrap(), l.apply(&v.data).unwrap());

        let mix: Vec<C64> = u.data.iter().zip(&v.data).map(|(a, b)| a * alpha + b * beta).collect();
        let lmix = l.apply(&mix).unwrap();
        let scale = max_norm(&lu).max(max_norm(&lv));
        let lin = lmix.iter().zip(lu.iter().zip(&lv)).map(|(m, (a, b))| (m - a * alpha - b * beta).norm()).fold(0.0, f64::max);
        prop_assert!(lin <= 1e-12 * scale);

        let defect = (inner(&u.data, &lv) - inner(&lu, &v.data)).norm();
        prop_assert!(defect <= 1e-12 * scale * g.len() as f64);
    }

    #[test]
    fn density_operator_is_hermitian_with_unit_trace(seed in any::<u64>()) {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(&mut rng, &g);
        let d = densities::hybrid_density_operator(&psi, 1.0).unwrap();
        prop_assert!(d.max_hermiticity_defect() <= 1e-12);
        let total: f64 = d.trace_field().iter().sum::<f64>() * g.phase_weight();
        prop_assert!((total - psi.norm_sqr()).abs() <= 1e-10);
        let rho = densities::quantum_density_matrix(&psi);
        prop_assert!(linalg::hermiticity_defect(&rho, 2) <= 1e-14);
        prop_assert!((linalg::trace(&rho, 2).re - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn snapshot_bytes_roundtrip(values in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 24), finite in any::<bool>()) {
        let (mode, dims) = if finite { (Mode::FiniteDim, vec![3, 4, 2]) } else { (Mode::Continuum, vec![2, 3, 4]) };
        let s = Snapshot { mode, dims, data: values.iter().map(|&(a, b)| C64::new(a, b)).collect() };
        let back = Snapshot::from_bytes(&s.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), s.to_bytes());
        prop_assert_eq!(back, s);
    }

    #[test]
    fn truncated_snapshots_are_rejected(cut in 1usize..100) {
        let s = Snapshot { mode: Mode::FiniteDim, dims: vec![2, 2, 2], data: vec![C64::new(1.0, -1.0); 8] };
        let b = s.to_bytes();
        let cut = cut.min(b.len() - 1);
        prop_assert!(Snapshot::from_bytes(&b[..b.len() - cut]).is_err());
    }
}

#[test]
fn random_state_has_grid_shape() {
    let g = grid();
    let psi: HybridWavefunction = random_state(&mut ChaCha8Rng::seed_from_u64(1), &g);
    assert_eq!(psi.data.len(), g.len());
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
}
