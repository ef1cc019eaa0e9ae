//! Matrix-valued phase-space symbols Â(q, p) = Σ f_k(q, p) M_k with analytic
//! profiles, so that first and second derivatives are exact.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::linalg;

/// Value and derivatives up to second order of a scalar profile at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub q: f64,
    pub p: f64,
    pub qq: f64,
    pub qp: f64,
    pub pp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Const,
    /// c·p
    Linear {
        c: f64,
    },
    /// c·p²
    Quadratic {
        c: f64,
    },
    /// cos(kq·q + kp·p + phase)
    Harmonic {
        kq: f64,
        kp: f64,
        phase: f64,
    },
}

impl Profile {
    pub fn sin_q(kq: f64) -> Self {
        Profile::Harmonic {
            kq,
            kp: 0.0,
            phase: -0.5 * PI,
        }
    }

    pub fn cos_q(kq: f64) -> Self {
        Profile::Harmonic {
            kq,
            kp: 0.0,
            phase: 0.0,
        }
    }

    pub fn cos_p(kp: f64) -> Self {
        Profile::Harmonic {
            kq: 0.0,
            kp,
            phase: 0.0,
        }
    }

    pub fn jet(&self, q: f64, p: f64) -> Jet {
        match *self {
            Profile::Const => Jet {
                v: 1.0,
                ..Jet::default()
            },
            Profile::Linear { c } => Jet {
                v: c * p,
                p: c,
                ..Jet::default()
            },
            Profile::Quadratic { c } => Jet {
                v: c * p * p,
                p: 2.0 * c * p,
                pp: 2.0 * c,
                ..Jet::default()
            },
            Profile::Harmonic { kq, kp, phase } => {
                let (s, c) = (kq * q + kp * p + phase).sin_cos();
                Jet {
                    v: c,
                    q: -kq * s,
                    p: -kp * s,
                    qq: -kq * kq * c,
                    qp: -kq * kp * c,
                    pp: -kp * kp * c,
                }
            }
        }
    }

    /// Whether the profile is smooth and periodic on the grid's phase-space torus.
    pub fn is_periodic(&self, grid: &PhaseGrid) -> bool {
        let integral = |k: f64, l: f64| {
            let m = k * l / (2.0 * PI);
            (m - m.round()).abs() < 1e-9
        };
        match *self {
            Profile::Const => true,
            Profile::Linear { c } | Profile::Quadratic { c } => c == 0.0,
            Profile::Harmonic { kq, kp, .. } => integral(kq, grid.lq) && integral(kp, grid.lp),
        }
    }

    /// Expansion of f(q + a, p + b) in profiles.
    fn translate(&self, a: f64, b: f64) -> Vec<(f64, Profile)> {
        match *self {
            Profile::Const => vec![(1.0, Profile::Const)],
            Profile::Linear { c } => vec![(1.0, *self), (c * b, Profile::Const)],
            Profile::Quadratic { c } => vec![
                (1.0, *self),
                (1.0, Profile::Linear { c: 2.0 * c * b }),
                (c * b * b, Profile::Const),
            ],
            Profile::Harmonic { kq, kp, phase } => vec![(
                1.0,
                Profile::Harmonic {
                    kq,
                    kp,
                    phase: phase + kq * a + kp * b,
                },
            )],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTerm {
    pub profile: Profile,
    /// Constant n×n coefficient, row-major.
    pub coeff: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSymbol {
    pub n: usize,
    pub terms: Vec<MatrixTerm>,
}

impl MatrixSymbol {
    pub fn new(n: usize) -> Self {
        MatrixSymbol {
            n,
            terms: Vec::new(),
        }
    }

    pub fn with(mut self, profile: Profile, coeff: Vec<C64>) -> Self {
        self.push(profile, coeff);
        self
    }

    /// Adds `c · profile · Id`.
    pub fn with_scalar(self, profile: Profile, c: f64) -> Self {
        let n = self.n;
        let m = linalg::identity(n).into_iter().map(|v| v * c).collect();
        self.with(profile, m)
    }

    pub fn push(&mut self, profile: Profile, coeff: Vec<C64>) {
        assert_eq!(coeff.len(), self.n * self.n, "coefficient must be n×n");
        self.terms.push(MatrixTerm { profile, coeff });
    }

    /// Entrywise complex conjugate Ā.
    pub fn conj(&self) -> Self {
        MatrixSymbol {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|t| MatrixTerm {
                    profile: t.profile,
                    coeff: linalg::conj(&t.coeff),
                })
                .collect(),
        }
    }

    /// U† Â U for a constant matrix U.
    pub fn conjugate_by(&self, u: &[C64]) -> Self {
        let n = self.n;
        let ud = linalg::adjoint(u, n);
        MatrixSymbol {
            n,
            terms: self
                .terms
                .iter()
                .map(|t| MatrixTerm {
                    profile: t.profile,
                    coeff: linalg::matmul(&linalg::matmul(&ud, &t.coeff, n), u, n),
                })
                .collect(),
        }
    }

    /// Pullback Â ∘ η for the translation η(q, p) = (q + a, p + b).
    pub fn translate(&self, a: f64, b: f64) -> Self {
        let mut out = MatrixSymbol::new(self.n);
        for t in &self.terms {
            for (w, prof) in t.profile.translate(a, b) {
                if w != 0.0 {
                    out.push(prof, t.coeff.iter().map(|v| v * w).collect());
                }
            }
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms
            .iter()
            .all(|t| linalg::hermiticity_defect(&t.coeff, self.n) <= tol)
    }

    pub fn is_periodic(&self, grid: &PhaseGrid) -> bool {
        self.terms.iter().all(|t| t.profile.is_periodic(grid))
    }

    pub fn jets_at(&self, q: f64, p: f64) -> [Vec<C64>; 6] {
        let n2 = self.n * self.n;
        let mut out: [Vec<C64>; 6] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n2]);
        for t in &self.terms {
            let j = t.profile.jet(q, p);
            let w = [j.v, j.q, j.p, j.qq, j.qp, j.pp];
            for (slot, &wk) in out.iter_mut().zip(&w) {
                if wk != 0.0 {
                    for (o, c) in slot.iter_mut().zip(&t.coeff) {
                        *o += c * wk;
                    }
                }
            }
        }
        out
    }

    /// Value and derivatives evaluated at every phase-space grid point.
    pub fn evaluate(&self, grid: &PhaseGrid) -> SymbolJets {
        let n2 = self.n * self.n;
        let len = grid.phase_len() * n2;
        let mut jets = SymbolJets {
            n: self.n,
            v: vec![C64::new(0.0, 0.0); len],
            q: vec![C64::new(0.0, 0.0); len],
            p: vec![C64::new(0.0, 0.0); len],
            qq: vec![C64::new(0.0, 0.0); len],
            qp: vec![C64::new(0.0, 0.0); len],
            pp: vec![C64::new(0.0, 0.0); len],
        };
        for iq in 0..grid.nq {
            for ip in 0..grid.np {
                let cell = iq * grid.np + ip;
                let at = self.jets_at(grid.q(iq), grid.p(ip));
                let r = cell * n2..(cell + 1) * n2;
                jets.v[r.clone()].copy_from_slice(&at[0]);
                jets.q[r.clone()].copy_from_slice(&at[1]);
                jets.p[r.clone()].copy_from_slice(&at[2]);
                jets.qq[r.clone()].copy_from_slice(&at[3]);
                jets.qp[r.clone()].copy_from_slice(&at[4]);
                jets.pp[r].copy_from_slice(&at[5]);
            }
        }
        jets
    }
}

/// Grid samples of a matrix symbol and its derivatives, `(q, p, n·n)` layout.
#[derive(Debug, Clone)]
pub struct SymbolJets {
    pub n: usize,
    pub v: Vec<C64>,
    pub q: Vec<C64>,
    pub p: Vec<C64>,
    pub qq: Vec<C64>,
    pub qp: Vec<C64>,
    pub pp: Vec<C64>,
}

impl SymbolJets {
    /// {Â, F̂} − {F̂, Â} with its first derivatives, using exact second derivatives
    /// of both symbols. Second derivatives of the result are not needed and are
    /// left at zero.
    pub fn symmetrized_bracket(a: &SymbolJets, f: &SymbolJets) -> Result<SymbolJets> {
        if a.n != f.n || a.v.len() != f.v.len() {
            return Err(Error::shape(&[a.v.len()], &[f.v.len()]));
        }
        let n = a.n;
        let n2 = n * n;
        let cells = a.v.len() / n2;
        let zero = C64::new(0.0, 0.0);
        let mut out = SymbolJets {
            n,
            v: vec![zero; a.v.len()],
            q: vec![zero; a.v.len()],
            p: vec![zero; a.v.len()],
            qq: vec![zero; a.v.len()],
            qp: vec![zero; a.v.len()],
            pp: vec![zero; a.v.len()],
        };
        let mm = |x: &[C64], y: &[C64]| linalg::matmul(x, y, n);
        for c in 0..cells {
            let r = c * n2..(c + 1) * n2;
            let (aq, ap, aqq, aqp, app) = (
                &a.q[r.clone()],
                &a.p[r.clone()],
                &a.qq[r.clone()],
                &a.qp[r.clone()],
                &a.pp[r.clone()],
            );
            let (fq, fp, fqq, fqp, fpp) = (
                &f.q[r.clone()],
                &f.p[r.clone()],
                &f.qq[r.clone()],
                &f.qp[r.clone()],
                &f.pp[r.clone()],
            );
            let combine = |terms: &[(Vec<C64>, f64)]| -> Vec<C64> {
                let mut acc = vec![zero; n2];
                for (m, s) in terms {
                    for (o, v) in acc.iter_mut().zip(m) {
                        *o += v * *s;
                    }
                }
                acc
            };
            let v = combine(&[
                (mm(aq, fp), 1.0),
                (mm(ap, fq), -1.0),
                (mm(fq, ap), -1.0),
                (mm(fp, aq), 1.0),
            ]);
            let dq = combine(&[
                (mm(aqq, fp), 1.0),
                (mm(aq, fqp), 1.0),
                (mm(aqp, fq), -1.0),
                (mm(ap, fqq), -1.0),
                (mm(fqq, ap), -1.0),
                (mm(fq, aqp), -1.0),
                (mm(fqp, aq), 1.0),
                (mm(fp, aqq), 1.0),
            ]);
            let dp = combine(&[
                (mm(aqp, fp), 1.0),
                (mm(aq, fpp), 1.0),
                (mm(app, fq), -1.0),
                (mm(ap, fqp), -1.0),
                (mm(fqp, ap), -1.0),
                (mm(fq, app), -1.0),
                (mm(fpp, aq), 1.0),
                (mm(fp, aqp), 1.0),
            ]);
            out.v[r.clone()].copy_from_slice(&v);
            out.q[r.clone()].copy_from_slice(&dq);
            out.p[r].copy_from_slice(&dp);
        }
        Ok(out)
    }

    /// Scales the symbol and its derivatives by a complex constant.
    pub fn scaled(mut self, s: C64) -> Self {
        for f in [
            &mut self.v,
            &mut self.q,
            &mut self.p,
            &mut self.qq,
            &mut self.qp,
            &mut self.pp,
        ] {
            for x in f.iter_mut() {
                *x *= s;
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_jet_matches_finite_differences() {
        let prof = Profile::Harmonic {
            kq: 2.0,
            kp: -0.5,
            phase: 0.3,
        };
        let (q, p, h) = (0.4, -1.1, 1e-5);
        let f = |q: f64, p: f64| prof.jet(q, p).v;
        let j = prof.jet(q, p);
        assert!((j.q - (f(q + h, p) - f(q - h, p)) / (2.0 * h)).abs() < 1e-8);
        assert!((j.p - (f(q, p + h) - f(q, p - h)) / (2.0 * h)).abs() < 1e-8);
        let fq = |q: f64, p: f64| prof.jet(q, p).q;
        assert!((j.qp - (fq(q, p + h) - fq(q, p - h)) / (2.0 * h)).abs() < 1e-7);
    }

    #[test]
    fn translation_of_quadratic() {
        let s = MatrixSymbol::new(1).with_scalar(Profile::Quadratic { c: 0.5 }, 1.0);
        let t = s.translate(0.7, 1.5);
        let v = t.jets_at(0.2, -0.3)[0][0].re;
        assert!((v - 0.5 * (1.2f64).powi(2)).abs() < 1e-14);
    }
}
