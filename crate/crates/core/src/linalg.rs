//! Small dense complex matrices stored row-major in flat slices.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n * n]
}

pub fn identity(n: usize) -> Vec<C64> {
    let mut m = zeros(n);
    for i in 0..n {
        m[i * n + i] = C64::new(1.0, 0.0);
    }
    m
}

pub fn sigma_x() -> Vec<C64> {
    vec![0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()]
}

pub fn sigma_y() -> Vec<C64> {
    vec![
        0.0.into(),
        C64::new(0.0, -1.0),
        C64::new(0.0, 1.0),
        0.0.into(),
    ]
}

pub fn sigma_z() -> Vec<C64> {
    vec![1.0.into(), 0.0.into(), 0.0.into(), (-1.0).into()]
}

pub fn matmul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut c = zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn matvec_into(a: &[C64], v: &[C64], n: usize, out: &mut [C64]) {
    for i in 0..n {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..n {
            s += a[i * n + j] * v[j];
        }
        out[i] = s;
    }
}

pub fn adjoint(a: &[C64], n: usize) -> Vec<C64> {
    let mut b = zeros(n);
    for i in 0..n {
        for j in 0..n {
            b[j * n + i] = a[i * n + j].conj();
        }
    }
    b
}

pub fn conj(a: &[C64]) -> Vec<C64> {
    a.iter().map(|v| v.conj()).collect()
}

pub fn trace(a: &[C64], n: usize) -> C64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// Tr(A B) without forming the product.
pub fn trace_product(a: &[C64], b: &[C64], n: usize) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            s += a[i * n + k] * b[k * n + i];
        }
    }
    s
}

pub fn commutator(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let ab = matmul(a, b, n);
    let ba = matmul(b, a, n);
    ab.iter().zip(&ba).map(|(x, y)| x - y).collect()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entry of |A − A†|.
pub fn hermiticity_defect(a: &[C64], n: usize) -> f64 {
    max_abs_diff(a, &adjoint(a, n))
}

/// Spectral (operator 2-) norm bound by the Frobenius norm.
pub fn frobenius(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn to_dmatrix(a: &[C64], n: usize) -> DMatrix<C64> {
    DMatrix::from_row_slice(n, n, a)
}

/// Eigen-decomposition of the Hermitian part of `a`. Returns eigenvalues in
/// ascending order and the eigenvectors as columns of a row-major matrix.
pub fn hermitian_eigen(a: &[C64], n: usize) -> (Vec<f64>, Vec<C64>) {
    let m = to_dmatrix(a, n);
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = zeros(n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + col] = eig.eigenvectors[(r, i)];
        }
    }
    (values, vecs)
}

pub fn min_eigenvalue_hermitian(a: &[C64], n: usize) -> f64 {
    if n == 1 {
        return a[0].re;
    }
    if n == 2 {
        let tr = 0.5 * (a[0].re + a[3].re);
        let d = 0.5 * (a[0].re - a[3].re);
        let off = 0.5 * (a[1] + a[2].conj());
        return tr - (d * d + off.norm_sqr()).sqrt();
    }
    hermitian_eigen(a, n).0[0]
}

/// exp(−i t H) for Hermitian H via its eigen-decomposition.
pub fn unitary_exp(h: &[C64], n: usize, t: f64) -> Vec<C64> {
    let (vals, vecs) = hermitian_eigen(h, n);
    let mut out = zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                let phase = C64::from_polar(1.0, -t * vals[k]);
                s += vecs[i * n + k] * phase * vecs[j * n + k].conj();
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Singular values of a general `rows × cols` complex matrix, descending.
pub fn singular_values(a: &[C64], rows: usize, cols: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(rows, cols, a);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let xy = matmul(&sigma_x(), &sigma_y(), 2);
        let iz: Vec<C64> = sigma_z().iter().map(|v| v * C64::new(0.0, 1.0)).collect();
        assert!(max_abs_diff(&xy, &iz) < 1e-15);
    }

    #[test]
    fn min_eigenvalue_matches_general_solver() {
        let a = vec![
            C64::new(0.7, 0.0),
            C64::new(0.1, -0.3),
            C64::new(0.1, 0.3),
            C64::new(-0.2, 0.0),
        ];
        let fast = min_eigenvalue_hermitian(&a, 2);
        let full = hermitian_eigen(&a, 2).0[0];
        assert!((fast - full).abs() < 1e-14);
    }

    #[test]
    fn unitary_exp_of_sigma_z() {
        let u = unitary_exp(&sigma_z(), 2, 0.4);
        assert!((u[0] - C64::from_polar(1.0, -0.4)).norm() < 1e-14);
        assert!((u[3] - C64::from_polar(1.0, 0.4)).norm() < 1e-14);
        assert!(u[1].norm() < 1e-14);
    }
}
