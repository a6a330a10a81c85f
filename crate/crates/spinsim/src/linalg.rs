//! Dense complex linear algebra helpers shared by the whole crate.
//!
//! Everything here works on dynamically sized `nalgebra` matrices over
//! `Complex64`; dimensions in this crate never exceed a few dozen, so dense
//! storage and `O(n^3)` algorithms are always appropriate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// `1i` as a `Complex64`.
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Kronecker (tensor) product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Maximum absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Maximum absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    max_abs_diff(a, &a.adjoint()) <= tol
}

pub fn is_unitary(a: &CMat, tol: f64) -> bool {
    let n = a.nrows();
    max_abs_diff(&(a.adjoint() * a), &CMat::identity(n, n)) <= tol
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// ascending order. Returns `(eigenvalues, eigenvector columns)` such that
/// `a = V diag(λ) V†`.
pub fn herm_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues only, ascending.
pub fn herm_eigvals(a: &CMat) -> Vec<f64> {
    let mut vals: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

/// `exp(-i H t)` for Hermitian `H`, via eigendecomposition.
pub fn expm_minus_i_herm(h: &CMat, t: f64) -> CMat {
    let (vals, vecs) = herm_eigen(h);
    unitary_from_eigen(&vals, &vecs, t)
}

/// `exp(-i diag(λ) t)` conjugated back through `V`: `V e^{-iλt} V†`.
pub fn unitary_from_eigen(vals: &[f64], vecs: &CMat, t: f64) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let ph = (-I * cr(l * t)).exp();
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * vecs.adjoint()
}

/// Left-multiplies by a diagonal phase vector: `diag(d) · a`.
pub fn diag_mul_left(d: &[C64], a: &CMat) -> CMat {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[(i, j)] *= d[i];
        }
    }
    out
}

/// Conjugates by a diagonal phase vector: `diag(d) · a · diag(d)†`.
pub fn diag_sandwich(d: &[C64], a: &CMat) -> CMat {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[(i, j)] *= d[i] * d[j].conj();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_herm(n: usize) -> CMat {
        let mut a = CMat::zeros(n, n);
        let mut s = 1.0_f64;
        for i in 0..n {
            for j in i..n {
                s = (s * 1.71 + 0.37).fract();
                let re = s - 0.5;
                s = (s * 2.13 + 0.11).fract();
                let im = if i == j { 0.0 } else { s - 0.5 };
                a[(i, j)] = c(re, im);
                a[(j, i)] = c(re, -im);
            }
        }
        a
    }

    #[test]
    fn eigen_reconstructs_hermitian() {
        let a = test_herm(12);
        let (vals, vecs) = herm_eigen(&a);
        let d = CMat::from_diagonal(&CVec::from_iterator(12, vals.iter().map(|&v| cr(v))));
        let recon = &vecs * d * vecs.adjoint();
        assert!(max_abs_diff(&a, &recon) < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn expm_is_unitary_and_matches_diagonal_case() {
        let a = test_herm(8);
        let u = expm_minus_i_herm(&a, 0.7);
        assert!(is_unitary(&u, 1e-12));

        let d = CMat::from_diagonal(&CVec::from_iterator(3, [1.0, -2.0, 0.5].iter().map(|&v| cr(v))));
        let u = expm_minus_i_herm(&d, 2.0);
        for (k, &l) in [1.0, -2.0, 0.5].iter().enumerate() {
            assert!((u[(k, k)] - (-I * cr(l * 2.0)).exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn kron_shapes_and_values() {
        let a = CMat::from_row_slice(2, 2, &[cr(1.0), cr(2.0), cr(3.0), cr(4.0)]);
        let id = CMat::identity(3, 3);
        let k = kron(&a, &id);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k[(0, 3)], cr(2.0));
        assert_eq!(k[(4, 4)], cr(4.0));
        assert_eq!(k[(0, 1)], cr(0.0));
    }
}
