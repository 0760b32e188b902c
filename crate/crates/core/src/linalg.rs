//! Dense complex linear algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices over `Complex64`.
//! Block dimensions in this crate stay small (at most 80x80 for operators,
//! a few thousand amplitudes for statevectors), so dense is fine.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Shorthand complex constructor.
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real number as a complex scalar.
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    CMat::zeros(n, m)
}

/// Kronecker product, row-major convention: index of `a ⊗ b` is
/// `i_a * dim_b + i_b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list, left to right.
pub fn kron_all(ops: &[&CMat]) -> CMat {
    assert!(!ops.is_empty(), "kron_all needs at least one factor");
    let mut acc = ops[0].clone();
    for op in &ops[1..] {
        acc = acc.kronecker(op);
    }
    acc
}

/// Embeds a single-site operator into a product space:
/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` at position `site` of the `dims` layout.
pub fn embed(op: &CMat, site: usize, dims: &[usize]) -> CMat {
    assert_eq!(op.nrows(), dims[site], "operator does not fit site dimension");
    let before: usize = dims[..site].iter().product();
    let after: usize = dims[site + 1..].iter().product();
    kron(&kron(&identity(before), op), &identity(after))
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(a: &CMat) -> Complex64 {
    a.trace()
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry; convenient for "operators agree" assertions.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    max_abs(&(a - a.adjoint())) <= tol
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns `(values, vectors)` with `vectors.column(k)` the unit eigenvector
/// for `values[k]`. Panics if the input is not Hermitian to 1e-9.
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    assert!(is_hermitian(h, 1e-9), "eigh expects a Hermitian matrix");
    let sym = h.clone().symmetric_eigen();
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[i].total_cmp(&sym.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &sym.eigenvectors.column(i).into_owned());
    }
    (values, vectors)
}

/// Applies a scalar function to a Hermitian matrix through its spectrum:
/// `f(H) = V diag(f(λ)) V†`.
pub fn hermitian_function(h: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    let (values, vectors) = eigh(h);
    let diag = CMat::from_diagonal(&CVec::from_iterator(
        values.len(),
        values.iter().map(|&v| f(v)),
    ));
    &vectors * diag * vectors.adjoint()
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn evolution_operator(h: &CMat, t: f64) -> CMat {
    hermitian_function(h, |e| (c(0.0, -1.0) * cr(e * t)).exp())
}

/// `exp(A)` where `A = factor * H` with Hermitian `H`; `factor` may be
/// complex (imaginary for unitaries, negative real for Gibbs weights).
pub fn expm_hermitian(h: &CMat, factor: Complex64) -> CMat {
    hermitian_function(h, |e| (factor * cr(e)).exp())
}

/// Squared norm of a statevector.
pub fn norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Normalizes a statevector in place; panics on (numerically) zero input.
pub fn normalize(v: &mut CVec) {
    let n = norm_sqr(v).sqrt();
    assert!(n > 1e-14, "cannot normalize a zero vector");
    *v /= cr(n);
}

/// |<a|b>|^2 for unit vectors; clamped into [0, 1] against roundoff.
pub fn fidelity(a: &CVec, b: &CVec) -> f64 {
    let ip: Complex64 = a.dotc(b);
    ip.norm_sqr().clamp(0.0, 1.0)
}
