//! Small shared numerics: adaptive Simpson quadrature and a shift-inverted
//! subspace iteration for the low end of a symmetric PSD spectrum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("adaptive quadrature failed to reach tolerance {requested:.3e} (achieved {achieved:.3e})")]
    Quadrature { requested: f64, achieved: f64 },
    #[error("matrix factorization failed")]
    Factorization,
    #[error("subspace iteration did not converge")]
    NoConvergence,
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64, LinalgError> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, LinalgError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(LinalgError::Quadrature { requested: tol, achieved: err.abs() / 15.0 });
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Smallest `k` eigenpairs of a symmetric PSD matrix by shift-inverted
/// subspace iteration (Cholesky of `a + shift*I`, deterministic seeding).
/// Returns eigenvalues ascending with the matching eigenvectors as columns.
pub fn smallest_eigenpairs(
    a: &DMatrix<f64>,
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let k = k.min(n);
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let shift = 1e-12 * scale;
    let shifted = a + DMatrix::identity(n, n) * shift;
    let chol = shifted.cholesky().ok_or(LinalgError::Factorization)?;

    let m = (2 * k + 4).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
    orthonormalize(&mut basis);

    let mut prev = DVector::from_element(k, f64::INFINITY);
    for iter in 0..200 {
        // invert: basis <- (A + shift I)^{-1} basis
        for j in 0..m {
            let col = basis.column(j).into_owned();
            let solved = chol.solve(&col);
            basis.set_column(j, &solved);
        }
        orthonormalize(&mut basis);
        // Rayleigh-Ritz on the subspace
        let proj = basis.transpose() * a * &basis;
        let sym = (proj.clone() + proj.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mut rotated = DMatrix::zeros(n, m);
        for (dst, &src) in order.iter().enumerate() {
            rotated.set_column(dst, &(&basis * eig.eigenvectors.column(src)));
        }
        basis = rotated;
        let current = DVector::from_fn(k, |i, _| eig.eigenvalues[order[i]]);
        let delta = (&current - &prev).amax();
        let floor = scale * 1e-14;
        if iter > 2 && delta <= 1e-10 * scale.max(1.0) + floor {
            let vals: Vec<f64> = (0..k).map(|i| current[i].max(0.0)).collect();
            let vecs = basis.columns(0, k).into_owned();
            return Ok((vals, vecs));
        }
        prev = current;
    }
    Err(LinalgError::NoConvergence)
}

fn orthonormalize(basis: &mut DMatrix<f64>) {
    let qr = basis.clone().qr();
    let q = qr.q();
    *basis = q;
}

/// Deterministic per-purpose RNG.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_integrates_exponential() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0f64.exp() - 1.0, epsilon = 1e-10);
    }

    #[test]
    fn subspace_iteration_finds_low_modes() {
        // diag(0, 0, 1, 2, ...) rotated by a fixed orthogonal transform
        let n = 40;
        let mut d = DMatrix::zeros(n, n);
        for i in 2..n {
            d[(i, i)] = (i - 1) as f64;
        }
        let mut rng = seeded_rng(7, 0);
        let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = r.qr().q();
        let a = &q * d * q.transpose();
        let (vals, _) = smallest_eigenpairs(&a, 5, 42).unwrap();
        assert_relative_eq!(vals[0], 0.0, epsilon = 1e-8);
        assert_relative_eq!(vals[1], 0.0, epsilon = 1e-8);
        assert_relative_eq!(vals[2], 1.0, epsilon = 1e-7);
        assert_relative_eq!(vals[3], 2.0, epsilon = 1e-7);
    }
}
