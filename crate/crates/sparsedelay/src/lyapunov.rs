//! Schur-based Lyapunov solvers, spectral abscissa, and a Riccati/LQR
//! helper used to construct initial stabilizing gains.

use crate::error::{Error, Result};
use crate::scalar::{r, Real};
use crate::Mat;
use nalgebra::linalg::Schur;

/// Closed loops are trusted as Hurwitz only below this abscissa.
pub const HURWITZ_MARGIN: f64 = -1e-9;

/// Relative residual contract of [`solve_lyapunov`].
pub const LYAPUNOV_RTOL: f64 = 1e-8;

/// Largest real part of the spectrum.
pub fn spectral_abscissa<T: Real>(a: &Mat<T>) -> Result<T> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("spectral abscissa needs a square matrix".into()));
    }
    let schur = Schur::try_new(a.clone(), T::default_epsilon(), 0).ok_or(Error::EigenFailure)?;
    let eigs = schur.complex_eigenvalues();
    let mut worst = T::from_f64(f64::NEG_INFINITY).unwrap_or_else(|| -T::max_value().unwrap());
    for e in eigs.iter() {
        if e.re > worst {
            worst = e.re;
        }
    }
    Ok(worst)
}

/// `true` when the loop clears the Hurwitz margin.
pub fn is_hurwitz<T: Real>(a: &Mat<T>) -> Result<bool> {
    Ok(spectral_abscissa(a)? < r::<T>(HURWITZ_MARGIN))
}

/// Solution of a Lyapunov equation together with a stability flag: the
/// algebraic solve succeeds for any non-resonant spectrum, but the result is
/// a Gramian only when the matrix was Hurwitz.
#[derive(Debug, Clone)]
pub struct LyapunovSolution<T: Real> {
    pub x: Mat<T>,
    /// Relative residual of the returned solution.
    pub residual: T,
    /// Whether the coefficient matrix was Hurwitz.
    pub stable: bool,
}

/// Solves `A^T X + X A + W = 0` for symmetric `W` by Schur reduction and a
/// quasi-triangular block sweep, with one step of iterative refinement.
///
/// Fails with [`Error::ResonantSpectrum`] when two eigenvalues of `A` sum to
/// zero, and with [`Error::Residual`] when the refined solution misses the
/// `1e-8` relative-residual contract.
pub fn solve_lyapunov<T: Real>(a: &Mat<T>, w: &Mat<T>) -> Result<LyapunovSolution<T>> {
    let n = a.nrows();
    if a.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension("Lyapunov operands must be square and consistent".into()));
    }
    let schur = Schur::try_new(a.clone(), T::default_epsilon(), 0).ok_or(Error::EigenFailure)?;
    let stable = schur.complex_eigenvalues().iter().all(|e| e.re < r::<T>(HURWITZ_MARGIN));
    let (q, t) = schur.unpack();

    let solve_once = |rhs: &Mat<T>| -> Result<Mat<T>> {
        let w_tilde = q.transpose() * rhs * &q;
        let y = solve_quasi_triangular(&t, &w_tilde)?;
        let x = &q * y * q.transpose();
        Ok((&x + x.transpose()) * r::<T>(0.5))
    };

    let mut x = solve_once(w)?;
    let scale = w.norm() + T::default_epsilon();
    let mut res = a.transpose() * &x + &x * a + w;
    if res.norm() > r::<T>(LYAPUNOV_RTOL) * scale {
        // one refinement pass through the same factorization
        let dx = solve_once(&res)?;
        x += dx;
        res = a.transpose() * &x + &x * a + w;
    }
    let rel = res.norm() / scale;
    if rel > r::<T>(LYAPUNOV_RTOL) {
        return Err(Error::Residual {
            residual: rel.to_f64_lossy(),
            tolerance: LYAPUNOV_RTOL,
        });
    }
    Ok(LyapunovSolution { x, residual: rel, stable })
}

/// Solves the transposed-side equation `A X + X A^T + W = 0`.
pub fn solve_lyapunov_dual<T: Real>(a: &Mat<T>, w: &Mat<T>) -> Result<LyapunovSolution<T>> {
    solve_lyapunov(&a.transpose(), w)
}

/// Diagonal block structure of a real quasi-triangular matrix.
fn diag_blocks<T: Real>(t: &Mat<T>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let tol = r::<T>(1e-300);
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tol {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `T^T Y + Y T = -W` for quasi-upper-triangular `T` by a forward
/// block sweep; each diagonal pair yields a system of size at most 4.
fn solve_quasi_triangular<T: Real>(t: &Mat<T>, w: &Mat<T>) -> Result<Mat<T>> {
    let n = t.nrows();
    let blocks = diag_blocks(t);
    let mut y = Mat::<T>::zeros(n, n);
    let resonance_tol = r::<T>(1e-14) * (T::one() + t.norm());
    for (bi, &(ri_, si)) in blocks.iter().enumerate() {
        for (bj, &(rj, sj)) in blocks.iter().enumerate() {
            // rhs = -W_ij - sum_{k<bi} (T_ki)^T Y_kj - sum_{k<bj} Y_ik T_kj
            let mut rhs = -w.view((ri_, rj), (si, sj)).clone_owned();
            for &(rk, sk) in blocks.iter().take(bi) {
                let tki = t.view((rk, ri_), (sk, si));
                let ykj = y.view((rk, rj), (sk, sj));
                rhs -= tki.transpose() * ykj;
            }
            for &(rk, sk) in blocks.iter().take(bj) {
                let yik = y.view((ri_, rk), (si, sk));
                let tkj = t.view((rk, rj), (sk, sj));
                rhs -= yik * tkj;
            }
            // (I_sj (x) T_ii^T + T_jj^T (x) I_si) vec(Y_ij) = vec(rhs)
            let tii = t.view((ri_, ri_), (si, si));
            let tjj = t.view((rj, rj), (sj, sj));
            let dim = si * sj;
            let mut sys = Mat::<T>::zeros(dim, dim);
            for col_b in 0..sj {
                for row_b in 0..si {
                    let row_idx = col_b * si + row_b;
                    for p in 0..si {
                        sys[(row_idx, col_b * si + p)] += tii[(p, row_b)];
                    }
                    for p in 0..sj {
                        sys[(row_idx, p * si + row_b)] += tjj[(p, col_b)];
                    }
                }
            }
            let mut vec_rhs = nalgebra::DVector::<T>::zeros(dim);
            for c in 0..sj {
                for rr in 0..si {
                    vec_rhs[c * si + rr] = rhs[(rr, c)];
                }
            }
            let lu = sys.clone().full_piv_lu();
            let det_scale = lu.u().diagonal().iter().fold(T::one(), |acc, d| acc * d.abs());
            if det_scale < resonance_tol.powi(dim as i32) {
                return Err(Error::ResonantSpectrum);
            }
            let sol = lu.solve(&vec_rhs).ok_or(Error::ResonantSpectrum)?;
            for c in 0..sj {
                for rr in 0..si {
                    y[(ri_ + rr, rj + c)] = sol[c * si + rr];
                }
            }
        }
    }
    Ok(y)
}

/// LQR synthesis for the delay-free plant via Newton iteration on the
/// Riccati equation, each step a Lyapunov solve. Returns `(K, P)` with
/// `u = -K x` and `P` the stabilizing Riccati solution.
pub fn lqr<T: Real>(a: &Mat<T>, b: &Mat<T>, q: &Mat<T>, r_w: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || q.nrows() != n || q.ncols() != n || r_w.nrows() != m || r_w.ncols() != m {
        return Err(Error::Dimension("LQR operand dimensions are inconsistent".into()));
    }
    let r_inv = r_w
        .clone()
        .cholesky()
        .ok_or(Error::NotDefinite {
            what: "R",
            requirement: "positive definite",
            eigenvalue: f64::NAN,
        })?
        .inverse();

    let mut k = initial_stabilizing_gain(a, b)?;
    let mut prev = k.clone();
    for iter in 0..80 {
        let a_cl = a - b * &k;
        let w = q + k.transpose() * r_w * &k;
        let sol = solve_lyapunov(&a_cl, &w)?;
        if !sol.stable {
            return Err(Error::Unstable {
                abscissa: spectral_abscissa(&a_cl)?.to_f64_lossy(),
            });
        }
        k = &r_inv * b.transpose() * &sol.x;
        let delta = (&k - &prev).norm();
        if delta <= r::<T>(1e-12) * (T::one() + k.norm()) {
            return Ok((k, sol.x));
        }
        prev = k.clone();
        if iter == 79 {
            return Ok((k, sol.x));
        }
    }
    unreachable!()
}

/// A stabilizing gain for `(A, B)` via a shifted controllability Gramian
/// (Bass construction); falls back to zero when `A` is already Hurwitz.
fn initial_stabilizing_gain<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    let n = a.nrows();
    let m = b.ncols();
    let absc = spectral_abscissa(a)?;
    if absc < r::<T>(HURWITZ_MARGIN) {
        return Ok(Mat::zeros(m, n));
    }
    let beta = absc + T::one();
    let shifted = -(a + Mat::<T>::identity(n, n) * beta);
    let w = b * b.transpose() * r::<T>(2.0);
    let gram = solve_lyapunov_dual(&shifted, &w)?;
    let z_inv = gram
        .x
        .clone()
        .cholesky()
        .ok_or_else(|| {
            Error::Config("pair (A, B) appears unstabilizable: shifted Gramian is singular".into())
        })?
        .inverse();
    let k0 = b.transpose() * z_inv;
    let closed = a - b * &k0;
    if !is_hurwitz(&closed)? {
        return Err(Error::Config("Bass initialization failed to stabilize (A, B)".into()));
    }
    Ok(k0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn abscissa_basic_cases() {
        let a = -Mat::<f64>::identity(3, 3);
        assert_relative_eq!(spectral_abscissa(&a).unwrap(), -1.0, epsilon = 1e-12);
        let rot = dmatrix![0.0, 1.0; -1.0, 0.0];
        assert_relative_eq!(spectral_abscissa(&rot).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_diagonal_case() {
        let a = -Mat::<f64>::identity(2, 2);
        let w = Mat::<f64>::identity(2, 2);
        let sol = solve_lyapunov(&a, &w).unwrap();
        assert!(sol.stable);
        assert_relative_eq!((sol.x - Mat::<f64>::identity(2, 2) * 0.5).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_matches_dense_kronecker_solve() {
        let a = dmatrix![-1.0, 1.0; 0.0, -2.0];
        let w = Mat::<f64>::identity(2, 2);
        let sol = solve_lyapunov(&a, &w).unwrap();
        // (I (x) A^T + A^T (x) I) vec(X) = -vec(W)
        let n = 2;
        let mut big = Mat::<f64>::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                for p in 0..n {
                    big[(j * n + i, j * n + p)] += a[(p, i)];
                    big[(j * n + i, p * n + i)] += a[(p, j)];
                }
            }
        }
        let mut rhs = nalgebra::DVector::<f64>::zeros(n * n);
        for j in 0..n {
            for i in 0..n {
                rhs[j * n + i] = -w[(i, j)];
            }
        }
        let x_vec = big.lu().solve(&rhs).unwrap();
        for j in 0..n {
            for i in 0..n {
                assert_relative_eq!(sol.x[(i, j)], x_vec[j * n + i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn lyapunov_scaling_linearity() {
        let a = dmatrix![-0.7, 0.3, 0.0; -0.1, -1.2, 0.5; 0.0, 0.2, -0.9];
        let w = dmatrix![2.0, 0.1, 0.0; 0.1, 1.0, 0.3; 0.0, 0.3, 1.5];
        let s1 = solve_lyapunov(&a, &w).unwrap();
        let s2 = solve_lyapunov(&a, &(&w * 2.0)).unwrap();
        assert_relative_eq!((&s1.x * 2.0 - s2.x).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn lyapunov_complex_spectrum() {
        // complex pair triggers the 2x2 block path
        let a = dmatrix![-0.5, 2.0, 0.0; -2.0, -0.5, 0.0; 0.3, 0.0, -1.5];
        let w = Mat::<f64>::identity(3, 3);
        let sol = solve_lyapunov(&a, &w).unwrap();
        let res = (a.transpose() * &sol.x + &sol.x * &a + &w).norm();
        assert!(res < 1e-10, "residual {res}");
        assert!(sol.stable);
    }

    #[test]
    fn lyapunov_flags_unstable_but_solves() {
        let a = dmatrix![0.5, 0.0; 0.0, -2.0];
        let w = Mat::<f64>::identity(2, 2);
        let sol = solve_lyapunov(&a, &w).unwrap();
        assert!(!sol.stable);
        let res = (a.transpose() * &sol.x + &sol.x * &a + &w).norm();
        assert!(res < 1e-10);
    }

    #[test]
    fn lyapunov_resonance_detected() {
        // eigenvalues +1 and -1 sum to zero
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let w = Mat::<f64>::identity(2, 2);
        match solve_lyapunov(&a, &w) {
            Err(Error::ResonantSpectrum) => {}
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn lqr_scalar_matches_closed_form() {
        // a = 1, b = 1, q = 1, r = 1: P solves 2P - P^2 + 1 = 0 -> P = 1 + sqrt(2)
        let one = Mat::<f64>::identity(1, 1);
        let (k, p) = lqr(&one, &one, &one, &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0 + 2.0f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(k[(0, 0)], 1.0 + 2.0f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn lqr_closes_unstable_plant() {
        let a = dmatrix![0.4, 1.0, 0.0; 0.0, 0.2, 1.0; -0.3, 0.0, 0.6];
        let b = Mat::<f64>::identity(3, 3);
        let q = Mat::<f64>::identity(3, 3);
        let r = Mat::<f64>::identity(3, 3);
        let (k, p) = lqr(&a, &b, &q, &r).unwrap();
        assert!(is_hurwitz(&(&a - &b * &k)).unwrap());
        // Riccati residual
        let res = (a.transpose() * &p + &p * &a - &p * &b * &r * b.transpose() * &p + &q).norm();
        assert!(res < 1e-7, "CARE residual {res}");
    }
}
