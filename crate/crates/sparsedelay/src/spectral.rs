//! Chebyshev-collocation discretization of the delayed closed loop.
//!
//! The delayed system state segment `x(t + theta), theta in [-tau_o, 0]` is
//! collocated on `N` scaled Chebyshev extremal points. Differentiation on the
//! grid contributes a constant matrix `Lambda` scaled by `1/tau_o`; the
//! delayed-state selector `N_d` is a polynomial in the delay ratio
//! `c = tau_d/tau_o` through a constant coefficient matrix `Gamma`. That
//! separation is what lets the outer design loops treat `tau_o` and `c` as
//! free variables without rebuilding the grid.

use crate::error::{Error, Result};
use crate::model::{GainMasks, PlantModel};
use crate::scalar::{r, ri, Real};
use crate::{Mat, Vec_};

/// Grid of `n_grid` scaled and shifted Chebyshev extremal points on
/// `[-tau_o, 0]`, ascending, with the endpoints exact.
pub fn chebyshev_grid<T: Real>(n_grid: usize, tau_o: T) -> Result<Vec_<T>> {
    if n_grid < 2 {
        return Err(Error::Config(format!("grid needs at least 2 points, got {n_grid}")));
    }
    if tau_o <= T::zero() {
        return Err(Error::InfeasibleDelay("tau_o must be positive".into()));
    }
    let half = tau_o * r::<T>(0.5);
    let mut theta = Vec_::<T>::zeros(n_grid);
    for k in 0..n_grid {
        theta[k] = half * (unit_point::<T>(n_grid, k) - T::one());
    }
    theta[0] = -tau_o;
    theta[n_grid - 1] = T::zero();
    Ok(theta)
}

/// `cos((N - k - 1) pi / (N - 1))`, the unit Chebyshev extremal point for
/// slot `k` (0-based), ascending in `k`.
fn unit_point<T: Real>(n_grid: usize, k: usize) -> T {
    let num = ri::<T>(n_grid - 1 - k) * T::pi();
    (num / ri::<T>(n_grid - 1)).cos()
}

/// Pairwise coefficient `a_{ik} = 2 / (v_i - v_k)` in closed trigonometric
/// form (`v` the unit grid); antisymmetric in its indices.
fn pair_coeff<T: Real>(n_grid: usize, i: usize, k: usize) -> T {
    debug_assert_ne!(i, k);
    let den = ri::<T>(2 * (n_grid - 1));
    // 1-based indices in the sine arguments
    let i1 = ri::<T>(i + 1);
    let k1 = ri::<T>(k + 1);
    let s1 = ((ri::<T>(2 * n_grid) - i1 - k1) * T::pi() / den).sin();
    let s2 = ((k1 - i1) * T::pi() / den).sin();
    -(s1 * s2).recip()
}

/// Scalar (block-free) differentiation template: `Lambda` for `n = 1`.
/// Scaled by `1/tau_o` this is the spectral differentiation matrix on the
/// grid; its last row is zero (that row carries the plant dynamics instead).
pub fn lambda_template<T: Real>(n_grid: usize) -> Result<Mat<T>> {
    if n_grid < 2 {
        return Err(Error::Config(format!("grid needs at least 2 points, got {n_grid}")));
    }
    let mut lam = Mat::<T>::zeros(n_grid, n_grid);
    for i in 0..n_grid - 1 {
        for j in 0..n_grid {
            if i == j {
                let mut sum = T::zero();
                for k in 0..n_grid {
                    if k != i {
                        sum += pair_coeff::<T>(n_grid, i, k);
                    }
                }
                lam[(i, i)] = sum;
            } else {
                // tau_o * l_j'(theta_i) expressed via the pair coefficients
                let mut prod = pair_coeff::<T>(n_grid, j, i);
                for m in 0..n_grid {
                    if m != i && m != j {
                        prod *= pair_coeff::<T>(n_grid, j, m) / pair_coeff::<T>(n_grid, i, m);
                    }
                }
                lam[(i, j)] = prod;
            }
        }
    }
    Ok(lam)
}

/// Kronecker product `a (x) I_dim` for a square template.
fn kron_identity<T: Real>(a: &Mat<T>, dim: usize) -> Mat<T> {
    let (p, q) = a.shape();
    let mut out = Mat::<T>::zeros(p * dim, q * dim);
    for i in 0..p {
        for j in 0..q {
            let v = a[(i, j)];
            if v != T::zero() {
                for d in 0..dim {
                    out[(i * dim + d, j * dim + d)] = v;
                }
            }
        }
    }
    out
}

/// `Lambda` for state dimension `n`: `lambda_template(N) (x) I_n`.
pub fn build_lambda<T: Real>(n_grid: usize, state_dim: usize) -> Result<Mat<T>> {
    Ok(kron_identity(&lambda_template::<T>(n_grid)?, state_dim))
}

/// Coefficient matrix `Gamma`: row `j` holds the polynomial coefficients of
/// the Lagrange basis value `l_j(-c tau_o)` in descending powers of `c`
/// (matching `nu(c) = [c^{N-1}, ..., c, 1]`).
pub fn build_gamma<T: Real>(n_grid: usize) -> Result<Mat<T>> {
    if n_grid < 2 {
        return Err(Error::Config(format!("grid needs at least 2 points, got {n_grid}")));
    }
    let unit: Vec<T> = (0..n_grid).map(|k| unit_point::<T>(n_grid, k)).collect();
    let mut gamma = Mat::<T>::zeros(n_grid, n_grid);
    let half = r::<T>(0.5);
    for j in 0..n_grid {
        // ascending-power accumulator for prod_{m != j} (b_m - c) / d_m
        let mut coeffs = vec![T::zero(); n_grid];
        coeffs[0] = T::one();
        let mut degree = 0usize;
        for m in 0..n_grid {
            if m == j {
                continue;
            }
            let b = half * (T::one() - unit[m]);
            let d = half * (unit[j] - unit[m]);
            // multiply by (b - c), then divide by the constant d
            for idx in (0..=degree).rev() {
                let c_i = coeffs[idx];
                coeffs[idx + 1] += -c_i / d;
                coeffs[idx] = c_i * b / d;
            }
            degree += 1;
        }
        for (power, &v) in coeffs.iter().enumerate() {
            gamma[(j, n_grid - 1 - power)] = v;
        }
    }
    Ok(gamma)
}

/// Monomial vector `nu(c) = [c^{N-1}, ..., c, 1]`.
pub fn nu<T: Real>(n_grid: usize, c: T) -> Vec_<T> {
    let mut v = Vec_::<T>::zeros(n_grid);
    v[n_grid - 1] = T::one();
    for i in (0..n_grid - 1).rev() {
        v[i] = v[i + 1] * c;
    }
    v
}

/// Derivative `d nu / d c`.
pub fn nu_prime<T: Real>(n_grid: usize, c: T) -> Vec_<T> {
    let mut v = Vec_::<T>::zeros(n_grid);
    // d/dc c^{N-1-i} = (N-1-i) c^{N-2-i}
    let mut pow = T::one(); // c^0
    for i in (0..n_grid - 1).rev() {
        v[i] = ri::<T>(n_grid - 1 - i) * pow;
        pow *= c;
    }
    v
}

/// Constant spectral data for a given grid size and state dimension.
#[derive(Debug, Clone)]
pub struct SpectralBasis<T: Real> {
    n_grid: usize,
    state_dim: usize,
    lambda_small: Mat<T>,
    lambda: Mat<T>,
    gamma: Mat<T>,
}

impl<T: Real> SpectralBasis<T> {
    pub fn new(n_grid: usize, state_dim: usize) -> Result<Self> {
        let lambda_small = lambda_template::<T>(n_grid)?;
        let lambda = kron_identity(&lambda_small, state_dim);
        let gamma = build_gamma::<T>(n_grid)?;
        Ok(Self { n_grid, state_dim, lambda_small, lambda, gamma })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn lambda(&self) -> &Mat<T> {
        &self.lambda
    }

    pub fn lambda_small(&self) -> &Mat<T> {
        &self.lambda_small
    }

    pub fn gamma(&self) -> &Mat<T> {
        &self.gamma
    }

    /// Grid points for a concrete round-trip delay.
    pub fn theta(&self, tau_o: T) -> Result<Vec_<T>> {
        chebyshev_grid(self.n_grid, tau_o)
    }

    /// `Gamma nu(c)`: the grid weights of the delayed state.
    pub fn gamma_nu(&self, c: T) -> Vec_<T> {
        &self.gamma * nu(self.n_grid, c)
    }

    /// `Gamma nu'(c)`.
    pub fn gamma_nu_prime(&self, c: T) -> Vec_<T> {
        &self.gamma * nu_prime(self.n_grid, c)
    }

    /// Delayed-state selector `N_d(c) = (Gamma nu(c)) (x) I_n`, `c in [0, 1]`.
    pub fn build_nd(&self, c: T) -> Result<Mat<T>> {
        if c < T::zero() || c > T::one() {
            return Err(Error::InfeasibleDelay(format!(
                "delay ratio {} outside [0, 1]",
                c.to_f64_lossy()
            )));
        }
        Ok(self.block_column(&self.gamma_nu(c)))
    }

    /// `N_d'(c) = (Gamma nu'(c)) (x) I_n`.
    pub fn build_nd_prime(&self, c: T) -> Mat<T> {
        self.block_column(&self.gamma_nu_prime(c))
    }

    /// Selector of the oldest grid state `x(t - tau_o)`.
    pub fn n_o(&self) -> Mat<T> {
        let mut w = Vec_::<T>::zeros(self.n_grid);
        w[0] = T::one();
        self.block_column(&w)
    }

    /// Selector of the current state `x(t)` (last grid point).
    pub fn m_selector(&self) -> Mat<T> {
        let mut w = Vec_::<T>::zeros(self.n_grid);
        w[self.n_grid - 1] = T::one();
        self.block_column(&w)
    }

    /// `(w (x) I_n)` as an `(N n) x n` matrix.
    fn block_column(&self, w: &Vec_<T>) -> Mat<T> {
        let n = self.state_dim;
        let mut out = Mat::<T>::zeros(self.n_grid * n, n);
        for k in 0..self.n_grid {
            let v = w[k];
            if v != T::zero() {
                for d in 0..n {
                    out[(k * n + d, d)] = v;
                }
            }
        }
        out
    }

    /// CSV dump of the constant basis matrices, for debugging.
    pub fn dump_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# lambda_template\n");
        s.push_str(&matrix_csv(&self.lambda_small));
        s.push_str("# gamma\n");
        s.push_str(&matrix_csv(&self.gamma));
        s
    }
}

/// Matrix rows as CSV lines with full float precision.
pub fn matrix_csv<T: Real>(m: &Mat<T>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> =
            (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)].to_f64_lossy())).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// The `N`-node collocated closed loop and the pieces the design loops need.
#[derive(Debug, Clone)]
pub struct DiscretizedLoop<T: Real> {
    pub a_cl: Mat<T>,
    pub a_tilde: Mat<T>,
    /// `M B`: extended input matrix of the control channel.
    pub cal_b: Mat<T>,
    /// `M B_w`: extended input matrix of the disturbance channel.
    pub cal_b_w: Mat<T>,
    pub n_d: Mat<T>,
    pub n_o: Mat<T>,
    pub m_sel: Mat<T>,
    /// `M Q M^T`.
    pub q_tilde: Mat<T>,
    /// `K_d N_d^T + K_o N_o^T`: the gain as seen from the extended state.
    pub c_tilde: Mat<T>,
    pub k_d: Mat<T>,
    pub k_o: Mat<T>,
    pub tau_o: T,
    pub c: T,
}

impl<T: Real> DiscretizedLoop<T> {
    pub fn extended_dim(&self) -> usize {
        self.a_cl.nrows()
    }
}

/// Assembles the discretized closed loop at gain `K` and delays
/// `(tau_o, c)`. The ratio may sit on the boundary of `[0, 1]` here; the
/// bandwidth-coupled layers restrict it to the open interval themselves.
pub fn build_closed_loop<T: Real>(
    plant: &PlantModel<T>,
    k: &Mat<T>,
    masks: &GainMasks<T>,
    tau_o: T,
    c: T,
    basis: &SpectralBasis<T>,
) -> Result<DiscretizedLoop<T>> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    if basis.state_dim() != n {
        return Err(Error::Dimension(format!(
            "basis built for state dimension {}, plant has {}",
            basis.state_dim(),
            n
        )));
    }
    if k.shape() != (m, n) {
        return Err(Error::Dimension(format!("gain must be {m}x{n}, got {:?}", k.shape())));
    }
    if masks.i_d().shape() != (m, n) {
        return Err(Error::Dimension("mask dimensions do not match the plant".into()));
    }
    if tau_o <= T::zero() {
        return Err(Error::InfeasibleDelay("tau_o must be positive".into()));
    }
    let (k_d, k_o) = crate::model::split_gain(k, masks)?;
    let n_d = basis.build_nd(c)?;
    let n_o = basis.n_o();
    let m_sel = basis.m_selector();
    let ext = basis.n_grid() * n;

    let mut a_tilde = basis.lambda() / tau_o;
    a_tilde.view_mut((ext - n, ext - n), (n, n)).copy_from(plant.a());

    let c_tilde = &k_d * n_d.transpose() + &k_o * n_o.transpose();

    let mut a_cl = a_tilde.clone();
    // cal_b = M B has support only in the last block row
    let correction = plant.b() * &c_tilde;
    for i in 0..n {
        for j in 0..ext {
            a_cl[(ext - n + i, j)] -= correction[(i, j)];
        }
    }

    let cal_b = &m_sel * plant.b();
    let cal_b_w = &m_sel * plant.b_w();
    let q_tilde = &m_sel * plant.q() * m_sel.transpose();

    Ok(DiscretizedLoop {
        a_cl,
        a_tilde,
        cal_b,
        cal_b_w,
        n_d,
        n_o,
        m_sel,
        q_tilde,
        c_tilde,
        k_d,
        k_o,
        tau_o,
        c,
    })
}

/// Piecewise-affine surrogate of `Gamma nu(c)` over `[0, 1]`, used by the
/// (K, c) relaxation where the exact polynomial would be nonconvex.
#[derive(Debug, Clone)]
pub struct AffineNdApprox<T: Real> {
    breakpoints: Vec<T>,
    /// Per interval: column 0 multiplies `c`, column 1 is the intercept.
    chi: Vec<Mat<T>>,
    max_error: T,
}

impl<T: Real> AffineNdApprox<T> {
    pub fn k_c(&self) -> usize {
        self.chi.len()
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn chi(&self, interval: usize) -> &Mat<T> {
        &self.chi[interval]
    }

    /// Largest deviation from the exact weights seen over the fit samples.
    pub fn max_error(&self) -> T {
        self.max_error
    }

    /// Index of the sub-interval containing `c` (clamped at the ends).
    pub fn interval_of(&self, c: T) -> usize {
        let k = self.chi.len();
        for i in 0..k {
            if c <= self.breakpoints[i + 1] {
                return i;
            }
        }
        k - 1
    }

    /// Affine surrogate weights `chi^{(i)} [c, 1]^T` on interval `i`.
    pub fn eval_weights(&self, interval: usize, c: T) -> Vec_<T> {
        let chi = &self.chi[interval];
        let mut out = Vec_::<T>::zeros(chi.nrows());
        for row in 0..chi.nrows() {
            out[row] = chi[(row, 0)] * c + chi[(row, 1)];
        }
        out
    }
}

/// Samples per sub-interval in the least-squares fit.
const FIT_SAMPLES: usize = 50;

/// Least-squares affine fit of `Gamma nu(c)` on `k_c` equal sub-intervals of
/// `[0, 1]`. Fails when a `budget` is supplied and the worst sampled error
/// exceeds it.
pub fn fit_affine_nd<T: Real>(
    basis: &SpectralBasis<T>,
    k_c: usize,
    budget: Option<T>,
) -> Result<AffineNdApprox<T>> {
    if k_c == 0 {
        return Err(Error::Config("need at least one sub-interval".into()));
    }
    let n_grid = basis.n_grid();
    let mut breakpoints = Vec::with_capacity(k_c + 1);
    for i in 0..=k_c {
        breakpoints.push(ri::<T>(i) / ri::<T>(k_c));
    }
    let mut chi = Vec::with_capacity(k_c);
    let mut max_error = T::zero();
    for i in 0..k_c {
        let lo = breakpoints[i];
        let hi = breakpoints[i + 1];
        let mut cs = Vec::with_capacity(FIT_SAMPLES);
        let mut ys: Vec<Vec_<T>> = Vec::with_capacity(FIT_SAMPLES);
        for s in 0..FIT_SAMPLES {
            let t = ri::<T>(s) / ri::<T>(FIT_SAMPLES - 1);
            let c = lo + (hi - lo) * t;
            cs.push(c);
            ys.push(basis.gamma_nu(c));
        }
        // per-coordinate least squares against [c, 1]
        let ns = ri::<T>(FIT_SAMPLES);
        let sum_c: T = cs.iter().copied().fold(T::zero(), |a, b| a + b);
        let sum_cc: T = cs.iter().map(|&c| c * c).fold(T::zero(), |a, b| a + b);
        let det = ns * sum_cc - sum_c * sum_c;
        let mut chi_i = Mat::<T>::zeros(n_grid, 2);
        for row in 0..n_grid {
            let sum_y: T = ys.iter().map(|y| y[row]).fold(T::zero(), |a, b| a + b);
            let sum_cy: T = cs
                .iter()
                .zip(ys.iter())
                .map(|(&c, y)| c * y[row])
                .fold(T::zero(), |a, b| a + b);
            let slope = (ns * sum_cy - sum_c * sum_y) / det;
            let intercept = (sum_cc * sum_y - sum_c * sum_cy) / det;
            chi_i[(row, 0)] = slope;
            chi_i[(row, 1)] = intercept;
        }
        for (s, &c) in cs.iter().enumerate() {
            for row in 0..n_grid {
                let err = (chi_i[(row, 0)] * c + chi_i[(row, 1)] - ys[s][row]).abs();
                if err > max_error {
                    max_error = err;
                }
            }
        }
        chi.push(chi_i);
    }
    if let Some(b) = budget {
        if max_error > b {
            return Err(Error::Config(format!(
                "affine fit error {} exceeds budget {}",
                max_error.to_f64_lossy(),
                b.to_f64_lossy()
            )));
        }
    }
    Ok(AffineNdApprox { breakpoints, chi, max_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_masks, GainMasks, Topology};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn grid_endpoints_and_symmetry() {
        let g = chebyshev_grid::<f64>(2, 1.0).unwrap();
        assert_eq!(g.as_slice(), &[-1.0, 0.0]);

        let g = chebyshev_grid::<f64>(3, 2.0).unwrap();
        assert_relative_eq!(g[0], -2.0);
        assert_relative_eq!(g[1], -1.0, epsilon = 1e-14);
        assert_relative_eq!(g[2], 0.0);

        // theta_k + theta_{N+1-k} = -tau_o
        let tau = 1.0;
        let g = chebyshev_grid::<f64>(5, tau).unwrap();
        for k in 0..5 {
            assert_relative_eq!(g[k] + g[4 - k], -tau, epsilon = 1e-14);
        }
        assert!(g.as_slice().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(chebyshev_grid::<f64>(1, 1.0).is_err());
        assert!(chebyshev_grid::<f64>(4, 0.0).is_err());
    }

    #[test]
    fn lambda_rows_sum_to_zero_and_last_row_zero() {
        for n_grid in 4..=10 {
            let lam = build_lambda::<f64>(n_grid, 2).unwrap();
            let nn = n_grid * 2;
            for i in 0..nn - 2 {
                let mut blocksum = [0.0f64; 4];
                for jb in 0..n_grid {
                    for a in 0..2 {
                        blocksum[(i % 2) * 2 + a] += lam[(i, jb * 2 + a)];
                    }
                }
                let row_sum: f64 = (0..nn).map(|j| lam[(i, j)]).sum();
                assert!(row_sum.abs() < 1e-8 * (1.0 + lam.norm()), "row {i}: {row_sum}");
            }
            for j in 0..nn {
                assert_eq!(lam[(nn - 2, j)].min(lam[(nn - 1, j)]).abs(), 0.0);
            }
        }
    }

    /// Oracle: numerical derivative of the Lagrange interpolant of samples
    /// f(theta_j) at the grid points must match `Lambda / tau_o`.
    #[test]
    fn lambda_matches_lagrange_differentiation() {
        let n_grid = 8;
        let tau = 0.7;
        let theta = chebyshev_grid::<f64>(n_grid, tau).unwrap();
        let lam = lambda_template::<f64>(n_grid).unwrap();
        let lagrange = |j: usize, t: f64| -> f64 {
            let mut p = 1.0;
            for m in 0..n_grid {
                if m != j {
                    p *= (t - theta[m]) / (theta[j] - theta[m]);
                }
            }
            p
        };
        let h = 1e-7;
        for i in 0..n_grid - 1 {
            for j in 0..n_grid {
                let fd = (lagrange(j, theta[i] + h) - lagrange(j, theta[i] - h)) / (2.0 * h);
                assert_relative_eq!(lam[(i, j)] / tau, fd, epsilon = 1e-5, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn lambda_kronecker_structure() {
        let l1 = build_lambda::<f64>(6, 1).unwrap();
        let l3 = build_lambda::<f64>(6, 3).unwrap();
        let k = kron_identity(&l1, 3);
        assert_relative_eq!((l3 - k).norm(), 0.0);
    }

    #[test]
    fn gamma_selects_endpoints() {
        for n_grid in [2usize, 4, 6, 9] {
            let basis = SpectralBasis::<f64>::new(n_grid, 1).unwrap();
            let at0 = basis.gamma_nu(0.0);
            let at1 = basis.gamma_nu(1.0);
            for k in 0..n_grid {
                let e_n = if k == n_grid - 1 { 1.0 } else { 0.0 };
                let e_1 = if k == 0 { 1.0 } else { 0.0 };
                assert_relative_eq!(at0[k], e_n, epsilon = 1e-12);
                assert_relative_eq!(at1[k], e_1, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gamma_matches_direct_product_evaluation() {
        let n_grid = 6;
        let basis = SpectralBasis::<f64>::new(n_grid, 1).unwrap();
        let unit: Vec<f64> = (0..n_grid).map(|k| unit_point::<f64>(n_grid, k)).collect();
        let direct = |j: usize, c: f64| -> f64 {
            let mut p = 1.0;
            for m in 0..n_grid {
                if m != j {
                    p *= (-c - 0.5 * (unit[m] - 1.0)) / (0.5 * (unit[j] - unit[m]));
                }
            }
            p
        };
        let mut c = 0.013;
        for _ in 0..50 {
            let w = basis.gamma_nu(c);
            for j in 0..n_grid {
                assert_relative_eq!(w[j], direct(j, c), epsilon = 1e-10, max_relative = 1e-10);
            }
            c = (c + 0.619) % 1.0;
        }
    }

    #[test]
    fn gamma_nu_partition_of_unity() {
        let basis = SpectralBasis::<f64>::new(12, 1).unwrap();
        for i in 0..=20 {
            let c = i as f64 / 20.0;
            let s: f64 = basis.gamma_nu(c).iter().sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn nd_boundary_selectors() {
        let basis = SpectralBasis::<f64>::new(7, 2).unwrap();
        assert_relative_eq!((basis.build_nd(0.0).unwrap() - basis.m_selector()).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!((basis.build_nd(1.0).unwrap() - basis.n_o()).norm(), 0.0, epsilon = 1e-12);
        assert!(basis.build_nd(1.2).is_err());
        assert!(basis.build_nd(-0.1).is_err());
    }

    fn scalar_plant(a: f64) -> PlantModel<f64> {
        let one = Mat::<f64>::identity(1, 1);
        PlantModel::new(Mat::from_element(1, 1, a), one.clone(), one.clone(), one.clone(), one)
            .unwrap()
    }

    #[test]
    fn closed_loop_scalar_boundary_near_pi_over_2() {
        // x'(t) = -x(t - tau): boundary at tau = pi/2, located by bisection
        // on the spectral abscissa of the collocated loop.
        let plant = scalar_plant(0.0);
        let basis = SpectralBasis::<f64>::new(20, 1).unwrap();
        let k = Mat::<f64>::identity(1, 1);
        let masks = GainMasks::<f64>::all_direct(1, 1).swapped(); // route through the tau_o path
        let absc = |tau: f64| {
            let lp = build_closed_loop(&plant, &k, &masks, tau, 0.5, &basis).unwrap();
            lp.a_cl
                .complex_eigenvalues()
                .iter()
                .map(|e| e.re)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (mut lo, mut hi) = (1.4, 1.7);
        assert!(absc(lo) < 0.0 && absc(hi) > 0.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if absc(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let boundary = 0.5 * (lo + hi);
        let target = std::f64::consts::FRAC_PI_2;
        assert!(
            (boundary - target).abs() <= 0.01 * target,
            "boundary {boundary} vs pi/2 {target}"
        );
    }

    #[test]
    fn closed_loop_zero_gain_is_block_decoupled() {
        let plant = scalar_plant(-0.3);
        let basis = SpectralBasis::<f64>::new(8, 1).unwrap();
        let k = Mat::<f64>::zeros(1, 1);
        let masks = GainMasks::<f64>::all_direct(1, 1);
        let lp = build_closed_loop(&plant, &k, &masks, 0.9, 0.5, &basis).unwrap();
        assert_relative_eq!((&lp.a_cl - &lp.a_tilde).norm(), 0.0);
        // spectrum contains the plant eigenvalue
        let eigs = lp.a_cl.complex_eigenvalues();
        assert!(eigs.iter().any(|e| (e.re + 0.3).abs() < 1e-9 && e.im.abs() < 1e-9));
    }

    #[test]
    fn delay_path_collapse_consistency() {
        // At c = 1 the direct path hits the same grid point as the cross
        // path, so routing the gain through either gives the same A_cl.
        let n2 = Mat::<f64>::identity(2, 2);
        let a = dmatrix![-0.4, 0.2; 0.0, -0.9];
        let plant = PlantModel::new(a, n2.clone(), n2.clone(), n2.clone(), n2.clone()).unwrap();
        let basis = SpectralBasis::<f64>::new(9, 2).unwrap();
        let topo = Topology::<f64>::new(vec![0, 1], vec![0, 1], vec![1, 1], vec![1, 1]).unwrap();
        let masks = build_masks(&topo);
        let k = dmatrix![0.7, -0.2; 0.1, 0.4];
        let via_d = build_closed_loop(&plant, &k, &masks, 0.8, 1.0, &basis).unwrap();
        let via_o = build_closed_loop(&plant, &k, &masks.swapped(), 0.8, 1.0, &basis).unwrap();
        assert!((via_d.a_cl - via_o.a_cl).norm() < 1e-8);

        // At c = 0 the direct path acts undelayed through the current state.
        let undelayed = build_closed_loop(&plant, &k, &GainMasks::all_direct(2, 2), 0.8, 0.0, &basis)
            .unwrap();
        let manual = {
            let mut acl = undelayed.a_tilde.clone();
            let corr = plant.b() * &k * undelayed.m_sel.transpose();
            let ext = 9 * 2;
            for i in 0..2 {
                for j in 0..ext {
                    acl[(ext - 2 + i, j)] -= corr[(i, j)];
                }
            }
            acl
        };
        assert!((undelayed.a_cl - manual).norm() < 1e-12);
    }

    #[test]
    fn affine_fit_exact_for_two_point_grid() {
        let basis = SpectralBasis::<f64>::new(2, 1).unwrap();
        let fit = fit_affine_nd(&basis, 3, None).unwrap();
        assert!(fit.max_error() < 1e-13, "nu(c) = [c, 1] is already affine");
    }

    #[test]
    fn affine_fit_refines_with_more_intervals() {
        let basis = SpectralBasis::<f64>::new(10, 1).unwrap();
        let coarse = fit_affine_nd(&basis, 10, None).unwrap();
        let fine = fit_affine_nd(&basis, 20, None).unwrap();
        assert!(fine.max_error() < coarse.max_error());
    }

    #[test]
    fn affine_fit_tracks_exact_weights_at_knots() {
        let basis = SpectralBasis::<f64>::new(8, 1).unwrap();
        let fit = fit_affine_nd(&basis, 10, None).unwrap();
        for i in 0..fit.k_c() {
            let c = 0.5 * (fit.breakpoints()[i] + fit.breakpoints()[i + 1]);
            let approx = fit.eval_weights(i, c);
            let exact = basis.gamma_nu(c);
            assert!((approx - exact).norm() <= 10.0 * fit.max_error() + 1e-12);
        }
        assert_eq!(fit.interval_of(0.0), 0);
        assert_eq!(fit.interval_of(1.0), 9);
    }

    #[test]
    fn f32_instantiation_smoke() {
        let basis = SpectralBasis::<f32>::new(5, 1).unwrap();
        let s: f32 = basis.gamma_nu(0.3).iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}
