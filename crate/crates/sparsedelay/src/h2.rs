//! Closed-loop H2 norm of the discretized loop and its analytic gradients
//! with respect to the gain, the round-trip delay, and the delay ratio.
//!
//! Conventions: `P` is the observability Gramian of the performance output,
//! `L` the controllability Gramian of the disturbance channel, and
//! `J = Tr(B_w~^T P B_w~) = Tr(C L C^T)` the squared H2 norm. The gradient
//! formulas hold exactly for this pairing; with `B = B_w` (the usual
//! experimental setup) they reduce to the control-channel forms.

use crate::error::{Error, Result};
use crate::lyapunov::{solve_lyapunov, solve_lyapunov_dual, spectral_abscissa, HURWITZ_MARGIN};
use crate::model::{GainMasks, PlantModel};
use crate::scalar::{r, Real};
use crate::spectral::{build_closed_loop, DiscretizedLoop, SpectralBasis};
use crate::Mat;

/// Gramians, H2 value, and the gradient workspace of one design point.
#[derive(Debug, Clone)]
pub struct H2Solution<T: Real> {
    /// Observability Gramian: `A_cl^T P + P A_cl = -(Q~ + C~^T R C~)`.
    pub p: Mat<T>,
    /// Controllability Gramian: `A_cl L + L A_cl^T = -B_w~ B_w~^T`.
    pub l: Mat<T>,
    /// Squared H2 norm.
    pub j: T,
    /// `G = R C~ - B~^T P`, shared by all gradient formulas.
    pub g: Mat<T>,
    /// Spectral abscissa of the closed loop at this design.
    pub abscissa: T,
}

/// Relative agreement required between the two trace routes for `J`.
const TRACE_RTOL: f64 = 1e-6;

/// Evaluates the squared H2 norm of a stable discretized loop.
///
/// Errors with [`Error::Unstable`] when the closed loop misses the Hurwitz
/// margin, and refuses solutions whose two trace routes disagree.
pub fn h2_norm<T: Real>(lp: &DiscretizedLoop<T>, plant: &PlantModel<T>) -> Result<H2Solution<T>> {
    let abscissa = spectral_abscissa(&lp.a_cl)?;
    if abscissa >= r::<T>(HURWITZ_MARGIN) {
        return Err(Error::Unstable { abscissa: abscissa.to_f64_lossy() });
    }
    let w_obs = &lp.q_tilde + lp.c_tilde.transpose() * plant.r() * &lp.c_tilde;
    let p = solve_lyapunov(&lp.a_cl, &w_obs)?.x;
    let w_ctl = &lp.cal_b_w * lp.cal_b_w.transpose();
    let l = solve_lyapunov_dual(&lp.a_cl, &w_ctl)?.x;

    let j_p = (lp.cal_b_w.transpose() * &p * &lp.cal_b_w).trace();
    let j_l = (&w_obs * &l).trace();
    let tol = r::<T>(TRACE_RTOL) * (T::one() + j_p.abs());
    if (j_p - j_l).abs() > tol {
        return Err(Error::Residual {
            residual: (j_p - j_l).abs().to_f64_lossy(),
            tolerance: tol.to_f64_lossy(),
        });
    }
    let g = plant.r() * &lp.c_tilde - lp.cal_b.transpose() * &p;
    Ok(H2Solution { p, l, j: j_p, g, abscissa })
}

/// Analytic gradients of `J` at one design point.
#[derive(Debug, Clone)]
pub struct GradientBundle<T: Real> {
    pub dj_dtau_o: T,
    pub dj_dc: T,
    pub dj_dk: Mat<T>,
}

/// Gradients of the squared H2 norm with respect to `tau_o`, `c`, and every
/// gain entry, from the Gramian pair of [`h2_norm`]:
///
/// - `J'(tau_o) = -(2 / tau_o^2) Tr(Lambda^T P L)`
/// - `J'(c)     = 2 Tr(N_d'(c) K_d^T G L)`
/// - `grad J(K) = 2 ((G L N_d) o I_d + (G L N_o) o I_o)`
pub fn gradients<T: Real>(
    lp: &DiscretizedLoop<T>,
    sol: &H2Solution<T>,
    masks: &GainMasks<T>,
    basis: &SpectralBasis<T>,
) -> Result<GradientBundle<T>> {
    if basis.state_dim() * basis.n_grid() != lp.extended_dim() {
        return Err(Error::Dimension("basis does not match the discretized loop".into()));
    }
    let tau_sq = lp.tau_o * lp.tau_o;
    let dj_dtau_o = -(r::<T>(2.0) / tau_sq) * (basis.lambda().transpose() * &sol.p * &sol.l).trace();

    let nd_prime = basis.build_nd_prime(lp.c);
    let dj_dc = r::<T>(2.0) * (&nd_prime * lp.k_d.transpose() * &sol.g * &sol.l).trace();

    let gl = &sol.g * &sol.l;
    let term_d = (&gl * &lp.n_d).component_mul(masks.i_d());
    let term_o = (&gl * &lp.n_o).component_mul(masks.i_o());
    let dj_dk = (term_d + term_o) * r::<T>(2.0);

    let finite = dj_dtau_o.is_finite() && dj_dc.is_finite() && dj_dk.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::SolverFailure("non-finite gradient".into()));
    }
    Ok(GradientBundle { dj_dtau_o, dj_dc, dj_dk })
}

/// Convenience wrapper: assemble the loop at `(K, tau_o, c)` and evaluate `J`.
pub fn evaluate_j<T: Real>(
    plant: &PlantModel<T>,
    k: &Mat<T>,
    masks: &GainMasks<T>,
    tau_o: T,
    c: T,
    basis: &SpectralBasis<T>,
) -> Result<T> {
    let lp = build_closed_loop(plant, k, masks, tau_o, c, basis)?;
    Ok(h2_norm(&lp, plant)?.j)
}

/// Picks a grid size by doubling until `J` changes by at most `rtol`
/// relative between `N` and `2N`, starting from `n0`.
pub fn choose_grid_size<T: Real>(
    plant: &PlantModel<T>,
    k: &Mat<T>,
    masks: &GainMasks<T>,
    tau_o: T,
    c: T,
    n0: usize,
    rtol: T,
    n_max: usize,
) -> Result<usize> {
    let mut n = n0.max(2);
    let mut j_prev: Option<T> = None;
    loop {
        let basis = SpectralBasis::<T>::new(n, plant.state_dim())?;
        let j = evaluate_j(plant, k, masks, tau_o, c, &basis)?;
        if let Some(jp) = j_prev {
            if (j - jp).abs() <= rtol * (T::one() + jp.abs()) {
                return Ok(n / 2);
            }
        }
        if 2 * n > n_max {
            return Ok(n);
        }
        j_prev = Some(j);
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GainMasks;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn plant_3() -> PlantModel<f64> {
        let a = dmatrix![-1.0, 0.4, 0.0; 0.0, -1.6, 0.3; -0.2, 0.0, -0.8];
        let eye = Mat::<f64>::identity(3, 3);
        PlantModel::new(a, eye.clone(), eye.clone(), eye.clone(), eye).unwrap()
    }

    #[test]
    fn open_loop_matches_delay_free_lyapunov() {
        // K = 0 removes every delay path, so J must equal the delay-free
        // open-loop H2 value Tr(B_w^T P0 B_w) with A^T P0 + P0 A + Q = 0.
        let plant = plant_3();
        let basis = SpectralBasis::<f64>::new(10, 3).unwrap();
        let masks = GainMasks::all_direct(3, 3);
        let k = Mat::<f64>::zeros(3, 3);
        let lp = build_closed_loop(&plant, &k, &masks, 0.5, 0.4, &basis).unwrap();
        let sol = h2_norm(&lp, &plant).unwrap();

        let p0 = solve_lyapunov(plant.a(), plant.q()).unwrap().x;
        let j0 = (plant.b_w().transpose() * p0 * plant.b_w()).trace();
        assert_relative_eq!(sol.j, j0, max_relative = 1e-8);
    }

    #[test]
    fn trace_routes_agree() {
        let plant = plant_3();
        let basis = SpectralBasis::<f64>::new(12, 3).unwrap();
        let masks = GainMasks::all_direct(3, 3);
        let k = Mat::<f64>::identity(3, 3) * 0.5;
        let lp = build_closed_loop(&plant, &k, &masks, 0.3, 0.5, &basis).unwrap();
        let sol = h2_norm(&lp, &plant).unwrap();
        let j_l = ((&lp.q_tilde + lp.c_tilde.transpose() * plant.r() * &lp.c_tilde) * &sol.l).trace();
        assert!((sol.j - j_l).abs() <= 1e-6 * (1.0 + sol.j));
    }

    #[test]
    fn unstable_loop_reports_abscissa() {
        let a = dmatrix![0.3];
        let one = Mat::<f64>::identity(1, 1);
        let plant = PlantModel::new(a, one.clone(), one.clone(), one.clone(), one).unwrap();
        let basis = SpectralBasis::<f64>::new(8, 1).unwrap();
        let masks = GainMasks::all_direct(1, 1);
        let k = Mat::<f64>::zeros(1, 1);
        let lp = build_closed_loop(&plant, &k, &masks, 0.5, 0.5, &basis).unwrap();
        match h2_norm(&lp, &plant) {
            Err(Error::Unstable { abscissa }) => assert!(abscissa > 0.0),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn scalar_delay_boundary_flips_abscissa_sign() {
        // k tau = pi/2 is the stability boundary of x' = -k x(t - tau)
        let one = Mat::<f64>::identity(1, 1);
        let plant =
            PlantModel::new(Mat::zeros(1, 1), one.clone(), one.clone(), one.clone(), one).unwrap();
        let basis = SpectralBasis::<f64>::new(20, 1).unwrap();
        let masks = GainMasks::<f64>::all_direct(1, 1).swapped();
        let k = Mat::<f64>::identity(1, 1);
        let target = std::f64::consts::FRAC_PI_2;
        for (factor, expect_stable) in [(0.95, true), (1.05, false)] {
            let lp = build_closed_loop(&plant, &k, &masks, target * factor, 0.5, &basis).unwrap();
            let a = spectral_abscissa(&lp.a_cl).unwrap();
            assert_eq!(a < 0.0, expect_stable, "factor {factor}: abscissa {a}");
        }
    }

    #[test]
    fn grid_size_chooser_converges() {
        let plant = plant_3();
        let masks = GainMasks::all_direct(3, 3);
        let k = Mat::<f64>::identity(3, 3) * 0.4;
        let n = choose_grid_size(&plant, &k, &masks, 0.4, 0.5, 8, 1e-3, 128).unwrap();
        assert!(n >= 8 && n <= 128);
    }
}
