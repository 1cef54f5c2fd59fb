//! Trust-region conic relaxations of the delay co-design steps.
//!
//! Around a known stabilizing tuple with its Gramian, the Lyapunov equality
//! is linearized in the perturbations; second-order cross terms are absorbed
//! by a scalar `alpha` bounded through norm estimates, turning closed-loop
//! stability of the perturbed tuple into a single linear matrix inequality.
//! One program moves `(K, omega = 1/tau_o)` against the observability
//! Gramian, the other moves `(K, c)` against the controllability Gramian
//! with the delayed-state selector replaced by its per-interval affine
//! surrogate. Every returned tuple is re-verified by direct eigenvalue
//! computation; on failure the trust region shrinks and the solve repeats.
//!
//! All norm bounds use the Frobenius norm, an upper bound on the spectral
//! norm, so feasibility of the program remains sufficient for stability.

use crate::conic::{ConicBuilder, LinExpr, MatExpr};
use crate::error::{Error, Result};
use crate::h2::h2_norm;
use crate::lyapunov::{solve_lyapunov, solve_lyapunov_dual, spectral_abscissa, HURWITZ_MARGIN};
use crate::model::{GainMasks, PlantModel, Topology};
use crate::netcost::{
    c_min, channel_counts, delta_sbw_c_coeffs, delta_sbw_tau_coeffs, sbw, BandwidthModel,
    ChannelCounts, SbwBaseline,
};
use crate::scalar::{r, Real};
use crate::spectral::{build_closed_loop, AffineNdApprox, SpectralBasis};
use crate::{Mat, Vec_};
use clarabel::algebra::FloatT;

/// Incumbent design with the Gramian pair and cost data the relaxations
/// linearize around.
#[derive(Debug, Clone)]
pub struct OuterState<T: Real> {
    pub k: Mat<T>,
    pub tau_o: T,
    pub c: T,
    /// Observability Gramian at the incumbent.
    pub p: Mat<T>,
    /// Controllability Gramian at the incumbent.
    pub l: Mat<T>,
    pub j: T,
    pub s_bw: T,
    pub counts: ChannelCounts,
}

impl<T: Real> OuterState<T> {
    /// Evaluates a design into a full outer state; fails on instability or
    /// budget violation.
    pub fn evaluate(
        plant: &PlantModel<T>,
        masks: &GainMasks<T>,
        basis: &SpectralBasis<T>,
        topology: &Topology<T>,
        bw: Option<&BandwidthModel<T>>,
        k: Mat<T>,
        tau_o: T,
        c: T,
    ) -> Result<Self> {
        let counts = channel_counts(&k, topology)?;
        Self::evaluate_anchored(plant, masks, basis, bw, k, tau_o, c, counts)
    }

    /// Like [`OuterState::evaluate`] but with the channel counts pinned to a
    /// given baseline. The relaxation steps price their perturbed gains at
    /// the incumbent's counts; the sparsified counts are reconciled when a
    /// round is accepted.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate_anchored(
        plant: &PlantModel<T>,
        masks: &GainMasks<T>,
        basis: &SpectralBasis<T>,
        bw: Option<&BandwidthModel<T>>,
        k: Mat<T>,
        tau_o: T,
        c: T,
        counts: ChannelCounts,
    ) -> Result<Self> {
        let lp = build_closed_loop(plant, &k, masks, tau_o, c, basis)?;
        let sol = h2_norm(&lp, plant)?;
        let s_bw = match bw {
            Some(model) => SbwBaseline::from_design(&counts, tau_o, c, model)?.s_bw,
            None => T::zero(),
        };
        Ok(Self { k, tau_o, c, p: sol.p, l: sol.l, j: sol.j, s_bw, counts })
    }

    pub fn baseline(&self) -> SbwBaseline<T> {
        SbwBaseline {
            tau_o: self.tau_o,
            c: self.c,
            n_cp: self.counts.n_cp,
            n_cc: self.counts.n_cc,
            s_bw: self.s_bw,
        }
    }
}

/// Shared immutable context of the outer loop.
#[derive(Clone, Copy)]
pub struct OuterContext<'a, T: Real> {
    pub plant: &'a PlantModel<T>,
    pub masks: &'a GainMasks<T>,
    pub basis: &'a SpectralBasis<T>,
    pub topology: &'a Topology<T>,
    pub bw: Option<&'a BandwidthModel<T>>,
    /// Proximal anchor from the last inner loop.
    pub u_star: &'a Mat<T>,
    pub rho: T,
}

/// How the delay variable is constrained in one outer step.
#[derive(Debug, Clone, Copy)]
pub enum DelayStep<T: Real> {
    /// Cost non-increase relative to the incumbent: `delta S_BW <= 0`.
    Bandwidth,
    /// Artificial exploration ball `|(tau_d - tau_d*) + (tau_o - tau_o*)| <= eps`,
    /// with `fraction` of the budget granted to this step.
    EpsilonBall { epsilon: T, fraction: T },
    /// No delay constraint beyond the trust region.
    Free,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpConfigKTau<T: Real> {
    /// Trust radius on `omega` as a fraction of `omega*`.
    pub zeta1_rel: T,
    /// Trust radius on the Gramian perturbation as a fraction of `|P*|_F`.
    pub zeta2_rel: T,
    pub solver_tol: f64,
    pub solver_iters: u32,
    pub max_shrinks: usize,
    /// Use a derivative subspace for the Gramian perturbation above this
    /// extended dimension (full triangle parameterization below it).
    pub subspace_threshold: usize,
}

impl<T: Real> Default for SdpConfigKTau<T> {
    fn default() -> Self {
        Self {
            zeta1_rel: r(0.1),
            zeta2_rel: r(0.1),
            solver_tol: 1e-8,
            solver_iters: 200,
            max_shrinks: 5,
            subspace_threshold: 60,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpConfigKC<T: Real> {
    /// Trust radius on the Gramian perturbation as a fraction of `|L*|_F`.
    pub beta_rel: T,
    /// Relative margin on the selector-norm bound.
    pub s_margin: T,
    pub solver_tol: f64,
    pub solver_iters: u32,
    pub max_shrinks: usize,
    pub subspace_threshold: usize,
    /// Jump straight to the cost-minimizing ratio when it verifies stable.
    pub allow_shortcut: bool,
}

impl<T: Real> Default for SdpConfigKC<T> {
    fn default() -> Self {
        Self {
            beta_rel: r(0.1),
            s_margin: r(0.05),
            solver_tol: 1e-8,
            solver_iters: 200,
            max_shrinks: 5,
            subspace_threshold: 60,
            allow_shortcut: true,
        }
    }
}

/// Verified output of one relaxation step.
#[derive(Debug, Clone)]
pub struct SdpOutcome<T: Real> {
    pub k: Mat<T>,
    pub tau_o: T,
    pub c: T,
    /// Certificate Gramian returned by the program (`P` or `L` side).
    pub cert: Mat<T>,
    pub alpha: T,
    /// Trust-region shrinks needed before verification passed.
    pub shrinks: usize,
    pub used_shortcut: bool,
}

/// Slack accepted when re-checking `delta S_BW <= 0` on returned designs.
pub const DELTA_SBW_SLACK: f64 = 1e-9;

/// Column `j` of the effective selector for gain entry `(i, j)`:
/// `I_d(i,j) N_d[:, j] + I_o(i,j) N_o[:, j]` as a dense extended vector.
fn selector_column<T: Real>(
    masks: &GainMasks<T>,
    gamma_nu: &Vec_<T>,
    n: usize,
    i: usize,
    j: usize,
) -> Vec_<T> {
    let n_grid = gamma_nu.len();
    let mut w = Vec_::<T>::zeros(n_grid * n);
    let d = masks.i_d()[(i, j)];
    let o = masks.i_o()[(i, j)];
    if d != T::zero() {
        for k in 0..n_grid {
            w[k * n + j] += d * gamma_nu[k];
        }
    }
    if o != T::zero() {
        w[j] += o;
    }
    w
}

/// Frobenius-orthonormal symmetric basis from candidate directions,
/// dropping near-dependent candidates.
fn orthonormal_basis<T: Real>(candidates: Vec<Mat<T>>) -> Vec<Mat<T>> {
    let mut basis: Vec<Mat<T>> = Vec::new();
    for cand in candidates {
        let mut v = (&cand + cand.transpose()) * r::<T>(0.5);
        let norm0 = v.norm();
        if norm0 <= r::<T>(1e-12) {
            continue;
        }
        v /= norm0;
        for b in &basis {
            let proj = v.dot(b);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm > r::<T>(1e-6) {
            basis.push(v / norm);
        }
    }
    basis
}

/// Parameterization of the Gramian perturbation: either the full symmetric
/// triangle or a small orthonormal subspace of symmetric directions.
enum GramParam<T: Real> {
    FullTriangle { dim: usize },
    Subspace { basis: Vec<Mat<T>> },
}

impl<T: Real> GramParam<T> {
    fn n_params(&self) -> usize {
        match self {
            GramParam::FullTriangle { dim } => dim * (dim + 1) / 2,
            GramParam::Subspace { basis } => basis.len(),
        }
    }

    /// Coefficient matrix of parameter `idx` (symmetric, unit Frobenius for
    /// the subspace; the triangle basis uses unit entries).
    fn coeff(&self, idx: usize, dim: usize) -> Mat<T> {
        match self {
            GramParam::FullTriangle { .. } => {
                let (i, j) = triangle_unrank(idx);
                let mut e = Mat::<T>::zeros(dim, dim);
                e[(i, j)] = T::one();
                e[(j, i)] = T::one();
                e
            }
            GramParam::Subspace { basis } => basis[idx].clone(),
        }
    }

    fn materialize(&self, coords: &[T], dim: usize) -> Mat<T> {
        let mut out = Mat::<T>::zeros(dim, dim);
        for (idx, &v) in coords.iter().enumerate() {
            if v != T::zero() {
                out += self.coeff(idx, dim) * v;
            }
        }
        out
    }

    /// Rows expressing the Frobenius norm of the perturbation for a trust
    /// SOC: `(var, scale)` per row.
    fn frobenius_rows(&self, vars: &std::ops::Range<usize>) -> Vec<LinExpr<T>>
    where
        T: FloatT,
    {
        match self {
            GramParam::FullTriangle { dim } => {
                let sqrt2 = r::<T>(std::f64::consts::SQRT_2);
                let mut rows = Vec::with_capacity(dim * (dim + 1) / 2);
                for (offset, var) in vars.clone().enumerate() {
                    let (i, j) = triangle_unrank(offset);
                    let scale = if i == j { T::one() } else { sqrt2 };
                    rows.push(LinExpr::scaled_var(var, scale));
                }
                rows
            }
            GramParam::Subspace { basis } => {
                // orthonormal: |sum theta_i B_i|_F = |theta|_2
                (0..basis.len()).map(|i| LinExpr::var(vars.start + i)).collect()
            }
        }
    }
}

/// Column-major upper-triangle unranking: index -> (row, col), row <= col.
fn triangle_unrank(idx: usize) -> (usize, usize) {
    let mut j = 0usize;
    let mut base = 0usize;
    loop {
        let next = base + j + 1;
        if idx < next {
            return (idx - base, j);
        }
        base = next;
        j += 1;
    }
}

fn gram_param_for<T: Real>(dim: usize, threshold: usize, candidates: Vec<Mat<T>>) -> GramParam<T> {
    if dim <= threshold {
        GramParam::FullTriangle { dim }
    } else {
        GramParam::Subspace { basis: orthonormal_basis(candidates) }
    }
}

/// Frobenius-norm SOC rows of a dense matrix expression `sum x_v C_v` given
/// per-variable coefficient matrices; entries below `drop_tol` are dropped.
fn frobenius_soc_rows<T: Real + FloatT>(
    coeffs: &[(usize, Mat<T>)],
    rows_dim: usize,
    cols_dim: usize,
) -> Vec<LinExpr<T>> {
    let drop_tol = r::<T>(1e-14);
    let mut rows = Vec::new();
    for rr in 0..rows_dim {
        for cc in 0..cols_dim {
            let mut terms = Vec::new();
            for (var, c) in coeffs {
                let v = c[(rr, cc)];
                if v > drop_tol || v < -drop_tol {
                    terms.push((*var, v));
                }
            }
            if !terms.is_empty() {
                rows.push(LinExpr { terms, constant: T::zero() });
            }
        }
    }
    rows
}

/// Co-designs `(K, tau_o)` around the incumbent by the observability-side
/// relaxation; the ratio stays fixed.
pub fn sdp_ktau<T: Real + FloatT>(
    state: &OuterState<T>,
    ctx: &OuterContext<'_, T>,
    cfg: &SdpConfigKTau<T>,
    step: &DelayStep<T>,
) -> Result<SdpOutcome<T>> {
    let n = ctx.plant.state_dim();
    let m = ctx.plant.input_dim();
    let ext = ctx.basis.n_grid() * n;
    let lp = build_closed_loop(ctx.plant, &state.k, ctx.masks, state.tau_o, state.c, ctx.basis)?;
    let omega_star = T::one() / state.tau_o;
    let gamma_nu = ctx.basis.gamma_nu(state.c);

    // constant LMI block: A*^T P* + P* A* + Q~ + C~*^T R C~*
    let w_obs = &lp.q_tilde + lp.c_tilde.transpose() * ctx.plant.r() * &lp.c_tilde;
    let lmi_const = lp.a_cl.transpose() * &state.p + &state.p * &lp.a_cl + &w_obs;

    // derivative-direction candidates for the Gramian subspace
    let candidates = {
        let mut cands: Vec<Mat<T>> = Vec::new();
        cands.push(Mat::identity(ext, ext));
        cands.push(state.p.clone());
        cands.push(w_obs.clone());
        let lam_dir = ctx.basis.lambda().transpose() * &state.p
            + &state.p * ctx.basis.lambda();
        if let Ok(sol) = solve_lyapunov(&lp.a_cl, &lam_dir) {
            cands.push(sol.x);
        }
        cands.push(lam_dir);
        let sol_h2 = h2_norm(&lp, ctx.plant)?;
        let grad =
            crate::h2::gradients(&lp, &sol_h2, ctx.masks, ctx.basis).map(|g| g.dj_dk)?;
        let gnorm = grad.norm();
        if gnorm > r::<T>(1e-12) {
            let dk = -grad / gnorm;
            let (dkd, dko) = crate::model::split_gain(&dk, ctx.masks)?;
            let dct = &dkd * lp.n_d.transpose() + &dko * lp.n_o.transpose();
            let da = -(&lp.cal_b * dct); // K-direction loop perturbation
            let w_dir = da.transpose() * &state.p + &state.p * &da;
            if let Ok(sol) = solve_lyapunov(&lp.a_cl, &w_dir) {
                cands.push(sol.x);
            }
        }
        cands
    };
    let param = gram_param_for(ext, cfg.subspace_threshold, candidates);

    let mut zeta1 = cfg.zeta1_rel * omega_star;
    let mut zeta2 = cfg.zeta2_rel * state.p.norm();

    let quad_tau = ctx.bw.map(|model| delta_sbw_tau_coeffs(&state.baseline(), model));

    for attempt in 0..=cfg.max_shrinks {
        let mut b = ConicBuilder::<T>::new();
        let dw = b.add_var();
        let dk_vars = b.add_vars(m * n);
        let dp_vars = b.add_vars(param.n_params());
        let alpha = b.add_var();

        // objective: Tr(B_w~^T (P* + dP) B_w~) + (rho/2) |K* + dK - U*|^2
        for (offset, var) in dp_vars.clone().enumerate() {
            let coeff = param.coeff(offset, ext);
            let val = (lp.cal_b_w.transpose() * &coeff * &lp.cal_b_w).trace();
            if val != T::zero() {
                b.obj_linear(var, val);
            }
        }
        let anchor = &state.k - ctx.u_star;
        for (offset, var) in dk_vars.clone().enumerate() {
            let (i, j) = (offset % m, offset / m);
            b.obj_quad(var, var, ctx.rho);
            b.obj_linear(var, ctx.rho * anchor[(i, j)]);
        }

        // LMI: lmi_const + dP-terms + dw-terms + dK-terms + alpha I <= 0
        let mut lmi = MatExpr::new(lmi_const.clone());
        for (offset, var) in dp_vars.clone().enumerate() {
            let s = param.coeff(offset, ext);
            lmi.add_term(var, lp.a_cl.transpose() * &s + &s * &lp.a_cl);
        }
        let lam_p = ctx.basis.lambda().transpose() * &state.p + &state.p * ctx.basis.lambda();
        lmi.add_term(dw, lam_p.clone());
        // per gain entry: sym( g_i w_ij^T ), g = (C~*^T R - P* B~) columns
        let g_mat = lp.c_tilde.transpose() * ctx.plant.r() - &state.p * &lp.cal_b;
        let mut dk_ctilde_coeffs: Vec<(usize, Mat<T>)> = Vec::new();
        for (offset, var) in dk_vars.clone().enumerate() {
            let (i, j) = (offset % m, offset / m);
            let w_col = selector_column(ctx.masks, &gamma_nu, n, i, j);
            let g_i = g_mat.column(i).clone_owned();
            let coeff = &g_i * w_col.transpose() + &w_col * g_i.transpose();
            lmi.add_term(var, coeff);
            // store dC~ description for the norm cones: dC~ = e_i w^T
            let mut dct = Mat::<T>::zeros(m, ext);
            dct.row_mut(i).copy_from(&w_col.transpose());
            dk_ctilde_coeffs.push((var, dct));
        }
        {
            let mut eye_term = Mat::<T>::zeros(ext, ext);
            eye_term.fill_diagonal(T::one());
            lmi.add_term(alpha, eye_term);
        }
        b.psd_leq_zero(&lmi);

        // trust bounds
        b.bounds(&LinExpr::var(dw), -zeta1, zeta1);
        match step {
            DelayStep::Bandwidth => {
                // cost non-increase holds on the ray tau_o >= tau_o*
                b.nonneg(&LinExpr::scaled_var(dw, -T::one()));
            }
            DelayStep::EpsilonBall { epsilon, fraction } => {
                let dtau = *fraction * *epsilon / (T::one() + state.c);
                let lo_omega = T::one() / (state.tau_o + dtau);
                let hi_omega = if state.tau_o > dtau {
                    T::one() / (state.tau_o - dtau)
                } else {
                    omega_star * r::<T>(10.0)
                };
                b.bounds(&LinExpr::var(dw).plus(omega_star), lo_omega, hi_omega);
            }
            DelayStep::Free => {}
        }
        let frob_rows = param.frobenius_rows(&dp_vars);
        b.soc(&LinExpr::constant(zeta2), &frob_rows);

        // alpha >= 2 zeta1 |Lambda^T dP| + 2 zeta2 |B~ dC~| + |R^{1/2} dC~|^2
        let u_var = b.add_var();
        let lam_t = ctx.basis.lambda().transpose();
        let lam_dp_coeffs: Vec<(usize, Mat<T>)> = dp_vars
            .clone()
            .enumerate()
            .map(|(offset, var)| (var, &lam_t * param.coeff(offset, ext)))
            .collect();
        b.soc(&LinExpr::var(u_var), &frobenius_soc_rows(&lam_dp_coeffs, ext, ext));

        let v_var = b.add_var();
        let b_dct: Vec<(usize, Mat<T>)> = dk_ctilde_coeffs
            .iter()
            .map(|(var, dct)| (*var, &lp.cal_b * dct))
            .collect();
        // B~ dC~ is supported on the last state block only
        let b_dct_rows: Vec<(usize, Mat<T>)> = b_dct
            .iter()
            .map(|(var, full)| (*var, full.view((ext - n, 0), (n, ext)).clone_owned()))
            .collect();
        b.soc(&LinExpr::var(v_var), &frobenius_soc_rows(&b_dct_rows, n, ext));

        let wn_var = b.add_var();
        let r_sqrt = ctx.plant.r_sqrt();
        let r_dct: Vec<(usize, Mat<T>)> = dk_ctilde_coeffs
            .iter()
            .map(|(var, dct)| (*var, r_sqrt * dct))
            .collect();
        b.soc(&LinExpr::var(wn_var), &frobenius_soc_rows(&r_dct, m, ext));
        let s_var = b.add_var();
        b.quad_epigraph(s_var, &[LinExpr::var(wn_var)]);

        b.nonneg(
            &LinExpr::var(alpha)
                .plus_var(u_var, -r::<T>(2.0) * zeta1)
                .plus_var(v_var, -r::<T>(2.0) * zeta2)
                .plus_var(s_var, -T::one()),
        );
        b.nonneg(&LinExpr::var(alpha));

        let sol = match b.solve(cfg.solver_tol, cfg.solver_iters) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) if attempt < cfg.max_shrinks => {
                zeta1 *= r::<T>(0.5);
                zeta2 *= r::<T>(0.5);
                continue;
            }
            Err(e) => return Err(e),
        };

        let omega = omega_star + sol.x[dw];
        let tau_o = T::one() / omega;
        let mut k_new = state.k.clone();
        for (offset, var) in dk_vars.clone().enumerate() {
            k_new[(offset % m, offset / m)] += sol.x[var];
        }
        let dp_coords: Vec<T> = dp_vars.clone().map(|v| sol.x[v]).collect();
        let cert = &state.p + param.materialize(&dp_coords, ext);

        if verify_step(ctx, state, &k_new, tau_o, state.c, step, quad_tau.as_ref()).is_ok() {
            return Ok(SdpOutcome {
                k: k_new,
                tau_o,
                c: state.c,
                cert,
                alpha: sol.x[alpha],
                shrinks: attempt,
                used_shortcut: false,
            });
        }
        zeta1 *= r::<T>(0.5);
        zeta2 *= r::<T>(0.5);
    }
    Err(Error::Verification {
        attempts: cfg.max_shrinks + 1,
        reason: "(K, tau_o) step failed independent re-verification".into(),
    })
}

/// Co-designs `(K, c)` around the incumbent by the controllability-side
/// relaxation; the round-trip delay stays fixed.
pub fn sdp_kc<T: Real + FloatT>(
    state: &OuterState<T>,
    ctx: &OuterContext<'_, T>,
    cfg: &SdpConfigKC<T>,
    affine: &AffineNdApprox<T>,
    step: &DelayStep<T>,
) -> Result<SdpOutcome<T>> {
    let n = ctx.plant.state_dim();
    let m = ctx.plant.input_dim();
    let ext = ctx.basis.n_grid() * n;
    let lp = build_closed_loop(ctx.plant, &state.k, ctx.masks, state.tau_o, state.c, ctx.basis)?;
    let gamma_nu_star = ctx.basis.gamma_nu(state.c);

    let quad_c = ctx.bw.map(|model| delta_sbw_c_coeffs(&state.baseline(), model));

    // shortcut: move straight to the cost vertex when it verifies
    if cfg.allow_shortcut {
        if let Some(quad) = &quad_c {
            if let Ok(cm) = c_min(quad) {
                let interval = affine.interval_of(state.c);
                let in_interval = cm >= affine.breakpoints()[interval]
                    && cm <= affine.breakpoints()[interval + 1];
                if in_interval
                    && verify_step(ctx, state, &state.k, state.tau_o, cm, step, quad_c.as_ref())
                        .is_ok()
                {
                    let lp_new =
                        build_closed_loop(ctx.plant, &state.k, ctx.masks, state.tau_o, cm, ctx.basis)?;
                    let sol = h2_norm(&lp_new, ctx.plant)?;
                    return Ok(SdpOutcome {
                        k: state.k.clone(),
                        tau_o: state.tau_o,
                        c: cm,
                        cert: sol.l,
                        alpha: T::zero(),
                        shrinks: 0,
                        used_shortcut: true,
                    });
                }
            }
        }
    }

    // affine surrogate, re-anchored so the baseline residual vanishes:
    // slope from the fit, intercept through the exact weights at c*.
    let interval = affine.interval_of(state.c);
    let slope_small: Vec_<T> = {
        let chi = affine.chi(interval);
        Vec_::from_fn(ctx.basis.n_grid(), |row, _| chi[(row, 0)])
    };
    // S_slope = slope (x) I_n, the d(N_d)/dc surrogate on the interval
    let s_slope = {
        let mut out = Mat::<T>::zeros(ext, n);
        for k in 0..ctx.basis.n_grid() {
            let v = slope_small[k];
            if v != T::zero() {
                for d in 0..n {
                    out[(k * n + d, d)] = v;
                }
            }
        }
        out
    };

    // selector-norm bound over the active interval endpoints
    let s_bound = {
        let lo = affine.breakpoints()[interval];
        let hi = affine.breakpoints()[interval + 1];
        let n_lo = ctx.basis.gamma_nu(lo).norm();
        let n_hi = ctx.basis.gamma_nu(hi).norm();
        (if n_lo > n_hi { n_lo } else { n_hi }) * (T::one() + cfg.s_margin)
    };

    // constant LMI block: A* L* + L* A*^T + B_w~ B_w~^T (zero at an exact Gramian)
    let lmi_const = &lp.a_cl * &state.l + &state.l * lp.a_cl.transpose()
        + &lp.cal_b_w * lp.cal_b_w.transpose();

    let candidates = {
        let mut cands: Vec<Mat<T>> = Vec::new();
        cands.push(Mat::identity(ext, ext));
        cands.push(state.l.clone());
        cands.push(&lp.cal_b_w * lp.cal_b_w.transpose());
        let a_c = -(&lp.cal_b * &lp.k_d * s_slope.transpose());
        let w_dir = &a_c * &state.l + &state.l * a_c.transpose();
        if let Ok(sol) = solve_lyapunov_dual(&lp.a_cl, &w_dir) {
            cands.push(sol.x);
        }
        cands.push(w_dir);
        cands
    };
    let param = gram_param_for(ext, cfg.subspace_threshold, candidates);

    let mut beta = cfg.beta_rel * state.l.norm();
    let mut c_halfwidth: Option<T> = None; // shrinks on verification failure

    let c_bounds_base: (T, T) = {
        let mut lo = affine.breakpoints()[interval];
        let mut hi = affine.breakpoints()[interval + 1];
        match step {
            DelayStep::Bandwidth => {
                let quad = quad_c.as_ref().expect("bandwidth step requires a model");
                let (qlo, qhi) = quad.feasible_region()?;
                if qlo > lo {
                    lo = qlo;
                }
                if qhi < hi {
                    hi = qhi;
                }
                let (dlo, dhi) = quad.domain();
                let margin = (dhi - dlo) * r::<T>(1e-9);
                if dlo + margin > lo {
                    lo = dlo + margin;
                }
                if dhi - margin < hi {
                    hi = dhi - margin;
                }
            }
            DelayStep::EpsilonBall { epsilon, fraction } => {
                let dc = *fraction * *epsilon / state.tau_o;
                if state.c - dc > lo {
                    lo = state.c - dc;
                }
                if state.c + dc < hi {
                    hi = state.c + dc;
                }
            }
            DelayStep::Free => {}
        }
        if lo > state.c || hi < state.c || lo >= hi {
            // incumbent must stay feasible in its own step program
            (state.c, state.c)
        } else {
            (lo, hi)
        }
    };

    for attempt in 0..=cfg.max_shrinks {
        let mut b = ConicBuilder::<T>::new();
        let dc = b.add_var();
        let dk_vars = b.add_vars(m * n);
        let dl_vars = b.add_vars(param.n_params());
        let alpha = b.add_var();

        // objective: Tr((L* + dL) C~*^T C~*) + (rho/2) |K* + dK - U*|^2
        let ctc = lp.c_tilde.transpose() * &lp.c_tilde;
        for (offset, var) in dl_vars.clone().enumerate() {
            let coeff = param.coeff(offset, ext);
            let val = (&coeff * &ctc).trace();
            if val != T::zero() {
                b.obj_linear(var, val);
            }
        }
        let anchor = &state.k - ctx.u_star;
        for (offset, var) in dk_vars.clone().enumerate() {
            let (i, j) = (offset % m, offset / m);
            b.obj_quad(var, var, ctx.rho);
            b.obj_linear(var, ctx.rho * anchor[(i, j)]);
        }

        let mut lmi = MatExpr::new(lmi_const.clone());
        for (offset, var) in dl_vars.clone().enumerate() {
            let s = param.coeff(offset, ext);
            lmi.add_term(var, &lp.a_cl * &s + &s * lp.a_cl.transpose());
        }
        // dc coefficient: A_c L* + L* A_c^T with A_c = -B~ K*_d S_slope^T
        let a_c = -(&lp.cal_b * &lp.k_d * s_slope.transpose());
        lmi.add_term(dc, &a_c * &state.l + &state.l * a_c.transpose());
        // per gain entry: A_1 = -B~ e_i w_ij^T at the baseline selector
        let mut dk_ctilde_coeffs: Vec<(usize, Mat<T>)> = Vec::new();
        let mut dk_d_coeffs: Vec<(usize, Mat<T>)> = Vec::new();
        for (offset, var) in dk_vars.clone().enumerate() {
            let (i, j) = (offset % m, offset / m);
            let w_col = selector_column(ctx.masks, &gamma_nu_star, n, i, j);
            let b_i = lp.cal_b.column(i).clone_owned();
            let lw = &state.l * &w_col;
            let coeff = -(&b_i * lw.transpose() + &lw * b_i.transpose());
            lmi.add_term(var, coeff);
            let mut dct = Mat::<T>::zeros(m, ext);
            dct.row_mut(i).copy_from(&w_col.transpose());
            dk_ctilde_coeffs.push((var, dct));
            // direct-path share for the |B~ dK_d| cones
            if ctx.masks.i_d()[(i, j)] != T::zero() {
                let mut dkd = Mat::<T>::zeros(m, n);
                dkd[(i, j)] = T::one();
                dk_d_coeffs.push((var, dkd));
            }
        }
        {
            let mut eye_term = Mat::<T>::zeros(ext, ext);
            eye_term.fill_diagonal(T::one());
            lmi.add_term(alpha, eye_term);
        }
        b.psd_leq_zero(&lmi);

        // ratio box (possibly shrunk around the incumbent)
        let (mut lo, mut hi) = c_bounds_base;
        if let Some(hw) = c_halfwidth {
            if state.c - hw > lo {
                lo = state.c - hw;
            }
            if state.c + hw < hi {
                hi = state.c + hw;
            }
        }
        b.bounds(&LinExpr::var(dc).plus(state.c), lo, hi);

        let frob_rows = param.frobenius_rows(&dl_vars);
        b.soc(&LinExpr::constant(beta), &frob_rows);

        // alpha >= 2 beta t1 + (2 beta S + 2 S |L*|_F) t2 + 2 beta t3
        // t1 = |B~ dC~|, t2 = |B~ dK_d|, t3 = |B~ K*_d S_slope^T| |dc|
        let t1 = b.add_var();
        let b_dct_rows: Vec<(usize, Mat<T>)> = dk_ctilde_coeffs
            .iter()
            .map(|(var, dct)| (*var, (&lp.cal_b * dct).view((ext - n, 0), (n, ext)).clone_owned()))
            .collect();
        b.soc(&LinExpr::var(t1), &frobenius_soc_rows(&b_dct_rows, n, ext));

        let t2 = b.add_var();
        let b_dkd_rows: Vec<(usize, Mat<T>)> = dk_d_coeffs
            .iter()
            .map(|(var, dkd)| (*var, (&lp.cal_b * dkd).view((ext - n, 0), (n, n)).clone_owned()))
            .collect();
        b.soc(&LinExpr::var(t2), &frobenius_soc_rows(&b_dkd_rows, n, n));

        let t3 = b.add_var();
        let c_norm = (&lp.cal_b * &lp.k_d * s_slope.transpose()).norm();
        b.nonneg(&LinExpr::var(t3).plus_var(dc, -c_norm));
        b.nonneg(&LinExpr::var(t3).plus_var(dc, c_norm));

        let two = r::<T>(2.0);
        b.nonneg(
            &LinExpr::var(alpha)
                .plus_var(t1, -two * beta)
                .plus_var(t2, -(two * beta * s_bound + two * s_bound * state.l.norm()))
                .plus_var(t3, -two * beta),
        );
        b.nonneg(&LinExpr::var(alpha));

        let sol = match b.solve(cfg.solver_tol, cfg.solver_iters) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) if attempt < cfg.max_shrinks => {
                beta *= r::<T>(0.5);
                let hw = c_halfwidth.unwrap_or((c_bounds_base.1 - c_bounds_base.0) * r::<T>(0.5));
                c_halfwidth = Some(hw * r::<T>(0.5));
                continue;
            }
            Err(e) => return Err(e),
        };

        let c_new = state.c + sol.x[dc];
        let mut k_new = state.k.clone();
        for (offset, var) in dk_vars.clone().enumerate() {
            k_new[(offset % m, offset / m)] += sol.x[var];
        }
        let dl_coords: Vec<T> = dl_vars.clone().map(|v| sol.x[v]).collect();
        let cert = &state.l + param.materialize(&dl_coords, ext);

        if verify_step(ctx, state, &k_new, state.tau_o, c_new, step, quad_c.as_ref()).is_ok() {
            return Ok(SdpOutcome {
                k: k_new,
                tau_o: state.tau_o,
                c: c_new,
                cert,
                alpha: sol.x[alpha],
                shrinks: attempt,
                used_shortcut: false,
            });
        }
        beta *= r::<T>(0.5);
        let hw = c_halfwidth.unwrap_or((c_bounds_base.1 - c_bounds_base.0) * r::<T>(0.5));
        c_halfwidth = Some(hw * r::<T>(0.5));
    }
    Err(Error::Verification {
        attempts: cfg.max_shrinks + 1,
        reason: "(K, c) step failed independent re-verification".into(),
    })
}

/// Independent re-verification of a proposed tuple: direct eigenvalue test
/// plus the active delay-step constraint evaluated exactly.
pub fn verify_step<T: Real>(
    ctx: &OuterContext<'_, T>,
    state: &OuterState<T>,
    k: &Mat<T>,
    tau_o: T,
    c: T,
    step: &DelayStep<T>,
    quad: Option<&crate::netcost::DeltaQuadratic<T>>,
) -> Result<()> {
    let lp = build_closed_loop(ctx.plant, k, ctx.masks, tau_o, c, ctx.basis)?;
    let abscissa = spectral_abscissa(&lp.a_cl)?;
    if abscissa >= r::<T>(HURWITZ_MARGIN) {
        return Err(Error::Unstable { abscissa: abscissa.to_f64_lossy() });
    }
    match step {
        DelayStep::Bandwidth => {
            let q = quad.ok_or_else(|| Error::Config("bandwidth step requires a model".into()))?;
            let x = match q.variable() {
                crate::netcost::DeltaVariable::Ratio => c,
                crate::netcost::DeltaVariable::RoundTrip => tau_o,
            };
            let delta = q.eval_delta(x);
            if delta > r::<T>(DELTA_SBW_SLACK) {
                return Err(Error::Infeasible(format!(
                    "delta S_BW = {} > 0 at the returned design",
                    delta.to_f64_lossy()
                )));
            }
            // belt and braces: the true cost still fits the budget
            if let Some(model) = ctx.bw {
                let direct = sbw(c * tau_o, tau_o, &state.counts, model)?;
                if direct > model.s_b + r::<T>(DELTA_SBW_SLACK) {
                    return Err(Error::Infeasible("budget exceeded at returned design".into()));
                }
            }
        }
        DelayStep::EpsilonBall { epsilon, .. } => {
            let moved = (c * tau_o - state.c * state.tau_o) + (tau_o - state.tau_o);
            if moved.abs() > *epsilon + r::<T>(1e-9) {
                return Err(Error::Infeasible("exploration ball violated".into()));
            }
        }
        DelayStep::Free => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_unrank_order() {
        // column-major upper triangle: (0,0), (0,1), (1,1), (0,2), ...
        assert_eq!(triangle_unrank(0), (0, 0));
        assert_eq!(triangle_unrank(1), (0, 1));
        assert_eq!(triangle_unrank(2), (1, 1));
        assert_eq!(triangle_unrank(3), (0, 2));
        assert_eq!(triangle_unrank(5), (2, 2));
    }

    #[test]
    fn orthonormal_basis_drops_dependent() {
        let a = Mat::<f64>::identity(3, 3);
        let b = Mat::<f64>::identity(3, 3) * 2.0;
        let mut c = Mat::<f64>::zeros(3, 3);
        c[(0, 1)] = 1.0;
        let basis = orthonormal_basis(vec![a, b, c]);
        assert_eq!(basis.len(), 2);
        assert!((basis[0].norm() - 1.0).abs() < 1e-12);
        assert!(basis[0].dot(&basis[1]).abs() < 1e-12);
        // symmetrized
        assert!((basis[1].clone() - basis[1].transpose()).norm() < 1e-12);
    }
}
