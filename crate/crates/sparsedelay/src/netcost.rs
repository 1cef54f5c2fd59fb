//! Bandwidth/delay cost model.
//!
//! Transmission delays are inversely proportional to per-channel bandwidth,
//! so renting less bandwidth means larger delays. The total rental cost
//!
//! `S_BW = 2 m_cp n_cp / (tau_d - tau_dpr) + m_cc n_cc / (tau_c - tau_cpr)`
//!
//! must stay within the budget `S_b`. Perturbing one delay variable at a
//! time around a feasible baseline turns `S_BW - S_BW* <= 0` into a
//! quadratic inequality whose coefficients this module provides.

use crate::error::{Error, Result};
use crate::model::Topology;
use crate::scalar::{r, ri, Real};
use crate::Mat;

/// Entries below this magnitude count as structural zeros when deriving
/// channel counts from a gain matrix.
pub const ZERO_TOL: f64 = 1e-9;

/// Pricing and propagation data of the two-layer network.
#[derive(Debug, Clone, Copy)]
pub struct BandwidthModel<T: Real> {
    /// Dollar cost per LAN (inter-layer) bandwidth unit.
    pub m_cp: T,
    /// Dollar cost per SDN (intra-layer) bandwidth unit.
    pub m_cc: T,
    /// Delay per channel per inverse bandwidth.
    pub kappa: T,
    /// Inter-layer propagation delay floor (seconds).
    pub tau_dpr: T,
    /// Intra-layer propagation delay floor (seconds).
    pub tau_cpr: T,
    /// Budget on `S_BW`.
    pub s_b: T,
}

impl<T: Real> BandwidthModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.m_cp < T::zero() || self.m_cc < T::zero() {
            return Err(Error::Config("bandwidth unit costs must be nonnegative".into()));
        }
        if self.kappa <= T::zero() {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if self.tau_dpr < T::zero() || self.tau_cpr < T::zero() {
            return Err(Error::Config("propagation delays must be nonnegative".into()));
        }
        if self.s_b <= T::zero() {
            return Err(Error::Config("bandwidth budget must be positive".into()));
        }
        Ok(())
    }
}

/// Channel counts derived from a gain's sparsity pattern on a topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelCounts {
    pub n_row: usize,
    pub n_col: usize,
    /// Inter-layer channels: nonzero rows plus nonzero columns of `K`.
    pub n_cp: usize,
    /// Intra-layer channels: `n^T n_off` over the block matrix of `(K, T)`.
    pub n_cc: usize,
    /// Per-CN count of nonzero off-diagonal blocks in its block column.
    pub n_off: Vec<usize>,
}

impl ChannelCounts {
    /// Total number of intra-layer links (`sum n_off`), as distinct from the
    /// channel count `n_cc` that weights each link by the states it carries.
    pub fn intra_links(&self) -> usize {
        self.n_off.iter().sum()
    }
}

/// Counts channels for gain `K` under topology `T`.
pub fn channel_counts<T: Real>(k: &Mat<T>, topology: &Topology<T>) -> Result<ChannelCounts> {
    let (m, n) = (topology.m(), topology.n());
    if k.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "gain is {:?} but topology expects {m}x{n}",
            k.shape()
        )));
    }
    let tol = r::<T>(ZERO_TOL);
    let nz = |v: T| v.abs() > tol;
    let n_row = (0..m).filter(|&i| (0..n).any(|j| nz(k[(i, j)]))).count();
    let n_col = (0..n).filter(|&j| (0..m).any(|i| nz(k[(i, j)]))).count();

    let n_cn = topology.n_cn();
    let mut n_off = vec![0usize; n_cn];
    for i in 0..n_cn {
        let states = topology.states_of(i);
        for j in 0..n_cn {
            if i == j {
                continue;
            }
            let block_nonzero = topology
                .inputs_of(j)
                .iter()
                .any(|&u| states.iter().any(|&x| nz(k[(u, x)])));
            if block_nonzero {
                n_off[i] += 1;
            }
        }
    }
    let n_cc = topology
        .n_sizes()
        .iter()
        .zip(n_off.iter())
        .map(|(&ni, &off)| ni * off)
        .sum();
    Ok(ChannelCounts { n_row, n_col, n_cp: n_row + n_col, n_cc, n_off })
}

/// Transmission plus propagation delays implied by bandwidth allocations:
/// `tau_c = kappa n_cc / b_cc + tau_cpr`, `tau_d = 2 kappa n_cp / b_cp + tau_dpr`.
pub fn delays_from_bandwidth<T: Real>(
    counts: &ChannelCounts,
    model: &BandwidthModel<T>,
    b_cp: T,
    b_cc: T,
) -> Result<(T, T)> {
    if b_cp <= T::zero() || b_cc <= T::zero() {
        return Err(Error::InfeasibleDelay("bandwidths must be positive".into()));
    }
    let tau_d = r::<T>(2.0) * model.kappa * ri::<T>(counts.n_cp) / b_cp + model.tau_dpr;
    let tau_c = model.kappa * ri::<T>(counts.n_cc) / b_cc + model.tau_cpr;
    Ok((tau_d, tau_c))
}

/// Bandwidth cost of a delay pair at given channel counts.
///
/// Errors when either transmission delay sits at or below zero (the cost
/// pole at the propagation floor).
pub fn sbw<T: Real>(
    tau_d: T,
    tau_o: T,
    counts: &ChannelCounts,
    model: &BandwidthModel<T>,
) -> Result<T> {
    let tau_dtr = tau_d - model.tau_dpr;
    let tau_ctr = tau_o - tau_d - model.tau_cpr;
    let mut cost = T::zero();
    if counts.n_cp > 0 {
        if tau_dtr <= T::zero() {
            return Err(Error::InfeasibleDelay(format!(
                "tau_d = {} at or below the propagation floor {}",
                tau_d.to_f64_lossy(),
                model.tau_dpr.to_f64_lossy()
            )));
        }
        cost += r::<T>(2.0) * model.m_cp * ri::<T>(counts.n_cp) / tau_dtr;
    }
    if counts.n_cc > 0 {
        if tau_ctr <= T::zero() {
            return Err(Error::InfeasibleDelay(format!(
                "tau_c = {} at or below the propagation floor {}",
                (tau_o - tau_d).to_f64_lossy(),
                model.tau_cpr.to_f64_lossy()
            )));
        }
        cost += model.m_cc * ri::<T>(counts.n_cc) / tau_ctr;
    }
    Ok(cost)
}

/// Per-design cost ledger row.
#[derive(Debug, Clone, Copy)]
pub struct CostBreakdown<T: Real> {
    pub n_cp: usize,
    pub n_cc: usize,
    pub tau_dtr: T,
    pub tau_ctr: T,
    pub s_bw: T,
}

impl<T: Real> CostBreakdown<T> {
    pub fn new(counts: &ChannelCounts, tau_d: T, tau_o: T, model: &BandwidthModel<T>) -> Result<Self> {
        let s_bw = sbw(tau_d, tau_o, counts, model)?;
        Ok(Self {
            n_cp: counts.n_cp,
            n_cc: counts.n_cc,
            tau_dtr: tau_d - model.tau_dpr,
            tau_ctr: tau_o - tau_d - model.tau_cpr,
            s_bw,
        })
    }
}

/// A feasible anchor design for the perturbation quadratics.
#[derive(Debug, Clone, Copy)]
pub struct SbwBaseline<T: Real> {
    pub tau_o: T,
    pub c: T,
    pub n_cp: usize,
    pub n_cc: usize,
    pub s_bw: T,
}

impl<T: Real> SbwBaseline<T> {
    pub fn from_design(
        counts: &ChannelCounts,
        tau_o: T,
        c: T,
        model: &BandwidthModel<T>,
    ) -> Result<Self> {
        let s_bw = sbw(c * tau_o, tau_o, counts, model)?;
        if s_bw > model.s_b {
            return Err(Error::InfeasibleDelay(format!(
                "baseline cost {} exceeds budget {}",
                s_bw.to_f64_lossy(),
                model.s_b.to_f64_lossy()
            )));
        }
        Ok(Self { tau_o, c, n_cp: counts.n_cp, n_cc: counts.n_cc, s_bw })
    }
}

/// Which delay variable a [`DeltaQuadratic`] perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaVariable {
    Ratio,
    RoundTrip,
}

/// Quadratic form of the cost perturbation `delta S_BW = S_BW - S_BW*`.
///
/// `delta(x) = numerator(x) / denominator(x)` with the denominator positive
/// on the feasible domain; the `printed` coefficients are `numerator -
/// denominator`, whose leading term carries the definite sign used by the
/// convexity/concavity arguments.
#[derive(Debug, Clone, Copy)]
pub struct DeltaQuadratic<T: Real> {
    variable: DeltaVariable,
    printed: [T; 3],
    numerator: [T; 3],
    denominator: [T; 3],
    domain: (T, T),
    baseline: T,
}

fn eval_poly<T: Real>(c: &[T; 3], x: T) -> T {
    (c[0] * x + c[1]) * x + c[2]
}

/// Numerically stable roots of `a x^2 + b x + c`, ascending.
fn quadratic_roots<T: Real>(a: T, b: T, c: T) -> Option<(T, T)> {
    let disc = b * b - r::<T>(4.0) * a * c;
    if disc < T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq) * r::<T>(0.5);
    let (x1, x2) = if q == T::zero() { (T::zero(), T::zero()) } else { (q / a, c / q) };
    Some(if x1 <= x2 { (x1, x2) } else { (x2, x1) })
}

impl<T: Real> DeltaQuadratic<T> {
    /// Coefficients `(p - p', q - q', r - r')` in descending powers, exactly
    /// as derived for the perturbation statement.
    pub fn printed_coeffs(&self) -> [T; 3] {
        self.printed
    }

    pub fn variable(&self) -> DeltaVariable {
        self.variable
    }

    /// Open feasible domain of the perturbed variable.
    pub fn domain(&self) -> (T, T) {
        self.domain
    }

    pub fn baseline(&self) -> T {
        self.baseline
    }

    /// Exact `delta S_BW` at `x` (rational form; the baseline is a root).
    pub fn eval_delta(&self, x: T) -> T {
        eval_poly(&self.numerator, x) / eval_poly(&self.denominator, x)
    }

    /// Interval of the domain where `delta <= 0`.
    ///
    /// For the ratio form (convex numerator) this is a closed interval
    /// containing the baseline; for the round-trip form (concave numerator)
    /// it is the ray from the baseline to the upper domain end.
    pub fn feasible_region(&self) -> Result<(T, T)> {
        let (lo, hi) = self.domain;
        let (a, b, c) = (self.numerator[0], self.numerator[1], self.numerator[2]);
        let roots = quadratic_roots(a, b, c);
        match self.variable {
            DeltaVariable::Ratio => {
                let (r1, r2) =
                    roots.ok_or_else(|| Error::Infeasible("ratio quadratic has no roots".into()))?;
                let left = if r1 > lo { r1 } else { lo };
                let right = if r2 < hi { r2 } else { hi };
                if left >= right {
                    return Err(Error::Infeasible("empty feasible ratio interval".into()));
                }
                Ok((left, right))
            }
            DeltaVariable::RoundTrip => {
                let (_, r2) = roots
                    .ok_or_else(|| Error::Infeasible("round-trip quadratic has no roots".into()))?;
                let left = if r2 > lo { r2 } else { lo };
                Ok((left, T::max_value().unwrap_or_else(T::one)))
            }
        }
    }
}

/// Quadratic for perturbing the ratio `c` at fixed `tau_o = tau_o*`.
/// The printed leading coefficient is `(S_BW* + 1) tau_o*^2 > 0`.
pub fn delta_sbw_c_coeffs<T: Real>(
    base: &SbwBaseline<T>,
    model: &BandwidthModel<T>,
) -> DeltaQuadratic<T> {
    let s = base.s_bw;
    let ta = base.tau_o;
    let (dpr, cpr) = (model.tau_dpr, model.tau_cpr);
    let a_cp = r::<T>(2.0) * model.m_cp * ri::<T>(base.n_cp);
    let a_cc = model.m_cc * ri::<T>(base.n_cc);

    let p1 = s * ta * ta;
    let q1 = ta * (-s * (ta + dpr - cpr) - a_cp + a_cc);
    let r1 = (s * dpr + a_cp) * (ta - cpr) - a_cc * dpr;
    let p2 = -ta * ta;
    let q2 = ta * (ta + dpr - cpr);
    let r2 = -dpr * (ta - cpr);

    DeltaQuadratic {
        variable: DeltaVariable::Ratio,
        printed: [p1 - p2, q1 - q2, r1 - r2],
        numerator: [p1, q1, r1],
        denominator: [p2, q2, r2],
        domain: (dpr / ta, T::one() - cpr / ta),
        baseline: base.c,
    }
}

/// Quadratic for perturbing `tau_o` at fixed `c = c*` (the perturbation
/// keeps the ratio constant, which couples the two transmission delays).
/// The printed leading coefficient is `-(S_BW* + 1) c* (1 - c*) < 0`.
pub fn delta_sbw_tau_coeffs<T: Real>(
    base: &SbwBaseline<T>,
    model: &BandwidthModel<T>,
) -> DeltaQuadratic<T> {
    let s = base.s_bw;
    let c = base.c;
    let cb = T::one() - c;
    let (dpr, cpr) = (model.tau_dpr, model.tau_cpr);
    let a_cp = r::<T>(2.0) * model.m_cp * ri::<T>(base.n_cp);
    let a_cc = model.m_cc * ri::<T>(base.n_cc);

    let p3 = -s * c * cb;
    let q3 = a_cp * cb + a_cc * c + s * (c * cpr + cb * dpr);
    let r3 = -(s * dpr * cpr + a_cp * cpr + a_cc * dpr);
    let p4 = c * cb;
    let q4 = -(c * cpr + cb * dpr);
    let r4 = dpr * cpr;

    let lo_d = dpr / c;
    let lo_c = cpr / cb;
    let lo = if lo_d > lo_c { lo_d } else { lo_c };
    DeltaQuadratic {
        variable: DeltaVariable::RoundTrip,
        printed: [p3 - p4, q3 - q4, r3 - r4],
        numerator: [p3, q3, r3],
        denominator: [p4, q4, r4],
        domain: (lo, T::max_value().unwrap_or_else(T::one)),
        baseline: base.tau_o,
    }
}

/// Vertex `-b / (2a)` of the printed ratio quadratic, clipped into the open
/// feasible interval of the ratio.
pub fn c_min<T: Real>(quad: &DeltaQuadratic<T>) -> Result<T> {
    if quad.variable != DeltaVariable::Ratio {
        return Err(Error::Config("c_min expects the ratio-form quadratic".into()));
    }
    let [a, b, _] = quad.printed;
    if a <= T::zero() {
        return Err(Error::Config("ratio quadratic must be convex".into()));
    }
    let (lo, hi) = quad.domain;
    if lo >= hi {
        return Err(Error::Infeasible("empty feasible ratio interval".into()));
    }
    let vertex = -b / (r::<T>(2.0) * a);
    let margin = (hi - lo) * r::<T>(1e-6);
    let clipped = if vertex <= lo {
        lo + margin
    } else if vertex >= hi {
        hi - margin
    } else {
        vertex
    };
    Ok(clipped)
}

/// Worked seven-state / six-input sparsity fixture shared by tests.
#[cfg(test)]
pub(crate) mod tests_support {
    use crate::Mat;

    /// Entries named a..s placed by the block display, valued 1..19.
    pub fn example1_gain() -> Mat<f64> {
        let support: [&[usize]; 6] = [
            &[0, 3, 5, 6],
            &[1, 2, 4, 6],
            &[2, 3, 5],
            &[2, 3, 6],
            &[3, 4, 5],
            &[3, 5],
        ];
        let mut k = Mat::<f64>::zeros(6, 7);
        let mut val = 1.0;
        for (i, cols) in support.iter().enumerate() {
            for &j in cols.iter() {
                k[(i, j)] = val;
                val += 1.0;
            }
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::example1_gain;
    use super::*;
    use crate::model::Topology;
    use approx::assert_relative_eq;

    fn model() -> BandwidthModel<f64> {
        BandwidthModel {
            m_cp: 84.0,
            m_cc: 81.0,
            kappa: 1.0,
            tau_dpr: 1e-4,
            tau_cpr: 1e-4,
            s_b: 1e9,
        }
    }

    fn example1_topology() -> Topology<f64> {
        Topology::new((0..7).collect(), (0..6).collect(), vec![1, 2, 1, 1, 1, 1], vec![1; 6])
            .unwrap()
    }

    fn example2_topology() -> Topology<f64> {
        Topology::new(
            vec![1, 0, 4, 6, 2, 3, 5],
            vec![1, 0, 4, 3, 2, 5],
            vec![1, 1, 1, 1, 1, 2],
            vec![1; 6],
        )
        .unwrap()
    }

    #[test]
    fn example1_counts() {
        let counts = channel_counts(&example1_gain(), &example1_topology()).unwrap();
        assert_eq!(counts.n_off, vec![0, 2, 4, 2, 3, 3]);
        assert_eq!(counts.intra_links(), 14);
        assert_eq!(counts.n_cp, 6 + 7);
        assert_eq!(counts.n_cc, 16); // [1,2,1,1,1,1] . [0,2,4,2,3,3]
    }

    #[test]
    fn example2_counts_same_gain() {
        let counts = channel_counts(&example1_gain(), &example2_topology()).unwrap();
        assert_eq!(counts.n_off, vec![0, 0, 1, 2, 2, 4]);
        assert_eq!(counts.intra_links(), 9);
        // inter-layer side only depends on the gain
        assert_eq!(counts.n_cp, 13);
    }

    #[test]
    fn zero_gain_counts() {
        let k = Mat::<f64>::zeros(6, 7);
        let counts = channel_counts(&k, &example1_topology()).unwrap();
        assert_eq!(counts.n_cp, 0);
        assert_eq!(counts.n_cc, 0);
        assert!(counts.n_off.iter().all(|&v| v == 0));
    }

    #[test]
    fn delays_from_bandwidth_basics() {
        let m = model();
        let counts = ChannelCounts { n_row: 0, n_col: 0, n_cp: 0, n_cc: 0, n_off: vec![] };
        let (_, tau_c) = delays_from_bandwidth(&counts, &m, 10.0, 100.0).unwrap();
        assert_relative_eq!(tau_c, m.tau_cpr);

        let counts = channel_counts(&example1_gain(), &example1_topology()).unwrap();
        let (_, tau_c1) = delays_from_bandwidth(&counts, &m, 10.0, 100.0).unwrap();
        let (_, tau_c2) = delays_from_bandwidth(&counts, &m, 10.0, 200.0).unwrap();
        assert_relative_eq!(tau_c1 - m.tau_cpr, 16.0 / 100.0, epsilon = 1e-12);
        assert_relative_eq!((tau_c2 - m.tau_cpr) * 2.0, tau_c1 - m.tau_cpr, epsilon = 1e-12);
        assert!(delays_from_bandwidth(&counts, &m, 0.0, 1.0).is_err());
    }

    #[test]
    fn sbw_zero_and_pole() {
        let m = model();
        let empty = ChannelCounts { n_row: 0, n_col: 0, n_cp: 0, n_cc: 0, n_off: vec![] };
        assert_relative_eq!(sbw(0.01, 0.05, &empty, &m).unwrap(), 0.0);

        let counts = ChannelCounts { n_row: 2, n_col: 2, n_cp: 4, n_cc: 3, n_off: vec![1, 2] };
        let near_pole = sbw(m.tau_dpr + 1e-9, 1.0, &counts, &m).unwrap();
        assert!(near_pole > 1e6);
        assert!(sbw(m.tau_dpr, 1.0, &counts, &m).is_err());
    }

    #[test]
    fn sbw_decreasing_in_tau_o() {
        let m = model();
        let counts = ChannelCounts { n_row: 3, n_col: 4, n_cp: 7, n_cc: 5, n_off: vec![2, 3] };
        let c = 0.4;
        let mut prev = f64::INFINITY;
        for i in 1..=10 {
            let tau_o = 0.05 * i as f64;
            let v = sbw(c * tau_o, tau_o, &counts, &m).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn cost_breakdown_reproduces_sbw() {
        let m = model();
        let counts = ChannelCounts { n_row: 3, n_col: 4, n_cp: 7, n_cc: 5, n_off: vec![2, 3] };
        let bd = CostBreakdown::new(&counts, 0.04, 0.1, &m).unwrap();
        let recombined = 2.0 * m.m_cp * bd.n_cp as f64 / bd.tau_dtr + m.m_cc * bd.n_cc as f64 / bd.tau_ctr;
        assert!((bd.s_bw - recombined).abs() <= 1e-10 * recombined.abs());
    }

    fn baseline() -> (SbwBaseline<f64>, BandwidthModel<f64>) {
        let m = model();
        let counts = ChannelCounts { n_row: 5, n_col: 6, n_cp: 11, n_cc: 9, n_off: vec![4, 5] };
        let base = SbwBaseline::from_design(&counts, 0.12, 0.45, &m).unwrap();
        (base, m)
    }

    #[test]
    fn ratio_quadratic_baseline_is_root() {
        let (base, m) = baseline();
        let quad = delta_sbw_c_coeffs(&base, &m);
        assert!(quad.eval_delta(base.c).abs() < 1e-9);
        let lead = quad.printed_coeffs()[0];
        assert_relative_eq!(lead, (base.s_bw + 1.0) * base.tau_o * base.tau_o, max_relative = 1e-12);
        assert!(lead > 0.0);
    }

    #[test]
    fn ratio_quadratic_matches_direct_cost() {
        let (base, m) = baseline();
        let quad = delta_sbw_c_coeffs(&base, &m);
        let counts =
            ChannelCounts { n_row: 5, n_col: 6, n_cp: base.n_cp, n_cc: base.n_cc, n_off: vec![] };
        let (lo, hi) = quad.domain();
        for i in 1..10 {
            let c = lo + (hi - lo) * i as f64 / 10.0;
            let direct = sbw(c * base.tau_o, base.tau_o, &counts, &m).unwrap() - base.s_bw;
            assert_relative_eq!(quad.eval_delta(c), direct, max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn roundtrip_quadratic_baseline_and_sign() {
        let (base, m) = baseline();
        let quad = delta_sbw_tau_coeffs(&base, &m);
        assert!(quad.eval_delta(base.tau_o).abs() < 1e-9);
        let lead = quad.printed_coeffs()[0];
        let expect = -(base.s_bw + 1.0) * base.c * (1.0 - base.c);
        assert_relative_eq!(lead, expect, max_relative = 1e-12);
        assert!(lead < 0.0);

        // ray: delta <= 0 exactly for tau_o >= tau_o*
        let (ray_lo, _) = quad.feasible_region().unwrap();
        assert_relative_eq!(ray_lo, base.tau_o, max_relative = 1e-9);
        let counts =
            ChannelCounts { n_row: 5, n_col: 6, n_cp: base.n_cp, n_cc: base.n_cc, n_off: vec![] };
        for i in 0..10 {
            let tau = base.tau_o * (1.0 + 0.15 * i as f64);
            let direct = sbw(base.c * tau, tau, &counts, &m).unwrap() - base.s_bw;
            assert_relative_eq!(quad.eval_delta(tau), direct, max_relative = 1e-8, epsilon = 1e-8);
            assert!(quad.eval_delta(tau) <= 1e-12);
        }
    }

    #[test]
    fn c_min_vertex_and_clipping() {
        let synthetic = DeltaQuadratic::<f64> {
            variable: DeltaVariable::Ratio,
            printed: [1.0, -1.0, 0.0],
            numerator: [1.0, -1.0, 0.0],
            denominator: [0.0, 0.0, 1.0],
            domain: (0.0, 1.0),
            baseline: 0.3,
        };
        assert_relative_eq!(c_min(&synthetic).unwrap(), 0.5);

        let clipped_case = DeltaQuadratic::<f64> { printed: [1.0, -4.0, 0.0], ..synthetic };
        let v = c_min(&clipped_case).unwrap();
        assert!(v < 1.0 && v > 0.999, "vertex 2.0 must clip to just inside the interval, got {v}");
    }

    #[test]
    fn budget_violation_rejected() {
        let mut m = model();
        m.s_b = 1.0;
        let counts = ChannelCounts { n_row: 5, n_col: 6, n_cp: 11, n_cc: 9, n_off: vec![] };
        assert!(SbwBaseline::from_design(&counts, 0.12, 0.45, &m).is_err());
    }
}
