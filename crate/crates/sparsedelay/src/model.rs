//! Plant data, cyber-layer topology, delay pair, and gain masks.
//!
//! A control node (CN) holds a subset of the plant states and a subset of the
//! control inputs. Entries of the gain matrix whose input and state live on
//! the same CN act through the inter-layer path only (delay `tau_d`); all
//! other entries additionally traverse the intra-layer network and act with
//! the full round-trip delay `tau_o`. The complementary binary masks `I_d`
//! and `I_o` encode that split.

use crate::error::{Error, Result};
use crate::scalar::{r, Real};
use crate::Mat;
use nalgebra::{Complex, DMatrix};

/// Open-loop LTI plant with quadratic performance weights.
///
/// `x' = A x + B u + B_w w`, performance output `z = [Q^{1/2} x; R^{1/2} u]`.
#[derive(Debug, Clone)]
pub struct PlantModel<T: Real> {
    a: Mat<T>,
    b: Mat<T>,
    b_w: Mat<T>,
    q: Mat<T>,
    rmat: Mat<T>,
    q_sqrt: Mat<T>,
    r_sqrt: Mat<T>,
}

/// Relative eigenvalue threshold for the PSD/PD checks on `Q` and `R`.
const DEFINITENESS_RTOL: f64 = 1e-10;

fn sym_check<T: Real>(m: &Mat<T>, what: &'static str) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    let scale = T::one() + m.norm();
    if asym > r::<T>(1e-8) * scale {
        return Err(Error::Dimension(format!("{what} must be symmetric")));
    }
    Ok(())
}

/// Symmetric square root with negative eigenvalues clamped to zero.
fn psd_sqrt<T: Real>(m: &Mat<T>) -> Mat<T> {
    let sym = (m + m.transpose()) * r::<T>(0.5);
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| if v > T::zero() { v.sqrt() } else { T::zero() });
    &eig.eigenvectors * Mat::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

impl<T: Real> PlantModel<T> {
    /// Validates dimensions and the definiteness of the weights:
    /// `Q` symmetric PSD, `R` symmetric PD, both up to a relative
    /// eigenvalue tolerance of `1e-10 * ||.||`.
    pub fn new(a: Mat<T>, b: Mat<T>, b_w: Mat<T>, q: Mat<T>, rmat: Mat<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square, got {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B must have {} rows, got {}", n, b.nrows())));
        }
        if b_w.nrows() != n {
            return Err(Error::Dimension(format!("B_w must have {} rows, got {}", n, b_w.nrows())));
        }
        let m = b.ncols();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension(format!("Q must be {n}x{n}")));
        }
        if rmat.nrows() != m || rmat.ncols() != m {
            return Err(Error::Dimension(format!("R must be {m}x{m}")));
        }
        sym_check(&q, "Q")?;
        sym_check(&rmat, "R")?;
        let q_tol = r::<T>(DEFINITENESS_RTOL) * q.norm();
        let r_tol = r::<T>(DEFINITENESS_RTOL) * rmat.norm();
        let q_min = ((&q + q.transpose()) * r::<T>(0.5)).symmetric_eigenvalues().min();
        if q_min < -q_tol {
            return Err(Error::NotDefinite {
                what: "Q",
                requirement: "positive semidefinite",
                eigenvalue: q_min.to_f64_lossy(),
            });
        }
        let r_min = ((&rmat + rmat.transpose()) * r::<T>(0.5)).symmetric_eigenvalues().min();
        if r_min <= r_tol {
            return Err(Error::NotDefinite {
                what: "R",
                requirement: "positive definite",
                eigenvalue: r_min.to_f64_lossy(),
            });
        }
        let q_sqrt = psd_sqrt(&q);
        let r_sqrt = psd_sqrt(&rmat);
        Ok(Self { a, b, b_w, q, rmat, q_sqrt, r_sqrt })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn a(&self) -> &Mat<T> {
        &self.a
    }

    pub fn b(&self) -> &Mat<T> {
        &self.b
    }

    pub fn b_w(&self) -> &Mat<T> {
        &self.b_w
    }

    pub fn q(&self) -> &Mat<T> {
        &self.q
    }

    pub fn r(&self) -> &Mat<T> {
        &self.rmat
    }

    pub fn q_sqrt(&self) -> &Mat<T> {
        &self.q_sqrt
    }

    pub fn r_sqrt(&self) -> &Mat<T> {
        &self.r_sqrt
    }
}

/// Physical geometry of the CN pool: pairwise link lengths in meters and the
/// signal propagation speed in the link medium.
#[derive(Debug, Clone, PartialEq)]
pub struct CnGeometry<T: Real> {
    link_lengths: Mat<T>,
    propagation_speed: T,
}

impl<T: Real> CnGeometry<T> {
    /// `link_lengths` must be square and symmetric with a zero diagonal.
    pub fn new(link_lengths: Mat<T>, propagation_speed: T) -> Result<Self> {
        if link_lengths.nrows() != link_lengths.ncols() {
            return Err(Error::Dimension("link length matrix must be square".into()));
        }
        sym_check(&link_lengths, "link length matrix")?;
        if propagation_speed <= T::zero() {
            return Err(Error::Config("propagation speed must be positive".into()));
        }
        Ok(Self { link_lengths, propagation_speed })
    }

    pub fn pool_size(&self) -> usize {
        self.link_lengths.nrows()
    }

    pub fn length(&self, i: usize, j: usize) -> T {
        self.link_lengths[(i, j)]
    }

    /// Propagation delay across the longest link among the given CNs.
    pub fn worst_case_delay(&self, cns: &[usize]) -> T {
        let mut worst = T::zero();
        for (idx, &i) in cns.iter().enumerate() {
            for &j in &cns[idx + 1..] {
                if self.link_lengths[(i, j)] > worst {
                    worst = self.link_lengths[(i, j)];
                }
            }
        }
        worst / self.propagation_speed
    }

    pub fn lengths(&self) -> &Mat<T> {
        &self.link_lengths
    }

    pub fn propagation_speed(&self) -> T {
        self.propagation_speed
    }
}

/// CN assignment tuple: which states and inputs each control node holds.
///
/// `x_order`/`u_order` list the (0-based) state/input indices in CN order;
/// the first `n_sizes[0]` entries of `x_order` belong to CN 0 and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T: Real> {
    x_order: Vec<usize>,
    u_order: Vec<usize>,
    n_sizes: Vec<usize>,
    m_sizes: Vec<usize>,
    /// Identity of each group's host in the CN pool (for geometry lookups).
    hosts: Vec<usize>,
    geometry: Option<CnGeometry<T>>,
}

impl<T: Real> Topology<T> {
    pub fn new(
        x_order: Vec<usize>,
        u_order: Vec<usize>,
        n_sizes: Vec<usize>,
        m_sizes: Vec<usize>,
    ) -> Result<Self> {
        let n_cn = n_sizes.len();
        let hosts = (0..n_cn).collect();
        Self::with_hosts(x_order, u_order, n_sizes, m_sizes, hosts, None)
    }

    pub fn with_hosts(
        x_order: Vec<usize>,
        u_order: Vec<usize>,
        n_sizes: Vec<usize>,
        m_sizes: Vec<usize>,
        hosts: Vec<usize>,
        geometry: Option<CnGeometry<T>>,
    ) -> Result<Self> {
        let n: usize = n_sizes.iter().sum();
        let m: usize = m_sizes.iter().sum();
        let n_cn = n_sizes.len();
        if m_sizes.len() != n_cn {
            return Err(Error::InvalidTopology(format!(
                "group counts disagree: {} state groups vs {} input groups",
                n_cn,
                m_sizes.len()
            )));
        }
        if n_cn < 2 || n_cn > n.min(m) {
            return Err(Error::InvalidTopology(format!(
                "CN count {} outside [2, min(m, n) = {}]",
                n_cn,
                n.min(m)
            )));
        }
        check_permutation(&x_order, n, "state")?;
        check_permutation(&u_order, m, "input")?;
        if let Some(&bad) = n_sizes.iter().find(|&&s| s == 0) {
            let _ = bad;
            return Err(Error::InvalidTopology("every CN must hold at least one state".into()));
        }
        if m_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidTopology("every CN must hold at least one input".into()));
        }
        if hosts.len() != n_cn {
            return Err(Error::InvalidTopology("one host CN id required per group".into()));
        }
        {
            let mut seen = vec![false; hosts.iter().copied().max().unwrap_or(0) + 1];
            for &h in &hosts {
                if seen[h] {
                    return Err(Error::InvalidTopology(format!("host CN {h} assigned twice")));
                }
                seen[h] = true;
            }
        }
        if let Some(geo) = &geometry {
            if let Some(&bad) = hosts.iter().find(|&&h| h >= geo.pool_size()) {
                return Err(Error::InvalidTopology(format!(
                    "host CN {bad} outside pool of size {}",
                    geo.pool_size()
                )));
            }
        }
        Ok(Self { x_order, u_order, n_sizes, m_sizes, hosts, geometry })
    }

    pub fn n(&self) -> usize {
        self.x_order.len()
    }

    pub fn m(&self) -> usize {
        self.u_order.len()
    }

    pub fn n_cn(&self) -> usize {
        self.n_sizes.len()
    }

    pub fn x_order(&self) -> &[usize] {
        &self.x_order
    }

    pub fn u_order(&self) -> &[usize] {
        &self.u_order
    }

    pub fn n_sizes(&self) -> &[usize] {
        &self.n_sizes
    }

    pub fn m_sizes(&self) -> &[usize] {
        &self.m_sizes
    }

    pub fn hosts(&self) -> &[usize] {
        &self.hosts
    }

    pub fn geometry(&self) -> Option<&CnGeometry<T>> {
        self.geometry.as_ref()
    }

    pub fn set_geometry(&mut self, geometry: Option<CnGeometry<T>>) {
        self.geometry = geometry;
    }

    /// States held by CN `q`, as indices into the plant state vector.
    pub fn states_of(&self, q: usize) -> &[usize] {
        let start: usize = self.n_sizes[..q].iter().sum();
        &self.x_order[start..start + self.n_sizes[q]]
    }

    /// Inputs held by CN `q`.
    pub fn inputs_of(&self, q: usize) -> &[usize] {
        let start: usize = self.m_sizes[..q].iter().sum();
        &self.u_order[start..start + self.m_sizes[q]]
    }

    /// Worst-case intra-layer propagation delay over the hosting CNs, or
    /// zero when no geometry is attached.
    pub fn tau_cpr(&self) -> T {
        match &self.geometry {
            Some(geo) => geo.worst_case_delay(&self.hosts),
            None => T::zero(),
        }
    }

    /// All-singleton topology in natural order (one state and one input per
    /// CN); requires `n == m >= 2`.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), (0..n).collect(), vec![1; n], vec![1; n])
    }
}

fn check_permutation(order: &[usize], len: usize, what: &str) -> Result<()> {
    if order.len() != len {
        return Err(Error::InvalidTopology(format!(
            "{what} order has {} entries, expected {len}",
            order.len()
        )));
    }
    let mut seen = vec![false; len];
    for &idx in order {
        if idx >= len {
            return Err(Error::InvalidTopology(format!("{what} index {idx} out of range 0..{len}")));
        }
        if seen[idx] {
            return Err(Error::InvalidTopology(format!("{what} index {idx} appears twice")));
        }
        seen[idx] = true;
    }
    // surjectivity follows from injectivity at equal length
    Ok(())
}

/// Round-trip delay `tau_o` and the ratio `c = tau_d / tau_o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPair<T: Real> {
    tau_o: T,
    c: T,
}

impl<T: Real> DelayPair<T> {
    pub fn new(tau_o: T, c: T) -> Result<Self> {
        if tau_o <= T::zero() {
            return Err(Error::InfeasibleDelay(format!(
                "tau_o must be positive, got {}",
                tau_o.to_f64_lossy()
            )));
        }
        if c <= T::zero() || c >= T::one() {
            return Err(Error::InfeasibleDelay(format!(
                "delay ratio c must lie strictly in (0, 1), got {}",
                c.to_f64_lossy()
            )));
        }
        Ok(Self { tau_o, c })
    }

    /// Checks `c` against the open interval imposed by propagation floors:
    /// `c in (tau_dpr / tau_o, 1 - tau_cpr / tau_o)`.
    pub fn check_propagation_floors(&self, tau_dpr: T, tau_cpr: T) -> Result<()> {
        let lo = tau_dpr / self.tau_o;
        let hi = T::one() - tau_cpr / self.tau_o;
        if self.c <= lo || self.c >= hi {
            return Err(Error::InfeasibleDelay(format!(
                "c = {} outside feasible interval ({}, {})",
                self.c.to_f64_lossy(),
                lo.to_f64_lossy(),
                hi.to_f64_lossy()
            )));
        }
        Ok(())
    }

    pub fn tau_o(&self) -> T {
        self.tau_o
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn tau_d(&self) -> T {
        self.c * self.tau_o
    }

    pub fn tau_c(&self) -> T {
        (T::one() - self.c) * self.tau_o
    }
}

/// Complementary binary masks splitting the gain into the inter-layer-only
/// path (`I_d`, delay `tau_d`) and the cross-CN path (`I_o`, delay `tau_o`).
#[derive(Debug, Clone, PartialEq)]
pub struct GainMasks<T: Real> {
    i_d: Mat<T>,
    i_o: Mat<T>,
}

impl<T: Real> GainMasks<T> {
    /// Builds masks from explicit 0/1 matrices, checking complementarity.
    pub fn new(i_d: Mat<T>, i_o: Mat<T>) -> Result<Self> {
        if i_d.shape() != i_o.shape() {
            return Err(Error::Dimension("mask shapes differ".into()));
        }
        for (d, o) in i_d.iter().zip(i_o.iter()) {
            let is_bin = |v: &T| *v == T::zero() || *v == T::one();
            if !is_bin(d) || !is_bin(o) || *d + *o != T::one() {
                return Err(Error::InvalidTopology(
                    "masks must be binary and complementary".into(),
                ));
            }
        }
        Ok(Self { i_d, i_o })
    }

    /// All entries routed through the inter-layer path (single-CN plant).
    pub fn all_direct(m: usize, n: usize) -> Self {
        Self {
            i_d: Mat::from_element(m, n, T::one()),
            i_o: Mat::zeros(m, n),
        }
    }

    pub fn i_d(&self) -> &Mat<T> {
        &self.i_d
    }

    pub fn i_o(&self) -> &Mat<T> {
        &self.i_o
    }

    pub fn input_dim(&self) -> usize {
        self.i_d.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.i_d.ncols()
    }

    /// Swapped masks: the direct path becomes the cross path and vice versa.
    pub fn swapped(&self) -> Self {
        Self { i_d: self.i_o.clone(), i_o: self.i_d.clone() }
    }
}

/// Builds the gain masks of a topology: `I_d(i, j) = 1` exactly when some CN
/// holds both input `i` and state `j`.
pub fn build_masks<T: Real>(topology: &Topology<T>) -> GainMasks<T> {
    let m = topology.m();
    let n = topology.n();
    let mut i_d = Mat::<T>::zeros(m, n);
    for q in 0..topology.n_cn() {
        for &u in topology.inputs_of(q) {
            for &x in topology.states_of(q) {
                i_d[(u, x)] = T::one();
            }
        }
    }
    let i_o = i_d.map(|v| T::one() - v);
    GainMasks { i_d, i_o }
}

/// Splits a gain along the masks: `K_d = K o I_d`, `K_o = K o I_o`.
pub fn split_gain<T: Real>(k: &Mat<T>, masks: &GainMasks<T>) -> Result<(Mat<T>, Mat<T>)> {
    if k.shape() != masks.i_d.shape() {
        return Err(Error::Dimension(format!(
            "gain is {:?} but masks are {:?}",
            k.shape(),
            masks.i_d.shape()
        )));
    }
    Ok((k.component_mul(&masks.i_d), k.component_mul(&masks.i_o)))
}

/// PBH-style diagnostic for stabilizability of `(A, B)` and detectability of
/// `(A, Q^{1/2})`. Always returns a report rather than an error.
#[derive(Debug, Clone)]
pub struct StabilizabilityReport {
    pub stabilizable: bool,
    pub detectable: bool,
    /// Closed right-half-plane eigenvalues failing the reachability rank test.
    pub uncontrollable_modes: Vec<(f64, f64)>,
    /// Closed right-half-plane eigenvalues failing the observability rank test.
    pub unobservable_modes: Vec<(f64, f64)>,
}

pub fn check_stabilizability<T: Real>(plant: &PlantModel<T>) -> StabilizabilityReport {
    let n = plant.state_dim();
    let eigs = plant.a().clone().complex_eigenvalues();
    let to_c = |mre: &Mat<T>| mre.map(|v| Complex::new(v, T::zero()));
    let a_c = to_c(plant.a());
    let b_c = to_c(plant.b());
    let c_c = to_c(plant.q_sqrt());
    let rank_tol = r::<T>(1e-9) * (T::one() + plant.a().norm());

    let mut uncontrollable = Vec::new();
    let mut unobservable = Vec::new();
    for lam in eigs.iter() {
        if lam.re < -rank_tol {
            continue; // only closed right-half-plane modes matter
        }
        // PBH reachability: rank [A - lam I, B] == n
        let mut pencil = DMatrix::<Complex<T>>::zeros(n, n + plant.input_dim());
        pencil.view_mut((0, 0), (n, n)).copy_from(&a_c);
        for i in 0..n {
            pencil[(i, i)] -= *lam;
        }
        pencil.view_mut((0, n), (n, plant.input_dim())).copy_from(&b_c);
        if pencil.rank(rank_tol) < n {
            uncontrollable.push((lam.re.to_f64_lossy(), lam.im.to_f64_lossy()));
        }
        // PBH observability: rank [A - lam I; Q^{1/2}] == n
        let mut pencil_o = DMatrix::<Complex<T>>::zeros(2 * n, n);
        pencil_o.view_mut((0, 0), (n, n)).copy_from(&a_c);
        for i in 0..n {
            pencil_o[(i, i)] -= *lam;
        }
        pencil_o.view_mut((n, 0), (n, n)).copy_from(&c_c);
        if pencil_o.rank(rank_tol) < n {
            unobservable.push((lam.re.to_f64_lossy(), lam.im.to_f64_lossy()));
        }
    }
    StabilizabilityReport {
        stabilizable: uncontrollable.is_empty(),
        detectable: unobservable.is_empty(),
        uncontrollable_modes: uncontrollable,
        unobservable_modes: unobservable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn example1_topology() -> Topology<f64> {
        Topology::new(
            (0..7).collect(),
            (0..6).collect(),
            vec![1, 2, 1, 1, 1, 1],
            vec![1; 6],
        )
        .unwrap()
    }

    #[test]
    fn masks_match_example1_pattern() {
        let masks = build_masks(&example1_topology());
        let expected_d = dmatrix![
            1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
            0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0;
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0;
            0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0
        ];
        assert_eq!(masks.i_d(), &expected_d);
        let ones = Mat::<f64>::from_element(6, 7, 1.0);
        assert_eq!(masks.i_d() + masks.i_o(), ones);
    }

    #[test]
    fn two_cn_identity_pattern() {
        let topo = Topology::<f64>::new(vec![0, 1], vec![0, 1], vec![1, 1], vec![1, 1]).unwrap();
        let masks = build_masks(&topo);
        assert_eq!(masks.i_d(), &Mat::<f64>::identity(2, 2));
        assert_eq!(masks.i_o(), &dmatrix![0.0, 1.0; 1.0, 0.0]);
    }

    #[test]
    fn split_gain_identity_pattern() {
        let topo = Topology::<f64>::new(vec![0, 1], vec![0, 1], vec![1, 1], vec![1, 1]).unwrap();
        let masks = build_masks(&topo);
        let k = Mat::<f64>::from_element(2, 2, 1.0);
        let (kd, ko) = split_gain(&k, &masks).unwrap();
        assert_eq!(kd, Mat::<f64>::identity(2, 2));
        assert_eq!(ko, dmatrix![0.0, 1.0; 1.0, 0.0]);
        assert_eq!(kd + ko, k);

        let z = Mat::<f64>::zeros(2, 2);
        let (zd, zo) = split_gain(&z, &masks).unwrap();
        assert_eq!(zd, z);
        assert_eq!(zo, z);
    }

    #[test]
    fn invalid_topology_names_offender() {
        let err = Topology::<f64>::new(vec![0, 0, 2], vec![0, 1, 2], vec![1, 1, 1], vec![1, 1, 1])
            .unwrap_err();
        assert!(err.to_string().contains("index 0 appears twice"), "{err}");
        let err =
            Topology::<f64>::new(vec![0, 1, 5], vec![0, 1, 2], vec![1, 1, 1], vec![1, 1, 1])
                .unwrap_err();
        assert!(err.to_string().contains("index 5 out of range"), "{err}");
    }

    #[test]
    fn cn_label_permutation_leaves_masks_unchanged() {
        // Swap CN block order without changing the assignment sets.
        let t1 = Topology::<f64>::new(
            vec![0, 1, 2, 3],
            vec![0, 1, 2],
            vec![2, 2],
            vec![1, 2],
        )
        .unwrap();
        let t2 = Topology::<f64>::new(
            vec![2, 3, 0, 1],
            vec![1, 2, 0],
            vec![2, 2],
            vec![2, 1],
        )
        .unwrap();
        assert_eq!(build_masks(&t1), build_masks(&t2));
    }

    #[test]
    fn plant_weight_checks() {
        let n2 = Mat::<f64>::identity(2, 2);
        let bad_r = dmatrix![1.0, 0.0; 0.0, 0.0];
        let err = PlantModel::new(n2.clone(), n2.clone(), n2.clone(), n2.clone(), bad_r)
            .unwrap_err();
        assert!(matches!(err, Error::NotDefinite { what: "R", .. }));
        let indefinite_q = dmatrix![1.0, 0.0; 0.0, -1.0];
        let err = PlantModel::new(n2.clone(), n2.clone(), n2.clone(), indefinite_q, n2.clone())
            .unwrap_err();
        assert!(matches!(err, Error::NotDefinite { what: "Q", .. }));
    }

    #[test]
    fn stabilizability_cases() {
        let eye = Mat::<f64>::identity(2, 2);
        let plant = PlantModel::new(-eye.clone(), eye.clone(), eye.clone(), eye.clone(), eye.clone())
            .unwrap();
        assert!(check_stabilizability(&plant).stabilizable);

        // Unreachable unstable mode: A = I, B = e_1.
        let b = dmatrix![1.0; 0.0];
        let rw = Mat::<f64>::identity(1, 1);
        let plant =
            PlantModel::new(eye.clone(), b, eye.clone(), eye.clone(), rw).unwrap();
        let report = check_stabilizability(&plant);
        assert!(!report.stabilizable);
        assert!(!report.uncontrollable_modes.is_empty());

        // Scalar zero plant with zero input.
        let z = Mat::<f64>::zeros(1, 1);
        let one = Mat::<f64>::identity(1, 1);
        let plant = PlantModel::new(z.clone(), z, one.clone(), one.clone(), one).unwrap();
        assert!(!check_stabilizability(&plant).stabilizable);
    }

    #[test]
    fn delay_pair_floors() {
        let d = DelayPair::<f64>::new(0.1, 0.5).unwrap();
        assert!((d.tau_d() - 0.05).abs() < 1e-15);
        assert!((d.tau_c() - 0.05).abs() < 1e-15);
        assert!(d.check_propagation_floors(1e-4, 1e-4).is_ok());
        assert!(d.check_propagation_floors(0.06, 0.0).is_err());
        assert!(DelayPair::<f64>::new(0.1, 1.0).is_err());
        assert!(DelayPair::<f64>::new(0.0, 0.5).is_err());
    }

    #[test]
    fn masks_generic_over_f32() {
        let topo = Topology::<f32>::new(vec![0, 1], vec![0, 1], vec![1, 1], vec![1, 1]).unwrap();
        let masks = build_masks(&topo);
        assert_eq!(masks.i_d()[(0, 0)], 1.0f32);
    }
}
