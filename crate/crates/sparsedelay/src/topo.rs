//! Cyber-layer topology redesign around a fixed sparse gain.
//!
//! With the gain and both bandwidths frozen, reassigning states and inputs
//! to control nodes permutes the block structure of the gain, which changes
//! the number of intra-layer links (hence `tau_c`), the worst-case
//! propagation paths, and the per-CN computation overhead. The redesign
//! machinery here: the bijection between topologies and permuted block
//! matrices, Fiedler-vector bipartitioning, exhaustive 2x2 partition search
//! under a CN-cost cap, recursive division to every CN count, the greedy
//! pool-subset selection that keeps propagation delays non-increasing, and
//! the final cost-constrained selection.

use crate::error::{Error, Result};
use crate::h2::h2_norm;
use crate::model::{build_masks, CnGeometry, PlantModel, Topology};
use crate::netcost::{channel_counts, BandwidthModel, ChannelCounts};
use crate::scalar::{r, ri, Real};
use crate::spectral::{build_closed_loop, SpectralBasis};
use crate::{Mat, Vec_};
use std::collections::BTreeMap;

/// A gain viewed as a block matrix under a topology: row/column permutations
/// plus group sizes. The map to and from [`Topology`] is bijective.
#[derive(Debug, Clone)]
pub struct BlockPartition<T: Real> {
    k: Mat<T>,
    u_order: Vec<usize>,
    x_order: Vec<usize>,
    m_sizes: Vec<usize>,
    n_sizes: Vec<usize>,
}

impl<T: Real> BlockPartition<T> {
    pub fn from_topology(k: &Mat<T>, topology: &Topology<T>) -> Result<Self> {
        if k.shape() != (topology.m(), topology.n()) {
            return Err(Error::Dimension("gain does not match the topology".into()));
        }
        Ok(Self {
            k: k.clone(),
            u_order: topology.u_order().to_vec(),
            x_order: topology.x_order().to_vec(),
            m_sizes: topology.m_sizes().to_vec(),
            n_sizes: topology.n_sizes().to_vec(),
        })
    }

    /// The permuted matrix `U K X`: entry `(r, s)` is `K[u_order[r], x_order[s]]`.
    pub fn permuted(&self) -> Mat<T> {
        Mat::from_fn(self.u_order.len(), self.x_order.len(), |r_, s| {
            self.k[(self.u_order[r_], self.x_order[s])]
        })
    }

    pub fn n_cn(&self) -> usize {
        self.n_sizes.len()
    }

    /// Whether block `(j, i)` (rowgroup `j`, colgroup `i`) has any entry
    /// above the structural-zero threshold.
    pub fn block_nonzero(&self, j: usize, i: usize) -> bool {
        let tol = r::<T>(crate::netcost::ZERO_TOL);
        let row_start: usize = self.m_sizes[..j].iter().sum();
        let col_start: usize = self.n_sizes[..i].iter().sum();
        for dr in 0..self.m_sizes[j] {
            for dc in 0..self.n_sizes[i] {
                let u = self.u_order[row_start + dr];
                let x = self.x_order[col_start + dc];
                if self.k[(u, x)].abs() > tol {
                    return true;
                }
            }
        }
        false
    }

    /// Nonzero off-diagonal blocks per block column.
    pub fn n_off(&self) -> Vec<usize> {
        let n_cn = self.n_cn();
        (0..n_cn)
            .map(|i| (0..n_cn).filter(|&j| j != i && self.block_nonzero(j, i)).count())
            .collect()
    }

    /// Inverse of the block map: the topology this partition encodes.
    pub fn to_topology(
        &self,
        hosts: Vec<usize>,
        geometry: Option<CnGeometry<T>>,
    ) -> Result<Topology<T>> {
        Topology::with_hosts(
            self.x_order.clone(),
            self.u_order.clone(),
            self.n_sizes.clone(),
            self.m_sizes.clone(),
            hosts,
            geometry,
        )
    }

    /// Index groups of the off-diagonal blocks, in original gain
    /// coordinates, for group-shrinkage baselines.
    pub fn off_diagonal_groups(&self) -> crate::admm::GroupPattern {
        let n_cn = self.n_cn();
        let mut groups = Vec::new();
        for j in 0..n_cn {
            for i in 0..n_cn {
                if i == j {
                    continue;
                }
                let row_start: usize = self.m_sizes[..j].iter().sum();
                let col_start: usize = self.n_sizes[..i].iter().sum();
                let mut cells = Vec::new();
                for dr in 0..self.m_sizes[j] {
                    for dc in 0..self.n_sizes[i] {
                        cells.push((self.u_order[row_start + dr], self.x_order[col_start + dc]));
                    }
                }
                groups.push(cells);
            }
        }
        crate::admm::GroupPattern { groups }
    }

    /// Sparsity pattern of the permuted matrix as a text grid with block
    /// separators.
    pub fn pattern_grid(&self) -> String {
        let tol = r::<T>(crate::netcost::ZERO_TOL);
        let p = self.permuted();
        let row_breaks: Vec<usize> = self
            .m_sizes
            .iter()
            .scan(0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        let col_breaks: Vec<usize> = self
            .n_sizes
            .iter()
            .scan(0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        let mut out = String::new();
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                out.push(if p[(i, j)].abs() > tol { 'x' } else { '.' });
                if col_breaks.contains(&(j + 1)) && j + 1 < p.ncols() {
                    out.push('|');
                }
            }
            out.push('\n');
            if row_breaks.contains(&(i + 1)) && i + 1 < p.nrows() {
                for j in 0..p.ncols() + self.n_sizes.len() - 1 {
                    let _ = j;
                    out.push('-');
                }
                out.push('\n');
            }
        }
        out
    }
}

/// CN rent-and-computation cost model. The rent curve is frozen at
/// experiment start from one order-statistic draw so runs are reproducible.
#[derive(Debug, Clone)]
pub struct CnCostModel<T: Real> {
    rent: Vec<T>,
    s_cn_c_max: T,
}

/// splitmix64, for the deterministic rent-curve draw.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl<T: Real> CnCostModel<T> {
    /// Draws `pool` uniform samples, sorts them, and scales by the maximum
    /// computation overhead `(m + n - 2)^2 + 4`; the rent of `N` CNs is the
    /// `N`-th order statistic of the draw.
    pub fn from_seed(seed: u64, pool: usize, m: usize, n: usize) -> Self {
        let mut state = seed ^ 0xD1B54A32D192ED03;
        let mut samples: Vec<f64> =
            (0..pool).map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64).collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s_max = ((m + n - 2) * (m + n - 2) + 4) as f64;
        Self {
            rent: samples.into_iter().map(|x| r::<T>(s_max * x)).collect(),
            s_cn_c_max: r::<T>(s_max),
        }
    }

    pub fn rent(&self, n_cn: usize) -> T {
        self.rent[(n_cn - 1).min(self.rent.len() - 1)]
    }

    pub fn s_cn_c_max(&self) -> T {
        self.s_cn_c_max
    }

    pub fn pool(&self) -> usize {
        self.rent.len()
    }
}

/// Cost split of one topology.
#[derive(Debug, Clone, Copy)]
pub struct CnCost<T: Real> {
    pub compute: T,
    pub rent: T,
    pub total: T,
}

/// `S_CN = S_CN_c + S_CN_r` with `S_CN_c = sum (n_i + m_i)^2`.
pub fn cn_cost<T: Real>(topology: &Topology<T>, model: &CnCostModel<T>) -> CnCost<T> {
    let compute: T = topology
        .n_sizes()
        .iter()
        .zip(topology.m_sizes())
        .map(|(&ni, &mi)| ri::<T>((ni + mi) * (ni + mi)))
        .fold(T::zero(), |a, b| a + b);
    let rent = model.rent(topology.n_cn());
    CnCost { compute, rent, total: compute + rent }
}

/// Output of the Fiedler bipartition.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    /// Input (row) indices sorted by descending Fiedler weight.
    pub u_order: Vec<usize>,
    /// State (column) indices sorted by descending Fiedler weight.
    pub x_order: Vec<usize>,
    /// The bipartite adjacency graph had more than one component.
    pub disconnected: bool,
}

/// Fiedler-vector permutation of a sparse gain: symmetrize the bipartite
/// adjacency (entry magnitudes as weights), take the graph Laplacian, and
/// order rows and columns by the eigenvector of its smallest positive
/// eigenvalue. Dense symmetric eigensolve up to 400 vertices, Lanczos
/// iteration beyond.
pub fn spectral_partition<T: Real>(k: &Mat<T>) -> Result<SpectralSplit> {
    let (m, n) = k.shape();
    let tol = r::<T>(crate::netcost::ZERO_TOL);
    if k.iter().all(|v| v.abs() <= tol) {
        return Err(Error::Config("cannot partition an identically zero gain".into()));
    }
    let dim = m + n;
    let mut lap = Mat::<T>::zeros(dim, dim);
    for i in 0..m {
        for j in 0..n {
            let w = k[(i, j)].abs();
            if w > tol {
                lap[(i, m + j)] = -w;
                lap[(m + j, i)] = -w;
                lap[(i, i)] += w;
                lap[(m + j, m + j)] += w;
            }
        }
    }
    let scale = lap.norm() + T::one();
    let zero_tol = r::<T>(1e-9) * scale;

    let (vals, vecs): (Vec<T>, Vec<Vec_<T>>) = if dim <= 400 {
        let eig = lap.clone().symmetric_eigen();
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        (
            idx.iter().map(|&i| eig.eigenvalues[i]).collect(),
            idx.iter().map(|&i| eig.eigenvectors.column(i).clone_owned()).collect(),
        )
    } else {
        lanczos_smallest(&lap, 6.min(dim))?
    };

    let n_zero = vals.iter().take_while(|&&v| v <= zero_tol).count();
    let disconnected = n_zero > 1;
    let fiedler = vecs
        .get(n_zero.max(1).min(vals.len() - 1))
        .cloned()
        .or_else(|| vecs.last().cloned())
        .ok_or(Error::EigenFailure)?;
    // index of first strictly positive eigenvalue (at least 1: the constant
    // vector is always in the kernel)
    let fiedler = if n_zero == 0 { vecs[0].clone() } else { fiedler };

    let mut u_order: Vec<usize> = (0..m).collect();
    u_order.sort_by(|&a, &b| fiedler[b].partial_cmp(&fiedler[a]).unwrap().then(a.cmp(&b)));
    let mut x_order: Vec<usize> = (0..n).collect();
    x_order
        .sort_by(|&a, &b| fiedler[m + b].partial_cmp(&fiedler[m + a]).unwrap().then(a.cmp(&b)));
    Ok(SpectralSplit { u_order, x_order, disconnected })
}

/// Lanczos with full reorthogonalization for the `k` smallest eigenpairs of
/// a symmetric matrix.
fn lanczos_smallest<T: Real>(a: &Mat<T>, k: usize) -> Result<(Vec<T>, Vec<Vec_<T>>)> {
    let dim = a.nrows();
    let steps = (8 * k + 40).min(dim);
    let mut qs: Vec<Vec_<T>> = Vec::with_capacity(steps);
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    // deterministic pseudo-random start
    let mut seed = 0x9E3779B97F4A7C15u64;
    let mut q = Vec_::<T>::from_fn(dim, |i, _| {
        let _ = i;
        r::<T>(((splitmix64(&mut seed) >> 11) as f64 / (1u64 << 53) as f64) - 0.5)
    });
    q /= q.norm();
    let mut q_prev = Vec_::<T>::zeros(dim);
    let mut beta = T::zero();
    for _ in 0..steps {
        let mut v = a * &q - &q_prev * beta;
        let alpha = q.dot(&v);
        v -= &q * alpha;
        for qi in &qs {
            let c = qi.dot(&v);
            v -= qi * c;
        }
        qs.push(q.clone());
        alphas.push(alpha);
        beta = v.norm();
        if beta <= r::<T>(1e-12) {
            break;
        }
        betas.push(beta);
        q_prev = q;
        q = v / beta;
    }
    let t_dim = alphas.len();
    let mut tri = Mat::<T>::zeros(t_dim, t_dim);
    for i in 0..t_dim {
        tri[(i, i)] = alphas[i];
        if i + 1 < t_dim {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eig = tri.symmetric_eigen();
    let mut idx: Vec<usize> = (0..t_dim).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[x].partial_cmp(&eig.eigenvalues[y]).unwrap());
    let takes = k.min(t_dim);
    let mut vals = Vec::with_capacity(takes);
    let mut vecs = Vec::with_capacity(takes);
    for &i in idx.iter().take(takes) {
        vals.push(eig.eigenvalues[i]);
        let mut v = Vec_::<T>::zeros(dim);
        for (s, qv) in qs.iter().enumerate() {
            v += qv * eig.eigenvectors[(s, i)];
        }
        v /= v.norm();
        vecs.push(v);
    }
    Ok((vals, vecs))
}

/// Everything the redesign needs to price and evaluate a candidate topology.
pub struct RedesignContext<'a, T: Real> {
    pub plant: &'a PlantModel<T>,
    pub basis: &'a SpectralBasis<T>,
    pub k_star: &'a Mat<T>,
    pub bw: &'a BandwidthModel<T>,
    /// Frozen bandwidth allocations from the gain design.
    pub b_cp: T,
    pub b_cc: T,
    pub geometry: Option<&'a CnGeometry<T>>,
    pub cost_model: &'a CnCostModel<T>,
}

/// Candidate evaluation: delays, H2 value, costs, and the cost-cap flag.
#[derive(Debug, Clone)]
pub struct TopologyEval<T: Real> {
    pub tau_d: T,
    pub tau_c: T,
    pub j: T,
    pub s_cn: CnCost<T>,
    pub counts: ChannelCounts,
    pub cost_ok: bool,
}

impl<'a, T: Real> RedesignContext<'a, T> {
    /// Delays of a topology at the frozen gain and bandwidths; intra-layer
    /// propagation is the worst case over the hosting CNs.
    pub fn delays_for(&self, topology: &Topology<T>) -> Result<(T, T, ChannelCounts)> {
        let counts = channel_counts(self.k_star, topology)?;
        let tau_dtr = r::<T>(2.0) * self.bw.kappa * ri::<T>(counts.n_cp) / self.b_cp;
        let tau_ctr = self.bw.kappa * ri::<T>(counts.n_cc) / self.b_cc;
        let tau_cpr = match self.geometry {
            Some(geo) => geo.worst_case_delay(topology.hosts()),
            None => self.bw.tau_cpr,
        };
        Ok((tau_dtr + self.bw.tau_dpr, tau_ctr + tau_cpr, counts))
    }

    /// Full candidate evaluation; errors when the loop is unstable at the
    /// candidate delays.
    pub fn evaluate(&self, topology: &Topology<T>, s_cn_cap: T) -> Result<TopologyEval<T>> {
        let (tau_d, tau_c, counts) = self.delays_for(topology)?;
        let tau_o = tau_d + tau_c;
        let c = tau_d / tau_o;
        let masks = build_masks(topology);
        let lp = build_closed_loop(self.plant, self.k_star, &masks, tau_o, c, self.basis)?;
        let sol = h2_norm(&lp, self.plant)?;
        let s_cn = cn_cost(topology, self.cost_model);
        Ok(TopologyEval {
            tau_d,
            tau_c,
            j: sol.j,
            s_cn,
            counts,
            cost_ok: s_cn.total <= s_cn_cap,
        })
    }
}

/// Result of one exhaustive 2x2 partition search.
#[derive(Debug)]
pub struct PartitionOutcome<T: Real> {
    pub topology: Topology<T>,
    pub eval: TopologyEval<T>,
    /// Candidates dropped because the loop was unstable there.
    pub excluded: Vec<((usize, usize), String)>,
}

/// Exhaustive search over all `(m-1)(n-1)` two-block partitions of the
/// permuted gain; keeps candidates within the CN-cost cap and returns the
/// lowest-`J` survivor (ties: lower cost, then lexicographic split).
pub fn optimal_partition<T: Real>(
    ctx: &RedesignContext<'_, T>,
    split: &SpectralSplit,
    hosts: &[usize],
    s_cn_cap: T,
) -> Result<Option<PartitionOutcome<T>>> {
    let m = split.u_order.len();
    let n = split.x_order.len();
    let mut best: Option<(PartitionOutcome<T>, (usize, usize))> = None;
    let mut excluded = Vec::new();
    for i in 1..m {
        for j in 1..n {
            let topology = match Topology::with_hosts(
                split.x_order.clone(),
                split.u_order.clone(),
                vec![j, n - j],
                vec![i, m - i],
                hosts.to_vec(),
                ctx.geometry.cloned(),
            ) {
                Ok(t) => t,
                Err(e) => {
                    excluded.push(((i, j), e.to_string()));
                    continue;
                }
            };
            match ctx.evaluate(&topology, s_cn_cap) {
                Ok(eval) if eval.cost_ok => {
                    let replace = match &best {
                        None => true,
                        Some((incumbent, key)) => {
                            let cur = &incumbent.eval;
                            eval.j < cur.j
                                || (eval.j == cur.j && eval.s_cn.total < cur.s_cn.total)
                                || (eval.j == cur.j
                                    && eval.s_cn.total == cur.s_cn.total
                                    && (i, j) < *key)
                        }
                    };
                    if replace {
                        best = Some((
                            PartitionOutcome { topology, eval, excluded: Vec::new() },
                            (i, j),
                        ));
                    }
                }
                Ok(_) => {} // over the cost cap: filtered, not an error
                Err(e) => excluded.push(((i, j), e.to_string())),
            }
        }
    }
    Ok(best.map(|(mut outcome, _)| {
        outcome.excluded = excluded;
        outcome
    }))
}

/// Greedy pool-subset selection: repeatedly drop an endpoint of the current
/// longest link until `n_cn` CNs remain. The worst-case link length (hence
/// the intra-layer propagation delay) is non-increasing as the subset
/// shrinks.
pub fn select_cn_subset<T: Real>(geometry: &CnGeometry<T>, n_cn: usize) -> Vec<usize> {
    let mut current: Vec<usize> = (0..geometry.pool_size()).collect();
    while current.len() > n_cn {
        // longest link among the current subset
        let (mut bi, mut bj, mut bl) = (0usize, 0usize, -T::one());
        for (a, &i) in current.iter().enumerate() {
            for &j in &current[a + 1..] {
                let l = geometry.length(i, j);
                if l > bl {
                    bl = l;
                    bi = i;
                    bj = j;
                }
            }
        }
        let max_without = |exclude: usize| {
            let mut worst = T::zero();
            for (a, &i) in current.iter().enumerate() {
                if i == exclude {
                    continue;
                }
                for &j in &current[a + 1..] {
                    if j == exclude {
                        continue;
                    }
                    let l = geometry.length(i, j);
                    if l > worst {
                        worst = l;
                    }
                }
            }
            worst
        };
        let wi = max_without(bi);
        let wj = max_without(bj);
        let drop = if wi < wj || (wi == wj && bi < bj) { bi } else { bj };
        current.retain(|&x| x != drop);
    }
    current
}

/// One level of the recursive division map.
#[derive(Debug, Clone)]
pub struct LevelDesign<T: Real> {
    pub topology: Topology<T>,
    pub eval: TopologyEval<T>,
}

/// Recursive division from two CNs up to the maximum count: diagonal blocks
/// are split first (the CN with the largest footprint that still holds at
/// least two states and two inputs); once no diagonal block can split, an
/// off-diagonal block is divided instead, moving inputs of one CN and
/// states of another onto a fresh CN. Each level is an exhaustive 2x2
/// search on the chosen block with the global cost and stability tests.
pub fn recursive_divide<T: Real>(
    ctx: &RedesignContext<'_, T>,
    s_cn_cap: T,
) -> Result<BTreeMap<usize, LevelDesign<T>>> {
    let (m, n) = ctx.k_star.shape();
    let n_max = m.min(n);
    let mut map = BTreeMap::new();
    if n_max < 2 {
        return Ok(map);
    }

    let hosts_for = |count: usize| -> Vec<usize> {
        match ctx.geometry {
            Some(geo) => select_cn_subset(geo, count),
            None => (0..count).collect(),
        }
    };

    // level 2: full-gain spectral split + exhaustive partition (falling back
    // to an unfiltered argmin-J so the recursion can continue; the final
    // selection re-applies the cost cap)
    let split = spectral_partition(ctx.k_star)?;
    let level2 = optimal_partition(ctx, &split, &hosts_for(2), s_cn_cap)?
        .or(optimal_partition(ctx, &split, &hosts_for(2), T::max_value().unwrap())?);
    let Some(level2) = level2 else {
        return Ok(map);
    };
    map.insert(2, LevelDesign { topology: level2.topology, eval: level2.eval });

    for count in 2..n_max {
        let Some(prev) = map.get(&count) else { break };
        let next = divide_once(ctx, &prev.topology, &hosts_for(count + 1), s_cn_cap)?;
        match next {
            Some(design) => {
                map.insert(count + 1, design);
            }
            None => break, // every block exhausted or unstable
        }
    }
    Ok(map)
}

/// Splits one CN (or one off-diagonal block) of `topology`, producing the
/// best topology with one more CN, or `None` when nothing can split.
fn divide_once<T: Real>(
    ctx: &RedesignContext<'_, T>,
    topology: &Topology<T>,
    hosts: &[usize],
    s_cn_cap: T,
) -> Result<Option<LevelDesign<T>>> {
    let n_cn = topology.n_cn();

    // candidate generator: given per-CN state/input splits, build the
    // refined topology and evaluate it
    let mut best: Option<(LevelDesign<T>, (usize, usize, usize))> = None;
    let mut consider = |cand: Topology<T>, key: (usize, usize, usize)| -> Result<()> {
        match ctx.evaluate(&cand, s_cn_cap) {
            Ok(eval) => {
                let better = match &best {
                    None => true,
                    Some((incumbent, ikey)) => {
                        let (cur, cand_e) = (&incumbent.eval, &eval);
                        // prefer cost-feasible candidates, then lowest J
                        (cand_e.cost_ok, std::cmp::Reverse(()),) > (cur.cost_ok, std::cmp::Reverse(()))
                            || (cand_e.cost_ok == cur.cost_ok
                                && (cand_e.j < cur.j
                                    || (cand_e.j == cur.j && key < *ikey)))
                    }
                };
                if better {
                    best = Some((LevelDesign { topology: cand, eval }, key));
                }
                Ok(())
            }
            Err(Error::Unstable { .. }) | Err(Error::InfeasibleDelay(_)) => Ok(()),
            Err(e) => Err(e),
        }
    };

    // diagonal splits: largest splittable CN first (both sizes >= 2)
    let mut diag: Vec<usize> = (0..n_cn)
        .filter(|&q| topology.n_sizes()[q] >= 2 && topology.m_sizes()[q] >= 2)
        .collect();
    diag.sort_by_key(|&q| std::cmp::Reverse(topology.n_sizes()[q] + topology.m_sizes()[q]));

    if let Some(&q) = diag.first() {
        let states = topology.states_of(q).to_vec();
        let inputs = topology.inputs_of(q).to_vec();
        let sub = Mat::<T>::from_fn(inputs.len(), states.len(), |a, b| {
            ctx.k_star[(inputs[a], states[b])]
        });
        let local = match spectral_partition(&sub) {
            Ok(s) => s,
            Err(_) => SpectralSplit {
                u_order: (0..inputs.len()).collect(),
                x_order: (0..states.len()).collect(),
                disconnected: false,
            },
        };
        let states_perm: Vec<usize> = local.x_order.iter().map(|&s| states[s]).collect();
        let inputs_perm: Vec<usize> = local.u_order.iter().map(|&u| inputs[u]).collect();
        for i in 1..inputs.len() {
            for j in 1..states.len() {
                let cand = refine_topology(
                    topology,
                    q,
                    q,
                    &states_perm,
                    &inputs_perm,
                    j,
                    i,
                    hosts,
                )?;
                consider(cand, (q, i, j))?;
            }
        }
    } else {
        // off-diagonal split: move inputs of `q` and states of `p` to a new CN
        let q = (0..n_cn).max_by_key(|&q| (topology.m_sizes()[q], std::cmp::Reverse(q)));
        let p = (0..n_cn).max_by_key(|&p| (topology.n_sizes()[p], std::cmp::Reverse(p)));
        let (Some(q), Some(p)) = (q, p) else { return Ok(None) };
        if topology.m_sizes()[q] < 2 || topology.n_sizes()[p] < 2 {
            return Ok(None);
        }
        let states = topology.states_of(p).to_vec();
        let inputs = topology.inputs_of(q).to_vec();
        let sub = Mat::<T>::from_fn(inputs.len(), states.len(), |a, b| {
            ctx.k_star[(inputs[a], states[b])]
        });
        let local = match spectral_partition(&sub) {
            Ok(s) => s,
            Err(_) => SpectralSplit {
                u_order: (0..inputs.len()).collect(),
                x_order: (0..states.len()).collect(),
                disconnected: false,
            },
        };
        let states_perm: Vec<usize> = local.x_order.iter().map(|&s| states[s]).collect();
        let inputs_perm: Vec<usize> = local.u_order.iter().map(|&u| inputs[u]).collect();
        for i in 1..inputs.len() {
            for j in 1..states.len() {
                let cand =
                    refine_topology(topology, p, q, &states_perm, &inputs_perm, j, i, hosts)?;
                consider(cand, (q, i, j))?;
            }
        }
    }
    Ok(best.map(|(design, _)| design))
}

/// Builds the refined topology where CN `p` keeps the first `j` of the
/// given states, CN `q` keeps the first `i` of the given inputs, and a new
/// CN takes the rest of both. `p == q` is the diagonal case.
#[allow(clippy::too_many_arguments)]
fn refine_topology<T: Real>(
    topology: &Topology<T>,
    p: usize,
    q: usize,
    states_perm: &[usize],
    inputs_perm: &[usize],
    j: usize,
    i: usize,
    hosts: &[usize],
) -> Result<Topology<T>> {
    let n_cn = topology.n_cn();
    let mut x_order = Vec::with_capacity(topology.n());
    let mut u_order = Vec::with_capacity(topology.m());
    let mut n_sizes = Vec::with_capacity(n_cn + 1);
    let mut m_sizes = Vec::with_capacity(n_cn + 1);
    for g in 0..n_cn {
        if g == p {
            x_order.extend_from_slice(&states_perm[..j]);
            n_sizes.push(j);
        } else {
            x_order.extend_from_slice(topology.states_of(g));
            n_sizes.push(topology.n_sizes()[g]);
        }
        if g == q {
            u_order.extend_from_slice(&inputs_perm[..i]);
            m_sizes.push(i);
        } else {
            u_order.extend_from_slice(topology.inputs_of(g));
            m_sizes.push(topology.m_sizes()[g]);
        }
    }
    // the fresh CN
    x_order.extend_from_slice(&states_perm[j..]);
    n_sizes.push(states_perm.len() - j);
    u_order.extend_from_slice(&inputs_perm[i..]);
    m_sizes.push(inputs_perm.len() - i);
    Topology::with_hosts(
        x_order,
        u_order,
        n_sizes,
        m_sizes,
        hosts.to_vec(),
        topology.geometry().cloned(),
    )
}

/// Feasibility report for shrinking the CN count.
#[derive(Debug, Clone)]
pub struct Prop2Report {
    /// `n <= m`: a strictly better intra-layer delay always exists.
    pub always_feasible_regime: bool,
    /// For `n > m`: the bound `n <= m(m-1)/2` that keeps the argument alive.
    pub bound_holds: bool,
    /// When candidate off-diagonal data is supplied: whether the nonzero
    /// block fraction at the reduced count stays at or below the initial one.
    pub fraction_condition: Option<bool>,
}

/// Evaluates the reduced-count feasibility conditions for dimensions
/// `(m, n)` and, optionally, a concrete candidate pair of off-diagonal
/// counts `(sum n_off at N, N)` vs `(sum n_off at N_m, N_m)`.
pub fn prop2_feasibility(
    m: usize,
    n: usize,
    candidate: Option<(usize, usize, usize, usize)>,
) -> Prop2Report {
    let always = n <= m;
    let bound_holds = if n > m { 2 * n <= m * (m - 1) } else { true };
    let fraction_condition = candidate.map(|(sum_n, n_cn, sum_nm, n_m)| {
        // fractions of nonzero off-diagonal blocks
        sum_n * n_m * (n_m - 1) <= sum_nm * n_cn * (n_cn - 1)
    });
    Prop2Report { always_feasible_regime: always, bound_holds, fraction_condition }
}

/// The ratio maximized in the reduced-count feasibility argument:
/// `phi = sum_i n_off_i (n - n_i) / (n^T n_off)`.
pub fn phi_value(n_sizes: &[usize], n_off: &[usize]) -> Option<f64> {
    let n: usize = n_sizes.iter().sum();
    let num: usize =
        n_sizes.iter().zip(n_off).map(|(&ni, &off)| off * (n - ni)).sum();
    let den: usize = n_sizes.iter().zip(n_off).map(|(&ni, &off)| off * ni).sum();
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Final selection across the division map.
#[derive(Debug, Clone)]
pub struct O3Outcome<T: Real> {
    /// Lowest-`J` design meeting the cost cap (the fallback when none does).
    pub chosen_n: usize,
    pub chosen: LevelDesign<T>,
    /// Lowest-cost design whose `J` does not exceed the initial one.
    pub min_cost_choice: Option<(usize, LevelDesign<T>)>,
    pub fell_back: bool,
}

/// Cost-constrained argmin-`J` over the division map, falling back to the
/// initial topology when every candidate violates the cap.
pub fn solve_o3<T: Real>(
    map: &BTreeMap<usize, LevelDesign<T>>,
    initial: &LevelDesign<T>,
    initial_n: usize,
    s_cn_cap: T,
    j_baseline: T,
) -> O3Outcome<T> {
    let mut chosen: Option<(usize, &LevelDesign<T>)> = None;
    for (&n_cn, design) in map {
        if design.eval.s_cn.total > s_cn_cap {
            continue;
        }
        let better = match chosen {
            None => true,
            Some((_, cur)) => design.eval.j < cur.eval.j,
        };
        if better {
            chosen = Some((n_cn, design));
        }
    }
    // the redesign must never lose to the initial topology
    let fell_back = match chosen {
        Some((_, d)) => d.eval.j > j_baseline,
        None => true,
    };
    let (chosen_n, chosen) = if fell_back {
        (initial_n, initial.clone())
    } else {
        let (n_cn, d) = chosen.unwrap();
        (n_cn, d.clone())
    };

    let mut min_cost: Option<(usize, &LevelDesign<T>)> = None;
    for (&n_cn, design) in map {
        if design.eval.j > j_baseline || design.eval.s_cn.total > s_cn_cap {
            continue;
        }
        let better = match min_cost {
            None => true,
            Some((_, cur)) => design.eval.s_cn.total < cur.eval.s_cn.total,
        };
        if better {
            min_cost = Some((n_cn, design));
        }
    }
    O3Outcome {
        chosen_n,
        chosen,
        min_cost_choice: min_cost.map(|(n_cn, d)| (n_cn, d.clone())),
        fell_back,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn cn_cost_formulas() {
        let model = CnCostModel::<f64>::from_seed(7, 4, 4, 4);
        // all singleton CNs: (1+1)^2 each
        let t = Topology::<f64>::singletons(4).unwrap();
        let cost = cn_cost(&t, &model);
        assert_eq!(cost.compute, 16.0);
        // two CNs at the extreme split hit the compute maximum
        let t2 = Topology::<f64>::new(
            (0..4).collect(),
            (0..4).collect(),
            vec![3, 1],
            vec![3, 1],
        )
        .unwrap();
        let cost2 = cn_cost(&t2, &model);
        assert_eq!(cost2.compute, ((4 + 4 - 2) * (4 + 4 - 2) + 4) as f64);
        assert_eq!(cost2.compute, model.s_cn_c_max());
    }

    #[test]
    fn rent_table_monotone() {
        let model = CnCostModel::<f64>::from_seed(123, 12, 6, 6);
        for n in 2..=12 {
            assert!(model.rent(n) >= model.rent(n - 1));
            assert!(model.rent(n) <= model.s_cn_c_max());
        }
        // merging two CNs never decreases the compute cost
        for (a, b) in [(1usize, 1usize), (2, 3), (1, 4)] {
            let merged = (a + b + 2) * (a + b + 2);
            let split = (a + 1) * (a + 1) + (b + 1) * (b + 1);
            assert!(merged >= split);
        }
    }

    #[test]
    fn block_partition_round_trip_and_n_off() {
        let k = crate::netcost::tests_support::example1_gain();
        let t = Topology::<f64>::new(
            vec![1, 0, 4, 6, 2, 3, 5],
            vec![1, 0, 4, 3, 2, 5],
            vec![1, 1, 1, 1, 1, 2],
            vec![1; 6],
        )
        .unwrap();
        let bp = BlockPartition::from_topology(&k, &t).unwrap();
        assert_eq!(bp.n_off(), vec![0, 0, 1, 2, 2, 4]);
        // round trip through the inverse map
        let t2 = bp.to_topology((0..6).collect(), None).unwrap();
        let bp2 = BlockPartition::from_topology(&k, &t2).unwrap();
        assert_eq!(bp.permuted(), bp2.permuted());
        // nnz invariant under the map
        let nnz_orig = crate::admm::nnz(&k);
        assert_eq!(crate::admm::nnz(&bp.permuted()), nnz_orig);
    }

    #[test]
    fn spectral_partition_separates_blocks() {
        // two decoupled 2x2 blocks scattered by a permutation
        let k = dmatrix![
            1.0, 0.0, 2.0, 0.0;
            0.0, 3.0, 0.0, 1.5;
            2.5, 0.0, 1.0, 0.0;
            0.0, 1.0, 0.0, 2.0
        ];
        let split = spectral_partition(&k).unwrap();
        assert!(split.disconnected);
        // rows {0, 2} (block A) must be contiguous in the ordering
        let pos = |v: &Vec<usize>, x: usize| v.iter().position(|&e| e == x).unwrap();
        let rows_a = [pos(&split.u_order, 0), pos(&split.u_order, 2)];
        assert_eq!((rows_a[0] as i64 - rows_a[1] as i64).abs(), 1, "{:?}", split.u_order);
        let cols_a = [pos(&split.x_order, 0), pos(&split.x_order, 2)];
        assert_eq!((cols_a[0] as i64 - cols_a[1] as i64).abs(), 1, "{:?}", split.x_order);

        // permutation validity
        let mut u = split.u_order.clone();
        u.sort();
        assert_eq!(u, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let k: Mat<f64> = dmatrix![
            1.0, 0.2, 0.0;
            0.0, 2.0, 0.3;
            0.5, 0.0, 1.0
        ];
        let mut lap = Mat::<f64>::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                let w: f64 = k[(i, j)].abs();
                if w > 0.0 {
                    lap[(i, 3 + j)] = -w;
                    lap[(3 + j, i)] = -w;
                    lap[(i, i)] += w;
                    lap[(3 + j, 3 + j)] += w;
                }
            }
        }
        let (vals, _) = lanczos_smallest(&lap, 3).unwrap();
        let dense = lap.symmetric_eigenvalues();
        let mut dv: Vec<f64> = dense.iter().copied().collect();
        dv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 0..3 {
            assert!((vals[i] - dv[i]).abs() < 1e-8, "{} vs {}", vals[i], dv[i]);
        }
    }

    #[test]
    fn subset_selection_monotone_delay() {
        let lengths = dmatrix![
            0.0, 10.0, 3.0, 7.0, 1.0;
            10.0, 0.0, 4.0, 2.0, 6.0;
            3.0, 4.0, 0.0, 5.0, 2.0;
            7.0, 2.0, 5.0, 0.0, 8.0;
            1.0, 6.0, 2.0, 8.0, 0.0
        ];
        let geo = CnGeometry::new(lengths, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in (2..=5).rev() {
            let subset = select_cn_subset(&geo, n);
            assert_eq!(subset.len(), n);
            let worst = geo.worst_case_delay(&subset);
            assert!(worst <= prev, "worst-case delay must not grow as CNs drop");
            prev = worst;
        }
        // dropping from 5 to 4 removes an endpoint of the unique longest link (0, 1)
        let s4 = select_cn_subset(&geo, 4);
        assert!(!(s4.contains(&0) && s4.contains(&1)));
    }

    #[test]
    fn chain_geometry_trims_extremes() {
        // collinear CNs at x = 0, 1, 2, 3, 4: longest link is (0, 4)
        let mut lengths = Mat::<f64>::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                lengths[(i, j)] = (i as f64 - j as f64).abs();
            }
        }
        let geo = CnGeometry::new(lengths, 1.0).unwrap();
        let s3 = select_cn_subset(&geo, 3);
        // only contiguous-extreme trimming can shrink the diameter
        let min = *s3.iter().min().unwrap();
        let max = *s3.iter().max().unwrap();
        assert!(max - min == 2, "expected a contiguous run, got {s3:?}");
    }

    #[test]
    fn prop2_regimes() {
        assert!(prop2_feasibility(6, 4, None).always_feasible_regime);
        let boundary = prop2_feasibility(4, 6, None); // n = m(m-1)/2 = 6
        assert!(!boundary.always_feasible_regime);
        assert!(boundary.bound_holds);
        assert!(!prop2_feasibility(4, 7, None).bound_holds);
        let frac = prop2_feasibility(4, 4, Some((2, 3, 6, 4))).fraction_condition.unwrap();
        // 2/(3*2) = 1/3 <= 6/(4*3) = 1/2
        assert!(frac);
    }

    #[test]
    fn phi_value_cases() {
        assert_eq!(phi_value(&[1, 1, 3], &[2, 2, 0]), Some(4.0));
        assert_eq!(phi_value(&[1, 1, 1], &[0, 0, 0]), None);
    }
}
