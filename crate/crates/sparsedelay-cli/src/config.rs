//! Experiment configuration schema (TOML, versioned).
//!
//! The file is a flat set of sections; matrices are row-major nested
//! arrays. `schema_version` is bumped on breaking changes and checked at
//! load. A minimal config is just a `mode` plus a `[plant]` table; every
//! other field has a default recorded below.

use serde::{Deserialize, Serialize};
use sparsedelay::model::{CnGeometry, PlantModel, Topology};
use sparsedelay::netcost::BandwidthModel;
use sparsedelay::{Error, Matrix, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub plant: PlantSection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub delays: DelaySection,
    #[serde(default)]
    pub bandwidth: BandwidthSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub admm: AdmmSection,
    #[serde(default)]
    pub sdp: SdpSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub case_a: CaseASection,
    #[serde(default)]
    pub redesign: RedesignSection,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_seed() -> u64 {
    0
}
fn default_out_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CaseA,
    Algorithm1,
    ConstantDelay,
    TopologyRedesign,
    BlockSparseBaseline,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::CaseA => "case_a",
            Mode::Algorithm1 => "algorithm1",
            Mode::ConstantDelay => "constant_delay",
            Mode::TopologyRedesign => "topology_redesign",
            Mode::BlockSparseBaseline => "block_sparse_baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case_a" => Ok(Mode::CaseA),
            "algorithm1" => Ok(Mode::Algorithm1),
            "constant_delay" => Ok(Mode::ConstantDelay),
            "topology_redesign" => Ok(Mode::TopologyRedesign),
            "block_sparse_baseline" => Ok(Mode::BlockSparseBaseline),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default = "default_plant_source")]
    pub source: String, // "random" | "inline" | "fixture"
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    /// Shift subtracted from the diagonal of the random `A`.
    #[serde(default)]
    pub stability_shift: f64,
    /// Row-major nested arrays for `source = "inline"`.
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b_w: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub r: Option<Vec<Vec<f64>>>,
    /// Bundled fixture name for `source = "fixture"`.
    #[serde(default)]
    pub fixture: Option<String>,
}

fn default_plant_source() -> String {
    "random".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// "singletons" (default) | "inline" | "fixture"
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub x_order: Option<Vec<usize>>, // 1-based in the file
    #[serde(default)]
    pub u_order: Option<Vec<usize>>,
    #[serde(default)]
    pub n_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub m_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub link_lengths: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub fixture: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub tau_o: f64,
    pub c: f64,
}

impl Default for DelaySection {
    fn default() -> Self {
        Self { tau_o: 0.1, c: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthSection {
    pub m_cp: f64,
    pub m_cc: f64,
    pub kappa: f64,
    pub tau_dpr: f64,
    pub tau_cpr: f64,
    pub s_b: f64,
}

impl Default for BandwidthSection {
    fn default() -> Self {
        Self { m_cp: 84.0, m_cc: 81.0, kappa: 1.0, tau_dpr: 1e-4, tau_cpr: 1e-4, s_b: 1e6 }
    }
}

impl BandwidthSection {
    pub fn to_model(self) -> BandwidthModel<f64> {
        BandwidthModel {
            m_cp: self.m_cp,
            m_cc: self.m_cc,
            kappa: self.kappa,
            tau_dpr: self.tau_dpr,
            tau_cpr: self.tau_cpr,
            s_b: self.s_b,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    /// Collocation points; 0 selects automatically by a convergence check.
    pub n_grid: usize,
    pub k_c: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self { n_grid: 20, k_c: 10 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmSection {
    pub rho: f64,
    pub epsilon_w: f64,
    pub max_iter: usize,
    pub kmin_max_iter: usize,
}

impl Default for AdmmSection {
    fn default() -> Self {
        Self { rho: 100.0, epsilon_w: 1e-3, max_iter: 60, kmin_max_iter: 30 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpSection {
    pub zeta1_rel: f64,
    pub zeta2_rel: f64,
    pub beta_rel: f64,
    pub solver_tol: f64,
    pub subspace_threshold: usize,
}

impl Default for SdpSection {
    fn default() -> Self {
        Self {
            zeta1_rel: 0.1,
            zeta2_rel: 0.1,
            beta_rel: 0.1,
            solver_tol: 1e-8,
            subspace_threshold: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub gamma_points: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_max: f64,
    pub rounds: usize,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self { gamma_points: 40, gamma_lo: 0.01, gamma_hi: 0.95, gamma_max: 1.0, rounds: 3 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseASection {
    pub epsilon: f64,
    pub iterations: usize,
    pub rho: f64,
}

impl Default for CaseASection {
    fn default() -> Self {
        Self { epsilon: 5e-3, iterations: 20, rho: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedesignSection {
    pub rent_seed: u64,
    /// CN placement: "random" seeded positions or "none" (scalar delays).
    pub geometry: String,
    /// Side of the square deployment area, meters.
    pub area: f64,
    pub prop_speed: f64,
    /// Optional design file from a previous run; otherwise the gain design
    /// runs first with the same config.
    pub design_file: Option<String>,
    /// Sparsity threshold at which the block-sparse comparison stops
    /// shrinking each level (fraction of the level's link count).
    pub gamma_points: usize,
}

impl Default for RedesignSection {
    fn default() -> Self {
        Self {
            rent_seed: 7,
            geometry: "random".into(),
            area: 1000.0,
            prop_speed: 2e8,
            design_file: None,
            gamma_points: 12,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    pub fn from_str_named(text: &str, name: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            // toml reports line/column spans for the offending field
            Error::Config(format!("{name}: {e}"))
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{name}: schema_version {} unsupported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate(name)?;
        Ok(cfg)
    }

    fn validate(&self, name: &str) -> Result<()> {
        match self.plant.source.as_str() {
            "random" => {
                if self.plant.n == 0 {
                    return Err(Error::Config(format!(
                        "{name}: [plant] n must be positive for source = \"random\""
                    )));
                }
            }
            "inline" => {
                if self.plant.a.is_none() {
                    return Err(Error::Config(format!(
                        "{name}: [plant] a is required for source = \"inline\""
                    )));
                }
            }
            "fixture" => {
                if self.plant.fixture.is_none() {
                    return Err(Error::Config(format!(
                        "{name}: [plant] fixture name required for source = \"fixture\""
                    )));
                }
            }
            other => {
                return Err(Error::Config(format!("{name}: unknown plant source `{other}`")))
            }
        }
        if self.delays.tau_o <= 0.0 || self.delays.c <= 0.0 || self.delays.c >= 1.0 {
            return Err(Error::Config(format!(
                "{name}: [delays] requires tau_o > 0 and c strictly in (0, 1)"
            )));
        }
        Ok(())
    }

    /// Canonical serialized form used for the manifest hash.
    pub fn canonical_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn nested_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let nr = rows.len();
    if nr == 0 {
        return Err(Error::Config(format!("{what}: empty matrix")));
    }
    let nc = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != nc {
            return Err(Error::Config(format!(
                "{what}: row {i} has {} entries, expected {nc}",
                row.len()
            )));
        }
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Builds the plant described by the config (the random path is seeded from
/// the run seed).
pub fn build_plant(cfg: &ExperimentConfig) -> Result<PlantModel<f64>> {
    match cfg.plant.source.as_str() {
        "random" => {
            let m = if cfg.plant.m == 0 { cfg.plant.n } else { cfg.plant.m };
            crate::random::generate_random_plant(
                cfg.plant.n,
                m,
                cfg.seed,
                cfg.plant.stability_shift,
            )
        }
        "inline" => {
            let a = nested_to_matrix(cfg.plant.a.as_ref().unwrap(), "[plant] a")?;
            let n = a.nrows();
            let eye_n = Matrix::identity(n, n);
            let b = match &cfg.plant.b {
                Some(rows) => nested_to_matrix(rows, "[plant] b")?,
                None => eye_n.clone(),
            };
            let m = b.ncols();
            let b_w = match &cfg.plant.b_w {
                Some(rows) => nested_to_matrix(rows, "[plant] b_w")?,
                None => eye_n.clone(),
            };
            let q = match &cfg.plant.q {
                Some(rows) => nested_to_matrix(rows, "[plant] q")?,
                None => eye_n.clone(),
            };
            let r = match &cfg.plant.r {
                Some(rows) => nested_to_matrix(rows, "[plant] r")?,
                None => Matrix::identity(m, m),
            };
            PlantModel::new(a, b, b_w, q, r)
        }
        "fixture" => {
            let name = cfg.plant.fixture.as_deref().unwrap();
            crate::fixtures::fixture_plant(name)
        }
        other => Err(Error::Config(format!("unknown plant source `{other}`"))),
    }
}

/// Builds the topology described by the config for an `m x n` plant.
pub fn build_topology(cfg: &ExperimentConfig, m: usize, n: usize) -> Result<Topology<f64>> {
    let source = cfg.topology.source.as_deref().unwrap_or("singletons");
    match source {
        "singletons" => {
            if m != n {
                return Err(Error::Config(
                    "singleton topology requires as many inputs as states".into(),
                ));
            }
            Topology::singletons(n)
        }
        "inline" => {
            let one_based = |v: &Option<Vec<usize>>, what: &str| -> Result<Vec<usize>> {
                let v = v
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("[topology] {what} required")))?;
                v.iter()
                    .map(|&i| {
                        i.checked_sub(1)
                            .ok_or_else(|| Error::Config(format!("[topology] {what}: indices are 1-based")))
                    })
                    .collect()
            };
            let x_order = one_based(&cfg.topology.x_order, "x_order")?;
            let u_order = one_based(&cfg.topology.u_order, "u_order")?;
            let n_sizes = cfg
                .topology
                .n_sizes
                .clone()
                .ok_or_else(|| Error::Config("[topology] n_sizes required".into()))?;
            let m_sizes = cfg
                .topology
                .m_sizes
                .clone()
                .ok_or_else(|| Error::Config("[topology] m_sizes required".into()))?;
            let mut topo = Topology::new(x_order, u_order, n_sizes, m_sizes)?;
            if let Some(rows) = &cfg.topology.link_lengths {
                let lengths = nested_to_matrix(rows, "[topology] link_lengths")?;
                topo.set_geometry(Some(CnGeometry::new(lengths, cfg.redesign.prop_speed)?));
            }
            Ok(topo)
        }
        "fixture" => {
            let name = cfg
                .topology
                .fixture
                .as_deref()
                .ok_or_else(|| Error::Config("[topology] fixture name required".into()))?;
            crate::fixtures::fixture_topology(name)
        }
        other => Err(Error::Config(format!("unknown topology source `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_str_named(
            "mode = \"algorithm1\"\n[plant]\nn = 4\n",
            "inline",
        )
        .unwrap();
        assert_eq!(cfg.design.gamma_points, 40);
        assert_eq!(cfg.admm.rho, 100.0);
        assert_eq!(cfg.spectral.k_c, 10);
        assert_eq!(cfg.bandwidth.tau_dpr, 1e-4);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_str_named(
            "mode = \"algorithm1\"\n[plant]\nsource = \"inline\"\n",
            "test.toml",
        )
        .unwrap_err();
        assert!(err.to_string().contains("[plant] a"), "{err}");

        let err = ExperimentConfig::from_str_named(
            "mode = \"algorithm1\"\n[plant]\nn = 2\nwat = 1\n",
            "test.toml",
        )
        .unwrap_err();
        assert!(err.to_string().contains("wat"), "{err}");
    }

    #[test]
    fn canonical_string_round_trips() {
        let cfg = ExperimentConfig::from_str_named(
            "mode = \"case_a\"\nseed = 9\n[plant]\nn = 5\n",
            "inline",
        )
        .unwrap();
        let s = cfg.canonical_string();
        let cfg2 = ExperimentConfig::from_str_named(&s, "roundtrip").unwrap();
        assert_eq!(cfg2.canonical_string(), s);
        assert_eq!(cfg2.seed, 9);
    }
}
