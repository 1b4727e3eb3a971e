//! Run configuration: TOML schema, validation, and normalization.

use crate::error::{Error, Result};
use crate::material::{FamilyFactors, GeneralComposition, MaterialMode, MaterialModel, MicroPhase};
use crate::mesh::{BcKind, Circle, FaceBc, Frac};
use crate::reconstruct::Order;
use crate::weight;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub material: MaterialSection,
    pub geometry: GeometrySection,
    pub meshes: MeshSection,
    #[serde(default)]
    pub representative_grid: GridSection,
    pub sources: SourceSection,
    #[serde(default)]
    pub bcs: BcSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub mode: MaterialMode,
    pub weight: String,
    pub matrix: MicroPhase,
    pub inclusion: MicroPhase,
    #[serde(default = "FamilyFactors::ones")]
    pub factors: FamilyFactors,
    #[serde(default)]
    pub general: Option<GeneralComposition>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    pub epsilon: String,
    #[serde(default)]
    pub inclusion: Option<Circle>,
}

fn default_domain() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub cell_div: usize,
    pub macro_div: [usize; 2],
    pub per_cell_div: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_rep: [usize; 2],
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n_rep: [5, 5] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default)]
    pub heat: f64,
    #[serde(default)]
    pub moisture: f64,
    #[serde(default)]
    pub body_force: [f64; 2],
}

/// Per-face boundary tags plus the prescribed constant values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    #[serde(default = "FaceBc::all_dirichlet")]
    pub bottom: FaceBc,
    #[serde(default = "FaceBc::all_dirichlet")]
    pub right: FaceBc,
    #[serde(default = "FaceBc::all_dirichlet")]
    pub top: FaceBc,
    #[serde(default = "FaceBc::all_dirichlet")]
    pub left: FaceBc,
    #[serde(default)]
    pub t_bar: f64,
    #[serde(default)]
    pub q_bar: f64,
    #[serde(default)]
    pub c_bar: f64,
    #[serde(default)]
    pub d_bar: f64,
    #[serde(default)]
    pub u_bar: [f64; 2],
    #[serde(default)]
    pub sigma_bar: [f64; 2],
}

impl Default for BcSection {
    fn default() -> Self {
        BcSection {
            bottom: FaceBc::all_dirichlet(),
            right: FaceBc::all_dirichlet(),
            top: FaceBc::all_dirichlet(),
            left: FaceBc::all_dirichlet(),
            t_bar: 0.0,
            q_bar: 0.0,
            c_bar: 0.0,
            d_bar: 0.0,
            u_bar: [0.0, 0.0],
            sigma_bar: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    General,
    Separated,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default = "default_path")]
    pub path: PathKind,
    #[serde(default = "default_orders")]
    pub orders: Vec<u8>,
    #[serde(default = "default_stages")]
    pub stages: Vec<String>,
    #[serde(default = "default_eps_sweep")]
    pub eps_sweep: Vec<String>,
}

fn default_path() -> PathKind {
    PathKind::General
}

fn default_orders() -> Vec<u8> {
    vec![0, 1, 2]
}

fn default_stages() -> Vec<String> {
    ["cell", "homogenize", "macro", "reference", "reconstruct", "compare"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_eps_sweep() -> Vec<String> {
    vec!["1/4".into(), "1/8".into(), "1/16".into()]
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            path: default_path(),
            orders: default_orders(),
            stages: default_stages(),
            eps_sweep: default_eps_sweep(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_true")]
    pub write_vtk: bool,
}

fn default_out_dir() -> String {
    "runs/out".into()
}

fn default_true() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            write_vtk: true,
        }
    }
}

/// Fully validated configuration with derived values resolved.
#[derive(Debug, Clone)]
pub struct NormalizedConfig {
    pub raw: Config,
    pub epsilon: Frac,
    pub eps_sweep: Vec<Frac>,
    pub orders: Vec<Order>,
    pub face_bc: [FaceBc; 4],
}

impl NormalizedConfig {
    pub fn model(&self) -> Result<MaterialModel> {
        let m = &self.raw.material;
        let mut model = MaterialModel::new(
            m.matrix,
            m.inclusion,
            self.raw.geometry.inclusion,
            m.mode,
            weight::resolve(&m.weight)?,
            m.factors,
        );
        model.general = m.general;
        Ok(model)
    }

    /// Normalized TOML with every default filled in.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(&self.raw).unwrap_or_default()
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
}

pub fn load_config(path: &std::path::Path) -> Result<Config> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Validate and normalize; collects every problem instead of stopping at the
/// first one.
pub fn validate_config(cfg: Config) -> Result<NormalizedConfig> {
    let mut errors: Vec<String> = Vec::new();

    let epsilon = match Frac::parse(&cfg.geometry.epsilon) {
        Ok(f) => Some(f),
        Err(e) => {
            errors.push(format!("geometry.epsilon: {e}"));
            None
        }
    };
    if let Some(eps) = epsilon {
        for d in 0..2 {
            let cells = cfg.geometry.domain[d] / eps.value();
            if (cells - cells.round()).abs() > 1e-9 || cells < 0.5 {
                errors.push(format!(
                    "geometry.domain[{d}] = {} is not an integer number of cells of size {}",
                    cfg.geometry.domain[d], eps
                ));
            }
        }
    }
    if cfg.geometry.domain[0] <= 0.0 || cfg.geometry.domain[1] <= 0.0 {
        errors.push("geometry.domain must be positive".into());
    }
    if let Some(c) = &cfg.geometry.inclusion {
        for d in 0..2 {
            if c.radius <= 0.0 || c.center[d] - c.radius <= 0.0 || c.center[d] + c.radius >= 1.0 {
                errors.push(format!(
                    "geometry.inclusion not strictly contained in the unit cell (center {:?}, radius {})",
                    c.center, c.radius
                ));
                break;
            }
        }
    }
    if cfg.meshes.cell_div < 1 {
        errors.push("meshes.cell_div must be at least 1".into());
    }
    if cfg.meshes.per_cell_div < 4 {
        errors.push("meshes.per_cell_div must be at least 4".into());
    }
    if cfg.meshes.macro_div[0] < 1 || cfg.meshes.macro_div[1] < 1 {
        errors.push("meshes.macro_div must be at least 1 per axis".into());
    }
    if cfg.representative_grid.n_rep[0] < 1 || cfg.representative_grid.n_rep[1] < 1 {
        errors.push("representative_grid.n_rep must be at least 1 per axis".into());
    }

    match weight::resolve(&cfg.material.weight) {
        Ok(_) => {}
        Err(e) => errors.push(format!("material.weight: {e}")),
    }
    let p = &cfg.material.matrix;
    let q = &cfg.material.inclusion;
    for (label, ph) in [("matrix", p), ("inclusion", q)] {
        if ph.e <= 0.0 || ph.k <= 0.0 || ph.g <= 0.0 || ph.alpha <= 0.0 || ph.beta <= 0.0 {
            errors.push(format!("material.{label}: all moduli must be positive"));
        }
        if ph.nu <= 0.0 || ph.nu >= 0.5 {
            errors.push(format!(
                "material.{label}: Poisson ratio {} outside (0, 0.5)",
                ph.nu
            ));
        }
    }
    if cfg.material.mode == MaterialMode::Product && cfg.material.factors.nu != 1.0 {
        errors.push("material.factors.nu must be 1.0 in product mode (the ratio is not weight-scaled)".into());
    }

    let face_bc = [cfg.bcs.bottom, cfg.bcs.right, cfg.bcs.top, cfg.bcs.left];
    for (field, pick) in [
        ("thermal", 0usize),
        ("moisture", 1),
        ("elastic", 2),
    ] {
        let any_dirichlet = face_bc.iter().any(|f| {
            let kind = match pick {
                0 => f.thermal,
                1 => f.moisture,
                _ => f.elastic,
            };
            kind == BcKind::Dirichlet
        });
        if !any_dirichlet {
            errors.push(format!(
                "bcs: the {field} field needs a Dirichlet tag on at least one face"
            ));
        }
    }

    let known = [
        "cell",
        "homogenize",
        "macro",
        "reference",
        "reconstruct",
        "compare",
        "convergence",
    ];
    for s in &cfg.pipeline.stages {
        if !known.contains(&s.as_str()) {
            errors.push(format!(
                "pipeline.stages: unknown stage '{s}' (available: {})",
                known.join(", ")
            ));
        }
    }
    let mut orders = Vec::new();
    for o in &cfg.pipeline.orders {
        match o {
            0 => orders.push(Order::Homogenized),
            1 => orders.push(Order::Loms),
            2 => orders.push(Order::Homs),
            other => errors.push(format!("pipeline.orders: {other} is not one of 0, 1, 2")),
        }
    }
    if orders.is_empty() {
        errors.push("pipeline.orders must not be empty".into());
    }
    let mut eps_sweep = Vec::new();
    for e in &cfg.pipeline.eps_sweep {
        match Frac::parse(e) {
            Ok(f) => eps_sweep.push(f),
            Err(err) => errors.push(format!("pipeline.eps_sweep: {err}")),
        }
    }
    if cfg.pipeline.path == PathKind::Separated && cfg.material.mode != MaterialMode::Product {
        errors.push("pipeline.path = separated requires material.mode = product".into());
    }

    // evaluated-tensor ellipticity over a sample grid
    if errors.is_empty() {
        let tmp = NormalizedConfig {
            raw: cfg.clone(),
            epsilon: epsilon.unwrap(),
            eps_sweep: eps_sweep.clone(),
            orders: orders.clone(),
            face_bc,
        };
        if let Ok(model) = tmp.model() {
            let xs: Vec<[f64; 2]> = crate::material::sample_grid(5)
                .into_iter()
                .map(|p| {
                    [
                        p[0] * cfg.geometry.domain[0],
                        p[1] * cfg.geometry.domain[1],
                    ]
                })
                .collect();
            let ys = crate::material::sample_grid(5);
            let rep = crate::material::validate_assumptions(&model, &xs, &ys);
            if !rep.all_elliptic() {
                errors.push(format!(
                    "material loses ellipticity on the sample grid: min eigenvalues k={:.3e} g={:.3e} D={:.3e} alpha={:.3e} beta={:.3e}",
                    rep.min_eig_k, rep.min_eig_g, rep.min_eig_d, rep.min_eig_alpha, rep.min_eig_beta
                ));
            }
        }
    }

    if !errors.is_empty() {
        return Err(Error::ConfigList(errors));
    }
    Ok(NormalizedConfig {
        raw: cfg,
        epsilon: epsilon.unwrap(),
        eps_sweep,
        orders,
        face_bc,
    })
}

/// Description used for the offline cache key: everything the cell tables
/// depend on (material, cell mesh, representative grid, path), nothing they
/// do not (epsilon, macro/fine meshes, sources, boundary data).
#[derive(Serialize)]
pub struct OfflineKeyDesc<'a> {
    pub material: &'a MaterialSection,
    pub inclusion: &'a Option<Circle>,
    pub domain: [f64; 2],
    pub cell_div: usize,
    pub n_rep: [usize; 2],
    pub path: PathKind,
    pub schema: u32,
}

pub fn offline_cache_key(cfg: &NormalizedConfig) -> String {
    crate::cache::content_key(&OfflineKeyDesc {
        material: &cfg.raw.material,
        inclusion: &cfg.raw.geometry.inclusion,
        domain: cfg.raw.geometry.domain,
        cell_div: cfg.raw.meshes.cell_div,
        n_rep: cfg.raw.representative_grid.n_rep,
        path: cfg.raw.pipeline.path,
        schema: crate::cache::SCHEMA_VERSION,
    })
}

pub fn weight_arc(cfg: &NormalizedConfig) -> Result<Arc<crate::weight::Weight>> {
    weight::resolve(&cfg.raw.material.weight)
}
