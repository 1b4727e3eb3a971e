//! Config-driven experiment runner: pipeline stages behind a common trait,
//! registered by name and selected at runtime.
//!
//! Stage artifacts are memoized on the run context; the offline stage is
//! idempotent through the content-addressed cache, so re-running with a new
//! epsilon skips the cell solves entirely.

use crate::cache;
use crate::cell::CellSolver;
use crate::config::{offline_cache_key, NormalizedConfig, PathKind};
use crate::error::{Error, Result};
use crate::homogenize::{
    build_cell_table, build_separated_table, CellTable, RepresentativeGrid, SeparatedTable,
};
use crate::macroscale::{
    prepare_macro_derivatives, solve_homogenized, BcValues, CoeffSource, FieldTriple,
    SeparatedCoeffs, Sources,
};
use crate::mesh::{
    build_fine_mesh, build_macro_mesh, build_unit_cell_mesh, FieldKind, Frac, MacroMesh,
};
use crate::metrics::{
    fit_convergence_rate, relative_error, residual_diagnostic, ErrorReport, Norm,
    ERROR_CSV_HEADER,
};
use crate::reconstruct::{reconstruct, CellData, Order, ReconstructionInputs};
use crate::reference::{solve_reference, solve_reference_thermal};
use crate::vtk::write_vtk;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Computed,
    CachedSkip,
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    pub name: String,
    pub outcome: StageOutcome,
    pub nodes: usize,
    pub elements: usize,
    pub seconds: f64,
}

pub struct RunContext {
    pub cfg: NormalizedConfig,
    pub out_dir: PathBuf,
    pub cache_root: PathBuf,
    pub eps_override: Option<Vec<Frac>>,
    solver: Option<Arc<CellSolver>>,
    cell_table: Option<Arc<CellTable>>,
    sep_table: Option<Arc<SeparatedTable>>,
    macro_mesh: Option<Arc<MacroMesh>>,
    macro_sol: Option<Arc<FieldTriple>>,
    fine: Option<Arc<MacroMesh>>,
    reference: Option<Arc<FieldTriple>>,
    reconstructions: BTreeMap<u8, Arc<FieldTriple>>,
    pub records: Vec<StageRecord>,
    pub artifacts: Vec<String>,
}

impl RunContext {
    pub fn new(cfg: NormalizedConfig, out_dir: &Path, cache_root: &Path) -> Self {
        RunContext {
            cfg,
            out_dir: out_dir.to_path_buf(),
            cache_root: cache_root.to_path_buf(),
            eps_override: None,
            solver: None,
            cell_table: None,
            sep_table: None,
            macro_mesh: None,
            macro_sol: None,
            fine: None,
            reference: None,
            reconstructions: BTreeMap::new(),
            records: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn sources(&self) -> Sources {
        let s = &self.cfg.raw.sources;
        Sources {
            heat: s.heat,
            moisture: s.moisture,
            body_force: s.body_force,
        }
    }

    pub fn bcs(&self) -> BcValues {
        let b = &self.cfg.raw.bcs;
        BcValues {
            t_bar: b.t_bar,
            q_bar: b.q_bar,
            c_bar: b.c_bar,
            d_bar: b.d_bar,
            u_bar: b.u_bar,
            sigma_bar: b.sigma_bar,
        }
    }

    pub fn solver(&mut self) -> Result<Arc<CellSolver>> {
        if self.solver.is_none() {
            let cell = build_unit_cell_mesh(
                self.cfg.raw.meshes.cell_div,
                self.cfg.raw.geometry.inclusion,
            )?;
            self.solver = Some(Arc::new(CellSolver::new(cell)));
        }
        Ok(self.solver.clone().unwrap())
    }

    pub fn grid(&self) -> Result<RepresentativeGrid> {
        RepresentativeGrid::new(
            [0.0, 0.0],
            self.cfg.raw.geometry.domain,
            self.cfg.raw.representative_grid.n_rep,
        )
    }

    /// Offline tables from memory or cache; never computes.
    pub fn offline_required(&mut self) -> Result<()> {
        if self.cell_table.is_some() || self.sep_table.is_some() {
            return Ok(());
        }
        let key = offline_cache_key(&self.cfg);
        let solver = self.solver()?;
        match self.cfg.raw.pipeline.path {
            PathKind::General => {
                if cache::has_cell_table(&self.cache_root, &key) {
                    let t = cache::load_cell_table(&self.cache_root, &key, solver.n_nodes())?;
                    self.cell_table = Some(Arc::new(t));
                    Ok(())
                } else {
                    Err(Error::Missing(format!(
                        "cell cache {key} not found; run the cell stage first"
                    )))
                }
            }
            PathKind::Separated => {
                if cache::has_separated_table(&self.cache_root, &key) {
                    let t = cache::load_separated_table(&self.cache_root, &key, solver.n_nodes())?;
                    self.sep_table = Some(Arc::new(t));
                    Ok(())
                } else {
                    Err(Error::Missing(format!(
                        "star cache {key} not found; run the cell stage first"
                    )))
                }
            }
        }
    }

    pub fn cell_table(&mut self) -> Result<Arc<CellTable>> {
        self.offline_required()?;
        self.cell_table
            .clone()
            .ok_or_else(|| Error::Missing("general-path cell table unavailable".into()))
    }

    pub fn sep_table(&mut self) -> Result<Arc<SeparatedTable>> {
        self.offline_required()?;
        self.sep_table
            .clone()
            .ok_or_else(|| Error::Missing("scale-separated star table unavailable".into()))
    }

    fn coeff_source(&mut self) -> Result<Box<dyn CoeffSource>> {
        match self.cfg.raw.pipeline.path {
            PathKind::General => Ok(Box::new(self.cell_table()?.homogenized_field())),
            PathKind::Separated => Ok(Box::new(SeparatedCoeffs {
                star: self.sep_table()?.homog_star,
                weight: crate::config::weight_arc(&self.cfg)?,
            })),
        }
    }

    pub fn macro_mesh(&mut self) -> Result<Arc<MacroMesh>> {
        if self.macro_mesh.is_none() {
            let m = build_macro_mesh(
                [0.0, 0.0],
                self.cfg.raw.geometry.domain,
                self.cfg.raw.meshes.macro_div,
                self.cfg.face_bc,
            )?;
            self.macro_mesh = Some(Arc::new(m));
        }
        Ok(self.macro_mesh.clone().unwrap())
    }

    pub fn macro_solution(&mut self) -> Result<Arc<FieldTriple>> {
        if self.macro_sol.is_none() {
            let coeffs = self.coeff_source()?;
            let mesh = self.macro_mesh()?;
            let mut sol = solve_homogenized(&mesh, coeffs.as_ref(), self.sources(), self.bcs())?;
            prepare_macro_derivatives(&mut sol);
            self.macro_sol = Some(Arc::new(sol));
        }
        Ok(self.macro_sol.clone().unwrap())
    }

    pub fn fine_mesh(&mut self) -> Result<Arc<MacroMesh>> {
        if self.fine.is_none() {
            let m = build_fine_mesh(
                [0.0, 0.0],
                self.cfg.raw.geometry.domain,
                self.cfg.epsilon,
                self.cfg.raw.meshes.per_cell_div,
                self.cfg.raw.geometry.inclusion,
                self.cfg.face_bc,
            )?;
            self.fine = Some(Arc::new(m));
        }
        Ok(self.fine.clone().unwrap())
    }

    pub fn reference(&mut self) -> Result<Arc<FieldTriple>> {
        if self.reference.is_none() {
            let fine = self.fine_mesh()?;
            let model = self.cfg.model()?;
            let sol = solve_reference(&fine, &model, self.cfg.epsilon, self.sources(), self.bcs())?;
            self.reference = Some(Arc::new(sol));
        }
        Ok(self.reference.clone().unwrap())
    }

    pub fn reconstruction(&mut self, order: Order) -> Result<Arc<FieldTriple>> {
        let tag = match order {
            Order::Homogenized => 0u8,
            Order::Loms => 1,
            Order::Homs => 2,
        };
        if let Some(r) = self.reconstructions.get(&tag) {
            return Ok(r.clone());
        }
        let fine = self.fine_mesh()?;
        let macro_sol = self.macro_solution()?;
        let solver = self.solver()?;
        let rec = match self.cfg.raw.pipeline.path {
            PathKind::General => {
                let table = self.cell_table()?;
                reconstruct(&ReconstructionInputs {
                    epsilon: self.cfg.epsilon,
                    fine: &fine,
                    cell_mesh: &solver.cell.mesh,
                    macro_sol: &macro_sol,
                    order,
                    data: CellData::General(&table),
                })?
            }
            PathKind::Separated => {
                let table = self.sep_table()?;
                reconstruct(&ReconstructionInputs {
                    epsilon: self.cfg.epsilon,
                    fine: &fine,
                    cell_mesh: &solver.cell.mesh,
                    macro_sol: &macro_sol,
                    order,
                    data: CellData::Separated {
                        table: &table,
                        weight: crate::config::weight_arc(&self.cfg)?,
                    },
                })?
            }
        };
        let rec = Arc::new(rec);
        self.reconstructions.insert(tag, rec.clone());
        Ok(rec)
    }

    fn artifact(&mut self, rel: &str) -> PathBuf {
        self.artifacts.push(rel.to_string());
        self.out_dir.join(rel)
    }
}

/// One pipeline stage, registered by name.
pub trait Stage: Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Mesh (nodes, elements) this stage reports in the cost table.
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize);
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome>;
}

struct CellStage;

impl Stage for CellStage {
    fn name(&self) -> &'static str {
        "cell"
    }
    fn summary(&self) -> &'static str {
        "offline: solve first- and second-order cell problems over the representative grid"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.solver()
            .map(|s| (s.n_nodes(), s.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        let key = offline_cache_key(&cx.cfg);
        let solver = cx.solver()?;
        let model = cx.cfg.model()?;
        match cx.cfg.raw.pipeline.path {
            PathKind::General => {
                if cache::has_cell_table(&cx.cache_root, &key) {
                    cx.offline_required()?;
                    return Ok(StageOutcome::CachedSkip);
                }
                let grid = cx.grid()?;
                let table = build_cell_table(&solver, &model, &grid)?;
                cache::store_cell_table(&cx.cache_root, &key, &table, solver.n_nodes())?;
                cx.cell_table = Some(Arc::new(table));
            }
            PathKind::Separated => {
                if cache::has_separated_table(&cx.cache_root, &key) {
                    cx.offline_required()?;
                    return Ok(StageOutcome::CachedSkip);
                }
                let table = build_separated_table(&solver, &model)?;
                cache::store_separated_table(&cx.cache_root, &key, &table, solver.n_nodes())?;
                cx.sep_table = Some(Arc::new(table));
            }
        }
        Ok(StageOutcome::Computed)
    }
}

struct HomogenizeStage;

impl Stage for HomogenizeStage {
    fn name(&self) -> &'static str {
        "homogenize"
    }
    fn summary(&self) -> &'static str {
        "materialize homogenized tensors (CSV) from the offline tables"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.solver()
            .map(|s| (s.n_nodes(), s.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        cx.offline_required()?;
        let path = cx.artifact("homogenized.csv");
        std::fs::create_dir_all(&cx.out_dir)?;
        let mut out = String::new();
        out.push_str("kind,x1,x2,k11,k12,k22,g11,g12,g22,d11,d12,d13,d22,d23,d33,a11,a12,a22,b11,b12,b22\n");
        let mut write_row = |kind: &str, x: [f64; 2], h: &crate::cell::HomogPoint| {
            let d = &h.d.0;
            out.push_str(&format!(
                "{kind},{:.17e},{:.17e},{}\n",
                x[0],
                x[1],
                [
                    h.k.at(0, 0), h.k.at(0, 1), h.k.at(1, 1),
                    h.g.at(0, 0), h.g.at(0, 1), h.g.at(1, 1),
                    d[0][0], d[0][1], d[0][2], d[1][1], d[1][2], d[2][2],
                    h.a.at(0, 0), h.a.at(0, 1), h.a.at(1, 1),
                    h.b.at(0, 0), h.b.at(0, 1), h.b.at(1, 1),
                ]
                .map(|v| format!("{v:.17e}"))
                .join(",")
            ));
        };
        match cx.cfg.raw.pipeline.path {
            PathKind::General => {
                let table = cx.cell_table()?;
                for i in 0..table.grid.len() {
                    write_row("grid", table.grid.point(i), &table.homog[i]);
                }
            }
            PathKind::Separated => {
                let table = cx.sep_table()?;
                write_row("star", [f64::NAN, f64::NAN], &table.homog_star);
            }
        }
        std::fs::write(path, out)?;
        Ok(StageOutcome::Computed)
    }
}

struct MacroStage;

impl Stage for MacroStage {
    fn name(&self) -> &'static str {
        "macro"
    }
    fn summary(&self) -> &'static str {
        "solve the coupled homogenized problem on the macro mesh"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.macro_mesh()
            .map(|m| (m.mesh.n_nodes(), m.mesh.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        let sol = cx.macro_solution()?;
        if cx.cfg.raw.outputs.write_vtk {
            let path = cx.artifact("macro_fields.vtk");
            write_vtk(
                &path,
                &sol.t.mesh,
                &[("T0", &sol.t), ("c0", &sol.c), ("u0", &sol.u)],
            )?;
        }
        Ok(StageOutcome::Computed)
    }
}

struct ReferenceStage;

impl Stage for ReferenceStage {
    fn name(&self) -> &'static str {
        "reference"
    }
    fn summary(&self) -> &'static str {
        "direct fine-scale solve of the oscillatory coupled system"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.fine_mesh()
            .map(|m| (m.mesh.n_nodes(), m.mesh.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        let sol = cx.reference()?;
        if cx.cfg.raw.outputs.write_vtk {
            let path = cx.artifact("reference.vtk");
            write_vtk(
                &path,
                &sol.t.mesh,
                &[("T", &sol.t), ("c", &sol.c), ("u", &sol.u)],
            )?;
        }
        Ok(StageOutcome::Computed)
    }
}

struct ReconstructStage;

impl Stage for ReconstructStage {
    fn name(&self) -> &'static str {
        "reconstruct"
    }
    fn summary(&self) -> &'static str {
        "evaluate multiscale reconstructions on the fine mesh"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.fine_mesh()
            .map(|m| (m.mesh.n_nodes(), m.mesh.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        for order in cx.cfg.orders.clone() {
            let rec = cx.reconstruction(order)?;
            if cx.cfg.raw.outputs.write_vtk {
                let path = cx.artifact(&format!("reconstructed_o{}.vtk", order.label()));
                write_vtk(
                    &path,
                    &rec.t.mesh,
                    &[("T", &rec.t), ("c", &rec.c), ("u", &rec.u)],
                )?;
            }
        }
        Ok(StageOutcome::Computed)
    }
}

struct CompareStage;

impl Stage for CompareStage {
    fn name(&self) -> &'static str {
        "compare"
    }
    fn summary(&self) -> &'static str {
        "error report against the reference plus residual diagnostics"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.fine_mesh()
            .map(|m| (m.mesh.n_nodes(), m.mesh.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        let reference = cx.reference()?;
        let rec0 = cx.reconstruction(Order::Homogenized)?;
        let rec1 = cx.reconstruction(Order::Loms)?;
        let rec2 = cx.reconstruction(Order::Homs)?;
        let report = ErrorReport::from_triples(&[&rec0, &rec1, &rec2], &reference)?;
        std::fs::create_dir_all(&cx.out_dir)?;
        let path = cx.artifact("errors.csv");
        std::fs::write(path, format!("{ERROR_CSV_HEADER}\n{}\n", report.csv_row()))?;

        let fine = cx.fine_mesh()?;
        let model = cx.cfg.model()?;
        let mut res = String::from("field,order,residual\n");
        for (field, label) in [
            (FieldKind::Thermal, "T"),
            (FieldKind::Moisture, "c"),
            (FieldKind::Elastic, "u"),
        ] {
            for (order, rec) in [("0", &rec0), ("1", &rec1), ("2", &rec2)] {
                let r =
                    residual_diagnostic(&fine, &model, cx.sources(), cx.bcs(), rec, field)?;
                res.push_str(&format!("{label},{order},{r:.17e}\n"));
            }
        }
        let path = cx.artifact("residuals.csv");
        std::fs::write(path, res)?;
        Ok(StageOutcome::Computed)
    }
}

struct ConvergenceStage;

impl Stage for ConvergenceStage {
    fn name(&self) -> &'static str {
        "convergence"
    }
    fn summary(&self) -> &'static str {
        "epsilon sweep of thermal reconstruction errors with fitted rates"
    }
    fn cost_mesh(&self, cx: &mut RunContext) -> (usize, usize) {
        cx.fine_mesh()
            .map(|m| (m.mesh.n_nodes(), m.mesh.n_elems()))
            .unwrap_or((0, 0))
    }
    fn run(&self, cx: &mut RunContext) -> Result<StageOutcome> {
        let eps_list = cx
            .eps_override
            .clone()
            .unwrap_or_else(|| cx.cfg.eps_sweep.clone());
        if eps_list.is_empty() {
            return Err(Error::invalid("convergence sweep needs at least one epsilon"));
        }
        let model = cx.cfg.model()?;
        let macro_sol = cx.macro_solution()?;
        let solver = cx.solver()?;
        let mut rows = String::from("eps,TerrorH10,TerrorH12\n");
        let mut homog_pairs = Vec::new();
        let mut homs_pairs = Vec::new();
        for eps in &eps_list {
            let fine = Arc::new(build_fine_mesh(
                [0.0, 0.0],
                cx.cfg.raw.geometry.domain,
                *eps,
                cx.cfg.raw.meshes.per_cell_div,
                cx.cfg.raw.geometry.inclusion,
                cx.cfg.face_bc,
            )?);
            let t_ref = solve_reference_thermal(&fine, &model, *eps, cx.sources(), cx.bcs())?;
            let mut errs = [0.0; 2];
            for (slot, order) in [(0usize, Order::Homogenized), (1, Order::Homs)] {
                let rec = match cx.cfg.raw.pipeline.path {
                    PathKind::General => {
                        let table = cx.cell_table()?;
                        reconstruct(&ReconstructionInputs {
                            epsilon: *eps,
                            fine: &fine,
                            cell_mesh: &solver.cell.mesh,
                            macro_sol: &macro_sol,
                            order,
                            data: CellData::General(&table),
                        })?
                    }
                    PathKind::Separated => {
                        let table = cx.sep_table()?;
                        reconstruct(&ReconstructionInputs {
                            epsilon: *eps,
                            fine: &fine,
                            cell_mesh: &solver.cell.mesh,
                            macro_sol: &macro_sol,
                            order,
                            data: CellData::Separated {
                                table: &table,
                                weight: crate::config::weight_arc(&cx.cfg)?,
                            },
                        })?
                    }
                };
                errs[slot] = relative_error(&rec.t, &t_ref, Norm::H1Semi)?;
            }
            rows.push_str(&format!(
                "{},{:.17e},{:.17e}\n",
                eps,
                errs[0],
                errs[1]
            ));
            homog_pairs.push((eps.value(), errs[0]));
            homs_pairs.push((eps.value(), errs[1]));
        }
        std::fs::create_dir_all(&cx.out_dir)?;
        let path = cx.artifact("convergence.csv");
        std::fs::write(path, rows)?;
        if homog_pairs.len() >= 2 {
            let s0 = fit_convergence_rate(&homog_pairs)?;
            let s2 = fit_convergence_rate(&homs_pairs)?;
            let path = cx.artifact("convergence_slopes.csv");
            std::fs::write(
                path,
                format!("slope_homogenized,slope_homs\n{s0:.17e},{s2:.17e}\n"),
            )?;
        }
        Ok(StageOutcome::Computed)
    }
}

/// Canonical stage order; selection by name happens against this registry.
pub fn registry() -> Vec<Box<dyn Stage>> {
    vec![
        Box::new(CellStage),
        Box::new(HomogenizeStage),
        Box::new(MacroStage),
        Box::new(ReferenceStage),
        Box::new(ReconstructStage),
        Box::new(CompareStage),
        Box::new(ConvergenceStage),
    ]
}

pub fn stage_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<StageRecord>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn outcome(&self, stage: &str) -> Option<StageOutcome> {
        self.records
            .iter()
            .find(|r| r.name == stage)
            .map(|r| r.outcome)
    }
}

/// Execute the requested stages in canonical order, then write the cost
/// table and the run manifest.
pub fn run_pipeline(cx: &mut RunContext, requested: &[String]) -> Result<RunReport> {
    let all = registry();
    for name in requested {
        if !all.iter().any(|s| s.name() == name.as_str()) {
            return Err(Error::invalid(format!(
                "unknown stage '{name}' (available: {})",
                stage_names().join(", ")
            )));
        }
    }
    std::fs::create_dir_all(&cx.out_dir)?;
    for stage in &all {
        if !requested.iter().any(|n| n == stage.name()) {
            continue;
        }
        let start = Instant::now();
        let outcome = stage.run(cx)?;
        let seconds = start.elapsed().as_secs_f64();
        let (nodes, elements) = stage.cost_mesh(cx);
        cx.records.push(StageRecord {
            name: stage.name().to_string(),
            outcome,
            nodes,
            elements,
            seconds,
        });
    }

    // Table-style cost report: stage, mesh sizes, wall time
    let mut timing = String::from("stage,nodes,elements,seconds,outcome\n");
    for r in &cx.records {
        timing.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            r.name,
            r.nodes,
            r.elements,
            r.seconds,
            match r.outcome {
                StageOutcome::Computed => "computed",
                StageOutcome::CachedSkip => "cached",
            }
        ));
    }
    std::fs::write(cx.out_dir.join("timing.csv"), timing)?;

    let manifest = serde_json::json!({
        "config_hash": cache::content_key(&cx.cfg.raw),
        "offline_cache_key": offline_cache_key(&cx.cfg),
        "stages": cx.records.iter().map(|r| {
            serde_json::json!({
                "name": r.name,
                "outcome": match r.outcome {
                    StageOutcome::Computed => "computed",
                    StageOutcome::CachedSkip => "cached",
                },
            })
        }).collect::<Vec<_>>(),
        "artifacts": cx.artifacts,
    });
    std::fs::write(
        cx.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(RunReport {
        records: cx.records.clone(),
        artifacts: cx.artifacts.clone(),
    })
}
