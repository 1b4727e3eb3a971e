//! Coupled homogenized solve on the macro mesh: thermal, then moisture, then
//! elasticity with thermal/hygroscopic eigenstress loads. Coupling is one-way.

use crate::cell::HomogPoint;
use crate::error::{Error, Result};
use crate::field::FieldSolution;
use crate::fem::{
    assemble_elasticity, assemble_scalar, coupling_load, dirichlet_scalar, dirichlet_vector,
    neumann_load, recover_gradient, recover_hessian, volume_load_scalar, volume_load_vector,
};
use crate::homogenize::HomogenizedField;
use crate::mesh::{FieldKind, MacroMesh};
use crate::weight::Weight;
use std::sync::Arc;

/// Constant volume sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sources {
    pub heat: f64,
    pub moisture: f64,
    pub body_force: [f64; 2],
}

/// Constant boundary data per field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcValues {
    pub t_bar: f64,
    pub q_bar: f64,
    pub c_bar: f64,
    pub d_bar: f64,
    pub u_bar: [f64; 2],
    pub sigma_bar: [f64; 2],
}

impl BcValues {
    pub fn dirichlet_only(t_bar: f64, c_bar: f64, u_bar: [f64; 2]) -> Self {
        BcValues {
            t_bar,
            q_bar: 0.0,
            c_bar,
            d_bar: 0.0,
            u_bar,
            sigma_bar: [0.0, 0.0],
        }
    }
}

/// Source of homogenized tensors at macro points.
pub trait CoeffSource: Sync {
    fn at(&self, x: [f64; 2]) -> HomogPoint;
}

impl CoeffSource for HomogenizedField {
    fn at(&self, x: [f64; 2]) -> HomogPoint {
        self.interpolate(x)
    }
}

/// Analytic coefficients of the scale-separated path: k, g, D scale with the
/// weight, the coupling moduli with its square.
pub struct SeparatedCoeffs {
    pub star: HomogPoint,
    pub weight: Arc<Weight>,
}

impl CoeffSource for SeparatedCoeffs {
    fn at(&self, x: [f64; 2]) -> HomogPoint {
        let w = self.weight.eval(x);
        self.star.scale(w, w * w)
    }
}

/// Temperature, moisture, and displacement fields on one mesh.
#[derive(Debug, Clone)]
pub struct FieldTriple {
    pub t: FieldSolution,
    pub c: FieldSolution,
    pub u: FieldSolution,
}

pub type MacroSolution = FieldTriple;

/// Sequential coupled solve of the homogenized problem.
pub fn solve_homogenized(
    macro_mesh: &Arc<MacroMesh>,
    coeffs: &dyn CoeffSource,
    sources: Sources,
    bcs: BcValues,
) -> Result<MacroSolution> {
    for field in [FieldKind::Thermal, FieldKind::Moisture, FieldKind::Elastic] {
        if !macro_mesh.has_dirichlet(field) {
            return Err(Error::Missing(format!(
                "{field:?} field has no Dirichlet boundary part"
            )));
        }
    }
    let mesh = Arc::new(macro_mesh.mesh.clone());

    let mut sys = assemble_scalar(&mesh, |_, x| coeffs.at(x).k)?;
    sys.add_rhs(&volume_load_scalar(&mesh, |_| sources.heat));
    sys.add_rhs(&neumann_load(macro_mesh, FieldKind::Thermal, 1, |_| {
        vec![bcs.q_bar]
    }));
    sys.set_dirichlet(dirichlet_scalar(macro_mesh, FieldKind::Thermal, |_| bcs.t_bar));
    let t = FieldSolution::new(mesh.clone(), 1, sys.solve()?);

    let mut sys = assemble_scalar(&mesh, |_, x| coeffs.at(x).g)?;
    sys.add_rhs(&volume_load_scalar(&mesh, |_| sources.moisture));
    sys.add_rhs(&neumann_load(macro_mesh, FieldKind::Moisture, 1, |_| {
        vec![bcs.d_bar]
    }));
    sys.set_dirichlet(dirichlet_scalar(macro_mesh, FieldKind::Moisture, |_| bcs.c_bar));
    let c = FieldSolution::new(mesh.clone(), 1, sys.solve()?);

    let u = solve_displacement(macro_mesh, coeffs, sources, bcs, &t, &c)?;
    Ok(FieldTriple { t, c, u })
}

/// Elasticity stage with precomputed temperature and moisture fields.
pub fn solve_displacement(
    macro_mesh: &Arc<MacroMesh>,
    coeffs: &dyn CoeffSource,
    sources: Sources,
    bcs: BcValues,
    t: &FieldSolution,
    c: &FieldSolution,
) -> Result<FieldSolution> {
    let mesh = Arc::new(macro_mesh.mesh.clone());
    let mut sys = assemble_elasticity(&mesh, |_, x| coeffs.at(x).d)?;
    sys.add_rhs(&volume_load_vector(&mesh, |_| sources.body_force));
    sys.add_rhs(&neumann_load(macro_mesh, FieldKind::Elastic, 2, |_| {
        vec![bcs.sigma_bar[0], bcs.sigma_bar[1]]
    }));
    sys.add_rhs(&coupling_load(
        &mesh,
        |_, x| coeffs.at(x).a,
        Some(t),
        |_, x| coeffs.at(x).b,
        Some(c),
    ));
    sys.set_dirichlet(dirichlet_vector(macro_mesh, |_| bcs.u_bar));
    Ok(FieldSolution::new(mesh.clone(), 2, sys.solve()?))
}

/// Recover nodal gradients and Hessians for every component of every field.
pub fn prepare_macro_derivatives(sol: &mut FieldTriple) {
    for f in [&mut sol.t, &mut sol.c, &mut sol.u] {
        recover_gradient(f);
        recover_hessian(f);
    }
}
