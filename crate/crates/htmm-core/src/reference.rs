//! Direct fine-scale solve of the coupled system with oscillatory
//! coefficients, serving as the comparison oracle.

use crate::error::{Error, Result};
use crate::field::FieldSolution;
use crate::fem::{
    assemble_elasticity, assemble_scalar, coupling_load, dirichlet_scalar, dirichlet_vector,
    neumann_load, volume_load_scalar, volume_load_vector,
};
use crate::macroscale::{BcValues, FieldTriple, Sources};
use crate::material::{CoefficientBundle, MaterialModel};
use crate::mesh::{FieldKind, Frac, MacroMesh};
use std::sync::Arc;

/// Per-element bundles on the fine mesh: the macro coordinate is the element
/// centroid, the phase comes from the mesh's own material tag (assigned from
/// the mapped micro coordinate at build time).
pub fn fine_coefficients(
    fine: &MacroMesh,
    model: &MaterialModel,
) -> Result<Vec<CoefficientBundle>> {
    (0..fine.mesh.n_elems())
        .map(|e| model.bundle_for_phase(fine.mesh.centroid(e), fine.mesh.tags[e]))
        .collect()
}

/// Sequential fine-scale solve: temperature, moisture, then displacement with
/// the oscillatory eigenstress load.
pub fn solve_reference(
    fine: &Arc<MacroMesh>,
    model: &MaterialModel,
    epsilon: Frac,
    sources: Sources,
    bcs: BcValues,
) -> Result<FieldTriple> {
    let info = fine
        .mesh
        .fine
        .ok_or_else(|| Error::Missing("reference solve requires a fine mesh".into()))?;
    if info.epsilon != epsilon {
        return Err(Error::invalid(format!(
            "epsilon {} does not match the fine mesh cell size {}",
            epsilon, info.epsilon
        )));
    }
    for field in [FieldKind::Thermal, FieldKind::Moisture, FieldKind::Elastic] {
        if !fine.has_dirichlet(field) {
            return Err(Error::Missing(format!(
                "{field:?} field has no Dirichlet boundary part"
            )));
        }
    }
    let coeffs = fine_coefficients(fine, model)?;
    let mesh = Arc::new(fine.mesh.clone());

    let mut sys = assemble_scalar(&mesh, |e, _| coeffs[e].k)?;
    sys.add_rhs(&volume_load_scalar(&mesh, |_| sources.heat));
    sys.add_rhs(&neumann_load(fine, FieldKind::Thermal, 1, |_| vec![bcs.q_bar]));
    sys.set_dirichlet(dirichlet_scalar(fine, FieldKind::Thermal, |_| bcs.t_bar));
    let t = FieldSolution::new(mesh.clone(), 1, sys.solve()?);

    let mut sys = assemble_scalar(&mesh, |e, _| coeffs[e].g)?;
    sys.add_rhs(&volume_load_scalar(&mesh, |_| sources.moisture));
    sys.add_rhs(&neumann_load(fine, FieldKind::Moisture, 1, |_| vec![bcs.d_bar]));
    sys.set_dirichlet(dirichlet_scalar(fine, FieldKind::Moisture, |_| bcs.c_bar));
    let c = FieldSolution::new(mesh.clone(), 1, sys.solve()?);

    let mut sys = assemble_elasticity(&mesh, |e, _| coeffs[e].d)?;
    sys.add_rhs(&volume_load_vector(&mesh, |_| sources.body_force));
    sys.add_rhs(&neumann_load(fine, FieldKind::Elastic, 2, |_| {
        vec![bcs.sigma_bar[0], bcs.sigma_bar[1]]
    }));
    sys.add_rhs(&coupling_load(
        &mesh,
        |e, _| coeffs[e].d.contract2(&coeffs[e].alpha),
        Some(&t),
        |e, _| coeffs[e].d.contract2(&coeffs[e].beta),
        Some(&c),
    ));
    sys.set_dirichlet(dirichlet_vector(fine, |_| bcs.u_bar));
    let u = FieldSolution::new(mesh.clone(), 2, sys.solve()?);

    Ok(FieldTriple { t, c, u })
}

/// Thermal-only fine-scale solve for sweeps that need just the temperature.
pub fn solve_reference_thermal(
    fine: &Arc<MacroMesh>,
    model: &MaterialModel,
    epsilon: Frac,
    sources: Sources,
    bcs: BcValues,
) -> Result<FieldSolution> {
    let info = fine
        .mesh
        .fine
        .ok_or_else(|| Error::Missing("reference solve requires a fine mesh".into()))?;
    if info.epsilon != epsilon {
        return Err(Error::invalid(format!(
            "epsilon {} does not match the fine mesh cell size {}",
            epsilon, info.epsilon
        )));
    }
    let coeffs = fine_coefficients(fine, model)?;
    let mesh = Arc::new(fine.mesh.clone());
    let mut sys = assemble_scalar(&mesh, |e, _| coeffs[e].k)?;
    sys.add_rhs(&volume_load_scalar(&mesh, |_| sources.heat));
    sys.add_rhs(&neumann_load(fine, FieldKind::Thermal, 1, |_| vec![bcs.q_bar]));
    sys.set_dirichlet(dirichlet_scalar(fine, FieldKind::Thermal, |_| bcs.t_bar));
    Ok(FieldSolution::new(mesh.clone(), 1, sys.solve()?))
}
