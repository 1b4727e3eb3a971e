//! Relative L2 and H1 semi-norm errors, fine-scale residual diagnostics, and
//! log-log convergence-rate fitting.

use crate::error::{Error, Result};
use crate::field::FieldSolution;
use crate::fem::{
    assemble_elasticity, assemble_scalar, coupling_load, neumann_load, volume_load_scalar,
    volume_load_vector,
};
use crate::macroscale::{BcValues, FieldTriple, Sources};
use crate::material::MaterialModel;
use crate::mesh::{FieldKind, MacroMesh};
use crate::reference::fine_coefficients;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    H1Semi,
}

/// Relative error of `approx` against `reference` on the shared mesh.
/// L2 uses the 3-point vertex rule; the H1 semi-norm uses the constant P1
/// element gradients. Vector fields sum component contributions under the
/// root.
pub fn relative_error(
    approx: &FieldSolution,
    reference: &FieldSolution,
    norm: Norm,
) -> Result<f64> {
    if approx.mesh.n_nodes() != reference.mesh.n_nodes()
        || approx.ncomp != reference.ncomp
        || approx.mesh.n_elems() != reference.mesh.n_elems()
    {
        return Err(Error::invalid(
            "relative error requires matching meshes and component counts",
        ));
    }
    let mesh = &reference.mesh;
    let mut num = 0.0;
    let mut den = 0.0;
    match norm {
        Norm::L2 => {
            for e in 0..mesh.n_elems() {
                let g = mesh.elem_geom(e);
                let w = g.area / 3.0;
                for &v in &mesh.tris[e] {
                    for comp in 0..approx.ncomp {
                        let a = approx.value(v, comp);
                        let r = reference.value(v, comp);
                        num += w * (a - r) * (a - r);
                        den += w * r * r;
                    }
                }
            }
        }
        Norm::H1Semi => {
            for e in 0..mesh.n_elems() {
                let g = mesh.elem_geom(e);
                for comp in 0..approx.ncomp {
                    let ga = approx.elem_grad(e, comp);
                    let gr = reference.elem_grad(e, comp);
                    num += g.area
                        * ((ga[0] - gr[0]) * (ga[0] - gr[0]) + (ga[1] - gr[1]) * (ga[1] - gr[1]));
                    den += g.area * (gr[0] * gr[0] + gr[1] * gr[1]);
                }
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::ZeroReferenceNorm);
    }
    Ok((num / den).sqrt())
}

/// Normalized residual of the given field triple in the fine-scale discrete
/// system of one equation: ||b - A v|| / ||b|| over non-Dirichlet dofs.
/// The elastic equation takes its eigenstress coupling load from the triple's
/// own temperature and moisture fields.
pub fn residual_diagnostic(
    fine: &MacroMesh,
    model: &MaterialModel,
    sources: Sources,
    bcs: BcValues,
    triple: &FieldTriple,
    field: FieldKind,
) -> Result<f64> {
    let coeffs = fine_coefficients(fine, model)?;
    let mesh = std::sync::Arc::new(fine.mesh.clone());
    let (matrix, rhs, values, ncomp): (_, Vec<f64>, &[f64], usize) = match field {
        FieldKind::Thermal => {
            let sys = assemble_scalar(&mesh, |e, _| coeffs[e].k)?;
            let mut b = volume_load_scalar(&mesh, |_| sources.heat);
            add(&mut b, &neumann_load(fine, FieldKind::Thermal, 1, |_| vec![bcs.q_bar]));
            (sys.matrix, b, &triple.t.values, 1)
        }
        FieldKind::Moisture => {
            let sys = assemble_scalar(&mesh, |e, _| coeffs[e].g)?;
            let mut b = volume_load_scalar(&mesh, |_| sources.moisture);
            add(&mut b, &neumann_load(fine, FieldKind::Moisture, 1, |_| vec![bcs.d_bar]));
            (sys.matrix, b, &triple.c.values, 1)
        }
        FieldKind::Elastic => {
            let sys = assemble_elasticity(&mesh, |e, _| coeffs[e].d)?;
            let mut b = volume_load_vector(&mesh, |_| sources.body_force);
            add(
                &mut b,
                &neumann_load(fine, FieldKind::Elastic, 2, |_| {
                    vec![bcs.sigma_bar[0], bcs.sigma_bar[1]]
                }),
            );
            add(
                &mut b,
                &coupling_load(
                    &mesh,
                    |e, _| coeffs[e].d.contract2(&coeffs[e].alpha),
                    Some(&triple.t),
                    |e, _| coeffs[e].d.contract2(&coeffs[e].beta),
                    Some(&triple.c),
                ),
            );
            (sys.matrix, b, &triple.u.values, 2)
        }
    };
    let av = matrix.matvec(values);
    let mut constrained = vec![false; matrix.n];
    for node in fine.dirichlet_nodes(field) {
        for comp in 0..ncomp {
            constrained[ncomp * node + comp] = true;
        }
    }
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for i in 0..matrix.n {
        if !constrained[i] {
            r2 += (rhs[i] - av[i]) * (rhs[i] - av[i]);
            b2 += rhs[i] * rhs[i];
        }
    }
    if b2 <= 0.0 {
        return Err(Error::ZeroReferenceNorm);
    }
    Ok((r2 / b2).sqrt())
}

fn add(acc: &mut [f64], contribution: &[f64]) {
    for (a, c) in acc.iter_mut().zip(contribution) {
        *a += c;
    }
}

/// Least-squares slope of ln(error) against ln(eps).
pub fn fit_convergence_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::invalid("rate fit needs at least two (eps, error) pairs"));
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(eps, err) in pairs {
        if eps <= 0.0 || err <= 0.0 {
            return Err(Error::invalid("rate fit requires positive eps and error"));
        }
        let (x, y) = (eps.ln(), err.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// One experiment's error table: per field, per order, both norms.
/// Indexing: [order 0/1/2].
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorReport {
    pub t_l2: [f64; 3],
    pub t_h1: [f64; 3],
    pub c_l2: [f64; 3],
    pub c_h1: [f64; 3],
    pub u_l2: [f64; 3],
    pub u_h1: [f64; 3],
}

pub const ERROR_CSV_HEADER: &str = "TerrorL20,TerrorL21,TerrorL22,TerrorH10,TerrorH11,TerrorH12,cerrorL20,cerrorL21,cerrorL22,cerrorH10,cerrorH11,cerrorH12,uerrorL20,uerrorL21,uerrorL22,uerrorH10,uerrorH11,uerrorH12";

impl ErrorReport {
    pub fn csv_row(&self) -> String {
        let cols: Vec<String> = self
            .t_l2
            .iter()
            .chain(self.t_h1.iter())
            .chain(self.c_l2.iter())
            .chain(self.c_h1.iter())
            .chain(self.u_l2.iter())
            .chain(self.u_h1.iter())
            .map(|v| format!("{v:.17e}"))
            .collect();
        cols.join(",")
    }

    pub fn from_triples(
        reconstructions: &[&FieldTriple; 3],
        reference: &FieldTriple,
    ) -> Result<Self> {
        let mut rep = ErrorReport::default();
        for (o, rec) in reconstructions.iter().enumerate() {
            rep.t_l2[o] = relative_error(&rec.t, &reference.t, Norm::L2)?;
            rep.t_h1[o] = relative_error(&rec.t, &reference.t, Norm::H1Semi)?;
            rep.c_l2[o] = relative_error(&rec.c, &reference.c, Norm::L2)?;
            rep.c_h1[o] = relative_error(&rec.c, &reference.c, Norm::H1Semi)?;
            rep.u_l2[o] = relative_error(&rec.u, &reference.u, Norm::L2)?;
            rep.u_h1[o] = relative_error(&rec.u, &reference.u, Norm::H1Semi)?;
        }
        Ok(rep)
    }
}
