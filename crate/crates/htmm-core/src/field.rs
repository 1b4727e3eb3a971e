//! Nodal P1 fields with optional recovered derivatives.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use std::sync::Arc;

/// Nodal values of a scalar or vector field on a triangulation, node-major:
/// `values[node * ncomp + c]`. Recovered derivatives are nodal as well:
/// gradients `[node][comp][d]`, Hessians `[node][comp][xx, yy, xy]`.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub mesh: Arc<TriMesh>,
    pub ncomp: usize,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub hess: Option<Vec<f64>>,
}

impl FieldSolution {
    pub fn new(mesh: Arc<TriMesh>, ncomp: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.n_nodes() * ncomp);
        FieldSolution {
            mesh,
            ncomp,
            values,
            grad: None,
            hess: None,
        }
    }

    pub fn zero(mesh: Arc<TriMesh>, ncomp: usize) -> Self {
        let n = mesh.n_nodes() * ncomp;
        Self::new(mesh, ncomp, vec![0.0; n])
    }

    pub fn value(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.ncomp + comp]
    }

    /// P1 interpolation at an arbitrary point.
    pub fn eval(&self, x: [f64; 2], comp: usize) -> f64 {
        let (e, bary) = self.mesh.locate(x);
        let tri = self.mesh.tris[e];
        (0..3).map(|k| bary[k] * self.value(tri[k], comp)).sum()
    }

    pub fn grad_at_node(&self, node: usize, comp: usize) -> Result<[f64; 2]> {
        let g = self
            .grad
            .as_ref()
            .ok_or_else(|| Error::Missing("recovered gradient not present".into()))?;
        let base = (node * self.ncomp + comp) * 2;
        Ok([g[base], g[base + 1]])
    }

    pub fn hess_at_node(&self, node: usize, comp: usize) -> Result<[f64; 3]> {
        let h = self
            .hess
            .as_ref()
            .ok_or_else(|| Error::Missing("recovered Hessian not present".into()))?;
        let base = (node * self.ncomp + comp) * 3;
        Ok([h[base], h[base + 1], h[base + 2]])
    }

    /// P1 interpolation of a recovered nodal derivative array at a point.
    pub fn eval_nodal(&self, data: &[f64], stride: usize, slot: usize, x: [f64; 2], comp: usize) -> f64 {
        let (e, bary) = self.mesh.locate(x);
        let tri = self.mesh.tris[e];
        (0..3)
            .map(|k| bary[k] * data[(tri[k] * self.ncomp + comp) * stride + slot])
            .sum()
    }

    /// Constant gradient of the P1 field on one element.
    pub fn elem_grad(&self, e: usize, comp: usize) -> [f64; 2] {
        let g = self.mesh.elem_geom(e);
        let tri = self.mesh.tris[e];
        let mut out = [0.0; 2];
        for k in 0..3 {
            let v = self.value(tri[k], comp);
            out[0] += v * g.grads[k][0];
            out[1] += v * g.grads[k][1];
        }
        out
    }
}
