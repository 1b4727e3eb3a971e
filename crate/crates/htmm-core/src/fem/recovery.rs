//! Nodal derivative recovery by area-weighted averaging of element gradients.
//!
//! Boundary nodes average one-sided over their adjacent elements. The Hessian
//! is the gradient recovery applied to each recovered gradient component,
//! symmetrized afterwards.

use crate::field::FieldSolution;
use crate::mesh::TriMesh;

/// Area-weighted nodal average of the constant element gradients.
/// Output layout: `[node][comp][d]`.
pub fn recover_gradient_values(mesh: &TriMesh, values: &[f64], ncomp: usize) -> Vec<f64> {
    let n = mesh.n_nodes();
    let mut out = vec![0.0; n * ncomp * 2];
    let mut weight = vec![0.0; n];
    for e in 0..mesh.n_elems() {
        let g = mesh.elem_geom(e);
        let tri = mesh.tris[e];
        for c in 0..ncomp {
            let mut grad = [0.0; 2];
            for k in 0..3 {
                let v = values[tri[k] * ncomp + c];
                grad[0] += v * g.grads[k][0];
                grad[1] += v * g.grads[k][1];
            }
            for &node in &tri {
                out[(node * ncomp + c) * 2] += g.area * grad[0];
                out[(node * ncomp + c) * 2 + 1] += g.area * grad[1];
            }
        }
        for &node in &tri {
            weight[node] += g.area;
        }
    }
    for node in 0..n {
        for c in 0..ncomp {
            out[(node * ncomp + c) * 2] /= weight[node];
            out[(node * ncomp + c) * 2 + 1] /= weight[node];
        }
    }
    out
}

/// Populate the solution's recovered gradient.
pub fn recover_gradient(field: &mut FieldSolution) {
    let g = recover_gradient_values(&field.mesh, &field.values, field.ncomp);
    field.grad = Some(g);
}

/// Populate the recovered Hessian `[node][comp][xx, yy, xy]` by double
/// averaging; requires the gradient first (recovered here if absent).
pub fn recover_hessian(field: &mut FieldSolution) {
    if field.grad.is_none() {
        recover_gradient(field);
    }
    let grad = field.grad.as_ref().unwrap();
    let wide = field.ncomp * 2;
    let second = recover_gradient_values(&field.mesh, grad, wide);
    // second[(node*wide + (c*2+d1))*2 + d2] = d2 of (d1 of comp c)
    let n = field.mesh.n_nodes();
    let mut hess = vec![0.0; n * field.ncomp * 3];
    for node in 0..n {
        for c in 0..field.ncomp {
            let gxx = second[(node * wide + c * 2) * 2];
            let gxy = second[(node * wide + c * 2) * 2 + 1];
            let gyx = second[(node * wide + c * 2 + 1) * 2];
            let gyy = second[(node * wide + c * 2 + 1) * 2 + 1];
            let base = (node * field.ncomp + c) * 3;
            hess[base] = gxx;
            hess[base + 1] = gyy;
            hess[base + 2] = 0.5 * (gxy + gyx);
        }
    }
    field.hess = Some(hess);
}
