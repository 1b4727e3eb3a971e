//! P1 assembly of diffusion and plane-strain elasticity forms.
//!
//! Coefficients are evaluated once per element at the centroid; loads use the
//! 3-point vertex rule; Neumann edge loads use the trapezoid rule. Scalar
//! dofs coincide with node ids; vector dofs are interleaved (2*node + comp).

use crate::error::{Error, Result};
use crate::field::FieldSolution;
use crate::fem::system::{CsrMatrix, SparseSystem};
use crate::mesh::{BcKind, FieldKind, MacroMesh, TriMesh};
use crate::tensor::{ElasticTensor, Mat2};

/// Stiffness of the scalar diffusion form with a per-element tensor.
pub fn assemble_scalar(
    mesh: &TriMesh,
    coeff: impl Fn(usize, [f64; 2]) -> Mat2,
) -> Result<SparseSystem> {
    let n = mesh.n_nodes();
    let mut triplets = Vec::with_capacity(mesh.n_elems() * 9);
    for e in 0..mesh.n_elems() {
        let g = mesh.elem_geom(e);
        let k = coeff(e, g.centroid);
        if k.min_eigenvalue() <= 0.0 {
            return Err(Error::Ellipticity(format!(
                "scalar coefficient not elliptic at element {e} (centroid {:?})",
                g.centroid
            )));
        }
        let tri = mesh.tris[e];
        for a in 0..3 {
            let ka = k.mul_vec(g.grads[a]);
            for b in 0..3 {
                let v = g.area * (ka[0] * g.grads[b][0] + ka[1] * g.grads[b][1]);
                triplets.push((tri[a], tri[b], v));
            }
        }
    }
    Ok(SparseSystem::new(CsrMatrix::from_triplets(n, &triplets)))
}

/// Stiffness of the vector elasticity form, B^T C B with engineering shear.
pub fn assemble_elasticity(
    mesh: &TriMesh,
    elast: impl Fn(usize, [f64; 2]) -> ElasticTensor,
) -> Result<SparseSystem> {
    let n = 2 * mesh.n_nodes();
    let mut triplets = Vec::with_capacity(mesh.n_elems() * 36);
    for e in 0..mesh.n_elems() {
        let g = mesh.elem_geom(e);
        let d = elast(e, g.centroid);
        if d.min_eigenvalue() <= 0.0 {
            return Err(Error::Ellipticity(format!(
                "elasticity tensor not positive definite at element {e}"
            )));
        }
        let tri = mesh.tris[e];
        // B rows: (e11, e22, gamma12) per nodal dof
        let mut b = [[0.0; 6]; 3];
        for a in 0..3 {
            b[0][2 * a] = g.grads[a][0];
            b[1][2 * a + 1] = g.grads[a][1];
            b[2][2 * a] = g.grads[a][1];
            b[2][2 * a + 1] = g.grads[a][0];
        }
        for p in 0..6 {
            let dof_p = 2 * tri[p / 2] + p % 2;
            for q in 0..6 {
                let dof_q = 2 * tri[q / 2] + q % 2;
                let mut v = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        v += b[r][p] * d.0[r][s] * b[s][q];
                    }
                }
                triplets.push((dof_p, dof_q, g.area * v));
            }
        }
    }
    Ok(SparseSystem::new(CsrMatrix::from_triplets(n, &triplets)))
}

/// Volume load for a scalar equation, 3-point vertex rule.
pub fn volume_load_scalar(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elems() {
        let g = mesh.elem_geom(e);
        let w = g.area / 3.0;
        for &v in &mesh.tris[e] {
            rhs[v] += w * f(mesh.nodes[v]);
        }
    }
    rhs
}

/// Volume load for the vector equation.
pub fn volume_load_vector(mesh: &TriMesh, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mut rhs = vec![0.0; 2 * mesh.n_nodes()];
    for e in 0..mesh.n_elems() {
        let g = mesh.elem_geom(e);
        let w = g.area / 3.0;
        for &v in &mesh.tris[e] {
            let fv = f(mesh.nodes[v]);
            rhs[2 * v] += w * fv[0];
            rhs[2 * v + 1] += w * fv[1];
        }
    }
    rhs
}

/// Eigenstress coupling load for the vector equation: adds
/// integral of (A(x) T(x) + B(x) c(x)) : grad(v) with centroid evaluation.
/// Pass `None` for an absent scalar field.
pub fn coupling_load(
    mesh: &TriMesh,
    tensor_a: impl Fn(usize, [f64; 2]) -> Mat2,
    field_t: Option<&FieldSolution>,
    tensor_b: impl Fn(usize, [f64; 2]) -> Mat2,
    field_c: Option<&FieldSolution>,
) -> Vec<f64> {
    let mut rhs = vec![0.0; 2 * mesh.n_nodes()];
    let centroid_value = |fld: &FieldSolution, e: usize| -> f64 {
        let tri = mesh.tris[e];
        (fld.value(tri[0], 0) + fld.value(tri[1], 0) + fld.value(tri[2], 0)) / 3.0
    };
    for e in 0..mesh.n_elems() {
        let g = mesh.elem_geom(e);
        let mut stress = Mat2::zero();
        if let Some(t) = field_t {
            stress = stress.add(&tensor_a(e, g.centroid).scale(centroid_value(t, e)));
        }
        if let Some(c) = field_c {
            stress = stress.add(&tensor_b(e, g.centroid).scale(centroid_value(c, e)));
        }
        let tri = mesh.tris[e];
        for a in 0..3 {
            for i in 0..2 {
                let mut v = 0.0;
                for j in 0..2 {
                    v += stress.at(i, j) * g.grads[a][j];
                }
                rhs[2 * tri[a] + i] += g.area * v;
            }
        }
    }
    rhs
}

/// Neumann load on faces where the given field is flux-tagged, trapezoid rule.
/// `flux` returns ncomp values per boundary point.
pub fn neumann_load(
    macro_mesh: &MacroMesh,
    field: FieldKind,
    ncomp: usize,
    flux: impl Fn([f64; 2]) -> Vec<f64>,
) -> Vec<f64> {
    let mesh = &macro_mesh.mesh;
    let mut rhs = vec![0.0; ncomp * mesh.n_nodes()];
    for be in &mesh.boundary_edges {
        if macro_mesh.face_bc(be.face).kind(field) != BcKind::Neumann {
            continue;
        }
        let [a, b] = be.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let fa = flux(pa);
        let fb = flux(pb);
        for c in 0..ncomp {
            rhs[ncomp * a + c] += 0.5 * len * fa[c];
            rhs[ncomp * b + c] += 0.5 * len * fb[c];
        }
    }
    rhs
}

/// Dirichlet constraints for a scalar field from the tagged faces.
pub fn dirichlet_scalar(
    macro_mesh: &MacroMesh,
    field: FieldKind,
    value: impl Fn([f64; 2]) -> f64,
) -> Vec<(usize, f64)> {
    macro_mesh
        .dirichlet_nodes(field)
        .into_iter()
        .map(|n| (n, value(macro_mesh.mesh.nodes[n])))
        .collect()
}

/// Dirichlet constraints for the displacement field (both components).
pub fn dirichlet_vector(
    macro_mesh: &MacroMesh,
    value: impl Fn([f64; 2]) -> [f64; 2],
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for n in macro_mesh.dirichlet_nodes(FieldKind::Elastic) {
        let v = value(macro_mesh.mesh.nodes[n]);
        out.push((2 * n, v[0]));
        out.push((2 * n + 1, v[1]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_macro_mesh, build_unit_cell_mesh, FaceBc};
    use crate::mesh::{DiagonalPattern, StructuredInfo};

    /// Single unit right triangle (0,0), (1,0), (0,1).
    fn unit_right_triangle() -> TriMesh {
        TriMesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            tris: vec![[0, 1, 2]],
            tags: vec![0],
            boundary_edges: vec![],
            info: StructuredInfo {
                origin: [0.0, 0.0],
                extent: [1.0, 1.0],
                ndiv: [1, 1],
                pattern: DiagonalPattern::Uniform,
            },
            fine: None,
        }
    }

    #[test]
    fn unit_triangle_stiffness_matches_hand_integration() {
        let mesh = unit_right_triangle();
        let sys = assemble_scalar(&mesh, |_, _| Mat2::identity()).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (sys.matrix.get(i, j) - expect[i][j]).abs() < 1e-15,
                    "K[{i}][{j}] = {} expected {}",
                    sys.matrix.get(i, j),
                    expect[i][j]
                );
            }
        }
    }

    #[test]
    fn scalar_coefficient_scaling_is_linear() {
        let mesh = unit_right_triangle();
        let base = assemble_scalar(&mesh, |_, _| Mat2::identity()).unwrap();
        let scaled = assemble_scalar(&mesh, |_, _| Mat2::isotropic(3.5)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((scaled.matrix.get(i, j) - 3.5 * base.matrix.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn global_scalar_rows_sum_to_zero() {
        let cell = build_unit_cell_mesh(2, None).unwrap();
        let sys = assemble_scalar(&cell.mesh, |_, _| Mat2::identity()).unwrap();
        for i in 0..sys.n_dofs() {
            assert!(sys.matrix.row_sum(i).abs() < 1e-13, "row {i} sum nonzero");
        }
        assert!(sys.matrix.symmetry_defect() < 1e-13);
    }

    #[test]
    fn rigid_body_modes_have_zero_energy() {
        let mesh = unit_right_triangle();
        let d = ElasticTensor::from_young_poisson_plane_strain(7.0, 0.3);
        let sys = assemble_elasticity(&mesh, |_, _| d).unwrap();
        // translation
        let tx: Vec<f64> = (0..6).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let ktx = sys.matrix.matvec(&tx);
        assert!(ktx.iter().all(|v| v.abs() < 1e-13));
        // infinitesimal rotation (-y, x)
        let mut rot = vec![0.0; 6];
        for (a, p) in mesh.nodes.iter().enumerate() {
            rot[2 * a] = -p[1];
            rot[2 * a + 1] = p[0];
        }
        let krot = sys.matrix.matvec(&rot);
        assert!(
            krot.iter().all(|v| v.abs() < 1e-12),
            "rotation energy nonzero: {krot:?}"
        );
    }

    #[test]
    fn elasticity_patch_test_reproduces_linear_field() {
        // 2x2 patch, constant D, exact linear Dirichlet data on the boundary
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [2, 2],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let d = ElasticTensor::from_young_poisson_plane_strain(10.0, 0.3);
        let exact = |p: [f64; 2]| [0.03 * p[0] + 0.01 * p[1], -0.02 * p[0] + 0.04 * p[1]];
        let mut sys = assemble_elasticity(&m.mesh, |_, _| d).unwrap();
        sys.set_dirichlet(dirichlet_vector(&m, exact));
        let x = sys.solve().unwrap();
        for (n, p) in m.mesh.nodes.iter().enumerate() {
            let u = exact(*p);
            assert!(
                (x[2 * n] - u[0]).abs() < 1e-10 && (x[2 * n + 1] - u[1]).abs() < 1e-10,
                "patch test failed at node {n}"
            );
        }
    }

    #[test]
    fn constant_volume_load_totals_source_times_area() {
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [5, 5],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let rhs = volume_load_scalar(&m.mesh, |_| 500.0);
        let total: f64 = rhs.iter().sum();
        assert!((total - 500.0).abs() < 1e-9);
    }

    #[test]
    fn linear_volume_load_total_is_exact() {
        // vertex rule integrates the total of a linear source exactly
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [4, 4],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let rhs = volume_load_scalar(&m.mesh, |p| 2.0 * p[0] + 3.0 * p[1]);
        let total: f64 = rhs.iter().sum();
        let analytic = 2.0 * 0.5 + 3.0 * 0.5;
        assert!((total - analytic).abs() < 1e-12);
    }

    #[test]
    fn neumann_flux_on_one_edge() {
        let mut bc = [FaceBc::all_dirichlet(); 4];
        bc[0].thermal = BcKind::Neumann;
        let m = build_macro_mesh([0.0, 0.0], [1.0, 1.0], [4, 4], bc).unwrap();
        let rhs = neumann_load(&m, FieldKind::Thermal, 1, |_| vec![2.5]);
        let total: f64 = rhs.iter().sum();
        assert!((total - 2.5).abs() < 1e-12, "edge integral of constant flux");
        // zero flux contributes nothing
        let zero = neumann_load(&m, FieldKind::Thermal, 1, |_| vec![0.0]);
        assert!(zero.iter().all(|v| *v == 0.0));
        // fully Dirichlet field receives nothing on untagged faces
        let none = neumann_load(&m, FieldKind::Moisture, 1, |_| vec![2.5]);
        assert!(none.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_scalar_field_gives_zero_coupling() {
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [3, 3],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let mesh = std::sync::Arc::new(m.mesh.clone());
        let t = FieldSolution::zero(mesh.clone(), 1);
        let rhs = coupling_load(&m.mesh, |_, _| Mat2::identity(), Some(&t), |_, _| Mat2::zero(), None);
        assert!(rhs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_eigenstress_matches_direct_quadrature() {
        // A = I, T = 1: load must equal the assembled divergence of a uniform
        // isotropic stress, cross-checked against direct per-element quadrature
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [3, 3],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let mesh = std::sync::Arc::new(m.mesh.clone());
        let ones = FieldSolution::new(mesh.clone(), 1, vec![1.0; mesh.n_nodes()]);
        let rhs = coupling_load(&m.mesh, |_, _| Mat2::identity(), Some(&ones), |_, _| Mat2::zero(), None);
        // oracle: independent quadrature of integral grad(phi_a) . I
        let mut oracle = vec![0.0; 2 * m.mesh.n_nodes()];
        for e in 0..m.mesh.n_elems() {
            let g = m.mesh.elem_geom(e);
            for (a, &v) in m.mesh.tris[e].iter().enumerate() {
                oracle[2 * v] += g.area * g.grads[a][0];
                oracle[2 * v + 1] += g.area * g.grads[a][1];
            }
        }
        for i in 0..rhs.len() {
            assert!((rhs[i] - oracle[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn all_dirichlet_zero_with_zero_load_is_zero() {
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [4, 4],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let mut sys = assemble_scalar(&m.mesh, |_, _| Mat2::identity()).unwrap();
        sys.set_dirichlet(dirichlet_scalar(&m, FieldKind::Thermal, |_| 0.0));
        let x = sys.solve().unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn constant_dirichlet_reproduced_in_interior() {
        // zero source, constant boundary data 273.15 -> interior equals it
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [6, 6],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let mut sys = assemble_scalar(&m.mesh, |_, _| Mat2::isotropic(3.0)).unwrap();
        sys.set_dirichlet(dirichlet_scalar(&m, FieldKind::Thermal, |_| 273.15));
        let x = sys.solve().unwrap();
        for v in &x {
            assert!((v - 273.15).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_manufactured_solution_exact() {
        // u = x1 is harmonic and P1-exact: nodal error at solver tolerance
        let m = build_macro_mesh(
            [0.0, 0.0],
            [1.0, 1.0],
            [8, 8],
            [FaceBc::all_dirichlet(); 4],
        )
        .unwrap();
        let mut sys = assemble_scalar(&m.mesh, |_, _| Mat2::identity()).unwrap();
        sys.set_dirichlet(dirichlet_scalar(&m, FieldKind::Thermal, |p| p[0]));
        let x = sys.solve().unwrap();
        for (n, p) in m.mesh.nodes.iter().enumerate() {
            assert!((x[n] - p[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_tags_constrain_only_tagged_nodes() {
        let mut bc = [FaceBc::all_dirichlet(); 4];
        bc[0].thermal = BcKind::Neumann;
        let m = build_macro_mesh([0.0, 0.0], [1.0, 1.0], [4, 4], bc).unwrap();
        let constraints = dirichlet_scalar(&m, FieldKind::Thermal, |_| 1.0);
        let constrained: std::collections::HashSet<usize> =
            constraints.iter().map(|&(d, _)| d).collect();
        // interior-bottom nodes are not constrained
        for n in 1..4 {
            assert!(!constrained.contains(&n));
        }
        assert!(constrained.contains(&0));
    }
}
