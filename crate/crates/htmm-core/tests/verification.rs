//! Cross-route verification of the cell/homogenization machinery:
//! energy identities, the Voigt bound, an independent periodic-corrector
//! oracle, and the analytic omega-factorization of the scale-separated path
//! against the general finite-difference path.

#![allow(clippy::needless_range_loop)]

use htmm_core::cell::{first_order_max, CellSolver};
use htmm_core::fem::system::CsrMatrix;
use htmm_core::homogenize::{build_cell_table, build_separated_table, RepresentativeGrid};
use htmm_core::material::{FamilyFactors, MaterialMode, MaterialModel, MicroPhase};
use htmm_core::mesh::{build_unit_cell_mesh, Circle};
use htmm_core::tensor::Mat2;
use htmm_core::weight;

fn phases() -> (MicroPhase, MicroPhase) {
    (
        MicroPhase {
            e: 10.0,
            nu: 0.30,
            k: 100.0,
            g: 1.0,
            alpha: 10.0,
            beta: 1.0,
        },
        MicroPhase {
            e: 1.0,
            nu: 0.25,
            k: 1.0,
            g: 0.02,
            alpha: 0.1,
            beta: 0.02,
        },
    )
}

fn product_model(tag: &str) -> MaterialModel {
    let (m, i) = phases();
    MaterialModel::new(
        m,
        i,
        Some(Circle {
            center: [0.5, 0.5],
            radius: 0.25,
        }),
        MaterialMode::Product,
        weight::resolve(tag).unwrap(),
        FamilyFactors::ones(),
    )
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

#[test]
fn homogenized_energy_identity_and_voigt_bound() {
    let model = product_model("constant");
    let solver = CellSolver::new(build_unit_cell_mesh(16, model.inclusion_geometry).unwrap());
    let coeffs = solver.coefficients_at(&model, [0.5, 0.5]).unwrap();
    let first = solver.solve_first_order(&coeffs).unwrap();
    let homog = solver.compute_homogenized(&coeffs, &first);

    // arithmetic cell average (Voigt bound)
    let mut kavg = Mat2::zero();
    for (e, g) in solver.geoms().iter().enumerate() {
        kavg = kavg.add(&coeffs[e].k.scale(g.area));
    }

    for xi in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.3, -0.8]] {
        // H_xi = xi_j H_j, energy = int (grad H_xi + xi) . k . (grad H_xi + xi)
        let nn = solver.n_nodes();
        let mut hxi = vec![0.0; nn];
        for n in 0..nn {
            hxi[n] = xi[0] * first.h[0][n] + xi[1] * first.h[1][n];
        }
        let gh = solver.grad_scalar(&hxi);
        let mut energy = 0.0;
        for (e, g) in solver.geoms().iter().enumerate() {
            let v = [gh[e][0] + xi[0], gh[e][1] + xi[1]];
            let kv = coeffs[e].k.mul_vec(v);
            energy += g.area * (kv[0] * v[0] + kv[1] * v[1]);
        }
        let quad = {
            let kx = homog.k.mul_vec(xi);
            kx[0] * xi[0] + kx[1] * xi[1]
        };
        assert!(
            (energy - quad).abs() <= 1e-8 * quad.abs(),
            "energy {energy} vs quadratic form {quad}"
        );
        // Voigt bound with slack
        let bound = {
            let kv = kavg.mul_vec(xi);
            kv[0] * xi[0] + kv[1] * xi[1]
        };
        assert!(quad <= bound + 1e-8 * bound.abs());
        assert!(quad > 0.0);
    }

    assert!(homog.k.min_eigenvalue() > 0.0);
    assert!(homog.g.min_eigenvalue() > 0.0);
    assert!(homog.d.min_eigenvalue() > 0.0);
    assert!(homog.k.symmetry_defect() <= 1e-10 * homog.k.frobenius());
    assert!(homog.d.major_symmetry_defect() <= 1e-10 * homog.d.at(0, 0, 0, 0).abs());
}

/// Independent oracle: periodic-BC corrector solve by dof merging across
/// opposite faces, one dof pinned. The Dirichlet-cell tensor must land
/// within 5% of the periodic one for the symmetric inclusion cell.
#[test]
fn dirichlet_homogenized_matches_periodic_oracle() {
    let model = product_model("constant");
    let n_div = 20;
    let solver = CellSolver::new(build_unit_cell_mesh(n_div, model.inclusion_geometry).unwrap());
    let coeffs = solver.coefficients_at(&model, [0.5, 0.5]).unwrap();
    let first = solver.solve_first_order(&coeffs).unwrap();
    let homog = solver.compute_homogenized(&coeffs, &first);

    // master map: right/top boundary nodes fold onto left/bottom
    let mesh = &solver.cell.mesh;
    let np = n_div + 1;
    let master = |node: usize| -> usize {
        let ix = (node % np) % n_div;
        let iy = (node / np) % n_div;
        iy * np + ix
    };
    let mut ids = vec![usize::MAX; mesh.n_nodes()];
    let mut n_dofs = 0;
    for node in 0..mesh.n_nodes() {
        let m = master(node);
        if m == node {
            ids[node] = n_dofs;
            n_dofs += 1;
        }
    }
    for node in 0..mesh.n_nodes() {
        ids[node] = ids[master(node)];
    }

    let mut k_per = Mat2::zero();
    for dir in 0..2 {
        let mut triplets = Vec::new();
        let mut rhs = vec![0.0; n_dofs];
        for (e, g) in solver.geoms().iter().enumerate() {
            let k = coeffs[e].k;
            let tri = mesh.tris[e];
            for a in 0..3 {
                let ka = k.mul_vec(g.grads[a]);
                for b in 0..3 {
                    triplets.push((
                        ids[tri[a]],
                        ids[tri[b]],
                        g.area * (ka[0] * g.grads[b][0] + ka[1] * g.grads[b][1]),
                    ));
                }
                // load: -int k e_dir . grad(phi_a)
                rhs[ids[tri[a]]] -=
                    g.area * (k.at(0, dir) * g.grads[a][0] + k.at(1, dir) * g.grads[a][1]);
            }
        }
        let mut sys =
            htmm_core::fem::SparseSystem::new(CsrMatrix::from_triplets(n_dofs, &triplets));
        sys.rhs = rhs;
        sys.set_dirichlet([(0usize, 0.0)]);
        let chi_dof = sys.solve().unwrap();
        let chi: Vec<f64> = (0..mesh.n_nodes()).map(|n| chi_dof[ids[n]]).collect();
        let gchi = solver.grad_scalar(&chi);
        for (e, g) in solver.geoms().iter().enumerate() {
            for i in 0..2 {
                let mut v = coeffs[e].k.at(i, dir);
                for t in 0..2 {
                    v += coeffs[e].k.at(i, t) * gchi[e][t];
                }
                k_per.0[i][dir] += g.area * v;
            }
        }
    }

    for i in 0..2 {
        for j in 0..2 {
            let (a, b) = (homog.k.at(i, j), k_per.at(i, j));
            let scale = k_per.at(0, 0).abs();
            assert!(
                (a - b).abs() <= 0.05 * scale,
                "k_hat[{i}][{j}]: dirichlet {a} vs periodic {b}"
            );
        }
    }
}

#[test]
fn product_mode_homogenized_tensors_factor_through_omega() {
    let model = product_model("sine4pi");
    let solver = CellSolver::new(build_unit_cell_mesh(12, model.inclusion_geometry).unwrap());
    let sep = build_separated_table(&solver, &model).unwrap();
    for x in [[0.0, 0.0], [0.31, 0.62], [0.75, 0.25]] {
        let w = model.weight.eval(x);
        let coeffs = solver.coefficients_at(&model, x).unwrap();
        let first = solver.solve_first_order(&coeffs).unwrap();
        let homog = solver.compute_homogenized(&coeffs, &first);
        let expect = sep.homog_star.scale(w, w * w);
        assert!((homog.k.sub(&expect.k)).frobenius() <= 1e-10 * expect.k.frobenius());
        assert!((homog.g.sub(&expect.g)).frobenius() <= 1e-10 * expect.g.frobenius());
        assert!((homog.a.sub(&expect.a)).frobenius() <= 1e-10 * expect.a.frobenius());
        assert!((homog.b.sub(&expect.b)).frobenius() <= 1e-10 * expect.b.frobenius());
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert!(
                            (homog.d.at(i, j, k, l) - expect.d.at(i, j, k, l)).abs()
                                <= 1e-10 * expect.d.at(0, 0, 0, 0)
                        );
                    }
                }
            }
        }
        // first-order star set matches the general path: H, L, X unchanged,
        // M and N scaled by omega
        assert!(rel_vec(&first.h[0], &sep.first.h[0]) <= 1e-8);
        assert!(rel_vec(&first.l[1], &sep.first.l[1]) <= 1e-8);
        assert!(rel_vec(&first.chi[0][1], &sep.first.chi[0][1]) <= 1e-8);
        let m_scaled: Vec<f64> = sep.first.m.iter().map(|v| w * v).collect();
        let n_scaled: Vec<f64> = sep.first.n.iter().map(|v| w * v).collect();
        assert!(rel_vec(&first.m, &m_scaled) <= 1e-8);
        assert!(rel_vec(&first.n, &n_scaled) <= 1e-8);
    }
    assert!(first_order_max(&sep.first) > 0.0);
}

/// With a per-axis-linear weight the central differences of the general path
/// are exact, so every second-order family must reproduce its analytic
/// omega-factorized form from the star set.
#[test]
fn second_order_general_path_matches_omega_factorization() {
    let (m, i) = phases();
    let model = MaterialModel::new(
        m,
        i,
        Some(Circle {
            center: [0.5, 0.5],
            radius: 0.25,
        }),
        MaterialMode::Product,
        weight::resolve("1 + 0.4*x1 + 0.25*x2 + 0.1*x1*x2").unwrap(),
        FamilyFactors::ones(),
    );
    let solver = CellSolver::new(build_unit_cell_mesh(10, model.inclusion_geometry).unwrap());
    let grid = RepresentativeGrid::new([0.0, 0.0], [1.0, 1.0], [3, 3]).unwrap();
    let table = build_cell_table(&solver, &model, &grid).unwrap();
    let sep = build_separated_table(&solver, &model).unwrap();

    // interior grid point: central differences on both axes
    let idx = grid.index(1, 1);
    let x = grid.point(idx);
    let wv = model.weight.eval(x);
    let dw = model.weight.grad(x);
    let sec = &table.second[idx];

    // H2, L2, P are x-independent star functions
    for a1 in 0..2 {
        for a2 in 0..2 {
            assert!(rel_vec(&sec.h2[a1][a2], &sep.second.h2[a1][a2]) <= 1e-8, "H2");
            assert!(rel_vec(&sec.l2[a1][a2], &sep.second.l2[a1][a2]) <= 1e-8, "L2");
            for h in 0..2 {
                assert!(rel_vec(&sec.p[a1][a2][h], &sep.second.p[a1][a2][h]) <= 1e-8, "P");
            }
        }
    }
    // R_a1 = (1/w) dw_a2 R~_{a1 a2}; same structure for S
    let nn = solver.n_nodes();
    for a1 in 0..2 {
        let mut expect = vec![0.0; nn];
        let mut expect_s = vec![0.0; nn];
        for a2 in 0..2 {
            for n in 0..nn {
                expect[n] += dw[a2] / wv * sep.second.r2[a1][a2][n];
                expect_s[n] += dw[a2] / wv * sep.second.s2[a1][a2][n];
            }
        }
        assert!(rel_vec(&sec.r[a1], &expect) <= 1e-6, "R[{a1}]");
        assert!(rel_vec(&sec.s[a1], &expect_s) <= 1e-6, "S[{a1}]");
    }
    // Q[a1][h] = (1/w) dw_a2 Q~[a1][a2][h]
    for a1 in 0..2 {
        for h in 0..2 {
            let mut expect = vec![0.0; 2 * nn];
            for a2 in 0..2 {
                for n in 0..2 * nn {
                    expect[n] += dw[a2] / wv * sep.second.q2[a1][a2][h][n];
                }
            }
            assert!(rel_vec(&sec.q[a1][h], &expect) <= 1e-6, "Q[{a1}][{h}]");
        }
    }
    // W = dw_a1 W~[a1], F likewise
    let mut expect_w = vec![0.0; 2 * nn];
    let mut expect_f = vec![0.0; 2 * nn];
    for a1 in 0..2 {
        for n in 0..2 * nn {
            expect_w[n] += dw[a1] * sep.second.w1[a1][n];
            expect_f[n] += dw[a1] * sep.second.f1[a1][n];
        }
    }
    assert!(rel_vec(&sec.w, &expect_w) <= 1e-6, "W");
    assert!(rel_vec(&sec.f, &expect_f) <= 1e-6, "F");
    // Z = w Z~, G = w G~
    for a1 in 0..2 {
        let ez: Vec<f64> = sep.second.z[a1].iter().map(|v| wv * v).collect();
        let eg: Vec<f64> = sep.second.g[a1].iter().map(|v| wv * v).collect();
        assert!(rel_vec(&sec.z[a1], &ez) <= 1e-6, "Z[{a1}]");
        assert!(rel_vec(&sec.g[a1], &eg) <= 1e-6, "G[{a1}]");
    }
}

/// One-sided differences are exact for per-axis-linear data, so edge points
/// of the representative grid must factor identically for R.
#[test]
fn one_sided_differences_exact_for_linear_weight() {
    let (m, i) = phases();
    let model = MaterialModel::new(
        m,
        i,
        Some(Circle {
            center: [0.5, 0.5],
            radius: 0.25,
        }),
        MaterialMode::Product,
        weight::resolve("1 + 0.4*x1 + 0.25*x2").unwrap(),
        FamilyFactors::ones(),
    );
    let solver = CellSolver::new(build_unit_cell_mesh(8, model.inclusion_geometry).unwrap());
    let grid = RepresentativeGrid::new([0.0, 0.0], [1.0, 1.0], [3, 3]).unwrap();
    let table = build_cell_table(&solver, &model, &grid).unwrap();
    let sep = build_separated_table(&solver, &model).unwrap();
    let nn = solver.n_nodes();
    for idx in [grid.index(0, 0), grid.index(2, 1), grid.index(1, 2)] {
        let x = grid.point(idx);
        let wv = model.weight.eval(x);
        let dw = model.weight.grad(x);
        for a1 in 0..2 {
            let mut expect = vec![0.0; nn];
            for a2 in 0..2 {
                for n in 0..nn {
                    expect[n] += dw[a2] / wv * sep.second.r2[a1][a2][n];
                }
            }
            assert!(
                rel_vec(&table.second[idx].r[a1], &expect) <= 1e-6,
                "edge point {idx} R[{a1}]"
            );
        }
    }
}

/// Reuss-Voigt bracketing: the homogenized conductivity sits between the
/// harmonic and arithmetic cell averages in the Loewner order.
#[test]
fn homogenized_tensor_within_reuss_voigt_interval() {
    let model = product_model("constant");
    let solver = CellSolver::new(build_unit_cell_mesh(16, model.inclusion_geometry).unwrap());
    let coeffs = solver.coefficients_at(&model, [0.5, 0.5]).unwrap();
    let first = solver.solve_first_order(&coeffs).unwrap();
    let homog = solver.compute_homogenized(&coeffs, &first);
    let mut arith = Mat2::zero();
    let mut harm = 0.0;
    for (e, g) in solver.geoms().iter().enumerate() {
        arith = arith.add(&coeffs[e].k.scale(g.area));
        harm += g.area / coeffs[e].k.at(0, 0);
    }
    let reuss = 1.0 / harm;
    let upper_gap = arith.sub(&homog.k);
    assert!(
        upper_gap.min_eigenvalue() >= -1e-8 * arith.at(0, 0),
        "Voigt bound violated"
    );
    let lower_gap = homog.k.sub(&Mat2::isotropic(reuss));
    assert!(
        lower_gap.min_eigenvalue() >= -1e-8 * arith.at(0, 0),
        "Reuss bound violated: k_hat {:?} vs harmonic mean {reuss}",
        homog.k
    );
}

/// Interpolating cell functions at a stored grid point returns the stored
/// nodal vector; at an edge midpoint it returns the arithmetic mean.
#[test]
fn cell_function_interpolation_identities() {
    use htmm_core::homogenize::{interpolate_cell_function, CellFamily};
    let (m, i) = phases();
    let model = MaterialModel::new(
        m,
        i,
        Some(Circle {
            center: [0.5, 0.5],
            radius: 0.25,
        }),
        MaterialMode::Product,
        weight::resolve("1 + (x1 - 0.5)^2 * (x2 - 0.5)^2").unwrap(),
        FamilyFactors::ones(),
    );
    let solver = CellSolver::new(build_unit_cell_mesh(6, model.inclusion_geometry).unwrap());
    let grid = RepresentativeGrid::new([0.0, 0.0], [1.0, 1.0], [3, 3]).unwrap();
    let table = build_cell_table(&solver, &model, &grid).unwrap();
    for (idx, fam) in [(4usize, CellFamily::H(0)), (2, CellFamily::Z(1)), (7, CellFamily::M)] {
        let x = grid.point(idx);
        let got = interpolate_cell_function(&table, x, fam);
        let stored = htmm_core::homogenize::family_slice(&table, idx, fam);
        assert_eq!(&got, stored, "grid-point interpolation must be exact");
    }
    // midpoint of two horizontally adjacent grid points
    let (a, b) = (grid.index(0, 1), grid.index(1, 1));
    let mid = [
        0.5 * (grid.point(a)[0] + grid.point(b)[0]),
        grid.point(a)[1],
    ];
    let got = interpolate_cell_function(&table, mid, CellFamily::R(0));
    let fa = htmm_core::homogenize::family_slice(&table, a, CellFamily::R(0));
    let fb = htmm_core::homogenize::family_slice(&table, b, CellFamily::R(0));
    for n in 0..got.len() {
        let mean = 0.5 * (fa[n] + fb[n]);
        assert!((got[n] - mean).abs() <= 1e-14 * mean.abs().max(1e-12));
    }
}
