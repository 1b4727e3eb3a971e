//! Auxiliary cell problems on the unit cell with homogeneous Dirichlet BCs.
//!
//! First-order families: H (thermal), L (moisture), X (elastic unit-gradient
//! correctors), M and N (thermal/moisture eigenstrain correctors). Second
//! order adds H2, R, L2, S, P, Q, W, Z, F, G. Macroscopic derivatives in the
//! second-order right-hand sides are central differences over a stencil of
//! representative points (one-sided at grid edges, absent for a single-point
//! grid). Every divergence-form term is integrated by parts so discontinuous
//! coefficients are never differentiated.
//!
//! The scale-separated path solves x-independent star problems whose
//! omega-structure is factored analytically; its second-order set carries the
//! extra index on R, S, Q, W, F.

use crate::error::{Error, Result};
use crate::fem::system::{CsrMatrix, EnvelopeCholesky, SOLVER_TOL};
use crate::fem::{assemble_elasticity, assemble_scalar};
use crate::material::{CoefficientBundle, MaterialModel};
use crate::mesh::{ElemGeom, UnitCellMesh};
use crate::tensor::{ElasticTensor, Mat2};

pub const N: usize = 2;

/// First-order cell functions at one macro point, nodal on the cell mesh.
/// Vector fields are interleaved (2*node + comp).
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderCellSet {
    pub h: [Vec<f64>; 2],
    pub l: [Vec<f64>; 2],
    /// chi[a1][h] corrects the unit displacement gradient d u_h / d x_a1.
    pub chi: [[Vec<f64>; 2]; 2],
    pub m: Vec<f64>,
    pub n: Vec<f64>,
}

/// Second-order cell functions of the general (quasi-periodic) path.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderCellSet {
    pub h2: [[Vec<f64>; 2]; 2],
    pub r: [Vec<f64>; 2],
    pub l2: [[Vec<f64>; 2]; 2],
    pub s: [Vec<f64>; 2],
    pub p: [[[Vec<f64>; 2]; 2]; 2],
    pub q: [[Vec<f64>; 2]; 2],
    pub w: Vec<f64>,
    pub z: [Vec<f64>; 2],
    pub f: Vec<f64>,
    pub g: [Vec<f64>; 2],
}

/// Second-order star families of the scale-separated path. R, S carry both
/// alpha indices; Q carries (a1, a2, h); W, F carry one direction index.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedSecondOrderSet {
    pub h2: [[Vec<f64>; 2]; 2],
    pub r2: [[Vec<f64>; 2]; 2],
    pub l2: [[Vec<f64>; 2]; 2],
    pub s2: [[Vec<f64>; 2]; 2],
    pub p: [[[Vec<f64>; 2]; 2]; 2],
    pub q2: [[[Vec<f64>; 2]; 2]; 2],
    pub w1: [Vec<f64>; 2],
    pub z: [Vec<f64>; 2],
    pub f1: [Vec<f64>; 2],
    pub g: [Vec<f64>; 2],
}

/// Homogenized tensors at one macro point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogPoint {
    pub k: Mat2,
    pub g: Mat2,
    pub d: ElasticTensor,
    pub a: Mat2,
    pub b: Mat2,
}

impl HomogPoint {
    pub fn scale(&self, sk: f64, sab: f64) -> HomogPoint {
        HomogPoint {
            k: self.k.scale(sk),
            g: self.g.scale(sk),
            d: self.d.scale(sk),
            a: self.a.scale(sab),
            b: self.b.scale(sab),
        }
    }
}

/// Element gradients of the first-order set.
pub struct FirstOrderGrads {
    pub gh: [Vec<[f64; 2]>; 2],
    pub gl: [Vec<[f64; 2]>; 2],
    /// gchi[a1][h][e][k][l] = d chi_k / d y_l
    pub gchi: [[Vec<[[f64; 2]; 2]>; 2]; 2],
    pub gm: Vec<[[f64; 2]; 2]>,
    pub gn: Vec<[[f64; 2]; 2]>,
}

/// One representative point's data as seen by a stencil.
pub struct StencilEntry<'a> {
    pub x: [f64; 2],
    pub coeffs: Vec<CoefficientBundle>,
    pub first: &'a FirstOrderCellSet,
    pub homog: HomogPoint,
    pub grads: FirstOrderGrads,
}

/// Finite-difference weights per axis: list of (entry index, weight). Empty
/// means the derivative is treated as zero (single-point grid).
pub type AxisDiff = Vec<(usize, f64)>;

/// Zero-boundary operator on the cell mesh with a reusable factorization.
pub struct CellOperator {
    matrix: CsrMatrix,
    chol: EnvelopeCholesky,
    free: Vec<usize>,
    pos: Vec<usize>,
    n_full: usize,
}

impl CellOperator {
    fn new(full: CsrMatrix, zero_dofs: &[bool]) -> Result<Self> {
        let n = full.n;
        let mut pos = vec![usize::MAX; n];
        let mut free = Vec::new();
        for i in 0..n {
            if !zero_dofs[i] {
                pos[i] = free.len();
                free.push(i);
            }
        }
        let mut triplets = Vec::new();
        for (fi, &i) in free.iter().enumerate() {
            let (cols, vals) = full.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if pos[*c] != usize::MAX {
                    triplets.push((fi, pos[*c], *v));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(free.len(), &triplets);
        let chol = EnvelopeCholesky::factor(&matrix)
            .map_err(|e| Error::Solver(format!("cell operator factorization failed: {e}")))?;
        Ok(CellOperator {
            matrix,
            chol,
            free,
            pos,
            n_full: n,
        })
    }

    /// Solve with the given full-size load; result is zero on boundary dofs.
    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        let b: Vec<f64> = self.free.iter().map(|&i| load[i]).collect();
        let mut x = self.chol.solve(&b);
        for _ in 0..3 {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= 1e-3 * SOLVER_TOL * bn.max(1e-300) {
                break;
            }
            let dx = self.chol.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        let ax = self.matrix.matvec(&x);
        let rn: f64 = b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| (bi - ai) * (bi - ai))
            .sum::<f64>()
            .sqrt();
        let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn > 0.0 && rn > SOLVER_TOL * bn {
            return Err(Error::Solver(format!(
                "cell solve residual {:.3e} above tolerance",
                rn / bn
            )));
        }
        let mut full = vec![0.0; self.n_full];
        for (fi, &i) in self.free.iter().enumerate() {
            full[i] = x[fi];
        }
        Ok(full)
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn position(&self, dof: usize) -> Option<usize> {
        if self.pos[dof] == usize::MAX {
            None
        } else {
            Some(self.pos[dof])
        }
    }
}

pub struct CellSolver {
    pub cell: UnitCellMesh,
    geoms: Vec<ElemGeom>,
    scalar_zero: Vec<bool>,
    vector_zero: Vec<bool>,
}

impl CellSolver {
    pub fn new(cell: UnitCellMesh) -> Self {
        let geoms = cell.mesh.geoms();
        let n = cell.mesh.n_nodes();
        let mut scalar_zero = vec![false; n];
        for b in cell.boundary_nodes() {
            scalar_zero[b] = true;
        }
        let mut vector_zero = vec![false; 2 * n];
        for (i, z) in scalar_zero.iter().enumerate() {
            vector_zero[2 * i] = *z;
            vector_zero[2 * i + 1] = *z;
        }
        CellSolver {
            cell,
            geoms,
            scalar_zero,
            vector_zero,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.cell.mesh.n_nodes()
    }

    pub fn n_elems(&self) -> usize {
        self.cell.mesh.n_elems()
    }

    pub fn geoms(&self) -> &[ElemGeom] {
        &self.geoms
    }

    /// Per-element coefficient bundles at macro point x (centroid evaluation
    /// with the mesh's own material tags).
    pub fn coefficients_at(
        &self,
        model: &MaterialModel,
        x: [f64; 2],
    ) -> Result<Vec<CoefficientBundle>> {
        (0..self.n_elems())
            .map(|e| model.bundle_for_phase(x, self.cell.mesh.tags[e]))
            .collect()
    }

    /// Per-element star bundles (scale-separated micro coefficients).
    pub fn star_coefficients(&self, model: &MaterialModel) -> Result<Vec<CoefficientBundle>> {
        (0..self.n_elems())
            .map(|e| model.star_bundle_for_phase(self.cell.mesh.tags[e]))
            .collect()
    }

    pub fn scalar_operator(&self, coeff: impl Fn(usize) -> Mat2) -> Result<CellOperator> {
        let sys = assemble_scalar(&self.cell.mesh, |e, _| coeff(e))?;
        CellOperator::new(sys.matrix, &self.scalar_zero)
    }

    pub fn vector_operator(&self, elast: impl Fn(usize) -> ElasticTensor) -> Result<CellOperator> {
        let sys = assemble_elasticity(&self.cell.mesh, |e, _| elast(e))?;
        CellOperator::new(sys.matrix, &self.vector_zero)
    }

    // -- load helpers; weak form: int a grad(u).grad(v) = -int V v + int W.grad(v)

    fn add_volume_scalar(&self, rhs: &mut [f64], sign: f64, v_of: impl Fn(usize) -> f64) {
        for e in 0..self.n_elems() {
            let g = &self.geoms[e];
            let w = sign * g.area / 3.0 * v_of(e);
            for &node in &self.cell.mesh.tris[e] {
                rhs[node] += w;
            }
        }
    }

    fn add_div_scalar(&self, rhs: &mut [f64], sign: f64, w_of: impl Fn(usize) -> [f64; 2]) {
        for e in 0..self.n_elems() {
            let g = &self.geoms[e];
            let wv = w_of(e);
            for (a, &node) in self.cell.mesh.tris[e].iter().enumerate() {
                rhs[node] +=
                    sign * g.area * (wv[0] * g.grads[a][0] + wv[1] * g.grads[a][1]);
            }
        }
    }

    fn add_volume_vector(&self, rhs: &mut [f64], sign: f64, v_of: impl Fn(usize) -> [f64; 2]) {
        for e in 0..self.n_elems() {
            let g = &self.geoms[e];
            let vv = v_of(e);
            let w = sign * g.area / 3.0;
            for &node in &self.cell.mesh.tris[e] {
                rhs[2 * node] += w * vv[0];
                rhs[2 * node + 1] += w * vv[1];
            }
        }
    }

    fn add_div_vector(&self, rhs: &mut [f64], sign: f64, w_of: impl Fn(usize) -> [[f64; 2]; 2]) {
        for e in 0..self.n_elems() {
            let g = &self.geoms[e];
            let wm = w_of(e);
            for (a, &node) in self.cell.mesh.tris[e].iter().enumerate() {
                for i in 0..2 {
                    rhs[2 * node + i] += sign
                        * g.area
                        * (wm[i][0] * g.grads[a][0] + wm[i][1] * g.grads[a][1]);
                }
            }
        }
    }

    fn centroid_scalar(&self, field: &[f64], e: usize) -> f64 {
        let t = self.cell.mesh.tris[e];
        (field[t[0]] + field[t[1]] + field[t[2]]) / 3.0
    }

    fn centroid_vector(&self, field: &[f64], e: usize) -> [f64; 2] {
        let t = self.cell.mesh.tris[e];
        [
            (field[2 * t[0]] + field[2 * t[1]] + field[2 * t[2]]) / 3.0,
            (field[2 * t[0] + 1] + field[2 * t[1] + 1] + field[2 * t[2] + 1]) / 3.0,
        ]
    }

    pub fn grad_scalar(&self, field: &[f64]) -> Vec<[f64; 2]> {
        (0..self.n_elems())
            .map(|e| {
                let g = &self.geoms[e];
                let t = self.cell.mesh.tris[e];
                let mut out = [0.0; 2];
                for a in 0..3 {
                    out[0] += field[t[a]] * g.grads[a][0];
                    out[1] += field[t[a]] * g.grads[a][1];
                }
                out
            })
            .collect()
    }

    pub fn grad_vector(&self, field: &[f64]) -> Vec<[[f64; 2]; 2]> {
        (0..self.n_elems())
            .map(|e| {
                let g = &self.geoms[e];
                let t = self.cell.mesh.tris[e];
                let mut out = [[0.0; 2]; 2];
                for a in 0..3 {
                    for comp in 0..2 {
                        let v = field[2 * t[a] + comp];
                        out[comp][0] += v * g.grads[a][0];
                        out[comp][1] += v * g.grads[a][1];
                    }
                }
                out
            })
            .collect()
    }

    pub fn first_order_grads(&self, set: &FirstOrderCellSet) -> FirstOrderGrads {
        FirstOrderGrads {
            gh: [self.grad_scalar(&set.h[0]), self.grad_scalar(&set.h[1])],
            gl: [self.grad_scalar(&set.l[0]), self.grad_scalar(&set.l[1])],
            gchi: [
                [
                    self.grad_vector(&set.chi[0][0]),
                    self.grad_vector(&set.chi[0][1]),
                ],
                [
                    self.grad_vector(&set.chi[1][0]),
                    self.grad_vector(&set.chi[1][1]),
                ],
            ],
            gm: self.grad_vector(&set.m),
            gn: self.grad_vector(&set.n),
        }
    }

    /// Solve the five first-order families for the given per-element bundles.
    pub fn solve_first_order(&self, coeffs: &[CoefficientBundle]) -> Result<FirstOrderCellSet> {
        let nn = self.n_nodes();
        let op_k = self.scalar_operator(|e| coeffs[e].k)?;
        let op_g = self.scalar_operator(|e| coeffs[e].g)?;
        let op_d = self.vector_operator(|e| coeffs[e].d)?;

        let mut h: [Vec<f64>; 2] = [vec![], vec![]];
        let mut l: [Vec<f64>; 2] = [vec![], vec![]];
        for a1 in 0..2 {
            let mut rhs = vec![0.0; nn];
            self.add_div_scalar(&mut rhs, -1.0, |e| {
                [coeffs[e].k.at(0, a1), coeffs[e].k.at(1, a1)]
            });
            h[a1] = op_k.solve(&rhs)?;
            let mut rhs = vec![0.0; nn];
            self.add_div_scalar(&mut rhs, -1.0, |e| {
                [coeffs[e].g.at(0, a1), coeffs[e].g.at(1, a1)]
            });
            l[a1] = op_g.solve(&rhs)?;
        }

        let mut chi: [[Vec<f64>; 2]; 2] = Default::default();
        for a1 in 0..2 {
            for hh in 0..2 {
                if hh > a1 {
                    continue; // symmetric load: chi[a1][h] == chi[h][a1]
                }
                let mut rhs = vec![0.0; 2 * nn];
                self.add_div_vector(&mut rhs, -1.0, |e| {
                    let d = &coeffs[e].d;
                    [
                        [d.at(0, 0, hh, a1), d.at(0, 1, hh, a1)],
                        [d.at(1, 0, hh, a1), d.at(1, 1, hh, a1)],
                    ]
                });
                let sol = op_d.solve(&rhs)?;
                chi[a1][hh] = sol;
            }
        }
        for a1 in 0..2 {
            for hh in 0..2 {
                if hh > a1 {
                    chi[a1][hh] = chi[hh][a1].clone();
                }
            }
        }

        let mut rhs = vec![0.0; 2 * nn];
        self.add_div_vector(&mut rhs, -1.0, |e| {
            let s = coeffs[e].d.contract2(&coeffs[e].alpha);
            [[s.at(0, 0), s.at(0, 1)], [s.at(1, 0), s.at(1, 1)]]
        });
        let m = op_d.solve(&rhs)?;

        let mut rhs = vec![0.0; 2 * nn];
        self.add_div_vector(&mut rhs, -1.0, |e| {
            let s = coeffs[e].d.contract2(&coeffs[e].beta);
            [[s.at(0, 0), s.at(0, 1)], [s.at(1, 0), s.at(1, 1)]]
        });
        let n = op_d.solve(&rhs)?;

        Ok(FirstOrderCellSet { h, l, chi, m, n })
    }

    /// Cell-average homogenized tensors from coefficients + first-order set.
    /// |Y| = 1; the quadrature matches assembly (centroid per element).
    pub fn compute_homogenized(
        &self,
        coeffs: &[CoefficientBundle],
        first: &FirstOrderCellSet,
    ) -> HomogPoint {
        assert_eq!(
            coeffs.len(),
            self.n_elems(),
            "coefficient bundles must match the cell mesh"
        );
        assert_eq!(
            first.h[0].len(),
            self.n_nodes(),
            "first-order cell set was solved on a different mesh"
        );
        let grads = self.first_order_grads(first);
        let mut k = Mat2::zero();
        let mut g = Mat2::zero();
        let mut d4 = [[[[0.0; 2]; 2]; 2]; 2];
        let mut a = Mat2::zero();
        let mut b = Mat2::zero();
        for e in 0..self.n_elems() {
            let area = self.geoms[e].area;
            let cb = &coeffs[e];
            for i in 0..2 {
                for j in 0..2 {
                    let mut kv = cb.k.at(i, j);
                    let mut gv = cb.g.at(i, j);
                    for t in 0..2 {
                        kv += cb.k.at(i, t) * grads.gh[j][e][t];
                        gv += cb.g.at(i, t) * grads.gl[j][e][t];
                    }
                    k.0[i][j] += area * kv;
                    g.0[i][j] += area * gv;

                    let da = cb.d.contract2(&cb.alpha);
                    let db = cb.d.contract2(&cb.beta);
                    let mut av = da.at(i, j);
                    let mut bv = db.at(i, j);
                    for kk in 0..2 {
                        for ll in 0..2 {
                            av += cb.d.at(i, j, kk, ll) * grads.gm[e][kk][ll];
                            bv += cb.d.at(i, j, kk, ll) * grads.gn[e][kk][ll];
                        }
                    }
                    a.0[i][j] += area * av;
                    b.0[i][j] += area * bv;

                    for kk in 0..2 {
                        for ll in 0..2 {
                            let mut dv = cb.d.at(i, j, kk, ll);
                            for mm in 0..2 {
                                for nn2 in 0..2 {
                                    dv += cb.d.at(i, j, mm, nn2)
                                        * grads.gchi[ll][kk][e][mm][nn2];
                                }
                            }
                            d4[i][j][kk][ll] += area * dv;
                        }
                    }
                }
            }
        }
        let mut d = ElasticTensor::zero();
        for i in 0..2 {
            for j in 0..2 {
                for kk in 0..2 {
                    for ll in 0..2 {
                        d.set(i, j, kk, ll, d4[i][j][kk][ll]);
                    }
                }
            }
        }
        HomogPoint { k, g, d, a, b }
    }

    /// Solve the ten second-order families at the stencil's center entry.
    /// `entries[center]` is the expansion point; `diffs[axis]` lists finite
    /// difference weights over `entries`.
    pub fn solve_second_order(
        &self,
        entries: &[StencilEntry],
        center: usize,
        diffs: &[AxisDiff; 2],
    ) -> Result<SecondOrderCellSet> {
        let nn = self.n_nodes();
        let ctr = &entries[center];
        let op_k = self.scalar_operator(|e| ctr.coeffs[e].k)?;
        let op_g = self.scalar_operator(|e| ctr.coeffs[e].g)?;
        let op_d = self.vector_operator(|e| ctr.coeffs[e].d)?;

        // nodal finite difference of a first-order scalar family along axis
        let fd_nodal_scalar = |axis: usize, pick: &dyn for<'b> Fn(&'b StencilEntry) -> &'b Vec<f64>| {
            let mut out = vec![0.0; nn];
            for &(idx, w) in &diffs[axis] {
                let f = pick(&entries[idx]);
                for (o, v) in out.iter_mut().zip(f) {
                    *o += w * v;
                }
            }
            out
        };
        let fd_nodal_vector = |axis: usize, pick: &dyn for<'b> Fn(&'b StencilEntry) -> &'b Vec<f64>| {
            let mut out = vec![0.0; 2 * nn];
            for &(idx, w) in &diffs[axis] {
                let f = pick(&entries[idx]);
                for (o, v) in out.iter_mut().zip(f) {
                    *o += w * v;
                }
            }
            out
        };
        let fd_elem = |axis: usize, e: usize, get: &dyn Fn(&StencilEntry, usize) -> f64| -> f64 {
            diffs[axis]
                .iter()
                .map(|&(idx, w)| w * get(&entries[idx], e))
                .sum()
        };
        let fd_homog = |axis: usize, get: &dyn Fn(&HomogPoint) -> f64| -> f64 {
            diffs[axis]
                .iter()
                .map(|&(idx, w)| w * get(&entries[idx].homog))
                .sum()
        };

        // H2 / L2
        let mut h2: [[Vec<f64>; 2]; 2] = Default::default();
        let mut l2: [[Vec<f64>; 2]; 2] = Default::default();
        for a1 in 0..2 {
            for a2 in 0..2 {
                let mut rhs = vec![0.0; nn];
                self.add_volume_scalar(&mut rhs, -1.0, |e| {
                    let mut v = ctr.homog.k.at(a1, a2) - ctr.coeffs[e].k.at(a1, a2);
                    for j in 0..2 {
                        v -= ctr.coeffs[e].k.at(a1, j) * ctr.grads.gh[a2][e][j];
                    }
                    v
                });
                self.add_div_scalar(&mut rhs, -1.0, |e| {
                    let hbar = self.centroid_scalar(&ctr.first.h[a1], e);
                    [
                        ctr.coeffs[e].k.at(0, a2) * hbar,
                        ctr.coeffs[e].k.at(1, a2) * hbar,
                    ]
                });
                h2[a1][a2] = op_k.solve(&rhs)?;

                let mut rhs = vec![0.0; nn];
                self.add_volume_scalar(&mut rhs, -1.0, |e| {
                    let mut v = ctr.homog.g.at(a1, a2) - ctr.coeffs[e].g.at(a1, a2);
                    for j in 0..2 {
                        v -= ctr.coeffs[e].g.at(a1, j) * ctr.grads.gl[a2][e][j];
                    }
                    v
                });
                self.add_div_scalar(&mut rhs, -1.0, |e| {
                    let lbar = self.centroid_scalar(&ctr.first.l[a1], e);
                    [
                        ctr.coeffs[e].g.at(0, a2) * lbar,
                        ctr.coeffs[e].g.at(1, a2) * lbar,
                    ]
                });
                l2[a1][a2] = op_g.solve(&rhs)?;
            }
        }

        // R / S
        let mut r: [Vec<f64>; 2] = Default::default();
        let mut s: [Vec<f64>; 2] = Default::default();
        for a1 in 0..2 {
            // thermal
            let dh_nodal: Vec<Vec<f64>> = (0..2)
                .map(|axis| fd_nodal_scalar(axis, &|en| &en.first.h[a1]))
                .collect();
            let mut rhs = vec![0.0; nn];
            self.add_volume_scalar(&mut rhs, -1.0, |e| {
                let mut v = 0.0;
                for i in 0..2 {
                    v += fd_homog(i, &|h| h.k.at(i, a1));
                    v -= fd_elem(i, e, &|en, e| en.coeffs[e].k.at(i, a1));
                    v -= fd_elem(i, e, &|en, e| {
                        (0..2).map(|j| en.coeffs[e].k.at(i, j) * en.grads.gh[a1][e][j]).sum()
                    });
                }
                v
            });
            self.add_div_scalar(&mut rhs, -1.0, |e| {
                let mut w = [0.0; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        w[i] += ctr.coeffs[e].k.at(i, j) * self.centroid_scalar(&dh_nodal[j], e);
                    }
                }
                w
            });
            r[a1] = op_k.solve(&rhs)?;

            // moisture
            let dl_nodal: Vec<Vec<f64>> = (0..2)
                .map(|axis| fd_nodal_scalar(axis, &|en| &en.first.l[a1]))
                .collect();
            let mut rhs = vec![0.0; nn];
            self.add_volume_scalar(&mut rhs, -1.0, |e| {
                let mut v = 0.0;
                for i in 0..2 {
                    v += fd_homog(i, &|h| h.g.at(i, a1));
                    v -= fd_elem(i, e, &|en, e| en.coeffs[e].g.at(i, a1));
                    v -= fd_elem(i, e, &|en, e| {
                        (0..2).map(|j| en.coeffs[e].g.at(i, j) * en.grads.gl[a1][e][j]).sum()
                    });
                }
                v
            });
            self.add_div_scalar(&mut rhs, -1.0, |e| {
                let mut w = [0.0; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        w[i] += ctr.coeffs[e].g.at(i, j) * self.centroid_scalar(&dl_nodal[j], e);
                    }
                }
                w
            });
            s[a1] = op_g.solve(&rhs)?;
        }

        // P
        let mut p: [[[Vec<f64>; 2]; 2]; 2] = Default::default();
        for a1 in 0..2 {
            for a2 in 0..2 {
                for hh in 0..2 {
                    let mut rhs = vec![0.0; 2 * nn];
                    self.add_volume_vector(&mut rhs, -1.0, |e| {
                        let mut v = [0.0; 2];
                        for i in 0..2 {
                            v[i] = ctr.homog.d.at(i, a1, hh, a2)
                                - ctr.coeffs[e].d.at(i, a1, hh, a2);
                            for kk in 0..2 {
                                for ll in 0..2 {
                                    v[i] -= ctr.coeffs[e].d.at(i, a1, kk, ll)
                                        * ctr.grads.gchi[a2][hh][e][kk][ll];
                                }
                            }
                        }
                        v
                    });
                    self.add_div_vector(&mut rhs, -1.0, |e| {
                        let xbar = self.centroid_vector(&ctr.first.chi[a1][hh], e);
                        let mut w = [[0.0; 2]; 2];
                        for i in 0..2 {
                            for j in 0..2 {
                                for kk in 0..2 {
                                    w[i][j] += ctr.coeffs[e].d.at(i, j, kk, a2) * xbar[kk];
                                }
                            }
                        }
                        w
                    });
                    p[a1][a2][hh] = op_d.solve(&rhs)?;
                }
            }
        }

        // Q
        let mut q: [[Vec<f64>; 2]; 2] = Default::default();
        for a1 in 0..2 {
            for hh in 0..2 {
                let dx_nodal: Vec<Vec<f64>> = (0..2)
                    .map(|axis| fd_nodal_vector(axis, &|en| &en.first.chi[a1][hh]))
                    .collect();
                let mut rhs = vec![0.0; 2 * nn];
                self.add_volume_vector(&mut rhs, -1.0, |e| {
                    let mut v = [0.0; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            v[i] += fd_homog(j, &|h| h.d.at(i, j, hh, a1));
                            v[i] -= fd_elem(j, e, &|en, e| en.coeffs[e].d.at(i, j, hh, a1));
                            v[i] -= fd_elem(j, e, &|en, e| {
                                let mut t = 0.0;
                                for kk in 0..2 {
                                    for ll in 0..2 {
                                        t += en.coeffs[e].d.at(i, j, kk, ll)
                                            * en.grads.gchi[a1][hh][e][kk][ll];
                                    }
                                }
                                t
                            });
                        }
                    }
                    v
                });
                self.add_div_vector(&mut rhs, -1.0, |e| {
                    // GX[k][l] = centroid of (d chi_k / d x_l)
                    let mut gx = [[0.0; 2]; 2];
                    for l in 0..2 {
                        let c = self.centroid_vector(&dx_nodal[l], e);
                        gx[0][l] = c[0];
                        gx[1][l] = c[1];
                    }
                    let mut w = [[0.0; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            for kk in 0..2 {
                                for ll in 0..2 {
                                    w[i][j] += ctr.coeffs[e].d.at(i, j, kk, ll) * gx[kk][ll];
                                }
                            }
                        }
                    }
                    w
                });
                q[a1][hh] = op_d.solve(&rhs)?;
            }
        }

        // W / F (volume part differenced, divergence part from nodal FD)
        let build_wf = |op_d: &CellOperator,
                        gme: &dyn Fn(&StencilEntry, usize) -> [[f64; 2]; 2],
                        expansion: &dyn Fn(&CoefficientBundle) -> Mat2,
                        hom: &dyn Fn(&HomogPoint) -> Mat2,
                        nodal: &dyn for<'b> Fn(&'b StencilEntry) -> &'b Vec<f64>|
         -> Result<Vec<f64>> {
            let dm_nodal: Vec<Vec<f64>> =
                (0..2).map(|axis| fd_nodal_vector(axis, &|en| nodal(en))).collect();
            let mut rhs = vec![0.0; 2 * nn];
            self.add_volume_vector(&mut rhs, -1.0, |e| {
                let mut v = [0.0; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        v[i] += fd_elem(j, e, &|en, e| {
                            let mut t = 0.0;
                            let gm = gme(en, e);
                            let exp = expansion(&en.coeffs[e]);
                            for kk in 0..2 {
                                for ll in 0..2 {
                                    t += en.coeffs[e].d.at(i, j, kk, ll)
                                        * (gm[kk][ll] + exp.at(kk, ll));
                                }
                            }
                            t - hom(&en.homog).at(i, j)
                        });
                    }
                }
                v
            });
            self.add_div_vector(&mut rhs, 1.0, |e| {
                let mut gm = [[0.0; 2]; 2];
                for l in 0..2 {
                    let c = self.centroid_vector(&dm_nodal[l], e);
                    gm[0][l] = c[0];
                    gm[1][l] = c[1];
                }
                let mut w = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        for kk in 0..2 {
                            for ll in 0..2 {
                                w[i][j] += ctr.coeffs[e].d.at(i, j, kk, ll) * gm[kk][ll];
                            }
                        }
                    }
                }
                w
            });
            op_d.solve(&rhs)
        };
        let w = build_wf(
            &op_d,
            &|en, e| en.grads.gm[e],
            &|cb| cb.alpha,
            &|h| h.a,
            &|en| &en.first.m,
        )?;
        let f = build_wf(
            &op_d,
            &|en, e| en.grads.gn[e],
            &|cb| cb.beta,
            &|h| h.b,
            &|en| &en.first.n,
        )?;

        // Z / G (no macroscopic derivatives)
        let build_zg = |op_d: &CellOperator,
                        gm: &dyn Fn(usize) -> [[f64; 2]; 2],
                        expansion: &dyn Fn(&CoefficientBundle) -> Mat2,
                        hom: Mat2,
                        corr_vec: &Vec<f64>,
                        corr_scal: &Vec<f64>,
                        a1: usize|
         -> Result<Vec<f64>> {
            let mut rhs = vec![0.0; 2 * nn];
            self.add_volume_vector(&mut rhs, -1.0, |e| {
                let mut v = [0.0; 2];
                let gme = gm(e);
                let exp = expansion(&ctr.coeffs[e]);
                for i in 0..2 {
                    let mut t = 0.0;
                    for kk in 0..2 {
                        for ll in 0..2 {
                            t += ctr.coeffs[e].d.at(i, a1, kk, ll) * (gme[kk][ll] + exp.at(kk, ll));
                        }
                    }
                    v[i] = t - hom.at(i, a1);
                }
                v
            });
            self.add_div_vector(&mut rhs, 1.0, |e| {
                let mbar = self.centroid_vector(corr_vec, e);
                let cbar = self.centroid_scalar(corr_scal, e);
                let stress = ctr.coeffs[e].d.contract2(&expansion(&ctr.coeffs[e]));
                let mut w = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        for kk in 0..2 {
                            w[i][j] += ctr.coeffs[e].d.at(i, j, kk, a1) * mbar[kk];
                        }
                        w[i][j] += stress.at(i, j) * cbar;
                    }
                }
                w
            });
            op_d.solve(&rhs)
        };
        let mut z: [Vec<f64>; 2] = Default::default();
        let mut g_fam: [Vec<f64>; 2] = Default::default();
        for a1 in 0..2 {
            z[a1] = build_zg(
                &op_d,
                &|e| ctr.grads.gm[e],
                &|cb| cb.alpha,
                ctr.homog.a,
                &ctr.first.m,
                &ctr.first.h[a1],
                a1,
            )?;
            g_fam[a1] = build_zg(
                &op_d,
                &|e| ctr.grads.gn[e],
                &|cb| cb.beta,
                ctr.homog.b,
                &ctr.first.n,
                &ctr.first.l[a1],
                a1,
            )?;
        }

        Ok(SecondOrderCellSet {
            h2,
            r,
            l2,
            s,
            p,
            q,
            w,
            z,
            f,
            g: g_fam,
        })
    }

    /// Second-order star families of the scale-separated path.
    pub fn solve_second_order_separated(
        &self,
        coeffs: &[CoefficientBundle],
        first: &FirstOrderCellSet,
        homog: &HomogPoint,
    ) -> Result<SeparatedSecondOrderSet> {
        let nn = self.n_nodes();
        let grads = self.first_order_grads(first);
        let op_k = self.scalar_operator(|e| coeffs[e].k)?;
        let op_g = self.scalar_operator(|e| coeffs[e].g)?;
        let op_d = self.vector_operator(|e| coeffs[e].d)?;

        // H2/L2 coincide with the general forms
        let mut h2: [[Vec<f64>; 2]; 2] = Default::default();
        let mut l2: [[Vec<f64>; 2]; 2] = Default::default();
        let mut r2: [[Vec<f64>; 2]; 2] = Default::default();
        let mut s2: [[Vec<f64>; 2]; 2] = Default::default();
        for a1 in 0..2 {
            for a2 in 0..2 {
                let mut rhs = vec![0.0; nn];
                self.add_volume_scalar(&mut rhs, -1.0, |e| {
                    let mut v = homog.k.at(a1, a2) - coeffs[e].k.at(a1, a2);
                    for j in 0..2 {
                        v -= coeffs[e].k.at(a1, j) * grads.gh[a2][e][j];
                    }
                    v
                });
                self.add_div_scalar(&mut rhs, -1.0, |e| {
                    let hbar = self.centroid_scalar(&first.h[a1], e);
                    [coeffs[e].k.at(0, a2) * hbar, coeffs[e].k.at(1, a2) * hbar]
                });
                h2[a1][a2] = op_k.solve(&rhs)?;

                let mut rhs = vec![0.0; nn];
                self.add_volume_scalar(&mut rhs, -1.0, |e| {
                    let mut v = homog.g.at(a1, a2) - coeffs[e].g.at(a1, a2);
                    for j in 0..2 {
                        v -= coeffs[e].g.at(a1, j) * grads.gl[a2][e][j];
                    }
                    v
                });
                self.add_div_scalar(&mut rhs, -1.0, |e| {
                    let lbar = self.centroid_scalar(&first.l[a1], e);
                    [coeffs[e].g.at(0, a2) * lbar, coeffs[e].g.at(1, a2) * lbar]
                });
                l2[a1][a2] = op_g.solve(&rhs)?;

                // R~, S~: pure volume loads, free index a2
                let mut rhs = vec![0.0; nn];
                self.add_volume_scalar(&mut rhs, -1.0, |e| {
                    let mut v = homog.k.at(a2, a1) - coeffs[e].k.at(a2, a1);
                    for j in 0..2 {
                        v -= coeffs[e].k.at(a2, j) * grads.gh[a1][e][j];
                    }
                    v
                });
                r2[a1][a2] = op_k.solve(&rhs)?;

                let mut rhs = vec![0.0; nn];
                self.add_volume_scalar(&mut rhs, -1.0, |e| {
                    let mut v = homog.g.at(a2, a1) - coeffs[e].g.at(a2, a1);
                    for j in 0..2 {
                        v -= coeffs[e].g.at(a2, j) * grads.gl[a1][e][j];
                    }
                    v
                });
                s2[a1][a2] = op_g.solve(&rhs)?;
            }
        }

        // P identical to the general form
        let mut p: [[[Vec<f64>; 2]; 2]; 2] = Default::default();
        let mut q2: [[[Vec<f64>; 2]; 2]; 2] = Default::default();
        for a1 in 0..2 {
            for a2 in 0..2 {
                for hh in 0..2 {
                    let mut rhs = vec![0.0; 2 * nn];
                    self.add_volume_vector(&mut rhs, -1.0, |e| {
                        let mut v = [0.0; 2];
                        for i in 0..2 {
                            v[i] = homog.d.at(i, a1, hh, a2) - coeffs[e].d.at(i, a1, hh, a2);
                            for kk in 0..2 {
                                for ll in 0..2 {
                                    v[i] -= coeffs[e].d.at(i, a1, kk, ll)
                                        * grads.gchi[a2][hh][e][kk][ll];
                                }
                            }
                        }
                        v
                    });
                    self.add_div_vector(&mut rhs, -1.0, |e| {
                        let xbar = self.centroid_vector(&first.chi[a1][hh], e);
                        let mut w = [[0.0; 2]; 2];
                        for i in 0..2 {
                            for j in 0..2 {
                                for kk in 0..2 {
                                    w[i][j] += coeffs[e].d.at(i, j, kk, a2) * xbar[kk];
                                }
                            }
                        }
                        w
                    });
                    p[a1][a2][hh] = op_d.solve(&rhs)?;

                    // Q~ swaps the roles of a1 and a2 in the load slots
                    let mut rhs = vec![0.0; 2 * nn];
                    self.add_volume_vector(&mut rhs, -1.0, |e| {
                        let mut v = [0.0; 2];
                        for i in 0..2 {
                            v[i] = homog.d.at(i, a2, hh, a1) - coeffs[e].d.at(i, a2, hh, a1);
                            for kk in 0..2 {
                                for ll in 0..2 {
                                    v[i] -= coeffs[e].d.at(i, a2, kk, ll)
                                        * grads.gchi[a1][hh][e][kk][ll];
                                }
                            }
                        }
                        v
                    });
                    q2[a1][a2][hh] = op_d.solve(&rhs)?;
                }
            }
        }

        // W~, F~ (factor 2 on the volume part), Z~, G~
        let mut w1: [Vec<f64>; 2] = Default::default();
        let mut f1: [Vec<f64>; 2] = Default::default();
        let mut z: [Vec<f64>; 2] = Default::default();
        let mut g_fam: [Vec<f64>; 2] = Default::default();
        for a1 in 0..2 {
            let wf = |gm: &Vec<[[f64; 2]; 2]>,
                      expansion: &dyn Fn(&CoefficientBundle) -> Mat2,
                      hom: Mat2,
                      corr: &Vec<f64>|
             -> Result<Vec<f64>> {
                let mut rhs = vec![0.0; 2 * nn];
                self.add_volume_vector(&mut rhs, -1.0, |e| {
                    let mut v = [0.0; 2];
                    let exp = expansion(&coeffs[e]);
                    for i in 0..2 {
                        let mut t = 0.0;
                        for kk in 0..2 {
                            for ll in 0..2 {
                                t += coeffs[e].d.at(i, a1, kk, ll)
                                    * (gm[e][kk][ll] + exp.at(kk, ll));
                            }
                        }
                        v[i] = 2.0 * (t - hom.at(i, a1));
                    }
                    v
                });
                self.add_div_vector(&mut rhs, 1.0, |e| {
                    let mbar = self.centroid_vector(corr, e);
                    let mut w = [[0.0; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            for kk in 0..2 {
                                w[i][j] += coeffs[e].d.at(i, j, kk, a1) * mbar[kk];
                            }
                        }
                    }
                    w
                });
                op_d.solve(&rhs)
            };
            w1[a1] = wf(&grads.gm, &|cb| cb.alpha, homog.a, &first.m)?;
            f1[a1] = wf(&grads.gn, &|cb| cb.beta, homog.b, &first.n)?;

            let zg = |gm: &Vec<[[f64; 2]; 2]>,
                      expansion: &dyn Fn(&CoefficientBundle) -> Mat2,
                      hom: Mat2,
                      corr_vec: &Vec<f64>,
                      corr_scal: &Vec<f64>|
             -> Result<Vec<f64>> {
                let mut rhs = vec![0.0; 2 * nn];
                self.add_volume_vector(&mut rhs, -1.0, |e| {
                    let mut v = [0.0; 2];
                    let exp = expansion(&coeffs[e]);
                    for i in 0..2 {
                        let mut t = 0.0;
                        for kk in 0..2 {
                            for ll in 0..2 {
                                t += coeffs[e].d.at(i, a1, kk, ll)
                                    * (gm[e][kk][ll] + exp.at(kk, ll));
                            }
                        }
                        v[i] = t - hom.at(i, a1);
                    }
                    v
                });
                self.add_div_vector(&mut rhs, 1.0, |e| {
                    let mbar = self.centroid_vector(corr_vec, e);
                    let cbar = self.centroid_scalar(corr_scal, e);
                    let stress = coeffs[e].d.contract2(&expansion(&coeffs[e]));
                    let mut w = [[0.0; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            for kk in 0..2 {
                                w[i][j] += coeffs[e].d.at(i, j, kk, a1) * mbar[kk];
                            }
                            w[i][j] += stress.at(i, j) * cbar;
                        }
                    }
                    w
                });
                op_d.solve(&rhs)
            };
            z[a1] = zg(&grads.gm, &|cb| cb.alpha, homog.a, &first.m, &first.h[a1])?;
            g_fam[a1] = zg(&grads.gn, &|cb| cb.beta, homog.b, &first.n, &first.l[a1])?;
        }

        Ok(SeparatedSecondOrderSet {
            h2,
            r2,
            l2,
            s2,
            p,
            q2,
            w1,
            z,
            f1,
            g: g_fam,
        })
    }

    /// Max absolute value over boundary nodes, for the Dirichlet-trace check.
    pub fn boundary_trace_max(&self, field: &[f64], ncomp: usize) -> f64 {
        let mut m = 0.0f64;
        for b in self.cell.boundary_nodes() {
            for c in 0..ncomp {
                m = m.max(field[ncomp * b + c].abs());
            }
        }
        m
    }
}

/// Max-norm of a nodal field.
pub fn max_abs(field: &[f64]) -> f64 {
    field.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn first_order_max(set: &FirstOrderCellSet) -> f64 {
    let mut m = 0.0f64;
    for a in 0..2 {
        m = m.max(max_abs(&set.h[a])).max(max_abs(&set.l[a]));
        for h in 0..2 {
            m = m.max(max_abs(&set.chi[a][h]));
        }
    }
    m.max(max_abs(&set.m)).max(max_abs(&set.n))
}

pub fn second_order_max(set: &SecondOrderCellSet) -> f64 {
    let mut m = 0.0f64;
    for a1 in 0..2 {
        m = m.max(max_abs(&set.r[a1])).max(max_abs(&set.s[a1]));
        m = m.max(max_abs(&set.z[a1])).max(max_abs(&set.g[a1]));
        for a2 in 0..2 {
            m = m.max(max_abs(&set.h2[a1][a2])).max(max_abs(&set.l2[a1][a2]));
            m = m.max(max_abs(&set.q[a1][a2]));
            for h in 0..2 {
                m = m.max(max_abs(&set.p[a1][a2][h]));
            }
        }
    }
    m.max(max_abs(&set.w)).max(max_abs(&set.f))
}
