//! Multiscale reconstruction on the fine mesh: the homogenized field alone,
//! the first-order (LOMS) combination, or the second-order (HOMS) combination,
//! via the general interpolated cell table or the scale-separated star set.

use crate::error::{Error, Result};
use crate::field::FieldSolution;
use crate::homogenize::{CellTable, SeparatedTable};
use crate::macroscale::FieldTriple;
use crate::mesh::{micro_coord, Frac, MacroMesh, TriMesh};
use crate::weight::Weight;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Homogenized,
    Loms,
    Homs,
}

impl Order {
    pub fn label(&self) -> &'static str {
        match self {
            Order::Homogenized => "0",
            Order::Loms => "1",
            Order::Homs => "2",
        }
    }
}

pub enum CellData<'a> {
    General(&'a CellTable),
    Separated {
        table: &'a SeparatedTable,
        weight: Arc<Weight>,
    },
}

pub struct ReconstructionInputs<'a> {
    pub epsilon: Frac,
    pub fine: &'a Arc<MacroMesh>,
    pub cell_mesh: &'a TriMesh,
    pub macro_sol: &'a FieldTriple,
    pub order: Order,
    pub data: CellData<'a>,
}

struct MacroPoint {
    t0: f64,
    c0: f64,
    u0: [f64; 2],
    dt0: [f64; 2],
    dc0: [f64; 2],
    du0: [[f64; 2]; 2],
    ht0: [[f64; 2]; 2],
    hc0: [[f64; 2]; 2],
    hu0: [[[f64; 2]; 2]; 2],
}

fn expand_hess(h: [f64; 3]) -> [[f64; 2]; 2] {
    [[h[0], h[2]], [h[2], h[1]]]
}

fn macro_point(sol: &FieldTriple, x: [f64; 2], order: Order) -> Result<MacroPoint> {
    let mesh = &sol.t.mesh;
    let (e, bary) = mesh.locate(x);
    let tri = mesh.tris[e];
    let interp_val = |f: &FieldSolution, comp: usize| -> f64 {
        (0..3).map(|k| bary[k] * f.value(tri[k], comp)).sum()
    };
    let interp_arr = |data: &[f64], ncomp: usize, stride: usize, comp: usize, slot: usize| -> f64 {
        (0..3)
            .map(|k| bary[k] * data[(tri[k] * ncomp + comp) * stride + slot])
            .sum()
    };
    let mut mp = MacroPoint {
        t0: interp_val(&sol.t, 0),
        c0: interp_val(&sol.c, 0),
        u0: [interp_val(&sol.u, 0), interp_val(&sol.u, 1)],
        dt0: [0.0; 2],
        dc0: [0.0; 2],
        du0: [[0.0; 2]; 2],
        ht0: [[0.0; 2]; 2],
        hc0: [[0.0; 2]; 2],
        hu0: [[[0.0; 2]; 2]; 2],
    };
    if order != Order::Homogenized {
        let gt = sol.t.grad.as_ref().ok_or_else(missing_grad)?;
        let gc = sol.c.grad.as_ref().ok_or_else(missing_grad)?;
        let gu = sol.u.grad.as_ref().ok_or_else(missing_grad)?;
        for d in 0..2 {
            mp.dt0[d] = interp_arr(gt, 1, 2, 0, d);
            mp.dc0[d] = interp_arr(gc, 1, 2, 0, d);
            for h in 0..2 {
                mp.du0[h][d] = interp_arr(gu, 2, 2, h, d);
            }
        }
    }
    if order == Order::Homs {
        let ht = sol.t.hess.as_ref().ok_or_else(missing_hess)?;
        let hc = sol.c.hess.as_ref().ok_or_else(missing_hess)?;
        let hu = sol.u.hess.as_ref().ok_or_else(missing_hess)?;
        let mut raw = [0.0; 3];
        for s in 0..3 {
            raw[s] = interp_arr(ht, 1, 3, 0, s);
        }
        mp.ht0 = expand_hess(raw);
        for s in 0..3 {
            raw[s] = interp_arr(hc, 1, 3, 0, s);
        }
        mp.hc0 = expand_hess(raw);
        for h in 0..2 {
            for s in 0..3 {
                raw[s] = interp_arr(hu, 2, 3, h, s);
            }
            mp.hu0[h] = expand_hess(raw);
        }
    }
    Ok(mp)
}

fn missing_grad() -> Error {
    Error::Missing("macro solution lacks recovered gradients (run derivative recovery)".into())
}

fn missing_hess() -> Error {
    Error::Missing("macro solution lacks recovered Hessians (run derivative recovery)".into())
}

/// Reconstruct with the epsilon taken from the inputs.
pub fn reconstruct(inputs: &ReconstructionInputs) -> Result<FieldTriple> {
    let info = inputs
        .fine
        .mesh
        .fine
        .ok_or_else(|| Error::Missing("reconstruction requires a fine mesh".into()))?;
    if info.epsilon != inputs.epsilon {
        return Err(Error::invalid(format!(
            "epsilon {} does not match the fine mesh cell size {}",
            inputs.epsilon, info.epsilon
        )));
    }
    reconstruct_with_eps(inputs, inputs.epsilon.value())
}

/// Reconstruct with an explicit epsilon value in the combination formula
/// (the micro coordinate still follows the fine mesh cell structure).
pub fn reconstruct_with_eps(inputs: &ReconstructionInputs, eps: f64) -> Result<FieldTriple> {
    let fine_mesh = &inputs.fine.mesh;
    let cell_eps = inputs.epsilon.value();
    let origin = fine_mesh.info.origin;
    let n = fine_mesh.n_nodes();

    let rows: Vec<(f64, f64, [f64; 2])> = (0..n)
        .into_par_iter()
        .map(|node| -> Result<(f64, f64, [f64; 2])> {
            let x = fine_mesh.nodes[node];
            let mp = macro_point(inputs.macro_sol, x, inputs.order)?;
            if inputs.order == Order::Homogenized {
                return Ok((mp.t0, mp.c0, mp.u0));
            }
            let y = micro_coord(x, origin, cell_eps);
            let (ce, cbary) = inputs.cell_mesh.locate(y);
            let ctri = inputs.cell_mesh.tris[ce];
            let p1s = |f: &[f64]| -> f64 { (0..3).map(|k| cbary[k] * f[ctri[k]]).sum() };
            let p1v = |f: &[f64]| -> [f64; 2] {
                [
                    (0..3).map(|k| cbary[k] * f[2 * ctri[k]]).sum(),
                    (0..3).map(|k| cbary[k] * f[2 * ctri[k] + 1]).sum(),
                ]
            };
            let eps2 = eps * eps;
            let mut t = mp.t0;
            let mut c = mp.c0;
            let mut u = mp.u0;
            match &inputs.data {
                CellData::General(table) => {
                    let (ci, cw) = table.grid.corners(x);
                    let val_s = |pick: &dyn Fn(usize) -> f64| -> f64 {
                        (0..4).map(|q| cw[q] * pick(ci[q])).sum()
                    };
                    let val_v = |pick: &dyn Fn(usize) -> [f64; 2]| -> [f64; 2] {
                        let mut out = [0.0; 2];
                        for q in 0..4 {
                            let v = pick(ci[q]);
                            out[0] += cw[q] * v[0];
                            out[1] += cw[q] * v[1];
                        }
                        out
                    };
                    for a1 in 0..2 {
                        t += eps * val_s(&|i| p1s(&table.first[i].h[a1])) * mp.dt0[a1];
                        c += eps * val_s(&|i| p1s(&table.first[i].l[a1])) * mp.dc0[a1];
                        for h in 0..2 {
                            let xv = val_v(&|i| p1v(&table.first[i].chi[a1][h]));
                            for comp in 0..2 {
                                u[comp] += eps * xv[comp] * mp.du0[h][a1];
                            }
                        }
                    }
                    let mv = val_v(&|i| p1v(&table.first[i].m));
                    let nv = val_v(&|i| p1v(&table.first[i].n));
                    for comp in 0..2 {
                        u[comp] -= eps * (mv[comp] * mp.t0 + nv[comp] * mp.c0);
                    }
                    if inputs.order == Order::Homs {
                        for a1 in 0..2 {
                            for a2 in 0..2 {
                                t += eps2
                                    * val_s(&|i| p1s(&table.second[i].h2[a1][a2]))
                                    * mp.ht0[a1][a2];
                                c += eps2
                                    * val_s(&|i| p1s(&table.second[i].l2[a1][a2]))
                                    * mp.hc0[a1][a2];
                                for h in 0..2 {
                                    let pv = val_v(&|i| p1v(&table.second[i].p[a1][a2][h]));
                                    for comp in 0..2 {
                                        u[comp] += eps2 * pv[comp] * mp.hu0[h][a1][a2];
                                    }
                                }
                            }
                            t += eps2 * val_s(&|i| p1s(&table.second[i].r[a1])) * mp.dt0[a1];
                            c += eps2 * val_s(&|i| p1s(&table.second[i].s[a1])) * mp.dc0[a1];
                            for h in 0..2 {
                                let qv = val_v(&|i| p1v(&table.second[i].q[a1][h]));
                                for comp in 0..2 {
                                    u[comp] += eps2 * qv[comp] * mp.du0[h][a1];
                                }
                            }
                            let zv = val_v(&|i| p1v(&table.second[i].z[a1]));
                            let gv = val_v(&|i| p1v(&table.second[i].g[a1]));
                            for comp in 0..2 {
                                u[comp] += eps2
                                    * (zv[comp] * mp.dt0[a1] + gv[comp] * mp.dc0[a1]);
                            }
                        }
                        let wv = val_v(&|i| p1v(&table.second[i].w));
                        let fv = val_v(&|i| p1v(&table.second[i].f));
                        for comp in 0..2 {
                            u[comp] += eps2 * (wv[comp] * mp.t0 + fv[comp] * mp.c0);
                        }
                    }
                }
                CellData::Separated { table, weight } => {
                    let wx = weight.eval(x);
                    if wx == 0.0 {
                        return Err(Error::invalid(format!(
                            "weight vanishes at ({}, {}): scale-separated reconstruction undefined",
                            x[0], x[1]
                        )));
                    }
                    let dw = weight.grad(x);
                    for a1 in 0..2 {
                        t += eps * p1s(&table.first.h[a1]) * mp.dt0[a1];
                        c += eps * p1s(&table.first.l[a1]) * mp.dc0[a1];
                        for h in 0..2 {
                            let xv = p1v(&table.first.chi[a1][h]);
                            for comp in 0..2 {
                                u[comp] += eps * xv[comp] * mp.du0[h][a1];
                            }
                        }
                    }
                    let mv = p1v(&table.first.m);
                    let nv = p1v(&table.first.n);
                    for comp in 0..2 {
                        u[comp] -= eps * wx * (mv[comp] * mp.t0 + nv[comp] * mp.c0);
                    }
                    if inputs.order == Order::Homs {
                        for a1 in 0..2 {
                            for a2 in 0..2 {
                                t += eps2 * p1s(&table.second.h2[a1][a2]) * mp.ht0[a1][a2];
                                c += eps2 * p1s(&table.second.l2[a1][a2]) * mp.hc0[a1][a2];
                                t += eps2 * (dw[a2] / wx) * p1s(&table.second.r2[a1][a2])
                                    * mp.dt0[a1];
                                c += eps2 * (dw[a2] / wx) * p1s(&table.second.s2[a1][a2])
                                    * mp.dc0[a1];
                                for h in 0..2 {
                                    let pv = p1v(&table.second.p[a1][a2][h]);
                                    let qv = p1v(&table.second.q2[a1][a2][h]);
                                    for comp in 0..2 {
                                        u[comp] += eps2 * pv[comp] * mp.hu0[h][a1][a2];
                                        u[comp] +=
                                            eps2 * (dw[a2] / wx) * qv[comp] * mp.du0[h][a1];
                                    }
                                }
                            }
                            let wv = p1v(&table.second.w1[a1]);
                            let fv = p1v(&table.second.f1[a1]);
                            let zv = p1v(&table.second.z[a1]);
                            let gv = p1v(&table.second.g[a1]);
                            for comp in 0..2 {
                                u[comp] += eps2
                                    * (dw[a1] * (wv[comp] * mp.t0 + fv[comp] * mp.c0)
                                        + wx * (zv[comp] * mp.dt0[a1] + gv[comp] * mp.dc0[a1]));
                            }
                        }
                    }
                }
            }
            Ok((t, c, u))
        })
        .collect::<Result<_>>()?;

    let mesh = Arc::new(fine_mesh.clone());
    let mut tv = Vec::with_capacity(n);
    let mut cv = Vec::with_capacity(n);
    let mut uv = Vec::with_capacity(2 * n);
    for (t, c, u) in rows {
        tv.push(t);
        cv.push(c);
        uv.push(u[0]);
        uv.push(u[1]);
    }
    Ok(FieldTriple {
        t: FieldSolution::new(mesh.clone(), 1, tv),
        c: FieldSolution::new(mesh.clone(), 1, cv),
        u: FieldSolution::new(mesh, 2, uv),
    })
}

/// Max deviation of a reconstructed field from constant Dirichlet data over
/// the boundary nodes of the fine mesh.
pub fn boundary_deviation(field: &FieldSolution, data: &[f64]) -> f64 {
    let mut dev = 0.0f64;
    for b in field.mesh.boundary_nodes() {
        for comp in 0..field.ncomp {
            dev = dev.max((field.value(b, comp) - data[comp]).abs());
        }
    }
    dev
}
