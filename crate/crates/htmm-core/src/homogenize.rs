//! Representative-point grid, homogenized tensor field, and interpolation of
//! cell functions in the macro coordinate.

use crate::cell::{
    AxisDiff, CellSolver, FirstOrderCellSet, HomogPoint, SecondOrderCellSet,
    SeparatedSecondOrderSet, StencilEntry,
};
use crate::error::{Error, Result};
use crate::material::MaterialModel;
use crate::tensor::{ElasticTensor, Mat2};
use rayon::prelude::*;

/// Tensor-product representative points including the domain corners.
/// A single point per axis degenerates to the midpoint and disables
/// macroscopic differencing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentativeGrid {
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub n_rep: [usize; 2],
}

impl RepresentativeGrid {
    pub fn new(origin: [f64; 2], extent: [f64; 2], n_rep: [usize; 2]) -> Result<Self> {
        if n_rep[0] < 1 || n_rep[1] < 1 {
            return Err(Error::invalid("representative grid needs at least 1 point per axis"));
        }
        if extent[0] <= 0.0 || extent[1] <= 0.0 {
            return Err(Error::invalid("degenerate representative grid box"));
        }
        Ok(RepresentativeGrid {
            origin,
            extent,
            n_rep,
        })
    }

    pub fn len(&self) -> usize {
        self.n_rep[0] * self.n_rep[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing per axis; zero on degenerate axes.
    pub fn spacing(&self) -> [f64; 2] {
        let mut h = [0.0; 2];
        for d in 0..2 {
            if self.n_rep[d] > 1 {
                h[d] = self.extent[d] / (self.n_rep[d] - 1) as f64;
            }
        }
        h
    }

    pub fn coord(&self, ix: usize, d: usize) -> f64 {
        if self.n_rep[d] == 1 {
            self.origin[d] + 0.5 * self.extent[d]
        } else {
            self.origin[d] + self.extent[d] * ix as f64 / (self.n_rep[d] - 1) as f64
        }
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n_rep[0] + ix
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let ix = idx % self.n_rep[0];
        let iy = idx / self.n_rep[0];
        [self.coord(ix, 0), self.coord(iy, 1)]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Multilinear interpolation stencil: surrounding grid indices + weights.
    /// Clamped to the grid's bounding box.
    pub fn corners(&self, x: [f64; 2]) -> ([usize; 4], [f64; 4]) {
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for d in 0..2 {
            if self.n_rep[d] == 1 {
                base[d] = 0;
                frac[d] = 0.0;
            } else {
                let h = self.extent[d] / (self.n_rep[d] - 1) as f64;
                let s = ((x[d] - self.origin[d]) / h)
                    .clamp(0.0, (self.n_rep[d] - 1) as f64);
                let i = (s.floor() as usize).min(self.n_rep[d] - 2);
                base[d] = i;
                frac[d] = s - i as f64;
            }
        }
        let ix1 = (base[0] + 1).min(self.n_rep[0] - 1);
        let iy1 = (base[1] + 1).min(self.n_rep[1] - 1);
        let idx = [
            self.index(base[0], base[1]),
            self.index(ix1, base[1]),
            self.index(base[0], iy1),
            self.index(ix1, iy1),
        ];
        let (s, t) = (frac[0], frac[1]);
        let w = [
            (1.0 - s) * (1.0 - t),
            s * (1.0 - t),
            (1.0 - s) * t,
            s * t,
        ];
        (idx, w)
    }
}

/// Homogenized tensors sampled on the representative grid.
#[derive(Debug, Clone)]
pub struct HomogenizedField {
    pub grid: RepresentativeGrid,
    pub points: Vec<HomogPoint>,
}

impl HomogenizedField {
    pub fn interpolate(&self, x: [f64; 2]) -> HomogPoint {
        let (idx, w) = self.grid.corners(x);
        let mut k = Mat2::zero();
        let mut g = Mat2::zero();
        let mut d = ElasticTensor::zero();
        let mut a = Mat2::zero();
        let mut b = Mat2::zero();
        for c in 0..4 {
            let p = &self.points[idx[c]];
            k = k.add(&p.k.scale(w[c]));
            g = g.add(&p.g.scale(w[c]));
            d = d.add(&p.d.scale(w[c]));
            a = a.add(&p.a.scale(w[c]));
            b = b.add(&p.b.scale(w[c]));
        }
        HomogPoint { k, g, d, a, b }
    }
}

/// Offline product of the general path: first- and second-order cell sets and
/// homogenized tensors at every representative point.
pub struct CellTable {
    pub grid: RepresentativeGrid,
    pub first: Vec<FirstOrderCellSet>,
    pub second: Vec<SecondOrderCellSet>,
    pub homog: Vec<HomogPoint>,
}

impl CellTable {
    pub fn homogenized_field(&self) -> HomogenizedField {
        HomogenizedField {
            grid: self.grid,
            points: self.homog.clone(),
        }
    }
}

/// Offline product of the scale-separated path: one star set.
pub struct SeparatedTable {
    pub first: FirstOrderCellSet,
    pub second: SeparatedSecondOrderSet,
    pub homog_star: HomogPoint,
}

/// Solve first-order sets and homogenized tensors at all grid points, then
/// the second-order sets with finite differences over grid neighbors.
pub fn build_cell_table(
    solver: &CellSolver,
    model: &MaterialModel,
    grid: &RepresentativeGrid,
) -> Result<CellTable> {
    let n = grid.len();
    let first_and_homog: Vec<(FirstOrderCellSet, HomogPoint)> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(idx);
            let coeffs = solver.coefficients_at(model, x)?;
            let first = solver.solve_first_order(&coeffs)?;
            let homog = solver.compute_homogenized(&coeffs, &first);
            Ok((first, homog))
        })
        .collect::<Result<_>>()?;
    let (first, homog): (Vec<_>, Vec<_>) = first_and_homog.into_iter().unzip();

    let spacing = grid.spacing();
    let second: Vec<SecondOrderCellSet> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % grid.n_rep[0];
            let iy = idx / grid.n_rep[0];
            // entry 0 is the center; neighbors appended per axis as needed
            let mut entry_indices = vec![idx];
            let mut diffs: [AxisDiff; 2] = [Vec::new(), Vec::new()];
            for d in 0..2 {
                if grid.n_rep[d] == 1 {
                    continue;
                }
                let i_axis = if d == 0 { ix } else { iy };
                let h = spacing[d];
                let minus = if i_axis > 0 {
                    let j = if d == 0 {
                        grid.index(ix - 1, iy)
                    } else {
                        grid.index(ix, iy - 1)
                    };
                    entry_indices.push(j);
                    Some(entry_indices.len() - 1)
                } else {
                    None
                };
                let plus = if i_axis + 1 < grid.n_rep[d] {
                    let j = if d == 0 {
                        grid.index(ix + 1, iy)
                    } else {
                        grid.index(ix, iy + 1)
                    };
                    entry_indices.push(j);
                    Some(entry_indices.len() - 1)
                } else {
                    None
                };
                diffs[d] = match (minus, plus) {
                    (Some(m), Some(p)) => vec![(m, -0.5 / h), (p, 0.5 / h)],
                    (None, Some(p)) => vec![(0, -1.0 / h), (p, 1.0 / h)],
                    (Some(m), None) => vec![(m, -1.0 / h), (0, 1.0 / h)],
                    (None, None) => Vec::new(),
                };
            }
            let entries: Vec<StencilEntry> = entry_indices
                .iter()
                .map(|&j| {
                    let x = grid.point(j);
                    let coeffs = solver.coefficients_at(model, x)?;
                    let grads = solver.first_order_grads(&first[j]);
                    Ok(StencilEntry {
                        x,
                        coeffs,
                        first: &first[j],
                        homog: homog[j],
                        grads,
                    })
                })
                .collect::<Result<_>>()?;
            solver.solve_second_order(&entries, 0, &diffs)
        })
        .collect::<Result<_>>()?;

    Ok(CellTable {
        grid: *grid,
        first,
        second,
        homog,
    })
}

/// Solve the x-independent star problems of the scale-separated path.
pub fn build_separated_table(solver: &CellSolver, model: &MaterialModel) -> Result<SeparatedTable> {
    let coeffs = solver.star_coefficients(model)?;
    let first = solver.solve_first_order(&coeffs)?;
    let homog_star = solver.compute_homogenized(&coeffs, &first);
    let second = solver.solve_second_order_separated(&coeffs, &first, &homog_star)?;
    Ok(SeparatedTable {
        first,
        second,
        homog_star,
    })
}

/// Cell-function family selector for interpolation queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFamily {
    H(usize),
    L(usize),
    X(usize, usize),
    M,
    N,
    H2(usize, usize),
    R(usize),
    L2(usize, usize),
    S(usize),
    P(usize, usize, usize),
    Q(usize, usize),
    W,
    Z(usize),
    F,
    G(usize),
}

impl CellFamily {
    pub fn ncomp(&self) -> usize {
        match self {
            CellFamily::H(_)
            | CellFamily::L(_)
            | CellFamily::H2(..)
            | CellFamily::R(_)
            | CellFamily::L2(..)
            | CellFamily::S(_) => 1,
            _ => 2,
        }
    }
}

pub fn family_slice(table: &CellTable, idx: usize, family: CellFamily) -> &Vec<f64> {
    let f = &table.first[idx];
    let s = &table.second[idx];
    match family {
        CellFamily::H(a) => &f.h[a],
        CellFamily::L(a) => &f.l[a],
        CellFamily::X(a, h) => &f.chi[a][h],
        CellFamily::M => &f.m,
        CellFamily::N => &f.n,
        CellFamily::H2(a, b) => &s.h2[a][b],
        CellFamily::R(a) => &s.r[a],
        CellFamily::L2(a, b) => &s.l2[a][b],
        CellFamily::S(a) => &s.s[a],
        CellFamily::P(a, b, h) => &s.p[a][b][h],
        CellFamily::Q(a, h) => &s.q[a][h],
        CellFamily::W => &s.w,
        CellFamily::Z(a) => &s.z[a],
        CellFamily::F => &s.f,
        CellFamily::G(a) => &s.g[a],
    }
}

/// Nodal-value-wise multilinear interpolation of one family at macro point x.
pub fn interpolate_cell_function(table: &CellTable, x: [f64; 2], family: CellFamily) -> Vec<f64> {
    let (idx, w) = table.grid.corners(x);
    let len = family_slice(table, idx[0], family).len();
    let mut out = vec![0.0; len];
    for c in 0..4 {
        let f = family_slice(table, idx[c], family);
        for (o, v) in out.iter_mut().zip(f) {
            *o += w[c] * v;
        }
    }
    out
}
