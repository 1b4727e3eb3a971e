//! Small fixed-size tensor types for 2D coefficients.
//!
//! `Mat2` holds second-order tensors (conductivity, diffusivity, expansion
//! coefficients, thermal/moisture stress moduli). `ElasticTensor` holds the
//! fourth-order elasticity tensor in Voigt form with raw tensor components,
//! ordering (11, 22, 12); with engineering shear strain vectors the stored
//! matrix is directly usable as the constitutive matrix.

use serde::{Deserialize, Serialize};

pub const DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn zero() -> Self {
        Mat2([[0.0; 2]; 2])
    }

    pub fn identity() -> Self {
        Mat2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn isotropic(s: f64) -> Self {
        Mat2([[s, 0.0], [0.0, s]])
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let mut m = *self;
        for r in m.0.iter_mut() {
            for v in r.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let mut m = *self;
        for i in 0..2 {
            for j in 0..2 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        self.add(&o.scale(-1.0))
    }

    pub fn symmetry_defect(&self) -> f64 {
        (self.0[0][1] - self.0[1][0]).abs()
    }

    /// Eigenvalues of the symmetrized matrix, ascending.
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0];
        let d = self.0[1][1];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        let tr = a + d;
        let disc = (0.25 * (a - d) * (a - d) + b * b).max(0.0).sqrt();
        [0.5 * tr - disc, 0.5 * tr + disc]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.sym_eigenvalues()[0]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Voigt index map: (0,0) -> 0, (1,1) -> 1, (0,1)/(1,0) -> 2.
#[inline]
pub fn voigt(i: usize, j: usize) -> usize {
    if i == j {
        i
    } else {
        2
    }
}

/// Fourth-order elasticity tensor with minor symmetries, stored as the
/// symmetric 3x3 matrix of raw tensor components C[voigt(i,j)][voigt(k,l)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticTensor(pub [[f64; 3]; 3]);

impl ElasticTensor {
    pub fn zero() -> Self {
        ElasticTensor([[0.0; 3]; 3])
    }

    /// Isotropic plane-strain tensor from Young's modulus and Poisson ratio:
    /// lambda = E nu / ((1+nu)(1-2nu)), mu = E / (2(1+nu)).
    pub fn from_young_poisson_plane_strain(e: f64, nu: f64) -> Self {
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        Self::from_lame(lambda, mu)
    }

    pub fn from_lame(lambda: f64, mu: f64) -> Self {
        ElasticTensor([
            [lambda + 2.0 * mu, lambda, 0.0],
            [lambda, lambda + 2.0 * mu, 0.0],
            [0.0, 0.0, mu],
        ])
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.0[voigt(i, j)][voigt(k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.0[voigt(i, j)][voigt(k, l)] = v;
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for r in m.0.iter_mut() {
            for v in r.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    /// Contraction D_ijkl s_kl; only the symmetric part of `s` contributes.
    pub fn contract2(&self, s: &Mat2) -> Mat2 {
        let mut out = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += self.at(i, j, k, l) * s.at(k, l);
                    }
                }
                out.0[i][j] = acc;
            }
        }
        out
    }

    /// Max |C[a][b] - C[b][a]| of the Voigt matrix (major symmetry defect).
    pub fn major_symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                d = d.max((self.0[a][b] - self.0[b][a]).abs());
            }
        }
        d
    }

    /// Minimum eigenvalue of the Voigt matrix (symmetrized).
    pub fn min_eigenvalue(&self) -> f64 {
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = 0.5 * (self.0[a][b] + self.0[b][a]);
            }
        }
        let ev = sym_eigenvalues_3(&m);
        ev[0]
    }
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues_3(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut a = *m;
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for p in 0..2 {
            for q in (p + 1)..3 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
            }
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}
