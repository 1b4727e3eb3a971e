//! Quasi-periodic material model a(x, y) for the five coefficient families.
//!
//! Micro phases are isotropic; the macroscopic dependence enters through a
//! scalar weight psi. Product mode composes a(x,y) = (s_f psi(x)) a^(y),
//! sum mode a(x,y) = s_f psi(x) + a^(y), with per-family factors s_f.
//! General mode supplies all three composition coefficients per family:
//! a = c0 a^(y) + c1 psi(x) a^(y) + c2 psi(x). Poisson's ratio is composed
//! with its own factor but is never weight-scaled in product mode, keeping
//! it inside (0, 1/2).

use crate::error::{Error, Result};
use crate::mesh::{Circle, INCLUSION, MATRIX};
use crate::tensor::{ElasticTensor, Mat2};
use crate::weight::Weight;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Isotropic micro-scale values of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroPhase {
    pub e: f64,
    pub nu: f64,
    pub k: f64,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialMode {
    Product,
    Sum,
    General,
}

/// Per-family macroscopic factors applied to the weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyFactors {
    pub e: f64,
    pub nu: f64,
    pub k: f64,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl FamilyFactors {
    pub fn ones() -> Self {
        FamilyFactors {
            e: 1.0,
            nu: 1.0,
            k: 1.0,
            g: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn zeros() -> Self {
        FamilyFactors {
            e: 0.0,
            nu: 0.0,
            k: 0.0,
            g: 0.0,
            alpha: 0.0,
            beta: 0.0,
        }
    }
}

/// General-mode composition coefficients: a = c0 a^ + c1 psi a^ + c2 psi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralComposition {
    pub c0: FamilyFactors,
    pub c1: FamilyFactors,
    pub c2: FamilyFactors,
}

#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub matrix: MicroPhase,
    pub inclusion: MicroPhase,
    pub inclusion_geometry: Option<Circle>,
    pub mode: MaterialMode,
    pub weight: Arc<Weight>,
    pub factors: FamilyFactors,
    pub general: Option<GeneralComposition>,
}

/// All six scalar parameters at one (x, y).
#[derive(Debug, Clone, Copy)]
pub struct ScalarParams {
    pub e: f64,
    pub nu: f64,
    pub k: f64,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Evaluated tensor bundle at one (x, y).
#[derive(Debug, Clone, Copy)]
pub struct CoefficientBundle {
    pub k: Mat2,
    pub g: Mat2,
    pub d: ElasticTensor,
    pub alpha: Mat2,
    pub beta: Mat2,
}

impl MaterialModel {
    pub fn new(
        matrix: MicroPhase,
        inclusion: MicroPhase,
        inclusion_geometry: Option<Circle>,
        mode: MaterialMode,
        weight: Arc<Weight>,
        factors: FamilyFactors,
    ) -> Self {
        MaterialModel {
            matrix,
            inclusion,
            inclusion_geometry,
            mode,
            weight,
            factors,
            general: None,
        }
    }

    pub fn phase(&self, tag: u8) -> &MicroPhase {
        if tag == INCLUSION {
            &self.inclusion
        } else {
            &self.matrix
        }
    }

    pub fn tag_at(&self, y: [f64; 2]) -> u8 {
        match &self.inclusion_geometry {
            Some(c) if c.contains(y) => INCLUSION,
            _ => MATRIX,
        }
    }

    /// Scale-separated micro values a*(y); per-family constant factors fold
    /// into the star coefficients so that a(x,y) = psi(x) a*(y) exactly.
    pub fn star_params(&self, tag: u8) -> Result<ScalarParams> {
        if self.mode != MaterialMode::Product {
            return Err(Error::invalid(
                "scale-separated path requires a product-mode material",
            ));
        }
        let p = self.phase(tag);
        let f = self.factors;
        Ok(ScalarParams {
            e: f.e * p.e,
            nu: f.nu * p.nu,
            k: f.k * p.k,
            g: f.g * p.g,
            alpha: f.alpha * p.alpha,
            beta: f.beta * p.beta,
        })
    }

    pub fn params_for_phase(&self, x: [f64; 2], tag: u8) -> ScalarParams {
        let p = self.phase(tag);
        let psi = self.weight.eval(x);
        let f = self.factors;
        match self.mode {
            MaterialMode::Product => ScalarParams {
                e: f.e * psi * p.e,
                nu: f.nu * p.nu,
                k: f.k * psi * p.k,
                g: f.g * psi * p.g,
                alpha: f.alpha * psi * p.alpha,
                beta: f.beta * psi * p.beta,
            },
            MaterialMode::Sum => ScalarParams {
                e: f.e * psi + p.e,
                nu: f.nu * psi + p.nu,
                k: f.k * psi + p.k,
                g: f.g * psi + p.g,
                alpha: f.alpha * psi + p.alpha,
                beta: f.beta * psi + p.beta,
            },
            MaterialMode::General => {
                let gc = self.general.unwrap_or(GeneralComposition {
                    c0: FamilyFactors::zeros(),
                    c1: FamilyFactors::ones(),
                    c2: FamilyFactors::zeros(),
                });
                let compose = |c0: f64, c1: f64, c2: f64, base: f64| {
                    c0 * base + c1 * psi * base + c2 * psi
                };
                ScalarParams {
                    e: compose(gc.c0.e, gc.c1.e, gc.c2.e, p.e),
                    nu: compose(gc.c0.nu, gc.c1.nu, gc.c2.nu, p.nu),
                    k: compose(gc.c0.k, gc.c1.k, gc.c2.k, p.k),
                    g: compose(gc.c0.g, gc.c1.g, gc.c2.g, p.g),
                    alpha: compose(gc.c0.alpha, gc.c1.alpha, gc.c2.alpha, p.alpha),
                    beta: compose(gc.c0.beta, gc.c1.beta, gc.c2.beta, p.beta),
                }
            }
        }
    }

    pub fn bundle_for_phase(&self, x: [f64; 2], tag: u8) -> Result<CoefficientBundle> {
        bundle_from(self.params_for_phase(x, tag))
    }

    pub fn star_bundle_for_phase(&self, tag: u8) -> Result<CoefficientBundle> {
        bundle_from(self.star_params(tag)?)
    }

    /// Evaluate the full bundle at a macro point x and micro point y.
    pub fn evaluate(&self, x: [f64; 2], y: [f64; 2]) -> Result<CoefficientBundle> {
        if !(0.0..=1.0).contains(&y[0]) || !(0.0..=1.0).contains(&y[1]) {
            return Err(Error::invalid(format!(
                "micro point ({}, {}) outside the unit cell",
                y[0], y[1]
            )));
        }
        self.bundle_for_phase(x, self.tag_at(y))
    }
}

fn bundle_from(p: ScalarParams) -> Result<CoefficientBundle> {
    if p.k <= 0.0 || p.g <= 0.0 || p.e <= 0.0 || p.alpha <= 0.0 || p.beta <= 0.0 {
        return Err(Error::Ellipticity(format!(
            "nonpositive coefficient (k={}, g={}, E={}, alpha={}, beta={})",
            p.k, p.g, p.e, p.alpha, p.beta
        )));
    }
    if p.nu <= 0.0 || p.nu >= 0.5 {
        return Err(Error::Ellipticity(format!(
            "Poisson ratio {} outside (0, 0.5)",
            p.nu
        )));
    }
    Ok(CoefficientBundle {
        k: Mat2::isotropic(p.k),
        g: Mat2::isotropic(p.g),
        d: ElasticTensor::from_young_poisson_plane_strain(p.e, p.nu),
        alpha: Mat2::isotropic(p.alpha),
        beta: Mat2::isotropic(p.beta),
    })
}

fn bundle_unchecked(p: ScalarParams) -> CoefficientBundle {
    CoefficientBundle {
        k: Mat2::isotropic(p.k),
        g: Mat2::isotropic(p.g),
        d: ElasticTensor::from_young_poisson_plane_strain(p.e, p.nu),
        alpha: Mat2::isotropic(p.alpha),
        beta: Mat2::isotropic(p.beta),
    }
}

/// Assumption report: minimum eigenvalues per family over the sample sets
/// and the largest symmetry defect. Reports, never fails.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionReport {
    pub min_eig_k: f64,
    pub min_eig_g: f64,
    pub min_eig_d: f64,
    pub min_eig_alpha: f64,
    pub min_eig_beta: f64,
    pub max_symmetry_defect: f64,
}

impl AssumptionReport {
    pub fn all_elliptic(&self) -> bool {
        self.min_eig_k > 0.0
            && self.min_eig_g > 0.0
            && self.min_eig_d > 0.0
            && self.min_eig_alpha > 0.0
            && self.min_eig_beta > 0.0
    }
}

pub fn validate_assumptions(
    model: &MaterialModel,
    x_samples: &[[f64; 2]],
    y_samples: &[[f64; 2]],
) -> AssumptionReport {
    let finite = |v: f64| if v.is_finite() { v } else { f64::NEG_INFINITY };
    let mut rep = AssumptionReport {
        min_eig_k: f64::INFINITY,
        min_eig_g: f64::INFINITY,
        min_eig_d: f64::INFINITY,
        min_eig_alpha: f64::INFINITY,
        min_eig_beta: f64::INFINITY,
        max_symmetry_defect: 0.0,
    };
    for &x in x_samples {
        for &y in y_samples {
            let b = bundle_unchecked(model.params_for_phase(x, model.tag_at(y)));
            rep.min_eig_k = rep.min_eig_k.min(finite(b.k.min_eigenvalue()));
            rep.min_eig_g = rep.min_eig_g.min(finite(b.g.min_eigenvalue()));
            rep.min_eig_d = rep.min_eig_d.min(finite(b.d.min_eigenvalue()));
            rep.min_eig_alpha = rep.min_eig_alpha.min(finite(b.alpha.min_eigenvalue()));
            rep.min_eig_beta = rep.min_eig_beta.min(finite(b.beta.min_eigenvalue()));
            rep.max_symmetry_defect = rep
                .max_symmetry_defect
                .max(b.k.symmetry_defect())
                .max(b.g.symmetry_defect())
                .max(b.alpha.symmetry_defect())
                .max(b.beta.symmetry_defect())
                .max(b.d.major_symmetry_defect());
        }
    }
    rep
}

/// Uniform sample grid over the unit square, n points per axis.
pub fn sample_grid(n: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let s = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let t = if n == 1 { 0.5 } else { j as f64 / (n - 1) as f64 };
            pts.push([s, t]);
        }
    }
    pts
}


#[cfg(test)]
mod tests {
    use super::test_models::*;
    use super::*;

    #[test]
    fn product_matrix_conductivity_at_origin() {
        // psi(0,0) = 5 so the matrix-phase conductivity evaluates to 500
        let model = product_model("sine4pi");
        let b = model.evaluate([0.0, 0.0], [0.05, 0.05]).unwrap();
        assert!((b.k.at(0, 0) - 500.0).abs() < 1e-10);
        assert!((b.k.at(1, 1) - 500.0).abs() < 1e-10);
        assert_eq!(b.k.at(0, 1), 0.0);
    }

    #[test]
    fn constant_model_independent_of_x_and_y() {
        let model = constant_model();
        let b1 = model.evaluate([0.1, 0.2], [0.3, 0.4]).unwrap();
        let b2 = model.evaluate([0.9, 0.7], [0.6, 0.1]).unwrap();
        assert_eq!(b1.k, b2.k);
        assert_eq!(b1.d, b2.d);
    }

    #[test]
    fn sum_mode_reduces_to_micro_at_weight_zero() {
        // quartic well vanishes at (0.5, 0.5): k(x,y) = micro value exactly
        let model = sum_model("quartic_well");
        let b = model.evaluate([0.5, 0.5], [0.05, 0.05]).unwrap();
        assert_eq!(b.k.at(0, 0), 100.0);
        let bi = model.evaluate([0.5, 0.5], [0.5, 0.5]).unwrap();
        assert_eq!(bi.k.at(0, 0), 1.0);
    }

    #[test]
    fn product_scaling_identity_pointwise() {
        let model = product_model("sine4pi");
        let (x, x0) = ([0.3, 0.8], [0.05, 0.65]);
        let y = [0.1, 0.9];
        let psi = |p: [f64; 2]| model.weight.eval(p);
        let bx = model.evaluate(x, y).unwrap();
        let b0 = model.evaluate(x0, y).unwrap();
        let ratio = psi(x) / psi(x0);
        for (a, b) in [
            (bx.k.at(0, 0), b0.k.at(0, 0)),
            (bx.g.at(1, 1), b0.g.at(1, 1)),
            (bx.alpha.at(0, 0), b0.alpha.at(0, 0)),
            (bx.d.at(0, 0, 0, 0), b0.d.at(0, 0, 0, 0)),
        ] {
            assert!((a - ratio * b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn assumptions_hold_on_sample_grid() {
        let model = product_model("sine4pi");
        let xs = sample_grid(5);
        let ys = sample_grid(5);
        let rep = validate_assumptions(&model, &xs, &ys);
        assert!(rep.all_elliptic(), "{rep:?}");
        assert!(rep.max_symmetry_defect < 1e-14);
    }

    #[test]
    fn constructed_sum_violation_is_flagged_not_thrown() {
        let (m, i) = phases();
        let model = MaterialModel::new(
            m,
            i,
            Some(circle()),
            MaterialMode::Sum,
            crate::weight::resolve("constant").unwrap(),
            FamilyFactors {
                k: -200.0, // drives k below zero everywhere
                ..FamilyFactors::zeros()
            },
        );
        let rep = validate_assumptions(&model, &sample_grid(3), &sample_grid(3));
        assert!(rep.min_eig_k <= 0.0);
        // the throwing path reports the violation
        assert!(model.evaluate([0.5, 0.5], [0.1, 0.1]).is_err());
    }

    #[test]
    fn micro_point_outside_cell_rejected() {
        let model = constant_model();
        assert!(model.evaluate([0.5, 0.5], [1.2, 0.0]).is_err());
    }

    #[test]
    fn general_mode_composes_all_three_terms() {
        let (m, i) = phases();
        let mut model = MaterialModel::new(
            m,
            i,
            Some(circle()),
            MaterialMode::General,
            crate::weight::resolve("sine4pi").unwrap(),
            FamilyFactors::ones(),
        );
        model.general = Some(GeneralComposition {
            c0: FamilyFactors::ones(),
            c1: FamilyFactors {
                k: 0.25,
                ..FamilyFactors::zeros()
            },
            c2: FamilyFactors {
                k: 2.0,
                ..FamilyFactors::zeros()
            },
        });
        let x = [0.3, 0.7];
        let psi = model.weight.eval(x);
        let p = model.params_for_phase(x, MATRIX);
        // k = c0 k^ + c1 psi k^ + c2 psi
        let expect = 100.0 + 0.25 * psi * 100.0 + 2.0 * psi;
        assert!((p.k - expect).abs() < 1e-12 * expect);
        // untouched families reduce to the pure micro value
        assert_eq!(p.e, 10.0);
        assert_eq!(p.nu, 0.30);
        // default composition (no general section) behaves like product
        model.general = None;
        let p2 = model.params_for_phase(x, MATRIX);
        assert!((p2.k - psi * 100.0).abs() < 1e-12 * p2.k.abs());
    }

    #[test]
    fn star_params_require_product_mode() {
        let model = sum_model("quartic_well");
        assert!(model.star_params(MATRIX).is_err());
        let prod = product_model("sine4pi");
        let sp = prod.star_params(MATRIX).unwrap();
        assert_eq!(sp.k, 100.0);
        assert_eq!(sp.nu, 0.30);
    }
}
