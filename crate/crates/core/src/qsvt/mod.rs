//! Singular-value filters, their even Chebyshev fits, and matrix- and
//! circuit-level singular value transformation.

mod chebyshev;
mod circuit;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SymMatrix;

pub use chebyshev::{
    clenshaw, eval_poly, fit_even_poly, fit_even_poly_with, lobatto_coefficients, standard_chop,
    FilterPoly, FitRule, DEGREE_CAP, GRID_POINTS,
};
pub use circuit::{circuit_qsvt, projector_phase};

/// Slack allowed on `‖K/β‖₂ ≤ 1`.
pub const NORM_SLACK: f64 = 1e-12;

/// Filter parameters: inversion threshold `μ`, filter value `y0 = f(μ)` and
/// approximation tolerance `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolySpec {
    mu: f64,
    y0: f64,
    eps: f64,
}

impl PolySpec {
    pub fn new(mu: f64, y0: f64, eps: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::InvalidPolySpec(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(y0 > 0.0 && y0 <= 1.0) {
            return Err(Error::InvalidPolySpec(format!("y0 must lie in (0, 1], got {y0}")));
        }
        if !(eps > 0.0 && eps < y0) {
            return Err(Error::InvalidPolySpec(format!("eps must lie in (0, y0), got {eps}")));
        }
        Ok(PolySpec { mu, y0, eps })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `y0·μ`, the factor multiplying `1/x` above the threshold.
    pub fn gamma(&self) -> f64 {
        self.y0 * self.mu
    }
}

impl<'de> Deserialize<'de> for PolySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            mu: f64,
            y0: f64,
            eps: f64,
        }
        let raw = Raw::deserialize(d)?;
        PolySpec::new(raw.mu, raw.y0, raw.eps).map_err(serde::de::Error::custom)
    }
}

/// `cos(arccos(y0)·|x|/μ)` below `μ`, `y0·μ/|x|` above.
pub fn target_even(x: f64, spec: &PolySpec) -> f64 {
    let a = x.abs();
    if a < spec.mu {
        (spec.y0.acos() / spec.mu * a).cos()
    } else {
        spec.y0 * spec.mu / a
    }
}

/// `μ/(2x)` for `|x| ≥ μ`, zero for `|x| ≤ μ/2`, and a sine-squared ramp
/// from 0 to ½ in between; odd.
pub fn target_odd(x: f64, mu: f64) -> f64 {
    let a = x.abs();
    let magnitude = if a >= mu {
        mu / (2.0 * a)
    } else if a <= mu / 2.0 {
        0.0
    } else {
        let s = (std::f64::consts::FRAC_PI_2 * (a - mu / 2.0) / (mu / 2.0)).sin();
        0.5 * s * s
    };
    magnitude.copysign(x)
}

/// Scalar function applied to the singular values.
#[derive(Debug, Clone)]
pub enum Filter {
    /// The even target itself.
    Exact(PolySpec),
    /// A fitted even polynomial.
    Polynomial(Arc<FilterPoly>),
    /// The odd target with threshold `mu`.
    Odd { mu: f64 },
}

impl Filter {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Filter::Exact(spec) => target_even(x, spec),
            Filter::Polynomial(p) => p.eval(x),
            Filter::Odd { mu } => target_odd(x, *mu),
        }
    }

    /// Threshold below which singular values are not inverted.
    pub fn mu(&self) -> f64 {
        match self {
            Filter::Exact(spec) => spec.mu,
            Filter::Polynomial(p) => p.spec().mu,
            Filter::Odd { mu } => *mu,
        }
    }

    /// Constant `γ` with `filter(x) ≈ γ/x` above the threshold.
    pub fn gamma(&self) -> f64 {
        match self {
            Filter::Exact(spec) => spec.gamma(),
            Filter::Polynomial(p) => p.spec().gamma(),
            Filter::Odd { mu } => mu / 2.0,
        }
    }

    /// Filter value on the saturated plateau at zero.
    pub fn plateau(&self) -> f64 {
        self.value(0.0)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Filter::Exact(_) => "exact",
            Filter::Polynomial(_) => "polynomial",
            Filter::Odd { .. } => "odd",
        }
    }
}

/// Eigendecomposition of `K/β` together with the filtered eigenvalues.
#[derive(Debug, Clone)]
pub struct FilteredSpectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub filtered: DVector<f64>,
}

impl FilteredSpectrum {
    /// `V·filter(Σ)·Vᵀ`.
    pub fn matrix(&self) -> SymMatrix {
        let v = &self.eigenvectors;
        let scaled = v * DMatrix::from_diagonal(&self.filtered);
        SymMatrix::from_matrix(scaled * v.transpose())
    }

    /// Per-mode contributions `filter(σ_i)·(v_iᵀ f)²` to `fᵀ·V filter(Σ) Vᵀ·f`.
    pub fn contributions(&self, f: &DVector<f64>) -> Vec<f64> {
        (0..self.eigenvalues.len())
            .map(|i| {
                let proj = self.eigenvectors.column(i).dot(f);
                self.filtered[i] * proj * proj
            })
            .collect()
    }

    pub fn quadratic_form(&self, f: &DVector<f64>) -> f64 {
        self.contributions(f).iter().sum()
    }
}

/// Eigendecomposes `K/β` and applies `filter` to each eigenvalue.
pub fn filter_spectrum(k: &SymMatrix, beta: f64, filter: &Filter) -> Result<FilteredSpectrum> {
    let scaled = k.matrix() / beta;
    let eig = scaled.symmetric_eigen();
    let norm = eig.eigenvalues.amax();
    if norm > 1.0 + NORM_SLACK {
        return Err(Error::NormViolation { norm });
    }
    let filtered = eig.eigenvalues.map(|s| filter.value(s.clamp(-1.0, 1.0)));
    Ok(FilteredSpectrum {
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
        filtered,
    })
}

/// `V·filter(Σ)·V†` for `K/β = VΣV†`.
pub fn apply_qsvt_matrix(k: &SymMatrix, beta: f64, filter: &Filter) -> Result<SymMatrix> {
    Ok(filter_spectrum(k, beta, filter)?.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{compliance_direct, reduced_stiffness, Material, MbbDomain, StructureConfig};

    fn spec(mu: f64, y0: f64, eps: f64) -> PolySpec {
        PolySpec::new(mu, y0, eps).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(PolySpec::new(0.0, 0.3, 1e-3).is_err());
        assert!(PolySpec::new(0.1, 1.1, 1e-3).is_err());
        assert!(PolySpec::new(0.1, 0.3, 0.3).is_err());
        assert!(serde_json::from_str::<PolySpec>(r#"{"mu":2.0,"y0":0.3,"eps":0.001}"#).is_err());
    }

    #[test]
    fn even_target_values() {
        let s = spec(0.01, 0.5, 1e-3);
        assert_eq!(target_even(0.0, &s), 1.0);
        assert!((target_even(0.01, &s) - 0.5).abs() < 1e-15);
        assert!((target_even(1.0, &s) - 0.005).abs() < 1e-15);
        // continuity from below
        assert!((target_even(0.01 - 1e-12, &s) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn odd_target_values() {
        let mu = 0.01;
        assert!((target_odd(1.0, mu) - 0.005).abs() < 1e-15);
        assert_eq!(target_odd(mu / 4.0, mu), 0.0);
        assert!((target_odd(-1.0, mu) + 0.005).abs() < 1e-15);
        assert!((target_odd(mu, mu) - 0.5).abs() < 1e-15);
        assert!((target_odd(mu * (1.0 - 1e-12), mu) - 0.5).abs() < 1e-9);
        assert!(target_odd(0.75 * mu, mu) > 0.0 && target_odd(0.75 * mu, mu) < 0.5);
    }

    #[test]
    fn poly_evaluation() {
        let s = spec(0.01, 0.5, 1e-3);
        let p = fit_even_poly(&s).unwrap();
        assert!((eval_poly(&p, 0.5).unwrap() - target_even(0.5, &s)).abs() <= 1e-3);
        assert_eq!(eval_poly(&p, 0.3).unwrap(), eval_poly(&p, -0.3).unwrap());
        assert!(eval_poly(&p, 1.5).is_err());
        let constant = FilterPoly::from_coefficients(s, FitRule::Chop, vec![0.42]);
        for x in [-1.0, -0.2, 0.0, 0.9] {
            assert_eq!(eval_poly(&constant, x).unwrap(), 0.42);
        }
    }

    #[test]
    fn matrix_transform_of_trivial_spectra() {
        let s = spec(1e-2, 0.3, 1e-3);
        let fit = fit_even_poly_with(&s, FitRule::Certified, DEGREE_CAP).unwrap();
        let p = Filter::Polynomial(Arc::new(fit));
        let id = SymMatrix::identity(3);
        let out = apply_qsvt_matrix(&id, 1.0, &p).unwrap();
        for i in 0..3 {
            assert!((out.get(i, i) - 0.3e-2).abs() < 1e-3);
        }
        let zero = apply_qsvt_matrix(&SymMatrix::zeros(3), 1.0, &p).unwrap();
        for i in 0..3 {
            assert!((zero.get(i, i) - 1.0).abs() < 1e-3);
        }
        let exact = apply_qsvt_matrix(&id, 1.0, &Filter::Exact(s)).unwrap();
        assert!((exact.get(0, 0) - 3e-3).abs() < 1e-15);
        assert!(matches!(
            apply_qsvt_matrix(&id, 0.5, &p),
            Err(Error::NormViolation { .. })
        ));
    }

    #[test]
    fn all_solid_filtered_inverse_recovers_compliance() {
        let d = MbbDomain::mbb(2, 2, Material::default()).unwrap();
        let solid = StructureConfig::all_solid(4);
        let kf = reduced_stiffness(&d, &solid).unwrap();
        let beta = 4.0 * 10.0 / 7.0;
        let s = spec(1e-3, 0.3, 1e-3);
        let p = fit_even_poly_with(&s, FitRule::Certified, DEGREE_CAP).unwrap();
        let out = apply_qsvt_matrix(&kf, beta, &Filter::Polynomial(Arc::new(p))).unwrap();
        let f = d.force_free();
        let t = out.quadratic_form(&f);
        let c = compliance_direct(&d, &solid, 0.0).unwrap().value().unwrap();
        let recovered = t / (s.gamma() * beta);
        assert!((recovered - c).abs() / c < 0.01, "{recovered} vs {c}");
    }

    #[test]
    fn exact_and_polynomial_transforms_agree_within_eps() {
        let d = MbbDomain::mbb(2, 2, Material::default()).unwrap();
        let s = spec(0.01, 0.5, 1e-3);
        let p = fit_even_poly_with(&s, FitRule::Certified, DEGREE_CAP).unwrap();
        let poly = Filter::Polynomial(Arc::new(p));
        for config in StructureConfig::enumerate(4, None).unwrap() {
            let kf = reduced_stiffness(&d, &config).unwrap();
            let a = apply_qsvt_matrix(&kf, 5.8, &poly).unwrap();
            let b = apply_qsvt_matrix(&kf, 5.8, &Filter::Exact(s)).unwrap();
            let diff = SymMatrix::from_matrix(a.matrix() - b.matrix()).spectral_norm();
            assert!(diff <= 1e-3, "{config}: {diff}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn certified_fits_are_bounded_and_accurate(mu in 0.02f64..0.2, y0 in 0.2f64..0.9) {
                let s = spec(mu, y0, 1e-2);
                let p = fit_even_poly_with(&s, FitRule::Certified, DEGREE_CAP).unwrap();
                prop_assert!(p.max_abs() <= 1.0 + 1e-9);
                prop_assert!(p.max_error() <= 1e-2);
                for j in 0..200 {
                    let x = -1.0 + 2.0 * j as f64 / 199.0;
                    prop_assert!(p.eval(x).abs() <= 1.0 + 1e-9);
                    prop_assert!((p.eval(x) - target_even(x, &s)).abs() <= 1e-2 + 1e-12);
                }
            }

            #[test]
            fn chop_fits_are_bounded(mu in 0.01f64..0.2, y0 in 0.2f64..0.9) {
                let p = fit_even_poly(&spec(mu, y0, 1e-3)).unwrap();
                prop_assert!(p.max_abs() <= 1.0 + 1e-9);
                prop_assert_eq!(p.eval(0.37), p.eval(-0.37));
            }
        }
    }
}
