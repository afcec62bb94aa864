use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fem::{Material, MbbDomain};
use crate::grover::OracleBackend;
use crate::qae::Backend;
use crate::qsvt::{fit_even_poly_with, Filter, FitRule, PolySpec, DEGREE_CAP};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Direct compliance of every configuration.
    Compliance,
    /// Direct, pseudo-density, odd-target and even-target compliances.
    Fig9b,
    /// Phase-register distribution of one configuration.
    Fig10,
    /// Phase table of every configuration.
    Thetas,
    /// Unconstrained Grover search.
    Fig11,
    /// Volume-constrained Grover search.
    Fig12,
    /// Degree against `μ` for several `ε`.
    Fig15,
    /// Degree against `ε`.
    Fig16,
    /// Degree against `y0`.
    Fig17,
    /// One polynomial fit.
    Fit,
    /// Block-encoding and oracle equivalence checks.
    Verify,
    /// Threshold-descent minimization.
    Minimize,
    /// Register-size accounting.
    Resources,
}

impl ExperimentKind {
    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Mbb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub n_x: usize,
    pub n_y: usize,
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub boundary: Boundary,
}

impl DomainSpec {
    pub fn build(&self) -> Result<MbbDomain> {
        let material = Material::new(self.young_modulus, self.poisson_ratio)?;
        match self.boundary {
            Boundary::Mbb => MbbDomain::mbb(self.n_x, self.n_y, material),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Target function applied to the exact singular values.
    Exact,
    /// Fitted Chebyshev polynomial.
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyConfig {
    pub mu: f64,
    pub y0: f64,
    pub eps: f64,
    pub mode: FilterMode,
    pub rule: FitRule,
}

impl PolyConfig {
    pub fn spec(&self) -> Result<PolySpec> {
        PolySpec::new(self.mu, self.y0, self.eps)
    }

    pub fn filter(&self) -> Result<Filter> {
        let spec = self.spec()?;
        Ok(match self.mode {
            FilterMode::Exact => Filter::Exact(spec),
            FilterMode::Polynomial => Filter::Polynomial(Arc::new(fit_even_poly_with(&spec, self.rule, DEGREE_CAP)?)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaeConfig {
    pub n_p: usize,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub theta0: f64,
    pub volume_k: Option<usize>,
    pub r: Option<usize>,
    pub seed: u64,
    pub oracle_backend: OracleBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub mus: Vec<f64>,
    pub epss: Vec<f64>,
    pub y0s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub stem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub domain: DomainSpec,
    pub poly: PolyConfig,
    pub qae: QaeConfig,
    pub search: SearchConfig,
    pub scan: ScanConfig,
    /// Configuration bitstring for single-configuration experiments.
    pub target: Option<String>,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Defaults for an experiment: the 2×2 beam at `μ = 1e−3`, `y0 = 0.3`,
    /// except the 3×3 volume-constrained search at `μ = 1e−5`.
    pub fn preset(experiment: ExperimentKind) -> Self {
        let mut config = ExperimentConfig {
            experiment,
            domain: DomainSpec {
                n_x: 2,
                n_y: 2,
                young_modulus: 1.0,
                poisson_ratio: 0.3,
                boundary: Boundary::Mbb,
            },
            poly: PolyConfig {
                mu: 1e-3,
                y0: 0.3,
                eps: 1e-3,
                mode: FilterMode::Exact,
                rule: FitRule::Chop,
            },
            qae: QaeConfig {
                n_p: 5,
                backend: Backend::Emulated,
            },
            search: SearchConfig {
                theta0: 0.263,
                volume_k: None,
                r: None,
                seed: 0,
                oracle_backend: OracleBackend::ExactPhase,
            },
            scan: ScanConfig {
                mus: vec![0.04, 0.02, 0.01, 0.005],
                epss: vec![1e-2, 1e-3, 1e-4],
                y0s: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            },
            target: None,
            output: OutputConfig { dir: None, stem: None },
        };
        match experiment {
            ExperimentKind::Fig11 => config.qae.n_p = 8,
            ExperimentKind::Fig12 => {
                config.domain.n_x = 3;
                config.domain.n_y = 3;
                config.poly.mu = 1e-5;
                config.qae.n_p = 9;
                config.search.theta0 = 0.251;
                config.search.volume_k = Some(5);
                config.search.r = Some(2);
            }
            ExperimentKind::Fit => {
                config.poly.mu = 0.01;
                config.poly.y0 = 0.5;
            }
            ExperimentKind::Fig16 => {
                config.poly.mu = 0.01;
                config.scan.epss = vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
            }
            ExperimentKind::Fig17 => config.poly.mu = 0.01,
            _ => {}
        }
        config
    }

    /// Overlays a partial JSON document onto this configuration.
    pub fn merged(&self, overrides: &Value) -> Result<Self> {
        let mut base = serde_json::to_value(self).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overrides);
        let merged: ExperimentConfig = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        merged.validate()?;
        Ok(merged)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.build()?;
        self.poly.spec()?;
        if self.scan.mus.is_empty() || self.scan.epss.is_empty() || self.scan.y0s.is_empty() {
            return Err(Error::Config("scan lists must be nonempty".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}

/// Recursive object merge; non-object values replace.
pub fn merge(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(key) {
                    Some(slot) if slot.is_object() && value.is_object() => merge(slot, value),
                    _ => {
                        b.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_round_trip() {
        for kind in [ExperimentKind::Fig10, ExperimentKind::Fig12, ExperimentKind::Fig16] {
            let config = ExperimentConfig::preset(kind);
            let back: ExperimentConfig = serde_json::from_value(config.to_json()).unwrap();
            assert_eq!(back, config);
        }
        assert_eq!(ExperimentKind::Fig9b.name(), "fig9b");
    }

    #[test]
    fn overrides_are_deep() {
        let config = ExperimentConfig::preset(ExperimentKind::Fig11);
        let merged = config
            .merged(&json!({"domain": {"n_x": 3}, "search": {"volume_k": 4}}))
            .unwrap();
        assert_eq!(merged.domain.n_x, 3);
        assert_eq!(merged.domain.n_y, 2);
        assert_eq!(merged.search.volume_k, Some(4));
        assert_eq!(merged.qae.n_p, 8);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let config = ExperimentConfig::preset(ExperimentKind::Fig10);
        for bad in [
            json!({"domain": {"n_x": 0}}),
            json!({"poly": {"mu": 2.0}}),
            json!({"poly": {"colour": 1}}),
            json!({"experiment": "fig99"}),
        ] {
            let err = config.merged(&bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }
}
