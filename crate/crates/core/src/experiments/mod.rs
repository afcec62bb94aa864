//! Experiment runner: resolves an [`ExperimentConfig`], runs one experiment,
//! and produces a JSON report plus CSV plot data.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

pub use config::{
    merge, Boundary, DomainSpec, ExperimentConfig, ExperimentKind, FilterMode, OutputConfig, PolyConfig, QaeConfig,
    ScanConfig, SearchConfig,
};

use crate::blockenc::{global_blockencoding, unitarity_report, verify_all_blocks, RegisterSizes};
use crate::error::{Error, Result};
use crate::fem::{compliance_direct, enumerate_thetas, volume_fraction, Compliance, MbbDomain, StructureConfig};
use crate::grover::{minimize_compliance, run_grover, success_probability, SearchParams, SearchSpace};
use crate::qae::{
    emulated_distribution, phase_of_config, qae_distribution, qae_layout, scaling_constants, CoherentQae,
    ComplianceEstimate, QaeParams,
};
use crate::qsvt::{fit_even_poly_with, target_even, Filter, PolySpec, DEGREE_CAP};

/// Void weight of the pseudo-density comparison.
pub const PSEUDO_DENSITY_VOID: f64 = 1e-3;

/// Register singles `g`, `h`, `q`, `v`, `z`, `b`.
pub const SINGLE_QUBIT_REGISTERS: usize = 6;

/// Report document and CSV plot series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub json: Value,
    pub csv: String,
}

impl Report {
    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn json_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.json).expect("report serializes");
        text.push('\n');
        text
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let json_path = dir.join(format!("{stem}.json"));
        let csv_path = dir.join(format!("{stem}.csv"));
        fs::write(&json_path, self.json_text()).map_err(|e| Error::Io(format!("{}: {e}", json_path.display())))?;
        fs::write(&csv_path, &self.csv).map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
        Ok((json_path, csv_path))
    }
}

/// Bitstring and row-major glyph grid of a configuration.
pub fn config_view(config: &StructureConfig, domain: &MbbDomain) -> Value {
    json!({
        "bits": config.to_string(),
        "grid": config.glyph_grid(domain.n_x(), domain.n_y()),
    })
}

fn compliance_value(c: Compliance) -> Value {
    c.value().map_or(Value::Null, Value::from)
}

fn compliance_cell(c: Compliance) -> String {
    c.value().map_or_else(|| "infeasible".to_owned(), |v| format!("{v}"))
}

fn estimate_value(e: ComplianceEstimate) -> Value {
    match e {
        ComplianceEstimate::Value(v) => Value::from(v),
        ComplianceEstimate::Saturated => Value::from("saturated"),
    }
}

fn estimate_cell(e: ComplianceEstimate) -> String {
    e.value().map_or_else(|| "saturated".to_owned(), |v| format!("{v}"))
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

fn target_config(config: &ExperimentConfig, domain: &MbbDomain) -> Result<StructureConfig> {
    match &config.target {
        None => Ok(StructureConfig::all_solid(domain.n_el())),
        Some(bits) => {
            let x: StructureConfig = bits.parse()?;
            if x.len() != domain.n_el() {
                return Err(Error::ConfigLength {
                    expected: domain.n_el(),
                    got: x.len(),
                });
            }
            Ok(x)
        }
    }
}

fn is_poly_experiment(kind: ExperimentKind) -> bool {
    matches!(
        kind,
        ExperimentKind::Fig15 | ExperimentKind::Fig16 | ExperimentKind::Fig17 | ExperimentKind::Fit
    )
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let domain = config.domain.build()?;
    let filter = if is_poly_experiment(config.experiment) || config.experiment == ExperimentKind::Resources {
        Filter::Exact(config.poly.spec()?)
    } else {
        config.poly.filter()?
    };
    let constants = scaling_constants(&domain, &filter)?;
    let (results, csv) = match config.experiment {
        ExperimentKind::Compliance => compliance_table(&domain)?,
        ExperimentKind::Fig9b => fig9b(&domain, &filter)?,
        ExperimentKind::Fig10 => fig10(config, &domain, &filter)?,
        ExperimentKind::Thetas => theta_table(config, &domain, &filter)?,
        ExperimentKind::Fig11 | ExperimentKind::Fig12 => grover_run(config, &domain, &filter)?,
        ExperimentKind::Fig15 => mu_scan(config)?,
        ExperimentKind::Fig16 => eps_scan(config)?,
        ExperimentKind::Fig17 => y0_scan(config)?,
        ExperimentKind::Fit => single_fit(config)?,
        ExperimentKind::Verify => verify(config, &domain, &filter)?,
        ExperimentKind::Minimize => minimize(config, &domain, &filter)?,
        ExperimentKind::Resources => resources(&domain, config.qae.n_p),
    };
    Ok(Report {
        json: json!({
            "experiment": config.experiment.name(),
            "config": config.to_json(),
            "constants": constants,
            "calibration": {
                "config": StructureConfig::all_solid(domain.n_el()).to_string(),
                "formula": "alpha = t(all-solid) / c(all-solid)",
            },
            "filter": filter.label(),
            "results": results,
        }),
        csv,
    })
}

/// Full coherent phase-estimation statevector of the target configuration
/// as CSV.
pub fn statevector_dump(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let domain = config.domain.build()?;
    let filter = config.poly.filter()?;
    let constants = scaling_constants(&domain, &filter)?;
    let x = target_config(config, &domain)?;
    let layout = qae_layout(&domain, config.qae.n_p, false)?;
    let qae = CoherentQae::new(&domain, &constants, &filter, config.qae.n_p, layout)?;
    Ok(qae.final_state(&x)?.to_csv())
}

fn compliance_table(domain: &MbbDomain) -> Result<(Value, String)> {
    let configs = StructureConfig::enumerate(domain.n_el(), None)?;
    let rows = configs
        .iter()
        .map(|x| Ok((x, compliance_direct(domain, x, 0.0)?)))
        .collect::<Result<Vec<_>>>()?;
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|(x, c)| {
            json!({
                "config": config_view(x, domain),
                "volume_fraction": volume_fraction(x),
                "feasible": c.is_feasible(),
                "compliance": compliance_value(*c),
            })
        })
        .collect();
    let csv = csv(
        "config,volume_fraction,compliance",
        rows.iter()
            .map(|(x, c)| format!("{x},{},{}", volume_fraction(x), compliance_cell(*c))),
    );
    let fixed: Vec<usize> = domain.fixed_dofs().to_vec();
    let fixed_labels: Vec<usize> = fixed.iter().map(|i| i + 1).collect();
    Ok((
        json!({
            "n_dof": domain.n_dof(),
            "fixed_dofs": fixed,
            "fixed_dof_labels": fixed_labels,
            "rows": json_rows,
        }),
        csv,
    ))
}

fn fig9b(domain: &MbbDomain, even: &Filter) -> Result<(Value, String)> {
    let odd = Filter::Odd { mu: even.mu() };
    let even_constants = scaling_constants(domain, even)?;
    let odd_constants = scaling_constants(domain, &odd)?;
    let configs = StructureConfig::enumerate(domain.n_el(), None)?;
    let rows = configs
        .par_iter()
        .map(|x| {
            Ok((
                x.clone(),
                compliance_direct(domain, x, 0.0)?,
                compliance_direct(domain, x, PSEUDO_DENSITY_VOID)?,
                phase_of_config(domain, x, &odd_constants, &odd)?,
                phase_of_config(domain, x, &even_constants, even)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|(x, direct, simp, odd, even)| {
            json!({
                "config": config_view(x, domain),
                "direct": compliance_value(*direct),
                "pseudo_density": compliance_value(*simp),
                "odd_target": estimate_value(odd.compliance_estimate),
                "even_target": estimate_value(even.compliance_estimate),
                "theta": even.theta,
            })
        })
        .collect();
    let csv = csv(
        "config,direct,pseudo_density,odd_target,even_target,theta",
        rows.iter().map(|(x, direct, simp, odd, even)| {
            format!(
                "{x},{},{},{},{},{}",
                compliance_cell(*direct),
                compliance_cell(*simp),
                estimate_cell(odd.compliance_estimate),
                estimate_cell(even.compliance_estimate),
                even.theta
            )
        }),
    );
    Ok((json!({ "rows": json_rows, "void_density": PSEUDO_DENSITY_VOID }), csv))
}

fn fig10(config: &ExperimentConfig, domain: &MbbDomain, filter: &Filter) -> Result<(Value, String)> {
    let constants = scaling_constants(domain, filter)?;
    let x = target_config(config, domain)?;
    let params = QaeParams::new(config.qae.n_p, config.qae.backend)?;
    let record = phase_of_config(domain, &x, &constants, filter)?;
    let dist = qae_distribution(domain, &x, &params, &constants, filter)?;
    let outcomes: Vec<Value> = dist
        .probabilities
        .iter()
        .enumerate()
        .map(|(p, pr)| json!({"bits": dist.bits(p), "integer": p, "probability": pr}))
        .collect();
    let csv = csv(
        "bits,integer,probability",
        dist.probabilities
            .iter()
            .enumerate()
            .map(|(p, pr)| format!("{},{p},{pr}", dist.bits(p))),
    );
    Ok((
        json!({
            "config": config_view(&x, domain),
            "n_p": dist.n_p,
            "backend": config.qae.backend,
            "outcomes": outcomes,
            "theta": record.theta,
            "t": record.t_value,
            "compliance_estimate": estimate_value(record.compliance_estimate),
            "mass_near_theta": dist.mass_near(record.theta, 1),
        }),
        csv,
    ))
}

fn theta_table(config: &ExperimentConfig, domain: &MbbDomain, filter: &Filter) -> Result<(Value, String)> {
    let constants = scaling_constants(domain, filter)?;
    let mut rows = enumerate_thetas(domain, &constants, filter, config.search.volume_k)?;
    rows.sort_by(|a, b| a.phase.theta.total_cmp(&b.phase.theta).then(a.config.cmp(&b.config)));
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "config": config_view(&r.config, domain),
                "compliance": compliance_value(r.compliance),
                "t": r.phase.t_value,
                "theta": r.phase.theta,
                "compliance_estimate": estimate_value(r.phase.compliance_estimate),
            })
        })
        .collect();
    let csv = csv(
        "config,compliance,t,theta,compliance_estimate",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.config,
                compliance_cell(r.compliance),
                r.phase.t_value,
                r.phase.theta,
                estimate_cell(r.phase.compliance_estimate)
            )
        }),
    );
    Ok((json!({ "rows": json_rows }), csv))
}

fn search_params(config: &ExperimentConfig, domain: &MbbDomain) -> Result<SearchParams> {
    let s = &config.search;
    let params = SearchParams {
        theta0: s.theta0,
        volume_k: s.volume_k,
        r: s.r,
        oracle_backend: s.oracle_backend,
        n_p: config.qae.n_p,
    };
    params.validate(domain.n_el())?;
    Ok(params)
}

fn grover_run(config: &ExperimentConfig, domain: &MbbDomain, filter: &Filter) -> Result<(Value, String)> {
    let params = search_params(config, domain)?;
    let space = SearchSpace::new(domain, filter, params.volume_k)?;
    let result = run_grover(&space, &params)?;
    let ranked = result.ranked();
    let json_rows: Vec<Value> = ranked
        .iter()
        .map(|(x, p)| {
            json!({
                "config": config_view(x, domain),
                "probability": p,
                "marked": result.marked_set.contains(x),
                "theta": space.thetas()[x],
            })
        })
        .collect();
    let csv = csv(
        "rank,config,probability,marked",
        ranked
            .iter()
            .enumerate()
            .map(|(i, (x, p))| format!("{},{x},{p},{}", i + 1, result.marked_set.contains(x))),
    );
    let size = space.support().len();
    let marked = result.marked_set.len();
    Ok((
        json!({
            "support_size": size,
            "marked": result.marked_set.iter().map(|x| config_view(x, domain)).collect::<Vec<_>>(),
            "r_used": result.r_used,
            "success_probability": result.success_probability,
            "closed_form": if marked > 0 { Value::from(success_probability(size, marked, result.r_used)) } else { Value::Null },
            "leakage": result.leakage,
            "rows": json_rows,
        }),
        csv,
    ))
}

fn fit_row(mu: f64, y0: f64, eps: f64, config: &ExperimentConfig) -> Result<Value> {
    let spec = PolySpec::new(mu, y0, eps)?;
    let poly = fit_even_poly_with(&spec, config.poly.rule, DEGREE_CAP)?;
    Ok(json!({
        "mu": mu,
        "y0": y0,
        "eps": eps,
        "degree": poly.degree(),
        "degree_times_mu": poly.degree() as f64 * mu,
        "max_error": poly.max_error(),
    }))
}

fn fit_csv(rows: &[Value]) -> String {
    csv(
        "mu,y0,eps,degree,degree_times_mu,max_error",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r["mu"], r["y0"], r["eps"], r["degree"], r["degree_times_mu"], r["max_error"]
            )
        }),
    )
}

fn mu_scan(config: &ExperimentConfig) -> Result<(Value, String)> {
    let grid: Vec<(f64, f64)> = config
        .scan
        .epss
        .iter()
        .flat_map(|&eps| config.scan.mus.iter().map(move |&mu| (mu, eps)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(mu, eps)| fit_row(mu, config.poly.y0, eps, config))
        .collect::<Result<Vec<_>>>()?;
    let spreads: Vec<Value> = config
        .scan
        .epss
        .iter()
        .map(|&eps| {
            let products: Vec<f64> = rows
                .iter()
                .filter(|r| r["eps"].as_f64() == Some(eps))
                .filter_map(|r| r["degree_times_mu"].as_f64())
                .collect();
            let mean = products.iter().sum::<f64>() / products.len() as f64;
            let deviation = products
                .iter()
                .map(|p| (p - mean).abs() / mean)
                .fold(0.0, f64::max);
            json!({"eps": eps, "mean_degree_times_mu": mean, "max_relative_deviation": deviation})
        })
        .collect();
    let csv = fit_csv(&rows);
    Ok((json!({ "rows": rows, "reciprocal_scaling": spreads }), csv))
}

/// Least-squares line `y = a + b·x` and its coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (intercept, slope, r2)
}

fn eps_scan(config: &ExperimentConfig) -> Result<(Value, String)> {
    let rows = config
        .scan
        .epss
        .par_iter()
        .map(|&eps| fit_row(config.poly.mu, config.poly.y0, eps, config))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = config.scan.epss.iter().map(|e| (1.0 / e).log10()).collect();
    let ys: Vec<f64> = rows.iter().filter_map(|r| r["degree"].as_f64()).collect();
    let (intercept, slope, r2) = linear_fit(&xs, &ys);
    let csv = fit_csv(&rows);
    Ok((
        json!({
            "rows": rows,
            "log_fit": {"intercept": intercept, "slope": slope, "r_squared": r2},
        }),
        csv,
    ))
}

fn y0_scan(config: &ExperimentConfig) -> Result<(Value, String)> {
    let rows = config
        .scan
        .y0s
        .par_iter()
        .map(|&y0| fit_row(config.poly.mu, y0, config.poly.eps, config))
        .collect::<Result<Vec<_>>>()?;
    let csv = fit_csv(&rows);
    Ok((json!({ "rows": rows }), csv))
}

fn single_fit(config: &ExperimentConfig) -> Result<(Value, String)> {
    let spec = config.poly.spec()?;
    let poly = fit_even_poly_with(&spec, config.poly.rule, DEGREE_CAP)?;
    let mu = spec.mu();
    let mut xs: Vec<f64> = (0..=2000)
        .map(|j| (std::f64::consts::PI * j as f64 / 2000.0).cos())
        .collect();
    xs.extend((0..=600).map(|j| -3.0 * mu + 6.0 * mu * j as f64 / 600.0));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let rows: Vec<String> = xs
        .iter()
        .map(|&x| format!("{x},{},{}", target_even(x, &spec), poly.eval(x)))
        .collect();
    Ok((
        json!({
            "degree": poly.degree(),
            "rule": config.poly.rule,
            "max_error": poly.max_error(),
            "max_abs": poly.max_abs(),
            "rescaled_by": poly.rescaled_by(),
        }),
        csv("x,target,polynomial", rows),
    ))
}

fn verify(config: &ExperimentConfig, domain: &MbbDomain, filter: &Filter) -> Result<(Value, String)> {
    let be = global_blockencoding(domain)?;
    let block_error = verify_all_blocks(&be, domain)?;
    let unitarity = unitarity_report(&be.operator, &be.layout, 4, config.search.seed)?;
    let mut checks = vec![
        ("block_encoding_max_deviation".to_owned(), block_error),
        ("unitarity_structural".to_owned(), unitarity.structural),
        ("unitarity_probe".to_owned(), unitarity.probe),
    ];
    let n_p = config.qae.n_p;
    let coherent_qubits = qae_layout(domain, n_p, false)?.total_qubits();
    let mut qae_check = Value::Null;
    if coherent_qubits <= 20 {
        let constants = scaling_constants(domain, filter)?;
        let qae = CoherentQae::new(domain, &constants, filter, n_p, qae_layout(domain, n_p, false)?)?;
        let mut worst = 0.0f64;
        for x in StructureConfig::enumerate(domain.n_el(), None)? {
            let coherent = qae.distribution(&x)?;
            let theta = phase_of_config(domain, &x, &constants, filter)?.theta;
            let emulated = emulated_distribution(theta, n_p);
            let diff = coherent
                .probabilities
                .iter()
                .zip(&emulated.probabilities)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
        checks.push(("qae_backend_max_deviation".to_owned(), worst));
        qae_check = json!({"n_p": n_p, "qubits": coherent_qubits, "max_deviation": worst});
    }
    let csv = csv("check,value", checks.iter().map(|(k, v)| format!("{k},{v}")));
    Ok((
        json!({
            "beta": be.scale,
            "block_encoding_max_deviation": block_error,
            "unitarity": {"structural": unitarity.structural, "probe": unitarity.probe},
            "qae_backends": qae_check,
            "tolerance": 1e-10,
            "passed": checks.iter().all(|(_, v)| *v <= 1e-9),
        }),
        csv,
    ))
}

fn minimize(config: &ExperimentConfig, domain: &MbbDomain, filter: &Filter) -> Result<(Value, String)> {
    let params = search_params(config, domain)?;
    let space = SearchSpace::new(domain, filter, params.volume_k)?;
    let result = minimize_compliance(&space, &params, config.search.seed)?;
    let argmin = space
        .support()
        .iter()
        .map(|x| Ok((x, compliance_direct(domain, x, 0.0)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter_map(|(x, c)| c.value().map(|v| (x.clone(), v)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let trace: Vec<Value> = result
        .trace
        .iter()
        .map(|s| {
            json!({
                "round": s.round,
                "theta0": s.theta0,
                "iterations": s.iterations,
                "sampled": s.sampled.to_string(),
                "sampled_theta": s.sampled_theta,
                "accepted": s.accepted,
            })
        })
        .collect();
    let csv = csv(
        "round,theta0,iterations,sampled,sampled_theta,accepted",
        result.trace.iter().map(|s| {
            format!(
                "{},{},{},{},{},{}",
                s.round, s.theta0, s.iterations, s.sampled, s.sampled_theta, s.accepted
            )
        }),
    );
    Ok((
        json!({
            "best": config_view(&result.best, domain),
            "best_theta": result.best_theta,
            "best_compliance": compliance_value(compliance_direct(domain, &result.best, 0.0)?),
            "brute_force_argmin": argmin.as_ref().map(|(x, _)| config_view(x, domain)),
            "matches_brute_force": argmin.as_ref().map(|(x, _)| *x == result.best),
            "seed": config.search.seed,
            "trace": trace,
        }),
        csv,
    ))
}

/// Register widths and totals for the emulated and coherent pipelines.
pub fn resources(domain: &MbbDomain, n_p: usize) -> (Value, String) {
    let sizes = RegisterSizes::for_domain(domain);
    let coherent = sizes.n_c + n_p + sizes.n_l + sizes.n_d + SINGLE_QUBIT_REGISTERS;
    let emulated = sizes.n_c;
    let simulated_oracle = qae_layout(domain, n_p, true).map(|l| l.total_qubits()).ok();
    let rows = [
        ("c", sizes.n_c),
        ("p", n_p),
        ("l", sizes.n_l),
        ("d", sizes.n_d),
        ("g", 1),
        ("h", 1),
        ("q", 1),
        ("v", 1),
        ("z", 1),
        ("b", 1),
    ];
    (
        json!({
            "n_dof": domain.n_dof(),
            "n_c": sizes.n_c,
            "n_p": n_p,
            "n_l": sizes.n_l,
            "n_d": sizes.n_d,
            "singles": SINGLE_QUBIT_REGISTERS,
            "total_coherent": coherent,
            "total_emulated": emulated,
            "simulated_oracle_qubits": simulated_oracle,
        }),
        csv("register,qubits", rows.iter().map(|(name, w)| format!("{name},{w}"))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(kind: ExperimentKind, overrides: Value) -> Report {
        let config = ExperimentConfig::preset(kind).merged(&overrides).unwrap();
        run_experiment(&config).unwrap()
    }

    #[test]
    fn resources_examples() {
        let d2 = MbbDomain::mbb(2, 2, Default::default()).unwrap();
        let (r, _) = resources(&d2, 5);
        assert_eq!((r["n_c"].as_u64(), r["n_l"].as_u64(), r["n_d"].as_u64()), (Some(4), Some(2), Some(5)));
        let d3 = MbbDomain::mbb(3, 3, Default::default()).unwrap();
        let (r, _) = resources(&d3, 9);
        assert_eq!((r["n_c"].as_u64(), r["n_l"].as_u64(), r["n_d"].as_u64()), (Some(9), Some(4), Some(5)));
        assert_eq!(r["singles"].as_u64(), Some(6));
    }

    #[test]
    fn fig11_top_three_are_feasible() {
        let report = run(ExperimentKind::Fig11, json!({}));
        let rows = report.json["results"]["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 16);
        let top: Vec<&str> = rows[..3]
            .iter()
            .map(|r| r["config"]["bits"].as_str().unwrap())
            .collect();
        let mut top = top;
        top.sort();
        assert_eq!(top, ["1011", "1101", "1111"]);
        assert_eq!(report.csv.lines().count(), 17);
    }

    #[test]
    fn fig10_reports_peaks() {
        let report = run(ExperimentKind::Fig10, json!({}));
        let results = &report.json["results"];
        assert_eq!(results["outcomes"].as_array().unwrap().len(), 32);
        assert!(results["mass_near_theta"].as_f64().unwrap() >= 0.8);
        assert_eq!(results["config"]["grid"], json!(["##", "##"]));
    }

    #[test]
    fn reports_are_deterministic_and_sorted() {
        let a = run(ExperimentKind::Fig9b, json!({}));
        let b = run(ExperimentKind::Fig9b, json!({}));
        assert_eq!(a.json_text(), b.json_text());
        assert_eq!(a.csv, b.csv);
        let keys: Vec<&String> = a.json.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(a.json["constants"]["alpha"].as_f64().unwrap() > 0.0);
        assert_eq!(a.json["config"]["experiment"], "fig9b");
    }

    #[test]
    fn linear_fit_recovers_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_target_length_is_rejected() {
        let config = ExperimentConfig::preset(ExperimentKind::Fig10)
            .merged(&json!({"target": "101"}))
            .unwrap();
        assert!(matches!(run_experiment(&config), Err(Error::ConfigLength { .. })));
    }

    #[test]
    fn coherent_qae_backend_runs() {
        let report = run(ExperimentKind::Fig10, json!({"qae": {"backend": "coherent"}}));
        assert_eq!(report.json["results"]["backend"], "coherent");
    }
}
