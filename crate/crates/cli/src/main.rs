use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use qtopo::experiments::{merge, run_experiment, statevector_dump, ExperimentConfig, ExperimentKind};
use qtopo::Error;

/// Environment variable that must be set for statevector dumps.
const STATEVECTOR_GATE: &str = "QTOPO_DEBUG_STATEVECTOR";

#[derive(Parser, Debug)]
#[command(name = "qtopo", version, about = "Quantum-assisted binary topology optimization, simulated classically")]
struct Cli {
    #[command(subcommand)]
    group: Group,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Group {
    /// Classical finite-element results.
    #[command(subcommand)]
    Mbb(MbbCmd),
    /// Phase estimation and Grover search.
    #[command(subcommand)]
    Quantum(QuantumCmd),
    /// Chebyshev filter fits and degree scans.
    #[command(subcommand)]
    Poly(PolyCmd),
    /// Equivalence checks.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Register-size accounting.
    #[command(subcommand)]
    Resources(ResourcesCmd),
}

#[derive(Subcommand, Debug)]
enum MbbCmd {
    /// Direct compliance of every configuration.
    Compliance,
    /// Direct, pseudo-density, odd- and even-target compliances.
    Fig9b,
}

#[derive(Subcommand, Debug)]
enum QuantumCmd {
    /// Phase-register distribution of one configuration.
    Compliance,
    /// Phase table of every configuration.
    Thetas,
    /// Grover search with the current flags.
    Grover,
    /// Unconstrained 2x2 search preset.
    Fig11,
    /// Volume-constrained 3x3 search preset.
    Fig12,
    /// Threshold-descent minimization.
    Minimize,
}

#[derive(Subcommand, Debug)]
enum PolyCmd {
    /// One filter fit with plot samples.
    Fit,
    /// Degree against mu for several tolerances.
    Fig15,
    /// Degree against the tolerance.
    Fig16,
    /// Degree against y0.
    Fig17,
}

#[derive(Subcommand, Debug)]
enum VerifyCmd {
    /// Block-encoding, unitarity and backend agreement.
    All,
}

#[derive(Subcommand, Debug)]
enum ResourcesCmd {
    /// Register widths and totals.
    Report,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON document overriding every other flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for `<stem>.json` and `<stem>.csv`; stdout when absent.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    stem: Option<String>,
    /// Writes the coherent phase-estimation statevector as CSV.
    #[arg(long, global = true)]
    emit_statevector: Option<PathBuf>,

    #[arg(long, global = true)]
    nx: Option<usize>,
    #[arg(long, global = true)]
    ny: Option<usize>,
    #[arg(long, global = true)]
    young_modulus: Option<f64>,
    #[arg(long, global = true)]
    poisson_ratio: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    y0: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// `exact` or `polynomial`.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// `chop` or `certified`.
    #[arg(long, global = true)]
    rule: Option<String>,
    #[arg(long, global = true)]
    n_p: Option<usize>,
    /// `emulated` or `coherent`.
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    theta0: Option<f64>,
    #[arg(long, global = true)]
    volume_k: Option<usize>,
    #[arg(long, global = true)]
    r: Option<usize>,
    /// `exact_phase` or `coherent_qae`.
    #[arg(long, global = true)]
    oracle: Option<String>,
    /// Configuration bitstring, element 1 first.
    #[arg(long, global = true)]
    target: Option<String>,
}

impl Group {
    fn experiment(&self) -> ExperimentKind {
        match self {
            Group::Mbb(MbbCmd::Compliance) => ExperimentKind::Compliance,
            Group::Mbb(MbbCmd::Fig9b) => ExperimentKind::Fig9b,
            Group::Quantum(QuantumCmd::Compliance) => ExperimentKind::Fig10,
            Group::Quantum(QuantumCmd::Thetas) => ExperimentKind::Thetas,
            Group::Quantum(QuantumCmd::Grover | QuantumCmd::Fig11) => ExperimentKind::Fig11,
            Group::Quantum(QuantumCmd::Fig12) => ExperimentKind::Fig12,
            Group::Quantum(QuantumCmd::Minimize) => ExperimentKind::Minimize,
            Group::Poly(PolyCmd::Fit) => ExperimentKind::Fit,
            Group::Poly(PolyCmd::Fig15) => ExperimentKind::Fig15,
            Group::Poly(PolyCmd::Fig16) => ExperimentKind::Fig16,
            Group::Poly(PolyCmd::Fig17) => ExperimentKind::Fig17,
            Group::Verify(VerifyCmd::All) => ExperimentKind::Verify,
            Group::Resources(ResourcesCmd::Report) => ExperimentKind::Resources,
        }
    }
}

fn put(section: &mut Map<String, Value>, key: &str, value: Option<Value>) {
    if let Some(v) = value {
        section.insert(key.to_owned(), v);
    }
}

impl Common {
    /// Flag values as a partial configuration document.
    fn overrides(&self) -> Value {
        let mut domain = Map::new();
        put(&mut domain, "n_x", self.nx.map(Value::from));
        put(&mut domain, "n_y", self.ny.map(Value::from));
        put(&mut domain, "young_modulus", self.young_modulus.map(Value::from));
        put(&mut domain, "poisson_ratio", self.poisson_ratio.map(Value::from));
        let mut poly = Map::new();
        put(&mut poly, "mu", self.mu.map(Value::from));
        put(&mut poly, "y0", self.y0.map(Value::from));
        put(&mut poly, "eps", self.eps.map(Value::from));
        put(&mut poly, "mode", self.mode.clone().map(Value::from));
        put(&mut poly, "rule", self.rule.clone().map(Value::from));
        let mut qae = Map::new();
        put(&mut qae, "n_p", self.n_p.map(Value::from));
        put(&mut qae, "backend", self.backend.clone().map(Value::from));
        let mut search = Map::new();
        search.insert("seed".into(), Value::from(self.seed));
        put(&mut search, "theta0", self.theta0.map(Value::from));
        put(&mut search, "volume_k", self.volume_k.map(Value::from));
        put(&mut search, "r", self.r.map(Value::from));
        put(&mut search, "oracle_backend", self.oracle.clone().map(Value::from));
        let mut root = Map::new();
        root.insert("domain".into(), Value::Object(domain));
        root.insert("poly".into(), Value::Object(poly));
        root.insert("qae".into(), Value::Object(qae));
        root.insert("search".into(), Value::Object(search));
        put(&mut root, "target", self.target.clone().map(Value::from));
        let mut output = Map::new();
        put(&mut output, "dir", self.out_dir.as_ref().map(|p| Value::from(p.display().to_string())));
        put(&mut output, "stem", self.stem.clone().map(Value::from));
        root.insert("output".into(), Value::Object(output));
        Value::Object(root)
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut overrides = cli.common.overrides();
    if let Some(path) = &cli.common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(Error::Config("configuration file must hold a JSON object".into()));
        }
        merge(&mut overrides, &file);
    }
    let kind = match overrides.get("experiment") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?,
        None => cli.group.experiment(),
    };
    ExperimentConfig::preset(kind).merged(&overrides)
}

fn execute(cli: &Cli) -> Result<String, Error> {
    let config = resolve(cli)?;
    if let Some(path) = &cli.common.emit_statevector {
        if std::env::var_os(STATEVECTOR_GATE).is_none() {
            return Err(Error::Config(format!(
                "--emit-statevector requires {STATEVECTOR_GATE} to be set"
            )));
        }
        if config.experiment != ExperimentKind::Fig10 {
            return Err(Error::Config("--emit-statevector applies to `quantum compliance` only".into()));
        }
        let dump = statevector_dump(&config)?;
        fs::write(path, dump).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let report = run_experiment(&config)?;
    match &config.output.dir {
        Some(dir) => {
            let stem = config.output.stem.clone().unwrap_or_else(|| config.experiment.name());
            let (json_path, csv_path) = report.write(&PathBuf::from(dir), &stem)?;
            let summary = json!({
                "experiment": config.experiment.name(),
                "json": json_path.display().to_string(),
                "csv": csv_path.display().to_string(),
            });
            Ok(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")
        }
        None => Ok(report.json_text()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let mut body = json!({
                "kind": err.kind(),
                "message": err.to_string(),
                "exit_code": err.exit_code(),
            });
            if let Error::BudgetExhausted { rounds, best } = &err {
                body["rounds"] = json!(rounds);
                body["best"] = json!(best.as_ref().map(|b| b.to_string()));
            }
            let report = json!({ "error": body });
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("error serializes"));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
