use thiserror::Error;

use crate::fem::StructureConfig;

/// Errors raised by the simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("configuration has {got} elements, domain has {expected}")]
    ConfigLength { expected: usize, got: usize },

    #[error("element index {e} out of range 1..={n_el}")]
    ElementOutOfRange { e: usize, n_el: usize },

    #[error("duplicate fixed DoF index {0}")]
    DuplicateDof(usize),

    #[error("DoF index {index} out of range for order {order}")]
    DofOutOfRange { index: usize, order: usize },

    #[error("enumeration guard: {n_el} elements exceeds the limit of {limit}")]
    EnumerationGuard { n_el: usize, limit: usize },

    #[error("simulability guard: {requested} qubits requested, limit is {limit}")]
    QubitGuard { requested: usize, limit: usize },

    #[error("invalid register layout: {0}")]
    Layout(String),

    #[error("target and control qubits overlap on qubit {0}")]
    OverlappingQubits(usize),

    #[error("register '{0}' is not in the all-zero state")]
    NonZeroRegister(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("vector is not normalized (norm {0})")]
    NotUnit(f64),

    #[error("matrix spectral norm {norm} exceeds 1")]
    NormViolation { norm: f64 },

    #[error("operator is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("invalid polynomial spec: {0}")]
    InvalidPolySpec(String),

    #[error("polynomial degree cap {cap} exceeded (achieved error {achieved_error:e})")]
    DegreeCap { cap: usize, achieved_error: f64 },

    #[error("value {0} outside [-1, 1]")]
    OutOfDomain(f64),

    #[error("empty phase list")]
    EmptyPhases,

    #[error("theta table has no entry for configuration {0}")]
    MissingConfig(String),

    #[error("iteration count needs 1 <= M <= N (M = {marked}, N = {size})")]
    InvalidMarkedCount { marked: usize, size: usize },

    #[error("the all-solid configuration is infeasible; cannot calibrate")]
    InfeasibleCalibration,

    #[error("search budget exhausted after {rounds} rounds")]
    BudgetExhausted {
        rounds: usize,
        best: Option<StructureConfig>,
    },

    #[error("invalid search parameters: {0}")]
    InvalidSearch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EnumerationGuard { .. } | Error::QubitGuard { .. } | Error::DegreeCap { .. } => 3,
            Error::BudgetExhausted { .. } => 4,
            _ => 2,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMaterial(_) => "invalid_material",
            Error::InvalidDomain(_) => "invalid_domain",
            Error::ConfigLength { .. } => "config_length",
            Error::ElementOutOfRange { .. } => "element_out_of_range",
            Error::DuplicateDof(_) => "duplicate_dof",
            Error::DofOutOfRange { .. } => "dof_out_of_range",
            Error::EnumerationGuard { .. } => "enumeration_guard",
            Error::QubitGuard { .. } => "qubit_guard",
            Error::Layout(_) => "layout",
            Error::OverlappingQubits(_) => "overlapping_qubits",
            Error::NonZeroRegister(_) => "nonzero_register",
            Error::InvalidOperator(_) => "invalid_operator",
            Error::NotUnit(_) => "not_unit",
            Error::NormViolation { .. } => "norm_violation",
            Error::NotUnitary(_) => "not_unitary",
            Error::InvalidPolySpec(_) => "invalid_poly_spec",
            Error::DegreeCap { .. } => "degree_cap",
            Error::OutOfDomain(_) => "out_of_domain",
            Error::EmptyPhases => "empty_phases",
            Error::MissingConfig(_) => "missing_config",
            Error::InvalidMarkedCount { .. } => "invalid_marked_count",
            Error::InfeasibleCalibration => "infeasible_calibration",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::InvalidSearch(_) => "invalid_search",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
