//! Compliance-to-phase pipeline: the Hadamard test on the filtered inverse,
//! its Grover operator, phase estimation, and the analytic phase-estimation
//! response used as the emulated backend.
//!
//! A configuration's signal value is `t = f̂ᵀ·V filter(Σ) Vᵀ·f̂` for
//! `K_free/β = VΣVᵀ` and the normalized reduced load `f̂`; its phase is
//! `θ = arcsin(√(½ + t/2))/π`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blockenc::{config_selected_dilation, element_blockencoding, RegisterSizes, ScalingConstants};
use crate::error::{Error, Result};
use crate::fem::{compliance_direct, reduced_stiffness, MbbDomain, StructureConfig};
use crate::qsim::{Control, Operator, QuantumState, RegisterLayout};
use crate::qsvt::{filter_spectrum, Filter};

/// Largest phase register accepted.
pub const PHASE_QUBIT_LIMIT: usize = 20;

/// `arcsin(√(½ + t/2))/π`.
pub fn theta_of_t(t: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&t) || t.is_nan() {
        return Err(Error::OutOfDomain(t));
    }
    Ok((0.5 + 0.5 * t).sqrt().asin() / PI)
}

/// Inverse of [`theta_of_t`] on `[0, ½]`.
pub fn t_of_theta(theta: f64) -> f64 {
    let s = (PI * theta).sin();
    2.0 * s * s - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceEstimate {
    Value(f64),
    /// The filter plateau carries most of the signal; no compliance is
    /// implied.
    Saturated,
}

impl ComplianceEstimate {
    pub fn value(self) -> Option<f64> {
        match self {
            ComplianceEstimate::Value(c) => Some(c),
            ComplianceEstimate::Saturated => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub config: StructureConfig,
    pub t_value: f64,
    pub theta: f64,
    pub compliance_estimate: ComplianceEstimate,
}

/// Phase-estimation backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Coherent,
    #[default]
    Emulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaeParams {
    pub n_p: usize,
    pub backend: Backend,
}

impl QaeParams {
    pub fn new(n_p: usize, backend: Backend) -> Result<Self> {
        if !(2..=PHASE_QUBIT_LIMIT).contains(&n_p) {
            return Err(Error::QubitGuard {
                requested: n_p,
                limit: PHASE_QUBIT_LIMIT,
            });
        }
        Ok(QaeParams { n_p, backend })
    }
}

/// Outcome distribution of the phase register.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QaeDistribution {
    pub n_p: usize,
    pub probabilities: Vec<f64>,
}

impl QaeDistribution {
    pub fn size(&self) -> usize {
        self.probabilities.len()
    }

    /// Outcome integers by decreasing probability.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.size()).collect();
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        idx
    }

    /// Total mass on outcomes within `radius` grid steps of `±θ`.
    pub fn mass_near(&self, theta: f64, radius: usize) -> f64 {
        let n = self.size() as f64;
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(p, _)| {
                let frac = *p as f64 / n;
                let dist = |target: f64| {
                    let d = (frac - target).rem_euclid(1.0);
                    d.min(1.0 - d) * n
                };
                dist(theta).min(dist(-theta)) <= radius as f64 + 1e-9
            })
            .map(|(_, pr)| pr)
            .sum()
    }

    pub fn bits(&self, p: usize) -> String {
        format!("{p:0width$b}", width = self.n_p)
    }
}

/// `δ`, `β = n_el·δ` and `γ` for the domain and filter; `alpha` calibrated
/// on the all-solid configuration.
pub fn scaling_constants(domain: &MbbDomain, filter: &Filter) -> Result<ScalingConstants> {
    let delta = element_blockencoding(domain.material()).delta;
    let mut constants = ScalingConstants {
        delta,
        beta: domain.n_el() as f64 * delta,
        gamma: filter.gamma(),
        alpha: f64::NAN,
    };
    constants.alpha = calibrate_alpha(domain, &constants, filter)?;
    Ok(constants)
}

/// `t(all-solid) / c(all-solid)`.
pub fn calibrate_alpha(domain: &MbbDomain, constants: &ScalingConstants, filter: &Filter) -> Result<f64> {
    let solid = StructureConfig::all_solid(domain.n_el());
    let c = compliance_direct(domain, &solid, 0.0)?
        .value()
        .ok_or(Error::InfeasibleCalibration)?;
    let t = signal_value(domain, &solid, constants.beta, filter)?.0;
    Ok(t / c)
}

fn normalized_load(domain: &MbbDomain) -> DVector<f64> {
    let f = domain.force_free();
    let norm = f.norm();
    if norm == 0.0 {
        f
    } else {
        f / norm
    }
}

/// `(t, share of t carried by modes below the threshold)`.
fn signal_value(domain: &MbbDomain, config: &StructureConfig, beta: f64, filter: &Filter) -> Result<(f64, f64)> {
    let kf = reduced_stiffness(domain, config)?;
    let spectrum = filter_spectrum(&kf, beta, filter)?;
    let contributions = spectrum.contributions(&normalized_load(domain));
    let t: f64 = contributions.iter().sum();
    let plateau: f64 = contributions
        .iter()
        .zip(spectrum.eigenvalues.iter())
        .filter(|(_, s)| s.abs() < filter.mu())
        .map(|(c, _)| c)
        .sum();
    let share = if t.abs() > 0.0 { plateau / t } else { 0.0 };
    Ok((t.clamp(-1.0, 1.0), share))
}

/// Signal value, phase and recovered compliance of one configuration.
pub fn phase_of_config(
    domain: &MbbDomain,
    config: &StructureConfig,
    constants: &ScalingConstants,
    filter: &Filter,
) -> Result<PhaseRecord> {
    let (t, plateau_share) = signal_value(domain, config, constants.beta, filter)?;
    let theta = theta_of_t(t)?;
    let compliance_estimate = if plateau_share > 0.5 {
        ComplianceEstimate::Saturated
    } else {
        ComplianceEstimate::Value(t / constants.alpha)
    };
    Ok(PhaseRecord {
        config: config.clone(),
        t_value: t,
        theta,
        compliance_estimate,
    })
}

/// `V filter(Σ) Vᵀ` for every configuration, embedded in the full DoF
/// index range (fixed DoFs map to zero rows and columns).
pub fn filtered_inverse_table(
    domain: &MbbDomain,
    constants: &ScalingConstants,
    filter: &Filter,
) -> Result<Vec<Option<DMatrix<f64>>>> {
    use rayon::prelude::*;
    let free = domain.free_dofs();
    let n_dof = domain.n_dof();
    StructureConfig::enumerate(domain.n_el(), None)?
        .par_iter()
        .map(|config| {
            let kf = reduced_stiffness(domain, config)?;
            let m = filter_spectrum(&kf, constants.beta, filter)?.matrix();
            let mut full = DMatrix::zeros(n_dof, n_dof);
            for (a, &ga) in free.iter().enumerate() {
                for (b, &gb) in free.iter().enumerate() {
                    full[(ga, gb)] = m.get(a, b);
                }
            }
            Ok(Some(full))
        })
        .collect()
}

/// Unit load over the full DoF range with fixed entries zeroed.
pub fn reduced_load(domain: &MbbDomain) -> Vec<f64> {
    let mut full = domain.force().to_vec();
    for &i in domain.fixed_dofs() {
        full[i] = 0.0;
    }
    let norm = full.iter().map(|f| f * f).sum::<f64>().sqrt();
    if norm > 0.0 {
        full.iter_mut().for_each(|f| *f /= norm);
    }
    full
}

/// Comparator: outcome `p` of an `n_p`-qubit register is marked iff
/// `min(p, 2^{n_p} − p)/2^{n_p} < θ0`.
pub fn comparator_marks(p: usize, n_p: usize, theta0: f64) -> bool {
    let n = 1usize << n_p;
    let folded = p.min(n - p) as f64 / n as f64;
    folded < theta0
}

/// Unitary mapping `|0⟩` to `|ψ⟩` (a real Householder reflection).
pub fn state_preparation(psi: &[f64], qubits: &[usize]) -> Result<Operator> {
    let dim = 1usize << qubits.len();
    if psi.len() != dim {
        return Err(Error::Layout(format!("{} amplitudes for {} qubits", psi.len(), qubits.len())));
    }
    let norm = psi.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotUnit(norm));
    }
    let mut w = DVector::from_column_slice(psi);
    w[0] -= 1.0;
    let w2 = w.norm_squared();
    let h = if w2 < 1e-30 {
        DMatrix::identity(dim, dim)
    } else {
        DMatrix::identity(dim, dim) - &w * w.transpose() * (2.0 / w2)
    };
    Operator::dense_real(&h, qubits)
}

/// `A = H_h · controlled-U_sel · V_f · H_h`, time-ordered.
pub fn hadamard_test_operator(u_sel: &Operator, layout: &RegisterLayout, load: &[f64]) -> Result<Operator> {
    let h = layout.qubit("h", 0)?;
    let d = layout.qubits("d")?;
    let mut padded = vec![0.0; 1 << d.len()];
    if load.len() > padded.len() {
        return Err(Error::Layout("load does not fit register 'd'".into()));
    }
    padded[..load.len()].copy_from_slice(load);
    Ok(Operator::sequence(vec![
        Operator::h(h),
        state_preparation(&padded, &d)?,
        u_sel.clone().controlled(&[Control::closed(h)])?,
        Operator::h(h),
    ]))
}

/// `A·(2|0⟩⟨0| − 𝟙)·A†·S_h` with the reflection on `h`, `d`, `b` and `S_h`
/// flipping the sign of `h = 0`.
pub fn grover_operator(a: &Operator, layout: &RegisterLayout) -> Result<Operator> {
    let h = layout.qubit("h", 0)?;
    let mut work = vec![h];
    work.extend(layout.qubits("d")?);
    work.push(layout.qubit("b", 0)?);
    let mut zero = vec![Complex64::new(0.0, 0.0); 1 << work.len()];
    zero[0] = Complex64::new(1.0, 0.0);
    let s_h = Operator::diagonal(
        vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)],
        &[h],
    )?;
    Ok(Operator::sequence(vec![
        s_h,
        a.adjoint(),
        Operator::reflection(zero, &work)?,
        a.clone(),
    ]))
}

/// Layout `c, p, h, b, d` plus an optional one-qubit flag register `g`.
pub fn qae_layout(domain: &MbbDomain, n_p: usize, with_flag: bool) -> Result<RegisterLayout> {
    let sizes = RegisterSizes::for_domain(domain);
    let mut spec = vec![("c", sizes.n_c), ("p", n_p), ("h", 1), ("b", 1), ("d", sizes.n_d)];
    if with_flag {
        spec.push(("g", 1));
    }
    RegisterLayout::new(&spec)
}

/// Coherent amplitude-estimation circuit over all configurations at once.
#[derive(Debug, Clone)]
pub struct CoherentQae {
    pub layout: RegisterLayout,
    pub a: Operator,
    pub g: Operator,
    pub n_p: usize,
}

impl CoherentQae {
    /// Circuit for a physical domain with `U_sel` built from the filtered
    /// inverses of every configuration.
    pub fn new(
        domain: &MbbDomain,
        constants: &ScalingConstants,
        filter: &Filter,
        n_p: usize,
        layout: RegisterLayout,
    ) -> Result<Self> {
        let table = filtered_inverse_table(domain, constants, filter)?;
        let u_sel = config_selected_dilation(&table, &layout)?;
        Self::from_selected(&u_sel, &reduced_load(domain), n_p, layout)
    }

    /// Circuit for an arbitrary configuration-selected unitary and load.
    pub fn from_selected(u_sel: &Operator, load: &[f64], n_p: usize, layout: RegisterLayout) -> Result<Self> {
        QaeParams::new(n_p, Backend::Coherent)?;
        if layout.register("p")?.width() != n_p {
            return Err(Error::Layout("phase register width differs from n_p".into()));
        }
        let a = hadamard_test_operator(u_sel, &layout, load)?;
        let g = grover_operator(&a, &layout)?;
        Ok(CoherentQae { layout, a, g, n_p })
    }

    /// `C`: Hadamards on `p`, `A`, controlled `G^{2^j}` on phase bit `j`,
    /// inverse QFT on `p`.
    pub fn estimation_circuit(&self) -> Result<Operator> {
        let p = self.layout.qubits("p")?;
        let mut ops: Vec<Operator> = p.iter().map(|&q| Operator::h(q)).collect();
        ops.push(self.a.clone());
        for (j, &q) in p.iter().enumerate() {
            let power = Operator::sequence(vec![self.g.clone(); 1 << j]);
            ops.push(power.controlled(&[Control::closed(q)])?);
        }
        ops.push(Operator::fourier(&p, true)?);
        Ok(Operator::sequence(ops))
    }

    /// `C|0⟩|x⟩` over the full layout.
    pub fn final_state(&self, config: &StructureConfig) -> Result<QuantumState> {
        let mut state = QuantumState::basis(self.layout.clone(), &[("c", config.index())])?;
        state.apply(&self.estimation_circuit()?)?;
        Ok(state)
    }

    pub fn distribution(&self, config: &StructureConfig) -> Result<QaeDistribution> {
        let state = self.final_state(config)?;
        Ok(QaeDistribution {
            n_p: self.n_p,
            probabilities: state.marginal(&["p"])?,
        })
    }
}

/// `sin²(πNΔ)/(N² sin²(πΔ))`, 1 at integer `Δ`.
fn fejer(delta: f64, n: usize) -> f64 {
    let s = (PI * delta).sin();
    if s.abs() < 1e-14 {
        return 1.0;
    }
    let num = (PI * n as f64 * delta).sin();
    (num * num) / ((n * n) as f64 * s * s)
}

/// Exact phase-estimation response to the eigenphases `±θ`, each with
/// weight ½.
pub fn emulated_distribution(theta: f64, n_p: usize) -> QaeDistribution {
    let n = 1usize << n_p;
    let probabilities = (0..n)
        .map(|p| {
            let frac = p as f64 / n as f64;
            0.5 * fejer(theta - frac, n) + 0.5 * fejer(-theta - frac, n)
        })
        .collect();
    QaeDistribution { n_p, probabilities }
}

/// Phase-register distribution for one configuration.
pub fn qae_distribution(
    domain: &MbbDomain,
    config: &StructureConfig,
    params: &QaeParams,
    constants: &ScalingConstants,
    filter: &Filter,
) -> Result<QaeDistribution> {
    QaeParams::new(params.n_p, params.backend)?;
    match params.backend {
        Backend::Emulated => {
            let record = phase_of_config(domain, config, constants, filter)?;
            Ok(emulated_distribution(record.theta, params.n_p))
        }
        Backend::Coherent => {
            let layout = qae_layout(domain, params.n_p, false)?;
            CoherentQae::new(domain, constants, filter, params.n_p, layout)?.distribution(config)
        }
    }
}
