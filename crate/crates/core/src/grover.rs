//! Grover search over structure configurations: phase oracles, diffusion
//! about the uniform or Dicke state, exact search distributions, and the
//! threshold-descent minimum search.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockenc::ScalingConstants;
use crate::error::{Error, Result};
use crate::fem::{enumerate_thetas, MbbDomain, StructureConfig};
use crate::qae::{comparator_marks, qae_layout, scaling_constants, CoherentQae};
use crate::qsim::{dicke_vector, reflection_about, sample_index, uniform_vector, Operator, QuantumState, RegisterLayout};
use crate::qsvt::Filter;

/// Round cap of the threshold-descent loop.
pub const MAX_DESCENT_ROUNDS: usize = 500;

/// `⌊π/(4·arcsin√(M/N)) − ½⌋`.
pub fn iteration_count(size: usize, marked: usize) -> Result<usize> {
    if marked == 0 || marked > size {
        return Err(Error::InvalidMarkedCount { marked, size });
    }
    let angle = (marked as f64 / size as f64).sqrt().asin();
    Ok((PI / (4.0 * angle) - 0.5).floor().max(0.0) as usize)
}

/// `sin²((2r+1)·arcsin√(M/N))`.
pub fn success_probability(size: usize, marked: usize, r: usize) -> f64 {
    let angle = (marked as f64 / size as f64).sqrt().asin();
    ((2 * r + 1) as f64 * angle).sin().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleBackend {
    #[default]
    ExactPhase,
    CoherentQae,
}

/// Initial superposition of the configuration register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Uniform,
    Dicke(usize),
}

impl InitialState {
    pub fn from_volume(volume_k: Option<usize>) -> Self {
        volume_k.map_or(InitialState::Uniform, InitialState::Dicke)
    }

    pub fn vector(self, width: usize) -> Vec<Complex64> {
        match self {
            InitialState::Uniform => uniform_vector(width),
            InitialState::Dicke(k) => dicke_vector(width, k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub theta0: f64,
    pub volume_k: Option<usize>,
    pub r: Option<usize>,
    pub oracle_backend: OracleBackend,
    pub n_p: usize,
}

impl SearchParams {
    pub fn new(theta0: f64) -> Result<Self> {
        let params = SearchParams {
            theta0,
            volume_k: None,
            r: None,
            oracle_backend: OracleBackend::ExactPhase,
            n_p: 5,
        };
        params.validate(usize::MAX)?;
        Ok(params)
    }

    pub fn with_volume(mut self, k: usize) -> Self {
        self.volume_k = Some(k);
        self
    }

    pub fn with_iterations(mut self, r: usize) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_backend(mut self, backend: OracleBackend, n_p: usize) -> Self {
        self.oracle_backend = backend;
        self.n_p = n_p;
        self
    }

    pub fn validate(&self, n_el: usize) -> Result<()> {
        if !(0.25..0.5).contains(&self.theta0) {
            return Err(Error::InvalidSearch(format!(
                "threshold {} outside [0.25, 0.5)",
                self.theta0
            )));
        }
        if let Some(k) = self.volume_k {
            if k > n_el {
                return Err(Error::InvalidSearch(format!("volume {k} exceeds {n_el} elements")));
            }
        }
        Ok(())
    }
}

/// Configurations, their phases, and what is needed to build a coherent
/// oracle for them.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    n_el: usize,
    support: Vec<StructureConfig>,
    thetas: BTreeMap<StructureConfig, f64>,
    model: Option<PhysicalModel>,
}

#[derive(Debug, Clone)]
struct PhysicalModel {
    domain: MbbDomain,
    constants: ScalingConstants,
    filter: Filter,
}

impl SearchSpace {
    /// Enumerates the configurations of `domain` (optionally of fixed
    /// Hamming weight) and their phases under `filter`.
    pub fn new(domain: &MbbDomain, filter: &Filter, volume_k: Option<usize>) -> Result<Self> {
        let constants = scaling_constants(domain, filter)?;
        let rows = enumerate_thetas(domain, &constants, filter, volume_k)?;
        let support = StructureConfig::enumerate(domain.n_el(), volume_k)?;
        let thetas = rows.into_iter().map(|r| (r.config, r.phase.theta)).collect();
        Ok(SearchSpace {
            n_el: domain.n_el(),
            support,
            thetas,
            model: Some(PhysicalModel {
                domain: domain.clone(),
                constants,
                filter: filter.clone(),
            }),
        })
    }

    /// A space over a given phase table; only the exact-phase oracle is
    /// available.
    pub fn from_table(n_el: usize, thetas: BTreeMap<StructureConfig, f64>, volume_k: Option<usize>) -> Result<Self> {
        let support = StructureConfig::enumerate(n_el, volume_k)?;
        Ok(SearchSpace {
            n_el,
            support,
            thetas,
            model: None,
        })
    }

    pub fn n_el(&self) -> usize {
        self.n_el
    }

    pub fn support(&self) -> &[StructureConfig] {
        &self.support
    }

    pub fn thetas(&self) -> &BTreeMap<StructureConfig, f64> {
        &self.thetas
    }

    pub fn constants(&self) -> Option<&ScalingConstants> {
        self.model.as_ref().map(|m| &m.constants)
    }

    pub fn theta(&self, config: &StructureConfig) -> Result<f64> {
        self.thetas
            .get(config)
            .copied()
            .ok_or_else(|| Error::MissingConfig(config.to_string()))
    }

    /// Support configurations with `θ < θ0`.
    pub fn marked(&self, theta0: f64) -> Result<Vec<StructureConfig>> {
        let mut marked = Vec::new();
        for config in &self.support {
            if self.theta(config)? < theta0 {
                marked.push(config.clone());
            }
        }
        Ok(marked)
    }
}

/// Diagonal on `c`: `−1` iff `θ(x) < θ0`; configurations outside the table
/// are left unmarked, but every `support` entry must be present.
pub fn exact_phase_oracle(
    thetas: &BTreeMap<StructureConfig, f64>,
    support: &[StructureConfig],
    theta0: f64,
    layout: &RegisterLayout,
) -> Result<Operator> {
    let c = layout.qubits("c")?;
    if let Some(missing) = support.iter().find(|x| !thetas.contains_key(x)) {
        return Err(Error::MissingConfig(missing.to_string()));
    }
    let mut diag = vec![Complex64::new(1.0, 0.0); 1 << c.len()];
    for (config, &theta) in thetas {
        if config.len() != c.len() {
            return Err(Error::ConfigLength {
                expected: c.len(),
                got: config.len(),
            });
        }
        if theta < theta0 {
            diag[config.index()] = Complex64::new(-1.0, 0.0);
        }
    }
    Operator::diagonal(diag, &c)
}

/// `C† · U_< · Z_g · U_< · C`, time-ordered right to left; `U_<` flips `g`
/// when the phase register outcome passes the comparator.
pub fn coherent_oracle(qae: &CoherentQae, theta0: f64) -> Result<Operator> {
    let layout = &qae.layout;
    let p = layout.qubits("p")?;
    let g = layout.qubit("g", 0)?;
    let n_p = qae.n_p;
    let dim = 1usize << n_p;
    let mut targets = p.clone();
    targets.push(g);
    let table = (0..2 * dim)
        .map(|i| {
            let outcome = i % dim;
            if comparator_marks(outcome, n_p, theta0) {
                i ^ dim
            } else {
                i
            }
        })
        .collect();
    let compare = Operator::permutation(table, &targets)?;
    let c = qae.estimation_circuit()?;
    Ok(Operator::sequence(vec![
        c.clone(),
        compare.clone(),
        Operator::z(g),
        compare,
        c.adjoint(),
    ]))
}

/// `2|ψ_init⟩⟨ψ_init| − 𝟙` on `c`.
pub fn diffusion(init: InitialState, layout: &RegisterLayout) -> Result<Operator> {
    let c = layout.qubits("c")?;
    reflection_about(&init.vector(c.len()), &c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    /// Probability of every support configuration, in support order.
    pub distribution: Vec<(StructureConfig, f64)>,
    pub marked_set: Vec<StructureConfig>,
    pub r_used: usize,
    pub success_probability: f64,
    /// Probability outside the support.
    pub leakage: f64,
}

impl SearchResult {
    /// Configurations by decreasing probability.
    pub fn ranked(&self) -> Vec<(StructureConfig, f64)> {
        let mut rows = self.distribution.clone();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        rows
    }
}

fn build_oracle(space: &SearchSpace, params: &SearchParams) -> Result<(RegisterLayout, Operator)> {
    match params.oracle_backend {
        OracleBackend::ExactPhase => {
            let layout = RegisterLayout::new(&[("c", space.n_el)])?;
            let oracle = exact_phase_oracle(&space.thetas, &space.support, params.theta0, &layout)?;
            Ok((layout, oracle))
        }
        OracleBackend::CoherentQae => {
            let model = space
                .model
                .as_ref()
                .ok_or_else(|| Error::InvalidSearch("coherent oracle needs a physical domain".into()))?;
            let layout = qae_layout(&model.domain, params.n_p, true)?;
            let qae = CoherentQae::new(&model.domain, &model.constants, &model.filter, params.n_p, layout.clone())?;
            Ok((layout, coherent_oracle(&qae, params.theta0)?))
        }
    }
}

/// Prepares the initial state, applies `r` rounds of oracle and diffusion,
/// and returns the exact distribution of `c`.
pub fn run_grover(space: &SearchSpace, params: &SearchParams) -> Result<SearchResult> {
    params.validate(space.n_el)?;
    let marked_set = space.marked(params.theta0)?;
    let r = match params.r {
        Some(r) => r,
        None => iteration_count(space.support.len(), marked_set.len())?,
    };
    let (layout, oracle) = build_oracle(space, params)?;
    search_with(space, params, &layout, &oracle, marked_set, r)
}

fn search_with(
    space: &SearchSpace,
    params: &SearchParams,
    layout: &RegisterLayout,
    oracle: &Operator,
    marked_set: Vec<StructureConfig>,
    r: usize,
) -> Result<SearchResult> {
    let init = InitialState::from_volume(params.volume_k);
    let mut state = QuantumState::zero(layout.clone());
    state.prepare_register("c", &init.vector(space.n_el))?;
    let diffuse = diffusion(init, layout)?;
    for _ in 0..r {
        state.apply(oracle)?;
        state.apply(&diffuse)?;
    }
    let probs = state.marginal(&["c"])?;
    let distribution: Vec<(StructureConfig, f64)> = space
        .support
        .iter()
        .map(|x| (x.clone(), probs[x.index()]))
        .collect();
    let in_support: f64 = distribution.iter().map(|(_, p)| p).sum();
    let success_probability = marked_set.iter().map(|x| probs[x.index()]).sum();
    Ok(SearchResult {
        distribution,
        marked_set,
        r_used: r,
        success_probability,
        leakage: (probs.iter().sum::<f64>() - in_support).max(0.0),
    })
}

/// One round of the threshold-descent loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentStep {
    pub round: usize,
    pub theta0: f64,
    pub iterations: usize,
    pub sampled: StructureConfig,
    pub sampled_theta: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub best: StructureConfig,
    pub best_theta: f64,
    pub trace: Vec<DescentStep>,
}

/// Threshold descent: search below the current threshold with a random
/// iteration count, and on finding a marked configuration lower the
/// threshold to its phase. The iteration range grows by 6/5 after each
/// miss, capped at `√N`, and resets after each hit. Stops when no support
/// configuration lies below the threshold.
pub fn minimize_compliance(space: &SearchSpace, params: &SearchParams, seed: u64) -> Result<MinimizeResult> {
    params.validate(space.n_el)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = space.support.len();
    let cap = (size as f64).sqrt();
    let mut theta0 = params.theta0;
    let mut m = 1.0f64;
    let mut best: Option<(StructureConfig, f64)> = None;
    let mut trace = Vec::new();
    for round in 0..MAX_DESCENT_ROUNDS {
        let marked = space.marked(theta0)?;
        if marked.is_empty() {
            return match best {
                Some((best, best_theta)) => Ok(MinimizeResult { best, best_theta, trace }),
                None => Err(Error::BudgetExhausted { rounds: round, best: None }),
            };
        }
        let r = rng.random_range(0..m.ceil().max(1.0) as usize);
        let round_params = SearchParams {
            theta0,
            r: Some(r),
            ..*params
        };
        let (layout, oracle) = build_oracle(space, &round_params)?;
        let result = search_with(space, &round_params, &layout, &oracle, marked, r)?;
        let probs: Vec<f64> = result.distribution.iter().map(|(_, p)| *p).collect();
        let sampled = result.distribution[sample_index(&probs, &mut rng)].0.clone();
        let sampled_theta = space.theta(&sampled)?;
        let accepted = sampled_theta < theta0;
        trace.push(DescentStep {
            round,
            theta0,
            iterations: r,
            sampled: sampled.clone(),
            sampled_theta,
            accepted,
        });
        if accepted {
            theta0 = sampled_theta;
            best = Some((sampled, sampled_theta));
            m = 1.0;
        } else {
            m = (m * 6.0 / 5.0).min(cap);
        }
    }
    Err(Error::BudgetExhausted {
        rounds: MAX_DESCENT_ROUNDS,
        best: best.map(|(x, _)| x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{compliance_direct, Material};
    use crate::qsvt::PolySpec;

    fn cfg(s: &str) -> StructureConfig {
        s.parse().unwrap()
    }

    fn two_by_two() -> SearchSpace {
        let domain = MbbDomain::mbb(2, 2, Material::default()).unwrap();
        let filter = Filter::Exact(PolySpec::new(1e-3, 0.3, 1e-3).unwrap());
        SearchSpace::new(&domain, &filter, None).unwrap()
    }

    #[test]
    fn iteration_counts() {
        assert_eq!(iteration_count(16, 3).unwrap(), 1);
        assert_eq!(iteration_count(126, 8).unwrap(), 2);
        assert_eq!(iteration_count(7, 7).unwrap(), 0);
        assert!(matches!(iteration_count(16, 0), Err(Error::InvalidMarkedCount { .. })));
    }

    #[test]
    fn closed_form_values() {
        assert!((success_probability(16, 3, 1) - 0.9494).abs() < 1e-3);
        assert!((success_probability(126, 8, 2) - 0.9144).abs() < 1e-3);
    }

    #[test]
    fn oracle_marks_feasible_set() {
        let space = two_by_two();
        let layout = RegisterLayout::new(&[("c", 4)]).unwrap();
        let marked = space.marked(0.263).unwrap();
        assert_eq!(marked, vec![cfg("1011"), cfg("1101"), cfg("1111")]);
        assert!(space.marked(0.25).unwrap().is_empty());
        let op = exact_phase_oracle(space.thetas(), space.support(), 0.263, &layout).unwrap();
        let m = op.matrix(4).unwrap();
        for x in space.support() {
            let expected = if marked.contains(x) { -1.0 } else { 1.0 };
            assert!((m[(x.index(), x.index())].re - expected).abs() < 1e-15);
        }
        let twice = Operator::sequence(vec![op.clone(), op]).matrix(4).unwrap();
        assert!((twice - nalgebra::DMatrix::identity(16, 16)).norm() < 1e-15);
        let all = space
            .thetas()
            .values()
            .filter(|&&t| t < 0.5)
            .count();
        assert_eq!(space.marked(0.5).unwrap().len(), all);
    }

    #[test]
    fn missing_config_is_rejected() {
        let layout = RegisterLayout::new(&[("c", 2)]).unwrap();
        let mut table = BTreeMap::new();
        table.insert(cfg("00"), 0.3);
        let support = StructureConfig::enumerate(2, None).unwrap();
        assert!(matches!(
            exact_phase_oracle(&table, &support, 0.3, &layout),
            Err(Error::MissingConfig(_))
        ));
    }

    #[test]
    fn diffusion_reflects() {
        let layout = RegisterLayout::new(&[("c", 4)]).unwrap();
        for init in [InitialState::Uniform, InitialState::Dicke(2)] {
            let d = diffusion(init, &layout).unwrap();
            let m = d.matrix(4).unwrap();
            let psi = nalgebra::DVector::from_vec(init.vector(4));
            assert!((&m * &psi - &psi).norm() < 1e-12);
            let mut orth = nalgebra::DVector::from_element(16, Complex64::new(0.0, 0.0));
            orth[3] = Complex64::new(1.0, 0.0);
            orth[5] = Complex64::new(-1.0, 0.0);
            assert!((&m * &orth + &orth).norm() < 1e-12);
            assert!((&m * &m - nalgebra::DMatrix::identity(16, 16)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_search() {
        let space = two_by_two();
        let result = run_grover(&space, &SearchParams::new(0.263).unwrap()).unwrap();
        assert_eq!(result.r_used, 1);
        assert!((result.success_probability - success_probability(16, 3, 1)).abs() < 1e-9);
        let top: Vec<_> = result.ranked().into_iter().take(3).map(|(x, _)| x).collect();
        assert!(top.iter().all(|x| result.marked_set.contains(x)));
        let r0 = run_grover(&space, &SearchParams::new(0.263).unwrap().with_iterations(0)).unwrap();
        assert!(r0.distribution.iter().all(|(_, p)| (p - 1.0 / 16.0).abs() < 1e-12));
    }

    #[test]
    fn synthetic_coherent_oracle_matches_exact() {
        // Two configurations with on-grid phases 1/4 and 3/8 at n_p = 3.
        let layout = RegisterLayout::new(&[("c", 1), ("p", 3), ("h", 1), ("b", 1), ("d", 1), ("g", 1)]).unwrap();
        let t_hi = crate::qae::t_of_theta(0.375);
        let blocks = vec![
            Some(nalgebra::DMatrix::from_element(1, 1, 0.0)),
            Some(nalgebra::DMatrix::from_element(1, 1, t_hi)),
        ];
        let u_sel = crate::blockenc::config_selected_dilation(&blocks, &layout).unwrap();
        let qae = CoherentQae::from_selected(&u_sel, &[1.0, 0.0], 3, layout.clone()).unwrap();
        let mut table = BTreeMap::new();
        table.insert(cfg("0"), 0.25);
        table.insert(cfg("1"), 0.375);
        let support = StructureConfig::enumerate(1, None).unwrap();
        for theta0 in [0.3, 0.4, 0.25] {
            let coherent = coherent_oracle(&qae, theta0).unwrap();
            let exact = exact_phase_oracle(&table, &support, theta0, &layout).unwrap();
            for x in 0..2 {
                let mut a = QuantumState::basis(layout.clone(), &[("c", x)]).unwrap();
                let mut b = a.clone();
                a.apply(&coherent).unwrap();
                b.apply(&exact).unwrap();
                let diff = a
                    .amplitudes()
                    .iter()
                    .zip(b.amplitudes())
                    .map(|(u, v)| (u - v).norm())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-9, "theta0 {theta0}, config {x}: {diff}");
            }
        }
    }

    #[test]
    fn minimize_two_by_two() {
        let domain = MbbDomain::mbb(2, 2, Material::default()).unwrap();
        let space = two_by_two();
        let argmin = space
            .support()
            .iter()
            .filter_map(|x| compliance_direct(&domain, x, 0.0).unwrap().value().map(|c| (x.clone(), c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        for seed in 0..5 {
            let result = minimize_compliance(&space, &SearchParams::new(0.263).unwrap(), seed).unwrap();
            assert_eq!(result.best, argmin, "seed {seed}");
        }
    }

    #[test]
    fn unreachable_threshold_exhausts_budget() {
        let space = two_by_two();
        let err = minimize_compliance(&space, &SearchParams::new(0.25).unwrap(), 0).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { best: None, .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn synthetic(n: usize, marked: &[bool]) -> SearchSpace {
            let table = StructureConfig::enumerate(n, None)
                .unwrap()
                .into_iter()
                .map(|x| {
                    let theta = if marked[x.index()] { 0.26 } else { 0.3 };
                    (x, theta)
                })
                .collect();
            SearchSpace::from_table(n, table, None).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn exact_search_matches_closed_form(marked in proptest::collection::vec(any::<bool>(), 16), r in 0usize..6) {
                let m = marked.iter().filter(|b| **b).count();
                prop_assume!(m > 0);
                let space = synthetic(4, &marked);
                let params = SearchParams::new(0.28).unwrap().with_iterations(r);
                let result = run_grover(&space, &params).unwrap();
                prop_assert!((result.success_probability - success_probability(16, m, r)).abs() < 1e-9);
                let total: f64 = result.distribution.iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }

            #[test]
            fn dicke_search_stays_in_weight(k in 0usize..=5, r in 0usize..4, mask in any::<u32>()) {
                let n = 5;
                let marked: Vec<bool> = (0..32).map(|i| (mask >> i) & 1 == 1).collect();
                let table = StructureConfig::enumerate(n, None)
                    .unwrap()
                    .into_iter()
                    .map(|x| {
                        let theta = if marked[x.index()] { 0.26 } else { 0.3 };
                        (x, theta)
                    })
                    .collect();
                let space = SearchSpace::from_table(n, table, Some(k)).unwrap();
                let params = SearchParams::new(0.28).unwrap().with_volume(k).with_iterations(r);
                let result = run_grover(&space, &params).unwrap();
                prop_assert!(result.leakage < 1e-12);
            }
        }
    }
}
