//! Circuit-level singular value transformation with supplied phases.

use crate::blockenc::{BlockEncoding, SignalProjector};
use crate::error::{Error, Result};
use crate::qsim::{Control, Operator, RegisterLayout};

/// `e^{iφ(2Π − 𝟙)}`, where `Π` projects the ancillas onto zero and the
/// signal register onto its non-excluded indices. Membership in `Π` is
/// flagged into the one-qubit register `q`, which must start and end in
/// `|0⟩`.
pub fn projector_phase(layout: &RegisterLayout, projector: &SignalProjector, phi: f64) -> Result<Operator> {
    let q = layout.qubit("q", 0)?;
    let mut ancilla_zero = Vec::new();
    for name in &projector.ancillas {
        ancilla_zero.extend(layout.qubits(name)?.into_iter().map(Control::open));
    }
    let signal = layout.register(&projector.signal)?.clone();
    let mut flags = vec![Operator::x(q).controlled(&ancilla_zero)?];
    for &i in &projector.excluded {
        if i >= signal.dim() {
            return Err(Error::Layout(format!(
                "excluded index {i} outside register '{}'",
                projector.signal
            )));
        }
        let mut controls = ancilla_zero.clone();
        controls.extend(signal.qubits().iter().enumerate().map(|(b, &qb)| Control {
            qubit: qb,
            on: (i >> b) & 1 == 1,
        }));
        flags.push(Operator::x(q).controlled(&controls)?);
    }
    let mut ops = flags.clone();
    ops.push(Operator::rz(q, phi));
    ops.extend(flags.into_iter().rev());
    Ok(Operator::sequence(ops))
}

/// Alternating sequence of `U`, `U†` and projector phases. With phases
/// `φ_1..φ_n` the operator is, right to left,
/// `Π_{φ1} U ∏ (Π_{φ2j} U† Π_{φ2j+1} U)` for odd `n` and
/// `∏ (Π_{φ2j−1} U† Π_{φ2j} U)` for even `n`.
pub fn circuit_qsvt(be: &BlockEncoding, phases: &[f64]) -> Result<Operator> {
    if phases.is_empty() {
        return Err(Error::EmptyPhases);
    }
    let layout = &be.layout;
    let phase = |phi: f64| projector_phase(layout, &be.projector, phi);
    let u = &be.operator;
    let u_dag = u.adjoint();
    let n = phases.len();
    let mut ops = Vec::with_capacity(2 * n);
    // time order: the rightmost factor acts first
    let pairs = n / 2;
    let odd = n % 2 == 1;
    for j in (1..=pairs).rev() {
        let (first, second) = if odd { (2 * j + 1, 2 * j) } else { (2 * j, 2 * j - 1) };
        ops.push(u.clone());
        ops.push(phase(phases[first - 1])?);
        ops.push(u_dag.clone());
        ops.push(phase(phases[second - 1])?);
    }
    if odd {
        ops.push(u.clone());
        ops.push(phase(phases[0])?);
    }
    Ok(Operator::sequence(ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockenc::{dilate_real, signal_block};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn layout() -> RegisterLayout {
        RegisterLayout::new(&[("d", 2), ("b", 1), ("q", 1)]).unwrap()
    }

    fn projector(excluded: Vec<usize>) -> SignalProjector {
        SignalProjector {
            ancillas: vec!["b".into()],
            signal: "d".into(),
            signal_dim: 4,
            excluded,
        }
    }

    fn random_contraction(seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() - 0.5);
        let sym = (&a + a.transpose()) * 0.5;
        let norm = sym.symmetric_eigenvalues().amax();
        sym * (0.95 / norm)
    }

    fn encoding(m: &DMatrix<f64>) -> BlockEncoding {
        let l = layout();
        let u = dilate_real(m).unwrap();
        BlockEncoding {
            operator: Operator::dense(u, &[0, 1, 2]).unwrap(),
            layout: l,
            projector: projector(vec![]),
            scale: 1.0,
        }
    }

    fn max_dev(a: &DMatrix<Complex64>, b: &DMatrix<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - Complex64::new(*y, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_phase_is_identity() {
        let op = projector_phase(&layout(), &projector(vec![1]), 0.0).unwrap();
        let m = op.matrix(4).unwrap();
        assert!((m - DMatrix::identity(16, 16)).norm() < 1e-14);
    }

    #[test]
    fn quarter_phase_marks_projector() {
        let op = projector_phase(&layout(), &projector(vec![2]), FRAC_PI_2).unwrap();
        let m = op.matrix(4).unwrap();
        for i in 0..8 {
            let d = i & 3;
            let b = i >> 2;
            let in_pi = b == 0 && d != 2;
            let expected = if in_pi { Complex64::i() } else { -Complex64::i() };
            assert!((m[(i, i)] - expected).norm() < 1e-14, "index {i}");
        }
    }

    #[test]
    fn excluded_index_gets_negative_phase() {
        let phi = 0.37;
        let op = projector_phase(&layout(), &projector(vec![3]), phi).unwrap();
        let m = op.matrix(4).unwrap();
        assert!((m[(3, 3)] - Complex64::from_polar(1.0, -phi)).norm() < 1e-14);
        assert!((m[(1, 1)] - Complex64::from_polar(1.0, phi)).norm() < 1e-14);
    }

    #[test]
    fn single_application_returns_block() {
        let m = random_contraction(11);
        let be = encoding(&m);
        let op = circuit_qsvt(&be, &[0.0]).unwrap();
        let block = signal_block(&op, &be.layout, "d").unwrap();
        assert!(max_dev(&block, &m) < 1e-8);
    }

    #[test]
    fn quarter_phase_pair_gives_second_chebyshev() {
        let m = random_contraction(5);
        let be = encoding(&m);
        let op = circuit_qsvt(&be, &[FRAC_PI_2, -FRAC_PI_2]).unwrap();
        let block = signal_block(&op, &be.layout, "d").unwrap();
        let t2 = &m * &m * 2.0 - DMatrix::identity(4, 4);
        assert!(max_dev(&block, &t2) < 1e-8);
    }

    #[test]
    fn empty_phases_rejected_and_empty_product_is_identity() {
        let be = encoding(&random_contraction(1));
        assert_eq!(circuit_qsvt(&be, &[]).unwrap_err(), Error::EmptyPhases);
        let block = signal_block(&Operator::identity(), &be.layout, "d").unwrap();
        assert!(max_dev(&block, &DMatrix::identity(4, 4)) < 1e-15);
    }
}
