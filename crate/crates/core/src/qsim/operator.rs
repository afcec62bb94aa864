use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Tolerance for unitarity checks on dense blocks.
pub const UNITARY_TOL: f64 = 1e-10;

/// Largest target set accepted by the dense kernel.
pub const DENSE_QUBIT_LIMIT: usize = 10;

const PARALLEL_MIN_BASES: usize = 1 << 10;

/// A control qubit and the value it must hold for the operator to act.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Control {
    pub qubit: usize,
    pub on: bool,
}

impl Control {
    pub fn closed(qubit: usize) -> Self {
        Control { qubit, on: true }
    }

    pub fn open(qubit: usize) -> Self {
        Control { qubit, on: false }
    }
}

/// Local action of an operator. Local bit `b` of every kernel addresses
/// target qubit `targets[b]`.
#[derive(Debug, Clone)]
pub enum Kernel {
    Dense(Arc<DMatrix<Complex64>>),
    /// `|i⟩ ↦ |table[i]⟩`.
    Permutation(Arc<Vec<usize>>),
    Diagonal(Arc<Vec<Complex64>>),
    /// `2|ψ⟩⟨ψ| − 𝟙`.
    Reflection(Arc<Vec<Complex64>>),
    /// `|j⟩ ↦ 2^{-k/2} Σ_m e^{±2πi jm/2^k} |m⟩`, `+` for the forward transform.
    Fourier { inverse: bool },
    /// `Σ_s |s⟩⟨s| ⊗ U_s`; `None` blocks act as identity. Selector bit `b`
    /// is qubit `selectors[b]`.
    Multiplexed {
        selectors: Vec<usize>,
        blocks: Arc<Vec<Option<DMatrix<Complex64>>>>,
    },
    Sequence(Vec<Operator>),
}

/// A (multi-)controlled operator on a set of target qubits.
#[derive(Debug, Clone)]
pub struct Operator {
    kernel: Kernel,
    targets: Vec<usize>,
    controls: Vec<Control>,
}

fn is_unitary_defect(m: &DMatrix<Complex64>) -> f64 {
    let prod = m.adjoint() * m;
    let n = prod.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - Complex64::new(expected, 0.0)).norm());
        }
    }
    worst
}

fn check_distinct(qubits: &[usize]) -> Result<()> {
    let mut sorted = qubits.to_vec();
    sorted.sort_unstable();
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::OverlappingQubits(pair[0]));
        }
    }
    Ok(())
}

impl Operator {
    fn raw(kernel: Kernel, targets: Vec<usize>) -> Self {
        Operator {
            kernel,
            targets,
            controls: Vec::new(),
        }
    }

    /// Dense unitary on `targets`.
    pub fn dense(matrix: DMatrix<Complex64>, targets: &[usize]) -> Result<Self> {
        check_distinct(targets)?;
        if targets.len() > DENSE_QUBIT_LIMIT {
            return Err(Error::InvalidOperator(format!(
                "dense kernel on {} qubits exceeds {DENSE_QUBIT_LIMIT}",
                targets.len()
            )));
        }
        let dim = 1usize << targets.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidOperator(format!(
                "matrix is {}x{}, targets need {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = is_unitary_defect(&matrix);
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self::raw(Kernel::Dense(Arc::new(matrix)), targets.to_vec()))
    }

    /// Real dense unitary on `targets`.
    pub fn dense_real(matrix: &DMatrix<f64>, targets: &[usize]) -> Result<Self> {
        Self::dense(matrix.map(|v| Complex64::new(v, 0.0)), targets)
    }

    pub fn permutation(table: Vec<usize>, targets: &[usize]) -> Result<Self> {
        check_distinct(targets)?;
        let dim = 1usize << targets.len();
        if table.len() != dim {
            return Err(Error::InvalidOperator(format!(
                "permutation table has {} entries, targets need {dim}",
                table.len()
            )));
        }
        let mut seen = vec![false; dim];
        for &t in &table {
            if t >= dim || seen[t] {
                return Err(Error::InvalidOperator(
                    "permutation table is not a bijection".into(),
                ));
            }
            seen[t] = true;
        }
        Ok(Self::raw(Kernel::Permutation(Arc::new(table)), targets.to_vec()))
    }

    pub fn diagonal(values: Vec<Complex64>, targets: &[usize]) -> Result<Self> {
        check_distinct(targets)?;
        let dim = 1usize << targets.len();
        if values.len() != dim {
            return Err(Error::InvalidOperator(format!(
                "diagonal has {} entries, targets need {dim}",
                values.len()
            )));
        }
        let defect = values.iter().fold(0.0f64, |m, v| m.max((v.norm() - 1.0).abs()));
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self::raw(Kernel::Diagonal(Arc::new(values)), targets.to_vec()))
    }

    /// `2|ψ⟩⟨ψ| − 𝟙` on `targets`.
    pub fn reflection(psi: Vec<Complex64>, targets: &[usize]) -> Result<Self> {
        check_distinct(targets)?;
        let dim = 1usize << targets.len();
        if psi.len() != dim {
            return Err(Error::InvalidOperator(format!(
                "reflection vector has {} entries, targets need {dim}",
                psi.len()
            )));
        }
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNITARY_TOL {
            return Err(Error::NotUnit(norm));
        }
        Ok(Self::raw(Kernel::Reflection(Arc::new(psi)), targets.to_vec()))
    }

    pub fn fourier(targets: &[usize], inverse: bool) -> Result<Self> {
        check_distinct(targets)?;
        Ok(Self::raw(Kernel::Fourier { inverse }, targets.to_vec()))
    }

    /// Block `s` acts on `targets` when the selector qubits hold `s`.
    pub fn multiplexed(
        selectors: &[usize],
        targets: &[usize],
        blocks: Vec<Option<DMatrix<Complex64>>>,
    ) -> Result<Self> {
        let all: Vec<usize> = selectors.iter().chain(targets).copied().collect();
        check_distinct(&all)?;
        if targets.len() > DENSE_QUBIT_LIMIT {
            return Err(Error::InvalidOperator(format!(
                "multiplexed kernel on {} qubits exceeds {DENSE_QUBIT_LIMIT}",
                targets.len()
            )));
        }
        if blocks.len() != 1usize << selectors.len() {
            return Err(Error::InvalidOperator(format!(
                "{} blocks for {} selector qubits",
                blocks.len(),
                selectors.len()
            )));
        }
        let dim = 1usize << targets.len();
        for block in blocks.iter().flatten() {
            if block.nrows() != dim || block.ncols() != dim {
                return Err(Error::InvalidOperator("multiplexed block has wrong shape".into()));
            }
            let defect = is_unitary_defect(block);
            if defect > UNITARY_TOL {
                return Err(Error::NotUnitary(defect));
            }
        }
        Ok(Self::raw(
            Kernel::Multiplexed {
                selectors: selectors.to_vec(),
                blocks: Arc::new(blocks),
            },
            targets.to_vec(),
        ))
    }

    /// Ordered product; the first element acts first.
    pub fn sequence(ops: Vec<Operator>) -> Self {
        Self::raw(Kernel::Sequence(ops), Vec::new())
    }

    pub fn identity() -> Self {
        Self::sequence(Vec::new())
    }

    pub fn h(q: usize) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::dense_real(&DMatrix::from_row_slice(2, 2, &[s, s, s, -s]), &[q])
            .expect("Hadamard is unitary")
    }

    pub fn x(q: usize) -> Self {
        Self::permutation(vec![1, 0], &[q]).expect("X is a permutation")
    }

    pub fn z(q: usize) -> Self {
        Self::diagonal(
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            &[q],
        )
        .expect("Z is unitary")
    }

    /// `diag(e^{-iφ}, e^{iφ})`.
    pub fn rz(q: usize, phi: f64) -> Self {
        Self::diagonal(
            vec![Complex64::from_polar(1.0, -phi), Complex64::from_polar(1.0, phi)],
            &[q],
        )
        .expect("Rz is unitary")
    }

    /// Global phase `e^{iφ}` (implemented on qubit `q`).
    pub fn global_phase(q: usize, phi: f64) -> Self {
        let p = Complex64::from_polar(1.0, phi);
        Self::diagonal(vec![p, p], &[q]).expect("phase is unitary")
    }

    /// Adds controls; fails if a control coincides with any touched qubit.
    pub fn controlled(mut self, controls: &[Control]) -> Result<Self> {
        let mut all = self.qubits();
        all.extend(controls.iter().map(|c| c.qubit));
        check_distinct(&all)?;
        self.controls.extend_from_slice(controls);
        Ok(self)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    /// Every qubit the operator reads or writes, including controls.
    pub fn qubits(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.targets.clone();
        out.extend(self.controls.iter().map(|c| c.qubit));
        match &self.kernel {
            Kernel::Multiplexed { selectors, .. } => out.extend(selectors),
            Kernel::Sequence(ops) => {
                for op in ops {
                    for q in op.qubits() {
                        if !out.contains(&q) {
                            out.push(q);
                        }
                    }
                }
            }
            _ => {}
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let kernel = match &self.kernel {
            Kernel::Dense(m) => Kernel::Dense(Arc::new(m.adjoint())),
            Kernel::Permutation(t) => {
                let mut inv = vec![0; t.len()];
                for (i, &j) in t.iter().enumerate() {
                    inv[j] = i;
                }
                Kernel::Permutation(Arc::new(inv))
            }
            Kernel::Diagonal(d) => Kernel::Diagonal(Arc::new(d.iter().map(|v| v.conj()).collect())),
            Kernel::Reflection(psi) => Kernel::Reflection(psi.clone()),
            Kernel::Fourier { inverse } => Kernel::Fourier { inverse: !inverse },
            Kernel::Multiplexed { selectors, blocks } => Kernel::Multiplexed {
                selectors: selectors.clone(),
                blocks: Arc::new(
                    blocks
                        .iter()
                        .map(|b| b.as_ref().map(|m| m.adjoint()))
                        .collect(),
                ),
            },
            Kernel::Sequence(ops) => Kernel::Sequence(ops.iter().rev().map(|o| o.adjoint()).collect()),
        };
        Operator {
            kernel,
            targets: self.targets.clone(),
            controls: self.controls.clone(),
        }
    }

    /// Worst deviation from unitarity over all structural components.
    pub fn unitarity_defect(&self) -> f64 {
        match &self.kernel {
            Kernel::Dense(m) => is_unitary_defect(m),
            Kernel::Permutation(_) | Kernel::Fourier { .. } => 0.0,
            Kernel::Diagonal(d) => d.iter().fold(0.0f64, |m, v| m.max((v.norm() - 1.0).abs())),
            Kernel::Reflection(psi) => {
                2.0 * (psi.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs()
            }
            Kernel::Multiplexed { blocks, .. } => blocks
                .iter()
                .flatten()
                .map(is_unitary_defect)
                .fold(0.0, f64::max),
            Kernel::Sequence(ops) => ops.iter().map(|o| o.unitarity_defect()).fold(0.0, f64::max),
        }
    }

    /// Applies the operator to a full amplitude vector.
    pub fn apply_to(&self, amps: &mut [Complex64]) -> Result<()> {
        if !amps.len().is_power_of_two() {
            return Err(Error::InvalidOperator("state length is not a power of two".into()));
        }
        let n = amps.len().trailing_zeros() as usize;
        self.apply_with(amps, n, &[])
    }

    fn apply_with(&self, amps: &mut [Complex64], n: usize, outer: &[Control]) -> Result<()> {
        let mut controls: Vec<Control> = outer.to_vec();
        controls.extend_from_slice(&self.controls);
        if let Kernel::Sequence(ops) = &self.kernel {
            for op in ops {
                op.apply_with(amps, n, &controls)?;
            }
            return Ok(());
        }
        let mut touched: Vec<usize> = self.targets.clone();
        touched.extend(controls.iter().map(|c| c.qubit));
        if let Kernel::Multiplexed { selectors, .. } = &self.kernel {
            touched.extend(selectors);
        }
        check_distinct(&touched)?;
        if let Some(&q) = touched.iter().find(|&&q| q >= n) {
            return Err(Error::InvalidOperator(format!(
                "qubit {q} outside a {n}-qubit state"
            )));
        }
        let ctrl_mask = controls.iter().fold(0usize, |m, c| m | (1 << c.qubit));
        let ctrl_val = controls
            .iter()
            .fold(0usize, |m, c| if c.on { m | (1 << c.qubit) } else { m });
        let sweep = Sweep::new(n, &self.targets, ctrl_mask, ctrl_val);
        match &self.kernel {
            Kernel::Dense(m) => sweep.run(amps, |_, buf, scratch| {
                matvec(m, buf, scratch);
                buf.copy_from_slice(scratch);
            }),
            Kernel::Permutation(table) => sweep.run(amps, |_, buf, scratch| {
                for (i, &j) in table.iter().enumerate() {
                    scratch[j] = buf[i];
                }
                buf.copy_from_slice(scratch);
            }),
            Kernel::Diagonal(d) => sweep.run(amps, |_, buf, _| {
                for (a, v) in buf.iter_mut().zip(d.iter()) {
                    *a *= v;
                }
            }),
            Kernel::Reflection(psi) => sweep.run(amps, |_, buf, _| {
                let overlap: Complex64 = psi.iter().zip(buf.iter()).map(|(p, a)| p.conj() * a).sum();
                for (a, p) in buf.iter_mut().zip(psi.iter()) {
                    *a = p * overlap * 2.0 - *a;
                }
            }),
            Kernel::Fourier { inverse } => {
                let len = 1usize << self.targets.len();
                let direction = if *inverse {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                let fft = FftPlanner::new().plan_fft(len, direction);
                let scale = 1.0 / (len as f64).sqrt();
                sweep.run(amps, |_, buf, _| {
                    fft.process(buf);
                    for a in buf.iter_mut() {
                        *a *= scale;
                    }
                })
            }
            Kernel::Multiplexed { selectors, blocks } => sweep.run(amps, |base, buf, scratch| {
                let s = selectors
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (b, &q)| acc | (((base >> q) & 1) << b));
                if let Some(m) = &blocks[s] {
                    matvec(m, buf, scratch);
                    buf.copy_from_slice(scratch);
                }
            }),
            Kernel::Sequence(_) => unreachable!("handled above"),
        }
        Ok(())
    }

    /// Dense matrix of the operator on `n` qubits; for tests and small
    /// verification only.
    pub fn matrix(&self, n: usize) -> Result<DMatrix<Complex64>> {
        if n > 12 {
            return Err(Error::QubitGuard {
                requested: n,
                limit: 12,
            });
        }
        let dim = 1usize << n;
        let mut out = DMatrix::zeros(dim, dim);
        let mut col = vec![Complex64::new(0.0, 0.0); dim];
        for j in 0..dim {
            col.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
            col[j] = Complex64::new(1.0, 0.0);
            self.apply_with(&mut col, n, &[])?;
            for (i, a) in col.iter().enumerate() {
                out[(i, j)] = *a;
            }
        }
        Ok(out)
    }
}

fn matvec(m: &DMatrix<Complex64>, v: &[Complex64], out: &mut [Complex64]) {
    let dim = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..dim {
            let mij = m[(i, j)];
            if mij.re != 0.0 || mij.im != 0.0 {
                acc += mij * v[j];
            }
        }
        *o = acc;
    }
}

/// Enumerates the index groups touched by one operator application: every
/// base index with the target bits cleared and the controls satisfied.
struct Sweep {
    free_bits: Vec<usize>,
    offsets: Vec<usize>,
    ctrl_val: usize,
}

struct SharedAmps(*mut Complex64);

// Distinct bases address disjoint index groups.
unsafe impl Sync for SharedAmps {}
unsafe impl Send for SharedAmps {}

impl SharedAmps {
    fn ptr(&self) -> *mut Complex64 {
        self.0
    }
}

impl Sweep {
    fn new(n: usize, targets: &[usize], ctrl_mask: usize, ctrl_val: usize) -> Self {
        let target_mask = targets.iter().fold(0usize, |m, &q| m | (1 << q));
        let free_bits = (0..n)
            .filter(|b| (target_mask | ctrl_mask) >> b & 1 == 0)
            .collect();
        let offsets = (0..1usize << targets.len())
            .map(|local| {
                targets
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (b, &q)| acc | (((local >> b) & 1) << q))
            })
            .collect();
        Sweep {
            free_bits,
            offsets,
            ctrl_val,
        }
    }

    fn base(&self, j: usize) -> usize {
        self.free_bits
            .iter()
            .enumerate()
            .fold(self.ctrl_val, |acc, (b, &q)| acc | (((j >> b) & 1) << q))
    }

    fn run<F>(&self, amps: &mut [Complex64], kernel: F)
    where
        F: Fn(usize, &mut [Complex64], &mut [Complex64]) + Sync,
    {
        let count = 1usize << self.free_bits.len();
        let dim = self.offsets.len();
        let shared = SharedAmps(amps.as_mut_ptr());
        let body = |range: std::ops::Range<usize>| {
            let mut buf = vec![Complex64::new(0.0, 0.0); dim];
            let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
            let ptr = shared.ptr();
            for j in range {
                let base = self.base(j);
                // SAFETY: index groups of distinct bases are disjoint and in bounds.
                unsafe {
                    for (slot, &off) in buf.iter_mut().zip(&self.offsets) {
                        *slot = *ptr.add(base | off);
                    }
                    kernel(base, &mut buf, &mut scratch);
                    for (slot, &off) in buf.iter().zip(&self.offsets) {
                        *ptr.add(base | off) = *slot;
                    }
                }
            }
        };
        if count >= PARALLEL_MIN_BASES {
            let chunk = (count / (rayon::current_num_threads() * 4)).max(256);
            (0..count.div_ceil(chunk))
                .into_par_iter()
                .for_each(|c| body(c * chunk..((c + 1) * chunk).min(count)));
        } else {
            body(0..count);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn basis(n: usize, i: usize) -> Vec<Complex64> {
        let mut v = vec![c(0.0); 1 << n];
        v[i] = c(1.0);
        v
    }

    #[test]
    fn rejects_non_unitary_dense() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(0.0), c(1.0)]);
        assert!(matches!(Operator::dense(m, &[0]), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn rejects_overlap() {
        assert_eq!(
            Operator::x(0).controlled(&[Control::closed(0)]).unwrap_err(),
            Error::OverlappingQubits(0)
        );
        assert!(Operator::permutation(vec![0, 0], &[0]).is_err());
    }

    #[test]
    fn adjoints_invert() {
        let ops = [
            Operator::permutation(vec![2, 0, 3, 1], &[0, 2]).unwrap(),
            Operator::rz(1, 0.3),
            Operator::fourier(&[0, 1, 2], false).unwrap(),
            Operator::sequence(vec![Operator::h(0), Operator::rz(1, 0.7).controlled(&[Control::open(0)]).unwrap()]),
        ];
        for op in &ops {
            let m = op.matrix(3).unwrap();
            let ma = op.adjoint().matrix(3).unwrap();
            let prod = ma * m;
            assert!((prod - DMatrix::identity(8, 8)).norm() < 1e-12);
        }
    }

    #[test]
    fn controlled_sequence_applies_controls_to_children() {
        let seq = Operator::sequence(vec![Operator::x(0), Operator::x(1)])
            .controlled(&[Control::closed(2)])
            .unwrap();
        let mut v = basis(3, 0b100);
        seq.apply_to(&mut v).unwrap();
        assert_eq!(v[0b111], c(1.0));
        let mut w = basis(3, 0b000);
        seq.apply_to(&mut w).unwrap();
        assert_eq!(w[0], c(1.0));
    }

    #[test]
    fn multiplexed_selects_block() {
        let x = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let op = Operator::multiplexed(&[1], &[0], vec![None, Some(x)]).unwrap();
        let mut v = basis(2, 0b10);
        op.apply_to(&mut v).unwrap();
        assert_eq!(v[0b11], c(1.0));
        let mut w = basis(2, 0b00);
        op.apply_to(&mut w).unwrap();
        assert_eq!(w[0], c(1.0));
    }

    #[test]
    fn parallel_and_serial_paths_agree() {
        let n = 14;
        let mut v: Vec<Complex64> = (0..1 << n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let mut w = v.clone();
        let op = Operator::h(3).controlled(&[Control::closed(7)]).unwrap();
        op.apply_to(&mut v).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..1usize << n {
            if i >> 7 & 1 == 1 && i >> 3 & 1 == 0 {
                let j = i | 1 << 3;
                let (a, b) = (w[i], w[j]);
                w[i] = (a + b) * s;
                w[j] = (a - b) * s;
            }
        }
        let diff = v.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }
}
