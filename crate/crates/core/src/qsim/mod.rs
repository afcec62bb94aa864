//! Dense statevector engine with named registers.
//!
//! Qubit `q` is bit `q` of the amplitude index. A register of width `w` at
//! offset `o` owns qubits `o..o + w`, its least significant bit first, so
//! the register integer is read straight out of the index.

mod operator;

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub use operator::{Control, Kernel, Operator, DENSE_QUBIT_LIMIT, UNITARY_TOL};

/// Largest simulable state.
pub const QUBIT_LIMIT: usize = 26;

/// Tolerance on the state norm.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Register {
    name: String,
    offset: usize,
    width: usize,
}

impl Register {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Global qubit indices, least significant first.
    pub fn qubits(&self) -> Vec<usize> {
        (self.offset..self.offset + self.width).collect()
    }

    /// Global qubit of local bit `bit`.
    pub fn qubit(&self, bit: usize) -> usize {
        assert!(bit < self.width, "bit {bit} outside register {}", self.name);
        self.offset + bit
    }

    pub fn dim(&self) -> usize {
        1 << self.width
    }

    /// Register integer held in basis index `index`.
    pub fn value_of(&self, index: usize) -> usize {
        (index >> self.offset) & ((1 << self.width) - 1)
    }

    /// Basis index with this register set to `value`.
    pub fn place(&self, index: usize, value: usize) -> usize {
        let mask = ((1usize << self.width) - 1) << self.offset;
        (index & !mask) | (value << self.offset)
    }
}

/// Ordered named registers laid out contiguously from qubit 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterLayout {
    registers: Vec<Register>,
    total: usize,
}

impl RegisterLayout {
    pub fn new(spec: &[(&str, usize)]) -> Result<Self> {
        let mut registers = Vec::with_capacity(spec.len());
        let mut offset = 0;
        for &(name, width) in spec {
            if width == 0 {
                return Err(Error::Layout(format!("register '{name}' has width 0")));
            }
            if registers.iter().any(|r: &Register| r.name == name) {
                return Err(Error::Layout(format!("register '{name}' declared twice")));
            }
            registers.push(Register {
                name: name.to_string(),
                offset,
                width,
            });
            offset += width;
        }
        if offset > QUBIT_LIMIT {
            return Err(Error::QubitGuard {
                requested: offset,
                limit: QUBIT_LIMIT,
            });
        }
        Ok(RegisterLayout {
            registers,
            total: offset,
        })
    }

    pub fn total_qubits(&self) -> usize {
        self.total
    }

    pub fn dim(&self) -> usize {
        1 << self.total
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn has(&self, name: &str) -> bool {
        self.registers.iter().any(|r| r.name == name)
    }

    pub fn register(&self, name: &str) -> Result<&Register> {
        self.registers
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Layout(format!("no register named '{name}'")))
    }

    pub fn qubits(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.register(name)?.qubits())
    }

    pub fn qubit(&self, name: &str, bit: usize) -> Result<usize> {
        let reg = self.register(name)?;
        if bit >= reg.width {
            return Err(Error::Layout(format!(
                "bit {bit} outside register '{name}' of width {}",
                reg.width
            )));
        }
        Ok(reg.offset + bit)
    }
}

/// Normalized amplitude vector over a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amps: Vec<Complex64>,
    layout: RegisterLayout,
}

impl QuantumState {
    pub fn zero(layout: RegisterLayout) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.dim()];
        amps[0] = Complex64::new(1.0, 0.0);
        QuantumState { amps, layout }
    }

    /// Basis state with the listed registers set; unlisted registers are 0.
    pub fn basis(layout: RegisterLayout, values: &[(&str, usize)]) -> Result<Self> {
        let mut index = 0;
        for &(name, value) in values {
            let reg = layout.register(name)?;
            if value >= reg.dim() {
                return Err(Error::Layout(format!(
                    "value {value} does not fit register '{name}'"
                )));
            }
            index = reg.place(index, value);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.dim()];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { amps, layout })
    }

    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::Layout(format!(
                "{} amplitudes for a {}-qubit layout",
                amps.len(),
                layout.total_qubits()
            )));
        }
        let state = QuantumState { amps, layout };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotUnit(norm));
        }
        Ok(state)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply(&mut self, op: &Operator) -> Result<()> {
        op.apply_to(&mut self.amps)
    }

    /// Maps `|0⟩_reg ⊗ |rest⟩` to `|ψ⟩_reg ⊗ |rest⟩`.
    pub fn prepare_register(&mut self, name: &str, psi: &[Complex64]) -> Result<()> {
        let reg = self.layout.register(name)?.clone();
        if psi.len() != reg.dim() {
            return Err(Error::Layout(format!(
                "{} amplitudes for register '{name}' of dimension {}",
                psi.len(),
                reg.dim()
            )));
        }
        let psi_norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (psi_norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotUnit(psi_norm));
        }
        let leaked: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| reg.value_of(*i) != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if leaked > NORM_TOL {
            return Err(Error::NonZeroRegister(name.to_string()));
        }
        let source = std::mem::replace(&mut self.amps, vec![Complex64::new(0.0, 0.0); self.layout.dim()]);
        for (i, a) in source.iter().enumerate() {
            if reg.value_of(i) != 0 || (a.re == 0.0 && a.im == 0.0) {
                continue;
            }
            for (v, p) in psi.iter().enumerate() {
                self.amps[reg.place(i, v)] += a * p;
            }
        }
        Ok(())
    }

    /// Exact joint distribution of the named registers, indexed by their
    /// concatenation with the first register most significant.
    pub fn marginal(&self, names: &[&str]) -> Result<Vec<f64>> {
        let regs: Vec<Register> = names
            .iter()
            .map(|n| self.layout.register(n).cloned())
            .collect::<Result<_>>()?;
        let width: usize = regs.iter().map(|r| r.width).sum();
        let mut out = vec![0.0; 1 << width];
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let key = regs.iter().fold(0usize, |acc, r| (acc << r.width) | r.value_of(i));
            out[key] += p;
        }
        Ok(out)
    }

    /// Amplitude vector, zero-padded CSV of `re,im` pairs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        for (i, a) in self.amps.iter().enumerate() {
            out.push_str(&format!("{i},{:e},{:e}\n", a.re, a.im));
        }
        out
    }
}

/// Uniform superposition over the Hamming-weight-`k` strings of `width` bits.
pub fn dicke_vector(width: usize, k: usize) -> Vec<Complex64> {
    let support: Vec<usize> = (0..1usize << width)
        .filter(|i| i.count_ones() as usize == k)
        .collect();
    let amp = Complex64::new(1.0 / (support.len() as f64).sqrt(), 0.0);
    let mut v = vec![Complex64::new(0.0, 0.0); 1 << width];
    for i in support {
        v[i] = amp;
    }
    v
}

pub fn uniform_vector(width: usize) -> Vec<Complex64> {
    let dim = 1usize << width;
    vec![Complex64::new(1.0 / (dim as f64).sqrt(), 0.0); dim]
}

/// Writes a Dicke state into a register that holds `|0…0⟩`.
pub fn prepare_dicke(state: &mut QuantumState, register: &str, k: usize) -> Result<()> {
    let width = state.layout.register(register)?.width;
    if k > width {
        return Err(Error::Layout(format!(
            "Hamming weight {k} exceeds register width {width}"
        )));
    }
    state.prepare_register(register, &dicke_vector(width, k))
}

/// `|i⟩ ↦ |i + shift mod 2^w⟩` on `qubits` (least significant first).
pub fn adder_permutation(shift: i64, qubits: &[usize]) -> Operator {
    let dim = 1i64 << qubits.len();
    let table = (0..dim).map(|i| (i + shift).rem_euclid(dim) as usize).collect();
    Operator::permutation(table, qubits).expect("modular shift is a bijection")
}

pub fn qft(state: &mut QuantumState, register: &str) -> Result<()> {
    let op = Operator::fourier(&state.layout.qubits(register)?, false)?;
    state.apply(&op)
}

/// `|j⟩ ↦ 2^{-n/2} Σ_k e^{-2πi jk/2^n} |k⟩`.
pub fn inverse_qft(state: &mut QuantumState, register: &str) -> Result<()> {
    let op = Operator::fourier(&state.layout.qubits(register)?, true)?;
    state.apply(&op)
}

/// Marginal distribution keyed by bitstring (first register first, each
/// register most significant bit first); zero-probability outcomes omitted.
pub fn measure_distribution(state: &QuantumState, registers: &[&str]) -> Result<BTreeMap<String, f64>> {
    let width: usize = registers
        .iter()
        .map(|r| state.layout.register(r).map(|r| r.width))
        .sum::<Result<usize>>()?;
    Ok(state
        .marginal(registers)?
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 1e-15)
        .map(|(i, p)| (format!("{i:0width$b}"), p))
        .collect())
}

/// Draws `shots` outcome indices from a probability vector.
pub fn sample_counts<R: Rng + ?Sized>(probs: &[f64], shots: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0; probs.len()];
    for _ in 0..shots {
        counts[sample_index(probs, rng)] += 1;
    }
    counts
}

/// One draw from a probability vector; remaining rounding mass goes to the
/// last nonzero outcome.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u: f64 = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

/// `2|ψ⟩⟨ψ| − 𝟙` on `qubits`.
pub fn reflection_about(psi: &[Complex64], qubits: &[usize]) -> Result<Operator> {
    Operator::reflection(psi.to_vec(), qubits)
}
