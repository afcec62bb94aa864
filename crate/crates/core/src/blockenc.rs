//! Block-encoding of the configuration-dependent global stiffness matrix.
//!
//! The register layout is `c` (configuration, `x_1` most significant), `l`
//! (LCU branch), `v` (void flag), `z` (padding flag), `b` (dilation
//! ancilla) and `d` (DoF index). For every configuration basis state the
//! block of `U_K` on `l = v = z = b = 0` is `K(x)/β` with `β = n_el·δ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{element_stiffness, offset_delta, Material, MbbDomain, StructureConfig, SymMatrix};
use crate::qsim::{adder_permutation, Control, Operator, RegisterLayout};

/// Largest spectral norm accepted as a contraction.
pub const CONTRACTION_TOL: f64 = 1e-12;

/// Ancilla registers that must read zero on the signal subspace.
pub const ANCILLAS: [&str; 4] = ["l", "v", "z", "b"];

/// Scale factors of the encoding and the filtered-inverse pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingConstants {
    /// `‖K^el‖₂`.
    pub delta: f64,
    /// `n_el·δ`.
    pub beta: f64,
    /// `y0·μ`.
    pub gamma: f64,
    /// `t(all-solid) / c(all-solid)`.
    pub alpha: f64,
}

/// Register widths of the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegisterSizes {
    pub n_c: usize,
    pub n_l: usize,
    pub n_d: usize,
}

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

impl RegisterSizes {
    pub fn for_domain(domain: &MbbDomain) -> Self {
        let n_dof = domain.n_dof();
        RegisterSizes {
            n_c: domain.n_el(),
            n_l: ceil_log2(domain.n_el()).max(1),
            n_d: 3 + ceil_log2(n_dof.div_ceil(8)),
        }
    }
}

/// Signal subspace: listed ancillas at zero, `signal` register restricted
/// to indices below `signal_dim` that are not `excluded`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalProjector {
    pub ancillas: Vec<String>,
    pub signal: String,
    pub signal_dim: usize,
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BlockEncoding {
    pub operator: Operator,
    pub layout: RegisterLayout,
    pub projector: SignalProjector,
    pub scale: f64,
}

/// `[[M, √(𝟙−MM†)], [√(𝟙−M†M), −M†]]`, the ancilla as the most significant
/// index bit.
pub fn dilate_contraction(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    assert_eq!(m.nrows(), m.ncols(), "dilation needs a square matrix");
    let n = m.nrows();
    let norm = if n == 0 {
        0.0
    } else {
        m.singular_values().max()
    };
    if norm > 1.0 + CONTRACTION_TOL {
        return Err(Error::NormViolation { norm });
    }
    let id = DMatrix::<Complex64>::identity(n, n);
    let left = psd_sqrt(&(&id - m * m.adjoint()));
    let right = psd_sqrt(&(&id - m.adjoint() * m));
    let mut u = DMatrix::zeros(2 * n, 2 * n);
    u.view_mut((0, 0), (n, n)).copy_from(m);
    u.view_mut((0, n), (n, n)).copy_from(&left);
    u.view_mut((n, 0), (n, n)).copy_from(&right);
    u.view_mut((n, n), (n, n)).copy_from(&(-m.adjoint()));
    Ok(u)
}

/// Real-input convenience wrapper of [`dilate_contraction`].
pub fn dilate_real(m: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    dilate_contraction(&m.map(|v| Complex64::new(v, 0.0)))
}

fn psd_sqrt(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Dilation of `K^el/δ` as a 16×16 unitary, local DoF bits low and the
/// dilation ancilla as the top bit.
#[derive(Debug, Clone)]
pub struct ElementEncoding {
    pub unitary: DMatrix<Complex64>,
    pub delta: f64,
}

pub fn element_blockencoding(material: Material) -> ElementEncoding {
    let kel = element_stiffness(material);
    let delta = kel.spectral_norm();
    let unitary =
        dilate_real(&(kel.matrix() / delta)).expect("K^el/δ is a contraction by construction");
    ElementEncoding { unitary, delta }
}

/// `P_{+4} · (P_{+2(n_y−1)} on the low bits, open-controlled on the top
/// bit) · P_{−4}` on `qubits`, tabulated as one permutation.
pub fn gap_permutation(n_y: usize, qubits: &[usize]) -> Result<Operator> {
    let width = qubits.len();
    if width < 4 || (1usize << width) < 2 * (n_y + 1) + 4 {
        return Err(Error::Layout(format!(
            "gap permutation for n_y = {n_y} needs more than {width} qubits"
        )));
    }
    let dim = 1usize << width;
    let low = dim / 2;
    let gap = 2 * (n_y - 1);
    let table = (0..dim)
        .map(|i| {
            let shifted = (i + dim - 4) % dim;
            let opened = if shifted < low {
                (shifted + gap) % low
            } else {
                shifted
            };
            (opened + 4) % dim
        })
        .collect();
    Operator::permutation(table, qubits)
}

/// Standard layout `c, l, v, z, b, d` for the domain.
pub fn blockencoding_layout(domain: &MbbDomain) -> Result<RegisterLayout> {
    let sizes = RegisterSizes::for_domain(domain);
    RegisterLayout::new(&[
        ("c", sizes.n_c),
        ("l", sizes.n_l),
        ("v", 1),
        ("z", 1),
        ("b", 1),
        ("d", sizes.n_d),
    ])
}

/// Uniform preparation of the first `branches` LCU states from `|0⟩`.
fn lcu_prepare(branches: usize, qubits: &[usize]) -> Result<Operator> {
    let dim = 1usize << qubits.len();
    if branches == dim {
        return Ok(Operator::sequence(qubits.iter().map(|&q| Operator::h(q)).collect()));
    }
    // Householder reflection swapping |0⟩ and the uniform state on `branches`.
    let amp = 1.0 / (branches as f64).sqrt();
    let mut w = DVector::zeros(dim);
    w[0] = 1.0;
    for i in 0..branches {
        w[i] -= amp;
    }
    let w2 = w.norm_squared();
    let h = DMatrix::<f64>::identity(dim, dim) - &w * w.transpose() * (2.0 / w2);
    Operator::dense_real(&h, qubits)
}

fn branch_controls(l_qubits: &[usize], branch: usize) -> Vec<Control> {
    l_qubits
        .iter()
        .enumerate()
        .map(|(b, &q)| Control {
            qubit: q,
            on: (branch >> b) & 1 == 1,
        })
        .collect()
}

/// `U_K` in the standard layout.
pub fn global_blockencoding(domain: &MbbDomain) -> Result<BlockEncoding> {
    let layout = blockencoding_layout(domain)?;
    global_blockencoding_in(domain, &layout)
}

/// `U_K` acting on the `c, l, v, z, b, d` registers of a larger layout.
pub fn global_blockencoding_in(domain: &MbbDomain, layout: &RegisterLayout) -> Result<BlockEncoding> {
    let sizes = RegisterSizes::for_domain(domain);
    for (name, width) in [
        ("c", sizes.n_c),
        ("l", sizes.n_l),
        ("v", 1),
        ("z", 1),
        ("b", 1),
        ("d", sizes.n_d),
    ] {
        let reg = layout.register(name)?;
        if reg.width() != width {
            return Err(Error::Layout(format!(
                "register '{name}' has width {}, the domain needs {width}",
                reg.width()
            )));
        }
    }
    let n_el = domain.n_el();
    let c = layout.qubits("c")?;
    let l = layout.qubits("l")?;
    let v = layout.qubit("v", 0)?;
    let z = layout.qubit("z", 0)?;
    let b = layout.qubit("b", 0)?;
    let d = layout.qubits("d")?;

    let element = element_blockencoding(domain.material());
    let prepare = lcu_prepare(n_el, &l)?;
    let gap = gap_permutation(domain.n_y(), &d)?;

    let shift = |sign: i64| -> Result<Vec<Operator>> {
        (1..=n_el)
            .map(|e| {
                adder_permutation(sign * offset_delta(e, domain.n_y()) as i64, &d)
                    .controlled(&branch_controls(&l, e - 1))
            })
            .collect()
    };

    let mut ops = vec![prepare.clone()];
    ops.extend(shift(-1)?);
    for branch in 0..1usize << l.len() {
        let mut controls = branch_controls(&l, branch);
        if branch < n_el {
            controls.push(Control::open(c[n_el - 1 - branch]));
        }
        ops.push(Operator::x(v).controlled(&controls)?);
    }
    ops.push(gap.adjoint());
    ops.push(Operator::x(z));
    let padding: Vec<Control> = d[3..].iter().map(|&q| Control::open(q)).collect();
    ops.push(Operator::x(z).controlled(&padding)?);
    ops.push(Operator::dense(element.unitary.clone(), &[d[0], d[1], d[2], b])?);
    ops.push(gap);
    ops.extend(shift(1)?);
    ops.push(prepare.adjoint());

    Ok(BlockEncoding {
        operator: Operator::sequence(ops),
        layout: layout.clone(),
        projector: SignalProjector {
            ancillas: ANCILLAS.iter().map(|s| s.to_string()).collect(),
            signal: "d".into(),
            signal_dim: domain.n_dof(),
            excluded: domain.fixed_dofs().to_vec(),
        },
        scale: n_el as f64 * element.delta,
    })
}

/// `Σ_x |x⟩⟨x| ⊗ dilate(M(x))` with `c` as selector and `(d, b)` as target,
/// `b` the most significant target bit. Each `M(x)` is zero-padded to the
/// `d` dimension; `None` entries select the identity.
pub fn config_selected_dilation(
    matrices: &[Option<DMatrix<f64>>],
    layout: &RegisterLayout,
) -> Result<Operator> {
    let c = layout.qubits("c")?;
    let d = layout.qubits("d")?;
    let b = layout.qubit("b", 0)?;
    if matrices.len() != 1 << c.len() {
        return Err(Error::Layout(format!(
            "{} matrices for a {}-qubit configuration register",
            matrices.len(),
            c.len()
        )));
    }
    let dim = 1usize << d.len();
    let blocks = matrices
        .iter()
        .map(|m| {
            m.as_ref()
                .map(|m| {
                    if m.nrows() > dim || m.ncols() != m.nrows() {
                        return Err(Error::Layout(format!(
                            "matrix of order {} does not fit register 'd'",
                            m.nrows()
                        )));
                    }
                    let mut padded = DMatrix::zeros(dim, dim);
                    padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
                    dilate_real(&padded)
                })
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut targets = d.clone();
    targets.push(b);
    Operator::multiplexed(&c, &targets, blocks)
}

/// Index of the basis state with the ancillas at zero, `c = config` and
/// `d = row`.
fn signal_index(layout: &RegisterLayout, config: usize, row: usize) -> Result<usize> {
    let c = layout.register("c")?;
    let d = layout.register("d")?;
    Ok(d.place(c.place(0, config), row))
}

/// Signal blocks (over the full `d` range) for the listed configuration
/// integers, extracted by pushing one batched state per column.
pub fn extract_blocks(be: &BlockEncoding, configs: &[usize]) -> Result<Vec<DMatrix<Complex64>>> {
    let layout = &be.layout;
    let d_dim = layout.register("d")?.dim();
    let dim = layout.dim();
    let mut blocks = vec![DMatrix::zeros(d_dim, d_dim); configs.len()];
    for j in 0..d_dim {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        for &x in configs {
            amps[signal_index(layout, x, j)?] = Complex64::new(1.0, 0.0);
        }
        be.operator.apply_to(&mut amps)?;
        for (block, &x) in blocks.iter_mut().zip(configs) {
            for i in 0..d_dim {
                block[(i, j)] = amps[signal_index(layout, x, i)?];
            }
        }
    }
    Ok(blocks)
}

/// Block of `op` on the subspace where every register except `signal`
/// holds zero.
pub fn signal_block(op: &Operator, layout: &RegisterLayout, signal: &str) -> Result<DMatrix<Complex64>> {
    let reg = layout.register(signal)?;
    let dim = reg.dim();
    let mut block = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.dim()];
        amps[reg.place(0, j)] = Complex64::new(1.0, 0.0);
        op.apply_to(&mut amps)?;
        for i in 0..dim {
            block[(i, j)] = amps[reg.place(0, i)];
        }
    }
    Ok(block)
}

fn block_deviation(block: &DMatrix<Complex64>, reference: &SymMatrix, scale: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..block.nrows() {
        for j in 0..block.ncols() {
            let expected = if i < reference.order() && j < reference.order() {
                reference.get(i, j) / scale
            } else {
                0.0
            };
            worst = worst.max((block[(i, j)] - Complex64::new(expected, 0.0)).norm());
        }
    }
    worst
}

/// Max-abs deviation of the signal block for `config` from `reference/β`.
pub fn verify_block(be: &BlockEncoding, config: &StructureConfig, reference: &SymMatrix) -> Result<f64> {
    let block = extract_blocks(be, &[config.index()])?.remove(0);
    Ok(block_deviation(&block, reference, be.scale))
}

/// Worst block deviation from `K(x)/β` over every configuration.
pub fn verify_all_blocks(be: &BlockEncoding, domain: &MbbDomain) -> Result<f64> {
    let configs = StructureConfig::enumerate(domain.n_el(), None)?;
    let indices: Vec<usize> = configs.iter().map(StructureConfig::index).collect();
    let blocks = extract_blocks(be, &indices)?;
    configs
        .iter()
        .zip(&blocks)
        .map(|(config, block)| {
            let k = crate::fem::assemble_global(domain, config)?;
            Ok(block_deviation(block, &k, be.scale))
        })
        .try_fold(0.0f64, |m, r: Result<f64>| Ok(m.max(r?)))
}

/// Unitarity evidence for a composite operator: the worst structural
/// defect of its components and the worst `‖U†U ψ − ψ‖` over random
/// probe states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitarityReport {
    pub structural: f64,
    pub probe: f64,
}

impl UnitarityReport {
    pub fn worst(&self) -> f64 {
        self.structural.max(self.probe)
    }
}

pub fn unitarity_report(op: &Operator, layout: &RegisterLayout, probes: usize, seed: u64) -> Result<UnitarityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adjoint = op.adjoint();
    let mut probe = 0.0f64;
    for _ in 0..probes {
        let mut psi: Vec<Complex64> = (0..layout.dim())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|a| *a /= norm);
        let mut phi = psi.clone();
        op.apply_to(&mut phi)?;
        let after = phi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        probe = probe.max((after - 1.0).abs());
        adjoint.apply_to(&mut phi)?;
        let back = phi
            .iter()
            .zip(&psi)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        probe = probe.max(back);
    }
    Ok(UnitarityReport {
        structural: op.unitarity_defect(),
        probe,
    })
}

/// Full per-configuration matrices `⟨x|U|x⟩` on the non-`c` qubits,
/// extracted in batch. Guarded to at most 10 non-`c` qubits.
pub fn configuration_unitaries(be: &BlockEncoding) -> Result<Vec<DMatrix<Complex64>>> {
    let layout = &be.layout;
    let c = layout.register("c")?.clone();
    let rest = layout.total_qubits() - c.width();
    if rest > 10 {
        return Err(Error::QubitGuard {
            requested: rest,
            limit: 10,
        });
    }
    let rest_dim = 1usize << rest;
    // non-c qubits packed in increasing order
    let spread = |r: usize| -> usize {
        let mut idx = 0;
        let mut bit = 0;
        for q in 0..layout.total_qubits() {
            if q >= c.offset() && q < c.offset() + c.width() {
                continue;
            }
            idx |= ((r >> bit) & 1) << q;
            bit += 1;
        }
        idx
    };
    let mut mats = vec![DMatrix::zeros(rest_dim, rest_dim); c.dim()];
    for j in 0..rest_dim {
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.dim()];
        for x in 0..c.dim() {
            amps[c.place(spread(j), x)] = Complex64::new(1.0, 0.0);
        }
        be.operator.apply_to(&mut amps)?;
        for (x, m) in mats.iter_mut().enumerate() {
            for i in 0..rest_dim {
                m[(i, j)] = amps[c.place(spread(i), x)];
            }
        }
    }
    Ok(mats)
}
