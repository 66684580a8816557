//! Exact statevector simulation with shot sampling.
//!
//! Wire 0 is the most significant bit of the basis index, matching the
//! tensor-train site order: wire `w` of index `i` is `(i >> (n - 1 - w)) & 1`.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest register simulated densely.
pub const MAX_QUBITS: usize = 12;
/// Largest register accepted by [`pauli_decompose`].
pub const MAX_DECOMPOSE_QUBITS: usize = 6;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

fn check_width(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::TooLarge {
            what: "statevector",
            got: n_qubits,
            max: MAX_QUBITS,
        });
    }
    Ok(())
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_width(n_qubits)?;
        let dim = 1 << n_qubits;
        if index >= dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: index,
            });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps amplitudes as given; no normalization is applied.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        check_width(n_qubits)?;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(C64::norm_sqr)
            .sum::<f64>()
            .sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(C64::norm_sqr).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::WidthMismatch(self.n_qubits, other.n_qubits));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Real parts of the amplitudes.
    pub fn real_parts(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.re).collect()
    }

    /// `<Z_w>` for every wire.
    pub fn z_expectations(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut out = vec![0.0; n];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (w, acc) in out.iter_mut().enumerate() {
                if (i >> (n - 1 - w)) & 1 == 0 {
                    *acc += p;
                } else {
                    *acc -= p;
                }
            }
        }
        out
    }

    /// CSV with header `index,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        for (i, a) in self.amplitudes.iter().enumerate() {
            out.push_str(&format!("{i},{:.16e},{:.16e}\n", a.re, a.im));
        }
        out
    }

    fn apply_single(&mut self, op: &SingleOp) {
        let n = self.n_qubits;
        let bit = 1usize << (n - 1 - op.wire);
        let [m00, m01, m10, m11] = op.matrix;
        for i in 0..self.amplitudes.len() {
            if i & bit != 0 || i & op.control_mask != op.control_value {
                continue;
            }
            let j = i | bit;
            let (a0, a1) = (self.amplitudes[i], self.amplitudes[j]);
            self.amplitudes[i] = m00 * a0 + m01 * a1;
            self.amplitudes[j] = m10 * a0 + m11 * a1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> [C64; 4] {
        match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -I, I, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase picked up by `|b>` under this Pauli (the image is `|b ^ flips>`).
    fn phase(self, b: usize) -> C64 {
        match (self, b) {
            (Pauli::I | Pauli::X, _) => ONE,
            (Pauli::Y, 0) => I,
            (Pauli::Y, _) => -I,
            (Pauli::Z, 0) => ONE,
            (Pauli::Z, _) => -ONE,
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of Paulis; element 0 acts on wire 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString(pub Vec<Pauli>);

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        Self(vec![Pauli::I; n_qubits])
    }

    pub fn parse(word: &str) -> Result<Self> {
        word.chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::Parse(format!("unknown Pauli `{other}`"))),
            })
            .collect::<Result<_>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I)
    }

    /// Basis index mask of the wires this string flips.
    fn flip_mask(&self) -> usize {
        let n = self.0.len();
        self.0
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0, |m, (w, _)| m | 1 << (n - 1 - w))
    }

    /// `P|x> = phase(x) |x ^ flip_mask>`.
    fn phase(&self, x: usize) -> C64 {
        let n = self.0.len();
        self.0
            .iter()
            .enumerate()
            .fold(ONE, |acc, (w, p)| acc * p.phase((x >> (n - 1 - w)) & 1))
    }

    /// `<a|P|b>`.
    pub fn matrix_element(&self, a: &StateVector, b: &StateVector) -> C64 {
        let mask = self.flip_mask();
        b.amplitudes
            .iter()
            .enumerate()
            .map(|(x, bx)| a.amplitudes[x ^ mask].conj() * self.phase(x) * bx)
            .sum()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|p| write!(f, "{}", p.symbol()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    H(usize),
    X(usize),
    Z(usize),
    S(usize),
    Sdg(usize),
    Cnot {
        control: usize,
        target: usize,
    },
    /// Arbitrary 2x2 unitary (row-major) on `target`, applied when
    /// `control` is set.
    ControlledUnitary {
        control: usize,
        target: usize,
        matrix: [C64; 4],
    },
    PauliString(PauliString),
    /// `gate` applied only on the branch where `control` equals `value`.
    Controlled {
        control: usize,
        value: bool,
        gate: Box<Gate>,
    },
}

/// Single-wire matrix restricted to basis states matching a control mask.
struct SingleOp {
    wire: usize,
    matrix: [C64; 4],
    control_mask: usize,
    control_value: usize,
}

fn rotation(g: Pauli, theta: f64) -> [C64; 4] {
    let (s, c) = (theta / 2.0).sin_cos();
    match g {
        Pauli::X => [
            C64::new(c, 0.0),
            C64::new(0.0, -s),
            C64::new(0.0, -s),
            C64::new(c, 0.0),
        ],
        Pauli::Y => [
            C64::new(c, 0.0),
            C64::new(-s, 0.0),
            C64::new(s, 0.0),
            C64::new(c, 0.0),
        ],
        Pauli::Z => [C64::new(c, -s), ZERO, ZERO, C64::new(c, s)],
        Pauli::I => Pauli::I.matrix(),
    }
}

impl Gate {
    /// Largest wire index touched.
    pub fn max_wire(&self) -> usize {
        match self {
            Gate::Rx(w, _) | Gate::Ry(w, _) | Gate::Rz(w, _) => *w,
            Gate::H(w) | Gate::X(w) | Gate::Z(w) | Gate::S(w) | Gate::Sdg(w) => *w,
            Gate::Cnot { control, target }
            | Gate::ControlledUnitary {
                control, target, ..
            } => *control.max(target),
            Gate::PauliString(p) => p.len().saturating_sub(1),
            Gate::Controlled { control, gate, .. } => (*control).max(gate.max_wire()),
        }
    }

    /// Same gate acting `offset` wires further down the register.
    pub fn shifted(&self, offset: usize) -> Gate {
        let s = |w: &usize| w + offset;
        match self {
            Gate::Rx(w, t) => Gate::Rx(s(w), *t),
            Gate::Ry(w, t) => Gate::Ry(s(w), *t),
            Gate::Rz(w, t) => Gate::Rz(s(w), *t),
            Gate::H(w) => Gate::H(s(w)),
            Gate::X(w) => Gate::X(s(w)),
            Gate::Z(w) => Gate::Z(s(w)),
            Gate::S(w) => Gate::S(s(w)),
            Gate::Sdg(w) => Gate::Sdg(s(w)),
            Gate::Cnot { control, target } => Gate::Cnot {
                control: s(control),
                target: s(target),
            },
            Gate::ControlledUnitary {
                control,
                target,
                matrix,
            } => Gate::ControlledUnitary {
                control: s(control),
                target: s(target),
                matrix: *matrix,
            },
            Gate::PauliString(p) => {
                let mut word = vec![Pauli::I; offset];
                word.extend_from_slice(&p.0);
                Gate::PauliString(PauliString(word))
            }
            Gate::Controlled {
                control,
                value,
                gate,
            } => Gate::Controlled {
                control: s(control),
                value: *value,
                gate: Box::new(gate.shifted(offset)),
            },
        }
    }

    fn lower(&self, n: usize, mask: usize, value: usize, out: &mut Vec<SingleOp>) {
        let bit = |w: usize| 1usize << (n - 1 - w);
        let mut single = |wire: usize, matrix: [C64; 4]| {
            out.push(SingleOp {
                wire,
                matrix,
                control_mask: mask,
                control_value: value,
            })
        };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Gate::Rx(w, t) => single(*w, rotation(Pauli::X, *t)),
            Gate::Ry(w, t) => single(*w, rotation(Pauli::Y, *t)),
            Gate::Rz(w, t) => single(*w, rotation(Pauli::Z, *t)),
            Gate::H(w) => single(*w, [ONE * h, ONE * h, ONE * h, -ONE * h]),
            Gate::X(w) => single(*w, Pauli::X.matrix()),
            Gate::Z(w) => single(*w, Pauli::Z.matrix()),
            Gate::S(w) => single(*w, [ONE, ZERO, ZERO, I]),
            Gate::Sdg(w) => single(*w, [ONE, ZERO, ZERO, -I]),
            Gate::Cnot { control, target } => {
                Gate::X(*target).lower(n, mask | bit(*control), value | bit(*control), out)
            }
            Gate::ControlledUnitary {
                control,
                target,
                matrix,
            } => out.push(SingleOp {
                wire: *target,
                matrix: *matrix,
                control_mask: mask | bit(*control),
                control_value: value | bit(*control),
            }),
            Gate::PauliString(p) => {
                for (w, &pauli) in p.0.iter().enumerate() {
                    if pauli != Pauli::I {
                        single(w, pauli.matrix());
                    }
                }
            }
            Gate::Controlled {
                control,
                value: on,
                gate,
            } => {
                let b = bit(*control);
                gate.lower(n, mask | b, value | if *on { b } else { 0 }, out);
            }
        }
    }
}

/// Gate list over a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(n_qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let wire = gate.max_wire();
        if wire >= self.n_qubits {
            return Err(Error::WireOutOfRange {
                wire,
                n_qubits: self.n_qubits,
            });
        }
        if let Gate::PauliString(p) = &gate {
            if p.len() != self.n_qubits {
                return Err(Error::WidthMismatch(p.len(), self.n_qubits));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// `U|0...0>`.
    pub fn run(&self) -> Result<StateVector> {
        apply_circuit(&StateVector::zero(self.n_qubits)?, &self.gates)
    }
}

pub fn apply_circuit(state: &StateVector, circuit: &[Gate]) -> Result<StateVector> {
    let n = state.n_qubits;
    let mut out = state.clone();
    let mut ops = Vec::new();
    for gate in circuit {
        let wire = gate.max_wire();
        if wire >= n {
            return Err(Error::WireOutOfRange { wire, n_qubits: n });
        }
        ops.clear();
        gate.lower(n, 0, 0, &mut ops);
        for op in &ops {
            out.apply_single(op);
        }
    }
    Ok(out)
}

/// Normalized amplitudes of `v` and its Euclidean norm.
pub fn amplitude_encode(v: &[f64]) -> Result<(StateVector, f64)> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let amps = v.iter().map(|&x| C64::new(x / norm, 0.0)).collect();
    Ok((StateVector::from_amplitudes(amps)?, norm))
}

/// Dense complex square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { dim: rows, data })
    }

    pub fn from_real(m: &faer::Mat<f64>) -> Result<Self> {
        let (rows, cols) = (m.nrows(), m.ncols());
        let data = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| C64::new(m[(i, j)], 0.0)))
            .collect();
        Self::new(rows, cols, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.dim)
            .all(|i| (0..self.dim).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: C64,
    pub string: PauliString,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliDecomposition {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliDecomposition {
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.string.len() != n_qubits) {
            return Err(Error::WidthMismatch(t.string.len(), n_qubits));
        }
        Ok(Self { n_qubits, terms })
    }

    /// `coeff * I^{(x)n}`.
    pub fn identity(n_qubits: usize, coeff: f64) -> Self {
        Self {
            n_qubits,
            terms: vec![PauliTerm {
                coeff: C64::new(coeff, 0.0),
                string: PauliString::identity(n_qubits),
            }],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// `sum_j c_j p_j` as a dense matrix.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let dim = 1 << self.n_qubits;
        let mut data = vec![ZERO; dim * dim];
        for t in &self.terms {
            let mask = t.string.flip_mask();
            for x in 0..dim {
                data[(x ^ mask) * dim + x] += t.coeff * t.string.phase(x);
            }
        }
        ComplexMatrix { dim, data }
    }

    /// `<a| sum_j c_j p_j |b>`.
    pub fn matrix_element(&self, a: &StateVector, b: &StateVector) -> Result<C64> {
        for s in [a, b] {
            if s.n_qubits != self.n_qubits {
                return Err(Error::WidthMismatch(s.n_qubits, self.n_qubits));
            }
        }
        Ok(self
            .terms
            .iter()
            .map(|t| t.coeff * t.string.matrix_element(a, b))
            .sum())
    }
}

/// Hilbert-Schmidt projection onto all `4^n` Pauli strings; coefficients
/// with modulus at most `1e-12` are dropped.
pub fn pauli_decompose(m: &ComplexMatrix) -> Result<PauliDecomposition> {
    let dim = m.dim;
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_DECOMPOSE_QUBITS {
        return Err(Error::TooLarge {
            what: "Pauli decomposition",
            got: n,
            max: MAX_DECOMPOSE_QUBITS,
        });
    }
    let mut terms = Vec::new();
    let mut word = vec![Pauli::I; n];
    for code in 0..1usize << (2 * n) {
        for (w, p) in word.iter_mut().enumerate() {
            *p = Pauli::ALL[(code >> (2 * (n - 1 - w))) & 3];
        }
        let string = PauliString(word.clone());
        let mask = string.flip_mask();
        // Tr(P^dagger M) with P[x ^ mask, x] = phase(x)
        let trace: C64 = (0..dim)
            .map(|x| string.phase(x).conj() * m.get(x ^ mask, x))
            .sum();
        let coeff = trace / dim as f64;
        if coeff.norm() > 1e-12 {
            terms.push(PauliTerm { coeff, string });
        }
    }
    Ok(PauliDecomposition { n_qubits: n, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotConfig {
    pub shots: usize,
    pub seed: u64,
}

impl ShotConfig {
    pub fn new(shots: usize, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidConfig("shots must be >= 1".into()));
        }
        Ok(Self { shots, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Exact,
    Sampled(ShotConfig),
}

/// Generator for term `j`: the seed offset by `(j + 1)` golden-ratio steps.
pub fn term_rng(seed: u64, term: usize) -> ChaCha8Rng {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(GOLDEN.wrapping_mul(term as u64 + 1)))
}

/// Mean of `shots` draws of a `+-1` outcome with the given exact mean.
fn sample_pm1(mean: f64, shots: usize, rng: &mut ChaCha8Rng) -> f64 {
    let p_plus = ((1.0 + mean) / 2.0).clamp(0.0, 1.0);
    let plus = (0..shots).filter(|_| rng.random::<f64>() < p_plus).count();
    (2.0 * plus as f64 - shots as f64) / shots as f64
}

/// `<psi|A|psi>`. Sampled mode draws `shots` outcomes per non-identity term.
pub fn expectation(
    state: &StateVector,
    obs: &PauliDecomposition,
    shots: Option<ShotConfig>,
) -> Result<f64> {
    if state.n_qubits != obs.n_qubits {
        return Err(Error::WidthMismatch(state.n_qubits, obs.n_qubits));
    }
    let mut total = ZERO;
    let mut sampled = 0.0;
    for (j, t) in obs.terms.iter().enumerate() {
        let exact = t.string.matrix_element(state, state);
        total += t.coeff * exact;
        sampled += match shots {
            Some(cfg) if !t.string.is_identity() => {
                t.coeff.re * sample_pm1(exact.re, cfg.shots, &mut term_rng(cfg.seed, j))
            }
            _ => (t.coeff * exact).re,
        };
    }
    let scale = obs
        .terms
        .iter()
        .map(|t| t.coeff.norm())
        .sum::<f64>()
        .max(1.0);
    if total.im.abs() > 1e-12 * scale {
        return Err(Error::NotHermitian(total.im));
    }
    Ok(if shots.is_some() { sampled } else { total.re })
}

/// Ancilla `<Z>` of the Hadamard-test circuit for `<a|p|b>`: real part, or
/// imaginary part when `imaginary` inserts `S^dagger` before the final `H`.
pub fn hadamard_test_circuit(
    prep_a: &Circuit,
    prep_b: &Circuit,
    string: &PauliString,
    imaginary: bool,
) -> Result<Circuit> {
    let n = prep_a.n_qubits;
    if prep_b.n_qubits != n {
        return Err(Error::WidthMismatch(n, prep_b.n_qubits));
    }
    if string.len() != n {
        return Err(Error::WidthMismatch(string.len(), n));
    }
    let controlled = |value: bool, g: &Gate| Gate::Controlled {
        control: 0,
        value,
        gate: Box::new(g.shifted(1)),
    };
    let mut c = Circuit::new(n + 1);
    c.push(Gate::H(0))?;
    for g in &prep_a.gates {
        c.push(controlled(false, g))?;
    }
    for g in &prep_b.gates {
        c.push(controlled(true, g))?;
    }
    if !string.is_identity() {
        c.push(controlled(true, &Gate::PauliString(string.clone())))?;
    }
    if imaginary {
        c.push(Gate::Sdg(0))?;
    }
    c.push(Gate::H(0))?;
    Ok(c)
}

/// `Re <0|A^dagger M B|0>` with `M = sum_j c_j p_j`.
///
/// Sampled mode runs the ancilla circuit for every needed (term, part) pair
/// and splits the shot budget evenly across them.
pub fn hadamard_test(
    prep_a: &Circuit,
    prep_b: &Circuit,
    op: &PauliDecomposition,
    mode: Readout,
) -> Result<f64> {
    if prep_a.n_qubits != prep_b.n_qubits {
        return Err(Error::WidthMismatch(prep_a.n_qubits, prep_b.n_qubits));
    }
    if op.n_qubits != prep_a.n_qubits {
        return Err(Error::WidthMismatch(op.n_qubits, prep_a.n_qubits));
    }
    let cfg = match mode {
        Readout::Exact => {
            let a = prep_a.run()?;
            let b = prep_b.run()?;
            return Ok(op.matrix_element(&a, &b)?.re);
        }
        Readout::Sampled(cfg) => cfg,
    };
    let mut jobs = Vec::new();
    for (j, t) in op.terms.iter().enumerate() {
        if t.coeff.re != 0.0 {
            jobs.push((j, false, t.coeff.re));
        }
        if t.coeff.im != 0.0 {
            jobs.push((j, true, -t.coeff.im));
        }
    }
    if jobs.is_empty() {
        return Ok(0.0);
    }
    let per_job = (cfg.shots / jobs.len()).max(1);
    let mut total = 0.0;
    for (k, &(j, imaginary, weight)) in jobs.iter().enumerate() {
        let circuit = hadamard_test_circuit(prep_a, prep_b, &op.terms[j].string, imaginary)?;
        let z = circuit.run()?.z_expectations()[0];
        total += weight * sample_pm1(z, per_job, &mut term_rng(cfg.seed, k));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{derivative_matrices, GridSpec};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: &StateVector, b: &[C64], tol: f64) -> bool {
        a.amplitudes
            .iter()
            .zip(b)
            .all(|(x, y)| (x - y).norm() <= tol)
    }

    fn re(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    fn random_circuit(n: usize, depth: usize, rng: &mut ChaCha8Rng) -> Circuit {
        let mut c = Circuit::new(n);
        for _ in 0..depth {
            for w in 0..n {
                c.push(Gate::Ry(w, rng.random_range(-PI..PI))).unwrap();
                c.push(Gate::Rz(w, rng.random_range(-PI..PI))).unwrap();
            }
            for w in 0..n - 1 {
                c.push(Gate::Cnot {
                    control: w,
                    target: w + 1,
                })
                .unwrap();
            }
        }
        c
    }

    fn run(n: usize, gates: Vec<Gate>) -> StateVector {
        Circuit::from_gates(n, gates).unwrap().run().unwrap()
    }

    #[test]
    fn basic_gates() {
        let h = FRAC_1_SQRT_2;
        assert!(close(&run(1, vec![Gate::H(0)]), &re(&[h, h]), 1e-15));
        let s = apply_circuit(
            &StateVector::basis(2, 0b10).unwrap(),
            &[Gate::Cnot {
                control: 0,
                target: 1,
            }],
        )
        .unwrap();
        assert!(close(&s, &re(&[0., 0., 0., 1.]), 0.0));
        assert!(close(&run(1, vec![Gate::Ry(0, PI)]), &re(&[0., 1.]), 1e-15));
    }

    #[test]
    fn wire_zero_is_most_significant() {
        let s = run(3, vec![Gate::X(0)]);
        assert_eq!(s.amplitudes[0b100], ONE);
        assert_eq!(s.z_expectations(), vec![-1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_wires() {
        let mut c = Circuit::new(2);
        assert!(matches!(
            c.push(Gate::Cnot {
                control: 0,
                target: 2
            }),
            Err(Error::WireOutOfRange { wire: 2, .. })
        ));
        let s = StateVector::zero(2).unwrap();
        assert!(apply_circuit(&s, &[Gate::H(5)]).is_err());
        assert!(StateVector::zero(MAX_QUBITS + 1).is_err());
    }

    #[test]
    fn rotation_generators() {
        // exp(-i t/2 G) = cos(t/2) I - i sin(t/2) G
        let t = 0.731;
        for g in [Pauli::X, Pauli::Y, Pauli::Z] {
            let r = rotation(g, t);
            let p = g.matrix();
            for k in 0..4 {
                let id = if k == 0 || k == 3 { 1.0 } else { 0.0 };
                let want = C64::new((t / 2.0).cos() * id, 0.0) - I * (t / 2.0).sin() * p[k];
                assert!((r[k] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn rotation_periodicity_and_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_circuit(4, 3, &mut rng);
        let s = c.run().unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        let shifted: Vec<Gate> = c
            .gates()
            .iter()
            .map(|g| match g {
                Gate::Ry(w, t) => Gate::Ry(*w, t + 4.0 * PI),
                other => other.clone(),
            })
            .collect();
        let t = run(4, shifted);
        assert!(close(&s, &t.amplitudes, 1e-12));
    }

    #[test]
    fn controlled_unitary_and_branch_control() {
        let x = Pauli::X.matrix();
        let a = run(
            2,
            vec![
                Gate::X(0),
                Gate::ControlledUnitary {
                    control: 0,
                    target: 1,
                    matrix: x,
                },
            ],
        );
        assert!(close(&a, &re(&[0., 0., 0., 1.]), 0.0));
        let b = run(
            2,
            vec![Gate::Controlled {
                control: 0,
                value: false,
                gate: Box::new(Gate::X(1)),
            }],
        );
        assert!(close(&b, &re(&[0., 1., 0., 0.]), 0.0));
    }

    #[test]
    fn amplitude_encoding() {
        let (s, n) = amplitude_encode(&[3.0, 4.0]).unwrap();
        assert_eq!(n, 5.0);
        assert!(close(&s, &re(&[0.6, 0.8]), 1e-16));
        let (e, n) = amplitude_encode(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(n, 1.0);
        assert!(close(&e, &re(&[0.0, 0.0, 1.0, 0.0]), 0.0));
        assert_eq!(amplitude_encode(&[0.0; 4]), Err(Error::ZeroVector));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (s, n) = amplitude_encode(&v).unwrap();
        for (a, x) in s.amplitudes.iter().zip(&v) {
            assert!((n * a.re - x).abs() <= 1e-14);
        }
    }

    #[test]
    fn simple_expectations() {
        let z = PauliDecomposition::new(
            1,
            vec![PauliTerm {
                coeff: ONE,
                string: PauliString::parse("Z").unwrap(),
            }],
        )
        .unwrap();
        let zero = StateVector::zero(1).unwrap();
        let plus = run(1, vec![Gate::H(0)]);
        assert_eq!(expectation(&zero, &z, None).unwrap(), 1.0);
        assert!(expectation(&plus, &z, None).unwrap().abs() < 1e-15);
        let y = PauliDecomposition::new(
            1,
            vec![PauliTerm {
                coeff: I,
                string: PauliString::parse("Z").unwrap(),
            }],
        )
        .unwrap();
        assert!(matches!(
            expectation(&zero, &y, None),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn decomposition_examples() {
        let z = ComplexMatrix::new(2, 2, re(&[1., 0., 0., -1.])).unwrap();
        let d = pauli_decompose(&z).unwrap();
        assert_eq!(d.terms().len(), 1);
        assert_eq!(d.terms()[0].string.to_string(), "Z");
        assert_eq!(d.terms()[0].coeff, ONE);

        let eye = ComplexMatrix::new(
            8,
            8,
            (0..64)
                .map(|k| if k % 9 == 0 { ONE } else { ZERO })
                .collect(),
        )
        .unwrap();
        let d = pauli_decompose(&eye).unwrap();
        assert_eq!(d.terms().len(), 1);
        assert_eq!(d.terms()[0].string.to_string(), "III");

        let (d1, _) = derivative_matrices(&GridSpec::periodic(2).unwrap());
        let m = ComplexMatrix::from_real(&d1).unwrap();
        let d = pauli_decompose(&m).unwrap();
        assert!(d.to_matrix().max_abs_diff(&m) <= 1e-12);

        assert!(matches!(
            ComplexMatrix::new(2, 4, vec![ZERO; 8]),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            pauli_decompose(&ComplexMatrix::new(128, 128, vec![ZERO; 128 * 128]).unwrap()),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn pauli_string_matches_its_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_circuit(3, 2, &mut rng).run().unwrap();
        let p = PauliString::parse("YXZ").unwrap();
        let b = apply_circuit(&a, &[Gate::PauliString(p.clone())]).unwrap();
        let direct = a.inner(&b).unwrap();
        assert!((p.matrix_element(&a, &a) - direct).norm() < 1e-14);
    }

    #[test]
    fn hadamard_test_examples() {
        let id = PauliDecomposition::identity(1, 1.0);
        let empty = Circuit::new(1);
        let x = Circuit::from_gates(1, vec![Gate::X(0)]).unwrap();
        assert_eq!(
            hadamard_test(&empty, &empty, &id, Readout::Exact).unwrap(),
            1.0
        );
        assert_eq!(hadamard_test(&empty, &x, &id, Readout::Exact).unwrap(), 0.0);
        assert!(hadamard_test(&empty, &Circuit::new(2), &id, Readout::Exact).is_err());
    }

    #[test]
    fn ancilla_circuit_reads_real_and_imaginary_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let ca = random_circuit(3, 2, &mut rng);
            let cb = random_circuit(3, 2, &mut rng);
            let (a, b) = (ca.run().unwrap(), cb.run().unwrap());
            for word in ["III", "XYZ", "YYI", "ZIX"] {
                let p = PauliString::parse(word).unwrap();
                let want = p.matrix_element(&a, &b);
                let re_z = hadamard_test_circuit(&ca, &cb, &p, false)
                    .unwrap()
                    .run()
                    .unwrap();
                let im_z = hadamard_test_circuit(&ca, &cb, &p, true)
                    .unwrap()
                    .run()
                    .unwrap();
                assert!((re_z.z_expectations()[0] - want.re).abs() < 1e-12);
                assert!((im_z.z_expectations()[0] - want.im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_modes_are_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ca = random_circuit(2, 2, &mut rng);
        let cb = random_circuit(2, 2, &mut rng);
        let (d1, _) = derivative_matrices(&GridSpec::periodic(2).unwrap());
        let op = pauli_decompose(&ComplexMatrix::from_real(&d1).unwrap()).unwrap();
        let cfg = Readout::Sampled(ShotConfig::new(2000, 17).unwrap());
        let a = hadamard_test(&ca, &cb, &op, cfg).unwrap();
        let b = hadamard_test(&ca, &cb, &op, cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let other = hadamard_test(
            &ca,
            &cb,
            &op,
            Readout::Sampled(ShotConfig::new(2000, 18).unwrap()),
        )
        .unwrap();
        assert_ne!(a.to_bits(), other.to_bits());
        assert!(ShotConfig::new(0, 1).is_err());
    }

    #[test]
    fn csv_dump() {
        let csv = run(1, vec![Gate::X(0)]).to_csv();
        assert_eq!(
            csv,
            "index,re,im\n0,0.0000000000000000e0,0.0000000000000000e0\n1,1.0000000000000000e0,0.0000000000000000e0\n"
        );
    }
}
