//! Physics-informed networks for Burgers: dense layers, a five-qubit
//! angle-encoded quantum layer, the collocation loss, hybrid gradients and
//! training.
//!
//! The quantum layer only uses `RY` and `CNOT`, so its state stays real and
//! is simulated directly on 32 real amplitudes. [`QuantumLayer::circuit`]
//! gives the same program as a general [`Circuit`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{fdm_solve, relative_l2, Boundary, BurgersConfig, GridSpec, InitialCondition};
use crate::qsim::{Circuit, Gate};
use crate::vqa::{minimize, OptimizerConfig};

pub const QUBITS: usize = 5;
pub const SUBLAYERS: usize = 3;
pub const QUANTUM_PARAMS: usize = QUBITS * SUBLAYERS;
/// Step of the finite differences taken on the network inputs.
pub const FD_STEP: f64 = 1e-4;

const DIM: usize = 1 << QUBITS;
type Amps = [f64; DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope(self, y: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - y * y,
            Self::Linear => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Tanh => "tanh",
            Self::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidConfig(
                "dense layer needs nonzero widths".into(),
            ));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::LengthMismatch {
                expected: inputs * outputs,
                got: weights.len(),
            });
        }
        if biases.len() != outputs {
            return Err(Error::LengthMismatch {
                expected: outputs,
                got: biases.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    /// Weights uniform in `±sqrt(6 / (in + out))`, zero biases.
    pub fn glorot(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weights,
            ..Self::zeros(inputs, outputs, activation)
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::WidthMismatch(self.inputs, x.len()));
        }
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| {
                let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                self.activation.apply(z)
            })
            .collect()
    }

    /// Output change for an input change `dx` around a recorded evaluation.
    fn delta(&self, output: &[f64], dx: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(output)
            .map(|(row, &y)| {
                let dz: f64 = row.iter().zip(dx).map(|(w, d)| w * d).sum();
                match self.activation {
                    Activation::Linear => dz,
                    // tanh(z + dz) - tanh(z) = tanh(dz) (1 - y^2) / (1 + y tanh(dz))
                    Activation::Tanh => {
                        let t = dz.tanh();
                        t * (1.0 - y * y) / (1.0 + y * t)
                    }
                }
            })
            .collect()
    }

    fn backward(&self, input: &[f64], output: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let (gw, gb) = grad.split_at_mut(self.inputs * self.outputs);
        let mut dx = vec![0.0; self.inputs];
        for o in 0..self.outputs {
            let dz = dy[o] * self.activation.slope(output[o]);
            gb[o] += dz;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                gw[row + i] += dz * input[i];
                dx[i] += self.weights[row + i] * dz;
            }
        }
        dx
    }
}

/// Map from a layer input to its rotation angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureMap {
    Identity,
    /// `2 n arccos(x)`, defined on `[-1, 1]`.
    ChebyshevArccos(usize),
}

impl FeatureMap {
    pub fn angle(self, x: f64) -> Result<f64> {
        match self {
            Self::Identity => Ok(x),
            Self::ChebyshevArccos(n) => {
                if !(-1.0..=1.0).contains(&x) {
                    return Err(Error::InvalidConfig(format!(
                        "Chebyshev feature map needs inputs in [-1, 1], got {x}"
                    )));
                }
                Ok(2.0 * n as f64 * x.acos())
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::ChebyshevArccos(n) => -2.0 * n as f64 / (1.0 - x * x).sqrt(),
        }
    }

    /// `angle(x + dx) - angle(x)` without cancellation.
    fn angle_delta(self, x: f64, dx: f64) -> Result<f64> {
        match self {
            Self::Identity => Ok(dx),
            Self::ChebyshevArccos(n) => {
                let y = x + dx;
                self.angle(y)?;
                if dx == 0.0 {
                    return Ok(0.0);
                }
                // sin(acos x - acos y) = y sqrt(1 - x^2) - x sqrt(1 - y^2)
                let (sx, sy) = ((1.0 - x * x).sqrt(), (1.0 - y * y).sqrt());
                let sine = dx * (sx + x * (x + y) / (sx + sy));
                Ok(-2.0 * n as f64 * sine.clamp(-1.0, 1.0).asin())
            }
        }
    }

    fn label(self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::ChebyshevArccos(n) => format!("chebyshev:{n}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "identity" => Ok(Self::Identity),
            Some(("chebyshev", n)) => n
                .parse()
                .map(Self::ChebyshevArccos)
                .map_err(|_| Error::Parse(format!("bad Chebyshev order {n:?}"))),
            _ => Err(Error::Parse(format!("unknown feature map {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Input(usize),
    Theta(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum QOp {
    Ry {
        wire: usize,
        angle: f64,
        src: Source,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

fn mask(wire: usize) -> usize {
    1 << (QUBITS - 1 - wire)
}

/// Calls `f(i, i | m)` for every index pair differing in the bit `m`.
#[inline(always)]
fn for_pairs(m: usize, mut f: impl FnMut(usize, usize)) {
    for hi in (0..DIM).step_by(2 * m) {
        for i in hi..hi + m {
            f(i, i + m);
        }
    }
}

fn apply_op(op: &QOp, shift: f64, s: &mut Amps) {
    match *op {
        QOp::Ry { wire, angle, .. } => {
            let (sn, c) = (0.5 * (angle + shift)).sin_cos();
            for_pairs(mask(wire), |i, j| {
                let (a0, a1) = (s[i], s[j]);
                s[i] = c * a0 - sn * a1;
                s[j] = sn * a0 + c * a1;
            });
        }
        QOp::Cnot { control, target } => {
            let mc = mask(control);
            for_pairs(mask(target), |i, j| {
                if i & mc != 0 {
                    s.swap(i, j);
                }
            });
        }
    }
}

/// Applies the transpose of `op`.
fn undo_op(op: &QOp, s: &mut Amps) {
    match *op {
        QOp::Ry { wire, angle, src } => apply_op(
            &QOp::Ry {
                wire,
                angle: -angle,
                src,
            },
            0.0,
            s,
        ),
        QOp::Cnot { .. } => apply_op(op, 0.0, s),
    }
}

fn z_expectations(s: &Amps) -> Vec<f64> {
    (0..QUBITS)
        .map(|w| {
            let m = mask(w);
            s.iter()
                .enumerate()
                .map(|(i, a)| if i & m == 0 { a * a } else { -a * a })
                .sum()
        })
        .collect()
}

/// Diagonal of `sum_q w_q Z_q`.
fn observable(w: &[f64]) -> Amps {
    let mut diag = [0.0; DIM];
    for (i, d) in diag.iter_mut().enumerate() {
        *d = (0..QUBITS)
            .map(|q| if i & mask(q) == 0 { w[q] } else { -w[q] })
            .sum();
    }
    diag
}

#[cfg(test)]
fn expect(s: &Amps, diag: &Amps) -> f64 {
    s.iter().zip(diag).map(|(a, d)| d * a * a).sum()
}

/// Five-qubit angle-cascading layer: inputs become `RY` angles, followed by
/// three sub-layers of `RY(theta)` on every wire and a CNOT ring; the outputs
/// are the per-wire `Z` expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLayer {
    theta: Vec<f64>,
    map: FeatureMap,
    /// Re-encode the inputs before every sub-layer instead of once.
    reupload: bool,
}

#[derive(Debug, Clone)]
struct QuantumTape {
    inputs: Vec<f64>,
    ops: Vec<QOp>,
    /// State before each op.
    states: Vec<Amps>,
    last: Amps,
}

impl QuantumLayer {
    pub fn new(theta: Vec<f64>, map: FeatureMap, reupload: bool) -> Result<Self> {
        if theta.len() != QUANTUM_PARAMS {
            return Err(Error::ParamCount {
                expected: QUANTUM_PARAMS,
                got: theta.len(),
            });
        }
        Ok(Self {
            theta,
            map,
            reupload,
        })
    }

    /// Angles uniform in `[-0.1, 0.1]`.
    pub fn random(map: FeatureMap, reupload: bool, rng: &mut impl Rng) -> Self {
        let theta = (0..QUANTUM_PARAMS)
            .map(|_| rng.random_range(-0.1..=0.1))
            .collect();
        Self {
            theta,
            map,
            reupload,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn map(&self) -> FeatureMap {
        self.map
    }

    pub fn reupload(&self) -> bool {
        self.reupload
    }

    pub fn param_count(&self) -> usize {
        QUANTUM_PARAMS
    }

    fn program(&self, inputs: &[f64]) -> Result<Vec<QOp>> {
        if inputs.len() != QUBITS {
            return Err(Error::WidthMismatch(QUBITS, inputs.len()));
        }
        let angles = inputs
            .iter()
            .map(|&x| self.map.angle(x))
            .collect::<Result<Vec<_>>>()?;
        let mut ops = Vec::new();
        for l in 0..SUBLAYERS {
            if l == 0 || self.reupload {
                for (wire, &angle) in angles.iter().enumerate() {
                    ops.push(QOp::Ry {
                        wire,
                        angle,
                        src: Source::Input(wire),
                    });
                }
            }
            for wire in 0..QUBITS {
                let j = l * QUBITS + wire;
                ops.push(QOp::Ry {
                    wire,
                    angle: self.theta[j],
                    src: Source::Theta(j),
                });
            }
            for control in 0..QUBITS {
                ops.push(QOp::Cnot {
                    control,
                    target: (control + 1) % QUBITS,
                });
            }
        }
        Ok(ops)
    }

    /// The layer's program for these inputs as a general circuit.
    pub fn circuit(&self, inputs: &[f64]) -> Result<Circuit> {
        let gates = self
            .program(inputs)?
            .into_iter()
            .map(|op| match op {
                QOp::Ry { wire, angle, .. } => Gate::Ry(wire, angle),
                QOp::Cnot { control, target } => Gate::Cnot { control, target },
            })
            .collect();
        Circuit::from_gates(QUBITS, gates)
    }

    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let mut s = [0.0; DIM];
        s[0] = 1.0;
        for op in &self.program(inputs)? {
            apply_op(op, 0.0, &mut s);
        }
        Ok(z_expectations(&s))
    }

    fn forward_tape(&self, inputs: &[f64]) -> Result<(Vec<f64>, QuantumTape)> {
        let ops = self.program(inputs)?;
        let mut s = [0.0; DIM];
        s[0] = 1.0;
        let mut states = Vec::with_capacity(ops.len());
        for op in &ops {
            states.push(s);
            apply_op(op, 0.0, &mut s);
        }
        let tape = QuantumTape {
            inputs: inputs.to_vec(),
            ops,
            states,
            last: s,
        };
        Ok((z_expectations(&s), tape))
    }

    /// Output change for an input change `dx`: the state difference is
    /// carried through the circuit next to the recorded states.
    fn delta(&self, tape: &QuantumTape, dx: &[f64]) -> Result<Vec<f64>> {
        let dphi = tape
            .inputs
            .iter()
            .zip(dx)
            .map(|(&x, &d)| self.map.angle_delta(x, d))
            .collect::<Result<Vec<_>>>()?;
        let mut d = [0.0; DIM];
        for (op, psi) in tape.ops.iter().zip(&tape.states) {
            let QOp::Ry { wire, angle, src } = *op else {
                apply_op(op, 0.0, &mut d);
                continue;
            };
            let shift = match src {
                Source::Input(i) => dphi[i],
                Source::Theta(_) => 0.0,
            };
            let (sn, c) = (0.5 * (angle + shift)).sin_cos();
            let q = (0.25 * shift).sin();
            let (sm, cm) = (0.25 * (2.0 * angle + shift)).sin_cos();
            let (dc, ds) = (-2.0 * sm * q, 2.0 * cm * q);
            for_pairs(mask(wire), |i, j| {
                let (d0, d1, p0, p1) = (d[i], d[j], psi[i], psi[j]);
                d[i] = c * d0 - sn * d1 + dc * p0 - ds * p1;
                d[j] = sn * d0 + c * d1 + ds * p0 + dc * p1;
            });
        }
        Ok((0..QUBITS)
            .map(|w| {
                let m = mask(w);
                (0..DIM)
                    .map(|i| {
                        let v = d[i] * (2.0 * tape.last[i] + d[i]);
                        if i & m == 0 {
                            v
                        } else {
                            -v
                        }
                    })
                    .sum()
            })
            .collect())
    }

    /// Parameter-shift derivatives of `sum_q dy_q <Z_q>`: accumulates the
    /// angle part into `dtheta` and returns the input part.
    ///
    /// With `RY(a +- pi/2) = RY(a) (I -+ iY) / sqrt(2)` the two shifted
    /// expectations differ by `2 <psi|O U (-iY) RY(a) psi_k>`, so all shift
    /// differences come out of one backward sweep of `O |psi>`.
    fn backward(&self, tape: &QuantumTape, dy: &[f64], dtheta: &mut [f64]) -> Vec<f64> {
        let diag = observable(dy);
        let mut lam = [0.0; DIM];
        for (l, (d, p)) in lam.iter_mut().zip(diag.iter().zip(&tape.last)) {
            *l = d * p;
        }
        let mut dangle = [0.0; QUBITS];
        for (k, op) in tape.ops.iter().enumerate().rev() {
            let after = tape.states.get(k + 1).unwrap_or(&tape.last);
            if let QOp::Ry { wire, src, .. } = *op {
                let mut d = 0.0;
                for_pairs(mask(wire), |i, j| {
                    d += lam[j] * after[i] - lam[i] * after[j]
                });
                match src {
                    Source::Theta(j) => dtheta[j] += d,
                    Source::Input(i) => dangle[i] += d,
                }
            }
            undo_op(op, &mut lam);
        }
        self.input_part(tape, &dangle)
    }

    /// [`Self::backward`] by propagating both shifted states to the end.
    #[cfg(test)]
    fn backward_shifted(&self, tape: &QuantumTape, dy: &[f64], dtheta: &mut [f64]) -> Vec<f64> {
        let diag = observable(dy);
        let mut dangle = [0.0; QUBITS];
        for (k, op) in tape.ops.iter().enumerate() {
            let QOp::Ry { src, .. } = *op else { continue };
            let mut plus = tape.states[k];
            let mut minus = plus;
            apply_op(op, 0.5 * PI, &mut plus);
            apply_op(op, -0.5 * PI, &mut minus);
            for later in &tape.ops[k + 1..] {
                apply_op(later, 0.0, &mut plus);
                apply_op(later, 0.0, &mut minus);
            }
            let d = 0.5 * (expect(&plus, &diag) - expect(&minus, &diag));
            match src {
                Source::Theta(j) => dtheta[j] += d,
                Source::Input(i) => dangle[i] += d,
            }
        }
        self.input_part(tape, &dangle)
    }

    fn input_part(&self, tape: &QuantumTape, dangle: &[f64]) -> Vec<f64> {
        dangle
            .iter()
            .zip(&tape.inputs)
            .map(|(d, &x)| d * self.map.derivative(x))
            .collect()
    }
}

/// One-qubit reupload model `<Z>` of `V_L W(x) ... V_1 W(x) V_0 |0>`, with
/// `W(x) = RY(x)` and each `V` given as `RZ RY RZ` angles. `blocks.len() - 1`
/// encodings.
pub fn reupload_model(x: f64, blocks: &[[f64; 3]]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::EmptySet("variational blocks"));
    }
    let mut c = Circuit::new(1);
    for (k, [a, b, g]) in blocks.iter().enumerate() {
        if k > 0 {
            c.push(Gate::Ry(0, x))?;
        }
        c.push(Gate::Rz(0, *a))?;
        c.push(Gate::Ry(0, *b))?;
        c.push(Gate::Rz(0, *g))?;
    }
    Ok(c.run()?.z_expectations()[0])
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Quantum(QuantumLayer),
}

impl Layer {
    pub fn inputs(&self) -> usize {
        match self {
            Self::Dense(d) => d.inputs,
            Self::Quantum(_) => QUBITS,
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Self::Dense(d) => d.outputs,
            Self::Quantum(_) => QUBITS,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Dense(d) => d.param_count(),
            Self::Quantum(q) => q.param_count(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dense(d) => d.forward(x),
            Self::Quantum(q) => q.forward(x),
        }
    }

    fn params_into(&self, out: &mut Vec<f64>) {
        match self {
            Self::Dense(d) => {
                out.extend_from_slice(&d.weights);
                out.extend_from_slice(&d.biases);
            }
            Self::Quantum(q) => out.extend_from_slice(&q.theta),
        }
    }

    fn set_params(&mut self, p: &[f64]) {
        match self {
            Self::Dense(d) => {
                let (w, b) = p.split_at(d.weights.len());
                d.weights.copy_from_slice(w);
                d.biases.copy_from_slice(b);
            }
            Self::Quantum(q) => q.theta.copy_from_slice(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub residual: f64,
    pub ic: f64,
    pub bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            residual: 1.0,
            ic: 1.0,
            bc: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum LayerTape {
    Dense { input: Vec<f64>, output: Vec<f64> },
    Quantum(Box<QuantumTape>),
}

#[derive(Debug, Clone)]
struct Tape {
    layers: Vec<LayerTape>,
    output: f64,
}

/// Network `(x, t) -> u` built from dense layers and at most one quantum
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridNet {
    layers: Vec<Layer>,
    weights: LossWeights,
    input_box: Option<[[f64; 2]; 2]>,
}

impl HybridNet {
    pub fn new(layers: Vec<Layer>, weights: LossWeights) -> Result<Self> {
        let (Some(first), Some(last)) = (layers.first(), layers.last()) else {
            return Err(Error::EmptySet("layers"));
        };
        if first.inputs() != 2 {
            return Err(Error::WidthMismatch(2, first.inputs()));
        }
        if last.outputs() != 1 {
            return Err(Error::WidthMismatch(1, last.outputs()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::WidthMismatch(pair[0].outputs(), pair[1].inputs()));
            }
        }
        if layers
            .iter()
            .filter(|l| matches!(l, Layer::Quantum(_)))
            .count()
            > 1
        {
            return Err(Error::InvalidConfig("at most one quantum layer".into()));
        }
        for l in [weights.residual, weights.ic, weights.bc] {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "loss weights must be >= 0, got {l}"
                )));
            }
        }
        Ok(Self {
            layers,
            weights,
            input_box: None,
        })
    }

    /// Tanh dense stack `widths[0] -> ... -> widths[last]` with a linear
    /// output layer.
    pub fn classical(widths: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k + 2 == widths.len() {
                    Activation::Linear
                } else {
                    Activation::Tanh
                };
                Layer::Dense(DenseLayer::glorot(w[0], w[1], act, &mut rng))
            })
            .collect();
        Self::new(layers, LossWeights::default())
    }

    /// `2 -> 20 -> 20 -> 20 -> 20 -> 1`, 1341 parameters.
    pub fn reference_pinn(seed: u64) -> Self {
        Self::classical(&[2, 20, 20, 20, 20, 1], seed).expect("valid reference widths")
    }

    /// `2 -> 20 -> 5 -> quantum -> 20 -> 1`, 321 parameters.
    pub fn reference_hqpinn(seed: u64, map: FeatureMap, reupload: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = vec![
            Layer::Dense(DenseLayer::glorot(2, 20, Activation::Tanh, &mut rng)),
            Layer::Dense(DenseLayer::glorot(20, QUBITS, Activation::Tanh, &mut rng)),
            Layer::Quantum(QuantumLayer::random(map, reupload, &mut rng)),
            Layer::Dense(DenseLayer::glorot(QUBITS, 20, Activation::Tanh, &mut rng)),
            Layer::Dense(DenseLayer::glorot(20, 1, Activation::Linear, &mut rng)),
        ];
        Self::new(layers, LossWeights::default()).expect("valid reference widths")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.weights
    }

    pub fn with_loss_weights(self, weights: LossWeights) -> Result<Self> {
        let input_box = self.input_box;
        Ok(Self {
            input_box,
            ..Self::new(self.layers, weights)?
        })
    }

    /// Rescales `x in [x0, x1]` and `t in [t0, t1]` to `[-1, 1]` before the
    /// first layer. Adds no parameters.
    pub fn with_input_box(mut self, x: [f64; 2], t: [f64; 2]) -> Result<Self> {
        for [lo, hi] in [x, t] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidConfig(format!(
                    "bad input range [{lo}, {hi}]"
                )));
            }
        }
        self.input_box = Some([x, t]);
        Ok(self)
    }

    /// Input box covering the domain of `burgers` over `[0, t_final]`.
    pub fn scaled_to(self, burgers: &BurgersConfig) -> Result<Self> {
        self.with_input_box([0.0, burgers.spec.domain_length()], [0.0, burgers.t_final])
    }

    pub fn input_box(&self) -> Option<[[f64; 2]; 2]> {
        self.input_box
    }

    fn input_scale(&self) -> [f64; 2] {
        match self.input_box {
            Some(b) => b.map(|[lo, hi]| 2.0 / (hi - lo)),
            None => [1.0, 1.0],
        }
    }

    fn inputs(&self, x: f64, t: f64) -> Vec<f64> {
        match self.input_box {
            Some([bx, bt]) => vec![
                2.0 * (x - bx[0]) / (bx[1] - bx[0]) - 1.0,
                2.0 * (t - bt[0]) / (bt[1] - bt[0]) - 1.0,
            ],
            None => vec![x, t],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn is_hybrid(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Quantum(_)))
    }

    /// Parameters layer by layer; dense layers list weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.params_into(&mut out);
        }
        out
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.param_count() {
            return Err(Error::ParamCount {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let mut net = self.clone();
        let mut rest = p;
        for l in &mut net.layers {
            let (head, tail) = rest.split_at(l.param_count());
            l.set_params(head);
            rest = tail;
        }
        Ok(net)
    }

    pub fn forward(&self, x: f64, t: f64) -> Result<f64> {
        let mut v = self.inputs(x, t);
        for l in &self.layers {
            v = l.forward(&v)?;
        }
        Ok(v[0])
    }

    fn tape(&self, x: f64, t: f64) -> Result<Tape> {
        let mut v = self.inputs(x, t);
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    let out = d.forward_unchecked(&v);
                    layers.push(LayerTape::Dense {
                        input: std::mem::replace(&mut v, out.clone()),
                        output: out,
                    });
                }
                Layer::Quantum(q) => {
                    let (out, tape) = q.forward_tape(&v)?;
                    layers.push(LayerTape::Quantum(Box::new(tape)));
                    v = out;
                }
            }
        }
        Ok(Tape {
            layers,
            output: v[0],
        })
    }

    /// `u(x + dx, t + dt) - u(x, t)` around the evaluation recorded in
    /// `tape`, with roundoff proportional to the difference.
    fn delta(&self, tape: &Tape, dx: f64, dt: f64) -> Result<f64> {
        if dx == 0.0 && dt == 0.0 {
            return Ok(0.0);
        }
        let [sx, st] = self.input_scale();
        let mut d = vec![dx * sx, dt * st];
        for (l, lt) in self.layers.iter().zip(&tape.layers) {
            d = match (l, lt) {
                (Layer::Dense(dl), LayerTape::Dense { output, .. }) => dl.delta(output, &d),
                (Layer::Quantum(q), LayerTape::Quantum(qt)) => q.delta(qt, &d)?,
                _ => unreachable!("tape built from this network"),
            };
        }
        Ok(d[0])
    }

    /// Adds `seed * d(output)/d(params)` to `grad`.
    fn backward(&self, tape: &Tape, seed: f64, grad: &mut [f64]) {
        let mut end = grad.len();
        let mut dy = vec![seed];
        for (l, lt) in self.layers.iter().zip(&tape.layers).rev() {
            let start = end - l.param_count();
            let g = &mut grad[start..end];
            dy = match (l, lt) {
                (Layer::Dense(d), LayerTape::Dense { input, output }) => {
                    d.backward(input, output, &dy, g)
                }
                (Layer::Quantum(q), LayerTape::Quantum(qt)) => q.backward(qt, &dy, g),
                _ => unreachable!("tape built from this network"),
            };
            end = start;
        }
    }

    /// Plain-text checkpoint.
    ///
    /// ```text
    /// NET layers=5 lambda=1,1,1 [inputs=x0,x1,t0,t1]
    /// dense 2 20 tanh
    /// <20 rows of 2 weights>
    /// <20 biases>
    /// quantum 5 identity 0
    /// <15 angles>
    /// ```
    pub fn to_text(&self) -> String {
        let fmt = |v: &[f64]| -> String {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let w = self.weights;
        let mut out = format!(
            "NET layers={} lambda={},{},{}\n",
            self.layers.len(),
            w.residual,
            w.ic,
            w.bc
        );
        if let Some([x, t]) = self.input_box {
            out.insert_str(
                out.len() - 1,
                &format!(" inputs={},{},{},{}", x[0], x[1], t[0], t[1]),
            );
        }
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    let _ = writeln!(
                        out,
                        "dense {} {} {}",
                        d.inputs,
                        d.outputs,
                        d.activation.name()
                    );
                    for row in d.weights.chunks(d.inputs) {
                        let _ = writeln!(out, "{}", fmt(row));
                    }
                    let _ = writeln!(out, "{}", fmt(&d.biases));
                }
                Layer::Quantum(q) => {
                    let _ = writeln!(
                        out,
                        "quantum {QUBITS} {} {}",
                        q.map.label(),
                        u8::from(q.reupload)
                    );
                    let _ = writeln!(out, "{}", fmt(&q.theta));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut cursor = 0;
        let mut next = || -> Result<&str> {
            let line = lines
                .get(cursor)
                .ok_or_else(|| Error::Parse("truncated checkpoint".into()))?;
            cursor += 1;
            Ok(line)
        };
        let header = next()?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (count, lambda, inputs) = match fields.as_slice() {
            ["NET", count, lambda, rest @ ..] if rest.len() <= 1 => (
                count
                    .strip_prefix("layers=")
                    .and_then(|v| v.parse::<usize>().ok()),
                lambda.strip_prefix("lambda=").map(parse_numbers),
                rest.first()
                    .map(|r| r.strip_prefix("inputs=").map(parse_numbers)),
            ),
            _ => (None, None, None),
        };
        let (Some(count), Some(Ok(lambda))) = (count, lambda) else {
            return Err(Error::Parse(format!("bad checkpoint header {header:?}")));
        };
        if lambda.len() != 3 {
            return Err(Error::Parse("lambda needs three values".into()));
        }
        let input_box = match inputs {
            None => None,
            Some(Some(Ok(v))) if v.len() == 4 => Some([[v[0], v[1]], [v[2], v[3]]]),
            Some(_) => return Err(Error::Parse(format!("bad input range in {header:?}"))),
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let words: Vec<&str> = next()?.split_whitespace().collect();
            let mut row = |n: usize| -> Result<Vec<f64>> {
                let v = parse_numbers(next()?)?;
                if v.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: v.len(),
                    });
                }
                Ok(v)
            };
            match words.as_slice() {
                ["dense", i, o, act] => {
                    let width = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| Error::Parse(format!("bad width {s:?}")))
                    };
                    let (i, o) = (width(i)?, width(o)?);
                    let act = match *act {
                        "tanh" => Activation::Tanh,
                        "linear" => Activation::Linear,
                        other => return Err(Error::Parse(format!("unknown activation {other:?}"))),
                    };
                    let mut w = Vec::with_capacity(i * o);
                    for _ in 0..o {
                        w.extend(row(i)?);
                    }
                    let b = row(o)?;
                    layers.push(Layer::Dense(DenseLayer::new(i, o, w, b, act)?));
                }
                ["quantum", n, map, re] => {
                    if n.parse::<usize>().ok() != Some(QUBITS) {
                        return Err(Error::Parse(format!(
                            "quantum layers have {QUBITS} qubits, got {n}"
                        )));
                    }
                    let map = FeatureMap::parse(map)?;
                    let theta = row(QUANTUM_PARAMS)?;
                    layers.push(Layer::Quantum(QuantumLayer::new(theta, map, *re == "1")?));
                }
                other => return Err(Error::Parse(format!("bad layer header {other:?}"))),
            }
        }
        let net = Self::new(
            layers,
            LossWeights {
                residual: lambda[0],
                ic: lambda[1],
                bc: lambda[2],
            },
        )?;
        match input_box {
            Some([x, t]) => net.with_input_box(x, t),
            None => Ok(net),
        }
    }
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split([' ', ','])
        .filter(|w| !w.is_empty())
        .map(|w| {
            w.parse()
                .map_err(|_| Error::Parse(format!("bad number {w:?}")))
        })
        .collect()
}

pub fn hybrid_forward(net: &HybridNet, x: f64, t: f64) -> Result<f64> {
    net.forward(x, t)
}

pub fn param_count(net: &HybridNet) -> usize {
    net.param_count()
}
/// Dirichlet `sin(2 pi x)` problem on `[0, 1]` with L=8, nu=0.05, dt=1e-4,
/// T=0.2.
pub fn default_problem() -> BurgersConfig {
    let mut cfg = BurgersConfig::default_experiment();
    cfg.spec = GridSpec::new(
        8,
        1.0,
        Boundary::Dirichlet {
            left: 0.0,
            right: 0.0,
        },
    )
    .expect("valid default grid");
    cfg
}

/// Initial data at any `x` in the domain; custom samples are interpolated
/// linearly, closing on the boundary value (Dirichlet) or the wrap (periodic).
pub fn initial_value(ic: &InitialCondition, spec: &GridSpec, x: f64) -> f64 {
    match ic {
        InitialCondition::SinFull => (2.0 * PI * x / spec.domain_length()).sin(),
        InitialCondition::NegSinHalf => -(PI * x).sin(),
        InitialCondition::Custom(v) => {
            let s = (x / spec.dx()).clamp(0.0, v.len() as f64);
            let i = (s.floor() as usize).min(v.len() - 1);
            let right = match spec.boundary() {
                _ if i + 1 < v.len() => v[i + 1],
                Boundary::Dirichlet { right, .. } => right,
                Boundary::Periodic => v[0],
            };
            v[i] + (s - i as f64) * (right - v[i])
        }
    }
}

/// Interior, boundary and initial points `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSets {
    interior: Vec<[f64; 2]>,
    boundary: Vec<[f64; 2]>,
    initial: Vec<[f64; 2]>,
    seed: u64,
}

fn dirichlet_values(burgers: &BurgersConfig) -> Result<(f64, f64)> {
    match burgers.spec.boundary() {
        Boundary::Dirichlet { left, right } => Ok((left, right)),
        Boundary::Periodic => Err(Error::InvalidConfig(
            "physics-informed training needs Dirichlet boundaries".into(),
        )),
    }
}

impl CollocationSets {
    pub const DEFAULT_INTERIOR: usize = 2000;
    pub const DEFAULT_BOUNDARY: usize = 200;
    pub const DEFAULT_INITIAL: usize = 200;
    pub const DEFAULT_SEED: u64 = 7;

    /// Uniform interior points, boundary points alternating between the two
    /// ends at uniform times, and uniform initial points at `t = 0`.
    pub fn sample(
        burgers: &BurgersConfig,
        interior: usize,
        boundary: usize,
        initial: usize,
        seed: u64,
    ) -> Result<Self> {
        burgers.validate()?;
        dirichlet_values(burgers)?;
        let (len, tf) = (burgers.spec.domain_length(), burgers.t_final);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |hi: f64| {
            if hi > 0.0 {
                rng.random_range(0.0..hi)
            } else {
                0.0
            }
        };
        let interior = (0..interior).map(|_| [uniform(len), uniform(tf)]).collect();
        let boundary = (0..boundary)
            .map(|k| [if k % 2 == 0 { 0.0 } else { len }, uniform(tf)])
            .collect();
        let initial = (0..initial).map(|_| [uniform(len), 0.0]).collect();
        Ok(Self {
            interior,
            boundary,
            initial,
            seed,
        })
    }

    pub fn default_for(burgers: &BurgersConfig) -> Result<Self> {
        Self::sample(
            burgers,
            Self::DEFAULT_INTERIOR,
            Self::DEFAULT_BOUNDARY,
            Self::DEFAULT_INITIAL,
            Self::DEFAULT_SEED,
        )
    }

    /// Explicit point sets, checked against the domain.
    pub fn from_points(
        burgers: &BurgersConfig,
        interior: Vec<[f64; 2]>,
        boundary: Vec<[f64; 2]>,
        initial: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let (len, tf) = (burgers.spec.domain_length(), burgers.t_final);
        let inside = |p: &[f64; 2]| (0.0..=len).contains(&p[0]) && (0.0..=tf).contains(&p[1]);
        let ok = interior.iter().all(inside)
            && boundary
                .iter()
                .all(|p| inside(p) && (p[0] == 0.0 || p[0] == len))
            && initial.iter().all(|p| inside(p) && p[1] == 0.0);
        if !ok {
            return Err(Error::InvalidConfig(
                "collocation point outside its set".into(),
            ));
        }
        Ok(Self {
            interior,
            boundary,
            initial,
            seed: 0,
        })
    }

    pub fn interior(&self) -> &[[f64; 2]] {
        &self.interior
    }

    pub fn boundary(&self) -> &[[f64; 2]] {
        &self.boundary
    }

    pub fn initial(&self) -> &[[f64; 2]] {
        &self.initial
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.interior.is_empty() {
            return Err(Error::EmptySet("interior collocation points"));
        }
        if self.boundary.is_empty() {
            return Err(Error::EmptySet("boundary collocation points"));
        }
        if self.initial.is_empty() {
            return Err(Error::EmptySet("initial collocation points"));
        }
        Ok(())
    }
}

/// Finite-difference stencil for `u_t`, `u_x`, `u_xx` at one point; sample 0
/// is the point itself.
struct Stencil {
    points: Vec<[f64; 2]>,
    ct: Vec<f64>,
    cx: Vec<f64>,
    cxx: Vec<f64>,
}

/// Offsets with first- and second-derivative weights (unscaled by `h`),
/// central inside `[lo, hi]` and one-sided at the edges.
fn axis_stencil(
    v: f64,
    lo: f64,
    hi: f64,
    h: f64,
) -> (&'static [f64], &'static [f64], &'static [f64]) {
    if v - h >= lo && v + h <= hi {
        (&[-1.0, 1.0], &[-0.5, 0.5], &[1.0, 1.0])
    } else if v - h < lo {
        (&[1.0, 2.0, 3.0], &[2.0, -0.5, 0.0], &[-5.0, 4.0, -1.0])
    } else {
        (&[-1.0, -2.0, -3.0], &[-2.0, 0.5, 0.0], &[-5.0, 4.0, -1.0])
    }
}

fn center_weights(v: f64, lo: f64, hi: f64, h: f64) -> (f64, f64) {
    if v - h >= lo && v + h <= hi {
        (0.0, -2.0)
    } else if v - h < lo {
        (-1.5, 2.0)
    } else {
        (1.5, 2.0)
    }
}

impl Stencil {
    fn new(p: [f64; 2], len: f64, tf: f64, h: f64) -> Self {
        let mut s = Stencil {
            points: vec![p],
            ct: vec![0.0],
            cx: vec![0.0],
            cxx: vec![0.0],
        };
        let (c1, c2) = center_weights(p[0], 0.0, len, h);
        s.cx[0] = c1 / h;
        s.cxx[0] = c2 / (h * h);
        let (offs, w1, w2) = axis_stencil(p[0], 0.0, len, h);
        for k in 0..offs.len() {
            s.points.push([p[0] + offs[k] * h, p[1]]);
            s.ct.push(0.0);
            s.cx.push(w1[k] / h);
            s.cxx.push(w2[k] / (h * h));
        }
        let (c1, _) = center_weights(p[1], 0.0, tf, h);
        s.ct[0] = c1 / h;
        let (offs, w1, _) = axis_stencil(p[1], 0.0, tf, h);
        for k in 0..offs.len() {
            if w1[k] != 0.0 {
                s.points.push([p[0], p[1] + offs[k] * h]);
                s.ct.push(w1[k] / h);
                s.cx.push(0.0);
                s.cxx.push(0.0);
            }
        }
        s
    }

    fn dot(c: &[f64], u: &[f64]) -> f64 {
        c.iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// Residual `u_t + u u_x - nu u_xx` from the center value and the
    /// differences `u_s - u_0` (the weights of every derivative sum to zero),
    /// with its sensitivity to each sample.
    fn residual(&self, u0: f64, du: &[f64], nu: f64) -> (f64, Vec<f64>) {
        let ux = Self::dot(&self.cx, du);
        let r = Self::dot(&self.ct, du) + u0 * ux - nu * Self::dot(&self.cxx, du);
        let mut dr: Vec<f64> = (0..du.len())
            .map(|s| self.ct[s] + u0 * self.cx[s] - nu * self.cxx[s])
            .collect();
        dr[0] += ux;
        (r, dr)
    }

    fn offset(&self, s: usize) -> (f64, f64) {
        let (p, q) = (self.points[0], self.points[s]);
        (q[0] - p[0], q[1] - p[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub total: f64,
    pub residual: f64,
    pub bc: f64,
    pub ic: f64,
}

struct Problem<'a> {
    nu: f64,
    len: f64,
    tf: f64,
    left: f64,
    right: f64,
    burgers: &'a BurgersConfig,
}

impl<'a> Problem<'a> {
    fn new(burgers: &'a BurgersConfig, sets: &CollocationSets) -> Result<Self> {
        burgers.validate()?;
        sets.check_nonempty()?;
        let (left, right) = dirichlet_values(burgers)?;
        Ok(Self {
            nu: burgers.nu,
            len: burgers.spec.domain_length(),
            tf: burgers.t_final,
            left,
            right,
            burgers,
        })
    }

    fn boundary_value(&self, x: f64) -> f64 {
        if x < 0.5 * self.len {
            self.left
        } else {
            self.right
        }
    }

    fn initial_value(&self, x: f64) -> f64 {
        initial_value(&self.burgers.initial_condition, &self.burgers.spec, x)
    }

    fn stencil(&self, p: [f64; 2]) -> Stencil {
        Stencil::new(p, self.len, self.tf, FD_STEP)
    }
}

fn combine(w: LossWeights, residual: f64, bc: f64, ic: f64) -> Losses {
    Losses {
        total: w.residual * residual + w.ic * ic + w.bc * bc,
        residual,
        bc,
        ic,
    }
}

pub fn pinn_losses(
    net: &HybridNet,
    sets: &CollocationSets,
    burgers: &BurgersConfig,
) -> Result<Losses> {
    let pb = Problem::new(burgers, sets)?;
    let mut residual = 0.0;
    for &p in &sets.interior {
        let st = pb.stencil(p);
        let center = net.tape(p[0], p[1])?;
        let du = (0..st.points.len())
            .map(|s| {
                let (dx, dt) = st.offset(s);
                net.delta(&center, dx, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        residual += st.residual(center.output, &du, pb.nu).0.powi(2);
    }
    let mut bc = 0.0;
    for &[x, t] in &sets.boundary {
        bc += (net.forward(x, t)? - pb.boundary_value(x)).powi(2);
    }
    let mut ic = 0.0;
    for &[x, t] in &sets.initial {
        ic += (net.forward(x, t)? - pb.initial_value(x)).powi(2);
    }
    Ok(combine(
        net.weights,
        residual / sets.interior.len() as f64,
        bc / sets.boundary.len() as f64,
        ic / sets.initial.len() as f64,
    ))
}

/// Losses together with the gradient of the total over all parameters.
/// Dense layers are differentiated in reverse mode; the quantum layer by
/// the parameter-shift rule on its `Z` expectations.
pub fn loss_and_grad(
    net: &HybridNet,
    sets: &CollocationSets,
    burgers: &BurgersConfig,
) -> Result<(Losses, Vec<f64>)> {
    let pb = Problem::new(burgers, sets)?;
    let w = net.weights;
    let mut grad = vec![0.0; net.param_count()];

    let scale = 2.0 / sets.interior.len() as f64;
    let mut residual = 0.0;
    for &p in &sets.interior {
        let st = pb.stencil(p);
        let tapes = st
            .points
            .iter()
            .map(|q| net.tape(q[0], q[1]))
            .collect::<Result<Vec<_>>>()?;
        let du = (0..st.points.len())
            .map(|s| {
                let (dx, dt) = st.offset(s);
                net.delta(&tapes[0], dx, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        let (r, dr) = st.residual(tapes[0].output, &du, pb.nu);
        residual += r * r;
        for (tape, d) in tapes.iter().zip(dr) {
            net.backward(tape, w.residual * scale * r * d, &mut grad);
        }
    }

    let scale = 2.0 / sets.boundary.len() as f64;
    let mut bc = 0.0;
    for &[x, t] in &sets.boundary {
        let tape = net.tape(x, t)?;
        let e = tape.output - pb.boundary_value(x);
        bc += e * e;
        net.backward(&tape, w.bc * scale * e, &mut grad);
    }

    let scale = 2.0 / sets.initial.len() as f64;
    let mut ic = 0.0;
    for &[x, t] in &sets.initial {
        let tape = net.tape(x, t)?;
        let e = tape.output - pb.initial_value(x);
        ic += e * e;
        net.backward(&tape, w.ic * scale * e, &mut grad);
    }

    let losses = combine(
        w,
        residual / sets.interior.len() as f64,
        bc / sets.boundary.len() as f64,
        ic / sets.initial.len() as f64,
    );
    Ok((losses, grad))
}

pub fn hybrid_grad(
    net: &HybridNet,
    sets: &CollocationSets,
    burgers: &BurgersConfig,
) -> Result<Vec<f64>> {
    Ok(loss_and_grad(net, sets, burgers)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub losses: Losses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<TrainRecord>,
}

impl TrainingHistory {
    pub fn initial(&self) -> &Losses {
        &self.records[0].losses
    }

    pub fn last(&self) -> &Losses {
        &self.records[self.records.len() - 1].losses
    }

    /// Smallest total loss over the run.
    pub fn best_total(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.losses.total)
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `epoch,total,residual,bc,ic`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,residual,bc,ic\n");
        for r in &self.records {
            let l = r.losses;
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.epoch, l.total, l.residual, l.bc, l.ic
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    /// Parameters with the lowest total loss seen.
    pub net: HybridNet,
    pub history: TrainingHistory,
}

/// Full-batch training of the total loss; `opt.iterations` is the number of
/// epochs. Divergence is reported as in [`minimize`].
pub fn train(
    net: &HybridNet,
    sets: &CollocationSets,
    burgers: &BurgersConfig,
    opt: &OptimizerConfig,
) -> Result<Trained> {
    let mut records = Vec::new();
    if opt.iterations == 0 {
        OptimizerConfig {
            iterations: 1,
            ..*opt
        }
        .validate()?;
        records.push(TrainRecord {
            epoch: 0,
            losses: pinn_losses(net, sets, burgers)?,
        });
        return Ok(Trained {
            net: net.clone(),
            history: TrainingHistory { records },
        });
    }
    let result = minimize(
        |p| {
            let (losses, grad) = loss_and_grad(&net.with_params(p)?, sets, burgers)?;
            records.push(TrainRecord {
                epoch: records.len(),
                losses,
            });
            Ok((losses.total, grad))
        },
        &net.params(),
        opt,
    )?;
    Ok(Trained {
        net: net.with_params(&result.params)?,
        history: TrainingHistory { records },
    })
}

/// Network prediction against the explicit finite-difference reference on
/// the reference grid at every stored snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `(x, t, reference, prediction)`.
    pub points: Vec<[f64; 4]>,
    pub relative_l2: f64,
    pub mse: f64,
}

impl Evaluation {
    /// CSV `x,t,u` of the prediction.
    pub fn prediction_csv(&self) -> String {
        self.csv(3)
    }

    /// CSV `x,t,u` of the reference.
    pub fn reference_csv(&self) -> String {
        self.csv(2)
    }

    fn csv(&self, col: usize) -> String {
        let mut out = String::from("x,t,u\n");
        for p in &self.points {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], p[col]);
        }
        out
    }
}

pub fn evaluate_against_fdm(net: &HybridNet, burgers: &BurgersConfig) -> Result<Evaluation> {
    let reference = fdm_solve(burgers)?;
    let mut points = Vec::new();
    for snap in &reference.snapshots {
        for (x, &u) in burgers
            .spec
            .coordinates()
            .into_iter()
            .zip(snap.field.values())
        {
            points.push([x, snap.time, u, net.forward(x, snap.time)?]);
        }
    }
    let refs: Vec<f64> = points.iter().map(|p| p[2]).collect();
    let preds: Vec<f64> = points.iter().map(|p| p[3]).collect();
    Ok(Evaluation {
        relative_l2: relative_l2(&preds, &refs),
        mse: crate::grid::mse(&preds, &refs),
        points,
    })
}
