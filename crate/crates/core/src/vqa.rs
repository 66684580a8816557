//! Variational time marching for Burgers.
//!
//! A trial field is `theta_0 U(theta)|0>`. Each Euler step minimizes
//! `|| theta_0 U(theta)|0> - (I + tau O) f~ ||^2` with
//! `O = nu D2 - diag(f~) D1` built from the frozen previous field `f~`.
//! Expanded, the cost is `theta_0^2 - 2 theta_0 g(theta) + K` where
//! `g = Re <0|U(theta)^dagger (I + tau O) |f~>` and `K = ||(I + tau O) f~||^2`.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{derivative_matrices, matvec, Field, GridSpec};
use crate::qsim::{
    hadamard_test, pauli_decompose, term_rng, Circuit, ComplexMatrix, Gate, PauliDecomposition,
    Readout, ShotConfig, StateVector,
};

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Staircase of two-qubit blocks `RY(theta)` on the upper wire followed by
    /// `CNOT(upper -> lower)`, repeated `layers` times.
    MpsBrick { layers: usize },
    /// `RY` on every wire then a CNOT ring, repeated `layers` times.
    HardwareEfficientCascade { layers: usize },
}

impl Layout {
    pub fn param_count(&self, n_qubits: usize) -> usize {
        match *self {
            Layout::MpsBrick { layers } => n_qubits.saturating_sub(1) * layers,
            Layout::HardwareEfficientCascade { layers } => n_qubits * layers,
        }
    }

    pub fn circuit(&self, n_qubits: usize, theta: &[f64]) -> Result<Circuit> {
        let expected = self.param_count(n_qubits);
        if theta.len() != expected {
            return Err(Error::ParamCount {
                expected,
                got: theta.len(),
            });
        }
        let mut c = Circuit::new(n_qubits);
        let mut params = theta.iter().copied();
        match *self {
            Layout::MpsBrick { layers } => {
                for _ in 0..layers {
                    for q in 0..n_qubits - 1 {
                        c.push(Gate::Ry(q, params.next().expect("counted")))?;
                        c.push(Gate::Cnot {
                            control: q,
                            target: q + 1,
                        })?;
                    }
                }
            }
            Layout::HardwareEfficientCascade { layers } => {
                for _ in 0..layers {
                    for q in 0..n_qubits {
                        c.push(Gate::Ry(q, params.next().expect("counted")))?;
                    }
                    if n_qubits > 1 {
                        cnot_ring(&mut c, n_qubits)?;
                    }
                }
            }
        }
        Ok(c)
    }
}

pub(crate) fn cnot_ring(c: &mut Circuit, n_qubits: usize) -> Result<()> {
    let pairs = if n_qubits == 2 { 1 } else { n_qubits };
    for q in 0..pairs {
        c.push(Gate::Cnot {
            control: q,
            target: (q + 1) % n_qubits,
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    n_qubits: usize,
    layout: Layout,
    theta: Vec<f64>,
    scale: f64,
}

impl Ansatz {
    pub fn new(n_qubits: usize, layout: Layout, theta: Vec<f64>, scale: f64) -> Result<Self> {
        let expected = layout.param_count(n_qubits);
        if theta.len() != expected {
            return Err(Error::ParamCount {
                expected,
                got: theta.len(),
            });
        }
        Ok(Self {
            n_qubits,
            layout,
            theta,
            scale,
        })
    }

    pub fn zeros(n_qubits: usize, layout: Layout, scale: f64) -> Self {
        let theta = vec![0.0; layout.param_count(n_qubits)];
        Self {
            n_qubits,
            layout,
            theta,
            scale,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `[theta_1, ..., theta_K, theta_0]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.theta.clone();
        p.push(self.scale);
        p
    }

    fn with_params(&self, params: &[f64]) -> Self {
        let (theta, scale) = params.split_at(params.len() - 1);
        Self {
            theta: theta.to_vec(),
            scale: scale[0],
            ..self.clone()
        }
    }

    fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn circuit(&self) -> Result<Circuit> {
        self.layout.circuit(self.n_qubits, &self.theta)
    }

    /// Decoded field values `theta_0 Re(U|0>)`.
    pub fn field_values(&self) -> Result<Vec<f64>> {
        let (state, scale) = ansatz_state(self)?;
        Ok(state.real_parts().into_iter().map(|a| scale * a).collect())
    }
}

/// `U(theta)|0...0>` and `theta_0`.
pub fn ansatz_state(a: &Ansatz) -> Result<(StateVector, f64)> {
    Ok((a.circuit()?.run()?, a.scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    Dense,
    /// Cross term read out by Hadamard tests over the Pauli decomposition of
    /// `I + tau O`; `K` is still evaluated densely.
    HadamardTest(Readout),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqaCostSpec {
    pub nu: f64,
    pub tau: f64,
    pub spec: GridSpec,
    /// Frozen parameters of the previous time step.
    pub previous: Ansatz,
    pub mode: CostMode,
}

/// `I + tau (nu D2 - diag(f) D1)`.
pub fn euler_operator(spec: &GridSpec, nu: f64, tau: f64, previous: &[f64]) -> Mat<f64> {
    let (d1, d2) = derivative_matrices(spec);
    let n = spec.n();
    Mat::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + tau * (nu * d2[(i, j)] - previous[i] * d1[(i, j)])
    })
}

enum Overlap {
    Dense(Vec<f64>),
    Hadamard {
        previous: Circuit,
        previous_scale: f64,
        op: PauliDecomposition,
        readout: Readout,
    },
}

/// Cost `theta_0^2 <psi|psi> - 2 theta_0 g(theta) + K` for a fixed target,
/// with everything theta-independent precomputed.
pub struct StepObjective {
    n_qubits: usize,
    layout: Layout,
    k: f64,
    overlap: Overlap,
}

impl StepObjective {
    /// Fit to a fixed vector: `|| theta_0 U|0> - target ||^2`.
    pub fn fit(n_qubits: usize, layout: Layout, target: &[f64]) -> Result<Self> {
        if target.len() != 1 << n_qubits {
            return Err(Error::LengthMismatch {
                expected: 1 << n_qubits,
                got: target.len(),
            });
        }
        Ok(Self {
            n_qubits,
            layout,
            k: target.iter().map(|v| v * v).sum(),
            overlap: Overlap::Dense(target.to_vec()),
        })
    }

    pub fn burgers(cost: &VqaCostSpec) -> Result<Self> {
        let n = cost.previous.n_qubits;
        if cost.spec.n() != 1 << n {
            return Err(Error::WidthMismatch(cost.spec.sites(), n));
        }
        let previous = cost.previous.field_values()?;
        let m = euler_operator(&cost.spec, cost.nu, cost.tau, &previous);
        let target = matvec(&m, &previous);
        let k = target.iter().map(|v| v * v).sum();
        let overlap = match cost.mode {
            CostMode::Dense => Overlap::Dense(target),
            CostMode::HadamardTest(readout) => Overlap::Hadamard {
                previous: cost.previous.circuit()?,
                previous_scale: cost.previous.scale,
                op: pauli_decompose(&ComplexMatrix::from_real(&m)?)?,
                readout,
            },
        };
        Ok(Self {
            n_qubits: n,
            layout: cost.previous.layout,
            k,
            overlap,
        })
    }

    /// The constant `K`.
    pub fn constant(&self) -> f64 {
        self.k
    }

    fn check(&self, a: &Ansatz) -> Result<()> {
        if a.n_qubits != self.n_qubits {
            return Err(Error::WidthMismatch(a.n_qubits, self.n_qubits));
        }
        if a.layout != self.layout {
            return Err(Error::InvalidConfig(
                "ansatz layout differs from the cost's".into(),
            ));
        }
        Ok(())
    }

    /// `g(theta) = Re <psi(theta)| target>`; `salt` decorrelates sampled
    /// readouts of different evaluations.
    fn overlap(&self, a: &Ansatz, salt: usize) -> Result<f64> {
        match &self.overlap {
            Overlap::Dense(target) => {
                let state = a.circuit()?.run()?;
                Ok(state
                    .amplitudes()
                    .iter()
                    .zip(target)
                    .map(|(s, t)| s.re * t)
                    .sum())
            }
            Overlap::Hadamard {
                previous,
                previous_scale,
                op,
                readout,
            } => {
                let readout = match *readout {
                    Readout::Sampled(cfg) if salt > 0 => {
                        let seed = term_rng(cfg.seed, salt).random::<u64>();
                        Readout::Sampled(ShotConfig { seed, ..cfg })
                    }
                    other => other,
                };
                Ok(previous_scale * hadamard_test(&a.circuit()?, previous, op, readout)?)
            }
        }
    }

    fn norm_sqr(&self, a: &Ansatz) -> Result<f64> {
        Ok(a.circuit()?.run()?.norm().powi(2))
    }

    pub fn cost(&self, a: &Ansatz) -> Result<f64> {
        self.check(a)?;
        let th0 = a.scale;
        let norm = match self.overlap {
            Overlap::Dense(_) => self.norm_sqr(a)?,
            Overlap::Hadamard { .. } => 1.0,
        };
        Ok(th0 * th0 * norm - 2.0 * th0 * self.overlap(a, 0)? + self.k)
    }

    /// `theta_0` minimizing the cost at fixed `theta`.
    pub fn optimal_scale(&self, a: &Ansatz) -> Result<f64> {
        self.check(a)?;
        Ok(self.overlap(a, 0)? / self.norm_sqr(a)?)
    }

    /// Gradient over `[theta_1..theta_K, theta_0]`.
    ///
    /// `<psi|psi>` is an expectation value and takes the two-term rule with
    /// shifts of `pi/2`. `g` is linear in `U(theta)`, so its dependence on
    /// each angle has frequency one half and the rule uses shifts of `pi`
    /// with weight `1/4`. The two are combined by the product rule; the
    /// `theta_0` entry is analytic.
    pub fn gradient(&self, a: &Ansatz) -> Result<Vec<f64>> {
        self.check(a)?;
        let th0 = a.scale;
        let dense = matches!(self.overlap, Overlap::Dense(_));
        let k = a.theta.len();
        let mut grad = Vec::with_capacity(k + 1);
        for j in 0..k {
            let shifted = |delta: f64| {
                let mut t = a.theta.clone();
                t[j] += delta;
                a.with_theta(t)
            };
            let dg = (self.overlap(&shifted(PI), 2 * j + 1)?
                - self.overlap(&shifted(-PI), 2 * j + 2)?)
                / 4.0;
            let dn = if dense {
                (self.norm_sqr(&shifted(FRAC_PI_2))? - self.norm_sqr(&shifted(-FRAC_PI_2))?) / 2.0
            } else {
                0.0
            };
            grad.push(th0 * th0 * dn - 2.0 * th0 * dg);
        }
        let norm = if dense { self.norm_sqr(a)? } else { 1.0 };
        grad.push(2.0 * th0 * norm - 2.0 * self.overlap(a, 2 * k + 1)?);
        Ok(grad)
    }
}

pub fn burgers_step_cost(a: &Ansatz, cost: &VqaCostSpec) -> Result<f64> {
    StepObjective::burgers(cost)?.cost(a)
}

/// Parameter-shift gradient of the Burgers step cost: `K + 1` entries, the
/// last being `d/d theta_0`.
pub fn param_shift_grad(a: &Ansatz, cost: &VqaCostSpec) -> Result<Vec<f64>> {
    StepObjective::burgers(cost)?.gradient(a)
}

/// Two-term parameter-shift rule for an expectation value `f` of a circuit
/// whose angles enter through `exp(-i theta G / 2)` with `G^2 = I`:
/// `df/dtheta_j = [f(theta + pi/2 e_j) - f(theta - pi/2 e_j)] / 2`.
pub fn param_shift<F>(f: F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        t[j] = theta[j] + FRAC_PI_2;
        let plus = f(&t)?;
        t[j] = theta[j] - FRAC_PI_2;
        let minus = f(&t)?;
        t[j] = theta[j];
        grad.push((plus - minus) / 2.0);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    GradientDescent {
        eta: f64,
    },
    Adam {
        eta: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub iterations: usize,
    /// Stop once the cost falls to this value.
    pub tolerance: f64,
}

/// Consecutive cost increases that count as divergence.
pub const DIVERGENCE_RISES: usize = 10;

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(0.05, 500, 1e-10)
    }
}

impl OptimizerConfig {
    pub fn adam(eta: f64, iterations: usize, tolerance: f64) -> Self {
        Self {
            method: Method::Adam {
                eta,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            iterations,
            tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = match self.method {
            Method::GradientDescent { eta } => eta,
            Method::Adam {
                eta,
                beta1,
                beta2,
                eps,
            } => {
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                    return Err(Error::InvalidConfig(
                        "Adam needs beta1, beta2 in [0, 1) and eps > 0".into(),
                    ));
                }
                eta
            }
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be > 0, got {eta}"
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    /// Lowest-cost iterate seen.
    pub params: Vec<f64>,
    pub cost: f64,
    /// Cost before each update, then after the last one.
    pub history: Vec<f64>,
}

/// First-order minimization of `f`, which returns the cost and gradient.
///
/// Stops at `tolerance` or after `iterations` updates. Fails with
/// [`Error::Diverged`] on a non-finite cost, or after at least
/// [`DIVERGENCE_RISES`] consecutive increases that leave the cost above its
/// starting value.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<Optimized>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let (mut cost, mut grad) = f(&x)?;
    let mut history = vec![cost];
    let mut best = (cost, x.clone());
    let mut rises = 0;
    for t in 1..=cfg.iterations {
        if cost <= cfg.tolerance {
            break;
        }
        match cfg.method {
            Method::GradientDescent { eta } => {
                for (xi, gi) in x.iter_mut().zip(&grad) {
                    *xi -= eta * gi;
                }
            }
            Method::Adam {
                eta,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(t as i32);
                let c2 = 1.0 - beta2.powi(t as i32);
                for i in 0..x.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    x[i] -= eta * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
        let previous = cost;
        (cost, grad) = f(&x)?;
        history.push(cost);
        if cost < best.0 {
            best = (cost, x.clone());
        }
        rises = if cost > previous || !cost.is_finite() {
            rises + 1
        } else {
            0
        };
        if !cost.is_finite() || (rises >= DIVERGENCE_RISES && cost > history[0]) {
            return Err(Error::Diverged { rises, history });
        }
    }
    Ok(Optimized {
        params: best.1,
        cost: best.0,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqaSolveConfig {
    pub layout: Layout,
    pub nu: f64,
    pub tau: f64,
    pub steps: usize,
    pub mode: CostMode,
    pub optimizer: OptimizerConfig,
    /// Optimizer for loading the initial condition into the ansatz.
    pub fit: OptimizerConfig,
    /// Extra fits from uniformly random angles; the best fit is kept.
    pub fit_restarts: usize,
    pub seed: u64,
}

impl Default for VqaSolveConfig {
    fn default() -> Self {
        Self {
            layout: Layout::HardwareEfficientCascade { layers: 3 },
            nu: 0.05,
            tau: 1e-3,
            steps: 5,
            mode: CostMode::Dense,
            optimizer: OptimizerConfig::default(),
            fit: OptimizerConfig::adam(0.01, 3000, 1e-12),
            fit_restarts: 4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqaStep {
    pub ansatz: Ansatz,
    pub field: Field,
    /// Cost at the warm start, before any update.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqaSolution {
    /// Entry 0 is the fitted initial condition.
    pub steps: Vec<VqaStep>,
}

impl VqaSolution {
    /// CSV with header `step,iteration,cost`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("step,iteration,cost\n");
        for (s, step) in self.steps.iter().enumerate() {
            for (i, c) in step.history.iter().enumerate() {
                out.push_str(&format!("{s},{i},{c:.16e}\n"));
            }
        }
        out
    }
}

fn optimize(
    objective: &StepObjective,
    start: &Ansatz,
    cfg: &OptimizerConfig,
) -> Result<(Ansatz, Optimized)> {
    let run = minimize(
        |p| {
            let a = start.with_params(p);
            Ok((objective.cost(&a)?, objective.gradient(&a)?))
        },
        &start.params(),
        cfg,
    )?;
    Ok((start.with_params(&run.params), run))
}

/// Loads `target` into the ansatz: a warm start from small angles seeded by
/// `seed`, then `restarts` further attempts from uniform angles in
/// `[-pi, pi]`. Returns the best fit and its cost history.
pub fn fit_ansatz(
    n_qubits: usize,
    layout: Layout,
    target: &[f64],
    cfg: &OptimizerConfig,
    restarts: usize,
    seed: u64,
) -> Result<(Ansatz, Optimized)> {
    let objective = StepObjective::fit(n_qubits, layout, target)?;
    let norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    let count = layout.param_count(n_qubits);
    let mut best: Option<(Ansatz, Optimized)> = None;
    for attempt in 0..=restarts {
        let mut rng = if attempt == 0 {
            ChaCha8Rng::seed_from_u64(seed)
        } else {
            term_rng(seed, attempt)
        };
        let span = if attempt == 0 { 0.1 } else { PI };
        let theta = (0..count).map(|_| rng.random_range(-span..=span)).collect();
        let start = Ansatz::new(n_qubits, layout, theta, norm)?;
        let (a, run) = optimize(&objective, &start, cfg)?;
        if best.as_ref().is_none_or(|(_, b)| run.cost < b.cost) {
            best = Some((a, run));
        }
        if best.as_ref().is_some_and(|(_, b)| b.cost <= cfg.tolerance) {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

pub fn vqa_burgers_solve(init: &Field, cfg: &VqaSolveConfig) -> Result<VqaSolution> {
    let spec = *init.spec();
    let n = spec.sites();
    if !(cfg.tau > 0.0 && cfg.nu >= 0.0) {
        return Err(Error::InvalidConfig("need tau > 0 and nu >= 0".into()));
    }
    let (fitted, run) = fit_ansatz(
        n,
        cfg.layout,
        init.values(),
        &cfg.fit,
        cfg.fit_restarts,
        cfg.seed,
    )?;
    let mut steps = vec![VqaStep {
        field: Field::new(spec, fitted.field_values()?)?,
        ansatz: fitted,
        initial_cost: run.history[0],
        final_cost: run.cost,
        history: run.history,
    }];
    for _ in 0..cfg.steps {
        let previous = steps.last().expect("non-empty").ansatz.clone();
        let cost = VqaCostSpec {
            nu: cfg.nu,
            tau: cfg.tau,
            spec,
            previous: previous.clone(),
            mode: cfg.mode,
        };
        let objective = StepObjective::burgers(&cost)?;
        let (a, run) = optimize(&objective, &previous, &cfg.optimizer)?;
        steps.push(VqaStep {
            field: Field::new(spec, a.field_values()?)?,
            ansatz: a,
            initial_cost: run.history[0],
            final_cost: run.cost,
            history: run.history,
        });
    }
    Ok(VqaSolution { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fdm_step_unchecked;
    use crate::qsim::{expectation, PauliString, PauliTerm, C64};

    fn random_ansatz(n: usize, layout: Layout, seed: u64) -> Ansatz {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..layout.param_count(n))
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        Ansatz::new(n, layout, theta, rng.random_range(0.5..2.0)).unwrap()
    }

    fn cost_spec(previous: Ansatz, tau: f64, mode: CostMode) -> VqaCostSpec {
        VqaCostSpec {
            nu: 0.05,
            tau,
            spec: GridSpec::periodic(previous.n_qubits()).unwrap(),
            previous,
            mode,
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(Layout::MpsBrick { layers: 3 }.param_count(6), 15);
        assert_eq!(
            Layout::HardwareEfficientCascade { layers: 3 }.param_count(5),
            15
        );
        assert!(matches!(
            Ansatz::new(6, Layout::MpsBrick { layers: 3 }, vec![0.0; 14], 1.0),
            Err(Error::ParamCount {
                expected: 15,
                got: 14
            })
        ));
    }

    #[test]
    fn zero_angles_give_ground_state() {
        for layout in [
            Layout::MpsBrick { layers: 3 },
            Layout::HardwareEfficientCascade { layers: 2 },
        ] {
            let (s, scale) = ansatz_state(&Ansatz::zeros(6, layout, 1.0)).unwrap();
            assert_eq!(scale, 1.0);
            assert_eq!(s.amplitudes()[0], C64::new(1.0, 0.0));
            assert!((s.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn brick_rotates_every_wire() {
        // With all angles pi/2 no basis amplitude pattern is confined to
        // wire 0 = |0>.
        let layout = Layout::MpsBrick { layers: 2 };
        let a = Ansatz::new(3, layout, vec![FRAC_PI_2; 4], 1.0).unwrap();
        let s = a.circuit().unwrap().run().unwrap();
        assert!(s.z_expectations()[0] < 0.99);
    }

    #[test]
    fn scale_is_linear() {
        let a = random_ansatz(3, Layout::HardwareEfficientCascade { layers: 2 }, 1);
        let mut b = a.clone();
        b.scale *= 2.0;
        let (fa, fb) = (a.field_values().unwrap(), b.field_values().unwrap());
        assert!(fa.iter().zip(&fb).all(|(x, y)| (2.0 * x - y).abs() < 1e-15));
    }

    #[test]
    fn identical_state_at_zero_tau_costs_nothing() {
        let a = random_ansatz(3, Layout::HardwareEfficientCascade { layers: 3 }, 2);
        let c = burgers_step_cost(&a, &cost_spec(a.clone(), 0.0, CostMode::Dense)).unwrap();
        assert!(c.abs() <= 1e-12, "{c}");
    }

    #[test]
    fn cost_matches_fdm_residual() {
        let prev = random_ansatz(3, Layout::HardwareEfficientCascade { layers: 3 }, 3);
        let a = random_ansatz(3, Layout::HardwareEfficientCascade { layers: 3 }, 4);
        let spec = GridSpec::periodic(3).unwrap();
        let f_prev = Field::new(spec, prev.field_values().unwrap()).unwrap();
        let next = fdm_step_unchecked(&f_prev, 0.05, 1e-3);
        let residual: f64 = a
            .field_values()
            .unwrap()
            .iter()
            .zip(next.values())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let c = burgers_step_cost(&a, &cost_spec(prev, 1e-3, CostMode::Dense)).unwrap();
        assert!((c - residual).abs() <= 1e-10);
    }

    #[test]
    fn dense_and_hadamard_modes_agree() {
        let layout = Layout::HardwareEfficientCascade { layers: 2 };
        let prev = random_ansatz(3, layout, 5);
        let a = random_ansatz(3, layout, 6);
        let dense = burgers_step_cost(&a, &cost_spec(prev.clone(), 0.01, CostMode::Dense)).unwrap();
        let ht = burgers_step_cost(
            &a,
            &cost_spec(prev, 0.01, CostMode::HadamardTest(Readout::Exact)),
        )
        .unwrap();
        assert!((dense - ht).abs() <= 1e-10, "{dense} vs {ht}");
    }

    #[test]
    fn single_qubit_shift_rule() {
        let z = PauliDecomposition::new(
            1,
            vec![PauliTerm {
                coeff: C64::new(1.0, 0.0),
                string: PauliString::parse("Z").unwrap(),
            }],
        )
        .unwrap();
        let f = |t: &[f64]| {
            let s = Circuit::from_gates(1, vec![Gate::Ry(0, t[0])])?.run()?;
            expectation(&s, &z, None)
        };
        assert!(param_shift(f, &[0.0]).unwrap()[0].abs() <= 1e-12);
        assert!((param_shift(f, &[FRAC_PI_2]).unwrap()[0] + 1.0).abs() <= 1e-12);
    }

    fn finite_difference(obj: &StepObjective, a: &Ansatz, h: f64) -> Vec<f64> {
        let p = a.params();
        (0..p.len())
            .map(|j| {
                let mut q = p.clone();
                q[j] += h;
                let plus = obj.cost(&a.with_params(&q)).unwrap();
                q[j] -= 2.0 * h;
                let minus = obj.cost(&a.with_params(&q)).unwrap();
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, layout) in [
            (7, Layout::MpsBrick { layers: 3 }),
            (8, Layout::HardwareEfficientCascade { layers: 2 }),
        ] {
            for mode in [CostMode::Dense, CostMode::HadamardTest(Readout::Exact)] {
                let prev = random_ansatz(3, layout, seed);
                let a = random_ansatz(3, layout, seed + 100);
                let obj = StepObjective::burgers(&cost_spec(prev, 1e-2, mode)).unwrap();
                let g = obj.gradient(&a).unwrap();
                let fd = finite_difference(&obj, &a, 1e-5);
                assert_eq!(g.len(), layout.param_count(3) + 1);
                for (x, y) in g.iter().zip(&fd) {
                    assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn optimal_scale_beats_probes() {
        let layout = Layout::HardwareEfficientCascade { layers: 2 };
        let prev = random_ansatz(3, layout, 9);
        let a = random_ansatz(3, layout, 10);
        let obj = StepObjective::burgers(&cost_spec(prev, 1e-2, CostMode::Dense)).unwrap();
        let best = obj.optimal_scale(&a).unwrap();
        let mut at = a.clone();
        at.scale = best;
        let c_best = obj.cost(&at).unwrap();
        for probe in [-3.0, -0.5, 0.0, 0.3, 1.0, best + 1e-3, best - 1e-3, 4.0] {
            at.scale = probe;
            assert!(c_best <= obj.cost(&at).unwrap() + 1e-15);
        }
    }

    #[test]
    fn minimize_quadratic_and_detect_divergence() {
        let quad = |x: &[f64]| Ok(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]));
        let gd = OptimizerConfig {
            method: Method::GradientDescent { eta: 0.1 },
            iterations: 500,
            tolerance: 1e-20,
        };
        let r = minimize(quad, &[0.0], &gd).unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-9);
        let r = minimize(quad, &[0.0], &OptimizerConfig::adam(0.1, 2000, 1e-14)).unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-6);

        let blowup = OptimizerConfig {
            method: Method::GradientDescent { eta: 1.5 },
            iterations: 100,
            tolerance: 0.0,
        };
        match minimize(quad, &[0.0], &blowup) {
            Err(Error::Diverged { rises, history }) => {
                assert_eq!(rises, DIVERGENCE_RISES);
                assert_eq!(history.len(), 11);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(OptimizerConfig::adam(0.0, 10, 0.0).validate().is_err());
    }

    #[test]
    fn zero_initial_condition_stays_zero() {
        let spec = GridSpec::periodic(3).unwrap();
        let cfg = VqaSolveConfig {
            steps: 3,
            ..VqaSolveConfig::default()
        };
        let sol = vqa_burgers_solve(&Field::zeros(spec), &cfg).unwrap();
        assert_eq!(sol.steps.len(), 4);
        for s in &sol.steps {
            assert_eq!(s.final_cost, 0.0);
            assert!(s.field.values().iter().all(|&v| v == 0.0));
        }
        assert!(sol.history_csv().starts_with("step,iteration,cost\n0,0,0"));
    }
}
