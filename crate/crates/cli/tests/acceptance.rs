//! Acceptance criteria, one PASS/FAIL line each.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use qburgers::grid::{
    fdm_solve, fdm_step_unchecked, relative_l2, BurgersConfig, Field, GridSpec, InitialCondition,
};
use qburgers::qpinn::{
    hybrid_grad, pinn_losses, reupload_model, Activation, CollocationSets, DenseLayer, FeatureMap,
    HybridNet, Layer, LossWeights, QuantumLayer, QUANTUM_PARAMS, QUBITS,
};
use qburgers::qsim::{
    expectation, pauli_decompose, Circuit, ComplexMatrix, Gate, PauliDecomposition, PauliString,
    PauliTerm, Readout, ShotConfig, C64,
};
use qburgers::tt::{derivative_mpos, shift_mpo, Mps, Shift, Tensor3, TruncationPolicy};
use qburgers::tt_solver::{tt_solve, TtSolveConfig};
use qburgers::vqa::{
    burgers_step_cost, param_shift, param_shift_grad, vqa_burgers_solve, Ansatz, CostMode, Layout,
    VqaCostSpec, VqaSolveConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn mpo_dense_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let (mut shift_bond, mut stencil_bond) = (0, 0);
    for sites in 2..=6 {
        let n = 1usize << sites;
        let dx = 1.0 / n as f64;
        for (dir, step) in [(Shift::Forward, 1), (Shift::Backward, n - 1)] {
            let s = shift_mpo(sites, dir).map_err(|e| e.to_string())?;
            shift_bond = shift_bond.max(s.max_bond());
            let m = s.to_dense().unwrap();
            for i in 0..n {
                for j in 0..n {
                    let want = if j == (i + step) % n { 1.0 } else { 0.0 };
                    worst = worst.max((m[(i, j)] - want).abs());
                }
            }
        }
        let (d1, d2) = derivative_mpos(sites, dx).map_err(|e| e.to_string())?;
        stencil_bond = stencil_bond.max(d1.max_bond()).max(d2.max_bond());
        let (d1, d2) = (d1.to_dense().unwrap(), d2.to_dense().unwrap());
        for i in 0..n {
            for j in 0..n {
                let (up, down) = ((i + 1) % n, (i + n - 1) % n);
                let mut first = 0.0;
                let mut second = 0.0;
                if j == up {
                    first += 1.0 / (2.0 * dx);
                    second += 1.0 / (dx * dx);
                }
                if j == down {
                    first -= 1.0 / (2.0 * dx);
                    second += 1.0 / (dx * dx);
                }
                if j == i {
                    second -= 2.0 / (dx * dx);
                }
                worst = worst
                    .max((d1[(i, j)] - first).abs())
                    .max((d2[(i, j)] - second).abs());
            }
        }
    }
    check(
        worst <= 1e-12 && shift_bond <= 2 && stencil_bond <= 5,
        format!("max entry error {worst:.1e}, bonds shift {shift_bond} stencil {stencil_bond}"),
    )
}

fn lossless_tt_pipeline() -> Outcome {
    let burgers = BurgersConfig::default_experiment();
    let fdm = fdm_solve(&burgers).map_err(|e| e.to_string())?;
    let tt = tt_solve(&TtSolveConfig::new(burgers, TruncationPolicy::unlimited()))
        .map_err(|e| e.to_string())?;
    if fdm.snapshots.len() != tt.snapshots.len() {
        return Err("snapshot count differs".into());
    }
    let worst = fdm
        .snapshots
        .iter()
        .zip(&tt.snapshots)
        .map(|(a, b)| max_abs_diff(a.field.values(), b.field.values()))
        .fold(0.0, f64::max);
    check(
        worst <= 1e-10,
        format!("{} snapshots, max-abs {worst:.1e}", fdm.snapshots.len()),
    )
}

fn chi_accuracy_study() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qburgers"))
        .args(["sweep-chi", "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let rows = v["rows"].as_array().ok_or("no rows")?;
    let mse = |chi: u64| {
        rows.iter()
            .find(|r| r["chi"].as_u64() == Some(chi))
            .and_then(|r| r["mse"].as_f64())
            .unwrap_or(f64::NAN)
    };
    let (m2, m4, m8, m16) = (mse(2), mse(4), mse(8), mse(16));
    let anomalies = rows.iter().filter(|r| r["anomaly"] == true).count();
    check(
        rows.len() == 4 && m16 <= 1e-10 && m8 <= 1e-3 && (1e-3..1e-1).contains(&m2),
        format!("mse chi=2 {m2:.1e}, 4 {m4:.1e}, 8 {m8:.1e}, 16 {m16:.1e}; {anomalies} flagged"),
    )
}

fn random_mps(rng: &mut ChaCha8Rng) -> Mps {
    let sites = rng.random_range(2..=8);
    let mut bonds = vec![1];
    for k in 1..sites {
        let cap = (1usize << k).min(1 << (sites - k));
        bonds.push(rng.random_range(1..=cap.min(12)));
    }
    bonds.push(1);
    let cores = (0..sites)
        .map(|k| {
            let len = bonds[k] * 2 * bonds[k + 1];
            let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            Tensor3::from_vec(bonds[k], 2, bonds[k + 1], data).unwrap()
        })
        .collect();
    Mps::from_cores(cores).unwrap()
}

fn truncation_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_ratio: f64 = 0.0;
    for draw in 0..100 {
        let m = random_mps(&mut rng);
        let chi = rng.random_range(1..=4);
        let (t, w) = m.truncate(&TruncationPolicy::with_chi(chi).unwrap());
        let (a, b) = (m.to_vec(), t.to_vec());
        let err2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let norm2: f64 = a.iter().map(|x| x * x).sum();
        if err2 > w * (1.0 + 1e-10) + 1e-24 * norm2 {
            return Err(format!("draw {draw}: error^2 {err2:e} > discarded {w:e}"));
        }
        if w > 0.0 {
            worst_ratio = worst_ratio.max(err2 / w);
        }
    }
    Ok(format!("100 draws, max error^2/discarded {worst_ratio:.3}"))
}

fn random_ansatz(layout: Layout, rng: &mut ChaCha8Rng) -> Ansatz {
    let theta = (0..layout.param_count(3))
        .map(|_| rng.random_range(-PI..PI))
        .collect();
    Ansatz::new(3, layout, theta, rng.random_range(0.5..3.0)).unwrap()
}

fn cost_spec(previous: Ansatz, mode: CostMode) -> VqaCostSpec {
    VqaCostSpec {
        nu: 0.05,
        tau: 1e-3,
        spec: GridSpec::periodic(3).unwrap(),
        previous,
        mode,
    }
}

fn layout_for(draw: usize) -> Layout {
    if draw.is_multiple_of(2) {
        Layout::MpsBrick {
            layers: 1 + draw % 4,
        }
    } else {
        Layout::HardwareEfficientCascade {
            layers: 1 + draw % 3,
        }
    }
}

fn single(word: &str) -> PauliDecomposition {
    let term = PauliTerm {
        coeff: C64::new(1.0, 0.0),
        string: PauliString::parse(word).unwrap(),
    };
    PauliDecomposition::new(word.len(), vec![term]).unwrap()
}

fn parameter_shift_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for draw in 0..20 {
        let layout = layout_for(draw);
        let cost = cost_spec(random_ansatz(layout, &mut rng), CostMode::Dense);
        let a = random_ansatz(layout, &mut rng);
        let g = param_shift_grad(&a, &cost).map_err(|e| e.to_string())?;
        let mut p = a.theta().to_vec();
        for j in 0..p.len() {
            let at = |p: &[f64]| {
                burgers_step_cost(
                    &Ansatz::new(3, layout, p.to_vec(), a.scale()).unwrap(),
                    &cost,
                )
                .unwrap()
            };
            let v = p[j];
            p[j] = v + h;
            let plus = at(&p);
            p[j] = v - h;
            let minus = at(&p);
            p[j] = v;
            worst = worst.max((g[j] - (plus - minus) / (2.0 * h)).abs());
        }
    }
    let z = single("Z");
    let f = |t: &[f64]| {
        let s = Circuit::from_gates(1, vec![Gate::Ry(0, t[0])])?.run()?;
        expectation(&s, &z, None)
    };
    let g0 = param_shift(f, &[0.0]).map_err(|e| e.to_string())?[0];
    let g1 = param_shift(f, &[FRAC_PI_2]).map_err(|e| e.to_string())?[0];
    check(
        worst <= 1e-6 && g0.abs() <= 1e-12 && (g1 + 1.0).abs() <= 1e-12,
        format!("max |ps - fd| {worst:.1e}; cos model d/dθ at 0 = {g0:.1e}, at π/2 = {g1:.15}"),
    )
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let dim = 1 << n;
    let mut data = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        data[i * dim + i] = C64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..dim {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            data[i * dim + j] = z;
            data[j * dim + i] = z.conj();
        }
    }
    ComplexMatrix::new(dim, dim, data).unwrap()
}

fn cost_mode_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst_cost: f64 = 0.0;
    for draw in 0..20 {
        let layout = layout_for(draw);
        let prev = random_ansatz(layout, &mut rng);
        let a = random_ansatz(layout, &mut rng);
        let dense = burgers_step_cost(&a, &cost_spec(prev.clone(), CostMode::Dense))
            .map_err(|e| e.to_string())?;
        let ht = burgers_step_cost(&a, &cost_spec(prev, CostMode::HadamardTest(Readout::Exact)))
            .map_err(|e| e.to_string())?;
        worst_cost = worst_cost.max((dense - ht).abs());
    }
    let mut worst_pauli: f64 = 0.0;
    for n in 1..=4 {
        for _ in 0..5 {
            let m = random_hermitian(n, &mut rng);
            let d = pauli_decompose(&m).map_err(|e| e.to_string())?;
            worst_pauli = worst_pauli.max(d.to_matrix().max_abs_diff(&m));
        }
    }
    check(
        worst_cost <= 1e-10 && worst_pauli <= 1e-12,
        format!("cost gap {worst_cost:.1e}, Pauli roundtrip {worst_pauli:.1e}"),
    )
}

fn std_dev(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn shot_scaling() -> Outcome {
    let state = Circuit::from_gates(
        2,
        vec![
            Gate::Ry(0, 1.1),
            Gate::Cnot {
                control: 0,
                target: 1,
            },
        ],
    )
    .unwrap()
    .run()
    .unwrap();
    let obs = single("ZI");
    let spread = |shots: usize| {
        let v: Vec<f64> = (0..200)
            .map(|r| {
                expectation(
                    &state,
                    &obs,
                    Some(ShotConfig::new(shots, 5000 + r).unwrap()),
                )
                .unwrap()
            })
            .collect();
        std_dev(&v)
    };
    let ratio = spread(400) / spread(100);
    check(
        (ratio - 0.5).abs() <= 0.1,
        format!("σ(400)/σ(100) = {ratio:.3}"),
    )
}

fn vqa_time_marching() -> Outcome {
    let grid = GridSpec::periodic(3).unwrap();
    let init = InitialCondition::SinFull.sample(grid).unwrap();
    let cfg = VqaSolveConfig::default();
    let sol = vqa_burgers_solve(&init, &cfg).map_err(|e| e.to_string())?;
    let mut reference: Field = init;
    let mut min_reduction = f64::INFINITY;
    let mut max_err: f64 = 0.0;
    for step in sol.steps.iter().skip(1) {
        reference = fdm_step_unchecked(&reference, cfg.nu, cfg.tau);
        min_reduction = min_reduction.min(step.initial_cost / step.final_cost);
        max_err = max_err.max(relative_l2(step.field.values(), reference.values()));
    }
    let steps = sol.steps.len() - 1;
    check(
        steps == 5 && min_reduction >= 1e3 && max_err <= 5e-2,
        format!("{steps} steps, min cost reduction {min_reduction:.1e}x, max rel L2 {max_err:.1e}"),
    )
}

fn parameter_count_anchors() -> Outcome {
    let pinn = HybridNet::reference_pinn(1).param_count();
    let hq = HybridNet::reference_hqpinn(1, FeatureMap::Identity, false).param_count();
    check(
        pinn == 1341 && hq == 321,
        format!("PINN {pinn}, HQPINN {hq}"),
    )
}

fn dense(i: usize, o: usize, act: Activation, rng: &mut ChaCha8Rng) -> Layer {
    let w = (0..i * o).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..o).map(|_| rng.random_range(-0.5..0.5)).collect();
    Layer::Dense(DenseLayer::new(i, o, w, b, act).unwrap())
}

fn hybrid_gradient_correctness() -> Outcome {
    let burgers = qburgers::qpinn::default_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for draw in 0..20 {
        let map = if draw % 2 == 0 {
            FeatureMap::Identity
        } else {
            FeatureMap::ChebyshevArccos(1 + draw % 3)
        };
        let theta = (0..QUANTUM_PARAMS)
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let hidden = 2 + draw % 3;
        let layers = vec![
            dense(2, QUBITS, Activation::Tanh, &mut rng),
            Layer::Quantum(QuantumLayer::new(theta, map, draw % 3 == 0).unwrap()),
            dense(QUBITS, hidden, Activation::Tanh, &mut rng),
            dense(hidden, 1, Activation::Linear, &mut rng),
        ];
        let weights = LossWeights {
            residual: rng.random_range(0.5..2.0),
            ic: rng.random_range(0.5..2.0),
            bc: rng.random_range(0.5..2.0),
        };
        let net = HybridNet::new(layers, weights)
            .unwrap()
            .scaled_to(&burgers)
            .unwrap();
        let sets = CollocationSets::sample(&burgers, 8, 4, 4, 100 + draw as u64).unwrap();
        let g = hybrid_grad(&net, &sets, &burgers).map_err(|e| e.to_string())?;
        let mut p = net.params();
        for j in 0..p.len() {
            let v = p[j];
            let mut loss = |x: f64| {
                p[j] = x;
                pinn_losses(&net.with_params(&p).unwrap(), &sets, &burgers)
                    .unwrap()
                    .total
            };
            let fd = (loss(v + h) - loss(v - h)) / (2.0 * h);
            p[j] = v;
            worst = worst.max((g[j] - fd).abs());
        }
    }
    check(
        worst <= 1e-5,
        format!("20 draws, max |grad - fd| {worst:.1e}"),
    )
}

fn hqpinn_training() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qburgers"))
        .args([
            "qpinn-train",
            "--override",
            "qpinn.compare_classical=false",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let n = &v["network"];
    let reduction = n["loss_reduction"].as_f64().unwrap_or(f64::NAN);
    let rel = n["relative_l2_vs_fdm"].as_f64().unwrap_or(f64::NAN);
    check(
        reduction >= 10.0 && rel <= 0.1,
        format!(
            "{} epochs, loss {:.3e} -> {:.3e} ({reduction:.1}x), rel L2 {rel:.3}",
            n["epochs"],
            n["initial_loss"].as_f64().unwrap_or(f64::NAN),
            n["best_loss"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn spectrum(f: impl Fn(f64) -> f64, m: usize) -> Vec<f64> {
    let samples: Vec<f64> = (0..m).map(|k| f(2.0 * PI * k as f64 / m as f64)).collect();
    (0..=m / 2)
        .map(|w| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, s) in samples.iter().enumerate() {
                let a = 2.0 * PI * (w * k) as f64 / m as f64;
                re += s * a.cos();
                im -= s * a.sin();
            }
            (re * re + im * im).sqrt() / m as f64
        })
        .collect()
}

fn band_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    let mut worst: f64 = 0.0;
    for encodings in 1..=3 {
        for _ in 0..10 {
            let blocks: Vec<[f64; 3]> = (0..=encodings)
                .map(|_| [0; 3].map(|_| rng.random_range(-PI..PI)))
                .collect();
            let amps = spectrum(|x| reupload_model(x, &blocks).unwrap(), 64);
            worst = amps[encodings + 1..].iter().fold(worst, |m, a| m.max(*a));
        }
    }
    check(worst <= 1e-8, format!("max amplitude above L {worst:.1e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 12] = [
        ("MPO-dense equivalence", mpo_dense_equivalence),
        ("lossless TT pipeline", lossless_tt_pipeline),
        ("chi accuracy study", chi_accuracy_study),
        ("truncation bound", truncation_bound),
        ("parameter-shift correctness", parameter_shift_correctness),
        ("cost-mode agreement", cost_mode_agreement),
        ("shot scaling", shot_scaling),
        ("VQA time marching", vqa_time_marching),
        ("parameter-count anchors", parameter_count_anchors),
        ("hybrid gradient correctness", hybrid_gradient_correctness),
        ("HQPINN training", hqpinn_training),
        ("band limit", band_limit),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name}: {detail}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
