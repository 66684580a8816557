use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qburgers::grid::{
    fdm_solve, fdm_step_unchecked, mse, relative_l2, stability_bound, BurgersConfig, Field,
    Snapshot,
};
use qburgers::qpinn::{evaluate_against_fdm, train, CollocationSets, Evaluation, Trained, FD_STEP};
use qburgers::tt_solver::{tt_solve, TtSolution, TtSolveConfig};
use qburgers::vqa::vqa_burgers_solve;
use qburgers::Error;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{self, ExperimentConfig};
use crate::{Cli, CliError, Command};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }
}

fn trajectory_csv(snapshots: &[Snapshot]) -> String {
    let mut out = String::from("x,t,u\n");
    for s in snapshots {
        for (x, u) in s.field.spec().coordinates().iter().zip(s.field.values()) {
            let _ = writeln!(out, "{x:.16e},{:.16e},{u:.16e}", s.time);
        }
    }
    out
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Compare { a, b } = &cli.command {
        let metrics = compare(a, b)?;
        println!("{}", serde_json::to_string_pretty(&metrics).expect("json"));
        if let Some(dir) = &cli.out {
            Output::new(dir.clone())?.write("metrics.json", &pretty(&metrics))?;
        }
        return Ok(());
    }
    let name = cli.command.name();
    let cfg = config::load(name, cli.config.as_deref(), &cli.overrides)?;
    let seed = cli.seed.or(cfg.seed);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(name));
    let out = Output::new(dir)?;
    let clock = Instant::now();
    let (results, seeds) = match cli.command {
        Command::FdmSolve => (fdm(&cfg, &out)?, json!({})),
        Command::TtSolve => (tt(&cfg, &out)?, json!({})),
        Command::SweepChi => (sweep(&cfg, &out, cli.threads)?, json!({})),
        Command::VqaSolve => {
            let s = seed.unwrap_or(42);
            (vqa(&cfg, &out, s)?, json!({ "vqa": s }))
        }
        Command::QpinnTrain => qpinn(&cfg, &out, seed)?,
        Command::Compare { .. } => unreachable!("handled above"),
    };
    let mut metrics = Map::new();
    metrics.insert("command".into(), json!(name));
    metrics.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    metrics.insert("seed".into(), json!(seed));
    metrics.insert("module_seeds".into(), seeds);
    metrics.insert("wall_seconds".into(), json!(clock.elapsed().as_secs_f64()));
    metrics.insert(
        "config".into(),
        serde_json::to_value(&cfg).expect("config serializes"),
    );
    metrics.insert("results".into(), results);
    let metrics = Value::Object(metrics);
    out.write("metrics.json", &pretty(&metrics))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics["results"]).expect("json")
    );
    Ok(())
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json") + "\n"
}

fn fdm(cfg: &ExperimentConfig, out: &Output) -> Result<Value, CliError> {
    let b = cfg.burgers()?;
    let sol = fdm_solve(&b)?;
    out.write("solution.csv", &sol.final_field.to_csv())?;
    out.write("trajectory.csv", &trajectory_csv(&sol.snapshots))?;
    let umax = b.initial_condition.sample(b.spec)?.max_abs();
    Ok(json!({
        "steps": sol.steps,
        "snapshots": sol.snapshots.len(),
        "dt_max": stability_bound(b.nu, b.spec.dx(), umax),
        "final_max_abs": sol.final_field.max_abs(),
        "final_norm": sol.final_field.norm(),
    }))
}

fn max_snapshot_mse(a: &[Snapshot], b: &[Snapshot]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| mse(x.field.values(), y.field.values()))
        .fold(0.0, f64::max)
}

fn tt_config(
    cfg: &ExperimentConfig,
    b: &BurgersConfig,
    chi: Option<usize>,
) -> Result<TtSolveConfig, CliError> {
    let mut tc = TtSolveConfig::new(b.clone(), cfg.policy(chi)?);
    tc.truncate_each_operation = cfg.require(&cfg.tt, "tt")?.truncate_each_operation;
    tc.validate()?;
    Ok(tc)
}

fn tt_run(tc: &TtSolveConfig, out: Option<&Output>) -> Result<TtSolution, CliError> {
    match tt_solve(tc) {
        Ok(s) => Ok(s),
        Err(Error::TtBlowUp {
            step,
            time,
            diagnostics,
        }) => {
            if let Some(out) = out {
                out.write("diagnostics.csv", &diagnostics.to_csv())?;
            }
            Err(CliError::Numerical(format!(
                "tensor-train state became non-finite at step {step} (t = {time}); diagnostics up to that step were written"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn tt(cfg: &ExperimentConfig, out: &Output) -> Result<Value, CliError> {
    let b = cfg.burgers()?;
    let tc = tt_config(cfg, &b, None)?;
    let sol = tt_run(&tc, Some(out))?;
    out.write("solution.csv", &sol.final_field.to_csv())?;
    out.write("trajectory.csv", &trajectory_csv(&sol.snapshots))?;
    out.write("diagnostics.csv", &sol.diagnostics.to_csv())?;
    let reference = fdm_solve(&b)?;
    let d = &sol.diagnostics;
    Ok(json!({
        "chi": tc.policy.max_chi(),
        "steps": sol.steps,
        "max_bond": d.max_bond.iter().max(),
        "accumulated_truncation": d.accumulated_truncation(),
        "mse_vs_fdm": mse(sol.final_field.values(), reference.final_field.values()),
        "relative_l2_vs_fdm": relative_l2(sol.final_field.values(), reference.final_field.values()),
        "max_snapshot_mse_vs_fdm": max_snapshot_mse(&sol.snapshots, &reference.snapshots),
    }))
}

fn sweep(cfg: &ExperimentConfig, out: &Output, threads: Option<usize>) -> Result<Value, CliError> {
    let b = cfg.burgers()?;
    let chis = &cfg.require(&cfg.sweep, "sweep")?.chis;
    if chis.is_empty() {
        return Err(CliError::Validation("sweep needs at least one chi".into()));
    }
    let configs = chis
        .iter()
        .map(|&c| tt_config(cfg, &b, Some(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let reference = fdm_solve(&b)?;
    let runs: Vec<Result<(TtSolution, f64), CliError>> = pool.install(|| {
        configs
            .par_iter()
            .map(|tc| {
                let clock = Instant::now();
                let sol = tt_run(tc, None)?;
                Ok((sol, clock.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut csv =
        String::from("chi,mse,relative_l2,max_bond,accumulated_truncation,seconds,anomaly\n");
    let mut rows = Vec::new();
    let mut best = f64::INFINITY;
    let mut order: Vec<usize> = (0..chis.len()).collect();
    order.sort_by_key(|&i| chis[i]);
    for i in order {
        let (sol, seconds) = runs[i]
            .as_ref()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let err = mse(sol.final_field.values(), reference.final_field.values());
        let rel = relative_l2(sol.final_field.values(), reference.final_field.values());
        // a larger cap that does worse than a smaller one
        let anomaly = err > best;
        best = best.min(err);
        let bond = sol.diagnostics.max_bond.iter().max().copied().unwrap_or(0);
        let acc = sol.diagnostics.accumulated_truncation();
        let _ = writeln!(
            csv,
            "{},{err:.6e},{rel:.6e},{bond},{acc:.6e},{seconds:.3},{anomaly}",
            chis[i]
        );
        rows.push(json!({
            "chi": chis[i],
            "mse": err,
            "relative_l2": rel,
            "max_bond": bond,
            "accumulated_truncation": acc,
            "seconds": seconds,
            "anomaly": anomaly,
        }));
    }
    out.write("sweep.csv", &csv)?;
    Ok(json!({ "rows": rows }))
}

fn vqa(cfg: &ExperimentConfig, out: &Output, seed: u64) -> Result<Value, CliError> {
    let b = cfg.burgers()?;
    if !b.spec.is_periodic() {
        return Err(CliError::Validation(
            "vqa-solve needs a periodic grid".into(),
        ));
    }
    let vc = cfg.vqa(seed)?;
    let init = b.initial_condition.sample(b.spec)?;
    let sol = vqa_burgers_solve(&init, &vc)?;
    out.write("vqa_history.csv", &sol.history_csv())?;
    let last = &sol.steps[sol.steps.len() - 1];
    out.write("solution.csv", &last.field.to_csv())?;
    let snapshots: Vec<Snapshot> = sol
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| Snapshot {
            step: k,
            time: k as f64 * vc.tau,
            field: s.field.clone(),
        })
        .collect();
    out.write("trajectory.csv", &trajectory_csv(&snapshots))?;
    let mut reference: Field = init;
    let mut steps = Vec::new();
    for (k, s) in sol.steps.iter().enumerate() {
        if k > 0 {
            reference = fdm_step_unchecked(&reference, vc.nu, vc.tau);
        }
        steps.push(json!({
            "step": k,
            "initial_cost": s.initial_cost,
            "final_cost": s.final_cost,
            "reduction": s.initial_cost / s.final_cost,
            "iterations": s.history.len() - 1,
            "relative_l2_vs_fdm": relative_l2(s.field.values(), reference.values()),
        }));
    }
    Ok(json!({ "qubits": b.spec.sites(), "tau": vc.tau, "steps": steps }))
}

fn solution_at_final_time(ev: &Evaluation) -> String {
    let t_last = ev
        .points
        .iter()
        .map(|p| p[1])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = String::from("x,u\n");
    for p in ev.points.iter().filter(|p| p[1] == t_last) {
        let _ = writeln!(out, "{:.16e},{:.16e}", p[0], p[3]);
    }
    out
}

fn summary(t: &Trained, ev: &Evaluation) -> Value {
    let (first, last) = (t.history.initial(), t.history.last());
    json!({
        "parameters": t.net.param_count(),
        "epochs": t.history.records.len() - 1,
        "initial_loss": first.total,
        "final_loss": last.total,
        "best_loss": t.history.best_total(),
        "loss_reduction": first.total / t.history.best_total(),
        "final_residual": last.residual,
        "final_bc": last.bc,
        "final_ic": last.ic,
        "relative_l2_vs_fdm": ev.relative_l2,
        "mse_vs_fdm": ev.mse,
    })
}

fn qpinn(
    cfg: &ExperimentConfig,
    out: &Output,
    seed: Option<u64>,
) -> Result<(Value, Value), CliError> {
    let b = cfg.burgers()?;
    let plan = cfg.qpinn(seed)?;
    let [nf, nb, n0] = plan.counts;
    let sets = CollocationSets::sample(&b, nf, nb, n0, plan.collocation_seed)?;
    let trained = train(&plan.net, &sets, &b, &plan.optimizer)?;
    let ev = evaluate_against_fdm(&trained.net, &b)?;
    out.write("training.csv", &trained.history.to_csv())?;
    out.write("prediction.csv", &ev.prediction_csv())?;
    out.write("reference.csv", &ev.reference_csv())?;
    out.write("solution.csv", &solution_at_final_time(&ev))?;
    out.write("network.txt", &trained.net.to_text())?;
    let mut results = json!({
        "network": summary(&trained, &ev),
        "hybrid": trained.net.is_hybrid(),
        "collocation": { "interior": nf, "boundary": nb, "initial": n0 },
        "input_derivatives": format!(
            "finite differences on the network inputs, h = {FD_STEP:e}, central inside the domain and one-sided at its edges"
        ),
    });
    if let Some(classical) = &plan.classical {
        let ct = train(classical, &sets, &b, &plan.optimizer)?;
        let cev = evaluate_against_fdm(&ct.net, &b)?;
        out.write("classical_training.csv", &ct.history.to_csv())?;
        results["classical"] = summary(&ct, &cev);
        results["precision_ratio"] = json!(cev.relative_l2 / ev.relative_l2);
    }
    let seeds = json!({ "init": plan.init_seed, "collocation": plan.collocation_seed });
    Ok((results, seeds))
}

type Table = (String, Vec<Vec<f64>>, Vec<f64>);

/// Rows of an `x,u` or `x,t,u` CSV as (header, coordinates, values).
fn read_solution(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("").trim().to_string();
    let width = match header.as_str() {
        "x,u" => 2,
        "x,t,u" => 3,
        other => {
            return Err(CliError::Validation(format!(
                "{}: expected header `x,u` or `x,t,u`, found {other:?}",
                path.display()
            )))
        }
    };
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let cols = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Validation(format!("{} row {row}: {e}", path.display())))?;
        if cols.len() != width {
            return Err(CliError::Validation(format!(
                "{} row {row}: expected {width} columns",
                path.display()
            )));
        }
        values.push(cols[width - 1]);
        coords.push(cols[..width - 1].to_vec());
    }
    Ok((header, coords, values))
}

fn compare(a: &Path, b: &Path) -> Result<Value, CliError> {
    let (ha, ca, va) = read_solution(a)?;
    let (hb, cb, vb) = read_solution(b)?;
    if ha != hb {
        return Err(CliError::Validation(format!(
            "schemas differ: `{ha}` vs `{hb}`"
        )));
    }
    if va.len() != vb.len() {
        return Err(CliError::Validation(format!(
            "row counts differ: {} vs {}",
            va.len(),
            vb.len()
        )));
    }
    for (row, (p, q)) in ca.iter().zip(&cb).enumerate() {
        if p.iter()
            .zip(q)
            .any(|(x, y)| (x - y).abs() > 1e-9 * (1.0 + x.abs()))
        {
            return Err(CliError::Validation(format!(
                "coordinates differ at row {row}"
            )));
        }
    }
    let max_abs = va
        .iter()
        .zip(&vb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(json!({
        "a": a.display().to_string(),
        "b": b.display().to_string(),
        "rows": va.len(),
        "mse": mse(&va, &vb),
        "relative_l2": relative_l2(&va, &vb),
        "max_abs": max_abs,
    }))
}
