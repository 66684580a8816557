//! Explicit-Euler Burgers evolution carried out entirely on compressed
//! states, with per-step bond and truncation diagnostics.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::{check_stability, snapshot_stride, BurgersConfig, Field, Snapshot};
use crate::tt::{decode_mps, derivative_mpos, encode_mps, Mpo, Mps, TruncationPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct TtSolveConfig {
    pub burgers: BurgersConfig,
    pub policy: TruncationPolicy,
    pub record_diagnostics: bool,
    /// Truncate after every operator application and product instead of
    /// only once per step.
    pub truncate_each_operation: bool,
}

impl TtSolveConfig {
    pub fn new(burgers: BurgersConfig, policy: TruncationPolicy) -> Self {
        Self {
            burgers,
            policy,
            record_diagnostics: true,
            truncate_each_operation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.burgers.validate()?;
        if !self.burgers.spec.is_periodic() {
            return Err(Error::InvalidConfig(
                "tensor-train solves support periodic grids only".into(),
            ));
        }
        if self.burgers.spec.sites() < 2 {
            return Err(Error::InvalidGrid("tensor-train solves need L >= 2".into()));
        }
        Ok(())
    }
}

/// Per-step series; index 0 describes the initial encoding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TtDiagnostics {
    pub max_bond: Vec<usize>,
    pub discarded_weight: Vec<f64>,
    pub seconds: Vec<Duration>,
}

impl TtDiagnostics {
    fn push(&mut self, bond: usize, discarded: f64, elapsed: Duration) {
        self.max_bond.push(bond);
        self.discarded_weight.push(discarded);
        self.seconds.push(elapsed);
    }

    /// `sum_k sqrt(discarded_k)`, a running bound on the truncation error.
    pub fn accumulated_truncation(&self) -> f64 {
        self.discarded_weight.iter().map(|w| w.sqrt()).sum()
    }

    /// CSV with header `step,max_bond,discarded_weight,seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,max_bond,discarded_weight,seconds\n");
        for (k, ((b, w), s)) in self
            .max_bond
            .iter()
            .zip(&self.discarded_weight)
            .zip(&self.seconds)
            .enumerate()
        {
            out.push_str(&format!("{k},{b},{w:.16e},{:.9}\n", s.as_secs_f64()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtSolution {
    pub final_state: Mps,
    pub final_field: Field,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: TtDiagnostics,
    pub steps: usize,
}

fn maybe_truncate(m: Mps, policy: Option<&TruncationPolicy>, discarded: &mut f64) -> Mps {
    match policy {
        Some(p) => {
            let (t, w) = m.truncate(p);
            *discarded += w;
            t
        }
        None => m,
    }
}

fn step_impl(
    u: &Mps,
    nu: f64,
    dt: f64,
    d1: &Mpo,
    d2: &Mpo,
    policy: &TruncationPolicy,
    each_op: bool,
) -> Result<(Mps, f64)> {
    let lossless = TruncationPolicy::unlimited();
    let inner = each_op.then_some(policy);
    let mut discarded = 0.0;
    let du = maybe_truncate(
        d1.apply(u)?,
        Some(inner.unwrap_or(&lossless)),
        &mut discarded,
    );
    let advection = maybe_truncate(u.hadamard(&du)?, inner, &mut discarded);
    let diffusion = maybe_truncate(d2.apply(u)?, inner, &mut discarded);
    let rhs = advection.scale(-1.0).add(&diffusion.scale(nu))?;
    let rhs = maybe_truncate(rhs, inner, &mut discarded);
    let (next, w) = u.add(&rhs.scale(dt))?.truncate(policy);
    Ok((next, discarded + w))
}

/// One Euler step `u + dt (-u * D1 u + nu D2 u)`, truncated once at the end.
/// Returns the new state and the discarded weight of that truncation.
pub fn tt_step(
    u: &Mps,
    nu: f64,
    dt: f64,
    d1: &Mpo,
    d2: &Mpo,
    policy: &TruncationPolicy,
) -> Result<(Mps, f64)> {
    for sites in [d1.sites(), d2.sites()] {
        if sites != u.sites() {
            return Err(Error::SiteMismatch(u.sites(), sites));
        }
    }
    step_impl(u, nu, dt, d1, d2, policy, false)
}

pub fn tt_solve(cfg: &TtSolveConfig) -> Result<TtSolution> {
    cfg.validate()?;
    let b = &cfg.burgers;
    let spec = b.spec;
    let init = b.initial_condition.sample(spec)?;
    if !b.allow_unstable {
        check_stability(b.nu, b.dt, &spec, init.max_abs())?;
    }
    let (d1, d2) = derivative_mpos(spec.sites(), spec.dx())?;
    let steps = b.steps();
    let stride = snapshot_stride(steps);

    let mut diagnostics = TtDiagnostics::default();
    let clock = Instant::now();
    let (mut u, w0) = encode_mps(&init, &TruncationPolicy::unlimited())?.truncate(&cfg.policy);
    if cfg.record_diagnostics {
        diagnostics.push(u.max_bond(), w0, clock.elapsed());
    }
    let mut snapshots = vec![Snapshot {
        step: 0,
        time: 0.0,
        field: decode_mps(&u, spec)?,
    }];

    for step in 1..=steps {
        let clock = Instant::now();
        let (next, w) = step_impl(
            &u,
            b.nu,
            b.dt,
            &d1,
            &d2,
            &cfg.policy,
            cfg.truncate_each_operation,
        )?;
        u = next;
        let bond = u.max_bond();
        assert!(
            bond <= cfg.policy.max_chi(),
            "bond {bond} exceeds chi {}",
            cfg.policy.max_chi()
        );
        if cfg.record_diagnostics {
            diagnostics.push(bond, w, clock.elapsed());
        }
        if !(u.norm().is_finite() && w.is_finite()) {
            return Err(Error::TtBlowUp {
                step,
                time: step as f64 * b.dt,
                diagnostics: Box::new(diagnostics),
            });
        }
        if step % stride == 0 || step == steps {
            snapshots.push(Snapshot {
                step,
                time: step as f64 * b.dt,
                field: decode_mps(&u, spec)?,
            });
        }
    }
    let final_field = decode_mps(&u, spec)?;
    Ok(TtSolution {
        final_state: u,
        final_field,
        snapshots,
        diagnostics,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fdm_step, GridSpec, InitialCondition};
    use crate::tt::encode_values;

    fn random_field(spec: GridSpec, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Field::new(spec, values).unwrap()
    }

    #[test]
    fn zero_state_is_fixed() {
        let (d1, d2) = derivative_mpos(5, 1.0 / 32.0).unwrap();
        let (out, w) = tt_step(
            &Mps::zeros(5),
            0.1,
            1e-3,
            &d1,
            &d2,
            &TruncationPolicy::default(),
        )
        .unwrap();
        assert!(out.to_vec().iter().all(|&v| v == 0.0));
        assert_eq!(w, 0.0);
    }

    #[test]
    fn step_matches_dense_step() {
        let spec = GridSpec::periodic(6).unwrap();
        let (d1, d2) = derivative_mpos(6, spec.dx()).unwrap();
        let f = random_field(spec, 3);
        let u = encode_mps(&f, &TruncationPolicy::unlimited()).unwrap();
        let (out, _) = tt_step(&u, 0.05, 1e-4, &d1, &d2, &TruncationPolicy::unlimited()).unwrap();
        let dense = fdm_step(&f, 0.05, 1e-4).unwrap();
        let err = out
            .to_vec()
            .iter()
            .zip(dense.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "max error {err}");
    }

    #[test]
    fn truncated_step_respects_cap() {
        let spec = GridSpec::periodic(6).unwrap();
        let (d1, d2) = derivative_mpos(6, spec.dx()).unwrap();
        let u = encode_mps(&random_field(spec, 9), &TruncationPolicy::unlimited()).unwrap();
        let policy = TruncationPolicy::with_chi(4).unwrap();
        let (out, w) = tt_step(&u, 0.05, 1e-4, &d1, &d2, &policy).unwrap();
        assert!(out.max_bond() <= 4);
        assert!(w > 0.0);
    }

    #[test]
    fn rejects_site_mismatch() {
        let (d1, d2) = derivative_mpos(4, 1.0 / 16.0).unwrap();
        let u = encode_values(&[1.0; 8], &TruncationPolicy::default())
            .unwrap()
            .0;
        assert!(tt_step(&u, 0.1, 1e-3, &d1, &d2, &TruncationPolicy::default()).is_err());
    }

    #[test]
    fn rejects_dirichlet() {
        let mut burgers = BurgersConfig::default_experiment();
        burgers.spec = GridSpec::new(
            5,
            1.0,
            crate::grid::Boundary::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
        )
        .unwrap();
        let cfg = TtSolveConfig::new(burgers, TruncationPolicy::default());
        assert!(matches!(tt_solve(&cfg), Err(Error::InvalidConfig(_))));
    }

    fn short_run(chi: usize, each_op: bool) -> TtSolution {
        let mut burgers = BurgersConfig::default_experiment();
        burgers.spec = GridSpec::periodic(6).unwrap();
        burgers.dt = 2e-4;
        burgers.t_final = 0.02;
        burgers.initial_condition = InitialCondition::SinFull;
        let mut cfg = TtSolveConfig::new(burgers, TruncationPolicy::with_chi(chi).unwrap());
        cfg.truncate_each_operation = each_op;
        tt_solve(&cfg).unwrap()
    }

    #[test]
    fn diagnostics_shape_and_cap() {
        let sol = short_run(3, false);
        assert_eq!(sol.steps, 100);
        assert_eq!(sol.diagnostics.max_bond.len(), 101);
        assert!(sol.diagnostics.max_bond.iter().all(|&b| b <= 3));
        let csv = sol.diagnostics.to_csv();
        assert!(csv.starts_with("step,max_bond,discarded_weight,seconds\n0,2,"));
        assert_eq!(csv.lines().count(), 102);
    }

    #[test]
    fn per_operation_truncation_respects_cap() {
        let sol = short_run(3, true);
        assert!(sol.diagnostics.max_bond.iter().all(|&b| b <= 3));
        assert!(sol.final_field.is_finite());
    }

    #[test]
    fn solve_is_deterministic() {
        let a = short_run(4, false);
        let b = short_run(4, false);
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.diagnostics.max_bond, b.diagnostics.max_bond);
        let bits = |d: &TtDiagnostics| -> Vec<u64> {
            d.discarded_weight.iter().map(|w| w.to_bits()).collect()
        };
        assert_eq!(bits(&a.diagnostics), bits(&b.diagnostics));
    }

    #[test]
    fn blow_up_is_reported_with_diagnostics() {
        let mut burgers = BurgersConfig::default_experiment();
        burgers.spec = GridSpec::periodic(4).unwrap();
        burgers.dt = 0.5;
        burgers.t_final = 200.0;
        burgers.allow_unstable = true;
        let cfg = TtSolveConfig::new(burgers, TruncationPolicy::with_chi(4).unwrap());
        match tt_solve(&cfg) {
            Err(Error::TtBlowUp {
                step, diagnostics, ..
            }) => {
                assert_eq!(diagnostics.max_bond.len(), step + 1);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
