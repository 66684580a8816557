//! Experiment configuration: TOML sections, `key=value` overrides and
//! conversion into solver configs.

use std::path::{Path, PathBuf};

use qburgers::grid::{Boundary, BurgersConfig, GridSpec, InitialCondition};
use qburgers::qpinn::{FeatureMap, HybridNet, LossWeights};
use qburgers::qsim::{Readout, ShotConfig};
use qburgers::tt::TruncationPolicy;
use qburgers::vqa::{CostMode, Layout, OptimizerConfig, VqaSolveConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fdm,
    Tt,
    Vqa,
    Qpinn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub solver: Option<SolverKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: GridSection,
    pub burgers: BurgersSection,
    pub tt: Option<TtSection>,
    pub sweep: Option<SweepSection>,
    pub vqa: Option<VqaSection>,
    pub qpinn: Option<QpinnSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

fn one() -> f64 {
    1.0
}

fn periodic() -> BoundaryKind {
    BoundaryKind::Periodic
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub sites: usize,
    #[serde(default = "one")]
    pub domain_length: f64,
    #[serde(default = "periodic")]
    pub boundary: BoundaryKind,
    #[serde(default)]
    pub left: f64,
    #[serde(default)]
    pub right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IcKind {
    #[default]
    SinFull,
    NegSinHalf,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersSection {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub initial_condition: IcKind,
    /// Samples for a custom initial condition.
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub allow_unstable: bool,
}

fn default_chi() -> usize {
    16
}

fn default_cutoff() -> f64 {
    TruncationPolicy::DEFAULT_CUTOFF
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtSection {
    #[serde(default = "default_chi")]
    pub chi: usize,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub truncate_each_operation: bool,
}

fn default_chis() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_chis")]
    pub chis: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    #[default]
    Cascade,
    Brick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    #[default]
    Dense,
    Hadamard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaSection {
    #[serde(default)]
    pub layout: LayoutKind,
    pub layers: Option<usize>,
    #[serde(default)]
    pub mode: CostKind,
    /// Shots per Hadamard-test estimate; exact readout when absent.
    pub shots: Option<usize>,
    pub eta: Option<f64>,
    pub iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub fit_restarts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[default]
    Hqpinn,
    Pinn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    #[default]
    Identity,
    Chebyshev,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpinnSection {
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub feature_map: MapKind,
    pub chebyshev_order: Option<usize>,
    #[serde(default)]
    pub reupload: bool,
    pub interior: Option<usize>,
    pub boundary: Option<usize>,
    pub initial: Option<usize>,
    pub init_seed: Option<u64>,
    pub collocation_seed: Option<u64>,
    pub lambda_residual: Option<f64>,
    pub lambda_ic: Option<f64>,
    pub lambda_bc: Option<f64>,
    pub epochs: Option<usize>,
    pub eta: Option<f64>,
    /// Also train the classical reference network and report both.
    pub compare_classical: Option<bool>,
}

/// Built-in configuration used when no file is given.
pub fn default_text(command: &str) -> &'static str {
    match command {
        "vqa-solve" => {
            "solver = \"vqa\"\n[grid]\nsites = 3\n[burgers]\nnu = 0.05\ndt = 1e-3\nt_final = 5e-3\n[vqa]\n"
        }
        "qpinn-train" => {
            "solver = \"qpinn\"\n[grid]\nsites = 8\nboundary = \"dirichlet\"\n[burgers]\nnu = 0.05\ndt = 1e-4\nt_final = 0.2\n[qpinn]\n"
        }
        "tt-solve" | "sweep-chi" => {
            "solver = \"tt\"\n[grid]\nsites = 8\n[burgers]\nnu = 0.05\ndt = 1e-4\nt_final = 0.2\n[tt]\n[sweep]\n"
        }
        _ => "solver = \"fdm\"\n[grid]\nsites = 8\n[burgers]\nnu = 0.05\ndt = 1e-4\nt_final = 0.2\n",
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets a dotted key such as `burgers.nu`, creating sections as needed.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for s in sections {
        let entry = node
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Validation(format!("override key {key:?}: {s} is not a section"))
        })?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

pub fn load(
    command: &str,
    path: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", p.display()))
        })?,
        None => default_text(command).to_string(),
    };
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("invalid config: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig =
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| {
                CliError::Validation(format!("invalid config: {}", e.message()))
            })?;
    Ok(cfg)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section
            .as_ref()
            .ok_or_else(|| invalid(format!("missing section [{name}]")))
    }

    pub fn burgers(&self) -> Result<BurgersConfig, CliError> {
        let g = &self.grid;
        let boundary = match g.boundary {
            BoundaryKind::Periodic => Boundary::Periodic,
            BoundaryKind::Dirichlet => Boundary::Dirichlet {
                left: g.left,
                right: g.right,
            },
        };
        let spec = GridSpec::new(g.sites, g.domain_length, boundary)?;
        let b = &self.burgers;
        let initial_condition = match (b.initial_condition, &b.values) {
            (IcKind::SinFull, None) => InitialCondition::SinFull,
            (IcKind::NegSinHalf, None) => InitialCondition::NegSinHalf,
            (IcKind::Custom, Some(v)) => InitialCondition::Custom(v.clone()),
            (IcKind::Custom, None) => {
                return Err(invalid("custom initial condition needs `values`"))
            }
            (_, Some(_)) => {
                return Err(invalid(
                    "`values` is only read for initial_condition = \"custom\"",
                ))
            }
        };
        let cfg = BurgersConfig {
            spec,
            nu: b.nu,
            dt: b.dt,
            t_final: b.t_final,
            initial_condition,
            allow_unstable: b.allow_unstable,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn policy(&self, chi: Option<usize>) -> Result<TruncationPolicy, CliError> {
        let tt = self.require(&self.tt, "tt")?;
        Ok(TruncationPolicy::new(chi.unwrap_or(tt.chi), tt.cutoff)?)
    }

    pub fn vqa(&self, seed: u64) -> Result<VqaSolveConfig, CliError> {
        let v = self.require(&self.vqa, "vqa")?;
        let defaults = VqaSolveConfig::default();
        let layers = v.layers.unwrap_or(3);
        let layout = match v.layout {
            LayoutKind::Cascade => Layout::HardwareEfficientCascade { layers },
            LayoutKind::Brick => Layout::MpsBrick { layers },
        };
        let mode = match (v.mode, v.shots) {
            (CostKind::Dense, None) => CostMode::Dense,
            (CostKind::Dense, Some(_)) => return Err(invalid("`shots` needs mode = \"hadamard\"")),
            (CostKind::Hadamard, None) => CostMode::HadamardTest(Readout::Exact),
            (CostKind::Hadamard, Some(s)) => {
                CostMode::HadamardTest(Readout::Sampled(ShotConfig::new(s, seed)?))
            }
        };
        let b = self.burgers()?;
        let optimizer = OptimizerConfig::adam(
            v.eta.unwrap_or(0.05),
            v.iterations.unwrap_or(defaults.optimizer.iterations),
            v.tolerance.unwrap_or(defaults.optimizer.tolerance),
        );
        optimizer.validate()?;
        Ok(VqaSolveConfig {
            layout,
            nu: b.nu,
            tau: b.dt,
            steps: b.steps(),
            mode,
            optimizer,
            fit_restarts: v.fit_restarts.unwrap_or(defaults.fit_restarts),
            seed,
            ..defaults
        })
    }
}

/// Resolved physics-informed training settings.
#[derive(Debug, Clone)]
pub struct QpinnPlan {
    pub net: HybridNet,
    pub classical: Option<HybridNet>,
    pub counts: [usize; 3],
    pub init_seed: u64,
    pub collocation_seed: u64,
    pub optimizer: OptimizerConfig,
}

pub const QPINN_EPOCHS: usize = 1000;
pub const QPINN_ETA: f64 = 0.01;

impl ExperimentConfig {
    /// Module seeds: explicit keys win; otherwise split from the global
    /// seed when one is set, else the module defaults.
    pub fn qpinn(&self, global: Option<u64>) -> Result<QpinnPlan, CliError> {
        let q = self.require(&self.qpinn, "qpinn")?;
        let init_seed = q.init_seed.or(global).unwrap_or(42);
        let collocation_seed = q
            .collocation_seed
            .or(global.map(|s| split_seed(s, 1)))
            .unwrap_or(7);
        let map = match q.feature_map {
            MapKind::Identity => {
                if q.chebyshev_order.is_some() {
                    return Err(invalid(
                        "`chebyshev_order` needs feature_map = \"chebyshev\"",
                    ));
                }
                FeatureMap::Identity
            }
            MapKind::Chebyshev => FeatureMap::ChebyshevArccos(q.chebyshev_order.unwrap_or(1)),
        };
        let weights = LossWeights {
            residual: q.lambda_residual.unwrap_or(1.0),
            ic: q.lambda_ic.unwrap_or(1.0),
            bc: q.lambda_bc.unwrap_or(1.0),
        };
        let burgers = self.burgers()?;
        let classical = HybridNet::reference_pinn(init_seed)
            .with_loss_weights(weights)?
            .scaled_to(&burgers)?;
        let (net, classical) = match q.architecture {
            Architecture::Hqpinn => (
                HybridNet::reference_hqpinn(init_seed, map, q.reupload)
                    .with_loss_weights(weights)?
                    .scaled_to(&burgers)?,
                q.compare_classical.unwrap_or(true).then_some(classical),
            ),
            Architecture::Pinn => (classical, None),
        };
        let optimizer = OptimizerConfig::adam(
            q.eta.unwrap_or(QPINN_ETA),
            q.epochs.unwrap_or(QPINN_EPOCHS),
            0.0,
        );
        Ok(QpinnPlan {
            net,
            classical,
            counts: [
                q.interior.unwrap_or(2000),
                q.boundary.unwrap_or(200),
                q.initial.unwrap_or(200),
            ],
            init_seed,
            collocation_seed,
            optimizer,
        })
    }
}

/// Deterministic per-module seed derived from the global one.
pub fn split_seed(seed: u64, module: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(module + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_and_replace_keys() {
        let mut t: toml::Table = toml::from_str(default_text("fdm-solve")).unwrap();
        apply_override(&mut t, "burgers.nu=0.01").unwrap();
        apply_override(&mut t, "tt.chi = 4").unwrap();
        apply_override(&mut t, "grid.boundary=dirichlet").unwrap();
        assert_eq!(t["burgers"]["nu"].as_float(), Some(0.01));
        assert_eq!(t["tt"]["chi"].as_integer(), Some(4));
        assert_eq!(t["grid"]["boundary"].as_str(), Some("dirichlet"));
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "burgers.nu.x=1").is_err());
    }

    #[test]
    fn defaults_parse_for_every_command() {
        for c in [
            "fdm-solve",
            "tt-solve",
            "sweep-chi",
            "vqa-solve",
            "qpinn-train",
        ] {
            let cfg = load(c, None, &[]).unwrap();
            cfg.burgers().unwrap();
        }
    }

    #[test]
    fn missing_field_is_named() {
        let err = toml::from_str::<ExperimentConfig>(
            "[grid]\nsites = 4\n[burgers]\ndt = 1e-4\nt_final = 0.1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("nu"), "{err}");
    }

    #[test]
    fn split_seeds_differ_by_module() {
        assert_ne!(split_seed(42, 0), split_seed(42, 1));
        assert_eq!(split_seed(42, 1), split_seed(42, 1));
    }
}
