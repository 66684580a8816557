//! Uniform 1D grids, discrete derivative stencils and the explicit-Euler
//! finite-difference reference solver for viscous Burgers.
//!
//! Grid point `i` sits at `x_i = i * dx` with `dx = domain_length / N`.
//! In periodic mode `x_N` is identified with `x_0`. In Dirichlet mode node 0
//! is the left boundary (pinned to the left value) and the right boundary
//! `x_N = domain_length` is a ghost node holding the right value.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::Mat;

use crate::error::{Error, Result};

/// Boundary handling for a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Periodic,
    Dirichlet { left: f64, right: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    sites: usize,
    domain_length: f64,
    boundary: Boundary,
}

impl GridSpec {
    /// Largest supported number of binary sites.
    pub const MAX_SITES: usize = 30;

    pub fn new(sites: usize, domain_length: f64, boundary: Boundary) -> Result<Self> {
        if sites == 0 || sites > Self::MAX_SITES {
            return Err(Error::InvalidGrid(format!(
                "site count {sites} outside 1..={}",
                Self::MAX_SITES
            )));
        }
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive and finite, got {domain_length}"
            )));
        }
        if let Boundary::Dirichlet { left, right } = boundary {
            if !(left.is_finite() && right.is_finite()) {
                return Err(Error::InvalidGrid("non-finite boundary value".into()));
            }
        }
        Ok(Self {
            sites,
            domain_length,
            boundary,
        })
    }

    /// Periodic grid on `[0, 1)`.
    pub fn periodic(sites: usize) -> Result<Self> {
        Self::new(sites, 1.0, Boundary::Periodic)
    }

    /// Number of binary sites `L`.
    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Number of grid points `N = 2^L`.
    pub fn n(&self) -> usize {
        1 << self.sites
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.n() as f64
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.x(i)).collect()
    }
}

/// Samples of a scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n() {
            return Err(Error::LengthMismatch {
                expected: spec.n(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.n()],
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..spec.n()).map(|i| f(spec.x(i))).collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Writes `x,u` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48 + 4);
        out.push_str("x,u\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.spec.x(i), v);
        }
        out
    }

    /// Parses `x,u` CSV text against a known grid.
    pub fn from_csv(spec: GridSpec, text: &str) -> Result<Self> {
        let (xs, us) = parse_xu_csv(text)?;
        let field = Self::new(spec, us)?;
        for (i, x) in xs.iter().enumerate() {
            if (x - spec.x(i)).abs() > 1e-9 * spec.domain_length() {
                return Err(Error::Parse(format!(
                    "row {i}: x={x} does not match grid point {}",
                    spec.x(i)
                )));
            }
        }
        Ok(field)
    }
}

/// Parses a two-column `x,u` CSV with header.
pub fn parse_xu_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next().map(str::trim) {
        Some("x,u") => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header `x,u`, found {other:?}"
            )))
        }
    }
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for (row, line) in lines.enumerate() {
        let mut cols = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            cols.next()
                .ok_or_else(|| Error::Parse(format!("row {row}: missing column {name}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {row}: {name}: {e}")))
        };
        xs.push(next("x")?);
        us.push(next("u")?);
    }
    Ok((xs, us))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `sin(2 pi x / domain_length)`
    SinFull,
    /// `-sin(pi x)`
    NegSinHalf,
    Custom(Vec<f64>),
}

impl InitialCondition {
    pub fn sample(&self, spec: GridSpec) -> Result<Field> {
        match self {
            Self::SinFull => {
                let len = spec.domain_length();
                Ok(Field::from_fn(spec, |x| (2.0 * PI * x / len).sin()))
            }
            Self::NegSinHalf => Ok(Field::from_fn(spec, |x| -(PI * x).sin())),
            Self::Custom(v) => Field::new(spec, v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurgersConfig {
    pub spec: GridSpec,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub initial_condition: InitialCondition,
    /// Skip the explicit stability check.
    pub allow_unstable: bool,
}

impl BurgersConfig {
    /// L=8, nu=0.05, dt=1e-4, T=0.2, periodic `sin(2 pi x)`.
    pub fn default_experiment() -> Self {
        Self {
            spec: GridSpec::periodic(8).expect("valid default grid"),
            nu: 0.05,
            dt: 1e-4,
            t_final: 0.2,
            initial_condition: InitialCondition::SinFull,
            allow_unstable: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "nu must be >= 0, got {}",
                self.nu
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_final must be >= 0, got {}",
                self.t_final
            )));
        }
        if let InitialCondition::Custom(v) = &self.initial_condition {
            if v.len() != self.spec.n() {
                return Err(Error::LengthMismatch {
                    expected: self.spec.n(),
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Number of Euler steps, `ceil(t_final / dt)` with a tolerance for
    /// ratios that are integral up to roundoff.
    pub fn steps(&self) -> usize {
        step_count(self.t_final, self.dt)
    }
}

pub(crate) fn step_count(t_final: f64, dt: f64) -> usize {
    let ratio = t_final / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Largest explicit time step accepted for the given viscosity, grid
/// spacing and velocity scale: `min(dx^2 / (2 nu), dx / max|u|)`.
pub fn stability_bound(nu: f64, dx: f64, umax: f64) -> f64 {
    let diffusive = if nu > 0.0 {
        dx * dx / (2.0 * nu)
    } else {
        f64::INFINITY
    };
    let advective = dx / umax.max(1e-12);
    diffusive.min(advective)
}

pub fn check_stability(nu: f64, dt: f64, spec: &GridSpec, umax: f64) -> Result<()> {
    let dx = spec.dx();
    let dt_max = stability_bound(nu, dx, umax);
    if dt > dt_max {
        return Err(Error::Unstable {
            dt,
            dt_max,
            nu,
            dx,
            umax,
        });
    }
    Ok(())
}

/// Dense first- and second-derivative matrices (central differences).
///
/// Periodic grids get the circulant forms; Dirichlet grids drop the
/// wrap-around corners (boundary data enters through [`boundary_terms`]).
pub fn derivative_matrices(spec: &GridSpec) -> (Mat<f64>, Mat<f64>) {
    let n = spec.n();
    let dx = spec.dx();
    let c1 = 1.0 / (2.0 * dx);
    let c2 = 1.0 / (dx * dx);
    let mut d1 = Mat::zeros(n, n);
    let mut d2 = Mat::zeros(n, n);
    for i in 0..n {
        d2[(i, i)] += -2.0 * c2;
        if i + 1 < n {
            d1[(i, i + 1)] += c1;
            d2[(i, i + 1)] += c2;
        } else if spec.is_periodic() {
            d1[(i, 0)] += c1;
            d2[(i, 0)] += c2;
        }
        if i > 0 {
            d1[(i, i - 1)] -= c1;
            d2[(i, i - 1)] += c2;
        } else if spec.is_periodic() {
            d1[(i, n - 1)] -= c1;
            d2[(i, n - 1)] += c2;
        }
    }
    (d1, d2)
}

/// Contributions of the Dirichlet ghost values to `D1 u` and `D2 u`.
/// Zero for periodic grids.
pub fn boundary_terms(spec: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.n();
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    if let Boundary::Dirichlet { left, right } = spec.boundary() {
        let dx = spec.dx();
        b1[0] -= left / (2.0 * dx);
        b2[0] += left / (dx * dx);
        b1[n - 1] += right / (2.0 * dx);
        b2[n - 1] += right / (dx * dx);
    }
    (b1, b2)
}

/// Right-hand side `-u * (D1 u) + nu * (D2 u)` evaluated with the stencils.
pub fn burgers_rhs(u: &Field, nu: f64) -> Vec<f64> {
    let spec = u.spec();
    let n = spec.n();
    let dx = spec.dx();
    let v = u.values();
    let (left_ghost, right_ghost) = match spec.boundary() {
        Boundary::Periodic => (v[n - 1], v[0]),
        Boundary::Dirichlet { left, right } => (left, right),
    };
    (0..n)
        .map(|i| {
            let prev = if i == 0 { left_ghost } else { v[i - 1] };
            let next = if i + 1 == n { right_ghost } else { v[i + 1] };
            let du = (next - prev) / (2.0 * dx);
            let ddu = (next - 2.0 * v[i] + prev) / (dx * dx);
            -v[i] * du + nu * ddu
        })
        .collect()
}

/// One explicit Euler step, rejecting `dt` above [`stability_bound`].
pub fn fdm_step(u: &Field, nu: f64, dt: f64) -> Result<Field> {
    check_stability(nu, dt, u.spec(), u.max_abs())?;
    Ok(fdm_step_unchecked(u, nu, dt))
}

/// One explicit Euler step without the stability check.
pub fn fdm_step_unchecked(u: &Field, nu: f64, dt: f64) -> Field {
    let rhs = burgers_rhs(u, nu);
    let mut values: Vec<f64> = u
        .values()
        .iter()
        .zip(&rhs)
        .map(|(v, r)| v + dt * r)
        .collect();
    if let Boundary::Dirichlet { left, .. } = u.spec().boundary() {
        values[0] = left;
    }
    Field {
        spec: *u.spec(),
        values,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdmSolution {
    pub final_field: Field,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
}

/// Snapshot cadence used by all time-marching solvers.
pub fn snapshot_stride(steps: usize) -> usize {
    (steps / 100).max(1)
}

/// Integrates from the initial condition to `t_final`.
///
/// Snapshots are taken at step 0, every [`snapshot_stride`] steps, and at
/// the final step.
pub fn fdm_solve(cfg: &BurgersConfig) -> Result<FdmSolution> {
    cfg.validate()?;
    let mut u = cfg.initial_condition.sample(cfg.spec)?;
    if let Boundary::Dirichlet { left, .. } = cfg.spec.boundary() {
        u.values[0] = left;
    }
    let steps = cfg.steps();
    if !cfg.allow_unstable {
        check_stability(cfg.nu, cfg.dt, &cfg.spec, u.max_abs())?;
    }
    let stride = snapshot_stride(steps);
    let mut snapshots = vec![Snapshot {
        step: 0,
        time: 0.0,
        field: u.clone(),
    }];
    for step in 1..=steps {
        u = fdm_step_unchecked(&u, cfg.nu, cfg.dt);
        if !u.is_finite() {
            return Err(Error::BlowUp {
                step,
                time: step as f64 * cfg.dt,
                what: "non-finite value in FDM field".into(),
            });
        }
        if step % stride == 0 || step == steps {
            snapshots.push(Snapshot {
                step,
                time: step as f64 * cfg.dt,
                field: u.clone(),
            });
        }
    }
    Ok(FdmSolution {
        final_field: u,
        snapshots,
        steps,
    })
}

/// Dense matrix-vector product.
pub fn matvec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), v.len(), "matvec dimension mismatch");
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// Mean squared difference of two equal-length vectors.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse of unequal lengths");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// `||a - b||_2 / ||b||_2`, or the absolute norm when `b` vanishes.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_l2 of unequal lengths");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let base = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}
