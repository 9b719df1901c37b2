//! Experiment harness behind the command-line interface: drift runs over
//! the built-in systems, side-by-side method comparisons, convergence-order
//! estimates, and randomized checks of the exact-layer identities.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{
    exact_discrete_legendre, exact_one_form_identity, exact_step, retraction_shoot, ConfigPair,
};
use crate::flow::integrate_samples;
use crate::integrator::{
    projected_discrete_legendre, run, DiscreteConstraint, DiscreteForces, DiscreteLagrangian,
    DiscretizationScheme, LegendreSide, PairScalar, PairVector,
};
use crate::model::{inf_norm, ChartPoint, MatrixField, Momentum, State, Velocity};
use crate::settings::SolverSettings;
use crate::systems::{
    make_knife_edge, make_particle, particle_closed_flow, particle_mu_d,
    particle_retraction_closed, KnifeEdgeParams, SystemBundle,
};

/// Errors below this count as sitting on the roundoff floor and are dropped
/// from order fits.
const ORDER_FLOOR: f64 = 1e-12;

/// Identity-check thresholds, one per column of [`IdentityRow`].
const MOMENTUM_TOL: f64 = 1e-8;
const RETRACTION_TOL: f64 = 1e-8;
const MU_TOL: f64 = 1e-8;
const ONE_FORM_TOL: f64 = 1e-4;

/// Built-in system selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Particle,
    KnifeEdge,
    KnifeEdgePerturbed,
}

impl SystemKind {
    pub fn default_epsilon(self) -> f64 {
        match self {
            SystemKind::KnifeEdgePerturbed => 0.1,
            _ => 0.0,
        }
    }

    fn default_steps(self) -> usize {
        match self {
            SystemKind::Particle => 1200,
            _ => 600,
        }
    }

    fn default_q1(self) -> &'static str {
        match self {
            SystemKind::Particle => "0.4,0.4,auto",
            _ => "0.4,auto,0.4",
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            SystemKind::Particle => "particle",
            SystemKind::KnifeEdge => "knife-edge",
            SystemKind::KnifeEdgePerturbed => "knife-edge-perturbed",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "particle" => Ok(Self::Particle),
            "knife-edge" => Ok(Self::KnifeEdge),
            "knife-edge-perturbed" => Ok(Self::KnifeEdgePerturbed),
            other => Err(Error::InvalidConfig(format!(
                "unknown system '{other}'; expected particle, knife-edge, or knife-edge-perturbed"
            ))),
        }
    }
}

/// Integration method selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    /// Forced discrete stationarity equations with the discrete constraint.
    Mla,
    /// Same equations with the discrete forces dropped.
    Dla,
    /// Exact discrete flow through shooting.
    Exact,
    /// Continuous dynamics integrated at substep resolution.
    Continuous,
}

impl MethodKind {
    fn as_str(self) -> &'static str {
        match self {
            MethodKind::Mla => "mla",
            MethodKind::Dla => "dla",
            MethodKind::Exact => "exact",
            MethodKind::Continuous => "continuous",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mla" => Ok(Self::Mla),
            "dla" => Ok(Self::Dla),
            "exact" => Ok(Self::Exact),
            "continuous" => Ok(Self::Continuous),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}'; expected mla, dla, exact, or continuous"
            ))),
        }
    }
}

/// One seed coordinate: a fixed value or a slot solved from the method's
/// constraint function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordSpec {
    Value(f64),
    Auto,
}

impl FromStr for CoordSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("'{s}' is neither a number nor 'auto'")))?;
        if !v.is_finite() {
            return Err(Error::InvalidConfig(format!("coordinate '{s}' is not finite")));
        }
        Ok(Self::Value(v))
    }
}

/// Fully parsed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub method: MethodKind,
    pub step: f64,
    pub n_steps: usize,
    pub epsilon: f64,
    pub q0: Vec<CoordSpec>,
    pub q1: Vec<CoordSpec>,
    pub tail_fraction: f64,
    pub output: Option<PathBuf>,
}

/// Builder for [`ExperimentConfig`] fed from a config file and command-line
/// flags; later `set` calls override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct ConfigDraft {
    system: Option<String>,
    method: Option<String>,
    step: Option<String>,
    n_steps: Option<String>,
    epsilon: Option<String>,
    q0: Option<String>,
    q1: Option<String>,
    tail_fraction: Option<String>,
    output: Option<String>,
}

impl ConfigDraft {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let slot = match key {
            "system" => &mut self.system,
            "method" => &mut self.method,
            "h" | "step" => &mut self.step,
            "steps" | "n_steps" | "n-steps" => &mut self.n_steps,
            "epsilon" => &mut self.epsilon,
            "q0" => &mut self.q0,
            "q1" => &mut self.q1,
            "tail_fraction" | "tail-fraction" => &mut self.tail_fraction,
            "out" | "output" => &mut self.output,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        };
        *slot = Some(value.to_string());
        Ok(())
    }

    /// Returns the raw value stored under a key, if any.
    pub fn get(&self, key: &str) -> Option<&str> {
        match key {
            "system" => self.system.as_deref(),
            "method" => self.method.as_deref(),
            "h" | "step" => self.step.as_deref(),
            "steps" | "n_steps" | "n-steps" => self.n_steps.as_deref(),
            "epsilon" => self.epsilon.as_deref(),
            "q0" => self.q0.as_deref(),
            "q1" => self.q1.as_deref(),
            "tail_fraction" | "tail-fraction" => self.tail_fraction.as_deref(),
            "out" | "output" => self.output.as_deref(),
            _ => None,
        }
    }

    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    path.display(),
                    index + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let system = match &self.system {
            Some(s) => s.parse()?,
            None => SystemKind::Particle,
        };
        let method = match &self.method {
            Some(s) => s.parse()?,
            None => MethodKind::Mla,
        };
        let step = parse_positive(self.step.as_deref().unwrap_or("0.5"), "h")?;
        let n_steps: usize = match &self.n_steps {
            Some(s) => s
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("steps '{s}' is not a count")))?,
            None => system.default_steps(),
        };
        if n_steps == 0 {
            return Err(Error::InvalidConfig("steps must be positive".into()));
        }
        let epsilon = match &self.epsilon {
            Some(s) => {
                if system == SystemKind::Particle {
                    return Err(Error::InvalidConfig(
                        "the particle has no epsilon parameter".into(),
                    ));
                }
                let e: f64 = s
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("epsilon '{s}' is not a number")))?;
                if !e.is_finite() {
                    return Err(Error::InvalidConfig("epsilon must be finite".into()));
                }
                e
            }
            None => system.default_epsilon(),
        };
        let q0 = parse_coords(self.q0.as_deref().unwrap_or("0,0,0"))?;
        let q1 = parse_coords(self.q1.as_deref().unwrap_or(system.default_q1()))?;
        if q0.len() != 3 || q1.len() != 3 {
            return Err(Error::InvalidConfig(
                "seed configurations need exactly three coordinates".into(),
            ));
        }
        if q0.contains(&CoordSpec::Auto) {
            return Err(Error::InvalidConfig(
                "q0 must be fully specified; 'auto' is only valid in q1".into(),
            ));
        }
        if q1.iter().filter(|c| **c == CoordSpec::Auto).count() > 1 {
            return Err(Error::InvalidConfig(
                "at most one q1 coordinate may be 'auto'".into(),
            ));
        }
        let tail_fraction = match &self.tail_fraction {
            Some(s) => {
                let f: f64 = s.parse().map_err(|_| {
                    Error::InvalidConfig(format!("tail_fraction '{s}' is not a number"))
                })?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidConfig(
                        "tail_fraction must lie in (0, 1]".into(),
                    ));
                }
                f
            }
            None => 0.8,
        };
        Ok(ExperimentConfig {
            system,
            method,
            step,
            n_steps,
            epsilon,
            q0,
            q1,
            tail_fraction,
            output: self.output.as_ref().map(PathBuf::from),
        })
    }
}

fn parse_positive(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{what} '{s}' is not a number")))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} must be positive and finite"
        )))
    }
}

fn parse_coords(s: &str) -> Result<Vec<CoordSpec>> {
    s.split(',').map(|part| part.trim().parse()).collect()
}

/// Energy drift statistics of one run.
#[derive(Debug, Clone)]
pub struct DriftReport {
    /// First value of the series; drift is measured against it.
    pub reference_value: f64,
    /// Largest |H_k - H_0| over the whole series.
    pub max_abs_drift: f64,
    /// Standard deviation of the tail window around the tail mean.
    pub tail_std: f64,
    /// Index where the tail window starts.
    pub tail_start: usize,
}

impl DriftReport {
    pub fn from_series(series: &[f64], tail_fraction: f64) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidConfig("drift series is empty".into()));
        }
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "tail_fraction must lie in (0, 1]".into(),
            ));
        }
        let reference_value = series[0];
        let max_abs_drift = series
            .iter()
            .fold(0.0_f64, |m, x| m.max((x - reference_value).abs()));
        // The tail window is the last ceil(len * fraction) entries.
        let tail_len = ((series.len() as f64) * tail_fraction).ceil() as usize;
        let tail_start = series.len() - tail_len.clamp(1, series.len());
        let tail = &series[tail_start..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / tail.len() as f64;
        Ok(Self {
            reference_value,
            max_abs_drift,
            tail_std: var.sqrt(),
            tail_start,
        })
    }
}

/// One output row of a drift run. The momentum columns hold the frame
/// momenta whose restricted Hamiltonian is reported; `omega_inf` is the
/// method's own constraint residual (discrete constraint for mla/dla,
/// shooting miss for exact, continuous constraint pairing for continuous).
#[derive(Debug, Clone)]
pub struct Row {
    pub step: usize,
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub h_value: f64,
    pub omega_inf: f64,
    pub newton_iters: usize,
}

/// Result of one drift run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Seed configurations with any `auto` slot resolved.
    pub q0: ChartPoint,
    pub q1: ChartPoint,
    pub rows: Vec<Row>,
    pub drift: DriftReport,
}

fn build_bundle(config: &ExperimentConfig) -> Result<SystemBundle> {
    match config.system {
        SystemKind::Particle => make_particle(config.step),
        SystemKind::KnifeEdge | SystemKind::KnifeEdgePerturbed => make_knife_edge(
            &KnifeEdgeParams {
                epsilon: config.epsilon,
            },
            config.step,
        ),
    }
}

/// Solves one coordinate of q1 so that `residual` vanishes, by a scalar
/// Newton iteration with a difference slope.
fn solve_auto_slot(
    residual: &dyn Fn(&DVector<f64>) -> Result<f64>,
    q1: &DVector<f64>,
    slot: usize,
) -> Result<DVector<f64>> {
    let mut q = q1.clone();
    for _ in 0..50 {
        let f = residual(&q)?;
        if f.abs() < 1e-13 {
            return Ok(q);
        }
        let s = 1e-6 * (1.0 + q[slot].abs());
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[slot] += s;
        qm[slot] -= s;
        let slope = (residual(&qp)? - residual(&qm)?) / (2.0 * s);
        if slope.abs() < 1e-14 {
            return Err(Error::SingularJacobian);
        }
        q[slot] -= f / slope;
    }
    let f = residual(&q)?;
    if f.abs() < 1e-11 {
        Ok(q)
    } else {
        Err(Error::NewtonStalled {
            residual: f.abs(),
            iterations: 50,
        })
    }
}

fn resolve_seeds(
    config: &ExperimentConfig,
    bundle: &SystemBundle,
) -> Result<(ChartPoint, ChartPoint)> {
    if config.q0.contains(&CoordSpec::Auto) {
        return Err(Error::InvalidConfig(
            "q0 must be fully specified; 'auto' is only valid in q1".into(),
        ));
    }
    let q0 = DVector::from_iterator(
        config.q0.len(),
        config.q0.iter().map(|c| match c {
            CoordSpec::Value(v) => *v,
            CoordSpec::Auto => unreachable!("rejected above"),
        }),
    );
    let mut q1 = DVector::zeros(config.q1.len());
    let mut auto_slot = None;
    for (i, c) in config.q1.iter().enumerate() {
        match c {
            CoordSpec::Value(v) => q1[i] = *v,
            CoordSpec::Auto => {
                q1[i] = q0[i];
                auto_slot = Some(i);
            }
        }
    }
    if let Some(slot) = auto_slot {
        let q1_resolved = match config.method {
            MethodKind::Exact => match config.system {
                SystemKind::Particle => {
                    let h = config.step;
                    let q0c = q0.clone();
                    let residual =
                        move |q: &DVector<f64>| -> Result<f64> { Ok(particle_mu_d(&q0c, q, h)) };
                    solve_auto_slot(&residual, &q1, slot)?
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "the exact method has no closed reachability function for this system; \
                         give q1 explicitly"
                            .into(),
                    ))
                }
            },
            _ => {
                let scheme = bundle.scheme.clone();
                let q0c = q0.clone();
                let residual = move |q: &DVector<f64>| -> Result<f64> {
                    Ok(scheme.constraint().omega(&q0c, q)?[0])
                };
                solve_auto_slot(&residual, &q1, slot)?
            }
        };
        q1 = q1_resolved;
    }
    Ok((ChartPoint::new(q0)?, ChartPoint::new(q1)?))
}

/// Initial velocity used by the continuous baseline: the particle has a
/// closed retraction; the knife edge projects the chord velocity onto the
/// distribution.
fn continuous_initial_velocity(
    kind: SystemKind,
    bundle: &SystemBundle,
    q0: &ChartPoint,
    q1: &ChartPoint,
    step: f64,
) -> Result<Velocity> {
    match kind {
        SystemKind::Particle => particle_retraction_closed(q0, q1, step),
        _ => {
            let chord = Velocity::new((q1.coords() - q0.coords()) / step)?;
            bundle.system.project_velocity(q0, &chord)
        }
    }
}

fn discrete_rows(
    bundle: &SystemBundle,
    q0: &ChartPoint,
    q1: &ChartPoint,
    config: &ExperimentConfig,
    settings: &SolverSettings,
    with_forces: bool,
) -> Result<(Vec<Row>, Vec<f64>)> {
    let scheme = if with_forces {
        bundle.scheme.clone()
    } else {
        bundle.scheme.without_forces()
    };
    let traj = run(&scheme, q0, q1, config.n_steps, settings)?;
    let len = traj.points.len();
    let mut rows = Vec::with_capacity(len);
    let mut series = Vec::with_capacity(len);
    for k in 0..len {
        let pair = k.min(len - 2);
        let qa = traj.points[pair].coords();
        let qb = traj.points[pair + 1].coords();
        let side = if k == len - 1 {
            LegendreSide::Plus
        } else {
            LegendreSide::Minus
        };
        let p = projected_discrete_legendre(&scheme, &bundle.system, qa, qb, side)?;
        let at = traj.points[k].coords();
        let h_value = (bundle.restricted_hamiltonian)(at, p.coords())?;
        let omega_inf = inf_norm(&scheme.constraint().omega(qa, qb)?);
        let newton_iters = if k < 2 { 0 } else { traj.newton_iterations[k - 2] };
        rows.push(Row {
            step: k,
            t: k as f64 * config.step,
            q: at.clone(),
            p: p.coords().clone(),
            h_value,
            omega_inf,
            newton_iters,
        });
        series.push(h_value);
    }
    Ok((rows, series))
}

fn exact_rows(
    bundle: &SystemBundle,
    q0: &ChartPoint,
    q1: &ChartPoint,
    config: &ExperimentConfig,
    settings: &SolverSettings,
) -> Result<(Vec<Row>, Vec<f64>)> {
    let sys = &bundle.system;
    let step = config.step;
    let mut pairs = vec![ConfigPair::new(q0.clone(), q1.clone(), step)?];
    let mut shots = Vec::with_capacity(config.n_steps + 1);
    for _ in 0..config.n_steps {
        let (next, shot) = exact_step(sys, pairs.last().expect("seeded"), settings)?;
        shots.push(shot);
        pairs.push(next);
    }
    shots.push(retraction_shoot(
        sys,
        pairs.last().expect("seeded"),
        None,
        settings,
    )?);

    let mut rows = Vec::with_capacity(config.n_steps + 2);
    let mut series = Vec::with_capacity(config.n_steps + 2);
    for (k, (pair, shot)) in pairs.iter().zip(&shots).enumerate() {
        let at = pair.q0();
        let m = sys.lagrangian().mass_matrix(at.coords())?;
        let p = sys.momentum_restrict(at, &Momentum::new(&m * shot.velocity.coords())?)?;
        let h_value = (bundle.restricted_hamiltonian)(at.coords(), p.coords())?;
        rows.push(Row {
            step: k,
            t: k as f64 * step,
            q: at.coords().clone(),
            p: p.coords().clone(),
            h_value,
            omega_inf: shot.terminal_error,
            newton_iters: shot.iterations,
        });
        series.push(h_value);
    }
    // Far endpoint of the last pair, paired with the arriving momentum.
    let last = pairs.last().expect("seeded");
    let last_shot = shots.last().expect("one shot per pair");
    let samples = integrate_samples(
        sys,
        last.q0().coords(),
        last_shot.velocity.coords(),
        step / settings.substeps as f64,
        settings.substeps,
        settings.substeps,
    )?;
    let (q_end, v_end) = samples.last().expect("integration records the endpoint");
    let m = sys.lagrangian().mass_matrix(q_end)?;
    let p = sys.momentum_restrict(last.q1(), &Momentum::new(&m * v_end)?)?;
    let h_value = (bundle.restricted_hamiltonian)(last.q1().coords(), p.coords())?;
    let k = pairs.len();
    rows.push(Row {
        step: k,
        t: k as f64 * step,
        q: last.q1().coords().clone(),
        p: p.coords().clone(),
        h_value,
        omega_inf: last_shot.terminal_error,
        newton_iters: 0,
    });
    series.push(h_value);
    Ok((rows, series))
}

fn continuous_rows(
    bundle: &SystemBundle,
    kind: SystemKind,
    q0: &ChartPoint,
    q1: &ChartPoint,
    config: &ExperimentConfig,
    settings: &SolverSettings,
) -> Result<(Vec<Row>, Vec<f64>)> {
    let sys = &bundle.system;
    let v0 = continuous_initial_velocity(kind, bundle, q0, q1, config.step)?;
    let per = settings.substeps;
    let samples = integrate_samples(
        sys,
        q0.coords(),
        v0.coords(),
        config.step / per as f64,
        (config.n_steps + 1) * per,
        per,
    )?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut series = Vec::with_capacity(samples.len());
    for (k, (q, v)) in samples.iter().enumerate() {
        let point = ChartPoint::new(q.clone())?;
        let m = sys.lagrangian().mass_matrix(q)?;
        let p = sys.momentum_restrict(&point, &Momentum::new(&m * v)?)?;
        let h_value = (bundle.restricted_hamiltonian)(q, p.coords())?;
        let omega_inf = inf_norm(&(sys.constraint_matrix(q)? * v));
        rows.push(Row {
            step: k,
            t: k as f64 * config.step,
            q: q.clone(),
            p: p.coords().clone(),
            h_value,
            omega_inf,
            newton_iters: 0,
        });
        series.push(h_value);
    }
    Ok((rows, series))
}

fn float_cell(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, rows: &[Row], dimension: usize, corank: usize) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let mut header = String::from("step,t");
    for i in 1..=dimension {
        header.push_str(&format!(",q{i}"));
    }
    for i in 1..=(dimension - corank) {
        header.push_str(&format!(",p{i}"));
    }
    header.push_str(",H_restricted,omega_residual_inf,newton_iters");
    writeln!(file, "{header}")?;
    for row in rows {
        let mut line = format!("{},{}", row.step, float_cell(row.t));
        for x in row.q.iter() {
            line.push(',');
            line.push_str(&float_cell(*x));
        }
        for x in row.p.iter() {
            line.push(',');
            line.push_str(&float_cell(*x));
        }
        line.push_str(&format!(
            ",{},{},{}",
            float_cell(row.h_value),
            float_cell(row.omega_inf),
            row.newton_iters
        ));
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// Runs one method on one system and reports the per-step table plus drift
/// statistics; writes the table as CSV when the config names an output.
pub fn run_experiment(
    config: &ExperimentConfig,
    settings: &SolverSettings,
) -> Result<ExperimentReport> {
    let bundle = build_bundle(config)?;
    let (q0, q1) = resolve_seeds(config, &bundle)?;
    let (rows, series) = match config.method {
        MethodKind::Mla => discrete_rows(&bundle, &q0, &q1, config, settings, true)?,
        MethodKind::Dla => discrete_rows(&bundle, &q0, &q1, config, settings, false)?,
        MethodKind::Exact => exact_rows(&bundle, &q0, &q1, config, settings)?,
        MethodKind::Continuous => {
            continuous_rows(&bundle, config.system, &q0, &q1, config, settings)?
        }
    };
    let drift = DriftReport::from_series(&series, config.tail_fraction)?;
    if let Some(path) = &config.output {
        write_csv(
            path,
            &rows,
            bundle.system.dimension(),
            bundle.system.corank(),
        )?;
    }
    Ok(ExperimentReport {
        q0,
        q1,
        rows,
        drift,
    })
}

/// Drift and reference-error summary of one method inside a comparison.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: MethodKind,
    pub tail_std: f64,
    pub max_abs_drift: f64,
    /// Largest |H_method - H_reference| over the shared grid.
    pub max_error: f64,
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub step: usize,
    pub t: f64,
    pub h_a: f64,
    pub h_b: f64,
    pub err_a: f64,
    pub err_b: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub a: MethodSummary,
    pub b: MethodSummary,
    pub rows: Vec<CompareRow>,
}

fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "step,t,H_a,H_b,err_a,err_b")?;
    for row in rows {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            row.step,
            float_cell(row.t),
            float_cell(row.h_a),
            float_cell(row.h_b),
            float_cell(row.err_a),
            float_cell(row.err_b)
        )?;
    }
    Ok(())
}

/// Runs the config's method and `method_b` on the same seed and compares
/// both restricted-Hamiltonian series against the continuous baseline.
/// Seeds with an `auto` slot are resolved per method, so mixing the exact
/// method with the discrete ones needs explicitly reachable seeds.
pub fn compare_methods(
    config: &ExperimentConfig,
    method_b: MethodKind,
    settings: &SolverSettings,
) -> Result<CompareReport> {
    let mut cfg_a = config.clone();
    cfg_a.output = None;
    let mut cfg_b = cfg_a.clone();
    cfg_b.method = method_b;
    let report_a = run_experiment(&cfg_a, settings)?;
    let report_b = run_experiment(&cfg_b, settings)?;

    let bundle = build_bundle(config)?;
    let (ref_rows, ref_series) = continuous_rows(
        &bundle,
        config.system,
        &report_a.q0,
        &report_a.q1,
        &cfg_a,
        settings,
    )?;
    drop(ref_rows);

    let len = report_a
        .rows
        .len()
        .min(report_b.rows.len())
        .min(ref_series.len());
    let mut rows = Vec::with_capacity(len);
    let (mut max_err_a, mut max_err_b) = (0.0_f64, 0.0_f64);
    for (k, reference) in ref_series.iter().take(len).enumerate() {
        let h_a = report_a.rows[k].h_value;
        let h_b = report_b.rows[k].h_value;
        let err_a = (h_a - reference).abs();
        let err_b = (h_b - reference).abs();
        max_err_a = max_err_a.max(err_a);
        max_err_b = max_err_b.max(err_b);
        rows.push(CompareRow {
            step: k,
            t: k as f64 * config.step,
            h_a,
            h_b,
            err_a,
            err_b,
        });
    }
    if let Some(path) = &config.output {
        write_compare_csv(path, &rows)?;
    }
    Ok(CompareReport {
        a: MethodSummary {
            method: cfg_a.method,
            tail_std: report_a.drift.tail_std,
            max_abs_drift: report_a.drift.max_abs_drift,
            max_error: max_err_a,
        },
        b: MethodSummary {
            method: method_b,
            tail_std: report_b.drift.tail_std,
            max_abs_drift: report_b.drift.max_abs_drift,
            max_error: max_err_b,
        },
        rows,
    })
}

/// System selected for an order estimate; the oscillator and free particle
/// are unconstrained one-dimensional baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderSystem {
    Particle,
    KnifeEdge,
    KnifeEdgePerturbed,
    HarmonicOscillator,
    FreeParticle,
}

impl fmt::Display for OrderSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderSystem::Particle => "particle",
            OrderSystem::KnifeEdge => "knife-edge",
            OrderSystem::KnifeEdgePerturbed => "knife-edge-perturbed",
            OrderSystem::HarmonicOscillator => "harmonic-oscillator",
            OrderSystem::FreeParticle => "free-particle",
        })
    }
}

impl FromStr for OrderSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "particle" => Ok(Self::Particle),
            "knife-edge" => Ok(Self::KnifeEdge),
            "knife-edge-perturbed" => Ok(Self::KnifeEdgePerturbed),
            "harmonic-oscillator" => Ok(Self::HarmonicOscillator),
            "free-particle" => Ok(Self::FreeParticle),
            other => Err(Error::InvalidConfig(format!(
                "unknown order system '{other}'"
            ))),
        }
    }
}

/// Discretization selected for an order estimate. The one-dimensional
/// baselines have no forces or constraint, so all three choices coincide
/// there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMethod {
    Mla,
    Dla,
    Del,
}

impl fmt::Display for OrderMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMethod::Mla => "mla",
            OrderMethod::Dla => "dla",
            OrderMethod::Del => "del",
        })
    }
}

impl FromStr for OrderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mla" => Ok(Self::Mla),
            "dla" => Ok(Self::Dla),
            "del" => Ok(Self::Del),
            other => Err(Error::InvalidConfig(format!(
                "unknown order method '{other}'; expected mla, dla, or del"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OrderPoint {
    pub step: f64,
    pub error: f64,
}

/// Log-log fit of final-time errors against step sizes.
#[derive(Debug, Clone)]
pub struct OrderEstimate {
    pub points: Vec<OrderPoint>,
    /// Fitted slope; `None` when fewer than two points sit above the floor.
    pub slope: Option<f64>,
    /// Root-mean-square residual of the fit in log space.
    pub fit_residual: f64,
    /// Step sizes dropped because their error sat on the roundoff floor.
    pub excluded: Vec<f64>,
    pub at_floor: bool,
}

/// Midpoint discretization of L = v^2/2 - spring q^2/2 with analytic slot
/// gradients; spring = 0 gives the free particle.
fn quadratic_1d_scheme(step: f64, spring: f64) -> Result<DiscretizationScheme> {
    let h = step;
    let value: PairScalar = Arc::new(move |q0, q1| {
        let v = (q1[0] - q0[0]) / h;
        let mid = 0.5 * (q0[0] + q1[0]);
        Ok(h * (0.5 * v * v - 0.5 * spring * mid * mid))
    });
    let d1: PairVector = Arc::new(move |q0, q1| {
        Ok(DVector::from_row_slice(&[
            -(q1[0] - q0[0]) / h - spring * h * (q0[0] + q1[0]) / 4.0,
        ]))
    });
    let d2: PairVector = Arc::new(move |q0, q1| {
        Ok(DVector::from_row_slice(&[
            (q1[0] - q0[0]) / h - spring * h * (q0[0] + q1[0]) / 4.0,
        ]))
    });
    let frame: MatrixField = Arc::new(|q| Ok(DMatrix::identity(q.len(), q.len())));
    DiscretizationScheme::new(
        DiscreteLagrangian::new(value).with_gradients(d1, d2),
        DiscreteForces::zero(1),
        DiscreteConstraint::empty(),
        frame,
        1,
    )
}

/// Strips forces and constraint off a scheme, keeping its discrete
/// Lagrangian on the identity frame.
fn unconstrained_of(scheme: &DiscretizationScheme) -> Result<DiscretizationScheme> {
    let n = scheme.dimension();
    let frame: MatrixField = Arc::new(|q| Ok(DMatrix::identity(q.len(), q.len())));
    DiscretizationScheme::new(
        scheme.lagrangian().clone(),
        DiscreteForces::zero(n),
        DiscreteConstraint::empty(),
        frame,
        n,
    )
}

fn order_scheme(bundle: &SystemBundle, method: OrderMethod) -> Result<DiscretizationScheme> {
    match method {
        OrderMethod::Mla => Ok(bundle.scheme.clone()),
        OrderMethod::Dla => Ok(bundle.scheme.without_forces()),
        OrderMethod::Del => unconstrained_of(&bundle.scheme),
    }
}

fn final_error(
    system: OrderSystem,
    method: OrderMethod,
    h: f64,
    n: usize,
    settings: &SolverSettings,
) -> Result<f64> {
    match system {
        OrderSystem::Particle => {
            let bundle = make_particle(h)?;
            let scheme = order_scheme(&bundle, method)?;
            let start = State::from_slices(&[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0])?;
            let exact1 = particle_closed_flow(&start, h)?;
            let q1 = match method {
                OrderMethod::Del => exact1.q.clone(),
                _ => {
                    // The discrete constraint is affine in z, so the
                    // admissible seed height is explicit.
                    let c = exact1.q.coords();
                    ChartPoint::from_slice(&[c[0], c[1], 0.5 * c[1] * c[0]])?
                }
            };
            let traj = run(&scheme, &start.q, &q1, n - 1, settings)?;
            let reference = particle_closed_flow(&start, h * n as f64)?;
            Ok(inf_norm(
                &(traj.points.last().expect("seeded").coords() - reference.q.coords()),
            ))
        }
        OrderSystem::KnifeEdge | OrderSystem::KnifeEdgePerturbed => {
            let epsilon = if system == OrderSystem::KnifeEdgePerturbed {
                0.1
            } else {
                0.0
            };
            let bundle = make_knife_edge(&KnifeEdgeParams { epsilon }, h)?;
            let scheme = order_scheme(&bundle, method)?;
            let q0 = ChartPoint::from_slice(&[0.0, 0.0, 0.0])?;
            let v0 = DVector::from_row_slice(&[1.0, 0.0, 1.0]);
            let sub = settings.substeps;
            let first = integrate_samples(&bundle.system, q0.coords(), &v0, h / sub as f64, sub, sub)?;
            let q1_exact = first.last().expect("endpoint").0.clone();
            let q1 = match method {
                OrderMethod::Del => ChartPoint::new(q1_exact)?,
                _ => {
                    let sch = scheme.clone();
                    let q0c = q0.coords().clone();
                    let residual = move |q: &DVector<f64>| -> Result<f64> {
                        Ok(sch.constraint().omega(&q0c, q)?[0])
                    };
                    ChartPoint::new(solve_auto_slot(&residual, &q1_exact, 1)?)?
                }
            };
            let traj = run(&scheme, &q0, &q1, n - 1, settings)?;
            let reference =
                integrate_samples(&bundle.system, q0.coords(), &v0, h / sub as f64, n * sub, n * sub)?;
            Ok(inf_norm(
                &(traj.points.last().expect("seeded").coords()
                    - &reference.last().expect("endpoint").0),
            ))
        }
        OrderSystem::HarmonicOscillator => {
            let scheme = quadratic_1d_scheme(h, 1.0)?;
            let q0 = ChartPoint::from_slice(&[1.0])?;
            let q1 = ChartPoint::from_slice(&[h.cos()])?;
            let traj = run(&scheme, &q0, &q1, n - 1, settings)?;
            let reference = (h * n as f64).cos();
            Ok((traj.points.last().expect("seeded").coords()[0] - reference).abs())
        }
        OrderSystem::FreeParticle => {
            let scheme = quadratic_1d_scheme(h, 0.0)?;
            let q0 = ChartPoint::from_slice(&[0.0])?;
            let q1 = ChartPoint::from_slice(&[h])?;
            let traj = run(&scheme, &q0, &q1, n - 1, settings)?;
            let reference = h * n as f64;
            Ok((traj.points.last().expect("seeded").coords()[0] - reference).abs())
        }
    }
}

/// Measures final-time errors at each step size over a fixed horizon and
/// fits the convergence order in log-log space. Step sizes whose error sits
/// on the roundoff floor are excluded from the fit.
pub fn estimate_order(
    system: OrderSystem,
    method: OrderMethod,
    steps: &[f64],
    horizon: f64,
    settings: &SolverSettings,
) -> Result<OrderEstimate> {
    if steps.is_empty() {
        return Err(Error::InvalidConfig("no step sizes given".into()));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidConfig(
            "horizon must be positive and finite".into(),
        ));
    }
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for &h in steps {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidConfig(
                "step sizes must be positive and finite".into(),
            ));
        }
        let n = ((horizon / h).round() as usize).max(2);
        let error = final_error(system, method, h, n, settings)?;
        if error > ORDER_FLOOR {
            points.push(OrderPoint { step: h, error });
        } else {
            excluded.push(h);
        }
    }
    let at_floor = !excluded.is_empty();
    if points.len() < 2 {
        return Ok(OrderEstimate {
            points,
            slope: None,
            fit_residual: 0.0,
            excluded,
            at_floor: true,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.step.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = cov / var;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - slope * x - intercept;
            r * r
        })
        .sum();
    Ok(OrderEstimate {
        points,
        slope: Some(slope),
        fit_residual: (rss / n).sqrt(),
        excluded,
        at_floor,
    })
}

/// Gaps measured on one random reachable pair of the particle.
#[derive(Debug, Clone)]
pub struct IdentityRow {
    pub sample: usize,
    /// Mismatch between the arriving and departing exact momenta at the
    /// shared configuration.
    pub momentum_gap: f64,
    /// Shooting velocity against the closed retraction.
    pub retraction_gap: f64,
    /// Closed discrete constraint function on the pair.
    pub mu_residual: f64,
    /// Worst relative gap of the boundary one-form identity over two
    /// independent tangent variations.
    pub one_form_gap: f64,
}

impl IdentityRow {
    pub fn pass(&self) -> bool {
        self.momentum_gap < MOMENTUM_TOL
            && self.retraction_gap < RETRACTION_TOL
            && self.mu_residual < MU_TOL
            && self.one_form_gap < ONE_FORM_TOL
    }
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub step: f64,
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(IdentityRow::pass)
    }
}

/// Draws random reachable pairs of the particle and checks the exact-layer
/// identities on each: momentum matching along the exact flow, shooting
/// against the closed retraction, the closed discrete constraint function,
/// and the boundary one-form identity.
pub fn check_exact_identities(
    step: f64,
    samples: usize,
    settings: &SolverSettings,
) -> Result<IdentityReport> {
    if samples == 0 {
        return Err(Error::InvalidConfig("samples must be positive".into()));
    }
    let bundle = make_particle(step)?;
    let sys = &bundle.system;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut rows = Vec::with_capacity(samples);
    for sample in 0..samples {
        let q0 = ChartPoint::new(DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)))?;
        let c1: f64 = rng.random_range(-1.0..1.0);
        let sign = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
        let c2 = sign * rng.random_range(0.2..1.2);
        let frame = sys.frame_matrix(q0.coords())?;
        let v0 = Velocity::new(&frame * DVector::from_row_slice(&[c1, c2]))?;
        let state = State::new(q0.clone(), v0)?;
        let arrived = particle_closed_flow(&state, step)?;
        let pair = ConfigPair::new(q0.clone(), arrived.q.clone(), step)?;

        let (next, shot) = exact_step(sys, &pair, settings)?;
        let plus = exact_discrete_legendre(sys, &pair, LegendreSide::Plus, settings)?;
        let minus_next = exact_discrete_legendre(sys, &next, LegendreSide::Minus, settings)?;
        let momentum_gap = inf_norm(&(plus.coords() - minus_next.coords()));

        let closed = particle_retraction_closed(&q0, &arrived.q, step)?;
        let retraction_gap = inf_norm(&(shot.velocity.coords() - closed.coords()));

        let mu_residual = particle_mu_d(q0.coords(), arrived.q.coords(), step).abs();

        // Two independent variations of the far endpoint, tangent to the
        // reachable surface: slide x with the chart slope in z, and slide y
        // with the differenced chart slope.
        let zero = DVector::zeros(3);
        let (x0c, y0c) = (q0.coords()[0], q0.coords()[1]);
        let (x1c, y1c) = (arrived.q.coords()[0], arrived.q.coords()[1]);
        let gx = ((y1c * y1c + 1.0).sqrt() - (y0c * y0c + 1.0).sqrt())
            / (y1c.asinh() - y0c.asinh());
        let tangent_x = DVector::from_row_slice(&[1.0, 0.0, gx]);
        let chart = |y: f64| {
            (x1c - x0c) * ((y * y + 1.0).sqrt() - (y0c * y0c + 1.0).sqrt())
                / (y.asinh() - y0c.asinh())
        };
        let s = 1e-6 * (1.0 + y1c.abs());
        let gy = (chart(y1c + s) - chart(y1c - s)) / (2.0 * s);
        let tangent_y = DVector::from_row_slice(&[0.0, 1.0, gy]);
        let mut one_form_gap = 0.0_f64;
        for tangent in [tangent_x, tangent_y] {
            let check =
                exact_one_form_identity(sys, &pair, &zero, &tangent, &particle_mu_d, settings)?;
            one_form_gap = one_form_gap.max(check.gap());
        }

        rows.push(IdentityRow {
            sample,
            momentum_gap,
            retraction_gap,
            mu_residual,
            one_form_gap,
        });
    }
    Ok(IdentityReport { step, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn draft_defaults_describe_the_particle_run() {
        let config = ConfigDraft::default().build().unwrap();
        assert_eq!(config.system, SystemKind::Particle);
        assert_eq!(config.method, MethodKind::Mla);
        assert_abs_diff_eq!(config.step, 0.5);
        assert_eq!(config.n_steps, 1200);
        assert_abs_diff_eq!(config.epsilon, 0.0);
        assert_eq!(config.q1[2], CoordSpec::Auto);
        assert_abs_diff_eq!(config.tail_fraction, 0.8);
        assert!(config.output.is_none());
    }

    #[test]
    fn draft_rejects_bad_keys_and_values() {
        let mut draft = ConfigDraft::default();
        assert!(draft.set("stepsize", "0.5").is_err());
        draft.set("h", "nope").unwrap();
        assert!(draft.build().is_err());

        let mut draft = ConfigDraft::default();
        draft.set("epsilon", "0.1").unwrap();
        assert!(draft.build().is_err(), "epsilon on the particle");

        let mut draft = ConfigDraft::default();
        draft.set("q0", "0,auto,0").unwrap();
        assert!(draft.build().is_err(), "auto in q0");

        let mut draft = ConfigDraft::default();
        draft.set("q1", "auto,auto,0").unwrap();
        assert!(draft.build().is_err(), "two autos");

        let mut draft = ConfigDraft::default();
        draft.set("tail_fraction", "1.5").unwrap();
        assert!(draft.build().is_err());
    }

    #[test]
    fn config_file_merges_under_later_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# comment line\nsystem = knife-edge\nsteps = 50 # trailing comment\nh = 0.25\n",
        )
        .unwrap();
        let mut draft = ConfigDraft::default();
        draft.merge_file(&path).unwrap();
        draft.set("steps", "60").unwrap();
        let config = draft.build().unwrap();
        assert_eq!(config.system, SystemKind::KnifeEdge);
        assert_eq!(config.n_steps, 60);
        assert_abs_diff_eq!(config.step, 0.25);

        fs::write(&path, "just words\n").unwrap();
        let mut draft = ConfigDraft::default();
        assert!(draft.merge_file(&path).is_err());
    }

    #[test]
    fn drift_report_measures_the_tail_window() {
        let series = [0.0, 0.0, 0.0, 0.0, 1.0];
        let report = DriftReport::from_series(&series, 0.4).unwrap();
        assert_eq!(report.tail_start, 3);
        assert_abs_diff_eq!(report.reference_value, 0.0);
        assert_abs_diff_eq!(report.max_abs_drift, 1.0);
        assert_abs_diff_eq!(report.tail_std, 0.5, epsilon = 1e-15);

        let flat = [2.0; 10];
        let report = DriftReport::from_series(&flat, 0.8).unwrap();
        assert_abs_diff_eq!(report.max_abs_drift, 0.0);
        assert_abs_diff_eq!(report.tail_std, 0.0);
        assert_eq!(report.tail_start, 2);
    }

    #[test]
    fn seeds_resolve_per_method() {
        let mut draft = ConfigDraft::default();
        draft.set("steps", "1").unwrap();
        let config = draft.build().unwrap();
        let bundle = build_bundle(&config).unwrap();
        let (_, q1) = resolve_seeds(&config, &bundle).unwrap();
        assert_abs_diff_eq!(q1.coords()[2], 0.08, epsilon = 1e-12);

        let mut exact_cfg = config.clone();
        exact_cfg.method = MethodKind::Exact;
        let (_, q1) = resolve_seeds(&exact_cfg, &bundle).unwrap();
        let mu = particle_mu_d(
            &DVector::zeros(3),
            q1.coords(),
            config.step,
        );
        assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-12);
        assert!((q1.coords()[2] - 0.079).abs() < 1e-3);

        let mut draft = ConfigDraft::default();
        draft.set("system", "knife-edge").unwrap();
        draft.set("steps", "1").unwrap();
        let config = draft.build().unwrap();
        let bundle = build_bundle(&config).unwrap();
        let (_, q1) = resolve_seeds(&config, &bundle).unwrap();
        assert_abs_diff_eq!(q1.coords()[1], 0.2_f64.tan() * 0.4, epsilon = 1e-10);

        let mut exact_cfg = config.clone();
        exact_cfg.method = MethodKind::Exact;
        assert!(resolve_seeds(&exact_cfg, &bundle).is_err());
    }

    #[test]
    fn particle_run_produces_consistent_rows() {
        let mut draft = ConfigDraft::default();
        draft.set("steps", "10").unwrap();
        let config = draft.build().unwrap();
        let report = run_experiment(&config, &SolverSettings::default()).unwrap();
        assert_eq!(report.rows.len(), 12);
        for (k, row) in report.rows.iter().enumerate() {
            assert_eq!(row.step, k);
            assert_abs_diff_eq!(row.t, 0.5 * k as f64, epsilon = 1e-15);
            assert!(row.omega_inf < 1e-12);
            assert!(row.h_value.is_finite());
            assert_eq!(row.q.len(), 3);
            assert_eq!(row.p.len(), 2);
        }
        assert!(report.drift.max_abs_drift < 0.5);
        assert!(report.drift.tail_std <= report.drift.max_abs_drift);
    }

    #[test]
    fn csv_output_is_written_with_the_documented_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let mut draft = ConfigDraft::default();
        draft.set("steps", "5").unwrap();
        draft.set("out", path.to_str().unwrap()).unwrap();
        let config = draft.build().unwrap();
        run_experiment(&config, &SolverSettings::default()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,t,q1,q2,q3,p1,p2,H_restricted,omega_residual_inf,newton_iters"
        );
        assert_eq!(lines.count(), 7);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn exact_and_continuous_rows_share_the_grid() {
        let mut draft = ConfigDraft::default();
        draft.set("steps", "4").unwrap();
        draft.set("method", "exact").unwrap();
        let config = draft.build().unwrap();
        let exact = run_experiment(&config, &SolverSettings::default()).unwrap();
        assert_eq!(exact.rows.len(), 6);
        // The exact flow conserves the restricted Hamiltonian.
        assert!(exact.drift.max_abs_drift < 1e-7);

        let mut draft = ConfigDraft::default();
        draft.set("steps", "4").unwrap();
        draft.set("method", "continuous").unwrap();
        let config = draft.build().unwrap();
        let continuous = run_experiment(&config, &SolverSettings::default()).unwrap();
        assert_eq!(continuous.rows.len(), 6);
        assert!(continuous.drift.max_abs_drift < 1e-9);
        for row in &continuous.rows {
            assert!(row.omega_inf < 1e-10);
        }
    }

    #[test]
    fn comparison_pits_two_methods_against_the_baseline() {
        let mut draft = ConfigDraft::default();
        draft.set("steps", "20").unwrap();
        let config = draft.build().unwrap();
        let report =
            compare_methods(&config, MethodKind::Dla, &SolverSettings::default()).unwrap();
        assert_eq!(report.a.method, MethodKind::Mla);
        assert_eq!(report.b.method, MethodKind::Dla);
        assert_eq!(report.rows.len(), 22);
        assert!(report.a.max_error.is_finite());
        assert!(report.b.max_error.is_finite());
    }

    #[test]
    fn free_particle_errors_sit_on_the_floor() {
        let estimate = estimate_order(
            OrderSystem::FreeParticle,
            OrderMethod::Del,
            &[0.5, 0.25],
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(estimate.at_floor);
        assert!(estimate.slope.is_none());
        assert_eq!(estimate.excluded.len(), 2);
    }

    #[test]
    fn oscillator_order_is_quadratic() {
        let estimate = estimate_order(
            OrderSystem::HarmonicOscillator,
            OrderMethod::Del,
            &[0.2, 0.1, 0.05],
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        let slope = estimate.slope.unwrap();
        assert!((1.6..2.4).contains(&slope), "slope {slope}");
        assert!(!estimate.at_floor);
    }

    #[test]
    fn identity_checks_pass_on_random_reachable_pairs() {
        let report = check_exact_identities(0.5, 3, &SolverSettings::default()).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.all_pass(), "rows: {:?}", report.rows);
    }
}
