//! One-step maps (step-N Euler, log-ODE in two variants, Euler expansion of
//! the rough integral), the classical reference solver for piecewise-linear
//! drivers, and the global composition loop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::MonomialTable;
use crate::signature::{path_signature, GroupIncrementDriver, PiecewiseLinearPath};
use crate::tensor::{TruncatedTensor, MAX_DEPTH};
use crate::vector_field::{elementary_differential, VectorFieldSystem};

/// Default RK4 substeps for the inner log-ODE flow and reference solver.
pub const DEFAULT_SUBSTEPS: usize = 16;

/// The reference solver stops refining once two successive refinements
/// differ by less than this (relative to `max(1, |y|)`).
pub const REFERENCE_TOL: f64 = 1e-11;

const MAX_REFINEMENTS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    /// Log-ODE with the top log-signature level moved into the initial condition.
    #[serde(rename = "logode")]
    LogOde,
    /// Log-ODE flowing along every log-signature level.
    #[serde(rename = "logode_full", alias = "logode-full")]
    LogOdeFull,
    Reference,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::LogOde => "logode",
            Scheme::LogOdeFull => "logode_full",
            Scheme::Reference => "reference",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "logode" => Ok(Scheme::LogOde),
            "logode_full" | "logode-full" => Ok(Scheme::LogOdeFull),
            "reference" => Ok(Scheme::Reference),
            other => Err(Error::invalid(format!(
                "unknown scheme `{other}` (expected euler, logode, logode-full or reference)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// `M` steps of equal length (equal numbers of increments for group drivers).
    Uniform(usize),
    /// Greedy steps, each ending once the control reaches `threshold`.
    ControlThreshold { threshold: f64, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub depth: usize,
    pub substeps: usize,
    pub partition: Partition,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, depth: usize, substeps: usize, partition: Partition) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::invalid(format!("depth {depth} outside 1..={MAX_DEPTH}")));
        }
        if substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        match partition {
            Partition::Uniform(0) => return Err(Error::invalid("steps must be at least 1")),
            Partition::ControlThreshold { threshold, p } => {
                if !(threshold > 0.0) || !threshold.is_finite() {
                    return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
                }
                if !(p >= 1.0) {
                    return Err(Error::invalid(format!("p must be at least 1, got {p}")));
                }
            }
            Partition::Uniform(_) => {}
        }
        Ok(Self {
            scheme,
            depth,
            substeps,
            partition,
        })
    }

    pub fn uniform(scheme: Scheme, depth: usize, steps: usize) -> Result<Self> {
        Self::new(scheme, depth, DEFAULT_SUBSTEPS, Partition::Uniform(steps))
    }
}

/// States `y_{t_j}` at the partition times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    /// `max_j |y_j − z_j|` over shared indices; the trajectories must share times.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::mismatch("trajectories are sampled at different times"));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| euclid_dist(a, b))
            .fold(0.0, f64::max))
    }
}

pub(crate) fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_ode(f: &VectorFieldSystem, g: &TruncatedTensor, y: &[f64]) -> Result<()> {
    if f.dim_state() != f.dim_u() {
        return Err(Error::mismatch(format!(
            "fields map R^{} to R^{}; a differential equation needs one state space",
            f.dim_state(),
            f.dim_u()
        )));
    }
    if g.dim() != f.dim_v() {
        return Err(Error::mismatch(format!(
            "increment over R^{} but fields indexed by R^{}",
            g.dim(),
            f.dim_v()
        )));
    }
    if y.len() != f.dim_u() {
        return Err(Error::mismatch(format!("state has dimension {}, expected {}", y.len(), f.dim_u())));
    }
    if g.scalar() != 1.0 {
        return Err(Error::invalid("increment must have unit scalar part"));
    }
    Ok(())
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(u, v)| u + a * v).collect()
}

/// Step-N Euler: `y + Σ_{k=1..N} f^{∘k}(π_k g)(I_d)(y)` with `N = g.depth()`.
pub fn euler_step(f: &VectorFieldSystem, g: &TruncatedTensor, y: &[f64]) -> Result<Vec<f64>> {
    check_ode(f, g, y)?;
    let incr = elementary_differential(f, g, y)?;
    Ok(axpy(y, 1.0, &incr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogOdeVariant {
    /// Drift from levels `1..N−1`; level `N` enters the initial condition.
    TopLevelInInitialCondition,
    /// Drift from all levels `1..N`, started at `y`.
    FullDrift,
}

/// Classical RK4 for `dz/du = drift(z)` on `[0, 1]`.
pub(crate) fn rk4_unit(
    drift: impl Fn(&[f64]) -> Result<Vec<f64>>,
    z0: Vec<f64>,
    substeps: usize,
) -> Result<Vec<f64>> {
    let h = 1.0 / substeps as f64;
    let mut z = z0;
    for step in 0..substeps {
        let stage = |at: Vec<f64>| -> Result<Vec<f64>> {
            if at.iter().any(|x| !x.is_finite()) {
                return Err(Error::IntegrationFailure {
                    substep: step,
                    reason: "stage value became non-finite".into(),
                });
            }
            drift(&at)
        };
        let k1 = stage(z.clone())?;
        let k2 = stage(axpy(&z, 0.5 * h, &k1))?;
        let k3 = stage(axpy(&z, 0.5 * h, &k2))?;
        let k4 = stage(axpy(&z, h, &k3))?;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::IntegrationFailure {
                substep: step,
                reason: "state became non-finite".into(),
            });
        }
    }
    Ok(z)
}

/// One log-ODE step: flow for unit time along the field built from
/// `log_N(g)`, integrated by RK4 with `substeps` steps.
pub fn log_ode_step(
    f: &VectorFieldSystem,
    g: &TruncatedTensor,
    y: &[f64],
    variant: LogOdeVariant,
    substeps: usize,
) -> Result<Vec<f64>> {
    check_ode(f, g, y)?;
    if substeps == 0 {
        return Err(Error::invalid("substeps must be at least 1"));
    }
    let n = g.depth();
    let log = g.log()?;
    let (start, drift_tensor) = match variant {
        LogOdeVariant::TopLevelInInitialCondition => {
            let top = log.projection(n);
            let start = axpy(y, 1.0, &elementary_differential(f, &top, y)?);
            (start, log.sub(&top)?)
        }
        LogOdeVariant::FullDrift => (y.to_vec(), log),
    };
    if start.iter().any(|x| !x.is_finite()) {
        return Err(Error::IntegrationFailure {
            substep: 0,
            reason: "initial condition is non-finite".into(),
        });
    }
    rk4_unit(|z| elementary_differential(f, &drift_tensor, z), start, substeps)
}

/// Euler expansion of `∫ f(x) dx` over one step:
/// `Y_s + Σ_{k=1..N} Σ_w π_k(g)_w · D^{k−1} f(e_{i_k})(x_s)[e_{i_1}, …, e_{i_{k−1}}]`.
///
/// The last letter of each word feeds the linear slot of `f`; the earlier
/// letters fill the derivative slots.
pub fn euler_integral_step(
    f: &VectorFieldSystem,
    g: &TruncatedTensor,
    x_s: &[f64],
    y_s: &[f64],
) -> Result<Vec<f64>> {
    if f.dim_state() != f.dim_v() || g.dim() != f.dim_v() {
        return Err(Error::mismatch(format!(
            "integrand must act on the driver space R^{} (fields act on R^{}, increment over R^{})",
            f.dim_v(),
            f.dim_state(),
            g.dim()
        )));
    }
    if x_s.len() != f.dim_v() || y_s.len() != f.dim_u() {
        return Err(Error::mismatch("driver point or integral value has the wrong dimension"));
    }
    let n = g.depth();
    if n > f.smoothness_budget() {
        return Err(Error::invalid(format!(
            "depth {n} exceeds the smoothness budget {} of the integrand",
            f.smoothness_budget()
        )));
    }
    let d = f.dim_v();
    let table = MonomialTable::get(d, n - 1);
    let polys: Vec<_> = (0..d).map(|i| f.taylor(&table, i, x_s, n - 1)).collect();
    let mut out = y_s.to_vec();
    for k in 1..=n {
        for (offset, &w) in g.level(k).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut letters = vec![0; k];
            let mut idx = offset;
            for l in letters.iter_mut().rev() {
                *l = idx % d;
                idx /= d;
            }
            let (last, slots) = letters.split_last().expect("k ≥ 1");
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * polys[*last].derivative(j, slots);
            }
        }
    }
    Ok(out)
}

const GAUSS4_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GAUSS4_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// `∫_s^t f(x_u) dx_u` along a piecewise-linear path by 4-point
/// Gauss–Legendre quadrature on each piece (exact for integrands of degree ≤ 6).
pub fn integral_reference(f: &VectorFieldSystem, path: &PiecewiseLinearPath, s: f64, t: f64) -> Result<Vec<f64>> {
    if f.dim_state() != f.dim_v() || path.dim() != f.dim_v() {
        return Err(Error::mismatch("integrand must act on the driver space"));
    }
    let mut x = path.point_at(s)?;
    let mut out = vec![0.0; f.dim_u()];
    for delta in path.pieces(s, t)? {
        for (&node, &weight) in GAUSS4_NODES.iter().zip(&GAUSS4_WEIGHTS) {
            let at = axpy(&x, node, &delta);
            let v = f.apply(&delta, &at)?;
            for (o, vi) in out.iter_mut().zip(v) {
                *o += weight * vi;
            }
        }
        x = axpy(&x, 1.0, &delta);
    }
    Ok(out)
}

/// Integrates `dy = f(y) dx` exactly along each linear piece with RK4,
/// doubling the substep count until successive results at every output time
/// agree to [`REFERENCE_TOL`].
pub fn reference_solve(
    f: &VectorFieldSystem,
    path: &PiecewiseLinearPath,
    y0: &[f64],
    times: &[f64],
    substeps: usize,
) -> Result<Vec<Vec<f64>>> {
    if f.dim_state() != f.dim_u() || path.dim() != f.dim_v() || y0.len() != f.dim_u() {
        return Err(Error::mismatch("field, path and initial state dimensions disagree"));
    }
    if times.is_empty() {
        return Err(Error::invalid("need at least one output time"));
    }
    let pieces: Vec<Vec<Vec<f64>>> = times
        .windows(2)
        .map(|w| path.pieces(w[0], w[1]))
        .collect::<Result<_>>()?;
    let run = |k: usize| -> Result<Vec<Vec<f64>>> {
        let mut y = y0.to_vec();
        let mut out = vec![y.clone()];
        for step in &pieces {
            for delta in step {
                y = rk4_unit(|z| f.apply(delta, z), y, k)?;
            }
            out.push(y.clone());
        }
        Ok(out)
    };
    let mut k = substeps.max(1);
    let mut prev = run(k)?;
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        k *= 2;
        let next = run(k)?;
        last_change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| {
                let scale = b.iter().map(|x| x.abs()).fold(1.0, f64::max);
                euclid_dist(a, b) / scale
            })
            .fold(0.0, f64::max);
        if last_change < REFERENCE_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::ReferenceFailure {
        refinements: MAX_REFINEMENTS,
        last_change,
    })
}

/// The driving signal of [`solve_global`].
#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    Path(&'a PiecewiseLinearPath),
    Increments(&'a GroupIncrementDriver),
}

/// Partition times of `[start, end]` for a path driver.
pub fn path_partition(path: &PiecewiseLinearPath, partition: Partition, lip: f64) -> Result<Vec<f64>> {
    let (a, b) = (path.start(), path.end());
    match partition {
        Partition::Uniform(0) => Err(Error::invalid("empty partition")),
        Partition::Uniform(m) => {
            let mut times: Vec<f64> = (0..m).map(|j| a + (b - a) * j as f64 / m as f64).collect();
            times.push(b);
            Ok(times)
        }
        Partition::ControlThreshold { threshold, p } => {
            if !(lip > 0.0) {
                return Err(Error::invalid("threshold partition needs a positive Lip norm"));
            }
            // (lip · L)^p ≥ threshold  ⇔  L ≥ threshold^{1/p} / lip
            let length = threshold.powf(1.0 / p) / lip;
            let mut times = vec![a];
            let mut t = a;
            while t < b {
                let next = match path.time_at_arclength(t, length)? {
                    Some(next) if next > t && next < b => next,
                    _ => b,
                };
                times.push(next);
                t = next;
            }
            Ok(times)
        }
    }
}

/// Index boundaries grouping `m` increments.
fn increment_groups(driver: &GroupIncrementDriver, partition: Partition) -> Result<Vec<usize>> {
    let m = driver.len();
    match partition {
        Partition::Uniform(0) => Err(Error::invalid("empty partition")),
        Partition::Uniform(steps) => {
            if steps > m {
                return Err(Error::invalid(format!(
                    "{steps} steps requested but the driver has only {m} increments"
                )));
            }
            let mut bounds: Vec<usize> = (0..=steps).map(|j| j * m / steps).collect();
            bounds.dedup();
            Ok(bounds)
        }
        Partition::ControlThreshold { threshold, .. } => {
            let mut bounds = vec![0];
            let mut acc = 0.0;
            for (j, w) in driver.controls().iter().enumerate() {
                acc += w;
                if acc >= threshold {
                    bounds.push(j + 1);
                    acc = 0.0;
                }
            }
            if *bounds.last().expect("non-empty") != m {
                bounds.push(m);
            }
            Ok(bounds)
        }
    }
}

fn one_step(f: &VectorFieldSystem, g: &TruncatedTensor, y: &[f64], cfg: &SchemeConfig) -> Result<Vec<f64>> {
    match cfg.scheme {
        Scheme::Euler => euler_step(f, g, y),
        Scheme::LogOde => log_ode_step(f, g, y, LogOdeVariant::TopLevelInInitialCondition, cfg.substeps),
        Scheme::LogOdeFull => log_ode_step(f, g, y, LogOdeVariant::FullDrift, cfg.substeps),
        Scheme::Reference => unreachable!("reference scheme is handled by solve_global"),
    }
}

/// Solves `dy = f(y) dx` over the whole driver by composing one-step maps
/// over the configured partition.
pub fn solve_global(f: &VectorFieldSystem, driver: Driver<'_>, y0: &[f64], cfg: &SchemeConfig) -> Result<Trajectory> {
    if f.dim_state() != f.dim_u() {
        return Err(Error::mismatch("fields must map the state space to itself"));
    }
    if y0.len() != f.dim_u() || y0.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "initial state must be a finite vector of length {}",
            f.dim_u()
        )));
    }
    match driver {
        Driver::Path(path) => {
            if path.dim() != f.dim_v() {
                return Err(Error::mismatch(format!(
                    "path lives in R^{}, fields are indexed by R^{}",
                    path.dim(),
                    f.dim_v()
                )));
            }
            let times = path_partition(path, cfg.partition, f.lip_norm())?;
            if cfg.scheme == Scheme::Reference {
                let states = reference_solve(f, path, y0, &times, cfg.substeps)?;
                return Ok(Trajectory { times, states });
            }
            let mut states = vec![y0.to_vec()];
            for w in times.windows(2) {
                let g = path_signature(path, w[0], w[1], cfg.depth)?;
                let next = one_step(f, &g, states.last().expect("non-empty"), cfg)?;
                states.push(next);
            }
            Ok(Trajectory { times, states })
        }
        Driver::Increments(drv) => {
            if cfg.scheme == Scheme::Reference {
                return Err(Error::invalid("the reference solver needs a piecewise-linear path driver"));
            }
            if drv.depth() != cfg.depth {
                return Err(Error::mismatch(format!(
                    "driver increments have depth {}, scheme depth is {}",
                    drv.depth(),
                    cfg.depth
                )));
            }
            if drv.dim() != f.dim_v() {
                return Err(Error::mismatch(format!(
                    "driver lives in R^{}, fields are indexed by R^{}",
                    drv.dim(),
                    f.dim_v()
                )));
            }
            let bounds = increment_groups(drv, cfg.partition)?;
            let mut states = vec![y0.to_vec()];
            for w in bounds.windows(2) {
                let mut g = TruncatedTensor::unit(drv.dim(), drv.depth())?;
                for inc in &drv.increments()[w[0]..w[1]] {
                    g = g.product(inc)?;
                }
                let next = one_step(f, &g, states.last().expect("non-empty"), cfg)?;
                states.push(next);
            }
            Ok(Trajectory {
                times: bounds.iter().map(|&j| j as f64).collect(),
                states,
            })
        }
    }
}
