//! Piecewise-linear paths, their truncated signatures via Chen's identity,
//! variation-based controls, and drivers given as group increments.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{outer, TruncatedTensor, ALGEBRA_TOL};

/// Time-stamped samples of a path in `R^d`, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct PiecewiseLinearPath {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl TryFrom<PathRepr> for PiecewiseLinearPath {
    type Error = Error;

    fn try_from(r: PathRepr) -> Result<Self> {
        PiecewiseLinearPath::new(r.times, r.points)
    }
}

impl From<PiecewiseLinearPath> for PathRepr {
    fn from(p: PiecewiseLinearPath) -> Self {
        PathRepr {
            times: p.times,
            points: p.points,
        }
    }
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    b.iter().zip(a).map(|(y, x)| y - x).collect()
}

impl PiecewiseLinearPath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a path needs at least 2 samples"));
        }
        if times.len() != points.len() {
            return Err(Error::mismatch(format!(
                "{} times but {} points",
                times.len(),
                points.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("path points must have positive dimension"));
        }
        if let Some(j) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::mismatch(format!(
                "sample {j} has dimension {}, expected {dim}",
                points[j].len()
            )));
        }
        if times.iter().chain(points.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("path samples must be finite"));
        }
        if let Some(j) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "times must be strictly increasing (t[{}] = {} ≥ t[{}] = {})",
                j,
                times[j],
                j + 1,
                times[j + 1]
            )));
        }
        Ok(Self { times, points })
    }

    /// Reads the `t,x1,...,xd` CSV form.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("line 1: {e}")))?
            .clone();
        if header.len() < 2 || &header[0] != "t" {
            return Err(Error::Parse(
                "line 1: header must be `t,x1,...,xd`".to_string(),
            ));
        }
        for (i, name) in header.iter().enumerate().skip(1) {
            if name != format!("x{i}") {
                return Err(Error::Parse(format!(
                    "line 1: column {} is `{name}`, expected `x{i}`",
                    i + 1
                )));
            }
        }
        let mut times = Vec::new();
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != header.len() {
                return Err(Error::Parse(format!(
                    "line {line}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                )));
            }
            let mut row = Vec::with_capacity(rec.len());
            for (field, name) in rec.iter().zip(header.iter()) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("line {line}: field `{name}` is not a number: `{field}`"))
                })?;
                row.push(v);
            }
            times.push(row[0]);
            points.push(row[1..].to_vec());
        }
        Self::new(times, points)
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn check_interval(&self, s: f64, t: f64) -> Result<()> {
        if !(s.is_finite() && t.is_finite()) || s > t || s < self.start() || t > self.end() {
            return Err(Error::invalid(format!(
                "interval [{s}, {t}] is not inside the path domain [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(())
    }

    /// Index `j` of the segment `[t_j, t_{j+1}]` containing `t`.
    fn segment_of(&self, t: f64) -> usize {
        let j = self.times.partition_point(|&x| x <= t);
        j.saturating_sub(1).min(self.times.len() - 2)
    }

    /// Linear interpolation; exact at sample times.
    pub fn point_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_interval(t, t)?;
        let j = self.segment_of(t);
        Ok(self.interpolate(j, t))
    }

    fn interpolate(&self, j: usize, t: f64) -> Vec<f64> {
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        if t == t0 {
            return self.points[j].clone();
        }
        if t == t1 {
            return self.points[j + 1].clone();
        }
        let w = (t - t0) / (t1 - t0);
        self.points[j]
            .iter()
            .zip(&self.points[j + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Increments of the (partial) segments covering `[s, t]`, in time order.
    pub fn pieces(&self, s: f64, t: f64) -> Result<Vec<Vec<f64>>> {
        Ok(self.breakpoints(s, t)?.windows(2).map(|w| diff(&w[0].1, &w[1].1)).collect())
    }

    /// `(time, point)` at `s`, at every sample strictly inside `(s, t)`, and at `t`.
    fn breakpoints(&self, s: f64, t: f64) -> Result<Vec<(f64, Vec<f64>)>> {
        self.check_interval(s, t)?;
        if s == t {
            return Ok(Vec::new());
        }
        let first = self.segment_of(s);
        let mut out = vec![(s, self.interpolate(first, s))];
        let mut j = first + 1;
        while j < self.times.len() && self.times[j] < t {
            out.push((self.times[j], self.points[j].clone()));
            j += 1;
        }
        out.push((t, self.interpolate(self.segment_of(t), t)));
        Ok(out)
    }

    /// The restriction of the path to `[s, t]`, `s < t`.
    pub fn restrict(&self, s: f64, t: f64) -> Result<Self> {
        if s >= t {
            return Err(Error::invalid(format!("restriction needs s < t, got [{s}, {t}]")));
        }
        let (times, points) = self.breakpoints(s, t)?.into_iter().unzip();
        Self::new(times, points)
    }

    /// The path run backwards over the same time window.
    pub fn reversed(&self) -> Self {
        let (a, b) = (self.start(), self.end());
        let times = self.times.iter().rev().map(|&t| a + b - t).collect();
        let points = self.points.iter().rev().cloned().collect();
        Self { times, points }
    }

    /// Same samples at new times `phi(t_j)`; `phi` must be strictly increasing.
    pub fn reparametrized(&self, phi: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.times.iter().map(|&t| phi(t)).collect(), self.points.clone())
    }

    /// Maps the time `t` of this path to the time at which the arclength
    /// measured from `s` first reaches `length`; `None` if the path ends first.
    pub(crate) fn time_at_arclength(&self, s: f64, length: f64) -> Result<Option<f64>> {
        let bps = self.breakpoints(s, self.end())?;
        let mut acc = 0.0;
        for w in bps.windows(2) {
            let seg = euclid(&diff(&w[0].1, &w[1].1));
            if acc + seg >= length && seg > 0.0 {
                let frac = ((length - acc) / seg).clamp(0.0, 1.0);
                let t = w[0].0 + frac * (w[1].0 - w[0].0);
                return Ok(Some(t.max(s)));
            }
            acc += seg;
        }
        Ok(None)
    }
}

/// Signature of a straight segment with increment `delta`: `exp_N(delta)`,
/// built level by level as `delta^{⊗k} / k!`.
pub fn segment_signature(delta: &[f64], depth: usize) -> Result<TruncatedTensor> {
    if delta.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("segment increment must be finite"));
    }
    let mut levels = Vec::with_capacity(depth);
    let mut block = delta.to_vec();
    for k in 1..=depth {
        if k > 1 {
            block = outer(&block, delta);
            let inv = 1.0 / k as f64;
            block.iter_mut().for_each(|x| *x *= inv);
        }
        levels.push(block.clone());
    }
    TruncatedTensor::from_levels(delta.len(), depth, 1.0, levels)
}

/// Step-`depth` signature of `path` over `[s, t]` as the ordered product of
/// segment signatures.
pub fn path_signature(
    path: &PiecewiseLinearPath,
    s: f64,
    t: f64,
    depth: usize,
) -> Result<TruncatedTensor> {
    let pieces = path.pieces(s, t)?;
    let mut sig = TruncatedTensor::unit(path.dim(), depth)?;
    for delta in &pieces {
        sig = sig.product(&segment_signature(delta, depth)?)?;
    }
    Ok(sig)
}

/// `log_N` of [`path_signature`].
pub fn path_log_signature(
    path: &PiecewiseLinearPath,
    s: f64,
    t: f64,
    depth: usize,
) -> Result<TruncatedTensor> {
    path_signature(path, s, t, depth)?.log()
}

/// 1-variation (polygon arclength) of the path over `[s, t]`.
pub fn one_variation(path: &PiecewiseLinearPath, s: f64, t: f64) -> Result<f64> {
    Ok(path.pieces(s, t)?.iter().map(|d| euclid(d)).sum())
}

/// `|b − a|^p` in the Euclidean norm.
fn increment_power(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (y - x) * (y - x))
        .sum::<f64>()
        .sqrt()
        .powf(p)
}

/// Raw level-1 p-variation sum `sup_D Σ |x_{t_{j+1}} − x_{t_j}|^p`, maximised
/// over partitions through sample times.
///
/// For a piecewise-linear path and `p ≥ 1` this is the supremum over all
/// partitions: `|·|^p` is convex, so an interior point of a straight segment
/// can always be moved to one of the segment ends without decreasing the sum.
pub fn p_variation_level1(path: &PiecewiseLinearPath, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    let pts = path.points();
    let mut best = vec![0.0; pts.len()];
    for j in 1..pts.len() {
        best[j] = (0..j)
            .map(|i| best[i] + increment_power(&pts[i], &pts[j], p))
            .fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(best[pts.len() - 1])
}

/// The p-variation norm, `p_variation_level1(path, p)^{1/p}`.
pub fn p_variation_norm(path: &PiecewiseLinearPath, p: f64) -> Result<f64> {
    Ok(p_variation_level1(path, p)?.powf(1.0 / p))
}

/// Super-additive control `(lip · ‖x‖_{1-var,[s,t]})^p`.
///
/// Dominates `|f|^p_{Lip} ‖S(x)‖^p_{p-var,[s,t]}` for piecewise-linear `x`.
pub fn control(path: &PiecewiseLinearPath, s: f64, t: f64, p: f64, lip: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    if !(lip >= 0.0) || !lip.is_finite() {
        return Err(Error::invalid(format!("lip must be a finite nonnegative number, got {lip}")));
    }
    Ok((lip * one_variation(path, s, t)?).powf(p))
}

/// A rough driver given as its step increments `X_{t_j, t_{j+1}}` with a
/// control value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DriverRepr", into = "DriverRepr")]
pub struct GroupIncrementDriver {
    increments: Vec<TruncatedTensor>,
    controls: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DriverRepr {
    depth: usize,
    dim: usize,
    increments: Vec<TruncatedTensor>,
    controls: Vec<f64>,
}

impl TryFrom<DriverRepr> for GroupIncrementDriver {
    type Error = Error;

    fn try_from(r: DriverRepr) -> Result<Self> {
        let d = GroupIncrementDriver::new(r.increments, r.controls)?;
        if d.dim() != r.dim || d.depth() != r.depth {
            return Err(Error::mismatch(format!(
                "driver header says dim {} depth {}, increments have dim {} depth {}",
                r.dim,
                r.depth,
                d.dim(),
                d.depth()
            )));
        }
        Ok(d)
    }
}

impl From<GroupIncrementDriver> for DriverRepr {
    fn from(d: GroupIncrementDriver) -> Self {
        DriverRepr {
            depth: d.depth(),
            dim: d.dim(),
            increments: d.increments,
            controls: d.controls,
        }
    }
}

impl GroupIncrementDriver {
    pub fn new(increments: Vec<TruncatedTensor>, controls: Vec<f64>) -> Result<Self> {
        let Some(first) = increments.first() else {
            return Err(Error::invalid("driver needs at least one increment"));
        };
        if increments.len() != controls.len() {
            return Err(Error::mismatch(format!(
                "{} increments but {} controls",
                increments.len(),
                controls.len()
            )));
        }
        let (dim, depth) = (first.dim(), first.depth());
        for (j, g) in increments.iter().enumerate() {
            if g.dim() != dim || g.depth() != depth {
                return Err(Error::mismatch(format!(
                    "increment {j} has dim {} depth {}, expected dim {dim} depth {depth}",
                    g.dim(),
                    g.depth()
                )));
            }
            if !g.is_grouplike(ALGEBRA_TOL) {
                return Err(Error::invalid(format!("increment {j} is not grouplike")));
            }
        }
        if let Some(j) = controls.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!(
                "control {j} must be finite and nonnegative, got {}",
                controls[j]
            )));
        }
        Ok(Self {
            increments,
            controls,
        })
    }

    /// Increments of `path` between consecutive `times`, with controls
    /// `control(path, t_j, t_{j+1}, p, lip)`.
    pub fn from_path(
        path: &PiecewiseLinearPath,
        times: &[f64],
        depth: usize,
        p: f64,
        lip: f64,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("need at least two partition times"));
        }
        let mut increments = Vec::with_capacity(times.len() - 1);
        let mut controls = Vec::with_capacity(times.len() - 1);
        for w in times.windows(2) {
            increments.push(path_signature(path, w[0], w[1], depth)?);
            controls.push(control(path, w[0], w[1], p, lip)?);
        }
        Self::new(increments, controls)
    }

    pub fn dim(&self) -> usize {
        self.increments[0].dim()
    }

    pub fn depth(&self) -> usize {
        self.increments[0].depth()
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[TruncatedTensor] {
        &self.increments
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }
}
