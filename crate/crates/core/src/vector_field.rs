//! Vector field systems `f ∈ L(R^d, C^γ(R^e, R^e))` with exact jets, and the
//! differential operators `f^{∘k}(v)` they generate.
//!
//! A word `e_{i_1} ⊗ … ⊗ e_{i_k}` acts on a test function `r` as the composed
//! first-order operators `f(e_{i_1}) ∘ … ∘ f(e_{i_k})`, where
//! `f(e_i)(r)(y) = Dr(y)[f(e_i)(y)]`. Evaluated right to left:
//!
//! ```text
//! r_{k+1} = r,   r_j = D r_{j+1} [f(e_{i_j})],   result = r_1(y)
//! ```
//!
//! To evaluate `r_1` at `y` the recursion carries the order-`(j−1)` Taylor
//! jet of each `r_j` at `y`. Words sharing a suffix share the work.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{add_monomial_expansion, MonomialTable, TaylorPoly};
use crate::tensor::TruncatedTensor;

/// Highest derivative order available from [`VectorFieldSystem::field_jet`].
pub const MAX_JET_ORDER: usize = 5;

/// Highest total degree of a polynomial term.
pub const MAX_POLY_DEGREE: u32 = 6;

/// One monomial `coeff · Π_l y_l^{exponents[l]}` contributing to output
/// coordinate `output` of the field in direction `input`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub input: usize,
    pub output: usize,
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    /// `f(e_i)(y) = A_i y + b_i`.
    Linear {
        a: Vec<Vec<Vec<f64>>>,
        b: Vec<Vec<f64>>,
    },
    Polynomial { terms: Vec<PolyTerm> },
}

/// `d` vector fields on a state space, with declared smoothness and Lip norm.
///
/// For differential equations the state and output dimensions coincide
/// (`dim_state == dim_u`). Integrands `f ∈ L(R^d, C^γ(R^d, R^e))` use
/// `dim_state == dim_v` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct VectorFieldSystem {
    dim_v: usize,
    dim_u: usize,
    dim_state: usize,
    gamma: f64,
    lip_norm: f64,
    kind: FieldKind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FieldRepr {
    Linear {
        dim_v: usize,
        dim_u: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim_state: Option<usize>,
        gamma: f64,
        lip_norm: f64,
        #[serde(rename = "A")]
        a: Vec<Vec<Vec<f64>>>,
        b: Vec<Vec<f64>>,
    },
    Polynomial {
        dim_v: usize,
        dim_u: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim_state: Option<usize>,
        gamma: f64,
        lip_norm: f64,
        terms: Vec<PolyTerm>,
    },
}

impl TryFrom<FieldRepr> for VectorFieldSystem {
    type Error = Error;

    fn try_from(r: FieldRepr) -> Result<Self> {
        match r {
            FieldRepr::Linear {
                dim_v,
                dim_u,
                dim_state,
                gamma,
                lip_norm,
                a,
                b,
            } => {
                let f = VectorFieldSystem::linear(a, b, gamma, lip_norm)?;
                if f.dim_v != dim_v || f.dim_u != dim_u || f.dim_state != dim_state.unwrap_or(dim_u) {
                    return Err(Error::mismatch(format!(
                        "declared dim_v {dim_v} dim_u {dim_u} do not match matrices ({} fields, {}x{})",
                        f.dim_v, f.dim_u, f.dim_state
                    )));
                }
                Ok(f)
            }
            FieldRepr::Polynomial {
                dim_v,
                dim_u,
                dim_state,
                gamma,
                lip_norm,
                terms,
            } => VectorFieldSystem::polynomial_with_state(
                dim_v,
                dim_u,
                dim_state.unwrap_or(dim_u),
                terms,
                gamma,
                lip_norm,
            ),
        }
    }
}

impl From<VectorFieldSystem> for FieldRepr {
    fn from(f: VectorFieldSystem) -> Self {
        let dim_state = (f.dim_state != f.dim_u).then_some(f.dim_state);
        match f.kind {
            FieldKind::Linear { a, b } => FieldRepr::Linear {
                dim_v: f.dim_v,
                dim_u: f.dim_u,
                dim_state,
                gamma: f.gamma,
                lip_norm: f.lip_norm,
                a,
                b,
            },
            FieldKind::Polynomial { terms } => FieldRepr::Polynomial {
                dim_v: f.dim_v,
                dim_u: f.dim_u,
                dim_state,
                gamma: f.gamma,
                lip_norm: f.lip_norm,
                terms,
            },
        }
    }
}

fn check_declared(gamma: f64, lip_norm: f64) -> Result<()> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be a finite number > 1, got {gamma}")));
    }
    if !(lip_norm > 0.0) || !lip_norm.is_finite() {
        return Err(Error::invalid(format!("lip_norm must be finite and positive, got {lip_norm}")));
    }
    Ok(())
}

impl VectorFieldSystem {
    /// Affine fields `f(e_i)(y) = A_i y + b_i`; `a[i]` is a list of rows.
    pub fn linear(a: Vec<Vec<Vec<f64>>>, b: Vec<Vec<f64>>, gamma: f64, lip_norm: f64) -> Result<Self> {
        check_declared(gamma, lip_norm)?;
        let dim_v = a.len();
        if dim_v == 0 {
            return Err(Error::invalid("need at least one vector field"));
        }
        if b.len() != dim_v {
            return Err(Error::mismatch(format!("{dim_v} matrices but {} offset vectors", b.len())));
        }
        let dim_u = a[0].len();
        let dim_state = a[0].first().map_or(0, Vec::len);
        if dim_u == 0 || dim_state == 0 {
            return Err(Error::invalid("matrices must be non-empty"));
        }
        for (i, (m, off)) in a.iter().zip(&b).enumerate() {
            if m.len() != dim_u || m.iter().any(|row| row.len() != dim_state) {
                return Err(Error::mismatch(format!("matrix {i} is not {dim_u}x{dim_state}")));
            }
            if off.len() != dim_u {
                return Err(Error::mismatch(format!("offset {i} has length {}, expected {dim_u}", off.len())));
            }
        }
        if a.iter().flatten().flatten().chain(b.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("field coefficients must be finite"));
        }
        Ok(Self {
            dim_v,
            dim_u,
            dim_state,
            gamma,
            lip_norm,
            kind: FieldKind::Linear { a, b },
        })
    }

    /// Linear fields without offsets.
    pub fn homogeneous_linear(a: Vec<Vec<Vec<f64>>>, gamma: f64, lip_norm: f64) -> Result<Self> {
        let b = a.iter().map(|m| vec![0.0; m.len()]).collect();
        Self::linear(a, b, gamma, lip_norm)
    }

    /// Polynomial fields on `R^dim_u`.
    pub fn polynomial(dim_v: usize, dim_u: usize, terms: Vec<PolyTerm>, gamma: f64, lip_norm: f64) -> Result<Self> {
        Self::polynomial_with_state(dim_v, dim_u, dim_u, terms, gamma, lip_norm)
    }

    /// Polynomial maps `R^dim_state → R^dim_u`, one per direction.
    pub fn polynomial_with_state(
        dim_v: usize,
        dim_u: usize,
        dim_state: usize,
        terms: Vec<PolyTerm>,
        gamma: f64,
        lip_norm: f64,
    ) -> Result<Self> {
        check_declared(gamma, lip_norm)?;
        if dim_v == 0 || dim_u == 0 || dim_state == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        for (n, t) in terms.iter().enumerate() {
            if t.input >= dim_v || t.output >= dim_u {
                return Err(Error::invalid(format!(
                    "term {n}: input {} / output {} out of range (dim_v {dim_v}, dim_u {dim_u})",
                    t.input, t.output
                )));
            }
            if t.exponents.len() != dim_state {
                return Err(Error::mismatch(format!(
                    "term {n}: {} exponents, expected {dim_state}",
                    t.exponents.len()
                )));
            }
            if t.exponents.iter().sum::<u32>() > MAX_POLY_DEGREE {
                return Err(Error::invalid(format!("term {n}: total degree exceeds {MAX_POLY_DEGREE}")));
            }
            if !t.coeff.is_finite() {
                return Err(Error::invalid(format!("term {n}: coefficient must be finite")));
            }
        }
        Ok(Self {
            dim_v,
            dim_u,
            dim_state,
            gamma,
            lip_norm,
            kind: FieldKind::Polynomial { terms },
        })
    }

    pub fn dim_v(&self) -> usize {
        self.dim_v
    }

    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lip_norm(&self) -> f64 {
        self.lip_norm
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    /// Highest word length `f^{∘k}` may be applied to: `⌊γ⌋ + 1`, with `⌊γ⌋`
    /// the largest integer strictly below `γ`.
    pub fn smoothness_budget(&self) -> usize {
        self.gamma.ceil() as usize
    }

    /// `λ f`, with the declared Lip norm scaled accordingly.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let kind = match &self.kind {
            FieldKind::Linear { a, b } => FieldKind::Linear {
                a: a.iter()
                    .map(|m| m.iter().map(|row| row.iter().map(|x| lambda * x).collect()).collect())
                    .collect(),
                b: b.iter().map(|v| v.iter().map(|x| lambda * x).collect()).collect(),
            },
            FieldKind::Polynomial { terms } => FieldKind::Polynomial {
                terms: terms
                    .iter()
                    .map(|t| PolyTerm {
                        coeff: lambda * t.coeff,
                        ..t.clone()
                    })
                    .collect(),
            },
        };
        let lip_norm = (lambda.abs() * self.lip_norm).max(f64::MIN_POSITIVE);
        Ok(Self {
            lip_norm,
            kind,
            ..self.clone()
        })
    }

    /// The same fields written as polynomial terms.
    pub fn to_polynomial(&self) -> Self {
        match &self.kind {
            FieldKind::Polynomial { .. } => self.clone(),
            FieldKind::Linear { a, b } => {
                let mut terms = Vec::new();
                for (i, (m, off)) in a.iter().zip(b).enumerate() {
                    for j in 0..self.dim_u {
                        if off[j] != 0.0 {
                            terms.push(PolyTerm {
                                input: i,
                                output: j,
                                exponents: vec![0; self.dim_state],
                                coeff: off[j],
                            });
                        }
                        for (l, &c) in m[j].iter().enumerate() {
                            if c != 0.0 {
                                let mut exponents = vec![0; self.dim_state];
                                exponents[l] = 1;
                                terms.push(PolyTerm {
                                    input: i,
                                    output: j,
                                    exponents,
                                    coeff: c,
                                });
                            }
                        }
                    }
                }
                Self {
                    kind: FieldKind::Polynomial { terms },
                    ..self.clone()
                }
            }
        }
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim_state {
            return Err(Error::mismatch(format!(
                "point has dimension {}, fields act on R^{}",
                y.len(),
                self.dim_state
            )));
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("point must be finite"));
        }
        Ok(())
    }

    /// `f(e_i)(y)`.
    pub fn eval(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        if i >= self.dim_v {
            return Err(Error::invalid(format!("direction {i} out of range 0..{}", self.dim_v)));
        }
        Ok(self.eval_unchecked(i, y))
    }

    fn eval_unchecked(&self, i: usize, y: &[f64]) -> Vec<f64> {
        match &self.kind {
            FieldKind::Linear { a, b } => a[i]
                .iter()
                .zip(&b[i])
                .map(|(row, off)| row.iter().zip(y).map(|(c, x)| c * x).sum::<f64>() + off)
                .collect(),
            FieldKind::Polynomial { terms } => {
                let mut out = vec![0.0; self.dim_u];
                for t in terms.iter().filter(|t| t.input == i) {
                    out[t.output] += t.coeff
                        * t.exponents.iter().zip(y).map(|(&n, &x)| x.powi(n as i32)).product::<f64>();
                }
                out
            }
        }
    }

    /// `f(v)(y) = Σ_i v_i f(e_i)(y)`.
    pub fn apply(&self, v: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        if v.len() != self.dim_v {
            return Err(Error::mismatch(format!("direction has length {}, expected {}", v.len(), self.dim_v)));
        }
        let mut out = vec![0.0; self.dim_u];
        for (i, &c) in v.iter().enumerate() {
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(self.eval_unchecked(i, y)) {
                    *o += c * x;
                }
            }
        }
        Ok(out)
    }

    /// Taylor expansion of `f(e_i)` at `y` up to `order`.
    pub(crate) fn taylor(&self, table: &Rc<MonomialTable>, i: usize, y: &[f64], order: usize) -> TaylorPoly {
        let mut p = TaylorPoly::zeros(table.clone(), order, self.dim_u);
        match &self.kind {
            FieldKind::Linear { a, .. } => {
                let value = self.eval_unchecked(i, y);
                for (j, c) in p.comps.iter_mut().enumerate() {
                    c[0] = value[j];
                    if order >= 1 {
                        c[1..=self.dim_state].copy_from_slice(&a[i][j]);
                    }
                }
            }
            FieldKind::Polynomial { terms } => {
                for t in terms.iter().filter(|t| t.input == i) {
                    add_monomial_expansion(table, order, y, &t.exponents, t.coeff, &mut p.comps[t.output]);
                }
            }
        }
        p
    }

    /// Exact derivatives `D^a f(e_i)(y)`, `a = 0..=order`.
    pub fn field_jet(&self, i: usize, y: &[f64], order: usize) -> Result<Jet> {
        self.check_point(y)?;
        if i >= self.dim_v {
            return Err(Error::invalid(format!("direction {i} out of range 0..{}", self.dim_v)));
        }
        if order > MAX_JET_ORDER {
            return Err(Error::invalid(format!("jet order {order} exceeds maximum {MAX_JET_ORDER}")));
        }
        let table = MonomialTable::get(self.dim_state, order);
        Ok(Jet::from_taylor(y, &self.taylor(&table, i, y, order)))
    }
}

/// Derivatives `D^a r(y)` for `a = 0..=order`, each stored as a full
/// (unsymmetrized) block of shape `outputs × n^a`, row-major with the output
/// index first.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub point: Vec<f64>,
    pub order: usize,
    pub coefficients: Vec<Vec<f64>>,
}

fn unrank(mut idx: usize, n: usize, a: usize) -> Vec<usize> {
    let mut slots = vec![0; a];
    for s in slots.iter_mut().rev() {
        *s = idx % n;
        idx /= n;
    }
    slots
}

impl Jet {
    pub(crate) fn from_taylor(y: &[f64], p: &TaylorPoly) -> Self {
        let n = p.table.nvars;
        let coefficients = (0..=p.order)
            .map(|a| {
                let width = n.pow(a as u32);
                let mut block = Vec::with_capacity(p.comps.len() * width);
                for comp in 0..p.comps.len() {
                    for idx in 0..width {
                        block.push(p.derivative(comp, &unrank(idx, n, a)));
                    }
                }
                block
            })
            .collect();
        Self {
            point: y.to_vec(),
            order: p.order,
            coefficients,
        }
    }

    /// `true` if every block is invariant under permuting derivative slots.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.point.len();
        self.coefficients.iter().enumerate().skip(2).all(|(a, block)| {
            let width = n.pow(a as u32);
            block.chunks(width).all(|comp| {
                (0..width).all(|idx| {
                    let mut slots = unrank(idx, n, a);
                    slots.sort_unstable();
                    let canon = slots.iter().fold(0, |acc, &s| acc * n + s);
                    (comp[idx] - comp[canon]).abs() <= tol * comp[canon].abs().max(1.0)
                })
            })
        })
    }
}

/// A polynomial test function `r : R^n → R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    pub dim_in: usize,
    pub dim_out: usize,
    pub terms: Vec<MapTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTerm {
    pub output: usize,
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

impl PolynomialMap {
    pub fn new(dim_in: usize, dim_out: usize, terms: Vec<MapTerm>) -> Result<Self> {
        for (n, t) in terms.iter().enumerate() {
            if t.output >= dim_out || t.exponents.len() != dim_in {
                return Err(Error::mismatch(format!("term {n} does not fit R^{dim_in} → R^{dim_out}")));
            }
            if !t.coeff.is_finite() {
                return Err(Error::invalid(format!("term {n}: coefficient must be finite")));
            }
        }
        Ok(Self { dim_in, dim_out, terms })
    }

    /// Highest total degree of any term.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exponents.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out];
        for t in &self.terms {
            out[t.output] += t.coeff * t.exponents.iter().zip(y).map(|(&n, &x)| x.powi(n as i32)).product::<f64>();
        }
        out
    }

    /// `Dr(y)[w]`.
    pub fn differential(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out];
        for t in &self.terms {
            for (l, &n) in t.exponents.iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let partial: f64 = t
                    .exponents
                    .iter()
                    .zip(y)
                    .enumerate()
                    .map(|(m, (&e, &x))| if m == l { f64::from(e) * x.powi(e as i32 - 1) } else { x.powi(e as i32) })
                    .product();
                out[t.output] += t.coeff * partial * w[l];
            }
        }
        out
    }

    pub(crate) fn taylor(&self, table: &Rc<MonomialTable>, y: &[f64], order: usize) -> TaylorPoly {
        let mut p = TaylorPoly::zeros(table.clone(), order, self.dim_out);
        for t in &self.terms {
            add_monomial_expansion(table, order, y, &t.exponents, t.coeff, &mut p.comps[t.output]);
        }
        p
    }
}

/// Highest level carrying a nonzero coefficient (0 if none).
fn top_level(v: &TruncatedTensor) -> usize {
    (1..=v.depth()).rev().find(|&k| v.level(k).iter().any(|&x| x != 0.0)).unwrap_or(0)
}

fn check_operator_args(f: &VectorFieldSystem, v: &TruncatedTensor, y: &[f64]) -> Result<usize> {
    if v.dim() != f.dim_v {
        return Err(Error::mismatch(format!(
            "tensor over R^{} but fields are indexed by R^{}",
            v.dim(),
            f.dim_v
        )));
    }
    if f.dim_state != f.dim_u {
        return Err(Error::mismatch(format!(
            "operators need fields on one space, got R^{} → R^{}",
            f.dim_state, f.dim_u
        )));
    }
    f.check_point(y)?;
    let top = top_level(v);
    if top > f.smoothness_budget() {
        return Err(Error::invalid(format!(
            "level {top} exceeds the smoothness budget {} of fields with gamma {}",
            f.smoothness_budget(),
            f.gamma
        )));
    }
    if top > MAX_JET_ORDER + 1 {
        return Err(Error::invalid(format!("level {top} exceeds supported jet order")));
    }
    Ok(top)
}

/// `Σ_k f^{∘k}(π_k v)(I_d)(y)` over levels `k ≥ 1`; the scalar part of `v` is ignored.
pub fn elementary_differential(f: &VectorFieldSystem, v: &TruncatedTensor, y: &[f64]) -> Result<Vec<f64>> {
    let top = check_operator_args(f, v, y)?;
    if top == 0 {
        return Ok(vec![0.0; f.dim_u]);
    }
    match &f.kind {
        FieldKind::Linear { a, b } => Ok(linear_words(a, b, v, y, top)),
        FieldKind::Polynomial { .. } => {
            let table = MonomialTable::get(f.dim_u, top);
            let seed = TaylorPoly::identity(table.clone(), top, y);
            Ok(suffix_sum(f, v, y, top, &table, seed))
        }
    }
}

/// `Σ_k f^{∘k}(π_k v)(r)(y)`: the same operators applied to a test function `r`.
pub fn apply_operator(
    f: &VectorFieldSystem,
    v: &TruncatedTensor,
    r: &PolynomialMap,
    y: &[f64],
) -> Result<Vec<f64>> {
    let top = check_operator_args(f, v, y)?;
    if r.dim_in != f.dim_u {
        return Err(Error::mismatch(format!(
            "test function acts on R^{}, state space is R^{}",
            r.dim_in, f.dim_u
        )));
    }
    if top == 0 {
        return Ok(vec![0.0; r.dim_out]);
    }
    let table = MonomialTable::get(f.dim_u, top);
    let seed = r.taylor(&table, y, top);
    Ok(suffix_sum(f, v, y, top, &table, seed))
}

/// Linear fields: the word `(i_1, …, i_k)` maps `y` to
/// `A_{i_k} ⋯ A_{i_2} (A_{i_1} y + b_{i_1})`. Walks words by prefix.
fn linear_words(a: &[Vec<Vec<f64>>], b: &[Vec<f64>], v: &TruncatedTensor, y: &[f64], top: usize) -> Vec<f64> {
    let d = a.len();
    let e = y.len();
    let mut out = vec![0.0; e];
    // (prefix offset, level, state)
    let mut stack: Vec<(usize, usize, Vec<f64>)> = (0..d)
        .map(|i| {
            let z: Vec<f64> = a[i]
                .iter()
                .zip(&b[i])
                .map(|(row, off)| row.iter().zip(y).map(|(c, x)| c * x).sum::<f64>() + off)
                .collect();
            (i, 1, z)
        })
        .collect();
    while let Some((offset, level, z)) = stack.pop() {
        let w = v.level(level)[offset];
        if w != 0.0 {
            for (o, zi) in out.iter_mut().zip(&z) {
                *o += w * zi;
            }
        }
        if level < top {
            for i in 0..d {
                let next: Vec<f64> = a[i].iter().map(|row| row.iter().zip(&z).map(|(c, x)| c * x).sum()).collect();
                stack.push((offset * d + i, level + 1, next));
            }
        }
    }
    out
}

/// Generic route: carries Taylor jets of `r_j` down the suffix tree, seeded
/// with the jet of the test function at order `top`.
fn suffix_sum(
    f: &VectorFieldSystem,
    v: &TruncatedTensor,
    y: &[f64],
    top: usize,
    table: &Rc<MonomialTable>,
    seed: TaylorPoly,
) -> Vec<f64> {
    let d = f.dim_v;
    let fields: Vec<TaylorPoly> = (0..d).map(|i| f.taylor(table, i, y, top - 1)).collect();
    let mut out = vec![0.0; seed.comps.len()];
    // (suffix offset, suffix length, jet of r_j)
    let mut stack = vec![(0usize, 0usize, seed)];
    while let Some((offset, len, r)) = stack.pop() {
        if len > 0 {
            let w = v.level(len)[offset];
            if w != 0.0 {
                for (o, x) in out.iter_mut().zip(r.value()) {
                    *o += w * x;
                }
            }
        }
        if len < top {
            let stride = d.pow(len as u32);
            for (i, field) in fields.iter().enumerate() {
                let g = field.truncated(r.order - 1);
                stack.push((i * stride + offset, len + 1, r.directional(&g)));
            }
        }
    }
    out
}
