//! Dense truncated tensor algebra `T^N(R^d) = R ⊕ R^d ⊕ … ⊕ (R^d)^{⊗N}`.
//!
//! Level `k` is stored as a flat row-major block of `d^k` coefficients: the
//! multi-index `(i_1, …, i_k)` lives at offset `Σ_j i_j · d^{k-j}`. Tensor
//! products of blocks are therefore plain outer products of flat vectors.
//!
//! The step-`N` group `G^N(R^d)` (grouplike elements) and the Lie elements are
//! not separate types; membership is checked on demand with
//! [`TruncatedTensor::is_grouplike`] and [`TruncatedTensor::is_lie`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported truncation depth.
pub const MAX_DEPTH: usize = 6;

/// Relative tolerance used for algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// An element of the truncated tensor algebra over `R^dim` up to level `depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct TruncatedTensor {
    dim: usize,
    depth: usize,
    scalar: f64,
    levels: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    dim: usize,
    depth: usize,
    scalar: f64,
    levels: Vec<Vec<f64>>,
}

impl TryFrom<TensorRepr> for TruncatedTensor {
    type Error = Error;

    fn try_from(r: TensorRepr) -> Result<Self> {
        TruncatedTensor::from_levels(r.dim, r.depth, r.scalar, r.levels)
    }
}

impl From<TruncatedTensor> for TensorRepr {
    fn from(t: TruncatedTensor) -> Self {
        TensorRepr {
            dim: t.dim,
            depth: t.depth,
            scalar: t.scalar,
            levels: t.levels,
        }
    }
}

fn check_shape(dim: usize, depth: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("tensor dimension must be positive"));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::invalid(format!(
            "tensor depth {depth} outside supported range 1..={MAX_DEPTH}"
        )));
    }
    Ok(())
}

/// Outer product of two flat blocks, `(u ⊗ v)[i·|v| + j] = u[i] v[j]`.
pub fn outer(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for &a in u {
        out.extend(v.iter().map(|&b| a * b));
    }
    out
}

/// Euclidean (Frobenius) norm of a coefficient block.
pub fn frobenius_norm(block: &[f64]) -> f64 {
    block.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl TruncatedTensor {
    /// The zero element.
    pub fn zero(dim: usize, depth: usize) -> Result<Self> {
        check_shape(dim, depth)?;
        let levels = (1..=depth).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
        Ok(Self {
            dim,
            depth,
            scalar: 0.0,
            levels,
        })
    }

    /// The unit `(1, 0, …, 0)`.
    pub fn unit(dim: usize, depth: usize) -> Result<Self> {
        let mut t = Self::zero(dim, depth)?;
        t.scalar = 1.0;
        Ok(t)
    }

    /// Builds a tensor from explicit blocks, validating every block length and
    /// rejecting non-finite entries.
    pub fn from_levels(dim: usize, depth: usize, scalar: f64, levels: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(dim, depth)?;
        if levels.len() != depth {
            return Err(Error::mismatch(format!(
                "expected {depth} level blocks, got {}",
                levels.len()
            )));
        }
        for (k, block) in levels.iter().enumerate() {
            let want = dim.pow(k as u32 + 1);
            if block.len() != want {
                return Err(Error::mismatch(format!(
                    "level {} has {} entries, expected {want}",
                    k + 1,
                    block.len()
                )));
            }
        }
        if !scalar.is_finite() || levels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("tensor entries must be finite"));
        }
        Ok(Self {
            dim,
            depth,
            scalar,
            levels,
        })
    }

    /// The level-1 tensor `(0, v, 0, …)`.
    pub fn from_vector(v: &[f64], depth: usize) -> Result<Self> {
        Self::from_level(v.len(), depth, 1, v.to_vec())
    }

    /// A tensor whose only nonzero component is `block` at level `k`.
    pub fn from_level(dim: usize, depth: usize, k: usize, block: Vec<f64>) -> Result<Self> {
        let mut t = Self::zero(dim, depth)?;
        if k == 0 || k > depth {
            return Err(Error::invalid(format!("level {k} outside 1..={depth}")));
        }
        if block.len() != t.levels[k - 1].len() {
            return Err(Error::mismatch(format!(
                "level {k} block has {} entries, expected {}",
                block.len(),
                t.levels[k - 1].len()
            )));
        }
        if block.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("tensor entries must be finite"));
        }
        t.levels[k - 1] = block;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn scalar(&self) -> f64 {
        self.scalar
    }

    /// Coefficient block of level `k` (`1 ≤ k ≤ depth`).
    ///
    /// Panics if `k` is out of range.
    pub fn level(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.depth, "level {k} out of range");
        &self.levels[k - 1]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// `π_k` embedded back into the algebra (all other levels zeroed).
    pub fn projection(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim, self.depth).expect("shape already validated");
        if k == 0 {
            out.scalar = self.scalar;
        } else if k <= self.depth {
            out.levels[k - 1] = self.levels[k - 1].clone();
        }
        out
    }

    /// Drops every level above `depth`.
    pub fn truncate(&self, depth: usize) -> Result<Self> {
        if depth > self.depth {
            return Err(Error::invalid(format!(
                "cannot truncate depth {} tensor to larger depth {depth}",
                self.depth
            )));
        }
        check_shape(self.dim, depth)?;
        Ok(Self {
            dim: self.dim,
            depth,
            scalar: self.scalar,
            levels: self.levels[..depth].to_vec(),
        })
    }

    /// Largest absolute coefficient, scalar included.
    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(self.scalar.abs(), |m, x| m.max(x.abs()))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::mismatch(format!(
                "tensor shapes differ: (dim {}, depth {}) vs (dim {}, depth {})",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect())
            .collect();
        Ok(Self {
            dim: self.dim,
            depth: self.depth,
            scalar: op(self.scalar, other.scalar),
            levels,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            depth: self.depth,
            scalar: self.scalar * factor,
            levels: self
                .levels
                .iter()
                .map(|b| b.iter().map(|x| x * factor).collect())
                .collect(),
        }
    }

    fn component(&self, k: usize) -> Option<&[f64]> {
        if k == 0 {
            None
        } else {
            Some(&self.levels[k - 1])
        }
    }

    /// Truncated tensor product: `π_k(a ⊗ b) = Σ_{j=0..k} π_j(a) ⊗ π_{k-j}(b)`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let d = self.dim;
        let mut out = Self::zero(d, self.depth)?;
        out.scalar = self.scalar * other.scalar;
        for k in 1..=self.depth {
            let block = &mut out.levels[k - 1];
            for (x, &b) in block.iter_mut().zip(&other.levels[k - 1]) {
                *x += self.scalar * b;
            }
            for (x, &a) in block.iter_mut().zip(&self.levels[k - 1]) {
                *x += a * other.scalar;
            }
            for j in 1..k {
                let (Some(a), Some(b)) = (self.component(j), other.component(k - j)) else {
                    continue;
                };
                let width = b.len();
                for (ia, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let row = &mut block[ia * width..(ia + 1) * width];
                    for (x, &bv) in row.iter_mut().zip(b) {
                        *x += av * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Lie bracket `[a, b] = a ⊗ b − b ⊗ a`.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        self.product(other)?.sub(&other.product(self)?)
    }

    /// Truncated exponential `1 + Σ_{j=1..N} a^{⊗j} / j!`, defined for zero scalar part.
    pub fn exp(&self) -> Result<Self> {
        if self.scalar != 0.0 {
            return Err(Error::invalid(format!(
                "exp requires a zero scalar part, got {}",
                self.scalar
            )));
        }
        // Horner: 1 + a(1 + a/2(1 + a/3(…)))
        let unit = Self::unit(self.dim, self.depth)?;
        let mut acc = unit.clone();
        for j in (1..=self.depth).rev() {
            acc = unit.add(&self.product(&acc)?.scale(1.0 / j as f64))?;
        }
        Ok(acc)
    }

    /// Truncated logarithm `Σ_{j=1..N} (−1)^{j+1} (g − 1)^{⊗j} / j`, defined for unit scalar part.
    pub fn log(&self) -> Result<Self> {
        if self.scalar != 1.0 {
            return Err(Error::invalid(format!(
                "log requires a unit scalar part, got {}",
                self.scalar
            )));
        }
        let mut x = self.clone();
        x.scalar = 0.0;
        let mut power = x.clone();
        let mut out = Self::zero(self.dim, self.depth)?;
        for j in 1..=self.depth {
            let coeff = if j % 2 == 1 { 1.0 } else { -1.0 } / j as f64;
            out = out.add(&power.scale(coeff))?;
            if j < self.depth {
                power = power.product(&x)?;
            }
        }
        Ok(out)
    }

    /// Group inverse `1 + Σ_{j=1..N} (−1)^j (g − 1)^{⊗j}`, defined for unit scalar part.
    pub fn inverse(&self) -> Result<Self> {
        if self.scalar != 1.0 {
            return Err(Error::invalid(format!(
                "inverse requires a unit scalar part, got {}",
                self.scalar
            )));
        }
        let mut x = self.clone();
        x.scalar = 0.0;
        let mut out = Self::unit(self.dim, self.depth)?;
        let mut power = x.clone();
        for j in 1..=self.depth {
            let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
            out = out.add(&power.scale(sign))?;
            if j < self.depth {
                power = power.product(&x)?;
            }
        }
        Ok(out)
    }

    /// Dilation `δ_λ`: level `k` is scaled by `λ^k`; the scalar part is untouched.
    pub fn dilate(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        let mut factor = 1.0;
        for block in &mut out.levels {
            factor *= lambda;
            block.iter_mut().for_each(|x| *x *= factor);
        }
        out
    }

    /// Homogeneous norm `Σ_k ‖π_k(g)‖^{1/k}` with the Frobenius norm on each level.
    pub fn hom_norm(&self) -> f64 {
        self.levels
            .iter()
            .enumerate()
            .map(|(k, b)| frobenius_norm(b).powf(1.0 / (k + 1) as f64))
            .sum()
    }

    /// Entry-wise comparison with tolerance relative to the larger max-entry of the two.
    pub fn approx_eq(&self, other: &Self, rel_tol: f64) -> bool {
        if self.dim != other.dim || self.depth != other.depth {
            return false;
        }
        let scale = self.max_abs().max(other.max_abs());
        let diff = self.sub(other).map(|d| d.max_abs()).unwrap_or(f64::INFINITY);
        diff <= rel_tol * scale
    }

    /// `true` when the scalar is 1 and `exp(log(g)) == g` within `rel_tol`
    /// and `log(g)` is a Lie element.
    pub fn is_grouplike(&self, rel_tol: f64) -> bool {
        if self.scalar != 1.0 {
            return false;
        }
        let Ok(l) = self.log() else { return false };
        let Ok(back) = l.exp() else { return false };
        back.approx_eq(self, rel_tol) && l.is_lie(rel_tol)
    }

    /// `true` when the scalar is zero and every level lies in the span of
    /// iterated brackets.
    ///
    /// Uses the Dynkin map `ρ(e_{i_1}…e_{i_k}) = [[…[e_{i_1}, e_{i_2}], …], e_{i_k}]`:
    /// a homogeneous element `P` of degree `k` is Lie iff `ρ(P) = k P`.
    pub fn is_lie(&self, rel_tol: f64) -> bool {
        if self.scalar != 0.0 {
            return false;
        }
        let scale = self.max_abs();
        self.levels.iter().enumerate().all(|(i, block)| {
            let k = i + 1;
            let rho = dynkin(block, self.dim, k);
            rho.iter()
                .zip(block)
                .all(|(r, p)| (r / k as f64 - p).abs() <= rel_tol * scale.max(f64::MIN_POSITIVE))
        })
    }
}

/// Left-normed bracketing map on a level-`k` block.
///
/// Uses `ρ(u x) = ρ(u) ⊗ x − x ⊗ ρ(u)` for a last letter `x`.
pub(crate) fn dynkin(block: &[f64], dim: usize, k: usize) -> Vec<f64> {
    if k == 1 {
        return block.to_vec();
    }
    let prefix_len = dim.pow(k as u32 - 1);
    let mut out = vec![0.0; block.len()];
    for x in 0..dim {
        let slice: Vec<f64> = (0..prefix_len).map(|u| block[u * dim + x]).collect();
        let rho = dynkin(&slice, dim, k - 1);
        for (u, &r) in rho.iter().enumerate() {
            // ρ(u) ⊗ e_x
            out[u * dim + x] += r;
            // e_x ⊗ ρ(u)
            out[x * prefix_len + u] -= r;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-14, "{a:?} vs {b:?}");
        }
    }

    fn e(i: usize, d: usize, depth: usize) -> TruncatedTensor {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        TruncatedTensor::from_vector(&v, depth).unwrap()
    }

    #[test]
    fn chen_along_a_line() {
        let g = TruncatedTensor::from_vector(&[1.0], 2).unwrap().exp().unwrap();
        let p = g.product(&g).unwrap();
        assert_eq!(p.scalar(), 1.0);
        close(p.level(1), &[2.0]);
        close(p.level(2), &[2.0]);
    }

    #[test]
    fn product_with_unit() {
        let g = TruncatedTensor::from_vector(&[0.3, -0.2], 3).unwrap().exp().unwrap();
        let u = TruncatedTensor::unit(2, 3).unwrap();
        assert_eq!(g.product(&u).unwrap(), g);
        assert_eq!(u.product(&g).unwrap(), g);
    }

    #[test]
    fn product_of_two_axes() {
        let p = e(0, 2, 2).exp().unwrap().product(&e(1, 2, 2).exp().unwrap()).unwrap();
        close(p.level(1), &[1.0, 1.0]);
        close(p.level(2), &[0.5, 1.0, 0.0, 0.5]);
    }

    #[test]
    fn product_rejects_shape_mismatch() {
        let a = TruncatedTensor::unit(2, 2).unwrap();
        let b = TruncatedTensor::unit(3, 2).unwrap();
        let c = TruncatedTensor::unit(2, 3).unwrap();
        assert!(matches!(a.product(&b), Err(Error::DimensionMismatch(_))));
        assert!(matches!(a.product(&c), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn exp_examples() {
        let g = e(0, 2, 2).exp().unwrap();
        close(g.level(1), &[1.0, 0.0]);
        close(g.level(2), &[0.5, 0.0, 0.0, 0.0]);

        let z = TruncatedTensor::zero(3, 4).unwrap().exp().unwrap();
        assert_eq!(z, TruncatedTensor::unit(3, 4).unwrap());

        let g = TruncatedTensor::from_vector(&[0.1], 3).unwrap().exp().unwrap();
        close(g.level(1), &[0.1]);
        close(g.level(2), &[0.005]);
        close(g.level(3), &[0.1f64.powi(3) / 6.0]);
    }

    #[test]
    fn exp_rejects_nonzero_scalar() {
        let u = TruncatedTensor::unit(2, 2).unwrap();
        assert!(matches!(u.exp(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn log_examples() {
        let p = e(0, 2, 2).exp().unwrap().product(&e(1, 2, 2).exp().unwrap()).unwrap();
        let l = p.log().unwrap();
        assert_eq!(l.scalar(), 0.0);
        close(l.level(1), &[1.0, 1.0]);
        close(l.level(2), &[0.0, 0.5, -0.5, 0.0]);

        let u = TruncatedTensor::unit(2, 3).unwrap();
        assert_eq!(u.log().unwrap(), TruncatedTensor::zero(2, 3).unwrap());

        let l = e(0, 2, 2).exp().unwrap().log().unwrap();
        close(l.level(1), &[1.0, 0.0]);
        close(l.level(2), &[0.0; 4]);
    }

    #[test]
    fn log_and_inverse_reject_non_unit_scalar() {
        let z = TruncatedTensor::zero(2, 2).unwrap();
        assert!(matches!(z.log(), Err(Error::InvalidInput(_))));
        assert!(matches!(z.inverse(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn inverse_examples() {
        let u = TruncatedTensor::unit(2, 3).unwrap();
        assert_eq!(u.inverse().unwrap(), u);

        let v = TruncatedTensor::from_vector(&[0.4, -1.3], 3).unwrap();
        let inv = v.exp().unwrap().inverse().unwrap();
        assert!(inv.approx_eq(&v.scale(-1.0).exp().unwrap(), 1e-14));
    }

    #[test]
    fn dilate_examples() {
        let g = e(0, 2, 2).exp().unwrap();
        let h = g.dilate(2.0);
        close(h.level(1), &[2.0, 0.0]);
        close(h.level(2), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.dilate(1.0), g);
        assert_eq!(g.dilate(0.0), TruncatedTensor::unit(2, 2).unwrap());
    }

    #[test]
    fn hom_norm_examples() {
        let g = e(0, 2, 2).exp().unwrap();
        assert!((g.hom_norm() - (1.0 + 0.5f64.sqrt())).abs() < 1e-15);
        assert_eq!(TruncatedTensor::unit(3, 3).unwrap().hom_norm(), 0.0);
        assert!((g.dilate(3.0).hom_norm() - 3.0 * (1.0 + 0.5f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn depth_limits() {
        assert!(TruncatedTensor::zero(2, 0).is_err());
        assert!(TruncatedTensor::zero(2, MAX_DEPTH + 1).is_err());
        assert!(TruncatedTensor::zero(0, 2).is_err());
        assert!(TruncatedTensor::zero(2, MAX_DEPTH).is_ok());
    }

    #[test]
    fn from_levels_validates() {
        assert!(TruncatedTensor::from_levels(2, 2, 1.0, vec![vec![0.0; 2]]).is_err());
        assert!(TruncatedTensor::from_levels(2, 2, 1.0, vec![vec![0.0; 2], vec![0.0; 3]]).is_err());
        assert!(TruncatedTensor::from_levels(2, 1, f64::NAN, vec![vec![0.0; 2]]).is_err());
        assert!(TruncatedTensor::from_levels(2, 1, 1.0, vec![vec![f64::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn lie_and_grouplike_checks() {
        let a = e(0, 2, 3);
        let b = e(1, 2, 3);
        let ab = a.bracket(&b).unwrap();
        assert!(ab.is_lie(ALGEBRA_TOL));
        assert!(ab.bracket(&a).unwrap().is_lie(ALGEBRA_TOL));
        // e1 ⊗ e2 alone is not a Lie element
        let word = a.product(&b).unwrap();
        assert!(!word.is_lie(ALGEBRA_TOL));

        let g = a.add(&ab.scale(0.3)).unwrap().exp().unwrap();
        assert!(g.is_grouplike(ALGEBRA_TOL));
        assert!(!word.exp().unwrap().is_grouplike(ALGEBRA_TOL));
    }

    #[test]
    fn json_form() {
        let g = e(0, 2, 2).exp().unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(
            s,
            r#"{"dim":2,"depth":2,"scalar":1.0,"levels":[[1.0,0.0],[0.5,0.0,0.0,0.0]]}"#
        );
        let back: TruncatedTensor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"dim":2,"depth":2,"scalar":1.0,"levels":[[1.0,0.0],[0.5]]}"#;
        assert!(serde_json::from_str::<TruncatedTensor>(bad).is_err());
    }
}
