//! Truncated multivariate Taylor polynomials.
//!
//! A polynomial in `δ ∈ R^n` is stored by its coefficients on monomials of
//! total degree `≤ order`, listed in graded order so that truncating to a
//! lower order is a prefix slice.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// Monomials in `nvars` variables up to total degree `max_order`.
#[derive(Debug)]
pub(crate) struct MonomialTable {
    pub nvars: usize,
    pub exps: Vec<Vec<u32>>,
    degree_end: Vec<usize>,
    lookup: HashMap<Vec<u32>, usize>,
    /// `raise[i][l]`: index of `exps[i] + e_l`, when that still fits.
    raise: Vec<Vec<Option<usize>>>,
}

fn monomials_of_degree(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    if nvars == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in monomials_of_degree(nvars - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl MonomialTable {
    fn build(nvars: usize, max_order: usize) -> Self {
        let mut exps = Vec::new();
        let mut degree_end = Vec::with_capacity(max_order + 1);
        for deg in 0..=max_order {
            exps.extend(monomials_of_degree(nvars, deg as u32));
            degree_end.push(exps.len());
        }
        let lookup: HashMap<Vec<u32>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let raise = exps
            .iter()
            .map(|e| {
                (0..nvars)
                    .map(|l| {
                        let mut up = e.clone();
                        up[l] += 1;
                        lookup.get(&up).copied()
                    })
                    .collect()
            })
            .collect();
        Self {
            nvars,
            exps,
            degree_end,
            lookup,
            raise,
        }
    }

    /// Shared table for `(nvars, max_order)`, cached per thread.
    pub fn get(nvars: usize, max_order: usize) -> Rc<Self> {
        thread_local! {
            static CACHE: RefCell<HashMap<(usize, usize), Rc<MonomialTable>>> =
                RefCell::new(HashMap::new());
        }
        CACHE.with(|c| {
            c.borrow_mut()
                .entry((nvars, max_order))
                .or_insert_with(|| Rc::new(Self::build(nvars, max_order)))
                .clone()
        })
    }

    /// Number of monomials of degree `≤ order`.
    pub fn count(&self, order: usize) -> usize {
        self.degree_end[order]
    }

    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.lookup.get(exps).copied()
    }

    fn degree(&self, i: usize) -> usize {
        self.degree_end.partition_point(|&end| end <= i)
    }
}

/// A vector-valued truncated Taylor polynomial: one coefficient vector per
/// output component.
#[derive(Debug, Clone)]
pub(crate) struct TaylorPoly {
    pub table: Rc<MonomialTable>,
    pub order: usize,
    pub comps: Vec<Vec<f64>>,
}

impl TaylorPoly {
    pub fn zeros(table: Rc<MonomialTable>, order: usize, outputs: usize) -> Self {
        let n = table.count(order);
        Self {
            table,
            order,
            comps: vec![vec![0.0; n]; outputs],
        }
    }

    /// The identity map expanded at `y`: `y + δ`.
    pub fn identity(table: Rc<MonomialTable>, order: usize, y: &[f64]) -> Self {
        let mut p = Self::zeros(table, order, y.len());
        for (l, c) in p.comps.iter_mut().enumerate() {
            c[0] = y[l];
            if order >= 1 {
                c[1 + l] = 1.0;
            }
        }
        p
    }

    /// Value at `δ = 0`.
    pub fn value(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c[0]).collect()
    }

    pub fn truncated(&self, order: usize) -> Self {
        let n = self.table.count(order);
        Self {
            table: self.table.clone(),
            order,
            comps: self.comps.iter().map(|c| c[..n].to_vec()).collect(),
        }
    }

    /// Coefficients of `∂_l` of one scalar component, at order `self.order − 1`.
    fn partial(&self, comp: usize, l: usize) -> Vec<f64> {
        let n = self.table.count(self.order - 1);
        let c = &self.comps[comp];
        (0..n)
            .map(|i| match self.table.raise[i][l] {
                Some(up) => (self.table.exps[i][l] + 1) as f64 * c[up],
                None => 0.0,
            })
            .collect()
    }

    /// `h(δ) = Dr(y+δ)[g(y+δ)]`, truncated at `min(self.order − 1, g.order)`.
    ///
    /// Requires `self.order ≥ 1` and `g` to have one component per variable.
    pub fn directional(&self, g: &TaylorPoly) -> TaylorPoly {
        debug_assert!(self.order >= 1);
        debug_assert_eq!(g.comps.len(), self.table.nvars);
        let order = (self.order - 1).min(g.order);
        let mut out = TaylorPoly::zeros(self.table.clone(), order, self.comps.len());
        for (comp, dst) in out.comps.iter_mut().enumerate() {
            for (l, gl) in g.comps.iter().enumerate() {
                let d = self.partial(comp, l);
                mul_acc(&self.table, &d, gl, order, dst);
            }
        }
        out
    }

    /// Symmetric derivative block `D^a r(y)[k_1, …, k_a]` of one component.
    pub fn derivative(&self, comp: usize, slots: &[usize]) -> f64 {
        let mut alpha = vec![0u32; self.table.nvars];
        for &k in slots {
            alpha[k] += 1;
        }
        if slots.len() > self.order {
            return 0.0;
        }
        let factorial: f64 = alpha
            .iter()
            .map(|&a| (1..=a).map(f64::from).product::<f64>())
            .product();
        match self.table.index_of(&alpha) {
            Some(i) => factorial * self.comps[comp][i],
            None => 0.0,
        }
    }
}

/// `dst += a · b` truncated at `order`.
fn mul_acc(table: &MonomialTable, a: &[f64], b: &[f64], order: usize, dst: &mut [f64]) {
    let mut buf = vec![0u32; table.nvars];
    for (i, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let di = table.degree(i);
        if di > order {
            break;
        }
        let nb = table.count(order - di).min(b.len());
        for (j, &bv) in b[..nb].iter().enumerate() {
            if bv == 0.0 {
                continue;
            }
            for (slot, (x, y)) in buf.iter_mut().zip(table.exps[i].iter().zip(&table.exps[j])) {
                *slot = x + y;
            }
            let k = table.index_of(&buf).expect("degree within table");
            dst[k] += av * bv;
        }
    }
}

/// Taylor coefficients of `c · Π_l y_l^{n_l}` expanded at `y`, accumulated
/// into `dst` up to `order`.
pub(crate) fn add_monomial_expansion(
    table: &MonomialTable,
    order: usize,
    y: &[f64],
    exponents: &[u32],
    coeff: f64,
    dst: &mut [f64],
) {
    for (i, beta) in table.exps[..table.count(order)].iter().enumerate() {
        let mut term = coeff;
        for ((&b, &n), &yl) in beta.iter().zip(exponents).zip(y) {
            if b > n {
                term = 0.0;
                break;
            }
            term *= binomial(n, b) * yl.powi((n - b) as i32);
        }
        dst[i] += term;
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}
