//! Truncated multivariate Taylor polynomials ("jets") and the scalar trait the
//! embedding maps are written against, so the same code evaluates points and
//! exact derivatives up to fourth order.

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

/// Monomial bookkeeping for jets in `nvars` variables truncated at `degree`.
#[derive(Debug)]
pub struct JetLayout {
    pub nvars: usize,
    pub degree: usize,
    /// Exponent vectors, ordered by total degree.
    pub monomials: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// (i, j, k): monomial i times monomial j is monomial k.
    table: Vec<(u16, u16, u16)>,
    /// For each monomial of degree ≥ 1: (index of α − e_v, v) with v its first variable.
    predecessor: Vec<(usize, usize)>,
    /// α! for each monomial.
    factorial: Vec<f64>,
}

impl JetLayout {
    fn build(nvars: usize, degree: usize) -> Self {
        let mut monomials = vec![];
        for d in 0..=degree {
            let mut cur = vec![0u8; nvars];
            enumerate(nvars, d, 0, &mut cur, &mut monomials);
        }
        let index: HashMap<Vec<u8>, usize> =
            monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let mut table = vec![];
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = index.get(&s) {
                    table.push((i as u16, j as u16, k as u16));
                }
            }
        }
        let predecessor = monomials
            .iter()
            .map(|m| match m.iter().position(|&e| e > 0) {
                Some(v) => {
                    let mut p = m.clone();
                    p[v] -= 1;
                    (index[&p], v)
                }
                None => (0, usize::MAX),
            })
            .collect();
        let factorial = monomials
            .iter()
            .map(|m| m.iter().map(|&e| (1..=e as u32).product::<u32>() as f64).product())
            .collect();
        JetLayout { nvars, degree, monomials, index, table, predecessor, factorial }
    }

    /// Shared layout for the given shape.
    pub fn get(nvars: usize, degree: usize) -> &'static JetLayout {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static JetLayout>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet layout cache poisoned");
        guard
            .entry((nvars, degree))
            .or_insert_with(|| Box::leak(Box::new(JetLayout::build(nvars, degree))))
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.index.get(exponents).copied()
    }

    /// Index of the monomial u_{i₁}⋯u_{i_k} given as a list of variable indices.
    pub fn index_of_vars(&self, vars: &[usize]) -> Option<usize> {
        let mut e = vec![0u8; self.nvars];
        for &v in vars {
            e[v] += 1;
        }
        self.index_of(&e)
    }
}

fn enumerate(nvars: usize, remaining: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == nvars {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        enumerate(nvars, remaining - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Truncated Taylor polynomial: `coeffs[k]` multiplies the k-th monomial of the layout.
#[derive(Clone)]
pub struct Jet {
    pub layout: &'static JetLayout,
    pub coeffs: Vec<f64>,
}

impl Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet").field("coeffs", &self.coeffs).finish()
    }
}

impl Jet {
    pub fn constant(layout: &'static JetLayout, c: f64) -> Jet {
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = c;
        Jet { layout, coeffs }
    }

    pub fn zero(layout: &'static JetLayout) -> Jet {
        Jet::constant(layout, 0.0)
    }

    /// The variable u_i expanded around `value`.
    pub fn variable(layout: &'static JetLayout, i: usize, value: f64) -> Jet {
        let mut j = Jet::constant(layout, value);
        if layout.degree >= 1 {
            let mut e = vec![0u8; layout.nvars];
            e[i] = 1;
            j.coeffs[layout.index_of(&e).expect("linear monomial")] = 1.0;
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of the monomial with the given variable multiset.
    pub fn coeff(&self, vars: &[usize]) -> f64 {
        self.layout.index_of_vars(vars).map_or(0.0, |k| self.coeffs[k])
    }

    /// Partial derivative ∂_{i₁}⋯∂_{i_k} at the expansion point.
    pub fn derivative(&self, vars: &[usize]) -> f64 {
        self.layout.index_of_vars(vars).map_or(0.0, |k| self.coeffs[k] * self.layout.factorial[k])
    }

    /// The jet of ∂_v, one degree lower in accuracy.
    pub fn partial(&self, v: usize) -> Jet {
        let l = self.layout;
        let mut out = Jet::zero(l);
        for (k, m) in l.monomials.iter().enumerate() {
            if m[v] == 0 || self.coeffs[k] == 0.0 {
                continue;
            }
            let mut e = m.clone();
            e[v] -= 1;
            out.coeffs[l.index[&e]] += m[v] as f64 * self.coeffs[k];
        }
        out
    }

    /// The truncated Taylor polynomial evaluated at the offset `delta`.
    pub fn eval_at(&self, delta: &[f64]) -> f64 {
        self.layout
            .monomials
            .iter()
            .zip(&self.coeffs)
            .map(|(m, c)| c * m.iter().zip(delta).map(|(&e, d)| d.powi(e as i32)).product::<f64>())
            .sum()
    }

    fn mul_ref(&self, rhs: &Jet) -> Jet {
        let mut out = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.table {
            let a = self.coeffs[i as usize];
            if a != 0.0 {
                out[k as usize] += a * rhs.coeffs[j as usize];
            }
        }
        Jet { layout: self.layout, coeffs: out }
    }

    /// f(x₀ + δ) from the Taylor coefficients `taylor[k] = f^{(k)}(x₀)/k!`.
    fn apply_series(&self, taylor: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let d = self.layout.degree.min(taylor.len() - 1);
        let mut acc = Jet::constant(self.layout, taylor[d]);
        for k in (0..d).rev() {
            acc = acc.mul_ref(&delta);
            acc.coeffs[0] += taylor[k];
        }
        acc
    }

    fn degree(&self) -> usize {
        self.layout.degree
    }

    /// Jets of the m-variable compositions Σ_α self_α (δv)^α where `inner`
    /// holds the increments δv (jets in a second layout, zero constant terms).
    pub fn compose_many(outer: &[Jet], inner: &[Jet]) -> Vec<Jet> {
        if outer.is_empty() {
            return vec![];
        }
        let lo = outer[0].layout;
        let li = inner[0].layout;
        let mut powers: Vec<Jet> = Vec::with_capacity(lo.len());
        for k in 0..lo.len() {
            if k == 0 {
                powers.push(Jet::constant(li, 1.0));
            } else {
                let (p, v) = lo.predecessor[k];
                let next = powers[p].mul_ref(&inner[v]);
                powers.push(next);
            }
        }
        outer
            .iter()
            .map(|o| {
                let mut acc = vec![0.0; li.len()];
                for (k, &c) in o.coeffs.iter().enumerate() {
                    if c != 0.0 {
                        for (a, p) in acc.iter_mut().zip(&powers[k].coeffs) {
                            *a += c * p;
                        }
                    }
                }
                Jet { layout: li, coeffs: acc }
            })
            .collect()
    }
}

/// Arithmetic and elementary functions shared by `f64` and [`Jet`].
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant of the same kind as `self`.
    fn lift(&self, c: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn recip(&self) -> Self {
        self.powf(-1.0)
    }
    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, c: f64) -> f64 {
        c
    }
    fn sin(&self) -> f64 {
        f64::sin(*self)
    }
    fn cos(&self) -> f64 {
        f64::cos(*self)
    }
    fn sqrt(&self) -> f64 {
        f64::sqrt(*self)
    }
    fn powf(&self, p: f64) -> f64 {
        f64::powf(*self, p)
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn ln(&self) -> f64 {
        f64::ln(*self)
    }
    fn recip(&self) -> f64 {
        1.0 / self
    }
}

fn inv_factorials(d: usize) -> Vec<f64> {
    let mut out = vec![1.0; d + 1];
    for k in 1..=d {
        out[k] = out[k - 1] / k as f64;
    }
    out
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn lift(&self, c: f64) -> Jet {
        Jet::constant(self.layout, c)
    }
    fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let f = inv_factorials(self.degree());
        let t: Vec<f64> = (0..=self.degree()).map(|k| cycle[k % 4] * f[k]).collect();
        self.apply_series(&t)
    }
    fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let f = inv_factorials(self.degree());
        let t: Vec<f64> = (0..=self.degree()).map(|k| cycle[k % 4] * f[k]).collect();
        self.apply_series(&t)
    }
    fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }
    fn powf(&self, p: f64) -> Jet {
        let x0 = self.value();
        let mut t = vec![x0.powf(p)];
        let mut binom = 1.0;
        for k in 1..=self.degree() {
            binom *= (p - (k - 1) as f64) / k as f64;
            t.push(binom * x0.powf(p - k as f64));
        }
        self.apply_series(&t)
    }
    fn exp(&self) -> Jet {
        let e = self.value().exp();
        let t: Vec<f64> = inv_factorials(self.degree()).iter().map(|f| e * f).collect();
        self.apply_series(&t)
    }
    fn ln(&self) -> Jet {
        let x0 = self.value();
        let mut t = vec![x0.ln()];
        for k in 1..=self.degree() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign / (k as f64 * x0.powi(k as i32)));
        }
        self.apply_series(&t)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.mul_ref(&rhs)
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_ref(rhs)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self.mul_ref(&rhs.recip())
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, rhs: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c /= rhs);
        self
    }
}

/// Determinant of a small square matrix of jets by cofactor expansion.
pub fn jet_det(a: &[Vec<Jet>]) -> Jet {
    let n = a.len();
    match n {
        1 => a[0][0].clone(),
        2 => &a[0][0] * &a[1][1] - &a[0][1] * &a[1][0],
        _ => {
            let mut acc = Jet::zero(a[0][0].layout);
            for col in 0..n {
                if a[0][col].coeffs.iter().all(|&c| c == 0.0) {
                    continue;
                }
                let minor: Vec<Vec<Jet>> = (1..n)
                    .map(|r| (0..n).filter(|&c| c != col).map(|c| a[r][c].clone()).collect())
                    .collect();
                let term = &a[0][col] * &jet_det(&minor);
                acc = if col % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

/// Inverse of a small symmetric positive definite matrix of jets (Gauss–Jordan).
pub fn jet_inverse(a: &[Vec<Jet>]) -> Vec<Vec<Jet>> {
    let n = a.len();
    let layout = a[0][0].layout;
    let mut m: Vec<Vec<Jet>> = a.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| Jet::constant(layout, if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for col in 0..n {
        let pivot = m[col][col].recip();
        for j in 0..n {
            m[col][j] = &m[col][j] * &pivot;
            inv[col][j] = &inv[col][j] * &pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = m[row][col].clone();
            if factor.coeffs.iter().all(|&c| c == 0.0) {
                continue;
            }
            for j in 0..n {
                let dm = &factor * &m[col][j];
                let di = &factor * &inv[col][j];
                m[row][j] = m[row][j].clone() - dm;
                inv[row][j] = inv[row][j].clone() - di;
            }
        }
    }
    inv
}
