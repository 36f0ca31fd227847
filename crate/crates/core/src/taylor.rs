//! Truncated Taylor polynomials in the offsets `(dt, dx_1, .., dx_n)` about a space-time point.
//!
//! Coefficients are stored divided by factorials, in order of increasing total degree, so
//! lowering the order is a prefix truncation.

use std::sync::OnceLock;

/// Time plus at most three space variables.
pub const MAX_VARS: usize = 4;
/// Highest supported total degree.
pub const MAX_ORDER: usize = 6;

const BASE: usize = MAX_ORDER + 1;

struct Table {
    exps: Vec<[u8; MAX_VARS]>,
    /// Number of monomials of degree below `d`, for `d = 0..=MAX_ORDER + 1`.
    deg_start: Vec<usize>,
    lookup: Vec<u16>,
}

fn code(e: &[u8; MAX_VARS]) -> usize {
    e.iter().rev().fold(0, |acc, &k| acc * BASE + k as usize)
}

fn build_table(nv: usize) -> Table {
    let mut exps = Vec::new();
    let mut deg_start = vec![0];
    for d in 0..=MAX_ORDER {
        let mut e = [0u8; MAX_VARS];
        push_degree(nv, 0, d, &mut e, &mut exps);
        deg_start.push(exps.len());
    }
    let mut lookup = vec![u16::MAX; BASE.pow(MAX_VARS as u32)];
    for (i, e) in exps.iter().enumerate() {
        lookup[code(e)] = i as u16;
    }
    Table {
        exps,
        deg_start,
        lookup,
    }
}

fn push_degree(nv: usize, var: usize, left: usize, e: &mut [u8; MAX_VARS], out: &mut Vec<[u8; MAX_VARS]>) {
    if var + 1 == nv {
        e[var] = left as u8;
        out.push(*e);
        e[var] = 0;
        return;
    }
    for k in (0..=left).rev() {
        e[var] = k as u8;
        push_degree(nv, var + 1, left - k, e, out);
    }
    e[var] = 0;
}

fn table(nv: usize) -> &'static Table {
    static TABLES: OnceLock<Vec<Table>> = OnceLock::new();
    assert!(
        (1..=MAX_VARS).contains(&nv),
        "Taylor jets take 1 to {MAX_VARS} variables"
    );
    &TABLES.get_or_init(|| (1..=MAX_VARS).map(build_table).collect())[nv - 1]
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Polynomial truncated at total degree `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Taylor {
    nv: usize,
    order: usize,
    c: Vec<f64>,
}

impl Taylor {
    pub fn zero(nv: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "Taylor order {order} above {MAX_ORDER}");
        Taylor {
            nv,
            order,
            c: vec![0.0; table(nv).deg_start[order + 1]],
        }
    }

    pub fn constant(nv: usize, order: usize, v: f64) -> Self {
        let mut z = Taylor::zero(nv, order);
        z.c[0] = v;
        z
    }

    /// The coordinate `base + d_var`.
    pub fn coordinate(nv: usize, order: usize, var: usize, base: f64) -> Self {
        let mut z = Taylor::constant(nv, order, base);
        if order > 0 {
            z.c[1 + var] = 1.0;
        }
        z
    }

    /// Builds the polynomial from partial derivatives `f(e) = d^e w` at the expansion point.
    pub fn from_partials(nv: usize, order: usize, mut f: impl FnMut(&[usize; MAX_VARS]) -> f64) -> Self {
        let mut z = Taylor::zero(nv, order);
        for (slot, e) in z.c.iter_mut().zip(&table(nv).exps) {
            let eu = e.map(|k| k as usize);
            let fact: f64 = eu.iter().map(|&k| factorial(k)).product();
            *slot = f(&eu) / fact;
        }
        z
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Exponents of every stored coefficient, in storage order.
    pub fn exponents(&self) -> &'static [[u8; MAX_VARS]] {
        &table(self.nv).exps[..self.c.len()]
    }

    fn index(&self, e: &[usize; MAX_VARS]) -> Option<usize> {
        if e.iter().sum::<usize>() > self.order || e[self.nv..].iter().any(|&k| k > 0) {
            return None;
        }
        let e8 = e.map(|k| k as u8);
        Some(table(self.nv).lookup[code(&e8)] as usize)
    }

    /// Taylor coefficient of `d^e`; zero above the order.
    pub fn coeff(&self, e: &[usize; MAX_VARS]) -> f64 {
        self.index(e).map_or(0.0, |i| self.c[i])
    }

    pub fn set_coeff(&mut self, e: &[usize; MAX_VARS], v: f64) {
        let i = self.index(e).expect("exponent within order");
        self.c[i] = v;
    }

    /// Partial derivative `d^e` at the expansion point.
    pub fn partial(&self, e: &[usize; MAX_VARS]) -> f64 {
        self.coeff(e) * e.iter().map(|&k| factorial(k)).product::<f64>()
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// First derivative along `var`.
    pub fn d1(&self, var: usize) -> f64 {
        if self.order == 0 {
            return f64::NAN;
        }
        self.c[1 + var]
    }

    /// All first derivatives, time first; unused slots zero.
    pub fn gradient(&self) -> [f64; MAX_VARS] {
        let mut g = [0.0; MAX_VARS];
        for (v, slot) in g.iter_mut().enumerate().take(self.nv) {
            *slot = self.d1(v);
        }
        g
    }

    pub fn truncated(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Taylor {
            nv: self.nv,
            order,
            c: self.c[..table(self.nv).deg_start[order + 1]].to_vec(),
        }
    }

    /// Derivative along `var`; the result is known to one order less.
    pub fn derivative(&self, var: usize) -> Self {
        assert!(self.order > 0, "cannot differentiate an order-0 jet");
        let mut out = Taylor::zero(self.nv, self.order - 1);
        let t = table(self.nv);
        for (i, e) in t.exps[..self.c.len()].iter().enumerate() {
            let k = e[var];
            if k == 0 || self.c[i] == 0.0 {
                continue;
            }
            let mut f = *e;
            f[var] -= 1;
            let j = t.lookup[code(&f)] as usize;
            if j < out.c.len() {
                out.c[j] += k as f64 * self.c[i];
            }
        }
        out
    }

    /// `(base + d_var) * self` at the same order.
    pub fn mul_coord(&self, var: usize, base: f64) -> Self {
        let mut out = self.scale(base);
        let t = table(self.nv);
        let top = t.deg_start[self.order];
        for (i, e) in t.exps[..top].iter().enumerate() {
            if self.c[i] == 0.0 {
                continue;
            }
            let mut f = *e;
            f[var] += 1;
            out.c[t.lookup[code(&f)] as usize] += self.c[i];
        }
        out
    }

    pub fn mul(&self, o: &Taylor) -> Self {
        debug_assert_eq!(self.nv, o.nv);
        let order = self.order.min(o.order);
        let mut out = Taylor::zero(self.nv, order);
        let t = table(self.nv);
        for (i, ei) in t.exps[..t.deg_start[order + 1]].iter().enumerate() {
            let a = self.c[i];
            if a == 0.0 {
                continue;
            }
            let di: usize = ei.iter().map(|&k| k as usize).sum();
            for (j, ej) in t.exps[..t.deg_start[order - di + 1]].iter().enumerate() {
                let b = o.c[j];
                if b == 0.0 {
                    continue;
                }
                let mut f = *ei;
                for v in 0..MAX_VARS {
                    f[v] += ej[v];
                }
                out.c[t.lookup[code(&f)] as usize] += a * b;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Taylor {
            nv: self.nv,
            order: self.order,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * o` at the lower of the two orders.
    pub fn axpy(&self, s: f64, o: &Taylor) -> Self {
        let order = self.order.min(o.order);
        let mut out = self.truncated(order);
        for (a, b) in out.c.iter_mut().zip(&o.c) {
            *a += s * b;
        }
        out
    }

    pub fn add(&self, o: &Taylor) -> Self {
        self.axpy(1.0, o)
    }

    pub fn sub(&self, o: &Taylor) -> Self {
        self.axpy(-1.0, o)
    }

    pub fn powi(&self, k: usize) -> Self {
        let mut acc = Taylor::constant(self.nv, self.order, 1.0);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// `sum_m a[m] self^m`, exact when the constant term vanishes and `a` reaches the order.
    pub fn compose_series(&self, a: &[f64]) -> Self {
        let mut out = Taylor::zero(self.nv, self.order);
        let mut pw = Taylor::constant(self.nv, self.order, 1.0);
        for (m, &am) in a.iter().enumerate() {
            if m > 0 {
                pw = pw.mul(self);
            }
            out = out.axpy(am, &pw);
        }
        out
    }

    /// `exp(self)`, exact to the order.
    pub fn exp(&self) -> Self {
        let c0 = self.c[0];
        let mut shifted = self.clone();
        shifted.c[0] = 0.0;
        let a: Vec<f64> = (0..=self.order).map(|m| 1.0 / factorial(m)).collect();
        shifted.compose_series(&a).scale(c0.exp())
    }

    /// Wave operator `d_t^2 - sum_i d_i^2`; two orders are lost.
    pub fn box_op(&self) -> Self {
        let mut out = self.derivative(0).derivative(0);
        for i in 1..self.nv {
            out = out.sub(&self.derivative(i).derivative(i));
        }
        out
    }
}

/// Coefficients of `sqrt(1 + s) - 1` in powers of `s`.
pub fn sqrt1p_minus_one(order: usize) -> Vec<f64> {
    let mut a = vec![0.0; order + 1];
    let mut b = 1.0;
    for (m, slot) in a.iter_mut().enumerate().skip(1) {
        b *= (0.5 - (m as f64 - 1.0)) / m as f64;
        *slot = b;
    }
    a
}

/// `|x0 + dx| - |x0|` as a polynomial in the space offsets (variables `1..nv`), for `x0 != 0`.
pub fn radius_offset(nv: usize, order: usize, x0: &[f64; 3]) -> Taylor {
    let r0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    debug_assert!(r0 > 0.0);
    let mut s = Taylor::zero(nv, order);
    for i in 1..nv {
        let d = Taylor::coordinate(nv, order, i, 0.0);
        s = s.axpy(2.0 * x0[i - 1], &d).add(&d.mul(&d));
    }
    s.scale(1.0 / (r0 * r0))
        .compose_series(&sqrt1p_minus_one(order))
        .scale(r0)
}
