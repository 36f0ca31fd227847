//! Compactly supported smooth data with exact partial derivatives of any order.
//!
//! Every profile is a function of the squared radius `rho = |x - c|^2 / w^2`.
//! For such functions the mixed partials factor coordinate by coordinate:
//!
//! ```text
//! d^a g(rho) = sum_{m <= a/2} prod_i a_i! / (m_i! (a_i - 2 m_i)!) (2 y_i)^(a_i - 2 m_i) * g^(|a| - |m|)(rho)
//! ```
//!
//! so only the univariate derivatives `g^(k)` are needed.

use std::fmt::Debug;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-index over at most three spatial coordinates.
pub type MultiIndex = [u8; 3];

pub fn order_of(a: MultiIndex) -> usize {
    a.iter().map(|&v| v as usize).sum()
}

/// All multi-indices of total order exactly `k` in `dim` variables, graded lexicographic.
pub fn multi_indices_of_order(dim: usize, k: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let k8 = k as u8;
    match dim {
        1 => out.push([k8, 0, 0]),
        2 => {
            for a0 in (0..=k8).rev() {
                out.push([a0, k8 - a0, 0]);
            }
        }
        3 => {
            for a0 in (0..=k8).rev() {
                for a1 in (0..=(k8 - a0)).rev() {
                    out.push([a0, a1, k8 - a0 - a1]);
                }
            }
        }
        _ => panic!("dimension {dim} not supported"),
    }
    out
}

/// All multi-indices with total order at most `k`.
pub fn multi_indices_up_to(dim: usize, k: usize) -> Vec<MultiIndex> {
    (0..=k).flat_map(|j| multi_indices_of_order(dim, j)).collect()
}

/// Unit multi-index along `axis` (0-based).
pub fn unit(axis: usize) -> MultiIndex {
    let mut a = [0u8; 3];
    a[axis] = 1;
    a
}

pub fn add(a: MultiIndex, b: MultiIndex) -> MultiIndex {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Ball containing the support of a data function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBall {
    pub center: [f64; 3],
    pub radius: f64,
}

/// A smooth function on R^dim whose partial derivatives can be evaluated exactly.
pub trait SmoothData: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// A ball outside of which the function vanishes identically, if any.
    fn support(&self) -> Option<SupportBall>;

    /// `out[i] = d^{idx[i]} f(x)`.
    fn partials(&self, x: &[f64], idx: &[MultiIndex], out: &mut [f64]);

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = [0.0];
        self.partials(x, &[[0, 0, 0]], &mut v);
        v[0]
    }

    fn partial(&self, x: &[f64], a: MultiIndex) -> f64 {
        let mut v = [0.0];
        self.partials(x, &[a], &mut v);
        v[0]
    }

    /// True when the function depends only on the distance to its support centre.
    fn is_radial_about_center(&self) -> bool {
        false
    }
}

/// Radial profile `g(rho)` on `rho = |y|^2`, vanishing for `rho >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Profile {
    /// `exp(-1 / (1 - rho))`: C-infinity with support exactly the unit ball.
    Exp,
    /// `(1 - rho)^power`.
    Poly { power: u32 },
}

const MAX_EXP_ORDER: usize = 16;

/// Coefficients of `P_k` with `d^k/drho^k exp(-q) = P_k(q) exp(-q)`, `q = 1/(1 - rho)`.
fn exp_profile_polys() -> &'static Vec<Vec<f64>> {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 0..MAX_EXP_ORDER {
            let p = &polys[k];
            // P' - P, then multiply by q^2
            let mut dp_minus_p = vec![0.0; p.len()];
            for (j, c) in p.iter().enumerate() {
                dp_minus_p[j] -= c;
                if j > 0 {
                    dp_minus_p[j - 1] += j as f64 * c;
                }
            }
            let mut next = vec![0.0; p.len() + 2];
            for (j, c) in dp_minus_p.iter().enumerate() {
                next[j + 2] = *c;
            }
            polys.push(next);
        }
        polys
    })
}

impl Profile {
    /// `out[k] = g^(k)(rho)` for `k = 0..out.len()`.
    pub fn derivatives(&self, rho: f64, out: &mut [f64]) {
        out.fill(0.0);
        if rho >= 1.0 {
            return;
        }
        match *self {
            Profile::Exp => {
                let q = 1.0 / (1.0 - rho);
                if q > 700.0 {
                    return;
                }
                let e = (-q).exp();
                let polys = exp_profile_polys();
                assert!(
                    out.len() <= polys.len(),
                    "exp profile derivatives limited to order {MAX_EXP_ORDER}"
                );
                for (k, slot) in out.iter_mut().enumerate() {
                    let p = &polys[k];
                    let mut acc = 0.0;
                    for c in p.iter().rev() {
                        acc = acc * q + c;
                    }
                    *slot = acc * e;
                }
            }
            Profile::Poly { power } => {
                let s = 1.0 - rho;
                let mut coef = 1.0;
                for (k, slot) in out.iter_mut().enumerate() {
                    if k as u32 > power {
                        break;
                    }
                    *slot = coef * s.powi((power - k as u32) as i32);
                    coef *= -((power - k as u32) as f64);
                }
            }
        }
    }

    /// Largest derivative order that is meaningful (the profile is at least this smooth).
    pub fn smoothness(&self) -> usize {
        match *self {
            Profile::Exp => MAX_EXP_ORDER,
            Profile::Poly { power } => power.saturating_sub(1) as usize,
        }
    }
}

/// Factorial table up to 20.
fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn hermite_coef(a: usize, m: usize) -> f64 {
    factorial(a) / (factorial(m) * factorial(a - 2 * m))
}

/// `d^a g(|y|^2)` given `gk[k] = g^(k)(|y|^2)`.
pub fn radial_partial(a: MultiIndex, y: &[f64; 3], gk: &[f64]) -> f64 {
    let n = order_of(a);
    let mut total = 0.0;
    for m0 in 0..=(a[0] / 2) as usize {
        let c0 = hermite_coef(a[0] as usize, m0) * (2.0 * y[0]).powi(a[0] as i32 - 2 * m0 as i32);
        for m1 in 0..=(a[1] / 2) as usize {
            let c1 = hermite_coef(a[1] as usize, m1) * (2.0 * y[1]).powi(a[1] as i32 - 2 * m1 as i32);
            for m2 in 0..=(a[2] / 2) as usize {
                let c2 = hermite_coef(a[2] as usize, m2) * (2.0 * y[2]).powi(a[2] as i32 - 2 * m2 as i32);
                total += c0 * c1 * c2 * gk[n - m0 - m1 - m2];
            }
        }
    }
    total
}

/// `weight * g(|x - center|^2 / width^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub dim: usize,
    pub profile: Profile,
    pub center: [f64; 3],
    pub width: f64,
    pub weight: f64,
}

impl Bump {
    pub fn new(dim: usize, profile: Profile, center: &[f64], width: f64, weight: f64) -> Self {
        let mut c = [0.0; 3];
        c[..center.len()].copy_from_slice(center);
        Bump {
            dim,
            profile,
            center: c,
            width,
            weight,
        }
    }

    /// The canonical C-infinity bump centred at the origin with unit radius.
    pub fn canonical(dim: usize) -> Self {
        Bump::new(dim, Profile::Exp, &[0.0; 3], 1.0, 1.0)
    }

    fn accumulate(&self, x: &[f64], idx: &[MultiIndex], out: &mut [f64], gk: &mut [f64]) {
        let mut y = [0.0; 3];
        let mut rho = 0.0;
        for i in 0..self.dim {
            y[i] = (x[i] - self.center[i]) / self.width;
            rho += y[i] * y[i];
        }
        if rho >= 1.0 {
            return;
        }
        self.profile.derivatives(rho, gk);
        for (slot, &a) in out.iter_mut().zip(idx) {
            let k = order_of(a);
            *slot += self.weight * radial_partial(a, &y, gk) / self.width.powi(k as i32);
        }
    }
}

impl SmoothData for Bump {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self) -> Option<SupportBall> {
        Some(SupportBall {
            center: self.center,
            radius: self.width,
        })
    }

    fn partials(&self, x: &[f64], idx: &[MultiIndex], out: &mut [f64]) {
        out.fill(0.0);
        let mut gk = [0.0; MAX_EXP_ORDER + 1];
        let n = idx.iter().map(|&a| order_of(a)).max().unwrap_or(0) + 1;
        self.accumulate(x, idx, out, &mut gk[..n]);
    }

    fn is_radial_about_center(&self) -> bool {
        true
    }
}

/// Superposition of bumps; the representation used for all initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSet {
    pub dim: usize,
    pub bumps: Vec<Bump>,
}

impl BumpSet {
    /// The bumps as separate data pieces, each with its own support ball.
    pub fn pieces(&self) -> Vec<&dyn SmoothData> {
        self.bumps
            .iter()
            .filter(|b| b.weight != 0.0)
            .map(|b| b as &dyn SmoothData)
            .collect()
    }

    pub fn empty(dim: usize) -> Self {
        BumpSet { dim, bumps: Vec::new() }
    }

    pub fn single(b: Bump) -> Self {
        BumpSet {
            dim: b.dim,
            bumps: vec![b],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bumps.is_empty() || self.bumps.iter().all(|b| b.weight == 0.0)
    }

    /// True when every bump is centred at the origin (radially symmetric data).
    pub fn is_radial(&self) -> bool {
        self.bumps.iter().all(|b| b.center == [0.0; 3])
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        for b in &mut s.bumps {
            b.weight *= c;
        }
        s
    }

    /// Checks that the support lies in the closed ball of radius `radius` about the origin.
    pub fn check_support_within(&self, radius: f64) -> Result<()> {
        for b in &self.bumps {
            let c = b.center.iter().map(|v| v * v).sum::<f64>().sqrt();
            if c + b.width > radius + 1e-12 {
                return Err(Error::Config(format!(
                    "bump at {:?} with width {} leaves the ball |x| <= {radius}",
                    &b.center[..b.dim],
                    b.width
                )));
            }
        }
        Ok(())
    }

    fn max_order_scratch(&self, idx: &[MultiIndex]) -> usize {
        idx.iter().map(|&a| order_of(a)).max().unwrap_or(0) + 1
    }
}

impl SmoothData for BumpSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self) -> Option<SupportBall> {
        match self.bumps.as_slice() {
            [] => Some(SupportBall {
                center: [0.0; 3],
                radius: 0.0,
            }),
            [b] => Some(SupportBall {
                center: b.center,
                radius: b.width,
            }),
            many => {
                let radius = many
                    .iter()
                    .map(|b| b.center.iter().map(|v| v * v).sum::<f64>().sqrt() + b.width)
                    .fold(0.0, f64::max);
                Some(SupportBall {
                    center: [0.0; 3],
                    radius,
                })
            }
        }
    }

    fn partials(&self, x: &[f64], idx: &[MultiIndex], out: &mut [f64]) {
        out.fill(0.0);
        let mut gk = [0.0; MAX_EXP_ORDER + 1];
        let n = self.max_order_scratch(idx);
        for b in &self.bumps {
            b.accumulate(x, idx, out, &mut gk[..n]);
        }
    }

    fn is_radial_about_center(&self) -> bool {
        match self.bumps.as_slice() {
            [_] => true,
            many => many.iter().all(|b| b.center == [0.0; 3]),
        }
    }
}

/// Serializable description of one bump, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    #[serde(default = "default_family")]
    pub family: String,
    /// Exponent for the `poly` family, default [`DEFAULT_POLY_POWER`].
    #[serde(default)]
    pub power: Option<u32>,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

/// Default configured profile; see `DEFAULT_POLY_POWER`.
fn default_family() -> String {
    "poly".to_string()
}

/// Exponent of the default `poly` profile `(1 - rho^2)^p`.
pub const DEFAULT_POLY_POWER: u32 = 12;

fn one() -> f64 {
    1.0
}

impl BumpSpec {
    pub fn canonical() -> Self {
        BumpSpec {
            family: default_family(),
            power: None,
            center: Vec::new(),
            width: 1.0,
            weight: 1.0,
        }
    }

    pub fn at(center: &[f64], width: f64, weight: f64) -> Self {
        BumpSpec {
            family: default_family(),
            power: None,
            center: center.to_vec(),
            width,
            weight,
        }
    }

    pub fn to_bump(&self, dim: usize) -> Result<Bump> {
        let profile = match self.family.as_str() {
            "exp" => Profile::Exp,
            "poly" => Profile::Poly {
                power: self.power.unwrap_or(DEFAULT_POLY_POWER),
            },
            other => return Err(Error::Config(format!("unknown bump family `{other}`"))),
        };
        if self.center.len() > dim {
            return Err(Error::Config(format!(
                "bump centre {:?} has more than {dim} coordinates",
                self.center
            )));
        }
        if !(self.width > 0.0) {
            return Err(Error::Config(format!(
                "bump width must be positive, got {}",
                self.width
            )));
        }
        Ok(Bump::new(dim, profile, &self.center, self.width, self.weight))
    }
}

pub fn bump_set(dim: usize, specs: &[BumpSpec]) -> Result<BumpSet> {
    Ok(BumpSet {
        dim,
        bumps: specs.iter().map(|s| s.to_bump(dim)).collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_value(x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices_of_order(3, 2).len(), 6);
        assert_eq!(multi_indices_of_order(2, 3).len(), 4);
        assert_eq!(multi_indices_up_to(2, 10).len(), 66);
    }

    #[test]
    fn partials_match_finite_differences() {
        let b = BumpSet::single(Bump::new(3, Profile::Exp, &[0.1, -0.2, 0.05], 0.8, 1.3));
        let x = [0.2, 0.1, -0.3];
        let h = 1e-4;
        for a in multi_indices_up_to(3, 3) {
            for axis in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                let fd = (b.partial(&xp, a) - b.partial(&xm, a)) / (2.0 * h);
                let exact = b.partial(&x, add(a, unit(axis)));
                assert!(
                    (fd - exact).abs() < 1e-5 * (1.0 + exact.abs()),
                    "a={a:?} axis={axis}: fd {fd} exact {exact}"
                );
            }
        }
    }

    #[test]
    fn canonical_value_and_support() {
        let b = BumpSet::single(Bump::canonical(2));
        assert!((b.value(&[0.3, 0.4]) - bump_value(&[0.3, 0.4])).abs() < 1e-15);
        assert_eq!(b.value(&[1.0, 0.0]), 0.0);
        assert_eq!(b.value(&[0.0, 0.0]), (-1f64).exp());
    }

    #[test]
    fn poly_profile_derivatives() {
        let p = Profile::Poly { power: 3 };
        let mut d = [0.0; 5];
        p.derivatives(0.5, &mut d);
        assert_eq!(d, [0.125, -0.75, 3.0, -6.0, 0.0]);
    }
}
