//! Klainerman vector fields acting on local space-time Taylor jets, the generalized and
//! ghost-weight energies, the weighted sup norms and the inequality harnesses.
//!
//! Every diagnostic works on a [`JetSource`]: a set of weighted sample points at one time
//! with truncated Taylor polynomials of one or more fields. Grid sources build those from
//! finite differences of time levels; analytic sources supply exact jets.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{derivative_in_box, GridMode, IndexBox, ScalarField, UniformGrid};
use crate::integrator::{StateSnapshot, HISTORY_DEPTH};
use crate::quadrature::GaussLegendre;
use crate::taylor::{radius_offset, Taylor, MAX_VARS};

/// Default longest word used for energies: `E_1 .. E_{K+1}` and `X_0 .. X_K`.
pub const K_MAX: usize = 3;

/// `<s> = (1 + s^2)^(1/2)`.
#[inline]
pub fn bracket(s: f64) -> f64 {
    (1.0 + s * s).sqrt()
}

/// Ghost multiplier `e^{-q(sigma)}` with `q = arctan`.
#[inline]
pub fn ghost_factor(sigma: f64) -> f64 {
    (-sigma.atan()).exp()
}

/// One letter of the alphabet `(d_t, d_i, Omega_ij, S, L_i)`; space indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generator {
    Dt,
    D(usize),
    Omega(usize, usize),
    S,
    L(usize),
}

impl Generator {
    pub fn label(&self) -> String {
        match *self {
            Generator::Dt => "dt".to_string(),
            Generator::D(i) => format!("d{i}"),
            Generator::Omega(i, j) => format!("O{i}{j}"),
            Generator::S => "S".to_string(),
            Generator::L(i) => format!("L{i}"),
        }
    }

    /// Image of a jet expanded about `(t0, x0)`; one order is lost.
    pub fn apply(&self, w: &Taylor, t0: f64, x0: &[f64; 3]) -> Taylor {
        match *self {
            Generator::Dt => w.derivative(0),
            Generator::D(i) => w.derivative(i),
            Generator::Omega(i, j) => {
                let a = w.derivative(j).mul_coord(i, x0[i - 1]);
                a.sub(&w.derivative(i).mul_coord(j, x0[j - 1]))
            }
            Generator::S => {
                let mut acc = w.derivative(0).mul_coord(0, t0);
                for i in 1..w.nv() {
                    acc = acc.add(&w.derivative(i).mul_coord(i, x0[i - 1]));
                }
                acc
            }
            Generator::L(i) => {
                let a = w.derivative(i).mul_coord(0, t0);
                a.add(&w.derivative(0).mul_coord(i, x0[i - 1]))
            }
        }
    }
}

/// The `N = 2 + 2n + n(n-1)/2` generators in a fixed order.
pub fn alphabet(n: usize) -> Vec<Generator> {
    let mut a = vec![Generator::Dt];
    a.extend((1..=n).map(Generator::D));
    for i in 1..=n {
        for j in (i + 1)..=n {
            a.push(Generator::Omega(i, j));
        }
    }
    a.push(Generator::S);
    a.extend((1..=n).map(Generator::L));
    a
}

/// An ordered word of generators; letters act in order, the first letter first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GammaWord(pub Vec<Generator>);

impl GammaWord {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn label(&self) -> String {
        if self.0.is_empty() {
            return "1".to_string();
        }
        self.0.iter().map(|g| g.label()).collect::<Vec<_>>().join("*")
    }

    pub fn apply(&self, w: &Taylor, t0: f64, x0: &[f64; 3]) -> Taylor {
        self.0.iter().fold(w.clone(), |acc, g| g.apply(&acc, t0, x0))
    }
}

/// All words of length `<= max_len` without algebraic reduction, in depth-first order.
pub fn words_up_to(n: usize, max_len: usize) -> Vec<GammaWord> {
    fn rec(alpha: &[Generator], cur: &mut Vec<Generator>, max_len: usize, out: &mut Vec<GammaWord>) {
        out.push(GammaWord(cur.clone()));
        if cur.len() == max_len {
            return;
        }
        for &g in alpha {
            cur.push(g);
            rec(alpha, cur, max_len, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(&alphabet(n), &mut Vec::new(), max_len, &mut out);
    out
}

/// Calls `f(word_index, word_len, images)` for every word of length `<= max_len`, in the
/// order of [`words_up_to`], sharing the images of common prefixes.
pub fn visit_words(
    alpha: &[Generator],
    t0: f64,
    x0: &[f64; 3],
    fields: &[Taylor],
    max_len: usize,
    f: &mut impl FnMut(usize, usize, &[Taylor]),
) {
    fn rec(
        alpha: &[Generator],
        t0: f64,
        x0: &[f64; 3],
        fields: &[Taylor],
        depth: usize,
        max_len: usize,
        counter: &mut usize,
        f: &mut impl FnMut(usize, usize, &[Taylor]),
    ) {
        f(*counter, depth, fields);
        *counter += 1;
        if depth == max_len {
            return;
        }
        for g in alpha {
            let imgs: Vec<Taylor> = fields.iter().map(|w| g.apply(w, t0, x0)).collect();
            rec(alpha, t0, x0, &imgs, depth + 1, max_len, counter, f);
        }
    }
    let mut counter = 0;
    rec(alpha, t0, x0, fields, 0, max_len, &mut counter, f);
}

/// Time derivatives `V_k = d_t^k w`, `k = 0..=order`, of one field on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeLevels {
    pub grid: UniformGrid,
    pub t: f64,
    pub v: Vec<Vec<f64>>,
}

impl TimeLevels {
    pub fn new(grid: UniformGrid, t: f64, v: Vec<Vec<f64>>) -> Self {
        debug_assert!(v.iter().all(|a| a.len() == grid.len()));
        TimeLevels { grid, t, v }
    }

    /// Value and velocity only.
    pub fn from_state(grid: UniformGrid, t: f64, value: &[f64], velocity: &[f64]) -> Self {
        TimeLevels::new(grid, t, vec![value.to_vec(), velocity.to_vec()])
    }

    /// Levels at the centre of five equally spaced `(value, velocity)` pairs.
    ///
    /// `V_2`, `V_3` use fourth-order centred differences of the velocities and `V_4` the
    /// second-order third difference.
    pub fn from_history(grid: UniformGrid, t_centre: f64, dt: f64, levels: &[(&[f64], &[f64])]) -> Result<Self> {
        if levels.len() != HISTORY_DEPTH {
            return Err(Error::History {
                word_len: 1,
                required: HISTORY_DEPTH,
                available: levels.len(),
            });
        }
        let n = grid.len();
        let vel = |m: usize, k: usize| levels[m].1[k];
        let mut v2 = vec![0.0; n];
        let mut v3 = vec![0.0; n];
        let mut v4 = vec![0.0; n];
        for k in 0..n {
            let (a, b, c, d, e) = (vel(0, k), vel(1, k), vel(2, k), vel(3, k), vel(4, k));
            v2[k] = (a - 8.0 * b + 8.0 * d - e) / (12.0 * dt);
            v3[k] = (-a + 16.0 * b - 30.0 * c + 16.0 * d - e) / (12.0 * dt * dt);
            v4[k] = (-a + 2.0 * b - 2.0 * d + e) / (2.0 * dt * dt * dt);
        }
        Ok(TimeLevels::new(
            grid,
            t_centre,
            vec![levels[2].0.to_vec(), levels[2].1.to_vec(), v2, v3, v4],
        ))
    }

    /// Levels of `theta` (or `phi` with `phi = true`) from five snapshots.
    pub fn from_snapshots(snaps: &[&StateSnapshot], phi: bool) -> Result<Self> {
        if snaps.len() != HISTORY_DEPTH {
            return Err(Error::History {
                word_len: 1,
                required: HISTORY_DEPTH,
                available: snaps.len(),
            });
        }
        let dt = (snaps[4].t - snaps[0].t) / 4.0;
        let pairs: Vec<(&[f64], &[f64])> = snaps
            .iter()
            .map(|s| {
                if phi {
                    (&s.phi[..], &s.phi_t[..])
                } else {
                    (&s.theta[..], &s.theta_t[..])
                }
            })
            .collect();
        TimeLevels::from_history(snaps[0].grid, snaps[2].t, dt, &pairs)
    }

    /// Highest available time derivative.
    pub fn order(&self) -> usize {
        self.v.len() - 1
    }

    /// `self - other`, level by level.
    pub fn minus(&self, other: &TimeLevels) -> Self {
        let v = self
            .v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        TimeLevels::new(self.grid, self.t, v)
    }

    pub fn truncated(&self, order: usize) -> Self {
        TimeLevels::new(self.grid, self.t, self.v[..=order.min(self.order())].to_vec())
    }
}

/// Finite-difference space derivatives of every time level up to a total order.
#[derive(Debug, Clone)]
struct Derivatives {
    order: usize,
    arrays: HashMap<(usize, [usize; 3]), Vec<f64>>,
}

impl Derivatives {
    fn build(levels: &TimeLevels, order: usize) -> Self {
        let g = levels.grid;
        let axes = if g.is_radial() { 1 } else { g.dim };
        let mut d = Derivatives {
            order,
            arrays: HashMap::new(),
        };
        for j in 0..=order {
            for beta in spatial_indices(axes, order - j) {
                d.ensure(levels, j, beta);
            }
        }
        d
    }

    /// Odd counts take their first-derivative factor outermost so that radial data only ever
    /// meets even reflections.
    fn ensure(&mut self, levels: &TimeLevels, j: usize, beta: [usize; 3]) {
        if self.arrays.contains_key(&(j, beta)) {
            return;
        }
        let g = levels.grid;
        let arr = if beta == [0; 3] {
            levels.v[j].clone()
        } else {
            let (axis, ord) = match (0..3).find(|&a| beta[a] % 2 == 1) {
                Some(a) => (a, 1),
                None => ((0..3).find(|&a| beta[a] >= 2).expect("nonzero index"), 2),
            };
            let mut inner = beta;
            inner[axis] -= ord;
            self.ensure(levels, j, inner);
            let src = &self.arrays[&(j, inner)];
            let mut out = vec![0.0; g.len()];
            derivative_in_box(&g, src, axis, ord, &g.full_box(), &mut out);
            out
        };
        self.arrays.insert((j, beta), arr);
    }

    fn get(&self, j: usize, beta: [usize; 3], k: usize) -> f64 {
        self.arrays.get(&(j, beta)).map_or(0.0, |a| a[k])
    }
}

fn spatial_indices(axes: usize, max: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=max {
        for b in 0..=(if axes > 1 { max - a } else { 0 }) {
            for c in 0..=(if axes > 2 { max - a - b } else { 0 }) {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// A weighted quadrature point at the source time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub x: [f64; 3],
    pub weight: f64,
}

impl SamplePoint {
    pub fn r(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Weighted sample points carrying Taylor jets of several fields at one time.
pub trait JetSource: Sync {
    /// Spatial dimension `n` of the physical problem.
    fn space_dim(&self) -> usize;
    fn time(&self) -> f64;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn point(&self, i: usize) -> SamplePoint;
    fn field_count(&self) -> usize;
    /// Order of the jets of field `f`.
    fn field_order(&self, f: usize) -> usize;
    /// Jets of every field at point `i`, expanded about `(time, point.x)`.
    fn jets(&self, i: usize) -> Vec<Taylor>;
    /// Radius below which the null frame is not used.
    fn r_min(&self) -> f64;
}

/// Points of a grid restricted to an index box; radial grids use product sphere directions.
#[derive(Debug, Clone)]
pub struct GridPoints {
    grid: UniformGrid,
    nodes: Vec<usize>,
    dirs: Vec<([f64; 3], f64)>,
}

/// Polar Gauss nodes times uniform azimuths, weights summing to one.
pub fn sphere_directions(n_polar: usize, n_azimuth: usize) -> Vec<([f64; 3], f64)> {
    let gl = GaussLegendre::new(n_polar);
    let mut out = Vec::with_capacity(n_polar * n_azimuth);
    for (c, wc) in gl.mapped(-1.0, 1.0) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..n_azimuth {
            let a = 2.0 * PI * (k as f64 + 0.5) / n_azimuth as f64;
            out.push(([s * a.cos(), s * a.sin(), c], 0.5 * wc / n_azimuth as f64));
        }
    }
    out
}

impl GridPoints {
    pub fn new(grid: UniformGrid, bx: IndexBox) -> Self {
        let nodes = (0..grid.len()).filter(|&k| bx.contains(grid.unflat(k))).collect();
        let dirs = if grid.is_radial() {
            let mut d = sphere_directions(6, 12);
            // weightless axis and diagonal directions sharpen the sup norms
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    for c in -1i32..=1 {
                        if (a, b, c) != (0, 0, 0) {
                            let n = ((a * a + b * b + c * c) as f64).sqrt();
                            d.push(([a as f64 / n, b as f64 / n, c as f64 / n], 0.0));
                        }
                    }
                }
            }
            d
        } else {
            vec![([1.0, 0.0, 0.0], 1.0)]
        };
        GridPoints { grid, nodes, dirs }
    }

    pub fn all(grid: UniformGrid) -> Self {
        GridPoints::new(grid, grid.full_box())
    }

    /// Radial grids: evaluate along the single ray `e_1` (for field output).
    pub fn along_axis(mut self) -> Self {
        self.dirs = vec![([1.0, 0.0, 0.0], 1.0)];
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len() * self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node and direction behind point `i`.
    fn locate(&self, i: usize) -> (usize, usize) {
        (self.nodes[i / self.dirs.len()], i % self.dirs.len())
    }

    fn point(&self, i: usize) -> SamplePoint {
        let (k, d) = self.locate(i);
        let idx = self.grid.unflat(k);
        let w = self.grid.weight(idx);
        match self.grid.mode {
            GridMode::Cartesian => SamplePoint {
                x: self.grid.point(idx),
                weight: w,
            },
            GridMode::Radial3d => {
                let r = self.grid.coord(0, idx[0]);
                let (om, wd) = self.dirs[d];
                SamplePoint {
                    x: [r * om[0], r * om[1], r * om[2]],
                    weight: w * wd,
                }
            }
        }
    }
}

/// Jets from finite differences of time levels on a grid.
#[derive(Debug, Clone)]
pub struct GridSource {
    grid: UniformGrid,
    t: f64,
    points: GridPoints,
    fields: Vec<Derivatives>,
}

impl GridSource {
    /// Each field gets jets of order `orders[f]`, limited by its available time levels.
    pub fn new(points: GridPoints, fields: &[&TimeLevels], orders: &[usize]) -> Result<Self> {
        let grid = points.grid;
        let t = fields.first().map_or(0.0, |l| l.t);
        let mut built = Vec::new();
        for (lv, &ord) in fields.iter().zip(orders) {
            if lv.order() < ord {
                return Err(Error::History {
                    word_len: ord.saturating_sub(1),
                    required: if ord <= 1 { 1 } else { HISTORY_DEPTH },
                    available: if lv.order() <= 1 { 1 } else { HISTORY_DEPTH },
                });
            }
            built.push(Derivatives::build(lv, ord));
        }
        Ok(GridSource {
            grid,
            t,
            points,
            fields: built,
        })
    }
}

impl JetSource for GridSource {
    fn space_dim(&self) -> usize {
        self.grid.space_dim()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn point(&self, i: usize) -> SamplePoint {
        self.points.point(i)
    }

    fn field_count(&self) -> usize {
        self.fields.len()
    }

    fn field_order(&self, f: usize) -> usize {
        self.fields[f].order
    }

    fn r_min(&self) -> f64 {
        0.5 * self.grid.spacing
    }

    fn jets(&self, i: usize) -> Vec<Taylor> {
        let nv = self.space_dim() + 1;
        let (k, _) = self.points.locate(i);
        match self.grid.mode {
            GridMode::Cartesian => self
                .fields
                .iter()
                .map(|d| Taylor::from_partials(nv, d.order, |e| d.get(e[0], [e[1], e[2], e[3]], k)))
                .collect(),
            GridMode::Radial3d => {
                let p = self.point(i);
                let top = self.fields.iter().map(|d| d.order).max().unwrap_or(0);
                let r0 = p.r();
                // powers of the radius offset, or of |dx|^2 at the origin
                let base = if r0 > 0.0 {
                    radius_offset(nv, top, &p.x)
                } else {
                    let mut q = Taylor::zero(nv, top);
                    for v in 1..nv {
                        let d = Taylor::coordinate(nv, top, v, 0.0);
                        q = q.add(&d.mul(&d));
                    }
                    q
                };
                let mut pows = vec![Taylor::constant(nv, top, 1.0)];
                for m in 1..=top {
                    pows.push(pows[m - 1].mul(&base));
                }
                self.fields
                    .iter()
                    .map(|d| {
                        let mut out = Taylor::zero(nv, d.order);
                        let mut fact_j = 1.0;
                        for j in 0..=d.order {
                            if j > 0 {
                                fact_j *= j as f64;
                            }
                            let mut slice = Taylor::zero(nv, d.order);
                            let mut fact_l = 1.0;
                            for l in 0..=(d.order - j) {
                                if l > 0 {
                                    fact_l *= l as f64;
                                }
                                let a = d.get(j, [l, 0, 0], k);
                                if r0 > 0.0 {
                                    slice = slice.axpy(a / fact_l, &pows[l].truncated(d.order));
                                } else if l % 2 == 0 && l / 2 <= top {
                                    slice = slice.axpy(a / fact_l, &pows[l / 2].truncated(d.order));
                                }
                            }
                            for _ in 0..j {
                                slice = slice.mul_coord(0, 0.0);
                            }
                            out = out.axpy(1.0 / fact_j, &slice);
                        }
                        out
                    })
                    .collect()
            }
        }
    }
}

type JetFn = dyn Fn(f64, &[f64; 3]) -> Vec<Taylor> + Sync + Send;

/// Jets supplied by a closure at explicit points.
pub struct FnSource {
    pub dim: usize,
    pub t: f64,
    pub points: Vec<SamplePoint>,
    pub orders: Vec<usize>,
    pub r_min: f64,
    pub f: Box<JetFn>,
}

impl JetSource for FnSource {
    fn space_dim(&self) -> usize {
        self.dim
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn point(&self, i: usize) -> SamplePoint {
        self.points[i]
    }

    fn field_count(&self) -> usize {
        self.orders.len()
    }

    fn field_order(&self, f: usize) -> usize {
        self.orders[f]
    }

    fn jets(&self, i: usize) -> Vec<Taylor> {
        (self.f)(self.t, &self.points[i].x)
    }

    fn r_min(&self) -> f64 {
        self.r_min
    }
}

const CHUNK: usize = 256;

/// Parallel map over points with a fixed chunking and an in-order merge, so the result does
/// not depend on the number of workers.
pub fn fold_points<A: Send>(
    src: &dyn JetSource,
    init: impl Fn() -> A + Sync,
    body: impl Fn(&mut A, usize, SamplePoint, &[Taylor]) + Sync,
    merge: impl Fn(A, A) -> A,
) -> A {
    let n = src.len();
    let parts: Vec<A> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let p = src.point(i);
                let jets = src.jets(i);
                body(&mut acc, i, p, &jets);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(init(), merge)
}

fn check_order(src: &dyn JetSource, fields: &[usize], need: usize) -> Result<()> {
    for &f in fields {
        let have = src.field_order(f);
        if have < need {
            return Err(Error::History {
                word_len: need.saturating_sub(1),
                required: if need <= 1 { 1 } else { HISTORY_DEPTH },
                available: if have <= 1 { 1 } else { HISTORY_DEPTH },
            });
        }
    }
    Ok(())
}

/// Spatial gradient and time derivative of a jet as `(u_t, grad u)`.
pub fn space_time_gradient(w: &Taylor) -> [f64; MAX_VARS] {
    w.gradient()
}

/// `|T w|^2` at `x` (with `r > 0`).
pub fn good_sq(w: &Taylor, x: &[f64; 3], r: f64) -> f64 {
    let g = w.gradient();
    (1..w.nv()).map(|i| (x[i - 1] / r * g[0] + g[i]).powi(2)).sum()
}

/// `|D w|^2 = w_t^2 + |grad w|^2`.
pub fn d_sq(w: &Taylor) -> f64 {
    w.gradient().iter().take(w.nv()).map(|v| v * v).sum()
}

/// Per-field sums over words, reduced to `E_k`, ghost `E_k` and `X_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSums {
    pub max_len: usize,
    /// `energy[f][m]`: sum over words of length `m` of `E_1(Gamma^a w_f)`.
    pub energy: Vec<Vec<f64>>,
    pub ghost: Vec<Vec<f64>>,
    /// The ghost integrals without the `e^{-q}` factor.
    pub ghost_plain: Vec<Vec<f64>>,
    /// `sup[f][word]`: weighted sup norm of `Gamma^a w_f` for each word.
    pub sup: Vec<Vec<f64>>,
    pub word_len: Vec<usize>,
    /// Bound on the ghost integrand over points closer than `r_min` to the origin.
    pub ghost_core: f64,
}

impl GammaSums {
    pub fn empty(fields: usize, max_len: usize, words: &[GammaWord]) -> Self {
        GammaSums {
            max_len,
            energy: vec![vec![0.0; max_len + 1]; fields],
            ghost: vec![vec![0.0; max_len + 1]; fields],
            ghost_plain: vec![vec![0.0; max_len + 1]; fields],
            sup: vec![vec![0.0; words.len()]; fields],
            word_len: words.iter().map(|w| w.len()).collect(),
            ghost_core: 0.0,
        }
    }

    pub fn merge(mut self, o: GammaSums) -> Self {
        for f in 0..self.energy.len() {
            for m in 0..=self.max_len {
                self.energy[f][m] += o.energy[f][m];
                self.ghost[f][m] += o.ghost[f][m];
                self.ghost_plain[f][m] += o.ghost_plain[f][m];
            }
            for (a, b) in self.sup[f].iter_mut().zip(&o.sup[f]) {
                *a = a.max(*b);
            }
        }
        self.ghost_core += o.ghost_core;
        self
    }

    /// Adds the images of one word at one point.
    pub fn add_images(&mut self, pw: &PointWeights, wi: usize, len: usize, imgs: &[Taylor]) {
        for (f, w) in imgs.iter().enumerate() {
            let dsq = d_sq(w);
            self.energy[f][len] += 0.5 * pw.weight * dsq;
            if pw.r > pw.r_min {
                let tsq = 0.5 * pw.weight * good_sq(w, &pw.x, pw.r);
                self.ghost[f][len] += pw.ghost * tsq;
                self.ghost_plain[f][len] += pw.plain * tsq;
            } else {
                self.ghost_core += pw.weight * pw.ghost * dsq;
            }
            let s = pw.sup * w.value().abs();
            if s > self.sup[f][wi] {
                self.sup[f][wi] = s;
            }
        }
    }

    /// `E_k` of field `f`, `1 <= k <= max_len + 1`.
    pub fn e_k(&self, f: usize, k: usize) -> f64 {
        self.energy[f][..k].iter().sum()
    }

    pub fn ghost_k(&self, f: usize, k: usize) -> f64 {
        self.ghost[f][..k].iter().sum()
    }

    pub fn ghost_plain_k(&self, f: usize, k: usize) -> f64 {
        self.ghost_plain[f][..k].iter().sum()
    }

    /// `X_k` of field `f`, `0 <= k <= max_len`.
    pub fn x_k(&self, f: usize, k: usize) -> f64 {
        self.sup[f]
            .iter()
            .zip(&self.word_len)
            .filter(|(_, &l)| l <= k)
            .map(|(v, _)| v)
            .sum()
    }
}

/// Per-point weights shared by every word.
#[derive(Debug, Clone, Copy)]
pub struct PointWeights {
    pub x: [f64; 3],
    pub r: f64,
    pub r_min: f64,
    pub weight: f64,
    /// `<t - r>^{-2}`
    pub plain: f64,
    /// `e^{-q} <t - r>^{-2}`
    pub ghost: f64,
    pub sup: f64,
}

impl PointWeights {
    pub fn new(n: usize, t: f64, p: &SamplePoint, r_min: f64) -> Self {
        let r = p.r();
        let sigma = t - r;
        let plain = 1.0 / (bracket(sigma) * bracket(sigma));
        PointWeights {
            x: p.x,
            r,
            r_min,
            weight: p.weight,
            plain,
            ghost: ghost_factor(sigma) * plain,
            sup: x_weight(n, t, r),
        }
    }
}

/// Weight `<t + r>^{(n-1)/2} <t - r>^{(n-1)/2}` of the `X` norms.
pub fn x_weight(n: usize, t: f64, r: f64) -> f64 {
    (bracket(t + r) * bracket(t - r)).powf(0.5 * (n as f64 - 1.0))
}

/// Energies, ghost energies and weighted sups of the chosen fields over all words of length
/// `<= max_len`; the fields need jets of order `max_len + 1`.
pub fn gamma_sums(src: &dyn JetSource, fields: &[usize], max_len: usize) -> Result<GammaSums> {
    check_order(src, fields, max_len + 1)?;
    let n = src.space_dim();
    let t = src.time();
    let alpha = alphabet(n);
    let words = words_up_to(n, max_len);
    let r_min = src.r_min();
    let nf = fields.len();
    Ok(fold_points(
        src,
        || GammaSums::empty(nf, max_len, &words),
        |acc, _, p, jets| {
            let sel: Vec<Taylor> = fields.iter().map(|&f| jets[f].truncated(max_len + 1)).collect();
            let pw = PointWeights::new(n, t, &p, r_min);
            visit_words(&alpha, t, &p.x, &sel, max_len, &mut |wi, len, imgs| {
                acc.add_images(&pw, wi, len, imgs)
            });
        },
        GammaSums::merge,
    ))
}

/// `E_k(w) = sum_{|a| <= k-1} E_1(Gamma^a w)` for field `f`.
pub fn energy_ek(src: &dyn JetSource, f: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("energy order starts at 1".to_string()));
    }
    Ok(gamma_sums(src, &[f], k - 1)?.e_k(0, k))
}

/// Ghost-weight energy of order `k` for field `f`.
pub fn ghost_energy(src: &dyn JetSource, f: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("energy order starts at 1".to_string()));
    }
    Ok(gamma_sums(src, &[f], k - 1)?.ghost_k(0, k))
}

/// `X_k(w)` for field `f`.
pub fn weighted_sup_xk(src: &dyn JetSource, f: usize, k: usize) -> Result<f64> {
    check_order(src, &[f], k)?;
    let n = src.space_dim();
    let t = src.time();
    let alpha = alphabet(n);
    let words = words_up_to(n, k);
    let sup = fold_points(
        src,
        || vec![0.0f64; words.len()],
        |acc, _, p, jets| {
            let xw = x_weight(n, t, p.r());
            visit_words(&alpha, t, &p.x, &[jets[f].truncated(k)], k, &mut |wi, _, imgs| {
                acc[wi] = acc[wi].max(xw * imgs[0].value().abs());
            });
        },
        |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
    );
    Ok(sup.iter().sum())
}

/// `Gamma^a w` at every node of the levels' grid (radial grids: along the ray `e_1`).
pub fn apply_gamma(levels: &TimeLevels, word: &GammaWord) -> Result<ScalarField> {
    let order = word.len();
    if levels.order() < order {
        return Err(Error::History {
            word_len: order,
            required: if order <= 1 { 1 } else { HISTORY_DEPTH },
            available: if levels.order() <= 1 { 1 } else { HISTORY_DEPTH },
        });
    }
    let g = levels.grid;
    let src = GridSource::new(GridPoints::all(g).along_axis(), &[levels], &[order])?;
    let values = fold_points(
        &src,
        Vec::new,
        |acc: &mut Vec<f64>, _, p, jets| acc.push(word.apply(&jets[0], levels.t, &p.x).value()),
        |mut a, b| {
            a.extend(b);
            a
        },
    );
    Ok(ScalarField {
        grid: g,
        values,
        t: levels.t,
    })
}

/// Largest `|t box w - (S d_t w - sum_i L_i d_i w)|` over the points, relative to the size of
/// the terms; the identity is algebraic, so this measures rounding.
pub fn wave_identity_residual(src: &dyn JetSource, f: usize) -> Result<f64> {
    check_order(src, &[f], 2)?;
    let n = src.space_dim();
    let t = src.time();
    Ok(fold_points(
        src,
        || 0.0f64,
        |acc, _, p, jets| {
            let w = jets[f].truncated(2);
            let lhs = t * w.box_op().value();
            let mut rhs = Generator::S.apply(&Generator::Dt.apply(&w, t, &p.x), t, &p.x).value();
            let mut scale = lhs.abs() + rhs.abs();
            for i in 1..=n {
                let li = Generator::L(i)
                    .apply(&Generator::D(i).apply(&w, t, &p.x), t, &p.x)
                    .value();
                rhs -= li;
                scale += li.abs();
            }
            *acc = acc.max((lhs - rhs).abs() / (scale + 1e-300));
        },
        f64::max,
    ))
}

/// Largest `|box(g w_h) - (g box w + c box w)|` where `w_h` comes from `discrete`, the right side
/// from the exact jets of `exact` (same points), and `c = 2` for the scaling field.
pub fn commutator_residual(discrete: &dyn JetSource, exact: &dyn JetSource, g: Generator) -> Result<f64> {
    check_order(discrete, &[0], 3)?;
    check_order(exact, &[0], 3)?;
    if discrete.len() != exact.len() {
        return Err(Error::Config("commutator check needs matching point sets".to_string()));
    }
    let t = discrete.time();
    let c = if g == Generator::S { 2.0 } else { 0.0 };
    Ok(fold_points(
        discrete,
        || 0.0f64,
        |acc, i, p, jets| {
            let lhs = g.apply(&jets[0].truncated(3), t, &p.x).box_op().value();
            let ex = exact.jets(i)[0].truncated(3);
            let bw = ex.box_op();
            let rhs = g.apply(&bw, t, &p.x).value() + c * bw.value();
            *acc = acc.max((lhs - rhs).abs());
        },
        f64::max,
    ))
}

/// Compactly supported polynomial bump `weight (1 - |x - c - v t|^2 / w^2)^power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingBump {
    pub center: [f64; 3],
    pub velocity: [f64; 3],
    pub width: f64,
    pub power: usize,
    pub weight: f64,
}

impl MovingBump {
    fn offset(&self, t: f64, x: &[f64; 3]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for a in 0..3 {
            y[a] = x[a] - self.center[a] - self.velocity[a] * t;
        }
        y
    }

    pub fn value(&self, dim: usize, t: f64, x: &[f64; 3]) -> f64 {
        let y = self.offset(t, x);
        let q = y[..dim].iter().map(|v| v * v).sum::<f64>() / (self.width * self.width);
        if q >= 1.0 {
            0.0
        } else {
            self.weight * (1.0 - q).powi(self.power as i32)
        }
    }

    /// Exact jet of the given order about `(t, x)`.
    pub fn jet(&self, dim: usize, order: usize, t: f64, x: &[f64; 3]) -> Taylor {
        let nv = dim + 1;
        if self.value(dim, t, x) == 0.0 {
            return Taylor::zero(nv, order);
        }
        let y0 = self.offset(t, x);
        let mut q = Taylor::zero(nv, order);
        for a in 0..dim {
            let ya = Taylor::coordinate(nv, order, a + 1, y0[a])
                .axpy(-self.velocity[a], &Taylor::coordinate(nv, order, 0, 0.0));
            q = q.add(&ya.mul(&ya));
        }
        let p = Taylor::constant(nv, order, 1.0).axpy(-1.0 / (self.width * self.width), &q);
        p.powi(self.power).scale(self.weight)
    }

    /// Reach of the support at time `t` from the origin.
    pub fn reach(&self, t: f64) -> f64 {
        let c: f64 = (0..3)
            .map(|a| (self.center[a] + self.velocity[a] * t).powi(2))
            .sum::<f64>()
            .sqrt();
        c + self.width
    }
}

/// A superposition of moving bumps, supported in `|x| <= t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpFamilyMember {
    pub dim: usize,
    pub bumps: Vec<MovingBump>,
}

impl BumpFamilyMember {
    pub fn jet(&self, order: usize, t: f64, x: &[f64; 3]) -> Taylor {
        self.bumps.iter().fold(Taylor::zero(self.dim + 1, order), |acc, b| {
            acc.add(&b.jet(self.dim, order, t, x))
        })
    }

    /// Exact-jet source on the nodes of a grid of spacing `h` that meet a support.
    pub fn source(&self, t: f64, h: f64, order: usize) -> FnSource {
        let dim = self.dim;
        let mut points = Vec::new();
        let reach = self.bumps.iter().map(|b| b.reach(t)).fold(0.0, f64::max);
        let m = (reach / h).ceil() as i64 + 1;
        let range = |d: usize| if d < dim { -m..=m } else { 0..=0 };
        let w = h.powi(dim as i32);
        for i in range(0) {
            for j in range(1) {
                for k in range(2) {
                    let x = [i as f64 * h, j as f64 * h, k as f64 * h];
                    if self.bumps.iter().any(|b| b.value(dim, t, &x) != 0.0) {
                        points.push(SamplePoint { x, weight: w });
                    }
                }
            }
        }
        let me = self.clone();
        FnSource {
            dim,
            t,
            points,
            orders: vec![order],
            r_min: 0.5 * h,
            f: Box::new(move |t, x| vec![me.jet(order, t, x)]),
        }
    }
}

/// Random superpositions of one to three bumps with centres, widths and speeds chosen so the
/// support stays in `|x| <= t + 1`.
pub fn bump_family(dim: usize, count: usize, seed: u64) -> Vec<BumpFamilyMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let bumps = (0..k)
                .map(|_| {
                    let width = rng.gen_range(0.35..0.7);
                    let mut center = [0.0; 3];
                    let mut velocity = [0.0; 3];
                    let rc = rng.gen_range(0.0..(1.0 - width));
                    let speed = rng.gen_range(0.0..1.0);
                    let dir = random_unit(&mut rng, dim);
                    let vdir = random_unit(&mut rng, dim);
                    for a in 0..dim {
                        center[a] = rc * dir[a];
                        velocity[a] = speed * vdir[a];
                    }
                    MovingBump {
                        center,
                        velocity,
                        width,
                        power: 6,
                        weight: rng.gen_range(-1.0..1.0),
                    }
                })
                .collect();
            BumpFamilyMember { dim, bumps }
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> [f64; 3] {
    loop {
        let mut v = [0.0; 3];
        for a in v.iter_mut().take(dim) {
            *a = rng.gen_range(-1.0..1.0);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarnessKind {
    /// `<t+r>^{(n-1)/2} <t-r>^{1/2} |u| <= C sum_{|a|<=k} ||Gamma^a u||_2`
    KlainermanSobolev,
    /// `||<t-r>^{-1} u||_2 <= C ||grad u||_2`
    Hardy,
    /// `|Du| <= C <t-r>^{-1} |Gamma u|`
    DecayDerivative,
    /// `|Tu| <= C <t+r>^{-1} |Gamma u|`
    DecayGood,
}

/// Ratio statistics of a harness over a family.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessStats {
    pub kind: HarnessKind,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// Jet order each harness needs.
pub fn harness_order(kind: HarnessKind, n: usize) -> usize {
    match kind {
        HarnessKind::KlainermanSobolev => n / 2 + 1,
        HarnessKind::Hardy => 1,
        HarnessKind::DecayDerivative | HarnessKind::DecayGood => 2,
    }
}

/// `LHS / RHS` for one member; a vanishing member gives 0.
pub fn harness_ratio(kind: HarnessKind, src: &dyn JetSource) -> Result<f64> {
    let n = src.space_dim();
    let t = src.time();
    let need = harness_order(kind, n);
    check_order(src, &[0], need)?;
    let ratio = |a: f64, b: f64| if a == 0.0 && b == 0.0 { 0.0 } else { a / b };
    match kind {
        HarnessKind::KlainermanSobolev => {
            let k = need;
            let alpha = alphabet(n);
            let words = words_up_to(n, k);
            let (sup, l2) = fold_points(
                src,
                || (0.0f64, vec![0.0; words.len()]),
                |acc, _, p, jets| {
                    let r = p.r();
                    let w = bracket(t + r).powf(0.5 * (n as f64 - 1.0)) * bracket(t - r).sqrt();
                    acc.0 = acc.0.max(w * jets[0].value().abs());
                    visit_words(&alpha, t, &p.x, &[jets[0].truncated(k)], k, &mut |wi, _, imgs| {
                        acc.1[wi] += p.weight * imgs[0].value().powi(2);
                    });
                },
                |a, b| (a.0.max(b.0), a.1.iter().zip(&b.1).map(|(x, y)| x + y).collect()),
            );
            Ok(ratio(sup, l2.iter().map(|v| v.sqrt()).sum()))
        }
        HarnessKind::Hardy => {
            let (lhs, rhs) = fold_points(
                src,
                || (0.0f64, 0.0f64),
                |acc, _, p, jets| {
                    let w = &jets[0];
                    acc.0 += p.weight * (w.value() / bracket(t - p.r())).powi(2);
                    acc.1 += p.weight * (1..=n).map(|i| w.d1(i).powi(2)).sum::<f64>();
                },
                |a, b| (a.0 + b.0, a.1 + b.1),
            );
            Ok(ratio(lhs.sqrt(), rhs.sqrt()))
        }
        HarnessKind::DecayDerivative | HarnessKind::DecayGood => {
            let alpha = alphabet(n);
            let r_min = src.r_min();
            let (best, gmax) = fold_points(
                src,
                || (Vec::new(), 0.0f64),
                |acc: &mut (Vec<(f64, f64)>, f64), _, p, jets| {
                    let w = jets[0].truncated(2);
                    let r = p.r();
                    let gsq: f64 = alpha.iter().map(|g| g.apply(&w, t, &p.x).value().powi(2)).sum();
                    let lhs = if kind == HarnessKind::DecayDerivative {
                        bracket(t - r) * d_sq(&w).sqrt()
                    } else if r > r_min {
                        bracket(t + r) * good_sq(&w, &p.x, r).sqrt()
                    } else {
                        return;
                    };
                    acc.0.push((lhs, gsq.sqrt()));
                    acc.1 = acc.1.max(gsq.sqrt());
                },
                |mut a, b| {
                    a.0.extend(b.0);
                    (a.0, a.1.max(b.1))
                },
            );
            // points where every generator nearly vanishes carry no information
            let floor = 1e-6 * gmax;
            Ok(best
                .iter()
                .filter(|(_, g)| *g > floor)
                .map(|(l, g)| l / g)
                .fold(0.0, f64::max))
        }
    }
}

/// Runs one harness over a family of sources.
pub fn inequality_harness(kind: HarnessKind, family: &[&dyn JetSource]) -> Result<HarnessStats> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let ratios = family
        .iter()
        .map(|s| harness_ratio(kind, *s))
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(HarnessStats {
        kind,
        ratios,
        max_ratio,
    })
}
