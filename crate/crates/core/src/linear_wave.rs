//! Exact solutions of the free wave equation from spherical and disc means, their
//! space-time jets, the lambda norms of the data and the sharp sup-norm audit.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bump_set, multi_indices_up_to, BumpSet, BumpSpec, MultiIndex, SmoothData};
use crate::error::{Error, Result};
use crate::grid::{h_k_norm_fixed, w_k1_homogeneous_norm, w_kp_norm_fixed, GridMode, UniformGrid};
use crate::jet::Jet2;
use crate::quadrature::GaussLegendre;

/// Generator of the background `Theta` with `Theta(0) = A theta0`, `Theta_t(0) = A theta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSpec {
    pub dim: usize,
    pub theta0: BumpSet,
    pub theta1: BumpSet,
    pub amplitude: f64,
}

/// Serializable form of a background, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    #[serde(default = "default_theta0")]
    pub theta0: Vec<BumpSpec>,
    #[serde(default = "default_theta1")]
    pub theta1: Vec<BumpSpec>,
    /// Fixed amplitude; mutually exclusive with `threshold_fraction`.
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// Scale the data to this fraction of the largest amplitude meeting every threshold;
    /// [`DEFAULT_THRESHOLD_FRACTION`] when neither this nor `amplitude` is given.
    #[serde(default)]
    pub threshold_fraction: Option<f64>,
}

pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.9;

fn default_theta0() -> Vec<BumpSpec> {
    vec![BumpSpec::canonical()]
}

fn default_theta1() -> Vec<BumpSpec> {
    vec![BumpSpec::at(&[], 1.0, 0.5)]
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            theta0: default_theta0(),
            theta1: default_theta1(),
            amplitude: None,
            threshold_fraction: Some(DEFAULT_THRESHOLD_FRACTION),
        }
    }
}

impl BackgroundConfig {
    /// Fills the default amplitude rule so it shows up when the configuration is echoed.
    pub fn with_defaults(mut self) -> Self {
        if self.amplitude.is_none() && self.threshold_fraction.is_none() {
            self.threshold_fraction = Some(DEFAULT_THRESHOLD_FRACTION);
        }
        self
    }

    pub fn to_spec(&self, dim: usize) -> Result<BackgroundSpec> {
        let unit = BackgroundSpec {
            dim,
            theta0: bump_set(dim, &self.theta0)?,
            theta1: bump_set(dim, &self.theta1)?,
            amplitude: 1.0,
        };
        unit.theta0.check_support_within(1.0)?;
        unit.theta1.check_support_within(1.0)?;
        match (self.amplitude, self.threshold_fraction) {
            (Some(a), None) => Ok(unit.with_amplitude(a)),
            (None, Some(f)) => unit.at_threshold_fraction(f),
            (None, None) => unit.at_threshold_fraction(DEFAULT_THRESHOLD_FRACTION),
            (Some(_), Some(_)) => Err(Error::Config(
                "background sets both `amplitude` and `threshold_fraction`".to_string(),
            )),
        }
    }
}

impl BackgroundSpec {
    pub fn zero(dim: usize) -> Self {
        BackgroundSpec {
            dim,
            theta0: BumpSet::empty(dim),
            theta1: BumpSet::empty(dim),
            amplitude: 0.0,
        }
    }

    pub fn new(theta0: BumpSet, theta1: BumpSet, amplitude: f64) -> Self {
        BackgroundSpec {
            dim: theta0.dim,
            theta0,
            theta1,
            amplitude,
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        BackgroundSpec {
            amplitude,
            ..self.clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || (self.theta0.is_empty() && self.theta1.is_empty())
    }

    pub fn is_radial(&self) -> bool {
        self.theta0.is_radial() && self.theta1.is_radial()
    }

    /// Largest radius of the data support.
    pub fn support_radius(&self) -> f64 {
        let r = |b: &BumpSet| {
            b.support()
                .map_or(0.0, |s| s.center.iter().map(|v| v * v).sum::<f64>().sqrt() + s.radius)
        };
        r(&self.theta0).max(r(&self.theta1))
    }

    /// The spec rescaled to `fraction` of the largest amplitude satisfying every threshold.
    pub fn at_threshold_fraction(&self, fraction: f64) -> Result<Self> {
        let unit = self.with_amplitude(1.0);
        let norms = lambda_norms(&unit)?;
        let bounds = thresholds(self.dim);
        let mut a_max = f64::INFINITY;
        if norms.lambda0 > 0.0 {
            a_max = a_max.min(bounds[0] / norms.lambda0);
        }
        if norms.lambda1 > 0.0 {
            a_max = a_max.min(bounds[1] / norms.lambda1);
        }
        if !a_max.is_finite() {
            return Ok(unit.with_amplitude(0.0));
        }
        Ok(unit.with_amplitude(fraction * a_max))
    }
}

/// Quadrature resolution: nodes in the polar (or `psi`) direction and around the axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanRes {
    pub polar: usize,
    pub azimuth: usize,
}

impl MeanRes {
    pub const START: MeanRes = MeanRes { polar: 24, azimuth: 16 };

    /// Starting resolution of the adaptive loop; flat bumps need more arc nodes in 2D.
    pub fn start(dim: usize) -> Self {
        if dim == 2 {
            MeanRes { polar: 32, azimuth: 32 }
        } else {
            MeanRes::START
        }
    }

    pub fn doubled(self) -> Self {
        MeanRes {
            polar: 2 * self.polar,
            azimuth: 2 * self.azimuth,
        }
    }
}

/// Absolute (or, for large components, relative) agreement required between refinements.
pub const MEAN_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 5;

/// Which piece of the Cauchy data a function supplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Position,
    Velocity,
}

/// One jet component `d_t^k d_x^s`.
#[derive(Debug, Clone, Copy)]
struct Component {
    k: usize,
    s: MultiIndex,
}

fn components(dim: usize, order: usize) -> Vec<Component> {
    let mut out = vec![Component { k: 0, s: [0; 3] }];
    if order == 0 {
        return out;
    }
    let e = |i: usize| crate::data::unit(i);
    out.push(Component { k: 1, s: [0; 3] });
    for i in 0..dim {
        out.push(Component { k: 0, s: e(i) });
    }
    out.push(Component { k: 2, s: [0; 3] });
    for i in 0..dim {
        out.push(Component { k: 1, s: e(i) });
    }
    for i in 0..dim {
        for j in i..dim {
            out.push(Component {
                k: 0,
                s: crate::data::add(e(i), e(j)),
            });
        }
    }
    out
}

fn to_jet(dim: usize, c: &[f64]) -> Jet2 {
    let mut j = Jet2::zero(dim);
    j.value = c[0];
    if c.len() == 1 {
        return j;
    }
    j.d1[0] = c[1];
    for i in 0..dim {
        j.d1[i + 1] = c[2 + i];
    }
    let mut k = 2 + dim;
    j.set_d2(0, 0, c[k]);
    k += 1;
    for i in 0..dim {
        j.set_d2(0, i + 1, c[k]);
        k += 1;
    }
    for i in 0..dim {
        for l in i..dim {
            j.set_d2(i + 1, l + 1, c[k]);
            k += 1;
        }
    }
    j
}

#[inline]
fn slot(a: MultiIndex) -> usize {
    a[0] as usize * 25 + a[1] as usize * 5 + a[2] as usize
}

/// `d^s Lap^j` of the data from a packed partials table.
#[inline]
fn derived(p: &[f64; 125], s: MultiIndex, lap: bool, dim: usize) -> f64 {
    if !lap {
        return p[slot(s)];
    }
    let mut acc = 0.0;
    for i in 0..dim {
        let mut a = s;
        a[i] += 2;
        acc += p[slot(a)];
    }
    acc
}

/// For a component and data role: whether the derived data enters as position data, and
/// whether it carries a Laplacian.
fn derived_kind(role: Role, k: usize) -> (bool, bool) {
    match (role, k) {
        (Role::Position, 0) => (true, false),
        (Role::Position, 1) => (false, true),
        (Role::Position, _) => (true, true),
        (Role::Velocity, 0) => (false, false),
        (Role::Velocity, 1) => (true, false),
        (Role::Velocity, _) => (false, true),
    }
}

struct Integrand<'a> {
    dim: usize,
    comps: &'a [Component],
    idx: Vec<MultiIndex>,
    role: Role,
}

impl<'a> Integrand<'a> {
    fn new(dim: usize, comps: &'a [Component], role: Role, order: usize) -> Self {
        // one extra derivative for the radial gradient term of position data
        let max = match role {
            Role::Position => order + 1,
            Role::Velocity => order,
        };
        Integrand {
            dim,
            comps,
            idx: multi_indices_up_to(dim, max),
            role,
        }
    }

    /// Adds `w * integrand` for every component; `pos_coef`, `grad_coef`, `vel_coef` are the
    /// kernel factors multiplying `f0`, `omega . grad f0` and `f1`.
    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        piece: &dyn SmoothData,
        y: &[f64; 3],
        omega: &[f64; 3],
        w: f64,
        pos_coef: f64,
        grad_coef: f64,
        vel_coef: f64,
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) {
        let dim = self.dim;
        scratch.resize(self.idx.len(), 0.0);
        piece.partials(&y[..dim], &self.idx, scratch);
        let mut p = [0.0; 125];
        for (a, v) in self.idx.iter().zip(scratch.iter()) {
            p[slot(*a)] = *v;
        }
        for (c, slot_out) in self.comps.iter().zip(out.iter_mut()) {
            let (as_position, lap) = derived_kind(self.role, c.k);
            let val = if as_position {
                let mut g = 0.0;
                for i in 0..dim {
                    let mut s = c.s;
                    s[i] += 1;
                    g += omega[i] * derived(&p, s, lap, dim);
                }
                pos_coef * derived(&p, c.s, lap, dim) + grad_coef * g
            } else {
                vel_coef * derived(&p, c.s, lap, dim)
            };
            *slot_out += w * val;
        }
    }
}

fn orthonormal_frame(e: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if e[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let d = a[0] * e[0] + a[1] * e[1] + a[2] * e[2];
    let mut e1 = [a[0] - d * e[0], a[1] - d * e[1], a[2] - d * e[2]];
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [
        e[1] * e1[2] - e[2] * e1[1],
        e[2] * e1[0] - e[0] * e1[2],
        e[0] * e1[1] - e[1] * e1[0],
    ];
    (e1, e2)
}

/// Kirchhoff mean of one data piece over the sphere `|y - x| = t`, restricted to the cap
/// meeting the piece's support ball.
fn sphere_piece(
    ig: &Integrand,
    piece: &dyn SmoothData,
    t: f64,
    x: &[f64; 3],
    res: MeanRes,
    scratch: &mut Vec<f64>,
    out: &mut [f64],
) {
    let (axis, mu_min) = match piece.support() {
        None => ([0.0, 0.0, 1.0], -1.0),
        Some(ball) => {
            let d = [ball.center[0] - x[0], ball.center[1] - x[1], ball.center[2] - x[2]];
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if dist < 1e-12 * (1.0 + ball.radius) {
                if t >= ball.radius {
                    return;
                }
                ([0.0, 0.0, 1.0], -1.0)
            } else {
                let m = (t * t + dist * dist - ball.radius * ball.radius) / (2.0 * t * dist);
                if m >= 1.0 {
                    return;
                }
                ([d[0] / dist, d[1] / dist, d[2] / dist], m.max(-1.0))
            }
        }
    };
    let (e1, e2) = orthonormal_frame(axis);
    let gl = GaussLegendre::new(res.polar);
    let na = res.azimuth;
    let wa = 2.0 * PI / na as f64 / (4.0 * PI);
    for (mu, wmu) in gl.mapped(mu_min, 1.0) {
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        for ia in 0..na {
            let a = 2.0 * PI * ia as f64 / na as f64;
            let (sa, ca) = a.sin_cos();
            let mut omega = [0.0; 3];
            let mut y = [0.0; 3];
            for k in 0..3 {
                omega[k] = s * (ca * e1[k] + sa * e2[k]) + mu * axis[k];
                y[k] = x[k] + t * omega[k];
            }
            ig.accumulate(piece, &y, &omega, wmu * wa, 1.0, t, t, scratch, out);
        }
    }
}

/// Poisson mean of one data piece in two dimensions with `r = t sin(psi)`, restricted to the
/// annulus and arcs meeting the support ball.
fn disc_piece(
    ig: &Integrand,
    piece: &dyn SmoothData,
    t: f64,
    x: &[f64; 3],
    res: MeanRes,
    scratch: &mut Vec<f64>,
    out: &mut [f64],
) {
    let (center, radius, dist) = match piece.support() {
        None => ([0.0; 3], f64::INFINITY, 0.0),
        Some(ball) => {
            let d = ((ball.center[0] - x[0]).powi(2) + (ball.center[1] - x[1]).powi(2)).sqrt();
            (ball.center, ball.radius, d)
        }
    };
    let r_lo = (dist - radius).max(0.0);
    let r_hi = (dist + radius).min(t);
    if r_lo >= r_hi {
        return;
    }
    let psi_lo = (r_lo / t).min(1.0).asin();
    let psi_hi = if r_hi >= t { PI / 2.0 } else { (r_hi / t).asin() };
    let alpha_d = (center[1] - x[1]).atan2(center[0] - x[0]);
    let gl_psi = GaussLegendre::new(res.polar);
    let gl_arc = GaussLegendre::new(res.azimuth);
    let norm = 1.0 / (2.0 * PI);
    // the circle leaves the support at r = R - D, where the psi-integrand is flat but not analytic
    let r_split = radius - dist;
    let mut panels = vec![(psi_lo, psi_hi)];
    if radius.is_finite() && r_split > r_lo && r_split < r_hi {
        let psi_split = (r_split / t).asin();
        panels = vec![(psi_lo, psi_split), (psi_split, psi_hi)];
    }
    let nodes = panels.iter().flat_map(|&(a, b)| gl_psi.mapped(a, b));
    for (psi, wpsi) in nodes {
        let r = t * psi.sin();
        let full = if !radius.is_finite() || dist < 1e-12 * (1.0 + radius) || r == 0.0 {
            if r >= radius {
                continue;
            }
            true
        } else {
            let kappa = (r * r + dist * dist - radius * radius) / (2.0 * r * dist);
            if kappa >= 1.0 {
                continue;
            }
            if kappa <= -1.0 {
                true
            } else {
                let half = kappa.acos();
                for (a, wa) in gl_arc.mapped(alpha_d - half, alpha_d + half) {
                    let (sa, ca) = a.sin_cos();
                    let omega = [ca, sa, 0.0];
                    let y = [x[0] + r * ca, x[1] + r * sa, 0.0];
                    ig.accumulate(piece, &y, &omega, norm * wpsi * wa, r / t, r * r / t, r, scratch, out);
                }
                false
            }
        };
        if full {
            let n = 2 * res.azimuth;
            let wa = 2.0 * PI / n as f64;
            for ia in 0..n {
                let a = 2.0 * PI * ia as f64 / n as f64;
                let (sa, ca) = a.sin_cos();
                let omega = [ca, sa, 0.0];
                let y = [x[0] + r * ca, x[1] + r * sa, 0.0];
                ig.accumulate(piece, &y, &omega, norm * wpsi * wa, r / t, r * r / t, r, scratch, out);
            }
        }
    }
}

/// Components of the unit-amplitude solution at one resolution.
fn mean_components(
    dim: usize,
    u0: &[&dyn SmoothData],
    u1: &[&dyn SmoothData],
    t: f64,
    x: &[f64; 3],
    order: usize,
    res: MeanRes,
) -> Vec<f64> {
    let comps = components(dim, order);
    let mut out = vec![0.0; comps.len()];
    let mut scratch = Vec::new();
    for (pieces, role) in [(u0, Role::Position), (u1, Role::Velocity)] {
        let ig = Integrand::new(dim, &comps, role, order);
        for &piece in pieces {
            match dim {
                3 => sphere_piece(&ig, piece, t, x, res, &mut scratch, &mut out),
                2 => disc_piece(&ig, piece, t, x, res, &mut scratch, &mut out),
                _ => panic!("mean-value formulas exist for dimensions 2 and 3"),
            }
        }
    }
    out
}

/// Components at `t = 0`, read off the Cauchy data.
fn data_components(dim: usize, u0: &[&dyn SmoothData], u1: &[&dyn SmoothData], x: &[f64; 3], order: usize) -> Vec<f64> {
    let comps = components(dim, order);
    let mut out = vec![0.0; comps.len()];
    let idx = multi_indices_up_to(dim, 4);
    let mut vals = vec![0.0; idx.len()];
    let mut p0 = [0.0; 125];
    let mut p1 = [0.0; 125];
    for (pieces, p) in [(u0, &mut p0), (u1, &mut p1)] {
        for &piece in pieces {
            piece.partials(&x[..dim], &idx, &mut vals);
            for (a, v) in idx.iter().zip(&vals) {
                p[slot(*a)] += v;
            }
        }
    }
    for (c, o) in comps.iter().zip(out.iter_mut()) {
        *o = match c.k {
            0 => derived(&p0, c.s, false, dim),
            1 => derived(&p1, c.s, false, dim),
            _ => derived(&p0, c.s, true, dim),
        };
    }
    out
}

fn agree(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// Adaptive evaluation: doubles the resolution until two successive results agree.
fn adaptive_components(
    dim: usize,
    u0: &[&dyn SmoothData],
    u1: &[&dyn SmoothData],
    t: f64,
    x: &[f64; 3],
    order: usize,
) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(data_components(dim, u0, u1, x, order));
    }
    let mut res = MeanRes::start(dim);
    let mut prev = mean_components(dim, u0, u1, t, x, order, res);
    for _ in 0..MAX_DOUBLINGS {
        res = res.doubled();
        let next = mean_components(dim, u0, u1, t, x, order, res);
        if agree(&prev, &next, MEAN_TOL) {
            return Ok(next);
        }
        prev = next;
    }
    let coarse = prev[0];
    let fine = mean_components(dim, u0, u1, t, x, order, res.doubled())[0];
    Err(Error::Quadrature {
        what: format!("mean-value formula at t = {t}, x = {:?}", &x[..dim]),
        coarse,
        fine,
    })
}

fn point(dim: usize, x: &[f64]) -> [f64; 3] {
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(&x[..dim]);
    p
}

/// Solution of the 3D wave equation with general data by the Kirchhoff formula (unit amplitude).
pub fn kirchhoff_general(u0: &[&dyn SmoothData], u1: &[&dyn SmoothData], t: f64, x: &[f64]) -> Result<f64> {
    Ok(adaptive_components(3, u0, u1, t, &point(3, x), 0)?[0])
}

/// Solution of the 2D wave equation with general data by the Poisson formula (unit amplitude).
pub fn poisson_general(u0: &[&dyn SmoothData], u1: &[&dyn SmoothData], t: f64, x: &[f64]) -> Result<f64> {
    Ok(adaptive_components(2, u0, u1, t, &point(2, x), 0)?[0])
}

/// Jet of the solution for general data at a fixed quadrature resolution.
pub fn jet_general_fixed(
    dim: usize,
    u0: &[&dyn SmoothData],
    u1: &[&dyn SmoothData],
    t: f64,
    x: &[f64],
    res: MeanRes,
) -> Jet2 {
    let p = point(dim, x);
    let c = if t == 0.0 {
        data_components(dim, u0, u1, &p, 2)
    } else {
        mean_components(dim, u0, u1, t, &p, 2, res)
    };
    to_jet(dim, &c)
}

fn check_dim(spec: &BackgroundSpec, dim: usize) -> Result<()> {
    if spec.dim != dim {
        return Err(Error::Config(format!(
            "evaluator for dimension {dim} called on a {}-dimensional background",
            spec.dim
        )));
    }
    Ok(())
}

/// `Theta(t, x)` in three dimensions.
pub fn kirchhoff_eval(spec: &BackgroundSpec, t: f64, x: &[f64]) -> Result<f64> {
    check_dim(spec, 3)?;
    if spec.is_zero() {
        return Ok(0.0);
    }
    let v = kirchhoff_general(&spec.theta0.pieces(), &spec.theta1.pieces(), t, x)?;
    Ok(spec.amplitude * v)
}

/// `Theta(t, x)` in two dimensions.
pub fn poisson2d_eval(spec: &BackgroundSpec, t: f64, x: &[f64]) -> Result<f64> {
    check_dim(spec, 2)?;
    if spec.is_zero() {
        return Ok(0.0);
    }
    let v = poisson_general(&spec.theta0.pieces(), &spec.theta1.pieces(), t, x)?;
    Ok(spec.amplitude * v)
}

/// Value of `Theta` in the dimension of the data.
pub fn eval_background(spec: &BackgroundSpec, t: f64, x: &[f64]) -> Result<f64> {
    match spec.dim {
        3 => kirchhoff_eval(spec, t, x),
        _ => poisson2d_eval(spec, t, x),
    }
}

/// Value, first and second space-time derivatives of `Theta`, adaptively converged.
pub fn background_jet(spec: &BackgroundSpec, t: f64, x: &[f64]) -> Result<Jet2> {
    if spec.is_zero() {
        return Ok(Jet2::zero(spec.dim));
    }
    let c = adaptive_components(
        spec.dim,
        &spec.theta0.pieces(),
        &spec.theta1.pieces(),
        t,
        &point(spec.dim, x),
        2,
    )?;
    Ok(to_jet(spec.dim, &c).scale(spec.amplitude))
}

/// Jet of `Theta` at a fixed quadrature resolution (smooth in `(t, x)`).
pub fn background_jet_fixed(spec: &BackgroundSpec, t: f64, x: &[f64], res: MeanRes) -> Jet2 {
    if spec.is_zero() {
        return Jet2::zero(spec.dim);
    }
    jet_general_fixed(spec.dim, &spec.theta0.pieces(), &spec.theta1.pieces(), t, x, res).scale(spec.amplitude)
}

/// Value and first derivatives of `Theta` at a fixed resolution; second derivatives are left zero.
pub fn background_d1_fixed(spec: &BackgroundSpec, t: f64, x: &[f64], res: MeanRes) -> Jet2 {
    if spec.is_zero() {
        return Jet2::zero(spec.dim);
    }
    let p = point(spec.dim, x);
    let (u0, u1) = (spec.theta0.pieces(), spec.theta1.pieces());
    let c = if t == 0.0 {
        data_components(spec.dim, &u0, &u1, &p, 1)
    } else {
        mean_components(spec.dim, &u0, &u1, t, &p, 1, res)
    };
    to_jet(spec.dim, &c).scale(spec.amplitude)
}

/// Adaptively converged value and first derivatives of `Theta`.
pub fn background_d1(spec: &BackgroundSpec, t: f64, x: &[f64]) -> Result<Jet2> {
    if spec.is_zero() {
        return Ok(Jet2::zero(spec.dim));
    }
    let (u0, u1) = (spec.theta0.pieces(), spec.theta1.pieces());
    let c = adaptive_components(spec.dim, &u0, &u1, t, &point(spec.dim, x), 1)?;
    Ok(to_jet(spec.dim, &c).scale(spec.amplitude))
}

/// Value of `Theta` at a fixed quadrature resolution.
pub fn background_value_fixed(spec: &BackgroundSpec, t: f64, x: &[f64], res: MeanRes) -> f64 {
    if spec.is_zero() {
        return 0.0;
    }
    let p = point(spec.dim, x);
    let c = if t == 0.0 {
        data_components(spec.dim, &spec.theta0.pieces(), &spec.theta1.pieces(), &p, 0)
    } else {
        mean_components(spec.dim, &spec.theta0.pieces(), &spec.theta1.pieces(), t, &p, 0, res)
    };
    spec.amplitude * c[0]
}

/// Threshold values for `(lambda0, lambda1)` in the given dimension.
pub fn thresholds(dim: usize) -> [f64; 2] {
    if dim == 3 {
        [4.0 * PI * PI, 8.0 * PI]
    } else {
        [2.0 * PI, 4.0]
    }
}

/// Sobolev-type sizes of the background data and the threshold verdicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaNorms {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda_reg: f64,
    pub thresholds_met: [bool; 3],
}

impl LambdaNorms {
    pub fn all_met(&self) -> bool {
        self.thresholds_met.iter().all(|&b| b)
    }
}

/// Unit-amplitude norms, memoized per data set since amplitude only rescales them.
fn norms_unit(spec: &BackgroundSpec) -> Result<(f64, f64, f64)> {
    static CACHE: OnceLock<Mutex<HashMap<String, (f64, f64, f64)>>> = OnceLock::new();
    let key = format!("{:?}|{:?}", spec.theta0, spec.theta1);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().expect("norm cache poisoned").get(&key) {
        return Ok(*v);
    }
    let v = compute_norms_unit(spec)?;
    cache.lock().expect("norm cache poisoned").insert(key, v);
    Ok(v)
}

fn compute_norms_unit(spec: &BackgroundSpec) -> Result<(f64, f64, f64)> {
    let d = spec.dim;
    let hom = |f: &BumpSet, k: usize| -> Result<f64> {
        if f.is_empty() {
            Ok(0.0)
        } else {
            w_k1_homogeneous_norm(f, k, d)
        }
    };
    let (l0, l1, reg) = if d == 3 {
        let l0 = hom(&spec.theta0, 3)? + hom(&spec.theta1, 2)?;
        let l1 = hom(&spec.theta0, 4)? + hom(&spec.theta1, 3)?;
        let reg = nz(&spec.theta0, |f| h_k_norm_fixed(f, 8)) + nz(&spec.theta1, |f| h_k_norm_fixed(f, 7));
        (l0, l1, reg)
    } else {
        let l0 = hom(&spec.theta0, 2)? + hom(&spec.theta1, 1)?;
        let l1 = hom(&spec.theta0, 3)? + hom(&spec.theta1, 2)?;
        let reg = nz(&spec.theta0, |f| w_kp_norm_fixed(f, 10, 1.0)) + nz(&spec.theta1, |f| w_kp_norm_fixed(f, 9, 1.0));
        (l0, l1, reg)
    };
    Ok((l0, l1, reg))
}

fn nz(f: &BumpSet, norm: impl Fn(&BumpSet) -> f64) -> f64 {
    if f.is_empty() {
        0.0
    } else {
        norm(f)
    }
}

/// `lambda0`, `lambda1` and the regularity norm of the background data.
pub fn lambda_norms(spec: &BackgroundSpec) -> Result<LambdaNorms> {
    let a = spec.amplitude.abs();
    let (l0, l1, reg) = if spec.is_zero() {
        (0.0, 0.0, 0.0)
    } else {
        norms_unit(spec)?
    };
    let (l0, l1, reg) = (a * l0, a * l1, a * reg);
    let [b0, b1] = thresholds(spec.dim);
    Ok(LambdaNorms {
        lambda0: l0,
        lambda1: l1,
        lambda_reg: reg,
        thresholds_met: [l0 < b0, l1 < b1, reg.is_finite()],
    })
}

/// Refuses backgrounds that violate a threshold.
pub fn require_thresholds(norms: &LambdaNorms, dim: usize) -> Result<()> {
    let [b0, b1] = thresholds(dim);
    if !norms.thresholds_met[0] {
        return Err(Error::Threshold {
            name: if dim == 3 { "lambda0" } else { "lambda0 (2D)" },
            value: norms.lambda0,
            bound: b0,
        });
    }
    if !norms.thresholds_met[1] {
        return Err(Error::Threshold {
            name: if dim == 3 { "lambda1" } else { "lambda1 (2D)" },
            value: norms.lambda1,
            bound: b1,
        });
    }
    if !norms.thresholds_met[2] {
        return Err(Error::Threshold {
            name: "lambda",
            value: norms.lambda_reg,
            bound: f64::INFINITY,
        });
    }
    Ok(())
}

/// Radial table of `Theta`, `Theta_t`, `Theta_r` at one time for radial backgrounds.
#[derive(Debug, Clone)]
pub struct RadialTable {
    pub t: f64,
    pub dr: f64,
    /// Entries beyond the table are zero (outside the light cone of the support).
    pub values: Vec<[f64; 3]>,
}

/// Interpolation stencil width for [`RadialTable::sample`].
const INTERP_POINTS: usize = 8;

/// Fixed quadrature resolution used when building tables.
pub fn table_res(dim: usize) -> MeanRes {
    if dim == 2 {
        MeanRes {
            polar: 160,
            azimuth: 128,
        }
    } else {
        MeanRes { polar: 96, azimuth: 32 }
    }
}

impl RadialTable {
    /// Builds the table on `0 <= r <= r_max` with spacing `dr`.
    pub fn build(spec: &BackgroundSpec, t: f64, r_max: f64, dr: f64) -> Result<Self> {
        if !spec.is_radial() {
            return Err(Error::Config(
                "radial tables need data centred at the origin".to_string(),
            ));
        }
        let n = (r_max / dr).ceil() as usize + INTERP_POINTS + 1;
        let cut = t + spec.support_radius();
        let values: Vec<[f64; 3]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let r = i as f64 * dr;
                if r > cut + 1e-12 || spec.is_zero() {
                    return [0.0; 3];
                }
                let j = background_d1_fixed(spec, t, &[r, 0.0, 0.0][..spec.dim], table_res(spec.dim));
                [j.value, j.d1[0], j.d1[1]]
            })
            .collect();
        let table = RadialTable { t, dr, values };
        table.validate(spec, cut.min(r_max))?;
        Ok(table)
    }

    /// Compares a few entries against the adaptive evaluator.
    fn validate(&self, spec: &BackgroundSpec, r_top: f64) -> Result<()> {
        if spec.is_zero() {
            return Ok(());
        }
        for k in 0..4 {
            let i = ((k as f64 + 0.5) / 4.0 * r_top / self.dr) as usize;
            let r = i as f64 * self.dr;
            let exact = background_d1(spec, self.t, &[r, 0.0, 0.0][..spec.dim])?;
            let got = self.values[i];
            let want = [exact.value, exact.d1[0], exact.d1[1]];
            for c in 0..3 {
                if (got[c] - want[c]).abs() > 1e-8 * (1.0 + want[c].abs()) {
                    return Err(Error::Quadrature {
                        what: format!("radial table at t = {}, r = {r}", self.t),
                        coarse: got[c],
                        fine: want[c],
                    });
                }
            }
        }
        Ok(())
    }

    /// Interpolated `[Theta, Theta_t, Theta_r]` at radius `r`.
    pub fn sample(&self, r: f64) -> [f64; 3] {
        let pos = r / self.dr;
        let n = self.values.len() as isize;
        let half = INTERP_POINTS as isize / 2;
        let base = pos.floor() as isize - half + 1;
        if base + INTERP_POINTS as isize > n {
            return [0.0; 3];
        }
        let mut out = [0.0; 3];
        for k in 0..INTERP_POINTS as isize {
            let j = base + k;
            let mut w = 1.0;
            for m in 0..INTERP_POINTS as isize {
                if m != k {
                    w *= (pos - (base + m) as f64) / (k - m) as f64;
                }
            }
            let (v, odd_sign) = if j < 0 {
                (&self.values[(-j) as usize], -1.0)
            } else {
                (&self.values[j as usize], 1.0)
            };
            out[0] += w * v[0];
            out[1] += w * v[1];
            out[2] += w * odd_sign * v[2];
        }
        out
    }
}

/// `Theta` and its first derivatives sampled on a grid at one time.
#[derive(Debug, Clone)]
pub struct BackgroundSamples {
    pub t: f64,
    pub value: Vec<f64>,
    pub dt: Vec<f64>,
    /// Spatial gradient per node (radial grids store `Theta_r` in slot 0).
    pub grad: Vec<[f64; 3]>,
}

/// Background with a strategy for sampling it on grids.
#[derive(Debug, Clone)]
pub struct BackgroundField {
    pub spec: BackgroundSpec,
}

impl BackgroundField {
    pub fn new(spec: BackgroundSpec) -> Self {
        BackgroundField { spec }
    }

    /// Exact samples of `Theta`, `Theta_t` and `grad Theta` at every node of `grid`.
    pub fn samples(&self, grid: &UniformGrid, t: f64) -> Result<BackgroundSamples> {
        let n = grid.len();
        let mut out = BackgroundSamples {
            t,
            value: vec![0.0; n],
            dt: vec![0.0; n],
            grad: vec![[0.0; 3]; n],
        };
        if self.spec.is_zero() {
            return Ok(out);
        }
        let reach = t + self.spec.support_radius();
        match grid.mode {
            GridMode::Radial3d => {
                for i in 0..n {
                    let r = grid.coord(0, i);
                    if r > reach + 1e-12 {
                        continue;
                    }
                    let j = background_d1_fixed(&self.spec, t, &[r, 0.0, 0.0], table_res(self.spec.dim));
                    out.value[i] = j.value;
                    out.dt[i] = j.d1[0];
                    out.grad[i] = [j.d1[1], 0.0, 0.0];
                }
            }
            GridMode::Cartesian if self.spec.is_radial() && grid.center == [0.0; 3] => {
                let r_max = grid.half_width * (grid.dim as f64).sqrt();
                let table = RadialTable::build(&self.spec, t, r_max.min(reach + 1.0), grid.spacing / 4.0)?;
                for k in 0..n {
                    let x = grid.point_flat(k);
                    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                    if r > reach + 1e-12 {
                        continue;
                    }
                    let s = table.sample(r);
                    out.value[k] = s[0];
                    out.dt[k] = s[1];
                    if r > 0.0 {
                        for a in 0..grid.dim {
                            out.grad[k][a] = s[2] * x[a] / r;
                        }
                    }
                }
            }
            GridMode::Cartesian => {
                for k in 0..n {
                    let x = grid.point_flat(k);
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r > reach + 1e-12 {
                        continue;
                    }
                    let j = background_d1_fixed(&self.spec, t, &x[..grid.dim], table_res(self.spec.dim));
                    out.value[k] = j.value;
                    out.dt[k] = j.d1[0];
                    for a in 0..grid.dim {
                        out.grad[k][a] = j.d1[a + 1];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Measured sup norms against the sharp constants at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub t: f64,
    pub sup_theta: f64,
    pub sup_theta_t: f64,
    pub bound_theta: f64,
    pub bound_theta_t: f64,
    /// `bound - measured` for the two sharp bounds.
    pub margin_theta: f64,
    pub margin_theta_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub norms: LambdaNorms,
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    pub fn min_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.margin_theta.min(r.margin_theta_t))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluation points for the sup norms at time `t`: a radial line for radial data,
/// otherwise a polar net over the ball reached by the data.
fn audit_points(spec: &BackgroundSpec, t: f64, density: usize) -> Vec<[f64; 3]> {
    let reach = t + spec.support_radius();
    let nr = density * (1 + reach.ceil() as usize);
    let mut pts = Vec::new();
    if spec.is_radial() {
        for i in 0..=nr {
            pts.push([reach * i as f64 / nr as f64, 0.0, 0.0]);
        }
        return pts;
    }
    let nr = nr / 4 + 1;
    let na = 24;
    pts.push([0.0; 3]);
    for i in 1..=nr {
        let r = reach * i as f64 / nr as f64;
        for a in 0..na {
            let phi = 2.0 * PI * a as f64 / na as f64;
            if spec.dim == 2 {
                pts.push([r * phi.cos(), r * phi.sin(), 0.0]);
            } else {
                for b in 1..8 {
                    let th = PI * b as f64 / 8.0;
                    pts.push([r * th.sin() * phi.cos(), r * th.sin() * phi.sin(), r * th.cos()]);
                }
            }
        }
    }
    pts
}

/// Checks the sharp sup-norm bounds and the geometric limits `|Theta| < pi/2`, `|Theta_t| < 1`.
pub fn bounds_audit(field: &BackgroundField, times: &[f64], density: usize) -> Result<AuditReport> {
    let spec = &field.spec;
    let norms = lambda_norms(spec)?;
    let c = if spec.dim == 3 { 1.0 / (8.0 * PI) } else { 0.25 };
    let bound_theta = c * norms.lambda0;
    let bound_theta_t = c * norms.lambda1;
    let mut rows = Vec::new();
    for &t in times {
        let mut sup = (0.0f64, [0.0; 3]);
        let mut sup_t = (0.0f64, [0.0; 3]);
        let mut visit = |x: [f64; 3], value: f64, dt: f64| {
            if value.abs() > sup.0 {
                sup = (value.abs(), x);
            }
            if dt.abs() > sup_t.0 {
                sup_t = (dt.abs(), x);
            }
        };
        if spec.is_zero() {
        } else if spec.is_radial() && t > 0.0 {
            // a validated fixed-resolution table along one ray
            let reach = t + spec.support_radius();
            let n = density * (1 + reach.ceil() as usize);
            let table = RadialTable::build(spec, t, reach, reach / n as f64)?;
            for (i, v) in table.values.iter().enumerate() {
                visit([i as f64 * table.dr, 0.0, 0.0], v[0], v[1]);
            }
        } else {
            for x in audit_points(spec, t, density) {
                let j = background_d1(spec, t, &x[..spec.dim])?;
                visit(x, j.value, j.d1[0]);
            }
        }
        let checks = [
            ("sup|Theta|", sup, bound_theta),
            ("sup|Theta_t|", sup_t, bound_theta_t),
            ("sup|Theta| vs pi/2", sup, PI / 2.0),
            ("sup|Theta_t| vs 1", sup_t, 1.0),
        ];
        for (quantity, (measured, x), bound) in checks {
            if measured > bound {
                return Err(Error::Audit {
                    t,
                    x,
                    quantity,
                    measured,
                    bound,
                });
            }
        }
        rows.push(AuditRow {
            t,
            sup_theta: sup.0,
            sup_theta_t: sup_t.0,
            bound_theta,
            bound_theta_t,
            margin_theta: bound_theta - sup.0,
            margin_theta_t: bound_theta_t - sup_t.0,
        });
    }
    Ok(AuditReport { norms, rows })
}

/// Right side of `f(t) = (-1)^m / (m-1)! int_t^upper (s - t)^(m-1) f^(m)(s) ds` for `f` vanishing
/// beyond `upper`, by Gauss-Legendre quadrature with `nodes` points.
pub fn tail_reconstruct(fm: impl Fn(f64) -> f64, m: usize, t: f64, upper: f64, nodes: usize) -> f64 {
    if t >= upper {
        return 0.0;
    }
    let gl = GaussLegendre::new(nodes);
    let fact: f64 = (1..m).map(|k| k as f64).product();
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let integral = gl.integrate(t, upper, |s| (s - t).powi(m as i32 - 1) * fm(s));
    sign * integral / fact
}
