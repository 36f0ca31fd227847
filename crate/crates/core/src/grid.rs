//! Uniform grids, sampled fields, fourth-order stencils and discrete norms.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::{multi_indices_of_order, MultiIndex, SmoothData};
use crate::error::{Error, Result};
use crate::quadrature::{fornberg_weights, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Cartesian,
    /// Radial line `r in [0, L]` standing in for radially symmetric fields on R^3.
    Radial3d,
}

/// Uniform grid `[c - L, c + L]^dim` (or `[0, L]` in radial mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub dim: usize,
    pub half_width: f64,
    pub spacing: f64,
    pub points_per_axis: usize,
    pub mode: GridMode,
    /// Physical coordinates of the central node (cartesian mode only).
    pub center: [f64; 3],
}

/// Half-open index ranges per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl IndexBox {
    pub fn contains(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|a| idx[a] >= self.lo[a] && idx[a] < self.hi[a])
    }
}

impl UniformGrid {
    pub fn cartesian(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        Self::cartesian_at(dim, half_width, spacing, [0.0; 3])
    }

    pub fn cartesian_at(dim: usize, half_width: f64, spacing: f64, center: [f64; 3]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("grid dimension must be 1, 2 or 3, got {dim}")));
        }
        check_spacing(half_width, spacing)?;
        let m = (half_width / spacing).round() as usize;
        let g = UniformGrid {
            dim,
            half_width: m as f64 * spacing,
            spacing,
            points_per_axis: 2 * m + 1,
            mode: GridMode::Cartesian,
            center,
        };
        g.check_size()?;
        Ok(g)
    }

    pub fn radial3d(half_width: f64, spacing: f64) -> Result<Self> {
        check_spacing(half_width, spacing)?;
        let m = (half_width / spacing).round() as usize;
        let g = UniformGrid {
            dim: 1,
            half_width: m as f64 * spacing,
            spacing,
            points_per_axis: m + 1,
            mode: GridMode::Radial3d,
            center: [0.0; 3],
        };
        g.check_size()?;
        Ok(g)
    }

    fn check_size(&self) -> Result<()> {
        if self.points_per_axis < 6 {
            return Err(Error::GridTooSmall {
                axis: 1,
                nodes: self.points_per_axis,
                required: 6,
            });
        }
        Ok(())
    }

    /// Spatial dimension of the physical problem (3 for the radial mode).
    pub fn space_dim(&self) -> usize {
        match self.mode {
            GridMode::Cartesian => self.dim,
            GridMode::Radial3d => 3,
        }
    }

    pub fn is_radial(&self) -> bool {
        self.mode == GridMode::Radial3d
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index strides per axis (axis 0 slowest).
    pub fn strides(&self) -> [usize; 3] {
        let n = self.points_per_axis;
        match self.dim {
            1 => [1, 0, 0],
            2 => [n, 1, 0],
            _ => [n * n, n, 1],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut s = [1; 3];
        for a in s.iter_mut().take(self.dim) {
            *a = n;
        }
        s
    }

    pub fn full_box(&self) -> IndexBox {
        IndexBox {
            lo: [0; 3],
            hi: self.shape(),
        }
    }

    pub fn flat(&self, idx: [usize; 3]) -> usize {
        let s = self.strides();
        idx[0] * s[0] + idx[1] * s[1] + idx[2] * s[2]
    }

    pub fn unflat(&self, mut k: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut idx = [0; 3];
        for a in (0..self.dim).rev() {
            idx[a] = k % n;
            k /= n;
        }
        idx
    }

    /// Physical coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        match self.mode {
            GridMode::Cartesian => self.center[axis] - self.half_width + i as f64 * self.spacing,
            GridMode::Radial3d => i as f64 * self.spacing,
        }
    }

    /// Position of a node; in radial mode the point `(r, 0, 0)`.
    pub fn point(&self, idx: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, slot) in x.iter_mut().enumerate().take(self.dim) {
            *slot = self.coord(a, idx[a]);
        }
        x
    }

    pub fn point_flat(&self, k: usize) -> [f64; 3] {
        self.point(self.unflat(k))
    }

    /// Nodes whose index lies within `ring` of the outer boundary.
    pub fn is_boundary_ring(&self, idx: [usize; 3], ring: usize) -> bool {
        let n = self.points_per_axis;
        match self.mode {
            GridMode::Radial3d => idx[0] + ring >= n,
            GridMode::Cartesian => (0..self.dim).any(|a| idx[a] < ring || idx[a] + ring >= n),
        }
    }

    /// Smallest box containing every node with `max_a |x_a - c_a| <= radius` (cartesian),
    /// or `r <= radius` (radial), clipped to the grid.
    pub fn box_for_radius(&self, radius: f64) -> IndexBox {
        let n = self.points_per_axis;
        let h = self.spacing;
        match self.mode {
            GridMode::Radial3d => {
                let hi = ((radius / h).ceil() as usize + 1).min(n);
                IndexBox {
                    lo: [0; 3],
                    hi: [hi, 1, 1],
                }
            }
            GridMode::Cartesian => {
                let m = (n - 1) / 2;
                let k = ((radius / h).ceil() as usize).min(m);
                let mut b = IndexBox { lo: [0; 3], hi: [1; 3] };
                for a in 0..self.dim {
                    b.lo[a] = m - k;
                    b.hi[a] = m + k + 1;
                }
                b
            }
        }
    }

    /// Quadrature weight of a node (trapezoid; radial mode includes `4 pi r^2`).
    pub fn weight(&self, idx: [usize; 3]) -> f64 {
        let n = self.points_per_axis;
        let h = self.spacing;
        match self.mode {
            GridMode::Radial3d => {
                let r = self.coord(0, idx[0]);
                let end = if idx[0] + 1 == n { 0.5 } else { 1.0 };
                4.0 * PI * r * r * h * end
            }
            GridMode::Cartesian => {
                let mut w = 1.0;
                for &i in idx.iter().take(self.dim) {
                    w *= if i == 0 || i + 1 == n { 0.5 * h } else { h };
                }
                w
            }
        }
    }

    /// Samples a function of position at every node.
    pub fn sample(&self, t: f64, f: impl Fn([f64; 3]) -> f64 + Sync) -> ScalarField {
        let values = (0..self.len()).map(|k| f(self.point_flat(k))).collect();
        ScalarField { grid: *self, values, t }
    }

    pub fn zeros(&self, t: f64) -> ScalarField {
        ScalarField {
            grid: *self,
            values: vec![0.0; self.len()],
            t,
        }
    }
}

fn check_spacing(half_width: f64, spacing: f64) -> Result<()> {
    if !(spacing > 0.0) || !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::Config(format!(
            "grid needs positive half width and spacing, got L = {half_width}, h = {spacing}"
        )));
    }
    Ok(())
}

/// Real samples on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub t: f64,
}

impl ScalarField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            t: self.t,
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.values.len(), other.values.len());
        ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            t: self.t,
        }
    }
}

/// Fourth-order finite-difference weights: centred interior plus one-sided boundary closures.
#[derive(Debug)]
pub struct Stencils {
    pub d1_center: [f64; 5],
    pub d2_center: [f64; 5],
    /// `d1_left[p]`: first derivative at node `p in {0, 1}` from nodes `0..5`.
    pub d1_left: [[f64; 5]; 2],
    /// `d2_left[p]`: second derivative at node `p` from nodes `0..6`.
    pub d2_left: [[f64; 6]; 2],
}

pub fn stencils() -> &'static Stencils {
    static S: OnceLock<Stencils> = OnceLock::new();
    S.get_or_init(|| {
        let c5 = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let to5 = |v: Vec<f64>| -> [f64; 5] { v.try_into().expect("five weights") };
        let to6 = |v: Vec<f64>| -> [f64; 6] { v.try_into().expect("six weights") };
        let l5 = [0.0, 1.0, 2.0, 3.0, 4.0];
        let l6 = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        Stencils {
            d1_center: to5(fornberg_weights(0.0, &c5, 1)),
            d2_center: to5(fornberg_weights(0.0, &c5, 2)),
            d1_left: [to5(fornberg_weights(0.0, &l5, 1)), to5(fornberg_weights(1.0, &l5, 1))],
            d2_left: [to6(fornberg_weights(0.0, &l6, 2)), to6(fornberg_weights(1.0, &l6, 2))],
        }
    })
}

/// Derivative of order 1 or 2 along `axis` at a single node, reading `values` through `at`.
///
/// `even` selects even reflection across index 0 (radial mode) instead of a one-sided closure.
#[inline]
pub fn stencil_at(at: impl Fn(usize) -> f64, i: usize, n: usize, order: usize, even: bool, h: f64) -> f64 {
    let s = stencils();
    let inv = if order == 1 { 1.0 / h } else { 1.0 / (h * h) };
    let w = if order == 1 { &s.d1_center } else { &s.d2_center };
    if i >= 2 && i + 2 < n {
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += wk * at(i + k - 2);
        }
        return acc * inv;
    }
    if i < 2 {
        if even {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let j = i as isize + k as isize - 2;
                acc += wk * at(j.unsigned_abs());
            }
            return acc * inv;
        }
        return one_sided(&at, i, order, inv, false, n);
    }
    one_sided(&at, n - 1 - i, order, inv, true, n)
}

fn one_sided(at: &impl Fn(usize) -> f64, p: usize, order: usize, inv: f64, right: bool, n: usize) -> f64 {
    let s = stencils();
    let node = |k: usize| if right { at(n - 1 - k) } else { at(k) };
    let mut acc = 0.0;
    if order == 1 {
        for (k, wk) in s.d1_left[p].iter().enumerate() {
            acc += wk * node(k);
        }
        // mirrored first derivative changes sign
        if right {
            acc = -acc;
        }
    } else {
        for (k, wk) in s.d2_left[p].iter().enumerate() {
            acc += wk * node(k);
        }
    }
    acc * inv
}

/// Derivative of `values` along `axis` evaluated at every node of `bx`; other entries of `out` untouched.
pub fn derivative_in_box(
    grid: &UniformGrid,
    values: &[f64],
    axis: usize,
    order: usize,
    bx: &IndexBox,
    out: &mut [f64],
) {
    let n = grid.points_per_axis;
    let stride = grid.strides()[axis];
    let even = grid.is_radial();
    let h = grid.spacing;
    for i0 in bx.lo[0]..bx.hi[0] {
        for i1 in bx.lo[1]..bx.hi[1] {
            for i2 in bx.lo[2]..bx.hi[2] {
                let idx = [i0, i1, i2];
                let k = grid.flat(idx);
                let base = k - idx[axis] * stride;
                out[k] = stencil_at(|j| values[base + j * stride], idx[axis], n, order, even, h);
            }
        }
    }
}

/// Fourth-order derivative of a sampled field along spatial `axis` (1-based).
pub fn fd_derivative(field: &ScalarField, axis: usize, order: usize) -> Result<ScalarField> {
    let grid = &field.grid;
    if axis == 0 || axis > grid.dim {
        return Err(Error::Config(format!(
            "axis {axis} outside 1..={} for fd_derivative",
            grid.dim
        )));
    }
    if order != 1 && order != 2 {
        return Err(Error::Config(format!("derivative order must be 1 or 2, got {order}")));
    }
    if grid.points_per_axis < 6 {
        return Err(Error::GridTooSmall {
            axis,
            nodes: grid.points_per_axis,
            required: 6,
        });
    }
    let mut out = vec![0.0; field.values.len()];
    derivative_in_box(grid, &field.values, axis - 1, order, &grid.full_box(), &mut out);
    Ok(ScalarField {
        grid: *grid,
        values: out,
        t: field.t,
    })
}

/// Spatial Laplacian; radial mode uses `f_rr + 2 f_r / r` with `3 f_rr` at the origin.
pub fn laplacian(field: &ScalarField) -> Result<ScalarField> {
    let grid = &field.grid;
    if grid.is_radial() {
        let fr = fd_derivative(field, 1, 1)?;
        let frr = fd_derivative(field, 1, 2)?;
        let values = (0..grid.len())
            .map(|i| {
                if i == 0 {
                    3.0 * frr.values[0]
                } else {
                    frr.values[i] + 2.0 * fr.values[i] / grid.coord(0, i)
                }
            })
            .collect();
        return Ok(ScalarField {
            grid: *grid,
            values,
            t: field.t,
        });
    }
    let mut acc = field.grid.zeros(field.t);
    for axis in 1..=grid.dim {
        let d = fd_derivative(field, axis, 2)?;
        for (a, b) in acc.values.iter_mut().zip(&d.values) {
            *a += b;
        }
    }
    Ok(acc)
}

/// Integral of a node function against the grid quadrature weights.
pub fn integrate(grid: &UniformGrid, f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..grid.len() {
        let v = f(k);
        if v != 0.0 {
            acc += v * grid.weight(grid.unflat(k));
        }
    }
    acc
}

/// Discrete `L^p` norm with trapezoid weights; `p = inf` gives the max norm.
pub fn lp_norm(field: &ScalarField, p: f64) -> f64 {
    if p.is_infinite() {
        return field.max_abs();
    }
    let s = integrate(&field.grid, |k| field.values[k].abs().powf(p));
    s.powf(1.0 / p)
}

/// Resolution parameters for the polar quadrature used by Sobolev-type norms.
#[derive(Debug, Clone, Copy)]
pub struct PolarResolution {
    /// Gauss nodes per angular panel.
    pub angular: usize,
    /// Sample points per ray used to bracket sign changes.
    pub samples: usize,
    /// Gauss nodes per radial piece between sign changes.
    pub radial: usize,
}

impl PolarResolution {
    pub fn base() -> Self {
        PolarResolution {
            angular: 12,
            samples: 48,
            radial: 16,
        }
    }

    pub fn refined(self) -> Self {
        PolarResolution {
            angular: self.angular * 2,
            samples: self.samples * 2,
            radial: self.radial * 2,
        }
    }
}

/// Directions in the first quadrant or octant, weighted to stand for all reflections.
fn octant_directions(dim: usize, n: usize) -> Vec<([f64; 3], f64)> {
    let gl = GaussLegendre::new(n);
    let mut dirs = Vec::new();
    match dim {
        1 => dirs.push(([1.0, 0.0, 0.0], 2.0)),
        2 => {
            for (a, w) in gl.mapped(0.0, PI / 2.0) {
                dirs.push(([a.cos(), a.sin(), 0.0], 4.0 * w));
            }
        }
        _ => {
            for (c, wc) in gl.mapped(0.0, 1.0) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for (a, wa) in gl.mapped(0.0, PI / 2.0) {
                    dirs.push(([s * a.cos(), s * a.sin(), c], 8.0 * wc * wa));
                }
            }
        }
    }
    dirs
}

/// Multi-indices grouped up to permutation, with multiplicities; radial data integrates
/// every member of a class to the same value.
fn index_classes(idx: &[MultiIndex]) -> Vec<(MultiIndex, f64)> {
    let mut classes: Vec<(MultiIndex, f64)> = Vec::new();
    for &a in idx {
        let mut key = a;
        key.sort_unstable_by(|x, y| y.cmp(x));
        match classes.iter_mut().find(|(k, _)| *k == key) {
            Some(c) => c.1 += 1.0,
            None => classes.push((key, 1.0)),
        }
    }
    classes
}

/// Ray directions and weights covering the unit sphere (or circle); panels split on coordinate planes.
fn directions(dim: usize, n: usize) -> Vec<([f64; 3], f64)> {
    let gl = GaussLegendre::new(n);
    let mut dirs = Vec::new();
    match dim {
        1 => {
            dirs.push(([1.0, 0.0, 0.0], 1.0));
            dirs.push(([-1.0, 0.0, 0.0], 1.0));
        }
        2 => {
            for q in 0..4 {
                let a0 = q as f64 * PI / 2.0;
                for (a, w) in gl.mapped(a0, a0 + PI / 2.0) {
                    dirs.push(([a.cos(), a.sin(), 0.0], w));
                }
            }
        }
        _ => {
            for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
                for (c, wc) in gl.mapped(lo, hi) {
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    for q in 0..4 {
                        let a0 = q as f64 * PI / 2.0;
                        for (a, wa) in gl.mapped(a0, a0 + PI / 2.0) {
                            dirs.push(([s * a.cos(), s * a.sin(), c], wc * wa));
                        }
                    }
                }
            }
        }
    }
    dirs
}

/// `sum_a int |d^a f|^p` over `idx`, in polar coordinates about the support centre.
///
/// Absolute values are integrated piecewise between sign changes located along each ray.
pub fn polar_abs_integral(f: &dyn SmoothData, idx: &[MultiIndex], p: f64, res: PolarResolution) -> f64 {
    let dim = f.dim();
    let Some(ball) = f.support() else {
        panic!("polar quadrature needs compactly supported data");
    };
    if ball.radius == 0.0 || idx.is_empty() {
        return 0.0;
    }
    let (classes, dirs) = if f.is_radial_about_center() {
        (index_classes(idx), octant_directions(dim, res.angular))
    } else {
        (idx.iter().map(|&a| (a, 1.0)).collect(), directions(dim, res.angular))
    };
    let idx: Vec<MultiIndex> = classes.iter().map(|c| c.0).collect();
    let c = ball.center;
    let big_r = ball.radius;
    let gl = GaussLegendre::new(res.radial);
    let m = idx.len();
    let mut total = 0.0;
    let mut vals = vec![0.0; m];
    let mut samples = vec![vec![0.0; res.samples + 1]; m];
    for (dir, wdir) in dirs {
        let point = |r: f64| -> [f64; 3] {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = c[a] + r * dir[a];
            }
            x
        };
        let dr = big_r / res.samples as f64;
        for s in 0..=res.samples {
            let x = point(s as f64 * dr);
            f.partials(&x[..dim], &idx, &mut vals);
            for j in 0..m {
                samples[j][s] = vals[j];
            }
        }
        for j in 0..m {
            let a = idx[j];
            let g = |r: f64| f.partial(&point(r)[..dim], a);
            let mut breaks = vec![0.0];
            // even powers need no sign changes
            let smooth = p == 2.0;
            for s in 0..res.samples {
                if smooth {
                    break;
                }
                let (ya, yb) = (samples[j][s], samples[j][s + 1]);
                if ya == 0.0 || yb == 0.0 || (ya > 0.0) == (yb > 0.0) {
                    continue;
                }
                breaks.push(bisect_root(&g, s as f64 * dr, (s + 1) as f64 * dr, ya));
            }
            breaks.push(big_r);
            let mut ray = 0.0;
            for w in breaks.windows(2) {
                for (r, wr) in gl.mapped(w[0], w[1]) {
                    ray += wr * g(r).abs().powf(p) * r.powi(dim as i32 - 1);
                }
            }
            total += classes[j].1 * wdir * ray;
        }
    }
    total
}

fn bisect_root(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, ga: f64) -> f64 {
    let sa = ga > 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == sa {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-15 * (1.0 + b.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Relative drift tolerated between the base and refined quadrature before reporting failure.
pub const NORM_FAIL_DRIFT: f64 = 1e-3;
/// Drift below which the refined value is accepted without further refinement.
pub const NORM_TARGET_DRIFT: f64 = 1e-4;

fn converged(what: &str, eval: impl Fn(PolarResolution) -> f64) -> Result<f64> {
    let mut res = PolarResolution::base();
    let mut coarse = eval(res);
    for _ in 0..2 {
        res = res.refined();
        let fine = eval(res);
        let drift = (fine - coarse).abs() / fine.abs().max(1e-300);
        if fine == coarse || drift < NORM_TARGET_DRIFT {
            return Ok(fine);
        }
        if drift > NORM_FAIL_DRIFT && res.angular >= 48 {
            return Err(Error::Quadrature {
                what: what.to_string(),
                coarse,
                fine,
            });
        }
        coarse = fine;
    }
    let fine = eval(res.refined());
    let drift = (fine - coarse).abs() / fine.abs().max(1e-300);
    if drift > NORM_FAIL_DRIFT {
        return Err(Error::Quadrature {
            what: what.to_string(),
            coarse,
            fine,
        });
    }
    Ok(fine)
}

/// Homogeneous Sobolev norm `sum_{|a| = k} ||d^a f||_{L^1}`, summed over multi-indices.
pub fn w_k1_homogeneous_norm(f: &dyn SmoothData, k: usize, dim: usize) -> Result<f64> {
    if f.dim() != dim {
        return Err(Error::Config(format!(
            "data has dimension {} but the norm was requested in dimension {dim}",
            f.dim()
        )));
    }
    let idx = multi_indices_of_order(dim, k);
    converged(&format!("W^{{{k},1}} norm"), |res| {
        polar_abs_integral(f, &idx, 1.0, res)
    })
}

/// Full Sobolev norm `sum_{|a| <= k} ||d^a f||_{L^p}` at a fixed resolution (finiteness check).
pub fn w_kp_norm_fixed(f: &dyn SmoothData, k: usize, p: f64) -> f64 {
    let dim = f.dim();
    let mut total = 0.0;
    for j in 0..=k {
        let idx = multi_indices_of_order(dim, j);
        let classes = if f.is_radial_about_center() {
            index_classes(&idx)
        } else {
            idx.iter().map(|&a| (a, 1.0)).collect()
        };
        for (a, mult) in classes {
            total += mult * polar_abs_integral(f, &[a], p, PolarResolution::base()).powf(1.0 / p);
        }
    }
    total
}

/// `H^k` norm `(sum_{|a| <= k} ||d^a f||_2^2)^{1/2}` at a fixed resolution.
pub fn h_k_norm_fixed(f: &dyn SmoothData, k: usize) -> f64 {
    let dim = f.dim();
    let mut total = 0.0;
    for j in 0..=k {
        let idx = multi_indices_of_order(dim, j);
        total += polar_abs_integral(f, &idx, 2.0, PolarResolution::base());
    }
    total.sqrt()
}
