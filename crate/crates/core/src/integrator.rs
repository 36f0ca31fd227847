//! Method-of-lines integration of the angle system with classical RK4.
//!
//! Spatial derivatives use the fourth-order stencils of [`crate::grid`]; the mixed `d_t d_i`
//! entries come from differentiating the velocity fields, and the two `d_t^2` slots are solved
//! from the probed principal matrix at every node.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::faddeev::{principal_probe, solve_unchecked, FieldJets};
use crate::grid::{stencil_at, GridMode, IndexBox, ScalarField, UniformGrid};
use crate::jet::Jet2;

/// Snapshots kept for time differencing in the diagnostics.
pub const HISTORY_DEPTH: usize = 5;
/// Width of the outer node ring that must stay empty.
pub const BOUNDARY_RING: usize = 2;
/// Largest value tolerated on the boundary ring before the run is declared too small.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// The four evolved fields at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub grid: UniformGrid,
    pub t: f64,
    pub theta: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Theta,
    ThetaT,
    Phi,
    PhiT,
}

impl StateSnapshot {
    pub fn zeros(grid: UniformGrid, t: f64) -> Self {
        let n = grid.len();
        StateSnapshot {
            grid,
            t,
            theta: vec![0.0; n],
            theta_t: vec![0.0; n],
            phi: vec![0.0; n],
            phi_t: vec![0.0; n],
        }
    }

    pub fn values(&self, c: Component) -> &[f64] {
        match c {
            Component::Theta => &self.theta,
            Component::ThetaT => &self.theta_t,
            Component::Phi => &self.phi,
            Component::PhiT => &self.phi_t,
        }
    }

    pub fn field(&self, c: Component) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values(c).to_vec(),
            t: self.t,
        }
    }

    fn all(&self) -> [&Vec<f64>; 4] {
        [&self.theta, &self.theta_t, &self.phi, &self.phi_t]
    }

    pub fn all_finite(&self) -> bool {
        self.all().iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Name of the first field holding a non-finite value.
    fn non_finite_field(&self) -> Option<&'static str> {
        let names = ["theta", "theta_t", "phi", "phi_t"];
        self.all()
            .iter()
            .zip(names)
            .find(|(v, _)| v.iter().any(|x| !x.is_finite()))
            .map(|(_, n)| n)
    }

    fn ring_nodes(&self, ring: usize) -> impl Iterator<Item = usize> + '_ {
        let g = self.grid;
        (0..g.len()).filter(move |&k| g.is_boundary_ring(g.unflat(k), ring))
    }

    /// Largest absolute value of any field on the outer ring.
    pub fn ring_magnitude(&self, ring: usize) -> f64 {
        let mut m: f64 = 0.0;
        for k in self.ring_nodes(ring) {
            for v in self.all() {
                m = m.max(v[k].abs());
            }
        }
        m
    }

    pub fn zero_ring(&mut self, ring: usize) {
        let ks: Vec<usize> = self.ring_nodes(ring).collect();
        for k in ks {
            self.theta[k] = 0.0;
            self.theta_t[k] = 0.0;
            self.phi[k] = 0.0;
            self.phi_t[k] = 0.0;
        }
    }

    /// `self + a * (velocities, accelerations)`.
    fn advanced(&self, a: f64, vel: &StateSnapshot, acc: &Rates) -> StateSnapshot {
        let comb = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + a * q).collect() };
        StateSnapshot {
            grid: self.grid,
            t: self.t + a,
            theta: comb(&self.theta, &vel.theta_t),
            theta_t: comb(&self.theta_t, &acc.theta_tt),
            phi: comb(&self.phi, &vel.phi_t),
            phi_t: comb(&self.phi_t, &acc.phi_tt),
        }
    }
}

/// Accelerations produced by one right-hand-side evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub theta_tt: Vec<f64>,
    pub phi_tt: Vec<f64>,
}

/// Smallest local head-room seen in one stage and where it occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub min_margin: f64,
    pub at: [f64; 3],
    pub spectrum: [f64; 2],
}

impl StageStats {
    fn empty() -> Self {
        StageStats {
            min_margin: 1.0,
            at: [0.0; 3],
            spectrum: [0.0; 2],
        }
    }

    fn merge(self, o: StageStats) -> StageStats {
        if o.min_margin < self.min_margin {
            o
        } else {
            self
        }
    }
}

/// Last few snapshots at a uniform time step.
#[derive(Debug, Clone, Default)]
pub struct StateHistory {
    snaps: VecDeque<StateSnapshot>,
}

impl StateHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: StateSnapshot) -> Result<()> {
        if self.snaps.len() >= 2 {
            let n = self.snaps.len();
            let dt = self.snaps[n - 1].t - self.snaps[n - 2].t;
            let next = s.t - self.snaps[n - 1].t;
            if (next - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
                return Err(Error::Config(format!("history needs a uniform step: {dt} then {next}")));
            }
        }
        if let Some(last) = self.snaps.back() {
            if !(s.t > last.t) {
                return Err(Error::Config(format!(
                    "history times must increase: {} after {}",
                    s.t, last.t
                )));
            }
        }
        if self.snaps.len() == HISTORY_DEPTH {
            self.snaps.pop_front();
        }
        self.snaps.push_back(s);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.snaps.len() == HISTORY_DEPTH
    }

    pub fn get(&self, i: usize) -> &StateSnapshot {
        &self.snaps[i]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &StateSnapshot> {
        self.snaps.iter()
    }

    /// Spacing between stored snapshots.
    pub fn dt(&self) -> Option<f64> {
        if self.snaps.len() < 2 {
            None
        } else {
            Some(self.snaps[1].t - self.snaps[0].t)
        }
    }

    /// The middle snapshot of a full history, where centred differences are available.
    pub fn centre(&self) -> Option<&StateSnapshot> {
        if self.is_full() {
            Some(&self.snaps[HISTORY_DEPTH / 2])
        } else {
            None
        }
    }

    pub fn clear(&mut self) {
        self.snaps.clear();
    }
}

/// Time step `margin * h * min(1, sqrt(hyp))`.
pub fn cfl_dt(grid: &UniformGrid, margin: f64, hyp: f64) -> Result<f64> {
    if !(hyp > 0.0) {
        return Err(Error::Hyperbolicity {
            t: f64::NAN,
            x: [f64::NAN; 3],
            norm: f64::NAN,
            margin: hyp,
            spectrum: [f64::NAN; 2],
        });
    }
    Ok(margin * grid.spacing * hyp.sqrt().min(1.0))
}

/// Static description of the evolution problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evolution {
    pub grid: UniformGrid,
    /// Radius of the support of all Cauchy data (background and perturbation).
    pub support: f64,
    /// Extra distance beyond the light cone kept in the active region.
    pub pad: f64,
    /// Abort when the local head-room falls to this value.
    pub min_margin: f64,
}

impl Evolution {
    pub fn new(grid: UniformGrid, support: f64) -> Self {
        Evolution {
            grid,
            support,
            pad: 0.5 + 8.0 * grid.spacing,
            min_margin: 1e-3,
        }
    }

    /// Nodes that can be non-zero at time `t` (finite propagation speed plus padding).
    pub fn active_box(&self, t: f64) -> IndexBox {
        self.grid.box_for_radius(self.support + t.max(0.0) + self.pad)
    }
}

/// Jets of both angles at node `k` with the `d_t^2` slots left at zero, plus their Laplacians.
fn node_jets(s: &StateSnapshot, k: usize, idx: [usize; 3]) -> (FieldJets, [f64; 2]) {
    let g = &s.grid;
    let n = g.points_per_axis;
    let h = g.spacing;
    match g.mode {
        GridMode::Radial3d => {
            let i = idx[0];
            let r = g.coord(0, i);
            let jet = |v: &[f64], vt: &[f64]| -> (Jet2, f64) {
                let fr = stencil_at(|j| v[j], i, n, 1, true, h);
                let frr = stencil_at(|j| v[j], i, n, 2, true, h);
                let ftr = stencil_at(|j| vt[j], i, n, 1, true, h);
                let (fr, ang) = if i == 0 { (0.0, frr) } else { (fr, fr / r) };
                let mut j = Jet2::zero(3);
                j.value = v[i];
                j.d1[0] = vt[i];
                j.d1[1] = fr;
                j.set_d2(1, 1, frr);
                j.set_d2(2, 2, ang);
                j.set_d2(3, 3, ang);
                j.set_d2(0, 1, if i == 0 { 0.0 } else { ftr });
                (j, frr + 2.0 * ang)
            };
            let (th, lt) = jet(&s.theta, &s.theta_t);
            let (ph, lp) = jet(&s.phi, &s.phi_t);
            (FieldJets::new(th, ph), [lt, lp])
        }
        GridMode::Cartesian => {
            let dim = g.dim;
            let st = g.strides();
            let jet = |v: &[f64], vt: &[f64]| -> (Jet2, f64) {
                let mut j = Jet2::zero(dim);
                j.value = v[k];
                j.d1[0] = vt[k];
                let mut lap = 0.0;
                for a in 0..dim {
                    let base = k - idx[a] * st[a];
                    let line = |m: usize| v[base + m * st[a]];
                    j.d1[a + 1] = stencil_at(line, idx[a], n, 1, false, h);
                    let faa = stencil_at(line, idx[a], n, 2, false, h);
                    j.set_d2(a + 1, a + 1, faa);
                    lap += faa;
                    j.set_d2(0, a + 1, stencil_at(|m| vt[base + m * st[a]], idx[a], n, 1, false, h));
                    for b in (a + 1)..dim {
                        let inner = |m: usize| {
                            let ka = base + m * st[a];
                            let kb = ka - idx[b] * st[b];
                            stencil_at(|l| v[kb + l * st[b]], idx[b], n, 1, false, h)
                        };
                        j.set_d2(a + 1, b + 1, stencil_at(inner, idx[a], n, 1, false, h));
                    }
                }
                (j, lap)
            };
            let (th, lt) = jet(&s.theta, &s.theta_t);
            let (ph, lp) = jet(&s.phi, &s.phi_t);
            (FieldJets::new(th, ph), [lt, lp])
        }
    }
}

fn phi_jet_vanishes(j: &Jet2) -> bool {
    let n = j.n();
    j.d1[..n].iter().all(|&v| v == 0.0) && (0..n).all(|a| (a..n).all(|b| j.d2(a, b) == 0.0))
}

/// Accelerations at one node and the local intrinsic head-room `min(1 - |m|_2, pi/2 - |theta|)`.
fn node_accel(s: &StateSnapshot, k: usize, idx: [usize; 3]) -> ([f64; 2], f64, [f64; 2]) {
    let (j, lap) = node_jets(s, k, idx);
    let edge = std::f64::consts::FRAC_PI_2 - j.theta.value.abs();
    if phi_jet_vanishes(&j.phi) {
        return ([lap[0], 0.0], edge.min(1.0), [0.0, 0.0]);
    }
    let pm = principal_probe(&j);
    let sv = pm.singular_values();
    ((solve_unchecked(&pm, lap)), (1.0 - sv[0]).min(edge), sv)
}

/// Chunk length for parallel sweeps: one slab along the slowest axis.
fn chunk_len(g: &UniformGrid) -> usize {
    if g.dim == 1 {
        64
    } else {
        g.strides()[0]
    }
}

/// Accelerations of `(theta, phi)` over the active region; zero elsewhere.
pub fn rhs_stage(evo: &Evolution, s: &StateSnapshot) -> Result<(Rates, StageStats)> {
    let g = s.grid;
    let bx = evo.active_box(s.t);
    let len = chunk_len(&g);
    let mut acc = vec![[0.0; 2]; g.len()];
    let stats = acc
        .par_chunks_mut(len)
        .enumerate()
        .map(|(c, out)| {
            let mut st = StageStats::empty();
            for (off, slot) in out.iter_mut().enumerate() {
                let k = c * len + off;
                let idx = g.unflat(k);
                if !bx.contains(idx) {
                    continue;
                }
                let (a, margin, sv) = node_accel(s, k, idx);
                *slot = a;
                if margin < st.min_margin || !margin.is_finite() {
                    st = StageStats {
                        min_margin: if margin.is_finite() { margin } else { f64::NEG_INFINITY },
                        at: g.point(idx),
                        spectrum: sv,
                    };
                }
            }
            st
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(StageStats::empty(), StageStats::merge);
    if !(stats.min_margin > evo.min_margin) {
        return Err(Error::Hyperbolicity {
            t: s.t,
            x: stats.at,
            norm: stats.spectrum[0],
            margin: stats.min_margin,
            spectrum: stats.spectrum,
        });
    }
    let (theta_tt, phi_tt) = acc.into_iter().map(|[a, b]| (a, b)).unzip();
    Ok((Rates { theta_tt, phi_tt }, stats))
}

/// Result of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub min_margin: f64,
    /// Ring magnitude measured before re-zeroing.
    pub boundary: f64,
}

/// One classical RK4 step with the boundary monitor.
pub fn step_rk4(evo: &Evolution, s: &StateSnapshot, dt: f64, step: u64) -> Result<(StateSnapshot, StepReport)> {
    let (k1, s1) = rhs_stage(evo, s)?;
    let y2 = s.advanced(0.5 * dt, s, &k1);
    let (k2, s2) = rhs_stage(evo, &y2)?;
    let y3 = s.advanced(0.5 * dt, &y2, &k2);
    let (k3, s3) = rhs_stage(evo, &y3)?;
    let y4 = s.advanced(dt, &y3, &k3);
    let (k4, s4) = rhs_stage(evo, &y4)?;

    let w = dt / 6.0;
    let n = s.grid.len();
    let mut next = StateSnapshot::zeros(s.grid, s.t + dt);
    for i in 0..n {
        next.theta[i] = s.theta[i] + w * (s.theta_t[i] + 2.0 * y2.theta_t[i] + 2.0 * y3.theta_t[i] + y4.theta_t[i]);
        next.theta_t[i] =
            s.theta_t[i] + w * (k1.theta_tt[i] + 2.0 * k2.theta_tt[i] + 2.0 * k3.theta_tt[i] + k4.theta_tt[i]);
        next.phi[i] = s.phi[i] + w * (s.phi_t[i] + 2.0 * y2.phi_t[i] + 2.0 * y3.phi_t[i] + y4.phi_t[i]);
        next.phi_t[i] = s.phi_t[i] + w * (k1.phi_tt[i] + 2.0 * k2.phi_tt[i] + 2.0 * k3.phi_tt[i] + k4.phi_tt[i]);
    }
    if let Some(field) = next.non_finite_field() {
        return Err(Error::NonFinite { field, step, t: next.t });
    }
    let boundary = next.ring_magnitude(BOUNDARY_RING);
    if boundary > BOUNDARY_TOL {
        return Err(Error::BoundaryLeak {
            step,
            t: next.t,
            magnitude: boundary,
        });
    }
    next.zero_ring(BOUNDARY_RING);
    let min_margin = s1.min_margin.min(s2.min_margin).min(s3.min_margin).min(s4.min_margin);
    Ok((next, StepReport { min_margin, boundary }))
}

/// Minimum over nodes of `min(1 - |m|_2, cos^2 theta (1 - Theta_t^2), pi/2 - |theta|)`;
/// the middle term is included when background velocities are supplied.
pub fn hyperbolicity_margin(s: &StateSnapshot, background_dt: Option<&[f64]>) -> f64 {
    let g = s.grid;
    let len = chunk_len(&g);
    (0..g.len().div_ceil(len))
        .into_par_iter()
        .map(|c| {
            let mut m: f64 = 1.0;
            for k in c * len..((c + 1) * len).min(g.len()) {
                let idx = g.unflat(k);
                let (j, _) = node_jets(s, k, idx);
                let pm = principal_probe(&j);
                let th = j.theta.value;
                let mut v = (1.0 - pm.norm2()).min(std::f64::consts::FRAC_PI_2 - th.abs());
                if let Some(bt) = background_dt {
                    let c2 = th.cos().powi(2);
                    v = v.min(c2 * (1.0 - bt[k] * bt[k]));
                }
                m = m.min(v);
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(1.0, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cfl_formula() {
        let g = UniformGrid::cartesian(2, 1.0, 0.02).unwrap();
        assert!((cfl_dt(&g, 0.4, 1.0).unwrap() - 0.008).abs() < 1e-15);
        let half = cfl_dt(&g, 0.4, 0.25).unwrap();
        assert!((half - 0.004).abs() < 1e-15);
        assert!(cfl_dt(&g, 0.4, 0.0).is_err());
    }

    #[test]
    fn zero_state_is_stationary() {
        let g = UniformGrid::cartesian(2, 2.0, 0.25).unwrap();
        let evo = Evolution::new(g, 1.0);
        let s = StateSnapshot::zeros(g, 0.0);
        let (next, rep) = step_rk4(&evo, &s, 0.1, 0).unwrap();
        assert!(next.theta.iter().chain(&next.phi_t).all(|&v| v == 0.0));
        assert_eq!(rep.boundary, 0.0);
        assert_eq!(hyperbolicity_margin(&s, None), 1.0);
    }

    #[test]
    fn history_rejects_uneven_steps() {
        let g = UniformGrid::radial3d(1.0, 0.1).unwrap();
        let mut h = StateHistory::new();
        for t in [0.0, 0.1, 0.2] {
            h.push(StateSnapshot::zeros(g, t)).unwrap();
        }
        assert!(h.push(StateSnapshot::zeros(g, 0.35)).is_err());
        for t in [0.3, 0.4, 0.5] {
            h.push(StateSnapshot::zeros(g, t)).unwrap();
        }
        assert_eq!(h.len(), HISTORY_DEPTH);
        assert!((h.centre().unwrap().t - 0.3).abs() < 1e-12);
    }
}
