//! Several members of an epsilon family evolved in lockstep with one fixed step.

use std::path::PathBuf;

use crate::data::SmoothData;
use crate::energy_diagnostics::{energy_row, EnergyRow};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::integrator::{hyperbolicity_margin, step_rk4, Evolution, StateHistory, StateSnapshot};
use crate::vector_fields::{gamma_sums, GammaSums, GridPoints, GridSource, TimeLevels};

use super::checkpoint::{write_atomic, Decoder, Encoder};
use super::config::Resolved;
use super::series::{Row, COLUMNS_K};
use super::Logger;

/// What a diagnostic row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowMode {
    /// `u = theta_eps - theta_ref` and `v = phi_eps` for every member after the reference.
    Perturbation,
    /// The reference solution itself (`Theta` in the `u` columns).
    Background,
}

#[derive(Debug, Clone)]
pub struct Member {
    pub eps: f64,
    pub history: StateHistory,
    pub rows: Vec<Row>,
    pending_margin: f64,
    pending_leak: f64,
}

impl Member {
    fn latest(&self) -> &StateSnapshot {
        self.history.get(self.history.len() - 1)
    }
}

/// Initial state `theta = A Theta_0 + eps u_0`, `theta_t = A Theta_1 + eps u_1`,
/// `phi = eps v_0`, `phi_t = eps v_1`.
pub fn initial_state(r: &Resolved, grid: UniformGrid, eps: f64) -> StateSnapshot {
    let a = r.background.amplitude;
    let (bg, p) = (&r.background, &r.perturbation);
    let dim = r.cfg.dim;
    let mut s = StateSnapshot::zeros(grid, 0.0);
    for k in 0..grid.len() {
        let x = grid.point_flat(k);
        let x = &x[..dim];
        s.theta[k] = a * bg.theta0.value(x) + eps * p.u0.value(x);
        s.theta_t[k] = a * bg.theta1.value(x) + eps * p.u1.value(x);
        if eps != 0.0 {
            s.phi[k] = eps * p.v0.value(x);
            s.phi_t[k] = eps * p.v1.value(x);
        }
    }
    s
}

/// Where and how often to checkpoint, and an optional forced stop for tests.
#[derive(Debug, Clone, Default)]
pub struct CheckpointPlan {
    pub path: Option<PathBuf>,
    pub every: u64,
    /// Write a checkpoint and stop once this step is reached.
    pub halt_at: Option<i64>,
}

pub struct Lockstep<'a> {
    pub r: &'a Resolved,
    pub grid: UniformGrid,
    pub evo: Evolution,
    pub dt: f64,
    pub per_row: u64,
    pub mode: RowMode,
    pub members: Vec<Member>,
    /// Index of the newest state; step 0 is `t = 0`.
    pub step: i64,
}

/// Result of [`Lockstep::run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunState {
    Finished,
    Halted,
}

impl<'a> Lockstep<'a> {
    /// Members start at `t = 0` with two backward steps so the first row has a full history.
    pub fn start(r: &'a Resolved, grid: UniformGrid, epsilons: &[f64], mode: RowMode) -> Result<Self> {
        let evo = r.evolution(grid);
        let (dt, per_row) = r.step_for(&grid)?;
        let mut members = Vec::new();
        for &eps in epsilons {
            let s0 = initial_state(r, grid, eps);
            let (m1, a) = step_rk4(&evo, &s0, -dt, 0)?;
            let (m2, b) = step_rk4(&evo, &m1, -dt, 0)?;
            let mut history = StateHistory::new();
            history.push(m2)?;
            history.push(m1)?;
            history.push(s0)?;
            members.push(Member {
                eps,
                history,
                rows: Vec::new(),
                pending_margin: a.min_margin.min(b.min_margin),
                pending_leak: a.boundary.max(b.boundary),
            });
        }
        Ok(Lockstep {
            r,
            grid,
            evo,
            dt,
            per_row,
            mode,
            members,
            step: 0,
        })
    }

    /// Step at which the last row (at `t_max`) becomes computable.
    pub fn last_step(&self) -> i64 {
        (self.r.rows() * self.per_row) as i64 + 2
    }

    fn advance(&mut self) -> Result<()> {
        let next = self.step + 1;
        for m in &mut self.members {
            let (s, rep) = step_rk4(&self.evo, m.latest(), self.dt, next as u64)?;
            m.history.push(s)?;
            m.pending_margin = m.pending_margin.min(rep.min_margin);
            m.pending_leak = m.pending_leak.max(rep.boundary);
        }
        self.step = next;
        if self.step >= 2 && ((self.step - 2) as u64).is_multiple_of(self.per_row) {
            let m = (self.step - 2) as u64 / self.per_row;
            self.rows_at(m as f64 * self.r.cfg.cadence)?;
        }
        Ok(())
    }

    fn rows_at(&mut self, t: f64) -> Result<()> {
        let k = self.r.cfg.energy_order;
        let ghost = self.r.cfg.dim == 2;
        let points = GridPoints::new(self.grid, self.evo.active_box(t));
        let reference: Vec<&StateSnapshot> = self.members[0].history.snapshots().collect();
        let theta_ref = TimeLevels::from_snapshots(&reference, false)?;
        let ref_centre = self.members[0].history.centre().expect("full history");
        let mut new_rows = Vec::new();
        match self.mode {
            RowMode::Perturbation => {
                let background = theta_ref.truncated(1);
                for m in &self.members[1..] {
                    let snaps: Vec<&StateSnapshot> = m.history.snapshots().collect();
                    let u = TimeLevels::from_snapshots(&snaps, false)?
                        .minus(&theta_ref)
                        .truncated(k + 1);
                    let v = TimeLevels::from_snapshots(&snaps, true)?.truncated(k + 1);
                    let src = GridSource::new(points.clone(), &[&u, &v, &background], &[k + 1, k + 1, 1])?;
                    let er = energy_row(&src, k, ghost)?;
                    let centre = m.history.centre().expect("full history");
                    let hyp = hyperbolicity_margin(centre, Some(&ref_centre.theta_t));
                    new_rows.push(perturbation_row(t, &er, k, m.pending_margin.min(hyp), m.pending_leak));
                }
            }
            RowMode::Background => {
                let levels = theta_ref.truncated(k + 1);
                let src = GridSource::new(points, &[&levels], &[k + 1])?;
                let sums = gamma_sums(&src, &[0], k)?;
                let hyp = hyperbolicity_margin(ref_centre, Some(&ref_centre.theta_t));
                let m = &self.members[0];
                new_rows.push(background_row(t, &sums, k, m.pending_margin.min(hyp), m.pending_leak));
            }
        }
        let first = if self.mode == RowMode::Perturbation { 1 } else { 0 };
        for (m, mut row) in self.members[first..].iter_mut().zip(new_rows) {
            row.ghost_cum = Some(match m.rows.last() {
                None => 0.0,
                Some(prev) => {
                    prev.ghost_cum.unwrap_or(0.0) + 0.5 * (row.t - prev.t) * (ghost_rate(prev) + ghost_rate(&row))
                }
            });
            m.rows.push(row);
        }
        for m in &mut self.members {
            m.pending_margin = f64::INFINITY;
            m.pending_leak = 0.0;
        }
        Ok(())
    }

    /// Steps to the end (or to the planned halt), checkpointing on the way.
    pub fn run(
        &mut self,
        plan: &CheckpointPlan,
        log: &mut Logger,
        on_checkpoint: &mut dyn FnMut(&Self) -> Result<()>,
    ) -> Result<RunState> {
        let last = self.last_step();
        let rows = self.r.rows() as usize;
        while self.step < last {
            let before = self.members.last().map_or(0, |m| m.rows.len());
            self.advance()?;
            let after = self.members.last().map_or(0, |m| m.rows.len());
            if after > before {
                let m = self.members.last().unwrap();
                let row = m.rows.last().unwrap();
                log.line(&format!(
                    "row {}/{} t = {} E1_u = {:e} hyp_margin = {:e}",
                    after - 1,
                    rows,
                    row.t,
                    row.e[0][0].unwrap_or(f64::NAN),
                    row.hyp_margin.unwrap_or(f64::NAN)
                ));
            }
            let halt = plan.halt_at == Some(self.step);
            let due = plan.every > 0 && (self.step as u64).is_multiple_of(plan.every) && self.step < last;
            if let Some(path) = &plan.path {
                if halt || due {
                    write_atomic(path, &self.encode())?;
                    on_checkpoint(self)?;
                    log.line(&format!("checkpoint at step {} -> {}", self.step, path.display()));
                }
            }
            if halt {
                return Ok(RunState::Halted);
            }
        }
        Ok(RunState::Finished)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.i64(self.step);
        e.f64(self.dt);
        e.u64(self.per_row);
        e.u64(self.members.len() as u64);
        for m in &self.members {
            e.f64(m.eps);
            e.f64(m.pending_margin);
            e.f64(m.pending_leak);
            e.u64(m.history.len() as u64);
            for s in m.history.snapshots() {
                e.snapshot(s);
            }
            e.u64(m.rows.len() as u64);
            for row in &m.rows {
                e.f64s(&row.to_bits());
            }
        }
        e.finish(&self.r.hash())
    }

    /// Replaces the state with a checkpoint written by the same configuration.
    pub fn restore(&mut self, bytes: &[u8]) -> Result<()> {
        let mut d = Decoder::open(bytes, &self.r.hash())?;
        let step = d.i64()?;
        let dt = d.f64()?;
        let per_row = d.u64()?;
        if dt.to_bits() != self.dt.to_bits() || per_row != self.per_row {
            return Err(Error::Checkpoint(format!(
                "time step {dt} x {per_row} differs from {} x {}",
                self.dt, self.per_row
            )));
        }
        let count = d.u64()? as usize;
        if count != self.members.len() {
            return Err(Error::Checkpoint(format!(
                "{count} members, expected {}",
                self.members.len()
            )));
        }
        let mut members = Vec::with_capacity(count);
        for old in &self.members {
            let eps = d.f64()?;
            if eps.to_bits() != old.eps.to_bits() {
                return Err(Error::Checkpoint(format!(
                    "member epsilon {eps} differs from {}",
                    old.eps
                )));
            }
            let pending_margin = d.f64()?;
            let pending_leak = d.f64()?;
            let mut history = StateHistory::new();
            for _ in 0..d.u64()? {
                history.push(d.snapshot(self.grid)?)?;
            }
            let mut rows = Vec::new();
            for _ in 0..d.u64()? {
                rows.push(Row::from_bits(&d.f64s()?)?);
            }
            members.push(Member {
                eps,
                history,
                rows,
                pending_margin,
                pending_leak,
            });
        }
        d.finish()?;
        self.step = step;
        self.members = members;
        Ok(())
    }
}

/// Rate integrated into `ghost_cum`: the order-one ghost integrals of both fields.
fn ghost_rate(row: &Row) -> f64 {
    row.ghost[0][0].unwrap_or(0.0) + row.ghost[0][1].unwrap_or(0.0)
}

fn fill_energies(row: &mut Row, sums: &GammaSums, slot: usize, col: usize, k: usize) {
    for order in 1..=(k + 1).min(COLUMNS_K) {
        row.e[order - 1][col] = Some(sums.e_k(slot, order));
        row.ghost[order - 1][col] = Some(sums.ghost_k(slot, order));
    }
    for order in 0..=k.min(COLUMNS_K - 1) {
        row.x[order][col] = Some(sums.x_k(slot, order));
    }
}

fn perturbation_row(t: f64, er: &EnergyRow, k: usize, hyp: f64, leak: f64) -> Row {
    let mut row = Row::at(t);
    fill_energies(&mut row, &er.sums, 0, 0, k);
    fill_energies(&mut row, &er.sums, 1, 1, k);
    row.hyp_margin = Some(hyp);
    row.boundary_leak = Some(leak);
    row.equiv_min = Some(er.equivalence.min_ratio);
    row.equiv_max = Some(er.equivalence.max_ratio);
    row.lower_violations = Some(er.equivalence.lower_violations as f64);
    row
}

fn background_row(t: f64, sums: &GammaSums, k: usize, hyp: f64, leak: f64) -> Row {
    let mut row = Row::at(t);
    fill_energies(&mut row, sums, 0, 0, k);
    row.hyp_margin = Some(hyp);
    row.boundary_leak = Some(leak);
    row
}
