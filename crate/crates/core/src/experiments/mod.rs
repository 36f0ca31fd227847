//! Experiment drivers: configuration, lockstep runs, CSV series, summaries and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod runner;
pub mod series;
pub mod suite;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::integrator::{step_rk4, StateSnapshot};
use crate::linear_wave::{bounds_audit, BackgroundField};

pub use config::{parse_config, parse_config_str, resolve, ExperimentConfig, ExperimentKind, Resolved};
pub use runner::{initial_state, CheckpointPlan, Lockstep, RowMode, RunState};
pub use series::{from_csv, to_csv, Check, Row, Summary};

/// Run log: every line goes to the log file (if any) and optionally to stderr.
#[derive(Debug, Default)]
pub struct Logger {
    file: Option<BufWriter<File>>,
    echo: bool,
    lines: Vec<String>,
}

impl Logger {
    pub fn new(path: Option<&Path>, echo: bool) -> Result<Self> {
        let file = match path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        Ok(Logger {
            file,
            echo,
            lines: Vec::new(),
        })
    }

    pub fn line(&mut self, s: &str) {
        if self.echo {
            eprintln!("{s}");
        }
        if let Some(f) = &mut self.file {
            let _ = writeln!(f, "{s}");
            let _ = f.flush();
        }
        self.lines.push(s.to_string());
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; nothing is written without one.
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Mirror log lines on stderr.
    pub echo: bool,
    /// Stop after writing a checkpoint at this step (lockstep kinds).
    pub halt_at: Option<i64>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    /// Labelled time series, one CSV each.
    pub series: Vec<(String, Vec<Row>)>,
    /// Other CSV tables, by file name.
    pub tables: Vec<(String, String)>,
    pub halted: bool,
}

/// `series.csv` with a label becomes `series_<label>.csv`.
pub fn labelled(base: &str, label: &str) -> String {
    if label.is_empty() {
        return base.to_string();
    }
    match base.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_{label}.{ext}"),
        None => format!("{base}_{label}"),
    }
}

fn eps_label(eps: f64) -> String {
    format!("eps_{eps:e}")
}

/// Runs one experiment and writes its artifacts. An abort writes a summary carrying the
/// error before returning it.
pub fn run_experiment(r: &Resolved, opts: &RunOptions) -> Result<Outcome> {
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
    }
    let out = |name: &str| opts.out.as_ref().map(|d| d.join(name));
    let mut log = Logger::new(out(&r.cfg.output.log).as_deref(), opts.echo)?;
    log.line(&format!("# {} configuration (defaults filled in)", r.kind));
    for l in r.echo().lines() {
        log.line(&format!("#   {l}"));
    }
    if let Some(n) = &r.norms {
        log.line(&format!(
            "thresholds: lambda0 = {:e}, lambda1 = {:e}, amplitude = {:e}",
            n.lambda0, n.lambda1, r.background.amplitude
        ));
    }
    let result = dispatch(r, opts, &mut log);
    match result {
        Ok(outcome) => {
            write_outcome(r, opts, &outcome)?;
            log.line(&format!(
                "{}: {}",
                r.kind,
                if outcome.summary.pass { "PASS" } else { "FAIL" }
            ));
            Ok(outcome)
        }
        Err(e) => {
            log.line(&format!("abort: {e}"));
            if let Some(path) = out(&r.cfg.output.summary) {
                let mut s = Summary::new(r.kind.name());
                s.pass = false;
                s.abort = Some(e.to_string());
                std::fs::write(path, s.to_toml())?;
            }
            Err(e)
        }
    }
}

fn write_outcome(r: &Resolved, opts: &RunOptions, o: &Outcome) -> Result<()> {
    let Some(dir) = &opts.out else { return Ok(()) };
    write_series(dir, &r.cfg.output.csv, &o.series)?;
    for (name, text) in &o.tables {
        std::fs::write(dir.join(name), text)?;
    }
    if !o.halted {
        std::fs::write(dir.join(&r.cfg.output.summary), o.summary.to_toml())?;
    }
    Ok(())
}

fn write_series(dir: &Path, base: &str, series: &[(String, Vec<Row>)]) -> Result<()> {
    let single = series.len() == 1;
    for (label, rows) in series {
        let name = if single {
            base.to_string()
        } else {
            labelled(base, label)
        };
        std::fs::write(dir.join(name), to_csv(rows))?;
    }
    Ok(())
}

fn dispatch(r: &Resolved, opts: &RunOptions, log: &mut Logger) -> Result<Outcome> {
    if opts.resume.is_some()
        && !matches!(
            r.kind,
            ExperimentKind::StabilityScaling | ExperimentKind::GhostIntegral | ExperimentKind::DecayProfile
        )
    {
        return Err(Error::Config(format!("`{}` runs do not checkpoint", r.kind)));
    }
    let plain = |summary: Summary| Outcome {
        summary,
        series: Vec::new(),
        tables: Vec::new(),
        halted: false,
    };
    match r.kind {
        ExperimentKind::IdentitySuite => Ok(plain(suite::identity_suite(r, log)?)),
        ExperimentKind::BoundsAudit => audit(r, log),
        ExperimentKind::GeodesicExactness => geodesic(r, log),
        ExperimentKind::ConvergenceOrder => convergence(r, log),
        ExperimentKind::StabilityScaling | ExperimentKind::GhostIntegral | ExperimentKind::DecayProfile => {
            lockstep(r, opts, log)
        }
    }
}

fn audit(r: &Resolved, log: &mut Logger) -> Result<Outcome> {
    let n = r.cfg.audit.samples.max(1);
    let times: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                0.0
            } else {
                r.cfg.t_max * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let field = BackgroundField::new(r.background.clone());
    let mut s = Summary::new(r.kind.name());
    let mut table = String::from("t,sup_theta,bound_theta,margin_theta,sup_theta_t,bound_theta_t,margin_theta_t\n");
    match bounds_audit(&field, &times, r.cfg.audit.density) {
        Ok(rep) => {
            for row in &rep.rows {
                table.push_str(&format!(
                    "{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                    row.t,
                    row.sup_theta,
                    row.bound_theta,
                    row.margin_theta,
                    row.sup_theta_t,
                    row.bound_theta_t,
                    row.margin_theta_t
                ));
            }
            let min =
                |f: fn(&crate::linear_wave::AuditRow) -> f64| rep.rows.iter().map(f).fold(f64::INFINITY, f64::min);
            let max = |f: fn(&crate::linear_wave::AuditRow) -> f64| rep.rows.iter().map(f).fold(0.0, f64::max);
            s.value("lambda0", rep.norms.lambda0);
            s.value("lambda1", rep.norms.lambda1);
            s.value("amplitude", r.background.amplitude);
            s.check(
                "margin_theta",
                min(|x| x.margin_theta),
                "> 0",
                min(|x| x.margin_theta) > 0.0,
            );
            s.check(
                "margin_theta_t",
                min(|x| x.margin_theta_t),
                "> 0",
                min(|x| x.margin_theta_t) > 0.0,
            );
            let sup = max(|x| x.sup_theta);
            let sup_t = max(|x| x.sup_theta_t);
            s.check(
                "sup_theta_below_half_pi",
                sup,
                "< pi/2",
                sup < std::f64::consts::FRAC_PI_2,
            );
            s.check("sup_theta_t_below_one", sup_t, "< 1", sup_t < 1.0);
            log.line(&format!(
                "audit margins: {:e} {:e}",
                min(|x| x.margin_theta),
                min(|x| x.margin_theta_t)
            ));
        }
        Err(Error::Audit {
            t,
            quantity,
            measured,
            bound,
            ..
        }) => {
            log.line(&format!(
                "audit violated at t = {t}: {quantity} = {measured:e} > {bound:e}"
            ));
            s.check(quantity, measured, format!("<= {bound:e} at t = {t}"), false);
        }
        Err(e) => return Err(e),
    }
    Ok(Outcome {
        summary: s,
        series: Vec::new(),
        tables: vec![("audit.csv".to_string(), table)],
        halted: false,
    })
}

/// Evolves one state with a fixed step, calling `visit` after every cadence interval.
fn evolve(
    r: &Resolved,
    grid: UniformGrid,
    eps: f64,
    mut visit: impl FnMut(u64, &StateSnapshot, f64, f64) -> Result<()>,
) -> Result<StateSnapshot> {
    let evo = r.evolution(grid);
    let (dt, per_row) = r.step_for(&grid)?;
    let mut s = initial_state(r, grid, eps);
    visit(0, &s, 1.0, 0.0)?;
    let (mut margin, mut leak) = (f64::INFINITY, 0.0f64);
    for m in 1..=r.rows() {
        for j in 0..per_row {
            let (next, rep) = step_rk4(&evo, &s, dt, (m - 1) * per_row + j + 1)?;
            s = next;
            margin = margin.min(rep.min_margin);
            leak = leak.max(rep.boundary);
        }
        visit(m, &s, margin, leak)?;
        margin = f64::INFINITY;
        leak = 0.0;
    }
    Ok(s)
}

fn geodesic(r: &Resolved, log: &mut Logger) -> Result<Outcome> {
    let field = BackgroundField::new(r.background.clone());
    let mut series = Vec::new();
    for h in r.spacings() {
        let grid = r.grid_at(h)?;
        let mut rows = Vec::new();
        evolve(r, grid, 0.0, |m, s, margin, leak| {
            let t = m as f64 * r.cfg.cadence;
            let exact = field.samples(&grid, t)?;
            let theta = s
                .theta
                .iter()
                .zip(&exact.value)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let phi = s.phi.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let mut row = Row::at(t);
            row.geodesic_err = Some(theta + phi);
            row.hyp_margin = Some(margin);
            row.boundary_leak = Some(leak);
            log.line(&format!(
                "h = {h}: t = {t} sup|theta - Theta| + sup|phi| = {:e}",
                theta + phi
            ));
            rows.push(row);
            Ok(())
        })?;
        series.push((format!("h_{h:e}"), rows));
    }
    Ok(Outcome {
        summary: geodesic_summary(r, &series),
        series,
        tables: Vec::new(),
        halted: false,
    })
}

pub fn geodesic_summary(r: &Resolved, series: &[(String, Vec<Row>)]) -> Summary {
    let mut s = Summary::new(r.kind.name());
    let errs: Vec<f64> = series
        .iter()
        .map(|(_, rows)| rows.iter().filter_map(|x| x.geodesic_err).fold(0.0, f64::max))
        .collect();
    for ((label, _), e) in series.iter().zip(&errs) {
        s.value(format!("max_err_{label}"), *e);
    }
    for (i, w) in errs.windows(2).enumerate() {
        s.at_least(format!("order_{i}"), (w[0] / w[1]).log2(), r.cfg.refinement.min_order);
    }
    s
}

fn convergence(r: &Resolved, log: &mut Logger) -> Result<Outcome> {
    let eps = r.cfg.perturbation.epsilons[0];
    let mut finals = Vec::new();
    for h in r.spacings() {
        let grid = r.grid_at(h)?;
        finals.push(evolve(r, grid, eps, |_, _, _, _| Ok(()))?);
        log.line(&format!("convergence run at h = {h} done"));
    }
    let mut table = String::from("h,theta_diff,phi_diff\n");
    let mut diffs = Vec::new();
    for w in finals.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let (mut dt, mut dp) = (0.0f64, 0.0f64);
        for k in 0..coarse.grid.len() {
            let idx = coarse.grid.unflat(k);
            let kf = fine.grid.flat(idx.map(|i| 2 * i));
            dt = dt.max((coarse.theta[k] - fine.theta[kf]).abs());
            dp = dp.max((coarse.phi[k] - fine.phi[kf]).abs());
        }
        table.push_str(&format!("{:e},{dt:e},{dp:e}\n", coarse.grid.spacing));
        diffs.push(dt + dp);
    }
    Ok(Outcome {
        summary: convergence_summary(r, &table)?,
        series: Vec::new(),
        tables: vec![("convergence.csv".to_string(), table)],
        halted: false,
    })
}

/// Orders from the `convergence.csv` table.
pub fn convergence_summary(r: &Resolved, table: &str) -> Result<Summary> {
    let mut s = Summary::new(r.kind.name());
    let mut diffs = Vec::new();
    for line in table.lines().skip(1) {
        let v: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad table cell `{c}`: {e}")))
            })
            .collect::<Result<_>>()?;
        s.value(format!("diff_h_{:e}", v[0]), v[1] + v[2]);
        diffs.push(v[1] + v[2]);
    }
    for (i, w) in diffs.windows(2).enumerate() {
        s.at_least(format!("order_{i}"), (w[0] / w[1]).log2(), r.cfg.refinement.min_order);
    }
    Ok(s)
}

fn lockstep(r: &Resolved, opts: &RunOptions, log: &mut Logger) -> Result<Outcome> {
    let (epsilons, mode) = match r.kind {
        ExperimentKind::StabilityScaling => {
            let mut e = vec![0.0];
            e.extend(&r.cfg.perturbation.epsilons);
            (e, RowMode::Perturbation)
        }
        ExperimentKind::GhostIntegral => (vec![0.0, r.cfg.perturbation.epsilons[0]], RowMode::Perturbation),
        _ => (vec![0.0], RowMode::Background),
    };
    let grid = r.grid_at(r.cfg.grid.spacing)?;
    let mut run = Lockstep::start(r, grid, &epsilons, mode)?;
    log.line(&format!(
        "lockstep: {} members, dt = {:e} ({} steps per row), {} nodes",
        run.members.len(),
        run.dt,
        run.per_row,
        grid.len()
    ));
    if let Some(path) = &opts.resume {
        run.restore(&std::fs::read(path)?)?;
        log.line(&format!("resumed from {} at step {}", path.display(), run.step));
    }
    let plan = CheckpointPlan {
        path: opts.out.as_ref().map(|d| d.join(&r.cfg.output.checkpoint)),
        every: r.cfg.output.checkpoint_every,
        halt_at: opts.halt_at,
    };
    let out = opts.out.clone();
    let csv = r.cfg.output.csv.clone();
    let state = run.run(&plan, log, &mut |run: &Lockstep| match &out {
        Some(dir) => write_series(dir, &csv, &member_series(run)),
        None => Ok(()),
    })?;
    let series = member_series(&run);
    let mut tables = Vec::new();
    let halted = state == RunState::Halted;
    let mut summary = match r.kind {
        ExperimentKind::StabilityScaling => stability_summary(r, &series),
        ExperimentKind::GhostIntegral => ghost_summary(r, &series),
        _ => decay_summary(r, &series),
    };
    if !halted && r.kind == ExperimentKind::DecayProfile && r.cfg.decay.time_reversal {
        let err = time_reversal_error(r, &run)?;
        log.line(&format!("time reversal error {err:e}"));
        summary.at_most("time_reversal_error", err, r.cfg.decay.reversal_tol);
    }
    if !halted && r.cfg.output.snapshots {
        for m in &run.members {
            let s = m.history.centre().expect("full history");
            tables.push((labelled("snapshot.csv", &eps_label(m.eps)), snapshot_csv(s)));
        }
    }
    Ok(Outcome {
        summary,
        series,
        tables,
        halted,
    })
}

fn member_series(run: &Lockstep) -> Vec<(String, Vec<Row>)> {
    let first = if run.mode == RowMode::Perturbation { 1 } else { 0 };
    run.members[first..]
        .iter()
        .map(|m| (eps_label(m.eps), m.rows.clone()))
        .collect()
}

fn snapshot_csv(s: &StateSnapshot) -> String {
    let mut out = String::from("x,y,z,theta,theta_t,phi,phi_t\n");
    for k in 0..s.grid.len() {
        let x = s.grid.point_flat(k);
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            x[0], x[1], x[2], s.theta[k], s.theta_t[k], s.phi[k], s.phi_t[k]
        ));
    }
    out
}

/// Integrates the state at `t_max` back to `t = 0`; largest nodal difference from the data.
fn time_reversal_error(r: &Resolved, run: &Lockstep) -> Result<f64> {
    let mut s = run.members[0].history.centre().expect("full history").clone();
    let steps = r.rows() * run.per_row;
    for j in 0..steps {
        s = step_rk4(&run.evo, &s, -run.dt, j).map(|(n, _)| n)?;
    }
    let s0 = initial_state(r, run.grid, 0.0);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(diff(&s.theta, &s0.theta)
        .max(diff(&s.theta_t, &s0.theta_t))
        .max(diff(&s.phi, &s0.phi))
        .max(diff(&s.phi_t, &s0.phi_t)))
}

fn col_max(rows: &[Row], lo: f64, hi: f64, f: impl Fn(&Row) -> Option<f64>) -> f64 {
    rows.iter()
        .filter(|r| r.t >= lo - 1e-9 && r.t <= hi + 1e-9)
        .filter_map(&f)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn col_min(rows: &[Row], f: impl Fn(&Row) -> Option<f64>) -> f64 {
    rows.iter().filter_map(f).fold(f64::INFINITY, f64::min)
}

/// First row at or after `t`.
fn row_at(rows: &[Row], t: f64) -> Option<&Row> {
    rows.iter().find(|r| r.t >= t - 1e-9)
}

fn equivalence_checks(s: &mut Summary, label: &str, rows: &[Row]) {
    let violations: f64 = rows.iter().filter_map(|r| r.lower_violations).sum();
    s.at_most(format!("lower_bound_violations_{label}"), violations, 0.0);
    let band_min = col_min(rows, |r| r.equiv_min);
    s.value(
        format!("equiv_max_{label}"),
        col_max(rows, f64::NEG_INFINITY, f64::INFINITY, |r| r.equiv_max),
    );
    if let Some(at1) = row_at(rows, 1.0).and_then(|r| r.equiv_min) {
        s.value(format!("equiv_min_at_1_{label}"), at1);
        s.at_least(format!("equiv_min_{label}"), band_min, 0.5 * at1);
    }
}

fn ghost_checks(s: &mut Summary, label: &str, rows: &[Row], t_max: f64) {
    let total = rows.last().and_then(|r| r.ghost_cum).unwrap_or(0.0);
    let before = row_at(rows, 0.75 * t_max).and_then(|r| r.ghost_cum).unwrap_or(0.0);
    s.value(format!("ghost_total_{label}"), total);
    let share = if total > 0.0 { (total - before) / total } else { 0.0 };
    s.at_most(format!("ghost_last_quarter_share_{label}"), share, 0.05);
}

fn x0_checks(s: &mut Summary, label: &str, rows: &[Row], t_max: f64) {
    for (f, field) in ["u", "v"].iter().enumerate() {
        let first = col_max(rows, 0.0, 0.25 * t_max, |r| r.x[0][f]);
        let last = col_max(rows, 0.75 * t_max, t_max, |r| r.x[0][f]);
        s.value(format!("x0_{field}_first_quarter_{label}"), first);
        s.at_most(format!("x0_{field}_final_over_first_{label}"), last / first, 1.2);
    }
}

pub fn stability_summary(r: &Resolved, series: &[(String, Vec<Row>)]) -> Summary {
    let mut s = Summary::new(r.kind.name());
    let t_max = r.cfg.t_max;
    let eps = &r.cfg.perturbation.epsilons;
    let mut sup = Vec::new();
    let mut margin = f64::INFINITY;
    for (label, rows) in series {
        let e = col_max(rows, 0.0, t_max, |r| Some(r.e[1][0]?.sqrt() + r.e[1][1]?.sqrt()));
        s.value(format!("sup_energy_{label}"), e);
        sup.push(e);
        margin = margin.min(col_min(rows, |r| r.hyp_margin));
        s.value(
            format!("boundary_leak_{label}"),
            col_max(rows, 0.0, t_max, |r| r.boundary_leak),
        );
        x0_checks(&mut s, label, rows, t_max);
        equivalence_checks(&mut s, label, rows);
        ghost_checks(&mut s, label, rows, t_max);
    }
    s.check(
        "runs_complete",
        series.len() as f64,
        format!("= {}", eps.len()),
        series
            .iter()
            .all(|(_, rows)| rows.last().is_some_and(|x| (x.t - t_max).abs() < 1e-9)),
    );
    s.check("hyp_margin", margin, "> 0.1", margin > 0.1);
    for i in 1..sup.len() {
        let expected = eps[i - 1] / eps[i];
        let ratio = sup[i - 1] / sup[i];
        s.within(
            format!("energy_ratio_{}_{}", series[i - 1].0, series[i].0),
            ratio,
            0.9 * expected,
            1.1 * expected,
        );
    }
    s
}

pub fn ghost_summary(r: &Resolved, series: &[(String, Vec<Row>)]) -> Summary {
    let mut s = Summary::new(r.kind.name());
    for (label, rows) in series {
        ghost_checks(&mut s, label, rows, r.cfg.t_max);
        equivalence_checks(&mut s, label, rows);
    }
    s
}

pub fn decay_summary(r: &Resolved, series: &[(String, Vec<Row>)]) -> Summary {
    let mut s = Summary::new(r.kind.name());
    let Some((_, rows)) = series.first() else { return s };
    let Some(first) = rows.first() else { return s };
    for k in 1..=series::COLUMNS_K {
        let Some(e0) = first.e[k - 1][0] else { continue };
        let drift = rows
            .iter()
            .filter_map(|x| x.e[k - 1][0])
            .map(|e| (e - e0).abs() / e0)
            .fold(0.0, f64::max);
        s.value(format!("E{k}_initial"), e0);
        if k == 1 {
            s.at_most("E1_drift", drift, r.cfg.decay.drift_tol);
        } else {
            s.value(format!("E{k}_drift"), drift);
        }
    }
    if let Some(last) = rows.last() {
        for k in 0..series::COLUMNS_K {
            if let (Some(a), Some(b)) = (first.x[k][0], last.x[k][0]) {
                s.value(format!("X{k}_initial"), a);
                s.value(format!("X{k}_final"), b);
            }
        }
    }
    s.value("hyp_margin_min", col_min(rows, |r| r.hyp_margin));
    s
}
