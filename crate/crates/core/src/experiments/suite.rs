//! Exact checks that need no evolution: null-form identities, the decomposition of the
//! right-hand sides, tail reconstruction, commutators, and the inequality harnesses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::faddeev::{eval_f, eval_fg, eval_g, reconstruct, FieldJets};
use crate::grid::UniformGrid;
use crate::jet::Jet2;
use crate::linear_wave::tail_reconstruct;
use crate::null_forms::{null_identity_residual, qmn, NullFrame};
use crate::taylor::Taylor;
use crate::vector_fields::{
    bump_family, commutator_residual, harness_order, inequality_harness, wave_identity_residual, FnSource, Generator,
    GridPoints, GridSource, HarnessKind, JetSource, SamplePoint, TimeLevels,
};

use super::config::Resolved;
use super::series::Summary;
use super::Logger;

pub fn random_jet(rng: &mut ChaCha8Rng, dim: usize) -> Jet2 {
    let n = dim + 1;
    let d1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut d2 = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a..n {
            let v = rng.gen_range(-1.0..1.0);
            d2[a][b] = v;
            d2[b][a] = v;
        }
    }
    Jet2::new(dim, rng.gen_range(-1.0..1.0), &d1, &d2)
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> [f64; 3] {
    loop {
        let mut x = [0.0; 3];
        for v in x.iter_mut().take(dim) {
            *v = rng.gen_range(-2.0..2.0);
        }
        if x.iter().map(|v| v * v).sum::<f64>() > 0.01 {
            return x;
        }
    }
}

/// `exp(-|x - c|^2 + 0.3 t x_1)` as a Taylor jet in `(t, x)`.
pub fn gaussian_jet(nv: usize, order: usize, t: f64, x: &[f64; 3], c: [f64; 3]) -> Taylor {
    let mut q = Taylor::zero(nv, order);
    for a in 1..nv {
        let y = Taylor::coordinate(nv, order, a, x[a - 1] - c[a - 1]);
        q = q.add(&y.mul(&y));
    }
    let tt = Taylor::coordinate(nv, order, 0, t);
    q.scale(-1.0)
        .axpy(0.3, &tt.mul(&Taylor::coordinate(nv, order, 1, x[0])))
        .exp()
}

/// Exact time levels `d_t^k w` at every node, from a jet-valued function.
pub fn levels_from_jets(grid: UniformGrid, t: f64, order: usize, f: impl Fn(f64, &[f64; 3]) -> Taylor) -> TimeLevels {
    let mut v = vec![vec![0.0; grid.len()]; order + 1];
    for k in 0..grid.len() {
        let jet = f(t, &grid.point_flat(k));
        let mut fact = 1.0;
        for (j, lv) in v.iter_mut().enumerate() {
            if j > 0 {
                fact *= j as f64;
            }
            let mut e = [0; 4];
            e[0] = j;
            lv[k] = fact * jet.coeff(&e);
        }
    }
    TimeLevels::new(grid, t, v)
}

fn exact_on(src: &dyn JetSource, nv: usize, c: [f64; 3]) -> FnSource {
    FnSource {
        dim: nv - 1,
        t: src.time(),
        points: (0..src.len()).map(|i| src.point(i)).collect(),
        orders: vec![3],
        r_min: src.r_min(),
        f: Box::new(move |t, x| vec![gaussian_jet(nv, 3, t, x, c)]),
    }
}

/// Maximum harness ratio over the family at each time, per spacing.
pub fn harness_max(kind: HarnessKind, dim: usize, size: usize, seed: u64, times: &[f64], h: f64) -> Result<f64> {
    let family = bump_family(dim, size, seed);
    let order = harness_order(kind, dim);
    let mut worst: f64 = 0.0;
    for &t in times {
        let sources: Vec<FnSource> = family.iter().map(|m| m.source(t, h, order)).collect();
        let refs: Vec<&dyn JetSource> = sources.iter().map(|s| s as &dyn JetSource).collect();
        worst = worst.max(inequality_harness(kind, &refs)?.max_ratio);
    }
    Ok(worst)
}

pub fn identity_suite(r: &Resolved, log: &mut Logger) -> Result<Summary> {
    let cfg = &r.cfg.identity;
    let mut s = Summary::new(r.kind.name());
    let mut rng = ChaCha8Rng::seed_from_u64(r.cfg.seed);

    let (mut null_res, mut antisym, mut annihilated, mut recon): (f64, usize, usize, f64) = (0.0, 0, 0, 0.0);
    for i in 0..cfg.samples {
        let dim = 2 + i % 2;
        let (f, g) = (random_jet(&mut rng, dim), random_jet(&mut rng, dim));
        let frame = NullFrame::new(dim, &random_point(&mut rng, dim), 0.0)?;
        let (r0, r1) = null_identity_residual(&f, &g, &frame);
        null_res = null_res.max(r0).max(r1);
        for mu in 0..=dim {
            for nu in 0..=dim {
                if qmn(&f, &g, mu, nu) != -qmn(&f, &g, nu, mu) {
                    antisym += 1;
                }
            }
        }
        let geodesic = FieldJets::new(f, Jet2::zero(dim));
        if eval_f(&geodesic) != 0.0 || eval_g(&geodesic) != 0.0 {
            annihilated += 1;
        }
        let j = FieldJets::new(f, g);
        let want = eval_fg(&j);
        let got = reconstruct(&j);
        let scale = 1.0 + want[0].abs() + want[1].abs();
        recon = recon.max((got[0] - want[0]).abs().max((got[1] - want[1]).abs()) / scale);
    }
    s.at_most("null_identity_residual", null_res, 1e-12);
    s.at_most("antisymmetry_violations", antisym as f64, 0.0);
    s.at_most("geodesic_annihilation_failures", annihilated as f64, 0.0);
    s.at_most("reconstruction_residual", recon, 1e-12);
    log.line(&format!("algebraic checks on {} jets done", cfg.samples));

    // f(s) = (1 - s^2)^8 on [0, 1], recovered from its first three derivatives
    let f = |s: f64| (1.0 - s * s).powi(8);
    let derivs: [&dyn Fn(f64) -> f64; 3] = [
        &|s: f64| -16.0 * s * (1.0 - s * s).powi(7),
        &|s: f64| -16.0 * (1.0 - s * s).powi(7) + 224.0 * s * s * (1.0 - s * s).powi(6),
        &|s: f64| 672.0 * s * (1.0 - s * s).powi(6) - 2688.0 * s.powi(3) * (1.0 - s * s).powi(5),
    ];
    let mut tail: f64 = 0.0;
    for i in 0..cfg.samples.min(200) {
        let t = if i == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
        for (m, d) in derivs.iter().enumerate() {
            tail = tail.max((tail_reconstruct(d, m + 1, t, 1.0, 16) - f(t)).abs());
        }
    }
    s.at_most("tail_reconstruction_error", tail, 1e-12);

    // identity t box w = S d_t w - L_i d_i w, evaluated on exact jets in 2D and 3D
    let mut wave: f64 = 0.0;
    for dim in [2usize, 3] {
        let grid = UniformGrid::cartesian(dim, 1.0, 0.25)?;
        let points = (0..grid.len())
            .map(|k| SamplePoint {
                x: grid.point_flat(k),
                weight: 1.0,
            })
            .collect();
        let src = FnSource {
            dim,
            t: 1.3,
            points,
            orders: vec![3],
            r_min: 0.0,
            f: Box::new(move |t, x| vec![gaussian_jet(dim + 1, 3, t, x, [0.1, -0.2, 0.05])]),
        };
        wave = wave.max(wave_identity_residual(&src, 0)?);
    }
    s.at_most("wave_identity_residual", wave, 1e-12);

    let t = 0.6;
    let c = [0.2, 0.1, 0.0];
    for g in [Generator::Omega(1, 2), Generator::L(1), Generator::L(2), Generator::S] {
        let mut res = Vec::new();
        for h in [0.1, 0.05] {
            let grid = UniformGrid::cartesian(2, 5.0, h)?;
            let levels = levels_from_jets(grid, t, 3, |t, x| gaussian_jet(3, 3, t, x, c));
            let src = GridSource::new(GridPoints::new(grid, grid.box_for_radius(1.5)), &[&levels], &[3])?;
            res.push(commutator_residual(&src, &exact_on(&src, 3, c), g)?);
        }
        let name = format!("commutator_order_{}", g.label());
        s.value(format!("commutator_residual_{}_h0", g.label()), res[0]);
        s.value(format!("commutator_residual_{}_h1", g.label()), res[1]);
        s.at_least(name, (res[0] / res[1]).log2(), 3.0);
    }
    log.line("commutator checks done");

    if cfg.family_size > 0 && cfg.harness_spacings.len() == 2 {
        for (kind, label) in [
            (HarnessKind::KlainermanSobolev, "klainerman_sobolev"),
            (HarnessKind::Hardy, "hardy"),
        ] {
            let mut maxima = Vec::new();
            for &h in &cfg.harness_spacings {
                let m = harness_max(kind, r.cfg.dim, cfg.family_size, r.cfg.seed, &cfg.harness_times, h)?;
                s.value(format!("{label}_max_h{h}"), m);
                maxima.push(m);
            }
            let change = (maxima[0] - maxima[1]).abs() / maxima[1];
            s.check(
                format!("{label}_finite"),
                maxima[1],
                "finite",
                maxima.iter().all(|m| m.is_finite()),
            );
            s.at_most(format!("{label}_refinement_change"), change, cfg.harness_tol);
            log.line(&format!("{label} harness: {maxima:?}"));
        }
    }
    Ok(s)
}
