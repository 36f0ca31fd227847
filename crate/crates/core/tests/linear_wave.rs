use faddeev_core::data::{Bump, BumpSet, MultiIndex, Profile, SmoothData, SupportBall};
use faddeev_core::linear_wave::*;
use faddeev_core::quadrature::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Radial 3D solution from the one-dimensional reduction `w = r u`.
fn dalembert(t: f64, r: f64, u0: impl Fn(f64) -> f64, u1: impl Fn(f64) -> f64) -> f64 {
    let pos = ((r + t) * u0((r + t).abs()) + (r - t) * u0((r - t).abs())) / (2.0 * r);
    let gl = GaussLegendre::new(200);
    let (a, b) = (r - t, r + t);
    // integrate s u1(|s|) piecewise on [-1, 1] where the bump lives
    let lo = a.max(-1.0);
    let hi = b.min(1.0);
    let vel = if lo < hi {
        let mut acc = 0.0;
        let cuts = [lo, lo.max(0.0).min(hi), hi];
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                acc += gl.integrate(w[0], w[1], |s| s * u1(s.abs()));
            }
        }
        acc / (2.0 * r)
    } else {
        0.0
    };
    pos + vel
}

fn spec3(a0: f64, a1: f64) -> BackgroundSpec {
    BackgroundSpec::new(
        BumpSet::single(Bump::new(3, Profile::Exp, &[0.0; 3], 1.0, a0)),
        BumpSet::single(Bump::new(3, Profile::Exp, &[0.0; 3], 1.0, a1)),
        1.0,
    )
}

#[test]
fn kirchhoff_matches_radial_reduction() {
    let spec = spec3(1.0, 0.7);
    let mut worst: f64 = 0.0;
    for &(t, r) in &[
        (0.3, 0.2),
        (0.8, 0.5),
        (1.5, 1.2),
        (2.0, 2.3),
        (5.0, 4.5),
        (10.0, 9.7),
        (3.0, 0.4),
    ] {
        let got = kirchhoff_eval(&spec, t, &[r, 0.0, 0.0]).unwrap();
        let want = dalembert(t, r, |s| bump(s * s), |s| 0.7 * bump(s * s));
        worst = worst.max((got - want).abs());
        // off-axis point at the same radius
        let v = r / 3f64.sqrt();
        let got2 = kirchhoff_eval(&spec, t, &[v, v, v]).unwrap();
        worst = worst.max((got2 - want).abs());
    }
    assert!(worst <= 1e-7, "worst deviation {worst:e}");
}

#[test]
fn evaluators_vanish_for_zero_data_and_reproduce_data_at_t0() {
    let z3 = BackgroundSpec::zero(3);
    assert_eq!(kirchhoff_eval(&z3, 1.3, &[0.1, 0.2, 0.3]).unwrap(), 0.0);
    let z2 = BackgroundSpec::zero(2);
    assert_eq!(poisson2d_eval(&z2, 1.3, &[0.1, 0.2]).unwrap(), 0.0);

    let spec = spec3(1.0, 0.5);
    let x = [0.2, -0.1, 0.3];
    let j = background_jet(&spec, 0.0, &x).unwrap();
    let r2 = 0.04 + 0.01 + 0.09;
    assert!((j.value - bump(r2)).abs() < 1e-15);
    assert!((j.d1[0] - 0.5 * bump(r2)).abs() < 1e-15);
}

/// Two-dimensional data seen as z-independent data in three dimensions.
#[derive(Debug)]
struct Extended(Bump);

impl SmoothData for Extended {
    fn dim(&self) -> usize {
        3
    }
    fn support(&self) -> Option<SupportBall> {
        None
    }
    fn partials(&self, x: &[f64], idx: &[MultiIndex], out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(idx) {
            *o = if a[2] > 0 {
                0.0
            } else {
                self.0.partial(&x[..2], [a[0], a[1], 0])
            };
        }
    }
}

#[test]
fn poisson_matches_descent_from_three_dimensions() {
    let b0 = Bump::new(2, Profile::Exp, &[0.2, -0.1], 0.7, 1.0);
    let b1 = Bump::new(2, Profile::Exp, &[-0.3, 0.25], 0.6, 0.8);
    let spec = BackgroundSpec::new(BumpSet::single(b0.clone()), BumpSet::single(b1.clone()), 1.0);
    let e0 = Extended(b0);
    let e1 = Extended(b1);
    let mut worst: f64 = 0.0;
    for &(t, x, y) in &[(0.4, 0.1, 0.0), (1.0, 0.5, 0.3), (2.0, -1.0, 0.8), (3.5, 2.0, -1.0)] {
        let got = poisson2d_eval(&spec, t, &[x, y]).unwrap();
        let res = MeanRes {
            polar: 512,
            azimuth: 512,
        };
        let want = jet_general_fixed(3, &[&e0], &[&e1], t, &[x, y, 0.0], res).value;
        worst = worst.max((got - want).abs());
    }
    assert!(worst <= 1e-5, "worst deviation {worst:e}");
}

fn residual(eval: impl Fn(f64, [f64; 3]) -> f64, dim: usize, t: f64, x: [f64; 3], h: f64) -> f64 {
    let w = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
    let mut tt = 0.0;
    for (k, wk) in w.iter().enumerate() {
        tt += wk * eval(t + (k as f64 - 2.0) * h, x);
    }
    let mut lap = 0.0;
    for a in 0..dim {
        for (k, wk) in w.iter().enumerate() {
            let mut y = x;
            y[a] += (k as f64 - 2.0) * h;
            lap += wk * eval(t, y);
        }
    }
    (tt - lap) / (h * h)
}

#[test]
fn exact_evaluators_satisfy_the_wave_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s3 = spec3(1.0, 0.5);
    let b0 = Bump::new(2, Profile::Exp, &[0.1, 0.0], 0.8, 1.0);
    let b1 = Bump::new(2, Profile::Exp, &[0.0, -0.2], 0.7, 0.5);
    let s2 = BackgroundSpec::new(BumpSet::single(b0), BumpSet::single(b1), 1.0);
    let r3 = MeanRes {
        polar: 128,
        azimuth: 32,
    };
    let r2 = MeanRes {
        polar: 160,
        azimuth: 96,
    };
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (spec, dim) = if i % 2 == 0 { (&s3, 3) } else { (&s2, 2) };
        let t = rng.gen_range(0.3..4.0);
        let mut x = [0.0; 3];
        for v in x.iter_mut().take(dim) {
            *v = rng.gen_range(-1.5..1.5);
        }
        let res = if dim == 3 { r3 } else { r2 };
        let f = |t: f64, y: [f64; 3]| background_value_fixed(spec, t, &y[..dim], res);
        worst = worst.max(residual(f, dim, t, x, 5e-3).abs());
    }
    assert!(worst < 1e-4, "worst residual {worst:e}");
}

#[test]
fn jets_match_finite_differences_of_values() {
    let s3 = spec3(1.0, 0.5);
    let res = MeanRes {
        polar: 128,
        azimuth: 32,
    };
    let h = 5e-4;
    for &(t, x) in &[(0.7, [0.3, -0.2, 0.1]), (2.2, [1.0, 0.5, -0.4])] {
        let j = background_jet_fixed(&s3, t, &x, res);
        let f = |t: f64, y: [f64; 3]| background_value_fixed(&s3, t, &y, res);
        let shift = |a: usize, d: f64| {
            let mut y = x;
            let mut s = t;
            if a == 0 {
                s += d;
            } else {
                y[a - 1] += d;
            }
            (s, y)
        };
        for a in 0..4 {
            for b in a..4 {
                let mut fd = 0.0;
                for (sa, sb, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    let (s1, y1) = shift(a, sa * h);
                    let (s2, y2) = if a == 0 && b == 0 {
                        (s1 + sb * h, y1)
                    } else if b == 0 {
                        (s1 + sb * h, y1)
                    } else {
                        let mut y = y1;
                        y[b - 1] += sb * h;
                        (s1, y)
                    };
                    fd += w * f(s2, y2);
                }
                fd /= 4.0 * h * h;
                assert!(
                    (fd - j.d2(a, b)).abs() < 1e-5,
                    "slot ({a},{b}) at t={t}: fd {fd} jet {}",
                    j.d2(a, b)
                );
            }
        }
    }
}

#[test]
fn amplitude_scales_exactly() {
    let s = spec3(1.0, 0.3);
    let base = kirchhoff_eval(&s, 1.7, &[0.4, 0.1, 0.2]).unwrap();
    let scaled = kirchhoff_eval(&s.with_amplitude(-2.5), 1.7, &[0.4, 0.1, 0.2]).unwrap();
    assert_eq!(scaled, -2.5 * base);
}

#[test]
fn tail_identity_reproduces_polynomial() {
    // f(t) = (1 - t^2)^8 on t < 1
    let d1 = |s: f64| -16.0 * s * (1.0 - s * s).powi(7);
    let d2 = |s: f64| -16.0 * (1.0 - s * s).powi(7) + 224.0 * s * s * (1.0 - s * s).powi(6);
    for i in 0..=40 {
        let t = 2.0 * i as f64 / 40.0;
        let f = if t < 1.0 { (1.0 - t * t).powi(8) } else { 0.0 };
        let r1 = tail_reconstruct(d1, 1, t, 1.0, 16);
        let r2 = tail_reconstruct(d2, 2, t, 1.0, 16);
        assert!((r1 - f).abs() < 1e-8 && (r2 - f).abs() < 1e-8, "t={t}: {r1} {r2} {f}");
    }
}
