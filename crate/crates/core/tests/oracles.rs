//! Golden values from exact symbolic evaluation (regenerate with `tests/data/oracles.py`),
//! exact rational checks of the null-form algebra, and randomized invariants.

use faddeev_core::energy_diagnostics::*;
use faddeev_core::faddeev::{eval_f, eval_g, principal_probe, FieldJets};
use faddeev_core::jet::Jet2;
use num_rational::Ratio;
use proptest::prelude::*;
use serde_json::Value;

fn load() -> Value {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/oracles.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn vec4(v: &Value) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, x) in out.iter_mut().zip(v.as_array().unwrap()) {
        *o = x.as_f64().unwrap();
    }
    out
}

fn jet(dim: usize, v: &Value) -> Jet2 {
    let d1: Vec<f64> = v["d1"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let d2: Vec<Vec<f64>> = v["d2"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect();
    Jet2::new(dim, v["value"].as_f64().unwrap(), &d1, &d2)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-11 * (1.0 + b.abs())
}

#[test]
fn right_hand_sides_match_symbolic_values() {
    for case in load()["fg"].as_array().unwrap() {
        let dim = case["dim"].as_u64().unwrap() as usize;
        let j = FieldJets::new(jet(dim, &case["theta"]), jet(dim, &case["phi"]));
        let (f, g) = (case["F"].as_f64().unwrap(), case["G"].as_f64().unwrap());
        assert!(close(eval_f(&j), f), "F: {} vs {f}", eval_f(&j));
        assert!(close(eval_g(&j), g), "G: {} vs {g}", eval_g(&j));
        let pm = principal_probe(&j);
        for a in 0..2 {
            for b in 0..2 {
                let want = case["jacobian"][a][b].as_f64().unwrap();
                assert!(close(pm.m[a][b], want), "m[{a}][{b}]: {} vs {want}", pm.m[a][b]);
            }
        }
    }
}

#[test]
fn densities_match_symbolic_values() {
    for case in load()["density"].as_array().unwrap() {
        let p = DensityInput {
            n: case["dim"].as_u64().unwrap() as usize,
            u: case["u"].as_f64().unwrap(),
            theta: case["theta"].as_f64().unwrap(),
            du: vec4(&case["du"]),
            dtheta: vec4(&case["dtheta"]),
            dv: vec4(&case["dv"]),
            dgu: vec4(&case["dgu"]),
            dgv: vec4(&case["dgv"]),
        };
        let (et0, e1) = density_e_tilde(&p, DensityForm::ThreeD, None);
        let (_, e1_two) = density_e_tilde(&p, DensityForm::TwoD, None);
        assert!(close(et0, case["e_tilde0"].as_f64().unwrap()));
        assert!(close(e1, case["e1_three"].as_f64().unwrap()), "{e1}");
        assert!(close(e1_two, case["e1_two"].as_f64().unwrap()), "{e1_two}");
    }
}

type Q = Ratio<i64>;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn sgn(mu: usize) -> Q {
    if mu == 0 {
        q(1, 1)
    } else {
        q(-1, 1)
    }
}

fn q_form(n: usize, f: &[Q; 4], g: &[Q; 4]) -> Q {
    (0..=n).map(|m| sgn(m) * f[m] * g[m]).sum()
}

fn qq(n: usize, a: &[Q; 4], b: &[Q; 4], c: &[Q; 4], d: &[Q; 4]) -> Q {
    let mut acc = q(0, 1);
    for m in 0..=n {
        for k in 0..=n {
            acc += (a[m] * b[k] - a[k] * b[m]) * sgn(m) * sgn(k) * (c[m] * d[k] - c[k] * d[m]);
        }
    }
    acc
}

fn rational_vec(seed: &mut u64) -> [Q; 4] {
    let mut out = [q(0, 1); 4];
    for o in out.iter_mut() {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *o = q(((*seed >> 33) % 41) as i64 - 20, 7);
    }
    out
}

#[test]
fn null_form_algebra_is_exact_on_rationals() {
    let mut seed = 11u64;
    for n in [2usize, 3] {
        for _ in 0..200 {
            let (f, g, th, w, gu) = (
                rational_vec(&mut seed),
                rational_vec(&mut seed),
                rational_vec(&mut seed),
                rational_vec(&mut seed),
                rational_vec(&mut seed),
            );
            // Q_{mu nu}(f,g) Q^{mu nu}(f,g) = 2 (Q(f,f) Q(g,g) - Q(f,g)^2)
            let lhs = qq(n, &f, &g, &f, &g);
            let rhs = q(2, 1) * (q_form(n, &f, &f) * q_form(n, &g, &g) - q_form(n, &f, &g) * q_form(n, &f, &g));
            assert_eq!(lhs, rhs);

            // e_0 - e~_0 with cos^2 = c2 rational, printed form against the closed form
            let c2 = q(3, 5);
            let s2 = q(1, 1) - c2;
            let dsq = |a: &[Q; 4]| (0..=n).map(|m| a[m] * a[m]).sum::<Q>();
            let mu0: Q = (1..=n).map(|m| th[m] * sgn(m) * (th[m] * w[0] - th[0] * w[m])).sum();
            let e0 = q(1, 2) * (dsq(&gu) + dsq(&w));
            let et0 = q(1, 2) * s2 * dsq(&w) + c2 * w[0] * mu0 - q(1, 4) * c2 * qq(n, &th, &w, &th, &w);
            let gth: Q = (1..=n).map(|m| th[m] * th[m]).sum();
            let gw: Q = (1..=n).map(|m| w[m] * w[m]).sum();
            let dot: Q = (1..=n).map(|m| th[m] * w[m]).sum();
            let closed = q(1, 2) * dsq(&gu)
                + q(1, 2) * c2 * ((q(1, 1) + gth) * w[0] * w[0] + (q(1, 1) - th[0] * th[0] + gth) * gw - dot * dot);
            assert_eq!(e0 - et0, closed);
            let bound = q(1, 2) * dsq(&gu) + q(1, 2) * c2 * w[0] * w[0] + q(1, 2) * c2 * (q(1, 1) - th[0] * th[0]) * gw;
            assert!(e0 - et0 >= bound);
        }
    }
}

fn arr() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0)
}

proptest! {
    #[test]
    fn lower_bound_holds_pointwise(
        n in 2usize..4, u in -0.5f64..0.5, theta in -1.0f64..1.0,
        du in arr(), dth in arr(), dv in arr(), dgu in arr(), dgv in arr(),
    ) {
        let p = DensityInput { n, u, theta, du, dtheta: dth, dv, dgu, dgv };
        let e0 = density_e0(n, &dgu, &dgv, None);
        let (et0, _) = density_e_tilde(&p, DensityForm::for_dim(n), None);
        prop_assert!(e0 - et0 >= lower_bound(&p, None) - 1e-13);
    }

    #[test]
    fn ghost_flag_scales_every_density(
        sigma in -30.0f64..30.0, du in arr(), dth in arr(), dv in arr(), dgu in arr(), dgv in arr(),
    ) {
        let p = DensityInput { n: 2, u: 0.1, theta: 0.2, du, dtheta: dth, dv, dgu, dgv };
        let w = (-sigma.atan()).exp();
        prop_assert!(w >= (-std::f64::consts::FRAC_PI_2).exp() && w <= std::f64::consts::FRAC_PI_2.exp());
        let (a0, a1) = density_e_tilde(&p, DensityForm::TwoD, None);
        let (b0, b1) = density_e_tilde(&p, DensityForm::TwoD, Some(sigma));
        prop_assert!((b0 - w * a0).abs() <= 1e-14 * (1.0 + a0.abs()));
        prop_assert!((b1 - w * a1).abs() <= 1e-14 * (1.0 + a1.abs()));
        let e = density_e0(2, &dgu, &dgv, None);
        prop_assert!((density_e0(2, &dgu, &dgv, Some(sigma)) - w * e).abs() <= 1e-14 * (1.0 + e));
    }

    #[test]
    fn cubic_density_is_at_least_cubic(
        n in 2usize..4, u in -0.5f64..0.5, theta in -1.0f64..1.0,
        du in arr(), dth in arr(), dv in arr(), dgu in arr(), dgv in arr(),
    ) {
        // in the 2D form every term carries at least three perturbation gradients, four once
        // the background jets are switched off
        let at = |s: f64, bg: f64, power: i32| {
            let sc = |a: [f64; 4]| a.map(|x| s * x);
            let p = DensityInput {
                n, u: s * u, theta: bg * theta, du: sc(du), dtheta: dth.map(|x| bg * x),
                dv: sc(dv), dgu: sc(dgu), dgv: sc(dgv),
            };
            density_e_tilde(&p, DensityForm::TwoD, None).1 / s.powi(power)
        };
        // e_1 / s^(power - 1) must fall at least linearly in s
        for (bg, power) in [(1.0, 3), (0.0, 4)] {
            let (a, b) = (at(1e-5, bg, power - 1), at(1e-6, bg, power - 1));
            if a.abs() > 1e-14 {
                prop_assert!((b / a).abs() < 0.105, "{} {}", power, b / a);
            }
        }
    }
}

#[test]
fn three_d_form_adds_a_background_quadratic_term() {
    // the forms differ by cos^2 d_t Gv d_mu(u + Theta) Q^{mu0}(Theta, Gv), which is quadratic in
    // the perturbation
    let p = DensityInput {
        n: 3,
        u: 0.1,
        theta: 0.3,
        du: [0.1, 0.2, -0.3, 0.4],
        dtheta: [0.3, -0.1, 0.2, 0.1],
        dv: [0.2, -0.1, 0.3, 0.05],
        dgu: [0.5, 0.1, -0.2, 0.3],
        dgv: [-0.4, 0.2, 0.1, 0.3],
    };
    let (_, three) = density_e_tilde(&p, DensityForm::ThreeD, None);
    let (_, two) = density_e_tilde(&p, DensityForm::TwoD, None);
    let c2 = (p.u + p.theta).cos().powi(2);
    let dut: Vec<f64> = (0..4).map(|m| p.du[m] + p.dtheta[m]).collect();
    let extra: f64 = (1..=3)
        .map(|m| -dut[m] * (p.dtheta[m] * p.dgv[0] - p.dtheta[0] * p.dgv[m]))
        .sum::<f64>()
        * c2
        * p.dgv[0];
    assert!((three - two - extra).abs() < 1e-15);
}

#[test]
fn vanishing_v_gives_vanishing_densities() {
    let p = DensityInput {
        n: 3,
        u: 0.2,
        theta: 0.4,
        du: [0.1, 0.2, -0.3, 0.4],
        dtheta: [0.3, -0.1, 0.2, 0.1],
        dv: [0.0; 4],
        dgu: [0.5, 0.1, -0.2, 0.3],
        dgv: [0.0; 4],
    };
    assert_eq!(density_e_tilde(&p, DensityForm::ThreeD, None), (0.0, 0.0));
    let z = DensityInput {
        n: 2,
        dgv: [0.3, 0.1, 0.2, 0.0],
        ..Default::default()
    };
    assert_eq!(density_e_tilde(&z, DensityForm::TwoD, None).0, 0.0);
}
