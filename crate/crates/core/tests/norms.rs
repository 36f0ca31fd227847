use faddeev_core::data::{Bump, Profile};
use faddeev_core::grid::{lp_norm, w_k1_homogeneous_norm, UniformGrid};
use faddeev_core::linear_wave::*;
use std::f64::consts::PI;

#[test]
fn homogeneous_norm_matches_high_precision_value() {
    // sum over |a| = 2 of the L^1 norms of d^a (1 - r^2)^6 in three dimensions
    let b = Bump::new(3, Profile::Poly { power: 6 }, &[0.0; 3], 1.0, 1.0);
    let got = w_k1_homogeneous_norm(&b, 2, 3).unwrap();
    let want = 21.213660892761753;
    assert!((got - want).abs() / want < 1e-4, "got {got}, want {want}");
}

#[test]
fn homogeneous_norm_scales_with_width() {
    for (dim, k) in [(3, 3), (2, 2), (2, 1)] {
        let c = [0.1, -0.2, 0.05];
        let b1 = Bump::new(dim, Profile::Exp, &c[..dim], 1.0, 1.0);
        let b2 = Bump::new(dim, Profile::Exp, &c[..dim], 0.5, 1.0);
        let n1 = w_k1_homogeneous_norm(&b1, k, dim).unwrap();
        let n2 = w_k1_homogeneous_norm(&b2, k, dim).unwrap();
        let want = 0.5f64.powi(dim as i32 - k as i32);
        assert!(
            (n2 / n1 - want).abs() / want < 1e-4,
            "dim {dim} k {k}: {} vs {want}",
            n2 / n1
        );
    }
}

#[test]
fn grid_l1_norm_of_polynomial_bump() {
    let g = UniformGrid::cartesian(2, 1.2, 0.01).unwrap();
    let f = g.sample(0.0, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 < 1.0 {
            (1.0 - r2).powi(4)
        } else {
            0.0
        }
    });
    let got = lp_norm(&f, 1.0);
    assert!((got - PI / 5.0).abs() / (PI / 5.0) < 1e-6, "got {got}");
}

#[test]
fn lambdas_are_linear_in_amplitude_and_fraction_meets_thresholds() {
    for dim in [2, 3] {
        let cfg = BackgroundConfig::default();
        let spec = cfg.to_spec(dim).unwrap();
        let base = lambda_norms(&spec.with_amplitude(1.0)).unwrap();
        let half = lambda_norms(&spec.with_amplitude(-0.5)).unwrap();
        assert!((half.lambda0 - 0.5 * base.lambda0).abs() < 1e-12 * base.lambda0);
        assert!((half.lambda1 - 0.5 * base.lambda1).abs() < 1e-12 * base.lambda1);

        let s = spec.at_threshold_fraction(0.9).unwrap();
        let n = lambda_norms(&s).unwrap();
        let [b0, b1] = thresholds(dim);
        assert!(n.all_met());
        let tight = (n.lambda0 / b0).max(n.lambda1 / b1);
        assert!((tight - 0.9).abs() < 1e-9, "dim {dim}: {tight}");
        assert!(require_thresholds(&n, dim).is_ok());

        let over = lambda_norms(&spec.at_threshold_fraction(1.1).unwrap()).unwrap();
        assert!(require_thresholds(&over, dim).is_err());
    }
}

#[test]
fn sup_norm_audit_holds_below_threshold() {
    for dim in [2, 3] {
        let spec = BackgroundConfig::default().to_spec(dim).unwrap();
        let spec = spec.at_threshold_fraction(0.9).unwrap();
        let field = BackgroundField::new(spec);
        let report = bounds_audit(&field, &[0.0, 0.5, 1.5, 4.0], 8).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.min_margin() > 0.0);
        for row in &report.rows {
            assert!(row.sup_theta < PI / 2.0 && row.sup_theta_t < 1.0);
        }
    }
}
