//! Right-hand sides of the Faddeev system in spherical coordinates and their principal part.

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::null_forms::{nested_qmn, q0, qmn_contract};

/// Point on the unit sphere `(cos th cos ph, cos th sin ph, sin th)`.
pub fn embed_sphere(theta: f64, phi: f64) -> [f64; 3] {
    [theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin()]
}

/// Jets of the two angles at a common point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJets {
    pub theta: Jet2,
    pub phi: Jet2,
}

impl FieldJets {
    pub fn new(theta: Jet2, phi: Jet2) -> Self {
        debug_assert_eq!(theta.dim, phi.dim);
        FieldJets { theta, phi }
    }

    pub fn dim(&self) -> usize {
        self.theta.dim
    }

    /// Copy with every second derivative set to zero.
    pub fn without_second(&self) -> Self {
        let mut j = *self;
        let n = self.theta.n();
        for a in 0..n {
            for b in a..n {
                j.theta.set_d2(a, b, 0.0);
                j.phi.set_d2(a, b, 0.0);
            }
        }
        j
    }
}

pub fn eval_f(j: &FieldJets) -> f64 {
    let (th, ph) = (&j.theta, &j.phi);
    let s2 = (2.0 * th.value).sin();
    let c = th.value.cos();
    let c2 = c * c;
    -0.5 * s2 * q0(ph, ph)
        - 0.25 * s2 * qmn_contract(&th.d1, &ph.d1, &th.d1, &ph.d1, th.dim)
        - 0.5 * c2 * nested_qmn(ph, th, ph)
}

pub fn eval_g(j: &FieldJets) -> f64 {
    let (th, ph) = (&j.theta, &j.phi);
    let s = th.value.sin();
    let s2 = (2.0 * th.value).sin();
    let c = th.value.cos();
    s * s * ph.box_op() + s2 * q0(th, ph) + 0.5 * c * c * nested_qmn(th, th, ph)
}

pub fn eval_fg(j: &FieldJets) -> [f64; 2] {
    [eval_f(j), eval_g(j)]
}

/// Parts of `(F, G)` free of second derivatives, in closed form.
pub fn semilinear_parts(j: &FieldJets) -> (f64, f64) {
    let (th, ph) = (&j.theta, &j.phi);
    let s2 = (2.0 * th.value).sin();
    let f1 = -0.5 * s2 * q0(ph, ph) - 0.25 * s2 * qmn_contract(&th.d1, &ph.d1, &th.d1, &ph.d1, th.dim);
    let g1 = s2 * q0(th, ph);
    (f1, g1)
}

/// Coefficients of `(d_t^2 theta, d_t^2 phi)` in `(F, G)` and the remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalMatrix {
    pub m: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl PrincipalMatrix {
    /// Singular values of `m`, largest first.
    pub fn singular_values(&self) -> [f64; 2] {
        let [[a, b], [c, d]] = self.m;
        let s1 = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
        let hi = (0.5 * (s1 + disc)).sqrt();
        let lo = (0.5 * (s1 - disc)).max(0.0).sqrt();
        [hi, lo]
    }

    pub fn norm2(&self) -> f64 {
        self.singular_values()[0]
    }
}

/// Probes `(F, G)` on unit time-time slots; exact because both are affine in second derivatives.
pub fn principal_probe(j: &FieldJets) -> PrincipalMatrix {
    let mut base = *j;
    base.theta.set_d2(0, 0, 0.0);
    base.phi.set_d2(0, 0, 0.0);
    let b = eval_fg(&base);
    let mut m = [[0.0; 2]; 2];
    for field in 0..2 {
        let mut p = base;
        if field == 0 {
            p.theta.set_d2(0, 0, 1.0);
        } else {
            p.phi.set_d2(0, 0, 1.0);
        }
        let v = eval_fg(&p);
        m[0][field] = v[0] - b[0];
        m[1][field] = v[1] - b[1];
    }
    PrincipalMatrix { m, b }
}

/// Coefficient of every second-derivative slot in `(F, G)`, probed one slot at a time.
///
/// Returns `(coefficients, remainder)` with `coefficients[field][slot]` for slots in
/// upper-triangular order `(a, b), a <= b`.
pub fn probe_all_slots(j: &FieldJets) -> (Vec<Vec<[f64; 2]>>, [f64; 2]) {
    let base = j.without_second();
    let rem = eval_fg(&base);
    let n = j.theta.n();
    let mut coeffs = vec![Vec::new(), Vec::new()];
    for (field, slot_coeffs) in coeffs.iter_mut().enumerate() {
        for a in 0..n {
            for b in a..n {
                let mut p = base;
                if field == 0 {
                    p.theta.set_d2(a, b, 1.0);
                } else {
                    p.phi.set_d2(a, b, 1.0);
                }
                let v = eval_fg(&p);
                slot_coeffs.push([v[0] - rem[0], v[1] - rem[1]]);
            }
        }
    }
    (coeffs, rem)
}

/// Rebuilds `(F, G)` from probed slot coefficients and the closed-form semilinear parts.
pub fn reconstruct(j: &FieldJets) -> [f64; 2] {
    let (coeffs, _) = probe_all_slots(j);
    let (f1, g1) = semilinear_parts(j);
    let mut out = [f1, g1];
    let n = j.theta.n();
    for (field, slot_coeffs) in coeffs.iter().enumerate() {
        let jet = if field == 0 { &j.theta } else { &j.phi };
        let mut k = 0;
        for a in 0..n {
            for b in a..n {
                let e = jet.d2(a, b);
                out[0] += slot_coeffs[k][0] * e;
                out[1] += slot_coeffs[k][1] * e;
                k += 1;
            }
        }
    }
    out
}

/// Solves `(I - m) a = lap + b` for the two accelerations.
pub fn solve_accelerations(pm: &PrincipalMatrix, lap: [f64; 2], margin: f64) -> Result<[f64; 2]> {
    let norm = pm.norm2();
    if !(norm < 1.0 - margin) {
        return Err(Error::Hyperbolicity {
            t: f64::NAN,
            x: [f64::NAN; 3],
            norm,
            margin,
            spectrum: pm.singular_values(),
        });
    }
    Ok(solve_unchecked(pm, lap))
}

/// The 2x2 solve without the margin test.
#[inline]
pub fn solve_unchecked(pm: &PrincipalMatrix, lap: [f64; 2]) -> [f64; 2] {
    let a = 1.0 - pm.m[0][0];
    let b = -pm.m[0][1];
    let c = -pm.m[1][0];
    let d = 1.0 - pm.m[1][1];
    let r0 = lap[0] + pm.b[0];
    let r1 = lap[1] + pm.b[1];
    let det = a * d - b * c;
    [(d * r0 - b * r1) / det, (a * r1 - c * r0) / det]
}

/// Local hyperbolicity margin `min(1 - |m|_2, cos^2 th (1 - Th_t^2), pi/2 - |th|)`.
pub fn local_margin(pm: &PrincipalMatrix, theta: f64, background_t: f64) -> f64 {
    let c = theta.cos();
    (1.0 - pm.norm2())
        .min(c * c * (1.0 - background_t * background_t))
        .min(std::f64::consts::FRAC_PI_2 - theta.abs())
}
