//! Null forms `Q`, `Q_{mu nu}`, good derivatives and the null-frame identities.
//!
//! Signature is `diag(1, -1, ..., -1)`; raising an index multiplies by `sign(mu)`.

use crate::error::{Error, Result};
use crate::jet::{Jet2, MAX_ST};

/// Metric sign of index `mu`.
#[inline]
pub fn sign(mu: usize) -> f64 {
    if mu == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `Q(f, g) = d_t f d_t g - grad f . grad g`.
#[inline]
pub fn q0(f: &Jet2, g: &Jet2) -> f64 {
    q0_d1(&f.d1, &g.d1, f.dim)
}

#[inline]
pub fn q0_d1(f: &[f64; MAX_ST], g: &[f64; MAX_ST], dim: usize) -> f64 {
    let mut s = f[0] * g[0];
    for i in 1..=dim {
        s -= f[i] * g[i];
    }
    s
}

/// `Q_{mu nu}(f, g) = d_mu f d_nu g - d_nu f d_mu g`.
#[inline]
pub fn qmn(f: &Jet2, g: &Jet2, mu: usize, nu: usize) -> f64 {
    qmn_d1(&f.d1, &g.d1, mu, nu)
}

#[inline]
pub fn qmn_d1(f: &[f64; MAX_ST], g: &[f64; MAX_ST], mu: usize, nu: usize) -> f64 {
    if mu == nu {
        return 0.0;
    }
    f[mu] * g[nu] - f[nu] * g[mu]
}

/// `Q^{mu nu}(f, g)`.
#[inline]
pub fn qmn_upper(f: &Jet2, g: &Jet2, mu: usize, nu: usize) -> f64 {
    sign(mu) * sign(nu) * qmn(f, g, mu, nu)
}

/// Full contraction `Q_{mu nu}(f, g) Q^{mu nu}(h, k)` over all ordered pairs.
pub fn qmn_contract(f: &[f64; MAX_ST], g: &[f64; MAX_ST], h: &[f64; MAX_ST], k: &[f64; MAX_ST], dim: usize) -> f64 {
    let mut s = 0.0;
    for mu in 0..=dim {
        for nu in (mu + 1)..=dim {
            s += sign(mu) * sign(nu) * qmn_d1(f, g, mu, nu) * qmn_d1(h, k, mu, nu);
        }
    }
    2.0 * s
}

/// `Q_{mu nu}(f, Q^{mu nu}(g, h))`, using the second derivatives in `g` and `h`.
///
/// With `H^{mu nu} = Q^{mu nu}(g, h)` antisymmetric, the contraction equals
/// `2 sum_mu s_mu f_mu B_mu` where `B_mu = s_mu d_nu H^{mu nu}`.
pub fn nested_qmn(f: &Jet2, g: &Jet2, h: &Jet2) -> f64 {
    let dim = f.dim;
    let box_g = g.box_op();
    let box_h = h.box_op();
    let mut s = 0.0;
    for mu in 0..=dim {
        let mut b = g.d1[mu] * box_h - h.d1[mu] * box_g;
        for nu in 0..=dim {
            b += sign(nu) * (g.d2(mu, nu) * h.d1[nu] - g.d1[nu] * h.d2(mu, nu));
        }
        s += sign(mu) * f.d1[mu] * b;
    }
    2.0 * s
}

/// Direction data `omega = (-1, x / r)` at a spatial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullFrame {
    pub dim: usize,
    pub x: [f64; 3],
    pub r: f64,
    pub omega: [f64; MAX_ST],
}

impl NullFrame {
    pub fn new(dim: usize, x: &[f64], r_min: f64) -> Result<Self> {
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(&x[..dim]);
        let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(r > r_min) {
            return Err(Error::FrameDegenerate { r, r_min });
        }
        let mut omega = [0.0; MAX_ST];
        omega[0] = -1.0;
        for i in 0..dim {
            omega[i + 1] = p[i] / r;
        }
        Ok(NullFrame { dim, x: p, r, omega })
    }
}

/// `T_mu f = omega_mu d_t f + d_mu f`; `T_0` is stored as an exact zero.
pub fn good_derivatives(f: &Jet2, frame: &NullFrame) -> [f64; MAX_ST] {
    good_derivatives_d1(&f.d1, frame)
}

pub fn good_derivatives_d1(d1: &[f64; MAX_ST], frame: &NullFrame) -> [f64; MAX_ST] {
    let mut t = [0.0; MAX_ST];
    for i in 1..=frame.dim {
        t[i] = frame.omega[i] * d1[0] + d1[i];
    }
    t
}

/// Sum of squares of the good derivatives.
pub fn good_norm_sq(d1: &[f64; MAX_ST], frame: &NullFrame) -> f64 {
    good_derivatives_d1(d1, frame).iter().map(|v| v * v).sum()
}

/// Residuals of the frame decompositions of `Q` and of every `Q_{mu nu}`, relative to the
/// size of the products involved.
pub fn null_identity_residual(f: &Jet2, g: &Jet2, frame: &NullFrame) -> (f64, f64) {
    let dim = f.dim;
    let tf = good_derivatives(f, frame);
    let tg = good_derivatives(g, frame);
    let w = &frame.omega;
    let scale = 1e-300 + f.grad_norm() * g.grad_norm();

    let mut rhs = 0.0;
    for mu in 0..=dim {
        rhs += sign(mu) * (tf[mu] * g.d1[mu] - w[mu] * f.d1[0] * tg[mu]);
    }
    let r0 = (q0(f, g) - rhs).abs() / scale;

    let mut r1: f64 = 0.0;
    for mu in 0..=dim {
        for nu in 0..=dim {
            let rhs = tf[mu] * g.d1[nu] - tf[nu] * g.d1[mu] - w[mu] * f.d1[0] * tg[nu] + w[nu] * f.d1[0] * tg[mu];
            r1 = r1.max((qmn(f, g, mu, nu) - rhs).abs() / scale);
        }
    }
    (r0, r1)
}

/// Right side of the null estimate `|Q| <= 2 (dim + 1) (|Df||Tg| + |Tf||Dg|)`.
pub fn null_estimate_bound(f: &Jet2, g: &Jet2, frame: &NullFrame) -> f64 {
    let tf = good_norm_sq(&f.d1, frame).sqrt();
    let tg = good_norm_sq(&g.d1, frame).sqrt();
    2.0 * (f.dim as f64 + 1.0) * (f.grad_norm() * tg + tf * g.grad_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(dim: usize, d1: &[f64]) -> Jet2 {
        let mut j = Jet2::zero(dim);
        j.d1[..d1.len()].copy_from_slice(d1);
        j
    }

    #[test]
    fn plane_wave_is_null() {
        let f = jet(2, &[1.0, 1.0, 0.0]);
        assert_eq!(q0(&f, &f), 0.0);
        let g = jet(2, &[1.0, 0.0, 0.0]);
        assert_eq!(q0(&g, &g), 1.0);
    }

    #[test]
    fn outgoing_wave_has_no_good_derivatives() {
        let x = [0.6, 0.8];
        let frame = NullFrame::new(2, &x, 1e-3).unwrap();
        let fp = 2.5;
        let f = jet(2, &[fp, -0.6 * fp, -0.8 * fp]);
        let t = good_derivatives(&f, &frame);
        assert!(t.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn degenerate_frame_rejected() {
        assert!(NullFrame::new(3, &[0.0, 0.0, 0.0], 0.01).is_err());
    }
}
