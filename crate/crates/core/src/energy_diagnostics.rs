//! Modified energy densities of the perturbation system, their pointwise lower bound, the
//! equivalence band of `e_0 - e~` against `e_0`, and the ghost dissipation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::taylor::Taylor;
use crate::vector_fields::{
    alphabet, fold_points, ghost_factor, visit_words, words_up_to, GammaSums, JetSource, PointWeights,
};

/// Source field layout for perturbation diagnostics.
pub const FIELD_U: usize = 0;
pub const FIELD_V: usize = 1;
pub const FIELD_THETA: usize = 2;

/// Densities below this are left out of the equivalence band.
pub const E0_FLOOR: f64 = 1e-14;

/// Which printed form of the cubic density `e_1` is used. The 3D and 2D forms differ in one
/// argument of the second line: `Q^{mu0}(u + Theta, Gv)` against `Q^{mu0}(u, Gv)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DensityForm {
    ThreeD,
    TwoD,
}

impl DensityForm {
    pub fn for_dim(n: usize) -> Self {
        if n == 3 {
            DensityForm::ThreeD
        } else {
            DensityForm::TwoD
        }
    }

    pub fn note(&self) -> &'static str {
        match self {
            DensityForm::ThreeD => "e1 line 2 uses Q^{mu0}(u+Theta, G^a v)",
            DensityForm::TwoD => "e1 line 2 uses Q^{mu0}(u, G^a v)",
        }
    }
}

/// First-order data at one point: values of `u`, `Theta` and the gradients `(d_t, d_1..d_n)`
/// of `u`, `Theta`, `v`, `G^a u`, `G^a v`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DensityInput {
    pub n: usize,
    pub u: f64,
    pub theta: f64,
    pub du: [f64; 4],
    pub dtheta: [f64; 4],
    pub dv: [f64; 4],
    pub dgu: [f64; 4],
    pub dgv: [f64; 4],
}

#[inline]
fn s(mu: usize) -> f64 {
    if mu == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn qlow(f: &[f64; 4], g: &[f64; 4], mu: usize, nu: usize) -> f64 {
    f[mu] * g[nu] - f[nu] * g[mu]
}

/// `sum_mu a_mu Q^{mu0}(f, g)`
fn contract_mu0(n: usize, a: &[f64; 4], f: &[f64; 4], g: &[f64; 4]) -> f64 {
    (1..=n).map(|mu| a[mu] * s(mu) * qlow(f, g, mu, 0)).sum()
}

/// `Q_{mu nu}(a, b) Q^{mu nu}(c, d)` summed over all ordered pairs.
fn contract_qq(n: usize, a: &[f64; 4], b: &[f64; 4], c: &[f64; 4], d: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for mu in 0..=n {
        for nu in 0..=n {
            if mu != nu {
                acc += qlow(a, b, mu, nu) * s(mu) * s(nu) * qlow(c, d, mu, nu);
            }
        }
    }
    acc
}

fn norm_sq(n: usize, a: &[f64; 4]) -> f64 {
    a[..=n].iter().map(|v| v * v).sum()
}

fn add(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn axpy(s: f64, a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [s * a[0] + b[0], s * a[1] + b[1], s * a[2] + b[2], s * a[3] + b[3]]
}

fn weight(ghost: Option<f64>) -> f64 {
    ghost.map_or(1.0, ghost_factor)
}

/// `e_0 = (|D G^a u|^2 + |D G^a v|^2) / 2`, times `e^{-q(sigma)}` when `ghost = Some(sigma)`.
pub fn density_e0(n: usize, dgu: &[f64; 4], dgv: &[f64; 4], ghost: Option<f64>) -> f64 {
    0.5 * weight(ghost) * (norm_sq(n, dgu) + norm_sq(n, dgv))
}

/// `(e~_0, e_1)` as printed, optionally weighted by `e^{-q(sigma)}`.
pub fn density_e_tilde(p: &DensityInput, form: DensityForm, ghost: Option<f64>) -> (f64, f64) {
    let n = p.n;
    let w = weight(ghost);
    let ang = p.u + p.theta;
    let (sn, cs) = ang.sin_cos();
    let (s2, c2) = (sn * sn, cs * cs);
    let dut = add(&p.du, &p.dtheta);
    let (dgu, dgv, dv, du, dth) = (&p.dgu, &p.dgv, &p.dv, &p.du, &p.dtheta);

    let e0t = 0.5 * s2 * norm_sq(n, dgv) + c2 * dgv[0] * contract_mu0(n, dth, dth, dgv)
        - 0.25 * c2 * contract_qq(n, dth, dgv, dth, dgv);

    // A_mu = Q^{mu0}(G u, v) + Q^{mu0}(u + Theta, G v), contracted against the given vector
    let a_line = |a: &[f64; 4], second: &[f64; 4]| contract_mu0(n, a, dgu, dv) + contract_mu0(n, a, second, dgv);
    let second = match form {
        DensityForm::ThreeD => &dut,
        DensityForm::TwoD => du,
    };
    let u2th = axpy(2.0, dth, du);
    let e1 = -c2 * dgu[0] * a_line(dv, &dut)
        + c2 * dgv[0] * a_line(&dut, second)
        + c2 * dgv[0] * contract_mu0(n, du, dth, dgv)
        + 0.25 * c2 * (contract_qq(n, dv, dgu, dgu, dv) + 2.0 * contract_qq(n, dv, dgu, &dut, dgv))
        - 0.25 * c2 * contract_qq(n, &u2th, dgv, du, dgv);
    (w * e0t, w * e1)
}

/// Right side of the pointwise bound `e_0 - e~_0 >= ...`.
pub fn lower_bound(p: &DensityInput, ghost: Option<f64>) -> f64 {
    let n = p.n;
    let c2 = (p.u + p.theta).cos().powi(2);
    let grad: f64 = p.dgv[1..=n].iter().map(|v| v * v).sum();
    weight(ghost)
        * 0.5
        * (norm_sq(n, &p.dgu) + c2 * p.dgv[0] * p.dgv[0] + c2 * (1.0 - p.dtheta[0] * p.dtheta[0]) * grad)
}

/// The quadratic form `e_0 - e~_0` in closed form, for cross checks.
pub fn e0_minus_e_tilde0_closed(p: &DensityInput, ghost: Option<f64>) -> f64 {
    let n = p.n;
    let c2 = (p.u + p.theta).cos().powi(2);
    let (w, th) = (&p.dgv, &p.dtheta);
    let gth: f64 = th[1..=n].iter().map(|v| v * v).sum();
    let gw: f64 = w[1..=n].iter().map(|v| v * v).sum();
    let dot: f64 = (1..=n).map(|i| th[i] * w[i]).sum();
    weight(ghost)
        * 0.5
        * (norm_sq(n, &p.dgu) + c2 * ((1.0 + gth) * w[0] * w[0] + (1.0 - th[0] * th[0] + gth) * gw - dot * dot))
}

/// Equivalence statistics over points and words.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equivalence {
    /// Smallest and largest `(e_0 - e~) / e_0` over samples with `e_0 > E0_FLOOR`; both are 1
    /// when no sample passes the floor.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub counted: usize,
    pub excluded: usize,
    pub lower_violations: usize,
    pub worst_deficit: f64,
    pub worst_x: [f64; 3],
}

impl Equivalence {
    fn empty() -> Self {
        Equivalence {
            min_ratio: f64::INFINITY,
            max_ratio: f64::NEG_INFINITY,
            counted: 0,
            excluded: 0,
            lower_violations: 0,
            worst_deficit: 0.0,
            worst_x: [0.0; 3],
        }
    }

    fn merge(mut self, o: Equivalence) -> Self {
        self.min_ratio = self.min_ratio.min(o.min_ratio);
        self.max_ratio = self.max_ratio.max(o.max_ratio);
        self.counted += o.counted;
        self.excluded += o.excluded;
        self.lower_violations += o.lower_violations;
        if o.worst_deficit > self.worst_deficit {
            self.worst_deficit = o.worst_deficit;
            self.worst_x = o.worst_x;
        }
        self
    }

    fn finish(mut self) -> Self {
        if self.counted == 0 {
            self.min_ratio = 1.0;
            self.max_ratio = 1.0;
        }
        self
    }

    fn add(&mut self, p: &DensityInput, form: DensityForm, ghost: Option<f64>, x: &[f64; 3]) {
        let e0 = density_e0(p.n, &p.dgu, &p.dgv, ghost);
        let (et0, e1) = density_e_tilde(p, form, ghost);
        let lb = lower_bound(p, ghost);
        let deficit = lb - (e0 - et0);
        if deficit > 1e-12 * (e0 + lb) {
            self.lower_violations += 1;
            if deficit > self.worst_deficit {
                self.worst_deficit = deficit;
                self.worst_x = *x;
            }
        }
        if e0 > E0_FLOOR {
            let r = (e0 - et0 - e1) / e0;
            self.min_ratio = self.min_ratio.min(r);
            self.max_ratio = self.max_ratio.max(r);
            self.counted += 1;
        } else {
            self.excluded += 1;
        }
    }

    /// The lower bound is an algebraic identity; a violation is an implementation error.
    pub fn require_lower_bound(&self) -> Result<()> {
        if self.lower_violations > 0 {
            return Err(Error::LowerBound {
                count: self.lower_violations,
                x: self.worst_x,
                deficit: self.worst_deficit,
            });
        }
        Ok(())
    }
}

fn density_input(n: usize, u: &Taylor, v_grad: &[f64; 4], theta: &Taylor, gu: &Taylor, gv: &Taylor) -> DensityInput {
    DensityInput {
        n,
        u: u.value(),
        theta: theta.value(),
        du: u.gradient(),
        dtheta: theta.gradient(),
        dv: *v_grad,
        dgu: gu.gradient(),
        dgv: gv.gradient(),
    }
}

/// Equivalence band over every word of length `<= max_len` at every point; the source must
/// carry `u`, `v`, `Theta` in the [`FIELD_U`], [`FIELD_V`], [`FIELD_THETA`] slots.
pub fn equivalence_check(src: &dyn JetSource, max_len: usize, ghost: bool) -> Result<Equivalence> {
    Ok(energy_row(src, max_len, ghost)?.equivalence)
}

/// `int p_0 dx = E_1(G^a u) + E_1(G^a v)` in the ghost weight, for one word.
pub fn ghost_dissipation(src: &dyn JetSource, word: &crate::vector_fields::GammaWord) -> Result<f64> {
    let need = word.len() + 1;
    for f in [FIELD_U, FIELD_V] {
        if src.field_order(f) < need {
            return Err(Error::History {
                word_len: word.len(),
                required: crate::integrator::HISTORY_DEPTH,
                available: if src.field_order(f) <= 1 {
                    1
                } else {
                    crate::integrator::HISTORY_DEPTH
                },
            });
        }
    }
    let n = src.space_dim();
    let t = src.time();
    let r_min = src.r_min();
    Ok(fold_points(
        src,
        || 0.0f64,
        |acc, _, p, jets| {
            let pw = PointWeights::new(n, t, &p, r_min);
            if pw.r <= r_min {
                return;
            }
            for f in [FIELD_U, FIELD_V] {
                let g = word.apply(&jets[f].truncated(need), t, &p.x);
                *acc += 0.5 * pw.weight * pw.ghost * crate::vector_fields::good_sq(&g, &p.x, pw.r);
            }
        },
        |a, b| a + b,
    ))
}

/// All diagnostics of one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub max_len: usize,
    /// Energies, ghost energies and sups of `u` (slot 0) and `v` (slot 1).
    pub sums: GammaSums,
    pub equivalence: Equivalence,
}

impl EnergyRow {
    pub fn e_k(&self, field: usize, k: usize) -> f64 {
        self.sums.e_k(field, k)
    }

    pub fn ghost_k(&self, field: usize, k: usize) -> f64 {
        self.sums.ghost_k(field, k)
    }

    pub fn x_k(&self, field: usize, k: usize) -> f64 {
        self.sums.x_k(field, k)
    }

    /// `int p_0 dx` summed over the words, equal to `ghost_K(u) + ghost_K(v)`.
    pub fn dissipation(&self) -> f64 {
        let k = self.max_len + 1;
        self.ghost_k(0, k) + self.ghost_k(1, k)
    }
}

/// One pass over the points computing the energies of `u` and `v` up to `E_{max_len+1}`, the
/// sups up to `X_{max_len}`, and the equivalence band.
pub fn energy_row(src: &dyn JetSource, max_len: usize, ghost: bool) -> Result<EnergyRow> {
    let need = max_len + 1;
    for f in [FIELD_U, FIELD_V] {
        if src.field_order(f) < need {
            return Err(Error::History {
                word_len: max_len,
                required: crate::integrator::HISTORY_DEPTH,
                available: if src.field_order(f) <= 1 {
                    1
                } else {
                    crate::integrator::HISTORY_DEPTH
                },
            });
        }
    }
    if src.field_count() <= FIELD_THETA || src.field_order(FIELD_THETA) < 1 {
        return Err(Error::Config("energy diagnostics need a background jet".to_string()));
    }
    let n = src.space_dim();
    let t = src.time();
    let r_min = src.r_min();
    let form = DensityForm::for_dim(n);
    let alpha = alphabet(n);
    let words = words_up_to(n, max_len);
    let (sums, eq) = fold_points(
        src,
        || (GammaSums::empty(2, max_len, &words), Equivalence::empty()),
        |acc, _, p, jets| {
            let pw = PointWeights::new(n, t, &p, r_min);
            let sigma = if ghost { Some(t - pw.r) } else { None };
            let u = jets[FIELD_U].truncated(need);
            let v = jets[FIELD_V].truncated(need);
            let theta = jets[FIELD_THETA].truncated(1);
            let u1 = u.truncated(1);
            let vg = v.gradient();
            visit_words(&alpha, t, &p.x, &[u, v], max_len, &mut |wi, len, imgs| {
                acc.0.add_images(&pw, wi, len, imgs);
                let d = density_input(n, &u1, &vg, &theta, &imgs[0], &imgs[1]);
                acc.1.add(&d, form, sigma, &p.x);
            });
        },
        |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
    );
    Ok(EnergyRow {
        t,
        max_len,
        sums,
        equivalence: eq.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e0_basic_values() {
        assert_eq!(density_e0(3, &[0.0; 4], &[0.0; 4], None), 0.0);
        assert_eq!(density_e0(3, &[0.6, 0.8, 0.0, 0.0], &[0.0; 4], None), 0.5);
        assert_eq!(density_e0(3, &[0.6, 0.8, 0.0, 0.0], &[0.0; 4], Some(0.0)), 0.5);
    }

    #[test]
    fn quadratic_form_matches_closed_form() {
        let p = DensityInput {
            n: 3,
            u: 0.1,
            theta: -0.3,
            du: [0.2, -0.1, 0.4, 0.05],
            dtheta: [0.3, 0.2, -0.25, 0.1],
            dv: [0.1, 0.2, 0.3, -0.4],
            dgu: [0.5, -0.2, 0.1, 0.3],
            dgv: [-0.7, 0.4, 0.2, -0.6],
        };
        let e0 = density_e0(3, &p.dgu, &p.dgv, None);
        let (et0, _) = density_e_tilde(&p, DensityForm::ThreeD, None);
        assert!((e0 - et0 - e0_minus_e_tilde0_closed(&p, None)).abs() < 1e-14);
        assert!(e0 - et0 >= lower_bound(&p, None));
    }
}
