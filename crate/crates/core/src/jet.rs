//! Pointwise space-time 2-jets. Index 0 is time, indices `1..=dim` are space.

/// Maximum number of space-time indices (time plus three space directions).
pub const MAX_ST: usize = 4;

/// Packed position of `(a, b)` in the upper triangle of a 4x4 symmetric matrix.
#[inline]
pub const fn tri(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * MAX_ST - a * a.saturating_sub(1) / 2 + (b - a)
}

/// Value, gradient and symmetric Hessian of a function of `(t, x)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub dim: usize,
    pub value: f64,
    pub d1: [f64; MAX_ST],
    d2: [f64; 10],
}

impl Jet2 {
    pub fn zero(dim: usize) -> Self {
        assert!((1..=3).contains(&dim), "jets live in 1, 2 or 3 space dimensions");
        Jet2 {
            dim,
            value: 0.0,
            d1: [0.0; MAX_ST],
            d2: [0.0; 10],
        }
    }

    /// Builds a jet from value, gradient (length `dim + 1`) and a full (symmetrised) Hessian.
    pub fn new(dim: usize, value: f64, d1: &[f64], d2: &[Vec<f64>]) -> Self {
        let mut j = Jet2::zero(dim);
        j.value = value;
        j.d1[..=dim].copy_from_slice(&d1[..=dim]);
        for a in 0..=dim {
            for b in a..=dim {
                j.set_d2(a, b, 0.5 * (d2[a][b] + d2[b][a]));
            }
        }
        j
    }

    /// Number of space-time indices, `dim + 1`.
    #[inline]
    pub fn n(&self) -> usize {
        self.dim + 1
    }

    #[inline]
    pub fn d2(&self, a: usize, b: usize) -> f64 {
        self.d2[tri(a, b)]
    }

    #[inline]
    pub fn set_d2(&mut self, a: usize, b: usize, v: f64) {
        self.d2[tri(a, b)] = v;
    }

    /// `d_t^2 - Laplacian`.
    pub fn box_op(&self) -> f64 {
        let mut s = self.d2(0, 0);
        for i in 1..=self.dim {
            s -= self.d2(i, i);
        }
        s
    }

    pub fn laplacian(&self) -> f64 {
        (1..=self.dim).map(|i| self.d2(i, i)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0 && self.d1.iter().all(|&v| v == 0.0) && self.d2.iter().all(|&v| v == 0.0)
    }

    /// Euclidean length of the space-time gradient.
    pub fn grad_norm(&self) -> f64 {
        self.d1[..self.n()].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut j = *self;
        j.value *= s;
        j.d1.iter_mut().for_each(|v| *v *= s);
        j.d2.iter_mut().for_each(|v| *v *= s);
        j
    }

    pub fn add(&self, o: &Jet2) -> Self {
        let mut j = *self;
        j.value += o.value;
        for (a, b) in j.d1.iter_mut().zip(&o.d1) {
            *a += b;
        }
        for (a, b) in j.d2.iter_mut().zip(&o.d2) {
            *a += b;
        }
        j
    }

    pub fn sub(&self, o: &Jet2) -> Self {
        self.add(&o.scale(-1.0))
    }

    /// Jet of `x -> f(t, -x)`: odd orders in space flip sign.
    pub fn reflect_space(&self) -> Self {
        let mut j = *self;
        for i in 1..=self.dim {
            j.d1[i] = -j.d1[i];
            j.set_d2(0, i, -self.d2(0, i));
        }
        j
    }
}
