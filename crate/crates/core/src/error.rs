use thiserror::Error;

/// Everything that can abort a computation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid too small: axis {axis} has {nodes} nodes, need at least {required}")]
    GridTooSmall { axis: usize, nodes: usize, required: usize },

    #[error("quadrature did not converge: {what} (coarse {coarse:e}, fine {fine:e})")]
    Quadrature { what: String, coarse: f64, fine: f64 },

    #[error("threshold violated: {name} = {value} is not below {bound}")]
    Threshold { name: &'static str, value: f64, bound: f64 },

    #[error("null frame degenerate at r = {r:e} (r_min = {r_min:e})")]
    FrameDegenerate { r: f64, r_min: f64 },

    #[error(
        "hyperbolicity lost at t = {t}, x = {x:?}: |m|_2 = {norm} exceeds 1 - {margin} \
         (singular values {spectrum:?})"
    )]
    Hyperbolicity {
        t: f64,
        x: [f64; 3],
        norm: f64,
        margin: f64,
        spectrum: [f64; 2],
    },

    #[error("non-finite value in field `{field}` at step {step} (t = {t})")]
    NonFinite { field: &'static str, step: u64, t: f64 },

    #[error("support reached the boundary at step {step} (t = {t}): |value| = {magnitude:e}")]
    BoundaryLeak { step: u64, t: f64, magnitude: f64 },

    #[error("insufficient history: word of length {word_len} needs {required} time levels, have {available}")]
    History {
        word_len: usize,
        required: usize,
        available: usize,
    },

    #[error("empty test family")]
    EmptyFamily,

    #[error("pointwise energy lower bound violated at {count} node(s); first at x = {x:?} (deficit {deficit:e})")]
    LowerBound { count: usize, x: [f64; 3], deficit: f64 },

    #[error("bounds audit failed at t = {t}, x = {x:?}: {quantity} = {measured} exceeds {bound}")]
    Audit {
        t: f64,
        x: [f64; 3],
        quantity: &'static str,
        measured: f64,
        bound: f64,
    },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
