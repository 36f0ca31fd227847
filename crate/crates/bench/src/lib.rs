//! Fixtures shared by the kernel benchmarks.

use faddeev_core::experiments::suite::{gaussian_jet, levels_from_jets};
use faddeev_core::experiments::{initial_state, parse_config_str, resolve, ExperimentKind, Resolved};
use faddeev_core::integrator::StateSnapshot;
use faddeev_core::vector_fields::TimeLevels;
use faddeev_core::UniformGrid;

/// A resolved stability configuration on a small 2D grid and its perturbed initial state.
pub fn state_2d(half_width: f64, spacing: f64) -> (Resolved, StateSnapshot) {
    let text = format!("dim = 2\nt_max = 1.0\ncadence = 1.0\n[grid]\nhalf_width = {half_width}\nspacing = {spacing}\n");
    let r = resolve(
        parse_config_str(&text).expect("bench config"),
        Some(ExperimentKind::StabilityScaling),
    )
    .expect("bench config resolves");
    let grid = r.grid_at(spacing).expect("bench grid");
    let s = initial_state(&r, grid, 1e-2);
    (r, s)
}

/// Exact time levels of a moving Gaussian, up to `order` time derivatives.
pub fn gaussian_levels(dim: usize, half_width: f64, spacing: f64, order: usize) -> TimeLevels {
    let grid = UniformGrid::cartesian(dim, half_width, spacing).expect("bench grid");
    levels_from_jets(grid, 0.5, order, |t, x| {
        gaussian_jet(dim + 1, order, t, x, [0.1, -0.2, 0.0])
    })
}
