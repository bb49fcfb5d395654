//! Central finite-difference gradient checking in 64-bit precision.

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `x`, coordinate
/// by coordinate.
pub fn finite_diff_check(
    f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
) -> FdReport {
    let all: Vec<usize> = (0..x.len()).collect();
    finite_diff_check_at(f, x, analytic, &all, step, tolerance)
}

/// Like [`finite_diff_check`] but only probes the listed coordinates.
pub fn finite_diff_check_at(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: &[usize],
    step: f64,
    tolerance: f64,
) -> FdReport {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    let mut worst_index = 0;
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst || err.is_nan() {
            worst = if err.is_nan() { f64::INFINITY } else { err };
            worst_index = i;
        }
    }
    FdReport {
        max_rel_error: worst,
        worst_index,
        checked: indices.len(),
        passed: worst < tolerance,
    }
}
