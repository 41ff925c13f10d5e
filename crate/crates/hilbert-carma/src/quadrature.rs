//! Composite Simpson quadrature on uniform grids.
//!
//! All Bochner-type operator integrals in this crate go through these
//! routines with a single nodes-per-unit-time density knob, so quadrature
//! error is deterministic and reproducible rather than adaptive.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Even panel count covering `length` at `nodes_per_unit` density, at least
/// `min_panels` (rounded up to even).
pub fn panel_count(length: f64, nodes_per_unit: u32, min_panels: usize) -> usize {
    let wanted = (length * nodes_per_unit as f64).ceil() as usize;
    let n = wanted.max(min_panels).max(2);
    if n % 2 == 0 { n } else { n + 1 }
}

fn simpson_weight(k: usize, panels: usize) -> f64 {
    if k == 0 || k == panels {
        1.0 / 3.0
    } else if k % 2 == 1 {
        4.0 / 3.0
    } else {
        2.0 / 3.0
    }
}

/// Composite Simpson integral of a scalar function; `panels` must be even.
pub fn integrate_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 2 && panels % 2 == 0, "even panel count required");
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..=panels {
        sum += simpson_weight(k, panels) * f(a + k as f64 * h);
    }
    sum * h
}

/// Composite Simpson integral of a complex-valued function.
pub fn integrate_complex<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
) -> Complex64 {
    assert!(panels >= 2 && panels % 2 == 0, "even panel count required");
    let h = (b - a) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..=panels {
        sum += f(a + k as f64 * h) * simpson_weight(k, panels);
    }
    sum * h
}

/// Composite Simpson integral of a matrix-valued function.
pub fn integrate_matrix<F: FnMut(f64) -> DMatrix<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
) -> DMatrix<f64> {
    assert!(panels >= 2 && panels % 2 == 0, "even panel count required");
    let h = (b - a) / panels as f64;
    let mut sum = f(a) * simpson_weight(0, panels);
    for k in 1..=panels {
        sum += f(a + k as f64 * h) * simpson_weight(k, panels);
    }
    sum * h
}

/// Quadrature weights (in units of the grid step) for the prefix integral
/// `int_0^{j h}` over grid values at nodes `0..=j`.
///
/// Even prefixes use composite Simpson; odd prefixes open with a Simpson 3/8
/// block so the remaining panel count is even. The two unavoidable low-order
/// prefixes are `j = 1` (trapezoid) and the empty `j = 0`.
pub(crate) fn prefix_weights(j: usize) -> Vec<f64> {
    match j {
        0 => vec![0.0],
        1 => vec![0.5, 0.5],
        2 => vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        3 => vec![3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0],
        _ => {
            let mut w = vec![0.0; j + 1];
            if j % 2 == 0 {
                for (k, wk) in w.iter_mut().enumerate() {
                    *wk = simpson_weight(k, j);
                }
            } else {
                w[0] = 3.0 / 8.0;
                w[1] = 9.0 / 8.0;
                w[2] = 9.0 / 8.0;
                w[3] = 3.0 / 8.0;
                for k in 3..=j {
                    w[k] += simpson_weight(k - 3, j - 3);
                }
            }
            w
        }
    }
}
