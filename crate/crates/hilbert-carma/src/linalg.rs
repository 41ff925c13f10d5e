//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;

/// Operator 2-norm (largest singular value).
pub(crate) fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    svd.singular_values.max()
}

/// 2-norm condition number; infinite for singular matrices.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 { f64::INFINITY } else { max / min }
}

pub(crate) fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}
