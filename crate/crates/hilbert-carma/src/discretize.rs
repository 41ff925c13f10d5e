//! Discrete-time views of the state dynamics: the exact AR(1) linear process
//! and the Euler functional AR(p) scheme.
//!
//! The semigroup makes the state recursion exact at any step:
//! `z_{i+1} = S_p(delta) z_i + eps_i` with iid innovations whose covariance is
//! the operator integral `Q_eps = int_0^delta S_p(s) P_p* Q P_p S_p*(s) ds`.
//!
//! Forward differencing of the p-th order form `Q_p(D) x = I_p...I_2 dL/dt`
//! instead yields the FAR(p) recursion
//!
//! ```text
//! x_{i+p} = sum_{q=1}^p Btilde_q x_{i+(p-q)} + delta^p eps_i,
//! Btilde_q = (-1)^{q+1} C(p,q) Id
//!          + sum_{k=1}^q delta^k B_k (-1)^{q-k} C(p-k, q-k),
//! ```
//!
//! driven by `eps_i = (1/delta) I_p...I_2 (L(t_{i+1}) - L(t_i))`.

use nalgebra::DMatrix;

use crate::carma::CarmaSystem;
use crate::error::{Error, Result};
use crate::operators::{BOperators, CompanionSystem};
use crate::quadrature::panel_count;
use crate::space::{HVector, LinearMap, ProductVector, SpaceSpec};

/// Exact binomial coefficients as integers; the coefficient identity checks
/// must not pick up floating-point drift.
pub fn binomial(n: usize, k: usize) -> Result<f64> {
    if n > 20 {
        return Err(Error::InvalidArgument(format!(
            "binomial({n}, {k}): orders above 20 are not supported"
        )));
    }
    if k > n {
        return Ok(0.0);
    }
    let mut value: u128 = 1;
    for i in 0..k.min(n - k) {
        value = value * (n - i) as u128 / (i + 1) as u128;
    }
    Ok(value as f64)
}

/// One exact AR(1) transition `S_p(delta) z + eps`.
pub fn ar1_step(
    s_delta: &LinearMap,
    z: &ProductVector,
    eps: &ProductVector,
) -> Result<ProductVector> {
    let layout = z.layout();
    if s_delta.domain() != &layout || s_delta.codomain() != &layout {
        return Err(Error::DimensionMismatch(
            "transition operator does not match the state layout".into(),
        ));
    }
    if eps.layout() != layout {
        return Err(Error::DimensionMismatch(
            "innovation does not match the state layout".into(),
        ));
    }
    let next = s_delta.matrix() * z.to_flat() + eps.to_flat();
    ProductVector::from_flat(&layout, next)
}

/// Covariance operator of the exact AR(1) innovation on the product space:
/// `Q_eps = int_0^delta S_p(s) P_p* Q P_p S_p*(s) ds` by composite Simpson,
/// with `Q` the covariance of `L(1)`.
pub fn innovation_covariance(sys: &CarmaSystem, delta: f64) -> Result<LinearMap> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step length must be positive, got {delta}"
        )));
    }
    let layout = sys.companion().layout();
    let identity = LinearMap::identity(layout);
    let panels = panel_count(delta, sys.semigroup().quadrature_nodes(), 4);
    crate::carma::operator_covariance_integral(sys, &identity, delta, panels)
}

/// n-th order forward difference
/// `sum_{k=0}^n C(n,k) (-1)^k f(t_{i + n - k})` of a grid sequence.
pub fn forward_difference(seq: &[HVector], order: usize, i: usize) -> Result<HVector> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    if i + order >= seq.len() {
        return Err(Error::IndexOutOfRange {
            index: i + order,
            count: seq.len() - 1,
        });
    }
    let mut acc = HVector::zero(seq[0].space().clone());
    for k in 0..=order {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc.axpy(sign * binomial(order, k)?, &seq[i + order - k]);
    }
    Ok(acc)
}

/// The functional AR(p) model on `H_1`.
#[derive(Debug, Clone)]
pub struct FarModel {
    order: usize,
    space: SpaceSpec,
    b_tilde: Vec<LinearMap>,
    delta: f64,
}

impl FarModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    /// `Btilde_q` for `q` in `1..=p`.
    pub fn b_tilde(&self, q: usize) -> Result<&LinearMap> {
        self.b_tilde
            .get(q.wrapping_sub(1))
            .ok_or(Error::IndexOutOfRange {
                index: q,
                count: self.b_tilde.len(),
            })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The innovation scale `delta^p`.
    pub fn noise_scale(&self) -> f64 {
        self.delta.powi(self.order as i32)
    }
}

/// Expand `Q_p(Delta_delta / delta) x_i = eps_i` into the FAR(p) coefficients.
pub fn far_coefficients(b: &BOperators, delta: f64) -> Result<FarModel> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step length must be positive, got {delta}"
        )));
    }
    let p = b.order();
    let space = b.space().clone();
    let dim = space.dim();
    let mut b_tilde = Vec::with_capacity(p);
    for q in 1..=p {
        let lead = if q % 2 == 1 { 1.0 } else { -1.0 };
        let mut m = DMatrix::identity(dim, dim) * (lead * binomial(p, q)?);
        for k in 1..=q {
            let sign = if (q - k) % 2 == 0 { 1.0 } else { -1.0 };
            let coeff = delta.powi(k as i32) * sign * binomial(p - k, q - k)?;
            m += b.get(k)?.matrix() * coeff;
        }
        b_tilde.push(LinearMap::new(
            b.get(q)?.domain().clone(),
            b.get(q)?.codomain().clone(),
            m,
        )?);
    }
    Ok(FarModel {
        order: p,
        space,
        b_tilde,
        delta,
    })
}

/// FAR innovations `eps_i = (1/delta) I_p...I_2 (L(t_{i+1}) - L(t_i))`.
pub fn far_innovations_from_increments(
    system: &CompanionSystem,
    increments: &[HVector],
    delta: f64,
) -> Result<Vec<HVector>> {
    let i_product = system.i_product_from(1)?;
    increments
        .iter()
        .map(|dl| {
            let mapped = i_product.apply(dl)?;
            HVector::new(mapped.space().clone(), mapped.coords() / delta)
        })
        .collect()
}

/// Run the FAR(p) recursion for `steps` new iterates from `p` initial values.
/// Divergence to non-finite values is reported, not silently propagated.
pub fn far_simulate(
    model: &FarModel,
    initial: &[HVector],
    innovations: &[HVector],
    steps: usize,
) -> Result<Vec<HVector>> {
    let p = model.order;
    if initial.len() != p {
        return Err(Error::InvalidArgument(format!(
            "need exactly p = {p} initial values, got {}",
            initial.len()
        )));
    }
    if innovations.len() < steps {
        return Err(Error::InvalidArgument(format!(
            "need {steps} innovations, got {}",
            innovations.len()
        )));
    }
    for x in initial.iter().chain(innovations.iter().take(steps)) {
        if x.space() != &model.space {
            return Err(Error::SpaceMismatch(
                "FAR iterates must live in H_1".into(),
            ));
        }
    }
    let scale = model.noise_scale();
    let mut seq: Vec<HVector> = initial.to_vec();
    for i in 0..steps {
        let mut acc = HVector::zero(model.space.clone());
        for q in 1..=p {
            let term = model.b_tilde(q)?.apply(&seq[i + p - q])?;
            acc = acc.axpy(1.0, &term);
        }
        acc = acc.axpy(scale, &innovations[i]);
        if !acc.coords().iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical(format!(
                "FAR recursion diverged at step {i}"
            )));
        }
        seq.push(acc);
    }
    Ok(seq)
}
