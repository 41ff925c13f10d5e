//! Evaluation of the C0-semigroup `S_p(t)` generated by the companion matrix.
//!
//! Three mutually verifying methods are provided:
//!
//! - a dense matrix exponential of the truncated generator,
//! - the recursive variation-of-constants series: with
//!   `S+_{p-1}(t) = blockdiag(Id, S_{p-1}(t))` and the bounded perturbation
//!   `B_p` holding `I_p` in block (1,2) and `A_p` in block (p,1),
//!
//!   ```text
//!   S_p(t) = S+_{p-1}(t) + sum_{n>=1} R_n(t),
//!   R_{n+1}(t) = int_0^t S+_{p-1}(t-s) B_p R_n(s) ds,   R_0 = S+_{p-1},
//!   ```
//!
//! - the closed-form wave semigroup, applied mode-wise through the functional
//!   calculus `g(Delta) e_n = g(-pi^2 n^2) e_n`.
//!
//! The series is summed on a uniform quadrature grid. Its truncation error is
//! controlled by the classical bound `K e^{ct} (|B_p| t)^{n+1} / (n+1)!` with
//! `K, c` estimated from the base semigroup; when the bound cannot be met on
//! the requested horizon, the evaluator splits the interval and chains the
//! segments through the semigroup law, refusing with a truncation error when
//! even the finest admissible splitting is not enough.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::CompanionSystem;
use crate::quadrature::{panel_count, prefix_weights};
use crate::space::{BasisKind, LinearMap, SpaceLayout, SpaceSpec};

pub const DEFAULT_SERIES_TERMS: usize = 25;
pub const DEFAULT_QUADRATURE_NODES: u32 = 64;
pub const DEFAULT_SERIES_TOLERANCE: f64 = 1e-9;

/// Hard cap on interval splitting for the recursive series.
const MAX_SEGMENTS: usize = 1024;
/// A segment always gets at least this many Simpson panels. The first grid
/// prefix is only trapezoid-accurate, so short segments need enough panels
/// for its third-order error to stay below the series tolerance.
const MIN_SEGMENT_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemigroupMethod {
    MatrixExponential,
    RecursiveSeries,
    WaveClosedForm,
}

/// Strategy object mapping `t >= 0` to the matrix of `S_p(t)`.
#[derive(Debug, Clone)]
pub struct SemigroupEvaluator {
    system: Arc<CompanionSystem>,
    method: SemigroupMethod,
    series_terms: usize,
    quadrature_nodes: u32,
    series_tolerance: f64,
}

impl SemigroupEvaluator {
    pub fn new(system: Arc<CompanionSystem>, method: SemigroupMethod) -> Self {
        Self {
            system,
            method,
            series_terms: DEFAULT_SERIES_TERMS,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            series_tolerance: DEFAULT_SERIES_TOLERANCE,
        }
    }

    pub fn with_series_terms(mut self, terms: usize) -> Self {
        self.series_terms = terms.max(1);
        self
    }

    pub fn with_quadrature_nodes(mut self, nodes_per_unit: u32) -> Self {
        self.quadrature_nodes = nodes_per_unit.max(1);
        self
    }

    pub fn with_series_tolerance(mut self, tolerance: f64) -> Self {
        self.series_tolerance = tolerance;
        self
    }

    pub fn system(&self) -> &Arc<CompanionSystem> {
        &self.system
    }

    pub fn method(&self) -> SemigroupMethod {
        self.method
    }

    pub fn series_terms(&self) -> usize {
        self.series_terms
    }

    pub fn quadrature_nodes(&self) -> u32 {
        self.quadrature_nodes
    }

    pub fn evaluate(&self, t: f64) -> Result<LinearMap> {
        match self.method {
            SemigroupMethod::MatrixExponential => matrix_exponential(&self.system, t),
            SemigroupMethod::RecursiveSeries => evaluate_recursive(
                &self.system,
                t,
                self.series_terms,
                self.quadrature_nodes,
                self.series_tolerance,
            ),
            SemigroupMethod::WaveClosedForm => {
                if !is_wave_system(&self.system) {
                    return Err(Error::SpaceMismatch(
                        "wave closed form requires the sine-basis system [[0, Id], [Delta, 0]]"
                            .into(),
                    ));
                }
                let n_modes = self.system.spaces()[0].dim();
                evaluate_wave(n_modes, t)
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "semigroup time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

/// `exp(t C_p)` by the dense scaling-and-squaring exponential.
pub fn matrix_exponential(system: &CompanionSystem, t: f64) -> Result<LinearMap> {
    check_time(t)?;
    let layout = system.layout();
    if t == 0.0 {
        return Ok(LinearMap::identity(layout));
    }
    let scaled = system.matrix() * t;
    let e = scaled.exp();
    if !linalg::is_finite(&e) {
        return Err(Error::SemigroupOverflow {
            t,
            growth_bound: t * system.matrix().norm(),
        });
    }
    LinearMap::new(layout.clone(), layout, e)
}

/// The perturbation `B_p`: `I_p` in block (1,2), `A_p` in block (p,1).
fn perturbation_matrix(system: &CompanionSystem) -> DMatrix<f64> {
    let layout = system.layout();
    let p = system.order();
    let n = layout.total_dim();
    let mut b = DMatrix::zeros(n, n);
    let i_p = system.i_block(p).expect("p >= 2").matrix();
    let a_p = system.a_block(p).expect("p >= 1").matrix();
    let r1 = layout.component_offset(1).expect("component 1");
    let c2 = layout.component_offset(2).expect("component 2");
    let rp = layout.component_offset(p).expect("component p");
    b.view_mut((r1, c2), (i_p.nrows(), i_p.ncols()))
        .copy_from(i_p);
    b.view_mut((rp, r1), (a_p.nrows(), a_p.ncols()))
        .copy_from(a_p);
    b
}

/// Largest perturbation norm over all nesting levels of the recursion.
fn max_perturbation_norm(system: &CompanionSystem) -> f64 {
    let mut worst: f64 = 0.0;
    let mut current = system.clone();
    while current.order() >= 2 {
        worst = worst.max(linalg::op_norm(&perturbation_matrix(&current)));
        current = current.inner_system().expect("order >= 2");
    }
    worst
}

/// Growth estimate `|S_base(t)| <= K e^{ct}` sampled from the base-case
/// exponential `exp(t A_1)`. Clamped to `K >= 1`, `c >= 0` because every
/// embedded semigroup `S+` carries an identity block of norm one.
fn base_growth_estimate(system: &CompanionSystem, horizon: f64) -> (f64, f64) {
    let mut base = system.clone();
    while let Some(inner) = base.inner_system() {
        base = inner;
    }
    let m = base.matrix();
    let ts = [horizon * 0.25, horizon * 0.5, horizon * 0.75, horizon];
    let mut norms = [0.0f64; 4];
    for (slot, &u) in norms.iter_mut().zip(ts.iter()) {
        let e = (m * u).exp();
        if !linalg::is_finite(&e) {
            // Fall back to the crude bound e^{t |A_1|}.
            return (1.0, linalg::op_norm(m));
        }
        *slot = linalg::op_norm(&e);
    }
    let c = if ts[3] > ts[0] && norms[0] > 0.0 {
        ((norms[3] / norms[0]).ln() / (ts[3] - ts[0])).max(0.0)
    } else {
        0.0
    };
    let k = norms
        .iter()
        .zip(ts.iter())
        .map(|(n, u)| n * (-c * u).exp())
        .fold(1.0f64, f64::max);
    (k, c)
}

/// Classical remainder bound for the truncated series:
/// `K e^{ct} (|B| t)^{terms+1} / (terms+1)!` with a geometric tail factor.
pub fn series_remainder_bound(system: &CompanionSystem, t: f64, terms: usize) -> f64 {
    if system.order() == 1 || t == 0.0 {
        return 0.0;
    }
    let (k, c) = base_growth_estimate(system, t);
    let x = max_perturbation_norm(system) * t * k;
    let mut term = k * (c * t).exp();
    for i in 1..=(terms + 1) {
        term *= x / i as f64;
        if !term.is_finite() {
            return f64::INFINITY;
        }
    }
    let ratio = x / (terms + 2) as f64;
    if ratio >= 1.0 {
        f64::INFINITY
    } else {
        term / (1.0 - ratio)
    }
}

/// Embed an inner-system matrix as `blockdiag(Id_{H_1}, inner)`.
fn embed_splus(dim1: usize, inner: &DMatrix<f64>, total: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(total, total);
    for i in 0..dim1 {
        m[(i, i)] = 1.0;
    }
    m.view_mut((dim1, dim1), (inner.nrows(), inner.ncols()))
        .copy_from(inner);
    m
}

/// Values of `S_p` at the grid points `j * h_panel`, `j = 0..=n_panels`,
/// computed by the nested variation-of-constants recursion.
fn series_grid(
    system: &CompanionSystem,
    h_panel: f64,
    n_panels: usize,
    terms: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let total = system.state_dim();
    if system.order() == 1 {
        let e = (system.matrix() * h_panel).exp();
        if !linalg::is_finite(&e) {
            return Err(Error::SemigroupOverflow {
                t: h_panel,
                growth_bound: h_panel * system.matrix().norm(),
            });
        }
        let mut out = Vec::with_capacity(n_panels + 1);
        let mut cur = DMatrix::identity(total, total);
        out.push(cur.clone());
        for _ in 0..n_panels {
            cur = &e * &cur;
            out.push(cur.clone());
        }
        return Ok(out);
    }

    let inner = system.inner_system().expect("order >= 2");
    let inner_grid = series_grid(&inner, h_panel, n_panels, terms)?;
    let dim1 = system.spaces()[0].dim();
    let splus: Vec<DMatrix<f64>> = inner_grid
        .iter()
        .map(|s| embed_splus(dim1, s, total))
        .collect();
    let b = perturbation_matrix(system);

    let weights: Vec<Vec<f64>> = (0..=n_panels).map(prefix_weights).collect();
    let mut sum = splus.clone();
    let mut r_prev = splus.clone();
    for _ in 1..=terms {
        let g: Vec<DMatrix<f64>> = r_prev.iter().map(|r| &b * r).collect();
        let mut r_next = vec![DMatrix::zeros(total, total); n_panels + 1];
        let mut added: f64 = 0.0;
        for j in 1..=n_panels {
            let w = &weights[j];
            let mut acc = DMatrix::zeros(total, total);
            for (k, wk) in w.iter().enumerate() {
                if *wk != 0.0 {
                    acc += &splus[j - k] * &g[k] * *wk;
                }
            }
            acc *= h_panel;
            r_next[j] = acc;
        }
        for j in 1..=n_panels {
            sum[j] += &r_next[j];
            added = added.max(r_next[j].norm());
        }
        r_prev = r_next;
        let scale = sum[n_panels].norm().max(1.0);
        if added <= 1e-16 * scale {
            break;
        }
    }
    Ok(sum)
}

/// `S_p(t)` by the recursive series (base case `p = 1` falls back to the
/// matrix exponential of `A_1`).
pub fn evaluate_recursive(
    system: &CompanionSystem,
    t: f64,
    terms: usize,
    nodes_per_unit: u32,
    tolerance: f64,
) -> Result<LinearMap> {
    check_time(t)?;
    let layout = system.layout();
    if t == 0.0 {
        return Ok(LinearMap::identity(layout));
    }
    if system.order() == 1 {
        return matrix_exponential(system, t);
    }

    let mut segments = 1usize;
    loop {
        let h = t / segments as f64;
        let bound = series_remainder_bound(system, h, terms);
        if bound * segments as f64 <= tolerance {
            break;
        }
        segments *= 2;
        if segments > MAX_SEGMENTS {
            return Err(Error::SeriesTruncation {
                terms,
                bound: series_remainder_bound(system, t, terms),
                tolerance,
                t,
            });
        }
    }

    let h = t / segments as f64;
    let panels = panel_count(h, nodes_per_unit, MIN_SEGMENT_PANELS);
    let grid = series_grid(system, h / panels as f64, panels, terms)?;
    let step = grid.last().expect("non-empty grid").clone();

    let n = layout.total_dim();
    let mut result = DMatrix::identity(n, n);
    for _ in 0..segments {
        result = &step * &result;
    }
    if !linalg::is_finite(&result) {
        return Err(Error::SemigroupOverflow {
            t,
            growth_bound: t * system.matrix().norm(),
        });
    }
    LinearMap::new(layout.clone(), layout, result)
}

/// Mode-wise closed form of the wave semigroup on `H_1 x H_2`: for mode `n`
/// with `omega = pi n` the 2x2 block is
///
/// ```text
/// [  cos(omega t)          sin(omega t)/omega ]
/// [ -omega sin(omega t)    cos(omega t)       ]
/// ```
pub fn wave_matrix(n_modes: usize, t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        let omega = std::f64::consts::PI * (k + 1) as f64;
        let (s, c) = (omega * t).sin_cos();
        m[(k, k)] = c;
        m[(k, n_modes + k)] = s / omega;
        m[(n_modes + k, k)] = -omega * s;
        m[(n_modes + k, n_modes + k)] = c;
    }
    m
}

/// The wave semigroup as an operator on the wave product space.
pub fn evaluate_wave(n_modes: usize, t: f64) -> Result<LinearMap> {
    check_time(t)?;
    let layout = SpaceLayout::product(vec![
        SpaceSpec::wave_h1(n_modes),
        SpaceSpec::sine("H2", n_modes),
    ])?;
    LinearMap::new(layout.clone(), layout, wave_matrix(n_modes, t))
}

/// Whether the system is exactly the truncated wave system
/// `[[0, Id], [Delta, 0]]` on sine bases of equal truncation.
pub fn is_wave_system(system: &CompanionSystem) -> bool {
    if system.order() != 2 {
        return false;
    }
    let [h1, h2] = [&system.spaces()[0], &system.spaces()[1]];
    if h1.basis_kind() != BasisKind::SineOnUnitInterval
        || h2.basis_kind() != BasisKind::SineOnUnitInterval
        || h1.dim() != h2.dim()
    {
        return false;
    }
    let n = h1.dim();
    let a1 = system.a_block(1).expect("p = 2").matrix();
    let a2 = system.a_block(2).expect("p = 2").matrix();
    let i2 = system.i_block(2).expect("p = 2").matrix();
    if a1.iter().any(|x| *x != 0.0) {
        return false;
    }
    if i2 != &DMatrix::identity(n, n) {
        return false;
    }
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j {
                SpaceSpec::laplacian_eigenvalue(i + 1)
            } else {
                0.0
            };
            if (a2[(i, j)] - expected).abs() > 1e-12 * expected.abs().max(1.0) {
                return false;
            }
        }
    }
    true
}
