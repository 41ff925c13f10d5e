//! Simulation and analysis of the state process and its observations.
//!
//! The mild solution is evaluated exactly on the grid by the AR(1) recursion
//!
//! ```text
//! Z(t_{i+1}) = S_p(dt) Z(t_i) + eps_i,
//! eps_i ~ int_{t_i}^{t_{i+1}} S_p(t_{i+1} - s) P_p* dL(s),
//! ```
//!
//! with two innovation schemes: the left-point rule
//! `eps_i = S_p(dt) P_p* (L(t_{i+1}) - L(t_i))`, which supports jumps and
//! pathwise replay, and exact-Gaussian sampling of `eps_i` from the innovation
//! covariance, which removes the time-discretization bias for Wiener noise.
//!
//! On top of the paths: conditional and stationary Gaussian laws, the
//! conditional characteristic functional, the semimartingale rebuild of a
//! CAR(p) observation from its double integral form, and the mode-wise
//! convolution form of the wave solution.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::discretize;
use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::LevyModel;
use crate::operators::{self, CompanionSystem};
use crate::quadrature::{integrate_complex, panel_count};
use crate::semigroup::{SemigroupEvaluator, SemigroupMethod};
use crate::space::{
    HVector, LinearMap, ProductVector, SpaceSpec, injection_map, projection_map,
};

/// How the AR(1) innovation is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnovationScheme {
    /// `eps_i = S_p(dt) P_p* dL_i`; supports jumps and replay.
    LeftPoint,
    /// `eps_i ~ N(0, Q_eps)`; Wiener-only, exact in law at grid points.
    ExactGaussian,
}

/// A CARMA(p, U, L_U) system: companion dynamics, driving noise in `H_p`,
/// observation operator into `U`, initial state and a semigroup evaluator.
#[derive(Debug, Clone)]
pub struct CarmaSystem {
    companion: Arc<CompanionSystem>,
    noise: LevyModel,
    observation: LinearMap,
    z0: ProductVector,
    semigroup: SemigroupEvaluator,
}

impl CarmaSystem {
    pub fn new(
        companion: CompanionSystem,
        noise: LevyModel,
        observation: LinearMap,
        z0: ProductVector,
        method: SemigroupMethod,
    ) -> Result<Self> {
        let p = companion.order();
        if noise.space() != &companion.spaces()[p - 1] {
            return Err(Error::SpaceMismatch(format!(
                "noise lives in {}, expected the last component {}",
                noise.space().label(),
                companion.spaces()[p - 1].label()
            )));
        }
        let layout = companion.layout();
        if observation.domain() != &layout {
            return Err(Error::SpaceMismatch(
                "observation domain is not the state product space".into(),
            ));
        }
        if !observation.codomain().is_single() {
            return Err(Error::SpaceMismatch(
                "observation codomain must be a single space".into(),
            ));
        }
        if z0.layout() != layout {
            return Err(Error::SpaceMismatch(
                "initial state does not match the product space".into(),
            ));
        }
        let companion = Arc::new(companion);
        let semigroup = SemigroupEvaluator::new(companion.clone(), method);
        Ok(Self {
            companion,
            noise,
            observation,
            z0,
            semigroup,
        })
    }

    /// The CAR(p) special case: observation `P_1`.
    pub fn car(
        companion: CompanionSystem,
        noise: LevyModel,
        z0: ProductVector,
        method: SemigroupMethod,
    ) -> Result<Self> {
        let obs = projection_map(&companion.layout(), 1)?;
        Self::new(companion, noise, obs, z0, method)
    }

    pub fn with_quadrature_nodes(mut self, nodes_per_unit: u32) -> Self {
        self.semigroup = self.semigroup.with_quadrature_nodes(nodes_per_unit);
        self
    }

    pub fn with_series_terms(mut self, terms: usize) -> Self {
        self.semigroup = self.semigroup.with_series_terms(terms);
        self
    }

    pub fn companion(&self) -> &Arc<CompanionSystem> {
        &self.companion
    }

    pub fn noise(&self) -> &LevyModel {
        &self.noise
    }

    pub fn observation(&self) -> &LinearMap {
        &self.observation
    }

    pub fn z0(&self) -> &ProductVector {
        &self.z0
    }

    pub fn semigroup(&self) -> &SemigroupEvaluator {
        &self.semigroup
    }

    pub fn order(&self) -> usize {
        self.companion.order()
    }

    /// The observation space `U`.
    pub fn observation_space(&self) -> &SpaceSpec {
        self.observation
            .codomain()
            .as_single()
            .expect("validated single codomain")
    }

    /// Whether the observation is exactly the projection `P_1`.
    pub fn is_car(&self) -> bool {
        match projection_map(&self.companion.layout(), 1) {
            Ok(p1) => self.observation == p1,
            Err(_) => false,
        }
    }

    fn observe_flat(&self, z: &DVector<f64>) -> HVector {
        let coords = self.observation.matrix() * z;
        HVector::new(self.observation_space().clone(), coords).expect("codomain dims")
    }
}

/// A simulated trajectory on a uniform grid, together with the noise that
/// produced it (for pathwise cross-checks).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPath {
    dt: f64,
    scheme: InnovationScheme,
    times: Vec<f64>,
    states: Vec<ProductVector>,
    observations: Vec<HVector>,
    increments: Vec<HVector>,
    innovations: Vec<ProductVector>,
}

impl SimulationPath {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> InnovationScheme {
        self.scheme
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `M`; the path holds `M + 1` grid points.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn states(&self) -> &[ProductVector] {
        &self.states
    }

    pub fn observations(&self) -> &[HVector] {
        &self.observations
    }

    /// Recorded noise increments `dL_i` (empty for the exact-Gaussian scheme).
    pub fn increments(&self) -> &[HVector] {
        &self.increments
    }

    /// Recorded state innovations `eps_i`.
    pub fn innovations(&self) -> &[ProductVector] {
        &self.innovations
    }

    /// Drop the first `k` steps (burn-in) and restart the clock at zero.
    pub fn discard_initial(mut self, k: usize) -> SimulationPath {
        let k = k.min(self.steps());
        self.states.drain(..k);
        self.observations.drain(..k);
        self.increments.drain(..k.min(self.increments.len()));
        self.innovations.drain(..k);
        self.times.truncate(self.times.len() - k);
        for (i, t) in self.times.iter_mut().enumerate() {
            *t = i as f64 * self.dt;
        }
        self
    }

    fn grid_index(&self, s: f64) -> Result<usize> {
        let j = (s / self.dt).round();
        let tol = 1e-9 * self.dt.max(1.0);
        if j < 0.0 || (s - j * self.dt).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "time {s} is not on the simulation grid (dt = {})",
                self.dt
            )));
        }
        let j = j as usize;
        if j >= self.times.len() {
            return Err(Error::InvalidArgument(format!(
                "time {s} is beyond the simulated horizon {}",
                self.times.last().expect("non-empty")
            )));
        }
        Ok(j)
    }
}

/// Draws `N(0, C)` in a weighted space, where `C` is the matrix of a
/// self-adjoint non-negative operator. The coordinate covariance is
/// `C G^{-1}` for the Gram diagonal `G`.
pub(crate) struct GaussianOperatorSampler {
    factor: DMatrix<f64>,
}

impl GaussianOperatorSampler {
    pub(crate) fn new(covariance: &LinearMap) -> Result<Self> {
        if covariance.domain() != covariance.codomain() {
            return Err(Error::SpaceMismatch(
                "covariance operator must be an endomorphism".into(),
            ));
        }
        let g = covariance.domain().gram_diagonal();
        let n = g.len();
        let mut coord_cov = covariance.matrix().clone();
        for j in 0..n {
            for i in 0..n {
                coord_cov[(i, j)] /= g[j];
            }
        }
        let sym = (&coord_cov + coord_cov.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let mut factor = eig.eigenvectors;
        for (j, ev) in eig.eigenvalues.iter().enumerate() {
            if *ev < -1e-8 * max_ev.max(1.0) {
                return Err(Error::Numerical(format!(
                    "covariance operator is not non-negative: eigenvalue {ev}"
                )));
            }
            let sd = ev.max(0.0).sqrt();
            for i in 0..n {
                factor[(i, j)] *= sd;
            }
        }
        Ok(Self { factor })
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha12Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| StandardNormal.sample(rng));
        &self.factor * z
    }
}

/// Simulate `steps` AR(1) transitions of length `dt` starting from the
/// system's initial state.
pub fn simulate_path(
    sys: &CarmaSystem,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha12Rng,
    scheme: InnovationScheme,
) -> Result<SimulationPath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step length must be positive, got {dt}"
        )));
    }
    let layout = sys.companion.layout();
    let p = sys.order();
    let s_dt = sys.semigroup.evaluate(dt)?;
    let s_mat = s_dt.matrix();
    let inj = injection_map(&layout, p)?;
    let s_inj = s_mat * inj.matrix();

    let sampler = match scheme {
        InnovationScheme::LeftPoint => None,
        InnovationScheme::ExactGaussian => {
            if !sys.noise.is_gaussian() {
                return Err(Error::Unsupported(
                    "exact-Gaussian innovations require pure Wiener noise".into(),
                ));
            }
            Some(GaussianOperatorSampler::new(
                &discretize::innovation_covariance(sys, dt)?,
            )?)
        }
    };

    let mut z = sys.z0.to_flat();
    let mut states = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(if sampler.is_none() { steps } else { 0 });
    let mut innovations = Vec::with_capacity(steps);
    states.push(sys.z0.clone());
    observations.push(sys.observe_flat(&z));

    for _ in 0..steps {
        let eps = match &sampler {
            None => {
                let dl = sys.noise.sample_increment(dt, rng)?;
                let eps = &s_inj * dl.coords();
                increments.push(dl);
                eps
            }
            Some(sampler) => sampler.sample(rng),
        };
        z = s_mat * &z + &eps;
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical(
                "state recursion diverged to non-finite values".into(),
            ));
        }
        states.push(ProductVector::from_flat(&layout, z.clone())?);
        observations.push(sys.observe_flat(&z));
        innovations.push(ProductVector::from_flat(&layout, eps)?);
    }

    let times = (0..=steps).map(|i| i as f64 * dt).collect();
    Ok(SimulationPath {
        dt,
        scheme,
        times,
        states,
        observations,
        increments,
        innovations,
    })
}

/// The terminal observation `X(steps * dt)` of one simulated path, without
/// recording the trajectory. Statistically identical to
/// `simulate_path(..).observations().last()` for the same rng stream; meant
/// for large Monte-Carlo ensembles.
pub fn simulate_terminal_observation(
    sys: &CarmaSystem,
    dt: f64,
    steps: usize,
    rng: &mut ChaCha12Rng,
    scheme: InnovationScheme,
) -> Result<HVector> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step length must be positive, got {dt}"
        )));
    }
    let layout = sys.companion.layout();
    let p = sys.order();
    let s_dt = sys.semigroup.evaluate(dt)?;
    let s_mat = s_dt.matrix();
    let inj = injection_map(&layout, p)?;
    let s_inj = s_mat * inj.matrix();
    let sampler = match scheme {
        InnovationScheme::LeftPoint => None,
        InnovationScheme::ExactGaussian => {
            if !sys.noise.is_gaussian() {
                return Err(Error::Unsupported(
                    "exact-Gaussian innovations require pure Wiener noise".into(),
                ));
            }
            Some(GaussianOperatorSampler::new(
                &discretize::innovation_covariance(sys, dt)?,
            )?)
        }
    };
    let mut z = sys.z0.to_flat();
    for _ in 0..steps {
        let eps = match &sampler {
            None => &s_inj * sys.noise.sample_increment_coords(dt, rng)?,
            Some(sampler) => sampler.sample(rng),
        };
        z = s_mat * &z + eps;
    }
    if !z.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical(
            "state recursion diverged to non-finite values".into(),
        ));
    }
    Ok(sys.observe_flat(&z))
}

/// Rebuild the left-point path deterministically from given increments.
pub fn replay_from_increments(
    sys: &CarmaSystem,
    dt: f64,
    increments: &[HVector],
) -> Result<SimulationPath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step length must be positive, got {dt}"
        )));
    }
    let layout = sys.companion.layout();
    let p = sys.order();
    let s_dt = sys.semigroup.evaluate(dt)?;
    let s_mat = s_dt.matrix();
    let inj = injection_map(&layout, p)?;
    let s_inj = s_mat * inj.matrix();

    let mut z = sys.z0.to_flat();
    let mut states = vec![sys.z0.clone()];
    let mut observations = vec![sys.observe_flat(&z)];
    let mut innovations = Vec::with_capacity(increments.len());
    for dl in increments {
        if dl.space() != sys.noise.space() {
            return Err(Error::SpaceMismatch(
                "replayed increment in the wrong space".into(),
            ));
        }
        let eps = &s_inj * dl.coords();
        z = s_mat * &z + &eps;
        states.push(ProductVector::from_flat(&layout, z.clone())?);
        observations.push(sys.observe_flat(&z));
        innovations.push(ProductVector::from_flat(&layout, eps)?);
    }
    let times = (0..=increments.len()).map(|i| i as f64 * dt).collect();
    Ok(SimulationPath {
        dt,
        scheme: InnovationScheme::LeftPoint,
        times,
        states,
        observations,
        increments: increments.to_vec(),
        innovations,
    })
}

/// The observation process `X(t_i) = L_U Z(t_i)` of a simulated path.
pub fn observe(sys: &CarmaSystem, path: &SimulationPath) -> Result<Vec<HVector>> {
    path.states
        .iter()
        .map(|z| Ok(sys.observe_flat(&z.to_flat())))
        .collect()
}

/// `S(u)` at the Simpson nodes `u_k = k h` via powers of `S(h)`.
fn semigroup_powers(
    evaluator: &SemigroupEvaluator,
    h: f64,
    panels: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let step = evaluator.evaluate(h)?;
    let n = step.matrix().nrows();
    let mut out = Vec::with_capacity(panels + 1);
    let mut cur = DMatrix::identity(n, n);
    out.push(cur.clone());
    for _ in 0..panels {
        cur = step.matrix() * &cur;
        out.push(cur.clone());
    }
    Ok(out)
}

/// `int_0^upper (left S(u) P_p*) Q (left S(u) P_p*)* du` by composite
/// Simpson; `left` maps the state space into the result space.
pub(crate) fn operator_covariance_integral(
    sys: &CarmaSystem,
    left: &LinearMap,
    upper: f64,
    panels: usize,
) -> Result<LinearMap> {
    let layout = sys.companion.layout();
    let p = sys.order();
    let inj = injection_map(&layout, p)?;
    let q = sys.noise.total_covariance().operator();
    let powers = semigroup_powers(&sys.semigroup, upper / panels as f64, panels)?;
    let h = upper / panels as f64;
    let codomain = left.codomain().clone();
    let mut sum = DMatrix::zeros(codomain.total_dim(), codomain.total_dim());
    for (k, s_k) in powers.iter().enumerate() {
        let weight = if k == 0 || k == panels {
            1.0 / 3.0
        } else if k % 2 == 1 {
            4.0 / 3.0
        } else {
            2.0 / 3.0
        };
        let f = LinearMap::new(
            inj.domain().clone(),
            codomain.clone(),
            left.matrix() * s_k * inj.matrix(),
        )?;
        let term = f.compose(&q)?.compose(&f.adjoint())?;
        sum += term.matrix() * weight;
    }
    LinearMap::new(codomain.clone(), codomain, sum * h)
}

/// Conditional law of `X(t)` given the path up to `s` (pure Wiener noise).
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    pub mean: HVector,
    pub covariance: LinearMap,
}

/// Gaussian conditional law: mean `L_U S(t-s) Z(s)` from the realized state,
/// covariance `int_0^{t-s} L_U S(u) P_p* Q P_p S*(u) L_U* du`.
pub fn conditional_law(
    sys: &CarmaSystem,
    path: &SimulationPath,
    s: f64,
    t: f64,
) -> Result<ConditionalLaw> {
    if !sys.noise.is_gaussian() {
        return Err(Error::Unsupported(
            "conditional law is Gaussian only for pure Wiener noise".into(),
        ));
    }
    if t < s {
        return Err(Error::InvalidArgument(format!("t = {t} < s = {s}")));
    }
    let j = path.grid_index(s)?;
    let z_s = path.states[j].to_flat();
    let s_fwd = sys.semigroup.evaluate(t - s)?;
    let mean = sys.observe_flat(&(s_fwd.matrix() * z_s));

    let u_layout = sys.observation.codomain().clone();
    let covariance = if t == s {
        LinearMap::zero(u_layout.clone(), u_layout)
    } else {
        let panels = panel_count(t - s, sys.semigroup.quadrature_nodes(), 4);
        operator_covariance_integral(sys, &sys.observation, t - s, panels)?
    };
    Ok(ConditionalLaw { mean, covariance })
}

/// Horizon at which the stationary-covariance tail bound
/// `K^2 e^{2 c h} trace(Q) / (2|c|)` drops below `tolerance`.
pub fn stationary_horizon(sys: &CarmaSystem, tolerance: f64) -> Result<f64> {
    let report = operators::stability_check(&sys.companion)?;
    if !report.stable {
        return Err(Error::Unstable {
            abscissa: report.spectral_abscissa,
        });
    }
    let c = report.spectral_abscissa;
    let trace: f64 = sys.noise.total_covariance_eigenvalues().iter().sum();
    if trace == 0.0 {
        return Ok(1.0 / c.abs());
    }
    // Aim at half the tolerance so the bound check passes with margin.
    let k = growth_constant(sys, c, 10.0 / c.abs())?;
    let h = (k * k * trace / (c.abs() * tolerance)).ln() / (2.0 * c.abs());
    Ok(h.max(1.0 / c.abs()))
}

fn growth_constant(sys: &CarmaSystem, c: f64, horizon: f64) -> Result<f64> {
    let mut k: f64 = 1.0;
    for i in 1..=8 {
        let u = horizon * i as f64 / 8.0;
        let s = sys.semigroup.evaluate(u)?;
        k = k.max(linalg::op_norm(s.matrix()) * (-c * u).exp());
    }
    Ok(k)
}

/// The stationary covariance operator of `X`, i.e. the improper integral
/// `int_0^inf L_U S(u) P_p* Q P_p S*(u) L_U* du` truncated at `horizon`.
///
/// Refuses when the system is not exponentially stable, or when the tail
/// bound at `horizon` exceeds `tolerance` (use [`stationary_horizon`]).
pub fn stationary_covariance(
    sys: &CarmaSystem,
    horizon: f64,
    tolerance: f64,
) -> Result<LinearMap> {
    let report = operators::stability_check(&sys.companion)?;
    if !report.stable {
        return Err(Error::Unstable {
            abscissa: report.spectral_abscissa,
        });
    }
    let c = report.spectral_abscissa;
    let trace: f64 = sys.noise.total_covariance_eigenvalues().iter().sum();
    let k = growth_constant(sys, c, horizon)?;
    let tail = k * k * (2.0 * c * horizon).exp() * trace / (2.0 * c.abs());
    if tail > tolerance {
        return Err(Error::Numerical(format!(
            "tail bound {tail:.3e} exceeds tolerance {tolerance:.3e} at horizon {horizon}; \
             extend the horizon to at least {:.3}",
            stationary_horizon(sys, tolerance)?
        )));
    }
    let panels = panel_count(horizon, sys.semigroup.quadrature_nodes(), 4);
    operator_covariance_integral(sys, &sys.observation, horizon, panels)
}

/// Conditional characteristic functional `E[exp(i <X(t), x>_U) | F_s]`:
///
/// ```text
/// exp( i <L_U S(t) Z_0, x> + int_0^{t-s} psi_L(P_p S*(u) L_U* x) du )
///   * exp( i <int_0^s L_U S(t-u) P_p* dL(u), x> )
/// ```
///
/// The stochastic term is replayed from the realized path through the exact
/// factorization `int_0^s S(t-u) P_p* dL(u) = S(t-s) (Z(s) - S(s) Z_0)`;
/// `path` may be omitted when `s = 0`.
pub fn char_functional(
    sys: &CarmaSystem,
    path: Option<&SimulationPath>,
    s: f64,
    t: f64,
    x: &HVector,
) -> Result<Complex64> {
    if s < 0.0 || t < s {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= s <= t, got s = {s}, t = {t}"
        )));
    }
    if x.space() != sys.observation_space() {
        return Err(Error::SpaceMismatch(
            "probe vector is not in the observation space".into(),
        ));
    }
    let layout = sys.companion.layout();
    let p = sys.order();
    let g = layout.gram_diagonal();

    // Deterministic phase i <L_U S(t) Z_0, x>.
    let s_t = sys.semigroup.evaluate(t)?;
    let mean0 = sys.observe_flat(&(s_t.matrix() * sys.z0.to_flat()));
    let mut phase = crate::space::inner(&mean0, x)?;

    // y = L_U* x, then per node h(u) = P_p S*(u) y computed as
    // S*(u) y = G^{-1} S(u)^T (G y).
    let y = sys.observation.adjoint().matrix() * x.coords();
    let gy = g.component_mul(&y);
    let noise_space = sys.noise.space().clone();
    let offset = layout.component_offset(p)?;
    let psi_at = |s_mat: &DMatrix<f64>| -> Result<Complex64> {
        let mut v = s_mat.transpose() * &gy;
        for i in 0..v.len() {
            v[i] /= g[i];
        }
        let h_u = HVector::new(noise_space.clone(), v.rows(offset, noise_space.dim()).into_owned())?;
        sys.noise.char_exponent(&h_u)
    };

    let horizon = t - s;
    let integral = if horizon == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        let panels = panel_count(horizon, sys.semigroup.quadrature_nodes(), 4);
        let powers = semigroup_powers(&sys.semigroup, horizon / panels as f64, panels)?;
        let values: Vec<Complex64> = powers
            .iter()
            .map(psi_at)
            .collect::<Result<_>>()?;
        let mut idx = 0;
        integrate_complex(
            |_| {
                let v = values[idx.min(panels)];
                idx += 1;
                v
            },
            0.0,
            horizon,
            panels,
        )
    };

    // Realized stochastic phase for s > 0.
    if s > 0.0 {
        let path = path.ok_or_else(|| {
            Error::InvalidArgument("conditioning on s > 0 requires a realized path".into())
        })?;
        let j = path.grid_index(s)?;
        let s_s = sys.semigroup.evaluate(s)?;
        let stochastic = path.states[j].to_flat() - s_s.matrix() * sys.z0.to_flat();
        let s_fwd = sys.semigroup.evaluate(t - s)?;
        let replayed = sys.observe_flat(&(s_fwd.matrix() * stochastic));
        phase += crate::space::inner(&replayed, x)?;
    }

    Ok((Complex64::new(0.0, phase) + integral).exp())
}

/// Pathwise residuals of the semimartingale representation of a CAR(p)
/// observation for `p > 1`.
#[derive(Debug, Clone)]
pub struct SemimartingaleReport {
    /// `max_i | X_rebuilt(t_i) - X(t_i) |_1` with the rebuilt observation
    /// `P_1 S(t) Z_0 + P_1 C_p int_0^t int_0^u S(u-r) P_p* dL(r) du`
    /// (inner integral replayed left-point, outer by trapezoid).
    pub rebuild_max_deviation: f64,
    /// Relative deviation of `X'(t) = P_1 C_p [S(t) Z_0 + int_0^t S(t-r) P_p* dL(r)]`
    /// from the central difference of the simulated observation.
    pub derivative_max_rel_error: f64,
}

/// Check the double-integral representation and the derivative formula on a
/// recorded left-point path. Requires `p > 1` and the CAR observation.
pub fn semimartingale_check(
    sys: &CarmaSystem,
    path: &SimulationPath,
) -> Result<SemimartingaleReport> {
    if sys.order() == 1 {
        return Err(Error::Unsupported(
            "p = 1: Ornstein-Uhlenbeck paths are not differentiable".into(),
        ));
    }
    if !sys.is_car() {
        return Err(Error::Unsupported(
            "semimartingale check requires the CAR observation P_1".into(),
        ));
    }
    if path.scheme != InnovationScheme::LeftPoint {
        return Err(Error::Unsupported(
            "semimartingale check replays recorded increments (left-point scheme)".into(),
        ));
    }

    let layout = sys.companion.layout();
    let p = sys.order();
    let dt = path.dt;
    let s_dt = sys.semigroup.evaluate(dt)?;
    let s_mat = s_dt.matrix();
    let inj = injection_map(&layout, p)?;
    let p1 = projection_map(&layout, 1)?;
    let p1c = p1.compose(sys.companion.assembled())?;
    let h1 = sys.observation_space().clone();

    let n = layout.total_dim();
    let mut stoch = DVector::zeros(n); // int_0^{t_k} S(t_k - r) P_p* dL(r), replayed
    let mut det = sys.z0.to_flat(); // S(t_k) Z_0
    let mut trap = DVector::zeros(n); // trapezoid prefix of the stochastic integral
    let mut rebuild_max: f64 = 0.0;
    let mut deriv_num: f64 = 0.0;
    let mut deriv_den: f64 = 0.0;

    let steps = path.steps();
    let mut derivative = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            let prev = stoch.clone();
            let fed = &prev + inj.matrix() * path.increments[k - 1].coords();
            stoch = s_mat * fed;
            det = s_mat * &det;
            trap += (&prev + &stoch) * (dt / 2.0);
        }
        let rebuilt = p1.matrix() * &det + p1c.matrix() * &trap;
        let diff = HVector::new(h1.clone(), &rebuilt - path.observations[k].coords())?;
        rebuild_max = rebuild_max.max(diff.norm());
        let d = p1c.matrix() * (&det + &stoch);
        derivative.push(HVector::new(h1.clone(), d)?);
    }
    for k in 1..steps {
        let fd = (path.observations[k + 1].coords() - path.observations[k - 1].coords())
            / (2.0 * dt);
        let diff = HVector::new(h1.clone(), &fd - derivative[k].coords())?;
        deriv_num = deriv_num.max(diff.norm());
        deriv_den = deriv_den.max(derivative[k].norm());
    }

    Ok(SemimartingaleReport {
        rebuild_max_deviation: rebuild_max,
        derivative_max_rel_error: if deriv_den > 0.0 {
            deriv_num / deriv_den
        } else {
            deriv_num
        },
    })
}

/// The wave solution by its mode-wise ambit form with `Z_0 = 0`:
/// coefficient `n` of `X(t_j)` is the left-point convolution
/// `sum_{i<j} sin(pi n (t_j - t_i)) dl_{n,i} / (pi n)`.
pub fn wave_exact_modewise_from_increments(
    n_modes: usize,
    increments: &[HVector],
    dt: f64,
) -> Result<Vec<HVector>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step length must be positive, got {dt}"
        )));
    }
    if let Some(first) = increments.first()
        && first.space().dim() != n_modes
    {
        return Err(Error::DimensionMismatch(format!(
            "increments have {} modes, expected {n_modes}",
            first.space().dim()
        )));
    }
    let steps = increments.len();
    let h1 = SpaceSpec::wave_h1(n_modes);
    // sin(pi n k dt) tables per mode.
    let sines: Vec<Vec<f64>> = (1..=n_modes)
        .map(|n| {
            let omega = std::f64::consts::PI * n as f64;
            (0..=steps).map(|k| (omega * k as f64 * dt).sin()).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let coords = DVector::from_fn(n_modes, |m, _| {
            let omega = std::f64::consts::PI * (m + 1) as f64;
            let mut acc = 0.0;
            for i in 0..j {
                acc += sines[m][j - i] * increments[i].coords()[m];
            }
            acc / omega
        });
        out.push(HVector::new(h1.clone(), coords)?);
    }
    Ok(out)
}

/// Same as [`wave_exact_modewise_from_increments`] but sampling the
/// increments from the noise model, in the same order as `simulate_path`.
pub fn wave_exact_modewise(
    n_modes: usize,
    noise: &LevyModel,
    t_final: f64,
    dt: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<HVector>> {
    let steps = (t_final / dt).round() as usize;
    let increments: Vec<HVector> = (0..steps)
        .map(|_| noise.sample_increment(dt, rng))
        .collect::<Result<_>>()?;
    wave_exact_modewise_from_increments(n_modes, &increments, dt)
}
