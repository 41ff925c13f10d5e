//! Zero-mean square-integrable Levy noise in the component space `H_p`.
//!
//! A [`LevyModel`] combines an optional Q-Wiener part, whose trace-class
//! covariance acts diagonally on the basis, with an optional compensated
//! compound-Poisson part whose jumps have centered per-mode laws (symmetric
//! two-point or Gaussian). Both pieces have closed-form characteristic
//! exponents, so every sampled statistic can be checked against
//!
//! ```text
//! log E[exp(i <h, L(t)>)] = t psi_L(h),
//! psi_L(h) = -1/2 <Q h, h> + lambda (E[exp(i <h, J>)] - 1).
//! ```
//!
//! Sampling is a pure function of `(model, delta, rng state)`; ensembles give
//! path `i` the seed `base_seed + i`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::space::{HVector, LinearMap, SpaceLayout, SpaceSpec, inner};

/// Trace-class covariance operator acting diagonally on the basis:
/// `Q e_n = q_n e_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    space: SpaceSpec,
    eigenvalues: Vec<f64>,
}

impl CovarianceSpec {
    pub fn new(space: SpaceSpec, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariance eigenvalues for space of dim {}",
                eigenvalues.len(),
                space.dim()
            )));
        }
        if !eigenvalues.iter().all(|q| q.is_finite() && *q >= 0.0) {
            return Err(Error::InvalidArgument(
                "covariance eigenvalues must be finite and >= 0".into(),
            ));
        }
        Ok(Self { space, eigenvalues })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// The covariance as a diagonal operator on its space.
    pub fn operator(&self) -> LinearMap {
        let layout = SpaceLayout::single(self.space.clone());
        LinearMap::new(
            layout.clone(),
            layout,
            nalgebra::DMatrix::from_diagonal(&DVector::from_row_slice(&self.eigenvalues)),
        )
        .expect("square diagonal")
    }
}

/// Centered per-mode jump law; modes jump independently at each event.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    /// Mode `n` jumps by `+a_n` or `-a_n` with equal probability.
    TwoPoint { magnitudes: Vec<f64> },
    /// Mode `n` jumps by a centered Gaussian with the given standard deviation.
    Gaussian { std_devs: Vec<f64> },
}

impl JumpLaw {
    fn mode_count(&self) -> usize {
        match self {
            JumpLaw::TwoPoint { magnitudes } => magnitudes.len(),
            JumpLaw::Gaussian { std_devs } => std_devs.len(),
        }
    }

    /// Per-mode variances `v_n` of a single jump.
    pub fn mode_variances(&self) -> Vec<f64> {
        match self {
            JumpLaw::TwoPoint { magnitudes } => magnitudes.iter().map(|a| a * a).collect(),
            JumpLaw::Gaussian { std_devs } => std_devs.iter().map(|s| s * s).collect(),
        }
    }

    /// Scalar characteristic function of the mode-`n` jump coordinate.
    fn mode_char(&self, n: usize, s: f64) -> f64 {
        match self {
            JumpLaw::TwoPoint { magnitudes } => (magnitudes[n] * s).cos(),
            JumpLaw::Gaussian { std_devs } => (-0.5 * (std_devs[n] * s).powi(2)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    pub rate: f64,
    pub law: JumpLaw,
}

/// Zero-mean square-integrable Levy model on a single space.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    space: SpaceSpec,
    wiener: Option<CovarianceSpec>,
    jumps: Option<JumpSpec>,
    base_seed: u64,
}

impl LevyModel {
    pub fn new(
        space: SpaceSpec,
        wiener: Option<CovarianceSpec>,
        jumps: Option<JumpSpec>,
        base_seed: u64,
    ) -> Result<Self> {
        if let Some(w) = &wiener
            && w.space() != &space
        {
            return Err(Error::SpaceMismatch(
                "Wiener covariance lives in a different space".into(),
            ));
        }
        if let Some(j) = &jumps {
            if !j.rate.is_finite() || j.rate <= 0.0 {
                return Err(Error::InvalidArgument(
                    "jump rate must be finite and > 0".into(),
                ));
            }
            if j.law.mode_count() != space.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{} jump modes for space of dim {}",
                    j.law.mode_count(),
                    space.dim()
                )));
            }
        }
        Ok(Self {
            space,
            wiener,
            jumps,
            base_seed,
        })
    }

    /// Pure Q-Wiener model.
    pub fn wiener_only(covariance: CovarianceSpec, base_seed: u64) -> Self {
        let space = covariance.space().clone();
        Self {
            space,
            wiener: Some(covariance),
            jumps: None,
            base_seed,
        }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn wiener(&self) -> Option<&CovarianceSpec> {
        self.wiener.as_ref()
    }

    pub fn jumps(&self) -> Option<&JumpSpec> {
        self.jumps.as_ref()
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn is_gaussian(&self) -> bool {
        self.jumps.is_none()
    }

    /// RNG for ensemble path `i`, seeded `base_seed + i`.
    pub fn rng_for_path(&self, path_index: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.base_seed.wrapping_add(path_index))
    }

    /// Diagonal of the covariance operator of `L(1)`: `q_n + lambda v_n`.
    pub fn total_covariance_eigenvalues(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.space.dim()];
        if let Some(w) = &self.wiener {
            for (d, q) in diag.iter_mut().zip(w.eigenvalues()) {
                *d += q;
            }
        }
        if let Some(j) = &self.jumps {
            for (d, v) in diag.iter_mut().zip(j.law.mode_variances()) {
                *d += j.rate * v;
            }
        }
        diag
    }

    /// Covariance operator of `L(1)` as a diagonal map on the noise space.
    pub fn total_covariance(&self) -> CovarianceSpec {
        CovarianceSpec::new(self.space.clone(), self.total_covariance_eigenvalues())
            .expect("eigenvalues non-negative by construction")
    }

    /// One independent draw of `L(delta)`.
    ///
    /// The Gaussian part draws each coordinate with variance `q_n delta / w_n`
    /// (the weight makes `E <L(delta), h>^2 = delta <Q h, h>` hold in weighted
    /// spaces; weights are 1 in the orthonormal case). Jumps arrive as a
    /// Poisson(lambda delta) number of events, each drawing every mode from
    /// its centered law.
    pub fn sample_increment(&self, delta: f64, rng: &mut ChaCha12Rng) -> Result<HVector> {
        let coords = self.sample_increment_coords(delta, rng)?;
        HVector::new(self.space.clone(), coords)
    }

    /// [`Self::sample_increment`] returning bare coordinates; the hot path
    /// for large ensembles.
    pub fn sample_increment_coords(
        &self,
        delta: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<DVector<f64>> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "increment length must be positive, got {delta}"
            )));
        }
        let dim = self.space.dim();
        let mut coords = DVector::zeros(dim);
        if let Some(w) = &self.wiener {
            for n in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                let var = w.eigenvalues()[n] * delta / self.space.weights()[n];
                coords[n] += var.sqrt() * z;
            }
        }
        if let Some(j) = &self.jumps {
            let mean = j.rate * delta;
            let events = Poisson::new(mean)
                .map_err(|e| Error::InvalidArgument(format!("Poisson({mean}): {e}")))?;
            let count: f64 = events.sample(rng);
            for _ in 0..count.round() as u64 {
                match &j.law {
                    JumpLaw::TwoPoint { magnitudes } => {
                        for n in 0..dim {
                            let sign: bool = rand::RngExt::random(rng);
                            coords[n] += if sign { magnitudes[n] } else { -magnitudes[n] };
                        }
                    }
                    JumpLaw::Gaussian { std_devs } => {
                        for n in 0..dim {
                            let z: f64 = StandardNormal.sample(rng);
                            coords[n] += std_devs[n] * z;
                        }
                    }
                }
            }
        }
        Ok(coords)
    }

    /// The characteristic exponent `psi_L(h)`, so that
    /// `E[exp(i <h, L(t)>)] = exp(t psi_L(h))`.
    pub fn char_exponent(&self, h: &HVector) -> Result<Complex64> {
        if h.space() != &self.space {
            return Err(Error::SpaceMismatch(
                "characteristic exponent argument in a different space".into(),
            ));
        }
        let mut psi = 0.0;
        if let Some(w) = &self.wiener {
            let q_h = w.operator().apply(h)?;
            psi += -0.5 * inner(&q_h, h)?;
        }
        if let Some(j) = &self.jumps {
            // E[exp(i <h, J>)] factorizes over independent modes; each factor
            // is the scalar characteristic function at <h, e_n> = w_n h_n.
            let mut cf = 1.0;
            for n in 0..self.space.dim() {
                let s = self.space.weights()[n] * h.coords()[n];
                cf *= j.law.mode_char(n, s);
            }
            psi += j.rate * (cf - 1.0);
        }
        Ok(Complex64::new(psi, 0.0))
    }
}

/// Coordinate paths `l_n(t_i) = <L(t_i), e_n>_2` of a recorded trajectory,
/// one scalar path per mode.
pub fn mode_decompose(path: &[HVector]) -> Vec<Vec<f64>> {
    if path.is_empty() {
        return Vec::new();
    }
    let dim = path[0].space().dim();
    (0..dim)
        .map(|n| path.iter().map(|v| v.coords()[n]).collect())
        .collect()
}

/// Rebuild the trajectory from its mode paths; exact in a finite basis.
pub fn mode_reconstruct(space: &SpaceSpec, modes: &[Vec<f64>]) -> Result<Vec<HVector>> {
    if modes.len() != space.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} mode paths for space of dim {}",
            modes.len(),
            space.dim()
        )));
    }
    let steps = modes.first().map_or(0, Vec::len);
    if modes.iter().any(|m| m.len() != steps) {
        return Err(Error::DimensionMismatch(
            "mode paths of different lengths".into(),
        ));
    }
    (0..steps)
        .map(|i| {
            let coords = DVector::from_fn(space.dim(), |n, _| modes[n][i]);
            HVector::new(space.clone(), coords)
        })
        .collect()
}
