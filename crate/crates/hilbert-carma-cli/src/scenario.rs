//! The scenario file format and its translation into a runnable system.
//!
//! A scenario is one self-describing TOML document. Operator blocks are given
//! either as named constructors (`"identity"`, `"zero"`, `"laplacian_sine"`,
//! `"scaled_identity:<c>"`, `"dense:<rows>"`) or as inline dense matrices;
//! the named constructors cover every configuration used by the canonical
//! systems, dense blocks cover the rest.

use serde::{Deserialize, Serialize};

use hilbert_carma::carma::{CarmaSystem, InnovationScheme};
use hilbert_carma::noise::{CovarianceSpec, JumpLaw, JumpSpec, LevyModel};
use hilbert_carma::operators::{
    CompanionSystem, identity_between, laplacian_sine, scaled_identity, zero_block,
};
use hilbert_carma::semigroup::SemigroupMethod;
use hilbert_carma::space::{
    BasisKind, LinearMap, ProductVector, SpaceLayout, SpaceSpec, projection_map,
};
use nalgebra::DMatrix;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub spaces: Vec<SpaceEntry>,
    pub companion: CompanionEntry,
    pub noise: NoiseEntry,
    #[serde(default = "default_observation")]
    pub observation: String,
    pub run: RunEntry,
}

fn default_observation() -> String {
    "P1".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceEntry {
    pub label: String,
    pub dim: usize,
    #[serde(default)]
    pub weights: Option<WeightsEntry>,
    #[serde(default)]
    pub basis_kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsEntry {
    /// `"ones"` or `"wave_h1"` (the `pi^2 n^2` wave weights).
    Named(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanionEntry {
    /// `A_1 .. A_p`.
    pub a_blocks: Vec<BlockEntry>,
    /// `I_2 .. I_p`; empty for p = 1.
    #[serde(default)]
    pub i_blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockEntry {
    Named(String),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    /// Diagonal covariance spectrum of the Q-Wiener part; omitted = none.
    #[serde(default)]
    pub covariance: Option<Vec<f64>>,
    #[serde(default)]
    pub jumps: Option<JumpsEntry>,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsEntry {
    pub rate: f64,
    /// `"two_point"` or `"gaussian"`.
    pub law: String,
    /// Per-mode magnitudes (two-point) or standard deviations (gaussian).
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_paths")]
    pub paths: u64,
    /// Innovation scheme: `"a"` (left-point) or `"b"` (exact Gaussian).
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: u32,
    #[serde(default = "default_series_terms")]
    pub series_terms: usize,
    #[serde(default)]
    pub burn_in: f64,
    /// Semigroup method: `"matrix_exponential"`, `"recursive_series"`,
    /// `"wave_closed_form"`.
    #[serde(default = "default_method")]
    pub method: String,
}

fn default_paths() -> u64 {
    1
}

fn default_scheme() -> String {
    "a".to_string()
}

fn default_quadrature_nodes() -> u32 {
    hilbert_carma::semigroup::DEFAULT_QUADRATURE_NODES
}

fn default_series_terms() -> usize {
    hilbert_carma::semigroup::DEFAULT_SERIES_TERMS
}

fn default_method() -> String {
    "matrix_exponential".to_string()
}

/// A scenario validated into runnable pieces.
pub struct BuiltScenario {
    pub system: CarmaSystem,
    pub scheme: InnovationScheme,
    pub steps: usize,
    pub burn_in_steps: usize,
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {msg}"))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("scenario: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("scenario: {e}")))
    }

    /// Validate and assemble the scenario; every failure names the field.
    pub fn build(&self, seed_override: Option<u64>) -> Result<BuiltScenario, CliError> {
        let spaces = self.build_spaces()?;
        let companion = self.build_companion(&spaces)?;
        let noise = self.build_noise(&spaces, seed_override)?;
        let observation = self.build_observation(&companion)?;
        let method = match self.run.method.as_str() {
            "matrix_exponential" => SemigroupMethod::MatrixExponential,
            "recursive_series" => SemigroupMethod::RecursiveSeries,
            "wave_closed_form" => SemigroupMethod::WaveClosedForm,
            other => return Err(invalid("run.method", format!("unknown method {other:?}"))),
        };
        let scheme = match self.run.scheme.as_str() {
            "a" => InnovationScheme::LeftPoint,
            "b" => InnovationScheme::ExactGaussian,
            other => return Err(invalid("run.scheme", format!("unknown scheme {other:?}"))),
        };
        if !(self.run.dt > 0.0) || !self.run.dt.is_finite() {
            return Err(invalid("run.dt", "must be positive and finite"));
        }
        if !(self.run.t_final >= self.run.dt) {
            return Err(invalid("run.t_final", "must be at least one step long"));
        }
        if self.run.burn_in < 0.0 {
            return Err(invalid("run.burn_in", "must be non-negative"));
        }
        if self.run.paths == 0 {
            return Err(invalid("run.paths", "must be at least 1"));
        }
        let steps = (self.run.t_final / self.run.dt).round().max(1.0) as usize;
        let burn_in_steps = (self.run.burn_in / self.run.dt).ceil() as usize;

        let z0 = ProductVector::zero(&companion.layout());
        let system = CarmaSystem::new(companion, noise, observation, z0, method)
            .map_err(CliError::from)?
            .with_quadrature_nodes(self.run.quadrature_nodes)
            .with_series_terms(self.run.series_terms);
        Ok(BuiltScenario {
            system,
            scheme,
            steps,
            burn_in_steps,
        })
    }

    fn build_spaces(&self) -> Result<Vec<SpaceSpec>, CliError> {
        if self.spaces.is_empty() {
            return Err(invalid("spaces", "need at least one space"));
        }
        self.spaces
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let path = format!("spaces[{i}]");
                if entry.dim == 0 {
                    return Err(invalid(&format!("{path}.dim"), "must be at least 1"));
                }
                let basis_kind = match entry.basis_kind.as_deref() {
                    None | Some("abstract") => BasisKind::Abstract,
                    Some("sine_on_unit_interval") => BasisKind::SineOnUnitInterval,
                    Some(other) => {
                        return Err(invalid(
                            &format!("{path}.basis_kind"),
                            format!("unknown basis {other:?}"),
                        ));
                    }
                };
                let weights = match &entry.weights {
                    None => vec![1.0; entry.dim],
                    Some(WeightsEntry::Named(name)) => match name.as_str() {
                        "ones" => vec![1.0; entry.dim],
                        "wave_h1" => (1..=entry.dim)
                            .map(|n| (std::f64::consts::PI * n as f64).powi(2))
                            .collect(),
                        other => {
                            return Err(invalid(
                                &format!("{path}.weights"),
                                format!("unknown weight family {other:?}"),
                            ));
                        }
                    },
                    Some(WeightsEntry::List(list)) => list.clone(),
                };
                SpaceSpec::new(entry.label.clone(), entry.dim, weights, basis_kind)
                    .map_err(|e| invalid(&path, e))
            })
            .collect()
    }

    fn build_companion(&self, spaces: &[SpaceSpec]) -> Result<CompanionSystem, CliError> {
        let p = spaces.len();
        if self.companion.a_blocks.len() != p {
            return Err(invalid(
                "companion.a_blocks",
                format!("expected {p} blocks A_1..A_{p}, got {}", self.companion.a_blocks.len()),
            ));
        }
        if self.companion.i_blocks.len() + 1 != p {
            return Err(invalid(
                "companion.i_blocks",
                format!(
                    "expected {} blocks I_2..I_{p}, got {}",
                    p - 1,
                    self.companion.i_blocks.len()
                ),
            ));
        }
        let a_blocks = self
            .companion
            .a_blocks
            .iter()
            .enumerate()
            .map(|(idx, entry)| {
                let i = idx + 1;
                build_block(
                    entry,
                    &spaces[p - i],
                    &spaces[p - 1],
                    &format!("companion.a_blocks[{idx}]"),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let i_blocks = self
            .companion
            .i_blocks
            .iter()
            .enumerate()
            .map(|(idx, entry)| {
                let i = idx + 2;
                build_block(
                    entry,
                    &spaces[p + 1 - i],
                    &spaces[p - i],
                    &format!("companion.i_blocks[{idx}]"),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        CompanionSystem::assemble(spaces.to_vec(), a_blocks, i_blocks)
            .map_err(|e| invalid("companion", e))
    }

    fn build_noise(
        &self,
        spaces: &[SpaceSpec],
        seed_override: Option<u64>,
    ) -> Result<LevyModel, CliError> {
        let noise_space = spaces.last().expect("non-empty").clone();
        let wiener = match &self.noise.covariance {
            None => None,
            Some(eigenvalues) => Some(
                CovarianceSpec::new(noise_space.clone(), eigenvalues.clone())
                    .map_err(|e| invalid("noise.covariance", e))?,
            ),
        };
        let jumps = match &self.noise.jumps {
            None => None,
            Some(entry) => {
                let law = match entry.law.as_str() {
                    "two_point" => JumpLaw::TwoPoint {
                        magnitudes: entry.magnitudes.clone(),
                    },
                    "gaussian" => JumpLaw::Gaussian {
                        std_devs: entry.magnitudes.clone(),
                    },
                    other => {
                        return Err(invalid(
                            "noise.jumps.law",
                            format!("unknown law {other:?}"),
                        ));
                    }
                };
                Some(JumpSpec {
                    rate: entry.rate,
                    law,
                })
            }
        };
        let seed = seed_override.unwrap_or(self.noise.base_seed);
        LevyModel::new(noise_space, wiener, jumps, seed).map_err(|e| invalid("noise", e))
    }

    fn build_observation(&self, companion: &CompanionSystem) -> Result<LinearMap, CliError> {
        let layout = companion.layout();
        let total = layout.total_dim();
        let text = self.observation.as_str();
        if text == "P1" {
            return projection_map(&layout, 1).map_err(|e| invalid("observation", e));
        }
        if let Some(coeffs) = text.strip_prefix("vector:") {
            let coeffs = parse_number_list(coeffs)
                .map_err(|e| invalid("observation", format!("vector coefficients: {e}")))?;
            if coeffs.len() != total {
                return Err(invalid(
                    "observation",
                    format!("vector has {} coefficients, state dim is {total}", coeffs.len()),
                ));
            }
            let u = SpaceSpec::orthonormal("U", 1);
            return LinearMap::new(
                layout,
                SpaceLayout::single(u),
                DMatrix::from_row_slice(1, total, &coeffs),
            )
            .map_err(|e| invalid("observation", e));
        }
        if let Some(json) = text.strip_prefix("dense:") {
            let rows = parse_dense_rows(json).map_err(|e| invalid("observation", e))?;
            let m = dense_to_matrix(&rows, total, "observation")?;
            let u = SpaceSpec::orthonormal("U", m.nrows());
            return LinearMap::new(layout, SpaceLayout::single(u), m)
                .map_err(|e| invalid("observation", e));
        }
        Err(invalid(
            "observation",
            format!("expected \"P1\", \"vector:<coeffs>\" or \"dense:<rows>\", got {text:?}"),
        ))
    }

    /// Innovation scheme named in the run block.
    pub fn scheme_label(&self) -> &str {
        &self.run.scheme
    }
}

fn parse_number_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|part| part.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_dense_rows(json: &str) -> Result<Vec<Vec<f64>>, String> {
    serde_json::from_str::<Vec<Vec<f64>>>(json.trim())
        .map_err(|e| format!("dense rows must be a JSON array of arrays: {e}"))
}

fn dense_to_matrix(
    rows: &[Vec<f64>],
    expected_cols: usize,
    path: &str,
) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(invalid(path, "dense block has no rows"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(invalid(path, "dense rows have different lengths"));
    }
    if cols != expected_cols {
        return Err(invalid(
            path,
            format!("dense block has {cols} columns, expected {expected_cols}"),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn build_block(
    entry: &BlockEntry,
    domain: &SpaceSpec,
    codomain: &SpaceSpec,
    path: &str,
) -> Result<LinearMap, CliError> {
    match entry {
        BlockEntry::Dense(rows) => {
            let m = dense_to_matrix(rows, domain.dim(), path)?;
            if m.nrows() != codomain.dim() {
                return Err(invalid(
                    path,
                    format!(
                        "dense block has {} rows, codomain {} has dim {}",
                        m.nrows(),
                        codomain.label(),
                        codomain.dim()
                    ),
                ));
            }
            LinearMap::new(
                SpaceLayout::single(domain.clone()),
                SpaceLayout::single(codomain.clone()),
                m,
            )
            .map_err(|e| invalid(path, e))
        }
        BlockEntry::Named(name) => {
            if name == "identity" {
                return identity_between(domain, codomain).map_err(|e| invalid(path, e));
            }
            if name == "zero" {
                return Ok(zero_block(domain, codomain));
            }
            if name == "laplacian_sine" {
                return laplacian_sine(domain, codomain).map_err(|e| invalid(path, e));
            }
            if let Some(c) = name.strip_prefix("scaled_identity:") {
                let factor = c
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(path, format!("scale factor: {e}")))?;
                return scaled_identity(domain, codomain, factor).map_err(|e| invalid(path, e));
            }
            if let Some(json) = name.strip_prefix("dense:") {
                let rows = parse_dense_rows(json).map_err(|e| invalid(path, e))?;
                return build_block(&BlockEntry::Dense(rows), domain, codomain, path);
            }
            if let Some(d) = name.strip_prefix("diagonal:") {
                let diag =
                    parse_number_list(d).map_err(|e| invalid(path, format!("diagonal: {e}")))?;
                if domain.dim() != codomain.dim() || diag.len() != domain.dim() {
                    return Err(invalid(path, "diagonal length must match the block size"));
                }
                let m = DMatrix::from_fn(diag.len(), diag.len(), |i, j| {
                    if i == j { diag[i] } else { 0.0 }
                });
                return LinearMap::new(
                    SpaceLayout::single(domain.clone()),
                    SpaceLayout::single(codomain.clone()),
                    m,
                )
                .map_err(|e| invalid(path, e));
            }
            Err(invalid(
                path,
                format!(
                    "unknown block constructor {name:?}; expected identity, zero, \
                     laplacian_sine, scaled_identity:<c>, diagonal:<d1,..>, dense:<rows>"
                ),
            ))
        }
    }
}

/// Canonical wave scenario text, used by tests and as a README example.
pub fn wave_scenario_toml(n_modes: usize, dt: f64, t_final: f64, paths: u64, seed: u64) -> String {
    let q: Vec<String> = (1..=n_modes)
        .map(|n| format!("{:.claim$}", 1.0 / (n * n) as f64, claim = 12))
        .collect();
    format!(
        r#"name = "wave-{n_modes}"
observation = "P1"

[[spaces]]
label = "H1"
dim = {n_modes}
basis_kind = "sine_on_unit_interval"
weights = "wave_h1"

[[spaces]]
label = "H2"
dim = {n_modes}
basis_kind = "sine_on_unit_interval"

[companion]
a_blocks = ["zero", "laplacian_sine"]
i_blocks = ["identity"]

[noise]
covariance = [{q}]
base_seed = {seed}

[run]
dt = {dt}
t_final = {t_final}
paths = {paths}
scheme = "a"
"#,
        q = q.join(", "),
    )
}

