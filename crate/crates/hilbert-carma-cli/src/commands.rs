//! The three subcommands: ensemble simulation, distributional analysis, and
//! the cross-method validation suite.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use hilbert_carma::carma::{
    self, CarmaSystem, InnovationScheme, replay_from_increments, simulate_path,
};
use hilbert_carma::discretize::{
    far_coefficients, far_simulate, forward_difference, innovation_covariance,
};
use hilbert_carma::error::Error;
use hilbert_carma::operators::{derive_b, stability_check};
use hilbert_carma::semigroup::{evaluate_recursive, is_wave_system, matrix_exponential};
use hilbert_carma::space::HVector;
use nalgebra::{DMatrix, DVector};

use crate::output::{atomic_write, fmt_sig17};
use crate::scenario::{BuiltScenario, Scenario};
use crate::CliError;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const STATIONARY_TOLERANCE: f64 = 1e-9;

fn read_scenario(path: &Path, seed: Option<u64>) -> Result<(Scenario, BuiltScenario, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let config_hash: String = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::Validation(format!("{}: not UTF-8: {e}", path.display())))?;
    let scenario = Scenario::parse(&text)?;
    let built = scenario.build(seed)?;
    Ok((scenario, built, config_hash))
}

fn in_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?
            .install(f),
    }
}

#[derive(Serialize)]
struct Manifest {
    scenario_name: String,
    config_hash: String,
    base_seed: u64,
    path_count: u64,
    tool_version: String,
    path_seeds: Vec<u64>,
}

/// Simulate the scenario's ensemble and write `simulation.csv` plus
/// `manifest.json`. Deterministic for a fixed seed: rerunning produces
/// byte-identical files.
pub fn cmd_simulate(
    scenario_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let (scenario, built, config_hash) = read_scenario(scenario_path, seed)?;
    let system = &built.system;
    let dt = scenario.run.dt;
    let total_steps = built.steps + built.burn_in_steps;
    let u_dim = system.observation_space().dim();

    let paths: Vec<String> = in_pool(threads, || {
        (0..scenario.run.paths)
            .into_par_iter()
            .map(|i| -> Result<String, CliError> {
                let mut rng = system.noise().rng_for_path(i);
                let path = simulate_path(system, dt, total_steps, &mut rng, built.scheme)?
                    .discard_initial(built.burn_in_steps);
                let mut rows = String::new();
                for (j, x) in path.observations().iter().enumerate() {
                    rows.push_str(&i.to_string());
                    rows.push(',');
                    rows.push_str(&fmt_sig17(j as f64 * dt));
                    for c in x.coords().iter() {
                        rows.push(',');
                        rows.push_str(&fmt_sig17(*c));
                    }
                    rows.push('\n');
                }
                Ok(rows)
            })
            .collect()
    })?;

    let mut csv = String::from("path_id,t");
    for k in 1..=u_dim {
        csv.push_str(&format!(",x_{k}"));
    }
    csv.push('\n');
    for rows in &paths {
        csv.push_str(rows);
    }

    let base_seed = seed.unwrap_or(scenario.noise.base_seed);
    let manifest = Manifest {
        scenario_name: scenario.name.clone(),
        config_hash,
        base_seed,
        path_count: scenario.run.paths,
        tool_version: TOOL_VERSION.to_string(),
        path_seeds: (0..scenario.run.paths)
            .map(|i| base_seed.wrapping_add(i))
            .collect(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Validation(format!("manifest: {e}")))?;

    atomic_write(&out_dir.join("simulation.csv"), csv.as_bytes())?;
    atomic_write(&out_dir.join("manifest.json"), manifest_json.as_bytes())?;
    println!(
        "simulate: {} paths x {} steps -> {}",
        scenario.run.paths,
        built.steps,
        out_dir.display()
    );
    Ok(())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Serialize)]
#[serde(tag = "status")]
enum StationaryBlock {
    #[serde(rename = "ok")]
    Ok { horizon: f64, matrix: Vec<Vec<f64>> },
    #[serde(rename = "unavailable")]
    Unavailable { reason: String },
}

#[derive(Serialize)]
struct ProbeValue {
    basis_index: usize,
    t: f64,
    value: [f64; 2],
}

#[derive(Serialize)]
struct AnalysisReport {
    scenario_name: String,
    order: usize,
    state_dim: usize,
    eigenvalues: Vec<[f64; 2]>,
    stable: bool,
    spectral_abscissa: f64,
    stationary_covariance: StationaryBlock,
    innovation_dt: f64,
    innovation_covariance: Vec<Vec<f64>>,
    char_functional_probes: Vec<ProbeValue>,
}

/// Write `analysis.json`: spectrum and stability of the generator, the
/// stationary covariance when it exists, the innovation covariance at the
/// run step, and characteristic-functional values at basis probes.
pub fn cmd_analyze(
    scenario_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    _threads: Option<usize>,
) -> Result<(), CliError> {
    let (scenario, built, _) = read_scenario(scenario_path, seed)?;
    let system = &built.system;

    let report = stability_check(system.companion()).map_err(CliError::from)?;
    let stationary = if report.stable {
        let horizon = carma::stationary_horizon(system, STATIONARY_TOLERANCE)?;
        match carma::stationary_covariance(system, horizon, STATIONARY_TOLERANCE) {
            Ok(cov) => StationaryBlock::Ok {
                horizon,
                matrix: matrix_rows(cov.matrix()),
            },
            Err(e) => StationaryBlock::Unavailable {
                reason: e.to_string(),
            },
        }
    } else {
        StationaryBlock::Unavailable {
            reason: format!(
                "system is not exponentially stable (spectral abscissa {:.6e})",
                report.spectral_abscissa
            ),
        }
    };

    let q_eps = innovation_covariance(system, scenario.run.dt)?;

    let u = system.observation_space().clone();
    let probes = u.dim().min(5);
    let mut probe_values = Vec::with_capacity(probes);
    for k in 1..=probes {
        let x = HVector::basis(u.clone(), k).map_err(CliError::from)?;
        let value = carma::char_functional(system, None, 0.0, scenario.run.t_final, &x)?;
        probe_values.push(ProbeValue {
            basis_index: k,
            t: scenario.run.t_final,
            value: [value.re, value.im],
        });
    }

    let analysis = AnalysisReport {
        scenario_name: scenario.name.clone(),
        order: system.order(),
        state_dim: system.companion().state_dim(),
        eigenvalues: report.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
        stable: report.stable,
        spectral_abscissa: report.spectral_abscissa,
        stationary_covariance: stationary,
        innovation_dt: scenario.run.dt,
        innovation_covariance: matrix_rows(q_eps.matrix()),
        char_functional_probes: probe_values,
    };
    let json = serde_json::to_string_pretty(&analysis)
        .map_err(|e| CliError::Validation(format!("analysis report: {e}")))?;
    atomic_write(&out_dir.join("analysis.json"), json.as_bytes())?;
    println!(
        "analyze: stable = {}, spectral abscissa = {:.6e} -> {}",
        report.stable,
        report.spectral_abscissa,
        out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

fn pass(name: &str, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        status: CheckStatus::Pass,
        detail,
    }
}

fn fail(name: &str, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        status: CheckStatus::Fail,
        detail,
    }
}

fn skipped(name: &str, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        status: CheckStatus::Skipped,
        detail,
    }
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Run the cross-oracle suite on the scenario's system and print one line
/// per check. Exit code 0 iff no check fails.
pub fn cmd_validate(
    scenario_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
    _threads: Option<usize>,
) -> Result<Vec<CheckResult>, CliError> {
    let (scenario, built, _) = read_scenario(scenario_path, seed)?;
    let system = &built.system;
    let companion = system.companion();
    let mut results = Vec::new();

    // Wave closed form against the dense exponential.
    let name = "semigroup wave closed form vs matrix exponential";
    if is_wave_system(companion) {
        let n_modes = companion.spaces()[0].dim();
        let mut worst: f64 = 0.0;
        let mut failure = None;
        for t in [0.1, 0.7, 2.0] {
            match (
                matrix_exponential(companion, t),
                hilbert_carma::semigroup::evaluate_wave(n_modes, t),
            ) {
                (Ok(e), Ok(w)) => worst = worst.max(rel_frobenius(w.matrix(), e.matrix())),
                (Err(e), _) | (_, Err(e)) => failure = Some(e.to_string()),
            }
        }
        results.push(match failure {
            Some(msg) => fail(name, msg),
            None if worst <= 1e-10 => pass(name, format!("max relative deviation {worst:.3e} <= 1e-10")),
            None => fail(name, format!("max relative deviation {worst:.3e} > 1e-10")),
        });
    } else {
        results.push(skipped(name, "system is not the sine-basis wave system".into()));
    }

    // Recursive series against the dense exponential.
    let name = "semigroup recursive series vs matrix exponential";
    {
        let mut worst: f64 = 0.0;
        let mut failure = None;
        for t in [0.25, 0.5] {
            let series = evaluate_recursive(
                companion,
                t,
                scenario.run.series_terms,
                scenario.run.quadrature_nodes,
                hilbert_carma::semigroup::DEFAULT_SERIES_TOLERANCE,
            );
            match (series, matrix_exponential(companion, t)) {
                (Ok(s), Ok(e)) => worst = worst.max(rel_frobenius(s.matrix(), e.matrix())),
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        results.push(match failure {
            Some(msg) => fail(name, msg),
            None if worst <= 1e-6 => pass(name, format!("max relative deviation {worst:.3e} <= 1e-6")),
            None => fail(name, format!("max relative deviation {worst:.3e} > 1e-6")),
        });
    }

    // Semimartingale rebuild and derivative formula.
    let name = "semimartingale rebuild and derivative (p > 1)";
    if system.order() == 1 {
        results.push(skipped(name, "skipped (p=1)".into()));
    } else if !system.is_car() {
        results.push(skipped(name, "observation is not P1".into()));
    } else {
        results.push(run_semimartingale_check(name, &scenario, system));
    }

    // FAR coefficient identity by substitution.
    let name = "FAR substitution identity";
    match derive_b(companion) {
        Err(e) => results.push(skipped(name, format!("B_q not derivable: {e}"))),
        Ok(b) => {
            let delta = 0.1;
            match far_substitution_residual(&b, delta) {
                Err(e) => results.push(fail(name, e.to_string())),
                Ok(residual) if residual <= 1e-10 => {
                    results.push(pass(name, format!("max residual {residual:.3e} <= 1e-10")))
                }
                Ok(residual) => {
                    results.push(fail(name, format!("max residual {residual:.3e} > 1e-10")))
                }
            }
        }
    }

    for r in &results {
        let status = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIPPED",
        };
        println!("check {}: {status} ({})", r.name, r.detail);
    }
    if let Some(dir) = out_dir {
        let json = serde_json::to_string_pretty(&results)
            .map_err(|e| CliError::Validation(format!("validation report: {e}")))?;
        atomic_write(&dir.join("validation.json"), json.as_bytes())?;
    }
    Ok(results)
}

fn run_semimartingale_check(
    name: &str,
    scenario: &Scenario,
    system: &CarmaSystem,
) -> CheckResult {
    // Rebuild deviation on the scenario's own noise at its own step.
    let dt = scenario.run.dt;
    let steps = ((1.0 / dt).round() as usize).clamp(10, 1000);
    let mut rng = system.noise().rng_for_path(0);
    let path = match simulate_path(system, dt, steps, &mut rng, InnovationScheme::LeftPoint) {
        Ok(p) => p,
        Err(e) => return fail(name, e.to_string()),
    };
    let report = match carma::semimartingale_check(system, &path) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    let scale = path
        .observations()
        .iter()
        .map(HVector::norm)
        .fold(1.0f64, f64::max);
    let rebuild_tol = 10.0 * dt * scale;
    if report.rebuild_max_deviation > rebuild_tol {
        return fail(
            name,
            format!(
                "rebuild deviation {:.3e} > {rebuild_tol:.3e}",
                report.rebuild_max_deviation
            ),
        );
    }

    // Derivative formula against central differences on a smooth replay.
    let smooth_dt = 1e-4;
    let smooth_steps = 2000;
    let h_p = system.noise().space().clone();
    let profile = DVector::from_fn(h_p.dim(), |n, _| 1.0 / (n + 1) as f64);
    let increments: Vec<HVector> = (0..smooth_steps)
        .map(|i| {
            let t0 = i as f64 * smooth_dt;
            let t1 = (i + 1) as f64 * smooth_dt;
            let jump = (2.0 * t1).sin() - (2.0 * t0).sin();
            HVector::new(h_p.clone(), &profile * jump).expect("dims match")
        })
        .collect();
    let smooth = match replay_from_increments(system, smooth_dt, &increments) {
        Ok(p) => p,
        Err(e) => return fail(name, e.to_string()),
    };
    let smooth_report = match carma::semimartingale_check(system, &smooth) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    if smooth_report.derivative_max_rel_error > 1e-3 {
        return fail(
            name,
            format!(
                "derivative deviation {:.3e} > 1e-3 on smooth replay",
                smooth_report.derivative_max_rel_error
            ),
        );
    }
    pass(
        name,
        format!(
            "rebuild deviation {:.3e} <= {rebuild_tol:.3e}, derivative deviation {:.3e} <= 1e-3",
            report.rebuild_max_deviation, smooth_report.derivative_max_rel_error
        ),
    )
}

/// Deterministic pseudo-random iterates are enough: the substitution identity
/// is algebraic in the inputs.
fn far_substitution_residual(
    b: &hilbert_carma::operators::BOperators,
    delta: f64,
) -> Result<f64, Error> {
    let p = b.order();
    let space = b.space().clone();
    let wobble = |k: usize, n: usize| (1.3 * k as f64 + 0.7 * n as f64 + 0.2).sin();
    let vector = |k: usize| {
        HVector::new(
            space.clone(),
            DVector::from_fn(space.dim(), |n, _| wobble(k, n)),
        )
        .expect("dims match")
    };
    let model = far_coefficients(b, delta)?;
    let initial: Vec<HVector> = (0..p).map(vector).collect();
    let steps = 5;
    let eps: Vec<HVector> = (100..100 + steps).map(vector).collect();
    let xs = far_simulate(&model, &initial, &eps, steps)?;
    let mut worst: f64 = 0.0;
    for i in 0..steps {
        let mut lhs = forward_difference(&xs, p, i)?.scale(delta.powi(-(p as i32)));
        let mut scale = lhs.norm().max(eps[i].norm());
        for q in 1..=p {
            let d = forward_difference(&xs, p - q, i)?.scale(delta.powi(-((p - q) as i32)));
            let term = b.get(q)?.apply(&d)?;
            scale = scale.max(term.norm());
            lhs = lhs.axpy(-1.0, &term);
        }
        worst = worst.max(lhs.axpy(-1.0, &eps[i]).norm() / scale.max(1e-300));
    }
    Ok(worst)
}
