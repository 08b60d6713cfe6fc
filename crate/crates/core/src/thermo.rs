//! Equilibrium thermodynamics of the wave-function ensembles and numerical
//! checks of the heat theorem.
//!
//! Volumes (`Z`, `Φ`, `Ω`) are per unit total volume `V_N`, so entropies here
//! differ from absolute ones by the constant `ln V_N`. Differentials are unaffected.

use rayon::prelude::*;

use crate::ensembles::{estimate_partition, uniform_energies, CanonicalSampler, MicrocanonicalSampler};
use crate::error::{invalid, Error, Result};
use crate::lzmodel::{ln_sinhc, mean_projection};
use crate::rng::derive_seed;
use crate::statespace::{expectation, generalized_force_expectation, ParameterizedHamiltonian};
use crate::stats;

/// Closed forms (two-level systems only) or Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Which ensemble a [`ThermoPoint`] belongs to, with its control variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Beta(f64),
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermoPoint {
    pub control: Control,
    pub lambda: Vec<f64>,
    pub energy: f64,
    pub energy_stderr: f64,
    /// Generalized forces `−⟨∂H/∂λ_i⟩`.
    pub force: Vec<f64>,
    pub force_stderr: Vec<f64>,
    /// `ln Z` (canonical) or `ln Φ` (microcanonical).
    pub log_volume: f64,
    pub log_volume_stderr: f64,
    /// `S_c = βE + ln Z` or `S_μ = ln Φ`.
    pub entropy: f64,
    /// `Ω/Φ`, microcanonical only.
    pub integrating_factor: Option<f64>,
}

struct TwoLevel {
    center: f64,
    splitting: f64,
    /// `⟨k|∂H/∂λ_i|k⟩` for the lower (`k = 0`) and upper eigenstate.
    gradient_diag: Vec<[f64; 2]>,
}

fn two_level(ham: &dyn ParameterizedHamiltonian, lambda: &[f64]) -> Result<TwoLevel> {
    if ham.dim() != 2 {
        return Err(Error::NotTwoLevel(ham.dim()));
    }
    let spec = ham.hamiltonian(lambda)?.eigh()?;
    let (lo, hi) = (spec.eigenstate(0), spec.eigenstate(1));
    let gradient_diag = ham
        .gradient(lambda)?
        .iter()
        .map(|g| Ok([expectation(&lo, g)?, expectation(&hi, g)?]))
        .collect::<Result<_>>()?;
    Ok(TwoLevel {
        center: 0.5 * (spec.values[0] + spec.values[1]),
        splitting: 0.5 * (spec.values[1] - spec.values[0]),
        gradient_diag,
    })
}

impl TwoLevel {
    /// Forces when the upper-minus-lower population difference is `u`.
    fn forces(&self, u: f64) -> Vec<f64> {
        self.gradient_diag
            .iter()
            .map(|[lo, hi]| -(0.5 * (1.0 + u) * hi + 0.5 * (1.0 - u) * lo))
            .collect()
    }
}

/// Canonical energy, forces, `ln Z` and `S_c` at `(β, λ)`.
pub fn canonical_state_functions(
    ham: &dyn ParameterizedHamiltonian,
    beta: f64,
    lambda: &[f64],
    eval: Evaluation,
) -> Result<ThermoPoint> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid("beta", format!("{beta} must be finite and > 0")));
    }
    let n = ham.n_params();
    let (energy, energy_stderr, force, force_stderr, log_volume, log_volume_stderr) = match eval {
        Evaluation::Analytic => {
            let t = two_level(ham, lambda)?;
            let u = mean_projection(beta * t.splitting);
            let ln_z = -beta * t.center + ln_sinhc(beta * t.splitting);
            (t.center + t.splitting * u, 0.0, t.forces(u), vec![0.0; n], ln_z, 0.0)
        }
        Evaluation::MonteCarlo { samples, seed } => {
            let sampler = CanonicalSampler::new(ham, beta, lambda)?;
            let batch = sampler.sample(samples, derive_seed(seed, 1));
            let h = ham.hamiltonian(lambda)?;
            let energies: Vec<f64> = batch
                .states
                .par_iter()
                .map(|s| expectation(s, &h))
                .collect::<Result<_>>()?;
            let forces: Vec<Vec<f64>> = batch
                .states
                .par_iter()
                .map(|s| generalized_force_expectation(s, ham, lambda))
                .collect::<Result<_>>()?;
            let (e, e_se) = stats::mean_stderr(&energies);
            let (mut f, mut f_se) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let column: Vec<f64> = forces.iter().map(|v| v[i]).collect();
                let (m, se) = stats::mean_stderr(&column);
                f.push(m);
                f_se.push(se);
            }
            let z = estimate_partition(ham, beta, lambda, samples, derive_seed(seed, 2))?;
            (e, e_se, f, f_se, z.value.ln(), z.stderr / z.value)
        }
    };
    Ok(ThermoPoint {
        control: Control::Beta(beta),
        lambda: lambda.to_vec(),
        energy,
        energy_stderr,
        force,
        force_stderr,
        log_volume,
        log_volume_stderr,
        entropy: beta * energy + log_volume,
        integrating_factor: None,
    })
}

/// Microcanonical forces, `ln Φ`, and the integrating factor `Ω/Φ` at `(E, λ)`.
///
/// The Monte Carlo path takes forces from the shell sampler and `Φ`, `Ω` from
/// uniform draws (`Ω` as a centered difference over `omega_width`).
pub fn microcanonical_state_functions(
    ham: &dyn ParameterizedHamiltonian,
    energy: f64,
    lambda: &[f64],
    eval: Evaluation,
    omega_width: f64,
) -> Result<ThermoPoint> {
    let spec = ham.hamiltonian(lambda)?.eigh()?;
    if !(energy > spec.min() && energy < spec.max()) {
        return Err(Error::EnergyOutsideSpectrum {
            energy,
            min: spec.min(),
            max: spec.max(),
        });
    }
    let n = ham.n_params();
    let (force, force_stderr, phi, phi_se, omega) = match eval {
        Evaluation::Analytic => {
            let t = two_level(ham, lambda)?;
            let u = (energy - t.center) / t.splitting;
            let phi = 0.5 * (1.0 + u);
            (t.forces(u), vec![0.0; n], phi, 0.0, 0.5 / t.splitting)
        }
        Evaluation::MonteCarlo { samples, seed } => {
            let sampler = MicrocanonicalSampler::new(ham, energy, lambda)?;
            let batch = sampler.sample(samples, derive_seed(seed, 1));
            let forces: Vec<Vec<f64>> = batch
                .states
                .par_iter()
                .map(|s| generalized_force_expectation(s, ham, lambda))
                .collect::<Result<_>>()?;
            let (mut f, mut f_se) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let column: Vec<f64> = forces.iter().map(|v| v[i]).collect();
                let (m, se) = stats::mean_stderr(&column);
                f.push(m);
                f_se.push(se);
            }
            let h = uniform_energies(ham, lambda, samples, derive_seed(seed, 2))?;
            let (phi, omega) = volume_and_density(&h, energy, omega_width);
            let m = h.len() as f64;
            (f, f_se, phi, (phi * (1.0 - phi) / m).sqrt(), omega)
        }
    };
    Ok(ThermoPoint {
        control: Control::Energy(energy),
        lambda: lambda.to_vec(),
        energy,
        energy_stderr: 0.0,
        force,
        force_stderr,
        log_volume: phi.ln(),
        log_volume_stderr: phi_se / phi,
        entropy: phi.ln(),
        integrating_factor: Some(omega / phi),
    })
}

/// `Φ(E)` and the centered-difference `Ω(E)` over `width` from energy draws.
fn volume_and_density(h: &[f64], energy: f64, width: f64) -> (f64, f64) {
    let m = h.len() as f64;
    let below = |e: f64| h.iter().filter(|v| **v <= e).count() as f64 / m;
    let phi = below(energy);
    let omega = (below(energy + width / 2.0) - below(energy - width / 2.0)) / width;
    (phi, omega)
}

/// Outcome of a finite-difference exactness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Passed,
    /// Residual did not shrink under refinement, or exceeded its error bar.
    Failed,
    /// Monte Carlo noise is too large to decide.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatTheoremReport {
    /// Max over interior points of `|∂S − β(∂E + F ∂λ)|`, one-forms compared componentwise.
    pub max_residual: f64,
    /// The same with every grid spacing halved.
    pub refined_residual: f64,
    /// `log₂(max_residual / refined_residual)`; 2 for a second-order stencil.
    pub observed_order: f64,
    pub status: CheckStatus,
}

fn check_uniform(name: &'static str, grid: &[f64]) -> Result<f64> {
    if grid.len() < 3 {
        return Err(invalid(name, "need at least 3 points"));
    }
    let h = grid[1] - grid[0];
    if !(h > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(invalid(name, "must be uniform and increasing"));
    }
    Ok(h)
}

fn refine(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len() - 1);
    for w in grid.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(grid[grid.len() - 1]);
    out
}

fn with_param(base: &[f64], param: usize, value: f64) -> Vec<f64> {
    let mut l = base.to_vec();
    l[param] = value;
    l
}

/// Verifies `dS_c = β(dE + F dλ)` on a uniform `(β, λ_param)` grid with the
/// other parameters held at `base`, using closed-form state functions.
pub fn heat_theorem_canonical_check(
    ham: &dyn ParameterizedHamiltonian,
    betas: &[f64],
    lambdas: &[f64],
    base: &[f64],
    param: usize,
) -> Result<HeatTheoremReport> {
    if param >= ham.n_params() || base.len() != ham.n_params() {
        return Err(invalid("param", "index or base length does not match the Hamiltonian"));
    }
    let coarse = canonical_grid_residual(ham, betas, lambdas, base, param)?;
    let fine = canonical_grid_residual(ham, &refine(betas), &refine(lambdas), base, param)?;
    Ok(order_report(coarse, fine))
}

fn order_report(coarse: f64, fine: f64) -> HeatTheoremReport {
    let observed_order = (coarse / fine).log2();
    // Both residuals at round-off also count as converged.
    let status = if observed_order > 1.5 || coarse < 1e-12 {
        CheckStatus::Passed
    } else {
        CheckStatus::Failed
    };
    HeatTheoremReport {
        max_residual: coarse,
        refined_residual: fine,
        observed_order,
        status,
    }
}

fn canonical_grid_residual(
    ham: &dyn ParameterizedHamiltonian,
    betas: &[f64],
    lambdas: &[f64],
    base: &[f64],
    param: usize,
) -> Result<f64> {
    let hb = check_uniform("betas", betas)?;
    let hl = check_uniform("lambdas", lambdas)?;
    let points: Vec<(usize, usize)> = (0..betas.len())
        .flat_map(|i| (0..lambdas.len()).map(move |j| (i, j)))
        .collect();
    let table: Vec<ThermoPoint> = points
        .par_iter()
        .map(|&(i, j)| {
            canonical_state_functions(ham, betas[i], &with_param(base, param, lambdas[j]), Evaluation::Analytic)
        })
        .collect::<Result<_>>()?;
    let at = |i: usize, j: usize| &table[i * lambdas.len() + j];
    let mut worst: f64 = 0.0;
    for i in 1..betas.len() - 1 {
        for j in 1..lambdas.len() - 1 {
            let c = at(i, j);
            let beta = betas[i];
            let ds_db = (at(i + 1, j).entropy - at(i - 1, j).entropy) / (2.0 * hb);
            let de_db = (at(i + 1, j).energy - at(i - 1, j).energy) / (2.0 * hb);
            let ds_dl = (at(i, j + 1).entropy - at(i, j - 1).entropy) / (2.0 * hl);
            let de_dl = (at(i, j + 1).energy - at(i, j - 1).energy) / (2.0 * hl);
            let r_beta = ds_db - beta * de_db;
            let r_lambda = ds_dl - beta * (de_dl + c.force[param]);
            worst = worst.max(r_beta.abs()).max(r_lambda.abs());
        }
    }
    Ok(worst)
}

/// A point of a closed path in `(β, λ)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct PathVertex {
    pub beta: f64,
    pub lambda: Vec<f64>,
}

/// `∮ β δQ` around the closed polygon through `vertices` (closed-form state functions).
///
/// Uses `β dE = d(βE) − E dβ`, so the integrand needs no derivative of `E`;
/// each straight segment is integrated by composite Simpson with `nodes` intervals.
pub fn canonical_loop_integral(
    ham: &dyn ParameterizedHamiltonian,
    vertices: &[PathVertex],
    nodes: usize,
) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(invalid("vertices", "a loop needs at least 3 vertices"));
    }
    let nodes = nodes.max(2) & !1;
    let mut segments = Vec::with_capacity(vertices.len());
    for k in 0..vertices.len() {
        let (a, b) = (&vertices[k], &vertices[(k + 1) % vertices.len()]);
        let dbeta = b.beta - a.beta;
        let dl: Vec<f64> = b.lambda.iter().zip(&a.lambda).map(|(y, x)| y - x).collect();
        let values: Vec<f64> = (0..=nodes)
            .into_par_iter()
            .map(|i| {
                let s = i as f64 / nodes as f64;
                let beta = a.beta + s * dbeta;
                let lambda: Vec<f64> = a.lambda.iter().zip(&dl).map(|(x, d)| x + s * d).collect();
                let p = canonical_state_functions(ham, beta, &lambda, Evaluation::Analytic)?;
                let work: f64 = p.force.iter().zip(&dl).map(|(f, d)| f * d).sum();
                Ok(-p.energy * dbeta + beta * work)
            })
            .collect::<Result<_>>()?;
        segments.push(simpson(&values) / nodes as f64);
    }
    Ok(stats::pairwise_sum(&segments))
}

fn simpson(v: &[f64]) -> f64 {
    let n = v.len() - 1;
    let inner: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * v[i]).sum();
    (v[0] + v[n] + inner) / 3.0
}

/// Options for the microcanonical heat-theorem check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroHeatConfig {
    pub eval: Evaluation,
    /// Finite-difference half-step in `E` and in `λ`; `Ω` uses a window of twice this.
    pub step: f64,
    /// Independent replicates the Monte Carlo error is estimated from.
    pub replicates: usize,
}

impl Default for MicroHeatConfig {
    fn default() -> Self {
        MicroHeatConfig {
            eval: Evaluation::MonteCarlo { samples: 100_000, seed: 0 },
            step: 0.05,
            replicates: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroHeatPoint {
    pub energy: f64,
    pub lambda: f64,
    /// `∂_E ln Φ − Ω/Φ`.
    pub residual_energy: f64,
    /// `∂_λ ln Φ − (Ω/Φ) F`.
    pub residual_lambda: f64,
    pub stderr_energy: f64,
    pub stderr_lambda: f64,
    /// `|∂_λ ln Φ|`, the size of what is being tested.
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroHeatReport {
    pub points: Vec<MicroHeatPoint>,
    /// Largest `|residual| / stderr` (Monte Carlo) or `|residual|` (analytic).
    pub max_score: f64,
    pub status: CheckStatus,
    /// Samples per replicate needed for the error bar to resolve the signal, when inconclusive.
    pub required_samples: Option<usize>,
}

/// Verifies `d ln Φ = (Ω/Φ)(dE + F dλ)` at every `(E, λ_param)` grid point.
///
/// All finite differences share one set of uniform draws (common random numbers),
/// so the λ-derivative of `Φ` only sees states crossing the shell. The Monte
/// Carlo error comes from independent replicates.
pub fn heat_theorem_microcanonical_check(
    ham: &dyn ParameterizedHamiltonian,
    energies: &[f64],
    lambdas: &[f64],
    base: &[f64],
    param: usize,
    config: MicroHeatConfig,
) -> Result<MicroHeatReport> {
    if param >= ham.n_params() || base.len() != ham.n_params() {
        return Err(invalid("param", "index or base length does not match the Hamiltonian"));
    }
    if !(config.step > 0.0) {
        return Err(invalid("step", "must be > 0"));
    }
    let h = config.step;
    let mut points = Vec::new();
    for &e in energies {
        for &l in lambdas {
            let lambda = with_param(base, param, l);
            let replicate = |eval: Evaluation| -> Result<(f64, f64, f64)> {
                micro_residuals(ham, e, &lambda, param, h, eval)
            };
            let point = match config.eval {
                Evaluation::Analytic => {
                    let (re, rl, sig) = replicate(Evaluation::Analytic)?;
                    MicroHeatPoint {
                        energy: e,
                        lambda: l,
                        residual_energy: re,
                        residual_lambda: rl,
                        stderr_energy: 0.0,
                        stderr_lambda: 0.0,
                        signal: sig,
                    }
                }
                Evaluation::MonteCarlo { samples, seed } => {
                    let reps = config.replicates.max(2);
                    let per = samples / reps;
                    let runs: Vec<(f64, f64, f64)> = (0..reps)
                        .into_par_iter()
                        .map(|r| {
                            replicate(Evaluation::MonteCarlo {
                                samples: per,
                                seed: derive_seed(seed, r as u64),
                            })
                        })
                        .collect::<Result<_>>()?;
                    let col = |k: usize| -> Vec<f64> {
                        runs.iter().map(|r| [r.0, r.1, r.2][k]).collect()
                    };
                    let (re, se_e) = stats::mean_stderr(&col(0));
                    let (rl, se_l) = stats::mean_stderr(&col(1));
                    MicroHeatPoint {
                        energy: e,
                        lambda: l,
                        residual_energy: re,
                        residual_lambda: rl,
                        stderr_energy: se_e,
                        stderr_lambda: se_l,
                        signal: stats::mean(&col(2)).abs(),
                    }
                }
            };
            points.push(point);
        }
    }
    Ok(micro_report(points, config))
}

fn micro_report(points: Vec<MicroHeatPoint>, config: MicroHeatConfig) -> MicroHeatReport {
    match config.eval {
        Evaluation::Analytic => {
            let max_score = points
                .iter()
                .map(|p| p.residual_energy.abs().max(p.residual_lambda.abs()))
                .fold(0.0, f64::max);
            let status = if max_score < 10.0 * config.step * config.step {
                CheckStatus::Passed
            } else {
                CheckStatus::Failed
            };
            MicroHeatReport {
                points,
                max_score,
                status,
                required_samples: None,
            }
        }
        Evaluation::MonteCarlo { samples, .. } => {
            let score = |r: f64, se: f64| if se > 0.0 { r.abs() / se } else if r == 0.0 { 0.0 } else { f64::INFINITY };
            let max_score = points
                .iter()
                .map(|p| score(p.residual_energy, p.stderr_energy).max(score(p.residual_lambda, p.stderr_lambda)))
                .fold(0.0, f64::max);
            // Noise dominates when the 4σ band is wider than half the derivative under test.
            let worst_ratio = points
                .iter()
                .filter(|p| p.signal > 0.0)
                .map(|p| 4.0 * p.stderr_lambda / (0.5 * p.signal))
                .fold(0.0, f64::max);
            let per = samples / config.replicates.max(2);
            if worst_ratio > 1.0 {
                MicroHeatReport {
                    points,
                    max_score,
                    status: CheckStatus::Inconclusive,
                    required_samples: Some((per as f64 * worst_ratio * worst_ratio).ceil() as usize),
                }
            } else {
                MicroHeatReport {
                    points,
                    max_score,
                    status: if max_score <= 4.0 { CheckStatus::Passed } else { CheckStatus::Failed },
                    required_samples: None,
                }
            }
        }
    }
}

/// `(∂_E ln Φ − Ω/Φ, ∂_λ ln Φ − (Ω/Φ)F, ∂_λ ln Φ)` at one point.
fn micro_residuals(
    ham: &dyn ParameterizedHamiltonian,
    energy: f64,
    lambda: &[f64],
    param: usize,
    h: f64,
    eval: Evaluation,
) -> Result<(f64, f64, f64)> {
    let shifted = |d: f64| with_param(lambda, param, lambda[param] + d);
    let (phi_e, phi_lp, phi_lm, omega) = match eval {
        Evaluation::Analytic => {
            let phi = |e: f64, l: &[f64]| -> Result<f64> {
                let t = two_level(ham, l)?;
                Ok((0.5 * (1.0 + (e - t.center) / t.splitting)).clamp(0.0, 1.0))
            };
            let phi_e = [phi(energy - h, lambda)?, phi(energy, lambda)?, phi(energy + h, lambda)?];
            (phi_e, phi(energy, &shifted(h))?, phi(energy, &shifted(-h))?, (phi_e[2] - phi_e[0]) / (2.0 * h))
        }
        Evaluation::MonteCarlo { samples, seed } => {
            let draws = uniform_energies(ham, lambda, samples, seed)?;
            let plus = uniform_energies(ham, &shifted(h), samples, seed)?;
            let minus = uniform_energies(ham, &shifted(-h), samples, seed)?;
            let m = samples as f64;
            let below = |v: &[f64], e: f64| v.iter().filter(|x| **x <= e).count() as f64 / m;
            let phi_e = [below(&draws, energy - h), below(&draws, energy), below(&draws, energy + h)];
            (phi_e, below(&plus, energy), below(&minus, energy), (phi_e[2] - phi_e[0]) / (2.0 * h))
        }
    };
    let point = microcanonical_state_functions(ham, energy, lambda, eval, 2.0 * h)?;
    let force = point.force[param];
    let phi = phi_e[1];
    let d_e = (phi_e[2] - phi_e[0]) / (2.0 * h) / phi;
    let d_l = (phi_lp.ln() - phi_lm.ln()) / (2.0 * h);
    let factor = omega / phi;
    Ok((d_e - factor, d_l - factor * force, d_l))
}

/// Whether `d ln X` can be written as `γ δQ` for some scalar `γ`, where `X` is `Ω` or `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyCandidate {
    Surface,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalityPoint {
    pub energy: f64,
    pub lambda: f64,
    /// `|∂_λ ln X − F ∂_E ln X|`; zero iff `d ln X ∥ δQ = dE + F dλ`.
    pub defect: f64,
    pub stderr: f64,
    /// Both components of `d ln X` vanish, so proportionality is vacuous.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub candidate: EntropyCandidate,
    pub points: Vec<ProportionalityPoint>,
}

impl EntropyReport {
    pub fn max_defect(&self) -> f64 {
        self.points.iter().map(|p| p.defect).fold(0.0, f64::max)
    }
}

/// Proportionality defect of `d ln Ω` (surface) or `d ln Φ` (volume) against `δQ`
/// at each `(E, λ_param)` point. An empty `lambdas` slice gives the 1D energy
/// slice, where every one-form is proportional to `dE`.
pub fn surface_vs_volume_entropy_report(
    ham: &dyn ParameterizedHamiltonian,
    candidate: EntropyCandidate,
    energies: &[f64],
    lambdas: &[f64],
    base: &[f64],
    param: usize,
    config: MicroHeatConfig,
) -> Result<EntropyReport> {
    let h = config.step;
    let mut points = Vec::new();
    if lambdas.is_empty() {
        for &e in energies {
            points.push(ProportionalityPoint {
                energy: e,
                lambda: base[param],
                defect: 0.0,
                stderr: 0.0,
                degenerate: false,
            });
        }
        return Ok(EntropyReport { candidate, points });
    }
    for &e in energies {
        for &l in lambdas {
            let lambda = with_param(base, param, l);
            let one = |eval: Evaluation| -> Result<(f64, bool)> {
                let ln_x = |e: f64, lam: &[f64], eval: Evaluation| -> Result<f64> {
                    let p = microcanonical_state_functions(ham, e, lam, eval, 2.0 * h)?;
                    Ok(match candidate {
                        EntropyCandidate::Volume => p.log_volume,
                        EntropyCandidate::Surface => (p.integrating_factor.unwrap() * p.log_volume.exp()).ln(),
                    })
                };
                let force = microcanonical_state_functions(ham, e, &lambda, eval, 2.0 * h)?.force[param];
                let de = (ln_x(e + h, &lambda, eval)? - ln_x(e - h, &lambda, eval)?) / (2.0 * h);
                let dl = (ln_x(e, &with_param(&lambda, param, l + h), eval)?
                    - ln_x(e, &with_param(&lambda, param, l - h), eval)?)
                    / (2.0 * h);
                Ok(((dl - force * de).abs(), de == 0.0 && dl == 0.0))
            };
            let point = match config.eval {
                Evaluation::Analytic => {
                    let (defect, degenerate) = one(Evaluation::Analytic)?;
                    ProportionalityPoint {
                        energy: e,
                        lambda: l,
                        defect,
                        stderr: 0.0,
                        degenerate,
                    }
                }
                Evaluation::MonteCarlo { samples, seed } => {
                    let reps = config.replicates.max(2);
                    let runs: Vec<(f64, bool)> = (0..reps)
                        .into_par_iter()
                        .map(|r| {
                            one(Evaluation::MonteCarlo {
                                samples: samples / reps,
                                seed: derive_seed(seed, r as u64),
                            })
                        })
                        .collect::<Result<_>>()?;
                    let d: Vec<f64> = runs.iter().map(|r| r.0).collect();
                    let (defect, stderr) = stats::mean_stderr(&d);
                    ProportionalityPoint {
                        energy: e,
                        lambda: l,
                        defect,
                        stderr,
                        degenerate: runs.iter().all(|r| r.1),
                    }
                }
            };
            points.push(point);
        }
    }
    Ok(EntropyReport { candidate, points })
}
