//! Samplers for wave-function ensembles and the Monte Carlo estimators built on them.
//!
//! All estimates are normalized per unit total volume of the state sphere.
//! Multiply by [`volume_constant`] to recover `∫ dx dp δ(1 − |x + ip|²)`.
//!
//! Batches are generated from counter-based substreams: exact and rejection
//! samplers give draw `i` its own stream, Markov-chain samplers give each
//! chain its own stream. Either way a batch depends only on the seed.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, par_streams, substream, StreamRng};
use crate::statespace::{expectation, HermitianOperator, ParameterizedHamiltonian, Spectrum, StateVector, C64};
use crate::stats;

const PILOT_TAG: u64 = 0x5049_4c4f;
const CHAIN_TAG: u64 = 0x4348_4149;

/// One hit-and-run chain: thinned populations, their per-component traces and the autocorrelation time.
type SliceChain = (Vec<DVector<f64>>, Vec<Vec<f64>>, f64);

/// `V_N = π^N / (N − 1)!`, the total volume of the normalized-state sphere.
pub fn volume_constant(dim: usize) -> f64 {
    let fact: f64 = (1..dim).map(|k| k as f64).product();
    PI.powi(dim as i32) / fact
}

/// Initial distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    UniformSphere,
    CanonicalWf { beta: f64, lambda: Vec<f64> },
    MicrocanonicalWf { energy: f64, lambda: Vec<f64> },
    /// Standard Gibbs state: eigenstates drawn with Boltzmann weights.
    StandardGibbs { beta: f64, lambda: Vec<f64> },
}

impl EnsembleKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::UniformSphere => "uniform-sphere",
            EnsembleKind::CanonicalWf { .. } => "canonical-wf",
            EnsembleKind::MicrocanonicalWf { .. } => "microcanonical-wf",
            EnsembleKind::StandardGibbs { .. } => "standard-gibbs",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub hamiltonian: Arc<dyn ParameterizedHamiltonian>,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, hamiltonian: Arc<dyn ParameterizedHamiltonian>) -> Self {
        EnsembleSpec { kind, hamiltonian }
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// Domain checks: β > 0 and E strictly inside the spectrum.
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            EnsembleKind::UniformSphere => Ok(()),
            EnsembleKind::CanonicalWf { beta, lambda } | EnsembleKind::StandardGibbs { beta, lambda } => {
                check_beta(*beta)?;
                self.hamiltonian.hamiltonian(lambda).map(|_| ())
            }
            EnsembleKind::MicrocanonicalWf { energy, lambda } => {
                let spec = self.hamiltonian.hamiltonian(lambda)?.eigh()?;
                check_energy(*energy, &spec)
            }
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid("beta", format!("{beta} must be finite and > 0")));
    }
    Ok(())
}

fn check_energy(energy: f64, spec: &Spectrum) -> Result<()> {
    if !(energy > spec.min() && energy < spec.max()) {
        return Err(Error::EnergyOutsideSpectrum {
            energy,
            min: spec.min(),
            max: spec.max(),
        });
    }
    Ok(())
}

/// How a batch was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMethod {
    Exact,
    Rejection,
    Metropolis,
    HitAndRun,
}

/// One logged Metropolis proposal, in terms of the target log-density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalRecord {
    pub log_density_from: f64,
    pub log_density_to: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerDiagnostics {
    pub method: SamplingMethod,
    /// Rejection acceptance rate, or Metropolis acceptance after burn-in.
    pub acceptance: Option<f64>,
    pub r_hat: Option<f64>,
    pub autocorr_time: Option<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub warnings: Vec<String>,
    pub proposal_log: Vec<ProposalRecord>,
}

impl SamplerDiagnostics {
    fn exact(method: SamplingMethod) -> Self {
        SamplerDiagnostics {
            method,
            acceptance: None,
            r_hat: None,
            autocorr_time: None,
            burn_in: 0,
            thinning: 1,
            chains: 0,
            warnings: Vec::new(),
            proposal_log: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub states: Vec<StateVector>,
    pub diagnostics: SamplerDiagnostics,
}

/// Tunables for the Markov-chain fallbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Rejection acceptance below which the canonical sampler switches to Metropolis.
    pub switch_acceptance: f64,
    pub pilot_draws: usize,
    pub chains: usize,
    pub burn_in: usize,
    /// Length of the pilot run used to estimate the autocorrelation time.
    pub tuning_steps: usize,
    pub r_hat_max: f64,
    /// Number of Metropolis proposals recorded for detailed-balance checks.
    pub log_proposals: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            switch_acceptance: 1e-3,
            pilot_draws: 4000,
            chains: 4,
            burn_in: 5000,
            tuning_steps: 20_000,
            r_hat_max: 1.1,
            log_proposals: 0,
        }
    }
}

/// Uniform point on the unit sphere of `C^N`.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let p: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(s) = StateVector::new(x, p) {
            return s;
        }
    }
}

/// State with eigenbasis populations `q` and independent uniform phases.
fn state_from_populations<R: Rng + ?Sized>(q: &[f64], spec: &Spectrum, rng: &mut R) -> StateVector {
    let n = q.len();
    let coeffs = DVector::from_iterator(
        n,
        q.iter()
            .map(|&qk| C64::from_polar(qk.max(0.0).sqrt(), rng.random::<f64>() * 2.0 * PI)),
    );
    StateVector::from_amplitudes(&(&spec.vectors * coeffs))
}

/// Inverse-CDF draw of `u ∈ [−1, 1]` with density `∝ e^{−a u}`.
fn draw_exponential_projection<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let xi: f64 = rng.random();
    if a == 0.0 {
        return 2.0 * xi - 1.0;
    }
    let u = if a > 0.0 {
        -1.0 - (xi * (-2.0 * a).exp_m1()).ln_1p() / a
    } else {
        1.0 - ((1.0 - xi) * (2.0 * a).exp_m1()).ln_1p() / a
    };
    u.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone)]
enum CanonicalRoute {
    TwoLevel,
    Rejection { acceptance: f64 },
    Metropolis { pilot_acceptance: f64 },
}

/// Sampler for the density `∝ e^{−β h(x, p; λ)}` on the unit sphere.
#[derive(Debug, Clone)]
pub struct CanonicalSampler {
    beta: f64,
    h: HermitianOperator,
    spectrum: Spectrum,
    route: CanonicalRoute,
    config: ChainConfig,
    seed_hint: u64,
}

impl CanonicalSampler {
    pub fn new(ham: &dyn ParameterizedHamiltonian, beta: f64, lambda: &[f64]) -> Result<Self> {
        Self::with_config(ham, beta, lambda, ChainConfig::default())
    }

    pub fn with_config(
        ham: &dyn ParameterizedHamiltonian,
        beta: f64,
        lambda: &[f64],
        config: ChainConfig,
    ) -> Result<Self> {
        check_beta(beta)?;
        let h = ham.hamiltonian(lambda)?;
        let spectrum = h.eigh()?;
        let mut sampler = CanonicalSampler {
            beta,
            h,
            spectrum,
            route: CanonicalRoute::TwoLevel,
            config,
            seed_hint: 0,
        };
        if sampler.dim() > 2 {
            let acc = sampler.pilot_acceptance();
            sampler.route = if acc < config.switch_acceptance {
                CanonicalRoute::Metropolis { pilot_acceptance: acc }
            } else {
                CanonicalRoute::Rejection { acceptance: acc }
            };
        }
        Ok(sampler)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    /// Rejection acceptance measured by the pilot run (`None` for N = 2).
    pub fn pilot_acceptance_rate(&self) -> Option<f64> {
        match self.route {
            CanonicalRoute::TwoLevel => None,
            CanonicalRoute::Rejection { acceptance } => Some(acceptance),
            CanonicalRoute::Metropolis { pilot_acceptance } => Some(pilot_acceptance),
        }
    }

    pub fn method(&self) -> SamplingMethod {
        match self.route {
            CanonicalRoute::TwoLevel => SamplingMethod::Exact,
            CanonicalRoute::Rejection { .. } => SamplingMethod::Rejection,
            CanonicalRoute::Metropolis { .. } => SamplingMethod::Metropolis,
        }
    }

    fn envelope(&self, s: &StateVector) -> f64 {
        let h = expectation(s, &self.h).expect("dimension fixed at construction");
        (-self.beta * (h - self.spectrum.min())).exp()
    }

    fn pilot_acceptance(&self) -> f64 {
        let n = self.config.pilot_draws.max(1);
        let mut rng = substream(derive_seed(self.seed_hint, PILOT_TAG), 0);
        let total: f64 = (0..n)
            .map(|_| self.envelope(&sample_uniform_sphere(self.dim(), &mut rng)))
            .sum();
        total / n as f64
    }

    /// Single independent draw; `None` on the Metropolis route.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<StateVector> {
        match self.route {
            CanonicalRoute::TwoLevel => {
                let (e0, e1) = (self.spectrum.values[0], self.spectrum.values[1]);
                let eps = 0.5 * (e1 - e0);
                let u = draw_exponential_projection(self.beta * eps, rng);
                let q = [(1.0 - u) / 2.0, (1.0 + u) / 2.0];
                Some(state_from_populations(&q, &self.spectrum, rng))
            }
            CanonicalRoute::Rejection { .. } => loop {
                let s = sample_uniform_sphere(self.dim(), rng);
                if rng.random::<f64>() < self.envelope(&s) {
                    return Some(s);
                }
            },
            CanonicalRoute::Metropolis { .. } => None,
        }
    }

    pub fn sample(&self, m: usize, seed: u64) -> SampleBatch {
        match self.route {
            CanonicalRoute::TwoLevel => SampleBatch {
                states: par_streams(seed, m, |_, rng| self.draw(rng).expect("exact route")),
                diagnostics: SamplerDiagnostics::exact(SamplingMethod::Exact),
            },
            CanonicalRoute::Rejection { acceptance } => {
                let mut diagnostics = SamplerDiagnostics::exact(SamplingMethod::Rejection);
                diagnostics.acceptance = Some(acceptance);
                SampleBatch {
                    states: par_streams(seed, m, |_, rng| self.draw(rng).expect("rejection route")),
                    diagnostics,
                }
            }
            CanonicalRoute::Metropolis { .. } => self.metropolis(m, seed),
        }
    }

    fn metropolis(&self, m: usize, seed: u64) -> SampleBatch {
        let beta = self.beta;
        let h = &self.h;
        let log_density = move |s: &StateVector| -beta * expectation(s, h).expect("dimension fixed");
        run_metropolis(self.dim(), m, seed, &self.config, log_density, |s| {
            expectation(s, h).expect("dimension fixed")
        })
    }
}

struct ChainOutput {
    samples: Vec<StateVector>,
    trace: Vec<f64>,
    accepted: usize,
    proposed: usize,
    log: Vec<ProposalRecord>,
    tau: f64,
}

/// Random-walk Metropolis on the unit sphere of `C^N`.
///
/// Proposals `normalize(c + σ g)` with isotropic Gaussian `g` are symmetric in
/// the chord length, so the acceptance ratio is the density ratio.
fn run_metropolis<L, O>(
    dim: usize,
    m: usize,
    seed: u64,
    config: &ChainConfig,
    log_density: L,
    observable: O,
) -> SampleBatch
where
    L: Fn(&StateVector) -> f64 + Sync,
    O: Fn(&StateVector) -> f64 + Sync,
{
    let chains = config.chains.max(2);
    let per_chain = m.div_ceil(chains);
    let chain_seed = derive_seed(seed, CHAIN_TAG);

    let outputs: Vec<ChainOutput> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(chain_seed, c as u64);
            let mut state = sample_uniform_sphere(dim, &mut rng);
            let mut logp = log_density(&state);
            let mut sigma = 0.5;
            let mut log = Vec::new();
            let step = |state: &mut StateVector,
                        logp: &mut f64,
                        sigma: f64,
                        rng: &mut StreamRng,
                        log: Option<&mut Vec<ProposalRecord>>|
             -> bool {
                let x: Vec<f64> = state
                    .x()
                    .iter()
                    .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let p: Vec<f64> = state
                    .p()
                    .iter()
                    .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let Ok(proposal) = StateVector::new(x, p) else {
                    return false;
                };
                let logq = log_density(&proposal);
                let acceptance = (logq - *logp).exp().min(1.0);
                if let Some(log) = log {
                    log.push(ProposalRecord {
                        log_density_from: *logp,
                        log_density_to: logq,
                        acceptance,
                    });
                }
                if rng.random::<f64>() < acceptance {
                    *state = proposal;
                    *logp = logq;
                    true
                } else {
                    false
                }
            };

            // burn-in with step-size adaptation toward ~30% acceptance
            let window = 200;
            let mut acc_window = 0;
            for k in 0..config.burn_in {
                if step(&mut state, &mut logp, sigma, &mut rng, None) {
                    acc_window += 1;
                }
                if (k + 1) % window == 0 {
                    let rate = acc_window as f64 / window as f64;
                    sigma *= if rate > 0.3 { 1.2 } else { 0.8 };
                    sigma = sigma.clamp(1e-4, 2.0);
                    acc_window = 0;
                }
            }

            // tuning run: autocorrelation time of the observable
            let mut tune_trace = Vec::with_capacity(config.tuning_steps);
            for _ in 0..config.tuning_steps {
                step(&mut state, &mut logp, sigma, &mut rng, None);
                tune_trace.push(observable(&state));
            }
            let tau = stats::integrated_autocorr_time(&tune_trace);
            let thin = (2.0 * tau).ceil() as usize;

            let mut samples = Vec::with_capacity(per_chain);
            let mut trace = Vec::with_capacity(per_chain);
            let (mut accepted, mut proposed) = (0, 0);
            while samples.len() < per_chain {
                for _ in 0..thin {
                    let record = if log.len() < config.log_proposals {
                        Some(&mut log)
                    } else {
                        None
                    };
                    if step(&mut state, &mut logp, sigma, &mut rng, record) {
                        accepted += 1;
                    }
                    proposed += 1;
                }
                trace.push(observable(&state));
                samples.push(state.clone());
            }
            ChainOutput {
                samples,
                trace,
                accepted,
                proposed,
                log,
                tau,
            }
        })
        .collect();

    assemble_chains(outputs, m, config, SamplingMethod::Metropolis)
}

fn assemble_chains(
    outputs: Vec<ChainOutput>,
    m: usize,
    config: &ChainConfig,
    method: SamplingMethod,
) -> SampleBatch {
    let traces: Vec<Vec<f64>> = outputs.iter().map(|o| o.trace.clone()).collect();
    let r_hat = stats::gelman_rubin(&traces);
    let tau = outputs.iter().map(|o| o.tau).fold(1.0, f64::max);
    let accepted: usize = outputs.iter().map(|o| o.accepted).sum();
    let proposed: usize = outputs.iter().map(|o| o.proposed).sum();
    let chains = outputs.len();
    let mut warnings = Vec::new();
    if r_hat.is_finite() && r_hat > config.r_hat_max {
        warnings.push(format!(
            "R-hat {r_hat:.3} exceeds {:.2}: chains may not have converged",
            config.r_hat_max
        ));
    }
    let mut proposal_log = Vec::new();
    let mut states = Vec::with_capacity(m);
    for o in outputs {
        proposal_log.extend(o.log);
        states.extend(o.samples);
    }
    // interleave-free truncation keeps chain order deterministic
    states.truncate(m);
    SampleBatch {
        states,
        diagnostics: SamplerDiagnostics {
            method,
            acceptance: if proposed > 0 {
                Some(accepted as f64 / proposed as f64)
            } else {
                None
            },
            r_hat: Some(r_hat),
            autocorr_time: Some(tau),
            burn_in: config.burn_in,
            thinning: (2.0 * tau).ceil() as usize,
            chains,
            warnings,
            proposal_log,
        },
    }
}

/// Uniform sampler on the shell `{h(s; λ) = E, |s| = 1}`.
///
/// Eigenbasis populations are uniform on the polytope
/// `{q ≥ 0, Σ q = 1, Σ q E_k = E}`; phases are uniform and independent.
#[derive(Debug, Clone)]
pub struct MicrocanonicalSampler {
    energy: f64,
    spectrum: Spectrum,
    null_basis: Vec<DVector<f64>>,
    start: DVector<f64>,
    config: ChainConfig,
}

impl MicrocanonicalSampler {
    pub fn new(ham: &dyn ParameterizedHamiltonian, energy: f64, lambda: &[f64]) -> Result<Self> {
        Self::with_config(ham, energy, lambda, ChainConfig::default())
    }

    pub fn with_config(
        ham: &dyn ParameterizedHamiltonian,
        energy: f64,
        lambda: &[f64],
        config: ChainConfig,
    ) -> Result<Self> {
        let spectrum = ham.hamiltonian(lambda)?.eigh()?;
        check_energy(energy, &spectrum)?;
        let n = spectrum.values.len();
        let e = DVector::from_column_slice(&spectrum.values);
        let null_basis = polytope_null_basis(&e);
        // interior point: mix the barycenter with the extreme level on E's side
        let uniform = DVector::from_element(n, 1.0 / n as f64);
        let mean_e = e.mean();
        let (target, e_target) = if energy >= mean_e {
            (n - 1, spectrum.max())
        } else {
            (0, spectrum.min())
        };
        let alpha = if (e_target - mean_e).abs() > 0.0 {
            (energy - mean_e) / (e_target - mean_e)
        } else {
            0.0
        };
        let mut start = uniform * (1.0 - alpha);
        start[target] += alpha;
        let mut sampler = MicrocanonicalSampler {
            energy,
            spectrum,
            null_basis,
            start,
            config,
        };
        sampler.start = sampler.project(sampler.start.clone());
        Ok(sampler)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn dim(&self) -> usize {
        self.spectrum.values.len()
    }

    pub fn method(&self) -> SamplingMethod {
        if self.dim() == 2 {
            SamplingMethod::Exact
        } else {
            SamplingMethod::HitAndRun
        }
    }

    fn two_level_populations(&self) -> [f64; 2] {
        let (e0, e1) = (self.spectrum.values[0], self.spectrum.values[1]);
        let upper = (self.energy - e0) / (e1 - e0);
        [1.0 - upper, upper]
    }

    /// Restores `Σq = 1` and `Σ q E = E` after round-off drift.
    fn project(&self, mut q: DVector<f64>) -> DVector<f64> {
        let n = q.len() as f64;
        let e = DVector::from_column_slice(&self.spectrum.values);
        let centered = e.add_scalar(-e.mean());
        let c2 = centered.norm_squared();
        for _ in 0..2 {
            let s = q.sum();
            q.add_scalar_mut((1.0 - s) / n);
            if c2 > 0.0 {
                let de = self.energy - q.dot(&e);
                q += &centered * (de / c2);
            }
        }
        q
    }

    /// Single draw on the exact (two-level) route.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<StateVector> {
        if self.dim() != 2 {
            return None;
        }
        Some(state_from_populations(&self.two_level_populations(), &self.spectrum, rng))
    }

    pub fn sample(&self, m: usize, seed: u64) -> SampleBatch {
        if self.dim() == 2 {
            return SampleBatch {
                states: par_streams(seed, m, |_, rng| self.draw(rng).expect("two-level")),
                diagnostics: SamplerDiagnostics::exact(SamplingMethod::Exact),
            };
        }
        self.hit_and_run(m, seed)
    }

    /// Populations from hit-and-run on the polytope slice.
    pub fn sample_populations(&self, m: usize, seed: u64) -> (Vec<DVector<f64>>, SamplerDiagnostics) {
        let batch = self.hit_and_run_raw(m, seed);
        let pops = batch.0;
        (pops, batch.1)
    }

    fn hit_and_run(&self, m: usize, seed: u64) -> SampleBatch {
        let (pops, diagnostics) = self.hit_and_run_raw(m, seed);
        let phase_seed = derive_seed(seed, 0x5048_4153);
        let states = pops
            .par_iter()
            .enumerate()
            .map(|(i, q)| {
                let mut rng = substream(phase_seed, i as u64);
                state_from_populations(q.as_slice(), &self.spectrum, &mut rng)
            })
            .collect();
        SampleBatch { states, diagnostics }
    }

    fn hit_and_run_raw(&self, m: usize, seed: u64) -> (Vec<DVector<f64>>, SamplerDiagnostics) {
        let config = &self.config;
        let chains = config.chains.max(2);
        let per_chain = m.div_ceil(chains);
        let chain_seed = derive_seed(seed, CHAIN_TAG);
        let n = self.dim();

        let outputs: Vec<SliceChain> = (0..chains)
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(chain_seed, c as u64);
                let mut q = self.start.clone();
                let mut moves = 0usize;
                let mut step = |q: &mut DVector<f64>, rng: &mut StreamRng| {
                    let mut d = DVector::zeros(n);
                    for b in &self.null_basis {
                        d += b * rng.sample::<f64, _>(StandardNormal);
                    }
                    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                    for k in 0..n {
                        if d[k] > 1e-300 {
                            lo = lo.max(-q[k] / d[k]);
                        } else if d[k] < -1e-300 {
                            hi = hi.min(-q[k] / d[k]);
                        }
                    }
                    if lo.is_finite() && hi.is_finite() && hi > lo {
                        let t = lo + (hi - lo) * rng.random::<f64>();
                        *q += &d * t;
                        q.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    moves += 1;
                    if moves.is_multiple_of(1000) {
                        *q = self.project(q.clone());
                    }
                };
                for _ in 0..config.burn_in {
                    step(&mut q, &mut rng);
                }
                let mut tune: Vec<Vec<f64>> = vec![Vec::with_capacity(config.tuning_steps); n];
                for _ in 0..config.tuning_steps {
                    step(&mut q, &mut rng);
                    for k in 0..n {
                        tune[k].push(q[k]);
                    }
                }
                let tau = tune
                    .iter()
                    .map(|t| stats::integrated_autocorr_time(t))
                    .fold(1.0, f64::max);
                let thin = (2.0 * tau).ceil() as usize;
                let mut out = Vec::with_capacity(per_chain);
                let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(per_chain); n];
                while out.len() < per_chain {
                    for _ in 0..thin {
                        step(&mut q, &mut rng);
                    }
                    let qp = self.project(q.clone());
                    for k in 0..n {
                        traces[k].push(qp[k]);
                    }
                    out.push(qp);
                }
                (out, traces, tau)
            })
            .collect();

        let tau = outputs.iter().map(|o| o.2).fold(1.0, f64::max);
        let r_hat = (0..n)
            .map(|k| {
                let per: Vec<Vec<f64>> = outputs.iter().map(|o| o.1[k].clone()).collect();
                stats::gelman_rubin(&per)
            })
            .filter(|r| r.is_finite())
            .fold(1.0, f64::max);
        let mut warnings = Vec::new();
        if r_hat > config.r_hat_max {
            warnings.push(format!("R-hat {r_hat:.3} exceeds {:.2}", config.r_hat_max));
        }
        let mut pops: Vec<DVector<f64>> = outputs.into_iter().flat_map(|o| o.0).collect();
        pops.truncate(m);
        let diagnostics = SamplerDiagnostics {
            method: SamplingMethod::HitAndRun,
            acceptance: None,
            r_hat: Some(r_hat),
            autocorr_time: Some(tau),
            burn_in: config.burn_in,
            thinning: (2.0 * tau).ceil() as usize,
            chains,
            warnings,
            proposal_log: Vec::new(),
        };
        (pops, diagnostics)
    }
}

/// Orthonormal basis of `{d : Σ d = 0, Σ d E = 0}`.
fn polytope_null_basis(e: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = e.len();
    let mut constraints = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())];
    let centered = e.add_scalar(-e.mean());
    if centered.norm() > 0.0 {
        constraints.push(centered.normalize());
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for k in 0..n {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        for c in constraints.iter().chain(basis.iter()) {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
        if basis.len() + constraints.len() == n {
            break;
        }
    }
    basis
}

/// Standard Gibbs state as a wave-function mixture: eigenstates with weights `e^{−βE_n}/Z_st`.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    spectrum: Spectrum,
    cumulative: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(ham: &dyn ParameterizedHamiltonian, beta: f64, lambda: &[f64]) -> Result<Self> {
        check_beta(beta)?;
        let spectrum = ham.hamiltonian(lambda)?.eigh()?;
        let e0 = spectrum.min();
        let weights: Vec<f64> = spectrum.values.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(GibbsSampler { spectrum, cumulative })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        let xi: f64 = rng.random();
        let k = self
            .cumulative
            .iter()
            .position(|c| xi < *c)
            .unwrap_or(self.cumulative.len() - 1);
        self.spectrum
            .eigenstate(k)
            .with_phase(rng.random::<f64>() * 2.0 * PI)
    }
}

/// A ready-to-use sampler for any [`EnsembleKind`].
#[derive(Debug, Clone)]
pub enum Ensemble {
    Uniform { dim: usize },
    Canonical(CanonicalSampler),
    Microcanonical(MicrocanonicalSampler),
    Gibbs(GibbsSampler),
}

impl Ensemble {
    pub fn new(spec: &EnsembleSpec) -> Result<Self> {
        Self::with_config(spec, ChainConfig::default())
    }

    pub fn with_config(spec: &EnsembleSpec, config: ChainConfig) -> Result<Self> {
        let ham = spec.hamiltonian.as_ref();
        Ok(match &spec.kind {
            EnsembleKind::UniformSphere => Ensemble::Uniform { dim: ham.dim() },
            EnsembleKind::CanonicalWf { beta, lambda } => {
                Ensemble::Canonical(CanonicalSampler::with_config(ham, *beta, lambda, config)?)
            }
            EnsembleKind::MicrocanonicalWf { energy, lambda } => Ensemble::Microcanonical(
                MicrocanonicalSampler::with_config(ham, *energy, lambda, config)?,
            ),
            EnsembleKind::StandardGibbs { beta, lambda } => {
                Ensemble::Gibbs(GibbsSampler::new(ham, *beta, lambda)?)
            }
        })
    }

    pub fn sample(&self, m: usize, seed: u64) -> SampleBatch {
        match self {
            Ensemble::Uniform { dim } => SampleBatch {
                states: par_streams(seed, m, |_, rng| sample_uniform_sphere(*dim, rng)),
                diagnostics: SamplerDiagnostics::exact(SamplingMethod::Exact),
            },
            Ensemble::Canonical(s) => s.sample(m, seed),
            Ensemble::Microcanonical(s) => s.sample(m, seed),
            Ensemble::Gibbs(s) => SampleBatch {
                states: par_streams(seed, m, |_, rng| s.draw(rng)),
                diagnostics: SamplerDiagnostics::exact(SamplingMethod::Exact),
            },
        }
    }
}

/// Monte Carlo estimate of a normalized volume integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionEstimate {
    /// Estimate per unit total volume.
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    /// `V_N`; `value · V_N` is the absolute integral.
    pub volume_constant: f64,
}

impl PartitionEstimate {
    pub fn absolute(&self) -> f64 {
        self.value * self.volume_constant
    }

    pub fn absolute_stderr(&self) -> f64 {
        self.stderr * self.volume_constant
    }
}

/// `Z/V_N = ⟨e^{−βh}⟩` over uniform states.
pub fn estimate_partition(
    ham: &dyn ParameterizedHamiltonian,
    beta: f64,
    lambda: &[f64],
    m: usize,
    seed: u64,
) -> Result<PartitionEstimate> {
    if m < 1000 {
        return Err(Error::TooFewSamples { got: m, required: 1000 });
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid("beta", format!("{beta} must be finite and >= 0")));
    }
    let h = ham.hamiltonian(lambda)?;
    let dim = ham.dim();
    let weights = par_streams(seed, m, |_, rng| {
        let s = sample_uniform_sphere(dim, rng);
        (-beta * expectation(&s, &h).expect("dimension fixed")).exp()
    });
    let (value, stderr) = stats::mean_stderr(&weights);
    Ok(PartitionEstimate {
        value,
        stderr,
        samples: m,
        volume_constant: volume_constant(dim),
    })
}

/// Integrated volume `Φ` and density of states `Ω` on an energy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DosEstimate {
    pub energies: Vec<f64>,
    /// `Φ(E)/V_N` and its binomial standard error.
    pub phi: Vec<(f64, f64)>,
    /// `Ω(E)/V_N` and its standard error.
    pub omega: Vec<(f64, f64)>,
    pub bin_width: f64,
    pub samples: usize,
    pub volume_constant: f64,
    /// `max_E |Φ(E) − Φ(E₀) − ∫_{E₀}^{E} Ω|` by the trapezoidal rule.
    pub integration_residual: f64,
}

/// Energy expectations of `m` uniform states.
pub fn uniform_energies(
    ham: &dyn ParameterizedHamiltonian,
    lambda: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let h = ham.hamiltonian(lambda)?;
    let dim = ham.dim();
    Ok(par_streams(seed, m, |_, rng| {
        expectation(&sample_uniform_sphere(dim, rng), &h).expect("dimension fixed")
    }))
}

/// `Φ` as the fraction of uniform draws with `h ≤ E`; `Ω` as the centered
/// difference of `Φ` over one bin width (Freedman–Diaconis unless given).
pub fn estimate_dos_and_volume(
    ham: &dyn ParameterizedHamiltonian,
    lambda: &[f64],
    energies: &[f64],
    m: usize,
    seed: u64,
    bin_width: Option<f64>,
) -> Result<DosEstimate> {
    let h = uniform_energies(ham, lambda, m, seed)?;
    dos_from_energies(&h, energies, bin_width, volume_constant(ham.dim()))
}

pub fn dos_from_energies(
    h: &[f64],
    energies: &[f64],
    bin_width: Option<f64>,
    volume: f64,
) -> Result<DosEstimate> {
    if h.is_empty() {
        return Err(Error::TooFewSamples { got: 0, required: 1 });
    }
    let mut sorted = h.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let width = bin_width.unwrap_or_else(|| stats::freedman_diaconis_width(&sorted));
    if !(width > 0.0) {
        return Err(invalid("bin_width", "must be > 0"));
    }
    let count_le = |e: f64| sorted.partition_point(|v| *v <= e) as f64;
    let phi: Vec<(f64, f64)> = energies
        .iter()
        .map(|&e| {
            let p = count_le(e) / m;
            (p, (p * (1.0 - p) / m).sqrt())
        })
        .collect();
    let omega: Vec<(f64, f64)> = energies
        .iter()
        .map(|&e| {
            let q = (count_le(e + width / 2.0) - count_le(e - width / 2.0)) / m;
            (q / width, (q * (1.0 - q) / m).sqrt() / width)
        })
        .collect();
    let mut residual: f64 = 0.0;
    let mut integral = 0.0;
    for k in 1..energies.len() {
        integral += 0.5 * (omega[k].0 + omega[k - 1].0) * (energies[k] - energies[k - 1]);
        residual = residual.max((phi[k].0 - phi[0].0 - integral).abs());
    }
    Ok(DosEstimate {
        energies: energies.to_vec(),
        phi,
        omega,
        bin_width: width,
        samples: sorted.len(),
        volume_constant: volume,
        integration_residual: residual,
    })
}

/// Sample estimate of `ρ̂ = ⟨c c†⟩` with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct DensityMatrixEstimate {
    pub matrix: DMatrix<C64>,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    pub samples: usize,
}

impl DensityMatrixEstimate {
    /// `V† ρ̂ V` for the eigenbasis `V` of a spectrum.
    pub fn in_basis(&self, spectrum: &Spectrum) -> DMatrix<C64> {
        spectrum.vectors.adjoint() * &self.matrix * &spectrum.vectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn density_matrix_from_samples(samples: &[StateVector]) -> Result<DensityMatrixEstimate> {
    if samples.len() < 1000 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            required: 1000,
        });
    }
    let n = samples[0].dim();
    if let Some(bad) = samples.iter().find(|s| s.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.dim(),
        });
    }
    let amps: Vec<DVector<C64>> = samples.iter().map(StateVector::amplitudes).collect();
    let mut matrix = DMatrix::<C64>::zeros(n, n);
    let mut stderr_re = DMatrix::<f64>::zeros(n, n);
    let mut stderr_im = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let entries: Vec<C64> = amps.iter().map(|c| c[j] * c[k].conj()).collect();
            let re: Vec<f64> = entries.iter().map(|z| z.re).collect();
            let im: Vec<f64> = entries.iter().map(|z| z.im).collect();
            let (mr, sr) = stats::mean_stderr(&re);
            let (mi, si) = stats::mean_stderr(&im);
            let z = if j == k { C64::new(mr, 0.0) } else { C64::new(mr, mi) };
            matrix[(j, k)] = z;
            matrix[(k, j)] = z.conj();
            stderr_re[(j, k)] = sr;
            stderr_re[(k, j)] = sr;
            stderr_im[(j, k)] = si;
            stderr_im[(k, j)] = si;
        }
    }
    Ok(DensityMatrixEstimate {
        matrix,
        stderr_re,
        stderr_im,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lzmodel;
    use crate::statespace::{bloch_vector, LinearHamiltonian};

    fn lz(delta: f64) -> Arc<LinearHamiltonian> {
        Arc::new(lzmodel::lz_hamiltonian(delta))
    }

    #[test]
    fn volume_constants() {
        assert!((volume_constant(2) - PI * PI).abs() < 1e-12);
        assert!((volume_constant(3) - PI.powi(3) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let ham = lz(1.0);
        let bad_beta = EnsembleSpec::new(
            EnsembleKind::CanonicalWf { beta: -1.0, lambda: vec![0.0] },
            ham.clone(),
        );
        assert!(bad_beta.validate().is_err());
        for e in [-1.0, 1.0, 1.5] {
            let spec = EnsembleSpec::new(
                EnsembleKind::MicrocanonicalWf { energy: e, lambda: vec![0.0] },
                ham.clone(),
            );
            assert!(matches!(spec.validate(), Err(Error::EnergyOutsideSpectrum { .. })));
        }
        let ok = EnsembleSpec::new(
            EnsembleKind::MicrocanonicalWf { energy: 0.3, lambda: vec![0.0] },
            ham,
        );
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn uniform_sphere_mean_bloch_vector_vanishes() {
        let m = 100_000;
        let states = par_streams(1, m, |_, rng| sample_uniform_sphere(2, rng));
        let tol = 4.0 / (m as f64).sqrt();
        for axis in 0..3 {
            let comp: Vec<f64> = states.iter().map(|s| bloch_vector(s).unwrap()[axis]).collect();
            assert!(stats::mean(&comp).abs() < tol, "axis {axis}");
        }
        // cos γ is uniform on [−1, 1]
        let cz: Vec<f64> = states.iter().map(|s| bloch_vector(s).unwrap()[2]).collect();
        let ks = stats::ks_statistic(&cz, |u| ((u + 1.0) / 2.0).clamp(0.0, 1.0));
        assert!(ks < stats::ks_critical_1pct(m as f64), "ks = {ks}");
        assert!(states.iter().all(|s| (s.norm_sqr() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn uniform_sphere_populations_are_symmetric() {
        let m = 30_000;
        let states = par_streams(2, m, |_, rng| sample_uniform_sphere(3, rng));
        for k in 0..3 {
            let q: Vec<f64> = states.iter().map(|s| s.amplitudes()[k].norm_sqr()).collect();
            let (mean, se) = stats::mean_stderr(&q);
            assert!((mean - 1.0 / 3.0).abs() < 4.0 * se);
        }
    }

    #[test]
    fn canonical_two_level_mean_energy() {
        // ε = 1, β = 1: mean h = 1 − coth(1)
        let ham = lz(1.0);
        let sampler = CanonicalSampler::new(ham.as_ref(), 1.0, &[0.0]).unwrap();
        assert_eq!(sampler.method(), SamplingMethod::Exact);
        let batch = sampler.sample(100_000, 3);
        let h: Vec<f64> = batch
            .states
            .iter()
            .map(|s| expectation(s, sampler.hamiltonian()).unwrap())
            .collect();
        let (mean, se) = stats::mean_stderr(&h);
        let oracle = bloch_quadrature_mean_energy(1.0, 0.0, 1.0);
        assert!((oracle - (1.0 - 1.0 / 1f64.tanh())).abs() < 1e-5);
        assert!((mean - oracle).abs() < 4.0 * se, "{mean} vs {oracle} ± {se}");
        // analytic CDF of h on [−ε, ε] with weight e^{−βh}
        let a = 1.0f64;
        let cdf = |x: f64| ((a).exp() - (-a * x).exp()) / (a.exp() - (-a).exp());
        let ks = stats::ks_statistic(&h, |x| cdf(x.clamp(-1.0, 1.0)));
        assert!(ks < stats::ks_critical_1pct(h.len() as f64), "ks = {ks}");
    }

    /// Mean energy by 2D midpoint quadrature over the Bloch angles (γ, δ).
    fn bloch_quadrature_mean_energy(beta: f64, lambda: f64, delta: f64) -> f64 {
        let n = 800;
        let (mut z, mut e) = (0.0, 0.0);
        for i in 0..n {
            let g = PI * (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let d = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                let h = lambda * g.cos() + delta * d.sin() * g.sin();
                let w = g.sin() * (-beta * h).exp();
                z += w;
                e += w * h;
            }
        }
        e / z
    }

    #[test]
    fn canonical_high_temperature_matches_uniform() {
        let ham = lz(1.0);
        let sampler = CanonicalSampler::new(ham.as_ref(), 1e-8, &[0.3]).unwrap();
        let h = sampler.hamiltonian().clone();
        let a: Vec<f64> = sampler
            .sample(20_000, 5)
            .states
            .iter()
            .map(|s| expectation(s, &h).unwrap())
            .collect();
        let b: Vec<f64> = Ensemble::Uniform { dim: 2 }
            .sample(20_000, 6)
            .states
            .iter()
            .map(|s| expectation(s, &h).unwrap())
            .collect();
        let d = stats::ks_two_sample(&a, &b);
        assert!(d < stats::ks_critical_1pct(10_000.0), "d = {d}");
    }

    #[test]
    fn canonical_low_temperature_concentrates() {
        let ham = lz(1.0);
        let sampler = CanonicalSampler::new(ham.as_ref(), 50.0, &[0.0]).unwrap();
        let h: Vec<f64> = sampler
            .sample(10_000, 7)
            .states
            .iter()
            .map(|s| expectation(s, sampler.hamiltonian()).unwrap())
            .collect();
        let (mean, se) = stats::mean_stderr(&h);
        assert!((mean - lzmodel::energy_canonical(50.0, 0.0, 1.0)).abs() < 4.0 * se);
        assert!((mean + 1.0).abs() < 0.025);
    }

    /// Canonical mean energy on the simplex for spectrum `e`, by quadrature (N = 3).
    fn simplex_mean_energy(e: [f64; 3], beta: f64) -> f64 {
        let n = 1500;
        let (mut z, mut acc) = (0.0, 0.0);
        for i in 0..n {
            let q0 = (i as f64 + 0.5) / n as f64;
            let m = ((1.0 - q0) * n as f64).ceil() as usize;
            for j in 0..m {
                let q1 = (j as f64 + 0.5) / n as f64;
                let q2 = 1.0 - q0 - q1;
                if q2 < 0.0 {
                    continue;
                }
                let h = q0 * e[0] + q1 * e[1] + q2 * e[2];
                let w = (-beta * h).exp();
                z += w;
                acc += w * h;
            }
        }
        acc / z
    }

    fn three_level() -> Arc<LinearHamiltonian> {
        Arc::new(
            LinearHamiltonian::new(
                HermitianOperator::from_rows(
                    3,
                    &[-1.0, 0.2, 0.0, 0.2, 0.0, 0.1, 0.0, 0.1, 1.0],
                    &[0.0, 0.0, 0.3, 0.0, 0.0, 0.0, -0.3, 0.0, 0.0],
                )
                .unwrap(),
                vec![HermitianOperator::diagonal(&[1.0, 0.0, -1.0])],
            )
            .unwrap(),
        )
    }

    #[test]
    fn canonical_rejection_matches_simplex_quadrature() {
        let ham = three_level();
        let sampler = CanonicalSampler::new(ham.as_ref(), 1.5, &[0.0]).unwrap();
        assert_eq!(sampler.method(), SamplingMethod::Rejection);
        let spec = sampler.hamiltonian().eigh().unwrap();
        let e = [spec.values[0], spec.values[1], spec.values[2]];
        let oracle = simplex_mean_energy(e, 1.5);
        let h: Vec<f64> = sampler
            .sample(40_000, 8)
            .states
            .iter()
            .map(|s| expectation(s, sampler.hamiltonian()).unwrap())
            .collect();
        let (mean, se) = stats::mean_stderr(&h);
        assert!((mean - oracle).abs() < 4.0 * se, "{mean} vs {oracle} ± {se}");
    }

    #[test]
    fn canonical_switches_to_metropolis_and_converges() {
        let ham = three_level();
        let config = ChainConfig {
            log_proposals: 500,
            ..ChainConfig::default()
        };
        let beta = 40.0;
        let sampler = CanonicalSampler::with_config(ham.as_ref(), beta, &[0.0], config).unwrap();
        assert_eq!(sampler.method(), SamplingMethod::Metropolis);
        let spec = sampler.hamiltonian().eigh().unwrap();
        let oracle = simplex_mean_energy([spec.values[0], spec.values[1], spec.values[2]], beta);
        let batch = sampler.sample(20_000, 9);
        let d = &batch.diagnostics;
        assert!(d.r_hat.unwrap() < 1.1, "{d:?}");
        assert!(d.warnings.is_empty());
        let h: Vec<f64> = batch
            .states
            .iter()
            .map(|s| expectation(s, sampler.hamiltonian()).unwrap())
            .collect();
        let (mean, se) = stats::mean_stderr(&h);
        // thinned chain: residual correlation inflates the naive error
        assert!((mean - oracle).abs() < 6.0 * se, "{mean} vs {oracle} ± {se}");
        assert!(batch.states.iter().all(|s| (s.norm_sqr() - 1.0).abs() < 1e-12));

        // detailed balance on logged proposals: π(x) a(x→y) = π(y) a(y→x)
        assert_eq!(d.proposal_log.len(), 500 * d.chains);
        for r in &d.proposal_log {
            let reverse = (r.log_density_from - r.log_density_to).exp().min(1.0);
            let lhs = r.log_density_from + r.acceptance.ln();
            let rhs = r.log_density_to + reverse.ln();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn microcanonical_two_level_equator() {
        let ham = lz(1.0);
        let sampler = MicrocanonicalSampler::new(ham.as_ref(), 0.0, &[0.0]).unwrap();
        let h = ham.build(&[0.0]);
        let states = sampler.sample(20_000, 10).states;
        // σx is the energy axis; the shell is the great circle ⟨σx⟩ = 0
        let mut azimuths = Vec::new();
        for s in &states {
            assert!(expectation(s, &h).unwrap().abs() < 1e-10);
            let [_, y, z] = bloch_vector(s).unwrap();
            azimuths.push(z.atan2(y).rem_euclid(2.0 * PI));
        }
        let ks = stats::ks_statistic(&azimuths, |a| a / (2.0 * PI));
        assert!(ks < stats::ks_critical_1pct(states.len() as f64));
    }

    #[test]
    fn microcanonical_two_level_shell() {
        let ham = lz(1.0);
        let sampler = MicrocanonicalSampler::new(ham.as_ref(), 0.5, &[0.0]).unwrap();
        for s in sampler.sample(1000, 11).states {
            assert!((expectation(&s, &ham.build(&[0.0])).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!(MicrocanonicalSampler::new(ham.as_ref(), 1.0, &[0.0]).is_err());
    }

    #[test]
    fn microcanonical_three_level_matches_grid_average() {
        // spectrum {−1, 0, 1}, E = 0: q = (a, 1 − 2a, a) with a uniform on [0, 1/2]
        let ham = Arc::new(
            LinearHamiltonian::new(HermitianOperator::diagonal(&[-1.0, 0.0, 1.0]), vec![]).unwrap(),
        );
        let n = 10_000;
        let grid: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let a = 0.5 * (i as f64 + 0.5) / n as f64;
                [a, 1.0 - 2.0 * a, a]
            })
            .collect();
        let oracle: Vec<f64> = (0..3)
            .map(|k| grid.iter().map(|q| q[k]).sum::<f64>() / n as f64)
            .collect();

        let sampler = MicrocanonicalSampler::new(ham.as_ref(), 0.0, &[]).unwrap();
        assert_eq!(sampler.method(), SamplingMethod::HitAndRun);
        let batch = sampler.sample(20_000, 12);
        let h = ham.build(&[]);
        for s in &batch.states {
            assert!(expectation(s, &h).unwrap().abs() < 1e-8);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
        for k in 0..3 {
            let q: Vec<f64> = batch.states.iter().map(|s| s.amplitudes()[k].norm_sqr()).collect();
            let (mean, se) = stats::mean_stderr(&q);
            assert!((mean - oracle[k]).abs() < 4.0 * se, "k={k}: {mean} vs {}", oracle[k]);
        }
    }

    #[test]
    fn microcanonical_four_level_shell_tolerance() {
        let ham = Arc::new(
            LinearHamiltonian::new(HermitianOperator::diagonal(&[-2.0, -0.5, 0.7, 1.9]), vec![])
                .unwrap(),
        );
        let sampler = MicrocanonicalSampler::new(ham.as_ref(), 0.9, &[]).unwrap();
        let (pops, diag) = sampler.sample_populations(4000, 13);
        assert!(diag.r_hat.unwrap() < 1.1);
        for q in pops {
            assert!(q.iter().all(|v| *v >= 0.0));
            assert!((q.sum() - 1.0).abs() < 1e-10);
            let e = q[0] * -2.0 + q[1] * -0.5 + q[2] * 0.7 + q[3] * 1.9;
            assert!((e - 0.9).abs() < 1e-8);
        }
    }

    #[test]
    fn partition_estimates() {
        let ham = lz(1.0);
        let z0 = estimate_partition(ham.as_ref(), 0.0, &[0.4], 1000, 1).unwrap();
        assert_eq!(z0.value, 1.0);
        assert_eq!(z0.stderr, 0.0);

        let z = estimate_partition(ham.as_ref(), 1.0, &[0.0], 100_000, 2).unwrap();
        let exact = lzmodel::z_analytic(1.0, 0.0, 1.0);
        assert!((z.absolute() - exact).abs() < 4.0 * z.absolute_stderr());

        let ham34 = lz(4.0);
        let z = estimate_partition(ham34.as_ref(), 1.0, &[3.0], 100_000, 3).unwrap();
        let exact = PI * PI * 5f64.sinh() / 5.0;
        assert!((z.absolute() - exact).abs() < 4.0 * z.absolute_stderr());

        let other = estimate_partition(ham34.as_ref(), 1.0, &[3.0], 100_000, 4).unwrap();
        let combined = (z.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        assert!((z.value - other.value).abs() < 4.0 * combined);
        assert!(estimate_partition(ham.as_ref(), 1.0, &[0.0], 999, 1).is_err());
    }

    #[test]
    fn dos_and_volume_two_level() {
        let ham = lz(1.0);
        let grid: Vec<f64> = (0..=16).map(|k| -0.8 + 0.1 * k as f64).collect();
        let est = estimate_dos_and_volume(ham.as_ref(), &[0.0], &grid, 100_000, 5, None).unwrap();
        for (k, &e) in grid.iter().enumerate() {
            let (phi, se) = est.phi[k];
            assert!((phi - (e + 1.0) / 2.0).abs() < 4.0 * se + 1e-12, "E = {e}");
            let (om, se) = est.omega[k];
            assert!((om - 0.5).abs() < 4.0 * se, "E = {e}: {om} ± {se}");
        }
        assert!(est.integration_residual < 0.01);
        let full = estimate_dos_and_volume(ham.as_ref(), &[0.0], &[1.0, 1.5], 10_000, 5, Some(0.1))
            .unwrap();
        assert_eq!(full.phi[0].0, 1.0);
        assert_eq!(full.phi[1].0, 1.0);
    }

    #[test]
    fn density_matrices() {
        let ham = lz(1.0);
        let uniform = Ensemble::Uniform { dim: 2 }.sample(50_000, 6).states;
        let rho = density_matrix_from_samples(&uniform).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                let target = if j == k { 0.5 } else { 0.0 };
                assert!((rho.matrix[(j, k)].re - target).abs() < 4.0 * rho.stderr_re[(j, k)] + 1e-15);
                assert!(rho.matrix[(j, k)].im.abs() < 4.0 * rho.stderr_im[(j, k)] + 1e-15);
            }
        }
        let trace = rho.matrix[(0, 0)].re + rho.matrix[(1, 1)].re;
        assert!((trace - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-10);

        // Δ = 0, βλ = 1
        let ham0 = lz(0.0);
        let states = CanonicalSampler::new(ham0.as_ref(), 1.0, &[1.0]).unwrap().sample(100_000, 7).states;
        let rho = density_matrix_from_samples(&states).unwrap();
        let [a, b] = lzmodel::rho_canonical_analytic_delta0(1.0, 1.0);
        assert!((rho.matrix[(0, 0)].re - a).abs() < 4.0 * rho.stderr_re[(0, 0)]);
        assert!((rho.matrix[(1, 1)].re - b).abs() < 4.0 * rho.stderr_re[(1, 1)]);

        // Δ ≠ 0: commutes with H in the limit, off-diagonal eigenbasis entries vanish
        let states = CanonicalSampler::new(ham.as_ref(), 1.0, &[0.6]).unwrap().sample(100_000, 8).states;
        let rho = density_matrix_from_samples(&states).unwrap();
        let spec = ham.build(&[0.6]).eigh().unwrap();
        let eb = rho.in_basis(&spec);
        let se = rho.stderr_re.amax().max(rho.stderr_im.amax());
        assert!(eb[(0, 1)].norm() < 4.0 * se * 2f64.sqrt());

        // βλ → ∞: ground-state projector
        let states = CanonicalSampler::new(ham0.as_ref(), 1e4, &[1.0]).unwrap().sample(2000, 9).states;
        let rho = density_matrix_from_samples(&states).unwrap();
        assert!(rho.matrix[(0, 0)].re < 1e-3);
        assert!(density_matrix_from_samples(&states[..999]).is_err());
    }

    #[test]
    fn gibbs_sampler_reproduces_standard_populations() {
        let ham = lz(0.0);
        let states = GibbsSampler::new(ham.as_ref(), 1.0, &[1.0]).unwrap();
        let batch: Vec<StateVector> = par_streams(1, 50_000, |_, rng| states.draw(rng));
        let rho = density_matrix_from_samples(&batch).unwrap();
        let p_up = (-1f64).exp() / (2.0 * 1f64.cosh());
        assert!((rho.matrix[(0, 0)].re - p_up).abs() < 4.0 * rho.stderr_re[(0, 0)]);
    }

    #[test]
    fn batches_are_seed_deterministic() {
        let ham = lz(1.0);
        let s = CanonicalSampler::new(ham.as_ref(), 1.0, &[0.3]).unwrap();
        assert_eq!(s.sample(500, 42).states, s.sample(500, 42).states);
        assert_ne!(s.sample(500, 42).states, s.sample(500, 43).states);
    }
}
