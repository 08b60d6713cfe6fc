//! Work statistics: expectation-work samples, two-measurement atoms, and the
//! fluctuation-relation estimators built on them.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::{propagator, Protocol, StepPolicy, WorkMeter};
use crate::ensembles::{
    dos_from_energies, uniform_energies, volume_constant, ChainConfig, Ensemble, EnsembleKind,
    EnsembleSpec, SamplerDiagnostics,
};
use crate::error::{invalid, Error, Result};
use crate::rng::derive_seed;
use crate::statespace::ParameterizedHamiltonian;
use crate::stats;

/// Work draws with their provenance.
#[derive(Debug, Clone)]
pub struct WorkSampleSet {
    pub values: Vec<f64>,
    pub ensemble: EnsembleKind,
    pub protocol: String,
    pub seed: u64,
    /// Substream index each draw was generated from (the chain index for Markov-chain samplers).
    pub streams: Vec<u64>,
    pub propagator_steps: usize,
    pub diagnostics: SamplerDiagnostics,
}

impl WorkSampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draws `m` initial states, evolves them under `protocol`, and records
/// `w = h(U s; λ_τ) − h(s; λ_0)` for each.
pub fn sample_work_distribution(
    spec: &EnsembleSpec,
    protocol: &Protocol,
    m: usize,
    steps: StepPolicy,
    seed: u64,
) -> Result<WorkSampleSet> {
    sample_work_distribution_with(spec, protocol, m, steps, seed, ChainConfig::default())
}

pub fn sample_work_distribution_with(
    spec: &EnsembleSpec,
    protocol: &Protocol,
    m: usize,
    steps: StepPolicy,
    seed: u64,
    chains: ChainConfig,
) -> Result<WorkSampleSet> {
    if let EnsembleKind::StandardGibbs { .. } = spec.kind {
        return Err(Error::UnsupportedEnsemble(
            "expectation work needs a wave-function ensemble",
        ));
    }
    if m < 1000 {
        return Err(Error::TooFewSamples { got: m, required: 1000 });
    }
    spec.validate()?;
    let ham = spec.hamiltonian.as_ref();
    let meter = WorkMeter::new(ham, protocol, propagator(ham, protocol, steps)?)?;
    let ensemble = Ensemble::with_config(spec, chains)?;
    let batch = ensemble.sample(m, seed);
    let values = batch
        .states
        .par_iter()
        .map(|s| meter.work(s))
        .collect::<Result<Vec<f64>>>()?;
    let streams = match batch.diagnostics.chains {
        0 => (0..m as u64).collect(),
        c => {
            let per = m.div_ceil(c);
            (0..m).map(|i| (i / per) as u64).collect()
        }
    };
    Ok(WorkSampleSet {
        values,
        ensemble: spec.kind.clone(),
        protocol: protocol.label().to_string(),
        seed,
        streams,
        propagator_steps: meter.propagator().steps(),
        diagnostics: batch.diagnostics,
    })
}

/// Interval `[E_min(λ_τ) − E_max(λ_0), E_max(λ_τ) − E_min(λ_0)]` containing every work value.
pub fn work_support_bound(
    ham: &dyn ParameterizedHamiltonian,
    protocol: &Protocol,
) -> Result<(f64, f64)> {
    let s0 = ham.hamiltonian(&protocol.start())?.eigh()?;
    let s1 = ham.hamiltonian(&protocol.end())?.eigh()?;
    Ok((s1.min() - s0.max(), s1.max() - s0.min()))
}

/// Discrete work distribution of the two-measurement scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicWorkPdf {
    /// `(W, probability)` for every pair `(n, m)` of initial and final eigenstates.
    pub atoms: Vec<(f64, f64)>,
}

impl AtomicWorkPdf {
    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `Σ p e^{−βW}`.
    pub fn exp_average(&self, beta: f64) -> f64 {
        self.atoms.iter().map(|(w, p)| p * (-beta * w).exp()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(w, p)| p * w).sum()
    }

    /// Atoms with probability above `tol`, coincident locations (within `tol`) merged.
    pub fn support(&self, tol: f64) -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = self.atoms.iter().copied().filter(|a| a.1 > tol).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (w, p) in atoms {
            match merged.last_mut() {
                Some(last) if (last.0 - w).abs() <= tol => last.1 += p,
                _ => merged.push((w, p)),
            }
        }
        merged
    }

    /// Probability mass inside bars of width `width` centered on `centers`.
    pub fn binned(&self, centers: &[f64], width: f64) -> Vec<f64> {
        centers
            .iter()
            .map(|c| {
                self.atoms
                    .iter()
                    .filter(|(w, _)| *w >= c - width / 2.0 && *w < c + width / 2.0)
                    .map(|a| a.1)
                    .sum()
            })
            .collect()
    }
}

/// `p_st(W)` from the exact propagator: atoms at `E_m^τ − E_n^0` with weight
/// `e^{−βE_n^0}/Z_st · |⟨m_τ|U|n_0⟩|²`.
pub fn tms_work_distribution_exact(
    ham: &dyn ParameterizedHamiltonian,
    beta: f64,
    protocol: &Protocol,
    steps: StepPolicy,
) -> Result<AtomicWorkPdf> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid("beta", format!("{beta} must be finite and > 0")));
    }
    let s0 = ham.hamiltonian(&protocol.start())?.eigh()?;
    let s1 = ham.hamiltonian(&protocol.end())?.eigh()?;
    let u = propagator(ham, protocol, steps)?;
    let transition: DMatrix<f64> = (s1.vectors.adjoint() * u.unitary() * &s0.vectors).map(|z| z.norm_sqr());
    let e_min = s0.min();
    let weights: Vec<f64> = s0.values.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut atoms = Vec::with_capacity(s0.values.len() * s1.values.len());
    for (n, e0) in s0.values.iter().enumerate() {
        for (m, e1) in s1.values.iter().enumerate() {
            atoms.push((e1 - e0, weights[n] / z * transition[(m, n)]));
        }
    }
    Ok(AtomicWorkPdf { atoms })
}

/// `Z_st(β, λ) = Σ e^{−βE_n}`.
pub fn z_standard(ham: &dyn ParameterizedHamiltonian, beta: f64, lambda: &[f64]) -> Result<f64> {
    let spec = ham.hamiltonian(lambda)?.eigh()?;
    Ok(spec.values.iter().map(|e| (-beta * e).exp()).sum())
}

/// Binned work density.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub densities: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Draws that fell outside the edges.
    pub outside: u64,
}

impl WorkHistogram {
    pub fn from_edges(values: &[f64], edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("edges", "need at least two strictly increasing edges"));
        }
        let nbins = edges.len() - 1;
        let mut counts = vec![0u64; nbins];
        let mut outside = 0;
        let (lo, hi) = (edges[0], edges[nbins]);
        for &v in values {
            if !(v >= lo && v <= hi) {
                outside += 1;
                continue;
            }
            let k = edges.partition_point(|e| *e <= v).saturating_sub(1).min(nbins - 1);
            counts[k] += 1;
        }
        let total: u64 = counts.iter().sum();
        let n = total.max(1) as f64;
        let mut densities = Vec::with_capacity(nbins);
        let mut stderr = Vec::with_capacity(nbins);
        for (k, &c) in counts.iter().enumerate() {
            let width = edges[k + 1] - edges[k];
            let p = c as f64 / n;
            densities.push(p / width);
            stderr.push((p * (1.0 - p) / n).sqrt() / width);
        }
        Ok(WorkHistogram {
            edges,
            counts,
            densities,
            stderr,
            outside,
        })
    }

    /// Bars of width `width` centered on integer multiples of `width`.
    pub fn fixed_width(values: &[f64], width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", "must be > 0"));
        }
        let (lo, hi) = min_max(values);
        let k0 = (lo / width - 0.5).floor() as i64;
        let k1 = (hi / width + 0.5).ceil() as i64;
        let edges = (k0..=k1).map(|k| (k as f64 + 0.5) * width).collect();
        Self::from_edges(values, edges)
    }

    /// Freedman–Diaconis bins spanning the sample.
    pub fn freedman_diaconis(values: &[f64]) -> Result<Self> {
        let width = stats::freedman_diaconis_width(values);
        let (lo, hi) = min_max(values);
        let nbins = (((hi - lo) / width).ceil() as usize).max(1);
        let edges = (0..=nbins).map(|k| lo + (hi - lo) * k as f64 / nbins as f64).collect();
        Self::from_edges(values, edges)
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    /// `Σ density · width`.
    pub fn integral(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// `⟨e^{−βw}⟩` with its jackknife error, and the implied free-energy difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JarzynskiEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// `−β⁻¹ ln⟨e^{−βw}⟩`.
    pub delta_f: f64,
    pub delta_f_stderr: f64,
}

pub fn jarzynski_estimate(ws: &WorkSampleSet, beta: f64) -> Result<JarzynskiEstimate> {
    jarzynski_from_values(&ws.values, beta)
}

pub fn jarzynski_from_values(values: &[f64], beta: f64) -> Result<JarzynskiEstimate> {
    if values.len() < 1000 {
        return Err(Error::TooFewSamples {
            got: values.len(),
            required: 1000,
        });
    }
    let weights: Vec<f64> = values.iter().map(|w| (-beta * w).exp()).collect();
    let estimate = stats::mean(&weights);
    let (_, stderr) = stats::jackknife(&weights, weights.len(), |m| m);
    let (_, delta_f_stderr) = stats::jackknife(&weights, weights.len(), |m| -m.ln() / beta);
    Ok(JarzynskiEstimate {
        estimate,
        stderr,
        delta_f: -estimate.ln() / beta,
        delta_f_stderr,
    })
}

/// One bin of the Crooks log-ratio fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrooksBin {
    pub work: f64,
    pub forward_count: u64,
    pub reverse_count: u64,
    /// `ln[p(w)/p̃(−w)]`.
    pub log_ratio: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrooksReport {
    pub fit: stats::LineFit,
    pub bins: Vec<CrooksBin>,
    pub bin_width: f64,
}

impl CrooksReport {
    pub fn slope(&self) -> f64 {
        self.fit.slope
    }
    pub fn intercept(&self) -> f64 {
        self.fit.intercept
    }
}

/// Bin options for the Crooks fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrooksConfig {
    /// Shared bin width; Freedman–Diaconis on the pooled sample when `None`.
    pub bin_width: Option<f64>,
    pub min_count: u64,
    pub min_bins: usize,
}

impl Default for CrooksConfig {
    fn default() -> Self {
        CrooksConfig {
            bin_width: None,
            min_count: 25,
            min_bins: 5,
        }
    }
}

/// Weighted fit of `ln[p(w)/p̃(−w)]` against `w` on a shared bin grid.
///
/// `fwd` must come from the canonical ensemble at `λ_0` under `λ_t`, `rev`
/// from the canonical ensemble at `λ_τ` under `λ_{τ−t}`. The relation predicts
/// slope β and intercept −βΔF.
pub fn crooks_canonical_check(
    fwd: &WorkSampleSet,
    rev: &WorkSampleSet,
    config: CrooksConfig,
) -> Result<CrooksReport> {
    let mirrored: Vec<f64> = rev.values.iter().map(|w| -w).collect();
    let pooled: Vec<f64> = fwd.values.iter().chain(&mirrored).copied().collect();
    let width = config
        .bin_width
        .unwrap_or_else(|| stats::freedman_diaconis_width(&pooled));
    let (lo, hi) = min_max(&pooled);
    let nbins = (((hi - lo) / width).ceil() as usize).max(1);
    let edges: Vec<f64> = (0..=nbins).map(|k| lo + width * k as f64).collect();
    let hf = WorkHistogram::from_edges(&fwd.values, edges.clone())?;
    let hr = WorkHistogram::from_edges(&mirrored, edges)?;
    let (nf, nr) = (fwd.len() as f64, rev.len() as f64);
    let bins: Vec<CrooksBin> = hf
        .centers()
        .into_iter()
        .enumerate()
        .filter(|(k, _)| hf.counts[*k] >= config.min_count && hr.counts[*k] >= config.min_count)
        .map(|(k, w)| {
            let (cf, cr) = (hf.counts[k] as f64, hr.counts[k] as f64);
            CrooksBin {
                work: w,
                forward_count: hf.counts[k],
                reverse_count: hr.counts[k],
                log_ratio: (cf / nf).ln() - (cr / nr).ln(),
                variance: 1.0 / cf - 1.0 / nf + 1.0 / cr - 1.0 / nr,
            }
        })
        .collect();
    if bins.len() < config.min_bins {
        return Err(Error::InsufficientOverlap {
            usable: bins.len(),
            required: config.min_bins,
        });
    }
    let x: Vec<f64> = bins.iter().map(|b| b.work).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.log_ratio).collect();
    let v: Vec<f64> = bins.iter().map(|b| b.variance).collect();
    let fit = stats::weighted_line_fit(&x, &y, &v).ok_or(Error::InsufficientOverlap {
        usable: bins.len(),
        required: config.min_bins,
    })?;
    Ok(CrooksReport {
        fit,
        bins,
        bin_width: width,
    })
}

/// Forward and reverse canonical work samples for a Crooks test.
pub fn crooks_samples(
    ham: std::sync::Arc<dyn ParameterizedHamiltonian>,
    beta: f64,
    protocol: &Protocol,
    m: usize,
    steps: StepPolicy,
    seed: u64,
) -> Result<(WorkSampleSet, WorkSampleSet)> {
    let fwd_spec = EnsembleSpec::new(
        EnsembleKind::CanonicalWf {
            beta,
            lambda: protocol.start(),
        },
        ham.clone(),
    );
    let rev_spec = EnsembleSpec::new(
        EnsembleKind::CanonicalWf {
            beta,
            lambda: protocol.end(),
        },
        ham,
    );
    let fwd = sample_work_distribution(&fwd_spec, protocol, m, steps, derive_seed(seed, 1))?;
    let rev = sample_work_distribution(&rev_spec, &protocol.reversed(), m, steps, derive_seed(seed, 2))?;
    Ok((fwd, rev))
}

/// Options for the microcanonical fluctuation-relation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroFrConfig {
    /// Width of the work window around each target; the window bias is O(width²).
    pub bin_width: f64,
    /// Uniform draws used by the density-of-states prediction.
    pub dos_samples: usize,
    /// Energy window for the finite-difference Ω; Freedman–Diaconis when `None`.
    pub dos_bin_width: Option<f64>,
}

impl Default for MicroFrConfig {
    fn default() -> Self {
        MicroFrConfig {
            bin_width: 0.05,
            dos_samples: 200_000,
            dos_bin_width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroFrEntry {
    pub work: f64,
    /// `p_E(w)` over the window around `w`, with standard error.
    pub forward: (f64, f64),
    /// `p̃_{E+w}(−w)` over the mirrored window.
    pub reverse: (f64, f64),
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// `Ω(E + w, λ_τ)/Ω(E, λ_0)` from the density-of-states estimator.
    pub predicted: f64,
    pub predicted_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroFrReport {
    pub energy: f64,
    pub entries: Vec<MicroFrEntry>,
    /// Targets dropped because a window was empty, with the side that was empty.
    pub excluded: Vec<(f64, String)>,
}

/// Tests `p_E(w)/p̃_{E+w}(−w) = Ω(E + w, λ_τ)/Ω(E, λ_0)` at each target `w`.
///
/// Forward draws come from the shell `h = E` at `λ_0`; for each target a
/// separate reverse ensemble is drawn on the shell `h = E + w` at `λ_τ` and
/// run under the reversed protocol.
pub fn microcanonical_fr_check(
    ham: std::sync::Arc<dyn ParameterizedHamiltonian>,
    energy: f64,
    protocol: &Protocol,
    w_targets: &[f64],
    m: usize,
    steps: StepPolicy,
    seed: u64,
    config: MicroFrConfig,
) -> Result<MicroFrReport> {
    let end_spec = ham.hamiltonian(&protocol.end())?.eigh()?;
    for &w in w_targets {
        let e = energy + w;
        if !(e > end_spec.min() && e < end_spec.max()) {
            return Err(Error::EnergyOutsideSpectrum {
                energy: e,
                min: end_spec.min(),
                max: end_spec.max(),
            });
        }
    }
    let forward_spec = EnsembleSpec::new(
        EnsembleKind::MicrocanonicalWf {
            energy,
            lambda: protocol.start(),
        },
        ham.clone(),
    );
    let fwd = sample_work_distribution(&forward_spec, protocol, m, steps, derive_seed(seed, 1))?;
    let reversed = protocol.reversed();

    let dos_targets: Vec<f64> = w_targets.iter().map(|w| energy + w).collect();
    let dos_start = dos_from_energies(
        &uniform_energies(ham.as_ref(), &protocol.start(), config.dos_samples, derive_seed(seed, 3))?,
        &[energy],
        config.dos_bin_width,
        volume_constant(ham.dim()),
    )?;
    let dos_end = dos_from_energies(
        &uniform_energies(ham.as_ref(), &protocol.end(), config.dos_samples, derive_seed(seed, 4))?,
        &dos_targets,
        config.dos_bin_width,
        volume_constant(ham.dim()),
    )?;
    let (om0, om0_se) = dos_start.omega[0];

    let window = |values: &[f64], center: f64| -> (f64, f64) {
        let half = config.bin_width / 2.0;
        let n = values.len() as f64;
        let c = values.iter().filter(|v| **v >= center - half && **v < center + half).count() as f64;
        let p = c / n;
        (p / config.bin_width, (p * (1.0 - p) / n).sqrt() / config.bin_width)
    };

    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (k, &w) in w_targets.iter().enumerate() {
        let rev_spec = EnsembleSpec::new(
            EnsembleKind::MicrocanonicalWf {
                energy: energy + w,
                lambda: protocol.end(),
            },
            ham.clone(),
        );
        let rev = sample_work_distribution(&rev_spec, &reversed, m, steps, derive_seed(seed, 100 + k as u64))?;
        let forward = window(&fwd.values, w);
        let reverse = window(&rev.values, -w);
        if forward.0 == 0.0 {
            excluded.push((w, "forward window empty".to_string()));
            continue;
        }
        if reverse.0 == 0.0 {
            excluded.push((w, "reverse window empty".to_string()));
            continue;
        }
        let ratio = forward.0 / reverse.0;
        let ratio_stderr = ratio * ((forward.1 / forward.0).powi(2) + (reverse.1 / reverse.0).powi(2)).sqrt();
        let (om1, om1_se) = dos_end.omega[k];
        let predicted = om1 / om0;
        let predicted_stderr = predicted * ((om1_se / om1).powi(2) + (om0_se / om0).powi(2)).sqrt();
        entries.push(MicroFrEntry {
            work: w,
            forward,
            reverse,
            ratio,
            ratio_stderr,
            predicted,
            predicted_stderr,
        });
    }
    Ok(MicroFrReport {
        energy,
        entries,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Convergence;
    use crate::lzmodel::{self, LzParams};
    use std::sync::Arc;

    fn fig1() -> (Arc<dyn ParameterizedHamiltonian>, Protocol) {
        let (h, p) = lzmodel::lz_protocol(&LzParams::default()).unwrap();
        (Arc::new(h), p)
    }

    #[test]
    fn constant_protocol_gives_zero_work() {
        let (ham, _) = fig1();
        let p = Protocol::constant(vec![0.4], 3.0).unwrap();
        for kind in [
            EnsembleKind::UniformSphere,
            EnsembleKind::CanonicalWf { beta: 1.0, lambda: vec![0.4] },
            EnsembleKind::MicrocanonicalWf { energy: 0.2, lambda: vec![0.4] },
        ] {
            let ws = sample_work_distribution(&EnsembleSpec::new(kind, ham.clone()), &p, 1000, StepPolicy::Fixed(64), 1)
                .unwrap();
            assert!(ws.values.iter().all(|w| w.abs() < 1e-10));
            let j = jarzynski_estimate(&ws, 1.0).unwrap();
            assert!((j.estimate - 1.0).abs() < 1e-9);
            assert!(j.stderr < 1e-9);
        }
    }

    #[test]
    fn rejects_standard_ensemble_and_small_batches() {
        let (ham, p) = fig1();
        let gibbs = EnsembleSpec::new(EnsembleKind::StandardGibbs { beta: 1.0, lambda: vec![0.0] }, ham.clone());
        assert!(matches!(
            sample_work_distribution(&gibbs, &p, 1000, StepPolicy::Fixed(8), 1),
            Err(Error::UnsupportedEnsemble(_))
        ));
        let uni = EnsembleSpec::new(EnsembleKind::UniformSphere, ham);
        assert!(matches!(
            sample_work_distribution(&uni, &p, 10, StepPolicy::Fixed(8), 1),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn sudden_identity_quench_has_unit_jarzynski() {
        let ham: Arc<dyn ParameterizedHamiltonian> = Arc::new(lzmodel::lz_two_parameter());
        let q = Protocol::sudden(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let spec = EnsembleSpec::new(EnsembleKind::CanonicalWf { beta: 1.0, lambda: vec![0.0, 1.0] }, ham);
        let ws = sample_work_distribution(&spec, &q, 2000, StepPolicy::Fixed(1), 3).unwrap();
        let j = jarzynski_estimate(&ws, 1.0).unwrap();
        assert_eq!(j.estimate, 1.0);
    }

    #[test]
    fn tms_atoms_for_half_sweep() {
        let (ham, p) = fig1();
        let pdf = tms_work_distribution_exact(ham.as_ref(), 1.0, &p, StepPolicy::default()).unwrap();
        assert_eq!(pdf.atoms.len(), 4);
        assert!((pdf.total_probability() - 1.0).abs() < 1e-12);
        let e0 = 7.25f64.sqrt();
        let mut locs: Vec<f64> = pdf.atoms.iter().map(|a| a.0).collect();
        locs.sort_by(f64::total_cmp);
        let expected = [-(e0 + 1.0), -(e0 - 1.0), e0 - 1.0, e0 + 1.0];
        for (a, b) in locs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((expected[3] - 3.6926).abs() < 1e-4 && (expected[2] - 1.6926).abs() < 1e-4);
        // exact standard Jarzynski equality
        let lhs = pdf.exp_average(1.0);
        let rhs = z_standard(ham.as_ref(), 1.0, &p.end()).unwrap() / z_standard(ham.as_ref(), 1.0, &p.start()).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!((rhs - 1f64.cosh() / e0.cosh()).abs() < 1e-12);
    }

    #[test]
    fn tms_identity_protocol_collapses() {
        let (ham, _) = fig1();
        let p = Protocol::constant(vec![-1.0], 0.0).unwrap();
        let pdf = tms_work_distribution_exact(ham.as_ref(), 1.0, &p, StepPolicy::Fixed(1)).unwrap();
        let support = pdf.support(1e-12);
        assert_eq!(support.len(), 1);
        assert_eq!(support[0].0, 0.0);
        assert!((support[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_normalization_and_fixed_bars() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0).collect();
        let h = WorkHistogram::fixed_width(&values, 0.25).unwrap();
        assert!((h.integral() - 1.0).abs() < 1e-10);
        assert_eq!(h.outside, 0);
        assert!(h.centers().iter().all(|c| ((c / 0.25).round() * 0.25 - c).abs() < 1e-12));
        let fd = WorkHistogram::freedman_diaconis(&values).unwrap();
        assert!((fd.integral() - 1.0).abs() < 1e-10);
        assert_eq!(fd.counts.iter().sum::<u64>(), 1000);
        assert!(WorkHistogram::from_edges(&values, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn work_respects_spectral_support() {
        let (ham, p) = fig1();
        let spec = EnsembleSpec::new(EnsembleKind::UniformSphere, ham.clone());
        let ws = sample_work_distribution(&spec, &p, 20_000, StepPolicy::Fixed(2000), 9).unwrap();
        let (lo, hi) = work_support_bound(ham.as_ref(), &p).unwrap();
        assert!((hi - (7.25f64.sqrt() + 1.0)).abs() < 1e-12);
        assert!(ws.min() >= lo - 1e-9 && ws.max() <= hi + 1e-9);
    }

    #[test]
    fn crooks_rejects_disjoint_samples() {
        let mk = |values: Vec<f64>| WorkSampleSet {
            values,
            ensemble: EnsembleKind::UniformSphere,
            protocol: "x".into(),
            seed: 0,
            streams: vec![],
            propagator_steps: 1,
            diagnostics: crate::ensembles::Ensemble::Uniform { dim: 2 }.sample(0, 0).diagnostics,
        };
        let fwd = mk((0..2000).map(|i| 5.0 + i as f64 * 1e-3).collect());
        let rev = mk((0..2000).map(|i| 5.0 + i as f64 * 1e-3).collect());
        assert!(matches!(
            crooks_canonical_check(&fwd, &rev, CrooksConfig { bin_width: Some(0.1), ..Default::default() }),
            Err(Error::InsufficientOverlap { .. })
        ));
    }

    #[test]
    fn crooks_time_symmetric_protocol_has_zero_intercept() {
        // λ: 0 → 1.5 → 0, symmetric in time, so ΔF = 0
        let ham: Arc<dyn ParameterizedHamiltonian> = Arc::new(lzmodel::lz_hamiltonian(1.0));
        let p = Protocol::new("tent", 2.0, |t| vec![1.5 * (1.0 - (t - 1.0).abs())]).unwrap();
        let (fwd, rev) = crooks_samples(ham, 1.0, &p, 40_000, StepPolicy::Fixed(4000), 5).unwrap();
        let rep = crooks_canonical_check(&fwd, &rev, CrooksConfig { bin_width: Some(0.1), ..Default::default() }).unwrap();
        assert!(rep.intercept().abs() < 4.0 * rep.fit.intercept_stderr(), "{:?}", rep.fit);
        assert!((rep.slope() - 1.0).abs() < 4.0 * rep.fit.slope_stderr(), "{:?}", rep.fit);
    }

    #[test]
    fn micro_fr_identity_protocol_gives_unit_ratio() {
        let ham: Arc<dyn ParameterizedHamiltonian> = Arc::new(lzmodel::lz_hamiltonian(1.0));
        let p = Protocol::constant(vec![0.5], 1.0).unwrap();
        let rep = microcanonical_fr_check(
            ham,
            0.2,
            &p,
            &[0.0],
            5000,
            StepPolicy::Fixed(16),
            7,
            MicroFrConfig { dos_samples: 50_000, ..Default::default() },
        )
        .unwrap();
        let e = rep.entries[0];
        assert_eq!(e.ratio, 1.0);
        assert!((e.predicted - 1.0).abs() < 4.0 * e.predicted_stderr);
    }

    #[test]
    fn micro_fr_rejects_targets_outside_spectrum() {
        let (ham, p) = fig1();
        let err = microcanonical_fr_check(ham, 0.0, &p, &[1.5], 1000, StepPolicy::Fixed(8), 1, MicroFrConfig::default());
        assert!(matches!(err, Err(Error::EnergyOutsideSpectrum { .. })));
    }

    #[test]
    fn work_samples_are_reproducible() {
        let (ham, p) = fig1();
        let spec = EnsembleSpec::new(EnsembleKind::CanonicalWf { beta: 1.0, lambda: p.start() }, ham);
        let conv = StepPolicy::Converged(Convergence { tol: 1e-6, ..Default::default() });
        let a = sample_work_distribution(&spec, &p, 1000, conv, 11).unwrap();
        let b = sample_work_distribution(&spec, &p, 1000, conv, 11).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.streams, (0..1000).collect::<Vec<u64>>());
    }
}
