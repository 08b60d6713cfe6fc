//! Experiment configuration: JSON schema, domain validation, and the resolved plan.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wfens_core::ensembles::{EnsembleKind, EnsembleSpec};
use wfens_core::lzmodel::{self, LzParams};
use wfens_core::statespace::{HermitianOperator, LinearHamiltonian, ParameterizedHamiltonian};
use wfens_core::thermo::Evaluation;
use wfens_core::workstats::MicroFrConfig;
use wfens_core::{Convergence, Protocol, StepPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SampleEnsemble,
    WorkDist,
    Jarzynski,
    Crooks,
    MicroFr,
    ThermoScan,
    Fig1a,
    Fig1b,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SampleEnsemble => "sample-ensemble",
            ExperimentKind::WorkDist => "work-dist",
            ExperimentKind::Jarzynski => "jarzynski",
            ExperimentKind::Crooks => "crooks",
            ExperimentKind::MicroFr => "micro-fr",
            ExperimentKind::ThermoScan => "thermo-scan",
            ExperimentKind::Fig1a => "fig1a",
            ExperimentKind::Fig1b => "fig1b",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn five() -> f64 {
    5.0
}

/// Row-major matrix; `im` defaults to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

/// `H(λ) = base + Σ λ_i terms[i]`, or the Landau–Zener model `λσz + Δσx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Lz {
        #[serde(default = "one")]
        delta: f64,
    },
    Matrix {
        dim: usize,
        base: MatrixSpec,
        #[serde(default)]
        terms: Vec<MatrixSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnsembleConfig {
    Uniform,
    Canonical { beta: f64, lambda: Vec<f64> },
    Microcanonical { energy: f64, lambda: Vec<f64> },
    StandardGibbs { beta: f64, lambda: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSpec {
    Constant {
        lambda: Vec<f64>,
        duration: f64,
    },
    Linear {
        from: Vec<f64>,
        to: Vec<f64>,
        duration: f64,
    },
    /// λ from `−vT/2` to 0 over `[0, T]`; the coupling comes from the model.
    LzHalfSweep {
        #[serde(default = "one")]
        rate: f64,
        #[serde(default = "five")]
        half_duration: f64,
    },
    Sudden {
        from: Vec<f64>,
        to: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepsSpec {
    Fixed(usize),
    Converged {
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_tol() -> f64 {
    Convergence::default().tol
}

impl Default for StepsSpec {
    fn default() -> Self {
        StepsSpec::Converged { tol: default_tol() }
    }
}

impl StepsSpec {
    pub fn policy(self) -> StepPolicy {
        match self {
            StepsSpec::Fixed(n) => StepPolicy::Fixed(n),
            StepsSpec::Converged { tol } => StepPolicy::Converged(Convergence {
                tol,
                ..Convergence::default()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BinRule {
    FreedmanDiaconis,
    Fixed { width: f64 },
}

impl BinRule {
    pub fn width(self) -> Option<f64> {
        match self {
            BinRule::FreedmanDiaconis => None,
            BinRule::Fixed { width } => Some(width),
        }
    }
}

/// Explicit list, or `points` values evenly spaced over `[start, stop]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, points } => match points {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluationSpec {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<BinRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Grid>,
    /// Index of the parameter a thermo scan varies; the rest stay at `base`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_targets: Option<Vec<f64>>,
    /// Window width for the microcanonical ratio estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    /// Minimum per-bin count on both sides of the Crooks fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// A problem with one configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn issue(path: impl Into<String>, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses a config, or the `config` member of a run manifest.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        vec![issue(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )]
    })?;
    let value = match value {
        serde_json::Value::Object(mut m) if m.contains_key("config") && m.contains_key("manifest_version") => {
            m.remove("config").unwrap_or_default()
        }
        v => v,
    };
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        vec![issue(if path == "." { "(root)".into() } else { path }, e.into_inner().to_string())]
    })
}

/// Everything an experiment needs, built and domain-checked.
#[derive(Debug, Clone)]
pub enum Plan {
    SampleEnsemble {
        spec: EnsembleSpec,
        samples: usize,
    },
    WorkDist {
        spec: EnsembleSpec,
        protocol: Protocol,
        samples: usize,
        steps: StepPolicy,
        bins: BinRule,
    },
    Jarzynski {
        spec: EnsembleSpec,
        beta: f64,
        protocol: Protocol,
        samples: usize,
        steps: StepPolicy,
        lz_delta: Option<f64>,
    },
    Crooks {
        ham: Arc<dyn ParameterizedHamiltonian>,
        beta: f64,
        protocol: Protocol,
        samples: usize,
        steps: StepPolicy,
        bins: BinRule,
        min_count: u64,
        lz_delta: Option<f64>,
    },
    MicroFr {
        ham: Arc<dyn ParameterizedHamiltonian>,
        energy: f64,
        protocol: Protocol,
        w_targets: Vec<f64>,
        samples: usize,
        steps: StepPolicy,
        window: f64,
    },
    ThermoScan {
        ham: Arc<dyn ParameterizedHamiltonian>,
        canonical: bool,
        controls: Vec<f64>,
        lambdas: Vec<f64>,
        param: usize,
        base: Vec<f64>,
        eval: Evaluation,
    },
    Fig1a {
        beta: f64,
        delta: f64,
        lambdas: Vec<f64>,
    },
    Fig1b {
        params: LzParams,
        samples: usize,
        steps: StepPolicy,
        bins: BinRule,
    },
}

struct Checker {
    issues: Vec<ConfigIssue>,
}

impl Checker {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.issues.push(issue(path, message));
    }

    fn require<'a, T>(&mut self, value: &'a Option<T>, path: &str) -> Option<&'a T> {
        if value.is_none() {
            self.push(path, "required for this experiment");
        }
        value.as_ref()
    }

    fn positive(&mut self, v: f64, path: &str) -> bool {
        let ok = v.is_finite() && v > 0.0;
        if !ok {
            self.push(path, format!("{v} must be finite and > 0"));
        }
        ok
    }

    fn finite_all(&mut self, v: &[f64], path: &str) -> bool {
        let ok = v.iter().all(|x| x.is_finite());
        if !ok {
            self.push(path, "all entries must be finite");
        }
        ok
    }

    fn params_len(&mut self, v: &[f64], n: usize, path: &str) -> bool {
        if v.len() != n {
            self.push(path, format!("expected {n} parameter value(s), got {}", v.len()));
            return false;
        }
        self.finite_all(v, path)
    }
}

fn build_model(m: &ModelSpec, c: &mut Checker) -> Option<(Arc<dyn ParameterizedHamiltonian>, Option<f64>)> {
    match m {
        ModelSpec::Lz { delta } => {
            if !(delta.is_finite() && *delta >= 0.0) {
                c.push("model.delta", format!("{delta} must be finite and >= 0"));
                return None;
            }
            Some((Arc::new(lzmodel::lz_hamiltonian(*delta)), Some(*delta)))
        }
        ModelSpec::Matrix { dim, base, terms } => {
            if *dim < 2 {
                c.push("model.dim", "dimension must be >= 2");
                return None;
            }
            let build = |spec: &MatrixSpec, path: &str, c: &mut Checker| -> Option<HermitianOperator> {
                let zeros = vec![0.0; dim * dim];
                let im = spec.im.as_ref().unwrap_or(&zeros);
                match HermitianOperator::from_rows(*dim, &spec.re, im) {
                    Ok(h) => Some(h),
                    Err(e) => {
                        c.push(path, e.to_string());
                        None
                    }
                }
            };
            let b = build(base, "model.base", c);
            let ts: Vec<Option<HermitianOperator>> = terms
                .iter()
                .enumerate()
                .map(|(i, t)| build(t, &format!("model.terms[{i}]"), c))
                .collect();
            let b = b?;
            let ts: Option<Vec<HermitianOperator>> = ts.into_iter().collect();
            match LinearHamiltonian::new(b, ts?) {
                Ok(h) => Some((Arc::new(h), None)),
                Err(e) => {
                    c.push("model", e.to_string());
                    None
                }
            }
        }
    }
}

fn build_protocol(
    p: &ProtocolSpec,
    n_params: usize,
    lz_delta: Option<f64>,
    c: &mut Checker,
) -> Option<Protocol> {
    let result = match p {
        ProtocolSpec::Constant { lambda, duration } => {
            let ok = c.params_len(lambda, n_params, "protocol.lambda");
            if !(duration.is_finite() && *duration >= 0.0) {
                c.push("protocol.duration", format!("{duration} must be finite and >= 0"));
                return None;
            }
            if !ok {
                return None;
            }
            Protocol::constant(lambda.clone(), *duration)
        }
        ProtocolSpec::Linear { from, to, duration } => {
            let ok = c.params_len(from, n_params, "protocol.from") & c.params_len(to, n_params, "protocol.to");
            if !c.positive(*duration, "protocol.duration") || !ok {
                return None;
            }
            Protocol::linear(from.clone(), to.clone(), *duration)
        }
        ProtocolSpec::Sudden { from, to } => {
            let ok = c.params_len(from, n_params, "protocol.from") & c.params_len(to, n_params, "protocol.to");
            if !ok {
                return None;
            }
            Protocol::sudden(from.clone(), to.clone())
        }
        ProtocolSpec::LzHalfSweep { rate, half_duration } => {
            let Some(delta) = lz_delta else {
                c.push("protocol.kind", "lz-half-sweep needs the lz model");
                return None;
            };
            let ok = c.positive(*rate, "protocol.rate") & c.positive(*half_duration, "protocol.half_duration");
            if !ok {
                return None;
            }
            lzmodel::half_sweep(&LzParams {
                delta: delta.max(f64::MIN_POSITIVE),
                rate: *rate,
                half_duration: *half_duration,
                beta: 1.0,
            })
        }
    };
    match result {
        Ok(p) => Some(p),
        Err(e) => {
            c.push("protocol", e.to_string());
            None
        }
    }
}

fn build_ensemble(
    e: &EnsembleConfig,
    ham: &Arc<dyn ParameterizedHamiltonian>,
    c: &mut Checker,
) -> Option<EnsembleSpec> {
    let n = ham.n_params();
    let kind = match e {
        EnsembleConfig::Uniform => EnsembleKind::UniformSphere,
        EnsembleConfig::Canonical { beta, lambda } | EnsembleConfig::StandardGibbs { beta, lambda } => {
            let ok = c.positive(*beta, "ensemble.beta") & c.params_len(lambda, n, "ensemble.lambda");
            if !ok {
                return None;
            }
            if matches!(e, EnsembleConfig::Canonical { .. }) {
                EnsembleKind::CanonicalWf {
                    beta: *beta,
                    lambda: lambda.clone(),
                }
            } else {
                EnsembleKind::StandardGibbs {
                    beta: *beta,
                    lambda: lambda.clone(),
                }
            }
        }
        EnsembleConfig::Microcanonical { energy, lambda } => {
            if !c.params_len(lambda, n, "ensemble.lambda") {
                return None;
            }
            EnsembleKind::MicrocanonicalWf {
                energy: *energy,
                lambda: lambda.clone(),
            }
        }
    };
    let spec = EnsembleSpec::new(kind, ham.clone());
    match spec.validate() {
        Ok(()) => Some(spec),
        Err(e) => {
            let path = match e {
                wfens_core::Error::EnergyOutsideSpectrum { .. } => "ensemble.energy",
                _ => "ensemble",
            };
            c.push(path, e.to_string());
            None
        }
    }
}

fn energy_inside(ham: &dyn ParameterizedHamiltonian, lambda: &[f64], e: f64, path: &str, c: &mut Checker) {
    match ham.hamiltonian(lambda).and_then(|h| h.eigh()) {
        Ok(s) if e > s.min() && e < s.max() => {}
        Ok(s) => c.push(
            path,
            format!("energy {e} must lie strictly inside the spectrum [{}, {}]", s.min(), s.max()),
        ),
        Err(err) => c.push(path, err.to_string()),
    }
}

impl ExperimentConfig {
    /// Fields this experiment reads; any other set field is reported as unused.
    fn allowed(&self) -> &'static [&'static str] {
        match self.experiment {
            ExperimentKind::SampleEnsemble => &["samples", "model", "ensemble"],
            ExperimentKind::WorkDist => &["samples", "model", "ensemble", "protocol", "steps", "bins"],
            ExperimentKind::Jarzynski => &["samples", "model", "ensemble", "protocol", "steps"],
            ExperimentKind::Crooks => &["samples", "model", "protocol", "steps", "bins", "beta", "min_count"],
            ExperimentKind::MicroFr => &["samples", "model", "protocol", "steps", "energy", "w_targets", "window"],
            ExperimentKind::ThermoScan => &[
                "samples", "model", "betas", "energies", "lambdas", "param", "base", "evaluation",
            ],
            ExperimentKind::Fig1a => &["model", "beta", "lambdas"],
            ExperimentKind::Fig1b => &["samples", "model", "protocol", "steps", "bins", "beta"],
        }
    }

    fn set_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut add = |set: bool, name: &'static str| {
            if set {
                out.push(name)
            }
        };
        add(self.samples.is_some(), "samples");
        add(self.model.is_some(), "model");
        add(self.ensemble.is_some(), "ensemble");
        add(self.protocol.is_some(), "protocol");
        add(self.steps.is_some(), "steps");
        add(self.bins.is_some(), "bins");
        add(self.beta.is_some(), "beta");
        add(self.betas.is_some(), "betas");
        add(self.energy.is_some(), "energy");
        add(self.energies.is_some(), "energies");
        add(self.lambdas.is_some(), "lambdas");
        add(self.param.is_some(), "param");
        add(self.base.is_some(), "base");
        add(self.evaluation.is_some(), "evaluation");
        add(self.w_targets.is_some(), "w_targets");
        add(self.window.is_some(), "window");
        add(self.min_count.is_some(), "min_count");
        out
    }

    /// Schema and domain checks; on success, the built objects to run.
    pub fn validate(&self) -> Result<Plan, Vec<ConfigIssue>> {
        let mut c = Checker { issues: Vec::new() };
        let allowed = self.allowed();
        for f in self.set_fields() {
            if !allowed.contains(&f) {
                c.push(f, format!("not used by experiment {}", self.experiment.name()));
            }
        }
        let plan = self.build(&mut c);
        match (plan, c.issues.is_empty()) {
            (Some(p), true) => Ok(p),
            _ => {
                if c.issues.is_empty() {
                    c.push("(root)", "invalid configuration");
                }
                Err(c.issues)
            }
        }
    }

    fn samples(&self, c: &mut Checker, min: usize, default: Option<usize>) -> Option<usize> {
        let m = match (self.samples, default) {
            (Some(m), _) => m,
            (None, Some(d)) => d,
            (None, None) => {
                c.push("samples", "required for this experiment");
                return None;
            }
        };
        if m < min {
            c.push("samples", format!("{m} is below the minimum of {min}"));
            return None;
        }
        Some(m)
    }

    fn steps(&self, c: &mut Checker) -> Option<StepPolicy> {
        let s = self.steps.unwrap_or_default();
        match s {
            StepsSpec::Fixed(0) => {
                c.push("steps.fixed", "at least one step required");
                None
            }
            StepsSpec::Converged { tol } if !(tol.is_finite() && tol > 0.0) => {
                c.push("steps.converged.tol", format!("{tol} must be finite and > 0"));
                None
            }
            s => Some(s.policy()),
        }
    }

    fn bins(&self, c: &mut Checker, default: BinRule) -> Option<BinRule> {
        let b = self.bins.unwrap_or(default);
        if let BinRule::Fixed { width } = b {
            if !c.positive(width, "bins.width") {
                return None;
            }
        }
        Some(b)
    }

    fn build(&self, c: &mut Checker) -> Option<Plan> {
        match self.experiment {
            ExperimentKind::SampleEnsemble => {
                let (ham, _) = build_model(c.require(&self.model, "model")?, c)?;
                let spec = build_ensemble(c.require(&self.ensemble, "ensemble")?, &ham, c);
                let samples = self.samples(c, 1, None);
                Some(Plan::SampleEnsemble {
                    spec: spec?,
                    samples: samples?,
                })
            }
            ExperimentKind::WorkDist => {
                let (ham, lz) = build_model(c.require(&self.model, "model")?, c)?;
                let ens = c.require(&self.ensemble, "ensemble");
                if let Some(EnsembleConfig::StandardGibbs { .. }) = ens {
                    c.push("ensemble.kind", "expectation work needs a wave-function ensemble");
                }
                let spec = ens.and_then(|e| build_ensemble(e, &ham, c));
                let protocol = c
                    .require(&self.protocol, "protocol")
                    .and_then(|p| build_protocol(p, ham.n_params(), lz, c));
                let (samples, steps, bins) = (self.samples(c, 1000, None), self.steps(c), self.bins(c, BinRule::FreedmanDiaconis));
                Some(Plan::WorkDist {
                    spec: spec?,
                    protocol: protocol?,
                    samples: samples?,
                    steps: steps?,
                    bins: bins?,
                })
            }
            ExperimentKind::Jarzynski => {
                let (ham, lz) = build_model(c.require(&self.model, "model")?, c)?;
                let protocol = c
                    .require(&self.protocol, "protocol")
                    .and_then(|p| build_protocol(p, ham.n_params(), lz, c));
                let ens = c.require(&self.ensemble, "ensemble");
                let beta = match ens {
                    Some(EnsembleConfig::Canonical { beta, lambda }) => {
                        if let Some(p) = &protocol {
                            if lambda.len() == p.start().len() && *lambda != p.start() {
                                c.push("ensemble.lambda", "must equal the protocol's initial parameters");
                            }
                        }
                        Some(*beta)
                    }
                    Some(_) => {
                        c.push("ensemble.kind", "the Jarzynski estimate needs a canonical ensemble");
                        None
                    }
                    None => None,
                };
                let spec = ens.and_then(|e| build_ensemble(e, &ham, c));
                let (samples, steps) = (self.samples(c, 1000, None), self.steps(c));
                Some(Plan::Jarzynski {
                    spec: spec?,
                    beta: beta?,
                    protocol: protocol?,
                    samples: samples?,
                    steps: steps?,
                    lz_delta: lz,
                })
            }
            ExperimentKind::Crooks => {
                let (ham, lz) = build_model(c.require(&self.model, "model")?, c)?;
                let protocol = c
                    .require(&self.protocol, "protocol")
                    .and_then(|p| build_protocol(p, ham.n_params(), lz, c));
                if protocol.as_ref().is_some_and(|p| p.is_sudden()) {
                    c.push("protocol.kind", "sudden protocols have no reversed dynamics to sample");
                }
                let beta = c.require(&self.beta, "beta").copied().filter(|b| c.positive(*b, "beta"));
                let (samples, steps, bins) = (self.samples(c, 1000, None), self.steps(c), self.bins(c, BinRule::FreedmanDiaconis));
                Some(Plan::Crooks {
                    ham,
                    beta: beta?,
                    protocol: protocol?,
                    samples: samples?,
                    steps: steps?,
                    bins: bins?,
                    min_count: self.min_count.unwrap_or(25),
                    lz_delta: lz,
                })
            }
            ExperimentKind::MicroFr => {
                let (ham, lz) = build_model(c.require(&self.model, "model")?, c)?;
                let protocol = c
                    .require(&self.protocol, "protocol")
                    .and_then(|p| build_protocol(p, ham.n_params(), lz, c));
                let energy = c.require(&self.energy, "energy").copied();
                let targets = c.require(&self.w_targets, "w_targets").cloned();
                if let (Some(p), Some(e)) = (&protocol, energy) {
                    energy_inside(ham.as_ref(), &p.start(), e, "energy", c);
                    for (i, w) in targets.iter().flatten().enumerate() {
                        energy_inside(ham.as_ref(), &p.end(), e + w, &format!("w_targets[{i}]"), c);
                    }
                }
                if targets.as_ref().is_some_and(|t| t.is_empty()) {
                    c.push("w_targets", "at least one target required");
                }
                let window = self.window.unwrap_or(MicroFrConfig::default().bin_width);
                c.positive(window, "window");
                let (samples, steps) = (self.samples(c, 1000, None), self.steps(c));
                Some(Plan::MicroFr {
                    ham,
                    energy: energy?,
                    protocol: protocol?,
                    w_targets: targets?,
                    samples: samples?,
                    steps: steps?,
                    window,
                })
            }
            ExperimentKind::ThermoScan => {
                let (ham, _) = build_model(c.require(&self.model, "model")?, c)?;
                let canonical = match (&self.betas, &self.energies) {
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    _ => {
                        c.push("betas", "give exactly one of betas (canonical) or energies (microcanonical)");
                        return None;
                    }
                };
                let controls = if canonical {
                    let b = self.betas.as_ref().unwrap().values();
                    for (i, v) in b.iter().enumerate() {
                        c.positive(*v, &format!("betas[{i}]"));
                    }
                    b
                } else {
                    self.energies.as_ref().unwrap().values()
                };
                let lambdas = c.require(&self.lambdas, "lambdas")?.values();
                c.finite_all(&lambdas, "lambdas");
                let param = self.param.unwrap_or(0);
                if param >= ham.n_params() {
                    c.push("param", format!("model has {} parameter(s)", ham.n_params()));
                    return None;
                }
                let base = self.base.clone().unwrap_or_else(|| vec![0.0; ham.n_params()]);
                if !c.params_len(&base, ham.n_params(), "base") {
                    return None;
                }
                if !canonical {
                    for (i, e) in controls.iter().enumerate() {
                        for l in &lambdas {
                            let mut lam = base.clone();
                            lam[param] = *l;
                            energy_inside(ham.as_ref(), &lam, *e, &format!("energies[{i}]"), c);
                        }
                    }
                }
                let eval = match self.evaluation.unwrap_or(if ham.dim() == 2 {
                    EvaluationSpec::Analytic
                } else {
                    EvaluationSpec::MonteCarlo
                }) {
                    EvaluationSpec::Analytic => {
                        if ham.dim() != 2 {
                            c.push("evaluation", "closed forms exist for two-level models only");
                        }
                        Evaluation::Analytic
                    }
                    EvaluationSpec::MonteCarlo => Evaluation::MonteCarlo {
                        samples: self.samples(c, 1000, None)?,
                        seed: self.seed,
                    },
                };
                if matches!(eval, Evaluation::Analytic) && self.samples.is_some() {
                    c.push("samples", "not used by analytic evaluation");
                }
                Some(Plan::ThermoScan {
                    ham,
                    canonical,
                    controls,
                    lambdas,
                    param,
                    base,
                    eval,
                })
            }
            ExperimentKind::Fig1a => {
                let delta = match &self.model {
                    None => 1.0,
                    Some(ModelSpec::Lz { delta }) => *delta,
                    Some(_) => {
                        c.push("model.kind", "fig1a uses the lz model");
                        return None;
                    }
                };
                let beta = self.beta.unwrap_or(1.0);
                c.positive(beta, "beta");
                if !(delta.is_finite() && delta >= 0.0) {
                    c.push("model.delta", format!("{delta} must be finite and >= 0"));
                }
                let lambdas = self
                    .lambdas
                    .clone()
                    .unwrap_or(Grid::Range { start: -5.0, stop: 5.0, points: 101 })
                    .values();
                if lambdas.is_empty() {
                    c.push("lambdas", "at least one value required");
                }
                if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
                    c.push("lambdas", "must be strictly increasing");
                }
                c.finite_all(&lambdas, "lambdas");
                Some(Plan::Fig1a { beta, delta, lambdas })
            }
            ExperimentKind::Fig1b => {
                let delta = match &self.model {
                    None => 1.0,
                    Some(ModelSpec::Lz { delta }) => *delta,
                    Some(_) => {
                        c.push("model.kind", "fig1b uses the lz model");
                        return None;
                    }
                };
                let (rate, half_duration) = match &self.protocol {
                    None => (1.0, 5.0),
                    Some(ProtocolSpec::LzHalfSweep { rate, half_duration }) => (*rate, *half_duration),
                    Some(_) => {
                        c.push("protocol.kind", "fig1b uses the lz-half-sweep protocol");
                        return None;
                    }
                };
                let params = LzParams {
                    delta,
                    rate,
                    half_duration,
                    beta: self.beta.unwrap_or(1.0),
                };
                if let Err(e) = params.validate() {
                    c.push("(lz parameters)", e.to_string());
                }
                let (samples, steps, bins) = (
                    self.samples(c, 1000, Some(100_000)),
                    self.steps(c),
                    self.bins(c, BinRule::Fixed { width: 0.25 }),
                );
                Some(Plan::Fig1b {
                    params,
                    samples: samples?,
                    steps: steps?,
                    bins: bins?,
                })
            }
        }
    }
}
