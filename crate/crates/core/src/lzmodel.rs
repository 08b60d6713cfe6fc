//! Landau–Zener two-level model `H(λ) = λσz + Δσx` and its closed forms.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use std::sync::Arc;

use crate::dynamics::{Protocol, StepPolicy};
use crate::ensembles::{EnsembleKind, EnsembleSpec};
use crate::error::{invalid, Result};
use crate::statespace::{HermitianOperator, LinearHamiltonian, ParameterizedHamiltonian, C64};
use crate::workstats::{
    jarzynski_estimate, sample_work_distribution, tms_work_distribution_exact, AtomicWorkPdf,
    JarzynskiEstimate, WorkHistogram, WorkSampleSet,
};

/// Parameters of a half Landau–Zener sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LzParams {
    /// Coupling Δ (energy).
    pub delta: f64,
    /// Sweep rate v (energy²); the splitting is `v t`.
    pub rate: f64,
    /// Half-sweep duration T; the sweep runs over physical time `[−T, 0]`.
    pub half_duration: f64,
    /// Inverse temperature β.
    pub beta: f64,
}

impl Default for LzParams {
    /// Units with Δ = 1: β = 1, v = 1, T = 5.
    fn default() -> Self {
        LzParams {
            delta: 1.0,
            rate: 1.0,
            half_duration: 5.0,
            beta: 1.0,
        }
    }
}

impl LzParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("delta", self.delta),
            ("rate", self.rate),
            ("half_duration", self.half_duration),
            ("beta", self.beta),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("{v} must be finite and > 0")));
            }
        }
        Ok(())
    }

    /// λ at the start of the sweep, `−vT/2`.
    pub fn lambda_start(&self) -> f64 {
        -self.rate * self.half_duration / 2.0
    }

    pub fn splitting_start(&self) -> f64 {
        splitting(self.lambda_start(), self.delta)
    }

    pub fn splitting_end(&self) -> f64 {
        self.delta
    }
}

/// `ε = √(λ² + Δ²)`, half the level gap.
pub fn splitting(lambda: f64, delta: f64) -> f64 {
    lambda.hypot(delta)
}

/// `H(λ) = λσz + Δσx` with the single parameter λ.
pub fn lz_hamiltonian(delta: f64) -> LinearHamiltonian {
    LinearHamiltonian::new(
        HermitianOperator::pauli_x().scaled(delta),
        vec![HermitianOperator::pauli_z()],
    )
    .expect("2x2 operators")
}

/// `H(λ, Δ) = λσz + Δσx` with both couplings as parameters.
pub fn lz_two_parameter() -> LinearHamiltonian {
    LinearHamiltonian::new(
        HermitianOperator::zeros(2),
        vec![HermitianOperator::pauli_z(), HermitianOperator::pauli_x()],
    )
    .expect("2x2 operators")
}

/// Half sweep: experiment time `s ∈ [0, T]` maps to `t = s − T`, `λ = v t / 2`.
pub fn half_sweep(params: &LzParams) -> Result<Protocol> {
    params.validate()?;
    let (v, t_half) = (params.rate, params.half_duration);
    Protocol::new("half-lz-sweep", t_half, move |s| vec![v * (s - t_half) / 2.0])
}

pub fn lz_protocol(params: &LzParams) -> Result<(LinearHamiltonian, Protocol)> {
    Ok((lz_hamiltonian(params.delta), half_sweep(params)?))
}

/// `sinh(x)/x`, with the series below |x| = 1e−4.
pub fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// `ln(sinh(x)/x)` without overflow for large x.
pub fn ln_sinhc(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-4 {
        x * x / 6.0
    } else if x < 20.0 {
        (x.sinh() / x).ln()
    } else {
        x - (2.0 * x).ln() + (-(-2.0 * x).exp()).ln_1p()
    }
}

/// `1/x − coth x`: mean of `cos θ` under the weight `e^{−x cos θ}` on the sphere.
pub fn mean_projection(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -x / 3.0 + x * x2 / 45.0 - 2.0 * x * x2 * x2 / 945.0
    } else {
        1.0 / x - 1.0 / x.tanh()
    }
}

/// Wave-function partition function `π² sinh(βε)/(βε)`.
pub fn z_analytic(beta: f64, lambda: f64, delta: f64) -> f64 {
    PI * PI * sinhc(beta * splitting(lambda, delta))
}

pub fn ln_z_analytic(beta: f64, lambda: f64, delta: f64) -> f64 {
    2.0 * PI.ln() + ln_sinhc(beta * splitting(lambda, delta))
}

pub fn f_analytic(beta: f64, lambda: f64, delta: f64) -> f64 {
    -ln_z_analytic(beta, lambda, delta) / beta
}

/// Standard partition function `2 cosh(βε)`.
pub fn z_standard(beta: f64, lambda: f64, delta: f64) -> f64 {
    2.0 * (beta * splitting(lambda, delta)).cosh()
}

pub fn ln_z_standard(beta: f64, lambda: f64, delta: f64) -> f64 {
    let x = beta * splitting(lambda, delta);
    x + (-2.0 * x).exp().ln_1p()
}

pub fn f_standard(beta: f64, lambda: f64, delta: f64) -> f64 {
    -ln_z_standard(beta, lambda, delta) / beta
}

/// Canonical mean energy `1/β − ε coth(βε)`.
pub fn energy_canonical(beta: f64, lambda: f64, delta: f64) -> f64 {
    let eps = splitting(lambda, delta);
    eps * mean_projection(beta * eps)
}

/// Canonical generalized forces `(−⟨σz⟩, −⟨σx⟩)` conjugate to `(λ, Δ)`.
pub fn force_canonical(beta: f64, lambda: f64, delta: f64) -> [f64; 2] {
    let eps = splitting(lambda, delta);
    let m = mean_projection(beta * eps);
    [-m * lambda / eps, -m * delta / eps]
}

/// Diagonal of the canonical wave-function density matrix for Δ = 0.
///
/// Also the populations in the energy eigenbasis for Δ ≠ 0 after `λ → ε`.
pub fn rho_canonical_analytic_delta0(beta: f64, lambda: f64) -> [f64; 2] {
    let m = mean_projection(beta * lambda);
    [(1.0 + m) / 2.0, (1.0 - m) / 2.0]
}

/// Canonical wave-function density matrix in the σz basis, any Δ.
pub fn rho_canonical_analytic(beta: f64, lambda: f64, delta: f64) -> DMatrix<C64> {
    let eps = splitting(lambda, delta);
    let m = if eps == 0.0 {
        0.0
    } else {
        mean_projection(beta * eps)
    };
    let (nx, nz) = if eps == 0.0 {
        (0.0, 0.0)
    } else {
        (delta / eps, lambda / eps)
    };
    let half = 0.5;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(half * (1.0 + m * nz), 0.0),
            C64::new(half * m * nx, 0.0),
            C64::new(half * m * nx, 0.0),
            C64::new(half * (1.0 - m * nz), 0.0),
        ],
    )
}

/// Microcanonical integrated volume `Φ/V₂ = (E + ε)/(2ε)`, clamped to `[0, 1]`.
pub fn phi_micro(energy: f64, lambda: f64, delta: f64) -> f64 {
    let eps = splitting(lambda, delta);
    ((energy + eps) / (2.0 * eps)).clamp(0.0, 1.0)
}

/// Microcanonical density of states `Ω/V₂ = 1/(2ε)` inside the spectrum.
pub fn omega_micro(energy: f64, lambda: f64, delta: f64) -> f64 {
    let eps = splitting(lambda, delta);
    if energy.abs() < eps {
        1.0 / (2.0 * eps)
    } else {
        0.0
    }
}

/// Microcanonical forces `(−⟨σz⟩, −⟨σx⟩)` on the shell `h = E`.
pub fn force_micro(energy: f64, lambda: f64, delta: f64) -> [f64; 2] {
    let eps = splitting(lambda, delta);
    let u = energy / eps;
    [-u * lambda / eps, -u * delta / eps]
}

/// Row of the free-energy comparison: wave-function versus standard ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyRow {
    pub lambda: f64,
    pub f_wf: f64,
    pub f_std: f64,
}

/// `F(β, λ)` in both ensembles across a λ grid.
pub fn fig1a_experiment(beta: f64, delta: f64, lambdas: &[f64]) -> Result<Vec<FreeEnergyRow>> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid("beta", format!("{beta} must be finite and > 0")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(invalid("delta", format!("{delta} must be finite and >= 0")));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(invalid("lambdas", "must be finite"));
    }
    Ok(lambdas
        .iter()
        .map(|&lambda| FreeEnergyRow {
            lambda,
            f_wf: f_analytic(beta, lambda, delta),
            f_std: f_standard(beta, lambda, delta),
        })
        .collect())
}

/// Work statistics of the half sweep in both pictures.
#[derive(Debug, Clone)]
pub struct WorkComparison {
    pub samples: WorkSampleSet,
    /// Binned expectation-work density from the canonical wave-function ensemble.
    pub histogram: WorkHistogram,
    /// Two-measurement work atoms from the Gibbs state.
    pub atoms: AtomicWorkPdf,
    pub jarzynski_wf: JarzynskiEstimate,
    /// `Z(β, λ_τ)/Z(β, λ_0)`.
    pub target_wf: f64,
    /// `Σ p e^{−βW}` over the atoms.
    pub jarzynski_std: f64,
    /// `Z_st(β, λ_τ)/Z_st(β, λ_0)`.
    pub target_std: f64,
}

/// Canonical expectation-work histogram and two-measurement atoms for the half sweep.
pub fn fig1b_experiment(
    params: &LzParams,
    m: usize,
    steps: StepPolicy,
    seed: u64,
    bin_width: Option<f64>,
) -> Result<WorkComparison> {
    let (ham, protocol) = lz_protocol(params)?;
    let ham: Arc<dyn ParameterizedHamiltonian> = Arc::new(ham);
    let spec = EnsembleSpec::new(
        EnsembleKind::CanonicalWf {
            beta: params.beta,
            lambda: protocol.start(),
        },
        ham.clone(),
    );
    let samples = sample_work_distribution(&spec, &protocol, m, steps, seed)?;
    let histogram = match bin_width {
        Some(d) => WorkHistogram::fixed_width(&samples.values, d)?,
        None => WorkHistogram::freedman_diaconis(&samples.values)?,
    };
    let atoms = tms_work_distribution_exact(ham.as_ref(), params.beta, &protocol, steps)?;
    let jarzynski_wf = jarzynski_estimate(&samples, params.beta)?;
    let (l0, l1) = (params.lambda_start(), 0.0);
    let (b, d) = (params.beta, params.delta);
    Ok(WorkComparison {
        jarzynski_std: atoms.exp_average(b),
        target_wf: (ln_z_analytic(b, l1, d) - ln_z_analytic(b, l0, d)).exp(),
        target_std: (ln_z_standard(b, l1, d) - ln_z_standard(b, l0, d)).exp(),
        samples,
        histogram,
        atoms,
        jarzynski_wf,
    })
}
