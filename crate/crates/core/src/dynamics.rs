//! Driven unitary dynamics and expectation work.
//!
//! The evolution `i ċ = H(λ_t) c` is integrated with midpoint exponentials
//! `exp(−i H(λ_{t+dt/2}) dt)`, each of which is exactly unitary, so the norm
//! of a propagated state only drifts at round-off level.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::statespace::{
    expectation, pauli_coordinates, HermitianOperator, ParameterizedHamiltonian, StateVector, C64,
};

type Schedule = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Parameter schedule `t ↦ λ(t)` on `[0, τ]`.
#[derive(Clone)]
pub struct Protocol {
    schedule: Schedule,
    duration: f64,
    label: String,
    /// Endpoints of an instantaneous quench; `None` for continuous schedules.
    sudden: Option<(Vec<f64>, Vec<f64>)>,
}

impl fmt::Debug for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Protocol")
            .field("label", &self.label)
            .field("duration", &self.duration)
            .field("start", &self.start())
            .field("end", &self.end())
            .field("sudden", &self.sudden.is_some())
            .finish()
    }
}

impl Protocol {
    pub fn new<F>(label: impl Into<String>, duration: f64, schedule: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(invalid("duration", format!("{duration} is not a finite non-negative time")));
        }
        Ok(Protocol {
            schedule: Arc::new(schedule),
            duration,
            label: label.into(),
            sudden: None,
        })
    }

    pub fn constant(lambda: Vec<f64>, duration: f64) -> Result<Self> {
        Self::new("constant", duration, move |_| lambda.clone())
    }

    /// Linear ramp from `from` to `to` over `duration`.
    pub fn linear(from: Vec<f64>, to: Vec<f64>, duration: f64) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::DimensionMismatch {
                expected: from.len(),
                got: to.len(),
            });
        }
        if duration == 0.0 {
            return Err(invalid("duration", "a zero-length ramp must be a sudden quench"));
        }
        Self::new("linear", duration, move |t| {
            let s = t / duration;
            from.iter().zip(&to).map(|(a, b)| a + s * (b - a)).collect()
        })
    }

    /// Instantaneous quench `λ_0 → λ_τ` with no evolution in between.
    pub fn sudden(from: Vec<f64>, to: Vec<f64>) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::DimensionMismatch {
                expected: from.len(),
                got: to.len(),
            });
        }
        let start = from.clone();
        Ok(Protocol {
            schedule: Arc::new(move |_| start.clone()),
            duration: 0.0,
            label: "sudden".into(),
            sudden: Some((from, to)),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn is_sudden(&self) -> bool {
        self.sudden.is_some()
    }

    pub fn lambda_at(&self, t: f64) -> Vec<f64> {
        (self.schedule)(t.clamp(0.0, self.duration))
    }

    pub fn start(&self) -> Vec<f64> {
        match &self.sudden {
            Some((from, _)) => from.clone(),
            None => self.lambda_at(0.0),
        }
    }

    pub fn end(&self) -> Vec<f64> {
        match &self.sudden {
            Some((_, to)) => to.clone(),
            None => self.lambda_at(self.duration),
        }
    }

    /// The time-reversed schedule `t ↦ λ(τ − t)`.
    pub fn reversed(&self) -> Protocol {
        if let Some((from, to)) = &self.sudden {
            return Protocol::sudden(to.clone(), from.clone())
                .expect("endpoints already validated")
                .with_label(format!("{}-reversed", self.label));
        }
        let inner = self.schedule.clone();
        let tau = self.duration;
        Protocol {
            schedule: Arc::new(move |t| inner(tau - t)),
            duration: tau,
            label: format!("{}-reversed", self.label),
            sudden: None,
        }
    }

    /// Checks that no jump between adjacent points of a `points`-grid exceeds `tol`.
    pub fn check_continuity(&self, points: usize, tol: f64) -> Result<()> {
        if self.is_sudden() {
            return Ok(());
        }
        let n = points.max(2);
        let mut prev = self.lambda_at(0.0);
        for k in 1..n {
            let t = self.duration * k as f64 / (n - 1) as f64;
            let cur = self.lambda_at(t);
            let jump = prev
                .iter()
                .zip(&cur)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if !(jump <= tol) {
                return Err(invalid(
                    "protocol",
                    format!("`{}` jumps by {jump} near t = {t}", self.label),
                ));
            }
            prev = cur;
        }
        Ok(())
    }
}

/// Step-doubling convergence control for the propagator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// Frobenius-norm change of `U` under step doubling that counts as converged.
    pub tol: f64,
    pub initial_steps: usize,
    pub max_steps: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence {
            tol: 1e-8,
            initial_steps: 64,
            max_steps: 1 << 22,
        }
    }
}

/// How many midpoint steps a propagation uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Fixed(usize),
    Converged(Convergence),
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Converged(Convergence::default())
    }
}

/// Propagator under a [`StepPolicy`].
pub fn propagator(
    ham: &dyn ParameterizedHamiltonian,
    protocol: &Protocol,
    policy: StepPolicy,
) -> Result<PropagatorResult> {
    match policy {
        StepPolicy::Fixed(steps) => propagate(ham, protocol, steps),
        StepPolicy::Converged(conv) => propagate_converged(ham, protocol, conv),
    }
}

/// Time-ordered evolution operator of a protocol.
#[derive(Debug)]
pub struct PropagatorResult {
    unitary: DMatrix<C64>,
    steps: usize,
    error_estimate: f64,
    renormalized: AtomicUsize,
}

impl Clone for PropagatorResult {
    fn clone(&self) -> Self {
        PropagatorResult {
            unitary: self.unitary.clone(),
            steps: self.steps,
            error_estimate: self.error_estimate,
            renormalized: AtomicUsize::new(self.renormalizations()),
        }
    }
}

impl PropagatorResult {
    fn new(unitary: DMatrix<C64>, steps: usize, error_estimate: f64) -> Self {
        PropagatorResult {
            unitary,
            steps,
            error_estimate,
            renormalized: AtomicUsize::new(0),
        }
    }

    pub fn unitary(&self) -> &DMatrix<C64> {
        &self.unitary
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Richardson estimate of the truncation error, `‖U_n − U_2n‖_F · 4/3`.
    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }

    /// `‖U†U − I‖_F`.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.unitary.nrows();
        (self.unitary.adjoint() * &self.unitary - DMatrix::<C64>::identity(n, n)).norm()
    }

    /// Real `2N × 2N` representation acting on `(x, p)`.
    pub fn real_representation(&self) -> DMatrix<f64> {
        let n = self.unitary.nrows();
        DMatrix::from_fn(2 * n, 2 * n, |i, j| {
            let u = self.unitary[(i % n, j % n)];
            match (i < n, j < n) {
                (true, true) | (false, false) => u.re,
                (true, false) => -u.im,
                (false, true) => u.im,
            }
        })
    }

    /// `| |det R| − 1 |` for the real representation `R`.
    pub fn volume_residual(&self) -> f64 {
        (self.real_representation().determinant().abs() - 1.0).abs()
    }

    /// `U·s`, renormalized only if the norm drifted by more than 1e−12.
    pub fn apply(&self, s: &StateVector) -> StateVector {
        let mut out = StateVector::from_amplitudes(&(&self.unitary * s.amplitudes()));
        if out.renormalize_if_drifted(1e-12) {
            self.renormalized.fetch_add(1, Ordering::Relaxed);
        }
        out
    }

    /// Number of renormalizations performed by [`apply`](Self::apply).
    pub fn renormalizations(&self) -> usize {
        self.renormalized.load(Ordering::Relaxed)
    }
}

/// `exp(−i H dt)`.
pub fn step_exponential(h: &HermitianOperator, dt: f64) -> Result<DMatrix<C64>> {
    if h.dim() == 2 {
        let [h0, hx, hy, hz] = pauli_coordinates(h);
        let r = (hx * hx + hy * hy + hz * hz).sqrt();
        let (s, c) = (r * dt).sin_cos();
        let f = if r > 0.0 { s / r } else { dt };
        let phase = C64::from_polar(1.0, -h0 * dt);
        let i = C64::i();
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                c - i * f * hz,
                -i * f * C64::new(hx, -hy),
                -i * f * C64::new(hx, hy),
                c + i * f * hz,
            ],
        );
        return Ok(m * phase);
    }
    let spec = h.eigh()?;
    let phases = DVector::from_iterator(
        spec.values.len(),
        spec.values.iter().map(|e| C64::from_polar(1.0, -e * dt)),
    );
    let v = &spec.vectors;
    Ok(v * DMatrix::from_diagonal(&phases) * v.adjoint())
}

fn check_finite(m: &DMatrix<C64>, what: &str) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Integration(format!("non-finite entries in {what}")));
    }
    Ok(())
}

fn midpoint_hamiltonian(
    ham: &dyn ParameterizedHamiltonian,
    protocol: &Protocol,
    t: f64,
) -> Result<HermitianOperator> {
    ham.hamiltonian(&protocol.lambda_at(t))
        .map_err(|e| Error::Integration(format!("at t = {t}: {e}")))
}

/// Steps between polar corrections of a running product.
const REUNITARIZE_EVERY: usize = 64;

/// One Newton–Schulz step toward the polar factor, `U (3I − U†U) / 2`.
///
/// Each step exponential is unitary only to rounding, and the defect grows
/// linearly over long products; this pulls it back without touching the
/// discretization error.
fn reunitarize(u: &DMatrix<C64>) -> DMatrix<C64> {
    let n = u.nrows();
    let defect = u.adjoint() * u;
    let corr = (DMatrix::<C64>::identity(n, n) * C64::new(3.0, 0.0) - defect) * C64::new(0.5, 0.0);
    u * corr
}

/// Ordered product of `steps` midpoint exponentials.
pub fn step_product(
    ham: &dyn ParameterizedHamiltonian,
    protocol: &Protocol,
    steps: usize,
) -> Result<DMatrix<C64>> {
    if steps == 0 {
        return Err(invalid("steps", "at least one step required"));
    }
    let n = ham.dim();
    let mut u = DMatrix::<C64>::identity(n, n);
    if protocol.is_sudden() || protocol.duration() == 0.0 {
        return Ok(u);
    }
    let dt = protocol.duration() / steps as f64;
    for k in 0..steps {
        let h = midpoint_hamiltonian(ham, protocol, (k as f64 + 0.5) * dt)?;
        u = step_exponential(&h, dt)? * u;
        if (k + 1) % REUNITARIZE_EVERY == 0 {
            u = reunitarize(&u);
        }
    }
    check_finite(&u, "propagator")?;
    Ok(reunitarize(&u))
}

/// Propagator at `steps` with a Richardson error estimate from `2·steps`.
pub fn propagate(
    ham: &dyn ParameterizedHamiltonian,
    protocol: &Protocol,
    steps: usize,
) -> Result<PropagatorResult> {
    let coarse = step_product(ham, protocol, steps)?;
    let fine = step_product(ham, protocol, 2 * steps)?;
    let err = (&coarse - &fine).norm() * 4.0 / 3.0;
    Ok(PropagatorResult::new(coarse, steps, err))
}

/// Doubles the step count until `‖U_2n − U_n‖_F < tol`; returns `U_2n`.
pub fn propagate_converged(
    ham: &dyn ParameterizedHamiltonian,
    protocol: &Protocol,
    conv: Convergence,
) -> Result<PropagatorResult> {
    let mut steps = conv.initial_steps.max(1);
    let mut prev = step_product(ham, protocol, steps)?;
    if protocol.is_sudden() || protocol.duration() == 0.0 {
        return Ok(PropagatorResult::new(prev, steps, 0.0));
    }
    loop {
        let next = step_product(ham, protocol, 2 * steps)?;
        let diff = (&prev - &next).norm();
        steps *= 2;
        if diff < conv.tol {
            return Ok(PropagatorResult::new(next, steps, diff / 3.0));
        }
        if steps >= conv.max_steps {
            return Err(Error::Integration(format!(
                "no convergence after {steps} steps (last change {diff:e})"
            )));
        }
        prev = next;
    }
}

pub fn evolve(
    ham: &dyn ParameterizedHamiltonian,
    state: &StateVector,
    protocol: &Protocol,
    steps: usize,
) -> Result<StateVector> {
    Ok(propagate(ham, protocol, steps)?.apply(state))
}

/// States on the step grid `t_k = k τ / steps`, `k = 0..=steps`.
pub fn trajectory(
    ham: &dyn ParameterizedHamiltonian,
    state: &StateVector,
    protocol: &Protocol,
    steps: usize,
) -> Result<Vec<StateVector>> {
    if steps == 0 {
        return Err(invalid("steps", "at least one step required"));
    }
    let dt = protocol.duration() / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut c = state.amplitudes();
    out.push(state.clone());
    for k in 0..steps {
        let h = midpoint_hamiltonian(ham, protocol, (k as f64 + 0.5) * dt)?;
        c = step_exponential(&h, dt)? * c;
        out.push(StateVector::from_amplitudes(&c));
    }
    Ok(out)
}

/// Evaluates expectation work `h(U s; λ_τ) − h(s; λ_0)` for a fixed propagator.
#[derive(Debug, Clone)]
pub struct WorkMeter {
    h_start: HermitianOperator,
    h_end: HermitianOperator,
    propagator: PropagatorResult,
}

impl WorkMeter {
    pub fn new(
        ham: &dyn ParameterizedHamiltonian,
        protocol: &Protocol,
        propagator: PropagatorResult,
    ) -> Result<Self> {
        Ok(WorkMeter {
            h_start: ham.hamiltonian(&protocol.start())?,
            h_end: ham.hamiltonian(&protocol.end())?,
            propagator,
        })
    }

    pub fn with_policy(
        ham: &dyn ParameterizedHamiltonian,
        protocol: &Protocol,
        policy: StepPolicy,
    ) -> Result<Self> {
        Self::new(ham, protocol, propagator(ham, protocol, policy)?)
    }

    pub fn propagator(&self) -> &PropagatorResult {
        &self.propagator
    }

    pub fn h_start(&self) -> &HermitianOperator {
        &self.h_start
    }

    pub fn h_end(&self) -> &HermitianOperator {
        &self.h_end
    }

    pub fn work(&self, s: &StateVector) -> Result<f64> {
        let evolved = self.propagator.apply(s);
        Ok(expectation(&evolved, &self.h_end)? - expectation(s, &self.h_start)?)
    }
}

/// `w = h(x_τ, p_τ; λ_τ) − h(x, p; λ_0)`.
pub fn work_endpoint(
    ham: &dyn ParameterizedHamiltonian,
    state: &StateVector,
    protocol: &Protocol,
    steps: usize,
) -> Result<f64> {
    let u = step_product(ham, protocol, steps)?;
    WorkMeter::new(ham, protocol, PropagatorResult::new(u, steps, f64::NAN))?.work(state)
}

/// `w = ∫ dt λ̇ · ⟨∂H/∂λ⟩` by the trapezoidal rule on the step grid.
pub fn work_power_integral(
    ham: &dyn ParameterizedHamiltonian,
    state: &StateVector,
    protocol: &Protocol,
    steps: usize,
) -> Result<f64> {
    if protocol.is_sudden() {
        return Err(Error::SuddenProtocol(protocol.label().to_string()));
    }
    if protocol.duration() == 0.0 {
        return Ok(0.0);
    }
    let steps = steps.max(2);
    let dt = protocol.duration() / steps as f64;
    let traj = trajectory(ham, state, protocol, steps)?;
    let lambdas: Vec<Vec<f64>> = (0..=steps)
        .map(|k| protocol.lambda_at(k as f64 * dt))
        .collect();
    let rate = |k: usize, i: usize| -> f64 {
        if k == 0 {
            (-3.0 * lambdas[0][i] + 4.0 * lambdas[1][i] - lambdas[2][i]) / (2.0 * dt)
        } else if k == steps {
            (3.0 * lambdas[k][i] - 4.0 * lambdas[k - 1][i] + lambdas[k - 2][i]) / (2.0 * dt)
        } else {
            (lambdas[k + 1][i] - lambdas[k - 1][i]) / (2.0 * dt)
        }
    };
    let mut power = Vec::with_capacity(steps + 1);
    for (k, s) in traj.iter().enumerate() {
        let grad = ham.gradient(&lambdas[k])?;
        let mut pk = 0.0;
        for (i, d) in grad.iter().enumerate() {
            let r = rate(k, i);
            if r != 0.0 {
                pk += r * expectation(s, d)?;
            }
        }
        power.push(pk);
    }
    let inner: f64 = crate::stats::pairwise_sum(&power[1..steps]);
    Ok(dt * (inner + 0.5 * (power[0] + power[steps])))
}
