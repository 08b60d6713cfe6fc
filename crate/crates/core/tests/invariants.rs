use std::sync::Arc;

use proptest::prelude::*;
use wfens_core::dynamics::{propagator, Protocol, StepPolicy, WorkMeter};
use wfens_core::ensembles::{ChainConfig, Ensemble, EnsembleKind, EnsembleSpec};
use wfens_core::statespace::{expectation, HermitianOperator, LinearHamiltonian, ParameterizedHamiltonian, StateVector};
use wfens_core::workstats::{tms_work_distribution_exact, z_standard};

fn hermitian(dim: usize, entries: &[f64], real: bool) -> HermitianOperator {
    let mut re = vec![0.0; dim * dim];
    let mut im = vec![0.0; dim * dim];
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            re[i * dim + j] = entries[k];
            re[j * dim + i] = entries[k];
            if i != j && !real {
                im[i * dim + j] = entries[k + 1];
                im[j * dim + i] = -entries[k + 1];
            }
            k += 2;
        }
    }
    HermitianOperator::from_rows(dim, &re, &im).unwrap()
}

/// Dimension, two Hermitian matrices and a state, all as raw coordinates.
fn system() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|d| {
        let n = d * (d + 1);
        (
            Just(d),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, 2 * d),
        )
    })
}

fn build(d: usize, a: &[f64], b: &[f64], s: &[f64], real: bool) -> Option<(LinearHamiltonian, StateVector)> {
    let ham = LinearHamiltonian::new(hermitian(d, a, real), vec![hermitian(d, b, real)]).unwrap();
    let state = StateVector::new(s[..d].to_vec(), s[d..].to_vec()).ok()?;
    Some((ham, state))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constant_protocols_conserve_energy((d, a, b, s) in system(), lambda in -2.0..2.0f64, tau in 0.1..3.0f64) {
        let Some((ham, state)) = build(d, &a, &b, &s, false) else { return Ok(()) };
        let p = Protocol::constant(vec![lambda], tau).unwrap();
        let u = propagator(&ham, &p, StepPolicy::Fixed(4)).unwrap();
        let h = ham.hamiltonian(&[lambda]).unwrap();
        let before = expectation(&state, &h).unwrap();
        let after = expectation(&u.apply(&state), &h).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
        prop_assert!(u.unitarity_residual() < 1e-12);
        prop_assert!(u.volume_residual() < 1e-12);
    }

    #[test]
    fn real_hamiltonians_reverse_work_under_conjugation((d, a, b, s) in system(), tau in 0.2..2.0f64) {
        let Some((ham, state)) = build(d, &a, &b, &s, true) else { return Ok(()) };
        let p = Protocol::new("ramp", tau, move |t| vec![(2.0 * t / tau).sin()]).unwrap();
        let fwd = WorkMeter::new(&ham, &p, propagator(&ham, &p, StepPolicy::Fixed(256)).unwrap()).unwrap();
        let rev_p = p.reversed();
        let rev = WorkMeter::new(&ham, &rev_p, propagator(&ham, &rev_p, StepPolicy::Fixed(256)).unwrap()).unwrap();
        let end = fwd.propagator().apply(&state).conj();
        let w = fwd.work(&state).unwrap();
        let w_rev = rev.work(&end).unwrap();
        prop_assert!((w + w_rev).abs() < 1e-10, "{} vs {}", w, w_rev);
        prop_assert!(rev.propagator().apply(&end).fidelity(&state.conj()) > 1.0 - 1e-10);
    }

    #[test]
    fn two_measurement_work_satisfies_jarzynski((d, a, b, _s) in system(), beta in 0.2..3.0f64, tau in 0.1..2.0f64) {
        let ham = LinearHamiltonian::new(hermitian(d, &a, false), vec![hermitian(d, &b, false)]).unwrap();
        let p = Protocol::linear(vec![-1.0], vec![1.5], tau).unwrap();
        let pdf = tms_work_distribution_exact(&ham, beta, &p, StepPolicy::Fixed(64)).unwrap();
        let ratio = z_standard(&ham, beta, &[1.5]).unwrap() / z_standard(&ham, beta, &[-1.0]).unwrap();
        prop_assert!((pdf.total_probability() - 1.0).abs() < 1e-12);
        prop_assert!((pdf.exp_average(beta) / ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn microcanonical_samples_sit_on_the_shell((d, a, b, _s) in system(), frac in 0.05..0.95f64, seed in 0u64..1000) {
        let ham = LinearHamiltonian::new(hermitian(d, &a, false), vec![hermitian(d, &b, false)]).unwrap();
        let spec = ham.hamiltonian(&[0.3]).unwrap().eigh().unwrap();
        prop_assume!(spec.max() - spec.min() > 1e-3);
        let energy = spec.min() + frac * (spec.max() - spec.min());
        let h = ham.hamiltonian(&[0.3]).unwrap();
        let es = EnsembleSpec::new(EnsembleKind::MicrocanonicalWf { energy, lambda: vec![0.3] }, Arc::new(ham));
        // Shell membership holds at every chain step, so a short chain suffices.
        let chain = ChainConfig { burn_in: 200, tuning_steps: 2000, chains: 2, ..Default::default() };
        let batch = Ensemble::with_config(&es, chain).unwrap().sample(50, seed);
        for st in &batch.states {
            prop_assert!((st.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert!((expectation(st, &h).unwrap() - energy).abs() < 1e-10);
        }
    }
}
