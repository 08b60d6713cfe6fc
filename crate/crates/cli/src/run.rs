//! Executes a validated plan and assembles result tables.

use serde_json::{json, Value};
use wfens_core::ensembles::{estimate_partition, Ensemble, SamplerDiagnostics};
use wfens_core::lzmodel::{self, fig1a_experiment, fig1b_experiment};
use wfens_core::rng::derive_seed;
use wfens_core::statespace::{expectation, ParameterizedHamiltonian};
use wfens_core::thermo::{
    canonical_state_functions, heat_theorem_canonical_check, heat_theorem_microcanonical_check,
    microcanonical_state_functions, CheckStatus, Evaluation, MicroHeatConfig,
};
use wfens_core::workstats::{
    crooks_canonical_check, crooks_samples, jarzynski_estimate, microcanonical_fr_check,
    sample_work_distribution, CrooksConfig, MicroFrConfig, WorkHistogram, WorkSampleSet,
};
use wfens_core::{Error, Protocol};

use crate::config::Plan;
use crate::output::{Cell, Table};

/// Tables plus free-form diagnostics for the manifest.
#[derive(Debug)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub diagnostics: Value,
    /// Set when a statistical check could not be decided at this sample size.
    pub inconclusive: Option<String>,
}

pub fn execute(plan: &Plan, seed: u64) -> Result<RunOutput, Error> {
    match plan {
        Plan::SampleEnsemble { spec, samples } => {
            let batch = Ensemble::new(spec)?.sample(*samples, seed);
            let dim = spec.dim();
            let h = match &spec.kind {
                wfens_core::EnsembleKind::UniformSphere => None,
                wfens_core::EnsembleKind::CanonicalWf { lambda, .. }
                | wfens_core::EnsembleKind::MicrocanonicalWf { lambda, .. }
                | wfens_core::EnsembleKind::StandardGibbs { lambda, .. } => Some(spec.hamiltonian.hamiltonian(lambda)?),
            };
            let mut header = vec!["index".to_string()];
            header.extend((0..dim).map(|k| format!("x{k}")));
            header.extend((0..dim).map(|k| format!("p{k}")));
            if h.is_some() {
                header.push("energy".into());
            }
            let mut t = Table::new("samples", header);
            for (i, s) in batch.states.iter().enumerate() {
                let mut row = vec![Cell::Int(i as u64)];
                row.extend(s.x().iter().map(|v| Cell::Float(*v)));
                row.extend(s.p().iter().map(|v| Cell::Float(*v)));
                if let Some(h) = &h {
                    row.push(Cell::Float(expectation(s, h)?));
                }
                t.push(row);
            }
            Ok(RunOutput {
                tables: vec![t],
                diagnostics: json!({ "sampler": sampler_json(&batch.diagnostics) }),
                inconclusive: None,
            })
        }
        Plan::WorkDist {
            spec,
            protocol,
            samples,
            steps,
            bins,
        } => {
            let ws = sample_work_distribution(spec, protocol, *samples, *steps, seed)?;
            let hist = histogram(&ws.values, bins.width())?;
            Ok(RunOutput {
                tables: vec![work_table(&ws), histogram_table("histogram", &hist)],
                diagnostics: json!({ "work": work_json(&ws), "histogram_outside": hist.outside }),
                inconclusive: None,
            })
        }
        Plan::Jarzynski {
            spec,
            beta,
            protocol,
            samples,
            steps,
            lz_delta,
        } => {
            let ws = sample_work_distribution(spec, protocol, *samples, *steps, seed)?;
            let j = jarzynski_estimate(&ws, *beta)?;
            let (target, target_se) = z_ratio(spec.hamiltonian.as_ref(), *beta, protocol, *lz_delta, *samples, seed)?;
            let mut t = Table::new(
                "jarzynski",
                ["samples", "estimate", "stderr", "delta_f", "delta_f_stderr", "target", "target_stderr"],
            );
            t.push(vec![
                Cell::Int(ws.len() as u64),
                Cell::Float(j.estimate),
                Cell::Float(j.stderr),
                Cell::Float(j.delta_f),
                Cell::Float(j.delta_f_stderr),
                Cell::Float(target),
                Cell::Float(target_se),
            ]);
            Ok(RunOutput {
                tables: vec![t],
                diagnostics: json!({ "work": work_json(&ws) }),
                inconclusive: None,
            })
        }
        Plan::Crooks {
            ham,
            beta,
            protocol,
            samples,
            steps,
            bins,
            min_count,
            lz_delta,
        } => {
            let (fwd, rev) = crooks_samples(ham.clone(), *beta, protocol, *samples, *steps, seed)?;
            let config = CrooksConfig {
                bin_width: bins.width(),
                min_count: *min_count,
                ..CrooksConfig::default()
            };
            let report = match crooks_canonical_check(&fwd, &rev, config) {
                Err(Error::InsufficientOverlap { usable, required }) => {
                    return Ok(RunOutput {
                        tables: vec![],
                        diagnostics: json!({ "usable_bins": usable, "required_bins": required }),
                        inconclusive: Some(format!(
                            "forward and reverse work histograms overlap in {usable} usable bins, need {required}"
                        )),
                    })
                }
                r => r?,
            };
            let (ratio, ratio_se) = z_ratio(ham.as_ref(), *beta, protocol, *lz_delta, *samples, seed)?;
            let mut bins_t = Table::new(
                "crooks_bins",
                ["work", "forward_count", "reverse_count", "log_ratio", "variance"],
            );
            for b in &report.bins {
                bins_t.push(vec![
                    Cell::Float(b.work),
                    Cell::Int(b.forward_count),
                    Cell::Int(b.reverse_count),
                    Cell::Float(b.log_ratio),
                    Cell::Float(b.variance),
                ]);
            }
            let mut fit = Table::new(
                "crooks_fit",
                [
                    "slope",
                    "slope_stderr",
                    "intercept",
                    "intercept_stderr",
                    "beta",
                    "expected_intercept",
                    "expected_intercept_stderr",
                    "bins",
                    "bin_width",
                ],
            );
            fit.push(vec![
                Cell::Float(report.fit.slope),
                Cell::Float(report.fit.slope_stderr()),
                Cell::Float(report.fit.intercept),
                Cell::Float(report.fit.intercept_stderr()),
                Cell::Float(*beta),
                Cell::Float(ratio.ln()),
                Cell::Float(ratio_se / ratio),
                Cell::Int(report.bins.len() as u64),
                Cell::Float(report.bin_width),
            ]);
            Ok(RunOutput {
                tables: vec![bins_t, fit],
                diagnostics: json!({
                    "forward": work_json(&fwd),
                    "reverse": work_json(&rev),
                    "chi2": report.fit.chi2,
                }),
                inconclusive: None,
            })
        }
        Plan::MicroFr {
            ham,
            energy,
            protocol,
            w_targets,
            samples,
            steps,
            window,
        } => {
            let config = MicroFrConfig {
                bin_width: *window,
                dos_samples: (*samples).max(100_000),
                dos_bin_width: None,
            };
            let rep = microcanonical_fr_check(ham.clone(), *energy, protocol, w_targets, *samples, *steps, seed, config)?;
            let mut t = Table::new(
                "micro_fr",
                [
                    "work",
                    "forward",
                    "forward_stderr",
                    "reverse",
                    "reverse_stderr",
                    "ratio",
                    "ratio_stderr",
                    "predicted",
                    "predicted_stderr",
                ],
            );
            for e in &rep.entries {
                t.push(vec![
                    Cell::Float(e.work),
                    Cell::Float(e.forward.0),
                    Cell::Float(e.forward.1),
                    Cell::Float(e.reverse.0),
                    Cell::Float(e.reverse.1),
                    Cell::Float(e.ratio),
                    Cell::Float(e.ratio_stderr),
                    Cell::Float(e.predicted),
                    Cell::Float(e.predicted_stderr),
                ]);
            }
            let excluded: Vec<Value> = rep.excluded.iter().map(|(w, why)| json!({ "work": w, "reason": why })).collect();
            Ok(RunOutput {
                tables: vec![t],
                diagnostics: json!({ "excluded": excluded }),
                inconclusive: None,
            })
        }
        Plan::ThermoScan {
            ham,
            canonical,
            controls,
            lambdas,
            param,
            base,
            eval,
        } => thermo_scan(ham.as_ref(), *canonical, controls, lambdas, *param, base, *eval),
        Plan::Fig1a { beta, delta, lambdas } => {
            let rows = fig1a_experiment(*beta, *delta, lambdas)?;
            let mut t = Table::new("fig1a", ["lambda", "F_wf", "F_std"]);
            for r in rows {
                t.push(vec![Cell::Float(r.lambda), Cell::Float(r.f_wf), Cell::Float(r.f_std)]);
            }
            Ok(RunOutput {
                tables: vec![t],
                diagnostics: json!({}),
                inconclusive: None,
            })
        }
        Plan::Fig1b {
            params,
            samples,
            steps,
            bins,
        } => {
            let out = fig1b_experiment(params, *samples, *steps, seed, bins.width())?;
            let mut atoms = Table::new("fig1b_atoms", ["W", "probability"]);
            for (w, p) in out.atoms.support(0.0) {
                atoms.push(vec![Cell::Float(w), Cell::Float(p)]);
            }
            let mut jt = Table::new("fig1b_jarzynski", ["ensemble", "estimate", "stderr", "target"]);
            jt.push(vec![
                Cell::Text("wave-function".into()),
                Cell::Float(out.jarzynski_wf.estimate),
                Cell::Float(out.jarzynski_wf.stderr),
                Cell::Float(out.target_wf),
            ]);
            jt.push(vec![
                Cell::Text("standard".into()),
                Cell::Float(out.jarzynski_std),
                Cell::Float(0.0),
                Cell::Float(out.target_std),
            ]);
            Ok(RunOutput {
                tables: vec![histogram_table("fig1b_histogram", &out.histogram), atoms, jt],
                diagnostics: json!({ "work": work_json(&out.samples) }),
                inconclusive: None,
            })
        }
    }
}

fn histogram(values: &[f64], width: Option<f64>) -> Result<WorkHistogram, Error> {
    match width {
        Some(d) => WorkHistogram::fixed_width(values, d),
        None => WorkHistogram::freedman_diaconis(values),
    }
}

/// `Z(β, λ_τ)/Z(β, λ_0)`: closed form for the LZ model, Monte Carlo otherwise.
fn z_ratio(
    ham: &dyn ParameterizedHamiltonian,
    beta: f64,
    protocol: &Protocol,
    lz_delta: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), Error> {
    if let Some(delta) = lz_delta {
        let (l0, l1) = (protocol.start()[0], protocol.end()[0]);
        let r = (lzmodel::ln_z_analytic(beta, l1, delta) - lzmodel::ln_z_analytic(beta, l0, delta)).exp();
        return Ok((r, 0.0));
    }
    let m = samples.max(1000);
    let z0 = estimate_partition(ham, beta, &protocol.start(), m, derive_seed(seed, 0x7a30))?;
    let z1 = estimate_partition(ham, beta, &protocol.end(), m, derive_seed(seed, 0x7a31))?;
    let r = z1.value / z0.value;
    let se = r * ((z0.stderr / z0.value).powi(2) + (z1.stderr / z1.value).powi(2)).sqrt();
    Ok((r, se))
}

fn thermo_scan(
    ham: &dyn ParameterizedHamiltonian,
    canonical: bool,
    controls: &[f64],
    lambdas: &[f64],
    param: usize,
    base: &[f64],
    eval: Evaluation,
) -> Result<RunOutput, Error> {
    let control_name = if canonical { "beta" } else { "energy" };
    let mut t = Table::new(
        "thermo",
        [
            control_name,
            "lambda",
            "energy",
            "energy_stderr",
            "force",
            "force_stderr",
            "entropy",
            "log_volume",
            "log_volume_stderr",
            "integrating_factor",
        ],
    );
    for (i, &c) in controls.iter().enumerate() {
        for (j, &l) in lambdas.iter().enumerate() {
            let mut lambda = base.to_vec();
            lambda[param] = l;
            let point_eval = match eval {
                Evaluation::Analytic => Evaluation::Analytic,
                Evaluation::MonteCarlo { samples, seed } => Evaluation::MonteCarlo {
                    samples,
                    seed: derive_seed(seed, (i * lambdas.len() + j) as u64),
                },
            };
            let p = if canonical {
                canonical_state_functions(ham, c, &lambda, point_eval)?
            } else {
                microcanonical_state_functions(ham, c, &lambda, point_eval, 0.05)?
            };
            t.push(vec![
                Cell::Float(c),
                Cell::Float(l),
                Cell::Float(p.energy),
                Cell::Float(p.energy_stderr),
                Cell::Float(p.force[param]),
                Cell::Float(p.force_stderr[param]),
                Cell::Float(p.entropy),
                Cell::Float(p.log_volume),
                Cell::Float(p.log_volume_stderr),
                Cell::Float(p.integrating_factor.unwrap_or(f64::NAN)),
            ]);
        }
    }
    let uniform = |g: &[f64]| {
        g.len() >= 3 && g.windows(2).all(|w| ((w[1] - w[0]) - (g[1] - g[0])).abs() < 1e-9 * (g[1] - g[0]).abs())
    };
    let mut inconclusive = None;
    let heat = if canonical && matches!(eval, Evaluation::Analytic) && uniform(controls) && uniform(lambdas) {
        let r = heat_theorem_canonical_check(ham, controls, lambdas, base, param)?;
        json!({
            "max_residual": r.max_residual,
            "refined_residual": r.refined_residual,
            "observed_order": r.observed_order,
            "status": status_name(r.status),
        })
    } else if !canonical {
        let r = heat_theorem_microcanonical_check(
            ham,
            controls,
            lambdas,
            base,
            param,
            MicroHeatConfig {
                eval,
                ..MicroHeatConfig::default()
            },
        )?;
        if r.status == CheckStatus::Inconclusive {
            inconclusive = Some(format!(
                "heat-theorem residual not resolved; about {} samples per replicate needed",
                r.required_samples.unwrap_or(0)
            ));
        }
        json!({
            "max_score": r.max_score,
            "status": status_name(r.status),
            "required_samples": r.required_samples,
        })
    } else {
        json!({ "status": "skipped", "reason": "needs analytic evaluation on uniform grids of at least 3 points" })
    };
    Ok(RunOutput {
        tables: vec![t],
        diagnostics: json!({ "heat_theorem": heat }),
        inconclusive,
    })
}

fn status_name(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Passed => "passed",
        CheckStatus::Failed => "failed",
        CheckStatus::Inconclusive => "inconclusive",
    }
}

fn work_table(ws: &WorkSampleSet) -> Table {
    let mut t = Table::new("work", ["index", "stream", "w"]);
    for (i, (w, s)) in ws.values.iter().zip(&ws.streams).enumerate() {
        t.push(vec![Cell::Int(i as u64), Cell::Int(*s), Cell::Float(*w)]);
    }
    t
}

fn histogram_table(name: &str, h: &WorkHistogram) -> Table {
    let mut t = Table::new(name, ["left", "right", "center", "count", "density", "stderr"]);
    for (k, c) in h.centers().iter().enumerate() {
        t.push(vec![
            Cell::Float(h.edges[k]),
            Cell::Float(h.edges[k + 1]),
            Cell::Float(*c),
            Cell::Int(h.counts[k]),
            Cell::Float(h.densities[k]),
            Cell::Float(h.stderr[k]),
        ]);
    }
    t
}

fn work_json(ws: &WorkSampleSet) -> Value {
    json!({
        "ensemble": ws.ensemble.name(),
        "protocol": ws.protocol,
        "seed": ws.seed,
        "samples": ws.len(),
        "propagator_steps": ws.propagator_steps,
        "sampler": sampler_json(&ws.diagnostics),
    })
}

fn sampler_json(d: &SamplerDiagnostics) -> Value {
    json!({
        "method": format!("{:?}", d.method),
        "acceptance": d.acceptance,
        "r_hat": d.r_hat,
        "autocorr_time": d.autocorr_time,
        "burn_in": d.burn_in,
        "thinning": d.thinning,
        "chains": d.chains,
        "warnings": d.warnings,
    })
}
