//! Scenario dispatch: builds report trees from the simulation modules.

use std::io::Write;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use steersim_core::measure::{measure_projective, MeasurementBasis};
use steersim_core::optics::{Circuit, MzVariant, OpticalElement};
use steersim_core::protocol::{
    run_ifm, run_steering_session_with_events, AliceStrategy, EventKind, EventLog, LhsEnsemble,
    SessionConfig, SessionStats, SpacetimeLayout,
};
use steersim_core::qstate::{BasisLabel, LabeledState, Observable, Role};
use steersim_core::rng::{trial_rng, StreamPurpose};
use steersim_core::steering::{
    assemblage_of_state, chsh_max, linear_steering_value, no_signalling_check, Setting,
};
use steersim_core::sterngerlach::{sg_chsh_curve, SgParams};

use crate::report::{complex_matrix, complex_pair, csv_row, num, CSV_HEADER, SCHEMA_TAG};
use crate::scenario::{
    ElementSpec, EnsembleSpec, IfmVariantSpec, OutFormat, RunSpec, Scenario, SemanticError,
    StrategySpec,
};

/// Failures beyond parsing: semantic rejection or module/runtime errors.
#[derive(Debug)]
pub enum RunnerError {
    Semantic(SemanticError),
    Runtime(String),
}

impl std::fmt::Display for RunnerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunnerError::Semantic(e) => write!(f, "semantic error: {e}"),
            RunnerError::Runtime(e) => write!(f, "runtime error: {e}"),
        }
    }
}

impl std::error::Error for RunnerError {}

impl From<SemanticError> for RunnerError {
    fn from(e: SemanticError) -> Self {
        RunnerError::Semantic(e)
    }
}

impl From<steersim_core::CoreError> for RunnerError {
    fn from(e: steersim_core::CoreError) -> Self {
        RunnerError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for RunnerError {
    fn from(e: std::io::Error) -> Self {
        RunnerError::Runtime(e.to_string())
    }
}

/// A finished report, ready for emission.
#[derive(Debug, Clone)]
pub struct Report {
    pub value: Value,
    /// CSV body for curve reports (header included).
    pub csv: Option<String>,
    pub format: OutFormat,
}

fn element_of(spec: &ElementSpec) -> OpticalElement {
    match spec {
        ElementSpec::Hwp { theta, path } => {
            OpticalElement::Hwp { theta_deg: *theta, path: *path }
        }
        ElementSpec::Pbs => OpticalElement::Pbs,
        ElementSpec::Bs50 => OpticalElement::Bs50,
        ElementSpec::Polarizer { alpha, path } => {
            OpticalElement::Polarizer { alpha_deg: *alpha, path: *path }
        }
        ElementSpec::QPlate { path } => OpticalElement::QPlate { path: *path },
        ElementSpec::Absorber { path } => OpticalElement::Absorber { path: *path },
        ElementSpec::Phase { phi, path } => OpticalElement::PhaseShift { path: *path, phi: *phi },
        ElementSpec::Mirror { path } => OpticalElement::Mirror { path: *path },
    }
}

fn basis_of(name: &str, path: Option<steersim_core::Path>) -> MeasurementBasis {
    match name {
        "HV" => MeasurementBasis::hv(),
        "DIAG" => MeasurementBasis::diag(),
        "CIRC" => MeasurementBasis::circular(),
        _ => MeasurementBasis::path_click(path.expect("validated")),
    }
}

/// Matched Bob observable for a polarization setting: population for HV,
/// the two path coherences for the unbiased bases.
fn matched_observable(name: &str) -> Observable {
    match name {
        "HV" => Observable::path_sigma_z(),
        "DIAG" => Observable::path_sigma_x(),
        _ => Observable::path_sigma_y(),
    }
}

fn state_value(state: &LabeledState) -> Result<Value, RunnerError> {
    let basis: Vec<Value> = state
        .basis()
        .iter()
        .map(|l| Value::String(l.to_string()))
        .collect();
    let amps: Vec<Value> = state
        .amps()
        .iter()
        .map(|a| complex_pair(*a))
        .collect::<Result<_, _>>()?;
    Ok(json!({ "basis": basis, "amps": amps }))
}

fn circuit_block(
    scenario: &Scenario,
    events: &mut Option<&mut dyn Write>,
) -> Result<Option<Value>, RunnerError> {
    let Some(source) = &scenario.source else {
        return Ok(None);
    };
    let input = LabeledState::basis_state(BasisLabel::photon(source.path, source.pol));
    let circuit = Circuit::new(scenario.elements.iter().map(element_of).collect());
    let branches = circuit.run_pure(&input)?;

    // Serialized states sit on the full product basis so reports are
    // bit-comparable across circuits.
    let branches: Vec<_> = branches
        .into_iter()
        .map(|mut b| {
            b.state = b.state.complete()?;
            Ok(b)
        })
        .collect::<Result<_, steersim_core::CoreError>>()?;

    let mut block = Map::new();
    let branch_values: Vec<Value> = branches
        .iter()
        .map(|b| {
            Ok(json!({
                "tag": if b.tag.is_empty() { "root" } else { b.tag.as_str() },
                "probability": num(b.probability)?,
                "state": state_value(&b.state)?,
            }))
        })
        .collect::<Result<_, RunnerError>>()?;
    block.insert("branches".into(), Value::Array(branch_values));

    // Single-branch analytics.
    if branches.len() == 1 {
        let state = &branches[0].state;
        let rho = state.to_density();
        if let Ok(reduced) = rho.partial_trace(&[Role::Path]) {
            block.insert("reduced_path".into(), complex_matrix(reduced.matrix())?);
        }

        let pol_settings: Vec<Setting> = scenario
            .measures
            .iter()
            .filter(|m| m.basis != "PATH")
            .map(|m| Setting::new(&m.basis, basis_of(&m.basis, m.path)))
            .collect();
        if !pol_settings.is_empty() {
            let asm = assemblage_of_state(state, &pol_settings)?;
            let mut entries = Map::new();
            for entry in asm.entries() {
                entries.insert(
                    format!("{}:{}", entry.setting, entry.outcome),
                    complex_matrix(entry.op.matrix())?,
                );
            }
            let (_, deviation) = no_signalling_check(&asm);
            block.insert(
                "assemblage".into(),
                json!({
                    "entries": Value::Object(entries),
                    "no_signalling_deviation": num(deviation)?,
                }),
            );
            if pol_settings.len() == 2 {
                let obs0 = matched_observable(&pol_settings[0].label);
                let obs1 = matched_observable(&pol_settings[1].label);
                let value = linear_steering_value(&asm, (&obs0, &obs1))?;
                block.insert(
                    "steering".into(),
                    json!({
                        "value": num(value.s2)?,
                        "lhs_bound": num(value.lhs_bound)?,
                        "violation": value.violation,
                    }),
                );
            }
        }

        if rho.dim() == 4 && block.contains_key("reduced_path") {
            if let Ok(analysis) = chsh_max(&rho) {
                block.insert(
                    "chsh".into(),
                    json!({
                        "s_max": num(analysis.s_max)?,
                        "violation": analysis.violation,
                    }),
                );
            }
        }
    }

    // Born sampling block over the declared bases.
    if let (Some(trials), Some(seed)) = (scenario.trials, scenario.seed) {
        if !scenario.measures.is_empty() {
            let mut sampling = Map::new();
            for measure in &scenario.measures {
                let basis = basis_of(&measure.basis, measure.path);
                let mut counts: Map<String, Value> = Map::new();
                for trial in 0..trials {
                    // Channels in the chain produce branch mixtures; draw
                    // the branch first, then the outcome.
                    let state = if branches.len() == 1 {
                        &branches[0].state
                    } else {
                        let u: f64 =
                            rand::Rng::gen(&mut trial_rng(seed, trial, StreamPurpose::IfmBranch));
                        let mut cumulative = 0.0;
                        let mut pick = branches.len() - 1;
                        for (i, b) in branches.iter().enumerate() {
                            cumulative += b.probability;
                            if u < cumulative {
                                pick = i;
                                break;
                            }
                        }
                        &branches[pick].state
                    };
                    let mut rng = trial_rng(seed, trial, StreamPurpose::AliceOutcome);
                    let record = measure_projective(state, &basis, &mut rng)?;
                    let slot = counts
                        .entry(record.outcome.clone())
                        .or_insert(Value::Number(0u64.into()));
                    *slot = Value::Number((slot.as_u64().unwrap_or(0) + 1).into());
                }
                sampling.insert(measure.basis.clone(), Value::Object(counts));
            }
            block.insert("sampling".into(), Value::Object(sampling));
        }
    }

    let _ = events;
    Ok(Some(Value::Object(block)))
}

fn session_value(stats: &SessionStats) -> Result<Value, RunnerError> {
    let opt_num = |v: Option<f64>| -> Result<Value, RunnerError> {
        Ok(match v {
            Some(x) => num(x)?,
            None => Value::Null,
        })
    };
    let cells: Vec<Value> = stats
        .cells
        .iter()
        .map(|cell| {
            let tomography = match &cell.tomography {
                Some(rho) => complex_matrix(rho.matrix())?,
                None => Value::Null,
            };
            Ok(json!({
                "setting": cell.setting,
                "outcome": cell.outcome,
                "count": cell.count,
                "tomography": tomography,
                "fidelity_to_prediction": opt_num(cell.fidelity_to_prediction)?,
            }))
        })
        .collect::<Result<_, RunnerError>>()?;
    let pooled: Vec<Value> = stats
        .pooled_by_setting
        .iter()
        .map(|(setting, rho)| {
            Ok(json!({ "setting": setting, "state": complex_matrix(rho.matrix())? }))
        })
        .collect::<Result<_, RunnerError>>()?;
    Ok(json!({
        "trials": stats.n_trials,
        "settings": stats.setting_labels,
        "cells": cells,
        "steering_value": opt_num(stats.steering_value)?,
        "steering_stderr": opt_num(stats.steering_stderr)?,
        "violation_sigma": opt_num(stats.violation_sigma)?,
        "lhs_bound": num(stats.lhs_bound)?,
        "violation": stats.violation,
        "causality_violations": stats.causality_violations,
        "spacelike_separated": stats.spacelike_separated,
        "pooled": pooled,
        "pooled_deviation": num(stats.pooled_deviation)?,
        "pooled_consistent": stats.pooled_consistent,
    }))
}

fn event_value(log: &EventLog) -> Vec<Value> {
    log.events()
        .iter()
        .map(|event| {
            let (kind, data) = match &event.kind {
                EventKind::TriggerHeralded => ("trigger_heralded", json!({})),
                EventKind::BasisRequest { setting } => {
                    ("basis_request", json!({ "setting": setting }))
                }
                EventKind::AliceMeasured { setting, outcome } => (
                    "alice_measured",
                    json!({ "setting": setting, "outcome": outcome }),
                ),
                EventKind::BobDetected { observable, outcome } => (
                    "bob_detected",
                    json!({ "observable": observable, "outcome": outcome }),
                ),
            };
            json!({
                "t": event.t,
                "x": event.x,
                "kind": kind,
                "data": data,
                "trial": log.trial,
            })
        })
        .collect()
}

/// Runs a validated scenario and assembles the report. Event logs of the
/// steering session stream to `events` as JSON lines when provided.
pub fn run_scenario(
    scenario: &Scenario,
    mut events: Option<&mut dyn Write>,
) -> Result<Report, RunnerError> {
    scenario.validate()?;
    let canonical = scenario.serialize();
    let config_hash = {
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().fold(String::with_capacity(64), |mut acc, b| {
            use std::fmt::Write as _;
            let _ = write!(acc, "{b:02x}");
            acc
        })
    };

    let mut results = Map::new();
    let mut csv: Option<String> = None;

    if let Some(block) = circuit_block(scenario, &mut events)? {
        results.insert("circuit".into(), block);
    }

    match &scenario.run {
        Some(RunSpec::Ifm { variant, alpha, .. }) => {
            let trials = scenario.effective_trials().expect("validated");
            let seed = scenario.effective_seed().expect("validated");
            let variant = match variant {
                IfmVariantSpec::Empty => MzVariant::Empty,
                IfmVariantSpec::Absorber => MzVariant::Absorber,
                IfmVariantSpec::Polarizer => {
                    MzVariant::Polarizer { alpha_deg: alpha.unwrap_or(0.0) }
                }
            };
            let counts = run_ifm(trials, variant, seed)?;
            let variant_name = match counts.variant {
                MzVariant::Empty => "empty",
                MzVariant::Absorber => "absorber",
                MzVariant::Polarizer { .. } => "polarizer",
            };
            results.insert(
                "ifm".into(),
                json!({
                    "variant": variant_name,
                    "trials": counts.n_trials,
                    "counts": {
                        "d1": counts.d1,
                        "d2": counts.d2,
                        "absorbed": counts.absorbed,
                    },
                    "probabilities": {
                        "d1": num(counts.probabilities.0)?,
                        "d2": num(counts.probabilities.1)?,
                        "absorbed": num(counts.probabilities.2)?,
                    },
                    "control_d2": num(counts.control_d2)?,
                }),
            );
        }
        Some(RunSpec::Steering { strategy, ensemble, ensemble_seed }) => {
            let strategy = match strategy {
                StrategySpec::Quantum => AliceStrategy::Quantum,
                StrategySpec::Lhs => {
                    let ensemble = match ensemble.expect("validated") {
                        EnsembleSpec::Optimal => LhsEnsemble::optimal(),
                        EnsembleSpec::Random => LhsEnsemble::random(ensemble_seed.unwrap_or(0)),
                    };
                    AliceStrategy::LocalHiddenState(ensemble)
                }
            };
            let layout = scenario
                .layout
                .map(|l| SpacetimeLayout {
                    x_alice: l.alice,
                    x_bob: l.bob,
                    fiber_delay: l.fiber_delay,
                })
                .unwrap_or_default();
            let config = SessionConfig {
                n_trials: scenario.trials.expect("validated"),
                strategy,
                layout,
                seed: scenario.seed.expect("validated"),
            };
            let mut sink_error: Option<std::io::Error> = None;
            let stats = run_steering_session_with_events(&config, &mut |log| {
                if let Some(writer) = events.as_deref_mut() {
                    if sink_error.is_none() {
                        for line in event_value(log) {
                            match crate::report::to_canonical_json(&line) {
                                Ok(bytes) => {
                                    if let Err(e) = writer.write_all(&bytes) {
                                        sink_error = Some(e);
                                        break;
                                    }
                                }
                                Err(e) => {
                                    sink_error = Some(e);
                                    break;
                                }
                            }
                        }
                    }
                }
            })?;
            if let Some(e) = sink_error {
                return Err(e.into());
            }
            results.insert("steering_session".into(), session_value(&stats)?);
        }
        Some(RunSpec::Sweep { t_min, t_max, points }) => {
            let sg = scenario.sg.unwrap_or_default();
            let params = SgParams {
                sigma0: sg.sigma0,
                mu_c: sg.mu_c,
                b: sg.b,
                b0: sg.b0,
                m: sg.m,
                hbar: sg.hbar,
                t: 0.0,
            };
            let times: Vec<f64> = (0..*points)
                .map(|k| t_min + (t_max - t_min) * k as f64 / (*points - 1) as f64)
                .collect();
            let curve = sg_chsh_curve(&params, &times)?;
            let rows: Vec<Value> = curve
                .iter()
                .map(|p| {
                    Ok(Value::Array(vec![
                        num(p.t)?,
                        num(p.overlap.re)?,
                        num(p.overlap.im)?,
                        num(p.overlap.norm())?,
                        num(p.s_max)?,
                    ]))
                })
                .collect::<Result<_, RunnerError>>()?;
            results.insert(
                "sweep".into(),
                json!({
                    "columns": CSV_HEADER.split(',').collect::<Vec<_>>(),
                    "rows": rows,
                }),
            );
            let mut body = String::from(CSV_HEADER);
            body.push('\n');
            for p in &curve {
                body.push_str(&csv_row(p.t, p.overlap, p.s_max));
                body.push('\n');
            }
            csv = Some(body);
        }
        None => {}
    }

    let value = json!({
        "schema": SCHEMA_TAG,
        "name": scenario.name.clone().unwrap_or_else(|| "unnamed".into()),
        "seed": scenario.effective_seed(),
        "trials": scenario.effective_trials(),
        "config_hash": config_hash,
        "scenario": canonical,
        "results": Value::Object(results),
    });
    Ok(Report {
        value,
        csv,
        format: scenario.format.unwrap_or(OutFormat::Json),
    })
}
