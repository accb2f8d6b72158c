//! Operational steering session, causal bookkeeping, Bob's tomography,
//! the local-hidden-state adversary, and the interaction-free measurement
//! runner.
//!
//! One session trial: Bob's quantum random number generator picks a signal
//! ("blue" = H-V basis, "yellow" = diagonal basis) and the request is sent
//! to Alice while the photon is still in flight (the fiber delay guarantees
//! the request arrives first). A quantum Alice measures the entangled state
//! in the requested basis; a cheating Alice answers from a response table
//! fixed before the request and ships a pre-agreed state to Bob. Bob then
//! measures one of three path-qubit observables for tomography and the
//! steering functional.
//!
//! Every quantity accumulates in integers (counts and +-1 sums), so the
//! aggregated statistics are independent of trial execution order.

use nalgebra::{DMatrix, Matrix2, Vector3};
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::measure::{null_result_collapse, project_onto, MeasurementBasis};
use crate::optics::{build_fig2_state, build_mach_zehnder, MachZehnder, MzVariant};
use crate::qstate::{
    fidelity, pure_fidelity, BasisLabel, DensityOp, LabeledState, Path, PhotonLabel, Role, C64,
};
use crate::rng::{trial_rng, StreamPurpose};
use crate::steering::Setting;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// One-dimensional spacetime layout with the source at the origin and
/// signal speed 1. The fiber delay postpones the photon's departure from
/// the splitter toward both parties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeLayout {
    pub x_alice: f64,
    pub x_bob: f64,
    pub fiber_delay: f64,
}

impl Default for SpacetimeLayout {
    /// Symmetric layout with the fiber delay `2 |x_alice|` that lets
    /// Bob's signal reach Alice exactly when the photon does.
    fn default() -> Self {
        Self { x_alice: -1.0, x_bob: 1.0, fiber_delay: 2.0 }
    }
}

impl SpacetimeLayout {
    pub fn validate(&self) -> Result<()> {
        if self.x_alice.abs() <= 0.0 || self.x_bob.abs() <= 0.0 {
            return Err(CoreError::InvalidStrategy(
                "parties must sit away from the source".into(),
            ));
        }
        if self.fiber_delay < 0.0 {
            return Err(CoreError::InvalidStrategy("fiber delay must be non-negative".into()));
        }
        Ok(())
    }

    /// Trigger signal reaches Bob.
    pub fn bob_signal_time(&self) -> f64 {
        self.x_bob.abs()
    }

    /// Bob's basis request reaches Alice.
    pub fn request_arrival_time(&self) -> f64 {
        self.bob_signal_time() + (self.x_bob - self.x_alice).abs()
    }

    /// The delayed photon reaches Alice.
    pub fn photon_at_alice_time(&self) -> f64 {
        self.fiber_delay + self.x_alice.abs()
    }

    /// The delayed photon reaches Bob.
    pub fn photon_at_bob_time(&self) -> f64 {
        self.fiber_delay + self.x_bob.abs()
    }

    /// Alice measures when the photon arrives, never before the request.
    pub fn alice_measure_time(&self) -> f64 {
        self.photon_at_alice_time().max(self.request_arrival_time())
    }
}

/// One timestamped event of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TriggerHeralded,
    BasisRequest { setting: String },
    AliceMeasured { setting: String, outcome: String },
    BobDetected { observable: String, outcome: i8 },
}

/// Append-only event log of one trial.
#[derive(Debug, Clone)]
pub struct EventLog {
    pub trial: u64,
    events: Vec<Event>,
}

impl EventLog {
    pub fn new(trial: u64) -> Self {
        Self { trial, events: Vec::with_capacity(4) }
    }

    pub fn push(&mut self, event: Event) -> Result<()> {
        if event.t < 0.0 {
            return Err(CoreError::IncompleteLog("negative event time".into()));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    fn find(&self, pred: impl Fn(&EventKind) -> bool) -> Option<&Event> {
        self.events.iter().find(|e| pred(&e.kind))
    }
}

/// Builds the four-event log of one session trial under a layout.
pub fn session_event_log(
    trial: u64,
    layout: &SpacetimeLayout,
    setting: &str,
    alice_outcome: &str,
    bob_observable: &str,
    bob_outcome: i8,
) -> Result<EventLog> {
    let mut log = EventLog::new(trial);
    log.push(Event { t: 0.0, x: 0.0, kind: EventKind::TriggerHeralded })?;
    log.push(Event {
        t: layout.bob_signal_time(),
        x: layout.x_bob,
        kind: EventKind::BasisRequest { setting: setting.into() },
    })?;
    log.push(Event {
        t: layout.alice_measure_time(),
        x: layout.x_alice,
        kind: EventKind::AliceMeasured { setting: setting.into(), outcome: alice_outcome.into() },
    })?;
    log.push(Event {
        t: layout.photon_at_bob_time(),
        x: layout.x_bob,
        kind: EventKind::BobDetected { observable: bob_observable.into(), outcome: bob_outcome },
    })?;
    Ok(log)
}

/// Verdict of the causal-order checks on one trial log.
#[derive(Debug, Clone)]
pub struct CausalCheck {
    pub ok: bool,
    /// Whether Alice's and Bob's measurements are spacelike separated.
    pub spacelike: bool,
    pub violations: Vec<String>,
}

/// Checks that (i) the basis request could reach Alice before she
/// measured, (ii) the photon did not reach Alice before the request, and
/// (iii) reports whether the two measurements are spacelike separated.
pub fn verify_causal_order(log: &EventLog, layout: &SpacetimeLayout) -> Result<CausalCheck> {
    layout.validate()?;
    let request = log
        .find(|k| matches!(k, EventKind::BasisRequest { .. }))
        .ok_or_else(|| CoreError::IncompleteLog("missing basis request".into()))?;
    let alice = log
        .find(|k| matches!(k, EventKind::AliceMeasured { .. }))
        .ok_or_else(|| CoreError::IncompleteLog("missing Alice measurement".into()))?;
    let bob = log
        .find(|k| matches!(k, EventKind::BobDetected { .. }))
        .ok_or_else(|| CoreError::IncompleteLog("missing Bob detection".into()))?;
    log.find(|k| matches!(k, EventKind::TriggerHeralded))
        .ok_or_else(|| CoreError::IncompleteLog("missing trigger".into()))?;

    let slack = 1e-12;
    let mut violations = Vec::new();
    let transit = (layout.x_bob - layout.x_alice).abs();
    if request.t + transit > alice.t + slack {
        violations.push(format!(
            "basis request at t={} cannot reach Alice by her measurement at t={}",
            request.t, alice.t
        ));
    }
    let request_arrival = request.t + transit;
    if layout.photon_at_alice_time() + slack < request_arrival {
        violations.push(format!(
            "photon reaches Alice at t={} before the request arrives at t={}",
            layout.photon_at_alice_time(),
            request_arrival
        ));
    }
    let spacelike = (alice.x - bob.x).abs() > (alice.t - bob.t).abs();
    Ok(CausalCheck { ok: violations.is_empty(), spacelike, violations })
}

/// One member of a local-hidden-state ensemble: a weight, a deterministic
/// response per setting, and the state shipped to Bob.
#[derive(Debug, Clone)]
pub struct LhsMember {
    pub weight: f64,
    /// Outcome index (0 or 1) for each setting index.
    pub responses: Vec<usize>,
    /// Bob's pre-agreed path-qubit state.
    pub bob_state: DensityOp,
}

/// A cheating Alice's full strategy, fixed before any basis request.
#[derive(Debug, Clone)]
pub struct LhsEnsemble {
    pub members: Vec<LhsMember>,
}

fn path_basis() -> Vec<BasisLabel> {
    vec![
        BasisLabel::Photon(PhotonLabel::path(Path::A)),
        BasisLabel::Photon(PhotonLabel::path(Path::B)),
    ]
}

fn bloch_to_density(z: f64, x: f64, y: f64) -> DensityOp {
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[
            c((1.0 + z) / 2.0, 0.0),
            c(x / 2.0, -y / 2.0),
            c(x / 2.0, y / 2.0),
            c((1.0 - z) / 2.0, 0.0),
        ],
    );
    DensityOp::new(path_basis(), m).expect("valid Bloch state")
}

impl LhsEnsemble {
    pub fn validate(&self, n_settings: usize) -> Result<()> {
        if self.members.is_empty() {
            return Err(CoreError::InvalidStrategy("empty ensemble".into()));
        }
        let total: f64 = self.members.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidStrategy(format!(
                "ensemble weights sum to {total}"
            )));
        }
        for member in &self.members {
            if member.weight < 0.0 {
                return Err(CoreError::InvalidStrategy("negative weight".into()));
            }
            if member.responses.len() != n_settings {
                return Err(CoreError::InvalidStrategy(
                    "response table arity differs from the setting count".into(),
                ));
            }
            if member.responses.iter().any(|&r| r > 1) {
                return Err(CoreError::InvalidStrategy("outcome index out of range".into()));
            }
            member.bob_state.validate()?;
            if member.bob_state.dim() != 2 {
                return Err(CoreError::Dimension { expected: 2, got: member.bob_state.dim() });
            }
        }
        Ok(())
    }

    /// Strongest fixed-ensemble cheat for the blue/yellow session: four
    /// pure states along (+-1, 0, +-1)/sqrt(2) with greedy responses; its
    /// steering value is exactly the bound sqrt(2).
    pub fn optimal() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let members = [(s, s), (s, -s), (-s, s), (-s, -s)]
            .into_iter()
            .map(|(z, x)| LhsMember {
                weight: 0.25,
                responses: vec![usize::from(z < 0.0), usize::from(x < 0.0)],
                bob_state: bloch_to_density(z, x, 0.0),
            })
            .collect();
        Self { members }
    }

    /// Random fixed ensemble: up to four mixed states with greedy
    /// responses on even seeds and random responses on odd seeds.
    pub fn random(seed: u64) -> Self {
        let mut rng = trial_rng(seed, 0, StreamPurpose::LhsLambda);
        let count = rng.gen_range(1..=4);
        let mut weights: Vec<f64> = (0..count).map(|_| rng.gen::<f64>() + 0.05).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let greedy = seed % 2 == 0;
        let members = weights
            .into_iter()
            .map(|weight| {
                let costheta: f64 = rng.gen_range(-1.0..1.0);
                let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r: f64 = rng.gen::<f64>().powf(1.0 / 3.0);
                let sintheta = (1.0 - costheta * costheta).sqrt();
                let (z, x, y) = (
                    r * costheta,
                    r * sintheta * phi.cos(),
                    r * sintheta * phi.sin(),
                );
                let responses = if greedy {
                    vec![usize::from(z < 0.0), usize::from(x < 0.0)]
                } else {
                    vec![rng.gen_range(0..2), rng.gen_range(0..2)]
                };
                LhsMember { weight, responses, bob_state: bloch_to_density(z, x, y) }
            })
            .collect();
        Self { members }
    }

    /// Analytic conditional state and probability for (setting, outcome).
    pub fn conditional(&self, setting_idx: usize, outcome_idx: usize) -> (Option<DensityOp>, f64) {
        let mut acc: Option<DensityOp> = None;
        let mut prob = 0.0;
        for member in &self.members {
            if member.responses[setting_idx] == outcome_idx {
                prob += member.weight;
                let scaled = member.bob_state.scale(member.weight);
                acc = Some(match acc {
                    None => scaled,
                    Some(prev) => prev.add(&scaled).expect("same basis"),
                });
            }
        }
        (acc.map(|op| op.scale(1.0 / prob.max(f64::MIN_POSITIVE))), prob)
    }
}

/// What Alice actually does in the session.
#[derive(Debug, Clone)]
pub enum AliceStrategy {
    /// Honest Alice measuring the entangled state.
    Quantum,
    /// Cheating Alice with a pre-fixed classical ensemble.
    LocalHiddenState(LhsEnsemble),
}

/// Session configuration.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub n_trials: u64,
    pub strategy: AliceStrategy,
    pub layout: SpacetimeLayout,
    pub seed: u64,
}

/// Per-(setting, outcome) statistics.
#[derive(Debug, Clone)]
pub struct CellStats {
    pub setting: String,
    pub outcome: String,
    pub count: u64,
    /// Linear-inversion estimate of Bob's conditional state, when all
    /// three observables were sampled in this cell.
    pub tomography: Option<DensityOp>,
    /// Fidelity of the estimate against the analytic prediction.
    pub fidelity_to_prediction: Option<f64>,
}

/// Aggregated session results.
#[derive(Debug, Clone)]
pub struct SessionStats {
    pub n_trials: u64,
    pub setting_labels: Vec<String>,
    pub cells: Vec<CellStats>,
    /// Matched-arm estimate of the linear steering functional.
    pub steering_value: Option<f64>,
    /// Standard error with a finite-sample (add-one) variance floor;
    /// None when an arm has no samples (flagged degenerate run).
    pub steering_stderr: Option<f64>,
    pub lhs_bound: f64,
    /// Violation significance (value - bound) / stderr.
    pub violation_sigma: Option<f64>,
    pub violation: bool,
    /// Always zero in a returned value: a failing trial aborts the session.
    pub causality_violations: u64,
    pub spacelike_separated: bool,
    /// Pooled tomography per setting (outcome-blind).
    pub pooled_by_setting: Vec<(String, DensityOp)>,
    /// Worst entrywise deviation between pooled estimates.
    pub pooled_deviation: f64,
    /// Whether the pooled estimates agree within five combined standard
    /// errors (protocol-level no-signalling).
    pub pooled_consistent: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct PlusMinusSum {
    sum: i64,
    n: u64,
}

impl PlusMinusSum {
    fn push(&mut self, value: i64) {
        self.sum += value;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }

    /// Mean with Laplace smoothing on the +1 count, keeping the variance
    /// strictly positive for perfectly correlated arms.
    fn smoothed_variance_over_n(&self) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        let plus = (self.sum + self.n as i64) as f64 / 2.0;
        let p = (plus + 1.0) / (self.n as f64 + 2.0);
        let m = 2.0 * p - 1.0;
        Some((1.0 - m * m) / self.n as f64)
    }
}

/// Bob's accumulated +-1 counts for the three path observables
/// (sigma_z, sigma_x, sigma_y).
#[derive(Debug, Clone, Copy, Default)]
pub struct TomographyData {
    pub per_observable: [PlusMinusSumPublic; 3],
}

/// Public mirror of the +-1 accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlusMinusSumPublic {
    pub sum: i64,
    pub n: u64,
}

impl TomographyData {
    pub fn add(&mut self, observable: usize, outcome: i8) {
        self.per_observable[observable].sum += i64::from(outcome);
        self.per_observable[observable].n += 1;
    }

    fn expectations(&self) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (i, acc) in self.per_observable.iter().enumerate() {
            if acc.n == 0 {
                let name = ["sigma_z", "sigma_x", "sigma_y"][i];
                return Err(CoreError::MissingObservable(name.into()));
            }
            out[i] = acc.sum as f64 / acc.n as f64;
        }
        Ok(out)
    }
}

/// Linear-inversion tomography from sampled +-1 counts:
/// `rho = (I + <sz> sz + <sx> sx + <sy> sy) / 2`, eigenvalue-clipped to
/// the state space and renormalized.
pub fn bob_tomography(data: &TomographyData) -> Result<DensityOp> {
    let [ez, ex, ey] = data.expectations()?;
    bob_tomography_exact([ez, ex, ey])
}

/// Linear inversion from exact expectation values.
pub fn bob_tomography_exact(expectations: [f64; 3]) -> Result<DensityOp> {
    let [ez, ex, ey] = expectations;
    let raw = Matrix2::new(
        c((1.0 + ez) / 2.0, 0.0),
        c(ex / 2.0, -ey / 2.0),
        c(ex / 2.0, ey / 2.0),
        c((1.0 - ez) / 2.0, 0.0),
    );
    let eig = raw.symmetric_eigen();
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(CoreError::InvalidOperator("tomography estimate collapsed".into()));
    }
    let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
    for (k, lambda) in clipped.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] += c(lambda / total, 0.0) * v[i] * v[j].conj();
            }
        }
    }
    DensityOp::new(path_basis(), m)
}

/// Bloch vector of a path-qubit density operator.
fn bloch_of(rho: &DensityOp) -> Vector3<f64> {
    let m = rho.matrix();
    Vector3::new(
        2.0 * m[(0, 1)].re,
        -2.0 * m[(0, 1)].im,
        m[(0, 0)].re - m[(1, 1)].re,
    )
}

/// Runs the Monte Carlo steering session.
pub fn run_steering_session(config: &SessionConfig) -> Result<SessionStats> {
    run_steering_session_with_events(config, &mut |_| {})
}

/// Session runner with an event-log sink (one log per trial).
pub fn run_steering_session_with_events(
    config: &SessionConfig,
    sink: &mut dyn FnMut(&EventLog),
) -> Result<SessionStats> {
    if config.n_trials == 0 {
        return Err(CoreError::InvalidStrategy("a session needs at least one trial".into()));
    }
    config.layout.validate()?;
    let settings = Setting::blue_yellow();
    let observables = ["sz", "sx", "sy"];

    // The layout is trial-independent, so one causal check covers every
    // trial; a violation aborts the session before any sampling.
    {
        let probe = session_event_log(0, &config.layout, &settings[0].label, "probe", "sz", 1)?;
        let check = verify_causal_order(&probe, &config.layout)?;
        if !check.ok {
            return Err(CoreError::CausalityViolation {
                trial: 0,
                detail: check.violations.join("; "),
            });
        }
    }

    // Precomputed per-(setting, outcome) branch data: probability, Bob's
    // conditional state, its three expectations, and the outcome label.
    struct BranchTable {
        outcome_labels: [String; 2],
        probabilities: [f64; 2],
        expectations: [[f64; 3]; 2],
        predictions: [Option<DensityOp>; 2],
    }
    let pauli_expect = |rho: &DensityOp| -> [f64; 3] {
        let b = bloch_of(rho);
        [b.z, b.x, b.y]
    };

    let mut tables: Vec<BranchTable> = Vec::with_capacity(settings.len());
    let mut lhs_members: Option<&LhsEnsemble> = None;
    match &config.strategy {
        AliceStrategy::Quantum => {
            let state = build_fig2_state();
            for setting in &settings {
                let labels = setting.basis.outcome_labels();
                let mut table = BranchTable {
                    outcome_labels: [labels[0].to_string(), labels[1].to_string()],
                    probabilities: [0.0; 2],
                    expectations: [[0.0; 3]; 2],
                    predictions: [None, None],
                };
                for (a, label) in labels.iter().enumerate() {
                    let (post, p) = project_onto(&state, &setting.basis, label)?;
                    let bob = post.to_density().partial_trace(&[Role::Path])?;
                    table.probabilities[a] = p;
                    table.expectations[a] = pauli_expect(&bob);
                    table.predictions[a] = Some(bob);
                }
                tables.push(table);
            }
        }
        AliceStrategy::LocalHiddenState(ensemble) => {
            ensemble.validate(settings.len())?;
            lhs_members = Some(ensemble);
            for (x, setting) in settings.iter().enumerate() {
                let labels = setting.basis.outcome_labels();
                let mut table = BranchTable {
                    outcome_labels: [labels[0].to_string(), labels[1].to_string()],
                    probabilities: [0.0; 2],
                    expectations: [[0.0; 3]; 2],
                    predictions: [None, None],
                };
                for a in 0..2 {
                    let (prediction, p) = ensemble.conditional(x, a);
                    table.probabilities[a] = p;
                    table.predictions[a] = prediction;
                }
                tables.push(table);
            }
        }
    }
    // Per-member expectations for the cheating strategy.
    let member_expectations: Vec<(f64, [f64; 3])> = lhs_members
        .map(|e| {
            e.members
                .iter()
                .map(|m| (m.weight, pauli_expect(&m.bob_state)))
                .collect()
        })
        .unwrap_or_default();

    let mut counts = [[0u64; 2]; 2];
    let mut cell_tomo = [[TomographyData::default(); 2]; 2];
    let mut pooled_tomo = [TomographyData::default(); 2];
    // Matched arms of the steering functional: (blue, sz) and (yellow, sx).
    let mut arms = [PlusMinusSum::default(); 2];

    for trial in 0..config.n_trials {
        let x = trial_rng(config.seed, trial, StreamPurpose::BobSetting).gen_range(0..2usize);
        let a = match &config.strategy {
            AliceStrategy::Quantum => {
                let u: f64 = trial_rng(config.seed, trial, StreamPurpose::AliceOutcome).gen();
                usize::from(u >= tables[x].probabilities[0])
            }
            AliceStrategy::LocalHiddenState(ensemble) => {
                // Lambda is drawn before the basis request could matter:
                // the stream depends only on (seed, trial).
                let u: f64 = trial_rng(config.seed, trial, StreamPurpose::LhsLambda).gen();
                let mut cumulative = 0.0;
                let mut pick = ensemble.members.len() - 1;
                for (i, member) in ensemble.members.iter().enumerate() {
                    cumulative += member.weight;
                    if u < cumulative {
                        pick = i;
                        break;
                    }
                }
                ensemble.members[pick].responses[x]
            }
        };
        let expectations = match &config.strategy {
            AliceStrategy::Quantum => tables[x].expectations[a],
            AliceStrategy::LocalHiddenState(ensemble) => {
                // Recover the drawn member for Bob's sampling.
                let u: f64 = trial_rng(config.seed, trial, StreamPurpose::LhsLambda).gen();
                let mut cumulative = 0.0;
                let mut pick = ensemble.members.len() - 1;
                for (i, member) in ensemble.members.iter().enumerate() {
                    cumulative += member.weight;
                    if u < cumulative {
                        pick = i;
                        break;
                    }
                }
                member_expectations[pick].1
            }
        };

        let mut bob_rng = trial_rng(config.seed, trial, StreamPurpose::BobOutcome);
        let obs = bob_rng.gen_range(0..3usize);
        let u: f64 = bob_rng.gen();
        let outcome: i8 = if u < (1.0 + expectations[obs]) / 2.0 { 1 } else { -1 };

        counts[x][a] += 1;
        cell_tomo[x][a].add(obs, outcome);
        pooled_tomo[x].add(obs, outcome);
        let sign = 1 - 2 * a as i64;
        if x == 0 && obs == 0 {
            arms[0].push(sign * i64::from(outcome));
        }
        if x == 1 && obs == 1 {
            arms[1].push(sign * i64::from(outcome));
        }

        let log = session_event_log(
            trial,
            &config.layout,
            &settings[x].label,
            &tables[x].outcome_labels[a],
            observables[obs],
            outcome,
        )?;
        sink(&log);
    }

    let steering_value = match (arms[0].mean(), arms[1].mean()) {
        (Some(m0), Some(m1)) => Some(m0 + m1),
        _ => None,
    };
    let steering_stderr = match (
        arms[0].smoothed_variance_over_n(),
        arms[1].smoothed_variance_over_n(),
    ) {
        (Some(v0), Some(v1)) => Some((v0 + v1).sqrt()),
        _ => None,
    };
    let lhs_bound = std::f64::consts::SQRT_2;
    let violation_sigma = match (steering_value, steering_stderr) {
        (Some(v), Some(e)) if e > 0.0 => Some((v - lhs_bound) / e),
        _ => None,
    };
    let violation = violation_sigma.map(|z| z >= 5.0).unwrap_or(false);

    let mut cells = Vec::new();
    for (x, setting) in settings.iter().enumerate() {
        for a in 0..2 {
            let tomography = bob_tomography(&cell_tomo[x][a]).ok();
            let fidelity_to_prediction = match (&tomography, &tables[x].predictions[a]) {
                (Some(estimate), Some(prediction)) if prediction.trace() > 1e-12 => {
                    fidelity(estimate, prediction).ok()
                }
                _ => None,
            };
            cells.push(CellStats {
                setting: setting.label.clone(),
                outcome: tables[x].outcome_labels[a].clone(),
                count: counts[x][a],
                tomography,
                fidelity_to_prediction,
            });
        }
    }

    let pooled: Vec<(String, DensityOp)> = settings
        .iter()
        .enumerate()
        .filter_map(|(x, s)| {
            bob_tomography(&pooled_tomo[x]).ok().map(|rho| (s.label.clone(), rho))
        })
        .collect();
    let mut pooled_deviation = 0.0f64;
    let mut pooled_consistent = true;
    if pooled.len() == 2 {
        pooled_deviation = pooled[0].1.max_abs_diff(&pooled[1].1);
        // Component-wise five-sigma agreement between the two estimates.
        let b0 = bloch_of(&pooled[0].1);
        let b1 = bloch_of(&pooled[1].1);
        for axis in 0..3 {
            let n0 = pooled_tomo[0].per_observable[axis].n.max(1) as f64;
            let n1 = pooled_tomo[1].per_observable[axis].n.max(1) as f64;
            let stderr = (1.0 / n0 + 1.0 / n1).sqrt();
            if (b0[axis_index(axis)] - b1[axis_index(axis)]).abs() > 5.0 * stderr {
                pooled_consistent = false;
            }
        }
    }

    let spacelike = {
        let probe = session_event_log(0, &config.layout, &settings[0].label, "probe", "sz", 1)?;
        verify_causal_order(&probe, &config.layout)?.spacelike
    };

    Ok(SessionStats {
        n_trials: config.n_trials,
        setting_labels: settings.iter().map(|s| s.label.clone()).collect(),
        cells,
        steering_value,
        steering_stderr,
        lhs_bound,
        violation_sigma,
        violation,
        causality_violations: 0,
        spacelike_separated: spacelike,
        pooled_by_setting: pooled,
        pooled_deviation,
        pooled_consistent,
    })
}

/// Accumulator axes are (sz, sx, sy); Bloch vector components are (x,y,z).
fn axis_index(observable: usize) -> usize {
    match observable {
        0 => 2, // sigma_z -> z
        1 => 0, // sigma_x -> x
        _ => 1, // sigma_y -> y
    }
}

/// Counts of an interaction-free measurement run.
#[derive(Debug, Clone)]
pub struct IfmCounts {
    pub variant: MzVariant,
    pub n_trials: u64,
    pub d1: u64,
    pub d2: u64,
    pub absorbed: u64,
    /// Analytic per-trial distribution (D1, D2, absorbed).
    pub probabilities: (f64, f64, f64),
    /// Analytic D2 probability of the no-object control of the same
    /// interferometer (exactly zero when interference is restored).
    pub control_d2: f64,
}

fn detector_distribution(mz: &MachZehnder) -> Result<(f64, f64, f64)> {
    let branches = mz.circuit().run_pure(&mz.input())?;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut absorbed = 0.0;
    for b in &branches {
        absorbed += b.probability * b.state.population(BasisLabel::is_vacuum);
        d1 += b.probability
            * b.state.population(|l| {
                matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::B))
            });
        d2 += b.probability
            * b.state.population(|l| {
                matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::A))
            });
    }
    Ok((d1, d2, absorbed))
}

/// Samples `n_trials` photons through the interferometer.
pub fn run_ifm(n_trials: u64, variant: MzVariant, seed: u64) -> Result<IfmCounts> {
    if n_trials == 0 {
        return Err(CoreError::InvalidStrategy("a run needs at least one trial".into()));
    }
    let mz = build_mach_zehnder(variant);
    let (p_d1, p_d2, p_absorbed) = detector_distribution(&mz)?;
    let control_d2 = match variant {
        MzVariant::Empty => p_d2,
        MzVariant::Absorber => {
            detector_distribution(&build_mach_zehnder(MzVariant::Empty))?.1
        }
        MzVariant::Polarizer { .. } => {
            // Same interferometer with the object removed: the eraser and
            // compensator keep D2 exactly dark.
            let control = MachZehnder { object: None, ..build_mach_zehnder(variant) };
            detector_distribution(&control)?.1
        }
    };
    let mut counts = IfmCounts {
        variant,
        n_trials,
        d1: 0,
        d2: 0,
        absorbed: 0,
        probabilities: (p_d1, p_d2, p_absorbed),
        control_d2,
    };
    for trial in 0..n_trials {
        let u: f64 = trial_rng(seed, trial, StreamPurpose::IfmBranch).gen();
        if u < p_d1 {
            counts.d1 += 1;
        } else if u < p_d1 + p_d2 {
            counts.d2 += 1;
        } else {
            counts.absorbed += 1;
        }
    }
    Ok(counts)
}

/// Side-by-side demonstration that the interferometer's null result and
/// the steering "detects nothing" branch are the same collapse.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    /// Post-collapse state when Alice's polarizer absorbs nothing
    /// (steering experiment).
    pub steering_null_state: LabeledState,
    pub steering_null_prob: f64,
    /// Post-collapse interior state when the interferometer's arm-B
    /// polarizer absorbs nothing.
    pub ifm_null_state: LabeledState,
    pub ifm_null_prob: f64,
    /// Fidelity between the two post-collapse path-qubit states.
    pub path_state_fidelity: f64,
    /// Fidelity between the full post-collapse states.
    pub full_state_fidelity: f64,
    /// Analytic absorber branch probabilities (pass, absorbed) versus the
    /// destructive path detection (no-click, click) on the same state.
    pub absorber_branch_probs: (f64, f64),
    pub detect_branch_probs: (f64, f64),
    /// Sampled absorbed/click fractions under the given seed.
    pub sampled_absorbed_fraction: f64,
    pub sampled_click_fraction: f64,
    /// D2 probability of the empty interferometer control.
    pub empty_control_d2: f64,
}

/// Builds the equivalence report: both null results are instances of the
/// same null-result collapse with the same projector structure.
pub fn steering_ifm_equivalence_report(seed: u64) -> Result<EquivalenceReport> {
    let block = MeasurementBasis::arm_block(Path::B, 0.0);

    // Steering side: Alice's H-pass polarizer in the beam to New York
    // absorbs nothing.
    let steering_state = build_fig2_state();
    let (steering_null_state, steering_null_prob) =
        null_result_collapse(&steering_state, &block, "blocked")?;

    // Interferometer side: the same projector on the interior state.
    let mz = build_mach_zehnder(MzVariant::Polarizer { alpha_deg: 0.0 });
    let interior = mz.interior_state()?;
    let (ifm_null_state, ifm_null_prob) = null_result_collapse(&interior, &block, "blocked")?;

    let path_state_fidelity = fidelity(
        &steering_null_state.to_density().partial_trace(&[Role::Path])?,
        &ifm_null_state.to_density().partial_trace(&[Role::Path])?,
    )?;
    let full_state_fidelity = pure_fidelity(&steering_null_state, &ifm_null_state);

    // Destructive reading: absorber branches match the path detector.
    let absorber_out = crate::optics::apply_element(
        &steering_state,
        &crate::optics::OpticalElement::Absorber { path: Path::B },
    )?;
    let (mut pass_p, mut absorbed_p) = (0.0, 0.0);
    if let crate::optics::ElementOutput::Branches(branches) = absorber_out {
        for b in branches {
            match b.tag.as_str() {
                "pass" => pass_p = b.probability,
                _ => absorbed_p = b.probability,
            }
        }
    }
    let p_click = steering_state.population(|l| {
        matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::B))
    });

    let n = 10_000u64;
    let mut absorbed_samples = 0u64;
    let mut click_samples = 0u64;
    for trial in 0..n {
        let u: f64 = trial_rng(seed, trial, StreamPurpose::IfmBranch).gen();
        if u < absorbed_p {
            absorbed_samples += 1;
        }
        let mut rng = trial_rng(seed, trial, StreamPurpose::BobOutcome);
        let record = crate::measure::detect_path(&steering_state, Path::B, &mut rng)?;
        if record.outcome == "click" {
            click_samples += 1;
        }
    }

    let empty = run_ifm(1, MzVariant::Empty, seed)?;

    Ok(EquivalenceReport {
        steering_null_state,
        steering_null_prob,
        ifm_null_state,
        ifm_null_prob,
        path_state_fidelity,
        full_state_fidelity,
        absorber_branch_probs: (pass_p, absorbed_p),
        detect_branch_probs: (1.0 - p_click, p_click),
        sampled_absorbed_fraction: absorbed_samples as f64 / n as f64,
        sampled_click_fraction: click_samples as f64 / n as f64,
        empty_control_d2: empty.probabilities.1,
    })
}
