//! Projective, null-result, destructive and non-selective measurements.
//!
//! Polarization bases act on the polarization factor across both paths
//! (the idealized projective reading of Alice's analyzer); path-click and
//! arm-block bases act on the full space and cover the vacuum label, so
//! destructive detection stays total. Bases named `HV`, `DIAG`, `CIRC` and
//! `PATH` are the reserved scenario words.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::optics::circular_jones;
use crate::qstate::{BasisLabel, DensityOp, LabeledState, Path, C64, TOL, ZERO_NORM};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Debug, Clone)]
enum ProjectorKind {
    /// Projector onto a polarization Jones vector, identity on path/OAM,
    /// zero on vacuum.
    PolVector([C64; 2]),
    /// Projector onto every photon label on one path.
    PathIndicator(Path),
    /// Projector onto one Jones vector within one arm (a polarizer's
    /// blocked direction); the rest of the basis is its complement.
    ArmPolVector { path: Path, jones: [C64; 2] },
    /// Identity minus the sum of all other outcomes of the basis;
    /// covers the vacuum label.
    Complement,
    /// Explicit projector matrix over an explicit basis.
    Custom { basis: Vec<BasisLabel>, matrix: DMatrix<C64> },
}

#[derive(Debug, Clone)]
struct OutcomeProjector {
    label: String,
    kind: ProjectorKind,
}

/// A named projective measurement basis.
#[derive(Debug, Clone)]
pub struct MeasurementBasis {
    name: String,
    outcomes: Vec<OutcomeProjector>,
}

impl MeasurementBasis {
    /// Horizontal/vertical polarization basis.
    pub fn hv() -> Self {
        Self {
            name: "HV".into(),
            outcomes: vec![
                OutcomeProjector {
                    label: "H".into(),
                    kind: ProjectorKind::PolVector([c(1.0, 0.0), c(0.0, 0.0)]),
                },
                OutcomeProjector {
                    label: "V".into(),
                    kind: ProjectorKind::PolVector([c(0.0, 0.0), c(1.0, 0.0)]),
                },
            ],
        }
    }

    /// Diagonal basis `|+-> = (|V> +- |H>)/sqrt(2)`.
    pub fn diag() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            name: "DIAG".into(),
            outcomes: vec![
                OutcomeProjector {
                    label: "+".into(),
                    kind: ProjectorKind::PolVector([c(s, 0.0), c(s, 0.0)]),
                },
                OutcomeProjector {
                    label: "-".into(),
                    kind: ProjectorKind::PolVector([c(-s, 0.0), c(s, 0.0)]),
                },
            ],
        }
    }

    /// Left/right circular basis in the fixed convention.
    pub fn circular() -> Self {
        let (l, r) = circular_jones();
        Self {
            name: "CIRC".into(),
            outcomes: vec![
                OutcomeProjector { label: "L".into(), kind: ProjectorKind::PolVector(l) },
                OutcomeProjector { label: "R".into(), kind: ProjectorKind::PolVector(r) },
            ],
        }
    }

    /// Click/no-click detection on one path; the no-click outcome covers
    /// the rest of the space including vacuum.
    pub fn path_click(path: Path) -> Self {
        Self {
            name: "PATH".into(),
            outcomes: vec![
                OutcomeProjector {
                    label: "click".into(),
                    kind: ProjectorKind::PathIndicator(path),
                },
                OutcomeProjector { label: "none".into(), kind: ProjectorKind::Complement },
            ],
        }
    }

    /// Blocked/pass decomposition of a polarizer in one arm: "blocked" is
    /// the projector onto the arm's absorbed Jones vector (orthogonal to
    /// the pass axis at `alpha_deg`).
    pub fn arm_block(path: Path, alpha_deg: f64) -> Self {
        let a = alpha_deg.to_radians();
        // Exact at the axis angles used by the experiments.
        let (block_h, block_v) = if alpha_deg == 0.0 {
            (0.0, 1.0)
        } else if alpha_deg == 90.0 {
            (-1.0, 0.0)
        } else {
            (-a.sin(), a.cos())
        };
        Self {
            name: "ARM_BLOCK".into(),
            outcomes: vec![
                OutcomeProjector {
                    label: "blocked".into(),
                    kind: ProjectorKind::ArmPolVector {
                        path,
                        jones: [c(block_h, 0.0), c(block_v, 0.0)],
                    },
                },
                OutcomeProjector { label: "pass".into(), kind: ProjectorKind::Complement },
            ],
        }
    }

    /// Polarization basis from an arbitrary orthonormal Jones pair.
    pub fn pol_pair(
        name: &str,
        labels: [&str; 2],
        jones_a: [C64; 2],
        jones_b: [C64; 2],
    ) -> Result<Self> {
        let norm_a = (jones_a[0].norm_sqr() + jones_a[1].norm_sqr() - 1.0).abs();
        let norm_b = (jones_b[0].norm_sqr() + jones_b[1].norm_sqr() - 1.0).abs();
        let overlap =
            (jones_a[0].conj() * jones_b[0] + jones_a[1].conj() * jones_b[1]).norm();
        if norm_a > TOL || norm_b > TOL || overlap > TOL {
            return Err(CoreError::InvalidOperator(
                "Jones vectors must be orthonormal".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            outcomes: vec![
                OutcomeProjector {
                    label: labels[0].into(),
                    kind: ProjectorKind::PolVector(jones_a),
                },
                OutcomeProjector {
                    label: labels[1].into(),
                    kind: ProjectorKind::PolVector(jones_b),
                },
            ],
        })
    }

    /// Basis from explicit projector matrices over an explicit label set.
    pub fn custom(
        name: &str,
        basis: Vec<BasisLabel>,
        projectors: Vec<(String, DMatrix<C64>)>,
    ) -> Result<Self> {
        let outcomes = projectors
            .into_iter()
            .map(|(label, matrix)| OutcomeProjector {
                label,
                kind: ProjectorKind::Custom { basis: basis.clone(), matrix },
            })
            .collect();
        let this = Self { name: name.into(), outcomes };
        this.validate_on(&basis)?;
        Ok(this)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn outcome_labels(&self) -> Vec<&str> {
        self.outcomes.iter().map(|o| o.label.as_str()).collect()
    }

    /// Lifts every outcome onto a concrete state basis.
    pub fn lifted_projectors(
        &self,
        state_basis: &[BasisLabel],
    ) -> Result<Vec<(String, DMatrix<C64>)>> {
        let n = state_basis.len();
        let mut lifted: Vec<(String, DMatrix<C64>)> = Vec::new();
        let mut complement_slots: Vec<usize> = Vec::new();
        for (slot, outcome) in self.outcomes.iter().enumerate() {
            let mut m = DMatrix::from_element(n, n, c(0.0, 0.0));
            match &outcome.kind {
                ProjectorKind::PolVector(jones) => {
                    for (i, li) in state_basis.iter().enumerate() {
                        let pi = match li.as_photon() {
                            Some(p) => p,
                            None => continue,
                        };
                        let qi = pi.pol.ok_or_else(|| {
                            CoreError::Role(
                                "polarization basis requires a polarization register".into(),
                            )
                        })?;
                        for (j, lj) in state_basis.iter().enumerate() {
                            let pj = match lj.as_photon() {
                                Some(p) => p,
                                None => continue,
                            };
                            if pi.path == pj.path && pi.oam == pj.oam {
                                let qj = pj.pol.unwrap();
                                m[(i, j)] = jones[qi as usize] * jones[qj as usize].conj();
                            }
                        }
                    }
                }
                ProjectorKind::PathIndicator(path) => {
                    for (i, li) in state_basis.iter().enumerate() {
                        if matches!(li.as_photon(), Some(p) if p.path == Some(*path)) {
                            m[(i, i)] = c(1.0, 0.0);
                        }
                    }
                }
                ProjectorKind::ArmPolVector { path, jones } => {
                    for (i, li) in state_basis.iter().enumerate() {
                        let pi = match li.as_photon() {
                            Some(p) if p.path == Some(*path) => p,
                            _ => continue,
                        };
                        let qi = pi.pol.ok_or_else(|| {
                            CoreError::Role(
                                "arm polarizer requires a polarization register".into(),
                            )
                        })?;
                        for (j, lj) in state_basis.iter().enumerate() {
                            let pj = match lj.as_photon() {
                                Some(p) if p.path == Some(*path) => p,
                                _ => continue,
                            };
                            if pi.oam == pj.oam {
                                let qj = pj.pol.unwrap();
                                m[(i, j)] = jones[qi as usize] * jones[qj as usize].conj();
                            }
                        }
                    }
                }
                ProjectorKind::Complement => {
                    complement_slots.push(slot);
                }
                ProjectorKind::Custom { basis, matrix } => {
                    if basis.as_slice() != state_basis {
                        // Embed the custom projector into the state's basis.
                        for (i, li) in state_basis.iter().enumerate() {
                            for (j, lj) in state_basis.iter().enumerate() {
                                if let (Ok(bi), Ok(bj)) =
                                    (basis.binary_search(li), basis.binary_search(lj))
                                {
                                    m[(i, j)] = matrix[(bi, bj)];
                                }
                            }
                        }
                    } else {
                        m = matrix.clone();
                    }
                }
            }
            lifted.push((outcome.label.clone(), m));
        }
        for slot in complement_slots {
            let mut m = DMatrix::identity(n, n);
            for (i, (_, p)) in lifted.iter().enumerate() {
                if i != slot && !matches!(self.outcomes[i].kind, ProjectorKind::Complement) {
                    m -= p;
                }
            }
            lifted[slot].1 = m;
        }
        Ok(lifted)
    }

    /// Checks the structural invariants of the lifted projectors:
    /// idempotent, mutually orthogonal, and summing to the identity on the
    /// measured factor (the photon sector for polarization bases, the full
    /// space for click bases).
    pub fn validate_on(&self, state_basis: &[BasisLabel]) -> Result<()> {
        let lifted = self.lifted_projectors(state_basis)?;
        let n = state_basis.len();
        for (label, p) in &lifted {
            if (p * p - p).norm() > TOL {
                return Err(CoreError::InvalidOperator(format!(
                    "projector {label} not idempotent"
                )));
            }
            if (p.adjoint() - p).norm() > TOL {
                return Err(CoreError::InvalidOperator(format!(
                    "projector {label} not Hermitian"
                )));
            }
        }
        for (i, (_, pi)) in lifted.iter().enumerate() {
            for (_, pj) in lifted.iter().skip(i + 1) {
                if (pi * pj).norm() > TOL {
                    return Err(CoreError::InvalidOperator(
                        "projectors not mutually orthogonal".into(),
                    ));
                }
            }
        }
        let mut sum = DMatrix::from_element(n, n, c(0.0, 0.0));
        for (_, p) in &lifted {
            sum += p;
        }
        for (i, li) in state_basis.iter().enumerate() {
            for j in 0..n {
                let expected = if i != j {
                    c(0.0, 0.0)
                } else if li.is_vacuum() {
                    // Polarization bases leave vacuum unmeasured; click
                    // bases cover it through their complement outcome.
                    sum[(i, i)]
                } else {
                    c(1.0, 0.0)
                };
                if (sum[(i, j)] - expected).norm() > TOL {
                    return Err(CoreError::InvalidOperator(
                        "projectors do not sum to identity on the measured factor".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Post-measurement state, pure or mixed depending on the input kind.
#[derive(Debug, Clone)]
pub enum PostState {
    Pure(LabeledState),
    Mixed(DensityOp),
}

impl PostState {
    pub fn as_pure(&self) -> Option<&LabeledState> {
        match self {
            PostState::Pure(s) => Some(s),
            PostState::Mixed(_) => None,
        }
    }
}

/// Record of one sampled measurement.
#[derive(Debug, Clone)]
pub struct OutcomeRecord {
    pub basis_name: String,
    pub outcome: String,
    pub probability: f64,
    pub post_state: PostState,
    pub destructive: bool,
}

fn born_probabilities(
    state: &LabeledState,
    lifted: &[(String, DMatrix<C64>)],
) -> Result<Vec<f64>> {
    let probs: Vec<f64> = lifted
        .iter()
        .map(|(_, p)| (p * state.amps()).norm_squared())
        .collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > TOL {
        return Err(CoreError::InvalidOperator(format!(
            "basis does not resolve the state: outcome probabilities sum to {total}"
        )));
    }
    Ok(probs)
}

/// Samples one projective measurement with Born probabilities and
/// collapses onto the sampled branch.
pub fn measure_projective(
    state: &LabeledState,
    basis: &MeasurementBasis,
    rng: &mut impl Rng,
) -> Result<OutcomeRecord> {
    let state = &state.complete()?;
    let lifted = basis.lifted_projectors(state.basis())?;
    let probs = born_probabilities(state, &lifted)?;
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut pick = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            pick = i;
            break;
        }
    }
    // Rounding can land the sampler on a zero-probability tail outcome.
    while probs[pick] <= ZERO_NORM && pick > 0 {
        pick -= 1;
    }
    let (label, projector) = &lifted[pick];
    let projected = LabeledState::new(
        state
            .basis()
            .iter()
            .copied()
            .zip((projector * state.amps()).iter().copied())
            .collect(),
    )?;
    let (post, _) = projected.normalize()?;
    Ok(OutcomeRecord {
        basis_name: basis.name().into(),
        outcome: label.clone(),
        probability: probs[pick],
        post_state: PostState::Pure(post),
        destructive: false,
    })
}

/// Forces a named outcome; errors when its Born probability vanishes.
pub fn project_onto(
    state: &LabeledState,
    basis: &MeasurementBasis,
    outcome: &str,
) -> Result<(LabeledState, f64)> {
    let state = &state.complete()?;
    let lifted = basis.lifted_projectors(state.basis())?;
    let (_, projector) = lifted
        .iter()
        .find(|(l, _)| l == outcome)
        .ok_or_else(|| CoreError::SettingMismatch(format!("unknown outcome {outcome}")))?;
    let projected = LabeledState::new(
        state
            .basis()
            .iter()
            .copied()
            .zip((projector * state.amps()).iter().copied())
            .collect(),
    )?;
    let p = projected.norm().powi(2);
    if p <= ZERO_NORM {
        return Err(CoreError::ZeroProbabilityOutcome(format!(
            "{}:{outcome}",
            basis.name()
        )));
    }
    let (post, _) = projected.normalize()?;
    Ok((post, p))
}

/// Conditions on *not* finding the system in the projector's subspace:
/// returns the normalized `(I - P)` branch and its Born probability.
pub fn null_result_collapse(
    state: &LabeledState,
    basis: &MeasurementBasis,
    absent_outcome: &str,
) -> Result<(LabeledState, f64)> {
    let state = &state.complete()?;
    let lifted = basis.lifted_projectors(state.basis())?;
    let (_, projector) = lifted
        .iter()
        .find(|(l, _)| l == absent_outcome)
        .ok_or_else(|| {
            CoreError::SettingMismatch(format!("unknown outcome {absent_outcome}"))
        })?;
    let complement = DMatrix::identity(state.dim(), state.dim()) - projector;
    let branch = LabeledState::new(
        state
            .basis()
            .iter()
            .copied()
            .zip((complement * state.amps()).iter().copied())
            .collect(),
    )?;
    let p = branch.norm().powi(2);
    if p <= ZERO_NORM {
        return Err(CoreError::NullResultImpossible { norm: p.sqrt() });
    }
    let (post, _) = branch.normalize()?;
    Ok((post, p))
}

/// Destructive photon detection on one path. A click destroys the photon
/// (post state is the vacuum label on the extended basis); no click leaves
/// the null-result branch.
pub fn detect_path(
    state: &LabeledState,
    path: Path,
    rng: &mut impl Rng,
) -> Result<OutcomeRecord> {
    let basis = MeasurementBasis::path_click(path);
    let p_click = state.population(|l| {
        matches!(l, BasisLabel::Photon(p) if p.path == Some(path))
    });
    let u: f64 = rng.gen();
    if u < p_click {
        let mut extended: Vec<BasisLabel> = state.basis().to_vec();
        if extended.binary_search(&BasisLabel::Vacuum).is_err() {
            extended.push(BasisLabel::Vacuum);
            extended.sort();
        }
        Ok(OutcomeRecord {
            basis_name: basis.name().into(),
            outcome: "click".into(),
            probability: p_click,
            post_state: PostState::Pure(LabeledState::vacuum().embed(&extended)?),
            destructive: true,
        })
    } else {
        let (post, p_null) = null_result_collapse(state, &basis, "click")?;
        Ok(OutcomeRecord {
            basis_name: basis.name().into(),
            outcome: "none".into(),
            probability: p_null,
            post_state: PostState::Pure(post),
            destructive: true,
        })
    }
}

/// Measurement without result readout: `rho -> sum_i P_i rho P_i`.
/// Trace is preserved and coherences between outcome subspaces vanish.
pub fn nonselective_measure(rho: &DensityOp, basis: &MeasurementBasis) -> Result<DensityOp> {
    let rho = &rho.complete()?;
    let lifted = basis.lifted_projectors(rho.basis())?;
    let n = rho.dim();
    let mut acc = DMatrix::from_element(n, n, c(0.0, 0.0));
    for (_, p) in &lifted {
        acc += p * rho.matrix() * p;
    }
    DensityOp::new(rho.basis().to_vec(), acc)
}

/// Non-selective channel applied to a pure state.
pub fn nonselective_measure_state(
    state: &LabeledState,
    basis: &MeasurementBasis,
) -> Result<DensityOp> {
    nonselective_measure(&state.to_density(), basis)
}
