//! Steering assemblages, CHSH analysis, and classical baselines.
//!
//! Alice's factor is the polarization (plus OAM in the three-DoF variant),
//! Bob's factor is the path; a setting is one of Alice's measurement bases
//! and the assemblage collects Bob's subnormalized conditional states.
//!
//! The two-setting linear steering functional
//! `S2 = sum_x sum_a sign(a) tr(B_x sigma_{a|x})` with two mutually
//! unbiased Bob observables is bounded by `sqrt(2)` under any
//! local-hidden-state model; the bound follows from
//! `<sz>^2 + <sx>^2 <= 1` on a qubit and is re-derived numerically by
//! [`lhs_bound_numeric`]. The CHSH maximum uses the correlation-matrix
//! criterion `2 sqrt(u1 + u2)` over the two largest eigenvalues of `T^T T`.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{CoreError, Result};
use crate::measure::MeasurementBasis;
use crate::qstate::{DensityOp, LabeledState, Role, C64, PSD_TOL, TOL};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// One of Alice's measurement settings, e.g. "blue" = HV, "yellow" = DIAG.
#[derive(Debug, Clone)]
pub struct Setting {
    pub label: String,
    pub basis: MeasurementBasis,
}

impl Setting {
    pub fn new(label: &str, basis: MeasurementBasis) -> Self {
        Self { label: label.into(), basis }
    }

    /// The paper's signal pair: "blue" requests the H-V basis and
    /// "yellow" the diagonal basis.
    pub fn blue_yellow() -> Vec<Setting> {
        vec![
            Setting::new("blue", MeasurementBasis::hv()),
            Setting::new("yellow", MeasurementBasis::diag()),
        ]
    }
}

/// One subnormalized conditional state of Bob.
#[derive(Debug, Clone)]
pub struct AssemblageEntry {
    pub setting: String,
    pub outcome: String,
    /// Dichotomic sign of the outcome: +1 for the first outcome of the
    /// basis, -1 for the second.
    pub sign: f64,
    pub op: DensityOp,
}

/// Map (setting, outcome) -> subnormalized Bob state.
#[derive(Debug, Clone)]
pub struct Assemblage {
    entries: Vec<AssemblageEntry>,
    settings: Vec<String>,
}

impl Assemblage {
    pub fn from_entries(entries: Vec<AssemblageEntry>) -> Self {
        let mut settings: Vec<String> = Vec::new();
        for e in &entries {
            if !settings.contains(&e.setting) {
                settings.push(e.setting.clone());
            }
        }
        Self { entries, settings }
    }

    pub fn entries(&self) -> &[AssemblageEntry] {
        &self.entries
    }

    pub fn settings(&self) -> &[String] {
        &self.settings
    }

    pub fn get(&self, setting: &str, outcome: &str) -> Option<&DensityOp> {
        self.entries
            .iter()
            .find(|e| e.setting == setting && e.outcome == outcome)
            .map(|e| &e.op)
    }

    /// Bob's unconditioned state recovered from one setting's row.
    pub fn row_sum(&self, setting: &str) -> Result<DensityOp> {
        let mut acc: Option<DensityOp> = None;
        for e in self.entries.iter().filter(|e| e.setting == setting) {
            acc = Some(match acc {
                None => e.op.clone(),
                Some(prev) => prev.add(&e.op)?,
            });
        }
        acc.ok_or_else(|| CoreError::SettingMismatch(format!("unknown setting {setting}")))
    }

    /// Structural invariants: members PSD, each setting's row has unit
    /// trace, and the row sums agree across settings (no-signalling).
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            let min_eig = e.op.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
            if min_eig < PSD_TOL {
                return Err(CoreError::InvalidOperator(format!(
                    "assemblage member {}:{} has eigenvalue {min_eig:e}",
                    e.setting, e.outcome
                )));
            }
        }
        for setting in &self.settings {
            let tr = self.row_sum(setting)?.trace();
            if (tr - 1.0).abs() > TOL {
                return Err(CoreError::InvalidOperator(format!(
                    "setting {setting} row trace {tr} differs from 1"
                )));
            }
        }
        let (ok, deviation) = no_signalling_check(self);
        if !ok {
            return Err(CoreError::InvalidOperator(format!(
                "assemblage signals: row-sum deviation {deviation:e}"
            )));
        }
        Ok(())
    }
}

/// Builds the assemblage of a bipartite state under Alice's settings:
/// `sigma_{a|x} = Tr_A[(P_{a|x} x I) rho (P_{a|x} x I)]` with Bob = path.
pub fn assemblage(state: &DensityOp, settings: &[Setting]) -> Result<Assemblage> {
    {
        let mut labels: Vec<&str> = settings.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != settings.len() {
            return Err(CoreError::SettingMismatch(
                "setting labels must be distinct".into(),
            ));
        }
    }
    let mut entries = Vec::new();
    for setting in settings {
        let lifted = setting.basis.lifted_projectors(state.basis())?;
        for (idx, (outcome, projector)) in lifted.iter().enumerate() {
            let sandwiched = projector * state.matrix() * projector;
            let conditional = DensityOp::new(state.basis().to_vec(), sandwiched)?;
            let bob = conditional.partial_trace(&[Role::Path])?;
            entries.push(AssemblageEntry {
                setting: setting.label.clone(),
                outcome: outcome.clone(),
                sign: if idx == 0 { 1.0 } else { -1.0 },
                op: bob,
            });
        }
    }
    let asm = Assemblage::from_entries(entries);
    asm.validate()?;
    Ok(asm)
}

/// Assemblage of a pure state.
pub fn assemblage_of_state(state: &LabeledState, settings: &[Setting]) -> Result<Assemblage> {
    assemblage(&state.to_density(), settings)
}

const PAULI: [[[C64; 2]; 2]; 3] = [
    // sigma_x
    [[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]],
    // sigma_y
    [[C64::new(0.0, 0.0), C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), C64::new(0.0, 0.0)]],
    // sigma_z
    [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]],
];

fn bloch_matrix(n: Vector3<f64>) -> [[C64; 2]; 2] {
    let mut m = [[c(0.0, 0.0); 2]; 2];
    for (axis, weight) in [n.x, n.y, n.z].into_iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += PAULI[axis][i][j] * c(weight, 0.0);
            }
        }
    }
    m
}

fn kron2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(4, 4, c(0.0, 0.0));
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[i][j] * b[k][l];
                }
            }
        }
    }
    m
}

fn trace_product(rho: &DMatrix<C64>, m: &DMatrix<C64>) -> f64 {
    let val: C64 = (rho * m).diagonal().iter().sum();
    debug_assert!(val.im.abs() < 1e-9);
    val.re
}

/// Correlation matrix `T_ij = tr(rho sigma_i x sigma_j)` of a two-qubit
/// state, indexed by (x, y, z). The 4-dimensional basis is interpreted
/// factor-major, which the canonical label order already is.
pub fn correlation_matrix(rho: &DensityOp) -> Result<Matrix3<f64>> {
    if rho.dim() != 4 {
        return Err(CoreError::Dimension { expected: 4, got: rho.dim() });
    }
    let mut t = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            t[(i, j)] = trace_product(rho.matrix(), &kron2(&PAULI[i], &PAULI[j]));
        }
    }
    Ok(t)
}

/// Dichotomic observable pair for both parties, as Bloch vectors.
/// Each observable `n . sigma` with unit `n` squares to the identity.
#[derive(Debug, Clone)]
pub struct DichotomicObservablePair {
    pub alice: [Vector3<f64>; 2],
    pub bob: [Vector3<f64>; 2],
}

impl DichotomicObservablePair {
    /// CHSH value of these settings on a two-qubit state by direct
    /// expectation: `E(a1,b1) + E(a1,b2) + E(a2,b1) - E(a2,b2)`.
    pub fn evaluate(&self, rho: &DensityOp) -> Result<f64> {
        if rho.dim() != 4 {
            return Err(CoreError::Dimension { expected: 4, got: rho.dim() });
        }
        let e = |a: Vector3<f64>, b: Vector3<f64>| {
            trace_product(rho.matrix(), &kron2(&bloch_matrix(a), &bloch_matrix(b)))
        };
        Ok(e(self.alice[0], self.bob[0]) + e(self.alice[0], self.bob[1])
            + e(self.alice[1], self.bob[0])
            - e(self.alice[1], self.bob[1]))
    }

    /// Residue of `O^2 - I` over every observable in the pair.
    pub fn squares_to_identity_residue(&self) -> f64 {
        let mut worst = 0.0f64;
        for n in self.alice.iter().chain(self.bob.iter()) {
            let m = bloch_matrix(*n);
            let mut sq = [[c(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        sq[i][j] += m[i][k] * m[k][j];
                    }
                }
            }
            for (i, row) in sq.iter().enumerate() {
                for (j, entry) in row.iter().enumerate() {
                    let expected = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
                    worst = worst.max((entry - expected).norm());
                }
            }
        }
        worst
    }
}

/// Result of the CHSH maximization.
#[derive(Debug, Clone)]
pub struct ChshAnalysis {
    pub s_max: f64,
    pub settings: DichotomicObservablePair,
    /// True when the classical bound 2 is exceeded beyond tolerance.
    pub violation: bool,
}

/// Maximal CHSH value of a two-qubit state from the correlation-matrix
/// criterion, with settings that attain it.
pub fn chsh_max(rho: &DensityOp) -> Result<ChshAnalysis> {
    let t = correlation_matrix(rho)?;
    let m = t.transpose() * t;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let (u1, u2) = (
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
    );
    let s_max = 2.0 * (u1 + u2).sqrt();

    let c1: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let c2: Vector3<f64> = eig.eigenvectors.column(order[1]).into();
    let tc1 = t * c1;
    let tc2 = t * c2;
    let norm1 = tc1.norm();
    let norm2 = tc2.norm();
    let theta = norm2.atan2(norm1);
    let bob1_raw = theta.cos() * c1 + theta.sin() * c2;
    let bob1 = if bob1_raw.norm() > 1e-12 { bob1_raw.normalize() } else { c1 };
    let bob2_raw = theta.cos() * c1 - theta.sin() * c2;
    let bob2 = if bob2_raw.norm() > 1e-12 { bob2_raw.normalize() } else { c2 };
    let alice1 = if norm1 > 1e-12 { tc1 / norm1 } else { Vector3::new(0.0, 0.0, 1.0) };
    let alice2 = if norm2 > 1e-12 { tc2 / norm2 } else { Vector3::new(1.0, 0.0, 0.0) };
    Ok(ChshAnalysis {
        s_max,
        settings: DichotomicObservablePair { alice: [alice1, alice2], bob: [bob1, bob2] },
        violation: s_max > 2.0 + 1e-9,
    })
}

/// Exhaustive enumeration of the 16 deterministic local strategies.
#[derive(Debug, Clone)]
pub struct LhvEnumeration {
    /// CHSH value of every deterministic strategy (a1, a2, b1, b2).
    pub strategy_values: Vec<f64>,
    pub max_abs: f64,
}

/// Classical CHSH bound by brute force: every deterministic assignment of
/// +-1 outcomes yields |S| <= 2, and the bound is attained.
pub fn lhv_chsh_bound() -> LhvEnumeration {
    let mut values = Vec::with_capacity(16);
    let mut max_abs = 0.0f64;
    for bits in 0..16u8 {
        let sign = |bit: u8| if bits & (1 << bit) != 0 { 1.0 } else { -1.0 };
        let (a1, a2, b1, b2) = (sign(0), sign(1), sign(2), sign(3));
        let s: f64 = a1 * b1 + a1 * b2 + a2 * b1 - a2 * b2;
        max_abs = max_abs.max(s.abs());
        values.push(s);
    }
    LhvEnumeration { strategy_values: values, max_abs }
}

/// Outcome of the two-setting linear steering functional.
#[derive(Debug, Clone)]
pub struct SteeringValue {
    pub s2: f64,
    pub lhs_bound: f64,
    pub violation: bool,
}

/// Evaluates `S2 = sum_x sum_a sign(a) tr(B_x sigma_{a|x})` for two
/// settings and two dichotomic Bob observables (one per setting, in the
/// assemblage's setting order).
pub fn linear_steering_value(
    asm: &Assemblage,
    bob_obs: (&crate::qstate::Observable, &crate::qstate::Observable),
) -> Result<SteeringValue> {
    if asm.settings().len() != 2 {
        return Err(CoreError::SettingMismatch(format!(
            "linear steering functional needs exactly 2 settings, got {}",
            asm.settings().len()
        )));
    }
    let observables = [bob_obs.0, bob_obs.1];
    let mut s2 = 0.0;
    for (setting, obs) in asm.settings().iter().zip(observables) {
        for entry in asm.entries().iter().filter(|e| &e.setting == setting) {
            if entry.op.basis() != obs.basis() {
                return Err(CoreError::BasisMismatch(
                    "Bob observable basis differs from assemblage basis".into(),
                ));
            }
            s2 += entry.sign * trace_product(entry.op.matrix(), obs.matrix());
        }
    }
    let lhs_bound = SQRT_2;
    Ok(SteeringValue { s2, lhs_bound, violation: s2 > lhs_bound + 1e-9 })
}

/// Numerical re-derivation of the local-hidden-state bound: maximizes
/// `|<B1>| + |<B2>|` over single-qubit states for two mutually unbiased
/// dichotomic observables (sigma_z and sigma_x). Pure states suffice by
/// convexity; the maximum is sqrt(2).
pub fn lhs_bound_numeric(grid_points: usize) -> f64 {
    let mut best = 0.0f64;
    for k in 0..=grid_points {
        let theta = std::f64::consts::PI * k as f64 / grid_points as f64;
        // Bloch vector in the z-x plane: <sz> = cos, <sx> = sin.
        best = best.max(theta.cos().abs() + theta.sin().abs());
    }
    best
}

/// No-signalling check: row sums must agree across settings. Returns the
/// verdict and the worst entrywise deviation.
pub fn no_signalling_check(asm: &Assemblage) -> (bool, f64) {
    let rows: Vec<DensityOp> = asm
        .settings()
        .iter()
        .filter_map(|s| asm.row_sum(s).ok())
        .collect();
    let mut worst = 0.0f64;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            worst = worst.max(rows[i].max_abs_diff(&rows[j]));
        }
    }
    (worst < 1e-10, worst)
}

/// Grid-search oracle for the CHSH maximum: Bob's two Bloch vectors sweep
/// the x-z plane at `step_deg` resolution; Alice's optimal responses are
/// analytic (`a_i = T b_i / |T b_i|`), giving
/// `S = |T(b1+b2)| + |T(b1-b2)|` maximized over the grid.
pub fn chsh_grid_search(rho: &DensityOp, step_deg: f64) -> Result<f64> {
    let t = correlation_matrix(rho)?;
    let steps = (180.0 / step_deg).round() as usize;
    let mut best = 0.0f64;
    for i in 0..steps {
        let phi1 = std::f64::consts::PI * i as f64 / steps as f64;
        let b1 = Vector3::new(phi1.sin(), 0.0, phi1.cos());
        let tb1 = t * b1;
        for j in 0..steps {
            let phi2 = std::f64::consts::PI * j as f64 / steps as f64;
            let b2 = Vector3::new(phi2.sin(), 0.0, phi2.cos());
            let tb2 = t * b2;
            let s = (tb1 + tb2).norm() + (tb1 - tb2).norm();
            best = best.max(s);
        }
    }
    Ok(best)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::optics::build_fig2_state;
    use crate::qstate::{BasisLabel, Observable, Path, PhotonLabel, Pol};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path_basis() -> Vec<BasisLabel> {
        vec![
            BasisLabel::Photon(PhotonLabel::path(Path::A)),
            BasisLabel::Photon(PhotonLabel::path(Path::B)),
        ]
    }

    fn a_label() -> BasisLabel {
        BasisLabel::Photon(PhotonLabel::path(Path::A))
    }
    fn b_label() -> BasisLabel {
        BasisLabel::Photon(PhotonLabel::path(Path::B))
    }

    /// Projector-arithmetic oracle: conditional Bob matrices of the
    /// entangled state, computed from raw amplitudes with hand indexing.
    fn eq1_conditional_oracle(jones: [C64; 2]) -> [[C64; 2]; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // psi(path, pol): (A,H) = s, (B,V) = s.
        let psi = |path: usize, pol: usize| -> C64 {
            match (path, pol) {
                (0, 0) | (1, 1) => c(s, 0.0),
                _ => c(0.0, 0.0),
            }
        };
        // <alpha|psi>_path = sum_pol conj(jones[pol]) psi(path, pol)
        let amp = |path: usize| -> C64 {
            (0..2).map(|pol| jones[pol].conj() * psi(path, pol)).sum()
        };
        let mut m = [[c(0.0, 0.0); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = amp(i) * amp(j).conj();
            }
        }
        m
    }

    #[test]
    fn eq1_assemblage_matches_the_collapse_cases() {
        let asm = assemblage_of_state(&build_fig2_state(), &Setting::blue_yellow()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;

        let sigma_v = asm.get("blue", "V").unwrap();
        assert_relative_eq!(sigma_v.entry(&b_label(), &b_label()).re, 0.5, epsilon = TOL);
        assert_relative_eq!(sigma_v.entry(&a_label(), &a_label()).norm(), 0.0, epsilon = TOL);

        let sigma_h = asm.get("blue", "H").unwrap();
        assert_relative_eq!(sigma_h.entry(&a_label(), &a_label()).re, 0.5, epsilon = TOL);

        // Oracle comparison for every entry.
        let hv_h = eq1_conditional_oracle([c(1.0, 0.0), c(0.0, 0.0)]);
        let hv_v = eq1_conditional_oracle([c(0.0, 0.0), c(1.0, 0.0)]);
        let diag_p = eq1_conditional_oracle([c(s, 0.0), c(s, 0.0)]);
        let diag_m = eq1_conditional_oracle([c(-s, 0.0), c(s, 0.0)]);
        let labels = [a_label(), b_label()];
        for (name, outcome, oracle) in [
            ("blue", "H", hv_h),
            ("blue", "V", hv_v),
            ("yellow", "+", diag_p),
            ("yellow", "-", diag_m),
        ] {
            let sigma = asm.get(name, outcome).unwrap();
            for (i, li) in labels.iter().enumerate() {
                for (j, lj) in labels.iter().enumerate() {
                    assert!(
                        (sigma.entry(li, lj) - oracle[i][j]).norm() < TOL,
                        "{name}:{outcome} entry ({i},{j})"
                    );
                }
            }
        }

        // Diagonal-setting members are half-weighted pure path
        // superpositions (|a> +- |b>)/sqrt(2).
        let sigma_plus = asm.get("yellow", "+").unwrap();
        assert_relative_eq!(sigma_plus.entry(&a_label(), &b_label()).re, 0.25, epsilon = TOL);
        assert_relative_eq!(sigma_plus.trace(), 0.5, epsilon = TOL);
    }

    #[test]
    fn product_state_assemblage_is_unsteerable_by_construction() {
        // (|a>+|b>)/sqrt2 tensor |+>pol: Alice's outcome cannot steer.
        let state = LabeledState::new(vec![
            (BasisLabel::photon(Path::A, Pol::H), c(0.5, 0.0)),
            (BasisLabel::photon(Path::A, Pol::V), c(0.5, 0.0)),
            (BasisLabel::photon(Path::B, Pol::H), c(0.5, 0.0)),
            (BasisLabel::photon(Path::B, Pol::V), c(0.5, 0.0)),
        ])
        .unwrap();
        let asm = assemblage_of_state(&state, &Setting::blue_yellow()).unwrap();
        // Every member is proportional to the same Bob state.
        let reference = asm.row_sum("blue").unwrap();
        for entry in asm.entries() {
            if entry.op.trace() > TOL {
                let scaled = entry.op.scale(1.0 / entry.op.trace());
                assert!(scaled.max_abs_diff(&reference) < TOL);
            }
        }
    }

    #[test]
    fn row_sums_are_the_maximally_mixed_path_state() {
        // Partial-trace oracle: rho_B = diag(1/2, 1/2) for both settings.
        let state = build_fig2_state();
        let rho_b = state.to_density().partial_trace(&[Role::Path]).unwrap();
        let asm = assemblage_of_state(&state, &Setting::blue_yellow()).unwrap();
        for setting in ["blue", "yellow"] {
            let row = asm.row_sum(setting).unwrap();
            assert!(row.max_abs_diff(&rho_b) < TOL);
            assert_relative_eq!(row.entry(&a_label(), &a_label()).re, 0.5, epsilon = TOL);
        }
    }

    #[test]
    fn chsh_max_on_the_entangled_state_reaches_tsirelson() {
        let rho = build_fig2_state().to_density();
        let analysis = chsh_max(&rho).unwrap();
        assert_relative_eq!(analysis.s_max, 2.0 * SQRT_2, epsilon = 1e-9);
        assert!(analysis.violation);
        assert!(analysis.settings.squares_to_identity_residue() < TOL);
        // The returned settings attain the criterion value.
        let direct = analysis.settings.evaluate(&rho).unwrap();
        assert_relative_eq!(direct, analysis.s_max, epsilon = 1e-6);
    }

    #[test]
    fn chsh_grid_oracle_agrees_with_the_criterion() {
        let rho = build_fig2_state().to_density();
        let grid = chsh_grid_search(&rho, 2.0).unwrap();
        let analysis = chsh_max(&rho).unwrap();
        assert!((grid - analysis.s_max).abs() < 1e-2);
    }

    #[test]
    fn chsh_max_on_a_product_state_is_two() {
        let state = LabeledState::new(vec![
            (BasisLabel::photon(Path::A, Pol::H), c(1.0, 0.0)),
            (BasisLabel::photon(Path::A, Pol::V), c(0.0, 0.0)),
            (BasisLabel::photon(Path::B, Pol::H), c(0.0, 0.0)),
            (BasisLabel::photon(Path::B, Pol::V), c(0.0, 0.0)),
        ])
        .unwrap();
        let analysis = chsh_max(&state.to_density()).unwrap();
        assert_relative_eq!(analysis.s_max, 2.0, epsilon = 1e-9);
        assert!(!analysis.violation);
        let direct = analysis.settings.evaluate(&state.to_density()).unwrap();
        assert_relative_eq!(direct, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn chsh_max_on_maximally_mixed_reports_no_violation() {
        let basis = build_fig2_state().basis().to_vec();
        let m = DMatrix::from_diagonal_element(4, 4, c(0.25, 0.0));
        let rho = DensityOp::new(basis, m).unwrap();
        let analysis = chsh_max(&rho).unwrap();
        assert_relative_eq!(analysis.s_max, 0.0, epsilon = 1e-12);
        assert!(!analysis.violation);
        assert_relative_eq!(
            analysis.settings.evaluate(&rho).unwrap(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn lhv_enumeration_is_its_own_oracle() {
        let enumeration = lhv_chsh_bound();
        assert_eq!(enumeration.strategy_values.len(), 16);
        assert_eq!(enumeration.max_abs, 2.0);
        for s in &enumeration.strategy_values {
            assert!(s.abs() <= 2.0);
            assert!((s.abs() - 2.0).abs() < TOL, "deterministic CHSH is +-2");
        }
    }

    #[test]
    fn strategy_mixtures_respect_convexity() {
        let enumeration = lhv_chsh_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut weights = [0.0f64; 16];
            let mut total = 0.0;
            for w in weights.iter_mut() {
                *w = rng.gen::<f64>();
                total += *w;
            }
            let mixed: f64 = weights
                .iter()
                .zip(&enumeration.strategy_values)
                .map(|(w, s)| w / total * s)
                .sum();
            assert!(mixed.abs() <= 2.0 + TOL);
        }
    }

    #[test]
    fn linear_steering_value_of_the_entangled_state_is_two() {
        let asm = assemblage_of_state(&build_fig2_state(), &Setting::blue_yellow()).unwrap();
        let z = Observable::path_sigma_z();
        let x = Observable::path_sigma_x();
        let value = linear_steering_value(&asm, (&z, &x)).unwrap();
        assert_relative_eq!(value.s2, 2.0, epsilon = 1e-9);
        assert_relative_eq!(value.lhs_bound, SQRT_2, epsilon = TOL);
        assert!(value.violation);
    }

    #[test]
    fn lhs_bound_rederived_numerically() {
        assert!((lhs_bound_numeric(200_000) - SQRT_2).abs() < 1e-9);
    }

    /// Assemblage of a local-hidden-state adversary: a fixed ensemble with
    /// deterministic responses.
    fn lhs_assemblage(
        members: &[(f64, [usize; 2], [[C64; 2]; 2])],
        outcome_names: [[&str; 2]; 2],
    ) -> Assemblage {
        let settings = ["blue", "yellow"];
        let mut entries = Vec::new();
        for (x, setting) in settings.iter().enumerate() {
            for (a, outcome) in outcome_names[x].iter().enumerate() {
                let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
                for (w, responses, rho) in members {
                    if responses[x] == a {
                        for (i, row) in rho.iter().enumerate() {
                            for (j, entry) in row.iter().enumerate() {
                                m[(i, j)] += c(*w, 0.0) * entry;
                            }
                        }
                    }
                }
                entries.push(AssemblageEntry {
                    setting: setting.to_string(),
                    outcome: outcome.to_string(),
                    sign: if a == 0 { 1.0 } else { -1.0 },
                    op: DensityOp::new(path_basis(), m).unwrap(),
                });
            }
        }
        Assemblage::from_entries(entries)
    }

    fn bloch_members(
        rng: &mut ChaCha8Rng,
        count: usize,
        greedy: bool,
    ) -> Vec<(f64, [usize; 2], [[C64; 2]; 2])> {
        let mut members = Vec::new();
        let mut weights: Vec<f64> = (0..count).map(|_| rng.gen::<f64>() + 0.01).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        for w in weights {
            let theta = rng.gen::<f64>() * std::f64::consts::PI;
            let r = rng.gen::<f64>();
            let (z, x) = (r * theta.cos(), r * theta.sin());
            let rho = [
                [c((1.0 + z) / 2.0, 0.0), c(x / 2.0, 0.0)],
                [c(x / 2.0, 0.0), c((1.0 - z) / 2.0, 0.0)],
            ];
            // Greedy responses answer +1 whenever the requested
            // observable's expectation is positive on rho.
            let responses = if greedy {
                [usize::from(z < 0.0), usize::from(x < 0.0)]
            } else {
                [rng.gen_range(0..2), rng.gen_range(0..2)]
            };
            members.push((w, responses, rho));
        }
        members
    }

    #[test]
    fn lhs_assemblages_respect_the_bound() {
        let z = Observable::path_sigma_z();
        let x = Observable::path_sigma_x();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..40 {
            let members = bloch_members(&mut rng, 1 + case % 4, case % 2 == 0);
            let asm = lhs_assemblage(&members, [["H", "V"], ["+", "-"]]);
            asm.validate().unwrap();
            let value = linear_steering_value(&asm, (&z, &x)).unwrap();
            assert!(
                value.s2 <= SQRT_2 + 1e-9,
                "LHS strategy exceeded the bound: {}",
                value.s2
            );
        }
    }

    #[test]
    fn optimal_lhs_adversary_attains_the_bound() {
        // Four pure states along (+-1/sqrt2, 0, +-1/sqrt2) with greedy
        // responses reach sqrt(2) exactly.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut members = Vec::new();
        for (sz, sx) in [(s, s), (s, -s), (-s, s), (-s, -s)] {
            let rho = [
                [c((1.0 + sz) / 2.0, 0.0), c(sx / 2.0, 0.0)],
                [c(sx / 2.0, 0.0), c((1.0 - sz) / 2.0, 0.0)],
            ];
            let responses = [usize::from(sz < 0.0), usize::from(sx < 0.0)];
            members.push((0.25, responses, rho));
        }
        let asm = lhs_assemblage(&members, [["H", "V"], ["+", "-"]]);
        let value = linear_steering_value(
            &asm,
            (&Observable::path_sigma_z(), &Observable::path_sigma_x()),
        )
        .unwrap();
        assert_relative_eq!(value.s2, SQRT_2, epsilon = 1e-12);
        assert!(!value.violation);
    }

    #[test]
    fn product_state_passes_the_steering_bound() {
        let state = LabeledState::new(vec![
            (BasisLabel::photon(Path::A, Pol::H), c(0.5, 0.0)),
            (BasisLabel::photon(Path::A, Pol::V), c(0.5, 0.0)),
            (BasisLabel::photon(Path::B, Pol::H), c(0.5, 0.0)),
            (BasisLabel::photon(Path::B, Pol::V), c(0.5, 0.0)),
        ])
        .unwrap();
        let asm = assemblage_of_state(&state, &Setting::blue_yellow()).unwrap();
        let value = linear_steering_value(
            &asm,
            (&Observable::path_sigma_z(), &Observable::path_sigma_x()),
        )
        .unwrap();
        assert!(value.s2 <= SQRT_2 + 1e-9);
    }

    #[test]
    fn no_signalling_holds_for_the_entangled_state() {
        let asm = assemblage_of_state(&build_fig2_state(), &Setting::blue_yellow()).unwrap();
        let (ok, deviation) = no_signalling_check(&asm);
        assert!(ok);
        assert!(deviation < 1e-12);
    }

    #[test]
    fn hand_built_signalling_assemblage_is_detected() {
        let pure_a = {
            let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
            m[(0, 0)] = c(1.0, 0.0);
            DensityOp::new(path_basis(), m).unwrap()
        };
        let pure_b = {
            let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
            m[(1, 1)] = c(1.0, 0.0);
            DensityOp::new(path_basis(), m).unwrap()
        };
        let entries = vec![
            AssemblageEntry {
                setting: "blue".into(),
                outcome: "H".into(),
                sign: 1.0,
                op: pure_a.scale(0.5),
            },
            AssemblageEntry {
                setting: "blue".into(),
                outcome: "V".into(),
                sign: -1.0,
                op: pure_a.scale(0.5),
            },
            AssemblageEntry {
                setting: "yellow".into(),
                outcome: "+".into(),
                sign: 1.0,
                op: pure_b.scale(0.5),
            },
            AssemblageEntry {
                setting: "yellow".into(),
                outcome: "-".into(),
                sign: -1.0,
                op: pure_b.scale(0.5),
            },
        ];
        let asm = Assemblage::from_entries(entries);
        let (ok, deviation) = no_signalling_check(&asm);
        assert!(!ok);
        assert!(deviation > 0.9);
        assert!(asm.validate().is_err());
    }

    #[test]
    fn single_setting_assemblage_is_vacuously_no_signalling() {
        let settings = vec![Setting::new("blue", MeasurementBasis::hv())];
        let asm = assemblage_of_state(&build_fig2_state(), &settings).unwrap();
        let (ok, deviation) = no_signalling_check(&asm);
        assert!(ok);
        assert_eq!(deviation, 0.0);
    }

    pub(crate) fn random_two_qubit_density(rng: &mut ChaCha8Rng) -> DensityOp {
        let basis = build_fig2_state().basis().to_vec();
        // Mixture of up to three Haar-ish pure states.
        let n_parts = rng.gen_range(1..=3);
        let mut weights: Vec<f64> = (0..n_parts).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let mut m = DMatrix::from_element(4, 4, c(0.0, 0.0));
        for w in weights {
            let mut amps = [c(0.0, 0.0); 4];
            let mut norm = 0.0;
            for a in amps.iter_mut() {
                // Box-Muller pair for complex-normal amplitudes.
                let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-12), rng.gen());
                let r = (-2.0 * u1.ln()).sqrt();
                *a = c(
                    r * (2.0 * std::f64::consts::PI * u2).cos(),
                    r * (2.0 * std::f64::consts::PI * u2).sin(),
                );
                norm += a.norm_sqr();
            }
            let norm = norm.sqrt();
            for i in 0..4 {
                for j in 0..4 {
                    m[(i, j)] += c(w, 0.0) * (amps[i] / norm) * (amps[j] / norm).conj();
                }
            }
        }
        DensityOp::new(basis, m).unwrap()
    }

    #[test]
    fn tsirelson_ceiling_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let rho = random_two_qubit_density(&mut rng);
            let analysis = chsh_max(&rho).unwrap();
            assert!(analysis.s_max <= 2.0 * SQRT_2 + 1e-9);
            let direct = analysis.settings.evaluate(&rho).unwrap();
            assert_relative_eq!(direct, analysis.s_max, epsilon = 1e-6);
        }
    }

    #[test]
    fn chsh_max_invariant_under_local_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rho = build_fig2_state().to_density();
        for _ in 0..20 {
            // Random local rotations exp(-i psi n.sigma / 2) on each factor.
            let local = |rng: &mut ChaCha8Rng| -> [[C64; 2]; 2] {
                let theta = rng.gen::<f64>() * std::f64::consts::PI;
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                let psi = rng.gen::<f64>() * std::f64::consts::TAU;
                let n = Vector3::new(
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                );
                let half = psi / 2.0;
                let sigma = bloch_matrix(n);
                let mut u = [[c(0.0, 0.0); 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let eye = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
                        u[i][j] = eye * c(half.cos(), 0.0) - sigma[i][j] * c(0.0, half.sin());
                    }
                }
                u
            };
            let u = kron2(&local(&mut rng), &local(&mut rng));
            let rotated = &u * rho.matrix() * u.adjoint();
            let rotated = DensityOp::new(rho.basis().to_vec(), rotated).unwrap();
            let a = chsh_max(&rho).unwrap().s_max;
            let b = chsh_max(&rotated).unwrap().s_max;
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn alice_basis_choice_changes_bobs_conditional_states() {
        // The steering phenomenon: conditional states differ across
        // settings (fidelity 1/2) while rho_B is unchanged.
        let asm = assemblage_of_state(&build_fig2_state(), &Setting::blue_yellow()).unwrap();
        let sigma_v = asm.get("blue", "V").unwrap();
        let sigma_plus = asm.get("yellow", "+").unwrap();
        let f = crate::qstate::fidelity(
            &sigma_v.scale(1.0 / sigma_v.trace()),
            &sigma_plus.scale(1.0 / sigma_plus.trace()),
        )
        .unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn steering_hierarchy_spot_check() {
        // Violating states have setting-dependent conditional states;
        // product states pass both classical bounds.
        let asm = assemblage_of_state(&build_fig2_state(), &Setting::blue_yellow()).unwrap();
        let v = asm.get("blue", "V").unwrap();
        let plus = asm.get("yellow", "+").unwrap();
        let overlap = crate::qstate::fidelity(
            &v.scale(1.0 / v.trace()),
            &plus.scale(1.0 / plus.trace()),
        )
        .unwrap();
        assert!(overlap < 1.0 - 1e-6, "conditionals must differ across settings");

        let product = LabeledState::new(vec![
            (BasisLabel::photon(Path::A, Pol::H), c(0.5, 0.0)),
            (BasisLabel::photon(Path::A, Pol::V), c(0.5, 0.0)),
            (BasisLabel::photon(Path::B, Pol::H), c(0.5, 0.0)),
            (BasisLabel::photon(Path::B, Pol::V), c(0.5, 0.0)),
        ])
        .unwrap();
        let chsh = chsh_max(&product.to_density()).unwrap();
        assert!(!chsh.violation);
        let asm_p = assemblage_of_state(&product, &Setting::blue_yellow()).unwrap();
        let value = linear_steering_value(
            &asm_p,
            (&Observable::path_sigma_z(), &Observable::path_sigma_x()),
        )
        .unwrap();
        assert!(!value.violation);
    }
}
