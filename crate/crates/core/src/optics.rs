//! Optical elements and the paper's preparation chains.
//!
//! Conventions, fixed once and used everywhere:
//!
//! * 50:50 beam splitter: transmission phase 1, reflection phase `i`
//!   (symmetric convention). Reflection phases in the preparation chain are
//!   absorbed into the state definition, so the entangled output carries
//!   real amplitudes.
//! * Polarizing beam splitter: transmits `H` on its input path, reflects
//!   `V` onto the other path, no extra phase.
//! * Half-wave plate at angle theta: Jones matrix
//!   `[[cos 2t, sin 2t], [sin 2t, -cos 2t]]`, so `theta = 22.5 deg` rotates
//!   `|H>` to 45 deg and `theta = 0` fixes `|H>` (with `|V> -> -|V>`).
//! * Circular basis: `|L> = (|H> - i|V>)/sqrt(2)`, `|R> = (|H> + i|V>)/sqrt(2)`.
//!   The q-plate maps `|L> -> |L>|-2>` and `|R> -> |R>|+2>`; only its action
//!   on the heralded input is specified physically, this is its isometric
//!   extension. Together these reproduce the signed three-DoF expansion.
//! * Mirror: phase `i` on the reflected path.
//!
//! Lossy devices (polarizer, absorber) are two-outcome Kraus channels whose
//! absorbed branch lands on the explicit vacuum label.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::qstate::{
    BasisLabel, DensityOp, LabeledState, Oam, Path, PhotonLabel, Pol, Role, RoleSet, C64,
    ZERO_NORM,
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn other(path: Path) -> Path {
    match path {
        Path::A => Path::B,
        Path::B => Path::A,
    }
}

/// (cos, sin) of an angle given in degrees, exact at multiples of 45 so
/// that interferometric cancellations hold bit-for-bit.
fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let reduced = deg.rem_euclid(360.0);
    match reduced {
        x if x == 0.0 => (1.0, 0.0),
        x if x == 45.0 => (s, s),
        x if x == 90.0 => (0.0, 1.0),
        x if x == 135.0 => (-s, s),
        x if x == 180.0 => (-1.0, 0.0),
        x if x == 225.0 => (-s, -s),
        x if x == 270.0 => (0.0, -1.0),
        x if x == 315.0 => (s, -s),
        x => (x.to_radians().cos(), x.to_radians().sin()),
    }
}

/// `exp(i phi)`, exact at multiples of pi/2 constructed from the standard
/// constants.
fn phase_factor(phi: f64) -> C64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    if phi == 0.0 {
        c(1.0, 0.0)
    } else if phi == FRAC_PI_2 {
        c(0.0, 1.0)
    } else if phi == -FRAC_PI_2 {
        c(0.0, -1.0)
    } else if phi == PI || phi == -PI {
        c(-1.0, 0.0)
    } else {
        c(phi.cos(), phi.sin())
    }
}

/// Jones vectors of the fixed circular-polarization convention, as
/// `(|L>, |R>)` components in the `(H, V)` basis.
pub fn circular_jones() -> ([C64; 2], [C64; 2]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ([c(s, 0.0), c(0.0, -s)], [c(s, 0.0), c(0.0, s)])
}

/// A single optical element with its placement.
#[derive(Debug, Clone, PartialEq)]
pub enum OpticalElement {
    /// Symmetric 50:50 beam splitter coupling the two paths.
    Bs50,
    /// Polarizing beam splitter: `H` transmitted, `V` reflected.
    Pbs,
    /// Half-wave plate at `theta_deg` in one beam.
    Hwp { theta_deg: f64, path: Path },
    /// Linear polarizer with pass axis at `alpha_deg` from `H`, in one beam.
    Polarizer { alpha_deg: f64, path: Path },
    /// Spin-to-orbital converter in one beam; enables the OAM register.
    QPlate { path: Path },
    /// Fully absorbing object in one beam.
    Absorber { path: Path },
    /// Phase `exp(i phi)` on one beam.
    PhaseShift { path: Path, phi: f64 },
    /// Mirror folding one beam (phase `i`).
    Mirror { path: Path },
}

impl OpticalElement {
    /// Whether the element is a norm-preserving map (as opposed to a
    /// two-outcome Kraus channel).
    pub fn is_unitary(&self) -> bool {
        !matches!(
            self,
            OpticalElement::Polarizer { .. } | OpticalElement::Absorber { .. }
        )
    }
}

/// One outcome branch of a lossy element applied to a pure state.
#[derive(Debug, Clone)]
pub struct Branch {
    pub tag: String,
    pub state: LabeledState,
    pub probability: f64,
}

/// Result of applying one element to a pure state.
#[derive(Debug, Clone)]
pub enum ElementOutput {
    Pure(LabeledState),
    Branches(Vec<Branch>),
}

fn photon_roles(basis: &[BasisLabel]) -> Option<RoleSet> {
    basis.iter().find_map(|l| l.as_photon().map(|p| p.role_set()))
}

/// Closure of a basis under an element: every label the element's image can
/// reach, in canonical order, always including the originals.
fn closure_basis(element: &OpticalElement, basis: &[BasisLabel]) -> Result<Vec<BasisLabel>> {
    let mut out: Vec<BasisLabel> = basis.to_vec();
    let push = |l: BasisLabel, out: &mut Vec<BasisLabel>| {
        if !out.contains(&l) {
            out.push(l);
        }
    };
    for label in basis {
        let p = match label {
            BasisLabel::Photon(p) => *p,
            BasisLabel::Vacuum => continue,
            BasisLabel::SpinMode { .. } => {
                return Err(CoreError::Role(
                    "optical elements act on photon labels".into(),
                ))
            }
        };
        match element {
            OpticalElement::Bs50 => {
                let path = p.path.ok_or_else(|| {
                    CoreError::Role("beam splitter requires a path register".into())
                })?;
                push(
                    BasisLabel::Photon(PhotonLabel { path: Some(other(path)), ..p }),
                    &mut out,
                );
            }
            OpticalElement::Pbs => {
                let path = p.path.ok_or_else(|| {
                    CoreError::Role("polarizing beam splitter requires a path register".into())
                })?;
                let pol = p.pol.ok_or_else(|| {
                    CoreError::Role(
                        "polarizing beam splitter requires a polarization register".into(),
                    )
                })?;
                if pol == Pol::V {
                    push(
                        BasisLabel::Photon(PhotonLabel { path: Some(other(path)), ..p }),
                        &mut out,
                    );
                }
            }
            OpticalElement::Hwp { path, .. } => {
                if p.pol.is_none() {
                    return Err(CoreError::Role(
                        "half-wave plate requires a polarization register".into(),
                    ));
                }
                if p.path == Some(*path) || p.path.is_none() {
                    for pol in [Pol::H, Pol::V] {
                        push(
                            BasisLabel::Photon(PhotonLabel { pol: Some(pol), ..p }),
                            &mut out,
                        );
                    }
                }
            }
            OpticalElement::Polarizer { path, .. } => {
                if p.pol.is_none() {
                    return Err(CoreError::Role(
                        "polarizer requires a polarization register".into(),
                    ));
                }
                if p.path == Some(*path) || p.path.is_none() {
                    for pol in [Pol::H, Pol::V] {
                        push(
                            BasisLabel::Photon(PhotonLabel { pol: Some(pol), ..p }),
                            &mut out,
                        );
                    }
                    push(BasisLabel::Vacuum, &mut out);
                }
            }
            OpticalElement::Absorber { path } => {
                if p.path == Some(*path) {
                    push(BasisLabel::Vacuum, &mut out);
                }
            }
            OpticalElement::PhaseShift { .. } | OpticalElement::Mirror { .. } => {}
            OpticalElement::QPlate { .. } => {
                return Err(CoreError::Role(
                    "q-plate extends the register set; handled separately".into(),
                ))
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Unitary matrix of a norm-preserving element over a closed basis.
/// The vacuum label is fixed.
fn unitary_matrix(element: &OpticalElement, basis: &[BasisLabel]) -> Result<DMatrix<C64>> {
    let n = basis.len();
    let mut m = DMatrix::from_element(n, n, c(0.0, 0.0));
    let index = |l: &BasisLabel| basis.binary_search(l).expect("closed basis");
    for (j, label) in basis.iter().enumerate() {
        let p = match label {
            BasisLabel::Vacuum => {
                m[(j, j)] = c(1.0, 0.0);
                continue;
            }
            BasisLabel::Photon(p) => *p,
            BasisLabel::SpinMode { .. } => unreachable!("rejected by closure_basis"),
        };
        match element {
            OpticalElement::Bs50 => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let path = p.path.unwrap();
                let stay = BasisLabel::Photon(p);
                let cross = BasisLabel::Photon(PhotonLabel { path: Some(other(path)), ..p });
                m[(index(&stay), j)] = c(s, 0.0);
                m[(index(&cross), j)] = c(0.0, s);
            }
            OpticalElement::Pbs => {
                let path = p.path.unwrap();
                let target = match p.pol.unwrap() {
                    Pol::H => BasisLabel::Photon(p),
                    Pol::V => BasisLabel::Photon(PhotonLabel { path: Some(other(path)), ..p }),
                };
                m[(index(&target), j)] = c(1.0, 0.0);
            }
            OpticalElement::Hwp { theta_deg, path } => {
                if p.path == Some(*path) || p.path.is_none() {
                    let (cos2, sin2) = cos_sin_deg(2.0 * theta_deg);
                    let h = BasisLabel::Photon(PhotonLabel { pol: Some(Pol::H), ..p });
                    let v = BasisLabel::Photon(PhotonLabel { pol: Some(Pol::V), ..p });
                    match p.pol.unwrap() {
                        Pol::H => {
                            m[(index(&h), j)] = c(cos2, 0.0);
                            m[(index(&v), j)] = c(sin2, 0.0);
                        }
                        Pol::V => {
                            m[(index(&h), j)] = c(sin2, 0.0);
                            m[(index(&v), j)] = c(-cos2, 0.0);
                        }
                    }
                } else {
                    m[(j, j)] = c(1.0, 0.0);
                }
            }
            OpticalElement::PhaseShift { path, phi } => {
                m[(j, j)] = if p.path == Some(*path) {
                    phase_factor(*phi)
                } else {
                    c(1.0, 0.0)
                };
            }
            OpticalElement::Mirror { path } => {
                m[(j, j)] = if p.path == Some(*path) {
                    c(0.0, 1.0)
                } else {
                    c(1.0, 0.0)
                };
            }
            OpticalElement::Polarizer { .. }
            | OpticalElement::Absorber { .. }
            | OpticalElement::QPlate { .. } => unreachable!("not a closed-basis unitary"),
        }
    }
    Ok(m)
}

/// Blocked directions of a lossy element: orthonormal vectors over the
/// closed basis whose amplitude is absorbed into vacuum.
fn blocked_vectors(element: &OpticalElement, basis: &[BasisLabel]) -> Vec<DVector<C64>> {
    let n = basis.len();
    let mut vectors = Vec::new();
    match element {
        OpticalElement::Absorber { path } => {
            for (i, label) in basis.iter().enumerate() {
                if let BasisLabel::Photon(p) = label {
                    if p.path == Some(*path) {
                        let mut v = DVector::from_element(n, c(0.0, 0.0));
                        v[i] = c(1.0, 0.0);
                        vectors.push(v);
                    }
                }
            }
        }
        OpticalElement::Polarizer { alpha_deg, path } => {
            // Blocked polarization is orthogonal to the pass axis.
            let (cos_a, sin_a) = cos_sin_deg(*alpha_deg);
            let (block_h, block_v) = (-sin_a, cos_a);
            // One blocked vector per (path-match, oam) combination present.
            let mut seen: Vec<PhotonLabel> = Vec::new();
            for label in basis {
                if let BasisLabel::Photon(p) = label {
                    let on_path = p.path == Some(*path) || p.path.is_none();
                    if on_path {
                        let key = PhotonLabel { pol: None, ..*p };
                        if !seen.contains(&key) {
                            seen.push(key);
                        }
                    }
                }
            }
            for key in seen {
                let mut v = DVector::from_element(n, c(0.0, 0.0));
                let h = BasisLabel::Photon(PhotonLabel { pol: Some(Pol::H), ..key });
                let vv = BasisLabel::Photon(PhotonLabel { pol: Some(Pol::V), ..key });
                if let Ok(i) = basis.binary_search(&h) {
                    v[i] = c(block_h, 0.0);
                }
                if let Ok(i) = basis.binary_search(&vv) {
                    v[i] = c(block_v, 0.0);
                }
                vectors.push(v);
            }
        }
        _ => {}
    }
    vectors
}

/// Kraus set of a lossy element over a closed basis: the keep operator
/// `K0 = I - sum |v><v|` plus one `|vac><v|` per blocked direction.
fn kraus_set(element: &OpticalElement, basis: &[BasisLabel]) -> Result<Vec<DMatrix<C64>>> {
    let n = basis.len();
    let vac = basis
        .binary_search(&BasisLabel::Vacuum)
        .map_err(|_| CoreError::Role("lossy element needs the vacuum label".into()))?;
    let blocked = blocked_vectors(element, basis);
    let mut keep = DMatrix::identity(n, n);
    for v in &blocked {
        for i in 0..n {
            for j in 0..n {
                keep[(i, j)] -= v[i] * v[j].conj();
            }
        }
    }
    let mut set = vec![keep];
    for v in &blocked {
        let mut k = DMatrix::from_element(n, n, c(0.0, 0.0));
        for j in 0..n {
            k[(vac, j)] = v[j].conj();
        }
        set.push(k);
    }
    Ok(set)
}

fn apply_qplate_state(state: &LabeledState, path: Path) -> Result<LabeledState> {
    let roles = photon_roles(state.basis()).unwrap_or_default();
    if roles.contains(Role::Oam) {
        return Err(CoreError::Role(
            "q-plate applied but the OAM register is already enabled".into(),
        ));
    }
    if !roles.contains(Role::Pol) {
        return Err(CoreError::Role(
            "q-plate requires a polarization register".into(),
        ));
    }
    let off_path = state.population(|l| match l {
        BasisLabel::Photon(p) => p.path.is_some() && p.path != Some(path),
        _ => false,
    });
    if off_path > ZERO_NORM {
        return Err(CoreError::Role(
            "q-plate requires the photon confined to its placement path".into(),
        ));
    }
    // Isometry on the polarization factor:
    //   |H> -> ( |H,-2> - i|V,-2> + |H,+2> + i|V,+2> ) / 2
    //   |V> -> ( i|H,-2> + |V,-2> - i|H,+2> + |V,+2> ) / 2
    let mut pairs: Vec<(BasisLabel, C64)> = Vec::new();
    let add = |label: BasisLabel, amp: C64, pairs: &mut Vec<(BasisLabel, C64)>| {
        if let Some(slot) = pairs.iter_mut().find(|(l, _)| *l == label) {
            slot.1 += amp;
        } else {
            pairs.push((label, amp));
        }
    };
    for (label, amp) in state.basis().iter().zip(state.amps().iter()) {
        match label {
            BasisLabel::Vacuum => add(BasisLabel::Vacuum, *amp, &mut pairs),
            BasisLabel::Photon(p) => {
                let images: [(Pol, Oam, C64); 4] = match p.pol.unwrap() {
                    Pol::H => [
                        (Pol::H, Oam::Minus2, c(0.5, 0.0)),
                        (Pol::V, Oam::Minus2, c(0.0, -0.5)),
                        (Pol::H, Oam::Plus2, c(0.5, 0.0)),
                        (Pol::V, Oam::Plus2, c(0.0, 0.5)),
                    ],
                    Pol::V => [
                        (Pol::H, Oam::Minus2, c(0.0, 0.5)),
                        (Pol::V, Oam::Minus2, c(0.5, 0.0)),
                        (Pol::H, Oam::Plus2, c(0.0, -0.5)),
                        (Pol::V, Oam::Plus2, c(0.5, 0.0)),
                    ],
                };
                for (pol, oam, coeff) in images {
                    add(
                        BasisLabel::Photon(PhotonLabel {
                            pol: Some(pol),
                            oam: Some(oam),
                            ..*p
                        }),
                        *amp * coeff,
                        &mut pairs,
                    );
                }
            }
            BasisLabel::SpinMode { .. } => {
                return Err(CoreError::Role(
                    "optical elements act on photon labels".into(),
                ))
            }
        }
    }
    LabeledState::new(pairs)
}

/// Applies one element to a pure state. Norm-preserving elements return a
/// single state of equal norm; lossy elements return labeled branches with
/// normalized states whose probabilities sum to the input norm squared.
pub fn apply_element(state: &LabeledState, element: &OpticalElement) -> Result<ElementOutput> {
    if let OpticalElement::QPlate { path } = element {
        return Ok(ElementOutput::Pure(apply_qplate_state(state, *path)?));
    }
    let closed = closure_basis(element, state.basis())?;
    let state = state.embed(&closed)?;
    if element.is_unitary() {
        let u = unitary_matrix(element, &closed)?;
        let amps = &u * state.amps();
        return Ok(ElementOutput::Pure(LabeledState::new(
            closed.iter().copied().zip(amps.iter().copied()).collect(),
        )?));
    }
    let kraus = kraus_set(element, &closed)?;
    let keep_amps = &kraus[0] * state.amps();
    let keep_state = LabeledState::new(
        closed
            .iter()
            .copied()
            .zip(keep_amps.iter().copied())
            .collect(),
    )?;
    let mut branches = Vec::new();
    let p_keep = keep_state.norm().powi(2);
    if p_keep > ZERO_NORM {
        let (normalized, _) = keep_state.normalize()?;
        branches.push(Branch {
            tag: "pass".into(),
            state: normalized,
            probability: p_keep,
        });
    }
    let p_absorbed: f64 = kraus[1..]
        .iter()
        .map(|k| (k * state.amps()).norm_squared())
        .sum();
    if p_absorbed > ZERO_NORM {
        branches.push(Branch {
            tag: "absorbed".into(),
            state: LabeledState::vacuum().embed(&closed)?,
            probability: p_absorbed,
        });
    }
    Ok(ElementOutput::Branches(branches))
}

/// Applies one element to a density operator: `U rho U^dag` for unitary
/// kinds, `sum_k K rho K^dag` for channels.
pub fn apply_element_density(rho: &DensityOp, element: &OpticalElement) -> Result<DensityOp> {
    if matches!(element, OpticalElement::QPlate { .. }) {
        return Err(CoreError::Role(
            "q-plate on density operators is not supported; apply to pure states".into(),
        ));
    }
    let closed = closure_basis(element, rho.basis())?;
    let rho = rho.embed(&closed)?;
    let result = if element.is_unitary() {
        let u = unitary_matrix(element, &closed)?;
        &u * rho.matrix() * u.adjoint()
    } else {
        let mut acc = DMatrix::from_element(closed.len(), closed.len(), c(0.0, 0.0));
        for k in kraus_set(element, &closed)? {
            acc += &k * rho.matrix() * k.adjoint();
        }
        acc
    };
    DensityOp::new(closed, result)
}

/// Ordered chain of elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub elements: Vec<OpticalElement>,
}

impl Circuit {
    pub fn new(elements: Vec<OpticalElement>) -> Self {
        Self { elements }
    }

    /// Cascades the chain over a pure input, splitting at every lossy
    /// element. Branch probabilities multiply along the tree.
    pub fn run_pure(&self, input: &LabeledState) -> Result<Vec<Branch>> {
        let mut branches = vec![Branch {
            tag: String::new(),
            state: input.clone(),
            probability: 1.0,
        }];
        for element in &self.elements {
            let mut next = Vec::with_capacity(branches.len());
            for branch in branches {
                match apply_element(&branch.state, element)? {
                    ElementOutput::Pure(state) => next.push(Branch { state, ..branch }),
                    ElementOutput::Branches(parts) => {
                        for part in parts {
                            let tag = if branch.tag.is_empty() {
                                part.tag.clone()
                            } else {
                                format!("{}>{}", branch.tag, part.tag)
                            };
                            next.push(Branch {
                                tag,
                                state: part.state,
                                probability: branch.probability * part.probability,
                            });
                        }
                    }
                }
            }
            branches = next;
        }
        Ok(branches)
    }

    pub fn run_density(&self, input: &DensityOp) -> Result<DensityOp> {
        let mut rho = input.clone();
        for element in &self.elements {
            rho = apply_element_density(&rho, element)?;
        }
        Ok(rho)
    }
}

/// Heralded single-photon source output: one photon on path `A` with
/// horizontal polarization. The trigger detection behind PBS-1 is classical
/// preprocessing (a start signal), not a quantum branch; the protocol layer
/// logs it as an event.
pub fn heralded_input() -> LabeledState {
    LabeledState::basis_state(BasisLabel::photon(Path::A, Pol::H))
}

fn full_path_pol_basis() -> Vec<BasisLabel> {
    let mut basis: Vec<BasisLabel> = Vec::new();
    for path in [Path::A, Path::B] {
        for pol in [Pol::H, Pol::V] {
            basis.push(BasisLabel::photon(path, pol));
        }
    }
    basis.sort();
    basis
}

/// Preparation chain of the steering experiment: half-wave plate then
/// polarizing beam splitter.
pub fn fig2_chain(hwp_theta_deg: f64) -> Circuit {
    Circuit::new(vec![
        OpticalElement::Hwp { theta_deg: hwp_theta_deg, path: Path::A },
        OpticalElement::Pbs,
    ])
}

/// Deterministic preparation of the path-polarization entangled state
/// `(|A,H> + |B,V>)/sqrt(2)` on the full canonical basis.
pub fn build_fig2_state() -> LabeledState {
    build_fig2_state_with(22.5)
}

/// Same chain with an overridden wave-plate angle (0 degrees produces the
/// unentangled `|A,H>`).
pub fn build_fig2_state_with(hwp_theta_deg: f64) -> LabeledState {
    let branches = fig2_chain(hwp_theta_deg)
        .run_pure(&heralded_input())
        .expect("lossless chain");
    debug_assert_eq!(branches.len(), 1);
    branches[0]
        .state
        .embed(&full_path_pol_basis())
        .expect("subset of the full basis")
}

/// Output of the q-plate preparation variant.
#[derive(Debug, Clone)]
pub struct QPlatePrep {
    /// State right after the q-plate, before the polarizing beam splitter.
    pub after_qplate: LabeledState,
    /// Three-degree-of-freedom entangled state after the splitter.
    pub state: LabeledState,
}

/// Replaces the wave plate by a q-plate: produces the polarization-OAM
/// entangled state and then the three-DoF state after the splitter.
pub fn build_qplate_state() -> QPlatePrep {
    let after_qplate = match apply_element(
        &heralded_input(),
        &OpticalElement::QPlate { path: Path::A },
    )
    .expect("q-plate on heralded input")
    {
        ElementOutput::Pure(s) => s,
        ElementOutput::Branches(_) => unreachable!("q-plate is norm preserving"),
    };
    let state = match apply_element(&after_qplate, &OpticalElement::Pbs)
        .expect("splitter after q-plate")
    {
        ElementOutput::Pure(s) => s,
        ElementOutput::Branches(_) => unreachable!("splitter is unitary"),
    };
    let mut basis: Vec<BasisLabel> = Vec::new();
    for path in [Path::A, Path::B] {
        for pol in [Pol::H, Pol::V] {
            for oam in [Oam::Minus2, Oam::Plus2] {
                basis.push(BasisLabel::Photon(PhotonLabel::full(path, pol, oam)));
            }
        }
    }
    basis.sort();
    QPlatePrep {
        after_qplate,
        state: state.embed(&basis).expect("subset of the full basis"),
    }
}

/// Interferometer variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MzVariant {
    /// No object: every photon exits toward D1.
    Empty,
    /// Absorbing object in arm `B`.
    Absorber,
    /// Polarizer (pass axis `alpha_deg` from `H`) in arm `B`, with a
    /// polarizing beam splitter as the first splitter.
    Polarizer { alpha_deg: f64 },
}

/// Mach-Zehnder interferometer split into the stretch before the object
/// plane, the object itself, and the closing stretch.
///
/// Port convention: the photon enters on path `A`; detector D1 watches
/// output port `B` (the bright port of the empty interferometer), D2
/// watches output port `A` (dark when no object is present).
///
/// The polarizer variant prepares the interior entangled state with a
/// wave plate + polarizing splitter; its closing stretch carries a
/// which-path eraser (wave plate at 45 deg in arm `B`) and a compensating
/// phase so that the no-object configuration is dark at D2, restoring the
/// interference logic of the plain interferometer.
#[derive(Debug, Clone)]
pub struct MachZehnder {
    pub variant: MzVariant,
    pub pre_object: Circuit,
    pub object: Option<OpticalElement>,
    pub post_object: Circuit,
}

impl MachZehnder {
    pub fn input(&self) -> LabeledState {
        heralded_input()
    }

    /// Full element chain.
    pub fn circuit(&self) -> Circuit {
        let mut elements = self.pre_object.elements.clone();
        if let Some(object) = &self.object {
            elements.push(object.clone());
        }
        elements.extend(self.post_object.elements.iter().cloned());
        Circuit::new(elements)
    }

    /// State at the object plane (after the first splitter and mirrors).
    pub fn interior_state(&self) -> Result<LabeledState> {
        let branches = self.pre_object.run_pure(&self.input())?;
        debug_assert_eq!(branches.len(), 1);
        Ok(branches[0].state.clone())
    }
}

/// Builds the interferometer for a variant.
pub fn build_mach_zehnder(variant: MzVariant) -> MachZehnder {
    match variant {
        MzVariant::Empty | MzVariant::Absorber => {
            let pre = Circuit::new(vec![
                OpticalElement::Bs50,
                OpticalElement::Mirror { path: Path::A },
                OpticalElement::Mirror { path: Path::B },
            ]);
            let object = match variant {
                MzVariant::Absorber => Some(OpticalElement::Absorber { path: Path::B }),
                _ => None,
            };
            MachZehnder {
                variant,
                pre_object: pre,
                object,
                post_object: Circuit::new(vec![OpticalElement::Bs50]),
            }
        }
        MzVariant::Polarizer { alpha_deg } => MachZehnder {
            variant,
            pre_object: Circuit::new(vec![
                OpticalElement::Hwp { theta_deg: 22.5, path: Path::A },
                OpticalElement::Pbs,
                OpticalElement::Mirror { path: Path::A },
                OpticalElement::Mirror { path: Path::B },
            ]),
            object: Some(OpticalElement::Polarizer { alpha_deg, path: Path::B }),
            post_object: Circuit::new(vec![
                OpticalElement::Hwp { theta_deg: 45.0, path: Path::B },
                OpticalElement::PhaseShift { path: Path::B, phi: std::f64::consts::FRAC_PI_2 },
                OpticalElement::Bs50,
            ]),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::qstate::TOL;

    fn ah() -> BasisLabel {
        BasisLabel::photon(Path::A, Pol::H)
    }
    fn av() -> BasisLabel {
        BasisLabel::photon(Path::A, Pol::V)
    }
    fn bh() -> BasisLabel {
        BasisLabel::photon(Path::B, Pol::H)
    }
    fn bv() -> BasisLabel {
        BasisLabel::photon(Path::B, Pol::V)
    }

    fn pure(out: ElementOutput) -> LabeledState {
        match out {
            ElementOutput::Pure(s) => s,
            ElementOutput::Branches(_) => panic!("expected a pure output"),
        }
    }

    #[test]
    fn hwp_rotates_h_to_diagonal() {
        let input = heralded_input();
        let out = pure(
            apply_element(&input, &OpticalElement::Hwp { theta_deg: 22.5, path: Path::A })
                .unwrap(),
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(out.amplitude(&ah()).re, s, epsilon = TOL);
        assert_relative_eq!(out.amplitude(&av()).re, s, epsilon = TOL);
    }

    #[test]
    fn hwp_at_zero_fixes_h() {
        let input = heralded_input();
        let out = pure(
            apply_element(&input, &OpticalElement::Hwp { theta_deg: 0.0, path: Path::A })
                .unwrap(),
        );
        assert_relative_eq!(out.amplitude(&ah()).re, 1.0, epsilon = TOL);
        assert_relative_eq!(out.amplitude(&av()).norm(), 0.0, epsilon = TOL);
    }

    #[test]
    fn pbs_produces_the_entangled_state() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let diagonal = LabeledState::new(vec![(ah(), C64::new(s, 0.0)), (av(), C64::new(s, 0.0))])
            .unwrap();
        let out = pure(apply_element(&diagonal, &OpticalElement::Pbs).unwrap());
        assert_relative_eq!(out.amplitude(&ah()).re, s, epsilon = TOL);
        assert_relative_eq!(out.amplitude(&bv()).re, s, epsilon = TOL);
        assert_relative_eq!(out.amplitude(&av()).norm(), 0.0, epsilon = TOL);
        assert_relative_eq!(out.amplitude(&bh()).norm(), 0.0, epsilon = TOL);
    }

    #[test]
    fn fig2_state_amplitudes() {
        let state = build_fig2_state();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(state.basis(), &[ah(), av(), bh(), bv()]);
        assert_relative_eq!(state.amplitude(&ah()).re, s, epsilon = TOL);
        assert_relative_eq!(state.amplitude(&bv()).re, s, epsilon = TOL);
        assert_relative_eq!(state.amplitude(&av()).norm(), 0.0, epsilon = TOL);
        assert_relative_eq!(state.amplitude(&bh()).norm(), 0.0, epsilon = TOL);
        // Deterministic preparation.
        assert!(state.max_abs_diff(&build_fig2_state()) == 0.0);
    }

    #[test]
    fn fig2_with_zero_waveplate_is_unentangled() {
        let state = build_fig2_state_with(0.0);
        assert_relative_eq!(state.amplitude(&ah()).re, 1.0, epsilon = TOL);
        assert_relative_eq!(state.population(|l| *l != ah()), 0.0, epsilon = TOL);
    }

    #[test]
    fn fig2_reduced_states_have_one_bit_of_entropy() {
        // Oracle: closed-form eigenvalues of a 2x2 Hermitian matrix.
        let rho = build_fig2_state().to_density();
        for keep in [Role::Path, Role::Pol] {
            let reduced = rho.partial_trace(&[keep]).unwrap();
            let m = reduced.matrix();
            let (a, b, co) = (m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)]);
            let mid = (a + b) / 2.0;
            let rad = (((a - b) / 2.0).powi(2) + co.norm_sqr()).sqrt();
            let (l1, l2) = (mid + rad, mid - rad);
            let entropy = -(l1 * l1.log2() + l2 * l2.log2());
            assert_relative_eq!(entropy, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn absorber_splits_the_entangled_state() {
        // Projector-arithmetic oracle: population on path B is 1/2.
        let state = build_fig2_state();
        let p_b_oracle = state.population(|l| {
            matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::B))
        });
        assert_relative_eq!(p_b_oracle, 0.5, epsilon = TOL);

        let out = apply_element(&state, &OpticalElement::Absorber { path: Path::B }).unwrap();
        let branches = match out {
            ElementOutput::Branches(b) => b,
            _ => panic!("absorber is a channel"),
        };
        assert_eq!(branches.len(), 2);
        let pass = branches.iter().find(|b| b.tag == "pass").unwrap();
        let absorbed = branches.iter().find(|b| b.tag == "absorbed").unwrap();
        assert_relative_eq!(pass.probability, 0.5, epsilon = TOL);
        assert_relative_eq!(absorbed.probability, 0.5, epsilon = TOL);
        assert_relative_eq!(pass.state.amplitude(&ah()).re, 1.0, epsilon = TOL);
        assert_relative_eq!(
            absorbed.state.amplitude(&BasisLabel::Vacuum).re,
            1.0,
            epsilon = TOL
        );
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        assert_relative_eq!(total, 1.0, epsilon = TOL);
    }

    #[test]
    fn polarizer_channel_is_trace_preserving() {
        let state = build_fig2_state();
        let rho = state.to_density();
        for alpha in [0.0, 30.0, 45.0, 90.0] {
            let out = apply_element_density(
                &rho,
                &OpticalElement::Polarizer { alpha_deg: alpha, path: Path::B },
            )
            .unwrap();
            assert_relative_eq!(out.trace(), 1.0, epsilon = TOL);
        }
    }

    #[test]
    fn kraus_completeness_for_channels() {
        let basis: Vec<BasisLabel> = {
            let mut b = vec![BasisLabel::Vacuum, ah(), av(), bh(), bv()];
            b.sort();
            b
        };
        for element in [
            OpticalElement::Absorber { path: Path::B },
            OpticalElement::Polarizer { alpha_deg: 17.0, path: Path::B },
            OpticalElement::Polarizer { alpha_deg: 90.0, path: Path::A },
        ] {
            let set = kraus_set(&element, &basis).unwrap();
            let mut acc = DMatrix::from_element(basis.len(), basis.len(), c(0.0, 0.0));
            for k in &set {
                acc += k.adjoint() * k;
            }
            let eye = DMatrix::<C64>::identity(basis.len(), basis.len());
            assert!((acc - eye).norm() < TOL);
        }
    }

    #[test]
    fn unitary_elements_have_unitary_matrices() {
        let basis: Vec<BasisLabel> = {
            let mut b = vec![BasisLabel::Vacuum, ah(), av(), bh(), bv()];
            b.sort();
            b
        };
        for element in [
            OpticalElement::Bs50,
            OpticalElement::Pbs,
            OpticalElement::Hwp { theta_deg: 22.5, path: Path::A },
            OpticalElement::Hwp { theta_deg: 10.0, path: Path::B },
            OpticalElement::PhaseShift { path: Path::B, phi: 0.7 },
            OpticalElement::Mirror { path: Path::A },
        ] {
            let closed = closure_basis(&element, &basis).unwrap();
            let u = unitary_matrix(&element, &closed).unwrap();
            let eye = DMatrix::<C64>::identity(closed.len(), closed.len());
            assert!(
                (u.adjoint() * &u - eye).norm() < TOL,
                "element {element:?} not unitary"
            );
        }
    }

    #[test]
    fn qplate_is_an_isometry() {
        // The q-plate extends the register set, so unitarity means
        // norm preservation of its isometric action.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let input = LabeledState::new(vec![
            (ah(), C64::new(0.3, 0.4)),
            (av(), C64::new(s * 0.5, -0.2)),
        ])
        .unwrap();
        let out = pure(apply_element(&input, &OpticalElement::QPlate { path: Path::A }).unwrap());
        assert_relative_eq!(out.norm(), input.norm(), epsilon = TOL);
    }

    #[test]
    fn qplate_output_in_circular_oam_basis() {
        let prep = build_qplate_state();
        // <L,-2|psi> and <R,+2|psi> via the fixed circular convention.
        let (l, r) = circular_jones();
        let amp = |jones: [C64; 2], oam: Oam| -> C64 {
            let h = BasisLabel::Photon(PhotonLabel::full(Path::A, Pol::H, oam));
            let v = BasisLabel::Photon(PhotonLabel::full(Path::A, Pol::V, oam));
            jones[0].conj() * prep.after_qplate.amplitude(&h)
                + jones[1].conj() * prep.after_qplate.amplitude(&v)
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(amp(l, Oam::Minus2).re, s, epsilon = TOL);
        assert_relative_eq!(amp(l, Oam::Minus2).im, 0.0, epsilon = TOL);
        assert_relative_eq!(amp(r, Oam::Plus2).re, s, epsilon = TOL);
        assert_relative_eq!(amp(l, Oam::Plus2).norm(), 0.0, epsilon = TOL);
        assert_relative_eq!(amp(r, Oam::Minus2).norm(), 0.0, epsilon = TOL);
    }

    #[test]
    fn qplate_three_dof_expansion() {
        // After the splitter: (1/2)[ |A,H>(|+2>+|-2>) + i|B,V>(|+2>-|-2>) ].
        let state = build_qplate_state().state;
        let get = |path: Path, pol: Pol, oam: Oam| {
            state.amplitude(&BasisLabel::Photon(PhotonLabel::full(path, pol, oam)))
        };
        assert_relative_eq!(get(Path::A, Pol::H, Oam::Plus2).re, 0.5, epsilon = TOL);
        assert_relative_eq!(get(Path::A, Pol::H, Oam::Minus2).re, 0.5, epsilon = TOL);
        assert_relative_eq!(get(Path::B, Pol::V, Oam::Plus2).im, 0.5, epsilon = TOL);
        assert_relative_eq!(get(Path::B, Pol::V, Oam::Minus2).im, -0.5, epsilon = TOL);
        for (path, pol) in [(Path::A, Pol::V), (Path::B, Pol::H)] {
            for oam in [Oam::Minus2, Oam::Plus2] {
                assert_relative_eq!(get(path, pol, oam).norm(), 0.0, epsilon = TOL);
            }
        }
        assert_relative_eq!(state.norm(), 1.0, epsilon = TOL);
    }

    #[test]
    fn qplate_reduced_path_state_is_maximally_mixed() {
        let rho = build_qplate_state().state.to_density();
        let path_state = rho.partial_trace(&[Role::Path]).unwrap();
        let a = BasisLabel::Photon(PhotonLabel::path(Path::A));
        let b = BasisLabel::Photon(PhotonLabel::path(Path::B));
        assert_relative_eq!(path_state.entry(&a, &a).re, 0.5, epsilon = TOL);
        assert_relative_eq!(path_state.entry(&b, &b).re, 0.5, epsilon = TOL);
        assert_relative_eq!(path_state.entry(&a, &b).norm(), 0.0, epsilon = TOL);
    }

    #[test]
    fn empty_interferometer_is_dark_at_d2() {
        let mz = build_mach_zehnder(MzVariant::Empty);
        let branches = mz.circuit().run_pure(&mz.input()).unwrap();
        assert_eq!(branches.len(), 1);
        let out = &branches[0].state;
        // D2 watches output port A; its amplitude must vanish exactly.
        let d2_population = out.population(|l| {
            matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::A))
        });
        assert_eq!(d2_population, 0.0);
        let d1_population = out.population(|l| {
            matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::B))
        });
        assert_relative_eq!(d1_population, 1.0, epsilon = TOL);
    }

    #[test]
    fn double_bs_is_swap_with_phase() {
        let basis = vec![
            BasisLabel::Photon(PhotonLabel::path(Path::A)),
            BasisLabel::Photon(PhotonLabel::path(Path::B)),
        ];
        let u = unitary_matrix(&OpticalElement::Bs50, &basis).unwrap();
        let uu = &u * &u;
        // i * SWAP
        assert!((uu[(0, 1)] - c(0.0, 1.0)).norm() < TOL);
        assert!((uu[(1, 0)] - c(0.0, 1.0)).norm() < TOL);
        assert!(uu[(0, 0)].norm() < TOL);
        assert!(uu[(1, 1)].norm() < TOL);
    }

    /// Amplitude-propagation oracle for the absorber interferometer,
    /// written directly against the 2x2 splitter algebra.
    #[test]
    fn absorber_interferometer_quarter_quarter_half() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // After BS1: (|A> + i|B>)/sqrt2; mirrors: i(|A> + i|B>)/sqrt2.
        // Absorber removes the B component (probability 1/2); survivor |A>
        // splits 50:50 at BS2. Hand-propagated: D1 = D2 = 1/4.
        let survivor_prob = s * s;
        let oracle = (survivor_prob * 0.5, survivor_prob * 0.5, 0.5);

        let mz = build_mach_zehnder(MzVariant::Absorber);
        let branches = mz.circuit().run_pure(&mz.input()).unwrap();
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
        assert_relative_eq!(d1, oracle.0, epsilon = TOL);
        assert_relative_eq!(d2, oracle.1, epsilon = TOL);
        assert_relative_eq!(absorbed, oracle.2, epsilon = TOL);
    }

    #[test]
    fn polarizer_interferometer_interior_state() {
        // The interior of the polarizer variant is the entangled state of
        // the steering experiment (up to the mirrors' global phase).
        let mz = build_mach_zehnder(MzVariant::Polarizer { alpha_deg: 0.0 });
        let interior = mz.interior_state().unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // Mirrors on both arms contribute a global i.
        assert_relative_eq!(interior.amplitude(&ah()).im, s, epsilon = TOL);
        assert_relative_eq!(interior.amplitude(&bv()).im, s, epsilon = TOL);
        assert_relative_eq!(
            crate::qstate::pure_fidelity(&interior, &build_fig2_state()),
            1.0,
            epsilon = TOL
        );
    }

    #[test]
    fn polarizer_interferometer_with_pass_v_restores_the_dark_port() {
        // Pass axis V blocks nothing (arm B carries V only); the eraser and
        // compensator then make D2 exactly dark.
        let mz = build_mach_zehnder(MzVariant::Polarizer { alpha_deg: 90.0 });
        let branches = mz.circuit().run_pure(&mz.input()).unwrap();
        let mut d2 = 0.0;
        let mut absorbed = 0.0;
        for b in &branches {
            absorbed += b.probability * b.state.population(BasisLabel::is_vacuum);
            d2 += b.probability
                * b.state.population(|l| {
                    matches!(l, BasisLabel::Photon(p) if p.path == Some(Path::A))
                });
        }
        assert_eq!(d2, 0.0);
        assert_eq!(absorbed, 0.0);
    }

    #[test]
    fn polarizer_interferometer_pass_h_matches_absorber_statistics() {
        let mz = build_mach_zehnder(MzVariant::Polarizer { alpha_deg: 0.0 });
        let branches = mz.circuit().run_pure(&mz.input()).unwrap();
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
        assert_relative_eq!(d1, 0.25, epsilon = TOL);
        assert_relative_eq!(d2, 0.25, epsilon = TOL);
        assert_relative_eq!(absorbed, 0.5, epsilon = TOL);
    }
}
