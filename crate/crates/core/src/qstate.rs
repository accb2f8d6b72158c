//! Dense complex linear algebra on small labeled Hilbert spaces.
//!
//! The simulator works on a direct sum of a one-dimensional vacuum sector
//! and a single-photon sector labeled by path, polarization and optionally
//! orbital angular momentum. Dual-rail occupation notation (`|a> = |0>|1>`,
//! `|b> = |1>|0>`) is represented by the path label itself: there is exactly
//! one photon anywhere in the paper's experiments, so no bosonic mode space
//! is simulated. The explicit vacuum label models destroyed/absorbed photons
//! and keeps every operation total.
//!
//! Basis ordering is canonical everywhere: vacuum first, then lexicographic
//! path x polarization x OAM. Serialized states are therefore bit-comparable.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{CoreError, Result};

pub type C64 = Complex<f64>;

/// Exact-arithmetic-scale tolerance used by structural checks.
pub const TOL: f64 = 1e-12;
/// Eigenvalues above this (negative) floor count as positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;
/// Norms below this threshold are treated as impossible branches, not underflow.
pub const ZERO_NORM: f64 = 1e-14;

/// Spatial mode of the photon. `A` heads toward Puebla (Bob), `B` toward
/// New York (Alice).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Path {
    A,
    B,
}

/// Linear polarization label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pol {
    H,
    V,
}

/// Orbital angular momentum label (units of hbar), produced by the q-plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Oam {
    Minus2,
    Plus2,
}

/// Spin-1/2 label for the effective Stern-Gerlach analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spin {
    Up,
    Down,
}

/// Degrees of freedom a photon label can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Path,
    Pol,
    Oam,
}

/// Set of roles present in a photon label, packed into three bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoleSet(u8);

impl RoleSet {
    pub const EMPTY: RoleSet = RoleSet(0);

    pub fn with(mut self, role: Role) -> Self {
        self.0 |= 1 << role as u8;
        self
    }

    pub fn contains(&self, role: Role) -> bool {
        self.0 & (1 << role as u8) != 0
    }

    pub fn is_disjoint(&self, other: &RoleSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(&self, other: &RoleSet) -> RoleSet {
        RoleSet(self.0 | other.0)
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        [Role::Path, Role::Pol, Role::Oam]
            .into_iter()
            .filter(|r| self.contains(*r))
    }
}

impl FromIterator<Role> for RoleSet {
    fn from_iter<I: IntoIterator<Item = Role>>(iter: I) -> Self {
        iter.into_iter().fold(RoleSet::EMPTY, |s, r| s.with(r))
    }
}

/// Single-photon label over some subset of the three degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhotonLabel {
    pub path: Option<Path>,
    pub pol: Option<Pol>,
    pub oam: Option<Oam>,
}

impl PhotonLabel {
    pub fn path(path: Path) -> Self {
        Self { path: Some(path), pol: None, oam: None }
    }

    pub fn pol(pol: Pol) -> Self {
        Self { path: None, pol: Some(pol), oam: None }
    }

    pub fn path_pol(path: Path, pol: Pol) -> Self {
        Self { path: Some(path), pol: Some(pol), oam: None }
    }

    pub fn full(path: Path, pol: Pol, oam: Oam) -> Self {
        Self { path: Some(path), pol: Some(pol), oam: Some(oam) }
    }

    pub fn role_set(&self) -> RoleSet {
        let mut set = RoleSet::EMPTY;
        if self.path.is_some() {
            set = set.with(Role::Path);
        }
        if self.pol.is_some() {
            set = set.with(Role::Pol);
        }
        if self.oam.is_some() {
            set = set.with(Role::Oam);
        }
        set
    }

    /// Two-valued component index of one role: A/H/-2 map to 0, B/V/+2 to 1.
    pub fn component(&self, role: Role) -> Option<usize> {
        match role {
            Role::Path => self.path.map(|p| p as usize),
            Role::Pol => self.pol.map(|p| p as usize),
            Role::Oam => self.oam.map(|o| o as usize),
        }
    }

    fn merge(&self, other: &PhotonLabel) -> Result<PhotonLabel> {
        if !self.role_set().is_disjoint(&other.role_set()) {
            return Err(CoreError::Role(
                "tensor factors share a degree of freedom".into(),
            ));
        }
        Ok(PhotonLabel {
            path: self.path.or(other.path),
            pol: self.pol.or(other.pol),
            oam: self.oam.or(other.oam),
        })
    }
}

/// One basis direction of the composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BasisLabel {
    /// No photon present (absorbed or destructively detected).
    Vacuum,
    /// Single photon with explicit degrees of freedom.
    Photon(PhotonLabel),
    /// Effective two-qubit register: orthonormalized wavepacket mode x spin.
    SpinMode { mode: u8, spin: Spin },
}

impl BasisLabel {
    pub fn photon(path: Path, pol: Pol) -> Self {
        BasisLabel::Photon(PhotonLabel::path_pol(path, pol))
    }

    pub fn as_photon(&self) -> Option<&PhotonLabel> {
        match self {
            BasisLabel::Photon(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self, BasisLabel::Vacuum)
    }
}

impl std::fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisLabel::Vacuum => write!(f, "vac"),
            BasisLabel::Photon(p) => {
                let mut parts: Vec<String> = Vec::new();
                if let Some(path) = p.path {
                    parts.push(format!("{:?}", path));
                }
                if let Some(pol) = p.pol {
                    parts.push(format!("{:?}", pol));
                }
                if let Some(oam) = p.oam {
                    parts.push(match oam {
                        Oam::Minus2 => "-2".into(),
                        Oam::Plus2 => "+2".into(),
                    });
                }
                write!(f, "{}", parts.join(":"))
            }
            BasisLabel::SpinMode { mode, spin } => {
                let s = match spin {
                    Spin::Up => "up",
                    Spin::Down => "down",
                };
                write!(f, "w{}:{}", mode, s)
            }
        }
    }
}

fn validate_basis(basis: &[BasisLabel]) -> Result<()> {
    for pair in basis.windows(2) {
        if pair[0] >= pair[1] {
            return Err(CoreError::BasisMismatch(
                "basis labels not unique or not in canonical order".into(),
            ));
        }
    }
    // All photon labels within one state must carry the same role set.
    let mut photon_roles: Option<RoleSet> = None;
    for label in basis {
        if let BasisLabel::Photon(p) = label {
            match photon_roles {
                None => photon_roles = Some(p.role_set()),
                Some(set) if set == p.role_set() => {}
                Some(_) => {
                    return Err(CoreError::BasisMismatch(
                        "photon labels carry inconsistent degrees of freedom".into(),
                    ))
                }
            }
        }
    }
    Ok(())
}

fn sort_pairs<T>(pairs: &mut Vec<(BasisLabel, T)>) {
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
}

/// Full product basis over the roles present in `basis`, keeping the
/// vacuum label when present. Non-photon labels pass through unchanged.
pub fn complete_basis(basis: &[BasisLabel]) -> Vec<BasisLabel> {
    let roles = basis
        .iter()
        .find_map(|l| l.as_photon().map(|p| p.role_set()));
    let Some(roles) = roles else {
        return basis.to_vec();
    };
    let mut out: Vec<BasisLabel> = basis
        .iter()
        .filter(|l| !matches!(l, BasisLabel::Photon(_)))
        .copied()
        .collect();
    let paths: Vec<Option<Path>> = if roles.contains(Role::Path) {
        vec![Some(Path::A), Some(Path::B)]
    } else {
        vec![None]
    };
    let pols: Vec<Option<Pol>> = if roles.contains(Role::Pol) {
        vec![Some(Pol::H), Some(Pol::V)]
    } else {
        vec![None]
    };
    let oams: Vec<Option<Oam>> = if roles.contains(Role::Oam) {
        vec![Some(Oam::Minus2), Some(Oam::Plus2)]
    } else {
        vec![None]
    };
    for &path in &paths {
        for &pol in &pols {
            for &oam in &oams {
                out.push(BasisLabel::Photon(PhotonLabel { path, pol, oam }));
            }
        }
    }
    out.sort();
    out
}

/// Pure state: complex amplitudes over a canonical labeled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    basis: Vec<BasisLabel>,
    amps: DVector<C64>,
}

impl LabeledState {
    /// Builds a state from (label, amplitude) pairs; labels are sorted into
    /// canonical order and must be unique. The state is not normalized.
    pub fn new(pairs: Vec<(BasisLabel, C64)>) -> Result<Self> {
        let mut pairs = pairs;
        sort_pairs(&mut pairs);
        let basis: Vec<BasisLabel> = pairs.iter().map(|(l, _)| *l).collect();
        validate_basis(&basis)?;
        let amps = DVector::from_iterator(pairs.len(), pairs.iter().map(|(_, a)| *a));
        Ok(Self { basis, amps })
    }

    /// Unit basis vector on a single label.
    pub fn basis_state(label: BasisLabel) -> Self {
        Self {
            basis: vec![label],
            amps: DVector::from_element(1, C64::new(1.0, 0.0)),
        }
    }

    pub fn vacuum() -> Self {
        Self::basis_state(BasisLabel::Vacuum)
    }

    pub fn basis(&self) -> &[BasisLabel] {
        &self.basis
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn amplitude(&self, label: &BasisLabel) -> C64 {
        match self.basis.binary_search(label) {
            Ok(i) => self.amps[i],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// Summed population on labels matching a predicate.
    pub fn population<F: Fn(&BasisLabel) -> bool>(&self, pred: F) -> f64 {
        self.basis
            .iter()
            .zip(self.amps.iter())
            .filter(|(l, _)| pred(l))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Returns the state rescaled to unit norm together with the
    /// pre-normalization norm (the branch amplitude).
    pub fn normalize(&self) -> Result<(LabeledState, f64)> {
        let norm = self.norm();
        if norm <= ZERO_NORM {
            return Err(CoreError::ImpossibleBranch { norm });
        }
        let mut out = self.clone();
        out.amps /= C64::new(norm, 0.0);
        Ok((out, norm))
    }

    /// Embeds the state onto the full product basis of its present roles
    /// (all path/pol/OAM combinations, plus vacuum when present). The
    /// polarization-basis projectors are only projectors on a complete
    /// product basis, so measurement entry points complete first.
    pub fn complete(&self) -> Result<LabeledState> {
        let basis = complete_basis(&self.basis);
        self.embed(&basis)
    }

    /// Extends the state with zero amplitudes onto a superset basis.
    pub fn embed(&self, basis: &[BasisLabel]) -> Result<LabeledState> {
        validate_basis(basis)?;
        let mut amps = DVector::from_element(basis.len(), C64::new(0.0, 0.0));
        for (label, amp) in self.basis.iter().zip(self.amps.iter()) {
            match basis.binary_search(label) {
                Ok(i) => amps[i] = *amp,
                Err(_) => {
                    return Err(CoreError::BasisMismatch(format!(
                        "label {label} missing from target basis"
                    )))
                }
            }
        }
        Ok(LabeledState { basis: basis.to_vec(), amps })
    }

    /// Inner product `<self|other>`, aligning bases by label.
    pub fn inner(&self, other: &LabeledState) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (label, amp) in self.basis.iter().zip(self.amps.iter()) {
            acc += amp.conj() * other.amplitude(label);
        }
        acc
    }

    pub fn to_density(&self) -> DensityOp {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityOp { basis: self.basis.clone(), matrix: m }
    }

    /// Tensor product of two pure states over disjoint photon roles.
    ///
    /// At most one factor may carry a vacuum label; its amplitude passes
    /// through onto the single shared vacuum label of the product (the
    /// internal state of an absent photon is vacuous). Photon labels merge
    /// componentwise with product amplitudes.
    pub fn tensor(&self, other: &LabeledState) -> Result<LabeledState> {
        let self_vac = self.basis.iter().any(|l| l.is_vacuum());
        let other_vac = other.basis.iter().any(|l| l.is_vacuum());
        if self_vac && other_vac {
            return Err(CoreError::Role(
                "both tensor factors carry a vacuum label".into(),
            ));
        }
        let mut pairs: Vec<(BasisLabel, C64)> = Vec::new();
        for (la, aa) in self.basis.iter().zip(self.amps.iter()) {
            match la {
                BasisLabel::Vacuum => pairs.push((BasisLabel::Vacuum, *aa)),
                BasisLabel::Photon(pa) => {
                    for (lb, ab) in other.basis.iter().zip(other.amps.iter()) {
                        match lb {
                            BasisLabel::Vacuum => pairs.push((BasisLabel::Vacuum, *aa * *ab)),
                            BasisLabel::Photon(pb) => {
                                pairs.push((BasisLabel::Photon(pa.merge(pb)?), *aa * *ab))
                            }
                            BasisLabel::SpinMode { .. } => {
                                return Err(CoreError::Role(
                                    "tensor is defined on photon labels only".into(),
                                ))
                            }
                        }
                    }
                }
                BasisLabel::SpinMode { .. } => {
                    return Err(CoreError::Role(
                        "tensor is defined on photon labels only".into(),
                    ))
                }
            }
        }
        LabeledState::new(pairs)
    }

    /// Adds two states on the same or mergeable bases (used to assemble
    /// superpositions from weighted components).
    pub fn add_scaled(&self, coeff: C64, other: &LabeledState) -> Result<LabeledState> {
        let mut union: Vec<BasisLabel> = self.basis.clone();
        for l in other.basis.iter() {
            if union.binary_search(l).is_err() {
                union.push(*l);
            }
        }
        union.sort();
        validate_basis(&union)?;
        let mut amps = DVector::from_element(union.len(), C64::new(0.0, 0.0));
        for (i, l) in union.iter().enumerate() {
            amps[i] = self.amplitude(l) + coeff * other.amplitude(l);
        }
        Ok(LabeledState { basis: union, amps })
    }

    pub fn max_abs_diff(&self, other: &LabeledState) -> f64 {
        let mut union: Vec<BasisLabel> = self.basis.clone();
        for l in other.basis.iter() {
            if union.binary_search(l).is_err() {
                union.push(*l);
            }
        }
        union.sort();
        union
            .iter()
            .map(|l| (self.amplitude(l) - other.amplitude(l)).norm())
            .fold(0.0, f64::max)
    }
}

/// Hermitian positive-semidefinite operator with trace at most one.
/// Subnormalized members of assemblages are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    basis: Vec<BasisLabel>,
    matrix: DMatrix<C64>,
}

impl DensityOp {
    pub fn new(basis: Vec<BasisLabel>, matrix: DMatrix<C64>) -> Result<Self> {
        validate_basis(&basis)?;
        if matrix.nrows() != basis.len() || matrix.ncols() != basis.len() {
            return Err(CoreError::Dimension {
                expected: basis.len(),
                got: matrix.nrows(),
            });
        }
        let op = Self { basis, matrix };
        op.validate()?;
        Ok(op)
    }

    /// Structural validation: Hermitian within 1e-12, eigenvalues above
    /// -1e-10, trace within [0, 1 + 1e-12].
    pub fn validate(&self) -> Result<()> {
        let n = self.matrix.nrows();
        for i in 0..n {
            for j in i..n {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                if d > TOL {
                    return Err(CoreError::InvalidOperator(format!(
                        "not Hermitian: residue {d:e} at ({i},{j})"
                    )));
                }
            }
        }
        let tr = self.trace();
        if !(-TOL..=1.0 + TOL).contains(&tr) {
            return Err(CoreError::InvalidOperator(format!(
                "trace {tr} outside [0, 1]"
            )));
        }
        let min_eig = self
            .eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOL {
            return Err(CoreError::InvalidOperator(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }

    pub fn basis(&self) -> &[BasisLabel] {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix)
            .diagonal()
            .iter()
            .map(|c| c.re)
            .sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Entry lookup by labels, zero when a label is absent.
    pub fn entry(&self, row: &BasisLabel, col: &BasisLabel) -> C64 {
        match (self.basis.binary_search(row), self.basis.binary_search(col)) {
            (Ok(i), Ok(j)) => self.matrix[(i, j)],
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn scale(&self, factor: f64) -> DensityOp {
        DensityOp {
            basis: self.basis.clone(),
            matrix: &self.matrix * C64::new(factor, 0.0),
        }
    }

    pub fn add(&self, other: &DensityOp) -> Result<DensityOp> {
        if self.basis != other.basis {
            return Err(CoreError::BasisMismatch(
                "density operators live on different bases".into(),
            ));
        }
        Ok(DensityOp {
            basis: self.basis.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn embed(&self, basis: &[BasisLabel]) -> Result<DensityOp> {
        validate_basis(basis)?;
        let n = basis.len();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for (i, li) in self.basis.iter().enumerate() {
            let ti = basis.binary_search(li).map_err(|_| {
                CoreError::BasisMismatch(format!("label {li} missing from target basis"))
            })?;
            for (j, lj) in self.basis.iter().enumerate() {
                let tj = basis.binary_search(lj).unwrap();
                m[(ti, tj)] = self.matrix[(i, j)];
            }
        }
        Ok(DensityOp { basis: basis.to_vec(), matrix: m })
    }

    /// Embeds onto the full product basis of the present roles.
    pub fn complete(&self) -> Result<DensityOp> {
        let basis = complete_basis(&self.basis);
        self.embed(&basis)
    }

    /// Tensor product over disjoint photon roles. Both factors must be
    /// vacuum-free: a mixed-state vacuum sector has no canonical product.
    pub fn tensor(&self, other: &DensityOp) -> Result<DensityOp> {
        let photon = |basis: &[BasisLabel]| -> Result<Vec<PhotonLabel>> {
            basis
                .iter()
                .map(|l| {
                    l.as_photon().copied().ok_or_else(|| {
                        CoreError::Role("density tensor requires photon-only bases".into())
                    })
                })
                .collect()
        };
        let pa = photon(&self.basis)?;
        let pb = photon(&other.basis)?;
        let mut labels: Vec<BasisLabel> = Vec::with_capacity(pa.len() * pb.len());
        for a in &pa {
            for b in &pb {
                labels.push(BasisLabel::Photon(a.merge(b)?));
            }
        }
        // Product in row-major (a,b) order, then permute into canonical order.
        let na = pa.len();
        let nb = pb.len();
        let mut sorted = labels.clone();
        sorted.sort();
        validate_basis(&sorted)?;
        let mut m = DMatrix::from_element(na * nb, na * nb, C64::new(0.0, 0.0));
        for ia in 0..na {
            for ib in 0..nb {
                let row = sorted.binary_search(&labels[ia * nb + ib]).unwrap();
                for ja in 0..na {
                    for jb in 0..nb {
                        let col = sorted.binary_search(&labels[ja * nb + jb]).unwrap();
                        m[(row, col)] =
                            self.matrix[(ia, ja)] * other.matrix[(ib, jb)];
                    }
                }
            }
        }
        Ok(DensityOp { basis: sorted, matrix: m })
    }

    /// Partial trace keeping the listed roles. The basis must be photon-only
    /// and factor as a full product over its present roles.
    pub fn partial_trace(&self, keep: &[Role]) -> Result<DensityOp> {
        let photons: Vec<&PhotonLabel> = self
            .basis
            .iter()
            .map(|l| {
                l.as_photon().ok_or_else(|| {
                    CoreError::Role("partial trace requires a photon-only basis".into())
                })
            })
            .collect::<Result<_>>()?;
        let present = photons
            .first()
            .map(|p| p.role_set())
            .unwrap_or(RoleSet::EMPTY);
        for role in keep {
            if !present.contains(*role) {
                return Err(CoreError::Role(format!(
                    "role {role:?} not present in basis"
                )));
            }
        }
        let keep_set: RoleSet = keep.iter().copied().collect();
        let traced: Vec<Role> = present.roles().filter(|r| !keep_set.contains(*r)).collect();

        // Labels absent from the basis are zero entries of the embedding
        // into the full product space, so any consistent sub-basis factors.
        let key = |p: &PhotonLabel, roles: &[Role]| -> Vec<usize> {
            roles.iter().map(|r| p.component(*r).unwrap()).collect()
        };
        // Build the kept-label basis.
        let mut kept_labels: Vec<BasisLabel> = Vec::new();
        for p in &photons {
            let reduced = PhotonLabel {
                path: if keep_set.contains(Role::Path) { p.path } else { None },
                pol: if keep_set.contains(Role::Pol) { p.pol } else { None },
                oam: if keep_set.contains(Role::Oam) { p.oam } else { None },
            };
            let label = BasisLabel::Photon(reduced);
            if !kept_labels.contains(&label) {
                kept_labels.push(label);
            }
        }
        kept_labels.sort();
        let index_of = |p: &PhotonLabel| -> usize {
            let reduced = PhotonLabel {
                path: if keep_set.contains(Role::Path) { p.path } else { None },
                pol: if keep_set.contains(Role::Pol) { p.pol } else { None },
                oam: if keep_set.contains(Role::Oam) { p.oam } else { None },
            };
            kept_labels
                .binary_search(&BasisLabel::Photon(reduced))
                .unwrap()
        };

        let nk = kept_labels.len();
        let mut m = DMatrix::from_element(nk, nk, C64::new(0.0, 0.0));
        for (i, pi) in photons.iter().enumerate() {
            for (j, pj) in photons.iter().enumerate() {
                if key(pi, &traced) == key(pj, &traced) {
                    m[(index_of(pi), index_of(pj))] += self.matrix[(i, j)];
                }
            }
        }
        Ok(DensityOp { basis: kept_labels, matrix: m })
    }

    /// Hermitian square root via spectral decomposition; small negative
    /// eigenvalues from roundoff are clamped to zero.
    fn sqrt(&self) -> DMatrix<C64> {
        let eig = self.matrix.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(
            &eig.eigenvalues.map(|x| C64::new(x.max(0.0).sqrt(), 0.0)),
        );
        &eig.eigenvectors * d * eig.eigenvectors.adjoint()
    }

    pub fn max_abs_diff(&self, other: &DensityOp) -> f64 {
        let mut union: Vec<BasisLabel> = self.basis.clone();
        for l in other.basis.iter() {
            if union.binary_search(l).is_err() {
                union.push(*l);
            }
        }
        union.sort();
        let mut worst = 0.0f64;
        for i in &union {
            for j in &union {
                worst = worst.max((self.entry(i, j) - other.entry(i, j)).norm());
            }
        }
        worst
    }
}

/// Hermitian observable with dimensionless eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    basis: Vec<BasisLabel>,
    matrix: DMatrix<C64>,
}

impl Observable {
    pub fn new(basis: Vec<BasisLabel>, matrix: DMatrix<C64>) -> Result<Self> {
        validate_basis(&basis)?;
        if matrix.nrows() != basis.len() || matrix.ncols() != basis.len() {
            return Err(CoreError::Dimension {
                expected: basis.len(),
                got: matrix.nrows(),
            });
        }
        for i in 0..matrix.nrows() {
            for j in i..matrix.ncols() {
                let d = (matrix[(i, j)] - matrix[(j, i)].conj()).norm();
                if d > TOL {
                    return Err(CoreError::InvalidOperator(format!(
                        "observable not Hermitian: residue {d:e}"
                    )));
                }
            }
        }
        Ok(Self { basis, matrix })
    }

    pub fn basis(&self) -> &[BasisLabel] {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Pauli-style observable on the path qubit: `n . sigma` in the (A, B)
    /// basis for a unit Bloch vector `n = (nx, ny, nz)`.
    pub fn path_bloch(n: [f64; 3]) -> Observable {
        let basis = vec![
            BasisLabel::Photon(PhotonLabel::path(Path::A)),
            BasisLabel::Photon(PhotonLabel::path(Path::B)),
        ];
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(n[2], 0.0),
                C64::new(n[0], -n[1]),
                C64::new(n[0], n[1]),
                C64::new(-n[2], 0.0),
            ],
        );
        Observable { basis, matrix: m }
    }

    pub fn path_sigma_z() -> Observable {
        Self::path_bloch([0.0, 0.0, 1.0])
    }

    pub fn path_sigma_x() -> Observable {
        Self::path_bloch([1.0, 0.0, 0.0])
    }

    pub fn path_sigma_y() -> Observable {
        Self::path_bloch([0.0, 1.0, 0.0])
    }
}

/// Expectation value `tr(rho O)`. Errors if the bases differ or the
/// imaginary residue exceeds 1e-10.
pub fn expectation(rho: &DensityOp, obs: &Observable) -> Result<f64> {
    if rho.basis != obs.basis {
        return Err(CoreError::BasisMismatch(
            "observable basis differs from state basis".into(),
        ));
    }
    let val: C64 = (&rho.matrix * &obs.matrix)
        .diagonal()
        .iter()
        .sum();
    if val.im.abs() > 1e-10 {
        return Err(CoreError::InvalidOperator(format!(
            "expectation has imaginary residue {:e}",
            val.im
        )));
    }
    Ok(val.re)
}

/// Uhlmann fidelity between normalized density operators,
/// `F = (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`, clamped to [0, 1].
/// For pure states this equals `|<psi|phi>|^2`.
pub fn fidelity(rho: &DensityOp, sigma: &DensityOp) -> Result<f64> {
    for (name, op) in [("rho", rho), ("sigma", sigma)] {
        let tr = op.trace();
        if (tr - 1.0).abs() > 1e-6 {
            return Err(CoreError::InvalidOperator(format!(
                "{name} trace {tr} deviates from 1 by more than 1e-6"
            )));
        }
    }
    let (rho, sigma) = if rho.basis == sigma.basis {
        (rho.clone(), sigma.clone())
    } else {
        let mut union: Vec<BasisLabel> = rho.basis.clone();
        for l in sigma.basis.iter() {
            if union.binary_search(l).is_err() {
                union.push(*l);
            }
        }
        union.sort();
        (rho.embed(&union)?, sigma.embed(&union)?)
    };
    let s = rho.sqrt();
    let inner = &s * &sigma.matrix * &s;
    let eig = inner.symmetric_eigen();
    let root_sum: f64 = eig.eigenvalues.iter().map(|x| x.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// Fidelity between pure states, `|<psi|phi>|^2`, without density matrices.
pub fn pure_fidelity(a: &LabeledState, b: &LabeledState) -> f64 {
    a.inner(b).norm_sqr()
}

/// Dynamically typed value for interfaces that accept either kind.
#[derive(Debug, Clone)]
pub enum QValue {
    State(LabeledState),
    Density(DensityOp),
}

impl QValue {
    /// Tensor product of two values of the same kind.
    pub fn tensor(&self, other: &QValue) -> Result<QValue> {
        match (self, other) {
            (QValue::State(a), QValue::State(b)) => Ok(QValue::State(a.tensor(b)?)),
            (QValue::Density(a), QValue::Density(b)) => Ok(QValue::Density(a.tensor(b)?)),
            _ => Err(CoreError::KindMismatch(
                "cannot tensor a state with a density operator".into(),
            )),
        }
    }
}
