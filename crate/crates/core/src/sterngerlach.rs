//! Stern-Gerlach entangled-wavepacket state: branch evaluation on a grid,
//! branch overlap, and the effective two-qubit analysis.
//!
//! The spin-up/down branches are complex Gaussians
//!
//! ```text
//! <z|psi+-> = N exp(-+ i kappa (B0 + b z)) exp[ -(z +- c)^2 / (4 w) ]
//! ```
//!
//! with `kappa = t mu_c / hbar`, center offset `c = t^2 mu_c b / (2 m)`,
//! complex width parameter `w = sigma0^2 + i t hbar / (2 m)` and a real
//! normalization `N` fixing `int |psi|^2 dz = 1`. The probability density
//! has variance `width^2 = sigma0^2 + (t hbar / (2 m sigma0))^2` (modulus
//! law of the complex width). The transverse factor multiplies both
//! branches identically and cancels in every overlap and correlator, so it
//! is factored out; the original three-dimensional normalization constant
//! is replaced by this one-dimensional `N` (its global phase is common to
//! both branches and unobservable).
//!
//! The overlap has the closed form
//!
//! ```text
//! <psi+|psi-> = exp[ -(2 kappa b - c beta/|w|^2)^2 |w|^2 / (2 sigma0^2)
//!                    - sigma0^2 c^2 / (2 |w|^2) ] * exp(2 i kappa B0)
//! ```
//!
//! (`beta = t hbar / 2m`), against which the trapezoidal quadrature is
//! checked. Momentum separation (first term) and spatial separation
//! (second term) both drive the branches apart.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::qstate::{BasisLabel, DensityOp, LabeledState, Spin, C64};
use crate::steering::{chsh_max, ChshAnalysis};

/// Stern-Gerlach parameters in dimensionless simulation units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgParams {
    /// Initial wavepacket width parameter.
    pub sigma0: f64,
    /// Magnetic moment.
    pub mu_c: f64,
    /// Field gradient.
    pub b: f64,
    /// Homogeneous field component.
    pub b0: f64,
    /// Mass.
    pub m: f64,
    /// Reduced Planck constant.
    pub hbar: f64,
    /// Evolution time.
    pub t: f64,
}

impl Default for SgParams {
    fn default() -> Self {
        Self { sigma0: 1.0, mu_c: 1.0, b: 1.0, b0: 0.0, m: 1.0, hbar: 1.0, t: 0.0 }
    }
}

impl SgParams {
    pub fn at_time(self, t: f64) -> Self {
        Self { t, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma0 <= 0.0 || self.m <= 0.0 || self.hbar <= 0.0 {
            return Err(CoreError::InvalidStrategy(
                "sigma0, m and hbar must be positive".into(),
            ));
        }
        if self.t < 0.0 {
            return Err(CoreError::InvalidStrategy("time must be non-negative".into()));
        }
        Ok(())
    }

    /// Center offset `c = t^2 mu_c b / (2 m)`; the +- branch sits at -+c.
    pub fn center_offset(&self) -> f64 {
        self.t * self.t * self.mu_c * self.b / (2.0 * self.m)
    }

    /// Density width from the complex-width modulus law.
    pub fn width(&self) -> f64 {
        let spread = self.t * self.hbar / (2.0 * self.m * self.sigma0);
        (self.sigma0 * self.sigma0 + spread * spread).sqrt()
    }

    fn kappa(&self) -> f64 {
        self.t * self.mu_c / self.hbar
    }

    fn beta(&self) -> f64 {
        self.t * self.hbar / (2.0 * self.m)
    }

    fn w(&self) -> C64 {
        Complex::new(self.sigma0 * self.sigma0, self.beta())
    }

    /// Symmetric grid covering both branch centers with nine density
    /// widths of margin, 4096 points.
    pub fn default_grid(&self) -> Grid {
        let half = self.center_offset().abs() + 9.0 * self.width();
        Grid { z_min: -half, z_max: half, n: 4096 }
    }
}

/// Uniform evaluation grid over `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub z_min: f64,
    pub z_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn step(&self) -> f64 {
        (self.z_max - self.z_min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.z_min + self.step() * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.point(i))
    }

    /// Trapezoidal quadrature of sampled values.
    pub fn integrate<F: Fn(usize) -> C64>(&self, f: F) -> C64 {
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..self.n {
            let weight = if i == 0 || i == self.n - 1 { 0.5 } else { 1.0 };
            acc += f(i) * weight;
        }
        acc * Complex::new(self.step(), 0.0)
    }
}

/// Which spin branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSign {
    Plus,
    Minus,
}

impl BranchSign {
    fn sign(&self) -> f64 {
        match self {
            BranchSign::Plus => 1.0,
            BranchSign::Minus => -1.0,
        }
    }
}

/// One evaluated branch wavefunction.
#[derive(Debug, Clone)]
pub struct SgBranch {
    pub sign: BranchSign,
    pub grid: Grid,
    pub amps: Vec<C64>,
}

impl SgBranch {
    /// Quadrature of `|psi|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.integrate(|i| {
            Complex::new(self.amps[i].norm_sqr(), 0.0)
        })
        .re
    }

    /// Location of the density maximum.
    pub fn peak_z(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.amps.len() {
            if self.amps[i].norm_sqr() > self.amps[best].norm_sqr() {
                best = i;
            }
        }
        self.grid.point(best)
    }
}

fn branch_amplitude(params: &SgParams, sign: f64, z: f64) -> C64 {
    let c_off = params.center_offset();
    let w = params.w();
    let width = params.width();
    let normalization =
        1.0 / (2.0 * std::f64::consts::PI * width * width).powf(0.25);
    let phase = -sign * params.kappa() * (params.b0 + params.b * z);
    let gauss = (-Complex::new(z + sign * c_off, 0.0).powi(2) / (w * 4.0)).exp();
    Complex::from_polar(1.0, phase) * gauss * normalization
}

/// Evaluates one branch on a grid. Errors when the grid does not contain
/// the branch support (boundary amplitude above 1e-8 of the peak).
pub fn eval_branch(params: &SgParams, sign: BranchSign, grid: Grid) -> Result<SgBranch> {
    params.validate()?;
    if grid.n < 16 {
        return Err(CoreError::InvalidStrategy("grid needs at least 16 points".into()));
    }
    let s = sign.sign();
    let center = -s * params.center_offset();
    let peak = branch_amplitude(params, s, center).norm();
    let boundary = branch_amplitude(params, s, grid.z_min)
        .norm()
        .max(branch_amplitude(params, s, grid.z_max).norm());
    let ratio = boundary / peak;
    if ratio >= 1e-8 {
        let half = params.center_offset().abs() + 9.0 * params.width();
        return Err(CoreError::GridTooNarrow {
            boundary_ratio: ratio,
            suggested_min: -half,
            suggested_max: half,
        });
    }
    let amps = grid.points().map(|z| branch_amplitude(params, s, z)).collect();
    Ok(SgBranch { sign, grid, amps })
}

/// `<psi+|psi->` by trapezoidal quadrature.
pub fn branch_overlap(params: &SgParams, grid: Grid) -> Result<C64> {
    let plus = eval_branch(params, BranchSign::Plus, grid)?;
    let minus = eval_branch(params, BranchSign::Minus, grid)?;
    Ok(grid.integrate(|i| plus.amps[i].conj() * minus.amps[i]))
}

/// `<psi+|psi->` from the closed-form Gaussian integral.
pub fn overlap_closed_form(params: &SgParams) -> Result<C64> {
    params.validate()?;
    let w_sq = params.w().norm_sqr();
    let sigma_sq = params.sigma0 * params.sigma0;
    let c_off = params.center_offset();
    let momentum = 2.0 * params.kappa() * params.b - c_off * params.beta() / w_sq;
    let magnitude =
        -momentum * momentum * w_sq / (2.0 * sigma_sq) - sigma_sq * c_off * c_off / (2.0 * w_sq);
    let phase = 2.0 * params.kappa() * params.b0;
    Ok(Complex::from_polar(magnitude.exp(), phase))
}

/// Effective two-qubit reduction of the wavepacket-spin state.
#[derive(Debug, Clone)]
pub struct EffectiveTwoQubit {
    /// Pure-state density operator on (orthonormalized mode) x (spin).
    pub rho: DensityOp,
    /// Branch overlap used in the construction.
    pub overlap: C64,
    /// Concurrence `sqrt(1 - |overlap|^2)` of the effective state.
    pub concurrence: f64,
    /// True when the branches were numerically colinear and the product
    /// fallback was returned.
    pub degenerate: bool,
}

fn spin_mode_basis() -> Vec<BasisLabel> {
    let mut basis = vec![
        BasisLabel::SpinMode { mode: 0, spin: Spin::Up },
        BasisLabel::SpinMode { mode: 0, spin: Spin::Down },
        BasisLabel::SpinMode { mode: 1, spin: Spin::Up },
        BasisLabel::SpinMode { mode: 1, spin: Spin::Down },
    ];
    basis.sort();
    basis
}

/// Expresses `(|psi+>|up> + |psi->|down>)/sqrt(2)` as a two-qubit pure
/// state by Gram-Schmidt on span{psi+, psi-} with psi+ first.
pub fn effective_two_qubit(params: &SgParams, grid: Grid) -> Result<EffectiveTwoQubit> {
    let plus = eval_branch(params, BranchSign::Plus, grid)?;
    let minus = eval_branch(params, BranchSign::Minus, grid)?;
    let norm_plus = plus.norm_sq().sqrt();
    let overlap = grid.integrate(|i| plus.amps[i].conj() * minus.amps[i])
        / Complex::new(norm_plus, 0.0);
    let residual = (1.0 - overlap.norm_sqr()).max(0.0).sqrt();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let degenerate = residual < 1e-7 && params.t > 0.0;
    let amps: [C64; 4] = if degenerate {
        // Branches colinear: the mode factor drops out and the state is
        // |e1> x (|up> + o |down>), renormalized.
        let norm = (1.0 + overlap.norm_sqr()).sqrt();
        [
            Complex::new(1.0 / norm, 0.0),
            overlap / norm,
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
        ]
    } else {
        [
            Complex::new(s, 0.0),
            overlap * s,
            Complex::new(0.0, 0.0),
            Complex::new(residual * s, 0.0),
        ]
    };
    let basis = spin_mode_basis();
    let state = LabeledState::new(basis.into_iter().zip(amps).collect())?;
    let (state, _) = state.normalize()?;
    Ok(EffectiveTwoQubit {
        rho: state.to_density(),
        overlap,
        concurrence: if degenerate { 0.0 } else { residual },
        degenerate,
    })
}

/// One point of the time sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub t: f64,
    pub overlap: C64,
    pub s_max: f64,
}

/// Sweeps the evolution time: at each point the branch overlap (default
/// grid) and the CHSH maximum of the effective two-qubit state.
pub fn sg_chsh_curve(params: &SgParams, times: &[f64]) -> Result<Vec<SweepPoint>> {
    let mut curve = Vec::with_capacity(times.len());
    for &t in times {
        let p = params.at_time(t);
        let grid = p.default_grid();
        let effective = effective_two_qubit(&p, grid)?;
        let analysis: ChshAnalysis = chsh_max(&effective.rho)?;
        curve.push(SweepPoint { t, overlap: effective.overlap, s_max: analysis.s_max });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn defaults_at(t: f64) -> SgParams {
        SgParams::default().at_time(t)
    }

    #[test]
    fn t_zero_branches_are_identical_real_gaussians() {
        let p = defaults_at(0.0);
        let grid = p.default_grid();
        let plus = eval_branch(&p, BranchSign::Plus, grid).unwrap();
        let minus = eval_branch(&p, BranchSign::Minus, grid).unwrap();
        for (a, b) in plus.amps.iter().zip(minus.amps.iter()) {
            assert!((a - b).norm() < 1e-14);
            assert!(a.im.abs() < 1e-14);
        }
        assert_relative_eq!(plus.peak_z(), 0.0, epsilon = grid.step());
        assert_relative_eq!(p.width(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(plus.norm_sq(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn branch_centers_at_default_parameters() {
        // Density-maximum oracle on a fine grid: centers -+ t^2/2 = -+2.
        let p = defaults_at(2.0);
        let half = p.center_offset().abs() + 9.0 * p.width();
        let fine = Grid { z_min: -half, z_max: half, n: 16385 };
        let plus = eval_branch(&p, BranchSign::Plus, fine).unwrap();
        let minus = eval_branch(&p, BranchSign::Minus, fine).unwrap();
        assert!((plus.peak_z() - (-2.0)).abs() < 0.01);
        assert!((minus.peak_z() - 2.0).abs() < 0.01);
    }

    #[test]
    fn homogeneous_field_contributes_the_prefactor_phase() {
        // amp(B0 != 0) / amp(B0 = 0) = exp(-+ i t mu_c B0 / hbar) at any z.
        let t = 1.3;
        let b0 = 0.7;
        let with = SgParams { b0, ..defaults_at(t) };
        let without = defaults_at(t);
        let grid = with.default_grid();
        let plus_with = eval_branch(&with, BranchSign::Plus, grid).unwrap();
        let plus_without = eval_branch(&without, BranchSign::Plus, grid).unwrap();
        let minus_with = eval_branch(&with, BranchSign::Minus, grid).unwrap();
        let minus_without = eval_branch(&without, BranchSign::Minus, grid).unwrap();
        let mid = grid.n / 2;
        let expected = Complex::from_polar(1.0, -t * b0);
        let ratio_plus = plus_with.amps[mid] / plus_without.amps[mid];
        let ratio_minus = minus_with.amps[mid] / minus_without.amps[mid];
        assert!((ratio_plus - expected).norm() < 1e-12);
        assert!((ratio_minus - expected.conj()).norm() < 1e-12);
    }

    #[test]
    fn branches_stay_normalized() {
        for t in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let p = defaults_at(t);
            let grid = p.default_grid();
            for sign in [BranchSign::Plus, BranchSign::Minus] {
                let branch = eval_branch(&p, sign, grid).unwrap();
                assert!(
                    (branch.norm_sq() - 1.0).abs() < 1e-8,
                    "norm at t={t}: {}",
                    branch.norm_sq()
                );
            }
        }
    }

    #[test]
    fn overlap_at_t_zero_is_one() {
        let p = defaults_at(0.0);
        let quad = branch_overlap(&p, p.default_grid()).unwrap();
        let closed = overlap_closed_form(&p).unwrap();
        assert!((quad - Complex::new(1.0, 0.0)).norm() < 1e-8);
        assert!((closed - Complex::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn overlap_at_default_t2_is_exp_minus_ten() {
        // By hand from the closed form with sigma0 = mu_c = b = m = hbar = 1,
        // t = 2: momentum term 9, spatial term 1, overlap = e^{-10}.
        let p = defaults_at(2.0);
        let expected = (-10.0f64).exp();
        let closed = overlap_closed_form(&p).unwrap();
        assert_relative_eq!(closed.re, expected, epsilon = 1e-12);
        assert!(closed.im.abs() < 1e-15);
        let quad = branch_overlap(&p, p.default_grid()).unwrap();
        assert!((quad - closed).norm() < 1e-8);
    }

    #[test]
    fn widely_separated_branches_have_negligible_overlap() {
        // Separation/width >= 10 at t = 5.5 for the defaults.
        let p = defaults_at(5.5);
        assert!(2.0 * p.center_offset() / p.width() >= 10.0);
        let quad = branch_overlap(&p, p.default_grid()).unwrap();
        assert!(quad.norm() < 1e-6);
    }

    #[test]
    fn overlap_magnitude_decreases_monotonically() {
        let p = SgParams::default();
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let t = 5.0 * k as f64 / 49.0;
            let pt = p.at_time(t);
            let quad = branch_overlap(&pt, pt.default_grid()).unwrap();
            assert!(quad.norm() <= last + 1e-12, "overlap not monotone at t={t}");
            last = quad.norm();
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form_on_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = SgParams {
                sigma0: rng.gen_range(0.5..2.0),
                mu_c: rng.gen_range(0.5..2.0),
                b: rng.gen_range(0.5..2.0),
                b0: rng.gen_range(0.0..1.0),
                m: rng.gen_range(0.5..2.0),
                hbar: rng.gen_range(0.5..2.0),
                t: rng.gen_range(0.0..3.0),
            };
            let quad = branch_overlap(&p, p.default_grid()).unwrap();
            let closed = overlap_closed_form(&p).unwrap();
            assert!(
                (quad - closed).norm() < 1e-8,
                "disagreement {:e} for {p:?}",
                (quad - closed).norm()
            );
        }
    }

    #[test]
    fn narrow_grid_is_rejected_with_suggested_bounds() {
        let p = defaults_at(2.0);
        let grid = Grid { z_min: -2.0, z_max: 2.0, n: 256 };
        match eval_branch(&p, BranchSign::Plus, grid) {
            Err(CoreError::GridTooNarrow { suggested_min, suggested_max, .. }) => {
                assert!(suggested_min < -2.0);
                assert!(suggested_max > 2.0);
                let fixed = Grid { z_min: suggested_min, z_max: suggested_max, n: 4096 };
                assert!(eval_branch(&p, BranchSign::Plus, fixed).is_ok());
            }
            other => panic!("expected grid error, got {other:?}"),
        }
    }

    #[test]
    fn effective_state_at_t_zero_is_product() {
        let p = defaults_at(0.0);
        let eff = effective_two_qubit(&p, p.default_grid()).unwrap();
        assert!(eff.concurrence < 1e-7);
        assert_relative_eq!(eff.rho.trace(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(eff.rho.purity(), 1.0, epsilon = 1e-10);
        let analysis = chsh_max(&eff.rho).unwrap();
        assert!((analysis.s_max - 2.0).abs() < 1e-6);
    }

    #[test]
    fn asymptotic_effective_state_reaches_tsirelson() {
        let p = defaults_at(3.0);
        let eff = effective_two_qubit(&p, p.default_grid()).unwrap();
        assert!(eff.overlap.norm() < 1e-6);
        let analysis = chsh_max(&eff.rho).unwrap();
        assert!((analysis.s_max - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn concurrence_matches_the_spin_flip_oracle() {
        // For pure two-qubit states C = 2 |ad - bc|; compare against the
        // closed form sqrt(1 - |o|^2) at an intermediate time.
        let p = defaults_at(1.0);
        let eff = effective_two_qubit(&p, p.default_grid()).unwrap();
        let basis = spin_mode_basis();
        let m = eff.rho.matrix();
        // Amplitudes recovered from the first row of the pure density.
        let a0 = m[(0, 0)].sqrt();
        let amps: Vec<C64> = (0..4).map(|j| m[(0, j)].conj() / a0).collect();
        let spin_flip = 2.0 * (amps[0] * amps[3] - amps[1] * amps[2]).norm();
        assert_relative_eq!(spin_flip, eff.concurrence, epsilon = 1e-9);
        assert_relative_eq!(
            eff.concurrence,
            (1.0 - eff.overlap.norm_sqr()).sqrt(),
            epsilon = 1e-9
        );
        let _ = basis;
    }

    #[test]
    fn degenerate_branches_fall_back_to_a_product_state() {
        // Zero gradient: branches differ only by the homogeneous-field
        // phase, so the span collapses.
        let p = SgParams { b: 0.0, b0: 0.5, ..defaults_at(1.0) };
        let eff = effective_two_qubit(&p, p.default_grid()).unwrap();
        assert!(eff.degenerate);
        assert_relative_eq!(eff.overlap.norm(), 1.0, epsilon = 1e-8);
        assert_eq!(eff.concurrence, 0.0);
        let analysis = chsh_max(&eff.rho).unwrap();
        assert!((analysis.s_max - 2.0).abs() < 1e-6);
    }

    #[test]
    fn sweep_is_monotone_and_bounded() {
        let times: Vec<f64> = (0..50).map(|k| 5.0 * k as f64 / 49.0).collect();
        let curve = sg_chsh_curve(&SgParams::default(), &times).unwrap();
        assert_eq!(curve.len(), 50);
        assert_relative_eq!(curve[0].overlap.norm(), 1.0, epsilon = 1e-8);
        assert!((curve[0].s_max - 2.0).abs() < 1e-6);
        let last = curve.last().unwrap();
        assert!((last.s_max - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-3);
        for pair in curve.windows(2) {
            assert!(pair[1].overlap.norm() <= pair[0].overlap.norm() + 1e-12);
            assert!(pair[1].s_max >= pair[0].s_max - 1e-9);
        }
        for point in &curve {
            assert!(point.s_max >= 2.0 - 1e-9);
            assert!(point.s_max <= 2.0 * std::f64::consts::SQRT_2 + 1e-9);
        }
    }
}
