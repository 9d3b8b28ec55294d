//! Two-qubit states for one degree of freedom of a photon pair.
//!
//! Basis order is `HH, HV, VH, VV` for polarization and `SS, SL, LS, LL` for
//! time bins, first letter the signal photon. A Bell phase multiplies the
//! `|VV>` (resp. `|LL>`) ket.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub type C64 = Complex64;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;

/// Which degree of freedom a two-qubit state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Polarization,
    TimeBin,
}

impl Basis {
    pub fn labels(self) -> [&'static str; 4] {
        match self {
            Basis::Polarization => ["HH", "HV", "VH", "VV"],
            Basis::TimeBin => ["SS", "SL", "LS", "LL"],
        }
    }
}

/// Density matrix of one degree of freedom of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    matrix: Matrix4<C64>,
    basis: Basis,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positivity. Nothing is renormalized.
    pub fn from_matrix(matrix: Matrix4<C64>, basis: Basis) -> Result<Self> {
        let herm_dev = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_dev > HERMITIAN_TOL {
            return Err(Error::Structural(format!("matrix not Hermitian (deviation {herm_dev:e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Structural(format!("trace {tr} is not 1")));
        }
        let min_eig = matrix.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOL {
            return Err(Error::Structural(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { matrix, basis })
    }

    /// Pure state `|psi><psi|` of a normalized ket.
    pub fn pure(ket: Vector4<C64>, basis: Basis) -> Result<Self> {
        let n = ket.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Structural(format!("ket norm {n} is not 1")));
        }
        Self::from_matrix(ket * ket.adjoint(), basis)
    }

    pub fn maximally_mixed(basis: Basis) -> Self {
        Self { matrix: Matrix4::identity() * C64::from(0.25), basis }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn basis_labels(&self) -> [&'static str; 4] {
        self.basis.labels()
    }

    /// `<row|rho|col>` by basis index.
    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    /// `tr(rho sigma)`; equals `|<a|b>|^2` for pure inputs.
    pub fn fidelity_overlap(&self, other: &TwoQubitState) -> f64 {
        (self.matrix * other.matrix).trace().re
    }

    /// Population of basis state `index` (diagonal element).
    pub fn population(&self, index: usize) -> f64 {
        self.matrix[(index, index)].re
    }
}

/// `(|HH> + e^{i theta}|VV>)/sqrt 2`.
pub fn bell_polarization(theta: f64) -> Result<TwoQubitState> {
    if !theta.is_finite() {
        return domain(format!("Bell phase must be finite, got {theta}"));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = Vector4::new(C64::from(s), C64::from(0.0), C64::from(0.0), C64::from_polar(s, theta));
    TwoQubitState::pure(ket, Basis::Polarization)
}

/// `(|SS> + |LL>)/sqrt 2`.
pub fn bell_timebin() -> TwoQubitState {
    let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let z = C64::from(0.0);
    TwoQubitState::pure(Vector4::new(s, z, z, s), Basis::TimeBin).expect("normalized ket")
}

/// `V rho_bell + (1 - V) I/4`.
pub fn werner(bell: &TwoQubitState, visibility: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&visibility) {
        return domain(format!("visibility {visibility} outside [0, 1]"));
    }
    if bell.purity() < 1.0 - 1e-9 {
        return domain("Werner mixing needs a pure input state");
    }
    let mixed = Matrix4::<C64>::identity() * C64::from(0.25);
    let m = bell.matrix * C64::from(visibility) + mixed * C64::from(1.0 - visibility);
    TwoQubitState::from_matrix(m, bell.basis)
}

/// Polarization and time-bin states of one pair. The joint state is their
/// tensor product.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    pub polarization: TwoQubitState,
    pub timebin: TwoQubitState,
}

impl HyperState {
    pub fn new(polarization: TwoQubitState, timebin: TwoQubitState) -> Result<Self> {
        if polarization.basis != Basis::Polarization || timebin.basis != Basis::TimeBin {
            return Err(Error::Structural("hyperstate components in wrong bases".into()));
        }
        Ok(Self { polarization, timebin })
    }

    /// Werner states around the source's Bell states.
    pub fn werner_pair(theta: f64, visibility_pi: f64, visibility_tau: f64) -> Result<Self> {
        Self::new(werner(&bell_polarization(theta)?, visibility_pi)?, werner(&bell_timebin(), visibility_tau)?)
    }
}

/// Projective single-photon measurement: outcome 1 projects on `ket`,
/// outcome 2 on its orthogonal complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMeasurement {
    ket: Vector2<C64>,
}

impl LocalMeasurement {
    pub fn new(ket: Vector2<C64>) -> Result<Self> {
        let n = ket.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Structural("measurement ket must be nonzero".into()));
        }
        Ok(Self { ket: ket / C64::from(n) })
    }

    /// Linear polarizer at `angle` from horizontal.
    pub fn linear(angle: f64) -> Self {
        Self { ket: Vector2::new(C64::from(angle.cos()), C64::from(angle.sin())) }
    }

    /// Unbalanced-interferometer port 1 with relative long-arm phase `phase`:
    /// amplitude `(psi_S + e^{i phase} psi_L)/sqrt 2`.
    pub fn timebin(phase: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self { ket: Vector2::new(C64::from(s), C64::from_polar(s, -phase)) }
    }

    /// Ket for outcome 1 or 2.
    pub fn outcome_ket(&self, outcome: u8) -> Vector2<C64> {
        match outcome {
            1 => self.ket,
            _ => Vector2::new(-self.ket[1].conj(), self.ket[0].conj()),
        }
    }

    pub fn projector(&self, outcome: u8) -> Matrix2<C64> {
        let k = self.outcome_ket(outcome);
        k * k.adjoint()
    }
}

/// Measurement settings for both photons of one degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSettings {
    pub signal: LocalMeasurement,
    pub idler: LocalMeasurement,
}

/// One element of a four-outcome product POVM.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    matrix: Matrix4<C64>,
    outcome: (u8, u8),
    basis: Basis,
}

impl MeasurementOperator {
    pub fn from_matrix(matrix: Matrix4<C64>, outcome: (u8, u8), basis: Basis) -> Result<Self> {
        let herm_dev = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_dev > HERMITIAN_TOL {
            return Err(Error::Structural("measurement operator not Hermitian".into()));
        }
        let eig = matrix.symmetric_eigenvalues();
        if eig.iter().any(|&e| !(-1e-10..=1.0 + 1e-10).contains(&e)) {
            return Err(Error::Structural("measurement operator eigenvalues outside [0, 1]".into()));
        }
        Ok(Self { matrix, outcome, basis })
    }

    /// `P_k (signal) ⊗ P_l (idler)`.
    pub fn product(settings: &JointSettings, outcome: (u8, u8), basis: Basis) -> Self {
        let m = settings.signal.projector(outcome.0).kronecker(&settings.idler.projector(outcome.1));
        Self { matrix: Matrix4::from_iterator(m.iter().cloned()), outcome, basis }
    }

    /// Outcomes (1,1), (2,2), (1,2), (2,1).
    pub fn complete_set(settings: &JointSettings, basis: Basis) -> [Self; 4] {
        OUTCOMES.map(|o| Self::product(settings, o, basis))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn outcome(&self) -> (u8, u8) {
        self.outcome
    }
}

/// Detector-pair outcomes in correlator order: the first two count positively.
pub const OUTCOMES: [(u8, u8); 4] = [(1, 1), (2, 2), (1, 2), (2, 1)];

/// `tr(rho M)`, clamped to `[0, 1]`.
pub fn expectation(rho: &TwoQubitState, m: &MeasurementOperator) -> Result<f64> {
    if rho.basis != m.basis {
        return Err(Error::Structural(format!("state in {:?} basis, operator in {:?}", rho.basis, m.basis)));
    }
    let t = (rho.matrix * m.matrix).trace();
    if t.im.abs() > 1e-10 {
        return Err(Error::Structural(format!("expectation has imaginary part {}", t.im)));
    }
    Ok(t.re.clamp(0.0, 1.0))
}

/// Expectation of the product of the two ±1 outcome observables.
pub fn correlation_e(rho: &TwoQubitState, settings: &JointSettings) -> f64 {
    MeasurementOperator::complete_set(settings, rho.basis)
        .iter()
        .map(|m| {
            let p = expectation(rho, m).expect("matching basis");
            if m.outcome.0 == m.outcome.1 { p } else { -p }
        })
        .sum()
}
