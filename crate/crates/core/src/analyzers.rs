//! Polarization analyzers (QWP, HWP, PBS), single-port unbalanced time-bin
//! interferometers, closed-form coincidence rates and a sampler for joint
//! path, port and polarization outcomes of a pair.
//!
//! Light passes the QWP first, then the HWP, then the PBS; PBS transmission is
//! outcome 1. Idler waveplate angles are read in a mirrored frame: an idler
//! plate at nominal angle `a` has its physical fast axis at `-a`. With QWPs
//! at 0 and a Bell phase of 0 this gives the rate law `1 ± V cos 4(θs − θi)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quantum_state::{HyperState, TwoQubitState, C64};
use crate::rng::SimRng;
use crate::source::{uniform, PairEvent};

const DELAY_MATCH_TOL_S: f64 = 1e-12;
const TARGET_FIDELITY_TOL: f64 = 1e-9;

fn rotation(a: f64) -> Matrix2<C64> {
    let (s, c) = a.sin_cos();
    Matrix2::new(C64::from(c), C64::from(s), C64::from(-s), C64::from(c))
}

/// Linear retarder with fast axis at `angle` and retardance `delta`.
pub fn retarder(angle: f64, delta: f64) -> Matrix2<C64> {
    let core = Matrix2::new(C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from_polar(1.0, delta));
    rotation(-angle) * core * rotation(angle)
}

pub fn quarter_wave_plate(angle: f64) -> Matrix2<C64> {
    retarder(angle, PI / 2.0)
}

pub fn half_wave_plate(angle: f64) -> Matrix2<C64> {
    retarder(angle, PI)
}

/// Relative phase `e^{iε}` on `|V>` picked up in the long arm.
pub fn birefringence(epsilon: f64) -> Matrix2<C64> {
    Matrix2::new(C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from_polar(1.0, epsilon))
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU { 0.0 } else { w }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Signal,
    Idler,
}

/// Interferometer arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Path {
    S,
    L,
}

/// Detector behind PBS port `index` (1 transmit, 2 reflect) on `side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectorId {
    pub side: Side,
    pub index: u8,
}

impl DetectorId {
    pub const D1S: Self = Self { side: Side::Signal, index: 1 };
    pub const D2S: Self = Self { side: Side::Signal, index: 2 };
    pub const D1I: Self = Self { side: Side::Idler, index: 1 };
    pub const D2I: Self = Self { side: Side::Idler, index: 2 };
    pub const ALL: [Self; 4] = [Self::D1S, Self::D2S, Self::D1I, Self::D2I];

    pub fn label(&self) -> &'static str {
        match (self.side, self.index) {
            (Side::Signal, 1) => "D1s",
            (Side::Signal, _) => "D2s",
            (Side::Idler, 1) => "D1i",
            (Side::Idler, _) => "D2i",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.label() == label)
            .ok_or_else(|| Error::Parse(format!("unknown detector label {label:?}")))
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Unbalanced interferometer read out at one output port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBinAnalyzer {
    pub delay_s: f64,
    /// Δφ, wrapped to `[0, 2π)`.
    pub phase_rad: f64,
    /// ε, extra phase of `|V>` in the long arm.
    pub birefringence_phase_rad: f64,
}

impl TimeBinAnalyzer {
    pub fn new(delay_s: f64, phase_rad: f64, birefringence_phase_rad: f64) -> Result<Self> {
        if !(delay_s > 0.0) || !delay_s.is_finite() {
            return Err(Error::Config(format!("interferometer delay must be positive, got {delay_s}")));
        }
        if !phase_rad.is_finite() || !birefringence_phase_rad.is_finite() {
            return Err(Error::Config("interferometer phases must be finite".into()));
        }
        Ok(Self { delay_s, phase_rad: wrap_phase(phase_rad), birefringence_phase_rad })
    }

    pub fn with_phase(&self, phase_rad: f64) -> Self {
        Self { phase_rad: wrap_phase(phase_rad), ..*self }
    }

    pub fn offset(&self, path: Path) -> f64 {
        match path {
            Path::S => 0.0,
            Path::L => self.delay_s,
        }
    }
}

/// Phase offset that makes the single used port read time-bin outcome
/// `outcome` (0 for outcome 1, π for outcome 2).
pub fn outcome_phase_offset(outcome: u8) -> f64 {
    if outcome == 2 { PI } else { 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizationBasis {
    /// {H, V}
    Pi1,
    /// {+, −}
    Pi2,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationAnalyzer {
    pub qwp_angle_rad: f64,
    pub hwp_angle_rad: f64,
    pub basis_label: PolarizationBasis,
}

impl PolarizationAnalyzer {
    pub fn new(qwp_angle_rad: f64, hwp_angle_rad: f64, basis_label: PolarizationBasis) -> Result<Self> {
        if !qwp_angle_rad.is_finite() || !hwp_angle_rad.is_finite() {
            return Err(Error::Config("waveplate angles must be finite".into()));
        }
        Ok(Self { qwp_angle_rad, hwp_angle_rad, basis_label })
    }

    /// QWP at 0 and HWP at `hwp`.
    pub fn linear(hwp_angle_rad: f64) -> Self {
        Self { qwp_angle_rad: 0.0, hwp_angle_rad, basis_label: PolarizationBasis::Custom }
    }

    pub fn hv() -> Self {
        Self { qwp_angle_rad: 0.0, hwp_angle_rad: 0.0, basis_label: PolarizationBasis::Pi1 }
    }

    /// Analyzer whose outcome-1 projection is `(|H> + |V>)/√2` (outcome 2 is `|->`).
    pub fn plus_minus(side: Side) -> Self {
        let s = C64::from(FRAC_1_SQRT_2);
        let mut a = Self::for_target(side, Vector2::new(s, s)).expect("diagonal target is reachable");
        a.basis_label = PolarizationBasis::Pi2;
        a
    }

    fn physical_angles(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Signal => (self.qwp_angle_rad, self.hwp_angle_rad),
            Side::Idler => (-self.qwp_angle_rad, -self.hwp_angle_rad),
        }
    }

    /// Jones matrix HWP·QWP acting on light entering the analyzer.
    pub fn jones(&self, side: Side) -> Matrix2<C64> {
        let (q, h) = self.physical_angles(side);
        half_wave_plate(h) * quarter_wave_plate(q)
    }

    /// Polarization ket detected at port `outcome`, i.e. `W†|k>`.
    pub fn outcome_ket(&self, side: Side, outcome: u8) -> Vector2<C64> {
        let port = if outcome == 1 { Vector2::new(C64::from(1.0), C64::from(0.0)) } else { Vector2::new(C64::from(0.0), C64::from(1.0)) };
        self.jones(side).adjoint() * port
    }

    /// Waveplate angles that send `target` to PBS port 1: the QWP is put on
    /// an axis of the polarization ellipse, which makes the light linear,
    /// and the HWP then rotates it onto H.
    pub fn for_target(side: Side, target: Vector2<C64>) -> Result<Self> {
        let norm = target.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return domain("target polarization must be a nonzero finite ket");
        }
        let t = target / C64::from(norm);
        let s1 = t[0].norm_sqr() - t[1].norm_sqr();
        let s2 = 2.0 * (t[0].conj() * t[1]).re;
        let psi = 0.5 * s2.atan2(s1);
        for q in [psi, psi + PI / 2.0] {
            let v = quarter_wave_plate(q) * t;
            // strip the global phase of the larger component
            let pivot = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
            let ph = C64::from_polar(1.0, -pivot.arg());
            let (x, y) = ((v[0] * ph).re, (v[1] * ph).re);
            let h = 0.5 * y.atan2(x);
            let w = half_wave_plate(h) * quarter_wave_plate(q);
            let fidelity = (w * t)[0].norm_sqr();
            if (fidelity - 1.0).abs() < TARGET_FIDELITY_TOL {
                let (qn, hn) = match side {
                    Side::Signal => (q, h),
                    Side::Idler => (-q, -h),
                };
                return Ok(Self { qwp_angle_rad: qn, hwp_angle_rad: hn, basis_label: PolarizationBasis::Custom });
            }
        }
        Err(Error::Fit("no waveplate setting reaches the target polarization".into()))
    }

    /// Signal analyzer measuring linear polarization at `2·hwp` once the Bell
    /// phase `theta` is compensated, so that correlations with a linear idler
    /// analyzer follow `cos 4(θs − θi)`.
    pub fn compensated_signal(hwp_angle_rad: f64, theta: f64) -> Result<Self> {
        let (s, c) = (2.0 * hwp_angle_rad).sin_cos();
        let target = Vector2::new(C64::from(c), C64::new(0.0, -1.0) * C64::from_polar(s, theta));
        Self::for_target(Side::Signal, target)
    }
}

/// Full analyzer configuration of one measurement setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    pub signal_tb: TimeBinAnalyzer,
    pub idler_tb: TimeBinAnalyzer,
    pub signal_pol: PolarizationAnalyzer,
    pub idler_pol: PolarizationAnalyzer,
}

impl MeasurementSettings {
    pub fn new(
        signal_tb: TimeBinAnalyzer,
        idler_tb: TimeBinAnalyzer,
        signal_pol: PolarizationAnalyzer,
        idler_pol: PolarizationAnalyzer,
    ) -> Result<Self> {
        let s = Self { signal_tb, idler_tb, signal_pol, idler_pol };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.signal_tb.delay_s - self.idler_tb.delay_s).abs() > DELAY_MATCH_TOL_S {
            return Err(Error::Config(format!(
                "interferometer delays differ: {:e} s vs {:e} s",
                self.signal_tb.delay_s, self.idler_tb.delay_s
            )));
        }
        Ok(())
    }

    pub fn phase_sum(&self) -> f64 {
        self.signal_tb.phase_rad + self.idler_tb.phase_rad
    }

    pub fn delay_s(&self) -> f64 {
        self.signal_tb.delay_s
    }

    pub fn timebin_analyzer(&self, side: Side) -> &TimeBinAnalyzer {
        match side {
            Side::Signal => &self.signal_tb,
            Side::Idler => &self.idler_tb,
        }
    }

    pub fn polarization_analyzer(&self, side: Side) -> &PolarizationAnalyzer {
        match side {
            Side::Signal => &self.signal_pol,
            Side::Idler => &self.idler_pol,
        }
    }
}

fn parity(outcome: (u8, u8)) -> f64 {
    if outcome.0 == outcome.1 { 1.0 } else { -1.0 }
}

/// `(1 ± V cos 4(θs − θi))/4`, `+` for equal outcomes.
pub fn rate_polarization(visibility: f64, theta_s: f64, theta_i: f64, outcome: (u8, u8)) -> f64 {
    (1.0 + parity(outcome) * visibility * (4.0 * (theta_s - theta_i)).cos()) / 4.0
}

/// `(1 + V cos(Δφs + Δφi))/2`.
pub fn rate_timebin(visibility: f64, phase_sum: f64) -> f64 {
    (1.0 + visibility * phase_sum.cos()) / 2.0
}

/// Product of the polarization and time-bin factors for linear analyzers.
pub fn rate_joint(visibility_pi: f64, visibility_tau: f64, settings: &MeasurementSettings, outcome: (u8, u8)) -> f64 {
    rate_polarization(visibility_pi, settings.signal_pol.hwp_angle_rad, settings.idler_pol.hwp_angle_rad, outcome)
        * rate_timebin(visibility_tau, settings.phase_sum())
}

/// One joint outcome of a pair at the analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointOutcome {
    pub signal_path: Path,
    pub idler_path: Path,
    /// Interferometer output port, 1 (detected) or 2 (unused).
    pub signal_port: u8,
    pub idler_port: u8,
    /// PBS port.
    pub signal_pol: u8,
    pub idler_pol: u8,
}

impl JointOutcome {
    pub fn detector(&self, side: Side) -> Option<DetectorId> {
        let (port, pol) = match side {
            Side::Signal => (self.signal_port, self.signal_pol),
            Side::Idler => (self.idler_port, self.idler_pol),
        };
        (port == 1).then_some(DetectorId { side, index: pol })
    }

    pub fn path(&self, side: Side) -> Path {
        match side {
            Side::Signal => self.signal_path,
            Side::Idler => self.idler_path,
        }
    }
}

/// Sampled result for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub signal_path: Path,
    pub idler_path: Path,
    /// `None` when the photon leaves by the unused interferometer port.
    pub signal_detector: Option<DetectorId>,
    pub idler_detector: Option<DetectorId>,
    pub signal_offset_s: f64,
    pub idler_offset_s: f64,
}

/// Marginal probability that the photon on `side` is in the short bin.
fn short_marginal(rho: &TwoQubitState, side: Side) -> f64 {
    let p = |i| rho.population(i);
    match side {
        Side::Signal => p(0) + p(1),
        Side::Idler => p(0) + p(2),
    }
    .clamp(0.0, 1.0)
}

/// Pol⊗time-bin ket (index `2·pol + bin`) detected at PBS port `k` and
/// interferometer port `m`.
fn franson_ket(pol: &PolarizationAnalyzer, tb: &TimeBinAnalyzer, side: Side, k: u8, m: u8) -> [C64; 4] {
    let w = pol.outcome_ket(side, k);
    let wl = birefringence(tb.birefringence_phase_rad).adjoint() * w;
    let sign = if m == 1 { 1.0 } else { -1.0 };
    let ph = C64::from_polar(sign * FRAC_1_SQRT_2, -tb.phase_rad);
    let s = C64::from(FRAC_1_SQRT_2);
    [w[0] * s, wl[0] * ph, w[1] * s, wl[1] * ph]
}

/// `<a b| rho |a b>` for single-photon kets `a`, `b` on a two-qubit matrix.
fn pair_probability(rho: &TwoQubitState, a: &Vector2<C64>, b: &Vector2<C64>) -> f64 {
    let v = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
    let mut acc = C64::from(0.0);
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            acc += vi.conj() * rho.element(i, j) * vj;
        }
    }
    acc.re.max(0.0)
}

/// Outcome table of a pair for fixed settings.
///
/// Each photon's arm is drawn from its time-bin marginal. If the arms match
/// (central peak) the ports and polarizations follow the joint projective
/// measurement on `ρπ ⊗ ρτ`, which carries the SS/LL interference. Otherwise
/// (satellites) the ports are fair coins and the polarization outcomes follow
/// `ρπ`, with the long-arm birefringence applied to a photon in the long arm.
#[derive(Debug, Clone)]
pub struct FransonSampler {
    entries: Vec<(JointOutcome, f64)>,
    cumulative: Vec<f64>,
    delay_s: f64,
}

impl FransonSampler {
    pub fn new(state: &HyperState, settings: &MeasurementSettings) -> Self {
        let rho_pi = &state.polarization;
        let rho_tau = &state.timebin;
        let ps = short_marginal(rho_tau, Side::Signal);
        let pi = short_marginal(rho_tau, Side::Idler);
        let p_ss = ps * pi;
        let p_ll = (1.0 - ps) * (1.0 - pi);
        let p_central = p_ss + p_ll;
        let mut entries = Vec::with_capacity(64);

        if p_central > 0.0 {
            let mut table = Vec::with_capacity(16);
            for k in 1..=2u8 {
                for m in 1..=2u8 {
                    let es = franson_ket(&settings.signal_pol, &settings.signal_tb, Side::Signal, k, m);
                    for l in 1..=2u8 {
                        for n in 1..=2u8 {
                            let ei = franson_ket(&settings.idler_pol, &settings.idler_tb, Side::Idler, l, n);
                            table.push(((k, m, l, n), central_probability(rho_pi, rho_tau, &es, &ei)));
                        }
                    }
                }
            }
            let total: f64 = table.iter().map(|t| t.1).sum();
            for ((k, m, l, n), p) in table {
                let p = if total > 0.0 { p / total } else { 0.0625 };
                for (path, weight) in [(Path::S, p_ss), (Path::L, p_ll)] {
                    entries.push((
                        JointOutcome { signal_path: path, idler_path: path, signal_port: m, idler_port: n, signal_pol: k, idler_pol: l },
                        weight * p,
                    ));
                }
            }
        }

        for (sp, ip, weight) in [(Path::S, Path::L, ps * (1.0 - pi)), (Path::L, Path::S, (1.0 - ps) * pi)] {
            if weight <= 0.0 {
                continue;
            }
            let bs = |path: Path, tb: &TimeBinAnalyzer| if path == Path::L { birefringence(tb.birefringence_phase_rad) } else { Matrix2::identity() };
            let ws = settings.signal_pol.jones(Side::Signal) * bs(sp, &settings.signal_tb);
            let wi = settings.idler_pol.jones(Side::Idler) * bs(ip, &settings.idler_tb);
            let ket = |w: &Matrix2<C64>, k: u8| {
                let e = if k == 1 { Vector2::new(C64::from(1.0), C64::from(0.0)) } else { Vector2::new(C64::from(0.0), C64::from(1.0)) };
                w.adjoint() * e
            };
            let mut pol = Vec::with_capacity(4);
            for k in 1..=2u8 {
                for l in 1..=2u8 {
                    pol.push(((k, l), pair_probability(rho_pi, &ket(&ws, k), &ket(&wi, l))));
                }
            }
            let total: f64 = pol.iter().map(|t| t.1).sum();
            for ((k, l), p) in pol {
                let p = if total > 0.0 { p / total } else { 0.25 };
                for m in 1..=2u8 {
                    for n in 1..=2u8 {
                        entries.push((
                            JointOutcome { signal_path: sp, idler_path: ip, signal_port: m, idler_port: n, signal_pol: k, idler_pol: l },
                            weight * p * 0.25,
                        ));
                    }
                }
            }
        }

        let mut acc = 0.0;
        let cumulative = entries
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Self { entries, cumulative, delay_s: settings.delay_s() }
    }

    pub fn entries(&self) -> &[(JointOutcome, f64)] {
        &self.entries
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }

    pub fn offset(&self, path: Path) -> f64 {
        match path {
            Path::S => 0.0,
            Path::L => self.delay_s,
        }
    }

    pub fn sample_joint(&self, rng: &mut SimRng) -> JointOutcome {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let u = uniform(rng) * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.entries.len() - 1);
        self.entries[i].0
    }

    pub fn sample(&self, rng: &mut SimRng) -> PathOutcome {
        let j = self.sample_joint(rng);
        PathOutcome {
            signal_path: j.signal_path,
            idler_path: j.idler_path,
            signal_detector: j.detector(Side::Signal),
            idler_detector: j.detector(Side::Idler),
            signal_offset_s: self.offset(j.signal_path),
            idler_offset_s: self.offset(j.idler_path),
        }
    }
}

/// `<es ⊗ ei| ρπ ⊗ ρτ |es ⊗ ei>` with per-photon kets indexed `2·pol + bin`.
fn central_probability(rho_pi: &TwoQubitState, rho_tau: &TwoQubitState, es: &[C64; 4], ei: &[C64; 4]) -> f64 {
    // amplitudes indexed by (pol pair, bin pair) in the two-qubit orderings
    let mut v = [[C64::from(0.0); 4]; 4];
    for ps in 0..2 {
        for pi in 0..2 {
            for ts in 0..2 {
                for ti in 0..2 {
                    v[2 * ps + pi][2 * ts + ti] = es[2 * ps + ts] * ei[2 * pi + ti];
                }
            }
        }
    }
    let mut acc = C64::from(0.0);
    for a in 0..4 {
        for b in 0..4 {
            let rp = rho_pi.element(a, b);
            if rp == C64::from(0.0) {
                continue;
            }
            for c in 0..4 {
                for d in 0..4 {
                    acc += v[a][c].conj() * rp * rho_tau.element(c, d) * v[b][d];
                }
            }
        }
    }
    acc.re.max(0.0)
}

/// Samples arms, ports and polarization outcomes of one pair.
pub fn franson_path_outcome(event: &PairEvent, settings: &MeasurementSettings, rng: &mut SimRng) -> PathOutcome {
    FransonSampler::new(&event.state, settings).sample(rng)
}
