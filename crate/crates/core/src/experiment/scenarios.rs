//! Calibration scans, CHSH cells, the eight-cell violation table and the
//! engine cross-check.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2, TAU};

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::afc_memory::{afc_efficiency, comb_spectrum, effective_optical_depth, thermal_od_ratio, CombSpec, PeakShape};
use crate::analyzers::{outcome_phase_offset, MeasurementSettings, PolarizationAnalyzer, PolarizationBasis, Side};
use crate::chsh_analysis::{chsh_s, correlator, fit_visibility, optimal_settings, ChshResult, CorrelatorEstimate, Dof, SettingPair, VisibilityFit};
use crate::detection_counting::{build_histogram, classify_peaks, CoincidenceHistogram, DetectorId, DetectorStreams, PeakCounts};
use crate::error::{Error, Result};
use crate::quantum_state::{C64, OUTCOMES};
use crate::rng::{split, stream_id};
use crate::source::{coherence_time_from_fwhm, default_idler_filters, default_signal_filters, heralded_spectrum_with, FrequencyGrid, HeraldingModel};

use super::config::ExperimentConfig;
use super::engine::{analytic_counts, count_outcomes, simulate_streams, Channel, Peaks, Setup};

const STREAM_PHASE_SCAN: u64 = 1;
const STREAM_HWP_SCAN: u64 = 2;
const STREAM_RAW: u64 = 3;
const STREAM_CELLS: u64 = 16;
const STREAM_CROSSCHECK: u64 = 64;
/// Upper bound on emitted pairs in a single run.
const MAX_PAIRS_PER_RUN: f64 = 5e8;
pub const CROSSCHECK_THRESHOLD_SIGMA: f64 = 4.0;

fn wrap_pi(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w <= -PI { w + TAU } else { w }
}

/// Phase offsets applied to the analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Offsets {
    pub theta_rad: f64,
    pub phase_sum_offset_rad: f64,
}

impl Offsets {
    /// The configured ground truth.
    pub fn truth(cfg: &ExperimentConfig) -> Self {
        Self { theta_rad: cfg.source.bell_phase_theta_rad, phase_sum_offset_rad: cfg.analyzers.phase_sum_offset_rad }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Phase,
    Hwp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub setting_rad: f64,
    pub counts: u64,
    pub expected_counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scan {
    pub kind: ScanKind,
    pub channel: Channel,
    pub fit_frequency: f64,
    pub point_duration_s: f64,
    pub points: Vec<ScanPoint>,
    pub fit: VisibilityFit,
}

/// Channel used for calibration: transmitted photons unless the memory
/// transmits nothing.
pub fn calibration_channel(setup: &Setup) -> Channel {
    if setup.memory.transmission > 0.0 { Channel::Transmitted } else { Channel::Stored }
}

fn run_scan(
    setup: &Setup,
    kind: ScanKind,
    channel: Channel,
    points: usize,
    duration_s: f64,
    seed: u64,
    make: impl Fn(f64) -> Result<MeasurementSettings> + Sync,
) -> Result<Scan> {
    let (period, frequency, stream, peaks) = match kind {
        ScanKind::Phase => (TAU, 1.0, STREAM_PHASE_SCAN, Peaks::Central),
        ScanKind::Hwp => (FRAC_PI_2, 4.0, STREAM_HWP_SCAN, Peaks::All),
    };
    let pts: Vec<ScanPoint> = (0..points)
        .into_par_iter()
        .map(|k| {
            let x = period * k as f64 / points as f64;
            let settings = make(x)?;
            let mut rng = split(seed, stream_id(stream, k as u64));
            let streams = simulate_streams(setup, &settings, duration_s, &mut rng)?;
            let mc = count_outcomes(setup, &streams, channel, peaks);
            let an = analytic_counts(setup, &settings, duration_s, channel, peaks);
            let (counts, expected) = match kind {
                ScanKind::Phase => (mc.iter().sum(), an.iter().sum()),
                ScanKind::Hwp => (mc[0], an[0]),
            };
            Ok(ScanPoint { setting_rad: x, counts, expected_counts: expected })
        })
        .collect::<Result<_>>()?;
    let data: Vec<(f64, f64)> = pts.iter().map(|p| (p.setting_rad, p.counts as f64)).collect();
    let fit = fit_visibility(&data, frequency)?;
    Ok(Scan { kind, channel, fit_frequency: frequency, point_duration_s: duration_s, points: pts, fit })
}

/// Idler interferometer phase scan with both polarization analyzers on H/V,
/// central peak, all four detector pairs.
pub fn phase_scan(cfg: &ExperimentConfig, setup: &Setup, seed: u64, channel: Channel) -> Result<Scan> {
    run_scan(setup, ScanKind::Phase, channel, cfg.run.scan_points, cfg.run.scan_point_duration_s, seed, |x| {
        setup.settings(PolarizationAnalyzer::hv(), PolarizationAnalyzer::hv(), 0.0, x)
    })
}

/// Signal HWP scan behind a QWP at 45° with the idler projected on `|+>`,
/// detectors D1s/D1i, all three peaks.
pub fn hwp_scan(cfg: &ExperimentConfig, setup: &Setup, seed: u64, channel: Channel) -> Result<Scan> {
    let idler = PolarizationAnalyzer::plus_minus(Side::Idler);
    run_scan(setup, ScanKind::Hwp, channel, cfg.run.scan_points, cfg.run.scan_point_duration_s, seed, |h| {
        setup.settings(PolarizationAnalyzer::new(FRAC_PI_4, h, PolarizationBasis::Custom)?, idler, 0.0, 0.0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub theta_rad: f64,
    pub sigma_theta_rad: f64,
    pub phase_sum_offset_rad: f64,
    pub sigma_phase_sum_offset_rad: f64,
    pub channel: Channel,
    pub phase_scan: Scan,
    pub hwp_scan: Scan,
}

impl Calibration {
    pub fn offsets(&self) -> Offsets {
        Offsets { theta_rad: self.theta_rad, phase_sum_offset_rad: self.phase_sum_offset_rad }
    }
}

/// Recovers the interferometer phase-sum offset from the fringe
/// `1 + V cos(φi + φ0)` and the Bell phase from `1 + V cos(4h − (π/2 − θ))`.
pub fn calibrate(cfg: &ExperimentConfig, seed: u64) -> Result<Calibration> {
    let setup = Setup::from_config(cfg)?;
    calibrate_with(cfg, &setup, seed)
}

pub fn calibrate_with(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> Result<Calibration> {
    let channel = calibration_channel(setup);
    let ps = phase_scan(cfg, setup, seed, channel)?;
    let hs = hwp_scan(cfg, setup, seed, channel)?;
    Ok(Calibration {
        theta_rad: wrap_pi(FRAC_PI_2 - hs.fit.phase_offset),
        sigma_theta_rad: hs.fit.sigma_phase,
        phase_sum_offset_rad: wrap_pi(-ps.fit.phase_offset),
        sigma_phase_sum_offset_rad: ps.fit.sigma_phase,
        channel,
        phase_scan: ps,
        hwp_scan: hs,
    })
}

/// Basis held fixed on the other degree of freedom during a CHSH run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedBasis {
    /// Phase sum 0.
    Tau1,
    /// Phase sum π/4.
    Tau2,
    /// {H, V}
    Pi1,
    /// {+, −}
    Pi2,
}

impl FixedBasis {
    pub fn label(self) -> &'static str {
        match self {
            FixedBasis::Tau1 => "tau1",
            FixedBasis::Tau2 => "tau2",
            FixedBasis::Pi1 => "pi1",
            FixedBasis::Pi2 => "pi2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CellSpec {
    pub dof: Dof,
    pub fixed_basis: FixedBasis,
    pub channel: Channel,
}

impl CellSpec {
    pub fn label(&self) -> String {
        let d = match self.dof {
            Dof::Polarization => "pi",
            Dof::Timebin => "tau",
        };
        format!("{d}/{}/{}", self.fixed_basis.label(), self.channel.label())
    }
}

/// Both CHSH runs of each degree of freedom in each fixed basis, for
/// transmitted and stored photons.
pub fn table1_cells() -> Vec<CellSpec> {
    let mut v = Vec::new();
    for channel in [Channel::Transmitted, Channel::Stored] {
        for (dof, fixed) in [(Dof::Polarization, FixedBasis::Tau1), (Dof::Polarization, FixedBasis::Tau2), (Dof::Timebin, FixedBasis::Pi1), (Dof::Timebin, FixedBasis::Pi2)] {
            v.push(CellSpec { dof, fixed_basis: fixed, channel });
        }
    }
    v
}

/// One run per polarization correlator; four port-flip runs per time-bin
/// correlator, run `k` measuring outcome pair `OUTCOMES[k]`.
fn correlator_runs(setup: &Setup, cell: &CellSpec, pair: &SettingPair, offsets: &Offsets) -> Result<Vec<MeasurementSettings>> {
    match cell.dof {
        Dof::Polarization => {
            let sig = PolarizationAnalyzer::compensated_signal(pair.signal, offsets.theta_rad)?;
            let idl = PolarizationAnalyzer::linear(pair.idler);
            let phi_s = if cell.fixed_basis == FixedBasis::Tau2 { FRAC_PI_4 } else { 0.0 };
            Ok(vec![setup.settings(sig, idl, phi_s, -offsets.phase_sum_offset_rad)?])
        }
        Dof::Timebin => {
            let (sig, idl) = if cell.fixed_basis == FixedBasis::Pi2 {
                let s = C64::from(FRAC_1_SQRT_2);
                let mut sig = PolarizationAnalyzer::for_target(Side::Signal, Vector2::new(s, C64::from_polar(FRAC_1_SQRT_2, offsets.theta_rad)))?;
                sig.basis_label = PolarizationBasis::Pi2;
                (sig, PolarizationAnalyzer::plus_minus(Side::Idler))
            } else {
                (PolarizationAnalyzer::hv(), PolarizationAnalyzer::hv())
            };
            OUTCOMES
                .iter()
                .map(|&(m, n)| setup.settings(sig, idl, pair.signal + outcome_phase_offset(m), pair.idler + outcome_phase_offset(n)))
                .collect()
        }
    }
}

fn peaks_for(dof: Dof) -> Peaks {
    match dof {
        Dof::Polarization => Peaks::All,
        Dof::Timebin => Peaks::Central,
    }
}

/// Maps per-run detector-pair counts to `(R11, R22, R12, R21)`.
fn fold_runs<T: Copy + Default + std::ops::AddAssign + std::iter::Sum>(dof: Dof, runs: &[[T; 4]]) -> [T; 4] {
    match dof {
        Dof::Polarization => runs[0],
        Dof::Timebin => {
            let mut out = [T::default(); 4];
            for (k, r) in runs.iter().enumerate() {
                out[k] = r.iter().copied().sum();
            }
            out
        }
    }
}

fn setting_pairs(cell: &CellSpec, offsets: &Offsets) -> [SettingPair; 4] {
    match cell.dof {
        Dof::Polarization => optimal_settings(Dof::Polarization, 0.0),
        Dof::Timebin => optimal_settings(Dof::Timebin, offsets.phase_sum_offset_rad),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingRecord {
    pub label: String,
    pub signal_setting_rad: f64,
    pub idler_setting_rad: f64,
    /// Acquisition time of each run of the setting.
    pub run_duration_s: f64,
    pub runs: usize,
    pub counts: [u64; 4],
    pub expected_counts: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub dof: Dof,
    pub fixed_basis: FixedBasis,
    pub channel: Channel,
    pub settings: Vec<SettingRecord>,
    /// Absent when a setting has no coincidences.
    pub chsh: Option<ChshResult>,
    /// CHSH of the expected counts, with errors at the expected statistics.
    pub analytic_chsh: ChshResult,
    /// `2√2·V` for the degree of freedom.
    pub ideal_s: f64,
    pub under_sampled: bool,
    pub coincidences: u64,
    pub coincidence_rate_hz: f64,
}

fn expected_estimate(counts: [f64; 4]) -> CorrelatorEstimate {
    let plus = counts[0] + counts[1];
    let minus = counts[2] + counts[3];
    let n = plus + minus;
    let (e, sigma_e) = if n > 0.0 { ((plus - minus) / n, (4.0 * plus * minus / (n * n * n)).sqrt()) } else { (0.0, 0.0) };
    CorrelatorEstimate { counts: counts.map(|c| c.round() as u64), e, sigma_e }
}

struct SettingJob<'a> {
    cell_index: usize,
    setting_index: usize,
    pair: SettingPair,
    analytic_runs: Vec<MeasurementSettings>,
    mc_runs: Vec<MeasurementSettings>,
    cell: &'a CellSpec,
}

/// Statistics and RNG streams of a batch of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Acquisition {
    pub seed: u64,
    /// Expected coincidences per setting.
    pub target: u64,
    /// First major stream id; cell `k` uses `stream_base + k`.
    pub stream_base: u64,
}

/// Runs the cells; each setting gets its own RNG stream and an acquisition
/// time targeting the expected coincidence count.
pub fn run_cells(cfg: &ExperimentConfig, setup: &Setup, mc_setup: &Setup, cells: &[CellSpec], offsets: &Offsets, acq: Acquisition) -> Result<Vec<CellResult>> {
    let Acquisition { seed, target, stream_base } = acq;
    let mut jobs = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for (si, pair) in setting_pairs(cell, offsets).into_iter().enumerate() {
            jobs.push(SettingJob {
                cell_index: ci,
                setting_index: si,
                pair,
                analytic_runs: correlator_runs(setup, cell, &pair, offsets)?,
                mc_runs: correlator_runs(mc_setup, cell, &pair, offsets)?,
                cell,
            });
        }
    }
    let records: Vec<(usize, SettingRecord, bool)> = jobs
        .par_iter()
        .map(|job| {
            let peaks = peaks_for(job.cell.dof);
            let channel = job.cell.channel;
            let unit: Vec<[f64; 4]> = job.analytic_runs.iter().map(|s| analytic_counts(setup, s, 1.0, channel, peaks)).collect();
            let rate: f64 = unit.iter().flatten().sum();
            let mut duration = if rate > 0.0 { target as f64 / rate } else { 0.0 };
            let max_duration = MAX_PAIRS_PER_RUN / setup.pair_rate_hz.max(1e-300);
            let capped = duration > max_duration;
            duration = duration.min(max_duration);
            let expected = fold_runs(job.cell.dof, &unit.iter().map(|u| u.map(|x| x * duration)).collect::<Vec<_>>());
            let mut mc_runs = Vec::with_capacity(job.mc_runs.len());
            for (ri, s) in job.mc_runs.iter().enumerate() {
                let stream = stream_id(stream_base + job.cell_index as u64, (job.setting_index * 4 + ri) as u64);
                let mut rng = split(seed, stream);
                let streams = simulate_streams(mc_setup, s, duration, &mut rng)?;
                mc_runs.push(count_outcomes(mc_setup, &streams, channel, peaks));
            }
            let counts = fold_runs(job.cell.dof, &mc_runs);
            let rec = SettingRecord {
                label: job.pair.label.to_string(),
                signal_setting_rad: job.pair.signal,
                idler_setting_rad: job.pair.idler,
                run_duration_s: duration,
                runs: job.mc_runs.len(),
                counts,
                expected_counts: expected,
            };
            Ok((job.cell_index, rec, capped))
        })
        .collect::<Result<_>>()?;

    let min = cfg.run.min_coincidences_per_setting;
    cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let recs: Vec<&(usize, SettingRecord, bool)> = records.iter().filter(|r| r.0 == ci).collect();
            let settings: Vec<SettingRecord> = recs.iter().map(|r| r.1.clone()).collect();
            let capped = recs.iter().any(|r| r.2);
            let totals: Vec<u64> = settings.iter().map(|s| s.counts.iter().sum()).collect();
            let under_sampled = capped || totals.iter().any(|&t| t < min);
            let estimates: Option<Vec<CorrelatorEstimate>> = settings.iter().map(|s| correlator(s.counts).ok()).collect();
            let chsh = estimates.map(|e| chsh_s([e[0], e[1], e[2], e[3]]));
            let an: Vec<CorrelatorEstimate> = settings.iter().map(|s| expected_estimate(s.expected_counts)).collect();
            let time: f64 = settings.iter().map(|s| s.run_duration_s * s.runs as f64).sum();
            let coincidences: u64 = totals.iter().sum();
            let v = match cell.dof {
                Dof::Polarization => cfg.source.visibility_pi,
                Dof::Timebin => cfg.source.visibility_tau,
            };
            Ok(CellResult {
                dof: cell.dof,
                fixed_basis: cell.fixed_basis,
                channel: cell.channel,
                settings,
                chsh,
                analytic_chsh: chsh_s([an[0], an[1], an[2], an[3]]),
                ideal_s: 2.0 * SQRT_2 * v,
                under_sampled,
                coincidences,
                coincidence_rate_hz: if time > 0.0 { coincidences as f64 / time } else { 0.0 },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub calibration: Calibration,
    pub cells: Vec<CellResult>,
}

/// Calibrates, then runs the eight CHSH cells at the configured target.
pub fn run_table1(cfg: &ExperimentConfig, seed: u64) -> Result<Table1Report> {
    let setup = Setup::from_config(cfg)?;
    let calibration = calibrate_with(cfg, &setup, seed)?;
    let cells = run_cells(cfg, &setup, &setup, &table1_cells(), &calibration.offsets(), Acquisition { seed, target: cfg.run.target_coincidences_per_setting, stream_base: STREAM_CELLS })?;
    Ok(Table1Report { calibration, cells })
}

/// Cells of the `chsh` scenario: each degree of freedom in its first fixed
/// basis, transmitted and stored.
pub fn chsh_cells() -> Vec<CellSpec> {
    let mut v = Vec::new();
    for channel in [Channel::Transmitted, Channel::Stored] {
        v.push(CellSpec { dof: Dof::Polarization, fixed_basis: FixedBasis::Tau1, channel });
        v.push(CellSpec { dof: Dof::Timebin, fixed_basis: FixedBasis::Pi1, channel });
    }
    v
}

pub fn run_chsh(cfg: &ExperimentConfig, seed: u64) -> Result<Table1Report> {
    let setup = Setup::from_config(cfg)?;
    let calibration = calibrate_with(cfg, &setup, seed)?;
    let cells = run_cells(cfg, &setup, &setup, &chsh_cells(), &calibration.offsets(), Acquisition { seed, target: cfg.run.target_coincidences_per_setting, stream_base: STREAM_CELLS })?;
    Ok(Table1Report { calibration, cells })
}

/// Deliberate differences between the Monte Carlo and analytic engines.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EngineFault {
    /// Signal long-arm birefringence seen only by the Monte Carlo engine.
    pub mc_signal_birefringence_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckEntry {
    pub cell: String,
    pub setting: String,
    pub e_mc: f64,
    pub e_analytic: f64,
    pub sigma_e: f64,
    pub deviation_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub entries: Vec<CrosscheckEntry>,
    pub max_deviation_sigma: f64,
    pub threshold_sigma: f64,
    pub passed: bool,
}

pub fn crosscheck(cfg: &ExperimentConfig, seed: u64) -> Result<CrosscheckReport> {
    crosscheck_with(cfg, seed, &EngineFault::default())
}

/// Compares Monte Carlo and analytic correlators for all sixteen settings
/// of the `chsh` cells at the true offsets.
pub fn crosscheck_with(cfg: &ExperimentConfig, seed: u64, fault: &EngineFault) -> Result<CrosscheckReport> {
    let setup = Setup::from_config(cfg)?;
    let mut mc_setup = setup.clone();
    if let Some(eps) = fault.mc_signal_birefringence_rad {
        mc_setup.signal_birefringence_rad = eps;
    }
    let offsets = Offsets::truth(cfg);
    let cells = chsh_cells();
    let results = run_cells(cfg, &setup, &mc_setup, &cells, &offsets, Acquisition { seed, target: cfg.run.target_coincidences_per_setting, stream_base: STREAM_CROSSCHECK })?;
    let mut entries = Vec::new();
    for (cell, res) in cells.iter().zip(&results) {
        for s in &res.settings {
            let an = expected_estimate(s.expected_counts);
            let (e_mc, sigma) = match correlator(s.counts) {
                Ok(c) if c.sigma_e > 0.0 => (c.e, c.sigma_e),
                Ok(c) => (c.e, an.sigma_e),
                Err(_) => (f64::NAN, an.sigma_e),
            };
            let dev = if e_mc.is_nan() {
                f64::INFINITY
            } else if sigma > 0.0 {
                (e_mc - an.e).abs() / sigma
            } else if e_mc == an.e {
                0.0
            } else {
                f64::INFINITY
            };
            entries.push(CrosscheckEntry { cell: cell.label(), setting: s.label.clone(), e_mc, e_analytic: an.e, sigma_e: sigma, deviation_sigma: dev });
        }
    }
    let max = entries.iter().map(|e| e.deviation_sigma).fold(0.0, f64::max);
    Ok(CrosscheckReport { entries, max_deviation_sigma: max, threshold_sigma: CROSSCHECK_THRESHOLD_SIGMA, passed: max < CROSSCHECK_THRESHOLD_SIGMA })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub peak_shape: PeakShape,
    pub efficiency: f64,
    pub efficiency_gaussian: f64,
    pub efficiency_square: f64,
    pub transmission: f64,
    pub loss: f64,
    pub storage_time_s: f64,
    pub heralded_fwhm_hz: f64,
    pub heralded_fwhm_transmission_product_hz: f64,
    pub coherence_time_s: f64,
    pub thermal_od_ratio: f64,
    pub sandwich_mean_od: f64,
    pub sandwich_variation_fraction: f64,
}

pub fn efficiency_report(cfg: &ExperimentConfig) -> Result<EfficiencyReport> {
    let comb = cfg.comb_spec();
    let memory = cfg.memory_model()?;
    let shaped = |shape| afc_efficiency(&CombSpec { peak_shape: shape, ..comb.clone() });
    let grid = FrequencyGrid::symmetric(300e9, 2_000_001);
    let (sig, idl) = (default_signal_filters(), default_idler_filters());
    let fwhm = heralded_spectrum_with(HeraldingModel::CoherenceTimeSum, &sig, &idl, &grid)?.fwhm_hz;
    let product = heralded_spectrum_with(HeraldingModel::TransmissionProduct, &sig, &idl, &grid)?.fwhm_hz;
    let sandwich = cfg.sandwich();
    let ods: Vec<f64> = (0..360).map(|k| effective_optical_depth(&sandwich, (k as f64).to_radians())).collect();
    let mean = ods.iter().sum::<f64>() / ods.len() as f64;
    let (lo, hi) = ods.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(EfficiencyReport {
        peak_shape: comb.peak_shape,
        efficiency: memory.efficiency,
        efficiency_gaussian: shaped(PeakShape::Gaussian),
        efficiency_square: shaped(PeakShape::Square),
        transmission: memory.transmission,
        loss: memory.loss(),
        storage_time_s: memory.storage_time_s,
        heralded_fwhm_hz: fwhm,
        heralded_fwhm_transmission_product_hz: product,
        coherence_time_s: coherence_time_from_fwhm(fwhm)?,
        thermal_od_ratio: thermal_od_ratio(cfg.thermal.zeeman_splitting_ghz * 1e9, cfg.thermal.temperature_k)?,
        sandwich_mean_od: mean,
        sandwich_variation_fraction: (hi - lo) / mean,
    })
}

/// Comb optical depth on a 0.25 MHz grid spanning 1.2 times the bandwidth.
pub fn comb_profile(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    let comb = cfg.comb_spec();
    let half = 0.6 * comb.total_bandwidth_hz;
    comb_spectrum(&comb, &FrequencyGrid::with_step(-half, half, 0.25e6))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    pub settings: MeasurementSettings,
    pub duration_s: f64,
    pub streams: DetectorStreams,
    /// D1s − D1i differences.
    pub histogram: CoincidenceHistogram,
    pub transmitted_peaks: PeakCounts,
    pub stored_peaks: PeakCounts,
}

/// D1s/D1i histogram and peak integrals of a click record. Stored peaks are
/// integrated on the histogram shifted by the storage time.
pub fn histogram_of(cfg: &ExperimentConfig, setup: &Setup, streams: &DetectorStreams) -> Result<(CoincidenceHistogram, PeakCounts, PeakCounts)> {
    let span = cfg.counting.histogram_span_ns * 1e-9;
    let bin = cfg.counting.bin_width_ns * 1e-9;
    let s1 = streams.get(DetectorId::D1S);
    let i1 = streams.get(DetectorId::D1I);
    let hist = build_histogram(s1, i1, span, bin, setup.delay_s)?;
    let transmitted = classify_peaks(&build_histogram(s1, i1, 4.0 * setup.delay_s + 4.0 * bin, bin, setup.delay_s)?, setup.window_s)?;
    let shifted: Vec<f64> = s1.iter().map(|t| t - setup.memory.storage_time_s).collect();
    let stored = classify_peaks(&build_histogram(&shifted, i1, 4.0 * setup.delay_s + 4.0 * bin, bin, setup.delay_s)?, setup.window_s)?;
    Ok((hist, transmitted, stored))
}

/// Raw click record with the analyzers on H/V and both interferometer
/// phases at 0.
pub fn simulate_raw(cfg: &ExperimentConfig, seed: u64) -> Result<RawRun> {
    let setup = Setup::from_config(cfg)?;
    let settings = setup.settings(PolarizationAnalyzer::hv(), PolarizationAnalyzer::hv(), 0.0, 0.0)?;
    let mut rng = split(seed, stream_id(STREAM_RAW, 0));
    let streams = simulate_streams(&setup, &settings, cfg.run.duration_s, &mut rng)?;
    let (histogram, transmitted_peaks, stored_peaks) = histogram_of(cfg, &setup, &streams)?;
    Ok(RawRun { settings, duration_s: cfg.run.duration_s, streams, histogram, transmitted_peaks, stored_peaks })
}

/// Guard used by the CLI for the `crosscheck` exit status.
pub fn require_pass(report: &CrosscheckReport) -> Result<()> {
    if report.passed {
        Ok(())
    } else {
        Err(Error::Fit(format!(
            "engine cross-check failed: max deviation {:.2} sigma exceeds {}",
            report.max_deviation_sigma, report.threshold_sigma
        )))
    }
}
