//! Monte Carlo and analytic engines for one measurement setting.
//!
//! The Monte Carlo engine emits pairs as a Poisson process, sends each signal
//! photon through the memory, samples analyzer outcomes, applies detector
//! efficiency and dark counts, and counts coincidences in time-difference
//! windows. The analytic engine evaluates the expected value of the same
//! counts from the outcome table, with accidentals from the singles rates.

use std::sync::Arc;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::afc_memory::{Disposition, MemoryModel};
use crate::analyzers::{DetectorId, FransonSampler, MeasurementSettings, PolarizationAnalyzer, Side, TimeBinAnalyzer};
use crate::detection_counting::{count_coincidences, detect, DetectorModel, DetectorStreams, PhotonArrival};
use crate::error::Result;
use crate::quantum_state::{HyperState, OUTCOMES};
use crate::rng::SimRng;

use super::config::ExperimentConfig;

/// Which signal photons a coincidence window selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Transmitted,
    Stored,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Transmitted => "transmitted",
            Channel::Stored => "stored",
        }
    }
}

/// Peaks entering a count: all three, or the central one only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Peaks {
    All,
    Central,
}

/// Everything the engines need, resolved from a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub pair_rate_hz: f64,
    pub state: Arc<HyperState>,
    pub memory: MemoryModel,
    pub detectors: Vec<DetectorModel>,
    pub delay_s: f64,
    pub window_s: f64,
    pub signal_birefringence_rad: f64,
    pub idler_birefringence_rad: f64,
    /// Static phase added to every phase sum, unknown to the analysis.
    pub phase_sum_offset_rad: f64,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let source = cfg.source_config();
        Ok(Self {
            pair_rate_hz: source.pair_rate_hz(),
            state: Arc::new(source.hyperstate()?),
            memory: cfg.memory_model()?,
            detectors: cfg.detector_models(),
            delay_s: cfg.delay_s(),
            window_s: cfg.window_s(),
            signal_birefringence_rad: cfg.analyzers.signal_birefringence_rad,
            idler_birefringence_rad: cfg.analyzers.idler_birefringence_rad,
            phase_sum_offset_rad: cfg.analyzers.phase_sum_offset_rad,
        })
    }

    fn detector(&self, id: DetectorId) -> &DetectorModel {
        self.detectors.iter().find(|d| d.label == id).expect("all four detectors configured")
    }

    pub fn efficiency(&self, id: DetectorId) -> f64 {
        self.detector(id).efficiency
    }

    /// Analyzer settings for nominal interferometer phases in radians. The
    /// static offset is carried by the idler interferometer.
    pub fn settings(&self, signal_pol: PolarizationAnalyzer, idler_pol: PolarizationAnalyzer, phi_s: f64, phi_i: f64) -> Result<MeasurementSettings> {
        MeasurementSettings::new(
            TimeBinAnalyzer::new(self.delay_s, phi_s, self.signal_birefringence_rad)?,
            TimeBinAnalyzer::new(self.delay_s, phi_i + self.phase_sum_offset_rad, self.idler_birefringence_rad)?,
            signal_pol,
            idler_pol,
        )
    }

    pub fn channel_delay(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Transmitted => 0.0,
            Channel::Stored => self.memory.storage_time_s,
        }
    }

    pub fn channel_probability(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Transmitted => self.memory.transmission,
            Channel::Stored => self.memory.efficiency,
        }
    }

    /// Centres of the signal − idler windows.
    pub fn window_centers(&self, channel: Channel, peaks: Peaks) -> Vec<f64> {
        let base = self.channel_delay(channel);
        match peaks {
            Peaks::All => vec![base - self.delay_s, base, base + self.delay_s],
            Peaks::Central => vec![base],
        }
    }

    /// Fraction of true coincidences inside a window given Gaussian jitter.
    fn window_acceptance(&self, signal: DetectorId, idler: DetectorId) -> f64 {
        let sigma = (self.detector(signal).jitter_s.powi(2) + self.detector(idler).jitter_s.powi(2)).sqrt();
        if sigma > 0.0 {
            erf(0.5 * self.window_s / (sigma * std::f64::consts::SQRT_2))
        } else {
            1.0
        }
    }
}

fn detector_pair(outcome: (u8, u8)) -> (DetectorId, DetectorId) {
    (DetectorId { side: Side::Signal, index: outcome.0 }, DetectorId { side: Side::Idler, index: outcome.1 })
}

/// Photon arrivals of a run, before detection.
pub fn simulate_arrivals(setup: &Setup, settings: &MeasurementSettings, duration_s: f64, rng: &mut SimRng) -> Vec<PhotonArrival> {
    let sampler = FransonSampler::new(&setup.state, settings);
    let mut out = Vec::new();
    if setup.pair_rate_hz <= 0.0 || duration_s <= 0.0 {
        return out;
    }
    let gap = Exp::new(setup.pair_rate_hz).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= duration_s {
            break;
        }
        let memory = setup.memory.apply(rng);
        let j = sampler.sample_joint(rng);
        if memory.disposition != Disposition::Lost {
            if let Some(d) = j.detector(Side::Signal) {
                out.push(PhotonArrival { detector: d, time_s: t + sampler.offset(j.signal_path) + memory.release_delay_s });
            }
        }
        if let Some(d) = j.detector(Side::Idler) {
            out.push(PhotonArrival { detector: d, time_s: t + sampler.offset(j.idler_path) });
        }
    }
    out.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    out
}

/// Detector clicks of a run.
pub fn simulate_streams(setup: &Setup, settings: &MeasurementSettings, duration_s: f64, rng: &mut SimRng) -> Result<DetectorStreams> {
    let arrivals = simulate_arrivals(setup, settings, duration_s, rng);
    detect(&arrivals, &setup.detectors, duration_s, rng)
}

/// Coincidences `(R11, R22, R12, R21)` summed over the selected windows.
pub fn count_outcomes(setup: &Setup, streams: &DetectorStreams, channel: Channel, peaks: Peaks) -> [u64; 4] {
    let centers = setup.window_centers(channel, peaks);
    OUTCOMES.map(|o| {
        let (s, i) = detector_pair(o);
        centers.iter().map(|&c| count_coincidences(streams.get(s), streams.get(i), c, setup.window_s)).sum()
    })
}

/// Monte Carlo counts for one setting.
pub fn mc_counts(setup: &Setup, settings: &MeasurementSettings, duration_s: f64, channel: Channel, peaks: Peaks, rng: &mut SimRng) -> Result<[u64; 4]> {
    let streams = simulate_streams(setup, settings, duration_s, rng)?;
    Ok(count_outcomes(setup, &streams, channel, peaks))
}

/// Mean singles rate of every detector.
pub fn singles_rates(setup: &Setup, sampler: &FransonSampler) -> [f64; 4] {
    let signal_reach = setup.memory.efficiency + setup.memory.transmission;
    DetectorId::ALL.map(|id| {
        let p: f64 = sampler.entries().iter().filter(|(j, _)| j.detector(id.side) == Some(id)).map(|e| e.1).sum();
        let reach = if id.side == Side::Signal { signal_reach } else { 1.0 };
        setup.pair_rate_hz * p * reach * setup.efficiency(id) + setup.detector(id).dark_count_rate_hz
    })
}

/// Expected true and accidental coincidences `(R11, R22, R12, R21)`.
pub fn analytic_counts(setup: &Setup, settings: &MeasurementSettings, duration_s: f64, channel: Channel, peaks: Peaks) -> [f64; 4] {
    let sampler = FransonSampler::new(&setup.state, settings);
    let singles = singles_rates(setup, &sampler);
    let single = |id: DetectorId| singles[DetectorId::ALL.iter().position(|&d| d == id).expect("known detector")];
    let centers = setup.window_centers(channel, peaks);
    let delay = setup.channel_delay(channel);
    let p_channel = setup.channel_probability(channel);
    let tol = 0.5 * setup.window_s;
    OUTCOMES.map(|o| {
        let (s, i) = detector_pair(o);
        let joint: f64 = sampler
            .entries()
            .iter()
            .filter(|(j, _)| j.detector(Side::Signal) == Some(s) && j.detector(Side::Idler) == Some(i))
            .filter(|(j, _)| {
                let diff = sampler.offset(j.signal_path) + delay - sampler.offset(j.idler_path);
                centers.iter().any(|c| (diff - c).abs() <= tol)
            })
            .map(|e| e.1)
            .sum();
        let true_rate = setup.pair_rate_hz * p_channel * setup.efficiency(s) * setup.efficiency(i) * joint * setup.window_acceptance(s, i);
        let accidental = single(s) * single(i) * setup.window_s * centers.len() as f64;
        (true_rate + accidental) * duration_s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn setup() -> Setup {
        Setup::from_config(&ExperimentConfig::default()).unwrap()
    }

    #[test]
    fn window_centers_by_channel() {
        let s = setup();
        let t = s.window_centers(Channel::Transmitted, Peaks::All);
        assert!((t[0] + 5.5e-9).abs() < 1e-20 && t[1] == 0.0 && (t[2] - 5.5e-9).abs() < 1e-20);
        let st = s.window_centers(Channel::Stored, Peaks::Central);
        assert!((st[0] - 50e-9).abs() < 1e-20);
    }

    #[test]
    fn mc_matches_analytic_counts() {
        let s = setup();
        let set = s.settings(PolarizationAnalyzer::hv(), PolarizationAnalyzer::hv(), 0.0, 0.0).unwrap();
        let duration = 0.02;
        for channel in [Channel::Transmitted, Channel::Stored] {
            for peaks in [Peaks::All, Peaks::Central] {
                let mc = mc_counts(&s, &set, duration, channel, peaks, &mut seeded(5)).unwrap();
                let an = analytic_counts(&s, &set, duration, channel, peaks);
                for k in 0..4 {
                    let sd = an[k].max(1.0).sqrt();
                    assert!((mc[k] as f64 - an[k]).abs() < 4.0 * sd + 1.0, "{channel:?} {peaks:?} {k}: {} vs {}", mc[k], an[k]);
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let s = setup();
        let set = s.settings(PolarizationAnalyzer::hv(), PolarizationAnalyzer::hv(), 0.3, 0.0).unwrap();
        let a = simulate_streams(&s, &set, 1e-3, &mut seeded(9)).unwrap();
        let b = simulate_streams(&s, &set, 1e-3, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.total() > 0);
    }
}
