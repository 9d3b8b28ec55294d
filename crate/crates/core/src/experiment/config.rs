//! Experiment configuration: a TOML tree with unit-suffixed keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::afc_memory::{CombSpec, CrystalSandwich, MemoryModel, PeakShape};
use crate::analyzers::{DetectorId, Side};
use crate::detection_counting::DetectorModel;
use crate::error::{Error, Result};
use crate::source::SourceConfig;

/// Shipped default parameter file.
pub const DEFAULT_TOML: &str = include_str!("../../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Simulate,
    ScanPhase,
    ScanHwp,
    Chsh,
    CombSpectrum,
    Efficiency,
    Table1,
    Crosscheck,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Simulate,
        Scenario::ScanPhase,
        Scenario::ScanHwp,
        Scenario::Chsh,
        Scenario::CombSpectrum,
        Scenario::Efficiency,
        Scenario::Table1,
        Scenario::Crosscheck,
    ];

    pub fn from_id(id: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|s| s.id() == id)
    }

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::ScanPhase => "scan-phase",
            Scenario::ScanHwp => "scan-hwp",
            Scenario::Chsh => "chsh",
            Scenario::CombSpectrum => "comb-spectrum",
            Scenario::Efficiency => "efficiency",
            Scenario::Table1 => "table1",
            Scenario::Crosscheck => "crosscheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub pair_probability_per_window: f64,
    pub coherence_time_ns: f64,
    /// Heralded photon linewidth used for the memory transmission.
    pub photon_fwhm_mhz: f64,
    /// True Bell phase of the source, recovered by calibration.
    pub bell_phase_theta_rad: f64,
    pub visibility_pi: f64,
    pub visibility_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombSection {
    pub period_mhz: f64,
    pub finesse: f64,
    pub peak_shape: PeakShape,
    pub d_peak: f64,
    pub d_background: f64,
    pub bandwidth_mhz: f64,
    pub sideband_depth_scaling: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmission_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichSection {
    pub d1: f64,
    pub d2: f64,
    pub hwp_angle_error_rad: f64,
    pub hwp_retardation_error_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub zeeman_splitting_ghz: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerSection {
    pub delay_ns: f64,
    /// True static offset of Δφs + Δφi, recovered by calibration.
    pub phase_sum_offset_rad: f64,
    pub signal_birefringence_rad: f64,
    pub idler_birefringence_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub signal_efficiency: f64,
    pub idler_efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub jitter_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingSection {
    pub window_ns: f64,
    pub bin_width_ns: f64,
    pub histogram_span_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub target_coincidences_per_setting: u64,
    /// Cells with fewer coincidences in any setting are flagged.
    pub min_coincidences_per_setting: u64,
    /// Acquisition time of the raw `simulate` run.
    pub duration_s: f64,
    pub scan_points: usize,
    pub scan_point_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceSection,
    pub comb: CombSection,
    pub sandwich: SandwichSection,
    pub thermal: ThermalSection,
    pub analyzers: AnalyzerSection,
    pub detectors: DetectorSection,
    pub counting: CountingSection,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_TOML).expect("shipped default config parses")
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.source_config().validate()?;
        positive("source.photon_fwhm_mhz", self.source.photon_fwhm_mhz)?;
        self.comb_spec().validate()?;
        self.sandwich().validate()?;
        positive("thermal.temperature_k", self.thermal.temperature_k)?;
        if !(self.thermal.zeeman_splitting_ghz >= 0.0) {
            return Err(Error::Config("thermal.zeeman_splitting_ghz must be >= 0".into()));
        }
        positive("analyzers.delay_ns", self.analyzers.delay_ns)?;
        for (k, v) in [
            ("analyzers.phase_sum_offset_rad", self.analyzers.phase_sum_offset_rad),
            ("analyzers.signal_birefringence_rad", self.analyzers.signal_birefringence_rad),
            ("analyzers.idler_birefringence_rad", self.analyzers.idler_birefringence_rad),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{k} must be finite")));
            }
        }
        for d in self.detector_models() {
            d.validate()?;
        }
        positive("counting.window_ns", self.counting.window_ns)?;
        positive("counting.bin_width_ns", self.counting.bin_width_ns)?;
        if self.counting.window_ns >= self.analyzers.delay_ns {
            return Err(Error::Config("counting.window_ns must be below the interferometer delay".into()));
        }
        if self.counting.bin_width_ns > self.analyzers.delay_ns / 10.0 {
            return Err(Error::Config("counting.bin_width_ns must be at most a tenth of the delay".into()));
        }
        if self.counting.histogram_span_ns < 4.0 * self.analyzers.delay_ns {
            return Err(Error::Config("counting.histogram_span_ns must be at least four delays".into()));
        }
        if self.run.target_coincidences_per_setting == 0 {
            return Err(Error::Config("run.target_coincidences_per_setting must be positive".into()));
        }
        if !(self.run.duration_s > 0.0 && self.run.duration_s.is_finite()) {
            return Err(Error::Config("run.duration_s must be positive".into()));
        }
        if self.run.scan_points < 6 {
            return Err(Error::Config("run.scan_points must be at least 6".into()));
        }
        positive("run.scan_point_duration_s", self.run.scan_point_duration_s)?;
        self.memory_model()?;
        Ok(())
    }

    pub fn source_config(&self) -> SourceConfig {
        SourceConfig {
            pair_probability_per_window: self.source.pair_probability_per_window,
            coherence_time_s: self.source.coherence_time_ns * 1e-9,
            duration_s: self.run.duration_s,
            bell_phase_theta_rad: self.source.bell_phase_theta_rad,
            visibility_pi: self.source.visibility_pi,
            visibility_tau: self.source.visibility_tau,
        }
    }

    pub fn comb_spec(&self) -> CombSpec {
        CombSpec {
            peak_period_hz: self.comb.period_mhz * 1e6,
            finesse: self.comb.finesse,
            peak_shape: self.comb.peak_shape,
            d_peak: self.comb.d_peak,
            d_background: self.comb.d_background,
            total_bandwidth_hz: self.comb.bandwidth_mhz * 1e6,
            sideband_depth_scaling: self.comb.sideband_depth_scaling.clone(),
        }
    }

    pub fn sandwich(&self) -> CrystalSandwich {
        CrystalSandwich {
            d1: self.sandwich.d1,
            d2: self.sandwich.d2,
            hwp_angle_error_rad: self.sandwich.hwp_angle_error_rad,
            hwp_retardation_error_rad: self.sandwich.hwp_retardation_error_rad,
        }
    }

    pub fn memory_model(&self) -> Result<MemoryModel> {
        MemoryModel::new(&self.comb_spec(), self.source.photon_fwhm_mhz * 1e6, self.comb.efficiency_override, self.comb.transmission_override)
    }

    pub fn detector_models(&self) -> Vec<DetectorModel> {
        DetectorId::ALL
            .iter()
            .map(|&label| DetectorModel {
                label,
                efficiency: if label.side == Side::Signal { self.detectors.signal_efficiency } else { self.detectors.idler_efficiency },
                dark_count_rate_hz: self.detectors.dark_count_rate_hz,
                jitter_s: self.detectors.jitter_ps * 1e-12,
            })
            .collect()
    }

    pub fn delay_s(&self) -> f64 {
        self.analyzers.delay_ns * 1e-9
    }

    pub fn window_s(&self) -> f64 {
        self.counting.window_ns * 1e-9
    }

    /// Canonical JSON with sorted keys.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_ids_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::from_id(s.id()), Some(s));
            let v: Scenario = toml::from_str::<toml::Table>(&format!("x = \"{}\"", s.id())).unwrap()["x"].clone().try_into().unwrap();
            assert_eq!(v, s);
        }
        assert_eq!(Scenario::from_id("bogus"), None);
    }

    #[test]
    fn default_parses_and_validates() {
        let c = ExperimentConfig::default();
        assert_eq!(c.source.pair_probability_per_window, 0.015);
        assert_eq!(c.comb.period_mhz, 20.0);
        assert_eq!(c.analyzers.delay_ns, 5.5);
        assert!(c.run.scenario.is_none());
    }

    #[test]
    fn round_trip_and_digest() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.digest(), back.digest());
        assert_eq!(c.digest().len(), 64);
    }

    #[test]
    fn digest_tracks_every_field() {
        let base = ExperimentConfig::default();
        type Edit = Box<dyn Fn(&mut ExperimentConfig)>;
        let edits: Vec<Edit> = vec![
            Box::new(|c| c.source.visibility_pi = 0.95),
            Box::new(|c| c.comb.d_peak = 1.9),
            Box::new(|c| c.comb.efficiency_override = Some(0.05)),
            Box::new(|c| c.sandwich.d1 = 0.9),
            Box::new(|c| c.thermal.temperature_k = 3.0),
            Box::new(|c| c.analyzers.signal_birefringence_rad = 0.1),
            Box::new(|c| c.detectors.dark_count_rate_hz = 10.0),
            Box::new(|c| c.counting.window_ns = 0.3),
            Box::new(|c| c.run.seed = 99),
            Box::new(|c| c.run.scenario = Some(Scenario::Chsh)),
        ];
        for e in edits {
            let mut c = base.clone();
            e(&mut c);
            assert_ne!(c.digest(), base.digest());
        }
        // formatting and key order in the source text do not matter
        let reordered = DEFAULT_TOML.replace("seed = 1\n", "seed = 1 # same\n");
        assert_eq!(ExperimentConfig::from_toml_str(&reordered).unwrap().digest(), base.digest());
    }

    #[test]
    fn validation_errors() {
        let text = DEFAULT_TOML.replace("visibility_pi = 0.96", "visibility_pi = 1.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let text = DEFAULT_TOML.replace("[run]", "[run]\nbogus_key = 1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let mut c = ExperimentConfig::default();
        c.comb.efficiency_override = Some(0.7);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.counting.window_ns = 6.0;
        assert!(c.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn digest_changes_iff_fields_change(
            v in 0.5f64..1.0, d in 0.3f64..1.2, w in 0.05f64..1.0, seed in 0u64..4,
            v2 in 0.5f64..1.0, d2 in 0.3f64..1.2, w2 in 0.05f64..1.0, seed2 in 0u64..4,
        ) {
            let make = |v, d, w, seed| {
                let mut c = ExperimentConfig::default();
                c.source.visibility_tau = v;
                c.sandwich.d1 = d;
                c.counting.window_ns = w;
                c.run.seed = seed;
                c
            };
            let (a, b) = (make(v, d, w, seed), make(v2, d2, w2, seed2));
            proptest::prop_assert_eq!(a == b, a.digest() == b.digest());
            let back = ExperimentConfig::from_toml_str(&a.to_toml_string()).unwrap();
            proptest::prop_assert_eq!(back.digest(), a.digest());
        }
    }
}
