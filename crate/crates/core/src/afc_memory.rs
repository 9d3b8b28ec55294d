//! Atomic-frequency-comb memory: comb spectrum, storage efficiency, storage
//! time and the polarization-independent crystal/HWP/crystal sandwich.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::analyzers::retarder;
use crate::error::{domain, Error, Result};
use crate::quantum_state::C64;
use crate::rng::SimRng;
use crate::source::{uniform, FrequencyGrid, PairEvent};

/// CODATA 2018 exact values.
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakShape {
    Square,
    #[default]
    Gaussian,
}

/// Comb geometry and depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    /// Tooth spacing Δ.
    pub peak_period_hz: f64,
    /// Δ divided by the tooth FWHM.
    pub finesse: f64,
    pub peak_shape: PeakShape,
    /// Tooth optical depth d in the central band.
    pub d_peak: f64,
    /// Residual background optical depth d0.
    pub d_background: f64,
    pub total_bandwidth_hz: f64,
    /// Relative tooth contrast per band, bands of equal width spanning the
    /// bandwidth from lowest to highest frequency.
    pub sideband_depth_scaling: Vec<f64>,
}

impl CombSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.peak_period_hz > 0.0) {
            return bad(format!("comb period must be positive, got {}", self.peak_period_hz));
        }
        if !(self.finesse >= 1.0) {
            return bad(format!("finesse must be >= 1, got {}", self.finesse));
        }
        if !(self.d_background >= 0.0 && self.d_peak >= self.d_background) {
            return bad("need d_peak >= d_background >= 0".into());
        }
        if !(self.total_bandwidth_hz >= self.peak_period_hz) {
            return bad("comb bandwidth must be at least one period".into());
        }
        if self.sideband_depth_scaling.is_empty() || self.sideband_depth_scaling.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("sideband scaling must be a nonempty list of values in [0, 1]".into());
        }
        Ok(())
    }

    /// Average comb optical depth d̃ = d/F.
    pub fn mean_depth(&self) -> f64 {
        self.d_peak / self.finesse
    }

    pub fn tooth_fwhm_hz(&self) -> f64 {
        self.peak_period_hz / self.finesse
    }

    /// Optical depth at detuning `nu`. Outside the prepared bandwidth the
    /// profile stays at the background depth.
    pub fn optical_depth(&self, nu: f64) -> f64 {
        let half = 0.5 * self.total_bandwidth_hz;
        if nu.abs() > half {
            return self.d_background;
        }
        let nbands = self.sideband_depth_scaling.len();
        let band = (((nu + half) / self.total_bandwidth_hz * nbands as f64) as usize).min(nbands - 1);
        let scale = self.sideband_depth_scaling[band];
        let k = (nu / self.peak_period_hz).round();
        let center = k * self.peak_period_hz;
        if center.abs() > half {
            return self.d_background;
        }
        let x = (nu - center) / self.tooth_fwhm_hz();
        let shape = match self.peak_shape {
            PeakShape::Square => {
                if x.abs() <= 0.5 { 1.0 } else { 0.0 }
            }
            PeakShape::Gaussian => (-4.0 * LN_2 * x * x).exp(),
        };
        self.d_background + scale * (self.d_peak - self.d_background) * shape
    }
}

/// Dephasing factor: `sinc²(π/F)` for square teeth, `exp(-7/F²)` for Gaussian.
pub fn dephasing_factor(finesse: f64, shape: PeakShape) -> f64 {
    match shape {
        PeakShape::Square => {
            let x = PI / finesse;
            (x.sin() / x).powi(2)
        }
        PeakShape::Gaussian => (-7.0 / (finesse * finesse)).exp(),
    }
}

/// Storage-and-recall efficiency `d̃² e^{-d̃} e^{-d0} η_deph`.
pub fn afc_efficiency(comb: &CombSpec) -> f64 {
    let dt = comb.mean_depth();
    (dt * dt * (-dt).exp() * (-comb.d_background).exp() * dephasing_factor(comb.finesse, comb.peak_shape)).clamp(0.0, 1.0)
}

/// Fixed recall time `1/Δ`.
pub fn storage_time(comb: &CombSpec) -> f64 {
    1.0 / comb.peak_period_hz
}

/// Optical-depth profile sampled on `grid` as (detuning, depth) pairs.
pub fn comb_spectrum(comb: &CombSpec, grid: &FrequencyGrid) -> Result<Vec<(f64, f64)>> {
    comb.validate()?;
    let half = 0.5 * comb.total_bandwidth_hz;
    if grid.start_hz > -half || grid.stop_hz < half {
        return domain(format!("grid [{:e}, {:e}] does not cover the comb bandwidth", grid.start_hz, grid.stop_hz));
    }
    Ok(grid.values().map(|nu| (nu, comb.optical_depth(nu))).collect())
}

/// Ratio `exp(-hΔν / k_B T)` of ground-state populations.
pub fn thermal_od_ratio(splitting_hz: f64, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return domain(format!("temperature must be positive, got {temperature_k}"));
    }
    Ok((-PLANCK_J_S * splitting_hz / (BOLTZMANN_J_PER_K * temperature_k)).exp())
}

/// Two identical crystals around a half-wave plate at 45° to their axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalSandwich {
    pub d1: f64,
    pub d2: f64,
    pub hwp_angle_error_rad: f64,
    pub hwp_retardation_error_rad: f64,
}

impl CrystalSandwich {
    pub fn ideal(d1: f64, d2: f64) -> Self {
        Self { d1, d2, hwp_angle_error_rad: 0.0, hwp_retardation_error_rad: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d1 >= 0.0 && self.d2 >= 0.0) {
            return Err(Error::Config("crystal optical depths must be nonnegative".into()));
        }
        if !(self.hwp_angle_error_rad.abs() < 0.2 && self.hwp_retardation_error_rad.abs() < 0.2) {
            return Err(Error::Config("HWP error terms must be below 0.2 rad".into()));
        }
        Ok(())
    }

    fn crystal(&self) -> Matrix2<C64> {
        Matrix2::new(C64::from((-0.5 * self.d1).exp()), C64::from(0.0), C64::from(0.0), C64::from((-0.5 * self.d2).exp()))
    }

    fn hwp(&self) -> Matrix2<C64> {
        retarder(PI / 4.0 + self.hwp_angle_error_rad, PI + self.hwp_retardation_error_rad)
    }
}

/// `-ln` of the intensity transmission of crystal → HWP → crystal for linear
/// input polarization at `input_angle` from the D1 axis.
pub fn effective_optical_depth(sandwich: &CrystalSandwich, input_angle: f64) -> f64 {
    let a = sandwich.crystal();
    let m = a * sandwich.hwp() * a;
    let input = Vector2::new(C64::from(input_angle.cos()), C64::from(input_angle.sin()));
    -(m * input).norm_squared().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Stored,
    Transmitted,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryOutcome {
    pub disposition: Disposition,
    /// `1/Δ` when stored, 0 otherwise.
    pub release_delay_s: f64,
}

const TRANSMISSION_GRID_HZ: f64 = 2e6;

/// Disposition probabilities of a heralded photon hitting the memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryModel {
    pub efficiency: f64,
    pub transmission: f64,
    pub storage_time_s: f64,
}

impl MemoryModel {
    pub fn new(comb: &CombSpec, photon_fwhm_hz: f64, efficiency_override: Option<f64>, transmission_override: Option<f64>) -> Result<Self> {
        comb.validate()?;
        if !(photon_fwhm_hz > 0.0) || photon_fwhm_hz > 0.5 * comb.total_bandwidth_hz {
            return Err(Error::Config(format!(
                "photon FWHM {photon_fwhm_hz:e} Hz must be positive and at most half the comb bandwidth"
            )));
        }
        let efficiency = efficiency_override.unwrap_or_else(|| afc_efficiency(comb));
        let transmission = transmission_override.unwrap_or_else(|| spectral_transmission(comb, photon_fwhm_hz));
        for (name, v) in [("efficiency", efficiency), ("transmission", transmission)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("memory {name} {v} outside [0, 1]")));
            }
        }
        if efficiency + transmission > 1.0 + 1e-12 {
            return Err(Error::Config(format!("efficiency {efficiency} + transmission {transmission} exceeds 1")));
        }
        Ok(Self { efficiency, transmission, storage_time_s: storage_time(comb) })
    }

    pub fn loss(&self) -> f64 {
        (1.0 - self.efficiency - self.transmission).max(0.0)
    }

    pub fn apply(&self, rng: &mut SimRng) -> MemoryOutcome {
        let u = uniform(rng);
        if u < self.efficiency {
            MemoryOutcome { disposition: Disposition::Stored, release_delay_s: self.storage_time_s }
        } else if u < self.efficiency + self.transmission {
            MemoryOutcome { disposition: Disposition::Transmitted, release_delay_s: 0.0 }
        } else {
            MemoryOutcome { disposition: Disposition::Lost, release_delay_s: 0.0 }
        }
    }
}

/// `∫ L(ν) e^{-d(ν)} dν` for a Lorentzian photon line of width `fwhm`.
pub fn spectral_transmission(comb: &CombSpec, fwhm_hz: f64) -> f64 {
    let half = 0.5 * comb.total_bandwidth_hz;
    let g = 0.5 * fwhm_hz;
    let lorentz = |nu: f64| g / (PI * (nu * nu + g * g));
    let n = (comb.total_bandwidth_hz / TRANSMISSION_GRID_HZ).ceil() as usize;
    let step = comb.total_bandwidth_hz / n as f64;
    let (mut weighted, mut weight) = (0.0, 0.0);
    for i in 0..n {
        let nu = -half + (i as f64 + 0.5) * step;
        let w = lorentz(nu) * step;
        weighted += w * (-comb.optical_depth(nu)).exp();
        weight += w;
    }
    // renormalize the quadrature to the exact in-band weight
    let weight_inside = 2.0 / PI * (half / g).atan();
    (weighted / weight * weight_inside + (1.0 - weight_inside) * (-comb.d_background).exp()).clamp(0.0, 1.0)
}

/// Stochastic disposition of one pair's signal photon.
pub fn apply_memory(
    _event: &PairEvent,
    comb: &CombSpec,
    photon_fwhm_hz: f64,
    efficiency_override: Option<f64>,
    rng: &mut SimRng,
) -> Result<MemoryOutcome> {
    Ok(MemoryModel::new(comb, photon_fwhm_hz, efficiency_override, None)?.apply(rng))
}

/// Comb prepared in the experiment: 20 MHz teeth, finesse 2, d = 1.8,
/// d0 = 0.25, five 120 MHz bands with weaker second-order sidebands.
pub fn measured_comb() -> CombSpec {
    CombSpec {
        peak_period_hz: 20e6,
        finesse: 2.0,
        peak_shape: PeakShape::Gaussian,
        d_peak: 1.8,
        d_background: 0.25,
        total_bandwidth_hz: 600e6,
        sideband_depth_scaling: vec![0.6, 1.0, 1.0, 1.0, 0.6],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::sync::Arc;

    fn comb(shape: PeakShape) -> CombSpec {
        CombSpec { peak_shape: shape, ..measured_comb() }
    }

    #[test]
    fn efficiency_examples() {
        let g = afc_efficiency(&comb(PeakShape::Gaussian));
        let direct = 0.81 * (-0.9f64).exp() * (-0.25f64).exp() * (-1.75f64).exp();
        assert!((g - direct).abs() < 1e-15);
        assert!((g - 0.0446).abs() < 1e-4);
        let s = afc_efficiency(&comb(PeakShape::Square));
        let direct = 0.81 * (-0.9f64).exp() * (-0.25f64).exp() * (2.0 / PI).powi(2);
        assert!((s - direct).abs() < 1e-15);
        assert!((s - 0.1040).abs() < 1e-4);
        let deep = CombSpec { d_background: 20.0, d_peak: 21.0, ..measured_comb() };
        assert!(afc_efficiency(&deep) < 1e-8);
    }

    #[test]
    fn efficiency_peaks_at_mean_depth_two() {
        let eta = |dt: f64| afc_efficiency(&CombSpec { d_peak: dt * 2.0, d_background: 0.1, ..measured_comb() });
        let h = 1e-7;
        let slope = |dt: f64| (eta(dt + h) - eta(dt - h)) / (2.0 * h);
        assert!(slope(2.0 - 1e-6 * 0.5 - 1e-5) > 0.0);
        assert!(slope(2.0 + 1e-5) < 0.0);
        // bisection brackets the optimum within 1e-6
        let (mut lo, mut hi) = (1.0, 3.0);
        while hi - lo > 1e-7 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        assert!((0.5 * (lo + hi) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn storage_time_examples() {
        for (period, t) in [(20e6, 50e-9), (10e6, 100e-9), (40e6, 25e-9)] {
            let c = CombSpec { peak_period_hz: period, ..measured_comb() };
            assert!((storage_time(&c) - t).abs() < 1e-20);
        }
    }

    fn band_peak(comb: &CombSpec, lo: f64, hi: f64) -> f64 {
        let grid = FrequencyGrid::with_step(-400e6, 400e6, 0.1e6);
        comb_spectrum(comb, &grid).unwrap().into_iter().filter(|(nu, _)| *nu >= lo && *nu < hi).map(|(_, d)| d).fold(0.0, f64::max)
    }

    #[test]
    fn uniform_scaling_teeth_reach_peak_depth() {
        let c = CombSpec { sideband_depth_scaling: vec![1.0; 5], ..measured_comb() };
        let grid = FrequencyGrid::with_step(-300e6, 300e6, 1e6);
        let profile = comb_spectrum(&c, &grid).unwrap();
        let teeth: Vec<f64> = profile.iter().filter(|(nu, _)| (nu / 20e6 - (nu / 20e6).round()).abs() < 1e-9).map(|(_, d)| *d).collect();
        assert_eq!(teeth.len(), 31);
        assert!(teeth.iter().all(|d| (d - 1.8).abs() < 1e-9));
        assert!(profile.iter().all(|(_, d)| (0.25 - 1e-12..=1.8 + 1e-12).contains(d)));
    }

    #[test]
    fn outer_sidebands_are_shallower() {
        let c = measured_comb();
        assert!(band_peak(&c, 200e6, 300e6) < band_peak(&c, -60e6, 60e6));
    }

    #[test]
    fn square_tooth_area() {
        // midpoint quadrature over one period around a central tooth
        let area = |c: &CombSpec| {
            let n = 200_000;
            let step = c.peak_period_hz / n as f64;
            (0..n).map(|i| (c.optical_depth(-10e6 + (i as f64 + 0.5) * step) - c.d_background) * step).sum::<f64>()
        };
        let c0 = CombSpec { peak_shape: PeakShape::Square, d_background: 0.0, ..measured_comb() };
        assert!((area(&c0) / (c0.mean_depth() * c0.peak_period_hz) - 1.0).abs() < 0.02);
        let c = CombSpec { peak_shape: PeakShape::Square, ..measured_comb() };
        let analytic = (c.d_peak - c.d_background) * c.tooth_fwhm_hz();
        assert!((area(&c) / analytic - 1.0).abs() < 0.02);
    }

    #[test]
    fn comb_spectrum_rejects_narrow_grid() {
        let grid = FrequencyGrid::with_step(-100e6, 100e6, 1e6);
        assert!(matches!(comb_spectrum(&measured_comb(), &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn sandwich_ideal_is_polarization_independent() {
        let s = CrystalSandwich::ideal(0.85, 1.5);
        let vals: Vec<f64> = (0..360).map(|i| effective_optical_depth(&s, i as f64 * PI / 180.0)).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo < 1e-9);
        assert!((vals[0] - 2.35).abs() < 1e-9);
        assert!(effective_optical_depth(&CrystalSandwich::ideal(0.0, 0.0), 0.3).abs() < 1e-15);
    }

    #[test]
    fn sandwich_with_retardation_error() {
        let s = CrystalSandwich { hwp_retardation_error_rad: 0.1, ..CrystalSandwich::ideal(0.85, 1.5) };
        let vals: Vec<f64> = (0..360).map(|i| effective_optical_depth(&s, i as f64 * PI / 180.0)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!((hi - lo) / mean <= 0.05, "{}", (hi - lo) / mean);
        assert!((mean / 2.35 - 1.0).abs() < 0.01);
        let s = CrystalSandwich { hwp_angle_error_rad: 0.05, ..s };
        let mean = (0..360).map(|i| effective_optical_depth(&s, i as f64 * PI / 180.0)).sum::<f64>() / 360.0;
        assert!((mean / 2.35 - 1.0).abs() < 0.01);
        assert!(CrystalSandwich { hwp_angle_error_rad: 0.3, ..s }.validate().is_err());
    }

    #[test]
    fn thermal_ratio_examples() {
        let r = thermal_od_ratio(11e9, 2.7).unwrap();
        assert!((r - 0.822).abs() < 1e-3, "{r}");
        assert!((thermal_od_ratio(11e9, 1e9).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(thermal_od_ratio(0.0, 2.7).unwrap(), 1.0);
        assert!(thermal_od_ratio(11e9, 0.0).is_err());
        let mut last = 0.0;
        for t in [0.5, 1.0, 2.7, 10.0, 100.0] {
            let r = thermal_od_ratio(11e9, t).unwrap();
            assert!(r > last);
            last = r;
        }
        let mut last = 1.1;
        for s in [1e9, 5e9, 11e9, 50e9] {
            let r = thermal_od_ratio(s, 2.7).unwrap();
            assert!(r < last);
            last = r;
        }
    }

    fn event() -> PairEvent {
        PairEvent { creation_time_s: 0.0, state: Arc::new(crate::quantum_state::HyperState::werner_pair(0.0, 1.0, 1.0).unwrap()), pair_index: 0 }
    }

    #[test]
    fn measured_comb_transmits_about_half() {
        let m = MemoryModel::new(&measured_comb(), 170e6, None, None).unwrap();
        assert!((0.4..=0.6).contains(&m.transmission), "{}", m.transmission);
        assert!((m.storage_time_s - 50e-9).abs() < 1e-20);
    }

    #[test]
    fn empty_comb_always_transmits() {
        let c = CombSpec { d_peak: 0.0, d_background: 0.0, ..measured_comb() };
        let mut rng = seeded(3);
        for _ in 0..1000 {
            let out = apply_memory(&event(), &c, 171e6, None, &mut rng).unwrap();
            assert_eq!(out.disposition, Disposition::Transmitted);
            assert_eq!(out.release_delay_s, 0.0);
        }
    }

    #[test]
    fn memory_errors() {
        assert!(MemoryModel::new(&measured_comb(), 400e6, None, None).is_err());
        assert!(MemoryModel::new(&measured_comb(), 171e6, Some(0.6), None).is_err());
    }

    #[test]
    fn dispositions_deterministic_and_converge() {
        let m = MemoryModel::new(&measured_comb(), 171e6, None, None).unwrap();
        let draw = |seed| {
            let mut rng = seeded(seed);
            (0..100_000).map(|_| m.apply(&mut rng)).collect::<Vec<_>>()
        };
        let a = draw(11);
        assert_eq!(a, draw(11));
        let n = a.len() as f64;
        for (d, p) in [(Disposition::Stored, m.efficiency), (Disposition::Transmitted, m.transmission), (Disposition::Lost, m.loss())] {
            let k = a.iter().filter(|o| o.disposition == d).count() as f64;
            assert!((k - n * p).abs() < 3.0 * (n * p * (1.0 - p)).sqrt(), "{d:?}");
        }
        assert!(a.iter().all(|o| (o.disposition == Disposition::Stored) == (o.release_delay_s == 50e-9)));
    }
}
