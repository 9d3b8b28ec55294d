//! Detector clicks, coincidence histograms and peak integration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

pub use crate::analyzers::DetectorId;
use crate::error::{domain, Error, Result};
use crate::rng::SimRng;
use crate::source::uniform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub label: DetectorId,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    /// Gaussian timing jitter (standard deviation), 0 to disable.
    #[serde(default)]
    pub jitter_s: f64,
}

impl DetectorModel {
    pub fn new(label: DetectorId, efficiency: f64, dark_count_rate_hz: f64) -> Result<Self> {
        let d = Self { label, efficiency, dark_count_rate_hz, jitter_s: 0.0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Config(format!("{} efficiency {} outside [0, 1]", self.label, self.efficiency)));
        }
        if !(self.dark_count_rate_hz >= 0.0) || !self.dark_count_rate_hz.is_finite() {
            return Err(Error::Config(format!("{} dark count rate must be finite and >= 0", self.label)));
        }
        if !(self.jitter_s >= 0.0) || !self.jitter_s.is_finite() {
            return Err(Error::Config(format!("{} jitter must be finite and >= 0", self.label)));
        }
        Ok(())
    }
}

/// Silicon APD on the signal arm (30%) and superconducting nanowires on the
/// idler arm (75%).
pub fn default_detectors() -> Vec<DetectorModel> {
    DetectorId::ALL
        .iter()
        .map(|&label| {
            let eff = if label.side == crate::analyzers::Side::Signal { 0.30 } else { 0.75 };
            DetectorModel { label, efficiency: eff, dark_count_rate_hz: 0.0, jitter_s: 0.0 }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampRecord {
    pub detector: DetectorId,
    pub time_s: f64,
}

/// A photon reaching a detector, before efficiency and dark counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonArrival {
    pub detector: DetectorId,
    pub time_s: f64,
}

/// Sorted click times per detector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorStreams {
    pub streams: BTreeMap<DetectorId, Vec<f64>>,
}

impl DetectorStreams {
    pub fn get(&self, id: DetectorId) -> &[f64] {
        self.streams.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn total(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    /// All records ordered by detector then time.
    pub fn records(&self) -> impl Iterator<Item = TimestampRecord> + '_ {
        self.streams.iter().flat_map(|(&detector, ts)| ts.iter().map(move |&time_s| TimestampRecord { detector, time_s }))
    }

    /// Columns `detector_label,time_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("detector_label,time_s\n");
        for r in self.records() {
            let _ = writeln!(out, "{},{:e}", r.detector.label(), r.time_s);
        }
        out
    }
}

/// Applies efficiencies, jitter and dark counts over `[0, duration)`.
pub fn detect(arrivals: &[PhotonArrival], detectors: &[DetectorModel], duration_s: f64, rng: &mut SimRng) -> Result<DetectorStreams> {
    if arrivals.windows(2).any(|w| w[1].time_s < w[0].time_s) {
        return domain("photon arrivals must be time-sorted");
    }
    let mut models = BTreeMap::new();
    for d in detectors {
        d.validate()?;
        if models.insert(d.label, *d).is_some() {
            return Err(Error::Config(format!("detector {} listed twice", d.label)));
        }
    }
    let mut out = DetectorStreams::default();
    for d in models.values() {
        out.streams.insert(d.label, Vec::new());
    }
    for a in arrivals {
        let Some(d) = models.get(&a.detector) else {
            return Err(Error::Config(format!("no model for detector {}", a.detector)));
        };
        if uniform(rng) < d.efficiency {
            let t = if d.jitter_s > 0.0 { a.time_s + Normal::new(0.0, d.jitter_s).expect("positive jitter").sample(rng) } else { a.time_s };
            out.streams.get_mut(&d.label).expect("inserted").push(t);
        }
    }
    for d in models.values() {
        let mean = d.dark_count_rate_hz * duration_s;
        if mean > 0.0 {
            let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
            let s = out.streams.get_mut(&d.label).expect("inserted");
            s.extend((0..n).map(|_| uniform(rng) * duration_s));
        }
    }
    for s in out.streams.values_mut() {
        s.sort_by(f64::total_cmp);
    }
    Ok(out)
}

/// Counts of signal − idler time differences on bins centred on multiples of
/// the bin width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_s: f64,
    /// Bin `i` is centred at `(i - half_bins)·bin_width`.
    pub half_bins: usize,
    pub bins: Vec<u64>,
    /// Expected peak positions `[-ΔT, 0, +ΔT]`.
    pub window_center_offsets: [f64; 3],
}

impl CoincidenceHistogram {
    pub fn new(span_s: f64, bin_width_s: f64, delay_s: f64) -> Result<Self> {
        if !(bin_width_s > 0.0) || !(delay_s > 0.0) {
            return domain("bin width and delay must be positive");
        }
        if bin_width_s > delay_s / 10.0 + 1e-18 {
            return domain(format!("bin width {bin_width_s:e} s exceeds a tenth of the delay {delay_s:e} s"));
        }
        if span_s < 4.0 * delay_s {
            return domain(format!("histogram span {span_s:e} s is below four delays"));
        }
        let half_bins = (0.5 * span_s / bin_width_s).floor() as usize;
        Ok(Self { bin_width_s, half_bins, bins: vec![0; 2 * half_bins + 1], window_center_offsets: [-delay_s, 0.0, delay_s] })
    }

    pub fn half_span(&self) -> f64 {
        (self.half_bins as f64 + 0.5) * self.bin_width_s
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 - self.half_bins as f64) * self.bin_width_s
    }

    pub fn bin_index(&self, diff_s: f64) -> Option<usize> {
        let k = (diff_s / self.bin_width_s).round();
        let i = k + self.half_bins as f64;
        (i >= 0.0 && i < self.bins.len() as f64).then_some(i as usize)
    }

    pub fn add(&mut self, diff_s: f64) -> bool {
        match self.bin_index(diff_s) {
            Some(i) => {
                self.bins[i] += 1;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Bin-wise sum with a histogram of identical geometry.
    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if self.bin_width_s != other.bin_width_s || self.half_bins != other.half_bins || self.window_center_offsets != other.window_center_offsets {
            return Err(Error::Structural("histogram geometries differ".into()));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        Ok(())
    }

    /// Columns `bin_center_s,counts`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center_s,counts\n");
        for (i, c) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{:e},{}", self.bin_center(i), c);
        }
        out
    }
}

/// Histogram of all signal − idler differences bounded by the span.
pub fn build_histogram(signal: &[f64], idler: &[f64], span_s: f64, bin_width_s: f64, delay_s: f64) -> Result<CoincidenceHistogram> {
    let mut h = CoincidenceHistogram::new(span_s, bin_width_s, delay_s)?;
    let reach = h.half_span();
    let mut lo = 0;
    for &ts in signal {
        while lo < idler.len() && idler[lo] < ts - reach {
            lo += 1;
        }
        let mut j = lo;
        while j < idler.len() && idler[j] <= ts + reach {
            h.add(ts - idler[j]);
            j += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakCounts {
    pub central: u64,
    /// Peak at `-ΔT` (signal short, idler long).
    pub satellite_early: u64,
    pub satellite_late: u64,
    /// Mean count per bin outside the three windows.
    pub accidental_floor: f64,
}

impl PeakCounts {
    pub fn total(&self) -> u64 {
        self.central + self.satellite_early + self.satellite_late
    }
}

/// Integrates `±window/2` around each expected peak.
pub fn classify_peaks(hist: &CoincidenceHistogram, window_s: f64) -> Result<PeakCounts> {
    let delay = hist.window_center_offsets[2];
    if !(window_s > 0.0) {
        return domain("coincidence window must be positive");
    }
    if window_s >= delay {
        return domain(format!("window {window_s:e} s makes peak windows overlap (delay {delay:e} s)"));
    }
    let mut sums = [0u64; 3];
    let (mut rest, mut rest_bins) = (0u64, 0usize);
    let tol = 1e-9 * hist.bin_width_s;
    for (i, &c) in hist.bins.iter().enumerate() {
        let x = hist.bin_center(i);
        match hist.window_center_offsets.iter().position(|&c0| (x - c0).abs() <= 0.5 * window_s + tol) {
            Some(k) => sums[k] += c,
            None => {
                rest += c;
                rest_bins += 1;
            }
        }
    }
    let floor = if rest_bins > 0 { rest as f64 / rest_bins as f64 } else { 0.0 };
    Ok(PeakCounts { satellite_early: sums[0], central: sums[1], satellite_late: sums[2], accidental_floor: floor })
}

/// Mean rate of chance coincidences `S_s·S_i·window`.
pub fn accidental_coincidence_rate(singles_signal_hz: f64, singles_idler_hz: f64, window_s: f64) -> f64 {
    singles_signal_hz * singles_idler_hz * window_s
}

/// Pairs with `|t_s − t_i − offset| ≤ window/2` on sorted streams.
pub fn count_coincidences(signal: &[f64], idler: &[f64], offset_s: f64, window_s: f64) -> u64 {
    let half = 0.5 * window_s;
    let mut lo = 0;
    let mut n = 0u64;
    for &ts in signal {
        let target = ts - offset_s;
        while lo < idler.len() && idler[lo] < target - half {
            lo += 1;
        }
        let mut j = lo;
        while j < idler.len() && idler[j] <= target + half {
            n += 1;
            j += 1;
        }
    }
    n
}
