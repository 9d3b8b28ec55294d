//! Scenario dispatch and output files.
//!
//! Every scenario yields a JSON [`RunReport`] plus named CSV artifacts.
//! Column contracts:
//!
//! | file | columns |
//! |---|---|
//! | `timestamps.csv` | `detector_label,time_s` |
//! | `histogram.csv` | `bin_center_s,counts` |
//! | `scan_phase.csv`, `scan_hwp.csv` | `setting_rad,counts,expected_counts` |
//! | `chsh.csv`, `table1.csv` | `dof,fixed_basis,channel,S,sigma_S,n_sigma,analytic_S,ideal_S,under_sampled,coincidences,coincidence_rate_Hz` |
//! | `correlators.csv` | `dof,fixed_basis,channel,setting,signal_setting_rad,idler_setting_rad,R11,R22,R12,R21,E,sigma_E` |
//! | `crosscheck.csv` | `cell,setting,E_mc,E_analytic,sigma_E,deviation_sigma` |
//! | `comb_spectrum.csv` | `detuning_Hz,optical_depth` |
//! | `efficiency.csv` | `quantity,value` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::chsh_analysis::{correlator, Dof};
use crate::error::Result;

use super::config::{ExperimentConfig, Scenario};
use super::scenarios::{
    comb_profile, crosscheck, efficiency_report, hwp_scan, phase_scan, run_chsh, run_table1, simulate_raw, calibration_channel,
    CellResult, CrosscheckReport, EfficiencyReport, Scan,
};
use super::engine::Setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

/// Machine-readable result of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    pub outputs: Value,
    /// Names of the CSV artifacts.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact { name: name.to_string(), contents }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("outputs serialize")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn dof_label(d: Dof) -> &'static str {
    match d {
        Dof::Polarization => "polarization",
        Dof::Timebin => "timebin",
    }
}

pub fn scan_csv(scan: &Scan) -> String {
    let mut out = String::from("setting_rad,counts,expected_counts\n");
    for p in &scan.points {
        let _ = writeln!(out, "{},{},{}", p.setting_rad, p.counts, p.expected_counts);
    }
    out
}

pub fn cells_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("dof,fixed_basis,channel,S,sigma_S,n_sigma,analytic_S,ideal_S,under_sampled,coincidences,coincidence_rate_Hz\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            dof_label(c.dof),
            c.fixed_basis.label(),
            c.channel.label(),
            opt(c.chsh.as_ref().map(|r| r.s)),
            opt(c.chsh.as_ref().map(|r| r.sigma_s)),
            opt(c.chsh.as_ref().and_then(|r| r.n_sigma)),
            c.analytic_chsh.s,
            c.ideal_s,
            c.under_sampled,
            c.coincidences,
            c.coincidence_rate_hz
        );
    }
    out
}

pub fn correlators_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("dof,fixed_basis,channel,setting,signal_setting_rad,idler_setting_rad,R11,R22,R12,R21,E,sigma_E\n");
    for c in cells {
        for s in &c.settings {
            let est = correlator(s.counts).ok();
            let [a, b, d, e] = s.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{a},{b},{d},{e},{},{}",
                dof_label(c.dof),
                c.fixed_basis.label(),
                c.channel.label(),
                s.label,
                s.signal_setting_rad,
                s.idler_setting_rad,
                opt(est.map(|x| x.e)),
                opt(est.map(|x| x.sigma_e))
            );
        }
    }
    out
}

pub fn crosscheck_csv(r: &CrosscheckReport) -> String {
    let mut out = String::from("cell,setting,E_mc,E_analytic,sigma_E,deviation_sigma\n");
    for e in &r.entries {
        let _ = writeln!(out, "{},{},{},{},{},{}", e.cell, e.setting, e.e_mc, e.e_analytic, e.sigma_e, e.deviation_sigma);
    }
    out
}

pub fn efficiency_csv(r: &EfficiencyReport) -> String {
    let mut out = String::from("quantity,value\n");
    if let Value::Object(map) = to_value(r) {
        for (k, v) in map {
            let v = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            let _ = writeln!(out, "{k},{v}");
        }
    }
    out
}

pub fn comb_csv(profile: &[(f64, f64)]) -> String {
    let mut out = String::from("detuning_Hz,optical_depth\n");
    for (nu, d) in profile {
        let _ = writeln!(out, "{nu},{d}");
    }
    out
}

/// Runs a scenario. `Simulate` defers to `run.scenario` when that is set to
/// another scenario.
pub fn run_scenario(cfg: &ExperimentConfig, scenario: Scenario, seed: u64) -> Result<(RunReport, Vec<Artifact>)> {
    cfg.validate()?;
    let scenario = match (scenario, cfg.run.scenario) {
        (Scenario::Simulate, Some(s)) => s,
        (s, _) => s,
    };
    let (outputs, artifacts) = match scenario {
        Scenario::Simulate => {
            let raw = simulate_raw(cfg, seed)?;
            let singles: Vec<Value> = raw.streams.streams.iter().map(|(d, ts)| json!({"detector": d.label(), "clicks": ts.len()})).collect();
            let out = json!({
                "duration_s": raw.duration_s,
                "singles": singles,
                "transmitted_peaks": to_value(&raw.transmitted_peaks),
                "stored_peaks": to_value(&raw.stored_peaks),
                "transmitted_coincidence_rate_Hz": peak_rate(&raw.transmitted_peaks, raw.duration_s),
                "stored_coincidence_rate_Hz": peak_rate(&raw.stored_peaks, raw.duration_s),
            });
            (out, vec![artifact("timestamps.csv", raw.streams.to_csv()), artifact("histogram.csv", raw.histogram.to_csv())])
        }
        Scenario::ScanPhase | Scenario::ScanHwp => {
            let setup = Setup::from_config(cfg)?;
            let channel = calibration_channel(&setup);
            let (scan, name) = if scenario == Scenario::ScanPhase {
                (phase_scan(cfg, &setup, seed, channel)?, "scan_phase.csv")
            } else {
                (hwp_scan(cfg, &setup, seed, channel)?, "scan_hwp.csv")
            };
            let csv = scan_csv(&scan);
            (to_value(&scan), vec![artifact(name, csv)])
        }
        Scenario::Chsh | Scenario::Table1 => {
            let t = if scenario == Scenario::Chsh { run_chsh(cfg, seed)? } else { run_table1(cfg, seed)? };
            let name = if scenario == Scenario::Chsh { "chsh.csv" } else { "table1.csv" };
            let arts = vec![artifact(name, cells_csv(&t.cells)), artifact("correlators.csv", correlators_csv(&t.cells))];
            (to_value(&t), arts)
        }
        Scenario::CombSpectrum => {
            let profile = comb_profile(cfg)?;
            let comb = cfg.comb_spec();
            let out = json!({"points": profile.len(), "mean_depth": comb.mean_depth(), "tooth_fwhm_Hz": comb.tooth_fwhm_hz()});
            (out, vec![artifact("comb_spectrum.csv", comb_csv(&profile))])
        }
        Scenario::Efficiency => {
            let r = efficiency_report(cfg)?;
            (to_value(&r), vec![artifact("efficiency.csv", efficiency_csv(&r))])
        }
        Scenario::Crosscheck => {
            let r = crosscheck(cfg, seed)?;
            (to_value(&r), vec![artifact("crosscheck.csv", crosscheck_csv(&r))])
        }
    };
    let report = RunReport {
        scenario: scenario.id().to_string(),
        seed,
        config_digest: cfg.digest(),
        outputs,
        files: artifacts.iter().map(|a| a.name.clone()).collect(),
    };
    Ok((report, artifacts))
}

fn peak_rate(p: &crate::detection_counting::PeakCounts, duration_s: f64) -> f64 {
    let tot = p.central + p.satellite_early + p.satellite_late;
    if duration_s > 0.0 { tot as f64 / duration_s } else { 0.0 }
}

/// Writes `report.json` and, for CSV output, every artifact into `dir`.
/// Returns the written paths.
pub fn write_outputs(dir: &Path, report: &RunReport, artifacts: &[Artifact], format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    fs::write(&path, report.to_json())?;
    written.push(path);
    if format == OutputFormat::Csv {
        for a in artifacts {
            let p = dir.join(&a.name);
            fs::write(&p, &a.contents)?;
            written.push(p);
        }
    }
    Ok(written)
}
