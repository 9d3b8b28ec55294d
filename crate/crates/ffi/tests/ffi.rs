use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hyperent_ffi::*;

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    hyperent_string_free(s);
    out
}

unsafe fn last_error() -> String {
    CStr::from_ptr(hyperent_last_error()).to_str().unwrap().to_owned()
}

#[test]
fn config_round_trip_keeps_digest() {
    unsafe {
        let cfg = hyperent_config_default();
        let digest = take(hyperent_config_digest(cfg));
        assert_eq!(digest.len(), 64);
        let toml = CString::new(take(hyperent_config_to_toml(cfg))).unwrap();
        let mut again = ptr::null_mut();
        assert_eq!(hyperent_config_from_toml(toml.as_ptr(), &mut again), HyperentStatus::Ok);
        assert_eq!(take(hyperent_config_digest(again)), digest);
        assert_eq!(hyperent_config_set_target_coincidences(again, 500), HyperentStatus::Ok);
        assert_ne!(take(hyperent_config_digest(again)), digest);
        hyperent_config_free(again);
        hyperent_config_free(cfg);
    }
}

#[test]
fn invalid_inputs_report_codes() {
    unsafe {
        let mut out = ptr::null_mut();
        let bad = CString::new("[comb]\nfinesse = -1\n").unwrap();
        assert_eq!(hyperent_config_from_toml(bad.as_ptr(), &mut out), HyperentStatus::Config);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(hyperent_config_from_toml(ptr::null(), &mut out), HyperentStatus::NullPointer);

        let cfg = hyperent_config_default();
        let mut report = ptr::null_mut();
        let name = CString::new("bogus").unwrap();
        assert_eq!(hyperent_run(cfg, name.as_ptr(), 1, &mut report), HyperentStatus::UnknownScenario);
        assert!(last_error().contains("bogus"));
        assert_eq!(hyperent_config_set_target_coincidences(cfg, 0), HyperentStatus::OutOfRange);
        assert_eq!(hyperent_config_set_target_coincidences(ptr::null_mut(), 5), HyperentStatus::NullPointer);
        let mut eta = 0.0;
        assert_eq!(hyperent_afc_efficiency(-1.0, 2.0, 0.25, HyperentPeakShape::Gaussian, &mut eta), HyperentStatus::Config);
        hyperent_config_free(cfg);

        // null handles are tolerated by accessors and destructors
        assert!(hyperent_report_json(ptr::null()).is_null());
        assert_eq!(hyperent_report_artifact_count(ptr::null()), 0);
        hyperent_report_free(ptr::null_mut());
        hyperent_config_free(ptr::null_mut());
        hyperent_string_free(ptr::null_mut());
    }
}

#[test]
fn efficiency_scenario_through_handles() {
    unsafe {
        let cfg = hyperent_config_default();
        let mut report = ptr::null_mut();
        let name = CString::new("efficiency").unwrap();
        assert_eq!(hyperent_run(cfg, name.as_ptr(), 7, &mut report), HyperentStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(&take(hyperent_report_json(report))).unwrap();
        assert_eq!(json["scenario"], "efficiency");
        assert_eq!(json["seed"], 7);
        let eta = json["outputs"]["efficiency_gaussian"].as_f64().unwrap();
        assert!((eta - 0.0446).abs() < 1e-4);
        assert_eq!(hyperent_report_artifact_count(report), 1);
        assert_eq!(take(hyperent_report_artifact_name(report, 0)), "efficiency.csv");
        assert!(take(hyperent_report_artifact_contents(report, 0)).starts_with("quantity,value\n"));
        assert!(hyperent_report_artifact_name(report, 1).is_null());
        hyperent_report_free(report);
        hyperent_config_free(cfg);

        let mut sq = 0.0;
        assert_eq!(hyperent_afc_efficiency(1.8, 2.0, 0.25, HyperentPeakShape::Square, &mut sq), HyperentStatus::Ok);
        assert!((sq - 0.1040).abs() < 1e-4);
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("hyperent.h").exists());
    // test binaries live in <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libhyperent_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
