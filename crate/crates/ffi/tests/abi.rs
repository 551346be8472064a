use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use pulsekin::net::{ModelConfig, ModelParams};
use pulsekin_ffi::*;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/traces")
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pk_last_error_message()) }.to_str().unwrap().to_string()
}

fn load(name: &str) -> (PkStatus, *mut PkTrace) {
    let mut t = ptr::null_mut();
    let status = unsafe { pk_trace_load(cpath(&corpus().join(name)).as_ptr(), 2.5, &mut t) };
    (status, t)
}

#[test]
fn fixture_codes_through_the_abi() {
    let expected = std::fs::read_to_string(corpus().join("expected.csv")).unwrap();
    for line in expected.lines().skip(1) {
        let (file, code) = line.split_once(',').unwrap();
        let (status, t) = load(file);
        assert_eq!(status, code.parse::<i32>().unwrap(), "{file}: {}", last_error());
        assert_eq!(t.is_null(), status != PK_OK);
        if status != PK_OK {
            assert!(!last_error().is_empty());
        }
        unsafe { pk_trace_free(t) };
    }
}

#[test]
fn extract_and_estimate_heart_rate() {
    let (status, t) = load("valid_01_basic.csv");
    assert_eq!(status, PK_OK);
    let (mut frames, mut rois, mut fps) = (0, 0, 0.0);
    assert_eq!(unsafe { pk_trace_info(t, &mut frames, &mut rois, &mut fps) }, PK_OK);
    assert_eq!((frames, rois, fps), (150, 2, 50.0));

    for single in [0, 1] {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { pk_extract(t, PK_METHOD_POS, single, &mut s) }, PK_OK, "{}", last_error());
        let (mut c, mut n) = (0, 0);
        assert_eq!(unsafe { pk_signal_dims(s, &mut c, &mut n) }, PK_OK);
        assert_eq!((c, n), (if single == 1 { 1 } else { 2 }, 125));
        let data = unsafe { std::slice::from_raw_parts(pk_signal_data(s), c * n) };
        assert!(data.iter().all(|v| v.is_finite()));
        unsafe { pk_signal_free(s) };
    }
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { pk_extract(t, 42, 0, &mut bad) }, PK_ERR_ARGUMENT);
    assert!(bad.is_null());
    unsafe { pk_trace_free(t) };

    let fps = 50.0;
    let x: Vec<f64> = (0..500).map(|i| (2.0 * std::f64::consts::PI * 1.2 * i as f64 / fps).sin()).collect();
    let mut bpm = 0.0;
    assert_eq!(unsafe { pk_estimate_hr(x.as_ptr(), x.len(), fps, &mut bpm) }, PK_OK);
    assert!((bpm - 72.0).abs() < 1.5, "{bpm}");
}

#[test]
fn auc_matches_hand_count() {
    let d = [0.1, 0.4, 0.35, 0.8];
    let kin = [1u8, 0, 1, 0];
    let mut auc = 0.0;
    assert_eq!(unsafe { pk_auc(d.as_ptr(), kin.as_ptr(), 4, &mut auc) }, PK_OK);
    assert_eq!(auc, 1.0);
    let one_class = [1u8; 4];
    assert_eq!(unsafe { pk_auc(d.as_ptr(), one_class.as_ptr(), 4, &mut auc) }, PK_ERR_CLASS);
}

#[test]
fn model_distance_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig { in_channels: 2, ..Default::default() };
    let params = ModelParams::init(&cfg, 9).unwrap();
    let path = dir.path().join("m.pkin");
    params.save(&path).unwrap();

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pk_model_load(cpath(&path).as_ptr(), &mut m) }, PK_OK);
    let (_, t) = load("valid_01_basic.csv");
    let (_, u) = load("valid_04_30fps.csv");
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(pk_extract(t, PK_METHOD_CHROM, 0, &mut a), PK_OK);
        assert_eq!(pk_extract(u, PK_METHOD_CHROM, 0, &mut b), PK_OK);
    }
    let (mut same, mut cross) = (-1.0, -1.0);
    unsafe {
        assert_eq!(pk_model_distance(m, a, a, &mut same), PK_OK);
        assert_eq!(pk_model_distance(m, a, b, &mut cross), PK_OK);
    }
    assert_eq!(same, 0.0);
    assert!(cross > 0.0);

    // A 1-channel signal does not fit a 2-channel model.
    let mut single = ptr::null_mut();
    unsafe {
        assert_eq!(pk_extract(t, PK_METHOD_CHROM, 1, &mut single), PK_OK);
        assert_eq!(pk_model_distance(m, a, single, &mut cross), PK_ERR_SHAPE);
        for s in [a, b, single] {
            pk_signal_free(s);
        }
        pk_trace_free(t);
        pk_trace_free(u);
        pk_model_free(m);
    }
}

#[test]
fn null_arguments_are_rejected() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { pk_trace_load(ptr::null(), 2.5, &mut t) }, PK_ERR_ARGUMENT);
    assert_eq!(unsafe { pk_trace_load(c"x".as_ptr(), 2.5, ptr::null_mut()) }, PK_ERR_ARGUMENT);
    let mut n = 0;
    assert_eq!(unsafe { pk_signal_dims(ptr::null(), &mut n, &mut n) }, PK_ERR_ARGUMENT);
    assert!(unsafe { pk_signal_data(ptr::null()) }.is_null());
    unsafe {
        pk_trace_free(ptr::null_mut());
        pk_signal_free(ptr::null_mut());
        pk_model_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_is_io_error() {
    let (status, t) = load("does_not_exist.csv");
    assert_eq!(status, PK_ERR_IO);
    assert!(t.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/pulsekin.h")).unwrap();
    for name in [
        "pk_last_error_message", "pk_trace_load", "pk_trace_free", "pk_trace_info", "pk_extract",
        "pk_signal_load", "pk_signal_dims", "pk_signal_data", "pk_signal_free", "pk_estimate_hr",
        "pk_model_load", "pk_model_free", "pk_model_distance", "pk_auc",
        "typedef struct PkTrace PkTrace", "#define PK_ERR_FORMAT 1", "#define PK_ERR_IO 15",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
