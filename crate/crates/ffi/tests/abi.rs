use std::ffi::{CStr, CString};
use std::ptr;

use numanchor_ffi::*;

fn last_error() -> String {
    let p = na_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn two_clusters() -> Vec<f64> {
    (0..200).map(|i| if i % 2 == 0 { 10.0 + (i % 7) as f64 } else { 5000.0 + (i % 11) as f64 }).collect()
}

fn fit(space: NaSpace) -> *mut NaAnchorTable {
    let v = two_clusters();
    let mut t = ptr::null_mut();
    let s = unsafe { na_anchor_table_fit(v.as_ptr(), v.len(), 2, space, 5, 7, &mut t) };
    assert_eq!(s, NaStatus::Ok);
    assert!(!t.is_null());
    t
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(na_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_reports_errors() {
    let mut v = 0.0;
    let s = CString::new("12,34").unwrap();
    assert_eq!(unsafe { na_parse_numeral(s.as_ptr(), &mut v) }, NaStatus::Domain);
    assert!(last_error().contains("12,34"));
    assert_eq!(unsafe { na_parse_numeral(ptr::null(), &mut v) }, NaStatus::NullPointer);
    assert!(last_error().contains("surface"));
}

#[test]
fn invalid_utf8_is_rejected() {
    let bytes = [0xffu8, 0xfe, 0];
    let mut v = 0.0;
    let s = unsafe { na_parse_numeral(bytes.as_ptr().cast(), &mut v) };
    assert_eq!(s, NaStatus::InvalidUtf8);
}

#[test]
fn fit_and_query_log_table() {
    let t = fit(NaSpace::Log);
    unsafe {
        assert_eq!(na_anchor_table_space(t), NaSpace::Log);
        assert_eq!(na_anchor_table_len(t), 2);
        let mut len = 0;
        let mut small = [0.0; 1];
        assert_eq!(na_anchor_table_anchors(t, small.as_mut_ptr(), 1, &mut len), NaStatus::BufferTooSmall);
        assert_eq!(len, 2);
        let mut buf = [0.0; 2];
        assert_eq!(na_anchor_table_anchors(t, buf.as_mut_ptr(), 2, &mut len), NaStatus::Ok);
        assert!(buf[0] > 10f64.ln() && buf[0] < 16f64.ln());
        assert!(buf[1] > 5000f64.ln() && buf[1] < 5011f64.ln());

        let (mut a, mut d) = (0.0, NaDirection::Exact);
        assert_eq!(na_anchor_table_nearest(t, 20.0, &mut a, &mut d), NaStatus::Ok);
        assert_eq!(a, buf[0]);
        assert_eq!(d, NaDirection::Left);
        assert_eq!(na_anchor_table_nearest(t, 1e5, &mut a, &mut d), NaStatus::Ok);
        assert_eq!((a, d), (buf[1], NaDirection::Left));
        assert_eq!(na_anchor_table_nearest(t, 3000.0, &mut a, &mut d), NaStatus::Ok);
        assert_eq!((a, d), (buf[1], NaDirection::Right));
        na_anchor_table_free(t);
    }
}

#[test]
fn fit_rejects_bad_k() {
    let v = two_clusters();
    let mut t = ptr::null_mut();
    let s = unsafe { na_anchor_table_fit(v.as_ptr(), v.len(), 0, NaSpace::Linear, 1, 0, &mut t) };
    assert_eq!(s, NaStatus::Config);
    assert!(t.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn augment_then_strip_round_trips() {
    let t = fit(NaSpace::Linear);
    let text = CString::new("we sold 12 cows and 5003 sheep .").unwrap();
    for strategy in ["anchors", "ln-anchors", "anchors-dir", "ln-anchors-dir"] {
        let st = CString::new(strategy).unwrap();
        let mut out = ptr::null_mut();
        let s = unsafe { na_augment_text(t, st.as_ptr(), text.as_ptr(), &mut out) };
        if strategy.starts_with("ln") {
            // a linear table cannot serve a log strategy
            assert_eq!(s, NaStatus::Validation);
            assert!(out.is_null());
            continue;
        }
        assert_eq!(s, NaStatus::Ok, "{}", last_error());
        let augmented = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
        let dir = strategy.ends_with("dir");
        assert_eq!(augmented.contains("<ANC>"), !dir);
        assert_eq!(augmented.contains("<LA>") || augmented.contains("<RA>"), dir);
        let mut stripped = ptr::null_mut();
        assert_eq!(unsafe { na_strip_text(out, &mut stripped) }, NaStatus::Ok);
        assert_eq!(unsafe { CStr::from_ptr(stripped) }, text.as_c_str());
        unsafe {
            na_string_free(out);
            na_string_free(stripped);
        }
    }
    unsafe { na_anchor_table_free(t) };
}

#[test]
fn unknown_strategy_is_a_validation_error() {
    let t = fit(NaSpace::Linear);
    let st = CString::new("nearest").unwrap();
    let text = CString::new("1 2 3").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { na_augment_text(t, st.as_ptr(), text.as_ptr(), &mut out) }, NaStatus::Validation);
    assert!(last_error().contains("nearest"));
    unsafe { na_anchor_table_free(t) };
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        na_anchor_table_free(ptr::null_mut());
        na_checkpoint_free(ptr::null_mut());
        na_string_free(ptr::null_mut());
        assert_eq!(na_anchor_table_len(ptr::null()), 0);
        assert_eq!(na_checkpoint_dim(ptr::null()), 0);
        let mut buf = [0.0; 4];
        assert_eq!(na_checkpoint_embed(ptr::null(), 1.0, buf.as_mut_ptr(), 4), NaStatus::NullPointer);
    }
}

#[test]
fn missing_files_are_io_errors() {
    let p = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { na_checkpoint_load(p.as_ptr(), &mut c) }, NaStatus::Io);
    assert!(c.is_null());
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { na_anchor_table_read(p.as_ptr(), &mut t) }, NaStatus::Io);
}

#[test]
fn pipeline_dependency_error_maps_to_status() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("corpus.txt"), "there are 12 cows .\n").unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[corpus]\npath = \"corpus.txt\"\n[anchors]\nk = 1\n").unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    let stage = CString::new("augment").unwrap();
    assert_eq!(unsafe { na_pipeline_run(cfg.as_ptr(), stage.as_ptr()) }, NaStatus::Dependency);
    assert!(last_error().contains("anchors"));
    let bogus = CString::new("compile").unwrap();
    assert_eq!(unsafe { na_pipeline_run(cfg.as_ptr(), bogus.as_ptr()) }, NaStatus::Validation);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/numanchor.h");
    for f in [
        "na_last_error_message",
        "na_version",
        "na_string_free",
        "na_parse_numeral",
        "na_anchor_table_fit",
        "na_anchor_table_read",
        "na_anchor_table_free",
        "na_anchor_table_len",
        "na_anchor_table_space",
        "na_anchor_table_anchors",
        "na_anchor_table_nearest",
        "na_augment_text",
        "na_strip_text",
        "na_checkpoint_load",
        "na_checkpoint_free",
        "na_checkpoint_dim",
        "na_checkpoint_embed",
        "na_pipeline_run",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct NaAnchorTable NaAnchorTable;"));
}

#[test]
fn c_program_links_against_static_library() {
    let deps = std::env::current_exe().unwrap();
    let profile_dir = deps.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libnumanchor_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let root = env!("CARGO_MANIFEST_DIR");
    let cc = std::process::Command::new("cc")
        .arg(format!("{root}/tests/c/smoke.c"))
        .arg(format!("-I{root}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status();
    let Ok(status) = cc else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
