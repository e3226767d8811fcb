use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::ptr;

use pocketseg::arch::{save_checkpoint, ArchitectureSpec, CheckpointMeta, ModelName, Network, PocketUNetConfig};
use pocketseg::preprocess::SeededRng;
use pocketseg::volume::{voxel_count, Sequence, Study, Volume3D};
use pocketseg_ffi::*;

const DIMS: [usize; 3] = [8, 8, 8];
const SPACING: [f64; 3] = [1.0, 1.0, 1.5];

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe { ps_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn write_model(dir: &std::path::Path) -> (CString, Network<f32>, Vec<Sequence>) {
    let subsets = vec![Sequence::T1C, Sequence::FL];
    let spec = ArchitectureSpec::Pocket(PocketUNetConfig::new(2, 2, 1));
    let net = Network::build(&spec, &mut SeededRng::new(5)).unwrap();
    let meta = CheckpointMeta {
        model: ModelName::Baseline(subsets.clone()),
        subsets: subsets.clone(),
        architecture: spec,
        epoch: 1,
        val_dice: Some(0.5),
        seed: 5,
    };
    let path = dir.join("m.ckpt");
    save_checkpoint(&path, &meta, &net).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), net, subsets)
}

fn inputs() -> Vec<f32> {
    let n = voxel_count(DIMS);
    (0..2 * n).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect()
}

#[test]
fn prediction_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, net, subsets) = write_model(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ps_model_load(path.as_ptr(), &mut model) }, PsStatus::Ok);
    assert!(!model.is_null());
    unsafe {
        assert_eq!(CStr::from_ptr(ps_model_name(model)).to_str().unwrap(), "BM[T1C,FL]");
        assert_eq!(ps_model_input_count(model), 2);
        assert_eq!(CStr::from_ptr(ps_model_input_sequence(model, 1)).to_str().unwrap(), "FL");
        assert!(ps_model_input_sequence(model, 2).is_null());
    }

    let n = voxel_count(DIMS);
    let x = inputs();
    let mut prob = vec![0f32; n];
    let mut mask = vec![9u8; n];
    let status = unsafe {
        ps_model_predict(model, DIMS.as_ptr(), SPACING.as_ptr(), x.as_ptr(), 8, 4, prob.as_mut_ptr(), mask.as_mut_ptr())
    };
    assert_eq!(status, PsStatus::Ok, "{}", last_error());

    let mut sequences = BTreeMap::new();
    for (seq, chunk) in subsets.iter().zip(x.chunks(n)) {
        sequences.insert(*seq, Volume3D::new(DIMS, SPACING, chunk.to_vec()).unwrap());
    }
    let study = Study {
        study_id: "s".into(),
        patient_id: "p".into(),
        sequences,
        gtv: None,
    };
    let expected = pocketseg::preprocess::sliding_window_predict(&net, &study, &subsets, 8, 4).unwrap();
    assert_eq!(prob, expected.class_plane(1));
    assert_eq!(mask, expected.argmax_mask().values());
    unsafe { ps_model_free(model) };
}

#[test]
fn load_errors_are_reported() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/nonexistent/m.ckpt").unwrap();
    assert_eq!(unsafe { ps_model_load(missing.as_ptr(), &mut model) }, PsStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("/nonexistent/m.ckpt"));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    let status = unsafe { ps_model_load(junk.as_ptr(), &mut model) };
    assert_ne!(status, PsStatus::Ok);
    assert!(model.is_null());

    assert_eq!(unsafe { ps_model_load(ptr::null(), &mut model) }, PsStatus::NullPointer);
    assert_eq!(last_error(), "path is null");
    unsafe { ps_model_free(ptr::null_mut()) };
    assert!(unsafe { ps_model_name(ptr::null()) }.is_null());
    assert_eq!(unsafe { ps_model_input_count(ptr::null()) }, 0);
}

#[test]
fn predict_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _, _) = write_model(dir.path());
    let mut model = ptr::null_mut();
    unsafe { ps_model_load(path.as_ptr(), &mut model) };
    let x = inputs();
    let run = |dims: [usize; 3], patch: usize| unsafe {
        ps_model_predict(model, dims.as_ptr(), SPACING.as_ptr(), x.as_ptr(), patch, 4, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(run(DIMS, 0), PsStatus::InvalidArgument);
    assert_eq!(run([0, 8, 8], 8), PsStatus::InvalidArgument);
    let mut nan = x.clone();
    nan[3] = f32::NAN;
    let status = unsafe {
        ps_model_predict(model, DIMS.as_ptr(), SPACING.as_ptr(), nan.as_ptr(), 8, 4, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(status, PsStatus::InvalidArgument);
    let status = unsafe {
        ps_model_predict(model, DIMS.as_ptr(), SPACING.as_ptr(), ptr::null(), 8, 4, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(status, PsStatus::NullPointer);
    unsafe { ps_model_free(model) };
}

#[test]
fn metrics_through_the_boundary() {
    let dims = [4usize, 4, 4];
    let n = voxel_count(dims);
    let truth: Vec<u8> = (0..n).map(|i| u8::from(i < 16)).collect();
    let pred: Vec<u8> = (0..n).map(|i| u8::from((8..24).contains(&i))).collect();
    let mut out = f64::NAN;
    let call = |f: unsafe extern "C" fn(*const u8, *const u8, *const usize, *const f64, *mut f64) -> PsStatus,
                p: &[u8],
                t: &[u8],
                out: &mut f64| unsafe { f(p.as_ptr(), t.as_ptr(), dims.as_ptr(), SPACING.as_ptr(), out) };
    assert_eq!(call(ps_dice, &pred, &truth, &mut out), PsStatus::Ok);
    assert_eq!(out, 0.5);
    assert_eq!(call(ps_fpe, &pred, &truth, &mut out), PsStatus::Ok);
    assert_eq!(out, 0.5);
    assert_eq!(call(ps_fne, &pred, &truth, &mut out), PsStatus::Ok);
    assert_eq!(out, 0.5);
    assert_eq!(call(ps_hd95, &truth, &truth, &mut out), PsStatus::Ok);
    assert_eq!(out, 0.0);

    let empty = vec![0u8; n];
    assert_eq!(call(ps_hd95, &empty, &truth, &mut out), PsStatus::UndefinedMetric);
    assert_eq!(call(ps_fpe, &empty, &truth, &mut out), PsStatus::UndefinedMetric);
    let bad = vec![2u8; n];
    assert_eq!(call(ps_dice, &bad, &truth, &mut out), PsStatus::Shape);
    assert!(!last_error().is_empty());
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut model = ptr::null_mut();
    unsafe { ps_model_load(ptr::null(), &mut model) };
    let mut buf = [0 as std::ffi::c_char; 5];
    let full = unsafe { ps_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(full, "path is null".len());
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "path");
    assert_eq!(unsafe { ps_last_error_message(ptr::null_mut(), 0) }, full);
    let v = unsafe { CStr::from_ptr(ps_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pocketseg.h")).unwrap();
    for name in [
        "ps_version",
        "ps_last_error_message",
        "ps_model_load",
        "ps_model_free",
        "ps_model_name",
        "ps_model_input_count",
        "ps_model_input_sequence",
        "ps_model_predict",
        "ps_dice",
        "ps_hd95",
        "ps_fpe",
        "ps_fne",
        "PS_STATUS_UNDEFINED_METRIC = 7",
        "typedef struct PsModel PsModel;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pocketseg.h"))
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
