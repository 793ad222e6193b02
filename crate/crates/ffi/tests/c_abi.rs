use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use spatial_qa::io::scene_to_json;
use spatial_qa::synth::{synth_scene, SynthConfig};
use spatial_qa_ffi::*;

fn fixture() -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/three_frame_scene.json");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = sq_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn load_fixture_and_count() {
    let mut scene = ptr::null_mut();
    let path = fixture();
    assert_eq!(unsafe { sq_scene_load(path.as_ptr(), &mut scene) }, SqStatus::Ok);
    unsafe {
        assert_eq!(sq_scene_frame_count(scene), 3);
        assert_eq!(sq_scene_object_count(scene), 2);
        assert_eq!(sq_scene_point_count(scene), 200);
        sq_scene_free(scene);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut scene = ptr::null_mut();
    let missing = CString::new("/nonexistent/scene.json").unwrap();
    assert_eq!(unsafe { sq_scene_load(missing.as_ptr(), &mut scene) }, SqStatus::Io);
    assert!(scene.is_null());
    assert!(last_error().contains("/nonexistent/scene.json"));

    let reflected = CString::new(
        r#"{"scene_id":"s","frames":[{"frame_id":"f","seq_index":0,
        "intrinsics":{"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480},
        "pose":{"rotation":[-1,0,0,0,1,0,0,0,1],"translation":[0,0,0]}}],"objects":[]}"#,
    )
    .unwrap();
    assert_eq!(unsafe { sq_scene_from_json(reflected.as_ptr(), &mut scene) }, SqStatus::Schema);
    assert!(last_error().contains("rotation"));

    assert_eq!(unsafe { sq_scene_load(ptr::null(), &mut scene) }, SqStatus::NullPointer);
    let bad_cfg = CString::new("nonsense_key = 1").unwrap();
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { sq_generate(ptr::null(), 0, bad_cfg.as_ptr(), &mut set) }, SqStatus::Config);
}

#[test]
fn generate_and_serialize() {
    let json = scene_to_json(&synth_scene("ffi", &SynthConfig::default(), 5));
    let text = CString::new(json).unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { sq_scene_from_json(text.as_ptr(), &mut scene) }, SqStatus::Ok);
    let handles = [scene as *const SqScene];
    let cfg = CString::new("seed = 3\n[cot]\nenabled = false\n").unwrap();
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { sq_generate(handles.as_ptr(), 1, cfg.as_ptr(), &mut set) }, SqStatus::Ok);
    let n = unsafe { sq_qa_set_len(set) };
    assert!(n > 0);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sq_qa_set_to_jsonl(set, &mut out) }, SqStatus::Ok);
    let body = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    assert!(body.starts_with("{\"schema\":\"spatial-qa/qa\",\"schema_version\":\"1\"}"));
    assert_eq!(body.lines().count(), n + 1);
    unsafe {
        sq_string_free(out);
        sq_qa_set_free(set);
        sq_scene_free(scene);
    }
}

#[test]
fn numeric_helpers() {
    let mut v = 0.0;
    assert_eq!(unsafe { sq_mra(2.2, 2.0, &mut v) }, SqStatus::Ok);
    assert!((v - 0.8).abs() < 1e-12);
    assert_eq!(unsafe { sq_mra(1.0, 0.0, &mut v) }, SqStatus::InvalidArgument);

    let input = [10.0, 50.0, 30.0];
    let mut out = [0.0; 3];
    assert_eq!(unsafe { sq_normalize_radar(input.as_ptr(), 3, out.as_mut_ptr()) }, SqStatus::Ok);
    assert_eq!(out[0], 0.2);
    assert_eq!(out[1], 1.0);
    assert_eq!(out[2], 0.6);
    assert_eq!(unsafe { sq_normalize_radar(input.as_ptr(), 0, out.as_mut_ptr()) }, SqStatus::InvalidArgument);
    assert!(!unsafe { CStr::from_ptr(sq_version()) }.to_bytes().is_empty());
}

#[test]
fn header_declares_every_export_and_compiles() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(dir.join("spatial_qa.h")).unwrap();
    for f in [
        "sq_last_error_message",
        "sq_version",
        "sq_scene_load",
        "sq_scene_from_json",
        "sq_scene_free",
        "sq_scene_frame_count",
        "sq_scene_object_count",
        "sq_scene_point_count",
        "sq_generate",
        "sq_qa_set_len",
        "sq_qa_set_to_jsonl",
        "sq_qa_set_free",
        "sq_string_free",
        "sq_mra",
        "sq_normalize_radar",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("SQ_STATUS_OK = 0"));

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"spatial_qa.h\"\nint main(void) { SqScene *s = 0; SqStatus st = sq_scene_load(\"x\", &s); \
         return st == SQ_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&dir)
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile as C99"),
        Err(e) => eprintln!("no C compiler available ({e}); syntax check skipped"),
    }
}
