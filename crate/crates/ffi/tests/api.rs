use std::ffi::{CStr, CString};
use std::ptr;

use pointdr::checkpoint;
use pointdr::io::{write_labels, write_scan};
use pointdr::labels::LabelMap;
use pointdr::model::{Model, ModelConfig};
use pointdr::toy::{generate_scene, ToyBenchmark};
use pointdr_ffi::*;

fn last_error() -> String {
    let p = pdr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scene() -> pointdr::PointCloud {
    generate_scene(&ToyBenchmark::default(), 4).unwrap()
}

fn to_handle(c: &pointdr::PointCloud) -> *mut PdrCloud {
    let xyzi: Vec<f32> = c.points().iter().flat_map(|p| [p.x, p.y, p.z, p.intensity]).collect();
    let labels = c.labels().unwrap();
    let mut h = ptr::null_mut();
    let s = unsafe { pdr_cloud_from_arrays(xyzi.as_ptr(), c.len(), labels.as_ptr(), &mut h) };
    assert_eq!(s, PdrStatus::Ok);
    h
}

#[test]
fn arrays_round_trip() {
    let c = scene();
    let h = to_handle(&c);
    unsafe {
        assert_eq!(pdr_cloud_len(h), c.len());
        assert!(pdr_cloud_has_labels(h));
        let mut pts = vec![0f32; 4 * c.len()];
        assert_eq!(pdr_cloud_copy_points(h, pts.as_mut_ptr(), c.len()), PdrStatus::Ok);
        assert_eq!(pts[4], c.points()[1].x);
        let mut labels = vec![0u8; c.len()];
        assert_eq!(pdr_cloud_copy_labels(h, labels.as_mut_ptr(), c.len()), PdrStatus::Ok);
        assert_eq!(labels, c.labels().unwrap());
        assert_eq!(pdr_cloud_copy_labels(h, labels.as_mut_ptr(), 1), PdrStatus::Argument);
        assert!(last_error().contains("capacity"));
        pdr_cloud_free(h);
    }
}

#[test]
fn reads_files_and_reports_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = scene();
    let scan = dir.path().join("s.bin");
    let label = dir.path().join("s.label");
    write_scan(&c, &scan).unwrap();
    write_labels(c.labels().unwrap(), &label, &LabelMap::semantic_kitti()).unwrap();
    let scan_c = CString::new(scan.to_str().unwrap()).unwrap();
    let label_c = CString::new(label.to_str().unwrap()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(pdr_cloud_read(scan_c.as_ptr(), label_c.as_ptr(), &mut h), PdrStatus::Ok);
        assert_eq!(pdr_cloud_len(h), c.len());
        pdr_cloud_free(h);

        let mut h = ptr::null_mut();
        assert_eq!(pdr_cloud_read(scan_c.as_ptr(), ptr::null(), &mut h), PdrStatus::Ok);
        assert!(!pdr_cloud_has_labels(h));
        pdr_cloud_free(h);

        let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(pdr_cloud_read(missing.as_ptr(), ptr::null(), &mut h), PdrStatus::Io);
        assert!(h.is_null());
        assert!(last_error().contains("nope.bin"));
    }
}

#[test]
fn null_and_invalid_arguments() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(pdr_cloud_from_arrays(ptr::null(), 3, ptr::null(), &mut h), PdrStatus::NullPointer);
        assert_eq!(pdr_cloud_read(ptr::null(), ptr::null(), &mut h), PdrStatus::NullPointer);
        assert_eq!(pdr_cloud_len(ptr::null()), 0);
        pdr_cloud_free(ptr::null_mut());
        pdr_model_free(ptr::null_mut());

        let bad = [f32::NAN, 0.0, 0.0, 0.0];
        assert_eq!(pdr_cloud_from_arrays(bad.as_ptr(), 1, ptr::null(), &mut h), PdrStatus::Argument);
        let ok = [1.0f32, 0.0, 0.0, 0.5];
        let label = [255u8];
        assert_eq!(pdr_cloud_from_arrays(ok.as_ptr(), 1, label.as_ptr(), &mut h), PdrStatus::Argument);
    }
}

#[test]
fn augmentation_and_weather() {
    let c = scene();
    let h = to_handle(&c);
    unsafe {
        let (mut a, mut b, mut w) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(pdr_augment_weak(h, 9, &mut a), PdrStatus::Ok);
        assert_eq!(pdr_cloud_len(a), c.len());
        assert_eq!(pdr_augment_strong(h, 9, &mut b), PdrStatus::Ok);
        assert!(pdr_cloud_has_labels(b));
        assert_eq!(pdr_weather_corrupt(h, PdrWeather::Snow as u32, 1, &mut w), PdrStatus::Ok);
        assert_eq!(pdr_cloud_len(w), c.len() + 1000);
        let mut x = ptr::null_mut();
        assert_eq!(pdr_weather_corrupt(h, 9, 1, &mut x), PdrStatus::Argument);
        for p in [a, b, w, h] {
            pdr_cloud_free(p);
        }
    }
}

#[test]
fn model_predicts_valid_classes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = Model::new(ModelConfig::default(), 3).unwrap();
    checkpoint::save(&path, &model, None).unwrap();
    let path_c = CString::new(path.to_str().unwrap()).unwrap();
    let c = scene();
    let h = to_handle(&c);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(pdr_model_load(path_c.as_ptr(), &mut m), PdrStatus::Ok);
        assert_eq!(pdr_model_num_classes(m), 19);
        let mut preds = vec![0u8; c.len()];
        assert_eq!(pdr_model_predict(m, h, preds.as_mut_ptr(), preds.len()), PdrStatus::Ok);
        assert!(preds.iter().all(|&p| p < 19));
        pdr_model_free(m);
        pdr_cloud_free(h);

        std::fs::write(&path, b"garbage").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(pdr_model_load(path_c.as_ptr(), &mut m), PdrStatus::Format);
    }
}

#[test]
fn contrastive_loss_hand_case() {
    let f = [1.0f64, 0.0];
    let labels = [0u8];
    let protos = [1.0f64, 0.0, 0.0, 1.0];
    let mut loss = 0.0;
    let mut grad = [0.0f64; 2];
    unsafe {
        let s = pdr_contrastive_loss(
            f.as_ptr(),
            labels.as_ptr(),
            1,
            2,
            protos.as_ptr(),
            ptr::null(),
            2,
            1.0,
            &mut loss,
            grad.as_mut_ptr(),
        );
        assert_eq!(s, PdrStatus::Ok);
        let e = std::f64::consts::E;
        assert!((loss + (e / (e + 1.0)).ln()).abs() < 1e-12);
        // ∂/∂f = (p − onehot)·B / τ
        let p0 = e / (e + 1.0);
        assert!((grad[0] - (p0 - 1.0)).abs() < 1e-12);
        assert!((grad[1] - (1.0 - p0)).abs() < 1e-12);

        let s = pdr_contrastive_loss(
            f.as_ptr(),
            labels.as_ptr(),
            1,
            2,
            protos.as_ptr(),
            ptr::null(),
            2,
            0.0,
            &mut loss,
            ptr::null_mut(),
        );
        assert_eq!(s, PdrStatus::Argument);
        assert!(last_error().contains("temperature"));
    }
}

#[test]
fn header_is_valid_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pointdr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["pdr_cloud_read", "pdr_model_predict", "pdr_contrastive_loss", "typedef struct PdrCloud PdrCloud"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ PdrCloud *c = 0; return (int)pdr_cloud_len(c) + PDR_STATUS_OK; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&src).status() {
        Ok(status) => assert!(status.success(), "header does not compile as C"),
        Err(_) => eprintln!("no C compiler available; skipped syntax check"),
    }
}
