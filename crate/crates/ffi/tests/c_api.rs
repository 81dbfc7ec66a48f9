use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ambidoa::ambisonics::encode_plane_wave;
use ambidoa::dsp::synthetic_speech;
use ambidoa::nn::{save_model, Formulation, Network, NetworkConfig};
use ambidoa::sphere::{great_circle, Direction};
use ambidoa_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ambidoa_last_error()) }.to_string_lossy().into_owned()
}

fn planar(d: &Direction, seconds: usize) -> (Vec<f64>, usize) {
    let sig = encode_plane_wave(&synthetic_speech(16_000 * seconds, 3, 16_000), d, 16_000).unwrap();
    let n = sig.len();
    (sig.channels().concat(), n)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ambidoa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn gains_match_the_library() {
    let mut out = [0.0; 4];
    let s = unsafe { ambidoa_foa_gains(0.3, -0.2, out.as_mut_ptr()) };
    assert_eq!(s, AdoaStatus::Ok);
    assert_eq!(out, ambidoa::ambisonics::foa_gains(&Direction::from_angles(0.3, -0.2)));
    assert_eq!(unsafe { ambidoa_foa_gains(0.0, 0.0, ptr::null_mut()) }, AdoaStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { ambidoa_foa_gains(f64::NAN, 0.0, out.as_mut_ptr()) }, AdoaStatus::InvalidArgument);
}

#[test]
fn grid_handle_round_trip() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(ambidoa_grid_new(10.0, &mut g), AdoaStatus::Ok);
        let n = ambidoa_grid_len(g);
        assert_eq!(n, ambidoa::sphere::SphereGrid::new(10.0).unwrap().len());
        let (mut az, mut el) = (0.0, 0.0);
        assert_eq!(ambidoa_grid_center(g, 100, &mut az, &mut el), AdoaStatus::Ok);
        let mut idx = 0;
        assert_eq!(ambidoa_grid_nearest(g, az, el, &mut idx), AdoaStatus::Ok);
        assert_eq!(idx, 100);
        assert_eq!(ambidoa_grid_center(g, n, &mut az, &mut el), AdoaStatus::InvalidArgument);
        ambidoa_grid_free(g);
        ambidoa_grid_free(ptr::null_mut());
        assert_eq!(ambidoa_grid_len(ptr::null()), 0);

        let mut bad = ptr::null_mut();
        assert_eq!(ambidoa_grid_new(-1.0, &mut bad), AdoaStatus::InvalidArgument);
        assert!(bad.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn features_fill_the_buffer_and_check_its_size() {
    let (buf, n) = planar(&Direction::from_degrees(30.0, 0.0), 1);
    let bins = 513;
    let mut out = vec![0.0; 6 * 25 * bins];
    let s = unsafe { ambidoa_features(buf.as_ptr(), n, 16_000, 1024, 512, 25, out.as_mut_ptr(), out.len()) };
    assert_eq!(s, AdoaStatus::Ok, "{}", last_error());
    assert!(out.iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-9));
    assert!(out.iter().any(|v| *v != 0.0));
    let s = unsafe { ambidoa_features(buf.as_ptr(), n, 16_000, 1024, 512, 25, out.as_mut_ptr(), out.len() - 1) };
    assert_eq!(s, AdoaStatus::Shape);
    let s = unsafe { ambidoa_features(buf.as_ptr(), 100, 16_000, 1024, 512, 25, out.as_mut_ptr(), out.len()) };
    assert_eq!(s, AdoaStatus::Shape);
}

#[test]
fn music_finds_a_plane_wave() {
    let d = Direction::from_degrees(-60.0, 20.0);
    let (buf, n) = planar(&d, 2);
    unsafe {
        let mut g = ptr::null_mut();
        ambidoa_grid_new(10.0, &mut g);
        let (mut az, mut el) = (0.0, 0.0);
        let s = ambidoa_music_estimate(buf.as_ptr(), n, 16_000, g, &mut az, &mut el);
        assert_eq!(s, AdoaStatus::Ok, "{}", last_error());
        assert!(great_circle(&Direction::from_angles(az, el), &d).to_degrees() < 10.0);
        assert_eq!(
            ambidoa_music_estimate(buf.as_ptr(), n, 16_000, ptr::null(), &mut az, &mut el),
            AdoaStatus::NullPointer
        );
        ambidoa_grid_free(g);
    }
}

#[test]
fn model_load_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.adom");
    let net = Network::new(NetworkConfig::tiny(), Formulation::Cartesian, 7).unwrap();
    save_model(&net, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ambidoa_model_load(cpath.as_ptr(), &mut m), AdoaStatus::Ok, "{}", last_error());
        let (mut frames, mut bins, mut window, mut hop) = (0, 0, 0, 0);
        assert_eq!(ambidoa_model_input_shape(m, &mut frames, &mut bins, &mut window, &mut hop), AdoaStatus::Ok);
        assert_eq!((frames, bins, window, hop), (3, 16, 30, 15));
        let x: Vec<f64> = (0..6 * frames * bins).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        let (mut az, mut el) = (f64::NAN, f64::NAN);
        assert_eq!(ambidoa_model_predict(m, x.as_ptr(), x.len(), &mut az, &mut el), AdoaStatus::Ok);
        assert!(az.is_finite() && el.abs() <= std::f64::consts::FRAC_PI_2);
        assert_eq!(ambidoa_model_predict(m, x.as_ptr(), x.len() - 6, &mut az, &mut el), AdoaStatus::Shape);
        ambidoa_model_free(m);

        let missing = CString::new(dir.path().join("none.adom").to_str().unwrap()).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(ambidoa_model_load(missing.as_ptr(), &mut m), AdoaStatus::Io);
        std::fs::write(&path, b"garbage").unwrap();
        assert_eq!(ambidoa_model_load(cpath.as_ptr(), &mut m), AdoaStatus::Format);
        assert!(m.is_null());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ambidoa.h")).unwrap();
    for name in [
        "ambidoa_version",
        "ambidoa_last_error",
        "ambidoa_foa_gains",
        "ambidoa_grid_new",
        "ambidoa_grid_free",
        "ambidoa_grid_len",
        "ambidoa_grid_center",
        "ambidoa_grid_nearest",
        "ambidoa_features",
        "ambidoa_model_load",
        "ambidoa_model_free",
        "ambidoa_model_input_shape",
        "ambidoa_model_predict",
        "ambidoa_music_estimate",
        "ADOA_STATUS_OK = 0",
        "typedef struct AdoaModel AdoaModel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ambidoa.h\"\nint main(void) { double g[4]; return ambidoa_foa_gains(0.0, 0.0, g) == ADOA_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().map(|o| o.status.success()).unwrap_or(false) {
            return Ok(cc);
        }
    }
    Err(())
}
