//! Exercises the C ABI exactly as a foreign caller would: raw pointers,
//! C strings, status codes, and explicit frees.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use nalgebra::{Matrix3, Vector3};

use vpedit::scene::io::{load_scene, save_scene};
use vpedit::scene::{Camera, PointScene, ScenePoint};
use vpedit::trajectory::{save_trajectory, CameraPath};
use vpedit_ffi::*;

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let ptr = vp_last_error_message();
    assert!(!ptr.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string()
}

fn small_scene() -> PointScene {
    let mut points = Vec::new();
    for gy in 0..9 {
        for gx in 0..9 {
            let x = (gx as f64 - 4.0) * 0.5;
            let y = (gy as f64 - 4.0) * 0.5;
            let color = if (gx + gy) % 2 == 0 { [0.8, 0.3, 0.2] } else { [0.2, 0.5, 0.8] };
            points.push(ScenePoint { position: Vector3::new(x, y, 5.0), color, radius: 0.3 });
        }
    }
    PointScene::new(points).unwrap()
}

fn shift_path(count: usize) -> CameraPath {
    let cameras = (0..count)
        .map(|i| {
            Camera::new(
                80.0,
                80.0,
                32.0,
                32.0,
                64,
                64,
                Matrix3::identity(),
                Vector3::new(-(i as f64) * 0.5, 0.0, 0.0),
            )
            .unwrap()
        })
        .collect();
    CameraPath { cameras, key_indices: vec![0, count - 1] }
}

#[test]
fn edit_round_trip_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let scene_file = dir.path().join("scene.txt");
    let traj_file = dir.path().join("trajectory.txt");
    save_scene(&small_scene(), &scene_file).unwrap();
    save_trajectory(&shift_path(3), &traj_file).unwrap();

    unsafe {
        let mut scene: *mut VpScene = ptr::null_mut();
        assert_eq!(vp_scene_load(c_path(&scene_file).as_ptr(), &mut scene), VpStatus::Ok);
        let mut count = 0usize;
        assert_eq!(vp_scene_point_count(scene, &mut count), VpStatus::Ok);
        assert_eq!(count, 81);

        let mut path: *mut VpPath = ptr::null_mut();
        assert_eq!(vp_path_load(c_path(&traj_file).as_ptr(), &mut path), VpStatus::Ok);
        let mut frames = 0usize;
        assert_eq!(vp_path_frame_count(path, &mut frames), VpStatus::Ok);
        assert_eq!(frames, 3);

        let cfg = vp_config_new();
        for (k, v) in [
            ("steps", "6"),
            ("update_iters", "10"),
            ("editor", "recolor"),
            ("gain_g", "0.5"),
            ("bias_r", "0.3"),
        ] {
            assert_eq!(
                vp_config_set(cfg, cstr(k).as_ptr(), cstr(v).as_ptr()),
                VpStatus::Ok,
                "setting {k}={v}"
            );
        }
        assert_eq!(vp_config_set_seed(cfg, 9), VpStatus::Ok);

        let mut output: *mut VpOutput = ptr::null_mut();
        assert_eq!(vp_edit_run(scene, path, cfg, &mut output), VpStatus::Ok);

        let (mut r, mut i, mut s, mut u) = (0usize, 0usize, 0usize, 0usize);
        assert_eq!(vp_output_counters(output, &mut r, &mut i, &mut s, &mut u), VpStatus::Ok);
        assert_eq!((r, i, s, u), (1, 1, 1, 1), "each stage runs exactly once");

        let mut n = 0usize;
        assert_eq!(vp_output_frame_count(output, &mut n), VpStatus::Ok);
        assert_eq!(n, 3);
        let (mut h, mut w) = (0usize, 0usize);
        assert_eq!(vp_output_frame_size(output, &mut h, &mut w), VpStatus::Ok);
        assert_eq!((h, w), (64, 64));

        let mut buf = vec![0.0f32; h * w * 3];
        assert_eq!(vp_output_read_frame(output, 0, buf.as_mut_ptr(), buf.len()), VpStatus::Ok);
        assert!(buf.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));

        // Wrong index and wrong buffer length are input errors, not UB.
        assert_eq!(
            vp_output_read_frame(output, 99, buf.as_mut_ptr(), buf.len()),
            VpStatus::InvalidInput
        );
        assert!(last_error().contains("out of range"));
        assert_eq!(
            vp_output_read_frame(output, 0, buf.as_mut_ptr(), buf.len() - 1),
            VpStatus::InvalidInput
        );
        assert!(last_error().contains("needs exactly"));

        let (mut initial, mut final_) = (0.0f64, 0.0f64);
        assert_eq!(vp_output_losses(output, &mut initial, &mut final_), VpStatus::Ok);
        assert!(initial.is_finite() && final_.is_finite());
        assert!(final_ <= initial, "updating must not increase the loss");

        let mut cond = usize::MAX;
        assert_eq!(vp_output_condition_index(output, &mut cond), VpStatus::Ok);
        assert!(cond < 3);

        let mut updated: *mut VpScene = ptr::null_mut();
        assert_eq!(vp_output_updated_scene(output, &mut updated), VpStatus::Ok);
        let mut updated_count = 0usize;
        assert_eq!(vp_scene_point_count(updated, &mut updated_count), VpStatus::Ok);
        assert_eq!(updated_count, 81);

        let out_file = dir.path().join("updated.txt");
        assert_eq!(vp_scene_save(updated, c_path(&out_file).as_ptr()), VpStatus::Ok);
        assert_eq!(load_scene(&out_file).unwrap().len(), 81);

        vp_scene_free(updated);
        vp_output_free(output);
        vp_config_free(cfg);
        vp_path_free(path);
        vp_scene_free(scene);

        // Frees tolerate null.
        vp_scene_free(ptr::null_mut());
        vp_path_free(ptr::null_mut());
        vp_config_free(ptr::null_mut());
        vp_output_free(ptr::null_mut());
    }
}

#[test]
fn status_codes_and_messages_for_bad_inputs() {
    unsafe {
        // Fresh thread: no error recorded yet.
        assert!(vp_last_error_message().is_null());

        let mut scene: *mut VpScene = ptr::null_mut();
        let missing = cstr("/no/such/scene.txt");
        assert_eq!(vp_scene_load(missing.as_ptr(), &mut scene), VpStatus::InvalidInput);
        assert!(last_error().contains("cannot read"), "got: {}", last_error());
        assert!(scene.is_null(), "failed load must not hand out a handle");

        assert_eq!(vp_scene_load(missing.as_ptr(), ptr::null_mut()), VpStatus::NullPointer);
        assert!(last_error().contains("out is null"));

        assert_eq!(vp_scene_load(ptr::null(), &mut scene), VpStatus::NullPointer);

        let bad_utf8 = [0x66u8, 0xFF, 0x00];
        assert_eq!(
            vp_scene_load(bad_utf8.as_ptr() as *const _, &mut scene),
            VpStatus::Utf8
        );
        assert!(last_error().contains("not valid UTF-8"));

        let cfg = vp_config_new();
        assert_eq!(
            vp_config_set(cfg, cstr("nope").as_ptr(), cstr("1").as_ptr()),
            VpStatus::Parse
        );
        assert!(last_error().contains("unknown config key"));
        assert_eq!(
            vp_config_set(cfg, cstr("eta").as_ptr(), cstr("1.2").as_ptr()),
            VpStatus::InvalidInput
        );
        assert!(last_error().contains("eta out of range"));
        // A rejected override leaves the config usable.
        assert_eq!(
            vp_config_set(cfg, cstr("eta").as_ptr(), cstr("0.4").as_ptr()),
            VpStatus::Ok
        );
        assert_eq!(
            vp_config_set(ptr::null_mut(), cstr("eta").as_ptr(), cstr("0.4").as_ptr()),
            VpStatus::NullPointer
        );
        vp_config_free(cfg);

        let mut path: *mut VpPath = ptr::null_mut();
        assert_eq!(vp_path_demo(1, &mut path), VpStatus::InvalidInput);
        assert!(last_error().contains("trajectory too short"));
    }
}

#[test]
fn demo_fixtures_and_version_are_exposed() {
    unsafe {
        let version = CStr::from_ptr(vp_version()).to_str().unwrap();
        assert_eq!(version, env!("CARGO_PKG_VERSION"));

        let scene = vp_scene_demo();
        let mut count = 0usize;
        assert_eq!(vp_scene_point_count(scene, &mut count), VpStatus::Ok);
        assert_eq!(count, 2880);
        vp_scene_free(scene);

        let mut path: *mut VpPath = ptr::null_mut();
        assert_eq!(vp_path_demo(25, &mut path), VpStatus::Ok);
        let mut frames = 0usize;
        assert_eq!(vp_path_frame_count(path, &mut frames), VpStatus::Ok);
        assert_eq!(frames, 25);
        vp_path_free(path);
    }
}
