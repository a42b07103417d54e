use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fleetpower_ffi::*;

fn last_error() -> String {
    unsafe {
        let n = fp_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; n + 1];
        fp_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
        buf.truncate(n);
        String::from_utf8(buf).unwrap()
    }
}

#[test]
fn greybox_and_white_box_values() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(fp_greybox_power(30000.0, 0.0, 10.0, 5.0, 1.0, &mut out), FpStatus::Ok);
        assert_eq!(out, 3.0e7);
        assert_eq!(fp_greybox_power(0.0, 50.0, 5.0, 10.0, 0.0, &mut out), FpStatus::Ok);
        assert_eq!(out, 2.5e4);

        assert_eq!(fp_ittc_friction_coefficient(1e9, &mut out), FpStatus::Ok);
        assert!((out - 0.075 / 49.0).abs() <= 1e-15);

        let hull = FpHull {
            lwl: 300.0,
            breadth: 36.0,
            draft: 8.5,
            wetted_surface: 10000.0,
            residual_coeff: 1e-3,
        };
        assert_eq!(fp_steam2_power(&hull, 0.0, 0.0, 10.0, &mut out), FpStatus::Ok);
        let re: f64 = 10.0 * 300.0 / 1.188e-6;
        let cf = 0.075 / (re.log10() - 2.0).powi(2);
        let expect = (cf * 512.5 * 10000.0 * 100.0 + 1e-3 * 512.5 * (36.0 * 8.5 / 10.0) * 100.0) * 10.0;
        assert!(((out - expect) / expect).abs() < 1e-12);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    let mut out = 7.0;
    unsafe {
        assert_eq!(fp_greybox_power(1.0, 1.0, -1.0, 0.0, 0.0, &mut out), FpStatus::InvalidInput);
        assert_eq!(out, 7.0, "outputs are untouched on failure");
        assert!(last_error().contains("speed"));
        assert_eq!(fp_greybox_power(1.0, 1.0, 1.0, 0.0, 0.0, ptr::null_mut()), FpStatus::NullPointer);
        assert_eq!(fp_ittc_friction_coefficient(50.0, &mut out), FpStatus::InvalidInput);
        assert_eq!(fp_steam2_power(ptr::null(), 0.0, 0.0, 1.0, &mut out), FpStatus::NullPointer);
        assert_eq!(fp_greybox_power(1.0, 1.0, 1.0, 0.0, 0.0, &mut out), FpStatus::Ok);
        assert_eq!(last_error(), "");
    }
}

/// Two ships with noise-free data from known coefficients.
unsafe fn demo_fleet() -> *mut FpFleet {
    let fleet = fp_fleet_new();
    for (id, gt, a, b) in [("s1", 50_000.0, 20_000.0, 900.0), ("s2", 120_000.0, 35_000.0, 1500.0)] {
        let speeds: Vec<f64> = (0..30).map(|k| 4.0 + 0.25 * k as f64).collect();
        let xh: Vec<f64> = speeds.iter().map(|v| v * v * v).collect();
        let xa: Vec<f64> = speeds.iter().enumerate().map(|(k, v)| ((k as f64).cos() * 40.0) * v).collect();
        let y: Vec<f64> = xh.iter().zip(&xa).map(|(h, x)| a * h + b * x + 1e3 * (h * 0.37).sin()).collect();
        let id = CString::new(id).unwrap();
        let st = fp_fleet_add_ship(fleet, id.as_ptr(), gt, xh.as_ptr(), xa.as_ptr(), y.as_ptr(), y.len());
        assert_eq!(st, FpStatus::Ok, "{}", last_error());
    }
    fleet
}

#[test]
fn fit_access_and_predict() {
    unsafe {
        let fleet = demo_fleet();
        assert_eq!(fp_fleet_num_ships(fleet), 2);
        let dup = CString::new("s1").unwrap();
        let one = [1.0];
        assert_eq!(
            fp_fleet_add_ship(fleet, dup.as_ptr(), 1.0, one.as_ptr(), one.as_ptr(), one.as_ptr(), 1),
            FpStatus::InvalidInput
        );

        let mut cfg = fp_sampler_config_default();
        assert_eq!(cfg.chains, 4);
        cfg.chains = 2;
        cfg.iterations = 400;
        cfg.warmup = 200;
        cfg.seed = 5;
        let mut post: *mut FpPosterior = ptr::null_mut();
        assert_eq!(fp_fit_hierarchical(fleet, &cfg, &mut post), FpStatus::Ok, "{}", last_error());
        assert_eq!(fp_posterior_num_params(post), 12);
        assert_eq!(fp_posterior_num_chains(post), 2);
        assert_eq!(fp_posterior_num_draws(post), 200);

        let mut name = [0 as c_char; 32];
        let n = fp_posterior_param_name(post, 0, name.as_mut_ptr(), name.len());
        assert_eq!(n, 5);
        let s: Vec<u8> = name[..n].iter().map(|&c| c as u8).collect();
        assert_eq!(s, b"a[s1]");
        assert_eq!(fp_posterior_param_name(post, 99, ptr::null_mut(), 0), 0);

        let pname = CString::new("a[s1]").unwrap();
        let mut draws = vec![0.0; 400];
        assert_eq!(fp_posterior_draws(post, pname.as_ptr(), draws.as_mut_ptr(), 400), FpStatus::Ok);
        let mean = draws.iter().sum::<f64>() / 400.0;
        assert!((mean - 20_000.0).abs() < 200.0, "posterior mean {mean}");
        assert_eq!(
            fp_posterior_draws(post, pname.as_ptr(), draws.as_mut_ptr(), 10),
            FpStatus::BufferTooSmall
        );
        let missing = CString::new("a[zz]").unwrap();
        assert_eq!(
            fp_posterior_draws(post, missing.as_ptr(), draws.as_mut_ptr(), 400),
            FpStatus::MissingParameter
        );

        let (mut rhat, mut ess) = (0.0, 0.0);
        assert_eq!(fp_posterior_convergence(post, pname.as_ptr(), &mut rhat, &mut ess), FpStatus::Ok);
        assert!(rhat > 0.9 && ess > 0.0);

        let speeds = [0.0, 5.0, 10.0];
        let mut bands = [[0.0; 3]; 5];
        let [m, p25, p75, p025, p975] = &mut bands;
        let out = FpEnvelopeOut {
            median: m.as_mut_ptr(),
            p25: p25.as_mut_ptr(),
            p75: p75.as_mut_ptr(),
            p025: p025.as_mut_ptr(),
            p975: p975.as_mut_ptr(),
        };
        let ship = CString::new("s2").unwrap();
        assert_eq!(
            fp_predict_ship_specific(post, ship.as_ptr(), speeds.as_ptr(), 3, 0.0, &out),
            FpStatus::Ok
        );
        assert_eq!(bands[0][0], 0.0);
        assert!(bands[3][2] <= bands[1][2] && bands[1][2] <= bands[0][2]);
        let unknown = CString::new("nope").unwrap();
        assert_eq!(
            fp_predict_ship_specific(post, unknown.as_ptr(), speeds.as_ptr(), 3, 0.0, &out),
            FpStatus::UnknownShip
        );
        assert_eq!(
            fp_predict_prior_based(post, 80_000.0, speeds.as_ptr(), 3, 0.0, true, 9, &out),
            FpStatus::Ok
        );
        for j in 0..3 {
            assert!(bands[3][j] <= bands[1][j] && bands[1][j] <= bands[0][j]);
            assert!(bands[0][j] <= bands[2][j] && bands[2][j] <= bands[4][j]);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.csv").to_str().unwrap()).unwrap();
        assert_eq!(fp_posterior_save_csv(post, path.as_ptr()), FpStatus::Ok);
        let mut back: *mut FpPosterior = ptr::null_mut();
        assert_eq!(fp_posterior_load_csv(path.as_ptr(), &mut back), FpStatus::Ok);
        let mut again = vec![0.0; 400];
        assert_eq!(fp_posterior_draws(back, pname.as_ptr(), again.as_mut_ptr(), 400), FpStatus::Ok);
        assert_eq!(again, draws);

        let mut indep: *mut FpPosterior = ptr::null_mut();
        assert_eq!(fp_fit_independent(fleet, &cfg, &mut indep), FpStatus::Ok);
        assert_eq!(fp_posterior_num_params(indep), 6);

        let bad = CString::new("/nonexistent/p.csv").unwrap();
        let mut none: *mut FpPosterior = ptr::null_mut();
        assert_eq!(fp_posterior_load_csv(bad.as_ptr(), &mut none), FpStatus::Io);
        assert!(none.is_null());

        fp_posterior_free(indep);
        fp_posterior_free(back);
        fp_posterior_free(post);
        fp_posterior_free(ptr::null_mut());
        fp_fleet_free(fleet);
        fp_fleet_free(ptr::null_mut());
    }
}

#[test]
fn zero_iterations_rejected() {
    unsafe {
        let fleet = demo_fleet();
        let mut cfg = fp_sampler_config_default();
        cfg.iterations = 0;
        let mut post: *mut FpPosterior = ptr::null_mut();
        assert_eq!(fp_fit_hierarchical(fleet, &cfg, &mut post), FpStatus::InvalidInput);
        assert!(post.is_null());
        fp_fleet_free(fleet);
    }
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("fleetpower.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for f in [
        "fp_last_error_message",
        "fp_greybox_power",
        "fp_steam2_power",
        "fp_fleet_new",
        "fp_fleet_add_ship",
        "fp_fit_hierarchical",
        "fp_fit_independent",
        "fp_posterior_draws",
        "fp_predict_prior_based",
        "fp_posterior_free",
        "typedef struct FpPosterior FpPosterior",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"fleetpower.h\"\nint main(void) { double p; return fp_greybox_power(1, 0, 2, 0, 0, &p) == FP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(&extra)
            .arg("-Wall")
            .arg("-Werror")
            .arg("-fsyntax-only")
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .status();
        if let Ok(status) = status {
            assert!(status.success(), "{compiler} rejected the header");
        }
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "fleetpower.h"

int main(void) {
    double x[3][20], p;
    FpFleet *fleet = fp_fleet_new();
    const char *ids[2] = {"alpha", "beta"};
    double gts[2] = {60000.0, 110000.0};
    for (int s = 0; s < 2; s++) {
        for (int k = 0; k < 20; k++) {
            double v = 5.0 + 0.3 * k;
            x[0][k] = v * v * v;
            x[1][k] = ((k % 3) - 1) * 30.0 * v;
            x[2][k] = (20000.0 + 10000.0 * s) * x[0][k] + 1000.0 * x[1][k] + ((k % 2) ? 5e3 : -5e3);
        }
        if (fp_fleet_add_ship(fleet, ids[s], gts[s], x[0], x[1], x[2], 20) != FP_STATUS_OK) return 2;
    }
    FpSamplerConfig cfg = fp_sampler_config_default();
    cfg.chains = 2; cfg.iterations = 300; cfg.warmup = 100;
    FpPosterior *post = NULL;
    if (fp_fit_hierarchical(fleet, &cfg, &post) != FP_STATUS_OK) return 3;
    double speeds[2] = {5.0, 10.0}, med[2], a[2], b[2], c[2], d[2];
    FpEnvelopeOut out = {med, a, b, c, d};
    if (fp_predict_ship_specific(post, "beta", speeds, 2, 0.0, &out) != FP_STATUS_OK) return 4;
    if (fp_predict_ship_specific(post, "gamma", speeds, 2, 0.0, &out) != FP_STATUS_UNKNOWN_SHIP) return 5;
    char msg[128];
    fp_last_error_message(msg, sizeof msg);
    if (fp_greybox_power(1.0, 0.0, 2.0, 0.0, 0.0, &p) != FP_STATUS_OK || p != 8.0) return 6;
    printf("%.0f %s\n", med[1] / 1e6, msg);
    fp_posterior_free(post);
    fp_fleet_free(fleet);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libfleetpower_ffi.so").exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("shared library or C compiler unavailable; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lfleetpower_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C program failed to build");
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}: {stdout}", out.status.code());
    // 30000 * 10^3 W = 30 MW for the second ship.
    assert!(stdout.starts_with("30 "), "{stdout}");
    assert!(stdout.contains("unknown ship"), "{stdout}");
}
