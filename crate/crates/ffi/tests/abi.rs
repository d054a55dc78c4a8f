use std::ffi::{c_char, CStr};
use std::ptr;

use qchaos_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        qchaos_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn duffing_force_through_the_abi() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(qchaos_model_duffing(&mut m), QchaosStatus::Ok);
        let mut f = QchaosForce::default();
        assert_eq!(qchaos_model_force(m, 1.0, 0.0, &mut f), QchaosStatus::Ok);
        assert!((f.force - 8.0).abs() < 1e-12);
        assert!((f.gradient - 14.0).abs() < 1e-12);
        assert!((f.curvature + 12.0).abs() < 1e-12);
        let mut v = 0.0;
        assert_eq!(qchaos_model_potential(m, 2.0, 0.0, &mut v), QchaosStatus::Ok);
        assert!((v + 12.0).abs() < 1e-12);
        qchaos_model_free(m);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        let c = [0.0, 0.0, 0.5];
        let s = qchaos_model_new(c.as_ptr(), c.len(), 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, &mut m);
        assert_eq!(s, QchaosStatus::InvalidModel);
        assert!(m.is_null());
        assert!(last_error().contains("mass"), "{}", last_error());

        assert_eq!(qchaos_model_period(ptr::null(), ptr::null_mut()), QchaosStatus::NullPointer);

        let mut st = ptr::null_mut();
        let s = qchaos_state_coherent(-1.0, 1.0, 1, 1.0, 0.0, 0.0, 0.1, &mut st);
        assert_eq!(s, QchaosStatus::InvalidGrid);

        // success clears the message
        let mut m = ptr::null_mut();
        assert_eq!(qchaos_model_duffing(&mut m), QchaosStatus::Ok);
        assert_eq!(qchaos_last_error_message(ptr::null_mut(), 0), 0);
        qchaos_model_free(m);
    }
}

#[test]
fn conditioned_evolution_keeps_the_norm_and_replays() {
    unsafe {
        let mut base = ptr::null_mut();
        assert_eq!(qchaos_model_duffing(&mut base), QchaosStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(qchaos_model_with_parameters(base, 0.1, 1.0, 0.0, &mut m), QchaosStatus::Ok);
        let mut period = 0.0;
        qchaos_model_period(m, &mut period);
        let dt = period / 200.0;

        let run = || {
            let mut prop = ptr::null_mut();
            assert_eq!(qchaos_propagator_new(m, -6.5, 6.5, 512, dt, &mut prop), QchaosStatus::Ok);
            let mut st = ptr::null_mut();
            assert_eq!(qchaos_state_coherent(-6.5, 6.5, 512, 0.1, 2.0, 0.0, 0.05f64.sqrt(), &mut st), QchaosStatus::Ok);
            let mut noise = ptr::null_mut();
            assert_eq!(qchaos_noise_new(7, 3, dt, &mut noise), QchaosStatus::Ok);
            let mut dy = 0.0;
            assert_eq!(qchaos_propagator_sse(prop, st, noise, 200, &mut dy), QchaosStatus::Ok);
            let mut norm = 0.0;
            qchaos_state_norm(st, &mut norm);
            assert!((norm - 1.0).abs() < 1e-10);
            let mut mom = QchaosMoments::default();
            qchaos_state_moments(st, &mut mom);
            assert!((mom.t - period).abs() < 1e-12);
            assert!(mom.vx * mom.vp - mom.cxp * mom.cxp >= 0.0025 * (1.0 - 1e-9));
            let mut dens = vec![0.0; 512];
            assert_eq!(qchaos_state_density(st, dens.as_mut_ptr(), 512), QchaosStatus::Ok);
            assert_eq!(qchaos_state_density(st, dens.as_mut_ptr(), 10), QchaosStatus::InvalidArgument);
            qchaos_noise_free(noise);
            qchaos_state_free(st);
            qchaos_propagator_free(prop);
            (mom.x, mom.p, dy)
        };
        assert_eq!(run(), run());
        qchaos_model_free(m);
        qchaos_model_free(base);
    }
}

#[test]
fn sse_rejects_unmeasured_model() {
    unsafe {
        let mut base = ptr::null_mut();
        qchaos_model_duffing(&mut base);
        let mut m = ptr::null_mut();
        assert_eq!(qchaos_model_with_parameters(base, 1.0, 0.0, 0.0, &mut m), QchaosStatus::Ok);
        let mut prop = ptr::null_mut();
        assert_eq!(qchaos_propagator_new(m, -6.0, 6.0, 256, 1e-3, &mut prop), QchaosStatus::Ok);
        let mut st = ptr::null_mut();
        qchaos_state_coherent(-6.0, 6.0, 256, 1.0, 0.0, 0.0, 0.5f64.sqrt(), &mut st);
        let mut noise = ptr::null_mut();
        qchaos_noise_new(0, 0, 1e-3, &mut noise);
        assert_eq!(qchaos_propagator_sse(prop, st, noise, 1, ptr::null_mut()), QchaosStatus::InvalidArgument);
        assert_eq!(qchaos_propagator_isolated(prop, st, 10), QchaosStatus::Ok);
        qchaos_noise_free(noise);
        qchaos_state_free(st);
        qchaos_propagator_free(prop);
        qchaos_model_free(m);
        qchaos_model_free(base);
    }
}

#[test]
fn report_and_t_star() {
    unsafe {
        let mut base = ptr::null_mut();
        qchaos_model_duffing(&mut base);
        let mut m = ptr::null_mut();
        qchaos_model_with_parameters(base, 1e-2, 10.0, 0.0, &mut m);
        let mut ok = true;
        let mut json: *mut c_char = ptr::null_mut();
        let s = qchaos_strong_qct_report(m, 1.0, 0.0, 0.0, 30.0, 0.01, 0.01, &mut ok, &mut json);
        assert_eq!(s, QchaosStatus::Ok);
        assert!(!ok, "record fidelity fails at k = 10");
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        qchaos_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["entries"].as_array().unwrap().len() >= 5);

        // singular point: F(x, 0) vanishes
        let s = qchaos_strong_qct_report(m, 0.0, 0.0, std::f64::consts::FRAC_PI_2 / 6.07, 30.0, 0.01, 0.01, &mut ok, ptr::null_mut());
        assert_eq!(s, QchaosStatus::SingularPoint);

        let mut ts = QchaosTStar::default();
        assert_eq!(qchaos_t_star(0.5, 1e-3, 1.0, 100.0, 1.0, &mut ts), QchaosStatus::Ok);
        let fold = 100.0 * (-0.5 * ts.t_star).exp();
        assert!((fold - (1e-3 * ts.t_star / 0.5f64).sqrt()).abs() < 1e-9 * fold);
        assert_eq!(qchaos_t_star(-1.0, 1e-3, 1.0, 100.0, 1.0, &mut ts), QchaosStatus::InvalidArgument);
        qchaos_model_free(m);
        qchaos_model_free(base);
    }
}

#[test]
fn version_is_static_c_string() {
    let v = unsafe { CStr::from_ptr(qchaos_version()) };
    assert!(v.to_str().unwrap().starts_with("qchaos "));
}

#[test]
fn run_experiment_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[experiment]\nname = \"strong-qct\"\n").unwrap();
    let c = std::ffi::CString::new(path.to_str().unwrap()).unwrap();
    let s = unsafe { qchaos_run_experiment(c.as_ptr(), ptr::null(), ptr::null_mut()) };
    assert_eq!(s, QchaosStatus::ConfigError);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qchaos.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.trim().strip_prefix("pub unsafe extern \"C\" fn ").or_else(|| l.trim().strip_prefix("pub extern \"C\" fn ")))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from the header; rebuild with --features generate-header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"qchaos.h\"\nint main(void) { QchaosModel *m = 0; return qchaos_model_duffing(&m) == QCHAOS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "clang", "gcc"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
