use std::ffi::{CStr, CString};
use std::ptr;

use casimir_core::hypforce::{self, LayerStack, YukawaParams};
use casimir_core::lifshitz::{self, ReflectionKind, ReflectionModel, ThermalState};
use casimir_core::optics::{Drude, DrudeParameters, PermittivityFn};
use casimir_ffi::*;

const OMEGA_P: f64 = 1.37e16;
const GAMMA: f64 = 5.3e13;

fn last_error() -> String {
    unsafe { CStr::from_ptr(casimir_last_error()) }.to_string_lossy().into_owned()
}

fn new_model(kind: CasimirKind) -> *mut CasimirModel {
    let mut m = ptr::null_mut();
    let status = unsafe { casimir_model_new(kind as u32, OMEGA_P, GAMMA, &mut m) };
    assert_eq!(status, CasimirStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

#[test]
fn version_mentions_package() {
    let v = unsafe { CStr::from_ptr(casimir_version()) }.to_str().unwrap().to_owned();
    assert!(v.starts_with(env!("CARGO_PKG_VERSION")), "{v}");
}

#[test]
fn pressure_matches_core() {
    let m = new_model(CasimirKind::LifshitzPlasma);
    let mut p = 0.0;
    let status = unsafe { casimir_pressure(m, 300e-9, 300.0, &mut p) };
    assert_eq!(status, CasimirStatus::Ok, "{}", last_error());
    assert!(last_error().is_empty());

    let eps: PermittivityFn = std::sync::Arc::new(Drude(DrudeParameters::new(OMEGA_P, GAMMA).unwrap()));
    let model = ReflectionModel::new(ReflectionKind::LifshitzPlasma, eps, OMEGA_P).unwrap();
    let state = ThermalState::new(300.0, None, 1e-9).unwrap();
    let expected = lifshitz::casimir_pressure(&model, 300e-9, &state).unwrap();
    assert_eq!(p, expected);
    assert!(p < 0.0);

    let mut e = 0.0;
    assert_eq!(unsafe { casimir_free_energy(m, 300e-9, 300.0, &mut e) }, CasimirStatus::Ok);
    assert!(e < 0.0);
    unsafe { casimir_model_free(m) };
}

#[test]
fn permittivity_and_reflection() {
    let m = new_model(CasimirKind::LifshitzDrude);
    let mut eps = 0.0;
    assert_eq!(unsafe { casimir_permittivity(m, 1e15, &mut eps) }, CasimirStatus::Ok);
    let expected = 1.0 + OMEGA_P * OMEGA_P / (1e15 * (1e15 + GAMMA));
    assert!((eps - expected).abs() / expected < 1e-12, "{eps} vs {expected}");

    let (mut tm, mut te) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { casimir_reflection(m, 1e15, 1e6, 1, &mut tm, &mut te) }, CasimirStatus::Ok);
    assert!(tm > 0.0 && tm <= 1.0 && te > 0.0 && te <= 1.0, "{tm} {te}");
    unsafe { casimir_model_free(m) };
}

#[test]
fn null_pointers_are_reported() {
    let status = unsafe { casimir_model_new(0, OMEGA_P, GAMMA, ptr::null_mut()) };
    assert_eq!(status, CasimirStatus::NullPointer);
    assert!(last_error().contains("model_out"), "{}", last_error());

    let mut p = 0.0;
    let status = unsafe { casimir_pressure(ptr::null(), 300e-9, 300.0, &mut p) };
    assert_eq!(status, CasimirStatus::NullPointer);

    // Freeing null is a no-op.
    unsafe {
        casimir_model_free(ptr::null_mut());
        casimir_stack_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_are_reported() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { casimir_model_new(42, OMEGA_P, GAMMA, &mut m) }, CasimirStatus::InvalidArgument);
    assert!(last_error().contains("42"));
    assert!(m.is_null());

    assert_eq!(unsafe { casimir_model_new(2, -1.0, GAMMA, &mut m) }, CasimirStatus::InvalidArgument);

    let model = new_model(CasimirKind::Impedance);
    let mut p = 0.0;
    let status = unsafe { casimir_pressure(model, -1e-9, 300.0, &mut p) };
    assert_ne!(status, CasimirStatus::Ok);
    assert!(!last_error().is_empty());
    unsafe { casimir_model_free(model) };
}

#[test]
fn missing_table_is_io_error() {
    let path = CString::new("/nonexistent/table.txt").unwrap();
    let mut m = ptr::null_mut();
    let status = unsafe { casimir_model_new_tabulated(2, path.as_ptr(), OMEGA_P, GAMMA, &mut m) };
    assert_eq!(status, CasimirStatus::Io);
    assert!(last_error().contains("/nonexistent/table.txt"));
}

#[test]
fn tabulated_model_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/au_drude_synthetic.txt");
    let path = CString::new(path).unwrap();
    let mut m = ptr::null_mut();
    let status = unsafe { casimir_model_new_tabulated(1, path.as_ptr(), OMEGA_P, GAMMA, &mut m) };
    assert_eq!(status, CasimirStatus::Ok, "{}", last_error());
    let mut eps = 0.0;
    assert_eq!(unsafe { casimir_permittivity(m, 1e15, &mut eps) }, CasimirStatus::Ok);
    assert!(eps > 1.0);
    unsafe { casimir_model_free(m) };
}

#[test]
fn yukawa_on_builtin_stacks_matches_core() {
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(casimir_stack_builtin(0, &mut a), CasimirStatus::Ok);
        assert_eq!(casimir_stack_builtin(1, &mut b), CasimirStatus::Ok);
        assert_eq!(casimir_stack_builtin(7, &mut b), CasimirStatus::InvalidArgument);
    }
    let mut p = 0.0;
    let status = unsafe { casimir_yukawa_pressure(a, b, 200e-9, 1e12, 100e-9, &mut p) };
    assert_eq!(status, CasimirStatus::Ok, "{}", last_error());
    let expected = hypforce::yukawa_plate_pressure(
        &LayerStack::measured_sphere(),
        &LayerStack::measured_plate(),
        200e-9,
        YukawaParams::new(1e12, 100e-9).unwrap(),
    )
    .unwrap();
    assert_eq!(p, expected);
    unsafe {
        casimir_stack_free(a);
        casimir_stack_free(b);
    }
}

#[test]
fn custom_stack_homogeneous_limit() {
    let rho = [19_300.0, 19_300.0];
    let thick = [50e-9, 0.0];
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { casimir_stack_new(rho.as_ptr(), thick.as_ptr(), 2, &mut s) }, CasimirStatus::Ok, "{}", last_error());
    let mut p = 0.0;
    assert_eq!(unsafe { casimir_yukawa_pressure(s, s, 300e-9, 1e10, 50e-9, &mut p) }, CasimirStatus::Ok);
    let homogeneous = LayerStack::homogeneous(19_300.0, "au").unwrap();
    let expected = hypforce::yukawa_plate_pressure(&homogeneous, &homogeneous, 300e-9, YukawaParams::new(1e10, 50e-9).unwrap()).unwrap();
    assert!((p - expected).abs() <= 1e-12 * expected.abs(), "{p} vs {expected}");

    assert_eq!(unsafe { casimir_stack_new(rho.as_ptr(), ptr::null(), 2, &mut s) }, CasimirStatus::NullPointer);
    assert_eq!(unsafe { casimir_stack_new(rho.as_ptr(), thick.as_ptr(), 0, &mut s) }, CasimirStatus::InvalidArgument);
    unsafe { casimir_stack_free(s) };
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/casimir.h")).unwrap();
    for name in [
        "casimir_version",
        "casimir_last_error",
        "casimir_model_new",
        "casimir_model_new_tabulated",
        "casimir_model_free",
        "casimir_permittivity",
        "casimir_reflection",
        "casimir_pressure",
        "casimir_free_energy",
        "casimir_stack_new",
        "casimir_stack_builtin",
        "casimir_stack_free",
        "casimir_yukawa_pressure",
        "CASIMIR_STATUS_NULL_POINTER",
        "CASIMIR_KIND_IDEAL_METAL",
        "typedef struct CasimirModel CasimirModel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let src = std::env::temp_dir().join(format!("casimir_header_check_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"casimir.h\"\nint main(void) { return casimir_version() == 0; }\n").unwrap();
    let out = std::process::Command::new(cc).args(["-fsyntax-only", "-Wall", "-Werror", "-I", dir]).arg(&src).output().unwrap();
    let _ = std::fs::remove_file(&src);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
