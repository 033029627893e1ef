//! C interface to `casimir-core`.
//!
//! Objects are opaque handles created by `*_new` functions and released with
//! the matching `*_free`. Every fallible call returns a [`CasimirStatus`];
//! on failure [`casimir_last_error`] describes the most recent error on the
//! calling thread. Results are written through out-pointers.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use casimir_core::constants::CONSTANTS_VERSION;
use casimir_core::hypforce::{self, Layer, LayerStack, YukawaParams};
use casimir_core::lifshitz::{self, ReflectionKind, ReflectionModel, ThermalState};
use casimir_core::optics::{self, DrudeParameters, PermittivityFn, Tabulated};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CasimirStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ComputationFailed = 3,
    Io = 4,
    Panic = 5,
}

/// Values accepted by the `kind` argument of [`casimir_model_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CasimirKind {
    Impedance = 0,
    ExactImpedance = 1,
    LifshitzDrude = 2,
    LifshitzSchwinger = 3,
    LifshitzPlasma = 4,
    IdealMetal = 5,
}

fn kind_from_raw(raw: u32) -> Option<ReflectionKind> {
    Some(match raw {
        0 => ReflectionKind::Impedance,
        1 => ReflectionKind::ExactImpedance,
        2 => ReflectionKind::LifshitzDrude,
        3 => ReflectionKind::LifshitzSchwinger,
        4 => ReflectionKind::LifshitzPlasma,
        5 => ReflectionKind::IdealMetal,
        _ => return None,
    })
}

/// Reflection model with its permittivity.
pub struct CasimirModel {
    model: ReflectionModel,
    permittivity: Option<PermittivityFn>,
}

/// Layered half-space for Yukawa pressures.
pub struct CasimirStack(LayerStack);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior nuls removed"));
}

struct Failure(CasimirStatus, String);

impl Failure {
    fn invalid(msg: impl ToString) -> Self {
        Self(CasimirStatus::InvalidArgument, msg.to_string())
    }

    fn compute(msg: impl ToString) -> Self {
        Self(CasimirStatus::ComputationFailed, msg.to_string())
    }
}

fn guard<F>(f: F) -> CasimirStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CasimirStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CasimirStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(CasimirStatus::NullPointer, format!("{name} is null")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(CasimirStatus::NullPointer, format!("{name} is null")))
}

/// Library version and constants tag; a static string.
#[no_mangle]
pub extern "C" fn casimir_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(format!("{} ({CONSTANTS_VERSION})", env!("CARGO_PKG_VERSION"))).expect("no nul"))
        .as_ptr()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn casimir_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn drude(omega_p: f64, gamma: f64) -> Result<DrudeParameters, Failure> {
    DrudeParameters::new(omega_p, gamma).map_err(Failure::invalid)
}

fn build_model(kind: u32, permittivity: Option<PermittivityFn>, omega_p: f64) -> Result<Box<CasimirModel>, Failure> {
    let kind = kind_from_raw(kind).ok_or_else(|| Failure::invalid(format!("unknown model kind {kind}")))?;
    let model = match (&permittivity, kind) {
        (_, ReflectionKind::IdealMetal) => ReflectionModel::ideal_metal(),
        (Some(p), k) => ReflectionModel::new(k, p.clone(), omega_p).map_err(Failure::invalid)?,
        (None, _) => unreachable!("permittivity is always supplied for material models"),
    };
    Ok(Box::new(CasimirModel { model, permittivity }))
}

/// Model of kind `kind` (a [`CasimirKind`] value) with Drude permittivity.
#[no_mangle]
pub unsafe extern "C" fn casimir_model_new(kind: u32, omega_p: f64, gamma: f64, model_out: *mut *mut CasimirModel) -> CasimirStatus {
    guard(|| {
        let slot = out(model_out, "model_out")?;
        let eps: PermittivityFn = Arc::new(optics::Drude(drude(omega_p, gamma)?));
        *slot = Box::into_raw(build_model(kind, Some(eps), omega_p)?);
        Ok(())
    })
}

/// Model whose permittivity is the dispersion transform of the optical table
/// at `path` (`x n k` rows; `#unit:` header required).
#[no_mangle]
pub unsafe extern "C" fn casimir_model_new_tabulated(
    kind: u32,
    path: *const c_char,
    omega_p: f64,
    gamma: f64,
    model_out: *mut *mut CasimirModel,
) -> CasimirStatus {
    guard(|| {
        let slot = out(model_out, "model_out")?;
        let path = handle(path, "path")?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| Failure::invalid("path is not UTF-8"))?;
        let raw = std::fs::read_to_string(path).map_err(|e| Failure(CasimirStatus::Io, format!("{path}: {e}")))?;
        let ds = optics::load_optical_table(&raw, None).map_err(|e| Failure::invalid(format!("{path}: {e}")))?;
        let eps: PermittivityFn = Arc::new(Tabulated::new(ds, drude(omega_p, gamma)?));
        *slot = Box::into_raw(build_model(kind, Some(eps), omega_p)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn casimir_model_free(model: *mut CasimirModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `epsilon(i xi)` of the model's permittivity.
#[no_mangle]
pub unsafe extern "C" fn casimir_permittivity(model: *const CasimirModel, xi: f64, eps_out: *mut f64) -> CasimirStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let slot = out(eps_out, "eps_out")?;
        let p = m.permittivity.as_ref().ok_or_else(|| Failure::invalid("model has no permittivity"))?;
        *slot = p.epsilon(xi).map_err(Failure::compute)?;
        Ok(())
    })
}

/// Squared reflection coefficients at Matsubara index `l`.
#[no_mangle]
pub unsafe extern "C" fn casimir_reflection(
    model: *const CasimirModel,
    xi: f64,
    k_perp: f64,
    l: u32,
    tm_out: *mut f64,
    te_out: *mut f64,
) -> CasimirStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let tm = out(tm_out, "tm_out")?;
        let te = out(te_out, "te_out")?;
        let (a, b) = lifshitz::reflection_sq(&m.model, xi, k_perp, l as usize).map_err(Failure::compute)?;
        *tm = a;
        *te = b;
        Ok(())
    })
}

fn state(temperature: f64) -> Result<ThermalState, Failure> {
    ThermalState::new(temperature, None, 1e-9).map_err(Failure::invalid)
}

/// Pressure between two plates, Pa (negative for attraction).
#[no_mangle]
pub unsafe extern "C" fn casimir_pressure(model: *const CasimirModel, z: f64, temperature: f64, pressure_out: *mut f64) -> CasimirStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let slot = out(pressure_out, "pressure_out")?;
        *slot = lifshitz::casimir_pressure(&m.model, z, &state(temperature)?).map_err(Failure::compute)?;
        Ok(())
    })
}

/// Free energy per unit area, J/m^2.
#[no_mangle]
pub unsafe extern "C" fn casimir_free_energy(model: *const CasimirModel, z: f64, temperature: f64, energy_out: *mut f64) -> CasimirStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let slot = out(energy_out, "energy_out")?;
        *slot = lifshitz::casimir_free_energy(&m.model, z, &state(temperature)?).map_err(Failure::compute)?;
        Ok(())
    })
}

/// Stack of `n_layers` layers from the surface inward. `thicknesses[i]` is
/// in metres; the last entry is ignored since the last layer is
/// semi-infinite.
#[no_mangle]
pub unsafe extern "C" fn casimir_stack_new(
    densities: *const f64,
    thicknesses: *const f64,
    n_layers: usize,
    stack_out: *mut *mut CasimirStack,
) -> CasimirStatus {
    guard(|| {
        let slot = out(stack_out, "stack_out")?;
        if n_layers == 0 {
            return Err(Failure::invalid("n_layers must be at least 1"));
        }
        handle(densities, "densities")?;
        let rho = std::slice::from_raw_parts(densities, n_layers);
        let thick = if n_layers > 1 {
            handle(thicknesses, "thicknesses")?;
            std::slice::from_raw_parts(thicknesses, n_layers)
        } else {
            &[0.0][..]
        };
        let layers = rho
            .iter()
            .zip(thick)
            .enumerate()
            .map(|(i, (&density, &t))| Layer {
                density,
                thickness: (i + 1 < n_layers).then_some(t),
            })
            .collect();
        let stack = LayerStack::new(layers, "ffi").map_err(Failure::invalid)?;
        *slot = Box::into_raw(Box::new(CasimirStack(stack)));
        Ok(())
    })
}

/// Built-in stacks: 0 for the sphere side, 1 for the plate side.
#[no_mangle]
pub unsafe extern "C" fn casimir_stack_builtin(which: u32, stack_out: *mut *mut CasimirStack) -> CasimirStatus {
    guard(|| {
        let slot = out(stack_out, "stack_out")?;
        let s = match which {
            0 => LayerStack::measured_sphere(),
            1 => LayerStack::measured_plate(),
            _ => return Err(Failure::invalid(format!("unknown built-in stack {which}"))),
        };
        *slot = Box::into_raw(Box::new(CasimirStack(s)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn casimir_stack_free(stack: *mut CasimirStack) {
    if !stack.is_null() {
        drop(Box::from_raw(stack));
    }
}

/// Yukawa pressure between two stacks at separation `z`, Pa.
#[no_mangle]
pub unsafe extern "C" fn casimir_yukawa_pressure(
    a: *const CasimirStack,
    b: *const CasimirStack,
    z: f64,
    alpha_g: f64,
    lambda: f64,
    pressure_out: *mut f64,
) -> CasimirStatus {
    guard(|| {
        let (a, b) = (handle(a, "a")?, handle(b, "b")?);
        let slot = out(pressure_out, "pressure_out")?;
        let params = YukawaParams::new(alpha_g, lambda).map_err(Failure::invalid)?;
        *slot = hypforce::yukawa_plate_pressure(&a.0, &b.0, z, params).map_err(Failure::invalid)?;
        Ok(())
    })
}
