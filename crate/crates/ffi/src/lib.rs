//! C boundary for the workbench. An opaque handle carries model parameters
//! plus the solver settings shared by every query; scalar calls return the
//! weak-coupling closed forms or their diagonalization oracles, and one call
//! dumps the closed forms as a JSON report. Every function reports an
//! OmStatus; the message for the most recent failure is kept per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use optomech::model::{derive_params, direct_params, ModelParams};
use optomech::report::{render_json, Report, ResultRow, Value};
use optomech::{dynamics, perturb, spectra, Error};

/// Call outcome. Values 2 through 4 coincide with the exit codes the
/// bundled CLI uses for the same failure domains.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmStatus {
    Ok = 0,
    /// Null pointer or malformed argument at the boundary itself.
    InvalidArgument = 1,
    /// Input rejected by validation: non-finite or non-positive quantities,
    /// bad sweep grids, capacity limits.
    Validation = 2,
    /// Physics-domain condition: pole guard, resonance requirement,
    /// degeneracy, strong state mixing.
    Physics = 3,
    /// Fit or iteration failure.
    Convergence = 4,
    /// A panic was caught at the boundary. Memory is intact but the call
    /// did nothing.
    Panic = 5,
}

/// Opaque workbench: parameters plus cutoffs and the interaction-channel
/// switch. Create with om_workbench_direct or om_workbench_physical, free
/// with om_workbench_free. Handles are not thread-safe; share one per
/// thread or guard externally.
pub struct OmWorkbench {
    params: ModelParams,
    cutoff_photon: usize,
    cutoff_phonon: usize,
    rotating_wave: bool,
}

impl OmWorkbench {
    fn new(params: ModelParams) -> OmWorkbench {
        OmWorkbench {
            params,
            cutoff_photon: 12,
            cutoff_phonon: 12,
            rotating_wave: false,
        }
    }

    fn cutoffs(&self) -> (usize, usize) {
        (self.cutoff_photon, self.cutoff_phonon)
    }

    fn include_pair(&self) -> bool {
        !self.rotating_wave
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = bytes);
}

fn invalid(msg: &str) -> OmStatus {
    set_error(msg);
    OmStatus::InvalidArgument
}

fn fail(err: Error) -> OmStatus {
    let status = match err.exit_code() {
        2 => OmStatus::Validation,
        4 => OmStatus::Convergence,
        _ => OmStatus::Physics,
    };
    set_error(err.to_string());
    status
}

// Handle state is plain data and queries never leave it half-written, so a
// caught panic cannot strand a broken invariant behind the pointer.
fn guarded<F: FnOnce() -> OmStatus>(body: F) -> OmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic crossed the C boundary");
            OmStatus::Panic
        }
    }
}

fn scalar(
    wb: *const OmWorkbench,
    out: *mut f64,
    f: impl FnOnce(&OmWorkbench) -> optomech::Result<f64>,
) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_ref() }) else {
            return invalid("workbench handle is null");
        };
        if out.is_null() {
            return invalid("output pointer is null");
        }
        match f(w) {
            Ok(v) => {
                unsafe { *out = v };
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Create a workbench from frequencies and the vertex strength directly.
/// Cutoffs start at 12/12 and the pair-creating channel is on; adjust with
/// the setters. On success writes a handle the caller must free.
#[no_mangle]
pub extern "C" fn om_workbench_direct(
    omega_c: f64,
    omega_m: f64,
    g: f64,
    out: *mut *mut OmWorkbench,
) -> OmStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out handle pointer is null");
        }
        match direct_params(omega_c, omega_m, g) {
            Ok(params) => {
                unsafe { *out = Box::into_raw(Box::new(OmWorkbench::new(params))) };
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Create a workbench from hardware numbers: mirror mass, spring constant,
/// cavity length, and a single cavity mode number (1 is the fundamental).
/// Frequencies and the coupling are derived; query them with the getters.
#[no_mangle]
pub extern "C" fn om_workbench_physical(
    mass: f64,
    spring_constant: f64,
    cavity_length: f64,
    mode_number: u32,
    out: *mut *mut OmWorkbench,
) -> OmStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out handle pointer is null");
        }
        match derive_params(mass, spring_constant, cavity_length, &[mode_number]) {
            Ok(params) => {
                unsafe { *out = Box::into_raw(Box::new(OmWorkbench::new(params))) };
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Free a workbench. Null is a no-op.
#[no_mangle]
pub extern "C" fn om_workbench_free(wb: *mut OmWorkbench) {
    if !wb.is_null() {
        guarded(|| {
            drop(unsafe { Box::from_raw(wb) });
            OmStatus::Ok
        });
    }
}

/// Set the Fock-space truncation (highest retained occupation, inclusive)
/// used by every diagonalization query on this handle.
#[no_mangle]
pub extern "C" fn om_workbench_set_cutoffs(
    wb: *mut OmWorkbench,
    photon: usize,
    phonon: usize,
) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_mut() }) else {
            return invalid("workbench handle is null");
        };
        w.cutoff_photon = photon;
        w.cutoff_phonon = phonon;
        OmStatus::Ok
    })
}

/// Drop the pair-creating interaction channel (keep only the
/// photon-number-conserving one) in formulas and diagonalizations alike.
#[no_mangle]
pub extern "C" fn om_workbench_set_rotating_wave(wb: *mut OmWorkbench, on: bool) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_mut() }) else {
            return invalid("workbench handle is null");
        };
        w.rotating_wave = on;
        OmStatus::Ok
    })
}

/// Cavity frequency.
#[no_mangle]
pub extern "C" fn om_workbench_omega_c(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| Ok(w.params.omega_c()))
}

/// Mirror frequency.
#[no_mangle]
pub extern "C" fn om_workbench_omega_m(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| Ok(w.params.omega_m))
}

/// Single-mode vertex strength (negative when derived from hardware
/// numbers).
#[no_mangle]
pub extern "C" fn om_workbench_coupling(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| Ok(w.params.g))
}

/// Closed-form mirror frequency shift at the configured coupling. Honors
/// the rotating-wave switch; fails inside pole guards.
#[no_mangle]
pub extern "C" fn om_workbench_delta_omega_m(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| {
        perturb::delta_omega_m(&w.params, w.include_pair()).map(|f| f.value.re)
    })
}

/// Closed-form cavity frequency shift at the configured coupling.
#[no_mangle]
pub extern "C" fn om_workbench_delta_omega_c(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| {
        perturb::delta_omega_c(&w.params, w.include_pair()).map(|f| f.value.re)
    })
}

/// Closed-form ground-state energy shift. Zero under the rotating-wave
/// switch: the shift comes entirely from the pair-creating channel.
#[no_mangle]
pub extern "C" fn om_workbench_vacuum_shift(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| {
        if w.include_pair() {
            perturb::vacuum_energy_shift(&w.params).map(|f| f.value.re)
        } else {
            Ok(0.0)
        }
    })
}

/// Published phonon field-strength renormalization factor.
#[no_mangle]
pub extern "C" fn om_workbench_z_phonon(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| perturb::z_factor_phonon(&w.params).map(|f| f.value.re))
}

/// Published photon field-strength renormalization factor.
#[no_mangle]
pub extern "C" fn om_workbench_z_photon(wb: *const OmWorkbench, out: *mut f64) -> OmStatus {
    scalar(wb, out, |w| perturb::z_factor_photon(&w.params).map(|f| f.value.re))
}

/// Diagonalization oracle for the level shift of the bare state with the
/// given occupations: sweeps the coupling over g_sweep (at least 4 finite
/// nonzero weak-regime points), fits shift = c2 g^2 + c4 g^4, and writes
/// the fitted c2. residual (root-mean-square misfit) may be null.
/// Runtime grows steeply with the cutoffs on the handle.
#[no_mangle]
pub extern "C" fn om_workbench_level_shift_c2(
    wb: *const OmWorkbench,
    n_photon: u32,
    n_phonon: u32,
    g_sweep: *const f64,
    n_sweep: usize,
    c2: *mut f64,
    residual: *mut f64,
) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_ref() }) else {
            return invalid("workbench handle is null");
        };
        if g_sweep.is_null() || n_sweep == 0 {
            return invalid("g_sweep is null or empty");
        }
        if c2.is_null() {
            return invalid("c2 output pointer is null");
        }
        let sweep = unsafe { std::slice::from_raw_parts(g_sweep, n_sweep) };
        let label = [n_photon, n_phonon];
        match spectra::level_shift_oracle(&w.params, w.cutoffs(), w.include_pair(), &label, sweep)
        {
            Ok(fit) => {
                unsafe {
                    *c2 = fit.c2;
                    if !residual.is_null() {
                        *residual = fit.residual;
                    }
                }
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Golden-rule width of the phonon against pair emission for a caller-
/// supplied final-state density of states. lifetime (1/width, infinite at
/// zero coupling) may be null.
#[no_mangle]
pub extern "C" fn om_workbench_golden_rule_width(
    wb: *const OmWorkbench,
    rho: f64,
    width: *mut f64,
    lifetime: *mut f64,
) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_ref() }) else {
            return invalid("workbench handle is null");
        };
        if width.is_null() {
            return invalid("width output pointer is null");
        }
        match perturb::golden_rule_width(&w.params, rho) {
            Ok(g) => {
                unsafe {
                    *width = g.width;
                    if !lifetime.is_null() {
                        *lifetime = g.lifetime;
                    }
                }
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Resonant phonon-to-photon-pair conversion: evolves |0,1> at the handle
/// cutoffs and writes the fitted oscillation frequency of the survival
/// probability (the two-level picture predicts sqrt(2)|g|). Requires
/// omega_m = 2 omega_c; max_conversion may be null.
#[no_mangle]
pub extern "C" fn om_workbench_conversion_frequency(
    wb: *const OmWorkbench,
    frequency: *mut f64,
    max_conversion: *mut f64,
) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_ref() }) else {
            return invalid("workbench handle is null");
        };
        if frequency.is_null() {
            return invalid("frequency output pointer is null");
        }
        match dynamics::resonant_survival(&w.params, w.cutoffs()) {
            Ok(conv) => {
                unsafe {
                    *frequency = conv.frequency;
                    if !max_conversion.is_null() {
                        *max_conversion = conv.series.max_conversion;
                    }
                }
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

fn closed_form_report(w: &OmWorkbench) -> optomech::Result<String> {
    let p = &w.params;
    let config = serde_json::json!({
        "cutoffs": [w.cutoff_photon, w.cutoff_phonon],
        "interface": "ffi",
        "rotating_wave": w.rotating_wave,
    });
    let mut report = Report::new(config, Some(p));
    let dm = perturb::delta_omega_m(p, w.include_pair())?;
    let dc = perturb::delta_omega_c(p, w.include_pair())?;
    let dg = if w.include_pair() {
        perturb::vacuum_energy_shift(p)?.value.re
    } else {
        0.0
    };
    let zb = perturb::z_factor_phonon(p)?;
    let za = perturb::z_factor_photon(p)?;
    report.push(ResultRow::plain(
        "eq10",
        "phonon frequency shift at the configured g",
        Value::Real(dm.value.re),
    ));
    report.push(ResultRow::plain(
        "eq16",
        "photon frequency shift at the configured g",
        Value::Real(dc.value.re),
    ));
    report.push(ResultRow::plain(
        "eq21",
        "ground-state energy shift at the configured g",
        Value::Real(dg),
    ));
    report.push(ResultRow::plain(
        "eq13",
        "published phonon field-strength factor",
        Value::Real(zb.value.re),
    ));
    report.push(ResultRow::plain(
        "eq17",
        "published photon field-strength factor",
        Value::Real(za.value.re),
    ));
    render_json(&report)
}

/// Render the closed forms as the JSON report schema the CLI emits (no
/// diagonalization columns; use the oracle calls for those). On success
/// writes a NUL-terminated string the caller must release with
/// om_string_free. Identical handles render identical bytes.
#[no_mangle]
pub extern "C" fn om_workbench_report_json(
    wb: *const OmWorkbench,
    out: *mut *mut c_char,
) -> OmStatus {
    guarded(|| {
        let Some(w) = (unsafe { wb.as_ref() }) else {
            return invalid("workbench handle is null");
        };
        if out.is_null() {
            return invalid("out string pointer is null");
        }
        match closed_form_report(w) {
            Ok(text) => {
                // render_json output is UTF-8 JSON with no interior NUL
                let c = CString::new(text).expect("report text has no NUL bytes");
                unsafe { *out = c.into_raw() };
                OmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a string returned by this library. Null is a no-op.
#[no_mangle]
pub extern "C" fn om_string_free(s: *mut c_char) {
    if !s.is_null() {
        guarded(|| {
            drop(unsafe { CString::from_raw(s) });
            OmStatus::Ok
        });
    }
}

/// Copy the message for the most recent failing call on this thread into
/// buf (truncated to cap - 1 bytes, always NUL-terminated when cap > 0)
/// and return the full message length in bytes. buf may be null to query
/// the length alone.
#[no_mangle]
pub extern "C" fn om_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}
