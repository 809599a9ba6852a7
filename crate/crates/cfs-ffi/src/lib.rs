//! C interface: opaque handles for systems, snapshots and states, status
//! codes for every call and a thread-local last-error message.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfs_core::action_optim::causal_action;
use cfs_core::cli::{cut_for, SystemDocument};
use cfs_core::fixtures::{fix_a, fix_b, System};
use cfs_core::quantum_state::{
    build_snapshot, parse_element, state_eval, FieldSetup, GroupKind, GroupSpec, SetupOptions, SnapshotSpec, StateSnapshot,
    StateTable,
};
use cfs_core::surface_layer::gamma_nonlinear;
use cfs_core::system_measure::InteractionMap;
use cfs_core::CfsError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Singular = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque system handle.
pub struct CfsSystem {
    inner: System,
}

/// Opaque snapshot handle.
pub struct CfsSnapshot {
    inner: StateSnapshot,
}

/// Opaque state handle: field setup plus evaluation table.
pub struct CfsState {
    table: StateTable,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &CfsError) -> CfsStatus {
    match e {
        CfsError::Dimension(_) => CfsStatus::Dimension,
        CfsError::Singular(_) | CfsError::Degenerate(_) => CfsStatus::Singular,
        CfsError::EigenSolver(_) | CfsError::StepUnderflow(_) | CfsError::NotUnitary(_) => CfsStatus::Numerical,
        CfsError::Io(_) | CfsError::Json(_) => CfsStatus::Io,
        CfsError::Invalid(_) | CfsError::Word(_) | CfsError::TooLarge(_) => CfsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), CfsStatus>) -> CfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside the library".into());
            CfsStatus::Panic
        }
    }
}

fn fail(e: CfsError) -> CfsStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, CfsStatus> {
    if p.is_null() {
        set_error("null string argument".into());
        return Err(CfsStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8".into());
        CfsStatus::InvalidArgument
    })
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, CfsStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer".into());
        CfsStatus::NullPointer
    })
}

unsafe fn in_arg<'a, T>(p: *const T) -> Result<&'a T, CfsStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        CfsStatus::NullPointer
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn cfs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a JSON system document.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_system_from_json(json: *const c_char, out: *mut *mut CfsSystem) -> CfsStatus {
    guard(|| {
        let text = str_arg(json)?;
        let out = out_arg(out)?;
        let sys = SystemDocument::from_json(text).and_then(|d| d.to_system()).map_err(fail)?;
        *out = Box::into_raw(Box::new(CfsSystem { inner: sys }));
        Ok(())
    })
}

/// Reference system: 0 for the two-point system, 1 for the four-point system.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_system_fixture(kind: u32, out: *mut *mut CfsSystem) -> CfsStatus {
    guard(|| {
        let out = out_arg(out)?;
        let sys = match kind {
            0 => fix_a(),
            1 => fix_b(),
            _ => return Err(fail(CfsError::Invalid(format!("unknown fixture {kind}")))),
        };
        *out = Box::into_raw(Box::new(CfsSystem { inner: sys }));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfs_system_free(sys: *mut CfsSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// # Safety
/// Valid handle and output pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_system_point_count(sys: *const CfsSystem, out: *mut usize) -> CfsStatus {
    guard(|| {
        *out_arg(out)? = in_arg(sys)?.inner.rho.len();
        Ok(())
    })
}

/// # Safety
/// Valid handle and output pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_causal_action(sys: *const CfsSystem, out: *mut f64) -> CfsStatus {
    guard(|| {
        let s = &in_arg(sys)?.inner;
        *out_arg(out)? = causal_action(&s.rho, &s.params).map_err(fail)?;
        Ok(())
    })
}

/// Nonlinear surface layer integral with the system's own interaction map
/// (the identity when it has none). A NaN `cut_time` selects the midpoint.
///
/// # Safety
/// Valid handle and output pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_gamma(sys: *const CfsSystem, cut_time: f64, out: *mut f64) -> CfsStatus {
    guard(|| {
        let s = &in_arg(sys)?.inner;
        let out = out_arg(out)?;
        let map = s.map.clone().unwrap_or_else(|| InteractionMap::identity(&s.rho));
        let cut = cut_for(s, if cut_time.is_nan() { None } else { Some(cut_time) });
        *out = gamma_nonlinear(&s.rho, &map, &cut, &s.params, None).map_err(fail)?;
        Ok(())
    })
}

/// Samples `samples` torus elements and returns the snapshot with the
/// partition function estimate.
///
/// # Safety
/// Valid handle and output pointers.
#[no_mangle]
pub unsafe extern "C" fn cfs_partition(
    sys: *const CfsSystem,
    cut_time: f64,
    beta: f64,
    samples: usize,
    seed: u64,
    out: *mut *mut CfsSnapshot,
    z_hat: *mut f64,
    stderr: *mut f64,
) -> CfsStatus {
    guard(|| {
        let s = &in_arg(sys)?.inner;
        let out = out_arg(out)?;
        let z_out = out_arg(z_hat)?;
        let e_out = out_arg(stderr)?;
        let map = s.map.clone().unwrap_or_else(|| InteractionMap::identity(&s.rho));
        let cut = cut_for(s, if cut_time.is_nan() { None } else { Some(cut_time) });
        let group = GroupSpec::on_fermi(GroupKind::Torus(s.rho.spec.f_fermi), s.rho.spec.f, s.rho.spec.f_fermi).map_err(fail)?;
        let snap = build_snapshot(&s.rho, &map, &cut, &s.params, &SnapshotSpec::plain(group, beta, samples, seed)).map_err(fail)?;
        *z_out = snap.z_hat;
        *e_out = snap.stderr;
        *out = Box::into_raw(Box::new(CfsSnapshot { inner: snap }));
        Ok(())
    })
}

/// # Safety
/// Valid handle and output pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_snapshot_log_z(snap: *const CfsSnapshot, out: *mut f64) -> CfsStatus {
    guard(|| {
        *out_arg(out)? = in_arg(snap)?.inner.log_z;
        Ok(())
    })
}

/// # Safety
/// `snap` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfs_snapshot_free(snap: *mut CfsSnapshot) {
    if !snap.is_null() {
        drop(Box::from_raw(snap));
    }
}

/// Builds the field modes of the system and the evaluation table of the snapshot.
///
/// # Safety
/// Valid handles and output pointer.
#[no_mangle]
pub unsafe extern "C" fn cfs_state_new(sys: *const CfsSystem, snap: *const CfsSnapshot, out: *mut *mut CfsState) -> CfsStatus {
    guard(|| {
        let s = &in_arg(sys)?.inner;
        let snap = &in_arg(snap)?.inner;
        let out = out_arg(out)?;
        let map = s.map.clone().unwrap_or_else(|| InteractionMap::identity(&s.rho));
        let setup = FieldSetup::build(&s.rho, &map, &snap.cut(), &s.params, &SetupOptions::default()).map_err(fail)?;
        let table = StateTable::build(snap, &setup).map_err(fail)?;
        *out = Box::into_raw(Box::new(CfsState { table }));
        Ok(())
    })
}

/// Number of bosonic and fermionic modes of a state.
///
/// # Safety
/// Valid handle and output pointers.
#[no_mangle]
pub unsafe extern "C" fn cfs_state_modes(state: *const CfsState, bosons: *mut usize, fermions: *mut usize) -> CfsStatus {
    guard(|| {
        let t = &in_arg(state)?.table;
        *out_arg(bosons)? = t.boson_modes;
        *out_arg(fermions)? = t.fermi_modes;
        Ok(())
    })
}

/// Evaluates an element written as `coeff * word ; ...`, e.g. `fd(p1) f(p1)`.
///
/// # Safety
/// Valid handle, NUL-terminated `element`, valid output pointers.
#[no_mangle]
pub unsafe extern "C" fn cfs_state_eval(state: *const CfsState, element: *const c_char, re: *mut f64, im: *mut f64) -> CfsStatus {
    guard(|| {
        let t = &in_arg(state)?.table;
        let text = str_arg(element)?;
        let (re, im) = (out_arg(re)?, out_arg(im)?);
        let el = parse_element(text).map_err(fail)?;
        let v = state_eval(t, &el).map_err(fail)?;
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfs_state_free(state: *mut CfsState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}
