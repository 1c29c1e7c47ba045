//! C ABI over the berrygrip library.
//!
//! Every fallible call returns a [`BgStatus`]; results come back through out
//! pointers. On failure `bg_last_error` holds a message for the calling
//! thread. Strings returned by the library are released with
//! `bg_string_free`, geometry handles with `bg_geometry_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use berrygrip::control::{section_height, stem_offset, SectionHeightForm, ShapeModel, TargetPose};
use berrygrip::harness::report::RunReport;
use berrygrip::harness::scenario::{parse_config, parse_scenario};
use berrygrip::kinematics::{cutter_angle, finger_angle, forward_opening, servo_for_opening, GripperGeometry};
use berrygrip::perception::{estimate_from_frame, SensorFrame};
use berrygrip::sim::{run_pick_cycle, SimConfig};
use libc::c_char;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Parse = 4,
    Simulation = 5,
    Panic = 6,
}

/// Opaque gripper geometry.
pub struct BgGeometry {
    inner: GripperGeometry,
}

/// Circle fitted to the three sensor hits, gripper frame, mm.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BgSection {
    pub qx: f64,
    pub qy: f64,
    pub d_sec: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BgStatus, msg: impl Into<String>) -> BgStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BgStatus) -> BgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(BgStatus::Panic, "internal panic"),
    }
}

unsafe fn geometry<'a>(g: *const BgGeometry) -> Result<&'a GripperGeometry, BgStatus> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| fail(BgStatus::NullPointer, "null geometry handle"))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, BgStatus> {
    if s.is_null() {
        return Err(fail(BgStatus::NullPointer, format!("null {what}")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(BgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, v: T) -> BgStatus {
    if out.is_null() {
        return fail(BgStatus::NullPointer, "null output pointer");
    }
    *out = v;
    BgStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Geometry with the default mechanical constants. Never null.
#[no_mangle]
pub extern "C" fn bg_geometry_default() -> *mut BgGeometry {
    Box::into_raw(Box::new(BgGeometry { inner: GripperGeometry::default() }))
}

/// Geometry from JSON with every field present.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_geometry_from_json(json: *const c_char, out: *mut *mut BgGeometry) -> BgStatus {
    guard(|| {
        let s = tri!(text(json, "geometry JSON"));
        let g: GripperGeometry = match serde_json::from_str(s) {
            Ok(g) => g,
            Err(e) => return fail(BgStatus::Parse, e.to_string()),
        };
        if let Err(e) = g.validate() {
            return fail(BgStatus::InvalidArgument, e.to_string());
        }
        write(out, Box::into_raw(Box::new(BgGeometry { inner: g })))
    })
}

/// Releases a geometry handle. Null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_geometry_free(g: *mut BgGeometry) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Servo angle limit, rad.
///
/// # Safety
/// `g` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bg_geometry_phi_max(g: *const BgGeometry, out: *mut f64) -> BgStatus {
    guard(|| write(out, tri!(geometry(g)).phi_max))
}

fn kin<T>(r: Result<T, berrygrip::kinematics::KinematicsError>) -> Result<T, BgStatus> {
    r.map_err(|e| fail(BgStatus::OutOfRange, e.to_string()))
}

/// Opening radius for servo angle `phi` (rad), mm.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bg_forward_opening(g: *const BgGeometry, phi: f64, out: *mut f64) -> BgStatus {
    guard(|| write(out, tri!(kin(forward_opening(tri!(geometry(g)), phi)))))
}

/// Servo angle (rad) that opens the fingers to `r` mm.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bg_servo_for_opening(g: *const BgGeometry, r: f64, out: *mut f64) -> BgStatus {
    guard(|| write(out, tri!(kin(servo_for_opening(tri!(geometry(g)), r)))))
}

/// Finger angle (rad) for servo angle `phi`.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bg_finger_angle(g: *const BgGeometry, phi: f64, out: *mut f64) -> BgStatus {
    guard(|| write(out, tri!(kin(finger_angle(tri!(geometry(g)), phi)))))
}

/// Cutter blade angle (rad) for a non-positive servo angle.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bg_cutter_angle(g: *const BgGeometry, phi: f64, out: *mut f64) -> BgStatus {
    guard(|| write(out, tri!(kin(cutter_angle(tri!(geometry(g)), phi)))))
}

/// Section circle from three sensor distances (mm, along the sensor axes)
/// taken at finger angle `theta`.
///
/// # Safety
/// `g` must be a live handle, `mdp` point to three doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_estimate_section(
    g: *const BgGeometry,
    theta: f64,
    mdp: *const f64,
    out: *mut BgSection,
) -> BgStatus {
    guard(|| {
        let geom = tri!(geometry(g));
        if mdp.is_null() {
            return fail(BgStatus::NullPointer, "null distances");
        }
        let d = std::slice::from_raw_parts(mdp, 3);
        let frame = SensorFrame { mdp: [d[0], d[1], d[2]], theta, timestamp_ms: 0, hits: [true; 3] };
        match estimate_from_frame(geom, &frame) {
            Ok(e) => write(out, BgSection { qx: e.q[0], qy: e.q[1], d_sec: e.d_sec }),
            Err(e) => fail(BgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Height of the sensed section above the joint plane, mm.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bg_section_height(g: *const BgGeometry, theta: f64, mdp1: f64, out: *mut f64) -> BgStatus {
    guard(|| write(out, section_height(tri!(geometry(g)), theta, mdp1, SectionHeightForm::Corrected)))
}

/// Upward arm correction (mm) that leaves `l_stem` of stem, using the
/// default shape model.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bg_stem_offset(
    g: *const BgGeometry,
    d_max: f64,
    d_sec: f64,
    l_sg: f64,
    l_stem: f64,
    out: *mut f64,
) -> BgStatus {
    guard(|| {
        let geom = tri!(geometry(g));
        let est = berrygrip::perception::SectionEstimate { q: [0.0; 2], d_sec, points: [[0.0; 2]; 3] };
        let tgt = TargetPose { l_stem, ..TargetPose::default() };
        match stem_offset(d_max, &est, l_sg, &tgt, &ShapeModel::default(), geom) {
            Ok(o) => write(out, o.offset_z),
            Err(e) => fail(BgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs the picking cycle over a scenario and returns the run report as JSON.
/// `config_json` (partial configuration) and `seed` (overrides the scenario
/// seed) may be null. Free the report with `bg_string_free`.
///
/// # Safety
/// String arguments must be nul-terminated; `report_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_simulate(
    scenario_json: *const c_char,
    config_json: *const c_char,
    seed: *const u64,
    report_json: *mut *mut c_char,
) -> BgStatus {
    guard(|| {
        let origin = Path::new("<scenario>");
        let scenario = match parse_scenario(tri!(text(scenario_json, "scenario JSON")), origin) {
            Ok(s) => s,
            Err(e) => return fail(BgStatus::Parse, e.to_string()),
        };
        let base = if config_json.is_null() {
            SimConfig::default()
        } else {
            match parse_config(tri!(text(config_json, "config JSON")), Path::new("<config>")) {
                Ok(c) => c,
                Err(e) => return fail(BgStatus::Parse, e.to_string()),
            }
        };
        let cfg = match scenario.config(&base, origin) {
            Ok(c) => c,
            Err(e) => return fail(BgStatus::Parse, e.to_string()),
        };
        let seed = seed.as_ref().copied().unwrap_or(scenario.seed);
        let trace = match scenario
            .scene(seed)
            .map_err(|e| e.to_string())
            .and_then(|s| run_pick_cycle(&s, &cfg).map_err(|e| e.to_string()))
        {
            Ok(t) => t,
            Err(e) => return fail(BgStatus::Simulation, e),
        };
        let report = RunReport::from_trace(&scenario.name, seed, &trace);
        let json = serde_json::to_string(&report).expect("report serializes");
        write(report_json, CString::new(json).expect("JSON has no nul bytes").into_raw())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
