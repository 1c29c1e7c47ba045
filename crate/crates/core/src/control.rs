//! Cutting-position control: planar centering of the berry with two parallel
//! PID loops, and the vertical offset that leaves a requested stem length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::GripperGeometry;
use crate::perception::{SectionEstimate, FRAME_PERIOD_MS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid centering settings: {0}")]
    InvalidSettings(String),
    #[error("shoulder diameter must be positive, got {0} mm")]
    NonPositiveDiameter(f64),
    #[error("invalid shape model: {0}")]
    InvalidShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Largest command per tick, mm.
    pub output_limit: f64,
    /// Bound on the error integral, mm·s.
    pub integral_limit: f64,
}

impl Default for PidGains {
    /// Tuned against the default arm plant: 6.34 mm settles to 0.1 mm in about 3 s.
    fn default() -> Self {
        PidGains { kp: 0.07, ki: 0.002, kd: 0.001, output_limit: 2.0, integral_limit: 5.0 }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if [self.kp, self.ki, self.kd].iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(ControlError::InvalidGains("gains must be finite and non-negative".into()));
        }
        if !(self.output_limit > 0.0 && self.integral_limit > 0.0) {
            return Err(ControlError::InvalidGains("limits must be positive".into()));
        }
        Ok(())
    }
}

/// State of one PID axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub x: AxisState,
    pub y: AxisState,
    pub settled_since_ms: Option<u64>,
}

/// Positional PID with integral clamping and output saturation.
/// Returns the arm displacement command for this tick, mm.
pub fn pid_step(state: &mut AxisState, gains: &PidGains, error: f64, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    state.integral = (state.integral + error * dt).clamp(-gains.integral_limit, gains.integral_limit);
    let derivative = state.prev_error.map_or(0.0, |p| (error - p) / dt);
    state.prev_error = Some(error);
    let u = gains.kp * error + gains.ki * state.integral + gains.kd * derivative;
    u.clamp(-gains.output_limit, gains.output_limit)
}

/// Berry shape statistics of the target variety.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    /// Angle of the triangular underpart, degrees.
    pub gamma: f64,
    /// `D_max / S_hl`.
    pub k_hl: f64,
    /// `D_max / D_cal`.
    pub k_cal: f64,
}

impl Default for ShapeModel {
    fn default() -> Self {
        ShapeModel { gamma: 52.72, k_hl: 1.81, k_cal: 1.11 }
    }
}

impl ShapeModel {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.gamma > 0.0 && self.gamma < 180.0) {
            return Err(ControlError::InvalidShape(format!("gamma {} outside (0, 180)", self.gamma)));
        }
        if !(self.k_hl > 0.0 && self.k_cal > 1.0) {
            return Err(ControlError::InvalidShape("ratios must be positive and k_cal > 1".into()));
        }
        Ok(())
    }

    /// Height gained per mm of radius along the underpart, `tan(gamma / 2)`.
    pub fn underpart_slope(&self) -> f64 {
        (self.gamma.to_radians() / 2.0).tan()
    }

    /// Distance from the triangle-top section to the berry top.
    pub fn top_height(&self, d_max: f64) -> f64 {
        d_max / self.k_hl
    }

    /// Diameter of the triangle-top section.
    pub fn d_cal(&self, d_max: f64) -> f64 {
        d_max / self.k_cal
    }
}

/// Desired cutting position in the gripper frame and the stem length to leave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub target_x: f64,
    pub target_y: f64,
    pub l_stem: f64,
}

impl Default for TargetPose {
    fn default() -> Self {
        TargetPose { target_x: 0.0, target_y: 0.0, l_stem: 10.0 }
    }
}

/// `error = offset + target` per axis.
pub fn position_errors(est: &SectionEstimate, tgt: &TargetPose) -> [f64; 2] {
    [est.q[0] + tgt.target_x, est.q[1] + tgt.target_y]
}

/// Planar rigid transform from the gripper frame to the arm frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanarTransform {
    pub rotation_deg: f64,
    pub tx: f64,
    pub ty: f64,
}

impl PlanarTransform {
    /// Rotates a displacement (translation does not apply to increments).
    pub fn apply_vector(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let r = self.apply_vector(p);
        [r[0] + self.tx, r[1] + self.ty]
    }

    pub fn inverse_vector(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }
}

/// Something that produces section estimates and accepts planar arm commands,
/// one tick at a time.
pub trait EstimateSource {
    /// Latest estimate, or `None` when the frame was incomplete.
    fn estimate(&mut self) -> Option<SectionEstimate>;
    /// Applies a gripper-frame displacement command and advances by `dt` seconds.
    fn apply(&mut self, command: [f64; 2], dt: f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteringSettings {
    /// Error bound on both axes, mm.
    pub threshold: f64,
    pub timeout_s: f64,
    /// Consecutive in-threshold frames required to call the loop settled.
    pub dwell_frames: u32,
    /// Consecutive incomplete frames tolerated before giving up.
    pub max_incomplete: u32,
}

impl Default for CenteringSettings {
    fn default() -> Self {
        CenteringSettings { threshold: 1.5, timeout_s: 10.0, dwell_frames: 3, max_incomplete: 5 }
    }
}

impl CenteringSettings {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.threshold > 0.0) {
            return Err(ControlError::InvalidSettings("threshold must be positive".into()));
        }
        if !(self.timeout_s > 0.0) || self.dwell_frames == 0 {
            return Err(ControlError::InvalidSettings("timeout and dwell must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the centering trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteringSample {
    pub t_ms: u64,
    pub error_x: f64,
    pub error_y: f64,
    pub cmd_x: f64,
    pub cmd_y: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringOutcome {
    pub settled: bool,
    pub settle_time_ms: Option<u64>,
    /// Set when the loop gave up on consecutive incomplete frames.
    pub lost_target: bool,
    pub trace: Vec<CenteringSample>,
    pub state: ControllerState,
}

impl CenteringOutcome {
    pub fn elapsed_ms(&self) -> u64 {
        self.trace.last().map_or(0, |s| s.t_ms)
    }

    pub fn terminal_error(&self) -> Option<[f64; 2]> {
        self.trace.iter().rev().find(|s| s.complete).map(|s| [s.error_x, s.error_y])
    }
}

/// Runs the centering loop at the frame period until both errors stay below
/// the threshold for the dwell, the timeout expires, or the target is lost.
pub fn centering_loop<S: EstimateSource + ?Sized>(
    source: &mut S,
    gains: &PidGains,
    tgt: &TargetPose,
    settings: &CenteringSettings,
) -> Result<CenteringOutcome, ControlError> {
    gains.validate()?;
    settings.validate()?;
    let dt = FRAME_PERIOD_MS as f64 / 1000.0;
    let max_ticks = (settings.timeout_s * 1000.0 / FRAME_PERIOD_MS as f64).floor() as u64;
    let mut state = ControllerState::default();
    let mut trace = Vec::new();
    let mut in_band = 0u32;
    let mut incomplete = 0u32;

    for tick in 1..=max_ticks {
        let t_ms = tick * FRAME_PERIOD_MS;
        let Some(est) = source.estimate() else {
            incomplete += 1;
            in_band = 0;
            state.settled_since_ms = None;
            trace.push(CenteringSample {
                t_ms,
                error_x: f64::NAN,
                error_y: f64::NAN,
                cmd_x: 0.0,
                cmd_y: 0.0,
                complete: false,
            });
            if incomplete > settings.max_incomplete {
                return Ok(CenteringOutcome { settled: false, settle_time_ms: None, lost_target: true, trace, state });
            }
            source.apply([0.0, 0.0], dt);
            continue;
        };
        incomplete = 0;
        let [ex, ey] = position_errors(&est, tgt);
        if ex.abs() < settings.threshold && ey.abs() < settings.threshold {
            in_band += 1;
            state.settled_since_ms.get_or_insert(t_ms);
        } else {
            in_band = 0;
            state.settled_since_ms = None;
        }
        if in_band >= settings.dwell_frames {
            trace.push(CenteringSample { t_ms, error_x: ex, error_y: ey, cmd_x: 0.0, cmd_y: 0.0, complete: true });
            return Ok(CenteringOutcome {
                settled: true,
                settle_time_ms: Some(t_ms),
                lost_target: false,
                trace,
                state,
            });
        }
        let cmd_x = pid_step(&mut state.x, gains, ex, dt);
        let cmd_y = pid_step(&mut state.y, gains, ey, dt);
        trace.push(CenteringSample { t_ms, error_x: ex, error_y: ey, cmd_x, cmd_y, complete: true });
        source.apply([cmd_x, cmd_y], dt);
    }
    Ok(CenteringOutcome { settled: false, settle_time_ms: None, lost_target: false, trace, state })
}

/// Settling time of a recorded trace for a given threshold: the time of the
/// frame that completes the first dwell of in-threshold frames.
pub fn settling_time(trace: &[CenteringSample], threshold: f64, dwell_frames: u32) -> Option<u64> {
    let mut run = 0;
    for s in trace {
        if s.complete && s.error_x.abs() < threshold && s.error_y.abs() < threshold {
            run += 1;
            if run >= dwell_frames {
                return Some(s.t_ms);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Which form of the section-height relation to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionHeightForm {
    /// `S sin(theta) - mdp1 cos(theta)`.
    #[default]
    Corrected,
    /// `S sin(theta) - S mdp1 cos(theta)`, as printed; kept for comparison only.
    Literal,
}

/// Height of the sensed section above the finger-joint plane.
pub fn section_height(geom: &GripperGeometry, theta: f64, mdp1: f64, form: SectionHeightForm) -> f64 {
    match form {
        SectionHeightForm::Corrected => geom.s * theta.sin() - mdp1 * theta.cos(),
        SectionHeightForm::Literal => geom.s * theta.sin() - geom.s * mdp1 * theta.cos(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StemOffset {
    /// Upward arm correction before cutting, mm.
    pub offset_z: f64,
    pub s_hl: f64,
    pub d_cal: f64,
    pub l_sec: f64,
    /// Set when the section was wider than `D_cal` and `l_sec` was clamped to 0.
    pub clamped: bool,
}

/// Vertical correction that leaves `tgt.l_stem` of stem on the berry.
pub fn stem_offset(
    d_max: f64,
    est: &SectionEstimate,
    l_sg: f64,
    tgt: &TargetPose,
    shape: &ShapeModel,
    geom: &GripperGeometry,
) -> Result<StemOffset, ControlError> {
    if !(d_max > 0.0) {
        return Err(ControlError::NonPositiveDiameter(d_max));
    }
    let s_hl = shape.top_height(d_max);
    let d_cal = shape.d_cal(d_max);
    let raw = 0.5 * shape.underpart_slope() * (d_cal - est.d_sec);
    let clamped = raw < 0.0;
    let l_sec = raw.max(0.0);
    let offset_z = tgt.l_stem + s_hl + l_sec - (geom.l_gr - l_sg);
    Ok(StemOffset { offset_z, s_hl, d_cal, l_sec, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn est(q: [f64; 2], d_sec: f64) -> SectionEstimate {
        SectionEstimate { q, d_sec, points: [[0.0; 2]; 3] }
    }

    #[test]
    fn position_error_examples() {
        let t0 = TargetPose::default();
        assert_eq!(position_errors(&est([0.0, 0.0], 20.0), &t0), [0.0, 0.0]);
        assert_eq!(position_errors(&est([3.0, -2.0], 20.0), &t0), [3.0, -2.0]);
        let t = TargetPose { target_x: -1.0, target_y: 0.5, l_stem: 10.0 };
        let e = position_errors(&est([1.2, 0.4], 20.0), &t);
        assert_abs_diff_eq!(e[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 0.9, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn position_errors_are_linear(qx in -20.0f64..20.0, qy in -20.0f64..20.0,
                                     tx in -5.0f64..5.0, ty in -5.0f64..5.0, k in -3.0f64..3.0) {
            let t = TargetPose { target_x: tx, target_y: ty, l_stem: 0.0 };
            let e = position_errors(&est([qx, qy], 1.0), &t);
            let ks = TargetPose { target_x: k * tx, target_y: k * ty, l_stem: 0.0 };
            let ek = position_errors(&est([k * qx, k * qy], 1.0), &ks);
            prop_assert!((ek[0] - k * e[0]).abs() < 1e-9);
            prop_assert!((ek[1] - k * e[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn pid_equilibrium_and_p_only() {
        let mut s = AxisState::default();
        assert_eq!(pid_step(&mut s, &PidGains::default(), 0.0, 0.05), 0.0);
        let g = PidGains { kp: 0.3, ki: 0.0, kd: 0.0, output_limit: 10.0, integral_limit: 1.0 };
        let mut s = AxisState::default();
        for _ in 0..10 {
            assert_abs_diff_eq!(pid_step(&mut s, &g, 2.0, 0.05), 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn pid_saturates_output() {
        let g = PidGains { kp: 10.0, ki: 0.0, kd: 0.0, output_limit: 1.5, integral_limit: 1.0 };
        let mut s = AxisState::default();
        assert_eq!(pid_step(&mut s, &g, 5.0, 0.05), 1.5);
        assert_eq!(pid_step(&mut s, &g, -5.0, 0.05), -1.5);
    }

    proptest! {
        #[test]
        fn integral_never_exceeds_limit(errors in proptest::collection::vec(-50.0f64..50.0, 1..200)) {
            let g = PidGains { kp: 0.1, ki: 0.5, kd: 0.01, output_limit: 2.0, integral_limit: 0.7 };
            let mut s = AxisState::default();
            for e in errors {
                pid_step(&mut s, &g, e, 0.05);
                prop_assert!(s.integral.abs() <= g.integral_limit);
            }
        }
    }

    #[test]
    fn gains_validation() {
        assert!(PidGains::default().validate().is_ok());
        assert!(PidGains { kp: -1.0, ..PidGains::default() }.validate().is_err());
        assert!(PidGains { output_limit: 0.0, ..PidGains::default() }.validate().is_err());
    }

    /// Ideal planar plant: the arm follows commands exactly.
    struct Ideal {
        q: [f64; 2],
    }

    impl EstimateSource for Ideal {
        fn estimate(&mut self) -> Option<SectionEstimate> {
            Some(est(self.q, 20.0))
        }
        fn apply(&mut self, c: [f64; 2], _dt: f64) {
            self.q[0] -= c[0];
            self.q[1] -= c[1];
        }
    }

    #[test]
    fn centered_start_settles_after_dwell() {
        let mut src = Ideal { q: [0.0, 0.0] };
        let out = centering_loop(&mut src, &PidGains::default(), &TargetPose::default(), &CenteringSettings::default())
            .unwrap();
        assert!(out.settled);
        assert_eq!(out.settle_time_ms, Some(3 * FRAME_PERIOD_MS));
        assert!(out.trace.iter().all(|s| s.error_x == 0.0 && s.error_y == 0.0));
    }

    #[test]
    fn larger_threshold_settles_sooner() {
        let mut src = Ideal { q: [6.34, 0.0] };
        let tight = CenteringSettings { threshold: 0.1, ..CenteringSettings::default() };
        let out = centering_loop(&mut src, &PidGains::default(), &TargetPose::default(), &tight).unwrap();
        assert!(out.settled);
        let t_tight = settling_time(&out.trace, 0.1, 3).unwrap();
        let t_loose = settling_time(&out.trace, 1.5, 3).unwrap();
        assert_eq!(Some(t_tight), out.settle_time_ms);
        assert!(t_loose < t_tight);
    }

    #[test]
    fn zero_gains_time_out() {
        let mut src = Ideal { q: [4.0, -1.0] };
        let g = PidGains { kp: 0.0, ki: 0.0, kd: 0.0, ..PidGains::default() };
        let s = CenteringSettings { timeout_s: 2.0, ..CenteringSettings::default() };
        let out = centering_loop(&mut src, &g, &TargetPose::default(), &s).unwrap();
        assert!(!out.settled);
        assert_eq!(out.elapsed_ms(), 2000);
        assert_eq!(out.terminal_error(), Some([4.0, -1.0]));
    }

    struct Blind;
    impl EstimateSource for Blind {
        fn estimate(&mut self) -> Option<SectionEstimate> {
            None
        }
        fn apply(&mut self, _c: [f64; 2], _dt: f64) {}
    }

    #[test]
    fn lost_target_aborts() {
        let out =
            centering_loop(&mut Blind, &PidGains::default(), &TargetPose::default(), &CenteringSettings::default())
                .unwrap();
        assert!(out.lost_target);
        assert!(!out.settled);
        assert_eq!(out.trace.len(), 6);
    }

    proptest! {
        #[test]
        fn settling_time_monotone_in_threshold(errs in proptest::collection::vec(-3.0f64..3.0, 1..100),
                                               a in 0.05f64..2.0, b in 0.05f64..2.0) {
            let trace: Vec<CenteringSample> = errs.iter().enumerate().map(|(i, e)| CenteringSample {
                t_ms: (i as u64 + 1) * 50, error_x: *e, error_y: e / 2.0, cmd_x: 0.0, cmd_y: 0.0, complete: true,
            }).collect();
            let (small, large) = if a < b { (a, b) } else { (b, a) };
            if let Some(ts) = settling_time(&trace, small, 3) {
                let tl = settling_time(&trace, large, 3).unwrap();
                prop_assert!(tl <= ts);
            }
        }
    }

    #[test]
    fn pid_is_deterministic() {
        let run = || {
            let mut src = Ideal { q: [5.0, -3.0] };
            centering_loop(&mut src, &PidGains::default(), &TargetPose::default(), &CenteringSettings::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn section_height_examples() {
        let g = GripperGeometry { s: 20.0, ..GripperGeometry::default() };
        assert_abs_diff_eq!(section_height(&g, PI / 2.0, 13.0, SectionHeightForm::Corrected), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            section_height(&g, PI / 6.0, 10.0, SectionHeightForm::Corrected),
            10.0 - 5.0 * 3f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            section_height(&g, PI / 6.0, 10.0, SectionHeightForm::Corrected),
            1.3397459,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            section_height(&g, PI / 4.0, 0.0, SectionHeightForm::Corrected),
            14.1421356,
            epsilon = 1e-6
        );
        // The printed form multiplies by S once more.
        assert_abs_diff_eq!(
            section_height(&g, PI / 6.0, 10.0, SectionHeightForm::Literal),
            10.0 - 100.0 * 3f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn stem_offset_examples() {
        let g = GripperGeometry::default();
        let shape = ShapeModel::default();
        let tgt = TargetPose::default();
        let l_sg = 12.0;

        let d_cal = 30.0 / 1.11;
        let off = stem_offset(30.0, &est([0.0, 0.0], d_cal), l_sg, &tgt, &shape, &g).unwrap();
        assert_abs_diff_eq!(off.l_sec, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(off.s_hl, 16.574585635, epsilon = 1e-8);
        assert_abs_diff_eq!(off.offset_z, 10.0 + 16.574585635 - (g.l_gr - l_sg), epsilon = 1e-8);
        assert!(!off.clamped);

        let off = stem_offset(30.0, &est([0.0, 0.0], 20.0), l_sg, &tgt, &shape, &g).unwrap();
        assert_abs_diff_eq!(off.d_cal, 27.027027027, epsilon = 1e-8);
        assert_abs_diff_eq!(off.l_sec, 1.741, epsilon = 1e-3);

        let off = stem_offset(30.0, &est([0.0, 0.0], 28.0), l_sg, &tgt, &shape, &g).unwrap();
        assert_eq!(off.l_sec, 0.0);
        assert!(off.clamped);

        assert_eq!(
            stem_offset(0.0, &est([0.0, 0.0], 20.0), l_sg, &tgt, &shape, &g),
            Err(ControlError::NonPositiveDiameter(0.0))
        );
    }

    /// Builds the berry profile directly (apex, underpart, cap) and checks that
    /// cutting at `l_GR` after the offset leaves exactly `l_stem`.
    #[test]
    fn stem_length_exact_on_model_family() {
        let g = GripperGeometry::default();
        let shape = ShapeModel::default();
        for (d_max, frac, l_stem, apex_z) in [(30.0, 0.6, 10.0, 4.0), (18.0, 0.3, 5.0, -2.0), (42.0, 0.85, 15.0, 9.5)] {
            let slope = (52.72f64.to_radians() / 2.0).tan();
            let d_cal = d_max / 1.11;
            let top = apex_z + slope * d_cal / 2.0 + d_max / 1.81;
            let d_sec = frac * d_cal;
            let h_sec = apex_z + slope * d_sec / 2.0;
            let tgt = TargetPose { l_stem, ..TargetPose::default() };
            let off = stem_offset(d_max, &est([0.0, 0.0], d_sec), h_sec, &tgt, &shape, &g).unwrap();
            let cut_plane = g.l_gr + off.offset_z;
            assert!((cut_plane - top - l_stem).abs() <= 1e-6);
        }
    }

    #[test]
    fn transform_round_trip() {
        let t = PlanarTransform { rotation_deg: 30.0, tx: 1.0, ty: 2.0 };
        let v = t.apply_vector([1.0, 0.0]);
        assert_abs_diff_eq!(v[0], 3f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-12);
        let back = t.inverse_vector(v);
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back[1], 0.0, epsilon = 1e-12);
        assert_eq!(PlanarTransform::default().apply_point([3.0, 4.0]), [3.0, 4.0]);
    }
}
