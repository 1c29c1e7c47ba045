//! Cable-transmission kinematics of the gripper.
//!
//! A single servo drives both mechanisms: positive displacement pulls the
//! finger cable (fingers open), negative displacement pulls the cutter cable.
//! The finger side is modelled by the anchor point on the servo connector,
//! the cable length to the exit point `M`, the finger pulley, and the planar
//! projection of the finger tip. The cutter side is a straight line.
//!
//! All angles are radians.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

use crate::perception::CalibrationCurve;

/// Largest finger opening radius the mechanism is rated for, in mm.
pub const MAX_OPENING_MM: f64 = 40.0;

/// Servo angle that reaches [`MAX_OPENING_MM`] on the default geometry.
pub const DEFAULT_PHI_MAX_DEG: f64 = 28.3;

/// Tolerance of [`servo_for_opening`] on the opening radius, in mm.
pub const INVERSE_TOLERANCE_MM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("servo angle {phi} rad outside [{min}, {max}]")]
    ServoOutOfRange { phi: f64, min: f64, max: f64 },
    #[error("finger angle {theta} rad outside [{min}, {max}]")]
    FingerOutOfRange { theta: f64, min: f64, max: f64 },
    #[error("cutter is not engaged at positive servo angle {0} rad")]
    CutterNotEngaged(f64),
    #[error("opening radius {0} mm outside [0, {MAX_OPENING_MM}]")]
    OpeningOutOfRange(f64),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

/// Mechanical constants of the gripper. Field names follow the geometry JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperGeometry {
    /// Rotation radius of the cable anchor on the servo connector.
    pub r1: f64,
    /// Initial angle of the anchor to the x axis.
    pub alpha: f64,
    pub d1: f64,
    pub d2: f64,
    /// Cable length between anchor and exit point at zero servo angle.
    #[serde(rename = "l_PM0")]
    pub l_pm0: f64,
    /// Finger angle with the fingers closed.
    pub theta0: f64,
    /// Finger pulley radius.
    pub r2: f64,
    /// Radius of the finger-joint circle.
    #[serde(rename = "R_joint")]
    pub r_joint: f64,
    pub l_fin: f64,
    /// IR sensor mounting distance from the finger joint.
    #[serde(rename = "S")]
    pub s: f64,
    /// Height of the cutting plane above the joint plane.
    #[serde(rename = "l_GR")]
    pub l_gr: f64,
    pub phi_max: f64,
    /// Cutter blade angle per radian of (negative) servo angle.
    pub beta_slope: f64,
    /// Cutter blade angle when fully closed.
    pub beta_max: f64,
    /// Fitted IR calibration, when one has been stored with the geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationCurve>,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        GripperGeometry::calibrated(
            15.0,
            105f64.to_radians(),
            10.0,
            20.0,
            45.0,
            60.0,
            25.0,
            35.0,
            DEFAULT_PHI_MAX_DEG.to_radians(),
            2.0,
            60f64.to_radians(),
        )
        .expect("default geometry constants are consistent")
    }
}

impl GripperGeometry {
    /// Builds a geometry from the free mechanical constants, solving the
    /// closed finger angle (zero opening), the rest cable length, and the
    /// finger pulley radius so that `phi_max` opens the fingers to exactly
    /// [`MAX_OPENING_MM`].
    #[allow(clippy::too_many_arguments)]
    pub fn calibrated(
        r1: f64,
        alpha: f64,
        d1: f64,
        d2: f64,
        r_joint: f64,
        l_fin: f64,
        s: f64,
        l_gr: f64,
        phi_max: f64,
        beta_slope: f64,
        beta_max: f64,
    ) -> Result<Self, KinematicsError> {
        if l_fin <= r_joint {
            return Err(KinematicsError::InvalidGeometry(
                "finger length must exceed the joint radius to close fully".into(),
            ));
        }
        if r_joint < MAX_OPENING_MM {
            return Err(KinematicsError::InvalidGeometry(format!("joint radius must be at least {MAX_OPENING_MM} mm")));
        }
        let theta0 = (r_joint / l_fin).acos();
        let theta_open = ((r_joint - MAX_OPENING_MM) / l_fin).acos();
        let mut geom = GripperGeometry {
            r1,
            alpha,
            d1,
            d2,
            l_pm0: 0.0,
            theta0,
            r2: 1.0,
            r_joint,
            l_fin,
            s,
            l_gr,
            phi_max,
            beta_slope,
            beta_max,
            calibration: None,
        };
        geom.l_pm0 = cable_length(&geom, 0.0);
        let stroke = cable_length(&geom, phi_max) - geom.l_pm0;
        geom.r2 = stroke / (theta_open - theta0);
        geom.validate()?;
        Ok(geom)
    }

    /// Servo angle at which the cutter reaches `beta_max`.
    pub fn phi_cut_max(&self) -> f64 {
        self.beta_max / self.beta_slope
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let lengths = [
            ("r1", self.r1),
            ("l_PM0", self.l_pm0),
            ("r2", self.r2),
            ("R_joint", self.r_joint),
            ("l_fin", self.l_fin),
            ("S", self.s),
            ("l_GR", self.l_gr),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!("{name} must be a positive length, got {v}")));
            }
        }
        if !(self.d1.is_finite() && self.d2.is_finite() && self.alpha.is_finite()) {
            return Err(KinematicsError::InvalidGeometry("non-finite offset".into()));
        }
        if !(self.phi_max > 0.0) {
            return Err(KinematicsError::InvalidGeometry("phi_max must be positive".into()));
        }
        if !(self.theta0 > 0.0 && self.theta0 < FRAC_PI_2) {
            return Err(KinematicsError::InvalidGeometry("theta0 must lie in (0, pi/2)".into()));
        }
        if !(self.beta_slope > 0.0 && self.beta_max > 0.0) {
            return Err(KinematicsError::InvalidGeometry("cutter slope and travel must be positive".into()));
        }
        // Coarse monotonicity scan of the finger opening.
        let n = 256;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=n {
            let phi = self.phi_max * i as f64 / n as f64;
            let r = forward_opening(self, phi)?;
            if r <= prev {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "opening radius not increasing near phi = {phi}"
                )));
            }
            prev = r;
        }
        Ok(())
    }
}

/// Signed servo displacement; positive opens the fingers, negative drives the cutter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoState {
    pub phi: f64,
}

impl ServoState {
    pub fn new(geom: &GripperGeometry, phi: f64) -> Result<Self, KinematicsError> {
        let min = -geom.phi_cut_max();
        if !(min..=geom.phi_max).contains(&phi) {
            return Err(KinematicsError::ServoOutOfRange { phi, min, max: geom.phi_max });
        }
        Ok(ServoState { phi })
    }
}

/// Position of the cable anchor on the servo connector.
pub fn anchor_point(geom: &GripperGeometry, phi: f64) -> (f64, f64) {
    let a = phi - geom.alpha;
    (geom.r1 * a.cos(), geom.r1 * a.sin())
}

/// Cable length between the anchor and the exit point `M = (-d2, d1)`.
pub fn cable_length(geom: &GripperGeometry, phi: f64) -> f64 {
    let (x, y) = anchor_point(geom, phi);
    (x + geom.d2).hypot(y - geom.d1)
}

pub fn finger_angle(geom: &GripperGeometry, phi: f64) -> Result<f64, KinematicsError> {
    if !(0.0..=geom.phi_max).contains(&phi) {
        return Err(KinematicsError::ServoOutOfRange { phi, min: 0.0, max: geom.phi_max });
    }
    let theta = (cable_length(geom, phi) - geom.l_pm0) / geom.r2 + geom.theta0;
    Ok(theta.clamp(geom.theta0, FRAC_PI_2))
}

pub fn opening_radius(geom: &GripperGeometry, theta: f64) -> Result<f64, KinematicsError> {
    if !(geom.theta0..=FRAC_PI_2).contains(&theta) {
        return Err(KinematicsError::FingerOutOfRange { theta, min: geom.theta0, max: FRAC_PI_2 });
    }
    Ok((geom.r_joint - geom.l_fin * theta.cos()).max(0.0))
}

/// `opening_radius(finger_angle(phi))`.
pub fn forward_opening(geom: &GripperGeometry, phi: f64) -> Result<f64, KinematicsError> {
    opening_radius(geom, finger_angle(geom, phi)?)
}

pub fn cutter_angle(geom: &GripperGeometry, phi: f64) -> Result<f64, KinematicsError> {
    if phi > 0.0 {
        return Err(KinematicsError::CutterNotEngaged(phi));
    }
    Ok((geom.beta_slope * -phi).min(geom.beta_max))
}

/// Servo angle that opens the fingers to `r_target`, by bisection on
/// `[0, phi_max]`.
pub fn servo_for_opening(geom: &GripperGeometry, r_target: f64) -> Result<f64, KinematicsError> {
    if !(0.0..=MAX_OPENING_MM).contains(&r_target) {
        return Err(KinematicsError::OpeningOutOfRange(r_target));
    }
    let f = |phi: f64| forward_opening(geom, phi).map(|r| r - r_target);
    let (mut lo, mut hi) = (0.0, geom.phi_max);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if f_lo.abs() <= INVERSE_TOLERANCE_MM {
        return Ok(lo);
    }
    if f_hi.abs() <= INVERSE_TOLERANCE_MM {
        return Ok(hi);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(KinematicsError::OpeningOutOfRange(r_target));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() <= INVERSE_TOLERANCE_MM * 1e-3 || (hi - lo).abs() < f64::EPSILON {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row of the kinematic table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicSample {
    pub phi: f64,
    pub theta: f64,
    pub r: f64,
    pub beta: f64,
}

/// Samples the full servo range `[-phi_cut_max, phi_max]` at `step`, always
/// including both endpoints and zero.
pub fn sample_range(geom: &GripperGeometry, step: f64) -> Result<Vec<KinematicSample>, KinematicsError> {
    if !(step > 0.0) {
        return Err(KinematicsError::InvalidGeometry(format!("step must be positive, got {step}")));
    }
    let mut phis = Vec::new();
    let lo = -geom.phi_cut_max();
    let n_neg = (-lo / step).floor() as i64;
    if (-lo - n_neg as f64 * step).abs() > 1e-12 {
        phis.push(lo);
    }
    for k in (1..=n_neg).rev() {
        phis.push(-(k as f64) * step);
    }
    let n_pos = (geom.phi_max / step).floor() as i64;
    for k in 0..=n_pos {
        phis.push(k as f64 * step);
    }
    if (geom.phi_max - n_pos as f64 * step).abs() > 1e-12 {
        phis.push(geom.phi_max);
    }
    phis.into_iter()
        .map(|phi| {
            if phi <= 0.0 {
                Ok(KinematicSample {
                    phi,
                    theta: geom.theta0,
                    r: opening_radius(geom, geom.theta0)?,
                    beta: cutter_angle(geom, phi)?,
                })
            } else {
                let theta = finger_angle(geom, phi)?;
                Ok(KinematicSample { phi, theta, r: opening_radius(geom, theta)?, beta: 0.0 })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn bare(r1: f64, alpha: f64, d1: f64, d2: f64) -> GripperGeometry {
        GripperGeometry { r1, alpha, d1, d2, ..GripperGeometry::default() }
    }

    #[test]
    fn anchor_point_examples() {
        let (x, y) = anchor_point(&bare(10.0, 0.0, 1.0, 1.0), 0.0);
        assert_abs_diff_eq!(x, 10.0);
        assert_abs_diff_eq!(y, 0.0);
        let (x, y) = anchor_point(&bare(10.0, PI / 2.0, 1.0, 1.0), PI / 2.0);
        assert_abs_diff_eq!(x, 10.0);
        assert_abs_diff_eq!(y, 0.0);
    }

    #[test]
    fn anchor_point_default_hand_value() {
        // 15 * (cos, sin)(0.2 - 105 deg), evaluated by hand.
        let g = GripperGeometry::default();
        let a = 0.2 - 105f64.to_radians();
        let (x, y) = anchor_point(&g, 0.2);
        assert_abs_diff_eq!(x, 15.0 * a.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(y, 15.0 * a.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(x, -0.926401, epsilon = 1e-6);
        assert_abs_diff_eq!(y, -14.971365, epsilon = 1e-6);
    }

    #[test]
    fn cable_length_examples() {
        let mut g = bare(1.0, 0.0, 3.0, 4.0);
        g.r1 = 0.0;
        assert_abs_diff_eq!(cable_length(&g, 0.7), 5.0, epsilon = 1e-12);
        let g = GripperGeometry::default();
        assert_abs_diff_eq!(cable_length(&g, 0.0), g.l_pm0, epsilon = 1e-12);
        // Independent evaluation at phi = 0.3.
        let a = 0.3 - g.alpha;
        let expected = ((15.0 * a.cos() + 20.0).powi(2) + (15.0 * a.sin() - 10.0).powi(2)).sqrt();
        assert_abs_diff_eq!(cable_length(&g, 0.3), expected, epsilon = 1e-12);
    }

    #[test]
    fn finger_angle_examples() {
        let g = GripperGeometry::default();
        assert_abs_diff_eq!(finger_angle(&g, 0.0).unwrap(), g.theta0, epsilon = 1e-12);
        let theta_max = finger_angle(&g, g.phi_max).unwrap();
        assert_abs_diff_eq!(opening_radius(&g, theta_max).unwrap(), 40.0, epsilon = 1e-9);
        let half = g.phi_max / 2.0;
        let expected = (cable_length(&g, half) - cable_length(&g, 0.0)) / g.r2 + g.theta0;
        assert_abs_diff_eq!(finger_angle(&g, half).unwrap(), expected, epsilon = 1e-12);
        assert!(finger_angle(&g, -0.01).is_err());
        assert!(finger_angle(&g, g.phi_max + 0.01).is_err());
    }

    #[test]
    fn opening_radius_examples() {
        let g = GripperGeometry::default();
        assert_abs_diff_eq!(opening_radius(&g, FRAC_PI_2).unwrap(), g.r_joint, epsilon = 1e-12);
        assert_abs_diff_eq!(opening_radius(&g, g.theta0).unwrap(), 0.0, epsilon = 1e-12);
        assert!(opening_radius(&g, g.theta0 - 0.1).is_err());
        assert!(opening_radius(&g, 1.6).is_err());
    }

    #[test]
    fn default_endpoints() {
        let g = GripperGeometry::default();
        assert_abs_diff_eq!(g.phi_max.to_degrees(), 28.3, epsilon = 1e-12);
        assert_abs_diff_eq!(forward_opening(&g, 0.0).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(forward_opening(&g, g.phi_max).unwrap(), 40.0, epsilon = 1e-9);
    }

    #[test]
    fn cutter_examples() {
        let g = GripperGeometry::default();
        assert_eq!(cutter_angle(&g, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(cutter_angle(&g, -g.phi_cut_max()).unwrap(), g.beta_max, epsilon = 1e-12);
        let half = cutter_angle(&g, -g.phi_cut_max() / 2.0).unwrap();
        assert_abs_diff_eq!(half, g.beta_max / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(half, g.beta_slope * g.phi_cut_max() / 2.0, epsilon = 1e-12);
        assert_eq!(cutter_angle(&g, -10.0).unwrap(), g.beta_max);
        assert!(matches!(cutter_angle(&g, 0.1), Err(KinematicsError::CutterNotEngaged(_))));
    }

    #[test]
    fn cutter_is_linear_before_clamp() {
        let g = GripperGeometry::default();
        for i in 0..=100 {
            let phi = -g.phi_cut_max() * i as f64 / 100.0;
            let beta = cutter_angle(&g, phi).unwrap();
            assert!((beta - g.beta_slope * -phi).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn inverse_examples() {
        let g = GripperGeometry::default();
        assert_eq!(servo_for_opening(&g, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(servo_for_opening(&g, 40.0).unwrap(), g.phi_max, epsilon = 1e-12);
        let phi = servo_for_opening(&g, 20.0).unwrap();
        assert!((forward_opening(&g, phi).unwrap() - 20.0).abs() <= INVERSE_TOLERANCE_MM);
        assert!(servo_for_opening(&g, -0.1).is_err());
        assert!(servo_for_opening(&g, 40.5).is_err());
    }

    #[test]
    fn near_linear_opening() {
        let g = GripperGeometry::default();
        let n = 1000;
        let worst = (0..=n)
            .map(|i| {
                let phi = g.phi_max * i as f64 / n as f64;
                let chord = MAX_OPENING_MM * phi / g.phi_max;
                (forward_opening(&g, phi).unwrap() - chord).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 0.05 * MAX_OPENING_MM, "deviation {worst}");
    }

    #[test]
    fn servo_state_range() {
        let g = GripperGeometry::default();
        assert!(ServoState::new(&g, 0.1).is_ok());
        assert!(ServoState::new(&g, -g.phi_cut_max()).is_ok());
        assert!(ServoState::new(&g, -g.phi_cut_max() - 1e-6).is_err());
        assert!(ServoState::new(&g, g.phi_max + 1e-6).is_err());
    }

    #[test]
    fn table_includes_endpoints() {
        let g = GripperGeometry::default();
        let rows = sample_range(&g, 0.7f64.to_radians()).unwrap();
        assert_abs_diff_eq!(rows.first().unwrap().phi, -g.phi_cut_max());
        assert_abs_diff_eq!(rows.last().unwrap().phi, g.phi_max);
        assert!(rows.iter().any(|s| s.phi == 0.0 && s.r.abs() < 1e-9));
        assert!(rows.windows(2).all(|w| w[0].phi < w[1].phi));
        assert!(sample_range(&g, 0.0).is_err());
    }

    #[test]
    fn geometry_json_uses_exact_field_names() {
        let g = GripperGeometry::default();
        let v = serde_json::to_value(&g).unwrap();
        for key in [
            "r1",
            "alpha",
            "d1",
            "d2",
            "l_PM0",
            "theta0",
            "r2",
            "R_joint",
            "l_fin",
            "S",
            "l_GR",
            "phi_max",
            "beta_slope",
            "beta_max",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: GripperGeometry = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
    }
}
