//! Internal IR perception: ambient rejection, analog-to-distance calibration,
//! and the section estimate (centroid and diameter) from the three sensors.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_6;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use thiserror::Error;

use crate::kinematics::GripperGeometry;

/// Sensing and control period.
pub const FRAME_PERIOD_MS: u64 = 50;

/// Smallest accepted `|bd - ea|` for the circumcircle solve, in mm².
pub const COLLINEAR_EPSILON: f64 = 1e-6;

/// Azimuths of the three sensors in the gripper frame (90°, 210°, 330°).
pub const SENSOR_AZIMUTHS: [f64; 3] =
    [std::f64::consts::FRAC_PI_2, std::f64::consts::PI + FRAC_PI_6, 2.0 * std::f64::consts::PI - FRAC_PI_6];

pub type Point2 = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("calibration fit needs at least 4 samples with distinct analog values, got {0}")]
    TooFewSamples(usize),
    #[error("calibration fit failed: {0}")]
    Fit(String),
    #[error("detected points are collinear (|bd - ea| = {conditioning:e})")]
    Collinear { conditioning: f64 },
    #[error("sensor ring radius {0} mm is not positive")]
    SensorBehindCenter(f64),
    #[error("frame is incomplete: sensor(s) {0:?} saw no berry")]
    IncompleteFrame(Vec<usize>),
    #[error("invalid calibration curve: {0}")]
    InvalidCurve(String),
}

/// One LED-on / LED-off pair of analog readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrSample {
    pub raw_on: f64,
    pub raw_off: f64,
    pub timestamp_ms: u64,
}

/// Removes the ambient component measured with the LED off.
pub fn filter_sample(s: &IrSample) -> f64 {
    (s.raw_on - s.raw_off).max(0.0)
}

/// `d(v) = a / (v - b) + c` over the analog range `[v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for CalibrationCurve {
    /// Synthetic TCRT5000-like response: 3 mm at 1000 counts, 79 mm at 50 counts.
    fn default() -> Self {
        CalibrationCurve { a: 4000.0, b: 0.0, c: -1.0, v_min: 50.0, v_max: 1000.0 }
    }
}

/// A calibrated distance; `saturated` is set when the analog value was
/// outside the valid range and the distance was clamped to the range end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub mm: f64,
    pub saturated: bool,
}

impl CalibrationCurve {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let finite = [self.a, self.b, self.c, self.v_min, self.v_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(PerceptionError::InvalidCurve("non-finite parameter".into()));
        }
        if !(self.v_min < self.v_max) {
            return Err(PerceptionError::InvalidCurve("empty analog range".into()));
        }
        if !(self.a > 0.0 && self.b < self.v_min) {
            return Err(PerceptionError::InvalidCurve("distance must decrease strictly over the analog range".into()));
        }
        Ok(())
    }

    fn eval(&self, v: f64) -> f64 {
        self.a / (v - self.b) + self.c
    }

    /// Shortest distance the curve reports (at `v_max`).
    pub fn min_distance(&self) -> f64 {
        self.eval(self.v_max)
    }

    /// Longest distance the curve reports (at `v_min`).
    pub fn max_distance(&self) -> f64 {
        self.eval(self.v_min)
    }

    /// Analog value that maps to distance `d`, clamped into the valid range.
    pub fn distance_to_analog(&self, d: f64) -> f64 {
        if d <= self.c {
            return self.v_max;
        }
        (self.a / (d - self.c) + self.b).clamp(self.v_min, self.v_max)
    }
}

pub fn analog_to_distance(curve: &CalibrationCurve, v: f64) -> Distance {
    if v < curve.v_min {
        Distance { mm: curve.max_distance(), saturated: true }
    } else if v > curve.v_max {
        Distance { mm: curve.min_distance(), saturated: true }
    } else {
        Distance { mm: curve.eval(v), saturated: false }
    }
}

/// Result of [`fit_calibration`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub curve: CalibrationCurve,
    /// Root-mean-square distance residual, mm.
    pub residual_rms: f64,
}

/// Least-squares fit of `a / (v - b) + c` to `(analog, distance_mm)` pairs.
///
/// The pole `b` is located first with a bounded golden-section search on the
/// reduced problem (for fixed `b` the model is linear in `a` and `c`), then
/// all three parameters are polished with damped Gauss-Newton.
pub fn fit_calibration(samples: &[(f64, f64)]) -> Result<CalibrationFit, PerceptionError> {
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(PerceptionError::TooFewSamples(distinct.len()));
    }
    if samples.iter().any(|(v, d)| !v.is_finite() || !d.is_finite()) {
        return Err(PerceptionError::Fit("non-finite sample".into()));
    }
    let v_min = distinct[0];
    let v_max = *distinct.last().unwrap();
    let span = v_max - v_min;

    let sse = |a: f64, b: f64, c: f64| -> f64 { samples.iter().map(|(v, d)| (a / (v - b) + c - d).powi(2)).sum() };
    let linear_ac = |b: f64| -> Option<(f64, f64)> {
        let n = samples.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (v, d) in samples {
            let x = 1.0 / (v - b);
            sx += x;
            sy += d;
            sxx += x * x;
            sxy += x * d;
        }
        let det = n * sxx - sx * sx;
        if det.abs() <= f64::EPSILON * n * sxx {
            return None;
        }
        let a = (n * sxy - sx * sy) / det;
        Some((a, (sy - a * sx) / n))
    };
    let reduced = |b: f64| linear_ac(b).map(|(a, c)| sse(a, b, c)).unwrap_or(f64::INFINITY);

    // Golden section over log-spaced distance of the pole below v_min.
    let to_b = |u: f64| v_min - span * 10f64.powf(u);
    let (mut lo, mut hi) = (-6.0f64, 3.0f64);
    // Coarse scan first so the bracket holds the global minimum.
    let mut best_u = lo;
    let mut best = f64::INFINITY;
    for i in 0..=90 {
        let u = lo + (hi - lo) * i as f64 / 90.0;
        let e = reduced(to_b(u));
        if e < best {
            best = e;
            best_u = u;
        }
    }
    lo = (best_u - 0.1).max(-6.0);
    hi = (best_u + 0.1).min(3.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (reduced(to_b(x1)), reduced(to_b(x2)));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = reduced(to_b(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = reduced(to_b(x2));
        }
    }
    let mut b = to_b(0.5 * (lo + hi));
    let (mut a, mut c) = linear_ac(b).ok_or_else(|| PerceptionError::Fit("singular linear stage".into()))?;

    // Levenberg-Marquardt polish.
    let mut lambda = 1e-3;
    let mut cost = sse(a, b, c);
    for _ in 0..100 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (v, d) in samples {
            let x = 1.0 / (v - b);
            let r = a * x + c - d;
            let j = Vector3::new(x, a * x * x, 1.0);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let (na, nb, nc) = (a + step[0], b + step[1], c + step[2]);
            if nb >= v_min {
                lambda *= 10.0;
                continue;
            }
            let new_cost = sse(na, nb, nc);
            if new_cost <= cost {
                improved = cost - new_cost > 1e-30 * (1.0 + cost);
                a = na;
                b = nb;
                c = nc;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let curve = CalibrationCurve { a, b, c, v_min, v_max };
    curve.validate().map_err(|e| PerceptionError::Fit(e.to_string()))?;
    Ok(CalibrationFit { curve, residual_rms: (cost / samples.len() as f64).sqrt() })
}

/// Reads `(analog, distance_mm)` calibration samples from CSV with a header row.
pub fn read_calibration_csv<R: std::io::Read>(reader: R) -> Result<Vec<(f64, f64)>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<(f64, f64)>().collect()
}

/// One 50 ms snapshot of the three sensor distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    /// Distances along each sensor axis, mm.
    pub mdp: [f64; 3],
    /// Finger angle when the frame was taken, rad.
    pub theta: f64,
    pub timestamp_ms: u64,
    /// Which sensors saw the berry within the calibrated range.
    pub hits: [bool; 3],
}

impl SensorFrame {
    pub fn is_complete(&self) -> bool {
        self.hits.iter().all(|h| *h)
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..3).filter(|&i| !self.hits[i]).collect()
    }
}

/// Centroid and diameter of the horizontal berry section seen by the sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionEstimate {
    pub q: Point2,
    pub d_sec: f64,
    pub points: [Point2; 3],
}

/// Horizontal projection of the sensor distances.
pub fn project_distances(frame: &SensorFrame) -> [f64; 3] {
    let s = frame.theta.sin();
    frame.mdp.map(|m| m * s)
}

/// Distance from the gripper axis to the IR sensor centres.
pub fn sensor_ring_radius(geom: &GripperGeometry, theta: f64) -> Result<f64, PerceptionError> {
    let l = geom.r_joint - geom.s * theta.cos();
    if l <= 0.0 {
        return Err(PerceptionError::SensorBehindCenter(l));
    }
    Ok(l)
}

/// Detected berry-surface points in the gripper frame. Sensor 1 looks along
/// -y from the +y axis; sensors 2 and 3 sit at 210° and 330°.
pub fn detected_points(l: f64, md: [f64; 3]) -> [Point2; 3] {
    let (c, s) = (FRAC_PI_6.cos(), FRAC_PI_6.sin());
    [[0.0, l - md[0]], [-c * (l - md[1]), -s * (l - md[1])], [c * (l - md[2]), -s * (l - md[2])]]
}

/// Circumcircle of the three detected points.
pub fn estimate_section(points: [Point2; 3]) -> Result<SectionEstimate, PerceptionError> {
    let [p1, p2, p3] = points;
    let a = 2.0 * (p2[0] - p1[0]);
    let b = 2.0 * (p2[1] - p1[1]);
    let c = p2[0] * p2[0] + p2[1] * p2[1] - p1[0] * p1[0] - p1[1] * p1[1];
    let d = 2.0 * (p3[0] - p2[0]);
    let e = 2.0 * (p3[1] - p2[1]);
    let f = p3[0] * p3[0] + p3[1] * p3[1] - p2[0] * p2[0] - p2[1] * p2[1];
    let den = b * d - e * a;
    if !(den.abs() > COLLINEAR_EPSILON) {
        return Err(PerceptionError::Collinear { conditioning: den.abs() });
    }
    let qx = (b * f - e * c) / den;
    let qy = (d * c - a * f) / den;
    let d_sec = 2.0 * (qx - p1[0]).hypot(qy - p1[1]);
    Ok(SectionEstimate { q: [qx, qy], d_sec, points })
}

/// Full chain from a frame to a section estimate. Incomplete frames are rejected.
pub fn estimate_from_frame(geom: &GripperGeometry, frame: &SensorFrame) -> Result<SectionEstimate, PerceptionError> {
    if !frame.is_complete() {
        return Err(PerceptionError::IncompleteFrame(frame.missing()));
    }
    let l = sensor_ring_radius(geom, frame.theta)?;
    estimate_section(detected_points(l, project_distances(frame)))
}

/// Bounded, in-order hand-over of frames from the sensing producer to the
/// control consumer. At most one frame waits in the queue; the producer
/// blocks until the consumer has taken it.
pub fn frame_channel() -> (SyncSender<SensorFrame>, Receiver<SensorFrame>) {
    sync_channel(1)
}
