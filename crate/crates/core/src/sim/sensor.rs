//! Synthetic IR sensing inside the finger cage.
//!
//! Sensor 1 is ray-cast in 3D along its axis (inward normal of the finger).
//! The height of its hit fixes the section plane; sensors 2 and 3 then range
//! the berry cross-section in that plane along the horizontal projection of
//! their axes, and report the along-axis distance `md / sin(theta)`. Misses,
//! hits outside the cage, and out-of-range distances flag the frame.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::berry::BerrySolid;
use super::plant::PlantState;
use crate::control::PlanarTransform;
use crate::kinematics::{finger_angle, GripperGeometry};
use crate::perception::{
    analog_to_distance, filter_sample, sensor_ring_radius, CalibrationCurve, IrSample, SensorFrame, SENSOR_AZIMUTHS,
};

/// Sunlight seen by the sensors as additive counts on both LED phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientProfile {
    pub offset: f64,
    pub amplitude: f64,
    pub period_s: f64,
}

impl Default for AmbientProfile {
    fn default() -> Self {
        AmbientProfile { offset: 150.0, amplitude: 100.0, period_s: 4.0 }
    }
}

impl AmbientProfile {
    pub fn at(&self, t_ms: u64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * (t_ms as f64 / 1000.0) / self.period_s;
        (self.offset + self.amplitude * phase.sin()).max(0.0)
    }
}

/// Everything the sensor model needs besides the plant and the berries.
#[derive(Debug, Clone, Copy)]
pub struct SensorContext<'a> {
    pub geom: &'a GripperGeometry,
    pub curve: &'a CalibrationCurve,
    pub transform: &'a PlanarTransform,
    pub ambient: &'a AmbientProfile,
    /// Standard deviation of the along-axis distance noise, mm.
    pub sigma_mm: f64,
}

/// A sensed frame plus the world height of the section plane, when found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensed {
    pub frame: SensorFrame,
    pub section_z: Option<f64>,
}

/// Maps gripper-frame points and directions to the world.
#[derive(Debug, Clone, Copy)]
pub struct GripperPose {
    pub origin: Vector3<f64>,
    pub yaw: f64,
}

impl GripperPose {
    pub fn new(plant: &PlantState, transform: &PlanarTransform) -> Self {
        GripperPose { origin: Vector3::from(plant.arm_position), yaw: transform.rotation_deg.to_radians() }
    }

    pub fn dir_to_world(&self, v: Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    pub fn to_world(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.origin + self.dir_to_world(p)
    }

    pub fn to_gripper(&self, p: Vector3<f64>) -> Vector3<f64> {
        let d = p - self.origin;
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }
}

/// Radius of the finger cage at gripper-frame height `z`, or `None` above the
/// finger tips or below the joint plane.
pub fn cage_radius(geom: &GripperGeometry, theta: f64, z: f64) -> Option<f64> {
    let tip = geom.l_fin * theta.sin();
    if !(0.0..=tip).contains(&z) {
        return None;
    }
    Some(geom.r_joint - z * theta.cos() / theta.sin())
}

fn inside_cage(geom: &GripperGeometry, theta: f64, p_grip: Vector3<f64>) -> bool {
    cage_radius(geom, theta, p_grip.z).is_some_and(|r| p_grip.x.hypot(p_grip.y) < r)
}

fn nearest_hit(
    berries: &[BerrySolid],
    pose: &GripperPose,
    geom: &GripperGeometry,
    theta: f64,
    origin_g: Vector3<f64>,
    dir_g: Vector3<f64>,
) -> Option<f64> {
    let (o, d) = (pose.to_world(origin_g), pose.dir_to_world(dir_g));
    berries
        .iter()
        .filter_map(|b| b.first_hit(o, d))
        .filter(|t| inside_cage(geom, theta, origin_g + dir_g * *t))
        .min_by(f64::total_cmp)
}

/// Takes one frame at the plant's current pose and clock.
pub fn sense<R: Rng + ?Sized>(ctx: &SensorContext, plant: &PlantState, berries: &[BerrySolid], rng: &mut R) -> Sensed {
    let geom = ctx.geom;
    let phi = plant.servo_phi.clamp(0.0, geom.phi_max);
    let theta = finger_angle(geom, phi).expect("servo clamped to finger range");
    let pose = GripperPose::new(plant, ctx.transform);
    let (st, ct) = theta.sin_cos();
    let l = sensor_ring_radius(geom, theta).unwrap_or(0.0);
    let sensor_z = geom.s * st;

    let mut ideal: [Option<f64>; 3] = [None; 3];
    let psi = SENSOR_AZIMUTHS[0];
    let origin = Vector3::new(l * psi.cos(), l * psi.sin(), sensor_z);
    let dir = Vector3::new(-st * psi.cos(), -st * psi.sin(), -ct);
    ideal[0] = nearest_hit(berries, &pose, geom, theta, origin, dir);
    let section_z = ideal[0].map(|t| sensor_z - t * ct);

    for k in 1..3 {
        let psi = SENSOR_AZIMUTHS[k];
        ideal[k] = match section_z {
            Some(z) => {
                let origin = Vector3::new(l * psi.cos(), l * psi.sin(), z);
                let dir = Vector3::new(-psi.cos(), -psi.sin(), 0.0);
                nearest_hit(berries, &pose, geom, theta, origin, dir).map(|md| md / st)
            }
            None => {
                let origin = Vector3::new(l * psi.cos(), l * psi.sin(), sensor_z);
                let dir = Vector3::new(-st * psi.cos(), -st * psi.sin(), -ct);
                nearest_hit(berries, &pose, geom, theta, origin, dir)
            }
        };
    }

    let noise = Normal::new(0.0, ctx.sigma_mm.max(0.0)).expect("finite sigma");
    let amb = ctx.ambient.at(plant.clock_ms);
    let (d_lo, d_hi) = (ctx.curve.min_distance(), ctx.curve.max_distance());
    let mut mdp = [d_hi; 3];
    let mut hits = [false; 3];
    for k in 0..3 {
        // Always draw so the random stream does not depend on hit patterns.
        let n = noise.sample(rng);
        let Some(d) = ideal[k] else { continue };
        let d = d + n;
        if !(d_lo..=d_hi).contains(&d) {
            continue;
        }
        let v = ctx.curve.distance_to_analog(d);
        let sample = IrSample { raw_on: v + amb, raw_off: amb, timestamp_ms: plant.clock_ms };
        let dist = analog_to_distance(ctx.curve, filter_sample(&sample));
        if !dist.saturated {
            mdp[k] = dist.mm;
            hits[k] = true;
        }
    }
    Sensed {
        frame: SensorFrame { mdp, theta, timestamp_ms: plant.clock_ms, hits },
        section_z: section_z.map(|z| pose.origin.z + z),
    }
}

/// True when any sampled point of the berry body presses into the finger cage.
pub fn fingers_touch(geom: &GripperGeometry, theta: f64, pose: &GripperPose, berry: &BerrySolid) -> bool {
    berry.sample_surface(48, 36).into_iter().any(|p| {
        let g = pose.to_gripper(p);
        cage_radius(geom, theta, g.z).is_some_and(|r| g.x.hypot(g.y) >= r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ShapeModel;
    use crate::kinematics::servo_for_opening;
    use crate::sim::berry::BerryInstance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Berry shoulder at `center` shifted up so the tip sits 1.5 mm below
    /// the point where sensor 1's axis crosses the gripper axis.
    fn setup(center: [f64; 3]) -> (GripperGeometry, BerrySolid, PlantState) {
        let geom = GripperGeometry::default();
        let phi = servo_for_opening(&geom, 35.0).unwrap();
        let theta = finger_angle(&geom, phi).unwrap();
        let l = sensor_ring_radius(&geom, theta).unwrap();
        let crossing = geom.s * theta.sin() - l / theta.tan();
        let apex = crate::sim::berry::BerryProfile::new(30.0, &ShapeModel::default()).z_apex;
        let center = [center[0], center[1], center[2] + crossing - apex - 1.5];
        let b = BerryInstance {
            id: 0,
            center,
            d_max: 30.0,
            stem_diameter: 2.0,
            stem_length_available: 40.0,
            incline: 0.0,
            incline_azimuth: 0.0,
            ripe: true,
        };
        let solid = BerrySolid::new(&b, &ShapeModel::default());
        let mut plant = PlantState::at([0.0, 0.0, 0.0], 0.1, 100.0);
        plant.servo_phi = phi;
        (geom, solid, plant)
    }

    fn ctx<'a>(
        geom: &'a GripperGeometry,
        curve: &'a CalibrationCurve,
        t: &'a PlanarTransform,
        a: &'a AmbientProfile,
    ) -> SensorContext<'a> {
        SensorContext { geom, curve, transform: t, ambient: a, sigma_mm: 0.0 }
    }

    #[test]
    fn centered_berry_gives_equal_distances() {
        let (geom, solid, plant) = setup([0.0, 0.0, 0.0]);
        let (curve, t, a) = (CalibrationCurve::default(), PlanarTransform::default(), AmbientProfile::default());
        let s = sense(&ctx(&geom, &curve, &t, &a), &plant, &[solid], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.frame.is_complete());
        assert!((s.frame.mdp[0] - s.frame.mdp[1]).abs() < 1e-9);
        assert!((s.frame.mdp[0] - s.frame.mdp[2]).abs() < 1e-9);
    }

    #[test]
    fn offset_berry_matches_analytic_oracle() {
        // Berry axis at (2, 1). Sensor 1: intersect its 3D ray with the
        // underpart cone directly; sensors 2 and 3: 2D ray-circle at that height.
        let (geom, solid, plant) = setup([2.0, 1.0, 0.0]);
        let (curve, t, a) = (CalibrationCurve::default(), PlanarTransform::default(), AmbientProfile::default());
        let s = sense(&ctx(&geom, &curve, &t, &a), &plant, &[solid], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.frame.is_complete());
        let theta = s.frame.theta;
        let (st, ct) = theta.sin_cos();
        let l = sensor_ring_radius(&geom, theta).unwrap();
        let p = solid.profile;
        let apex_z = solid.center.z + p.z_apex;
        // Ray: (0, l - u st, S st - u ct); cone: hypot(x-2, y-1) = (z - apex_z)/slope.
        let f = |u: f64| {
            let (x, y, z) = (0.0, l - u * st, geom.s * st - u * ct);
            (x - 2.0f64).hypot(y - 1.0) - (z - apex_z) / p.slope
        };
        let mut hi = 0.0;
        while f(hi) > 0.0 {
            hi += 0.01;
            assert!(hi < 80.0, "ray never enters the cone");
        }
        let mut lo = hi - 0.01;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((s.frame.mdp[0] - lo).abs() < 1e-9, "{} vs {}", s.frame.mdp[0], lo);
        let z = geom.s * st - lo * ct;
        let radius = (z - apex_z) / p.slope;
        for k in 1..3 {
            let psi = SENSOR_AZIMUTHS[k];
            let (px, py) = (l * psi.cos() - 2.0, l * psi.sin() - 1.0);
            let (dx, dy) = (-psi.cos(), -psi.sin());
            let bq = px * dx + py * dy;
            let cq = px * px + py * py - radius * radius;
            let md = -bq - (bq * bq - cq).sqrt();
            assert!((s.frame.mdp[k] - md / st).abs() < 1e-9);
        }
    }

    #[test]
    fn berry_outside_ring_is_missed() {
        let (geom, solid, plant) = setup([80.0, 0.0, 0.0]);
        let (curve, t, a) = (CalibrationCurve::default(), PlanarTransform::default(), AmbientProfile::default());
        let s = sense(&ctx(&geom, &curve, &t, &a), &plant, &[solid], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.frame.hits, [false; 3]);
        assert!(s.section_z.is_none());
        assert_eq!(s.frame.mdp, [curve.max_distance(); 3]);
    }

    #[test]
    fn ambient_does_not_bias_distances() {
        let (geom, solid, plant) = setup([1.0, -1.5, 0.0]);
        let (curve, t) = (CalibrationCurve::default(), PlanarTransform::default());
        let dark = AmbientProfile { offset: 0.0, amplitude: 0.0, period_s: 1.0 };
        let sunny = AmbientProfile { offset: 400.0, amplitude: 300.0, period_s: 0.3 };
        let a = sense(&ctx(&geom, &curve, &t, &dark), &plant, &[solid], &mut ChaCha8Rng::seed_from_u64(0));
        let b = sense(&ctx(&geom, &curve, &t, &sunny), &plant, &[solid], &mut ChaCha8Rng::seed_from_u64(0));
        for k in 0..3 {
            assert!((a.frame.mdp[k] - b.frame.mdp[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn cage_contact_detected() {
        let (geom, solid, plant) = setup([0.0, 0.0, 0.0]);
        let theta = finger_angle(&geom, plant.servo_phi).unwrap();
        let pose = GripperPose::new(&plant, &PlanarTransform::default());
        assert!(!fingers_touch(&geom, theta, &pose, &solid));
        let (_, far, _) = setup([30.0, 0.0, 0.0]);
        assert!(fingers_touch(&geom, theta, &pose, &far));
    }
}
