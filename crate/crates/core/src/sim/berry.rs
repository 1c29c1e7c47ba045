//! Synthetic strawberry: a surface of revolution built from the shape model.
//!
//! Local frame: origin at the shoulder centre, +z along the berry axis
//! towards the stem. Above the triangle-top section the body is a spheroid
//! with equatorial radius `D_max / 2` that closes at the top, `S_hl` above the
//! triangle-top section. Below it the body is a cone that loses
//! `1 / tan(gamma / 2)` mm of radius per mm of height down to the tip.

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::ShapeModel;

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryInstance {
    pub id: u32,
    /// Shoulder-section centre in the world frame, mm.
    pub center: Point3,
    /// Shoulder diameter, mm.
    pub d_max: f64,
    pub stem_diameter: f64,
    /// Stem length above the berry top before it joins the truss, mm.
    pub stem_length_available: f64,
    /// Tilt of the berry axis from vertical, degrees.
    pub incline: f64,
    /// Direction of the tilt in the horizontal plane, degrees.
    #[serde(default)]
    pub incline_azimuth: f64,
    pub ripe: bool,
}

/// Profile constants of one berry in its local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerryProfile {
    /// Spheroid equatorial radius (`D_max / 2`).
    pub a: f64,
    /// Spheroid polar half-axis; also the top height.
    pub b: f64,
    /// Depth of the triangle-top section below the shoulder.
    pub drop: f64,
    /// Height gained per mm of radius on the underpart.
    pub slope: f64,
    /// Height of the tip.
    pub z_apex: f64,
}

impl BerryProfile {
    pub fn new(d_max: f64, shape: &ShapeModel) -> Self {
        let a = d_max / 2.0;
        let d_cal = shape.d_cal(d_max);
        let ratio = d_cal / d_max;
        let root = (1.0 - ratio * ratio).sqrt();
        let b = shape.top_height(d_max) / (1.0 + root);
        let drop = b * root;
        let slope = shape.underpart_slope();
        BerryProfile { a, b, drop, slope, z_apex: -drop - slope * d_cal / 2.0 }
    }

    pub fn z_top(&self) -> f64 {
        self.b
    }

    /// Body radius at local height `z`, or `None` outside the body.
    pub fn radius_at(&self, z: f64) -> Option<f64> {
        if z < self.z_apex || z > self.b {
            None
        } else if z <= -self.drop {
            Some((z - self.z_apex) / self.slope)
        } else {
            Some(self.a * (1.0 - (z / self.b).powi(2)).max(0.0).sqrt())
        }
    }

    fn contains(&self, p: Vector3<f64>) -> bool {
        self.radius_at(p.z).is_some_and(|r| p.x.hypot(p.y) <= r)
    }

    /// Smallest `t >= 0` where `p + t d` meets the body surface (local frame).
    fn first_hit(&self, p: Vector3<f64>, d: Vector3<f64>) -> Option<f64> {
        if self.contains(p) {
            return Some(0.0);
        }
        let z_cal = -self.drop;
        let mut best: Option<f64> = None;
        let mut consider = |t: f64, lo: f64, hi: f64| {
            if t >= 0.0 {
                let z = p.z + t * d.z;
                if z >= lo - 1e-12 && z <= hi + 1e-12 && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        };
        // Cone: x² + y² = ((z - z_apex) / slope)².
        let k = 1.0 / (self.slope * self.slope);
        let w = p.z - self.z_apex;
        let qa = d.x * d.x + d.y * d.y - k * d.z * d.z;
        let qb = 2.0 * (p.x * d.x + p.y * d.y - k * w * d.z);
        let qc = p.x * p.x + p.y * p.y - k * w * w;
        for t in solve_quadratic(qa, qb, qc) {
            consider(t, self.z_apex, z_cal);
        }
        // Spheroid: (x² + y²) / a² + z² / b² = 1.
        let (ia, ib) = (1.0 / (self.a * self.a), 1.0 / (self.b * self.b));
        let qa = (d.x * d.x + d.y * d.y) * ia + d.z * d.z * ib;
        let qb = 2.0 * ((p.x * d.x + p.y * d.y) * ia + p.z * d.z * ib);
        let qc = (p.x * p.x + p.y * p.y) * ia + p.z * p.z * ib - 1.0;
        for t in solve_quadratic(qa, qb, qc) {
            consider(t, z_cal, self.b);
        }
        best
    }
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    // Numerically stable pair.
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// A berry placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerrySolid {
    pub profile: BerryProfile,
    pub center: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

impl BerrySolid {
    pub fn new(berry: &BerryInstance, shape: &ShapeModel) -> Self {
        let az = berry.incline_azimuth.to_radians();
        let axis = Unit::new_normalize(Vector3::new(-az.sin(), az.cos(), 0.0));
        BerrySolid {
            profile: BerryProfile::new(berry.d_max, shape),
            center: Vector3::from(berry.center),
            rotation: Rotation3::from_axis_angle(&axis, berry.incline.to_radians()),
        }
    }

    /// Unit vector along the berry axis, towards the stem.
    pub fn axis(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }

    pub fn to_world(&self, local: Vector3<f64>) -> Vector3<f64> {
        self.center + self.rotation * local
    }

    /// Where the stem leaves the berry.
    pub fn top(&self) -> Vector3<f64> {
        self.to_world(Vector3::new(0.0, 0.0, self.profile.b))
    }

    pub fn apex(&self) -> Vector3<f64> {
        self.to_world(Vector3::new(0.0, 0.0, self.profile.z_apex))
    }

    /// Highest world height reached by the body (cap of the spheroid).
    pub fn highest_z(&self) -> f64 {
        let w = self.rotation.inverse() * Vector3::z();
        let (a2, b2) = (self.profile.a.powi(2), self.profile.b.powi(2));
        let h = (a2 * (w.x * w.x + w.y * w.y) + b2 * w.z * w.z).sqrt();
        let support_local_z = b2 * w.z / h;
        if support_local_z >= -self.profile.drop {
            self.center.z + h
        } else {
            // Steep tilts expose the underpart rim instead.
            self.sample_surface(64, 64).iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max)
        }
    }

    pub fn contains(&self, p: Vector3<f64>) -> bool {
        self.profile.contains(self.rotation.inverse() * (p - self.center))
    }

    /// First intersection of the world line `origin + t dir`, `t >= 0`.
    pub fn first_hit(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<f64> {
        let inv = self.rotation.inverse();
        self.profile.first_hit(inv * (origin - self.center), inv * dir)
    }

    /// Diameter of the section perpendicular to the axis through the axis
    /// point at world height `z`; equals the horizontal section for an
    /// upright berry.
    pub fn axial_section_diameter(&self, z: f64) -> Option<f64> {
        let u = self.axis();
        let local_z = (z - self.center.z) / u.z;
        self.profile.radius_at(local_z).map(|r| 2.0 * r)
    }

    /// Points on the body surface on a regular `(height, azimuth)` grid.
    pub fn sample_surface(&self, n_z: usize, n_az: usize) -> Vec<Vector3<f64>> {
        let p = &self.profile;
        let mut pts = Vec::with_capacity(n_z * n_az);
        for i in 0..n_z {
            let z = p.z_apex + (p.b - p.z_apex) * i as f64 / (n_z - 1) as f64;
            let r = p.radius_at(z).unwrap_or(0.0);
            for j in 0..n_az {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n_az as f64;
                pts.push(self.to_world(Vector3::new(r * phi.cos(), r * phi.sin(), z)));
            }
        }
        pts
    }
}
