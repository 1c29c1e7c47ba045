use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::berry::{BerryInstance, Point3};
use super::sensor::AmbientProfile;
use super::SimError;

/// Smallest centre separation in generated scenes, mm.
pub const MIN_SEPARATION_MM: f64 = 5.0;
/// Largest shoulder-to-shoulder gap between cluster neighbours, mm.
pub const CLUSTER_GAP_MM: f64 = 30.0;
const MAX_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub n_berries: usize,
    /// Box holding the shoulder centres, world frame.
    pub region_min: Point3,
    pub region_max: Point3,
    pub d_max_range: [f64; 2],
    pub stem_diameter_range: [f64; 2],
    pub stem_length_range: [f64; 2],
    /// Inclines are drawn uniformly from `[0, incline_max]` degrees.
    pub incline_max: f64,
    pub ripe_fraction: f64,
    /// Place every berry within `CLUSTER_GAP_MM` of a previous one.
    pub cluster: bool,
    pub ambient: AmbientProfile,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            n_berries: 1,
            region_min: [-100.0, -100.0, 250.0],
            region_max: [100.0, 100.0, 300.0],
            d_max_range: [25.0, 35.0],
            stem_diameter_range: [1.7, 2.5],
            stem_length_range: [40.0, 60.0],
            incline_max: 0.0,
            ripe_fraction: 1.0,
            cluster: false,
            ambient: AmbientProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub berries: Vec<BerryInstance>,
    #[serde(default)]
    pub ambient_profile: AmbientProfile,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        for (name, r) in [
            ("d_max_range", self.d_max_range),
            ("stem_diameter_range", self.stem_diameter_range),
            ("stem_length_range", self.stem_length_range),
        ] {
            if !ordered(r) || r[0] <= 0.0 {
                return Err(SimError::Config(format!("{name} must be positive and ordered")));
            }
        }
        if (0..3).any(|k| !(self.region_min[k] <= self.region_max[k])) {
            return Err(SimError::Config("region_min must not exceed region_max".into()));
        }
        if !(0.0..=90.0).contains(&self.incline_max) || !(0.0..=1.0).contains(&self.ripe_fraction) {
            return Err(SimError::Config("incline_max or ripe_fraction out of range".into()));
        }
        Ok(())
    }

    /// Rejects specs whose berries cannot be packed into the region.
    fn check_volume(&self) -> Result<(), SimError> {
        let r = (self.d_max_range[0] / 2.0).max(MIN_SEPARATION_MM / 2.0);
        let ball = 4.0 / 3.0 * PI * r.powi(3);
        let room: f64 = (0..3).map(|k| self.region_max[k] - self.region_min[k] + 2.0 * r).product();
        // Random close packing of equal spheres fills about 64% of space.
        if self.n_berries as f64 * ball > 0.64 * room {
            return Err(SimError::Infeasible(format!(
                "{} berries of diameter {} do not fit in the region",
                self.n_berries,
                2.0 * r
            )));
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

fn in_region(spec: &SceneSpec, p: Point3) -> bool {
    (0..3).all(|k| (spec.region_min[k]..=spec.region_max[k]).contains(&p[k]))
}

fn separation(a: f64, b: f64) -> f64 {
    MIN_SEPARATION_MM.max((a + b) / 2.0)
}

fn dist(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Draws a reproducible scene. Generation uses stream 0 of the seed; the
/// simulator draws its runtime noise from stream 1.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene, SimError> {
    spec.validate()?;
    spec.check_volume()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut berries: Vec<BerryInstance> = Vec::with_capacity(spec.n_berries);
    for id in 0..spec.n_berries {
        let d_max = uniform(&mut rng, spec.d_max_range);
        let mut placed = None;
        for _ in 0..MAX_TRIES {
            let p = if spec.cluster && !berries.is_empty() {
                let j = rng.gen_range(0..berries.len());
                let nb = &berries[j];
                let lo = separation(d_max, nb.d_max);
                let hi = (d_max + nb.d_max) / 2.0 + CLUSTER_GAP_MM;
                let r = rng.gen_range(lo..hi.max(lo + 1e-9));
                let az = rng.gen_range(0.0..2.0 * PI);
                let dz = rng.gen_range(-0.3..0.3) * r;
                let rh = (r * r - dz * dz).sqrt();
                [nb.center[0] + rh * az.cos(), nb.center[1] + rh * az.sin(), nb.center[2] + dz]
            } else {
                [0, 1, 2].map(|k| uniform(&mut rng, [spec.region_min[k], spec.region_max[k]]))
            };
            if in_region(spec, p) && berries.iter().all(|b| dist(b.center, p) >= separation(b.d_max, d_max)) {
                placed = Some(p);
                break;
            }
        }
        let Some(center) = placed else {
            return Err(SimError::Infeasible(format!("could not place berry {id} after {MAX_TRIES} tries")));
        };
        berries.push(BerryInstance {
            id: id as u32,
            center,
            d_max,
            stem_diameter: uniform(&mut rng, spec.stem_diameter_range),
            stem_length_available: uniform(&mut rng, spec.stem_length_range),
            incline: uniform(&mut rng, [0.0, spec.incline_max]),
            incline_azimuth: rng.gen_range(0.0..360.0),
            ripe: rng.gen_bool(spec.ripe_fraction),
        });
    }
    Ok(Scene { berries, ambient_profile: spec.ambient, rng_seed: seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec { n_berries: 8, incline_max: 20.0, ..SceneSpec::default() };
        assert_eq!(generate_scene(&spec, 7).unwrap(), generate_scene(&spec, 7).unwrap());
        assert_ne!(generate_scene(&spec, 7).unwrap(), generate_scene(&spec, 8).unwrap());
    }

    #[test]
    fn overfull_cube_is_infeasible() {
        let spec = SceneSpec {
            n_berries: 1000,
            region_min: [0.0; 3],
            region_max: [50.0; 3],
            d_max_range: [15.0, 45.0],
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec, 1), Err(SimError::Infeasible(_))));
    }

    #[test]
    fn ranges_and_separation_hold() {
        let spec = SceneSpec { n_berries: 20, d_max_range: [25.0, 35.0], ..SceneSpec::default() };
        let s = generate_scene(&spec, 3).unwrap();
        for (i, a) in s.berries.iter().enumerate() {
            assert!((25.0..=35.0).contains(&a.d_max));
            assert!((1.7..=2.5).contains(&a.stem_diameter));
            for b in &s.berries[i + 1..] {
                assert!(dist(a.center, b.center) >= MIN_SEPARATION_MM);
            }
        }
    }

    #[test]
    fn cluster_keeps_berries_close() {
        let spec = SceneSpec { n_berries: 6, cluster: true, ..SceneSpec::default() };
        let s = generate_scene(&spec, 11).unwrap();
        for (i, a) in s.berries.iter().enumerate().skip(1) {
            let nearest_gap = s.berries[..i]
                .iter()
                .map(|b| dist(a.center, b.center) - (a.d_max + b.d_max) / 2.0)
                .fold(f64::INFINITY, f64::min);
            assert!(nearest_gap <= CLUSTER_GAP_MM);
        }
    }
}
