//! Monte-Carlo experiments behind the CLI subcommands.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{fmt_f, Stats};
use super::HarnessError;
use crate::control::section_height;
use crate::kinematics::{finger_angle, sample_range, servo_for_opening, GripperGeometry, MAX_OPENING_MM};
use crate::perception::FRAME_PERIOD_MS;
use crate::sim::cycle::{plausible_estimate, scan_start};
use crate::sim::sensor::{sense, AmbientProfile, SensorContext};
use crate::sim::{
    generate_scene, run_pick_cycle, BerryInstance, BerrySolid, CutOutcome, FailReason, NoiseModel, PlantState, Scene,
    SceneSpec, SimConfig,
};

/// Independent per-trial seeds derived from one run seed. The same trial
/// index gets the same scene under every setting (common random numbers).
pub fn trial_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..n).map(|_| rng.gen()).collect()
}

/// One upright (or randomly inclined) berry in the default region.
pub fn isolated_spec(incline_max: f64) -> SceneSpec {
    SceneSpec { n_berries: 1, incline_max, ..SceneSpec::default() }
}

fn single_pick(
    config: &SimConfig,
    spec: &SceneSpec,
    seed: u64,
) -> Result<(Scene, crate::sim::PickTrace), HarnessError> {
    let scene = generate_scene(spec, seed)?;
    let trace = run_pick_cycle(&scene, config)?;
    Ok((scene, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub offset_mm: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
}

/// Success rate of isolated picks when the centering target is moved
/// `offset` mm from the gripper origin along x.
pub fn sweep_cut(
    config: &SimConfig,
    spec: &SceneSpec,
    offsets: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Usage("trials must be at least 1".into()));
    }
    let seeds = trial_seeds(seed, trials);
    let run_offset = |offset: f64| -> Result<SweepRow, HarnessError> {
        let mut cfg = config.clone();
        cfg.target.target_x = -offset;
        let mut successes = 0;
        for &s in &seeds {
            let (_, trace) = single_pick(&cfg, spec, s)?;
            successes += trace.berries.iter().filter(|b| b.stored).count();
        }
        Ok(SweepRow { offset_mm: offset, trials, successes, success_rate: successes as f64 / trials as f64 })
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = offsets.iter().map(|&o| scope.spawn(move || run_offset(o))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("offset_mm,trials,successes,success_rate\n");
    for r in rows {
        out += &format!("{},{},{},{}\n", fmt_f(r.offset_mm), r.trials, r.successes, fmt_f(r.success_rate));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StemTrial {
    pub trial: usize,
    pub d_max: f64,
    pub incline: f64,
    pub stored: bool,
    pub reason: Option<FailReason>,
    pub cut: Option<CutOutcome>,
    pub stem_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemReport {
    pub l_stem: f64,
    pub berries: usize,
    pub stored: usize,
    /// Over stored berries.
    pub stem_length: Stats,
    pub trials: Vec<StemTrial>,
    pub std_convention: String,
}

pub fn stem_test(
    config: &SimConfig,
    l_stem: f64,
    n: usize,
    incline_max: f64,
    seed: u64,
) -> Result<StemReport, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Usage("n must be at least 1".into()));
    }
    let mut cfg = config.clone();
    cfg.target.l_stem = l_stem;
    let spec = isolated_spec(incline_max);
    let mut trials = Vec::with_capacity(n);
    for (i, s) in trial_seeds(seed, n).into_iter().enumerate() {
        let (scene, trace) = single_pick(&cfg, &spec, s)?;
        let r = &trace.berries[0];
        trials.push(StemTrial {
            trial: i,
            d_max: scene.berries[0].d_max,
            incline: scene.berries[0].incline,
            stored: r.stored,
            reason: r.reason,
            cut: r.cut.map(|c| c.outcome),
            stem_length: r.cut.filter(|_| r.stored).map(|c| c.stem_length),
        });
    }
    let lengths: Vec<f64> = trials.iter().filter_map(|t| t.stem_length).collect();
    Ok(StemReport {
        l_stem,
        berries: n,
        stored: lengths.len(),
        stem_length: Stats::of(&lengths),
        trials,
        std_convention: "population".into(),
    })
}

pub fn stem_csv(rep: &StemReport) -> String {
    let mut out = String::from("trial,d_max_mm,incline_deg,terminal,reason,stem_length_mm\n");
    for t in &rep.trials {
        out += &format!(
            "{},{},{},{},{},{}\n",
            t.trial,
            fmt_f(t.d_max),
            fmt_f(t.incline),
            if t.stored { "stored" } else { "failed" },
            t.reason.map(|r| r.name()).unwrap_or(""),
            t.stem_length.map(fmt_f).unwrap_or_default()
        );
    }
    out
}

/// Vertical scan speed of the measurement rig, mm/s.
pub const MEASURE_SPEED: f64 = 10.0;
/// Sections at least this fraction of the widest seen enter the shoulder fit.
pub const SHOULDER_BAND: f64 = 0.95;

/// Moves the fully open gripper up past a berry and estimates its shoulder
/// diameter from the sections seen. `D²` of a section is quadratic in its
/// height near the shoulder, so the widest sections are fitted with a
/// parabola and its peak is reported.
pub fn measure_trial<R: Rng + ?Sized>(
    config: &SimConfig,
    berry: &BerryInstance,
    ambient: &AmbientProfile,
    rng: &mut R,
) -> Option<f64> {
    let geom = &config.geometry;
    let solid = BerrySolid::new(berry, &config.shape);
    let mut plant = PlantState::at([0.0; 3], config.plant.arm_time_constant, config.plant.max_arm_speed);
    plant.servo_phi = servo_for_opening(geom, MAX_OPENING_MM).ok()?;
    let theta = finger_angle(geom, plant.servo_phi).ok()?;
    plant.arm_position = scan_start(config, berry.center, berry.d_max, theta);
    let ctx = SensorContext {
        geom,
        curve: &config.calibration,
        transform: &config.transform,
        ambient,
        sigma_mm: config.noise.sensor_sigma,
    };
    let height = solid.profile.z_top() - solid.profile.z_apex;
    let step = MEASURE_SPEED * FRAME_PERIOD_MS as f64 / 1000.0;
    let ticks = ((height + 2.0 * config.scan.clearance) / step).ceil() as usize;
    let mut samples = Vec::new();
    for _ in 0..ticks {
        plant.arm_position[2] += step;
        plant.clock_ms += FRAME_PERIOD_MS;
        let s = sense(&ctx, &plant, &[solid], rng);
        if let Some(est) = plausible_estimate(geom, &s.frame) {
            let z = plant.arm_position[2] + section_height(geom, theta, s.frame.mdp[0], config.section_height_form);
            samples.push((z, est.d_sec));
        }
    }
    shoulder_from_sections(&samples)
}

/// Peak, within the sampled heights, of a least-squares parabola through
/// `D²(z)` over the widest sections.
pub fn shoulder_from_sections(samples: &[(f64, f64)]) -> Option<f64> {
    let widest = samples.iter().map(|s| s.1).fold(f64::NAN, f64::max);
    if !widest.is_finite() {
        return None;
    }
    let band: Vec<(f64, f64)> = samples.iter().copied().filter(|s| s.1 >= SHOULDER_BAND * widest).collect();
    if band.len() < 3 {
        return Some(widest);
    }
    let z0 = band.iter().map(|s| s.0).sum::<f64>() / band.len() as f64;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(z, d) in &band {
        let row = Vector3::new(1.0, z - z0, (z - z0).powi(2));
        ata += row * row.transpose();
        atb += row * d * d;
    }
    let c = ata.lu().solve(&atb)?;
    // Highest point of the parabola over the sampled heights.
    let (lo, hi) =
        band.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.0 - z0), hi.max(s.0 - z0)));
    let eval = |z: f64| c[0] + c[1] * z + c[2] * z * z;
    let mut peak = eval(lo).max(eval(hi));
    if c[2] < 0.0 {
        let v = -c[1] / (2.0 * c[2]);
        if (lo..=hi).contains(&v) {
            peak = peak.max(eval(v));
        }
    }
    (peak > 0.0).then(|| peak.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub n: usize,
    pub sensor_sigma: f64,
    /// Trials in which no complete frame was seen.
    pub lost: usize,
    /// Estimated minus true shoulder diameter.
    pub error: Stats,
    pub abs_error: Stats,
    pub std_convention: String,
    #[serde(skip)]
    pub rows: Vec<(f64, Option<f64>)>,
}

pub fn measure_test(config: &SimConfig, n: usize, seed: u64) -> Result<MeasureReport, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Usage("n must be at least 1".into()));
    }
    let spec = isolated_spec(0.0);
    let mut rows = Vec::with_capacity(n);
    for s in trial_seeds(seed, n) {
        let scene = generate_scene(&spec, s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        rng.set_stream(1);
        let b = &scene.berries[0];
        rows.push((b.d_max, measure_trial(config, b, &scene.ambient_profile, &mut rng)));
    }
    let errs: Vec<f64> = rows.iter().filter_map(|(d, e)| e.map(|e| e - d)).collect();
    let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
    Ok(MeasureReport {
        n,
        sensor_sigma: config.noise.sensor_sigma,
        lost: n - errs.len(),
        error: Stats::of(&errs),
        abs_error: Stats::of(&abs),
        std_convention: "population".into(),
        rows,
    })
}

pub fn measure_csv(rep: &MeasureReport) -> String {
    let mut out = String::from("trial,d_max_mm,estimate_mm,error_mm\n");
    for (i, (d, e)) in rep.rows.iter().enumerate() {
        let est = e.map(fmt_f).unwrap_or_default();
        let err = e.map(|e| fmt_f(e - d)).unwrap_or_default();
        out += &format!("{i},{},{est},{err}\n", fmt_f(*d));
    }
    out
}

pub fn kinematics_csv(geom: &GripperGeometry, step_deg: f64) -> Result<String, HarnessError> {
    if !(step_deg > 0.0) {
        return Err(HarnessError::Usage(format!("step must be positive, got {step_deg}")));
    }
    let rows = sample_range(geom, step_deg.to_radians()).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let mut out = String::from("phi_deg,theta_deg,r_mm,beta_deg\n");
    for r in rows {
        out += &format!(
            "{},{},{},{}\n",
            fmt_f(r.phi.to_degrees()),
            fmt_f(r.theta.to_degrees()),
            fmt_f(r.r),
            fmt_f(r.beta.to_degrees())
        );
    }
    Ok(out)
}

/// Configuration with all noise sources switched off.
pub fn noiseless(config: &SimConfig) -> SimConfig {
    SimConfig { noise: NoiseModel::noiseless(), ..config.clone() }
}
