use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::experiments::{
    isolated_spec, kinematics_csv, measure_csv, measure_test, noiseless, stem_csv, stem_test, sweep_csv, sweep_cut,
};
use super::report::{write_centering_csv, RunReport};
use super::scenario::{base_config, load_scenario, Scenario};
use super::{HarnessError, EXIT_OK, EXIT_USAGE};
use crate::perception::{fit_calibration, read_calibration_csv};
use crate::sim::{run_pick_cycle, SimConfig};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "BERRYGRIP_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "berrygrip", version, about = "Strawberry gripper kinematics, perception and picking simulator")]
pub struct Cli {
    /// Base configuration (JSON). Missing fields keep their defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Without it results go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the picking cycle over a scenario and write trace and report.
    Simulate,
    /// Success rate against the commanded cutting position.
    SweepCut {
        /// Offsets from the gripper origin, mm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_values_t = [-8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0])]
        offsets: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        noiseless: bool,
    },
    /// Achieved stem length over random berries.
    StemTest {
        #[arg(long, default_value_t = 10.0)]
        l_stem: f64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Largest berry incline, degrees.
        #[arg(long, default_value_t = 20.0)]
        incline_max: f64,
        #[arg(long)]
        noiseless: bool,
    },
    /// Shoulder-diameter error while berries pass through the sensor plane.
    MeasureTest {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Sensor distance noise, mm.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        noiseless: bool,
    },
    /// Servo angle, finger angle, opening and cutter angle over the servo range.
    KinematicsTable {
        #[arg(long, default_value_t = 0.5)]
        step_deg: f64,
    },
    /// Fit the IR calibration curve to `analog,distance_mm` samples.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the effective configuration.
    Config {
        #[arg(long)]
        dump: bool,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), HarnessError> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| HarnessError::io(p, e))
}

fn prepare(out: &Option<PathBuf>) -> Result<(), HarnessError> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(())
}

/// Writes `contents` to `out/name`, or to `w` when no output directory is set.
fn emit<W: Write>(out: &Option<PathBuf>, name: &str, contents: &str, w: &mut W) -> Result<(), HarnessError> {
    match out {
        Some(dir) => {
            prepare(out)?;
            write_file(dir, name, contents.as_bytes())
        }
        None => w.write_all(contents.as_bytes()).map_err(|e| HarnessError::io("<stdout>", e)),
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn scenario_and_config(cli: &Cli) -> Result<(Option<Scenario>, SimConfig), HarnessError> {
    let base = base_config(cli.config.as_ref())?;
    match &cli.scenario {
        Some(p) => {
            let s = load_scenario(p)?;
            let cfg = s.config(&base, p)?;
            Ok((Some(s), cfg))
        }
        None => Ok((None, base)),
    }
}

pub fn run<W: Write>(cli: &Cli, w: &mut W) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Simulate => simulate(cli, w),
        Command::SweepCut { offsets, trials, noiseless: quiet } => {
            let (scenario, mut cfg) = scenario_and_config(cli)?;
            if *quiet {
                cfg = noiseless(&cfg);
            }
            let spec = scenario.and_then(|s| s.generate).unwrap_or_else(|| isolated_spec(0.0));
            let rows = sweep_cut(&cfg, &spec, offsets, *trials, cli.seed.unwrap_or(1))?;
            emit(&cli.out, "sweep_cut.csv", &sweep_csv(&rows), w)
        }
        Command::StemTest { l_stem, n, incline_max, noiseless: quiet } => {
            let (_, mut cfg) = scenario_and_config(cli)?;
            if *quiet {
                cfg = noiseless(&cfg);
            }
            let rep = stem_test(&cfg, *l_stem, *n, *incline_max, cli.seed.unwrap_or(1))?;
            if cli.out.is_some() {
                emit(&cli.out, "stem_test.csv", &stem_csv(&rep), w)?;
            }
            let mut summary = rep.clone();
            summary.trials.clear();
            emit(&cli.out, "stem_test.json", &pretty(&summary), w)
        }
        Command::MeasureTest { n, sigma, noiseless: quiet } => {
            let (_, mut cfg) = scenario_and_config(cli)?;
            if *quiet {
                cfg = noiseless(&cfg);
            }
            if let Some(s) = sigma {
                if !(*s >= 0.0) {
                    return Err(HarnessError::Usage("sigma must be non-negative".into()));
                }
                cfg.noise.sensor_sigma = *s;
            }
            let rep = measure_test(&cfg, *n, cli.seed.unwrap_or(1))?;
            if cli.out.is_some() {
                emit(&cli.out, "measure_test.csv", &measure_csv(&rep), w)?;
            }
            emit(&cli.out, "measure_test.json", &pretty(&rep), w)
        }
        Command::KinematicsTable { step_deg } => {
            let (_, cfg) = scenario_and_config(cli)?;
            emit(&cli.out, "kinematics_table.csv", &kinematics_csv(&cfg.geometry, *step_deg)?, w)
        }
        Command::Calibrate { input } => {
            let f = fs::File::open(input)
                .map_err(|e| HarnessError::Parse { path: input.clone(), message: format!("cannot read: {e}") })?;
            let samples = read_calibration_csv(f)
                .map_err(|e| HarnessError::Parse { path: input.clone(), message: e.to_string() })?;
            let fit = fit_calibration(&samples)
                .map_err(|e| HarnessError::Parse { path: input.clone(), message: e.to_string() })?;
            emit(&cli.out, "calibration.json", &pretty(&fit), w)
        }
        Command::Config { dump } => {
            if !dump {
                return Err(HarnessError::Usage("config needs --dump".into()));
            }
            let (_, cfg) = scenario_and_config(cli)?;
            emit(&cli.out, "config.json", &pretty(&cfg), w)
        }
    }
}

fn simulate<W: Write>(cli: &Cli, w: &mut W) -> Result<(), HarnessError> {
    let Some(path) = &cli.scenario else {
        return Err(HarnessError::Usage("simulate needs --scenario".into()));
    };
    let (scenario, cfg) = scenario_and_config(cli)?;
    let scenario = scenario.expect("scenario loaded");
    let seed = cli.seed.unwrap_or(scenario.seed);
    let scene = scenario.scene(seed)?;
    let trace = run_pick_cycle(&scene, &cfg)?;
    let name = if scenario.name.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        scenario.name.clone()
    };
    let report = RunReport::from_trace(&name, seed, &trace);
    let Some(dir) = &cli.out else {
        return w.write_all(pretty(&report).as_bytes()).map_err(|e| HarnessError::io("<stdout>", e));
    };
    prepare(&cli.out)?;
    let mut jsonl = Vec::new();
    trace.write_jsonl(&mut jsonl).expect("in-memory write");
    write_file(dir, "trace.jsonl", &jsonl)?;
    let mut csv = Vec::new();
    report.write_summary_csv(&mut csv).expect("in-memory write");
    write_file(dir, "summary.csv", &csv)?;
    write_file(dir, "report.json", pretty(&report).as_bytes())?;
    for r in &trace.berries {
        if !r.centering.is_empty() {
            let mut c = Vec::new();
            write_centering_csv(&r.centering, &mut c).expect("in-memory write");
            write_file(dir, &format!("centering_{}.csv", r.berry_id), &c)?;
        }
    }
    writeln!(w, "{name}: stored {}/{} berries, success rate {:.4}", report.stored, report.targets, report.rates.success)
        .map_err(|e| HarnessError::io("<stdout>", e))
}
