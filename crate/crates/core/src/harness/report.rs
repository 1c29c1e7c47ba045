use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::control::CenteringSample;
use crate::sim::{CutOutcome, PickState, PickTrace};

/// Mean and population standard deviation (divides by n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Stats { n, mean: f64::NAN, std: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Stats { n, mean, std: var.sqrt() }
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryOutcome {
    pub berry_id: u32,
    /// `stored` or `failed`.
    pub terminal: String,
    pub reason: Option<String>,
    pub cut: Option<CutOutcome>,
    pub stem_length: Option<f64>,
    pub d_max: f64,
    pub d_sec: Option<f64>,
    pub d_sec_error: Option<f64>,
    pub settle_time_ms: Option<u64>,
    pub contacts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub state: PickState,
    pub n: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub success: f64,
    pub miss: f64,
    pub body_cut: f64,
    /// Failures before the cut (unreachable, lost target, timeouts).
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub targets: usize,
    pub stored: usize,
    pub failed: usize,
    pub rates: Rates,
    pub berries: Vec<BerryOutcome>,
    pub phases: Vec<PhaseStats>,
    pub stem_length: Stats,
    pub diameter_error: Stats,
    pub continuous_per_berry_s: Option<f64>,
    pub full_cycle_per_berry_s: Option<f64>,
    pub contact_checks: u64,
    pub contacts: u64,
    pub std_convention: String,
}

impl RunReport {
    pub fn from_trace(scenario: &str, seed: u64, trace: &PickTrace) -> Self {
        let berries: Vec<BerryOutcome> = trace
            .berries
            .iter()
            .map(|r| BerryOutcome {
                berry_id: r.berry_id,
                terminal: if r.stored { "stored" } else { "failed" }.into(),
                reason: r.reason.map(|x| x.name().to_string()),
                cut: r.cut.map(|c| c.outcome),
                stem_length: r.cut.filter(|_| r.stored).map(|c| c.stem_length),
                d_max: r.d_max,
                d_sec: r.d_sec,
                d_sec_error: r.d_sec.zip(r.d_sec_true).map(|(e, t)| e - t),
                settle_time_ms: r.settle_time_ms,
                contacts: r.contacts,
            })
            .collect();
        let n = berries.len();
        let count = |f: &dyn Fn(&BerryOutcome) -> bool| berries.iter().filter(|b| f(b)).count();
        let stored = count(&|b| b.terminal == "stored");
        let miss = count(&|b| b.cut == Some(CutOutcome::Miss));
        let body_cut = count(&|b| b.cut == Some(CutOutcome::BodyCut));
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };

        let durations = trace.phase_durations();
        let mut states: Vec<PickState> = durations.iter().map(|d| d.state).collect();
        states.sort();
        states.dedup();
        let phases = states
            .into_iter()
            .map(|s| {
                let xs: Vec<f64> = durations.iter().filter(|d| d.state == s).map(|d| d.ms as f64).collect();
                let st = Stats::of(&xs);
                PhaseStats { state: s, n: st.n, mean_ms: st.mean, std_ms: st.std }
            })
            .collect();
        let stems: Vec<f64> = berries.iter().filter_map(|b| b.stem_length).collect();
        let d_err: Vec<f64> = berries.iter().filter_map(|b| b.d_sec_error).collect();
        RunReport {
            scenario: scenario.to_string(),
            seed,
            targets: n,
            stored,
            failed: n - stored,
            rates: Rates {
                success: rate(stored),
                miss: rate(miss),
                body_cut: rate(body_cut),
                other: rate(n - stored - miss - body_cut),
            },
            berries,
            phases,
            stem_length: Stats::of(&stems),
            diameter_error: Stats::of(&d_err),
            continuous_per_berry_s: trace.continuous_per_berry_ms().map(|m| m / 1000.0),
            full_cycle_per_berry_s: trace.full_cycle_per_berry_ms().map(|m| m / 1000.0),
            contact_checks: trace.berries.iter().map(|r| r.contact_checks as u64).sum(),
            contacts: trace.berries.iter().map(|r| r.contacts as u64).sum(),
            std_convention: "population".into(),
        }
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "berry_id,terminal,reason,cut,stem_length_mm,d_max_mm,d_sec_mm,d_sec_error_mm,settle_time_ms")?;
        for b in &self.berries {
            let cut = b.cut.map(|c| match c {
                CutOutcome::Success => "success",
                CutOutcome::Miss => "miss",
                CutOutcome::BodyCut => "body_cut",
            });
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                b.berry_id,
                b.terminal,
                b.reason.as_deref().unwrap_or(""),
                cut.unwrap_or(""),
                fmt_opt(b.stem_length),
                fmt_f(b.d_max),
                fmt_opt(b.d_sec),
                fmt_opt(b.d_sec_error),
                b.settle_time_ms.map(|t| t.to_string()).unwrap_or_default(),
            )?;
        }
        Ok(())
    }
}

pub fn write_centering_csv<W: Write>(samples: &[CenteringSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t_ms,error_x,error_y,cmd_x,cmd_y")?;
    for s in samples {
        writeln!(w, "{},{},{},{},{}", s.t_ms, fmt_f(s.error_x), fmt_f(s.error_y), fmt_f(s.cmd_x), fmt_f(s.cmd_y))?;
    }
    Ok(())
}
