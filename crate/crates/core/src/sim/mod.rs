//! Deterministic synthetic plant and the picking state machine.

pub mod berry;
pub mod container;
pub mod cycle;
pub mod plant;
pub mod scene;
pub mod sensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use berry::{BerryInstance, BerrySolid, Point3};
pub use container::{Container, DispenseRecord, StoredBerry};
pub use cycle::{
    classify_cut, cut_attempt, run_pick_cycle, BerryRecord, CutOutcome, CutResult, FailReason, NoiseModel, PickEvent,
    PickTrace, SimConfig,
};
pub use plant::{step_plant, PlantState};
pub use scene::{generate_scene, Scene, SceneSpec};
pub use sensor::{sense, AmbientProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sequencing error: {0}")]
    Sequencing(String),
    #[error("scene generation failed: {0}")]
    Infeasible(String),
    #[error("scene has no ripe berry to pick")]
    NoTarget,
}

/// States of the picking cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickState {
    Detect,
    Approach,
    Open,
    LiftScan,
    Center,
    ZAdjust,
    Cut,
    Store,
    Failed,
    Dispense,
    TrapdoorOpen,
    TrapdoorClose,
    Done,
}

impl PickState {
    pub fn name(self) -> &'static str {
        match self {
            PickState::Detect => "detect",
            PickState::Approach => "approach",
            PickState::Open => "open",
            PickState::LiftScan => "lift_scan",
            PickState::Center => "center",
            PickState::ZAdjust => "z_adjust",
            PickState::Cut => "cut",
            PickState::Store => "store",
            PickState::Failed => "failed",
            PickState::Dispense => "dispense",
            PickState::TrapdoorOpen => "trapdoor_open",
            PickState::TrapdoorClose => "trapdoor_close",
            PickState::Done => "done",
        }
    }
}
