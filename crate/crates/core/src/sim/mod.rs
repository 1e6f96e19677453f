//! Deterministic tabletop simulator.
//!
//! The end-effector is a free-flying gripper confined to an axis-aligned
//! executable box. Objects are boxes; there are no dynamics. Execution
//! walks the composer steps of a [`Program`](crate::parse::Program) along
//! straight-line waypoints and stops at the first event that makes the
//! manipulation fail:
//!
//! * a planned waypoint outside the executable box ([`SimOutcome::InfeasibleHalt`]);
//! * a grasp whose approach direction misses the object's approach axis,
//!   or a sweep through a pose-sensitive or fragile object
//!   ([`SimOutcome::BadposeEvent`]).
//!
//! All randomness lives in [`SceneLibrary::spawn`], driven by the seed.

mod exec;
mod geometry;
mod goal;
mod scene;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{execute, BadposeKind, SimOutcome, SimResult, TraceFrame};
pub use geometry::{angle_between, orientation_for_approach, pose_at, tool_down, twist_degrees, Aabb, Pose, Vec3};
pub use goal::{goal_met, GoalSpec};
pub use scene::{
    AnchorState, ApproachSpec, Detection, Gripper, ObjectSpec, SceneLibrary, SceneObject, SceneSpec, WorldState,
    DEFAULT_SCENES,
};

/// Height of the hover point above an object's top face used by
/// "move to the top of" steps.
pub const TOP_CLEARANCE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("no scene registered for task `{0}`")]
    UnknownScene(String),
    #[error("scene fixture is malformed: {0}")]
    Scene(String),
    #[error("could not place objects without overlap after {0} attempts")]
    PlacementExhausted(u32),
    #[error("step {step_index} references `{name}`, which is not in the scene")]
    UnknownTarget { name: String, step_index: usize },
    #[error("invalid workspace: {0}")]
    Workspace(&'static str),
}

/// The reachable box and the (larger) perceived box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    pub executable: Aabb,
    pub perception: Aabb,
}

impl Default for WorkspaceBounds {
    fn default() -> Self {
        Self {
            executable: Aabb::new(Vec3::zeros(), Vec3::new(50.0, 50.0, 50.0)),
            perception: Aabb::new(Vec3::zeros(), Vec3::new(150.0, 150.0, 150.0)),
        }
    }
}

impl WorkspaceBounds {
    pub fn new(executable: Aabb, perception: Aabb) -> Result<Self, SimError> {
        let ws = Self { executable, perception };
        ws.validate()?;
        Ok(ws)
    }

    /// Centered at the robot base with the given half-extents.
    pub fn centered(exec_half: [f64; 3], perception_half: [f64; 3]) -> Result<Self, SimError> {
        Self::new(
            Aabb::new(Vec3::zeros(), Vec3::from(exec_half)),
            Aabb::new(Vec3::zeros(), Vec3::from(perception_half)),
        )
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.executable.half.iter().any(|h| !(*h > 0.0)) {
            return Err(SimError::Workspace("executable half-extents must be positive"));
        }
        if !self.perception.contains_box(&self.executable) {
            return Err(SimError::Workspace("perception box must contain the executable box"));
        }
        let strict = (0..3).any(|i| {
            self.perception.min()[i] < self.executable.min()[i] - 1e-9
                || self.perception.max()[i] > self.executable.max()[i] + 1e-9
        });
        if !strict {
            return Err(SimError::Workspace("perception box must be strictly larger on some axis"));
        }
        Ok(())
    }

    /// Full extents of the executable box, the tuple quoted in condition
    /// phrases.
    pub fn full_extents(&self) -> [f64; 3] {
        let h = self.executable.half;
        [2.0 * h.x, 2.0 * h.y, 2.0 * h.z]
    }

    /// `(100, 100, 100)` style rendering, unitless.
    pub fn render_extents(&self) -> String {
        let [x, y, z] = self.full_extents();
        format!("({}, {}, {})", fmt_num(x), fmt_num(y), fmt_num(z))
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Spawn-region settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpawnConfig {
    /// How far the spawn region extends past the executable box.
    pub margin: f64,
    /// Probability that one task-relevant object is placed out of reach.
    pub unreachable_fraction: f64,
    pub max_attempts: u32,
    /// Reachable objects keep their centers at least this far inside the
    /// executable boundary, so reachability depends on the center alone.
    pub clearance: f64,
    /// Minimum gap between object footprints.
    pub spacing: f64,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self { margin: 30.0, unreachable_fraction: 0.1, max_attempts: 1000, clearance: 25.0, spacing: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub workspace: WorkspaceBounds,
    pub spawn: SpawnConfig,
    /// Maximum distance between consecutive planned waypoints.
    pub waypoint_spacing: f64,
    /// Distance of the pre-grasp point from the object center.
    pub standoff: f64,
    /// Step length above which sweeping through a fragile object damages it.
    pub damage_step: f64,
    pub home: [f64; 3],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workspace: WorkspaceBounds::default(),
            spawn: SpawnConfig::default(),
            waypoint_spacing: 5.0,
            standoff: 15.0,
            damage_step: 30.0,
            home: [0.0, 0.0, 40.0],
        }
    }
}

impl SimConfig {
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.spawn.margin = margin;
        self
    }

    pub fn with_unreachable_fraction(mut self, fraction: f64) -> Self {
        self.spawn.unreachable_fraction = fraction;
        self
    }

    pub fn home(&self) -> Vec3 {
        Vec3::from(self.home)
    }
}
