use serde::{Deserialize, Serialize};

use super::geometry::{twist_degrees, Vec3};
use super::scene::WorldState;
use super::TOP_CLEARANCE;

/// Task success predicates, evaluated on a final world state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalSpec {
    /// `object` is held and has risen at least `min_rise` above its spawn height.
    HeldLifted { object: String, min_rise: f64 },
    /// The end-effector hovers over `object`'s top within `tolerance`.
    EeAt { object: String, tolerance: f64 },
    /// `object` turned by `degrees` about the world `axis`.
    Rotated { object: String, axis: [f64; 3], degrees: f64, tolerance_deg: f64, gripper_open: bool },
    /// `object`'s center lies in `zone`'s box (its footprint when `planar`).
    Inside { object: String, zone: String, planar: bool, gripper_open: bool },
    /// `object` is freed from its anchor and lifted by `min_rise`.
    Removed { object: String, min_rise: f64 },
}

impl GoalSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            GoalSpec::HeldLifted { .. } => "held_lifted",
            GoalSpec::EeAt { .. } => "ee_at",
            GoalSpec::Rotated { .. } => "rotated",
            GoalSpec::Inside { .. } => "inside",
            GoalSpec::Removed { .. } => "removed",
        }
    }

    pub fn objects(&self) -> Vec<&str> {
        match self {
            GoalSpec::Inside { object, zone, .. } => vec![object, zone],
            GoalSpec::HeldLifted { object, .. }
            | GoalSpec::EeAt { object, .. }
            | GoalSpec::Rotated { object, .. }
            | GoalSpec::Removed { object, .. } => vec![object],
        }
    }
}

/// Hover point used by "move to the top of" steps.
pub(crate) fn top_point(center: &Vec3, half_z: f64) -> Vec3 {
    center + Vec3::new(0.0, 0.0, half_z + TOP_CLEARANCE)
}

pub fn goal_met(goal: &GoalSpec, world: &WorldState) -> bool {
    match goal {
        GoalSpec::HeldLifted { object, min_rise } => {
            let Some(o) = world.object(object) else { return false };
            world.gripper.held() == Some(object.as_str())
                && o.center().z - o.initial_pose.translation.vector.z >= *min_rise
        }
        GoalSpec::EeAt { object, tolerance } => {
            let Some(o) = world.object(object) else { return false };
            let b = o.bounds();
            (world.ee_position() - top_point(&b.center, b.half.z)).norm() <= *tolerance
        }
        GoalSpec::Rotated { object, axis, degrees, tolerance_deg, gripper_open } => {
            let Some(o) = world.object(object) else { return false };
            let delta = o.pose.rotation * o.initial_pose.rotation.inverse();
            let turned = twist_degrees(&delta, &Vec3::from(*axis));
            (turned - degrees).abs() <= *tolerance_deg && (!gripper_open || world.gripper.is_open())
        }
        GoalSpec::Inside { object, zone, planar, gripper_open } => {
            let (Some(o), Some(z)) = (world.object(object), world.object(zone)) else { return false };
            let zb = z.bounds();
            let c = o.center();
            let inside = if *planar { zb.contains_xy(&c) } else { zb.contains(&c) };
            inside && (!gripper_open || world.gripper.is_open())
        }
        GoalSpec::Removed { object, min_rise } => {
            let Some(o) = world.object(object) else { return false };
            let freed = o.anchor.is_none_or(|a| a.released);
            freed && o.center().z - o.initial_pose.translation.vector.z >= *min_rise
        }
    }
}
