use nalgebra::{Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::geometry::{angle_between, orientation_for_approach, renormalized, tool_down, Pose, Vec3};
use super::goal::{goal_met, top_point};
use super::scene::{Gripper, WorldState};
use super::{SimConfig, SimError};
use crate::parse::{Approach, ComposerStep, MoveOffset, Program, RotationAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadposeKind {
    Misaligned,
    Displaced,
    Damaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum SimOutcome {
    Completed { goal_met: bool },
    /// The first planned waypoint outside the executable box. The
    /// end-effector stays at the waypoint before it.
    InfeasibleHalt { waypoint: [f64; 3], step_index: usize },
    BadposeEvent { object: String, kind: BadposeKind, step_index: usize },
}

/// End-effector state after a waypoint or gripper action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub step_index: usize,
    pub ee: Pose,
    pub gripper_open: bool,
    pub held: Option<String>,
    pub held_pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub outcome: SimOutcome,
    pub final_state: WorldState,
    pub trace: Vec<TraceFrame>,
}

impl SimResult {
    pub fn completed(&self) -> bool {
        matches!(self.outcome, SimOutcome::Completed { .. })
    }
}

/// Runs `prog` against `world`. Pure: the result depends only on the
/// arguments.
pub fn execute(prog: &Program, world: &WorldState, cfg: &SimConfig) -> Result<SimResult, SimError> {
    for (i, step) in prog.steps.iter().enumerate() {
        if let Some(t) = step.target() {
            if !world.objects.contains_key(t) {
                return Err(SimError::UnknownTarget { name: t.to_string(), step_index: i });
            }
        }
    }
    let mut run = Runner::new(world.clone(), cfg);
    for (i, step) in prog.steps.iter().enumerate() {
        run.step = i;
        if let Err(outcome) = run.apply(step) {
            return Ok(SimResult { outcome, final_state: run.world, trace: run.trace });
        }
    }
    let met = goal_met(&run.world.goal, &run.world);
    Ok(SimResult { outcome: SimOutcome::Completed { goal_met: met }, final_state: run.world, trace: run.trace })
}

fn approach_dir(a: Option<Approach>) -> Vec3 {
    match a {
        None | Some(Approach::Above) => tool_down(),
        Some(Approach::Side) => Vec3::new(0.0, 1.0, 0.0),
        Some(Approach::Front) => Vec3::new(1.0, 0.0, 0.0),
    }
}

struct Runner<'a> {
    world: WorldState,
    cfg: &'a SimConfig,
    trace: Vec<TraceFrame>,
    step: usize,
    /// Held object's pose in the end-effector frame.
    held_rel: Option<Pose>,
}

type StepResult = Result<(), SimOutcome>;

impl<'a> Runner<'a> {
    fn new(world: WorldState, cfg: &'a SimConfig) -> Self {
        let held_rel = world
            .gripper
            .held()
            .and_then(|h| world.objects.get(h))
            .map(|o| world.ee_pose.inverse() * o.pose);
        Self { world, cfg, trace: Vec::new(), step: 0, held_rel }
    }

    fn apply(&mut self, step: &ComposerStep) -> StepResult {
        match step {
            ComposerStep::MoveTo { target, offset } => {
                let b = self.world.objects[target].bounds();
                let point = match offset {
                    MoveOffset::Center => b.center,
                    MoveOffset::Top => top_point(&b.center, b.half.z),
                    MoveOffset::Above(d) => b.center + Vec3::new(0.0, 0.0, b.half.z + d),
                };
                self.motion(point, &[])
            }
            ComposerStep::Grasp { target, approach } => self.grasp(target, *approach),
            ComposerStep::OpenGripper => {
                self.release();
                self.record();
                Ok(())
            }
            ComposerStep::CloseGripper => {
                if self.world.gripper.is_open() {
                    self.world.gripper = Gripper::Closed { held: None };
                }
                self.record();
                Ok(())
            }
            ComposerStep::Rotate { degrees, axis } => self.rotate(*degrees, *axis),
            ComposerStep::ResetPose => {
                self.motion(self.cfg.home(), &[])?;
                self.world.ee_pose.rotation = UnitQuaternion::identity();
                self.sync_held();
                self.record();
                Ok(())
            }
        }
    }

    fn badpose(&self, object: &str, kind: super::BadposeKind) -> SimOutcome {
        SimOutcome::BadposeEvent { object: object.to_string(), kind, step_index: self.step }
    }

    /// Straight-line move of the end-effector to `to`.
    fn motion(&mut self, to: Vec3, exclude: &[&str]) -> StepResult {
        let from = self.world.ee_position();
        let delta = to - from;
        let len = delta.norm();
        if len < 1e-12 {
            return Ok(());
        }
        let held = self.world.gripper.held().map(str::to_string);
        if let Some(h) = &held {
            let o = &self.world.objects[h];
            if o.is_anchored() {
                let kind = if o.fragile { BadposeKind::Damaged } else { BadposeKind::Displaced };
                return Err(self.badpose(h, kind));
            }
        }
        let sweep_kind = |fragile: bool| {
            if fragile && len > self.cfg.damage_step {
                BadposeKind::Damaged
            } else {
                BadposeKind::Displaced
            }
        };
        let delicate: Vec<(String, super::Aabb, bool)> = self
            .world
            .objects
            .values()
            .filter(|o| o.is_delicate())
            .filter(|o| held.as_deref() != Some(o.name.as_str()) && !exclude.contains(&o.name.as_str()))
            .map(|o| (o.name.clone(), o.bounds(), o.fragile))
            .filter(|(_, b, _)| !b.contains(&from))
            .collect();

        let n = (len / self.cfg.waypoint_spacing).ceil().max(1.0) as usize;
        let mut prev = from;
        for k in 1..=n {
            let p = if k == n { to } else { from + delta * (k as f64 / n as f64) };
            if !self.world.workspace.executable.contains(&p) {
                return Err(SimOutcome::InfeasibleHalt { waypoint: p.into(), step_index: self.step });
            }
            for (name, b, fragile) in &delicate {
                if b.intersects_segment(&prev, &p) {
                    return Err(self.badpose(name, sweep_kind(*fragile)));
                }
            }
            self.world.ee_pose.translation = Translation3::from(p);
            self.sync_held();
            self.record();
            prev = p;
        }
        Ok(())
    }

    fn grasp(&mut self, target: &str, approach: Option<Approach>) -> StepResult {
        if self.world.gripper.held().is_some() {
            self.release();
        }
        let dir = approach_dir(approach);
        self.world.ee_pose.rotation = orientation_for_approach(&dir);
        self.record();

        let obj = self.world.objects[target].clone();
        let pregrasp = obj.center() - dir * self.cfg.standoff;
        self.motion(pregrasp, &[])?;

        if let Some(spec) = obj.approach {
            if angle_between(&dir, &spec.axis) > spec.tolerance + 1e-12 {
                return Err(self.badpose(target, BadposeKind::Misaligned));
            }
        }

        let mut exclude: Vec<&str> = vec![target];
        if let Some(p) = &obj.parent {
            exclude.push(p);
        }
        let children: Vec<String> = self
            .world
            .objects
            .values()
            .filter(|o| o.parent.as_deref() == Some(target))
            .map(|o| o.name.clone())
            .collect();
        exclude.extend(children.iter().map(String::as_str));
        self.motion(obj.center(), &exclude)?;

        self.world.gripper = Gripper::Closed { held: Some(target.to_string()) };
        self.held_rel = Some(self.world.ee_pose.inverse() * self.world.objects[target].pose);
        self.record();
        Ok(())
    }

    fn rotate(&mut self, degrees: f64, axis: RotationAxis) -> StepResult {
        let local = match axis {
            RotationAxis::X => Vector3::x_axis(),
            RotationAxis::Y => Vector3::y_axis(),
            RotationAxis::Z => Vector3::z_axis(),
        };
        if let Some(h) = self.world.gripper.held().map(str::to_string) {
            let o = self.world.objects.get_mut(&h).expect("held object exists");
            if o.is_anchored() {
                if axis != RotationAxis::Z {
                    let kind = if o.fragile { BadposeKind::Damaged } else { BadposeKind::Displaced };
                    return Err(self.badpose(&h, kind));
                }
                if let Some(a) = o.anchor.as_mut() {
                    a.advance(degrees);
                }
            }
        }
        let q = self.world.ee_pose.rotation * UnitQuaternion::from_axis_angle(&local, degrees.to_radians());
        self.world.ee_pose.rotation = renormalized(q);
        self.sync_held();
        self.record();
        Ok(())
    }

    /// Opens the gripper. Free objects fall to the floor of a container
    /// below them or to the table; anchored ones stay put.
    fn release(&mut self) {
        let held = self.world.gripper.held().map(str::to_string);
        self.world.gripper = Gripper::Open;
        self.held_rel = None;
        let Some(h) = held else { return };
        if self.world.objects[&h].is_anchored() {
            return;
        }
        let b = self.world.objects[&h].bounds();
        let c = b.center;
        let floor = self
            .world
            .objects
            .values()
            .filter(|o| o.container && o.name != h)
            .map(|o| o.bounds())
            .filter(|cb| cb.contains_xy(&c) && cb.min().z <= c.z + 1e-9)
            .map(|cb| cb.min().z)
            .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.max(z))))
            .unwrap_or(0.0);
        let o = self.world.objects.get_mut(&h).expect("held object exists");
        o.pose.translation = Translation3::new(c.x, c.y, floor + b.half.z);
    }

    fn sync_held(&mut self) {
        if let (Some(h), Some(rel)) = (self.world.gripper.held().map(str::to_string), self.held_rel) {
            let pose = self.world.ee_pose * rel;
            let o = self.world.objects.get_mut(&h).expect("held object exists");
            o.pose = Pose::from_parts(pose.translation, renormalized(pose.rotation));
        }
    }

    fn record(&mut self) {
        let held = self.world.gripper.held().map(str::to_string);
        let held_pose = held.as_ref().map(|h| self.world.objects[h].pose);
        self.trace.push(TraceFrame {
            step_index: self.step,
            ee: self.world.ee_pose,
            gripper_open: self.world.gripper.is_open(),
            held,
            held_pose,
        });
    }
}
