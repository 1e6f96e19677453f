use std::collections::BTreeMap;

use nalgebra::{Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{Aabb, Pose, Vec3};
use super::goal::GoalSpec;
use super::{SimConfig, SimError, WorkspaceBounds};

/// The built-in scene templates.
pub const DEFAULT_SCENES: &str = include_str!("../../fixtures/scenes.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachToml {
    pub axis: [f64; 3],
    pub tolerance_deg: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorToml {
    #[serde(default)]
    pub release_deg: Option<f64>,
}

/// One object entry of a scene template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub half: [f64; 3],
    #[serde(default)]
    pub relevant: bool,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub offset: Option<[f64; 3]>,
    #[serde(default)]
    pub approach: Option<ApproachToml>,
    #[serde(default)]
    pub fragile: bool,
    #[serde(default)]
    pub container: bool,
    #[serde(default)]
    pub anchored: Option<AnchorToml>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub goal: GoalSpec,
    pub objects: Vec<ObjectSpec>,
}

impl SceneSpec {
    fn validate(&self, scene: &str) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Scene(format!("{scene}: {m}")));
        if self.objects.is_empty() {
            return err("no objects".into());
        }
        let mut seen: Vec<&str> = Vec::new();
        for o in &self.objects {
            if o.name.is_empty() || !o.name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                return err(format!("object name `{}` must be lowercase ascii", o.name));
            }
            if seen.contains(&o.name.as_str()) {
                return err(format!("duplicate object `{}`", o.name));
            }
            if o.half.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
                return err(format!("`{}` needs strictly positive half-extents", o.name));
            }
            match (&o.parent, &o.offset) {
                (Some(p), Some(_)) if !seen.contains(&p.as_str()) => {
                    return err(format!("`{}` must come after its parent `{p}`", o.name));
                }
                (Some(_), None) | (None, Some(_)) => {
                    return err(format!("`{}`: parent and offset go together", o.name));
                }
                _ => {}
            }
            if let Some(a) = &o.approach {
                let v = Vec3::from(a.axis);
                if !(v.norm() > 1e-9) || !(0.0..=180.0).contains(&a.tolerance_deg) {
                    return err(format!("`{}` has an invalid approach spec", o.name));
                }
            }
            seen.push(&o.name);
        }
        if !self.objects.iter().any(|o| o.parent.is_none() && o.relevant) {
            return err("at least one root object must be relevant".into());
        }
        for name in self.goal.objects() {
            if !seen.contains(&name) {
                return err(format!("goal references unknown object `{name}`"));
            }
        }
        Ok(())
    }
}

/// Scene templates keyed by scene name.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLibrary {
    scenes: BTreeMap<String, SceneSpec>,
}

impl SceneLibrary {
    pub fn builtin() -> Self {
        Self::from_toml(DEFAULT_SCENES).expect("built-in scene fixture is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let scenes: BTreeMap<String, SceneSpec> =
            toml::from_str(text).map_err(|e| SimError::Scene(e.to_string()))?;
        for (name, spec) in &scenes {
            spec.validate(name)?;
        }
        Ok(Self { scenes })
    }

    pub fn get(&self, scene: &str) -> Result<&SceneSpec, SimError> {
        self.scenes.get(scene).ok_or_else(|| SimError::UnknownScene(scene.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scenes.keys().map(String::as_str)
    }

    /// Places the scene's objects for one trial.
    ///
    /// Root objects are placed uniformly at random with their centers at
    /// least `clearance` inside the executable box. With probability
    /// `unreachable_fraction` (and only when `margin > 0`) one relevant root
    /// is instead placed in the band between the executable boundary and
    /// `margin` beyond it. The first draw of the trial RNG makes that
    /// decision, so it depends on the seed alone and not on the scene.
    pub fn spawn(&self, scene: &str, seed: u64, cfg: &SimConfig) -> Result<WorldState, SimError> {
        let spec = self.get(scene)?;
        cfg.workspace.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let force_unreachable = rng.random::<f64>() < cfg.spawn.unreachable_fraction && cfg.spawn.margin > 0.0;

        let roots: Vec<usize> = (0..spec.objects.len()).filter(|&i| spec.objects[i].parent.is_none()).collect();
        let relevant_roots: Vec<usize> = roots.iter().copied().filter(|&i| spec.objects[i].relevant).collect();
        let far_index = if force_unreachable {
            Some(relevant_roots[rng.random_range(0..relevant_roots.len())])
        } else {
            None
        };

        let exec = cfg.workspace.executable;
        let core_half = [
            (exec.half.x - cfg.spawn.clearance).max(0.0),
            (exec.half.y - cfg.spawn.clearance).max(0.0),
        ];
        let gap = (cfg.spawn.margin / 2.0).min(10.0);

        let mut placed: Vec<Aabb> = Vec::new();
        let mut centers: BTreeMap<usize, Vec3> = BTreeMap::new();
        for &i in &roots {
            let o = &spec.objects[i];
            let half = Vec3::from(o.half);
            let mut ok = None;
            for _ in 0..cfg.spawn.max_attempts {
                let (x, y) = if Some(i) == far_index {
                    far_xy(&mut rng, &exec, core_half, gap, cfg.spawn.margin)
                } else {
                    (
                        exec.center.x + uniform(&mut rng, core_half[0]),
                        exec.center.y + uniform(&mut rng, core_half[1]),
                    )
                };
                let candidate = Aabb::new(Vec3::new(x, y, half.z), half);
                if placed.iter().all(|b| !b.overlaps_xy(&candidate, cfg.spawn.spacing)) {
                    ok = Some(candidate);
                    break;
                }
            }
            let b = ok.ok_or(SimError::PlacementExhausted(cfg.spawn.max_attempts))?;
            placed.push(b);
            centers.insert(i, b.center);
        }

        let mut objects = BTreeMap::new();
        for (i, o) in spec.objects.iter().enumerate() {
            let center = match (&o.parent, o.offset) {
                (Some(p), Some(off)) => {
                    let pi = spec.objects.iter().position(|q| &q.name == p).expect("validated parent");
                    centers[&pi] + Vec3::from(off)
                }
                _ => centers[&i],
            };
            centers.insert(i, center);
            let pose = Pose::from_parts(Translation3::from(center), UnitQuaternion::identity());
            objects.insert(
                o.name.clone(),
                SceneObject {
                    name: o.name.clone(),
                    pose,
                    initial_pose: pose,
                    extents: Vec3::from(o.half),
                    approach: o.approach.as_ref().map(|a| ApproachSpec {
                        axis: Vec3::from(a.axis).normalize(),
                        tolerance: a.tolerance_deg.to_radians(),
                    }),
                    fragile: o.fragile,
                    container: o.container,
                    relevant: o.relevant,
                    parent: o.parent.clone(),
                    anchor: o.anchored.as_ref().map(|a| AnchorState {
                        release_deg: a.release_deg,
                        progress_deg: 0.0,
                        released: false,
                    }),
                },
            );
        }

        Ok(WorldState {
            scene: scene.to_string(),
            objects,
            ee_pose: Pose::from_parts(Translation3::from(cfg.home()), UnitQuaternion::identity()),
            gripper: Gripper::Open,
            workspace: cfg.workspace,
            goal: spec.goal.clone(),
            rng_seed: seed,
        })
    }
}

fn uniform(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// A point in the band just beyond the executable box on a random side.
fn far_xy(rng: &mut ChaCha8Rng, exec: &Aabb, core_half: [f64; 2], gap: f64, margin: f64) -> (f64, f64) {
    let axis = rng.random_range(0..2usize);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let lo = exec.half[axis] + gap;
    let hi = exec.half[axis] + margin;
    let out = exec.center[axis] + sign * if hi > lo { rng.random_range(lo..hi) } else { hi };
    let other = exec.center[1 - axis] + uniform(rng, core_half[1 - axis]);
    if axis == 0 {
        (out, other)
    } else {
        (other, out)
    }
}

/// Required approach direction and angular tolerance (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachSpec {
    pub axis: Vec3,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorState {
    pub release_deg: Option<f64>,
    /// Accumulated rotation about the tool axis while grasped.
    pub progress_deg: f64,
    pub released: bool,
}

impl AnchorState {
    pub fn holds(&self) -> bool {
        !self.released
    }

    pub fn advance(&mut self, degrees: f64) {
        self.progress_deg += degrees;
        if let Some(r) = self.release_deg {
            if r != 0.0 && self.progress_deg * r.signum() >= r.abs() - 1e-9 {
                self.released = true;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub pose: Pose,
    pub initial_pose: Pose,
    /// Half-dimensions in the object frame.
    pub extents: Vec3,
    pub approach: Option<ApproachSpec>,
    pub fragile: bool,
    pub container: bool,
    pub relevant: bool,
    pub parent: Option<String>,
    pub anchor: Option<AnchorState>,
}

impl SceneObject {
    pub fn center(&self) -> Vec3 {
        self.pose.translation.vector
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::of_oriented(&self.pose, &self.extents)
    }

    /// Objects a careless sweep can disturb.
    pub fn is_delicate(&self) -> bool {
        self.approach.is_some() || self.fragile
    }

    pub fn is_anchored(&self) -> bool {
        self.anchor.is_some_and(|a| a.holds())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Closed { held: Option<String> },
}

impl Gripper {
    pub fn held(&self) -> Option<&str> {
        match self {
            Gripper::Closed { held: Some(h) } => Some(h),
            _ => None,
        }
    }

    pub fn is_open(&self) -> bool {
        matches!(self, Gripper::Open)
    }
}

/// What a perception module reports about one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub name: String,
    pub position: [f64; 3],
    pub half: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub scene: String,
    pub objects: BTreeMap<String, SceneObject>,
    pub ee_pose: Pose,
    pub gripper: Gripper,
    pub workspace: WorkspaceBounds,
    pub goal: GoalSpec,
    pub rng_seed: u64,
}

impl WorldState {
    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.get(name)
    }

    pub fn ee_position(&self) -> Vec3 {
        self.ee_pose.translation.vector
    }

    /// Objects inside the perception box, in name order.
    pub fn perceive(&self) -> Vec<Detection> {
        self.objects
            .values()
            .filter(|o| self.workspace.perception.contains(&o.center()))
            .map(|o| Detection {
                name: o.name.clone(),
                position: o.center().into(),
                half: o.extents.into(),
            })
            .collect()
    }

    /// Whether some object the task depends on (a relevant object or one
    /// attached to it) has its center outside the executable box.
    pub fn target_out_of_workspace(&self) -> bool {
        self.objects.values().any(|o| {
            let relevant = o.relevant
                || o.parent.as_ref().and_then(|p| self.objects.get(p)).is_some_and(|p| p.relevant);
            relevant && !self.workspace.executable.contains(&o.center())
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("world state serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskRegistry;

    #[test]
    fn builtin_has_a_scene_per_task() {
        let lib = SceneLibrary::builtin();
        for t in TaskRegistry::builtin().tasks() {
            let s = lib.get(&t.scene).unwrap();
            assert_eq!(s.goal.kind(), t.goal, "{}", t.name);
        }
    }

    #[test]
    fn rubbish_scene_objects() {
        let w = SceneLibrary::builtin().spawn("PutRubbishInBin", 3, &SimConfig::default()).unwrap();
        let names: Vec<&str> = w.objects.keys().map(String::as_str).collect();
        assert_eq!(names, ["bin", "rubbish", "tomato1", "tomato2"]);
    }

    #[test]
    fn spawn_is_seeded() {
        let lib = SceneLibrary::builtin();
        let cfg = SimConfig::default();
        for seed in 0..20 {
            assert_eq!(lib.spawn("LightBulbOut", seed, &cfg), lib.spawn("LightBulbOut", seed, &cfg));
        }
        assert_ne!(lib.spawn("Grasp", 1, &cfg).unwrap(), lib.spawn("Grasp", 2, &cfg).unwrap());
    }

    #[test]
    fn zero_margin_keeps_everything_reachable() {
        let lib = SceneLibrary::builtin();
        let cfg = SimConfig::default().with_margin(0.0).with_unreachable_fraction(1.0);
        for scene in lib.names() {
            for seed in 0..50 {
                let w = lib.spawn(scene, seed, &cfg).unwrap();
                assert!(w.objects.values().all(|o| cfg.workspace.executable.contains(&o.center())));
                assert!(!w.target_out_of_workspace());
            }
        }
    }

    #[test]
    fn forced_unreachable_is_outside_but_perceived() {
        let lib = SceneLibrary::builtin();
        let cfg = SimConfig::default().with_unreachable_fraction(1.0);
        for scene in lib.names() {
            for seed in 0..50 {
                let w = lib.spawn(scene, seed, &cfg).unwrap();
                assert!(w.target_out_of_workspace(), "{scene} {seed}");
                assert_eq!(w.perceive().len(), w.objects.len());
            }
        }
    }

    #[test]
    fn unreachable_decision_is_shared_across_scenes() {
        let lib = SceneLibrary::builtin();
        let cfg = SimConfig::default();
        for seed in 0..200 {
            let flags: Vec<bool> =
                lib.names().map(|s| lib.spawn(s, seed, &cfg).unwrap().target_out_of_workspace()).collect();
            assert!(flags.iter().all(|f| *f == flags[0]), "seed {seed}");
        }
    }

    #[test]
    fn roots_never_overlap() {
        let lib = SceneLibrary::builtin();
        let cfg = SimConfig::default();
        for scene in lib.names() {
            for seed in 0..100 {
                let w = lib.spawn(scene, seed, &cfg).unwrap();
                let roots: Vec<_> = w.objects.values().filter(|o| o.parent.is_none()).collect();
                for (i, a) in roots.iter().enumerate() {
                    for b in &roots[i + 1..] {
                        assert!(!a.bounds().overlaps_xy(&b.bounds(), 0.0), "{scene} {seed}");
                    }
                }
            }
        }
    }

    #[test]
    fn crowded_region_exhausts() {
        let lib = SceneLibrary::builtin();
        let mut cfg = SimConfig::default().with_margin(0.0);
        cfg.spawn.clearance = 50.0;
        cfg.spawn.max_attempts = 7;
        assert_eq!(lib.spawn("PutRubbishInBin", 0, &cfg), Err(SimError::PlacementExhausted(7)));
    }

    #[test]
    fn malformed_scene_is_rejected() {
        let bad = r#"
            [S]
            goal = { kind = "ee_at", object = "ghost", tolerance = 1.0 }
            [[S.objects]]
            name = "a"
            half = [1.0, 1.0, 1.0]
            relevant = true
        "#;
        assert!(matches!(SceneLibrary::from_toml(bad), Err(SimError::Scene(_))));
        let zero = bad.replace("ghost", "a").replace("[1.0, 1.0, 1.0]", "[1.0, 0.0, 1.0]");
        assert!(matches!(SceneLibrary::from_toml(&zero), Err(SimError::Scene(_))));
    }
}
