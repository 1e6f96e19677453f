use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Pose = Isometry3<f64>;

/// Direction the gripper travels along when it approaches from its home
/// orientation: straight down.
pub fn tool_down() -> Vec3 {
    Vec3::new(0.0, 0.0, -1.0)
}

pub fn pose_at(position: Vec3) -> Pose {
    Isometry3::from_parts(Translation3::from(position), UnitQuaternion::identity())
}

/// Rotation that turns the tool axis from straight down to `dir`.
pub fn orientation_for_approach(dir: &Vec3) -> UnitQuaternion<f64> {
    let dir = dir.normalize();
    UnitQuaternion::rotation_between(&tool_down(), &dir).unwrap_or_else(|| {
        // Antiparallel: flip about x.
        UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
    })
}

pub fn renormalized(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Angle in radians between two directions.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0);
    c.acos()
}

/// Signed rotation angle (degrees) of `q` about `axis`, in (-180, 180].
pub fn twist_degrees(q: &UnitQuaternion<f64>, axis: &Vec3) -> f64 {
    let axis = Unit::new_normalize(*axis);
    let v = q.imag();
    let w = q.scalar();
    let mut deg = (2.0 * v.dot(&axis).atan2(w)).to_degrees();
    while deg > 180.0 {
        deg -= 360.0;
    }
    while deg <= -180.0 {
        deg += 360.0;
    }
    deg
}

/// Axis-aligned box given by center and half-extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub center: Vec3,
    pub half: Vec3,
}

impl Aabb {
    pub fn new(center: Vec3, half: Vec3) -> Self {
        Self { center, half }
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.half
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half
    }

    /// Closed containment, with a tiny slack so points placed exactly on a
    /// face by floating-point interpolation still count as inside.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| (p[i] - self.center[i]).abs() <= self.half[i] + 1e-9)
    }

    pub fn contains_xy(&self, p: &Vec3) -> bool {
        (0..2).all(|i| (p[i] - self.center[i]).abs() <= self.half[i] + 1e-9)
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min()) && self.contains(&other.max())
    }

    pub fn overlaps_xy(&self, other: &Aabb, spacing: f64) -> bool {
        (0..2).all(|i| (self.center[i] - other.center[i]).abs() < self.half[i] + other.half[i] + spacing)
    }

    /// Slab test for the closed segment `a`-`b`.
    pub fn intersects_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let lo = self.min();
        let hi = self.max();
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for i in 0..3 {
            if d[i].abs() < 1e-12 {
                if a[i] < lo[i] || a[i] > hi[i] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[i];
                let mut ta = (lo[i] - a[i]) * inv;
                let mut tb = (hi[i] - a[i]) * inv;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// World-aligned bounds of a box with half-extents `half` at `pose`.
    pub fn of_oriented(pose: &Pose, half: &Vec3) -> Self {
        let r = pose.rotation.to_rotation_matrix();
        let m = r.matrix().abs();
        Self { center: pose.translation.vector, half: m * half }
    }
}
