//! Skeleton template with per-joint shape directions and capsule radii.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BodyError, NUM_JOINTS, NUM_SHAPE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    /// Parent joint index, `-1` for the root.
    pub parent: i64,
    /// Rest offset from the parent joint (from the origin for the root), mm.
    pub offset: [f64; 3],
    /// Offset change per unit of each shape coefficient, mm.
    pub shape_dirs: [[f64; 3]; NUM_SHAPE],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleSpec {
    pub joint_a: usize,
    /// Equal to `joint_a` for a sphere; otherwise a child of `joint_a`.
    pub joint_b: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyTemplate {
    pub joints: Vec<JointSpec>,
    pub capsules: Vec<CapsuleSpec>,
}

const NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const PARENTS: [i64; NUM_JOINTS] = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21];

// Body frame: x to the person's left, y forward, z up. Millimeters.
const OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 930.0],
    [90.0, 0.0, -80.0],
    [-90.0, 0.0, -80.0],
    [0.0, -10.0, 110.0],
    [10.0, 0.0, -400.0],
    [-10.0, 0.0, -400.0],
    [0.0, 0.0, 140.0],
    [0.0, -20.0, -410.0],
    [0.0, -20.0, -410.0],
    [0.0, 20.0, 60.0],
    [0.0, 120.0, -30.0],
    [0.0, 120.0, -30.0],
    [0.0, -20.0, 220.0],
    [70.0, -10.0, 130.0],
    [-70.0, -10.0, 130.0],
    [0.0, 30.0, 90.0],
    [110.0, 0.0, 30.0],
    [-110.0, 0.0, 30.0],
    [260.0, 0.0, 0.0],
    [-260.0, 0.0, 0.0],
    [250.0, 0.0, 0.0],
    [-250.0, 0.0, 0.0],
    [80.0, 0.0, 0.0],
    [-80.0, 0.0, 0.0],
];

const CAPSULES: [(usize, usize, f64); 22] = [
    (0, 1, 70.0),
    (0, 2, 70.0),
    (0, 3, 90.0),
    (3, 6, 90.0),
    (6, 9, 95.0),
    (9, 12, 70.0),
    (12, 15, 60.0),
    (15, 15, 100.0),
    (1, 4, 65.0),
    (2, 5, 65.0),
    (4, 7, 50.0),
    (5, 8, 50.0),
    (7, 10, 40.0),
    (8, 11, 40.0),
    (13, 16, 50.0),
    (14, 17, 50.0),
    (16, 18, 45.0),
    (17, 19, 45.0),
    (18, 20, 38.0),
    (19, 21, 38.0),
    (20, 22, 35.0),
    (21, 23, 35.0),
];

fn default_shape_dirs(j: usize) -> [[f64; 3]; NUM_SHAPE] {
    let o = Vector3::from(OFFSETS[j]);
    let scaled = |s: f64| -> [f64; 3] { (o * s).into() };
    let side = o.x.signum();
    let mut d = [[0.0; 3]; NUM_SHAPE];
    d[0] = scaled(0.05);
    match j {
        // Longer legs lift the pelvis by the same amount.
        0 => d[1] = [0.0, 0.0, 0.06 * 810.0],
        4 | 5 | 7 | 8 => d[1] = scaled(0.06),
        _ => {}
    }
    if matches!(j, 3 | 6 | 9 | 12) {
        d[2] = scaled(0.06);
    }
    if (18..=23).contains(&j) {
        d[3] = scaled(0.06);
    }
    match j {
        13 | 14 => d[4] = [7.0 * side, 0.0, 0.0],
        16 | 17 => d[4] = [11.0 * side, 0.0, 0.0],
        1 | 2 => d[5] = [9.0 * side, 0.0, 0.0],
        _ => {}
    }
    if matches!(j, 12 | 15) {
        d[6] = scaled(0.06);
    }
    if matches!(j, 10 | 11) {
        d[7] = scaled(0.1);
    }
    match j {
        4 | 5 => d[8] = scaled(0.05),
        7 | 8 => d[8] = scaled(-0.05),
        18 | 19 => d[9] = scaled(0.05),
        20 | 21 => d[9] = scaled(-0.05),
        _ => {}
    }
    d
}

impl Default for BodyTemplate {
    fn default() -> Self {
        let joints = (0..NUM_JOINTS)
            .map(|j| JointSpec { name: NAMES[j].to_string(), parent: PARENTS[j], offset: OFFSETS[j], shape_dirs: default_shape_dirs(j) })
            .collect();
        let capsules = CAPSULES.iter().map(|&(joint_a, joint_b, radius)| CapsuleSpec { joint_a, joint_b, radius }).collect();
        Self { joints, capsules }
    }
}

impl BodyTemplate {
    pub fn from_json(text: &str) -> Result<Self, BodyError> {
        let t: Self = serde_json::from_str(text).map_err(|e| BodyError::InvalidTemplate(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template serializes")
    }

    /// Checks the tree structure, finiteness and capsule references.
    pub fn validate(&self) -> Result<(), BodyError> {
        let bad = |m: String| Err(BodyError::InvalidTemplate(m));
        if self.joints.len() != NUM_JOINTS {
            return bad(format!("expected {NUM_JOINTS} joints, got {}", self.joints.len()));
        }
        for (j, spec) in self.joints.iter().enumerate() {
            let root = j == 0;
            if root != (spec.parent < 0) || (!root && spec.parent as usize >= j) {
                return bad(format!("joint {j} ({}) has invalid parent {}", spec.name, spec.parent));
            }
            let finite = spec.offset.iter().chain(spec.shape_dirs.iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return bad(format!("joint {j} ({}) has non-finite offset or shape direction", spec.name));
            }
        }
        for (k, c) in self.capsules.iter().enumerate() {
            if c.joint_a >= NUM_JOINTS || c.joint_b >= NUM_JOINTS {
                return bad(format!("capsule {k} references a missing joint"));
            }
            if c.joint_a != c.joint_b && self.parent(c.joint_b) != Some(c.joint_a) {
                return bad(format!("capsule {k}: joint {} is not a child of joint {}", c.joint_b, c.joint_a));
            }
            if !(c.radius > 0.0 && c.radius.is_finite()) {
                return bad(format!("capsule {k} has non-positive radius {}", c.radius));
            }
        }
        Ok(())
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        usize::try_from(self.joints[j].parent).ok()
    }

    /// Bone offsets after applying shape coefficients `beta`.
    pub fn shaped_offsets(&self, beta: &[f64; NUM_SHAPE]) -> Vec<Vector3<f64>> {
        self.joints
            .iter()
            .map(|spec| {
                let mut o = Vector3::from(spec.offset);
                for (b, d) in beta.iter().zip(&spec.shape_dirs) {
                    o += Vector3::from(*d) * *b;
                }
                o
            })
            .collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Bone lengths `|offset_j|` ; entry `j - 1` is the bone ending at joint `j`.
    pub fn bone_lengths(&self, beta: &[f64; NUM_SHAPE]) -> Vec<f64> {
        self.shaped_offsets(beta).iter().skip(1).map(|o| o.norm()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_is_valid_and_round_trips() {
        let t = BodyTemplate::default();
        t.validate().unwrap();
        let back = BodyTemplate::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn cyclic_parent_is_rejected() {
        let mut t = BodyTemplate::default();
        t.joints[4].parent = 7;
        assert!(matches!(t.validate(), Err(BodyError::InvalidTemplate(_))));
        let mut t = BodyTemplate::default();
        t.capsules[0].radius = 0.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn global_shape_scales_every_offset() {
        let t = BodyTemplate::default();
        let mut beta = [0.0; NUM_SHAPE];
        beta[0] = 2.0;
        let a = t.shaped_offsets(&[0.0; NUM_SHAPE]);
        let b = t.shaped_offsets(&beta);
        for j in 0..NUM_JOINTS {
            assert!((b[j] - a[j] * 1.1).norm() < 1e-9, "joint {j}");
        }
    }
}
