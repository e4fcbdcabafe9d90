use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Coordinate frame of a [`KeypointSet`], with its extent.
///
/// Pixel centers sit at integer coordinates, so a frame of width `w` spans
/// `[-0.5, w - 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Space {
    Image { width: usize, height: usize },
    Heatmap { res: usize },
}

impl Space {
    fn extent(self) -> (f64, f64) {
        match self {
            Space::Image { width, height } => (width as f64, height as f64),
            Space::Heatmap { res } => (res as f64, res as f64),
        }
    }

    pub fn contains(self, x: f64, y: f64) -> bool {
        let (w, h) = self.extent();
        x >= -0.5 && x <= w - 0.5 && y >= -0.5 && y <= h - 0.5
    }

    /// Nearest point of the frame.
    pub fn clamp(self, x: f64, y: f64) -> (f64, f64) {
        let (w, h) = self.extent();
        (x.clamp(-0.5, w - 0.5), y.clamp(-0.5, h - 0.5))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, visible: bool) -> Self {
        Keypoint { x, y, visible }
    }

    pub fn dist(&self, other: &Keypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Joint coordinates of one person in a tagged frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    joints: Vec<Keypoint>,
    space: Space,
}

impl KeypointSet {
    /// Fails if a visible joint lies outside `space`.
    pub fn new(joints: Vec<Keypoint>, space: Space) -> Result<Self> {
        for (j, k) in joints.iter().enumerate() {
            contract!(k.x.is_finite() && k.y.is_finite(), "joint {j} has non-finite coordinates");
            contract!(!k.visible || space.contains(k.x, k.y), "visible joint {j} at ({}, {}) outside {space:?}", k.x, k.y);
        }
        Ok(KeypointSet { joints, space })
    }

    /// Builds a set, hiding visible joints that fall outside `space`.
    pub fn new_hiding_outside(mut joints: Vec<Keypoint>, space: Space) -> Self {
        for k in &mut joints {
            if !space.contains(k.x, k.y) {
                k.visible = false;
            }
        }
        KeypointSet { joints, space }
    }

    pub fn joints(&self) -> &[Keypoint] {
        &self.joints
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn get(&self, j: usize) -> &Keypoint {
        &self.joints[j]
    }
}

/// Location and size of a person in an image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonDescriptor {
    pub center: [f64; 2],
    /// Person extent as a multiple of a 200-pixel reference box.
    pub scale: f64,
}

impl PersonDescriptor {
    pub const REFERENCE_PX: f64 = 200.0;

    pub fn new(center: [f64; 2], scale: f64) -> Result<Self> {
        contract!(scale > 0.0 && scale.is_finite(), "person scale must be positive, got {scale}");
        contract!(center.iter().all(|c| c.is_finite()), "person center must be finite");
        Ok(PersonDescriptor { center, scale })
    }
}

/// Left/right joint pairs exchanged by a horizontal mirror.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipPairs(Vec<(usize, usize)>);

impl FlipPairs {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &pairs {
            contract!(a != b, "flip pair ({a}, {b}) pairs a joint with itself");
            contract!(seen.insert(a) && seen.insert(b), "joint index repeated in flip pairs");
        }
        Ok(FlipPairs(pairs))
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    /// Joint index that `j` becomes under mirroring.
    pub fn partner(&self, j: usize) -> usize {
        for &(a, b) in &self.0 {
            if a == j {
                return b;
            }
            if b == j {
                return a;
            }
        }
        j
    }

    /// Checks that every index addresses one of `m` joints.
    pub fn check(&self, m: usize) -> Result<()> {
        contract!(self.0.iter().all(|&(a, b)| a < m && b < m), "flip pair index out of range for {m} joints");
        Ok(())
    }
}

/// Evaluation groups in table order.
pub const GROUP_NAMES: [&str; 7] = ["head", "sho", "elb", "wri", "hip", "knee", "ank"];

/// Joint layout: names, mirror pairs, the torso reference joints and the
/// evaluation groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointSchema {
    /// 14 joints: r-ankle, r-knee, r-hip, l-hip, l-knee, l-ankle, r-wrist,
    /// r-elbow, r-shoulder, l-shoulder, l-elbow, l-wrist, neck, head-top.
    Lsp14,
    /// 16 joints: r-ankle, r-knee, r-hip, l-hip, l-knee, l-ankle, pelvis,
    /// thorax, upper-neck, head-top, r-wrist, r-elbow, r-shoulder,
    /// l-shoulder, l-elbow, l-wrist.
    Mpii16,
}

impl JointSchema {
    pub fn num_joints(self) -> usize {
        match self {
            JointSchema::Lsp14 => 14,
            JointSchema::Mpii16 => 16,
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            JointSchema::Lsp14 => &[
                "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "r_wrist", "r_elbow", "r_shoulder",
                "l_shoulder", "l_elbow", "l_wrist", "neck", "head_top",
            ],
            JointSchema::Mpii16 => &[
                "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "pelvis", "thorax", "upper_neck",
                "head_top", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist",
            ],
        }
    }

    pub fn flip_pairs(self) -> FlipPairs {
        let pairs = match self {
            JointSchema::Lsp14 => vec![(0, 5), (1, 4), (2, 3), (6, 11), (7, 10), (8, 9)],
            JointSchema::Mpii16 => vec![(0, 5), (1, 4), (2, 3), (10, 15), (11, 14), (12, 13)],
        };
        FlipPairs::new(pairs).expect("static pairs are valid")
    }

    pub fn index(self, name: &str) -> usize {
        self.names().iter().position(|n| *n == name).unwrap_or_else(|| panic!("no joint {name}"))
    }

    /// `(left hip, right shoulder)`: the torso reference of the PCK ratio.
    pub fn torso_joints(self) -> (usize, usize) {
        (self.index("l_hip"), self.index("r_shoulder"))
    }

    /// Evaluation group of joint `j`, indexing [`GROUP_NAMES`].
    pub fn group(self, j: usize) -> Option<usize> {
        let name = self.names()[j];
        let g = match name {
            "neck" | "head_top" | "upper_neck" => 0,
            "r_shoulder" | "l_shoulder" => 1,
            "r_elbow" | "l_elbow" => 2,
            "r_wrist" | "l_wrist" => 3,
            "r_hip" | "l_hip" => 4,
            "r_knee" | "l_knee" => 5,
            "r_ankle" | "l_ankle" => 6,
            _ => return None,
        };
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypoint_set_rejects_visible_outside() {
        let sp = Space::Heatmap { res: 16 };
        assert!(KeypointSet::new(vec![Keypoint::new(16.0, 3.0, true)], sp).is_err());
        assert!(KeypointSet::new(vec![Keypoint::new(16.0, 3.0, false)], sp).is_ok());
        let s = KeypointSet::new_hiding_outside(vec![Keypoint::new(-1.0, 3.0, true)], sp);
        assert!(!s.get(0).visible);
    }

    #[test]
    fn flip_pairs_validation() {
        assert!(FlipPairs::new(vec![(0, 1), (1, 2)]).is_err());
        assert!(FlipPairs::new(vec![(3, 3)]).is_err());
        let p = FlipPairs::new(vec![(0, 5)]).unwrap();
        assert_eq!(p.partner(5), 0);
        assert_eq!(p.partner(2), 2);
        assert!(p.check(4).is_err());
    }

    #[test]
    fn schemas_are_consistent() {
        for s in [JointSchema::Lsp14, JointSchema::Mpii16] {
            assert_eq!(s.names().len(), s.num_joints());
            s.flip_pairs().check(s.num_joints()).unwrap();
            for &(a, b) in s.flip_pairs().pairs() {
                let (na, nb) = (s.names()[a], s.names()[b]);
                assert_eq!(&na[2..], &nb[2..]);
                assert_eq!(s.group(a), s.group(b));
            }
        }
        assert_eq!(JointSchema::Lsp14.torso_joints(), (3, 8));
        assert_eq!(JointSchema::Mpii16.torso_joints(), (3, 12));
        assert_eq!(JointSchema::Mpii16.group(6), None);
    }

    #[test]
    fn person_scale_must_be_positive() {
        assert!(PersonDescriptor::new([1.0, 2.0], 0.0).is_err());
        assert!(PersonDescriptor::new([1.0, 2.0], 0.5).is_ok());
    }
}
