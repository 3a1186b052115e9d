//! Tracked 2D detections and their `poses2d.json` representation.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::Pixel;

/// Default skeleton size (SMPL joint topology).
pub const DEFAULT_JOINTS: usize = 24;

/// One person's 2D joints in one view at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPose2D {
    pub view_id: usize,
    pub frame: usize,
    pub track_id: usize,
    pub joints: Vec<Pixel>,
    /// Per-joint confidence in `[0, 1]`; zero marks a missing joint.
    pub confidence: Vec<f64>,
    /// Views kept by the consistency filter (filtered output only).
    pub selected_views: Option<Vec<usize>>,
}

impl TrackedPose2D {
    pub fn new(view_id: usize, frame: usize, track_id: usize, joints: Vec<Pixel>, confidence: Vec<f64>) -> Self {
        Self { view_id, frame, track_id, joints, confidence, selected_views: None }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn is_valid(&self) -> bool {
        self.joints.len() == self.confidence.len()
            && self.confidence.iter().all(|c| (0.0..=1.0).contains(c))
            && self.joints.iter().all(|j| j.x.is_finite() && j.y.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    view_id: usize,
    frame: usize,
    track_id: usize,
    joints: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selected_views: Option<Vec<usize>>,
}

impl Serialize for TrackedPose2D {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRecord {
            view_id: self.view_id,
            frame: self.frame,
            track_id: self.track_id,
            joints: self.joints.iter().zip(&self.confidence).map(|(j, c)| [j.x, j.y, *c]).collect(),
            selected_views: self.selected_views.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrackedPose2D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PoseRecord::deserialize(d)?;
        let pose = TrackedPose2D {
            view_id: r.view_id,
            frame: r.frame,
            track_id: r.track_id,
            joints: r.joints.iter().map(|j| Vector2::new(j[0], j[1])).collect(),
            confidence: r.joints.iter().map(|j| j[2]).collect(),
            selected_views: r.selected_views,
        };
        if !pose.is_valid() {
            return Err(serde::de::Error::custom(format!(
                "invalid pose record (view {}, frame {}, track {}): confidences must lie in [0, 1]",
                pose.view_id, pose.frame, pose.track_id
            )));
        }
        Ok(pose)
    }
}

/// Observations indexed by `(frame, track_id, view_id)`.
#[derive(Debug, Clone, Default)]
pub struct ObservationIndex<'a> {
    map: BTreeMap<(usize, usize, usize), &'a TrackedPose2D>,
}

impl<'a> ObservationIndex<'a> {
    pub fn new(streams: &'a [TrackedPose2D]) -> Self {
        let map = streams.iter().map(|p| ((p.frame, p.track_id, p.view_id), p)).collect();
        Self { map }
    }

    pub fn get(&self, frame: usize, track: usize, view: usize) -> Option<&'a TrackedPose2D> {
        self.map.get(&(frame, track, view)).copied()
    }

    /// Records of one person at one frame, ordered by view id.
    pub fn person_frame(&self, frame: usize, track: usize) -> Vec<&'a TrackedPose2D> {
        self.map.range((frame, track, 0)..=(frame, track, usize::MAX)).map(|(_, p)| *p).collect()
    }

    pub fn frames(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.map.keys().map(|k| k.0).collect();
        f.dedup();
        f
    }

    pub fn tracks(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.map.keys().map(|k| k.1).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_schema_round_trip() {
        let p = TrackedPose2D::new(2, 7, 1, vec![Vector2::new(1.5, 2.5), Vector2::new(3.0, 4.0)], vec![0.9, 0.0]);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"view_id":2,"frame":7,"track_id":1,"joints":[[1.5,2.5,0.9],[3.0,4.0,0.0]]}"#);
        let back: TrackedPose2D = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn confidence_out_of_range_is_rejected() {
        let text = r#"{"view_id":0,"frame":0,"track_id":0,"joints":[[1,2,1.5]]}"#;
        assert!(serde_json::from_str::<TrackedPose2D>(text).is_err());
    }

    #[test]
    fn index_groups_by_person_and_frame() {
        let mk = |v, f, t| TrackedPose2D::new(v, f, t, vec![], vec![]);
        let streams = vec![mk(1, 0, 0), mk(0, 0, 0), mk(0, 0, 1), mk(2, 1, 0)];
        let idx = ObservationIndex::new(&streams);
        let views: Vec<usize> = idx.person_frame(0, 0).iter().map(|p| p.view_id).collect();
        assert_eq!(views, vec![0, 1]);
        assert_eq!(idx.frames(), vec![0, 1]);
        assert_eq!(idx.tracks(), vec![0, 1]);
    }
}
