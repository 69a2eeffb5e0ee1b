use std::collections::BTreeMap;

use crate::descriptor::Descriptor44;
use crate::geometry::{PixelPoint, Point3, RigidTransform};
use crate::tracking::{most_descriptive, Landmark};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub keyframe_id: u64,
    pub pixel: PixelPoint,
    pub descriptor: Descriptor44,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub id: u64,
    pub position: Point3,
    observations: Vec<Observation>,
    representative: Descriptor44,
}

impl MapPoint {
    /// # Panics
    /// If `observations` is empty.
    pub fn new(id: u64, position: Point3, observations: Vec<Observation>) -> Self {
        let representative = representative_of(&observations).expect("a map point needs an observation");
        Self {
            id,
            position,
            observations,
            representative,
        }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn representative_descriptor(&self) -> Descriptor44 {
        self.representative
    }

    /// Adds an observation, replacing an earlier one from the same keyframe.
    pub fn add_observation(&mut self, obs: Observation) {
        match self.observations.iter_mut().find(|o| o.keyframe_id == obs.keyframe_id) {
            Some(existing) => *existing = obs,
            None => self.observations.push(obs),
        }
        self.representative = representative_of(&self.observations).expect("non-empty");
    }

    pub fn observed_by(&self, keyframe_id: u64) -> bool {
        self.observations.iter().any(|o| o.keyframe_id == keyframe_id)
    }
}

fn representative_of(observations: &[Observation]) -> Option<Descriptor44> {
    let descs: Vec<Descriptor44> = observations.iter().map(|o| o.descriptor).collect();
    most_descriptive(&descs).ok()
}

impl Landmark for MapPoint {
    fn id(&self) -> u64 {
        self.id
    }

    fn position(&self) -> Point3 {
        self.position
    }

    fn descriptor(&self) -> Descriptor44 {
        self.representative
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: u64,
    /// `T_cw`.
    pub pose: RigidTransform,
    pub features: Vec<(PixelPoint, Descriptor44)>,
    /// Tracker id of each feature, parallel to `features`.
    pub track_ids: Vec<u64>,
    pub frame_index: u64,
}

impl Keyframe {
    pub fn camera_center(&self) -> Point3 {
        self.pose.camera_center()
    }
}

/// Keyframes and map points. Ordered containers keep every traversal
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Map {
    points: BTreeMap<u64, MapPoint>,
    keyframes: Vec<Keyframe>,
    next_point_id: u64,
}

impl Map {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_keyframe(&mut self, mut kf: Keyframe) -> u64 {
        kf.id = self.keyframes.len() as u64;
        let id = kf.id;
        self.keyframes.push(kf);
        id
    }

    pub fn add_point(&mut self, position: Point3, observations: Vec<Observation>) -> u64 {
        let id = self.next_point_id;
        self.next_point_id += 1;
        self.points.insert(id, MapPoint::new(id, position, observations));
        id
    }

    pub fn remove_point(&mut self, id: u64) -> Option<MapPoint> {
        self.points.remove(&id)
    }

    pub fn point(&self, id: u64) -> Option<&MapPoint> {
        self.points.get(&id)
    }

    pub fn point_mut(&mut self, id: u64) -> Option<&mut MapPoint> {
        self.points.get_mut(&id)
    }

    pub fn points(&self) -> impl Iterator<Item = &MapPoint> {
        self.points.values()
    }

    pub fn points_mut(&mut self) -> impl Iterator<Item = &mut MapPoint> {
        self.points.values_mut()
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn keyframe(&self, id: u64) -> Option<&Keyframe> {
        self.keyframes.get(id as usize)
    }

    pub fn last_keyframe(&self) -> Option<&Keyframe> {
        self.keyframes.last()
    }

    /// Multiplies every position and keyframe translation by `s`.
    pub fn rescale(&mut self, s: f64) {
        for p in self.points.values_mut() {
            p.position *= s;
        }
        for kf in &mut self.keyframes {
            kf.pose.translation *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(kf: u64, bits: u64) -> Observation {
        Observation {
            keyframe_id: kf,
            pixel: PixelPoint::new(10.0, 10.0),
            descriptor: Descriptor44(bits),
        }
    }

    #[test]
    fn representative_tracks_observations() {
        let mut p = MapPoint::new(0, Point3::zeros(), vec![obs(0, 0b111)]);
        assert_eq!(p.representative_descriptor(), Descriptor44(0b111));
        p.add_observation(obs(1, 0b111));
        p.add_observation(obs(2, 0x1FF << 20));
        assert_eq!(p.representative_descriptor(), Descriptor44(0b111));
        // Same keyframe replaces instead of appending.
        p.add_observation(obs(2, 0b110));
        assert_eq!(p.observations().len(), 3);
        assert!(p.observed_by(2) && !p.observed_by(3));
    }

    #[test]
    fn ids_are_sequential_and_not_reused() {
        let mut m = Map::new();
        let a = m.add_point(Point3::zeros(), vec![obs(0, 1)]);
        let b = m.add_point(Point3::zeros(), vec![obs(0, 1)]);
        m.remove_point(a);
        let c = m.add_point(Point3::zeros(), vec![obs(0, 1)]);
        assert_eq!((a, b, c), (0, 1, 2));
        assert_eq!(m.point_count(), 2);
    }
}
