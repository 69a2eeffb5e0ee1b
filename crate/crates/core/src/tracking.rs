//! Descriptor-based data association: frame-to-frame track chaining and
//! map-to-frame correspondence search.

use std::cmp::Ordering;

use thiserror::Error;

use crate::descriptor::{build_descriptor, hamming, Descriptor44};
use crate::frame::{FeatureFrame, SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::geometry::{CameraIntrinsics, PixelPoint, Point3, RigidTransform};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TrackingError {
    #[error("descriptor list is empty")]
    EmptyList,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Search radius in pixels around the predicted position.
    pub search_radius: f64,
    /// Largest accepted Hamming distance.
    pub max_hamming: u32,
    /// Frames a track may go unmatched before it is dropped. Zero drops a
    /// track on its first miss.
    pub max_missed_frames: u32,
    /// Descriptors each track remembers from its latest matches; a corner
    /// matches at the smallest distance to any of them.
    pub descriptor_memory: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            search_radius: 4.0,
            max_hamming: 10,
            max_missed_frames: 0,
            descriptor_memory: 1,
        }
    }
}

const GRID_CELL: usize = 8;
const GRID_COLS: usize = SENSOR_WIDTH / GRID_CELL;
const GRID_ROWS: usize = SENSOR_HEIGHT / GRID_CELL;

/// Corners of one frame with their descriptors and a bucket grid for radius
/// queries. Corners too close to the border for a descriptor are dropped.
#[derive(Debug, Clone, Default)]
pub struct FrameFeatures {
    pub points: Vec<PixelPoint>,
    pub descriptors: Vec<Descriptor44>,
    cell_start: Vec<u32>,
    cell_items: Vec<u32>,
}

impl FrameFeatures {
    pub fn from_frame(frame: &FeatureFrame) -> Self {
        let mut points = Vec::with_capacity(frame.corners.len());
        let mut descriptors = Vec::with_capacity(frame.corners.len());
        for &c in &frame.corners {
            if let Ok(d) = build_descriptor(&frame.edges, c) {
                points.push(PixelPoint::new(c.x as f64, c.y as f64));
                descriptors.push(d);
            }
        }
        Self::from_parts(points, descriptors)
    }

    pub fn from_parts(points: Vec<PixelPoint>, descriptors: Vec<Descriptor44>) -> Self {
        assert_eq!(points.len(), descriptors.len());
        let cell_of = |p: &PixelPoint| {
            let cx = (p.u.max(0.0) as usize / GRID_CELL).min(GRID_COLS - 1);
            let cy = (p.v.max(0.0) as usize / GRID_CELL).min(GRID_ROWS - 1);
            cy * GRID_COLS + cx
        };
        let mut counts = vec![0u32; GRID_COLS * GRID_ROWS + 1];
        for p in &points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Self {
            points,
            descriptors,
            cell_start: counts,
            cell_items: items,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of corners within `radius` of `center` (Euclidean).
    pub fn within_radius(&self, center: &PixelPoint, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.points.is_empty() {
            return;
        }
        let to_cell = |v: f64, n: usize| ((v.max(0.0) as usize) / GRID_CELL).min(n - 1);
        let (x0, x1) = (
            to_cell(center.u - radius, GRID_COLS),
            to_cell(center.u + radius, GRID_COLS),
        );
        let (y0, y1) = (
            to_cell(center.v - radius, GRID_ROWS),
            to_cell(center.v + radius, GRID_ROWS),
        );
        if center.u + radius < 0.0 || center.v + radius < 0.0 {
            return;
        }
        let r2 = radius * radius;
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let cell = cy * GRID_COLS + cx;
                for &i in &self.cell_items[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize] {
                    let p = &self.points[i as usize];
                    let (du, dv) = (p.u - center.u, p.v - center.v);
                    if du * du + dv * dv <= r2 {
                        out.push(i as usize);
                    }
                }
            }
        }
    }
}

/// A candidate or accepted association between a query (track or map point)
/// and a corner of the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub query: usize,
    pub corner: usize,
    pub distance: u32,
    pub pixel_distance: f64,
}

fn match_order(a: &Match, b: &Match) -> Ordering {
    a.distance
        .cmp(&b.distance)
        .then(a.pixel_distance.total_cmp(&b.pixel_distance))
        .then(a.query.cmp(&b.query))
        .then(a.corner.cmp(&b.corner))
}

/// Global greedy one-to-one assignment by ascending Hamming distance, ties
/// broken by pixel distance and then by index.
pub fn greedy_assign(mut candidates: Vec<Match>, n_queries: usize, n_corners: usize) -> Vec<Match> {
    candidates.sort_by(match_order);
    let mut query_used = vec![false; n_queries];
    let mut corner_used = vec![false; n_corners];
    let mut accepted = Vec::new();
    for m in candidates {
        if !query_used[m.query] && !corner_used[m.corner] {
            query_used[m.query] = true;
            corner_used[m.corner] = true;
            accepted.push(m);
        }
    }
    accepted
}

/// Radius-limited candidates within the Hamming threshold.
fn collect_candidates<'a>(
    queries: impl Iterator<Item = (usize, PixelPoint, &'a [Descriptor44])>,
    frame: &FrameFeatures,
    params: &MatchParams,
) -> Vec<Match> {
    let mut nearby = Vec::new();
    let mut out = Vec::new();
    for (q, pos, descs) in queries {
        frame.within_radius(&pos, params.search_radius, &mut nearby);
        for &c in &nearby {
            let Some(distance) = descs.iter().map(|d| hamming(*d, frame.descriptors[c])).min() else {
                continue;
            };
            if distance <= params.max_hamming {
                out.push(Match {
                    query: q,
                    corner: c,
                    distance,
                    pixel_distance: pos.distance(&frame.points[c]),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFeature {
    pub track_id: u64,
    pub position: PixelPoint,
    /// Descriptor of the latest match.
    pub descriptor: Descriptor44,
    /// Latest matched descriptors, oldest first, at most
    /// [`MatchParams::descriptor_memory`] long.
    pub recent: Vec<Descriptor44>,
    /// Successful matches since the track was born.
    pub age: u32,
    pub last_seen: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatches {
    /// Accepted `(track index, corner index)` associations.
    pub continued: Vec<Match>,
    /// Corners no track claimed.
    pub unmatched_corners: Vec<usize>,
    /// Tracks that found no corner.
    pub unmatched_tracks: Vec<usize>,
}

/// One frame-to-frame association step. Pure; does not touch the tracks.
pub fn match_frame_to_frame(tracks: &[TrackedFeature], frame: &FrameFeatures, params: &MatchParams) -> FrameMatches {
    let candidates = collect_candidates(
        tracks
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t.position, t.recent.as_slice())),
        frame,
        params,
    );
    let continued = greedy_assign(candidates, tracks.len(), frame.len());
    let mut track_hit = vec![false; tracks.len()];
    let mut corner_hit = vec![false; frame.len()];
    for m in &continued {
        track_hit[m.query] = true;
        corner_hit[m.corner] = true;
    }
    FrameMatches {
        continued,
        unmatched_corners: (0..frame.len()).filter(|&i| !corner_hit[i]).collect(),
        unmatched_tracks: (0..tracks.len()).filter(|&i| !track_hit[i]).collect(),
    }
}

/// Outcome of advancing the tracker by one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackStep {
    /// Track id owning each corner of the frame, in corner order.
    pub corner_tracks: Vec<u64>,
    pub continued: Vec<u64>,
    pub born: Vec<u64>,
    pub dropped: Vec<u64>,
}

/// Track table advanced frame by frame.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: MatchParams,
    tracks: Vec<TrackedFeature>,
    next_id: u64,
    frame_index: u64,
    started: bool,
}

impl Tracker {
    pub fn new(params: MatchParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 0,
            frame_index: 0,
            started: false,
        }
    }

    pub fn tracks(&self) -> &[TrackedFeature] {
        &self.tracks
    }

    pub fn params(&self) -> &MatchParams {
        &self.params
    }

    pub fn get(&self, track_id: u64) -> Option<&TrackedFeature> {
        self.tracks
            .binary_search_by_key(&track_id, |t| t.track_id)
            .ok()
            .map(|i| &self.tracks[i])
    }

    /// Index of the frame most recently passed to [`Tracker::step`].
    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn step(&mut self, frame: &FrameFeatures) -> TrackStep {
        if self.started {
            self.frame_index += 1;
        }
        self.started = true;
        let now = self.frame_index;
        let matches = match_frame_to_frame(&self.tracks, frame, &self.params);

        let mut corner_tracks = vec![u64::MAX; frame.len()];
        let mut step = TrackStep::default();
        for m in &matches.continued {
            let t = &mut self.tracks[m.query];
            t.position = frame.points[m.corner];
            t.descriptor = frame.descriptors[m.corner];
            if t.recent.len() >= self.params.descriptor_memory.max(1) {
                t.recent.remove(0);
            }
            t.recent.push(t.descriptor);
            t.age += 1;
            t.last_seen = now;
            corner_tracks[m.corner] = t.track_id;
            step.continued.push(t.track_id);
        }
        let max_missed = self.params.max_missed_frames as u64;
        self.tracks.retain(|t| {
            let keep = now - t.last_seen <= max_missed;
            if !keep {
                step.dropped.push(t.track_id);
            }
            keep
        });
        for &c in &matches.unmatched_corners {
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(TrackedFeature {
                track_id: id,
                position: frame.points[c],
                descriptor: frame.descriptors[c],
                recent: vec![frame.descriptors[c]],
                age: 0,
                last_seen: now,
            });
            corner_tracks[c] = id;
            step.born.push(id);
        }
        step.continued.sort_unstable();
        step.dropped.sort_unstable();
        step.corner_tracks = corner_tracks;
        step
    }
}

/// Read access to what map-to-frame matching needs from a landmark.
pub trait Landmark {
    fn id(&self) -> u64;
    fn position(&self) -> Point3;
    fn descriptor(&self) -> Descriptor44;
}

/// Map-to-frame correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapMatch {
    pub point_id: u64,
    pub corner: usize,
    pub pixel: PixelPoint,
    pub distance: u32,
}

/// Projects every landmark with the prior pose `T_cw` and searches the
/// radius around its projection; one-to-one by greedy ascending distance.
pub fn match_map_to_frame<'a, L: Landmark + 'a>(
    points: impl IntoIterator<Item = &'a L>,
    prior: &RigidTransform,
    k: &CameraIntrinsics,
    frame: &FrameFeatures,
    params: &MatchParams,
) -> Vec<MapMatch> {
    let mut ids = Vec::new();
    let mut descs = Vec::new();
    let mut queries = Vec::new();
    for lm in points {
        let p_c = prior.transform_point(&lm.position());
        let Ok(px) = k.project(&p_c) else { continue };
        if !k.contains(&px) {
            continue;
        }
        queries.push((ids.len(), px));
        descs.push(lm.descriptor());
        ids.push(lm.id());
    }
    let candidates = collect_candidates(
        queries
            .into_iter()
            .map(|(i, px)| (i, px, std::slice::from_ref(&descs[i]))),
        frame,
        params,
    );
    let mut out: Vec<MapMatch> = greedy_assign(candidates, ids.len(), frame.len())
        .into_iter()
        .map(|m| MapMatch {
            point_id: ids[m.query],
            corner: m.corner,
            pixel: frame.points[m.corner],
            distance: m.distance,
        })
        .collect();
    out.sort_by_key(|m| m.point_id);
    out
}

/// The descriptor with the smallest (lower) median Hamming distance to the
/// others; ties go to the lowest index.
pub fn most_descriptive(descriptors: &[Descriptor44]) -> Result<Descriptor44, TrackingError> {
    let n = descriptors.len();
    if n == 0 {
        return Err(TrackingError::EmptyList);
    }
    if n <= 2 {
        return Ok(descriptors[0]);
    }
    let mut best = (u32::MAX, 0);
    let mut row = Vec::with_capacity(n - 1);
    for (i, a) in descriptors.iter().enumerate() {
        row.clear();
        row.extend(
            descriptors
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| hamming(*a, *b)),
        );
        row.sort_unstable();
        let med = row[(row.len() - 1) / 2];
        if med < best.0 {
            best = (med, i);
        }
    }
    Ok(descriptors[best.1])
}
