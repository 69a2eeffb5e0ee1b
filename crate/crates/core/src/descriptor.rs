//! 44-bit rotation-invariant descriptor computed from binary edges only.
//!
//! A 7×7 window around the corner is packed into one `u64`. Three square
//! rings are sampled from it (radius 1: 8 px, radius 2: 16 px, radius 3
//! minus the four window corners: 20 px). Each ring is bit-rotated by an
//! amount derived from the binary edge centroid, and the rings are packed
//! as `r1 << 36 | r2 << 20 | r3`.
//!
//! All three ring lengths are divisible by four and every ring is closed
//! under 90° rotation, so rotating a patch by a multiple of 90° leaves the
//! descriptor unchanged exactly.

use crate::frame::{EdgeBitmap, PixelEvent, SENSOR_HEIGHT, SENSOR_WIDTH};
use thiserror::Error;

pub const PATCH_SIZE: usize = 7;
pub const PATCH_RADIUS: i32 = 3;
pub const DESCRIPTOR_BITS: u32 = 44;
const DESCRIPTOR_MASK: u64 = (1 << DESCRIPTOR_BITS) - 1;

pub const RING1_LEN: u32 = 8;
pub const RING2_LEN: u32 = 16;
pub const RING3_LEN: u32 = 20;

// Ring sample offsets (dx, dy), ordered by increasing angle from +x towards
// +y (image y points down). Index 0 is the +x axis sample.
const RING1: [(i8, i8); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const RING2: [(i8, i8); 16] = [
    (2, 0),
    (2, 1),
    (2, 2),
    (1, 2),
    (0, 2),
    (-1, 2),
    (-2, 2),
    (-2, 1),
    (-2, 0),
    (-2, -1),
    (-2, -2),
    (-1, -2),
    (0, -2),
    (1, -2),
    (2, -2),
    (2, -1),
];
const RING3: [(i8, i8); 20] = [
    (3, 0),
    (3, 1),
    (3, 2),
    (2, 3),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 3),
    (-3, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-3, -2),
    (-2, -3),
    (-1, -3),
    (0, -3),
    (1, -3),
    (2, -3),
    (3, -2),
    (3, -1),
];

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("corner ({x}, {y}) is too close to the image border for a 7x7 window")]
    BorderCorner { x: u8, y: u8 },
    #[error("patch has zero first-order moments")]
    ZeroMoment,
}

/// 7×7 binary patch, row-major, bit 0 top-left, bit 24 the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BinaryPatch7(pub u64);

impl BinaryPatch7 {
    pub const CENTER_BIT: u32 = 24;
    const MASK: u64 = (1 << 49) - 1;

    pub fn new(bits: u64) -> Self {
        Self(bits & Self::MASK)
    }

    #[inline]
    fn index(dx: i32, dy: i32) -> u32 {
        ((dy + PATCH_RADIUS) * PATCH_SIZE as i32 + dx + PATCH_RADIUS) as u32
    }

    /// Bit at offset `(dx, dy)` from the center, both in `-3..=3`.
    #[inline]
    pub fn get(&self, dx: i32, dy: i32) -> bool {
        self.0 >> Self::index(dx, dy) & 1 == 1
    }

    pub fn set(&mut self, dx: i32, dy: i32, value: bool) {
        let bit = 1u64 << Self::index(dx, dy);
        if value {
            self.0 |= bit;
        } else {
            self.0 &= !bit;
        }
    }

    /// Rotates the patch content by +90° (from +x towards +y) about its
    /// center.
    pub fn rotate90(&self) -> Self {
        let mut out = BinaryPatch7(0);
        for dy in -PATCH_RADIUS..=PATCH_RADIUS {
            for dx in -PATCH_RADIUS..=PATCH_RADIUS {
                if self.get(dx, dy) {
                    out.set(-dy, dx, true);
                }
            }
        }
        out
    }
}

/// Orientation of a patch in degrees, `[0, 360)`.
///
/// Stored as a quarter-turn count plus an angle inside the quarter, so that
/// rotating a patch by 90° changes only the quarter count and the per-ring
/// shift stays exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    quarter: u8,
    within: f64,
}

impl Orientation {
    pub const ZERO: Orientation = Orientation {
        quarter: 0,
        within: 0.0,
    };

    pub fn from_degrees(theta: f64) -> Self {
        let theta = theta.rem_euclid(360.0);
        let quarter = ((theta / 90.0).floor() as u8).min(3);
        Self {
            quarter,
            within: (theta - 90.0 * quarter as f64).max(0.0),
        }
    }

    pub fn degrees(&self) -> f64 {
        90.0 * self.quarter as f64 + self.within
    }

    /// `⌊θ · len / 360⌋` for ring lengths divisible by four.
    pub fn rotate_by(&self, len: u32) -> u32 {
        debug_assert!(len % 4 == 0);
        let within = (self.within * len as f64 / 360.0).floor() as u32;
        (self.quarter as u32 * len / 4 + within.min(len / 4 - 1)) % len
    }
}

/// The three sampled rings, each in its low bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RingSet {
    pub r1: u32,
    pub r2: u32,
    pub r3: u32,
}

/// 44-bit descriptor in the low bits of a `u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Descriptor44(pub u64);

impl Descriptor44 {
    pub fn new(bits: u64) -> Self {
        Self(bits & DESCRIPTOR_MASK)
    }

    pub fn bits(&self) -> u64 {
        self.0
    }

    #[inline]
    pub fn distance(&self, other: &Descriptor44) -> u32 {
        hamming(*self, *other)
    }
}

pub fn extract_patch(edges: &EdgeBitmap, corner: PixelEvent) -> Result<BinaryPatch7, DescriptorError> {
    let (x, y) = (corner.x as i32, corner.y as i32);
    if x < PATCH_RADIUS
        || y < PATCH_RADIUS
        || x + PATCH_RADIUS >= SENSOR_WIDTH as i32
        || y + PATCH_RADIUS >= SENSOR_HEIGHT as i32
    {
        return Err(DescriptorError::BorderCorner {
            x: corner.x,
            y: corner.y,
        });
    }
    let mut bits = 0u64;
    let mut idx = 0;
    for py in (y - PATCH_RADIUS)..=(y + PATCH_RADIUS) {
        for px in (x - PATCH_RADIUS)..=(x + PATCH_RADIUS) {
            if edges.get(px as usize, py as usize) {
                bits |= 1 << idx;
            }
            idx += 1;
        }
    }
    Ok(BinaryPatch7(bits))
}

/// Binary centroid `(Σ x·B, Σ y·B)` with the origin on the center pixel.
pub fn patch_moments(patch: BinaryPatch7) -> (i32, i32) {
    let mut mx = 0;
    let mut my = 0;
    let mut bits = patch.0;
    while bits != 0 {
        let i = bits.trailing_zeros() as i32;
        mx += i % PATCH_SIZE as i32 - PATCH_RADIUS;
        my += i / PATCH_SIZE as i32 - PATCH_RADIUS;
        bits &= bits - 1;
    }
    (mx, my)
}

/// Quadrant-correct arctangent of the binary centroid.
pub fn compute_orientation(patch: BinaryPatch7) -> Result<Orientation, DescriptorError> {
    let (mut a, mut b) = patch_moments(patch);
    if a == 0 && b == 0 {
        return Err(DescriptorError::ZeroMoment);
    }
    // Turn the moment vector back by quarter turns until it lies in
    // a > 0, b >= 0; integer arithmetic keeps this exact.
    let mut quarter = 0u8;
    while !(a > 0 && b >= 0) {
        (a, b) = (b, -a);
        quarter += 1;
    }
    let within = (b as f64).atan2(a as f64).to_degrees();
    Ok(Orientation { quarter, within })
}

fn sample_ring(patch: BinaryPatch7, ring: &[(i8, i8)]) -> u32 {
    ring.iter().enumerate().fold(0u32, |acc, (k, &(dx, dy))| {
        acc | (patch.get(dx as i32, dy as i32) as u32) << k
    })
}

pub fn patch_to_rings(patch: BinaryPatch7) -> RingSet {
    RingSet {
        r1: sample_ring(patch, &RING1),
        r2: sample_ring(patch, &RING2),
        r3: sample_ring(patch, &RING3),
    }
}

/// Circular rotation that moves bit `k + s` to bit `k`, with
/// `s = ⌊θ · len / 360⌋`.
pub fn rotate_ring(ring: u32, len: u32, theta: Orientation) -> u32 {
    let mask = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
    let ring = ring & mask;
    let s = theta.rotate_by(len);
    if s == 0 {
        return ring;
    }
    ((ring >> s) | (ring << (len - s))) & mask
}

/// Descriptor of an already extracted patch.
pub fn describe_patch(patch: BinaryPatch7) -> Descriptor44 {
    let theta = compute_orientation(patch).unwrap_or(Orientation::ZERO);
    let rings = patch_to_rings(patch);
    let r1 = rotate_ring(rings.r1, RING1_LEN, theta) as u64;
    let r2 = rotate_ring(rings.r2, RING2_LEN, theta) as u64;
    let r3 = rotate_ring(rings.r3, RING3_LEN, theta) as u64;
    Descriptor44(r1 << (RING2_LEN + RING3_LEN) | r2 << RING3_LEN | r3)
}

pub fn build_descriptor(edges: &EdgeBitmap, corner: PixelEvent) -> Result<Descriptor44, DescriptorError> {
    extract_patch(edges, corner).map(describe_patch)
}

#[inline]
pub fn hamming(a: Descriptor44, b: Descriptor44) -> u32 {
    (a.0 ^ b.0).count_ones()
}
