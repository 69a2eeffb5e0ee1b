//! Sensor output types: binary edge bitmaps, corner events and frames.

use std::fmt;

pub const SENSOR_WIDTH: usize = 256;
pub const SENSOR_HEIGHT: usize = 256;
/// Bytes in one packed 256×256 bitmap.
pub const BITMAP_BYTES: usize = SENSOR_WIDTH * SENSOR_HEIGHT / 8;
/// Maximum number of corner events read out per frame.
pub const MAX_CORNER_EVENTS: usize = 1000;

/// 256×256 binary edge image, row-major, most significant bit first.
#[derive(Clone, PartialEq, Eq)]
pub struct EdgeBitmap {
    bytes: Box<[u8; BITMAP_BYTES]>,
}

impl fmt::Debug for EdgeBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EdgeBitmap({} set)", self.count_ones())
    }
}

impl Default for EdgeBitmap {
    fn default() -> Self {
        Self::new()
    }
}

impl EdgeBitmap {
    pub fn new() -> Self {
        Self {
            bytes: Box::new([0u8; BITMAP_BYTES]),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; BITMAP_BYTES] = bytes.try_into().ok()?;
        Some(Self {
            bytes: Box::new(arr),
        })
    }

    pub fn as_bytes(&self) -> &[u8; BITMAP_BYTES] {
        &self.bytes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < SENSOR_WIDTH && y < SENSOR_HEIGHT);
        self.bytes[y * (SENSOR_WIDTH / 8) + x / 8] & (0x80 >> (x % 8)) != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let idx = y * (SENSOR_WIDTH / 8) + x / 8;
        let mask = 0x80 >> (x % 8);
        if value {
            self.bytes[idx] |= mask;
        } else {
            self.bytes[idx] &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, x: usize, y: usize) {
        self.bytes[y * (SENSOR_WIDTH / 8) + x / 8] ^= 0x80 >> (x % 8);
    }

    pub fn count_ones(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    pub fn density(&self) -> f64 {
        self.count_ones() as f64 / (SENSOR_WIDTH * SENSOR_HEIGHT) as f64
    }
}

/// Integer corner coordinate as produced by the event readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelEvent {
    pub x: u8,
    pub y: u8,
}

impl PixelEvent {
    pub fn new(x: u8, y: u8) -> Self {
        Self { x, y }
    }

    /// Raster-order key: row first, then column.
    pub fn raster_key(&self) -> (u8, u8) {
        (self.y, self.x)
    }
}

/// One sensor readout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureFrame {
    pub timestamp_ns: u64,
    pub corners: Vec<PixelEvent>,
    pub edges: EdgeBitmap,
}

impl FeatureFrame {
    pub fn timestamp_secs(&self) -> f64 {
        self.timestamp_ns as f64 * 1e-9
    }
}
