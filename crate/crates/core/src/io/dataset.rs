//! Binary dataset container: an 18-byte header followed by one record per
//! frame (timestamp, corner events, packed edge bitmap), all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::frame::{EdgeBitmap, FeatureFrame, PixelEvent, BITMAP_BYTES, MAX_CORNER_EVENTS};

pub const MAGIC: &[u8; 8] = b"BITVOSIM";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: u64 = 18;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a dataset file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file at byte offset {offset} while reading {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("frame {frame} at byte offset {offset}: {count} corners exceeds {MAX_CORNER_EVENTS}")]
    TooManyCorners { frame: u32, offset: u64, count: usize },
    #[error("trailing data at byte offset {offset} after {frames} frames")]
    TrailingData { offset: u64, frames: u32 },
    #[error("header declares {declared} frames but {written} were written")]
    FrameCountMismatch { declared: u32, written: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub frame_count: u32,
    pub fps: u32,
}

/// Size in bytes of one frame record with `corners` events.
pub fn frame_record_bytes(corners: usize) -> u64 {
    10 + 2 * corners as u64 + BITMAP_BYTES as u64
}

pub struct DatasetWriter<W: Write> {
    out: W,
    header: DatasetHeader,
    written: u32,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W, header: DatasetHeader) -> Result<Self, DatasetError> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&header.frame_count.to_le_bytes())?;
        out.write_all(&header.fps.to_le_bytes())?;
        Ok(Self { out, header, written: 0 })
    }

    pub fn write_frame(&mut self, frame: &FeatureFrame) -> Result<(), DatasetError> {
        let n = frame.corners.len();
        if n > MAX_CORNER_EVENTS {
            return Err(DatasetError::TooManyCorners {
                frame: self.written,
                offset: 0,
                count: n,
            });
        }
        if self.written == self.header.frame_count {
            return Err(DatasetError::FrameCountMismatch {
                declared: self.header.frame_count,
                written: self.written + 1,
            });
        }
        self.out.write_all(&frame.timestamp_ns.to_le_bytes())?;
        self.out.write_all(&(n as u16).to_le_bytes())?;
        let coords: Vec<u8> = frame.corners.iter().flat_map(|c| [c.x, c.y]).collect();
        self.out.write_all(&coords)?;
        self.out.write_all(frame.edges.as_bytes())?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and checks that the declared frame count was honored.
    pub fn finish(mut self) -> Result<W, DatasetError> {
        if self.written != self.header.frame_count {
            return Err(DatasetError::FrameCountMismatch {
                declared: self.header.frame_count,
                written: self.written,
            });
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streaming reader; yields frames in file order and rejects trailing bytes.
pub struct DatasetReader<R: Read> {
    input: R,
    header: DatasetHeader,
    offset: u64,
    read: u32,
    done: bool,
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut input: R) -> Result<Self, DatasetError> {
        let mut offset = 0;
        let mut buf = [0u8; HEADER_BYTES as usize];
        fill(&mut input, &mut buf, &mut offset, "header")?;
        if &buf[..8] != MAGIC {
            return Err(DatasetError::BadMagic);
        }
        let version = u16::from_le_bytes([buf[8], buf[9]]);
        if version != FORMAT_VERSION {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        let header = DatasetHeader {
            frame_count: u32::from_le_bytes(buf[10..14].try_into().expect("4 bytes")),
            fps: u32::from_le_bytes(buf[14..18].try_into().expect("4 bytes")),
        };
        Ok(Self {
            input,
            header,
            offset,
            read: 0,
            done: false,
        })
    }

    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    pub fn next_frame(&mut self) -> Result<Option<FeatureFrame>, DatasetError> {
        if self.read == self.header.frame_count {
            if !self.done {
                self.done = true;
                let mut probe = [0u8; 1];
                if read_some(&mut self.input, &mut probe)? > 0 {
                    return Err(DatasetError::TrailingData {
                        offset: self.offset,
                        frames: self.read,
                    });
                }
            }
            return Ok(None);
        }
        let record_offset = self.offset;
        let mut fixed = [0u8; 10];
        fill(&mut self.input, &mut fixed, &mut self.offset, "frame header")?;
        let timestamp_ns = u64::from_le_bytes(fixed[..8].try_into().expect("8 bytes"));
        let n = u16::from_le_bytes([fixed[8], fixed[9]]) as usize;
        if n > MAX_CORNER_EVENTS {
            return Err(DatasetError::TooManyCorners {
                frame: self.read,
                offset: record_offset,
                count: n,
            });
        }
        let mut coords = vec![0u8; 2 * n];
        fill(&mut self.input, &mut coords, &mut self.offset, "corner events")?;
        let mut bits = [0u8; BITMAP_BYTES];
        fill(&mut self.input, &mut bits, &mut self.offset, "edge bitmap")?;
        self.read += 1;
        Ok(Some(FeatureFrame {
            timestamp_ns,
            corners: coords.chunks_exact(2).map(|c| PixelEvent::new(c[0], c[1])).collect(),
            edges: EdgeBitmap::from_bytes(&bits).expect("exact bitmap size"),
        }))
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<FeatureFrame, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn read_some<R: Read>(input: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    loop {
        match input.read(buf) {
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            other => return other,
        }
    }
}

fn fill<R: Read>(input: &mut R, buf: &mut [u8], offset: &mut u64, what: &'static str) -> Result<(), DatasetError> {
    let mut got = 0;
    while got < buf.len() {
        let n = read_some(input, &mut buf[got..])?;
        if n == 0 {
            return Err(DatasetError::Truncated {
                offset: *offset + got as u64,
                what,
            });
        }
        got += n;
    }
    *offset += got as u64;
    Ok(())
}

pub fn open_dataset(path: &Path) -> Result<DatasetReader<BufReader<File>>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Open {
        path: path.display().to_string(),
        source,
    })?;
    DatasetReader::new(BufReader::new(file))
}

pub fn create_dataset(path: &Path, header: DatasetHeader) -> Result<DatasetWriter<BufWriter<File>>, DatasetError> {
    let file = File::create(path).map_err(|source| DatasetError::Open {
        path: path.display().to_string(),
        source,
    })?;
    DatasetWriter::new(BufWriter::new(file), header)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<FeatureFrame>), DatasetError> {
    let mut reader = open_dataset(path)?;
    let header = reader.header();
    let frames = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

pub fn write_dataset(path: &Path, fps: u32, frames: &[FeatureFrame]) -> Result<(), DatasetError> {
    let header = DatasetHeader {
        frame_count: frames.len() as u32,
        fps,
    };
    let mut writer = create_dataset(path, header)?;
    for f in frames {
        writer.write_frame(f)?;
    }
    writer.finish()?;
    Ok(())
}
