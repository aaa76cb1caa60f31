//! FAT1 raster files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "FAT1" | u32 height | u32 width | u32 channels | f32 * (height * width * channels)
//! ```
//!
//! Values are row-major with channels interleaved per pixel. Undefined
//! arrival times are stored as NaN; masks are stored as 0/1 channels.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FAT1";

#[derive(Clone, Debug, PartialEq)]
pub struct FatRaster {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FatRaster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "raster {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        let dim = |v: usize| {
            u32::try_from(v).map_err(|_| Error::shape(format!("raster dimension {v} too large")))
        };
        Ok(FatRaster {
            height: dim(height)?,
            width: dim(width)?,
            channels: dim(channels)?,
            data,
        })
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        let n = self.channels as usize;
        self.data.iter().skip(c).step_by(n.max(1)).copied().collect()
    }

    /// Interleaves equally sized planes into one raster.
    pub fn from_planes(height: usize, width: usize, planes: &[&[f32]]) -> Result<Self> {
        let n = height * width;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::shape("raster planes differ in size"));
        }
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            data.extend(planes.iter().map(|p| p[i]));
        }
        Self::new(height, width, planes.len(), data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.height.to_le_bytes())?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.channels.to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Reads one raster from the stream; trailing bytes are left unread.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let fmt = |detail: String| Error::Format {
            what: "FAT1 raster",
            detail,
        };
        let mut head = [0u8; 16];
        r.read_exact(&mut head)
            .map_err(|e| fmt(format!("header: {e}")))?;
        if &head[..4] != MAGIC {
            return Err(fmt(format!("bad magic {:?}", &head[..4])));
        }
        let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().expect("4 bytes"));
        let (height, width, channels) = (word(4), word(8), word(12));
        let n = (height as usize)
            .checked_mul(width as usize)
            .and_then(|v| v.checked_mul(channels as usize))
            .ok_or_else(|| fmt("dimensions overflow".into()))?;
        let mut bytes = vec![0u8; 4 * n];
        r.read_exact(&mut bytes)
            .map_err(|e| fmt(format!("expected {n} values: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(FatRaster {
            height,
            width,
            channels,
            data,
        })
    }

    /// Parses a whole buffer, rejecting trailing garbage.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let r = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format {
                what: "FAT1 raster",
                detail: format!("{} trailing bytes", cursor.len()),
            });
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_little_endian() {
        let r = FatRaster::new(2, 3, 1, vec![1.0; 6]).unwrap();
        let b = r.to_bytes();
        assert_eq!(&b[..4], b"FAT1");
        assert_eq!(&b[4..8], &[2, 0, 0, 0]);
        assert_eq!(&b[8..12], &[3, 0, 0, 0]);
        assert_eq!(&b[12..16], &[1, 0, 0, 0]);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 16 + 24);
    }

    #[test]
    fn nan_survives_round_trip() {
        let r = FatRaster::new(1, 2, 1, vec![f32::NAN, 3.0]).unwrap();
        let back = FatRaster::from_bytes(&r.to_bytes()).unwrap();
        assert!(back.data[0].is_nan());
        assert_eq!(back.data[1], 3.0);
    }

    #[test]
    fn truncated_and_bad_magic_are_rejected() {
        let b = FatRaster::new(2, 2, 1, vec![0.0; 4]).unwrap().to_bytes();
        assert!(FatRaster::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(FatRaster::from_bytes(&bad).is_err());
        let mut long = b;
        long.push(0);
        assert!(FatRaster::from_bytes(&long).is_err());
    }

    #[test]
    fn planes_interleave() {
        let r = FatRaster::from_planes(1, 2, &[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(r.data, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(r.channel(1), vec![3.0, 4.0]);
    }
}
