//! Binary frame-list codec for cached artifacts.
//!
//! Layout (little endian): magic `DTF1`, `u32` frame count, then per frame
//! `u32` width, `u32` height, `u64` frame index, `u8` sample format and the
//! samples. Format 1 stores bytes (used when every value is an exact 8-bit
//! level), format 2 raw `f32`.

use std::path::PathBuf;

use super::MediaError;
use crate::model::FrameImage;

const MAGIC: &[u8; 4] = b"DTF1";
const FORMAT_U8: u8 = 1;
const FORMAT_F32: u8 = 2;

pub fn encode_frames(frames: &[FrameImage]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        out.extend_from_slice(&(f.width() as u32).to_le_bytes());
        out.extend_from_slice(&(f.height() as u32).to_le_bytes());
        out.extend_from_slice(&(f.frame_index as u64).to_le_bytes());
        if f.is_8bit_exact() {
            out.push(FORMAT_U8);
            out.extend_from_slice(&f.to_rgb8());
        } else {
            out.push(FORMAT_F32);
            for v in f.pixels() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).ok_or("length overflow")?;
        let s = self.bytes.get(self.pos..end).ok_or("truncated payload")?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_inner(bytes: &[u8]) -> Result<Vec<FrameImage>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let count = r.u32()? as usize;
    let mut frames = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let w = r.u32()? as usize;
        let h = r.u32()? as usize;
        let index = r.u64()? as usize;
        let n = w
            .checked_mul(h)
            .and_then(|p| p.checked_mul(3))
            .ok_or("size overflow")?;
        let frame = match r.take(1)?[0] {
            FORMAT_U8 => FrameImage::from_rgb8(w, h, r.take(n)?, index),
            FORMAT_F32 => {
                let raw = r.take(n.checked_mul(4).ok_or("size overflow")?)?;
                let px = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                FrameImage::new(w, h, px, index)
            }
            other => return Err(format!("unknown sample format {other}")),
        }
        .map_err(|e| e.to_string())?;
        frames.push(frame);
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(frames)
}

/// `origin` names the file in errors.
pub fn decode_frames(
    bytes: &[u8],
    origin: impl Into<PathBuf>,
) -> Result<Vec<FrameImage>, MediaError> {
    decode_inner(bytes).map_err(|reason| MediaError::StorageFailure {
        path: origin.into(),
        reason,
    })
}
