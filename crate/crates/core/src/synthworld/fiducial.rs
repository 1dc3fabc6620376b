//! Pixel blocks carrying an avatar's latents.
//!
//! Three rows of 8-bit cells sit around the avatar's anchor pixel:
//!
//! ```text
//! row ay-1  [ID magic][z0 z1 z2][z3 z4 z5][z6 z7 0][check]
//! row ay    [MO magic][yaw pitch e0][e1 e2 e3][check]
//! row ay+1  [SC magic][rx rx ry][ry shape glasses][backdrop offsets 0][check]
//! ```
//!
//! The magic cells use channel values 0 and 255, which ordinary rendering
//! never produces, and each block ends in a checksum cell.

use super::{
    AppearanceAttrs, Backdrop, HeadShape, IdentityLatent, MotionLatent, Placement,
    IDENTITY_LATENT_DIM,
};
use crate::model::FrameImage;

const MAGIC_IDENTITY: [u8; 3] = [255, 0, 255];
const MAGIC_MOTION: [u8; 3] = [0, 255, 255];
const MAGIC_SCENE: [u8; 3] = [255, 255, 0];

const IDENTITY_BYTES: usize = 8;
const MOTION_BYTES: usize = 6;
const SCENE_BYTES: usize = 8;

/// Columns left of the anchor used by the blocks.
pub(crate) const LEFT_EXTENT: usize = 2;
/// Columns right of the anchor used by the widest block.
pub(crate) const RIGHT_EXTENT: usize = 3;

/// Mutable 8-bit RGB canvas.
#[derive(Debug, Clone)]
pub(crate) struct Canvas {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_frame(frame: &FrameImage) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            data: frame.to_rgb8(),
        }
    }

    pub fn into_frame(self, frame_index: usize) -> FrameImage {
        FrameImage::from_rgb8(self.width, self.height, &self.data, frame_index)
            .expect("canvas dimensions are non-zero")
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

fn frame_rgb8(frame: &FrameImage, x: usize, y: usize) -> [u8; 3] {
    frame.rgb(x, y).map(crate::model::quantize_u8)
}

fn checksum(tag: u8, bytes: &[u8]) -> [u8; 3] {
    let sum = bytes.iter().fold(0u32, |s, &b| s + u32::from(b)) % 256;
    let weighted = bytes
        .iter()
        .enumerate()
        .fold(0u32, |s, (i, &b)| s + (i as u32 + 1) * u32::from(b))
        % 251;
    [sum as u8 ^ tag, weighted as u8, tag]
}

fn write_block(canvas: &mut Canvas, x0: usize, y: usize, magic: [u8; 3], tag: u8, bytes: &[u8]) {
    canvas.set(x0, y, magic);
    let cells = bytes.len().div_ceil(3);
    for cell in 0..cells {
        let mut rgb = [0u8; 3];
        for (c, slot) in rgb.iter_mut().enumerate() {
            *slot = bytes.get(cell * 3 + c).copied().unwrap_or(0);
        }
        canvas.set(x0 + 1 + cell, y, rgb);
    }
    canvas.set(x0 + 1 + cells, y, checksum(tag, bytes));
}

fn read_block(
    frame: &FrameImage,
    x0: usize,
    y: usize,
    magic: [u8; 3],
    tag: u8,
    len: usize,
) -> Option<Vec<u8>> {
    let cells = len.div_ceil(3);
    if y >= frame.height() || x0 + 1 + cells >= frame.width() {
        return None;
    }
    if frame_rgb8(frame, x0, y) != magic {
        return None;
    }
    let mut bytes = Vec::with_capacity(cells * 3);
    for cell in 0..cells {
        bytes.extend_from_slice(&frame_rgb8(frame, x0 + 1 + cell, y));
    }
    if bytes[len..].iter().any(|&b| b != 0) {
        return None;
    }
    bytes.truncate(len);
    (frame_rgb8(frame, x0 + 1 + cells, y) == checksum(tag, &bytes)).then_some(bytes)
}

pub(crate) fn yaw_to_byte(yaw: f64) -> u8 {
    ((yaw + 45.0) / 90.0 * 255.0).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn byte_to_yaw(b: u8) -> f64 {
    f64::from(b) * 90.0 / 255.0 - 45.0
}

pub(crate) fn pitch_to_byte(pitch: f64) -> u8 {
    ((pitch + 30.0) / 60.0 * 255.0).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn byte_to_pitch(b: u8) -> f64 {
    f64::from(b) * 60.0 / 255.0 - 30.0
}

pub(crate) fn unit_to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn byte_to_unit(b: u8) -> f64 {
    f64::from(b) / 255.0
}

fn radius_to_bytes(r: f64) -> [u8; 2] {
    ((r * 16.0).round().clamp(0.0, 65535.0) as u16).to_be_bytes()
}

fn bytes_to_radius(hi: u8, lo: u8) -> f64 {
    f64::from(u16::from_be_bytes([hi, lo])) / 16.0
}

/// Writes the three blocks around `placement`'s anchor pixel.
pub(crate) fn write_fiducials(
    canvas: &mut Canvas,
    identity: &IdentityLatent,
    motion: &MotionLatent,
    attrs: &AppearanceAttrs,
    placement: &Placement,
) {
    let (ax, ay) = placement.anchor();
    let x0 = ax - LEFT_EXTENT;

    let id_bytes: Vec<u8> = identity.values().iter().map(|&v| unit_to_byte(v)).collect();
    write_block(canvas, x0, ay - 1, MAGIC_IDENTITY, 0x11, &id_bytes);

    let mut mo = vec![yaw_to_byte(motion.yaw), pitch_to_byte(motion.pitch)];
    mo.extend(motion.expression.iter().map(|&v| unit_to_byte(v)));
    write_block(canvas, x0, ay, MAGIC_MOTION, 0x22, &mo);

    let (rx, ry) = placement.radii();
    let [rx_hi, rx_lo] = radius_to_bytes(rx);
    let [ry_hi, ry_lo] = radius_to_bytes(ry);
    let (cx, cy) = placement.center();
    let offsets = u8::from(cx.fract() != 0.0) | (u8::from(cy.fract() != 0.0) << 1);
    let scene = [
        rx_hi,
        rx_lo,
        ry_hi,
        ry_lo,
        attrs.head_shape as u8,
        u8::from(attrs.glasses),
        attrs.backdrop as u8,
        offsets,
    ];
    write_block(canvas, x0, ay + 1, MAGIC_SCENE, 0x33, &scene);
}

/// One avatar recovered from its fiducials.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFace {
    pub identity: IdentityLatent,
    pub motion: MotionLatent,
    pub attrs: AppearanceAttrs,
    /// Placement in the coordinates of the decoded frame.
    pub placement: Placement,
}

/// Every avatar with intact fiducials, in scan order.
pub fn decode_faces(frame: &FrameImage) -> Vec<DecodedFace> {
    let mut faces = Vec::new();
    if frame.height() < 3 || frame.width() < LEFT_EXTENT + RIGHT_EXTENT + 1 {
        return faces;
    }
    for y in 0..frame.height() - 2 {
        for x in 0..frame.width() - (LEFT_EXTENT + RIGHT_EXTENT) {
            if frame_rgb8(frame, x, y) != MAGIC_IDENTITY {
                continue;
            }
            if let Some(face) = decode_at(frame, x, y) {
                faces.push(face);
            }
        }
    }
    faces
}

fn decode_at(frame: &FrameImage, x0: usize, y: usize) -> Option<DecodedFace> {
    let id = read_block(frame, x0, y, MAGIC_IDENTITY, 0x11, IDENTITY_BYTES)?;
    let mo = read_block(frame, x0, y + 1, MAGIC_MOTION, 0x22, MOTION_BYTES)?;
    let sc = read_block(frame, x0, y + 2, MAGIC_SCENE, 0x33, SCENE_BYTES)?;

    let mut z = [0.0; IDENTITY_LATENT_DIM];
    for (slot, &b) in z.iter_mut().zip(&id) {
        *slot = byte_to_unit(b);
    }
    let identity = IdentityLatent::new(z).ok()?;
    let motion = MotionLatent::new(
        byte_to_yaw(mo[0]),
        byte_to_pitch(mo[1]),
        [
            byte_to_unit(mo[2]),
            byte_to_unit(mo[3]),
            byte_to_unit(mo[4]),
            byte_to_unit(mo[5]),
        ],
    )
    .ok()?;
    let attrs = AppearanceAttrs {
        head_shape: HeadShape::from_byte(sc[4])?,
        glasses: match sc[5] {
            0 => false,
            1 => true,
            _ => return None,
        },
        backdrop: Backdrop::from_byte(sc[6])?,
    };
    let (ax, ay) = (x0 + LEFT_EXTENT, y + 1);
    let cx = ax as f64 + if sc[7] & 1 != 0 { 0.5 } else { 0.0 };
    let cy = ay as f64 + if sc[7] & 2 != 0 { 0.5 } else { 0.0 };
    let placement = Placement::new(
        (cx, cy),
        (bytes_to_radius(sc[0], sc[1]), bytes_to_radius(sc[2], sc[3])),
    );
    Some(DecodedFace {
        identity,
        motion,
        attrs,
        placement,
    })
}

/// The face with the largest base ellipse; the first one on ties.
pub fn largest_face(frame: &FrameImage) -> Option<DecodedFace> {
    decode_faces(frame)
        .into_iter()
        .fold(None, |best, face| match best {
            Some(b) if b.placement.area() >= face.placement.area() => Some(b),
            _ => Some(face),
        })
}

/// Identity and motion of the largest avatar, or `None` when no intact
/// fiducials are present.
pub fn decode_latents(frame: &FrameImage) -> Option<(IdentityLatent, MotionLatent)> {
    largest_face(frame).map(|f| (f.identity, f.motion))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_maps_round_trip() {
        for b in 0..=255u8 {
            assert_eq!(yaw_to_byte(byte_to_yaw(b)), b);
            assert_eq!(pitch_to_byte(byte_to_pitch(b)), b);
            assert_eq!(unit_to_byte(byte_to_unit(b)), b);
        }
        assert_eq!(byte_to_yaw(0), -45.0);
        assert_eq!(byte_to_yaw(255), 45.0);
        assert_eq!(byte_to_pitch(255), 30.0);
    }

    #[test]
    fn checksum_detects_single_byte_change() {
        let a = checksum(7, &[1, 2, 3, 4]);
        let b = checksum(7, &[1, 2, 4, 3]);
        assert_ne!(a, b);
    }
}
