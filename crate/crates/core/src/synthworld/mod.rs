//! Deterministic avatar world implementing every backend contract.
//!
//! Each rendered avatar carries its identity and motion latents in fiducial
//! pixel blocks (8-bit quantized), so decoding recovers them exactly. That
//! makes every pipeline and evaluation quantity computable from latents
//! alone, independently of the code under test.

mod adapters;
mod fiducial;
mod render;
mod trajectory;

pub use adapters::{
    caption_for, draw_identity, register, SyntheticCaptioner, SyntheticContourDetector,
    SyntheticEmbedder, SyntheticFaceCropper, SyntheticInpainter, SyntheticPoseDetector,
    SyntheticReenactor, MIN_LATENT_DISTANCE,
};
pub use fiducial::{decode_faces, decode_latents, largest_face, DecodedFace};
pub use render::{
    render_frame, render_scene, AvatarInstance, HeadGeometry, CONTOUR_VERTICES, MIN_RENDER_DIM,
};
pub use trajectory::{
    make_motion, make_trajectory, random_attrs, random_identity, AvatarTrajectory, FRONTAL_WINDOW,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fiducial::{
    byte_to_pitch, byte_to_unit, byte_to_yaw, pitch_to_byte, unit_to_byte, yaw_to_byte,
    LEFT_EXTENT, RIGHT_EXTENT,
};

pub const IDENTITY_LATENT_DIM: usize = 8;
pub const EXPRESSION_LATENT_DIM: usize = 4;
pub const MAX_YAW: f64 = 45.0;
pub const MAX_PITCH: f64 = 30.0;
/// Largest per-entry decode error of any latent, in latent units.
pub const QUANTIZATION_STEP: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("render dimensions {width}x{height} are below the {MIN_RENDER_DIM}x{MIN_RENDER_DIM} minimum")]
    DimsTooSmall { width: usize, height: usize },
    #[error("latent out of range: {0}")]
    LatentOutOfRange(String),
    #[error("avatar placement does not fit the frame: {0}")]
    Placement(String),
}

/// Identity stand-in: 8 entries in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityLatent([f64; IDENTITY_LATENT_DIM]);

impl IdentityLatent {
    pub fn new(z: [f64; IDENTITY_LATENT_DIM]) -> Result<Self, SynthError> {
        if let Some(v) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SynthError::LatentOutOfRange(format!("identity entry {v}")));
        }
        Ok(Self(z))
    }

    pub fn values(&self) -> &[f64; IDENTITY_LATENT_DIM] {
        &self.0
    }

    /// Snapped to the 8-bit grid the fiducials store.
    pub fn quantized(&self) -> Self {
        Self(self.0.map(|v| byte_to_unit(unit_to_byte(v))))
    }

    pub fn distance(&self, other: &IdentityLatent) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Head pose in degrees plus four expression channels in `[0, 1]`:
/// mouth openness, mouth width, brow raise, eye openness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLatent {
    pub yaw: f64,
    pub pitch: f64,
    pub expression: [f64; EXPRESSION_LATENT_DIM],
}

impl MotionLatent {
    pub fn new(
        yaw: f64,
        pitch: f64,
        expression: [f64; EXPRESSION_LATENT_DIM],
    ) -> Result<Self, SynthError> {
        if !(-MAX_YAW..=MAX_YAW).contains(&yaw) {
            return Err(SynthError::LatentOutOfRange(format!("yaw {yaw}")));
        }
        if !(-MAX_PITCH..=MAX_PITCH).contains(&pitch) {
            return Err(SynthError::LatentOutOfRange(format!("pitch {pitch}")));
        }
        if let Some(v) = expression.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SynthError::LatentOutOfRange(format!(
                "expression entry {v}"
            )));
        }
        Ok(Self {
            yaw,
            pitch,
            expression,
        })
    }

    pub fn frontal() -> Self {
        Self {
            yaw: 0.0,
            pitch: 0.0,
            expression: [0.5; EXPRESSION_LATENT_DIM],
        }
    }

    pub fn quantized(&self) -> Self {
        Self {
            yaw: byte_to_yaw(yaw_to_byte(self.yaw)),
            pitch: byte_to_pitch(pitch_to_byte(self.pitch)),
            expression: self.expression.map(|v| byte_to_unit(unit_to_byte(v))),
        }
    }

    /// `(yaw/45, pitch/30, e0, e1, e2, e3)`, the expression-embedding prefix.
    pub fn embedding_prefix(&self) -> [f64; 2 + EXPRESSION_LATENT_DIM] {
        let e = self.expression;
        [
            self.yaw / MAX_YAW,
            self.pitch / MAX_PITCH,
            e[0],
            e[1],
            e[2],
            e[3],
        ]
    }

    /// Largest per-entry difference after normalizing pose to `[-1, 1]`.
    pub fn max_abs_diff(&self, other: &MotionLatent) -> f64 {
        self.embedding_prefix()
            .iter()
            .zip(other.embedding_prefix())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadShape {
    Round = 0,
    Oval = 1,
    Long = 2,
}

impl HeadShape {
    pub const ALL: [HeadShape; 3] = [HeadShape::Round, HeadShape::Oval, HeadShape::Long];

    fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }

    /// Multipliers on the default head radii.
    fn scale(self) -> (f64, f64) {
        match self {
            Self::Round => (1.0, 0.9),
            Self::Oval => (0.9, 1.0),
            Self::Long => (0.8, 1.05),
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Self::Round => "round",
            Self::Oval => "oval",
            Self::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backdrop {
    Blue = 0,
    Green = 1,
    Grey = 2,
    Warm = 3,
}

impl Backdrop {
    pub const ALL: [Backdrop; 4] = [
        Backdrop::Blue,
        Backdrop::Green,
        Backdrop::Grey,
        Backdrop::Warm,
    ];

    fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }

    fn rgb(self) -> [f64; 3] {
        match self {
            Self::Blue => [0.25, 0.35, 0.70],
            Self::Green => [0.30, 0.60, 0.35],
            Self::Grey => [0.55, 0.55, 0.55],
            Self::Warm => [0.75, 0.55, 0.35],
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Self::Blue => "blue",
            Self::Green => "green",
            Self::Grey => "grey",
            Self::Warm => "warm-toned",
        }
    }
}

/// Appearance that is not identity: accessories, head shape, surroundings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AppearanceAttrs {
    pub glasses: bool,
    pub head_shape: HeadShape,
    pub backdrop: Backdrop,
}

impl Default for AppearanceAttrs {
    fn default() -> Self {
        Self {
            glasses: false,
            head_shape: HeadShape::Round,
            backdrop: Backdrop::Blue,
        }
    }
}

/// Where an avatar's base head ellipse sits. The centre is snapped to half
/// pixels and the radii to sixteenths so both survive the fiducial encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    center: (f64, f64),
    radii: (f64, f64),
}

impl Placement {
    pub fn new(center: (f64, f64), radii: (f64, f64)) -> Self {
        let half = |v: f64| (v * 2.0).round() / 2.0;
        let sixteenth = |v: f64| (v * 16.0).round().clamp(16.0, 65535.0) / 16.0;
        Self {
            center: (half(center.0), half(center.1)),
            radii: (sixteenth(radii.0), sixteenth(radii.1)),
        }
    }

    /// Default single-avatar placement for a frame.
    pub fn centred((width, height): (usize, usize), shape: HeadShape) -> Self {
        let (sx, sy) = shape.scale();
        Self::new(
            (width as f64 / 2.0, height as f64 / 2.0),
            (0.30 * width as f64 * sx, 0.36 * height as f64 * sy),
        )
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn radii(&self) -> (f64, f64) {
        self.radii
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radii.0 * self.radii.1
    }

    /// Pixel holding the centre of the fiducial blocks.
    pub fn anchor(&self) -> (usize, usize) {
        (
            self.center.0.floor() as usize,
            self.center.1.floor() as usize,
        )
    }

    /// The fiducial blocks must lie inside the frame and inside the
    /// head ellipse for every pose.
    pub fn check_fits(&self, (width, height): (usize, usize)) -> Result<(), SynthError> {
        let (cx, cy) = self.center;
        let (ax, ay) = (cx.floor(), cy.floor());
        if ax < LEFT_EXTENT as f64
            || ay < 1.0
            || ax + RIGHT_EXTENT as f64 >= width as f64
            || ay + 1.0 >= height as f64
        {
            return Err(SynthError::Placement(format!(
                "anchor ({ax}, {ay}) too close to the {width}x{height} frame edge"
            )));
        }
        // Worst case: head shifted by 12% of rx, shrunk by 8%; block corners.
        let (rx, ry) = self.radii;
        let dx = (ax - cx)
            .abs()
            .max((ax + 1.0 + RIGHT_EXTENT as f64 - cx).abs())
            .max((cx - (ax - LEFT_EXTENT as f64)).abs())
            + 0.12 * rx;
        let dy = (cy - (ay - 1.0)).abs().max((ay + 2.0 - cy).abs()) + 0.10 * ry;
        let r = (dx / (0.92 * rx)).powi(2) + (dy / (0.95 * ry)).powi(2);
        if r > 0.9 {
            return Err(SynthError::Placement(format!(
                "head radii ({rx}, {ry}) too small for the fiducial blocks"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
