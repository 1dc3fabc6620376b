//! Shared domain types and the distance math every metric is built from.
//!
//! Frames hold interleaved RGB intensities in `[0, 1]`. 8-bit sources are
//! divided by 255 on ingest, so anything read from disk or rendered by the
//! synthetic world is exactly representable and survives a PNG round trip.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identity embeddings live in a 512-dimensional space.
pub const IDENTITY_DIM: usize = 512;
/// Expression embeddings live in a 16-dimensional space.
pub const EXPRESSION_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("frame dimensions must be at least 1x1, got {width}x{height}")]
    EmptyFrame { width: usize, height: usize },
    #[error("expected {expected} pixel values for the frame, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("pixel value {value} at offset {offset} is outside [0, 1]")]
    PixelOutOfRange { offset: usize, value: f32 },
    #[error("mask raster has {actual} cells, expected {expected}")]
    MaskCellCount { expected: usize, actual: usize },
    #[error("caption text is empty")]
    EmptyCaption,
    #[error("{kind} embedding must have {expected} entries, got {actual}")]
    EmbeddingDim {
        kind: EmbeddingKind,
        expected: usize,
        actual: usize,
    },
    #[error("embedding entry {index} is not finite")]
    NonFiniteEmbedding { index: usize },
}

/// One RGB frame, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    pub frame_index: usize,
}

impl FrameImage {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        frame_index: usize,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyFrame { width, height });
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ModelError::PixelCount {
                expected,
                actual: pixels.len(),
            });
        }
        if let Some((offset, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ModelError::PixelOutOfRange { offset, value });
        }
        Ok(Self {
            width,
            height,
            pixels,
            frame_index,
        })
    }

    /// A frame filled with a single colour.
    pub fn filled(
        width: usize,
        height: usize,
        rgb: [f32; 3],
        frame_index: usize,
    ) -> Result<Self, ModelError> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, pixels, frame_index)
    }

    /// Ingest 8-bit interleaved RGB.
    pub fn from_rgb8(
        width: usize,
        height: usize,
        bytes: &[u8],
        frame_index: usize,
    ) -> Result<Self, ModelError> {
        let pixels = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(width, height, pixels, frame_index)
    }

    /// Quantize to 8-bit interleaved RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize_u8(v)).collect()
    }

    /// True when every channel is exactly `k / 255` for some integer `k`.
    pub fn is_8bit_exact(&self) -> bool {
        self.pixels
            .iter()
            .all(|&v| f32::from(quantize_u8(v)) / 255.0 == v)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// Writes one pixel; values are clamped into `[0, 1]`.
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let o = (y * self.width + x) * 3;
        for (c, v) in rgb.iter().enumerate() {
            self.pixels[o + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Copy of the rectangle `[x0, x0 + w) x [y0, y0 + h)`, clipped to the frame.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Option<FrameImage> {
        let x1 = (x0 + w).min(self.width);
        let y1 = (y0 + h).min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        let mut pixels = Vec::with_capacity((x1 - x0) * (y1 - y0) * 3);
        for y in y0..y1 {
            let start = (y * self.width + x0) * 3;
            let end = (y * self.width + x1) * 3;
            pixels.extend_from_slice(&self.pixels[start..end]);
        }
        Some(FrameImage {
            width: x1 - x0,
            height: y1 - y0,
            pixels,
            frame_index: self.frame_index,
        })
    }
}

pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// An ordered sequence of equally sized frames.
///
/// Construction does not validate; call [`validate_clip`] (or
/// [`VideoClip::validated`]) wherever an invalid clip must be rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<FrameImage>,
    pub fps: f64,
    pub clip_id: String,
}

impl VideoClip {
    pub fn new(clip_id: impl Into<String>, fps: f64, frames: Vec<FrameImage>) -> Self {
        Self {
            frames,
            fps,
            clip_id: clip_id.into(),
        }
    }

    pub fn validated(self) -> Result<Self, Vec<ClipViolation>> {
        let violations = validate_clip(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(violations)
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of the first frame.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(FrameImage::dims)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClipViolation {
    EmptyClip,
    NonPositiveFps(f64),
    InconsistentFrameDimensions {
        frame: usize,
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

impl fmt::Display for ClipViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyClip => write!(f, "empty clip"),
            Self::NonPositiveFps(fps) => write!(f, "non-positive fps ({fps})"),
            Self::InconsistentFrameDimensions {
                frame,
                expected,
                actual,
            } => write!(
                f,
                "inconsistent frame dimensions: frame {frame} is {}x{}, expected {}x{}",
                actual.0, actual.1, expected.0, expected.1
            ),
        }
    }
}

/// Lists every violated clip invariant; an empty list means the clip is valid.
///
/// Pixel range and non-empty frame dimensions are enforced by [`FrameImage`]'s
/// constructor and cannot be violated here.
pub fn validate_clip(clip: &VideoClip) -> Vec<ClipViolation> {
    let mut violations = Vec::new();
    if clip.frames.is_empty() {
        violations.push(ClipViolation::EmptyClip);
    }
    if !(clip.fps.is_finite() && clip.fps > 0.0) {
        violations.push(ClipViolation::NonPositiveFps(clip.fps));
    }
    if let Some(first) = clip.frames.first() {
        let expected = first.dims();
        for (i, frame) in clip.frames.iter().enumerate().skip(1) {
            if frame.dims() != expected {
                violations.push(ClipViolation::InconsistentFrameDimensions {
                    frame: i,
                    expected,
                    actual: frame.dims(),
                });
            }
        }
    }
    violations
}

/// Binary raster; `true` marks a pixel to regenerate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    pub dilation_px: u32,
}

impl FaceMask {
    pub fn new(
        width: usize,
        height: usize,
        bits: Vec<bool>,
        dilation_px: u32,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyFrame { width, height });
        }
        if bits.len() != width * height {
            return Err(ModelError::MaskCellCount {
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
            dilation_px,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, ModelError> {
        Self::new(width, height, vec![false; width * height], 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when every set cell of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &FaceMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Generated,
    UserOverride,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    text: String,
    pub source: CaptionSource,
}

impl Caption {
    pub fn new(text: impl Into<String>, source: CaptionSource) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyCaption);
        }
        Ok(Self { text, source })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Prepends `prefix` separated by a single space. Blank prefixes are ignored.
    pub fn with_prefix(&self, prefix: &str) -> Caption {
        let prefix = prefix.trim();
        if prefix.is_empty() {
            return self.clone();
        }
        Caption {
            text: format!("{prefix} {}", self.text),
            source: self.source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Identity,
    Expression,
}

impl EmbeddingKind {
    pub fn dim(self) -> usize {
        match self {
            Self::Identity => IDENTITY_DIM,
            Self::Expression => EXPRESSION_DIM,
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Expression => "expression",
        })
    }
}

/// Fixed-dimension embedding of one face crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    kind: EmbeddingKind,
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(kind: EmbeddingKind, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != kind.dim() {
            return Err(ModelError::EmbeddingDim {
                kind,
                expected: kind.dim(),
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteEmbedding { index });
        }
        Ok(Self { kind, values })
    }

    /// Zero-pads `prefix` to the kind's dimension.
    pub fn zero_padded(kind: EmbeddingKind, prefix: &[f64]) -> Result<Self, ModelError> {
        if prefix.len() > kind.dim() {
            return Err(ModelError::EmbeddingDim {
                kind,
                expected: kind.dim(),
                actual: prefix.len(),
            });
        }
        let mut values = vec![0.0; kind.dim()];
        values[..prefix.len()].copy_from_slice(prefix);
        Self::new(kind, values)
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Cosine,
    Euclidean,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 2] = [DistanceMetric::Cosine, DistanceMetric::Euclidean];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cosine => "cosine",
            Self::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistanceError {
    #[error("cannot compare a {left} embedding with a {right} embedding")]
    KindMismatch {
        left: EmbeddingKind,
        right: EmbeddingKind,
    },
    #[error("cosine distance is undefined for an all-zero vector")]
    ZeroVectorCosine,
    #[error("cannot normalize an all-zero vector")]
    ZeroVector,
}

/// Cosine distance (`1 - cos`, in `[0, 2]`) or Euclidean distance between
/// two embeddings of the same kind. Vectors are used as given; callers that
/// want unit-norm identity embeddings normalize them upstream.
pub fn embedding_distance(
    a: &EmbeddingVector,
    b: &EmbeddingVector,
    metric: DistanceMetric,
) -> Result<f64, DistanceError> {
    if a.kind != b.kind {
        return Err(DistanceError::KindMismatch {
            left: a.kind,
            right: b.kind,
        });
    }
    match metric {
        DistanceMetric::Cosine => cosine_distance(&a.values, &b.values),
        DistanceMetric::Euclidean => Ok(euclidean_distance(&a.values, &b.values)),
    }
}

fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, DistanceError> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(DistanceError::ZeroVectorCosine);
    }
    if a == b {
        // Rounding in the norms would otherwise leave ~1e-16.
        return Ok(0.0);
    }
    // Multiplication order matters for exact symmetry: sqrt(na)*sqrt(nb) commutes.
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scales `v` to unit L2 norm, keeping its kind and direction.
pub fn l2_normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, DistanceError> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DistanceError::ZeroVector);
    }
    Ok(EmbeddingVector {
        kind: v.kind,
        values: v.values.iter().map(|x| x / norm).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, idx: usize) -> FrameImage {
        FrameImage::filled(w, h, [0.5, 0.5, 0.5], idx).unwrap()
    }

    fn id_vec(prefix: &[f64]) -> EmbeddingVector {
        EmbeddingVector::zero_padded(EmbeddingKind::Identity, prefix).unwrap()
    }

    #[test]
    fn valid_clip_has_no_violations() {
        let clip = VideoClip::new("c", 25.0, (0..3).map(|i| frame(64, 64, i)).collect());
        assert!(validate_clip(&clip).is_empty());
    }

    #[test]
    fn mismatched_frame_is_reported() {
        let clip = VideoClip::new(
            "c",
            25.0,
            vec![frame(64, 64, 0), frame(64, 64, 1), frame(64, 32, 2)],
        );
        let v = validate_clip(&clip);
        assert_eq!(v.len(), 1);
        assert!(v[0]
            .to_string()
            .starts_with("inconsistent frame dimensions"));
    }

    #[test]
    fn empty_clip_is_reported() {
        let clip = VideoClip::new("c", 25.0, vec![]);
        let v = validate_clip(&clip);
        assert_eq!(v, vec![ClipViolation::EmptyClip]);
        assert_eq!(v[0].to_string(), "empty clip");
    }

    #[test]
    fn bad_fps_is_reported() {
        let clip = VideoClip::new("c", 0.0, vec![frame(4, 4, 0)]);
        assert_eq!(
            validate_clip(&clip),
            vec![ClipViolation::NonPositiveFps(0.0)]
        );
    }

    #[test]
    fn frame_rejects_out_of_range() {
        let err = FrameImage::new(1, 1, vec![0.0, 1.5, 0.0], 0).unwrap_err();
        assert!(matches!(err, ModelError::PixelOutOfRange { offset: 1, .. }));
        assert!(FrameImage::new(0, 1, vec![], 0).is_err());
    }

    #[test]
    fn rgb8_round_trip_is_exact() {
        let bytes: Vec<u8> = (0..=255).flat_map(|b| [b, 255 - b, b / 2]).collect();
        let f = FrameImage::from_rgb8(16, 16, &bytes, 0).unwrap();
        assert!(f.is_8bit_exact());
        assert_eq!(f.to_rgb8(), bytes);
    }

    #[test]
    fn caption_rejects_blank() {
        assert_eq!(
            Caption::new("  \t", CaptionSource::Generated).unwrap_err(),
            ModelError::EmptyCaption
        );
        let c = Caption::new("a person", CaptionSource::Generated).unwrap();
        assert_eq!(c.with_prefix("a photo of").text(), "a photo of a person");
        assert_eq!(c.with_prefix("  ").text(), "a person");
    }

    #[test]
    fn embedding_dims_are_enforced() {
        assert!(EmbeddingVector::new(EmbeddingKind::Identity, vec![0.0; 16]).is_err());
        assert!(EmbeddingVector::new(EmbeddingKind::Expression, vec![0.0; 16]).is_ok());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert_eq!(
            EmbeddingVector::new(EmbeddingKind::Expression, v).unwrap_err(),
            ModelError::NonFiniteEmbedding { index: 3 }
        );
    }

    #[test]
    fn distance_examples() {
        let e1 = id_vec(&[1.0, 0.0]);
        let e2 = id_vec(&[0.0, 1.0]);
        let neg = id_vec(&[-1.0, 0.0]);
        assert_eq!(
            embedding_distance(&e1, &e1, DistanceMetric::Cosine).unwrap(),
            0.0
        );
        let d = embedding_distance(&e1, &e2, DistanceMetric::Euclidean).unwrap();
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(
            embedding_distance(&e1, &neg, DistanceMetric::Cosine).unwrap(),
            2.0
        );
    }

    #[test]
    fn distance_errors() {
        let id = id_vec(&[1.0]);
        let ex = EmbeddingVector::zero_padded(EmbeddingKind::Expression, &[1.0]).unwrap();
        assert!(matches!(
            embedding_distance(&id, &ex, DistanceMetric::Euclidean),
            Err(DistanceError::KindMismatch { .. })
        ));
        let zero = id_vec(&[]);
        assert_eq!(
            embedding_distance(&id, &zero, DistanceMetric::Cosine),
            Err(DistanceError::ZeroVectorCosine)
        );
        assert_eq!(
            embedding_distance(&zero, &zero, DistanceMetric::Euclidean),
            Ok(0.0)
        );
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&id_vec(&[3.0, 4.0])).unwrap();
        assert!((n.values()[0] - 0.6).abs() < 1e-12);
        assert!((n.values()[1] - 0.8).abs() < 1e-12);
        assert!(n.values()[2..].iter().all(|v| *v == 0.0));
        assert_eq!(n.kind(), EmbeddingKind::Identity);
        let unit = id_vec(&[0.0, 1.0]);
        assert_eq!(l2_normalize(&unit).unwrap(), unit);
        assert_eq!(l2_normalize(&id_vec(&[])), Err(DistanceError::ZeroVector));
    }

    #[test]
    fn mask_subset_and_area() {
        let a = FaceMask::new(2, 2, vec![true, false, false, false], 0).unwrap();
        let b = FaceMask::new(2, 2, vec![true, true, false, false], 1).unwrap();
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(b.area(), 2);
        assert!(FaceMask::new(2, 2, vec![true], 0).is_err());
    }

    #[test]
    fn crop_clips_to_bounds() {
        let mut f = frame(4, 4, 7);
        f.set_rgb(3, 3, [1.0, 0.0, 0.0]);
        let c = f.crop(2, 2, 10, 10).unwrap();
        assert_eq!(c.dims(), (2, 2));
        assert_eq!(c.rgb(1, 1), [1.0, 0.0, 0.0]);
        assert_eq!(c.frame_index, 7);
        assert!(f.crop(4, 0, 1, 1).is_none());
    }
}
