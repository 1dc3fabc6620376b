//! Adapter contracts for every pluggable model.
//!
//! A handle is used by one worker at a time (`&mut self`); run parallel
//! workers by instantiating one handle each from the registry.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EmbeddingKind, EmbeddingVector, FaceMask, FrameImage, VideoClip};
use crate::source_prep::{FaceContour, HeadPose};

/// A backend crashed or returned something unusable. Distinct from
/// "no face found", which backends report through their return values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("backend `{backend}` failed: {message}")]
pub struct BackendError {
    pub backend: String,
    pub message: String,
}

impl BackendError {
    pub fn new(backend: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            backend: backend.into(),
            message: message.to_string(),
        }
    }
}

/// Head-pose estimation (yaw, pitch in degrees).
pub trait PoseDetector: Send {
    fn name(&self) -> &str;
    fn estimate(&mut self, frame: &FrameImage) -> Result<HeadPose, BackendError>;
}

/// Face-oval contour extraction. Returns one contour per face found.
pub trait ContourDetector: Send {
    fn name(&self) -> &str;
    fn detect(&mut self, frame: &FrameImage) -> Result<Vec<FaceContour>, BackendError>;
}

/// Image captioning. An empty string is treated as a failure by the caller.
pub trait Captioner: Send {
    fn name(&self) -> &str;
    fn caption(&mut self, frame: &FrameImage) -> Result<String, BackendError>;
}

/// Masked inpainting conditioned on a text prompt.
///
/// The returned image must match the input dimensions. Pixels outside the
/// mask are discarded by the framework, so backends may touch them freely.
pub trait Inpainter: Send {
    fn name(&self) -> &str;
    fn inpaint(
        &mut self,
        frame: &FrameImage,
        mask: &FaceMask,
        prompt: &str,
        seed: u64,
    ) -> Result<FrameImage, BackendError>;
}

/// Face re-enactment: animates `still` with the motion of `driving`.
///
/// Must return exactly one frame per driving frame, all the same size.
pub trait Reenactor: Send {
    fn name(&self) -> &str;
    fn reenact(
        &mut self,
        still: &FrameImage,
        driving: &VideoClip,
    ) -> Result<Vec<FrameImage>, BackendError>;
}

/// Face localisation for evaluation; `None` when the frame has no face.
pub trait FaceCropper: Send {
    fn name(&self) -> &str;
    fn crop(&mut self, frame: &FrameImage) -> Result<Option<FrameImage>, BackendError>;
}

/// Embeds a face crop. Identity embedders that model a FaceNet-style
/// network should return unit-norm vectors; the evaluation uses vectors
/// exactly as returned.
pub trait Embedder: Send {
    fn name(&self) -> &str;
    fn kind(&self) -> EmbeddingKind;
    fn embed(&mut self, crop: &FrameImage) -> Result<EmbeddingVector, BackendError>;
}
