//! Synthetic implementations of every backend contract.

use rand::Rng;

use super::fiducial::{largest_face, Canvas};
use super::render::{draw_avatar, fill_backdrop, AvatarInstance, HeadGeometry};
use super::trajectory::stream_rng;
use super::{decode_faces, AppearanceAttrs, IdentityLatent, IDENTITY_LATENT_DIM};
use crate::generation::{
    BackendError, BackendRegistry, Captioner, ContourDetector, Embedder, FaceCropper, Inpainter,
    PoseDetector, Reenactor, RegistryError, SYNTHETIC,
};
use crate::model::{EmbeddingKind, EmbeddingVector, FaceMask, FrameImage, VideoClip};
use crate::source_prep::{FaceContour, HeadPose};

/// The inpainter's new identity is at least this far (Euclidean, latent
/// space) from the identity it replaces.
pub const MIN_LATENT_DISTANCE: f64 = 0.5;

/// Pixels of context kept around the head when cropping.
const CROP_MARGIN: f64 = 2.0;

/// Registers every synthetic backend under [`SYNTHETIC`].
pub fn register(registry: &mut BackendRegistry) -> Result<(), RegistryError> {
    registry.register_pose_detector(SYNTHETIC, || Box::new(SyntheticPoseDetector))?;
    registry.register_contour_detector(SYNTHETIC, || Box::new(SyntheticContourDetector))?;
    registry.register_captioner(SYNTHETIC, || Box::new(SyntheticCaptioner))?;
    registry.register_inpainter(SYNTHETIC, || Box::new(SyntheticInpainter))?;
    registry.register_reenactor(SYNTHETIC, || Box::new(SyntheticReenactor))?;
    registry.register_face_cropper(SYNTHETIC, || Box::new(SyntheticFaceCropper))?;
    registry.register_embedder(SYNTHETIC, |kind| Box::new(SyntheticEmbedder::new(kind)))?;
    Ok(())
}

/// Fixed attribute-to-text template.
pub fn caption_for(attrs: &AppearanceAttrs) -> String {
    format!(
        "a person {} glasses, {} head, in front of a {} background",
        if attrs.glasses { "with" } else { "without" },
        attrs.head_shape.word(),
        attrs.backdrop.word()
    )
}

fn prompt_mentions_glasses(prompt: &str) -> bool {
    prompt.contains("with glasses") && !prompt.contains("without glasses")
}

/// Identity drawn for `seed`: the first of the draws `0, 1, 2, ...` that
/// lies at least [`MIN_LATENT_DISTANCE`] from `source`.
pub fn draw_identity(seed: u64, source: &IdentityLatent) -> IdentityLatent {
    (0u64..)
        .map(|draw| {
            let mut rng = stream_rng(seed, "inpaint-identity", draw);
            let mut z = [0.0; IDENTITY_LATENT_DIM];
            z.iter_mut().for_each(|v| *v = rng.gen_range(0.0..=1.0));
            IdentityLatent(z).quantized()
        })
        .find(|z| z.distance(source) >= MIN_LATENT_DISTANCE)
        .expect("uniform draws eventually leave any 0.5-ball in the unit cube")
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticPoseDetector;

impl PoseDetector for SyntheticPoseDetector {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn estimate(&mut self, frame: &FrameImage) -> Result<HeadPose, BackendError> {
        Ok(largest_face(frame).map_or(HeadPose::undetected(), |f| {
            HeadPose::new(f.motion.yaw, f.motion.pitch)
        }))
    }
}

/// Returns the rendered head-ellipse polygon of every avatar.
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticContourDetector;

impl ContourDetector for SyntheticContourDetector {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn detect(&mut self, frame: &FrameImage) -> Result<Vec<FaceContour>, BackendError> {
        decode_faces(frame)
            .iter()
            .map(|face| {
                let g = HeadGeometry::new(&face.placement, &face.motion);
                FaceContour::new(g.contour(frame.dims()))
                    .map_err(|e| BackendError::new(SYNTHETIC, e))
            })
            .collect()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticCaptioner;

impl Captioner for SyntheticCaptioner {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn caption(&mut self, frame: &FrameImage) -> Result<String, BackendError> {
        largest_face(frame)
            .map(|f| caption_for(&f.attrs))
            .ok_or_else(|| BackendError::new(SYNTHETIC, "no avatar to caption"))
    }
}

/// Redraws the largest avatar with a fresh seeded identity, keeping its
/// pose, head shape and backdrop. Glasses follow the prompt.
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticInpainter;

impl Inpainter for SyntheticInpainter {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn inpaint(
        &mut self,
        frame: &FrameImage,
        _mask: &FaceMask,
        prompt: &str,
        seed: u64,
    ) -> Result<FrameImage, BackendError> {
        let face = largest_face(frame)
            .ok_or_else(|| BackendError::new(SYNTHETIC, "no avatar under the mask"))?;
        let mut canvas = Canvas::from_frame(frame);
        let avatar = AvatarInstance {
            identity: draw_identity(seed, &face.identity),
            motion: face.motion,
            attrs: AppearanceAttrs {
                glasses: prompt_mentions_glasses(prompt),
                ..face.attrs
            },
            placement: face.placement,
        };
        draw_avatar(&mut canvas, &avatar);
        Ok(canvas.into_frame(frame.frame_index))
    }
}

/// Renders the still's avatar with each driving frame's decoded motion, at
/// the still's resolution. Driving frames without a face repeat the last
/// decoded motion (the first decodable one for a leading gap).
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticReenactor;

impl Reenactor for SyntheticReenactor {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn reenact(
        &mut self,
        still: &FrameImage,
        driving: &VideoClip,
    ) -> Result<Vec<FrameImage>, BackendError> {
        let twin = largest_face(still)
            .ok_or_else(|| BackendError::new(SYNTHETIC, "no avatar in the still image"))?;
        let motions: Vec<_> = driving
            .frames
            .iter()
            .map(|f| largest_face(f).map(|d| d.motion))
            .collect();
        let first = motions
            .iter()
            .flatten()
            .next()
            .copied()
            .ok_or_else(|| BackendError::new(SYNTHETIC, "no avatar in any driving frame"))?;

        let mut last = first;
        motions
            .into_iter()
            .enumerate()
            .map(|(t, motion)| {
                last = motion.unwrap_or(last);
                let mut canvas = Canvas::new(still.width(), still.height());
                fill_backdrop(&mut canvas, twin.attrs.backdrop);
                draw_avatar(
                    &mut canvas,
                    &AvatarInstance {
                        identity: twin.identity,
                        motion: last,
                        attrs: twin.attrs,
                        placement: twin.placement,
                    },
                );
                Ok(canvas.into_frame(t))
            })
            .collect()
    }
}

/// Crops the largest avatar's head box.
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticFaceCropper;

impl FaceCropper for SyntheticFaceCropper {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn crop(&mut self, frame: &FrameImage) -> Result<Option<FrameImage>, BackendError> {
        Ok(largest_face(frame).and_then(|face| {
            let g = HeadGeometry::new(&face.placement, &face.motion);
            let (x, y, w, h) = g.bounding_box(frame.dims(), CROP_MARGIN);
            frame.crop(x, y, w, h)
        }))
    }
}

/// Identity: the decoded identity latent zero-padded to 512.
/// Expression: `(yaw/45, pitch/30, e0..e3)` zero-padded to 16.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticEmbedder {
    kind: EmbeddingKind,
}

impl SyntheticEmbedder {
    pub fn new(kind: EmbeddingKind) -> Self {
        Self { kind }
    }
}

impl Embedder for SyntheticEmbedder {
    fn name(&self) -> &str {
        SYNTHETIC
    }

    fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    fn embed(&mut self, crop: &FrameImage) -> Result<EmbeddingVector, BackendError> {
        let face = largest_face(crop)
            .ok_or_else(|| BackendError::new(SYNTHETIC, "no avatar in the crop"))?;
        let prefix: Vec<f64> = match self.kind {
            EmbeddingKind::Identity => face.identity.values().to_vec(),
            EmbeddingKind::Expression => face.motion.embedding_prefix().to_vec(),
        };
        EmbeddingVector::zero_padded(self.kind, &prefix)
            .map_err(|e| BackendError::new(SYNTHETIC, e))
    }
}
