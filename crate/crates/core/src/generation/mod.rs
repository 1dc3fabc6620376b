//! Captioning, inpainting and re-enactment through pluggable backends.
//!
//! The framework owns two guarantees regardless of backend behaviour: the
//! D-Twin equals the source frame outside the mask, and a failed inpainting
//! attempt is retried with the next seed up to `max_retries` times.

mod backend;
mod registry;

pub use backend::{
    BackendError, Captioner, ContourDetector, Embedder, FaceCropper, Inpainter, PoseDetector,
    Reenactor,
};
pub use registry::{
    BackendCategory, BackendRegistry, BackendSelection, EvaluationBackends, GenerationBackends,
    RegistryError, SYNTHETIC,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_clip, Caption, CaptionSource, FaceMask, FrameImage, VideoClip};
use crate::source_prep::{
    build_mask, detect_face_contour, select_source_frame, DilationPolicy, SourcePrepError,
    SourceSelection,
};

pub const DEFAULT_MAX_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error(transparent)]
    SourcePrep(#[from] SourcePrepError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("inpainting failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: BackendError },
    #[error("captioner `{0}` returned an empty caption")]
    EmptyCaption(String),
    #[error("mask does not fit the frame: {0}")]
    MaskMismatch(String),
    #[error("driving clip has no frames")]
    EmptyDriving,
    #[error("invalid clip: {0}")]
    InvalidClip(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationParams {
    pub seed: u64,
    pub prompt_prefix: Option<String>,
    pub max_retries: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            seed: 0,
            prompt_prefix: None,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

/// The source frame with its face regenerated under a new identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DTwin {
    pub image: FrameImage,
    /// Seed of the attempt that succeeded.
    pub seed: u64,
    pub caption_used: Caption,
    pub source_frame_index: usize,
}

/// Everything produced on the way to a D-Twin, kept for caching and audit.
#[derive(Debug, Clone, PartialEq)]
pub struct DTwinBundle {
    pub dtwin: DTwin,
    pub selection: SourceSelection,
    pub mask: FaceMask,
    pub caption: Caption,
    pub warnings: Vec<String>,
}

pub fn caption_image(
    frame: &FrameImage,
    captioner: &mut dyn Captioner,
) -> Result<Caption, GenerationError> {
    let text = captioner.caption(frame)?;
    Caption::new(text, CaptionSource::Generated)
        .map_err(|_| GenerationError::EmptyCaption(captioner.name().into()))
}

/// `backend * mask + source * (1 - mask)`.
pub fn composite(source: &FrameImage, generated: &FrameImage, mask: &FaceMask) -> FrameImage {
    let mut out = source.clone();
    for y in 0..source.height() {
        for x in 0..source.width() {
            if mask.get(x, y) {
                out.set_rgb(x, y, generated.rgb(x, y));
            }
        }
    }
    out
}

/// Inpaints the masked region, retrying with `seed + k` on backend failure.
pub fn inpaint_face(
    frame: &FrameImage,
    mask: &FaceMask,
    caption: &Caption,
    params: &GenerationParams,
    inpainter: &mut dyn Inpainter,
) -> Result<DTwin, GenerationError> {
    if mask.dims() != frame.dims() {
        return Err(GenerationError::MaskMismatch(format!(
            "mask is {}x{}, frame is {}x{}",
            mask.width(),
            mask.height(),
            frame.width(),
            frame.height()
        )));
    }
    if mask.area() == 0 {
        return Err(GenerationError::MaskMismatch(
            "mask selects no pixels".into(),
        ));
    }
    let caption_used = match &params.prompt_prefix {
        Some(prefix) => caption.with_prefix(prefix),
        None => caption.clone(),
    };

    let mut last = None;
    for attempt in 0..=params.max_retries {
        let seed = params.seed.wrapping_add(u64::from(attempt));
        let result = inpainter
            .inpaint(frame, mask, caption_used.text(), seed)
            .and_then(|img| {
                if img.dims() == frame.dims() {
                    Ok(img)
                } else {
                    Err(BackendError::new(
                        inpainter.name(),
                        format!(
                            "returned {}x{} for a {}x{} frame",
                            img.width(),
                            img.height(),
                            frame.width(),
                            frame.height()
                        ),
                    ))
                }
            });
        match result {
            Ok(generated) => {
                let mut image = composite(frame, &generated, mask);
                image.frame_index = frame.frame_index;
                return Ok(DTwin {
                    image,
                    seed,
                    caption_used,
                    source_frame_index: frame.frame_index,
                });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(GenerationError::RetriesExhausted {
        attempts: params.max_retries + 1,
        last: last.expect("at least one attempt ran"),
    })
}

/// Animates the D-Twin with the driving clip's motion.
pub fn reenact(
    dtwin: &DTwin,
    driving: &VideoClip,
    reenactor: &mut dyn Reenactor,
) -> Result<VideoClip, GenerationError> {
    if driving.is_empty() {
        return Err(GenerationError::EmptyDriving);
    }
    let violations = validate_clip(driving);
    if !violations.is_empty() {
        return Err(GenerationError::InvalidClip(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    let frames = reenactor.reenact(&dtwin.image, driving)?;
    if frames.len() != driving.len() {
        return Err(BackendError::new(
            reenactor.name(),
            format!(
                "returned {} frames for {} driving frames",
                frames.len(),
                driving.len()
            ),
        )
        .into());
    }
    let frames: Vec<FrameImage> = frames
        .into_iter()
        .enumerate()
        .map(|(i, mut f)| {
            f.frame_index = i;
            f
        })
        .collect();
    let out = VideoClip::new(driving.clip_id.clone(), driving.fps, frames);
    if let Some(v) = validate_clip(&out).first() {
        return Err(BackendError::new(reenactor.name(), v).into());
    }
    Ok(out)
}

/// Source frame -> contour -> mask -> caption -> inpainted D-Twin.
pub fn generate_dtwin(
    clip: &VideoClip,
    params: &GenerationParams,
    dilation: DilationPolicy,
    backends: &mut GenerationBackends,
) -> Result<DTwinBundle, GenerationError> {
    let selection = select_source_frame(clip, backends.pose_detector.as_mut())?;
    let source = &clip.frames[selection.frame_index];
    let (mask, warnings) = prepare_mask(source, dilation, backends.contour_detector.as_mut())?;
    let caption = caption_image(source, backends.captioner.as_mut())?;
    let dtwin = inpaint_face(source, &mask, &caption, params, backends.inpainter.as_mut())?;
    Ok(DTwinBundle {
        dtwin,
        selection,
        mask,
        caption,
        warnings,
    })
}

/// Contour detection plus rasterization for one frame.
pub fn prepare_mask(
    frame: &FrameImage,
    dilation: DilationPolicy,
    detector: &mut dyn ContourDetector,
) -> Result<(FaceMask, Vec<String>), GenerationError> {
    let detection = detect_face_contour(frame, detector)?;
    let px = dilation.resolve(&detection.contour);
    let mask = build_mask(&detection.contour, frame.dims(), px)?;
    Ok((mask, detection.warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedCaption(&'static str);

    impl Captioner for FixedCaption {
        fn name(&self) -> &str {
            "fixed"
        }
        fn caption(&mut self, _: &FrameImage) -> Result<String, BackendError> {
            Ok(self.0.into())
        }
    }

    /// Fails until `succeed_at`, then returns white everywhere.
    struct Flaky {
        calls: Vec<u64>,
        succeed_at: usize,
    }

    impl Inpainter for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn inpaint(
            &mut self,
            frame: &FrameImage,
            _: &FaceMask,
            _: &str,
            seed: u64,
        ) -> Result<FrameImage, BackendError> {
            self.calls.push(seed);
            if self.calls.len() > self.succeed_at {
                Ok(FrameImage::filled(frame.width(), frame.height(), [1.0; 3], 0).unwrap())
            } else {
                Err(BackendError::new("flaky", "boom"))
            }
        }
    }

    struct WrongSize;

    impl Inpainter for WrongSize {
        fn name(&self) -> &str {
            "wrong"
        }
        fn inpaint(
            &mut self,
            _: &FrameImage,
            _: &FaceMask,
            _: &str,
            _: u64,
        ) -> Result<FrameImage, BackendError> {
            Ok(FrameImage::filled(1, 1, [1.0; 3], 0).unwrap())
        }
    }

    fn frame() -> FrameImage {
        FrameImage::filled(4, 4, [0.2, 0.4, 0.6], 3).unwrap()
    }

    fn centre_mask() -> FaceMask {
        let bits = (0..16).map(|i| matches!(i, 5 | 6 | 9 | 10)).collect();
        FaceMask::new(4, 4, bits, 0).unwrap()
    }

    fn caption() -> Caption {
        Caption::new("a person", CaptionSource::Generated).unwrap()
    }

    #[test]
    fn empty_caption_is_rejected() {
        let err = caption_image(&frame(), &mut FixedCaption("")).unwrap_err();
        assert_eq!(err, GenerationError::EmptyCaption("fixed".into()));
        let c = caption_image(&frame(), &mut FixedCaption("hello")).unwrap();
        assert_eq!((c.text(), c.source), ("hello", CaptionSource::Generated));
    }

    #[test]
    fn compositing_keeps_outside_pixels() {
        let mut inp = Flaky {
            calls: vec![],
            succeed_at: 0,
        };
        let params = GenerationParams::default();
        let t = inpaint_face(&frame(), &centre_mask(), &caption(), &params, &mut inp).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expected = if centre_mask().get(x, y) {
                    [1.0; 3]
                } else {
                    frame().rgb(x, y)
                };
                assert_eq!(t.image.rgb(x, y), expected);
            }
        }
        assert_eq!(t.source_frame_index, 3);
        assert_eq!(t.image.frame_index, 3);
    }

    #[test]
    fn retries_increment_seed() {
        let mut inp = Flaky {
            calls: vec![],
            succeed_at: 2,
        };
        let params = GenerationParams {
            seed: 10,
            max_retries: 2,
            ..Default::default()
        };
        let t = inpaint_face(&frame(), &centre_mask(), &caption(), &params, &mut inp).unwrap();
        assert_eq!(inp.calls, vec![10, 11, 12]);
        assert_eq!(t.seed, 12);
    }

    #[test]
    fn retries_are_bounded() {
        let mut inp = Flaky {
            calls: vec![],
            succeed_at: usize::MAX,
        };
        let params = GenerationParams {
            seed: 0,
            max_retries: 3,
            ..Default::default()
        };
        let err =
            inpaint_face(&frame(), &centre_mask(), &caption(), &params, &mut inp).unwrap_err();
        assert!(matches!(
            err,
            GenerationError::RetriesExhausted { attempts: 4, .. }
        ));
        assert_eq!(inp.calls.len(), 4);
    }

    #[test]
    fn wrong_output_size_counts_as_failure() {
        let params = GenerationParams {
            max_retries: 0,
            ..Default::default()
        };
        let err = inpaint_face(
            &frame(),
            &centre_mask(),
            &caption(),
            &params,
            &mut WrongSize,
        );
        assert!(matches!(
            err,
            Err(GenerationError::RetriesExhausted { attempts: 1, .. })
        ));
    }

    #[test]
    fn mask_preconditions() {
        let mut inp = Flaky {
            calls: vec![],
            succeed_at: 0,
        };
        let params = GenerationParams::default();
        let empty = FaceMask::empty(4, 4).unwrap();
        assert!(matches!(
            inpaint_face(&frame(), &empty, &caption(), &params, &mut inp),
            Err(GenerationError::MaskMismatch(_))
        ));
        let small = FaceMask::new(2, 2, vec![true; 4], 0).unwrap();
        assert!(matches!(
            inpaint_face(&frame(), &small, &caption(), &params, &mut inp),
            Err(GenerationError::MaskMismatch(_))
        ));
        assert!(inp.calls.is_empty());
    }

    #[test]
    fn prefix_is_applied_to_prompt() {
        let mut inp = Flaky {
            calls: vec![],
            succeed_at: 0,
        };
        let params = GenerationParams {
            prompt_prefix: Some("a photo of".into()),
            ..Default::default()
        };
        let t = inpaint_face(&frame(), &centre_mask(), &caption(), &params, &mut inp).unwrap();
        assert_eq!(t.caption_used.text(), "a photo of a person");
    }
}
