//! Source-frame selection and face-mask construction.
//!
//! The most frontal frame of the clip (minimum `yaw² + pitch²` over frames
//! where a face was found) becomes the frame to inpaint. Its face contour is
//! rasterized into a binary mask and dilated by a small margin.

mod mask;

pub use mask::{build_mask, dilate, rasterize_polygon};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{BackendError, ContourDetector, PoseDetector};
use crate::model::{validate_clip, ClipViolation, FrameImage, VideoClip};

/// Default mask margin as a fraction of the face bounding-box diagonal.
pub const DEFAULT_DILATION_FRACTION: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourcePrepError {
    #[error("invalid clip: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidClip(Vec<ClipViolation>),
    #[error("no detectable face in any of the {frames} frames")]
    NoDetectableFace { frames: usize },
    #[error("no face detected in frame")]
    NoFaceDetected,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("contour encloses zero area")]
    DegenerateContour,
    #[error("contour covers no pixel centre")]
    EmptyMask,
}

/// Head rotation in degrees. `yaw` is the horizontal pose, `pitch` the vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub yaw: f64,
    pub pitch: f64,
    pub detected: bool,
}

impl HeadPose {
    pub fn new(yaw: f64, pitch: f64) -> Self {
        Self {
            yaw,
            pitch,
            detected: true,
        }
    }

    pub fn undetected() -> Self {
        Self {
            yaw: 0.0,
            pitch: 0.0,
            detected: false,
        }
    }
}

/// Runs the pose backend on one frame.
pub fn estimate_pose(
    frame: &FrameImage,
    detector: &mut dyn PoseDetector,
) -> Result<HeadPose, SourcePrepError> {
    let pose = detector.estimate(frame)?;
    if pose.detected && !(pose.yaw.is_finite() && pose.pitch.is_finite()) {
        return Err(BackendError::new(
            detector.name(),
            format!("non-finite pose ({}, {})", pose.yaw, pose.pitch),
        )
        .into());
    }
    Ok(pose)
}

/// `yaw² + pitch²`, or `None` when no face was detected.
pub fn pose_score(pose: &HeadPose) -> Option<f64> {
    pose.detected
        .then_some(pose.yaw * pose.yaw + pose.pitch * pose.pitch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSelection {
    pub frame_index: usize,
    pub pose_scores: Vec<Option<f64>>,
    pub num_undetected: usize,
}

impl SourceSelection {
    /// Picks the first frame holding the minimum present score.
    pub fn from_scores(pose_scores: Vec<Option<f64>>) -> Result<Self, SourcePrepError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, score) in pose_scores.iter().enumerate() {
            if let Some(s) = *score {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
        }
        let num_undetected = pose_scores.iter().filter(|s| s.is_none()).count();
        match best {
            Some((frame_index, _)) => Ok(Self {
                frame_index,
                pose_scores,
                num_undetected,
            }),
            None => Err(SourcePrepError::NoDetectableFace {
                frames: pose_scores.len(),
            }),
        }
    }
}

/// Scores every frame and selects the most frontal one.
pub fn select_source_frame(
    clip: &VideoClip,
    detector: &mut dyn PoseDetector,
) -> Result<SourceSelection, SourcePrepError> {
    let violations = validate_clip(clip);
    if !violations.is_empty() {
        return Err(SourcePrepError::InvalidClip(violations));
    }
    let scores = clip
        .frames
        .iter()
        .map(|f| estimate_pose(f, detector).map(|p| pose_score(&p)))
        .collect::<Result<Vec<_>, _>>()?;
    SourceSelection::from_scores(scores)
}

/// Closed polygon in continuous pixel coordinates; pixel `(c, r)` covers
/// `[c, c + 1) x [r, r + 1)` and has its centre at `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceContour {
    points: Vec<(f64, f64)>,
}

impl FaceContour {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SourcePrepError> {
        if points.len() < 3 {
            return Err(SourcePrepError::InvalidContour(format!(
                "need at least 3 points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|(x, y)| !(x.is_finite() && y.is_finite()))
        {
            return Err(SourcePrepError::InvalidContour("non-finite point".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        )
    }

    pub fn bbox_area(&self) -> f64 {
        let (x0, y0, x1, y1) = self.bounding_box();
        (x1 - x0) * (y1 - y0)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (x0, y0, x1, y1) = self.bounding_box();
        (x1 - x0).hypot(y1 - y0)
    }

    /// Shoelace area (absolute).
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn within_bounds(&self, (width, height): (usize, usize)) -> bool {
        self.points
            .iter()
            .all(|&(x, y)| x >= 0.0 && y >= 0.0 && x <= width as f64 && y <= height as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourDetection {
    pub contour: FaceContour,
    pub warnings: Vec<String>,
}

/// Detects face contours and keeps the one with the largest bounding box.
pub fn detect_face_contour(
    frame: &FrameImage,
    detector: &mut dyn ContourDetector,
) -> Result<ContourDetection, SourcePrepError> {
    let contours = detector.detect(frame)?;
    let faces = contours.len();
    let contour = contours
        .into_iter()
        .enumerate()
        // max_by keeps the last maximum; reverse the index so ties go to the first face.
        .max_by(|(ia, a), (ib, b)| a.bbox_area().total_cmp(&b.bbox_area()).then(ib.cmp(ia)))
        .map(|(_, c)| c)
        .ok_or(SourcePrepError::NoFaceDetected)?;
    if !contour.within_bounds(frame.dims()) {
        return Err(SourcePrepError::InvalidContour(
            "contour leaves the frame".into(),
        ));
    }
    let mut warnings = Vec::new();
    if faces > 1 {
        warnings.push(format!(
            "{faces} faces detected in frame {}; using the largest",
            frame.frame_index
        ));
    }
    Ok(ContourDetection { contour, warnings })
}

/// How much to grow the rasterized contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DilationPolicy {
    Fixed(u32),
    /// Fraction of the contour's bounding-box diagonal, rounded up.
    FaceDiagonalFraction(f64),
}

impl Default for DilationPolicy {
    fn default() -> Self {
        Self::FaceDiagonalFraction(DEFAULT_DILATION_FRACTION)
    }
}

impl DilationPolicy {
    pub fn resolve(&self, contour: &FaceContour) -> u32 {
        match *self {
            Self::Fixed(px) => px,
            Self::FaceDiagonalFraction(f) => (f.max(0.0) * contour.bbox_diagonal()).ceil() as u32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted(Vec<HeadPose>);

    impl PoseDetector for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn estimate(&mut self, frame: &FrameImage) -> Result<HeadPose, BackendError> {
            Ok(self.0[frame.frame_index])
        }
    }

    struct Faces(Vec<FaceContour>);

    impl ContourDetector for Faces {
        fn name(&self) -> &str {
            "faces"
        }
        fn detect(&mut self, _: &FrameImage) -> Result<Vec<FaceContour>, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn tiny_clip(n: usize) -> VideoClip {
        VideoClip::new(
            "t",
            25.0,
            (0..n)
                .map(|i| FrameImage::filled(1, 1, [0.0; 3], i).unwrap())
                .collect(),
        )
    }

    fn square(x: f64, y: f64, s: f64) -> FaceContour {
        FaceContour::new(vec![(x, y), (x + s, y), (x + s, y + s), (x, y + s)]).unwrap()
    }

    #[test]
    fn pose_score_examples() {
        assert_eq!(pose_score(&HeadPose::new(2.0, 1.0)), Some(5.0));
        assert_eq!(pose_score(&HeadPose::new(0.0, 0.0)), Some(0.0));
        assert_eq!(pose_score(&HeadPose::undetected()), None);
        assert_eq!(
            pose_score(&HeadPose::new(-3.5, -1.25)),
            pose_score(&HeadPose::new(3.5, 1.25))
        );
    }

    #[test]
    fn selection_examples() {
        let s = SourceSelection::from_scores(vec![Some(125.0), Some(5.0), Some(64.0)]).unwrap();
        assert_eq!(s.frame_index, 1);
        let s = SourceSelection::from_scores(vec![Some(5.0), Some(5.0), Some(9.0)]).unwrap();
        assert_eq!(s.frame_index, 0);
        assert_eq!(
            SourceSelection::from_scores(vec![None, None]),
            Err(SourcePrepError::NoDetectableFace { frames: 2 })
        );
        let s = SourceSelection::from_scores(vec![None, Some(3.0), None]).unwrap();
        assert_eq!((s.frame_index, s.num_undetected), (1, 2));
    }

    #[test]
    fn select_runs_detector_per_frame() {
        let poses = vec![
            HeadPose::new(10.0, 5.0),
            HeadPose::undetected(),
            HeadPose::new(-1.0, 2.0),
        ];
        let s = select_source_frame(&tiny_clip(3), &mut Scripted(poses)).unwrap();
        assert_eq!(s.frame_index, 2);
        assert_eq!(s.pose_scores, vec![Some(125.0), None, Some(5.0)]);
        assert_eq!(s.num_undetected, 1);
    }

    #[test]
    fn select_rejects_invalid_clip() {
        let err = select_source_frame(&tiny_clip(0), &mut Scripted(vec![])).unwrap_err();
        assert!(matches!(err, SourcePrepError::InvalidClip(_)));
    }

    #[test]
    fn non_finite_pose_is_backend_failure() {
        let mut d = Scripted(vec![HeadPose::new(f64::NAN, 0.0)]);
        let f = FrameImage::filled(1, 1, [0.0; 3], 0).unwrap();
        assert!(matches!(
            estimate_pose(&f, &mut d),
            Err(SourcePrepError::Backend(_))
        ));
    }

    #[test]
    fn largest_face_wins_with_warning() {
        let frame = FrameImage::filled(32, 32, [0.0; 3], 0).unwrap();
        let mut d = Faces(vec![square(1.0, 1.0, 4.0), square(10.0, 10.0, 12.0)]);
        let det = detect_face_contour(&frame, &mut d).unwrap();
        assert_eq!(det.contour, square(10.0, 10.0, 12.0));
        assert_eq!(det.warnings.len(), 1);

        let det = detect_face_contour(&frame, &mut Faces(vec![square(1.0, 1.0, 4.0)])).unwrap();
        assert!(det.warnings.is_empty());
    }

    #[test]
    fn no_face_is_an_error() {
        let frame = FrameImage::filled(8, 8, [0.0; 3], 0).unwrap();
        assert_eq!(
            detect_face_contour(&frame, &mut Faces(vec![])),
            Err(SourcePrepError::NoFaceDetected)
        );
        assert!(matches!(
            detect_face_contour(&frame, &mut Faces(vec![square(4.0, 4.0, 10.0)])),
            Err(SourcePrepError::InvalidContour(_))
        ));
    }

    #[test]
    fn contour_needs_three_points() {
        assert!(FaceContour::new(vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn dilation_policy_rounds_up() {
        // 30x40 box: diagonal 50, 3% = 1.5 -> 2
        let c = FaceContour::new(vec![(0.0, 0.0), (30.0, 0.0), (30.0, 40.0)]).unwrap();
        assert_eq!(DilationPolicy::default().resolve(&c), 2);
        assert_eq!(DilationPolicy::Fixed(4).resolve(&c), 4);
    }
}
