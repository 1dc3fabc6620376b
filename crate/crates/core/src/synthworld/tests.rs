use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::EYE_RGB;
use super::*;
use crate::generation::{
    Captioner, ContourDetector, Embedder, FaceCropper, Inpainter, PoseDetector, Reenactor,
};
use crate::media::BehaviorTag;
use crate::model::{
    embedding_distance, DistanceMetric, EmbeddingKind, FaceMask, FrameImage, VideoClip,
};

const DIMS: (usize, usize) = (64, 64);

fn attrs() -> AppearanceAttrs {
    AppearanceAttrs {
        glasses: true,
        head_shape: HeadShape::Oval,
        backdrop: Backdrop::Green,
    }
}

fn random_motion(rng: &mut ChaCha8Rng) -> MotionLatent {
    MotionLatent::new(
        rng.gen_range(-MAX_YAW..=MAX_YAW),
        rng.gen_range(-MAX_PITCH..=MAX_PITCH),
        std::array::from_fn(|_| rng.gen_range(0.0..=1.0)),
    )
    .unwrap()
}

fn random_latent(rng: &mut ChaCha8Rng) -> IdentityLatent {
    IdentityLatent::new(std::array::from_fn(|_| rng.gen_range(0.0..=1.0))).unwrap()
}

#[test]
fn render_decode_round_trip_within_quantization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for dims in [(32, 32), (48, 40), (64, 64), (97, 71)] {
        for _ in 0..40 {
            let z = random_latent(&mut rng);
            let m = random_motion(&mut rng);
            let frame = render_frame(&z, &m, &attrs(), dims).unwrap();
            let (dz, dm) = decode_latents(&frame).expect("fiducials decode");
            for (a, b) in z.values().iter().zip(dz.values()) {
                assert!((a - b).abs() <= QUANTIZATION_STEP / 2.0 + 1e-12);
            }
            assert!(m.max_abs_diff(&dm) <= QUANTIZATION_STEP + 1e-12);
            let face = largest_face(&frame).unwrap();
            assert_eq!(face.attrs, attrs());
            assert_eq!(face.placement, Placement::centred(dims, attrs().head_shape));
        }
    }
}

#[test]
fn quantized_latents_decode_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let z = random_latent(&mut rng).quantized();
        let m = random_motion(&mut rng).quantized();
        let frame = render_frame(&z, &m, &attrs(), DIMS).unwrap();
        assert_eq!(decode_latents(&frame), Some((z, m)));
    }
}

#[test]
fn rendering_is_deterministic() {
    let z = random_identity(3);
    let m = make_motion(BehaviorTag::GazeVariation, 4, 3)[2];
    let a = render_frame(&z, &m, &attrs(), DIMS).unwrap();
    let b = render_frame(&z, &m, &attrs(), DIMS).unwrap();
    assert_eq!(a, b);
    assert!(a.is_8bit_exact());
}

#[test]
fn small_dims_are_rejected() {
    let z = random_identity(1);
    let err = render_frame(&z, &MotionLatent::frontal(), &attrs(), (31, 64)).unwrap_err();
    assert_eq!(
        err,
        SynthError::DimsTooSmall {
            width: 31,
            height: 64
        }
    );
}

/// Mean pixel-centre abscissa of eye-coloured pixels above the fiducials.
fn eye_centroid_x(frame: &FrameImage) -> f64 {
    let rows = Placement::centred(frame.dims(), attrs().head_shape)
        .anchor()
        .1
        - 1;
    let eye = EYE_RGB.map(|c| f32::from(c) / 255.0);
    let xs: Vec<f64> = (0..rows)
        .flat_map(|y| (0..frame.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| frame.rgb(x, y) == eye)
        .map(|(x, _)| x as f64 + 0.5)
        .collect();
    assert!(!xs.is_empty());
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn opposite_yaw_mirrors_the_eyes() {
    let z = random_identity(11);
    let e = [0.4, 0.5, 0.6, 0.9];
    let left = MotionLatent::new(-45.0, 0.0, e).unwrap();
    let right = MotionLatent::new(45.0, 0.0, e).unwrap();
    let fl = render_frame(&z, &left, &attrs(), DIMS).unwrap();
    let fr = render_frame(&z, &right, &attrs(), DIMS).unwrap();
    let (cl, cr) = (eye_centroid_x(&fl), eye_centroid_x(&fr));
    let mid = DIMS.0 as f64 / 2.0;
    assert!(cl < mid && cr > mid, "{cl} {cr}");
    assert!((cl + cr - DIMS.0 as f64).abs() < 1e-9, "{cl} + {cr}");
    let (_, ml) = decode_latents(&fl).unwrap();
    let (_, mr) = decode_latents(&fr).unwrap();
    assert_eq!((ml.yaw, mr.yaw), (-45.0, 45.0));
}

#[test]
fn noise_and_blank_blocks_decode_to_none() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let px = (0..64 * 64 * 3)
            .map(|_| rng.gen::<u8>())
            .collect::<Vec<_>>();
        let frame = FrameImage::from_rgb8(64, 64, &px, 0).unwrap();
        assert!(decode_latents(&frame).is_none());
    }

    let z = random_identity(2);
    let frame = render_frame(&z, &MotionLatent::frontal(), &attrs(), DIMS).unwrap();
    let (ax, ay) = Placement::centred(DIMS, attrs().head_shape).anchor();
    for row in [ay - 1, ay, ay + 1] {
        let mut blanked = frame.clone();
        for x in ax - 2..=ax + 3 {
            blanked.set_rgb(x, row, [0.0, 0.0, 0.0]);
        }
        assert!(decode_latents(&blanked).is_none(), "row {row}");
    }
    let mut flipped = frame.clone();
    let [r, g, b] = flipped.rgb(ax, ay - 1);
    flipped.set_rgb(ax, ay - 1, [1.0 - r, g, b]);
    assert!(decode_latents(&flipped).is_none());
}

#[test]
fn trajectories_are_deterministic_and_valid() {
    for behavior in [
        BehaviorTag::GazeVariation,
        BehaviorTag::ExpressionVariation,
        BehaviorTag::SpeechHeadMotion,
        BehaviorTag::RapidPoseChange,
        BehaviorTag::Unspecified,
    ] {
        let a = make_trajectory(behavior, 10, 1);
        assert_eq!(a, make_trajectory(behavior, 10, 1));
        assert_eq!(a.len(), 10);
        for m in &a.motion {
            assert_eq!(*m, m.quantized());
            MotionLatent::new(m.yaw, m.pitch, m.expression).unwrap();
        }
    }
}

#[test]
fn every_trajectory_has_a_near_frontal_frame() {
    for behavior in BehaviorTag::RECORDED
        .into_iter()
        .chain([BehaviorTag::Unspecified])
    {
        for seed in 0..60 {
            for frames in [1, 2, 7, 50] {
                let motion = make_motion(behavior, frames, seed);
                assert!(
                    motion
                        .iter()
                        .any(|m| m.yaw.abs() < FRONTAL_WINDOW && m.pitch.abs() < FRONTAL_WINDOW),
                    "{behavior} seed {seed} T {frames}"
                );
            }
        }
    }
}

#[test]
fn behaviour_shapes() {
    for seed in 0..20 {
        let rapid = make_motion(BehaviorTag::RapidPoseChange, 50, seed);
        let max_dyaw = rapid
            .windows(2)
            .map(|w| (w[1].yaw - w[0].yaw).abs())
            .fold(0.0, f64::max);
        assert!(max_dyaw >= 20.0, "seed {seed}: {max_dyaw}");

        let gaze = make_motion(BehaviorTag::GazeVariation, 50, seed);
        let yaw_span = gaze.iter().map(|m| m.yaw).fold(f64::MIN, f64::max)
            - gaze.iter().map(|m| m.yaw).fold(f64::MAX, f64::min);
        assert!(yaw_span > 30.0);
        assert!(gaze.iter().all(|m| m.expression == gaze[0].expression));

        let expr = make_motion(BehaviorTag::ExpressionVariation, 50, seed);
        assert!(expr
            .iter()
            .all(|m| m.yaw.abs() < 2.5 && m.pitch.abs() < 2.5));
        let spread = expr
            .iter()
            .map(|m| m.expression[0])
            .fold(f64::MIN, f64::max)
            - expr
                .iter()
                .map(|m| m.expression[0])
                .fold(f64::MAX, f64::min);
        assert!(spread > 0.3);
    }
}

#[test]
fn identity_embedding_ignores_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut embedder = SyntheticEmbedder::new(EmbeddingKind::Identity);
    let mut cropper = SyntheticFaceCropper;
    for _ in 0..20 {
        let z = random_latent(&mut rng);
        let a = render_frame(&z, &random_motion(&mut rng), &attrs(), DIMS).unwrap();
        let b = render_frame(&z, &random_motion(&mut rng), &attrs(), DIMS).unwrap();
        let ea = embedder.embed(&cropper.crop(&a).unwrap().unwrap()).unwrap();
        let eb = embedder.embed(&cropper.crop(&b).unwrap().unwrap()).unwrap();
        assert_eq!(
            embedding_distance(&ea, &eb, DistanceMetric::Euclidean).unwrap(),
            0.0
        );
        assert_eq!(ea.dim(), 512);
    }
}

#[test]
fn expression_embedding_layout() {
    let m = MotionLatent::new(45.0, -30.0, [0.2, 0.4, 0.6, 0.8])
        .unwrap()
        .quantized();
    let frame = render_frame(&random_identity(4), &m, &attrs(), DIMS).unwrap();
    let v = SyntheticEmbedder::new(EmbeddingKind::Expression)
        .embed(&frame)
        .unwrap();
    assert_eq!(v.dim(), 16);
    assert_eq!(&v.values()[..6], &m.embedding_prefix());
    assert!(v.values()[6..].iter().all(|&x| x == 0.0));
}

#[test]
fn inpainted_identity_keeps_its_distance() {
    let mut inpainter = SyntheticInpainter;
    for seed in 0..200u64 {
        let z = random_identity(seed);
        let frame = render_frame(&z, &MotionLatent::frontal(), &attrs(), DIMS).unwrap();
        let mask = FaceMask::new(64, 64, vec![true; 64 * 64], 0).unwrap();
        let out = inpainter
            .inpaint(&frame, &mask, "a person without glasses", seed)
            .unwrap();
        let face = largest_face(&out).unwrap();
        assert!(face.identity.distance(&z) >= MIN_LATENT_DISTANCE);
        assert!(!face.attrs.glasses);
        assert_eq!(face.motion, MotionLatent::frontal().quantized());
        assert_eq!(
            out,
            inpainter
                .inpaint(&frame, &mask, "a person without glasses", seed)
                .unwrap()
        );
    }
}

#[test]
fn captioner_and_inpainter_agree_on_glasses() {
    let z = random_identity(9);
    let frame = render_frame(&z, &MotionLatent::frontal(), &attrs(), DIMS).unwrap();
    let caption = SyntheticCaptioner.caption(&frame).unwrap();
    assert_eq!(
        caption,
        "a person with glasses, oval head, in front of a green background"
    );
    let mask = FaceMask::new(64, 64, vec![true; 64 * 64], 0).unwrap();
    let out = SyntheticInpainter
        .inpaint(&frame, &mask, &caption, 0)
        .unwrap();
    assert!(largest_face(&out).unwrap().attrs.glasses);
}

#[test]
fn two_avatar_scene_reports_both_contours() {
    let small = AvatarInstance {
        identity: random_identity(1),
        motion: MotionLatent::frontal(),
        attrs: attrs(),
        placement: Placement::new((20.0, 24.0), (10.0, 12.0)),
    };
    let large = AvatarInstance {
        identity: random_identity(2),
        motion: MotionLatent::frontal(),
        attrs: attrs(),
        placement: Placement::new((72.0, 36.0), (20.0, 24.0)),
    };
    let frame = render_scene((96, 72), Backdrop::Grey, &[small, large.clone()]).unwrap();
    let contours = SyntheticContourDetector.detect(&frame).unwrap();
    assert_eq!(contours.len(), 2);
    let face = largest_face(&frame).unwrap();
    assert_eq!(face.identity, large.identity.quantized());
    let detection =
        crate::source_prep::detect_face_contour(&frame, &mut SyntheticContourDetector).unwrap();
    assert_eq!(detection.warnings.len(), 1);
    let (x0, _, x1, _) = detection.contour.bounding_box();
    assert!(x0 > 48.0 && x1 > 88.0);
}

#[test]
fn pose_detector_reads_the_motion_block() {
    let mut det = SyntheticPoseDetector;
    let z = random_identity(6);
    for (yaw, pitch) in [(0.0, 0.0), (20.0, 0.0), (-33.0, 12.5)] {
        let m = MotionLatent::new(yaw, pitch, [0.5; 4]).unwrap();
        let frame = render_frame(&z, &m, &attrs(), DIMS).unwrap();
        let pose = det.estimate(&frame).unwrap();
        assert!(pose.detected);
        assert!((pose.yaw - yaw).abs() <= 0.5 * 90.0 / 255.0 + 1e-9);
        assert!((pose.pitch - pitch).abs() <= 0.5 * 60.0 / 255.0 + 1e-9);
    }
    let blank = FrameImage::filled(64, 64, [0.5, 0.5, 0.5], 0).unwrap();
    assert!(!det.estimate(&blank).unwrap().detected);
}

#[test]
fn reenactor_transfers_motion_and_fills_gaps() {
    let still = render_frame(
        &random_identity(30),
        &MotionLatent::frontal(),
        &attrs(),
        DIMS,
    )
    .unwrap();
    let traj = make_trajectory(BehaviorTag::SpeechHeadMotion, 6, 30);
    let mut driving = traj.render("d", 25.0, (80, 64)).unwrap();
    driving.frames[0] = FrameImage::filled(80, 64, [0.2, 0.2, 0.2], 0).unwrap();
    driving.frames[3] = FrameImage::filled(80, 64, [0.2, 0.2, 0.2], 3).unwrap();
    let out = SyntheticReenactor.reenact(&still, &driving).unwrap();
    assert_eq!(out.len(), 6);
    let expected = [1, 1, 2, 2, 4, 5];
    for (t, frame) in out.iter().enumerate() {
        assert_eq!(frame.dims(), DIMS);
        assert_eq!(frame.frame_index, t);
        let (z, m) = decode_latents(frame).unwrap();
        assert_eq!(z, random_identity(30));
        assert_eq!(m, traj.motion[expected[t]]);
    }

    let empty = VideoClip::new(
        "e",
        25.0,
        vec![FrameImage::filled(64, 64, [0.1, 0.1, 0.1], 0).unwrap()],
    );
    assert!(SyntheticReenactor.reenact(&still, &empty).is_err());
}

#[test]
fn contour_lies_within_the_rendered_head() {
    let z = random_identity(12);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let m = random_motion(&mut rng);
        let frame = render_frame(&z, &m, &attrs(), DIMS).unwrap();
        let contour = &SyntheticContourDetector.detect(&frame).unwrap()[0];
        let bg = render_scene(DIMS, attrs().backdrop, &[]).unwrap();
        let mask = crate::source_prep::build_mask(contour, DIMS, 0).unwrap();
        for y in 0..DIMS.1 {
            for x in 0..DIMS.0 {
                if mask.get(x, y) {
                    assert_ne!(frame.rgb(x, y), bg.rgb(x, y), "({x}, {y}) is backdrop");
                }
            }
        }
    }
}
