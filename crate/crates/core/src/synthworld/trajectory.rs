//! Motion generators for the four behaviour classes.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    render_frame, AppearanceAttrs, Backdrop, HeadShape, IdentityLatent, MotionLatent, SynthError,
    EXPRESSION_LATENT_DIM, IDENTITY_LATENT_DIM, MAX_PITCH, MAX_YAW,
};
use crate::media::BehaviorTag;
use crate::model::VideoClip;

/// Every trajectory has a frame inside this pose window (degrees).
pub const FRONTAL_WINDOW: f64 = 3.0;

/// SplitMix64 finalizer over `seed` and a stream label.
pub(crate) fn stream_rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for b in stream.bytes().chain(index.to_le_bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3);
        h ^= h >> 31;
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(h ^ (h >> 31))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarTrajectory {
    pub identity: IdentityLatent,
    pub motion: Vec<MotionLatent>,
    pub appearance_attrs: AppearanceAttrs,
}

impl AvatarTrajectory {
    pub fn len(&self) -> usize {
        self.motion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motion.is_empty()
    }

    pub fn render(
        &self,
        clip_id: &str,
        fps: f64,
        dims: (usize, usize),
    ) -> Result<VideoClip, SynthError> {
        let frames = self
            .motion
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut f = render_frame(&self.identity, m, &self.appearance_attrs, dims)?;
                f.frame_index = i;
                Ok(f)
            })
            .collect::<Result<Vec<_>, SynthError>>()?;
        Ok(VideoClip::new(clip_id, fps, frames))
    }
}

/// Quantized identity with entries drawn uniformly from `[0, 1]`.
pub fn random_identity(seed: u64) -> IdentityLatent {
    let mut rng = stream_rng(seed, "identity", 0);
    let mut z = [0.0; IDENTITY_LATENT_DIM];
    z.iter_mut().for_each(|v| *v = rng.gen_range(0.0..=1.0));
    IdentityLatent(z).quantized()
}

pub fn random_attrs(seed: u64) -> AppearanceAttrs {
    let mut rng = stream_rng(seed, "attrs", 0);
    AppearanceAttrs {
        glasses: rng.gen_bool(0.4),
        head_shape: HeadShape::ALL[rng.gen_range(0..HeadShape::ALL.len())],
        backdrop: Backdrop::ALL[rng.gen_range(0..Backdrop::ALL.len())],
    }
}

fn wave(u: f64, cycles: f64, phase: f64) -> f64 {
    (TAU * cycles * u + phase).sin()
}

fn expr_level(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0.2..0.8)
}

/// Deterministic pose/expression sequence for one behaviour class.
///
/// Values are quantized to the fiducial grid, and the frame closest to
/// frontal is snapped inside `±FRONTAL_WINDOW / 3` degrees.
pub fn make_motion(behavior: BehaviorTag, frames: usize, seed: u64) -> Vec<MotionLatent> {
    let mut rng = stream_rng(seed, behavior.as_str(), 0);
    let phase: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.0..TAU));
    let fixed: [f64; EXPRESSION_LATENT_DIM] = std::array::from_fn(|_| expr_level(&mut rng));
    let u = |t: usize| t as f64 / frames.max(1) as f64;

    let mut motion: Vec<(f64, f64, [f64; EXPRESSION_LATENT_DIM])> = match behavior {
        BehaviorTag::GazeVariation => {
            let amp = rng.gen_range(30.0..42.0);
            (0..frames)
                .map(|t| {
                    (
                        amp * wave(u(t), 1.5, phase[0]),
                        4.0 * wave(u(t), 0.7, phase[1]),
                        fixed,
                    )
                })
                .collect()
        }
        BehaviorTag::ExpressionVariation => (0..frames)
            .map(|t| {
                let yaw = rng.gen_range(-2.0..2.0);
                let pitch = rng.gen_range(-2.0..2.0);
                let e = std::array::from_fn(|k| {
                    0.5 + 0.38 * wave(u(t), 1.0 + k as f64 * 0.6, phase[2 + k])
                });
                (yaw, pitch, e)
            })
            .collect(),
        BehaviorTag::SpeechHeadMotion => (0..frames)
            .map(|t| {
                let mut e = fixed;
                e[0] = 0.1 + 0.8 * wave(u(t), 6.0, phase[2]).abs();
                e[1] = 0.5 + 0.3 * wave(u(t), 4.0, phase[3]);
                (
                    10.0 * wave(u(t), 0.8, phase[0]),
                    6.0 * wave(u(t), 1.3, phase[1]),
                    e,
                )
            })
            .collect(),
        BehaviorTag::RapidPoseChange => {
            let mut sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (0..frames)
                .map(|_| {
                    let yaw = sign * rng.gen_range(22.0..40.0);
                    let pitch =
                        if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(8.0..25.0);
                    sign = -sign;
                    (yaw, pitch, fixed)
                })
                .collect()
        }
        BehaviorTag::Unspecified => {
            let (mut yaw, mut pitch) = (0.0f64, 0.0f64);
            (0..frames)
                .map(|_| {
                    yaw = (yaw + rng.gen_range(-2.0..2.0)).clamp(-20.0, 20.0);
                    pitch = (pitch + rng.gen_range(-1.5..1.5)).clamp(-12.0, 12.0);
                    (yaw, pitch, fixed)
                })
                .collect()
        }
    };

    if let Some(k) = (0..motion.len()).min_by(|&a, &b| {
        let s = |i: usize| motion[i].0 * motion[i].0 + motion[i].1 * motion[i].1;
        s(a).total_cmp(&s(b))
    }) {
        motion[k].0 = rng.gen_range(-1.0..1.0);
        motion[k].1 = rng.gen_range(-1.0..1.0);
    }

    motion
        .into_iter()
        .map(|(yaw, pitch, e)| {
            MotionLatent {
                yaw: yaw.clamp(-MAX_YAW, MAX_YAW),
                pitch: pitch.clamp(-MAX_PITCH, MAX_PITCH),
                expression: e.map(|v| v.clamp(0.0, 1.0)),
            }
            .quantized()
        })
        .collect()
}

/// Identity, attributes and motion, all derived from `seed`.
pub fn make_trajectory(behavior: BehaviorTag, frames: usize, seed: u64) -> AvatarTrajectory {
    AvatarTrajectory {
        identity: random_identity(seed),
        motion: make_motion(behavior, frames, seed),
        appearance_attrs: random_attrs(seed),
    }
}
