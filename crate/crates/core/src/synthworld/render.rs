//! Schematic face rendering.
//!
//! Geometry follows the motion latent (head position, feature offsets,
//! mouth and eye openness) and appearance follows the identity latent
//! (skin tone, feature sizes and spacing). All drawn colours stay within
//! `[13, 242]` per channel so they never collide with fiducial magic cells.

use super::fiducial::{write_fiducials, Canvas};
use super::{AppearanceAttrs, Backdrop, IdentityLatent, MotionLatent, Placement, SynthError};
use crate::model::FrameImage;

pub const MIN_RENDER_DIM: usize = 32;

pub(crate) const EYE_RGB: [u8; 3] = [20, 20, 31];
const BROW_RGB: [u8; 3] = [52, 38, 26];
const GLASSES_RGB: [u8; 3] = [45, 45, 45];
const MOUTH_RGB: [u8; 3] = [153, 38, 51];

/// Number of vertices in the head contour polygon.
pub const CONTOUR_VERTICES: usize = 64;

/// One avatar to draw into a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct AvatarInstance {
    pub identity: IdentityLatent,
    pub motion: MotionLatent,
    pub attrs: AppearanceAttrs,
    pub placement: Placement,
}

/// Head ellipse and facial-feature origin for one pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadGeometry {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub feature_x: f64,
    pub feature_y: f64,
}

impl HeadGeometry {
    pub fn new(placement: &Placement, motion: &MotionLatent) -> Self {
        let (x0, y0) = placement.center();
        let (rx0, ry0) = placement.radii();
        let yaw = motion.yaw / 45.0;
        let pitch = motion.pitch / 30.0;
        let cx = x0 + 0.12 * rx0 * yaw;
        let cy = y0 + 0.10 * ry0 * pitch;
        let rx = rx0 * (1.0 - 0.08 * yaw.abs());
        let ry = ry0 * (1.0 - 0.05 * pitch.abs());
        Self {
            cx,
            cy,
            rx,
            ry,
            feature_x: cx + 0.35 * rx * yaw,
            feature_y: cy + 0.25 * ry * pitch,
        }
    }

    /// Polygon inscribed in the head ellipse, clamped to `[0, W] x [0, H]`.
    pub fn contour(&self, (width, height): (usize, usize)) -> Vec<(f64, f64)> {
        (0..CONTOUR_VERTICES)
            .map(|i| {
                let t = i as f64 / CONTOUR_VERTICES as f64 * std::f64::consts::TAU;
                (
                    (self.cx + self.rx * t.cos()).clamp(0.0, width as f64),
                    (self.cy + self.ry * t.sin()).clamp(0.0, height as f64),
                )
            })
            .collect()
    }

    /// Pixel rectangle `(x0, y0, w, h)` covering the head, grown by `margin`.
    pub fn bounding_box(
        &self,
        (width, height): (usize, usize),
        margin: f64,
    ) -> (usize, usize, usize, usize) {
        let x0 = (self.cx - self.rx - margin).floor().max(0.0) as usize;
        let y0 = (self.cy - self.ry - margin).floor().max(0.0) as usize;
        let x1 = ((self.cx + self.rx + margin).ceil() as usize).min(width);
        let y1 = ((self.cy + self.ry + margin).ceil() as usize).min(height);
        (x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.05, 0.95) * 255.0).round() as u8
}

fn skin(identity: &IdentityLatent) -> [u8; 3] {
    let z = identity.values();
    [
        to_byte(0.45 + 0.45 * z[0]),
        to_byte(0.30 + 0.40 * z[1]),
        to_byte(0.20 + 0.35 * z[1] * (0.5 + 0.5 * z[0])),
    ]
}

fn shade(rgb: [u8; 3], factor: f64) -> [u8; 3] {
    rgb.map(|c| to_byte(f64::from(c) / 255.0 * factor))
}

/// Fills pixels whose centre lies in the axis-aligned ellipse.
fn fill_ellipse(canvas: &mut Canvas, cx: f64, cy: f64, rx: f64, ry: f64, rgb: [u8; 3]) {
    if rx <= 0.0 || ry <= 0.0 {
        return;
    }
    let (x0, x1) = pixel_span(cx - rx, cx + rx, canvas.width);
    let (y0, y1) = pixel_span(cy - ry, cy + ry, canvas.height);
    for y in y0..y1 {
        let dy = (y as f64 + 0.5 - cy) / ry;
        for x in x0..x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            if dx * dx + dy * dy <= 1.0 {
                canvas.set(x, y, rgb);
            }
        }
    }
}

/// Fills the ring between two concentric ellipses scaled by `inner` and 1.
fn ring(canvas: &mut Canvas, cx: f64, cy: f64, rx: f64, ry: f64, inner: f64, rgb: [u8; 3]) {
    let (x0, x1) = pixel_span(cx - rx, cx + rx, canvas.width);
    let (y0, y1) = pixel_span(cy - ry, cy + ry, canvas.height);
    for y in y0..y1 {
        let dy = (y as f64 + 0.5 - cy) / ry;
        for x in x0..x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let r2 = dx * dx + dy * dy;
            if r2 <= 1.0 && r2 >= inner * inner {
                canvas.set(x, y, rgb);
            }
        }
    }
}

fn fill_rect(canvas: &mut Canvas, cx: f64, cy: f64, hw: f64, hh: f64, rgb: [u8; 3]) {
    let (x0, x1) = pixel_span(cx - hw, cx + hw, canvas.width);
    let (y0, y1) = pixel_span(cy - hh, cy + hh, canvas.height);
    for y in y0..y1 {
        let py = y as f64 + 0.5;
        for x in x0..x1 {
            let px = x as f64 + 0.5;
            if (px - cx).abs() <= hw && (py - cy).abs() <= hh {
                canvas.set(x, y, rgb);
            }
        }
    }
}

fn pixel_span(lo: f64, hi: f64, len: usize) -> (usize, usize) {
    let a = (lo - 0.5).floor().max(0.0) as usize;
    let b = ((hi + 0.5).ceil().max(0.0) as usize).min(len);
    (a.min(b), b)
}

pub(crate) fn fill_backdrop(canvas: &mut Canvas, backdrop: Backdrop) {
    let base = backdrop.rgb();
    for y in 0..canvas.height {
        let factor = 0.85 + 0.15 * (y as f64 + 0.5) / canvas.height as f64;
        let rgb = base.map(|c| to_byte(c * factor));
        for x in 0..canvas.width {
            canvas.set(x, y, rgb);
        }
    }
}

/// Draws one avatar, then its fiducials, over the existing canvas.
pub(crate) fn draw_avatar(canvas: &mut Canvas, avatar: &AvatarInstance) {
    let g = HeadGeometry::new(&avatar.placement, &avatar.motion);
    let z = avatar.identity.values();
    let e = avatar.motion.expression;
    let skin = skin(&avatar.identity);

    fill_ellipse(canvas, g.cx, g.cy, g.rx, g.ry, skin);

    let eye_y = g.feature_y - 0.30 * g.ry;
    let eye_dx = g.rx * (0.26 + 0.12 * z[2]);
    let eye_rx = g.rx * (0.08 + 0.05 * z[3]);
    let eye_ry = eye_rx * (0.35 + 0.65 * e[3]);

    let brow_y = eye_y - eye_rx * 1.6 - 0.08 * g.ry * e[2];
    let brow_hh = 0.5 + 1.5 * z[6] * g.ry / 32.0;
    for side in [-1.0, 1.0] {
        fill_rect(
            canvas,
            g.feature_x + side * eye_dx,
            brow_y,
            eye_rx * 1.2,
            brow_hh,
            BROW_RGB,
        );
    }
    for side in [-1.0, 1.0] {
        let ex = g.feature_x + side * eye_dx;
        if avatar.attrs.glasses {
            ring(
                canvas,
                ex,
                eye_y,
                eye_rx * 1.9,
                eye_rx * 1.6,
                0.78,
                GLASSES_RGB,
            );
        }
        fill_ellipse(canvas, ex, eye_y, eye_rx, eye_ry, EYE_RGB);
    }
    if avatar.attrs.glasses {
        fill_rect(
            canvas,
            g.feature_x,
            eye_y,
            (eye_dx - eye_rx * 1.9).max(0.0),
            0.5,
            GLASSES_RGB,
        );
    }

    let nose_len = g.ry * (0.12 + 0.12 * z[4]);
    let nose_hw = g.rx * (0.03 + 0.04 * z[7]);
    fill_rect(
        canvas,
        g.feature_x,
        g.feature_y + nose_len / 2.0,
        nose_hw,
        nose_len / 2.0,
        shade(skin, 0.8),
    );

    let mouth_y = g.feature_y + 0.45 * g.ry;
    let mouth_hw = g.rx * (0.18 + 0.14 * z[5]) * (0.8 + 0.4 * e[1]);
    let mouth_hh = g.ry * (0.02 + 0.12 * e[0]);
    fill_ellipse(
        canvas,
        g.feature_x,
        mouth_y,
        mouth_hw,
        mouth_hh.max(0.6),
        MOUTH_RGB,
    );

    write_fiducials(
        canvas,
        &avatar.identity,
        &avatar.motion,
        &avatar.attrs,
        &avatar.placement,
    );
}

fn check_dims((width, height): (usize, usize)) -> Result<(), SynthError> {
    if width < MIN_RENDER_DIM || height < MIN_RENDER_DIM {
        return Err(SynthError::DimsTooSmall { width, height });
    }
    Ok(())
}

/// Renders a single centred avatar on its backdrop.
pub fn render_frame(
    identity: &IdentityLatent,
    motion: &MotionLatent,
    attrs: &AppearanceAttrs,
    dims: (usize, usize),
) -> Result<FrameImage, SynthError> {
    check_dims(dims)?;
    let avatar = AvatarInstance {
        identity: *identity,
        motion: *motion,
        attrs: *attrs,
        placement: Placement::centred(dims, attrs.head_shape),
    };
    render_scene(dims, attrs.backdrop, &[avatar])
}

/// Renders any number of avatars over one backdrop, in order.
pub fn render_scene(
    dims: (usize, usize),
    backdrop: Backdrop,
    avatars: &[AvatarInstance],
) -> Result<FrameImage, SynthError> {
    check_dims(dims)?;
    let mut canvas = Canvas::new(dims.0, dims.1);
    fill_backdrop(&mut canvas, backdrop);
    for avatar in avatars {
        avatar.placement.check_fits(dims)?;
        draw_avatar(&mut canvas, avatar);
    }
    Ok(canvas.into_frame(0))
}
