//! Rasterizing the walker and composing noisy camera frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::phase::{joint_angles, Carry, Pose, SubjectProfile};
use crate::error::{Error, Result};
use crate::segmentation::{BinaryMask, GrayFrame};

/// Brightness added to the background under the walker.
pub const FOREGROUND_OFFSET: i32 = 90;
/// Amplitude of the static background texture noise.
pub const STATIC_NOISE: i32 = 15;
/// Amplitude of the independent per-frame sensor noise.
pub const FRAME_NOISE: i32 = 8;
/// Probability that a pixel is replaced by a black or white impulse.
pub const SPECKLE_PROBABILITY: f64 = 0.001;
/// Minimum gap between the figure and the frame edge.
pub const MARGIN: f64 = 2.0;

const COAT_WIDENING: f64 = 1.4;

type Point = (f64, f64);

#[derive(Clone, Copy, Debug)]
enum Primitive {
    Capsule { a: Point, b: Point, radius: f64 },
    Disc { center: Point, radius: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Primitive {
    fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            Primitive::Capsule { a, b, radius } => (
                a.0.min(b.0) - radius,
                a.1.min(b.1) - radius,
                a.0.max(b.0) + radius,
                a.1.max(b.1) + radius,
            ),
            Primitive::Disc { center, radius } => (
                center.0 - radius,
                center.1 - radius,
                center.0 + radius,
                center.1 + radius,
            ),
            Primitive::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        }
    }

    fn covers(&self, p: Point) -> bool {
        match *self {
            Primitive::Capsule { a, b, radius } => segment_distance_sq(p, a, b) <= radius * radius,
            Primitive::Disc { center, radius } => {
                let (dx, dy) = (p.0 - center.0, p.1 - center.1);
                dx * dx + dy * dy <= radius * radius
            }
            Primitive::Rect { x0, y0, x1, y1 } => p.0 >= x0 && p.0 <= x1 && p.1 >= y0 && p.1 <= y1,
        }
    }
}

fn segment_distance_sq(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = vx * vx + vy * vy;
    let s = if len_sq == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len_sq).clamp(0.0, 1.0)
    };
    let (dx, dy) = (p.0 - a.0 - s * vx, p.1 - a.1 - s * vy);
    dx * dx + dy * dy
}

/// Knee, ankle and toe for one leg. Angles are degrees from the downward
/// vertical, positive towards the walking direction (+x); knee flexion
/// swings the shin backwards.
fn leg_chain(hip: Point, hip_deg: f64, knee_deg: f64, profile: &SubjectProfile) -> [Point; 3] {
    let thigh = hip_deg.to_radians();
    let shin = (hip_deg - knee_deg).to_radians();
    let knee = (hip.0 + profile.thigh_len * thigh.sin(), hip.1 + profile.thigh_len * thigh.cos());
    let ankle = (knee.0 + profile.shin_len * shin.sin(), knee.1 + profile.shin_len * shin.cos());
    let foot = 0.3 * profile.shin_len;
    let toe = (ankle.0 + foot * shin.cos(), ankle.1 - foot * shin.sin());
    [knee, ankle, toe]
}

fn primitives(pose: &Pose, profile: &SubjectProfile) -> Vec<Primitive> {
    let hip = pose.root;
    let limb = profile.limb_thickness / 2.0;
    let mut torso = profile.limb_thickness;
    if profile.carry == Carry::Coat {
        torso *= COAT_WIDENING;
    }
    let neck = (hip.0, hip.1 - profile.torso_len);
    let mut out = vec![
        Primitive::Capsule { a: hip, b: neck, radius: torso },
        Primitive::Disc {
            center: (neck.0, neck.1 - 0.8 * profile.head_radius),
            radius: profile.head_radius,
        },
    ];
    for (hip_deg, knee_deg) in [(pose.left_hip, pose.left_knee), (pose.right_hip, pose.right_knee)] {
        let [knee, ankle, toe] = leg_chain(hip, hip_deg, knee_deg, profile);
        out.push(Primitive::Capsule { a: hip, b: knee, radius: limb });
        out.push(Primitive::Capsule { a: knee, b: ankle, radius: limb });
        out.push(Primitive::Capsule { a: ankle, b: toe, radius: limb });
    }
    if profile.carry == Carry::Bag {
        // Hangs at hand height against the front of the torso.
        let x0 = hip.0 + torso - 2.0;
        let y0 = hip.1 - 0.3 * profile.torso_len;
        out.push(Primitive::Rect {
            x0,
            y0,
            x1: x0 + 0.35 * profile.torso_len,
            y1: y0 + 0.4 * profile.torso_len,
        });
    }
    out
}

/// Draws the figure as a binary mask. Pixel (x, y) is set when its center
/// lies inside any primitive.
pub fn render_pose(pose: &Pose, profile: &SubjectProfile, frame_h: usize, frame_w: usize) -> Result<BinaryMask> {
    let prims = primitives(pose, profile);
    let mut mask = BinaryMask::new(frame_w, frame_h);
    for prim in &prims {
        let (x0, y0, x1, y1) = prim.extent();
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite())
            || x0 < MARGIN
            || y0 < MARGIN
            || x1 > frame_w as f64 - MARGIN
            || y1 > frame_h as f64 - MARGIN
        {
            return Err(Error::Geometry(format!(
                "figure spans ({x0:.1}, {y0:.1})-({x1:.1}, {y1:.1}), outside the {frame_w}x{frame_h} frame"
            )));
        }
        let (cx0, cy0) = (x0.floor().max(0.0) as usize, y0.floor().max(0.0) as usize);
        let (cx1, cy1) = (
            (x1.ceil() as usize).min(frame_w - 1),
            (y1.ceil() as usize).min(frame_h - 1),
        );
        for y in cy0..=cy1 {
            for x in cx0..=cx1 {
                if prim.covers((x as f64 + 0.5, y as f64 + 0.5)) {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Hip position at the first walking frame: horizontally centered over
/// the whole walk, feet near the bottom edge.
pub fn start_position(profile: &SubjectProfile, n_frames: usize, frame_h: usize, frame_w: usize) -> Point {
    let travel = profile.speed() * n_frames.saturating_sub(1) as f64;
    let x = (frame_w as f64 - travel) / 2.0;
    let y = frame_h as f64
        - MARGIN
        - 4.0
        - profile.leg_len()
        - profile.limb_thickness / 2.0
        - profile.torso_len / 30.0;
    (x, y)
}

fn textured_background(frame_h: usize, frame_w: usize, rng: &mut ChaCha8Rng) -> Vec<i32> {
    let mut bg = Vec::with_capacity(frame_h * frame_w);
    for y in 0..frame_h {
        for x in 0..frame_w {
            let texture = 25.0 * (x as f64 / 7.3).sin() * (y as f64 / 5.1).cos();
            bg.push(70 + texture.round() as i32 + rng.gen_range(-STATIC_NOISE..=STATIC_NOISE));
        }
    }
    bg
}

fn compose(bg: &[i32], mask: Option<&BinaryMask>, frame_h: usize, frame_w: usize, rng: &mut ChaCha8Rng) -> GrayFrame {
    let data = bg
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let fg = mask.is_some_and(|m| m.data()[i]);
            let mut v = b + rng.gen_range(-FRAME_NOISE..=FRAME_NOISE);
            if fg {
                v += FOREGROUND_OFFSET;
            }
            if rng.gen::<f64>() < SPECKLE_PROBABILITY {
                v = if rng.gen::<bool>() { 255 } else { 0 };
            }
            v.clamp(0, 255) as u8
        })
        .collect();
    GrayFrame::new(frame_w, frame_h, data).expect("sizes agree")
}

/// Frames plus the ground-truth walker mask of each (empty for frame 0).
#[derive(Clone, Debug)]
pub struct RenderedSequence {
    pub frames: Vec<GrayFrame>,
    pub masks: Vec<BinaryMask>,
}

impl RenderedSequence {
    /// Flips every frame and mask left to right.
    pub fn mirrored(&self) -> Self {
        Self {
            frames: self.frames.iter().map(mirror_frame).collect(),
            masks: self.masks.iter().map(mirror_mask).collect(),
        }
    }
}

fn mirror_frame(f: &GrayFrame) -> GrayFrame {
    let w = f.width();
    let data = f.data().chunks(w).flat_map(|row| row.iter().rev().copied()).collect();
    GrayFrame::new(w, f.height(), data).expect("same size")
}

fn mirror_mask(m: &BinaryMask) -> BinaryMask {
    let w = m.width();
    let data = m.data().chunks(w).flat_map(|row| row.iter().rev().copied()).collect();
    BinaryMask::from_vec(w, m.height(), data).expect("same size")
}

/// Renders `n_frames` walking frames after a walker-free background frame.
/// The starting gait phase and all noise are drawn from `noise_seed`.
pub fn generate_sequence_with_masks(
    profile: &SubjectProfile,
    n_frames: usize,
    frame_h: usize,
    frame_w: usize,
    noise_seed: u64,
) -> Result<RenderedSequence> {
    profile.validate()?;
    if n_frames == 0 {
        return Err(Error::Parameter("a sequence needs at least one walking frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let t0 = rng.gen_range(0..profile.cadence) as u64;
    let bg = textured_background(frame_h, frame_w, &mut rng);
    let start = start_position(profile, n_frames, frame_h, frame_w);

    let mut frames = Vec::with_capacity(n_frames + 1);
    let mut masks = Vec::with_capacity(n_frames + 1);
    frames.push(compose(&bg, None, frame_h, frame_w, &mut rng));
    masks.push(BinaryMask::new(frame_w, frame_h));
    for k in 0..n_frames {
        let mut pose = joint_angles(profile, t0 + k as u64, start);
        pose.root.0 -= profile.speed() * t0 as f64;
        let mask = render_pose(&pose, profile, frame_h, frame_w)?;
        frames.push(compose(&bg, Some(&mask), frame_h, frame_w, &mut rng));
        masks.push(mask);
    }
    Ok(RenderedSequence { frames, masks })
}

/// Frame 0 is the empty background; frames 1..=n show the walker.
pub fn generate_sequence(
    profile: &SubjectProfile,
    n_frames: usize,
    frame_h: usize,
    frame_w: usize,
    noise_seed: u64,
) -> Result<Vec<GrayFrame>> {
    Ok(generate_sequence_with_masks(profile, n_frames, frame_h, frame_w, noise_seed)?.frames)
}
