//! Gait cycle timing and joint kinematics of the stick-figure walker.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Fraction of each leg's cycle spent in stance.
pub const STANCE_FRACTION: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leg {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carry {
    None,
    Bag,
    Coat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectProfile {
    pub subject_id: u32,
    pub thigh_len: f64,
    pub shin_len: f64,
    pub torso_len: f64,
    pub head_radius: f64,
    /// Degrees.
    pub hip_amp: f64,
    /// Degrees.
    pub knee_amp: f64,
    /// Frames per gait cycle.
    pub cadence: u32,
    pub limb_thickness: f64,
    /// Fraction of a cycle.
    pub phase_offset: f64,
    pub carry: Carry,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("thigh_len", self.thigh_len),
            ("shin_len", self.shin_len),
            ("torso_len", self.torso_len),
            ("head_radius", self.head_radius),
            ("limb_thickness", self.limb_thickness),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("hip_amp", self.hip_amp), ("knee_amp", self.knee_amp)] {
            if !(v > 0.0 && v < 90.0) {
                return Err(Error::Parameter(format!("{name} must be in (0, 90) degrees, got {v}")));
            }
        }
        if self.cadence < 8 {
            return Err(Error::Parameter(format!("cadence must be at least 8 frames, got {}", self.cadence)));
        }
        if !(0.0..1.0).contains(&self.phase_offset) {
            return Err(Error::Parameter(format!("phase_offset must be in [0, 1), got {}", self.phase_offset)));
        }
        Ok(())
    }

    pub fn leg_len(&self) -> f64 {
        self.thigh_len + self.shin_len
    }

    /// Horizontal root speed in pixels per frame: two steps per cycle, each
    /// about the chord the leg sweeps between its hip extremes.
    pub fn speed(&self) -> f64 {
        4.0 * self.leg_len() * self.hip_amp.to_radians().sin() / self.cadence as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaitPhase {
    /// `(t mod cadence) / cadence`.
    pub phase: f64,
    /// The leg owning the current half cycle: left for phase < 0.5.
    pub stance_leg: Leg,
    pub left_in_stance: bool,
    pub right_in_stance: bool,
}

/// Phase of frame `t`. Stance membership is decided in integer arithmetic
/// so the 60:40 split is exact whenever `cadence` is a multiple of 10.
pub fn gait_phase(t: u64, cadence: u32) -> Result<GaitPhase> {
    if cadence < 8 {
        return Err(Error::Parameter(format!("cadence must be at least 8 frames, got {cadence}")));
    }
    let c = cadence as u64;
    let tau = t % c;
    let phase = tau as f64 / c as f64;
    // Left stance: tau / c < 0.6.
    let left_in_stance = 10 * tau < 6 * c;
    // Right leg lags half a cycle: ((tau + c/2) mod c) / c < 0.6, doubled.
    let right_in_stance = 10 * ((2 * tau + c) % (2 * c)) < 12 * c;
    let stance_leg = if 2 * tau < c { Leg::Left } else { Leg::Right };
    Ok(GaitPhase {
        phase,
        stance_leg,
        left_in_stance,
        right_in_stance,
    })
}

/// Joint angles in degrees plus the hip (root) position in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub left_hip: f64,
    pub right_hip: f64,
    pub left_knee: f64,
    pub right_knee: f64,
    pub root: (f64, f64),
}

impl Pose {
    /// Both legs straight down, hips at `root`.
    pub fn neutral(root: (f64, f64)) -> Self {
        Self {
            left_hip: 0.0,
            right_hip: 0.0,
            left_knee: 0.0,
            right_knee: 0.0,
            root,
        }
    }
}

/// Knee flexion at a leg's own phase: a full half-sine of amplitude
/// `knee_amp` across the swing window, and a small loading-response bump
/// during stance.
pub fn knee_angle(knee_amp: f64, leg_phase: f64) -> f64 {
    if leg_phase >= STANCE_FRACTION {
        let s = (leg_phase - STANCE_FRACTION) / (1.0 - STANCE_FRACTION);
        knee_amp * (PI * s).sin().max(0.0)
    } else {
        0.15 * knee_amp * (2.0 * PI * leg_phase / STANCE_FRACTION).sin().max(0.0)
    }
}

/// Pose at frame `t` for a walker whose hip starts at `start`.
pub fn joint_angles(profile: &SubjectProfile, t: u64, start: (f64, f64)) -> Pose {
    let c = profile.cadence.max(1) as u64;
    let phase = (t % c) as f64 / c as f64;
    let right_phase = (phase + 0.5).fract();
    let left_hip = profile.hip_amp * (2.0 * PI * (phase + profile.phase_offset)).sin();
    let bob = profile.torso_len / 30.0 * (4.0 * PI * phase).sin();
    Pose {
        left_hip,
        right_hip: -left_hip,
        left_knee: knee_angle(profile.knee_amp, phase),
        right_knee: knee_angle(profile.knee_amp, right_phase),
        root: (start.0 + profile.speed() * t as f64, start.1 + bob),
    }
}
