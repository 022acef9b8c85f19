//! Synthetic gait data: a sagittal stick-figure walker with a 60:40
//! stance/swing cycle, rendered onto noisy textured backgrounds.

pub mod dataset;
pub mod phase;
pub mod render;

pub use dataset::{generate_dataset, profile_distance, sample_profiles, DatasetOptions};
pub use phase::{gait_phase, joint_angles, Carry, GaitPhase, Leg, Pose, SubjectProfile};
pub use render::{generate_sequence, generate_sequence_with_masks, render_pose, RenderedSequence};
