//! Synthetic multi-subject datasets written in the on-disk schema.

use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::phase::{Carry, SubjectProfile};
use super::render::generate_sequence_with_masks;
use crate::error::{Error, Result};
use crate::pipeline::manifest::{
    frame_file_name, sequence_dir_name, Manifest, ManifestRecord, Status, MANIFEST_FILE,
};
use crate::seed::{derive, rng, stream};
use crate::segmentation::write_pgm;

pub const THIGH_RANGE: RangeInclusive<f64> = 18.0..=26.0;
pub const SHIN_RANGE: RangeInclusive<f64> = 18.0..=26.0;
pub const TORSO_RANGE: RangeInclusive<f64> = 28.0..=40.0;
pub const HEAD_RANGE: RangeInclusive<f64> = 5.0..=8.0;
pub const HIP_AMP_RANGE: RangeInclusive<f64> = 18.0..=32.0;
pub const KNEE_AMP_RANGE: RangeInclusive<f64> = 30.0..=60.0;
pub const CADENCE_RANGE: RangeInclusive<u32> = 20..=36;
pub const THICKNESS_RANGE: RangeInclusive<f64> = 4.0..=7.0;
pub const PHASE_OFFSET_RANGE: RangeInclusive<f64> = 0.0..=0.25;

/// Minimum Euclidean distance between two subjects with every parameter
/// rescaled to [0, 1] over its range.
pub const MIN_SEPARATION: f64 = 0.15;
pub const MAX_ATTEMPTS: usize = 1000;

pub const DEFAULT_FRAMES: usize = 20;
pub const DEFAULT_FRAME_HEIGHT: usize = 128;
pub const DEFAULT_FRAME_WIDTH: usize = 192;
/// The only rendered camera angle: a side view.
pub const SIDE_ANGLE: u32 = 90;
/// Recorded for horizontally mirrored side views.
pub const MIRRORED_ANGLE: u32 = 270;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    /// Walking frames per sequence; the background frame comes on top.
    pub n_frames: usize,
    pub frame_h: usize,
    pub frame_w: usize,
    /// Mirror every second take of each status and record it as 270 degrees.
    pub mirror: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_frames: DEFAULT_FRAMES,
            frame_h: DEFAULT_FRAME_HEIGHT,
            frame_w: DEFAULT_FRAME_WIDTH,
            mirror: false,
        }
    }
}

pub fn carry_for(status: Status) -> Carry {
    match status {
        Status::Nm => Carry::None,
        Status::Cl => Carry::Coat,
        Status::Bg => Carry::Bag,
    }
}

fn unit(v: f64, r: &RangeInclusive<f64>) -> f64 {
    (v - r.start()) / (r.end() - r.start())
}

/// Profile parameters rescaled to [0, 1].
pub fn normalized_parameters(p: &SubjectProfile) -> [f64; 9] {
    [
        unit(p.thigh_len, &THIGH_RANGE),
        unit(p.shin_len, &SHIN_RANGE),
        unit(p.torso_len, &TORSO_RANGE),
        unit(p.head_radius, &HEAD_RANGE),
        unit(p.hip_amp, &HIP_AMP_RANGE),
        unit(p.knee_amp, &KNEE_AMP_RANGE),
        (p.cadence - CADENCE_RANGE.start()) as f64 / (CADENCE_RANGE.end() - CADENCE_RANGE.start()) as f64,
        unit(p.limb_thickness, &THICKNESS_RANGE),
        unit(p.phase_offset, &PHASE_OFFSET_RANGE),
    ]
}

pub fn profile_distance(a: &SubjectProfile, b: &SubjectProfile) -> f64 {
    let (x, y) = (normalized_parameters(a), normalized_parameters(b));
    x.iter().zip(&y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn draw_profile(subject_id: u32, rng: &mut impl Rng) -> SubjectProfile {
    SubjectProfile {
        subject_id,
        thigh_len: rng.gen_range(THIGH_RANGE),
        shin_len: rng.gen_range(SHIN_RANGE),
        torso_len: rng.gen_range(TORSO_RANGE),
        head_radius: rng.gen_range(HEAD_RANGE),
        hip_amp: rng.gen_range(HIP_AMP_RANGE),
        knee_amp: rng.gen_range(KNEE_AMP_RANGE),
        cadence: rng.gen_range(CADENCE_RANGE),
        limb_thickness: rng.gen_range(THICKNESS_RANGE),
        phase_offset: rng.gen_range(PHASE_OFFSET_RANGE),
        carry: Carry::None,
    }
}

/// Draws `n_subjects` profiles, rejecting any candidate closer than
/// `min_separation` to an accepted one.
pub fn sample_profiles(n_subjects: usize, seed: u64, min_separation: f64) -> Result<Vec<SubjectProfile>> {
    let mut rng = rng(seed, &[stream::PROFILES]);
    let mut profiles: Vec<SubjectProfile> = Vec::with_capacity(n_subjects);
    for id in 1..=n_subjects as u32 {
        let mut attempts = 0;
        loop {
            if attempts == MAX_ATTEMPTS {
                return Err(Error::Generation(format!(
                    "no profile for subject {id} at separation {min_separation} after {MAX_ATTEMPTS} attempts"
                )));
            }
            attempts += 1;
            let candidate = draw_profile(id, &mut rng);
            if profiles.iter().all(|p| profile_distance(p, &candidate) >= min_separation) {
                profiles.push(candidate);
                break;
            }
        }
    }
    Ok(profiles)
}

struct Job {
    record: ManifestRecord,
    profile: SubjectProfile,
    noise_seed: u64,
    mirror: bool,
}

/// Renders every sequence under `out_root`, writes `manifest.tsv` there and
/// returns the manifest. Sequence `i` of a subject gets status
/// `statuses[i % len]` and take number `i / len + 1`.
pub fn generate_dataset(
    n_subjects: usize,
    sequences_per_subject: usize,
    statuses: &[Status],
    seed: u64,
    out_root: &Path,
    options: &DatasetOptions,
) -> Result<Manifest> {
    if n_subjects < 2 {
        return Err(Error::Parameter(format!("need at least 2 subjects, got {n_subjects}")));
    }
    if sequences_per_subject < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 sequences per subject, got {sequences_per_subject}"
        )));
    }
    if statuses.is_empty() {
        return Err(Error::Parameter("status list is empty".into()));
    }
    let profiles = sample_profiles(n_subjects, seed, MIN_SEPARATION)?;

    let mut jobs = Vec::with_capacity(n_subjects * sequences_per_subject);
    for profile in &profiles {
        for i in 0..sequences_per_subject {
            let status = statuses[i % statuses.len()];
            let take = (i / statuses.len()) as u32 + 1;
            let mirror = options.mirror && take.is_multiple_of(2);
            let angle = if mirror { MIRRORED_ANGLE } else { SIDE_ANGLE };
            jobs.push(Job {
                record: ManifestRecord {
                    sequence_dir: sequence_dir_name(profile.subject_id, status, take, angle),
                    subject_id: profile.subject_id,
                    status,
                    angle,
                    frame_count: options.n_frames + 1,
                },
                profile: SubjectProfile {
                    carry: carry_for(status),
                    ..profile.clone()
                },
                noise_seed: derive(seed, &[stream::SEQUENCE, profile.subject_id as u64, i as u64]),
                mirror,
            });
        }
    }

    jobs.par_iter()
        .map(|job| write_sequence(job, out_root, options))
        .collect::<Result<Vec<()>>>()?;

    let manifest = Manifest {
        root: out_root.to_path_buf(),
        records: jobs.into_iter().map(|j| j.record).collect(),
    };
    manifest.save(&out_root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn write_sequence(job: &Job, out_root: &Path, options: &DatasetOptions) -> Result<()> {
    let mut seq = generate_sequence_with_masks(
        &job.profile,
        options.n_frames,
        options.frame_h,
        options.frame_w,
        job.noise_seed,
    )?;
    if job.mirror {
        seq = seq.mirrored();
    }
    let dir = out_root.join(&job.record.sequence_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (k, frame) in seq.frames.iter().enumerate() {
        write_pgm(&dir.join(frame_file_name(k)), frame)?;
    }
    Ok(())
}
