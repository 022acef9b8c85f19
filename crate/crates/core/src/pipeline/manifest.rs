//! Dataset manifests: one tab-separated record per sequence directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Recording condition of a sequence: normal walk, coat, or bag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Nm,
    Cl,
    Bg,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::Nm, Status::Cl, Status::Bg];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Nm => "NM",
            Status::Cl => "CL",
            Status::Bg => "BG",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NM" => Ok(Status::Nm),
            "CL" => Ok(Status::Cl),
            "BG" => Ok(Status::Bg),
            other => Err(Error::Dataset(format!("unknown status {other:?}, expected NM, CL or BG"))),
        }
    }
}

/// Parses a comma-separated status list such as `NM,CL,BG`.
pub fn parse_statuses(s: &str) -> Result<Vec<Status>> {
    let list = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Status>>>()?;
    if list.is_empty() {
        return Err(Error::Dataset("status list is empty".into()));
    }
    Ok(list)
}

/// Camera angles in degrees: 0..=180 in steps of 18, plus 270 for the
/// horizontally mirrored side view.
pub fn valid_angle(angle: u32) -> bool {
    (angle <= 180 && angle.is_multiple_of(18)) || angle == 270
}

pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:04}.pgm")
}

/// Relative directory for one sequence: `<subject:03>/<status>-<take:02>/<angle:03>`.
pub fn sequence_dir_name(subject_id: u32, status: Status, take: u32, angle: u32) -> PathBuf {
    PathBuf::from(format!("{subject_id:03}"))
        .join(format!("{status}-{take:02}"))
        .join(format!("{angle:03}"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    /// As written in the manifest, relative to its directory.
    pub sequence_dir: PathBuf,
    pub subject_id: u32,
    pub status: Status,
    pub angle: u32,
    /// Frame files in the directory, background frame included.
    pub frame_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    /// Directory that relative `sequence_dir`s resolve against.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Dataset(format!("manifest line {}: {msg}", i + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            let [dir, subject, status, angle, count] = fields[..] else {
                return Err(err(format!("expected 5 tab-separated fields, got {}", fields.len())));
            };
            let subject_id: u32 = subject.trim().parse().map_err(|_| err(format!("bad subject id {subject:?}")))?;
            if subject_id == 0 {
                return Err(err("subject ids start at 1".into()));
            }
            let status = status.parse().map_err(|e: Error| err(e.to_string()))?;
            let angle: u32 = angle.trim().parse().map_err(|_| err(format!("bad angle {angle:?}")))?;
            if !valid_angle(angle) {
                return Err(err(format!("angle {angle} is not one of 0, 18, ..., 180 or 270")));
            }
            let frame_count = count.trim().parse().map_err(|_| err(format!("bad frame count {count:?}")))?;
            records.push(ManifestRecord {
                sequence_dir: PathBuf::from(dir),
                subject_id,
                status,
                angle,
                frame_count,
            });
        }
        Ok(Self { root: root.to_path_buf(), records })
    }

    /// Reads and validates a manifest file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new("."));
        let manifest = Self::parse(&text, root)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.sequence_dir)
    }

    /// Number of subjects (ids are contiguous once validated).
    pub fn subject_count(&self) -> usize {
        self.records.iter().map(|r| r.subject_id).max().unwrap_or(0) as usize
    }

    /// Checks the id set is exactly 1..=N and every directory holds its
    /// frame files.
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Dataset("manifest has no records".into()));
        }
        let n = self.subject_count();
        let mut seen = vec![false; n];
        for r in &self.records {
            seen[r.subject_id as usize - 1] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Dataset(format!(
                "subject ids are not contiguous: {} missing from 1..={n}",
                missing + 1
            )));
        }
        for r in &self.records {
            let dir = self.resolve(r);
            if !dir.is_dir() {
                return Err(Error::Dataset(format!("sequence directory {} does not exist", dir.display())));
            }
            if let Some(k) = (0..r.frame_count).find(|&k| !dir.join(frame_file_name(k)).is_file()) {
                return Err(Error::Dataset(format!("{} is missing {}", dir.display(), frame_file_name(k))));
            }
            if dir.join(frame_file_name(r.frame_count)).exists() {
                return Err(Error::Dataset(format!(
                    "{} holds more than the {} frames listed",
                    dir.display(),
                    r.frame_count
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# sequence_dir\tsubject_id\tstatus\tangle\tframe_count")?;
        for r in &self.records {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}",
                r.sequence_dir.display(),
                r.subject_id,
                r.status,
                r.angle,
                r.frame_count
            )?;
        }
        Ok(())
    }
}
