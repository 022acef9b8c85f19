//! Run settings merged from defaults, a `key = value` file and flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::manifest::{parse_statuses, Status};
use crate::pipeline::train::TrainConfig;
use crate::segmentation::SegmentationConfig;
use crate::synthgait::DatasetOptions;

pub const RUN_CONFIG_FILE: &str = "run_config.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub segmentation: SegmentationConfig,
    pub subjects: usize,
    pub sequences: usize,
    pub statuses: Vec<Status>,
    pub dataset: DatasetOptions,
    pub threads: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub model_spec: Option<PathBuf>,
    pub sequence: Option<PathBuf>,
    pub background: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            segmentation: SegmentationConfig::default(),
            subjects: 10,
            sequences: 12,
            statuses: Status::ALL.to_vec(),
            dataset: DatasetOptions::default(),
            threads: None,
            manifest: None,
            out: None,
            model: None,
            model_spec: None,
            sequence: None,
            background: None,
        }
    }
}

/// Every recognized key, in the order `render` writes them.
pub const KEYS: [&str; 25] = [
    "seed",
    "input_mode",
    "clip_len",
    "stride",
    "epochs",
    "learning_rate",
    "batch_size",
    "split_ratio",
    "threshold",
    "min_area_fraction",
    "silhouette_size",
    "subjects",
    "sequences",
    "statuses",
    "frames",
    "frame_height",
    "frame_width",
    "mirror",
    "threads",
    "manifest",
    "out",
    "model",
    "model_spec",
    "sequence",
    "background",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}, expected true or false"))),
    }
}

fn path_opt(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.train.seed = parse(key, value)?,
            "input_mode" => self.train.input_mode = value.parse()?,
            "clip_len" => self.train.clip_len = parse(key, value)?,
            "stride" => self.train.stride = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "split_ratio" => self.train.split_ratio = parse(key, value)?,
            "threshold" => self.segmentation.threshold = parse(key, value)?,
            "min_area_fraction" => self.segmentation.min_area_fraction = parse(key, value)?,
            "silhouette_size" => {
                let n = parse(key, value)?;
                self.segmentation.out_h = n;
                self.segmentation.out_w = n;
            }
            "subjects" => self.subjects = parse(key, value)?,
            "sequences" => self.sequences = parse(key, value)?,
            "statuses" => {
                self.statuses = parse_statuses(value).map_err(|e| Error::Config(e.to_string()))?
            }
            "frames" => self.dataset.n_frames = parse(key, value)?,
            "frame_height" => self.dataset.frame_h = parse(key, value)?,
            "frame_width" => self.dataset.frame_w = parse(key, value)?,
            "mirror" => self.dataset.mirror = parse_bool(key, value)?,
            "threads" => {
                self.threads = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "manifest" => self.manifest = path_opt(value),
            "out" => self.out = path_opt(value),
            "model" => self.model = path_opt(value),
            "model_spec" => self.model_spec = path_opt(value),
            "sequence" => self.sequence = path_opt(value),
            "background" => self.background = path_opt(value),
            other => return Err(Error::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn value(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "seed" => self.train.seed.to_string(),
            "input_mode" => self.train.input_mode.to_string(),
            "clip_len" => self.train.clip_len.to_string(),
            "stride" => self.train.stride.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "learning_rate" => self.train.learning_rate.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "split_ratio" => self.train.split_ratio.to_string(),
            "threshold" => self.segmentation.threshold.to_string(),
            "min_area_fraction" => self.segmentation.min_area_fraction.to_string(),
            "silhouette_size" => self.segmentation.out_h.to_string(),
            "subjects" => self.subjects.to_string(),
            "sequences" => self.sequences.to_string(),
            "statuses" => self.statuses.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
            "frames" => self.dataset.n_frames.to_string(),
            "frame_height" => self.dataset.frame_h.to_string(),
            "frame_width" => self.dataset.frame_w.to_string(),
            "mirror" => self.dataset.mirror.to_string(),
            "threads" => self.threads.map(|t| t.to_string()).unwrap_or_else(|| "auto".into()),
            "manifest" => path(&self.manifest),
            "out" => path(&self.out),
            "model" => path(&self.model),
            "model_spec" => path(&self.model_spec),
            "sequence" => path(&self.sequence),
            "background" => path(&self.background),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// The fully resolved settings in the same `key = value` format.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            writeln!(s, "{key} = {}", self.value(key)).expect("writing to a String");
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_CONFIG_FILE);
        std::fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::preprocess::InputMode;

    #[test]
    fn render_parses_back() {
        let mut cfg = RunConfig::default();
        cfg.train.seed = 7;
        cfg.train.learning_rate = 0.0125;
        cfg.train.input_mode = InputMode::Skeleton;
        cfg.segmentation.out_h = 48;
        cfg.segmentation.out_w = 48;
        cfg.statuses = vec![Status::Nm, Status::Bg];
        cfg.dataset.mirror = true;
        cfg.threads = Some(3);
        cfg.out = Some("runs/a b".into());
        let mut back = RunConfig::default();
        back.apply_text(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.render().lines().count(), KEYS.len());
    }

    #[test]
    fn text_format_and_errors() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nepochs = 3\n  split_ratio=0.5  \nmanifest = data/manifest.tsv\n")
            .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.split_ratio, 0.5);
        assert_eq!(cfg.manifest, Some(PathBuf::from("data/manifest.tsv")));
        for bad in ["epochs 3", "epochs = three", "colour = red", "mirror = maybe", "input_mode = x"] {
            assert!(matches!(RunConfig::default().apply_text(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
