//! Command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::neural::{load_model, save_model, ModelSpec};
use crate::pipeline::clips::Clip;
use crate::pipeline::compare::{compare_modes, resolve_spec, Experiment};
use crate::pipeline::manifest::{frame_file_name, Manifest, ManifestRecord, MANIFEST_FILE};
use crate::pipeline::preprocess::{preprocess_manifest, preprocess_sequence, segment_sequence, InputMode};
use crate::pipeline::train::{evaluate, predict, Metrics};
use crate::segmentation::{read_gray, write_mask, write_pgm};
use crate::skeleton::thin;
use crate::synthgait::generate_dataset;

#[derive(Debug, Parser)]
#[command(name = "gait3d", version, about = "Gait recognition from silhouettes and skeletons with a 3-D CNN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic multi-subject gait dataset and its manifest.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment every sequence and write the normalized frames.
    Preprocess {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// silhouette, skeleton or medial.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump every preprocessing stage of one sequence as images.
    Stages {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        seg: SegArgs,
        /// Sequence directory holding frame_0000.pgm (background), frame_0001.pgm, ...
        #[arg(long)]
        sequence: Option<PathBuf>,
        /// Background image; when given, frame_0000.pgm is a walking frame too.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write model.g3dc and metrics.csv.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on the held-out partition.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Which clips to score: test, train or all.
        #[arg(long, default_value = "test")]
        partition: Partition,
    },
    /// Identify the subject of one clip.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        sequence: Option<PathBuf>,
        /// Background image; when given, frame_0000.pgm is a walking frame too.
        #[arg(long)]
        background: Option<PathBuf>,
        /// silhouette, skeleton or medial.
        #[arg(long)]
        mode: Option<String>,
        /// First usable frame of the clip.
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Train on silhouettes and on skeletons and report both side by side.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Partition {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Settings file of `key = value` lines; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Comma-separated list from NM, CL, BG.
    #[arg(long)]
    pub statuses: Option<String>,
    /// Walking frames per sequence.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub frame_height: Option<usize>,
    #[arg(long)]
    pub frame_width: Option<usize>,
    /// Also write mirrored takes, recorded at angle 270.
    #[arg(long)]
    pub mirror: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// silhouette, skeleton or medial.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub clip_len: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Layer description file replacing the default architecture.
    #[arg(long)]
    pub model_spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegArgs {
    /// Background subtraction threshold.
    #[arg(long)]
    pub threshold: Option<u8>,
    #[arg(long)]
    pub min_area_fraction: Option<f64>,
    /// Side of the square normalized silhouette.
    #[arg(long)]
    pub silhouette_size: Option<usize>,
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> Result<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn set_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> Result<()> {
    match v {
        Some(p) => cfg.set(key, &p.to_string_lossy()),
        None => Ok(()),
    }
}

impl CommonArgs {
    fn base(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        set_opt(&mut cfg, "seed", &self.seed)?;
        set_opt(&mut cfg, "threads", &self.threads)?;
        Ok(cfg)
    }
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        set_opt(cfg, "subjects", &self.subjects)?;
        set_opt(cfg, "sequences", &self.sequences)?;
        set_opt(cfg, "statuses", &self.statuses)?;
        set_opt(cfg, "frames", &self.frames)?;
        set_opt(cfg, "frame_height", &self.frame_height)?;
        set_opt(cfg, "frame_width", &self.frame_width)?;
        if self.mirror {
            cfg.set("mirror", "true")?;
        }
        Ok(())
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        set_opt(cfg, "input_mode", &self.mode)?;
        set_opt(cfg, "clip_len", &self.clip_len)?;
        set_opt(cfg, "stride", &self.stride)?;
        set_opt(cfg, "epochs", &self.epochs)?;
        set_opt(cfg, "learning_rate", &self.learning_rate)?;
        set_opt(cfg, "batch_size", &self.batch_size)?;
        set_opt(cfg, "split_ratio", &self.split_ratio)?;
        set_path(cfg, "model_spec", &self.model_spec)
    }
}

impl SegArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        set_opt(cfg, "threshold", &self.threshold)?;
        set_opt(cfg, "min_area_fraction", &self.min_area_fraction)?;
        set_opt(cfg, "silhouette_size", &self.silhouette_size)
    }
}

/// Resolved settings plus the subcommand name, for usage errors.
struct Resolved {
    cfg: RunConfig,
    command: &'static str,
}

impl Resolved {
    fn require(&self, value: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        value.clone().ok_or_else(|| Error::Config(format!("{}: missing --{flag}", self.command)))
    }
}

fn resolve(command: &Command) -> Result<Resolved> {
    let (name, mut cfg) = match command {
        Command::Synth { common, synth, out } => {
            let mut cfg = common.base()?;
            synth.apply(&mut cfg)?;
            set_path(&mut cfg, "out", out)?;
            ("synth", cfg)
        }
        Command::Preprocess { common, seg, manifest, mode, out } => {
            let mut cfg = common.base()?;
            seg.apply(&mut cfg)?;
            set_path(&mut cfg, "manifest", manifest)?;
            set_opt(&mut cfg, "input_mode", mode)?;
            set_path(&mut cfg, "out", out)?;
            ("preprocess", cfg)
        }
        Command::Stages { common, seg, sequence, background, out } => {
            let mut cfg = common.base()?;
            seg.apply(&mut cfg)?;
            set_path(&mut cfg, "sequence", sequence)?;
            set_path(&mut cfg, "background", background)?;
            set_path(&mut cfg, "out", out)?;
            ("stages", cfg)
        }
        Command::Train { common, train, seg, manifest, out } | Command::Compare { common, train, seg, manifest, out } => {
            let mut cfg = common.base()?;
            train.apply(&mut cfg)?;
            seg.apply(&mut cfg)?;
            set_path(&mut cfg, "manifest", manifest)?;
            set_path(&mut cfg, "out", out)?;
            let name = if matches!(command, Command::Train { .. }) { "train" } else { "compare" };
            (name, cfg)
        }
        Command::Eval { common, train, seg, manifest, model, .. } => {
            let mut cfg = common.base()?;
            train.apply(&mut cfg)?;
            seg.apply(&mut cfg)?;
            set_path(&mut cfg, "manifest", manifest)?;
            set_path(&mut cfg, "model", model)?;
            ("eval", cfg)
        }
        Command::Predict { common, seg, model, sequence, background, mode, .. } => {
            let mut cfg = common.base()?;
            seg.apply(&mut cfg)?;
            set_path(&mut cfg, "model", model)?;
            set_path(&mut cfg, "sequence", sequence)?;
            set_path(&mut cfg, "background", background)?;
            set_opt(&mut cfg, "input_mode", mode)?;
            ("predict", cfg)
        }
    };
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
    }
    cfg.train.validate().map_err(|e| Error::Config(e.to_string()))?;
    if cfg.segmentation.out_h == 0 {
        return Err(Error::Config("silhouette_size must be positive".into()));
    }
    let _ = &mut cfg;
    Ok(Resolved { cfg, command: name })
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_spec_file(path: &Option<PathBuf>) -> Result<Option<ModelSpec>> {
    path.as_ref()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<ModelSpec>()
        })
        .transpose()
}

fn format_metrics(prefix: &str, m: &Metrics) -> String {
    format!(
        "{prefix}_loss={:.10} {prefix}_acc={:.10} {prefix}_mae={:.10} clips={}",
        m.loss, m.accuracy, m.mae, m.clips
    )
}

fn cmd_synth(r: &Resolved) -> Result<()> {
    let cfg = &r.cfg;
    let out = r.require(&cfg.out, "out")?;
    create_out(&out)?;
    let manifest = generate_dataset(cfg.subjects, cfg.sequences, &cfg.statuses, cfg.train.seed, &out, &cfg.dataset)?;
    cfg.save(&out)?;
    println!(
        "wrote {} sequences for {} subjects to {}",
        manifest.records.len(),
        manifest.subject_count(),
        out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn cmd_preprocess(r: &Resolved) -> Result<()> {
    let cfg = &r.cfg;
    let manifest = Manifest::load(&manifest_path(&r.require(&cfg.manifest, "manifest")?))?;
    let out = r.require(&cfg.out, "out")?;
    create_out(&out)?;
    let sequences = preprocess_manifest(&manifest, cfg.train.input_mode, &cfg.segmentation)?;
    let mut kept = 0;
    for s in &sequences {
        let dir = out.join(&s.record.sequence_dir);
        create_out(&dir)?;
        for (mask, &k) in s.frames.iter().zip(&s.kept) {
            write_mask(&dir.join(frame_file_name(k)), mask)?;
        }
        kept += s.frames.len();
    }
    cfg.save(&out)?;
    println!(
        "wrote {kept} {} frames from {} sequences to {}",
        cfg.train.input_mode,
        sequences.len(),
        out.display()
    );
    Ok(())
}

fn count_frames(dir: &Path) -> Result<usize> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("sequence directory {} does not exist", dir.display())));
    }
    Ok((0..).take_while(|&k| dir.join(frame_file_name(k)).is_file()).count())
}

fn cmd_stages(r: &Resolved) -> Result<()> {
    let cfg = &r.cfg;
    let sequence = r.require(&cfg.sequence, "sequence")?;
    let out = r.require(&cfg.out, "out")?;
    let count = count_frames(&sequence)?;
    let background = cfg.background.as_deref().map(read_gray).transpose()?;
    create_out(&out)?;
    let (mut written, mut skipped) = (0, 0);
    segment_sequence(&sequence, count, background.as_ref(), &cfg.segmentation, |k, stages| {
        let Some(sil) = stages.silhouette else {
            log::info!("frame {k}: no object detected; no stage files written");
            skipped += 1;
            return Ok(());
        };
        let name = |stage: &str| out.join(format!("{k:04}_{stage}.pgm"));
        write_pgm(&name("gray"), &stages.gray)?;
        write_mask(&name("mask"), &stages.mask)?;
        write_mask(&name("denoised"), &stages.denoised)?;
        write_mask(&name("sil"), sil.mask())?;
        write_mask(&name("skel"), thin(sil.mask()).mask())?;
        written += 1;
        Ok(())
    })?;
    println!("wrote stages for {written} frame(s) to {}; {skipped} skipped", out.display());
    Ok(())
}

fn cmd_train(r: &Resolved) -> Result<()> {
    let cfg = &r.cfg;
    let manifest = Manifest::load(&manifest_path(&r.require(&cfg.manifest, "manifest")?))?;
    let out = r.require(&cfg.out, "out")?;
    create_out(&out)?;
    cfg.save(&out)?;
    let experiment = Experiment::prepare(&manifest, &cfg.train, &cfg.segmentation)?;
    let custom = load_spec_file(&cfg.model_spec)?;
    let spec = resolve_spec(custom.as_ref(), &cfg.train, &cfg.segmentation, experiment.subjects)?;
    let result = experiment.run(&spec, &cfg.train)?;
    save_model(&result.params, &spec, &out.join("model.g3dc"))?;
    result.log.save(&out.join("metrics.csv"))?;
    println!("{}", format_metrics("train", &result.train));
    println!("{}", format_metrics("val", &result.test));
    Ok(())
}

fn cmd_eval(r: &Resolved, partition: Partition) -> Result<()> {
    let cfg = &r.cfg;
    let manifest = Manifest::load(&manifest_path(&r.require(&cfg.manifest, "manifest")?))?;
    let (params, spec) = load_model(&r.require(&cfg.model, "model")?)?;
    let train_cfg = crate::pipeline::TrainConfig { clip_len: spec.input[1], ..cfg.train.clone() };
    let seg = crate::segmentation::SegmentationConfig {
        out_h: spec.input[2],
        out_w: spec.input[3],
        ..cfg.segmentation.clone()
    };
    let experiment = Experiment::prepare(&manifest, &train_cfg, &seg)?;
    resolve_spec(Some(&spec), &train_cfg, &seg, experiment.subjects)?;
    let (train_clips, test_clips) = experiment.clips(train_cfg.input_mode, &train_cfg)?;
    let (prefix, clips): (&str, Vec<Clip>) = match partition {
        Partition::Test => ("val", test_clips),
        Partition::Train => ("train", train_clips),
        Partition::All => ("all", train_clips.into_iter().chain(test_clips).collect()),
    };
    let m = evaluate(&params, &spec, &clips)?;
    println!("{}", format_metrics(prefix, &m));
    Ok(())
}

fn cmd_predict(r: &Resolved, start: usize) -> Result<()> {
    let cfg = &r.cfg;
    let (params, spec) = load_model(&r.require(&cfg.model, "model")?)?;
    let sequence = r.require(&cfg.sequence, "sequence")?;
    let count = count_frames(&sequence)?;
    let seg = crate::segmentation::SegmentationConfig {
        out_h: spec.input[2],
        out_w: spec.input[3],
        ..cfg.segmentation.clone()
    };
    let record = ManifestRecord {
        sequence_dir: sequence.clone(),
        subject_id: 1,
        status: crate::pipeline::Status::Nm,
        angle: 90,
        frame_count: count,
    };
    let background = cfg.background.as_deref().map(read_gray).transpose()?;
    let processed = preprocess_sequence(&sequence, &record, background.as_ref(), cfg.train.input_mode, &seg)?;
    let clip = Clip::new(processed.frames.clone(), start, spec.input[1], 0, sequence.clone()).map_err(|_| {
        Error::Shape(format!(
            "{} has {} usable frames; a clip of {} from frame {start} does not fit",
            sequence.display(),
            processed.frames.len(),
            spec.input[1]
        ))
    })?;
    let (subject, probs) = predict(&params, &spec, &clip.to_tensor())?;
    println!("subject_id {subject}");
    let text: Vec<String> = probs.iter().map(|p| format!("{p:.10}")).collect();
    println!("probabilities {}", text.join(" "));
    Ok(())
}

fn cmd_compare(r: &Resolved) -> Result<()> {
    let cfg = &r.cfg;
    let manifest = Manifest::load(&manifest_path(&r.require(&cfg.manifest, "manifest")?))?;
    let out = r.require(&cfg.out, "out")?;
    create_out(&out)?;
    cfg.save(&out)?;
    let custom = load_spec_file(&cfg.model_spec)?;
    let report = compare_modes(&manifest, custom.as_ref(), &cfg.train, &cfg.segmentation)?;
    for result in [&report.silhouette, &report.skeleton] {
        let mode: InputMode = result.mode;
        result.log.save(&out.join(format!("metrics_{mode}.csv")))?;
        save_model(&result.params, &result.spec, &out.join(format!("model_{mode}.g3dc")))?;
    }
    let text = report.to_string();
    let path = out.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

fn execute(command: &Command) -> Result<()> {
    let resolved = resolve(command)?;
    if let Some(n) = resolved.cfg.threads {
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match command {
        Command::Synth { .. } => cmd_synth(&resolved),
        Command::Preprocess { .. } => cmd_preprocess(&resolved),
        Command::Stages { .. } => cmd_stages(&resolved),
        Command::Train { .. } => cmd_train(&resolved),
        Command::Eval { partition, .. } => cmd_eval(&resolved, *partition),
        Command::Predict { start, .. } => cmd_predict(&resolved, *start),
        Command::Compare { .. } => cmd_compare(&resolved),
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Synth { .. } => "synth",
        Command::Preprocess { .. } => "preprocess",
        Command::Stages { .. } => "stages",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Predict { .. } => "predict",
        Command::Compare { .. } => "compare",
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit
/// code: 0 success, 1 runtime failure, 2 usage error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(message)) => {
            let mut cmd = Cli::command();
            let sub = cmd
                .find_subcommand_mut(subcommand_name(&cli.command))
                .expect("known subcommand")
                .clone();
            sub.bin_name(format!("gait3d {}", subcommand_name(&cli.command)))
                .error(ErrorKind::InvalidValue, message)
                .exit()
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("gait3d").chain(args.iter().copied()))
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(&file, "epochs = 7\nlearning_rate = 0.2\nout = from_file\n").unwrap();
        let cli = parse(&["train", "--config", file.to_str().unwrap(), "--epochs", "3", "--manifest", "m"]).unwrap();
        let r = resolve(&cli.command).unwrap();
        assert_eq!(r.cfg.train.epochs, 3);
        assert_eq!(r.cfg.train.learning_rate, 0.2);
        assert_eq!(r.cfg.out, Some(PathBuf::from("from_file")));
        assert_eq!(r.cfg.manifest, Some(PathBuf::from("m")));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert!(parse(&["synth", "--subjects", "many"]).is_err());
        assert!(parse(&["fly"]).is_err());
        let cli = parse(&["train", "--epochs", "0"]).unwrap();
        assert!(matches!(resolve(&cli.command), Err(Error::Config(_))));
        let cli = parse(&["compare", "--mode", "outline"]).unwrap();
        assert!(matches!(resolve(&cli.command), Err(Error::Config(_))));
        let cli = parse(&["synth"]).unwrap();
        let r = resolve(&cli.command).unwrap();
        assert!(matches!(r.require(&r.cfg.out, "out"), Err(Error::Config(_))));
    }
}
