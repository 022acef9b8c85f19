//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass substrings as arguments to run a subset,
//! e.g. `cargo test --release --test acceptance -- conv thinning`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gait3d::neural::*;
use gait3d::pipeline::manifest::Status;
use gait3d::pipeline::REPORT_ROWS;
use gait3d::seed::derive;
use gait3d::segmentation::*;
use gait3d::skeleton::thin;
use gait3d::synthgait::dataset::{carry_for, DatasetOptions};
use gait3d::synthgait::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type GradientCase = (&'static str, fn(&mut ChaCha8Rng) -> f64);

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::new(dims, random_vec(rng, dims.iter().product())).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, max: usize) -> BinaryMask {
    let (w, h) = (rng.gen_range(1..=max), rng.gen_range(1..=max));
    let p = rng.gen_range(0.1..0.9);
    BinaryMask::from_vec(w, h, (0..w * h).map(|_| rng.gen_bool(p)).collect()).unwrap()
}

// ---------------------------------------------------------------- conv3d

fn conv_oracle(input: &Tensor4, layer: &Conv3dLayer) -> Vec<f64> {
    let [c, t, h, w] = input.dims();
    let k = layer.kernel();
    let (ot, oh, ow) = (t - k.time + 1, h - k.rows + 1, w - k.cols + 1);
    let mut out = Vec::with_capacity(layer.out_channels() * ot * oh * ow);
    for j in 0..layer.out_channels() {
        for z in 0..ot {
            for x in 0..oh {
                for y in 0..ow {
                    let mut s = layer.bias()[j];
                    for m in 0..c {
                        for p in 0..k.rows {
                            for q in 0..k.cols {
                                for r in 0..k.time {
                                    s += layer.weights()[layer.weight_index(j, m, p, q, r)]
                                        * input.data()[((m * t + z + r) * h + x + p) * w + y + q];
                                }
                            }
                        }
                    }
                    out.push(s.tanh());
                }
            }
        }
    }
    out
}

fn random_conv(rng: &mut ChaCha8Rng, max_dims: [usize; 4]) -> (Tensor4, Conv3dLayer) {
    let k = KernelDims::new(rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let dims = [
        rng.gen_range(1..=max_dims[0]),
        rng.gen_range(k.time..=max_dims[1]),
        rng.gen_range(k.rows..=max_dims[2]),
        rng.gen_range(k.cols..=max_dims[3]),
    ];
    let oc = rng.gen_range(1..=3);
    let weights = random_vec(rng, oc * dims[0] * k.volume());
    let bias = random_vec(rng, oc);
    let layer = Conv3dLayer::new(dims[0], oc, k, weights, bias).unwrap();
    (random_tensor(rng, dims), layer)
}

fn conv_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(619);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (mut input, layer) = random_conv(&mut rng, [2, 6, 8, 8]);
        if i % 2 == 1 {
            for v in input.data_mut() {
                *v = if *v > 0.0 { 1.0 } else { 0.0 };
            }
        }
        let got = conv3d_forward(&input, &layer).map_err(|e| e.to_string())?;
        let want = conv_oracle(&input, &layer);
        ensure(got.len() == want.len(), || format!("instance {i}: length mismatch"))?;
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= 1e-12, || format!("instance {i}: max abs error {worst:e}"))?;
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "100 instances, max abs error {worst:.1e} (tol 1e-12), {:.2} s (limit 10 s)",
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------------- gradients

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn central(x: &mut [f64], i: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let hi = f(x);
    x[i] = orig - FD_STEP;
    let lo = f(x);
    x[i] = orig;
    (hi - lo) / (2.0 * FD_STEP)
}

fn weighted(out: &[f64], w: &[f64]) -> f64 {
    out.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Checks every coordinate of `x` and returns the worst relative error.
fn check_all(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| rel_err(analytic[i], central(&mut x, i, &mut f)))
        .fold(0.0, f64::max)
}

fn conv_gradient_instance(rng: &mut ChaCha8Rng) -> f64 {
    let (input, layer) = random_conv(rng, [2, 4, 5, 5]);
    let (c, oc, k) = (layer.in_channels(), layer.out_channels(), layer.kernel());
    let out_dims = layer.output_dims(input.dims()).unwrap();
    let upstream = random_vec(rng, out_dims.iter().product());
    let pre = conv3d_preactivation(&input, &layer).unwrap();
    let g = conv3d_backward(&Tensor4::new(out_dims, upstream.clone()).unwrap(), &input, &pre, &layer).unwrap();
    let loss = |x: &Tensor4, l: &Conv3dLayer| weighted(conv3d_forward(x, l).unwrap().data(), &upstream);
    let dims = input.dims();
    let (w0, b0) = (layer.weights().to_vec(), layer.bias().to_vec());
    let e_in = check_all(input.data(), g.input.data(), |x| loss(&Tensor4::new(dims, x.to_vec()).unwrap(), &layer));
    let e_w = check_all(&w0, &g.weights, |w| {
        loss(&input, &Conv3dLayer::new(c, oc, k, w.to_vec(), b0.clone()).unwrap())
    });
    let e_b = check_all(&b0, &g.bias, |b| {
        loss(&input, &Conv3dLayer::new(c, oc, k, w0.clone(), b.to_vec()).unwrap())
    });
    e_in.max(e_w).max(e_b)
}

fn dense_gradient_instance(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, n_out) = (rng.gen_range(1..=12), rng.gen_range(1..=6));
    let w0 = random_vec(rng, n_in * n_out);
    let b0 = random_vec(rng, n_out);
    let layer = DenseLayer::new(n_in, n_out, w0.clone(), b0.clone()).unwrap();
    let input = random_vec(rng, n_in);
    let upstream = random_vec(rng, n_out);
    let g = dense_backward(&upstream, &input, &layer).unwrap();
    let loss = |x: &[f64], l: &DenseLayer| weighted(&dense_forward(x, l).unwrap(), &upstream);
    let e_in = check_all(&input, &g.input, |x| loss(x, &layer));
    let e_w = check_all(&w0, &g.weights, |w| {
        loss(&input, &DenseLayer::new(n_in, n_out, w.to_vec(), b0.clone()).unwrap())
    });
    let e_b = check_all(&b0, &g.bias, |b| {
        loss(&input, &DenseLayer::new(n_in, n_out, w0.clone(), b.to_vec()).unwrap())
    });
    e_in.max(e_w).max(e_b)
}

fn pool_gradient_instance(rng: &mut ChaCha8Rng) -> f64 {
    let window = [rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3)];
    let stride = [
        rng.gen_range(1..=window[0]),
        rng.gen_range(1..=window[1]),
        rng.gen_range(1..=window[2]),
    ];
    let dims = [
        rng.gen_range(1..=2),
        rng.gen_range(window[0]..=4),
        rng.gen_range(window[1]..=6),
        rng.gen_range(window[2]..=6),
    ];
    // A shuffled ramp with gaps of 0.01, far wider than the step: no ties.
    let n: usize = dims.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 1.0).collect();
    for i in (1..n).rev() {
        values.swap(i, rng.gen_range(0..=i));
    }
    let (out, argmax) = maxpool3d_forward(&Tensor4::new(dims, values.clone()).unwrap(), window, stride).unwrap();
    let upstream = random_vec(rng, out.len());
    let g = maxpool3d_backward(&Tensor4::new(out.dims(), upstream.clone()).unwrap(), &argmax, dims).unwrap();
    check_all(&values, g.data(), |x| {
        let t = Tensor4::new(dims, x.to_vec()).unwrap();
        weighted(maxpool3d_forward(&t, window, stride).unwrap().0.data(), &upstream)
    })
}

fn softmax_gradient_instance(rng: &mut ChaCha8Rng) -> f64 {
    let k = rng.gen_range(2..=10);
    let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let label = rng.gen_range(0..k);
    let g = softmax_cross_entropy(&logits, label).unwrap();
    check_all(&logits, &g.grad_logits, |l| softmax_cross_entropy(l, label).unwrap().loss)
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(620);
    let kinds: [GradientCase; 4] = [
        ("conv3d", conv_gradient_instance),
        ("dense", dense_gradient_instance),
        ("maxpool", pool_gradient_instance),
        ("softmax-ce", softmax_gradient_instance),
    ];
    let mut summary = Vec::new();
    for (name, instance) in kinds {
        let worst = (0..20).map(|_| instance(&mut rng)).fold(0.0, f64::max);
        ensure(worst < FD_TOL, || format!("{name}: worst relative error {worst:.2e} (tol 1e-4)"))?;
        summary.push(format!("{name} {worst:.1e}"));
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "20 instances each, worst rel. error: {} (tol 1e-4), {:.2} s (limit 60 s)",
        summary.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

// -------------------------------------------------------------- thinning

fn flood_fill_components(m: &BinaryMask) -> usize {
    let (w, h) = (m.width() as isize, m.height() as isize);
    let mut seen = vec![false; (w * h) as usize];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start as usize] || !m.data()[start as usize] {
            continue;
        }
        count += 1;
        seen[start as usize] = true;
        let mut stack = vec![(start % w, start / w)];
        while let Some((x, y)) = stack.pop() {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if m.get_or_background(nx, ny) && !seen[(ny * w + nx) as usize] {
                        seen[(ny * w + nx) as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    count
}

fn has_block(m: &BinaryMask) -> bool {
    (1..m.height()).any(|y| (1..m.width()).any(|x| m.get(x, y) && m.get(x - 1, y) && m.get(x, y - 1) && m.get(x - 1, y - 1)))
}

fn thinning_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(621);
    for i in 0..500 {
        let m = random_mask(&mut rng, 48);
        let t = thin(&m).into_mask();
        ensure(t.is_subset_of(&m), || format!("mask {i}: not a subset"))?;
        ensure(thin(&t).into_mask() == t, || format!("mask {i}: not idempotent"))?;
        ensure(!has_block(&t), || format!("mask {i}: 2x2 block survives"))?;
        let (before, after) = (flood_fill_components(&m), flood_fill_components(&t));
        ensure(before == after, || format!("mask {i}: {before} components became {after}"))?;
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "500 masks up to 48x48: subset, idempotent, no 2x2 block, components preserved, {:.2} s (limit 30 s)",
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------------ morphology

fn morphology_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(622);
    for i in 0..500 {
        let m = random_mask(&mut rng, 48);
        ensure(erode_with_border(&m.complement(), true) == dilate(&m).complement(), || {
            format!("mask {i}: erode(not m) != not dilate(m)")
        })?;
        ensure(dilate_with_border(&m.complement(), true) == erode(&m).complement(), || {
            format!("mask {i}: dilate(not m) != not erode(m)")
        })?;
        let mut smaller = m.clone();
        for y in 0..m.height() {
            for x in 0..m.width() {
                if rng.gen_bool(0.3) {
                    smaller.set(x, y, false);
                }
            }
        }
        ensure(dilate(&smaller).is_subset_of(&dilate(&m)), || format!("mask {i}: dilation not monotone"))?;
        ensure(erode(&smaller).is_subset_of(&erode(&m)), || format!("mask {i}: erosion not monotone"))?;
    }
    Ok("500 masks up to 48x48: duality both ways, erosion and dilation monotone".into())
}

// ---------------------------------------------------------- segmentation

fn segmentation_recovery() -> Outcome {
    let seed = 623;
    let opts = DatasetOptions::default();
    let config = SegmentationConfig::default();
    let profiles = sample_profiles(10, seed, 0.15).map_err(|e| e.to_string())?;
    let (mut good, mut total, mut worst) = (0usize, 0usize, 1.0f64);
    for p in &profiles {
        for (i, status) in Status::ALL.iter().enumerate() {
            let profile = SubjectProfile { carry: carry_for(*status), ..p.clone() };
            let noise = derive(seed, &[p.subject_id as u64, i as u64]);
            let seq = generate_sequence_with_masks(&profile, opts.n_frames, opts.frame_h, opts.frame_w, noise)
                .map_err(|e| e.to_string())?;
            let mut previous: Option<BoundingBox> = None;
            for k in 1..seq.frames.len() {
                let stages = segment_frame(&seq.frames[k], &seq.frames[0], previous.as_ref(), &config)
                    .map_err(|e| e.to_string())?;
                previous = stages.bbox.or(previous);
                let iou = stages.denoised.iou(&seq.masks[k]);
                worst = worst.min(iou);
                total += 1;
                good += usize::from(iou >= 0.9);
            }
        }
    }
    let rate = good as f64 / total as f64;
    ensure(rate >= 0.95, || format!("{good}/{total} frames at IoU >= 0.9 ({:.1}%, need 95%)", 100.0 * rate))?;
    Ok(format!(
        "{good}/{total} frames ({:.1}%) at IoU >= 0.9 (need 95%), worst IoU {worst:.3}",
        100.0 * rate
    ))
}

// ------------------------------------------------------------ end to end

fn work_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn gait3d(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gait3d"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("cannot run gait3d: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "gait3d {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

struct Run {
    dir: PathBuf,
    report: String,
    elapsed: Duration,
}

/// `synth --subjects 10 --sequences 12 --seed 42`, then `compare` with
/// default settings.
fn full_experiment(name: &str) -> Result<Run, String> {
    let dir = work_dir().join(name);
    let _ = std::fs::remove_dir_all(&dir);
    let (data, out) = (dir.join("data"), dir.join("out"));
    let start = Instant::now();
    gait3d(&["synth", "--subjects", "10", "--sequences", "12", "--seed", "42", "--out", data.to_str().unwrap()])?;
    let report = gait3d(&["compare", "--manifest", data.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    Ok(Run { dir: out, report, elapsed: start.elapsed() })
}

/// The two numeric columns of a report row, with any `%` stripped.
fn report_row(report: &str, name: &str) -> Option<[f64; 2]> {
    let line = report.lines().find(|l| l.starts_with(name) && l[name.len()..].starts_with(' '))?;
    let nums: Vec<f64> = line[name.len()..]
        .split_whitespace()
        .filter_map(|w| w.trim_end_matches('%').parse().ok())
        .collect();
    (nums.len() == 2).then(|| [nums[0], nums[1]])
}

fn last_val_acc(csv: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    let last = text.lines().last().ok_or("empty metrics file")?;
    last.split(',').nth(5).and_then(|v| v.parse().ok()).ok_or_else(|| format!("bad row {last:?}"))
}

fn end_to_end(first: &Result<Run, String>) -> Outcome {
    let run = first.as_ref().map_err(Clone::clone)?;
    for name in REPORT_ROWS {
        ensure(report_row(&run.report, name).is_some(), || format!("report lacks row {name:?} for both modes"))?;
    }
    let [sil, skel] = report_row(&run.report, "Value Accuracy").unwrap();
    let csv_sil = last_val_acc(&run.dir.join("metrics_silhouette.csv"))?;
    let csv_skel = last_val_acc(&run.dir.join("metrics_skeleton.csv"))?;
    ensure((csv_sil * 100.0 - sil).abs() < 0.006 && (csv_skel * 100.0 - skel).abs() < 0.006, || {
        "report and metrics CSVs disagree".into()
    })?;
    ensure(csv_sil >= 0.90 && csv_skel >= 0.90, || {
        format!("test accuracy silhouette {csv_sil:.4}, skeleton {csv_skel:.4} (need 0.90 each)")
    })?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let secs = run.elapsed.as_secs_f64();
    let timing = if cores >= 4 {
        within(run.elapsed, 1800.0)?;
        format!("{secs:.0} s on {cores} cores (limit 1800 s on 4 cores)")
    } else {
        format!("{secs:.0} s on {cores} core(s); 4-core limit of 1800 s not checkable here")
    };
    Ok(format!(
        "test accuracy silhouette {csv_sil:.4}, skeleton {csv_skel:.4} (need 0.90), all 5 rows present, {timing}"
    ))
}

fn determinism(first: &Result<Run, String>) -> Outcome {
    let a = first.as_ref().map_err(Clone::clone)?;
    let b = full_experiment("second")?;
    let files = [
        "metrics_silhouette.csv",
        "metrics_skeleton.csv",
        "model_silhouette.g3dc",
        "model_skeleton.g3dc",
        "report.txt",
    ];
    for f in files {
        let read = |dir: &Path| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"));
        ensure(read(&a.dir)? == read(&b.dir)?, || format!("{f} differs between runs"))?;
    }
    Ok(format!("second full run byte-identical: {}", files.join(", ")))
}

// --------------------------------------------------------- serialization

fn serialization() -> Outcome {
    let spec = ModelSpec::default_for([1, 16, 64, 64], 10);
    let params = init_params(&spec, 42).map_err(|e| e.to_string())?;
    let bytes = encode_model(&spec, &params).map_err(|e| e.to_string())?;
    let (spec2, params2) = decode_model(&bytes).map_err(|e| e.to_string())?;
    ensure(spec2 == spec, || "spec changed in round trip".into())?;
    let bits = |p: &ModelParams| -> Vec<u64> { p.buffers().iter().flat_map(|b| b.iter().map(|v| v.to_bits())).collect() };
    ensure(bits(&params2) == bits(&params), || "parameters not bit-identical".into())?;
    let path = work_dir().join("roundtrip.g3dc");
    std::fs::create_dir_all(work_dir()).map_err(|e| e.to_string())?;
    save_model(&params, &spec, &path).map_err(|e| e.to_string())?;
    let (params3, _) = load_model(&path).map_err(|e| e.to_string())?;
    ensure(bits(&params3) == bits(&params), || "file round trip not bit-identical".into())?;

    // Every truncation and every single-byte flip of a small model.
    let small: ModelSpec = "input 1 4 6 6\nconv3d 2 2 3 3\nmaxpool3d 1 2 2\nflatten\ndropout 0.5\ndense 3\nsoftmax\n"
        .parse()
        .map_err(|e: gait3d::Error| e.to_string())?;
    let good = encode_model(&small, &init_params(&small, 1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut rejected = 0;
    let mut corrupt: Vec<Vec<u8>> = (0..good.len()).map(|n| good[..n].to_vec()).collect();
    for i in 0..good.len() {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut b = good.clone();
            b[i] ^= flip;
            corrupt.push(b);
        }
    }
    let mut appended = good.clone();
    appended.push(0);
    corrupt.push(appended);
    for (i, bad) in corrupt.iter().enumerate() {
        match std::panic::catch_unwind(|| decode_model(bad)) {
            Err(_) => return Err(format!("corrupted input {i} panicked")),
            Ok(Ok(_)) => return Err(format!("corrupted input {i} was accepted")),
            Ok(Err(e)) => {
                ensure(!e.to_string().is_empty(), || format!("corrupted input {i}: empty diagnostic"))?;
                rejected += 1;
            }
        }
    }
    // The command-line tool reports a bad file as an ordinary error.
    let bad_path = work_dir().join("corrupt.g3dc");
    std::fs::write(&bad_path, &good[..good.len() / 2]).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_gait3d"))
        .args(["predict", "--model", bad_path.to_str().unwrap(), "--sequence", "."])
        .output()
        .map_err(|e| e.to_string())?;
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure(out.status.code() == Some(1) && stderr.contains("at byte"), || {
        format!("CLI on a corrupt model: status {:?}, stderr {stderr:?}", out.status.code())
    })?;
    Ok(format!(
        "{} parameters bit-exact through memory and file; {rejected}/{} corrupted files rejected with diagnostics, no panics",
        params.parameter_count(),
        corrupt.len()
    ))
}

// ------------------------------------------------------------ duty cycle

fn duty_cycle() -> Outcome {
    for cadence in (10..=100).step_by(10) {
        let cycles = 7u64;
        let (mut left, mut right) = (0u64, 0u64);
        for t in 0..cadence as u64 * cycles {
            let g = gait_phase(t, cadence).map_err(|e| e.to_string())?;
            left += u64::from(g.left_in_stance);
            right += u64::from(g.right_in_stance);
        }
        let frames = cadence as u64 * cycles;
        ensure(10 * left == 6 * frames && 10 * right == 6 * frames, || {
            format!("cadence {cadence}: stance {left}/{frames} left, {right}/{frames} right")
        })?;
    }
    Ok("stance fraction exactly 0.6 for both legs at cadences 10, 20, ..., 100".into())
}

// ----------------------------------------------------------------- main

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let quick: [Criterion; 7] = [
        ("conv3d oracle equivalence", conv_oracle_equivalence),
        ("gradient checks", gradient_checks),
        ("thinning suite", thinning_suite),
        ("morphology duality and monotonicity", morphology_properties),
        ("segmentation recovery", segmentation_recovery),
        ("serialization", serialization),
        ("gait-phase duty cycle", duty_cycle),
    ];
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut emit = |name: &'static str, outcome: Outcome| {
        let line = match &outcome {
            Ok(detail) => format!("PASS  {name}: {detail}"),
            Err(reason) => format!("FAIL  {name}: {reason}"),
        };
        println!("{line}");
        std::io::stdout().flush().ok();
        results.push((name, outcome));
    };
    for (name, check) in quick {
        if selected(name) {
            emit(name, check());
        }
    }
    let (e2e, det) = ("end-to-end experiment", "determinism");
    if selected(e2e) || selected(det) {
        let first = full_experiment("first");
        if let Ok(run) = &first {
            for line in run.report.lines() {
                println!("      | {line}");
            }
        }
        if selected(e2e) {
            emit(e2e, end_to_end(&first));
        }
        if selected(det) {
            emit(det, determinism(&first));
        }
    }
    let failed = results.iter().filter(|r| r.1.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
