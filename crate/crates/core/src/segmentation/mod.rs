//! Frame preprocessing: grayscale, background subtraction, morphology,
//! object detection, tracking and silhouette normalization.

mod image;
pub mod labeling;

pub use self::image::{read_gray, read_mask, write_mask, write_pgm, BinaryMask, GrayFrame};
pub use labeling::{count_components, label_components, Component, Labeling};

use crate::error::{Error, Result};

/// Default background-subtraction threshold.
pub const DEFAULT_THRESHOLD: u8 = 30;
/// Default minimum object area as a fraction of the frame's pixel count.
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.01;
/// Default normalized silhouette size.
pub const DEFAULT_SILHOUETTE_SIZE: usize = 64;

/// Axis-aligned box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn centroid(&self) -> (f64, f64) {
        (
            self.x0 as f64 + self.w as f64 / 2.0,
            self.y0 as f64 + self.h as f64 / 2.0,
        )
    }

    fn from_component(c: &Component) -> Self {
        Self {
            x0: c.min_x,
            y0: c.min_y,
            w: c.max_x - c.min_x + 1,
            h: c.max_y - c.min_y + 1,
        }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x0 + self.w <= width && self.y0 + self.h <= height
    }
}

/// Fixed-size normalized silhouette with at least one foreground pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Silhouette(BinaryMask);

impl Silhouette {
    pub fn mask(&self) -> &BinaryMask {
        &self.0
    }

    pub fn into_mask(self) -> BinaryMask {
        self.0
    }
}

/// Luminance from three channel planes: round(0.299 r + 0.587 g + 0.114 b).
pub fn to_grayscale(r: &GrayFrame, g: &GrayFrame, b: &GrayFrame) -> Result<GrayFrame> {
    if !r.same_size(g) || !r.same_size(b) {
        return Err(Error::Dimension(format!(
            "channel planes differ: r {}x{}, g {}x{}, b {}x{}",
            r.width(),
            r.height(),
            g.width(),
            g.height(),
            b.width(),
            b.height()
        )));
    }
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((&r, &g), &b)| {
            let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayFrame::new(r.width(), r.height(), data)
}

/// Foreground wherever the absolute difference exceeds `threshold`.
pub fn background_subtract(
    frame: &GrayFrame,
    background: &GrayFrame,
    threshold: u8,
) -> Result<BinaryMask> {
    if !frame.same_size(background) {
        return Err(Error::Dimension(format!(
            "frame is {}x{} but background is {}x{}",
            frame.width(),
            frame.height(),
            background.width(),
            background.height()
        )));
    }
    let data = frame
        .data()
        .iter()
        .zip(background.data())
        .map(|(&f, &b)| f.abs_diff(b) > threshold)
        .collect();
    BinaryMask::from_vec(frame.width(), frame.height(), data)
}

// 3x3 square morphology, done separably: a 3-wide pass along rows, then
// along columns. `all` selects erosion (AND) vs dilation (OR); `border` is
// the value assumed outside the image.
fn morph3x3(mask: &BinaryMask, all: bool, border: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.data();
    let combine = |a: bool, b: bool| if all { a && b } else { a || b };

    let mut rows = vec![false; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let left = if x > 0 { row[x - 1] } else { border };
            let right = if x + 1 < w { row[x + 1] } else { border };
            rows[y * w + x] = combine(combine(left, row[x]), right);
        }
    }

    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let up = if y > 0 { rows[(y - 1) * w + x] } else { border };
            let down = if y + 1 < h { rows[(y + 1) * w + x] } else { border };
            out[y * w + x] = combine(combine(up, rows[y * w + x]), down);
        }
    }
    BinaryMask::from_vec(w, h, out).expect("same dimensions")
}

/// Erosion with an explicit value for out-of-image pixels.
pub fn erode_with_border(mask: &BinaryMask, border: bool) -> BinaryMask {
    morph3x3(mask, true, border)
}

/// Dilation with an explicit value for out-of-image pixels.
pub fn dilate_with_border(mask: &BinaryMask, border: bool) -> BinaryMask {
    morph3x3(mask, false, border)
}

/// 3x3 erosion; outside the image counts as background.
pub fn erode(mask: &BinaryMask) -> BinaryMask {
    erode_with_border(mask, false)
}

/// 3x3 dilation; outside the image counts as background.
pub fn dilate(mask: &BinaryMask) -> BinaryMask {
    dilate_with_border(mask, false)
}

pub fn close(mask: &BinaryMask) -> BinaryMask {
    erode(&dilate(mask))
}

pub fn open(mask: &BinaryMask) -> BinaryMask {
    dilate(&erode(mask))
}

/// One closing followed by one opening.
pub fn denoise(mask: &BinaryMask) -> BinaryMask {
    open(&close(mask))
}

/// Boxes of all 8-connected components with `area >= min_area`, largest
/// first. Equal areas keep row-major order of first appearance.
pub fn detect_objects(mask: &BinaryMask, min_area: usize) -> Vec<BoundingBox> {
    let labeling = label_components(mask);
    let mut found: Vec<(usize, BoundingBox)> = labeling
        .components
        .iter()
        .filter(|c| c.area >= min_area)
        .map(|c| (c.area, BoundingBox::from_component(c)))
        .collect();
    // Stable sort keeps scan order among equal areas.
    found.sort_by_key(|c| std::cmp::Reverse(c.0));
    found.into_iter().map(|(_, b)| b).collect()
}

/// Box of the largest component meeting `min_area`, or `None` when the
/// frame holds no object and should be discarded.
pub fn detect_object(mask: &BinaryMask, min_area: usize) -> Option<BoundingBox> {
    detect_objects(mask, min_area).into_iter().next()
}

/// Picks the detection that continues a track.
///
/// Without a previous box the largest detection wins. Otherwise the
/// detection whose centroid is nearest the previous centroid wins, ties
/// going to the larger box and then to the row-major earlier corner.
pub fn select_tracked(
    detections: &[BoundingBox],
    previous: Option<&BoundingBox>,
) -> Option<BoundingBox> {
    let key_position = |b: &BoundingBox| (b.y0, b.x0);
    match previous {
        None => detections
            .iter()
            .copied()
            .min_by(|a, b| {
                b.area()
                    .cmp(&a.area())
                    .then_with(|| key_position(a).cmp(&key_position(b)))
            }),
        Some(prev) => {
            let (px, py) = prev.centroid();
            let dist2 = |b: &BoundingBox| {
                let (cx, cy) = b.centroid();
                (cx - px).powi(2) + (cy - py).powi(2)
            };
            detections.iter().copied().min_by(|a, b| {
                dist2(a)
                    .total_cmp(&dist2(b))
                    .then_with(|| b.area().cmp(&a.area()))
                    .then_with(|| key_position(a).cmp(&key_position(b)))
            })
        }
    }
}

/// Crops `bbox`, scales it with nearest-neighbor sampling so it fills the
/// output along its limiting dimension, and centers it on an
/// `out_h x out_w` background canvas.
pub fn extract_silhouette(
    mask: &BinaryMask,
    bbox: &BoundingBox,
    out_h: usize,
    out_w: usize,
) -> Result<Silhouette> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter(format!(
            "silhouette size must be positive, got {out_h}x{out_w}"
        )));
    }
    if !bbox.fits(mask.width(), mask.height()) {
        return Err(Error::Geometry(format!(
            "box {bbox:?} is not inside the {}x{} mask",
            mask.width(),
            mask.height()
        )));
    }
    let (bw, bh) = (bbox.w, bbox.h);
    let first_fg = (0..bh)
        .flat_map(|y| (0..bw).map(move |x| (x, y)))
        .find(|&(x, y)| mask.get(bbox.x0 + x, bbox.y0 + y));
    let Some((fx, fy)) = first_fg else {
        return Err(Error::EmptySilhouette(format!(
            "box {bbox:?} contains no foreground"
        )));
    };

    let scale = (out_h as f64 / bh as f64).min(out_w as f64 / bw as f64);
    let sh = ((bh as f64 * scale).round() as usize).clamp(1, out_h);
    let sw = ((bw as f64 * scale).round() as usize).clamp(1, out_w);
    let oy = (out_h - sh) / 2;
    let ox = (out_w - sw) / 2;

    let mut out = BinaryMask::new(out_w, out_h);
    let mut any = false;
    for i in 0..sh {
        let sy = (((i as f64 + 0.5) * bh as f64 / sh as f64) as usize).min(bh - 1);
        for j in 0..sw {
            let sx = (((j as f64 + 0.5) * bw as f64 / sw as f64) as usize).min(bw - 1);
            if mask.get(bbox.x0 + sx, bbox.y0 + sy) {
                out.set(ox + j, oy + i, true);
                any = true;
            }
        }
    }
    if !any {
        // Sampling skipped every foreground pixel; keep the first one.
        let ty = (fy * sh / bh).min(sh - 1);
        let tx = (fx * sw / bw).min(sw - 1);
        out.set(ox + tx, oy + ty, true);
    }
    Ok(Silhouette(out))
}

/// Segmentation settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationConfig {
    pub threshold: u8,
    pub min_area_fraction: f64,
    pub out_h: usize,
    pub out_w: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            min_area_fraction: DEFAULT_MIN_AREA_FRACTION,
            out_h: DEFAULT_SILHOUETTE_SIZE,
            out_w: DEFAULT_SILHOUETTE_SIZE,
        }
    }
}

impl SegmentationConfig {
    pub fn min_area(&self, width: usize, height: usize) -> usize {
        ((self.min_area_fraction * (width * height) as f64).ceil() as usize).max(1)
    }
}

/// Every intermediate product of segmenting one frame.
#[derive(Clone, Debug)]
pub struct FrameStages {
    pub gray: GrayFrame,
    pub mask: BinaryMask,
    pub denoised: BinaryMask,
    pub bbox: Option<BoundingBox>,
    pub silhouette: Option<Silhouette>,
}

/// Runs subtraction, denoising, detection and extraction on one frame.
/// `previous` is the tracked box from the last kept frame.
pub fn segment_frame(
    frame: &GrayFrame,
    background: &GrayFrame,
    previous: Option<&BoundingBox>,
    config: &SegmentationConfig,
) -> Result<FrameStages> {
    let mask = background_subtract(frame, background, config.threshold)?;
    let denoised = denoise(&mask);
    let min_area = config.min_area(frame.width(), frame.height());
    let detections = detect_objects(&denoised, min_area);
    let bbox = select_tracked(&detections, previous);
    let silhouette = bbox
        .map(|b| extract_silhouette(&denoised, &b, config.out_h, config.out_w))
        .transpose()?;
    Ok(FrameStages {
        gray: frame.clone(),
        mask,
        denoised,
        bbox,
        silhouette,
    })
}
