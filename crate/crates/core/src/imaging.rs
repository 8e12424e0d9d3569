//! Time-colour overlays of trajectories and extraction of position traces
//! from dark pixels in recorded frames.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};

use crate::engine::{Sample, TrialOutcome, Trajectory};
use crate::error::{Error, Result};
use crate::floorplan::{CellKind, FloorPlan, Pos};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorStop {
    pub t: f64,
    pub rgb: [u8; 3],
}

/// Blue, cyan, yellow, red at equally spaced knots.
pub const TIME_STOPS: [ColorStop; 4] = [
    ColorStop { t: 0.0, rgb: [0, 0, 255] },
    ColorStop { t: 1.0 / 3.0, rgb: [0, 255, 255] },
    ColorStop { t: 2.0 / 3.0, rgb: [255, 255, 0] },
    ColorStop { t: 1.0, rgb: [255, 0, 0] },
];

/// Colour of normalized time `t`: piecewise-linear through [`TIME_STOPS`],
/// each channel rounded half up.
pub fn time_color(t: f64) -> Result<[u8; 3]> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Argument(format!("normalized time {t} is outside [0, 1]")));
    }
    let segments = (TIME_STOPS.len() - 1) as f64;
    let seg = ((t * segments).floor() as usize).min(TIME_STOPS.len() - 2);
    let u = t * segments - seg as f64;
    let (a, b) = (TIME_STOPS[seg].rgb, TIME_STOPS[seg + 1].rgb);
    Ok(std::array::from_fn(|c| {
        let v = a[c] as f64 + (b[c] as f64 - a[c] as f64) * u;
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayStyle {
    pub zoom: u32,
    pub wall: [u8; 3],
    pub background: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        OverlayStyle {
            zoom: 1,
            wall: [128, 128, 128],
            background: [255, 255, 255],
        }
    }
}

/// Paints each visited cell with the colour of its latest visit.
///
/// Visit times are normalized by the trajectory's duration; a trajectory of
/// a single sample normalizes to 1 (red).
pub fn render_overlay(traj: &Trajectory, plan: &FloorPlan, style: &OverlayStyle) -> Result<RgbImage> {
    if traj.samples.is_empty() {
        return Err(Error::Argument("trajectory has no samples".into()));
    }
    if style.zoom == 0 {
        return Err(Error::Argument("zoom must be at least 1".into()));
    }
    traj.check_on(plan)?;
    let mut latest: Vec<Option<u32>> = vec![None; plan.len()];
    for s in &traj.samples {
        latest[plan.index(s.pos)] = Some(s.step);
    }
    let t0 = traj.samples[0].step;
    let span = traj.duration();
    let mut colors = Vec::with_capacity(plan.len());
    for (i, &kind) in plan.cells().iter().enumerate() {
        let c = match (kind, latest[i]) {
            (CellKind::Wall, _) => style.wall,
            (_, Some(step)) => {
                let t = if span == 0 {
                    1.0
                } else {
                    (step - t0) as f64 / span as f64
                };
                time_color(t)?
            }
            (_, None) => style.background,
        };
        colors.push(c);
    }
    let z = style.zoom;
    let w = plan.width() as u32;
    Ok(RgbImage::from_fn(w * z, plan.height() as u32 * z, |x, y| {
        Rgb(colors[((y / z) * w + x / z) as usize])
    }))
}

/// Writes a binary (P6) portable pixmap.
pub fn encode_ppm(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)?;
    Ok(buf)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        ExtendedColorType::Rgb8,
    )?;
    Ok(buf)
}

pub fn encode_gray_png(img: &image::GrayImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        ExtendedColorType::L8,
    )?;
    Ok(buf)
}

/// Saves an overlay as PPM when the extension is `.ppm`, PNG otherwise.
pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => encode_ppm(img)?,
        _ => encode_png(img)?,
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// An ordered recording of equally sized RGB frames.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<RgbImage>,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
}

impl FrameSequence {
    pub fn new(frames: Vec<RgbImage>, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Argument(format!("fps must be positive, got {fps}")));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::Argument("frame sequence is empty".into()))?;
        let (width, height) = first.dimensions();
        if let Some(i) = frames.iter().position(|f| f.dimensions() != (width, height)) {
            return Err(Error::Argument(format!(
                "frame {i} is {:?}, expected {width}x{height}",
                frames[i].dimensions()
            )));
        }
        Ok(FrameSequence {
            frames,
            fps,
            width,
            height,
        })
    }

    /// Loads every `.ppm`, `.pgm`, `.pbm` or `.pnm` file in `dir`, in
    /// lexicographic file-name order. Grey frames are expanded to RGB.
    pub fn from_dir(dir: &Path, fps: f64) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("ppm" | "pgm" | "pbm" | "pnm")
                )
            })
            .collect();
        paths.sort();
        let frames = paths
            .iter()
            .map(|p| Ok(image::open(p)?.to_rgb8()))
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames, fps)
    }
}

/// Which pixels count as the animal's body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DarkTest {
    /// Every channel below the threshold.
    #[default]
    AllChannels,
    /// Rec. 601 luma below the threshold.
    Luminance,
}

impl DarkTest {
    fn is_dark(self, px: &Rgb<u8>, threshold: u8) -> bool {
        match self {
            DarkTest::AllChannels => px.0.iter().all(|&c| c < threshold),
            DarkTest::Luminance => {
                let [r, g, b] = px.0.map(f64::from);
                0.299 * r + 0.587 * g + 0.114 * b < threshold as f64
            }
        }
    }
}

/// Pixel-to-cell mapping: `cell = pixel * scale + offset`, then rounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub scale: (f64, f64),
    pub offset: (f64, f64),
}

impl Default for Registration {
    fn default() -> Self {
        Registration {
            scale: (1.0, 1.0),
            offset: (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub darkness_threshold: u8,
    pub sample_rate: f64,
    pub test: DarkTest,
    pub registration: Registration,
}

impl ExtractOptions {
    pub fn new(darkness_threshold: u8, sample_rate: f64) -> Self {
        ExtractOptions {
            darkness_threshold,
            sample_rate,
            test: DarkTest::default(),
            registration: Registration::default(),
        }
    }
}

/// Centroid of the dark pixels of one frame, or `None` if there are none.
pub fn dark_centroid(frame: &RgbImage, threshold: u8, test: DarkTest) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u64);
    for (x, y, px) in frame.enumerate_pixels() {
        if test.is_dark(px, threshold) {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Indices of the frames sampled at `sample_rate` Hz: every
/// `round(fps / sample_rate)`-th frame, starting with the first.
pub fn sampled_frames(fps: f64, sample_rate: f64, n_frames: usize) -> Result<Vec<usize>> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) || sample_rate > fps {
        return Err(Error::Argument(format!(
            "sample rate {sample_rate} must be positive and at most {fps} fps"
        )));
    }
    let stride = (fps / sample_rate).round().max(1.0) as usize;
    Ok((0..n_frames).step_by(stride).collect())
}

/// Dark-pixel centroids of the sampled frames, in pixel coordinates. Frames
/// without dark pixels repeat the previous centroid.
pub fn extract_centroids(frames: &FrameSequence, opts: &ExtractOptions) -> Result<Vec<(f64, f64)>> {
    if opts.darkness_threshold == 0 || opts.darkness_threshold == 255 {
        return Err(Error::Argument(format!(
            "darkness threshold must lie strictly between 0 and 255, got {}",
            opts.darkness_threshold
        )));
    }
    let picks = sampled_frames(frames.fps, opts.sample_rate, frames.frames.len())?;
    let mut out = Vec::with_capacity(picks.len());
    let mut last = None;
    for (k, &i) in picks.iter().enumerate() {
        match dark_centroid(&frames.frames[i], opts.darkness_threshold, opts.test) {
            Some(c) => last = Some(c),
            None if k == 0 => {
                return Err(Error::Extraction(
                    "first sampled frame has no dark pixels".into(),
                ))
            }
            None => {}
        }
        out.push(last.expect("set on first frame"));
    }
    Ok(out)
}

/// Position trace of the darkest blob, one sample per sampled frame.
///
/// Modes are unknown and the outcome is always `TimedOut`.
pub fn extract_trace(frames: &FrameSequence, opts: &ExtractOptions) -> Result<Trajectory> {
    let reg = opts.registration;
    let samples = extract_centroids(frames, opts)?
        .into_iter()
        .enumerate()
        .map(|(k, (px, py))| {
            let x = (px * reg.scale.0 + reg.offset.0).round();
            let y = (py * reg.scale.1 + reg.offset.1).round();
            if x < 0.0 || y < 0.0 {
                return Err(Error::Extraction(format!(
                    "sample {k} maps to negative coordinates ({x}, {y})"
                )));
            }
            Ok(Sample {
                step: k as u32,
                pos: Pos::new(x as usize, y as usize),
                mode: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        samples,
        outcome: TrialOutcome::TimedOut,
    })
}
