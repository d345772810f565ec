use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame has zero area")]
    ZeroArea,
    #[error("frame of {width}x{height} needs {expected} pixels, got {got}")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("blob {0:?} does not fit inside the frame")]
    OutOfBounds(Blob),
    #[error("invalid frame spec: {0}")]
    Spec(&'static str),
    #[error("pgm: {0}")]
    Pgm(String),
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width * height;
        if pixels.len() != expected {
            return Err(FrameError::SizeMismatch {
                width,
                height,
                expected,
                got: pixels.len(),
            });
        }
        Ok(Frame { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Frame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn transposed(&self) -> Frame {
        let mut out = Frame::filled(self.height, self.width, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, x, self.get(x, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    /// pixels at or below this intensity count as black
    pub black_threshold: u8,
    /// components smaller than this share of the frame are noise
    pub min_blob_fraction: f64,
    pub ratio_threshold: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            black_threshold: 10,
            min_blob_fraction: 0.005,
            ratio_threshold: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionReport {
    pub occluded: bool,
    pub blob_ratio: f64,
    pub blobs: usize,
}

/// Labels 8-connected dark components, drops the small ones, and reports the
/// share of the frame covered by what remains.
pub fn detect_occlusion(frame: &Frame, cfg: &OcclusionConfig) -> Result<OcclusionReport, FrameError> {
    let (w, h) = (frame.width, frame.height);
    let total = w * h;
    if total == 0 {
        return Err(FrameError::ZeroArea);
    }
    let dark: Vec<bool> = frame.pixels.iter().map(|&p| p <= cfg.black_threshold).collect();
    let mut seen = vec![false; total];
    let min_size = cfg.min_blob_fraction * total as f64;
    let mut retained = 0usize;
    let mut blobs = 0usize;
    let mut queue = VecDeque::new();
    for start in 0..total {
        if !dark[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if dark[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if size as f64 >= min_size {
            retained += size;
            blobs += 1;
        }
    }
    let blob_ratio = retained as f64 / total as f64;
    Ok(OcclusionReport {
        occluded: blob_ratio > cfg.ratio_threshold,
        blob_ratio,
        blobs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "shape")]
pub enum Blob {
    Rect { x: usize, y: usize, w: usize, h: usize },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Blob {
    fn fits(&self, width: usize, height: usize) -> bool {
        match *self {
            Blob::Rect { x, y, w, h } => w > 0 && h > 0 && x + w <= width && y + h <= height,
            Blob::Ellipse { cx, cy, rx, ry } => {
                rx > 0.0 && ry > 0.0 && cx - rx >= 0.0 && cy - ry >= 0.0 && cx + rx <= width as f64 && cy + ry <= height as f64
            }
        }
    }

    fn covers(&self, px: usize, py: usize) -> bool {
        match *self {
            Blob::Rect { x, y, w, h } => px >= x && px < x + w && py >= y && py < y + h,
            Blob::Ellipse { cx, cy, rx, ry } => {
                let dx = (px as f64 + 0.5 - cx) / rx;
                let dy = (py as f64 + 0.5 - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

/// Recipe for a synthetic camera frame with known occlusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub width: usize,
    pub height: usize,
    /// inclusive intensity range of the scene background
    pub background: (u8, u8),
    /// inclusive intensity range inside blobs
    pub blob_intensity: (u8, u8),
    pub blobs: Vec<Blob>,
    /// share of pixels replaced by isolated black specks
    pub salt_fraction: f64,
    /// ground-truth label is "occluded" when blob coverage exceeds this
    pub label_threshold: f64,
}

impl FrameSpec {
    pub fn clear(width: usize, height: usize) -> Self {
        FrameSpec {
            width,
            height,
            background: (255, 255),
            blob_intensity: (0, 0),
            blobs: Vec::new(),
            salt_fraction: 0.0,
            label_threshold: 0.10,
        }
    }
}

/// Renders a frame and its ground-truth label (blob coverage above the
/// label threshold). Deterministic for a fixed rng state.
pub fn synth_frame<R: Rng + ?Sized>(spec: &FrameSpec, rng: &mut R) -> Result<(Frame, bool), FrameError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(FrameError::ZeroArea);
    }
    if spec.background.0 > spec.background.1 || spec.blob_intensity.0 > spec.blob_intensity.1 {
        return Err(FrameError::Spec("intensity range is reversed"));
    }
    if !(0.0..=1.0).contains(&spec.salt_fraction) {
        return Err(FrameError::Spec("salt_fraction outside [0, 1]"));
    }
    if let Some(b) = spec.blobs.iter().find(|b| !b.fits(spec.width, spec.height)) {
        return Err(FrameError::OutOfBounds(*b));
    }
    let mut frame = Frame::filled(spec.width, spec.height, 0);
    let mut covered = 0usize;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let in_blob = spec.blobs.iter().any(|b| b.covers(x, y));
            let v = if in_blob {
                covered += 1;
                rng.gen_range(spec.blob_intensity.0..=spec.blob_intensity.1)
            } else {
                rng.gen_range(spec.background.0..=spec.background.1)
            };
            frame.set(x, y, v);
        }
    }
    if spec.salt_fraction > 0.0 {
        let n = (spec.salt_fraction * (spec.width * spec.height) as f64).round() as usize;
        for _ in 0..n {
            let (x, y) = (rng.gen_range(0..spec.width), rng.gen_range(0..spec.height));
            frame.set(x, y, 0);
        }
    }
    let coverage = covered as f64 / (spec.width * spec.height) as f64;
    Ok((frame, coverage > spec.label_threshold))
}
