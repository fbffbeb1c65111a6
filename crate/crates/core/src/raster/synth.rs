//! Seeded synthetic degraded pages: stroke glyphs and reject-class distractors
//! laid out in jittered rows, separated by whitespace, with Gaussian noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_png, GrayImage};
use crate::error::{Error, Result};
use crate::types::{BoundingBox, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub glyphs: usize,
    /// Blots, speckle patches and bars, all labeled reject.
    pub distractors: usize,
    pub stroke_thickness: f64,
    pub noise_sigma: f64,
    /// Minimum whitespace between any two items, in pixels.
    pub gap_min: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 320,
            height: 240,
            glyphs: 12,
            distractors: 6,
            stroke_thickness: 2.5,
            noise_sigma: 0.05,
            gap_min: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPage {
    pub image: GrayImage,
    pub truth_boxes: Vec<BoundingBox>,
    pub truth_labels: Vec<Label>,
    pub seed: u64,
}

/// On-disk ground truth next to each synthetic page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub boxes: Vec<BoundingBox>,
    pub labels: Vec<Label>,
}

/// Binary mask of one item, trimmed to its ink.
struct Mask {
    w: usize,
    h: usize,
    bits: Vec<bool>,
}

impl Mask {
    fn new(w: usize, h: usize) -> Self {
        Mask {
            w,
            h,
            bits: vec![false; w * h],
        }
    }

    fn stamp_disc(&mut self, cx: f64, cy: f64, radius: f64) {
        let r2 = radius * radius;
        let x0 = (cx - radius).floor().max(0.0) as usize;
        let y0 = (cy - radius).floor().max(0.0) as usize;
        let x1 = ((cx + radius).ceil() as usize).min(self.w.saturating_sub(1));
        let y1 = ((cy + radius).ceil() as usize).min(self.h.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r2 {
                    self.bits[y * self.w + x] = true;
                }
            }
        }
    }

    fn trimmed(self) -> Option<Mask> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.bits[y * self.w + x] {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if x0 == usize::MAX {
            return None;
        }
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut out = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                out.bits[y * w + x] = self.bits[(y + y0) * self.w + x + x0];
            }
        }
        Some(out)
    }
}

fn bezier(p: &[(f64, f64); 4], t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let (a, b, c, d) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    (
        a * p[0].0 + b * p[1].0 + c * p[2].0 + d * p[3].0,
        a * p[0].1 + b * p[1].1 + c * p[2].1 + d * p[3].1,
    )
}

/// A glyph: 2-4 gently curved cubic strokes between points of a 3×3 anchor
/// grid, each starting where an earlier stroke ended or began, so the glyph is
/// connected and spans most of its box like a letter skeleton.
fn render_glyph(rng: &mut ChaCha8Rng, thickness: f64) -> Mask {
    loop {
        let w = rng.random_range(16..=28usize);
        let h = rng.random_range(24..=40usize);
        let margin = thickness / 2.0 + 0.5;
        let xs = [margin, w as f64 / 2.0, w as f64 - margin];
        let ys = [margin, h as f64 / 2.0, h as f64 - margin];
        let anchor = |i: usize| (xs[i % 3], ys[i / 3]);
        let mut mask = Mask::new(w, h);
        let strokes = rng.random_range(2..=4usize);
        let mut visited = vec![rng.random_range(0..9usize)];
        for _ in 0..strokes {
            let from = visited[rng.random_range(0..visited.len())];
            let to = loop {
                let t = rng.random_range(0..9usize);
                if t != from {
                    break t;
                }
            };
            visited.push(to);
            let (p0, p3) = (anchor(from), anchor(to));
            let (dx, dy) = (p3.0 - p0.0, p3.1 - p0.1);
            let bend = rng.random_range(-0.35..0.35);
            let ctrl = |t: f64| {
                (
                    (p0.0 + t * dx - bend * dy).clamp(margin, w as f64 - margin),
                    (p0.1 + t * dy + bend * dx).clamp(margin, h as f64 - margin),
                )
            };
            let curve = [p0, ctrl(1.0 / 3.0), ctrl(2.0 / 3.0), p3];
            let steps = 4 * (w + h);
            for i in 0..=steps {
                let (x, y) = bezier(&curve, i as f64 / steps as f64);
                mask.stamp_disc(x, y, thickness / 2.0);
            }
        }
        let trimmed = mask.trimmed().expect("glyph strokes leave ink");
        if 10 * trimmed.w >= 6 * w && 10 * trimmed.h >= 6 * h {
            return trimmed;
        }
    }
}

/// A solid irregular ellipse.
fn render_blot(rng: &mut ChaCha8Rng) -> Mask {
    let w = rng.random_range(10..=26usize);
    let h = rng.random_range(10..=30usize);
    let mut mask = Mask::new(w, h);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
    let wobble = rng.random_range(0.0..0.25);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            let angle = dy.atan2(dx);
            let limit = 1.0 - wobble * (0.5 + 0.5 * (3.0 * angle + phase).sin());
            if dx * dx + dy * dy <= limit * limit {
                mask.bits[y * w + x] = true;
            }
        }
    }
    mask
}

/// A patch of 2x2 dots on a 3-pixel lattice; neighbouring dots are at most 2 px apart.
fn render_speckle(rng: &mut ChaCha8Rng) -> Mask {
    let cols = rng.random_range(4..=8usize);
    let rows = rng.random_range(4..=9usize);
    let mut mask = Mask::new(cols * 3, rows * 3);
    for r in 0..rows {
        for c in 0..cols {
            let (ox, oy) = (rng.random_range(0..=1usize), rng.random_range(0..=1usize));
            for dy in 0..2 {
                for dx in 0..2 {
                    mask.bits[(r * 3 + oy + dy) * mask.w + c * 3 + ox + dx] = true;
                }
            }
        }
    }
    mask
}

/// A single straight thick bar.
fn render_bar(rng: &mut ChaCha8Rng) -> Mask {
    let len = rng.random_range(20.0..40.0);
    let thick = rng.random_range(3.0..5.0);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (dx, dy) = (angle.cos() * len, angle.sin() * len);
    let (w, h) = ((dx.abs() + thick + 2.0) as usize, (dy.abs() + thick + 2.0) as usize);
    let mut mask = Mask::new(w, h);
    let (x0, y0) = (thick / 2.0 + 0.5 + if dx < 0.0 { -dx } else { 0.0 }, thick / 2.0 + 0.5);
    let steps = (len * 4.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        mask.stamp_disc(x0 + t * dx, y0 + t * dy, thick / 2.0);
    }
    mask
}

/// Renders one synthetic page; equal `(cfg, seed)` always gives identical output.
pub fn synth_page(cfg: &SynthConfig, seed: u64) -> Result<SynthPage> {
    if cfg.gap_min < 1 {
        return Err(Error::Config("gap_min must be at least 1 pixel".into()));
    }
    if cfg.noise_sigma.is_nan() || cfg.noise_sigma < 0.0 || cfg.stroke_thickness.is_nan() || cfg.stroke_thickness <= 0.0
    {
        return Err(Error::Config(
            "noise sigma must be >= 0 and stroke thickness > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = rng.random_range(0.85..0.95);
    let ink = rng.random_range(0.05..0.2);

    let mut items: Vec<(Mask, Label)> = Vec::with_capacity(cfg.glyphs + cfg.distractors);
    for _ in 0..cfg.glyphs {
        items.push((render_glyph(&mut rng, cfg.stroke_thickness), Label::Character));
    }
    for _ in 0..cfg.distractors {
        let mask = match rng.random_range(0..3u8) {
            0 => render_blot(&mut rng),
            1 => render_speckle(&mut rng),
            _ => render_bar(&mut rng),
        };
        items.push((mask.trimmed().expect("distractors leave ink"), Label::Reject));
    }
    // Fisher-Yates so glyphs and distractors interleave
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }

    let placement_error = || Error::Placement {
        placed_needed: cfg.glyphs + cfg.distractors,
        width: cfg.width,
        height: cfg.height,
        gap: cfg.gap_min,
    };
    let jitter = 6usize;
    let margin = cfg.gap_min;
    let (mut cursor, mut row_top, mut row_bottom) = (margin, margin, margin);
    let mut boxes = Vec::with_capacity(items.len());
    for (mask, _) in &items {
        let mut x = cursor + rng.random_range(0..=cfg.gap_min);
        if x + mask.w + margin > cfg.width {
            if cursor == margin {
                return Err(placement_error());
            }
            row_top = row_bottom + cfg.gap_min + rng.random_range(0..=cfg.gap_min / 2);
            cursor = margin;
            x = cursor + rng.random_range(0..=cfg.gap_min);
            if x + mask.w + margin > cfg.width {
                return Err(placement_error());
            }
        }
        let y = row_top + rng.random_range(0..=jitter);
        if y + mask.h + margin > cfg.height {
            return Err(placement_error());
        }
        boxes.push(BoundingBox::new(x, y, mask.w, mask.h));
        cursor = x + mask.w + cfg.gap_min;
        row_bottom = row_bottom.max(y + mask.h);
    }

    let mut image = GrayImage::filled(cfg.width, cfg.height, background);
    for ((mask, _), b) in items.iter().zip(&boxes) {
        for my in 0..mask.h {
            for mx in 0..mask.w {
                if mask.bits[my * mask.w + mx] {
                    image.set(b.x + mx, b.y + my, ink);
                }
            }
        }
    }
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("finite sigma");
        image = GrayImage::new(
            cfg.width,
            cfg.height,
            image
                .pixels()
                .iter()
                .map(|&p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect(),
        )?;
    }

    Ok(SynthPage {
        image,
        truth_boxes: boxes,
        truth_labels: items.iter().map(|(_, l)| *l).collect(),
        seed,
    })
}

/// Writes `page_NNNN.png` and `page_NNNN.truth.json` into `dir`.
pub fn write_corpus_page(dir: &Path, index: usize, page: &SynthPage) -> Result<()> {
    let stem = format!("page_{index:04}");
    save_png(&page.image, dir.join(format!("{stem}.png")))?;
    let truth = TruthFile {
        boxes: page.truth_boxes.clone(),
        labels: page.truth_labels.clone(),
    };
    let path = dir.join(format!("{stem}.truth.json"));
    let json = serde_json::to_string(&truth).expect("truth serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_page_has_no_truth() {
        let cfg = SynthConfig {
            glyphs: 0,
            distractors: 0,
            ..SynthConfig::default()
        };
        let page = synth_page(&cfg, 3).unwrap();
        assert!(page.truth_boxes.is_empty());
        assert_eq!(page.image.width(), cfg.width);
    }

    #[test]
    fn same_seed_same_page() {
        let cfg = SynthConfig::default();
        assert_eq!(synth_page(&cfg, 7).unwrap(), synth_page(&cfg, 7).unwrap());
        assert_ne!(synth_page(&cfg, 7).unwrap().image, synth_page(&cfg, 8).unwrap().image);
    }

    #[test]
    fn boxes_inside_page_and_tight() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        for seed in 0..10 {
            let page = synth_page(&cfg, seed).unwrap();
            assert_eq!(page.truth_boxes.len(), cfg.glyphs + cfg.distractors);
            for b in &page.truth_boxes {
                assert!(b.fits_within(cfg.width, cfg.height));
                // every edge row and column of a tight box holds ink
                let dark = |x: usize, y: usize| page.image.get(x, y) < 0.5;
                assert!((b.x..b.right()).any(|x| dark(x, b.y)));
                assert!((b.x..b.right()).any(|x| dark(x, b.bottom() - 1)));
                assert!((b.y..b.bottom()).any(|y| dark(b.x, y)));
                assert!((b.y..b.bottom()).any(|y| dark(b.right() - 1, y)));
            }
        }
    }

    #[test]
    fn overfull_page_is_placement_error() {
        let cfg = SynthConfig {
            width: 60,
            height: 60,
            glyphs: 40,
            ..SynthConfig::default()
        };
        assert!(matches!(synth_page(&cfg, 1), Err(Error::Placement { .. })));
    }

    #[test]
    fn three_glyphs_separated_by_column_scan() {
        let cfg = SynthConfig {
            width: 200,
            height: 80,
            glyphs: 3,
            distractors: 0,
            noise_sigma: 0.0,
            gap_min: 6,
            ..SynthConfig::default()
        };
        for seed in 0..20 {
            let page = synth_page(&cfg, seed).unwrap();
            assert_eq!(page.truth_boxes.len(), 3);
            // scan every column for ink; runs of inked columns are the glyphs
            let inked: Vec<bool> = (0..cfg.width)
                .map(|x| (0..cfg.height).any(|y| page.image.get(x, y) < 0.5))
                .collect();
            let mut runs = Vec::new();
            let mut x = 0;
            while x < inked.len() {
                if inked[x] {
                    let start = x;
                    while x < inked.len() && inked[x] {
                        x += 1;
                    }
                    runs.push((start, x));
                } else {
                    x += 1;
                }
            }
            assert_eq!(runs.len(), 3, "seed {seed}: {runs:?}");
            for pair in runs.windows(2) {
                assert!(pair[1].0 - pair[0].1 >= 6, "seed {seed}: {runs:?}");
            }
        }
    }
}
