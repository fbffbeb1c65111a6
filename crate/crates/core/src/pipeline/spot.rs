use serde::{Deserialize, Serialize};

use super::model::ClassifierModel;
use crate::error::Result;
use crate::raster::{binarize, encode_png, GrayImage, TruthFile};
use crate::segmentation::{extract_kernel, propose_regions, Kernel};
use crate::types::{BoundingBox, Label};

/// Region-proposal settings shared by extraction and spotting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotConfig {
    /// Components closer than this many pixels on both axes are merged.
    pub gap_threshold: usize,
    /// Regions with fewer ink pixels are dropped.
    pub min_area: usize,
}

impl Default for SpotConfig {
    fn default() -> Self {
        SpotConfig {
            gap_threshold: 4,
            min_area: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Probability of the character class.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotReport {
    pub page: String,
    pub accepted: Vec<ScoredBox>,
    pub rejected: Vec<ScoredBox>,
    pub model: String,
    pub config: SpotConfig,
}

/// Binarizes a page and cuts a kernel for every proposed region, in `(y, x)` order.
pub fn extract_page(page: &GrayImage, page_id: &str, cfg: &SpotConfig) -> Result<Vec<Kernel>> {
    let bin = binarize(page);
    if bin.degenerate {
        log::warn!("page {page_id} has a single intensity level; no regions proposed");
    }
    propose_regions(&bin.image, cfg.gap_threshold, cfg.min_area)
        .into_iter()
        .map(|b| Ok(extract_kernel(page, b)?.with_page(page_id)))
        .collect()
}

/// Segments, classifies and splits a page's regions into accepted characters and rejects.
pub fn spot(
    page: &GrayImage,
    page_id: &str,
    model: &ClassifierModel,
    model_id: &str,
    cfg: &SpotConfig,
) -> Result<SpotReport> {
    model.validate()?;
    let kernels = extract_page(page, page_id, cfg)?;
    let predictions = model.predict_batch(&kernels)?;
    let mut report = SpotReport {
        page: page_id.to_string(),
        accepted: Vec::new(),
        rejected: Vec::new(),
        model: model_id.to_string(),
        config: *cfg,
    };
    for (k, p) in kernels.iter().zip(predictions) {
        let scored = ScoredBox {
            bbox: k.source_box,
            score: p.character_score(),
        };
        match p.label {
            Label::Character => report.accepted.push(scored),
            Label::Reject => report.rejected.push(scored),
        }
    }
    Ok(report)
}

/// Label of the truth item that best overlaps `bbox` with IoU ≥ 0.5; anything
/// else (partial, merged or noise regions) is a reject.
pub fn label_from_truth(bbox: &BoundingBox, truth: &TruthFile) -> Label {
    truth
        .boxes
        .iter()
        .zip(&truth.labels)
        .map(|(t, &l)| (bbox.iou(t), l))
        .filter(|&(iou, _)| iou >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(Label::Reject, |(_, l)| l)
}

/// Detection quality of accepted boxes against truth character boxes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpotScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl SpotScore {
    pub fn add(&mut self, other: SpotScore) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// One-to-one matching at IoU ≥ 0.5, taking the highest-overlap pairs first.
pub fn score_spotting(accepted: &[BoundingBox], truth_characters: &[BoundingBox]) -> SpotScore {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in accepted.iter().enumerate() {
        for (j, t) in truth_characters.iter().enumerate() {
            let iou = a.iou(t);
            if iou >= 0.5 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_a = vec![false; accepted.len()];
    let mut used_t = vec![false; truth_characters.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_a[i] && !used_t[j] {
            used_a[i] = true;
            used_t[j] = true;
            tp += 1;
        }
    }
    SpotScore {
        tp,
        fp: accepted.len() - tp,
        fn_: truth_characters.len() - tp,
    }
}

/// RGB rendering of the page with accepted boxes outlined in red and
/// rejected ones in blue.
pub fn overlay_png(page: &GrayImage, report: &SpotReport) -> Result<Vec<u8>> {
    let (w, h) = (page.width(), page.height());
    let mut rgb: Vec<u8> = page.to_u8().into_iter().flat_map(|v| [v, v, v]).collect();
    let mut outline = |b: &BoundingBox, color: [u8; 3]| {
        let mut paint = |x: usize, y: usize| {
            if x < w && y < h {
                rgb[(y * w + x) * 3..][..3].copy_from_slice(&color);
            }
        };
        let (x0, y0) = (b.x.saturating_sub(1), b.y.saturating_sub(1));
        let (x1, y1) = (b.right(), b.bottom());
        for x in x0..=x1 {
            paint(x, y0);
            paint(x, y1);
        }
        for y in y0..=y1 {
            paint(x0, y);
            paint(x1, y);
        }
    };
    for s in &report.rejected {
        outline(&s.bbox, [40, 90, 220]);
    }
    for s in &report.accepted {
        outline(&s.bbox, [220, 30, 30]);
    }
    encode_png(w, h, &rgb, png::ColorType::Rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{synth_page, SynthConfig};

    #[test]
    fn truth_labeling() {
        let truth = TruthFile {
            boxes: vec![BoundingBox::new(0, 0, 10, 10), BoundingBox::new(20, 0, 10, 10)],
            labels: vec![Label::Character, Label::Reject],
        };
        assert_eq!(
            label_from_truth(&BoundingBox::new(0, 0, 10, 10), &truth),
            Label::Character
        );
        assert_eq!(label_from_truth(&BoundingBox::new(21, 0, 9, 10), &truth), Label::Reject);
        assert_eq!(label_from_truth(&BoundingBox::new(0, 0, 5, 5), &truth), Label::Reject);
    }

    #[test]
    fn spotting_score_matches_one_to_one() {
        let t = [BoundingBox::new(0, 0, 10, 10), BoundingBox::new(50, 0, 10, 10)];
        let a = [
            BoundingBox::new(0, 0, 10, 10),
            BoundingBox::new(1, 0, 10, 10),
            BoundingBox::new(90, 0, 5, 5),
        ];
        let s = score_spotting(&a, &t);
        assert_eq!((s.tp, s.fp, s.fn_), (1, 2, 1));
        assert!((s.f1() - 0.4).abs() < 1e-12);
        assert_eq!(score_spotting(&[], &[]).f1(), 0.0);
    }

    #[test]
    fn extraction_recovers_synthetic_items() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let page = synth_page(&cfg, 3).unwrap();
        let kernels = extract_page(&page.image, "p", &SpotConfig::default()).unwrap();
        let truth = TruthFile {
            boxes: page.truth_boxes.clone(),
            labels: page.truth_labels.clone(),
        };
        let hits = kernels
            .iter()
            .filter(|k| truth.boxes.iter().any(|t| t.iou(&k.source_box) >= 0.5))
            .count();
        assert_eq!(hits, truth.boxes.len());
        let chars: Vec<_> = kernels
            .iter()
            .filter(|k| label_from_truth(&k.source_box, &truth) == Label::Character)
            .map(|k| k.source_box)
            .collect();
        let truth_chars: Vec<_> = truth
            .boxes
            .iter()
            .zip(&truth.labels)
            .filter(|(_, &l)| l == Label::Character)
            .map(|(b, _)| *b)
            .collect();
        assert_eq!(score_spotting(&chars, &truth_chars).f1(), 1.0);
    }

    #[test]
    fn blank_page_yields_nothing() {
        assert!(
            extract_page(&GrayImage::filled(64, 64, 1.0), "p", &SpotConfig::default())
                .unwrap()
                .is_empty()
        );
    }
}
