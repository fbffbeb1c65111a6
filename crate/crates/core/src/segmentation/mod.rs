//! Whitespace-bound region proposals and fixed-size kernel extraction.

mod kernel;
mod manifest;

pub use kernel::{extract_kernel, Kernel, KERNEL_HEIGHT, KERNEL_WIDTH};
pub use manifest::{
    build_manifest, kernel_file_name, parse_kernel_file_name, LabelRecord, LabelStore, Manifest, ManifestEntry,
};

use crate::raster::BinaryImage;
pub use crate::types::{BoundingBox, Label};

#[derive(Debug, Clone, Copy)]
struct Region {
    bounds: BoundingBox,
    ink: usize,
}

/// 8-connected components of ink, as bounding box plus pixel count.
fn connected_components(bin: &BinaryImage) -> Vec<Region> {
    let (w, h) = (bin.width(), bin.height());
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || bin.bits()[start] == 0 {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut ink = 0;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            ink += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && bin.bits()[j] == 1 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        regions.push(Region {
            bounds: BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            ink,
        });
    }
    regions
}

/// Proposes candidate character boxes bounded by whitespace.
///
/// Ink components closer than `gap_threshold` background pixels on both axes
/// are merged until no such pair remains; regions holding fewer than
/// `min_area` ink pixels are dropped. Output is sorted by `(y, x)`.
pub fn propose_regions(bin: &BinaryImage, gap_threshold: usize, min_area: usize) -> Vec<BoundingBox> {
    let gap = gap_threshold.max(1) as i64;
    let mut regions = connected_components(bin);
    regions.sort_by_key(|r| (r.bounds.x, r.bounds.y));

    // x-sorted sweep; a merge never moves the left edge of the surviving region,
    // so the order stays valid across passes
    loop {
        let mut merged_any = false;
        let mut i = 0;
        while i < regions.len() {
            let mut j = i + 1;
            while j < regions.len() {
                let (a, b) = (regions[i].bounds, regions[j].bounds);
                if b.x as i64 - a.right() as i64 >= gap {
                    break;
                }
                if a.gap_x(&b) < gap && a.gap_y(&b) < gap {
                    regions[i].bounds = a.union(&b);
                    regions[i].ink += regions[j].ink;
                    regions.remove(j);
                    merged_any = true;
                    j = i + 1;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged_any {
            break;
        }
    }

    let mut boxes: Vec<BoundingBox> = regions
        .into_iter()
        .filter(|r| r.ink >= min_area)
        .map(|r| r.bounds)
        .collect();
    boxes.sort_by_key(|b| (b.y, b.x));
    boxes
}
