use crate::error::{Error, Result};
use crate::raster::GrayImage;
use crate::types::{BoundingBox, Label};

pub const KERNEL_HEIGHT: usize = 48;
pub const KERNEL_WIDTH: usize = 32;

/// A 48-row by 32-column window cut around a candidate region.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub pixels: GrayImage,
    pub source_box: BoundingBox,
    pub page_id: String,
    pub label: Option<Label>,
}

impl Kernel {
    /// Wraps an existing 48×32 image, e.g. one read back from disk.
    pub fn from_image(pixels: GrayImage, source_box: BoundingBox, page_id: impl Into<String>) -> Result<Self> {
        if pixels.width() != KERNEL_WIDTH || pixels.height() != KERNEL_HEIGHT {
            return Err(Error::Dimension(format!(
                "kernel must be {KERNEL_WIDTH}x{KERNEL_HEIGHT}, got {}x{}",
                pixels.width(),
                pixels.height()
            )));
        }
        Ok(Kernel {
            pixels,
            source_box,
            page_id: page_id.into(),
            label: None,
        })
    }

    pub fn with_page(mut self, page_id: impl Into<String>) -> Self {
        self.page_id = page_id.into();
        self
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn border_median(img: &GrayImage, b: &BoundingBox) -> f64 {
    let mut border = Vec::with_capacity(2 * (b.w + b.h));
    for x in b.x..b.right() {
        border.push(img.get(x, b.y));
        if b.h > 1 {
            border.push(img.get(x, b.bottom() - 1));
        }
    }
    for y in b.y + 1..b.bottom().saturating_sub(1) {
        border.push(img.get(b.x, y));
        if b.w > 1 {
            border.push(img.get(b.right() - 1, y));
        }
    }
    median(border)
}

fn scaled_len(len: usize, scale: f64, max: usize) -> usize {
    // ceil, tolerant of representation error in exact ratios
    ((len as f64 * scale - 1e-9).ceil() as usize).clamp(1, max)
}

/// Crops `bbox`, resizes it bilinearly into 48×32 keeping its aspect ratio and
/// pads the rest symmetrically with the median intensity of the crop border.
pub fn extract_kernel(img: &GrayImage, bbox: BoundingBox) -> Result<Kernel> {
    if !bbox.fits_within(img.width(), img.height()) {
        return Err(Error::BoxOutOfBounds {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            width: img.width(),
            height: img.height(),
        });
    }
    let mut out = GrayImage::filled(KERNEL_WIDTH, KERNEL_HEIGHT, 0.0);
    if bbox.w == KERNEL_WIDTH && bbox.h == KERNEL_HEIGHT {
        for y in 0..KERNEL_HEIGHT {
            for x in 0..KERNEL_WIDTH {
                out.set(x, y, img.get(bbox.x + x, bbox.y + y));
            }
        }
    } else {
        let scale = (KERNEL_HEIGHT as f64 / bbox.h as f64).min(KERNEL_WIDTH as f64 / bbox.w as f64);
        let new_w = scaled_len(bbox.w, scale, KERNEL_WIDTH);
        let new_h = scaled_len(bbox.h, scale, KERNEL_HEIGHT);
        let (off_x, off_y) = ((KERNEL_WIDTH - new_w) / 2, (KERNEL_HEIGHT - new_h) / 2);
        let pad = border_median(img, &bbox);
        out = GrayImage::filled(KERNEL_WIDTH, KERNEL_HEIGHT, pad);

        // half-pixel-centre mapping from destination to source
        let (sx, sy) = (bbox.w as f64 / new_w as f64, bbox.h as f64 / new_h as f64);
        for j in 0..new_h {
            let v = ((j as f64 + 0.5) * sy - 0.5).clamp(0.0, (bbox.h - 1) as f64);
            let y0 = v.floor() as usize;
            let y1 = (y0 + 1).min(bbox.h - 1);
            let fy = v - y0 as f64;
            for i in 0..new_w {
                let u = ((i as f64 + 0.5) * sx - 0.5).clamp(0.0, (bbox.w - 1) as f64);
                let x0 = u.floor() as usize;
                let x1 = (x0 + 1).min(bbox.w - 1);
                let fx = u - x0 as f64;
                let p = |x: usize, y: usize| img.get(bbox.x + x, bbox.y + y);
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out.set(off_x + i, off_y + j, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(Kernel {
        pixels: out,
        source_box: bbox,
        page_id: String::new(),
        label: None,
    })
}
