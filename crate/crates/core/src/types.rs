use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Axis-aligned pixel box; serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BoundingBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> usize {
        let w = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let h = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        w * h
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Background columns strictly between the two boxes; negative when they overlap.
    pub fn gap_x(&self, other: &BoundingBox) -> i64 {
        (other.x as i64 - self.right() as i64).max(self.x as i64 - other.right() as i64)
    }

    /// Background rows strictly between the two boxes; negative when they overlap.
    pub fn gap_y(&self, other: &BoundingBox) -> i64 {
        (other.y as i64 - self.bottom() as i64).max(self.y as i64 - other.bottom() as i64)
    }
}

impl From<[usize; 4]> for BoundingBox {
    fn from([x, y, w, h]: [usize; 4]) -> Self {
        BoundingBox { x, y, w, h }
    }
}

impl From<BoundingBox> for [usize; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Binary kernel class. `Reject` is 0, `Character` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Reject,
    Character,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Reject => 0,
            Label::Character => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Label {
        if bit == 0 {
            Label::Reject
        } else {
            Label::Character
        }
    }

    /// `-1` for reject, `+1` for character.
    pub fn signed(self) -> f64 {
        match self {
            Label::Reject => -1.0,
            Label::Character => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Reject => "reject",
            Label::Character => "character",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "character" => Ok(Label::Character),
            "reject" => Ok(Label::Reject),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}
