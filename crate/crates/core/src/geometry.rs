//! Axis-aligned rectangle arithmetic.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)` with `x1 <= x2` and
//! `y1 <= y2`. Zero-area boxes are legal operands; callers that divide by an
//! area or a diagonal guard the division themselves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box in corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Box {
    /// Builds a box, sorting each corner pair so the result is always valid.
    ///
    /// Panics on non-finite input; use [`Box::canonical`] to learn whether
    /// the corners had to be swapped, or [`Box::try_new`] to reject them.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::canonical(x1, y1, x2, y2).0
    }

    /// Sorts each corner pair; the flag reports whether any swap happened.
    pub fn canonical(x1: f64, y1: f64, x2: f64, y2: f64) -> (Self, bool) {
        assert!(
            x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite(),
            "box corners must be finite: ({x1}, {y1}, {x2}, {y2})"
        );
        let swapped = x1 > x2 || y1 > y2;
        (
            Self {
                x1: x1.min(x2),
                y1: y1.min(y2),
                x2: x1.max(x2),
                y2: y1.max(y2),
            },
            swapped,
        )
    }

    /// Strict constructor: rejects unordered or non-finite corners.
    pub fn try_new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x1 > x2 {
            return Err(invalid("x1 > x2"));
        }
        if y1 > y2 {
            return Err(invalid("y1 > y2"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from its center and size. Negative sizes are folded.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Strict construction from `[x1, y1, x2, y2]`.
    pub fn try_from_array(c: [f64; 4]) -> Result<Self> {
        Self::try_new(c[0], c[1], c[2], c[3])
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Length of the main diagonal.
    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Corners in the order top-left, top-right, bottom-left, bottom-right.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x1, self.y1),
            (self.x2, self.y1),
            (self.x1, self.y2),
            (self.x2, self.y2),
        ]
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() == 0.0
    }

    /// True when `other` lies inside `self` (boundaries may touch).
    pub fn contains(&self, other: &Box) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Scales every coordinate about the origin. `s` must be positive.
    pub fn scale(&self, s: f64) -> Self {
        debug_assert!(s > 0.0);
        Self {
            x1: self.x1 * s,
            y1: self.y1 * s,
            x2: self.x2 * s,
            y2: self.y2 * s,
        }
    }
}

pub fn area(b: &Box) -> f64 {
    b.area()
}

pub fn intersection_area(a: &Box, b: &Box) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    w * h
}

pub fn union_area(a: &Box, b: &Box) -> f64 {
    union_with(a.area(), b.area(), intersection_area(a, b))
}

/// Union area from the two areas and their intersection. The smaller area
/// absorbs the subtraction, so a contained box gives exactly the larger area.
pub(crate) fn union_with(a: f64, b: f64, inter: f64) -> f64 {
    let (big, small) = if a >= b { (a, b) } else { (b, a) };
    big + (small - inter)
}

/// Minimum bounding rectangle of two boxes.
pub fn enclosing_box(a: &Box, b: &Box) -> Box {
    Box {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    }
}

pub fn diagonal(b: &Box) -> f64 {
    b.diagonal()
}

/// Sum of the Euclidean distances between same-named corners.
pub fn corner_distance_sum(a: &Box, b: &Box) -> f64 {
    a.corners()
        .iter()
        .zip(b.corners().iter())
        .map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1))
        .sum()
}

/// Squared distance between box centers.
pub fn center_distance_sq(a: &Box, b: &Box) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).powi(2) + (ay - by).powi(2)
}
