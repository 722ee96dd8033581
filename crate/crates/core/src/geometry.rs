//! Box representations and the ground-truth / detection records built on them.
//!
//! The canonical form is center-size `(cx, cy, w, h)` in continuous pixel
//! coordinates with the origin at the top-left image corner. Corner form only
//! exists at file boundaries.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Axis-aligned box in center-size form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite { field: name, value: v });
            }
        }
        if w <= 0.0 {
            return Err(GeometryError::NonPositiveExtent { field: "w", value: w });
        }
        if h <= 0.0 {
            return Err(GeometryError::NonPositiveExtent { field: "h", value: h });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from a `[cx, cy, w, h]` array.
    pub fn from_array(v: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }

    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_corner(&self) -> CornerBox {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        CornerBox {
            xmin: self.cx - hw,
            ymin: self.cy - hh,
            xmax: self.cx + hw,
            ymax: self.cy + hh,
        }
    }

    pub fn from_corner(c: &CornerBox) -> Result<Self, GeometryError> {
        CornerBox::new(c.xmin, c.ymin, c.xmax, c.ymax)?;
        Self::new(
            (c.xmin + c.xmax) / 2.0,
            (c.ymin + c.ymax) / 2.0,
            c.xmax - c.xmin,
            c.ymax - c.ymin,
        )
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    /// Scales position and extent about the origin.
    pub fn scaled(&self, s: f64) -> Result<Self, GeometryError> {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }

    /// True when any part of the box lies outside `[0, image_w] x [0, image_h]`.
    pub fn overhangs(&self, image_w: f64, image_h: f64) -> bool {
        let c = self.to_corner();
        c.xmin < 0.0 || c.ymin < 0.0 || c.xmax > image_w || c.ymax > image_h
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            cx: f64,
            cy: f64,
            w: f64,
            h: f64,
        }
        let r = Raw::deserialize(d)?;
        BBox::new(r.cx, r.cy, r.w, r.h).map_err(serde::de::Error::custom)
    }
}

/// Corner-form rectangle, as stored in VOC annotation files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl CornerBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeometryError> {
        for (name, v) in [("xmin", xmin), ("ymin", ymin), ("xmax", xmax), ("ymax", ymax)] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite { field: name, value: v });
            }
        }
        if xmax <= xmin {
            return Err(GeometryError::NonPositiveExtent {
                field: "w",
                value: xmax - xmin,
            });
        }
        if ymax <= ymin {
            return Err(GeometryError::NonPositiveExtent {
                field: "h",
                value: ymax - ymin,
            });
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn to_box(&self) -> Result<BBox, GeometryError> {
        BBox::from_corner(self)
    }
}

/// An annotated object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
}

/// A scored prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: usize, score: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::ScoreOutOfRange(score));
        }
        Ok(Self { bbox, class_id, score })
    }

    #[inline]
    pub fn score(&self) -> f64 {
        self.score
    }
}

/// Relative-size bucket. Boundaries are strict: exactly 20% or 60% is medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const SMALL_BELOW: f64 = 0.20;
    pub const LARGE_ABOVE: f64 = 0.60;

    pub fn classify(rel_w: f64, rel_h: f64) -> Self {
        let m = rel_w.max(rel_h);
        if m < Self::SMALL_BELOW {
            SizeClass::Small
        } else if m > Self::LARGE_ABOVE {
            SizeClass::Large
        } else {
            SizeClass::Medium
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRecord {
    pub rel_w: f64,
    pub rel_h: f64,
    pub size_class: SizeClass,
    /// Box extends past the image border. Kept, never clipped.
    pub overhangs: bool,
}

pub fn size_record(gt: &GroundTruth, image_w: f64, image_h: f64) -> Result<SizeRecord, GeometryError> {
    if !(image_w > 0.0 && image_w.is_finite()) || !(image_h > 0.0 && image_h.is_finite()) {
        return Err(GeometryError::InvalidImageSize { width: image_w, height: image_h });
    }
    let rel_w = gt.bbox.w() / image_w;
    let rel_h = gt.bbox.h() / image_h;
    Ok(SizeRecord {
        rel_w,
        rel_h,
        size_class: SizeClass::classify(rel_w, rel_h),
        overhangs: gt.bbox.overhangs(image_w, image_h),
    })
}
