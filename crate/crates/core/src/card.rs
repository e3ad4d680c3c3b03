//! Colour-card calibration.
//!
//! A reference card with a grid of printed patches is photographed in
//! frame. The four annotated corners of the patch grid give every patch
//! location by bilinear interpolation; the observed colour of a chosen
//! key patch against its printed reference yields a CIELAB delta that is
//! applied uniformly to the whole image.

use crate::color::{lab_to_rgb_px, mean_lab_over_roi, rgb_to_lab_px, LabColour};
use crate::error::{Error, Result};
use crate::image::{ImageRgb, Roi};

/// Printed geometry and reference colours of the calibration card.
#[derive(Debug, Clone, PartialEq)]
pub struct CardLayout {
    rows: usize,
    cols: usize,
    reference: Vec<LabColour>,
    key_patch: (usize, usize),
    margin: f64,
}

impl CardLayout {
    /// `reference` is row-major with `rows * cols` entries. `key_patch`
    /// is the (row, col) measured for the correction delta. `margin` is
    /// the central fraction of each patch sampled (0 < margin <= 1),
    /// shrinking the patch quad about its centroid to avoid bleed at
    /// patch borders.
    pub fn new(
        rows: usize,
        cols: usize,
        reference: Vec<LabColour>,
        key_patch: (usize, usize),
        margin: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLayout("grid must be at least 1x1".into()));
        }
        if reference.len() != rows * cols {
            return Err(Error::InvalidLayout(format!(
                "{} reference colours for a {rows}x{cols} grid",
                reference.len()
            )));
        }
        if key_patch.0 >= rows || key_patch.1 >= cols {
            return Err(Error::InvalidLayout(format!(
                "key patch {key_patch:?} outside {rows}x{cols} grid"
            )));
        }
        if !(margin > 0.0 && margin <= 1.0) {
            return Err(Error::InvalidLayout(format!(
                "margin {margin} not in (0, 1]"
            )));
        }
        Ok(Self {
            rows,
            cols,
            reference,
            key_patch,
            margin,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn key_patch(&self) -> (usize, usize) {
        self.key_patch
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn reference(&self, row: usize, col: usize) -> Result<LabColour> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::IndexOutOfGrid {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.reference[row * self.cols + col])
    }

    pub fn reference_colours(&self) -> &[LabColour] {
        &self.reference
    }
}

/// Pixel positions of the card's patch-grid corners in one photograph,
/// in the order top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardAnnotation {
    corners: [(f64, f64); 4],
}

impl CardAnnotation {
    pub fn new(corners: [(f64, f64); 4]) -> Result<Self> {
        if corners.iter().any(|c| !c.0.is_finite() || !c.1.is_finite()) {
            return Err(Error::InvalidAnnotation("non-finite corner".into()));
        }
        // Convex with positive area: consecutive edge cross products must
        // all share a sign.
        let mut sign = 0.0f64;
        for i in 0..4 {
            let a = corners[i];
            let b = corners[(i + 1) % 4];
            let c = corners[(i + 2) % 4];
            let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
            if cross == 0.0 {
                return Err(Error::InvalidAnnotation("degenerate corner triple".into()));
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return Err(Error::InvalidAnnotation("corners are not convex".into()));
            }
        }
        Ok(Self { corners })
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        self.corners
    }

    /// Bilinear interpolation over the annotated quad; u runs left to
    /// right, v top to bottom, both in [0, 1].
    fn point(&self, u: f64, v: f64) -> (f64, f64) {
        let [tl, tr, br, bl] = self.corners;
        let x = (1.0 - u) * (1.0 - v) * tl.0
            + u * (1.0 - v) * tr.0
            + u * v * br.0
            + (1.0 - u) * v * bl.0;
        let y = (1.0 - u) * (1.0 - v) * tl.1
            + u * (1.0 - v) * tr.1
            + u * v * br.1
            + (1.0 - u) * v * bl.1;
        (x, y)
    }
}

/// Mean observed colour of a card patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchObservation {
    pub lab: LabColour,
    pub pixel_count: usize,
}

/// Uniform CIELAB correction, reference minus observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColourDelta {
    pub dl: f64,
    pub da: f64,
    pub db: f64,
}

/// Image-space quad of the patch at (row, col), shrunk about its centroid
/// by the layout margin.
pub fn locate_patch_region(
    layout: &CardLayout,
    ann: &CardAnnotation,
    row: usize,
    col: usize,
) -> Result<Roi> {
    if row >= layout.rows || col >= layout.cols {
        return Err(Error::IndexOutOfGrid {
            row,
            col,
            rows: layout.rows,
            cols: layout.cols,
        });
    }
    let u0 = col as f64 / layout.cols as f64;
    let u1 = (col + 1) as f64 / layout.cols as f64;
    let v0 = row as f64 / layout.rows as f64;
    let v1 = (row + 1) as f64 / layout.rows as f64;
    let quad = [
        ann.point(u0, v0),
        ann.point(u1, v0),
        ann.point(u1, v1),
        ann.point(u0, v1),
    ];
    let cx = quad.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let cy = quad.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let m = layout.margin;
    let shrunk = quad
        .iter()
        .map(|&(x, y)| (cx + m * (x - cx), cy + m * (y - cy)))
        .collect();
    Roi::new(shrunk)
}

/// Mean CIELAB over the patch region.
pub fn measure_patch(img: &ImageRgb, region: &Roi) -> Result<PatchObservation> {
    let (lab, pixel_count) = mean_lab_over_roi(img, region)?;
    Ok(PatchObservation { lab, pixel_count })
}

/// Channel-wise correction that moves `observed` onto `reference`.
pub fn compute_delta(reference: LabColour, observed: LabColour) -> ColourDelta {
    ColourDelta {
        dl: reference.l - observed.l,
        da: reference.a - observed.a,
        db: reference.b - observed.b,
    }
}

/// Applies the delta to every pixel in CIELAB, clamping each channel to
/// its nominal range before converting back.
pub fn apply_delta(img: &ImageRgb, delta: &ColourDelta) -> ImageRgb {
    let mut out = ImageRgb::new(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let lab = rgb_to_lab_px(img.get(x, y));
            let shifted =
                LabColour::new(lab.l + delta.dl, lab.a + delta.da, lab.b + delta.db).clamped();
            out.set(x, y, lab_to_rgb_px(shifted));
        }
    }
    out
}

/// Full correction path: locate the key patch, measure it, compare with
/// its printed reference and shift the whole image by the difference.
pub fn normalize_by_card(
    img: &ImageRgb,
    ann: Option<&CardAnnotation>,
    layout: &CardLayout,
) -> Result<ImageRgb> {
    let ann = ann.ok_or(Error::MissingAnnotation)?;
    let (row, col) = layout.key_patch;
    let region = locate_patch_region(layout, ann, row, col)?;
    let observed = measure_patch(img, &region)?;
    let reference = layout.reference(row, col)?;
    let delta = compute_delta(reference, observed.lab);
    Ok(apply_delta(img, &delta))
}
