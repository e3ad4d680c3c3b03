//! Raster containers, image loading and polygonal regions of interest.
//!
//! Images are stored row-major with the origin at the top-left corner.
//! Pixel (x, y) covers the unit square [x, x+1) x [y, y+1); its center is
//! (x + 0.5, y + 0.5). ROI membership is decided on pixel centers.

use std::path::Path;

use image::{DynamicImage, ImageDecoder, ImageReader};

use crate::error::{Error, Result};

/// 8-bit interleaved RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// 8-bit single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageRgb {
    /// Allocates a black image of the given dimensions.
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    /// Wraps an interleaved RGB buffer. The buffer length must be
    /// exactly `width * height * 3`.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize * 3);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, px: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&px);
    }

    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn pixels_mut(&mut self) -> impl Iterator<Item = &mut [u8]> {
        self.data.chunks_exact_mut(3)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    /// Copies the axis-aligned window with top-left (x0, y0).
    /// The window must lie inside the image.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> ImageRgb {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut out = ImageRgb::new(w, h);
        for y in 0..h {
            let src = self.index(x0, y0 + y);
            let dst = out.index(0, y);
            out.data[dst..dst + w as usize * 3]
                .copy_from_slice(&self.data[src..src + w as usize * 3]);
        }
        out
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb_image(img: image::RgbImage) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            data: img.into_raw(),
        }
    }
}

impl ImageGray {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    /// Reads with coordinates clamped to the image, replicating edges.
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> ImageGray {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut out = ImageGray::new(w, h);
        for y in 0..h {
            let src = (y0 + y) as usize * self.width as usize + x0 as usize;
            let dst = y as usize * w as usize;
            out.data[dst..dst + w as usize].copy_from_slice(&self.data[src..src + w as usize]);
        }
        out
    }

    pub fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length matches dimensions")
    }
}

/// Decodes a JPEG or PNG file into interleaved RGB, applying any EXIF
/// orientation so that stored rows are display rows.
pub fn load_image(path: &Path) -> Result<ImageRgb> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?
        .with_guessed_format()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    let mut decoder = reader.into_decoder().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let orientation = decoder.orientation().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut img = DynamicImage::from_decoder(decoder).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    img.apply_orientation(orientation);
    Ok(ImageRgb::from_rgb_image(img.into_rgb8()))
}

/// Encodes an RGB image; the format follows the file extension.
pub fn save_image(path: &Path, img: &ImageRgb) -> Result<()> {
    img.to_rgb_image().save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Encodes a grayscale image; the format follows the file extension.
pub fn save_gray(path: &Path, img: &ImageGray) -> Result<()> {
    img.to_gray_image().save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Rec. 601 luma, shared by grayscale conversion and the Y plane so the
/// two agree bit for bit.
pub(crate) fn luma_u8(px: [u8; 3]) -> u8 {
    let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
    y.round().clamp(0.0, 255.0) as u8
}

/// Luma-weighted grayscale conversion.
pub fn to_grayscale(img: &ImageRgb) -> ImageGray {
    let data = img.pixels().map(luma_u8).collect();
    ImageGray::from_raw(img.width(), img.height(), data)
}

/// Closed polygon in pixel coordinates. Simple (non-self-intersecting),
/// at least three vertices. Membership tests include the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    vertices: Vec<(f64, f64)>,
}

const EDGE_EPS: f64 = 1e-9;

impl Roi {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidRoi(format!(
                "{} vertices given",
                vertices.len()
            )));
        }
        if !vertices.iter().all(|v| v.0.is_finite() && v.1.is_finite()) {
            return Err(Error::InvalidRoi("non-finite vertex".into()));
        }
        let roi = Self { vertices };
        if roi.self_intersects() {
            return Err(Error::InvalidRoi("edges intersect".into()));
        }
        Ok(roi)
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Axis-aligned bounding box (min_x, min_y, max_x, max_y).
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut bb = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in &self.vertices {
            bb.0 = bb.0.min(x);
            bb.1 = bb.1.min(y);
            bb.2 = bb.2.max(x);
            bb.3 = bb.3.max(y);
        }
        bb
    }

    /// Even-odd membership with an inclusive boundary.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if point_on_segment((x, y), a, b) {
                return true;
            }
        }
        let mut inside = false;
        for i in 0..n {
            let (x1, y1) = self.vertices[i];
            let (x2, y2) = self.vertices[(i + 1) % n];
            if (y1 > y) != (y2 > y) {
                let x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
                if x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                // Edges sharing an endpoint are allowed to touch there.
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a1, a2) = (self.vertices[i], self.vertices[(i + 1) % n]);
                let (b1, b2) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return true;
                }
            }
        }
        false
    }
}

fn point_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let (px, py) = p;
    let (ax, ay) = a;
    let (bx, by) = b;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (px - ax).hypot(py - ay) <= EDGE_EPS;
    }
    let t = ((px - ax) * dx + (py - ay) * dy) / len2;
    if !(0.0..=1.0).contains(&t) {
        return false;
    }
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (px - cx).hypot(py - cy) <= EDGE_EPS
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_intersect(a1: (f64, f64), a2: (f64, f64), b1: (f64, f64), b2: (f64, f64)) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    // Collinear touch or overlap between non-adjacent edges also breaks
    // simplicity.
    (d1 == 0.0 && point_on_segment(a1, b1, b2))
        || (d2 == 0.0 && point_on_segment(a2, b1, b2))
        || (d3 == 0.0 && point_on_segment(b1, a1, a2))
        || (d4 == 0.0 && point_on_segment(b2, a1, a2))
}

/// Visits every pixel whose center lies inside the ROI, clipped to the
/// image bounds given by `width` x `height`.
pub(crate) fn for_each_roi_pixel<F: FnMut(u32, u32)>(roi: &Roi, width: u32, height: u32, mut f: F) {
    let (min_x, min_y, max_x, max_y) = roi.bounding_box();
    if min_x >= width as f64 || min_y >= height as f64 || max_x < 0.0 || max_y < 0.0 {
        return;
    }
    let x0 = min_x.floor().max(0.0) as u32;
    let y0 = min_y.floor().max(0.0) as u32;
    let x1 = (max_x.ceil() as i64).min(width as i64 - 1) as u32;
    let y1 = (max_y.ceil() as i64).min(height as i64 - 1) as u32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if roi.contains(x as f64 + 0.5, y as f64 + 0.5) {
                f(x, y);
            }
        }
    }
}

/// Arithmetic mean of the gray values whose pixel centers fall inside the
/// ROI. Pixels outside the image are ignored; an ROI that covers no pixel
/// center is an error.
pub fn mean_over_roi(img: &ImageGray, roi: &Roi) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for_each_roi_pixel(roi, img.width(), img.height(), |x, y| {
        sum += img.get(x, y) as f64;
        count += 1;
    });
    if count == 0 {
        return Err(Error::EmptyRoi);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_roi(x0: f64, y0: f64, x1: f64, y1: f64) -> Roi {
        Roi::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]).unwrap()
    }

    #[test]
    fn grayscale_matches_hand_luma() {
        let mut img = ImageRgb::new(2, 1);
        img.set(0, 0, [255, 0, 0]);
        img.set(1, 0, [10, 20, 30]);
        let gray = to_grayscale(&img);
        assert_eq!(gray.get(0, 0), 76); // round(0.299*255)
        assert_eq!(gray.get(1, 0), 18); // round(2.99 + 11.74 + 3.42)
    }

    #[test]
    fn mean_over_rect_roi_covering_two_pixels() {
        let img = ImageGray::from_raw(2, 1, vec![0, 255]);
        let roi = rect_roi(0.0, 0.0, 2.0, 1.0);
        assert_eq!(mean_over_roi(&img, &roi).unwrap(), 127.5);
    }

    #[test]
    fn roi_outside_image_is_empty() {
        let img = ImageGray::new(4, 4);
        let roi = rect_roi(10.0, 10.0, 12.0, 12.0);
        assert!(matches!(mean_over_roi(&img, &roi), Err(Error::EmptyRoi)));
    }

    #[test]
    fn roi_partially_outside_uses_clipped_pixels() {
        let img = ImageGray::from_raw(2, 2, vec![10, 20, 30, 40]);
        let roi = rect_roi(1.0, -5.0, 10.0, 10.0);
        // Only the right column intersects the image.
        assert_eq!(mean_over_roi(&img, &roi).unwrap(), 30.0);
    }

    #[test]
    fn boundary_pixel_centers_count_as_inside() {
        let img = ImageGray::from_raw(3, 1, vec![9, 90, 200]);
        // Polygon edge passes exactly through the center of pixel 1.
        let roi = Roi::new(vec![(0.0, 0.0), (1.5, 0.5), (0.0, 1.0)]).unwrap();
        let m = mean_over_roi(&img, &roi).unwrap();
        assert_eq!(m, (9.0 + 90.0) / 2.0);
    }

    #[test]
    fn degenerate_rois_are_rejected() {
        assert!(Roi::new(vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        // Bowtie self-intersection.
        assert!(Roi::new(vec![(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 2.0)]).is_err());
        assert!(Roi::new(vec![(0.0, 0.0), (f64::NAN, 1.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn concave_roi_membership() {
        // L-shaped hexagon: the notch must be outside.
        let roi = Roi::new(vec![
            (0.0, 0.0),
            (4.0, 0.0),
            (4.0, 4.0),
            (2.0, 4.0),
            (2.0, 2.0),
            (0.0, 2.0),
        ])
        .unwrap();
        assert!(roi.contains(1.0, 1.0));
        assert!(roi.contains(3.0, 3.0));
        assert!(!roi.contains(1.0, 3.0));
    }

    #[test]
    fn crop_copies_window() {
        let mut img = ImageRgb::new(4, 4);
        img.set(2, 1, [1, 2, 3]);
        let c = img.crop(1, 1, 3, 2);
        assert_eq!(c.width(), 3);
        assert_eq!(c.height(), 2);
        assert_eq!(c.get(1, 0), [1, 2, 3]);
    }

    #[test]
    fn load_image_missing_file() {
        let err = load_image(Path::new("/nonexistent/zzz.png")).unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }
}
