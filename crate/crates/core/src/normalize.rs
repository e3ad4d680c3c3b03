//! Illumination normalization: global histogram equalization and CLAHE.
//!
//! Both operators work on the luma channel. For colour images the RGB
//! data is taken to YUV, the Y plane is remapped, and the chroma planes
//! are carried through untouched, so hue is preserved by construction.
//!
//! The remap rule is the classic CDF stretch
//! `h(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255)` where
//! `cdf_min` is the CDF at the smallest occurring value. A histogram with
//! a single occupied bin has no dynamic range and maps to itself.

use crate::color::{rgb_to_yuv, yuv_to_rgb};
use crate::error::{Error, Result};
use crate::image::{ImageGray, ImageRgb};

/// Normalization routes applied before skin-colour extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormalizationMethod {
    /// No processing; the decoded image as captured.
    Original,
    /// Global histogram equalization of the Y plane.
    HistEqualY,
    /// Contrast-limited adaptive histogram equalization of the Y plane.
    Clahe,
    /// Colour-card delta correction in CIELAB.
    ColourCard,
}

impl NormalizationMethod {
    pub const ALL: [NormalizationMethod; 4] = [
        NormalizationMethod::Original,
        NormalizationMethod::HistEqualY,
        NormalizationMethod::Clahe,
        NormalizationMethod::ColourCard,
    ];

    /// Stable lower-case identifier used in manifests, CLI flags and
    /// report file names.
    pub fn slug(self) -> &'static str {
        match self {
            NormalizationMethod::Original => "original",
            NormalizationMethod::HistEqualY => "histeq",
            NormalizationMethod::Clahe => "clahe",
            NormalizationMethod::ColourCard => "card",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.slug() == s)
    }
}

/// CLAHE tiling and clipping parameters.
///
/// `tiles_x` x `tiles_y` is the tile grid laid over the image (not the
/// tile size). `clip_limit` is the maximum count a tile histogram bin may
/// keep; `None` derives the widely used default of 40 per 256-bin
/// histogram scaled by tile area: `max(1, round(40 * tile_area / 256))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaheConfig {
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub clip_limit: Option<u32>,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            tiles_x: 4,
            tiles_y: 4,
            clip_limit: None,
        }
    }
}

impl ClaheConfig {
    /// Rejects degenerate tile grids and zero clip limits.
    pub fn validate(&self) -> Result<()> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(Error::InvalidConfig(
                "tile grid must be at least 1x1".into(),
            ));
        }
        if self.clip_limit == Some(0) {
            return Err(Error::InvalidConfig("clip limit must be at least 1".into()));
        }
        Ok(())
    }

    fn effective_clip(&self, tile_area: u64) -> u64 {
        match self.clip_limit {
            Some(c) => c as u64,
            None => ((40.0 * tile_area as f64 / 256.0).round() as u64).max(1),
        }
    }
}

fn histogram(values: impl Iterator<Item = u8>) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for v in values {
        hist[v as usize] += 1;
    }
    hist
}

/// CDF remap table, or `None` when the histogram has a single occupied
/// bin (degenerate: the identity applies).
fn equalization_lut(hist: &[u64; 256], total: u64) -> Option<[u8; 256]> {
    let first = hist.iter().position(|&c| c > 0)?;
    let cdf_min = hist[first];
    if cdf_min == total {
        return None;
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for (v, out) in lut.iter_mut().enumerate() {
        cdf += hist[v];
        *out = if v < first {
            0
        } else {
            ((cdf - cdf_min) as f64 / denom * 255.0).round() as u8
        };
    }
    Some(lut)
}

/// Global histogram equalization of a gray image. A constant image is
/// returned unchanged.
pub fn histogram_equalize_gray(img: &ImageGray) -> ImageGray {
    let hist = histogram(img.as_raw().iter().copied());
    let total = img.as_raw().len() as u64;
    match equalization_lut(&hist, total) {
        None => img.clone(),
        Some(lut) => ImageGray::from_raw(
            img.width(),
            img.height(),
            img.as_raw().iter().map(|&v| lut[v as usize]).collect(),
        ),
    }
}

/// Equalizes the Y plane of a colour image, leaving chroma untouched.
/// An image with constant luma is returned unchanged.
pub fn histogram_equalize_y(img: &ImageRgb) -> ImageRgb {
    let mut yuv = rgb_to_yuv(img);
    let y = yuv.y_plane();
    let hist = histogram(y.iter().copied());
    match equalization_lut(&hist, y.len() as u64) {
        None => img.clone(),
        Some(lut) => {
            let remapped: Vec<u8> = y.iter().map(|&v| lut[v as usize]).collect();
            yuv.set_y_plane(&remapped);
            yuv_to_rgb(&yuv)
        }
    }
}

/// Per-tile LUTs plus bilinear blending between the four nearest tiles.
/// Shared by the gray and Y-plane entry points.
fn clahe_plane(plane: &ImageGray, cfg: &ClaheConfig) -> Result<ImageGray> {
    cfg.validate()?;
    let (w, h) = (plane.width(), plane.height());
    if w < cfg.tiles_x || h < cfg.tiles_y {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: cfg.tiles_x,
            min_height: cfg.tiles_y,
        });
    }
    let (tx, ty) = (cfg.tiles_x as usize, cfg.tiles_y as usize);
    let x_bound: Vec<u32> = (0..=tx)
        .map(|i| (i as u64 * w as u64 / tx as u64) as u32)
        .collect();
    let y_bound: Vec<u32> = (0..=ty)
        .map(|i| (i as u64 * h as u64 / ty as u64) as u32)
        .collect();

    // One LUT per tile. Identity (None) for single-valued tiles.
    let mut luts: Vec<Option<[u8; 256]>> = Vec::with_capacity(tx * ty);
    for ti in 0..ty {
        for tj in 0..tx {
            let (x0, x1) = (x_bound[tj], x_bound[tj + 1]);
            let (y0, y1) = (y_bound[ti], y_bound[ti + 1]);
            let mut hist = [0u64; 256];
            for yy in y0..y1 {
                for xx in x0..x1 {
                    hist[plane.get(xx, yy) as usize] += 1;
                }
            }
            let area = (x1 - x0) as u64 * (y1 - y0) as u64;
            if hist.iter().filter(|&&c| c > 0).count() <= 1 {
                luts.push(None);
                continue;
            }
            clip_histogram(&mut hist, cfg.effective_clip(area));
            luts.push(equalization_lut(&hist, area));
        }
    }
    let lookup = |tile: usize, v: u8| -> f64 {
        match &luts[tile] {
            Some(lut) => lut[v as usize] as f64,
            None => v as f64,
        }
    };

    let tw = w as f64 / tx as f64;
    let th = h as f64 / ty as f64;
    let mut out = ImageGray::new(w, h);
    for y in 0..h {
        let gy = (y as f64 + 0.5) / th - 0.5;
        let iy = gy.floor();
        let ay = gy - iy;
        let iy0 = (iy as i64).clamp(0, ty as i64 - 1) as usize;
        let iy1 = (iy as i64 + 1).clamp(0, ty as i64 - 1) as usize;
        for x in 0..w {
            let gx = (x as f64 + 0.5) / tw - 0.5;
            let ix = gx.floor();
            let ax = gx - ix;
            let ix0 = (ix as i64).clamp(0, tx as i64 - 1) as usize;
            let ix1 = (ix as i64 + 1).clamp(0, tx as i64 - 1) as usize;
            let v = plane.get(x, y);
            let tl = lookup(iy0 * tx + ix0, v);
            let tr = lookup(iy0 * tx + ix1, v);
            let bl = lookup(iy1 * tx + ix0, v);
            let br = lookup(iy1 * tx + ix1, v);
            let top = tl + ax * (tr - tl);
            let bot = bl + ax * (br - bl);
            let blended = top + ay * (bot - top);
            out.set(x, y, blended.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

/// Clips bins at `clip` and redistributes the clipped mass uniformly:
/// `excess / 256` to every bin, then the remainder one count per bin
/// starting from bin 0.
fn clip_histogram(hist: &mut [u64; 256], clip: u64) {
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > clip {
            excess += *h - clip;
            *h = clip;
        }
    }
    if excess == 0 {
        return;
    }
    let per_bin = excess / 256;
    let residual = (excess % 256) as usize;
    for h in hist.iter_mut() {
        *h += per_bin;
    }
    for h in hist.iter_mut().take(residual) {
        *h += 1;
    }
}

/// CLAHE on a gray image.
pub fn clahe_gray(img: &ImageGray, cfg: &ClaheConfig) -> Result<ImageGray> {
    clahe_plane(img, cfg)
}

/// CLAHE on the Y plane of a colour image, chroma untouched. An image
/// with constant luma is returned unchanged.
pub fn clahe_y(img: &ImageRgb, cfg: &ClaheConfig) -> Result<ImageRgb> {
    cfg.validate()?;
    let mut yuv = rgb_to_yuv(img);
    let y = ImageGray::from_raw(img.width(), img.height(), yuv.y_plane());
    if y.as_raw().iter().all(|&v| v == y.as_raw()[0]) {
        // Degenerate everywhere; identical to the global rule.
        return Ok(img.clone());
    }
    let eq = clahe_plane(&y, cfg)?;
    yuv.set_y_plane(eq.as_raw());
    Ok(yuv_to_rgb(&yuv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_cdf_remap() {
        // hist: {10: 2, 20: 1, 30: 1}, cdf_min = 2, N = 4.
        let img = ImageGray::from_raw(4, 1, vec![10, 10, 20, 30]);
        let eq = histogram_equalize_gray(&img);
        assert_eq!(eq.as_raw(), &[0, 0, 128, 255]);
    }

    #[test]
    fn constant_gray_image_unchanged() {
        let img = ImageGray::from_raw(3, 2, vec![77; 6]);
        assert_eq!(histogram_equalize_gray(&img), img);
    }

    #[test]
    fn full_uniform_histogram_is_fixed_point() {
        // Every value occurs exactly once: the remap is the identity.
        let data: Vec<u8> = (0..=255).collect();
        let img = ImageGray::from_raw(16, 16, data.clone());
        assert_eq!(histogram_equalize_gray(&img).as_raw(), &data);
    }

    #[test]
    fn remap_is_monotone_on_observed_values() {
        let data: Vec<u8> = (0..1024u32)
            .map(|i| ((i * 37 + i * i / 7) % 251) as u8)
            .collect();
        let img = ImageGray::from_raw(32, 32, data.clone());
        let eq = histogram_equalize_gray(&img);
        let mut pairs: Vec<(u8, u8)> = data
            .iter()
            .copied()
            .zip(eq.as_raw().iter().copied())
            .collect();
        pairs.sort();
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1, "{:?} then {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn constant_colour_image_unchanged_by_y_equalization() {
        let mut img = ImageRgb::new(4, 3);
        for y in 0..3 {
            for x in 0..4 {
                img.set(x, y, [200, 150, 130]);
            }
        }
        assert_eq!(histogram_equalize_y(&img), img);
        let cfg = ClaheConfig::default();
        assert_eq!(clahe_y(&img, &cfg).unwrap(), img);
    }

    #[test]
    fn y_equalization_preserves_chroma_planes() {
        let mut img = ImageRgb::new(8, 8);
        for y in 0..8 {
            for x in 0..8 {
                let v = (x * 32) as u8;
                img.set(x, y, [v, v / 2, 255 - v]);
            }
        }
        let before = crate::color::rgb_to_yuv(&img);
        let after = histogram_equalize_y(&img);
        // Recompute chroma on the pre-quantization path: the remap only
        // touched Y, so U and V planes carried through bit-identically.
        let mut yuv = crate::color::rgb_to_yuv(&img);
        let hist = histogram(yuv.y_plane().iter().copied());
        let lut = equalization_lut(&hist, 64).unwrap();
        let y2: Vec<u8> = yuv.y_plane().iter().map(|&v| lut[v as usize]).collect();
        yuv.set_y_plane(&y2);
        assert_eq!(yuv.uv_planes(), before.uv_planes());
        assert_eq!(after, crate::color::yuv_to_rgb(&yuv));
    }

    #[test]
    fn clahe_single_tile_unclipped_equals_global() {
        let data: Vec<u8> = (0..4096u32)
            .map(|i| ((i * 13 + i / 5) % 256) as u8)
            .collect();
        let img = ImageGray::from_raw(64, 64, data);
        let cfg = ClaheConfig {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: Some(u32::MAX),
        };
        assert_eq!(
            clahe_gray(&img, &cfg).unwrap(),
            histogram_equalize_gray(&img)
        );
    }

    #[test]
    fn clahe_constant_image_unchanged() {
        let img = ImageGray::from_raw(32, 32, vec![123; 1024]);
        let out = clahe_gray(&img, &ClaheConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn clahe_output_stays_in_range_on_non_divisible_grid() {
        let data: Vec<u8> = (0..(50 * 37) as u32).map(|i| (i % 256) as u8).collect();
        let img = ImageGray::from_raw(50, 37, data);
        let cfg = ClaheConfig {
            tiles_x: 4,
            tiles_y: 3,
            clip_limit: None,
        };
        let out = clahe_gray(&img, &cfg).unwrap();
        assert_eq!(out.width(), 50);
        assert_eq!(out.height(), 37);
    }

    #[test]
    fn clahe_rejects_degenerate_configs() {
        let img = ImageGray::new(8, 8);
        let zero_tiles = ClaheConfig {
            tiles_x: 0,
            tiles_y: 4,
            clip_limit: None,
        };
        assert!(matches!(
            clahe_gray(&img, &zero_tiles),
            Err(Error::InvalidConfig(_))
        ));
        let zero_clip = ClaheConfig {
            tiles_x: 2,
            tiles_y: 2,
            clip_limit: Some(0),
        };
        assert!(matches!(
            clahe_gray(&img, &zero_clip),
            Err(Error::InvalidConfig(_))
        ));
        let tiny = ClaheConfig {
            tiles_x: 16,
            tiles_y: 16,
            clip_limit: None,
        };
        assert!(matches!(
            clahe_gray(&img, &tiny),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn clip_redistribution_bounds_bins() {
        let mut hist = [0u64; 256];
        hist[0] = 500;
        hist[10] = 300;
        hist[200] = 24;
        let total_excess: u64 = (500 - 64) + (300 - 64);
        clip_histogram(&mut hist, 64);
        assert_eq!(hist.iter().sum::<u64>(), 824);
        let bound = 64 + total_excess.div_ceil(256);
        for (i, &c) in hist.iter().enumerate() {
            assert!(c <= bound, "bin {i} = {c} > {bound}");
        }
        // Residual lands one per bin starting at bin 0.
        assert_eq!(
            hist[255],
            total_excess / 256 + u64::from(total_excess % 256 > 255)
        );
    }

    #[test]
    fn clahe_tile_grid_is_a_grid_not_tile_size() {
        // A 4x4 grid over 64x64 means 16x16-pixel tiles; content confined
        // to one tile must not disturb a far-away constant tile interior.
        let mut img = ImageGray::from_raw(64, 64, vec![100; 4096]);
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, ((x + y) * 8) as u8);
            }
        }
        let out = clahe_gray(&img, &ClaheConfig::default()).unwrap();
        // The far corner sits past the last tile center: pure identity.
        assert_eq!(out.get(63, 63), 100);
    }
}
