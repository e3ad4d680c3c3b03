//! Wrinkle and skin-colour measurements.
//!
//! Wrinkles are quantified from first- and second-order luminance
//! gradients: Sobel magnitudes (horizontal and vertical, combined with a
//! bitwise OR as in the original imaging tooling) and a Laplacian
//! response. The headline figure is the wrinkle ratio `W = S / I`, the
//! mean combined gradient divided by the mean intensity over the same
//! pixels, which cancels global illumination gain.

use crate::align::{transfer_roi, AlignTransform};
use crate::card::{normalize_by_card, CardAnnotation, CardLayout};
use crate::color::{mean_lab_over_roi, LabColour};
use crate::error::{Error, Result};
use crate::image::{for_each_roi_pixel, ImageGray, ImageRgb, Roi};
use crate::normalize::{clahe_y, histogram_equalize_y, ClaheConfig, NormalizationMethod};

const SOBEL_X: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
const SOBEL_Y: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];
const LAPLACIAN: [[i32; 3]; 3] = [[0, 1, 0], [1, -4, 1], [0, 1, 0]];

/// 3x3 convolution with replicated edges; the output is the absolute
/// response saturated to u8.
fn convolve3_abs(img: &ImageGray, kernel: &[[i32; 3]; 3]) -> ImageGray {
    let (w, h) = (img.width(), img.height());
    let mut out = ImageGray::new(w, h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0i32;
            for (ky, row) in kernel.iter().enumerate() {
                for (kx, &k) in row.iter().enumerate() {
                    if k != 0 {
                        acc += k * img.get_clamped(x + kx as i64 - 1, y + ky as i64 - 1) as i32;
                    }
                }
            }
            out.set(x as u32, y as u32, acc.unsigned_abs().min(255) as u8);
        }
    }
    out
}

/// Horizontal Sobel gradient magnitude.
pub fn sobel_x(img: &ImageGray) -> ImageGray {
    convolve3_abs(img, &SOBEL_X)
}

/// Vertical Sobel gradient magnitude.
pub fn sobel_y(img: &ImageGray) -> ImageGray {
    convolve3_abs(img, &SOBEL_Y)
}

/// Bitwise OR of the two Sobel magnitudes.
pub fn sobel_combined(img: &ImageGray) -> ImageGray {
    let gx = sobel_x(img);
    let gy = sobel_y(img);
    let data = gx
        .as_raw()
        .iter()
        .zip(gy.as_raw())
        .map(|(a, b)| a | b)
        .collect();
    ImageGray::from_raw(img.width(), img.height(), data)
}

/// Absolute Laplacian response, saturated to u8.
pub fn laplacian(img: &ImageGray) -> ImageGray {
    convolve3_abs(img, &LAPLACIAN)
}

/// Wrinkle ratio over the whole image: mean combined Sobel magnitude
/// divided by mean intensity.
pub fn wrinkle_ratio(img: &ImageGray) -> Result<f64> {
    let grad = sobel_combined(img);
    let n = (img.width() as u64 * img.height() as u64) as f64;
    if n == 0.0 {
        return Err(Error::EmptyRoi);
    }
    let s: f64 = grad.as_raw().iter().map(|&v| v as f64).sum::<f64>() / n;
    let i: f64 = img.as_raw().iter().map(|&v| v as f64).sum::<f64>() / n;
    if i == 0.0 {
        return Err(Error::ZeroMeanImage);
    }
    Ok(s / i)
}

/// Wrinkle ratio restricted to a polygonal region. Gradients are
/// computed on a one-pixel-padded crop of the region's bounding box, so
/// member pixels see exactly the values full-image convolution would
/// give them.
pub fn wrinkle_ratio_in_roi(img: &ImageGray, roi: &Roi) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    let (min_x, min_y, max_x, max_y) = roi.bounding_box();
    let x0 = (min_x.floor() as i64 - 1).clamp(0, w as i64 - 1) as u32;
    let y0 = (min_y.floor() as i64 - 1).clamp(0, h as i64 - 1) as u32;
    let x1 = (max_x.ceil() as i64 + 1).clamp(0, w as i64 - 1) as u32;
    let y1 = (max_y.ceil() as i64 + 1).clamp(0, h as i64 - 1) as u32;
    let crop = img.crop(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    let grad = sobel_combined(&crop);

    let mut sum_i = 0u64;
    let mut sum_s = 0u64;
    let mut count = 0u64;
    for_each_roi_pixel(roi, w, h, |x, y| {
        sum_i += img.get(x, y) as u64;
        // Pixels whose gradients would need neighbours outside the
        // padded crop only occur at true image borders, where the crop
        // replicates exactly like the full image does.
        sum_s += grad.get(x - x0, y - y0) as u64;
        count += 1;
    });
    if count == 0 {
        return Err(Error::EmptyRoi);
    }
    let i = sum_i as f64 / count as f64;
    if i == 0.0 {
        return Err(Error::ZeroMeanImage);
    }
    Ok((sum_s as f64 / count as f64) / i)
}

/// Wrinkle ratio for a follow-up session: the reference-session region
/// is mapped through the alignment transform, then measured in place.
pub fn wrinkle_for_session(
    img: &ImageGray,
    reference_roi: &Roi,
    transform: &AlignTransform,
) -> Result<f64> {
    let roi = transfer_roi(reference_roi, transform)?;
    wrinkle_ratio_in_roi(img, &roi)
}

/// Mean skin colour over a region, in CIELAB.
pub fn skin_colour(img: &ImageRgb, roi: &Roi) -> Result<LabColour> {
    let (lab, _count) = mean_lab_over_roi(img, roi)?;
    Ok(lab)
}

/// Applies one of the illumination-normalization methods. The colour
/// card context is only consulted by [`NormalizationMethod::ColourCard`].
pub fn apply_normalization(
    img: &ImageRgb,
    method: NormalizationMethod,
    clahe: &ClaheConfig,
    card: Option<(&CardAnnotation, &CardLayout)>,
) -> Result<ImageRgb> {
    match method {
        NormalizationMethod::Original => Ok(img.clone()),
        NormalizationMethod::HistEqualY => Ok(histogram_equalize_y(img)),
        NormalizationMethod::Clahe => clahe_y(img, clahe),
        NormalizationMethod::ColourCard => {
            let (annotation, layout) = card.ok_or(Error::MissingAnnotation)?;
            normalize_by_card(img, Some(annotation), layout)
        }
    }
}
