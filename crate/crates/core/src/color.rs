//! Colour space conversions: full-range Rec. 601 YUV and CIELAB under the
//! sRGB/D65 convention.
//!
//! All scalar rounding is round-half-away-from-zero (`f64::round`). The
//! YUV inverse is the exact numerical inverse of the forward matrix, so
//! quantization is the only round-trip error source.

use std::sync::LazyLock;

use crate::image::{luma_u8, ImageRgb};

/// CIELAB colour. L in [0, 100], a and b in [-128, 127].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabColour {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColour {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    /// Clamps each channel to its nominal range.
    pub fn clamped(self) -> Self {
        Self {
            l: self.l.clamp(0.0, 100.0),
            a: self.a.clamp(-128.0, 127.0),
            b: self.b.clamp(-128.0, 127.0),
        }
    }
}

/// YUV raster: 8-bit luma plane plus continuous signed chroma. Only the
/// Y plane is ever histogram-equalized, so U and V stay unquantized;
/// an 8-bit chroma encoding would clip strongly saturated colours and
/// break the round trip (see `rgb_to_yuv_px` for the 8-bit interchange
/// convention).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageYuv {
    width: u32,
    height: u32,
    y: Vec<u8>,
    chroma: Vec<(f64, f64)>,
}

impl ImageYuv {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Copy of the Y plane.
    pub fn y_plane(&self) -> Vec<u8> {
        self.y.clone()
    }

    /// Replaces the Y plane. The slice length must be `width * height`.
    pub fn set_y_plane(&mut self, y: &[u8]) {
        assert_eq!(y.len(), self.y.len());
        self.y.copy_from_slice(y);
    }

    /// The signed U and V planes interleaved, for hue-preservation checks.
    pub fn uv_planes(&self) -> Vec<(f64, f64)> {
        self.chroma.clone()
    }
}

/// Rec. 601 full-range forward matrix (rows: Y, U, V).
const YUV_FORWARD: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.14713, -0.28886, 0.436],
    [0.615, -0.51499, -0.10001],
];

static YUV_INVERSE: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&YUV_FORWARD));

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c =
        |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    [
        [
            c(1, 1, 2, 2) / det,
            -c(0, 1, 2, 2) / det,
            c(0, 1, 1, 2) / det,
        ],
        [
            -c(1, 0, 2, 2) / det,
            c(0, 0, 2, 2) / det,
            -c(0, 0, 1, 2) / det,
        ],
        [
            c(1, 0, 2, 1) / det,
            -c(0, 0, 2, 1) / det,
            c(0, 0, 1, 1) / det,
        ],
    ]
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Converts one RGB pixel to full-range YUV with chroma offset 128.
pub fn rgb_to_yuv_px(px: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
    let m = &YUV_FORWARD;
    let u = m[1][0] * r + m[1][1] * g + m[1][2] * b + 128.0;
    let v = m[2][0] * r + m[2][1] * g + m[2][2] * b + 128.0;
    [luma_u8(px), quantize(u), quantize(v)]
}

/// True when the pixel's U or V channel falls outside [0, 255] before
/// clamping. The V coefficient row spans [-28.8, +156.8] around the 128
/// offset, so strongly saturated reds and greens clip; for such pixels
/// the YUV round trip is lossy by construction and the usual <= 2
/// quantization bound does not apply.
pub fn yuv_chroma_clips(px: [u8; 3]) -> bool {
    let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
    let m = &YUV_FORWARD;
    let u = m[1][0] * r + m[1][1] * g + m[1][2] * b + 128.0;
    let v = m[2][0] * r + m[2][1] * g + m[2][2] * b + 128.0;
    !(0.0..255.5).contains(&u) || !(0.0..255.5).contains(&v)
}

/// Inverts one YUV pixel back to RGB.
pub fn yuv_to_rgb_px(px: [u8; 3]) -> [u8; 3] {
    let y = px[0] as f64;
    let u = px[1] as f64 - 128.0;
    let v = px[2] as f64 - 128.0;
    let m = &*YUV_INVERSE;
    [
        quantize(m[0][0] * y + m[0][1] * u + m[0][2] * v),
        quantize(m[1][0] * y + m[1][1] * u + m[1][2] * v),
        quantize(m[2][0] * y + m[2][1] * u + m[2][2] * v),
    ]
}

pub fn rgb_to_yuv(img: &ImageRgb) -> ImageYuv {
    let m = &YUV_FORWARD;
    let n = img.width() as usize * img.height() as usize;
    let mut y = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n);
    for px in img.pixels() {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        y.push(luma_u8(px));
        chroma.push((
            m[1][0] * r + m[1][1] * g + m[1][2] * b,
            m[2][0] * r + m[2][1] * g + m[2][2] * b,
        ));
    }
    ImageYuv {
        width: img.width(),
        height: img.height(),
        y,
        chroma,
    }
}

pub fn yuv_to_rgb(img: &ImageYuv) -> ImageRgb {
    let m = &*YUV_INVERSE;
    let mut data = Vec::with_capacity(img.y.len() * 3);
    for (&y, &(u, v)) in img.y.iter().zip(&img.chroma) {
        let y = y as f64;
        data.push(quantize(m[0][0] * y + m[0][1] * u + m[0][2] * v));
        data.push(quantize(m[1][0] * y + m[1][1] * u + m[1][2] * v));
        data.push(quantize(m[2][0] * y + m[2][1] * u + m[2][2] * v));
    }
    ImageRgb::from_raw(img.width, img.height, data)
}

/// sRGB to XYZ (linear light), D65 white.
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

static XYZ_TO_SRGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&SRGB_TO_XYZ));

/// D65 reference white.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const DELTA: f64 = 6.0 / 29.0;

fn srgb_linearize(c8: u8) -> f64 {
    let c = c8 as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode_f64(c: f64) -> f64 {
    let e = if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    e * 255.0
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// Converts one sRGB pixel to CIELAB (D65, 2 degree observer).
pub fn rgb_to_lab_px(px: [u8; 3]) -> LabColour {
    let lin = [
        srgb_linearize(px[0]),
        srgb_linearize(px[1]),
        srgb_linearize(px[2]),
    ];
    let m = &SRGB_TO_XYZ;
    let xyz = [
        m[0][0] * lin[0] + m[0][1] * lin[1] + m[0][2] * lin[2],
        m[1][0] * lin[0] + m[1][1] * lin[1] + m[1][2] * lin[2],
        m[2][0] * lin[0] + m[2][1] * lin[1] + m[2][2] * lin[2],
    ];
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    LabColour {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Converts CIELAB to continuous gamma-encoded sRGB in 0..=255, clamping
/// out-of-gamut values into range. Useful when quantization must be
/// deferred, e.g. for dithering.
pub fn lab_to_rgb_f64(lab: LabColour) -> [f64; 3] {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let xyz = [
        WHITE[0] * lab_f_inv(fx),
        WHITE[1] * lab_f_inv(fy),
        WHITE[2] * lab_f_inv(fz),
    ];
    let m = &*XYZ_TO_SRGB;
    let lin = [
        m[0][0] * xyz[0] + m[0][1] * xyz[1] + m[0][2] * xyz[2],
        m[1][0] * xyz[0] + m[1][1] * xyz[1] + m[1][2] * xyz[2],
        m[2][0] * xyz[0] + m[2][1] * xyz[1] + m[2][2] * xyz[2],
    ];
    lin.map(|c| srgb_encode_f64(c.clamp(0.0, 1.0)))
}

/// Converts CIELAB back to sRGB, clamping out-of-gamut values into range.
pub fn lab_to_rgb_px(lab: LabColour) -> [u8; 3] {
    lab_to_rgb_f64(lab).map(quantize)
}

/// Mean CIELAB colour over the pixel centers inside the ROI, with the
/// number of pixels sampled. Means are taken channel-wise in LAB.
pub fn mean_lab_over_roi(
    img: &ImageRgb,
    roi: &crate::image::Roi,
) -> crate::error::Result<(LabColour, usize)> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    crate::image::for_each_roi_pixel(roi, img.width(), img.height(), |x, y| {
        let lab = rgb_to_lab_px(img.get(x, y));
        sum[0] += lab.l;
        sum[1] += lab.a;
        sum[2] += lab.b;
        count += 1;
    });
    if count == 0 {
        return Err(crate::error::Error::EmptyRoi);
    }
    let n = count as f64;
    Ok((LabColour::new(sum[0] / n, sum[1] / n, sum[2] / n), count))
}
