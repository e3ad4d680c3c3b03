//! Difference-of-Gaussians keypoint detector and 128-d gradient
//! descriptor (the classic scale-invariant feature pipeline).
//!
//! Stages: Gaussian scale-space pyramid, DoG extrema with sub-pixel
//! quadratic refinement, low-contrast and edge-response rejection,
//! orientation assignment from a smoothed 36-bin gradient histogram, and
//! a 4x4x8 trilinearly interpolated descriptor normalized with the usual
//! clamp-at-0.2 renormalization. Angles grow counter-clockwise in image
//! coordinates and are kept in [0, 2pi).

use crate::image::ImageGray;

use super::{Descriptor, Keypoint};

pub(crate) const SIGMA0: f64 = 1.6;
const INIT_SIGMA: f64 = 0.5;
const N_SCALES: usize = 3;
const N_GAUSS: usize = N_SCALES + 3;
const CONTRAST_THRESHOLD: f32 = 0.04;
const EDGE_THRESHOLD: f32 = 10.0;
const MAX_INTERP_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_CELL_SCALE: f64 = 3.0;
const DESC_CLAMP: f32 = 0.2;

/// Minimum image side for detection; smaller inputs cannot hold even a
/// two-octave pyramid with usable borders.
pub(crate) const MIN_IMAGE_SIDE: u32 = 32;

#[derive(Clone)]
struct GrayF32 {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl GrayF32 {
    fn from_gray(img: &ImageGray) -> Self {
        Self {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    /// Separable Gaussian blur with replicated edges.
    fn blur(&self, sigma: f64) -> GrayF32 {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (sigma * 4.0).ceil() as i64;
        let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
        let denom = 2.0 * sigma * sigma;
        for i in -radius..=radius {
            kernel.push((-(i * i) as f64 / denom).exp() as f32);
        }
        let norm: f32 = kernel.iter().sum();
        for k in &mut kernel {
            *k /= norm;
        }

        let (w, h) = (self.w, self.h);
        let mut tmp = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for (ki, k) in kernel.iter().enumerate() {
                    let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                    acc += k * self.at(sx, y);
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for (ki, k) in kernel.iter().enumerate() {
                    let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                    acc += k * tmp[sy * w + x];
                }
                out[y * w + x] = acc;
            }
        }
        GrayF32 { w, h, data: out }
    }

    /// Decimation by two, keeping even rows and columns.
    fn half(&self) -> GrayF32 {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(x * 2, y * 2));
            }
        }
        GrayF32 { w, h, data }
    }

    fn sub(&self, other: &GrayF32) -> GrayF32 {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        GrayF32 {
            w: self.w,
            h: self.h,
            data,
        }
    }
}

pub(crate) struct Pyramid {
    /// gauss[octave][level], N_GAUSS levels per octave.
    gauss: Vec<Vec<GrayF32>>,
}

pub(crate) fn build_pyramid(img: &ImageGray) -> Pyramid {
    let base = GrayF32::from_gray(img);
    let first_blur = (SIGMA0 * SIGMA0 - INIT_SIGMA * INIT_SIGMA).max(0.01).sqrt();
    let base = base.blur(first_blur);

    let mut n_octaves = 1usize;
    let mut side = base.w.min(base.h);
    while side / 2 >= 16 && n_octaves < 8 {
        side /= 2;
        n_octaves += 1;
    }

    // Incremental blur so level i carries total sigma SIGMA0 * k^i.
    let k = 2f64.powf(1.0 / N_SCALES as f64);
    let mut sig = [0.0f64; N_GAUSS];
    for (i, s) in sig.iter_mut().enumerate().skip(1) {
        let prev = SIGMA0 * k.powi(i as i32 - 1);
        *s = (prev * k * prev * k - prev * prev).sqrt();
    }

    let mut gauss: Vec<Vec<GrayF32>> = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        let mut levels: Vec<GrayF32> = Vec::with_capacity(N_GAUSS);
        let first = if o == 0 {
            base.clone()
        } else {
            // The level N_SCALES image of the previous octave has total
            // blur 2 * SIGMA0; halving it seeds the next octave.
            gauss[o - 1][N_SCALES].half()
        };
        levels.push(first);
        for i in 1..N_GAUSS {
            let next = levels[i - 1].blur(sig[i]);
            levels.push(next);
        }
        gauss.push(levels);
    }
    Pyramid { gauss }
}

struct Candidate {
    layer: usize,
    x: usize,
    y: usize,
}

/// Quadratic refinement of one DoG extremum. Returns the keypoint in
/// base-image coordinates, or None if it fails contrast, edge or
/// convergence checks.
fn refine(dog: &[GrayF32], cand: &Candidate, octave: usize) -> Option<Keypoint> {
    let (mut x, mut y, mut layer) = (cand.x as i64, cand.y as i64, cand.layer as i64);
    let img_border = 1i64;
    let mut offset = (0f32, 0f32, 0f32);
    let mut converged = false;
    for _ in 0..MAX_INTERP_STEPS {
        if layer < 1 || layer > N_SCALES as i64 {
            return None;
        }
        let (w, h) = (dog[layer as usize].w as i64, dog[layer as usize].h as i64);
        if x < img_border || x >= w - img_border || y < img_border || y >= h - img_border {
            return None;
        }
        let v = |dl: i64, dy: i64, dx: i64| -> f32 {
            dog[(layer + dl) as usize].at((x + dx) as usize, (y + dy) as usize)
        };
        let dx = (v(0, 0, 1) - v(0, 0, -1)) * 0.5;
        let dy = (v(0, 1, 0) - v(0, -1, 0)) * 0.5;
        let ds = (v(1, 0, 0) - v(-1, 0, 0)) * 0.5;
        let c2 = v(0, 0, 0) * 2.0;
        let dxx = v(0, 0, 1) + v(0, 0, -1) - c2;
        let dyy = v(0, 1, 0) + v(0, -1, 0) - c2;
        let dss = v(1, 0, 0) + v(-1, 0, 0) - c2;
        let dxy = (v(0, 1, 1) - v(0, 1, -1) - v(0, -1, 1) + v(0, -1, -1)) * 0.25;
        let dxs = (v(1, 0, 1) - v(1, 0, -1) - v(-1, 0, 1) + v(-1, 0, -1)) * 0.25;
        let dys = (v(1, 1, 0) - v(1, -1, 0) - v(-1, 1, 0) + v(-1, -1, 0)) * 0.25;

        // Solve H * delta = -grad with Cramer's rule.
        let det = dxx * (dyy * dss - dys * dys) - dxy * (dxy * dss - dys * dxs)
            + dxs * (dxy * dys - dyy * dxs);
        if det.abs() < 1e-20 {
            return None;
        }
        let det_x = -dx * (dyy * dss - dys * dys) - dxy * (-dy * dss - dys * -ds)
            + dxs * (-dy * dys - dyy * -ds);
        let det_y = dxx * (-dy * dss - dys * -ds) - -dx * (dxy * dss - dys * dxs)
            + dxs * (dxy * -ds - -dy * dxs);
        let det_s = dxx * (dyy * -ds - -dy * dys) - dxy * (dxy * -ds - -dy * dxs)
            + -dx * (dxy * dys - dyy * dxs);
        let ox = det_x / det;
        let oy = det_y / det;
        let os = det_s / det;
        offset = (ox, oy, os);
        if ox.abs() < 0.5 && oy.abs() < 0.5 && os.abs() < 0.5 {
            converged = true;
            break;
        }
        if !ox.is_finite() || !oy.is_finite() || !os.is_finite() {
            return None;
        }
        x += ox.round() as i64;
        y += oy.round() as i64;
        layer += os.round() as i64;
    }
    if !converged {
        return None;
    }

    let v = |dl: i64, dy: i64, dx: i64| -> f32 {
        dog[(layer + dl) as usize].at((x + dx) as usize, (y + dy) as usize)
    };
    let dx = (v(0, 0, 1) - v(0, 0, -1)) * 0.5;
    let dy = (v(0, 1, 0) - v(0, -1, 0)) * 0.5;
    let ds = (v(1, 0, 0) - v(-1, 0, 0)) * 0.5;
    let contrast = v(0, 0, 0) + 0.5 * (dx * offset.0 + dy * offset.1 + ds * offset.2);
    if contrast.abs() * (N_SCALES as f32) < CONTRAST_THRESHOLD {
        return None;
    }

    let c2 = v(0, 0, 0) * 2.0;
    let dxx = v(0, 0, 1) + v(0, 0, -1) - c2;
    let dyy = v(0, 1, 0) + v(0, -1, 0) - c2;
    let dxy = (v(0, 1, 1) - v(0, 1, -1) - v(0, -1, 1) + v(0, -1, -1)) * 0.25;
    let tr = dxx + dyy;
    let det2 = dxx * dyy - dxy * dxy;
    let r = EDGE_THRESHOLD;
    if det2 <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det2 {
        return None;
    }

    let scale_in_octave = SIGMA0 * 2f64.powf((layer as f64 + offset.2 as f64) / N_SCALES as f64);
    let factor = (1u32 << octave) as f64;
    Some(Keypoint {
        x: (x as f64 + offset.0 as f64) * factor,
        y: (y as f64 + offset.1 as f64) * factor,
        scale: scale_in_octave * factor,
        orientation: 0.0,
        response: contrast.abs() as f64,
        octave: octave as u8,
        layer: layer as u8,
    })
}

/// Smoothed gradient-orientation histogram around (x, y); returns the
/// peak angles (radians in [0, 2pi)).
fn orientations(img: &GrayF32, x: f64, y: f64, scale_in_octave: f64) -> Vec<f64> {
    let radius = (3.0 * ORI_SIGMA_FACTOR * scale_in_octave).round() as i64;
    let sigma = ORI_SIGMA_FACTOR * scale_in_octave;
    let exp_scale = -1.0 / (2.0 * sigma * sigma);
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        let py = cy + dy;
        if py < 1 || py >= img.h as i64 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = cx + dx;
            if px < 1 || px >= img.w as i64 - 1 {
                continue;
            }
            let gx = img.at(px as usize + 1, py as usize) - img.at(px as usize - 1, py as usize);
            let gy = img.at(px as usize, py as usize - 1) - img.at(px as usize, py as usize + 1);
            let mag = (gx * gx + gy * gy).sqrt();
            let angle = (gy as f64)
                .atan2(gx as f64)
                .rem_euclid(std::f64::consts::TAU);
            let w = (((dx * dx + dy * dy) as f64) * exp_scale).exp() as f32;
            let bin = (angle / std::f64::consts::TAU * ORI_BINS as f64).round() as usize % ORI_BINS;
            hist[bin] += w * mag;
        }
    }

    // Two passes of circular [1,4,6,4,1]/16 smoothing.
    for _ in 0..2 {
        let source = hist;
        for b in 0..ORI_BINS {
            let at = |o: i64| source[((b as i64 + o).rem_euclid(ORI_BINS as i64)) as usize];
            hist[b] = (at(-2) + at(2)) * (1.0 / 16.0)
                + (at(-1) + at(1)) * (4.0 / 16.0)
                + at(0) * (6.0 / 16.0);
        }
    }

    let max = hist.iter().cloned().fold(0f32, f32::max);
    if max <= 0.0 {
        return vec![0.0];
    }
    let mut peaks = Vec::new();
    for b in 0..ORI_BINS {
        let l = hist[(b + ORI_BINS - 1) % ORI_BINS];
        let c = hist[b];
        let r = hist[(b + 1) % ORI_BINS];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let interp = b as f64 + 0.5 * ((l - r) as f64) / ((l - 2.0 * c + r) as f64);
            let angle = (interp * std::f64::consts::TAU / ORI_BINS as f64)
                .rem_euclid(std::f64::consts::TAU);
            peaks.push(angle);
        }
    }
    if peaks.is_empty() {
        peaks.push(0.0);
    }
    peaks
}

pub(crate) fn detect(img: &ImageGray, pyramid: &Pyramid) -> Vec<Keypoint> {
    let _ = img;
    let prelim_threshold = 0.5 * CONTRAST_THRESHOLD / N_SCALES as f32;
    let mut keypoints = Vec::new();
    for (octave, levels) in pyramid.gauss.iter().enumerate() {
        let dog: Vec<GrayF32> = (0..N_GAUSS - 1)
            .map(|i| levels[i + 1].sub(&levels[i]))
            .collect();
        let (w, h) = (dog[0].w, dog[0].h);
        if w < 3 || h < 3 {
            continue;
        }
        for layer in 1..=N_SCALES {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = dog[layer].at(x, y);
                    if v.abs() <= prelim_threshold {
                        continue;
                    }
                    // Non-strict comparisons so small plateaus still
                    // produce a candidate; refinement merges them.
                    let mut is_max = v > 0.0;
                    let mut is_min = v < 0.0;
                    'nbrs: for dl in -1i64..=1 {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                if dl == 0 && dy == 0 && dx == 0 {
                                    continue;
                                }
                                let n = dog[(layer as i64 + dl) as usize]
                                    .at((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                                if v < n {
                                    is_max = false;
                                }
                                if v > n {
                                    is_min = false;
                                }
                                if !is_max && !is_min {
                                    break 'nbrs;
                                }
                            }
                        }
                    }
                    if !(is_max || is_min) {
                        continue;
                    }
                    let cand = Candidate { layer, x, y };
                    if let Some(mut kp) = refine(&dog, &cand, octave) {
                        let g = &levels[kp.layer as usize];
                        let factor = (1u32 << octave) as f64;
                        let angles =
                            orientations(g, kp.x / factor, kp.y / factor, kp.scale / factor);
                        for angle in angles {
                            kp.orientation = angle;
                            keypoints.push(kp.clone());
                        }
                    }
                }
            }
        }
    }
    keypoints
}

/// Descriptor for one keypoint, sampled from the pyramid level it was
/// detected on and rotated into its orientation.
pub(crate) fn describe(pyramid: &Pyramid, kp: &Keypoint) -> Descriptor {
    let octave = (kp.octave as usize).min(pyramid.gauss.len() - 1);
    let layer = (kp.layer as usize).min(N_GAUSS - 1);
    let img = &pyramid.gauss[octave][layer];
    let factor = (1u32 << octave) as f64;
    let (px, py) = (kp.x / factor, kp.y / factor);
    let scale = kp.scale / factor;

    let d = DESC_WIDTH;
    let n = DESC_BINS;
    let hist_width = DESC_CELL_SCALE * scale;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d as f64 + 1.0) * 0.5).round() as i64;
    let radius = radius.min(((img.w * img.w + img.h * img.h) as f64).sqrt() as i64);
    let cos_t = kp.orientation.cos() / hist_width;
    let sin_t = kp.orientation.sin() / hist_width;
    let bins_per_rad = n as f64 / std::f64::consts::TAU;
    let exp_scale = -1.0 / ((d * d) as f64 * 0.5);
    let (cx, cy) = (px.round() as i64, py.round() as i64);

    // (d+2)^2 spatial cells with an extra guard ring, n+2 angle slots.
    let mut hist = vec![0f64; (d + 2) * (d + 2) * (n + 2)];
    for i in -radius..=radius {
        for j in -radius..=radius {
            let c_rot = j as f64 * cos_t - i as f64 * sin_t;
            let r_rot = j as f64 * sin_t + i as f64 * cos_t;
            let rbin = r_rot + d as f64 / 2.0 - 0.5;
            let cbin = c_rot + d as f64 / 2.0 - 0.5;
            let r = cy + i;
            let c = cx + j;
            if rbin > -1.0
                && rbin < d as f64
                && cbin > -1.0
                && cbin < d as f64
                && r > 0
                && r < img.h as i64 - 1
                && c > 0
                && c < img.w as i64 - 1
            {
                let gx = img.at(c as usize + 1, r as usize) - img.at(c as usize - 1, r as usize);
                let gy = img.at(c as usize, r as usize - 1) - img.at(c as usize, r as usize + 1);
                let mag = ((gx * gx + gy * gy) as f64).sqrt();
                let angle = (gy as f64)
                    .atan2(gx as f64)
                    .rem_euclid(std::f64::consts::TAU);
                let weight = ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
                let mut obin = (angle - kp.orientation) * bins_per_rad;
                while obin < 0.0 {
                    obin += n as f64;
                }
                while obin >= n as f64 {
                    obin -= n as f64;
                }
                trilinear(&mut hist, d, n, rbin, cbin, obin, mag * weight);
            }
        }
    }

    // Fold the wrapped angle slots back and copy the interior.
    let mut raw = [0f32; 128];
    for r in 0..d {
        for c in 0..d {
            let base = ((r + 1) * (d + 2) + (c + 1)) * (n + 2);
            let wrapped = hist[base + n];
            hist[base] += wrapped;
            let wrapped2 = hist[base + n + 1];
            hist[base + 1] += wrapped2;
            for o in 0..n {
                raw[(r * d + c) * n + o] = hist[base + o] as f32;
            }
        }
    }

    // Normalize, clamp heavy components, renormalize.
    let norm = raw
        .iter()
        .map(|v| (*v as f64) * (*v as f64))
        .sum::<f64>()
        .sqrt();
    let thr = (norm * DESC_CLAMP as f64) as f32;
    for v in &mut raw {
        if *v > thr {
            *v = thr;
        }
    }
    let norm2 = raw
        .iter()
        .map(|v| (*v as f64) * (*v as f64))
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    for v in &mut raw {
        *v = (*v as f64 / norm2) as f32;
    }
    Descriptor(raw)
}

/// Distributes one sample into the 3-d histogram with trilinear weights.
#[allow(clippy::too_many_arguments)]
fn trilinear(hist: &mut [f64], d: usize, n: usize, rbin: f64, cbin: f64, obin: f64, mag: f64) {
    let r0 = rbin.floor();
    let c0 = cbin.floor();
    let o0 = obin.floor();
    let dr = rbin - r0;
    let dc = cbin - c0;
    let dob = obin - o0;
    let r0i = r0 as i64;
    let c0i = c0 as i64;
    let o0i = o0 as i64;

    let idx = |r: i64, c: i64, o: i64| -> usize {
        (((r + 1) as usize) * (d + 2) + (c + 1) as usize) * (n + 2) + o as usize
    };
    for (ri, rw) in [(r0i, 1.0 - dr), (r0i + 1, dr)] {
        for (ci, cw) in [(c0i, 1.0 - dc), (c0i + 1, dc)] {
            for (oi, ow) in [(o0i, 1.0 - dob), (o0i + 1, dob)] {
                // o index may land on the wrap slots n or n+1; folded later.
                hist[idx(ri, ci, oi)] += mag * rw * cw * ow;
            }
        }
    }
}
