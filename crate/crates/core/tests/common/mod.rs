//! Shared helpers for integration tests: deterministic skin-like
//! texture synthesis and similarity warping with bilinear sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skintrack_core::image::ImageGray;

/// Multi-octave value noise: smooth blotches with fine grain on top,
/// enough structure for stable keypoints.
pub fn skin_texture(width: u32, height: u32, seed: u64) -> ImageGray {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ImageGray::new(width, height);

    // Coarse lattice of random values, bilinearly interpolated.
    let cell = 16u32;
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
    let lattice = |gx: u32, gy: u32| grid[(gy * gw + gx) as usize];

    let fine: Vec<i16> = (0..width * height)
        .map(|_| rng.gen_range(-14i16..=14))
        .collect();

    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (gx, gy) = (fx.floor() as u32, fy.floor() as u32);
            let (ax, ay) = (fx - gx as f64, fy - gy as f64);
            let top = lattice(gx, gy) * (1.0 - ax) + lattice(gx + 1, gy) * ax;
            let bot = lattice(gx, gy + 1) * (1.0 - ax) + lattice(gx + 1, gy + 1) * ax;
            let coarse = top * (1.0 - ay) + bot * ay;
            let v = 90.0 + coarse * 110.0 + fine[(y * width + x) as usize] as f64;
            img.set(x, y, v.clamp(0.0, 255.0) as u8);
        }
    }
    img
}

/// Samples `src` at the similarity-transformed location of each output
/// pixel: output(x, y) = src(T^-1 (x, y)). `angle` is radians, the
/// rotation centre is the image centre.
pub fn warp_similarity(src: &ImageGray, angle: f64, scale: f64, tx: f64, ty: f64) -> ImageGray {
    let (w, h) = (src.width(), src.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    // Forward map: p' = R_s (p - c) + c + t. We iterate output pixels,
    // so apply the inverse.
    let inv_scale = 1.0 / scale;
    let (cos_a, sin_a) = ((-angle).cos(), (-angle).sin());
    let mut out = ImageGray::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let sx = inv_scale * (cos_a * dx - sin_a * dy) + cx;
            let sy = inv_scale * (sin_a * dx + cos_a * dy) + cy;
            out.set(x, y, bilinear(src, sx, sy));
        }
    }
    out
}

fn bilinear(img: &ImageGray, x: f64, y: f64) -> u8 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ax, ay) = (x - x0, y - y0);
    let sample = |ix: i64, iy: i64| img.get_clamped(ix, iy) as f64;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let top = sample(ix, iy) * (1.0 - ax) + sample(ix + 1, iy) * ax;
    let bot = sample(ix, iy + 1) * (1.0 - ax) + sample(ix + 1, iy + 1) * ax;
    (top * (1.0 - ay) + bot * ay).round().clamp(0.0, 255.0) as u8
}

/// The forward similarity map used by [`warp_similarity`], for checking
/// recovered transforms point-by-point.
pub fn forward_map(
    p: (f64, f64),
    size: (u32, u32),
    angle: f64,
    scale: f64,
    tx: f64,
    ty: f64,
) -> (f64, f64) {
    let (cx, cy) = (size.0 as f64 / 2.0, size.1 as f64 / 2.0);
    let (dx, dy) = (p.0 - cx, p.1 - cy);
    (
        scale * (angle.cos() * dx - angle.sin() * dy) + cx + tx,
        scale * (angle.sin() * dx + angle.cos() * dy) + cy + ty,
    )
}
