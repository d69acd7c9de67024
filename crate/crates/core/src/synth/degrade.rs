use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{IntInterval, Interval, SynthError};
use crate::image::{binarize, otsu_threshold, resize_bilinear, GrayImage};
use crate::math::{quantize, rng_from_seed};

/// Degradation operators, in their canonical (sampling) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegradeOp {
    Noise,
    Resolution,
    Blur,
    Background,
    Stains,
    BlackSpots,
    WhitePatches,
    Lines,
    Contrast,
    Dilation,
    Erosion,
}

impl DegradeOp {
    pub const ALL: [DegradeOp; 11] = [
        DegradeOp::Noise,
        DegradeOp::Resolution,
        DegradeOp::Blur,
        DegradeOp::Background,
        DegradeOp::Stains,
        DegradeOp::BlackSpots,
        DegradeOp::WhitePatches,
        DegradeOp::Lines,
        DegradeOp::Contrast,
        DegradeOp::Dilation,
        DegradeOp::Erosion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DegradeOp::Noise => "noise",
            DegradeOp::Resolution => "resolution",
            DegradeOp::Blur => "blur",
            DegradeOp::Background => "background",
            DegradeOp::Stains => "stains",
            DegradeOp::BlackSpots => "black-spots",
            DegradeOp::WhitePatches => "white-patches",
            DegradeOp::Lines => "lines",
            DegradeOp::Contrast => "contrast",
            DegradeOp::Dilation => "dilation",
            DegradeOp::Erosion => "erosion",
        }
    }
}

/// Parameter ranges of one noise level.
///
/// Per-page counts of black spots and white patches are fractions of the
/// page area `H * W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub level: u8,
    pub noise_factor: Interval,
    pub scale_factor: Interval,
    pub gaussian_blur_radius: Interval,
    pub background_intensity: Interval,
    pub stain_transparency: Interval,
    pub max_stains: IntInterval,
    pub contrast_factor: Interval,
    pub black_spots_per_page: Interval,
    pub white_patch_size: IntInterval,
    pub white_patches_per_page: Interval,
    pub line_artifacts: IntInterval,
    pub dilation_iterations: IntInterval,
    pub erosion_iterations: IntInterval,
    #[serde(default = "default_binarize")]
    pub binarize_probability: f64,
}

fn default_binarize() -> f64 {
    0.1
}

impl NoiseLevel {
    /// Defaults for levels 1 to 4.
    pub fn preset(level: u8) -> Option<NoiseLevel> {
        let i = match level {
            1..=4 => (level - 1) as usize,
            _ => return None,
        };
        let noise = [10.0, 30.0, 50.0, 50.0];
        let blur = [1.0, 1.0, 2.0, 2.0];
        let background = [0.1, 0.3, 0.6, 0.6];
        let stain = [0.3, 0.6, 0.8, 0.8];
        let stains = [1, 3, 5, 5];
        let contrast = [0.6, 0.6, 0.6, 0.3];
        let spots = [3000.0, 2000.0, 1000.0, 1000.0];
        let patch = [3, 5, 5, 5];
        let patches = [500.0, 300.0, 200.0, 100.0];
        let lines = [4, 6, 8, 10];
        Some(NoiseLevel {
            level,
            noise_factor: Interval(0.0, noise[i]),
            scale_factor: Interval(0.2, 1.0),
            gaussian_blur_radius: Interval(0.0, blur[i]),
            background_intensity: Interval(0.0, background[i]),
            stain_transparency: Interval(0.0, stain[i]),
            max_stains: IntInterval(0, stains[i]),
            contrast_factor: Interval(contrast[i], 1.0),
            black_spots_per_page: Interval(0.0, 1.0 / spots[i]),
            white_patch_size: IntInterval(0, patch[i]),
            white_patches_per_page: Interval(0.0, 1.0 / patches[i]),
            line_artifacts: IntInterval(0, lines[i]),
            dilation_iterations: IntInterval(0, 2),
            erosion_iterations: IntInterval(0, 2),
            binarize_probability: 0.1,
        })
    }

    /// Every operator collapsed to its no-op value and binarization off.
    pub fn identity() -> NoiseLevel {
        NoiseLevel {
            level: 0,
            noise_factor: Interval::ZERO,
            scale_factor: Interval::point(1.0),
            gaussian_blur_radius: Interval::ZERO,
            background_intensity: Interval::ZERO,
            stain_transparency: Interval::ZERO,
            max_stains: IntInterval::point(0),
            contrast_factor: Interval::point(1.0),
            black_spots_per_page: Interval::ZERO,
            white_patch_size: IntInterval::point(0),
            white_patches_per_page: Interval::ZERO,
            line_artifacts: IntInterval::point(0),
            dilation_iterations: IntInterval::point(0),
            erosion_iterations: IntInterval::point(0),
            binarize_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.noise_factor.check("noise_factor")?;
        self.scale_factor.check("scale_factor")?;
        self.gaussian_blur_radius.check("gaussian_blur_radius")?;
        self.background_intensity.check("background_intensity")?;
        self.stain_transparency.check("stain_transparency")?;
        self.max_stains.check("max_stains")?;
        self.contrast_factor.check("contrast_factor")?;
        self.black_spots_per_page.check("black_spots_per_page")?;
        self.white_patch_size.check("white_patch_size")?;
        self.white_patches_per_page.check("white_patches_per_page")?;
        self.line_artifacts.check("line_artifacts")?;
        self.dilation_iterations.check("dilation_iterations")?;
        self.erosion_iterations.check("erosion_iterations")?;
        let nonneg = |iv: &Interval| iv.lo() >= 0.0;
        if !nonneg(&self.noise_factor)
            || !nonneg(&self.gaussian_blur_radius)
            || !nonneg(&self.black_spots_per_page)
            || !nonneg(&self.white_patches_per_page)
        {
            return Err(SynthError::BadParameter("negative range"));
        }
        if self.scale_factor.lo() <= 0.0 || self.scale_factor.hi() > 1.0 {
            return Err(SynthError::BadParameter("scale_factor must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.binarize_probability) {
            return Err(SynthError::BadParameter("binarize_probability"));
        }
        Ok(())
    }
}

/// Values drawn for one degradation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledParams {
    pub noise_factor: f64,
    pub scale_factor: f64,
    pub blur_radius: f64,
    pub background_intensity: f64,
    pub stain_transparency: f64,
    pub stains: u32,
    pub contrast_factor: f64,
    pub black_spots: u64,
    pub white_patch_max: u32,
    pub white_patches: u64,
    pub line_artifacts: u32,
    pub dilation_iterations: u32,
    pub erosion_iterations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    pub image: GrayImage,
    pub op_order: Vec<DegradeOp>,
    pub params: SampledParams,
    pub binarized: bool,
}

fn area_count<R: Rng>(iv: &Interval, area: u64, rng: &mut R) -> u64 {
    let lo = libm::floor(iv.lo() * area as f64) as u64;
    let hi = (libm::floor(iv.hi() * area as f64) as u64).max(lo);
    let u: f64 = rng.gen();
    (lo + libm::floor(u * (hi - lo + 1) as f64) as u64).min(hi)
}

/// Applies the degradation suite in a seeded random order.
///
/// Parameters are drawn first in canonical order, then the order is
/// shuffled, then each operator runs with its own generator. The pixels an
/// operator touches therefore do not depend on where it lands in the order.
pub fn degrade(img: &GrayImage, level: &NoiseLevel, seed: u64) -> Result<Degraded, SynthError> {
    level.validate()?;
    if img.is_empty() {
        return Err(SynthError::Image(crate::image::ImageError::EmptyDimensions { width: img.width(), height: img.height() }));
    }
    let mut rng = rng_from_seed(seed);
    let area = img.len() as u64;
    let params = SampledParams {
        noise_factor: level.noise_factor.sample(&mut rng),
        scale_factor: level.scale_factor.sample(&mut rng),
        blur_radius: level.gaussian_blur_radius.sample(&mut rng),
        background_intensity: level.background_intensity.sample(&mut rng),
        stain_transparency: level.stain_transparency.sample(&mut rng),
        stains: level.max_stains.sample(&mut rng),
        contrast_factor: level.contrast_factor.sample(&mut rng),
        black_spots: area_count(&level.black_spots_per_page, area, &mut rng),
        white_patch_max: level.white_patch_size.1,
        white_patches: area_count(&level.white_patches_per_page, area, &mut rng),
        line_artifacts: level.line_artifacts.sample(&mut rng),
        dilation_iterations: level.dilation_iterations.sample(&mut rng),
        erosion_iterations: level.erosion_iterations.sample(&mut rng),
    };
    let mut order = DegradeOp::ALL.to_vec();
    order.shuffle(&mut rng);
    let op_seeds: Vec<u64> = DegradeOp::ALL.iter().map(|_| rng.gen()).collect();
    let binarize_draw: f64 = rng.gen();

    let mut out = img.clone();
    for &op in &order {
        let mut r = rng_from_seed(op_seeds[op as usize]);
        out = apply(op, out, &params, level, &mut r)?;
    }
    let binarized = binarize_draw < level.binarize_probability;
    if binarized {
        out = binarize(&out, otsu_threshold(&out));
    }
    Ok(Degraded {
        image: out,
        op_order: order,
        params,
        binarized,
    })
}

fn apply<R: Rng>(
    op: DegradeOp,
    img: GrayImage,
    p: &SampledParams,
    level: &NoiseLevel,
    rng: &mut R,
) -> Result<GrayImage, SynthError> {
    Ok(match op {
        DegradeOp::Noise => add_noise(img, p.noise_factor, rng),
        DegradeOp::Resolution => reduce_resolution(img, p.scale_factor)?,
        DegradeOp::Blur => gaussian_blur(&img, p.blur_radius),
        DegradeOp::Background => background(img, p.background_intensity, rng),
        DegradeOp::Stains => stains(img, p.stains, p.stain_transparency, rng),
        DegradeOp::BlackSpots => black_spots(img, p.black_spots, rng),
        DegradeOp::WhitePatches => white_patches(img, p.white_patches, level.white_patch_size, rng),
        DegradeOp::Lines => line_artifacts(img, p.line_artifacts, rng),
        DegradeOp::Contrast => contrast(&img, p.contrast_factor),
        DegradeOp::Dilation => (0..p.dilation_iterations).fold(img, |im, _| dilate(&im)),
        DegradeOp::Erosion => (0..p.erosion_iterations).fold(img, |im, _| erode(&im)),
    })
}

/// Zero-mean uniform noise in `[-amplitude, amplitude]`.
pub fn add_noise<R: Rng>(mut img: GrayImage, amplitude: f64, rng: &mut R) -> GrayImage {
    if amplitude <= 0.0 {
        return img;
    }
    for v in img.as_raw_mut() {
        let n: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        *v = quantize(*v as f64 + amplitude * n);
    }
    img
}

/// Downscale by `factor` then back up, bilinear both ways.
pub fn reduce_resolution(img: GrayImage, factor: f64) -> Result<GrayImage, SynthError> {
    if factor >= 1.0 {
        return Ok(img);
    }
    let (w, h) = img.dims();
    let sw = (libm::round(w as f64 * factor) as u32).max(1);
    let sh = (libm::round(h as f64 * factor) as u32).max(1);
    let small = resize_bilinear(&img, sw, sh)?;
    Ok(resize_bilinear(&small, w, h)?)
}

/// Separable Gaussian with `sigma = radius`, replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = libm::ceil(3.0 * sigma) as i64;
    let mut kernel: Vec<f64> = (-r..=r).map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma))).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut tmp = vec![0f64; img.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                acc += k * img.get_clamped(x + j as i64 - r, y) as f64;
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        let mut acc = 0.0;
        for (j, k) in kernel.iter().enumerate() {
            let yy = (y + j as i64 - r).clamp(0, h - 1);
            acc += k * tmp[(yy * w + x) as usize];
        }
        quantize(acc)
    })
    .expect("same dimensions")
}

/// Smooth random field in `[0, 1]`: a coarse lattice of random values,
/// bilinearly interpolated.
fn smooth_field<R: Rng>(w: u32, h: u32, cells: u32, rng: &mut R) -> Vec<f64> {
    let gw = cells + 2;
    let gh = cells + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let fy = (y as f64 + 0.5) / h as f64 * cells as f64;
        let y0 = libm::floor(fy) as u32;
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = (x as f64 + 0.5) / w as f64 * cells as f64;
            let x0 = libm::floor(fx) as u32;
            let tx = fx - x0 as f64;
            let at = |xx: u32, yy: u32| lattice[(yy * gw + xx) as usize];
            // Smoothstep weights avoid visible lattice creases.
            let sx = tx * tx * (3.0 - 2.0 * tx);
            let sy = ty * ty * (3.0 - 2.0 * ty);
            let top = at(x0, y0) * (1.0 - sx) + at(x0 + 1, y0) * sx;
            let bottom = at(x0, y0 + 1) * (1.0 - sx) + at(x0 + 1, y0 + 1) * sx;
            out.push(top * (1.0 - sy) + bottom * sy);
        }
    }
    out
}

/// Darkens the page by a low-frequency paper texture of the given strength.
pub fn background<R: Rng>(mut img: GrayImage, intensity: f64, rng: &mut R) -> GrayImage {
    if intensity <= 0.0 {
        return img;
    }
    let cells = rng.gen_range(3..=8);
    let field = smooth_field(img.width(), img.height(), cells, rng);
    for (v, f) in img.as_raw_mut().iter_mut().zip(field) {
        *v = quantize(*v as f64 * (1.0 - intensity * f));
    }
    img
}

/// Soft-edged elliptical blobs blended toward a random tone.
pub fn stains<R: Rng>(mut img: GrayImage, count: u32, transparency: f64, rng: &mut R) -> GrayImage {
    if count == 0 || transparency <= 0.0 {
        return img;
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let short = w.min(h);
    for _ in 0..count {
        let cx = rng.gen::<f64>() * w;
        let cy = rng.gen::<f64>() * h;
        let rx = short * (0.05 + 0.2 * rng.gen::<f64>());
        let ry = short * (0.05 + 0.2 * rng.gen::<f64>());
        let angle = rng.gen::<f64>() * PI;
        let tone = 90.0 + 110.0 * rng.gen::<f64>();
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let reach = rx.max(ry);
        let x0 = (cx - reach).max(0.0) as u32;
        let y0 = (cy - reach).max(0.0) as u32;
        let x1 = (libm::ceil(cx + reach) as u32).min(img.width());
        let y1 = (libm::ceil(cy + reach) as u32).min(img.height());
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                let d = libm::sqrt(u * u + v * v);
                if d >= 1.0 {
                    continue;
                }
                let edge = 1.0 - d;
                let a = transparency * (edge * edge * (3.0 - 2.0 * edge));
                let p = img.get(x, y) as f64;
                img.set(x, y, quantize(p * (1.0 - a) + tone.min(p) * a));
            }
        }
    }
    img
}

pub fn black_spots<R: Rng>(mut img: GrayImage, count: u64, rng: &mut R) -> GrayImage {
    let (w, h) = img.dims();
    for _ in 0..count {
        let x = rng.gen_range(0..w);
        let y = rng.gen_range(0..h);
        img.set(x, y, 0);
    }
    img
}

pub fn white_patches<R: Rng>(mut img: GrayImage, count: u64, size: IntInterval, rng: &mut R) -> GrayImage {
    let (w, h) = img.dims();
    for _ in 0..count {
        let pw = size.sample(rng);
        let ph = size.sample(rng);
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        for y in y0..(y0 + ph).min(h) {
            for x in x0..(x0 + pw).min(w) {
                img.set(x, y, 255);
            }
        }
    }
    img
}

/// Straight scratches or folds, 1 to 3 px wide, black or white.
pub fn line_artifacts<R: Rng>(mut img: GrayImage, count: u32, rng: &mut R) -> GrayImage {
    let (w, h) = (img.width() as f64, img.height() as f64);
    for _ in 0..count {
        let (ax, ay) = (rng.gen::<f64>() * w, rng.gen::<f64>() * h);
        let (bx, by) = (rng.gen::<f64>() * w, rng.gen::<f64>() * h);
        let width = rng.gen_range(1..=3) as f64;
        let value = if rng.gen::<bool>() { 0 } else { 255 };
        let half = width / 2.0;
        let x0 = (ax.min(bx) - half).max(0.0) as u32;
        let y0 = (ay.min(by) - half).max(0.0) as u32;
        let x1 = (libm::ceil(ax.max(bx) + half) as u32).min(img.width());
        let y1 = (libm::ceil(ay.max(by) + half) as u32).min(img.height());
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
                if qx * qx + qy * qy <= half * half {
                    img.set(x, y, value);
                }
            }
        }
    }
    img
}

/// `p <- 127.5 + factor * (p - 127.5)`.
pub fn contrast(img: &GrayImage, factor: f64) -> GrayImage {
    img.map(|v| quantize(127.5 + factor * (v as f64 - 127.5)))
}

fn filter3(img: &GrayImage, pick: fn(u8, u8) -> u8) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        let mut acc = img.get_clamped(x, y);
        for dy in -1..=1 {
            for dx in -1..=1 {
                acc = pick(acc, img.get_clamped(x + dx, y + dy));
            }
        }
        acc
    })
    .expect("same dimensions")
}

/// One step of ink spread: dark strokes thicken (3x3 minimum).
pub fn dilate(img: &GrayImage) -> GrayImage {
    filter3(img, core::cmp::min)
}

/// One step of ink erosion: dark strokes thin (3x3 maximum).
pub fn erode(img: &GrayImage) -> GrayImage {
    filter3(img, core::cmp::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page() -> GrayImage {
        GrayImage::from_fn(160, 120, |x, y| if (x / 7 + y / 11) % 3 == 0 { 20 } else { 235 }).unwrap()
    }

    #[test]
    fn presets_match_table() {
        let l1 = NoiseLevel::preset(1).unwrap();
        let l4 = NoiseLevel::preset(4).unwrap();
        assert_eq!(l1.noise_factor, Interval(0.0, 10.0));
        assert_eq!(l4.noise_factor, Interval(0.0, 50.0));
        for k in 1..=4 {
            let l = NoiseLevel::preset(k).unwrap();
            assert_eq!(l.scale_factor, Interval(0.2, 1.0));
            assert_eq!(l.dilation_iterations, IntInterval(0, 2));
            assert_eq!(l.erosion_iterations, IntInterval(0, 2));
            assert_eq!(l.binarize_probability, 0.1);
            l.validate().unwrap();
        }
        assert_eq!(NoiseLevel::preset(3).unwrap().contrast_factor, Interval(0.6, 1.0));
        assert_eq!(l4.contrast_factor, Interval(0.3, 1.0));
        assert_eq!(NoiseLevel::preset(2).unwrap().black_spots_per_page.hi(), 1.0 / 2000.0);
        assert_eq!(l4.white_patches_per_page.hi(), 1.0 / 100.0);
        assert_eq!(l1.white_patch_size, IntInterval(0, 3));
        assert_eq!(NoiseLevel::preset(3).unwrap().max_stains, IntInterval(0, 5));
        assert!(NoiseLevel::preset(0).is_none() && NoiseLevel::preset(5).is_none());
    }

    #[test]
    fn presets_widen_with_level() {
        for k in 2..=4 {
            let a = NoiseLevel::preset(k - 1).unwrap();
            let b = NoiseLevel::preset(k).unwrap();
            for (x, y) in [
                (a.noise_factor, b.noise_factor),
                (a.scale_factor, b.scale_factor),
                (a.gaussian_blur_radius, b.gaussian_blur_radius),
                (a.background_intensity, b.background_intensity),
                (a.stain_transparency, b.stain_transparency),
                (a.contrast_factor, b.contrast_factor),
                (a.black_spots_per_page, b.black_spots_per_page),
                (a.white_patches_per_page, b.white_patches_per_page),
            ] {
                assert!(y.contains_interval(&x), "level {k}");
            }
            for (x, y) in [
                (a.max_stains, b.max_stains),
                (a.white_patch_size, b.white_patch_size),
                (a.line_artifacts, b.line_artifacts),
                (a.dilation_iterations, b.dilation_iterations),
                (a.erosion_iterations, b.erosion_iterations),
            ] {
                assert!(y.contains_interval(&x), "level {k}");
            }
        }
    }

    #[test]
    fn identity_level_is_lossless() {
        let img = page();
        for seed in 0..20 {
            let d = degrade(&img, &NoiseLevel::identity(), seed).unwrap();
            assert_eq!(d.image, img);
            assert!(!d.binarized);
            assert_eq!(d.op_order.len(), 11);
        }
    }

    #[test]
    fn deterministic_and_shape_preserving() {
        let img = page();
        let level = NoiseLevel::preset(3).unwrap();
        let a = degrade(&img, &level, 77).unwrap();
        let b = degrade(&img, &level, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.image.dims(), img.dims());
        let mut sorted = a.op_order.clone();
        sorted.sort();
        assert_eq!(sorted, DegradeOp::ALL.to_vec());
    }

    #[test]
    fn black_spot_counts_follow_level() {
        let img = page();
        let level = NoiseLevel::preset(3).unwrap();
        let cap = img.len() as u64 / 1000;
        for seed in 0..200 {
            let d = degrade(&img, &level, seed).unwrap();
            assert!(d.params.black_spots <= cap);
        }
    }

    #[test]
    fn orders_vary_and_binarization_is_rare() {
        let img = GrayImage::filled(32, 32, 200).unwrap();
        let level = NoiseLevel::preset(1).unwrap();
        let mut orders = alloc::collections::BTreeSet::new();
        let mut binarized = 0;
        for seed in 0..400 {
            let d = degrade(&img, &level, seed).unwrap();
            orders.insert(d.op_order.clone());
            binarized += d.binarized as u32;
        }
        assert!(orders.len() > 390);
        // 400 draws at p = 0.1: mean 40, sd 6.
        assert!((16..=64).contains(&binarized), "{binarized}");
    }

    #[test]
    fn operator_semantics() {
        let img = page();
        assert_eq!(contrast(&img, 1.0), img);
        let flat = contrast(&img, 0.0);
        assert!(flat.as_raw().iter().all(|&v| v == 128));
        assert_eq!(gaussian_blur(&img, 0.0), img);
        let dot = GrayImage::from_fn(9, 9, |x, y| if x == 4 && y == 4 { 0 } else { 255 }).unwrap();
        let grown = dilate(&dot);
        assert_eq!(grown.as_raw().iter().filter(|&&v| v == 0).count(), 9);
        assert_eq!(erode(&grown), dot);
        let blurred = gaussian_blur(&GrayImage::filled(10, 10, 90).unwrap(), 1.5);
        assert!(blurred.as_raw().iter().all(|&v| v == 90));
        assert_eq!(reduce_resolution(img.clone(), 1.0).unwrap(), img);
        assert_eq!(reduce_resolution(img.clone(), 0.2).unwrap().dims(), img.dims());
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut l = NoiseLevel::preset(2).unwrap();
        l.noise_factor = Interval(5.0, 1.0);
        assert!(degrade(&page(), &l, 1).is_err());
        let mut l = NoiseLevel::preset(2).unwrap();
        l.scale_factor = Interval(0.0, 1.0);
        assert!(degrade(&page(), &l, 1).is_err());
    }
}
