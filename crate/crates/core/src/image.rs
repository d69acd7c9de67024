//! 8-bit grayscale rasters and the handful of primitives every stage shares:
//! Otsu thresholding, PSNR, replicate padding, and bilinear resampling.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::quantize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} values but {width}x{height} needs {expected}")]
    BufferLength {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("rectangle {0:?} does not fit inside a {1}x{2} image")]
    RectOutOfBounds(Rect, u32, u32),
}

/// Axis-aligned rectangle in pixel coordinates, top-left inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub const fn new(x0: u32, y0: u32, width: u32, height: u32) -> Self {
        Rect {
            x0,
            y0,
            width,
            height,
        }
    }

    pub fn x1(&self) -> u32 {
        self.x0 + self.width
    }

    pub fn y1(&self) -> u32 {
        self.y0 + self.height
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.width >= 1 && self.height >= 1 && self.x1() <= width && self.y1() <= height
    }

    /// Shrinks the rectangle by `by` pixels on each side.
    pub fn shrink(&self, by: u32) -> Rect {
        Rect::new(
            self.x0 + by,
            self.y0 + by,
            self.width - 2 * by,
            self.height - 2 * by,
        )
    }
}

/// Row-major 8-bit grayscale image. 0 is black ink, 255 is white paper.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl core::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        Ok(GrayImage {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        })
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImageError::BufferLength {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> u8,
    ) -> Result<Self, ImageError> {
        let mut img = GrayImage::filled(width, height, 0)?;
        for y in 0..height {
            for x in 0..width {
                img.data[(y * width + x) as usize] = f(x, y);
            }
        }
        Ok(img)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y as usize) * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.data[(y as usize) * w + x as usize] = v;
    }

    /// Reads with coordinates clamped into the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        &self.data[y as usize * w..(y as usize + 1) * w]
    }

    pub fn same_dims(&self, other: &GrayImage) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn crop(&self, rect: Rect) -> Result<GrayImage, ImageError> {
        if !rect.fits(self.width, self.height) {
            return Err(ImageError::RectOutOfBounds(rect, self.width, self.height));
        }
        let mut data = Vec::with_capacity(rect.width as usize * rect.height as usize);
        for y in rect.y0..rect.y1() {
            let row = self.row(y);
            data.extend_from_slice(&row[rect.x0 as usize..rect.x1() as usize]);
        }
        GrayImage::from_vec(rect.width, rect.height, data)
    }

    /// Copies `src` into this image with its top-left corner at `(x0, y0)`.
    pub fn blit(&mut self, src: &GrayImage, x0: u32, y0: u32) -> Result<(), ImageError> {
        let rect = Rect::new(x0, y0, src.width, src.height);
        if !rect.fits(self.width, self.height) {
            return Err(ImageError::RectOutOfBounds(rect, self.width, self.height));
        }
        let w = self.width as usize;
        for y in 0..src.height {
            let dst = (y0 + y) as usize * w + x0 as usize;
            self.data[dst..dst + src.width as usize].copy_from_slice(src.row(y));
        }
        Ok(())
    }

    /// Copies the `region` of `src` into the same coordinates of `self`.
    pub fn blit_region(&mut self, src: &GrayImage, region: Rect, at_x: u32, at_y: u32) {
        let w = self.width as usize;
        for dy in 0..region.height {
            let srow = src.row(region.y0 + dy);
            let dst = (at_y + dy) as usize * w + at_x as usize;
            self.data[dst..dst + region.width as usize]
                .copy_from_slice(&srow[region.x0 as usize..region.x1() as usize]);
        }
    }

    /// Maps every intensity through `f`.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// 64-bit FNV-1a over the dimensions and pixel bytes.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for b in self.width.to_le_bytes().into_iter().chain(self.height.to_le_bytes()) {
            feed(b);
        }
        for &b in &self.data {
            feed(b);
        }
        h
    }

    /// Fraction of pixels strictly darker than `threshold`.
    pub fn fraction_below(&self, threshold: u8) -> f64 {
        let n = self.data.iter().filter(|&&v| v < threshold).count();
        n as f64 / self.data.len() as f64
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// Otsu threshold over the 256-bin histogram.
///
/// Candidate split `k` puts intensities `<= k` in the dark class; the
/// returned threshold is the midpoint (rounded down) of the first and last
/// maximizing `k`. Foreground is always `intensity < threshold`. An image
/// with a single intensity returns that intensity, so its foreground is empty.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    otsu_from_histogram(&img.histogram())
}

pub fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let distinct = hist.iter().filter(|&&c| c > 0).count();
    if distinct <= 1 {
        return hist.iter().position(|&c| c > 0).unwrap_or(0) as u8;
    }

    let n = total as f64;
    let mut best = f64::NEG_INFINITY;
    let mut first = 0usize;
    let mut last = 0usize;
    let mut n0 = 0u64;
    let mut s0 = 0f64;
    for k in 0..255usize {
        n0 += hist[k];
        s0 += k as f64 * hist[k] as f64;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // Between-class variance up to the constant factor 1/N^2.
        let diff = n * s0 - n0 as f64 * sum_all;
        let var = diff * diff / (n0 as f64 * n1 as f64);
        if var > best {
            best = var;
            first = k;
            last = k;
        } else if var == best {
            last = k;
        }
    }
    ((first + last) / 2) as u8
}

/// Maps pixels below `threshold` to 0 and the rest to 255.
pub fn binarize(img: &GrayImage, threshold: u8) -> GrayImage {
    img.map(|v| if v < threshold { 0 } else { 255 })
}

/// Plain PSNR in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64, ImageError> {
    a.same_dims(b)?;
    let sse: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.len() as f64;
    Ok(10.0 * libm::log10(255.0 * 255.0 / mse))
}

/// Grows the image by the given margins, replicating the nearest edge pixel.
pub fn pad_replicate(img: &GrayImage, top: u32, left: u32, bottom: u32, right: u32) -> GrayImage {
    let width = img.width + left + right;
    let height = img.height + top + bottom;
    let mut data = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        let sy = (y as i64 - top as i64).clamp(0, img.height as i64 - 1) as u32;
        let src = img.row(sy);
        let first = src[0];
        let last = src[src.len() - 1];
        data.extend(core::iter::repeat(first).take(left as usize));
        data.extend_from_slice(src);
        data.extend(core::iter::repeat(last).take(right as usize));
    }
    GrayImage {
        width,
        height,
        data,
    }
}

/// Bilinear resampling with pixel-center alignment. Resizing to the same
/// dimensions is the identity.
pub fn resize_bilinear(img: &GrayImage, width: u32, height: u32) -> Result<GrayImage, ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    if img.dims() == (width, height) {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let xs: Vec<(i64, i64, f64)> = (0..width).map(|x| sample_axis(x, sx, img.width)).collect();
    let mut data = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        let (y0, y1, fy) = sample_axis(y, sy, img.height);
        for &(x0, x1, fx) in &xs {
            let p00 = img.get_clamped(x0, y0) as f64;
            let p10 = img.get_clamped(x1, y0) as f64;
            let p01 = img.get_clamped(x0, y1) as f64;
            let p11 = img.get_clamped(x1, y1) as f64;
            let top = p00 + (p10 - p00) * fx;
            let bottom = p01 + (p11 - p01) * fx;
            data.push(quantize(top + (bottom - top) * fy));
        }
    }
    GrayImage::from_vec(width, height, data)
}

fn sample_axis(dst: u32, scale: f64, src_len: u32) -> (i64, i64, f64) {
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = libm::floor(pos) as i64;
    let i1 = (i0 + 1).min(src_len as i64 - 1);
    (i0, i1, pos - i0 as f64)
}

/// Aspect-preserving resize to a target width.
pub fn resize_to_width(img: &GrayImage, width: u32) -> Result<GrayImage, ImageError> {
    let height = libm::round(img.height as f64 * width as f64 / img.width as f64).max(1.0) as u32;
    resize_bilinear(img, width, height)
}

/// ITU-R BT.601 luma, quantized with round-half-away-from-zero.
pub fn luma_bt601(r: u8, g: u8, b: u8) -> u8 {
    quantize(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_otsu(img: &GrayImage) -> u8 {
        // Direct class statistics over the pixels for every split.
        let px = img.as_raw();
        let n = px.len() as f64;
        let mut scores = Vec::new();
        for k in 0..255u32 {
            let dark: Vec<f64> = px.iter().filter(|&&v| v as u32 <= k).map(|&v| v as f64).collect();
            let light: Vec<f64> = px.iter().filter(|&&v| v as u32 > k).map(|&v| v as f64).collect();
            if dark.is_empty() || light.is_empty() {
                scores.push(None);
                continue;
            }
            let m0 = dark.iter().sum::<f64>() / dark.len() as f64;
            let m1 = light.iter().sum::<f64>() / light.len() as f64;
            let w0 = dark.len() as f64 / n;
            let w1 = light.len() as f64 / n;
            scores.push(Some(w0 * w1 * (m0 - m1) * (m0 - m1)));
        }
        let best = scores.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best == f64::NEG_INFINITY {
            return px[0];
        }
        let close = |s: &Option<f64>| s.map(|v| (v - best).abs() <= 1e-9 * best.max(1.0)).unwrap_or(false);
        let first = scores.iter().position(close).unwrap();
        let last = scores.iter().rposition(close).unwrap();
        ((first + last) / 2) as u8
    }

    #[test]
    fn otsu_half_black_half_white() {
        let img = GrayImage::from_fn(16, 16, |x, _| if x < 8 { 0 } else { 255 }).unwrap();
        assert_eq!(brute_otsu(&img), 127);
        assert_eq!(otsu_threshold(&img), 127);
    }

    #[test]
    fn otsu_uniform_is_its_value() {
        let img = GrayImage::filled(5, 7, 200).unwrap();
        let t = otsu_threshold(&img);
        assert_eq!(t, 200);
        assert_eq!(img.fraction_below(t), 0.0);
    }

    #[test]
    fn otsu_two_level_matches_oracle() {
        // 30% at 50, 70% at 220.
        let img = GrayImage::from_fn(10, 10, |x, _| if x < 3 { 50 } else { 220 }).unwrap();
        let expected = brute_otsu(&img);
        assert_eq!(expected, 134);
        assert_eq!(otsu_threshold(&img), expected);
    }

    #[test]
    fn psnr_cases() {
        let a = GrayImage::filled(4, 4, 0).unwrap();
        let b = GrayImage::filled(4, 4, 255).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);

        let c = GrayImage::filled(256, 256, 100).unwrap();
        let mut d = c.clone();
        d.set(3, 9, 101);
        let direct_mse = 1.0 / 65536.0;
        let via_mse = 10.0 * libm::log10(255.0 * 255.0 / direct_mse);
        let got = psnr(&c, &d).unwrap();
        assert!((got - via_mse).abs() < 1e-12);
        assert!((got - 96.2956).abs() < 1e-4);

        let e = GrayImage::filled(3, 4, 0).unwrap();
        assert!(matches!(psnr(&a, &e), Err(ImageError::DimensionMismatch(..))));
    }

    #[test]
    fn pad_examples() {
        let img = GrayImage::from_vec(2, 1, vec![10, 200]).unwrap();
        assert_eq!(pad_replicate(&img, 0, 0, 0, 0), img);
        let p = pad_replicate(&img, 0, 2, 0, 0);
        assert_eq!(p.dims(), (4, 1));
        assert_eq!(p.as_raw(), &[10, 10, 10, 200]);
        let one = GrayImage::filled(1, 1, 7).unwrap();
        let p = pad_replicate(&one, 1, 1, 1, 1);
        assert_eq!(p.dims(), (3, 3));
        assert!(p.as_raw().iter().all(|&v| v == 7));
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(GrayImage::from_vec(0, 3, vec![]).is_err());
        assert!(GrayImage::from_vec(2, 2, vec![1, 2, 3]).is_err());
        let img = GrayImage::filled(4, 4, 1).unwrap();
        assert!(img.crop(Rect::new(2, 2, 3, 1)).is_err());
    }

    #[test]
    fn resize_same_size_is_identity_and_halving_averages() {
        let img = GrayImage::from_fn(6, 4, |x, y| (x * 30 + y) as u8).unwrap();
        assert_eq!(resize_bilinear(&img, 6, 4).unwrap(), img);
        let flat = GrayImage::filled(8, 8, 99).unwrap();
        let small = resize_bilinear(&flat, 3, 5).unwrap();
        assert!(small.as_raw().iter().all(|&v| v == 99));
    }

    #[test]
    fn bt601_weights() {
        assert_eq!(luma_bt601(255, 255, 255), 255);
        assert_eq!(luma_bt601(255, 0, 0), 76);
        assert_eq!(luma_bt601(0, 255, 0), 150);
        assert_eq!(luma_bt601(0, 0, 255), 29);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_image() -> impl Strategy<Value = GrayImage> {
            (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<u8>(), (w * h) as usize)
                    .prop_map(move |d| GrayImage::from_vec(w, h, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn otsu_matches_exhaustive_search(img in small_image()) {
                prop_assert_eq!(otsu_threshold(&img), brute_otsu(&img));
            }

            #[test]
            fn psnr_symmetric_and_self_infinite(a in small_image(), seed in any::<u8>()) {
                let b = a.map(|v| v.wrapping_add(seed));
                prop_assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
                prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            }

            #[test]
            fn pad_then_crop_is_identity(img in small_image(), t in 0u32..5, l in 0u32..5, b in 0u32..5, r in 0u32..5) {
                let p = pad_replicate(&img, t, l, b, r);
                let back = p.crop(Rect::new(l, t, img.width(), img.height())).unwrap();
                prop_assert_eq!(back, img);
            }
        }
    }
}
