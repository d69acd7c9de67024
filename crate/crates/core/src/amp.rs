//! Aggregated Masked PSNR.
//!
//! Per patch pair, the mask is the union of the dark pixels under each
//! image's own Otsu threshold, and each masked pixel gets a local PSNR
//! (100 dB when the pixel is exact). The accumulator averages those values
//! per pixel position over the whole test set; AMP is the mean of that map
//! over every position that was masked at least once.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{otsu_threshold, GrayImage, ImageError, Rect};

pub const ZERO_ERROR_DB: f64 = 100.0;

/// Fixed-point scale for the per-pixel sums, so that merging partial
/// accumulators is exact in any order.
const FIXED_SCALE: f64 = (1u64 << 40) as f64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmpError {
    #[error("map is {got:?} but the accumulator is {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("no masked pixels inside the {0:?} region")]
    EmptyRegion(AmpRegion),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmpRegion {
    Full,
    Central192,
    Central128,
}

impl AmpRegion {
    pub const ALL: [AmpRegion; 3] = [AmpRegion::Full, AmpRegion::Central192, AmpRegion::Central128];

    /// Pixels removed from each side of the patch.
    pub fn inset(self) -> u32 {
        match self {
            AmpRegion::Full => 0,
            AmpRegion::Central192 => 32,
            AmpRegion::Central128 => 64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AmpRegion::Full => "full",
            AmpRegion::Central192 => "192",
            AmpRegion::Central128 => "128",
        }
    }

    pub fn parse(s: &str) -> Option<AmpRegion> {
        match s {
            "full" => Some(AmpRegion::Full),
            "192" | "central-192" => Some(AmpRegion::Central192),
            "128" | "central-128" => Some(AmpRegion::Central128),
            _ => None,
        }
    }
}

/// Per-pixel PSNR over the union text mask. Unmasked entries hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPsnr {
    pub width: u32,
    pub height: u32,
    pub mask: Vec<bool>,
    pub psnr: Vec<f64>,
}

impl MaskedPsnr {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Local PSNR for one squared intensity error.
#[inline]
pub fn pixel_psnr(squared_error: u32) -> f64 {
    if squared_error == 0 {
        ZERO_ERROR_DB
    } else {
        10.0 * libm::log10(255.0 * 255.0 / squared_error as f64)
    }
}

pub fn masked_psnr_map(gt: &GrayImage, pred: &GrayImage) -> Result<MaskedPsnr, AmpError> {
    gt.same_dims(pred)?;
    let tg = otsu_threshold(gt);
    let tp = otsu_threshold(pred);
    let mut mask = Vec::with_capacity(gt.len());
    let mut psnr = Vec::with_capacity(gt.len());
    for (&g, &p) in gt.as_raw().iter().zip(pred.as_raw()) {
        let m = g < tg || p < tp;
        mask.push(m);
        psnr.push(if m {
            let d = g as i32 - p as i32;
            pixel_psnr((d * d) as u32)
        } else {
            0.0
        });
    }
    Ok(MaskedPsnr {
        width: gt.width(),
        height: gt.height(),
        mask,
        psnr,
    })
}

/// Running per-pixel PSNR sums and mask counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsnrAccumulator {
    width: u32,
    height: u32,
    sums: Vec<i128>,
    counts: Vec<u32>,
    pairs: u32,
}

/// Finalized AMP for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpResult {
    pub region: AmpRegion,
    pub amp: f64,
    /// Pixels contributing to the mean.
    pub support: usize,
    /// Mean PSNR per position over the whole accumulator; `None` where the
    /// count is zero.
    pub mean_map: Vec<Option<f64>>,
}

impl PsnrAccumulator {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        PsnrAccumulator {
            width,
            height,
            sums: vec![0; n],
            counts: vec![0; n],
            pairs: 0,
        }
    }

    /// Accumulator at the 256x256 patch resolution.
    pub fn for_patches() -> Self {
        PsnrAccumulator::new(crate::patch::PATCH_SIZE, crate::patch::PATCH_SIZE)
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pairs(&self) -> u32 {
        self.pairs
    }

    pub fn count_at(&self, x: u32, y: u32) -> u32 {
        self.counts[(y * self.width + x) as usize]
    }

    pub fn sum_at(&self, x: u32, y: u32) -> f64 {
        self.sums[(y * self.width + x) as usize] as f64 / FIXED_SCALE
    }

    pub fn accumulate(&mut self, map: &MaskedPsnr) -> Result<(), AmpError> {
        self.accumulate_parts(map.width, map.height, &map.psnr, &map.mask)
    }

    pub fn accumulate_parts(
        &mut self,
        width: u32,
        height: u32,
        psnr: &[f64],
        mask: &[bool],
    ) -> Result<(), AmpError> {
        let n = width as usize * height as usize;
        if (width, height) != self.dims() || psnr.len() != n || mask.len() != n {
            return Err(AmpError::DimensionMismatch {
                expected: self.dims(),
                got: (width, height),
            });
        }
        for i in 0..n {
            if mask[i] {
                self.sums[i] += libm::round(psnr[i] * FIXED_SCALE) as i128;
                self.counts[i] += 1;
            }
        }
        self.pairs += 1;
        Ok(())
    }

    /// Elementwise sum of two partial accumulators.
    pub fn merge(&mut self, other: &PsnrAccumulator) -> Result<(), AmpError> {
        if other.dims() != self.dims() {
            return Err(AmpError::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        for (s, o) in self.sums.iter_mut().zip(&other.sums) {
            *s += *o;
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += *o;
        }
        self.pairs += other.pairs;
        Ok(())
    }

    pub fn mean_map(&self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (c > 0).then(|| s as f64 / FIXED_SCALE / c as f64))
            .collect()
    }

    /// AMP over a concentric region of the accumulator.
    pub fn finalize(&self, region: AmpRegion) -> Result<AmpResult, AmpError> {
        let inset = region.inset();
        let mean_map = self.mean_map();
        let mut total = 0.0;
        let mut support = 0usize;
        if 2 * inset < self.width && 2 * inset < self.height {
            for y in inset..self.height - inset {
                for x in inset..self.width - inset {
                    if let Some(v) = mean_map[(y * self.width + x) as usize] {
                        total += v;
                        support += 1;
                    }
                }
            }
        }
        if support == 0 {
            return Err(AmpError::EmptyRegion(region));
        }
        Ok(AmpResult {
            region,
            amp: total / support as f64,
            support,
            mean_map,
        })
    }

    /// The accumulator restricted to a centered window.
    pub fn cropped(&self, inset: u32) -> PsnrAccumulator {
        let w = self.width - 2 * inset;
        let h = self.height - 2 * inset;
        let mut out = PsnrAccumulator::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let src = ((y + inset) * self.width + x + inset) as usize;
                let dst = (y * w + x) as usize;
                out.sums[dst] = self.sums[src];
                out.counts[dst] = self.counts[src];
            }
        }
        out.pairs = self.pairs;
        out
    }
}

/// Cuts a page pair into 256x256 patch pairs on a fixed grid; edge
/// patches are padded with white, which never enters the mask.
pub fn page_patch_pairs(gt: &GrayImage, pred: &GrayImage) -> Result<Vec<(GrayImage, GrayImage)>, AmpError> {
    if gt.dims() != pred.dims() {
        return Err(AmpError::DimensionMismatch {
            expected: gt.dims(),
            got: pred.dims(),
        });
    }
    let p = crate::patch::PATCH_SIZE;
    let (w, h) = gt.dims();
    let mut out = Vec::new();
    for y0 in (0..h).step_by(p as usize) {
        for x0 in (0..w).step_by(p as usize) {
            let region = Rect::new(x0, y0, p.min(w - x0), p.min(h - y0));
            let tile = |img: &GrayImage| {
                let mut t = GrayImage::filled(p, p, 255).expect("nonzero patch");
                t.blit_region(img, region, 0, 0);
                t
            };
            out.push((tile(gt), tile(pred)));
        }
    }
    Ok(out)
}

impl PsnrAccumulator {
    /// Adds every patch pair of a full page.
    pub fn accumulate_page(&mut self, gt: &GrayImage, pred: &GrayImage) -> Result<(), AmpError> {
        for (g, p) in page_patch_pairs(gt, pred)? {
            self.accumulate(&masked_psnr_map(&g, &p)?)?;
        }
        Ok(())
    }
}

/// Heat image of a mean map: 0..100 dB scaled to 0..255, unseen pixels black.
pub fn heat_image(width: u32, height: u32, mean_map: &[Option<f64>]) -> Result<GrayImage, ImageError> {
    let data = mean_map
        .iter()
        .map(|v| match v {
            Some(db) => crate::math::quantize(db.clamp(0.0, ZERO_ERROR_DB) * 255.0 / ZERO_ERROR_DB),
            None => 0,
        })
        .collect();
    GrayImage::from_vec(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_like(w: u32, h: u32, shift: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| if (x + shift) % 7 < 2 && y % 5 < 3 { 20 } else { 235 }).unwrap()
    }

    #[test]
    fn identical_pair_reports_cap() {
        let g = text_like(16, 16, 0);
        let m = masked_psnr_map(&g, &g).unwrap();
        assert!(m.masked_count() > 0);
        for (mask, v) in m.mask.iter().zip(&m.psnr) {
            if *mask {
                assert_eq!(*v, 100.0);
            }
        }
    }

    #[test]
    fn pixel_psnr_values() {
        assert_eq!(pixel_psnr(255 * 255), 0.0);
        let one = pixel_psnr(1);
        assert!((one - 10.0 * libm::log10(65025.0)).abs() < 1e-12);
        assert!((one - 48.13).abs() < 0.005);
    }

    #[test]
    fn mask_is_union_of_both_otsu_masks() {
        let g = text_like(14, 10, 0);
        let p = text_like(14, 10, 3);
        let m = masked_psnr_map(&g, &p).unwrap();
        let tg = otsu_threshold(&g);
        let tp = otsu_threshold(&p);
        for i in 0..g.len() {
            assert_eq!(m.mask[i], g.as_raw()[i] < tg || p.as_raw()[i] < tp);
        }
        assert!(masked_psnr_map(&g, &text_like(13, 10, 0)).is_err());
    }

    #[test]
    fn accumulate_examples() {
        let mut acc = PsnrAccumulator::new(2, 1);
        acc.accumulate_parts(2, 1, &[0.0, 0.0], &[false, false]).unwrap();
        assert_eq!(acc.count_at(0, 0), 0);
        assert_eq!(acc.sum_at(0, 0), 0.0);

        let mut a = PsnrAccumulator::new(2, 1);
        a.accumulate_parts(2, 1, &[30.0, 40.0], &[true, true]).unwrap();
        a.accumulate_parts(2, 1, &[30.0, 40.0], &[true, true]).unwrap();
        assert_eq!(a.count_at(0, 0), 2);
        assert_eq!(a.count_at(1, 0), 2);

        let mut b = PsnrAccumulator::new(1, 1);
        b.accumulate_parts(1, 1, &[100.0], &[true]).unwrap();
        b.accumulate_parts(1, 1, &[5.0], &[false]).unwrap();
        assert_eq!(b.count_at(0, 0), 1);
        assert_eq!(b.finalize(AmpRegion::Full).unwrap().amp, 100.0);

        assert!(matches!(
            a.accumulate_parts(1, 1, &[1.0], &[true]),
            Err(AmpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_point_mean() {
        let mut acc = PsnrAccumulator::new(2, 1);
        acc.accumulate_parts(2, 1, &[0.0, 100.0], &[true, true]).unwrap();
        assert_eq!(acc.finalize(AmpRegion::Full).unwrap().amp, 50.0);
    }

    #[test]
    fn empty_region_is_an_error() {
        let mut acc = PsnrAccumulator::for_patches();
        let mut mask = vec![false; 256 * 256];
        mask[0] = true;
        acc.accumulate_parts(256, 256, &vec![30.0; 256 * 256], &mask).unwrap();
        assert!(acc.finalize(AmpRegion::Full).is_ok());
        assert_eq!(
            acc.finalize(AmpRegion::Central128).unwrap_err(),
            AmpError::EmptyRegion(AmpRegion::Central128)
        );
    }

    #[test]
    fn merge_order_does_not_matter() {
        let maps: Vec<(Vec<f64>, Vec<bool>)> = (0..6)
            .map(|i| {
                let psnr = (0..9).map(|j| (i * 9 + j) as f64 * 1.37 + 0.1).collect();
                let mask = (0..9).map(|j| (i + j) % 3 != 0).collect();
                (psnr, mask)
            })
            .collect();
        let mut serial = PsnrAccumulator::new(3, 3);
        for (p, m) in &maps {
            serial.accumulate_parts(3, 3, p, m).unwrap();
        }
        let mut left = PsnrAccumulator::new(3, 3);
        let mut right = PsnrAccumulator::new(3, 3);
        for (i, (p, m)) in maps.iter().enumerate().rev() {
            if i % 2 == 0 { &mut left } else { &mut right }.accumulate_parts(3, 3, p, m).unwrap();
        }
        right.merge(&left).unwrap();
        assert_eq!(right, serial);
    }

    #[test]
    fn page_tiling_pads_with_white() {
        let g = text_like(300, 260, 0);
        let pairs = page_patch_pairs(&g, &g).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs[3].0.get(100, 100), 255);
        assert_eq!(pairs[0].0.get(10, 10), g.get(10, 10));
        let mut acc = PsnrAccumulator::for_patches();
        acc.accumulate_page(&g, &g).unwrap();
        assert_eq!(acc.pairs(), 4);
        assert_eq!(acc.finalize(AmpRegion::Full).unwrap().amp, ZERO_ERROR_DB);
        assert!(page_patch_pairs(&g, &text_like(10, 10, 0)).is_err());
    }
}
