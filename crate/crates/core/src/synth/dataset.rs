use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use ab_glyph::Font;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{degrade, render_base, DegradeOp, NoiseLevel, RenderSpec, SynthError};
use crate::image::{resize_to_width, GrayImage, ImageError};
use crate::math::{derive_seed, rng_from_seed};

pub const DEFAULT_STITCH_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StitchError {
    #[error("stitching needs at least two pages, got {0}")]
    TooFew(usize),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Scales pages to the narrowest width, keeping aspect, and stacks them
/// top to bottom.
pub fn stitch_pages(pages: &[GrayImage]) -> Result<GrayImage, StitchError> {
    if pages.len() < 2 {
        return Err(StitchError::TooFew(pages.len()));
    }
    let width = pages.iter().map(GrayImage::width).min().expect("nonempty");
    let scaled = pages
        .iter()
        .map(|p| resize_to_width(p, width))
        .collect::<Result<Vec<_>, _>>()?;
    let height = scaled.iter().map(GrayImage::height).sum();
    let mut out = GrayImage::filled(width, height, 255)?;
    let mut y = 0;
    for p in &scaled {
        out.blit(p, 0, y)?;
        y += p.height();
    }
    Ok(out)
}

/// Sampling weights over noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelWeights(pub BTreeMap<u8, f64>);

impl Default for LevelWeights {
    fn default() -> Self {
        LevelWeights((1..=4).map(|l| (l, 1.0)).collect())
    }
}

impl LevelWeights {
    pub fn only(level: u8) -> LevelWeights {
        LevelWeights([(level, 1.0)].into_iter().collect())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let total: f64 = self.0.values().sum();
        if self.0.values().any(|w| !(w.is_finite() && *w >= 0.0)) || !(total > 0.0) {
            return Err(SynthError::BadParameter("level weights"));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u8 {
        let total: f64 = self.0.values().sum();
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (&level, &w) in &self.0 {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = level;
            if target < acc {
                return level;
            }
        }
        last
    }
}

/// One sub-render of a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartPlan {
    pub level: u8,
    pub font: usize,
    pub render_seed: u64,
    pub degrade_seed: u64,
}

/// Everything random about pair `index`, fixed before any pixel work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub index: u64,
    pub seed: u64,
    pub stitched: bool,
    pub parts: Vec<PartPlan>,
}

/// Pair seeds are `derive_seed(master_seed, index)`, so plans do not
/// depend on generation order.
pub fn plan_pair(master_seed: u64, index: u64, weights: &LevelWeights, font_count: usize, stitch_fraction: f64) -> PairPlan {
    let seed = derive_seed(master_seed, index);
    let mut rng = rng_from_seed(seed);
    let stitched = rng.gen::<f64>() < stitch_fraction;
    let parts = (0..if stitched { 2 } else { 1 })
        .map(|_| PartPlan {
            level: weights.sample(&mut rng),
            font: rng.gen_range(0..font_count.max(1)),
            render_seed: rng.gen(),
            degrade_seed: rng.gen(),
        })
        .collect();
    PairPlan {
        index,
        seed,
        stitched,
        parts,
    }
}

/// Splits text into `n` pieces at whitespace near equal character counts.
fn split_text(text: &str, n: usize) -> Vec<String> {
    if n <= 1 {
        return alloc::vec![String::from(text)];
    }
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for k in 1..n {
        let ideal = chars.len() * k / n;
        let after = (ideal..chars.len()).find(|&i| chars[i].is_whitespace());
        let before = (start..ideal).rev().find(|&i| chars[i].is_whitespace());
        let cut = match (before, after) {
            (Some(b), Some(a)) => if ideal - b <= a - ideal { b } else { a },
            (b, a) => a.or(b).unwrap_or(ideal),
        }
        .max(start);
        out.push(chars[start..cut].iter().collect::<String>().trim().into());
        start = cut;
    }
    out.push(chars[start..].iter().collect::<String>().trim().into());
    out
}

/// A clean rendering and its degraded counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct PagePair {
    pub clean: GrayImage,
    pub degraded: GrayImage,
    pub text: String,
    /// Most severe level among the parts.
    pub level: u8,
    pub levels: Vec<u8>,
    pub fonts: Vec<usize>,
    pub seed: u64,
    pub stitched: bool,
    pub op_order: Vec<Vec<DegradeOp>>,
    pub binarized: Vec<bool>,
}

/// Renders and degrades each part of a plan; stitched plans split `text`
/// between their parts.
pub fn build_pair<F: Font>(
    plan: &PairPlan,
    text: &str,
    template: &RenderSpec,
    fonts: &[F],
    levels: &BTreeMap<u8, NoiseLevel>,
) -> Result<PagePair, SynthError> {
    let texts = split_text(text, plan.parts.len());
    let mut cleans = Vec::new();
    let mut degradeds = Vec::new();
    let mut op_order = Vec::new();
    let mut binarized = Vec::new();
    for (part, piece) in plan.parts.iter().zip(&texts) {
        let font = fonts.get(part.font).ok_or(SynthError::BadParameter("font index"))?;
        let level = levels.get(&part.level).ok_or(SynthError::BadParameter("noise level"))?;
        let spec = RenderSpec {
            text: piece.clone(),
            ..template.clone()
        };
        let clean = render_base(&spec, font, part.render_seed)?.image;
        let d = degrade(&clean, level, part.degrade_seed)?;
        cleans.push(clean);
        degradeds.push(d.image);
        op_order.push(d.op_order);
        binarized.push(d.binarized);
    }
    let (clean, degraded) = if cleans.len() == 1 {
        (cleans.pop().expect("one"), degradeds.pop().expect("one"))
    } else {
        let stitch = |p: &[GrayImage]| {
            stitch_pages(p).map_err(|e| match e {
                StitchError::Image(i) => SynthError::Image(i),
                StitchError::TooFew(_) => SynthError::BadParameter("stitch"),
            })
        };
        (stitch(&cleans)?, stitch(&degradeds)?)
    };
    let levels_used: Vec<u8> = plan.parts.iter().map(|p| p.level).collect();
    Ok(PagePair {
        clean,
        degraded,
        text: String::from(text),
        level: levels_used.iter().copied().max().unwrap_or(0),
        levels: levels_used,
        fonts: plan.parts.iter().map(|p| p.font).collect(),
        seed: plan.seed,
        stitched: plan.stitched,
        op_order,
        binarized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render::tests::font;

    #[test]
    fn stitch_equal_widths() {
        let a = GrayImage::filled(100, 50, 10).unwrap();
        let b = GrayImage::filled(100, 50, 200).unwrap();
        let s = stitch_pages(&[a.clone(), b]).unwrap();
        assert_eq!(s.dims(), (100, 100));
        assert_eq!(s.crop(crate::Rect::new(0, 0, 100, 50)).unwrap(), a);
    }

    #[test]
    fn stitch_scales_to_narrowest() {
        let a = GrayImage::filled(200, 80, 10).unwrap();
        let b = GrayImage::filled(100, 30, 200).unwrap();
        let s = stitch_pages(&[a, b]).unwrap();
        assert_eq!(s.dims(), (100, 40 + 30));
        assert_eq!(stitch_pages(&[GrayImage::filled(5, 5, 0).unwrap()]), Err(StitchError::TooFew(1)));
        assert_eq!(stitch_pages(&[]), Err(StitchError::TooFew(0)));
    }

    #[test]
    fn weights_and_plans() {
        let w = LevelWeights::only(3);
        for i in 0..50 {
            let p = plan_pair(42, i, &w, 2, DEFAULT_STITCH_FRACTION);
            assert!(p.parts.iter().all(|part| part.level == 3));
            assert_eq!(p, plan_pair(42, i, &w, 2, DEFAULT_STITCH_FRACTION));
        }
        let stitched = (0..2000).filter(|&i| plan_pair(7, i, &LevelWeights::default(), 1, 0.1).stitched).count();
        // Binomial(2000, 0.1): mean 200, sd about 13.4.
        assert!((150..=250).contains(&stitched), "{stitched}");
        assert!(LevelWeights(BTreeMap::new()).validate().is_err());
    }

    #[test]
    fn text_splitting() {
        let parts = split_text("alpha beta gamma delta", 2);
        assert_eq!(parts, ["alpha beta", "gamma delta"]);
        assert_eq!(split_text("abc", 1), ["abc"]);
    }

    #[test]
    fn build_stitched_pair() {
        let fonts = [font()];
        let levels: BTreeMap<u8, NoiseLevel> = (1..=4).map(|l| (l, NoiseLevel::preset(l).unwrap())).collect();
        let plan = PairPlan {
            index: 0,
            seed: 1,
            stitched: true,
            parts: alloc::vec![
                PartPlan { level: 1, font: 0, render_seed: 3, degrade_seed: 4 },
                PartPlan { level: 4, font: 0, render_seed: 5, degrade_seed: 6 },
            ],
        };
        let template = RenderSpec { page_width: 400, ..RenderSpec::default() };
        let pair = build_pair(&plan, "first half of the page second half of the page", &template, &fonts, &levels).unwrap();
        assert_eq!(pair.clean.dims(), pair.degraded.dims());
        assert_eq!(pair.level, 4);
        assert_eq!(pair.levels, [1, 4]);
        assert_eq!(pair.op_order.len(), 2);
        let again = build_pair(&plan, "first half of the page second half of the page", &template, &fonts, &levels).unwrap();
        assert_eq!(pair, again);
    }
}
