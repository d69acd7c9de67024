//! Synthetic training pairs: clean renderings of text and degraded copies.

mod dataset;
mod degrade;
mod render;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    build_pair, plan_pair, stitch_pages, LevelWeights, PagePair, PairPlan, PartPlan, StitchError, DEFAULT_STITCH_FRACTION,
};
pub use degrade::{degrade, DegradeOp, Degraded, NoiseLevel, SampledParams};
pub use render::{render_base, RenderSpec, Rendered, RenderedLine};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("text is empty")]
    EmptyText,
    #[error("no character of the text has a glyph in the font")]
    NoGlyphs,
    #[error("font has no usable metrics")]
    BadFont,
    #[error("invalid range for {0}: lower bound exceeds upper or is not finite")]
    BadRange(&'static str),
    #[error("invalid parameter {0}")]
    BadParameter(&'static str),
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
}

/// Closed real interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub const ZERO: Interval = Interval(0.0, 0.0);

    pub fn point(v: f64) -> Interval {
        Interval(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn is_valid(&self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 <= self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        self.0 <= v && v <= self.1
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.0 <= other.0 && other.1 <= self.1
    }

    /// One uniform draw. Always consumes exactly one value from `rng`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let v = self.0 + (self.1 - self.0) * u;
        v.clamp(self.0, self.1)
    }

    fn check(&self, name: &'static str) -> Result<(), SynthError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(SynthError::BadRange(name))
        }
    }
}

/// Closed integer interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntInterval(pub u32, pub u32);

impl IntInterval {
    pub fn point(v: u32) -> IntInterval {
        IntInterval(v, v)
    }

    pub fn is_valid(&self) -> bool {
        self.0 <= self.1
    }

    pub fn contains_interval(&self, other: &IntInterval) -> bool {
        self.0 <= other.0 && other.1 <= self.1
    }

    /// Uniform over the integers in the interval. Always consumes one draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let span = (self.1 - self.0) as f64 + 1.0;
        let k = libm::floor(u * span) as u32;
        self.0 + k.min(self.1 - self.0)
    }

    fn check(&self, name: &'static str) -> Result<(), SynthError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(SynthError::BadRange(name))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng_from_seed;

    #[test]
    fn interval_sampling_stays_inside() {
        let mut rng = rng_from_seed(1);
        let iv = Interval(-2.0, 3.0);
        let ii = IntInterval(2, 5);
        let mut seen = [false; 4];
        for _ in 0..2000 {
            assert!(iv.contains(iv.sample(&mut rng)));
            let k = ii.sample(&mut rng);
            assert!((2..=5).contains(&k));
            seen[(k - 2) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(Interval::point(4.0).sample(&mut rng), 4.0);
        assert_eq!(IntInterval::point(7).sample(&mut rng), 7);
        assert!(!Interval(1.0, 0.0).is_valid());
        assert!(!IntInterval(3, 1).is_valid());
    }
}
