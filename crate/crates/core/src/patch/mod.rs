//! Multi-directional patch restoration.
//!
//! A pass pads the image, cuts overlapping square patches, restores each
//! one, and writes back only the patch centers. Four passes started from the
//! four corners give four predictions per pixel, which [`fuse`] combines.

mod plan;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plan::{
    plan_patches, plan_patches_with, Padding, PatchPlan, ScanDirection, PATCH_SIZE,
    SUPPORTED_TRIMS,
};

use crate::image::{binarize, otsu_threshold, pad_replicate, GrayImage, ImageError, Rect};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("unsupported trim {0} (expected one of 0, 32, 64)")]
    UnsupportedTrim(u32),
    #[error("cannot plan patches for an empty image")]
    EmptyImage,
    #[error("plan was built for {expected:?} but the image is {actual:?}")]
    PlanMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("fusion needs exactly 4 passes, got {0}")]
    WrongPassCount(usize),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Restore(#[from] RestoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestoreError {
    #[error("patch {patch}: restorer returned {got:?}, expected {expected:?}")]
    WrongDimensions {
        patch: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("restorer returned {got} patches for a batch of {expected}")]
    WrongCount { expected: usize, got: usize },
    #[error("patch {patch}: {message}")]
    PatchFailed { patch: usize, message: String },
    #[error("restorer failed: {0}")]
    Failed(String),
}

impl RestoreError {
    /// Index of the offending patch when the error names one.
    pub fn patch_index(&self) -> Option<usize> {
        match self {
            RestoreError::WrongDimensions { patch, .. } | RestoreError::PatchFailed { patch, .. } => {
                Some(*patch)
            }
            _ => None,
        }
    }
}

/// Maps square patches to restored patches of the same size.
///
/// A whole pass is handed over as one batch, so implementations are free to
/// restore patches concurrently or in a single subprocess call. Outputs must
/// come back in input order.
pub trait PatchRestorer {
    fn restore_batch(&self, patches: &[GrayImage]) -> Result<Vec<GrayImage>, RestoreError>;

    /// Whether identical input always yields identical output.
    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<R: PatchRestorer + ?Sized> PatchRestorer for &R {
    fn restore_batch(&self, patches: &[GrayImage]) -> Result<Vec<GrayImage>, RestoreError> {
        (**self).restore_batch(patches)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

/// Reference restorers that need no model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinRestorer {
    Identity,
    OtsuBinarize,
    Median3x3,
}

impl BuiltinRestorer {
    pub fn restore(&self, patch: &GrayImage) -> GrayImage {
        match self {
            BuiltinRestorer::Identity => patch.clone(),
            BuiltinRestorer::OtsuBinarize => binarize(patch, otsu_threshold(patch)),
            BuiltinRestorer::Median3x3 => median3x3(patch),
        }
    }
}

impl PatchRestorer for BuiltinRestorer {
    fn restore_batch(&self, patches: &[GrayImage]) -> Result<Vec<GrayImage>, RestoreError> {
        Ok(patches.iter().map(|p| self.restore(p)).collect())
    }
}

/// 3x3 median filter with replicated edges.
pub fn median3x3(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dims();
    let mut out = img.clone();
    let mut win = [0u8; 9];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    win[k] = img.get_clamped(x as i64 + dx, y as i64 + dy);
                    k += 1;
                }
            }
            win.sort_unstable();
            out.set(x, y, win[4]);
        }
    }
    out
}

/// Runs one directional pass. Output dimensions equal the input's.
pub fn restore_pass<R: PatchRestorer + ?Sized>(
    img: &GrayImage,
    plan: &PatchPlan,
    restorer: &R,
) -> Result<GrayImage, PatchError> {
    if img.dims() != (plan.width, plan.height) {
        return Err(PatchError::PlanMismatch {
            expected: (plan.width, plan.height),
            actual: img.dims(),
        });
    }
    let pad = plan.padding;
    let padded = pad_replicate(img, pad.top, pad.left, pad.bottom, pad.right);
    let patches = plan
        .patches
        .iter()
        .map(|r| padded.crop(*r))
        .collect::<Result<Vec<_>, _>>()?;
    let restored = restorer.restore_batch(&patches)?;
    if restored.len() != patches.len() {
        return Err(RestoreError::WrongCount {
            expected: patches.len(),
            got: restored.len(),
        }
        .into());
    }

    let mut out = img.clone();
    for (index, (rect, patch)) in plan.patches.iter().zip(&restored).enumerate() {
        if patch.dims() != (plan.patch_size, plan.patch_size) {
            return Err(RestoreError::WrongDimensions {
                patch: index,
                expected: (plan.patch_size, plan.patch_size),
                got: patch.dims(),
            }
            .into());
        }
        let Some(target) = plan.retained_in_image(rect) else {
            continue;
        };
        // Same region expressed in patch-local coordinates.
        let local = Rect::new(
            target.x0 + pad.left - rect.x0,
            target.y0 + pad.top - rect.y0,
            target.width,
            target.height,
        );
        out.blit_region(patch, local, target.x0, target.y0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Median,
    Mean,
}

/// Pixel-wise fusion of four passes.
///
/// Median is the rounded mean of the two middle order statistics; mean is
/// the rounded mean of all four. Both round half away from zero.
pub fn fuse(passes: &[GrayImage], method: FusionMethod) -> Result<GrayImage, PatchError> {
    if passes.len() != 4 {
        return Err(PatchError::WrongPassCount(passes.len()));
    }
    for p in &passes[1..] {
        passes[0].same_dims(p)?;
    }
    let (w, h) = passes[0].dims();
    let raws: Vec<&[u8]> = passes.iter().map(|p| p.as_raw()).collect();
    let data = (0..raws[0].len())
        .map(|i| fuse_pixel([raws[0][i], raws[1][i], raws[2][i], raws[3][i]], method))
        .collect();
    Ok(GrayImage::from_vec(w, h, data)?)
}

#[inline]
pub fn fuse_pixel(mut v: [u8; 4], method: FusionMethod) -> u8 {
    match method {
        FusionMethod::Median => {
            v.sort_unstable();
            ((v[1] as u16 + v[2] as u16 + 1) / 2) as u8
        }
        FusionMethod::Mean => {
            let sum: u16 = v.iter().map(|&x| x as u16).sum();
            ((sum + 2) / 4) as u8
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RestoreMode {
    Single { direction: ScanDirection },
    Multi { fusion: FusionMethod },
}

/// Record of one pass for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassSummary {
    pub direction: ScanDirection,
    pub patches: usize,
    pub checksum: u64,
}

#[derive(Debug, Clone)]
pub struct RestoreOutcome {
    pub image: GrayImage,
    pub passes: Vec<PassSummary>,
}

pub fn restore_image<R: PatchRestorer + ?Sized>(
    img: &GrayImage,
    restorer: &R,
    mode: RestoreMode,
    trim: u32,
) -> Result<GrayImage, PatchError> {
    restore_image_detailed(img, restorer, mode, trim).map(|o| o.image)
}

/// Like [`restore_image`] but also reports a checksum per pass, which is
/// what callers record for nondeterministic restorers.
pub fn restore_image_detailed<R: PatchRestorer + ?Sized>(
    img: &GrayImage,
    restorer: &R,
    mode: RestoreMode,
    trim: u32,
) -> Result<RestoreOutcome, PatchError> {
    let directions: &[ScanDirection] = match &mode {
        RestoreMode::Single { direction } => core::slice::from_ref(direction),
        RestoreMode::Multi { .. } => &ScanDirection::ALL,
    };
    let mut images = Vec::with_capacity(directions.len());
    let mut passes = Vec::with_capacity(directions.len());
    for &direction in directions {
        let plan = plan_patches(img.width(), img.height(), direction, trim)?;
        let out = restore_pass(img, &plan, restorer)?;
        passes.push(PassSummary {
            direction,
            patches: plan.len(),
            checksum: out.checksum(),
        });
        images.push(out);
    }
    let image = match mode {
        RestoreMode::Single { .. } => images.pop().expect("one pass"),
        RestoreMode::Multi { fusion } => fuse(&images, fusion)?,
    };
    Ok(RestoreOutcome { image, passes })
}
