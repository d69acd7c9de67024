use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PatchError;
use crate::image::Rect;

pub const PATCH_SIZE: u32 = 256;
pub const SUPPORTED_TRIMS: [u32; 3] = [0, 32, 64];

/// Corner a pass starts from. The alignment padding goes on the two edges
/// away from that corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScanDirection {
    #[serde(rename = "tl-br")]
    TopLeftToBottomRight,
    #[serde(rename = "tr-bl")]
    TopRightToBottomLeft,
    #[serde(rename = "bl-tr")]
    BottomLeftToTopRight,
    #[serde(rename = "br-tl")]
    BottomRightToTopLeft,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] = [
        ScanDirection::TopLeftToBottomRight,
        ScanDirection::TopRightToBottomLeft,
        ScanDirection::BottomLeftToTopRight,
        ScanDirection::BottomRightToTopLeft,
    ];

    fn from_left(self) -> bool {
        matches!(
            self,
            ScanDirection::TopLeftToBottomRight | ScanDirection::BottomLeftToTopRight
        )
    }

    fn from_top(self) -> bool {
        matches!(
            self,
            ScanDirection::TopLeftToBottomRight | ScanDirection::TopRightToBottomLeft
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScanDirection::TopLeftToBottomRight => "tl-br",
            ScanDirection::TopRightToBottomLeft => "tr-bl",
            ScanDirection::BottomLeftToTopRight => "bl-tr",
            ScanDirection::BottomRightToTopLeft => "br-tl",
        }
    }

    pub fn parse(s: &str) -> Option<ScanDirection> {
        ScanDirection::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

/// Replicate padding applied before patch extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: u32,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
}

/// Geometry of one directional pass.
///
/// Patches are laid at multiples of `stride` over the padded canvas. Each
/// patch keeps only its center (`trim` pixels dropped per side), and those
/// centers tile `[trim, trim + stride * grid)` on both axes, which contains
/// the original image at offset `(padding.left, padding.top)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub patch_size: u32,
    pub trim: u32,
    pub stride: u32,
    pub direction: ScanDirection,
    pub width: u32,
    pub height: u32,
    pub padding: Padding,
    pub rows: u32,
    pub cols: u32,
    /// Patch rectangles in padded coordinates, in scan order.
    pub patches: Vec<Rect>,
}

impl PatchPlan {
    pub fn padded_width(&self) -> u32 {
        self.width + self.padding.left + self.padding.right
    }

    pub fn padded_height(&self) -> u32 {
        self.height + self.padding.top + self.padding.bottom
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Retained center of a patch in padded coordinates.
    pub fn retained(&self, patch: &Rect) -> Rect {
        patch.shrink(self.trim)
    }

    /// Retained center of a patch clipped to the original image, in image
    /// coordinates. `None` when the center lies entirely in padding.
    pub fn retained_in_image(&self, patch: &Rect) -> Option<Rect> {
        let c = self.retained(patch);
        let x0 = c.x0.max(self.padding.left);
        let y0 = c.y0.max(self.padding.top);
        let x1 = c.x1().min(self.padding.left + self.width);
        let y1 = c.y1().min(self.padding.top + self.height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some(Rect::new(
            x0 - self.padding.left,
            y0 - self.padding.top,
            x1 - x0,
            y1 - y0,
        ))
    }
}

/// Plans a 256-pixel pass with one of the supported trims.
pub fn plan_patches(
    width: u32,
    height: u32,
    direction: ScanDirection,
    trim: u32,
) -> Result<PatchPlan, PatchError> {
    if !SUPPORTED_TRIMS.contains(&trim) {
        return Err(PatchError::UnsupportedTrim(trim));
    }
    plan_patches_with(width, height, direction, PATCH_SIZE, trim)
}

/// Same as [`plan_patches`] for arbitrary patch sizes (`2 * trim < patch_size`).
pub fn plan_patches_with(
    width: u32,
    height: u32,
    direction: ScanDirection,
    patch_size: u32,
    trim: u32,
) -> Result<PatchPlan, PatchError> {
    if width == 0 || height == 0 {
        return Err(PatchError::EmptyImage);
    }
    if patch_size == 0 || 2 * trim >= patch_size {
        return Err(PatchError::UnsupportedTrim(trim));
    }
    let stride = patch_size - 2 * trim;
    let cols = width.div_ceil(stride);
    let rows = height.div_ceil(stride);
    let slack_x = stride * cols - width;
    let slack_y = stride * rows - height;

    let (left, right) = if direction.from_left() {
        (trim, trim + slack_x)
    } else {
        (trim + slack_x, trim)
    };
    let (top, bottom) = if direction.from_top() {
        (trim, trim + slack_y)
    } else {
        (trim + slack_y, trim)
    };

    let row_order: Vec<u32> = if direction.from_top() {
        (0..rows).collect()
    } else {
        (0..rows).rev().collect()
    };
    let col_order: Vec<u32> = if direction.from_left() {
        (0..cols).collect()
    } else {
        (0..cols).rev().collect()
    };
    let mut patches = Vec::with_capacity((rows * cols) as usize);
    for &r in &row_order {
        for &c in &col_order {
            patches.push(Rect::new(c * stride, r * stride, patch_size, patch_size));
        }
    }

    Ok(PatchPlan {
        patch_size,
        trim,
        stride,
        direction,
        width,
        height,
        padding: Padding {
            top,
            left,
            bottom,
            right,
        },
        rows,
        cols,
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Counts how often each original pixel is covered by a retained center.
    fn coverage(plan: &PatchPlan) -> Vec<u32> {
        let mut hits = vec![0u32; (plan.width * plan.height) as usize];
        for p in &plan.patches {
            assert!(p.fits(plan.padded_width(), plan.padded_height()));
            if let Some(r) = plan.retained_in_image(p) {
                for y in r.y0..r.y1() {
                    for x in r.x0..r.x1() {
                        hits[(y * plan.width + x) as usize] += 1;
                    }
                }
            }
        }
        hits
    }

    #[test]
    fn reported_patch_counts() {
        for dir in ScanDirection::ALL {
            assert_eq!(plan_patches(1024, 1024, dir, 64).unwrap().len(), 64);
            assert_eq!(plan_patches(1024, 1024, dir, 32).unwrap().len(), 36);
            assert_eq!(plan_patches(946, 1000, dir, 64).unwrap().len(), 64);
        }
        let p = plan_patches(1024, 1024, ScanDirection::TopLeftToBottomRight, 64).unwrap();
        assert_eq!(p.stride, 128);
        let p = plan_patches(1024, 1024, ScanDirection::TopLeftToBottomRight, 32).unwrap();
        assert_eq!(p.stride, 192);
    }

    #[test]
    fn small_image_plan() {
        let p = plan_patches(256, 256, ScanDirection::TopLeftToBottomRight, 64).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!((p.padded_width(), p.padded_height()), (384, 384));
        assert!(coverage(&p).iter().all(|&c| c == 1));
    }

    #[test]
    fn rejects_unsupported_trim() {
        assert_eq!(
            plan_patches(10, 10, ScanDirection::TopLeftToBottomRight, 16),
            Err(PatchError::UnsupportedTrim(16))
        );
    }

    #[test]
    fn slack_goes_away_from_origin() {
        let tl = plan_patches(300, 200, ScanDirection::TopLeftToBottomRight, 64).unwrap();
        assert_eq!(tl.padding, Padding { top: 64, left: 64, bottom: 120, right: 148 });
        let br = plan_patches(300, 200, ScanDirection::BottomRightToTopLeft, 64).unwrap();
        assert_eq!(br.padding, Padding { top: 120, left: 148, bottom: 64, right: 64 });
        // Scan order starts at the origin corner.
        assert_eq!(br.patches[0], Rect::new(256, 128, 256, 256));
        assert_eq!(tl.patches[0], Rect::new(0, 0, 256, 256));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn centers_tile_image_once(w in 1u32..700, h in 1u32..700, t in 0usize..3, d in 0usize..4) {
                let plan = plan_patches(w, h, ScanDirection::ALL[d], SUPPORTED_TRIMS[t]).unwrap();
                prop_assert_eq!(plan.len() as u32, w.div_ceil(plan.stride) * h.div_ceil(plan.stride));
                prop_assert!(coverage(&plan).iter().all(|&c| c == 1));
            }
        }
    }
}
