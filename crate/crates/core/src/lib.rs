//! Document restoration, OCR evaluation and OCR post-correction primitives.
//!
//! Everything here is pure computation over in-memory values and builds
//! with `alloc` only. File formats, subprocess adapters and the command line
//! live in the `prepocr` crate.

#![no_std]

extern crate alloc;

pub mod amp;
pub mod correct;
pub mod image;
pub mod math;
pub mod ocrnoise;
pub mod patch;
pub mod synth;
pub mod text;

pub use image::{GrayImage, Rect};
