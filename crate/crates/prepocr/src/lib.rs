//! IO, file formats, OCR adapters and the end-to-end pipeline built on
//! [`prepocr_core`].

pub mod dataset;
pub mod io;
pub mod ocr;
pub mod pipeline;
pub mod report;
pub mod restorer;
