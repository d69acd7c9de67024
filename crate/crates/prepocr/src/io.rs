//! File formats: PNG pages, text, JSON and JSON Lines.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use prepocr_core::image::luma_bt601;
use prepocr_core::GrayImage;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {source}")]
    JsonLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: image has a zero dimension")]
    EmptyImage { path: PathBuf },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes any supported image to 8-bit gray. Color is converted with
/// BT.601 luma; alpha is dropped.
pub fn read_gray(path: &Path) -> Result<GrayImage, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    to_gray(img).ok_or_else(|| IoError::EmptyImage {
        path: path.to_path_buf(),
    })
}

pub fn to_gray(img: DynamicImage) -> Option<GrayImage> {
    let (w, h) = (img.width(), img.height());
    let data = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw(),
        other => other.to_rgb8().pixels().map(|p| luma_bt601(p[0], p[1], p[2])).collect(),
    };
    GrayImage::from_vec(w, h, data).ok()
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<(), IoError> {
    ensure_parent(path)?;
    image::save_buffer_with_format(path, img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8, ImageFormat::Png)
        .map_err(|source| IoError::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn ensure_parent(path: &Path) -> Result<(), IoError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(fs_err(dir)),
        _ => Ok(()),
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(fs_err(path))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(fs_err(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(fs_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = fs::File::open(path).map_err(fs_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::JsonLine {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<(), IoError> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(fs_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        w.write_all(b"\n").map_err(fs_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.png");
        let img = GrayImage::from_fn(7, 5, |x, y| (x * 30 + y) as u8).unwrap();
        write_png(&p, &img).unwrap();
        assert_eq!(read_gray(&p).unwrap(), img);
    }

    #[test]
    fn color_uses_bt601() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let rgb = image::RgbImage::from_pixel(2, 2, image::Rgb([200, 100, 50]));
        rgb.save(&p).unwrap();
        let g = read_gray(&p).unwrap();
        assert_eq!(g.get(0, 0), luma_bt601(200, 100, 50));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let rows = vec![vec![1, 2], vec![3]];
        write_jsonl(&p, &rows).unwrap();
        let back: Vec<Vec<i32>> = read_jsonl(&p).unwrap();
        assert_eq!(back, rows);
        fs::write(&p, "[1]\nnot json\n").unwrap();
        let err = read_jsonl::<Vec<i32>>(&p).unwrap_err();
        assert!(matches!(err, IoError::JsonLine { line: 2, .. }));
    }
}
