use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use ab_glyph::{point, Font, GlyphId, PxScale, ScaleFont};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Interval, SynthError};
use crate::image::{GrayImage, Rect};
use crate::math::{quantize, rng_from_seed};

/// Layout and typographic jitter for one rendered page.
///
/// Jitter ranges are sampled independently per line (`line_spacing_jitter`,
/// `indent_range`), per character (spacing, offsets, rotation) or once per
/// page (tilt, bend).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    pub text: String,
    pub font_size_pt: f64,
    pub dpi: f64,
    pub page_width: u32,
    pub margins: u32,
    /// Baseline distance as a multiple of the font's line height.
    pub line_spacing: f64,
    /// Relative change of the baseline distance.
    pub line_spacing_jitter: Interval,
    /// Relative change of each advance width.
    pub char_spacing_jitter: Interval,
    pub indent_range: Interval,
    pub char_offset_range: Interval,
    /// Degrees.
    pub char_rotation_range: Interval,
    /// Degrees, rotation of the whole page about its center.
    pub page_tilt_range: Interval,
    /// Pixels, amplitude of a sinusoidal baseline curvature.
    pub bend_amplitude_range: Interval,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            text: String::new(),
            font_size_pt: 14.0,
            dpi: 150.0,
            page_width: 1024,
            margins: 48,
            line_spacing: 1.25,
            line_spacing_jitter: Interval(-0.05, 0.05),
            char_spacing_jitter: Interval(-0.05, 0.05),
            indent_range: Interval(0.0, 24.0),
            char_offset_range: Interval(-0.6, 0.6),
            char_rotation_range: Interval(-1.5, 1.5),
            page_tilt_range: Interval(-1.0, 1.0),
            bend_amplitude_range: Interval(0.0, 4.0),
        }
    }
}

impl RenderSpec {
    pub fn with_text(text: impl Into<String>) -> RenderSpec {
        RenderSpec {
            text: text.into(),
            ..RenderSpec::default()
        }
    }

    /// A spec with every jitter collapsed to zero.
    pub fn without_jitter(self) -> RenderSpec {
        RenderSpec {
            line_spacing_jitter: Interval::ZERO,
            char_spacing_jitter: Interval::ZERO,
            indent_range: Interval::ZERO,
            char_offset_range: Interval::ZERO,
            char_rotation_range: Interval::ZERO,
            page_tilt_range: Interval::ZERO,
            bend_amplitude_range: Interval::ZERO,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.line_spacing_jitter.check("line_spacing_jitter")?;
        self.char_spacing_jitter.check("char_spacing_jitter")?;
        self.indent_range.check("indent_range")?;
        self.char_offset_range.check("char_offset_range")?;
        self.char_rotation_range.check("char_rotation_range")?;
        self.page_tilt_range.check("page_tilt_range")?;
        self.bend_amplitude_range.check("bend_amplitude_range")?;
        if !(self.font_size_pt > 0.0 && self.font_size_pt.is_finite()) {
            return Err(SynthError::BadParameter("font_size_pt"));
        }
        if !(self.dpi > 0.0 && self.dpi.is_finite()) {
            return Err(SynthError::BadParameter("dpi"));
        }
        if !(self.line_spacing > 0.0 && self.line_spacing.is_finite()) {
            return Err(SynthError::BadParameter("line_spacing"));
        }
        if self.page_width <= 2 * self.margins + 8 {
            return Err(SynthError::BadParameter("page_width"));
        }
        Ok(())
    }
}

/// Where one text line ended up on the page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedLine {
    pub text: String,
    pub baseline_start: (f64, f64),
    pub baseline_end: (f64, f64),
    /// Ink bounding box, clipped to the page; `None` if nothing was drawn.
    pub bbox: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: GrayImage,
    pub lines: Vec<RenderedLine>,
    pub tilt_degrees: f64,
    pub bend_amplitude: f64,
}

struct GlyphBitmap {
    min_x: f64,
    min_y: f64,
    width: usize,
    height: usize,
    coverage: Vec<f32>,
}

impl GlyphBitmap {
    fn sample(&self, x: f64, y: f64) -> f32 {
        // Bilinear lookup with zero outside; (x, y) are in bitmap pixel units.
        let x0 = libm::floor(x);
        let y0 = libm::floor(y);
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let at = |xi: f64, yi: f64| -> f32 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                0.0
            } else {
                self.coverage[yi as usize * self.width + xi as usize]
            }
        };
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
        let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn rasterize<F: Font>(font: &F, id: GlyphId, scale: PxScale) -> Option<GlyphBitmap> {
    let outlined = font.outline_glyph(id.with_scale_and_position(scale, point(0.0, 0.0)))?;
    let b = outlined.px_bounds();
    let width = (b.max.x - b.min.x).max(0.0) as usize;
    let height = (b.max.y - b.min.y).max(0.0) as usize;
    if width == 0 || height == 0 {
        return None;
    }
    let mut coverage = vec![0f32; width * height];
    outlined.draw(|x, y, c| {
        let (x, y) = (x as usize, y as usize);
        if x < width && y < height {
            coverage[y * width + x] = c.clamp(0.0, 1.0);
        }
    });
    Some(GlyphBitmap {
        min_x: b.min.x as f64,
        min_y: b.min.y as f64,
        width,
        height,
        coverage,
    })
}

/// Greedy word wrap on unjittered advances. Paragraph breaks are kept as
/// separate lines; words longer than a line are split.
fn wrap_lines<F: Font>(text: &str, font: &F, scale: PxScale, max_width: f64) -> Vec<String> {
    let sf = font.as_scaled(scale);
    let width_of = |s: &str| -> f64 {
        let mut w = 0.0;
        let mut prev: Option<GlyphId> = None;
        for c in s.chars() {
            let id = font.glyph_id(c);
            if let Some(p) = prev {
                w += sf.kern(p, id) as f64;
            }
            w += sf.h_advance(id) as f64;
            prev = Some(id);
        }
        w
    };
    let mut lines = Vec::new();
    for para in text.split('\n') {
        let mut line = String::new();
        for word in para.split_whitespace() {
            let mut word = String::from(word);
            loop {
                let candidate = if line.is_empty() {
                    word.clone()
                } else {
                    let mut s = line.clone();
                    s.push(' ');
                    s.push_str(&word);
                    s
                };
                if width_of(&candidate) <= max_width {
                    line = candidate;
                    break;
                }
                if !line.is_empty() {
                    lines.push(core::mem::take(&mut line));
                    continue;
                }
                // A single word wider than the line: cut it.
                let chars: Vec<char> = word.chars().collect();
                let mut cut = 1;
                while cut < chars.len() && width_of(&chars[..=cut].iter().collect::<String>()) <= max_width {
                    cut += 1;
                }
                lines.push(chars[..cut].iter().collect());
                word = chars[cut..].iter().collect();
                if word.is_empty() {
                    break;
                }
            }
        }
        if !line.is_empty() {
            lines.push(line);
        }
    }
    lines
}

/// Renders text in black on white with the spec's jitter, seeded by `seed`.
pub fn render_base<F: Font>(spec: &RenderSpec, font: &F, seed: u64) -> Result<Rendered, SynthError> {
    spec.validate()?;
    if spec.text.trim().is_empty() {
        return Err(SynthError::EmptyText);
    }
    let units = font.units_per_em().ok_or(SynthError::BadFont)? as f64;
    let px_per_em = spec.font_size_pt * spec.dpi / 72.0;
    let scale = PxScale::from((px_per_em * font.height_unscaled() as f64 / units) as f32);
    let sf = font.as_scaled(scale);
    let ascent = sf.ascent() as f64;
    let descent = sf.descent() as f64;
    let line_height = (sf.height() + sf.line_gap()) as f64;

    let margin = spec.margins as f64;
    let page_w = spec.page_width as f64;
    let max_indent = spec.indent_range.hi().max(0.0);
    let lines = wrap_lines(&spec.text, font, scale, page_w - 2.0 * margin - max_indent);

    let mut cache: BTreeMap<GlyphId, Option<GlyphBitmap>> = BTreeMap::new();
    let mut any_glyph = false;
    for c in spec.text.chars() {
        let id = font.glyph_id(c);
        if id.0 != 0 && !c.is_whitespace() {
            let bm = cache.entry(id).or_insert_with(|| rasterize(font, id, scale));
            any_glyph |= bm.is_some();
        }
    }
    if !any_glyph {
        return Err(SynthError::NoGlyphs);
    }

    let mut rng = rng_from_seed(seed);
    let tilt_deg = spec.page_tilt_range.sample(&mut rng);
    let bend = spec.bend_amplitude_range.sample(&mut rng);
    let phase: f64 = rng.gen::<f64>() * 2.0 * PI;

    // Baselines before any page-level transform.
    let mut baselines = Vec::with_capacity(lines.len());
    let mut y = margin + ascent;
    for i in 0..lines.len() {
        if i > 0 {
            y += line_height * spec.line_spacing * (1.0 + spec.line_spacing_jitter.sample(&mut rng));
        }
        baselines.push(y);
    }
    let page_h = libm::ceil(y - descent + margin).max(1.0);
    let (w, h) = (spec.page_width as usize, page_h as usize);

    let (cx, cy) = (page_w / 2.0, page_h / 2.0);
    let theta = tilt_deg * PI / 180.0;
    let (st, ct) = (libm::sin(theta), libm::cos(theta));
    let place = |x: f64, y: f64| -> (f64, f64) {
        let yb = y + bend * libm::sin(2.0 * PI * x / page_w + phase);
        let (dx, dy) = (x - cx, yb - cy);
        (cx + ct * dx - st * dy, cy + st * dx + ct * dy)
    };
    let bend_slope = |x: f64| libm::atan(bend * 2.0 * PI / page_w * libm::cos(2.0 * PI * x / page_w + phase));

    let mut ink = vec![0f32; w * h];
    let mut out_lines = Vec::with_capacity(lines.len());
    for (text, &base) in lines.iter().zip(&baselines) {
        let indent = spec.indent_range.sample(&mut rng);
        let mut x = margin + indent;
        let start = place(x, base);
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        let mut prev: Option<GlyphId> = None;
        for c in text.chars() {
            let id = font.glyph_id(c);
            if let Some(p) = prev {
                x += sf.kern(p, id) as f64;
            }
            prev = Some(id);
            let advance = sf.h_advance(id) as f64 * (1.0 + spec.char_spacing_jitter.sample(&mut rng));
            let ox = spec.char_offset_range.sample(&mut rng);
            let oy = spec.char_offset_range.sample(&mut rng);
            let rot = spec.char_rotation_range.sample(&mut rng) * PI / 180.0;
            let glyph = if c.is_whitespace() || id.0 == 0 {
                None
            } else {
                cache.get(&id).and_then(Option::as_ref)
            };
            if let Some(g) = glyph {
                let (ax, ay) = place(x + ox, base + oy);
                let phi = theta + bend_slope(x) + rot;
                if let Some(b) = composite(&mut ink, w, h, g, ax, ay, phi) {
                    bbox = Some(match bbox {
                        None => b,
                        Some(a) => (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
                    });
                }
            }
            x += advance;
        }
        out_lines.push(RenderedLine {
            text: text.clone(),
            baseline_start: start,
            baseline_end: place(x, base),
            bbox: bbox.map(|(x0, y0, x1, y1)| Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)),
        });
    }

    let data = ink.iter().map(|&c| quantize(255.0 * (1.0 - c.clamp(0.0, 1.0) as f64))).collect();
    Ok(Rendered {
        image: GrayImage::from_vec(spec.page_width, h as u32, data)?,
        lines: out_lines,
        tilt_degrees: tilt_deg,
        bend_amplitude: bend,
    })
}

/// Draws a glyph whose pen origin lands at `(ax, ay)`, rotated by `phi`.
/// Returns the touched pixel box as `(x0, y0, x1, y1)`, exclusive ends.
fn composite(
    ink: &mut [f32],
    w: usize,
    h: usize,
    g: &GlyphBitmap,
    ax: f64,
    ay: f64,
    phi: f64,
) -> Option<(usize, usize, usize, usize)> {
    let (s, c) = (libm::sin(phi), libm::cos(phi));
    let corners = [
        (g.min_x, g.min_y),
        (g.min_x + g.width as f64, g.min_y),
        (g.min_x, g.min_y + g.height as f64),
        (g.min_x + g.width as f64, g.min_y + g.height as f64),
    ];
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (lx, ly) in corners {
        let px = ax + c * lx - s * ly;
        let py = ay + s * lx + c * ly;
        x0 = x0.min(px);
        y0 = y0.min(py);
        x1 = x1.max(px);
        y1 = y1.max(py);
    }
    let x0 = libm::floor(x0 - 1.0).max(0.0) as usize;
    let y0 = libm::floor(y0 - 1.0).max(0.0) as usize;
    let x1 = (libm::ceil(x1 + 1.0).max(0.0) as usize).min(w);
    let y1 = (libm::ceil(y1 + 1.0).max(0.0) as usize).min(h);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let mut touched: Option<(usize, usize, usize, usize)> = None;
    for py in y0..y1 {
        for px in x0..x1 {
            let dx = px as f64 + 0.5 - ax;
            let dy = py as f64 + 0.5 - ay;
            let lx = c * dx + s * dy;
            let ly = -s * dx + c * dy;
            let cov = g.sample(lx - g.min_x - 0.5, ly - g.min_y - 0.5);
            if cov <= 0.0 {
                continue;
            }
            let cell = &mut ink[py * w + px];
            *cell = 1.0 - (1.0 - *cell) * (1.0 - cov);
            if cov >= 0.5 / 255.0 {
                touched = Some(match touched {
                    None => (px, py, px + 1, py + 1),
                    Some(t) => (t.0.min(px), t.1.min(py), t.2.max(px + 1), t.3.max(py + 1)),
                });
            }
        }
    }
    touched
}
