//! Font loading and grayscale rasterization of single glyphs and whole chunks.
//!
//! Rasters are 8-bit with a white (255) background and ink toward 0. Anti-aliasing
//! is kept; downstream stages threshold as they see fit.

use std::fs;
use std::path::{Path, PathBuf};

use ab_glyph::{point, Font, FontArc, Glyph, PxScale, ScaleFont};
use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_CANVAS: (u32, u32) = (64, 64);
pub const DEFAULT_MARGIN: f32 = 0.125;

/// One entry of a font manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FontEntry {
    pub id: String,
    pub path: PathBuf,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<String>,
}

#[derive(Clone)]
pub struct LoadedFont {
    pub entry: FontEntry,
    pub font: FontArc,
}

impl std::fmt::Debug for LoadedFont {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedFont").field("entry", &self.entry).finish()
    }
}

/// An ordered, non-empty set of fonts. Read-only once loaded.
#[derive(Debug, Clone)]
pub struct FontSet {
    fonts: Vec<LoadedFont>,
    digest: String,
}

impl FontSet {
    /// Loads a JSON manifest `[{id, path, name}]`. Relative paths resolve
    /// against the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut entries: Vec<FontEntry> =
            serde_json::from_str(&text).map_err(|e| Error::Font(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for e in &mut entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<FontEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Font("font set is empty".into()));
        }
        let mut hasher = Sha256::new();
        let mut fonts = Vec::with_capacity(entries.len());
        for entry in entries {
            if fonts.iter().any(|f: &LoadedFont| f.entry.id == entry.id) {
                return Err(Error::Font(format!("duplicate font id `{}`", entry.id)));
            }
            let bytes = fs::read(&entry.path).map_err(|e| Error::Font(format!("{}: {e}", entry.path.display())))?;
            hasher.update(entry.id.as_bytes());
            hasher.update([0]);
            hasher.update(Sha256::digest(&bytes));
            let font =
                FontArc::try_from_vec(bytes).map_err(|e| Error::Font(format!("{}: {e}", entry.path.display())))?;
            fonts.push(LoadedFont { entry, font });
        }
        Ok(FontSet {
            fonts,
            digest: hex::encode(hasher.finalize()),
        })
    }

    pub fn len(&self) -> usize {
        self.fonts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fonts.is_empty()
    }

    pub fn fonts(&self) -> &[LoadedFont] {
        &self.fonts
    }

    pub fn get(&self, id: &str) -> Option<&LoadedFont> {
        self.fonts.iter().find(|f| f.entry.id == id)
    }

    /// SHA-256 over font ids and file contents, in order.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// A set holding only the fonts at the given positions.
    pub fn subset(&self, indices: &[usize]) -> Result<FontSet> {
        let entries = indices
            .iter()
            .map(|&i| {
                self.fonts
                    .get(i)
                    .map(|f| f.entry.clone())
                    .ok_or_else(|| Error::Font(format!("no font at index {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        FontSet::from_entries(entries)
    }
}

/// A single character rendered on a fixed canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    pub character: char,
    pub font_id: String,
    pub pixels: GrayImage,
}

impl GlyphImage {
    pub fn canvas(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }
}

/// Share of pixels darker than mid-gray.
pub fn ink_fraction(img: &GrayImage) -> f64 {
    let total = (img.width() * img.height()) as f64;
    if total == 0.0 {
        return 0.0;
    }
    img.pixels().filter(|p| p.0[0] < 128).count() as f64 / total
}

fn blank(w: u32, h: u32) -> GrayImage {
    GrayImage::from_pixel(w, h, Luma([255]))
}

fn paint(img: &mut GrayImage, x: i32, y: i32, coverage: f32) {
    if x < 0 || y < 0 || x >= img.width() as i32 || y >= img.height() as i32 {
        return;
    }
    let ink = (255.0 - coverage.clamp(0.0, 1.0) * 255.0).round() as u8;
    let px = img.get_pixel_mut(x as u32, y as u32);
    px.0[0] = px.0[0].min(ink);
}

/// Renders `character` scaled to fill the canvas minus a `margin` fraction
/// on each side, centered, aspect ratio preserved.
pub fn render_glyph_with(font: &LoadedFont, character: char, canvas: (u32, u32), margin: f32) -> Result<GlyphImage> {
    let (w, h) = canvas;
    if w < 32 || h < 32 {
        return Err(Error::Parameter(format!("glyph canvas {w}x{h} is below 32x32")));
    }
    let unavailable = || Error::GlyphUnavailable {
        ch: character,
        font: font.entry.id.clone(),
    };
    let id = font.font.glyph_id(character);
    if id.0 == 0 {
        return Err(unavailable());
    }

    const REFERENCE: f32 = 1024.0;
    let probe = font
        .font
        .outline_glyph(id.with_scale_and_position(REFERENCE, point(0.0, 0.0)))
        .ok_or_else(unavailable)?;
    let b = probe.px_bounds();
    if b.width() <= 0.0 || b.height() <= 0.0 {
        return Err(unavailable());
    }
    let inner_w = w as f32 * (1.0 - 2.0 * margin);
    let inner_h = h as f32 * (1.0 - 2.0 * margin);
    let factor = (inner_w / b.width()).min(inner_h / b.height());
    let cx = (b.min.x + b.max.x) / 2.0 * factor;
    let cy = (b.min.y + b.max.y) / 2.0 * factor;
    let glyph: Glyph = id.with_scale_and_position(REFERENCE * factor, point(w as f32 / 2.0 - cx, h as f32 / 2.0 - cy));
    let outlined = font.font.outline_glyph(glyph).ok_or_else(unavailable)?;
    let bounds = outlined.px_bounds();

    let mut pixels = blank(w, h);
    outlined.draw(|x, y, c| {
        paint(
            &mut pixels,
            bounds.min.x as i32 + x as i32,
            bounds.min.y as i32 + y as i32,
            c,
        );
    });
    if pixels.pixels().all(|p| p.0[0] == 255) {
        return Err(unavailable());
    }
    Ok(GlyphImage {
        character,
        font_id: font.entry.id.clone(),
        pixels,
    })
}

pub fn render_glyph(fonts: &FontSet, character: char, font_id: &str, canvas: (u32, u32)) -> Result<GlyphImage> {
    let font = fonts
        .get(font_id)
        .ok_or_else(|| Error::Font(format!("unknown font id `{font_id}`")))?;
    render_glyph_with(font, character, canvas, DEFAULT_MARGIN)
}

/// Layout parameters for rendering running text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextLayout {
    pub point_size: f32,
    pub dpi: f32,
    /// Padding around the text block, in pixels.
    pub padding: u32,
    /// Maximum width of a text line, in pixels, before wrapping.
    pub line_width: u32,
}

impl Default for TextLayout {
    fn default() -> Self {
        TextLayout {
            point_size: 24.0,
            dpi: 150.0,
            padding: 20,
            line_width: 1600,
        }
    }
}

impl TextLayout {
    pub fn px(&self) -> f32 {
        self.point_size * self.dpi / 72.0
    }
}

/// Renders text left to right with greedy word wrapping. Characters the font
/// lacks are skipped.
pub fn render_chunk(text: &str, font: &LoadedFont, layout: &TextLayout) -> Result<GrayImage> {
    if text.trim().is_empty() {
        return Err(Error::Render("nothing to render".into()));
    }
    if layout.point_size < 8.0 {
        return Err(Error::Parameter(format!("point size {} is below 8", layout.point_size)));
    }
    let scaled = font.font.as_scaled(PxScale::from(layout.px()));
    let renderable = |c: char| font.font.glyph_id(c).0 != 0;
    if !text.chars().any(|c| !c.is_whitespace() && renderable(c)) {
        return Err(Error::Render(format!(
            "font `{}` renders none of the characters",
            font.entry.id
        )));
    }

    let space = scaled.h_advance(font.font.glyph_id(' '));
    let word_width = |word: &str| -> f32 {
        let mut width = 0.0;
        let mut prev = None;
        for c in word.chars().filter(|&c| renderable(c)) {
            let id = font.font.glyph_id(c);
            if let Some(p) = prev {
                width += scaled.kern(p, id);
            }
            width += scaled.h_advance(id);
            prev = Some(id);
        }
        width
    };

    let max_width = layout.line_width as f32;
    let mut lines: Vec<(Vec<&str>, f32)> = vec![(Vec::new(), 0.0)];
    for word in text.split_whitespace() {
        let ww = word_width(word);
        let (words, width) = lines.last_mut().expect("at least one line");
        if words.is_empty() {
            words.push(word);
            *width = ww;
        } else if *width + space + ww <= max_width {
            words.push(word);
            *width += space + ww;
        } else {
            lines.push((vec![word], ww));
        }
    }

    let line_height = (scaled.ascent() - scaled.descent() + scaled.line_gap()).ceil();
    let block_w = lines.iter().map(|(_, w)| *w).fold(0.0f32, f32::max).ceil() as u32;
    let pad = layout.padding;
    let width = block_w + 2 * pad;
    let height = (line_height * lines.len() as f32).ceil() as u32 + 2 * pad;
    let mut img = blank(width.max(1), height.max(1));

    for (row, (words, _)) in lines.iter().enumerate() {
        let baseline = pad as f32 + scaled.ascent() + row as f32 * line_height;
        let mut x = pad as f32;
        for (k, word) in words.iter().enumerate() {
            if k > 0 {
                x += space;
            }
            let mut prev = None;
            for c in word.chars().filter(|&c| renderable(c)) {
                let id = font.font.glyph_id(c);
                if let Some(p) = prev {
                    x += scaled.kern(p, id);
                }
                let glyph = id.with_scale_and_position(layout.px(), point(x, baseline));
                if let Some(outlined) = font.font.outline_glyph(glyph) {
                    let b = outlined.px_bounds();
                    outlined.draw(|gx, gy, cov| {
                        paint(&mut img, b.min.x as i32 + gx as i32, b.min.y as i32 + gy as i32, cov);
                    });
                }
                x += scaled.h_advance(id);
                prev = Some(id);
            }
        }
    }
    Ok(img)
}

/// Binary PGM (P5) encoding, for debugging dumps.
pub fn to_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
