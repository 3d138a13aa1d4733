//! Answer-sheet geometry and rendering.
//!
//! All geometry is expressed in normalized page units: the page is 1.0 wide
//! and `page_h` tall. A point `(u, v)` maps to the pixel coordinate
//! `(u s - 0.5, v s - 0.5)` where `s` is pixels per page width, so pixel
//! centres sit on integer coordinates.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{QuizCode, SpiralAlphabet, StudentCode};
use crate::error::{Error, Result};
use crate::font;
use crate::image::GrayImage;
use crate::pattern::{stamp_pattern, PatternSpec, DEFAULT_SPIRAL_FREQUENCY, SPIRAL_FAMILY};
use crate::symmetry::DetectorConfig;

pub const LAYOUT_VERSION: u32 = 1;
pub const QUESTIONS: u8 = 20;
pub const ALTERNATIVES: u8 = 4;

/// Printed box outlines use a light tone, above the darkness cut, so they
/// neither read as marks nor compete with the spirals.
pub const OUTLINE_INK: f64 = 0.6;
/// Ink level used by [`fill_boxes`].
pub const FILL_INK: f64 = 0.1;
/// Fraction of the box side left blank on each side by [`fill_boxes`].
const FILL_INSET: f64 = 0.05;

const A4_WIDTH_MM: f64 = 210.0;
const A4_HEIGHT_MM: f64 = 297.0;
const MM_PER_INCH: f64 = 25.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    /// Shrinks each side by `frac` of the corresponding side length.
    pub fn inset(&self, frac: f64) -> Rect {
        Rect::new(
            self.x + frac * self.w,
            self.y + frac * self.h,
            self.w * (1.0 - 2.0 * frac),
            self.h * (1.0 - 2.0 * frac),
        )
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.x - p.x).max(p.x - self.right()).max(0.0);
        let dy = (self.y - p.y).max(p.y - self.bottom()).max(0.0);
        dx.hypot(dy)
    }

    fn strictly_inside(&self, w: f64, h: f64) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x > 0.0 && self.y > 0.0 && self.right() < w && self.bottom() < h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    /// 1-based question number.
    pub question: u8,
    /// 0..=3 for A..=D.
    pub alternative: u8,
    pub rect: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextFieldKind {
    Name,
    Email,
    PersonId,
    Signature,
    Date,
}

impl TextFieldKind {
    pub fn label(&self) -> &'static str {
        match self {
            TextFieldKind::Name => "NAME",
            TextFieldKind::Email => "EMAIL",
            TextFieldKind::PersonId => "ID",
            TextFieldKind::Signature => "SIGNATURE",
            TextFieldKind::Date => "DATE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextField {
    pub kind: TextFieldKind,
    pub rect: Rect,
}

/// Sheet geometry plus the reading thresholds used by assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetLayout {
    pub version: u32,
    /// Physical page width; fixes the pixel scale for a given dpi.
    pub page_width_mm: f64,
    pub page_w: f64,
    pub page_h: f64,
    /// tl, tr, bl, br.
    pub corner_anchors: [Point; 4],
    /// Student-code spirals, left to right.
    pub bottom_anchors: [Point; 4],
    /// Envelope std of every spiral, in page units.
    pub spiral_extent: f64,
    /// Cosine frequency constant `k` of the spiral patterns.
    pub frequency: f64,
    pub boxes: Vec<BoxSpec>,
    pub text_fields: Vec<TextField>,
    pub score_region: Rect,
    pub dpi: f64,
    /// Share of eroded box pixels that must be dark for a box to count as marked.
    pub fill_threshold: f64,
    /// Pixels below this intensity count as dark.
    pub darkness_cut: f64,
    /// Fraction of the box side ignored on each side when reading.
    pub box_erosion: f64,
}

/// Identity and contact fields printed on a sheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_index: u32,
    pub name: String,
    pub email: String,
    pub person_id: String,
}

impl Default for SheetLayout {
    fn default() -> Self {
        let page_h = A4_HEIGHT_MM / A4_WIDTH_MM;
        let extent = 0.011;
        let inset = 4.0 * extent;
        let corner_anchors = [
            Point::new(inset, inset),
            Point::new(1.0 - inset, inset),
            Point::new(inset, page_h - inset),
            Point::new(1.0 - inset, page_h - inset),
        ];
        let bottom_y = page_h - 0.07;
        let bottom_anchors = [0.30, 0.43, 0.57, 0.70].map(|x| Point::new(x, bottom_y));

        let side = 0.03;
        let mut boxes = Vec::with_capacity((QUESTIONS * ALTERNATIVES) as usize);
        for q in 0..QUESTIONS {
            let (col, row) = (q / 10, q % 10);
            let x0 = 0.17 + col as f64 * 0.42;
            let y0 = 0.42 + row as f64 * 0.07;
            for a in 0..ALTERNATIVES {
                boxes.push(BoxSpec {
                    question: q + 1,
                    alternative: a,
                    rect: Rect::new(x0 + a as f64 * 0.055, y0, side, side),
                });
            }
        }

        let text_fields = vec![
            TextField { kind: TextFieldKind::Name, rect: Rect::new(0.12, 0.12, 0.50, 0.035) },
            TextField { kind: TextFieldKind::Email, rect: Rect::new(0.12, 0.17, 0.50, 0.035) },
            TextField { kind: TextFieldKind::PersonId, rect: Rect::new(0.12, 0.22, 0.50, 0.035) },
            TextField { kind: TextFieldKind::Signature, rect: Rect::new(0.12, 0.29, 0.40, 0.035) },
            TextField { kind: TextFieldKind::Date, rect: Rect::new(0.56, 0.29, 0.26, 0.035) },
        ];

        SheetLayout {
            version: LAYOUT_VERSION,
            page_width_mm: A4_WIDTH_MM,
            page_w: 1.0,
            page_h,
            corner_anchors,
            bottom_anchors,
            spiral_extent: extent,
            frequency: DEFAULT_SPIRAL_FREQUENCY,
            boxes,
            text_fields,
            score_region: Rect::new(0.68, 0.12, 0.18, 0.08),
            dpi: 150.0,
            fill_threshold: 0.15,
            darkness_cut: 0.5,
            box_erosion: 0.15,
        }
    }
}

impl SheetLayout {
    /// Same geometry rendered at another resolution.
    pub fn with_dpi(&self, dpi: f64) -> Self {
        SheetLayout { dpi, ..self.clone() }
    }

    /// Pixels per page unit.
    pub fn scale(&self) -> f64 {
        self.dpi * self.page_width_mm / MM_PER_INCH / self.page_w
    }

    pub fn pixel_size(&self) -> (usize, usize) {
        let s = self.scale();
        ((self.page_w * s).round() as usize, (self.page_h * s).round() as usize)
    }

    pub fn to_pixel(&self, p: Point) -> (f64, f64) {
        let s = self.scale();
        (p.x * s - 0.5, p.y * s - 0.5)
    }

    /// Pixel index ranges `[x0, x1) x [y0, y1)` whose centres fall inside `r`.
    pub fn pixel_rect(&self, r: &Rect) -> (usize, usize, usize, usize) {
        let s = self.scale();
        let (w, h) = self.pixel_size();
        let lo = |v: f64, max: usize| ((v * s - 0.5).ceil().max(0.0) as usize).min(max);
        (lo(r.x, w), lo(r.y, h), lo(r.right(), w), lo(r.bottom(), h))
    }

    /// Spiral envelope std in pixels.
    pub fn extent_px(&self) -> f64 {
        self.spiral_extent * self.scale()
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig::for_extent(self.extent_px())
    }

    pub fn spiral_spec(&self, phi: f64) -> Result<PatternSpec> {
        let sigma = self.extent_px();
        PatternSpec::with_options(SPIRAL_FAMILY, phi, sigma, crate::pattern::min_patch_size(sigma), self.frequency)
    }

    pub fn find_box(&self, question: u8, alternative: u8) -> Result<&BoxSpec> {
        self.boxes
            .iter()
            .find(|b| b.question == question && b.alternative == alternative)
            .ok_or(Error::UnknownBox { question, alternative })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLayout(m));
        if self.version != LAYOUT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let positive = [
            ("page_width_mm", self.page_width_mm),
            ("page_w", self.page_w),
            ("page_h", self.page_h),
            ("spiral_extent", self.spiral_extent),
            ("frequency", self.frequency),
            ("dpi", self.dpi),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("fill_threshold", self.fill_threshold),
            ("darkness_cut", self.darkness_cut),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.box_erosion >= 0.0 && self.box_erosion < 0.5) {
            return bad(format!("box_erosion must lie in [0, 0.5), got {}", self.box_erosion));
        }

        let anchors: Vec<Point> = self.corner_anchors.iter().chain(&self.bottom_anchors).copied().collect();
        for p in &anchors {
            if !(p.x > 0.0 && p.y > 0.0 && p.x < self.page_w && p.y < self.page_h) {
                return bad(format!("anchor ({}, {}) outside the page", p.x, p.y));
            }
        }
        for (i, a) in anchors.iter().enumerate() {
            for b in &anchors[i + 1..] {
                if (a.x - b.x).hypot(a.y - b.y) < 6.0 * self.spiral_extent {
                    return bad("spiral anchors closer than 6 extents".into());
                }
            }
        }

        let expected = QUESTIONS as usize * ALTERNATIVES as usize;
        if self.boxes.len() != expected {
            return bad(format!("expected {expected} boxes, found {}", self.boxes.len()));
        }
        let mut seen = HashSet::new();
        for b in &self.boxes {
            if !(1..=QUESTIONS).contains(&b.question) || b.alternative >= ALTERNATIVES {
                return bad(format!("box ({}, {}) outside the 20x4 grid", b.question, b.alternative));
            }
            if !seen.insert((b.question, b.alternative)) {
                return bad(format!("duplicate box ({}, {})", b.question, b.alternative));
            }
            if !b.rect.strictly_inside(self.page_w, self.page_h) {
                return bad(format!("box ({}, {}) not inside the page", b.question, b.alternative));
            }
            for p in &anchors {
                if b.rect.distance_to(*p) <= 3.0 * self.spiral_extent {
                    return bad(format!(
                        "box ({}, {}) within 3 extents of a spiral anchor",
                        b.question, b.alternative
                    ));
                }
            }
        }
        for (i, a) in self.boxes.iter().enumerate() {
            if self.boxes[i + 1..].iter().any(|b| a.rect.overlaps(&b.rect)) {
                return bad(format!("box ({}, {}) overlaps another box", a.question, a.alternative));
            }
        }
        for f in &self.text_fields {
            if !f.rect.strictly_inside(self.page_w, self.page_h) {
                return bad(format!("text field {:?} not inside the page", f.kind));
            }
        }
        if !self.score_region.strictly_inside(self.page_w, self.page_h) {
            return bad("score region not inside the page".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let layout: SheetLayout = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Printed cap height in millimetres.
const TEXT_HEIGHT_MM: f64 = 1.4;

/// Integer glyph scale closest to the printed text height.
fn text_scale(layout: &SheetLayout) -> usize {
    let px = TEXT_HEIGHT_MM / MM_PER_INCH * layout.dpi;
    ((px / font::GLYPH_H as f64).floor() as usize).max(1)
}

fn outline(canvas: &mut GrayImage, x0: usize, y0: usize, x1: usize, y1: usize, thick: usize, ink: f64) {
    if x1 <= x0 || y1 <= y0 {
        return;
    }
    for y in y0..y1 {
        for x in x0..x1 {
            let edge = x < x0 + thick || x + thick >= x1 || y < y0 + thick || y + thick >= y1;
            if edge {
                canvas.darken(x, y, ink);
            }
        }
    }
}

fn print(canvas: &mut GrayImage, text: &str, x: f64, y: f64, scale: usize) {
    let (w, h) = (canvas.width(), canvas.height());
    font::draw_text(text, x.round() as isize, y.round() as isize, scale, |px, py| {
        if px < w && py < h {
            canvas.darken(px, py, 0.0);
        }
    });
}

/// Line thickness for printed outlines, about 0.3 mm.
pub(crate) fn line_px(layout: &SheetLayout) -> usize {
    ((0.3 / layout.page_width_mm * layout.page_w) * layout.scale()).round().max(1.0) as usize
}

/// Renders a personalized sheet: the reference and quiz spirals at the
/// corners, the student spirals along the bottom, empty answer boxes and
/// the printed student fields.
pub fn render_sheet(layout: &SheetLayout, quiz: &QuizCode, student: &StudentRecord) -> Result<GrayImage> {
    layout.validate()?;
    let alphabet = SpiralAlphabet::default();
    alphabet.decode_quiz(quiz)?;
    let student_code: StudentCode = alphabet.encode_student(student.student_index)?;

    let (w, h) = layout.pixel_size();
    let mut canvas = GrayImage::new(w, h, 1.0);
    let s = layout.scale();
    let thick = line_px(layout);
    let scale = text_scale(layout);
    let label_scale = scale;

    for field in &layout.text_fields {
        let (x0, y0, x1, y1) = layout.pixel_rect(&field.rect);
        let value = match field.kind {
            TextFieldKind::Name => student.name.as_str(),
            TextFieldKind::Email => student.email.as_str(),
            TextFieldKind::PersonId => student.person_id.as_str(),
            TextFieldKind::Signature | TextFieldKind::Date => "",
        };
        let text = format!("{}: {}", field.kind.label(), value);
        let ty = y0 as f64 + ((y1 - y0) as f64 - (font::GLYPH_H * scale) as f64) / 2.0;
        print(&mut canvas, &text, x0 as f64, ty, scale);
        // underline
        for y in y1.saturating_sub(thick)..y1 {
            for x in x0..x1 {
                canvas.darken(x, y, OUTLINE_INK);
            }
        }
    }

    for b in &layout.boxes {
        let (x0, y0, x1, y1) = layout.pixel_rect(&b.rect);
        outline(&mut canvas, x0, y0, x1, y1, thick, OUTLINE_INK);
        let cy = (y0 + y1) as f64 / 2.0 - (font::GLYPH_H * label_scale) as f64 / 2.0;
        if b.alternative == 0 {
            let label = b.question.to_string();
            let lw = font::text_width(&label, label_scale) as f64;
            print(&mut canvas, &label, x0 as f64 - lw - 0.02 * s, cy, label_scale);
        }
        if b.question == 1 || b.question == QUESTIONS / 2 + 1 {
            let letter = (b'A' + b.alternative).to_string();
            let lx = (x0 + x1) as f64 / 2.0 - font::text_width(&letter, label_scale) as f64 / 2.0;
            print(&mut canvas, &letter, lx, y0 as f64 - 0.025 * s, label_scale);
        }
    }

    let spirals = [
        (layout.corner_anchors[0], 0),
        (layout.corner_anchors[1], quiz.corner_tr),
        (layout.corner_anchors[2], quiz.corner_bl),
        (layout.corner_anchors[3], quiz.corner_br),
    ]
    .into_iter()
    .chain(layout.bottom_anchors.iter().copied().zip(student_code.digits));
    for (anchor, symbol) in spirals {
        let spec = layout.spiral_spec(alphabet.phi(symbol)?)?;
        let (cx, cy) = layout.to_pixel(anchor);
        stamp_pattern(&mut canvas, &spec, cx, cy);
    }
    Ok(canvas)
}

/// Marks the given boxes as a student would, inking the box interior.
pub fn fill_boxes(sheet: &GrayImage, layout: &SheetLayout, answers: &[(u8, u8)]) -> Result<GrayImage> {
    let rects = answers
        .iter()
        .map(|&(q, a)| layout.find_box(q, a).map(|b| b.rect.inset(FILL_INSET)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = sheet.clone();
    for r in rects {
        let (x0, y0, x1, y1) = layout.pixel_rect(&r);
        for y in y0..y1.min(out.height()) {
            for x in x0..x1.min(out.width()) {
                out.darken(x, y, FILL_INK);
            }
        }
    }
    Ok(out)
}
