//! Reading marked boxes, grading against a key, and the annotated copy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font;
use crate::image::{ColorImage, GrayImage};
use crate::layout::{line_px, Rect, SheetLayout, ALTERNATIVES, QUESTIONS};
use crate::rectify::RectifiedSheet;

pub const GREEN: [u8; 3] = [0, 160, 0];
pub const BLUE: [u8; 3] = [0, 0, 230];

/// Correct alternative for each of the 20 questions of one quiz.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub quiz_index: u32,
    pub correct: Vec<u8>,
}

impl AnswerKey {
    pub fn new(quiz_index: u32, correct: Vec<u8>) -> Result<Self> {
        let key = AnswerKey { quiz_index, correct };
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<()> {
        if self.correct.len() != QUESTIONS as usize {
            return Err(Error::Domain(format!(
                "answer key for quiz {} has {} entries, expected {QUESTIONS}",
                self.quiz_index,
                self.correct.len()
            )));
        }
        if let Some(bad) = self.correct.iter().find(|&&a| a >= ALTERNATIVES) {
            return Err(Error::Domain(format!(
                "answer key for quiz {} uses alternative {bad}",
                self.quiz_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkState {
    Single(u8),
    Blank,
    Multiple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkReading {
    pub question: u8,
    /// Dark-pixel share of each eroded box, A..=D.
    pub fractions: [f64; 4],
    pub state: MarkState,
}

impl MarkReading {
    pub fn from_fractions(question: u8, fractions: [f64; 4], threshold: f64) -> Self {
        let marked: Vec<u8> = (0..ALTERNATIVES).filter(|&a| fractions[a as usize] >= threshold).collect();
        let state = match marked.as_slice() {
            [] => MarkState::Blank,
            [a] => MarkState::Single(*a),
            _ => MarkState::Multiple,
        };
        MarkReading {
            question,
            fractions,
            state,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Incorrect,
    Blank,
    Multiple,
}

impl Verdict {
    pub fn letter(&self) -> char {
        match self {
            Verdict::Correct => 'C',
            Verdict::Incorrect => 'X',
            Verdict::Blank => 'B',
            Verdict::Multiple => 'M',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'C' => Some(Verdict::Correct),
            'X' => Some(Verdict::Incorrect),
            'B' => Some(Verdict::Blank),
            'M' => Some(Verdict::Multiple),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    LowConfidence,
    HighResidual,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::LowConfidence => "low_confidence",
            Flag::HighResidual => "high_residual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub student_index: u32,
    pub quiz_index: u32,
    pub readings: Vec<MarkReading>,
    pub verdicts: Vec<Verdict>,
    pub score: u32,
    pub flags: Vec<Flag>,
}

impl GradeRecord {
    pub fn verdict_string(&self) -> String {
        self.verdicts.iter().map(Verdict::letter).collect()
    }
}

/// Dark-pixel share inside `rect` shrunk by the layout's erosion.
fn fill_fraction(image: &GrayImage, layout: &SheetLayout, rect: &Rect) -> f64 {
    let (x0, y0, x1, y1) = layout.pixel_rect(&rect.inset(layout.box_erosion));
    let (x1, y1) = (x1.min(image.width()), y1.min(image.height()));
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let mut dark = 0usize;
    for y in y0..y1 {
        for x in x0..x1 {
            if image.get(x, y) < layout.darkness_cut {
                dark += 1;
            }
        }
    }
    dark as f64 / ((x1 - x0) * (y1 - y0)) as f64
}

/// Reads all 20 questions from an image in the layout frame.
pub fn read_answers_image(image: &GrayImage, layout: &SheetLayout) -> Result<Vec<MarkReading>> {
    let mut out = Vec::with_capacity(QUESTIONS as usize);
    for q in 1..=QUESTIONS {
        let mut fractions = [0.0; 4];
        for a in 0..ALTERNATIVES {
            fractions[a as usize] = fill_fraction(image, layout, &layout.find_box(q, a)?.rect);
        }
        out.push(MarkReading::from_fractions(q, fractions, layout.fill_threshold));
    }
    Ok(out)
}

pub fn read_answers(sheet: &RectifiedSheet, layout: &SheetLayout) -> Result<Vec<MarkReading>> {
    read_answers_image(&sheet.image, layout)
}

/// Grades readings of the quiz decoded as `quiz_index`. Blank and multiple
/// marks never score.
pub fn grade(readings: &[MarkReading], key: &AnswerKey, student_index: u32, quiz_index: u32) -> Result<GradeRecord> {
    if key.quiz_index != quiz_index {
        return Err(Error::KeyMismatch {
            key: key.quiz_index,
            decoded: quiz_index,
        });
    }
    key.validate()?;
    if readings.len() != key.correct.len() {
        return Err(Error::Domain(format!(
            "{} readings for a {}-question key",
            readings.len(),
            key.correct.len()
        )));
    }
    let verdicts: Vec<Verdict> = readings
        .iter()
        .zip(&key.correct)
        .map(|(r, &c)| match r.state {
            MarkState::Single(a) if a == c => Verdict::Correct,
            MarkState::Single(_) => Verdict::Incorrect,
            MarkState::Blank => Verdict::Blank,
            MarkState::Multiple => Verdict::Multiple,
        })
        .collect();
    let score = verdicts.iter().filter(|v| **v == Verdict::Correct).count() as u32;
    Ok(GradeRecord {
        student_index,
        quiz_index,
        readings: readings.to_vec(),
        verdicts,
        score,
        flags: Vec::new(),
    })
}

fn paint_ring(img: &mut ColorImage, r: (usize, usize, usize, usize), thick: usize, rgb: [u8; 3]) {
    let (x0, y0, x1, y1) = r;
    let (x1, y1) = (x1.min(img.width()), y1.min(img.height()));
    for y in y0..y1 {
        for x in x0..x1 {
            if x < x0 + thick || x + thick >= x1 || y < y0 + thick || y + thick >= y1 {
                img.set(x, y, rgb);
            }
        }
    }
}

fn paint_fill(img: &mut ColorImage, r: (usize, usize, usize, usize), rgb: [u8; 3]) {
    let (x0, y0, x1, y1) = r;
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.set(x, y, rgb);
        }
    }
}

/// Green outline around each key-correct box.
pub fn green_ring(layout: &SheetLayout, rect: &Rect) -> (usize, usize, usize, usize) {
    layout.pixel_rect(&rect.inset(-0.2))
}

/// Blue mark drawn in the middle of each box the student marked.
pub fn blue_mark(layout: &SheetLayout, rect: &Rect) -> (usize, usize, usize, usize) {
    layout.pixel_rect(&rect.inset(0.3))
}

/// Colour copy of the rectified sheet: key answers outlined in green,
/// student marks overlaid in blue, the score printed in blue.
pub fn annotate(sheet: &RectifiedSheet, layout: &SheetLayout, record: &GradeRecord, key: &AnswerKey) -> Result<ColorImage> {
    annotate_image(&sheet.image, layout, record, key)
}

pub fn annotate_image(image: &GrayImage, layout: &SheetLayout, record: &GradeRecord, key: &AnswerKey) -> Result<ColorImage> {
    let mut out = ColorImage::from_gray(image);
    let thick = 2 * line_px(layout);
    for (q, &c) in key.correct.iter().enumerate() {
        let rect = layout.find_box(q as u8 + 1, c)?.rect;
        paint_ring(&mut out, green_ring(layout, &rect), thick, GREEN);
    }
    for r in &record.readings {
        for a in 0..ALTERNATIVES {
            if r.fractions[a as usize] >= layout.fill_threshold {
                paint_fill(&mut out, blue_mark(layout, &layout.find_box(r.question, a)?.rect), BLUE);
            }
        }
    }
    let (x0, y0, x1, y1) = layout.pixel_rect(&layout.score_region);
    let text = format!("{}/{}", record.score, key.correct.len());
    let scale = ((y1 - y0) / font::GLYPH_H / 2).max(1);
    let (w, h) = (out.width(), out.height());
    let tx = x0 + ((x1 - x0).saturating_sub(font::text_width(&text, scale))) / 2;
    let ty = y0 + ((y1 - y0).saturating_sub(font::GLYPH_H * scale)) / 2;
    font::draw_text(&text, tx as isize, ty as isize, scale, |x, y| {
        if x < w && y < h {
            out.set(x, y, BLUE);
        }
    });
    Ok(out)
}
