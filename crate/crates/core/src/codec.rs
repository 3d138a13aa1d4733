//! Symbol alphabet and the quiz/student codes carried by the sheet spirals.
//!
//! Corner spirals (top-right, bottom-left, bottom-right) carry the quiz
//! index in base 5 using symbols 1..=5; symbol 0, the concentric circles,
//! marks the top-left corner only. The four bottom spirals carry the
//! student index in base 6, most significant digit on the left.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmetry::angle_distance;

/// Margin below which a symbol reading is flagged as low confidence.
pub const LOW_CONFIDENCE_MARGIN: f64 = PI / 36.0;

/// Number of corner spirals carrying the quiz code.
pub const QUIZ_DIGITS: usize = 3;
/// Number of bottom spirals carrying the student code.
pub const STUDENT_DIGITS: usize = 4;

/// Tolerance used to treat two angular distances as tied.
const TIE_EPS: f64 = 1e-12;

/// Equally spaced members `phi_k = k pi / m` of the spiral family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpiralAlphabet {
    size: u8,
}

impl Default for SpiralAlphabet {
    fn default() -> Self {
        SpiralAlphabet { size: 6 }
    }
}

/// Result of classifying a group angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolReading {
    pub symbol: u8,
    /// Distance to the nearest decision boundary, in group-angle radians.
    pub margin: f64,
}

impl SymbolReading {
    pub fn low_confidence(&self) -> bool {
        self.margin < LOW_CONFIDENCE_MARGIN
    }
}

impl SpiralAlphabet {
    /// Alphabet with `size` symbols; at least 2 are needed for the quiz code.
    pub fn new(size: u8) -> Result<Self> {
        if size < 2 {
            return Err(Error::Domain(format!("alphabet needs at least 2 symbols, got {size}")));
        }
        Ok(SpiralAlphabet { size })
    }

    pub fn len(&self) -> u8 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Member angle of symbol `k`.
    pub fn phi(&self, k: u8) -> Result<f64> {
        if k >= self.size {
            return Err(Error::OutOfRange {
                what: "symbol",
                index: k as u32,
                max: self.size as u32 - 1,
            });
        }
        Ok(k as f64 * PI / self.size as f64)
    }

    pub fn symbols(&self) -> Vec<f64> {
        (0..self.size).map(|k| k as f64 * PI / self.size as f64).collect()
    }

    /// Half the spacing between adjacent group angles.
    pub fn half_spacing(&self) -> f64 {
        PI / self.size as f64
    }

    /// Nearest symbol to `group_angle` (which is `2 phi`). Exact ties go to
    /// the lower index.
    pub fn classify(&self, group_angle: f64) -> Result<SymbolReading> {
        if !group_angle.is_finite() {
            return Err(Error::Domain("group angle is not finite".into()));
        }
        let mut best = (0u8, f64::INFINITY);
        for k in 0..self.size {
            let center = 2.0 * k as f64 * PI / self.size as f64;
            let d = angle_distance(group_angle, center);
            if d < best.1 - TIE_EPS {
                best = (k, d);
            }
        }
        Ok(SymbolReading {
            symbol: best.0,
            margin: (self.half_spacing() - best.1).max(0.0),
        })
    }

    pub fn quiz_count(&self) -> u32 {
        (self.size as u32 - 1).pow(QUIZ_DIGITS as u32)
    }

    pub fn student_count(&self) -> u32 {
        (self.size as u32).pow(STUDENT_DIGITS as u32)
    }

    pub fn encode_quiz(&self, index: u32) -> Result<QuizCode> {
        let count = self.quiz_count();
        if index >= count {
            return Err(Error::OutOfRange {
                what: "quiz",
                index,
                max: count - 1,
            });
        }
        let base = self.size as u32 - 1;
        let d = |p: u32| (index / base.pow(p) % base) as u8 + 1;
        Ok(QuizCode {
            corner_tr: d(2),
            corner_bl: d(1),
            corner_br: d(0),
        })
    }

    pub fn decode_quiz(&self, code: &QuizCode) -> Result<u32> {
        let base = self.size as u32 - 1;
        let mut value = 0;
        for s in code.digits() {
            if s == 0 {
                return Err(Error::MalformedCode(format!(
                    "symbol 0 is reserved for the top-left corner, found in quiz code {code:?}"
                )));
            }
            if s >= self.size {
                return Err(Error::MalformedCode(format!("symbol {s} outside alphabet")));
            }
            value = value * base + (s as u32 - 1);
        }
        Ok(value)
    }

    pub fn encode_student(&self, index: u32) -> Result<StudentCode> {
        let count = self.student_count();
        if index >= count {
            return Err(Error::OutOfRange {
                what: "student",
                index,
                max: count - 1,
            });
        }
        let base = self.size as u32;
        let mut digits = [0u8; STUDENT_DIGITS];
        for (i, d) in digits.iter_mut().enumerate() {
            let p = (STUDENT_DIGITS - 1 - i) as u32;
            *d = (index / base.pow(p) % base) as u8;
        }
        Ok(StudentCode { digits })
    }

    pub fn decode_student(&self, code: &StudentCode) -> Result<u32> {
        let base = self.size as u32;
        let mut value = 0;
        for &s in &code.digits {
            if s >= self.size {
                return Err(Error::MalformedCode(format!("symbol {s} outside alphabet")));
            }
            value = value * base + s as u32;
        }
        Ok(value)
    }
}

/// Quiz identity carried by the three non-reference corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuizCode {
    pub corner_tr: u8,
    pub corner_bl: u8,
    pub corner_br: u8,
}

impl QuizCode {
    /// Digits in significance order (tr, bl, br).
    pub fn digits(&self) -> [u8; QUIZ_DIGITS] {
        [self.corner_tr, self.corner_bl, self.corner_br]
    }
}

/// Student identity carried by the bottom row, left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StudentCode {
    pub digits: [u8; STUDENT_DIGITS],
}

pub fn encode_quiz(index: u32) -> Result<QuizCode> {
    SpiralAlphabet::default().encode_quiz(index)
}

pub fn decode_quiz(code: &QuizCode) -> Result<u32> {
    SpiralAlphabet::default().decode_quiz(code)
}

pub fn encode_student(index: u32) -> Result<StudentCode> {
    SpiralAlphabet::default().encode_student(index)
}

pub fn decode_student(code: &StudentCode) -> Result<u32> {
    SpiralAlphabet::default().decode_student(code)
}

/// Classifies a group angle against the default six-symbol alphabet.
pub fn classify_symbol(group_angle: f64) -> Result<SymbolReading> {
    SpiralAlphabet::default().classify(group_angle)
}
