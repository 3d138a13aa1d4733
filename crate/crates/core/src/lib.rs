//! Spiral-coded answer sheets: pattern synthesis, symmetry-filter
//! detection, sheet codes, rectification, grading and batch correction.

pub mod assess;
pub mod codec;
mod convolve;
pub mod dispatch;
pub mod error;
pub mod fit;
mod font;
pub mod image;
pub mod layout;
pub mod pattern;
pub mod pipeline;
pub mod rectify;
pub mod simulate;
pub mod symmetry;

pub use assess::{AnswerKey, Flag, GradeRecord, MarkReading, MarkState, Verdict};
pub use codec::{QuizCode, SpiralAlphabet, StudentCode, SymbolReading};
pub use dispatch::{DeliveryReport, DetailPolicy, FileOutbox, MessageSender, OutboxMessage};
pub use error::{Error, Result};
pub use image::{ColorImage, GrayImage};
pub use layout::{SheetLayout, StudentRecord};
pub use pattern::PatternSpec;
pub use pipeline::{AnswerKeys, CorrectionSetup, ResultRow, ReviewEntry, Roster, RosterEntry};
pub use rectify::{RectifiedSheet, SimilarityTransform};
pub use simulate::ScanParams;
pub use symmetry::{DetectorConfig, SpiralDetection};
