//! Sheet alignment: corner spirals to a similarity transform, resampling
//! into the layout frame, and reading the identity codes.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::codec::{QuizCode, SpiralAlphabet, StudentCode, SymbolReading};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::fit::{refine_detection, SpiralModel};
use crate::layout::SheetLayout;
use crate::symmetry::{detect_coarse_to_fine, local_detection, DetectorConfig, SpiralDetection};

/// RMS corner residual, in layout pixels, above which alignment fails.
pub const MAX_RESIDUAL_PX: f64 = 3.0;
/// Residual above which a processed sheet is flagged for a second look.
pub const HIGH_RESIDUAL_PX: f64 = 1.5;
/// Detections requested from the page-level search.
pub const PAGE_MAX_COUNT: usize = 12;
/// Spirals are at least six extents apart, so weaker peaks closer than
/// this to a stronger one are side lobes.
const SATELLITE_EXTENTS: f64 = 3.0;

/// `p -> scale R(rotation) p + translation`, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: 0.0,
            scale: 1.0,
            dx: 0.0,
            dy: 0.0,
        }
    }

    pub fn new(rotation: f64, scale: f64, dx: f64, dy: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) || !rotation.is_finite() || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::Domain(format!("invalid similarity: scale {scale}, rotation {rotation}")));
        }
        Ok(SimilarityTransform {
            rotation: wrap_angle(rotation),
            scale,
            dx,
            dy,
        })
    }

    /// From the complex form `w = a z + t`.
    fn from_complex(a: Complex64, t: Complex64) -> Self {
        SimilarityTransform {
            rotation: a.arg(),
            scale: a.norm(),
            dx: t.re,
            dy: t.im,
        }
    }

    fn a(&self) -> Complex64 {
        Complex64::from_polar(self.scale, self.rotation)
    }

    fn t(&self) -> Complex64 {
        Complex64::new(self.dx, self.dy)
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let w = self.a() * Complex64::new(x, y) + self.t();
        (w.re, w.im)
    }

    pub fn inverse(&self) -> Self {
        let inv = 1.0 / self.a();
        Self::from_complex(inv, -inv * self.t())
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &SimilarityTransform) -> Self {
        let a = self.a() * first.a();
        let t = self.a() * first.t() + self.t();
        Self::from_complex(a, t)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Transform estimate together with its RMS fit error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformFit {
    /// Maps scan pixels to layout pixels.
    pub transform: SimilarityTransform,
    pub residual: f64,
}

/// A scan resampled into the layout frame.
#[derive(Debug, Clone)]
pub struct RectifiedSheet {
    pub image: GrayImage,
    /// Scan to layout pixels.
    pub transform: SimilarityTransform,
    /// tl, tr, bl, br, in scan coordinates.
    pub corner_detections: [SpiralDetection; 4],
    pub residual: f64,
}

/// Orders four corner detections as tl, tr, bl, br. The reference corner
/// is the only one classifying as symbol 0; the diagonal corner is the
/// farthest from it and the other two are told apart by the winding of the
/// triangle they form with the diagonal.
pub fn resolve_orientation(detections: &[SpiralDetection]) -> Result<[SpiralDetection; 4]> {
    if detections.len() != 4 {
        return Err(Error::Orientation(format!(
            "expected 4 corner detections, got {}",
            detections.len()
        )));
    }
    let alphabet = SpiralAlphabet::default();
    let mut reference = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        if alphabet.classify(d.group_angle)?.symbol == 0 {
            reference.push(i);
        }
    }
    let tl_idx = match reference.as_slice() {
        [i] => *i,
        [] => return Err(Error::Orientation("no concentric-circle corner".into())),
        _ => {
            return Err(Error::Orientation(format!(
                "{} concentric-circle corners",
                reference.len()
            )))
        }
    };
    let tl = detections[tl_idx];
    let others: Vec<SpiralDetection> = detections
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != tl_idx)
        .map(|(_, d)| *d)
        .collect();
    let dist = |d: &SpiralDetection| d.distance_to(tl.center_x, tl.center_y);
    let br_pos = (0..3)
        .max_by(|&a, &b| dist(&others[a]).total_cmp(&dist(&others[b])))
        .expect("three candidates");
    let br = others[br_pos];
    let rest: Vec<SpiralDetection> = (0..3).filter(|&i| i != br_pos).map(|i| others[i]).collect();

    let (dx, dy) = (br.center_x - tl.center_x, br.center_y - tl.center_y);
    let cross = |p: &SpiralDetection| dx * (p.center_y - tl.center_y) - dy * (p.center_x - tl.center_x);
    // With y pointing down, tr lies on the negative side of tl -> br.
    let (tr, bl) = match (cross(&rest[0]) < 0.0, cross(&rest[1]) < 0.0) {
        (true, false) => (rest[0], rest[1]),
        (false, true) => (rest[1], rest[0]),
        _ => return Err(Error::Orientation("corners do not form a quadrilateral".into())),
    };

    let len = |a: &SpiralDetection, b: &SpiralDetection| a.distance_to(b.center_x, b.center_y);
    let (top, left) = (len(&tl, &tr), len(&tl, &bl));
    let (bottom, right) = (len(&bl, &br), len(&tr, &br));
    let (d1, d2) = (len(&tl, &br), len(&tr, &bl));
    let ratio = |a: f64, b: f64| a.max(b) / a.min(b).max(f64::MIN_POSITIVE);
    if top.min(left) <= 0.0 || ratio(top, left) > 2.0 || ratio(top, bottom) > 1.25 || ratio(left, right) > 1.25 || ratio(d1, d2) > 1.25 {
        return Err(Error::Orientation("corner geometry is not a plausible page rectangle".into()));
    }
    Ok([tl, tr, bl, br])
}

/// Closed-form least-squares similarity taking the ordered corner
/// detections onto the layout's corner anchors (in layout pixels).
pub fn estimate_transform(corners: &[SpiralDetection; 4], layout: &SheetLayout) -> Result<TransformFit> {
    let z: Vec<Complex64> = corners.iter().map(|d| Complex64::new(d.center_x, d.center_y)).collect();
    let w: Vec<Complex64> = layout
        .corner_anchors
        .iter()
        .map(|p| {
            let (x, y) = layout.to_pixel(*p);
            Complex64::new(x, y)
        })
        .collect();
    let fit = fit_similarity(&z, &w)?;
    if fit.residual > MAX_RESIDUAL_PX {
        return Err(Error::Residual {
            residual: fit.residual,
            limit: MAX_RESIDUAL_PX,
        });
    }
    Ok(fit)
}

pub(crate) fn fit_similarity(z: &[Complex64], w: &[Complex64]) -> Result<TransformFit> {
    let n = z.len() as f64;
    let zm = z.iter().sum::<Complex64>() / n;
    let wm = w.iter().sum::<Complex64>() / n;
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for (zi, wi) in z.iter().zip(w) {
        num += (wi - wm) * (zi - zm).conj();
        den += (zi - zm).norm_sqr();
    }
    if !(den > 0.0) || num.norm() == 0.0 {
        return Err(Error::Alignment("degenerate corner configuration".into()));
    }
    let a = num / den;
    let t = wm - a * zm;
    let sq: f64 = z.iter().zip(w).map(|(zi, wi)| (a * zi + t - wi).norm_sqr()).sum();
    Ok(TransformFit {
        transform: SimilarityTransform::from_complex(a, t),
        residual: (sq / n).sqrt(),
    })
}

/// Drops detections within `radius` of a stronger one. Concentric rings
/// leave weak side peaks just outside the detector's suppression radius.
fn drop_satellites(detections: &[SpiralDetection], radius: f64) -> Vec<SpiralDetection> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    let mut kept: Vec<SpiralDetection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        if !kept.iter().any(|k| k.distance_to(d.center_x, d.center_y) < radius) {
            kept.push(d);
        }
    }
    kept
}

/// Picks, for each image corner, the detection lying farthest along the
/// corresponding diagonal direction.
fn corner_candidates(detections: &[SpiralDetection], width: usize, height: usize) -> Result<Vec<SpiralDetection>> {
    if detections.len() < 4 {
        return Err(Error::Alignment(format!(
            "found {} spiral candidates, need 4 corners",
            detections.len()
        )));
    }
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let mut picked: Vec<usize> = Vec::with_capacity(4);
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let score = |d: &SpiralDetection| sx * (d.center_x - cx) + sy * (d.center_y - cy);
        let best = (0..detections.len())
            .max_by(|&a, &b| score(&detections[a]).total_cmp(&score(&detections[b])))
            .expect("non-empty");
        if picked.contains(&best) {
            return Err(Error::Alignment("corner candidates are not distinct".into()));
        }
        picked.push(best);
    }
    Ok(picked.into_iter().map(|i| detections[i]).collect())
}

/// Detector settings for a scan expected at the layout resolution.
pub fn page_detector(layout: &SheetLayout) -> DetectorConfig {
    DetectorConfig {
        max_count: PAGE_MAX_COUNT,
        ..layout.detector_config()
    }
}

/// Finds the corner spirals on a scan taken at (about) the layout
/// resolution, aligns it and resamples it into the layout frame.
pub fn rectify(scan: &GrayImage, layout: &SheetLayout) -> Result<RectifiedSheet> {
    let config = page_detector(layout);
    let detections = match detect_coarse_to_fine(scan, &config) {
        Ok(d) => d,
        Err(Error::ImageTooSmall { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let detections = drop_satellites(&detections, SATELLITE_EXTENTS * layout.extent_px());
    let candidates = corner_candidates(&detections, scan.width(), scan.height())?;
    let corners = refine_corners(scan, &resolve_orientation(&candidates)?, layout)?;
    let fit = estimate_transform(&corners, layout)?;
    let image = resample(scan, &fit.transform, layout);
    Ok(RectifiedSheet {
        image,
        transform: fit.transform,
        corner_detections: corners,
        residual: fit.residual,
    })
}

/// Re-fits each corner centre against the printed spiral model, using the
/// symbol the corner decodes to.
pub fn refine_corners(scan: &GrayImage, corners: &[SpiralDetection; 4], layout: &SheetLayout) -> Result<[SpiralDetection; 4]> {
    let alphabet = SpiralAlphabet::default();
    let mut out = *corners;
    for d in out.iter_mut() {
        let model = SpiralModel {
            phi: alphabet.phi(alphabet.classify(d.group_angle)?.symbol)?,
            extent_sigma: layout.extent_px(),
            frequency: layout.frequency,
        };
        *d = refine_detection(scan, d, &model);
    }
    Ok(out)
}

/// Bicubic resampling of `scan` into the layout frame; `to_layout` maps
/// scan pixels to layout pixels. Uncovered area is white.
pub fn resample(scan: &GrayImage, to_layout: &SimilarityTransform, layout: &SheetLayout) -> GrayImage {
    let (w, h) = layout.pixel_size();
    warp(scan, &to_layout.inverse(), w, h)
}

/// Output pixel `(x, y)` takes the scan value at `back(x, y)`.
pub(crate) fn warp(src: &GrayImage, back: &SimilarityTransform, width: usize, height: usize) -> GrayImage {
    let a = back.a();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let row0 = a * Complex64::new(0.0, y as f64) + back.t();
        for x in 0..width {
            let p = row0 + a * x as f64;
            out.push(src.sample_bicubic(p.re, p.im, 1.0));
        }
    }
    GrayImage::from_samples(width, height, out).expect("bicubic output is finite")
}

/// Quiz and student identity read from a rectified sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReading {
    pub quiz: QuizCode,
    pub student: StudentCode,
    pub quiz_index: u32,
    pub student_index: u32,
    /// tr, bl, br then the four bottom spirals.
    pub symbols: Vec<SymbolReading>,
}

impl IdentityReading {
    pub fn low_confidence(&self) -> bool {
        self.symbols.iter().any(|s| s.low_confidence())
    }
}

/// Decodes the quiz code from the ordered corners and the student code from
/// the bottom spirals, which are located near their anchors in the
/// rectified image.
pub fn decode_identity(sheet: &RectifiedSheet, layout: &SheetLayout) -> Result<IdentityReading> {
    let alphabet = SpiralAlphabet::default();
    let config = layout.detector_config();
    let mut symbols = Vec::with_capacity(7);
    for d in &sheet.corner_detections[1..] {
        symbols.push(alphabet.classify(d.group_angle)?);
    }
    let search = (config.sigma2 / 2.0).max(3.0);
    for (i, anchor) in layout.bottom_anchors.iter().enumerate() {
        let (x, y) = layout.to_pixel(*anchor);
        let det = local_detection(&sheet.image, x, y, search, &config)?
            .ok_or_else(|| Error::MalformedCode(format!("no spiral at student position {}", i + 1)))?;
        symbols.push(alphabet.classify(det.group_angle)?);
    }
    let quiz = QuizCode {
        corner_tr: symbols[0].symbol,
        corner_bl: symbols[1].symbol,
        corner_br: symbols[2].symbol,
    };
    let student = StudentCode {
        digits: [symbols[3].symbol, symbols[4].symbol, symbols[5].symbol, symbols[6].symbol],
    };
    Ok(IdentityReading {
        quiz_index: alphabet.decode_quiz(&quiz)?,
        student_index: alphabet.decode_student(&student)?,
        quiz,
        student,
        symbols,
    })
}
