//! Synthetic scan degradation for tests and benchmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::layout::SheetLayout;
use crate::rectify::{warp, SimilarityTransform};

/// Degradation applied by [`simulate_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    /// Counter-clockwise on the page as seen by the viewer, in degrees.
    pub rotation_deg: f64,
    pub scale: f64,
    /// Extra shift of the page in the output canvas, in pixels.
    pub shift_x: f64,
    pub shift_y: f64,
    /// Std of additive Gaussian noise; the result is clipped to [0, 1].
    pub noise_sigma: f64,
    /// Angular share of each spiral masked to background, in [0, 1).
    pub occlusion: f64,
    pub seed: u64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            rotation_deg: 0.0,
            scale: 1.0,
            shift_x: 0.0,
            shift_y: 0.0,
            noise_sigma: 0.0,
            occlusion: 0.0,
            seed: 0,
        }
    }
}

impl ScanParams {
    fn validate(&self) -> Result<()> {
        let finite = [self.rotation_deg, self.scale, self.shift_x, self.shift_y, self.noise_sigma, self.occlusion];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("scan parameters must be finite".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Domain(format!("scale {} must be > 0", self.scale)));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Domain("noise sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.occlusion) {
            return Err(Error::Domain(format!("occlusion {} must lie in [0, 1)", self.occlusion)));
        }
        Ok(())
    }

    fn is_geometric_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.scale == 1.0 && self.shift_x == 0.0 && self.shift_y == 0.0
    }
}

/// Sets an angular sector of the disc of radius `radius` around `(cx, cy)`
/// to background. The sector starts at `start` and spans `width` radians;
/// its straight edges are anti-aliased over one pixel.
pub fn occlude_sector(img: &mut GrayImage, cx: f64, cy: f64, radius: f64, start: f64, width: f64) {
    if width <= 0.0 {
        return;
    }
    let x0 = (cx - radius).floor().max(0.0) as usize;
    let y0 = (cy - radius).floor().max(0.0) as usize;
    let x1 = ((cx + radius).ceil() as usize + 1).min(img.width());
    let y1 = ((cy + radius).ceil() as usize + 1).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let r = dx.hypot(dy);
            if r > radius {
                continue;
            }
            let a = (dy.atan2(dx) - start).rem_euclid(2.0 * PI);
            // signed arc distance in pixels to the nearest sector edge,
            // positive inside
            let inside = if a < width {
                a.min(width - a)
            } else {
                -(a - width).min(2.0 * PI - a)
            };
            let cover = (inside * r.max(0.5) + 0.5).clamp(0.0, 1.0);
            if cover > 0.0 {
                let v = img.get(x, y);
                img.set(x, y, v + (1.0 - v) * cover);
            }
        }
    }
}

/// Degrades a rendered sheet: masks a random sector of every spiral,
/// rotates about the page centre and scales onto a canvas large enough for
/// the whole page, then adds clipped Gaussian noise. Deterministic for a
/// given seed; the identity parameters return the input unchanged.
pub fn simulate_scan(sheet: &GrayImage, layout: &SheetLayout, params: &ScanParams) -> Result<GrayImage> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut img = sheet.clone();

    if params.occlusion > 0.0 {
        let sheet_scale = sheet.width() as f64 / layout.pixel_size().0 as f64;
        let radius = 4.0 * layout.extent_px() * sheet_scale;
        let width = params.occlusion * 2.0 * PI;
        for anchor in layout.corner_anchors.iter().chain(&layout.bottom_anchors) {
            let (ax, ay) = layout.to_pixel(*anchor);
            let (cx, cy) = ((ax + 0.5) * sheet_scale - 0.5, (ay + 0.5) * sheet_scale - 0.5);
            let start = rng.random_range(0.0..2.0 * PI);
            occlude_sector(&mut img, cx, cy, radius, start, width);
        }
    }

    if !params.is_geometric_identity() {
        let (fwd, out_w, out_h) = placement(img.width(), img.height(), params)?;
        img = warp(&img, &fwd.inverse(), out_w, out_h);
    }

    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::Domain(e.to_string()))?;
        let samples: Vec<f64> = img
            .samples()
            .iter()
            .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        img = GrayImage::from_samples(img.width(), img.height(), samples)?;
    }
    Ok(img)
}

/// Page-to-canvas transform and canvas size used for a sheet of the given
/// pixel size.
fn placement(sheet_w: usize, sheet_h: usize, params: &ScanParams) -> Result<(SimilarityTransform, usize, usize)> {
    let theta = -params.rotation_deg.to_radians();
    let s = params.scale;
    let (w, h) = (sheet_w as f64, sheet_h as f64);
    let (c, sn) = (theta.cos().abs(), theta.sin().abs());
    let out_w = (s * (w * c + h * sn)).round().max(1.0) as usize;
    let out_h = (s * (w * sn + h * c)).round().max(1.0) as usize;
    let (pcx, pcy) = SimilarityTransform::new(theta, s, 0.0, 0.0)?.apply((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let fwd = SimilarityTransform::new(
        theta,
        s,
        (out_w as f64 - 1.0) / 2.0 - pcx + params.shift_x,
        (out_h as f64 - 1.0) / 2.0 - pcy + params.shift_y,
    )?;
    Ok((fwd, out_w, out_h))
}

/// The transform [`simulate_scan`] applies to page pixels, for checking
/// recovered alignments against ground truth.
pub fn scan_transform(sheet_w: usize, sheet_h: usize, params: &ScanParams) -> Result<SimilarityTransform> {
    params.validate()?;
    if params.is_geometric_identity() {
        return Ok(SimilarityTransform::identity());
    }
    Ok(placement(sheet_w, sheet_h, params)?.0)
}
