//! Symmetry derivatives of Gaussians and spiral detection.
//!
//! The image is filtered with the first symmetry derivative and squared
//! pixel-wise to obtain the orientation tensor field `h`, which doubles
//! local orientation angles. Convolving `h` with the symmetry derivative of
//! order `n` gives the response `I20`: its magnitude peaks at centres of
//! patterns of the matching family and its argument there is the doubled
//! member angle `2 phi`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::convolve::{convolve_cols, convolve_rows, convolve_same};
use crate::error::{Error, Result};
use crate::image::{ComplexImage, GrayImage};
use crate::pattern::reduce_phi;

/// Order of the symmetry filter matched to the logarithmic spiral family.
pub const SPIRAL_FILTER_ORDER: i32 = -2;

/// Kernel support in standard deviations.
const KERNEL_REACH: f64 = 4.0;

/// Lower bound on accepted peak magnitudes, scaled by `sigma2^-4` (the
/// scaling of the order -2 response). Keeps flat or blank images from
/// reporting rounding noise as structure.
const MIN_MAGNITUDE_SCALED: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SymmetryFilter {
    order_n: i32,
    sigma: f64,
    kernel: ComplexImage,
}

impl SymmetryFilter {
    pub fn order_n(&self) -> i32 {
        self.order_n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel(&self) -> &ComplexImage {
        &self.kernel
    }

    pub fn side(&self) -> usize {
        self.kernel.width()
    }
}

/// Half-width of a kernel truncated at `4 sigma`.
pub fn kernel_radius(sigma: f64) -> usize {
    (KERNEL_REACH * sigma).ceil() as usize
}

/// Sampled 1-D Gaussian normalized to unit sum.
pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// `-(x / sigma^2) g(x)`: the 1-D factor of the first symmetry derivative.
fn derivative_taps(sigma: f64) -> Vec<f64> {
    let g = gaussian_taps(sigma);
    let r = (g.len() / 2) as isize;
    g.iter()
        .enumerate()
        .map(|(i, &v)| -((i as isize - r) as f64) / (sigma * sigma) * v)
        .collect()
}

/// Builds the symmetry derivative of a Gaussian of order `order_n`:
/// `(-1/sigma^2)^|n| (x +- iy)^|n| g(x, y)` with the conjugate form for
/// negative orders, sampled on a `2 ceil(4 sigma) + 1` square.
pub fn make_filter(order_n: i32, sigma: f64) -> Result<SymmetryFilter> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidFilter(format!("sigma {sigma} must be > 0")));
    }
    let g = gaussian_taps(sigma);
    let r = (g.len() / 2) as isize;
    let side = g.len();
    let m = order_n.unsigned_abs() as i32;
    let scale = (-1.0 / (sigma * sigma)).powi(m);
    let mut samples = Vec::with_capacity(side * side);
    for ky in 0..side {
        for kx in 0..side {
            let (x, y) = ((kx as isize - r) as f64, (ky as isize - r) as f64);
            let z = if order_n >= 0 {
                Complex64::new(x, y)
            } else {
                Complex64::new(x, -y)
            };
            let gv = g[kx] * g[ky];
            samples.push(z.powi(m) * (scale * gv));
        }
    }
    Ok(SymmetryFilter {
        order_n,
        sigma,
        kernel: ComplexImage::from_samples_unchecked(side, side, samples),
    })
}

/// Orientation tensor field: the image convolved with the first symmetry
/// derivative of a Gaussian of std `sigma1`, squared pixel-wise.
pub fn orientation_tensor(f: &GrayImage, sigma1: f64) -> Result<ComplexImage> {
    if !(sigma1.is_finite() && sigma1 > 0.0) {
        return Err(Error::InvalidFilter(format!("sigma1 {sigma1} must be > 0")));
    }
    let side = 2 * kernel_radius(sigma1) + 1;
    let (w, h) = (f.width(), f.height());
    if w < side || h < side {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            kernel: side,
        });
    }
    // The first symmetry derivative factors as d(x) g(y) + i g(x) d(y).
    let g = gaussian_taps(sigma1);
    let d = derivative_taps(sigma1);
    let src = f.samples();
    let gx = convolve_cols(&convolve_rows(src, w, h, &d), w, h, &g);
    let gy = convolve_cols(&convolve_rows(src, w, h, &g), w, h, &d);
    let samples = gx
        .iter()
        .zip(&gy)
        .map(|(&re, &im)| {
            let c = Complex64::new(re, im);
            c * c
        })
        .collect();
    Ok(ComplexImage::from_samples_unchecked(w, h, samples))
}

/// Symmetry response `I20`: `h` convolved with the order `order_n` filter of
/// std `sigma2`, same size, mirrored borders.
pub fn i20_response(h: &ComplexImage, order_n: i32, sigma2: f64) -> Result<ComplexImage> {
    let filter = make_filter(order_n, sigma2)?;
    Ok(convolve_same(h, filter.kernel()))
}

/// A located spiral fiducial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralDetection {
    pub center_x: f64,
    pub center_y: f64,
    /// `|I20|` at the integer peak.
    pub magnitude: f64,
    /// `arg I20` at the refined peak, in `(-pi, pi]`.
    pub group_angle: f64,
    /// Half the group angle, reduced into `[0, pi)`.
    pub decoded_phi: f64,
}

impl SpiralDetection {
    pub fn from_response(center_x: f64, center_y: f64, magnitude: f64, response: Complex64) -> Self {
        let group_angle = response.arg();
        SpiralDetection {
            center_x,
            center_y,
            magnitude,
            group_angle,
            decoded_phi: reduce_phi(group_angle / 2.0),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.center_x - x).hypot(self.center_y - y)
    }
}

/// Detector parameters. `sigma2` should track the spiral extent; half the
/// envelope std keeps the angle bias and occlusion drift low.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub max_count: usize,
    pub min_ratio: f64,
}

impl DetectorConfig {
    pub fn for_extent(extent_sigma: f64) -> Self {
        DetectorConfig {
            sigma1: (extent_sigma / 14.0).max(1.0),
            sigma2: 0.5 * extent_sigma,
            max_count: 12,
            min_ratio: 3.0,
        }
    }
}

/// Finds up to `max_count` spiral centres: local maxima of `|I20|` at least
/// `min_ratio` times the median magnitude, non-maximum suppressed within
/// `2 sigma2`, refined to sub-pixel position with a quadratic fit over the
/// 3x3 neighbourhood. Ordered by descending magnitude.
pub fn detect_spirals(
    f: &GrayImage,
    sigma1: f64,
    sigma2: f64,
    max_count: usize,
    min_ratio: f64,
) -> Result<Vec<SpiralDetection>> {
    if max_count == 0 {
        return Err(Error::Domain("max_count must be at least 1".into()));
    }
    if !(min_ratio > 1.0) {
        return Err(Error::Domain(format!("min_ratio {min_ratio} must be > 1")));
    }
    let h = orientation_tensor(f, sigma1)?;
    let i20 = i20_response(&h, SPIRAL_FILTER_ORDER, sigma2)?;
    Ok(find_peaks(&i20, sigma2, max_count, min_ratio))
}

pub fn detect_with(f: &GrayImage, config: &DetectorConfig) -> Result<Vec<SpiralDetection>> {
    detect_spirals(
        f,
        config.sigma1,
        config.sigma2,
        config.max_count,
        config.min_ratio,
    )
}

/// Two-level search: candidates are found on a half-resolution copy with
/// both scales halved, then each is re-detected at full resolution within
/// a small window. The coarse pass keeps several times `max_count`
/// candidates since its ranking is less reliable. Much cheaper than
/// [`detect_with`] on page-sized images; small images fall back to the
/// direct search.
pub fn detect_coarse_to_fine(f: &GrayImage, config: &DetectorConfig) -> Result<Vec<SpiralDetection>> {
    let coarse_cfg = DetectorConfig {
        sigma1: (config.sigma1 / 2.0).max(0.6),
        sigma2: config.sigma2 / 2.0,
        max_count: config.max_count.saturating_mul(COARSE_OVERSAMPLE),
        ..*config
    };
    let small = f.downsample2();
    let side = 2 * kernel_radius(coarse_cfg.sigma2).max(kernel_radius(coarse_cfg.sigma1)) + 1;
    if config.sigma2 < 4.0 || small.width() < side || small.height() < side {
        return detect_with(f, config);
    }
    let coarse = detect_with(&small, &coarse_cfg)?;
    let mut out: Vec<SpiralDetection> = Vec::with_capacity(coarse.len());
    for c in coarse {
        let (x, y) = (2.0 * c.center_x + 0.5, 2.0 * c.center_y + 0.5);
        if let Some(d) = local_detection(f, x, y, 2.5, config)? {
            if !out.iter().any(|o| o.distance_to(d.center_x, d.center_y) < 2.0 * config.sigma2) {
                out.push(d);
            }
        }
    }
    out.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    out.truncate(config.max_count);
    Ok(out)
}

const COARSE_OVERSAMPLE: usize = 3;

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

pub(crate) fn find_peaks(
    i20: &ComplexImage,
    sigma2: f64,
    max_count: usize,
    min_ratio: f64,
) -> Vec<SpiralDetection> {
    let (w, h) = (i20.width(), i20.height());
    let mag = i20.magnitudes();
    let floor = MIN_MAGNITUDE_SCALED / sigma2.powi(4);
    let threshold = (min_ratio * median(&mag)).max(floor);

    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = mag[y * w + x];
            if v < threshold || !is_local_max(&mag, w, h, x, y) {
                continue;
            }
            candidates.push((v, x, y));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let radius = 2.0 * sigma2;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();
    for (_, x, y) in candidates {
        if out.len() >= max_count {
            break;
        }
        let close = kept.iter().any(|&(kx, ky)| {
            let (dx, dy) = (kx as f64 - x as f64, ky as f64 - y as f64);
            dx * dx + dy * dy < radius * radius
        });
        if close {
            continue;
        }
        kept.push((x, y));
        out.push(refine_peak(i20, &mag, x, y));
    }
    out
}

fn refine_peak(i20: &ComplexImage, mag: &[f64], x: usize, y: usize) -> SpiralDetection {
    let (w, h) = (i20.width(), i20.height());
    let (ox, oy) = quadratic_offset(mag, w, h, x, y);
    let (cx, cy) = (x as f64 + ox, y as f64 + oy);
    SpiralDetection::from_response(cx, cy, mag[y * w + x], i20.sample_bilinear(cx, cy))
}

/// Plateau-safe local maximum test: strictly greater than the neighbours
/// that precede it in raster order, not smaller than the ones after.
fn is_local_max(mag: &[f64], w: usize, h: usize, x: usize, y: usize) -> bool {
    let v = mag[y * w + x];
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if xx < 0 || yy < 0 || xx as usize >= w || yy as usize >= h {
                continue;
            }
            let n = mag[yy as usize * w + xx as usize];
            let before = dy < 0 || (dy == 0 && dx < 0);
            if (before && n >= v) || n > v {
                return false;
            }
        }
    }
    true
}

/// Separable parabola fit through the 3x3 neighbourhood. Offsets are clamped
/// to half a pixel; border peaks are not refined.
fn quadratic_offset(mag: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return (0.0, 0.0);
    }
    let at = |xx: usize, yy: usize| mag[yy * w + xx];
    let fit = |prev: f64, cur: f64, next: f64| {
        let denom = prev - 2.0 * cur + next;
        if denom.abs() > f64::EPSILON * cur.abs().max(1e-300) {
            (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    (
        fit(at(x - 1, y), at(x, y), at(x + 1, y)),
        fit(at(x, y - 1), at(x, y), at(x, y + 1)),
    )
}

/// Strongest spiral response within `search_radius` of `(cx, cy)`, computed
/// from a local window only. Used to read fiducials whose position is
/// already known; no background ratio is applied.
pub fn local_detection(
    f: &GrayImage,
    cx: f64,
    cy: f64,
    search_radius: f64,
    config: &DetectorConfig,
) -> Result<Option<SpiralDetection>> {
    let r1 = kernel_radius(config.sigma1);
    let r2 = kernel_radius(config.sigma2);
    let margin = (r1 + r2) as f64 + search_radius + 2.0;
    let x0 = (cx - margin).floor().max(0.0) as usize;
    let y0 = (cy - margin).floor().max(0.0) as usize;
    let x1 = ((cx + margin).ceil() as usize + 1).min(f.width());
    let y1 = ((cy + margin).ceil() as usize + 1).min(f.height());
    if x1 <= x0 || y1 <= y0 {
        return Ok(None);
    }
    let (ww, wh) = (x1 - x0, y1 - y0);
    let mut window = Vec::with_capacity(ww * wh);
    for y in y0..y1 {
        window.extend_from_slice(&f.samples()[y * f.width() + x0..y * f.width() + x1]);
    }
    let window = GrayImage::from_samples(ww, wh, window)?;
    let h = orientation_tensor(&window, config.sigma1)?;
    let i20 = i20_response(&h, SPIRAL_FILTER_ORDER, config.sigma2)?;
    let mag = i20.magnitudes();
    let floor = MIN_MAGNITUDE_SCALED / config.sigma2.powi(4);
    let (lx, ly) = (cx - x0 as f64, cy - y0 as f64);
    let mut best: Option<(f64, usize, usize)> = None;
    for y in 0..wh {
        for x in 0..ww {
            let v = mag[y * ww + x];
            if v < floor || (x as f64 - lx).hypot(y as f64 - ly) > search_radius {
                continue;
            }
            if best.is_none_or(|(b, _, _)| v > b) {
                best = Some((v, x, y));
            }
        }
    }
    Ok(best.map(|(_, x, y)| {
        let det = refine_peak(&i20, &mag, x, y);
        SpiralDetection {
            center_x: det.center_x + x0 as f64,
            center_y: det.center_y + y0 as f64,
            ..det
        }
    }))
}

/// Angular distance on the circle, in `[0, pi]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolve::convolve_same_direct;
    use crate::pattern::{render_pattern, PatternSpec};

    #[test]
    fn zero_order_is_the_gaussian() {
        let f = make_filter(0, 2.0).unwrap();
        assert_eq!(f.side(), 17);
        assert!(f.kernel().samples().iter().all(|c| c.im == 0.0));
        let sum: f64 = f.kernel().samples().iter().map(|c| c.re).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_vanishes_at_centre() {
        let f = make_filter(1, 2.0).unwrap();
        let c = f.side() / 2;
        assert_eq!(f.kernel().get(c, c), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn order_minus_two_is_even() {
        let f = make_filter(-2, 4.0).unwrap();
        let s = f.side();
        for y in 0..s {
            for x in 0..s {
                let a = f.kernel().get(x, y);
                let b = f.kernel().get(s - 1 - x, s - 1 - y);
                assert!((a - b).norm() < 1e-18);
            }
        }
    }

    #[test]
    fn kernel_matches_closed_form() {
        // Closed form evaluated independently of make_filter.
        let sigma = 1.5;
        let f = make_filter(-2, sigma).unwrap();
        let r = (f.side() / 2) as isize;
        let g1: Vec<f64> = (-r..=r)
            .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let z: f64 = g1.iter().sum();
        let (x, y) = (2isize, -1isize);
        let gv = g1[(x + r) as usize] * g1[(y + r) as usize] / (z * z);
        let xf = x as f64;
        let yf = y as f64;
        let expect = Complex64::new(xf * xf - yf * yf, -2.0 * xf * yf) * gv / sigma.powi(4);
        let got = f.kernel().get((x + r) as usize, (y + r) as usize);
        assert!((got - expect).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(make_filter(1, 0.0).is_err());
        assert!(make_filter(1, -1.0).is_err());
        assert!(orientation_tensor(&GrayImage::new(20, 20, 1.0), 0.0).is_err());
    }

    #[test]
    fn orientation_tensor_rejects_tiny_images() {
        let err = orientation_tensor(&GrayImage::new(5, 40, 0.5), 1.0).unwrap_err();
        assert!(matches!(err, Error::ImageTooSmall { kernel: 9, .. }));
    }

    #[test]
    fn constant_image_has_no_orientation() {
        let h = orientation_tensor(&GrayImage::new(30, 30, 0.7), 1.0).unwrap();
        assert!(h.samples().iter().all(|c| c.norm() < 1e-24));
    }

    #[test]
    fn separable_tensor_matches_full_kernel() {
        let spec = PatternSpec::new(-2, 0.9, 4.0).unwrap();
        let img = render_pattern(&spec);
        let h = orientation_tensor(&img, 1.0).unwrap();
        let gamma1 = make_filter(1, 1.0).unwrap();
        let input = ComplexImage::from_samples(
            img.width(),
            img.height(),
            img.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
        .unwrap();
        let grad = convolve_same_direct(&input, gamma1.kernel());
        for (a, b) in h.samples().iter().zip(grad.samples()) {
            assert!((a - b * b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_field_gives_zero_response() {
        let h = ComplexImage::zeros(40, 30);
        let i20 = i20_response(&h, -2, 3.0).unwrap();
        assert!(i20.samples().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn blank_image_has_no_detections() {
        let img = GrayImage::new(120, 100, 1.0);
        assert!(detect_spirals(&img, 1.0, 6.0, 5, 3.0).unwrap().is_empty());
    }

    #[test]
    fn detect_validates_arguments() {
        let img = GrayImage::new(50, 50, 1.0);
        assert!(detect_spirals(&img, 1.0, 4.0, 0, 3.0).is_err());
        assert!(detect_spirals(&img, 1.0, 4.0, 3, 1.0).is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 3.0);
    }

    #[test]
    fn angle_distance_wraps() {
        assert!((angle_distance(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_distance(PI, -PI)).abs() < 1e-12);
    }
}
