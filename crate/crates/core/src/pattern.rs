//! Symmetric pattern synthesis from harmonic function pairs.
//!
//! A pattern family is indexed by an integer `n`. Its harmonic pair
//! `(xi, eta)` is the real and imaginary part of the analytic function
//! `q(z) = z^(n/2+1) / (n/2+1)`, or `log z` for `n = -2`. Members of a family
//! are the iso-curves of `cos(k (a xi + b eta)) + 1` with `(a, b) = (cos phi,
//! sin phi)`. For `n = -2`, `phi = 0` gives concentric circles and other
//! member angles give logarithmic spirals of increasing chirality.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Family index of the logarithmic spiral family used by the codec.
pub const SPIRAL_FAMILY: i32 = -2;

/// Default cosine frequency for the spiral family. `k sin(phi)` is close to
/// an integer for every codec symbol, so the branch cut of `arg z` leaves
/// almost no visible seam, and about five rings lie between 1 px and 3 sigma.
pub const DEFAULT_SPIRAL_FREQUENCY: f64 = 8.0;

/// Envelope support in units of `extent_sigma`.
const ENVELOPE_REACH: f64 = 4.0;

/// Evaluates the harmonic function pair of family `n` at `(x, y)`.
///
/// For `n = -2` this is `(log r, theta)` with `theta` in `(-pi, pi]`. Odd `n`
/// use the principal branch of the half-integer power.
pub fn harmonic_pair(family_n: i32, x: f64, y: f64) -> Result<(f64, f64)> {
    let z = Complex64::new(x, y);
    if family_n == SPIRAL_FAMILY {
        if x == 0.0 && y == 0.0 {
            return Err(Error::Domain("log(z) is singular at the origin".into()));
        }
        return Ok((z.norm().ln(), y.atan2(x)));
    }
    let power = family_n as f64 / 2.0 + 1.0;
    if power < 0.0 && x == 0.0 && y == 0.0 {
        return Err(Error::Domain(format!(
            "q(z) of family {family_n} is singular at the origin"
        )));
    }
    let q = if family_n % 2 == 0 {
        let p = family_n / 2 + 1;
        if p == 0 {
            unreachable!("p = 0 only for n = -2");
        }
        z.powi(p) / p as f64
    } else if x == 0.0 && y == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z.powf(power) / power
    };
    Ok((q.re, q.im))
}

/// One member of a symmetric pattern family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    family_n: i32,
    phi: f64,
    extent_sigma: f64,
    patch_size: usize,
    frequency: f64,
}

impl PatternSpec {
    /// Member `phi` of family `n` with a Gaussian envelope of std
    /// `extent_sigma` pixels, the smallest valid patch and the family's
    /// default frequency.
    pub fn new(family_n: i32, phi: f64, extent_sigma: f64) -> Result<Self> {
        validate_sigma(extent_sigma)?;
        let frequency = default_frequency(family_n, extent_sigma);
        Self::with_options(
            family_n,
            phi,
            extent_sigma,
            min_patch_size(extent_sigma),
            frequency,
        )
    }

    pub fn with_options(
        family_n: i32,
        phi: f64,
        extent_sigma: f64,
        patch_size: usize,
        frequency: f64,
    ) -> Result<Self> {
        validate_sigma(extent_sigma)?;
        if !phi.is_finite() {
            return Err(Error::InvalidPattern(format!("phi {phi} is not finite")));
        }
        let min = min_patch_size(extent_sigma);
        if patch_size < min || patch_size % 2 == 0 {
            return Err(Error::InvalidPattern(format!(
                "patch size {patch_size} must be odd and at least {min}"
            )));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::InvalidPattern(format!(
                "frequency {frequency} must be positive"
            )));
        }
        Ok(PatternSpec {
            family_n,
            phi: reduce_phi(phi),
            extent_sigma,
            patch_size,
            frequency,
        })
    }

    pub fn family_n(&self) -> i32 {
        self.family_n
    }

    /// Member angle, reduced into `[0, pi)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn extent_sigma(&self) -> f64 {
        self.extent_sigma
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    /// Pattern intensity in `[0, 1]` at offset `(dx, dy)` from the centre,
    /// 0 meaning background. `None` at a singular point of the family.
    pub fn value_at(&self, dx: f64, dy: f64) -> Option<f64> {
        self.value_with_phase(dx, dy, 0.0)
    }

    pub(crate) fn value_with_phase(&self, dx: f64, dy: f64, phase: f64) -> Option<f64> {
        let r2 = dx * dx + dy * dy;
        let reach = ENVELOPE_REACH * self.extent_sigma;
        if r2 > reach * reach {
            return Some(0.0);
        }
        let (xi, eta) = harmonic_pair(self.family_n, dx, dy).ok()?;
        let (b, a) = self.phi.sin_cos();
        let carrier = (self.frequency * (a * xi + b * eta) + phase).cos() + 1.0;
        let envelope = (-r2 / (2.0 * self.extent_sigma * self.extent_sigma)).exp();
        Some(0.5 * envelope * carrier)
    }

    pub fn reach(&self) -> f64 {
        ENVELOPE_REACH * self.extent_sigma
    }
}

fn validate_sigma(extent_sigma: f64) -> Result<()> {
    if extent_sigma.is_finite() && extent_sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPattern(format!(
            "extent sigma {extent_sigma} must be positive"
        )))
    }
}

/// Smallest odd side length that holds the `4 sigma` envelope support.
pub fn min_patch_size(extent_sigma: f64) -> usize {
    let s = (2.0 * ENVELOPE_REACH * extent_sigma).ceil() as usize;
    s | 1
}

/// Frequency giving about six carrier periods across `3 sigma`. For the log
/// family this is the fixed [`DEFAULT_SPIRAL_FREQUENCY`].
pub fn default_frequency(family_n: i32, extent_sigma: f64) -> f64 {
    if family_n == SPIRAL_FAMILY {
        return DEFAULT_SPIRAL_FREQUENCY;
    }
    let power = family_n as f64 / 2.0 + 1.0;
    let r = 3.0 * extent_sigma;
    let q_mag = r.powf(power) / power.abs();
    6.0 * 2.0 * PI / q_mag
}

/// Reduces a member angle into `[0, pi)`.
pub fn reduce_phi(phi: f64) -> f64 {
    if (0.0..PI).contains(&phi) {
        return phi;
    }
    let r = phi.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Renders the pattern on a `patch_size` square patch centred on the middle
/// pixel, envelope applied and scaled into `[0, 1]` with 0 as background.
pub fn render_pattern(spec: &PatternSpec) -> GrayImage {
    render_with_phase(spec, 0.0)
}

/// [`render_pattern`] with `phase` added to the cosine argument.
pub fn render_with_phase(spec: &PatternSpec, phase: f64) -> GrayImage {
    let n = spec.patch_size;
    let c = (n / 2) as isize;
    let mut samples = vec![0.0; n * n];
    let mut singular = None;
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = ((x as isize - c) as f64, (y as isize - c) as f64);
            match spec.value_with_phase(dx, dy, phase) {
                Some(v) => samples[y * n + x] = v,
                None => singular = Some((x, y)),
            }
        }
    }
    if let Some((x, y)) = singular {
        samples[y * n + x] = neighbourhood_mean(&samples, n, x, y);
    }
    GrayImage::from_samples(n, n, samples).expect("patch dimensions are consistent")
}

fn neighbourhood_mean(samples: &[f64], n: usize, x: usize, y: usize) -> f64 {
    let mut acc = 0.0;
    let mut count = 0;
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if xx >= 0 && yy >= 0 && (xx as usize) < n && (yy as usize) < n {
                acc += samples[yy as usize * n + xx as usize];
                count += 1;
            }
        }
    }
    acc / count.max(1) as f64
}

/// Prints the pattern as dark ink onto a white canvas at a sub-pixel centre.
/// Each pixel keeps the darker of its current value and `1 - pattern`.
pub fn stamp_pattern(canvas: &mut GrayImage, spec: &PatternSpec, cx: f64, cy: f64) {
    let reach = spec.reach();
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as isize + 1).clamp(0, canvas.width() as isize) as usize;
    let y1 = ((cy + reach).ceil() as isize + 1).clamp(0, canvas.height() as isize) as usize;
    let mut singular = None;
    for y in y0..y1 {
        for x in x0..x1 {
            match spec.value_at(x as f64 - cx, y as f64 - cy) {
                Some(v) => canvas.darken(x, y, 1.0 - v),
                None => singular = Some((x, y)),
            }
        }
    }
    if let Some((x, y)) = singular {
        let mut acc = 0.0;
        let mut count = 0;
        for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if xx >= 0 && yy >= 0 && (xx as usize) < canvas.width() && (yy as usize) < canvas.height()
            {
                acc += canvas.get(xx as usize, yy as usize);
                count += 1;
            }
        }
        canvas.darken(x, y, acc / count.max(1) as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_pair_at_unit_point() {
        assert_eq!(harmonic_pair(-2, 1.0, 0.0).unwrap(), (0.0, 0.0));
        let (xi, eta) = harmonic_pair(-2, 0.0, std::f64::consts::E).unwrap();
        assert!((xi - 1.0).abs() < 1e-15);
        assert!((eta - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn identity_family() {
        assert_eq!(harmonic_pair(0, 3.5, -2.25).unwrap(), (3.5, -2.25));
    }

    #[test]
    fn angle_range_is_half_open_at_minus_pi() {
        let (_, eta) = harmonic_pair(-2, -1.0, 0.0).unwrap();
        assert_eq!(eta, PI);
    }

    #[test]
    fn singular_origin_is_a_domain_error() {
        assert!(matches!(harmonic_pair(-2, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(harmonic_pair(-4, 0.0, 0.0), Err(Error::Domain(_))));
        assert_eq!(harmonic_pair(1, 0.0, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn phi_is_reduced_mod_pi() {
        let s = PatternSpec::new(-2, PI + 0.5, 5.0).unwrap();
        assert_eq!(s.phi(), 0.5);
        let s = PatternSpec::new(-2, -0.25, 5.0).unwrap();
        assert!((s.phi() - (PI - 0.25)).abs() < 1e-15);
        assert_eq!(reduce_phi(PI), 0.0);
    }

    #[test]
    fn patch_size_invariant() {
        let s = PatternSpec::new(-2, 0.0, 10.0).unwrap();
        assert_eq!(s.patch_size(), 81);
        assert!(PatternSpec::with_options(-2, 0.0, 10.0, 79, 8.0).is_err());
        assert!(PatternSpec::with_options(-2, 0.0, 10.0, 82, 8.0).is_err());
        assert!(PatternSpec::new(-2, 0.0, 0.0).is_err());
    }

    #[test]
    fn concentric_circles_depend_on_radius_only() {
        let img = render_pattern(&PatternSpec::new(-2, 0.0, 8.0).unwrap());
        let c = img.width() / 2;
        // 4-fold symmetric sample positions share a radius.
        for (dx, dy) in [(5usize, 3usize), (9, 2), (12, 7)] {
            let v = img.get(c + dx, c + dy);
            assert!((v - img.get(c - dy, c + dx)).abs() < 1e-12);
            assert!((v - img.get(c - dx, c - dy)).abs() < 1e-12);
            assert!((v - img.get(c + dy, c - dx)).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_lines_depend_on_x_only() {
        let img = render_pattern(&PatternSpec::new(0, 0.0, 8.0).unwrap());
        let c = img.width() / 2;
        // Divide out the radial envelope and compare carriers along columns.
        let sigma = 8.0f64;
        let carrier = |x: usize, y: usize| {
            let (dx, dy) = (x as f64 - c as f64, y as f64 - c as f64);
            img.get(x, y) / (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        };
        for x in c - 6..c + 6 {
            assert!((carrier(x, c) - carrier(x, c + 4)).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_centre_is_inpainted() {
        let img = render_pattern(&PatternSpec::new(-2, 0.7, 6.0).unwrap());
        let c = img.width() / 2;
        let mut mean = 0.0;
        for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            mean += img.get((c as isize + dx) as usize, (c as isize + dy) as usize);
        }
        assert!((img.get(c, c) - mean / 8.0).abs() < 1e-12);
    }

    #[test]
    fn stamp_prints_dark_ink() {
        let spec = PatternSpec::new(-2, 0.0, 4.0).unwrap();
        let mut canvas = GrayImage::new(60, 60, 1.0);
        stamp_pattern(&mut canvas, &spec, 30.25, 29.5);
        assert!(canvas.samples().iter().any(|&v| v < 0.2));
        assert_eq!(canvas.get(0, 0), 1.0);
    }
}
