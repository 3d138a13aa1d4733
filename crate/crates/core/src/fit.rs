//! Model-based refinement of spiral centres.
//!
//! A printed log-family spiral is `1 - g(r) (cos u + 1) / 2` with
//! `u = k (a log r + b theta)` and a Gaussian envelope `g`. Rotating or
//! scaling the print only shifts the phase of `u` (and stretches `g`
//! slightly), so the centre can be fitted with the phase and the ink levels
//! left free:
//!
//! `I(p) = c0 + g(r) (A cos u + B sin u + C)`
//!
//! The fit is iteratively reweighted Gauss-Newton with Tukey weights, which
//! lets masked or smudged parts of the spiral drop out instead of pulling
//! the centre towards them.

use crate::image::GrayImage;
use crate::symmetry::SpiralDetection;

/// Shape of the spiral being fitted, in scan pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralModel {
    pub phi: f64,
    pub extent_sigma: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterFit {
    pub center_x: f64,
    pub center_y: f64,
    /// Robust scale of the final residuals.
    pub residual_scale: f64,
    pub iterations: usize,
}

/// Pixels closer than this to the centre are ignored: the carrier is
/// aliased there.
const INNER_RADIUS: f64 = 2.5;
/// Fit window, in envelope sigmas.
const WINDOW_SIGMAS: f64 = 3.0;
const MAX_ITERATIONS: usize = 30;
const TUKEY_C: f64 = 4.685;
const MIN_SCALE: f64 = 0.01;
/// Refinement may not wander further than this from the start.
const MAX_SHIFT: f64 = 3.0;
/// Smallest accepted carrier amplitude; a full-contrast print has 0.5.
const MIN_AMPLITUDE: f64 = 0.05;

const N: usize = 6;

fn solve(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

struct Sample {
    x: f64,
    y: f64,
    value: f64,
}

/// Model value and its gradient with respect to
/// `(cx, cy, c0, A, B, C)` at one pixel.
fn evaluate(model: &SpiralModel, p: &[f64; N], s: &Sample) -> Option<(f64, [f64; N])> {
    let (dx, dy) = (s.x - p[0], s.y - p[1]);
    let r2 = dx * dx + dy * dy;
    if r2 < INNER_RADIUS * INNER_RADIUS {
        return None;
    }
    let (b, a) = model.phi.sin_cos();
    let k = model.frequency;
    let u = k * (a * 0.5 * r2.ln() + b * dy.atan2(dx));
    let (su, cu) = u.sin_cos();
    let var = model.extent_sigma * model.extent_sigma;
    let g = (-r2 / (2.0 * var)).exp();
    let carrier = p[3] * cu + p[4] * su + p[5];
    let dcarrier_du = -p[3] * su + p[4] * cu;
    // derivatives with respect to the centre
    let ux = k * (-a * dx + b * dy) / r2;
    let uy = k * (-a * dy - b * dx) / r2;
    let gx = g * dx / var;
    let gy = g * dy / var;
    let value = p[2] + g * carrier;
    let grad = [
        gx * carrier + g * dcarrier_du * ux,
        gy * carrier + g * dcarrier_du * uy,
        1.0,
        g * cu,
        g * su,
        g,
    ];
    Some((value, grad))
}

/// Fits the centre of a spiral near `(x0, y0)`. Returns `None` when the fit
/// is singular or wanders more than a few pixels from the start.
pub fn fit_spiral_center(image: &GrayImage, model: &SpiralModel, x0: f64, y0: f64) -> Option<CenterFit> {
    let reach = WINDOW_SIGMAS * model.extent_sigma;
    let xa = (x0 - reach).floor().max(0.0) as usize;
    let ya = (y0 - reach).floor().max(0.0) as usize;
    let xb = ((x0 + reach).ceil() as usize + 1).min(image.width());
    let yb = ((y0 + reach).ceil() as usize + 1).min(image.height());
    let mut samples = Vec::new();
    for y in ya..yb {
        for x in xa..xb {
            let (fx, fy) = (x as f64, y as f64);
            if (fx - x0).hypot(fy - y0) <= reach {
                samples.push(Sample {
                    x: fx,
                    y: fy,
                    value: image.get(x, y),
                });
            }
        }
    }
    if samples.len() < 4 * N {
        return None;
    }

    // start from the ideal print: white paper, full-strength ink
    let mut p = [x0, y0, 1.0, -0.5, 0.0, -0.5];
    let mut scale = f64::INFINITY;
    let mut residuals = vec![0.0; samples.len()];
    let mut iterations = 0;
    for iteration in 1..=MAX_ITERATIONS {
        // residuals and robust scale at the current estimate
        let mut abs = Vec::with_capacity(samples.len());
        for (s, r) in samples.iter().zip(residuals.iter_mut()) {
            *r = match evaluate(model, &p, s) {
                Some((v, _)) => s.value - v,
                None => f64::NAN,
            };
            if r.is_finite() {
                abs.push(r.abs());
            }
        }
        scale = (1.4826 * median(&mut abs)).max(MIN_SCALE);
        let cutoff = TUKEY_C * scale;

        let mut jtj = [[0.0; N]; N];
        let mut jtr = [0.0; N];
        for (s, &r) in samples.iter().zip(&residuals) {
            if !r.is_finite() || r.abs() >= cutoff {
                continue;
            }
            let w = (1.0 - (r / cutoff).powi(2)).powi(2);
            let (_, grad) = evaluate(model, &p, s)?;
            for i in 0..N {
                jtr[i] += w * grad[i] * r;
                for j in i..N {
                    jtj[i][j] += w * grad[i] * grad[j];
                }
            }
        }
        for i in 0..N {
            for j in 0..i {
                jtj[i][j] = jtj[j][i];
            }
        }
        let mut step = solve(jtj, jtr)?;
        let shift = step[0].hypot(step[1]);
        if shift > 0.5 {
            for v in step.iter_mut() {
                *v *= 0.5 / shift;
            }
        }
        for i in 0..N {
            p[i] += step[i];
        }
        if (p[0] - x0).hypot(p[1] - y0) > MAX_SHIFT || !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        iterations = iteration;
        if shift < 1e-4 {
            break;
        }
    }
    if p[3].hypot(p[4]) < MIN_AMPLITUDE {
        return None;
    }
    Some(CenterFit {
        center_x: p[0],
        center_y: p[1],
        residual_scale: scale,
        iterations,
    })
}

/// `det` with its centre replaced by the model fit, or unchanged when the
/// fit fails.
pub fn refine_detection(image: &GrayImage, det: &SpiralDetection, model: &SpiralModel) -> SpiralDetection {
    match fit_spiral_center(image, model, det.center_x, det.center_y) {
        Some(fit) => SpiralDetection {
            center_x: fit.center_x,
            center_y: fit.center_y,
            ..*det
        },
        None => *det,
    }
}
