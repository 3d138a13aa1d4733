//! Same-size 2-D convolution with mirrored borders.
//!
//! Large complex kernels go through the frequency domain; small separable
//! real kernels are applied directly.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::image::ComplexImage;

/// Mirrors an index into `0..len` without repeating the edge sample
/// (`d c b | a b c d`), periodically for any offset.
#[inline]
pub(crate) fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub(crate) fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// 1-D convolution along rows: `out[x] = sum_k w[k] in[x - k]` for
/// `k in -r..=r`, `w` holding `2r + 1` taps centred on index `r`.
pub(crate) fn convolve_rows(input: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; width * height];
    let mut padded = vec![0.0; width + 2 * r as usize];
    for y in 0..height {
        let row = &input[y * width..(y + 1) * width];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[reflect(i as isize - r, width)];
        }
        let dst = &mut out[y * width..(y + 1) * width];
        // padded[x + 2r - j] == in[x - (j - r)]
        for (d, win) in dst.iter_mut().zip(padded.windows(taps.len())) {
            *d = taps.iter().zip(win.iter().rev()).map(|(w, v)| w * v).sum();
        }
    }
    out
}

/// 1-D convolution along columns, same conventions as [`convolve_rows`].
pub(crate) fn convolve_cols(input: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let dst = &mut out[y * width..(y + 1) * width];
        for (j, w) in taps.iter().enumerate() {
            let src_y = reflect(y as isize + r - j as isize, height);
            let src = &input[src_y * width..(src_y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

struct Plan2d {
    rows: std::sync::Arc<dyn Fft<f64>>,
    cols: std::sync::Arc<dyn Fft<f64>>,
    rows_inv: std::sync::Arc<dyn Fft<f64>>,
    cols_inv: std::sync::Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(nw: usize, nh: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plan2d {
            rows: planner.plan_fft_forward(nw),
            cols: planner.plan_fft_forward(nh),
            rows_inv: planner.plan_fft_inverse(nw),
            cols_inv: planner.plan_fft_inverse(nh),
        }
    }
}

fn transpose(src: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    const BLOCK: usize = 32;
    let mut dst = vec![Complex64::new(0.0, 0.0); width * height];
    for by in (0..height).step_by(BLOCK) {
        for bx in (0..width).step_by(BLOCK) {
            for y in by..(by + BLOCK).min(height) {
                for x in bx..(bx + BLOCK).min(width) {
                    dst[x * height + y] = src[y * width + x];
                }
            }
        }
    }
    dst
}

/// Forward 2-D transform; the spectrum is returned transposed (`nh` is the
/// fast axis).
fn forward(plan: &Plan2d, mut buf: Vec<Complex64>, nw: usize, nh: usize) -> Vec<Complex64> {
    plan.rows.process(&mut buf);
    let mut t = transpose(&buf, nw, nh);
    plan.cols.process(&mut t);
    t
}

/// Inverse of [`forward`], unnormalized.
fn inverse(plan: &Plan2d, mut spec: Vec<Complex64>, nw: usize, nh: usize) -> Vec<Complex64> {
    plan.cols_inv.process(&mut spec);
    let mut buf = transpose(&spec, nh, nw);
    plan.rows_inv.process(&mut buf);
    buf
}

/// Same-size convolution of `input` with an odd square `kernel`, borders
/// mirrored. Kernel sample `(kx, ky)` sits at offset `(kx - r, ky - r)`.
pub(crate) fn convolve_same(input: &ComplexImage, kernel: &ComplexImage) -> ComplexImage {
    let (w, h) = (input.width(), input.height());
    let side = kernel.width();
    debug_assert_eq!(side, kernel.height());
    debug_assert_eq!(side % 2, 1);
    let r = side / 2;
    if w == 0 || h == 0 {
        return input.clone();
    }
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let (nw, nh) = (fast_len(pw), fast_len(ph));
    let plan = Plan2d::new(nw, nh);
    let zero = Complex64::new(0.0, 0.0);

    let mut a = vec![zero; nw * nh];
    let src = input.samples();
    for py in 0..ph {
        let sy = reflect(py as isize - r as isize, h);
        let row = &src[sy * w..(sy + 1) * w];
        let dst = &mut a[py * nw..py * nw + pw];
        for (px, d) in dst.iter_mut().enumerate() {
            *d = row[reflect(px as isize - r as isize, w)];
        }
    }

    let mut b = vec![zero; nw * nh];
    for ky in 0..side {
        let oy = (ky as isize - r as isize).rem_euclid(nh as isize) as usize;
        for kx in 0..side {
            let ox = (kx as isize - r as isize).rem_euclid(nw as isize) as usize;
            b[oy * nw + ox] = kernel.get(kx, ky);
        }
    }

    let fa = forward(&plan, a, nw, nh);
    let fb = forward(&plan, b, nw, nh);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let full = inverse(&plan, prod, nw, nh);

    let norm = 1.0 / (nw * nh) as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let base = (y + r) * nw + r;
        out.extend(full[base..base + w].iter().map(|c| c * norm));
    }
    ComplexImage::from_samples_unchecked(w, h, out)
}

/// Direct spatial convolution; used as an independent check of the
/// frequency-domain path.
#[cfg(test)]
pub(crate) fn convolve_same_direct(input: &ComplexImage, kernel: &ComplexImage) -> ComplexImage {
    let (w, h) = (input.width(), input.height());
    let side = kernel.width();
    let r = (side / 2) as isize;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = Complex64::new(0.0, 0.0);
            for ky in 0..side as isize {
                for kx in 0..side as isize {
                    let sx = reflect(x - (kx - r), w);
                    let sy = reflect(y - (ky - r), h);
                    acc += kernel.get(kx as usize, ky as usize) * input.get(sx, sy);
                }
            }
            out.push(acc);
        }
    }
    ComplexImage::from_samples_unchecked(w, h, out)
}
