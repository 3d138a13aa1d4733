//! Raster carriers: real grayscale, complex and RGB images.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Grayscale raster with samples in `[0, 1]`, row-major. 0 is black, 1 white.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        GrayImage {
            width,
            height,
            samples: vec![fill.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image from row-major samples, clamping each into `[0, 1]`.
    pub fn from_samples(width: usize, height: usize, mut samples: Vec<f64>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::Domain(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        for s in &mut samples {
            *s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
        }
        Ok(GrayImage {
            width,
            height,
            samples,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.samples[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Darkens a pixel: keeps the minimum of the current and new value.
    #[inline]
    pub fn darken(&mut self, x: usize, y: usize, value: f64) {
        let s = &mut self.samples[y * self.width + x];
        *s = s.min(value.clamp(0.0, 1.0));
    }

    /// Pixel value with coordinates outside the raster mapped to `outside`.
    #[inline]
    fn at_or(&self, x: isize, y: isize, outside: f64) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            outside
        } else {
            self.samples[y as usize * self.width + x as usize]
        }
    }

    /// Catmull-Rom bicubic sample at a real pixel position. Pixel centres are
    /// at integer coordinates. Taps outside the raster read `outside`.
    pub fn sample_bicubic(&self, x: f64, y: f64, outside: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let wx = cubic_weights(x - x0);
        let wy = cubic_weights(y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        // Entirely outside (with the 2-pixel kernel reach): skip the taps.
        if xi < -2 || yi < -2 || xi > self.width as isize + 1 || yi > self.height as isize + 1 {
            return outside;
        }
        let interior = xi >= 1
            && yi >= 1
            && ((xi + 2) as usize) < self.width
            && ((yi + 2) as usize) < self.height;
        let mut acc = 0.0;
        if interior {
            for (j, wyj) in wy.iter().enumerate() {
                let row = (yi - 1 + j as isize) as usize * self.width;
                let base = row + (xi - 1) as usize;
                let r = &self.samples[base..base + 4];
                acc += wyj * (wx[0] * r[0] + wx[1] * r[1] + wx[2] * r[2] + wx[3] * r[3]);
            }
        } else {
            for (j, wyj) in wy.iter().enumerate() {
                let yy = yi - 1 + j as isize;
                let mut row = 0.0;
                for (i, wxi) in wx.iter().enumerate() {
                    row += wxi * self.at_or(xi - 1 + i as isize, yy, outside);
                }
                acc += wyj * row;
            }
        }
        acc.clamp(0.0, 1.0)
    }

    /// Half-resolution copy, each output pixel the mean of a 2x2 block. An
    /// odd last row or column is dropped.
    pub fn downsample2(&self) -> GrayImage {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let r0 = &self.samples[2 * y * self.width..];
            let r1 = &self.samples[(2 * y + 1) * self.width..];
            for x in 0..w {
                out.push(0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]));
            }
        }
        GrayImage {
            width: w,
            height: h,
            samples: out,
        }
    }

    pub fn rotate90_cw(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        // new (x', y') = (h-1-y, x)
        GrayImage::from_fn(h, w, |xn, yn| self.get(yn, h - 1 - xn))
    }

    pub fn rotate180(&self) -> GrayImage {
        let mut samples = self.samples.clone();
        samples.reverse();
        GrayImage {
            width: self.width,
            height: self.height,
            samples,
        }
    }

    pub fn rotate90_ccw(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        GrayImage::from_fn(h, w, |xn, yn| self.get(w - 1 - yn, xn))
    }

    /// Mean of the samples inside the half-open pixel rectangle, clipped to
    /// the raster.
    pub fn mean_in(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let (x1, y1) = (x1.min(self.width), y1.min(self.height));
        if x0 >= x1 || y0 >= y1 {
            return 0.0;
        }
        let mut acc = 0.0;
        for y in y0..y1 {
            acc += self.samples[y * self.width + x0..y * self.width + x1]
                .iter()
                .sum::<f64>();
        }
        acc / ((x1 - x0) * (y1 - y0)) as f64
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let bytes = self
            .samples
            .iter()
            .map(|&s| (s * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches dimensions")
    }

    pub fn from_luma8(img: &image::GrayImage) -> Self {
        GrayImage {
            width: img.width() as usize,
            height: img.height() as usize,
            samples: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    /// Loads a PNG or TIFF; colour input is converted to luminance.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()?;
        Ok(Self::from_luma8(&img.to_luma8()))
    }

    /// Saves as 8-bit grayscale; the format follows the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_luma8().save(path.as_ref())?;
        Ok(())
    }
}

/// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 from the floor sample.
#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Complex-valued raster, row-major. Carrier for filter kernels, the
/// orientation tensor field and symmetry responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    width: usize,
    height: usize,
    samples: Vec<Complex64>,
}

impl ComplexImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        ComplexImage {
            width,
            height,
            samples: vec![Complex64::new(0.0, 0.0); width * height],
        }
    }

    pub fn from_samples(width: usize, height: usize, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::Domain(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("complex image has non-finite samples".into()));
        }
        Ok(ComplexImage {
            width,
            height,
            samples,
        })
    }

    pub(crate) fn from_samples_unchecked(
        width: usize,
        height: usize,
        samples: Vec<Complex64>,
    ) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        ComplexImage {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.samples[y * self.width + x]
    }

    /// Bilinear interpolation, clamped to the raster.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Complex64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.norm()).collect()
    }

    pub fn scale(&self, alpha: Complex64) -> ComplexImage {
        ComplexImage {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|c| c * alpha).collect(),
        }
    }
}

/// 8-bit RGB raster used for annotated output.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn from_gray(gray: &GrayImage) -> Self {
        ColorImage {
            width: gray.width(),
            height: gray.height(),
            pixels: gray
                .samples()
                .iter()
                .map(|&s| {
                    let v = (s * 255.0).round().clamp(0.0, 255.0) as u8;
                    [v, v, v]
                })
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = rgb;
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size matches dimensions")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path.as_ref())?;
        Ok(())
    }
}
