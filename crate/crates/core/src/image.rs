//! Grayscale image buffer with the sampling and filtering the pipeline needs.

use std::path::Path;

use irisforge_nn::Tensor;

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(width * height, data.len(), "image buffer size mismatch");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Whether `(x, y)` lies within the span of pixel centers.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        const SLACK: f64 = 1e-9;
        x >= -SLACK && y >= -SLACK && x <= self.width as f64 - 1.0 + SLACK && y <= self.height as f64 - 1.0 + SLACK
    }

    /// Bilinear sample at pixel-center coordinates, `None` outside the image.
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        if !self.contains(x, y) {
            return None;
        }
        let x = x.clamp(0.0, self.width as f64 - 1.0);
        let y = y.clamp(0.0, self.height as f64 - 1.0);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn sample_or(&self, x: f64, y: f64, fill: f32) -> f32 {
        self.sample(x, y).unwrap_or(fill)
    }

    pub fn mean(&self) -> f32 {
        self.data.iter().sum::<f32>() / self.data.len() as f32
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum::<f32>() / self.data.len() as f32
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Separable Gaussian blur with clamped borders.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let horizontal = convolve_rows(self, &kernel);
        convolve_cols(&horizontal, &kernel)
    }

    /// Laplacian-of-Gaussian response (blur then 5-point Laplacian).
    pub fn laplacian_of_gaussian(&self, sigma: f64) -> Image {
        let b = self.gaussian_blur(sigma);
        let (w, h) = (self.width, self.height);
        Image::from_fn(w, h, |x, y| {
            let c = b.get(x, y);
            let l = b.get(x.saturating_sub(1), y);
            let r = b.get((x + 1).min(w - 1), y);
            let u = b.get(x, y.saturating_sub(1));
            let d = b.get(x, (y + 1).min(h - 1));
            l + r + u + d - 4.0 * c
        })
    }

    /// Quantize to 8 bits per pixel (round half up, clamped).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        Self::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// Round-trip through 8-bit quantization.
    pub fn quantized(&self) -> Image {
        Image::from_u8(self.width, self.height, &self.to_u8())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8())
            .expect("buffer matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        let gray = img.into_luma8();
        let (w, h) = gray.dimensions();
        Ok(Image::from_u8(w as usize, h as usize, gray.as_raw()))
    }

    /// Network input layout `[1, 1, h, w]` scaled to `[-1, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, 1, self.height, self.width], self.data.iter().map(|&v| v * 2.0 - 1.0).collect())
    }

    /// Inverse of [`Image::to_tensor`] for one `[1, 1, h, w]` (or `[1, h, w]`) item.
    pub fn from_tensor(t: &Tensor) -> Image {
        let s = t.shape();
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        assert_eq!(t.len(), h * w, "expected a single-channel single image");
        Image::new(w, h, t.data().iter().map(|&v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)).collect())
    }
}

pub fn batch_tensor(images: &[&Image]) -> Tensor {
    let items: Vec<Tensor> = images.iter().map(|i| i.to_tensor()).collect();
    Tensor::stack_batch(&items)
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

fn convolve_rows(img: &Image, k: &[f32]) -> Image {
    let r = (k.len() / 2) as i64;
    let w = img.width as i64;
    Image::from_fn(img.width, img.height, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| {
                let xx = (x as i64 + i as i64 - r).clamp(0, w - 1) as usize;
                kv * img.get(xx, y)
            })
            .sum()
    })
}

fn convolve_cols(img: &Image, k: &[f32]) -> Image {
    let r = (k.len() / 2) as i64;
    let h = img.height as i64;
    Image::from_fn(img.width, img.height, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| {
                let yy = (y as i64 + i as i64 - r).clamp(0, h - 1) as usize;
                kv * img.get(x, yy)
            })
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers_exactly() {
        let img = Image::from_fn(5, 4, |x, y| (x * 10 + y) as f32);
        assert_eq!(img.sample(2.0, 3.0), Some(23.0));
        assert_eq!(img.sample(4.0, 3.0), Some(43.0));
        assert_eq!(img.sample(2.5, 1.0), Some(26.0));
        assert_eq!(img.sample(-0.5, 1.0), None);
        assert_eq!(img.sample(4.2, 1.0), None);
    }

    #[test]
    fn blur_preserves_constant_images_and_mass() {
        let flat = Image::filled(16, 16, 0.4);
        let b = flat.gaussian_blur(2.0);
        assert!(b.data().iter().all(|v| (v - 0.4).abs() < 1e-5));
        let lap = flat.laplacian_of_gaussian(1.0);
        assert!(lap.data().iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn tensor_round_trip() {
        let img = Image::from_fn(8, 8, |x, y| ((x + y) % 5) as f32 / 4.0);
        let back = Image::from_tensor(&img.to_tensor());
        assert!(img.mean_abs_diff(&back) < 1e-6);
    }

    #[test]
    fn quantization_is_idempotent() {
        let img = Image::from_fn(8, 8, |x, y| (x as f32 * 0.13 + y as f32 * 0.07).fract());
        let q = img.quantized();
        assert_eq!(q, q.quantized());
    }
}
