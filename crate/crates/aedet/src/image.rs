//! Float image type used throughout the pipeline.
//!
//! Pixels are `f32` in `[0, 1]`, stored as a `(height, width, channels)`
//! array with 1 (grayscale) or 3 (RGB) channels.

use std::path::Path;

use image::DynamicImage;
use ndarray::{Array2, Array3, Zip};

use crate::error::{Error, Result};

/// An image tensor of shape `(height, width, channels)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f32>,
}

impl Image {
    /// Wraps an array as an image. Channels must be 1 or 3 and dimensions
    /// nonzero.
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("image dimensions must be nonzero, got {h}x{w}")));
        }
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("image must have 1 or 3 channels, got {c}")));
        }
        Ok(Image { data })
    }

    /// An all-zero (black) image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Image::new(Array3::zeros((height, width, channels)))
    }

    /// Builds a grayscale image from a 2D array.
    pub fn from_gray(gray: Array2<f32>) -> Result<Self> {
        let (h, w) = gray.dim();
        Image::new(gray.into_shape_with_order((h, w, 1)).expect("same element count"))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f32> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    /// Decodes an image file. 8-bit grayscale inputs stay single-channel;
    /// everything else is converted to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let dynamic = image::open(path).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Image::from_dynamic(&dynamic))
    }

    /// Converts a decoded image to the float representation.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(gray) => {
                let (w, h) = gray.dimensions();
                let mut data = Array3::zeros((h as usize, w as usize, 1));
                for (x, y, p) in gray.enumerate_pixels() {
                    data[[y as usize, x as usize, 0]] = f32::from(p.0[0]) / 255.0;
                }
                Image { data }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                let mut data = Array3::zeros((h as usize, w as usize, 3));
                for (x, y, p) in rgb.enumerate_pixels() {
                    for c in 0..3 {
                        data[[y as usize, x as usize, c]] = f32::from(p.0[c]) / 255.0;
                    }
                }
                Image { data }
            }
        }
    }

    /// Encodes the image as 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let h = self.height() as u32;
        let w = self.width() as u32;
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let result = if self.channels() == 1 {
            let buf = image::GrayImage::from_fn(w, h, |x, y| {
                image::Luma([to_u8(self.data[[y as usize, x as usize, 0]])])
            });
            buf.save(path)
        } else {
            let buf = image::RgbImage::from_fn(w, h, |x, y| {
                image::Rgb([
                    to_u8(self.data[[y as usize, x as usize, 0]]),
                    to_u8(self.data[[y as usize, x as usize, 1]]),
                    to_u8(self.data[[y as usize, x as usize, 2]]),
                ])
            });
            buf.save(path)
        };
        result.map_err(|e| Error::Artifact(format!("writing {}: {e}", path.display())))
    }

    /// Channel-mean grayscale view as a 2D array.
    pub fn to_gray(&self) -> Array2<f32> {
        let (h, w, c) = self.data.dim();
        if c == 1 {
            return self.data.index_axis(ndarray::Axis(2), 0).to_owned();
        }
        let mut out = Array2::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ch in 0..c {
                    acc += self.data[[y, x, ch]];
                }
                out[[y, x]] = acc / c as f32;
            }
        }
        out
    }

    /// Bilinear resize with half-pixel centers. Works for both up- and
    /// downscaling; channels are resampled independently.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape("resize target must be nonzero".into()));
        }
        let (sh, sw, c) = self.data.dim();
        let mut out = Array3::zeros((height, width, c));
        let scale_y = sh as f32 / height as f32;
        let scale_x = sw as f32 / width as f32;
        for y in 0..height {
            let sy = ((y as f32 + 0.5) * scale_y - 0.5).clamp(0.0, (sh - 1) as f32);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let fy = sy - y0 as f32;
            for x in 0..width {
                let sx = ((x as f32 + 0.5) * scale_x - 0.5).clamp(0.0, (sw - 1) as f32);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(sw - 1);
                let fx = sx - x0 as f32;
                for ch in 0..c {
                    let a = self.data[[y0, x0, ch]];
                    let b = self.data[[y0, x1, ch]];
                    let d = self.data[[y1, x0, ch]];
                    let e = self.data[[y1, x1, ch]];
                    let top = a + (b - a) * fx;
                    let bot = d + (e - d) * fx;
                    out[[y, x, ch]] = top + (bot - top) * fy;
                }
            }
        }
        Ok(Image { data: out })
    }

    /// Pads by replicating the border pixels.
    pub fn pad_edge(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let (h, w, c) = self.data.dim();
        let mut out = Array3::zeros((h + top + bottom, w + left + right, c));
        for y in 0..h + top + bottom {
            let sy = y.saturating_sub(top).min(h - 1);
            for x in 0..w + left + right {
                let sx = x.saturating_sub(left).min(w - 1);
                for ch in 0..c {
                    out[[y, x, ch]] = self.data[[sy, sx, ch]];
                }
            }
        }
        Image { data: out }
    }

    /// Clamps every value into `[0, 1]` in place.
    pub fn clamp01(&mut self) {
        self.data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }

    /// Per-element absolute difference. Shapes must match.
    pub fn absdiff(&self, other: &Image) -> Result<Image> {
        if self.data.dim() != other.data.dim() {
            return Err(Error::Shape(format!(
                "absdiff shapes differ: {:?} vs {:?}",
                self.data.dim(),
                other.data.dim()
            )));
        }
        let mut out = Array3::zeros(self.data.dim());
        Zip::from(&mut out)
            .and(&self.data)
            .and(&other.data)
            .for_each(|o, a, b| *o = (a - b).abs());
        Ok(Image { data: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn rejects_bad_channel_count() {
        assert!(Image::new(Array3::zeros((4, 4, 2))).is_err());
        assert!(Image::new(Array3::zeros((0, 4, 1))).is_err());
    }

    #[test]
    fn gray_mean_over_channels() {
        let mut img = Image::zeros(1, 1, 3).unwrap();
        img.data_mut()[[0, 0, 0]] = 0.3;
        img.data_mut()[[0, 0, 1]] = 0.6;
        img.data_mut()[[0, 0, 2]] = 0.9;
        assert_abs_diff_eq!(img.to_gray()[[0, 0]], 0.6, epsilon = 1e-6);
    }

    #[test]
    fn resize_identity_when_same_size() {
        let data = array![[[0.1f32], [0.5]], [[0.9], [0.3]]];
        let img = Image::new(data.clone()).unwrap();
        let resized = img.resize_bilinear(2, 2).unwrap();
        assert_abs_diff_eq!(resized.data()[[0, 1, 0]], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(resized.data()[[1, 0, 0]], 0.9, epsilon = 1e-6);
    }

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = Image::new(Array3::from_elem((8, 6, 1), 0.42)).unwrap();
        let up = img.resize_bilinear(13, 29).unwrap();
        for v in up.data().iter() {
            assert_abs_diff_eq!(*v, 0.42, epsilon = 1e-6);
        }
    }

    #[test]
    fn pad_edge_replicates_border() {
        let data = array![[[1.0f32], [2.0]], [[3.0], [4.0]]];
        let img = Image::new(data).unwrap();
        let padded = img.pad_edge(1, 0, 0, 2);
        assert_eq!(padded.height(), 3);
        assert_eq!(padded.width(), 4);
        assert_abs_diff_eq!(padded.data()[[0, 0, 0]], 1.0);
        assert_abs_diff_eq!(padded.data()[[0, 3, 0]], 2.0);
        assert_abs_diff_eq!(padded.data()[[2, 3, 0]], 4.0);
    }

    #[test]
    fn absdiff_identity_is_zero() {
        let img = Image::new(Array3::from_elem((4, 4, 1), 0.7)).unwrap();
        let d = img.absdiff(&img).unwrap();
        assert!(d.data().iter().all(|v| *v == 0.0));
    }
}
