use std::io::Cursor;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use super::FaceError;

/// 8-bit raster, row-major, channels interleaved (1 = gray, 3 = RGB).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for FaceImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FaceImage({}x{}x{})", self.width, self.height, self.channels)
    }
}

impl FaceImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self, FaceError> {
        if !(channels == 1 || channels == 3) || width * height * channels != pixels.len() {
            return Err(FaceError::BadShape { width, height, channels, len: pixels.len() });
        }
        Ok(FaceImage { width, height, channels, pixels })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        FaceImage { width, height, channels, pixels: vec![value; width * height * channels] }
    }

    pub fn from_fn_rgb(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        FaceImage { width, height, channels: 3, pixels }
    }

    pub fn from_fn_gray(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        FaceImage { width, height, channels: 1, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        let ch = self.channels;
        self.pixels[(y * self.width + x) * ch + c] = v;
    }

    /// BT.601 luma, rounded to 8 bits.
    pub fn to_gray(&self) -> FaceImage {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self.pixels.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
        FaceImage { width: self.width, height: self.height, channels: 1, pixels }
    }

    pub fn to_rgb(&self) -> FaceImage {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        FaceImage { width: self.width, height: self.height, channels: 3, pixels }
    }

    /// Mirror around the vertical axis.
    pub fn flip_horizontal(&self) -> FaceImage {
        let mut out = self.clone();
        let (w, ch) = (self.width, self.channels);
        for y in 0..self.height {
            for x in 0..w {
                let src = (y * w + (w - 1 - x)) * ch;
                let dst = (y * w + x) * ch;
                out.pixels[dst..dst + ch].copy_from_slice(&self.pixels[src..src + ch]);
            }
        }
        out
    }

    /// Decodes PNG or JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<FaceImage, FaceError> {
        let img = image::load_from_memory(bytes).map_err(|e| FaceError::Undecodable(e.to_string()))?;
        Ok(Self::from_dynamic(img))
    }

    pub fn open(path: impl AsRef<std::path::Path>) -> Result<FaceImage, FaceError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    pub fn from_dynamic(img: DynamicImage) -> FaceImage {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                FaceImage { width: w as usize, height: h as usize, channels: 1, pixels: g.into_raw() }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                FaceImage { width: w as usize, height: h as usize, channels: 3, pixels: rgb.into_raw() }
            }
        }
    }

    /// PNG encoding; deterministic for identical pixels.
    pub fn encode_png(&self) -> Vec<u8> {
        let color = if self.channels == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
        let mut buf = Cursor::new(Vec::new());
        image::write_buffer_with_format(&mut buf, &self.pixels, self.width as u32, self.height as u32, color, ImageFormat::Png)
            .expect("in-memory PNG encoding");
        buf.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<std::path::Path>) -> Result<(), FaceError> {
        std::fs::write(path, self.encode_png())?;
        Ok(())
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_is_validated() {
        assert!(FaceImage::new(2, 2, 3, vec![0; 12]).is_ok());
        assert!(FaceImage::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(FaceImage::new(2, 2, 2, vec![0; 8]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = FaceImage::from_fn_rgb(5, 3, |x, y| [x as u8 * 40, y as u8 * 80, 7]);
        let back = FaceImage::decode(&img.encode_png()).unwrap();
        assert_eq!(back, img);
        let gray = img.to_gray();
        assert_eq!(FaceImage::decode(&gray.encode_png()).unwrap(), gray);
    }

    #[test]
    fn corrupt_bytes_are_undecodable() {
        assert!(matches!(FaceImage::decode(b"not an image"), Err(FaceError::Undecodable(_))));
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = FaceImage::from_fn_rgb(4, 2, |x, y| [x as u8, y as u8, (x * y) as u8]);
        assert_eq!(img.flip_horizontal().get(0, 1, 0), 3);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }
}
