//! Minimal RGB raster with PNG encode/decode and cropping.

use std::io::Cursor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("png decode: {0}")]
    Decode(String),
    #[error("png encode: {0}")]
    Encode(String),
    #[error("unsupported png layout {0}")]
    Layout(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Rgb {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Rgb { width, height, pixels }
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let k = self.offset(x, y);
        [self.pixels[k], self.pixels[k + 1], self.pixels[k + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, c: [u8; 3]) {
        if x < self.width && y < self.height {
            let k = self.offset(x, y);
            self.pixels[k..k + 3].copy_from_slice(&c);
        }
    }

    /// Alpha-blends `c` over the pixel; alpha outside [0,1] is clamped.
    pub fn blend(&mut self, x: u32, y: u32, c: [u8; 3], alpha: f64) {
        if x >= self.width || y >= self.height {
            return;
        }
        let a = alpha.clamp(0.0, 1.0);
        if a == 0.0 {
            return;
        }
        let old = self.get(x, y);
        let mix = |o: u8, n: u8| ((o as f64) * (1.0 - a) + (n as f64) * a).round() as u8;
        self.set(x, y, [mix(old[0], c[0]), mix(old[1], c[1]), mix(old[2], c[2])]);
    }

    /// Copies a rectangle, clipped to the image. Returns `None` when the
    /// clipped rectangle is empty.
    pub fn crop(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> Option<Rgb> {
        let cx0 = x0.clamp(0, self.width as i64) as u32;
        let cy0 = y0.clamp(0, self.height as i64) as u32;
        let cx1 = x1.clamp(0, self.width as i64) as u32;
        let cy1 = y1.clamp(0, self.height as i64) as u32;
        if cx1 <= cx0 || cy1 <= cy0 {
            return None;
        }
        let (w, h) = (cx1 - cx0, cy1 - cy0);
        let mut out = Vec::with_capacity(w as usize * h as usize * 3);
        for y in cy0..cy1 {
            let a = self.offset(cx0, y);
            out.extend_from_slice(&self.pixels[a..a + w as usize * 3]);
        }
        Some(Rgb { width: w, height: h, pixels: out })
    }

    /// Deterministic 8-bit RGB PNG. Empty images are stored as 1×1 black.
    pub fn to_png(&self) -> Vec<u8> {
        let (w, h, px) = if self.width == 0 || self.height == 0 {
            (1, 1, vec![0u8; 3])
        } else {
            (self.width, self.height, self.pixels.clone())
        };
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, w, h);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory png header");
            writer.write_image_data(&px).expect("in-memory png data");
        }
        out
    }

    pub fn from_png(bytes: &[u8]) -> Result<Rgb, RasterError> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| RasterError::Decode(e.to_string()))?;
        let size = reader.output_buffer_size().ok_or_else(|| RasterError::Decode("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| RasterError::Decode(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width, info.height);
        let pixels = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|g| [*g, *g, *g]).collect(),
            png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            other => return Err(RasterError::Layout(format!("{other:?}"))),
        };
        Ok(Rgb { width: w, height: h, pixels })
    }
}
