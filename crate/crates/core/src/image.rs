//! Image decoding, deterministic resizing and channel splitting.

use std::path::Path;

use ::image::ImageReader;

use crate::error::{Error, Result};

/// An 8-bit RGB raster stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImageGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Decodes PNG or JPEG bytes. Grayscale sources are replicated across channels.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        decode_bytes(bytes, "<memory>")
    }

    /// Encodes the image as PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = ::image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("pixel buffer matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, ::image::ImageFormat::Png)
            .expect("in-memory PNG encoding cannot fail");
        out.into_inner()
    }
}

/// One color channel as a grid of real-valued filtration values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ChannelGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid values must be finite, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Applies `v -> f(v)` to every value. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Rotates the grid by 90 degrees counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut values = Vec::with_capacity(w * h);
        for y in 0..w {
            for x in 0..h {
                values.push(self.get(w - 1 - y, x));
            }
        }
        Self {
            width: h,
            height: w,
            values,
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                values.push(self.get(x, y));
            }
        }
        Self { values, ..*self }
    }

    pub fn flip_vertical(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for y in (0..self.height).rev() {
            values.extend_from_slice(&self.values[y * self.width..(y + 1) * self.width]);
        }
        Self { values, ..*self }
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for x in 0..self.width {
            for y in 0..self.height {
                values.push(self.get(x, y));
            }
        }
        Self {
            width: self.height,
            height: self.width,
            values,
        }
    }
}

/// Loads a PNG or JPEG file as 8-bit RGB.
pub fn load_image(path: &Path) -> Result<RgbImageGrid> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    decode_bytes(&bytes, &path.display().to_string())
}

fn decode_bytes(bytes: &[u8], origin: &str) -> Result<RgbImageGrid> {
    let decode_err = |message: String| Error::Decode {
        path: origin.to_string(),
        message,
    };
    let reader = ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    match reader.format() {
        Some(::image::ImageFormat::Png) | Some(::image::ImageFormat::Jpeg) => {}
        Some(other) => return Err(decode_err(format!("unsupported format {other:?}"))),
        None => return Err(decode_err("unrecognized image format".into())),
    }
    let rgb = reader
        .decode()
        .map_err(|e| decode_err(e.to_string()))?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| p.0).collect();
    RgbImageGrid::new(w as usize, h as usize, pixels)
}

/// Source coordinate and interpolation weight along one axis for bilinear
/// sampling with half-pixel centers.
fn sample_axis(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
        .clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Bilinear resize with half-pixel centers, rounded to nearest and clamped.
///
/// Resizing to the current dimensions returns an identical grid.
pub fn resize(img: &RgbImageGrid, width: usize, height: usize) -> Result<RgbImageGrid> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xs: Vec<_> = (0..width)
        .map(|x| sample_axis(x, width, img.width))
        .collect();
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, fy) = sample_axis(y, height, img.height);
        for &(x0, x1, fx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            let mut out = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            pixels.push(out);
        }
    }
    RgbImageGrid::new(width, height, pixels)
}

/// Splits an image into its R, G and B channel grids (0-255 scale retained).
pub fn split_channels(img: &RgbImageGrid) -> [ChannelGrid; 3] {
    std::array::from_fn(|c| ChannelGrid {
        width: img.width,
        height: img.height,
        values: img.pixels.iter().map(|p| p[c] as f64).collect(),
    })
}

/// Recombines three channel grids into an image. Values must be integral in 0..=255.
pub fn merge_channels(channels: &[ChannelGrid; 3]) -> Result<RgbImageGrid> {
    let (w, h) = (channels[0].width, channels[0].height);
    if channels.iter().any(|c| c.width != w || c.height != h) {
        return Err(Error::InvalidArgument(
            "channel grids differ in size".into(),
        ));
    }
    let to_u8 = |v: f64| -> Result<u8> {
        if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
            Ok(v as u8)
        } else {
            Err(Error::InvalidArgument(format!(
                "{v} is not an 8-bit intensity"
            )))
        }
    };
    let pixels = (0..w * h)
        .map(|i| {
            Ok([
                to_u8(channels[0].values[i])?,
                to_u8(channels[1].values[i])?,
                to_u8(channels[2].values[i])?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    RgbImageGrid::new(w, h, pixels)
}
