//! Row-major 2D grids used for images, masks and heatmaps, plus the small set
//! of filtering and resampling kernels shared by the physics and augmentation
//! code.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`; the grid
//! covers `[-0.5, width - 0.5] x [-0.5, height - 0.5]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Floating point image. Intensities are normalized to `[0, 1]` unless stated.
pub type Image = Grid2<f64>;

/// Class-id mask, one `u8` label per pixel.
pub type Mask = Grid2<u8>;

impl<T: Clone> Grid2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid2<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid2<U> {
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid2<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Grid2<f64> {
    /// `(min, max)` over all pixels; `(inf, -inf)` for an empty grid.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Bilinear lookup with clamp-to-edge outside the grid.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resampling of this grid to `width x height`, aligning pixel
    /// areas (not pixel centers) of source and destination.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Image {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Grid2::from_fn(width, height, |x, y| {
            self.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    pub fn write_png16(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 2);
        for &v in &self.data {
            let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            bytes.extend_from_slice(&q.to_be_bytes());
        }
        write_png(path, self.width, self.height, png::BitDepth::Sixteen, &bytes)
    }

    pub fn read_png16(path: &Path) -> Result<Image> {
        let (w, h, depth, bytes) = read_png(path)?;
        if depth != png::BitDepth::Sixteen {
            return Err(Error::Png {
                path: path.into(),
                message: format!("expected 16-bit grayscale, found {depth:?}"),
            });
        }
        let data = bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect();
        Grid2::from_vec(w, h, data)
    }
}

impl Grid2<u8> {
    pub fn write_png8(&self, path: &Path) -> Result<()> {
        write_png(path, self.width, self.height, png::BitDepth::Eight, &self.data)
    }

    pub fn read_png8(path: &Path) -> Result<Mask> {
        let (w, h, depth, bytes) = read_png(path)?;
        if depth != png::BitDepth::Eight {
            return Err(Error::Png {
                path: path.into(),
                message: format!("expected 8-bit grayscale, found {depth:?}"),
            });
        }
        Grid2::from_vec(w, h, bytes)
    }

    /// Nearest-neighbour resampling (labels must not be blended).
    pub fn resize_nearest(&self, width: usize, height: usize) -> Mask {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Grid2::from_fn(width, height, |x, y| {
            let xs = (((x as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(self.width - 1);
            let ys = (((y as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(self.height - 1);
            *self.get(xs, ys)
        })
    }
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<()> {
    let png_err = |e: png::EncodingError| Error::Png {
        path: path.into(),
        message: e.to_string(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

fn read_png(path: &Path) -> Result<(usize, usize, png::BitDepth, Vec<u8>)> {
    let png_err = |e: png::DecodingError| Error::Png {
        path: path.into(),
        message: e.to_string(),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Png {
            path: path.into(),
            message: format!("expected grayscale, found {:?}", info.color_type),
        });
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.bit_depth, buf))
}

/// Writes grids back to back as little-endian float32.
pub fn write_raw_f32<'a>(path: &Path, grids: impl IntoIterator<Item = &'a Image>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for g in grids {
        for &v in g.as_slice() {
            w.write_all(&(v as f32).to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a little-endian float32 stack of `count` grids of `width x height`.
pub fn read_raw_f32(path: &Path, width: usize, height: usize, count: usize) -> Result<Vec<Image>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let expected = width * height * count;
    if bytes.len() != expected * 4 {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() / 4,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(values
        .chunks_exact((width * height).max(1))
        .take(count)
        .map(|c| Grid2::from_vec(width, height, c.to_vec()).expect("chunk sized to grid"))
        .collect())
}

/// Normalized, sampled 1D Gaussian truncated at `ceil(3 sigma)`.
/// `sigma <= 0` yields the identity kernel `[1.0]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with an odd-length, centered kernel applied along x
/// then y, replicating edge pixels.
pub fn convolve_separable(img: &Image, kernel: &[f64]) -> Image {
    let r = (kernel.len() / 2) as i64;
    let (w, h) = img.dims();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let horiz: Image = Grid2::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * *img.get(clamp(x as i64 + i as i64 - r, w), y))
            .sum()
    });
    Grid2::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * *horiz.get(x, clamp(y as i64 + i as i64 - r, h)))
            .sum()
    })
}

/// Gaussian blur with edge replication.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    convolve_separable(img, &gaussian_kernel(sigma))
}

/// 3x3 convolution with edge replication.
pub fn convolve3x3(img: &Image, kernel: &[[f64; 3]; 3]) -> Image {
    let (w, h) = img.dims();
    Grid2::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (dy, row) in kernel.iter().enumerate() {
            for (dx, k) in row.iter().enumerate() {
                let xs = (x as i64 + dx as i64 - 1).clamp(0, w as i64 - 1) as usize;
                let ys = (y as i64 + dy as i64 - 1).clamp(0, h as i64 - 1) as usize;
                acc += k * img.get(xs, ys);
            }
        }
        acc
    })
}
