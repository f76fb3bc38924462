//! Raster containers shared by every stage: planar float images, edge
//! strength maps and binary masks, plus their on-disk encodings.

use std::io::{Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{invalid, Error, Result};

/// Planar image with intensities in `[0, 1]`.
///
/// Channel `c` of pixel `(x, y)` lives at `data[c * w * h + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("empty image ({width}x{height})"));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid!("unsupported channel count {channels}"));
        }
        if data.len() != width * height * channels {
            return Err(invalid!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            ));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(invalid!("intensity {v} outside [0, 1]"));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value.clamp(0.0, 1.0); width * height * channels],
        }
    }

    /// Builds an image from a per-pixel closure returning one value per channel.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = vec![0.0; width * height * channels];
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data[c * width * height + y * width + x] = f(x, y, c).clamp(0.0, 1.0);
                }
            }
        }
        Image {
            width,
            height,
            channels,
            data,
        }
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    /// Bilinear resize; the source is box-filtered first when shrinking.
    pub fn resized(&self, width: usize, height: usize) -> Image {
        let planes = (0..self.channels)
            .flat_map(|c| resize_plane(self.plane(c), self.width, self.height, width, height))
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Image {
            width,
            height,
            channels: self.channels,
            data: planes,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let dynimg = image::open(path)?;
        Ok(Self::from_dynamic(&dynimg))
    }

    pub fn from_dynamic(img: &DynamicImage) -> Image {
        let color = img.color();
        if color.has_color() {
            let rgb = img.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            Image::from_fn(w, h, 3, |x, y, c| rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0)
        } else {
            let g = img.to_luma8();
            let (w, h) = (g.width() as usize, g.height() as usize);
            Image::from_fn(w, h, 1, |x, y, _| g.get_pixel(x as u32, y as u32)[0] as f32 / 255.0)
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let q = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 3 {
            let buf: RgbImage = ImageBuffer::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([q(self.get(x, y, 0)), q(self.get(x, y, 1)), q(self.get(x, y, 2))])
            });
            DynamicImage::ImageRgb8(buf)
        } else {
            let buf: GrayImage = ImageBuffer::from_fn(w, h, |x, y| Luma([q(self.get(x as usize, y as usize, 0))]));
            DynamicImage::ImageLuma8(buf)
        }
    }

    /// Writes PNG, PGM or PPM depending on the extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let img = self.to_dynamic();
        match extension(path).as_deref() {
            Some("pgm") | Some("ppm") | Some("pnm") => {
                let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
                let mut w = std::io::BufWriter::new(file);
                use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
                let (subtype, color) = if self.channels == 3 {
                    (
                        PnmSubtype::Pixmap(SampleEncoding::Binary),
                        image::ExtendedColorType::Rgb8,
                    )
                } else {
                    (
                        PnmSubtype::Graymap(SampleEncoding::Binary),
                        image::ExtendedColorType::L8,
                    )
                };
                let mut encoder = PnmEncoder::new(&mut w).with_subtype(subtype);
                encoder.encode(img.as_bytes(), img.width(), img.height(), color)?;
                Ok(())
            }
            _ => {
                img.save_with_format(path, image::ImageFormat::Png)?;
                Ok(())
            }
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Bilinear resize of a single plane using pixel-center alignment. When
/// shrinking, the source is box-filtered first so that no sample is skipped.
pub(crate) fn resize_plane(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let fx = sw as f32 / dw as f32;
    let fy = sh as f32 / dh as f32;
    // box prefilter on downscale
    let box_r = |f: f32| if f > 1.0 { (f * 0.5).floor() as isize } else { 0 };
    let (rx, ry) = (box_r(fx), box_r(fy));
    let filtered;
    let src = if rx > 0 || ry > 0 {
        filtered = box_blur(src, sw, sh, rx as usize, ry as usize);
        &filtered[..]
    } else {
        src
    };
    let mut out = vec![0.0; dw * dh];
    for y in 0..dh {
        let sy = ((y as f32 + 0.5) * fy - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = sy - y0 as f32;
        for x in 0..dw {
            let sx = ((x as f32 + 0.5) * fx - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = sx - x0 as f32;
            let a = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let b = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out[y * dw + x] = a * (1.0 - ty) + b * ty;
        }
    }
    out
}

fn box_blur(src: &[f32], w: usize, h: usize, rx: usize, ry: usize) -> Vec<f32> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(rx);
            let hi = (x + rx).min(w - 1);
            let s: f32 = src[y * w + lo..=y * w + hi].iter().sum();
            tmp[y * w + x] = s / (hi - lo + 1) as f32;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(ry);
        let hi = (y + ry).min(h - 1);
        for x in 0..w {
            let s: f32 = (lo..=hi).map(|yy| tmp[yy * w + x]).sum();
            out[y * w + x] = s / (hi - lo + 1) as f32;
        }
    }
    out
}

/// Per-pixel edge strengths in `[0, 1]`.
///
/// `orientation` holds the edge-normal angle (radians, `[0, pi)`) used by
/// the last non-maximum suppression pass. Keeping it makes thinning
/// idempotent: a second pass compares against the same directions.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    strength: Vec<f32>,
    thinned: bool,
    orientation: Option<Vec<f32>>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, strength: Vec<f32>) -> Result<Self> {
        if strength.len() != width * height {
            return Err(invalid!(
                "edge map length {} does not match {width}x{height}",
                strength.len()
            ));
        }
        if let Some(v) = strength.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(invalid!("edge strength {v} outside [0, 1]"));
        }
        Ok(EdgeMap {
            width,
            height,
            strength,
            thinned: false,
            orientation: None,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            strength: vec![0.0; width * height],
            thinned: false,
            orientation: None,
        }
    }

    /// Clamps values into `[0, 1]` (non-finite become 0).
    pub fn from_clamped(width: usize, height: usize, mut strength: Vec<f32>) -> Self {
        assert_eq!(strength.len(), width * height);
        for v in &mut strength {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        EdgeMap {
            width,
            height,
            strength,
            thinned: false,
            orientation: None,
        }
    }

    pub(crate) fn with_thinning(mut self, orientation: Vec<f32>) -> Self {
        self.thinned = true;
        self.orientation = Some(orientation);
        self
    }

    /// Marks a map as thinned without orientation information (e.g. a map
    /// decoded from disk that was thinned when written).
    pub fn mark_thinned(mut self) -> Self {
        self.thinned = true;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.strength
    }

    pub fn is_thinned(&self) -> bool {
        self.thinned
    }

    pub fn orientation(&self) -> Option<&[f32]> {
        self.orientation.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.strength[y * self.width + x]
    }

    /// Zeroes every value below `t`, preserving the thinning flag.
    pub fn thresholded(&self, t: f32) -> EdgeMap {
        let mut out = self.clone();
        for v in &mut out.strength {
            if *v < t {
                *v = 0.0;
            }
        }
        out
    }

    pub fn binarize(&self, t: f32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.strength.iter().map(|&v| v >= t && v > 0.0).collect(),
        }
    }

    pub fn max(&self) -> f32 {
        self.strength.iter().copied().fold(0.0, f32::max)
    }

    pub fn resized(&self, width: usize, height: usize) -> EdgeMap {
        let data = resize_plane(&self.strength, self.width, self.height, width, height);
        EdgeMap::from_clamped(width, height, data)
    }

    /// 8-bit grayscale PNG, strength x 255 rounded.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: GrayImage = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.get(x as usize, y as usize) * 255.0).round() as u8])
        });
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<EdgeMap> {
        let g = image::open(path)?.to_luma8();
        let data = g.pixels().map(|p| p[0] as f32 / 255.0).collect();
        EdgeMap::new(g.width() as usize, g.height() as usize, data)
    }

    /// Raw little-endian float encoding: `"EDGM"`, u32 width, u32 height,
    /// then `width * height` f32 values in row-major order.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.strength.len());
        out.extend_from_slice(b"EDGM");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.strength {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<EdgeMap> {
        if bytes.len() < 12 || &bytes[..4] != b"EDGM" {
            return Err(Error::Format("missing EDGM header".into()));
        }
        let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12..];
        if payload.len() != 4 * w * h {
            return Err(Error::Format(format!(
                "EDGM payload is {} bytes, expected {}",
                payload.len(),
                4 * w * h
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EdgeMap::new(w, h, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_raw_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_raw(path: impl AsRef<Path>) -> Result<EdgeMap> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_raw_bytes(&bytes)
    }
}

/// Binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(invalid!("mask length {} does not match {width}x{height}", bits.len()));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Coordinates of set pixels in raster order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Euclidean-disk dilation: a pixel is set if some set pixel lies
    /// within distance `radius` of it.
    pub fn dilate(&self, radius: f32) -> Mask {
        let r = radius.floor() as isize;
        let r2 = radius * radius;
        let offsets: Vec<(isize, isize)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| (dx * dx + dy * dy) as f32 <= r2)
            .collect();
        let mut out = Mask::empty(self.width, self.height);
        for (x, y) in self.points() {
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
        out
    }

    pub fn to_edge_map(&self) -> EdgeMap {
        EdgeMap::from_clamped(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Mask> {
        let g = image::open(path)?.to_luma8();
        Ok(Mask {
            width: g.width() as usize,
            height: g.height() as usize,
            bits: g.pixels().map(|p| p[0] >= 128).collect(),
        })
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_edge_map().write_png(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(0, 1, 1, vec![]).is_err());
        assert!(Image::new(2, 1, 2, vec![0.0; 4]).is_err());
    }

    #[test]
    fn edgm_raw_round_trip() {
        let e = EdgeMap::new(3, 2, vec![0.0, 0.25, 1.0, 0.5, 0.125, 0.75]).unwrap();
        let bytes = e.to_raw_bytes();
        assert_eq!(&bytes[..4], b"EDGM");
        assert_eq!(bytes.len(), 12 + 24);
        assert_eq!(EdgeMap::from_raw_bytes(&bytes).unwrap().data(), e.data());
        assert!(EdgeMap::from_raw_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn dilation_uses_euclidean_disk() {
        let mut m = Mask::empty(21, 21);
        m.set(10, 10, true);
        let d = m.dilate(8.0);
        assert!(d.get(17, 10));
        assert!(d.get(18, 10));
        assert!(!d.get(19, 10));
        // (6, 6) offset has length 8.49
        assert!(!d.get(16, 16));
        assert!(d.get(15, 15));
    }

    #[test]
    fn png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(4, 3, 3, |x, y, c| (x + y + c) as f32 / 10.0);
        let p = dir.path().join("a.png");
        img.write(&p).unwrap();
        let back = Image::read(&p).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        let p = dir.path().join("a.ppm");
        img.write(&p).unwrap();
        assert_eq!(Image::read(&p).unwrap().channels(), 3);
        let g = Image::from_fn(4, 3, 1, |x, _, _| x as f32 / 3.0);
        let p = dir.path().join("g.pgm");
        g.write(&p).unwrap();
        assert_eq!(Image::read(&p).unwrap().channels(), 1);
    }
}
