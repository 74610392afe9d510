//! Raster loading, grayscale conversion, inversion and area downsampling.
//!
//! All pixel planes are `f64` in `[0, 255]`; quantization to 8 bits only
//! happens when an image is written to disk.

use std::fmt;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the ordinary (linear-intensity) grayscale conversion.
pub const ORDINARY_WEIGHTS: [f64; 3] = [0.3, 0.59, 0.11];
/// Weights of the Luma conversion applied to gamma-encoded channels.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];
/// Default gamma encoding exponent.
pub const DEFAULT_GAMMA: f64 = 1.0 / 2.2;

/// Three-plane RGB raster with samples in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl ColorImage {
    pub fn new(
        width: usize,
        height: usize,
        red: Vec<f64>,
        green: Vec<f64>,
        blue: Vec<f64>,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        for (name, plane) in [("red", &red), ("green", &green), ("blue", &blue)] {
            if plane.len() != n {
                return Err(Error::InvalidImage(format!(
                    "{name} plane has {} samples, expected {n}",
                    plane.len()
                )));
            }
            check_range(plane)?;
        }
        Ok(Self {
            width,
            height,
            planes: [red, green, blue],
        })
    }

    /// Builds an image from a per-pixel closure returning `[r, g, b]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c].push(px[c]);
                }
            }
        }
        let [r, g, b] = planes;
        Self::new(width, height, r, g, b)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn red(&self) -> &[f64] {
        &self.planes[0]
    }

    pub fn green(&self) -> &[f64] {
        &self.planes[1]
    }

    pub fn blue(&self) -> &[f64] {
        &self.planes[2]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            for plane in &self.planes {
                bytes.push(quantize(plane[i]));
            }
        }
        write_raster(
            path,
            &bytes,
            self.width,
            self.height,
            ExtendedColorType::Rgb8,
        )
    }
}

/// Which conversion produced a grayscale plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraySource {
    Ordinary,
    Luma,
    External,
}

/// Provenance tag carried by every [`GrayImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: GraySource,
    pub inverted: bool,
}

impl Provenance {
    pub const fn plain(source: GraySource) -> Self {
        Self {
            source,
            inverted: false,
        }
    }

    fn flipped(self) -> Self {
        Self {
            source: self.source,
            inverted: !self.inverted,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.source {
            GraySource::Ordinary => "ordinary",
            GraySource::Luma => "luma",
            GraySource::External => "external",
        };
        if self.inverted {
            write!(f, "inverted-{base}")
        } else {
            f.write_str(base)
        }
    }
}

/// Single-plane intensity raster with samples in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    provenance: Provenance,
}

impl GrayImage {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "plane has {} samples, expected {}",
                data.len(),
                width * height
            )));
        }
        check_range(&data)?;
        Ok(Self {
            width,
            height,
            data,
            provenance,
        })
    }

    /// Builds an externally sourced image from a per-pixel closure.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data, Provenance::plain(GraySource::External))
    }

    /// Like [`GrayImage::new`] but clamps samples into range instead of
    /// rejecting them. Used by renderers whose arithmetic may overshoot by
    /// rounding.
    pub fn from_clamped(
        width: usize,
        height: usize,
        mut data: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) };
        }
        Self::new(width, height, data, provenance)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// 8-bit export, rounding half away from zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_raster(
            path.as_ref(),
            &self.to_bytes(),
            self.width,
            self.height,
            ExtendedColorType::L8,
        )
    }
}

/// Encoding exponent applied to normalized channel values before Luma
/// weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    exponent: f64,
}

impl GammaParams {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma exponent must be positive, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    #[inline]
    pub fn encode(&self, v: f64) -> f64 {
        255.0 * (v / 255.0).powf(self.exponent)
    }
}

impl Default for GammaParams {
    fn default() -> Self {
        Self {
            exponent: DEFAULT_GAMMA,
        }
    }
}

/// Either kind of raster a file may decode to.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    Color(ColorImage),
    Gray(GrayImage),
}

impl LoadedImage {
    pub fn width(&self) -> usize {
        match self {
            LoadedImage::Color(c) => c.width(),
            LoadedImage::Gray(g) => g.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            LoadedImage::Color(c) => c.height(),
            LoadedImage::Gray(g) => g.height(),
        }
    }
}

/// File extensions `load_image` understands.
pub const SUPPORTED_EXTENSIONS: [&str; 5] = ["png", "bmp", "pgm", "ppm", "pnm"];

pub fn is_supported_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| SUPPORTED_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Reads a PNG, BMP or binary PGM/PPM file.
pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

/// Decodes an in-memory raster; `path` is only used for format sniffing
/// fallback and error messages.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<LoadedImage> {
    let format = match image::guess_format(bytes) {
        Ok(f) => f,
        Err(_) => ImageFormat::from_path(path)
            .map_err(|_| Error::UnsupportedFormat(path.display().to_string()))?,
    };
    if !matches!(
        format,
        ImageFormat::Png | ImageFormat::Bmp | ImageFormat::Pnm
    ) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    let reader = ImageReader::with_format(std::io::Cursor::new(bytes), format);
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if decoded.width() == 0 || decoded.height() == 0 {
        return Err(Error::InvalidImage(format!(
            "{} has zero size",
            path.display()
        )));
    }
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    // 8-bit grayscale BMPs are palettized and decode as RGB.
    let has_color = decoded.color().has_color()
        && !(format == ImageFormat::Bmp && {
            let rgb = decoded.to_rgb8();
            rgb.pixels().all(|p| p[0] == p[1] && p[1] == p[2])
        });
    if has_color {
        let rgb = decoded.to_rgb8();
        let raw = rgb.as_raw();
        let plane = |c: usize| {
            raw.iter()
                .skip(c)
                .step_by(3)
                .map(|&v| v as f64)
                .collect::<Vec<_>>()
        };
        ColorImage::new(w, h, plane(0), plane(1), plane(2)).map(LoadedImage::Color)
    } else {
        let luma = match decoded {
            DynamicImage::ImageLuma8(img) => img,
            other => other.to_luma8(),
        };
        let data = luma.as_raw().iter().map(|&v| v as f64).collect();
        GrayImage::new(w, h, data, Provenance::plain(GraySource::External)).map(LoadedImage::Gray)
    }
}

/// Ordinary grayscale: `0.3 R + 0.59 G + 0.11 B` on linear channel values.
pub fn to_gray_ordinary(img: &ColorImage) -> GrayImage {
    let [wr, wg, wb] = ORDINARY_WEIGHTS;
    let data = (0..img.width * img.height)
        .map(|i| {
            (wr * img.planes[0][i] + wg * img.planes[1][i] + wb * img.planes[2][i])
                .clamp(0.0, 255.0)
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
        provenance: Provenance::plain(GraySource::Ordinary),
    }
}

/// Luma grayscale: each channel is gamma encoded as `255 (v/255)^exponent`
/// and then weighted `0.2126 R' + 0.7152 G' + 0.0722 B'`.
pub fn to_gray_luma(img: &ColorImage, gamma: GammaParams) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = (0..img.width * img.height)
        .map(|i| {
            let r = gamma.encode(img.planes[0][i]);
            let g = gamma.encode(img.planes[1][i]);
            let b = gamma.encode(img.planes[2][i]);
            (wr * r + wg * g + wb * b).clamp(0.0, 255.0)
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
        provenance: Provenance::plain(GraySource::Luma),
    }
}

/// Photometric complement `255 - v`. Applying it twice restores both the
/// pixels and the provenance tag.
pub fn invert(img: &GrayImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| 255.0 - v).collect(),
        provenance: img.provenance.flipped(),
    }
}

/// Area-averaging downsample to exactly `target_w x target_h`. Non-integer
/// scale factors are handled with fractional pixel coverage.
pub fn downsample(img: &GrayImage, target_w: usize, target_h: usize) -> Result<GrayImage> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidParameter(
            "target size must be non-zero".into(),
        ));
    }
    if target_w > img.width || target_h > img.height {
        return Err(Error::InvalidParameter(format!(
            "cannot upsample {}x{} to {target_w}x{target_h}",
            img.width, img.height
        )));
    }
    let wx = coverage_weights(img.width, target_w);
    let wy = coverage_weights(img.height, target_h);

    // Horizontal pass: height x target_w.
    let mut rows = vec![0.0; img.height * target_w];
    for y in 0..img.height {
        let src = &img.data[y * img.width..(y + 1) * img.width];
        for (ox, taps) in wx.iter().enumerate() {
            rows[y * target_w + ox] = taps.iter().map(|&(sx, w)| w * src[sx]).sum();
        }
    }
    let mut out = vec![0.0; target_w * target_h];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..target_w {
            let v: f64 = taps
                .iter()
                .map(|&(sy, w)| w * rows[sy * target_w + ox])
                .sum();
            out[oy * target_w + ox] = v.clamp(0.0, 255.0);
        }
    }
    Ok(GrayImage {
        width: target_w,
        height: target_h,
        data: out,
        provenance: img.provenance,
    })
}

/// For each output index, the source indices and normalized coverage weights.
fn coverage_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            if src.is_multiple_of(dst) {
                let k = src / dst;
                let w = 1.0 / k as f64;
                return (o * k..(o + 1) * k).map(|s| (s, w)).collect();
            }
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let mut taps = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let cover = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if cover > 0.0 {
                    taps.push((s, cover / scale));
                }
                s += 1;
            }
            taps
        })
        .collect()
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "zero-sized image {width}x{height}"
        )));
    }
    Ok(())
}

fn check_range(data: &[f64]) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::InvalidImage(format!("sample {v} outside [0, 255]")));
    }
    Ok(())
}

fn write_raster(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    let (w, h) = (width as u32, height as u32);
    let encoded = match ext.as_str() {
        "png" => image::codecs::png::PngEncoder::new(&mut writer).write_image(bytes, w, h, color),
        "bmp" => image::codecs::bmp::BmpEncoder::new(&mut writer).write_image(bytes, w, h, color),
        "pgm" | "ppm" | "pnm" => {
            let subtype = if color == ExtendedColorType::L8 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            PnmEncoder::new(&mut writer)
                .with_subtype(subtype)
                .write_image(bytes, w, h, color)
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "cannot write .{other} files"
            )))
        }
    };
    encoded.map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(r: f64, g: f64, b: f64) -> ColorImage {
        ColorImage::from_fn(2, 2, |_, _| [r, g, b]).unwrap()
    }

    #[test]
    fn ordinary_examples() {
        assert!((to_gray_ordinary(&solid(100.0, 100.0, 100.0)).get(0, 0) - 100.0).abs() < 1e-12);
        assert!((to_gray_ordinary(&solid(255.0, 0.0, 0.0)).get(0, 0) - 76.5).abs() < 1e-12);
        assert!((to_gray_ordinary(&solid(0.0, 0.0, 255.0)).get(0, 0) - 28.05).abs() < 1e-12);
    }

    #[test]
    fn luma_examples() {
        let g = GammaParams::default();
        assert!((to_gray_luma(&solid(255.0, 255.0, 255.0), g).get(1, 1) - 255.0).abs() < 1e-9);
        assert_eq!(to_gray_luma(&solid(0.0, 0.0, 0.0), g).get(1, 1), 0.0);
        // 255 * (100/255)^(1/2.2) = 166.62846...
        let v = to_gray_luma(&solid(100.0, 100.0, 100.0), g).get(0, 1);
        assert!((v - 166.62846).abs() < 1e-4, "{v}");
        assert_eq!(
            to_gray_luma(&solid(1.0, 2.0, 3.0), g)
                .provenance()
                .to_string(),
            "luma"
        );
    }

    #[test]
    fn coefficient_sets_sum_to_one() {
        assert!((ORDINARY_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((LUMA_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(GammaParams::new(0.0).is_err());
        assert!(GammaParams::new(-1.0).is_err());
        assert!(GammaParams::new(f64::NAN).is_err());
        assert!(GammaParams::new(2.2).is_ok());
    }

    #[test]
    fn invert_examples_and_provenance() {
        let g = GrayImage::from_fn(2, 1, |x, _| if x == 0 { 0.0 } else { 100.0 }).unwrap();
        let inv = invert(&g);
        assert_eq!(inv.data(), &[255.0, 155.0]);
        assert_eq!(inv.provenance().to_string(), "inverted-external");
        let back = invert(&inv);
        assert_eq!(back, g);
    }

    #[test]
    fn downsample_checkerboard_to_single_pixel() {
        let g =
            GrayImage::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 255.0 }).unwrap();
        let d = downsample(&g, 1, 1).unwrap();
        assert_eq!(d.data(), &[127.5]);
    }

    #[test]
    fn downsample_paper_geometry_and_non_integer_factor() {
        let g = GrayImage::from_fn(1400, 900, |x, y| ((x * 7 + y * 3) % 256) as f64).unwrap();
        let d = downsample(&g, 350, 225).unwrap();
        assert_eq!((d.width(), d.height()), (350, 225));
        let c = GrayImage::from_fn(10, 7, |_, _| 42.0).unwrap();
        let d = downsample(&c, 3, 4).unwrap();
        assert_eq!((d.width(), d.height()), (3, 4));
        assert!(d.data().iter().all(|v| (v - 42.0).abs() < 1e-12));
        assert!(downsample(&c, 11, 4).is_err());
    }

    #[test]
    fn rejects_out_of_range_and_empty() {
        assert!(
            GrayImage::new(1, 1, vec![256.0], Provenance::plain(GraySource::External)).is_err()
        );
        assert!(GrayImage::new(0, 1, vec![], Provenance::plain(GraySource::External)).is_err());
        assert!(ColorImage::new(1, 1, vec![1.0], vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn roundtrip_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = GrayImage::from_fn(350, 225, |x, y| ((x + 2 * y) % 256) as f64).unwrap();
        for ext in ["png", "bmp", "pgm"] {
            let p = dir.path().join(format!("g.{ext}"));
            g.save(&p).unwrap();
            match load_image(&p).unwrap() {
                LoadedImage::Gray(back) => assert_eq!(back.data(), g.data(), "{ext}"),
                LoadedImage::Color(_) => panic!("{ext} decoded as color"),
            }
        }
        let c = ColorImage::from_fn(1400, 900, |x, y| [(x % 256) as f64, (y % 256) as f64, 9.0])
            .unwrap();
        for ext in ["png", "ppm"] {
            let p = dir.path().join(format!("c.{ext}"));
            c.save(&p).unwrap();
            match load_image(&p).unwrap() {
                LoadedImage::Color(back) => {
                    assert_eq!((back.width(), back.height()), (1400, 900));
                    assert_eq!(back, c, "{ext}");
                }
                LoadedImage::Gray(_) => panic!("{ext} decoded as gray"),
            }
        }
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = GrayImage::from_fn(64, 64, |x, _| x as f64).unwrap();
        let p = dir.path().join("t.png");
        g.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_image(&p).is_err());
        let q = dir.path().join("t.pgm");
        std::fs::write(&q, b"P5\n64 64\n255\n\x01\x02").unwrap();
        assert!(load_image(&q).is_err());
        assert!(load_image(dir.path().join("missing.png")).is_err());
    }

    #[test]
    fn export_rounds_half_away_from_zero() {
        let g = GrayImage::new(
            3,
            1,
            vec![0.5, 1.49, 254.5],
            Provenance::plain(GraySource::External),
        )
        .unwrap();
        assert_eq!(g.to_bytes(), vec![1, 1, 255]);
    }
}
