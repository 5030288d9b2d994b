//! Image decoding, geometric preprocessing and DINO view augmentation.

mod augment;
mod png;
mod ppm;

use std::path::{Path, PathBuf};

pub use augment::{multi_crop, CropSpec};
pub use png::decode_png;
pub use ppm::{decode_ppm, encode_ppm};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel normalisation constants applied by [`normalize`].
pub const CHANNEL_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// An 8-bit RGB raster, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Decode(format!("empty image {height}x{width}")));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::Decode("image dimensions overflow".into()))?;
        if pixels.len() != expected {
            return Err(Error::Decode(format!(
                "{height}x{width} RGB image needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, pixels).expect("positive dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Sub-rectangle copy; the caller guarantees it lies inside the image.
    fn crop_rect(&self, top: usize, left: usize, h: usize, w: usize) -> RasterImage {
        let mut pixels = Vec::with_capacity(h * w * 3);
        for y in top..top + h {
            let start = (y * self.width + left) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        RasterImage { height: h, width: w, pixels }
    }

    fn flip_horizontal(&self) -> RasterImage {
        RasterImage::from_fn(self.height, self.width, |y, x| self.pixel(y, self.width - 1 - x))
    }
}

/// A normalised `3×H×W` tensor, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    /// Wraps an already-normalised `3×H×W` tensor.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        match t.shape() {
            [3, _, _] => Ok(Self(t)),
            s => Err(Error::Shape(format!("image tensor must be 3xHxW, got {s:?}"))),
        }
    }
}

/// Decodes a PPM (P6) or PNG file, chosen by its magic bytes.
pub fn load_image(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode(msg) => Error::Decode(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Every `.ppm` and `.png` file directly inside `dir`, in file-name order.
/// Files that fail to decode are logged and skipped.
pub fn load_image_dir(dir: &Path) -> Result<Vec<(PathBuf, RasterImage)>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("ppm" | "png")) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        match load_image(&path) {
            Ok(img) => out.push((path, img)),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(&png::SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(Error::Decode("unsupported image format (expected PPM P6 or PNG)".into()))
    }
}

pub fn save_ppm(path: &Path, img: &RasterImage) -> Result<()> {
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::file(path, e))
}

fn source_coord(dst: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resampling with half-pixel-centre alignment, edges clamped.
pub fn resize_bilinear(img: &RasterImage, out_h: usize, out_w: usize) -> Result<RasterImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target {out_h}x{out_w}")));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / out_h as f64;
    let sx = img.width as f64 / out_w as f64;
    let cols: Vec<(usize, usize, f64)> = (0..out_w).map(|x| source_coord(x, sx, img.width)).collect();
    let mut pixels = Vec::with_capacity(out_h * out_w * 3);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, sy, img.height);
        for &(x0, x1, fx) in &cols {
            let (p00, p01) = (img.pixel(y0, x0), img.pixel(y0, x1));
            let (p10, p11) = (img.pixel(y1, x0), img.pixel(y1, x1));
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(out_h, out_w, pixels)
}

/// Resizes so the shorter side equals `target`, keeping aspect ratio.
pub fn resize_shorter_side(img: &RasterImage, target: usize) -> Result<RasterImage> {
    let short = img.height.min(img.width) as f64;
    let scale = target as f64 / short;
    let h = ((img.height as f64 * scale).round() as usize).max(target);
    let w = ((img.width as f64 * scale).round() as usize).max(target);
    resize_bilinear(img, h, w)
}

/// `size×size` window at offset `⌊(dim − size)/2⌋` on each axis.
pub fn center_crop(img: &RasterImage, size: usize) -> Result<RasterImage> {
    if size == 0 || size > img.height || size > img.width {
        return Err(Error::InvalidArgument(format!(
            "crop {size} larger than image {}x{}",
            img.height, img.width
        )));
    }
    let top = (img.height - size) / 2;
    let left = (img.width - size) / 2;
    Ok(img.crop_rect(top, left, size, size))
}

/// `(pixel/255 − mean_c)/std_c`, laid out channel-major.
pub fn normalize(img: &RasterImage) -> ImageTensor {
    let (h, w) = (img.height, img.width);
    let mut data = vec![0.0f32; 3 * h * w];
    for (i, px) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = (px[c] as f32 / 255.0 - CHANNEL_MEAN[c]) / CHANNEL_STD[c];
        }
    }
    ImageTensor(Tensor::new(vec![3, h, w], data).expect("finite by construction"))
}

/// Inverse of [`normalize`], rounding to the nearest 8-bit level.
pub fn denormalize(t: &ImageTensor) -> RasterImage {
    let (h, w) = (t.height(), t.width());
    let d = t.0.data();
    RasterImage::from_fn(h, w, |y, x| {
        let i = y * w + x;
        let mut px = [0u8; 3];
        for c in 0..3 {
            let v = (d[c * h * w + i] * CHANNEL_STD[c] + CHANNEL_MEAN[c]) * 255.0;
            px[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        px
    })
}

/// Shorter side of the resize that precedes the centre crop: 256 for a
/// 224 input, scaled proportionally for other input sizes.
pub fn resize_target_for(input_size: usize) -> usize {
    (input_size * 256 + 112) / 224
}

/// Extraction preprocessing: shorter side to [`resize_target_for`], centre
/// crop to `input_size`, normalise.
pub fn preprocess(img: &RasterImage, input_size: usize) -> Result<ImageTensor> {
    let resized = resize_shorter_side(img, resize_target_for(input_size))?;
    let cropped = center_crop(&resized, input_size)?;
    Ok(normalize(&cropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_image(rng: &mut Rng, h: usize, w: usize) -> RasterImage {
        RasterImage::from_fn(h, w, |_, _| {
            [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]
        })
    }

    #[test]
    fn image_dir_sorted_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(4);
        save_ppm(&dir.path().join("b.ppm"), &random_image(&mut rng, 4, 5)).unwrap();
        save_ppm(&dir.path().join("a.PPM"), &random_image(&mut rng, 3, 3)).unwrap();
        std::fs::write(dir.path().join("c.ppm"), b"P6 broken").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"x").unwrap();
        let got = load_image_dir(dir.path()).unwrap();
        let names: Vec<String> = got.iter().map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, vec!["a.PPM", "b.ppm"]);
        assert!(load_image_dir(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let mut rng = Rng::new(1);
        let img = random_image(&mut rng, 7, 5);
        assert_eq!(resize_bilinear(&img, 7, 5).unwrap(), img);
        let flat = RasterImage::from_fn(3, 4, |_, _| [17, 200, 93]);
        for (h, w) in [(1, 1), (9, 2), (31, 64)] {
            let r = resize_bilinear(&flat, h, w).unwrap();
            assert!(r.pixels().chunks(3).all(|p| p == [17, 200, 93]));
        }
        assert!(resize_bilinear(&flat, 0, 3).is_err());
    }

    #[test]
    fn upscale_gradient_matches_closed_form() {
        // Horizontal ramp 0, 40, 80, ..., upscaled 2x: source coordinate of
        // output column x is (x + 0.5)/2 − 0.5, clamped to [0, w−1].
        let w = 6;
        let img = RasterImage::from_fn(3, w, |_, x| [(x * 40) as u8, 0, 255 - (x * 40) as u8]);
        let up = resize_bilinear(&img, 6, 2 * w).unwrap();
        for y in 0..6 {
            for x in 0..2 * w {
                let s = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
                let expect = 40.0 * s;
                let got = up.pixel(y, x);
                assert!((got[0] as f64 - expect).abs() <= 1.0, "x={x}: {} vs {expect}", got[0]);
                assert!((got[2] as f64 - (255.0 - expect)).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn center_crop_offsets() {
        let img = RasterImage::from_fn(4, 4, |y, x| [y as u8, x as u8, 0]);
        let c = center_crop(&img, 2).unwrap();
        assert_eq!(c.pixel(0, 0), [1, 1, 0]);
        assert_eq!(c.pixel(1, 1), [2, 2, 0]);
        let big = RasterImage::from_fn(224, 224, |y, x| [(y % 256) as u8, (x % 256) as u8, 7]);
        assert_eq!(center_crop(&big, 224).unwrap(), big);
        assert!(center_crop(&img, 5).is_err());

        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let h = 1 + rng.below(40);
            let w = 1 + rng.below(40);
            let size = 1 + rng.below(h.min(w));
            let img = RasterImage::from_fn(h, w, |y, x| [y as u8, x as u8, 0]);
            let c = center_crop(&img, size).unwrap();
            assert_eq!(c.pixel(0, 0), [((h - size) / 2) as u8, ((w - size) / 2) as u8, 0]);
            // idempotent at target size
            assert_eq!(center_crop(&c, size).unwrap(), c);
        }
    }

    #[test]
    fn normalize_definition_and_inverse() {
        let zero = RasterImage::from_fn(2, 2, |_, _| [0, 0, 0]);
        let t = normalize(&zero);
        for c in 0..3 {
            let expect = -CHANNEL_MEAN[c] / CHANNEL_STD[c];
            assert!(t.tensor().data()[c * 4..(c + 1) * 4].iter().all(|&v| (v - expect).abs() < 1e-6));
        }
        let mean_px = RasterImage::from_fn(1, 1, |_, _| [124, 0, 0]);
        let v = normalize(&mean_px).tensor().data()[0];
        assert!(v.abs() < 0.5 / 255.0 / CHANNEL_STD[0] + 1e-6, "{v}");

        let mut rng = Rng::new(8);
        let img = random_image(&mut rng, 9, 11);
        let back = denormalize(&normalize(&img));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((*a as i16 - *b as i16).abs() <= 1);
        }
    }

    #[test]
    fn preprocess_is_finite_for_odd_sizes() {
        let mut rng = Rng::new(12);
        for (h, w) in [(1, 1), (3, 500), (300, 240), (224, 224)] {
            let img = random_image(&mut rng, h, w);
            let t = preprocess(&img, 224).unwrap();
            assert_eq!(t.tensor().shape(), &[3, 224, 224]);
            assert!(t.tensor().data().iter().all(|v| v.is_finite()));
        }
        assert_eq!(resize_target_for(224), 256);
        assert_eq!(resize_target_for(32), 37);
    }

    #[test]
    fn load_dispatches_on_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ppm");
        let img = RasterImage::from_fn(2, 3, |y, x| [y as u8, x as u8, 9]);
        save_ppm(&p, &img).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
        std::fs::write(&p, b"GIF89a").unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode(_))));
        assert!(load_image(&dir.path().join("missing.ppm")).is_err());
    }
}
