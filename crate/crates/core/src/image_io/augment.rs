use super::{normalize, resize_bilinear, ImageTensor, RasterImage};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Multi-crop recipe: two global views plus `local_count` local views.
#[derive(Clone, Debug, PartialEq)]
pub struct CropSpec {
    pub global_size: usize,
    pub local_size: usize,
    /// Fraction of the source area covered by a global crop.
    pub global_scale: (f64, f64),
    pub local_scale: (f64, f64),
    pub local_count: usize,
    pub flip_probability: f64,
    /// Brightness factor is drawn from `1 ± brightness`.
    pub brightness: f64,
}

impl CropSpec {
    /// 224-pixel global views and 96-pixel local views.
    pub fn reference(local_count: usize) -> Self {
        Self::for_input(224, 16, local_count)
    }

    /// Scales the reference recipe to another input size; the local size is
    /// rounded to a whole number of patches.
    pub fn for_input(input_size: usize, patch_size: usize, local_count: usize) -> Self {
        let local = (input_size as f64 * 96.0 / 224.0 / patch_size as f64).round().max(1.0) as usize;
        Self {
            global_size: input_size,
            local_size: local * patch_size,
            global_scale: (0.4, 1.0),
            local_scale: (0.05, 0.4),
            local_count,
            flip_probability: 0.5,
            brightness: 0.4,
        }
    }

    pub fn view_count(&self) -> usize {
        2 + self.local_count
    }

    fn validate(&self) -> Result<()> {
        let ok_scale = |(lo, hi): (f64, f64)| 0.0 < lo && lo <= hi && hi <= 1.0;
        if self.global_size == 0 || self.local_size == 0 {
            return Err(Error::InvalidArgument("crop sizes must be positive".into()));
        }
        if !ok_scale(self.global_scale) || !ok_scale(self.local_scale) {
            return Err(Error::InvalidArgument("crop scales must satisfy 0 < lo <= hi <= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) || !(0.0..1.0).contains(&self.brightness) {
            return Err(Error::InvalidArgument("flip probability or brightness out of range".into()));
        }
        Ok(())
    }
}

/// Random crop covering `scale` of the area with aspect ratio in [3/4, 4/3],
/// resized to `out×out`. Falls back to the whole image after ten misses.
fn random_resized_crop(img: &RasterImage, rng: &mut Rng, scale: (f64, f64), out: usize) -> Result<RasterImage> {
    let (h, w) = (img.height(), img.width());
    let area = (h * w) as f64;
    let (log_lo, log_hi) = ((3.0f64 / 4.0).ln(), (4.0f64 / 3.0).ln());
    for _ in 0..10 {
        let target = area * rng.uniform_range(scale.0, scale.1);
        let aspect = rng.uniform_range(log_lo, log_hi).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let top = rng.below(h - ch + 1);
            let left = rng.below(w - cw + 1);
            return resize_bilinear(&img.crop_rect(top, left, ch, cw), out, out);
        }
    }
    resize_bilinear(img, out, out)
}

fn jitter_brightness(img: &RasterImage, factor: f64) -> RasterImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 * factor).round().clamp(0.0, 255.0) as u8)
        .collect();
    RasterImage::new(img.height(), img.width(), pixels).expect("same dimensions")
}

/// Produces `2 + local_count` augmented views: global views first.
///
/// Each view is an independent random resized crop followed by a
/// horizontal flip with probability `flip_probability` and a multiplicative
/// brightness jitter. The output depends only on `img`, `spec` and the
/// state of `rng`.
pub fn multi_crop(img: &RasterImage, rng: &mut Rng, spec: &CropSpec) -> Result<Vec<ImageTensor>> {
    spec.validate()?;
    let mut views = Vec::with_capacity(spec.view_count());
    for i in 0..spec.view_count() {
        let (scale, size) = if i < 2 {
            (spec.global_scale, spec.global_size)
        } else {
            (spec.local_scale, spec.local_size)
        };
        let mut view = random_resized_crop(img, rng, scale, size)?;
        if rng.bernoulli(spec.flip_probability) {
            view = view.flip_horizontal();
        }
        let factor = rng.uniform_range(1.0 - spec.brightness, 1.0 + spec.brightness);
        view = jitter_brightness(&view, factor);
        views.push(normalize(&view));
    }
    Ok(views)
}
