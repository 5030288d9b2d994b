//! Seeded synthetic data: textured images for pretraining runs, and
//! property listings whose photos carry a hidden quality signal.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image_io::{save_ppm, RasterImage};
use crate::rng::Rng;
use crate::tabular::{write_manifest, PropertyRecord};

/// The two texture families of [`texture_images`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Texture {
    Stripes,
    Checks,
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// One `size × size` image of the given family with random frequency,
/// phase, orientation, palette and pixel noise.
pub fn texture_image(kind: Texture, size: usize, rng: &mut Rng) -> RasterImage {
    let period = rng.uniform_range(4.0, 12.0);
    let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
    let angle = rng.uniform_range(0.0, std::f64::consts::PI);
    let (ca, sa) = (angle.cos(), angle.sin());
    let base: [f64; 3] = [rng.uniform_range(40.0, 120.0), rng.uniform_range(40.0, 120.0), rng.uniform_range(40.0, 120.0)];
    let accent: [f64; 3] = [rng.uniform_range(140.0, 230.0), rng.uniform_range(140.0, 230.0), rng.uniform_range(140.0, 230.0)];
    let noise: Vec<f64> = (0..size * size).map(|_| rng.normal() * 8.0).collect();
    let w = std::f64::consts::TAU / period;
    RasterImage::from_fn(size, size, |y, x| {
        let (u, v) = (x as f64 * ca + y as f64 * sa, -(x as f64) * sa + y as f64 * ca);
        let t = match kind {
            Texture::Stripes => 0.5 + 0.5 * (w * u + phase).sin(),
            Texture::Checks => {
                let s = (w * u + phase).sin() * (w * v + phase).sin();
                if s > 0.0 { 1.0 } else { 0.0 }
            }
        };
        let n = noise[y * size + x];
        let mix = |c: usize| clamp_u8(base[c] + (accent[c] - base[c]) * t + n);
        [mix(0), mix(1), mix(2)]
    })
}

/// `n` images alternating between the two families.
pub fn texture_images(n: usize, size: usize, rng: &mut Rng) -> Vec<RasterImage> {
    (0..n)
        .map(|i| {
            let kind = if i % 2 == 0 { Texture::Stripes } else { Texture::Checks };
            texture_image(kind, size, rng)
        })
        .collect()
}

/// Photo of a property whose latent quality `q` (roughly standard normal)
/// shifts the palette from cool and dull to warm and bright, on top of a
/// random texture.
pub fn quality_image(q: f64, size: usize, rng: &mut Rng) -> RasterImage {
    let kind = if rng.bernoulli(0.5) { Texture::Stripes } else { Texture::Checks };
    let tex = texture_image(kind, size, rng);
    let shift = 45.0 * q.clamp(-2.5, 2.5);
    let px = tex.pixels();
    RasterImage::from_fn(size, size, |y, x| {
        let i = 3 * (y * size + x);
        [
            clamp_u8(px[i] as f64 * 0.6 + 50.0 + shift),
            clamp_u8(px[i + 1] as f64 * 0.6 + 50.0 + 0.3 * shift),
            clamp_u8(px[i + 2] as f64 * 0.6 + 50.0 - shift),
        ]
    })
}

/// Parameters of [`synthetic_listing`].
#[derive(Clone, Debug, PartialEq)]
pub struct ListingSpec {
    pub properties: usize,
    /// Properties listed without photos.
    pub imageless: usize,
    pub image_size: usize,
    pub min_images: usize,
    pub max_images: usize,
    /// $/sqft added per unit of latent quality.
    pub quality_weight: f64,
    /// Standard deviation of the $/sqft noise.
    pub noise: f64,
}

impl Default for ListingSpec {
    fn default() -> Self {
        Self { properties: 300, imageless: 0, image_size: 40, min_images: 2, max_images: 4, quality_weight: 60.0, noise: 15.0 }
    }
}

/// A generated listing together with its hidden quality.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticProperty {
    pub record: PropertyRecord,
    pub quality: f64,
    pub images: Vec<RasterImage>,
}

fn pick<'a>(rng: &mut Rng, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len())]
}

/// Listings whose price per square foot is a hedonic function of the
/// tabular attributes plus `quality_weight · q`, where the quality `q` is
/// visible only in the photos.
pub fn synthetic_listing(spec: &ListingSpec, rng: &mut Rng) -> Result<Vec<SyntheticProperty>> {
    if spec.properties == 0 || spec.imageless > spec.properties || spec.min_images == 0 || spec.max_images < spec.min_images {
        return Err(Error::InvalidArgument(format!("inconsistent listing spec {spec:?}")));
    }
    let regions = ["Central", "North", "South", "East", "Gunbarrel", "Rural"];
    let region_premium = [120.0, 60.0, 20.0, 0.0, 30.0, -40.0];
    let types = ["Condominium", "Town-Home", "Single-Family"];
    let ranks = ["A", "B", "C"];
    (0..spec.properties)
        .map(|i| {
            let q = rng.normal();
            let region = rng.below(regions.len());
            let property_type = pick(rng, &types);
            let living_area = rng.uniform_range(700.0, 4500.0).round();
            let age = rng.uniform_range(0.0, 110.0).round();
            let eschool = pick(rng, &ranks);
            let bedrooms = (1 + rng.below(6)) as u8;
            let drive_cbd = rng.uniform_range(3.0, 40.0).round();
            let lot_area = if rng.bernoulli(0.1) { None } else { Some(rng.uniform_range(1000.0, 30000.0).round()) };
            let ppsf = 350.0 + region_premium[region] - 1.2 * age - 2.0 * drive_cbd
                + if eschool == "A" { 35.0 } else { 0.0 }
                + spec.quality_weight * q
                + spec.noise * rng.normal();
            let ppsf = ppsf.max(40.0);
            let n_images = spec.min_images + rng.below(spec.max_images - spec.min_images + 1);
            let images: Vec<RasterImage> = if i < spec.imageless {
                Vec::new()
            } else {
                (0..n_images).map(|_| quality_image(q, spec.image_size, rng)).collect()
            };
            let id = format!("s{i:04}");
            let record = PropertyRecord {
                images: (0..images.len()).map(|k| format!("img/{id}_{k}.ppm")).collect(),
                id,
                sale_price: (ppsf * living_area).round(),
                lot_area,
                living_area,
                age,
                full_bath: (1 + rng.below(3)) as f64,
                half_bath: rng.below(2) as f64,
                three_quarter_bath: rng.below(2) as f64,
                parking: rng.below(4) as f64,
                hoa_fees: if property_type == "Single-Family" { 0.0 } else { rng.uniform_range(500.0, 6000.0).round() },
                drive_cbd,
                walk_eschool: rng.uniform_range(5.0, 60.0).round(),
                walk_mschool: rng.uniform_range(5.0, 80.0).round(),
                walk_hschool: rng.uniform_range(5.0, 90.0).round(),
                married_pct: rng.uniform_range(20.0, 70.0).round(),
                median_income: rng.uniform_range(40_000.0, 200_000.0).round(),
                population: rng.uniform_range(2_000.0, 40_000.0).round(),
                pool_sauna: if rng.bernoulli(0.2) { None } else { Some(rng.below(2) as u8) },
                solar: if rng.bernoulli(0.3) { None } else { Some(rng.below(2) as u8) },
                eschool_rank: eschool.into(),
                mschool_rank: pick(rng, &ranks).into(),
                hschool_rank: "A".into(),
                region: regions[region].into(),
                bedrooms,
                property_type: property_type.into(),
                crime_level: (1 + rng.below(3)) as u8,
            };
            Ok(SyntheticProperty { record, quality: q, images })
        })
        .collect()
}

/// Writes the photos under `dir/img/` and the manifest to
/// `dir/manifest.json`, returning the manifest path.
pub fn write_listing(dir: &Path, listing: &[SyntheticProperty]) -> Result<PathBuf> {
    let img_dir = dir.join("img");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::file(&img_dir, e))?;
    for p in listing {
        for (rel, img) in p.record.images.iter().zip(&p.images) {
            save_ppm(&dir.join(rel), img)?;
        }
    }
    let path = dir.join("manifest.json");
    let records: Vec<PropertyRecord> = listing.iter().map(|p| p.record.clone()).collect();
    write_manifest(&path, &records)?;
    Ok(path)
}
