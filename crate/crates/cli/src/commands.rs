use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use hedonic_core::dino::{pretrain as run_pretrain, TrainingLog, HEAD_PREFIX};
use hedonic_core::features::{build_cache, FeatureCache};
use hedonic_core::hedonic::{evaluate, parse_alpha_grid, sweep_csv, Architecture, EvalReport};
use hedonic_core::image_io::load_image_dir;
use hedonic_core::tabular::{describe as describe_records, ingest, prepare, Manifest, PreparedData};
use hedonic_core::vit::{backbone_id, init_backbone, preset, Backbone, WeightStore};
use hedonic_core::{Error, Rng};

use crate::config::RunConfig;

pub const WEIGHTS_FILE: &str = "weights.vhw";
pub const LOG_FILE: &str = "training_log.tsv";
pub const CACHE_FILE: &str = "features.vhfc";
pub const EXCLUDED_FILE: &str = "excluded.txt";
pub const FAILED_FILE: &str = "failed.txt";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const CONFIG_SNAPSHOT: &str = "run_config.toml";

fn load_manifest(cfg: &RunConfig) -> Result<Manifest> {
    let path = cfg.manifest.as_ref().ok_or_else(|| Error::Manifest("no manifest given (use --manifest)".into()))?;
    let manifest = ingest(path).map_err(|e| match e {
        Error::Manifest(_) => e,
        other => Error::Manifest(other.to_string()),
    })?;
    if manifest.records.is_empty() {
        return Err(Error::Manifest(format!("{} lists no properties", path.display())).into());
    }
    Ok(manifest)
}

/// Creates `<out>/<name>` (default `<command>-<timestamp>`, suffixed when
/// taken) and stores the configuration snapshot in it.
fn run_dir(cfg: &RunConfig, command: &str, name: Option<&str>) -> Result<PathBuf> {
    let dir = match name {
        Some(n) => cfg.out.join(n),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let base = cfg.out.join(format!("{command}-{stamp}"));
            let mut dir = base.clone();
            let mut k = 2;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{k}", base.display()));
                k += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join(CONFIG_SNAPSHOT), &cfg.to_toml()?)?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Backbone weights from `--weights`, minus any projection head; a seeded
/// random backbone when no file is given.
fn load_backbone(cfg: &RunConfig) -> Result<(Backbone, String)> {
    let vit = preset(&cfg.preset)?;
    let weights = match &cfg.weights {
        Some(p) => WeightStore::load(p)?.filtered(|n| !n.starts_with(HEAD_PREFIX)),
        None => {
            log::warn!("no --weights given: using a randomly initialised {} backbone", cfg.preset);
            init_backbone(&vit, &mut Rng::new(cfg.seed))?
        }
    };
    let id = backbone_id(&vit, &weights);
    let bb = Backbone::new(vit, weights).with_context(|| format!("weights do not fit preset {}", cfg.preset))?;
    Ok((bb, id))
}

pub fn describe(cfg: &RunConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    print!("{}", describe_records(&manifest.records)?.render());
    Ok(())
}

pub fn pretrain(cfg: &RunConfig, name: Option<&str>) -> Result<()> {
    let dir = cfg.images.as_ref().ok_or_else(|| anyhow!("no image directory given (use --images)"))?;
    let vit = preset(&cfg.preset)?;
    let images: Vec<_> = load_image_dir(dir)?.into_iter().map(|(_, img)| img).collect();
    log::info!("pretraining {} on {} images for {} steps", cfg.preset, images.len(), cfg.dino.steps);
    let mut rng = Rng::new(cfg.seed);
    let out = run_pretrain(&images, &vit, &cfg.dino, &mut rng, None)?;
    let run = run_dir(cfg, "pretrain", name)?;
    out.backbone.save(&run.join(WEIGHTS_FILE))?;
    out.log.save(&run.join(LOG_FILE))?;
    println!("run        {}", run.display());
    println!("weights    {}", run.join(WEIGHTS_FILE).display());
    println!("backbone   {}", backbone_id(&vit, &out.backbone));
    if let Some(s) = out.log.summary(20) {
        print!("{}", s.render(Some(cfg.dino.prototype_dim)));
    }
    Ok(())
}

pub fn extract(cfg: &RunConfig, name: Option<&str>) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let (bb, id) = load_backbone(cfg)?;
    let build = build_cache(&manifest, &bb, &id)?;
    let run = run_dir(cfg, "extract", name)?;
    build.cache.save(&run.join(CACHE_FILE))?;
    let mut excluded = String::new();
    for e in &build.excluded {
        let _ = writeln!(excluded, "{e}");
    }
    write(&run.join(EXCLUDED_FILE), &excluded)?;
    if !build.failed.is_empty() {
        let mut failed = String::new();
        for (p, why) in &build.failed {
            let _ = writeln!(failed, "{p}\t{why}");
        }
        write(&run.join(FAILED_FILE), &failed)?;
    }
    println!("run        {}", run.display());
    println!("cache      {}", run.join(CACHE_FILE).display());
    println!("backbone   {id}");
    println!("dimension  {}", build.cache.dim());
    println!("properties {} with features, {} without images, {} failed", build.cache.len(), build.excluded.len(), build.failed.len());
    Ok(())
}

fn architecture_names(caches: &[FeatureCache]) -> Vec<String> {
    let short: Vec<String> =
        caches.iter().map(|c| c.backbone_id().split('@').next().unwrap_or_default().to_string()).collect();
    short
        .iter()
        .zip(caches)
        .map(|(s, c)| if short.iter().filter(|t| *t == s).count() > 1 { c.backbone_id().to_string() } else { s.clone() })
        .collect()
}

pub fn fit(cfg: &RunConfig, name: Option<&str>) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let grid = parse_alpha_grid(&cfg.alpha_grid)?;
    let caches: Vec<FeatureCache> =
        cfg.caches.iter().map(|p| FeatureCache::load(p).with_context(|| format!("loading {}", p.display()))).collect::<Result<_>>()?;
    if cfg.weights.is_some() && !caches.is_empty() {
        let (_, id) = load_backbone(cfg)?;
        let prefix = format!("{}@", cfg.preset);
        for c in caches.iter().filter(|c| c.backbone_id().starts_with(&prefix)) {
            c.expect_backbone(&id)?;
        }
    }
    // Properties without features in every cache leave the sample, for the
    // baseline too, so all rows share one split.
    let records: Vec<_> =
        manifest.records.iter().filter(|r| caches.iter().all(|c| c.get(&r.id).is_some())).cloned().collect();
    if records.is_empty() {
        return Err(Error::NoFeatures.into());
    }
    if records.len() < manifest.records.len() {
        log::info!("{} of {} properties have features in every cache", records.len(), manifest.records.len());
    }
    let opts = cfg.pipeline();
    let mut prepared: Vec<(String, PreparedData, bool)> = vec![("Baseline".into(), prepare(&records, None, &opts)?, true)];
    for (name, cache) in architecture_names(&caches).into_iter().zip(&caches) {
        prepared.push((name, prepare(&records, Some(cache.vectors()), &opts)?, false));
    }
    let archs: Vec<Architecture> =
        prepared.iter().map(|(n, d, b)| Architecture { name: n.clone(), data: d, baseline: *b }).collect();
    let (report, fits) = evaluate(&archs, &grid)?;

    let run = run_dir(cfg, "fit", name)?;
    write(&run.join(REPORT_TEXT), &report.render())?;
    write(&run.join(REPORT_CSV), &report.to_csv())?;
    let mut taken = BTreeSet::new();
    for f in &fits {
        let mut slug: String = f.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        while !taken.insert(slug.clone()) {
            slug.push('_');
        }
        write(&run.join(format!("sweep_{slug}.csv")), &sweep_csv(&f.sweep))?;
    }
    println!("run        {}", run.display());
    println!("properties {}", records.len());
    print!("{}", report.render());
    Ok(())
}

pub fn report(run: &Path) -> Result<()> {
    let mut found = false;
    let csv = run.join(REPORT_CSV);
    if csv.exists() {
        let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
        print!("{}", EvalReport::parse_csv(&text)?.render());
        found = true;
    }
    let log_path = run.join(LOG_FILE);
    if log_path.exists() {
        let log = TrainingLog::load(&log_path)?;
        match log.summary(20) {
            Some(s) => print!("{}", s.render(None)),
            None => println!("training log is empty"),
        }
        found = true;
    }
    if !found {
        bail!("{} holds neither {REPORT_CSV} nor {LOG_FILE}", run.display());
    }
    Ok(())
}
