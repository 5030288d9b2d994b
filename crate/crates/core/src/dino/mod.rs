//! Self-distillation pretraining of the ViT backbone.
//!
//! A student and a teacher share one architecture (backbone plus projection
//! head). The teacher sees the two global crops of each image, the student
//! sees every crop, and the student is trained by SGD to match the centred,
//! sharpened teacher distribution on all pairs of different views. The
//! teacher follows the student by an exponential moving average and is
//! never differentiated.

mod head;
mod log;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{multi_crop, CropSpec, ImageTensor, RasterImage};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::vit::{backward, embed, encode, forward_train, init_backbone, patchify, ViTConfig, WeightStore};

pub use head::{head_backward, head_forward, head_forward_cached, head_layers, head_shapes, init_head, HeadCache, HEAD_PREFIX};
pub use log::{LogEntry, LogSummary, TrainingLog};

const GLOBAL_VIEWS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DinoConfig {
    pub student_temperature: f64,
    pub teacher_temperature: f64,
    pub ema_momentum: f64,
    pub center_momentum: f64,
    pub prototype_dim: usize,
    pub head_hidden: usize,
    pub head_layers: usize,
    /// Head weight scale `gain/√fan_in`; 0 falls back to σ = 0.02.
    pub head_init_gain: f64,
    pub local_view_count: usize,
    pub learning_rate: f64,
    /// Global L2 bound on the student gradient; 0 disables clipping.
    pub grad_clip: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for DinoConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl DinoConfig {
    /// Settings for the mini backbone on small synthetic images.
    pub fn toy() -> Self {
        Self {
            student_temperature: 0.1,
            teacher_temperature: 0.04,
            ema_momentum: 0.996,
            center_momentum: 0.9,
            prototype_dim: 64,
            head_hidden: 128,
            head_layers: 3,
            head_init_gain: 1.0,
            local_view_count: 2,
            learning_rate: 0.03,
            grad_clip: 3.0,
            steps: 200,
            batch_size: 8,
        }
    }

    /// Head and crop sizes of the full-size recipe.
    pub fn reference() -> Self {
        Self { prototype_dim: 4096, head_hidden: 2048, local_view_count: 8, ..Self::toy() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.teacher_temperature > 0.0 && self.teacher_temperature < self.student_temperature) {
            return bad(format!(
                "need 0 < teacher temperature ({}) < student temperature ({})",
                self.teacher_temperature, self.student_temperature
            ));
        }
        for (name, v) in [("ema_momentum", self.ema_momentum), ("center_momentum", self.center_momentum)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.prototype_dim == 0 || self.head_hidden == 0 || self.head_layers == 0 || self.batch_size == 0 {
            return bad("prototype_dim, head_hidden, head_layers and batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.head_init_gain >= 0.0 && self.head_init_gain.is_finite()) {
            return bad(format!("head init gain must be finite and non-negative, got {}", self.head_init_gain));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return bad(format!("gradient clip must be finite and non-negative, got {}", self.grad_clip));
        }
        Ok(())
    }

    pub fn crop_spec(&self, cfg: &ViTConfig) -> CropSpec {
        CropSpec::for_input(cfg.input_size, cfg.patch_size, self.local_view_count)
    }
}

#[derive(Clone, Debug)]
pub struct DinoState {
    pub cfg: ViTConfig,
    pub student: WeightStore,
    pub teacher: WeightStore,
    pub center: Tensor,
    pub step: u64,
}

/// Random student, identical teacher, zero centre.
pub fn init(cfg: &ViTConfig, dcfg: &DinoConfig, rng: &mut Rng) -> Result<DinoState> {
    dcfg.validate()?;
    let mut student = init_backbone(cfg, rng)?;
    init_head(&mut student, cfg.dim, dcfg.head_hidden, dcfg.prototype_dim, dcfg.head_layers, dcfg.head_init_gain, rng)?;
    Ok(DinoState {
        cfg: cfg.clone(),
        teacher: student.clone(),
        student,
        center: Tensor::zeros(&[dcfg.prototype_dim]),
        step: 0,
    })
}

fn softmax_f64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax_f64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Centred, sharpened teacher distribution for each row.
pub fn teacher_probs(teacher_logits: &Tensor, center: &Tensor, tau_t: f64) -> Result<Vec<Vec<f64>>> {
    let (v, k) = teacher_logits.dims2()?;
    if center.len() != k {
        return Err(Error::Shape(format!("center of length {} for {k} prototypes", center.len())));
    }
    Ok((0..v)
        .map(|i| {
            let z: Vec<f64> = teacher_logits
                .row(i)
                .iter()
                .zip(center.data())
                .map(|(&z, &c)| (z as f64 - c as f64) / tau_t)
                .collect();
            softmax_f64(&z)
        })
        .collect())
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn check_views(student_logits: &Tensor, teacher_logits: &Tensor) -> Result<(usize, usize, usize)> {
    let (vs, k) = student_logits.dims2()?;
    let (vt, kt) = teacher_logits.dims2()?;
    if k != kt {
        return Err(Error::Shape(format!("student has {k} prototypes, teacher {kt}")));
    }
    if vs == 0 || vt == 0 {
        return Err(Error::InvalidArgument("dino loss needs at least one view on each side".into()));
    }
    if pair_count(vs, vt) == 0 {
        return Err(Error::InvalidArgument("no pair of distinct views".into()));
    }
    Ok((vs, vt, k))
}

fn pair_count(vs: usize, vt: usize) -> usize {
    vt * vs - vt.min(vs)
}

/// Mean cross-entropy `H(p_t, p_s)` over all (teacher view, student view)
/// pairs with different view indices. View `i` of the teacher and view `i`
/// of the student are crops of the same kind, global views first.
pub fn dino_loss(student_logits: &Tensor, teacher_logits: &Tensor, center: &Tensor, dcfg: &DinoConfig) -> Result<f64> {
    dino_loss_with_grad(student_logits, teacher_logits, center, dcfg).map(|(l, _)| l)
}

/// Loss and its gradient with respect to the student logits, with the
/// teacher distribution held constant.
pub fn dino_loss_with_grad(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    center: &Tensor,
    dcfg: &DinoConfig,
) -> Result<(f64, Tensor)> {
    let (vs, vt, k) = check_views(student_logits, teacher_logits)?;
    let pt = teacher_probs(teacher_logits, center, dcfg.teacher_temperature)?;
    let tau_s = dcfg.student_temperature;
    let pairs = pair_count(vs, vt) as f64;
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f32; vs * k];
    for j in 0..vs {
        let z: Vec<f64> = student_logits.row(j).iter().map(|&v| v as f64 / tau_s).collect();
        let log_ps = log_softmax_f64(&z);
        let mut target = vec![0.0f64; k];
        let mut n = 0usize;
        for (i, p) in pt.iter().enumerate() {
            if i == j {
                continue;
            }
            n += 1;
            for kk in 0..k {
                loss -= p[kk] * log_ps[kk];
                target[kk] += p[kk];
            }
        }
        for kk in 0..k {
            grad[j * k + kk] = ((n as f64 * log_ps[kk].exp() - target[kk]) / (tau_s * pairs)) as f32;
        }
    }
    let loss = loss / pairs;
    Ok((loss, Tensor::matrix(vs, k, grad)?))
}

/// `c' = m·c + (1 − m)·mean_rows(batch)`.
pub fn update_center(center: &Tensor, teacher_logits: &Tensor, m: f64) -> Result<Tensor> {
    let mean = row_mean(teacher_logits)?;
    mix_center(center, &mean, m)
}

fn row_mean(x: &Tensor) -> Result<Tensor> {
    let (n, k) = x.dims2()?;
    if n == 0 {
        return Err(Error::InvalidArgument("center update on an empty batch".into()));
    }
    let mut acc = vec![0.0f64; k];
    for r in 0..n {
        for (a, &v) in acc.iter_mut().zip(x.row(r)) {
            *a += v as f64;
        }
    }
    Tensor::vector(acc.into_iter().map(|a| (a / n as f64) as f32).collect())
}

fn mix_center(center: &Tensor, mean: &Tensor, m: f64) -> Result<Tensor> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidArgument(format!("center momentum must lie in (0, 1), got {m}")));
    }
    if center.len() != mean.len() {
        return Err(Error::Shape(format!("center of length {} for {} prototypes", center.len(), mean.len())));
    }
    let data = center
        .data()
        .iter()
        .zip(mean.data())
        .map(|(&c, &b)| (m * c as f64 + (1.0 - m) * b as f64) as f32)
        .collect();
    Tensor::new(center.shape().to_vec(), data)
}

/// `teacher ← λ·teacher + (1 − λ)·student` for every parameter.
pub fn update_teacher_ema(teacher: &mut WeightStore, student: &WeightStore, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("EMA momentum must lie in (0, 1), got {lambda}")));
    }
    teacher.check_same_layout(student)?;
    for (name, t) in teacher.iter_mut() {
        let s = student.get(name)?;
        for (tv, &sv) in t.data_mut().iter_mut().zip(s.data()) {
            *tv = (lambda * *tv as f64 + (1.0 - lambda) * sv as f64) as f32;
        }
    }
    Ok(())
}

/// What one step did, with enough detail to replay the centre.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub teacher_entropy: f64,
    pub center_norm: f64,
    /// Student gradient norm before clipping.
    pub grad_norm: f64,
    /// Mean teacher logit row over the batch, before centring.
    pub teacher_batch_mean: Tensor,
}

impl StepRecord {
    pub fn log_entry(&self) -> LogEntry {
        LogEntry {
            step: self.step,
            loss: self.loss,
            teacher_entropy: self.teacher_entropy,
            center_norm: self.center_norm,
        }
    }
}

fn backbone_feature(view: &ImageTensor, ws: &WeightStore, cfg: &ViTConfig) -> Result<Vec<f32>> {
    let tokens = embed(&patchify(view, cfg)?, ws, cfg)?;
    Ok(encode(&tokens, ws, cfg, None)?.row(0).to_vec())
}

struct ImageOutcome {
    loss: f64,
    entropy: f64,
    teacher_logits: Tensor,
    grads: WeightStore,
}

fn image_step(
    views: &[ImageTensor],
    state: &DinoState,
    dcfg: &DinoConfig,
    grad_scale: f32,
) -> Result<ImageOutcome> {
    let cfg = &state.cfg;
    let mut teacher_rows = Vec::with_capacity(GLOBAL_VIEWS * cfg.dim);
    for v in &views[..GLOBAL_VIEWS] {
        teacher_rows.extend(backbone_feature(v, &state.teacher, cfg)?);
    }
    let teacher_logits = head_forward(&Tensor::matrix(GLOBAL_VIEWS, cfg.dim, teacher_rows)?, &state.teacher)?;

    let mut caches = Vec::with_capacity(views.len());
    let mut student_rows = Vec::with_capacity(views.len() * cfg.dim);
    for v in views {
        let (feature, cache) = forward_train(v, &state.student, cfg)?;
        student_rows.extend_from_slice(feature.data());
        caches.push(cache);
    }
    let (student_logits, head_cache) =
        head_forward_cached(&Tensor::matrix(views.len(), cfg.dim, student_rows)?, &state.student)?;

    let (loss, mut d_logits) = dino_loss_with_grad(&student_logits, &teacher_logits, &state.center, dcfg)?;
    let entropy = teacher_probs(&teacher_logits, &state.center, dcfg.teacher_temperature)?
        .iter()
        .map(|p| entropy(p))
        .sum::<f64>()
        / GLOBAL_VIEWS as f64;
    d_logits = d_logits.scale(grad_scale)?;

    let mut grads = state.student.zeros_like();
    let d_features = head_backward(&head_cache, &d_logits, &state.student, &mut grads)?;
    for (v, cache) in caches.iter().enumerate() {
        backward(cache, &Tensor::vector(d_features.row(v).to_vec())?, &state.student, cfg, &mut grads)?;
    }
    Ok(ImageOutcome { loss, entropy, teacher_logits, grads })
}

/// One optimisation step on a batch of images.
///
/// Crops are drawn serially from `rng`; per-image passes run in parallel
/// and are reduced in batch order, so the result does not depend on the
/// thread count.
pub fn train_step(state: &mut DinoState, batch: &[&RasterImage], rng: &mut Rng, dcfg: &DinoConfig) -> Result<StepRecord> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let step = state.step;
    let diverged = |e: Error| match e {
        Error::NonFinite(detail) => Error::Diverged { step, detail },
        other => other,
    };
    let spec = dcfg.crop_spec(&state.cfg);
    let crops: Vec<Vec<ImageTensor>> =
        batch.iter().map(|img| multi_crop(img, rng, &spec)).collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f32;
    let outcomes: Vec<ImageOutcome> = {
        let st = &*state;
        crops
            .par_iter()
            .map(|views| image_step(views, st, dcfg, scale))
            .collect::<Result<_>>()
            .map_err(diverged)?
    };

    let loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / outcomes.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged { step, detail: format!("loss is {loss}") });
    }
    let teacher_entropy = outcomes.iter().map(|o| o.entropy).sum::<f64>() / outcomes.len() as f64;
    let mut grads = state.student.zeros_like();
    let mut teacher_rows = Vec::new();
    for o in &outcomes {
        for (name, g) in grads.iter_mut() {
            g.axpy(1.0, o.grads.get(name)?)?;
        }
        teacher_rows.extend_from_slice(o.teacher_logits.data());
    }
    let k = dcfg.prototype_dim;
    let teacher_batch = Tensor::matrix(teacher_rows.len() / k, k, teacher_rows)?;

    let mut lr = dcfg.learning_rate as f32;
    let grad_norm = grads.iter().flat_map(|(_, g)| g.data()).map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    if dcfg.grad_clip > 0.0 && grad_norm > dcfg.grad_clip {
        lr *= (dcfg.grad_clip / grad_norm) as f32;
    }
    if lr != 0.0 {
        for (name, w) in state.student.iter_mut() {
            w.axpy(-lr, grads.get(name)?).map_err(diverged)?;
        }
    }
    update_teacher_ema(&mut state.teacher, &state.student, dcfg.ema_momentum)?;
    let teacher_batch_mean = row_mean(&teacher_batch)?;
    state.center = mix_center(&state.center, &teacher_batch_mean, dcfg.center_momentum)?;
    state.step += 1;
    Ok(StepRecord {
        step,
        loss,
        teacher_entropy,
        center_norm: state.center.norm_l2(),
        grad_norm,
        teacher_batch_mean,
    })
}

/// Callback invoked after every step with the updated state.
pub type StepObserver<'o> = dyn FnMut(&DinoState, &StepRecord) + 'o;

pub struct PretrainOutput {
    /// Teacher backbone without the projection head.
    pub backbone: WeightStore,
    pub log: TrainingLog,
    pub state: DinoState,
}

/// Runs `dcfg.steps` steps over reshuffled passes through `images`.
pub fn pretrain(
    images: &[RasterImage],
    cfg: &ViTConfig,
    dcfg: &DinoConfig,
    rng: &mut Rng,
    mut observer: Option<&mut StepObserver<'_>>,
) -> Result<PretrainOutput> {
    dcfg.validate()?;
    if images.len() < dcfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "{} images for a batch size of {}",
            images.len(),
            dcfg.batch_size
        )));
    }
    let mut state = init(cfg, dcfg, rng)?;
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut cursor = images.len();
    for _ in 0..dcfg.steps {
        if cursor + dcfg.batch_size > order.len() {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let batch: Vec<&RasterImage> = order[cursor..cursor + dcfg.batch_size].iter().map(|&i| &images[i]).collect();
        cursor += dcfg.batch_size;
        let record = train_step(&mut state, &batch, rng, dcfg)?;
        ::log::debug!("step {} loss {:.6} entropy {:.4}", record.step, record.loss, record.teacher_entropy);
        log.push(record.log_entry());
        if let Some(obs) = observer.as_deref_mut() {
            obs(&state, &record);
        }
    }
    let backbone = state.teacher.filtered(|n| !n.starts_with(HEAD_PREFIX));
    Ok(PretrainOutput { backbone, log, state })
}
