//! Training loop with validation-based model selection, and the count
//! metrics used to compare models.

use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::audio::{pipeline, AudioError};
use crate::corruption::{CorruptionError, CorruptionSpec, Image};
use crate::ground_truth::{density_from_heads, AnnotationError};
use crate::model::{AvcModel, ModelError};
use crate::scalar::{Real, SplitMix64};
use crate::synth::Scene;
use crate::tensor::{Adam, AdamConfig, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; gradient norms: {}", format_norms(.grad_norms))]
    Diverged {
        epoch: usize,
        batch: usize,
        grad_norms: Vec<(String, f64)>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

fn format_norms(norms: &[(String, f64)]) -> String {
    norms
        .iter()
        .map(|(n, v)| format!("{}={:e}", n, v))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// One training or evaluation example with its inputs precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    /// Seeds the per-sample corruption stream.
    pub index: u64,
    pub image: Image<T>,
    /// Log-mel patch `[1, 96, 64]`.
    pub audio: Tensor<T>,
    /// Density map `[1, H, W]`.
    pub target: Tensor<T>,
    pub count: f64,
}

impl<T: Real> Sample<T> {
    pub fn from_scene(scene: &Scene<T>, index: u64) -> Result<Self> {
        let density = density_from_heads::<T>(&scene.heads)?;
        let (w, h) = (density.width(), density.height());
        let target = density.into_tensor().reshape(&[1, h, w])?;
        Ok(Self {
            index,
            image: scene.image.clone(),
            audio: pipeline(&scene.audio)?.to_input(),
            target,
            count: scene.count() as f64,
        })
    }
}

/// Builds samples from scenes, numbering them from `first_index`.
pub fn samples_from_scenes<T: Real>(
    scenes: &[Scene<T>],
    first_index: u64,
) -> Result<Vec<Sample<T>>> {
    scenes
        .iter()
        .zip(first_index..)
        .map(|(s, i)| Sample::from_scene(s, i))
        .collect()
}

/// Nearest-neighbour resize, used to bring low-resolution corruptions back
/// to the size of the density target.
fn resize_nearest<T: Real>(img: &Image<T>, width: usize, height: usize) -> Image<T> {
    let (sw, sh) = (img.width(), img.height());
    let mut px = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let sy = y * sh / height;
        for x in 0..width {
            let sx = x * sw / width;
            px.extend((0..3).map(|c| img.get(sx, sy, c)));
        }
    }
    Image::new(width, height, px).expect("positive dims")
}

/// Model inputs for every sample, corrupted when a spec is given.
pub fn prepare_images<T: Real>(
    samples: &[Sample<T>],
    corruption: Option<&CorruptionSpec>,
) -> Result<Vec<Tensor<T>>> {
    samples
        .iter()
        .map(|s| {
            let Some(c) = corruption else {
                return Ok(s.image.to_chw());
            };
            let out = c.apply(&s.image, s.index)?;
            let (w, h) = (s.image.width(), s.image.height());
            Ok(if (out.width(), out.height()) == (w, h) {
                out.to_chw()
            } else {
                resize_nearest(&out, w, h).to_chw()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mae: f64,
    /// Root of the mean squared count error.
    pub mse: f64,
    /// `(ground truth, predicted)` counts.
    pub per_sample: Vec<(f64, f64)>,
}

impl EvalResult {
    pub fn from_pairs(per_sample: Vec<(f64, f64)>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(TrainError::Input("cannot evaluate an empty set".into()));
        }
        let n = per_sample.len() as f64;
        let mae = per_sample.iter().map(|(c, p)| (c - p).abs()).sum::<f64>() / n;
        let mse = (per_sample
            .iter()
            .map(|(c, p)| (c - p) * (c - p))
            .sum::<f64>()
            / n)
            .sqrt();
        Ok(Self {
            mae,
            mse,
            per_sample,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,gt_count,pred_count\n");
        for (i, (c, p)) in self.per_sample.iter().enumerate() {
            writeln!(s, "{},{},{}", i, c, p).expect("writing to a String");
        }
        writeln!(s, "# mae={},mse={}", self.mae, self.mse).expect("writing to a String");
        s
    }
}

/// Scores precomputed inputs; `images[i]` pairs with `samples[i]`.
pub fn evaluate_prepared<T: Real>(
    model: &AvcModel<T>,
    samples: &[Sample<T>],
    images: &[Tensor<T>],
) -> Result<EvalResult> {
    if samples.len() != images.len() {
        return Err(TrainError::Input(format!(
            "{} samples but {} images",
            samples.len(),
            images.len()
        )));
    }
    let pairs = samples
        .iter()
        .zip(images)
        .map(|(s, img)| Ok((s.count, model.predict_count(img, Some(&s.audio))?)))
        .collect::<Result<Vec<_>>>()?;
    EvalResult::from_pairs(pairs)
}

pub fn evaluate<T: Real>(
    model: &AvcModel<T>,
    samples: &[Sample<T>],
    corruption: Option<&CorruptionSpec>,
) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(TrainError::Input("cannot evaluate an empty set".into()));
    }
    let images = prepare_images(samples, corruption)?;
    evaluate_prepared(model, samples, &images)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Per-epoch learning-rate multiplier.
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Drives batch shuffling.
    pub seed: u64,
    /// Applied to training and validation images alike.
    pub corruption: Option<CorruptionSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            lr_decay: 0.99,
            weight_decay: 1e-4,
            batch_size: 4,
            max_epochs: 500,
            seed: 0,
            corruption: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be > 0", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} outside (0, 1]", self.lr_decay));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        if let Some(c) = &self.corruption {
            c.validate()?;
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lr={} lr_decay={} weight_decay={} batch_size={} max_epochs={} seed={} corruption={:?}",
            self.lr,
            self.lr_decay,
            self.weight_decay,
            self.batch_size,
            self.max_epochs,
            self.seed,
            self.corruption
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-image loss over the epoch.
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_mse: f64,
}

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_mae,val_mse\n");
    for r in history {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch, r.lr, r.train_loss, r.val_mae, r.val_mse
        )
        .expect("writing to a String");
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest validation MAE.
    pub best: AvcModel<T>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub history: Vec<EpochRecord>,
}

/// One optimizer step on `batch`: the loss is the batch mean of per-image
/// pixel-summed squared errors. Returns that mean.
pub fn train_step<T: Real>(
    model: &mut AvcModel<T>,
    adam: &mut Adam<T>,
    batch: &[(&Tensor<T>, &Sample<T>)],
) -> Result<f64> {
    let weight = T::lit(1.0 / batch.len() as f64);
    let mut total = 0.0;
    for (img, s) in batch {
        total += model
            .accumulate_gradients(img, Some(&s.audio), &s.target, weight)?
            .as_f64();
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(TrainError::Diverged {
            epoch: 0,
            batch: 0,
            grad_norms: grad_norms(model),
        });
    }
    adam.step(model.params_mut())?;
    Ok(loss)
}

fn grad_norms<T: Real>(model: &AvcModel<T>) -> Vec<(String, f64)> {
    model
        .params()
        .iter()
        .map(|p| {
            let n = p.grad.as_ref().map_or(0.0, |g| {
                g.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt()
            });
            (p.name.clone(), n)
        })
        .collect()
}

pub fn adam_for<T: Real>(model: &AvcModel<T>, cfg: &TrainConfig) -> Adam<T> {
    let adam = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    Adam::new(adam, model.params())
}

pub fn train<T: Real>(
    model: AvcModel<T>,
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with(model, train_set, val_set, cfg, |_| {})
}

/// Trains for `cfg.max_epochs`, calling `on_epoch` after each validation.
pub fn train_with<T: Real>(
    mut model: AvcModel<T>,
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Input(format!(
            "need nonempty train and validation sets, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    let corruption = cfg.corruption.as_ref();
    let train_imgs = prepare_images(train_set, corruption)?;
    let val_imgs = prepare_images(val_set, corruption)?;
    let mut adam = adam_for(&model, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(AvcModel<T>, usize, f64)> = None;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        adam.set_lr(lr);
        order.shuffle(&mut SplitMix64::derive(cfg.seed, epoch as u64));
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&i| (&train_imgs[i], &train_set[i]))
                .collect();
            let loss = train_step(&mut model, &mut adam, &batch).map_err(|e| match e {
                TrainError::Diverged { grad_norms, .. } => TrainError::Diverged {
                    epoch: epoch + 1,
                    batch: bi,
                    grad_norms,
                },
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
        }
        let val = evaluate_prepared(&model, val_set, &val_imgs)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_mae: val.mae,
            val_mse: val.mse,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|b| val.mae < b.2) {
            best = Some((model.clone(), epoch + 1, val.mae));
        }
    }
    let (best, best_epoch, best_val_mae) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_mae,
        history,
    })
}
