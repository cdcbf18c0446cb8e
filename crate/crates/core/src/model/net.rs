use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::config::{Layer, ModelConfig, DOWNSAMPLE, FUSION_BLOCKS};
use super::{ModelError, Result};
use crate::audio::{MEL_BANDS, PATCH_FRAMES};
use crate::scalar::{Real, SplitMix64};
use crate::tensor::io::{checkpoint_bytes, read_checkpoint, write_checkpoint};
use crate::tensor::{Graph, Param, Tensor, Var};

pub const FRONTEND_KERNEL: usize = 3;
pub const BACKEND_DILATION: usize = 2;
const BACKEND_KERNEL: usize = 3;
const HEAD_INIT: f64 = 0.01;

/// Per-channel modulation for fusion block `block`.
#[derive(Debug, Clone, Copy)]
pub struct FilmParams {
    pub gamma: Var,
    pub beta: Var,
    pub block: usize,
}

/// Handles into the tape for one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `[1, H, W]` density at input resolution.
    pub density: Var,
    /// `[C, H/8, W/8]` visual features.
    pub visual: Var,
    /// `[C, Ha, Wa]` audio features, when the audio branch ran.
    pub audio: Option<Var>,
    pub film: Vec<FilmParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvcModel<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

fn uniform_tensor<T: Real>(rng: &mut SplitMix64, dims: &[usize], bound: f64) -> Tensor<T> {
    let n = dims.iter().product();
    let data = (0..n).map(|_| T::lit(rng.uniform(-bound, bound))).collect();
    Tensor::new(dims, data).expect("non-empty dims")
}

/// He-uniform `U(±sqrt(6/fan_in))` weights, which keep activation scale
/// through ReLU stacks, and constant biases.
fn conv_params<T: Real>(
    rng: &mut SplitMix64,
    prefix: &str,
    cout: usize,
    cin: usize,
    k: usize,
    bias: f64,
) -> [Param<T>; 2] {
    let bound = (6.0 / (cin * k * k) as f64).sqrt();
    [
        Param::new(
            format!("{}.weight", prefix),
            uniform_tensor(rng, &[cout, cin, k, k], bound),
        ),
        Param::new(
            format!("{}.bias", prefix),
            Tensor::full(&[cout], T::lit(bias)),
        ),
    ]
}

/// FC pair initialised so it emits `bias_value` for every input.
fn identity_fc<T: Real>(prefix: &str, out: usize, input: usize, bias_value: f64) -> [Param<T>; 2] {
    [
        Param::new(format!("{}.weight", prefix), Tensor::zeros(&[out, input])),
        Param::new(
            format!("{}.bias", prefix),
            Tensor::full(&[out], T::lit(bias_value)),
        ),
    ]
}

fn frontend<T: Real>(
    rng: &mut SplitMix64,
    branch: &str,
    layers: &[Layer],
    mut cin: usize,
    bias: f64,
    out: &mut Vec<Param<T>>,
) {
    for (i, layer) in layers.iter().enumerate() {
        if let Layer::Conv(c) = *layer {
            out.extend(conv_params(
                rng,
                &format!("{}.{}", branch, i),
                c,
                cin,
                FRONTEND_KERNEL,
                bias,
            ));
            cin = c;
        }
    }
}

impl<T: Real> AvcModel<T> {
    /// Fresh model. Visual and backend weights come from one seed stream and
    /// audio weights from another, so the same seed gives the same visual
    /// path with or without audio. The γ/β projections start at exactly
    /// γ = 1, β = 0.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Vec::new();
        let mut rng = SplitMix64::derive(config.seed, 0);
        let bias = config.bias_init;
        frontend(&mut rng, "visual", &config.visual, 3, bias, &mut params);
        let mut cin = config.visual_channels();
        for (l, &c) in config.backend.iter().enumerate() {
            params.extend(conv_params(
                &mut rng,
                &format!("backend.{}", l),
                c,
                cin,
                BACKEND_KERNEL,
                bias,
            ));
            cin = c;
        }
        // a small head keeps the first predicted counts near zero instead of
        // in the thousands, whose correction step would kill the ReLUs
        params.push(Param::new(
            "head.weight",
            uniform_tensor(&mut rng, &[1, cin, 1, 1], HEAD_INIT),
        ));
        params.push(Param::new("head.bias", Tensor::zeros(&[1])));
        if config.audio_enabled {
            let mut arng = SplitMix64::derive(config.seed, 1);
            frontend(&mut arng, "audio", &config.audio, 1, bias, &mut params);
            let c = config.audio_channels();
            if config.film_shared {
                let widest = *config.backend.iter().max().expect("six widths");
                params.extend(identity_fc("film.gamma", widest, c, 1.0));
                params.extend(identity_fc("film.beta", widest, c, 0.0));
            } else {
                for (l, &out) in config.backend.iter().enumerate() {
                    params.extend(identity_fc(&format!("film.{}.gamma", l), out, c, 1.0));
                    params.extend(identity_fc(&format!("film.{}.beta", l), out, c, 0.0));
                }
            }
        }
        Ok(Self::from_params(config, params))
    }

    fn from_params(config: ModelConfig, params: Vec<Param<T>>) -> Self {
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        Self {
            config,
            params,
            index,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same weights in another precision.
    pub fn cast<U: Real>(&self) -> AvcModel<U> {
        let params = self
            .params
            .iter()
            .map(|p| Param::new(p.name.clone(), p.value.cast()))
            .collect();
        AvcModel::from_params(self.config.clone(), params)
    }

    /// Replaces the zero γ/β projection weights with `U(±scale)` draws, moving
    /// the model off the identity point (used by gradient checks).
    pub fn randomize_film_weights(&mut self, seed: u64, scale: f64) {
        let mut rng = SplitMix64::new(seed);
        for p in &mut self.params {
            if p.name.starts_with("film.") && p.name.ends_with(".weight") {
                for v in p.value.data_mut() {
                    *v = T::lit(rng.uniform(-scale, scale));
                }
            }
        }
    }

    /// Puts every parameter on the tape, trainable or frozen.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone(), trainable))
            .collect()
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        vars[self.index[name]]
    }

    fn run_frontend(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        branch: &str,
        layers: &[Layer],
        mut x: Var,
    ) -> Result<Var> {
        for (i, layer) in layers.iter().enumerate() {
            x = match layer {
                Layer::Conv(_) => {
                    let w = self.var(vars, &format!("{}.{}.weight", branch, i));
                    let b = self.var(vars, &format!("{}.{}.bias", branch, i));
                    let y = g.conv2d(x, w, b, 1, FRONTEND_KERNEL / 2)?;
                    g.relu(y)
                }
                Layer::Pool => g.max_pool2(x)?,
            };
        }
        Ok(x)
    }

    /// `[3, H, W] -> [C, H/8, W/8]`.
    pub fn visual_forward(&self, g: &mut Graph<T>, vars: &[Var], img: Var) -> Result<Var> {
        let (c, h, w) = g.value(img).chw()?;
        if c != 3 || h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
            return Err(ModelError::Dimension(format!(
                "image must be [3, H, W] with H, W divisible by {}, got {:?}",
                DOWNSAMPLE,
                g.value(img).dims()
            )));
        }
        self.run_frontend(g, vars, "visual", &self.config.visual, img)
    }

    /// `[1, 96, 64] -> [C, Ha, Wa]`.
    pub fn audio_forward(&self, g: &mut Graph<T>, vars: &[Var], patch: Var) -> Result<Var> {
        if !self.config.audio_enabled {
            return Err(ModelError::Contract("model has no audio branch".into()));
        }
        if g.value(patch).dims() != [1, PATCH_FRAMES, MEL_BANDS] {
            return Err(ModelError::Dimension(format!(
                "audio patch must be [1, {}, {}], got {:?}",
                PATCH_FRAMES,
                MEL_BANDS,
                g.value(patch).dims()
            )));
        }
        self.run_frontend(g, vars, "audio", &self.config.audio, patch)
    }

    /// γ_l and β_l from the pooled audio features `AvgP(a_feat)`. Without
    /// audio, constants γ = 1 and β = 0 are substituted.
    pub fn film_params(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        pooled: Option<Var>,
        block: usize,
    ) -> Result<FilmParams> {
        if block >= FUSION_BLOCKS {
            return Err(ModelError::Contract(format!(
                "fusion block {} out of range 0..{}",
                block, FUSION_BLOCKS
            )));
        }
        let width = self.config.backend[block];
        let Some(pooled) = pooled.filter(|_| self.config.audio_enabled) else {
            let gamma = g.constant(Tensor::full(&[width], T::one()));
            let beta = g.constant(Tensor::zeros(&[width]));
            return Ok(FilmParams { gamma, beta, block });
        };
        let mut project = |which: &str| -> Result<Var> {
            if self.config.film_shared {
                let w = self.var(vars, &format!("film.{}.weight", which));
                let b = self.var(vars, &format!("film.{}.bias", which));
                let full = g.fully_connected(pooled, w, b)?;
                if g.value(full).len() == width {
                    Ok(full)
                } else {
                    Ok(g.slice(full, 0, width)?)
                }
            } else {
                let w = self.var(vars, &format!("film.{}.{}.weight", block, which));
                let b = self.var(vars, &format!("film.{}.{}.bias", block, which));
                Ok(g.fully_connected(pooled, w, b)?)
            }
        };
        let gamma = project("gamma")?;
        let beta = project("beta")?;
        Ok(FilmParams { gamma, beta, block })
    }

    /// `ReLU(γ ⊙ dilated_conv(v) + β)`, spatial size preserved.
    pub fn fusion_block(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        v: Var,
        film: &FilmParams,
    ) -> Result<Var> {
        let l = film.block;
        let w = self.var(vars, &format!("backend.{}.weight", l));
        let b = self.var(vars, &format!("backend.{}.bias", l));
        let pad = BACKEND_DILATION * (BACKEND_KERNEL / 2);
        let y = g.conv2d(v, w, b, BACKEND_DILATION, pad)?;
        let m = g.elementwise_affine(y, film.gamma, film.beta)?;
        Ok(g.relu(m))
    }

    /// Full network on an image `[3, H, W]` and, when audio is enabled, a
    /// log-mel patch `[1, 96, 64]`.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        vars: &[Var],
        img: Var,
        audio: Option<Var>,
    ) -> Result<Forward> {
        let visual = self.visual_forward(g, vars, img)?;
        let (audio_feat, pooled) = if self.config.audio_enabled {
            let patch = audio.ok_or_else(|| {
                ModelError::Contract("audio is enabled but no log-mel patch was given".into())
            })?;
            let a = self.audio_forward(g, vars, patch)?;
            let p = g.global_avg_pool(a)?;
            (Some(a), Some(p))
        } else {
            (None, None)
        };
        let mut v = visual;
        let mut film = Vec::with_capacity(FUSION_BLOCKS);
        for l in 0..FUSION_BLOCKS {
            let fp = self.film_params(g, vars, pooled, l)?;
            v = self.fusion_block(g, vars, v, &fp)?;
            film.push(fp);
        }
        let hw = self.var(vars, "head.weight");
        let hb = self.var(vars, "head.bias");
        let head = g.conv2d(v, hw, hb, 1, 0)?;
        let density = g.upsample_bilinear(head, DOWNSAMPLE)?;
        Ok(Forward {
            density,
            visual,
            audio: audio_feat,
            film,
        })
    }

    /// Density map `[1, H, W]` without recording gradients.
    pub fn predict(&self, img: &Tensor<T>, audio: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(img.clone());
        let a = audio.map(|a| g.constant(a.clone()));
        let out = self.forward(&mut g, &vars, x, a)?;
        Ok(g.value(out.density).clone())
    }

    /// Predicted count: the sum of the density map.
    pub fn predict_count(&self, img: &Tensor<T>, audio: Option<&Tensor<T>>) -> Result<f64> {
        Ok(self
            .predict(img, audio)?
            .data()
            .iter()
            .map(|v| v.as_f64())
            .sum())
    }

    /// Pixel-summed squared error against `target` (`[1, H, W]`). Adds
    /// `weight · ∂loss/∂θ` into every parameter's gradient buffer and
    /// returns the unweighted loss.
    pub fn accumulate_gradients(
        &mut self,
        img: &Tensor<T>,
        audio: Option<&Tensor<T>>,
        target: &Tensor<T>,
        weight: T,
    ) -> Result<T> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, true);
        let x = g.constant(img.clone());
        let a = audio.map(|a| g.constant(a.clone()));
        let out = self.forward(&mut g, &vars, x, a)?;
        let t = g.constant(target.clone());
        let loss = g.sse_loss(out.density, t)?;
        let value = g.value(loss).data()[0];
        let scaled = g.scale(loss, weight);
        g.backward(scaled)?;
        for (p, v) in self.params.iter_mut().zip(vars) {
            match g.take_grad(v) {
                Some(grad) => p.accumulate_grad(&grad),
                None => p.accumulate_grad(&vec![T::zero(); p.value.len()]),
            }
        }
        Ok(value)
    }

    /// AVCK bytes of every parameter, in construction order.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint_bytes(self.params.iter().map(|p| (p.name.as_str(), &p.value)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        write_checkpoint(
            &mut out,
            self.params.iter().map(|p| (p.name.as_str(), &p.value)),
        )?;
        out.flush().map_err(io)
    }

    /// Loads weights for `config`; every parameter must be present with the
    /// expected shape, and no extras are allowed.
    pub fn load(config: ModelConfig, path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let entries = read_checkpoint::<T, _>(&mut BufReader::new(file))?;
        let mut model = Self::new(config)?;
        let bad = |msg: String| ModelError::Checkpoint {
            path: path.display().to_string(),
            msg,
        };
        if entries.len() != model.params.len() {
            return Err(bad(format!(
                "{} tensors, model expects {}",
                entries.len(),
                model.params.len()
            )));
        }
        for (name, t) in entries {
            let &i = model
                .index
                .get(&name)
                .ok_or_else(|| bad(format!("unexpected tensor '{}'", name)))?;
            let p = &mut model.params[i];
            if p.value.dims() != t.dims() {
                return Err(bad(format!(
                    "'{}' has dims {:?}, expected {:?}",
                    name,
                    t.dims(),
                    p.value.dims()
                )));
            }
            p.value = t;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig::parse(
            "visual = 4,M,4,M,6,M\naudio = 4,M,6,M\nbackend = 6,5,4,4,3,2\nseed = 3",
            "t",
        )
        .unwrap()
    }

    #[test]
    fn output_matches_input_size() {
        let m = AvcModel::<f32>::new(tiny()).unwrap();
        let img = Tensor::full(&[3, 16, 24], 0.5);
        let audio = Tensor::zeros(&[1, 96, 64]);
        let out = m.predict(&img, Some(&audio)).unwrap();
        assert_eq!(out.dims(), &[1, 16, 24]);
        assert!(out.is_finite());
    }

    #[test]
    fn missing_audio_and_bad_dims() {
        let m = AvcModel::<f32>::new(tiny()).unwrap();
        let img = Tensor::full(&[3, 16, 16], 0.5);
        assert!(matches!(
            m.predict(&img, None),
            Err(ModelError::Contract(_))
        ));
        let odd = Tensor::full(&[3, 12, 16], 0.5);
        let audio = Tensor::zeros(&[1, 96, 64]);
        assert!(matches!(
            m.predict(&odd, Some(&audio)),
            Err(ModelError::Dimension(_))
        ));
        let short = Tensor::zeros(&[1, 90, 64]);
        assert!(m.predict(&img, Some(&short)).is_err());
    }

    #[test]
    fn vision_only_has_no_audio_params() {
        let av = AvcModel::<f32>::new(tiny()).unwrap();
        let v = AvcModel::<f32>::new(tiny().vision_only()).unwrap();
        assert!(v.parameter_count() < av.parameter_count());
        for p in v.params() {
            assert_eq!(&av.param(&p.name).unwrap().value, &p.value, "{}", p.name);
        }
    }

    #[test]
    fn shared_film_is_smaller() {
        let per = AvcModel::<f32>::new(tiny()).unwrap();
        let shared = AvcModel::<f32>::new(ModelConfig {
            film_shared: true,
            ..tiny()
        })
        .unwrap();
        assert!(shared.parameter_count() < per.parameter_count());
        let img = Tensor::full(&[3, 16, 16], 0.3);
        let audio = Tensor::zeros(&[1, 96, 64]);
        assert_eq!(
            shared.predict(&img, Some(&audio)).unwrap().dims(),
            per.predict(&img, Some(&audio)).unwrap().dims()
        );
    }
}
