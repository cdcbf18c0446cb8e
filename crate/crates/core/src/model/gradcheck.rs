use rand::seq::index::sample;

use super::{AvcModel, Result};
use crate::scalar::SplitMix64;
use crate::tensor::gradcheck::relative_error;
use crate::tensor::Tensor;

/// Probe step for whole-network checks. A bias nudge shifts every
/// pre-activation of a channel at once, so the generic 1e-4 step often
/// crosses a ReLU or max-pool switch; in `f64` the rounding error at 1e-6 is
/// still far below the tolerances used.
pub const MODEL_STEP: f64 = 1e-6;

/// Agreement between analytic and central-difference gradients for one
/// parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    /// Number of coordinates probed.
    pub checked: usize,
    pub analytic_norm: f64,
    pub rel_error: f64,
}

fn sse(
    model: &AvcModel<f64>,
    img: &Tensor<f64>,
    audio: Option<&Tensor<f64>>,
    target: &Tensor<f64>,
) -> Result<f64> {
    let pred = model.predict(img, audio)?;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

/// Compares backprop against central differences of the pixel-summed
/// squared error, probing at most `max_entries` coordinates of every
/// parameter tensor, drawn without replacement from `seed`.
pub fn gradient_check(
    model: &AvcModel<f64>,
    img: &Tensor<f64>,
    audio: Option<&Tensor<f64>>,
    target: &Tensor<f64>,
    max_entries: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<ParamCheck>> {
    let mut rng = SplitMix64::new(seed);
    let mut analytic = model.clone();
    analytic.accumulate_gradients(img, audio, target, 1.0)?;
    let mut probe = model.clone();
    let mut report = Vec::with_capacity(model.params().len());
    for (pi, p) in analytic.params().iter().enumerate() {
        let grad = p
            .grad
            .as_ref()
            .expect("every parameter receives a gradient");
        let n = p.value.len();
        let mut picks = sample(&mut rng, n, max_entries.clamp(1, n)).into_vec();
        picks.sort_unstable();
        let mut numeric = Vec::with_capacity(picks.len());
        for &i in &picks {
            let orig = probe.params()[pi].value.data()[i];
            probe.params_mut()[pi].value.data_mut()[i] = orig + step;
            let up = sse(&probe, img, audio, target)?;
            probe.params_mut()[pi].value.data_mut()[i] = orig - step;
            let down = sse(&probe, img, audio, target)?;
            probe.params_mut()[pi].value.data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
        let exact: Vec<f64> = picks.iter().map(|&i| grad[i]).collect();
        report.push(ParamCheck {
            name: p.name.clone(),
            checked: picks.len(),
            analytic_norm: exact.iter().map(|v| v * v).sum::<f64>().sqrt(),
            rel_error: relative_error(&exact, &numeric),
        });
    }
    Ok(report)
}
