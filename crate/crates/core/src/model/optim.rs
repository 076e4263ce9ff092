//! AdamW with linear warmup, global-norm clipping, and the epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, forward_loss, lit, Batch, ModelError, ModelParams, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub rank: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_fragment_len: usize,
    pub max_sentence_len: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            rank: 8,
            learning_rate: 3e-3,
            warmup_steps: 100,
            epochs: 20,
            batch_size: 16,
            max_fragment_len: crate::corpus::DEFAULT_MAX_FRAGMENT_LEN,
            max_sentence_len: crate::corpus::DEFAULT_MAX_SENTENCE_LEN,
            seed: 42,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    /// Learning rate for 1-based optimizer step `step`: linear ramp from 0, then flat.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / self.warmup_steps as f64
        }
    }
}

/// Decoupled weight decay Adam. Decay applies to the matrices (`E`, `U`, `V`, `W_out`),
/// not to `h0` or the LayerNorm gain and bias.
#[derive(Clone, Debug)]
pub struct AdamW<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: usize,
    m: ModelParams<F>,
    v: ModelParams<F>,
}

const DECAYED: [bool; 7] = [false, true, true, true, false, false, true];

impl<F: Scalar> AdamW<F> {
    pub fn new(params: &ModelParams<F>, config: &TrainConfig) -> Self {
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let (b1f, b2f): (F, F) = (lit(b1), lit(b2));
        let (one_b1, one_b2): (F, F) = (lit(1.0 - b1), lit(1.0 - b2));
        let step_size: F = lit(lr / bc1);
        let bc2_sqrt: F = lit(bc2.sqrt());
        let eps: F = lit(self.eps);
        let decay: F = lit(lr * self.weight_decay);
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        for ((((p, g), m), v), decayed) in ps.into_iter().zip(gs).zip(ms).zip(vs).zip(DECAYED) {
            for i in 0..p.len() {
                m[i] = b1f * m[i] + one_b1 * g[i];
                v[i] = b2f * v[i] + one_b2 * g[i] * g[i];
                if decayed {
                    let shrink = decay * p[i];
                    p[i] -= shrink;
                }
                p[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

/// Scale `grads` so their global ℓ₂ norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<F: Scalar>(grads: &mut ModelParams<F>, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|x| {
            let x = x.to_f64().unwrap_or(f64::NAN);
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale: F = lit(max_norm / norm);
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean nats per predicted token, one entry per epoch.
    pub loss_history: Vec<f64>,
    pub steps: usize,
}

/// Train on `fragments` (each of length ≥ 2). Every epoch reshuffles, groups fragments of
/// equal length into batches, and visits the batches in shuffled order.
pub fn train<F: Scalar>(
    params: &mut ModelParams<F>,
    fragments: &[Vec<u32>],
    pad: u32,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, ModelError> {
    let usable: Vec<usize> = (0..fragments.len()).filter(|&i| fragments[i].len() >= 2).collect();
    if usable.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let batch_size = config.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(params, config);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut rng);
        order.sort_by_key(|&i| fragments[i].len());
        let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
        batches.shuffle(&mut rng);

        let mut nats = 0.0f64;
        let mut count = 0usize;
        for ids in batches {
            let seqs: Vec<&[u32]> = ids.iter().map(|&i| fragments[i].as_slice()).collect();
            let batch = Batch::new(&seqs, pad);
            let (loss, tapes) = forward_loss(params, &batch)?;
            let mut grads = backward(params, &batch, &tapes)?;
            clip_global_norm(&mut grads, config.grad_clip);
            let lr = config.lr_at(opt.steps_taken() + 1);
            opt.update(params, &grads, lr);
            let n = batch.predictions();
            nats += loss.to_f64().unwrap_or(f64::NAN) * n as f64;
            count += n;
        }
        let mean = nats / count as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok(TrainReport { loss_history: history, steps: opt.steps_taken() })
}
