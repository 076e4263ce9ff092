//! The Arrow model: tokens act as low-rank operators `M_t = I + U diag(s_t) Vᵀ` on a
//! recurrent state, followed by LayerNorm.
//!
//! ```text
//! s_t     = tanh(E[t])
//! h_{t+1} = LN(h_t + U((Vᵀ h_t) ⊙ s_t))
//! logits  = W_out h
//! ```
//!
//! The operator is always applied in factored form, O(d·r) per token.

mod checkpoint;
mod forward;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, vocab_path, write_checkpoint, CheckpointError};
pub use forward::{backward, forward_loss, loss_materialized, Batch, SeqTape, StepCache};
pub use optim::{clip_global_norm, train, AdamW, TrainConfig, TrainReport};

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Floating-point element type: `f32` for training and inference, `f64` for gradient checks.
pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Debug + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + NumAssign + Sum + Debug + Send + Sync + 'static> Scalar for T {}

pub(crate) fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("batch has no prediction positions")]
    DegenerateBatch,
    #[error("tape does not match batch: {0}")]
    TapeMismatch(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
}

pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-5;

/// All trainable tensors, row-major. Gradients use the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub dim: usize,
    pub rank: usize,
    pub vocab: usize,
    pub h0: Vec<F>,
    /// `vocab × rank`
    pub gates: Vec<F>,
    /// `dim × rank`
    pub u: Vec<F>,
    /// `dim × rank`
    pub v: Vec<F>,
    pub gain: Vec<F>,
    pub bias: Vec<F>,
    /// `vocab × dim`
    pub w_out: Vec<F>,
    pub eps: F,
}

pub const TENSOR_NAMES: [&str; 7] = ["h0", "gates", "u", "v", "gain", "bias", "w_out"];

impl<F: Scalar> ModelParams<F> {
    /// Normal(0, 0.02²) for `E`, `U`, `V`, `W_out`; `h0 = 0`, `γ = 1`, `β = 0`.
    pub fn init(vocab: usize, dim: usize, rank: usize, seed: u64) -> Result<Self, ModelError> {
        if rank == 0 || rank > dim || vocab == 0 {
            return Err(ModelError::InvalidShape(format!(
                "need vocab >= 1 and dim >= rank >= 1, got vocab={vocab} dim={dim} rank={rank}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, INIT_STD).expect("valid std");
        let mut draw = |n: usize| -> Vec<F> { (0..n).map(|_| lit(normal.sample(&mut rng))).collect() };
        let gates = draw(vocab * rank);
        let u = draw(dim * rank);
        let v = draw(dim * rank);
        let w_out = draw(vocab * dim);
        Ok(Self {
            dim,
            rank,
            vocab,
            h0: vec![F::zero(); dim],
            gates,
            u,
            v,
            gain: vec![F::one(); dim],
            bias: vec![F::zero(); dim],
            w_out,
            eps: lit(LN_EPS),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<F>| vec![F::zero(); v.len()];
        Self {
            dim: self.dim,
            rank: self.rank,
            vocab: self.vocab,
            h0: z(&self.h0),
            gates: z(&self.gates),
            u: z(&self.u),
            v: z(&self.v),
            gain: z(&self.gain),
            bias: z(&self.bias),
            w_out: z(&self.w_out),
            eps: self.eps,
        }
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> [&Vec<F>; 7] {
        [&self.h0, &self.gates, &self.u, &self.v, &self.gain, &self.bias, &self.w_out]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<F>; 7] {
        [&mut self.h0, &mut self.gates, &mut self.u, &mut self.v, &mut self.gain, &mut self.bias, &mut self.w_out]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let c = |v: &Vec<F>| v.iter().map(|x| G::from(*x).expect("finite")).collect::<Vec<G>>();
        ModelParams {
            dim: self.dim,
            rank: self.rank,
            vocab: self.vocab,
            h0: c(&self.h0),
            gates: c(&self.gates),
            u: c(&self.u),
            v: c(&self.v),
            gain: c(&self.gain),
            bias: c(&self.bias),
            w_out: c(&self.w_out),
            eps: G::from(self.eps).expect("finite"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn check_token(&self, token: u32) -> Result<(), ModelError> {
        if (token as usize) < self.vocab {
            Ok(())
        } else {
            Err(ModelError::TokenOutOfRange { token, vocab: self.vocab })
        }
    }

    /// `s_t = tanh(E[token])`.
    pub fn gate(&self, token: u32) -> Vec<F> {
        let r = self.rank;
        self.gates[token as usize * r..(token as usize + 1) * r].iter().map(|x| x.tanh()).collect()
    }

    /// Apply the operator of `token` to `h`.
    pub fn step(&self, h: &[F], token: u32) -> Result<Vec<F>, ModelError> {
        self.check_token(token)?;
        if h.len() != self.dim {
            return Err(ModelError::InvalidShape(format!("state has {} entries, expected {}", h.len(), self.dim)));
        }
        Ok(self.step_cached(h, token).0)
    }

    /// Run `tokens` from `h0`, one operator application per token.
    pub fn run(&self, tokens: &[u32]) -> Result<Vec<F>, ModelError> {
        let mut h = self.h0.clone();
        for &t in tokens {
            h = self.step(&h, t)?;
        }
        Ok(h)
    }

    pub(crate) fn step_cached(&self, h: &[F], token: u32) -> (Vec<F>, StepCache<F>) {
        let (d, r) = (self.dim, self.rank);
        let s = self.gate(token);
        let mut z = vec![F::zero(); r];
        for i in 0..d {
            let hi = h[i];
            let row = &self.v[i * r..(i + 1) * r];
            for j in 0..r {
                z[j] += row[j] * hi;
            }
        }
        let g: Vec<F> = z.iter().zip(&s).map(|(a, b)| *a * *b).collect();
        let mut pre = h.to_vec();
        for i in 0..d {
            let row = &self.u[i * r..(i + 1) * r];
            let mut acc = F::zero();
            for j in 0..r {
                acc += row[j] * g[j];
            }
            pre[i] += acc;
        }
        let n: F = lit(d as f64);
        let mean = pre.iter().copied().sum::<F>() / n;
        let var = pre.iter().map(|x| (*x - mean) * (*x - mean)).sum::<F>() / n;
        let inv_std = F::one() / (var + self.eps).sqrt();
        let xhat: Vec<F> = pre.iter().map(|x| (*x - mean) * inv_std).collect();
        let out = (0..d).map(|i| self.gain[i] * xhat[i] + self.bias[i]).collect();
        (out, StepCache { token, z, s, g, xhat, inv_std })
    }

    /// `W_out h`, written into `out`.
    pub fn logits_into(&self, h: &[F], out: &mut [F]) {
        let d = self.dim;
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.w_out[k * d..(k + 1) * d];
            let mut acc = F::zero();
            for i in 0..d {
                acc += row[i] * h[i];
            }
            *o = acc;
        }
    }

    pub fn logits(&self, h: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.vocab];
        self.logits_into(h, &mut out);
        out
    }

    /// Dense `I + U diag(tanh(E[token])) Vᵀ`, `dim × dim` row-major. Only for inspection.
    pub fn operator_matrix(&self, token: u32) -> Result<Vec<F>, ModelError> {
        self.check_token(token)?;
        let (d, r) = (self.dim, self.rank);
        let s = self.gate(token);
        let mut m = vec![F::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let mut acc = if i == k { F::one() } else { F::zero() };
                for j in 0..r {
                    acc += self.u[i * r + j] * s[j] * self.v[k * r + j];
                }
                m[i * d + k] = acc;
            }
        }
        Ok(m)
    }
}

/// Numerically stable `log softmax(logits)[target]`.
pub fn log_softmax_at<F: Scalar>(logits: &[F], target: usize) -> F {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = logits.iter().map(|x| (*x - max).exp()).sum::<F>().ln() + max;
    logits[target] - lse
}

/// Softmax in place.
pub fn softmax_in_place<F: Scalar>(logits: &mut [F]) {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in logits.iter_mut() {
        *x /= total;
    }
}
