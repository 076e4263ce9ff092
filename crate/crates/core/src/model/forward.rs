//! Teacher-forced loss with streaming logits, and its hand-derived gradient.

use super::{lit, log_softmax_at, softmax_in_place, ModelError, ModelParams, Scalar};

/// Intermediates of one operator application, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache<F> {
    pub token: u32,
    /// `Vᵀ h`
    pub z: Vec<F>,
    /// `tanh(E[token])`
    pub s: Vec<F>,
    /// `z ⊙ s`
    pub g: Vec<F>,
    /// normalized pre-activation
    pub xhat: Vec<F>,
    pub inv_std: F,
}

/// Per-sequence record: `states[0] = h0` and `states[t]` is the state after `t` tokens.
#[derive(Clone, Debug)]
pub struct SeqTape<F> {
    pub states: Vec<Vec<F>>,
    pub steps: Vec<StepCache<F>>,
}

/// Sequences padded to a common length; positions at or past `lengths[b]` are masked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub tokens: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn new<S: AsRef<[u32]>>(seqs: &[S], pad: u32) -> Self {
        let width = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        let tokens = seqs
            .iter()
            .map(|s| {
                let mut row = s.as_ref().to_vec();
                row.resize(width, pad);
                row
            })
            .collect();
        let lengths = seqs.iter().map(|s| s.as_ref().len()).collect();
        Self { tokens, lengths }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn width(&self) -> usize {
        self.tokens.first().map_or(0, Vec::len)
    }

    pub fn predictions(&self) -> usize {
        self.lengths.iter().map(|l| l.saturating_sub(1)).sum()
    }
}

/// Mean next-token cross-entropy in nats over all unmasked positions.
///
/// Step `t` consumes `x_t` and scores `x_{t+1}`. Logits for one step live only in a
/// single `|V|`-sized buffer reused across the batch; the sum runs over time, then batch.
pub fn forward_loss<F: Scalar>(
    params: &ModelParams<F>,
    batch: &Batch,
) -> Result<(F, Vec<SeqTape<F>>), ModelError> {
    let count = batch.predictions();
    if count == 0 {
        return Err(ModelError::DegenerateBatch);
    }
    for (row, &len) in batch.tokens.iter().zip(&batch.lengths) {
        for &t in &row[..len] {
            params.check_token(t)?;
        }
    }
    let mut tapes: Vec<SeqTape<F>> = batch
        .lengths
        .iter()
        .map(|&len| SeqTape {
            states: {
                let mut v = Vec::with_capacity(len.max(1));
                v.push(params.h0.clone());
                v
            },
            steps: Vec::with_capacity(len.saturating_sub(1)),
        })
        .collect();
    let mut logits = vec![F::zero(); params.vocab];
    let mut total = F::zero();
    for t in 0..batch.width().saturating_sub(1) {
        for (b, tape) in tapes.iter_mut().enumerate() {
            if t + 1 >= batch.lengths[b] {
                continue;
            }
            let (h, cache) = params.step_cached(&tape.states[t], batch.tokens[b][t]);
            params.logits_into(&h, &mut logits);
            total -= log_softmax_at(&logits, batch.tokens[b][t + 1] as usize);
            tape.states.push(h);
            tape.steps.push(cache);
        }
    }
    Ok((total / lit(count as f64), tapes))
}

/// Reference loss that first materializes every step's logits, then sums them in the
/// same order as [`forward_loss`].
pub fn loss_materialized<F: Scalar>(params: &ModelParams<F>, batch: &Batch) -> Result<F, ModelError> {
    let count = batch.predictions();
    if count == 0 {
        return Err(ModelError::DegenerateBatch);
    }
    let width = batch.width();
    let mut all: Vec<Vec<Option<(Vec<F>, usize)>>> = vec![vec![None; batch.len()]; width.saturating_sub(1)];
    for b in 0..batch.len() {
        let mut h = params.h0.clone();
        for t in 0..batch.lengths[b].saturating_sub(1) {
            h = params.step(&h, batch.tokens[b][t])?;
            all[t][b] = Some((params.logits(&h), batch.tokens[b][t + 1] as usize));
        }
    }
    let mut total = F::zero();
    for row in &all {
        for (logits, target) in row.iter().flatten() {
            total -= log_softmax_at(logits, *target);
        }
    }
    Ok(total / lit(count as f64))
}

/// Exact gradient of the mean loss with respect to every parameter.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    batch: &Batch,
    tapes: &[SeqTape<F>],
) -> Result<ModelParams<F>, ModelError> {
    if tapes.len() != batch.len() {
        return Err(ModelError::TapeMismatch(format!("{} tapes for {} sequences", tapes.len(), batch.len())));
    }
    for (b, tape) in tapes.iter().enumerate() {
        let expected = batch.lengths[b].saturating_sub(1);
        if tape.steps.len() != expected || tape.states.len() != expected + 1 {
            return Err(ModelError::TapeMismatch(format!(
                "sequence {b}: tape has {} steps, batch implies {expected}",
                tape.steps.len()
            )));
        }
        if tape.steps.iter().zip(&batch.tokens[b]).any(|(c, &t)| c.token != t) {
            return Err(ModelError::TapeMismatch(format!("sequence {b}: tokens differ")));
        }
    }
    let count = batch.predictions();
    if count == 0 {
        return Err(ModelError::DegenerateBatch);
    }
    let scale: F = F::one() / lit(count as f64);
    let (d, r, vocab) = (params.dim, params.rank, params.vocab);
    let mut grads = params.zeros_like();
    let mut probs = vec![F::zero(); vocab];
    let mut dz = vec![F::zero(); r];
    let mut dg = vec![F::zero(); r];
    let mut da = vec![F::zero(); d];

    for (b, tape) in tapes.iter().enumerate() {
        let mut dh = vec![F::zero(); d];
        for t in (0..tape.steps.len()).rev() {
            // Readout at the state after t+1 tokens, predicting token t+1.
            let h = &tape.states[t + 1];
            params.logits_into(h, &mut probs);
            softmax_in_place(&mut probs);
            let target = batch.tokens[b][t + 1] as usize;
            probs[target] -= F::one();
            for (k, p) in probs.iter().enumerate() {
                let dl = *p * scale;
                if dl == F::zero() {
                    continue;
                }
                let w_row = &params.w_out[k * d..(k + 1) * d];
                let gw_row = &mut grads.w_out[k * d..(k + 1) * d];
                for i in 0..d {
                    gw_row[i] += dl * h[i];
                    dh[i] += dl * w_row[i];
                }
            }

            // Back through LayerNorm.
            let c = &tape.steps[t];
            let mut dxhat_mean = F::zero();
            let mut dxhat_xhat_mean = F::zero();
            for i in 0..d {
                grads.gain[i] += dh[i] * c.xhat[i];
                grads.bias[i] += dh[i];
                let dx = dh[i] * params.gain[i];
                da[i] = dx;
                dxhat_mean += dx;
                dxhat_xhat_mean += dx * c.xhat[i];
            }
            let n: F = lit(d as f64);
            dxhat_mean /= n;
            dxhat_xhat_mean /= n;
            for i in 0..d {
                da[i] = c.inv_std * (da[i] - dxhat_mean - c.xhat[i] * dxhat_xhat_mean);
            }

            // Back through h + U g, g = (Vᵀ h) ⊙ s, s = tanh(E[token]).
            let h_prev = &tape.states[t];
            dg.iter_mut().for_each(|x| *x = F::zero());
            for i in 0..d {
                let u_row = &params.u[i * r..(i + 1) * r];
                let gu_row = &mut grads.u[i * r..(i + 1) * r];
                for j in 0..r {
                    gu_row[j] += da[i] * c.g[j];
                    dg[j] += u_row[j] * da[i];
                }
            }
            let tok = c.token as usize;
            for j in 0..r {
                dz[j] = dg[j] * c.s[j];
                let ds = dg[j] * c.z[j];
                grads.gates[tok * r + j] += ds * (F::one() - c.s[j] * c.s[j]);
            }
            for i in 0..d {
                let v_row = &params.v[i * r..(i + 1) * r];
                let gv_row = &mut grads.v[i * r..(i + 1) * r];
                let mut acc = da[i];
                for j in 0..r {
                    gv_row[j] += h_prev[i] * dz[j];
                    acc += v_row[j] * dz[j];
                }
                dh[i] = acc;
            }
        }
        for i in 0..d {
            grads.h0[i] += dh[i];
        }
    }
    Ok(grads)
}
