use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng as _;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::layers::*;
use super::tensor::Tensor;
use crate::error::bail;
use crate::rng::seeded;
use crate::Result;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const SE_REDUCTION: usize = 4;
pub const L2_DEFAULT: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv1d { kernel: usize, out: usize },
    BatchNorm { eps: f64 },
    Relu,
    MaxPool,
    Se { reduction: usize },
    GlobalPool,
    Dense { out: usize },
    Softmax,
}

impl LayerSpec {
    /// Sizes of the parameter tensors, in storage order.
    fn param_count(&self, length: usize, channels: usize) -> Vec<usize> {
        match *self {
            LayerSpec::Conv1d { kernel, out } => alloc::vec![kernel * channels * out, out],
            LayerSpec::BatchNorm { .. } => alloc::vec![channels, channels],
            LayerSpec::Se { reduction } => {
                let h = channels / reduction;
                alloc::vec![h * channels, h, channels * h, channels]
            }
            LayerSpec::Dense { out } => alloc::vec![out * length * channels, out],
            _ => Vec::new(),
        }
    }
}

/// Input shape plus the ordered layer list.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_length: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// conv(2,16) → bn → relu → pool → conv(2,32) → bn → relu → pool → [se] →
    /// global pool → dense(2) → softmax.
    pub fn reference(feature_length: usize, se: bool) -> Result<Self> {
        if feature_length < 4 {
            bail!(InvalidInput, "feature length must be at least 4, got {feature_length}");
        }
        let mut layers = alloc::vec![
            LayerSpec::Conv1d { kernel: 2, out: 16 },
            LayerSpec::BatchNorm { eps: BN_EPS },
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            LayerSpec::Conv1d { kernel: 2, out: 32 },
            LayerSpec::BatchNorm { eps: BN_EPS },
            LayerSpec::Relu,
            LayerSpec::MaxPool,
        ];
        if se {
            layers.push(LayerSpec::Se { reduction: SE_REDUCTION });
        }
        layers.extend([LayerSpec::GlobalPool, LayerSpec::Dense { out: 2 }, LayerSpec::Softmax]);
        Ok(Self {
            input_length: feature_length,
            input_channels: 1,
            layers,
        })
    }

    pub fn has_se(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::Se { .. }))
    }

    /// Input shape `(length, channels)` of every layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut shape = (self.input_length, self.input_channels);
        if shape.0 == 0 || shape.1 == 0 {
            bail!(InvalidInput, "empty input shape");
        }
        let mut out = alloc::vec![shape];
        for (i, layer) in self.layers.iter().enumerate() {
            let (l, c) = shape;
            shape = match *layer {
                LayerSpec::Conv1d { kernel, out } => {
                    if kernel == 0 || out == 0 {
                        bail!(InvalidInput, "layer {i}: empty convolution");
                    }
                    (l, out)
                }
                LayerSpec::BatchNorm { eps } => {
                    if !(eps > 0.0) {
                        bail!(InvalidInput, "layer {i}: batchnorm eps must be positive");
                    }
                    (l, c)
                }
                LayerSpec::Relu => (l, c),
                LayerSpec::MaxPool => {
                    if l < 2 {
                        bail!(InvalidInput, "layer {i}: max pooling needs length >= 2, got {l}");
                    }
                    (l / 2, c)
                }
                LayerSpec::Se { reduction } => {
                    if reduction == 0 || c % reduction != 0 || c / reduction == 0 {
                        bail!(InvalidInput, "layer {i}: {c} channels not divisible by reduction {reduction}");
                    }
                    (l, c)
                }
                LayerSpec::GlobalPool => (1, c),
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        bail!(InvalidInput, "layer {i}: empty dense layer");
                    }
                    (1, out)
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() || l != 1 {
                        bail!(InvalidInput, "softmax must be the single terminal layer on a flat input");
                    }
                    (l, c)
                }
            };
            out.push(shape);
        }
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            bail!(InvalidInput, "classifier must end in softmax");
        }
        Ok(out)
    }

    pub fn classes(&self) -> usize {
        self.shapes().map(|s| s.last().unwrap().1).unwrap_or(0)
    }
}

/// Per-channel statistics used by one batchnorm layer in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Saved per-layer state of a training-mode forward pass.
#[derive(Clone, Debug)]
enum Saved {
    Conv(Tensor),
    Bn { cache: BnCache, mean: Vec<f64>, var: Vec<f64>, count: usize },
    BnFrozen,
    Relu(Vec<bool>),
    Pool { choice: Vec<u8>, length: usize },
    Se(SeCache),
    GlobalPool(usize),
    Dense(Tensor),
    None,
}

/// Activations recorded by [`Model::forward`] for [`Model::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    batch: usize,
    saved: Vec<Saved>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<f64>,
    /// Per layer, the ranges of its parameter tensors inside `params`.
    slots: Vec<Vec<Range<usize>>>,
    /// Running statistics in batchnorm order.
    running: Vec<RunningStats>,
    decay_mask: Vec<bool>,
}

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchStats {
    pub data_loss: f64,
    pub l2_loss: f64,
    pub correct: usize,
}

fn layout(spec: &ModelSpec) -> Result<(Vec<Vec<Range<usize>>>, usize)> {
    let shapes = spec.shapes()?;
    let mut offset = 0;
    let mut slots = Vec::with_capacity(spec.layers.len());
    for (layer, &(l, c)) in spec.layers.iter().zip(&shapes) {
        let mut r = Vec::new();
        for n in layer.param_count(l, c) {
            r.push(offset..offset + n);
            offset += n;
        }
        slots.push(r);
    }
    Ok((slots, offset))
}

impl Model {
    /// Fan-in scaled uniform weights, zero biases, γ = 1, β = 0.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let (slots, total) = layout(&spec)?;
        let mut params = alloc::vec![0.0; total];
        let mut decay_mask = alloc::vec![false; total];
        let mut running = Vec::new();
        let mut rng = seeded(seed);
        let mut fill = |params: &mut [f64], fan_in: usize| {
            let bound = crate::math::sqrt(3.0 / fan_in as f64);
            for p in params {
                *p = rng.random_range(-bound..bound);
            }
        };
        for ((layer, r), &(l, c)) in spec.layers.iter().zip(&slots).zip(&shapes) {
            match *layer {
                LayerSpec::Conv1d { kernel, .. } => {
                    fill(&mut params[r[0].clone()], kernel * c);
                    decay_mask[r[0].clone()].fill(true);
                }
                LayerSpec::BatchNorm { .. } => {
                    params[r[0].clone()].fill(1.0);
                    running.push(RunningStats {
                        mean: alloc::vec![0.0; c],
                        var: alloc::vec![1.0; c],
                    });
                }
                LayerSpec::Se { reduction } => {
                    fill(&mut params[r[0].clone()], c);
                    fill(&mut params[r[2].clone()], c / reduction);
                    decay_mask[r[0].clone()].fill(true);
                    decay_mask[r[2].clone()].fill(true);
                }
                LayerSpec::Dense { .. } => {
                    fill(&mut params[r[0].clone()], l * c);
                    decay_mask[r[0].clone()].fill(true);
                }
                _ => {}
            }
        }
        Ok(Self {
            spec,
            params,
            slots,
            running,
            decay_mask,
        })
    }

    pub fn reference(feature_length: usize, se: bool, seed: u64) -> Result<Self> {
        Self::build(ModelSpec::reference(feature_length, se)?, seed)
    }

    /// Reassemble a model from stored parameters and running statistics.
    pub fn from_parts(spec: ModelSpec, params: Vec<f64>, running: Vec<RunningStats>) -> Result<Self> {
        let mut model = Self::build(spec, 0)?;
        if params.len() != model.params.len() {
            bail!(InvalidInput, "{} parameters for a model of {}", params.len(), model.params.len());
        }
        if running.len() != model.running.len()
            || running
                .iter()
                .zip(&model.running)
                .any(|(a, b)| a.mean.len() != b.mean.len() || a.var.len() != b.var.len())
        {
            bail!(InvalidInput, "running statistics do not match the batchnorm layers");
        }
        if params.iter().any(|v| !v.is_finite()) {
            bail!(InvalidInput, "non-finite parameter");
        }
        model.params = params;
        model.running = running;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn decay_mask(&self) -> &[bool] {
        &self.decay_mask
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.length != self.spec.input_length || x.channels != self.spec.input_channels {
            bail!(
                InvalidInput,
                "input {}x{} does not match model input {}x{}",
                x.length,
                x.channels,
                self.spec.input_length,
                self.spec.input_channels
            );
        }
        if x.batch == 0 {
            bail!(InvalidInput, "empty batch");
        }
        Ok(())
    }

    /// Runs the first `stop` layers.
    fn run(&self, x: &Tensor, mode: Mode, record: bool, stop: usize) -> Result<(Tensor, Vec<Saved>)> {
        self.check_input(x)?;
        let p = &self.params;
        let mut saved = Vec::new();
        let mut h = x.clone();
        let mut bn_index = 0;
        for (layer, r) in self.spec.layers.iter().zip(&self.slots).take(stop) {
            let (next, keep) = match *layer {
                LayerSpec::Conv1d { kernel, out } => {
                    let y = conv1d_forward(&h, &p[r[0].clone()], &p[r[1].clone()], kernel, out)?;
                    (y, Saved::Conv(h))
                }
                LayerSpec::BatchNorm { eps } => {
                    let (gamma, beta) = (&p[r[0].clone()], &p[r[1].clone()]);
                    let out = match mode {
                        Mode::Train => {
                            let count = h.batch * h.length;
                            let (y, cache, mean, var) = batchnorm_forward_train(&h, gamma, beta, eps)?;
                            (y, Saved::Bn { cache, mean, var, count })
                        }
                        Mode::Eval => {
                            let rs = &self.running[bn_index];
                            let y = batchnorm_forward_eval(&h, gamma, beta, &rs.mean, &rs.var, eps);
                            (y, Saved::BnFrozen)
                        }
                    };
                    bn_index += 1;
                    out
                }
                LayerSpec::Relu => {
                    let mask = relu_forward(&mut h);
                    (h, Saved::Relu(mask))
                }
                LayerSpec::MaxPool => {
                    let (y, choice) = maxpool_forward(&h)?;
                    (y, Saved::Pool { choice, length: h.length })
                }
                LayerSpec::Se { .. } => {
                    let (y, cache) = se_forward(h, &p[r[0].clone()], &p[r[1].clone()], &p[r[2].clone()], &p[r[3].clone()])?;
                    (y, Saved::Se(cache))
                }
                LayerSpec::GlobalPool => (global_pool_forward(&h), Saved::GlobalPool(h.length)),
                LayerSpec::Dense { .. } => {
                    let y = dense_forward(&h, &p[r[0].clone()], &p[r[1].clone()])?;
                    (y, Saved::Dense(h))
                }
                LayerSpec::Softmax => (h, Saved::None),
            };
            if record {
                saved.push(keep);
            }
            h = next;
        }
        Ok((h, saved))
    }

    /// Logits `(batch, classes)` flattened, plus the tape for `backward`.
    /// The softmax itself is applied by the loss.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Vec<f64>, Tape)> {
        let (y, saved) = self.run(x, mode, true, usize::MAX)?;
        Ok((y.data, Tape { batch: x.batch, saved }))
    }

    /// Eval-mode logits without recording a tape.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.run(x, Mode::Eval, false, usize::MAX)?.0.data)
    }

    /// Eval-mode class probabilities, `(batch, classes)` flattened.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        let logits = self.logits(x)?;
        Ok(softmax(&logits, self.spec.classes()))
    }

    /// Eval-mode argmax classes (ties to the lower index).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let k = self.spec.classes();
        Ok(argmax_rows(&self.logits(x)?, k))
    }

    /// Fold the batch statistics of a training tape into the running averages.
    pub fn commit_running(&mut self, tape: &Tape) {
        let mut bn = 0;
        for s in &tape.saved {
            if let Saved::Bn { mean, var, count, .. } = s {
                let rs = &mut self.running[bn];
                // unbiased batch variance for the running estimate
                let corr = if *count > 1 { *count as f64 / (*count - 1) as f64 } else { 1.0 };
                for k in 0..mean.len() {
                    rs.mean[k] = (1.0 - BN_MOMENTUM) * rs.mean[k] + BN_MOMENTUM * mean[k];
                    rs.var[k] = (1.0 - BN_MOMENTUM) * rs.var[k] + BN_MOMENTUM * var[k] * corr;
                }
            }
            if matches!(s, Saved::Bn { .. } | Saved::BnFrozen) {
                bn += 1;
            }
        }
    }

    /// Replaces the running statistics by population statistics of `x`
    /// (`batch` rows in input layout), one batchnorm layer at a time with the
    /// earlier layers already replaced. Works through `chunk` rows at a time.
    pub fn set_population_stats(&mut self, x: &[f64], batch: usize, chunk: usize) -> Result<()> {
        let row = self.spec.input_length * self.spec.input_channels;
        if batch < 2 || x.len() != batch * row || chunk == 0 {
            bail!(InvalidInput, "population statistics need at least 2 whole rows");
        }
        let bn_layers: Vec<usize> = (0..self.spec.layers.len())
            .filter(|&i| matches!(self.spec.layers[i], LayerSpec::BatchNorm { .. }))
            .collect();
        for (b, &layer) in bn_layers.iter().enumerate() {
            let c = self.running[b].mean.len();
            // Chan et al. merge of per-chunk (count, mean, M2)
            let mut count = 0usize;
            let mut mean = alloc::vec![0.0; c];
            let mut m2 = alloc::vec![0.0; c];
            for start in (0..batch).step_by(chunk) {
                let end = (start + chunk).min(batch);
                let xb = Tensor::from_vec(end - start, self.spec.input_length, self.spec.input_channels, x[start * row..end * row].to_vec())?;
                let (h, _) = self.run(&xb, Mode::Eval, false, layer)?;
                let nb = h.batch * h.length;
                let mut bm = alloc::vec![0.0; c];
                for v in h.data.chunks_exact(c) {
                    for k in 0..c {
                        bm[k] += v[k];
                    }
                }
                bm.iter_mut().for_each(|m| *m /= nb as f64);
                let mut bq = alloc::vec![0.0; c];
                for v in h.data.chunks_exact(c) {
                    for k in 0..c {
                        let d = v[k] - bm[k];
                        bq[k] += d * d;
                    }
                }
                let total = (count + nb) as f64;
                for k in 0..c {
                    let d = bm[k] - mean[k];
                    mean[k] += d * nb as f64 / total;
                    m2[k] += bq[k] + d * d * count as f64 * nb as f64 / total;
                }
                count += nb;
            }
            let rs = &mut self.running[b];
            rs.mean = mean;
            rs.var = m2.iter().map(|q| q / (count - 1) as f64).collect();
        }
        Ok(())
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, tape: &Tape, dlogits: &[f64], grads: &mut [f64]) -> Result<Tensor> {
        if tape.saved.len() != self.spec.layers.len() {
            bail!(InvalidInput, "tape does not belong to this model");
        }
        if grads.len() != self.params.len() {
            bail!(InvalidInput, "gradient buffer of length {} for {} parameters", grads.len(), self.params.len());
        }
        let k = self.spec.classes();
        let mut dy = Tensor::from_vec(tape.batch, 1, k, dlogits.to_vec())?;
        let p = &self.params;
        for ((layer, r), saved) in self.spec.layers.iter().zip(&self.slots).zip(&tape.saved).rev() {
            dy = match (*layer, saved) {
                (LayerSpec::Softmax, _) => dy,
                (LayerSpec::Conv1d { kernel, out }, Saved::Conv(x)) => {
                    let (dw, db) = split2(grads, &r[0], &r[1]);
                    conv1d_backward(x, &p[r[0].clone()], kernel, out, &dy, dw, db)
                }
                (LayerSpec::BatchNorm { .. }, Saved::Bn { cache, .. }) => {
                    let (dg, db) = split2(grads, &r[0], &r[1]);
                    batchnorm_backward(cache, &p[r[0].clone()], &dy, dg, db)
                }
                (LayerSpec::BatchNorm { .. }, Saved::BnFrozen) => {
                    bail!(InvalidInput, "backward needs a training-mode tape")
                }
                (LayerSpec::Relu, Saved::Relu(mask)) => {
                    relu_backward(mask, &mut dy);
                    dy
                }
                (LayerSpec::MaxPool, Saved::Pool { choice, length }) => maxpool_backward(choice, *length, &dy),
                (LayerSpec::Se { .. }, Saved::Se(cache)) => {
                    let (w1, b1, w2, b2) = (r[0].clone(), r[1].clone(), r[2].clone(), r[3].clone());
                    let (a, rest) = grads.split_at_mut(b1.start);
                    let (b, rest) = rest.split_at_mut(w2.start - b1.start);
                    let (c, d) = rest.split_at_mut(b2.start - w2.start);
                    se_backward(
                        cache,
                        &p[w1.clone()],
                        &p[w2.clone()],
                        &dy,
                        &mut a[w1],
                        b,
                        c,
                        &mut d[..b2.len()],
                    )
                }
                (LayerSpec::GlobalPool, Saved::GlobalPool(length)) => global_pool_backward(*length, &dy),
                (LayerSpec::Dense { .. }, Saved::Dense(x)) => {
                    let (dw, db) = split2(grads, &r[0], &r[1]);
                    dense_backward(x, &p[r[0].clone()], &dy, dw, db)
                }
                _ => bail!(InvalidInput, "tape does not match the layer list"),
            };
        }
        Ok(dy)
    }

    /// `λ·Σw²` over the decayed weights.
    pub fn l2_penalty(&self, lambda: f64) -> f64 {
        lambda
            * self
                .params
                .iter()
                .zip(&self.decay_mask)
                .filter(|(_, &m)| m)
                .map(|(w, _)| w * w)
                .sum::<f64>()
    }

    /// Forward, backward, L2 decay and one Adam update on a minibatch.
    pub fn train_batch(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        adam: &mut AdamState,
        cfg: &AdamConfig,
        l2: f64,
    ) -> Result<BatchStats> {
        if labels.len() != x.batch {
            bail!(InvalidInput, "{} labels for a batch of {}", labels.len(), x.batch);
        }
        let (logits, tape) = self.forward(x, Mode::Train)?;
        let k = self.spec.classes();
        let (data_loss, _, dlogits) = softmax_cross_entropy(&logits, labels, k)?;
        let correct = argmax_rows(&logits, k).iter().zip(labels).filter(|(a, b)| a == b).count();
        let l2_loss = self.l2_penalty(l2);
        let mut grads = alloc::vec![0.0; self.params.len()];
        self.backward(&tape, &dlogits, &mut grads)?;
        for ((g, w), &m) in grads.iter_mut().zip(&self.params).zip(&self.decay_mask) {
            if m {
                *g += 2.0 * l2 * w;
            }
        }
        adam_step(&mut self.params, &grads, adam, cfg)?;
        self.commit_running(&tape);
        Ok(BatchStats {
            data_loss,
            l2_loss,
            correct,
        })
    }
}

fn split2<'a>(g: &'a mut [f64], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(a.end, b.start);
    let (x, y) = g[a.start..b.end].split_at_mut(a.len());
    (x, y)
}

pub fn argmax_rows(values: &[f64], classes: usize) -> Vec<usize> {
    values
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
