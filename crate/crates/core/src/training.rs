//! Toy-scale training: noise-level sampling, the preconditioned denoising
//! loss, and a small SiLU MLP with hand-written gradients.
//!
//! The loss is evaluated in its effective form: with `λ(σ) = 1/c_out²` the
//! weighted denoiser error `λ‖D − y‖²` equals `‖F(c_in(y+n)) − (y − c_skip(y+n))/c_out‖²`.
//!
//! ```text
//! weights: "EDMW" u32 version=1 · u32 layers · (u32 in, u32 out)[layers] ·
//!          per layer: f64 w[out·in] (row-major) · f64 b[out]
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::augment::{augment_image, AugmentConstants, LABEL_DIM};
use crate::dataset::Dataset;
use crate::denoiser::{Denoise, Preconditioner, RawNet};
use crate::error::{arg_err, Error, Result};
use crate::format::{write_f64s, write_u32, ByteReader, FORMAT_VERSION};
use crate::par::{map_indexed, Exec};
use crate::rng::{gaussian, RngStream};
use crate::schedules::{Framework, Schedule, ScheduleKind, ScheduleParams, UTable};
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"EDMW";

/// Upper edges of the σ buckets reported in [`LossRecord`]; the last bucket
/// is open-ended.
pub const SIGMA_BUCKET_EDGES: [f64; 4] = [0.1, 0.5, 2.0, 10.0];

/// Per-sample gradients are summed in fixed chunks of this size, so the
/// reduction order never depends on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub p_mean: f64,
    pub p_std: f64,
    pub sigma_data: f64,
    pub framework: Framework,
    pub params: ScheduleParams,
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    /// A [`LossRecord`] is emitted every this many steps (and after the last).
    pub log_every: usize,
    pub augment: Option<AugmentConstants>,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_framework(Framework::Edm)
    }
}

impl TrainConfig {
    pub fn for_framework(framework: Framework) -> Self {
        let params = match framework {
            // training covers the full VE range, sampling stops at 80
            Framework::Ve => ScheduleParams::ve(),
            f => f.preset(),
        };
        Self {
            p_mean: -1.2,
            p_std: 1.2,
            sigma_data: 0.5,
            framework,
            params,
            lr: 0.02,
            batch: 128,
            steps: 5000,
            log_every: 100,
            augment: None,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_std > 0.0) || !self.p_mean.is_finite() {
            return arg_err(format!("need finite P_mean and P_std > 0, got {} / {}", self.p_mean, self.p_std));
        }
        if !(self.sigma_data > 0.0) {
            return arg_err(format!("sigma_data must be > 0, got {}", self.sigma_data));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return arg_err(format!("learning rate must be finite and > 0, got {}", self.lr));
        }
        if self.batch == 0 || self.log_every == 0 {
            return arg_err("batch and log interval must be >= 1");
        }
        self.params.validate()
    }

    pub fn preconditioner(&self) -> Result<Preconditioner> {
        Preconditioner::new(self.framework, self.sigma_data, self.params)
    }
}

/// Draws a training noise level from the framework's `p_train`: log-normal
/// for EDM, `t ~ U(ε_t, 1)` for VP, log-uniform for VE, uniform over `u_j`
/// for iDDPM.
pub fn sample_sigma_train(rng: &mut RngStream, cfg: &TrainConfig) -> Result<f64> {
    let p = &cfg.params;
    Ok(match cfg.framework {
        Framework::Edm => (cfg.p_mean + cfg.p_std * rng.standard_normal()).exp(),
        Framework::Vp => {
            let vp = Schedule { kind: ScheduleKind::Vp, params: *p };
            vp.sigma(rng.uniform_range(p.eps_t, 1.0))
        }
        Framework::Ve => rng.uniform_range(p.sigma_min.ln(), p.sigma_max.ln()).exp(),
        Framework::Iddpm => {
            let table = UTable::from_params(p)?;
            table.get(rng.index(p.m))
        }
    })
}

/// `λ(σ) = (σ² + σ_data²)/(σ σ_data)²`, i.e. `1/c_out(σ)²` for EDM.
pub fn loss_weight(sigma: f64, sigma_data: f64) -> f64 {
    (sigma * sigma + sigma_data * sigma_data) / (sigma * sigma_data).powi(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.n_in)
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Fully connected `F(x_in, c_noise, label)` with SiLU hidden activations.
/// Input is the concatenation `[x_in, c_noise, label]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpDenoiser {
    layers: Vec<Layer>,
    data_dim: usize,
    cond_dim: usize,
}

impl MlpDenoiser {
    /// Hidden layers get `N(0, 1/fan_in)` weights; the output layer starts at zero.
    pub fn new(data_dim: usize, hidden: &[usize], cond_dim: usize, rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::randomized(data_dim, hidden, cond_dim, rng)?;
        let last = net.layers.last_mut().expect("at least one layer");
        last.w.fill(0.0);
        last.b.fill(0.0);
        Ok(net)
    }

    /// Every layer random, biases included; for gradient checks.
    pub fn randomized(data_dim: usize, hidden: &[usize], cond_dim: usize, rng: &mut RngStream) -> Result<Self> {
        if data_dim == 0 || hidden.contains(&0) {
            return arg_err(format!("layer widths must be >= 1: data {data_dim}, hidden {hidden:?}"));
        }
        let mut widths = vec![data_dim + 1 + cond_dim];
        widths.extend_from_slice(hidden);
        widths.push(data_dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let std = (1.0 / n_in as f64).sqrt();
                let w = (0..n_in * n_out).map(|_| std * rng.standard_normal()).collect();
                let b = (0..n_out).map(|_| 0.1 * rng.standard_normal()).collect();
                Layer { n_in, n_out, w, b }
            })
            .collect();
        Ok(Self { layers, data_dim, cond_dim })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let (Some(first), Some(last)) = (layers.first(), layers.last()) else {
            return Err(Error::Shape("network needs at least one layer".into()));
        };
        for (i, l) in layers.iter().enumerate() {
            if l.n_in == 0 || l.n_out == 0 || l.w.len() != l.n_in * l.n_out || l.b.len() != l.n_out {
                return Err(Error::Shape(format!("layer {i}: inconsistent dimensions")));
            }
            if i > 0 && layers[i - 1].n_out != l.n_in {
                return Err(Error::Shape(format!(
                    "layer {i}: input {} != previous output {}",
                    l.n_in,
                    layers[i - 1].n_out
                )));
            }
        }
        let data_dim = last.n_out;
        let Some(cond_dim) = first.n_in.checked_sub(data_dim + 1) else {
            return Err(Error::Shape(format!("input width {} < data dim {data_dim} + 1", first.n_in)));
        };
        Ok(Self { layers, data_dim, cond_dim })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].n_in];
        w.extend(self.layers.iter().map(|l| l.n_out));
        w
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.param_count(), values.len())));
        }
        let mut rest = values;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.w.len());
            let (b, r) = r.split_at(l.b.len());
            l.w.copy_from_slice(w);
            l.b.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn sgd_step(&mut self, grads: &[f64], lr: f64) {
        let mut g = grads.iter();
        for l in &mut self.layers {
            for p in l.w.iter_mut().chain(l.b.iter_mut()) {
                *p -= lr * g.next().expect("gradient length matches");
            }
        }
    }

    fn input(&self, x_in: &[f64], c_noise: f64, label: Option<&[f64]>) -> Result<Vec<f64>> {
        if x_in.len() != self.data_dim {
            return Err(Error::Shape(format!("network expects {} inputs, got {}", self.data_dim, x_in.len())));
        }
        let mut v = Vec::with_capacity(self.layers[0].n_in);
        v.extend_from_slice(x_in);
        v.push(c_noise);
        match label {
            Some(l) if l.len() == self.cond_dim => v.extend_from_slice(l),
            Some(l) => {
                return Err(Error::Shape(format!(
                    "label of length {} for a net with {} conditioning inputs",
                    l.len(),
                    self.cond_dim
                )))
            }
            None => v.resize(v.len() + self.cond_dim, 0.0),
        }
        Ok(v)
    }

    /// Forward pass on a raw input vector, keeping pre-activations.
    fn forward_cached(&self, input: Vec<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = vec![input];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let z = l.affine(acts.last().expect("nonempty"));
            if i + 1 < self.layers.len() {
                acts.push(z.iter().map(|&v| silu(v)).collect());
            }
            pre.push(z);
        }
        (acts, pre)
    }

    pub fn forward_vec(&self, input: &[f64]) -> Vec<f64> {
        let (_, mut pre) = self.forward_cached(input.to_vec());
        pre.pop().expect("nonempty")
    }

    /// Adds `∂(grad_out · F)/∂θ` into `grads`.
    fn backward(&self, acts: &[Vec<f64>], pre: &[Vec<f64>], grad_out: &[f64], grads: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut delta = grad_out.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let (gw, gb) = grads[offsets[li]..offsets[li] + l.param_count()].split_at_mut(l.w.len());
            let a = &acts[li];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                for (g, &x) in gw[o * l.n_in..(o + 1) * l.n_in].iter_mut().zip(a) {
                    *g += d * x;
                }
            }
            if li > 0 {
                let z = &pre[li - 1];
                delta = (0..l.n_in)
                    .map(|i| {
                        let back: f64 = delta.iter().enumerate().map(|(o, d)| d * l.w[o * l.n_in + i]).sum();
                        back * silu_grad(z[i])
                    })
                    .collect();
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        write_u32(&mut out, FORMAT_VERSION);
        write_u32(&mut out, self.layers.len() as u32);
        for l in &self.layers {
            write_u32(&mut out, l.n_in as u32);
            write_u32(&mut out, l.n_out as u32);
        }
        for l in &self.layers {
            write_f64s(&mut out, &l.w);
            write_f64s(&mut out, &l.b);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(WEIGHTS_MAGIC)?;
        r.expect_version(FORMAT_VERSION)?;
        let at = r.offset();
        let count = r.u32("layer count")? as usize;
        if count == 0 {
            return r.fail_at(at, "network has no layers");
        }
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            let at = r.offset();
            let (n_in, n_out) = (r.u32("layer input dim")? as usize, r.u32("layer output dim")? as usize);
            if n_in == 0 || n_out == 0 {
                return r.fail_at(at, "zero layer dimension");
            }
            if let Some(&(_, prev)) = dims.last() {
                if prev != n_in {
                    return r.fail_at(at, format!("layer input {n_in} != previous output {prev}"));
                }
            }
            dims.push((n_in, n_out));
        }
        let mut layers = Vec::with_capacity(count);
        for (n_in, n_out) in dims {
            let w = r.f64s(n_in * n_out, "weights")?;
            let b = r.f64s(n_out, "biases")?;
            layers.push(Layer { n_in, n_out, w, b });
        }
        if !r.is_at_end() {
            return r.fail("trailing bytes after weights");
        }
        let at = r.offset();
        Self::from_layers(layers).or_else(|e| r.fail_at(at, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl RawNet for MlpDenoiser {
    fn forward(&self, x_in: &Tensor, c_noise: f64, label: Option<&[f64]>) -> Result<Tensor> {
        let out = self.forward_vec(&self.input(x_in.data(), c_noise, label)?);
        Tensor::new(x_in.shape().to_vec(), out)
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}

/// One fully specified loss term: clean sample, noise level and realized
/// noise. Fixing these makes the loss a deterministic function of `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerm {
    pub y: Tensor,
    pub sigma: f64,
    pub noise: Tensor,
    pub label: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    /// Mean over terms of the per-term mean squared error.
    pub loss: f64,
    pub grads: Vec<f64>,
    pub per_term: Vec<f64>,
}

fn term_loss(
    net: &MlpDenoiser,
    precond: &Preconditioner,
    t: &LossTerm,
    grads: Option<&mut [f64]>,
    scale: f64,
) -> Result<f64> {
    t.y.check_same_shape(&t.noise)?;
    let c = precond.coeffs(t.sigma)?;
    let noisy = t.y.add(&t.noise);
    let x_in: Vec<f64> = noisy.data().iter().map(|v| c.c_in * v).collect();
    let (acts, pre) = net.forward_cached(net.input(&x_in, c.c_noise, t.label.as_deref())?);
    let out = pre.last().expect("nonempty");
    let dim = out.len() as f64;
    let resid: Vec<f64> = out
        .iter()
        .zip(t.y.data().iter().zip(noisy.data()))
        .map(|(f, (y, x))| f - (y - c.c_skip * x) / c.c_out)
        .collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / dim;
    if let Some(g) = grads {
        let grad_out: Vec<f64> = resid.iter().map(|r| 2.0 * r / dim * scale).collect();
        net.backward(&acts, &pre, &grad_out, g);
    }
    Ok(loss)
}

/// Loss and exact gradient over fixed terms. Terms are processed in chunks
/// of fixed size (optionally in parallel) and reduced in index order.
pub fn loss_and_grad(net: &MlpDenoiser, precond: &Preconditioner, terms: &[LossTerm], exec: Exec) -> Result<LossEval> {
    if terms.is_empty() {
        return arg_err("loss needs at least one term");
    }
    let p = net.param_count();
    let scale = 1.0 / terms.len() as f64;
    let chunks: Vec<&[LossTerm]> = terms.chunks(GRAD_CHUNK).collect();
    let partial = map_indexed(exec, chunks.len(), |ci| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = vec![0.0; p];
        let losses =
            chunks[ci].iter().map(|t| term_loss(net, precond, t, Some(&mut g), scale)).collect::<Result<_>>()?;
        Ok((losses, g))
    });
    let mut grads = vec![0.0; p];
    let mut per_term = Vec::with_capacity(terms.len());
    for part in partial {
        let (losses, g) = part?;
        per_term.extend(losses);
        for (a, b) in grads.iter_mut().zip(g) {
            *a += b;
        }
    }
    let loss = per_term.iter().sum::<f64>() * scale;
    Ok(LossEval { loss, grads, per_term })
}

/// Loss only; no gradient buffers.
pub fn loss_value(net: &MlpDenoiser, precond: &Preconditioner, terms: &[LossTerm]) -> Result<f64> {
    let mut sum = 0.0;
    for t in terms {
        sum += term_loss(net, precond, t, None, 0.0)?;
    }
    Ok(sum / terms.len() as f64)
}

fn draw_term(y: Tensor, label: Option<Vec<f64>>, rng: &mut RngStream, cfg: &TrainConfig) -> Result<LossTerm> {
    let sigma = sample_sigma_train(rng, cfg)?;
    let noise = gaussian(rng, y.shape(), sigma)?;
    Ok(LossTerm { y, sigma, noise, label })
}

/// Draws `σ ~ p_train` and `n ~ N(0, σ²I)` for every sample in `ys`, then
/// evaluates the loss.
pub fn edm_loss(net: &MlpDenoiser, ys: &[Tensor], rng: &mut RngStream, cfg: &TrainConfig) -> Result<LossEval> {
    cfg.validate()?;
    let precond = cfg.preconditioner()?;
    let terms = ys.iter().map(|y| draw_term(y.clone(), None, rng, cfg)).collect::<Result<Vec<_>>>()?;
    loss_and_grad(net, &precond, &terms, cfg.exec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    /// Number of SGD steps completed.
    pub step: usize,
    /// Mean loss over the steps since the previous record.
    pub mean_loss: f64,
    /// Mean per-term loss by σ bucket (see [`SIGMA_BUCKET_EDGES`]); `None`
    /// where no term fell in the bucket.
    pub buckets: Vec<Option<f64>>,
}

pub fn sigma_bucket(sigma: f64) -> usize {
    SIGMA_BUCKET_EDGES.partition_point(|&e| e <= sigma)
}

#[derive(Default)]
struct Window {
    loss_sum: f64,
    steps: usize,
    bucket_sum: [f64; SIGMA_BUCKET_EDGES.len() + 1],
    bucket_n: [usize; SIGMA_BUCKET_EDGES.len() + 1],
}

impl Window {
    fn flush(&mut self, step: usize) -> LossRecord {
        let buckets = self.bucket_sum.iter().zip(&self.bucket_n).map(|(s, &n)| (n > 0).then(|| s / n as f64)).collect();
        let rec = LossRecord { step, mean_loss: self.loss_sum / self.steps as f64, buckets };
        *self = Window::default();
        rec
    }
}

/// Plain SGD on the preconditioned loss. Every random draw (batch indices,
/// augmentation, σ, noise) comes from `rng` in a fixed order.
pub fn train_loop(
    mut net: MlpDenoiser,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(MlpDenoiser, Vec<LossRecord>)> {
    cfg.validate()?;
    if dataset.dim() != net.data_dim() {
        return Err(Error::Shape(format!("dataset dim {} != network data dim {}", dataset.dim(), net.data_dim())));
    }
    if let Some(a) = &cfg.augment {
        a.validate()?;
        if dataset.sample_shape().len() != 3 {
            return Err(Error::Shape(format!(
                "augmentation needs H x W x C samples, got {:?}",
                dataset.sample_shape()
            )));
        }
        if net.cond_dim() != LABEL_DIM {
            return Err(Error::Shape(format!(
                "augmentation needs {LABEL_DIM} conditioning inputs, net has {}",
                net.cond_dim()
            )));
        }
    }
    let precond = cfg.preconditioner()?;
    let mut records = Vec::new();
    let mut window = Window::default();
    for step in 1..=cfg.steps {
        let mut terms = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let y = &dataset.samples()[rng.index(dataset.len())];
            let (y, label) = match &cfg.augment {
                Some(c) => {
                    let (img, l) = augment_image(y, rng, c)?;
                    (img, Some(l.0.to_vec()))
                }
                None => (y.clone(), None),
            };
            terms.push(draw_term(y, label, rng, cfg)?);
        }
        let eval = loss_and_grad(&net, &precond, &terms, cfg.exec)?;
        if !eval.loss.is_finite() {
            return Err(Error::Domain(format!("loss diverged at step {step}; lower the learning rate")));
        }
        net.sgd_step(&eval.grads, cfg.lr);
        window.loss_sum += eval.loss;
        window.steps += 1;
        for (t, l) in terms.iter().zip(&eval.per_term) {
            let b = sigma_bucket(t.sigma);
            window.bucket_sum[b] += l;
            window.bucket_n[b] += 1;
        }
        if step % cfg.log_every == 0 || step == cfg.steps {
            records.push(window.flush(step));
        }
    }
    Ok((net, records))
}

/// Wraps a trained net as a sampler-ready denoiser.
pub fn as_denoiser(net: MlpDenoiser, cfg: &TrainConfig) -> Result<crate::denoiser::Denoiser> {
    Ok(crate::denoiser::Denoiser::preconditioned(Arc::new(net), cfg.preconditioner()?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub sigma: f64,
    pub mean: f64,
    pub std: f64,
}

/// Monte-Carlo estimate of `λ(σ) E‖D(y + n; σ) − y‖²/dim` at each grid σ,
/// with `λ = 1/c_out²` from `precond`. Works for any denoiser, so the ideal
/// analytic one gives the irreducible floor.
pub fn loss_profile(
    d: &impl Denoise,
    precond: &Preconditioner,
    dataset: &Dataset,
    sigmas: &[f64],
    draws: usize,
    rng: &mut RngStream,
) -> Result<Vec<ProfilePoint>> {
    if draws < 2 {
        return arg_err("loss profile needs at least 2 draws per sigma");
    }
    sigmas
        .iter()
        .map(|&sigma| {
            let c = precond.coeffs(sigma)?;
            let lambda = 1.0 / (c.c_out * c.c_out);
            let mut losses = Vec::with_capacity(draws);
            for _ in 0..draws {
                let y = &dataset.samples()[rng.index(dataset.len())];
                let x = y.add(&gaussian(rng, y.shape(), sigma)?);
                let err = d.denoise(&x, sigma)?.sub(y).norm_sq() / y.len() as f64;
                losses.push(lambda * err);
            }
            let mean = losses.iter().sum::<f64>() / draws as f64;
            let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            Ok(ProfilePoint { sigma, mean, std: var.sqrt() })
        })
        .collect()
}
