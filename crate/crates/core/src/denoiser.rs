//! Denoisers `D(x; σ)`: closed-form ideal denoisers used as exact oracles,
//! and the preconditioning wrapper that turns a raw network `F` into a
//! denoiser.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{domain_err, Error, Result};
use crate::schedules::{Framework, Schedule, ScheduleKind, ScheduleParams, UTable};
use crate::tensor::Tensor;

/// Anything that can be asked for `D(x; σ)`. Samplers are generic over this.
pub trait Denoise: Send + Sync {
    fn denoise(&self, x: &Tensor, sigma: f64) -> Result<Tensor>;
}

/// Raw network `F(x_in; c_noise, label)`.
pub trait RawNet: Send + Sync {
    fn forward(&self, x_in: &Tensor, c_noise: f64, label: Option<&[f64]>) -> Result<Tensor>;

    fn param_count(&self) -> usize;
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return domain_err(format!("denoiser needs finite sigma > 0, got {sigma}"));
    }
    Ok(())
}

/// Ideal denoiser of a finite dataset: the posterior mean
/// `Σ_i N(x; y_i, σ²I) y_i / Σ_i N(x; y_i, σ²I)`.
///
/// Weights are evaluated in log space relative to the largest one; weights
/// below `e^-700` of the maximum are dropped.
pub fn analytic_denoise(dataset: &Dataset, x: &Tensor, sigma: f64) -> Result<Tensor> {
    check_sigma(sigma)?;
    if x.shape() != dataset.sample_shape() {
        return Err(Error::Shape(format!("input {:?} vs dataset samples {:?}", x.shape(), dataset.sample_shape())));
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let logits: Vec<f64> = dataset.samples().iter().map(|y| -y.sub(x).norm_sq() * inv).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = vec![0.0; x.len()];
    let mut total = 0.0;
    for (l, y) in logits.iter().zip(dataset.samples()) {
        let rel = l - max;
        if rel < -700.0 {
            continue;
        }
        let w = rel.exp();
        total += w;
        for (a, v) in acc.iter_mut().zip(y.data()) {
            *a += w * v;
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), acc.into_iter().map(|a| a / total).collect()))
}

/// Ideal denoiser for `p_data = N(0, σ_data² I)`: `σ_data²/(σ_data² + σ²) · x`.
pub fn gaussian_denoise(sigma_data: f64, x: &Tensor, sigma: f64) -> Result<Tensor> {
    check_sigma(sigma)?;
    let sd2 = sigma_data * sigma_data;
    Ok(x.scale(sd2 / (sd2 + sigma * sigma)))
}

/// Score `∇ log p(x; σ) = (D(x; σ) − x) / σ²`.
pub fn score(d: &impl Denoise, x: &Tensor, sigma: f64) -> Result<Tensor> {
    check_sigma(sigma)?;
    let denoised = d.denoise(x, sigma)?;
    Ok(denoised.sub(x).scale(1.0 / (sigma * sigma)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecondCoeffs {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub c_noise: f64,
}

/// Skip/output/input scalings and noise conditioning per framework.
///
/// `params` supplies the VP schedule (for `σ⁻¹`) and `M`; `u_table` is
/// required for iDDPM.
pub fn precond_coeffs(
    framework: Framework,
    sigma: f64,
    sigma_data: f64,
    params: &ScheduleParams,
    u_table: Option<&UTable>,
) -> Result<PrecondCoeffs> {
    check_sigma(sigma)?;
    let s2 = sigma * sigma;
    Ok(match framework {
        Framework::Vp => {
            let vp = Schedule { kind: ScheduleKind::Vp, params: *params };
            PrecondCoeffs {
                c_skip: 1.0,
                c_out: -sigma,
                c_in: 1.0 / (s2 + 1.0).sqrt(),
                c_noise: (params.m - 1) as f64 * vp.invert(sigma)?,
            }
        }
        Framework::Ve => PrecondCoeffs { c_skip: 1.0, c_out: sigma, c_in: 1.0, c_noise: (0.5 * sigma).ln() },
        Framework::Iddpm => {
            let table = u_table.ok_or_else(|| Error::Argument("iDDPM preconditioning needs a u_j table".into()))?;
            PrecondCoeffs {
                c_skip: 1.0,
                c_out: -sigma,
                c_in: 1.0 / (s2 + 1.0).sqrt(),
                c_noise: table.nearest_index(sigma) as f64,
            }
        }
        Framework::Edm => {
            let sd2 = sigma_data * sigma_data;
            PrecondCoeffs {
                c_skip: sd2 / (s2 + sd2),
                c_out: sigma * sigma_data / (s2 + sd2).sqrt(),
                c_in: 1.0 / (s2 + sd2).sqrt(),
                c_noise: 0.25 * sigma.ln(),
            }
        }
    })
}

/// Framework choice plus the constants its coefficients depend on.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    pub framework: Framework,
    pub sigma_data: f64,
    pub params: ScheduleParams,
    u_table: Option<Arc<UTable>>,
}

impl Preconditioner {
    pub fn new(framework: Framework, sigma_data: f64, params: ScheduleParams) -> Result<Self> {
        if !(sigma_data > 0.0) {
            return Err(Error::Argument(format!("sigma_data must be > 0, got {sigma_data}")));
        }
        let u_table = match framework {
            Framework::Iddpm => Some(UTable::from_params(&params)?),
            _ => None,
        };
        Ok(Self { framework, sigma_data, params, u_table })
    }

    pub fn edm(sigma_data: f64) -> Result<Self> {
        Self::new(Framework::Edm, sigma_data, ScheduleParams::edm())
    }

    pub fn coeffs(&self, sigma: f64) -> Result<PrecondCoeffs> {
        precond_coeffs(self.framework, sigma, self.sigma_data, &self.params, self.u_table.as_deref())
    }
}

/// `D(x; σ) = c_skip x + c_out F(c_in x; c_noise)`.
pub fn precond_denoise(
    net: &dyn RawNet,
    precond: &Preconditioner,
    x: &Tensor,
    sigma: f64,
    label: Option<&[f64]>,
) -> Result<Tensor> {
    let c = precond.coeffs(sigma)?;
    let f = net.forward(&x.scale(c.c_in), c.c_noise, label)?;
    x.check_same_shape(&f)?;
    Ok(x.scale(c.c_skip).axpy(c.c_out, &f))
}

#[derive(Clone)]
pub enum DenoiserKind {
    Analytic(Dataset),
    Gaussian { sigma_data: f64 },
    Preconditioned { net: Arc<dyn RawNet>, precond: Preconditioner },
}

impl fmt::Debug for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserKind::Analytic(ds) => write!(f, "Analytic({}, {} samples)", ds.name(), ds.len()),
            DenoiserKind::Gaussian { sigma_data } => write!(f, "Gaussian(sigma_data = {sigma_data})"),
            DenoiserKind::Preconditioned { net, precond } => write!(
                f,
                "Preconditioned({}, {} params, sigma_data = {})",
                precond.framework,
                net.param_count(),
                precond.sigma_data
            ),
        }
    }
}

/// A concrete denoiser with an evaluation counter (NFE). Every call to
/// [`Denoise::denoise`] counts once, whatever the variant.
#[derive(Debug)]
pub struct Denoiser {
    kind: DenoiserKind,
    nfe: AtomicU64,
}

impl Denoiser {
    pub fn new(kind: DenoiserKind) -> Self {
        Self { kind, nfe: AtomicU64::new(0) }
    }

    pub fn analytic(dataset: Dataset) -> Self {
        Self::new(DenoiserKind::Analytic(dataset))
    }

    pub fn gaussian(sigma_data: f64) -> Self {
        Self::new(DenoiserKind::Gaussian { sigma_data })
    }

    pub fn preconditioned(net: Arc<dyn RawNet>, precond: Preconditioner) -> Self {
        Self::new(DenoiserKind::Preconditioned { net, precond })
    }

    pub fn kind(&self) -> &DenoiserKind {
        &self.kind
    }

    /// The dataset behind an analytic denoiser.
    pub fn dataset(&self) -> Option<&Dataset> {
        match &self.kind {
            DenoiserKind::Analytic(ds) => Some(ds),
            _ => None,
        }
    }

    pub fn nfe(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }

    pub fn reset_nfe(&self) {
        self.nfe.store(0, Ordering::Relaxed);
    }
}

impl Denoise for Denoiser {
    fn denoise(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        self.nfe.fetch_add(1, Ordering::Relaxed);
        match &self.kind {
            DenoiserKind::Analytic(ds) => analytic_denoise(ds, x, sigma),
            DenoiserKind::Gaussian { sigma_data } => gaussian_denoise(*sigma_data, x, sigma),
            // sampling always conditions on the zero augmentation label
            DenoiserKind::Preconditioned { net, precond } => precond_denoise(net.as_ref(), precond, x, sigma, None),
        }
    }
}

impl<T: Denoise + ?Sized> Denoise for &T {
    fn denoise(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        (**self).denoise(x, sigma)
    }
}

impl<T: Denoise + ?Sized> Denoise for Arc<T> {
    fn denoise(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        (**self).denoise(x, sigma)
    }
}
