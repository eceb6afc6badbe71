use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use edm_core::schedules::{native_plan, rho_plan, Schedule, ScheduleKind};
use edm_core::training::MlpDenoiser;
use edm_core::{dataset_load, rng_stream, Dataset, Denoiser, Framework, Preconditioner, ScheduleParams, StepPlan};

use crate::args::{DenoiserArgs, FrameworkArg, PlanArgs, PlanKind};

/// Stream ids reserved for draws that are not per-trajectory.
pub mod streams {
    pub const DATASET: u64 = u64::MAX;
    pub const TRAIN: u64 = u64::MAX - 1;
    pub const INIT: u64 = u64::MAX - 2;
    pub const PROFILE: u64 = u64::MAX - 3;
    pub const SCAN: u64 = u64::MAX - 4;
    pub const ORDER: u64 = u64::MAX - 5;
}

pub const DEFAULT_GRID: usize = 3;

impl From<FrameworkArg> for Framework {
    fn from(f: FrameworkArg) -> Self {
        match f {
            FrameworkArg::Vp => Framework::Vp,
            FrameworkArg::Ve => Framework::Ve,
            FrameworkArg::Iddpm => Framework::Iddpm,
            FrameworkArg::Edm => Framework::Edm,
        }
    }
}

/// Built-in dataset name, or a path to a dataset file.
pub fn dataset(spec: &str, seed: u64, count: usize, dim: usize) -> Result<Dataset> {
    if spec == "two-point" {
        return Ok(Dataset::two_point());
    }
    if let Some(rest) = spec.strip_prefix("grid2d") {
        let k = match rest.strip_prefix(':') {
            Some(k) => k.parse().with_context(|| format!("bad grid size in '{spec}'"))?,
            None if rest.is_empty() => DEFAULT_GRID,
            None => bail!("unknown dataset '{spec}'"),
        };
        return Ok(Dataset::grid2d(k)?);
    }
    if let Some(sd) = spec.strip_prefix("gaussian:") {
        let sd: f64 = sd.parse().with_context(|| format!("bad σ_data in '{spec}'"))?;
        let mut rng = rng_stream(seed, streams::DATASET);
        return Ok(Dataset::gaussian(&mut rng, sd, count, dim)?);
    }
    if !Path::new(spec).exists() {
        bail!("no such dataset file or built-in: '{spec}' (built-ins: two-point, gaussian:<σ_data>, grid2d[:k])");
    }
    dataset_load(spec).with_context(|| format!("loading dataset {spec}"))
}

/// Preset constants with any explicit overrides applied. Changing the VP
/// coefficients re-derives its σ range unless that is also given.
pub fn schedule_params(p: &PlanArgs) -> Result<(Framework, ScheduleParams)> {
    let framework = Framework::from(p.framework);
    let mut params = framework.preset();
    if let Some(v) = p.beta_d {
        params.beta_d = v;
    }
    if let Some(v) = p.beta_min {
        params.beta_min = v;
    }
    if let Some(v) = p.eps_s {
        params.eps_s = v;
    }
    if framework == Framework::Vp {
        let vp = Schedule { kind: ScheduleKind::Vp, params };
        params.sigma_min = vp.sigma(params.eps_s);
        params.sigma_max = vp.sigma(1.0);
    }
    if let Some(v) = p.sigma_min {
        params.sigma_min = v;
    }
    if let Some(v) = p.sigma_max {
        params.sigma_max = v;
    }
    if let Some(v) = p.rho {
        params.rho = v;
    }
    if let Some(v) = p.m {
        params.m = v;
    }
    if let Some(v) = p.j0 {
        params.j0 = v;
    }
    params.validate()?;
    Ok((framework, params))
}

pub fn plan(p: &PlanArgs, framework: Framework, params: &ScheduleParams, n: usize) -> Result<StepPlan> {
    Ok(match p.plan {
        PlanKind::Native => native_plan(framework, n, params)?,
        PlanKind::Rho => rho_plan(framework, n, params)?,
    })
}

pub struct Loaded {
    pub denoiser: Denoiser,
    /// Shape of one sample, when the denoiser fixes it.
    pub shape: Option<Vec<usize>>,
}

/// `analytic:<dataset>`, `gaussian:<σ_data>` or `mlp:<weights>`; network
/// denoisers are preconditioned with `framework`'s coefficients.
pub fn denoiser(args: &DenoiserArgs, framework: Framework, params: &ScheduleParams, seed: u64) -> Result<Loaded> {
    let spec = args.denoiser.as_str();
    if let Some(ds) = spec.strip_prefix("analytic:") {
        let ds = dataset(ds, seed, 1024, 1)?;
        let shape = Some(ds.sample_shape().to_vec());
        return Ok(Loaded { denoiser: Denoiser::analytic(ds), shape });
    }
    if let Some(sd) = spec.strip_prefix("gaussian:") {
        let sd: f64 = sd.parse().with_context(|| format!("bad σ_data in '{spec}'"))?;
        if !(sd > 0.0) {
            bail!("σ_data must be > 0 in '{spec}'");
        }
        return Ok(Loaded { denoiser: Denoiser::gaussian(sd), shape: None });
    }
    if let Some(path) = spec.strip_prefix("mlp:") {
        let net = MlpDenoiser::load(path).with_context(|| format!("loading weights {path}"))?;
        let shape = Some(vec![net.data_dim()]);
        let precond = Preconditioner::new(framework, args.sigma_data, *params)?;
        return Ok(Loaded { denoiser: Denoiser::preconditioned(Arc::new(net), precond), shape });
    }
    bail!("unknown denoiser '{spec}' (expected analytic:<dataset>, gaussian:<σ_data> or mlp:<weights>)")
}
