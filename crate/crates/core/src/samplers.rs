//! Integrators for the probability-flow ODE and its stochastic variants.
//!
//! All samplers walk a [`StepPlan`] from `t_0` down to `t_N` (where
//! `σ(t_N) = 0`) and never evaluate the denoiser at `σ = 0`: the final step
//! is always a plain Euler step.
//!
//! Random draws for one trajectory come from a single [`RngStream`] in a
//! fixed order: the latent first (see [`draw_latent`]), then one churn or
//! diffusion noise tensor per step in step order.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::denoiser::Denoise;
use crate::error::{arg_err, domain_err, Error, Result};
use crate::par::{try_map_indexed, Exec};
use crate::rng::{gaussian, RngStream};
use crate::schedules::{Schedule, ScheduleKind, ScheduleValues, StepPlan, UTable};
use crate::tensor::Tensor;

/// Largest churn factor: never more than doubles the noise variance.
pub const MAX_GAMMA: f64 = SQRT_2 - 1.0;

/// Churn parameters of the stochastic sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticParams {
    pub s_churn: f64,
    pub s_tmin: f64,
    pub s_tmax: f64,
    pub s_noise: f64,
}

impl Default for StochasticParams {
    /// No churn: the stochastic sampler reduces to Heun.
    fn default() -> Self {
        Self { s_churn: 0.0, s_tmin: 0.0, s_tmax: f64::INFINITY, s_noise: 1.0 }
    }
}

impl StochasticParams {
    pub fn cifar10_vp() -> Self {
        Self { s_churn: 30.0, s_tmin: 0.01, s_tmax: 1.0, s_noise: 1.007 }
    }

    pub fn cifar10_ve() -> Self {
        Self { s_churn: 80.0, s_tmin: 0.05, s_tmax: 1.0, s_noise: 1.007 }
    }

    pub fn imagenet_pretrained() -> Self {
        Self { s_churn: 80.0, s_tmin: 0.05, s_tmax: 50.0, s_noise: 1.003 }
    }

    pub fn imagenet_retrained() -> Self {
        Self { s_churn: 40.0, s_tmin: 0.05, s_tmax: 50.0, s_noise: 1.003 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_churn >= 0.0 && self.s_tmin >= 0.0 && self.s_tmax >= self.s_tmin && self.s_noise > 0.0) {
            return arg_err(format!("need S_churn >= 0, 0 <= S_tmin <= S_tmax, S_noise > 0; got {self:?}"));
        }
        Ok(())
    }

    /// `γ_i` for a step starting at `t` on an `n`-step plan.
    pub fn gamma(&self, t: f64, n: usize) -> f64 {
        if t >= self.s_tmin && t <= self.s_tmax {
            (self.s_churn / n as f64).min(MAX_GAMMA)
        } else {
            0.0
        }
    }
}

/// Relative noise replacement rate `β(t)` of the Langevin term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaFn {
    /// `β(t) = σ̇(t)/σ(t)`, the choice implicit in the original SDEs.
    SigmaRatio,
    Constant(f64),
}

impl BetaFn {
    pub fn eval(&self, v: &ScheduleValues) -> f64 {
        match *self {
            BetaFn::SigmaRatio => v.sigma_dot / v.sigma,
            BetaFn::Constant(b) => b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t_cur: f64,
    /// Time actually integrated from (after churn); equals `t_cur` otherwise.
    pub t_hat: f64,
    pub t_next: f64,
    pub gamma: f64,
    pub nfe: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `x_0 … x_N`, retained only on request.
    pub states: Option<Vec<Tensor>>,
    pub sample: Tensor,
    pub nfe: u64,
    pub steps: Vec<StepRecord>,
}

struct Run {
    states: Option<Vec<Tensor>>,
    steps: Vec<StepRecord>,
    nfe: u64,
}

impl Run {
    fn new(x0: &Tensor, n: usize, retain: bool) -> Self {
        let states = retain.then(|| {
            let mut v = Vec::with_capacity(n + 1);
            v.push(x0.clone());
            v
        });
        Self { states, steps: Vec::with_capacity(n), nfe: 0 }
    }

    fn record(&mut self, x: &Tensor, rec: StepRecord) {
        if let Some(s) = self.states.as_mut() {
            s.push(x.clone());
        }
        self.nfe += rec.nfe;
        self.steps.push(rec);
    }

    fn finish(self, sample: Tensor) -> Trajectory {
        Trajectory { states: self.states, sample, nfe: self.nfe, steps: self.steps }
    }
}

/// `dx/dt` given `D(x/s; σ)` already evaluated.
fn derivative_from(kind: ScheduleKind, t: f64, v: &ScheduleValues, x: &Tensor, denoised: &Tensor) -> Tensor {
    if kind == ScheduleKind::Edm {
        return x.sub(denoised).scale(1.0 / t);
    }
    let a = v.sigma_dot / v.sigma + v.s_dot / v.s;
    let b = v.sigma_dot * v.s / v.sigma;
    x.scale(a).axpy(-b, denoised)
}

fn eval_positive(sched: &Schedule, t: f64) -> Result<ScheduleValues> {
    let v = sched.eval(t)?;
    if !(v.sigma > 0.0) {
        return domain_err(format!("ODE derivative requested at sigma(t = {t}) = {}", v.sigma));
    }
    Ok(v)
}

fn denoise_scaled(d: &impl Denoise, x: &Tensor, v: &ScheduleValues) -> Result<Tensor> {
    if v.s == 1.0 {
        d.denoise(x, v.sigma)
    } else {
        d.denoise(&x.scale(1.0 / v.s), v.sigma)
    }
}

/// `dx/dt = (σ̇/σ + ṡ/s) x − (σ̇ s/σ) D(x/s; σ)`; for `σ(t) = t, s = 1`
/// this is `(x − D(x; t))/t`.
pub fn ode_derivative(d: &impl Denoise, sched: &Schedule, x: &Tensor, t: f64) -> Result<Tensor> {
    let v = eval_positive(sched, t)?;
    let denoised = denoise_scaled(d, x, &v)?;
    Ok(derivative_from(sched.kind, t, &v, x, &denoised))
}

fn check_inputs(plan: &StepPlan, x0: &Tensor) -> Result<()> {
    plan.check()?;
    if x0.is_empty() {
        return Err(Error::Shape("empty latent".into()));
    }
    Ok(())
}

/// One deterministic step of `kind` from `t_cur` to `t_next`, where
/// `sigma_next = σ(t_next)`. Returns the new state and its evaluation count.
/// Second-order methods fall back to Euler when stepping into `σ = 0`.
pub fn deterministic_step(
    kind: &SamplerKind,
    d: &impl Denoise,
    sched: &Schedule,
    x: &Tensor,
    t_cur: f64,
    t_next: f64,
    sigma_next: f64,
) -> Result<(Tensor, u64)> {
    let h = t_next - t_cur;
    let d_cur = ode_derivative(d, sched, x, t_cur)?;
    match *kind {
        SamplerKind::Euler => Ok((x.axpy(h, &d_cur), 1)),
        SamplerKind::Heun => {
            let x_euler = x.axpy(h, &d_cur);
            if sigma_next == 0.0 {
                return Ok((x_euler, 1));
            }
            let d_next = ode_derivative(d, sched, &x_euler, t_next)?;
            Ok((x.axpy(h, &d_cur.scale(0.5).axpy(0.5, &d_next)), 2))
        }
        SamplerKind::Rk2 { alpha } => {
            let (w_cur, w_mid) = (1.0 - 1.0 / (2.0 * alpha), 1.0 / (2.0 * alpha));
            // the α = 1 evaluation point is exactly t_{i+1}
            let (t_mid, sigma_mid) = if alpha == 1.0 {
                (t_next, sigma_next)
            } else {
                let t = t_cur + alpha * h;
                (t, if t > 0.0 { sched.sigma(t) } else { 0.0 })
            };
            if !(sigma_mid > 0.0) {
                return Ok((x.axpy(h, &d_cur), 1));
            }
            let x_mid = x.axpy(alpha * h, &d_cur);
            let d_mid = ode_derivative(d, sched, &x_mid, t_mid)?;
            Ok((x.axpy(h, &d_cur.scale(w_cur).axpy(w_mid, &d_mid)), 2))
        }
        _ => Err(Error::Unsupported(format!("{kind} is not a deterministic single-step method"))),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.2) {
        return arg_err(format!("alpha must lie in (0, 1.2], got {alpha}"));
    }
    Ok(())
}

fn deterministic_impl(
    kind: &SamplerKind,
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    x0: &Tensor,
    retain: bool,
) -> Result<Trajectory> {
    check_inputs(plan, x0)?;
    if let SamplerKind::Rk2 { alpha } = kind {
        check_alpha(*alpha)?;
    }
    let n = plan.n();
    let mut run = Run::new(x0, n, retain);
    let mut x = x0.clone();
    for i in 0..n {
        let (t_cur, t_next) = (plan.t[i], plan.t[i + 1]);
        let (next, nfe) = deterministic_step(kind, d, sched, &x, t_cur, t_next, plan.sigma[i + 1])?;
        x = next;
        run.record(&x, StepRecord { t_cur, t_hat: t_cur, t_next, gamma: 0.0, nfe });
    }
    Ok(run.finish(x))
}

fn stochastic_impl(
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    x0: &Tensor,
    sp: &StochasticParams,
    u_table: Option<&UTable>,
    rng: &mut RngStream,
    retain: bool,
) -> Result<Trajectory> {
    check_inputs(plan, x0)?;
    sp.validate()?;
    if sched.kind != ScheduleKind::Edm {
        return Err(Error::Unsupported(format!(
            "stochastic sampler requires sigma(t) = t, s(t) = 1; got {:?} schedule",
            sched.kind
        )));
    }
    let n = plan.n();
    let mut run = Run::new(x0, n, retain);
    let mut x = x0.clone();
    for i in 0..n {
        let (t_cur, t_next) = (plan.t[i], plan.t[i + 1]);
        let gamma = sp.gamma(t_cur, n);
        let mut t_hat = t_cur + gamma * t_cur;
        let x_hat = if gamma > 0.0 {
            if let Some(u) = u_table {
                t_hat = u.nearest(t_hat);
            }
            let eps = gaussian(rng, x.shape(), sp.s_noise)?;
            if t_hat > t_cur {
                x.axpy((t_hat * t_hat - t_cur * t_cur).sqrt(), &eps)
            } else {
                t_hat = t_cur;
                x.clone()
            }
        } else {
            x.clone()
        };
        let h = t_next - t_hat;
        let d_cur = ode_derivative(d, sched, &x_hat, t_hat)?;
        let x_euler = x_hat.axpy(h, &d_cur);
        let mut nfe = 1;
        x = if plan.sigma[i + 1] != 0.0 {
            let d_next = ode_derivative(d, sched, &x_euler, t_next)?;
            nfe += 1;
            x_hat.axpy(h, &d_cur.scale(0.5).axpy(0.5, &d_next))
        } else {
            x_euler
        };
        run.record(&x, StepRecord { t_cur, t_hat, t_next, gamma, nfe });
    }
    Ok(run.finish(x))
}

fn euler_maruyama_impl(
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    x0: &Tensor,
    beta: BetaFn,
    rng: &mut RngStream,
    retain: bool,
) -> Result<Trajectory> {
    check_inputs(plan, x0)?;
    let n = plan.n();
    let mut run = Run::new(x0, n, retain);
    let mut x = x0.clone();
    for i in 0..n {
        let (t_cur, t_next) = (plan.t[i], plan.t[i + 1]);
        let h = t_next - t_cur;
        let v = eval_positive(sched, t_cur)?;
        let denoised = denoise_scaled(d, &x, &v)?;
        let d_ode = derivative_from(sched.kind, t_cur, &v, &x, &denoised);
        let b = beta.eval(&v);
        if !(b >= 0.0) || !b.is_finite() {
            return domain_err(format!("beta(t = {t_cur}) = {b} must be finite and >= 0"));
        }
        let z = gaussian(rng, x.shape(), 1.0)?;
        x = if b > 0.0 {
            // reverse-time Langevin: −β σ² ∇log p dt, with dt = h < 0
            let x_unscaled = if v.s == 1.0 { x.clone() } else { x.scale(1.0 / v.s) };
            let score = denoised.sub(&x_unscaled).scale(1.0 / (v.sigma * v.sigma));
            let drift = d_ode.axpy(-v.s * b * v.sigma * v.sigma, &score);
            x.axpy(h, &drift).axpy(v.s * v.sigma * (2.0 * b * h.abs()).sqrt(), &z)
        } else {
            x.axpy(h, &d_ode)
        };
        run.record(&x, StepRecord { t_cur, t_hat: t_cur, t_next, gamma: 0.0, nfe: 1 });
    }
    Ok(run.finish(x))
}

/// First-order Euler: one denoiser evaluation per step.
pub fn sample_euler(d: &impl Denoise, sched: &Schedule, plan: &StepPlan, x0: &Tensor) -> Result<Trajectory> {
    deterministic_impl(&SamplerKind::Euler, d, sched, plan, x0, false)
}

/// Heun's second-order method, with a plain Euler step into `σ = 0`.
pub fn sample_heun(d: &impl Denoise, sched: &Schedule, plan: &StepPlan, x0: &Tensor) -> Result<Trajectory> {
    deterministic_impl(&SamplerKind::Heun, d, sched, plan, x0, false)
}

/// Explicit two-stage RK2 evaluating the second slope at `t_i + αh`.
/// `α = 1` is Heun, `α = ½` midpoint, `α = ⅔` Ralston. Falls back to Euler
/// when the extra evaluation point would have `σ <= 0`.
pub fn sample_rk2_alpha(
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    x0: &Tensor,
    alpha: f64,
) -> Result<Trajectory> {
    deterministic_impl(&SamplerKind::Rk2 { alpha }, d, sched, plan, x0, false)
}

/// Churn sampler: raise the noise level by `γ_i`, then take one Heun step
/// from the raised level. Only defined for `σ(t) = t, s(t) = 1`.
pub fn sample_stochastic(
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    x0: &Tensor,
    sp: &StochasticParams,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    stochastic_impl(d, sched, plan, x0, sp, None, rng, false)
}

/// Euler–Maruyama on the reverse-time SDE (probability-flow ODE plus a
/// Langevin term of rate `β(t)`), with drift and diffusion taken at the
/// start of each step.
pub fn sample_euler_maruyama(
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    x0: &Tensor,
    beta: BetaFn,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    euler_maruyama_impl(d, sched, plan, x0, beta, rng, false)
}

/// Integrates the ODE in the direction of increasing noise, mapping data to
/// its latent. The first leg leaves `σ = 0` using the slope at the first
/// positive noise level; the rest are Heun steps.
pub fn encode(d: &impl Denoise, sched: &Schedule, plan: &StepPlan, x_data: &Tensor) -> Result<Tensor> {
    plan.check()?;
    let ts = plan.reversed_t();
    let mut x = x_data.axpy(ts[1] - ts[0], &ode_derivative(d, sched, x_data, ts[1])?);
    for w in ts[1..].windows(2) {
        let (t_cur, t_next) = (w[0], w[1]);
        let h = t_next - t_cur;
        let d_cur = ode_derivative(d, sched, &x, t_cur)?;
        let x_euler = x.axpy(h, &d_cur);
        let d_next = ode_derivative(d, sched, &x_euler, t_next)?;
        x = x.axpy(h, &d_cur.scale(0.5).axpy(0.5, &d_next));
    }
    Ok(x)
}

/// `x_0 ~ N(0, σ_0² s(t_0)² I)`.
pub fn draw_latent(rng: &mut RngStream, sched: &Schedule, plan: &StepPlan, shape: &[usize]) -> Result<Tensor> {
    let s0 = if sched.kind == ScheduleKind::Edm { 1.0 } else { sched.eval(plan.t[0])?.s };
    gaussian(rng, shape, plan.sigma[0] * s0)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SamplerKind {
    Euler,
    Heun,
    Rk2 { alpha: f64 },
    Stochastic { params: StochasticParams, u_table: Option<Arc<UTable>> },
    EulerMaruyama { beta: BetaFn },
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Euler => "euler",
            SamplerKind::Heun => "heun",
            SamplerKind::Rk2 { .. } => "rk2",
            SamplerKind::Stochastic { .. } => "stochastic",
            SamplerKind::EulerMaruyama { .. } => "em",
        }
    }

    /// Denoiser evaluations this sampler spends on `plan`.
    pub fn expected_nfe(&self, plan: &StepPlan, sched: &Schedule) -> u64 {
        let n = plan.n() as u64;
        match self {
            SamplerKind::Euler | SamplerKind::EulerMaruyama { .. } => n,
            SamplerKind::Heun | SamplerKind::Stochastic { .. } => 2 * n - 1,
            SamplerKind::Rk2 { alpha } if *alpha == 1.0 => 2 * n - 1,
            SamplerKind::Rk2 { alpha } => {
                let extra = plan.t.windows(2).filter(|w| {
                    let t = w[0] + alpha * (w[1] - w[0]);
                    t > 0.0 && sched.sigma(t) > 0.0
                });
                n + extra.count() as u64
            }
        }
    }

    /// Runs one trajectory from `x0`; `rng` feeds stochastic samplers only.
    pub fn run(
        &self,
        d: &impl Denoise,
        sched: &Schedule,
        plan: &StepPlan,
        x0: &Tensor,
        rng: &mut RngStream,
        retain: bool,
    ) -> Result<Trajectory> {
        match self {
            SamplerKind::Euler | SamplerKind::Heun | SamplerKind::Rk2 { .. } => {
                deterministic_impl(self, d, sched, plan, x0, retain)
            }
            SamplerKind::Stochastic { params, u_table } => {
                stochastic_impl(d, sched, plan, x0, params, u_table.as_deref(), rng, retain)
            }
            SamplerKind::EulerMaruyama { beta } => euler_maruyama_impl(d, sched, plan, x0, *beta, rng, retain),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    /// Parses the bare sampler name with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "euler" => SamplerKind::Euler,
            "heun" => SamplerKind::Heun,
            "rk2" => SamplerKind::Rk2 { alpha: 1.0 },
            "stochastic" => SamplerKind::Stochastic { params: StochasticParams::default(), u_table: None },
            "em" | "euler-maruyama" => SamplerKind::EulerMaruyama { beta: BetaFn::SigmaRatio },
            other => return arg_err(format!("unknown sampler '{other}' (euler, heun, rk2, stochastic, em)")),
        })
    }
}

/// Batch of independent trajectories. Trajectory `i` draws everything from
/// stream `(seed, i)`, so the result does not depend on `exec`.
#[derive(Clone, Debug)]
pub struct BatchConfig {
    pub count: usize,
    pub seed: u64,
    pub shape: Vec<usize>,
    pub retain: bool,
    pub exec: Exec,
}

pub fn sample_batch(
    d: &impl Denoise,
    sched: &Schedule,
    plan: &StepPlan,
    kind: &SamplerKind,
    cfg: &BatchConfig,
) -> Result<Vec<Trajectory>> {
    try_map_indexed(cfg.exec, cfg.count, |i| {
        let mut rng = RngStream::new(cfg.seed, i as u64);
        let x0 = draw_latent(&mut rng, sched, plan, &cfg.shape)?;
        kind.run(d, sched, plan, &x0, &mut rng, cfg.retain)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::denoiser::Denoiser;
    use crate::rng::rng_stream;
    use crate::schedules::{steps_edm, steps_vp, Framework, ScheduleParams};

    fn t1(v: f64) -> Tensor {
        Tensor::scalar(v).unwrap()
    }

    fn edm_plan(n: usize) -> StepPlan {
        steps_edm(n, 0.002, 80.0, 7.0).unwrap()
    }

    /// Closed-form endpoint of the EDM ODE for `p_data = N(0, σ_d²)`.
    fn gaussian_endpoint(x_t: f64, t: f64, sd: f64) -> f64 {
        x_t * sd / (sd * sd + t * t).sqrt()
    }

    #[test]
    fn derivative_examples() {
        let g = Denoiser::gaussian(0.5);
        let sched = Schedule::edm();
        for (x, t) in [(1.0, 0.3), (-4.0, 7.0), (80.0, 80.0)] {
            let d = ode_derivative(&g, &sched, &t1(x), t).unwrap().data()[0];
            assert!((d - x * t / (0.25 + t * t)).abs() <= 1e-14 * d.abs().max(1.0));
        }
        let two = Denoiser::analytic(Dataset::two_point());
        let d = ode_derivative(&two, &sched, &t1(0.0), 1.0).unwrap().data()[0];
        assert_eq!(d, 0.0);
        assert!(matches!(ode_derivative(&g, &sched, &t1(1.0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn general_formula_agrees_with_identity_schedule() {
        // VE with t = σ² must give the same trajectory, up to reparameterization
        // of time, as EDM; compare dx/dσ = (dx/dt)/(dσ/dt).
        let g = Denoiser::gaussian(0.5);
        let x = t1(1.7);
        for sigma in [0.1, 1.0, 10.0] {
            let ve = Schedule::ve();
            let t = ve.invert(sigma).unwrap();
            let dxdt = ode_derivative(&g, &ve, &x, t).unwrap().data()[0];
            let dxds = dxdt / ve.eval(t).unwrap().sigma_dot;
            let edm = ode_derivative(&g, &Schedule::edm(), &x, sigma).unwrap().data()[0];
            assert!((dxds - edm).abs() < 1e-12 * edm.abs());
        }
    }

    #[test]
    fn single_euler_step_returns_denoised() {
        let two = Denoiser::analytic(Dataset::two_point());
        let plan = steps_edm(1, 0.002, 80.0, 7.0).unwrap();
        let x0 = t1(13.0);
        let tr = sample_euler(&two, &Schedule::edm(), &plan, &x0).unwrap();
        let d = two.denoise(&x0, 80.0).unwrap().data()[0];
        assert!((tr.sample.data()[0] - d).abs() < 1e-15);
        assert_eq!(tr.nfe, 1);
    }

    #[test]
    fn nfe_accounting() {
        let g = Denoiser::gaussian(0.5);
        let sched = Schedule::edm();
        let plan = edm_plan(12);
        let x0 = t1(30.0);
        let mut rng = rng_stream(0, 0);
        for kind in [
            SamplerKind::Euler,
            SamplerKind::Heun,
            SamplerKind::Rk2 { alpha: 1.0 },
            SamplerKind::Rk2 { alpha: 0.5 },
            SamplerKind::Rk2 { alpha: 1.1 },
            SamplerKind::Stochastic { params: StochasticParams::cifar10_vp(), u_table: None },
            SamplerKind::EulerMaruyama { beta: BetaFn::SigmaRatio },
        ] {
            g.reset_nfe();
            let tr = kind.run(&g, &sched, &plan, &x0, &mut rng, false).unwrap();
            assert_eq!(tr.nfe, kind.expected_nfe(&plan, &sched), "{kind}");
            assert_eq!(g.nfe(), tr.nfe, "{kind}");
        }
    }

    #[test]
    fn gaussian_endpoint_errors_match_independent_integration() {
        // relative endpoint errors from a separate scalar implementation
        let g = Denoiser::gaussian(0.5);
        let want = gaussian_endpoint(80.0, 80.0, 0.5);
        assert!((want - 0.49999023466109294).abs() < 1e-16);
        let rel = |tr: Trajectory| (tr.sample.data()[0] - want).abs() / want;
        for (n, euler, heun) in [
            (64, 0.04411282690830618, 0.0036624588847543886),
            (256, 0.011090370656027622, 0.0002103841460392556),
            (1024, 0.0027820366474511143, 5.484563712786025e-06),
        ] {
            let plan = edm_plan(n);
            let e = rel(sample_euler(&g, &Schedule::edm(), &plan, &t1(80.0)).unwrap());
            let h = rel(sample_heun(&g, &Schedule::edm(), &plan, &t1(80.0)).unwrap());
            assert!((e - euler).abs() < 1e-6 * euler, "euler n={n}: {e}");
            assert!((h - heun).abs() < 1e-6 * heun, "heun n={n}: {h}");
        }
    }

    #[test]
    fn heun_beats_euler_on_gaussian() {
        let g = Denoiser::gaussian(0.5);
        let want = gaussian_endpoint(80.0, 80.0, 0.5);
        let plan = edm_plan(64);
        let e = (sample_euler(&g, &Schedule::edm(), &plan, &t1(80.0)).unwrap().sample.data()[0] - want).abs();
        let h = (sample_heun(&g, &Schedule::edm(), &plan, &t1(80.0)).unwrap().sample.data()[0] - want).abs();
        assert!(h * 10.0 <= e, "heun {h} euler {e}");
    }

    /// D chosen so that dx/dt = a + b·t regardless of x: Heun's trapezoid is exact.
    struct LinearField {
        a: f64,
        b: f64,
    }

    impl Denoise for LinearField {
        fn denoise(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
            // (x − D)/t = a + b t  ⇒  D = x − t(a + b t)
            Ok(x.map(|v| v - sigma * (self.a + self.b * sigma)))
        }
    }

    #[test]
    fn heun_exact_on_linear_field() {
        let field = LinearField { a: 0.3, b: -0.02 };
        let plan = steps_edm(7, 0.5, 20.0, 3.0).unwrap();
        let mut sigmas = plan.sigma.clone();
        *sigmas.last_mut().unwrap() = 0.0;
        // stop before the final Euler step into zero
        let truncated = StepPlan { t: plan.t[..7].to_vec(), sigma: plan.sigma[..7].to_vec(), ..plan.clone() };
        let x0 = 2.0;
        let run = deterministic_impl(&SamplerKind::Heun, &field, &Schedule::edm(), &plan, &t1(x0), true).unwrap();
        let states = run.states.unwrap();
        for (i, s) in states.iter().enumerate().take(7) {
            let t = truncated.t[i];
            let t0 = plan.t[0];
            let exact = x0 + field.a * (t - t0) + 0.5 * field.b * (t * t - t0 * t0);
            assert!((s.data()[0] - exact).abs() < 1e-12, "step {i}");
        }
    }

    #[test]
    fn rk2_alpha_one_is_heun() {
        let two = Denoiser::analytic(Dataset::two_point());
        let mut rng = rng_stream(4, 0);
        for n in [1, 2, 5, 32] {
            for sched in [Schedule::edm(), Schedule::vp()] {
                let plan = if sched.kind == ScheduleKind::Vp {
                    steps_vp(n, &ScheduleParams::vp()).unwrap()
                } else {
                    edm_plan(n)
                };
                let x0 = t1(rng.standard_normal() * plan.sigma[0]);
                let a = sample_heun(&two, &sched, &plan, &x0).unwrap();
                let b = sample_rk2_alpha(&two, &sched, &plan, &x0, 1.0).unwrap();
                assert_eq!(a.sample.data()[0].to_bits(), b.sample.data()[0].to_bits());
            }
        }
        assert!(sample_rk2_alpha(&two, &Schedule::edm(), &edm_plan(3), &t1(0.0), 0.0).is_err());
        assert!(sample_rk2_alpha(&two, &Schedule::edm(), &edm_plan(3), &t1(0.0), 1.3).is_err());
    }

    #[test]
    fn ralston_and_heun_agree_as_n_grows() {
        let g = Denoiser::gaussian(0.5);
        let diff = |n| {
            let plan = edm_plan(n);
            let a = sample_rk2_alpha(&g, &Schedule::edm(), &plan, &t1(23.0), 2.0 / 3.0).unwrap();
            let b = sample_heun(&g, &Schedule::edm(), &plan, &t1(23.0)).unwrap();
            (a.sample.data()[0] - b.sample.data()[0]).abs()
        };
        let (d16, d64) = (diff(16), diff(64));
        assert!(d64 < d16, "{d16} {d64}");
    }

    #[test]
    fn zero_churn_is_heun_bit_for_bit() {
        let ds = Dataset::grid2d(3).unwrap();
        let d = Denoiser::analytic(ds);
        let plan = edm_plan(18);
        let mut r = rng_stream(1, 1);
        let x0 = gaussian(&mut r, &[2], 80.0).unwrap();
        let heun = sample_heun(&d, &Schedule::edm(), &plan, &x0).unwrap();
        let sp = StochasticParams { s_churn: 0.0, s_tmin: 0.05, s_tmax: 50.0, s_noise: 1.003 };
        let st = sample_stochastic(&d, &Schedule::edm(), &plan, &x0, &sp, &mut r).unwrap();
        assert_eq!(heun.sample, st.sample);
        assert_eq!(heun.nfe, st.nfe);
    }

    #[test]
    fn churn_gamma_clamped() {
        let sp = StochasticParams { s_churn: 80.0, ..Default::default() };
        assert!((sp.gamma(1.0, 18) - 0.41421356237309515).abs() < 1e-15);
        let sp = StochasticParams { s_churn: 5.0, s_tmin: 0.1, s_tmax: 10.0, s_noise: 1.0 };
        assert_eq!(sp.gamma(0.05, 10), 0.0);
        assert_eq!(sp.gamma(20.0, 10), 0.0);
        assert_eq!(sp.gamma(1.0, 10), 0.5f64.min(MAX_GAMMA));

        let g = Denoiser::gaussian(0.5);
        let plan = edm_plan(18);
        let sp = StochasticParams { s_churn: 80.0, ..Default::default() };
        let tr = sample_stochastic(&g, &Schedule::edm(), &plan, &t1(3.0), &sp, &mut rng_stream(0, 0)).unwrap();
        for s in &tr.steps {
            assert_eq!(s.gamma, MAX_GAMMA);
            assert!((s.t_hat - s.t_cur * SQRT_2).abs() < 1e-12 * s.t_hat);
        }
    }

    #[test]
    fn stochastic_rejects_non_identity_schedule() {
        let g = Denoiser::gaussian(0.5);
        let plan = steps_vp(8, &ScheduleParams::vp()).unwrap();
        let r = sample_stochastic(&g, &Schedule::vp(), &plan, &t1(1.0), &Default::default(), &mut rng_stream(0, 0));
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn stochastic_rounds_to_u_grid() {
        let table = UTable::cached(1000, 0.001, 0.008).unwrap();
        let plan = crate::schedules::steps_iddpm(16, 1000, 0.001, 0.008, 8).unwrap();
        let kind =
            SamplerKind::Stochastic { params: StochasticParams::imagenet_pretrained(), u_table: Some(table.clone()) };
        let g = Denoiser::gaussian(0.5);
        let tr = kind.run(&g, &Schedule::edm(), &plan, &t1(10.0), &mut rng_stream(2, 0), false).unwrap();
        for s in tr.steps.iter().filter(|s| s.gamma > 0.0) {
            assert_eq!(table.nearest(s.t_hat), s.t_hat);
        }
    }

    #[test]
    fn em_with_zero_beta_is_euler() {
        let d = Denoiser::analytic(Dataset::grid2d(2).unwrap());
        for (sched, plan) in
            [(Schedule::edm(), edm_plan(20)), (Schedule::vp(), steps_vp(20, &ScheduleParams::vp()).unwrap())]
        {
            let mut r = rng_stream(6, 0);
            let x0 = draw_latent(&mut r, &sched, &plan, &[2]).unwrap();
            let e = sample_euler(&d, &sched, &plan, &x0).unwrap();
            let m = sample_euler_maruyama(&d, &sched, &plan, &x0, BetaFn::Constant(0.0), &mut r).unwrap();
            assert_eq!(e.sample, m.sample);
        }
    }

    #[test]
    fn encode_inverts_decode() {
        let g = Denoiser::gaussian(0.5);
        let sched = Schedule::edm();
        let plan = edm_plan(1024);
        let y = t1(0.4);
        let z = encode(&g, &sched, &plan, &y).unwrap().data()[0];
        let want = 0.4 * (0.25f64 + 6400.0).sqrt() / 0.5;
        assert!((z - want).abs() < 1e-3 * want, "{z} vs {want}");

        let two = Denoiser::analytic(Dataset::two_point());
        let plan = edm_plan(256);
        for y in [-1.0, 1.0] {
            let z = encode(&two, &sched, &plan, &t1(y)).unwrap();
            let back = sample_heun(&two, &sched, &plan, &z).unwrap().sample.data()[0];
            assert!((back - y).abs() < 1e-3, "{y} -> {back}");
        }
    }

    #[test]
    fn vp_schedule_sampling_matches_edm_endpoint() {
        // Same ODE solution family: VP with fine steps lands on the same
        // Gaussian endpoint given the same unscaled starting point.
        let g = Denoiser::gaussian(0.5);
        let vp = Schedule::vp();
        let plan = steps_vp(2048, &ScheduleParams::vp()).unwrap();
        let v0 = vp.eval(plan.t[0]).unwrap();
        let x_hat = 50.0;
        let tr = sample_heun(&g, &vp, &plan, &t1(x_hat * v0.s)).unwrap();
        // at t_N = 0, s = 1; the last step starts at sigma(eps_s) ~ 1e-3
        let want = gaussian_endpoint(x_hat, v0.sigma, 0.5);
        assert!((tr.sample.data()[0] - want).abs() < 1e-4 * want.abs(), "{} {want}", tr.sample.data()[0]);
    }

    #[test]
    fn batch_is_exec_independent() {
        let two = Denoiser::analytic(Dataset::two_point());
        let plan = edm_plan(16);
        let kind = SamplerKind::Stochastic { params: StochasticParams::cifar10_vp(), u_table: None };
        let mut cfg = BatchConfig { count: 40, seed: 17, shape: vec![1], retain: false, exec: Exec::Sequential };
        let a = sample_batch(&two, &Schedule::edm(), &plan, &kind, &cfg).unwrap();
        cfg.exec = Exec::Parallel;
        let b = sample_batch(&two, &Schedule::edm(), &plan, &kind, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("heun".parse::<SamplerKind>().unwrap(), SamplerKind::Heun);
        assert!("rk4".parse::<SamplerKind>().is_err());
        assert_eq!(Framework::Edm.name(), "edm");
    }
}
