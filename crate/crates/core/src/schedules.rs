//! Noise schedules `σ(t)`, scalings `s(t)` and the time-step plans of the
//! four sampler families (VP, VE, iDDPM/DDIM and EDM).

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{arg_err, domain_err, Error, Result};

/// The four columns of the design-space table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Framework {
    Vp,
    Ve,
    Iddpm,
    Edm,
}

impl Framework {
    pub const ALL: [Framework; 4] = [Framework::Vp, Framework::Ve, Framework::Iddpm, Framework::Edm];

    pub fn name(self) -> &'static str {
        match self {
            Framework::Vp => "vp",
            Framework::Ve => "ve",
            Framework::Iddpm => "iddpm",
            Framework::Edm => "edm",
        }
    }

    /// Preset parameters for sampling.
    pub fn preset(self) -> ScheduleParams {
        match self {
            Framework::Vp => ScheduleParams::vp(),
            Framework::Ve => ScheduleParams::ve_sampling(),
            Framework::Iddpm => ScheduleParams::iddpm(),
            Framework::Edm => ScheduleParams::edm(),
        }
    }

    /// The ODE schedule each framework samples with. iDDPM (via DDIM) uses
    /// `σ(t) = t, s(t) = 1`, same as EDM.
    pub fn schedule(self, params: ScheduleParams) -> Schedule {
        let kind = match self {
            Framework::Vp => ScheduleKind::Vp,
            Framework::Ve => ScheduleKind::Ve,
            Framework::Iddpm | Framework::Edm => ScheduleKind::Edm,
        };
        Schedule { kind, params }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vp" => Ok(Framework::Vp),
            "ve" => Ok(Framework::Ve),
            "iddpm" | "ddim" => Ok(Framework::Iddpm),
            "edm" | "ours" => Ok(Framework::Edm),
            other => arg_err(format!("unknown framework '{other}' (expected vp, ve, iddpm or edm)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `σ(t) = √(exp(½β_d t² + β_min t) − 1)`, `s(t) = 1/√(σ(t)² + 1)`
    Vp,
    /// `σ(t) = √t`, `s(t) = 1`
    Ve,
    /// `σ(t) = t`, `s(t) = 1`
    Edm,
}

/// Union of every framework's constants. Only the fields relevant to a given
/// schedule or plan are read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    pub beta_d: f64,
    pub beta_min: f64,
    pub eps_s: f64,
    pub eps_t: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
    pub j0: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self::edm()
    }
}

impl ScheduleParams {
    pub fn edm() -> Self {
        Self {
            beta_d: 19.9,
            beta_min: 0.1,
            eps_s: 1e-3,
            eps_t: 1e-5,
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            m: 1000,
            c1: 0.001,
            c2: 0.008,
            j0: 8,
        }
    }

    /// VP: `σ_min`/`σ_max` are the noise levels at `t = ε_s` and `t = 1`.
    pub fn vp() -> Self {
        let base = Self::edm();
        let vp = Schedule { kind: ScheduleKind::Vp, params: base };
        Self { sigma_min: vp.sigma(base.eps_s), sigma_max: vp.sigma(1.0), ..base }
    }

    /// VE noise range the model supports.
    pub fn ve() -> Self {
        Self { sigma_min: 0.02, sigma_max: 100.0, ..Self::edm() }
    }

    /// VE range used when sampling.
    pub fn ve_sampling() -> Self {
        Self { sigma_min: 0.02, sigma_max: 80.0, ..Self::edm() }
    }

    pub fn iddpm() -> Self {
        Self { sigma_min: 0.0064, ..Self::edm() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return arg_err(format!("need 0 < sigma_min < sigma_max, got {} and {}", self.sigma_min, self.sigma_max));
        }
        if !(self.rho >= 1.0) {
            return arg_err(format!("rho must be >= 1, got {}", self.rho));
        }
        if self.m < 2 {
            return arg_err(format!("M must be >= 2, got {}", self.m));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return arg_err(format!("C1 must lie in (0, 1), got {}", self.c1));
        }
        if !(self.beta_d > 0.0 && self.beta_min >= 0.0) {
            return arg_err("VP needs beta_d > 0 and beta_min >= 0");
        }
        if !(self.eps_s > 0.0 && self.eps_s < 1.0) {
            return arg_err(format!("eps_s must lie in (0, 1), got {}", self.eps_s));
        }
        Ok(())
    }
}

/// `σ(t)`, `σ̇(t)`, `s(t)`, `ṡ(t)` at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleValues {
    pub sigma: f64,
    pub sigma_dot: f64,
    pub s: f64,
    pub s_dot: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub params: ScheduleParams,
}

impl Schedule {
    pub fn edm() -> Self {
        Self { kind: ScheduleKind::Edm, params: ScheduleParams::edm() }
    }

    pub fn vp() -> Self {
        Self { kind: ScheduleKind::Vp, params: ScheduleParams::vp() }
    }

    pub fn ve() -> Self {
        Self { kind: ScheduleKind::Ve, params: ScheduleParams::ve_sampling() }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == ScheduleKind::Edm
    }

    fn vp_alpha(&self, t: f64) -> (f64, f64) {
        let p = &self.params;
        (0.5 * p.beta_d * t * t + p.beta_min * t, p.beta_d * t + p.beta_min)
    }

    /// `σ(t)`, defined for every `t >= 0` (including `σ(0) = 0`).
    pub fn sigma(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Vp => self.vp_alpha(t).0.exp_m1().sqrt(),
            ScheduleKind::Ve => t.sqrt(),
            ScheduleKind::Edm => t,
        }
    }

    /// Full evaluation including derivatives. VP and VE need `t > 0` because
    /// `σ̇` diverges at the origin; EDM accepts `t >= 0`.
    pub fn eval(&self, t: f64) -> Result<ScheduleValues> {
        let ok = match self.kind {
            ScheduleKind::Edm => t >= 0.0,
            _ => t > 0.0,
        };
        if !ok || !t.is_finite() {
            return domain_err(format!("t = {t} outside the {:?} schedule domain", self.kind));
        }
        Ok(match self.kind {
            ScheduleKind::Vp => {
                let (alpha, alpha_dot) = self.vp_alpha(t);
                let sigma = alpha.exp_m1().sqrt();
                let s = (-0.5 * alpha).exp();
                ScheduleValues {
                    sigma,
                    sigma_dot: alpha_dot * alpha.exp() / (2.0 * sigma),
                    s,
                    s_dot: -0.5 * alpha_dot * s,
                }
            }
            ScheduleKind::Ve => {
                let sigma = t.sqrt();
                ScheduleValues { sigma, sigma_dot: 0.5 / sigma, s: 1.0, s_dot: 0.0 }
            }
            ScheduleKind::Edm => ScheduleValues { sigma: t, sigma_dot: 1.0, s: 1.0, s_dot: 0.0 },
        })
    }

    /// `σ⁻¹(σ)`.
    pub fn invert(&self, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return domain_err(format!("cannot invert schedule at sigma = {sigma}"));
        }
        Ok(match self.kind {
            ScheduleKind::Vp => {
                let p = &self.params;
                let disc = p.beta_min * p.beta_min + 2.0 * p.beta_d * (sigma * sigma).ln_1p();
                (disc.sqrt() - p.beta_min) / p.beta_d
            }
            ScheduleKind::Ve => sigma * sigma,
            ScheduleKind::Edm => sigma,
        })
    }

    /// Drift and diffusion coefficients of the equivalent forward SDE
    /// `dx = f(t)x dt + g(t) dω`: `f = ṡ/s`, `g = s√(2σ̇σ)`.
    pub fn f_g(&self, t: f64) -> Result<(f64, f64)> {
        let v = self.eval(t)?;
        Ok((v.s_dot / v.s, v.s * (2.0 * v.sigma_dot * v.sigma).sqrt()))
    }
}

pub fn schedule_eval(sched: &Schedule, t: f64) -> Result<ScheduleValues> {
    sched.eval(t)
}

pub fn schedule_invert(sched: &Schedule, sigma: f64) -> Result<f64> {
    sched.invert(sigma)
}

pub fn fg_from_schedule(sched: &Schedule, t: f64) -> Result<(f64, f64)> {
    sched.f_g(t)
}

/// Descending sampling times `t_0 > … > t_N` with `σ(t_N) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPlan {
    pub framework: Framework,
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl StepPlan {
    fn build(framework: Framework, t: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let plan = Self { framework, t, sigma };
        plan.check()?;
        Ok(plan)
    }

    /// Number of steps `N`; the plan holds `N + 1` entries.
    pub fn n(&self) -> usize {
        self.t.len() - 1
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }

    pub fn check(&self) -> Result<()> {
        if self.t.len() < 2 || self.t.len() != self.sigma.len() {
            return arg_err("plan needs N + 1 >= 2 matching t and sigma entries");
        }
        if *self.sigma.last().unwrap() != 0.0 {
            return arg_err("plan must end at sigma = 0");
        }
        if self.sigma.windows(2).any(|w| !(w[0] > w[1])) {
            return arg_err("plan sigmas must be strictly decreasing");
        }
        if self.t.windows(2).any(|w| !(w[0] > w[1])) {
            return arg_err("plan times must be strictly decreasing");
        }
        Ok(())
    }

    /// Maps each positive `σ_i` through `σ⁻¹` of `sched`, appending `t_N` with
    /// `σ(t_N) = 0`. Lets any discretization drive any schedule.
    pub fn from_sigmas(framework: Framework, sched: &Schedule, sigmas: &[f64]) -> Result<Self> {
        let mut t = sigmas.iter().map(|&s| sched.invert(s)).collect::<Result<Vec<_>>>()?;
        let mut sigma = sigmas.to_vec();
        t.push(0.0);
        sigma.push(0.0);
        Self::build(framework, t, sigma)
    }

    /// The reversed sequence, for integrating from the data towards noise.
    pub fn reversed_t(&self) -> Vec<f64> {
        self.t.iter().rev().copied().collect()
    }
}

/// `i / (N − 1)`, with the single-step plan mapping to 0.
fn ramp(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Polynomial-warp noise levels
/// `σ_i = (σ_max^{1/ρ} + i/(N−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ`, `σ_N = 0`.
pub fn edm_sigmas(n: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return arg_err("N must be >= 1");
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max) {
        return arg_err(format!("need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"));
    }
    if !(rho >= 1.0) {
        return arg_err(format!("rho must be >= 1, got {rho}"));
    }
    let (lo, hi) = (sigma_min.powf(1.0 / rho), sigma_max.powf(1.0 / rho));
    Ok((0..n)
        .map(|i| match i {
            0 => sigma_max,
            i if i == n - 1 => sigma_min,
            i => (hi + ramp(i, n) * (lo - hi)).powf(rho),
        })
        .collect())
}

pub fn steps_edm(n: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<StepPlan> {
    let sigmas = edm_sigmas(n, sigma_min, sigma_max, rho)?;
    StepPlan::from_sigmas(Framework::Edm, &Schedule::edm(), &sigmas)
}

/// Uniform times in `[ε_s, 1]` through the VP schedule of `params`.
pub fn steps_vp(n: usize, params: &ScheduleParams) -> Result<StepPlan> {
    if n == 0 {
        return arg_err("N must be >= 1");
    }
    if !(params.eps_s > 0.0 && params.eps_s < 1.0) {
        return arg_err(format!("eps_s must lie in (0, 1), got {}", params.eps_s));
    }
    let sched = Schedule { kind: ScheduleKind::Vp, params: *params };
    let mut t: Vec<f64> = (0..n)
        .map(|i| if n > 1 && i == n - 1 { params.eps_s } else { 1.0 + ramp(i, n) * (params.eps_s - 1.0) })
        .collect();
    t.push(0.0);
    let sigma = t.iter().map(|&t| sched.sigma(t)).collect();
    StepPlan::build(Framework::Vp, t, sigma)
}

/// Geometric noise levels from `σ_max` to `σ_min`, `t_i = σ_i²`.
pub fn steps_ve(n: usize, sigma_min: f64, sigma_max: f64) -> Result<StepPlan> {
    if n == 0 {
        return arg_err("N must be >= 1");
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max) {
        return arg_err(format!("need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"));
    }
    let ratio = sigma_min / sigma_max;
    let sigmas: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => sigma_max,
            i if i == n - 1 => sigma_min,
            i => sigma_max * ratio.powf(ramp(i, n)),
        })
        .collect();
    StepPlan::from_sigmas(Framework::Ve, &Schedule::ve(), &sigmas)
}

/// The discrete noise levels `{u_j}`, `j = 0..=M`, of an iDDPM model,
/// descending with `u_M = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct UTable {
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
    u: Vec<f64>,
}

impl UTable {
    /// Runs the recurrence
    /// `u_{j−1} = √((u_j² + 1) / max(ᾱ_{j−1}/ᾱ_j, C₁) − 1)` from `u_M = 0`,
    /// with `ᾱ_j = sin²(π/2 · j / (M(1 + C₂)))`.
    pub fn compute(m: usize, c1: f64, c2: f64) -> Result<Self> {
        if m < 2 {
            return arg_err(format!("M must be >= 2, got {m}"));
        }
        if !(c1 > 0.0 && c1 < 1.0) {
            return arg_err(format!("C1 must lie in (0, 1), got {c1}"));
        }
        let alpha_bar = |j: usize| (FRAC_PI_2 * j as f64 / (m as f64 * (1.0 + c2))).sin().powi(2);
        let mut u = vec![0.0; m + 1];
        for j in (1..=m).rev() {
            let ratio = (alpha_bar(j - 1) / alpha_bar(j)).max(c1);
            u[j - 1] = ((u[j] * u[j] + 1.0) / ratio - 1.0).sqrt();
        }
        Ok(Self { m, c1, c2, u })
    }

    /// Shared table for `(M, C₁, C₂)`, computed once per process.
    pub fn cached(m: usize, c1: f64, c2: f64) -> Result<Arc<Self>> {
        type Key = (usize, u64, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<UTable>>>> = OnceLock::new();
        let key = (m, c1.to_bits(), c2.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(t) = cache.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let table = Arc::new(Self::compute(m, c1, c2)?);
        cache.lock().unwrap().insert(key, table.clone());
        Ok(table)
    }

    pub fn from_params(p: &ScheduleParams) -> Result<Arc<Self>> {
        Self::cached(p.m, p.c1, p.c2)
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn get(&self, j: usize) -> f64 {
        self.u[j]
    }

    /// `argmin_j |u_j − σ|`, ties resolved to the smaller `j`.
    pub fn nearest_index(&self, sigma: f64) -> usize {
        // u is descending: first index with u_j <= sigma
        let k = self.u.partition_point(|&v| v > sigma);
        if k == 0 {
            return 0;
        }
        if k > self.m {
            return self.m;
        }
        let (above, below) = (self.u[k - 1] - sigma, sigma - self.u[k]);
        if above <= below {
            k - 1
        } else {
            k
        }
    }

    pub fn nearest(&self, sigma: f64) -> f64 {
        self.u[self.nearest_index(sigma)]
    }
}

/// iDDPM/DDIM plan: `t_i = u_j` with `j = ⌊j₀ + (M − 1 − j₀)/(N − 1) · i⌋`.
pub fn steps_iddpm(n: usize, m: usize, c1: f64, c2: f64, j0: usize) -> Result<StepPlan> {
    if n == 0 {
        return arg_err("N must be >= 1");
    }
    if j0 >= m || n > m - j0 {
        return arg_err(format!("N = {n} exceeds M − j0 = {}", m.saturating_sub(j0)));
    }
    let table = UTable::cached(m, c1, c2)?;
    let span = (m - 1 - j0) as f64;
    let mut t: Vec<f64> = (0..n)
        .map(|i| {
            let j = (j0 as f64 + span * ramp(i, n)).floor() as usize;
            table.get(j.min(m - 1))
        })
        .collect();
    t.push(0.0);
    let sigma = t.clone();
    StepPlan::build(Framework::Iddpm, t, sigma)
}

/// Each framework's native discretization with the given constants.
pub fn native_plan(framework: Framework, n: usize, p: &ScheduleParams) -> Result<StepPlan> {
    match framework {
        Framework::Edm => steps_edm(n, p.sigma_min, p.sigma_max, p.rho),
        Framework::Vp => steps_vp(n, p),
        Framework::Ve => steps_ve(n, p.sigma_min, p.sigma_max),
        Framework::Iddpm => steps_iddpm(n, p.m, p.c1, p.c2, p.j0),
    }
}

/// Polynomial-warp noise levels mapped through the framework's schedule.
/// For iDDPM every `σ_i` is first rounded to its nearest supported `u_j`.
pub fn rho_plan(framework: Framework, n: usize, p: &ScheduleParams) -> Result<StepPlan> {
    let mut sigmas = edm_sigmas(n, p.sigma_min, p.sigma_max, p.rho)?;
    if framework == Framework::Iddpm {
        let table = UTable::from_params(p)?;
        for s in &mut sigmas {
            *s = table.nearest(*s);
        }
        sigmas.dedup();
    }
    StepPlan::from_sigmas(framework, &framework.schedule(*p), &sigmas)
}
