//! Error measurements on samplers: local truncation error per step,
//! global convergence order, encode/decode round trips, and degradation
//! under repeated fixed-σ churn.

use std::fmt;
use std::io::Write;

use crate::dataset::Dataset;
use crate::denoiser::{Denoise, Denoiser, DenoiserKind};
use crate::error::{arg_err, Error, Result};
use crate::par::{try_map_indexed, Exec};
use crate::rng::{gaussian, RngStream};
use crate::samplers::{deterministic_step, draw_latent, encode, ode_derivative, SamplerKind, MAX_GAMMA};
use crate::schedules::{Schedule, ScheduleKind, StepPlan};
use crate::tensor::Tensor;

/// Shortest representation that parses back to the same `f64`.
pub fn csv_num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Abscissa {
    Sigma,
    Steps,
    Iteration,
}

impl Abscissa {
    pub fn name(self) -> &'static str {
        match self {
            Abscissa::Sigma => "sigma",
            Abscissa::Steps => "n",
            Abscissa::Iteration => "iteration",
        }
    }
}

/// Mean and spread of an RMSE metric against a sorted abscissa.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub abscissa_kind: Abscissa,
    pub abscissa: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ErrorCurve {
    fn from_samples(kind: Abscissa, abscissa: Vec<f64>, samples: &[Vec<f64>]) -> Self {
        let (mean, std) = samples.iter().map(|s| mean_std(s)).unzip();
        Self { abscissa_kind: kind, abscissa, mean, std }
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    /// `abscissa,mean,std` rows under a header naming the abscissa.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{},mean,std", self.abscissa_kind.name())?;
        for ((a, m), s) in self.abscissa.iter().zip(&self.mean).zip(&self.std) {
            let a = match self.abscissa_kind {
                Abscissa::Sigma => csv_num(*a),
                _ => format!("{}", *a as u64),
            };
            writeln!(w, "{a},{},{}", csv_num(*m), csv_num(*s))?;
        }
        Ok(())
    }
}

impl fmt::Display for ErrorCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

/// Mean and (population) standard deviation; `(0, 0)` for an empty slice.
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn rmse(a: &Tensor, b: &Tensor) -> f64 {
    a.sub(b).norm() / (a.len() as f64).sqrt()
}

/// Reference solution for one step of the truncation scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroundTruth {
    /// Euler with this many equal substeps of the interval.
    FineEuler { substeps: usize },
    /// Exact flow for Gaussian data (requires a Gaussian denoiser).
    GaussianClosedForm,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth::FineEuler { substeps: 200 }
    }
}

fn fine_euler(
    d: &impl Denoise,
    sched: &Schedule,
    x: &Tensor,
    t_cur: f64,
    t_next: f64,
    substeps: usize,
) -> Result<Tensor> {
    let mut x = x.clone();
    let h = t_next - t_cur;
    for k in 0..substeps {
        let a = t_cur + h * (k as f64 / substeps as f64);
        let b = if k + 1 == substeps { t_next } else { t_cur + h * ((k + 1) as f64 / substeps as f64) };
        x = x.axpy(b - a, &ode_derivative(d, sched, &x, a)?);
    }
    Ok(x)
}

/// `x̂ = x/s` scales by `√(σ_d² + σ²)` along the Gaussian flow.
fn gaussian_flow(sd: f64, sched: &Schedule, x: &Tensor, t_cur: f64, t_next: f64) -> Result<Tensor> {
    let scale_at = |t: f64| -> Result<(f64, f64)> {
        if sched.kind == ScheduleKind::Edm {
            Ok((t, 1.0))
        } else {
            let v = sched.eval(t)?;
            Ok((v.sigma, v.s))
        }
    };
    let (s0, sc0) = scale_at(t_cur)?;
    let (s1, sc1) = if t_next == 0.0 { (0.0, 1.0) } else { scale_at(t_next)? };
    Ok(x.scale(sc1 / sc0 * (sd * sd + s1 * s1).sqrt() / (sd * sd + s0 * s0).sqrt()))
}

/// Draws `x ~ p(x; σ(t))` in the scaled space of `sched`.
fn draw_marginal(d: &Denoiser, sched: &Schedule, t: f64, shape: &[usize], rng: &mut RngStream) -> Result<Tensor> {
    let v = sched.eval(t)?;
    let clean = match d.kind() {
        DenoiserKind::Analytic(ds) => ds.samples()[rng.index(ds.len())].clone(),
        DenoiserKind::Gaussian { sigma_data } => gaussian(rng, shape, *sigma_data)?,
        DenoiserKind::Preconditioned { .. } => {
            return Err(Error::Unsupported("truncation scan needs an analytic or Gaussian denoiser".into()))
        }
    };
    Ok(clean.axpy(v.sigma, &gaussian(rng, shape, 1.0)?).scale(v.s))
}

/// Local truncation error of `solver` at every step of `plan`: start from a
/// fresh `x_i ~ p(x; σ_i)`, take one step, compare with `truth`. The curve is
/// indexed by the step's starting σ, ascending.
#[allow(clippy::too_many_arguments)]
pub fn truncation_scan(
    d: &Denoiser,
    sched: &Schedule,
    plan: &StepPlan,
    solver: &SamplerKind,
    truth: GroundTruth,
    trials: usize,
    rng: &mut RngStream,
    exec: Exec,
) -> Result<ErrorCurve> {
    plan.check()?;
    if trials == 0 {
        return arg_err("truncation scan needs trials >= 1");
    }
    let sd = match (truth, d.kind()) {
        (GroundTruth::FineEuler { substeps: 0 }, _) => return arg_err("substeps must be >= 1"),
        (GroundTruth::FineEuler { .. }, _) => None,
        (GroundTruth::GaussianClosedForm, DenoiserKind::Gaussian { sigma_data }) => Some(*sigma_data),
        (GroundTruth::GaussianClosedForm, _) => {
            return Err(Error::Unsupported("closed-form ground truth needs a Gaussian denoiser".into()))
        }
    };
    let shape = match d.kind() {
        DenoiserKind::Analytic(ds) => ds.sample_shape().to_vec(),
        _ => vec![1],
    };
    let n = plan.n();
    // starting points are drawn up front so the result is exec-independent
    let mut starts = Vec::with_capacity(n);
    for i in 0..n {
        starts.push((0..trials).map(|_| draw_marginal(d, sched, plan.t[i], &shape, rng)).collect::<Result<Vec<_>>>()?);
    }
    let per_step = try_map_indexed(exec, n, |i| {
        let (t_cur, t_next) = (plan.t[i], plan.t[i + 1]);
        starts[i]
            .iter()
            .map(|x| {
                let (step, _) = deterministic_step(solver, d, sched, x, t_cur, t_next, plan.sigma[i + 1])?;
                let truth = match (truth, sd) {
                    (GroundTruth::FineEuler { substeps }, _) => fine_euler(d, sched, x, t_cur, t_next, substeps)?,
                    (_, Some(sd)) => gaussian_flow(sd, sched, x, t_cur, t_next)?,
                    _ => unreachable!("checked above"),
                };
                Ok(rmse(&step, &truth))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut abscissa = plan.sigma[..n].to_vec();
    let mut samples = per_step;
    abscissa.reverse();
    samples.reverse();
    Ok(ErrorCurve::from_samples(Abscissa::Sigma, abscissa, &samples))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderFit {
    /// Least-squares slope of `ln(mean RMSE)` against `ln N`.
    pub slope: f64,
    pub curve: ErrorCurve,
}

/// Endpoint error of `kind` for each `N` in `ns`, measured against the same
/// method run with `8 · max(ns)` steps from the same latents.
#[allow(clippy::too_many_arguments)]
pub fn convergence_order(
    d: &impl Denoise,
    sched: &Schedule,
    plan_for: &(dyn Fn(usize) -> Result<StepPlan> + Sync),
    ns: &[usize],
    kind: &SamplerKind,
    trials: usize,
    shape: &[usize],
    rng: &mut RngStream,
    exec: Exec,
) -> Result<OrderFit> {
    if ns.len() < 2 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return arg_err(format!("need at least two strictly increasing step counts, got {ns:?}"));
    }
    if trials == 0 {
        return arg_err("convergence order needs trials >= 1");
    }
    if matches!(kind, SamplerKind::Stochastic { .. } | SamplerKind::EulerMaruyama { .. }) {
        return Err(Error::Unsupported(format!("convergence order is defined for deterministic samplers, not {kind}")));
    }
    let n_ref = 8 * ns[ns.len() - 1];
    let ref_plan = plan_for(n_ref)?;
    let plans = ns.iter().map(|&n| plan_for(n)).collect::<Result<Vec<_>>>()?;
    let latents = (0..trials).map(|_| draw_latent(rng, sched, &ref_plan, shape)).collect::<Result<Vec<_>>>()?;
    let mut dummy = RngStream::new(0, 0);
    let per_trial = try_map_indexed(exec, trials, |k| {
        let mut dummy = dummy.clone();
        let reference = kind.run(d, sched, &ref_plan, &latents[k], &mut dummy, false)?.sample;
        plans
            .iter()
            .map(|p| Ok(rmse(&kind.run(d, sched, p, &latents[k], &mut dummy, false)?.sample, &reference)))
            .collect::<Result<Vec<f64>>>()
    })?;
    let _ = dummy.next_u64();
    let samples: Vec<Vec<f64>> = (0..ns.len()).map(|j| per_trial.iter().map(|t| t[j]).collect()).collect();
    let curve = ErrorCurve::from_samples(Abscissa::Steps, ns.iter().map(|&n| n as f64).collect(), &samples);
    if curve.mean.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Domain("zero endpoint error; slope undefined".into()));
    }
    let xs: Vec<f64> = curve.abscissa.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = curve.mean.iter().map(|e| e.ln()).collect();
    Ok(OrderFit { slope: ls_slope(&xs, &ys), curve })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Encodes each of `trials` points of `data` (taken in order, cycling) with
/// an `N`-step plan and decodes with Heun on the same plan.
pub fn roundtrip_error(
    d: &impl Denoise,
    sched: &Schedule,
    plan_for: &(dyn Fn(usize) -> Result<StepPlan> + Sync),
    ns: &[usize],
    data: &Dataset,
    trials: usize,
    exec: Exec,
) -> Result<ErrorCurve> {
    if trials == 0 || ns.is_empty() {
        return arg_err("round trip needs trials >= 1 and at least one step count");
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    let mut samples = Vec::with_capacity(ns.len());
    for &n in &ns {
        let plan = plan_for(n)?;
        let errs = try_map_indexed(exec, trials, |k| {
            let y = &data.samples()[k % data.len()];
            let z = encode(d, sched, &plan, y)?;
            let mut unused = RngStream::new(0, 0);
            let back = SamplerKind::Heun.run(d, sched, &plan, &z, &mut unused, false)?.sample;
            Ok(rmse(&back, y))
        })?;
        samples.push(errs);
    }
    Ok(ErrorCurve::from_samples(Abscissa::Steps, ns.iter().map(|&n| n as f64).collect(), &samples))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChurnResult {
    /// Nearest-data-point distance of `D(x; σ)` at recorded iterations.
    pub curve: ErrorCurve,
    /// `|mean(late) − mean(early)|`, each over a tenth of the recorded points.
    pub drift: f64,
    /// Standard error of `drift` across trials.
    pub drift_se: f64,
}

/// Repeated add-noise / remove-noise cycles at a fixed σ with the maximal
/// churn `γ = √2 − 1`; each cycle is one Heun step from `(1 + γ)σ` back to σ.
/// Trial `k` uses stream `(seed, k)`; every `stride`-th iteration is recorded.
#[allow(clippy::too_many_arguments)]
pub fn churn_degradation(
    d: &Denoiser,
    sigma: f64,
    iterations: usize,
    s_noise: f64,
    trials: usize,
    stride: usize,
    seed: u64,
    exec: Exec,
) -> Result<ChurnResult> {
    let DenoiserKind::Analytic(ds) = d.kind() else {
        return Err(Error::Unsupported("churn degradation needs a dataset-backed (analytic) denoiser".into()));
    };
    if !(sigma > 0.0) || !(s_noise > 0.0) || trials == 0 || stride == 0 {
        return arg_err("need sigma > 0, S_noise > 0, trials >= 1, stride >= 1");
    }
    let sched = Schedule::edm();
    let t_hat = (1.0 + MAX_GAMMA) * sigma;
    let inject = (t_hat * t_hat - sigma * sigma).sqrt();
    let recorded: Vec<usize> = (0..=iterations).filter(|k| k % stride == 0).collect();
    let per_trial = try_map_indexed(exec, trials, |k| {
        let mut rng = RngStream::new(seed, k as u64);
        let mut x = draw_marginal(d, &sched, sigma, ds.sample_shape(), &mut rng)?;
        let mut out = Vec::with_capacity(recorded.len());
        for it in 0..=iterations {
            if it > 0 {
                let x_hat = x.axpy(inject, &gaussian(&mut rng, x.shape(), s_noise)?);
                x = deterministic_step(&SamplerKind::Heun, d, &sched, &x_hat, t_hat, sigma, sigma)?.0;
            }
            if it % stride == 0 {
                out.push(ds.nearest_distance(&d.denoise(&x, sigma)?));
            }
        }
        Ok(out)
    })?;
    let samples: Vec<Vec<f64>> = (0..recorded.len()).map(|j| per_trial.iter().map(|t| t[j]).collect()).collect();
    let curve = ErrorCurve::from_samples(Abscissa::Iteration, recorded.iter().map(|&r| r as f64).collect(), &samples);
    let w = (recorded.len() / 10).max(1);
    let diffs: Vec<f64> = per_trial
        .iter()
        .map(|t| {
            let early = t[..w].iter().sum::<f64>() / w as f64;
            let late = t[t.len() - w..].iter().sum::<f64>() / w as f64;
            late - early
        })
        .collect();
    let (m, s) = mean_std(&diffs);
    Ok(ChurnResult { curve, drift: m.abs(), drift_se: s / (trials as f64).sqrt() })
}
