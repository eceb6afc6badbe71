use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use edm_core::analysis::{self, csv_num, ErrorCurve, GroundTruth};
use edm_core::augment::{augment_image, AugmentConstants};
use edm_core::par::try_map_indexed;
use edm_core::samplers::{self, BatchConfig, BetaFn, SamplerKind, StochasticParams};
use edm_core::schedules::UTable;
use edm_core::training::{self, MlpDenoiser, TrainConfig, SIGMA_BUCKET_EDGES};
use edm_core::{rng_stream, Dataset, Exec, Framework, Preconditioner, ScheduleParams, Tensor};

use crate::args::*;
use crate::report::Report;
use crate::specs::{self, streams};

/// Default size and dimension of `gaussian:<σ_data>` datasets named inline.
const INLINE_COUNT: usize = 1024;
const INLINE_DIM: usize = 1;

pub fn run(cmd: &Command, seed: u64, report: &mut Report) -> Result<()> {
    match cmd {
        Command::Steps(a) => steps(a, report),
        Command::Sample(a) => sample(a, seed, report),
        Command::Encode(a) => encode(a, seed, report),
        Command::Train(a) => train(a, seed, report),
        Command::LossProfile(a) => loss_profile(a, seed, report),
        Command::Augment(a) => augment(a, seed, report),
        Command::TruncationScan(a) => truncation_scan(a, seed, report),
        Command::Order(a) => order(a, seed, report),
        Command::Roundtrip(a) => roundtrip(a, seed, report),
        Command::Churn(a) => churn(a, seed, report),
        Command::MakeDataset(a) => make_dataset(a, seed, report),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn is_dataset_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "edmd")
}

fn coord_header(prefix: &str, len: usize) -> String {
    let mut s = prefix.to_string();
    for k in 0..len {
        s.push_str(&format!(",x{k}"));
    }
    s
}

fn push_coords(line: &mut String, t: &Tensor) {
    for v in t.data() {
        line.push(',');
        line.push_str(&csv_num(*v));
    }
}

/// `index[,nfe],x0,…` with every tensor flattened row-major.
fn tensors_csv(rows: &[Tensor], nfe: Option<&[u64]>) -> String {
    let len = rows.first().map_or(0, Tensor::len);
    let mut s = coord_header(if nfe.is_some() { "index,nfe" } else { "index" }, len);
    s.push('\n');
    for (i, t) in rows.iter().enumerate() {
        s.push_str(&i.to_string());
        if let Some(n) = nfe {
            s.push_str(&format!(",{}", n[i]));
        }
        push_coords(&mut s, t);
        s.push('\n');
    }
    s
}

/// Samples go to a dataset file for `.edmd`, CSV otherwise.
fn emit_tensors(out: Option<&Path>, name: &str, rows: Vec<Tensor>, nfe: Option<&[u64]>) -> Result<()> {
    match out {
        Some(p) if is_dataset_file(p) => {
            Dataset::new(name, rows)?.save(p).with_context(|| format!("writing {}", p.display()))
        }
        _ => emit(out, &tensors_csv(&rows, nfe)),
    }
}

fn emit_curve(out: Option<&Path>, curve: &ErrorCurve) -> Result<()> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    emit(out, &String::from_utf8(buf).expect("CSV is ASCII"))
}

fn augment_constants(a: &AugmentConstantArgs) -> Result<AugmentConstants> {
    let c = AugmentConstants { a_prob: a.a_prob, a_scale: a.a_scale, a_aniso: a.a_aniso, a_trans: a.a_trans };
    c.validate()?;
    Ok(c)
}

fn solver_kind(solver: SolverArg, alpha: f64) -> Result<SamplerKind> {
    if solver != SolverArg::Rk2 && alpha != 1.0 {
        bail!("--alpha only applies to --solver rk2");
    }
    Ok(match solver {
        SolverArg::Euler => SamplerKind::Euler,
        SolverArg::Heun => SamplerKind::Heun,
        SolverArg::Rk2 => SamplerKind::Rk2 { alpha },
    })
}

fn parse_beta(s: &str) -> Result<BetaFn> {
    if s == "sigma-ratio" {
        return Ok(BetaFn::SigmaRatio);
    }
    let v: f64 = s.parse().with_context(|| format!("--beta must be 'sigma-ratio' or a number, got '{s}'"))?;
    if !(v >= 0.0) || !v.is_finite() {
        bail!("--beta must be finite and >= 0, got {v}");
    }
    Ok(BetaFn::Constant(v))
}

/// Resolves sampler flags, rejecting flags that the chosen sampler ignores
/// and combinations the schedule cannot support.
fn sampler_kind(s: &SamplerArgs, framework: Framework, params: &ScheduleParams) -> Result<SamplerKind> {
    let churn_flags = s.churn_preset.is_some()
        || s.s_churn.is_some()
        || s.s_tmin.is_some()
        || s.s_tmax.is_some()
        || s.s_noise.is_some();
    if s.sampler != SamplerArg::Stochastic && churn_flags {
        bail!("--churn-preset and --s-* only apply to --sampler stochastic");
    }
    if s.sampler != SamplerArg::Rk2 && s.alpha != 1.0 {
        bail!("--alpha only applies to --sampler rk2");
    }
    if s.sampler != SamplerArg::Em && s.beta != "sigma-ratio" {
        bail!("--beta only applies to --sampler em");
    }
    Ok(match s.sampler {
        SamplerArg::Euler => SamplerKind::Euler,
        SamplerArg::Heun => SamplerKind::Heun,
        SamplerArg::Rk2 => SamplerKind::Rk2 { alpha: s.alpha },
        SamplerArg::Em => SamplerKind::EulerMaruyama { beta: parse_beta(&s.beta)? },
        SamplerArg::Stochastic => {
            if matches!(framework, Framework::Vp | Framework::Ve) {
                bail!(
                    "the stochastic sampler needs σ(t) = t and s(t) = 1; use --framework edm or iddpm \
                     (got {framework}), or --sampler em"
                );
            }
            let mut p = match s.churn_preset {
                None => StochasticParams::default(),
                Some(ChurnPreset::Cifar10Vp) => StochasticParams::cifar10_vp(),
                Some(ChurnPreset::Cifar10Ve) => StochasticParams::cifar10_ve(),
                Some(ChurnPreset::ImagenetPretrained) => StochasticParams::imagenet_pretrained(),
                Some(ChurnPreset::ImagenetRetrained) => StochasticParams::imagenet_retrained(),
            };
            p.s_churn = s.s_churn.unwrap_or(p.s_churn);
            p.s_tmin = s.s_tmin.unwrap_or(p.s_tmin);
            p.s_tmax = s.s_tmax.unwrap_or(p.s_tmax);
            p.s_noise = s.s_noise.unwrap_or(p.s_noise);
            p.validate()?;
            let u_table = match framework {
                Framework::Iddpm => Some(UTable::from_params(params)?),
                _ => None,
            };
            SamplerKind::Stochastic { params: p, u_table }
        }
    })
}

fn steps(a: &StepsArgs, report: &mut Report) -> Result<()> {
    let (fw, params) = specs::schedule_params(&a.plan)?;
    let plan = specs::plan(&a.plan, fw, &params, a.plan.n)?;
    let mut s = String::from("i,t,sigma\n");
    for (i, (t, sigma)) in plan.t.iter().zip(&plan.sigma).enumerate() {
        s.push_str(&format!("{i},{},{}\n", csv_num(*t), csv_num(*sigma)));
    }
    report.push("sigma_0", csv_num(plan.sigma[0]));
    report.push("sigma_last_positive", csv_num(plan.sigma[plan.n() - 1]));
    emit(a.out.as_deref(), &s)
}

fn sample(a: &SampleArgs, seed: u64, report: &mut Report) -> Result<()> {
    let (fw, params) = specs::schedule_params(&a.plan)?;
    let kind = sampler_kind(&a.sampler, fw, &params)?;
    let sched = fw.schedule(params);
    let plan = specs::plan(&a.plan, fw, &params, a.plan.n)?;
    let loaded = specs::denoiser(&a.denoiser, fw, &params, seed)?;
    let shape = loaded.shape.clone().unwrap_or_else(|| vec![a.dim]);
    let cfg = BatchConfig { count: a.count, seed, shape, retain: a.trajectories.is_some(), exec: Exec::default() };
    let trajs = samplers::sample_batch(&loaded.denoiser, &sched, &plan, &kind, &cfg)?;

    if let Some(path) = &a.trajectories {
        let len = trajs.first().map_or(0, |t| t.sample.len());
        let mut s = coord_header("index,step,t,sigma", len);
        s.push('\n');
        for (i, tr) in trajs.iter().enumerate() {
            for (k, x) in tr.states.as_deref().unwrap_or_default().iter().enumerate() {
                s.push_str(&format!("{i},{k},{},{}", csv_num(plan.t[k]), csv_num(plan.sigma[k])));
                push_coords(&mut s, x);
                s.push('\n');
            }
        }
        emit(Some(path), &s)?;
    }

    let nfe: Vec<u64> = trajs.iter().map(|t| t.nfe).collect();
    report.push("nfe_total", nfe.iter().sum::<u64>());
    report.push("nfe_per_sample", nfe.first().copied().unwrap_or(0));
    report.push("nfe_expected", kind.expected_nfe(&plan, &sched));
    let samples = trajs.into_iter().map(|t| t.sample).collect();
    emit_tensors(a.out.as_deref(), "samples", samples, Some(&nfe))
}

fn encode(a: &EncodeArgs, seed: u64, report: &mut Report) -> Result<()> {
    let (fw, params) = specs::schedule_params(&a.plan)?;
    let sched = fw.schedule(params);
    let plan = specs::plan(&a.plan, fw, &params, a.plan.n)?;
    let loaded = specs::denoiser(&a.denoiser, fw, &params, seed)?;
    let data = specs::dataset(&a.input, seed, INLINE_COUNT, INLINE_DIM)?;
    let latents = try_map_indexed(Exec::default(), data.len(), |i| {
        samplers::encode(&loaded.denoiser, &sched, &plan, &data.samples()[i])
    })?;
    report.push("encoded", latents.len());
    emit_tensors(a.out.as_deref(), "latents", latents, None)
}

fn bucket_names() -> Vec<String> {
    let e = SIGMA_BUCKET_EDGES;
    let mut names = vec![format!("loss_sigma_lt_{}", e[0])];
    names.extend(e.windows(2).map(|w| format!("loss_sigma_{}_{}", w[0], w[1])));
    names.push(format!("loss_sigma_ge_{}", e[e.len() - 1]));
    names
}

fn train(a: &TrainArgs, seed: u64, report: &mut Report) -> Result<()> {
    let data = specs::dataset(&a.data, seed, INLINE_COUNT, INLINE_DIM)?;
    let framework = Framework::from(a.framework);
    let cfg = TrainConfig {
        p_mean: a.p_mean,
        p_std: a.p_std,
        sigma_data: a.sigma_data,
        lr: a.lr,
        batch: a.batch,
        steps: a.steps,
        log_every: a.log_every,
        augment: if a.augment { Some(augment_constants(&a.constants)?) } else { None },
        ..TrainConfig::for_framework(framework)
    };
    cfg.validate()?;
    let cond_dim = if a.augment { edm_core::augment::LABEL_DIM } else { 0 };
    let net = MlpDenoiser::new(data.dim(), &a.hidden, cond_dim, &mut rng_stream(seed, streams::INIT))?;
    let (net, records) = training::train_loop(net, &data, &cfg, &mut rng_stream(seed, streams::TRAIN))?;
    net.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;

    let mut s = String::from("step,loss");
    for name in bucket_names() {
        s.push(',');
        s.push_str(&name);
    }
    s.push('\n');
    for r in &records {
        s.push_str(&format!("{},{}", r.step, csv_num(r.mean_loss)));
        for b in &r.buckets {
            s.push(',');
            if let Some(v) = b {
                s.push_str(&csv_num(*v));
            }
        }
        s.push('\n');
    }
    match &a.log {
        Some(p) => emit(Some(p), &s)?,
        None => eprint!("{s}"),
    }
    if let Some(last) = records.last() {
        report.push("final_loss", csv_num(last.mean_loss));
    }
    report.push("parameters", net.params().len());
    Ok(())
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || points == 0 {
        bail!("grid needs 0 < min <= max and at least one point");
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|k| match k {
            0 => lo,
            k if k + 1 == points => hi,
            k => (a + (b - a) * k as f64 / (points - 1) as f64).exp(),
        })
        .collect())
}

fn loss_profile(a: &LossProfileArgs, seed: u64, report: &mut Report) -> Result<()> {
    let framework = Framework::from(a.framework);
    // weighting follows the training configuration of the framework
    let params = TrainConfig::for_framework(framework).params;
    let loaded = specs::denoiser(&a.denoiser, framework, &params, seed)?;
    let data = specs::dataset(&a.data, seed, INLINE_COUNT, INLINE_DIM)?;
    let sigmas = if a.sigmas.is_empty() { log_grid(a.grid_min, a.grid_max, a.grid_points)? } else { a.sigmas.clone() };
    if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        bail!("every σ must be finite and > 0");
    }
    let precond = Preconditioner::new(framework, a.denoiser.sigma_data, params)?;
    let mut rng = rng_stream(seed, streams::PROFILE);
    let points = training::loss_profile(&loaded.denoiser, &precond, &data, &sigmas, a.draws, &mut rng)?;
    let mut s = String::from("sigma,mean,std\n");
    for p in &points {
        s.push_str(&format!("{},{},{}\n", csv_num(p.sigma), csv_num(p.mean), csv_num(p.std)));
    }
    report.push("points", points.len());
    emit(a.out.as_deref(), &s)
}

fn augment(a: &AugmentArgs, seed: u64, report: &mut Report) -> Result<()> {
    let data = specs::dataset(&a.data, seed, INLINE_COUNT, INLINE_DIM)?;
    let constants = augment_constants(&a.constants)?;
    // image i draws from stream i, independent of the other images
    let out = try_map_indexed(Exec::default(), data.len(), |i| {
        augment_image(&data.samples()[i], &mut rng_stream(seed, i as u64), &constants)
    })?;
    let (images, labels): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    if let Some(path) = &a.labels {
        let mut s = String::from("index");
        for k in 0..edm_core::augment::LABEL_DIM {
            s.push_str(&format!(",l{k}"));
        }
        s.push('\n');
        for (i, l) in labels.iter().enumerate() {
            s.push_str(&i.to_string());
            for v in l.0 {
                s.push(',');
                s.push_str(&csv_num(v));
            }
            s.push('\n');
        }
        emit(Some(path), &s)?;
    }
    report.push("augmented", images.len());
    report.push("identity_labels", labels.iter().filter(|l| l.is_zero()).count());
    Dataset::new(format!("{}-augmented", data.name()), images)?
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))
}

fn truncation_scan(a: &ScanArgs, seed: u64, report: &mut Report) -> Result<()> {
    let (fw, params) = specs::schedule_params(&a.plan)?;
    let sched = fw.schedule(params);
    let plan = specs::plan(&a.plan, fw, &params, a.plan.n)?;
    let loaded = specs::denoiser(&a.denoiser, fw, &params, seed)?;
    let kind = solver_kind(a.solver, a.alpha)?;
    let truth = match a.truth {
        TruthArg::Fine => GroundTruth::FineEuler { substeps: a.substeps },
        TruthArg::Gaussian => GroundTruth::GaussianClosedForm,
    };
    let mut rng = rng_stream(seed, streams::SCAN);
    let curve =
        analysis::truncation_scan(&loaded.denoiser, &sched, &plan, &kind, truth, a.trials, &mut rng, Exec::default())?;
    report.push("points", curve.len());
    emit_curve(a.out.as_deref(), &curve)
}

fn order(a: &OrderArgs, seed: u64, report: &mut Report) -> Result<()> {
    let (fw, params) = specs::schedule_params(&a.plan)?;
    let sched = fw.schedule(params);
    let loaded = specs::denoiser(&a.denoiser, fw, &params, seed)?;
    let kind = solver_kind(a.solver, a.alpha)?;
    let shape = loaded.shape.clone().unwrap_or_else(|| vec![a.dim]);
    let plan_args = a.plan.clone();
    let plan_for = move |n: usize| -> edm_core::Result<edm_core::StepPlan> {
        specs::plan(&plan_args, fw, &params, n).map_err(|e| edm_core::Error::Argument(format!("{e:#}")))
    };
    let mut rng = rng_stream(seed, streams::ORDER);
    let fit = analysis::convergence_order(
        &loaded.denoiser,
        &sched,
        &plan_for,
        &a.ns,
        &kind,
        a.trials,
        &shape,
        &mut rng,
        Exec::default(),
    )?;
    eprintln!("order: slope {}", csv_num(fit.slope));
    report.push("slope", csv_num(fit.slope));
    emit_curve(a.out.as_deref(), &fit.curve)
}

fn roundtrip(a: &RoundtripArgs, seed: u64, report: &mut Report) -> Result<()> {
    let (fw, params) = specs::schedule_params(&a.plan)?;
    let sched = fw.schedule(params);
    let loaded = specs::denoiser(&a.denoiser, fw, &params, seed)?;
    let data = match (&a.data, loaded.denoiser.dataset()) {
        (Some(spec), _) => specs::dataset(spec, seed, INLINE_COUNT, INLINE_DIM)?,
        (None, Some(ds)) => ds.clone(),
        (None, None) => bail!("--data is required unless the denoiser is analytic:<dataset>"),
    };
    let plan_args = a.plan.clone();
    let plan_for = move |n: usize| -> edm_core::Result<edm_core::StepPlan> {
        specs::plan(&plan_args, fw, &params, n).map_err(|e| edm_core::Error::Argument(format!("{e:#}")))
    };
    let curve =
        analysis::roundtrip_error(&loaded.denoiser, &sched, &plan_for, &a.ns, &data, a.trials, Exec::default())?;
    report.push("points", curve.len());
    emit_curve(a.out.as_deref(), &curve)
}

fn churn(a: &ChurnArgs, seed: u64, report: &mut Report) -> Result<()> {
    let fw = Framework::Edm;
    let loaded = specs::denoiser(&a.denoiser, fw, &fw.preset(), seed)?;
    let r = analysis::churn_degradation(
        &loaded.denoiser,
        a.sigma,
        a.iterations,
        a.s_noise,
        a.trials,
        a.stride,
        seed,
        Exec::default(),
    )?;
    eprintln!("churn: drift {} (se {})", csv_num(r.drift), csv_num(r.drift_se));
    report.push("drift", csv_num(r.drift));
    report.push("drift_se", csv_num(r.drift_se));
    emit_curve(a.out.as_deref(), &r.curve)
}

fn make_dataset(a: &MakeDatasetArgs, seed: u64, report: &mut Report) -> Result<()> {
    let ds = specs::dataset(&a.spec, seed, a.count, a.dim)?;
    report.push("count", ds.len());
    report.push("shape", format!("{:?}", ds.sample_shape()).replace(',', ";"));
    let name = ds.name().to_string();
    emit_tensors(Some(&a.out), &name, ds.samples().to_vec(), None)
}
