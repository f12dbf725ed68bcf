use std::path::Path;

use serde_json::{json, Value};

use nfconv::convolution::{
    convolve_grid, equal_effort, metrics, reference_grid, GridOptions, Sampling, ScaleMap,
};
use nfconv::fields::{GridField, SignalField};
use nfconv::integral_training::{train_integral_field_with_progress, MlpCheckpoint, TrainConfig};
use nfconv::io_formats::{
    read_checkpoint, read_kernel_json, write_checkpoint, write_kernel_json, KernelMeta,
};
use nfconv::kernels::{
    fit_kernel_with_progress, transform_kernel, DiracMixture, FitConfig, TargetKernel,
    TransformSpec,
};

use crate::config::{pick, Config};
use crate::error::{at, CliError, CliResult};
use crate::log::{number, Log};
use crate::signal::{load_signal, parse_resolution, save_signal};
use crate::{
    BenchCommand, Command, ConvApplyArgs, ConvCommand, ConvReferenceArgs, EqualEffortArgs,
    EvalCommand, EvalCompareArgs, FieldCommand, FieldTrainArgs, KernelCommand, KernelFitArgs,
    KernelTransformArgs,
};

pub fn run(command: &Command, cfg: &Config, log: &Log) -> CliResult<()> {
    let name = match command {
        Command::Kernel(KernelCommand::Fit(a)) => kernel_fit(a, cfg, log).map(|()| "kernel fit"),
        Command::Kernel(KernelCommand::Transform(a)) => {
            kernel_transform(a).map(|()| "kernel transform")
        }
        Command::Field(FieldCommand::Train(a)) => field_train(a, cfg, log).map(|()| "field train"),
        Command::Conv(ConvCommand::Apply(a)) => conv_apply(a, log).map(|()| "conv apply"),
        Command::Conv(ConvCommand::Reference(a)) => {
            conv_reference(a, cfg, log).map(|()| "conv reference")
        }
        Command::Eval(EvalCommand::Compare(a)) => eval_compare(a).map(|()| "eval compare"),
        Command::Bench(BenchCommand::EqualEffort(a)) => {
            bench_equal_effort(a, cfg, log).map(|()| "bench equal-effort")
        }
    }?;
    log.event("done", json!({ "command": name }));
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_kernel(path: &Path) -> CliResult<(DiracMixture, KernelMeta)> {
    read_kernel_json(&read_text(path)?).map_err(at(path))
}

fn load_field(path: &Path) -> CliResult<MlpCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    read_checkpoint(&bytes).map_err(at(path))
}

/// Parses `name:param[:dims]`; without dims the kernel spans `default_dim`.
fn parse_target(spec: &str, default_dim: usize) -> CliResult<TargetKernel> {
    let full = if spec.matches(':').count() == 1 {
        format!("{spec}:{default_dim}")
    } else {
        spec.to_string()
    };
    Ok(full.parse::<TargetKernel>()?)
}

fn kernel_fit(a: &KernelFitArgs, cfg: &Config, log: &Log) -> CliResult<()> {
    let spec = format!("{}:{}:{}", a.target, a.param, a.dim);
    let target: TargetKernel = spec.parse()?;
    let c = &cfg.kernel;
    let defaults = FitConfig::new(0);
    let fit_cfg = FitConfig {
        budget: pick(a.budget, c.budget, 13),
        lambda: pick(a.lambda, c.lambda, defaults.lambda),
        seed: pick(a.seed, c.seed, defaults.seed),
        iterations: pick(a.iterations, c.iterations, defaults.iterations),
        ..defaults
    };
    let fitted = fit_kernel_with_progress(&target, a.order, &fit_cfg, &mut |iteration, mse| {
        log.event("fit", json!({ "iteration": iteration, "mse": number(mse) }));
    })?;
    let meta = KernelMeta {
        target: Some(target.to_string()),
        mse: Some(fitted.mse),
        extra: Default::default(),
    };
    write_file(&a.out, write_kernel_json(&fitted.mixture, &meta).as_bytes())?;
    log.event(
        "result",
        json!({ "diracs": fitted.mixture.len(), "pruned": fitted.pruned, "mse": number(fitted.mse) }),
    );
    println!(
        "{} Diracs, mse {:.4e} (target {target}, order {})",
        fitted.mixture.len(),
        fitted.mse,
        a.order
    );
    Ok(())
}

fn transform_from_json(v: &Value) -> Option<TransformSpec> {
    let list =
        |k: &str| -> Option<Vec<f64>> { v.get(k)?.as_array()?.iter().map(Value::as_f64).collect() };
    Some(TransformSpec {
        scale: list("scale")?,
        shift: list("shift")?,
    })
}

fn scaled_target(name: &str, s: f64) -> Option<String> {
    let t: TargetKernel = name.parse().ok()?;
    t.scaled(s).ok().map(|t| t.to_string())
}

fn kernel_transform(a: &KernelTransformArgs) -> CliResult<()> {
    let (m, mut meta) = load_kernel(&a.input)?;
    let d = m.dim();
    let scale = match a.scale.len() {
        1 => vec![a.scale[0]; d],
        n if n == d => a.scale.clone(),
        n => return Err(CliError::invalid(format!("{n} scales for a {d}D kernel"))),
    };
    let shift = a.shift.clone().unwrap_or_else(|| vec![0.0; d]);
    if shift.len() != d {
        return Err(CliError::invalid(format!(
            "{} shifts for a {d}D kernel",
            shift.len()
        )));
    }
    let spec = TransformSpec { scale, shift };
    let out = transform_kernel(&m, &spec)?;

    // The meta records the transform accumulated since the fit.
    let total = meta
        .extra
        .get("transform")
        .and_then(transform_from_json)
        .filter(|t| t.scale.len() == d)
        .map_or_else(|| spec.clone(), |prev| spec.compose(&prev));
    meta.extra.insert(
        "transform".into(),
        json!({ "scale": total.scale, "shift": total.shift }),
    );
    let uniform = spec.scale.iter().all(|s| *s == spec.scale[0]);
    if let Some(t) = meta.target.as_deref() {
        meta.target = if uniform {
            scaled_target(t, spec.scale[0])
        } else {
            None
        };
    }
    write_file(&a.out, write_kernel_json(&out, &meta).as_bytes())
}

fn field_train(a: &FieldTrainArgs, cfg: &Config, log: &Log) -> CliResult<()> {
    let grid = load_signal(&a.input)?;
    let din = grid.din();
    let c = &cfg.field;
    let defaults = TrainConfig::default();
    let iters = pick(a.iters, c.iters, defaults.phase1_iterations);
    let train_cfg = TrainConfig {
        w1: pick(a.w1, c.w1, defaults.w1),
        w2: pick(a.w2, c.w2, defaults.w2),
        seed: pick(a.seed, c.seed, defaults.seed),
        batch_size: pick(a.batch_size, c.batch_size, defaults.batch_size),
        mc_samples: pick(a.mc_samples, c.mc_samples, defaults.mc_samples),
        lr: pick(a.lr, c.lr, defaults.lr),
        hidden: pick(a.hidden.clone(), c.hidden.clone(), defaults.hidden.clone()),
        ..defaults
    }
    .with_iterations(iters);
    let order = pick(a.order, c.order, 1);
    let d_k = pick(a.kernel_dims, c.kernel_dims, din);
    let f = SignalField::Grid(grid);
    let ckpt = train_integral_field_with_progress(
        &f,
        order,
        d_k,
        &train_cfg,
        &mut |phase, iteration, loss| {
            log.event(
                "train",
                json!({ "phase": phase, "iteration": iteration, "loss": number(loss) }),
            );
        },
    )?;
    write_file(&a.out, &write_checkpoint(&ckpt))?;
    log.event(
        "result",
        json!({ "final_loss": number(ckpt.meta.final_loss) }),
    );
    println!(
        "order {order}, {d_k} kernel axes, final loss {:.4e}",
        ckpt.meta.final_loss
    );
    Ok(())
}

fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::invalid(format!("scale range must be smin:smax, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn resolution(s: &str) -> CliResult<Vec<usize>> {
    parse_resolution(s).map_err(CliError::Invalid)
}

fn conv_apply(a: &ConvApplyArgs, log: &Log) -> CliResult<()> {
    let h = load_field(&a.field)?;
    let (m, _) = load_kernel(&a.kernel)?;
    let res = resolution(&a.res)?;
    let map = match (&a.scale_map, &a.scale_range) {
        (Some(path), range) => {
            let aux = load_signal(path)?;
            let (lo, hi) = range.as_deref().map_or(Ok((1.0, 1.0)), parse_range)?;
            Some(ScaleMap::from_range(aux, lo, hi)?)
        }
        (None, Some(_)) => return Err(CliError::invalid("--scale-range needs --scale-map")),
        (None, None) => None,
    };
    let signal = a
        .input
        .as_deref()
        .map(load_signal)
        .transpose()?
        .map(SignalField::Grid);
    let opts = GridOptions {
        scale_map: map.as_ref(),
        fallback_signal: signal.as_ref(),
        seed: a.seed,
        ..GridOptions::default()
    };
    let result = convolve_grid(&h, &m, &res, &opts)?;
    save_signal(&a.out, &result.output, a.sample_rate)?;
    let stats = json!({
        "diracs": m.len(),
        "pixels": result.stats.pixels,
        "field_evaluations": result.stats.field_evaluations,
        "evaluations_per_pixel": [result.stats.evaluations_per_pixel.0, result.stats.evaluations_per_pixel.1],
        "fallback_pixels": result.stats.fallback_pixels,
        "fallback_evaluations": result.stats.fallback_evaluations,
        "seconds": result.stats.seconds,
    });
    if let Some(path) = &a.stats {
        let text = serde_json::to_string_pretty(&stats).expect("plain JSON");
        write_file(path, format!("{text}\n").as_bytes())?;
    }
    log.event("result", stats);
    Ok(())
}

fn parse_sampling(s: &str) -> CliResult<Sampling> {
    match s {
        "stratified" => Ok(Sampling::Stratified),
        "uniform" => Ok(Sampling::Uniform),
        _ => Err(CliError::invalid(format!(
            "sampling must be stratified or uniform, got {s:?}"
        ))),
    }
}

fn conv_reference(a: &ConvReferenceArgs, cfg: &Config, log: &Log) -> CliResult<()> {
    let grid = load_signal(&a.input)?;
    let target = parse_target(&a.kernel_analytic, grid.din())?;
    let res = match &a.res {
        Some(r) => resolution(r)?,
        None => grid.resolution().to_vec(),
    };
    let samples = pick(a.samples, cfg.reference.samples, 4096);
    let seed = pick(a.seed, cfg.reference.seed, 0);
    let sampling = parse_sampling(&a.sampling)?;
    let f = SignalField::Grid(grid);
    let out = reference_grid(&f, &target, &res, samples, sampling, seed)?;
    save_signal(&a.out, &out, a.sample_rate)?;
    log.event(
        "result",
        json!({ "kernel": target.to_string(), "samples": samples, "seed": seed }),
    );
    Ok(())
}

/// Metric values as printed: shortest round-trip decimal, or `inf`.
fn format_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn eval_compare(a: &EvalCompareArgs) -> CliResult<()> {
    let x = load_signal(&a.a)?;
    let y = load_signal(&a.b)?;
    let m = metrics(&x, &y)?;
    let mut obj = serde_json::Map::new();
    let mut lines = Vec::new();
    for name in &a.metrics {
        let v = match name.trim() {
            "mse" => m.mse,
            "psnr" => m.psnr,
            "peak" => m.peak,
            other => {
                return Err(CliError::invalid(format!(
                    "unknown metric {other:?} (expected mse, psnr or peak)"
                )))
            }
        };
        obj.insert(name.trim().into(), number(v));
        lines.push(format!("{} {}", name.trim(), format_value(v)));
    }
    if a.json {
        println!("{}", Value::Object(obj));
    } else {
        println!("{}", lines.join("\n"));
    }
    Ok(())
}

fn bench_equal_effort(a: &EqualEffortArgs, cfg: &Config, log: &Log) -> CliResult<()> {
    let h = load_field(&a.field)?;
    let (m, _) = load_kernel(&a.kernel)?;
    let grid = load_signal(&a.input)?;
    let target = parse_target(&a.target, m.dim())?;
    let res = match &a.res {
        Some(r) => resolution(r)?,
        None => grid.resolution().to_vec(),
    };
    let reference_samples = pick(a.reference_samples, cfg.bench.reference_samples, 4096);
    let seed = pick(a.seed, cfg.bench.seed, 0);
    let f = SignalField::Grid(grid);
    let (report, outputs) = equal_effort(&h, &m, &f, &target, &res, reference_samples, seed)?;
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let ext = if res.len() == 1 { "csv" } else { "pfm" };
        let save =
            |name: &str, g: &GridField| save_signal(&dir.join(format!("{name}.{ext}")), g, 44_100);
        save("sparse", &outputs.sparse)?;
        save("monte_carlo", &outputs.monte_carlo)?;
        save("reference", &outputs.reference)?;
    }
    let summary = json!({
        "evaluations_per_pixel": report.evaluations_per_pixel,
        "mc_samples": report.mc_samples,
        "reference_samples": report.reference_samples,
        "sparse": { "mse": number(report.sparse.mse), "psnr": number(report.sparse.psnr) },
        "monte_carlo": { "mse": number(report.monte_carlo.mse), "psnr": number(report.monte_carlo.psnr) },
    });
    log.event("result", summary.clone());
    if a.json {
        println!("{summary}");
    } else {
        println!(
            "sparse      {} evaluations/px  psnr {} dB  mse {}",
            report.evaluations_per_pixel,
            format_value(report.sparse.psnr),
            format_value(report.sparse.mse)
        );
        println!(
            "monte carlo {} samples/px      psnr {} dB  mse {}",
            report.mc_samples,
            format_value(report.monte_carlo.psnr),
            format_value(report.monte_carlo.mse)
        );
        println!("reference   {} samples/px", report.reference_samples);
    }
    Ok(())
}
