use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;

use qsampler_core::benchmark::{self, crossover, linear_fit, measure_throughput, BenchResult, CrossoverSource};
use qsampler_core::rng;
use qsampler_core::samplers::lif::{default_sweep, lif_calibrate, lif_calibrate_range};
use qsampler_core::quantum::TetrahedralPovm;
use qsampler_core::samplers::{nyquist_scan, nyquist_scan_against, BackendTag, LifConfig};
use qsampler_core::topology::{build_topology, init_params, Checkpoint, InitScheme, NetworkParams};
use qsampler_core::trainer::{evaluate, target_distribution, train as run_training, Backend, TrainConfig};

use crate::config::{self, BenchConfig, CalibrateConfig, EvalConfig, NetworkSource, NyquistConfig};
use crate::{Context, Failure};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(Failure::runtime)?;
    writeln!(f).and_then(|_| f.flush()).map_err(Failure::runtime)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure::Config(format!("checkpoint {}: {e}", path.display())))
}

/// Attaches a calibration when the config has none.
fn calibrated(mut lif: LifConfig, seed: u64) -> Result<LifConfig, Failure> {
    lif.validate().map_err(Failure::config)?;
    if lif.calibration.is_none() {
        let cal = lif_calibrate(&lif, 11, 20_000.0, rng::derive_seed(seed, "lif-calibration")).map_err(Failure::runtime)?;
        lif.calibration = Some(cal);
    }
    Ok(lif)
}

pub fn train(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: TrainConfig = config::load(&ctx.config)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(Failure::config)?;
    build_topology(cfg.topology.kind, cfg.target.n_visible(), &cfg.topology.hidden_sizes).map_err(Failure::config)?;

    let report = run_training(&cfg).map_err(Failure::runtime)?;
    let mut history = create(&ctx.out, "history.jsonl")?;
    report.write_history(&mut history).map_err(Failure::runtime)?;
    history.flush().map_err(Failure::runtime)?;

    let dir = ctx.out.join("checkpoints");
    for c in &report.checkpoints {
        let mut f = create(&dir, &format!("epoch_{:06}.json", c.epoch))?;
        serde_json::to_writer_pretty(&mut f, c).map_err(Failure::runtime)?;
        f.flush().map_err(Failure::runtime)?;
    }

    let last = report.records.iter().rev().find(|r| r.is_evaluation());
    let summary = json!({
        "epochs": report.records.len(),
        "seed": cfg.seed,
        "final": last,
        "last_200_epochs": {
            "dkl": report.tail_mean(200, |r| r.dkl),
            "fidelity": report.tail_mean(200, |r| r.fidelity),
            "bell_witness_at_pi_over_4": report.tail_mean(200, |r| r.bell_witness_at_pi_over_4),
        },
    });
    write_json(&ctx.out, "summary.json", &summary)?;
    if let Some(r) = last {
        println!(
            "epoch {}: fidelity {:.4}, dkl {}",
            r.epoch,
            r.fidelity.unwrap_or(f64::NAN),
            r.dkl.map_or("inf".to_string(), |d| format!("{d:.3e}"))
        );
    }
    Ok(())
}

pub fn eval(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: EvalConfig = config::load(&ctx.config)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    if cfg.samples == 0 {
        return Err(Failure::Config("samples must be positive".into()));
    }
    let thetas = cfg.thetas.values()?;
    let checkpoint = load_checkpoint(&config::relative_to(&ctx.config, &cfg.checkpoint))?;
    let params = checkpoint.params;
    if params.topology().n_visible() != cfg.target.n_visible() {
        return Err(Failure::Config(format!(
            "checkpoint has {} visible units but the target needs {}",
            params.topology().n_visible(),
            cfg.target.n_visible()
        )));
    }
    cfg.gibbs.validate().map_err(Failure::config)?;
    let backend = match cfg.backend {
        BackendTag::Exact => Backend::Exact,
        BackendTag::Gibbs => Backend::Gibbs(cfg.gibbs),
        BackendTag::Lif => Backend::Lif(calibrated(cfg.lif.clone().unwrap_or_default(), cfg.seed)?),
    };

    let m = evaluate(&params, &backend, cfg.samples, &thetas, &cfg.target, cfg.seed).map_err(Failure::runtime)?;
    let mut csv = create(&ctx.out, "witness.csv")?;
    writeln!(csv, "theta,witness").map_err(Failure::runtime)?;
    for w in &m.witness {
        writeln!(csv, "{},{}", w.theta, w.value).map_err(Failure::runtime)?;
    }
    csv.flush().map_err(Failure::runtime)?;
    let metrics = json!({
        "backend": backend.tag(),
        "samples": cfg.samples,
        "seed": cfg.seed,
        "checkpoint_epoch": checkpoint.epoch,
        "dkl": m.dkl,
        "fidelity": m.fidelity,
        "rho": m.rho,
        "visible": m.visible,
    });
    write_json(&ctx.out, "metrics.json", &metrics)?;
    println!("fidelity {:.4}, dkl {:.3e}", m.fidelity, m.dkl);
    Ok(())
}

pub fn bench(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: BenchConfig = config::load(&ctx.config)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    let model = cfg.model()?;
    let ns = cfg.n_spins.values()?;
    let ms = cfg.m_hidden.values()?;
    if ns.is_empty() || ms.is_empty() || ns.contains(&0) || ms.contains(&0) {
        return Err(Failure::Config("size grids must be non-empty and positive".into()));
    }
    if cfg.samples < benchmark::MIN_TIMED_SAMPLES {
        return Err(Failure::Config(format!(
            "samples must be at least {}",
            benchmark::MIN_TIMED_SAMPLES
        )));
    }

    let mut results: Vec<BenchResult> = Vec::with_capacity(ns.len() * ms.len());
    for &n in &ns {
        for &m in &ms {
            let seed = rng::derive_seed(cfg.seed, &format!("bench-{n}-{m}"));
            results.push(measure_throughput(n, m, cfg.samples, seed, &model).map_err(Failure::runtime)?);
        }
    }
    let mut csv = create(&ctx.out, "bench.csv")?;
    benchmark::write_csv(&results, &model, &mut csv).map_err(Failure::runtime)?;
    csv.flush().map_err(Failure::runtime)?;

    let mut per_n = Vec::new();
    for &n in &ns {
        let model_m = crossover(n, &model, 1_000_000, CrossoverSource::Model).map_err(Failure::runtime)?;
        let (fit, measured_m) = if ms.len() >= 2 {
            let rows: Vec<&BenchResult> = results.iter().filter(|r| r.n_spins == n).collect();
            let x: Vec<f64> = rows.iter().map(|r| r.m_hidden as f64).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.measured_seconds).collect();
            let fit = linear_fit(&x, &y).map_err(Failure::runtime)?;
            let measured =
                crossover(n, &model, 1_000_000, CrossoverSource::Measured(&results)).map_err(Failure::runtime)?;
            (Some(fit.r_squared), measured)
        } else {
            (None, None)
        };
        per_n.push(json!({
            "n_spins": n,
            "crossover_model": model_m,
            "crossover_measured": measured_m,
            "measured_r_squared": fit,
        }));
    }
    write_json(&ctx.out, "crossover.json", &json!({ "clock_hz": model.clock_hz, "s": 1_000_000, "sizes": per_n }))?;
    println!("{} timings written", results.len());
    Ok(())
}

fn network(source: &NetworkSource, ctx: &Context, seed: u64) -> Result<NetworkParams, Failure> {
    match source {
        NetworkSource::Checkpoint(path) => Ok(load_checkpoint(&config::relative_to(&ctx.config, path))?.params),
        NetworkSource::Random {
            kind,
            n_visible,
            hidden_sizes,
            scale,
        } => {
            let t = build_topology(*kind, *n_visible, hidden_sizes).map_err(Failure::config)?;
            init_params(&t, rng::derive_seed(seed, "nyquist-network"), InitScheme::Uniform(*scale)).map_err(Failure::config)
        }
    }
}

pub fn nyquist(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: NyquistConfig = config::load(&ctx.config)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    if cfg.dts.is_empty() || cfg.dts.iter().any(|&dt| !(dt > 0.0)) {
        return Err(Failure::Config("dts must be a non-empty list of positive intervals".into()));
    }
    if cfg.samples == 0 || cfg.repeats == 0 {
        return Err(Failure::Config("samples and repeats must be positive".into()));
    }
    let params = network(&cfg.network, ctx, cfg.seed)?;
    let lif = calibrated(cfg.lif.clone(), cfg.seed)?;
    let points = match &cfg.target {
        Some(target) => {
            if target.n_visible() != params.topology().n_visible() {
                return Err(Failure::Config(format!(
                    "network has {} visible units but the target needs {}",
                    params.topology().n_visible(),
                    target.n_visible()
                )));
            }
            let reference = target_distribution(target, &TetrahedralPovm::new()).map_err(Failure::config)?;
            nyquist_scan_against(&params, &lif, &reference, &cfg.dts, cfg.samples, cfg.repeats, cfg.seed)
        }
        None => nyquist_scan(&params, &lif, &cfg.dts, cfg.samples, cfg.repeats, cfg.seed),
    }
    .map_err(Failure::runtime)?;

    let mut csv = create(&ctx.out, "nyquist.csv")?;
    writeln!(csv, "dt_us,dkl,dkl_std").map_err(Failure::runtime)?;
    for p in &points {
        writeln!(csv, "{},{},{}", p.dt, p.dkl, p.dkl_std).map_err(Failure::runtime)?;
    }
    csv.flush().map_err(Failure::runtime)?;
    write_json(&ctx.out, "calibration.json", &json!(lif.calibration))?;
    println!("{} readout intervals scanned", points.len());
    Ok(())
}

pub fn calibrate(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: CalibrateConfig = config::load(&ctx.config)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.lif.validate().map_err(Failure::config)?;
    let (lo, hi) = default_sweep(&cfg.lif);
    let range = (cfg.sweep.leak_min.unwrap_or(lo), cfg.sweep.leak_max.unwrap_or(hi));
    if cfg.sweep.points < 5 || !(range.1 > range.0) || !(cfg.sweep.duration > 0.0) {
        return Err(Failure::Config(
            "sweep needs at least 5 points, leak_max > leak_min and a positive duration".into(),
        ));
    }
    let cal = lif_calibrate_range(&cfg.lif, cfg.sweep.points, range, cfg.sweep.duration, cfg.seed)
        .map_err(Failure::runtime)?;

    let mut csv = create(&ctx.out, "activation.csv")?;
    writeln!(csv, "leak,p_on,fitted").map_err(Failure::runtime)?;
    for &(leak, p) in &cal.table {
        writeln!(csv, "{leak},{p},{}", cal.fitted(leak)).map_err(Failure::runtime)?;
    }
    csv.flush().map_err(Failure::runtime)?;
    write_json(&ctx.out, "calibration.json", &json!(cal))?;
    println!("u0 {:.4}, alpha {:.4}, residual {:.4}", cal.u0, cal.alpha, cal.residual);
    Ok(())
}
