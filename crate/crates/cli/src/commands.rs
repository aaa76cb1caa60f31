use std::fs;
use std::io::Write;
use std::path::Path;

use emberlearn::dataset::{self, ParamRanges};
use emberlearn::eval::{self, EvalReport, OracleEstimator, RoundTripResult};
use emberlearn::fat::FatRaster;
use emberlearn::models::{self, Arch, Preset, Problem, TrainConfig};
use emberlearn::TrainedModel32;
use emberlearn::nn::gradcheck;
use emberlearn::sim::run_simulation;
use emberlearn::SimParams;

use crate::render::render_ppm;
use crate::{
    worker_threads, ArchArg, CliError, DatasetGenArgs, EvalArgs, GradcheckArgs, PlanPreset,
    ProblemArg, RenderArgs, SensitivityArgs, SimulateArgs, TrainArgs,
};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::from(emberlearn::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_echo(dir: &Path, echo: &str) -> Result<(), CliError> {
    let p = dir.join("config.txt");
    fs::write(&p, echo).map_err(|e| io_err(&p, e))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime("threads", e.to_string()))
}

pub fn simulate(a: SimulateArgs, echo: &str) -> Result<(), CliError> {
    let config = a.sim.to_config()?;
    let params = SimParams {
        wind_speed: a.wind,
        pyro_potential: a.pyro,
        burn_time_s: a.burn,
        ignition_prob: a.prob,
        theta: a.theta,
        seed: a.seed,
    };
    params.validate(&config).map_err(CliError::usage_from)?;

    let raw = run_simulation(&params, &config)?;
    let (filled, mask, fill) = dataset::preprocess_arrival(&raw, config.dt_s)?;
    let (h, w) = (raw.height(), raw.width());
    make_dir(&a.out)?;
    let raw_f: Vec<f32> = raw.as_slice().iter().map(|t| t.map_or(f32::NAN, |x| x as f32)).collect();
    FatRaster::new(h, w, 1, raw_f)?.save(&a.out.join("raw.fat"))?;
    let filled_f: Vec<f32> = filled.as_slice().iter().map(|&x| x as f32).collect();
    FatRaster::new(h, w, 1, filled_f)?.save(&a.out.join("filled.fat"))?;
    let mask_f: Vec<f32> = mask.as_slice().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    FatRaster::new(h, w, 1, mask_f)?.save(&a.out.join("mask.fat"))?;
    write_echo(&a.out, echo)?;
    println!("burnt_cells={} fill_value_s={fill}", mask.count());
    Ok(())
}

pub fn dataset_gen(a: DatasetGenArgs, echo: &str) -> Result<(), CliError> {
    if a.n_train == 0 || a.n_test == 0 {
        return Err(CliError::usage("--n-train and --n-test must be positive"));
    }
    if a.parallel == Some(0) {
        return Err(CliError::usage("--parallel must be at least 1"));
    }
    let config = a.sim.to_config()?;
    let ranges = ParamRanges::default();
    ranges.validate(&config).map_err(CliError::usage_from)?;

    let threads = worker_threads(a.parallel);
    let m = dataset::generate_dataset(&a.out, a.n_train, a.n_test, &config, &ranges, a.seed, Some(threads))?;
    write_echo(&a.out, echo)?;
    let burnt: usize = m.samples.iter().map(|s| s.burnt_cells).sum();
    println!(
        "samples={} train={} test={} mean_burnt_cells={:.1}",
        m.samples.len(),
        m.n_train,
        m.n_test,
        burnt as f64 / m.samples.len() as f64
    );
    Ok(())
}

fn arch_of(a: ArchArg) -> Arch {
    match a {
        ArchArg::Cnn => Arch::Cnn,
        ArchArg::Unet => Arch::UNet,
        ArchArg::FcUnet => Arch::FcUNet,
        ArchArg::CnnFc => Arch::CnnFc,
    }
}

pub fn train(a: TrainArgs, echo: &str) -> Result<(), CliError> {
    let problem = match a.problem {
        ProblemArg::Forward => Problem::Forward,
        ProblemArg::Inverse => Problem::Inverse,
    };
    let arch = arch_of(a.arch);
    if arch.problem() != problem {
        return Err(CliError::usage(format!("{arch} does not solve the {problem} problem")));
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        eval_every: a.eval_every,
        grad_workers: a.grad_workers,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(CliError::usage_from)?;

    let data = dataset::load_dataset(&a.dataset)?;
    let side = data.config().interior_cells();
    let preset = match a.channels {
        PlanPreset::Full => Preset::Full,
        PlanPreset::Desk => Preset::Desk,
        PlanPreset::Auto if side >= 128 => Preset::Full,
        PlanPreset::Auto => Preset::Desk,
    };
    let spec = arch.build_preset(side, preset)?;
    eprintln!("{arch}: {} weights, side {side}", spec.count_weights());
    let model = TrainedModel32::init(spec, data.config(), data.ranges(), cfg.init_std, cfg.seed)?;

    let threads = worker_threads(Some(a.grad_workers));
    let model = pool(threads)?.install(|| {
        models::train(model, &data, &cfg, |r| match r.test_rmse {
            Some(t) => eprintln!("epoch {} train {:.6} test {t:.6}", r.epoch, r.train_rmse),
            None => eprintln!("epoch {} train {:.6}", r.epoch, r.train_rmse),
        })
    })?;

    make_dir(&a.out)?;
    model.save(&a.out.join("model.nnw"))?;
    let p = a.out.join("curve.csv");
    let f = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
    model.write_curve(std::io::BufWriter::new(f)).map_err(|e| io_err(&p, e))?;
    write_echo(&a.out, echo)?;
    if let Some(last) = model.history.last() {
        println!(
            "epochs={} train_rmse={} test_rmse={}",
            last.epoch,
            last.train_rmse,
            last.test_rmse.map(|t| t.to_string()).unwrap_or_default()
        );
    }
    Ok(())
}

fn check_config(model: &TrainedModel32, data: &dataset::Dataset) -> Result<(), CliError> {
    if &model.config != data.config() {
        return Err(CliError::runtime(
            "config",
            "model and dataset were made with different simulation settings",
        ));
    }
    Ok(())
}

pub fn eval(a: EvalArgs, echo: &str) -> Result<(), CliError> {
    let model = TrainedModel32::load(&a.model)?;
    let data = dataset::load_dataset(&a.dataset)?;
    check_config(&model, &data)?;
    let report = eval::evaluate_model(&model, &data)?;
    report.write(&a.out)?;
    write_echo(&a.out, echo)?;
    for (name, v) in [
        ("forward_rmse_s", report.forward_rmse_s),
        ("baseline_rmse_s", report.baseline_rmse_s),
        ("inverse_rmse_norm", report.inverse_rmse_norm),
    ] {
        if let Some(v) = v {
            println!("{name}={v}");
        }
    }
    if let Some(stats) = &report.per_param_relerr {
        for (name, s) in dataset::PARAM_NAMES.iter().zip(stats) {
            println!("relerr_{name} mean={} std={}", s.mean, s.std);
        }
    }
    Ok(())
}

pub fn sensitivity(a: SensitivityArgs, echo: &str) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    if a.parallel == Some(0) {
        return Err(CliError::usage("--parallel must be at least 1"));
    }
    let data = dataset::load_dataset(&a.dataset)?;
    if a.n > data.test.len() {
        return Err(CliError::runtime(
            "config",
            format!("--n {} exceeds the {} test samples", a.n, data.test.len()),
        ));
    }
    let params = eval::sensitivity_params(&data, a.n);
    let config = data.config().clone();
    let threads = worker_threads(a.parallel);
    let results: Vec<RoundTripResult> = if a.model == "oracle" {
        pool(threads)?.install(|| eval::sensitivity_batch(&params, &OracleEstimator, &config))?
    } else {
        let model = TrainedModel32::load(Path::new(&a.model))?;
        check_config(&model, &data)?;
        if model.problem() != Problem::Inverse {
            return Err(CliError::runtime("config", format!("{} is not an inverse model", model.spec.arch)));
        }
        pool(threads)?.install(|| eval::sensitivity_batch(&params, &model, &config))?
    };

    let rmses: Vec<f64> = results.iter().filter_map(|r| r.arrival_rmse_s).collect();
    let fracs: Vec<f64> = results.iter().filter_map(|r| r.frac_under_10pct).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let degenerate = results.iter().filter(|r| r.is_degenerate()).count();
    let report = EvalReport {
        sensitivity: results,
        ..EvalReport::default()
    };
    report.write(&a.out)?;
    write_echo(&a.out, echo)?;
    println!(
        "cases={} mean_arrival_rmse_s={} mean_frac_under_10pct={} degenerate={degenerate}",
        a.n,
        mean(&rmses),
        mean(&fracs)
    );
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs, echo: &str) -> Result<(), CliError> {
    if a.seeds == 0 {
        return Err(CliError::usage("--seeds must be positive"));
    }
    if !(a.tol > 0.0) {
        return Err(CliError::usage("--tol must be positive"));
    }
    let suite = gradcheck::layer_suite(a.seeds, a.tol)?;
    make_dir(&a.out)?;
    let p = a.out.join("gradcheck.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(&p).map_err(|e| io_err(&p, e))?);
    writeln!(f, "layer,seed,checked,max_rel_err,passed").map_err(|e| io_err(&p, e))?;
    let mut failed = Vec::new();
    for (name, seed, report) in &suite {
        let checked: usize = report.layers.iter().map(|l| l.checked).sum();
        writeln!(f, "{name},{seed},{checked},{:e},{}", report.max_rel_err(), report.passed())
            .map_err(|e| io_err(&p, e))?;
        if !report.passed() {
            failed.push(format!("{name}/{seed}"));
        }
    }
    let mut worst_gap: f64 = 0.0;
    for seed in 0..a.seeds {
        worst_gap = worst_gap.max(gradcheck::adjoint_gap(seed)?);
    }
    writeln!(f, "adjoint,all,{},{worst_gap:e},{}", a.seeds, worst_gap < 1e-10).map_err(|e| io_err(&p, e))?;
    f.flush().map_err(|e| io_err(&p, e))?;
    drop(f);
    write_echo(&a.out, echo)?;

    let worst = suite.iter().map(|(_, _, r)| r.max_rel_err()).fold(0.0, f64::max);
    println!("checks={} max_rel_err={worst:e} adjoint_gap={worst_gap:e}", suite.len());
    if !(worst_gap < 1e-10) {
        failed.push("adjoint".into());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime("gradcheck", format!("failed: {}", failed.join(" "))))
    }
}

pub fn render(a: RenderArgs) -> Result<(), CliError> {
    if let (Some(lo), Some(hi)) = (a.vmin, a.vmax) {
        if !(lo <= hi) {
            return Err(CliError::usage("--vmin must not exceed --vmax"));
        }
    }
    let fat = FatRaster::load(&a.input)?;
    let n_ch = fat.channels as usize;
    for c in std::iter::once(a.channel).chain(a.mask_channel) {
        if c >= n_ch {
            return Err(CliError::runtime(
                "shape",
                format!("channel {c} out of range for a {n_ch}-channel raster"),
            ));
        }
    }
    let values = fat.channel(a.channel);
    let mask = a.mask_channel.map(|c| fat.channel(c));
    let ppm = render_ppm(
        fat.height as usize,
        fat.width as usize,
        &values,
        mask.as_deref(),
        a.vmin,
        a.vmax,
    );
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        make_dir(dir)?;
    }
    fs::write(&a.out, ppm).map_err(|e| io_err(&a.out, e))?;
    Ok(())
}
