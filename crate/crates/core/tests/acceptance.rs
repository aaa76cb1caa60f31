//! Acceptance criteria A1-A11. Each test prints one `A<n> PASS|FAIL` line
//! to stderr (bypassing the test harness capture) before asserting.
//!
//! The learning criteria share one desk dataset (1000 train / 200 test,
//! 48 x 48 interior) and together take around half an hour on one core.

mod common;

use std::f64::consts::PI;
use std::fmt::Display;
use std::io::Write;
use std::sync::OnceLock;

use emberlearn::dataset::{generate_in_memory, preprocess_arrival, sample_params_at, Dataset, ParamRanges, N_PARAMS};
use emberlearn::eval::{
    baseline_rmse, evaluate_model, rmse_arrival, sensitivity_batch, sensitivity_params, sensitivity_roundtrip,
    OracleEstimator,
};
use emberlearn::models::{train, Arch, Preset, TrainConfig, TrainedModel};
use emberlearn::nn::gradcheck::{adjoint_gap, layer_suite};
use emberlearn::nn::{AdamState, Tensor};
use emberlearn::sim::{rasterize_line, run_simulation, Cell};
use emberlearn::{Neighborhood, Raster, SimConfig, SimParams, TrainedModel32};

fn report(id: &str, pass: bool, detail: impl Display) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{id} {verdict} {detail}");
}

const DATA_SEED: u64 = 2024;

fn desk_data() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        generate_in_memory(1000, 200, &SimConfig::desk(), &ParamRanges::default(), DATA_SEED).unwrap()
    })
}

fn train_desk(arch: Arch, data: &Dataset, epochs: usize, lr: f64, seed: u64) -> TrainedModel32 {
    let cfg = TrainConfig {
        epochs,
        learning_rate: lr,
        batch_size: 8,
        seed,
        eval_every: epochs,
        ..TrainConfig::default()
    };
    let spec = arch.build_preset(data.config().interior_cells(), Preset::Desk).unwrap();
    let model = TrainedModel::init(spec, data.config(), data.ranges(), cfg.init_std, seed).unwrap();
    train(model, data, &cfg, |_| {}).unwrap()
}

fn final_test_rmse(m: &TrainedModel32) -> f64 {
    m.history.last().and_then(|r| r.test_rmse).unwrap()
}

#[test]
fn a1_simulator_invariants() {
    let cfg = SimConfig {
        domain_size_m: 40,
        buffer_m: 8,
        ignition_line_length_m: 16.0,
        ..SimConfig::desk()
    };
    let ranges = ParamRanges::default();
    let mut failures = Vec::new();
    for i in 0..200 {
        let p = sample_params_at(&ranges, 77, i);
        match common::run_checked(&p, &cfg) {
            Ok(map) => {
                let again = run_simulation(&p, &cfg).unwrap();
                if map != again || again != run_simulation(&p, &cfg).unwrap() {
                    failures.push(format!("run {i}: not reproducible"));
                }
            }
            Err(e) => failures.push(format!("run {i}: {e}")),
        }
    }
    report("A1", failures.is_empty(), format!("200 runs, {} failures", failures.len()));
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn a2_breadth_first_oracle() {
    let mut mismatches = 0;
    for nb in [Neighborhood::Moore8, Neighborhood::VonNeumann4] {
        let cfg = SimConfig {
            domain_size_m: 48,
            buffer_m: 8,
            horizon_s: 300.0,
            ignition_line_length_m: 10.0,
            neighborhood: nb,
            ..SimConfig::default()
        };
        assert_eq!(cfg.interior_cells(), 32);
        for theta in [0.0, 0.4, PI / 2.0, 2.2] {
            let p = SimParams {
                wind_speed: 0.0,
                pyro_potential: 0.0,
                burn_time_s: 9.0,
                ignition_prob: 1.0,
                theta,
                seed: 3,
            };
            let map = run_simulation(&p, &cfg).unwrap();
            let expected = common::bfs_arrival(&map, nb, cfg.dt_s, cfg.total_steps());
            mismatches += map.as_slice().iter().zip(&expected).filter(|(a, b)| a != b).count();
        }
    }
    report("A2", mismatches == 0, format!("{mismatches} mismatched cells"));
    assert_eq!(mismatches, 0);
}

#[test]
fn a3_bresenham_oracle() {
    let mut bad = 0;
    for x0 in 0..16 {
        for y0 in 0..16 {
            for x1 in 0..16 {
                for y1 in 0..16 {
                    let (a, b) = (Cell::new(x0, y0), Cell::new(x1, y1));
                    bad += (rasterize_line(a, b) != common::line_oracle(a, b)) as usize;
                }
            }
        }
    }
    report("A3", bad == 0, format!("{bad} of 65536 endpoint pairs disagree"));
    assert_eq!(bad, 0);
}

#[test]
fn a4_gradient_suite() {
    let suite = layer_suite(10, 1e-6).unwrap();
    let worst = suite.iter().map(|(_, _, r)| r.max_rel_err()).fold(0.0, f64::max);
    let failed: Vec<String> = suite
        .iter()
        .filter(|(_, _, r)| !r.passed())
        .map(|(n, s, _)| format!("{n}/{s}"))
        .collect();
    let gap = (0..10).map(|s| adjoint_gap(s).unwrap()).fold(0.0, f64::max);
    let pass = failed.is_empty() && gap < 1e-10;
    report(
        "A4",
        pass,
        format!("{} checks, max rel err {worst:.2e}, adjoint gap {gap:.2e}", suite.len()),
    );
    assert!(pass, "failed {failed:?}, gap {gap}");
}

#[test]
fn a5_adam_oracle() {
    let (alpha, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
    let mut params = vec![Tensor::from_vec(&[1], vec![1.0f64]).unwrap()];
    let mut adam = AdamState::for_params(alpha, &params);
    let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut worst: f64 = 0.0;
    let mut first = 0.0;
    for t in 1..=3 {
        let g = 2.0 * theta;
        let grads = vec![Tensor::from_vec(&[1], vec![2.0 * params[0].data()[0]]).unwrap()];
        adam.step(&mut params, &grads).unwrap();
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        theta -= alpha * m_hat / (v_hat.sqrt() + eps);
        worst = worst.max((params[0].data()[0] - theta).abs());
        if t == 1 {
            first = 1.0 - params[0].data()[0];
        }
    }
    let pass = worst <= 1e-12 && (first - alpha).abs() < 1e-8;
    report("A5", pass, format!("max deviation {worst:.1e}, first step {first}"));
    assert!(pass);
}

#[test]
fn a6_forward_learning_desk() {
    let data = desk_data();
    let baseline = baseline_rmse(data).unwrap();
    let model = train_desk(Arch::FcUNet, data, 30, 2e-4, 0);
    let rmse = final_test_rmse(&model);
    let pass = rmse <= 0.6 * baseline;
    report(
        "A6",
        pass,
        format!("FC-UNet test RMSE {rmse:.3} s vs baseline {baseline:.3} s (ratio {:.3}, need <= 0.6)", rmse / baseline),
    );
    assert!(pass);
}

#[test]
fn a7_architecture_ordering_desk() {
    let full = desk_data();
    // 400 training samples and 8 epochs per model keep the six runs short
    let data = Dataset {
        manifest: full.manifest.clone(),
        train: full.train[..400].to_vec(),
        test: full.test.clone(),
    };
    let (mut unet, mut cnn) = (0.0, 0.0);
    for seed in 0..3 {
        unet += final_test_rmse(&train_desk(Arch::UNet, &data, 8, 2e-4, seed)) / 3.0;
        cnn += final_test_rmse(&train_desk(Arch::Cnn, &data, 8, 2e-4, seed)) / 3.0;
    }
    let mut ordered = true;
    for (side, preset) in [(48, Preset::Desk), (160, Preset::Full)] {
        let n = |a: Arch| a.build_preset(side, preset).unwrap().count_weights();
        ordered &= n(Arch::FcUNet) < n(Arch::UNet) && n(Arch::UNet) < n(Arch::Cnn);
    }
    let pass = unet <= 1.05 * cnn && ordered;
    report(
        "A7",
        pass,
        format!("mean test RMSE U-Net {unet:.3} s, CNN {cnn:.3} s; weight ordering holds: {ordered}"),
    );
    assert!(pass);
}

struct InverseRuns {
    models: Vec<TrainedModel32>,
    mean_relerr: Vec<[f64; N_PARAMS]>,
}

fn inverse_runs() -> &'static InverseRuns {
    static RUNS: OnceLock<InverseRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let data = desk_data();
        let mut runs = InverseRuns {
            models: Vec::new(),
            mean_relerr: Vec::new(),
        };
        for seed in 0..3 {
            let model = train_desk(Arch::CnnFc, data, 50, 2e-4, seed);
            let stats = evaluate_model(&model, data).unwrap().per_param_relerr.unwrap();
            runs.mean_relerr.push(stats.map(|s| s.mean));
            runs.models.push(model);
        }
        runs
    })
}

#[test]
fn a8_inverse_learning_desk() {
    let runs = inverse_runs();
    let overall: f64 = runs.mean_relerr.iter().map(|r| r.iter().sum::<f64>() / 5.0).sum::<f64>() / 3.0;
    let prob_smallest = runs
        .mean_relerr
        .iter()
        .filter(|r| r.iter().all(|&e| e >= r[3]))
        .count();
    let pass = overall <= 0.25 && prob_smallest >= 2;
    let per_seed: Vec<String> = runs
        .mean_relerr
        .iter()
        .map(|r| format!("[{}]", r.map(|e| format!("{e:.3}")).join(" ")))
        .collect();
    report(
        "A8",
        pass,
        format!(
            "mean relative error {overall:.3} (need <= 0.25); probability smallest in {prob_smallest}/3; per seed (wind pyro burn prob theta) {}",
            per_seed.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn a9_round_trip() {
    let data = desk_data();
    let cfg = data.config();
    let mut exact = true;
    for p in sensitivity_params(data, 5) {
        let r = sensitivity_roundtrip(&p, &OracleEstimator, cfg).unwrap();
        exact &= r.arrival_rmse_s == Some(0.0) && r.frac_under_10pct == Some(1.0);
    }

    let model = &inverse_runs().models[0];
    let params = sensitivity_params(data, 20);
    let results = sensitivity_batch(&params, model, cfg).unwrap();
    let n = cfg.interior_cells();
    let complete = |r: &emberlearn::eval::RoundTripResult| {
        !r.is_degenerate() && r.relerr_map.height() == n && r.relerr_map.width() == n
    };
    let checked = results.iter().filter(|r| !r.truth_patchy).count();
    let broken = results.iter().filter(|r| !r.truth_patchy && !complete(r)).count();
    let pass = exact && results.len() == 20 && broken == 0;
    report(
        "A9",
        pass,
        format!("oracle exact: {exact}; model round trips complete {}/{checked} non-patchy", checked - broken),
    );
    assert!(pass);
}

#[test]
fn a10_metric_values() {
    let mask = Raster::filled(1, 2, true);
    let t = Raster::from_vec(1, 2, vec![10.0f64, 20.0]).unwrap();
    let p = Raster::from_vec(1, 2, vec![13.0f64, 24.0]).unwrap();
    let plain = rmse_arrival(&t, &p, &mask).unwrap();
    let one = Raster::from_vec(1, 2, vec![true, false]).unwrap();
    let masked = rmse_arrival(&t, &p, &one).unwrap();
    let shifted = Raster::from_vec(1, 2, vec![10.0 - 2.5, 20.0 - 2.5]).unwrap();
    let offset = rmse_arrival(&t, &shifted, &mask).unwrap();

    let cfg = SimConfig::desk();
    let params = SimParams {
        wind_speed: 3.0,
        pyro_potential: 0.6,
        burn_time_s: 12.0,
        ignition_prob: 0.2,
        theta: 1.0,
        seed: 4,
    };
    let raw = run_simulation(&params, &cfg).unwrap();
    let (filled, mask_raw, fill) = preprocess_arrival(&raw, cfg.dt_s).unwrap();
    let max = raw.as_slice().iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let fill_ok = fill == max + cfg.dt_s
        && filled
            .as_slice()
            .iter()
            .zip(mask_raw.as_slice())
            .all(|(&v, &m)| m || v == fill);

    let pass = (plain - 12.5f64.sqrt()).abs() <= 1e-12 && masked == 3.0 && offset == 2.5 && fill_ok;
    report(
        "A10",
        pass,
        format!("rmse {plain}, masked {masked}, offset {offset}, fill {fill} (max {max})"),
    );
    assert!(pass);
}

/// Full-size forward training on 8500 / 1500 samples; days on one core.
#[test]
#[ignore = "full-scale run; multi-hour to multi-day"]
fn a11_full_scale_forward() {
    let cfg = SimConfig::default();
    let data = generate_in_memory(8500, 1500, &cfg, &ParamRanges::default(), DATA_SEED).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for (arch, epochs, lr, reference) in [
        (Arch::Cnn, 200, 5e-4, 35.61),
        (Arch::UNet, 200, 5e-5, 23.71),
        (Arch::FcUNet, 100, 2e-4, 24.69),
    ] {
        let tc = TrainConfig {
            epochs,
            learning_rate: lr,
            eval_every: epochs,
            ..TrainConfig::default()
        };
        let spec = arch.build_preset(cfg.interior_cells(), Preset::Full).unwrap();
        let model = TrainedModel32::init(spec, &cfg, data.ranges(), tc.init_std, 0).unwrap();
        let rmse = final_test_rmse(&train(model, &data, &tc, |_| {}).unwrap());
        let ok = (rmse - reference).abs() <= 0.3 * reference;
        pass &= ok;
        lines.push(format!("{arch} {rmse:.2} s (reference {reference} s)"));
    }
    report("A11", pass, lines.join("; "));
    assert!(pass);
}
