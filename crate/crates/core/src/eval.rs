//! Error metrics and the simulate / estimate / re-simulate round trip.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{normalize_params, preprocess_arrival, Dataset, Sample, N_PARAMS, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::fat::FatRaster;
use crate::models::{Problem, TrainedModel};
use crate::raster::{ArrivalMap, BurnMask, Raster};
use crate::scalar::Scalar;
use crate::sim::{run_simulation, SimConfig, SimParams};

/// Floor applied to log10 relative errors of exact matches.
pub const LOG_FLOOR: f64 = -6.0;
/// Relative arrival error counted as a match by the round trip.
pub const MATCH_THRESHOLD: f64 = 0.1;

/// Root mean squared difference over the cells where `mask` is set.
pub fn rmse_arrival<T: Scalar>(truth: &Raster<T>, pred: &Raster<T>, mask: &BurnMask) -> Result<T> {
    if !truth.same_shape(pred) || !truth.same_shape(mask) {
        return Err(Error::shape(format!(
            "maps {}x{}, {}x{} and mask {}x{}",
            truth.height(),
            truth.width(),
            pred.height(),
            pred.width(),
            mask.height(),
            mask.width()
        )));
    }
    let mut sum = T::zero();
    let mut n = 0usize;
    for ((&t, &p), &m) in truth.as_slice().iter().zip(pred.as_slice()).zip(mask.as_slice()) {
        if m {
            sum += (t - p) * (t - p);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum / T::from_f64_lossy(n as f64)).sqrt())
}

/// Root mean squared difference of two normalised parameter vectors.
pub fn rmse_params<T: Scalar>(truth: &[T], pred: &[T]) -> Result<T> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::shape(format!(
            "parameter vectors of length {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let sum: T = truth.iter().zip(pred).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((sum / T::from_f64_lossy(truth.len() as f64)).sqrt())
}

fn param_values(p: &SimParams) -> [f64; N_PARAMS] {
    [
        p.wind_speed,
        p.pyro_potential,
        p.burn_time_s,
        p.ignition_prob,
        p.theta,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamStat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Mean and standard deviation of `|pred - truth| / truth` per parameter,
/// over `(truth, pred)` pairs.
pub fn relative_error_stats(pairs: &[(SimParams, SimParams)]) -> Result<[ParamStat; N_PARAMS]> {
    if pairs.is_empty() {
        return Err(Error::Config("no parameter pairs".into()));
    }
    let n = pairs.len() as f64;
    let mut out = [ParamStat { mean: 0.0, std: 0.0 }; N_PARAMS];
    for (k, stat) in out.iter_mut().enumerate() {
        let errs: Vec<f64> = pairs
            .iter()
            .map(|(t, p)| {
                let (t, p) = (param_values(t)[k], param_values(p)[k]);
                (p - t).abs() / t.abs()
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        *stat = ParamStat {
            mean,
            std: var.sqrt(),
        };
    }
    Ok(out)
}

/// Normalised histogram with one underflow and one overflow bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Fractions of the sample in `[lo + i*w, lo + (i+1)*w)`; the last bin
    /// also takes `hi`.
    pub bins: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
    /// Mean of the raw values, not of the binned ones.
    pub mean: f64,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if values.is_empty() || n_bins == 0 || lo >= hi {
            return Err(Error::Config(format!(
                "histogram of {} values over [{lo}, {hi}] with {n_bins} bins",
                values.len()
            )));
        }
        let w = (hi - lo) / n_bins as f64;
        let mut counts = vec![0usize; n_bins];
        let (mut under, mut over) = (0usize, 0usize);
        for &v in values {
            if v < lo {
                under += 1;
            } else if v > hi {
                over += 1;
            } else {
                counts[(((v - lo) / w) as usize).min(n_bins - 1)] += 1;
            }
        }
        let n = values.len() as f64;
        Ok(Histogram {
            lo,
            hi,
            bins: counts.into_iter().map(|c| c as f64 / n).collect(),
            underflow: under as f64 / n,
            overflow: over as f64 / n,
            mean: values.iter().sum::<f64>() / n,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.bins.iter().sum::<f64>() + self.underflow + self.overflow
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        let w = (self.hi - self.lo) / self.bins.len() as f64;
        self.lo + (i as f64 + 0.5) * w
    }
}

pub const DEFAULT_HIST_BINS: usize = 41;

/// Histogram of `(pred - truth) / truth` per parameter over `[-1, 1]`.
pub fn signed_relative_error_hist(
    pairs: &[(SimParams, SimParams)],
    bins: usize,
) -> Result<Vec<Histogram>> {
    (0..N_PARAMS)
        .map(|k| {
            let vals: Vec<f64> = pairs
                .iter()
                .map(|(t, p)| {
                    let (t, p) = (param_values(t)[k], param_values(p)[k]);
                    (p - t) / t
                })
                .collect();
            Histogram::new(&vals, -1.0, 1.0, bins)
        })
        .collect()
}

/// `log10(|F - F_hat| / F)` where both maps burnt and the truth is positive,
/// floored at `floor`; `None` elsewhere.
pub fn relative_error_map(
    truth: &Raster<f64>,
    pred: &Raster<f64>,
    truth_mask: &BurnMask,
    pred_mask: &BurnMask,
    floor: f64,
) -> Result<Raster<Option<f64>>> {
    if !(truth.same_shape(pred) && truth.same_shape(truth_mask) && truth.same_shape(pred_mask)) {
        return Err(Error::shape("relative error map inputs differ in shape"));
    }
    let data = truth
        .as_slice()
        .iter()
        .zip(pred.as_slice())
        .zip(truth_mask.as_slice().iter().zip(pred_mask.as_slice()))
        .map(|((&t, &p), (&mt, &mp))| {
            (mt && mp && t > 0.0).then(|| ((p - t).abs() / t).log10().max(floor))
        })
        .collect();
    Raster::from_vec(truth.height(), truth.width(), data)
}

/// Anything that maps a simulated sample to estimated parameters.
pub trait InverseEstimator {
    fn estimate(&self, truth: &Sample) -> Result<SimParams>;
}

impl<T: Scalar> InverseEstimator for TrainedModel<T> {
    fn estimate(&self, truth: &Sample) -> Result<SimParams> {
        self.predict_inverse(&truth.arrival)
    }
}

/// Returns the true parameters; the reference point of the round trip.
pub struct OracleEstimator;

impl InverseEstimator for OracleEstimator {
    fn estimate(&self, truth: &Sample) -> Result<SimParams> {
        Ok(truth.params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTripResult {
    pub true_params: SimParams,
    pub predicted_params: SimParams,
    /// RMSE over cells burnt in both runs; `None` if there are none.
    pub arrival_rmse_s: Option<f64>,
    /// Share of cells burnt in both runs with positive true arrival whose
    /// relative error is below [`MATCH_THRESHOLD`].
    pub frac_under_10pct: Option<f64>,
    pub relerr_map: Raster<Option<f64>>,
    pub truth_patchy: bool,
}

impl RoundTripResult {
    pub fn is_degenerate(&self) -> bool {
        self.arrival_rmse_s.is_none() || self.frac_under_10pct.is_none()
    }
}

fn both(a: &BurnMask, b: &BurnMask) -> BurnMask {
    Raster::from_vec(
        a.height(),
        a.width(),
        a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| x && y).collect(),
    )
    .expect("same shape")
}

/// Compares two raw arrival maps cell by cell.
pub fn compare_arrivals(
    true_params: SimParams,
    predicted_params: SimParams,
    truth: &ArrivalMap,
    pred: &ArrivalMap,
    dt_s: f64,
) -> Result<RoundTripResult> {
    let (tf, tm, _) = preprocess_arrival(truth, dt_s)?;
    let (pf, pm, _) = preprocess_arrival(pred, dt_s)?;
    let common = both(&tm, &pm);
    let arrival_rmse_s = match rmse_arrival(&tf, &pf, &common) {
        Ok(r) => Some(r),
        Err(Error::EmptyMask) => None,
        Err(e) => return Err(e),
    };
    let relerr_map = relative_error_map(&tf, &pf, &tm, &pm, LOG_FLOOR)?;
    let (mut hits, mut n) = (0usize, 0usize);
    for ((&t, &p), &m) in tf.as_slice().iter().zip(pf.as_slice()).zip(common.as_slice()) {
        if m && t > 0.0 {
            n += 1;
            hits += ((p - t).abs() / t < MATCH_THRESHOLD) as usize;
        }
    }
    Ok(RoundTripResult {
        true_params,
        predicted_params,
        arrival_rmse_s,
        frac_under_10pct: (n > 0).then(|| hits as f64 / n as f64),
        relerr_map,
        truth_patchy: tm.is_patchy(),
    })
}

/// Simulates `true_params`, estimates parameters from the result and
/// re-simulates them with the same seed.
pub fn sensitivity_roundtrip(
    true_params: &SimParams,
    estimator: &impl InverseEstimator,
    config: &SimConfig,
) -> Result<RoundTripResult> {
    let raw = run_simulation(true_params, config)?;
    let (filled, mask, fill) = preprocess_arrival(&raw, config.dt_s)?;
    let sample = Sample {
        index: 0,
        params: *true_params,
        arrival: filled.map(|&a| a as f32),
        mask,
        fill_value_s: fill as f32,
    };
    let mut predicted = estimator.estimate(&sample)?;
    predicted.seed = true_params.seed;
    let re = run_simulation(&predicted, config)?;
    compare_arrivals(*true_params, predicted, &raw, &re, config.dt_s)
}

/// Per-pixel mean of training arrivals over the samples where the pixel
/// burnt; pixels that never burnt take the mean filled value.
pub fn baseline_mean_predictor(train: &[Sample]) -> Result<Raster<f64>> {
    let first = train
        .first()
        .ok_or_else(|| Error::Config("empty training set".into()))?;
    let (h, w) = (first.arrival.height(), first.arrival.width());
    let mut sum = vec![0.0f64; h * w];
    let mut cnt = vec![0usize; h * w];
    let mut all = vec![0.0f64; h * w];
    for s in train {
        if s.arrival.height() != h || s.arrival.width() != w {
            return Err(Error::shape("training rasters differ in shape"));
        }
        for (i, (&a, &m)) in s.arrival.as_slice().iter().zip(s.mask.as_slice()).enumerate() {
            all[i] += a as f64;
            if m {
                sum[i] += a as f64;
                cnt[i] += 1;
            }
        }
    }
    let n = train.len() as f64;
    let data = (0..h * w)
        .map(|i| if cnt[i] > 0 { sum[i] / cnt[i] as f64 } else { all[i] / n })
        .collect();
    Raster::from_vec(h, w, data)
}

/// Mean over `samples` of the per-sample masked RMSE of `pred(sample)`.
pub fn mean_arrival_rmse(
    samples: &[Sample],
    mut pred: impl FnMut(&Sample) -> Result<Raster<f64>>,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let truth = s.arrival.map(|&a| a as f64);
        total += rmse_arrival(&truth, &pred(s)?, &s.mask)?;
    }
    Ok(total / samples.len() as f64)
}

/// Test RMSE of the per-pixel mean predictor built from the training split.
pub fn baseline_rmse(data: &Dataset) -> Result<f64> {
    let base = baseline_mean_predictor(&data.train)?;
    mean_arrival_rmse(&data.test, |_| Ok(base.clone()))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub forward_rmse_s: Option<f64>,
    pub baseline_rmse_s: Option<f64>,
    pub inverse_rmse_norm: Option<f64>,
    pub per_param_relerr: Option<[ParamStat; N_PARAMS]>,
    pub signed_relerr_hist: Vec<Histogram>,
    pub sensitivity: Vec<RoundTripResult>,
}

/// Test-set metrics of a trained model. Inverse statistics use the
/// unrounded burn time.
pub fn evaluate_model<T: Scalar>(model: &TrainedModel<T>, data: &Dataset) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    match model.problem() {
        Problem::Forward => {
            report.forward_rmse_s = Some(mean_arrival_rmse(&data.test, |s| model.predict_forward(&s.params))?);
            report.baseline_rmse_s = Some(baseline_rmse(data)?);
        }
        Problem::Inverse => {
            let mut pairs = Vec::with_capacity(data.test.len());
            let mut total = 0.0;
            for s in &data.test {
                let pred = model.predict_inverse_normalized(&s.arrival)?;
                let truth = normalize_params(&s.params, &model.ranges);
                total += rmse_params(&truth, &pred)?;
                pairs.push((s.params, model.predict_inverse_raw(&s.arrival)?));
            }
            report.inverse_rmse_norm = Some(total / data.test.len().max(1) as f64);
            report.per_param_relerr = Some(relative_error_stats(&pairs)?);
            report.signed_relerr_hist = signed_relative_error_hist(&pairs, DEFAULT_HIST_BINS)?;
        }
    }
    Ok(report)
}

/// Round trips for the given parameter sets, in parallel.
pub fn sensitivity_batch(
    params: &[SimParams],
    estimator: &(impl InverseEstimator + Sync),
    config: &SimConfig,
) -> Result<Vec<RoundTripResult>> {
    params
        .par_iter()
        .map(|p| sensitivity_roundtrip(p, estimator, config))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

impl EvalReport {
    /// Writes `summary.csv`, and where available `relerr_stats.csv`,
    /// `relerr_hist.csv`, `sensitivity.csv` and one FAT1 error map per round
    /// trip (`relerr_map_NNN.fat`, NaN where undefined).
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let p = dir.join("summary.csv");
        let mut f = create(&p)?;
        writeln!(f, "metric,value").map_err(io(&p))?;
        for (name, v) in [
            ("forward_rmse_s", self.forward_rmse_s),
            ("baseline_rmse_s", self.baseline_rmse_s),
            ("inverse_rmse_norm", self.inverse_rmse_norm),
        ] {
            if let Some(v) = v {
                writeln!(f, "{name},{v}").map_err(io(&p))?;
            }
        }

        if let Some(stats) = &self.per_param_relerr {
            let p = dir.join("relerr_stats.csv");
            let mut f = create(&p)?;
            writeln!(f, "parameter,mean,std").map_err(io(&p))?;
            for (name, s) in PARAM_NAMES.iter().zip(stats) {
                writeln!(f, "{name},{},{}", s.mean, s.std).map_err(io(&p))?;
            }
        }

        if !self.signed_relerr_hist.is_empty() {
            let p = dir.join("relerr_hist.csv");
            let mut f = create(&p)?;
            writeln!(f, "parameter,bin,center,fraction").map_err(io(&p))?;
            for (name, h) in PARAM_NAMES.iter().zip(&self.signed_relerr_hist) {
                writeln!(f, "{name},underflow,,{}", h.underflow).map_err(io(&p))?;
                for (i, frac) in h.bins.iter().enumerate() {
                    writeln!(f, "{name},{i},{},{frac}", h.bin_center(i)).map_err(io(&p))?;
                }
                writeln!(f, "{name},overflow,,{}", h.overflow).map_err(io(&p))?;
                writeln!(f, "{name},mean,,{}", h.mean).map_err(io(&p))?;
            }
        }

        if !self.sensitivity.is_empty() {
            let p = dir.join("sensitivity.csv");
            let mut f = create(&p)?;
            writeln!(
                f,
                "case,true_wind,true_pyro,true_burn,true_prob,true_theta,pred_wind,pred_pyro,pred_burn,pred_prob,pred_theta,seed,arrival_rmse_s,frac_under_10pct,truth_patchy"
            )
            .map_err(io(&p))?;
            for (i, r) in self.sensitivity.iter().enumerate() {
                let t = param_values(&r.true_params);
                let q = param_values(&r.predicted_params);
                writeln!(
                    f,
                    "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    t[0],
                    t[1],
                    t[2],
                    t[3],
                    t[4],
                    q[0],
                    q[1],
                    q[2],
                    q[3],
                    q[4],
                    r.true_params.seed,
                    opt(r.arrival_rmse_s),
                    opt(r.frac_under_10pct),
                    r.truth_patchy
                )
                .map_err(io(&p))?;
                let m = &r.relerr_map;
                let data: Vec<f32> = m
                    .as_slice()
                    .iter()
                    .map(|v| v.map_or(f32::NAN, |x| x as f32))
                    .collect();
                FatRaster::new(m.height(), m.width(), 1, data)?
                    .save(&dir.join(format!("relerr_map_{i:03}.fat")))?;
            }
        }
        Ok(())
    }
}

/// Draws `n` test parameter sets from a dataset for round trips.
pub fn sensitivity_params(data: &Dataset, n: usize) -> Vec<SimParams> {
    data.test.iter().take(n).map(|s| s.params).collect()
}
