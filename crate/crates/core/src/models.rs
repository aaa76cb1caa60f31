//! The four surrogate architectures, their training loops and prediction.
//!
//! Forward models map the five parameters (as an image stack or a vector) to
//! a first-arrival-time raster; the inverse model maps a filled arrival
//! raster back to the normalised parameter vector.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    denormalize_params, encode_arrival_input, encode_forward_input, encode_params, Dataset,
    ParamRanges, Sample, N_PARAMS,
};
use crate::error::{Error, Result};
use crate::nn::{
    checkpoint, masked_mse_loss, mse_loss, AdamState, Graph, GraphBuilder, Network, NodeId,
    Tensor, DEFAULT_INIT_STD,
};
use crate::raster::Raster;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::sim::{SimConfig, SimParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    Cnn,
    UNet,
    FcUNet,
    CnnFc,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Cnn, Arch::UNet, Arch::FcUNet, Arch::CnnFc];

    pub fn problem(self) -> Problem {
        match self {
            Arch::CnnFc => Problem::Inverse,
            _ => Problem::Forward,
        }
    }

    /// Default channel plan per size preset.
    ///
    /// - CNN: encoder channels then the channel count after the dense layer.
    /// - U-Net: channels per resolution level, the last is the bottleneck.
    /// - FC-UNet: channels after the dense layer, then the two U-Net levels.
    /// - CNN-FC: channels of the four convolution groups.
    pub fn default_plan(self, preset: Preset) -> Vec<usize> {
        match (self, preset) {
            (Arch::Cnn, _) => vec![16, 32, 64, 2],
            (Arch::UNet, Preset::Full) => vec![16, 32, 64, 128],
            (Arch::UNet, Preset::Desk) => vec![8, 16, 32, 64],
            (Arch::FcUNet, Preset::Full) => vec![32, 16, 32],
            (Arch::FcUNet, Preset::Desk) => vec![8, 8, 16],
            (Arch::CnnFc, Preset::Full) => vec![16, 32, 64, 64],
            (Arch::CnnFc, Preset::Desk) => vec![8, 16, 32, 64],
        }
    }

    /// Builds the graph for a square interior of `side` cells.
    pub fn build(self, side: usize, plan: &[usize]) -> Result<ModelSpec> {
        match self {
            Arch::Cnn => build_cnn(side, plan),
            Arch::UNet => build_unet(side, plan),
            Arch::FcUNet => build_fc_unet(side, plan),
            Arch::CnnFc => build_cnn_fc(side, plan),
        }
    }

    pub fn build_preset(self, side: usize, preset: Preset) -> Result<ModelSpec> {
        self.build(side, &self.default_plan(preset))
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Arch::Cnn),
            "unet" | "u-net" => Ok(Arch::UNet),
            "fc-unet" | "fcunet" => Ok(Arch::FcUNet),
            "cnn-fc" | "cnnfc" => Ok(Arch::CnnFc),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Cnn => "cnn",
            Arch::UNet => "unet",
            Arch::FcUNet => "fc-unet",
            Arch::CnnFc => "cnn-fc",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    Forward,
    Inverse,
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Problem::Forward),
            "inverse" => Ok(Problem::Inverse),
            other => Err(Error::Config(format!("unknown problem {other:?}"))),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Forward => "forward",
            Problem::Inverse => "inverse",
        })
    }
}

/// Channel plan sizes: `Full` targets the 160 x 160 interior, `Desk` the
/// small interiors used for quick experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub side: usize,
    pub plan: Vec<usize>,
    pub graph: Graph,
}

impl ModelSpec {
    pub fn input_shape(&self) -> &[usize] {
        self.graph.input_shape()
    }

    pub fn output_shape(&self) -> &[usize] {
        self.graph.output_shape()
    }

    pub fn count_weights(&self) -> usize {
        self.graph.count_weights()
    }
}

pub fn count_weights(spec: &ModelSpec) -> usize {
    spec.count_weights()
}

fn check_plan(arch: Arch, plan: &[usize], len: usize) -> Result<()> {
    if plan.len() != len || plan.contains(&0) {
        return Err(Error::Config(format!(
            "{arch} needs {len} positive channel counts, got {plan:?}"
        )));
    }
    Ok(())
}

fn check_side(arch: Arch, side: usize, multiple: usize) -> Result<()> {
    if side == 0 || !side.is_multiple_of(multiple) {
        return Err(Error::Config(format!(
            "{arch} needs an interior side divisible by {multiple}, got {side}"
        )));
    }
    Ok(())
}

/// Three conv+pool pairs, a dense layer onto a quarter-resolution grid and a
/// 4x upsampling transpose convolution. Plan `[c1, c2, c3, c_dense]`.
pub fn build_cnn(side: usize, plan: &[usize]) -> Result<ModelSpec> {
    check_plan(Arch::Cnn, plan, 4)?;
    check_side(Arch::Cnn, side, 8)?;
    let (mut b, mut x) = GraphBuilder::new(&[side, side, 5]);
    for &c in &plan[..3] {
        x = b.conv_relu(x, 3, c)?;
        x = b.max_pool(x)?;
    }
    let flat = b.shape(x).iter().product();
    x = b.reshape(x, &[flat])?;
    let q = side / 4;
    x = b.dense(x, q * q * plan[3])?;
    x = b.relu(x)?;
    x = b.reshape(x, &[q, q, plan[3]])?;
    x = b.up_conv(x, 4, 1)?;
    Ok(ModelSpec {
        arch: Arch::Cnn,
        side,
        plan: plan.to_vec(),
        graph: b.finish(x)?,
    })
}

/// Two-conv decoder level: upsample, concatenate the skip, two 5x5 convs.
fn decoder_level(b: &mut GraphBuilder, x: NodeId, skip: NodeId, c: usize) -> Result<NodeId> {
    let u = b.up_conv(x, 2, c)?;
    let u = b.relu(u)?;
    let cat = b.concat(&[u, skip])?;
    let y = b.conv_relu(cat, 5, c)?;
    b.conv_relu(y, 5, c)
}

/// U-Net with 5x5 convolutions. Plan gives channels per level, the last
/// entry is the bottleneck; the first level has three convolutions.
pub fn build_unet(side: usize, plan: &[usize]) -> Result<ModelSpec> {
    if plan.len() < 2 || plan.contains(&0) {
        return Err(Error::Config(format!(
            "unet needs at least two positive channel counts, got {plan:?}"
        )));
    }
    let levels = plan.len() - 1;
    check_side(Arch::UNet, side, 1 << levels)?;
    let (mut b, mut x) = GraphBuilder::new(&[side, side, 5]);
    let mut skips = Vec::with_capacity(levels);
    for (l, &c) in plan[..levels].iter().enumerate() {
        let convs = if l == 0 { 3 } else { 2 };
        for _ in 0..convs {
            x = b.conv_relu(x, 5, c)?;
        }
        skips.push(x);
        x = b.max_pool(x)?;
    }
    x = b.conv_relu(x, 5, plan[levels])?;
    x = b.conv_relu(x, 5, plan[levels])?;
    for (l, &skip) in skips.iter().enumerate().rev() {
        x = decoder_level(&mut b, x, skip, plan[l])?;
    }
    x = b.conv(x, 1, 1)?;
    Ok(ModelSpec {
        arch: Arch::UNet,
        side,
        plan: plan.to_vec(),
        graph: b.finish(x)?,
    })
}

/// Dense layer from the parameter vector onto a quarter-resolution grid,
/// two 2x upsamplings, then a depth-two U-Net. Plan `[c0, c1, c2]`.
pub fn build_fc_unet(side: usize, plan: &[usize]) -> Result<ModelSpec> {
    check_plan(Arch::FcUNet, plan, 3)?;
    check_side(Arch::FcUNet, side, 4)?;
    let (c0, c1, c2) = (plan[0], plan[1], plan[2]);
    let q = side / 4;
    let (mut b, mut x) = GraphBuilder::new(&[N_PARAMS]);
    x = b.dense(x, q * q * c0)?;
    x = b.relu(x)?;
    x = b.reshape(x, &[q, q, c0])?;
    x = b.up_conv(x, 2, c1)?;
    x = b.relu(x)?;
    x = b.up_conv(x, 2, c1)?;
    x = b.relu(x)?;
    x = b.conv_relu(x, 5, c1)?;
    let skip = b.conv_relu(x, 5, c1)?;
    x = b.max_pool(skip)?;
    x = b.conv_relu(x, 5, c2)?;
    x = b.conv_relu(x, 5, c2)?;
    x = decoder_level(&mut b, x, skip, c1)?;
    x = b.conv(x, 1, 1)?;
    Ok(ModelSpec {
        arch: Arch::FcUNet,
        side,
        plan: plan.to_vec(),
        graph: b.finish(x)?,
    })
}

/// Four groups of three 3x3 convolutions and a pool, then a dense layer onto
/// the five parameters with a ReLU. Plan gives the group channels.
pub fn build_cnn_fc(side: usize, plan: &[usize]) -> Result<ModelSpec> {
    check_plan(Arch::CnnFc, plan, 4)?;
    check_side(Arch::CnnFc, side, 16)?;
    let (mut b, mut x) = GraphBuilder::new(&[side, side, 1]);
    for &c in plan {
        for _ in 0..3 {
            x = b.conv_relu(x, 3, c)?;
        }
        x = b.max_pool(x)?;
    }
    let flat = b.shape(x).iter().product();
    x = b.reshape(x, &[flat])?;
    x = b.dense(x, N_PARAMS)?;
    x = b.relu(x)?;
    Ok(ModelSpec {
        arch: Arch::CnnFc,
        side,
        plan: plan.to_vec(),
        graph: b.finish(x)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Test error is computed every `eval_every` epochs and after the last.
    pub eval_every: usize,
    /// Number of contiguous slices a batch is split into for parallel
    /// gradient evaluation. Results depend on this value but not on the
    /// thread pool; 1 is fully sequential.
    pub grad_workers: usize,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 2e-4,
            batch_size: 8,
            seed: 0,
            eval_every: 1,
            grad_workers: 1,
            init_std: DEFAULT_INIT_STD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 || self.grad_workers == 0 {
            return Err(Error::Config(
                "epochs, batch_size, eval_every and grad_workers must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample error over the epoch's training passes, taken before
    /// each update.
    pub train_rmse: f64,
    pub test_rmse: Option<f64>,
}

/// A network together with everything needed to encode its inputs and
/// decode its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T> {
    pub spec: ModelSpec,
    pub network: Network<T>,
    pub config: SimConfig,
    pub ranges: ParamRanges,
    pub history: Vec<EpochRecord>,
}

/// Stream ids for [`derive_seed`] within a training seed.
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

impl<T: Scalar> TrainedModel<T> {
    /// Untrained model with truncated-normal weights of standard deviation
    /// `std`; CNN-FC weights use `sqrt(2 / fan_in)` instead.
    pub fn init(spec: ModelSpec, config: &SimConfig, ranges: &ParamRanges, std: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let side = config.interior_cells();
        if side != spec.side {
            return Err(Error::shape(format!(
                "{} built for side {}, data interior is {side}",
                spec.arch, spec.side
            )));
        }
        let mut rng = seeded(derive_seed(seed, INIT_STREAM));
        let mut network = if spec.arch == Arch::CnnFc {
            // twelve stacked convolutions shrink a fixed-std signal to
            // nothing; scale each layer by its fan-in instead
            Network::init_with(
                spec.graph.clone(),
                |l| l.fan_in().map_or(std, |n| (2.0 / n as f64).sqrt()),
                &mut rng,
            )
        } else {
            Network::init(spec.graph.clone(), std, &mut rng)
        };
        if spec.arch == Arch::CnnFc {
            // A ReLU output whose pre-activation starts negative for every
            // input never receives a gradient; start the outputs mid-range.
            let bias = network.params_mut().last_mut().expect("dense output");
            for b in bias.data_mut() {
                *b = T::from_f64_lossy(0.5);
            }
        }
        Ok(TrainedModel {
            spec,
            network,
            config: config.clone(),
            ranges: ranges.clone(),
            history: Vec::new(),
        })
    }

    pub fn problem(&self) -> Problem {
        self.spec.arch.problem()
    }

    /// Forward outputs are the network output times the horizon so that the
    /// network works on order-one values while losses stay in seconds.
    pub fn output_scale(&self) -> f64 {
        match self.problem() {
            Problem::Forward => self.config.horizon_s,
            Problem::Inverse => 1.0,
        }
    }

    pub fn encode_input(&self, sample: &Sample) -> Result<Tensor<T>> {
        match self.spec.arch {
            Arch::CnnFc => Ok(encode_arrival_input(&sample.arrival, &self.config)),
            _ => self.encode_params_input(&sample.params),
        }
    }

    fn encode_params_input(&self, params: &SimParams) -> Result<Tensor<T>> {
        match self.spec.arch {
            Arch::Cnn | Arch::UNet => encode_forward_input(params, &self.config, &self.ranges),
            Arch::FcUNet => Ok(encode_params(params, &self.ranges)),
            Arch::CnnFc => Err(Error::Config("cnn-fc takes arrival maps".into())),
        }
    }

    /// Loss and output gradient for one sample; the loss is the squared
    /// error in target units (seconds or normalised parameters).
    fn loss(&self, out: &Tensor<T>, sample: &Sample) -> Result<(T, Tensor<T>)> {
        match self.problem() {
            Problem::Forward => {
                let s = T::from_f64_lossy(self.output_scale());
                let mut pred = out.clone();
                pred.scale(s);
                let target = arrival_tensor(&sample.arrival);
                let (loss, mut grad) = masked_mse_loss(&pred, &target, sample.mask.as_slice())?;
                grad.scale(s);
                Ok((loss, grad))
            }
            Problem::Inverse => mse_loss(out, &encode_params(&sample.params, &self.ranges)),
        }
    }

    /// Per-sample error: masked RMSE in seconds (forward) or parameter RMSE
    /// in normalised units (inverse).
    pub fn sample_rmse(&self, sample: &Sample) -> Result<f64> {
        let out = self.network.predict(&self.encode_input(sample)?)?;
        Ok(self.loss(&out, sample)?.0.to_f64_lossy().sqrt())
    }

    /// Mean of the per-sample errors.
    pub fn mean_rmse(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Config("no samples to evaluate".into()));
        }
        let mut sum = 0.0;
        for s in samples {
            sum += self.sample_rmse(s)?;
        }
        Ok(sum / samples.len() as f64)
    }

    /// Predicted first arrival times in seconds on the interior.
    pub fn predict_forward(&self, params: &SimParams) -> Result<Raster<f64>> {
        self.expect(Problem::Forward)?;
        let out = self.network.predict(&self.encode_params_input(params)?)?;
        let s = self.output_scale();
        let n = self.spec.side;
        Raster::from_vec(n, n, out.data().iter().map(|v| v.to_f64_lossy() * s).collect())
    }

    /// Raw normalised output of the inverse network.
    pub fn predict_inverse_normalized(&self, arrival: &Raster<f32>) -> Result<[f64; N_PARAMS]> {
        self.expect(Problem::Inverse)?;
        let out = self
            .network
            .predict(&encode_arrival_input(arrival, &self.config))?;
        Ok(std::array::from_fn(|i| out.data()[i].to_f64_lossy()))
    }

    /// Denormalised parameters with a continuous burn time.
    pub fn predict_inverse_raw(&self, arrival: &Raster<f32>) -> Result<SimParams> {
        Ok(denormalize_params(
            &self.predict_inverse_normalized(arrival)?,
            &self.ranges,
        ))
    }

    /// Denormalised parameters with the burn time rounded to the sampled set.
    pub fn predict_inverse(&self, arrival: &Raster<f32>) -> Result<SimParams> {
        let mut p = self.predict_inverse_raw(arrival)?;
        p.burn_time_s = self.ranges.round_burn_time(p.burn_time_s);
        Ok(p)
    }

    fn expect(&self, problem: Problem) -> Result<()> {
        if self.problem() != problem {
            return Err(Error::Config(format!(
                "{} model cannot solve the {problem} problem",
                self.spec.arch
            )));
        }
        Ok(())
    }

    /// Writes `epoch,train_rmse,test_rmse`; epochs without evaluation leave
    /// the last field empty.
    pub fn write_curve<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_rmse,test_rmse")?;
        for r in &self.history {
            match r.test_rmse {
                Some(t) => writeln!(w, "{},{},{}", r.epoch, r.train_rmse, t)?,
                None => writeln!(w, "{},{},", r.epoch, r.train_rmse)?,
            }
        }
        Ok(())
    }
}

fn arrival_tensor<T: Scalar>(arrival: &Raster<f32>) -> Tensor<T> {
    Tensor::from_vec(
        &[arrival.height(), arrival.width(), 1],
        arrival
            .as_slice()
            .iter()
            .map(|&a| T::from_f64_lossy(a as f64))
            .collect(),
    )
    .expect("raster length")
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    arch: Arch,
    side: usize,
    plan: Vec<usize>,
    config: SimConfig,
    ranges: ParamRanges,
    history: Vec<EpochRecord>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_string(&CheckpointMeta {
            arch: self.spec.arch,
            side: self.spec.side,
            plan: self.spec.plan.clone(),
            config: self.config.clone(),
            ranges: self.ranges.clone(),
            history: self.history.clone(),
        })?;
        checkpoint::encode(&self.network, &meta)
    }

    /// Parses a checkpoint and checks that its layer table matches the
    /// architecture recorded in the metadata.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (network, meta) = checkpoint::decode::<T>(bytes)?;
        let meta: CheckpointMeta = serde_json::from_str(&meta)?;
        let spec = meta.arch.build(meta.side, &meta.plan)?;
        if &spec.graph != network.graph() {
            return Err(Error::Format {
                what: "NNW1 checkpoint",
                detail: format!("layer table does not match a {} network", meta.arch),
            });
        }
        Ok(TrainedModel {
            spec,
            network,
            config: meta.config,
            ranges: meta.ranges,
            history: meta.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Sum of gradients and losses over `samples`.
fn accumulate<T: Scalar>(
    model: &TrainedModel<T>,
    samples: &[&Sample],
) -> Result<(Vec<Tensor<T>>, f64)> {
    let mut grads = model.network.zero_grads();
    let mut rmse = 0.0;
    for s in samples {
        let acts = model.network.forward(&model.encode_input(s)?)?;
        let (loss, d_out) = model.loss(acts.output(), s)?;
        rmse += loss.to_f64_lossy().sqrt();
        model.network.backward_params(&acts, &d_out, &mut grads)?;
    }
    Ok((grads, rmse))
}

/// One optimiser step on `batch`; returns the summed per-sample error.
fn train_batch<T: Scalar>(
    model: &mut TrainedModel<T>,
    adam: &mut AdamState<T>,
    batch: &[&Sample],
    workers: usize,
) -> Result<f64> {
    let (mut grads, rmse) = if workers <= 1 || batch.len() <= 1 {
        accumulate(model, batch)?
    } else {
        let chunk = batch.len().div_ceil(workers);
        let parts = batch
            .par_chunks(chunk)
            .map(|c| accumulate(model, c))
            .collect::<Result<Vec<_>>>()?;
        let mut it = parts.into_iter();
        let (mut g, mut r) = it.next().expect("non-empty batch");
        for (pg, pr) in it {
            for (a, b) in g.iter_mut().zip(&pg) {
                a.add_assign(b);
            }
            r += pr;
        }
        (g, r)
    };
    let inv = T::one() / T::from_f64_lossy(batch.len() as f64);
    for g in &mut grads {
        g.scale(inv);
    }
    adam.step(model.network.params_mut(), &grads)?;
    Ok(rmse)
}

/// Mini-batch Adam on the per-sample loss averaged over each batch.
///
/// Training samples are put in index order first and reshuffled each epoch
/// with a Fisher–Yates pass driven by a stream of `cfg.seed`, so the result
/// depends only on the data, `cfg` and the initial weights.
pub fn train<T: Scalar>(
    mut model: TrainedModel<T>,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if data.config().interior_cells() != model.spec.side {
        return Err(Error::shape(format!(
            "{} built for side {}, dataset interior is {}",
            model.spec.arch,
            model.spec.side,
            data.config().interior_cells()
        )));
    }
    let mut train: Vec<&Sample> = data.train.iter().collect();
    train.sort_by_key(|s| s.index);
    let mut adam = AdamState::for_params(T::from_f64_lossy(cfg.learning_rate), model.network.params());
    let mut rng = seeded(derive_seed(cfg.seed, SHUFFLE_STREAM));
    let first = model.history.len();
    for epoch in first + 1..=first + cfg.epochs {
        train.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in train.chunks(cfg.batch_size) {
            sum += train_batch(&mut model, &mut adam, batch, cfg.grad_workers)?;
        }
        if !model.network.params().iter().all(Tensor::all_finite) {
            return Err(Error::Params(format!("non-finite weights after epoch {epoch}")));
        }
        let evaluate = (epoch - first).is_multiple_of(cfg.eval_every) || epoch == first + cfg.epochs;
        let test_rmse = if evaluate && !data.test.is_empty() {
            Some(model.mean_rmse(&data.test)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train_rmse: sum / train.len() as f64,
            test_rmse,
        };
        on_epoch(&record);
        model.history.push(record);
    }
    Ok(model)
}

fn train_problem<T: Scalar>(
    problem: Problem,
    spec: ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>> {
    if spec.arch.problem() != problem {
        return Err(Error::Config(format!(
            "{} cannot be trained on the {problem} problem",
            spec.arch
        )));
    }
    cfg.validate()?;
    let model = TrainedModel::init(spec, data.config(), data.ranges(), cfg.init_std, cfg.seed)?;
    train(model, data, cfg, |_| {})
}

/// Trains a forward surrogate from scratch: masked squared error on arrival
/// seconds.
pub fn train_forward<T: Scalar>(spec: ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel<T>> {
    train_problem(Problem::Forward, spec, data, cfg)
}

/// Trains an inverse model from scratch: squared error on the normalised
/// parameter vector.
pub fn train_inverse<T: Scalar>(spec: ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel<T>> {
    train_problem(Problem::Inverse, spec, data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_in_memory;

    fn tiny_config() -> SimConfig {
        SimConfig {
            domain_size_m: 24,
            buffer_m: 4,
            horizon_s: 60.0,
            ignition_line_length_m: 8.0,
            ..SimConfig::default()
        }
    }

    fn weights(arch: Arch, side: usize, preset: Preset) -> usize {
        arch.build_preset(side, preset).unwrap().count_weights()
    }

    #[test]
    fn shapes_at_full_and_desk_sizes() {
        for side in [160, 48, 32, 16] {
            for arch in Arch::ALL {
                for preset in [Preset::Full, Preset::Desk] {
                    let spec = arch.build_preset(side, preset).unwrap();
                    let (inp, out): (Vec<usize>, Vec<usize>) = match arch {
                        Arch::Cnn | Arch::UNet => (vec![side, side, 5], vec![side, side, 1]),
                        Arch::FcUNet => (vec![5], vec![side, side, 1]),
                        Arch::CnnFc => (vec![side, side, 1], vec![5]),
                    };
                    assert_eq!(spec.input_shape(), &inp[..], "{arch}");
                    assert_eq!(spec.output_shape(), &out[..], "{arch}");
                }
            }
        }
    }

    #[test]
    fn indivisible_sides_are_rejected() {
        assert!(build_cnn_fc(50, &[8, 16, 32, 64]).is_err());
        assert!(build_cnn_fc(48, &[8, 16, 32, 64]).is_ok());
        assert!(build_cnn(44, &[16, 32, 64, 2]).is_err());
        assert!(build_unet(20, &[8, 16, 32, 64]).is_err());
        assert!(build_fc_unet(18, &[8, 8, 16]).is_err());
    }

    #[test]
    fn dense_layer_dominates_cnn() {
        let spec = Arch::Cnn.build_preset(160, Preset::Full).unwrap();
        let n = spec.count_weights();
        assert!((10_000_000..100_000_000).contains(&n), "{n}");
        let dense = 20 * 20 * 64 * 40 * 40 * 2 + 40 * 40 * 2;
        assert!(dense * 10 > n * 9);
    }

    #[test]
    fn full_counts_within_factor_two_of_reference() {
        for (arch, reference) in [
            (Arch::UNet, 1_494_433.0),
            (Arch::FcUNet, 519_585.0),
            (Arch::CnnFc, 371_765.0),
        ] {
            let n = weights(arch, 160, Preset::Full) as f64;
            let ratio = n / reference;
            assert!((0.5..=2.0).contains(&ratio), "{arch}: {n} ({ratio:.2}x)");
        }
    }

    #[test]
    fn weight_ordering_at_matched_config() {
        for (side, preset) in [(160, Preset::Full), (48, Preset::Desk)] {
            let cnn = weights(Arch::Cnn, side, preset);
            let unet = weights(Arch::UNet, side, preset);
            let fcu = weights(Arch::FcUNet, side, preset);
            assert!(fcu < unet && unet < cnn, "{side}: {fcu} {unet} {cnn}");
        }
    }

    #[test]
    fn unet_first_layer_count() {
        // 5x5 conv 5 -> 16 with bias
        let spec = Arch::UNet.build_preset(32, Preset::Full).unwrap();
        let first = spec.graph.nodes()[1].layer.param_shapes();
        let n: usize = first.iter().map(|s| s.iter().product::<usize>()).sum();
        assert_eq!(n, 5 * 5 * 5 * 16 + 16);
    }

    #[test]
    fn cnn_fc_output_is_non_negative() {
        let spec = Arch::CnnFc.build_preset(16, Preset::Desk).unwrap();
        let net: Network<f64> = Network::init(spec.graph.clone(), 0.5, &mut seeded(1));
        for seed in 0..5 {
            let mut rng = seeded(seed);
            let x = crate::nn::truncated_normal_init(&[16, 16, 1], 1.0, &mut rng);
            let y = net.predict(&x).unwrap();
            assert!(y.data().iter().all(|&v| v >= 0.0));
        }
    }

    fn tiny_dataset(n_train: usize) -> Dataset {
        generate_in_memory(n_train, 2, &tiny_config(), &ParamRanges::default(), 9).unwrap()
    }

    fn quick_cfg(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: lr,
            batch_size: 2,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn problem_compatibility_is_enforced() {
        let data = tiny_dataset(2);
        let spec = Arch::UNet.build_preset(16, Preset::Desk).unwrap();
        assert!(train_inverse::<f32>(spec, &data, &quick_cfg(1, 1e-3)).is_err());
        let spec = Arch::CnnFc.build_preset(16, Preset::Desk).unwrap();
        assert!(train_forward::<f32>(spec, &data, &quick_cfg(1, 1e-3)).is_err());
    }

    #[test]
    fn side_mismatch_is_rejected() {
        let data = tiny_dataset(2);
        let spec = Arch::FcUNet.build_preset(32, Preset::Desk).unwrap();
        assert!(matches!(
            train_forward::<f32>(spec, &data, &quick_cfg(1, 1e-3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let data = tiny_dataset(4);
        let spec = Arch::FcUNet.build_preset(16, Preset::Desk).unwrap();
        let cfg = TrainConfig {
            eval_every: 2,
            ..quick_cfg(3, 1e-3)
        };
        let m = train_forward::<f32>(spec, &data, &cfg).unwrap();
        assert_eq!(m.history.len(), 3);
        assert!(m.history[0].test_rmse.is_none());
        assert!(m.history[1].test_rmse.is_some());
        assert!(m.history[2].test_rmse.is_some());
        let mut csv = Vec::new();
        m.write_curve(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("epoch,train_rmse,test_rmse\n1,"));
        assert!(m.network.params().iter().all(Tensor::all_finite));
    }

    #[test]
    fn training_is_deterministic_and_order_invariant() {
        let data = tiny_dataset(4);
        let mut shuffled = data.clone();
        shuffled.train.reverse();
        let spec = Arch::FcUNet.build_preset(16, Preset::Desk).unwrap();
        let cfg = quick_cfg(2, 1e-3);
        let a = train_forward::<f32>(spec.clone(), &data, &cfg).unwrap();
        let b = train_forward::<f32>(spec.clone(), &shuffled, &cfg).unwrap();
        assert_eq!(a.network.params(), b.network.params());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn parallel_gradients_match_sequential_closely() {
        let data = tiny_dataset(4);
        let spec = Arch::FcUNet.build_preset(16, Preset::Desk).unwrap();
        let seq = train_forward::<f64>(spec.clone(), &data, &quick_cfg(1, 1e-3)).unwrap();
        let par_cfg = TrainConfig {
            grad_workers: 2,
            ..quick_cfg(1, 1e-3)
        };
        let par = train_forward::<f64>(spec.clone(), &data, &par_cfg).unwrap();
        let par2 = train_forward::<f64>(spec, &data, &par_cfg).unwrap();
        assert_eq!(par.network.params(), par2.network.params());
        for (a, b) in seq.network.params().iter().zip(par.network.params()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_step_descends() {
        // one small step on a single sample lowers that sample's loss
        let data = tiny_dataset(1);
        let mut passes = 0;
        for seed in 0..10 {
            let spec = Arch::FcUNet.build_preset(16, Preset::Desk).unwrap();
            let model: TrainedModel<f64> =
                TrainedModel::init(spec, data.config(), data.ranges(), DEFAULT_INIT_STD, seed).unwrap();
            let before = model.sample_rmse(&data.train[0]).unwrap();
            let cfg = TrainConfig {
                epochs: 1,
                learning_rate: 1e-4,
                batch_size: 1,
                seed,
                ..TrainConfig::default()
            };
            let after_model = train(model, &data, &cfg, |_| {}).unwrap();
            let after = after_model.sample_rmse(&data.train[0]).unwrap();
            passes += (after < before) as usize;
        }
        assert!(passes >= 9, "{passes}/10");
    }

    #[test]
    fn constant_targets_are_fitted() {
        // every training sample shares the same parameters and fire
        let cfg = tiny_config();
        let mut data = tiny_dataset(4);
        let proto = data.train[0].clone();
        for (i, s) in data.train.iter_mut().enumerate() {
            *s = Sample { index: i, ..proto.clone() };
        }
        data.test = vec![Sample { index: 99, ..proto.clone() }];
        let spec = Arch::CnnFc.build_preset(cfg.interior_cells(), Preset::Desk).unwrap();
        let tc = TrainConfig {
            epochs: 150,
            learning_rate: 1e-3,
            batch_size: 4,
            seed: 1,
            init_std: 0.1,
            ..TrainConfig::default()
        };
        let m = train_inverse::<f32>(spec, &data, &tc).unwrap();
        let last = m.history.last().unwrap().test_rmse.unwrap();
        assert!(last < 0.02, "{last}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let data = tiny_dataset(2);
        let spec = Arch::FcUNet.build_preset(16, Preset::Desk).unwrap();
        let m = train_forward::<f32>(spec, &data, &quick_cfg(1, 1e-3)).unwrap();
        let back = TrainedModel::<f32>::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        let p = data.test[0].params;
        assert_eq!(back.predict_forward(&p).unwrap(), m.predict_forward(&p).unwrap());
    }

    #[test]
    fn inverse_predictions_are_in_range() {
        let data = tiny_dataset(2);
        let spec = Arch::CnnFc.build_preset(16, Preset::Desk).unwrap();
        let m: TrainedModel<f32> =
            TrainedModel::init(spec, data.config(), data.ranges(), 1.0, 4).unwrap();
        let r = ParamRanges::default();
        for s in &data.train {
            let p = m.predict_inverse(&s.arrival).unwrap();
            assert!(r.burn_times_s.contains(&p.burn_time_s));
            assert!((2.0..=8.0).contains(&p.wind_speed));
            assert!((0.0..=std::f64::consts::PI).contains(&p.theta));
        }
        assert!(m.predict_forward(&data.train[0].params).is_err());
    }
}
