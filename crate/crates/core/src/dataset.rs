//! Parameter sampling, arrival-map preprocessing, network input encoding and
//! on-disk datasets.
//!
//! A dataset directory holds `manifest.json` plus one FAT1 raster per sample
//! under `train/NNNNN.fat` and `test/NNNNN.fat`. Each raster has two channels:
//! the filled arrival time in seconds and the burn mask as 0/1.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fat::FatRaster;
use crate::nn::Tensor;
use crate::raster::{ArrivalMap, BurnMask, Raster};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::sim::{run_simulation, SimConfig, SimParams, SimState};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Number of model parameters learned by the surrogates.
pub const N_PARAMS: usize = 5;
pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "wind_speed",
    "pyro_potential",
    "burn_time",
    "ignition_prob",
    "theta",
];

/// Sampling distributions of the five model parameters. Intervals are
/// sampled uniformly, the burn time uniformly from the listed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub wind_speed: [f64; 2],
    pub pyro_potential: [f64; 2],
    pub burn_times_s: Vec<f64>,
    pub ignition_prob: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            wind_speed: [2.0, 8.0],
            pyro_potential: [0.5, 0.9],
            burn_times_s: vec![9.0, 12.0, 15.0, 18.0, 21.0],
            ignition_prob: [0.3, 0.7],
            theta: [0.0, PI],
        }
    }
}

impl ParamRanges {
    /// Intervals may be degenerate (`lo == hi`), which pins the parameter.
    pub fn validate(&self, config: &SimConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, [lo, hi]) in PARAM_NAMES.iter().zip(self.bounds()) {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] is not an interval"));
            }
        }
        if self.burn_times_s.is_empty() {
            return bad("burn time set is empty".into());
        }
        let probe = |p: SimParams| p.validate(config);
        for &b in &self.burn_times_s {
            probe(SimParams {
                wind_speed: self.wind_speed[0],
                pyro_potential: self.pyro_potential[0],
                burn_time_s: b,
                ignition_prob: self.ignition_prob[0],
                theta: self.theta[0],
                seed: 0,
            })?;
        }
        probe(SimParams {
            wind_speed: self.wind_speed[1],
            pyro_potential: self.pyro_potential[1],
            burn_time_s: self.burn_times_s[0],
            ignition_prob: self.ignition_prob[1],
            theta: self.theta[1],
            seed: 0,
        })
    }

    /// Continuous span of the burn time set.
    pub fn burn_time_range(&self) -> [f64; 2] {
        let lo = self.burn_times_s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .burn_times_s
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        [lo, hi]
    }

    /// `[lo, hi]` per parameter in [`PARAM_NAMES`] order.
    pub fn bounds(&self) -> [[f64; 2]; N_PARAMS] {
        [
            self.wind_speed,
            self.pyro_potential,
            self.burn_time_range(),
            self.ignition_prob,
            self.theta,
        ]
    }

    /// Nearest admissible burn time; ties go to the smaller value.
    pub fn round_burn_time(&self, t: f64) -> f64 {
        self.burn_times_s
            .iter()
            .copied()
            .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()).then(a.total_cmp(b)))
            .unwrap_or(t)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws each parameter independently, then a fresh simulation seed.
pub fn sample_params<R: Rng + ?Sized>(ranges: &ParamRanges, rng: &mut R) -> SimParams {
    let wind_speed = uniform(rng, ranges.wind_speed);
    let pyro_potential = uniform(rng, ranges.pyro_potential);
    let burn_time_s = ranges.burn_times_s[rng.random_range(0..ranges.burn_times_s.len())];
    let ignition_prob = uniform(rng, ranges.ignition_prob);
    let theta = uniform(rng, ranges.theta);
    SimParams {
        wind_speed,
        pyro_potential,
        burn_time_s,
        ignition_prob,
        theta,
        seed: rng.random(),
    }
}

/// Replaces unburnt cells by `max arrival + dt_s` and returns the filled map,
/// the burn mask and the fill value.
pub fn preprocess_arrival(raw: &ArrivalMap, dt_s: f64) -> Result<(Raster<f64>, BurnMask, f64)> {
    let max = raw
        .as_slice()
        .iter()
        .flatten()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::NoIgnition)?;
    let fill = max + dt_s;
    Ok((raw.map(|a| a.unwrap_or(fill)), raw.burn_mask(), fill))
}

/// Min-max scaling onto `[0, 1]`; a degenerate range maps to 0.
fn to_unit(v: f64, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Parameters scaled to `[0, 1]` per range, burn time on its continuous span.
pub fn normalize_params(params: &SimParams, ranges: &ParamRanges) -> [f64; N_PARAMS] {
    let v = [
        params.wind_speed,
        params.pyro_potential,
        params.burn_time_s,
        params.ignition_prob,
        params.theta,
    ];
    let b = ranges.bounds();
    std::array::from_fn(|i| to_unit(v[i], b[i]))
}

/// Inverse of [`normalize_params`] after clamping each entry to `[0, 1]`.
/// Non-finite entries map to the lower bound. The burn time stays continuous
/// and the seed is zero.
pub fn denormalize_params(v: &[f64; N_PARAMS], ranges: &ParamRanges) -> SimParams {
    let b = ranges.bounds();
    let x: [f64; N_PARAMS] = std::array::from_fn(|i| {
        let u = if v[i].is_finite() { v[i].clamp(0.0, 1.0) } else { 0.0 };
        b[i][0] + u * (b[i][1] - b[i][0])
    });
    SimParams {
        wind_speed: x[0],
        pyro_potential: x[1],
        burn_time_s: x[2],
        ignition_prob: x[3],
        theta: x[4],
        seed: 0,
    }
}

/// Interior cells on the ignition line for angle `theta`.
pub fn ignition_line_raster(theta: f64, config: &SimConfig) -> Result<BurnMask> {
    let mut state = SimState::new(config, 0)?;
    state.ignite_line(theta, config.ignition_line_length_m);
    Ok(state.arrival_map().burn_mask())
}

/// Forward-problem image input: four spatially constant channels holding the
/// normalised wind, pyrogenic potential, burn time and ignition probability,
/// then the binary ignition-line raster. Shape `[H, W, 5]`.
pub fn encode_forward_input<T: Scalar>(
    params: &SimParams,
    config: &SimConfig,
    ranges: &ParamRanges,
) -> Result<Tensor<T>> {
    let line = ignition_line_raster(params.theta, config)?;
    let v = normalize_params(params, ranges);
    let mut data = Vec::with_capacity(line.len() * 5);
    for &on in line.as_slice() {
        data.extend(v[..4].iter().map(|&x| T::from_f64_lossy(x)));
        data.push(if on { T::one() } else { T::zero() });
    }
    Tensor::from_vec(&[line.height(), line.width(), 5], data)
}

/// Normalised parameter vector as a length-5 tensor.
pub fn encode_params<T: Scalar>(params: &SimParams, ranges: &ParamRanges) -> Tensor<T> {
    let v = normalize_params(params, ranges);
    Tensor::from_vec(&[N_PARAMS], v.iter().map(|&x| T::from_f64_lossy(x)).collect())
        .expect("length 5")
}

/// Inverse-problem image input: filled arrival divided by the horizon,
/// shape `[H, W, 1]`.
pub fn encode_arrival_input<T: Scalar>(arrival: &Raster<f32>, config: &SimConfig) -> Tensor<T> {
    let s = 1.0 / config.horizon_s;
    Tensor::from_vec(
        &[arrival.height(), arrival.width(), 1],
        arrival
            .as_slice()
            .iter()
            .map(|&a| T::from_f64_lossy(a as f64 * s))
            .collect(),
    )
    .expect("raster length")
}

/// One preprocessed simulation, held at storage (single) precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Global index within the dataset.
    pub index: usize,
    pub params: SimParams,
    /// Filled first arrival times, s.
    pub arrival: Raster<f32>,
    pub mask: BurnMask,
    pub fill_value_s: f32,
}

impl Sample {
    /// Runs the simulator and preprocesses the result.
    pub fn simulate(index: usize, params: SimParams, config: &SimConfig) -> Result<Sample> {
        let raw = run_simulation(&params, config)?;
        let (filled, mask, fill) = preprocess_arrival(&raw, config.dt_s)?;
        Ok(Sample {
            index,
            params,
            arrival: filled.map(|&a| a as f32),
            mask,
            fill_value_s: fill as f32,
        })
    }

    pub fn to_raster(&self) -> FatRaster {
        let mask: Vec<f32> = self.mask.as_slice().iter().map(|&m| m as u8 as f32).collect();
        FatRaster::from_planes(
            self.arrival.height(),
            self.arrival.width(),
            &[self.arrival.as_slice(), &mask],
        )
        .expect("planes share the raster shape")
    }

    fn from_raster(
        fat: &FatRaster,
        index: usize,
        params: SimParams,
        fill_value_s: f32,
    ) -> Result<Sample> {
        let bad = |d: String| Error::Format {
            what: "sample raster",
            detail: d,
        };
        if fat.channels != 2 {
            return Err(bad(format!("{} channels, expected 2", fat.channels)));
        }
        let (h, w) = (fat.height as usize, fat.width as usize);
        let arrival = Raster::from_vec(h, w, fat.channel(0))?;
        let mask = fat
            .channel(1)
            .into_iter()
            .map(|m| match m {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(bad(format!("mask value {m}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mask = Raster::from_vec(h, w, mask)?;
        let inconsistent = arrival
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .any(|(&a, &m)| !m && a != fill_value_s);
        if inconsistent {
            return Err(bad("unburnt cell differs from the fill value".into()));
        }
        Ok(Sample {
            index,
            params,
            arrival,
            mask,
            fill_value_s,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Global index; the seed stream of this sample.
    pub index: usize,
    pub split: Split,
    /// Path relative to the dataset directory.
    pub file: String,
    pub params: SimParams,
    pub fill_value_s: f32,
    pub burnt_cells: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: SimConfig,
    pub ranges: ParamRanges,
    pub n_train: usize,
    pub n_test: usize,
    pub base_seed: u64,
    pub samples: Vec<SampleRecord>,
}

/// A fully loaded dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn config(&self) -> &SimConfig {
        &self.manifest.config
    }

    pub fn ranges(&self) -> &ParamRanges {
        &self.manifest.ranges
    }
}

/// Parameters of sample `index` of a dataset with seed `base_seed`.
pub fn sample_params_at(ranges: &ParamRanges, base_seed: u64, index: usize) -> SimParams {
    sample_params(ranges, &mut seeded(derive_seed(base_seed, index as u64)))
}

/// Simulates sample `index` without touching the disk.
pub fn generate_sample(
    index: usize,
    config: &SimConfig,
    ranges: &ParamRanges,
    base_seed: u64,
) -> Result<Sample> {
    Sample::simulate(index, sample_params_at(ranges, base_seed, index), config).map_err(|e| {
        Error::Sample {
            index,
            detail: e.to_string(),
        }
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Generates `n_train + n_test` samples into `dir` and writes the manifest.
///
/// Sample `i` uses the seed stream `derive_seed(base_seed, i)`; the first
/// `n_train` indices form the training split. Output bytes do not depend on
/// `threads` (`None` uses the global rayon pool).
pub fn generate_dataset(
    dir: &Path,
    n_train: usize,
    n_test: usize,
    config: &SimConfig,
    ranges: &ParamRanges,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<DatasetManifest> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("sample counts must be positive".into()));
    }
    config.validate()?;
    ranges.validate(config)?;
    for split in [Split::Train, Split::Test] {
        let d = dir.join(split.dir());
        fs::create_dir_all(&d).map_err(|e| Error::io(d, e))?;
    }

    let one = |index: usize| -> Result<SampleRecord> {
        let sample = generate_sample(index, config, ranges, base_seed)?;
        let (split, local) = if index < n_train {
            (Split::Train, index)
        } else {
            (Split::Test, index - n_train)
        };
        let file = format!("{}/{local:05}.fat", split.dir());
        let bytes = sample.to_raster().to_bytes();
        write_file(&dir.join(&file), &bytes).map_err(|e| Error::Sample {
            index,
            detail: e.to_string(),
        })?;
        Ok(SampleRecord {
            index,
            split,
            file,
            params: sample.params,
            fill_value_s: sample.fill_value_s,
            burnt_cells: sample.mask.count(),
            sha256: sha256_hex(&bytes),
        })
    };
    let run = || {
        (0..n_train + n_test)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()
    };
    let samples = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        ranges: ranges.clone(),
        n_train,
        n_test,
        base_seed,
        samples,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let n_train = manifest
        .samples
        .iter()
        .filter(|r| r.split == Split::Train)
        .count();
    if manifest.samples.len() != manifest.n_train + manifest.n_test || n_train != manifest.n_train {
        return Err(Error::Format {
            what: "manifest",
            detail: format!(
                "declares {} train + {} test samples, lists {} ({} train)",
                manifest.n_train,
                manifest.n_test,
                manifest.samples.len(),
                n_train
            ),
        });
    }
    for (i, r) in manifest.samples.iter().enumerate() {
        if r.index != i {
            return Err(Error::Format {
                what: "manifest",
                detail: format!("entry {i} has index {}", r.index),
            });
        }
    }
    manifest.config.validate()?;
    Ok(manifest)
}

/// Reads and verifies one listed sample.
pub fn load_sample(dir: &Path, manifest: &DatasetManifest, record: &SampleRecord) -> Result<Sample> {
    let index = record.index;
    let fail = |detail: String| Error::Sample { index, detail };
    let path: PathBuf = dir.join(&record.file);
    let bytes = fs::read(&path).map_err(|e| fail(Error::io(&path, e).to_string()))?;
    if sha256_hex(&bytes) != record.sha256 {
        return Err(fail(format!("{}: checksum mismatch", record.file)));
    }
    let fat = FatRaster::from_bytes(&bytes).map_err(|e| fail(e.to_string()))?;
    let n = manifest.config.interior_cells();
    if (fat.height as usize, fat.width as usize) != (n, n) {
        return Err(fail(format!(
            "raster is {}x{}, config interior is {n}x{n}",
            fat.height, fat.width
        )));
    }
    Sample::from_raster(&fat, index, record.params, record.fill_value_s).map_err(|e| fail(e.to_string()))
}

/// Loads every sample in index order, verifying checksums.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut train = Vec::with_capacity(manifest.n_train);
    let mut test = Vec::with_capacity(manifest.n_test);
    for record in &manifest.samples {
        let s = load_sample(dir, &manifest, record)?;
        match record.split {
            Split::Train => train.push(s),
            Split::Test => test.push(s),
        }
    }
    Ok(Dataset {
        manifest,
        train,
        test,
    })
}

/// Builds an in-memory dataset without writing files.
pub fn generate_in_memory(
    n_train: usize,
    n_test: usize,
    config: &SimConfig,
    ranges: &ParamRanges,
    base_seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    ranges.validate(config)?;
    let samples = (0..n_train + n_test)
        .into_par_iter()
        .map(|i| generate_sample(i, config, ranges, base_seed))
        .collect::<Result<Vec<_>>>()?;
    let records = samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let split = if index < n_train { Split::Train } else { Split::Test };
            let local = if index < n_train { index } else { index - n_train };
            SampleRecord {
                index,
                split,
                file: format!("{}/{local:05}.fat", split.dir()),
                params: s.params,
                fill_value_s: s.fill_value_s,
                burnt_cells: s.mask.count(),
                sha256: sha256_hex(&s.to_raster().to_bytes()),
            }
        })
        .collect();
    let mut train = samples;
    let test = train.split_off(n_train);
    Ok(Dataset {
        manifest: DatasetManifest {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            ranges: ranges.clone(),
            n_train,
            n_test,
            base_seed,
            samples: records,
        },
        train,
        test,
    })
}
