//! Supervised training of the unrolled network.
//!
//! Conventional training runs data consistency on the full acquired mask Ω.
//! Multi-mask training draws `K` random subsets Θ_j ⊆ Ω per slice and takes
//! one step per (slice, subset) pair. Both compare the network's full
//! k-space against the fully sampled reference.

mod adam;
mod checkpoint;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{loss_graph, loss_l1l2, loss_l1l2_weighted, LossWeights};

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::model::{record_unrolled, ModelConfig, ModelParams};
use crate::physics::{CoilMaps, KSpace};
use crate::sampling::{partition_masks, AcsPolicy, SamplingMask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSeeds {
    pub init: u64,
    pub mask: u64,
    pub shuffle: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of subsets per slice; 1 selects conventional training.
    pub k: usize,
    /// Subset ratio `|Θ_j| / |Ω|`.
    pub rho: f64,
    pub acs_policy: AcsPolicy,
    pub lr: f64,
    pub epochs: u32,
    /// Pairs whose gradients are averaged per update.
    pub batch_size: usize,
    /// Redraw the subsets at the start of every epoch instead of once.
    pub resample_masks: bool,
    pub seeds: TrainSeeds,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 1,
            rho: 0.6,
            acs_policy: AcsPolicy::KeepAcs,
            lr: 5e-4,
            epochs: 30,
            batch_size: 1,
            resample_masks: false,
            seeds: TrainSeeds::default(),
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho {} must lie in (0, 1]", self.rho)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        self.model.validate()
    }
}

/// One training slice: acquired data on Ω and the fully sampled reference.
#[derive(Clone, Debug)]
pub struct TrainSlice {
    /// Measurements on the parent mask Ω.
    pub y: KSpace,
    /// Fully sampled reference k-space.
    pub y_ref: KSpace,
    pub coils: Arc<CoilMaps>,
}

impl TrainSlice {
    pub fn omega(&self) -> &SamplingMask {
        self.y.mask()
    }
}

/// One optimization step's diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// Global step counter, starting at 1.
    pub step: u64,
    /// Epoch, starting at 1.
    pub epoch: u32,
    pub slice: usize,
    pub mask: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Seconds since this training call started.
    pub elapsed: f64,
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u32,
    /// Completed steps.
    pub step: u64,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig) -> Result<Self> {
        let params = ModelParams::init(cfg.model.clone(), cfg.seeds.init)?;
        let adam = AdamState::new(&params);
        Ok(Self { params, adam, epoch: 0, step: 0 })
    }
}

pub enum TrainEvent<'a> {
    Step(&'a TrainRecord),
    EpochEnd(&'a TrainState),
}

/// Which data-consistency masks each slice trains with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Θ₁ = Ω.
    Conventional,
    /// `K` seeded random subsets of Ω.
    MultiMask,
}

/// Independent child seed `index` of stream `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 16);
    rng.next_u64()
}

/// Seed of slice `slice`'s subset family in `epoch` (0 when not resampling).
pub fn family_seed(cfg: &TrainConfig, slice: usize, epoch: u32) -> u64 {
    let epoch = if cfg.resample_masks { epoch } else { 0 };
    derive_seed(cfg.seeds.mask, u64::from(epoch), slice as u64)
}

/// The data-consistency masks of every slice for `epoch`.
pub fn training_masks(omegas: &[&SamplingMask], cfg: &TrainConfig, scheme: Scheme, epoch: u32) -> Result<Vec<Vec<SamplingMask>>> {
    omegas
        .iter()
        .enumerate()
        .map(|(i, omega)| match scheme {
            Scheme::Conventional => Ok(vec![(*omega).clone()]),
            Scheme::MultiMask => {
                let fam = partition_masks(omega, cfg.k, cfg.rho, family_seed(cfg, i, epoch), cfg.acs_policy)?;
                Ok(fam.children)
            }
        })
        .collect()
}

/// Seeded visiting order of all (slice, mask) pairs in `epoch`.
pub fn epoch_order(n_slices: usize, k: usize, shuffle_seed: u64, epoch: u32) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n_slices).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(u64::from(epoch));
    pairs.shuffle(&mut rng);
    pairs
}

/// Loss and parameter gradients of one (slice, mask) pair.
pub fn pair_loss_and_grads(
    slice: &TrainSlice,
    theta: &SamplingMask,
    params: &ModelParams,
    weights: LossWeights,
) -> Result<(f64, Vec<Array>)> {
    let y = slice.y.restrict(theta)?;
    let mut rec = record_unrolled(&y, theta, &slice.coils, params, true)?;
    let g = &mut rec.graph;
    let reference = g.constant(slice.y_ref.to_array());
    let loss = loss_graph(g, reference, rec.kspace, weights)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let mut grads = g.backward(loss)?;
    let grads = rec.params.iter().map(|&p| grads.take(p).expect("every parameter has a gradient")).collect();
    Ok((value, grads))
}

/// Trains with Ω as the only data-consistency mask.
pub fn train_conventional(
    slices: &[TrainSlice],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    observer: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainState> {
    run(slices, cfg, Scheme::Conventional, resume, observer)
}

/// Trains with `cfg.k` random subsets of Ω per slice.
pub fn train_multi_mask(
    slices: &[TrainSlice],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    observer: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainState> {
    run(slices, cfg, Scheme::MultiMask, resume, observer)
}

/// Conventional when `cfg.k == 1`, multi-mask otherwise.
pub fn train_supervised(
    slices: &[TrainSlice],
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    observer: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainState> {
    let scheme = if cfg.k == 1 { Scheme::Conventional } else { Scheme::MultiMask };
    run(slices, cfg, scheme, resume, observer)
}

fn run(
    slices: &[TrainSlice],
    cfg: &TrainConfig,
    scheme: Scheme,
    resume: Option<TrainState>,
    observer: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainState> {
    cfg.validate()?;
    if slices.is_empty() {
        return Err(Error::InvalidArgument("no training slices".into()));
    }
    let mut state = match resume {
        Some(s) => {
            if s.params.config() != &cfg.model {
                return Err(Error::InvalidArgument("resumed parameters were trained with another model config".into()));
            }
            s
        }
        None => TrainState::fresh(cfg)?,
    };
    let k = if scheme == Scheme::Conventional { 1 } else { cfg.k };
    let omegas: Vec<&SamplingMask> = slices.iter().map(TrainSlice::omega).collect();
    let mut masks = training_masks(&omegas, cfg, scheme, 1)?;
    let start = Instant::now();

    for epoch in state.epoch + 1..=cfg.epochs {
        if cfg.resample_masks && epoch > 1 {
            masks = training_masks(&omegas, cfg, scheme, epoch)?;
        }
        let order = epoch_order(slices.len(), k, cfg.seeds.shuffle, epoch);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Array>> = None;
            for &(i, j) in batch {
                let step = state.step + 1;
                let (loss, grads) = pair_loss_and_grads(&slices[i], &masks[i][j], &state.params, cfg.loss)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { step, slice: i, mask: j });
                }
                if !grads.iter().all(Array::all_finite) {
                    return Err(Error::NonFiniteGradient { step, slice: i, mask: j });
                }
                let grad_norm = grads.iter().map(|g| g.dot(g)).sum::<f64>().sqrt();
                match &mut acc {
                    Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| *a = a.zip_map(g, |x, y| x + y)),
                    None => acc = Some(grads),
                }
                state.step = step;
                let record = TrainRecord {
                    step,
                    epoch,
                    slice: i,
                    mask: j,
                    loss,
                    grad_norm,
                    elapsed: start.elapsed().as_secs_f64(),
                };
                observer(TrainEvent::Step(&record))?;
            }
            let mut grads = acc.expect("batches are non-empty");
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                grads.iter_mut().for_each(|g| *g = g.map(|x| x * inv));
            }
            adam_step(&mut state.params, &grads, &mut state.adam, cfg.lr, &cfg.adam)?;
        }
        state.epoch = epoch;
        observer(TrainEvent::EpochEnd(&state))?;
    }
    Ok(state)
}
