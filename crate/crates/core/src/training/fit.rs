use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::zero_like;
use super::schedule::{ratio_from_counts, ImbalanceSchedule};
use super::{Checkpoint, CompletionModel, LossKind, ModelVariant, Sgd, TrainConfig, TrainError};
use crate::codec::{to_block_order, AutoEncoder, DECODER_GROUP};
use crate::dataset::{Sample, SampleStore, SubregionStore};
use crate::nn::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Mean training loss over the epoch's batches, weighted by batch size.
    pub loss: f64,
    pub unoccupied_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Called after every epoch with the updated network.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochRecord, &Network<f32>);

struct Problem {
    inputs: Vec<f32>,
    targets: Vec<f32>,
    n: usize,
    occupied: u64,
    unoccupied: u64,
}

impl Problem {
    fn new(inputs: Vec<f32>, targets: Vec<f32>, n: usize) -> Self {
        let occupied = targets.iter().filter(|&&t| t > 0.5).count() as u64;
        let unoccupied = targets.len() as u64 - occupied;
        Self {
            inputs,
            targets,
            n,
            occupied,
            unoccupied,
        }
    }

    fn from_samples(samples: &[Sample], variant: ModelVariant) -> Self {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for s in samples {
            inputs.extend_from_slice(s.depth.values());
            let t = s.target.to_values::<f32>();
            match variant {
                ModelVariant::HighResStacked => targets.extend(to_block_order(&t)),
                _ => targets.extend(t),
            }
        }
        Self::new(inputs, targets, samples.len())
    }
}

/// Per-epoch shuffle seed; depends only on the run seed and the absolute epoch
/// so resumed runs see the same batch order.
fn epoch_rng(seed: u64, epoch: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn gather(src: &[f32], per: usize, idx: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(per * idx.len());
    for &i in idx {
        out.extend_from_slice(&src[i * per..(i + 1) * per]);
    }
    out
}

fn fit(
    ckpt: &mut Checkpoint,
    problem: &Problem,
    cfg: &TrainConfig,
    schedule: &ImbalanceSchedule,
    freeze_decoder: bool,
    hook: EpochHook<'_>,
) -> Result<History, TrainError> {
    let net = &mut ckpt.network;
    let in_shape = net.input_shape().to_vec();
    let in_len: usize = in_shape.iter().product();
    let out_len: usize = net.output_shape().iter().product();
    if problem.inputs.len() != problem.n * in_len || problem.targets.len() != problem.n * out_len {
        return Err(TrainError::Argument(format!(
            "training data does not match network shapes {in_shape:?} -> [{out_len}]"
        )));
    }
    let velocity = std::mem::take(&mut ckpt.velocity);
    let mut sgd = Sgd::with_velocity(net.params(), cfg.learning_rate, cfg.momentum, velocity)?;
    let mut history = History::default();
    let mut order: Vec<usize> = (0..problem.n).collect();
    for _ in 0..cfg.epochs {
        let epoch = ckpt.epoch;
        if freeze_decoder {
            net.params_mut()
                .set_trainable(DECODER_GROUP, epoch >= cfg.freeze_epochs)?;
        }
        let w = schedule.weight_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let mut shape = vec![idx.len()];
            shape.extend_from_slice(&in_shape);
            let x = Tensor::from_vec(&shape, gather(&problem.inputs, in_len, idx))?;
            let y = gather(&problem.targets, out_len, idx);
            let trace = net.forward_trace(&x)?;
            let out = trace.output().expect("non-empty network");
            let (loss, grad) = cfg.loss.eval(out.data(), &y, w)?;
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch });
            }
            let grad = Tensor::from_vec(out.shape(), grad)?;
            let grads = net.backward(&trace, &grad)?;
            sgd.step(net.params_mut(), &grads.groups)?;
            total += loss * idx.len() as f64;
        }
        if !net.params().is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        let record = EpochRecord {
            epoch,
            loss: total / problem.n as f64,
            unoccupied_weight: w,
        };
        ckpt.epoch += 1;
        hook(&record, net);
        history.epochs.push(record);
    }
    ckpt.velocity = sgd.velocity().to_vec();
    Ok(history)
}

fn schedule_for(problem: &Problem, cfg: &TrainConfig) -> Result<ImbalanceSchedule, TrainError> {
    let s0 = ratio_from_counts(problem.occupied, problem.unoccupied, cfg.s_min);
    ImbalanceSchedule::new(s0, cfg.ramp_epochs, cfg.s_min)
}

fn require_variant(cfg: &TrainConfig, expected: ModelVariant) -> Result<(), TrainError> {
    if cfg.variant != expected {
        return Err(TrainError::Variant {
            expected: expected.name(),
            found: cfg.variant,
        });
    }
    Ok(())
}

fn require_store(store: &SampleStore, variant: ModelVariant) -> Result<(), TrainError> {
    if store.is_empty() {
        return Err(TrainError::Argument("empty store".into()));
    }
    let r = variant.output_resolution();
    if store.resolution != r {
        return Err(TrainError::Resolution {
            expected: r,
            found: store.resolution,
        });
    }
    Ok(())
}

pub fn train_autoencoder(
    blocks: &SubregionStore,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, History), TrainError> {
    train_autoencoder_with_hook(blocks, cfg, &mut |_, _| {})
}

/// Fits the block auto-encoder to reconstruct its own input.
pub fn train_autoencoder_with_hook(
    blocks: &SubregionStore,
    cfg: &TrainConfig,
    hook: EpochHook<'_>,
) -> Result<(Checkpoint, History), TrainError> {
    cfg.validate()?;
    require_variant(cfg, ModelVariant::AutoEncoder)?;
    if blocks.is_empty() {
        return Err(TrainError::Argument("empty block store".into()));
    }
    let values = blocks.values();
    let problem = Problem::new(values.clone(), values, blocks.len());
    let schedule = schedule_for(&problem, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ae = AutoEncoder::new(&mut rng);
    let mut ckpt =
        Checkpoint::from_network(ModelVariant::AutoEncoder, ae.network().clone(), cfg.seed);
    let history = fit(&mut ckpt, &problem, cfg, &schedule, false, hook)?;
    Ok((ckpt, history))
}

pub fn train_completion(
    store: &SampleStore,
    ae: &AutoEncoder,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, History), TrainError> {
    train_completion_with_hook(store, ae, cfg, &mut |_, _| {})
}

/// Trains the stacked model end to end. The decoder starts from `ae` and is
/// frozen for the first `cfg.freeze_epochs` epochs.
pub fn train_completion_with_hook(
    store: &SampleStore,
    ae: &AutoEncoder,
    cfg: &TrainConfig,
    hook: EpochHook<'_>,
) -> Result<(Checkpoint, History), TrainError> {
    cfg.validate_fresh()?;
    require_variant(cfg, ModelVariant::HighResStacked)?;
    require_store(store, cfg.variant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = CompletionModel::stacked_with_decoder(ae, &mut rng)?;
    let mut ckpt = Checkpoint::from_network(cfg.variant, model.into_network(), cfg.seed);
    let problem = Problem::from_samples(&store.records, cfg.variant);
    let schedule = schedule_for(&problem, cfg)?;
    let history = fit(&mut ckpt, &problem, cfg, &schedule, true, hook)?;
    Ok((ckpt, history))
}

/// Direct 10^3 regression without the codec.
pub fn train_low_res(
    store: &SampleStore,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, History), TrainError> {
    cfg.validate()?;
    require_variant(cfg, ModelVariant::LowResDirect)?;
    require_store(store, cfg.variant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = CompletionModel::new(cfg.variant, &mut rng)?;
    let mut ckpt = Checkpoint::from_network(cfg.variant, model.into_network(), cfg.seed);
    let problem = Problem::from_samples(&store.records, cfg.variant);
    let schedule = schedule_for(&problem, cfg)?;
    let history = fit(&mut ckpt, &problem, cfg, &schedule, false, &mut |_, _| {})?;
    Ok((ckpt, history))
}

pub fn finetune(
    ckpt: Checkpoint,
    store: &SampleStore,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, History), TrainError> {
    finetune_with_hook(ckpt, store, cfg, &mut |_, _| {})
}

/// Continues a completion checkpoint on another store. The epoch counter,
/// momentum buffers and the decoder freeze rule carry over; the imbalance
/// ratio is recomputed from `store`.
pub fn finetune_with_hook(
    mut ckpt: Checkpoint,
    store: &SampleStore,
    cfg: &TrainConfig,
    hook: EpochHook<'_>,
) -> Result<(Checkpoint, History), TrainError> {
    cfg.validate()?;
    if ckpt.variant != cfg.variant {
        return Err(TrainError::Variant {
            expected: cfg.variant.name(),
            found: ckpt.variant,
        });
    }
    if ckpt.variant == ModelVariant::AutoEncoder {
        return Err(TrainError::Variant {
            expected: "a completion model",
            found: ckpt.variant,
        });
    }
    require_store(store, ckpt.variant)?;
    if ckpt.velocity.len() != ckpt.network.params().groups().len() {
        ckpt.velocity = zero_like(&ckpt.network);
    }
    let problem = Problem::from_samples(&store.records, ckpt.variant);
    let schedule = schedule_for(&problem, cfg)?;
    let stacked = ckpt.variant == ModelVariant::HighResStacked;
    let history = fit(&mut ckpt, &problem, cfg, &schedule, stacked, hook)?;
    Ok((ckpt, history))
}

/// Mean loss of `model` over `samples` in one batch, at unoccupied weight `w_unocc`.
pub fn evaluation_loss(
    model: &CompletionModel,
    samples: &[Sample],
    w_unocc: f64,
    loss: LossKind,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Argument("no samples".into()));
    }
    let problem = Problem::from_samples(samples, model.variant());
    let depths: Vec<_> = samples.iter().map(|s| &s.depth).collect();
    let out = model.forward_raw(&depths)?;
    Ok(loss.eval(out.data(), &problem.targets, w_unocc)?.0)
}
