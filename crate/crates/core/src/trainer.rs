//! Training loops: the domain-randomized contrastive trainer and a plain
//! cross-entropy trainer kept as an independent reference.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::augment::{strong_view, weak_view};
use crate::bank::{class_average, MemoryBank};
use crate::cloud::PointCloud;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::labels::TrainId;
use crate::loss::{contrastive_loss, cross_entropy, LossBreakdown};
use crate::matrix::Mat;
use crate::model::Model;
use crate::optim::Sgd;
use crate::rng::{derive_seed, rng};
use crate::voxel::featurize_cloud;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_SCAN: u64 = 2;
const VIEW_WEAK: u64 = 0;
const VIEW_STRONG: u64 = 1;

/// One scan of a batch together with the seed of its augmentation streams.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub cloud: &'a PointCloud,
    pub seed: u64,
}

fn weak_seed(s: &Sample) -> u64 {
    derive_seed(s.seed, &[VIEW_WEAK])
}

fn strong_seed(s: &Sample) -> u64 {
    derive_seed(s.seed, &[VIEW_STRONG])
}

fn labels_of(cloud: &PointCloud) -> Result<&[TrainId]> {
    cloud
        .labels()
        .ok_or_else(|| Error::Argument("training scans must be labeled".into()))
}

/// Featurizes each cloud and stacks the rows.
fn stack(clouds: &[PointCloud], voxel_size: f64) -> Result<(Mat, Vec<TrainId>)> {
    let mut feats = Vec::with_capacity(clouds.len());
    let mut labels = Vec::new();
    for c in clouds {
        feats.push(featurize_cloud(c, voxel_size)?);
        labels.extend_from_slice(labels_of(c)?);
    }
    let refs: Vec<&Mat> = feats.iter().collect();
    Ok((Mat::vstack(&refs), labels))
}

/// Seed of scan `index` in `epoch`.
pub fn scan_seed(run_seed: u64, epoch: usize, index: usize) -> u64 {
    derive_seed(run_seed, &[STREAM_SCAN, epoch as u64, index as u64])
}

/// Visiting order of `n` scans in `epoch`.
pub fn epoch_order(run_seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(derive_seed(run_seed, &[STREAM_SHUFFLE, epoch as u64])));
    order
}

pub fn init_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, &[STREAM_INIT])
}

/// Steps per epoch for `n` scans.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// One optimization step.
///
/// Cross-entropy is taken on the weak views. The batch class means of the
/// weak-view embeddings update the bank (or replace it when the bank is
/// disabled), and the strong-view embeddings are contrasted against it. The
/// contrastive gradient is scaled by `lambda_ct`; with `lambda_ct == 0` its
/// backward pass is skipped.
pub fn train_step(
    model: &mut Model,
    bank: &mut MemoryBank,
    opt: &mut Sgd,
    batch: &[Sample],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let voxel = model.config().voxel_size;
    let c = model.config().num_classes;
    let strong_cfg = cfg.strong_config();

    let weak: Vec<PointCloud> = batch
        .iter()
        .map(|s| weak_view(s.cloud, &cfg.augment, weak_seed(s)))
        .collect::<Result<_>>()?;
    let strong: Vec<PointCloud> = batch
        .iter()
        .map(|s| strong_view(s.cloud, &strong_cfg, strong_seed(s)).map(|v| v.cloud))
        .collect::<Result<_>>()?;
    let (xw, lw) = stack(&weak, voxel)?;
    let (xs, ls) = stack(&strong, voxel)?;

    model.zero_grad();
    let out_w = model.forward(&xw)?;
    let ce = cross_entropy(&out_w.logits, &lw)?;
    model.backward(None, Some(&ce.grad))?;

    let avg = class_average(&out_w.embeddings, &lw, c)?;
    let keys = if cfg.use_memory_bank {
        bank.update(&avg)?;
        bank.clone()
    } else {
        MemoryBank::from_batch(&avg)
    };

    let ct = if cfg.lambda_ct != 0.0 {
        let out_s = model.forward(&xs)?;
        let mut ct = contrastive_loss(&out_s.embeddings, &ls, &keys, cfg.temperature)?;
        ct.grad.scale(cfg.lambda_ct);
        model.backward(Some(&ct.grad), None)?;
        ct.loss
    } else {
        let out_s = model.infer(&xs)?;
        contrastive_loss(&out_s.embeddings, &ls, &keys, cfg.temperature)?.loss
    };

    opt.step(model, lr);
    Ok(LossBreakdown::new(ce.loss, ct, cfg.lambda_ct))
}

/// Mean losses of one epoch and the learning rate of its first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub ce: f64,
    pub ct: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,ce,ct,total,lr\n");
        for e in &self.epochs {
            writeln!(s, "{},{:.6},{:.6},{:.6},{:.6}", e.epoch, e.ce, e.ct, e.total, e.lr).unwrap();
        }
        s
    }
}

/// Model, bank and optimizer state of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub bank: MemoryBank,
    pub opt: Sgd,
    cfg: TrainConfig,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(cfg.model.clone(), init_seed(cfg.seed))?;
        let bank = MemoryBank::new(cfg.model.num_classes, cfg.model.embed_dim, cfg.bank_momentum)?;
        let opt = Sgd::new(cfg.momentum, cfg.weight_decay);
        Ok(Self { model, bank, opt, cfg })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Runs every epoch over `data`. `progress` sees each finished epoch.
    pub fn train(&mut self, data: &[PointCloud], mut progress: impl FnMut(&EpochLoss)) -> Result<LossCurve> {
        if data.is_empty() {
            return Err(Error::Argument("no training scans".into()));
        }
        let cfg = self.cfg.clone();
        let per_epoch = steps_per_epoch(data.len(), cfg.batch_size);
        let total = cfg.epochs * per_epoch;
        let mut curve = LossCurve::default();
        let mut t = 0;
        for epoch in 0..cfg.epochs {
            let order = epoch_order(cfg.seed, epoch, data.len());
            let mut sums = [0.0; 3];
            let mut first_lr = None;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<Sample> = chunk
                    .iter()
                    .map(|&i| Sample {
                        cloud: &data[i],
                        seed: scan_seed(cfg.seed, epoch, i),
                    })
                    .collect();
                let lr = cfg.schedule.lr(cfg.lr, t, total);
                first_lr.get_or_insert(lr);
                let l = train_step(&mut self.model, &mut self.bank, &mut self.opt, &batch, &cfg, lr)?;
                sums[0] += l.ce;
                sums[1] += l.ct;
                sums[2] += l.total;
                t += 1;
            }
            let n = per_epoch as f64;
            let e = EpochLoss {
                epoch,
                ce: sums[0] / n,
                ct: sums[1] / n,
                total: sums[2] / n,
                lr: first_lr.unwrap_or(cfg.lr),
            };
            progress(&e);
            curve.epochs.push(e);
        }
        Ok(curve)
    }
}

/// Supervised training on weak views with cross-entropy only. Shares the
/// seeding scheme of [`Trainer`] so a run with `lambda_ct == 0` and no strong
/// augmentation reaches the same parameters.
pub fn train_supervised(cfg: &TrainConfig, data: &[PointCloud]) -> Result<Model> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("no training scans".into()));
    }
    let mut model = Model::new(cfg.model.clone(), init_seed(cfg.seed))?;
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    let total = cfg.epochs * steps_per_epoch(data.len(), cfg.batch_size);
    let mut t = 0;
    for epoch in 0..cfg.epochs {
        for chunk in epoch_order(cfg.seed, epoch, data.len()).chunks(cfg.batch_size) {
            let views: Vec<PointCloud> = chunk
                .iter()
                .map(|&i| {
                    let s = Sample {
                        cloud: &data[i],
                        seed: scan_seed(cfg.seed, epoch, i),
                    };
                    weak_view(s.cloud, &cfg.augment, weak_seed(&s))
                })
                .collect::<Result<_>>()?;
            let (x, y) = stack(&views, cfg.model.voxel_size)?;
            model.zero_grad();
            let out = model.forward(&x)?;
            let ce = cross_entropy(&out.logits, &y)?;
            model.backward(None, Some(&ce.grad))?;
            opt.step(&mut model, cfg.schedule.lr(cfg.lr, t, total));
            t += 1;
        }
    }
    Ok(model)
}
