//! Losses, importance estimation and the training loop: squared-error
//! prediction loss, quadratic parameter-anchor penalty weighted by the
//! diagonal Fisher information, and adaptive moment descent with decoupled
//! weight decay.

use crate::binfmt;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::model::{checkpoint, tbptt_gradient, ParamVector, Prediction};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Snapshot of one finished task: the parameters it ended with and the
/// per-parameter importance of keeping them.
#[derive(Debug, Clone)]
pub struct TaskAnchor {
    pub task_index: usize,
    pub theta: ParamVector,
    pub fisher: ParamVector,
}

/// Mean squared velocity error over the prediction horizon.
pub fn pred_loss(pred: &Prediction, target: &[Vec2]) -> Result<f64> {
    if pred.velocities.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.velocities.len(),
            right: target.len(),
        });
    }
    let sum: f64 = pred
        .velocities
        .iter()
        .zip(target)
        .map(|(a, b)| (*a - *b).norm_sq())
        .sum();
    Ok(sum / target.len() as f64)
}

/// Quadratic anchor penalty summed over tasks:
/// `sum_l (lambda / 2) * sum_j F_lj (theta_j - theta_lj)^2`, with gradient
/// `sum_l lambda * F_l (theta - theta_l)`.
pub fn ewc_loss(theta: &ParamVector, anchors: &[TaskAnchor], lambda: f64) -> (f64, ParamVector) {
    let mut grad = ParamVector::zeros(*theta.cfg());
    if lambda == 0.0 || anchors.is_empty() {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for anchor in anchors {
        let g = grad.data_mut();
        for j in 0..theta.len() {
            let diff = theta.data()[j] - anchor.theta.data()[j];
            let f = anchor.fisher.data()[j];
            loss += 0.5 * lambda * f * diff * diff;
            g[j] += lambda * f * diff;
        }
    }
    (loss, grad)
}

/// Mean gradient over a slice of sequences, reduced in index order so the
/// result is identical no matter how many workers run. Returns the mean
/// prediction loss alongside.
pub fn batch_gradient(
    theta: &ParamVector,
    batch: &[&crate::dataset::ExampleSequence],
) -> Result<(f64, ParamVector)> {
    let parts: Vec<(f64, ParamVector)> = batch
        .par_iter()
        .map(|seq| tbptt_gradient(theta, seq, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let mut total = ParamVector::zeros(*theta.cfg());
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (l, g) in &parts {
        loss += l * scale;
        total.axpy(g, scale);
    }
    Ok((loss, total))
}

/// Diagonal Fisher estimate: the elementwise square of each sequence's
/// prediction-loss gradient (no L2 term), averaged over the dataset.
pub fn estimate_fim(theta: &ParamVector, data: &Dataset) -> Result<ParamVector> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("estimate_fim"));
    }
    let parts: Vec<ParamVector> = data
        .sequences
        .par_iter()
        .map(|seq| tbptt_gradient(theta, seq, 0.0).map(|(_, g)| g))
        .collect::<Result<Vec<_>>>()?;
    let mut fim = ParamVector::zeros(*theta.cfg());
    let scale = 1.0 / parts.len() as f64;
    let out = fim.data_mut();
    for g in &parts {
        for (o, v) in out.iter_mut().zip(g.data()) {
            *o += v * v * scale;
        }
    }
    Ok(fim)
}

/// Adaptive moment estimation with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct OptState {
    pub learning_rate: f64,
    /// Decoupled L2 weight applied directly in the update.
    pub l2: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    pub fn new(param_count: usize, learning_rate: f64, l2: f64) -> OptState {
        OptState {
            learning_rate,
            l2,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn apply(&mut self, theta: &mut ParamVector, grad: &ParamVector) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let lr = self.learning_rate;
        let wd = self.l2;
        let data = theta.data_mut();
        for j in 0..data.len() {
            let g = grad.data()[j];
            self.m[j] = BETA1 * self.m[j] + (1.0 - BETA1) * g;
            self.v[j] = BETA2 * self.v[j] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            data[j] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + wd * data[j]);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Anchor penalty weight; ignored when no anchors are passed.
    pub lambda_ewc: f64,
    /// L2 weight used for the reported loss; the update itself applies it
    /// decoupled through `OptState`.
    pub lambda_l2: f64,
}

/// Per-epoch training record, written to the CSV sink by callers.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub pred: f64,
    pub ewc: f64,
}

/// Train for `opts.epochs` epochs of shuffled minibatches. Per batch the loss
/// is `mean pred_loss + lambda_l2 |theta|^2 + ewc_loss`; passing no anchors
/// turns the run into plain descent on the prediction objective.
pub fn train(
    theta: &ParamVector,
    data: &Dataset,
    anchors: &[TaskAnchor],
    opt: &mut OptState,
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamVector, Vec<EpochStats>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("train"));
    }
    let mut theta = theta.clone();
    let mut stats = Vec::with_capacity(opts.epochs);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let batch_size = opts.batch_size.max(1);

    for epoch in 0..opts.epochs {
        indices.shuffle(rng);
        let mut epoch_total = 0.0;
        let mut epoch_pred = 0.0;
        let mut epoch_ewc = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(batch_size) {
            let batch: Vec<&crate::dataset::ExampleSequence> =
                chunk.iter().map(|&i| &data.sequences[i]).collect();
            let (pred, mut grad) = batch_gradient(&theta, &batch)?;
            let (ewc, ewc_grad) = ewc_loss(&theta, anchors, opts.lambda_ewc);
            if ewc != 0.0 {
                grad.axpy(&ewc_grad, 1.0);
            }
            let total = pred + opts.lambda_l2 * theta.norm_sq() + ewc;
            if !total.is_finite() || total > 1e6 {
                return Err(Error::Divergence {
                    epoch,
                    batch: batches,
                    loss: total,
                });
            }
            opt.apply(&mut theta, &grad);
            epoch_total += total;
            epoch_pred += pred;
            epoch_ewc += ewc;
            batches += 1;
        }
        let n = batches as f64;
        stats.push(EpochStats {
            epoch,
            total: epoch_total / n,
            pred: epoch_pred / n,
            ewc: epoch_ewc / n,
        });
    }
    Ok((theta, stats))
}

pub fn write_epoch_csv(path: &Path, task: &str, stats: &[EpochStats], append: bool) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .open(path)?;
    let needs_header = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    if needs_header {
        w.write_record(["task", "epoch", "total", "pred", "ewc"])
            .map_err(|e| Error::format("train log", e.to_string()))?;
    }
    for s in stats {
        w.write_record([
            task.to_string(),
            s.epoch.to_string(),
            s.total.to_string(),
            s.pred.to_string(),
            s.ewc.to_string(),
        ])
        .map_err(|e| Error::format("train log", e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

const ANCHORS_MAGIC: &[u8; 4] = b"PCAN";
const ANCHORS_VERSION: u16 = 1;

pub fn save_anchors(path: &Path, anchors: &[TaskAnchor]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    binfmt::write_magic(&mut w, ANCHORS_MAGIC, ANCHORS_VERSION)?;
    binfmt::write_u32(&mut w, anchors.len() as u32)?;
    for a in anchors {
        binfmt::write_u32(&mut w, a.task_index as u32)?;
        checkpoint::write_params(&mut w, &a.theta)?;
        checkpoint::write_params(&mut w, &a.fisher)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_anchors(path: &Path) -> Result<Vec<TaskAnchor>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let version = binfmt::read_magic(&mut r, ANCHORS_MAGIC, "anchors")?;
    if version != ANCHORS_VERSION {
        return Err(Error::format("anchors", format!("unsupported version {version}")));
    }
    let count = binfmt::read_u32(&mut r)? as usize;
    let mut anchors = Vec::with_capacity(count);
    for _ in 0..count {
        let task_index = binfmt::read_u32(&mut r)? as usize;
        let theta = read_params_checked(&mut r)?;
        let fisher = read_params_checked(&mut r)?;
        anchors.push(TaskAnchor {
            task_index,
            theta,
            fisher,
        });
    }
    Ok(anchors)
}

fn read_params_checked(r: &mut impl Read) -> Result<ParamVector> {
    checkpoint::read_params(r)
}

/// Root-mean-square deviation between `theta` and the anchor, weighted by
/// the anchor's importance values.
pub fn fisher_weighted_rms(theta: &ParamVector, anchor: &TaskAnchor) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..theta.len() {
        let f = anchor.fisher.data()[j];
        let d = theta.data()[j] - anchor.theta.data()[j];
        num += f * d * d;
        den += f;
    }
    if den <= 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}
