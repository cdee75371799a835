//! The epoch loop: shuffled mini-batches, cross-entropy, SGD, and a
//! per-epoch evaluation on both splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SkeletonSample;
use crate::error::{Error, Result};
use crate::layers::Model;
use crate::numcore::params::named_mut;
use crate::numcore::{argmax, softmax_cross_entropy, softmax_rows, Mode};
use crate::tensor::Tensor;

use super::{lr_at, sgd_step, TrainConfig, Velocity};

/// Samples per forward pass during evaluation.
pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Snapshot with the highest validation accuracy (earliest on ties).
    pub best: Model,
    pub best_epoch: usize,
    pub last: Model,
}

/// `epoch,lr,train_loss,train_acc,val_acc`, one row per record. Floats use
/// the shortest representation that round-trips.
pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,train_acc,val_acc\n");
    for r in records {
        out.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.train_acc, r.val_acc));
    }
    out
}

/// Softmax scores, `B×K`, with running batch-norm statistics.
pub fn evaluate(model: &Model, xs: &[Tensor]) -> Result<Tensor> {
    let k = model.config.num_classes;
    let mut data = Vec::with_capacity(xs.len() * k);
    for chunk in xs.chunks(EVAL_BATCH) {
        let f = model.forward(chunk, Mode::Eval)?;
        data.extend_from_slice(softmax_rows(&f.logits)?.data());
    }
    Tensor::new(&[xs.len(), k], data)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> f64 {
    let k = scores.shape()[1];
    if labels.is_empty() || k == 0 {
        return 0.0;
    }
    let hits = scores
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Copy with every parameter and statistic rounded to `f32`, exactly as
/// it would be after an archive round trip.
fn f32_snapshot(model: &Model) -> Model {
    let mut m = model.clone();
    let round = |t: &mut Tensor| t.data_mut().iter_mut().for_each(|x| *x = f64::from(*x as f32));
    for (_, t) in named_mut(&mut m.params) {
        round(t);
    }
    for (_, t) in m.state.named_mut() {
        round(t);
    }
    m
}

fn split(samples: &[SkeletonSample]) -> (Vec<Tensor>, Vec<usize>) {
    (samples.iter().map(|s| s.data.clone()).collect(), samples.iter().map(|s| s.label).collect())
}

/// Trains `model` in place. Accuracies are measured on the
/// `f32`-rounded snapshot that a checkpoint would store, so evaluating a
/// saved checkpoint reproduces them.
pub fn train_loop(
    model: &mut Model,
    train: &[SkeletonSample],
    val: &[SkeletonSample],
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::input("training and validation sets must be non-empty"));
    }
    let k = model.config.num_classes;
    if let Some(s) = train.iter().chain(val).find(|s| s.label >= k) {
        return Err(Error::input(format!("label {} outside {k} classes", s.label)));
    }
    let (train_x, train_y) = split(train);
    let (val_x, val_y) = split(val);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut velocity = Velocity::zeros(&model.params);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut last = None;
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<Tensor> = batch.iter().map(|&i| train_x[i].clone()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let pass = model.forward(&xs, Mode::Train)?;
            let (loss, dlogits) = softmax_cross_entropy(&pass.logits, &ys)?;
            let grads = model.backward(&pass.cache, &dlogits)?;
            if let Some(state) = pass.state {
                model.state = state;
            }
            sgd_step(&mut model.params, &grads, lr, cfg, &mut velocity)?;
            loss_sum += loss * batch.len() as f64;
        }
        let snapshot = f32_snapshot(model);
        let train_acc = accuracy(&evaluate(&snapshot, &train_x)?, &train_y);
        let val_acc = accuracy(&evaluate(&snapshot, &val_x)?, &val_y);
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_acc,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.5} loss {:.4} train {train_acc:.3} val {val_acc:.3}",
            record.train_loss
        );
        on_epoch(&record);
        records.push(record);
        if best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, snapshot.clone()));
        }
        last = Some(snapshot);
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        records,
        best,
        best_epoch,
        last: last.expect("at least one epoch"),
    })
}
