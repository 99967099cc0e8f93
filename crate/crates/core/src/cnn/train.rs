use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{CnnConfig, CnnModel, Params};
use crate::error::{Error, Result};
use crate::rng::{stage, RngStream};

/// A flattened single-channel image with a class label.
pub trait Labeled {
    fn pixels(&self) -> &[f64];
    fn label(&self) -> usize;
}

impl Labeled for (Vec<f64>, usize) {
    fn pixels(&self) -> &[f64] {
        &self.0
    }

    fn label(&self) -> usize {
        self.1
    }
}

impl<T: Labeled> Labeled for &T {
    fn pixels(&self) -> &[f64] {
        (**self).pixels()
    }

    fn label(&self) -> usize {
        (**self).label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: f64,
}

pub fn format_history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_error\n");
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_error).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub error_rate: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Mean loss and mean gradient over `batch`.
///
/// Per-sample gradients are summed in batch order and then divided by the
/// batch size. With `parallel` the per-sample work runs on the rayon pool but
/// the sum is still taken in batch order, so both paths agree bit for bit.
pub fn batch_loss_and_grads<S: Labeled + Sync>(model: &CnnModel, batch: &[S], parallel: bool) -> Result<(f64, Params)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch"));
    }
    let per_sample = |s: &S| model.loss_and_grads(s.pixels(), s.label());
    let results: Vec<Result<(f64, Params)>> = if parallel {
        batch.par_iter().map(per_sample).collect()
    } else {
        batch.iter().map(per_sample).collect()
    };
    let mut loss = 0.0;
    let mut acc: Option<Params> = None;
    for r in results {
        let (l, g) = r?;
        loss += l;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(a) => a.add_assign(&g),
        }
    }
    let mut grads = acc.unwrap();
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss * inv, grads))
}

/// `theta -= lr * grad` for every parameter.
pub fn sgd_step(model: &mut CnnModel, grads: &Params, lr: f64) -> Result<()> {
    for (name, (p, g)) in super::PARAM_NAMES.iter().zip(model.params.tensors_mut().into_iter().zip(grads.tensors())) {
        if p.shape != g.shape {
            return Err(Error::Shape { expected: format!("{name} {:?}", p.shape), actual: format!("{:?}", g.shape) });
        }
        for (x, d) in p.data.iter_mut().zip(&g.data) {
            *x -= lr * d;
        }
    }
    Ok(())
}

pub fn evaluate<S: Labeled + Sync>(model: &CnnModel, dataset: &[S]) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Empty("empty evaluation set"));
    }
    let classes = model.config.classes;
    let predictions: Vec<Result<usize>> = dataset.par_iter().map(|s| model.predict(s.pixels())).collect();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut wrong = 0usize;
    for (s, p) in dataset.iter().zip(predictions) {
        let p = p?;
        let y = s.label();
        if y >= classes {
            return Err(Error::InvalidParams(format!("label {y} outside {classes} classes")));
        }
        confusion[y][p] += 1;
        if p != y {
            wrong += 1;
        }
    }
    Ok(Evaluation { error_rate: wrong as f64 / dataset.len() as f64, confusion })
}

/// Mini-batch SGD with per-epoch reshuffling and early stopping.
///
/// The training set is shuffled each epoch from `cfg.seed`; the last partial
/// batch is kept. After each epoch the validation error is measured; when it
/// has not improved for `cfg.patience` epochs training stops. The returned
/// model carries the parameters of the best validation epoch (earliest on
/// ties).
pub fn train<S: Labeled + Sync>(
    mut model: CnnModel,
    train_set: &[S],
    val_set: &[S],
    cfg: &CnnConfig,
) -> Result<(CnnModel, Vec<HistoryRow>)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty"));
    }
    if let Some(bad) = train_set.iter().chain(val_set).map(Labeled::label).find(|&y| y >= model.config.classes) {
        return Err(Error::InvalidParams(format!("label {bad} outside {} classes", model.config.classes)));
    }
    let shuffle_root = RngStream::new(cfg.seed, stage::SHUFFLE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Params)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut shuffle_root.derive(epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&S> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = match batch_loss_and_grads(&model, &batch, cfg.data_parallel) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss(diag)) => {
                    return Err(Error::TrainingDiverged { history, diagnostics: format!("epoch {epoch}: {diag}") })
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss * chunk.len() as f64;
            sgd_step(&mut model, &grads, cfg.lr)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                history,
                diagnostics: format!("epoch {epoch}: train loss {train_loss}; {}", model.params.norms()),
            });
        }
        let val_error = evaluate(&model, val_set)?.error_rate;
        history.push(HistoryRow { epoch, train_loss, val_error });
        log::debug!("epoch {epoch}: train_loss {train_loss:.5} val_error {val_error:.4}");

        if best.as_ref().is_none_or(|(e, _)| val_error < *e) {
            best = Some((val_error, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}
