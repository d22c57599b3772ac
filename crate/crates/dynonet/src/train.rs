use std::time::Instant;

use mutualfriends_autodiff::{AdaGrad, Gradients, ParamStore, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DynoError, Result};
use crate::model::{Example, Model};
use crate::net::Net;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub min_epochs: usize,
    /// Stop after this many epochs without dev improvement (once past `min_epochs`).
    pub patience: usize,
    pub max_epochs: usize,
    /// Examples per update.
    pub batch: usize,
    /// Worker threads for per-example gradients; 1 is fully deterministic
    /// and so is any other value (reduction order is fixed).
    pub jobs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            min_epochs: 10,
            patience: 5,
            max_epochs: 30,
            batch: 1,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Per-token loss accumulated while training this epoch.
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Splits items 8:1:1 into train, dev and test after a seeded shuffle.
pub fn split_811<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = items.len() / 10;
    let n_test = items.len() / 10;
    let n_train = items.len() - n_dev - n_test;
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    (
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_dev]),
        pick(&idx[n_train + n_dev..]),
    )
}

/// Gradient of the mean token loss of one example; returns (summed loss, tokens).
fn example_grad(net: &Net, store: &ParamStore, ex: &Example, grads: &mut Gradients) -> Result<(f64, usize)> {
    let mut t = Tape::new(store);
    let (loss, n) = net.example_loss(&mut t, ex)?;
    let Some(loss) = loss else { return Ok((0.0, 0)) };
    let total = t.value(loss).item();
    let mean = t.scale(loss, 1.0 / n as f64);
    t.backward(mean, grads)?;
    Ok((total, n))
}

fn batch_grad(net: &Net, store: &ParamStore, batch: &[Example], jobs: usize) -> Result<(Gradients, f64, usize)> {
    let mut grads = Gradients::zeros_like(store);
    let (mut total, mut count) = (0.0, 0);
    if jobs <= 1 || batch.len() == 1 {
        for ex in batch {
            let (l, n) = example_grad(net, store, ex, &mut grads)?;
            total += l;
            count += n;
        }
    } else {
        let parts: Vec<Result<(Gradients, f64, usize)>> = std::thread::scope(|scope| {
            let chunk = batch.len().div_ceil(jobs);
            let handles: Vec<_> = batch
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        let mut g = Gradients::zeros_like(store);
                        let (mut tl, mut tc) = (0.0, 0);
                        for ex in part {
                            let (l, n) = example_grad(net, store, ex, &mut g)?;
                            tl += l;
                            tc += n;
                        }
                        Ok((g, tl, tc))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for p in parts {
            let (g, l, n) = p?;
            grads.accumulate(&g);
            total += l;
            count += n;
        }
    }
    grads.scale(1.0 / batch.len() as f64);
    Ok((grads, total, count))
}

/// Stateful trainer: AdaGrad plus a shuffling RNG.
pub struct Trainer {
    pub options: TrainOptions,
    opt: AdaGrad,
    rng: ChaCha8Rng,
    clip_norm: f64,
}

impl Trainer {
    pub fn new(model: &Model, options: TrainOptions) -> Self {
        let cfg = model.config();
        Self {
            options,
            opt: AdaGrad::with_accumulator(cfg.lr, cfg.init_accumulator),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed),
            clip_norm: cfg.clip_norm,
        }
    }

    /// One pass over `examples` in shuffled order; returns the per-token training loss.
    pub fn epoch(&mut self, model: &mut Model, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(DynoError::EmptyCorpus);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut total, mut count) = (0.0, 0);
        for chunk in order.chunks(self.options.batch.max(1)) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (mut grads, l, n) = batch_grad(&model.net, &model.store, &batch, self.options.jobs)?;
            if self.clip_norm > 0.0 {
                grads.clip_global_norm(self.clip_norm);
            }
            self.opt.step(&mut model.store, &grads);
            total += l;
            count += n;
        }
        Ok(total / count.max(1) as f64)
    }
}

/// Trains with early stopping on dev loss; the best parameters are kept.
pub fn train(
    model: &mut Model,
    train: &[Example],
    dev: &[Example],
    options: TrainOptions,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(DynoError::EmptyCorpus);
    }
    let mut trainer = Trainer::new(model, options.clone());
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stopped_early = false;
    for epoch in 1..=options.max_epochs {
        let start = Instant::now();
        let train_loss = trainer.epoch(model, train)?;
        let dev_loss = if dev.is_empty() {
            None
        } else {
            Some(model.per_token_loss(dev)?)
        };
        let report = EpochReport {
            epoch,
            train_loss,
            dev_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        epochs.push(report);
        let score = dev_loss.unwrap_or(train_loss);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, epoch, model.store.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch >= options.min_epochs && epoch - best_epoch >= options.patience {
            stopped_early = epoch < options.max_epochs;
            break;
        }
    }
    let (_, best_epoch, store) = best.expect("at least one epoch");
    model.store = store;
    Ok(TrainReport {
        epochs,
        best_epoch,
        stopped_early,
    })
}
