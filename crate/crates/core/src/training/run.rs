//! Minibatch training loops.

use std::path::Path;
use std::time::Instant;

use ndgraph::Gradients;
use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::gridworld::filters_from_weights;
use crate::gridworld::frobenius_reg;
use crate::mixture::{dropout_mask, loss_weights, NllMode};
use crate::recurrent::PREFIX as RMDN_PREFIX;
use crate::scenariolab::{substream, Sample};

use super::pipeline::{ModelBundle, Pipeline, FILTER_WEIGHTS};
use super::{clip_gradients, compound_loss, Adam, EpochRecord, TrainConfig, TrainMode, TrainReport};

pub const REPORT_FILE: &str = "report.csv";
pub const EPOCH_FILE_PREFIX: &str = "epoch_";

const STREAM_TRAIN: u64 = 2;

fn current_reg(bundle: &ModelBundle) -> Result<f64> {
    let w = bundle
        .params
        .get(FILTER_WEIGHTS)
        .ok_or_else(|| invalid("model has no transition filters"))?;
    Ok(frobenius_reg(&filters_from_weights(w.clone())?))
}

fn is_trainable(mode: TrainMode, name: &str) -> bool {
    match mode {
        TrainMode::Dest => name.starts_with(RMDN_PREFIX),
        TrainMode::Planner => !name.starts_with(RMDN_PREFIX),
        TrainMode::Joint => true,
    }
}

/// Trains `bundle` in place under `cfg.mode`.
///
/// When `out` is given, parameters after every epoch go to
/// `out/epoch_NNN.ckpt` and the report so far to `out/report.csv`.
pub fn train(samples: &[Sample], bundle: &mut ModelBundle, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    bundle.cfg.validate()?;
    if samples.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let dest = Pipeline::destination(&bundle.cfg)?;
    let joint = if cfg.mode == TrainMode::Dest {
        None
    } else {
        Some(Pipeline::joint(&bundle.cfg)?)
    };
    let n_comp = bundle.cfg.rmdn.components;
    let mut rng = substream(cfg.seed, STREAM_TRAIN);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut report = TrainReport::default();
    let mut last_finite = 0;

    for epoch in 1..=cfg.epochs {
        let clock = Instant::now();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let (mut dest_sum, mut pred_sum, mut reg_sum) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len() as f64;
            // One pattern per batch, so the batch minimum can move to an
            // example served by the surviving components.
            let keep = dropout_mask(n_comp, cfg.dropout, &mut rng)?;
            let keeps = vec![keep; batch.len()];
            let mut grads = Gradients::default();
            let mut reg_batch = 0.0;
            // Min mode needs every destination loss before any gradient.
            let weights = match (cfg.nll_mode, &joint) {
                (NllMode::Min, Some(_)) => {
                    let losses = batch
                        .iter()
                        .zip(&keeps)
                        .map(|(k, keep)| {
                            let v = dest.graph.forward(&bundle.params, &dest.inputs(&samples[*k], Some(keep))?)?;
                            Ok(v.scalar(dest.nodes.dest_nll))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Some(loss_weights(&losses, NllMode::Min)?)
                }
                _ => None,
            };
            match &joint {
                None => {
                    let mut values = Vec::with_capacity(batch.len());
                    let mut losses = Vec::with_capacity(batch.len());
                    for (k, keep) in batch.iter().zip(&keeps) {
                        let v = dest.graph.forward(&bundle.params, &dest.inputs(&samples[*k], Some(keep))?)?;
                        losses.push(v.scalar(dest.nodes.dest_nll));
                        values.push(v);
                    }
                    let lw = loss_weights(&losses, cfg.nll_mode)?;
                    for (v, w) in values.iter().zip(&lw) {
                        let seed = cfg.w_dest * w;
                        if seed != 0.0 {
                            grads.accumulate(&dest.graph.backward_seeded(v, &[(dest.nodes.dest_nll, seed)])?, 1.0);
                        }
                    }
                    dest_sum += losses.iter().sum::<f64>();
                    reg_batch = current_reg(bundle)?;
                }
                Some(p) => {
                    let nodes = p.nodes.planner.as_ref().expect("joint pipeline");
                    for (slot, (k, keep)) in batch.iter().zip(&keeps).enumerate() {
                        let v = p.graph.forward(&bundle.params, &p.inputs(&samples[*k], Some(keep))?)?;
                        let d = v.scalar(p.nodes.dest_nll);
                        dest_sum += d;
                        pred_sum += v.scalar(nodes.pred_nll);
                        reg_batch = v.scalar(nodes.reg);
                        let wd = match &weights {
                            Some(w) => w[slot],
                            None => 1.0 / b,
                        };
                        let dest_seed = if cfg.mode == TrainMode::Joint { cfg.w_dest * wd } else { 0.0 };
                        let seeds: Vec<_> = [
                            (p.nodes.dest_nll, dest_seed),
                            (nodes.pred_nll, cfg.w_pred / b),
                            (nodes.reg, cfg.w_reg / b),
                        ]
                        .into_iter()
                        .filter(|s| s.1 != 0.0)
                        .collect();
                        if !seeds.is_empty() {
                            grads.accumulate(&p.graph.backward_seeded(&v, &seeds)?, 1.0);
                        }
                    }
                }
            }
            reg_sum += reg_batch;
            batches += 1;
            if cfg.grad_clip > 0.0 {
                clip_gradients(&mut grads, cfg.grad_clip);
            }
            let mode = cfg.mode;
            adam.step(&mut bundle.params, &grads, |name| is_trainable(mode, name))?;
        }
        let n = samples.len() as f64;
        let (dest_nll, pred_nll, reg) = (dest_sum / n, pred_sum / n, reg_sum / batches as f64);
        let total = compound_loss(dest_nll, pred_nll, reg, &cfg.weights());
        report.epochs.push(EpochRecord {
            epoch,
            dest_nll,
            pred_nll,
            reg,
            total,
            seconds: clock.elapsed().as_secs_f64(),
        });
        let finite = total.is_finite() && bundle.params.iter().all(|(_, t)| t.all_finite());
        if let Some(dir) = out {
            report.write_csv(dir.join(REPORT_FILE))?;
            if finite {
                bundle.params.save(dir.join(format!("{EPOCH_FILE_PREFIX}{epoch:03}.ckpt")))?;
            }
        }
        if !finite {
            return Err(Error::Diverged { epoch, last_finite });
        }
        last_finite = epoch;
    }
    Ok(report)
}

/// [`train`] restricted to the destination network and its loss.
pub fn train_destination(samples: &[Sample], bundle: &mut ModelBundle, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainReport> {
    let cfg = TrainConfig {
        mode: TrainMode::Dest,
        ..cfg.clone()
    };
    train(samples, bundle, &cfg, out)
}
