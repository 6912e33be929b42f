//! Momentum SGD with optional layerwise Hessian trace regularization,
//! per-epoch curvature logging and checkpoints.
//!
//! The update path is single-threaded and every random stream is derived
//! from the configured seed, so two runs with equal configs produce
//! bit-identical parameters and logs (wall-clock aside). Runs that differ
//! only in the regularizer share initialization and data order.

pub mod checkpoint;
pub mod config;
pub mod htr;
pub mod runlog;
pub mod sgd;

use std::sync::Arc;
use std::time::Instant;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint};
pub use config::{select_layers, LayerSelection, MetricConfig, TrainConfig};
pub use htr::{htr_penalty_gradient, layer_probes, trace_penalty_gradient};
pub use runlog::{CurvatureMetrics, EpochRecord, RunLog};
pub use sgd::sgd_step;

use crate::data::{batches, BatchPlan, Dataset};
use crate::diff::forward_loss;
use crate::error::{Error, Result};
use crate::hessops::{hessian_op, layer_hessian_op, CurvatureContext};
use crate::models::{BnMode, BnState, Model, ModelSpec};
use crate::params::ParamVector;
use crate::rng::derive_seed;
use crate::spectral::{hutchinson_trace, lambda_max, EigenMode};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

const STREAM_INIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const STREAM_HTR: u64 = 3;
const STREAM_METRICS: u64 = 4;
const STREAM_PROBE_SET: u64 = 5;

/// Mean cross-entropy and accuracy with running batch-norm statistics.
pub fn evaluate(
    model: &Model,
    params: &ParamVector,
    bn: &BnState,
    data: &Dataset,
) -> Result<(f64, f64)> {
    const CHUNK: usize = 1024;
    let c = model.classes();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(data.len())).collect();
        let part = data.subset(&idx);
        let z = model.logits(params, part.inputs(), BnMode::Eval(bn))?;
        for (row, &y) in z.data().chunks(c).zip(part.labels()) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            let arg = row
                .iter()
                .enumerate()
                .fold(0, |best, (k, v)| if *v > row[best] { k } else { best });
            correct += usize::from(arg == y);
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Largest Hessian eigenvalue and Hutchinson trace for the full network
/// and, if requested, every layer block.
pub fn curvature_metrics(
    ctx: &Arc<CurvatureContext>,
    cfg: &MetricConfig,
    seed: u64,
) -> Result<(CurvatureMetrics, Vec<CurvatureMetrics>)> {
    let measure = |op: &crate::hessops::CurvatureOperator| -> Result<CurvatureMetrics> {
        let t = hutchinson_trace(op, cfg.trace_probes, cfg.distribution, seed)?;
        Ok(CurvatureMetrics {
            lambda_max: lambda_max(op, cfg.lanczos_iters, seed, EigenMode::Algebraic)?,
            trace: t.mean,
            trace_stderr: t.stderr,
        })
    };
    let full = measure(&hessian_op(ctx))?;
    let mut layers = Vec::new();
    if cfg.per_layer {
        for l in 0..ctx.params.num_layers() {
            layers.push(measure(&layer_hessian_op(ctx, l)?)?);
        }
    }
    Ok((full, layers))
}

/// Hooks called as training progresses; both default to no-ops.
pub trait Observer {
    fn epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _ck: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub log: RunLog,
    pub checkpoint: Checkpoint,
}

pub fn train(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    data: &Dataset,
    test: Option<&Dataset>,
) -> Result<TrainOutput> {
    train_with(cfg, spec, data, test, &mut ())
}

pub fn train_with(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    data: &Dataset,
    test: Option<&Dataset>,
    observer: &mut dyn Observer,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let model = Model::new(spec.clone())?;
    model.check_inputs(data.inputs())?;
    if data.classes() != model.classes() {
        return Err(Error::config(format!(
            "data has {} classes, model outputs {}",
            data.classes(),
            model.classes()
        )));
    }
    let selection = if cfg.htr_active() {
        select_layers(model.num_layers(), &cfg.htr_layers)?
    } else {
        vec![]
    };

    let mut params = model.init_params(derive_seed(cfg.seed, STREAM_INIT));
    let mut momentum = vec![0.0; params.dim()];
    let mut bn = model.initial_bn_state();
    let hash = cfg.hash();
    let probe_set = data.probe_set(
        cfg.metrics.probe_samples,
        derive_seed(cfg.seed, STREAM_PROBE_SET),
    );
    let metric_seed = derive_seed(cfg.seed, STREAM_METRICS);
    let htr_seed = derive_seed(cfg.seed, STREAM_HTR);

    let mut log = RunLog {
        layer_names: if cfg.metrics.enabled && cfg.metrics.per_layer {
            params.layers().iter().map(|s| s.name.clone()).collect()
        } else {
            vec![]
        },
        config_hash: hash.clone(),
        seed: cfg.seed,
        records: vec![],
    };

    let snapshot =
        |params: &ParamVector, momentum: &[f64], bn: &BnState, epoch: usize| Checkpoint {
            spec: spec.clone(),
            params: params.clone(),
            momentum: momentum.to_vec(),
            epoch: epoch as u64,
            seed: cfg.seed,
            bn_state: bn.clone(),
        };

    let record = |params: &ParamVector,
                  bn: &BnState,
                  epoch: usize,
                  htr_steps: usize,
                  train_s: f64,
                  started: Instant|
     -> Result<EpochRecord> {
        let (train_loss, train_acc) = evaluate(&model, params, bn, data)?;
        let (test_loss, test_acc) = match test {
            Some(t) => {
                let (l, a) = evaluate(&model, params, bn, t)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let (full, layers) = if cfg.metrics.enabled {
            let ctx = CurvatureContext::new(
                model.clone(),
                params.clone(),
                bn.clone(),
                probe_set.clone(),
            )?;
            let (f, l) = curvature_metrics(&ctx, &cfg.metrics, metric_seed)?;
            (Some(f), l)
        } else {
            (None, vec![])
        };
        Ok(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            full,
            layers,
            htr_steps,
            train_s,
            wall_clock_s: started.elapsed().as_secs_f64(),
            config_hash: hash.clone(),
            seed: cfg.seed,
        })
    };

    let r0 = record(&params, &bn, 0, 0, 0.0, Instant::now())?;
    observer.epoch(&r0)?;
    log.records.push(r0);
    if cfg.checkpoint_every > 0 {
        observer.checkpoint(&snapshot(&params, &momentum, &bn, 0))?;
    }

    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let plan = BatchPlan {
            batch_size: cfg.batch_size,
            seed: derive_seed(cfg.seed, STREAM_ORDER),
            epoch: epoch as u64,
        };
        let mut htr_steps = 0;
        for batch in batches(data, &plan)? {
            step += 1;
            let mut tape = forward_loss(&model, &params, &batch, BnMode::Train)?;
            let loss = tape.loss_value();
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                log::error!("diverged at step {step} (epoch {epoch}): loss {loss}");
                return Err(Error::Diverged { step, loss });
            }
            let mut grad = tape.gradient().into_values();
            bn.update(&tape.batch_stats);
            if cfg.htr_active() && step % cfg.htr_frequency == 0 {
                let pg = htr_penalty_gradient(
                    &model,
                    &params,
                    &batch,
                    &selection,
                    cfg.htr_probes,
                    derive_seed(htr_seed, step as u64),
                    BnMode::Train,
                )?;
                for (g, p) in grad.iter_mut().zip(pg.values()) {
                    *g += cfg.htr_gamma * p;
                }
                htr_steps += 1;
            }
            sgd_step(
                params.values_mut(),
                &grad,
                &mut momentum,
                cfg.lr,
                cfg.momentum,
                cfg.l2,
                step,
            )?;
        }
        let train_s = started.elapsed().as_secs_f64();
        let rec = record(&params, &bn, epoch, htr_steps, train_s, started)?;
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3}{}",
            rec.train_loss,
            rec.train_acc,
            rec.full
                .map(|m| format!(", trace {:.4}, lambda_max {:.4}", m.trace, m.lambda_max))
                .unwrap_or_default()
        );
        observer.epoch(&rec)?;
        log.records.push(rec);
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs {
            observer.checkpoint(&snapshot(&params, &momentum, &bn, epoch))?;
        }
    }
    let checkpoint = snapshot(&params, &momentum, &bn, cfg.epochs);
    observer.checkpoint(&checkpoint)?;
    Ok(TrainOutput { log, checkpoint })
}
