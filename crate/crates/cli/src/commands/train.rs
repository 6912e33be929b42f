use hesslens::train::{
    save_checkpoint, train_with, Checkpoint, EpochRecord, MetricConfig, Observer, RunLog,
    TrainConfig,
};
use hesslens::Result;

use crate::cli::TrainArgs;
use crate::manifest::OutDir;

/// Rewrites the run log after every epoch so a divergent or interrupted
/// run still leaves its history behind.
struct Writer<'a> {
    out: &'a mut OutDir,
    log: RunLog,
}

impl Observer for Writer<'_> {
    fn epoch(&mut self, record: &EpochRecord) -> Result<()> {
        self.log.records.push(record.clone());
        self.out.write("runlog.csv", self.log.to_csv())
    }

    fn checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let p = self
            .out
            .file(&format!("checkpoints/epoch_{:04}.hlns", ck.epoch))?;
        save_checkpoint(ck, p)
    }
}

pub fn run(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        lr: a.lr,
        momentum: a.momentum,
        l2: a.l2,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        htr_gamma: a.htr_gamma,
        htr_frequency: a.htr_freq,
        htr_layers: a.htr_layers.clone(),
        htr_probes: a.htr_probes,
        metrics: MetricConfig {
            enabled: !a.no_metrics,
            trace_probes: a.metric_probes,
            lanczos_iters: a.metric_lanczos,
            probe_samples: a.metric_samples,
            ..Default::default()
        },
        checkpoint_every: a.checkpoint_every,
    };
    cfg.validate()?;
    let data = a.data.load()?;
    let mut out = OutDir::create(&a.out)?;
    out.record_inputs(data.hashes.clone());

    let model = hesslens::models::Model::new(a.model.clone())?;
    let layer_names = if cfg.metrics.enabled && cfg.metrics.per_layer {
        model
            .registry()
            .layer_map()
            .into_iter()
            .map(|s| s.name)
            .collect()
    } else {
        vec![]
    };
    let mut w = Writer {
        out: &mut out,
        log: RunLog {
            layer_names,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            records: vec![],
        },
    };
    let result = train_with(&cfg, &a.model, &data.train, data.test.as_ref(), &mut w)?;
    save_checkpoint(&result.checkpoint, out.file("final.hlns")?)?;
    log::info!("wrote {}", a.out.display());
    out.finish("train", &(a, &cfg), a.seed)
}
