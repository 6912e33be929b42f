use std::path::PathBuf;

use hesslens::hessops::{hessian_op, layer_hessian_op};
use hesslens::spectral::{hutchinson_trace, TraceEstimate};
use hesslens::train::load_checkpoint;
use hesslens::{Error, Result};
use serde::Serialize;

use super::{context, Loaded};
use crate::cli::{Scope, TraceArgs};
use crate::inputs::hash_file;
use crate::manifest::OutDir;

#[derive(Serialize)]
struct Row {
    checkpoint: String,
    epoch: u64,
    full: TraceEstimate,
    layers: Vec<(String, TraceEstimate)>,
}

fn checkpoints(a: &TraceArgs) -> Result<Vec<PathBuf>> {
    if let Some(p) = &a.ckpt {
        return Ok(vec![p.clone()]);
    }
    let dir = a.ckpt_dir.as_ref().expect("clap requires one source");
    let mut found: Vec<(u64, PathBuf)> = vec![];
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "hlns") {
            found.push((load_checkpoint(&p)?.epoch, p));
        }
    }
    if found.is_empty() {
        return Err(Error::Config(format!(
            "no .hlns checkpoints in {}",
            dir.display()
        )));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn run(a: &TraceArgs) -> Result<()> {
    let per_layer = match a.scope {
        Scope::Full => false,
        Scope::Layers => true,
        Scope::Layer(_) => return Err(Error::Config("trace scope is full or layers".into())),
    };
    let paths = checkpoints(a)?;
    let mut out = OutDir::create(&a.out)?;
    let mut data = a.data.data.load()?;
    out.record_inputs(data.hashes.clone());

    let mut rows = vec![];
    let mut names: Vec<String> = vec![];
    for p in &paths {
        out.record_inputs([(p.display().to_string(), hash_file(p)?)]);
        let l = Loaded {
            ck: load_checkpoint(p)?,
            data,
        };
        let ctx = context(&l, &a.data, a.seed)?;
        let full = hutchinson_trace(&hessian_op(&ctx), a.probes, a.dist, a.seed)?;
        let mut layers = vec![];
        if per_layer {
            for (k, seg) in l.ck.params.layers().iter().enumerate() {
                let t = hutchinson_trace(&layer_hessian_op(&ctx, k)?, a.probes, a.dist, a.seed)?;
                layers.push((seg.name.clone(), t));
            }
            let these: Vec<String> = layers.iter().map(|(n, _)| n.clone()).collect();
            if !names.is_empty() && names != these {
                return Err(Error::Config(
                    "checkpoints in the directory have different layers".into(),
                ));
            }
            names = these;
        }
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        log::info!("{name}: trace {} +- {}", full.mean, full.stderr);
        rows.push(Row {
            checkpoint: name,
            epoch: l.ck.epoch,
            full,
            layers,
        });
        // hand the data back for the next checkpoint
        let Loaded { data: d, .. } = l;
        data = d;
    }

    let mut csv = String::from("checkpoint,epoch,trace_full,stderr_full");
    for n in &names {
        csv.push_str(&format!(",trace_{n},stderr_{n}"));
    }
    if per_layer {
        csv.push_str(",trace_layer_sum");
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}",
            r.checkpoint, r.epoch, r.full.mean, r.full.stderr
        ));
        for (_, t) in &r.layers {
            csv.push_str(&format!(",{},{}", t.mean, t.stderr));
        }
        if per_layer {
            csv.push_str(&format!(
                ",{}",
                r.layers.iter().map(|(_, t)| t.mean).sum::<f64>()
            ));
        }
        csv.push('\n');
    }
    let name = if a.ckpt_dir.is_some() {
        "trace_evolution"
    } else {
        "trace"
    };
    out.write(&format!("{name}.csv"), csv)?;
    out.write_json(&format!("{name}.json"), &rows)?;
    out.finish("trace", a, a.seed)
}
