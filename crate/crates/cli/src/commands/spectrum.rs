use hesslens::spectral::{lambda_max, slq_density, EigenMode, SymmetricOperator};
use hesslens::Result;
use serde::Serialize;

use super::{check_layer, context, layer_tag, load, operator};
use crate::cli::{Scope, SpectrumArgs};
use crate::manifest::OutDir;

/// Largest eigenvalues use this many Lanczos iterations (capped by the dimension).
const LAMBDA_MAX_ITERS: usize = 32;

#[derive(Serialize)]
struct Entry {
    scope: String,
    layer: Option<usize>,
    name: String,
    dim: usize,
    file: String,
    lambda_max: f64,
    lambda_min_bracket: f64,
    lambda_max_bracket: f64,
    sigma: f64,
    half_width: f64,
    center: f64,
    probes: usize,
}

#[derive(Serialize)]
struct Index {
    operator: String,
    entries: Vec<Entry>,
}

pub fn run(a: &SpectrumArgs) -> Result<()> {
    let mut out = OutDir::create(&a.out)?;
    let l = load(&a.ckpt, &a.data.data, &mut out)?;
    let ctx = context(&l, &a.data, a.seed)?;
    let mut scopes: Vec<Option<usize>> = vec![];
    match a.scope {
        Scope::Full => scopes.push(None),
        Scope::Layers => {
            scopes.push(None);
            scopes.extend((0..l.ck.params.num_layers()).map(Some));
        }
        Scope::Layer(k) => {
            check_layer(&l.ck, k)?;
            scopes.push(Some(k));
        }
    }
    let cfg = a.slq.config(a.seed);
    let op_name = a.operator.as_str();
    let mut entries = vec![];
    for layer in scopes {
        let op = operator(&ctx, a.operator, layer)?;
        let density = slq_density(&op, &cfg)?;
        let lmax = lambda_max(&op, LAMBDA_MAX_ITERS, a.seed, EigenMode::Algebraic)?;
        let (scope, name) = match layer {
            None => ("full".to_string(), "full".to_string()),
            Some(k) => (layer_tag(&l.ck, k), l.ck.params.layers()[k].name.clone()),
        };
        let file = format!("density_{op_name}_{scope}.csv");
        density.write_csv(out.file(&file)?)?;
        log::info!("{scope}: lambda_max {lmax}");
        entries.push(Entry {
            scope: if layer.is_some() {
                "layer".into()
            } else {
                "full".into()
            },
            layer,
            name,
            dim: op.dim(),
            file,
            lambda_max: lmax,
            lambda_min_bracket: density.rescaling.lambda_min,
            lambda_max_bracket: density.rescaling.lambda_max,
            sigma: density.sigma,
            half_width: density.rescaling.half_width,
            center: density.rescaling.center,
            probes: density.probes,
        });
    }
    out.write_json(
        "spectrum.json",
        &Index {
            operator: op_name.into(),
            entries,
        },
    )?;
    out.finish("spectrum", a, a.seed)
}
