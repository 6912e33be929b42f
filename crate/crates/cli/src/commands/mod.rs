mod compare;
mod deltas;
mod oracle;
mod spectrum;
mod trace;
mod train;

use std::path::Path;
use std::sync::Arc;

use hesslens::hessops::{
    gauss_newton_op, h_residual_op, hessian_op, layer_hessian_op, CurvatureContext,
    CurvatureOperator,
};
use hesslens::train::{load_checkpoint, Checkpoint};
use hesslens::{Error, Result};

use crate::cli::{Command, DataArgs, OperatorArg};
use crate::inputs::{hash_file, LoadedData};
use crate::manifest::OutDir;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train::run(&a),
        Command::Spectrum(a) => spectrum::run(&a),
        Command::Trace(a) => trace::run(&a),
        Command::Compare(a) => compare::run(&a),
        Command::Deltas(a) => deltas::run(&a),
        Command::Oracle(a) => oracle::run(&a),
    }
}

/// A checkpoint and data loaded for analysis, with hashes recorded in `out`.
pub(crate) struct Loaded {
    pub ck: Checkpoint,
    pub data: LoadedData,
}

pub(crate) fn load(
    ckpt: &Path,
    data: &crate::inputs::DataSource,
    out: &mut OutDir,
) -> Result<Loaded> {
    let ck = load_checkpoint(ckpt)?;
    let data = data.load()?;
    out.record_inputs([(ckpt.display().to_string(), hash_file(ckpt)?)]);
    out.record_inputs(data.hashes.clone());
    Ok(Loaded { ck, data })
}

/// Curvature context over the probe set of the requested split.
pub(crate) fn context(l: &Loaded, args: &DataArgs, seed: u64) -> Result<Arc<CurvatureContext>> {
    let model = l.ck.model()?;
    let ds = l.data.split(args.split)?;
    if ds.features() != model.spec().input_features() {
        return Err(Error::Shape(format!(
            "checkpoint model {} expects {} input features, data has {}",
            model.spec(),
            model.spec().input_features(),
            ds.features()
        )));
    }
    let probe = ds.probe_set(args.probe_samples, seed);
    CurvatureContext::new(model, l.ck.params.clone(), l.ck.bn_state.clone(), probe)
}

pub(crate) fn operator(
    ctx: &Arc<CurvatureContext>,
    op: OperatorArg,
    layer: Option<usize>,
) -> Result<CurvatureOperator> {
    match (op, layer) {
        (OperatorArg::Hessian, None) => Ok(hessian_op(ctx)),
        (OperatorArg::Hessian, Some(l)) => layer_hessian_op(ctx, l),
        (OperatorArg::G, l) => gauss_newton_op(ctx, l),
        (OperatorArg::H, l) => h_residual_op(
            &operator(ctx, OperatorArg::Hessian, l)?,
            &operator(ctx, OperatorArg::G, l)?,
        ),
    }
}

pub(crate) fn check_layer(ck: &Checkpoint, l: usize) -> Result<()> {
    if l >= ck.params.num_layers() {
        return Err(Error::Config(format!(
            "layer {l} out of range: the model has {} layers",
            ck.params.num_layers()
        )));
    }
    Ok(())
}

/// `layer{K}_{name}` for file names.
pub(crate) fn layer_tag(ck: &Checkpoint, l: usize) -> String {
    format!("layer{l}_{}", ck.params.layers()[l].name)
}
