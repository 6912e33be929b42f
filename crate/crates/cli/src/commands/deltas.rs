use hesslens::analysis::{cluster_purity, extract_deltas};
use hesslens::hessops::CurvatureContext;
use hesslens::{Error, Result};

use super::{check_layer, load};
use crate::cli::{DeltasArgs, Scope};
use crate::manifest::OutDir;

pub fn run(a: &DeltasArgs) -> Result<()> {
    let layer = match a.scope {
        Scope::Full => None,
        Scope::Layer(k) => Some(k),
        Scope::Layers => return Err(Error::Config("deltas scope is full or layer:K".into())),
    };
    let mut out = OutDir::create(&a.out)?;
    let l = load(&a.ckpt, &a.data, &mut out)?;
    if let Some(k) = layer {
        check_layer(&l.ck, k)?;
    }
    let model = l.ck.model()?;
    let probe = l.data.split(a.split)?.probe_set(a.max_samples, a.seed);
    let ctx = CurvatureContext::new(model, l.ck.params.clone(), l.ck.bn_state.clone(), probe)?;
    let deltas = extract_deltas(&ctx, layer)?;
    deltas.write_csv(out.file("deltas.csv")?)?;
    let purity = cluster_purity(&deltas)?;
    log::info!("purity {} over {} samples", purity.purity, purity.samples);
    out.write_json("purity.json", &purity)?;
    out.finish("deltas", a, a.seed)
}
