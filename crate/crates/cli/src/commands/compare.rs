use hesslens::analysis::{count_outliers, layer_distance_table, OutlierReport};
use hesslens::hessops::{hessian_op, layer_hessian_op};
use hesslens::spectral::slq_density;
use hesslens::train::{select_layers, LayerSelection};
use hesslens::Result;
use serde::Serialize;

use super::{context, layer_tag, load};
use crate::cli::{CompareArgs, Metric};
use crate::manifest::OutDir;

#[derive(Serialize)]
struct LayerOutliers {
    layer: usize,
    name: String,
    report: OutlierReport,
}

#[derive(Serialize)]
struct Outliers {
    full: OutlierReport,
    layers: Vec<LayerOutliers>,
}

#[derive(Serialize)]
struct Summary {
    metric: Metric,
    layers: usize,
    argmin_wasserstein_layer: Option<usize>,
    argmin_js_layer: Option<usize>,
    /// Layer indices in `[floor(L/4), ceil(3L/4))`.
    middle_layers: Vec<usize>,
    normalization: String,
}

pub fn run(a: &CompareArgs) -> Result<()> {
    let mut out = OutDir::create(&a.out)?;
    let l = load(&a.ckpt, &a.data.data, &mut out)?;
    let ctx = context(&l, &a.data, a.seed)?;
    let cfg = a.slq.config(a.seed);
    let classes = l.ck.spec.classes;

    let full = slq_density(&hessian_op(&ctx), &cfg)?;
    full.write_csv(out.file("density_hessian_full.csv")?)?;
    let mut layers = vec![];
    let mut layer_outliers = vec![];
    for (k, seg) in l.ck.params.layers().iter().enumerate() {
        let d = slq_density(&layer_hessian_op(&ctx, k)?, &cfg)?;
        d.write_csv(out.file(&format!("density_hessian_{}.csv", layer_tag(&l.ck, k)))?)?;
        layer_outliers.push(LayerOutliers {
            layer: k,
            name: seg.name.clone(),
            report: count_outliers(&d, Some(classes)),
        });
        layers.push((k, seg.name.clone(), d));
    }
    let table = layer_distance_table(&layers, &full)?;

    let (w, j) = match a.metric {
        Metric::Wasserstein => (true, false),
        Metric::Js => (false, true),
        Metric::Both => (true, true),
    };
    let mut csv = String::from("layer,name,wasserstein,js\n");
    for r in &table.rows {
        let ws = if w {
            r.wasserstein.to_string()
        } else {
            String::new()
        };
        let js = if j { r.js.to_string() } else { String::new() };
        csv.push_str(&format!("{},{},{ws},{js}\n", r.layer, r.name));
    }
    out.write("distance_table.csv", csv)?;

    let full_outliers = count_outliers(&full, Some(classes));
    log::info!(
        "full Hessian: {} outliers (C = {classes}); wasserstein argmin layer {}",
        full_outliers.count,
        table.argmin_wasserstein_layer()
    );
    out.write_json(
        "outliers.json",
        &Outliers {
            full: full_outliers,
            layers: layer_outliers,
        },
    )?;
    let n = l.ck.params.num_layers();
    out.write_json(
        "summary.json",
        &Summary {
            metric: a.metric,
            layers: n,
            argmin_wasserstein_layer: w.then(|| table.argmin_wasserstein_layer()),
            argmin_js_layer: j.then(|| table.argmin_js_layer()),
            middle_layers: select_layers(n, &LayerSelection::Middle)?,
            normalization: table.normalization.clone(),
        },
    )?;
    out.finish("compare", a, a.seed)
}
