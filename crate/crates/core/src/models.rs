//! Desk-scale model zoo: MLPs (optionally with residual blocks) and a
//! LeNet-style CNN, each with optional batch normalization.
//!
//! Weights are stored in the flat [`ParamVector`] in `[out, in]` order for
//! linear layers and `[out, in * k * k]` for convolutions. Convolutions run as
//! im2col gathers followed by a matrix product, with feature maps laid out as
//! `[N * H * W, channels]` so batch normalization over channels is the same
//! row reduction as for dense features.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{LayerSegment, ParamVector};
use crate::rng;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Mlp,
    MlpSkip,
    Lenet,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::MlpSkip => "mlp-skip",
            Architecture::Lenet => "lenet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// `[features]` for MLPs, `[channels, height, width]` for LeNet.
    pub input: Vec<usize>,
    /// Convolution output channels (LeNet only).
    #[serde(default)]
    pub conv_channels: Vec<usize>,
    /// Square convolution kernel size (LeNet only).
    #[serde(default)]
    pub kernel: usize,
    /// Hidden fully-connected widths.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub batch_norm: bool,
}

impl ModelSpec {
    /// MLP from the full width list `[input, hidden.., classes]`.
    pub fn mlp(widths: &[usize]) -> Self {
        Self::dense(Architecture::Mlp, widths)
    }

    pub fn mlp_skip(widths: &[usize]) -> Self {
        Self::dense(Architecture::MlpSkip, widths)
    }

    fn dense(arch: Architecture, widths: &[usize]) -> Self {
        let n = widths.len();
        ModelSpec {
            arch,
            input: widths.first().copied().into_iter().collect(),
            conv_channels: vec![],
            kernel: 0,
            hidden: if n >= 2 {
                widths[1..n - 1].to_vec()
            } else {
                vec![]
            },
            classes: if n >= 2 { widths[n - 1] } else { 0 },
            batch_norm: false,
        }
    }

    pub fn lenet(
        image: [usize; 3],
        conv_channels: &[usize],
        kernel: usize,
        hidden: &[usize],
        classes: usize,
    ) -> Self {
        ModelSpec {
            arch: Architecture::Lenet,
            input: image.to_vec(),
            conv_channels: conv_channels.to_vec(),
            kernel,
            hidden: hidden.to_vec(),
            classes,
            batch_norm: false,
        }
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }

    /// Flattened input width expected by `forward`.
    pub fn input_features(&self) -> usize {
        self.input.iter().product()
    }
}

/// Compact textual form used by the CLI, e.g. `mlp:16-32-32-3`,
/// `mlp-skip+bn:16-32-32-32-3` or `lenet:1x28x28:6-16:120-84:10` (optional
/// trailing `:k5` kernel, default 5).
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("cannot parse model spec '{s}'"));
        let mut parts = s.split(':');
        let head = parts.next().ok_or_else(bad)?;
        let (arch, bn) = match head.strip_suffix("+bn") {
            Some(a) => (a, true),
            None => (head, false),
        };
        let list = |p: Option<&str>, sep: char| -> Result<Vec<usize>> {
            let p = p.ok_or_else(bad)?;
            if p.is_empty() {
                return Ok(vec![]);
            }
            p.split(sep)
                .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
                .collect()
        };
        let spec = match arch {
            "mlp" | "mlp-skip" => {
                let widths = list(parts.next(), '-')?;
                if widths.len() < 2 {
                    return Err(bad());
                }
                if arch == "mlp" {
                    ModelSpec::mlp(&widths)
                } else {
                    ModelSpec::mlp_skip(&widths)
                }
            }
            "lenet" => {
                let image = list(parts.next(), 'x')?;
                let convs = list(parts.next(), '-')?;
                let hidden = list(parts.next(), '-')?;
                let classes = list(parts.next(), '-')?;
                let kernel = match parts.next() {
                    Some(k) => k
                        .strip_prefix('k')
                        .and_then(|k| k.parse().ok())
                        .ok_or_else(bad)?,
                    None => 5,
                };
                if image.len() != 3 || classes.len() != 1 {
                    return Err(bad());
                }
                ModelSpec::lenet(
                    [image[0], image[1], image[2]],
                    &convs,
                    kernel,
                    &hidden,
                    classes[0],
                )
            }
            _ => {
                return Err(Error::config(format!(
                    "unknown model architecture '{arch}'"
                )))
            }
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(spec.with_batch_norm(bn))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize], sep: &str| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(sep)
        };
        let bn = if self.batch_norm { "+bn" } else { "" };
        match self.arch {
            Architecture::Mlp | Architecture::MlpSkip => {
                let mut w = self.input.clone();
                w.extend(&self.hidden);
                w.push(self.classes);
                write!(f, "{}{bn}:{}", self.arch.as_str(), join(&w, "-"))
            }
            Architecture::Lenet => write!(
                f,
                "lenet{bn}:{}:{}:{}:{}:k{}",
                join(&self.input, "x"),
                join(&self.conv_channels, "-"),
                join(&self.hidden, "-"),
                self.classes,
                self.kernel
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        /// Input spatial size `(h, w)`.
        input_hw: (usize, usize),
    },
    /// Scale and shift for `features` channels; `attached_to` is the registry
    /// index of the layer it normalizes.
    BatchNorm {
        features: usize,
        attached_to: usize,
    },
}

impl LayerKind {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerKind::Linear { inputs, outputs } => inputs * outputs + outputs,
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerKind::BatchNorm { features, .. } => 2 * features,
        }
    }

    fn weight_count(&self) -> usize {
        match *self {
            LayerKind::Linear { inputs, outputs } => inputs * outputs,
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel,
            LayerKind::BatchNorm { features, .. } => features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
    pub offset: usize,
    pub len: usize,
    pub trainable: bool,
}

/// Ordered layer descriptors in forward execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRegistry {
    layers: Vec<LayerDesc>,
}

impl LayerRegistry {
    pub fn layers(&self) -> &[LayerDesc] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.offset + l.len)
    }

    pub fn layer_map(&self) -> Vec<LayerSegment> {
        self.layers
            .iter()
            .map(|l| LayerSegment {
                name: l.name.clone(),
                offset: l.offset,
                len: l.len,
            })
            .collect()
    }

    fn push(&mut self, name: String, kind: LayerKind) -> usize {
        let offset = self.dim();
        let len = kind.param_count();
        self.layers.push(LayerDesc {
            name,
            kind,
            offset,
            len,
            trainable: true,
        });
        self.layers.len() - 1
    }
}

/// Running batch-norm statistics, one entry per batch-norm layer in
/// registry order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BnState {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl BnState {
    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Exponential update with the momentum convention of PyTorch:
    /// `running = (1 - m) running + m batch`, unbiased batch variance.
    pub fn update(&mut self, stats: &[BatchStats]) {
        for (i, s) in stats.iter().enumerate() {
            let n = s.count as f64;
            let unbias = if s.count > 1 { n / (n - 1.0) } else { 1.0 };
            for (r, &m) in self.mean[i].iter_mut().zip(&s.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            for (r, &v) in self.var[i].iter_mut().zip(&s.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.mean
            .iter()
            .chain(&self.var)
            .flatten()
            .copied()
            .collect()
    }
}

/// Biased per-feature batch statistics observed in a training-mode forward.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with running statistics.
    Eval(&'a BnState),
}

/// A built model: its spec and layer registry. Parameters live separately in
/// a [`ParamVector`] so snapshots can be shared read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    spec: ModelSpec,
    registry: LayerRegistry,
}

struct ConvGeom {
    out_hw: (usize, usize),
    pooled_hw: (usize, usize),
}

fn conv_geom(kind: &LayerKind) -> ConvGeom {
    let LayerKind::Conv {
        kernel, input_hw, ..
    } = *kind
    else {
        unreachable!("conv_geom on non-conv layer")
    };
    let out_hw = (input_hw.0 + 1 - kernel, input_hw.1 + 1 - kernel);
    ConvGeom {
        out_hw,
        pooled_hw: (out_hw.0 / 2, out_hw.1 / 2),
    }
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        validate_spec(&spec)?;
        let mut reg = LayerRegistry { layers: vec![] };
        let bn = spec.batch_norm;
        match spec.arch {
            Architecture::Mlp | Architecture::MlpSkip => {
                let mut prev = spec.input[0];
                for (i, &w) in spec.hidden.iter().enumerate() {
                    let idx = reg.push(
                        format!("fc{}", i + 1),
                        LayerKind::Linear {
                            inputs: prev,
                            outputs: w,
                        },
                    );
                    if bn {
                        reg.push(
                            format!("bn{}", i + 1),
                            LayerKind::BatchNorm {
                                features: w,
                                attached_to: idx,
                            },
                        );
                    }
                    prev = w;
                }
                reg.push(
                    format!("fc{}", spec.hidden.len() + 1),
                    LayerKind::Linear {
                        inputs: prev,
                        outputs: spec.classes,
                    },
                );
            }
            Architecture::Lenet => {
                let (mut ch, mut hw) = (spec.input[0], (spec.input[1], spec.input[2]));
                for (i, &c) in spec.conv_channels.iter().enumerate() {
                    let kind = LayerKind::Conv {
                        in_channels: ch,
                        out_channels: c,
                        kernel: spec.kernel,
                        input_hw: hw,
                    };
                    let geom = conv_geom(&kind);
                    let idx = reg.push(format!("conv{}", i + 1), kind);
                    if bn {
                        reg.push(
                            format!("bn_conv{}", i + 1),
                            LayerKind::BatchNorm {
                                features: c,
                                attached_to: idx,
                            },
                        );
                    }
                    ch = c;
                    hw = geom.pooled_hw;
                }
                let mut prev = ch * hw.0 * hw.1;
                for (i, &w) in spec.hidden.iter().enumerate() {
                    let idx = reg.push(
                        format!("fc{}", i + 1),
                        LayerKind::Linear {
                            inputs: prev,
                            outputs: w,
                        },
                    );
                    if bn {
                        reg.push(
                            format!("bn_fc{}", i + 1),
                            LayerKind::BatchNorm {
                                features: w,
                                attached_to: idx,
                            },
                        );
                    }
                    prev = w;
                }
                reg.push(
                    format!("fc{}", spec.hidden.len() + 1),
                    LayerKind::Linear {
                        inputs: prev,
                        outputs: spec.classes,
                    },
                );
            }
        }
        Ok(Model {
            spec,
            registry: reg,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn registry(&self) -> &LayerRegistry {
        &self.registry
    }

    pub fn dim(&self) -> usize {
        self.registry.dim()
    }

    pub fn num_layers(&self) -> usize {
        self.registry.len()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    /// Fresh running statistics (mean 0, variance 1).
    pub fn initial_bn_state(&self) -> BnState {
        let mut st = BnState::default();
        for l in &self.registry.layers {
            if let LayerKind::BatchNorm { features, .. } = l.kind {
                st.mean.push(vec![0.0; features]);
                st.var.push(vec![1.0; features]);
            }
        }
        st
    }

    /// Kaiming-uniform (fan-in, ReLU gain) weights, zero biases, unit
    /// batch-norm scale and zero shift.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = rng::seeded(seed);
        let mut values = vec![0.0; self.dim()];
        for l in &self.registry.layers {
            let seg = &mut values[l.offset..l.offset + l.len];
            let nw = l.kind.weight_count();
            match l.kind {
                LayerKind::Linear { inputs: fan_in, .. } => {
                    kaiming(&mut rng, &mut seg[..nw], fan_in)
                }
                LayerKind::Conv {
                    in_channels,
                    kernel,
                    ..
                } => kaiming(&mut rng, &mut seg[..nw], in_channels * kernel * kernel),
                LayerKind::BatchNorm { .. } => seg[..nw].fill(1.0),
            }
        }
        ParamVector::new(values, self.registry.layer_map()).expect("registry layout is a cover")
    }

    pub fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.dim() != self.dim() || params.layers() != self.registry.layer_map().as_slice() {
            return Err(Error::shape(format!(
                "parameter vector (D = {}, L = {}) does not match model (D = {}, L = {})",
                params.dim(),
                params.num_layers(),
                self.dim(),
                self.num_layers()
            )));
        }
        Ok(())
    }

    pub fn check_inputs(&self, inputs: &Tensor) -> Result<()> {
        let s = inputs.shape();
        if s.len() != 2 || s[1] != self.spec.input_features() || s[0] == 0 {
            return Err(Error::shape(format!(
                "inputs {s:?} do not match model input of {} features",
                self.spec.input_features()
            )));
        }
        Ok(())
    }

    /// Records the forward pass on `g` and returns the logits `[N, C]` plus
    /// the batch statistics of every batch-norm layer (empty in eval mode).
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        theta: Var,
        x: Var,
        bn: BnMode<'_>,
    ) -> (Var, Vec<BatchStats>) {
        let n = g.shape(x)[0];
        let mut stats = Vec::new();
        let mut bn_index = 0;
        let layers = &self.registry.layers;
        let mut li = 0;

        let mut next_bn =
            |g: &mut Graph, h: Var, li: &mut usize, stats: &mut Vec<BatchStats>| -> Var {
                if !self.spec.batch_norm {
                    return h;
                }
                let layer = &layers[*li];
                *li += 1;
                let out = batch_norm(g, theta, layer, h, bn, bn_index, stats);
                bn_index += 1;
                out
            };

        let mut h = x;
        if self.spec.arch == Architecture::Lenet {
            let mut layout = FeatureLayout::SampleMajor {
                channels: self.spec.input[0],
            };
            let mut ch = 0;
            let mut pooled = (0, 0);
            for _ in 0..self.spec.conv_channels.len() {
                let layer = &layers[li];
                li += 1;
                let LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    input_hw,
                } = layer.kind
                else {
                    unreachable!()
                };
                let geom = conv_geom(&layer.kind);
                let cols_idx = im2col_indices(n, in_channels, input_hw, kernel, layout);
                let rows = n * geom.out_hw.0 * geom.out_hw.1;
                let width = in_channels * kernel * kernel;
                let cols = g.gather(h, cols_idx, &[rows, width]);
                let (w, b) = weight_and_bias(g, theta, layer, out_channels, width);
                let wt = g.transpose(w);
                let z = g.matmul(cols, wt);
                let bb = g.broadcast_rows(b, rows);
                let z = g.add(z, bb);
                let z = next_bn(g, z, &mut li, &mut stats);
                let a = g.relu(z);
                let pool_idx = maxpool_indices(g.value(a).data(), n, geom.out_hw, out_channels);
                let prows = n * geom.pooled_hw.0 * geom.pooled_hw.1;
                h = g.gather(a, pool_idx, &[prows, out_channels]);
                layout = FeatureLayout::ChannelMinor;
                ch = out_channels;
                pooled = geom.pooled_hw;
            }
            if !self.spec.conv_channels.is_empty() {
                let idx = flatten_indices(n, ch, pooled);
                h = g.gather(h, idx, &[n, ch * pooled.0 * pooled.1]);
            }
        }

        let residual = self.spec.arch == Architecture::MlpSkip;
        for i in 0..self.spec.hidden.len() {
            let layer = &layers[li];
            li += 1;
            let z = linear(g, theta, layer, h);
            let z = next_bn(g, z, &mut li, &mut stats);
            let z = if residual && i > 0 && g.shape(z) == g.shape(h) {
                g.add(z, h)
            } else {
                z
            };
            h = g.relu(z);
        }
        let logits = linear(g, theta, &layers[li], h);
        (logits, stats)
    }

    /// Convenience: logits as a plain tensor.
    pub fn logits(&self, params: &ParamVector, inputs: &Tensor, bn: BnMode<'_>) -> Result<Tensor> {
        self.check_params(params)?;
        self.check_inputs(inputs)?;
        let mut g = Graph::new();
        let theta = g.constant(Tensor::vector(params.values().to_vec()));
        let x = g.constant(inputs.clone());
        let (z, _) = self.forward_graph(&mut g, theta, x, bn);
        Ok(g.value(z).clone())
    }
}

/// Builds the model and its initial parameters, deterministically in `seed`.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<(ParamVector, Model)> {
    let model = Model::new(spec.clone())?;
    Ok((model.init_params(seed), model))
}

fn validate_spec(spec: &ModelSpec) -> Result<()> {
    if spec.classes < 2 {
        return Err(Error::config(format!(
            "need at least 2 classes, got {}",
            spec.classes
        )));
    }
    if spec.hidden.contains(&0) || spec.conv_channels.contains(&0) {
        return Err(Error::config("layer widths must be positive"));
    }
    match spec.arch {
        Architecture::Mlp | Architecture::MlpSkip => {
            if spec.input.len() != 1 || spec.input[0] == 0 {
                return Err(Error::config(
                    "MLP input must be a single positive feature count",
                ));
            }
        }
        Architecture::Lenet => {
            if spec.input.len() != 3 || spec.input.contains(&0) {
                return Err(Error::config(
                    "LeNet input must be channels x height x width",
                ));
            }
            if spec.kernel == 0 {
                return Err(Error::config("kernel size must be positive"));
            }
            let mut hw = (spec.input[1], spec.input[2]);
            for _ in &spec.conv_channels {
                if hw.0 < spec.kernel || hw.1 < spec.kernel {
                    return Err(Error::config(format!(
                        "feature map {hw:?} smaller than kernel {}",
                        spec.kernel
                    )));
                }
                hw = ((hw.0 + 1 - spec.kernel) / 2, (hw.1 + 1 - spec.kernel) / 2);
                if hw.0 == 0 || hw.1 == 0 {
                    return Err(Error::config("pooling reduced a feature map to zero size"));
                }
            }
        }
    }
    Ok(())
}

fn kaiming(rng: &mut impl Rng, out: &mut [f64], fan_in: usize) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for w in out {
        *w = rng.random_range(-bound..bound);
    }
}

fn weight_and_bias(
    g: &mut Graph,
    theta: Var,
    layer: &LayerDesc,
    rows: usize,
    cols: usize,
) -> (Var, Var) {
    let w = g.slice(theta, layer.offset, rows * cols);
    let w = g.reshape(w, &[rows, cols]);
    let b = g.slice(theta, layer.offset + rows * cols, rows);
    (w, b)
}

fn linear(g: &mut Graph, theta: Var, layer: &LayerDesc, h: Var) -> Var {
    let LayerKind::Linear { inputs, outputs } = layer.kind else {
        unreachable!("linear() on {:?}", layer.kind)
    };
    let n = g.shape(h)[0];
    let (w, b) = weight_and_bias(g, theta, layer, outputs, inputs);
    let wt = g.transpose(w);
    let z = g.matmul(h, wt);
    let bb = g.broadcast_rows(b, n);
    g.add(z, bb)
}

fn batch_norm(
    g: &mut Graph,
    theta: Var,
    layer: &LayerDesc,
    h: Var,
    mode: BnMode<'_>,
    bn_index: usize,
    stats: &mut Vec<BatchStats>,
) -> Var {
    let LayerKind::BatchNorm { features, .. } = layer.kind else {
        unreachable!("batch_norm() on {:?}", layer.kind)
    };
    let n = g.shape(h)[0];
    let gamma = g.slice(theta, layer.offset, features);
    let beta = g.slice(theta, layer.offset + features, features);
    let normalized = match mode {
        BnMode::Train => {
            let s = g.sum_rows(h);
            let mean = g.scale(s, 1.0 / n as f64);
            let mb = g.broadcast_rows(mean, n);
            let centered = g.sub(h, mb);
            let sq = g.mul(centered, centered);
            let s = g.sum_rows(sq);
            let var = g.scale(s, 1.0 / n as f64);
            stats.push(BatchStats {
                mean: g.value(mean).data().to_vec(),
                var: g.value(var).data().to_vec(),
                count: n,
            });
            let ve = g.add_scalar(var, BN_EPS);
            let inv = g.powf(ve, -0.5);
            let ib = g.broadcast_rows(inv, n);
            g.mul(centered, ib)
        }
        BnMode::Eval(state) => {
            let mean = Tensor::vector(state.mean[bn_index].clone());
            let inv = Tensor::vector(
                state.var[bn_index]
                    .iter()
                    .map(|v| 1.0 / (v + BN_EPS).sqrt())
                    .collect(),
            );
            let mean = g.constant(mean.broadcast_rows(n));
            let inv = g.constant(inv.broadcast_rows(n));
            let centered = g.sub(h, mean);
            g.mul(centered, inv)
        }
    };
    let gb = g.broadcast_rows(gamma, n);
    let scaled = g.mul(normalized, gb);
    let bb = g.broadcast_rows(beta, n);
    g.add(scaled, bb)
}

#[derive(Clone, Copy)]
enum FeatureLayout {
    /// `[N, C * H * W]`, channel-major within a sample (raw image input).
    SampleMajor { channels: usize },
    /// `[N * H * W, C]`.
    ChannelMinor,
}

fn im2col_indices(
    n: usize,
    channels: usize,
    hw: (usize, usize),
    k: usize,
    layout: FeatureLayout,
) -> Arc<[usize]> {
    let (h, w) = hw;
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let at = |s: usize, c: usize, y: usize, x: usize| match layout {
        FeatureLayout::SampleMajor { channels } => s * channels * h * w + c * h * w + y * w + x,
        FeatureLayout::ChannelMinor => ((s * h + y) * w + x) * channels + c,
    };
    let mut idx = Vec::with_capacity(n * oh * ow * channels * k * k);
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            idx.push(at(s, c, oy + ky, ox + kx));
                        }
                    }
                }
            }
        }
    }
    idx.into()
}

/// 2x2 stride-2 max pooling over a `[N * H * W, C]` map; ties pick the first
/// element in row-major window order.
fn maxpool_indices(data: &[f64], n: usize, hw: (usize, usize), channels: usize) -> Arc<[usize]> {
    let (h, w) = hw;
    let (ph, pw) = (h / 2, w / 2);
    let at = |s: usize, y: usize, x: usize, c: usize| ((s * h + y) * w + x) * channels + c;
    let mut idx = Vec::with_capacity(n * ph * pw * channels);
    for s in 0..n {
        for py in 0..ph {
            for px in 0..pw {
                for c in 0..channels {
                    let mut best = at(s, 2 * py, 2 * px, c);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let cand = at(s, 2 * py + dy, 2 * px + dx, c);
                        if data[cand] > data[best] {
                            best = cand;
                        }
                    }
                    idx.push(best);
                }
            }
        }
    }
    idx.into()
}

/// `[N * H * W, C]` to `[N, C * H * W]` with channel-major order per sample.
fn flatten_indices(n: usize, channels: usize, hw: (usize, usize)) -> Arc<[usize]> {
    let (h, w) = hw;
    let mut idx = Vec::with_capacity(n * channels * h * w);
    for s in 0..n {
        for c in 0..channels {
            for y in 0..h {
                for x in 0..w {
                    idx.push(((s * h + y) * w + x) * channels + c);
                }
            }
        }
    }
    idx.into()
}
