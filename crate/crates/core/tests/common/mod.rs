#![allow(dead_code)]

use std::sync::Arc;

use hesslens::data::{make_blobs, BlobSpec, Dataset};
use hesslens::diff::{forward_loss, gradient};
use hesslens::hessops::CurvatureContext;
use hesslens::models::{build, BnMode, Model, ModelSpec};
use hesslens::params::ParamVector;
use hesslens::rng::{gaussian_vector, seeded};

pub fn blobs(classes: usize, per_class: usize, dim: usize, seed: u64) -> Dataset {
    make_blobs(
        &BlobSpec {
            classes,
            per_class,
            dim,
            separation: 3.0,
        },
        seed,
    )
    .unwrap()
}

/// MLP `widths` with seeded parameters and a blob set matching its shape.
pub fn tiny(widths: &[usize], per_class: usize, seed: u64) -> (Model, ParamVector, Dataset) {
    let (p, m) = build(&ModelSpec::mlp(widths), seed).unwrap();
    let data = blobs(*widths.last().unwrap(), per_class, widths[0], seed + 100);
    (m, p, data)
}

pub fn context(widths: &[usize], per_class: usize, seed: u64) -> Arc<CurvatureContext> {
    let (m, p, data) = tiny(widths, per_class, seed);
    let bn = m.initial_bn_state();
    CurvatureContext::new(m, p, bn, data).unwrap()
}

pub fn random(n: usize, seed: u64) -> Vec<f64> {
    gaussian_vector(&mut seeded(seed), n)
}

pub fn loss_at(model: &Model, params: &ParamVector, data: &Dataset, theta: &[f64]) -> f64 {
    let p = params.with_values(theta.to_vec()).unwrap();
    forward_loss(model, &p, data, BnMode::Train)
        .unwrap()
        .loss_value()
}

pub fn grad_at(model: &Model, params: &ParamVector, data: &Dataset, theta: &[f64]) -> Vec<f64> {
    let p = params.with_values(theta.to_vec()).unwrap();
    let mut tape = forward_loss(model, &p, data, BnMode::Train).unwrap();
    gradient(&mut tape).into_values()
}

pub fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(x, v)| x + a * v).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|a - b| / max(|b|, floor)` in the 2-norm.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}
