#![allow(dead_code)]

use std::path::PathBuf;

use csr_game::ModelParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn reference() -> ModelParams {
    ModelParams {
        alpha: 0.9,
        beta_s: 0.3,
        beta_m: 0.3,
        beta_r: 0.2,
        tau: 0.1,
        theta: 0.05,
        delta_s: 0.01,
        delta_m: 0.02,
        delta_r: 0.03,
        d: 0.1,
        d_hat: 0.1,
        a: 10.0,
        b: 1.0,
        v: 2.0,
        z: 12.0,
        c: 1.0,
        x1: 1.0,
        horizon: 3,
    }
}

/// Parameters inside every invariant with `tau * theta > 0`.
pub fn random_params(rng: &mut ChaCha8Rng, horizon: usize) -> ModelParams {
    ModelParams {
        alpha: rng.random_range(0.3..=1.0),
        beta_s: rng.random_range(0.05..0.95),
        beta_m: rng.random_range(0.05..0.95),
        beta_r: rng.random_range(0.05..0.95),
        tau: rng.random_range(0.05..0.95),
        theta: rng.random_range(0.02..0.5),
        delta_s: rng.random_range(0.0..0.1),
        delta_m: rng.random_range(0.0..0.1),
        delta_r: rng.random_range(0.0..0.1),
        d: rng.random_range(0.0..0.5),
        d_hat: rng.random_range(0.0..0.5),
        a: rng.random_range(5.0..20.0),
        b: rng.random_range(0.5..3.0),
        v: rng.random_range(0.0..8.0),
        z: rng.random_range(5.0..25.0),
        c: rng.random_range(0.0..3.0),
        x1: rng.random_range(0.0..5.0),
        horizon,
    }
}

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
