#![allow(dead_code)]

use auditml_core::engine::{LayerKind, LayerSpec, ModelSpec};
use auditml_core::harness::run_pair;
use auditml_core::harness::session::{run_client_all, run_holder_all, ClientOutcome, HolderOutcome, SessionConfig};
use auditml_core::linalg::ConvParams;
use auditml_core::{FieldConfig, Result};
use rand::{Rng, RngExt};

/// Plaintext forward pass over the integers.
pub fn plain_forward(model: &ModelSpec, x: &[i64]) -> Vec<i128> {
    let mut v: Vec<i128> = x.iter().map(|&a| a as i128).collect();
    for l in &model.layers {
        v = match l.kind {
            LayerKind::FullyConnected { d_in, d_out } => {
                let w = l.weights.as_ref().unwrap();
                (0..d_out)
                    .map(|i| (0..d_in).map(|j| w[i * d_in + j] as i128 * v[j]).sum())
                    .collect()
            }
            LayerKind::Convolution { params } => {
                let w: Vec<i128> = l.weights.as_ref().unwrap().iter().map(|&a| a as i128).collect();
                conv_scatter(&params, &v, &w)
            }
            LayerKind::Relu => v.iter().map(|&a| a.max(0)).collect(),
        };
    }
    v
}

/// Convolution by scattering each input tap into the outputs it feeds.
pub fn conv_scatter(p: &ConvParams, x: &[i128], w: &[i128]) -> Vec<i128> {
    let side = p.side();
    let (ow, oh) = (p.out_w(), p.out_h());
    let mut out = vec![0i128; ow * oh * p.out_c];
    for i in 0..p.in_w {
        for j in 0..p.in_h {
            for k in 0..p.in_c {
                let xv = x[(i * p.in_h + j) * p.in_c + k];
                for di in 0..side {
                    for dj in 0..side {
                        let (a, b) = (i + p.pad, j + p.pad);
                        if a < di || b < dj || (a - di) % p.stride != 0 || (b - dj) % p.stride != 0 {
                            continue;
                        }
                        let (oi, oj) = ((a - di) / p.stride, (b - dj) / p.stride);
                        if oi >= ow || oj >= oh {
                            continue;
                        }
                        for ko in 0..p.out_c {
                            out[(oi * oh + oj) * p.out_c + ko] += xv * w[((di * side + dj) * p.in_c + k) * p.out_c + ko];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn argmax_i128(v: &[i128]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn fc<R: Rng + ?Sized>(d_in: usize, d_out: usize, bound: i64, rng: &mut R) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::FullyConnected { d_in, d_out },
        weights: Some((0..d_in * d_out).map(|_| rng.random_range(-bound..=bound)).collect()),
    }
}

pub fn conv<R: Rng + ?Sized>(params: ConvParams, bound: i64, rng: &mut R) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::Convolution { params },
        weights: Some((0..params.kernel_len()).map(|_| rng.random_range(-bound..=bound)).collect()),
    }
}

pub fn relu() -> LayerSpec {
    LayerSpec {
        kind: LayerKind::Relu,
        weights: None,
    }
}

pub fn model(input_len: usize, layers: Vec<LayerSpec>) -> ModelSpec {
    ModelSpec {
        field: FieldConfig::default(),
        input_len,
        layers,
    }
}

pub fn random_inputs<R: Rng + ?Sized>(n: usize, len: usize, bound: i64, rng: &mut R) -> Vec<Vec<i64>> {
    (0..n).map(|_| (0..len).map(|_| rng.random_range(-bound..=bound)).collect()).collect()
}

pub fn as_f64(inputs: &[Vec<i64>]) -> Vec<Vec<f64>> {
    inputs.iter().map(|x| x.iter().map(|&a| a as f64).collect()).collect()
}

/// Runs both parties in process.
pub fn session(
    model: &ModelSpec,
    inputs: &[Vec<i64>],
    holder_cfg: &SessionConfig,
    client_cfg: &SessionConfig,
) -> (Result<HolderOutcome>, Result<ClientOutcome>) {
    let raw = as_f64(inputs);
    run_pair(
        holder_cfg.seed,
        |ch| run_holder_all(ch, model, holder_cfg),
        |ch| run_client_all(ch, &raw, client_cfg),
    )
}
