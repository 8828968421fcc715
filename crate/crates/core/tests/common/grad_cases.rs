//! Central-difference gradient checks for each layer and for a reduced-width
//! clone of the full network. Each function returns the worst relative
//! error over every differentiated argument.
#![allow(dead_code)]

use dressswap::layers::{
    batchnorm_backward, batchnorm_forward, dense_backward, dense_forward, init_params,
    model_backward, model_forward, mse_loss, relu_backward, relu_forward, BatchNormState, Mode,
    ModelConfig,
};
use dressswap::tensor::{conv2d_backward, conv2d_forward_cached, grad_check, ConvGeometry};
use dressswap::Tensor;
use rand::Rng;

use super::{random_away_from_zero, random_tensor, rng};

pub const H: f64 = 1e-5;

fn weighted_sum(out: &Tensor, weights: &Tensor) -> f64 {
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

pub fn conv_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let c = r.random_range(1..=3);
    let f = r.random_range(1..=3);
    let h = r.random_range(3..=6);
    let w = r.random_range(3..=6);
    let stride = r.random_range(1..=2);
    let padding = r.random_range(0..=1);
    let g = ConvGeometry::new(stride, padding);
    let x = random_tensor(&mut r, &[n, c, h, w], 1.0);
    let k = random_tensor(&mut r, &[f, c, 3, 3], 1.0);
    let b = random_tensor(&mut r, &[f], 1.0);
    let probe = |x: &Tensor, k: &Tensor, b: &Tensor| {
        let (y, cache) = conv2d_forward_cached(x, k, b, g).unwrap();
        let weights = random_tensor(&mut rng(seed ^ 0xabcd), y.shape(), 1.0);
        let grads = conv2d_backward(&cache, &weights).unwrap();
        (weighted_sum(&y, &weights), grads)
    };
    let wrt_x = grad_check(
        |t| {
            let (v, g) = probe(t, &k, &b);
            Ok((v, g.input))
        },
        &x,
        H,
    )
    .unwrap();
    let wrt_k = grad_check(
        |t| {
            let (v, g) = probe(&x, t, &b);
            Ok((v, g.kernel))
        },
        &k,
        H,
    )
    .unwrap();
    let wrt_b = grad_check(
        |t| {
            let (v, g) = probe(&x, &k, t);
            Ok((v, g.bias))
        },
        &b,
        H,
    )
    .unwrap();
    wrt_x
        .max_rel_error
        .max(wrt_k.max_rel_error)
        .max(wrt_b.max_rel_error)
}

pub fn batchnorm_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=4);
    let c = r.random_range(1..=3);
    let h = r.random_range(1..=4);
    let w = r.random_range(2..=4);
    let x = random_tensor(&mut r, &[n, c, h, w], 2.0);
    let gamma = Tensor::from_fn(&[c], |_| r.random_range(0.5..1.5));
    let beta = random_tensor(&mut r, &[c], 1.0);
    let (mean, var) = (Tensor::zeros(&[c]), Tensor::full(&[c], 1.0));
    let weights = random_tensor(&mut r, &[n, c, h, w], 1.0);
    let probe = |x: &Tensor, g: &Tensor, b: &Tensor| {
        let state = BatchNormState {
            gamma: g,
            beta: b,
            running_mean: &mean,
            running_var: &var,
        };
        let (y, cache) = batchnorm_forward(x, state, Mode::Train, 1e-5).unwrap();
        (weighted_sum(&y, &weights), batchnorm_backward(&cache, &weights).unwrap())
    };
    let e1 = grad_check(|t| Ok({ let (v, g) = probe(t, &gamma, &beta); (v, g.input) }), &x, H).unwrap();
    let e2 = grad_check(|t| Ok({ let (v, g) = probe(&x, t, &beta); (v, g.gamma) }), &gamma, H).unwrap();
    let e3 = grad_check(|t| Ok({ let (v, g) = probe(&x, &gamma, t); (v, g.beta) }), &beta, H).unwrap();
    e1.max_rel_error.max(e2.max_rel_error).max(e3.max_rel_error)
}

pub fn relu_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [r.random_range(1..=3), r.random_range(1..=8)];
    let x = random_away_from_zero(&mut r, &shape);
    let weights = random_tensor(&mut r, &shape, 1.0);
    grad_check(
        |t| {
            let y = relu_forward(t);
            Ok((weighted_sum(&y, &weights), relu_backward(t, &weights)?))
        },
        &x,
        H,
    )
    .unwrap()
    .max_rel_error
}

pub fn dense_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, fan_in, fan_out) = (
        r.random_range(1..=4),
        r.random_range(1..=10),
        r.random_range(1..=6),
    );
    let x = random_tensor(&mut r, &[n, fan_in], 1.0);
    let w = random_tensor(&mut r, &[fan_out, fan_in], 1.0);
    let b = random_tensor(&mut r, &[fan_out], 1.0);
    let weights = random_tensor(&mut r, &[n, fan_out], 1.0);
    let probe = |x: &Tensor, w: &Tensor, b: &Tensor| {
        let y = dense_forward(x, w, b).unwrap();
        (weighted_sum(&y, &weights), dense_backward(x, w, &weights).unwrap(), y)
    };
    let e1 = grad_check(|t| Ok({ let (v, g, _) = probe(t, &w, &b); (v, g.input) }), &x, H).unwrap();
    let e2 = grad_check(|t| Ok({ let (v, g, _) = probe(&x, t, &b); (v, g.weight) }), &w, H).unwrap();
    let e3 = grad_check(|t| Ok({ let (v, g, _) = probe(&x, &w, t); (v, g.bias) }), &b, H).unwrap();
    e1.max_rel_error.max(e2.max_rel_error).max(e3.max_rel_error)
}

pub fn mse_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=4);
    let pred = random_tensor(&mut r, &[n, 16], 5.0);
    let target = random_tensor(&mut r, &[n, 16], 5.0);
    grad_check(|t| mse_loss(t, &target), &pred, H)
        .unwrap()
        .max_rel_error
}

/// Widths 2/4/4/8/8 on a 3×12×12 input, MSE against random targets, every
/// trainable array checked.
pub fn tiny_model_case(seed: u64) -> f64 {
    let config = ModelConfig::conv_regressor([2, 4, 4, 8, 8], 12);
    let mut r = rng(seed);
    let params = init_params(&config, seed).unwrap();
    let x = random_tensor(&mut r, &[2, 3, 12, 12], 1.0);
    let target = random_tensor(&mut r, &[2, 16], 1.0);

    let loss_and_grads = |p: &dressswap::ParameterSet| {
        let mut p = p.clone();
        let (out, cache) = model_forward(&config, &mut p, &x, Mode::Train).unwrap();
        let (loss, dy) = mse_loss(&out, &target).unwrap();
        (loss, model_backward(&config, &p, &cache, &dy).unwrap())
    };

    let mut worst: f64 = 0.0;
    for idx in 0..params.params().len() {
        let base = params.params()[idx].tensor.clone();
        let report = grad_check(
            |t| {
                let mut p = params.clone();
                p.params_mut()[idx].tensor = t.clone();
                let (loss, grads) = loss_and_grads(&p);
                Ok((loss, grads.params[idx].tensor.clone()))
            },
            &base,
            H,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
    }
    let input_check = grad_check(
        |t| {
            let mut p = params.clone();
            let (out, cache) = model_forward(&config, &mut p, t, Mode::Train)?;
            let (loss, dy) = mse_loss(&out, &target)?;
            Ok((loss, model_backward(&config, &p, &cache, &dy)?.input))
        },
        &x,
        H,
    )
    .unwrap();
    worst.max(input_check.max_rel_error)
}
