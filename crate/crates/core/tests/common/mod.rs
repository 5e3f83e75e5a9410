//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speckle_core::nn::{Activation, ConvLayer, DenseLayer, Layer, Network, PoolLayer};
use speckle_core::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Random 8x8x1 network: conv(2, 3x3) -> maxpool 2x2 -> flatten -> dense(4) -> head.
pub fn random_tiny_net(seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv_act = [Activation::Relu, Activation::Tanh, Activation::Sigmoid][seed as usize % 3];
    let padding = rng.random_range(0..=1usize);
    let binary = seed % 4 == 3;
    let classes = rng.random_range(2..=5usize);
    let conv_out = 8 + 2 * padding - 2;
    let pooled = conv_out / 2;
    let flat = pooled * pooled * 2;
    let head = if binary {
        DenseLayer::new(4, 1, Activation::Sigmoid).unwrap()
    } else {
        DenseLayer::new(4, classes, Activation::Softmax).unwrap()
    };
    let mut net = Network::new(
        [8, 8, 1],
        vec![
            Layer::Conv(ConvLayer::new(1, 2, (3, 3), (1, 1), padding, conv_act).unwrap()),
            Layer::MaxPool(PoolLayer::new((2, 2), (2, 2), 0).unwrap()),
            Layer::Flatten,
            Layer::Dense(DenseLayer::new(flat, 4, Activation::Tanh).unwrap()),
            Layer::Dense(head),
        ],
    )
    .unwrap();
    net.init_he_uniform(seed ^ 0x5eed);
    for p in net.params_mut() {
        if p.rank() == 1 {
            for b in p.data_mut() {
                *b = rng.random_range(-0.2..0.2);
            }
        }
    }
    net
}

fn weighted_output(net: &Network<f64>, x: &Tensor<f64>, r: &[f64]) -> f64 {
    let y = net.forward(x).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Max relative error between analytic gradients of `L = r · net(x)` and
/// central differences of the same scalar, over every parameter and input.
pub fn gradient_check(seed: u64) -> f64 {
    let mut net = random_tiny_net(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 1);
    let x = Tensor::new(vec![8, 8, 1], (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let out_len = net.output_shape().unwrap()[0];
    let r: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();

    let (_, cache) = net.forward_cached(&x).unwrap();
    let grads = net.backward(&cache, &Tensor::from_vec(r.clone())).unwrap();

    let mut worst = 0.0f64;
    let n_params = net.params().len();
    for pi in 0..n_params {
        let len = net.params()[pi].len();
        for i in 0..len {
            let orig = net.params()[pi].data()[i];
            net.params_mut()[pi].data_mut()[i] = orig + FD_STEP;
            let up = weighted_output(&net, &x, &r);
            net.params_mut()[pi].data_mut()[i] = orig - FD_STEP;
            let down = weighted_output(&net, &x, &r);
            net.params_mut()[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.params[pi].data()[i], numeric));
        }
    }
    let dx = grads.input.expect("input gradient requested");
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let up = weighted_output(&net, &xp, &r);
        xp.data_mut()[i] = orig - FD_STEP;
        let down = weighted_output(&net, &xp, &r);
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err(dx.data()[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn composed_loss(net: &Network<f64>, x: &Tensor<f64>, label: usize) -> f64 {
    let p = net.forward(x).unwrap();
    if p.len() == 1 {
        speckle_core::train::binary_cross_entropy(p.data()[0], label as f64).0
    } else {
        let mut y = vec![0.0; p.len()];
        y[label] = 1.0;
        speckle_core::train::categorical_cross_entropy(&p, &Tensor::from_vec(y)).unwrap().0
    }
}

/// Same check for the fused path: the loss-layer gradient `p - y` pushed in
/// at the logits must match differences of cross-entropy over the outputs.
pub fn fused_loss_check(seed: u64) -> f64 {
    let mut net = random_tiny_net(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let x = Tensor::new(vec![8, 8, 1], (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let width = net.output_shape().unwrap()[0];
    let label = rng.random_range(0..width.max(2));

    let (p, cache) = net.forward_cached(&x).unwrap();
    let mut upstream = p.clone();
    if width == 1 {
        upstream.data_mut()[0] -= label as f64;
    } else {
        upstream.data_mut()[label] -= 1.0;
    }
    let grads = net
        .backward_with(&cache, &upstream, speckle_core::nn::GradientAt::Logits, false)
        .unwrap();

    let mut worst = 0.0f64;
    for pi in 0..net.params().len() {
        for i in 0..net.params()[pi].len() {
            let orig = net.params()[pi].data()[i];
            net.params_mut()[pi].data_mut()[i] = orig + FD_STEP;
            let up = composed_loss(&net, &x, label);
            net.params_mut()[pi].data_mut()[i] = orig - FD_STEP;
            let down = composed_loss(&net, &x, label);
            net.params_mut()[pi].data_mut()[i] = orig;
            worst = worst.max(rel_err(grads.params[pi].data()[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Single-channel `side x side` classifier: conv(4) -> pool -> flatten -> head.
pub fn small_classifier(side: usize, classes: usize, seed: u64) -> Network<f32> {
    let flat = ((side - 2) / 2).pow(2) * 4;
    let head = if classes == 1 {
        DenseLayer::new(flat, 1, Activation::Sigmoid).unwrap()
    } else {
        DenseLayer::new(flat, classes, Activation::Softmax).unwrap()
    };
    let mut net = Network::new(
        [side, side, 1],
        vec![
            Layer::Conv(ConvLayer::new(1, 4, (3, 3), (1, 1), 0, Activation::Relu).unwrap()),
            Layer::MaxPool(PoolLayer::new((2, 2), (2, 2), 0).unwrap()),
            Layer::Flatten,
            Layer::Dense(head),
        ],
    )
    .unwrap();
    net.init_he_uniform(seed);
    net
}
