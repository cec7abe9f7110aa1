//! Fits the eight-input binary-tree compositional target with a small
//! dense network built directly on the tape, and compares the test MSE
//! against predicting the training mean.

use locality::autodiff::{Sgd, SgdConfig, Tape, Tensor};
use locality::data::{compositional_dataset, HierarchicalFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTH: usize = 64;

fn layer(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> [Tensor<f64>; 2] {
    let bound = 1.0 / (inp as f64).sqrt();
    [
        Tensor::from_fn(vec![out, inp], |_| rng.random_range(-bound..bound)),
        Tensor::from_fn(vec![out], |_| rng.random_range(-bound..bound)),
    ]
}

fn batch(xs: &[[f64; 8]]) -> Tensor<f64> {
    Tensor::new(vec![xs.len(), 8], xs.iter().flatten().copied().collect()).expect("n×8")
}

type SlotGrads = Vec<(usize, Vec<f64>)>;

fn loss(params: &[Tensor<f64>], xs: &[[f64; 8]], ys: &[f64], train: bool) -> locality::Result<(f64, SlotGrads)> {
    let mut tape = Tape::new();
    let mut h = tape.input(batch(xs));
    for (i, pair) in params.chunks(2).enumerate() {
        let w = tape.param(2 * i, &pair[0]);
        let b = tape.param(2 * i + 1, &pair[1]);
        h = tape.linear(h, w, Some(b))?;
        if 2 * i + 2 < params.len() {
            h = tape.relu(h);
        }
    }
    let l = tape.mse(h, ys)?;
    let value = tape.scalar(l);
    let grads = if train { tape.backward(l)?.into_params() } else { Vec::new() };
    Ok((value, grads))
}

/// Returns (test MSE of the network, test MSE of the mean predictor).
pub fn run_example(epochs: usize, seed: u64) -> locality::Result<(f64, f64)> {
    let f = HierarchicalFunction::random(seed);
    let (train_x, train_y) = compositional_dataset(&f, 2000, seed ^ 1);
    let (test_x, test_y) = compositional_dataset(&f, 500, seed ^ 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: Vec<Tensor<f64>> = [layer(&mut rng, WIDTH, 8), layer(&mut rng, WIDTH, WIDTH), layer(&mut rng, 1, WIDTH)]
        .into_iter()
        .flatten()
        .collect();
    let mut opt = Sgd::new(SgdConfig {
        weight_decay: 0.0,
        ..SgdConfig::default()
    });
    for epoch in 0..epochs {
        for (bx, by) in train_x.chunks(50).zip(train_y.chunks(50)) {
            let (_, grads) = loss(&params, bx, by, true)?;
            for (slot, g) in grads {
                opt.update(slot, params[slot].data_mut(), &g, None, 0.02);
            }
        }
        if epoch % 10 == 9 {
            println!("epoch {:>3}  train mse {:.5}", epoch + 1, loss(&params, &train_x, &train_y, false)?.0);
        }
    }
    let net = loss(&params, &test_x, &test_y, false)?.0;
    let mean = train_y.iter().sum::<f64>() / train_y.len() as f64;
    let baseline = test_y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / test_y.len() as f64;
    println!("test mse {net:.5}  (mean predictor {baseline:.5})");
    Ok((net, baseline))
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    run_example(60, 2021)?;
    Ok(())
}
