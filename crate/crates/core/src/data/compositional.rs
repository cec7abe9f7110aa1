//! Binary-tree compositional target on eight inputs:
//!
//! ```text
//! f(x1..x8) = φ3( φ21(φ11(x1,x2), φ12(x3,x4)), φ22(φ13(x5,x6), φ14(x7,x8)) )
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constituent {
    Add,
    /// `a · tanh(b·u + c·v + d)`
    Tanh { a: f64, b: f64, c: f64, d: f64 },
}

impl Constituent {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Constituent::Add => u + v,
            Constituent::Tanh { a, b, c, d } => a * (b * u + c * v + d).tanh(),
        }
    }
}

/// The seven constituents, ordered `φ11, φ12, φ13, φ14, φ21, φ22, φ3`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalFunction {
    pub nodes: [Constituent; 7],
}

impl HierarchicalFunction {
    pub fn additive() -> Self {
        Self {
            nodes: [Constituent::Add; 7],
        }
    }

    /// Random smooth constituents with `a, b, c ~ U(-2, 2)`, `d ~ U(-0.5, 0.5)`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = std::array::from_fn(|_| Constituent::Tanh {
            a: rng.random_range(-2.0..2.0),
            b: rng.random_range(-2.0..2.0),
            c: rng.random_range(-2.0..2.0),
            d: rng.random_range(-0.5..0.5),
        });
        Self { nodes }
    }

    pub fn eval(&self, x: &[f64; 8]) -> f64 {
        let mut level: Vec<f64> = x.to_vec();
        let mut node = 0;
        while level.len() > 1 {
            level = level
                .chunks_exact(2)
                .map(|pair| {
                    let out = self.nodes[node].eval(pair[0], pair[1]);
                    node += 1;
                    out
                })
                .collect();
        }
        level[0]
    }
}

/// `n` samples with inputs uniform in `[-1, 1]^8`.
pub fn compositional_dataset(f: &HierarchicalFunction, n: usize, seed: u64) -> (Vec<[f64; 8]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<[f64; 8]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
        .collect();
    let ys = xs.iter().map(|x| f.eval(x)).collect();
    (xs, ys)
}
