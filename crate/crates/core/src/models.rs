//! The five architectures, parameter matching and run-keyed initialization.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{checkpoint, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_SIDE: usize = 32;
pub const INPUT_DIM: usize = INPUT_CHANNELS * INPUT_SIDE * INPUT_SIDE;
pub const SHALLOW_WIDTH: usize = 10_000;
pub const THREE_CONV_CHANNELS: [usize; 3] = [8, 10, 12];
pub const THREE_CONV_KERNEL: usize = 5;
pub const VGG11_CHANNELS: [usize; 8] = [64, 128, 256, 256, 512, 512, 512, 512];
/// Conv indices after which VGG11 pools.
const VGG11_POOL_AFTER: [usize; 5] = [0, 1, 3, 5, 7];
pub const VGG11_HEAD_WIDTH: usize = 512;
pub const WIDE_DEPTH: usize = 2;
pub const DEEP_DEPTH: usize = 7;
/// Maximum relative parameter-count gap allowed between a matched control
/// and VGG11.
pub const MATCH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkName {
    Vgg11,
    ShallowFc,
    WideNet,
    DeepNet,
    ThreeConvNet,
}

impl NetworkName {
    pub const ALL: [NetworkName; 5] = [
        NetworkName::Vgg11,
        NetworkName::ShallowFc,
        NetworkName::WideNet,
        NetworkName::DeepNet,
        NetworkName::ThreeConvNet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NetworkName::Vgg11 => "vgg11",
            NetworkName::ShallowFc => "shallow_fc",
            NetworkName::WideNet => "wide_net",
            NetworkName::DeepNet => "deep_net",
            NetworkName::ThreeConvNet => "three_conv_net",
        }
    }

    pub fn is_convolutional(self) -> bool {
        matches!(self, NetworkName::Vgg11 | NetworkName::ThreeConvNet)
    }

    /// Per-network factor in the base learning rate.
    pub fn lr_adjustment(self) -> f64 {
        match self {
            NetworkName::Vgg11 | NetworkName::ThreeConvNet => 1.0,
            NetworkName::ShallowFc | NetworkName::WideNet | NetworkName::DeepNet => 0.5,
        }
    }
}

impl fmt::Display for NetworkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Ok(match key.as_str() {
            "vgg11" | "vgg" => NetworkName::Vgg11,
            "shallowfc" | "shallow" => NetworkName::ShallowFc,
            "widenet" | "wide" => NetworkName::WideNet,
            "deepnet" | "deep" => NetworkName::DeepNet,
            "threeconvnet" | "threeconv" => NetworkName::ThreeConvNet,
            _ => return Err(Error::Config(format!("unknown network `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Dense {
        inp: usize,
        out: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    GlobalAvgPool,
}

impl LayerSpec {
    pub fn param_count(&self) -> u64 {
        match *self {
            LayerSpec::Conv {
                in_c, out_c, kernel, ..
            } => (out_c * in_c * kernel * kernel + out_c) as u64,
            LayerSpec::Dense { inp, out } => (inp * out + out) as u64,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: NetworkName,
    pub output_dim: usize,
    pub layers: Vec<LayerSpec>,
}

fn dense_stack(widths: &[usize]) -> Vec<LayerSpec> {
    let mut layers = vec![LayerSpec::Flatten];
    for (i, pair) in widths.windows(2).enumerate() {
        layers.push(LayerSpec::Dense {
            inp: pair[0],
            out: pair[1],
        });
        if i + 2 < widths.len() {
            layers.push(LayerSpec::Relu);
        }
    }
    layers
}

/// Parameter count of a fully connected net with `depth` hidden layers of
/// equal `width`.
pub fn dense_count(depth: usize, width: u64, in_dim: u64, out_dim: u64) -> u64 {
    if depth == 0 {
        return in_dim * out_dim + out_dim;
    }
    in_dim * width + width + (depth as u64 - 1) * (width * width + width) + width * out_dim + out_dim
}

/// Integer hidden width whose parameter count is closest to `target`.
pub fn solve_matched_width(target: u64, depth: usize, in_dim: u64, out_dim: u64) -> Result<u64> {
    let unmatchable = Error::Unmatchable { target, depth };
    if depth == 0 || target < dense_count(depth, 1, in_dim, out_dim) {
        return Err(unmatchable);
    }
    // count(w) = a·w² + b·w + c
    let a = (depth - 1) as f64;
    let b = (in_dim + out_dim + depth as u64) as f64;
    let c = out_dim as f64 - target as f64;
    let root = if a == 0.0 {
        -c / b
    } else {
        (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
    };
    let guess = root.max(1.0).round() as u64;
    let gap = |w: u64| dense_count(depth, w, in_dim, out_dim).abs_diff(target);
    let mut best = guess.max(1);
    for w in guess.saturating_sub(3).max(1)..=guess + 3 {
        if gap(w) < gap(best) {
            best = w;
        }
    }
    // The count is increasing in w, so walk until the gap stops shrinking.
    while best > 1 && gap(best - 1) < gap(best) {
        best -= 1;
    }
    while gap(best + 1) < gap(best) {
        best += 1;
    }
    Ok(best)
}

impl NetworkSpec {
    pub fn vgg11(output_dim: usize) -> Self {
        let mut layers = Vec::new();
        let mut in_c = INPUT_CHANNELS;
        for (i, &out_c) in VGG11_CHANNELS.iter().enumerate() {
            layers.push(LayerSpec::Conv {
                in_c,
                out_c,
                kernel: 3,
                stride: 1,
                pad: 1,
            });
            layers.push(LayerSpec::Relu);
            if VGG11_POOL_AFTER.contains(&i) {
                layers.push(LayerSpec::MaxPool2);
            }
            in_c = out_c;
        }
        layers.extend(dense_stack(&[in_c, VGG11_HEAD_WIDTH, output_dim]));
        Self {
            name: NetworkName::Vgg11,
            output_dim,
            layers,
        }
    }

    pub fn shallow_fc(output_dim: usize) -> Self {
        Self {
            name: NetworkName::ShallowFc,
            output_dim,
            layers: dense_stack(&[INPUT_DIM, SHALLOW_WIDTH, output_dim]),
        }
    }

    fn matched_fc(name: NetworkName, depth: usize, output_dim: usize) -> Result<Self> {
        let target = Self::vgg11(output_dim).param_count();
        let width = solve_matched_width(target, depth, INPUT_DIM as u64, output_dim as u64)? as usize;
        let mut widths = vec![INPUT_DIM];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(output_dim);
        let spec = Self {
            name,
            output_dim,
            layers: dense_stack(&widths),
        };
        let gap = spec.param_count().abs_diff(target) as f64 / target as f64;
        if gap > MATCH_TOLERANCE {
            return Err(Error::Unmatchable { target, depth });
        }
        Ok(spec)
    }

    pub fn wide_net(output_dim: usize) -> Result<Self> {
        Self::matched_fc(NetworkName::WideNet, WIDE_DEPTH, output_dim)
    }

    pub fn deep_net(output_dim: usize) -> Result<Self> {
        Self::matched_fc(NetworkName::DeepNet, DEEP_DEPTH, output_dim)
    }

    pub fn three_conv_net(output_dim: usize) -> Self {
        let mut layers = Vec::new();
        let mut in_c = INPUT_CHANNELS;
        for &out_c in &THREE_CONV_CHANNELS {
            layers.push(LayerSpec::Conv {
                in_c,
                out_c,
                kernel: THREE_CONV_KERNEL,
                stride: 1,
                pad: THREE_CONV_KERNEL / 2,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2);
            in_c = out_c;
        }
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::Dense {
            inp: in_c,
            out: output_dim,
        });
        Self {
            name: NetworkName::ThreeConvNet,
            output_dim,
            layers,
        }
    }

    pub fn build(name: NetworkName, output_dim: usize) -> Result<Self> {
        Ok(match name {
            NetworkName::Vgg11 => Self::vgg11(output_dim),
            NetworkName::ShallowFc => Self::shallow_fc(output_dim),
            NetworkName::WideNet => Self::wide_net(output_dim)?,
            NetworkName::DeepNet => Self::deep_net(output_dim)?,
            NetworkName::ThreeConvNet => Self::three_conv_net(output_dim),
        })
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Hidden widths of the dense layers (excluding the output layer).
    pub fn hidden_widths(&self) -> Vec<usize> {
        let dense: Vec<usize> = self
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { out, .. } => Some(*out),
                _ => None,
            })
            .collect();
        dense[..dense.len().saturating_sub(1)].to_vec()
    }
}

/// Seed of the initial weights for a run; independent of the scrambling
/// condition, task and everything else.
pub fn init_seed(name: NetworkName, output_dim: usize, run_id: u32) -> u64 {
    let digest = Sha256::digest(format!("init/{}/{}/{}", name.as_str(), output_dim, run_id));
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub struct Network<T> {
    pub spec: NetworkSpec,
    pub params: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Network<T> {
    /// Builds the network with fan-in scaled uniform weights,
    /// `U(-1/√fan_in, 1/√fan_in)` for weights and biases alike.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let uniform = |shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-bound..bound)))
        };
        for (i, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_c, out_c, kernel, ..
                } => {
                    let fan_in = in_c * kernel * kernel;
                    params.push((format!("{i}.weight"), uniform(vec![out_c, in_c, kernel, kernel], fan_in, &mut rng)));
                    params.push((format!("{i}.bias"), uniform(vec![out_c], fan_in, &mut rng)));
                }
                LayerSpec::Dense { inp, out } => {
                    params.push((format!("{i}.weight"), uniform(vec![out, inp], inp, &mut rng)));
                    params.push((format!("{i}.bias"), uniform(vec![out], inp, &mut rng)));
                }
                _ => {}
            }
        }
        Self { spec, params }
    }

    /// Matched initialization θ⁽ʳ⁾: every scrambling condition of `run_id`
    /// starts from these weights.
    pub fn init_matched(spec: NetworkSpec, run_id: u32) -> Self {
        let seed = init_seed(spec.name, spec.output_dim, run_id);
        Self::init(spec, seed)
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let fresh = Network::<T>::init(spec.clone(), 0);
        if fresh.params.len() != params.len()
            || fresh
                .params
                .iter()
                .zip(&params)
                .any(|((n1, t1), (n2, t2))| n1 != n2 || t1.shape() != t2.shape())
        {
            return Err(Error::Decode {
                what: "checkpoint",
                reason: format!("parameters do not match the {} layout", spec.name),
            });
        }
        Ok(Self { spec, params })
    }

    pub fn param_count(&self) -> u64 {
        self.params.iter().map(|(_, t)| t.len() as u64).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint::encode(&self.params)
    }

    pub fn checkpoint_hash(&self) -> String {
        checkpoint::hash(&self.params)
    }

    /// Records the forward pass of `x: [batch, 3, 32, 32]` on `tape`.
    pub fn forward<'p>(&'p self, tape: &mut Tape<'p, T>, mut x: Var) -> Result<Var> {
        let mut slot = 0;
        for layer in &self.spec.layers {
            x = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let w = tape.param(slot, &self.params[slot].1);
                    let b = tape.param(slot + 1, &self.params[slot + 1].1);
                    slot += 2;
                    tape.conv2d(x, w, Some(b), stride, pad)?
                }
                LayerSpec::Dense { .. } => {
                    let w = tape.param(slot, &self.params[slot].1);
                    let b = tape.param(slot + 1, &self.params[slot + 1].1);
                    slot += 2;
                    tape.linear(x, w, Some(b))?
                }
                LayerSpec::Relu => tape.relu(x),
                LayerSpec::MaxPool2 => tape.max_pool2(x)?,
                LayerSpec::Flatten => tape.flatten(x)?,
                LayerSpec::GlobalAvgPool => tape.global_avg_pool(x)?,
            };
        }
        Ok(x)
    }

    /// Forward pass without gradients; returns `[batch, output_dim]` values.
    pub fn predict(&self, images: Tensor<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let x = tape.input(images);
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).to_vec())
    }

    /// Stores gradients produced by a tape into the parameters.
    pub fn set_grads(&mut self, grads: Vec<(usize, Vec<T>)>) {
        for (_, p) in &mut self.params {
            p.zero_grad();
        }
        for (slot, g) in grads {
            self.params[slot].1.grad = Some(g);
        }
    }

    /// Index of the first visualizable layer's weight, for filter export.
    pub fn first_weight(&self) -> Option<&Tensor<T>> {
        self.params.first().map(|(_, t)| t)
    }
}
