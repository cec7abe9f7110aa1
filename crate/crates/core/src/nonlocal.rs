//! Convolutions rewritten as masked dense (Toeplitz) layers with a sprinkle
//! of extra trainable "nonlocal" entries, and the experiment that tracks
//! whether SGD shrinks those entries.
//!
//! A layer only stores the entries of its support (convolutional entries
//! first, nonlocal entries after), so every structural zero of the dense
//! matrix stays exactly zero under training.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::{ConvGeom, SparsePattern};
use crate::autodiff::{Scalar, Sgd, SgdConfig, Tape, Tensor, Var};
use crate::data::{batch_rng, normalize, AugmentConfig, LabeledImage};
use crate::error::{Error, Result};

/// Probability of promoting a structural zero to a nonlocal weight.
pub const DEFAULT_PROBABILITY: f64 = 0.0005;
pub const CONV_CHANNELS: [usize; 4] = [3, 6, 12, 12];
pub const HIDDEN: usize = 1024;
pub const KERNEL: usize = 3;

/// One convolutional entry of the dense matrix, with the kernel coordinate
/// it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvEntry {
    pub row: u32,
    pub col: u32,
    pub out_c: u16,
    pub in_c: u16,
    pub ki: u8,
    pub kj: u8,
}

#[derive(Debug, Clone)]
pub struct ToeplitzLayout {
    pub geom: ConvGeom,
    pub rows: usize,
    pub cols: usize,
    pub conv_index: Vec<ConvEntry>,
    /// Sorted `(row, col)` pairs outside the convolutional support.
    pub nonlocal_index: Vec<(u32, u32)>,
}

impl ToeplitzLayout {
    /// Layout of a single-image convolution `geom` (batch is ignored).
    pub fn from_conv(geom: ConvGeom) -> Result<Self> {
        if !geom.valid() {
            return Err(Error::Config(format!("invalid convolution geometry {geom:?}")));
        }
        let (oh, ow, k) = (geom.out_h(), geom.out_w(), geom.kernel);
        let rows = geom.out_c * oh * ow;
        let cols = geom.in_c * geom.h * geom.w;
        if rows > u32::MAX as usize || cols > u32::MAX as usize || rows.checked_mul(cols).is_none() {
            return Err(Error::Config(format!("Toeplitz matrix {rows}×{cols} overflows the index type")));
        }
        let mut conv_index = Vec::with_capacity(rows * geom.patch_len());
        for o in 0..geom.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((o * oh + oy) * ow + ox) as u32;
                    for c in 0..geom.in_c {
                        for ki in 0..k {
                            for kj in 0..k {
                                if let Some((y, x)) = geom.source(oy, ox, ki, kj) {
                                    conv_index.push(ConvEntry {
                                        row,
                                        col: ((c * geom.h + y) * geom.w + x) as u32,
                                        out_c: o as u16,
                                        in_c: c as u16,
                                        ki: ki as u8,
                                        kj: kj as u8,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            geom,
            rows,
            cols,
            conv_index,
            nonlocal_index: Vec::new(),
        })
    }

    pub fn dense_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn structural_zeros(&self) -> usize {
        self.dense_size() - self.conv_index.len()
    }

    pub fn nnz(&self) -> usize {
        self.conv_index.len() + self.nonlocal_index.len()
    }

    /// Support pattern: convolutional entries then nonlocal entries.
    pub fn pattern(&self) -> SparsePattern {
        let mut row_idx: Vec<u32> = self.conv_index.iter().map(|e| e.row).collect();
        let mut col_idx: Vec<u32> = self.conv_index.iter().map(|e| e.col).collect();
        row_idx.extend(self.nonlocal_index.iter().map(|p| p.0));
        col_idx.extend(self.nonlocal_index.iter().map(|p| p.1));
        SparsePattern {
            rows: self.rows,
            cols: self.cols,
            row_idx,
            col_idx,
        }
    }

    /// Sorted convolutional columns of every row.
    fn conv_cols_by_row(&self) -> Vec<Vec<u32>> {
        let mut by_row = vec![Vec::new(); self.rows];
        for e in &self.conv_index {
            by_row[e.row as usize].push(e.col);
        }
        for cols in &mut by_row {
            cols.sort_unstable();
        }
        by_row
    }

    /// Promotes each structural zero independently with `probability`;
    /// returns the number of new entries.
    pub fn add_nonlocal(&mut self, probability: f64, rng: &mut impl Rng) -> Result<usize> {
        if !(0.0..=1.0).contains(&probability) || probability.is_nan() {
            return Err(Error::Probability(probability));
        }
        self.nonlocal_index.clear();
        if probability == 0.0 {
            return Ok(0);
        }
        let zeros = self.structural_zeros() as u64;
        // Ranks (in row-major order over structural zeros) of promoted entries.
        let mut ranks = Vec::new();
        if probability == 1.0 {
            ranks.extend(0..zeros);
        } else {
            let gaps = Geometric::new(probability).expect("probability checked");
            let mut next = gaps.sample(rng);
            while next < zeros {
                ranks.push(next);
                next = next.saturating_add(1).saturating_add(gaps.sample(rng));
            }
        }
        let by_row = self.conv_cols_by_row();
        let mut out = Vec::with_capacity(ranks.len());
        let mut ranks = ranks.into_iter().peekable();
        let mut row_start = 0u64;
        for (row, conv_cols) in by_row.iter().enumerate() {
            let row_zeros = (self.cols - conv_cols.len()) as u64;
            while let Some(&rank) = ranks.peek() {
                if rank >= row_start + row_zeros {
                    break;
                }
                // Find the column holding the (rank - row_start)-th zero of the row.
                let mut target = rank - row_start;
                let mut col = 0u64;
                for &c in conv_cols {
                    let free = u64::from(c) - col;
                    if target < free {
                        break;
                    }
                    target -= free;
                    col = u64::from(c) + 1;
                }
                out.push((row as u32, (col + target) as u32));
                ranks.next();
            }
            row_start += row_zeros;
        }
        self.nonlocal_index = out;
        Ok(self.nonlocal_index.len())
    }
}

/// A masked dense layer: values on the layout's support plus a per-row bias.
#[derive(Debug, Clone)]
pub struct ToeplitzLayer<T> {
    pub layout: ToeplitzLayout,
    pub pattern: Arc<SparsePattern>,
    /// Support values: `conv_index` entries then `nonlocal_index` entries.
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ToeplitzLayer<T> {
    /// Copies a convolution's weights `[out_c, in_c, k, k]` and bias
    /// `[out_c]` into Toeplitz form. Entries that share a kernel weight in
    /// the convolution become independent parameters.
    pub fn from_conv(geom: ConvGeom, weight: &[T], bias: &[T]) -> Result<Self> {
        let k = geom.kernel;
        if weight.len() != geom.out_c * geom.patch_len() || bias.len() != geom.out_c {
            return Err(Error::Shape {
                op: "conv_to_toeplitz",
                lhs: vec![weight.len(), bias.len()],
                rhs: vec![geom.out_c * geom.patch_len(), geom.out_c],
            });
        }
        let layout = ToeplitzLayout::from_conv(geom)?;
        let values = layout
            .conv_index
            .iter()
            .map(|e| {
                weight[((e.out_c as usize * geom.in_c + e.in_c as usize) * k + e.ki as usize) * k + e.kj as usize]
            })
            .collect();
        let positions = geom.out_positions();
        let row_bias = (0..layout.rows).map(|r| bias[r / positions]).collect();
        Ok(Self {
            pattern: Arc::new(layout.pattern()),
            weights: Tensor::new(vec![layout.conv_index.len()], values)?,
            bias: Tensor::new(vec![layout.rows], row_bias)?,
            layout,
        })
    }

    /// Adds nonlocal entries with `probability`, initialized like a dense
    /// layer of the same shape: `U(-1/√cols, 1/√cols)`.
    pub fn add_nonlocal(&mut self, probability: f64, rng: &mut impl Rng) -> Result<usize> {
        let conv = self.layout.conv_index.len();
        let added = self.layout.add_nonlocal(probability, rng)?;
        let bound = 1.0 / (self.layout.cols as f64).sqrt();
        let mut values = self.weights.data()[..conv].to_vec();
        values.extend((0..added).map(|_| T::from_f64(rng.random_range(-bound..bound))));
        self.weights = Tensor::new(vec![values.len()], values)?;
        self.pattern = Arc::new(self.layout.pattern());
        Ok(added)
    }

    pub fn nonlocal_values(&self) -> &[T] {
        &self.weights.data()[self.layout.conv_index.len()..]
    }

    pub fn nonlocal_values_mut(&mut self) -> &mut [T] {
        let conv = self.layout.conv_index.len();
        &mut self.weights.data_mut()[conv..]
    }

    /// Frobenius norm of the nonlocal entries only.
    pub fn nonlocal_norm(&self) -> f64 {
        self.nonlocal_values()
            .iter()
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Dense `rows × cols` matrix.
    pub fn dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.layout.dense_size()];
        for (offset, &v) in self.pattern.dense_offsets().zip(self.weights.data()) {
            out[offset] = v;
        }
        out
    }

    /// Flattened dense offsets of the support, in storage order.
    pub fn support_offsets(&self) -> Vec<usize> {
        self.pattern.dense_offsets().collect()
    }

    /// Applies an optimizer step from a gradient over the whole dense
    /// matrix; only support entries move.
    pub fn masked_step(&mut self, dense_grad: &[T], opt: &mut Sgd<T>, slot: usize, lr: f64) -> Result<()> {
        if dense_grad.len() != self.layout.dense_size() {
            return Err(Error::SizeMismatch {
                expected: self.layout.dense_size(),
                actual: dense_grad.len(),
            });
        }
        let grad: Vec<T> = self.pattern.dense_offsets().map(|o| dense_grad[o]).collect();
        opt.update(slot, self.weights.data_mut(), &grad, None, lr);
        Ok(())
    }
}

/// Dense-storage reference for [`ToeplitzLayer::masked_step`]: updates a
/// full matrix only at `support`.
pub fn masked_step_dense<T: Scalar>(
    dense: &mut [T],
    dense_grad: &[T],
    support: &[usize],
    opt: &mut Sgd<T>,
    slot: usize,
    lr: f64,
) {
    opt.update(slot, dense, dense_grad, Some(support), lr);
}

/// Four Toeplitz layers (3, 6, 12, 12 channels, 3×3 kernels, no padding)
/// followed by a 1024-unit hidden layer and a 10-way output.
pub struct NonlocalNet<T> {
    pub layers: Vec<ToeplitzLayer<T>>,
    /// `(name, tensor)` for the two dense layers: weight, bias, weight, bias.
    pub head: Vec<(String, Tensor<T>)>,
}

fn uniform<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-bound..bound)))
}

impl<T: Scalar> NonlocalNet<T> {
    /// Initializes the convolutional network, converts every conv layer to
    /// Toeplitz form and adds nonlocal entries to each.
    pub fn new(probability: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let (mut in_c, mut side) = (3usize, 32usize);
        for &out_c in &CONV_CHANNELS {
            let geom = ConvGeom {
                batch: 1,
                in_c,
                h: side,
                w: side,
                out_c,
                kernel: KERNEL,
                stride: 1,
                pad: 0,
            };
            let fan_in = in_c * KERNEL * KERNEL;
            let w: Tensor<T> = uniform(vec![out_c, in_c, KERNEL, KERNEL], fan_in, &mut rng);
            let b: Tensor<T> = uniform(vec![out_c], fan_in, &mut rng);
            let mut layer = ToeplitzLayer::from_conv(geom, w.data(), b.data())?;
            layer.add_nonlocal(probability, &mut rng)?;
            layers.push(layer);
            in_c = out_c;
            side = geom.out_h();
        }
        let flat = in_c * side * side;
        let head = vec![
            ("fc1.weight".to_string(), uniform(vec![HIDDEN, flat], flat, &mut rng)),
            ("fc1.bias".to_string(), uniform(vec![HIDDEN], flat, &mut rng)),
            ("fc2.weight".to_string(), uniform(vec![10, HIDDEN], HIDDEN, &mut rng)),
            ("fc2.bias".to_string(), uniform(vec![10], HIDDEN, &mut rng)),
        ];
        Ok(Self { layers, head })
    }

    pub fn first_layer_norm(&self) -> f64 {
        self.layers[0].nonlocal_norm()
    }

    /// `x: [batch, 3072]` → logits `[batch, 10]`.
    pub fn forward<'p>(&'p self, tape: &mut Tape<'p, T>, mut x: Var) -> Result<Var> {
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(2 * i, &layer.weights);
            let b = tape.param(2 * i + 1, &layer.bias);
            x = tape.sparse_linear(x, w, Some(b), layer.pattern.clone())?;
            x = tape.relu(x);
        }
        let base = 2 * self.layers.len();
        let w = tape.param(base, &self.head[0].1);
        let b = tape.param(base + 1, &self.head[1].1);
        x = tape.linear(x, w, Some(b))?;
        x = tape.relu(x);
        let w = tape.param(base + 2, &self.head[2].1);
        let b = tape.param(base + 3, &self.head[3].1);
        tape.linear(x, w, Some(b))
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        out.extend(self.head.iter_mut().map(|(_, t)| t));
        out
    }

    /// One SGD step on a batch; returns the batch loss.
    pub fn train_step(&mut self, inputs: Tensor<T>, targets: &[usize], opt: &mut Sgd<T>, lr: f64) -> Result<f64> {
        let (loss, grads) = {
            let mut tape = Tape::new();
            let x = tape.input(inputs);
            let logits = self.forward(&mut tape, x)?;
            let loss = tape.cross_entropy(logits, targets)?;
            (tape.scalar(loss).as_f64(), tape.backward(loss)?.into_params())
        };
        let mut tensors = self.tensors_mut();
        for (slot, grad) in grads {
            let t = &mut tensors[slot];
            opt.update(slot, t.data_mut(), &grad, None, lr);
        }
        Ok(loss)
    }

    pub fn loss(&self, inputs: Tensor<T>, targets: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.input(inputs);
        let logits = self.forward(&mut tape, x)?;
        let loss = tape.cross_entropy(logits, targets)?;
        Ok(tape.scalar(loss).as_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlocalConfig {
    pub probability: f64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NonlocalConfig {
    fn default() -> Self {
        Self {
            probability: DEFAULT_PROBABILITY,
            epochs: 10,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            seed: 2021,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlocalPoint {
    pub epoch: usize,
    pub nonlocal_norm: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlocalRun {
    pub config: NonlocalConfig,
    pub first_layer_nonlocal: usize,
    pub first_layer_conv: usize,
    /// Epoch 0 holds the initial state.
    pub points: Vec<NonlocalPoint>,
    pub diverged_at: Option<usize>,
}

impl NonlocalRun {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "epoch,nonlocal_norm,train_loss")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.epoch, p.nonlocal_norm, p.train_loss)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Least-squares slope of the norm over epochs.
    pub fn norm_slope(&self) -> f64 {
        let n = self.points.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mx = self.points.iter().map(|p| p.epoch as f64).sum::<f64>() / n;
        let my = self.points.iter().map(|p| p.nonlocal_norm).sum::<f64>() / n;
        let sxy: f64 = self.points.iter().map(|p| (p.epoch as f64 - mx) * (p.nonlocal_norm - my)).sum();
        let sxx: f64 = self.points.iter().map(|p| (p.epoch as f64 - mx).powi(2)).sum();
        sxy / sxx
    }
}

fn batch_tensor(images: &[LabeledImage], order: &[usize], norm: &AugmentConfig) -> (Tensor<f32>, Vec<usize>) {
    let mut data = Vec::with_capacity(order.len() * crate::data::PIXELS);
    let mut targets = Vec::with_capacity(order.len());
    for &i in order {
        let mut px = images[i].pixels.clone();
        normalize(&mut px, norm);
        data.extend(px);
        targets.push(images[i].class_label as usize);
    }
    let batch = order.len();
    (Tensor::new(vec![batch, crate::data::PIXELS], data).expect("batch shape"), targets)
}

/// Trains the Toeplitz network on `train` with plain momentum SGD and logs
/// the first layer's nonlocal norm after every epoch. Inputs are channel
/// normalized; no augmentation.
pub fn run_nonlocal_experiment(config: NonlocalConfig, train: &[LabeledImage]) -> Result<NonlocalRun> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut net = NonlocalNet::<f32>::new(config.probability, config.seed)?;
    let mut opt = Sgd::new(SgdConfig {
        momentum: config.momentum,
        weight_decay: 0.0,
        dampening: 0.0,
        nesterov: false,
    });
    let norm = AugmentConfig::identity();
    let all: Vec<usize> = (0..train.len()).collect();
    let mut initial_loss = 0.0;
    for chunk in all.chunks(config.batch_size) {
        let (x, y) = batch_tensor(train, chunk, &norm);
        initial_loss += net.loss(x, &y)? * chunk.len() as f64;
    }
    let mut run = NonlocalRun {
        config,
        first_layer_nonlocal: net.layers[0].layout.nonlocal_index.len(),
        first_layer_conv: net.layers[0].layout.conv_index.len(),
        points: vec![NonlocalPoint {
            epoch: 0,
            nonlocal_norm: net.first_layer_norm(),
            train_loss: initial_loss / train.len() as f64,
        }],
        diverged_at: None,
    };
    for epoch in 1..=config.epochs {
        let mut order = all.clone();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut batch_rng(config.seed, epoch, u32::MAX as usize));
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = batch_tensor(train, chunk, &norm);
            let loss = net.train_step(x, &y, &mut opt, config.lr)?;
            if !loss.is_finite() {
                run.diverged_at = Some(epoch);
                return Ok(run);
            }
            total += loss * chunk.len() as f64;
        }
        log::info!("nonlocal epoch {epoch}: norm {:.5}", net.first_layer_norm());
        run.points.push(NonlocalPoint {
            epoch,
            nonlocal_norm: net.first_layer_norm(),
            train_loss: total / train.len() as f64,
        });
    }
    Ok(run)
}
