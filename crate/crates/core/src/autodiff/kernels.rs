//! Raw array kernels shared by the tape ops and the verification oracles.

use super::Scalar;

/// Geometry of a 2-D convolution over a `[batch, in_c, h, w]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn out_positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn valid(&self) -> bool {
        self.kernel > 0
            && self.stride > 0
            && self.h + 2 * self.pad >= self.kernel
            && self.w + 2 * self.pad >= self.kernel
    }

    /// Input coordinate read by output `(oy, ox)` at kernel offset `(ki, kj)`,
    /// or `None` when it falls into the padding.
    #[inline]
    pub fn source(&self, oy: usize, ox: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.pad)?;
        let x = (ox * self.stride + kj).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// Lowers one image `[in_c, h, w]` into columns `[in_c·k·k, out_h·out_w]`.
pub fn im2col<T: Scalar>(g: &ConvGeom, image: &[T], cols: &mut [T]) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let positions = oh * ow;
    for c in 0..g.in_c {
        let plane = &image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    for ox in 0..ow {
                        dst[oy * ow + ox] = match g.source(oy, ox, ki, kj) {
                            Some((y, x)) => plane[y * g.w + x],
                            None => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], image: &mut [T]) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let positions = oh * ow;
    for c in 0..g.in_c {
        let plane = &mut image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    for ox in 0..ow {
                        if let Some((y, x)) = g.source(oy, ox, ki, kj) {
                            plane[y * g.w + x] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Direct (loop) convolution in `f64`, used as an independent oracle.
pub fn conv2d_direct(g: &ConvGeom, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let mut out = vec![0.0; g.batch * g.out_c * oh * ow];
    for b in 0..g.batch {
        for o in 0..g.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bias| bias[o]);
                    for c in 0..g.in_c {
                        for ki in 0..k {
                            for kj in 0..k {
                                if let Some((y, x)) = g.source(oy, ox, ki, kj) {
                                    acc += weight[((o * g.in_c + c) * k + ki) * k + kj]
                                        * input[((b * g.in_c + c) * g.h + y) * g.w + x];
                                }
                            }
                        }
                    }
                    out[((b * g.out_c + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Transposes a row-major `[rows, cols]` matrix.
pub fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Support of a masked dense matrix: entry `e` sits at
/// `(rows_idx[e], cols_idx[e])` of a `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    pub rows: usize,
    pub cols: usize,
    pub row_idx: Vec<u32>,
    pub col_idx: Vec<u32>,
}

impl SparsePattern {
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Flattened dense offset of every entry.
    pub fn dense_offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.row_idx
            .iter()
            .zip(&self.col_idx)
            .map(|(&r, &c)| r as usize * self.cols + c as usize)
    }
}
