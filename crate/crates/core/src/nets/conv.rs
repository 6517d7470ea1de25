//! im2col / col2im for single-example, channel-major tensors.

use crate::numerics::DenseMatrix;

/// Geometry of a 2-D convolution over a `channels × height × width` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.in_height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.positions()
    }

    /// Calls `f(pos, off)` for every output position `pos` whose tap for
    /// patch row `r` lands inside the input at flat offset `off`.
    #[inline]
    fn for_each_tap(&self, r: usize, mut f: impl FnMut(usize, usize)) {
        let k2 = self.kernel * self.kernel;
        let c = r / k2;
        let ki = (r % k2) / self.kernel;
        let kj = r % self.kernel;
        let (oh, ow) = (self.out_height(), self.out_width());
        // Valid output columns satisfy 0 <= ox*stride + kj - padding < in_width.
        let ox_lo = self.padding.saturating_sub(kj).div_ceil(self.stride);
        let ox_hi = (self.in_width + self.padding)
            .checked_sub(kj)
            .map_or(0, |v| v.div_ceil(self.stride))
            .min(ow);
        let plane = c * self.in_height * self.in_width;
        for oy in 0..oh {
            let y = oy * self.stride + ki;
            if y < self.padding || y - self.padding >= self.in_height {
                continue;
            }
            let row = plane + (y - self.padding) * self.in_width;
            for ox in ox_lo..ox_hi {
                f(oy * ow + ox, row + ox * self.stride + kj - self.padding);
            }
        }
    }
}

/// Patches of every row of `batch` laid side by side:
/// `fan_in × (rows·positions)`, column `b·P + p` is position `p` of example `b`.
pub fn im2col_batch(g: &ConvGeometry, batch: &DenseMatrix) -> DenseMatrix {
    let p = g.positions();
    let rows = batch.rows();
    let mut cols = DenseMatrix::zeros(g.fan_in(), rows * p);
    let width = rows * p;
    let data = cols.as_mut_slice();
    for r in 0..g.fan_in() {
        for b in 0..rows {
            let src = batch.row(b);
            let dst = &mut data[r * width + b * p..r * width + (b + 1) * p];
            g.for_each_tap(r, |pos, off| dst[pos] = src[off]);
        }
    }
    cols
}

/// Adjoint of [`im2col_batch`]: scatter-adds patch gradients back into a
/// `rows × input_len` matrix.
pub fn col2im_batch(g: &ConvGeometry, cols: &DenseMatrix, rows: usize) -> DenseMatrix {
    let p = g.positions();
    let width = rows * p;
    let mut out = DenseMatrix::zeros(rows, g.input_len());
    let data = cols.as_slice();
    for b in 0..rows {
        let dst = out.row_mut(b);
        for r in 0..g.fan_in() {
            let src = &data[r * width + b * p..r * width + (b + 1) * p];
            g.for_each_tap(r, |pos, off| dst[off] += src[pos]);
        }
    }
    out
}

/// `channels × (rows·positions)` → `rows × (channels·positions)`.
pub fn channels_to_rows(m: &DenseMatrix, rows: usize, positions: usize) -> DenseMatrix {
    let channels = m.rows();
    let mut out = DenseMatrix::zeros(rows, channels * positions);
    for c in 0..channels {
        let src = m.row(c);
        for b in 0..rows {
            out.row_mut(b)[c * positions..(c + 1) * positions]
                .copy_from_slice(&src[b * positions..(b + 1) * positions]);
        }
    }
    out
}

/// Inverse of [`channels_to_rows`].
pub fn rows_to_channels(m: &DenseMatrix, channels: usize, positions: usize) -> DenseMatrix {
    let rows = m.rows();
    let mut out = DenseMatrix::zeros(channels, rows * positions);
    for b in 0..rows {
        let src = m.row(b);
        for c in 0..channels {
            out.row_mut(c)[b * positions..(b + 1) * positions]
                .copy_from_slice(&src[c * positions..(c + 1) * positions]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, SeededRng};

    #[test]
    fn output_shape_formula() {
        let g = ConvGeometry {
            in_channels: 3,
            out_channels: 64,
            in_height: 32,
            in_width: 32,
            kernel: 5,
            stride: 2,
            padding: 2,
        };
        assert_eq!((g.out_height(), g.out_width()), (16, 16));
        assert_eq!(g.output_len(), 16384);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry {
            in_channels: 2,
            out_channels: 1,
            in_height: 5,
            in_width: 4,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let mut rng = SeededRng::new(9);
        let x = gaussian_matrix(&mut rng, 3, g.input_len(), 1.0).unwrap();
        let y = gaussian_matrix(&mut rng, g.fan_in(), 3 * g.positions(), 1.0).unwrap();
        let lhs = im2col_batch(&g, &x).frobenius_dot(&y);
        let rhs = x.frobenius_dot(&col2im_batch(&g, &y, 3));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn im2col_matches_direct_indexing() {
        let mut rng = SeededRng::new(4);
        for (h, w, k, stride, padding) in [(5, 4, 3, 2, 1), (8, 8, 5, 2, 2), (6, 7, 3, 1, 0), (4, 4, 3, 3, 2)] {
            let g = ConvGeometry {
                in_channels: 2,
                out_channels: 1,
                in_height: h,
                in_width: w,
                kernel: k,
                stride,
                padding,
            };
            let x = gaussian_matrix(&mut rng, 2, g.input_len(), 1.0).unwrap();
            let cols = im2col_batch(&g, &x);
            let p = g.positions();
            for b in 0..2 {
                for c in 0..2 {
                    for ki in 0..k {
                        for kj in 0..k {
                            for oy in 0..g.out_height() {
                                for ox in 0..g.out_width() {
                                    let y = (oy * stride + ki) as isize - padding as isize;
                                    let xx = (ox * stride + kj) as isize - padding as isize;
                                    let want = if (0..h as isize).contains(&y) && (0..w as isize).contains(&xx) {
                                        x[(b, c * h * w + y as usize * w + xx as usize)]
                                    } else {
                                        0.0
                                    };
                                    let r = c * k * k + ki * k + kj;
                                    assert_eq!(cols[(r, b * p + oy * g.out_width() + ox)], want);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn layout_round_trip() {
        let m = DenseMatrix::from_fn(3, 8, |r, c| (r * 8 + c) as f64);
        let rows = channels_to_rows(&m, 2, 4);
        assert_eq!(rows.shape(), (2, 12));
        assert_eq!(rows_to_channels(&rows, 3, 4), m);
    }
}
