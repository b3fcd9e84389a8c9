use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Upper bound on the im2col scratch buffer, in elements. Batches are
/// processed in chunks that fit.
const COL_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    /// Zero padding added on both ends of the time axis.
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// Padding `K / 2`, which keeps the length for odd kernels at stride 1.
    pub fn same(mut self) -> Self {
        self.padding = self.kernel_size / 2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidArgument(format!("conv1d: {reason}")));
        if self.groups == 0 || self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return bad(format!(
                "channels {}→{} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("zero channels".into());
        }
        if self.kernel_size == 0 || self.stride == 0 {
            return bad("kernel_size and stride must be positive".into());
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels / self.groups, self.kernel_size]
    }

    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        let padded = input_len + 2 * self.padding;
        if padded < self.kernel_size {
            return Err(Error::InvalidShape {
                op: "conv1d",
                reason: format!(
                    "input length {input_len} with padding {} is shorter than kernel {}",
                    self.padding, self.kernel_size
                ),
            });
        }
        Ok((padded - self.kernel_size) / self.stride + 1)
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    batch: usize,
    cin: usize,
    cout: usize,
    len: usize,
    out_len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    groups: usize,
}

impl Geometry {
    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }

    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }

    fn col_rows(&self) -> usize {
        self.cin_g() * self.kernel
    }

    fn chunk(&self) -> usize {
        (COL_BUDGET / (self.col_rows() * self.out_len).max(1)).clamp(1, self.batch)
    }

    /// Valid output positions `[lo, hi)` for kernel tap `k`.
    fn valid_range(&self, k: usize) -> (usize, usize) {
        // need 0 <= t*stride + k - padding < len
        let lo = if k >= self.padding {
            0
        } else {
            (self.padding - k).div_ceil(self.stride).min(self.out_len)
        };
        let hi = if self.len + self.padding > k {
            ((self.len + self.padding - k - 1) / self.stride + 1).min(self.out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Fills `cols[ck, nb*out_len]` for samples `b0..b0+nb`, group `g`.
    fn im2col<S: Scalar>(&self, x: &[S], b0: usize, nb: usize, g: usize, cols: &mut [S]) {
        let width = nb * self.out_len;
        let cin_g = self.cin_g();
        for ci in 0..cin_g {
            let c = g * cin_g + ci;
            for k in 0..self.kernel {
                let row = &mut cols[(ci * self.kernel + k) * width..(ci * self.kernel + k + 1) * width];
                let (lo, hi) = self.valid_range(k);
                for bi in 0..nb {
                    let src = &x[((b0 + bi) * self.cin + c) * self.len..][..self.len];
                    let dst = &mut row[bi * self.out_len..(bi + 1) * self.out_len];
                    dst[..lo].fill(S::zero());
                    dst[hi..].fill(S::zero());
                    if lo == hi {
                        continue;
                    }
                    if self.stride == 1 {
                        let start = lo + k - self.padding;
                        dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (t, d) in dst[lo..hi].iter_mut().enumerate() {
                            *d = src[(lo + t) * self.stride + k - self.padding];
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<S: Scalar>(&self, cols: &[S], b0: usize, nb: usize, g: usize, dx: &mut [S]) {
        let width = nb * self.out_len;
        let cin_g = self.cin_g();
        for ci in 0..cin_g {
            let c = g * cin_g + ci;
            for k in 0..self.kernel {
                let row = &cols[(ci * self.kernel + k) * width..(ci * self.kernel + k + 1) * width];
                let (lo, hi) = self.valid_range(k);
                for bi in 0..nb {
                    let dst = &mut dx[((b0 + bi) * self.cin + c) * self.len..][..self.len];
                    let src = &row[bi * self.out_len..(bi + 1) * self.out_len];
                    for t in lo..hi {
                        dst[t * self.stride + k - self.padding] += src[t];
                    }
                }
            }
        }
    }
}

/// 1D cross-correlation, `out[t] = Σ_k w[k] · x[t·stride + k − padding]`,
/// over `[B, C_in, T]` inputs with weights `[C_out, C_in/groups, K]`.
pub fn conv1d<S: Scalar>(tape: &mut Tape<S>, x: Var, weight: Var, bias: Option<Var>, spec: &ConvSpec) -> Result<Var> {
    spec.validate()?;
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 || xs[1] != spec.in_channels {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: xs,
            rhs: vec![0, spec.in_channels, 0],
        });
    }
    let ws = tape.shape(weight).to_vec();
    if ws != spec.weight_shape() {
        return Err(Error::ShapeMismatch {
            op: "conv1d weight",
            lhs: ws,
            rhs: spec.weight_shape().to_vec(),
        });
    }
    if let Some(b) = bias {
        if tape.shape(b) != [spec.out_channels] {
            return Err(Error::ShapeMismatch {
                op: "conv1d bias",
                lhs: tape.shape(b).to_vec(),
                rhs: vec![spec.out_channels],
            });
        }
    }
    let geo = Geometry {
        batch: xs[0],
        cin: spec.in_channels,
        cout: spec.out_channels,
        len: xs[2],
        out_len: spec.output_len(xs[2])?,
        kernel: spec.kernel_size,
        stride: spec.stride,
        padding: spec.padding,
        groups: spec.groups,
    };

    let out = conv_forward(&geo, tape.value(x).data(), tape.value(weight).data(), bias.map(|b| tape.value(b).data()));
    let value = Tensor::from_parts(vec![geo.batch, geo.cout, geo.out_len], out);
    let need_dx = tape.requires_grad(x);
    let mut inputs = vec![x, weight];
    inputs.extend(bias);
    Ok(tape.push_op("conv1d", value, &inputs, move |inputs, _, g| {
        let (dx, dw) = conv_backward(&geo, inputs[0].data(), inputs[1].data(), g, need_dx);
        let mut grads = vec![dx, Some(dw)];
        if inputs.len() == 3 {
            let mut db = vec![S::zero(); geo.cout];
            for (i, row) in g.chunks_exact(geo.out_len).enumerate() {
                db[i % geo.cout] += row.iter().copied().sum::<S>();
            }
            grads.push(Some(db));
        }
        grads
    }))
}

fn conv_forward<S: Scalar>(geo: &Geometry, x: &[S], w: &[S], bias: Option<&[S]>) -> Vec<S> {
    let (cout_g, ck) = (geo.cout_g(), geo.col_rows());
    let mut out = vec![S::zero(); geo.batch * geo.cout * geo.out_len];
    let chunk = geo.chunk();
    let mut cols = vec![S::zero(); ck * chunk * geo.out_len];
    let mut tmp = vec![S::zero(); cout_g * chunk * geo.out_len];
    let mut b0 = 0;
    while b0 < geo.batch {
        let nb = chunk.min(geo.batch - b0);
        let width = nb * geo.out_len;
        for g in 0..geo.groups {
            geo.im2col(x, b0, nb, g, &mut cols[..ck * width]);
            let wg = &w[g * cout_g * ck..(g + 1) * cout_g * ck];
            S::gemm(cout_g, ck, width, wg, false, &cols[..ck * width], false, S::zero(), &mut tmp[..cout_g * width]);
            for co in 0..cout_g {
                let c = g * cout_g + co;
                let bias_c = bias.map_or(S::zero(), |b| b[c]);
                for bi in 0..nb {
                    let src = &tmp[co * width + bi * geo.out_len..][..geo.out_len];
                    let dst = &mut out[((b0 + bi) * geo.cout + c) * geo.out_len..][..geo.out_len];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s + bias_c;
                    }
                }
            }
        }
        b0 += nb;
    }
    out
}

fn conv_backward<S: Scalar>(geo: &Geometry, x: &[S], w: &[S], gy: &[S], need_dx: bool) -> (Option<Vec<S>>, Vec<S>) {
    let (cout_g, ck) = (geo.cout_g(), geo.col_rows());
    let mut dw = vec![S::zero(); w.len()];
    let mut dx = need_dx.then(|| vec![S::zero(); x.len()]);
    let chunk = geo.chunk();
    let mut cols = vec![S::zero(); ck * chunk * geo.out_len];
    let mut gy_g = vec![S::zero(); cout_g * chunk * geo.out_len];
    let mut b0 = 0;
    while b0 < geo.batch {
        let nb = chunk.min(geo.batch - b0);
        let width = nb * geo.out_len;
        for g in 0..geo.groups {
            // upstream gradient for this group as [cout_g, nb*out_len]
            for co in 0..cout_g {
                let c = g * cout_g + co;
                for bi in 0..nb {
                    let src = &gy[((b0 + bi) * geo.cout + c) * geo.out_len..][..geo.out_len];
                    gy_g[co * width + bi * geo.out_len..][..geo.out_len].copy_from_slice(src);
                }
            }
            geo.im2col(x, b0, nb, g, &mut cols[..ck * width]);
            let dwg = &mut dw[g * cout_g * ck..(g + 1) * cout_g * ck];
            S::gemm(cout_g, width, ck, &gy_g[..cout_g * width], false, &cols[..ck * width], true, S::one(), dwg);
            if let Some(dx) = dx.as_mut() {
                let wg = &w[g * cout_g * ck..(g + 1) * cout_g * ck];
                S::gemm(ck, cout_g, width, wg, true, &gy_g[..cout_g * width], false, S::zero(), &mut cols[..ck * width]);
                geo.col2im_add(&cols[..ck * width], b0, nb, g, dx);
            }
        }
        b0 += nb;
    }
    (dx, dw)
}
