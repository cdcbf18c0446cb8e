use super::{Result, Tensor, TensorError};
use crate::scalar::Real;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        dilation: usize,
        padding: usize,
        // im2col matrix [C_in*k*k, H_out*W_out]
        cols: Vec<T>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Affine {
        input: Var,
        scale: Var,
        shift: Var,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    SseLoss {
        pred: Var,
        target: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Scale(Var, T),
    Slice {
        input: Var,
        start: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Append-only tape. Nodes are created in topological order, so backward is
/// a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Per-axis sampling table for bilinear upsampling with half-pixel centers.
fn bilinear_table<T: Real>(src_len: usize, factor: usize) -> Vec<(usize, usize, T)> {
    let f = factor as f64;
    (0..src_len * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / f - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, T::lit(src - i0 as f64))
        })
        .collect()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Inserts a leaf. Leaves with `requires_grad` receive gradients on
    /// [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last backward pass, if `v` took part in it.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| Tensor {
            dims: node.value.dims.clone(),
            data: g.clone(),
        })
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Stride-1 2-D convolution over a `[C_in, H, W]` input with a
    /// `[C_out, C_in, k, k]` kernel, zero padding and dilation.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        dilation: usize,
        padding: usize,
    ) -> Result<Var> {
        let (cin, h, w) = self.value(input).chw()?;
        let wd = self.value(weight).dims().to_vec();
        let [cout, wcin, k, k2] = wd[..] else {
            return Err(TensorError::Dimension(format!(
                "conv2d weight must be [C_out,C_in,k,k], got {:?}",
                wd
            )));
        };
        if k != k2 || k == 0 {
            return Err(TensorError::Dimension(format!(
                "conv2d kernel must be square and non-empty, got {}x{}",
                k, k2
            )));
        }
        if wcin != cin {
            return Err(TensorError::Dimension(format!(
                "conv2d weight expects {} input channels, input has {}",
                wcin, cin
            )));
        }
        if self.value(bias).dims() != [cout] {
            return Err(TensorError::Dimension(format!(
                "conv2d bias must be [{}], got {:?}",
                cout,
                self.value(bias).dims()
            )));
        }
        if dilation == 0 {
            return Err(TensorError::Contract("dilation must be >= 1".into()));
        }
        let span = dilation * (k - 1) + 1;
        if h + 2 * padding < span || w + 2 * padding < span {
            return Err(TensorError::Dimension(format!(
                "conv2d receptive field {} exceeds padded input {}x{}",
                span,
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let ho = h + 2 * padding - span + 1;
        let wo = w + 2 * padding - span + 1;
        let kk = cin * k * k;
        let n = ho * wo;

        let x = self.value(input).data();
        let mut cols = vec![T::zero(); kk * n];
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..ho {
                        let iy = (oy + ky * dilation) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row =
                            &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                        let off = (kx * dilation) as isize - padding as isize;
                        let lo = (-off).max(0) as usize;
                        let hi = ((w as isize - off).min(wo as isize)).max(0) as usize;
                        if lo < hi {
                            let s0 = (lo as isize + off) as usize;
                            dst[oy * wo + lo..oy * wo + hi]
                                .copy_from_slice(&src_row[s0..s0 + (hi - lo)]);
                        }
                    }
                }
            }
        }

        let b = self.value(bias).data();
        let mut out = vec![T::zero(); cout * n];
        for (co, chunk) in out.chunks_mut(n).enumerate() {
            chunk.fill(b[co]);
        }
        T::gemm(
            cout,
            kk,
            n,
            T::one(),
            (self.value(weight).data(), kk as isize, 1),
            (&cols, n as isize, 1),
            T::one(),
            (&mut out, n as isize, 1),
        );
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        let value = Tensor {
            dims: vec![cout, ho, wo],
            data: out,
        };
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                dilation,
                padding,
                cols: if rg { cols } else { Vec::new() },
            },
            rg,
        ))
    }

    /// `weight · input + bias` for a vector input.
    pub fn fully_connected(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let wd = self.value(weight).dims();
        let [o, d] = wd[..] else {
            return Err(TensorError::Dimension(format!(
                "fully_connected weight must be [O,D], got {:?}",
                wd
            )));
        };
        if x.len() != d || x.dims().len() != 1 {
            return Err(TensorError::Dimension(format!(
                "fully_connected expects input [{}], got {:?}",
                d,
                x.dims()
            )));
        }
        if self.value(bias).dims() != [o] {
            return Err(TensorError::Dimension(format!(
                "fully_connected bias must be [{}], got {:?}",
                o,
                self.value(bias).dims()
            )));
        }
        let mut out = self.value(bias).data().to_vec();
        T::gemm(
            o,
            d,
            1,
            T::one(),
            (self.value(weight).data(), d as isize, 1),
            (x.data(), 1, 1),
            T::one(),
            (&mut out, 1, 1),
        );
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            Tensor {
                dims: vec![o],
                data: out,
            },
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let value = Tensor {
            dims: x.dims.clone(),
            data: x.data.iter().map(|&v| v.max(T::zero())).collect(),
        };
        let rg = self.rg(input);
        self.push(value, Op::Relu(input), rg)
    }

    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(TensorError::Dimension(format!(
                "max_pool2 needs at least 2x2 input, got {}x{}",
                h, w
            )));
        }
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ci in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = (ci * h + 2 * oy) * w + 2 * ox;
                    let mut best = base;
                    for idx in [base + 1, base + w, base + w + 1] {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(input);
        Ok(self.push(
            Tensor {
                dims: vec![c, ho, wo],
                data: out,
            },
            Op::MaxPool2 { input, argmax },
            rg,
        ))
    }

    /// Spatial mean per channel: `[C,H,W] -> [C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        let inv = T::one() / T::from_usize_lossy(h * w);
        let out = self
            .value(input)
            .data()
            .chunks(h * w)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        let rg = self.rg(input);
        Ok(self.push(
            Tensor {
                dims: vec![c],
                data: out,
            },
            Op::GlobalAvgPool(input),
            rg,
        ))
    }

    /// Channel-wise `scale[c] * x[c,:,:] + shift[c]`, with the per-channel
    /// vectors tiled over the spatial extent.
    pub fn elementwise_affine(&mut self, input: Var, scale: Var, shift: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        for (name, v) in [("scale", scale), ("shift", shift)] {
            if self.value(v).dims() != [c] {
                return Err(TensorError::Dimension(format!(
                    "elementwise_affine {} must be [{}], got {:?}",
                    name,
                    c,
                    self.value(v).dims()
                )));
            }
        }
        let s = self.value(scale).data();
        let b = self.value(shift).data();
        let hw = h * w;
        let out = self
            .value(input)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| s[i / hw] * x + b[i / hw])
            .collect();
        let rg = self.rg(input) || self.rg(scale) || self.rg(shift);
        Ok(self.push(
            Tensor {
                dims: vec![c, h, w],
                data: out,
            },
            Op::Affine {
                input,
                scale,
                shift,
            },
            rg,
        ))
    }

    /// Bilinear upsampling by an integer factor (half-pixel centers, i.e.
    /// corners not aligned).
    pub fn upsample_bilinear(&mut self, input: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(TensorError::Contract("upsample factor must be >= 1".into()));
        }
        let (c, h, w) = self.value(input).chw()?;
        let (ho, wo) = (h * factor, w * factor);
        let ty = bilinear_table::<T>(h, factor);
        let tx = bilinear_table::<T>(w, factor);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(c * ho * wo);
        for ci in 0..c {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for &(y0, y1, ly) in &ty {
                let r0 = &plane[y0 * w..(y0 + 1) * w];
                let r1 = &plane[y1 * w..(y1 + 1) * w];
                for &(x0, x1, lx) in &tx {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * lx;
                    let bot = r1[x0] + (r1[x1] - r1[x0]) * lx;
                    out.push(top + (bot - top) * ly);
                }
            }
        }
        let rg = self.rg(input);
        Ok(self.push(
            Tensor {
                dims: vec![c, ho, wo],
                data: out,
            },
            Op::Upsample { input, factor },
            rg,
        ))
    }

    /// Sum of squared differences, returned as a one-element tensor.
    pub fn sse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.dims() != t.dims() {
            return Err(TensorError::Dimension(format!(
                "sse_loss shapes differ: {:?} vs {:?}",
                p.dims(),
                t.dims()
            )));
        }
        let s = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), Op::SseLoss { pred, target }, rg))
    }

    fn same_dims(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.value(a).dims() != self.value(b).dims() {
            return Err(TensorError::Dimension(format!(
                "{} shapes differ: {:?} vs {:?}",
                op,
                self.value(a).dims(),
                self.value(b).dims()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let dims = self.value(a).dims.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { dims, data }, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let dims = self.value(a).dims.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { dims, data }, Op::Mul(a, b), rg))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).sum();
        let rg = self.rg(input);
        self.push(Tensor::scalar(s), Op::Sum(input), rg)
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let x = self.value(input);
        let value = Tensor {
            dims: x.dims.clone(),
            data: x.data.iter().map(|&v| v * factor).collect(),
        };
        let rg = self.rg(input);
        self.push(value, Op::Scale(input, factor), rg)
    }

    /// Contiguous sub-vector `input[start..start+len]` of a 1-D tensor.
    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(input);
        if x.dims().len() != 1 || start + len > x.len() || len == 0 {
            return Err(TensorError::Dimension(format!(
                "slice [{}..{}] out of range for {:?}",
                start,
                start + len,
                x.dims()
            )));
        }
        let value = Tensor {
            dims: vec![len],
            data: x.data[start..start + len].to_vec(),
        };
        let rg = self.rg(input);
        Ok(self.push(value, Op::Slice { input, start }, rg))
    }

    fn accumulate(&mut self, v: Var, delta: Vec<T>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            None => node.grad = Some(delta),
        }
    }

    /// Clears all gradients so the tape can be differentiated again.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Reverse sweep from a one-element `loss`. Gradients of nodes used by
    /// several consumers are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.value(loss).dims()
            )));
        }
        if !self.rg(loss) {
            return Err(TensorError::Contract(
                "loss does not depend on any tensor that requires grad".into(),
            ));
        }
        self.accumulate(loss, vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = self.nodes[i].grad.take() else {
                continue;
            };
            let deltas = self.local_backward(i, &gy);
            self.nodes[i].grad = Some(gy);
            for (v, d) in deltas {
                self.accumulate(v, d);
            }
        }
        Ok(())
    }

    fn local_backward(&self, i: usize, gy: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                dilation,
                padding,
                cols,
            } => {
                let (cin, h, w) = self.value(*input).chw().expect("checked in forward");
                let k = self.value(*weight).dims()[2];
                let (cout, ho, wo) = node.value.chw().expect("checked in forward");
                let n = ho * wo;
                let kk = cin * k * k;
                if self.rg(*bias) {
                    out.push((
                        *bias,
                        gy.chunks(n).map(|r| r.iter().copied().sum()).collect(),
                    ));
                }
                if self.rg(*weight) {
                    let mut dw = vec![T::zero(); cout * kk];
                    T::gemm(
                        cout,
                        n,
                        kk,
                        T::one(),
                        (gy, n as isize, 1),
                        (cols, 1, n as isize),
                        T::zero(),
                        (&mut dw, kk as isize, 1),
                    );
                    out.push((*weight, dw));
                }
                if self.rg(*input) {
                    let mut dcols = vec![T::zero(); kk * n];
                    T::gemm(
                        kk,
                        cout,
                        n,
                        T::one(),
                        (self.value(*weight).data(), 1, kk as isize),
                        (gy, n as isize, 1),
                        T::zero(),
                        (&mut dcols, n as isize, 1),
                    );
                    let mut dx = vec![T::zero(); cin * h * w];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let row = (ci * k + ky) * k + kx;
                                let src = &dcols[row * n..(row + 1) * n];
                                let off = (kx * dilation) as isize - *padding as isize;
                                let lo = (-off).max(0) as usize;
                                let hi = ((w as isize - off).min(wo as isize)).max(0) as usize;
                                for oy in 0..ho {
                                    let iy = (oy + ky * dilation) as isize - *padding as isize;
                                    if iy < 0 || iy >= h as isize || lo >= hi {
                                        continue;
                                    }
                                    let base = (ci * h + iy as usize) * w;
                                    for ox in lo..hi {
                                        dx[base + (ox as isize + off) as usize] +=
                                            src[oy * wo + ox];
                                    }
                                }
                            }
                        }
                    }
                    out.push((*input, dx));
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input).data();
                let d = x.len();
                if self.rg(*bias) {
                    out.push((*bias, gy.to_vec()));
                }
                if self.rg(*weight) {
                    let mut dw = Vec::with_capacity(gy.len() * d);
                    for &g in gy {
                        dw.extend(x.iter().map(|&xv| g * xv));
                    }
                    out.push((*weight, dw));
                }
                if self.rg(*input) {
                    let wm = self.value(*weight).data();
                    let mut dx = vec![T::zero(); d];
                    for (o, &g) in gy.iter().enumerate() {
                        for (dxv, &wv) in dx.iter_mut().zip(&wm[o * d..(o + 1) * d]) {
                            *dxv += g * wv;
                        }
                    }
                    out.push((*input, dx));
                }
            }
            Op::Relu(input) => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(gy)
                    .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                    .collect();
                out.push((*input, dx));
            }
            Op::MaxPool2 { input, argmax } => {
                let mut dx = vec![T::zero(); self.value(*input).len()];
                for (&idx, &g) in argmax.iter().zip(gy) {
                    dx[idx] += g;
                }
                out.push((*input, dx));
            }
            Op::GlobalAvgPool(input) => {
                let (_, h, w) = self.value(*input).chw().expect("checked in forward");
                let inv = T::one() / T::from_usize_lossy(h * w);
                let dx = gy
                    .iter()
                    .flat_map(|&g| std::iter::repeat_n(g * inv, h * w))
                    .collect();
                out.push((*input, dx));
            }
            Op::Affine {
                input,
                scale,
                shift,
            } => {
                let (c, h, w) = node.value.chw().expect("checked in forward");
                let hw = h * w;
                let x = self.value(*input).data();
                let s = self.value(*scale).data();
                if self.rg(*input) {
                    let dx = gy.iter().enumerate().map(|(i, &g)| g * s[i / hw]).collect();
                    out.push((*input, dx));
                }
                if self.rg(*scale) {
                    let ds = (0..c)
                        .map(|ci| {
                            let r = ci * hw..(ci + 1) * hw;
                            gy[r.clone()]
                                .iter()
                                .zip(&x[r])
                                .map(|(&g, &xv)| g * xv)
                                .sum()
                        })
                        .collect();
                    out.push((*scale, ds));
                }
                if self.rg(*shift) {
                    out.push((
                        *shift,
                        gy.chunks(hw).map(|r| r.iter().copied().sum()).collect(),
                    ));
                }
            }
            Op::Upsample { input, factor } => {
                let (c, h, w) = self.value(*input).chw().expect("checked in forward");
                let ty = bilinear_table::<T>(h, *factor);
                let tx = bilinear_table::<T>(w, *factor);
                let wo = w * factor;
                let mut dx = vec![T::zero(); c * h * w];
                for ci in 0..c {
                    let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
                    let gplane = &gy[ci * h * factor * wo..(ci + 1) * h * factor * wo];
                    for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                        let grow = &gplane[oy * wo..(oy + 1) * wo];
                        for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                            let g = grow[ox];
                            let top = g * (T::one() - ly);
                            let bot = g * ly;
                            plane[y0 * w + x0] += top * (T::one() - lx);
                            plane[y0 * w + x1] += top * lx;
                            plane[y1 * w + x0] += bot * (T::one() - lx);
                            plane[y1 * w + x1] += bot * lx;
                        }
                    }
                }
                out.push((*input, dx));
            }
            Op::SseLoss { pred, target } => {
                let g = gy[0];
                let two = T::lit(2.0);
                let diff: Vec<T> = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(self.value(*target).data())
                    .map(|(&p, &t)| two * (p - t) * g)
                    .collect();
                if self.rg(*target) {
                    out.push((*target, diff.iter().map(|&d| -d).collect()));
                }
                out.push((*pred, diff));
            }
            Op::Add(a, b) => {
                out.push((*a, gy.to_vec()));
                out.push((*b, gy.to_vec()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                out.push((*a, gy.iter().zip(bv).map(|(&g, &y)| g * y).collect()));
                out.push((*b, gy.iter().zip(av).map(|(&g, &x)| g * x).collect()));
            }
            Op::Sum(input) => {
                out.push((*input, vec![gy[0]; self.value(*input).len()]));
            }
            Op::Scale(input, factor) => {
                out.push((*input, gy.iter().map(|&g| g * *factor).collect()));
            }
            Op::Slice { input, start } => {
                let mut dx = vec![T::zero(); self.value(*input).len()];
                dx[*start..*start + gy.len()].copy_from_slice(gy);
                out.push((*input, dx));
            }
        }
        out
    }
}
