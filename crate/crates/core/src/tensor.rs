//! Dense row-major `f64` arrays and the handful of kernels the layers need:
//! matrix multiply, valid/padded 2-D cross-correlation, transposed
//! convolution and max pooling, each with an explicit backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a 2-D tensor from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, &shape));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Contiguous slab `i` along the leading axis.
    pub fn slab(&self, i: usize) -> &[f64] {
        let stride: usize = self.shape[1..].iter().product();
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        matmul(self, rhs)
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::dim("matmul", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

fn chw(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::dim(op, t.shape(), &[0, 0, 0])),
    }
}

/// Output extent of a strided window sweep over `len` (after padding).
fn windows(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (stride > 0 && padded >= k).then(|| (padded - k) / stride + 1)
}

struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGeom> {
    let (c_in, h, w) = chw(input, "conv2d")?;
    let (c_out, kc, k, k2) = match *kernels.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => return Err(Error::dim("conv2d", input.shape(), kernels.shape())),
    };
    if kc != c_in || k != k2 || bias.shape() != [c_out] {
        return Err(Error::dim("conv2d", input.shape(), kernels.shape()));
    }
    let (Some(oh), Some(ow)) = (windows(h, k, stride, pad), windows(w, k, stride, pad)) else {
        return Err(Error::dim("conv2d", input.shape(), kernels.shape()));
    };
    Ok(ConvGeom {
        c_in,
        h,
        w,
        c_out,
        k,
        oh,
        ow,
    })
}

/// Valid (unpadded) cross-correlation with per-channel bias.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    conv2d_padded(input, kernels, bias, stride, 0)
}

/// Cross-correlation over a zero-padded input. `kernels` is
/// `[C_out, C_in, k, k]`.
pub fn conv2d_padded(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input, kernels, bias, stride, pad)?;
    let x = input.data();
    let wt = kernels.data();
    let mut out = vec![0.0; g.c_out * g.oh * g.ow];
    for co in 0..g.c_out {
        let plane = &mut out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
        plane.fill(bias.data()[co]);
        for ci in 0..g.c_in {
            let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let kern = &wt[(co * g.c_in + ci) * g.k * g.k..(co * g.c_in + ci + 1) * g.k * g.k];
            for oy in 0..g.oh {
                for ky in 0..g.k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let xrow = &xin[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let krow = &kern[ky * g.k..(ky + 1) * g.k];
                    for ox in 0..g.ow {
                        let mut acc = 0.0;
                        for (kx, &kv) in krow.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                acc += kv * xrow[ix as usize];
                            }
                        }
                        plane[oy * g.ow + ox] += acc;
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.c_out, g.oh, g.ow], out)
}

/// Gradients of [`conv2d_padded`] with respect to input, kernels and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c_out = kernels.shape()[0];
    let bias = Tensor::zeros(&[c_out]);
    let g = conv_geometry(input, kernels, &bias, stride, pad)?;
    if grad_out.shape() != [g.c_out, g.oh, g.ow] {
        return Err(Error::dim("conv2d_backward", grad_out.shape(), &[g.c_out, g.oh, g.ow]));
    }
    let x = input.data();
    let wt = kernels.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; g.c_out];
    for co in 0..g.c_out {
        let gplane = &go[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
        gb[co] = gplane.iter().sum();
        for ci in 0..g.c_in {
            let kbase = (co * g.c_in + ci) * g.k * g.k;
            let xbase = ci * g.h * g.w;
            for oy in 0..g.oh {
                for ky in 0..g.k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let rbase = xbase + iy as usize * g.w;
                    for ox in 0..g.ow {
                        let gv = gplane[oy * g.ow + ox];
                        if gv == 0.0 {
                            continue;
                        }
                        for kx in 0..g.k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                let xi = rbase + ix as usize;
                                let ki = kbase + ky * g.k + kx;
                                gw[ki] += gv * x[xi];
                                gx[xi] += gv * wt[ki];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(kernels.shape().to_vec(), gw)?,
        Tensor::new(vec![g.c_out], gb)?,
    ))
}

struct TransposeGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    oh: usize,
    ow: usize,
}

fn transpose_geometry(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<TransposeGeom> {
    let (c_in, h, w) = chw(input, "conv_transpose2d")?;
    let (kc, c_out, k, k2) = match *kernels.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => return Err(Error::dim("conv_transpose2d", input.shape(), kernels.shape())),
    };
    let full_h = (h.max(1) - 1) * stride + k;
    let full_w = (w.max(1) - 1) * stride + k;
    if kc != c_in || k != k2 || stride == 0 || h == 0 || w == 0 || full_h <= 2 * pad || full_w <= 2 * pad
    {
        return Err(Error::dim("conv_transpose2d", input.shape(), kernels.shape()));
    }
    Ok(TransposeGeom {
        c_in,
        h,
        w,
        c_out,
        k,
        oh: full_h - 2 * pad,
        ow: full_w - 2 * pad,
    })
}

/// Fractionally-strided convolution (the adjoint of [`conv2d_padded`]).
/// `kernels` is `[C_in, C_out, k, k]`; output extent is `(H-1)*stride - 2*pad + k`.
pub fn conv_transpose2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = transpose_geometry(input, kernels, stride, pad)?;
    if bias.shape() != [g.c_out] {
        return Err(Error::dim("conv_transpose2d", bias.shape(), &[g.c_out]));
    }
    let x = input.data();
    let wt = kernels.data();
    let mut out = vec![0.0; g.c_out * g.oh * g.ow];
    for co in 0..g.c_out {
        out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow].fill(bias.data()[co]);
    }
    for ci in 0..g.c_in {
        for co in 0..g.c_out {
            let kern = &wt[(ci * g.c_out + co) * g.k * g.k..(ci * g.c_out + co + 1) * g.k * g.k];
            let plane = &mut out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
            for iy in 0..g.h {
                for ix in 0..g.w {
                    let xv = x[(ci * g.h + iy) * g.w + ix];
                    if xv == 0.0 {
                        continue;
                    }
                    for ky in 0..g.k {
                        let oy = (iy * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy >= g.oh as isize {
                            continue;
                        }
                        for kx in 0..g.k {
                            let ox = (ix * stride + kx) as isize - pad as isize;
                            if ox >= 0 && ox < g.ow as isize {
                                plane[oy as usize * g.ow + ox as usize] += xv * kern[ky * g.k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.c_out, g.oh, g.ow], out)
}

/// Gradients of [`conv_transpose2d`] with respect to input, kernels and bias.
pub fn conv_transpose2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = transpose_geometry(input, kernels, stride, pad)?;
    if grad_out.shape() != [g.c_out, g.oh, g.ow] {
        return Err(Error::dim(
            "conv_transpose2d_backward",
            grad_out.shape(),
            &[g.c_out, g.oh, g.ow],
        ));
    }
    let x = input.data();
    let wt = kernels.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let gb: Vec<f64> = (0..g.c_out)
        .map(|co| go[co * g.oh * g.ow..(co + 1) * g.oh * g.ow].iter().sum())
        .collect();
    for ci in 0..g.c_in {
        for co in 0..g.c_out {
            let kbase = (ci * g.c_out + co) * g.k * g.k;
            let gplane = &go[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
            for iy in 0..g.h {
                for ix in 0..g.w {
                    let xi = (ci * g.h + iy) * g.w + ix;
                    let xv = x[xi];
                    let mut acc = 0.0;
                    for ky in 0..g.k {
                        let oy = (iy * stride + ky) as isize - pad as isize;
                        if oy < 0 || oy >= g.oh as isize {
                            continue;
                        }
                        for kx in 0..g.k {
                            let ox = (ix * stride + kx) as isize - pad as isize;
                            if ox >= 0 && ox < g.ow as isize {
                                let gv = gplane[oy as usize * g.ow + ox as usize];
                                let ki = kbase + ky * g.k + kx;
                                acc += gv * wt[ki];
                                gw[ki] += gv * xv;
                            }
                        }
                    }
                    gx[xi] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(kernels.shape().to_vec(), gw)?,
        Tensor::new(vec![g.c_out], gb)?,
    ))
}

/// Per-window maximum. The returned indices address `input.data()` and feed
/// [`maxpool2d_backward`]. Ties resolve to the first maximum in scan order.
pub fn maxpool2d(input: &Tensor, k: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = chw(input, "maxpool2d")?;
    let (Some(oh), Some(ow)) = (windows(h, k, stride, 0), windows(w, k, stride, 0)) else {
        return Err(Error::dim("maxpool2d", input.shape(), &[k, k]));
    };
    if k == 0 {
        return Err(Error::dim("maxpool2d", input.shape(), &[k, k]));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for ky in 0..k {
                    for kx in 0..k {
                        let i = (ch * h + oy * stride + ky) * w + ox * stride + kx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                idx.push(best_i);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, idx))
}

pub fn maxpool2d_backward(grad_out: &Tensor, indices: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != indices.len() {
        return Err(Error::dim("maxpool2d_backward", grad_out.shape(), &[indices.len()]));
    }
    let mut gx = Tensor::zeros(input_shape);
    for (&i, &g) in indices.iter().zip(grad_out.data()) {
        gx.data[i] += g;
    }
    Ok(gx)
}
