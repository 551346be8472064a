//! Forward and backward kernels for the handful of layers the network uses.
//!
//! Each backward takes exactly what its forward saved: the input for conv,
//! linear and ReLU, the output for sigmoid, the scaled keep-mask for dropout.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
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

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} += {:?}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    fn dims2(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::Shape(format!("{what} must be 2-D, got {:?}", self.shape))),
        }
    }

    fn dims1(&self, what: &str) -> Result<usize> {
        match self.shape[..] {
            [a] => Ok(a),
            _ => Err(Error::Shape(format!("{what} must be 1-D, got {:?}", self.shape))),
        }
    }
}

/// Gradients of one parameterized layer: `[weight, bias]` plus the input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv_out_len(width: usize, kernel: usize, stride: usize) -> usize {
    (width - kernel) / stride + 1
}

fn conv_dims(input: &Tensor, weight: &Tensor, stride: usize) -> Result<(usize, usize, usize, usize, usize)> {
    let (cin, w) = input.dims2("conv input")?;
    let (cout, wcin, k) = match weight.shape[..] {
        [a, b, c] => (a, b, c),
        _ => return Err(Error::Shape(format!("conv weight must be 3-D, got {:?}", weight.shape))),
    };
    if wcin != cin {
        return Err(Error::Shape(format!("conv weight expects {wcin} input channels, got {cin}")));
    }
    if stride == 0 {
        return Err(Error::Shape("stride must be >= 1".into()));
    }
    if w < k {
        return Err(Error::Shape(format!("input width {w} is shorter than kernel {k}")));
    }
    Ok((cin, w, cout, k, conv_out_len(w, k, stride)))
}

/// Valid (unpadded) 1-D convolution: `C_in × W → C_out × W'`.
pub fn conv1d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (cin, w, cout, k, wout) = conv_dims(input, weight, stride)?;
    if bias.dims1("conv bias")? != cout {
        return Err(Error::Shape(format!("conv bias must have {cout} entries")));
    }
    let x = &input.data;
    let wt = &weight.data;
    let mut out = vec![0.0; cout * wout];
    for co in 0..cout {
        let row = &mut out[co * wout..(co + 1) * wout];
        row.fill(bias.data[co]);
        for ci in 0..cin {
            let xin = &x[ci * w..(ci + 1) * w];
            let taps = &wt[(co * cin + ci) * k..(co * cin + ci + 1) * k];
            for (j, &tap) in taps.iter().enumerate() {
                if stride == 1 {
                    for (o, xv) in row.iter_mut().zip(&xin[j..j + wout]) {
                        *o += tap * xv;
                    }
                } else {
                    for (t, o) in row.iter_mut().enumerate() {
                        *o += tap * xin[t * stride + j];
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, wout], out)
}

/// Dot product with eight independent partial sums, so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn conv1d_backward(upstream: &Tensor, input: &Tensor, weight: &Tensor, stride: usize) -> Result<LayerGrads> {
    let (w, b, i) = conv_grads(upstream, input, weight, stride, true)?;
    Ok(LayerGrads { input: i.expect("input gradient requested"), weight: w, bias: b })
}

/// Weight and bias gradients only, for a layer whose input needs none.
pub fn conv1d_param_grads(upstream: &Tensor, input: &Tensor, weight: &Tensor, stride: usize) -> Result<(Tensor, Tensor)> {
    let (w, b, _) = conv_grads(upstream, input, weight, stride, false)?;
    Ok((w, b))
}

fn conv_grads(
    upstream: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    want_input: bool,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let (cin, w, cout, k, wout) = conv_dims(input, weight, stride)?;
    if upstream.shape != [cout, wout] {
        return Err(Error::Shape(format!(
            "conv upstream {:?} does not match output [{cout}, {wout}]",
            upstream.shape
        )));
    }
    let x = &input.data;
    let wt = &weight.data;
    let up = &upstream.data;
    let mut gx = vec![0.0; cin * w];
    let mut gw = vec![0.0; cout * cin * k];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        let urow = &up[co * wout..(co + 1) * wout];
        gb[co] = urow.iter().sum();
        for ci in 0..cin {
            let xin = &x[ci * w..(ci + 1) * w];
            let gxin = &mut gx[ci * w..(ci + 1) * w];
            let base = (co * cin + ci) * k;
            for j in 0..k {
                let tap = wt[base + j];
                if stride == 1 {
                    gw[base + j] = dot(urow, &xin[j..j + wout]);
                    if want_input {
                        for (g, u) in gxin[j..j + wout].iter_mut().zip(urow) {
                            *g += tap * u;
                        }
                    }
                } else {
                    let mut acc = 0.0;
                    for (t, u) in urow.iter().enumerate() {
                        acc += u * xin[t * stride + j];
                        if want_input {
                            gxin[t * stride + j] += tap * u;
                        }
                    }
                    gw[base + j] = acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(weight.shape.clone(), gw)?,
        Tensor::vector(gb),
        want_input.then(|| Tensor::new(vec![cin, w], gx)).transpose()?,
    ))
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Passes upstream where the saved input is strictly positive.
pub fn relu_backward(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    same_shape(upstream, input, "relu")?;
    Ok(Tensor {
        shape: input.shape.clone(),
        data: upstream
            .data
            .iter()
            .zip(&input.data)
            .map(|(u, x)| if *x > 0.0 { *u } else { 0.0 })
            .collect(),
    })
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

/// Per-channel mean over the spatial axis.
pub fn gap1d(input: &Tensor) -> Result<Tensor> {
    let (c, w) = input.dims2("gap input")?;
    if w == 0 {
        return Err(Error::Shape("global pooling over an empty axis".into()));
    }
    Ok(Tensor::vector(
        (0..c)
            .map(|i| input.data[i * w..(i + 1) * w].iter().sum::<f64>() / w as f64)
            .collect(),
    ))
}

pub fn gap1d_backward(upstream: &Tensor, width: usize) -> Result<Tensor> {
    let c = upstream.dims1("gap upstream")?;
    let mut data = Vec::with_capacity(c * width);
    for u in &upstream.data {
        data.extend(std::iter::repeat_n(u / width as f64, width));
    }
    Tensor::new(vec![c, width], data)
}

fn linear_dims(input: &Tensor, weight: &Tensor) -> Result<(usize, usize)> {
    let n = input.dims1("linear input")?;
    let (m, wn) = weight.dims2("linear weight")?;
    if wn != n {
        return Err(Error::Shape(format!("linear weight expects {wn} inputs, got {n}")));
    }
    Ok((m, n))
}

pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = linear_dims(input, weight)?;
    if bias.dims1("linear bias")? != m {
        return Err(Error::Shape(format!("linear bias must have {m} entries")));
    }
    Ok(Tensor::vector(
        (0..m)
            .map(|i| {
                let row = &weight.data[i * n..(i + 1) * n];
                bias.data[i] + dot(row, &input.data)
            })
            .collect(),
    ))
}

pub fn linear_backward(upstream: &Tensor, input: &Tensor, weight: &Tensor) -> Result<LayerGrads> {
    let (m, n) = linear_dims(input, weight)?;
    let gx = linear_input_grad(upstream, weight)?;
    let mut gw = vec![0.0; m * n];
    for (i, grow) in gw.chunks_mut(n).enumerate() {
        let u = upstream.data[i];
        for (g, x) in grow.iter_mut().zip(&input.data) {
            *g = u * x;
        }
    }
    Ok(LayerGrads { input: gx, weight: Tensor::new(vec![m, n], gw)?, bias: upstream.clone() })
}

/// `Wᵀ · upstream`, the input half of [`linear_backward`].
pub fn linear_input_grad(upstream: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let (m, n) = weight.dims2("linear weight")?;
    if upstream.dims1("linear upstream")? != m {
        return Err(Error::Shape(format!("linear upstream must have {m} entries")));
    }
    let mut gx = vec![0.0; n];
    for (u, row) in upstream.data.iter().zip(weight.data.chunks(n)) {
        if *u != 0.0 {
            for (g, w) in gx.iter_mut().zip(row) {
                *g += u * w;
            }
        }
    }
    Ok(Tensor::vector(gx))
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|v| sigmoid_scalar(*v)).collect(),
    }
}

/// Takes the saved forward output `s`; returns `upstream * s * (1 - s)`.
pub fn sigmoid_backward(upstream: &Tensor, output: &Tensor) -> Result<Tensor> {
    same_shape(upstream, output, "sigmoid")?;
    Ok(Tensor {
        shape: output.shape.clone(),
        data: upstream
            .data
            .iter()
            .zip(&output.data)
            .map(|(u, s)| u * s * (1.0 - s))
            .collect(),
    })
}

/// Inverted dropout. Returns the output and, in training mode, the mask of
/// per-element multipliers (0 or `1 / (1 - rate)`).
pub fn dropout(input: &Tensor, rate: f64, training: bool, rng: &mut impl Rng) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor { shape: input.shape.clone(), data }, Some(mask)))
}

pub fn dropout_backward(upstream: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => upstream.clone(),
        Some(mask) => Tensor {
            shape: upstream.shape.clone(),
            data: upstream.data.iter().zip(mask).map(|(u, m)| u * m).collect(),
        },
    }
}
