//! The siamese 1-D CNN with channel attention, its contrastive loss and the
//! checkpoint format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::layers::{
    conv1d_backward, conv1d_forward, conv1d_param_grads, dot, conv_out_len, dropout, dropout_backward, gap1d, gap1d_backward,
    linear_backward, linear_forward, linear_input_grad, relu, relu_backward, sigmoid, sigmoid_backward, Tensor,
};
use crate::rppg::RppgSignal;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PKIN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// How the pair distance enters the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossForm {
    /// `d = ‖f_p − f_c‖`, hinge on `τ − d`.
    #[default]
    Standard,
    /// `d = ‖f_p − f_c‖²` substituted into the same expression.
    Literal,
}

impl fmt::Display for LossForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossForm::Standard => "standard",
            LossForm::Literal => "literal",
        })
    }
}

impl FromStr for LossForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(LossForm::Standard),
            "literal" => Ok(LossForm::Literal),
            _ => Err(Error::Config(format!("unknown loss form {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub input_len: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub attn_reduction: usize,
    pub fc_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub margin: f64,
    pub attention: bool,
    pub loss: LossForm,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 100,
            input_len: 125,
            conv_channels: vec![32, 64],
            kernel: 5,
            stride: 1,
            attn_reduction: 8,
            fc_dims: vec![256, 128, 64],
            dropout_rate: 0.1,
            margin: 1.0,
            attention: true,
            loss: LossForm::Standard,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 {
            return bad("in_channels must be >= 1".into());
        }
        if self.conv_channels.len() != 2 || self.conv_channels.contains(&0) {
            return bad(format!("conv_channels must be two positive widths, got {:?}", self.conv_channels));
        }
        if self.kernel < 3 || self.kernel % 2 == 0 {
            return bad(format!("kernel must be odd and >= 3, got {}", self.kernel));
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.attn_reduction == 0 || self.conv_channels[1] / self.attn_reduction == 0 {
            return bad(format!(
                "attn_reduction {} leaves no hidden units for {} channels",
                self.attn_reduction, self.conv_channels[1]
            ));
        }
        if self.fc_dims.len() != 3 || self.fc_dims.contains(&0) {
            return bad(format!("fc_dims must be three positive widths, got {:?}", self.fc_dims));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        let w1 = self.input_len.checked_sub(self.kernel).map(|d| d / self.stride + 1);
        match w1.and_then(|w| w.checked_sub(self.kernel)) {
            Some(_) => Ok(()),
            None => bad(format!("input_len {} too short for two kernels of {}", self.input_len, self.kernel)),
        }
    }

    /// Spatial lengths after the first and second convolution.
    pub fn conv_lens(&self) -> (usize, usize) {
        let w1 = conv_out_len(self.input_len, self.kernel, self.stride);
        (w1, conv_out_len(w1, self.kernel, self.stride))
    }

    pub fn flatten_len(&self) -> usize {
        self.conv_channels[1] * self.conv_lens().1
    }

    pub fn embedding_len(&self) -> usize {
        self.fc_dims[2]
    }

    fn attn_hidden(&self) -> usize {
        self.conv_channels[1] / self.attn_reduction
    }

    /// Parameter names and shapes in declaration order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let [c1, c2] = [self.conv_channels[0], self.conv_channels[1]];
        let k = self.kernel;
        let mut out = vec![
            ("conv1.weight".to_string(), vec![c1, self.in_channels, k]),
            ("conv1.bias".to_string(), vec![c1]),
            ("conv2.weight".to_string(), vec![c2, c1, k]),
            ("conv2.bias".to_string(), vec![c2]),
        ];
        if self.attention {
            let h = self.attn_hidden();
            out.push(("attn.a.weight".into(), vec![h, c2]));
            out.push(("attn.a.bias".into(), vec![h]));
            out.push(("attn.b.weight".into(), vec![c2, h]));
            out.push(("attn.b.bias".into(), vec![c2]));
        }
        let mut n = self.flatten_len();
        for (i, &m) in self.fc_dims.iter().enumerate() {
            out.push((format!("fc{}.weight", i + 1), vec![m, n]));
            out.push((format!("fc{}.bias", i + 1), vec![m]));
            n = m;
        }
        out
    }

    fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("in_channels", self.in_channels.to_string()),
            ("input_len", self.input_len.to_string()),
            ("conv_channels", list(&self.conv_channels)),
            ("kernel", self.kernel.to_string()),
            ("stride", self.stride.to_string()),
            ("attn_reduction", self.attn_reduction.to_string()),
            ("fc_dims", list(&self.fc_dims)),
            ("dropout_rate", format!("{:?}", self.dropout_rate)),
            ("margin", format!("{:?}", self.margin)),
            ("attention", self.attention.to_string()),
            ("loss", self.loss.to_string()),
        ]
    }

    fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        fn get<'a>(p: &'a BTreeMap<String, String>, k: &str) -> Result<&'a str> {
            p.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("checkpoint config lacks {k}")))
        }
        fn num<T: FromStr>(p: &BTreeMap<String, String>, k: &str) -> Result<T> {
            get(p, k)?
                .parse()
                .map_err(|_| Error::Config(format!("checkpoint config {k} is not a number")))
        }
        fn list(p: &BTreeMap<String, String>, k: &str) -> Result<Vec<usize>> {
            get(p, k)?
                .split(',')
                .map(|s| s.parse().map_err(|_| Error::Config(format!("checkpoint config {k} is malformed"))))
                .collect()
        }
        let attention = match get(pairs, "attention")? {
            "true" => true,
            "false" => false,
            other => return Err(Error::Config(format!("checkpoint attention flag {other:?}"))),
        };
        let cfg = Self {
            in_channels: num(pairs, "in_channels")?,
            input_len: num(pairs, "input_len")?,
            conv_channels: list(pairs, "conv_channels")?,
            kernel: num(pairs, "kernel")?,
            stride: num(pairs, "stride")?,
            attn_reduction: num(pairs, "attn_reduction")?,
            fc_dims: list(pairs, "fc_dims")?,
            dropout_rate: num(pairs, "dropout_rate")?,
            margin: num(pairs, "margin")?,
            attention,
            loss: get(pairs, "loss")?.parse()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// All network weights; both siamese branches read this one set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform init in `±1/√fan_in` for weights and biases alike.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut bound = 0.0;
        for (name, shape) in config.layout() {
            if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                bound = 1.0 / (fan_in as f64).sqrt();
            }
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            tensors.push(Tensor::new(shape, data)?);
            names.push(name);
        }
        Ok(Self { config: config.clone(), names, tensors })
    }

    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", layout.len(), tensors.len())));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
        }
        Ok(Self {
            config: config.clone(),
            names: layout.into_iter().map(|(n, _)| n).collect(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect()
    }

    pub fn gradients(&self) -> Gradients {
        Gradients { tensors: self.zeros_like(), outer: vec![Vec::new(); self.tensors.len()] }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    fn fc_base(&self) -> usize {
        if self.config.attention {
            8
        } else {
            4
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.in_channels, self.config.input_len];
        if x.shape() != want {
            return Err(Error::Shape(format!("network expects input {want:?}, got {:?}", x.shape())));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, mut rng: Option<&mut dyn RngCore>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let p = &self.tensors;
        let s = self.config.stride;
        let y1 = conv1d_forward(x, &p[0], &p[1], s)?;
        let h1 = relu(&y1);
        let y2 = conv1d_forward(&h1, &p[2], &p[3], s)?;
        let h2 = relu(&y2);
        let (z, attn) = if self.config.attention {
            let (z, cache) = attend(&h2, &p[4..8])?;
            (z, Some(cache))
        } else {
            (h2.clone(), None)
        };
        let flat = Tensor::vector(z.data().to_vec());
        let b = self.fc_base();
        let rate = self.config.dropout_rate;
        let mut drop = |t: &Tensor| -> Result<(Tensor, Option<Vec<f64>>)> {
            match rng.as_deref_mut() {
                Some(r) => dropout(t, rate, true, &mut &mut *r),
                None => Ok((t.clone(), None)),
            }
        };
        let a1 = linear_forward(&flat, &p[b], &p[b + 1])?;
        let (d1, mask1) = drop(&relu(&a1))?;
        let a2 = linear_forward(&d1, &p[b + 2], &p[b + 3])?;
        let (d2, mask2) = drop(&relu(&a2))?;
        let out = linear_forward(&d2, &p[b + 4], &p[b + 5])?;
        Ok(ForwardCache { x: x.clone(), y1, h1, y2, h2, attn, flat, a1, mask1, d1, a2, mask2, d2, out })
    }

    /// Evaluation-mode embedding of a `C × W` input.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(x, None)?.out)
    }

    /// Training-mode forward pass; dropout masks are drawn from `rng`.
    pub fn forward_train(&self, x: &Tensor, rng: &mut dyn RngCore) -> Result<ForwardCache> {
        self.run(x, Some(rng))
    }

    /// Evaluation-mode forward keeping the cache, for gradient checks.
    pub fn forward_eval(&self, x: &Tensor) -> Result<ForwardCache> {
        self.run(x, None)
    }

    /// Accumulates parameter gradients of `upstream · ∂embedding` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor, grads: &mut Gradients) -> Result<()> {
        if grads.tensors.len() != self.tensors.len() {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
        let p = &self.tensors;
        let s = self.config.stride;
        let b = self.fc_base();
        let mut fc = |idx: usize, up: &Tensor, input: &Tensor| -> Result<Tensor> {
            grads.outer[idx].push((up.data().to_vec(), input.data().to_vec()));
            grads.tensors[idx + 1].add_assign(up)?;
            linear_input_grad(up, &p[idx])
        };
        let g3 = fc(b + 4, upstream, &cache.d2)?;
        let da2 = relu_backward(&dropout_backward(&g3, cache.mask2.as_deref()), &cache.a2)?;
        let g2 = fc(b + 2, &da2, &cache.d1)?;
        let da1 = relu_backward(&dropout_backward(&g2, cache.mask1.as_deref()), &cache.a1)?;
        let g1 = fc(b, &da1, &cache.flat)?;
        let grads = &mut grads.tensors;
        let dz = g1.reshape(cache.h2.shape().to_vec())?;
        let dh2 = match &cache.attn {
            Some(attn) => attend_backward(&dz, &cache.h2, attn, &p[4..8], &mut grads[4..8])?,
            None => dz,
        };
        let dy2 = relu_backward(&dh2, &cache.y2)?;
        let gc2 = conv1d_backward(&dy2, &cache.h1, &p[2], s)?;
        grads[2].add_assign(&gc2.weight)?;
        grads[3].add_assign(&gc2.bias)?;
        let dy1 = relu_backward(&gc2.input, &cache.y1)?;
        let (gw1, gb1) = conv1d_param_grads(&dy1, &cache.x, &p[0], s)?;
        grads[0].add_assign(&gw1)?;
        grads[1].add_assign(&gb1)?;
        Ok(())
    }

    /// Attention weights for a post-conv feature map (`None` when disabled).
    pub fn attention_weights(&self, x: &Tensor) -> Result<Option<Tensor>> {
        Ok(self.run(x, None)?.attn.map(|a| a.w))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let pairs = self.config.to_pairs();
        out.extend_from_slice(&(pairs.len() as u32).to_le_bytes());
        for (k, v) in pairs {
            put_str(&mut out, k);
            put_str(&mut out, &v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.names.iter().zip(&self.tensors) {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "not a pulsekin checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(0, format!("unsupported checkpoint version {version}")));
        }
        let mut pairs = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            pairs.insert(k, v);
        }
        let config = ModelConfig::from_pairs(&pairs)?;
        let layout = config.layout();
        let count = r.u32()? as usize;
        if count != layout.len() {
            return Err(Error::format(0, format!("checkpoint holds {count} tensors, config needs {}", layout.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in &layout {
            let got = r.string()?;
            if &got != name {
                return Err(Error::format(0, format!("expected tensor {name}, found {got}")));
            }
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &dims != shape {
                return Err(Error::Shape(format!("{name}: checkpoint shape {dims:?}, config needs {shape:?}")));
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Tensor::new(dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::format(0, "trailing bytes after checkpoint tensors"));
        }
        Self::from_tensors(&config, tensors)
    }
}

/// Gradients summed over a batch. Fully connected weight gradients are held
/// as `(upstream, input)` factors and expanded in [`Gradients::finish`], so
/// each weight row is written once per batch rather than once per sample.
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Tensor>,
    outer: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl Gradients {
    pub fn finish(mut self) -> Vec<Tensor> {
        for (t, terms) in self.tensors.iter_mut().zip(&self.outer) {
            let Some(n) = terms.first().map(|(_, x)| x.len()) else { continue };
            for (i, row) in t.data_mut().chunks_mut(n).enumerate() {
                for (u, x) in terms {
                    let ui = u[i];
                    if ui != 0.0 {
                        for (w, xv) in row.iter_mut().zip(x) {
                            *w += ui * xv;
                        }
                    }
                }
            }
        }
        self.tensors
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(0, "checkpoint truncated")),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format(0, "checkpoint string is not UTF-8"))
    }
}

/// Intermediates saved by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Tensor,
    y1: Tensor,
    h1: Tensor,
    y2: Tensor,
    h2: Tensor,
    attn: Option<AttnCache>,
    flat: Tensor,
    a1: Tensor,
    mask1: Option<Vec<f64>>,
    d1: Tensor,
    a2: Tensor,
    mask2: Option<Vec<f64>>,
    d2: Tensor,
    out: Tensor,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        &self.out
    }

    /// Sign of every ReLU input. Two passes with equal patterns lie on the
    /// same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let attn = self.attn.as_ref().map(|a| a.a.data()).unwrap_or(&[]);
        [self.y1.data(), self.y2.data(), attn, self.a1.data(), self.a2.data()]
            .into_iter()
            .flatten()
            .map(|v| *v > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    g: Tensor,
    a: Tensor,
    ha: Tensor,
    w: Tensor,
}

/// `z[c, t] = feature[c, t] · w[c]` with `w = σ(FC_b(ReLU(FC_a(gap(feature)))))`.
/// `params` are `[a.weight, a.bias, b.weight, b.bias]`.
pub fn channel_attention(feature: &Tensor, params: &[Tensor]) -> Result<Tensor> {
    Ok(attend(feature, params)?.0)
}

fn attend(feature: &Tensor, params: &[Tensor]) -> Result<(Tensor, AttnCache)> {
    let g = gap1d(feature)?;
    let a = linear_forward(&g, &params[0], &params[1])?;
    let ha = relu(&a);
    let w = sigmoid(&linear_forward(&ha, &params[2], &params[3])?);
    let width = feature.shape()[1];
    let mut z = feature.clone();
    for (c, row) in z.data_mut().chunks_mut(width).enumerate() {
        let wc = w.data()[c];
        row.iter_mut().for_each(|v| *v *= wc);
    }
    Ok((z, AttnCache { g, a, ha, w }))
}

/// Gradient of the attention block with respect to its input feature map;
/// parameter gradients are accumulated into `grads`.
pub fn channel_attention_backward(
    upstream: &Tensor,
    feature: &Tensor,
    params: &[Tensor],
    grads: &mut [Tensor],
) -> Result<Tensor> {
    let (_, cache) = attend(feature, params)?;
    attend_backward(upstream, feature, &cache, params, grads)
}

fn attend_backward(
    dz: &Tensor,
    feature: &Tensor,
    cache: &AttnCache,
    params: &[Tensor],
    grads: &mut [Tensor],
) -> Result<Tensor> {
    if dz.shape() != feature.shape() {
        return Err(Error::Shape(format!("attention upstream {:?} vs feature {:?}", dz.shape(), feature.shape())));
    }
    let width = feature.shape()[1];
    let mut dfeat = dz.clone();
    let mut dw = vec![0.0; cache.w.len()];
    for (c, (drow, frow)) in dfeat.data_mut().chunks_mut(width).zip(feature.data().chunks(width)).enumerate() {
        let wc = cache.w.data()[c];
        dw[c] = dot(drow, frow);
        drow.iter_mut().for_each(|v| *v *= wc);
    }
    let ds = sigmoid_backward(&Tensor::vector(dw), &cache.w)?;
    let gb = linear_backward(&ds, &cache.ha, &params[2])?;
    grads[2].add_assign(&gb.weight)?;
    grads[3].add_assign(&gb.bias)?;
    let da = relu_backward(&gb.input, &cache.a)?;
    let ga = linear_backward(&da, &cache.g, &params[0])?;
    grads[0].add_assign(&ga.weight)?;
    grads[1].add_assign(&ga.bias)?;
    dfeat.add_assign(&gap1d_backward(&ga.input, width)?)?;
    Ok(dfeat)
}

/// Loss of a single pair and its gradients with respect to both embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub distance: f64,
    pub grad_p: Tensor,
    pub grad_c: Tensor,
}

/// `l·d² + (1 − l)·max(τ − d, 0)²`. At `d = 0` the hinge gradient has no
/// direction and is taken as zero.
pub fn contrastive_loss(fp: &Tensor, fc: &Tensor, kin: bool, margin: f64, form: LossForm) -> Result<PairLoss> {
    if fp.shape() != fc.shape() {
        return Err(Error::Shape(format!("embeddings {:?} vs {:?}", fp.shape(), fc.shape())));
    }
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    let diff: Vec<f64> = fp.data().iter().zip(fc.data()).map(|(a, b)| a - b).collect();
    let sq: f64 = diff.iter().map(|v| v * v).sum();
    let norm = sq.sqrt();
    // d and ∂d/∂diff as a scale on diff.
    let (d, dd_scale) = match form {
        LossForm::Standard => (norm, if norm > 0.0 { 1.0 / norm } else { 0.0 }),
        LossForm::Literal => (sq, 2.0),
    };
    let (loss, dl_dd) = if kin {
        (d * d, 2.0 * d)
    } else if d < margin {
        let gap = margin - d;
        (gap * gap, -2.0 * gap)
    } else {
        (0.0, 0.0)
    };
    let scale = dl_dd * dd_scale;
    let grad_p: Vec<f64> = diff.iter().map(|v| scale * v).collect();
    let grad_c: Vec<f64> = grad_p.iter().map(|v| -v).collect();
    Ok(PairLoss {
        loss,
        distance: norm,
        grad_p: Tensor::new(fp.shape().to_vec(), grad_p)?,
        grad_c: Tensor::new(fc.shape().to_vec(), grad_c)?,
    })
}

/// Euclidean distance between two embeddings.
pub fn embedding_distance(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn signal_tensor(signal: &RppgSignal) -> Result<Tensor> {
    Tensor::new(vec![signal.channels(), signal.length()], signal.data().to_vec())
}

/// Two signals and their kin label.
#[derive(Debug, Clone, PartialEq)]
pub struct KinPair {
    pub p: RppgSignal,
    pub c: RppgSignal,
    pub kin: bool,
}

impl KinPair {
    pub fn new(p: RppgSignal, c: RppgSignal, kin: bool) -> Result<Self> {
        if p.channels() != c.channels() || p.length() != c.length() || p.method != c.method {
            return Err(Error::Shape(format!(
                "pair signals differ: {}x{} {} vs {}x{} {}",
                p.channels(),
                p.length(),
                p.method,
                c.channels(),
                c.length(),
                c.method
            )));
        }
        Ok(Self { p, c, kin })
    }
}

/// Eval-mode embedding distance; lower means more likely kin.
pub fn pair_distance(params: &ModelParams, pair: &KinPair) -> Result<f64> {
    let fp = params.embed(&signal_tensor(&pair.p)?)?;
    let fc = params.embed(&signal_tensor(&pair.c)?)?;
    Ok(embedding_distance(&fp, &fc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            in_channels: 4,
            input_len: 32,
            conv_channels: vec![4, 8],
            fc_dims: vec![16, 8, 4],
            ..Default::default()
        }
    }

    #[test]
    fn default_shapes() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.conv_lens(), (121, 117));
        assert_eq!(cfg.flatten_len(), 7488);
        let params = ModelParams::init(&cfg, 1).unwrap();
        let x = Tensor::zeros(vec![100, 125]);
        assert_eq!(params.embed(&x).unwrap().shape(), &[64]);
    }

    #[test]
    fn eval_is_deterministic_and_zero_input_is_stable() {
        let params = ModelParams::init(&tiny(), 3).unwrap();
        let x = Tensor::zeros(vec![4, 32]);
        assert_eq!(params.embed(&x).unwrap(), params.embed(&x).unwrap());
        let noisy = Tensor::new(vec![4, 32], (0..128).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        assert_eq!(params.embed(&noisy).unwrap(), params.embed(&noisy).unwrap());
    }

    #[test]
    fn wrong_input_shape() {
        let params = ModelParams::init(&tiny(), 3).unwrap();
        assert!(matches!(params.embed(&Tensor::zeros(vec![5, 32])), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_attention_halves_features() {
        let feature = Tensor::new(vec![8, 3], (0..24).map(|i| i as f64 - 7.0).collect()).unwrap();
        let params = vec![
            Tensor::zeros(vec![1, 8]),
            Tensor::zeros(vec![1]),
            Tensor::zeros(vec![8, 1]),
            Tensor::zeros(vec![8]),
        ];
        let z = channel_attention(&feature, &params).unwrap();
        for (a, b) in z.data().iter().zip(feature.data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn attention_weights_in_open_interval() {
        let params = ModelParams::init(&tiny(), 8).unwrap();
        let x = Tensor::new(vec![4, 32], (0..128).map(|i| ((i * 7 % 13) as f64 - 6.0) * 50.0).collect()).unwrap();
        let w = params.attention_weights(&x).unwrap().unwrap();
        assert!(w.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn no_attention_drops_its_parameters() {
        let cfg = ModelConfig { attention: false, ..tiny() };
        let params = ModelParams::init(&cfg, 1).unwrap();
        assert_eq!(params.tensors().len(), 10);
        assert!(params.attention_weights(&Tensor::zeros(vec![4, 32])).unwrap().is_none());
    }

    #[test]
    fn single_channel_runs() {
        let cfg = ModelConfig { in_channels: 1, ..Default::default() };
        let params = ModelParams::init(&cfg, 1).unwrap();
        assert_eq!(params.embed(&Tensor::zeros(vec![1, 125])).unwrap().len(), 64);
    }

    #[test]
    fn loss_examples() {
        let a = Tensor::vector(vec![0.3, -0.2]);
        let pos = contrastive_loss(&a, &a, true, 1.0, LossForm::Standard).unwrap();
        assert_eq!(pos.loss, 0.0);
        assert!(pos.grad_p.data().iter().all(|v| *v == 0.0));
        let far = Tensor::vector(vec![3.0, 0.0]);
        assert_eq!(contrastive_loss(&a, &far, false, 1.0, LossForm::Standard).unwrap().loss, 0.0);
        assert_eq!(contrastive_loss(&a, &a, false, 1.0, LossForm::Standard).unwrap().loss, 1.0);
    }

    #[test]
    fn literal_form_uses_fourth_power() {
        let a = Tensor::vector(vec![0.0, 0.0]);
        let b = Tensor::vector(vec![0.6, 0.8]);
        let l = contrastive_loss(&a, &b, true, 1.0, LossForm::Literal).unwrap();
        assert!((l.loss - 1.0).abs() < 1e-15);
        let b = Tensor::vector(vec![0.0, 2.0f64.sqrt()]);
        assert!((contrastive_loss(&a, &b, true, 1.0, LossForm::Literal).unwrap().loss - 4.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = ModelConfig { dropout_rate: 0.15, margin: 0.7, loss: LossForm::Literal, ..tiny() };
        let params = ModelParams::init(&cfg, 11).unwrap();
        let bytes = params.to_bytes();
        assert_eq!(&bytes[..4], b"PKIN");
        let back = ModelParams::from_bytes(&bytes).unwrap();
        assert_eq!(back, params);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let bytes = ModelParams::init(&tiny(), 1).unwrap().to_bytes();
        assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ModelParams::from_bytes(b"NOPE").is_err());
    }

    #[test]
    fn config_rules() {
        assert!(ModelConfig { kernel: 4, ..tiny() }.validate().is_err());
        assert!(ModelConfig { fc_dims: vec![4, 4], ..tiny() }.validate().is_err());
        assert!(ModelConfig { margin: 0.0, ..tiny() }.validate().is_err());
        assert!(ModelConfig { input_len: 8, ..tiny() }.validate().is_err());
        assert!(ModelConfig { attn_reduction: 16, ..tiny() }.validate().is_err());
    }
}
