//! Converting convolutional networks with smooth activations into Volterra
//! operators.
//!
//! An activation is replaced by its Taylor polynomial about a centre `a`,
//! `sum_k c_k (y - a)^k`, rewritten in powers of `y`. Each layer is then a
//! Volterra operator acting on the previous layer's output, and the network
//! operator is their composition, truncated at a chosen order.

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::algebra::{combine_nm_with_caps, fc_as_conv, inception_merge, residual_adjust_at, Caps};
use crate::conv::{add_tail_aligned, conv1, VolterraOperator};
use crate::error::{arg_err, shape_err, Result, VolterraError};
use crate::outer::oconv_diag;
use crate::tensor::Tensor;

/// Most Taylor coefficients an activation may carry.
pub const MAX_TAYLOR_TERMS: usize = 9;
/// Largest truncation order for a single conv-activation-conv block expanded at 0.
pub const MAX_ORDER_AT_ZERO: usize = 5;
/// Largest truncation order for a block expanded at a non-zero centre.
pub const MAX_ORDER_OFF_ZERO: usize = 4;
/// Default sharpness of the smooth ReLU `ln(1 + e^(b x)) / b`.
pub const DEFAULT_RELU_SHARPNESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    /// `ln(1 + e^(b x)) / b`, a smooth stand-in for ReLU.
    SoftplusRelu { sharpness: f64 },
}

impl ActivationKind {
    pub fn parse(name: &str, sharpness: Option<f64>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" | "softplus" | "softplus_relu" => Ok(ActivationKind::SoftplusRelu {
                sharpness: sharpness.unwrap_or(DEFAULT_RELU_SHARPNESS),
            }),
            _ => Err(VolterraError::Unknown {
                kind: "activation",
                name: name.to_string(),
            }),
        }
    }

    /// Exact activation value.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::SoftplusRelu { sharpness: b } => softplus(b * x) / b,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `P'(u) * q(u)` for polynomials stored lowest degree first.
fn derive_times(p: &[f64], q: &[f64]) -> Vec<f64> {
    let dp: Vec<f64> = p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
    let mut out = vec![0.0; (dp.len() + q.len()).max(1)];
    for (i, a) in dp.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn horner(p: &[f64], u: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// First `terms` Taylor coefficients of `f` where `f' = q(f)`, evaluated at a
/// point where `f = u`. The k-th derivative is a polynomial in `f` obtained by
/// repeated differentiation.
fn taylor_from_riccati(q: &[f64], u: f64, terms: usize) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    let mut fact = 1.0;
    let mut out = Vec::with_capacity(terms);
    for k in 0..terms {
        if k > 0 {
            fact *= k as f64;
        }
        out.push(horner(&p, u) / fact);
        p = derive_times(&p, q);
    }
    out
}

/// Taylor expansion of an activation about a centre.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTaylor {
    pub kind: ActivationKind,
    pub center: f64,
    /// `coeffs[k]` multiplies `(y - center)^k`.
    pub coeffs: Vec<f64>,
}

impl ActivationTaylor {
    /// Coefficients `c_0 .. c_{order}` (so `order + 1` terms, at most
    /// [`MAX_TAYLOR_TERMS`] plus the constant).
    pub fn new(kind: ActivationKind, center: f64, order: usize) -> Result<Self> {
        if order == 0 || order > MAX_TAYLOR_TERMS {
            return arg_err(format!("Taylor order {order} outside 1..={MAX_TAYLOR_TERMS}"));
        }
        if !center.is_finite() {
            return arg_err("centre must be finite");
        }
        let terms = order + 1;
        let coeffs = match kind {
            ActivationKind::Sigmoid => taylor_from_riccati(&[0.0, 1.0, -1.0], sigmoid(center), terms),
            ActivationKind::Tanh => taylor_from_riccati(&[1.0, 0.0, -1.0], center.tanh(), terms),
            ActivationKind::SoftplusRelu { sharpness: b } => {
                if !(b > 0.0 && b.is_finite()) {
                    return arg_err("smooth ReLU sharpness must be positive");
                }
                // f' = sigmoid(b x), so f^(k) = b^(k-1) sigmoid^(k-1)(b x).
                let s = taylor_from_riccati(&[0.0, 1.0, -1.0], sigmoid(b * center), terms - 1);
                let mut c = vec![softplus(b * center) / b];
                for k in 1..terms {
                    // s[k-1] = sigmoid^(k-1) / (k-1)!, so divide by k for 1/k!.
                    c.push(b.powi(k as i32 - 1) * s[k - 1] / k as f64);
                }
                c
            }
        };
        Ok(ActivationTaylor { kind, center, coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficients of the same polynomial in powers of `y`:
    /// `a_i = sum_{k>=i} c_k C(k, i) (-center)^(k-i)`.
    pub fn monomial_coeffs(&self) -> Vec<f64> {
        let k_max = self.coeffs.len();
        (0..k_max)
            .map(|i| {
                (i..k_max)
                    .map(|k| self.coeffs[k] * binom(k, i) * (-self.center).powi((k - i) as i32))
                    .sum()
            })
            .collect()
    }

    /// Value of the truncated expansion at `y`.
    pub fn eval_poly(&self, y: f64) -> f64 {
        horner(&self.coeffs, y - self.center)
    }

    /// The activation as a pointwise Volterra operator on 1-D signals.
    pub fn as_operator(&self) -> VolterraOperator {
        let a = self.monomial_coeffs();
        let kernels: Vec<Tensor> = a
            .iter()
            .enumerate()
            .map(|(k, &c)| if k == 0 { Tensor::scalar(c) } else { Tensor::full(&vec![1; k], c) })
            .collect();
        VolterraOperator::new(kernels, 1, 1, 0).expect("pointwise kernels are well formed")
    }
}

pub(crate) fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Operator of `g * act(h * x)` truncated at order `n`, both convolutions with
/// unit stride and no padding.
///
/// `H_0 = a_0 sum(g)` and `H_k = a_k diag(k, g) (*) h^k`, where `a_k` are the
/// activation coefficients in powers of its input.
pub fn conv_act_conv(g: &Tensor, h: &Tensor, act: &ActivationTaylor, n: usize) -> Result<VolterraOperator> {
    let cap = if act.center == 0.0 { MAX_ORDER_AT_ZERO } else { MAX_ORDER_OFF_ZERO };
    if n > cap {
        return Err(VolterraError::CapExceeded(format!(
            "truncation order {n} exceeds {cap} for centre {}",
            act.center
        )));
    }
    if g.rank() != 1 || h.rank() != 1 {
        return shape_err("conv-activation-conv kernels must be 1-D");
    }
    let a = act.monomial_coeffs();
    let mut kernels = vec![Tensor::scalar(a[0] * g.sum())];
    for k in 1..=n {
        let ak = a.get(k).copied().unwrap_or(0.0);
        let hs = vec![h; k];
        kernels.push(oconv_diag(g, &hs, 1)?.scale(ak));
    }
    VolterraOperator::with_footprint(kernels, 1, vec![g.len() + h.len() - 1], 1, 0)
}

/// One layer of a 1-D network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Kernel of shape `(out_channels, in_channels, extent)`.
    Conv1d {
        kernel: Tensor,
        bias: Vec<f64>,
        stride: usize,
        pad: usize,
    },
    Activation(ActivationTaylor),
    /// `inner(x) + x`; the inner block must preserve signal length.
    Residual { inner: Vec<Layer> },
    /// `g * (sum_i h_i * x)` with branches aligned at index 0.
    Inception { g: Tensor, branches: Vec<Tensor> },
    /// `W x + b` on a single-channel signal of length `W.cols`.
    Fc { w: Tensor, bias: Vec<f64> },
}

/// A feed-forward 1-D network with a single input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<Layer>,
    /// Input length, required when a fully connected layer is present.
    pub input_length: Option<usize>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<Layer>) -> Self {
        NetworkSpec {
            layers,
            input_length: None,
        }
    }

    /// Parse the JSON description. Kernel fields may hold numbers, nested
    /// arrays or `"@file.vten"` references resolved against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let layers = v
            .get("layers")
            .and_then(Value::as_array)
            .ok_or_else(|| VolterraError::Network("missing `layers` array".into()))?;
        let input_length = match v.get("input_length") {
            None | Some(Value::Null) => None,
            Some(x) => Some(as_usize(x, "input_length")?),
        };
        Ok(NetworkSpec {
            layers: parse_layers(layers, base_dir)?,
            input_length,
        })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_json_str(&text, &base)
    }

    /// Direct evaluation with exact activations. Returns one tensor per
    /// output channel.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        if x.rank() != 1 {
            return shape_err("network input must be a 1-D signal");
        }
        forward_layers(&self.layers, vec![x.clone()])
    }

    /// Direct evaluation of a single-output network.
    pub fn forward_single(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = self.forward(x)?;
        if out.len() != 1 {
            return shape_err(format!("network has {} output channels", out.len()));
        }
        Ok(out.remove(0))
    }

    /// Layer geometries of the convolutional layers, in order.
    pub fn conv_geometries(&self) -> Vec<crate::conv::Geometry> {
        fn walk(layers: &[Layer], out: &mut Vec<crate::conv::Geometry>) {
            for l in layers {
                match l {
                    Layer::Conv1d { kernel, stride, pad, .. } => out.push(crate::conv::Geometry {
                        kernel: kernel.shape()[2],
                        stride: *stride,
                        pad: *pad,
                    }),
                    Layer::Residual { inner } => {
                        let mut tmp = Vec::new();
                        walk(inner, &mut tmp);
                        let geo = crate::conv::composed_geometry(&tmp).unwrap_or(crate::conv::Geometry::IDENTITY);
                        out.push(geo);
                    }
                    Layer::Inception { g, branches } => {
                        let longest = branches.iter().map(Tensor::len).max().unwrap_or(1);
                        out.push(crate::conv::Geometry {
                            kernel: g.len() + longest - 1,
                            stride: 1,
                            pad: 0,
                        });
                    }
                    Layer::Fc { w, .. } => out.push(crate::conv::Geometry {
                        kernel: w.shape()[1],
                        stride: 1,
                        pad: 0,
                    }),
                    Layer::Activation(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.layers, &mut out);
        out
    }
}

fn forward_layers(layers: &[Layer], mut chans: Vec<Tensor>) -> Result<Vec<Tensor>> {
    for layer in layers {
        chans = match layer {
            Layer::Conv1d { kernel, bias, stride, pad } => {
                let (co, ci, z) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
                if ci != chans.len() {
                    return shape_err(format!("conv expects {ci} channels, got {}", chans.len()));
                }
                let mut out = Vec::with_capacity(co);
                for d in 0..co {
                    let mut acc: Option<Tensor> = None;
                    for (u, x) in chans.iter().enumerate() {
                        let k = Tensor::vector(kernel.data()[(d * ci + u) * z..(d * ci + u + 1) * z].to_vec());
                        let y = conv1(&k, x, *stride, *pad)?;
                        acc = Some(match acc {
                            None => y,
                            Some(a) => a.add(&y)?,
                        });
                    }
                    out.push(acc.expect("at least one channel").map(|v| v + bias[d]));
                }
                out
            }
            Layer::Activation(act) => chans.iter().map(|c| c.map(|v| act.kind.eval(v))).collect(),
            Layer::Residual { inner } => {
                let y = forward_layers(inner, chans.clone())?;
                if y.len() != chans.len() {
                    return shape_err("residual block changes the channel count");
                }
                y.iter().zip(&chans).map(|(a, b)| a.add(b)).collect::<Result<_>>()?
            }
            Layer::Inception { g, branches } => {
                let mut sum = branches[0].clone();
                for b in &branches[1..] {
                    sum = add_tail_aligned(&sum, b)?;
                }
                chans
                    .iter()
                    .map(|c| conv1(g, &conv1(&sum, c, 1, 0)?, 1, 0))
                    .collect::<Result<_>>()?
            }
            Layer::Fc { w, bias } => {
                if chans.len() != 1 {
                    return shape_err("fully connected layer expects a single channel");
                }
                let (rows, cols) = (w.shape()[0], w.shape()[1]);
                let x = &chans[0];
                if x.len() != cols {
                    return shape_err(format!("fully connected layer expects length {cols}, got {}", x.len()));
                }
                (0..rows)
                    .map(|r| {
                        let v: f64 = (0..cols).map(|j| w.data()[r * cols + j] * x.data()[j]).sum();
                        Tensor::vector(vec![v + bias[r]])
                    })
                    .collect()
            }
        };
    }
    Ok(chans)
}

fn as_usize(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| VolterraError::Network(format!("`{what}` must be a non-negative integer")))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| VolterraError::Network(format!("`{what}` must be a number")))
}

/// Numbers, nested arrays or an `@file` reference as a tensor.
fn parse_tensor(v: &Value, base: &Path, what: &str) -> Result<Tensor> {
    if let Some(s) = v.as_str() {
        let Some(file) = s.strip_prefix('@') else {
            return Err(VolterraError::Network(format!("`{what}`: strings must be `@file` references")));
        };
        return Tensor::load(base.join(file));
    }
    fn shape_of(v: &Value, shape: &mut Vec<usize>) -> Result<()> {
        if let Some(a) = v.as_array() {
            if a.is_empty() {
                return Err(VolterraError::Network("empty array".into()));
            }
            shape.push(a.len());
            shape_of(&a[0], shape)?;
        }
        Ok(())
    }
    fn collect(v: &Value, depth: usize, shape: &[usize], out: &mut Vec<f64>) -> Result<()> {
        match v.as_array() {
            Some(a) => {
                if depth >= shape.len() || a.len() != shape[depth] {
                    return Err(VolterraError::Network("ragged array".into()));
                }
                for x in a {
                    collect(x, depth + 1, shape, out)?;
                }
            }
            None => {
                if depth != shape.len() {
                    return Err(VolterraError::Network("ragged array".into()));
                }
                out.push(as_f64(v, "tensor entry")?);
            }
        }
        Ok(())
    }
    let mut shape = Vec::new();
    shape_of(v, &mut shape)?;
    let mut data = Vec::new();
    collect(v, 0, &shape, &mut data)?;
    Tensor::new(shape, data)
}

fn parse_bias(v: Option<&Value>, n: usize, what: &str) -> Result<Vec<f64>> {
    match v {
        None | Some(Value::Null) => Ok(vec![0.0; n]),
        Some(Value::Number(x)) => Ok(vec![x.as_f64().unwrap_or(0.0); n]),
        Some(Value::Array(a)) => {
            if a.len() != n {
                return Err(VolterraError::Network(format!("`{what}` needs {n} entries")));
            }
            a.iter().map(|x| as_f64(x, what)).collect()
        }
        Some(_) => Err(VolterraError::Network(format!("`{what}` must be a number or array"))),
    }
}

fn parse_layers(layers: &[Value], base: &Path) -> Result<Vec<Layer>> {
    layers.iter().map(|l| parse_layer(l, base)).collect()
}

fn parse_layer(l: &Value, base: &Path) -> Result<Layer> {
    let ty = l
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| VolterraError::Network("layer without `type`".into()))?;
    let norm = ty.to_ascii_lowercase().replace(['_', '-'], "");
    match norm.as_str() {
        "conv1d" | "conv" => {
            let k = parse_tensor(
                l.get("kernel").ok_or_else(|| VolterraError::Network("conv1d without `kernel`".into()))?,
                base,
                "kernel",
            )?;
            let kernel = match k.rank() {
                1 => k.reshape(&[1, 1, k.len()])?,
                3 => k,
                r => return Err(VolterraError::Network(format!("conv1d kernel of rank {r}"))),
            };
            let stride = l.get("stride").map(|v| as_usize(v, "stride")).transpose()?.unwrap_or(1);
            let pad = l.get("pad").map(|v| as_usize(v, "pad")).transpose()?.unwrap_or(0);
            if stride == 0 {
                return Err(VolterraError::InvalidGeometry("stride must be positive".into()));
            }
            let bias = parse_bias(l.get("bias"), kernel.shape()[0], "bias")?;
            Ok(Layer::Conv1d { kernel, bias, stride, pad })
        }
        "activation" => {
            let kind = l.get("kind").and_then(Value::as_str).unwrap_or("sigmoid");
            let sharp = l.get("alpha").map(|v| as_f64(v, "alpha")).transpose()?;
            let center = l.get("center").map(|v| as_f64(v, "center")).transpose()?.unwrap_or(0.0);
            let order = l.get("order").map(|v| as_usize(v, "order")).transpose()?.unwrap_or(5);
            Ok(Layer::Activation(ActivationTaylor::new(ActivationKind::parse(kind, sharp)?, center, order)?))
        }
        "residual" => {
            let inner = l
                .get("inner")
                .and_then(Value::as_array)
                .ok_or_else(|| VolterraError::Network("residual without `inner` array".into()))?;
            Ok(Layer::Residual {
                inner: parse_layers(inner, base)?,
            })
        }
        "inception" => {
            let g = parse_tensor(
                l.get("g").ok_or_else(|| VolterraError::Network("inception without `g`".into()))?,
                base,
                "g",
            )?;
            let branches = l
                .get("branches")
                .and_then(Value::as_array)
                .ok_or_else(|| VolterraError::Network("inception without `branches`".into()))?
                .iter()
                .map(|b| parse_tensor(b, base, "branch"))
                .collect::<Result<Vec<_>>>()?;
            if g.rank() != 1 || branches.is_empty() || branches.iter().any(|b| b.rank() != 1) {
                return Err(VolterraError::Network("inception kernels must be 1-D and non-empty".into()));
            }
            Ok(Layer::Inception { g, branches })
        }
        "fc" | "dense" | "linear" => {
            let w = parse_tensor(
                l.get("W").or_else(|| l.get("w")).ok_or_else(|| VolterraError::Network("fc without `W`".into()))?,
                base,
                "W",
            )?;
            if w.rank() != 2 {
                return Err(VolterraError::Network("fc weight must be a matrix".into()));
            }
            let bias = parse_bias(l.get("bias"), w.shape()[0], "bias")?;
            Ok(Layer::Fc { w, bias })
        }
        "batchnorm" | "batchnormalization" | "maxpool" | "maxpooling" => Err(VolterraError::UnsupportedLayer(format!(
            "`{ty}` has no Volterra form; fold it away before conversion"
        ))),
        _ => Err(VolterraError::Unknown {
            kind: "layer",
            name: ty.to_string(),
        }),
    }
}

/// Convert a single-output network, truncating every stage at order `n`.
pub fn network_to_volterra(net: &NetworkSpec, n: usize) -> Result<VolterraOperator> {
    network_to_volterra_with_caps(net, n, &Caps::default())
}

/// [`network_to_volterra`] with explicit limits.
pub fn network_to_volterra_with_caps(net: &NetworkSpec, n: usize, caps: &Caps) -> Result<VolterraOperator> {
    let mut ops = network_to_volterra_channels(net, n, caps)?;
    if ops.len() != 1 {
        return shape_err(format!("network has {} output channels", ops.len()));
    }
    Ok(ops.remove(0))
}

/// Convert a network to one operator per output channel.
pub fn network_to_volterra_channels(net: &NetworkSpec, n: usize, caps: &Caps) -> Result<Vec<VolterraOperator>> {
    if n > caps.max_order {
        return Err(VolterraError::CapExceeded(format!(
            "truncation order {n} exceeds {}",
            caps.max_order
        )));
    }
    convert_layers(&net.layers, vec![VolterraOperator::identity(1)], n, caps, net.input_length)
}

fn convert_layers(
    layers: &[Layer],
    mut state: Vec<VolterraOperator>,
    n: usize,
    caps: &Caps,
    input_len: Option<usize>,
) -> Result<Vec<VolterraOperator>> {
    for layer in layers {
        state = match layer {
            Layer::Conv1d { kernel, bias, stride, pad } => {
                let (co, ci, z) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
                if ci != state.len() {
                    return shape_err(format!("conv expects {ci} channels, got {}", state.len()));
                }
                let mut out = Vec::with_capacity(co);
                for d in 0..co {
                    let mut acc: Option<VolterraOperator> = None;
                    for (u, inner) in state.iter().enumerate() {
                        let k = Tensor::vector(kernel.data()[(d * ci + u) * z..(d * ci + u + 1) * z].to_vec());
                        let b = if u == 0 { bias[d] } else { 0.0 };
                        let outer = VolterraOperator::linear(k, b, *stride, *pad)?;
                        let op = combine_nm_with_caps(&outer, inner, Some(n), caps)?;
                        acc = Some(match acc {
                            None => op,
                            Some(a) => a.add(&op)?,
                        });
                    }
                    out.push(acc.expect("at least one channel"));
                }
                out
            }
            Layer::Activation(act) => {
                let outer = act.as_operator();
                state
                    .iter()
                    .map(|inner| combine_nm_with_caps(&outer, inner, Some(n), caps))
                    .collect::<Result<_>>()?
            }
            Layer::Residual { inner } => {
                if state.len() != 1 {
                    return shape_err("residual blocks need a single channel");
                }
                let mut r = convert_layers(inner, vec![VolterraOperator::identity(1)], n, caps, None)?;
                if r.len() != 1 {
                    return shape_err("residual inner block must output a single channel");
                }
                let r = r.remove(0);
                let z = r.footprint()[0];
                if r.stride() != 1 || 2 * r.pad() + 1 != z {
                    return shape_err(format!(
                        "residual inner block must preserve length (stride 1, footprint {z}, pad {})",
                        r.pad()
                    ));
                }
                // The tap that reads x at the output position.
                let r = residual_adjust_at(&r, &[r.pad()])?;
                vec![combine_nm_with_caps(&r, &state[0], Some(n), caps)?]
            }
            Layer::Inception { g, branches } => {
                let fused = inception_merge(g, branches)?;
                let outer = VolterraOperator::linear(fused, 0.0, 1, 0)?;
                state
                    .iter()
                    .map(|inner| combine_nm_with_caps(&outer, inner, Some(n), caps))
                    .collect::<Result<_>>()?
            }
            Layer::Fc { w, bias } => {
                if state.len() != 1 {
                    return shape_err("fully connected layer expects a single channel");
                }
                let Some(len) = input_len else {
                    return arg_err("a fully connected layer needs the network input_length");
                };
                let incoming = state[0].output_shape(&[len])?[0];
                if incoming != w.shape()[1] {
                    return shape_err(format!(
                        "fully connected layer expects length {}, the signal has length {incoming}",
                        w.shape()[1]
                    ));
                }
                fc_as_conv(w, bias)?
                    .iter()
                    .map(|outer| combine_nm_with_caps(outer, &state[0], Some(n), caps))
                    .collect::<Result<_>>()?
            }
        };
    }
    Ok(state)
}
