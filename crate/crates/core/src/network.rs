//! Convolutional backbone producing embeddings `f(x)`.
//!
//! A ReLU follows every convolution and every dense layer except the last
//! one, whose output is the embedding consumed by the reciprocal point head.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asc::KernelBank;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::tensor::{
    conv2d, conv2d_backward, conv_output_extent, dense, dense_backward, maxpool2d, maxpool2d_backward,
    pool_output_extent, relu, relu_backward, Conv2d, Dense, PoolIndices, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { kernel: usize, channels: usize, stride: usize, padding: usize },
    Pool { window: usize, stride: usize },
    Dense { out: usize },
}

impl LayerSpec {
    /// `conv,k=31,c=961,s=4,p=2` / `pool,k=3,s=2` / `dense,out=1024`.
    pub fn to_line(&self) -> String {
        match *self {
            LayerSpec::Conv { kernel, channels, stride, padding } => {
                format!("conv,k={kernel},c={channels},s={stride},p={padding}")
            }
            LayerSpec::Pool { window, stride } => format!("pool,k={window},s={stride}"),
            LayerSpec::Dense { out } => format!("dense,out={out}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum FirstLayerInit {
    #[default]
    Random,
    /// Kernel bank file to copy into the first convolution.
    AscBank(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Side of the square single-channel input.
    pub input_size: usize,
    /// Layer stack; the last entry must be `Dense { out: embedding_dim }`.
    pub layers: Vec<LayerSpec>,
    pub embedding_dim: usize,
    pub first_layer_init: FirstLayerInit,
    pub freeze_first_layer: bool,
}

impl NetworkConfig {
    /// Five convolutions, three pools and three dense layers on 227x227 input
    /// with a 961-channel 31x31 first layer. The last dense layer emits the
    /// embedding instead of class logits.
    pub fn table_i(embedding_dim: usize) -> Self {
        use LayerSpec::*;
        NetworkConfig {
            input_size: 227,
            layers: vec![
                Conv { kernel: 31, channels: 961, stride: 4, padding: 2 },
                Pool { window: 3, stride: 2 },
                Conv { kernel: 5, channels: 512, stride: 1, padding: 2 },
                Pool { window: 3, stride: 2 },
                Conv { kernel: 3, channels: 384, stride: 1, padding: 1 },
                Conv { kernel: 3, channels: 256, stride: 1, padding: 1 },
                Conv { kernel: 3, channels: 256, stride: 1, padding: 1 },
                Pool { window: 3, stride: 2 },
                Dense { out: 1024 },
                Dense { out: 1024 },
                Dense { out: embedding_dim },
            ],
            embedding_dim,
            first_layer_init: FirstLayerInit::Random,
            freeze_first_layer: false,
        }
    }

    /// Desk-scale network: 64x64 input, 100 11x11 kernels, 32-d embedding.
    pub fn desk() -> Self {
        use LayerSpec::*;
        NetworkConfig {
            input_size: 64,
            layers: vec![
                Conv { kernel: 11, channels: 100, stride: 2, padding: 2 },
                Pool { window: 3, stride: 2 },
                Conv { kernel: 3, channels: 32, stride: 1, padding: 1 },
                Pool { window: 3, stride: 2 },
                Dense { out: 128 },
                Dense { out: 32 },
            ],
            embedding_dim: 32,
            first_layer_init: FirstLayerInit::Random,
            freeze_first_layer: false,
        }
    }

    /// Activation shape after every layer, starting from `[1, H, W]`.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_size == 0 {
            return Err(Error::config("input_size", "must be >= 1"));
        }
        if self.embedding_dim < 2 {
            return Err(Error::config("embedding_dim", format!("must be >= 2, got {}", self.embedding_dim)));
        }
        if self.layers.is_empty() {
            return Err(Error::config("layers", "at least one layer is required"));
        }
        let mut shape = vec![1, self.input_size, self.input_size];
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let field = format!("layer.{i}");
            shape = match *layer {
                LayerSpec::Conv { kernel, channels, stride, padding } => {
                    if shape.len() != 3 {
                        return Err(Error::config(field, "convolution after a dense layer"));
                    }
                    if channels == 0 {
                        return Err(Error::config(field, "channel count must be >= 1"));
                    }
                    let h = conv_output_extent(shape[1], kernel, stride, padding)
                        .map_err(|e| Error::config(field.clone(), e.to_string()))?;
                    let w = conv_output_extent(shape[2], kernel, stride, padding)
                        .map_err(|e| Error::config(field, e.to_string()))?;
                    vec![channels, h, w]
                }
                LayerSpec::Pool { window, stride } => {
                    if shape.len() != 3 {
                        return Err(Error::config(field, "pooling after a dense layer"));
                    }
                    let h = pool_output_extent(shape[1], window, stride)
                        .map_err(|e| Error::config(field.clone(), e.to_string()))?;
                    let w = pool_output_extent(shape[2], window, stride)
                        .map_err(|e| Error::config(field, e.to_string()))?;
                    vec![shape[0], h, w]
                }
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(Error::config(field, "dense width must be >= 1"));
                    }
                    vec![out]
                }
            };
            chain.push(shape.clone());
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { out }) if *out == self.embedding_dim => {}
            _ => {
                return Err(Error::config(
                    format!("layer.{}", self.layers.len() - 1),
                    format!("last layer must be dense with out = embedding_dim = {}", self.embedding_dim),
                ))
            }
        }
        if !matches!(self.layers[0], LayerSpec::Conv { .. }) && self.freeze_first_layer {
            return Err(Error::config("freeze_first_layer", "first layer is not a convolution"));
        }
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_chain().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    Pool { window: usize, stride: usize },
    Relu,
    Dense(Dense),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
    /// Layer index in `layers` of each entry of `config.layers`.
    spec_index: Vec<usize>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input of every layer.
    inputs: Vec<Tensor>,
    pools: Vec<Option<PoolIndices>>,
}

fn uniform_fill(t: &mut Tensor, fan_in: usize, rng: &mut ChaCha8Rng) {
    let limit = sqrt(6.0 / fan_in as f64);
    for v in t.values_mut() {
        *v = rng.random_range(-limit..limit);
    }
}

/// Builds a network with weights uniform in `+-sqrt(6 / fan_in)` and zero biases.
pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<Network> {
    let chain = config.shape_chain()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut spec_index = Vec::new();
    let mut in_shape = vec![1, config.input_size, config.input_size];
    let last = config.layers.len() - 1;
    for (i, spec) in config.layers.iter().enumerate() {
        spec_index.push(layers.len());
        match *spec {
            LayerSpec::Conv { kernel, channels, stride, padding } => {
                let mut conv = Conv2d::zeros(channels, in_shape[0], kernel, stride, padding);
                uniform_fill(&mut conv.weight, in_shape[0] * kernel * kernel, &mut rng);
                layers.push(Layer::Conv(conv));
                layers.push(Layer::Relu);
            }
            LayerSpec::Pool { window, stride } => layers.push(Layer::Pool { window, stride }),
            LayerSpec::Dense { out } => {
                let fan_in: usize = in_shape.iter().product();
                let mut d = Dense::zeros(out, fan_in);
                uniform_fill(&mut d.weight, fan_in, &mut rng);
                layers.push(Layer::Dense(d));
                if i != last {
                    layers.push(Layer::Relu);
                }
            }
        }
        in_shape = chain[i].clone();
    }
    Ok(Network { config: config.clone(), layers, spec_index })
}

impl Network {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn input_size(&self) -> usize {
        self.config.input_size
    }

    pub fn first_conv(&self) -> Option<&Conv2d> {
        match self.layers.first() {
            Some(Layer::Conv(c)) => Some(c),
            _ => None,
        }
    }

    fn first_conv_mut(&mut self) -> Option<&mut Conv2d> {
        match self.layers.first_mut() {
            Some(Layer::Conv(c)) => Some(c),
            _ => None,
        }
    }

    /// Named parameter tensors in a stable order: `layer{i}.weight`, `layer{i}.bias`
    /// where `i` indexes the configured layer list.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, &li) in self.spec_index.iter().enumerate() {
            match &self.layers[li] {
                Layer::Conv(c) => {
                    out.push((format!("layer{i}.weight"), &c.weight));
                    out.push((format!("layer{i}.bias"), &c.bias));
                }
                Layer::Dense(d) => {
                    out.push((format!("layer{i}.weight"), &d.weight));
                    out.push((format!("layer{i}.bias"), &d.bias));
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable parameters with a flag telling whether the optimizer may update them.
    pub fn params_mut(&mut self) -> Vec<(&mut Tensor, bool)> {
        let frozen_first = self.config.freeze_first_layer;
        let mut out = Vec::new();
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let trainable = !(frozen_first && li == 0);
            match layer {
                Layer::Conv(c) => {
                    out.push((&mut c.weight, trainable));
                    out.push((&mut c.bias, trainable));
                }
                Layer::Dense(d) => {
                    out.push((&mut d.weight, trainable));
                    out.push((&mut d.bias, trainable));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (t, _) in self.params_mut() {
            t.zero_grad();
        }
    }

    /// Replaces parameter values by name (checkpoint restore).
    pub fn set_param(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        let pos = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::argument(format!("network has no parameter `{name}`")))?;
        let mut params = self.params_mut();
        let t = &mut params[pos].0;
        if t.len() != values.len() {
            return Err(Error::shape(format!("parameter `{name}` has {} values, got {}", t.len(), values.len())));
        }
        t.values_mut().copy_from_slice(values);
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = self.config.input_size;
        match *batch.shape() {
            [b, 1, h, w] if h == s && w == s => Ok(b),
            _ => Err(Error::shape(format!("network expects [B, 1, {s}, {s}], got {:?}", batch.shape()))),
        }
    }

    /// Embeddings `[B, m]` for a batch `[B, 1, H, W]`.
    pub fn forward_embedding(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, None)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_train(&self, batch: &Tensor) -> Result<(Tensor, Tape)> {
        let mut tape = Tape { inputs: Vec::with_capacity(self.layers.len()), pools: Vec::new() };
        let out = self.run(batch, Some(&mut tape))?;
        Ok((out, tape))
    }

    /// Output of configured layer `index` (after its activation) for one batch.
    pub fn forward_to(&self, batch: &Tensor, index: usize) -> Result<Tensor> {
        if index >= self.config.layers.len() {
            return Err(Error::argument(format!(
                "layer index {index} out of range 0..{}",
                self.config.layers.len()
            )));
        }
        self.check_batch(batch)?;
        let stop = self.spec_index.get(index + 1).copied().unwrap_or(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers[..stop] {
            x = apply(layer, &x, None)?;
        }
        Ok(x)
    }

    fn run(&self, batch: &Tensor, mut tape: Option<&mut Tape>) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(x.clone());
            }
            x = apply(layer, &x, tape.as_deref_mut())?;
        }
        x.reshape(&[b, self.config.embedding_dim])
    }

    /// Accumulates parameter gradients for `d_embedding` (`[B, m]`).
    pub fn backward(&mut self, tape: &Tape, d_embedding: &Tensor) -> Result<()> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::argument("tape does not belong to this network"));
        }
        let frozen_first = self.config.freeze_first_layer;
        let mut grad = d_embedding.clone();
        let mut pool_iter = tape.pools.iter().rev();
        for li in (0..self.layers.len()).rev() {
            let input = &tape.inputs[li];
            let needs_input_grad = li > 0;
            grad = match &mut self.layers[li] {
                Layer::Conv(c) => {
                    let train = !(frozen_first && li == 0);
                    let g = grad.reshape(&conv_out_shape(input, c)?)?;
                    match conv2d_backward(input, c, &g, train, needs_input_grad)? {
                        Some(d) => d,
                        None => break,
                    }
                }
                Layer::Relu => relu_backward(input, &grad.reshape(input.shape())?)?,
                Layer::Pool { .. } => {
                    let idx = pool_iter
                        .next()
                        .and_then(|p| p.as_ref())
                        .ok_or_else(|| Error::argument("tape is missing pooling indices"))?;
                    maxpool2d_backward(idx, &grad)?
                }
                Layer::Dense(d) => dense_backward(input, d, &grad, true)?,
            };
        }
        Ok(())
    }
}

fn conv_out_shape(input: &Tensor, c: &Conv2d) -> Result<Vec<usize>> {
    let s = input.shape();
    let oh = conv_output_extent(s[2], c.kernel(), c.stride, c.padding)?;
    let ow = conv_output_extent(s[3], c.kernel(), c.stride, c.padding)?;
    Ok(vec![s[0], c.out_channels(), oh, ow])
}

fn apply(layer: &Layer, x: &Tensor, tape: Option<&mut Tape>) -> Result<Tensor> {
    match layer {
        Layer::Conv(c) => conv2d(x, c),
        Layer::Relu => Ok(relu(x)),
        Layer::Pool { window, stride } => {
            let (y, idx) = maxpool2d(x, *window, *stride)?;
            if let Some(t) = tape {
                t.pools.push(Some(idx));
            }
            Ok(y)
        }
        Layer::Dense(d) => {
            let b = x.shape()[0];
            let flat = x.clone().reshape(&[b, x.len() / b])?;
            dense(&flat, d)
        }
    }
}

/// Copies the bank into the first convolution and zeroes its biases.
pub fn init_conv1_from_bank(net: &mut Network, bank: &KernelBank) -> Result<()> {
    let conv = net
        .first_conv_mut()
        .ok_or_else(|| Error::config("layer.0", "first layer is not a convolution"))?;
    if conv.kernel() != bank.kernel_size() {
        return Err(Error::config(
            "layer.0",
            format!("kernel extent {} does not match bank kernel size {}", conv.kernel(), bank.kernel_size()),
        ));
    }
    if conv.out_channels() != bank.len() {
        return Err(Error::config(
            "layer.0",
            format!("{} output channels but the bank holds {} kernels", conv.out_channels(), bank.len()),
        ));
    }
    if conv.in_channels() != 1 {
        return Err(Error::config("layer.0", format!("expected 1 input channel, got {}", conv.in_channels())));
    }
    let area = bank.kernel_size() * bank.kernel_size();
    for (j, k) in bank.kernels().iter().enumerate() {
        conv.weight.values_mut()[j * area..(j + 1) * area].copy_from_slice(k);
    }
    conv.bias.values_mut().iter_mut().for_each(|b| *b = 0.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkConfig {
        use LayerSpec::*;
        NetworkConfig {
            input_size: 12,
            layers: vec![
                Conv { kernel: 3, channels: 4, stride: 1, padding: 1 },
                Pool { window: 2, stride: 2 },
                Conv { kernel: 3, channels: 3, stride: 2, padding: 0 },
                Dense { out: 5 },
                Dense { out: 3 },
            ],
            embedding_dim: 3,
            first_layer_init: FirstLayerInit::Random,
            freeze_first_layer: false,
        }
    }

    #[test]
    fn table_i_shape_chain() {
        let cfg = NetworkConfig::table_i(10);
        let chain = cfg.shape_chain().unwrap();
        assert_eq!(chain[0], vec![961, 51, 51]);
        assert_eq!(chain[1], vec![961, 25, 25]);
        assert_eq!(chain[2], vec![512, 25, 25]);
        assert_eq!(chain[3], vec![512, 12, 12]);
        assert_eq!(chain[7], vec![256, 5, 5]);
        assert_eq!(chain[10], vec![10]);
        let convs = cfg.layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count();
        let pools = cfg.layers.iter().filter(|l| matches!(l, LayerSpec::Pool { .. })).count();
        let dense = cfg.layers.iter().filter(|l| matches!(l, LayerSpec::Dense { .. })).count();
        assert_eq!((convs, pools, dense), (5, 3, 3));
    }

    #[test]
    fn desk_shape_chain() {
        let chain = NetworkConfig::desk().shape_chain().unwrap();
        assert_eq!(chain[0], vec![100, 29, 29]);
        assert_eq!(chain[1], vec![100, 14, 14]);
        assert_eq!(chain[2], vec![32, 14, 14]);
        assert_eq!(chain[3], vec![32, 6, 6]);
        assert_eq!(chain[4], vec![128]);
        assert_eq!(chain[5], vec![32]);
    }

    #[test]
    fn bad_chain_names_first_offender() {
        let mut cfg = tiny();
        cfg.layers[2] = LayerSpec::Conv { kernel: 9, channels: 3, stride: 1, padding: 0 };
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "layer.2"));
        let mut cfg = tiny();
        cfg.embedding_dim = 4;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "layer.4"));
    }

    #[test]
    fn deterministic_build() {
        let a = build_network(&tiny(), 3).unwrap();
        let b = build_network(&tiny(), 3).unwrap();
        let c = build_network(&tiny(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let names: Vec<_> = a.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "layer0.weight");
        assert_eq!(names[2], "layer2.weight");
        assert_eq!(names[7], "layer4.bias");
        // biases start at zero, weights within the fan-in bound
        let conv = a.first_conv().unwrap();
        assert!(conv.bias.values().iter().all(|v| *v == 0.0));
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(conv.weight.values().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn embedding_shape_and_determinism() {
        let net = build_network(&tiny(), 1).unwrap();
        let x = Tensor::from_fn(&[3, 1, 12, 12], |i| libm::sin(i as f64));
        let e = net.forward_embedding(&x).unwrap();
        assert_eq!(e.shape(), &[3, 3]);
        assert_eq!(e, net.forward_embedding(&x).unwrap());
        assert!(matches!(net.forward_embedding(&Tensor::zeros(&[1, 1, 10, 12])), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_tail_gives_zero_embedding() {
        let mut net = build_network(&tiny(), 1).unwrap();
        for (t, _) in net.params_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let e = net.forward_embedding(&Tensor::zeros(&[2, 1, 12, 12])).unwrap();
        assert!(e.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bank_init_touches_only_conv1() {
        let cfg = tiny();
        let mut net = build_network(&cfg, 5).unwrap();
        let before = net.clone();
        let kernels: Vec<Vec<f64>> = (0..4).map(|j| (0..9).map(|i| (j * 9 + i) as f64).collect()).collect();
        let bank = KernelBank::new(3, kernels, vec![(0.3, 0.0); 4]).unwrap();
        init_conv1_from_bank(&mut net, &bank).unwrap();
        let w = net.first_conv().unwrap().weight.values();
        assert_eq!(w, (0..36).map(|i| i as f64).collect::<Vec<_>>().as_slice());
        for ((n1, t1), (_, t2)) in net.named_params().iter().zip(before.named_params().iter()).skip(2) {
            assert_eq!(t1, t2, "{n1} changed");
        }
        let wrong = KernelBank::new(3, vec![vec![0.0; 9]; 2], vec![(0.3, 0.0); 2]).unwrap();
        let err = init_conv1_from_bank(&mut net, &wrong).unwrap_err();
        assert!(matches!(err, Error::Config { reason, .. } if reason.contains('4') && reason.contains('2')));
    }
}
