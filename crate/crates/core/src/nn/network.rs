//! The prunable classifier: a stack of ReLU conv layers `g_1..g_T` followed
//! by a dense head, with one binary filter mask per conv layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{self, ConvGeom};
use super::dense::{init_weights, Activation, Init, Mlp};
use super::loss::{argmax, cross_entropy};
use super::Adam;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Dense,
}

/// Structural description of one layer; also the raw material of the
/// agent's state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub num_filters: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerSpec {
    pub fn conv(index: usize, in_channels: usize, num_filters: usize, kernel_size: usize, stride: usize, padding: usize) -> Self {
        Self {
            index,
            kind: LayerKind::Conv,
            in_channels,
            num_filters,
            kernel_size,
            stride,
            padding,
        }
    }

    pub fn dense(index: usize, inputs: usize, outputs: usize) -> Self {
        Self {
            index,
            kind: LayerKind::Dense,
            in_channels: inputs,
            num_filters: outputs,
            kernel_size: 1,
            stride: 1,
            padding: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: &str| {
            Err(Error::Shape {
                layer: self.index,
                detail: detail.to_string(),
            })
        };
        if self.in_channels == 0 || self.num_filters == 0 || self.kernel_size == 0 || self.stride == 0 {
            return bad("channel, filter, kernel and stride values must be positive");
        }
        if self.kind == LayerKind::Dense && (self.kernel_size != 1 || self.stride != 1 || self.padding != 0) {
            return bad("dense layers need kernel 1, stride 1, padding 0");
        }
        Ok(())
    }

    /// `(t, in_channels, num_filters, kernel_size, stride, padding)`.
    pub fn attributes(&self) -> [f64; 6] {
        [
            self.index as f64,
            self.in_channels as f64,
            self.num_filters as f64,
            self.kernel_size as f64,
            self.stride as f64,
            self.padding as f64,
        ]
    }
}

/// Per-filter keep (true) / prune (false) flags of one conv layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn from_bools(keep: Vec<bool>) -> Self {
        Self(keep)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keep(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn kept(&self) -> usize {
        self.0.iter().filter(|&&k| k).count()
    }

    pub fn pruned(&self) -> usize {
        self.len() - self.kept()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&k| k as u8).collect()
    }
}

impl TryFrom<Vec<u8>> for Mask {
    type Error = String;

    fn try_from(bits: Vec<u8>) -> std::result::Result<Self, String> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("mask entries must be 0 or 1, found {other}")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Mask)
    }
}

impl From<Mask> for Vec<u8> {
    fn from(m: Mask) -> Self {
        m.to_bits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub filters: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv: Vec<ConvShape>,
    /// Hidden widths of the dense head; empty for a single linear layer.
    pub head_hidden: Vec<usize>,
    pub classes: usize,
}

impl Default for Architecture {
    /// Three 3x3 conv layers (8, 16, 16 filters) and a linear head on 3x8x8 inputs.
    fn default() -> Self {
        let conv = |filters| ConvShape {
            filters,
            kernel_size: 3,
            stride: 1,
            padding: 1,
        };
        Self {
            input_channels: 3,
            input_height: 8,
            input_width: 8,
            conv: vec![conv(8), conv(16), conv(16)],
            head_hidden: Vec::new(),
            classes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub spec: LayerSpec,
    /// `[filters, in_channels, k, k]`.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    pub fn filter_weights(&self, f: usize) -> &[f64] {
        self.weight.row(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub(crate) input_shape: [usize; 3],
    pub(crate) conv_layers: Vec<ConvLayer>,
    pub(crate) head: Mlp,
    pub(crate) masks: Vec<Mask>,
    pub(crate) class_count: usize,
}

struct ConvCache {
    geom: ConvGeom,
    input: Vec<f64>,
    output: Vec<f64>,
}

struct ForwardCache {
    batch: usize,
    conv: Vec<ConvCache>,
    head: super::dense::MlpCache,
}

impl Network {
    /// He-uniform weights, zero biases, all-ones masks.
    pub fn new<R: Rng>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        if arch.conv.is_empty() {
            return Err(Error::Config("network needs at least one conv layer".into()));
        }
        if arch.classes < 2 {
            return Err(Error::Config("network needs at least two classes".into()));
        }
        let (mut c, mut h, mut w) = (arch.input_channels, arch.input_height, arch.input_width);
        let mut conv_layers = Vec::with_capacity(arch.conv.len());
        for (i, shape) in arch.conv.iter().enumerate() {
            let spec = LayerSpec::conv(i + 1, c, shape.filters, shape.kernel_size, shape.stride, shape.padding);
            spec.validate()?;
            let geom = ConvGeom::new(c, h, w, shape.filters, shape.kernel_size, shape.stride, shape.padding)
                .ok_or_else(|| Error::Shape {
                    layer: spec.index,
                    detail: format!("kernel {} does not fit a {h}x{w} input", shape.kernel_size),
                })?;
            let fan_in = geom.col_rows();
            conv_layers.push(ConvLayer {
                spec,
                weight: init_weights(&[shape.filters, c, shape.kernel_size, shape.kernel_size], fan_in, Init::HeUniform, rng),
                bias: Tensor::zeros(&[shape.filters]),
            });
            (c, h, w) = (shape.filters, geom.out_height, geom.out_width);
        }
        let mut sizes = vec![c * h * w];
        sizes.extend(&arch.head_hidden);
        sizes.push(arch.classes);
        let head = Mlp::new(&sizes, Activation::Relu, Init::HeUniform, rng);
        let masks = conv_layers.iter().map(|l| Mask::ones(l.spec.num_filters)).collect();
        Ok(Self {
            input_shape: [arch.input_channels, arch.input_height, arch.input_width],
            conv_layers,
            head,
            masks,
            class_count: arch.classes,
        })
    }

    /// Assembles a network from explicit parts, checking every invariant.
    pub fn from_parts(input_shape: [usize; 3], conv_layers: Vec<ConvLayer>, head: Mlp, masks: Vec<Mask>, class_count: usize) -> Result<Self> {
        let net = Self {
            input_shape,
            conv_layers,
            head,
            masks,
            class_count,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_layers.is_empty() {
            return Err(Error::Config("network needs at least one conv layer".into()));
        }
        let geoms = self.geometry(self.input_shape[1], self.input_shape[2])?;
        let mut prev_index = 0;
        let mut channels = self.input_shape[0];
        for (layer, g) in self.conv_layers.iter().zip(&geoms) {
            let s = &layer.spec;
            s.validate()?;
            if s.kind != LayerKind::Conv || s.index <= prev_index || s.in_channels != channels {
                return Err(Error::Shape {
                    layer: s.index,
                    detail: "conv layer spec inconsistent with its neighbours".into(),
                });
            }
            let expect = [s.num_filters, s.in_channels, s.kernel_size, s.kernel_size];
            if layer.weight.shape() != expect || layer.bias.shape() != [s.num_filters] {
                return Err(Error::Shape {
                    layer: s.index,
                    detail: format!("weight shape {:?}, expected {expect:?}", layer.weight.shape()),
                });
            }
            prev_index = s.index;
            channels = g.filters;
        }
        let last = geoms.last().unwrap();
        if self.head.inputs() != last.output_len() || self.head.outputs() != self.class_count {
            return Err(Error::Shape {
                layer: prev_index + 1,
                detail: format!(
                    "head maps {} -> {}, expected {} -> {}",
                    self.head.inputs(),
                    self.head.outputs(),
                    last.output_len(),
                    self.class_count
                ),
            });
        }
        self.check_masks(&self.masks)?;
        if !self.params().iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn conv_layers(&self) -> &[ConvLayer] {
        &self.conv_layers
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    /// Number of prunable conv layers `T`.
    pub fn depth(&self) -> usize {
        self.conv_layers.len()
    }

    /// Conv specs followed by head specs, indices strictly increasing.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self.conv_layers.iter().map(|l| l.spec).collect();
        let base = specs.last().map_or(0, |s| s.index);
        specs.extend(
            self.head
                .layers
                .iter()
                .enumerate()
                .map(|(i, d)| LayerSpec::dense(base + 1 + i, d.inputs(), d.outputs())),
        );
        specs
    }

    /// Conv geometries for an input of the given spatial size.
    pub fn geometry(&self, height: usize, width: usize) -> Result<Vec<ConvGeom>> {
        let (mut h, mut w) = (height, width);
        self.conv_layers
            .iter()
            .map(|l| {
                let s = &l.spec;
                let g = ConvGeom::new(s.in_channels, h, w, s.num_filters, s.kernel_size, s.stride, s.padding).ok_or_else(|| {
                    Error::Shape {
                        layer: s.index,
                        detail: format!("kernel {} does not fit a {h}x{w} input", s.kernel_size),
                    }
                })?;
                (h, w) = (g.out_height, g.out_width);
                Ok(g)
            })
            .collect()
    }

    pub fn conv_geometry(&self) -> Vec<ConvGeom> {
        self.geometry(self.input_shape[1], self.input_shape[2])
            .expect("validated at construction")
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.conv_layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self
            .conv_layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect();
        p.extend(self.head.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_masks(&self, masks: &[Mask]) -> Result<()> {
        if masks.len() != self.conv_layers.len() {
            return Err(Error::MaskCount {
                expected: self.conv_layers.len(),
                got: masks.len(),
            });
        }
        for (l, m) in self.conv_layers.iter().zip(masks) {
            if m.len() != l.spec.num_filters {
                return Err(Error::MaskLength {
                    layer: l.spec.index,
                    expected: l.spec.num_filters,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }

    /// Stores the masks and zeroes the weights and biases of pruned filters.
    pub fn apply_mask(&mut self, masks: &[Mask]) -> Result<()> {
        self.check_masks(masks)?;
        self.masks = masks.to_vec();
        self.zero_pruned();
        Ok(())
    }

    fn zero_pruned(&mut self) {
        for (layer, mask) in self.conv_layers.iter_mut().zip(&self.masks) {
            for f in (0..mask.len()).filter(|&f| !mask.keep(f)) {
                layer.weight.row_mut(f).fill(0.0);
                layer.bias.data_mut()[f] = 0.0;
            }
        }
    }

    /// Logits `[N, classes]` under the stored masks.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward_with_masks(batch, Some(&self.masks))
    }

    /// Forward pass with explicit masks; `None` disables masking entirely.
    pub fn forward_with_masks(&self, batch: &Tensor, masks: Option<&[Mask]>) -> Result<Tensor> {
        if let Some(m) = masks {
            self.check_masks(m)?;
        }
        let cache = self.run(batch, masks)?;
        Tensor::new(vec![cache.batch, self.class_count], cache.head.output().to_vec())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<Vec<ConvGeom>> {
        let s = batch.shape();
        let first = self.conv_layers[0].spec.index;
        if s.len() != 4 {
            return Err(Error::Shape {
                layer: first,
                detail: format!("expected an N x C x H x W batch, got shape {s:?}"),
            });
        }
        if s[1] != self.conv_layers[0].spec.in_channels {
            return Err(Error::Shape {
                layer: first,
                detail: format!("expected {} input channels, got {}", self.conv_layers[0].spec.in_channels, s[1]),
            });
        }
        let geoms = self.geometry(s[2], s[3])?;
        let flat = geoms.last().unwrap().output_len();
        if flat != self.head.inputs() {
            return Err(Error::Shape {
                layer: self.conv_layers.last().unwrap().spec.index + 1,
                detail: format!("head expects {} features, conv stack produces {flat}", self.head.inputs()),
            });
        }
        Ok(geoms)
    }

    fn run(&self, batch: &Tensor, masks: Option<&[Mask]>) -> Result<ForwardCache> {
        let geoms = self.check_batch(batch)?;
        let n = batch.shape()[0];
        let mut input = batch.data().to_vec();
        let mut active_in = vec![true; self.input_shape[0]];
        let mut conv_cache = Vec::with_capacity(self.conv_layers.len());
        for (t, (layer, g)) in self.conv_layers.iter().zip(&geoms).enumerate() {
            let active_out: Vec<bool> = match masks {
                Some(m) => m[t].as_slice().to_vec(),
                None => vec![true; g.filters],
            };
            let mut cols = vec![0.0; g.col_rows() * g.out_positions()];
            let mut output = vec![0.0; n * g.output_len()];
            for s in 0..n {
                conv::im2col(&input[s * g.input_len()..(s + 1) * g.input_len()], g, &active_in, &mut cols);
                conv::forward(
                    layer.weight.data(),
                    layer.bias.data(),
                    &cols,
                    g,
                    &active_out,
                    &active_in,
                    &mut output[s * g.output_len()..(s + 1) * g.output_len()],
                );
            }
            Activation::Relu.apply(&mut output);
            conv_cache.push(ConvCache {
                geom: *g,
                input: std::mem::take(&mut input),
                output: output.clone(),
            });
            input = output;
            active_in = active_out;
        }
        let head = self.head.forward_cached(&input, n);
        Ok(ForwardCache {
            batch: n,
            conv: conv_cache,
            head,
        })
    }

    fn check_labels(&self, batch: &Tensor, labels: &[usize]) -> Result<()> {
        if batch.shape().first() != Some(&labels.len()) {
            return Err(Error::Shape {
                layer: self.conv_layers[0].spec.index,
                detail: format!("{} labels for batch shape {:?}", labels.len(), batch.shape()),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.class_count) {
            return Err(Error::Label {
                label,
                classes: self.class_count,
            });
        }
        Ok(())
    }

    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        self.check_labels(batch, labels)?;
        let logits = self.forward(batch)?;
        let (loss, _) = cross_entropy(logits.data(), labels, self.class_count);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        Ok(loss)
    }

    /// Mean cross-entropy and its gradient, in [`Network::params`] order.
    pub fn loss_and_grad(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        self.check_labels(batch, labels)?;
        let cache = self.run(batch, Some(&self.masks))?;
        let n = cache.batch;
        let (loss, dlogits) = cross_entropy(cache.head.output(), labels, self.class_count);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        let (head_grads, delta) = self.head.backward_full(&cache.head, &dlogits, true);
        // gradient w.r.t. the flattened conv output
        let mut delta = delta.expect("input gradient requested");

        let mut conv_grads: Vec<Tensor> = Vec::with_capacity(2 * self.conv_layers.len());
        for t in (0..self.conv_layers.len()).rev() {
            let layer = &self.conv_layers[t];
            let cc = &cache.conv[t];
            let g = &cc.geom;
            Activation::Relu.backprop(&cc.output, &mut delta);
            let active_out = self.masks[t].as_slice();
            let active_in: Vec<bool> = if t == 0 {
                vec![true; g.in_channels]
            } else {
                self.masks[t - 1].as_slice().to_vec()
            };
            let mut gw = Tensor::zeros(layer.weight.shape());
            let mut gb = Tensor::zeros(layer.bias.shape());
            let mut cols = vec![0.0; g.col_rows() * g.out_positions()];
            let mut dcols = vec![0.0; cols.len()];
            let mut dx = if t > 0 { vec![0.0; n * g.input_len()] } else { Vec::new() };
            for s in 0..n {
                conv::im2col(&cc.input[s * g.input_len()..(s + 1) * g.input_len()], g, &active_in, &mut cols);
                conv::backward(
                    layer.weight.data(),
                    &cols,
                    &delta[s * g.output_len()..(s + 1) * g.output_len()],
                    g,
                    active_out,
                    &active_in,
                    gw.data_mut(),
                    gb.data_mut(),
                    (t > 0).then_some(dcols.as_mut_slice()),
                );
                if t > 0 {
                    conv::col2im(&dcols, g, &active_in, &mut dx[s * g.input_len()..(s + 1) * g.input_len()]);
                }
            }
            conv_grads.push(gb);
            conv_grads.push(gw);
            delta = dx;
        }
        conv_grads.reverse();
        conv_grads.extend(head_grads);
        Ok((loss, conv_grads))
    }

    /// One Adam step on the mean cross-entropy; pruned filters stay zero.
    pub fn train_step(&mut self, batch: &Tensor, labels: &[usize], opt: &mut Adam, lr: f64) -> Result<f64> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        let (loss, grads) = self.loss_and_grad(batch, labels)?;
        if !grads.iter().all(Tensor::is_finite) {
            return Err(Error::NonFinite("gradient".into()));
        }
        opt.update(&mut self.params_mut(), &grads, lr);
        self.zero_pruned();
        Ok(loss)
    }

    /// Top-1 accuracy; ties in the logits go to the lowest class index.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        const CHUNK: usize = 256;
        let mut correct = 0usize;
        let indices: Vec<usize> = (0..data.len()).collect();
        for chunk in indices.chunks(CHUNK) {
            let (x, y) = data.subset(chunk);
            let logits = self.forward(&x)?;
            for (r, &label) in y.iter().enumerate() {
                if argmax(logits.row(r)) == label {
                    correct += 1;
                }
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    /// Mean cross-entropy over a whole dataset.
    pub fn dataset_loss(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let indices: Vec<usize> = (0..data.len()).collect();
        let mut total = 0.0;
        for chunk in indices.chunks(256) {
            let (x, y) = data.subset(chunk);
            total += self.loss(&x, &y)? * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn tiny_arch() -> Architecture {
        Architecture {
            input_channels: 2,
            input_height: 4,
            input_width: 4,
            conv: vec![ConvShape {
                filters: 3,
                kernel_size: 3,
                stride: 1,
                padding: 1,
            }],
            head_hidden: vec![],
            classes: 2,
        }
    }

    #[test]
    fn one_by_one_conv_scales_input() {
        let layer = ConvLayer {
            spec: LayerSpec::conv(1, 1, 1, 1, 1, 0),
            weight: Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
        };
        let g = ConvGeom::new(1, 2, 2, 1, 1, 1, 0).unwrap();
        let x = vec![1.0; 4];
        let mut cols = vec![0.0; 4];
        conv::im2col(&x, &g, &[true], &mut cols);
        let mut out = vec![0.0; 4];
        conv::forward(layer.weight.data(), layer.bias.data(), &cols, &g, &[true], &[true], &mut out);
        assert_eq!(out, vec![2.0; 4]);
    }

    #[test]
    fn zero_mask_annihilates_layer_output() {
        let mut rng = rng_for(1, 0);
        let mut net = Network::new(&Architecture::default(), &mut rng).unwrap();
        let mut masks = net.masks().to_vec();
        masks[1] = Mask::from_bools(vec![false; 16]);
        net.apply_mask(&masks).unwrap();
        let x = Tensor::from_fn(&[2, 3, 8, 8], |i| (i as f64 * 0.37).sin());
        let cache = net.run(&x, Some(net.masks())).unwrap();
        assert!(cache.conv[1].output.iter().all(|&v| v == 0.0));
        // downstream layer sees only its biases
        let biases = net.conv_layers[2].bias.data();
        for s in 0..2 {
            for f in 0..16 {
                let plane = &cache.conv[2].output[(s * 16 + f) * 64..(s * 16 + f + 1) * 64];
                assert!(plane.iter().all(|&v| v == biases[f].max(0.0)));
            }
        }
    }

    #[test]
    fn all_ones_masks_match_unmasked_forward_bitwise() {
        let mut rng = rng_for(2, 0);
        let net = Network::new(&Architecture::default(), &mut rng).unwrap();
        let x = Tensor::from_fn(&[3, 3, 8, 8], |i| (i as f64 * 0.11).cos());
        let a = net.forward(&x).unwrap();
        let b = net.forward_with_masks(&x, None).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn forward_reports_offending_layer() {
        let mut rng = rng_for(2, 0);
        let net = Network::new(&Architecture::default(), &mut rng).unwrap();
        let wrong_channels = Tensor::zeros(&[1, 4, 8, 8]);
        match net.forward(&wrong_channels) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_size = Tensor::zeros(&[1, 3, 6, 6]);
        match net.forward(&wrong_size) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn apply_mask_zeroes_filter_slice_and_is_idempotent() {
        let mut rng = rng_for(4, 0);
        let mut net = Network::new(&tiny_arch(), &mut rng).unwrap();
        let before = net.clone();
        net.apply_mask(&[Mask::ones(3)]).unwrap();
        assert_eq!(net, before);

        let mask = vec![Mask::from_bools(vec![true, false, true])];
        net.apply_mask(&mask).unwrap();
        assert!(net.conv_layers[0].filter_weights(1).iter().all(|&w| w == 0.0));
        assert_eq!(net.conv_layers[0].filter_weights(0), before.conv_layers[0].filter_weights(0));
        let once = net.clone();
        net.apply_mask(&mask).unwrap();
        assert_eq!(net, once);
    }

    #[test]
    fn mask_length_mismatch_is_rejected() {
        let mut rng = rng_for(4, 0);
        let mut net = Network::new(&tiny_arch(), &mut rng).unwrap();
        assert!(matches!(
            net.apply_mask(&[Mask::ones(2)]),
            Err(Error::MaskLength { layer: 1, expected: 3, got: 2 })
        ));
        assert!(matches!(net.apply_mask(&[]), Err(Error::MaskCount { .. })));
    }

    #[test]
    fn pruned_weights_stay_zero_through_training() {
        let mut rng = rng_for(5, 0);
        let mut net = Network::new(&tiny_arch(), &mut rng).unwrap();
        net.apply_mask(&[Mask::from_bools(vec![false, true, true])]).unwrap();
        let mut opt = Adam::new(net.params());
        let x = Tensor::from_fn(&[4, 2, 4, 4], |i| ((i * 13) % 7) as f64 - 3.0);
        let y = [0, 1, 1, 0];
        for _ in 0..20 {
            net.train_step(&x, &y, &mut opt, 1e-2).unwrap();
        }
        assert!(net.conv_layers[0].filter_weights(0).iter().all(|&w| w == 0.0));
        assert_eq!(net.conv_layers[0].bias.data()[0], 0.0);
    }

    #[test]
    fn evaluate_constant_predictor_on_balanced_labels() {
        let mut rng = rng_for(6, 0);
        let mut net = Network::new(&tiny_arch(), &mut rng).unwrap();
        for p in net.head.params_mut() {
            p.fill(0.0);
        }
        let images = Tensor::from_fn(&[4, 2, 4, 4], |i| i as f64);
        let data = Dataset::new(images, vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(net.evaluate(&data).unwrap(), 0.5);
        assert_eq!(net.evaluate(&data).unwrap(), net.evaluate(&data).unwrap());
    }

    #[test]
    fn uniform_logits_loss_is_ln2() {
        let mut rng = rng_for(6, 0);
        let mut net = Network::new(&tiny_arch(), &mut rng).unwrap();
        for p in net.head.params_mut() {
            p.fill(0.0);
        }
        let x = Tensor::from_fn(&[2, 2, 4, 4], |i| i as f64 * 0.1);
        let loss = net.loss(&x, &[0, 1]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }
}
