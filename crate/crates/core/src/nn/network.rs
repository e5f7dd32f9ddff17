use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::layers::{
    conv2d_backward_raw, conv2d_forward_raw, fc_backward_raw, fc_forward_raw, leaky_relu,
    leaky_relu_backward, sigmoid, sigmoid_backward, ConvGeometry,
};
use crate::nn::{LayerSpec, NnError};
use crate::tensor::{Scalar, Tensor};

/// One named weight/bias pair with its freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup<T> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> ParamGroup<T> {
    pub fn numel(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkParameters<T> {
    groups: Vec<ParamGroup<T>>,
}

impl<T: Scalar> NetworkParameters<T> {
    pub fn new() -> Self {
        Self { groups: Vec::new() }
    }

    pub fn push(&mut self, group: ParamGroup<T>) -> Result<(), NnError> {
        if self.groups.iter().any(|g| g.name == group.name) {
            return Err(NnError::Config(format!(
                "duplicate parameter group `{}`",
                group.name
            )));
        }
        self.groups.push(group);
        Ok(())
    }

    pub fn groups(&self) -> &[ParamGroup<T>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup<T>] {
        &mut self.groups
    }

    pub fn get(&self, name: &str) -> Option<&ParamGroup<T>> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamGroup<T>> {
        self.groups.iter_mut().find(|g| g.name == name)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<(), NnError> {
        let g = self
            .get_mut(name)
            .ok_or_else(|| NnError::Config(format!("no parameter group `{name}`")))?;
        g.trainable = trainable;
        Ok(())
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.groups.iter_mut().for_each(|g| g.trainable = trainable);
    }

    /// Total number of weight and bias elements.
    pub fn param_count(&self) -> usize {
        self.groups.iter().map(ParamGroup::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups
            .iter()
            .all(|g| g.weight.is_finite() && g.bias.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParameters<U> {
        NetworkParameters {
            groups: self
                .groups
                .iter()
                .map(|g| ParamGroup {
                    name: g.name.clone(),
                    weight: g.weight.cast(),
                    bias: g.bias.cast(),
                    trainable: g.trainable,
                })
                .collect(),
        }
    }
}

/// Half-width of the uniform Xavier/Glorot initialisation range.
pub fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
struct LayerEntry {
    spec: LayerSpec,
    group: Option<usize>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

/// Builder for a [`Network`]; checks the shape chain as layers are added.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    layers: Vec<(Option<String>, LayerSpec)>,
}

impl NetworkBuilder {
    /// Starts a chain whose per-sample input has shape `input_shape`.
    pub fn new(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            layers: Vec::new(),
        }
    }

    pub fn layer(mut self, name: Option<&str>, spec: LayerSpec) -> Self {
        self.layers.push((name.map(str::to_owned), spec));
        self
    }

    pub fn conv2d(self, name: &str, spec: super::Conv2dSpec) -> Self {
        self.layer(Some(name), LayerSpec::Conv2d(spec))
    }

    pub fn fully_connected(self, name: &str, in_dim: usize, out_dim: usize) -> Self {
        self.layer(Some(name), LayerSpec::FullyConnected { in_dim, out_dim })
    }

    pub fn leaky_relu(self, alpha: f64) -> Self {
        self.layer(None, LayerSpec::LeakyRelu { alpha })
    }

    pub fn sigmoid(self) -> Self {
        self.layer(None, LayerSpec::Sigmoid)
    }

    /// Builds with Xavier-uniform weights and zero biases.
    pub fn build<T: Scalar, R: Rng + ?Sized>(self, rng: &mut R) -> Result<Network<T>, NnError> {
        let mut net = self.build_zeroed::<T>()?;
        let specs: Vec<LayerSpec> = net.layers.iter().map(|l| l.spec).collect();
        for (entry, spec) in net.layers.iter().zip(specs) {
            if let (Some(g), Some((fan_in, fan_out))) = (entry.group, spec.fans()) {
                let limit = xavier_limit(fan_in, fan_out);
                let dist = Uniform::new_inclusive(-limit, limit);
                for w in net.params.groups[g].weight.data_mut() {
                    *w = T::of(dist.sample(rng));
                }
            }
        }
        Ok(net)
    }

    /// Builds with all parameters zero; used before loading stored weights.
    pub fn build_zeroed<T: Scalar>(self) -> Result<Network<T>, NnError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::Config("input shape must be non-empty".into()));
        }
        let mut params = NetworkParameters::new();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut shape = self.input_shape.clone();
        for (name, spec) in self.layers {
            spec.validate()?;
            let out_shape = match spec {
                LayerSpec::Conv2d(c) => {
                    let [ch, h, w] = shape[..] else {
                        return Err(NnError::Dimension {
                            op: "network",
                            axis: "rank",
                            expected: 3,
                            found: shape.len(),
                        });
                    };
                    if ch != c.in_channels {
                        return Err(NnError::Dimension {
                            op: "network",
                            axis: "in_channels",
                            expected: c.in_channels,
                            found: ch,
                        });
                    }
                    let (oh, ow) = c.output_hw(h, w)?;
                    vec![c.out_channels, oh, ow]
                }
                LayerSpec::FullyConnected { in_dim, out_dim } => {
                    let n: usize = shape.iter().product();
                    if !n.is_multiple_of(in_dim) {
                        return Err(NnError::Dimension {
                            op: "network",
                            axis: "in_dim",
                            expected: in_dim,
                            found: n,
                        });
                    }
                    vec![n / in_dim * out_dim]
                }
                _ => shape.clone(),
            };
            let group = match spec.param_shapes() {
                Some((ws, bs)) => {
                    let name = name.ok_or_else(|| {
                        NnError::Config(format!("{} layer needs a name", spec.kind_name()))
                    })?;
                    params.push(ParamGroup {
                        name,
                        weight: Tensor::zeros(&ws),
                        bias: Tensor::zeros(&bs),
                        trainable: true,
                    })?;
                    Some(params.groups.len() - 1)
                }
                None => None,
            };
            layers.push(LayerEntry {
                spec,
                group,
                in_shape: shape,
                out_shape: out_shape.clone(),
            });
            shape = out_shape;
        }
        Ok(Network {
            input_shape: self.input_shape,
            layers,
            params,
        })
    }
}

/// Activations retained by a training forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace<T> {
    batch: usize,
    acts: Vec<Tensor<T>>,
}

impl<T: Scalar> Trace<T> {
    /// Final network output.
    pub fn output(&self) -> Option<&Tensor<T>> {
        self.acts.last()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupGrad<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients aligned with [`NetworkParameters::groups`], plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub groups: Vec<GroupGrad<T>>,
    pub input: Tensor<T>,
}

/// An ordered chain of layers with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<LayerEntry>,
    params: NetworkParameters<T>,
}

impl<T: Scalar> Network<T> {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.out_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    pub fn specs(&self) -> impl Iterator<Item = &LayerSpec> + '_ {
        self.layers.iter().map(|l| &l.spec)
    }

    /// Per-sample output shape of every layer, in order.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (&LayerSpec, &[usize])> + '_ {
        self.layers.iter().map(|l| (&l.spec, l.out_shape.as_slice()))
    }

    pub fn params(&self) -> &NetworkParameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParameters<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Same architecture in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }

    fn batch_of(&self, x: &Tensor<T>) -> Result<usize, NnError> {
        let s = x.shape();
        if s.len() != self.input_shape.len() + 1 || s[1..] != self.input_shape[..] {
            let sample: usize = self.input_shape.iter().product();
            return Err(NnError::Dimension {
                op: "network_forward",
                axis: "input",
                expected: sample,
                found: s.iter().skip(1).product(),
            });
        }
        Ok(s[0])
    }

    fn apply(&self, idx: usize, x: &Tensor<T>, batch: usize) -> Result<Tensor<T>, NnError> {
        let layer = &self.layers[idx];
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(&layer.out_shape);
        match layer.spec {
            LayerSpec::Conv2d(c) => {
                let g = &self.params.groups[layer.group.expect("conv has params")];
                let geo = ConvGeometry::new(&c, batch, layer.in_shape[1], layer.in_shape[2])?;
                let y = conv2d_forward_raw(x.data(), &c, &geo, &g.weight, &g.bias);
                Tensor::from_vec(&out_shape, y)
            }
            LayerSpec::FullyConnected { in_dim, .. } => {
                let g = &self.params.groups[layer.group.expect("fc has params")];
                let y = fc_forward_raw(x.data(), x.len() / in_dim, &g.weight, &g.bias);
                Tensor::from_vec(&out_shape, y)
            }
            LayerSpec::LeakyRelu { alpha } => Ok(leaky_relu(x, alpha)),
            LayerSpec::Sigmoid => Ok(sigmoid(x)),
        }
    }

    /// Inference pass over a batch shaped `[batch, ..input_shape]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let batch = self.batch_of(x)?;
        let mut cur = x.clone();
        for idx in 0..self.layers.len() {
            cur = self.apply(idx, &cur, batch)?;
        }
        Ok(cur)
    }

    /// Forward pass that keeps every intermediate activation for [`Self::backward`].
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<Trace<T>, NnError> {
        let batch = self.batch_of(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for idx in 0..self.layers.len() {
            let y = self.apply(idx, &acts[idx], batch)?;
            acts.push(y);
        }
        Ok(Trace { batch, acts })
    }

    /// Reverse pass from `dloss/doutput`. Frozen groups get exact-zero gradients.
    pub fn backward(&self, trace: &Trace<T>, loss_grad: &Tensor<T>) -> Result<Gradients<T>, NnError> {
        if trace.acts.is_empty() {
            return Err(NnError::State("backward called before forward".into()));
        }
        if trace.acts.len() != self.layers.len() + 1
            || trace.acts[0].shape().get(1..) != Some(&self.input_shape[..])
        {
            return Err(NnError::State(
                "trace was not produced by this network".into(),
            ));
        }
        let out = trace.acts.last().expect("non-empty");
        if loss_grad.len() != out.len() {
            return Err(NnError::Dimension {
                op: "backward",
                axis: "output",
                expected: out.len(),
                found: loss_grad.len(),
            });
        }
        let mut grads: Vec<GroupGrad<T>> = self
            .params
            .groups
            .iter()
            .map(|g| GroupGrad {
                weight: Tensor::zeros(g.weight.shape()),
                bias: Tensor::zeros(g.bias.shape()),
            })
            .collect();
        let batch = trace.batch;
        let mut dy = Tensor::from_vec(out.shape(), loss_grad.data().to_vec())?;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[idx];
            let dx = match layer.spec {
                LayerSpec::Conv2d(c) => {
                    let gi = layer.group.expect("conv has params");
                    let g = &self.params.groups[gi];
                    let geo = ConvGeometry::new(&c, batch, layer.in_shape[1], layer.in_shape[2])?;
                    let acc = &mut grads[gi];
                    let sink = g.trainable.then_some((&mut acc.weight, &mut acc.bias));
                    let dx = conv2d_backward_raw(x.data(), &c, &geo, &g.weight, dy.data(), sink);
                    Tensor::from_vec(x.shape(), dx)?
                }
                LayerSpec::FullyConnected { in_dim, .. } => {
                    let gi = layer.group.expect("fc has params");
                    let g = &self.params.groups[gi];
                    let acc = &mut grads[gi];
                    let sink = g.trainable.then_some((&mut acc.weight, &mut acc.bias));
                    let dx = fc_backward_raw(x.data(), x.len() / in_dim, &g.weight, dy.data(), sink);
                    Tensor::from_vec(x.shape(), dx)?
                }
                LayerSpec::LeakyRelu { alpha } => leaky_relu_backward(x, &dy, alpha),
                LayerSpec::Sigmoid => sigmoid_backward(&trace.acts[idx + 1], &dy),
            };
            dy = dx;
        }
        Ok(Gradients {
            groups: grads,
            input: dy,
        })
    }
}
