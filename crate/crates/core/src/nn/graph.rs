//! Layer graphs and networks.
//!
//! A [`Graph`] is a topologically ordered list of nodes; node 0 is the input
//! and the last node is the output. Skip connections are expressed by nodes
//! that read from several earlier nodes. Shapes are inferred while building,
//! so an invalid architecture fails before any parameter is allocated.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::truncated_normal_init;
use super::ops::{self, pool_output, ConvGeometry, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Input {
        shape: Vec<usize>,
    },
    Conv2D {
        kernel: (usize, usize),
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
    },
    MaxPool2D {
        size: usize,
        stride: usize,
    },
    TransposeConv2D {
        kernel: (usize, usize),
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    ReLU,
    ConcatChannels,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "input",
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::MaxPool2D { .. } => "maxpool2d",
            LayerSpec::TransposeConv2D { .. } => "transpose_conv2d",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::ReLU => "relu",
            LayerSpec::ConcatChannels => "concat_channels",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    /// Shapes of `[weight, bias]`, empty for parameter-free layers.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2D {
                kernel: (kh, kw),
                in_channels,
                out_channels,
                ..
            } => vec![vec![kh, kw, in_channels, out_channels], vec![out_channels]],
            LayerSpec::TransposeConv2D {
                kernel: (kh, kw),
                in_channels,
                out_channels,
                ..
            } => vec![vec![kh, kw, out_channels, in_channels], vec![out_channels]],
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => vec![vec![out_features, in_features], vec![out_features]],
            _ => Vec::new(),
        }
    }

    /// Inputs feeding each output unit; `None` for layers without weights.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2D {
                kernel: (kh, kw),
                in_channels,
                ..
            }
            | LayerSpec::TransposeConv2D {
                kernel: (kh, kw),
                in_channels,
                ..
            } => Some(kh * kw * in_channels),
            LayerSpec::FullyConnected { in_features, .. } => Some(in_features),
            _ => None,
        }
    }

    /// Output shape for the given input shapes.
    pub fn infer(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        let one = || -> Result<&[usize]> {
            match inputs {
                [s] => Ok(s),
                _ => Err(Error::shape(format!(
                    "{} takes one input, got {}",
                    self.kind_name(),
                    inputs.len()
                ))),
            }
        };
        let image = |s: &[usize]| -> Result<(usize, usize, usize)> {
            match *s {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(Error::shape(format!(
                    "{} needs an image input, got {s:?}",
                    self.kind_name()
                ))),
            }
        };
        match self {
            LayerSpec::Input { shape } => {
                if !inputs.is_empty() {
                    return Err(Error::shape("input node takes no inputs"));
                }
                Ok(shape.clone())
            }
            LayerSpec::Conv2D {
                kernel,
                stride,
                in_channels,
                out_channels,
                padding,
            } => {
                let (h, w, c) = image(one()?)?;
                if c != *in_channels {
                    return Err(Error::shape(format!(
                        "conv expects {in_channels} channels, got {c}"
                    )));
                }
                let g = ConvGeometry::new(h, w, c, *kernel, *stride, *padding)?;
                Ok(vec![g.out_h, g.out_w, *out_channels])
            }
            LayerSpec::MaxPool2D { size, stride } => {
                let (h, w, c) = image(one()?)?;
                let (oh, ow) = pool_output(h, w, *size, *stride)?;
                Ok(vec![oh, ow, c])
            }
            LayerSpec::TransposeConv2D {
                kernel: (kh, kw),
                stride,
                in_channels,
                out_channels,
            } => {
                let (h, w, c) = image(one()?)?;
                if c != *in_channels {
                    return Err(Error::shape(format!(
                        "transposed conv expects {in_channels} channels, got {c}"
                    )));
                }
                if *stride == 0 || h == 0 || w == 0 {
                    return Err(Error::shape("transposed conv stride and input must be positive"));
                }
                Ok(vec![(h - 1) * stride + kh, (w - 1) * stride + kw, *out_channels])
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => {
                let n: usize = one()?.iter().product();
                if n != *in_features {
                    return Err(Error::shape(format!(
                        "dense layer expects {in_features} inputs, got {n}"
                    )));
                }
                Ok(vec![*out_features])
            }
            LayerSpec::ReLU => Ok(one()?.to_vec()),
            LayerSpec::ConcatChannels => {
                if inputs.is_empty() {
                    return Err(Error::shape("concat needs inputs"));
                }
                let (h, w, _) = image(inputs[0])?;
                let mut total = 0;
                for s in inputs {
                    let (sh, sw, c) = image(s)?;
                    if (sh, sw) != (h, w) {
                        return Err(Error::shape(format!(
                            "concat spatial mismatch {h}x{w} vs {sh}x{sw}"
                        )));
                    }
                    total += c;
                }
                Ok(vec![h, w, total])
            }
            LayerSpec::Reshape { shape } => {
                let n: usize = one()?.iter().product();
                if n != shape.iter().product::<usize>() {
                    return Err(Error::shape(format!(
                        "cannot reshape {n} values into {shape:?}"
                    )));
                }
                Ok(shape.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub layer: LayerSpec,
    pub inputs: Vec<usize>,
}

/// Shape-checked layer graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    shapes: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates ordering and infers every node shape.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if (i == 0) != matches!(node.layer, LayerSpec::Input { .. }) {
                return Err(Error::shape("exactly the first node must be the input"));
            }
            if node.inputs.iter().any(|&j| j >= i) {
                return Err(Error::shape(format!(
                    "node {i} reads a later node; graphs must be topologically ordered"
                )));
            }
            let ins: Vec<&[usize]> = node.inputs.iter().map(|&j| shapes[j].as_slice()).collect();
            let out = node
                .layer
                .infer(&ins)
                .map_err(|e| Error::shape(format!("node {i} ({}): {e}", node.layer.kind_name())))?;
            shapes.push(out);
        }
        if nodes.is_empty() {
            return Err(Error::shape("empty graph"));
        }
        Ok(Graph { nodes, shapes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn shape_of(&self, node: usize) -> &[usize] {
        &self.shapes[node]
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty graph")
    }

    /// Parameter tensor shapes in node order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .flat_map(|n| n.layer.param_shapes())
            .collect()
    }

    /// Total number of weight and bias elements.
    pub fn count_weights(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Incremental graph construction with eager shape checks.
#[derive(Debug)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    shapes: Vec<Vec<usize>>,
}

/// Handle to a node under construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub usize);

impl GraphBuilder {
    pub fn new(input_shape: &[usize]) -> (Self, NodeId) {
        let b = GraphBuilder {
            nodes: vec![Node {
                layer: LayerSpec::Input {
                    shape: input_shape.to_vec(),
                },
                inputs: Vec::new(),
            }],
            shapes: vec![input_shape.to_vec()],
        };
        (b, NodeId(0))
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.shapes[id.0]
    }

    pub fn add(&mut self, layer: LayerSpec, inputs: &[NodeId]) -> Result<NodeId> {
        let ins: Vec<&[usize]> = inputs.iter().map(|n| self.shapes[n.0].as_slice()).collect();
        let shape = layer.infer(&ins).map_err(|e| {
            Error::shape(format!(
                "node {} ({}): {e}",
                self.nodes.len(),
                layer.kind_name()
            ))
        })?;
        self.nodes.push(Node {
            layer,
            inputs: inputs.iter().map(|n| n.0).collect(),
        });
        self.shapes.push(shape);
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Same-padded stride-1 convolution.
    pub fn conv(&mut self, x: NodeId, kernel: usize, out_channels: usize) -> Result<NodeId> {
        let in_channels = *self.shapes[x.0].last().unwrap_or(&0);
        self.add(
            LayerSpec::Conv2D {
                kernel: (kernel, kernel),
                stride: 1,
                in_channels,
                out_channels,
                padding: Padding::Same,
            },
            &[x],
        )
    }

    pub fn conv_relu(&mut self, x: NodeId, kernel: usize, out_channels: usize) -> Result<NodeId> {
        let c = self.conv(x, kernel, out_channels)?;
        self.relu(c)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.add(LayerSpec::ReLU, &[x])
    }

    pub fn max_pool(&mut self, x: NodeId) -> Result<NodeId> {
        self.add(LayerSpec::MaxPool2D { size: 2, stride: 2 }, &[x])
    }

    /// Transposed convolution with a `factor x factor` kernel and stride.
    pub fn up_conv(&mut self, x: NodeId, factor: usize, out_channels: usize) -> Result<NodeId> {
        let in_channels = *self.shapes[x.0].last().unwrap_or(&0);
        self.add(
            LayerSpec::TransposeConv2D {
                kernel: (factor, factor),
                stride: factor,
                in_channels,
                out_channels,
            },
            &[x],
        )
    }

    pub fn dense(&mut self, x: NodeId, out_features: usize) -> Result<NodeId> {
        let in_features = self.shapes[x.0].iter().product();
        self.add(
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            },
            &[x],
        )
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.add(
            LayerSpec::Reshape {
                shape: shape.to_vec(),
            },
            &[x],
        )
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.add(LayerSpec::ConcatChannels, xs)
    }

    /// Finishes the graph; `output` must be the most recently added node.
    pub fn finish(self, output: NodeId) -> Result<Graph> {
        if output.0 + 1 != self.nodes.len() {
            return Err(Error::shape("output must be the last node"));
        }
        Ok(Graph {
            nodes: self.nodes,
            shapes: self.shapes,
        })
    }
}

/// A graph with parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    graph: Graph,
    params: Vec<Tensor<T>>,
    // index of each node's first parameter tensor
    offsets: Vec<usize>,
}

/// Per-node outputs retained for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations<T> {
    outputs: Vec<Tensor<T>>,
    argmax: Vec<Vec<usize>>,
}

impl<T> Activations<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("non-empty graph")
    }

    pub fn node(&self, i: usize) -> &Tensor<T> {
        &self.outputs[i]
    }
}

fn param_offsets(graph: &Graph) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(graph.nodes.len());
    let mut k = 0;
    for n in &graph.nodes {
        offsets.push(k);
        k += n.layer.param_shapes().len();
    }
    offsets
}

impl<T: Scalar> Network<T> {
    /// Truncated-normal weights with standard deviation `std`, zero biases.
    pub fn init<R: Rng + ?Sized>(graph: Graph, std: f64, rng: &mut R) -> Self {
        Self::init_with(graph, |_| std, rng)
    }

    /// Like [`Network::init`] with a per-layer weight std.
    pub fn init_with<R: Rng + ?Sized>(graph: Graph, std_for: impl Fn(&LayerSpec) -> f64, rng: &mut R) -> Self {
        let mut params = Vec::new();
        for n in &graph.nodes {
            let shapes = n.layer.param_shapes();
            if let [w, b] = &shapes[..] {
                params.push(truncated_normal_init(w, std_for(&n.layer), rng));
                params.push(Tensor::zeros(b));
            }
        }
        let offsets = param_offsets(&graph);
        Network {
            graph,
            params,
            offsets,
        }
    }

    pub fn from_params(graph: Graph, params: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = graph.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::shape(format!(
                "graph has {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if s.as_slice() != p.shape() {
                return Err(Error::shape(format!(
                    "parameter {i}: expected {s:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        let offsets = param_offsets(&graph);
        Ok(Network {
            graph,
            params,
            offsets,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            graph: self.graph.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            offsets: self.offsets.clone(),
        }
    }

    fn weight_bias(&self, node: usize) -> (&Tensor<T>, &Tensor<T>) {
        let k = self.offsets[node];
        (&self.params[k], &self.params[k + 1])
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Activations<T>> {
        if input.shape() != self.graph.input_shape() {
            return Err(Error::shape(format!(
                "network input {:?}, got {:?}",
                self.graph.input_shape(),
                input.shape()
            )));
        }
        let n = self.graph.nodes.len();
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(n);
        let mut argmax = vec![Vec::new(); n];
        for (i, node) in self.graph.nodes.iter().enumerate() {
            let x = |k: usize| &outputs[node.inputs[k]];
            let y = match &node.layer {
                LayerSpec::Input { .. } => input.clone(),
                LayerSpec::Conv2D {
                    stride, padding, ..
                } => {
                    let (w, b) = self.weight_bias(i);
                    ops::conv2d_forward(x(0), w, b, *stride, *padding)?
                }
                LayerSpec::MaxPool2D { size, stride } => {
                    let (y, arg) = ops::maxpool2d_forward(x(0), *size, *stride)?;
                    argmax[i] = arg;
                    y
                }
                LayerSpec::TransposeConv2D { stride, .. } => {
                    let (w, b) = self.weight_bias(i);
                    ops::transpose_conv2d_forward(x(0), w, b, *stride)?
                }
                LayerSpec::FullyConnected { .. } => {
                    let (w, b) = self.weight_bias(i);
                    ops::fully_connected_forward(x(0), w, b)?
                }
                LayerSpec::ReLU => ops::relu_forward(x(0)),
                LayerSpec::ConcatChannels => {
                    let xs: Vec<&Tensor<T>> = (0..node.inputs.len()).map(x).collect();
                    ops::concat_channels_forward(&xs)?
                }
                LayerSpec::Reshape { shape } => x(0).clone().reshape(shape)?,
            };
            debug_assert_eq!(y.shape(), self.graph.shape_of(i), "node {i}");
            outputs.push(y);
        }
        Ok(Activations { outputs, argmax })
    }

    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut acts = self.forward(input)?;
        Ok(acts.outputs.pop().expect("non-empty graph"))
    }

    /// Backpropagates `d_output` through the activations of one forward
    /// pass, adding parameter gradients into `grads`. Returns the gradient
    /// with respect to the network input.
    pub fn backward(
        &self,
        acts: &Activations<T>,
        d_output: &Tensor<T>,
        grads: &mut [Tensor<T>],
    ) -> Result<Tensor<T>> {
        self.backward_impl(acts, d_output, grads, true)
    }

    /// Like [`Network::backward`] but skips the input gradient.
    pub fn backward_params(
        &self,
        acts: &Activations<T>,
        d_output: &Tensor<T>,
        grads: &mut [Tensor<T>],
    ) -> Result<()> {
        self.backward_impl(acts, d_output, grads, false).map(|_| ())
    }

    fn backward_impl(
        &self,
        acts: &Activations<T>,
        d_output: &Tensor<T>,
        grads: &mut [Tensor<T>],
        need_input: bool,
    ) -> Result<Tensor<T>> {
        let n = self.graph.nodes.len();
        if grads.len() != self.params.len() {
            return Err(Error::shape("gradient buffer does not match parameters"));
        }
        if d_output.shape() != self.graph.output_shape() {
            return Err(Error::shape(format!(
                "output gradient {:?}, expected {:?}",
                d_output.shape(),
                self.graph.output_shape()
            )));
        }
        let mut deltas: Vec<Option<Tensor<T>>> = vec![None; n];
        deltas[n - 1] = Some(d_output.clone());

        let push = |deltas: &mut Vec<Option<Tensor<T>>>, j: usize, d: Tensor<T>| match &mut deltas[j] {
            Some(acc) => acc.add_assign(&d),
            slot @ None => *slot = Some(d),
        };

        for i in (1..n).rev() {
            let Some(dy) = deltas[i].take() else {
                continue;
            };
            let node = &self.graph.nodes[i];
            let x = |k: usize| &acts.outputs[node.inputs[k]];
            let k = self.offsets[i];
            let need_dx = need_input || node.inputs.first() != Some(&0);
            match &node.layer {
                LayerSpec::Input { .. } => unreachable!("input is node 0"),
                LayerSpec::Conv2D {
                    stride, padding, ..
                } => {
                    let g = ops::conv2d_backward(x(0), &self.params[k], &dy, *stride, *padding, need_dx)?;
                    grads[k].add_assign(&g.dw);
                    grads[k + 1].add_assign(&g.db);
                    if let Some(dx) = g.dx {
                        push(&mut deltas, node.inputs[0], dx);
                    }
                }
                LayerSpec::TransposeConv2D { stride, .. } => {
                    let g = ops::transpose_conv2d_backward(x(0), &self.params[k], &dy, *stride, need_dx)?;
                    grads[k].add_assign(&g.dw);
                    grads[k + 1].add_assign(&g.db);
                    if let Some(dx) = g.dx {
                        push(&mut deltas, node.inputs[0], dx);
                    }
                }
                LayerSpec::FullyConnected { .. } => {
                    let g = ops::fully_connected_backward(x(0), &self.params[k], &dy, need_dx)?;
                    grads[k].add_assign(&g.dw);
                    grads[k + 1].add_assign(&g.db);
                    if let Some(dx) = g.dx {
                        push(&mut deltas, node.inputs[0], dx);
                    }
                }
                LayerSpec::MaxPool2D { .. } => {
                    let dx = ops::maxpool2d_backward(x(0).shape(), &acts.argmax[i], &dy)?;
                    push(&mut deltas, node.inputs[0], dx);
                }
                LayerSpec::ReLU => push(&mut deltas, node.inputs[0], ops::relu_backward(x(0), &dy)),
                LayerSpec::ConcatChannels => {
                    let chans: Vec<usize> = (0..node.inputs.len())
                        .map(|k| x(k).shape()[2])
                        .collect();
                    let parts = ops::concat_channels_backward(&chans, &dy)?;
                    for (&j, d) in node.inputs.iter().zip(parts) {
                        push(&mut deltas, j, d);
                    }
                }
                LayerSpec::Reshape { .. } => {
                    let d = dy.reshape(x(0).shape())?;
                    push(&mut deltas, node.inputs[0], d);
                }
            }
        }
        Ok(deltas[0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.graph.input_shape())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn shape_inference_through_unet_like_block() {
        let (mut b, x) = GraphBuilder::new(&[8, 8, 3]);
        let c1 = b.conv_relu(x, 5, 4).unwrap();
        let p = b.max_pool(c1).unwrap();
        let c2 = b.conv_relu(p, 5, 8).unwrap();
        let u = b.up_conv(c2, 2, 4).unwrap();
        let cat = b.concat(&[u, c1]).unwrap();
        assert_eq!(b.shape(cat), &[8, 8, 8]);
        let out = b.conv(cat, 1, 1).unwrap();
        let g = b.finish(out).unwrap();
        assert_eq!(g.output_shape(), &[8, 8, 1]);

        let net: Network<f64> = Network::init(g.clone(), 0.1, &mut seeded(0));
        let acts = net.forward(&Tensor::zeros(&[8, 8, 3])).unwrap();
        for i in 0..g.nodes().len() {
            assert_eq!(acts.node(i).shape(), g.shape_of(i));
        }
    }

    #[test]
    fn builder_rejects_bad_shapes() {
        let (mut b, x) = GraphBuilder::new(&[5, 5, 1]);
        assert!(b.max_pool(x).is_err());
        assert!(b.reshape(x, &[24]).is_err());
        let (mut b, x) = GraphBuilder::new(&[4]);
        assert!(b.conv(x, 3, 2).is_err());
    }

    #[test]
    fn from_nodes_rejects_forward_references() {
        let nodes = vec![
            Node {
                layer: LayerSpec::Input { shape: vec![2] },
                inputs: vec![],
            },
            Node {
                layer: LayerSpec::ReLU,
                inputs: vec![2],
            },
            Node {
                layer: LayerSpec::ReLU,
                inputs: vec![1],
            },
        ];
        assert!(Graph::from_nodes(nodes).is_err());
    }

    #[test]
    fn weight_counts() {
        let (mut b, x) = GraphBuilder::new(&[5]);
        let y = b.dense(x, 10).unwrap();
        assert_eq!(b.finish(y).unwrap().count_weights(), 60);

        let (mut b, x) = GraphBuilder::new(&[8, 8, 3]);
        let y = b.conv(x, 5, 16).unwrap();
        assert_eq!(b.finish(y).unwrap().count_weights(), 5 * 5 * 3 * 16 + 16);

        let (b, x) = GraphBuilder::new(&[4]);
        assert_eq!(b.finish(x).unwrap().count_weights(), 0);
    }

    #[test]
    fn init_zeroes_biases() {
        let (mut b, x) = GraphBuilder::new(&[6]);
        let y = b.dense(x, 4).unwrap();
        let net: Network<f32> = Network::init(b.finish(y).unwrap(), 0.05, &mut seeded(2));
        assert!(net.params()[1].data().iter().all(|&v| v == 0.0));
        assert!(net.params()[0].data().iter().any(|&v| v != 0.0));
    }
}
