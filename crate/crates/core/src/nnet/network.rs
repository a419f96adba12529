use std::collections::BTreeSet;
use std::fmt;

use super::ops::out_extent;
use crate::error::{Error, Result};

/// Index of a node; `0` is the network input.
pub type NodeId = usize;

pub const INPUT: NodeId = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv3d {
        out_ch: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    },
    BatchNorm {
        eps: f64,
    },
    ReLU,
    LeakyReLU(f64),
    AvgPool {
        kernel: [usize; 3],
        stride: [usize; 3],
    },
    Flatten,
    Dense {
        out: usize,
    },
    Sigmoid,
    Concat,
    /// Inference no-op; the rate is kept as metadata.
    Dropout(f64),
}

impl LayerSpec {
    pub fn conv(out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv3d {
            out_ch,
            kernel: [kernel; 3],
            stride: [stride; 3],
            pad: [pad; 3],
        }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm { eps: 1e-3 }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv3d { .. } => "conv3d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::ReLU => "relu",
            LayerSpec::LeakyReLU(_) => "leaky_relu",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Concat => "concat",
            LayerSpec::Dropout(_) => "dropout",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::invalid("layer", reason.to_string()));
        match *self {
            LayerSpec::Conv3d {
                out_ch,
                kernel,
                stride,
                ..
            } => {
                if out_ch == 0 || kernel.contains(&0) || stride.contains(&0) {
                    return bad("conv3d needs out_ch, kernel and stride >= 1");
                }
            }
            LayerSpec::AvgPool { kernel, stride } => {
                if kernel.contains(&0) || stride.contains(&0) {
                    return bad("avgpool needs kernel and stride >= 1");
                }
            }
            LayerSpec::Dense { out: 0 } => return bad("dense needs out >= 1"),
            LayerSpec::BatchNorm { eps } if !(eps >= 0.0) => return bad("batchnorm eps must be >= 0"),
            LayerSpec::LeakyReLU(s) if !s.is_finite() => return bad("leaky relu slope must be finite"),
            LayerSpec::Dropout(r) if !(0.0..1.0).contains(&r) => return bad("dropout rate must lie in [0, 1)"),
            _ => {}
        }
        Ok(())
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            LayerSpec::Concat => n >= 1,
            _ => n == 1,
        }
    }

    /// Output shape for the given input shapes.
    pub fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        self.validate()?;
        if !self.arity_ok(inputs.len()) {
            return Err(Error::invalid("layer", format!("{} got {} inputs", self.kind(), inputs.len())));
        }
        let x = inputs[0];
        let feature_map = |x: &[usize]| -> Result<()> {
            if x.len() != 4 {
                return Err(Error::shape("[c, d, h, w]", format!("{x:?}")));
            }
            Ok(())
        };
        match *self {
            LayerSpec::Conv3d {
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                feature_map(x)?;
                let mut s = vec![out_ch];
                for a in 0..3 {
                    s.push(out_extent(x[a + 1], kernel[a], stride[a], pad[a])?);
                }
                Ok(s)
            }
            LayerSpec::AvgPool { kernel, stride } => {
                feature_map(x)?;
                let mut s = vec![x[0]];
                for a in 0..3 {
                    s.push(out_extent(x[a + 1], kernel[a], stride[a], 0)?);
                }
                Ok(s)
            }
            LayerSpec::BatchNorm { .. } => {
                if x.is_empty() {
                    return Err(Error::shape("rank >= 1", "[]"));
                }
                Ok(x.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![x.iter().product()]),
            LayerSpec::Dense { out } => Ok(vec![out]),
            LayerSpec::Concat => {
                let tail = &x[1..];
                let mut lead = 0;
                for s in inputs {
                    if s.len() != x.len() || &s[1..] != tail {
                        return Err(Error::shape(format!("[*, {tail:?}]"), format!("{s:?}")));
                    }
                    lead += s[0];
                }
                let mut out = vec![lead];
                out.extend_from_slice(tail);
                Ok(out)
            }
            LayerSpec::ReLU | LayerSpec::LeakyReLU(_) | LayerSpec::Sigmoid | LayerSpec::Dropout(_) => {
                Ok(x.to_vec())
            }
        }
    }
}

/// Architectural grouping used for structural reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockTag {
    Initial { scale: usize },
    Basic { depth: usize },
    Transition { depth: usize, scale: usize },
    Classifier,
}

impl fmt::Display for BlockTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockTag::Initial { scale } => write!(f, "initial[s{scale}]"),
            BlockTag::Basic { depth } => write!(f, "basic[d{depth}]"),
            BlockTag::Transition { depth, scale } => write!(f, "transition[d{depth},s{scale}]"),
            BlockTag::Classifier => f.write_str("classifier"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub layer: LayerSpec,
    pub inputs: Vec<NodeId>,
    pub block: Option<BlockTag>,
}

/// A trainable or stored parameter tensor required by a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    /// Fan-in used by the he_normal initializer; `None` for non-kernel tensors.
    pub fan_in: Option<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Acyclic inference graph. Nodes are appended in topological order and every
/// shape is inferred at insertion time.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    nodes: Vec<Node>,
    shapes: Vec<Vec<usize>>,
    output: NodeId,
}

impl Network {
    /// A network with no layers: the identity.
    pub fn new(input_shape: Vec<usize>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid("input shape", format!("{input_shape:?}")));
        }
        Ok(Network {
            shapes: vec![input_shape.clone()],
            input_shape,
            nodes: Vec::new(),
            output: INPUT,
        })
    }

    /// Appends a layer and makes it the output.
    pub fn add(&mut self, name: impl Into<String>, layer: LayerSpec, inputs: &[NodeId]) -> Result<NodeId> {
        self.add_in_block(name, layer, inputs, None)
    }

    pub fn add_in_block(
        &mut self,
        name: impl Into<String>,
        layer: LayerSpec,
        inputs: &[NodeId],
        block: Option<BlockTag>,
    ) -> Result<NodeId> {
        let name = name.into();
        let id = self.nodes.len() + 1;
        if let Some(&bad) = inputs.iter().find(|&&i| i >= id) {
            return Err(Error::invalid("network", format!("node '{name}' reads undefined node {bad}")));
        }
        if name.is_empty() || name.len() > u16::MAX as usize - 8 || self.nodes.iter().any(|n| n.name == name) {
            return Err(Error::invalid("network", format!("node name '{name}' is empty, too long or duplicated")));
        }
        let in_shapes: Vec<&[usize]> = inputs.iter().map(|&i| self.shapes[i].as_slice()).collect();
        let shape = layer
            .infer_shape(&in_shapes)
            .map_err(|e| Error::invalid("network", format!("node '{name}': {e}")))?;
        self.nodes.push(Node {
            name,
            layer,
            inputs: inputs.to_vec(),
            block,
        });
        self.shapes.push(shape);
        self.output = id;
        Ok(id)
    }

    /// Appends a chain of single-input layers after `from`.
    pub fn chain(&mut self, prefix: &str, from: NodeId, layers: Vec<LayerSpec>, block: Option<BlockTag>) -> Result<NodeId> {
        let mut at = from;
        for (i, l) in layers.into_iter().enumerate() {
            at = self.add_in_block(format!("{prefix}.{i}"), l, &[at], block)?;
        }
        Ok(at)
    }

    pub fn set_output(&mut self, id: NodeId) -> Result<()> {
        if id > self.nodes.len() {
            return Err(Error::invalid("network", format!("output node {id} does not exist")));
        }
        self.output = id;
        Ok(())
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.shapes[self.output]
    }

    pub fn shape_of(&self, id: NodeId) -> &[usize] {
        &self.shapes[id]
    }

    /// Node for id `>= 1`.
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id - 1]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parameter tensors in node order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let in_shape = &self.shapes[n.inputs[0]];
            let p = |suffix: &str, shape: Vec<usize>, trainable: bool, fan_in: Option<usize>| ParamSpec {
                name: format!("{}.{suffix}", n.name),
                shape,
                trainable,
                fan_in,
            };
            match n.layer {
                LayerSpec::Conv3d { out_ch, kernel, .. } => {
                    let fan_in = in_shape[0] * kernel.iter().product::<usize>();
                    out.push(p("weight", vec![out_ch, in_shape[0], kernel[0], kernel[1], kernel[2]], true, Some(fan_in)));
                    out.push(p("bias", vec![out_ch], true, None));
                }
                LayerSpec::BatchNorm { .. } => {
                    let c = self.shapes[i + 1][0];
                    out.push(p("gamma", vec![c], true, None));
                    out.push(p("beta", vec![c], true, None));
                    out.push(p("mean", vec![c], false, None));
                    out.push(p("var", vec![c], false, None));
                }
                LayerSpec::Dense { out: o } => {
                    let inp: usize = in_shape.iter().product();
                    out.push(p("weight", vec![o, inp], true, Some(inp)));
                    out.push(p("bias", vec![o], true, None));
                }
                _ => {}
            }
        }
        out
    }

    pub fn trainable_param_count(&self) -> usize {
        self.param_specs().iter().filter(|p| p.trainable).map(ParamSpec::len).sum()
    }

    /// Distinct block tags present in the graph.
    pub fn blocks(&self) -> BTreeSet<BlockTag> {
        self.nodes.iter().filter_map(|n| n.block).collect()
    }

    /// How many later nodes (plus the output slot) read each node.
    pub(crate) fn use_counts(&self) -> Vec<usize> {
        let mut uses = vec![0; self.nodes.len() + 1];
        for n in &self.nodes {
            for &i in &n.inputs {
                uses[i] += 1;
            }
        }
        uses[self.output] += 1;
        uses
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_inferred_on_insert() {
        let mut net = Network::new(vec![1, 8, 8, 8]).unwrap();
        let c = net.add("c", LayerSpec::conv(4, 3, 2, 1), &[INPUT]).unwrap();
        assert_eq!(net.shape_of(c), &[4, 4, 4, 4]);
        let p = net.add("p", LayerSpec::AvgPool { kernel: [2; 3], stride: [2; 3] }, &[c]).unwrap();
        let f = net.add("f", LayerSpec::Flatten, &[p]).unwrap();
        assert_eq!(net.shape_of(f), &[32]);
        let d = net.add("d", LayerSpec::Dense { out: 3 }, &[f]).unwrap();
        assert_eq!(net.output_shape(), &[3]);
        assert_eq!(net.output(), d);
        let specs = net.param_specs();
        assert_eq!(specs[0].shape, vec![4, 1, 3, 3, 3]);
        assert_eq!(specs[0].fan_in, Some(27));
        assert_eq!(net.trainable_param_count(), 4 * 27 + 4 + 3 * 32 + 3);
    }

    #[test]
    fn bad_graphs_rejected() {
        let mut net = Network::new(vec![2, 4, 4, 4]).unwrap();
        assert!(net.add("c", LayerSpec::conv(1, 5, 1, 0), &[INPUT]).is_err());
        assert!(net.add("x", LayerSpec::ReLU, &[3]).is_err());
        let a = net.add("a", LayerSpec::conv(1, 3, 2, 1), &[INPUT]).unwrap();
        assert!(net.add("cat", LayerSpec::Concat, &[INPUT, a]).is_err());
        assert!(net.add("a", LayerSpec::ReLU, &[a]).is_err());
        assert!(net.add("r", LayerSpec::ReLU, &[INPUT, a]).is_err());
        assert!(net.add("d", LayerSpec::Dropout(1.0), &[a]).is_err());
        assert!(Network::new(vec![]).is_err());
    }
}
