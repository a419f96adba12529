//! Optimized executor: rayon-parallel kernels from [`super::ops`], with
//! intermediate tensors released after their last consumer.

use super::{ops, LayerSpec, Network, NodeId, Tensor, Weights};
use crate::error::{Error, Result};

pub(crate) fn check_input(net: &Network, x: &Tensor) -> Result<()> {
    if x.shape() != net.input_shape() {
        return Err(Error::shape(format!("input {:?}", net.input_shape()), format!("{:?}", x.shape())));
    }
    Ok(())
}

fn eval_node(net: &Network, w: &Weights, id: NodeId, inputs: &[&Tensor]) -> Result<Tensor> {
    let node = net.node(id);
    let p = |suffix: &str| w.require(&format!("{}.{suffix}", node.name));
    let x = inputs[0];
    Ok(match node.layer {
        LayerSpec::Conv3d { stride, pad, .. } => ops::conv3d(x, p("weight")?, Some(p("bias")?), stride, pad)?,
        LayerSpec::BatchNorm { eps } => ops::batchnorm_inference(
            x,
            p("mean")?.data(),
            p("var")?.data(),
            p("gamma")?.data(),
            p("beta")?.data(),
            eps,
        )?,
        LayerSpec::ReLU => ops::relu(x.clone()),
        LayerSpec::LeakyReLU(s) => ops::leaky_relu(x.clone(), s),
        LayerSpec::Sigmoid => ops::sigmoid(x.clone()),
        LayerSpec::AvgPool { kernel, stride } => ops::avgpool3d(x, kernel, stride)?,
        LayerSpec::Flatten => x.clone().reshape(vec![x.len()])?,
        LayerSpec::Dense { .. } => ops::dense(x, p("weight")?, p("bias")?)?,
        LayerSpec::Concat => ops::concat(inputs)?,
        LayerSpec::Dropout(_) => x.clone(),
    })
}

/// Evaluates the network output.
pub fn forward(net: &Network, weights: &Weights, x: &Tensor) -> Result<Tensor> {
    weights.check_bound(net)?;
    check_input(net, x)?;
    let mut uses = net.use_counts();
    let mut values: Vec<Option<Tensor>> = vec![None; net.len() + 1];
    values[0] = Some(x.clone());
    for id in 1..=net.len() {
        let node = net.node(id);
        let out = {
            let ins: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|&i| values[i].as_ref().expect("value alive until last use"))
                .collect();
            eval_node(net, weights, id, &ins)?
        };
        for &i in &node.inputs {
            uses[i] -= 1;
            if uses[i] == 0 {
                values[i] = None;
            }
        }
        if uses[id] > 0 {
            values[id] = Some(out);
        }
    }
    Ok(values[net.output()].take().expect("output retained"))
}

/// Evaluates every node, returning outputs indexed by [`NodeId`] (index 0 is
/// the input). Intended for small networks and diagnostics.
pub fn forward_all(net: &Network, weights: &Weights, x: &Tensor) -> Result<Vec<Tensor>> {
    weights.check_bound(net)?;
    check_input(net, x)?;
    let mut values = vec![x.clone()];
    for id in 1..=net.len() {
        let ins: Vec<&Tensor> = net.node(id).inputs.iter().map(|&i| &values[i]).collect();
        let out = eval_node(net, weights, id, &ins)?;
        values.push(out);
    }
    Ok(values)
}
