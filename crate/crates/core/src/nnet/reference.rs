//! Slow reference executor. Every layer is written as plain scalar loops over
//! explicitly computed indices, sharing no kernel code with the optimized
//! path, so the two can serve as oracles for each other.

use super::{LayerSpec, Network, Tensor, Weights};
use crate::error::{Error, Result};

fn conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Result<Tensor> {
    let xs = x.shape();
    let ws = w.shape();
    let (cin, d, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, kd, kh, kw) = (ws[0], ws[2], ws[3], ws[4]);
    if ws[1] != cin {
        return Err(Error::shape(format!("{cin} input channels"), ws[1]));
    }
    let ext = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
    let (od, oh, ow) = (
        ext(d, kd, stride[0], pad[0]),
        ext(h, kh, stride[1], pad[1]),
        ext(wd, kw, stride[2], pad[2]),
    );
    let mut out = Vec::with_capacity(cout * od * oh * ow);
    for oc in 0..cout {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..cin {
                        for a in 0..kd {
                            let iz = (z * stride[0] + a) as isize - pad[0] as isize;
                            if iz < 0 || iz >= d as isize {
                                continue;
                            }
                            for bb in 0..kh {
                                let iy = (y * stride[1] + bb) as isize - pad[1] as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for c in 0..kw {
                                    let ix = (xx * stride[2] + c) as isize - pad[2] as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    let xi = ((ic * d + iz as usize) * h + iy as usize) * wd + ix as usize;
                                    let wi = (((oc * cin + ic) * kd + a) * kh + bb) * kw + c;
                                    acc += x.data()[xi] * w.data()[wi];
                                }
                            }
                        }
                    }
                    out.push(acc + b.data()[oc]);
                }
            }
        }
    }
    Tensor::new(vec![cout, od, oh, ow], out)
}

fn pool(x: &Tensor, k: [usize; 3], s: [usize; 3]) -> Result<Tensor> {
    let xs = x.shape();
    let (c, d, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (od, oh, ow) = ((d - k[0]) / s[0] + 1, (h - k[1]) / s[1] + 1, (w - k[2]) / s[2] + 1);
    let mut out = Vec::new();
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    let mut n = 0.0;
                    for a in 0..k[0] {
                        for b in 0..k[1] {
                            for cc in 0..k[2] {
                                let i = ((ch * d + z * s[0] + a) * h + y * s[1] + b) * w + xx * s[2] + cc;
                                acc += x.data()[i];
                                n += 1.0;
                            }
                        }
                    }
                    out.push(acc / n);
                }
            }
        }
    }
    Tensor::new(vec![c, od, oh, ow], out)
}

/// Evaluates the network output with scalar loops.
pub fn reference_forward(net: &Network, weights: &Weights, x: &Tensor) -> Result<Tensor> {
    let mut all = reference_forward_all(net, weights, x)?;
    Ok(all.swap_remove(net.output()))
}

/// Every node output, indexed by node id (index 0 is the input).
pub fn reference_forward_all(net: &Network, weights: &Weights, x: &Tensor) -> Result<Vec<Tensor>> {
    weights.check_bound(net)?;
    super::exec::check_input(net, x)?;
    let mut values = vec![x.clone()];
    for node in net.nodes() {
        let p = |s: &str| weights.require(&format!("{}.{s}", node.name));
        let x = &values[node.inputs[0]];
        let y = match node.layer {
            LayerSpec::Conv3d { stride, pad, .. } => conv(x, p("weight")?, p("bias")?, stride, pad)?,
            LayerSpec::BatchNorm { eps } => {
                let (m, v, g, b) = (p("mean")?, p("var")?, p("gamma")?, p("beta")?);
                let per = x.len() / x.shape()[0];
                let mut out = Vec::with_capacity(x.len());
                for (i, &val) in x.data().iter().enumerate() {
                    let c = i / per;
                    if v.data()[c] < 0.0 {
                        return Err(Error::invalid("batchnorm variance", "negative"));
                    }
                    out.push(g.data()[c] * (val - m.data()[c]) / (v.data()[c] + eps).sqrt() + b.data()[c]);
                }
                Tensor::new(x.shape().to_vec(), out)?
            }
            LayerSpec::ReLU => {
                let d = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                Tensor::new(x.shape().to_vec(), d)?
            }
            LayerSpec::LeakyReLU(s) => {
                let d = x.data().iter().map(|&v| if v < 0.0 { v * s } else { v }).collect();
                Tensor::new(x.shape().to_vec(), d)?
            }
            LayerSpec::Sigmoid => {
                let d = x.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
                Tensor::new(x.shape().to_vec(), d)?
            }
            LayerSpec::AvgPool { kernel, stride } => pool(x, kernel, stride)?,
            LayerSpec::Flatten => Tensor::new(vec![x.len()], x.data().to_vec())?,
            LayerSpec::Dense { out } => {
                let (w, b) = (p("weight")?, p("bias")?);
                let n = x.len();
                let mut d = Vec::with_capacity(out);
                for o in 0..out {
                    let mut acc = b.data()[o];
                    for i in 0..n {
                        acc += w.data()[o * n + i] * x.data()[i];
                    }
                    d.push(acc);
                }
                Tensor::new(vec![out], d)?
            }
            LayerSpec::Concat => {
                let mut shape = x.shape().to_vec();
                shape[0] = 0;
                let mut d = Vec::new();
                for &i in &node.inputs {
                    shape[0] += values[i].shape()[0];
                    d.extend(values[i].data().iter().copied());
                }
                Tensor::new(shape, d)?
            }
            LayerSpec::Dropout(_) => x.clone(),
        };
        values.push(y);
    }
    Ok(values)
}
