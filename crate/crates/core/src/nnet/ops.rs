//! Inference kernels used by the optimized executor.

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

pub(crate) fn out_extent(n: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    if s == 0 || k == 0 {
        return Err(Error::invalid("window", "kernel and stride must be >= 1"));
    }
    if n + 2 * p < k {
        return Err(Error::shape(format!("extent >= {k} after padding"), n + 2 * p));
    }
    Ok((n + 2 * p - k) / s + 1)
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::shape(format!("rank-{rank} {what}"), format!("{:?}", t.shape())));
    }
    Ok(())
}

/// 3-D cross-correlation with zero padding. `x`: `[cin, d, h, w]`,
/// `weight`: `[cout, cin, kd, kh, kw]`, `bias`: `[cout]`.
pub fn conv3d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<Tensor> {
    expect_rank(x, 4, "conv input")?;
    expect_rank(weight, 5, "conv weight")?;
    let (cin, cout) = (x.shape()[0], weight.shape()[0]);
    if weight.shape()[1] != cin {
        return Err(Error::shape(
            format!("weight with {cin} input channels"),
            format!("{:?}", weight.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(format!("bias [{cout}]"), format!("{:?}", b.shape())));
        }
    }
    let n = [x.shape()[1], x.shape()[2], x.shape()[3]];
    let k = [weight.shape()[2], weight.shape()[3], weight.shape()[4]];
    let o = [
        out_extent(n[0], k[0], stride[0], pad[0])?,
        out_extent(n[1], k[1], stride[1], pad[1])?,
        out_extent(n[2], k[2], stride[2], pad[2])?,
    ];
    let in_vol = n[0] * n[1] * n[2];
    let out_vol = o[0] * o[1] * o[2];
    let ksz = k[0] * k[1] * k[2];
    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![0.0; cout * out_vol];

    if k == [1, 1, 1] && stride == [1, 1, 1] && pad == [0, 0, 0] {
        out.par_chunks_mut(out_vol).enumerate().for_each(|(oc, dst)| {
            dst.fill(bias.map_or(0.0, |b| b.data()[oc]));
            for ic in 0..cin {
                let wv = wd[oc * cin + ic];
                let src = &xd[ic * in_vol..(ic + 1) * in_vol];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            }
        });
        return Tensor::new(vec![cout, o[0], o[1], o[2]], out);
    }

    // Valid output range along one axis for kernel tap `kk`.
    let range = |a: usize, kk: usize| -> (usize, usize) {
        let (s, p) = (stride[a], pad[a]);
        let lo = if kk >= p { 0 } else { (p - kk).div_ceil(s) };
        // need o*s + kk - p <= n - 1
        let hi = if n[a] + p > kk {
            ((n[a] + p - kk - 1) / s + 1).min(o[a])
        } else {
            0
        };
        (lo, hi.max(lo))
    };

    out.par_chunks_mut(out_vol).enumerate().for_each(|(oc, dst)| {
        dst.fill(bias.map_or(0.0, |b| b.data()[oc]));
        for ic in 0..cin {
            let src = &xd[ic * in_vol..(ic + 1) * in_vol];
            let wbase = (oc * cin + ic) * ksz;
            for kz in 0..k[0] {
                let (z0, z1) = range(0, kz);
                for ky in 0..k[1] {
                    let (y0, y1) = range(1, ky);
                    for kx in 0..k[2] {
                        let (x0, x1) = range(2, kx);
                        let wv = wd[wbase + (kz * k[1] + ky) * k[2] + kx];
                        for oz in z0..z1 {
                            let iz = oz * stride[0] + kz - pad[0];
                            for oy in y0..y1 {
                                let iy = oy * stride[1] + ky - pad[1];
                                let srow = &src[(iz * n[1] + iy) * n[2]..];
                                let drow = &mut dst[(oz * o[1] + oy) * o[2]..(oz * o[1] + oy + 1) * o[2]];
                                if stride[2] == 1 {
                                    let off = x0 + kx - pad[2];
                                    for (d, &s) in drow[x0..x1].iter_mut().zip(&srow[off..off + (x1 - x0)]) {
                                        *d += wv * s;
                                    }
                                } else {
                                    for ox in x0..x1 {
                                        drow[ox] += wv * srow[ox * stride[2] + kx - pad[2]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::new(vec![cout, o[0], o[1], o[2]], out)
}

/// Per-channel affine normalisation with frozen statistics.
pub fn batchnorm_inference(
    x: &Tensor,
    mean: &[f64],
    var: &[f64],
    scale: &[f64],
    shift: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let c = x.shape().first().copied().unwrap_or(0);
    for (name, v) in [("mean", mean), ("var", var), ("scale", scale), ("shift", shift)] {
        if v.len() != c {
            return Err(Error::shape(format!("{c} {name} values"), v.len()));
        }
    }
    if let Some(bad) = var.iter().find(|&&v| v < 0.0 || v.is_nan()) {
        return Err(Error::invalid("batchnorm variance", format!("{bad} < 0")));
    }
    let inner = x.inner_len();
    let mut out = x.clone();
    out.data_mut()
        .par_chunks_mut(inner.max(1))
        .enumerate()
        .for_each(|(ch, chunk)| {
            let inv = scale[ch] / (var[ch] + eps).sqrt();
            for v in chunk {
                *v = (*v - mean[ch]) * inv + shift[ch];
            }
        });
    Ok(out)
}

pub fn relu(x: Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn leaky_relu(x: Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

#[inline]
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Windowed mean over `[c, d, h, w]`, no padding.
pub fn avgpool3d(x: &Tensor, kernel: [usize; 3], stride: [usize; 3]) -> Result<Tensor> {
    expect_rank(x, 4, "pool input")?;
    let c = x.shape()[0];
    let n = [x.shape()[1], x.shape()[2], x.shape()[3]];
    let o = [
        out_extent(n[0], kernel[0], stride[0], 0)?,
        out_extent(n[1], kernel[1], stride[1], 0)?,
        out_extent(n[2], kernel[2], stride[2], 0)?,
    ];
    let norm = 1.0 / (kernel[0] * kernel[1] * kernel[2]) as f64;
    let (in_vol, out_vol) = (n[0] * n[1] * n[2], o[0] * o[1] * o[2]);
    let mut out = vec![0.0; c * out_vol];
    out.par_chunks_mut(out_vol).enumerate().for_each(|(ch, dst)| {
        let src = &x.data()[ch * in_vol..(ch + 1) * in_vol];
        for oz in 0..o[0] {
            for oy in 0..o[1] {
                for ox in 0..o[2] {
                    let mut acc = 0.0;
                    for dz in 0..kernel[0] {
                        for dy in 0..kernel[1] {
                            let row = ((oz * stride[0] + dz) * n[1] + oy * stride[1] + dy) * n[2];
                            for dx in 0..kernel[2] {
                                acc += src[row + ox * stride[2] + dx];
                            }
                        }
                    }
                    dst[(oz * o[1] + oy) * o[2] + ox] = acc * norm;
                }
            }
        }
    });
    Tensor::new(vec![c, o[0], o[1], o[2]], out)
}

/// Fully connected layer on the flattened input. `weight`: `[out, in]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank(weight, 2, "dense weight")?;
    let (out, inp) = (weight.shape()[0], weight.shape()[1]);
    if x.len() != inp || bias.shape() != [out] {
        return Err(Error::shape(
            format!("{inp} inputs and bias [{out}]"),
            format!("{} inputs, bias {:?}", x.len(), bias.shape()),
        ));
    }
    let data = (0..out)
        .map(|o| {
            let row = &weight.data()[o * inp..(o + 1) * inp];
            bias.data()[o] + row.iter().zip(x.data()).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect();
    Tensor::new(vec![out], data)
}

/// Stacks tensors along the leading (channel) axis.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(Error::invalid("concat", "no inputs"));
    };
    let tail = &first.shape()[1..];
    let mut lead = 0;
    for p in parts {
        if p.rank() != first.rank() || &p.shape()[1..] != tail {
            return Err(Error::shape(format!("[*, {tail:?}]"), format!("{:?}", p.shape())));
        }
        lead += p.shape()[0];
    }
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let mut shape = vec![lead];
    shape.extend_from_slice(tail);
    Tensor::new(shape, data)
}
