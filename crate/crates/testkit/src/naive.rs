//! Six-nested-loop reference kernels with multiplication counting, and a
//! reference graph interpreter built on them.

use cxrnet_core::arch::{ArchGraph, NodeKind, ParamStore};
use cxrnet_core::tensor::{concat_channels, ConvSpec};
use cxrnet_core::Tensor;
use std::collections::BTreeMap;

/// Reference grouped 2-D convolution straight from the definition.
///
/// Padded positions contribute an explicit multiply by zero, so the returned
/// multiplication count equals `kh * kw * (cin/groups) * cout * ho * wo` per
/// image by construction.
pub fn naive_conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> (Tensor, u64) {
    let [n, c, h, w] = [
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    ];
    assert_eq!(c, spec.in_channels, "input channels");
    assert_eq!(weight.shape(), spec.weight_shape(), "weight shape");
    let (ho, wo) = spec.output_hw(h, w).expect("output geometry");
    let (cg, ocg) = (c / spec.groups, spec.out_channels / spec.groups);
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let (xd, wd) = (input.data(), weight.data());
    let oc = spec.out_channels;

    let mut out = vec![0.0; n * oc * ho * wo];
    let mut mults: u64 = 0;
    for ni in 0..n {
        for o in 0..oc {
            let g = o / ocg;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = match bias {
                        Some(b) => b.data()[o],
                        None => 0.0,
                    };
                    for ic in 0..cg {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * s + ky) as isize - p as isize;
                                let ix = (ox * s + kx) as isize - p as isize;
                                let xv = if iy >= 0
                                    && iy < h as isize
                                    && ix >= 0
                                    && ix < w as isize
                                {
                                    xd[((ni * c + g * cg + ic) * h + iy as usize) * w
                                        + ix as usize]
                                } else {
                                    0.0
                                };
                                let wv = wd[((o * cg + ic) * kh + ky) * kw + kx];
                                acc += wv * xv;
                                mults += 1;
                            }
                        }
                    }
                    out[((ni * oc + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (
        Tensor::new(vec![n, oc, ho, wo], out).expect("shape"),
        mults,
    )
}

/// Evaluates a graph with the reference kernels, counting every
/// multiplication the conv and dense layers execute. Activations, pooling,
/// additions and the softmax normalisation multiply nothing.
pub fn naive_graph_forward(graph: &ArchGraph, params: &ParamStore, input: &Tensor) -> (Tensor, u64) {
    let order = graph.topo_order().expect("acyclic graph");
    let mut values: BTreeMap<_, Tensor> = BTreeMap::new();
    let mut mults: u64 = 0;
    for id in order {
        let node = graph.node(id).expect("known id");
        let ins: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i]).collect();
        let out = match &node.kind {
            NodeKind::Input { .. } => input.clone(),
            NodeKind::Conv { spec, .. } => {
                let x = if ins.len() == 1 {
                    ins[0].clone()
                } else {
                    concat_channels(&ins).expect("conformant concat")
                };
                let np = params.node_params(id).expect("parameterised conv");
                let (y, m) = naive_conv2d(
                    &x,
                    params.tensor(np.weight),
                    Some(params.tensor(np.bias)),
                    spec,
                );
                mults += m;
                y
            }
            NodeKind::Relu => Tensor::from_fn(ins[0].shape(), |i| ins[0].data()[i].max(0.0)),
            NodeKind::MaxPool { window, stride } => {
                let [n, c, h, w] = [
                    ins[0].shape()[0],
                    ins[0].shape()[1],
                    ins[0].shape()[2],
                    ins[0].shape()[3],
                ];
                let ho = (h - window) / stride + 1;
                let wo = (w - window) / stride + 1;
                let src = ins[0].data();
                let mut out = vec![f64::NEG_INFINITY; n * c * ho * wo];
                for ni in 0..n {
                    for ch in 0..c {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let mut best = f64::NEG_INFINITY;
                                for ky in 0..*window {
                                    for kx in 0..*window {
                                        let v = src[((ni * c + ch) * h + oy * stride + ky) * w
                                            + ox * stride
                                            + kx];
                                        if v > best {
                                            best = v;
                                        }
                                    }
                                }
                                out[((ni * c + ch) * ho + oy) * wo + ox] = best;
                            }
                        }
                    }
                }
                Tensor::new(vec![n, c, ho, wo], out).expect("shape")
            }
            NodeKind::GlobalAvgPool => {
                let [n, c, h, w] = [
                    ins[0].shape()[0],
                    ins[0].shape()[1],
                    ins[0].shape()[2],
                    ins[0].shape()[3],
                ];
                let hw = (h * w) as f64;
                let src = ins[0].data();
                let out: Vec<f64> = (0..n * c)
                    .map(|i| src[i * h * w..(i + 1) * h * w].iter().sum::<f64>() / hw)
                    .collect();
                Tensor::new(vec![n, c], out).expect("shape")
            }
            NodeKind::Dense { .. } => {
                let np = params.node_params(id).expect("parameterised dense");
                let (y, m) = naive_dense(ins[0], params.tensor(np.weight), params.tensor(np.bias));
                mults += m;
                y
            }
            NodeKind::Add => {
                let mut acc = ins[0].clone();
                for other in &ins[1..] {
                    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
                        *a += *b;
                    }
                }
                acc
            }
            NodeKind::Softmax => {
                let (n, k) = (ins[0].shape()[0], ins[0].shape()[1]);
                let src = ins[0].data();
                let mut out = vec![0.0; n * k];
                for row in 0..n {
                    let r = &src[row * k..(row + 1) * k];
                    let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    for (j, v) in e.iter().enumerate() {
                        out[row * k + j] = v / s;
                    }
                }
                Tensor::new(vec![n, k], out).expect("shape")
            }
        };
        values.insert(id, out);
    }
    let out = values
        .remove(&graph.output_node().expect("single sink"))
        .expect("evaluated");
    (out, mults)
}

/// Reference dense layer `y = x . W^T + b` with multiplication counting.
pub fn naive_dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> (Tensor, u64) {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let o = weight.shape()[0];
    assert_eq!(weight.shape()[1], f, "weight features");
    let mut out = vec![0.0; n * o];
    let mut mults: u64 = 0;
    for i in 0..n {
        for j in 0..o {
            let mut acc = bias.data()[j];
            for k in 0..f {
                acc += x.data()[i * f + k] * weight.data()[j * f + k];
                mults += 1;
            }
            out[i * o + j] = acc;
        }
    }
    (Tensor::new(vec![n, o], out).expect("shape"), mults)
}
