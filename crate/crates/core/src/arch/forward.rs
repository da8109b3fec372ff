//! Graph evaluation on the autodiff tape.
//!
//! Node order in storage is irrelevant: evaluation walks the topological
//! order, so permuting the node list cannot change results. Hub convs with
//! several inputs concatenate along the channel axis before convolving.

use crate::arch::{ArchGraph, NodeId, NodeKind};
use crate::arch::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Value};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

/// Tape handles for every parameter tensor, index-aligned with the store.
pub struct TapeBinding {
    values: Vec<Value>,
}

impl TapeBinding {
    pub fn value(&self, idx: usize) -> Value {
        self.values[idx]
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }
}

/// Records all parameters on the tape as leaves. `trainable` controls
/// whether gradients will flow to them.
pub fn bind_params(tape: &mut Tape, params: &ParamStore, trainable: bool) -> TapeBinding {
    let values = params
        .tensors()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.set_requires_grad(trainable);
            tape.leaf(t)
        })
        .collect();
    TapeBinding { values }
}

/// Evaluates the graph on `input` (shape `[N, C, H, W]`), returning the
/// handle of the output node's value.
pub fn graph_forward(
    graph: &ArchGraph,
    params: &ParamStore,
    binding: &TapeBinding,
    tape: &mut Tape,
    input: Value,
) -> Result<Value> {
    let input_id = graph.input_node()?;
    let order = graph.topo_order()?;
    let mut values: BTreeMap<NodeId, Value> = BTreeMap::new();

    for id in order {
        let node = graph.node(id).expect("topo covers ids");
        let ins: Vec<Value> = node.inputs.iter().map(|i| values[i]).collect();
        let out = match &node.kind {
            NodeKind::Input { channels, height, width } => {
                if id != input_id {
                    return Err(Error::InvalidGraph("multiple input nodes".into()));
                }
                let shape = tape.value(input).shape().to_vec();
                if shape.len() != 4
                    || shape[1] != *channels
                    || shape[2] != *height
                    || shape[3] != *width
                {
                    return Err(Error::ShapeMismatch(format!(
                        "node {:?}: batch shape {shape:?} does not match input [N, {channels}, {height}, {width}]",
                        node.name
                    )));
                }
                input
            }
            NodeKind::Conv { spec, .. } => {
                let np = params.node_params(id).ok_or_else(|| {
                    Error::InvalidGraph(format!("node {:?} has no parameters", node.name))
                })?;
                let x = if ins.len() == 1 {
                    ins[0]
                } else {
                    tape.concat_channels(&ins)
                        .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?
                };
                tape.conv2d(
                    x,
                    binding.value(np.weight),
                    Some(binding.value(np.bias)),
                    spec,
                )
                .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?
            }
            NodeKind::Relu => tape.relu(ins[0]),
            NodeKind::MaxPool { window, stride } => tape
                .max_pool(ins[0], *window, *stride)
                .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?,
            NodeKind::GlobalAvgPool => tape
                .global_avg_pool(ins[0])
                .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?,
            NodeKind::Dense { .. } => {
                let np = params.node_params(id).ok_or_else(|| {
                    Error::InvalidGraph(format!("node {:?} has no parameters", node.name))
                })?;
                tape.dense(ins[0], binding.value(np.weight), binding.value(np.bias))
                    .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?
            }
            NodeKind::Add => {
                let mut acc = ins[0];
                for v in &ins[1..] {
                    acc = tape
                        .add(acc, *v)
                        .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?;
                }
                acc
            }
            NodeKind::Softmax => tape
                .softmax(ins[0], 1)
                .map_err(|e| Error::ShapeMismatch(format!("node {:?}: {e}", node.name)))?,
        };
        values.insert(id, out);
    }
    Ok(values[&graph.output_node()?])
}

/// Convenience inference: evaluates the graph without tracking gradients
/// and returns the `[N, classes]` output probabilities.
pub fn infer(graph: &ArchGraph, params: &ParamStore, batch: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let binding = bind_params(&mut tape, params, false);
    let input = tape.leaf(batch.clone());
    let out = graph_forward(graph, params, &binding, &mut tape, input)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build::{build_covidnet, ArchConfig};
    use crate::rng::stream_rng;
    use alloc::vec;
    use rand::Rng;

    fn tiny_graph() -> (ArchGraph, ParamStore) {
        let g = build_covidnet(&ArchConfig {
            input_size: 16,
            widths: vec![8, 12],
            blocks_per_stage: 2,
            stem_kernel: 3,
            stem_stride: 1,
            head_hidden: 8,
            ..ArchConfig::default()
        })
        .unwrap();
        let p = ParamStore::init(&g, 4).unwrap();
        (g, p)
    }

    fn random_batch(n: usize, size: usize, seed: u64) -> Tensor {
        let mut rng = stream_rng(seed, "batch", 0);
        Tensor::from_fn(&[n, 1, size, size], |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn forward_yields_probability_rows() {
        let (g, p) = tiny_graph();
        let out = infer(&g, &p, &random_batch(2, 16, 1)).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        for row in 0..2 {
            let s: f64 = out.data()[row * 3..(row + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(out.data()[row * 3..(row + 1) * 3].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn storage_permutation_does_not_change_forward() {
        let (mut g, p) = tiny_graph();
        let batch = random_batch(1, 16, 2);
        let before = infer(&g, &p, &batch).unwrap();
        let n = g.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        g.permute_nodes(&perm).unwrap();
        let after = infer(&g, &p, &batch).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn identical_rows_produce_identical_outputs() {
        let (g, p) = tiny_graph();
        let one = random_batch(1, 16, 3);
        let two = Tensor::from_fn(&[2, 1, 16, 16], |i| one.data()[i % one.numel()]);
        let out = infer(&g, &p, &two).unwrap();
        assert_eq!(out.data()[..3], out.data()[3..6]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let (g, p) = tiny_graph();
        let batch = random_batch(3, 16, 4);
        let a = infer(&g, &p, &batch).unwrap();
        let b = infer(&g, &p, &batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_size_names_the_node() {
        let (g, p) = tiny_graph();
        let err = infer(&g, &p, &random_batch(1, 8, 5)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(m) if m.contains("input")));
    }
}
