//! Exact parameter and multiply-accumulate counting, plus the line-oriented
//! `describe` dump used for diffing graphs in tests.
//!
//! Per-conv MACs are `kh * kw * (cin/groups) * cout * out_h * out_w` for one
//! image; per-dense MACs are `in_features * out_features`. Activations,
//! pooling and additions contribute none, which matches a multiplication
//! count of the reference forward pass.

use crate::arch::{ArchGraph, FeatShape, NodeId, NodeKind};
use crate::error::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Parameter and MAC cost of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub id: NodeId,
    pub name: String,
    pub params: usize,
    pub macs: usize,
}

/// Per-layer breakdown; totals are always derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityReport {
    pub per_layer: Vec<LayerCost>,
}

impl ComplexityReport {
    pub fn total_params(&self) -> usize {
        self.per_layer.iter().map(|l| l.params).sum()
    }

    pub fn total_macs(&self) -> usize {
        self.per_layer.iter().map(|l| l.macs).sum()
    }
}

/// Per-layer parameter and MAC counts for one image at the graph's input
/// resolution, in topological order.
pub fn complexity(graph: &ArchGraph) -> Result<ComplexityReport> {
    let shapes = graph.infer_shapes()?;
    let mut per_layer = Vec::new();
    for id in graph.topo_order()? {
        let node = graph.node(id).expect("topo covers ids");
        let (params, macs) = match &node.kind {
            NodeKind::Conv { spec, .. } => {
                let (oh, ow) = match shapes[&id] {
                    FeatShape::Map { height, width, .. } => (height, width),
                    FeatShape::Flat { .. } => unreachable!("conv output is a map"),
                };
                (spec.param_count(true), spec.mac_count(oh, ow))
            }
            NodeKind::Dense {
                in_features,
                out_features,
            } => (
                in_features * out_features + out_features,
                in_features * out_features,
            ),
            _ => (0, 0),
        };
        per_layer.push(LayerCost {
            id,
            name: node.name.clone(),
            params,
            macs,
        });
    }
    Ok(ComplexityReport { per_layer })
}

/// Total trainable parameters (weights and biases).
pub fn count_params(graph: &ArchGraph) -> Result<usize> {
    Ok(complexity(graph)?.total_params())
}

/// Total multiply-accumulates for one image at the graph input resolution.
pub fn count_macs(graph: &ArchGraph) -> Result<usize> {
    Ok(complexity(graph)?.total_macs())
}

/// One line per node, in topological order, with every structural
/// parameter. Stable under node-storage permutations.
pub fn describe(graph: &ArchGraph) -> Result<String> {
    let mut out = String::new();
    for id in graph.topo_order()? {
        let node = graph.node(id).expect("topo covers ids");
        let inputs: Vec<String> = node.inputs.iter().map(|i| format!("{}", i.index())).collect();
        let inputs = inputs.join(",");
        let line = match &node.kind {
            NodeKind::Input { channels, height, width } => format!(
                "input id={} name={} channels={channels} height={height} width={width}",
                id.index(),
                node.name
            ),
            NodeKind::Conv { spec, hub } => format!(
                "conv id={} name={} kernel={}x{} stride={} pad={} groups={} in={} out={} hub={} inputs=[{inputs}]",
                id.index(),
                node.name,
                spec.kernel_h,
                spec.kernel_w,
                spec.stride,
                spec.padding,
                spec.groups,
                spec.in_channels,
                spec.out_channels,
                hub
            ),
            NodeKind::Relu => format!("relu id={} name={} inputs=[{inputs}]", id.index(), node.name),
            NodeKind::MaxPool { window, stride } => format!(
                "maxpool id={} name={} window={window} stride={stride} inputs=[{inputs}]",
                id.index(),
                node.name
            ),
            NodeKind::GlobalAvgPool => format!(
                "gap id={} name={} inputs=[{inputs}]",
                id.index(),
                node.name
            ),
            NodeKind::Dense { in_features, out_features } => format!(
                "dense id={} name={} in={in_features} out={out_features} inputs=[{inputs}]",
                id.index(),
                node.name
            ),
            NodeKind::Add => format!("add id={} name={} inputs=[{inputs}]", id.index(), node.name),
            NodeKind::Softmax => format!(
                "softmax id={} name={} inputs=[{inputs}]",
                id.index(),
                node.name
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}
