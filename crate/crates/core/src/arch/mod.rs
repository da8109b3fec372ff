//! The architecture graph: a DAG of layer nodes with explicit data-flow
//! edges, including the long-range edges that feed hub convolutions.
//!
//! Nodes carry stable ids; the storage order of the node list is irrelevant
//! because evaluation and analysis always run in topological order. A conv
//! node with several inputs concatenates them along the channel axis before
//! convolving — that is the merge rule for hubs.

mod build;
mod complexity;
mod forward;
mod params;
mod pepx;

pub use build::{build_covidnet, ArchConfig, HubPolicy};
pub use complexity::{complexity, count_macs, count_params, describe, ComplexityReport, LayerCost};
pub use forward::{bind_params, graph_forward, infer, TapeBinding};
pub use params::{NodeParams, ParamStore};
pub use pepx::{build_pepx, PepxSpec};

use crate::error::{Error, Result};
use crate::tensor::ConvSpec;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Stable identifier of a graph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Layer descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input { channels: usize, height: usize, width: usize },
    /// Multi-input conv nodes concatenate their inputs channelwise first;
    /// `hub` marks the designated long-range merge points.
    Conv { spec: ConvSpec, hub: bool },
    Relu,
    MaxPool { window: usize, stride: usize },
    GlobalAvgPool,
    Dense { in_features: usize, out_features: usize },
    Add,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
}

/// Shape of a node's output for one sample (batch dimension elided).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatShape {
    Map { channels: usize, height: usize, width: usize },
    Flat { features: usize },
}

/// Directed acyclic layer graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchGraph {
    nodes: Vec<Node>,
    next_id: usize,
}

impl ArchGraph {
    pub fn new() -> Self {
        ArchGraph {
            nodes: Vec::new(),
            next_id: 0,
        }
    }

    /// Appends a node wired to `inputs`, which must already exist.
    pub fn add_node(
        &mut self,
        name: impl Into<String>,
        kind: NodeKind,
        inputs: &[NodeId],
    ) -> Result<NodeId> {
        let name = name.into();
        for input in inputs {
            if self.node(*input).is_none() {
                return Err(Error::InvalidGraph(format!(
                    "node {name:?} references missing input id {}",
                    input.0
                )));
            }
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.push(Node {
            id,
            name,
            kind,
            inputs: inputs.to_vec(),
        });
        Ok(id)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Reorders node storage. Evaluation results must not depend on storage
    /// order; this exists so tests can prove exactly that.
    pub fn permute_nodes(&mut self, perm: &[usize]) -> Result<()> {
        if perm.len() != self.nodes.len() {
            return Err(Error::InvalidGraph(format!(
                "permutation length {} vs {} nodes",
                perm.len(),
                self.nodes.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for &p in perm {
            if p >= self.nodes.len() || !seen.insert(p) {
                return Err(Error::InvalidGraph("invalid node permutation".into()));
            }
        }
        let mut reordered = Vec::with_capacity(self.nodes.len());
        for &p in perm {
            reordered.push(self.nodes[p].clone());
        }
        self.nodes = reordered;
        Ok(())
    }

    /// The unique node with no incoming edges; must be the `Input` node.
    pub fn input_node(&self) -> Result<NodeId> {
        let mut inputs: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Input { .. }))
            .map(|n| n.id)
            .collect();
        if inputs.len() != 1 {
            return Err(Error::InvalidGraph(format!(
                "graph has {} input nodes, expected exactly 1",
                inputs.len()
            )));
        }
        let sourceless = self.nodes.iter().filter(|n| n.inputs.is_empty()).count();
        if sourceless != 1 {
            return Err(Error::InvalidGraph(format!(
                "graph has {sourceless} nodes without inputs, expected exactly 1"
            )));
        }
        Ok(inputs.pop().expect("one input"))
    }

    /// The unique node nothing consumes.
    pub fn output_node(&self) -> Result<NodeId> {
        let mut consumed: BTreeSet<NodeId> = BTreeSet::new();
        for node in &self.nodes {
            consumed.extend(node.inputs.iter().copied());
        }
        let mut sinks: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| !consumed.contains(&n.id))
            .map(|n| n.id)
            .collect();
        if sinks.len() != 1 {
            return Err(Error::InvalidGraph(format!(
                "graph has {} output nodes, expected exactly 1",
                sinks.len()
            )));
        }
        Ok(sinks.pop().expect("one sink"))
    }

    /// Kahn topological order (ties broken by ascending id, so the order is
    /// deterministic regardless of storage order).
    pub fn topo_order(&self) -> Result<Vec<NodeId>> {
        let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut consumers: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for node in &self.nodes {
            indegree.entry(node.id).or_insert(0);
            for input in &node.inputs {
                *indegree.entry(node.id).or_insert(0) += 1;
                consumers.entry(*input).or_default().push(node.id);
            }
        }
        let mut ready: BTreeSet<NodeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(&id) = ready.iter().next() {
            ready.remove(&id);
            order.push(id);
            if let Some(next) = consumers.get(&id) {
                for c in next {
                    let d = indegree.get_mut(c).expect("known node");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(*c);
                    }
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::InvalidGraph("graph contains a cycle".into()));
        }
        Ok(order)
    }

    /// Hub conv node ids in id order.
    pub fn hubs(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Conv { hub: true, .. }))
            .map(|n| n.id)
            .collect();
        ids.sort();
        ids
    }

    /// Per-node output shapes, checking conformance along the way.
    pub fn infer_shapes(&self) -> Result<BTreeMap<NodeId, FeatShape>> {
        let order = self.topo_order()?;
        let mut shapes: BTreeMap<NodeId, FeatShape> = BTreeMap::new();
        for id in order {
            let node = self.node(id).expect("topo covers all ids");
            let ins: Vec<FeatShape> = node
                .inputs
                .iter()
                .map(|i| shapes[i])
                .collect();
            let shape = self.node_output_shape(node, &ins)?;
            shapes.insert(id, shape);
        }
        Ok(shapes)
    }

    fn node_output_shape(&self, node: &Node, ins: &[FeatShape]) -> Result<FeatShape> {
        let fail = |msg: String| Err(Error::InvalidGraph(format!("node {:?}: {msg}", node.name)));
        let single_map = |ins: &[FeatShape]| -> Result<(usize, usize, usize)> {
            match ins {
                [FeatShape::Map { channels, height, width }] => Ok((*channels, *height, *width)),
                _ => Err(Error::InvalidGraph(format!(
                    "node {:?} expects one feature-map input, got {ins:?}",
                    node.name
                ))),
            }
        };
        match &node.kind {
            NodeKind::Input { channels, height, width } => {
                if !ins.is_empty() {
                    return fail("input node cannot have inputs".into());
                }
                Ok(FeatShape::Map {
                    channels: *channels,
                    height: *height,
                    width: *width,
                })
            }
            NodeKind::Conv { spec, .. } => {
                if ins.is_empty() {
                    return fail("conv node needs at least one input".into());
                }
                let (mut total_c, mut h0, mut w0) = (0usize, None, None);
                for shape in ins {
                    match shape {
                        FeatShape::Map { channels, height, width } => {
                            total_c += channels;
                            if *h0.get_or_insert(*height) != *height
                                || *w0.get_or_insert(*width) != *width
                            {
                                return fail(format!(
                                    "concat inputs disagree spatially: {ins:?}"
                                ));
                            }
                        }
                        FeatShape::Flat { .. } => {
                            return fail("conv input must be a feature map".into())
                        }
                    }
                }
                if total_c != spec.in_channels {
                    return fail(format!(
                        "incoming channels {total_c} vs spec.in_channels {}",
                        spec.in_channels
                    ));
                }
                spec.validate()?;
                let (oh, ow) = spec.output_hw(h0.expect("one input"), w0.expect("one input"))?;
                Ok(FeatShape::Map {
                    channels: spec.out_channels,
                    height: oh,
                    width: ow,
                })
            }
            NodeKind::Relu => match ins {
                [only] => Ok(*only),
                _ => fail(format!("relu takes one input, got {}", ins.len())),
            },
            NodeKind::MaxPool { window, stride } => {
                let (c, h, w) = single_map(ins)?;
                if h < *window || w < *window {
                    return fail(format!("pool window {window} exceeds input {h}x{w}"));
                }
                Ok(FeatShape::Map {
                    channels: c,
                    height: (h - window) / stride + 1,
                    width: (w - window) / stride + 1,
                })
            }
            NodeKind::GlobalAvgPool => {
                let (c, _, _) = single_map(ins)?;
                Ok(FeatShape::Flat { features: c })
            }
            NodeKind::Dense { in_features, out_features } => match ins {
                [FeatShape::Flat { features }] if features == in_features => {
                    Ok(FeatShape::Flat {
                        features: *out_features,
                    })
                }
                _ => fail(format!(
                    "dense expects one flat input of {in_features} features, got {ins:?}"
                )),
            },
            NodeKind::Add => {
                if ins.len() < 2 {
                    return fail("add needs at least two inputs".into());
                }
                if ins.iter().any(|s| s != &ins[0]) {
                    return fail(format!("add inputs disagree: {ins:?}"));
                }
                Ok(ins[0])
            }
            NodeKind::Softmax => match ins {
                [FeatShape::Flat { features }] => Ok(FeatShape::Flat { features: *features }),
                _ => fail("softmax expects one flat input".into()),
            },
        }
    }

    /// Structural validation: unique input and output, acyclicity, shape
    /// conformance, hubs with at least two distinct feeding nodes, and a
    /// softmax sink.
    pub fn validate(&self) -> Result<()> {
        let input = self.input_node()?;
        let output = self.output_node()?;
        if input == output {
            return Err(Error::InvalidGraph("graph is a single node".into()));
        }
        let shapes = self.infer_shapes()?;
        for node in &self.nodes {
            if let NodeKind::Conv { hub: true, .. } = node.kind {
                let distinct: BTreeSet<NodeId> = node.inputs.iter().copied().collect();
                if distinct.len() < 2 {
                    return Err(Error::InvalidGraph(format!(
                        "hub {:?} has {} distinct inputs, needs at least 2",
                        node.name,
                        distinct.len()
                    )));
                }
            }
        }
        let sink = self.node(output).expect("sink exists");
        if !matches!(sink.kind, NodeKind::Softmax) {
            return Err(Error::InvalidGraph(format!(
                "output node {:?} is not a softmax",
                sink.name
            )));
        }
        let _ = shapes;
        Ok(())
    }

    /// Class count produced at the output node.
    pub fn output_classes(&self) -> Result<usize> {
        let shapes = self.infer_shapes()?;
        match shapes[&self.output_node()?] {
            FeatShape::Flat { features } => Ok(features),
            FeatShape::Map { .. } => Err(Error::InvalidGraph(
                "output node produces a feature map, not class scores".into(),
            )),
        }
    }

    /// Removes the edge `from -> to`. When `to` is a conv node its
    /// `in_channels` shrinks by the channel width `from` contributed.
    pub fn remove_edge(&mut self, from: NodeId, to: NodeId) -> Result<()> {
        let shapes = self.infer_shapes()?;
        let from_channels = match shapes.get(&from) {
            Some(FeatShape::Map { channels, .. }) => *channels,
            Some(FeatShape::Flat { .. }) => {
                return Err(Error::InvalidGraph(
                    "cannot remove an edge from a flat-output node".into(),
                ))
            }
            None => {
                return Err(Error::InvalidGraph(format!(
                    "unknown source node id {}",
                    from.0
                )))
            }
        };
        let node = self
            .node_mut(to)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown target node id {}", to.0)))?;
        let before = node.inputs.len();
        if let Some(pos) = node.inputs.iter().position(|i| *i == from) {
            node.inputs.remove(pos);
        }
        if node.inputs.len() == before {
            return Err(Error::InvalidGraph(format!(
                "no edge {} -> {} to remove",
                from.0, to.0
            )));
        }
        if let NodeKind::Conv { spec, .. } = &mut node.kind {
            spec.in_channels -= from_channels;
        }
        Ok(())
    }
}
