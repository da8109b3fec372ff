//! The PEPX block: projection, expansion, depthwise representation, second
//! projection, extension — five convolutions, with a residual skip when the
//! block preserves channel width.

use crate::arch::{ArchGraph, NodeId, NodeKind};
use crate::error::{Error, Result};
use crate::tensor::ConvSpec;
use alloc::format;
use alloc::string::String;

/// Channel plan of one PEPX block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PepxSpec {
    pub in_channels: usize,
    pub proj1_channels: usize,
    pub expand_channels: usize,
    pub proj2_channels: usize,
    pub out_channels: usize,
}

impl PepxSpec {
    /// First-stage projection must reduce, expansion must exceed the
    /// projection, second-stage projection must reduce again.
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.proj1_channels == 0
            || self.expand_channels == 0
            || self.proj2_channels == 0
            || self.out_channels == 0
        {
            return Err(Error::InvalidSpec(format!("zero channel count in {self:?}")));
        }
        if self.proj1_channels >= self.in_channels {
            return Err(Error::InvalidSpec(format!(
                "proj1_channels {} must be below in_channels {}",
                self.proj1_channels, self.in_channels
            )));
        }
        if self.expand_channels <= self.proj1_channels {
            return Err(Error::InvalidSpec(format!(
                "expand_channels {} must exceed proj1_channels {}",
                self.expand_channels, self.proj1_channels
            )));
        }
        if self.proj2_channels >= self.expand_channels {
            return Err(Error::InvalidSpec(format!(
                "proj2_channels {} must be below expand_channels {}",
                self.proj2_channels, self.expand_channels
            )));
        }
        Ok(())
    }

    /// Default channel plan for a block mapping `in_channels` to
    /// `out_channels`: halve into the projections, expand to three quarters
    /// of the input width.
    pub fn derive(in_channels: usize, out_channels: usize) -> Result<Self> {
        if in_channels < 2 {
            return Err(Error::InvalidSpec(format!(
                "PEPX needs at least 2 input channels, got {in_channels}"
            )));
        }
        let proj = (in_channels / 2).max(1);
        let expand = (3 * in_channels / 4).max(proj + 1);
        let spec = PepxSpec {
            in_channels,
            proj1_channels: proj,
            expand_channels: expand,
            proj2_channels: proj,
            out_channels,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Appends one PEPX block to the graph, fed by `input`. Returns the block's
/// output node.
///
/// Layer order: 1x1 proj1, 1x1 expand, 3x3 depthwise at the expanded width,
/// 1x1 proj2, 1x1 extend; when `in_channels == out_channels` the extension
/// is summed with the block input before the final activation.
pub fn build_pepx(
    graph: &mut ArchGraph,
    prefix: &str,
    input: NodeId,
    spec: &PepxSpec,
) -> Result<NodeId> {
    spec.validate()?;
    let name = |stage: &str| -> String { format!("{prefix}.{stage}") };
    let conv = |spec: ConvSpec| NodeKind::Conv { spec, hub: false };

    let proj1 = graph.add_node(
        name("proj1"),
        conv(ConvSpec::pointwise(spec.in_channels, spec.proj1_channels)),
        &[input],
    )?;
    let proj1 = graph.add_node(name("proj1.relu"), NodeKind::Relu, &[proj1])?;

    let expand = graph.add_node(
        name("expand"),
        conv(ConvSpec::pointwise(spec.proj1_channels, spec.expand_channels)),
        &[proj1],
    )?;
    let expand = graph.add_node(name("expand.relu"), NodeKind::Relu, &[expand])?;

    let dw = graph.add_node(
        name("dw"),
        conv(ConvSpec::depthwise(spec.expand_channels, 3, 1, 1)),
        &[expand],
    )?;
    let dw = graph.add_node(name("dw.relu"), NodeKind::Relu, &[dw])?;

    let proj2 = graph.add_node(
        name("proj2"),
        conv(ConvSpec::pointwise(spec.expand_channels, spec.proj2_channels)),
        &[dw],
    )?;
    let proj2 = graph.add_node(name("proj2.relu"), NodeKind::Relu, &[proj2])?;

    let extend = graph.add_node(
        name("extend"),
        conv(ConvSpec::pointwise(spec.proj2_channels, spec.out_channels)),
        &[proj2],
    )?;

    let pre_act = if spec.in_channels == spec.out_channels {
        graph.add_node(name("residual"), NodeKind::Add, &[extend, input])?
    } else {
        extend
    };
    graph.add_node(name("relu"), NodeKind::Relu, &[pre_act])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_spec() -> PepxSpec {
        PepxSpec {
            in_channels: 64,
            proj1_channels: 32,
            expand_channels: 128,
            proj2_channels: 32,
            out_channels: 64,
        }
    }

    fn graph_with_block(spec: &PepxSpec) -> (ArchGraph, NodeId, NodeId) {
        let mut g = ArchGraph::new();
        let input = g
            .add_node(
                "input",
                NodeKind::Input {
                    channels: spec.in_channels,
                    height: 8,
                    width: 8,
                },
                &[],
            )
            .unwrap();
        let out = build_pepx(&mut g, "block", input, spec).unwrap();
        (g, input, out)
    }

    #[test]
    fn block_has_five_convs_with_depthwise_at_expand_width() {
        let spec = worked_spec();
        let (g, _, _) = graph_with_block(&spec);
        let convs: alloc::vec::Vec<&ConvSpec> = g
            .nodes()
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Conv { spec, .. } => Some(spec),
                _ => None,
            })
            .collect();
        assert_eq!(convs.len(), 5);
        let dw = convs.iter().find(|s| s.groups > 1).expect("depthwise present");
        assert_eq!(dw.groups, 128);
        assert_eq!(dw.in_channels, 128);
        assert_eq!((dw.kernel_h, dw.kernel_w), (3, 3));
    }

    #[test]
    fn residual_edge_present_only_when_widths_match() {
        let spec = worked_spec();
        let (g, input, _) = graph_with_block(&spec);
        let add = g
            .nodes()
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Add))
            .expect("residual add");
        assert!(add.inputs.contains(&input));

        let widened = PepxSpec {
            out_channels: 96,
            ..spec
        };
        let (g2, _, _) = graph_with_block(&widened);
        assert!(!g2.nodes().iter().any(|n| matches!(n.kind, NodeKind::Add)));
    }

    #[test]
    fn shapes_flow_through_the_block() {
        let spec = worked_spec();
        let (g, _, out) = graph_with_block(&spec);
        let shapes = g.infer_shapes().unwrap();
        assert_eq!(
            shapes[&out],
            crate::arch::FeatShape::Map {
                channels: 64,
                height: 8,
                width: 8
            }
        );
    }

    #[test]
    fn ordering_violations_rejected() {
        assert!(PepxSpec {
            in_channels: 32,
            proj1_channels: 32,
            expand_channels: 48,
            proj2_channels: 16,
            out_channels: 32,
        }
        .validate()
        .is_err());
        assert!(PepxSpec {
            in_channels: 32,
            proj1_channels: 16,
            expand_channels: 16,
            proj2_channels: 8,
            out_channels: 32,
        }
        .validate()
        .is_err());
        assert!(PepxSpec {
            in_channels: 32,
            proj1_channels: 16,
            expand_channels: 24,
            proj2_channels: 24,
            out_channels: 32,
        }
        .validate()
        .is_err());
    }

    #[test]
    fn derive_satisfies_invariants_for_small_widths() {
        for cin in 2..40 {
            for cout in [cin, cin * 2, cin / 2 + 1] {
                let spec = PepxSpec::derive(cin, cout).unwrap();
                spec.validate().unwrap();
            }
        }
        assert!(PepxSpec::derive(1, 4).is_err());
    }
}
