//! Whole-network builder: stem, PEPX stages with between-stage
//! downsampling, one hub per stage, and the classifier head.

use crate::arch::pepx::{build_pepx, PepxSpec};
use crate::arch::{ArchGraph, NodeId, NodeKind};
use crate::error::{Error, Result};
use crate::tensor::ConvSpec;
use alloc::format;
use alloc::vec::Vec;

/// Hub placement policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HubPolicy {
    /// One 1x1 hub conv per stage, fed by the stage input and every block
    /// output of the stage (the stage-input edge is the long-range edge from
    /// the previous stage's product).
    PerStage,
    /// No hubs; each stage ends at its last block.
    None,
}

/// Network configuration. Stage count equals `widths.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub classes: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    /// 2x2 stride-2 max pool after the stem.
    pub stem_pool: bool,
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub hub_policy: HubPolicy,
    pub head_hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_size: 64,
            input_channels: 1,
            classes: 3,
            stem_kernel: 7,
            stem_stride: 2,
            stem_pool: true,
            widths: alloc::vec![32, 64, 128, 256],
            blocks_per_stage: 2,
            hub_policy: HubPolicy::PerStage,
            head_hidden: 64,
        }
    }
}

impl ArchConfig {
    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0
            || self.input_channels == 0
            || self.stem_kernel == 0
            || self.stem_stride == 0
            || self.head_hidden == 0
        {
            return Err(Error::InvalidSpec("architecture config has a zero field".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.widths.is_empty() {
            return Err(Error::InvalidSpec("no stage widths configured".into()));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::InvalidSpec("blocks_per_stage must be positive".into()));
        }
        Ok(())
    }
}

/// Builds the full architecture graph for `config` and validates it.
pub fn build_covidnet(config: &ArchConfig) -> Result<ArchGraph> {
    config.validate()?;
    let mut g = ArchGraph::new();
    let input = g.add_node(
        "input",
        NodeKind::Input {
            channels: config.input_channels,
            height: config.input_size,
            width: config.input_size,
        },
        &[],
    )?;

    // Stem: kxk conv into the first stage width.
    let stem_spec = ConvSpec {
        in_channels: config.input_channels,
        out_channels: config.widths[0],
        kernel_h: config.stem_kernel,
        kernel_w: config.stem_kernel,
        stride: config.stem_stride,
        padding: config.stem_kernel / 2,
        groups: 1,
    };
    let mut cur = g.add_node("stem", NodeKind::Conv { spec: stem_spec, hub: false }, &[input])?;
    cur = g.add_node("stem.relu", NodeKind::Relu, &[cur])?;
    if config.stem_pool {
        cur = g.add_node("stem.pool", NodeKind::MaxPool { window: 2, stride: 2 }, &[cur])?;
    }
    let mut cur_channels = config.widths[0];

    for (s, &width) in config.widths.iter().enumerate() {
        let stage = s + 1;
        let stage_input = cur;
        let stage_input_channels = cur_channels;
        let mut block_outs: Vec<NodeId> = Vec::new();
        let mut block_in = stage_input;
        let mut block_in_channels = stage_input_channels;
        for b in 0..config.blocks_per_stage {
            let spec = PepxSpec::derive(block_in_channels, width).map_err(|e| {
                Error::InvalidSpec(format!("stage {stage} block {}: {e}", b + 1))
            })?;
            let out = build_pepx(&mut g, &format!("stage{stage}.block{}", b + 1), block_in, &spec)?;
            block_outs.push(out);
            block_in = out;
            block_in_channels = width;
        }

        cur = match config.hub_policy {
            HubPolicy::PerStage => {
                let hub_in = stage_input_channels + config.blocks_per_stage * width;
                let mut inputs = alloc::vec![stage_input];
                inputs.extend_from_slice(&block_outs);
                let hub = g.add_node(
                    format!("stage{stage}.hub"),
                    NodeKind::Conv {
                        spec: ConvSpec::pointwise(hub_in, width),
                        hub: true,
                    },
                    &inputs,
                )?;
                g.add_node(format!("stage{stage}.hub.relu"), NodeKind::Relu, &[hub])?
            }
            HubPolicy::None => *block_outs.last().expect("at least one block"),
        };
        cur_channels = width;

        if s + 1 < config.widths.len() {
            cur = g.add_node(
                format!("stage{stage}.pool"),
                NodeKind::MaxPool { window: 2, stride: 2 },
                &[cur],
            )?;
        }
    }

    let gap = g.add_node("head.gap", NodeKind::GlobalAvgPool, &[cur])?;
    let fc1 = g.add_node(
        "head.fc1",
        NodeKind::Dense {
            in_features: cur_channels,
            out_features: config.head_hidden,
        },
        &[gap],
    )?;
    let fc1 = g.add_node("head.fc1.relu", NodeKind::Relu, &[fc1])?;
    let fc2 = g.add_node(
        "head.fc2",
        NodeKind::Dense {
            in_features: config.head_hidden,
            out_features: config.classes,
        },
        &[fc1],
    )?;
    g.add_node("head.softmax", NodeKind::Softmax, &[fc2])?;

    g.validate()
        .map_err(|e| Error::InvalidGraph(format!("built graph failed validation: {e}")))?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::FeatShape;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    #[test]
    fn default_config_builds_valid_four_hub_graph() {
        let g = build_covidnet(&ArchConfig::default()).unwrap();
        assert!(g.validate().is_ok());
        assert_eq!(g.hubs().len(), 4);
        assert_eq!(g.output_classes().unwrap(), 3);
    }

    #[test]
    fn default_graph_kernel_sizes_are_seven_three_one_with_mixed_grouping() {
        let g = build_covidnet(&ArchConfig::default()).unwrap();
        let mut kernels = BTreeSet::new();
        let (mut grouped, mut ungrouped) = (false, false);
        for node in g.nodes() {
            if let NodeKind::Conv { spec, .. } = &node.kind {
                kernels.insert((spec.kernel_h, spec.kernel_w));
                if spec.groups > 1 {
                    grouped = true;
                } else {
                    ungrouped = true;
                }
            }
        }
        assert_eq!(
            kernels,
            BTreeSet::from([(1, 1), (3, 3), (7, 7)]),
            "kernel sizes {kernels:?}"
        );
        assert!(grouped && ungrouped);
    }

    #[test]
    fn hubs_see_stage_input_and_every_block() {
        let cfg = ArchConfig::default();
        let g = build_covidnet(&cfg).unwrap();
        for hub in g.hubs() {
            let node = g.node(hub).unwrap();
            assert_eq!(node.inputs.len(), 1 + cfg.blocks_per_stage, "{}", node.name);
        }
    }

    #[test]
    fn stage_width_errors_name_the_stage() {
        let cfg = ArchConfig {
            widths: vec![32, 1],
            ..ArchConfig::default()
        };
        let err = build_covidnet(&cfg).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("stage 2"), "{msg}");
    }

    #[test]
    fn tiny_single_stage_config_builds() {
        let cfg = ArchConfig {
            input_size: 16,
            widths: vec![8],
            blocks_per_stage: 1,
            stem_kernel: 3,
            stem_stride: 1,
            stem_pool: true,
            head_hidden: 8,
            ..ArchConfig::default()
        };
        let g = build_covidnet(&cfg).unwrap();
        assert_eq!(g.hubs().len(), 1);
        // single block: hub still has two distinct feeds (stage input + block)
        let hub = g.node(g.hubs()[0]).unwrap();
        assert_eq!(hub.inputs.len(), 2);
        let shapes = g.infer_shapes().unwrap();
        assert_eq!(
            shapes[&g.output_node().unwrap()],
            FeatShape::Flat { features: 3 }
        );
    }
}
