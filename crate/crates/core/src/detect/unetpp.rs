//! Node/edge bookkeeping of the nested U-Net decoder used by the 2-D detector.
//!
//! Nodes are `X^{i,j}` with `i` the resolution level (0 = full size) and `j`
//! the column. The triangular grid `i + j <= L` holds the encoder column
//! (`j = 0`) and the dense decoder nodes. Two extra kinds sit on the diagonal
//! `i + j = L + 1`: the bridge `X^{L,1}` fed by the middle convolution, and the
//! terminal nodes `X^{L-1,2} .. X^{0,L+1}` where each level's features merge.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Encoder,
    Bridge,
    Decoder,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Upsample,
    Skip,
    Conv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoNode {
    pub level: usize,
    pub column: usize,
    pub kind: NodeKind,
    /// Output channels; `None` for encoder nodes (set by the backbone).
    pub channels: Option<usize>,
    /// Spatial side length of the node's feature map.
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopoEdge {
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnetPPTopology {
    pub levels: usize,
    pub input_size: usize,
    pub nodes: Vec<TopoNode>,
    pub edges: Vec<TopoEdge>,
    /// Channel count of decoder module `m` at index `m - 1`.
    pub module_channels: Vec<usize>,
    /// The last module's width is not pinned down independently; it repeats
    /// the previous module's count.
    pub last_module_assumed: bool,
}

impl UnetPPTopology {
    pub fn node(&self, level: usize, column: usize) -> Option<&TopoNode> {
        self.nodes.iter().find(|n| n.level == level && n.column == column)
    }

    pub fn in_edges(&self, level: usize, column: usize) -> impl Iterator<Item = &TopoEdge> {
        self.edges.iter().filter(move |e| e.to == (level, column))
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Nodes of the triangular grid `i + j <= L`.
    pub fn grid_len(&self) -> usize {
        self.count(NodeKind::Encoder) + self.count(NodeKind::Decoder)
    }
}

pub fn build_unetpp_topology(
    levels: usize,
    mid_channels: usize,
    decoder_base: usize,
    input_size: usize,
) -> Result<UnetPPTopology> {
    if levels == 0 {
        return Err(Error::invalid("unet++ topology", "need at least one level"));
    }
    if !input_size.is_multiple_of(1 << levels) {
        return Err(Error::invalid(
            "unet++ topology",
            format!("input size {input_size} not divisible by 2^{levels}"),
        ));
    }
    let l = levels;
    let module_channels: Vec<usize> = (1..=l + 1)
        .map(|m| {
            let m = if m == l + 1 { l } else { m };
            (decoder_base >> (m - 1)).max(1)
        })
        .collect();

    let mut nodes = Vec::new();
    for j in 0..=l + 1 {
        for i in (0..=l).rev() {
            let kind = if i + j <= l {
                if j == 0 {
                    NodeKind::Encoder
                } else {
                    NodeKind::Decoder
                }
            } else if i + j == l + 1 {
                if j == 1 {
                    NodeKind::Bridge
                } else if j >= 2 {
                    NodeKind::Terminal
                } else {
                    continue;
                }
            } else {
                continue;
            };
            let channels = match kind {
                NodeKind::Encoder => None,
                NodeKind::Bridge => Some(mid_channels),
                _ => Some(module_channels[j - 1]),
            };
            nodes.push(TopoNode {
                level: i,
                column: j,
                kind,
                channels,
                size: input_size >> i,
            });
        }
    }

    let mut edges = Vec::new();
    for n in &nodes {
        let to = (n.level, n.column);
        match n.kind {
            NodeKind::Encoder => {
                if n.level > 0 {
                    edges.push(TopoEdge {
                        from: (n.level - 1, 0),
                        to,
                        kind: EdgeKind::Conv,
                    });
                }
            }
            NodeKind::Bridge => edges.push(TopoEdge {
                from: (n.level, 0),
                to,
                kind: EdgeKind::Conv,
            }),
            NodeKind::Decoder | NodeKind::Terminal => {
                edges.push(TopoEdge {
                    from: (n.level + 1, n.column - 1),
                    to,
                    kind: EdgeKind::Upsample,
                });
                for k in 0..n.column {
                    edges.push(TopoEdge {
                        from: (n.level, k),
                        to,
                        kind: EdgeKind::Skip,
                    });
                }
            }
        }
    }

    Ok(UnetPPTopology {
        levels,
        input_size,
        nodes,
        edges,
        module_channels,
        last_module_assumed: true,
    })
}
