//! Builder for the multi-scale dense classifier.
//!
//! Scales are indexed from 0 (finest, full cube resolution). At depth `t`
//! scale `s` is active while `t <= scale_end_depths[s]`. Each active scale
//! concatenates its previous state with a horizontal bottleneck path and, when
//! the next-finer scale was active at `t - 1`, a vertical bottleneck path whose
//! 3x3x3 conv has stride 2. A bottleneck is two conv blocks (1x1x1 to
//! `round(keep * channels)`, then 3x3x3 to the growth rate); a conv block is
//! conv → batch-norm → ReLU.

use crate::error::{Error, Result};
use crate::nnet::{BlockTag, LayerSpec, Network, NodeId, INPUT};
use crate::volume::round_half_up;

/// How the classifier's pooling layer covers the feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// 2x2x2 window, stride 2.
    #[default]
    Windowed,
    /// One window spanning the whole map.
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsdNetSpec {
    pub input_size: usize,
    pub input_channels: usize,
    pub initial_filters: Vec<usize>,
    pub growth_rates: Vec<usize>,
    /// Last depth at which each scale is active; the final entry is the
    /// maximum depth.
    pub scale_end_depths: Vec<usize>,
    pub transition_depths: Vec<usize>,
    /// Fraction of channels removed by a bottleneck's 1x1x1 conv.
    pub bottleneck_reduction: f64,
    /// Fraction of channels removed by a transition block.
    pub transition_reduction: f64,
    pub classifier_channels: usize,
    pub dense_units: Vec<usize>,
    pub dropout_rates: Vec<f64>,
    pub pool: PoolMode,
}

impl Default for MsdNetSpec {
    fn default() -> Self {
        MsdNetSpec {
            input_size: 32,
            input_channels: 1,
            initial_filters: vec![32, 64, 128],
            growth_rates: vec![8, 16, 32],
            scale_end_depths: vec![16, 24, 32],
            transition_depths: vec![16, 24],
            bottleneck_reduction: 0.75,
            transition_reduction: 0.5,
            classifier_channels: 128,
            dense_units: vec![128, 32],
            dropout_rates: vec![0.5, 0.2],
            pool: PoolMode::Windowed,
        }
    }
}

impl MsdNetSpec {
    pub fn scales(&self) -> usize {
        self.initial_filters.len()
    }

    pub fn max_depth(&self) -> usize {
        self.scale_end_depths.last().copied().unwrap_or(0)
    }

    /// Side of the feature map at scale `s`.
    pub fn scale_size(&self, s: usize) -> usize {
        self.input_size >> s
    }

    pub fn is_active(&self, scale: usize, depth: usize) -> bool {
        depth <= self.scale_end_depths[scale]
    }

    /// Width after a bottleneck's first conv: `round(keep * channels)`, at least 1.
    pub fn bottleneck_width(&self, channels: usize) -> usize {
        (round_half_up((1.0 - self.bottleneck_reduction) * channels as f64) as usize).max(1)
    }

    pub fn transition_width(&self, channels: usize) -> usize {
        (round_half_up((1.0 - self.transition_reduction) * channels as f64) as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::invalid("msdnet spec", reason));
        let s = self.scales();
        if s == 0 {
            return fail("at least one scale is required".into());
        }
        if self.growth_rates.len() != s || self.scale_end_depths.len() != s {
            return fail("initial_filters, growth_rates and scale_end_depths must have one entry per scale".into());
        }
        if self.input_channels == 0 || self.initial_filters.contains(&0) || self.growth_rates.contains(&0) {
            return fail("channel counts and growth rates must be >= 1".into());
        }
        if self.scale_end_depths[0] == 0 || self.scale_end_depths.windows(2).any(|w| w[0] > w[1]) {
            return fail("scale end depths must be >= 1 and non-decreasing".into());
        }
        let max = self.max_depth();
        if let Some(t) = self.transition_depths.iter().find(|&&t| t == 0 || t >= max) {
            return fail(format!("transition depth {t} must lie in [1, max depth {max})"));
        }
        if !(self.bottleneck_reduction > 0.0 && self.bottleneck_reduction < 1.0) {
            return fail(format!("bottleneck reduction {} must lie in (0, 1)", self.bottleneck_reduction));
        }
        if !(self.transition_reduction >= 0.0 && self.transition_reduction < 1.0) {
            return fail(format!("transition reduction {} must lie in [0, 1)", self.transition_reduction));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(1 << (s - 1)) {
            return fail(format!("input size {} must be divisible by 2^{}", self.input_size, s - 1));
        }
        let coarse = self.scale_size(s - 1);
        let needed = match self.pool {
            PoolMode::Windowed => 8,
            PoolMode::Global => 4,
        };
        if coarse < needed {
            return fail(format!("coarsest map {coarse} is smaller than the classifier needs ({needed})"));
        }
        if self.classifier_channels == 0 || self.dense_units.contains(&0) {
            return fail("classifier widths must be >= 1".into());
        }
        if self.dense_units.len() != self.dropout_rates.len() {
            return fail("one dropout rate per dense layer is required".into());
        }
        if let Some(r) = self.dropout_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return fail(format!("dropout rate {r} must lie in [0, 1)"));
        }
        Ok(())
    }
}

struct Builder<'a> {
    net: Network,
    spec: &'a MsdNetSpec,
}

impl Builder<'_> {
    fn channels(&self, id: NodeId) -> usize {
        self.net.shape_of(id)[0]
    }

    fn conv_block(&mut self, name: &str, from: NodeId, out: usize, k: usize, stride: usize, tag: BlockTag) -> Result<NodeId> {
        let pad = k / 2;
        let c = self.net.add_in_block(format!("{name}.conv"), LayerSpec::conv(out, k, stride, pad), &[from], Some(tag))?;
        let b = self.net.add_in_block(format!("{name}.bn"), LayerSpec::batch_norm(), &[c], Some(tag))?;
        self.net.add_in_block(format!("{name}.relu"), LayerSpec::ReLU, &[b], Some(tag))
    }

    fn bottleneck(&mut self, name: &str, from: NodeId, growth: usize, stride: usize, tag: BlockTag) -> Result<NodeId> {
        let width = self.spec.bottleneck_width(self.channels(from));
        let a = self.conv_block(&format!("{name}.reduce"), from, width, 1, 1, tag)?;
        self.conv_block(&format!("{name}.expand"), a, growth, 3, stride, tag)
    }
}

/// Builds the classifier graph for a `[input_channels, n, n, n]` cube.
pub fn build_msdnet(spec: &MsdNetSpec) -> Result<Network> {
    spec.validate()?;
    let n = spec.input_size;
    let mut b = Builder {
        net: Network::new(vec![spec.input_channels, n, n, n])?,
        spec,
    };
    let scales = spec.scales();

    let mut state: Vec<NodeId> = Vec::with_capacity(scales);
    for s in 0..scales {
        let (from, stride) = if s == 0 { (INPUT, 1) } else { (state[s - 1], 2) };
        let tag = BlockTag::Initial { scale: s };
        state.push(b.conv_block(&format!("init.s{s}"), from, spec.initial_filters[s], 3, stride, tag)?);
    }

    for t in 1..=spec.max_depth() {
        let tag = BlockTag::Basic { depth: t };
        let prev = state.clone();
        for s in (0..scales).filter(|&s| spec.is_active(s, t)) {
            let g = spec.growth_rates[s];
            let vertical = s > 0 && (t == 1 || spec.is_active(s - 1, t - 1));
            let g_h = if vertical { g / 2 } else { g };
            let mut parts = vec![prev[s]];
            if g_h > 0 {
                parts.push(b.bottleneck(&format!("d{t}.s{s}.h"), prev[s], g_h, 1, tag)?);
            }
            if vertical {
                parts.push(b.bottleneck(&format!("d{t}.s{s}.v"), prev[s - 1], g - g_h, 2, tag)?);
            }
            state[s] = b.net.add_in_block(format!("d{t}.s{s}.cat"), LayerSpec::Concat, &parts, Some(tag))?;
        }
        if spec.transition_depths.contains(&t) {
            for s in (0..scales).filter(|&s| spec.is_active(s, t)) {
                let tag = BlockTag::Transition { depth: t, scale: s };
                let width = spec.transition_width(b.channels(state[s]));
                state[s] = b.conv_block(&format!("trans.d{t}.s{s}"), state[s], width, 1, 1, tag)?;
            }
        }
    }

    let tag = Some(BlockTag::Classifier);
    let cc = spec.classifier_channels;
    let c1 = b.conv_block("cls.block0", state[scales - 1], cc, 3, 2, BlockTag::Classifier)?;
    let c2 = b.conv_block("cls.block1", c1, cc, 3, 2, BlockTag::Classifier)?;
    let pool = match spec.pool {
        PoolMode::Windowed => LayerSpec::AvgPool {
            kernel: [2; 3],
            stride: [2; 3],
        },
        PoolMode::Global => {
            let side = b.net.shape_of(c2)[1];
            LayerSpec::AvgPool {
                kernel: [side; 3],
                stride: [2; 3],
            }
        }
    };
    let mut at = b.net.add_in_block("cls.pool", pool, &[c2], tag)?;
    at = b.net.add_in_block("cls.flatten", LayerSpec::Flatten, &[at], tag)?;
    for (i, (&units, &rate)) in spec.dense_units.iter().zip(&spec.dropout_rates).enumerate() {
        at = b.net.add_in_block(format!("cls.dense{i}"), LayerSpec::Dense { out: units }, &[at], tag)?;
        at = b.net.add_in_block(format!("cls.dense{i}.relu"), LayerSpec::ReLU, &[at], tag)?;
        at = b.net.add_in_block(format!("cls.dropout{i}"), LayerSpec::Dropout(rate), &[at], tag)?;
    }
    at = b.net.add_in_block("cls.logit", LayerSpec::Dense { out: 1 }, &[at], tag)?;
    b.net.add_in_block("cls.sigmoid", LayerSpec::Sigmoid, &[at], tag)?;
    Ok(b.net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(net: &Network, pred: impl Fn(&BlockTag) -> bool) -> usize {
        net.blocks().iter().filter(|t| pred(t)).count()
    }

    #[test]
    fn default_structure_counts() {
        let net = build_msdnet(&MsdNetSpec::default()).unwrap();
        assert_eq!(count(&net, |t| matches!(t, BlockTag::Basic { .. })), 32);
        assert_eq!(count(&net, |t| matches!(t, BlockTag::Transition { .. })), 5);
        assert_eq!(count(&net, |t| matches!(t, BlockTag::Classifier)), 1);
        assert_eq!(count(&net, |t| matches!(t, BlockTag::Initial { .. })), 3);
        assert_eq!(net.output_shape(), &[1]);
        // A full three-scale block: two horizontal-or-vertical bottlenecks per
        // coarse scale plus one at scale 0, and one concat per scale.
        let d1: Vec<_> = net.nodes().iter().filter(|n| n.block == Some(BlockTag::Basic { depth: 1 })).collect();
        let cats = d1.iter().filter(|n| n.layer == LayerSpec::Concat).count();
        let bottlenecks = d1.iter().filter(|n| n.name.ends_with(".expand.conv")).count();
        assert_eq!((cats, bottlenecks), (3, 5));
    }

    #[test]
    fn bottleneck_keeps_a_quarter_of_the_channels() {
        let net = build_msdnet(&MsdNetSpec::default()).unwrap();
        let mut seen = 0;
        for (i, n) in net.nodes().iter().enumerate() {
            if n.name.ends_with(".reduce.conv") {
                let before = net.shape_of(n.inputs[0])[0] as f64;
                let after = net.shape_of(i + 1)[0] as f64;
                assert_eq!(after, (0.25 * before + 0.5).floor(), "{}", n.name);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn build_is_pure_and_scale_shapes_follow_strides() {
        let spec = MsdNetSpec::default();
        let a = build_msdnet(&spec).unwrap();
        assert_eq!(a, build_msdnet(&spec).unwrap());
        for (i, n) in a.nodes().iter().enumerate() {
            if let Some(s) = n.name.strip_prefix("d1.s").and_then(|r| r.strip_suffix(".cat")) {
                let s: usize = s.parse().unwrap();
                assert_eq!(a.shape_of(i + 1)[1], 32 >> s);
            }
        }
        // Coarsest scale grows by 32 per depth: 128 + 16*32 = 640 -> 320 at
        // depth 16, 320 + 8*32 = 576 -> 288 at depth 24, 288 + 8*32 = 544.
        let cls = a.nodes().iter().position(|n| n.name == "cls.block0.conv").unwrap();
        let into = a.node(cls + 1).inputs[0];
        assert_eq!(a.shape_of(into), &[544, 8, 8, 8]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            MsdNetSpec { transition_depths: vec![32], ..Default::default() },
            MsdNetSpec { bottleneck_reduction: 1.0, ..Default::default() },
            MsdNetSpec { growth_rates: vec![8, 16], ..Default::default() },
            MsdNetSpec { scale_end_depths: vec![24, 16, 32], ..Default::default() },
            MsdNetSpec { input_size: 30, ..Default::default() },
            MsdNetSpec { input_size: 16, ..Default::default() },
        ];
        for spec in bad {
            assert!(build_msdnet(&spec).is_err(), "{spec:?}");
        }
    }
}
