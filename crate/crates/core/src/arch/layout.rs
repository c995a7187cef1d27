use std::fmt;

/// Where in the encoder-decoder skeleton a layer sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Stem,
    Encoder,
    Down,
    Bottleneck,
    Up,
    Decoder,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// One convolutional block (summary row; its layers follow it).
    Block,
    Conv {
        k: usize,
        stride: usize,
        groups: usize,
    },
    ConvTranspose,
    GroupNorm {
        groups: usize,
    },
    Gelu,
    MaxPool,
    AvgPool,
    /// Channel concatenation; `cross_wave` marks inputs coming from another wave.
    Concat {
        cross_wave: bool,
    },
    Add,
}

/// One row of [`crate::arch::Model::describe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInfo {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub level: usize,
    /// 1-based wave index.
    pub wave: usize,
    pub stage: Stage,
    pub block: Option<usize>,
    /// Role within the block, e.g. `conv1`, `dw`, `pw1`, `skip_proj`.
    pub role: &'static str,
}

impl fmt::Display for LayerInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LayerKind::Block => "block".to_string(),
            LayerKind::Conv { k, stride, groups } => format!("conv{k}x{k} s{stride} g{groups}"),
            LayerKind::ConvTranspose => "conv_transpose2x2 s2".to_string(),
            LayerKind::GroupNorm { groups } => format!("group_norm g{groups}"),
            LayerKind::Gelu => "gelu".to_string(),
            LayerKind::MaxPool => "max_pool2".to_string(),
            LayerKind::AvgPool => "avg_pool2".to_string(),
            LayerKind::Concat { cross_wave: true } => "concat (cross-wave)".to_string(),
            LayerKind::Concat { cross_wave: false } => "concat".to_string(),
            LayerKind::Add => "add".to_string(),
        };
        let block = self.block.map_or_else(|| "-".to_string(), |b| format!("#{b}"));
        write!(
            f,
            "wave {} | L{} | {:<10} | {:<5} | {:<28} | {:<9} | {} -> {}",
            self.wave,
            self.level,
            format!("{:?}", self.stage).to_lowercase(),
            block,
            kind,
            self.role,
            self.in_channels,
            self.out_channels
        )
    }
}
