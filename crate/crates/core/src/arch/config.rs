use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::PaddingMode;

/// The six encoder-decoder families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    UNetBase,
    UNetMod,
    CNUNet,
    UNetDeep,
    SineNet,
    DWNet,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::UNetBase, Family::UNetMod, Family::CNUNet, Family::UNetDeep, Family::SineNet, Family::DWNet];

    pub fn is_multi_wave(self) -> bool {
        matches!(self, Family::SineNet | Family::DWNet)
    }

    pub fn default_waves(self) -> usize {
        match self {
            Family::SineNet => 2,
            Family::DWNet => 3,
            _ => 1,
        }
    }

    /// Number of sequential two-conv blocks at the lowest resolution level.
    pub fn bottleneck_blocks(self) -> usize {
        match self {
            Family::UNetMod => 3,
            _ => 1,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Family::UNetBase => 0,
            Family::UNetMod => 1,
            Family::CNUNet => 2,
            Family::UNetDeep => 3,
            Family::SineNet => 4,
            Family::DWNet => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Family> {
        Family::ALL.iter().copied().find(|f| f.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::UNetBase => "unet_base",
            Family::UNetMod => "unet_mod",
            Family::CNUNet => "cnunet",
            Family::UNetDeep => "unet_deep",
            Family::SineNet => "sinenet",
            Family::DWNet => "dwnet",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TryFrom<String> for Family {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.as_str().to_string()
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Ok(match norm.as_str() {
            "unetbase" | "unet" => Family::UNetBase,
            "unetmod" => Family::UNetMod,
            "cnunet" | "convnextunet" => Family::CNUNet,
            "unetdeep" | "deeperunet" => Family::UNetDeep,
            "sinenet" => Family::SineNet,
            "dwnet" => Family::DWNet,
            _ => return Err(Error::Config(format!("unknown model family '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    /// Channels at the highest-resolution level.
    pub width: usize,
    pub levels: usize,
    pub waves: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub padding: PaddingMode,
    /// Upper bound on group-norm groups; see [`ModelConfig::groups_for`].
    pub norm_groups: usize,
}

impl ModelConfig {
    pub const DEFAULT_LEVELS: usize = 5;
    pub const DEFAULT_NORM_GROUPS: usize = 4;

    pub fn new(family: Family, width: usize, in_channels: usize, out_channels: usize) -> Self {
        ModelConfig {
            family,
            width,
            levels: Self::DEFAULT_LEVELS,
            waves: family.default_waves(),
            in_channels,
            out_channels,
            padding: PaddingMode::Periodic,
            norm_groups: Self::DEFAULT_NORM_GROUPS,
        }
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_waves(mut self, waves: usize) -> Self {
        self.waves = waves;
        self
    }

    pub fn with_padding(mut self, padding: PaddingMode) -> Self {
        self.padding = padding;
        self
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.width << level
    }

    /// `min(norm_groups, channels)`, falling back to one group when that
    /// does not divide the channel count.
    pub fn groups_for(&self, channels: usize) -> usize {
        let g = self.norm_groups.min(channels).max(1);
        if channels.is_multiple_of(g) {
            g
        } else {
            1
        }
    }

    /// Spatial sizes must survive `levels - 1` halvings.
    pub fn spatial_divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 4 {
            return Err(Error::UnsupportedConfig(format!("width {} < 4", self.width)));
        }
        if self.levels < 2 {
            return Err(Error::UnsupportedConfig(format!("levels {} < 2", self.levels)));
        }
        if self.levels > 12 {
            return Err(Error::UnsupportedConfig(format!("levels {} is unreasonably deep", self.levels)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::UnsupportedConfig("zero input or output channels".into()));
        }
        if self.norm_groups == 0 {
            return Err(Error::UnsupportedConfig("norm_groups must be positive".into()));
        }
        match self.family {
            Family::SineNet | Family::DWNet if self.waves < 2 => {
                Err(Error::UnsupportedConfig(format!("{} needs at least 2 waves, got {}", self.family, self.waves)))
            }
            Family::DWNet if self.levels < 3 => Err(Error::UnsupportedConfig(
                "dwnet intermediate waves run between level 1 and the bottleneck; needs levels >= 3".into(),
            )),
            f if !f.is_multi_wave() && self.waves != 1 => {
                Err(Error::UnsupportedConfig(format!("{f} is single-wave, got waves = {}", self.waves)))
            }
            _ => Ok(()),
        }
    }

    pub fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let d = self.spatial_divisor();
        if h == 0 || w == 0 || !h.is_multiple_of(d) || !w.is_multiple_of(d) {
            return Err(Error::UnsupportedConfig(format!("spatial size {h}x{w} not divisible by 2^(levels-1) = {d}")));
        }
        Ok(())
    }

    /// Short label such as `dwnet-3` or `unet_base`.
    pub fn label(&self) -> String {
        if self.family.is_multi_wave() {
            format!("{}-{}", self.family, self.waves)
        } else {
            self.family.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
            assert_eq!(Family::from_code(f.code()), Some(f));
        }
        assert!("resnet".parse::<Family>().is_err());
        assert_eq!("DW-Net".parse::<Family>().unwrap(), Family::DWNet);
    }

    #[test]
    fn wave_counts_are_validated() {
        assert!(ModelConfig::new(Family::SineNet, 4, 1, 1).with_waves(1).validate().is_err());
        assert!(ModelConfig::new(Family::UNetBase, 4, 1, 1).with_waves(2).validate().is_err());
        assert!(ModelConfig::new(Family::DWNet, 4, 1, 1).with_levels(2).validate().is_err());
        assert!(ModelConfig::new(Family::DWNet, 4, 1, 1).validate().is_ok());
        assert!(ModelConfig::new(Family::UNetBase, 2, 1, 1).validate().is_err());
    }

    #[test]
    fn norm_group_fallback() {
        let c = ModelConfig::new(Family::UNetBase, 4, 1, 1);
        assert_eq!(c.groups_for(4), 4);
        assert_eq!(c.groups_for(64), 4);
        assert_eq!(c.groups_for(2), 2);
        assert_eq!(c.groups_for(6), 1);
    }
}
