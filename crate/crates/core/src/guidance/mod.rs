//! Color control for diffusion sampling: enforced low-frequency replacement,
//! initialized (SDEdit-style) diffusion, universal guidance and the
//! calibrated fine guidance in pixel and latent space, all behind one guided
//! DDIM sampler.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod compare;
mod sampler;
mod terms;

pub use compare::{ComparisonSummary, Experiment, ModeSummary, RunRecord};
pub use sampler::{
    apply_enforced, init_from_color, initial_timestep, GuidanceConfig, GuidedSampleResult, Sampler,
    DEFAULT_INIT_FRACTION,
};
pub use terms::GuidanceTerms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    None,
    Enforced,
    Initialized,
    Universal,
    FinePixel,
    FineLatent,
}

impl GuidanceMode {
    pub const ALL: [GuidanceMode; 6] = [
        GuidanceMode::None,
        GuidanceMode::Enforced,
        GuidanceMode::Initialized,
        GuidanceMode::Universal,
        GuidanceMode::FinePixel,
        GuidanceMode::FineLatent,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GuidanceMode::None => "none",
            GuidanceMode::Enforced => "enforced",
            GuidanceMode::Initialized => "initialized",
            GuidanceMode::Universal => "universal",
            GuidanceMode::FinePixel => "fine_pixel",
            GuidanceMode::FineLatent => "fine_latent",
        }
    }

    pub fn is_fine(&self) -> bool {
        matches!(self, GuidanceMode::FinePixel | GuidanceMode::FineLatent)
    }

    /// Modes that add a gradient term to the noise prediction.
    pub fn is_gradient(&self) -> bool {
        self.is_fine() || *self == GuidanceMode::Universal
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        GuidanceMode::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown guidance mode '{s}'")))
    }
}
