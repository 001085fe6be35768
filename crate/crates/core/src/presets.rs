//! The two shipped simulation studies, embedded so the library and CLI can
//! run them without locating files on disk.

use crate::config::{ConfigFile, ResolvedConfig};
use crate::error::Result;

pub const SIM1_CONFIG: &str = include_str!("../../../configs/sim1.config");
pub const SIM2_CONFIG: &str = include_str!("../../../configs/sim2.config");

/// Particles used in the studies.
pub const STUDY_PARTICLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Sim1,
    Sim2,
}

impl Study {
    pub fn text(self) -> &'static str {
        match self {
            Study::Sim1 => SIM1_CONFIG,
            Study::Sim2 => SIM2_CONFIG,
        }
    }

    pub fn file(self) -> Result<ConfigFile> {
        ConfigFile::from_toml(self.text())
    }

    pub fn name(self) -> &'static str {
        match self {
            Study::Sim1 => "sim1",
            Study::Sim2 => "sim2",
        }
    }
}

pub fn sim1_file() -> Result<ConfigFile> {
    Study::Sim1.file()
}

pub fn sim2_file() -> Result<ConfigFile> {
    Study::Sim2.file()
}

pub fn sim1() -> Result<ResolvedConfig> {
    sim1_file()?.resolve()
}

pub fn sim2() -> Result<ResolvedConfig> {
    sim2_file()?.resolve()
}
