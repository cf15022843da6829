//! Versioned JSON config files. Unknown keys are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

pub trait Versioned {
    fn version(&self) -> u32;
}

/// Loads `path`, or the default config when no path is given.
pub fn load<T: DeserializeOwned + Default + Versioned>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let cfg: T =
        serde_json::from_str(&text).map_err(|e| CliError::InvalidConfig(format!("{}: {e}", path.display())))?;
    if cfg.version() != CONFIG_VERSION {
        return Err(CliError::InvalidConfig(format!(
            "{}: version {} is not supported (expected {CONFIG_VERSION})",
            path.display(),
            cfg.version()
        )));
    }
    Ok(cfg)
}

pub fn default_version() -> u32 {
    CONFIG_VERSION
}

macro_rules! versioned {
    ($($t:ty),* $(,)?) => {
        $(impl $crate::config::Versioned for $t {
            fn version(&self) -> u32 {
                self.version
            }
        })*
    };
}
pub(crate) use versioned;
