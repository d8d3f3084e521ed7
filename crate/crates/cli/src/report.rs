//! Self-describing output envelope shared by every command.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::settings::Settings;

/// `<crate version>-g<commit>`, in the style of `git describe`.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "-g", env!("BGVLAB_GIT_HASH"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective settings after merging the config file and flags.
    pub settings: Settings,
    pub seed: Option<u64>,
    pub fingerprint: Option<String>,
    pub alarms: Vec<String>,
    pub body: T,
}

impl<T: Serialize + DeserializeOwned> Report<T> {
    pub fn new(command: &str, settings: &Settings, body: T) -> Self {
        Self {
            tool: "bgvlab".into(),
            version: VERSION.into(),
            command: command.into(),
            settings: settings.clone(),
            seed: None,
            fingerprint: None,
            alarms: Vec::new(),
            body,
        }
    }

    /// Same envelope around a different body.
    pub fn with_body<U>(self, body: U) -> Report<U> {
        Report {
            tool: self.tool,
            version: self.version,
            command: self.command,
            settings: self.settings,
            seed: self.seed,
            fingerprint: self.fingerprint,
            alarms: self.alarms,
            body,
        }
    }

    /// One-line preamble for CSV and text outputs.
    pub fn preamble(&self) -> String {
        let mut s = format!("# bgvlab {} {}", self.version, self.command);
        if let Some(f) = &self.fingerprint {
            s.push_str(&format!(" fingerprint={f}"));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!(" seed={seed}"));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read report {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Usage(format!("{} is not a bgvlab report of the expected kind: {e}", path.display()))
        })
    }
}

/// Writes `text` to `path`, going through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
