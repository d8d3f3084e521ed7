//! Run settings merged from a config file and command-line flags.
//!
//! Every field is optional so a config file can supply any subset; flags
//! given on the command line win. Parsing into library types happens in one
//! place so that bad values produce the same message wherever they come from.

use std::path::{Path, PathBuf};

use bgvlab::circuit::{CircuitSpec, KeyPolicy, MsPolicy};
use bgvlab::params::{ParamRequest, PrimeCongruence, SizingMode};
use bgvlab::ring::SamplerKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_N: usize = 8192;
pub const DEFAULT_T: u64 = 65537;
pub const DEFAULT_SIGMA: f64 = 3.19;
pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;
pub const MIN_TRIALS: usize = 30;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub n: Option<usize>,
    pub t: Option<u64>,
    pub sigma: Option<f64>,
    pub secret: Option<String>,
    #[serde(alias = "M")]
    pub depth: Option<usize>,
    #[serde(rename = "D", alias = "d")]
    pub d: Option<f64>,
    pub alpha: Option<f64>,
    pub mode: Option<String>,
    pub congruence: Option<String>,
    pub ms_policy: Option<String>,
    pub circuit: Option<PathBuf>,
    pub chain: Option<String>,
    pub plan: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub probes: Option<Vec<String>>,
    pub key_policy: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub checkpoint_every: Option<usize>,
    pub resume: Option<bool>,
    pub dump_trials: Option<usize>,
    pub input: Option<PathBuf>,
    pub ns: Option<Vec<usize>>,
    pub join: Option<PathBuf>,
    pub validate: Option<usize>,
    pub shrink_bottom: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f),)* }
    };
}

impl Settings {
    /// Loads a TOML or JSON file, chosen by extension (`.json` is JSON, anything else TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        overlay!(
            self,
            top,
            n,
            t,
            sigma,
            secret,
            depth,
            d,
            alpha,
            mode,
            congruence,
            ms_policy,
            circuit,
            chain,
            plan,
            trials,
            seed,
            probes,
            key_policy,
            out,
            format,
            checkpoint_every,
            resume,
            dump_trials,
            input,
            ns,
            join,
            validate,
            shrink_bottom
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn depth(&self) -> usize {
        self.depth.unwrap_or(DEFAULT_DEPTH)
    }

    pub fn trials(&self) -> Result<usize> {
        let trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        if trials < MIN_TRIALS {
            return Err(CliError::Usage(format!(
                "--trials {trials} is too small: the normality tests need at least {MIN_TRIALS} samples"
            )));
        }
        Ok(trials)
    }

    pub fn format(&self) -> Result<Format> {
        match self.format.as_deref().unwrap_or("text") {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::Usage(format!("unknown --format {other:?}; use text, json or csv"))),
        }
    }

    pub fn secret(&self) -> Result<SamplerKind> {
        parse_secret(self.secret.as_deref().unwrap_or("ternary"))
    }

    pub fn mode(&self) -> Result<SizingMode> {
        match self.mode.as_deref().unwrap_or("average-case") {
            "average-case" | "average_case" | "average" => Ok(SizingMode::AverageCase),
            "worst-case" | "worst_case" | "worst-case-canonical" | "worst_case_canonical" => {
                Ok(SizingMode::WorstCaseCanonical)
            }
            other => Err(CliError::Usage(format!("unknown --mode {other:?}; use average-case or worst-case"))),
        }
    }

    pub fn congruence(&self) -> Result<PrimeCongruence> {
        self.congruence
            .as_deref()
            .unwrap_or("ntt+t")
            .parse()
            .map_err(|e: bgvlab::Error| CliError::Usage(format!("--congruence: {e}")))
    }

    pub fn ms_policy(&self) -> Result<MsPolicy> {
        match self.ms_policy.as_deref().unwrap_or("before-each-mult") {
            "before-each-mult" | "before_each_mult" => Ok(MsPolicy::BeforeEachMult),
            "none" => Ok(MsPolicy::None),
            other => Err(CliError::Usage(format!("unknown --ms-policy {other:?}; use before-each-mult or none"))),
        }
    }

    pub fn key_policy(&self) -> Result<KeyPolicy> {
        match self.key_policy.as_deref().unwrap_or("per-trial") {
            "per-trial" | "per_trial" => Ok(KeyPolicy::PerTrial),
            "shared" => Ok(KeyPolicy::Shared),
            other => Err(CliError::Usage(format!("unknown --key-policy {other:?}; use per-trial or shared"))),
        }
    }

    pub fn request(&self) -> Result<ParamRequest> {
        let n = self.n.unwrap_or(DEFAULT_N);
        let sigma = self.sigma.unwrap_or(DEFAULT_SIGMA);
        let req = ParamRequest {
            n,
            t: self.t.unwrap_or(DEFAULT_T),
            depth: self.depth(),
            d: self.d.unwrap_or(bgvlab::noise::DEFAULT_D),
            alpha: self.alpha.unwrap_or(bgvlab::noise::DEFAULT_ALPHA),
            secret: self.secret()?,
            error: SamplerKind::DiscreteGaussian { sigma },
            sizing_mode: self.mode()?,
            congruence: self.congruence()?,
        };
        req.validate().map_err(|e| CliError::Usage(format!("{e}; check --n, --t, --D, --sigma and --secret")))?;
        Ok(req)
    }

    /// The circuit from `--circuit`, or the product tree of `--depth` with `--ms-policy` and `--probes`.
    pub fn circuit(&self) -> Result<CircuitSpec> {
        let mut spec = match &self.circuit {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read circuit {}: {e}", path.display())))?;
                if path.extension().is_some_and(|e| e == "json") {
                    CircuitSpec::from_json(&text)?
                } else {
                    CircuitSpec::from_toml(&text)?
                }
            }
            None => {
                let policy = self.ms_policy()?;
                CircuitSpec::product_tree(self.depth())
                    .with_ms_policy(policy)
                    .with_final_ms(policy == MsPolicy::BeforeEachMult)
            }
        };
        if let Some(p) = &self.probes {
            spec = spec.with_probes(p.iter().cloned());
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// `ternary`, `hw:H` (ternary with Hamming weight `H`) or `gaussian:σ`.
pub fn parse_secret(s: &str) -> Result<SamplerKind> {
    let bad = || CliError::Usage(format!("unknown --secret {s:?}; use ternary, hw:<weight> or gaussian:<sigma>"));
    match s.split_once(':') {
        None if s == "ternary" => Ok(SamplerKind::Ternary),
        Some(("hw" | "ternary-hw", h)) => Ok(SamplerKind::TernaryHw { h: h.parse().map_err(|_| bad())? }),
        Some(("gaussian", sigma)) => Ok(SamplerKind::DiscreteGaussian { sigma: sigma.parse().map_err(|_| bad())? }),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let file: Settings = toml::from_str("n = 4096\ndepth = 2\nD = 6.0\nms-policy = \"none\"").unwrap();
        let flags = Settings { depth: Some(5), ..Default::default() };
        let s = file.overlay(flags);
        assert_eq!((s.n, s.depth, s.d), (Some(4096), Some(5), Some(6.0)), "flag depth wins, file keeps the rest");
        assert_eq!(s.ms_policy().unwrap(), MsPolicy::None);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("depht = 3").is_err(), "typos must not be ignored");
        let json: Settings = serde_json::from_str(r#"{"M": 6, "n": 16384}"#).unwrap();
        assert_eq!(json.depth, Some(6));
    }

    #[test]
    fn secrets_parse() {
        assert_eq!(parse_secret("ternary").unwrap(), SamplerKind::Ternary);
        assert_eq!(parse_secret("hw:64").unwrap(), SamplerKind::TernaryHw { h: 64 });
        assert_eq!(parse_secret("gaussian:3.2").unwrap(), SamplerKind::DiscreteGaussian { sigma: 3.2 });
        assert!(parse_secret("binary").is_err());
    }

    #[test]
    fn small_trial_counts_are_rejected() {
        let s = Settings { trials: Some(29), ..Default::default() };
        let msg = s.trials().unwrap_err().to_string();
        assert!(msg.contains("at least 30"), "{msg}");
    }

    #[test]
    fn invalid_requests_explain_the_fix() {
        let s = Settings { t: Some(65536), ..Default::default() };
        let msg = s.request().unwrap_err().to_string();
        assert!(msg.contains("--t"), "{msg}");
    }
}
