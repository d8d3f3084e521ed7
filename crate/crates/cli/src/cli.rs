//! Command-line definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "bgvlab", version = crate::report::VERSION, about = "Instrumented BGV noise lab")]
pub struct Cli {
    /// TOML or JSON file supplying defaults for any flag (keys are the flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form noise estimates for every node of a circuit.
    Estimate(EstimateArgs),
    /// Monte Carlo run of a circuit with per-probe statistics.
    Simulate(SimulateArgs),
    /// Normality battery over a sample CSV written by `simulate`.
    Gaussianity(GaussianityArgs),
    /// Modulus-chain plan for a depth and ring dimension.
    SelectParams(SelectArgs),
    /// Model tables against reference values, optionally joined with a simulate run.
    Compare(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
            Command::Gaussianity(_) => "gaussianity",
            Command::SelectParams(_) => "select-params",
            Command::Compare(_) => "compare",
        }
    }

    pub fn settings(&self) -> Settings {
        match self {
            Command::Estimate(a) => a.settings(),
            Command::Simulate(a) => a.settings(),
            Command::Gaussianity(a) => a.settings(),
            Command::SelectParams(a) => a.settings(),
            Command::Compare(a) => a.settings(),
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct SchemeFlags {
    /// Ring dimension, a power of two [default: 8192].
    #[arg(long)]
    pub n: Option<usize>,
    /// Plaintext modulus, a prime ≡ 1 mod 2n [default: 65537].
    #[arg(long)]
    pub t: Option<u64>,
    /// Error standard deviation [default: 3.19].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Secret distribution: ternary, hw:<weight> or gaussian:<sigma> [default: ternary].
    #[arg(long)]
    pub secret: Option<String>,
    /// Multiplicative depth M [default: 3].
    #[arg(long, visible_alias = "M")]
    pub depth: Option<usize>,
    /// Bound parameter D, at least 4 [default: 8].
    #[arg(long = "D")]
    pub d: Option<f64>,
    /// Gaussianity ratio α [default: 0.01].
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct OutputFlags {
    /// Output format: text, json or csv [default: text].
    #[arg(long)]
    pub format: Option<String>,
    /// Write the output here instead of standard output (a directory for `simulate`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub scheme: SchemeFlags,
    /// before-each-mult or none [default: before-each-mult].
    #[arg(long)]
    pub ms_policy: Option<String>,
    /// Custom circuit file (JSON or TOML) instead of the product tree.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    /// Chain the estimate runs over: theoretical or realized [default: theoretical].
    #[arg(long)]
    pub chain: Option<String>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scheme: SchemeFlags,
    /// before-each-mult or none [default: before-each-mult].
    #[arg(long)]
    pub ms_policy: Option<String>,
    /// Custom circuit file (JSON or TOML) instead of the product tree.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    /// Comma-separated probe node ids [default: first node of each layer].
    #[arg(long, value_delimiter = ',')]
    pub probes: Option<Vec<String>>,
    /// Plan JSON from `select-params` to take the chain from.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Sizing mode when no plan is given: average-case or worst-case.
    #[arg(long)]
    pub mode: Option<String>,
    /// Prime congruence when no plan is given: none, ntt or ntt+t [default: ntt+t].
    #[arg(long)]
    pub congruence: Option<String>,
    /// Number of trials, at least 30 [default: 1000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed; trial i uses stream i of this seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// per-trial or shared [default: per-trial].
    #[arg(long)]
    pub key_policy: Option<String>,
    /// Write partial samples after every this many trials (needs --out).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue an interrupted run from the checkpoint in --out.
    #[arg(long)]
    pub resume: bool,
    /// Dump keys and probe ciphertexts of the first this many trials (needs --out).
    #[arg(long)]
    pub dump_trials: Option<usize>,
    /// Negative control: replace the bottom prime with one about this many bits smaller.
    #[arg(long)]
    pub shrink_bottom: Option<f64>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct GaussianityArgs {
    /// Sample CSV, or a `simulate` output directory containing samples.csv.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated probe columns [default: all].
    #[arg(long, value_delimiter = ',')]
    pub probes: Option<Vec<String>>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub scheme: SchemeFlags,
    /// average-case or worst-case [default: average-case].
    #[arg(long)]
    pub mode: Option<String>,
    /// none, ntt or ntt+t [default: ntt+t].
    #[arg(long)]
    pub congruence: Option<String>,
    /// Also run this many trials of the reference circuit under the plan.
    #[arg(long)]
    pub validate: Option<usize>,
    /// Seed for --validate [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negative control: replace the bottom prime with one about this many bits smaller.
    #[arg(long)]
    pub shrink_bottom: Option<f64>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Default, Args)]
pub struct CompareArgs {
    /// Comma-separated ring dimensions [default: 4096,8192,16384,32768].
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Plaintext modulus [default: 65537].
    #[arg(long)]
    pub t: Option<u64>,
    /// Multiplicative depth for the sizing table [default: 3].
    #[arg(long, visible_alias = "M")]
    pub depth: Option<usize>,
    /// Bound parameter D [default: 8].
    #[arg(long = "D")]
    pub d: Option<f64>,
    /// Gaussianity ratio α [default: 0.01].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `simulate` output directory or summary.json to join model against experiment.
    #[arg(long)]
    pub join: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

impl SchemeFlags {
    fn settings(&self) -> Settings {
        Settings {
            n: self.n,
            t: self.t,
            sigma: self.sigma,
            secret: self.secret.clone(),
            depth: self.depth,
            d: self.d,
            alpha: self.alpha,
            ..Default::default()
        }
    }
}

impl OutputFlags {
    fn apply(&self, s: Settings) -> Settings {
        Settings { format: self.format.clone(), out: self.out.clone(), ..s }
    }
}

impl EstimateArgs {
    pub fn settings(&self) -> Settings {
        self.output.apply(Settings {
            ms_policy: self.ms_policy.clone(),
            circuit: self.circuit.clone(),
            chain: self.chain.clone(),
            ..self.scheme.settings()
        })
    }
}

impl SimulateArgs {
    pub fn settings(&self) -> Settings {
        self.output.apply(Settings {
            ms_policy: self.ms_policy.clone(),
            circuit: self.circuit.clone(),
            probes: self.probes.clone(),
            plan: self.plan.clone(),
            mode: self.mode.clone(),
            congruence: self.congruence.clone(),
            trials: self.trials,
            seed: self.seed,
            key_policy: self.key_policy.clone(),
            checkpoint_every: self.checkpoint_every,
            resume: self.resume.then_some(true),
            dump_trials: self.dump_trials,
            shrink_bottom: self.shrink_bottom,
            ..self.scheme.settings()
        })
    }
}

impl GaussianityArgs {
    pub fn settings(&self) -> Settings {
        self.output.apply(Settings { input: self.input.clone(), probes: self.probes.clone(), ..Default::default() })
    }
}

impl SelectArgs {
    pub fn settings(&self) -> Settings {
        self.output.apply(Settings {
            mode: self.mode.clone(),
            congruence: self.congruence.clone(),
            validate: self.validate,
            seed: self.seed,
            shrink_bottom: self.shrink_bottom,
            ..self.scheme.settings()
        })
    }
}

impl CompareArgs {
    pub fn settings(&self) -> Settings {
        self.output.apply(Settings {
            ns: self.ns.clone(),
            t: self.t,
            depth: self.depth,
            d: self.d,
            alpha: self.alpha,
            join: self.join.clone(),
            ..Default::default()
        })
    }
}
