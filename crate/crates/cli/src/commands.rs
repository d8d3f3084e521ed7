//! The subcommands. Each returns its rendered output and the alarms it raised.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bgvlab::bgv::container::{write_ciphertext, write_secret_key};
use bgvlab::bgv::{Bgv, ModulusChain};
use bgvlab::circuit::{
    execute, predict, trace_trial, CircuitSpec, ExecConfig, KeyPolicy, MsPolicy, Prediction, SampleMatrix,
};
use bgvlab::noise::{NoiseContext, Rule};
use bgvlab::params::{
    compare_modes, no_ms_chain, plan, ratio_table, theoretical_bits, validate_plan, ModeComparison, ParamPlan,
    ParamRequest, RatioRow, SizingMode, ValidationReport,
};
use bgvlab::stats::{compare_table, summarize, ComparisonTable, GaussianityReport, SampleMeta, SampleSet};
use serde::{Deserialize, Serialize};

use crate::cli::{Cli, Command};
use crate::error::{CliError, Result};
use crate::report::{write_atomic, Report};
use crate::settings::{Format, Settings, MIN_TRIALS};

/// Ring dimensions of the reference tables.
pub const REFERENCE_NS: [usize; 4] = [4096, 8192, 16384, 32768];
/// Model `log2` variances for fresh, post-ms, first-product and sixth-product noise at `n = 2^13, 2^14, 2^15`.
pub const TABLE1_MODEL: [(usize, [f64; 4]); 3] = [
    (8192, [48.76, 40.84, 95.68, 95.71]),
    (16384, [49.76, 41.84, 98.68, 98.71]),
    (32768, [50.76, 42.84, 101.68, 101.71]),
];
/// Tolerance for [`TABLE1_MODEL`] in bits.
pub const TABLE1_TOLERANCE: f64 = 0.05;
/// Tolerance against the reference average-case totals in bits.
pub const TOTAL_TOLERANCE: f64 = 1.0;
/// Tolerance against the reference intermediate-prime ratios in bits.
pub const RATIO_TOLERANCE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub alarms: Vec<String>,
}

/// Merges the config file under the flags and dispatches.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let flags = cli.command.settings();
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?.overlay(flags),
        None => flags,
    };
    match &cli.command {
        Command::Estimate(_) => estimate(&settings),
        Command::Simulate(_) => simulate(&settings),
        Command::Gaussianity(_) => gaussianity(&settings),
        Command::SelectParams(_) => select_params(&settings),
        Command::Compare(_) => compare(&settings),
    }
}

fn log2s(primes: &[u64]) -> Vec<f64> {
    primes.iter().map(|&p| (p as f64).log2()).collect()
}

fn fmt_log2(x: f64) -> String {
    if !x.is_finite() {
        "-inf".into()
    } else if x.abs() >= 1e6 {
        format!("{x:.2e}")
    } else {
        format!("{x:.2}")
    }
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Usage(format!("csv output: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders a report in the requested format and writes it to `--out` when given.
fn emit<T: Serialize + serde::de::DeserializeOwned>(
    s: &Settings,
    report: &Report<T>,
    text: impl FnOnce() -> String,
    csv: impl FnOnce() -> Result<String>,
) -> Result<Outcome> {
    let rendered = match s.format()? {
        Format::Json => report.to_json()?,
        Format::Text => {
            let mut out = format!("{}\n{}", report.preamble(), text());
            for a in &report.alarms {
                writeln!(out, "ALARM: {a}").unwrap();
            }
            out
        }
        Format::Csv => format!("{}\n{}", report.preamble(), csv()?),
    };
    let output = match &s.out {
        Some(path) => {
            write_atomic(path, &rendered)?;
            format!("wrote {}\n", path.display())
        }
        None => rendered,
    };
    Ok(Outcome { output, alarms: report.alarms.clone() })
}

/// Alarm text when observed failures exceed the union-bound expectation by more than three standard deviations.
fn failure_alarm(failures: usize, trials: usize, failure_log2: f64) -> Option<String> {
    let expected = trials as f64 * failure_log2.exp2();
    (failures as f64 > expected + 3.0 * expected.sqrt())
        .then(|| format!("{failures} decryption failures in {trials} trials; the model bound predicts {expected:.3e}"))
}

fn underestimate_alarms(table: &ComparisonTable) -> Vec<String> {
    table
        .rows
        .iter()
        .filter(|r| r.underestimate)
        .map(|r| format!("model underestimates {} by {:.2} bits", r.probe, -r.delta))
        .collect()
}

// ---------------------------------------------------------------- estimate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateBody {
    pub request: ParamRequest,
    /// `theoretical`, `realized` or `wide` (the single-level chain used without modulus switching).
    pub chain: String,
    pub chain_log2: Vec<f64>,
    pub prediction: Prediction,
    /// False when some product is outside the Gaussian regime and only term-wise bounds apply.
    pub gaussian_regime: bool,
}

pub fn estimate(s: &Settings) -> Result<Outcome> {
    let req = s.request()?;
    let spec = s.circuit()?;
    let ctx = req.noise_context()?;
    let (label, chain_log2, fingerprint) = if s.ms_policy()? == MsPolicy::None && s.circuit.is_none() {
        let chain = no_ms_chain(&req)?;
        let fp = req.scheme_params(chain.clone()).fingerprint();
        ("wide", log2s(chain.primes()), fp)
    } else {
        let p = plan(&req)?;
        let fp = p.scheme_params()?.fingerprint();
        match s.chain.as_deref().unwrap_or("theoretical") {
            "theoretical" => ("theoretical", p.theoretical_bits.clone(), fp),
            "realized" => ("realized", log2s(&p.realized_primes), fp),
            other => return Err(CliError::Usage(format!("unknown --chain {other:?}; use theoretical or realized"))),
        }
    };
    let needed = spec.required_chain_len()?;
    if needed > chain_log2.len() {
        return Err(CliError::Usage(format!(
            "the circuit needs {needed} primes but depth {} plans {}; raise --depth",
            req.depth,
            chain_log2.len()
        )));
    }
    let prediction = predict(&spec, &ctx, &chain_log2)?;
    let spec_probes = spec.effective_probes()?;
    let gaussian_regime =
        prediction.eq11_violations.is_empty() && prediction.nodes.iter().all(|n| n.estimate.rule != Rule::MultTermwise);
    let body = EstimateBody { request: req, chain: label.into(), chain_log2, prediction, gaussian_regime };
    let mut report = Report::new("estimate", s, body);
    report.fingerprint = Some(fingerprint);
    let b = &report.body;
    let rows = || {
        b.prediction.nodes.iter().map(|n| {
            vec![
                n.id.clone(),
                n.level.to_string(),
                format!("{:.4}", n.estimate.log2_variance),
                format!("{:?}", n.estimate.rule),
                format!("{:.4}", n.canonical_log2_bound),
                fmt_log2(n.failure_log2_prob),
            ]
        })
    };
    let text = || {
        let mut t = format!("chain: {} ({} primes)\n", b.chain, b.chain_log2.len());
        let header = ["node", "level", "log2 V", "rule", "canon bound", "log2 P(fail)"];
        writeln!(
            t,
            "{:<12} {:>5} {:>9} {:<14} {:>11} {:>12}",
            header[0], header[1], header[2], header[3], header[4], header[5]
        )
        .unwrap();
        let shown = spec_probes.clone();
        for n in b.prediction.nodes.iter().filter(|n| shown.contains(&n.id)) {
            let rule = format!("{:?}", n.estimate.rule);
            writeln!(
                t,
                "{:<12} {:>5} {:>9.2} {:<14} {:>11.2} {:>12}",
                n.id,
                n.level,
                n.estimate.log2_variance,
                rule,
                n.canonical_log2_bound,
                fmt_log2(n.failure_log2_prob)
            )
            .unwrap();
        }
        if shown.len() < b.prediction.nodes.len() {
            writeln!(t, "({} of {} nodes shown; --format json lists all)", shown.len(), b.prediction.nodes.len())
                .unwrap();
        }
        if !b.gaussian_regime {
            t.push_str("regime: non-Gaussian (products of unswitched ciphertexts); term-wise bounds apply\n");
        }
        t
    };
    let csv = || {
        csv_string(
            &["node", "level", "log2_variance", "rule", "canonical_log2_bound", "failure_log2_prob"],
            rows().collect(),
        )
    };
    emit(s, &report, text, csv)
}

// ---------------------------------------------------------------- select-params

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectBody {
    pub plan: ParamPlan,
    pub validation: Option<ValidationReport>,
}

pub fn select_params(s: &Settings) -> Result<Outcome> {
    let req = s.request()?;
    let mut p = plan(&req)?;
    if let Some(bits) = s.shrink_bottom {
        p = p.shrunk_bottom(bits)?;
    }
    let validation = match s.validate {
        Some(trials) => {
            check_trials(trials)?;
            Some(validate_plan(&p, trials, s.seed())?)
        }
        None => None,
    };
    let mut report = Report::new("select-params", s, SelectBody { plan: p, validation });
    report.fingerprint = Some(report.body.plan.scheme_params()?.fingerprint());
    report.alarms = report.body.plan.alarms.clone();
    if let Some(v) = &report.body.validation {
        report.seed = Some(v.seed);
        report.alarms.extend(failure_alarm(v.failures, v.trials, v.predicted_failure_log2));
        report.alarms.extend(underestimate_alarms(&v.table));
    }
    let b = &report.body;
    let slots = || {
        b.plan.theoretical_bits.iter().zip(&b.plan.realized_primes).enumerate().map(|(i, (bits, p))| {
            vec![i.to_string(), format!("{bits:.2}"), p.to_string(), format!("{:.2}", (*p as f64).log2())]
        })
    };
    let text = || {
        let r = &b.plan.request;
        let mut t = format!(
            "n={} t={} M={} D={} alpha={} mode={:?} congruence={:?}\n",
            r.n, r.t, r.depth, r.d, r.alpha, r.sizing_mode, r.congruence
        );
        writeln!(t, "{:<5} {:>10} {:>22} {:>10}", "slot", "bound", "prime", "log2 p").unwrap();
        for row in slots() {
            writeln!(t, "{:<5} {:>10} {:>22} {:>10}", row[0], row[1], row[2], row[3]).unwrap();
        }
        writeln!(
            t,
            "theoretical total {:.2}, realized total {:.2}, gap {:.2} bits",
            b.plan.theoretical_total, b.plan.total_log2_q, b.plan.realization_gap
        )
        .unwrap();
        writeln!(t, "predicted failure probability 2^{}", fmt_log2(b.plan.predicted_failure_log2)).unwrap();
        for rf in &b.plan.references {
            writeln!(t, "reference {:<24} {:>8.2} ({:+.2})", rf.label, rf.log2_q, rf.log2_q - b.plan.theoretical_total)
                .unwrap();
        }
        if let Some(v) = &b.validation {
            writeln!(t, "validation: {} trials, {} failures", v.trials, v.failures).unwrap();
            t.push_str(&v.table.to_text());
        }
        t
    };
    let csv = || csv_string(&["slot", "bound_bits", "prime", "log2_prime"], slots().collect());
    emit(s, &report, text, csv)
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(CliError::Usage(format!(
            "{trials} trials is too small: the normality tests need at least {MIN_TRIALS} samples"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateBody {
    pub request: ParamRequest,
    pub primes: Vec<String>,
    pub circuit: CircuitSpec,
    pub key_policy: KeyPolicy,
    pub trials: usize,
    pub failures: usize,
    /// Union bound over all nodes of the per-trial failure probability, `null` when it underflows.
    pub predicted_failure_log2: Option<f64>,
    pub reports: BTreeMap<String, GaussianityReport>,
    pub comparison: ComparisonTable,
    pub eq11_violations: Vec<String>,
    /// Alarms carried by the plan the chain came from.
    pub plan_alarms: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    fingerprint: String,
    seed: u64,
    key_policy: KeyPolicy,
    probes: Vec<String>,
    completed: usize,
    trials: usize,
}

/// Reads a plan either bare or wrapped in a `select-params` report.
pub fn load_plan(path: &Path) -> Result<ParamPlan> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read plan {}: {e}", path.display())))?;
    if let Ok(r) = serde_json::from_str::<Report<SelectBody>>(&text) {
        return Ok(r.body.plan);
    }
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is neither a plan nor a select-params report: {e}", path.display())))
}

fn simulation_chain(s: &Settings, req: &ParamRequest) -> Result<(ParamRequest, ModulusChain, Vec<String>)> {
    let unswitched = s.ms_policy()? == MsPolicy::None && s.circuit.is_none();
    let p = match &s.plan {
        Some(path) => Some(load_plan(path)?),
        None if unswitched => None,
        None => Some(plan(req)?),
    };
    match (p, s.shrink_bottom) {
        (Some(p), bits) => {
            let p = match bits {
                Some(b) => p.shrunk_bottom(b)?,
                None => p,
            };
            Ok((p.request.clone(), p.chain()?, p.alarms))
        }
        (None, Some(_)) => Err(CliError::Usage("--shrink-bottom needs a planned chain; drop --ms-policy none".into())),
        (None, None) => Ok((req.clone(), no_ms_chain(req)?, Vec::new())),
    }
}

fn samples_csv(preamble: &str, m: &SampleMatrix) -> Result<String> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    Ok(format!("{preamble}\n{}", String::from_utf8(buf).expect("csv output is utf-8")))
}

pub fn simulate(s: &Settings) -> Result<Outcome> {
    let (req, chain, plan_alarms) = simulation_chain(s, &s.request()?)?;
    // a plan fixes the depth unless --depth overrides it
    let spec = Settings { depth: s.depth.or(Some(req.depth)), ..s.clone() }.circuit()?;
    let trials = s.trials()?;
    let seed = s.seed();
    let key_policy = s.key_policy()?;
    let params = req.scheme_params(chain.clone());
    let fingerprint = params.fingerprint();
    let ctx = req.noise_context()?;
    let needed = spec.required_chain_len()?;
    if needed > chain.len() {
        return Err(CliError::Usage(format!(
            "the circuit needs {needed} primes but the chain has {}; raise --depth or pass a longer --plan",
            chain.len()
        )));
    }
    let prediction = predict(&spec, &ctx, &log2s(chain.primes()))?;
    let probes = spec.effective_probes()?;
    let model = prediction.estimates_for(&probes)?;
    let bgv = Bgv::new(params)?.with_lab_mode(true);
    let out = s.out.as_deref();
    if out.is_none() && (s.resume.is_some() || s.checkpoint_every.is_some() || s.dump_trials.is_some()) {
        return Err(CliError::Usage("--resume, --checkpoint-every and --dump-trials need --out <dir>".into()));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut report = Report::new("simulate", s, ());
    report.seed = Some(seed);
    report.fingerprint = Some(fingerprint.clone());
    let preamble = report.preamble();

    let mut matrix = SampleMatrix { probes: probes.clone(), rows: Vec::new() };
    if s.resume == Some(true) {
        let dir = out.expect("checked above");
        matrix = resume(dir, &fingerprint, seed, key_policy, &probes)?;
    }
    let chunk = s.checkpoint_every.unwrap_or(trials).max(1);
    while matrix.rows.len() < trials {
        let done = matrix.rows.len();
        let cfg = ExecConfig { trials: chunk.min(trials - done), seed, key_policy, first_trial: done as u64 };
        matrix.extend(execute(&spec, &bgv, &cfg)?)?;
        if let Some(dir) = out {
            write_atomic(&dir.join("samples.csv"), &samples_csv(&preamble, &matrix)?)?;
            let cp = Checkpoint {
                version: report.version.clone(),
                fingerprint: fingerprint.clone(),
                seed,
                key_policy,
                probes: probes.clone(),
                completed: matrix.rows.len(),
                trials,
            };
            write_atomic(&dir.join("checkpoint.json"), &serde_json::to_string_pretty(&cp)?)?;
        }
    }
    matrix.rows.truncate(trials);

    if let (Some(dir), Some(k)) = (out, s.dump_trials) {
        let cfg = ExecConfig { trials, seed, key_policy, first_trial: 0 };
        for trial in 0..k.min(trials) as u64 {
            let tr = trace_trial(&spec, &bgv, &cfg, trial)?;
            let tdir = dir.join("dump").join(format!("trial-{trial}"));
            std::fs::create_dir_all(&tdir)?;
            write_secret_key(&mut std::fs::File::create(tdir.join("secret.key"))?, &bgv, &tr.key)?;
            for (id, ct) in &tr.ciphertexts {
                write_ciphertext(&mut std::fs::File::create(tdir.join(format!("{id}.ct")))?, &bgv, ct)?;
            }
        }
    }

    let mut reports = BTreeMap::new();
    for p in &probes {
        let meta = SampleMeta { probe: p.clone(), trials, fingerprint: fingerprint.clone() };
        reports.insert(p.clone(), summarize(&SampleSet::new(matrix.column(p)?, meta))?);
    }
    let comparison = compare_table(&model, &reports)?;
    let union: f64 = prediction.nodes.iter().map(|n| n.failure_log2_prob.exp2()).sum();
    let failure_log2 = union.log2();
    let failures = matrix.failures();
    let body = SimulateBody {
        request: req,
        primes: chain.primes().iter().map(u64::to_string).collect(),
        circuit: spec,
        key_policy,
        trials,
        failures,
        predicted_failure_log2: failure_log2.is_finite().then_some(failure_log2),
        reports,
        comparison,
        eq11_violations: prediction.eq11_violations.clone(),
        plan_alarms,
    };
    let mut report = report.with_body(body);
    report.alarms.extend(underestimate_alarms(&report.body.comparison));
    report.alarms.extend(failure_alarm(failures, trials, failure_log2));
    if let Some(dir) = out {
        write_atomic(&dir.join("summary.json"), &report.to_json()?)?;
    }
    let text = simulate_text(&report.body);
    let rendered = match s.format()? {
        Format::Json => report.to_json()?,
        Format::Csv => format!("{}\n{}", report.preamble(), report.body.comparison.to_csv()?),
        Format::Text => {
            let mut t = format!("{}\n{text}", report.preamble());
            for a in &report.alarms {
                writeln!(t, "ALARM: {a}").unwrap();
            }
            t
        }
    };
    Ok(Outcome { output: rendered, alarms: report.alarms })
}

fn resume(dir: &Path, fingerprint: &str, seed: u64, key_policy: KeyPolicy, probes: &[String]) -> Result<SampleMatrix> {
    let cp_path = dir.join("checkpoint.json");
    let text = std::fs::read_to_string(&cp_path)
        .map_err(|e| CliError::Usage(format!("--resume: cannot read {}: {e}", cp_path.display())))?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    if cp.fingerprint != fingerprint || cp.seed != seed || cp.key_policy != key_policy || cp.probes != probes {
        return Err(CliError::Usage(format!(
            "--resume: the checkpoint in {} belongs to a different run (fingerprint {}, seed {}); pass the original flags or drop --resume",
            dir.display(),
            cp.fingerprint,
            cp.seed
        )));
    }
    let m = SampleMatrix::read_csv(std::fs::File::open(dir.join("samples.csv"))?)?;
    if m.rows.len() != cp.completed || m.probes != probes {
        return Err(CliError::Usage(format!(
            "--resume: samples.csv in {} does not match its checkpoint",
            dir.display()
        )));
    }
    Ok(m)
}

fn gaussianity_rows(reports: &BTreeMap<String, GaussianityReport>, model: Option<&ComparisonTable>) -> String {
    let mut t = String::new();
    writeln!(
        t,
        "{:<12} {:>9} {:>9} {:>7} {:>9} {:>8} {:>8} {:>8}  verdict",
        "probe", "model", "log2 V", "delta", "kurtosis", "skew", "KS p", "AD"
    )
    .unwrap();
    for (probe, r) in reports {
        let row = model.and_then(|m| m.rows.iter().find(|x| &x.probe == probe));
        let (m, d) = match row {
            Some(x) => (format!("{:.2}", x.model_log2), format!("{:+.2}", x.delta)),
            None => ("-".into(), "-".into()),
        };
        writeln!(
            t,
            "{:<12} {:>9} {:>9.2} {:>7} {:>9.3} {:>8.3} {:>8.3} {:>8.3}  {}",
            probe,
            m,
            r.log2_variance,
            d,
            r.kurtosis,
            r.skewness,
            r.ks_pvalue,
            r.ad_statistic,
            if r.verdict { "gaussian" } else { "not gaussian" }
        )
        .unwrap();
    }
    t
}

fn simulate_text(b: &SimulateBody) -> String {
    let log2_q: f64 = b.primes.iter().map(|p| p.parse::<f64>().map(f64::log2).unwrap_or(f64::NAN)).sum();
    let mut t = format!("chain: {} primes, log2 q = {log2_q:.2}\n", b.primes.len());
    let bound = b.predicted_failure_log2.map_or("-inf".to_string(), |x| format!("{x:.1}"));
    writeln!(t, "trials {}, decryption failures {} (model bound 2^{bound} per trial)", b.trials, b.failures).unwrap();
    t.push_str(&gaussianity_rows(&b.reports, Some(&b.comparison)));
    for p in &b.plan_alarms {
        writeln!(t, "plan note: {p}").unwrap();
    }
    t
}

// ---------------------------------------------------------------- gaussianity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianityBody {
    pub input: PathBuf,
    pub reports: BTreeMap<String, GaussianityReport>,
}

/// Pulls `key=value` fields out of a `# bgvlab` preamble line.
fn preamble_field(line: &str, key: &str) -> Option<String> {
    line.split_whitespace().find_map(|w| w.strip_prefix(key).and_then(|v| v.strip_prefix('=')).map(String::from))
}

pub fn gaussianity(s: &Settings) -> Result<Outcome> {
    let input =
        s.input.clone().ok_or_else(|| CliError::Usage("gaussianity needs --input <samples.csv or run dir>".into()))?;
    let path = if input.is_dir() { input.join("samples.csv") } else { input.clone() };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read samples {}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or("");
    let fingerprint = preamble_field(first, "fingerprint");
    let seed = preamble_field(first, "seed").and_then(|v| v.parse().ok());
    let m = SampleMatrix::read_csv(text.as_bytes())?;
    let probes = match &s.probes {
        Some(p) => p.clone(),
        None => m.probes.clone(),
    };
    let mut reports = BTreeMap::new();
    for p in &probes {
        let values = m.column(p).map_err(|_| {
            CliError::Usage(format!("no probe column {p:?} in {}; available: {}", path.display(), m.probes.join(", ")))
        })?;
        let meta =
            SampleMeta { probe: p.clone(), trials: values.len(), fingerprint: fingerprint.clone().unwrap_or_default() };
        reports.insert(p.clone(), summarize(&SampleSet::new(values, meta))?);
    }
    let mut report = Report::new("gaussianity", s, GaussianityBody { input: path, reports });
    report.fingerprint = fingerprint;
    report.seed = seed;
    let b = &report.body;
    let text = || gaussianity_rows(&b.reports, None);
    let csv = || {
        let rows = b
            .reports
            .iter()
            .map(|(p, r)| {
                vec![
                    p.clone(),
                    r.count.to_string(),
                    r.log2_variance.to_string(),
                    r.kurtosis.to_string(),
                    r.skewness.to_string(),
                    r.ks_pvalue.to_string(),
                    r.ad_statistic.to_string(),
                    r.verdict.to_string(),
                ]
            })
            .collect();
        csv_string(
            &["probe", "count", "log2_variance", "kurtosis", "skewness", "ks_pvalue", "ad_statistic", "verdict"],
            rows,
        )
    };
    emit(s, &report, text, csv)
}

// ---------------------------------------------------------------- compare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub n: usize,
    /// Fresh, post-ms, first product and sixth product, in `log2`.
    pub model: [f64; 4],
    pub reference: Option<[f64; 4]>,
    pub ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizingRow {
    pub n: usize,
    pub comparison: ModeComparison,
    pub ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinedRun {
    pub source: PathBuf,
    pub fingerprint: Option<String>,
    pub table: ComparisonTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareBody {
    pub depth: usize,
    pub references: Vec<ReferenceRow>,
    pub sizing: Vec<SizingRow>,
    pub ratios: Vec<RatioRow>,
    pub joined: Option<JoinedRun>,
}

/// Model variances of `enc`, `ms1`, `mult1` and `mult6` on the theoretical depth-6 chain.
pub fn table1_row(req: &ParamRequest) -> Result<[f64; 4]> {
    let req = ParamRequest { depth: 6, ..req.clone() };
    let ctx: NoiseContext = req.noise_context()?;
    let chain = theoretical_bits(&ctx, 6, SizingMode::AverageCase);
    let pred = predict(&CircuitSpec::product_tree(6), &ctx, &chain)?;
    let get = |id: &str| pred.get(id).map(|n| n.estimate.log2_variance).expect("tree node exists");
    Ok([get("enc"), get("ms1"), get("mult1"), get("mult6")])
}

fn compare_request(s: &Settings, n: usize) -> Result<ParamRequest> {
    Settings { n: Some(n), secret: Some("ternary".into()), ..s.clone() }.request()
}

pub fn compare(s: &Settings) -> Result<Outcome> {
    let ns = s.ns.clone().unwrap_or_else(|| REFERENCE_NS.to_vec());
    if ns.is_empty() {
        return Err(CliError::Usage("--ns is empty; give at least one ring dimension, e.g. --ns 4096,8192".into()));
    }
    let mut references = Vec::new();
    let mut sizing = Vec::new();
    for &n in &ns {
        let req = compare_request(s, n)?;
        let model = table1_row(&req)?;
        let reference = TABLE1_MODEL.iter().find(|(m, _)| *m == n).map(|(_, r)| *r);
        let ok = reference.map(|r| model.iter().zip(r).all(|(a, b)| (a - b).abs() <= TABLE1_TOLERANCE));
        references.push(ReferenceRow { n, model, reference, ok });
        let comparison = compare_modes(&req)?;
        let find = |label: &str| comparison.rows.iter().find(|r| r.label == label).map(|r| r.log2_q);
        let ok = match (find("average_case"), find("reference_average_case")) {
            (Some(a), Some(r)) => Some((a - r).abs() <= TOTAL_TOLERANCE),
            _ => None,
        };
        sizing.push(SizingRow { n, comparison, ok });
    }
    let t = s.t.unwrap_or(crate::settings::DEFAULT_T);
    let ratios = ratio_table(&ns, t, s.alpha.unwrap_or(bgvlab::noise::DEFAULT_ALPHA))?;
    let joined = match &s.join {
        Some(path) => {
            let file = if path.is_dir() { path.join("summary.json") } else { path.clone() };
            let run = Report::<SimulateBody>::read(&file)?;
            Some(JoinedRun { source: file, fingerprint: run.fingerprint, table: run.body.comparison })
        }
        None => None,
    };
    let body = CompareBody { depth: s.depth(), references, sizing, ratios, joined };
    let mut report = Report::new("compare", s, body);
    if let Some(j) = &report.body.joined {
        report.alarms.extend(underestimate_alarms(&j.table));
        report.fingerprint = j.fingerprint.clone();
    }
    let b = &report.body;
    let mark = |ok: Option<bool>| match ok {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "-",
    };
    let text = || {
        let mut t = String::from("model log2 variances (enc / ms / mult / sixth mult)\n");
        writeln!(t, "{:>6} {:>8} {:>8} {:>8} {:>8}  {:<32} check", "n", "enc", "ms", "mult", "mult6", "reference")
            .unwrap();
        for r in &b.references {
            let rf = r
                .reference
                .map_or("-".to_string(), |x| format!("{:.2} / {:.2} / {:.2} / {:.2}", x[0], x[1], x[2], x[3]));
            let m = r.model;
            writeln!(
                t,
                "{:>6} {:>8.2} {:>8.2} {:>8.2} {:>8.2}  {:<32} {}",
                r.n,
                m[0],
                m[1],
                m[2],
                m[3],
                rf,
                mark(r.ok)
            )
            .unwrap();
        }
        writeln!(t, "\nmodulus size for depth {}", b.depth).unwrap();
        for r in &b.sizing {
            writeln!(t, "n = {} ({})", r.n, mark(r.ok)).unwrap();
            t.push_str(&r.comparison.to_text());
        }
        writeln!(t, "\nintermediate prime size with h = n/2").unwrap();
        writeln!(t, "{:>6} {:>10} {:>10} {:>8}  check", "n", "log2 p", "reference", "helib").unwrap();
        for r in &b.ratios {
            let ok = r.reference.map(|x| (x - r.log2_ratio).abs() <= RATIO_TOLERANCE);
            let rf = r.reference.map_or("-".to_string(), |x| format!("{x:.2}"));
            writeln!(t, "{:>6} {:>10.2} {:>10} {:>8.0}  {}", r.n, r.log2_ratio, rf, r.helib, mark(ok)).unwrap();
        }
        if let Some(j) = &b.joined {
            writeln!(t, "\nmodel against {}", j.source.display()).unwrap();
            t.push_str(&j.table.to_text());
        }
        t
    };
    let csv = || {
        let rows = b
            .references
            .iter()
            .map(|r| {
                let mut v = vec![r.n.to_string()];
                v.extend(r.model.iter().map(|x| format!("{x:.4}")));
                v.push(mark(r.ok).to_string());
                v
            })
            .collect();
        csv_string(&["n", "enc", "ms", "mult", "mult6", "check"], rows)
    };
    emit(s, &report, text, csv)
}
