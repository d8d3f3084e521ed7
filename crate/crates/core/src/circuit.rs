//! Evaluation circuits: the product-tree reference circuit and custom DAGs.
//!
//! A circuit is a list of nodes in topological order. [`predict`] walks it
//! with the noise model; [`execute`] runs it on real ciphertexts, one
//! independent ChaCha stream per trial, and extracts `ν|_0` at the probes.
//!
//! Product-tree node ids follow the layer structure: `enc` is the first
//! leaf, `ms1` the first modulus switch before the first multiplication,
//! `mult1` the first product, and so on up to `final_ms`. Other nodes of the
//! same layer carry a `.i` suffix.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgv::{Bgv, Ciphertext, KeyMaterial};
use crate::error::{Error, Result};
use crate::noise::{
    canonical_track, failure_log2_probability, keyswitch_estimate, v_add, v_clean, v_const, v_ms, v_mult,
    CanonicalEstimate, CanonicalOp, NoiseContext, NoiseEstimate,
};
use crate::ring::Sampler;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsPolicy {
    #[default]
    BeforeEachMult,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    #[default]
    ProductTree,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NodeOp {
    /// Fresh encryption of a uniform plaintext.
    Input,
    ModSwitch {
        input: String,
    },
    Mult {
        left: String,
        right: String,
    },
    Add {
        left: String,
        right: String,
    },
    /// Multiplication by a uniform plaintext constant.
    Const {
        input: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(flatten)]
    pub op: NodeOp,
}

fn default_true() -> bool {
    true
}

/// Declarative circuit description, as read from JSON or TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    #[serde(default)]
    pub kind: CircuitKind,
    /// Multiplicative depth `M` for product trees.
    #[serde(default, rename = "M", alias = "depth")]
    pub depth: usize,
    #[serde(default)]
    pub ms_policy: MsPolicy,
    #[serde(default = "default_true")]
    pub final_ms: bool,
    #[serde(default)]
    pub probes: Vec<String>,
    /// Only used by custom circuits.
    #[serde(default)]
    pub nodes: Vec<Node>,
}

impl CircuitSpec {
    pub fn product_tree(depth: usize) -> Self {
        Self {
            kind: CircuitKind::ProductTree,
            depth,
            ms_policy: MsPolicy::BeforeEachMult,
            final_ms: true,
            probes: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn with_ms_policy(mut self, policy: MsPolicy) -> Self {
        self.ms_policy = policy;
        self
    }

    pub fn with_final_ms(mut self, on: bool) -> Self {
        self.final_ms = on;
        self
    }

    pub fn with_probes<S: Into<String>>(mut self, probes: impl IntoIterator<Item = S>) -> Self {
        self.probes = probes.into_iter().map(Into::into).collect();
        self
    }

    /// Probes as given, or every first-of-layer node of the tree.
    pub fn effective_probes(&self) -> Result<Vec<String>> {
        if !self.probes.is_empty() {
            return Ok(self.probes.clone());
        }
        let nodes = self.nodes()?;
        Ok(nodes.iter().map(|n| n.id.clone()).filter(|id| !id.contains('.')).collect())
    }

    /// Expands the spec into topologically ordered nodes.
    pub fn nodes(&self) -> Result<Vec<Node>> {
        match self.kind {
            CircuitKind::Custom => {
                if self.nodes.is_empty() {
                    return Err(Error::InvalidCircuit("custom circuit without nodes".into()));
                }
                Ok(self.nodes.clone())
            }
            CircuitKind::ProductTree => Ok(self.tree_nodes()),
        }
    }

    fn tree_nodes(&self) -> Vec<Node> {
        let name = |base: &str, i: usize| if i == 0 { base.to_string() } else { format!("{base}.{i}") };
        let mut nodes = Vec::new();
        let mut layer: Vec<String> = (0..1usize << self.depth).map(|i| name("enc", i)).collect();
        for id in &layer {
            nodes.push(Node { id: id.clone(), op: NodeOp::Input });
        }
        for r in 1..=self.depth {
            if self.ms_policy == MsPolicy::BeforeEachMult {
                let ms_base = format!("ms{r}");
                layer = layer
                    .iter()
                    .enumerate()
                    .map(|(i, input)| {
                        let id = name(&ms_base, i);
                        nodes.push(Node { id: id.clone(), op: NodeOp::ModSwitch { input: input.clone() } });
                        id
                    })
                    .collect();
            }
            let mult_base = format!("mult{r}");
            layer = layer
                .chunks(2)
                .enumerate()
                .map(|(i, pair)| {
                    let id = name(&mult_base, i);
                    nodes.push(Node {
                        id: id.clone(),
                        op: NodeOp::Mult { left: pair[0].clone(), right: pair[1].clone() },
                    });
                    id
                })
                .collect();
        }
        if self.final_ms {
            let input = layer[0].clone();
            let id = if self.depth == 0 { "ms1".to_string() } else { "final_ms".to_string() };
            nodes.push(Node { id, op: NodeOp::ModSwitch { input } });
        }
        nodes
    }

    /// Chain length needed: one more than the longest run of modulus switches.
    pub fn required_chain_len(&self) -> Result<usize> {
        let nodes = self.nodes()?;
        let drops = resolve(&nodes)?.iter().map(|r| r.drops).max().unwrap_or(0);
        Ok(drops + 1)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidCircuit(e.to_string()))
    }
}

/// Node with input indices and the number of switches applied since encryption.
struct Resolved {
    inputs: Vec<usize>,
    drops: usize,
}

fn resolve(nodes: &[Node]) -> Result<Vec<Resolved>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<Resolved> = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidCircuit(format!("node {} refers to unknown or later node {id}", node.id)))
        };
        let inputs = match &node.op {
            NodeOp::Input => vec![],
            NodeOp::ModSwitch { input } | NodeOp::Const { input } => vec![lookup(input)?],
            NodeOp::Mult { left, right } | NodeOp::Add { left, right } => vec![lookup(left)?, lookup(right)?],
        };
        let drops_in: Vec<usize> = inputs.iter().map(|&j| out[j].drops).collect();
        if drops_in.len() == 2 && drops_in[0] != drops_in[1] {
            return Err(Error::InvalidCircuit(format!("node {} combines different levels", node.id)));
        }
        let base = drops_in.first().copied().unwrap_or(0);
        let drops = if matches!(node.op, NodeOp::ModSwitch { .. }) { base + 1 } else { base };
        if index.insert(node.id.as_str(), i).is_some() {
            return Err(Error::InvalidCircuit(format!("duplicate node id {}", node.id)));
        }
        out.push(Resolved { inputs, drops });
    }
    Ok(out)
}

/// Model output for one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodePrediction {
    pub id: String,
    pub level: usize,
    pub estimate: NoiseEstimate,
    pub canonical_log2_bound: f64,
    /// `log2` failure probability against `q_ℓ`; `null` when it underflows.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_neg_inf")]
    pub failure_log2_prob: f64,
}

fn finite_or_null<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn null_as_neg_inf<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub nodes: Vec<NodePrediction>,
    /// Modulus-switch nodes whose input violated `V/p² ≤ α·V_ms`.
    pub eq11_violations: Vec<String>,
}

impl Prediction {
    pub fn get(&self, id: &str) -> Option<&NodePrediction> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Probe id → estimate, for joining with empirical reports.
    pub fn estimates_for(&self, probes: &[String]) -> Result<BTreeMap<String, NoiseEstimate>> {
        probes
            .iter()
            .map(|p| {
                self.get(p)
                    .map(|n| (p.clone(), n.estimate.clone()))
                    .ok_or_else(|| Error::ProbeMismatch(format!("no prediction for probe {p}")))
            })
            .collect()
    }
}

/// Walks the circuit symbolically over a chain given by `log2` of its primes.
///
/// Key switching is charged with an extension modulus `q_ℓ·P`, `P ≈ q_{L-1}`.
pub fn predict(spec: &CircuitSpec, ctx: &NoiseContext, chain_log2: &[f64]) -> Result<Prediction> {
    let nodes = spec.nodes()?;
    let resolved = resolve(&nodes)?;
    let needed = resolved.iter().map(|r| r.drops).max().unwrap_or(0) + 1;
    if chain_log2.len() < needed {
        return Err(Error::ChainTooShort { needed, available: chain_log2.len() });
    }
    let top = chain_log2.len() - 1;
    let log2_q = |level: usize| chain_log2[..=level].iter().sum::<f64>();
    let log2_p_aux = log2_q(top);
    let mut est: Vec<NoiseEstimate> = Vec::with_capacity(nodes.len());
    let mut canon: Vec<CanonicalEstimate> = Vec::with_capacity(nodes.len());
    let mut out = Vec::with_capacity(nodes.len());
    let mut violations = Vec::new();
    for (node, r) in nodes.iter().zip(&resolved) {
        let level = top - r.drops;
        let (e, c) = match &node.op {
            NodeOp::Input => (v_clean(ctx), canonical_track(&CanonicalOp::Enc, &[], ctx)?),
            NodeOp::ModSwitch { .. } => {
                let i = r.inputs[0];
                let log2_p = chain_log2[level + 1];
                let e = v_ms(&est[i], (-log2_p).exp2(), ctx);
                if !e.gaussian_regime {
                    violations.push(node.id.clone());
                }
                (e, canonical_track(&CanonicalOp::ModSwitch { log2_p }, &[canon[i]], ctx)?)
            }
            NodeOp::Mult { .. } => {
                let (a, b) = (r.inputs[0], r.inputs[1]);
                let ks = keyswitch_estimate(ctx, log2_q(level), log2_q(level) + log2_p_aux);
                let e = v_mult(&est[a], &est[b], ctx).absorb(&ks);
                (e, canonical_track(&CanonicalOp::Mult, &[canon[a], canon[b]], ctx)?)
            }
            NodeOp::Add { .. } => {
                let (a, b) = (r.inputs[0], r.inputs[1]);
                (v_add(&est[a], &est[b]), canonical_track(&CanonicalOp::Add, &[canon[a], canon[b]], ctx)?)
            }
            NodeOp::Const { .. } => {
                let i = r.inputs[0];
                (v_const(&est[i], ctx), canonical_track(&CanonicalOp::Const, &[canon[i]], ctx)?)
            }
        };
        out.push(NodePrediction {
            id: node.id.clone(),
            level,
            canonical_log2_bound: c.log2_bound,
            failure_log2_prob: failure_log2_probability(e.variance, log2_q(level), ctx.n),
            estimate: e.clone(),
        });
        est.push(e);
        canon.push(c);
    }
    Ok(Prediction { nodes: out, eq11_violations: violations })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPolicy {
    /// Fresh keys every trial, so samples are independent across trials.
    #[default]
    PerTrial,
    /// One key set for the whole run.
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub key_policy: KeyPolicy,
    /// First trial index; lets interrupted runs resume.
    #[serde(default)]
    pub first_trial: u64,
}

impl ExecConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self { trials, seed, key_policy: KeyPolicy::PerTrial, first_trial: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    /// `ν|_0` at each probe, in probe order.
    pub values: Vec<BigInt>,
    /// Every sink decrypted to the plaintext-side result.
    pub correct: bool,
}

/// One row per trial and one column per probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    pub probes: Vec<String>,
    pub rows: Vec<TrialRow>,
}

impl SampleMatrix {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.correct).count()
    }

    pub fn column(&self, probe: &str) -> Result<Vec<BigInt>> {
        let j = self
            .probes
            .iter()
            .position(|p| p == probe)
            .ok_or_else(|| Error::ProbeMismatch(format!("no column {probe}")))?;
        Ok(self.rows.iter().map(|r| r.values[j].clone()).collect())
    }

    pub fn extend(&mut self, other: SampleMatrix) -> Result<()> {
        if other.probes != self.probes {
            return Err(Error::ProbeMismatch("cannot append matrices with different probes".into()));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["trial".to_string()];
        header.extend(self.probes.iter().cloned());
        header.push("correct".into());
        out.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.rows {
            let mut rec = vec![r.trial.to_string()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.push(r.correct.to_string());
            out.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`SampleMatrix::write_csv`]; lines starting with `#` are skipped.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        if header.len() < 2 || &header[0] != "trial" || &header[header.len() - 1] != "correct" {
            return Err(Error::Format("sample CSV needs trial, probe columns and correct".into()));
        }
        let probes: Vec<String> = header.iter().skip(1).take(header.len() - 2).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let parse_err = |f: &str| Error::Format(format!("bad field {f:?}"));
            let trial = rec[0].parse().map_err(|_| parse_err(&rec[0]))?;
            let values = (1..=probes.len())
                .map(|j| rec[j].parse::<BigInt>().map_err(|_| parse_err(&rec[j])))
                .collect::<Result<Vec<_>>>()?;
            let correct = rec[probes.len() + 1].parse().map_err(|_| parse_err(&rec[probes.len() + 1]))?;
            rows.push(TrialRow { trial, values, correct });
        }
        Ok(Self { probes, rows })
    }
}

/// Stream reserved for the shared key under [`KeyPolicy::Shared`].
const SHARED_KEY_STREAM: u64 = u64::MAX;

fn uniform_plaintext(bgv: &Bgv, s: &mut Sampler) -> Vec<i64> {
    (0..bgv.n()).map(|_| s.uniform_centered(bgv.t())).collect()
}

/// Keys and probe ciphertexts of one trial, for dumping to containers.
#[derive(Clone, Debug)]
pub struct TrialTrace {
    pub trial: u64,
    pub key: KeyMaterial,
    /// `(probe id, ciphertext)` in probe order.
    pub ciphertexts: Vec<(String, Ciphertext)>,
}

/// Runs one trial and returns `ν|_0` at each probe index plus the correctness flag.
#[allow(clippy::too_many_arguments)]
fn run_trial(
    bgv: &Bgv,
    nodes: &[Node],
    resolved: &[Resolved],
    probe_idx: &[usize],
    shared: Option<&KeyMaterial>,
    seed: u64,
    trial: u64,
    mut trace: Option<&mut Vec<(String, Ciphertext)>>,
) -> Result<(TrialRow, Option<KeyMaterial>)> {
    let mut s = Sampler::for_stream(seed, trial);
    let own;
    let key = match shared {
        Some(k) => k,
        None => {
            own = bgv.keygen(&mut s);
            &own
        }
    };
    let top = bgv.top_level();
    let mut used = vec![0usize; nodes.len()];
    for r in resolved {
        for &i in &r.inputs {
            used[i] += 1;
        }
    }
    let mut remaining = used.clone();
    let mut cts: Vec<Option<Ciphertext>> = vec![None; nodes.len()];
    let mut plain: Vec<Option<Vec<i64>>> = vec![None; nodes.len()];
    let mut values = vec![BigInt::from(0); probe_idx.len()];
    let mut correct = true;
    for (i, (node, r)) in nodes.iter().zip(resolved).enumerate() {
        let get = |j: usize, cts: &Vec<Option<Ciphertext>>| cts[j].clone().expect("input still live");
        let (ct, m) = match &node.op {
            NodeOp::Input => {
                let m = uniform_plaintext(bgv, &mut s);
                (bgv.encrypt_coeffs(&m, key, &mut s)?, m)
            }
            NodeOp::ModSwitch { .. } => {
                let j = r.inputs[0];
                let c = cts[j].as_ref().expect("input still live");
                (bgv.mod_switch(c, top - r.drops)?, plain[j].clone().expect("plaintext tracked"))
            }
            NodeOp::Mult { .. } => {
                let (a, b) = (r.inputs[0], r.inputs[1]);
                let ct = bgv.multiply(&get(a, &cts), &get(b, &cts), key)?;
                let m = bgv.plaintext_mul(plain[a].as_ref().unwrap(), plain[b].as_ref().unwrap());
                (ct, m)
            }
            NodeOp::Add { .. } => {
                let (a, b) = (r.inputs[0], r.inputs[1]);
                let ct = bgv.add(&get(a, &cts), &get(b, &cts))?;
                (ct, bgv.plaintext_add(plain[a].as_ref().unwrap(), plain[b].as_ref().unwrap()))
            }
            NodeOp::Const { .. } => {
                let j = r.inputs[0];
                let k = uniform_plaintext(bgv, &mut s);
                let ct = bgv.const_mul(&k, cts[j].as_ref().expect("input still live"))?;
                let m = bgv.plaintext_mul(&k, plain[j].as_ref().unwrap());
                (ct, m)
            }
        };
        for (slot, &p) in probe_idx.iter().enumerate() {
            if p == i {
                values[slot] = bgv.critical_coeff0(&ct, key)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push((node.id.clone(), ct.clone()));
                }
            }
        }
        if used[i] == 0 && bgv.decrypt_coeffs(&ct, key) != m {
            correct = false;
        }
        for &j in &r.inputs {
            remaining[j] -= 1;
            if remaining[j] == 0 {
                cts[j] = None;
                plain[j] = None;
            }
        }
        cts[i] = Some(ct);
        plain[i] = Some(m);
    }
    let own_key = if trace.is_some() { Some(key.clone()) } else { None };
    Ok((TrialRow { trial, values, correct }, own_key))
}

struct Prepared {
    nodes: Vec<Node>,
    resolved: Vec<Resolved>,
    probes: Vec<String>,
    probe_idx: Vec<usize>,
    shared: Option<KeyMaterial>,
}

fn prepare(spec: &CircuitSpec, bgv: &Bgv, cfg: &ExecConfig) -> Result<Prepared> {
    if !bgv.lab_mode() {
        return Err(Error::LabModeDisabled);
    }
    let nodes = spec.nodes()?;
    let resolved = resolve(&nodes)?;
    let needed = resolved.iter().map(|r| r.drops).max().unwrap_or(0) + 1;
    if bgv.top_level() + 1 < needed {
        return Err(Error::ChainTooShort { needed, available: bgv.top_level() + 1 });
    }
    let probes = spec.effective_probes()?;
    let probe_idx = probes
        .iter()
        .map(|p| {
            nodes.iter().position(|n| &n.id == p).ok_or_else(|| Error::ProbeMismatch(format!("unknown probe {p}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let shared = match cfg.key_policy {
        KeyPolicy::Shared => Some(bgv.keygen(&mut Sampler::for_stream(cfg.seed, SHARED_KEY_STREAM))),
        KeyPolicy::PerTrial => None,
    };
    Ok(Prepared { nodes, resolved, probes, probe_idx, shared })
}

/// Runs `cfg.trials` independent trials in parallel; rows come back in trial order.
pub fn execute(spec: &CircuitSpec, bgv: &Bgv, cfg: &ExecConfig) -> Result<SampleMatrix> {
    let p = prepare(spec, bgv, cfg)?;
    let start = cfg.first_trial;
    let rows = (start..start + cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            run_trial(bgv, &p.nodes, &p.resolved, &p.probe_idx, p.shared.as_ref(), cfg.seed, trial, None)
                .map(|(row, _)| row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleMatrix { probes: p.probes, rows })
}

/// Replays trial `trial` of the run described by `cfg` and keeps its key and probe ciphertexts.
pub fn trace_trial(spec: &CircuitSpec, bgv: &Bgv, cfg: &ExecConfig, trial: u64) -> Result<TrialTrace> {
    let p = prepare(spec, bgv, cfg)?;
    let mut ciphertexts = Vec::with_capacity(p.probes.len());
    let (_, key) = run_trial(
        bgv,
        &p.nodes,
        &p.resolved,
        &p.probe_idx,
        p.shared.as_ref(),
        cfg.seed,
        trial,
        Some(&mut ciphertexts),
    )?;
    Ok(TrialTrace { trial, key: key.expect("traced trials return their key"), ciphertexts })
}

/// Result of the two-operand product experiment for the correction factor `F_s(1,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMeasurement {
    pub trials: usize,
    /// Pooled coefficient variance of each post-ms operand.
    pub v_left: f64,
    pub v_right: f64,
    /// Sample variance of `(ν·ν')|_0` over trials.
    pub v_product: f64,
    /// `v_product / (n·v_left·v_right)`.
    pub ratio: f64,
}

fn negacyclic_coeff0(a: &[i128], b: &[i128]) -> i128 {
    let n = a.len();
    let mut acc = a[0] * b[0];
    for j in 1..n {
        acc -= a[j] * b[n - j];
    }
    acc
}

/// Encrypts two messages under one key, switches both down one level and
/// measures `Var((ν·ν')|_0) / (n·V·V')` with the exact integer product.
pub fn correction_factor_experiment(bgv: &Bgv, trials: usize, seed: u64) -> Result<CorrectionMeasurement> {
    if !bgv.lab_mode() {
        return Err(Error::LabModeDisabled);
    }
    if bgv.top_level() < 1 {
        return Err(Error::ChainTooShort { needed: 2, available: 1 });
    }
    let target = bgv.top_level() - 1;
    let n = bgv.n();
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<(f64, f64, f64)> {
            let mut s = Sampler::for_stream(seed, trial);
            let key = bgv.keygen(&mut s);
            let mut nus = Vec::with_capacity(2);
            for _ in 0..2 {
                let m = uniform_plaintext(bgv, &mut s);
                let c = bgv.mod_switch(&bgv.encrypt_coeffs(&m, &key, &mut s)?, target)?;
                let nu: Vec<i128> = bgv
                    .critical_quantity(&c, &key)?
                    .iter()
                    .map(|x| i128::try_from(x).expect("post-ms noise is small"))
                    .collect();
                nus.push(nu);
            }
            let sq = |v: &[i128]| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>() / n as f64;
            let prod = negacyclic_coeff0(&nus[0], &nus[1]) as f64;
            Ok((sq(&nus[0]), sq(&nus[1]), prod))
        })
        .collect::<Result<Vec<_>>>()?;
    let tf = trials as f64;
    let v_left = per_trial.iter().map(|x| x.0).sum::<f64>() / tf;
    let v_right = per_trial.iter().map(|x| x.1).sum::<f64>() / tf;
    let mean_p = per_trial.iter().map(|x| x.2).sum::<f64>() / tf;
    let v_product = per_trial.iter().map(|x| (x.2 - mean_p).powi(2)).sum::<f64>() / (tf - 1.0);
    Ok(CorrectionMeasurement { trials, v_left, v_right, v_product, ratio: v_product / (n as f64 * v_left * v_right) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgv::{ModulusChain, SchemeParams};
    use crate::noise::Rule;

    fn theory_chain(m: usize) -> Vec<f64> {
        let mut c = vec![24.92];
        c.extend(std::iter::repeat_n(30.76, m));
        c.push(7.29);
        c
    }

    #[test]
    fn tree_shape_and_names() {
        let spec = CircuitSpec::product_tree(3);
        let nodes = spec.nodes().unwrap();
        assert_eq!(nodes.iter().filter(|n| matches!(n.op, NodeOp::Input)).count(), 8);
        assert_eq!(nodes.iter().filter(|n| matches!(n.op, NodeOp::Mult { .. })).count(), 7);
        assert_eq!(spec.required_chain_len().unwrap(), 5);
        assert_eq!(
            spec.effective_probes().unwrap(),
            ["enc", "ms1", "mult1", "ms2", "mult2", "ms3", "mult3", "final_ms"]
        );
        let plain = CircuitSpec::product_tree(3).with_ms_policy(MsPolicy::None).with_final_ms(false);
        assert_eq!(plain.required_chain_len().unwrap(), 1);
    }

    #[test]
    fn reference_circuit_levels_are_stable() {
        let ctx = NoiseContext::standard(1 << 13, 65537);
        let p = predict(&CircuitSpec::product_tree(3), &ctx, &theory_chain(3)).unwrap();
        assert!((p.get("enc").unwrap().estimate.log2_variance - 48.76).abs() < 0.05);
        for id in ["ms1", "ms2", "ms3"] {
            let v = p.get(id).unwrap().estimate.log2_variance;
            assert!((v - 40.84).abs() < 0.05, "{id}: {v}");
        }
        for id in ["mult1", "mult2", "mult3"] {
            let e = &p.get(id).unwrap().estimate;
            assert_eq!(e.rule, Rule::MultCollapsed);
            assert!((e.log2_variance - 95.68).abs() < 0.05, "{id}: {}", e.log2_variance);
        }
        assert!(p.eq11_violations.is_empty(), "{:?}", p.eq11_violations);
        assert_eq!(p.get("final_ms").unwrap().level, 0);
    }

    #[test]
    fn depth_zero_and_short_chain() {
        let ctx = NoiseContext::standard(1 << 13, 65537);
        let p = predict(&CircuitSpec::product_tree(0), &ctx, &theory_chain(0)).unwrap();
        assert_eq!(p.nodes.len(), 2);
        assert!(matches!(
            predict(&CircuitSpec::product_tree(3), &ctx, &[30.0, 30.0]),
            Err(Error::ChainTooShort { needed: 5, available: 2 })
        ));
    }

    #[test]
    fn no_ms_prediction_exceeds_ms_prediction() {
        let ctx = NoiseContext::standard(1 << 13, 65537);
        let with = predict(&CircuitSpec::product_tree(3), &ctx, &theory_chain(3)).unwrap();
        let spec = CircuitSpec::product_tree(3).with_ms_policy(MsPolicy::None).with_final_ms(false);
        let without = predict(&spec, &ctx, &[60.0; 8]).unwrap();
        for r in 1..=3 {
            let id = format!("mult{r}");
            let a = with.get(&id).unwrap().estimate.log2_variance;
            let b = without.get(&id).unwrap().estimate.log2_variance;
            assert!(b > a, "{id}: {b} vs {a}");
            assert_eq!(without.get(&id).unwrap().estimate.rule, Rule::MultTermwise);
        }
    }

    #[test]
    fn custom_circuit_validation() {
        let json = r#"{"kind":"custom","nodes":[
            {"id":"a","op":"input"},{"id":"b","op":"input"},
            {"id":"s","op":"add","left":"a","right":"b"},
            {"id":"k","op":"const","input":"s"},
            {"id":"d","op":"mod_switch","input":"k"}]}"#;
        let spec = CircuitSpec::from_json(json).unwrap();
        assert_eq!(spec.required_chain_len().unwrap(), 2);
        let bad = r#"{"kind":"custom","nodes":[{"id":"a","op":"mod_switch","input":"z"}]}"#;
        assert!(CircuitSpec::from_json(bad).unwrap().nodes().and_then(|n| resolve(&n).map(|_| ())).is_err());
        let mixed = r#"{"kind":"custom","nodes":[
            {"id":"a","op":"input"},{"id":"b","op":"mod_switch","input":"a"},
            {"id":"c","op":"mult","left":"a","right":"b"}]}"#;
        assert!(CircuitSpec::from_json(mixed).unwrap().required_chain_len().is_err());
        let toml = "kind = \"product_tree\"\nM = 2\nms_policy = \"none\"\nfinal_ms = false\nprobes = [\"mult2\"]\n";
        let t = CircuitSpec::from_toml(toml).unwrap();
        assert_eq!((t.depth, t.ms_policy, t.final_ms), (2, MsPolicy::None, false));
    }

    fn toy_bgv(n: usize, levels: usize) -> Bgv {
        let t = 97u64;
        let step = 2 * n as u64 * t;
        let mut primes = Vec::new();
        let mut start = 1u64 << 40;
        while primes.len() < levels {
            let p = crate::arith::next_prime_congruent(start, step, u64::MAX >> 2, |_| true).unwrap();
            primes.push(p);
            start = p + 1;
        }
        Bgv::new(SchemeParams::standard(n, t, ModulusChain::new(primes).unwrap())).unwrap().with_lab_mode(true)
    }

    #[test]
    fn execution_is_correct_and_deterministic() {
        let bgv = toy_bgv(16, 4);
        let spec = CircuitSpec::product_tree(2);
        let cfg = ExecConfig::new(12, 99);
        let a = execute(&spec, &bgv, &cfg).unwrap();
        assert_eq!(a.failures(), 0);
        assert_eq!(a.rows.len(), 12);
        let b = execute(&spec, &bgv, &cfg).unwrap();
        assert_eq!(a, b, "same seed must give the same matrix");
        let mut resumed = execute(&spec, &bgv, &ExecConfig { trials: 5, ..cfg.clone() }).unwrap();
        resumed
            .extend(execute(&spec, &bgv, &ExecConfig { trials: 7, first_trial: 5, ..cfg.clone() }).unwrap())
            .unwrap();
        assert_eq!(resumed, a, "split runs must match one run");
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(SampleMatrix::read_csv(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn traced_trial_matches_the_run() {
        let bgv = toy_bgv(16, 4);
        let spec = CircuitSpec::product_tree(2);
        for policy in [KeyPolicy::PerTrial, KeyPolicy::Shared] {
            let cfg = ExecConfig { key_policy: policy, ..ExecConfig::new(4, 7) };
            let run = execute(&spec, &bgv, &cfg).unwrap();
            let tr = trace_trial(&spec, &bgv, &cfg, 2).unwrap();
            let ids: Vec<&str> = tr.ciphertexts.iter().map(|(id, _)| id.as_str()).collect();
            assert_eq!(ids, run.probes, "{policy:?}");
            for (j, (_, ct)) in tr.ciphertexts.iter().enumerate() {
                assert_eq!(bgv.critical_coeff0(ct, &tr.key).unwrap(), run.rows[2].values[j], "{policy:?} probe {j}");
            }
        }
    }

    #[test]
    fn custom_circuit_executes() {
        let bgv = toy_bgv(16, 3);
        let json = r#"{"kind":"custom","probes":["s","k"],"nodes":[
            {"id":"a","op":"input"},{"id":"b","op":"input"},
            {"id":"s","op":"add","left":"a","right":"b"},
            {"id":"k","op":"const","input":"s"},
            {"id":"d","op":"mod_switch","input":"k"},
            {"id":"e","op":"mod_switch","input":"a"},
            {"id":"m","op":"mult","left":"d","right":"e"}]}"#;
        let spec = CircuitSpec::from_json(json).unwrap();
        let out = execute(&spec, &bgv, &ExecConfig::new(4, 1)).unwrap();
        assert_eq!(out.failures(), 0);
        assert_eq!(out.probes, ["s", "k"]);
    }
}
