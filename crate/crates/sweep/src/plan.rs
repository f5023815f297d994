//! Experiment plan files: flat `key = value` lines, `#` starts a comment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use smt_core::NodeId;
use smt_sim::{AdversaryModel, Protocol, ScenarioConfig};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    DuplicateKey { line: usize, key: String, first: usize },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue { line: usize, key: String, reason: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },
    #[error("`{key}` out of range: {reason}")]
    OutOfRange { key: String, reason: String },
}

impl PlanError {
    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            PlanError::Syntax { .. } => None,
            PlanError::UnknownKey { key, .. }
            | PlanError::DuplicateKey { key, .. }
            | PlanError::InvalidValue { key, .. }
            | PlanError::OutOfRange { key, .. } => Some(key),
            PlanError::MissingKey { key } => Some(key),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: ScenarioConfig,
    pub sweep: Vec<usize>,
    pub protocols: Vec<Protocol>,
    pub seeds: Vec<u64>,
    /// Adversary model used for non-zero sweep values.
    pub adversary_model: AdversaryModel,
    pub output: Option<PathBuf>,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "nodes",
    "width",
    "height",
    "range",
    "speed_min",
    "speed_max",
    "pause",
    "mobility_interval",
    "adversary_model",
    "sweep",
    "protocols",
    "seeds",
    "source",
    "destination",
    "packet_size",
    "rate",
    "duration",
    "start",
    "latency",
    "loss",
    "k",
    "window",
    "loss_threshold",
    "min_outcomes",
    "trust_initial",
    "trust_threshold",
    "anomaly_threshold",
    "penalty_factor",
    "decay_period",
    "discovery_wait",
    "rediscovery_interval",
    "route_max_age",
    "nsp_silence_timeout",
    "output",
];

const REQUIRED: &[&str] = &["protocols", "sweep", "seeds"];

struct Entry {
    line: usize,
    value: String,
}

fn invalid(key: &str, line: usize, reason: impl Into<String>) -> PlanError {
    PlanError::InvalidValue { line, key: key.to_string(), reason: reason.into() }
}

fn parse_num<T: std::str::FromStr>(key: &str, e: &Entry) -> Result<T, PlanError>
where
    T::Err: std::fmt::Display,
{
    e.value.parse::<T>().map_err(|err| invalid(key, e.line, format!("{:?}: {err}", e.value)))
}

/// `1..20` (inclusive) or a comma list.
fn parse_u64_list(key: &str, e: &Entry) -> Result<Vec<u64>, PlanError> {
    let v = e.value.trim();
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| invalid(key, e.line, format!("bad range start in {v:?}")))?;
        let b: u64 = b.trim().parse().map_err(|_| invalid(key, e.line, format!("bad range end in {v:?}")))?;
        if a > b {
            return Err(invalid(key, e.line, format!("empty range {v:?}")));
        }
        return Ok((a..=b).collect());
    }
    v.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| invalid(key, e.line, format!("bad entry {s:?}"))))
        .collect()
}

fn parse_protocols(e: &Entry) -> Result<Vec<Protocol>, PlanError> {
    let v = e.value.trim();
    if v.eq_ignore_ascii_case("both") {
        return Ok(vec![Protocol::ApsSmt, Protocol::Nsp]);
    }
    let mut out: Vec<Protocol> = Vec::new();
    for part in v.split(',') {
        let p: Protocol = part.parse().map_err(|err: String| invalid("protocols", e.line, err))?;
        if out.contains(&p) {
            return Err(invalid("protocols", e.line, format!("{p} listed twice")));
        }
        out.push(p);
    }
    out.sort();
    Ok(out)
}

pub fn parse_plan(text: &str) -> Result<ExperimentPlan, PlanError> {
    let mut entries: HashMap<&str, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or(PlanError::Syntax { line })?;
        let k = k.trim();
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(PlanError::UnknownKey { line, key: k.to_string() });
        };
        if let Some(prev) = entries.get(key) {
            return Err(PlanError::DuplicateKey { line, key: key.to_string(), first: prev.line });
        }
        entries.insert(key, Entry { line, value: v.trim().to_string() });
    }
    for &key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(PlanError::MissingKey { key });
        }
    }

    let mut base = ScenarioConfig::default();
    let mut adversary_model = AdversaryModel::BlackHole;
    let mut output = None;
    let mut sweep = Vec::new();
    let mut protocols = Vec::new();
    let mut seeds = Vec::new();
    let mut destination_set = false;

    for &key in KEYS {
        let Some(e) = entries.get(key) else { continue };
        let p = &mut base.params;
        match key {
            "nodes" => base.node_count = parse_num(key, e)?,
            "width" => base.width = parse_num(key, e)?,
            "height" => base.height = parse_num(key, e)?,
            "range" => base.reception_range = parse_num(key, e)?,
            "speed_min" => base.mobility.speed_min = parse_num(key, e)?,
            "speed_max" => base.mobility.speed_max = parse_num(key, e)?,
            "pause" => base.mobility.pause = parse_num(key, e)?,
            "mobility_interval" => base.mobility.update_interval = parse_num(key, e)?,
            "adversary_model" => {
                adversary_model = e.value.parse().map_err(|err: String| invalid(key, e.line, err))?;
                if adversary_model == AdversaryModel::None {
                    return Err(invalid(key, e.line, "use sweep = 0 for adversary-free runs"));
                }
            }
            "sweep" => {
                sweep = parse_u64_list(key, e)?.into_iter().map(|v| v as usize).collect();
            }
            "protocols" => protocols = parse_protocols(e)?,
            "seeds" => seeds = parse_u64_list(key, e)?,
            "source" => base.traffic.source = NodeId(parse_num(key, e)?),
            "destination" => {
                base.traffic.destination = NodeId(parse_num(key, e)?);
                destination_set = true;
            }
            "packet_size" => base.traffic.packet_size = parse_num(key, e)?,
            "rate" => base.traffic.rate = parse_num(key, e)?,
            "duration" => base.traffic.duration = parse_num(key, e)?,
            "start" => base.traffic.start = parse_num(key, e)?,
            "latency" => base.per_hop_latency = parse_num(key, e)?,
            "loss" => base.queue_loss_prob = parse_num(key, e)?,
            "k" => p.selection.k = parse_num(key, e)?,
            "window" => p.localizer.window = parse_num(key, e)?,
            "loss_threshold" => p.localizer.loss_threshold = parse_num(key, e)?,
            "min_outcomes" => p.localizer.min_outcomes = parse_num(key, e)?,
            "trust_initial" => p.trust.initial = parse_num(key, e)?,
            "trust_threshold" => {
                p.trust.threshold = parse_num(key, e)?;
                p.selection.trust_threshold = p.trust.threshold;
            }
            "anomaly_threshold" => p.trust.anomaly_threshold = parse_num(key, e)?,
            "penalty_factor" => p.penalty.factor = parse_num(key, e)?,
            "decay_period" => {
                p.penalty.decay_period = if e.value == "off" { None } else { Some(parse_num(key, e)?) };
            }
            "discovery_wait" => p.discovery_wait = parse_num(key, e)?,
            "rediscovery_interval" => p.rediscovery_interval = parse_num(key, e)?,
            "route_max_age" => p.route_max_age = parse_num(key, e)?,
            "nsp_silence_timeout" => p.nsp_silence_timeout = parse_num(key, e)?,
            "output" => output = Some(PathBuf::from(&e.value)),
            _ => unreachable!("every listed key is handled"),
        }
    }
    if !destination_set {
        base.traffic.destination = NodeId(base.node_count.saturating_sub(1) as u32);
    }

    if seeds.is_empty() {
        return Err(PlanError::OutOfRange { key: "seeds".into(), reason: "at least one seed".into() });
    }
    if sweep.is_empty() {
        return Err(PlanError::OutOfRange { key: "sweep".into(), reason: "at least one adversary count".into() });
    }
    for &c in &sweep {
        if c + 2 > base.node_count {
            return Err(PlanError::OutOfRange {
                key: "sweep".into(),
                reason: format!("{c} adversaries leave no honest source and destination among {} nodes", base.node_count),
            });
        }
    }
    let plan = ExperimentPlan { base, sweep, protocols, seeds, adversary_model, output };
    for &c in &plan.sweep {
        for &p in &plan.protocols {
            let cfg = plan.cell(p, c, plan.seeds[0]);
            cfg.validate().map_err(|err| PlanError::OutOfRange { key: err.field.to_string(), reason: err.reason })?;
        }
    }
    Ok(plan)
}

impl ExperimentPlan {
    /// Scenario for one (protocol, adversary count, seed) cell.
    pub fn cell(&self, protocol: Protocol, adversaries: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            adversary_count: adversaries,
            adversary_model: if adversaries == 0 { AdversaryModel::None } else { self.adversary_model },
            protocol,
            seed,
            ..self.base.clone()
        }
    }

    /// Every parameter with its resolved value, one `# key = value` per line.
    pub fn echo(&self) -> String {
        let b = &self.base;
        let p = &b.params;
        let list = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "# {k} = {v}");
        };
        put("nodes", b.node_count.to_string());
        put("width", b.width.to_string());
        put("height", b.height.to_string());
        put("range", b.reception_range.to_string());
        put("speed_min", b.mobility.speed_min.to_string());
        put("speed_max", b.mobility.speed_max.to_string());
        put("pause", b.mobility.pause.to_string());
        put("mobility_interval", b.mobility.update_interval.to_string());
        put("adversary_model", self.adversary_model.to_string());
        put("sweep", list(&mut self.sweep.iter().map(|c| c.to_string())));
        put("protocols", list(&mut self.protocols.iter().map(|p| p.to_string())));
        put("seeds", list(&mut self.seeds.iter().map(|s| s.to_string())));
        put("source", b.traffic.source.0.to_string());
        put("destination", b.traffic.destination.0.to_string());
        put("packet_size", b.traffic.packet_size.to_string());
        put("rate", b.traffic.rate.to_string());
        put("duration", b.traffic.duration.to_string());
        put("start", b.traffic.start.to_string());
        put("latency", b.per_hop_latency.to_string());
        put("loss", b.queue_loss_prob.to_string());
        put("k", p.selection.k.to_string());
        put("window", p.localizer.window.to_string());
        put("loss_threshold", p.localizer.loss_threshold.to_string());
        put("min_outcomes", p.localizer.min_outcomes.to_string());
        put("trust_initial", p.trust.initial.to_string());
        put("trust_threshold", p.trust.threshold.to_string());
        put("anomaly_threshold", p.trust.anomaly_threshold.to_string());
        put("penalty_factor", p.penalty.factor.to_string());
        put("decay_period", p.penalty.decay_period.map_or("off".to_string(), |d| d.to_string()));
        put("discovery_wait", p.discovery_wait.to_string());
        put("rediscovery_interval", p.rediscovery_interval.to_string());
        put("route_max_age", p.route_max_age.to_string());
        put("nsp_silence_timeout", p.nsp_silence_timeout.to_string());
        put("output", self.output.as_ref().map_or("-".to_string(), |o| o.display().to_string()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "nodes = 50\nprotocols = both\nsweep = 5,10,15,20,25\nseeds = 1..20\n";

    #[test]
    fn minimal_plan_fills_defaults() {
        let plan = parse_plan(MINIMAL).unwrap();
        assert_eq!(plan.protocols, vec![Protocol::ApsSmt, Protocol::Nsp]);
        assert_eq!(plan.sweep, vec![5, 10, 15, 20, 25]);
        assert_eq!(plan.seeds, (1..=20).collect::<Vec<_>>());
        assert_eq!(plan.base.reception_range, 150.0);
        let echo = plan.echo();
        for key in KEYS {
            assert!(echo.contains(&format!("# {key} = ")), "{key} not echoed");
        }
    }

    #[test]
    fn sweep_beyond_node_count() {
        let err = parse_plan("nodes = 50\nprotocols = both\nsweep = 60\nseeds = 1\n").unwrap_err();
        assert_eq!(err.key(), Some("sweep"));
        assert!(err.to_string().contains("sweep"));
    }

    #[test]
    fn duplicate_unknown_and_missing_keys() {
        let err = parse_plan("seeds = 1\nprotocols = NSP\nsweep = 0\nseeds = 2\n").unwrap_err();
        assert_eq!(err, PlanError::DuplicateKey { line: 4, key: "seeds".into(), first: 1 });
        let err = parse_plan("seeds = 1\nprotocols = NSP\nsweep = 0\nbogus = 2\n").unwrap_err();
        assert_eq!(err, PlanError::UnknownKey { line: 4, key: "bogus".into() });
        let err = parse_plan("protocols = NSP\nsweep = 0\n").unwrap_err();
        assert_eq!(err, PlanError::MissingKey { key: "seeds" });
        let err = parse_plan("seeds = 1\nprotocols = NSP\nsweep = 0\nloss = 1.5\n").unwrap_err();
        assert_eq!(err.key(), Some("loss"));
        let err = parse_plan("seeds = x\nprotocols = NSP\nsweep = 0\n").unwrap_err();
        assert!(matches!(err, PlanError::InvalidValue { line: 1, .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let plan = parse_plan("# header\n\nseeds = 3 # trailing\nprotocols = APS-SMT\nsweep = 0\n").unwrap();
        assert_eq!(plan.seeds, vec![3]);
        assert_eq!(plan.protocols, vec![Protocol::ApsSmt]);
    }
}
