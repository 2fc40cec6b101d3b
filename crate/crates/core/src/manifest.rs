//! Declarative documents: topology, deployment and scenario.
//!
//! All three are plain JSON with a closed key set; unknown keys are rejected.
//! Parsing checks structure and per-field domains. Anything that needs more
//! than one document (label matching, probe endpoints, fronthaul capacity) is
//! left to [`validate`], which reports every finding instead of stopping at
//! the first one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, VnfKind};
use crate::netmodel::{self, NetGraph, SplitOption};
use crate::slicing::DEFAULT_RB_POOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("syntax error at line {line} column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
}

impl ManifestError {
    fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        ManifestError::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    fn from_json(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Data => ManifestError::Schema {
                location: format!("line {} column {}", err.line(), err.column()),
                message: strip_position(&err),
            },
            Category::Syntax | Category::Eof | Category::Io => ManifestError::Syntax {
                line: err.line(),
                column: err.column(),
                message: strip_position(&err),
            },
        }
    }
}

fn strip_position(err: &serde_json::Error) -> String {
    let s = err.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Master,
    Worker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    pub role: NodeRole,
}

impl NodeSpec {
    /// True when every selector pair is present in the node's labels.
    pub fn matches(&self, selector: &BTreeMap<String, String>) -> bool {
        selector
            .iter()
            .all(|(k, v)| self.labels.get(k).is_some_and(|lv| lv == v))
    }
}

/// An emulated transport network between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeSpec {
    pub name: String,
    /// Mb/s.
    pub bandwidth: f64,
    /// One-way delay in ms.
    pub delay: f64,
    #[serde(default)]
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(rename = "endpoint-a")]
    pub endpoint_a: String,
    #[serde(rename = "endpoint-b")]
    pub endpoint_b: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpPools {
    pub pod_cidr: Ipv4Net,
    pub ue_cidr: Ipv4Net,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub bridges: Vec<BridgeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    pub ip_pools: IpPools,
}

impl TopologyDoc {
    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn bridge(&self, name: &str) -> Option<&BridgeSpec> {
        self.bridges.iter().find(|b| b.name == name)
    }

    /// Worker nodes whose labels satisfy `selector`, sorted by name.
    pub fn matching_workers(&self, selector: &BTreeMap<String, String>) -> Vec<&NodeSpec> {
        let mut out: Vec<&NodeSpec> = self
            .nodes
            .iter()
            .filter(|n| n.role == NodeRole::Worker && n.matches(selector))
            .collect();
        out.sort_by(|a, b| a.name.cmp(&b.name));
        out
    }

    /// Copy of this topology with scenario bridge overrides applied.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, BridgeOverride>) -> TopologyDoc {
        let mut t = self.clone();
        for b in &mut t.bridges {
            if let Some(o) = overrides.get(&b.name) {
                o.apply(b);
            }
        }
        t
    }
}

/// A pre-start probe: block until `target_ip:target_port` is open, checking
/// every `interval` seconds at most `retries` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitGate {
    pub target_ip: Ipv4Addr,
    pub target_port: u16,
    pub retries: u32,
    /// Seconds.
    pub interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDoc {
    pub name: String,
    pub vnf_kind: VnfKind,
    #[serde(default)]
    pub node_selector: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_ip: Option<Ipv4Addr>,
    #[serde(default)]
    pub ports: Vec<u16>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_map: Option<String>,
    #[serde(default)]
    pub init_gates: Vec<InitGate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
}

pub const ENV_FLEXRAN_ENABLED: &str = "FLEXRAN_ENABLED";
pub const ENV_SPLIT: &str = "SPLIT";

impl DeploymentDoc {
    pub fn flexran_enabled(&self) -> bool {
        self.env
            .get(ENV_FLEXRAN_ENABLED)
            .is_some_and(|v| v.eq_ignore_ascii_case("yes"))
    }

    /// RAN split for RCC/RRU deployments; monolithic otherwise.
    pub fn split_option(&self) -> Result<SplitOption, String> {
        match self.vnf_kind {
            VnfKind::Rcc | VnfKind::Rru => match self.env.get(ENV_SPLIT) {
                None => Ok(SplitOption::If4p5),
                Some(s) => s.parse(),
            },
            _ => Ok(SplitOption::Monolithic),
        }
    }
}

/// Partial replacement of a bridge's settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl BridgeOverride {
    pub fn apply(&self, bridge: &mut BridgeSpec) {
        if let Some(b) = self.bandwidth {
            bridge.bandwidth = b;
        }
        if let Some(d) = self.delay {
            bridge.delay = d;
        }
        if let Some(l) = self.loss {
            bridge.loss = l;
        }
    }
}

/// Either a path to a deployment document or the document itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeploymentRef {
    Path(String),
    Inline(DeploymentDoc),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeSpec {
    pub name: String,
    /// Deployment name of the serving ENB or RRU.
    pub serving: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub slice_id: u32,
    pub rb: u32,
    #[serde(default)]
    pub ue_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Download,
    Rtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub value: f64,
    /// Relative tolerance, e.g. 0.05 for 5%. Zero means exact equality.
    pub tolerance: f64,
}

impl Expectation {
    pub fn passes(&self, value: f64) -> bool {
        if self.tolerance == 0.0 {
            return value == self.value;
        }
        ((value - self.value) / self.value).abs() <= self.tolerance
    }
}

pub const DEFAULT_PAYLOAD_BYTES: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    /// The measuring side (a UE or a deployment).
    pub src: String,
    /// A UE or deployment. For downloads this is the server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_host: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

impl ProbeSpec {
    pub fn payload(&self) -> u64 {
        self.payload_bytes.unwrap_or(DEFAULT_PAYLOAD_BYTES)
    }

    /// Human label used as the result row subject.
    pub fn subject(&self) -> String {
        let far = self
            .dst
            .as_deref()
            .or(self.external_host.as_deref())
            .unwrap_or("?");
        format!("{}->{}", self.src, far)
    }
}

/// Kill the live pod of `deployment` at `at_ms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub at_ms: u64,
    pub deployment: String,
}

fn default_profile() -> String {
    "nominal".to_string()
}

fn default_duration() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    #[serde(default)]
    pub deployments: Vec<DeploymentRef>,
    #[serde(default)]
    pub bridge_overrides: BTreeMap<String, BridgeOverride>,
    #[serde(default)]
    pub ues: Vec<UeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<SliceSpec>>,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default = "default_profile")]
    pub calibration_profile: String,
    /// Deployment deadline in sim seconds.
    #[serde(default = "default_duration")]
    pub duration: u64,
}

impl ScenarioDoc {
    pub fn inline_deployments(&self) -> impl Iterator<Item = &DeploymentDoc> {
        self.deployments.iter().filter_map(|d| match d {
            DeploymentRef::Inline(doc) => Some(doc),
            DeploymentRef::Path(_) => None,
        })
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &[u8]) -> Result<T, ManifestError> {
    let s = std::str::from_utf8(text).map_err(|e| ManifestError::Syntax {
        line: 0,
        column: e.valid_up_to(),
        message: "document is not valid UTF-8".into(),
    })?;
    serde_json::from_str(s).map_err(ManifestError::from_json)
}

fn check_bridge_values(
    loc: &str,
    bandwidth: Option<f64>,
    delay: Option<f64>,
    loss: Option<f64>,
) -> Result<(), ManifestError> {
    if let Some(bw) = bandwidth {
        if !(bw.is_finite() && bw > 0.0) {
            return Err(ManifestError::schema(
                format!("{loc}.bandwidth"),
                format!("bandwidth must be > 0, got {bw}"),
            ));
        }
    }
    if let Some(d) = delay {
        if !(d.is_finite() && d >= 0.0) {
            return Err(ManifestError::schema(
                format!("{loc}.delay"),
                format!("delay must be >= 0, got {d}"),
            ));
        }
    }
    if let Some(p) = loss {
        if !(0.0..=1.0).contains(&p) {
            return Err(ManifestError::schema(
                format!("{loc}.loss"),
                format!("loss must lie in [0, 1], got {p}"),
            ));
        }
    }
    Ok(())
}

pub fn parse_topology(text: &[u8]) -> Result<TopologyDoc, ManifestError> {
    let doc: TopologyDoc = parse_json(text)?;
    let mut names = BTreeSet::new();
    for (i, n) in doc.nodes.iter().enumerate() {
        if n.name.is_empty() {
            return Err(ManifestError::schema(
                format!("nodes[{i}].name"),
                "empty name",
            ));
        }
        if !names.insert(n.name.as_str()) {
            return Err(ManifestError::schema(
                format!("nodes[{i}].name"),
                format!("duplicate name {:?}", n.name),
            ));
        }
    }
    for (i, b) in doc.bridges.iter().enumerate() {
        let loc = format!("bridges[{i}]");
        if !names.insert(b.name.as_str()) {
            return Err(ManifestError::schema(
                format!("{loc}.name"),
                format!("duplicate name {:?}", b.name),
            ));
        }
        check_bridge_values(&loc, Some(b.bandwidth), Some(b.delay), Some(b.loss))?;
    }
    for (i, l) in doc.links.iter().enumerate() {
        for (key, ep) in [("endpoint-a", &l.endpoint_a), ("endpoint-b", &l.endpoint_b)] {
            if !names.contains(ep.as_str()) {
                return Err(ManifestError::schema(
                    format!("links[{i}].{key}"),
                    format!("unknown endpoint {ep:?}"),
                ));
            }
        }
        if l.endpoint_a == l.endpoint_b {
            return Err(ManifestError::schema(format!("links[{i}]"), "self loop"));
        }
    }
    Ok(doc)
}

fn check_deployment(doc: &DeploymentDoc, loc: &str) -> Result<(), ManifestError> {
    if doc.name.is_empty() {
        return Err(ManifestError::schema(format!("{loc}name"), "empty name"));
    }
    let mut seen = BTreeSet::new();
    for (i, &p) in doc.ports.iter().enumerate() {
        if p == 0 {
            return Err(ManifestError::schema(
                format!("{loc}ports[{i}]"),
                "port must lie in [1, 65535]",
            ));
        }
        if !seen.insert(p) {
            return Err(ManifestError::schema(
                format!("{loc}ports[{i}]"),
                format!("duplicate port {p}"),
            ));
        }
    }
    for (i, g) in doc.init_gates.iter().enumerate() {
        if g.retries < 1 {
            return Err(ManifestError::schema(
                format!("{loc}init_gates[{i}].retries"),
                "retries must be >= 1",
            ));
        }
        if g.interval < 1 {
            return Err(ManifestError::schema(
                format!("{loc}init_gates[{i}].interval"),
                "interval must be >= 1 s",
            ));
        }
        if g.target_port == 0 {
            return Err(ManifestError::schema(
                format!("{loc}init_gates[{i}].target_port"),
                "port must lie in [1, 65535]",
            ));
        }
    }
    doc.split_option()
        .map_err(|e| ManifestError::schema(format!("{loc}env.{ENV_SPLIT}"), e))?;
    Ok(())
}

pub fn parse_deployment(text: &[u8]) -> Result<DeploymentDoc, ManifestError> {
    let doc: DeploymentDoc = parse_json(text)?;
    check_deployment(&doc, "")?;
    Ok(doc)
}

pub fn parse_scenario(text: &[u8]) -> Result<ScenarioDoc, ManifestError> {
    let doc: ScenarioDoc = parse_json(text)?;
    if doc.name.is_empty() {
        return Err(ManifestError::schema("name", "empty name"));
    }
    for (i, d) in doc.deployments.iter().enumerate() {
        if let DeploymentRef::Inline(dep) = d {
            check_deployment(dep, &format!("deployments[{i}]."))?;
        }
    }
    for (name, o) in &doc.bridge_overrides {
        check_bridge_values(
            &format!("bridge_overrides.{name}"),
            o.bandwidth,
            o.delay,
            o.loss,
        )?;
    }
    for (i, p) in doc.probes.iter().enumerate() {
        if p.payload_bytes == Some(0) {
            return Err(ManifestError::schema(
                format!("probes[{i}].payload_bytes"),
                "payload must be > 0",
            ));
        }
        if let Some(e) = &p.expect {
            if !(e.tolerance >= 0.0 && e.value.is_finite()) {
                return Err(ManifestError::schema(
                    format!("probes[{i}].expect"),
                    "expectation needs a finite value and tolerance >= 0",
                ));
            }
        }
    }
    Ok(doc)
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("documents always serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error,
    Warning,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Error => "ERROR",
            Level::Warning => "WARNING",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub code: &'static str,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|f| f.code == code)
    }

    fn error(
        &mut self,
        code: &'static str,
        location: impl Into<String>,
        message: impl Into<String>,
    ) {
        self.errors.push(Finding {
            code,
            location: location.into(),
            message: message.into(),
        });
    }

    fn warn(
        &mut self,
        code: &'static str,
        location: impl Into<String>,
        message: impl Into<String>,
    ) {
        self.warnings.push(Finding {
            code,
            location: location.into(),
            message: message.into(),
        });
    }

    fn finish(mut self) -> Self {
        self.errors.sort();
        self.errors.dedup();
        self.warnings.sort();
        self.warnings.dedup();
        self
    }

    /// One line per finding: `LEVEL CODE location: message`.
    pub fn lines(&self) -> Vec<String> {
        let errs = self.errors.iter().map(|f| (Level::Error, f));
        let warns = self.warnings.iter().map(|f| (Level::Warning, f));
        errs.chain(warns)
            .map(|(lvl, f)| format!("{lvl} {} {}: {}", f.code, f.location, f.message))
            .collect()
    }
}

/// Cross-checks a document set against the built-in calibration profiles.
pub fn validate(
    topology: &TopologyDoc,
    deployments: &[DeploymentDoc],
    scenario: Option<&ScenarioDoc>,
) -> ValidationReport {
    let profiles = crate::scenario::builtin_profile_names();
    validate_with_profiles(topology, deployments, scenario, &profiles)
}

/// Like [`validate`], with an explicit list of known profile names.
pub fn validate_with_profiles(
    topology: &TopologyDoc,
    deployments: &[DeploymentDoc],
    scenario: Option<&ScenarioDoc>,
    profiles: &[&str],
) -> ValidationReport {
    let mut r = ValidationReport::default();
    // Findings must not depend on list order, duplicates included.
    let mut sorted: Vec<(String, DeploymentDoc)> = deployments
        .iter()
        .map(|d| (to_json(d), d.clone()))
        .collect();
    sorted.sort_by(|a, b| (&a.1.name, &a.0).cmp(&(&b.1.name, &b.0)));
    let sorted: Vec<DeploymentDoc> = sorted.into_iter().map(|(_, d)| d).collect();
    let deployments = &sorted[..];
    let overrides = scenario
        .map(|s| s.bridge_overrides.clone())
        .unwrap_or_default();
    let topo = topology.with_overrides(&overrides);

    let mut by_name: BTreeMap<&str, &DeploymentDoc> = BTreeMap::new();
    for d in deployments {
        if by_name.insert(d.name.as_str(), d).is_some() {
            r.error(
                "DuplicateDeployment",
                format!("deployment:{}", d.name),
                "deployment name declared more than once",
            );
        }
    }

    let pool = topo.ip_pools.pod_cidr;
    let mut statics: BTreeMap<Ipv4Addr, Vec<&str>> = BTreeMap::new();
    let mut placement: BTreeMap<&str, &str> = BTreeMap::new();
    for d in deployments {
        let loc = format!("deployment:{}", d.name);
        if d.vnf_kind == VnfKind::Ue {
            r.error(
                "UeAsDeployment",
                &loc,
                "UEs are declared in the scenario, not deployed",
            );
        }
        match topo.matching_workers(&d.node_selector).first() {
            Some(node) => {
                placement.insert(d.name.as_str(), node.name.as_str());
            }
            None => r.error(
                "NoMatchingLabel",
                format!("{loc}.node_selector"),
                format!("no worker node carries labels {:?}", d.node_selector),
            ),
        }
        if let Some(ip) = d.static_ip {
            if !pool.contains(&ip) || ip == pool.network() || ip == pool.broadcast() {
                r.error(
                    "StaticIpOutOfRange",
                    format!("{loc}.static_ip"),
                    format!("{ip} is not a host address of {pool}"),
                );
            }
            statics.entry(ip).or_default().push(d.name.as_str());
        }
    }
    for (ip, owners) in &mut statics {
        owners.sort_unstable();
        if owners.len() > 1 {
            for o in owners.iter() {
                r.error(
                    "DuplicateStaticIp",
                    format!("deployment:{o}.static_ip"),
                    format!("{ip} requested by {}", owners.join(", ")),
                );
            }
        }
    }

    let kinds: BTreeSet<VnfKind> = deployments.iter().map(|d| d.vnf_kind).collect();
    for d in deployments {
        let loc = format!("deployment:{}", d.name);
        for dep in catalog::dependency_edges(d.vnf_kind, d.flexran_enabled()) {
            if !kinds.contains(&dep.kind) {
                r.warn(
                    "MissingDependency",
                    &loc,
                    format!(
                        "{} depends on {} which is not deployed",
                        d.vnf_kind, dep.kind
                    ),
                );
            }
        }
        for (i, g) in d.init_gates.iter().enumerate() {
            let target = deployments
                .iter()
                .find(|t| t.static_ip == Some(g.target_ip));
            match target {
                None => r.warn(
                    "GateTargetUnresolved",
                    format!("{loc}.init_gates[{i}]"),
                    format!("no deployment has static ip {}", g.target_ip),
                ),
                Some(t) => {
                    let ports = catalog::pod_ports(t.vnf_kind, &t.ports);
                    if !ports.contains(&g.target_port) {
                        r.warn(
                            "GateTargetUnresolved",
                            format!("{loc}.init_gates[{i}]"),
                            format!("{} does not listen on port {}", t.name, g.target_port),
                        );
                    }
                }
            }
        }
    }

    // Fronthaul between each RRU and its RCC.
    let graph = NetGraph::new(&topo);
    let rcc = deployments
        .iter()
        .filter(|d| d.vnf_kind == VnfKind::Rcc)
        .min_by(|a, b| a.name.cmp(&b.name));
    for rru in deployments.iter().filter(|d| d.vnf_kind == VnfKind::Rru) {
        let loc = format!("deployment:{}", rru.name);
        let Some(rcc) = rcc else {
            r.error("MissingRcc", &loc, "RRU deployed without an RCC");
            continue;
        };
        let Ok(split) = rru.split_option() else {
            continue;
        };
        let (Some(a), Some(b)) = (
            placement.get(rru.name.as_str()),
            placement.get(rcc.name.as_str()),
        ) else {
            continue;
        };
        let Some(crossed) = graph.bridges_between(a, b) else {
            r.error("Unreachable", &loc, format!("no route from {a} to {b}"));
            continue;
        };
        for bridge in crossed {
            let spec = topo.bridge(&bridge).expect("bridge from graph");
            if let Err(v) = netmodel::check_fronthaul(split, spec) {
                r.error(
                    "FronthaulTooSlow",
                    format!("{loc}.fronthaul:{bridge}"),
                    v.to_string(),
                );
            }
        }
    }

    if let Some(s) = scenario {
        validate_scenario(&mut r, &topo, topology, &by_name, s, profiles);
    }
    r.finish()
}

fn validate_scenario(
    r: &mut ValidationReport,
    topo: &TopologyDoc,
    original: &TopologyDoc,
    deployments: &BTreeMap<&str, &DeploymentDoc>,
    s: &ScenarioDoc,
    profiles: &[&str],
) {
    let sloc = format!("scenario:{}", s.name);
    if !profiles.contains(&s.calibration_profile.as_str()) {
        r.error(
            "UnknownProfile",
            format!("{sloc}.calibration_profile"),
            format!("no calibration profile named {:?}", s.calibration_profile),
        );
    }
    for name in s.bridge_overrides.keys() {
        if original.bridge(name).is_none() {
            r.error(
                "UnknownBridge",
                format!("{sloc}.bridge_overrides.{name}"),
                "override names a bridge the topology does not declare",
            );
        }
    }
    let _ = topo;

    let mut ues = BTreeSet::new();
    for ue in &s.ues {
        let loc = format!("{sloc}.ues.{}", ue.name);
        if deployments.contains_key(ue.name.as_str()) || !ues.insert(ue.name.as_str()) {
            r.error(
                "DuplicateName",
                &loc,
                "UE name collides with another UE or deployment",
            );
        }
        match deployments.get(ue.serving.as_str()) {
            Some(d) if matches!(d.vnf_kind, VnfKind::Enb | VnfKind::Rru) => {}
            _ => r.error(
                "UnknownServingRan",
                &loc,
                format!("{:?} is not an ENB or RRU deployment", ue.serving),
            ),
        }
    }

    if let Some(slices) = &s.slices {
        let mut owner: BTreeMap<&str, u32> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        let mut total = 0u64;
        for sl in slices {
            let loc = format!("{sloc}.slices.{}", sl.slice_id);
            if !ids.insert(sl.slice_id) {
                r.error("DuplicateSlice", &loc, "slice id declared more than once");
            }
            total += u64::from(sl.rb);
            for ue in &sl.ue_names {
                if !ues.contains(ue.as_str()) {
                    r.error("UnknownUe", &loc, format!("UE {ue:?} is not declared"));
                }
                if let Some(prev) = owner.insert(ue.as_str(), sl.slice_id) {
                    r.error(
                        "UeInMultipleSlices",
                        &loc,
                        format!("UE {ue:?} already belongs to slice {prev}"),
                    );
                }
            }
        }
        if total > u64::from(DEFAULT_RB_POOL) {
            r.error(
                "SliceQuotaExceedsPool",
                format!("{sloc}.slices"),
                format!("{total} RBs requested, pool holds {DEFAULT_RB_POOL}"),
            );
        }
    }

    let known = |name: &str| deployments.contains_key(name) || ues.contains(name);
    for (i, p) in s.probes.iter().enumerate() {
        let loc = format!("{sloc}.probes[{i}]");
        if !known(&p.src) {
            r.error(
                "UnknownProbeEndpoint",
                format!("{loc}.src"),
                format!("{:?} is neither a deployment nor a UE", p.src),
            );
        }
        match (&p.dst, &p.external_host, p.kind) {
            (Some(d), None, _) => {
                if !known(d) {
                    r.error(
                        "UnknownProbeEndpoint",
                        format!("{loc}.dst"),
                        format!("{d:?} is neither a deployment nor a UE"),
                    );
                }
            }
            (None, Some(_), ProbeKind::Rtt) => {}
            (None, Some(_), ProbeKind::Download) => r.error(
                "InvalidProbe",
                &loc,
                "downloads need a deployed server as dst",
            ),
            _ => r.error(
                "InvalidProbe",
                &loc,
                "exactly one of dst and external_host must be set",
            ),
        }
    }
    for (i, f) in s.faults.iter().enumerate() {
        if !deployments.contains_key(f.deployment.as_str()) {
            r.error(
                "UnknownDeployment",
                format!("{sloc}.faults[{i}]"),
                format!("{:?} is not deployed", f.deployment),
            );
        }
    }
}
