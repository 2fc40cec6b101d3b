//! Flow-level transport model over the emulated topology.

mod tcp;
mod waterfill;

pub use tcp::{RateParams, DEFAULT_DELAY_MULTIPLIER, DEFAULT_MATHIS_C, DEFAULT_MSS};
pub use waterfill::{max_min_fair, Demand};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Bearer;
use crate::manifest::{BridgeSpec, TopologyDoc};

/// Backhaul bridge name. External hosts are reached through it.
pub const TRANSPORT_BRIDGE: &str = "TN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitOption {
    #[serde(rename = "monolithic")]
    Monolithic,
    #[serde(rename = "IF5")]
    If5,
    #[serde(rename = "IF4p5")]
    If4p5,
}

impl SplitOption {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitOption::Monolithic => "monolithic",
            SplitOption::If5 => "IF5",
            SplitOption::If4p5 => "IF4p5",
        }
    }

    /// Fronthaul bandwidth that must be strictly exceeded, Mb/s.
    pub fn min_fronthaul(self) -> Option<f64> {
        match self {
            SplitOption::Monolithic => None,
            SplitOption::If5 => Some(500.0),
            SplitOption::If4p5 => Some(1000.0),
        }
    }
}

impl fmt::Display for SplitOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitOption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monolithic" => Ok(SplitOption::Monolithic),
            "IF5" => Ok(SplitOption::If5),
            "IF4p5" => Ok(SplitOption::If4p5),
            other => Err(format!(
                "unknown split option {other:?} (expected monolithic, IF5 or IF4p5)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FronthaulViolation {
    pub split: SplitOption,
    pub bridge: String,
    pub bandwidth: f64,
    pub required: f64,
}

impl fmt::Display for FronthaulViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "split {} needs more than {} Mb/s on {}, found {}",
            self.split, self.required, self.bridge, self.bandwidth
        )
    }
}

pub fn check_fronthaul(split: SplitOption, fh: &BridgeSpec) -> Result<(), FronthaulViolation> {
    match split.min_fronthaul() {
        Some(required) if fh.bandwidth <= required => Err(FronthaulViolation {
            split,
            bridge: fh.name.clone(),
            bandwidth: fh.bandwidth,
            required,
        }),
        _ => Ok(()),
    }
}

/// Nodes and bridges as one undirected graph. Neighbours iterate in name
/// order, so shortest paths are deterministic.
#[derive(Debug, Clone)]
pub struct NetGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
    bridges: BTreeMap<String, BridgeSpec>,
}

impl NetGraph {
    pub fn new(topology: &TopologyDoc) -> Self {
        let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for n in &topology.nodes {
            adjacency.entry(n.name.clone()).or_default();
        }
        for b in &topology.bridges {
            adjacency.entry(b.name.clone()).or_default();
        }
        for l in &topology.links {
            adjacency
                .entry(l.endpoint_a.clone())
                .or_default()
                .insert(l.endpoint_b.clone());
            adjacency
                .entry(l.endpoint_b.clone())
                .or_default()
                .insert(l.endpoint_a.clone());
        }
        let bridges = topology
            .bridges
            .iter()
            .map(|b| (b.name.clone(), b.clone()))
            .collect();
        Self { adjacency, bridges }
    }

    pub fn bridge(&self, name: &str) -> Option<&BridgeSpec> {
        self.bridges.get(name)
    }

    pub fn is_bridge(&self, vertex: &str) -> bool {
        self.bridges.contains_key(vertex)
    }

    /// Fewest-hop vertex sequence from `a` to `b`, both ends included.
    pub fn shortest_path(&self, a: &str, b: &str) -> Option<Vec<String>> {
        if !self.adjacency.contains_key(a) || !self.adjacency.contains_key(b) {
            return None;
        }
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([a]);
        let mut seen = BTreeSet::from([a]);
        while let Some(v) = queue.pop_front() {
            if v == b {
                let mut out = vec![b.to_string()];
                let mut cur = b;
                while let Some(&p) = prev.get(cur) {
                    out.push(p.to_string());
                    cur = p;
                }
                out.reverse();
                return Some(out);
            }
            for w in &self.adjacency[v] {
                if seen.insert(w.as_str()) {
                    prev.insert(w.as_str(), v);
                    queue.push_back(w.as_str());
                }
            }
        }
        None
    }

    /// Bridges on the shortest path between two vertices.
    pub fn bridges_between(&self, a: &str, b: &str) -> Option<Vec<String>> {
        let path = self.shortest_path(a, b)?;
        Some(path.into_iter().filter(|v| self.is_bridge(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Ue(String),
    /// A pod, named by its deployment.
    Pod(String),
    External(String),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Ue(n) | Endpoint::Pod(n) | Endpoint::External(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hop {
    Radio {
        ue: String,
        ran: String,
        node: String,
        uplink: bool,
    },
    /// One directed hop between adjacent vertices.
    Link {
        from: String,
        to: String,
    },
    Local {
        node: String,
    },
    Egress {
        from: String,
        host: String,
        outbound: bool,
    },
}

impl Hop {
    fn reversed(&self) -> Hop {
        match self {
            Hop::Radio {
                ue,
                ran,
                node,
                uplink,
            } => Hop::Radio {
                ue: ue.clone(),
                ran: ran.clone(),
                node: node.clone(),
                uplink: !uplink,
            },
            Hop::Link { from, to } => Hop::Link {
                from: to.clone(),
                to: from.clone(),
            },
            Hop::Local { node } => Hop::Local { node: node.clone() },
            Hop::Egress {
                from,
                host,
                outbound,
            } => Hop::Egress {
                from: from.clone(),
                host: host.clone(),
                outbound: !outbound,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub hops: Vec<Hop>,
    pub crosses: BTreeSet<String>,
}

impl Path {
    fn from_hops(hops: Vec<Hop>, graph: &NetGraph) -> Result<Self, PathError> {
        let mut seen = BTreeSet::new();
        let mut crosses = BTreeSet::new();
        for h in &hops {
            if let Hop::Link { from, to } = h {
                if !seen.insert((from.clone(), to.clone())) {
                    return Err(PathError::Unreachable(format!("path reuses {from}->{to}")));
                }
                for v in [from, to] {
                    if graph.is_bridge(v) {
                        crosses.insert(v.clone());
                    }
                }
            }
        }
        Ok(Path { hops, crosses })
    }

    fn reversed(&self) -> Path {
        Path {
            hops: self.hops.iter().rev().map(Hop::reversed).collect(),
            crosses: self.crosses.clone(),
        }
    }

    /// Round-trip time under `params` and the graph's bridge delays.
    pub fn rtt_ms(&self, graph: &NetGraph, params: &RateParams) -> f64 {
        params.rtt_ms(
            self.crosses
                .iter()
                .filter_map(|b| graph.bridge(b))
                .map(|b| b.delay),
        )
    }

    /// `1 - prod(1 - loss)` over crossed bridges.
    pub fn loss(&self, graph: &NetGraph) -> f64 {
        let keep: f64 = self
            .crosses
            .iter()
            .filter_map(|b| graph.bridge(b))
            .map(|b| 1.0 - b.loss)
            .product();
        1.0 - keep
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("UE {0} has no bearer")]
    NoBearer(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
}

fn link_hops(graph: &NetGraph, a: &str, b: &str) -> Result<Vec<Hop>, PathError> {
    let vs = graph
        .shortest_path(a, b)
        .ok_or_else(|| PathError::Unreachable(format!("no route from {a} to {b}")))?;
    Ok(vs
        .windows(2)
        .map(|w| Hop::Link {
            from: w[0].clone(),
            to: w[1].clone(),
        })
        .collect())
}

// UE radio link, then the tunnel to the gateway node.
fn uplink_hops(bearer: &Bearer, graph: &NetGraph) -> Result<(Vec<Hop>, String), PathError> {
    let mut hops = vec![Hop::Radio {
        ue: bearer.ue_name.clone(),
        ran: bearer.serving.clone(),
        node: bearer.radio_node.clone(),
        uplink: true,
    }];
    let mut at = bearer.radio_node.clone();
    for seg in bearer.segments.iter().rev() {
        hops.extend(link_hops(graph, &at, &seg.ran_node)?);
        hops.extend(link_hops(graph, &seg.ran_node, &seg.gateway_node)?);
        at = seg.gateway_node.clone();
    }
    Ok((hops, at))
}

fn egress_hops(graph: &NetGraph, from: &str, host: &str) -> Result<Vec<Hop>, PathError> {
    if graph.is_bridge(TRANSPORT_BRIDGE) {
        let mut hops = link_hops(graph, from, TRANSPORT_BRIDGE)?;
        hops.push(Hop::Egress {
            from: TRANSPORT_BRIDGE.to_string(),
            host: host.to_string(),
            outbound: true,
        });
        Ok(hops)
    } else {
        Ok(vec![Hop::Egress {
            from: from.to_string(),
            host: host.to_string(),
            outbound: true,
        }])
    }
}

/// Path from `src` to `dst`. UEs route through their bearer's gateway;
/// external hosts sit beyond the transport bridge.
pub fn compute_path(
    src: &Endpoint,
    dst: &Endpoint,
    graph: &NetGraph,
    bearers: &BTreeMap<String, Bearer>,
    placements: &BTreeMap<String, String>,
) -> Result<Path, PathError> {
    if let (Endpoint::External(_), _) = (src, dst) {
        if let Endpoint::External(d) = dst {
            return Err(PathError::Unreachable(format!(
                "{src} and {d} are both external"
            )));
        }
        return Ok(compute_path(dst, src, graph, bearers, placements)?.reversed());
    }

    // (hops from the endpoint to its attachment node, that node)
    let attach = |e: &Endpoint| -> Result<(Vec<Hop>, String), PathError> {
        match e {
            Endpoint::Ue(n) => {
                let b = bearers
                    .get(n)
                    .ok_or_else(|| PathError::NoBearer(n.clone()))?;
                uplink_hops(b, graph)
            }
            Endpoint::Pod(d) => placements
                .get(d)
                .map(|node| (Vec::new(), node.clone()))
                .ok_or_else(|| PathError::Unreachable(format!("{d} is not placed"))),
            Endpoint::External(_) => unreachable!("handled above"),
        }
    };

    let (mut hops, at) = attach(src)?;
    match dst {
        Endpoint::External(host) => hops.extend(egress_hops(graph, &at, host)?),
        other => {
            let (up, dst_node) = attach(other)?;
            hops.extend(link_hops(graph, &at, &dst_node)?);
            hops.extend(up.iter().rev().map(Hop::reversed));
        }
    }
    if hops.is_empty() {
        hops.push(Hop::Local { node: at });
    }
    Path::from_hops(hops, graph)
}

pub type FlowId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub flow_id: FlowId,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub path: Path,
    /// Mb/s; unbounded when unset.
    pub demand: Option<f64>,
    pub achieved_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Resource {
    Radio { ran: String, uplink: bool },
    Port { from: String, to: String },
}

/// Max-min fair rates for `flows`, written to `achieved_rate` and returned.
/// A flow with no constraint at all gets `f64::INFINITY`.
///
/// Unsliced UEs share one radio resource per serving RAN and direction of
/// capacity `access_cap`; UEs in `slice_caps` get their own cap instead.
pub fn allocate_rates(
    flows: &mut [Flow],
    graph: &NetGraph,
    params: &RateParams,
    slice_caps: &BTreeMap<String, f64>,
) -> Vec<f64> {
    let mut resources: BTreeMap<Resource, usize> = BTreeMap::new();
    let mut capacities: Vec<f64> = Vec::new();
    let mut index = |r: Resource, cap: f64| -> usize {
        *resources.entry(r).or_insert_with(|| {
            capacities.push(cap);
            capacities.len() - 1
        })
    };

    let mut demands = Vec::with_capacity(flows.len());
    for f in flows.iter() {
        let mut links = Vec::new();
        let mut cap = f.demand;
        let mut lower = |c: f64| cap = Some(cap.map_or(c, |x: f64| x.min(c)));
        for h in &f.path.hops {
            match h {
                Hop::Radio {
                    ue, ran, uplink, ..
                } => match slice_caps.get(ue) {
                    Some(&c) => lower(c),
                    None => {
                        lower(params.access_cap);
                        links.push(index(
                            Resource::Radio {
                                ran: ran.clone(),
                                uplink: *uplink,
                            },
                            params.access_cap,
                        ));
                    }
                },
                Hop::Link { from, to } => {
                    let bridge = graph.bridge(from).or_else(|| graph.bridge(to));
                    if let Some(b) = bridge {
                        links.push(index(
                            Resource::Port {
                                from: from.clone(),
                                to: to.clone(),
                            },
                            b.bandwidth,
                        ));
                    }
                }
                Hop::Local { .. } | Hop::Egress { .. } => {}
            }
        }
        let rtt = f.path.rtt_ms(graph, params);
        if let Some(c) = params.window_cap(rtt) {
            lower(c);
        }
        if let Some(c) = params.mathis_cap(rtt, f.path.loss(graph)) {
            lower(c);
        }
        demands.push(Demand::new(links, cap));
    }

    let rates: Vec<f64> = max_min_fair(&capacities, &demands)
        .into_iter()
        .map(|r| r.unwrap_or(f64::INFINITY))
        .collect();
    for (f, r) in flows.iter_mut().zip(&rates) {
        f.achieved_rate = *r;
    }
    rates
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("payload must be at least one byte")]
    InvalidSize,
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("flow from {0} stalled at zero rate")]
    Stalled(String),
}

/// Network state seen by flows: bridge settings, bearers, pod placement,
/// slice caps and the installed flows.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: NetGraph,
    pub params: RateParams,
    pub bearers: BTreeMap<String, Bearer>,
    /// Deployment name to node name.
    pub placements: BTreeMap<String, String>,
    /// UE name to slice rate cap, Mb/s.
    pub slice_caps: BTreeMap<String, f64>,
    flows: BTreeMap<FlowId, Flow>,
    next_flow: FlowId,
}

impl Network {
    pub fn new(topology: &TopologyDoc, params: RateParams) -> Self {
        Self {
            graph: NetGraph::new(topology),
            params,
            bearers: BTreeMap::new(),
            placements: BTreeMap::new(),
            slice_caps: BTreeMap::new(),
            flows: BTreeMap::new(),
            next_flow: 1,
        }
    }

    pub fn path(&self, src: &Endpoint, dst: &Endpoint) -> Result<Path, PathError> {
        compute_path(src, dst, &self.graph, &self.bearers, &self.placements)
    }

    pub fn add_flow(
        &mut self,
        src: Endpoint,
        dst: Endpoint,
        demand: Option<f64>,
    ) -> Result<FlowId, PathError> {
        let path = self.path(&src, &dst)?;
        let id = self.next_flow;
        self.next_flow += 1;
        self.flows.insert(
            id,
            Flow {
                flow_id: id,
                src,
                dst,
                path,
                demand,
                achieved_rate: 0.0,
            },
        );
        Ok(id)
    }

    pub fn remove_flow(&mut self, id: FlowId) -> Option<Flow> {
        self.flows.remove(&id)
    }

    pub fn flow(&self, id: FlowId) -> Option<&Flow> {
        self.flows.get(&id)
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.flows.values()
    }

    /// Recomputes every path against the current bearers and placements.
    /// Flows whose endpoints became unreachable are dropped and returned.
    pub fn reroute(&mut self) -> Vec<(FlowId, PathError)> {
        let mut dropped = Vec::new();
        let ids: Vec<FlowId> = self.flows.keys().copied().collect();
        for id in ids {
            let f = &self.flows[&id];
            match compute_path(&f.src, &f.dst, &self.graph, &self.bearers, &self.placements) {
                Ok(p) => self.flows.get_mut(&id).expect("present").path = p,
                Err(e) => {
                    self.flows.remove(&id);
                    dropped.push((id, e));
                }
            }
        }
        dropped
    }

    /// Allocates all installed flows; returns `(flow_id, rate)` in id order.
    pub fn allocate(&mut self) -> Vec<(FlowId, f64)> {
        let mut flows: Vec<Flow> = self.flows.values().cloned().collect();
        let rates = allocate_rates(&mut flows, &self.graph, &self.params, &self.slice_caps);
        for f in flows {
            self.flows.insert(f.flow_id, f);
        }
        self.flows.keys().copied().zip(rates).collect()
    }

    /// Steady-state download of `payload_bytes` from `server` to `ue`
    /// alongside the installed flows, in Mb/s. The installed flows keep
    /// their rates for the whole transfer.
    pub fn download_probe(
        &mut self,
        ue: &str,
        server: &str,
        payload_bytes: u64,
    ) -> Result<f64, ProbeError> {
        if payload_bytes == 0 {
            return Err(ProbeError::InvalidSize);
        }
        if !self.bearers.contains_key(ue) {
            return Err(PathError::NoBearer(ue.to_string()).into());
        }
        let id = self.add_flow(
            Endpoint::Pod(server.to_string()),
            Endpoint::Ue(ue.to_string()),
            None,
        )?;
        let rate = self
            .allocate()
            .into_iter()
            .find(|(f, _)| *f == id)
            .map(|(_, r)| r)
            .expect("flow was installed");
        self.remove_flow(id);
        if rate <= 0.0 {
            return Err(ProbeError::Stalled(server.to_string()));
        }
        // Constant rate: payload * 8 / transfer_time is the allocated rate.
        Ok(rate)
    }

    /// `flow_id\tsrc\tdst\tcrosses\trate_mbps`, crosses comma-separated or `-`.
    pub fn flow_table_tsv(&self) -> String {
        let mut out = String::from("flow_id\tsrc\tdst\tcrosses\trate_mbps\n");
        for f in self.flows.values() {
            let crosses = if f.path.crosses.is_empty() {
                "-".to_string()
            } else {
                f.path.crosses.iter().cloned().collect::<Vec<_>>().join(",")
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.2}\n",
                f.flow_id, f.src, f.dst, crosses, f.achieved_rate
            ));
        }
        out
    }
}
