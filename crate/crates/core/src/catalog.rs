//! Cellular domain layer: which VNFs exist, what they listen on, what they
//! wait for, when they count as ready, and how a UE gets a bearer.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{ClusterState, IpAllocator, Pod, PodId, PodPhase};
use crate::sim::{secs, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VnfKind {
    Cassandra,
    #[serde(rename = "HSS")]
    Hss,
    #[serde(rename = "MME")]
    Mme,
    #[serde(rename = "SPGWC")]
    Spgwc,
    #[serde(rename = "SPGWU")]
    Spgwu,
    /// Monolithic eNB.
    #[serde(rename = "ENB")]
    Enb,
    #[serde(rename = "RCC")]
    Rcc,
    #[serde(rename = "RRU")]
    Rru,
    #[serde(rename = "FlexRAN")]
    FlexRan,
    MediaServer,
    #[serde(rename = "UE")]
    Ue,
}

impl VnfKind {
    pub const ALL: [VnfKind; 11] = [
        VnfKind::Cassandra,
        VnfKind::Hss,
        VnfKind::Mme,
        VnfKind::Spgwc,
        VnfKind::Spgwu,
        VnfKind::Enb,
        VnfKind::Rcc,
        VnfKind::Rru,
        VnfKind::FlexRan,
        VnfKind::MediaServer,
        VnfKind::Ue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VnfKind::Cassandra => "Cassandra",
            VnfKind::Hss => "HSS",
            VnfKind::Mme => "MME",
            VnfKind::Spgwc => "SPGWC",
            VnfKind::Spgwu => "SPGWU",
            VnfKind::Enb => "ENB",
            VnfKind::Rcc => "RCC",
            VnfKind::Rru => "RRU",
            VnfKind::FlexRan => "FlexRAN",
            VnfKind::MediaServer => "MediaServer",
            VnfKind::Ue => "UE",
        }
    }

    pub fn is_ran(self) -> bool {
        matches!(self, VnfKind::Enb | VnfKind::Rcc | VnfKind::Rru)
    }
}

impl fmt::Display for VnfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VnfKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VnfKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown VNF kind {s:?}"))
    }
}

pub const PORT_CASSANDRA: u16 = 9042;
pub const PORT_HSS_S6A: u16 = 3868;
pub const PORT_MME_S6A: u16 = 3870;
pub const PORT_MME_S1: u16 = 36412;
pub const PORT_SPGWC_SX: u16 = 8805;
pub const PORT_SPGWU_GTPU: u16 = 2152;
pub const PORT_FLEXRAN_AGENT: u16 = 2210;
pub const PORT_FLEXRAN_API: u16 = 9999;
pub const PORT_RCC_FRONTHAUL: u16 = 50000;
pub const PORT_MEDIA_HTTP: u16 = 80;

pub const TABLE_INIT_LATENCY: SimTime = secs(5);
pub const HEARTBEAT_INTERVAL: SimTime = secs(10);
pub const ATTACH_LATENCY: SimTime = 100;
/// Consecutive misses after which a heartbeat session is unhealthy.
pub const HEARTBEAT_MISS_LIMIT: u32 = 3;
/// Consecutive exchanges needed before the user plane is first declared ready.
pub const HEARTBEAT_READY_EXCHANGES: u32 = 2;

pub fn listen_ports(kind: VnfKind) -> &'static [u16] {
    match kind {
        VnfKind::Cassandra => &[PORT_CASSANDRA],
        VnfKind::Hss => &[PORT_HSS_S6A],
        VnfKind::Mme => &[PORT_MME_S6A, 5870, 2123, PORT_MME_S1],
        VnfKind::Spgwc => &[PORT_SPGWC_SX],
        VnfKind::Spgwu => &[PORT_SPGWU_GTPU],
        VnfKind::Rcc => &[PORT_RCC_FRONTHAUL],
        VnfKind::FlexRan => &[PORT_FLEXRAN_AGENT, PORT_FLEXRAN_API],
        VnfKind::MediaServer => &[PORT_MEDIA_HTTP],
        VnfKind::Enb | VnfKind::Rru | VnfKind::Ue => &[],
    }
}

/// Ports a pod of `kind` exposes: the declared ones plus the catalog's.
pub fn pod_ports(kind: VnfKind, declared: &[u16]) -> Vec<u16> {
    let mut ports = declared.to_vec();
    for &p in listen_ports(kind) {
        if !ports.contains(&p) {
            ports.push(p);
        }
    }
    ports
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Dependency {
    pub kind: VnfKind,
    pub port: u16,
}

const fn dep(kind: VnfKind, port: u16) -> Dependency {
    Dependency { kind, port }
}

pub fn dependency_edges(kind: VnfKind, flexran_enabled: bool) -> Vec<Dependency> {
    let mut edges = match kind {
        VnfKind::Cassandra => vec![],
        VnfKind::Hss => vec![dep(VnfKind::Cassandra, PORT_CASSANDRA)],
        VnfKind::Mme => vec![dep(VnfKind::Hss, PORT_HSS_S6A)],
        VnfKind::Spgwc => vec![dep(VnfKind::Mme, PORT_MME_S6A)],
        VnfKind::Spgwu => vec![dep(VnfKind::Spgwc, PORT_SPGWC_SX)],
        VnfKind::Enb | VnfKind::Rcc => vec![dep(VnfKind::Mme, PORT_MME_S1)],
        VnfKind::Rru => vec![dep(VnfKind::Rcc, PORT_RCC_FRONTHAUL)],
        VnfKind::FlexRan | VnfKind::MediaServer | VnfKind::Ue => vec![],
    };
    if flexran_enabled && matches!(kind, VnfKind::Enb | VnfKind::Rcc) {
        edges.push(dep(VnfKind::FlexRan, PORT_FLEXRAN_AGENT));
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadinessRule {
    /// Ready once the schema tables exist, a fixed delay after start.
    TableInit,
    /// Ready once a serving database is there to populate.
    TablesPopulated,
    /// Ready once the S6a association to a serving HSS is up.
    S6aAssociation,
    /// Control plane: MME reachable and heartbeats healthy.
    ControlAssociation,
    /// User plane: enough consecutive heartbeat exchanges.
    Heartbeat,
    /// RAN: links to MME (and FlexRAN when enabled), or to the RCC for an RRU.
    RadioLinks,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub kind: VnfKind,
    pub listen_ports: Vec<u16>,
    pub depends_on: Vec<Dependency>,
    pub readiness_rule: ReadinessRule,
}

pub fn readiness_rule_of(kind: VnfKind) -> ReadinessRule {
    match kind {
        VnfKind::Cassandra => ReadinessRule::TableInit,
        VnfKind::Hss => ReadinessRule::TablesPopulated,
        VnfKind::Mme => ReadinessRule::S6aAssociation,
        VnfKind::Spgwc => ReadinessRule::ControlAssociation,
        VnfKind::Spgwu => ReadinessRule::Heartbeat,
        VnfKind::Enb | VnfKind::Rcc | VnfKind::Rru => ReadinessRule::RadioLinks,
        VnfKind::FlexRan | VnfKind::MediaServer | VnfKind::Ue => ReadinessRule::Trivial,
    }
}

pub fn entry(kind: VnfKind, flexran_enabled: bool) -> CatalogEntry {
    CatalogEntry {
        kind,
        listen_ports: listen_ports(kind).to_vec(),
        depends_on: dependency_edges(kind, flexran_enabled),
        readiness_rule: readiness_rule_of(kind),
    }
}

/// Kinds in dependency order, ties broken by declaration order. Computed
/// with the FlexRAN edges included so it is valid either way.
pub fn topological_order() -> Vec<VnfKind> {
    let mut done: BTreeSet<VnfKind> = BTreeSet::new();
    let mut order = Vec::with_capacity(VnfKind::ALL.len());
    while order.len() < VnfKind::ALL.len() {
        let next = VnfKind::ALL
            .into_iter()
            .find(|k| {
                !done.contains(k)
                    && dependency_edges(*k, true)
                        .iter()
                        .all(|d| done.contains(&d.kind))
            })
            .expect("catalog dependency graph is acyclic");
        done.insert(next);
        order.push(next);
    }
    order
}

/// Catalog as TSV: `kind<TAB>ports<TAB>dependencies`.
pub fn catalog_tsv() -> String {
    let mut out = String::from("kind\tports\tdependencies\n");
    for kind in VnfKind::ALL {
        let ports: Vec<String> = listen_ports(kind).iter().map(u16::to_string).collect();
        let base = dependency_edges(kind, false);
        let mut deps: Vec<String> = base
            .iter()
            .map(|d| format!("{}:{}", d.kind, d.port))
            .collect();
        for d in dependency_edges(kind, true) {
            if !base.contains(&d) {
                deps.push(format!(
                    "{}:{}?{}",
                    d.kind,
                    d.port,
                    crate::manifest::ENV_FLEXRAN_ENABLED
                ));
            }
        }
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            kind,
            if ports.is_empty() {
                "-".into()
            } else {
                ports.join(",")
            },
            if deps.is_empty() {
                "-".into()
            } else {
                deps.join(",")
            },
        ));
    }
    out
}

/// Evaluates `pod`'s readiness rule against the cluster at `now`.
/// Only meaningful for pods at ContainersReady or later.
pub fn readiness_rule(pod: &Pod, cluster: &ClusterState, now: SimTime) -> bool {
    if pod.phase < PodPhase::ContainersReady || pod.phase.is_terminal() {
        return false;
    }
    // A dependency counts once it has been Ready since before `now`.
    let serving = |k: VnfKind| {
        cluster
            .live_pods()
            .any(|p| p.vnf_kind == k && p.is_serving() && p.phase_entered_at < now)
    };
    match readiness_rule_of(pod.vnf_kind) {
        ReadinessRule::TableInit => pod
            .containers_ready_at
            .is_some_and(|t| now >= t + TABLE_INIT_LATENCY),
        ReadinessRule::TablesPopulated => serving(VnfKind::Cassandra),
        ReadinessRule::S6aAssociation => serving(VnfKind::Hss),
        ReadinessRule::ControlAssociation => {
            serving(VnfKind::Mme)
                && cluster
                    .heartbeats
                    .values()
                    .filter(|s| s.peer_a == pod.deployment)
                    .all(|s| s.status == SessionStatus::Healthy)
        }
        ReadinessRule::Heartbeat => cluster.heartbeats.get(&pod.deployment).is_some_and(|s| {
            s.status == SessionStatus::Healthy
                && (pod.phase == PodPhase::Ready || s.exchanged >= HEARTBEAT_READY_EXCHANGES)
        }),
        ReadinessRule::RadioLinks => match pod.vnf_kind {
            VnfKind::Rru => serving(VnfKind::Rcc),
            _ => serving(VnfKind::Mme) && (!pod.flexran_enabled || serving(VnfKind::FlexRan)),
        },
        ReadinessRule::Trivial => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Healthy,
    Unhealthy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerState {
    /// Live pod at ContainersReady or later.
    Up(PodId),
    Down,
}

/// SPGWC/SPGWU heartbeat association.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeartbeatSession {
    /// SPGWC deployment.
    pub peer_a: String,
    /// SPGWU deployment.
    pub peer_b: String,
    pub interval: SimTime,
    pub missed: u32,
    /// Consecutive successful exchanges with the current pair of pods.
    pub exchanged: u32,
    pub status: SessionStatus,
    last_pair: Option<(PodId, PodId)>,
}

impl HeartbeatSession {
    pub fn new(peer_a: impl Into<String>, peer_b: impl Into<String>) -> Self {
        Self {
            peer_a: peer_a.into(),
            peer_b: peer_b.into(),
            interval: HEARTBEAT_INTERVAL,
            missed: 0,
            exchanged: 0,
            status: SessionStatus::Healthy,
            last_pair: None,
        }
    }

    /// One heartbeat round. Returns true if the status flipped.
    pub fn tick(&mut self, a: PeerState, b: PeerState) -> bool {
        let before = self.status;
        match (a, b) {
            (PeerState::Up(pa), PeerState::Up(pb)) => {
                if self.last_pair != Some((pa, pb)) {
                    self.exchanged = 0;
                    self.last_pair = Some((pa, pb));
                }
                self.missed = 0;
                self.exchanged += 1;
                self.status = SessionStatus::Healthy;
            }
            _ => {
                self.missed += 1;
                self.exchanged = 0;
                if self.missed >= HEARTBEAT_MISS_LIMIT {
                    self.status = SessionStatus::Unhealthy;
                }
            }
        }
        before != self.status
    }
}

pub fn heartbeat_tick(
    mut session: HeartbeatSession,
    a: PeerState,
    b: PeerState,
) -> HeartbeatSession {
    session.tick(a, b);
    session
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TunnelSegment {
    pub gateway_node: String,
    pub ran_node: String,
}

/// User-plane tunnel for one UE, anchored at an SPGWU pod.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bearer {
    pub ue_name: String,
    pub ue_ip: Ipv4Addr,
    /// ENB or RRU deployment the UE camps on.
    pub serving: String,
    pub anchor_pod: PodId,
    /// The RAN pods on the user path (ENB, or RRU then RCC).
    pub ran_pods: Vec<PodId>,
    /// Node where the radio link terminates.
    pub radio_node: String,
    pub segments: Vec<TunnelSegment>,
    pub established_at: SimTime,
}

impl Bearer {
    pub fn gateway_node(&self) -> &str {
        &self.segments[0].gateway_node
    }

    /// User-plane pods still running. Control-plane loss does not matter.
    pub fn is_intact(&self, cluster: &ClusterState) -> bool {
        std::iter::once(self.anchor_pod)
            .chain(self.ran_pods.iter().copied())
            .all(|id| {
                cluster
                    .pods
                    .get(&id)
                    .is_some_and(|p| p.phase == PodPhase::Ready)
            })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttachError {
    #[error("attach rejected: {0} not ready")]
    Rejected(VnfKind),
    #[error("{0:?} is not a deployed ENB or RRU")]
    UnknownServing(String),
    #[error("UE address pool exhausted")]
    PoolExhausted,
}

/// Attaches `ue_name` via the RAN deployment `serving`. The bearer becomes
/// usable at `now + ATTACH_LATENCY`.
pub fn ue_attach(
    ue_name: &str,
    serving: &str,
    cluster: &ClusterState,
    ue_pool: &mut IpAllocator<String>,
    now: SimTime,
) -> Result<Bearer, AttachError> {
    let doc = cluster
        .desired
        .get(serving)
        .filter(|d| matches!(d.vnf_kind, VnfKind::Enb | VnfKind::Rru))
        .ok_or_else(|| AttachError::UnknownServing(serving.to_string()))?;
    let ready = |p: &&Pod| p.is_serving();
    // Core first: a RAN pod without its MME reports the MME as the cause.
    for k in [VnfKind::Mme, VnfKind::Spgwc] {
        cluster.serving_pod(k).ok_or(AttachError::Rejected(k))?;
    }
    let anchor = cluster
        .serving_pod(VnfKind::Spgwu)
        .ok_or(AttachError::Rejected(VnfKind::Spgwu))?;

    let serving_pod = cluster
        .live_pod(serving)
        .filter(ready)
        .ok_or(AttachError::Rejected(doc.vnf_kind))?;
    let mut ran_pods = vec![serving_pod.pod_id];
    let (radio_node, tunnel_end) = if doc.vnf_kind == VnfKind::Rru {
        let rcc = cluster
            .serving_pod(VnfKind::Rcc)
            .ok_or(AttachError::Rejected(VnfKind::Rcc))?;
        ran_pods.push(rcc.pod_id);
        (serving_pod.node.clone(), rcc.node.clone())
    } else {
        (serving_pod.node.clone(), serving_pod.node.clone())
    };
    let ue_ip = ue_pool
        .allocate(ue_name.to_string(), None)
        .map_err(|_| AttachError::PoolExhausted)?;
    Ok(Bearer {
        ue_name: ue_name.to_string(),
        ue_ip,
        serving: serving.to_string(),
        anchor_pod: anchor.pod_id,
        ran_pods,
        radio_node: radio_node.expect("ready pods are bound"),
        segments: vec![TunnelSegment {
            gateway_node: anchor.node.clone().expect("ready pods are bound"),
            ran_node: tunnel_end.expect("ready pods are bound"),
        }],
        established_at: now + ATTACH_LATENCY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependency_rows() {
        assert_eq!(
            dependency_edges(VnfKind::Hss, false),
            [dep(VnfKind::Cassandra, 9042)]
        );
        assert_eq!(
            dependency_edges(VnfKind::Mme, false),
            [dep(VnfKind::Hss, 3868)]
        );
        assert!(dependency_edges(VnfKind::Cassandra, false).is_empty());
        assert_eq!(
            dependency_edges(VnfKind::Enb, true),
            [dep(VnfKind::Mme, 36412), dep(VnfKind::FlexRan, 2210)]
        );
        assert_eq!(
            dependency_edges(VnfKind::Rcc, false),
            [dep(VnfKind::Mme, 36412)]
        );
        assert_eq!(
            dependency_edges(VnfKind::Rru, true),
            [dep(VnfKind::Rcc, 50000)]
        );
    }

    #[test]
    fn every_dependency_port_is_listened_on() {
        for kind in VnfKind::ALL {
            for d in dependency_edges(kind, true) {
                assert!(listen_ports(d.kind).contains(&d.port), "{kind} -> {d:?}");
            }
        }
    }

    #[test]
    fn topological_order_follows_core_narrative() {
        let order = topological_order();
        let pos = |k| order.iter().position(|&x| x == k).unwrap();
        let core = [
            VnfKind::Cassandra,
            VnfKind::Hss,
            VnfKind::Mme,
            VnfKind::Spgwc,
            VnfKind::Spgwu,
        ];
        assert!(core.windows(2).all(|w| pos(w[0]) < pos(w[1])));
        for kind in VnfKind::ALL {
            for d in dependency_edges(kind, true) {
                assert!(pos(d.kind) < pos(kind));
            }
        }
    }

    #[test]
    fn heartbeat_threshold_and_recovery() {
        let mut s = HeartbeatSession::new("spgwc", "spgwu");
        s.tick(PeerState::Up(1), PeerState::Up(2));
        assert_eq!((s.missed, s.status), (0, SessionStatus::Healthy));
        for i in 1..=3 {
            s.tick(PeerState::Up(1), PeerState::Down);
            assert_eq!(s.missed, i);
        }
        assert_eq!(s.status, SessionStatus::Unhealthy);
        let s = heartbeat_tick(s, PeerState::Up(1), PeerState::Up(3));
        assert_eq!(
            (s.missed, s.exchanged, s.status),
            (0, 1, SessionStatus::Healthy)
        );
    }

    #[test]
    fn kind_names_round_trip() {
        for k in VnfKind::ALL {
            assert_eq!(k.as_str().parse::<VnfKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn catalog_tsv_shape() {
        let tsv = catalog_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "kind\tports\tdependencies");
        assert_eq!(lines.len(), VnfKind::ALL.len() + 1);
        assert!(lines.contains(&"HSS\t3868\tCassandra:9042"));
        assert!(lines.contains(&"Cassandra\t9042\t-"));
    }
}
