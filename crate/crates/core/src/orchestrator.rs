//! A single-replica declarative orchestrator.
//!
//! [`ClusterState`] holds the desired deployments and the pods realizing
//! them. It never touches the event queue itself: every mutating call returns
//! the [`Wakeup`]s the caller must schedule, and [`ClusterState::step`]
//! consumes them when they fire. [`ClusterSim`] wires the two together for
//! runs that only involve the control plane.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use thiserror::Error;

use crate::catalog::{self, HeartbeatSession, PeerState, SessionStatus, VnfKind};
use crate::manifest::{DeploymentDoc, InitGate, NodeRole, NodeSpec, TopologyDoc};
use crate::sim::{secs, SimError, SimTime, Simulator};

pub type PodId = u64;

pub const CONTAINER_START_LATENCY: SimTime = secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PodPhase {
    Pending,
    Initialized,
    ContainersReady,
    Ready,
    Succeeded,
    Failed,
}

impl PodPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, PodPhase::Succeeded | PodPhase::Failed)
    }

    /// Edges of the pod lifecycle graph.
    pub fn can_transition_to(self, next: PodPhase) -> bool {
        use PodPhase::*;
        match (self, next) {
            (Pending, Initialized)
            | (Initialized, ContainersReady)
            | (ContainersReady, Ready)
            | (Ready, Succeeded) => true,
            (from, Failed) => !from.is_terminal(),
            _ => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PodPhase::Pending => "Pending",
            PodPhase::Initialized => "Initialized",
            PodPhase::ContainersReady => "ContainersReady",
            PodPhase::Ready => "Ready",
            PodPhase::Succeeded => "Succeeded",
            PodPhase::Failed => "Failed",
        }
    }
}

impl fmt::Display for PodPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pod {
    pub pod_id: PodId,
    pub deployment: String,
    pub vnf_kind: VnfKind,
    pub phase: PodPhase,
    pub node: Option<String>,
    pub ip: Option<Ipv4Addr>,
    pub ports: Vec<u16>,
    pub init_gates: Vec<InitGate>,
    pub gate_attempts: Vec<u32>,
    /// Index of the gate being probed; gates run one after another.
    pub current_gate: usize,
    pub restart_count: u32,
    pub created_at: SimTime,
    pub phase_entered_at: SimTime,
    pub containers_ready_at: Option<SimTime>,
    /// Readiness condition. Only meaningful in phase Ready; a Ready pod whose
    /// rule stops holding keeps its phase but stops serving.
    pub serving: bool,
    pub condition: Option<String>,
    pub flexran_enabled: bool,
}

impl Pod {
    pub fn is_live(&self) -> bool {
        !self.phase.is_terminal()
    }

    pub fn is_serving(&self) -> bool {
        self.phase == PodPhase::Ready && self.serving
    }

    /// Up for heartbeat purposes: containers running.
    pub fn is_up(&self) -> bool {
        matches!(self.phase, PodPhase::ContainersReady | PodPhase::Ready)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrchEvent {
    Reconcile,
    GateRetry { pod: PodId, gate: usize },
    ContainerStart { pod: PodId },
    ReadinessCheck,
    HeartbeatTick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wakeup {
    pub at: SimTime,
    pub event: OrchEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogWhat {
    Created,
    Transition {
        from: PodPhase,
        to: PodPhase,
        reason: Option<String>,
    },
    Action(String),
}

impl fmt::Display for LogWhat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogWhat::Created => f.write_str("Pending"),
            LogWhat::Transition { from, to, reason } => {
                write!(f, "{from}->{to}")?;
                if let Some(r) = reason {
                    write!(f, "({r})")?;
                }
                Ok(())
            }
            LogWhat::Action(a) => f.write_str(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub time: SimTime,
    pub pod: Option<PodId>,
    pub deployment: String,
    pub what: LogWhat,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IpError {
    #[error("static address {0} already in use")]
    DuplicateStaticIp(Ipv4Addr),
    #[error("address pool exhausted")]
    PoolExhausted,
    #[error("static address {0} outside the pool")]
    OutOfRange(Ipv4Addr),
}

/// Host addresses of a CIDR, handed out lowest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpAllocator<O = PodId> {
    pool: Ipv4Net,
    allocated: BTreeMap<Ipv4Addr, O>,
    reserved: BTreeSet<Ipv4Addr>,
}

impl<O: Clone + PartialEq> IpAllocator<O> {
    pub fn new(pool: Ipv4Net) -> Self {
        Self {
            pool,
            allocated: BTreeMap::new(),
            reserved: BTreeSet::new(),
        }
    }

    pub fn pool(&self) -> Ipv4Net {
        self.pool
    }

    /// Addresses that dynamic requests skip (static addresses of other owners).
    pub fn set_reserved(&mut self, reserved: BTreeSet<Ipv4Addr>) {
        self.reserved = reserved;
    }

    fn is_host(&self, ip: Ipv4Addr) -> bool {
        self.pool.contains(&ip)
            && (self.pool.prefix_len() >= 31
                || (ip != self.pool.network() && ip != self.pool.broadcast()))
    }

    pub fn owner(&self, ip: Ipv4Addr) -> Option<&O> {
        self.allocated.get(&ip)
    }

    pub fn allocate(&mut self, owner: O, static_ip: Option<Ipv4Addr>) -> Result<Ipv4Addr, IpError> {
        let ip = match static_ip {
            Some(ip) => {
                if !self.is_host(ip) {
                    return Err(IpError::OutOfRange(ip));
                }
                if self.allocated.contains_key(&ip) {
                    return Err(IpError::DuplicateStaticIp(ip));
                }
                ip
            }
            None => self
                .pool
                .hosts()
                .find(|h| !self.allocated.contains_key(h) && !self.reserved.contains(h))
                .ok_or(IpError::PoolExhausted)?,
        };
        self.allocated.insert(ip, owner);
        Ok(ip)
    }

    pub fn release(&mut self, ip: Ipv4Addr) -> bool {
        self.allocated.remove(&ip).is_some()
    }

    pub fn release_owner(&mut self, owner: &O) {
        self.allocated.retain(|_, o| o != owner);
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrchError {
    #[error("no live pod with id {0}")]
    UnknownPod(PodId),
    #[error("no worker node matches selector {0:?}")]
    NoMatchingNode(BTreeMap<String, String>),
    #[error(transparent)]
    Ip(#[from] IpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeResult {
    Open,
    Closed,
}

/// Picks the lexicographically smallest worker whose labels cover `selector`.
pub fn schedule_pod<'a>(
    selector: &BTreeMap<String, String>,
    nodes: &'a [NodeSpec],
) -> Result<&'a str, OrchError> {
    nodes
        .iter()
        .filter(|n| n.role == NodeRole::Worker && n.matches(selector))
        .map(|n| n.name.as_str())
        .min()
        .ok_or_else(|| OrchError::NoMatchingNode(selector.clone()))
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pub desired: BTreeMap<String, DeploymentDoc>,
    pub pods: BTreeMap<PodId, Pod>,
    pub nodes: Vec<NodeSpec>,
    pub ip_allocator: IpAllocator,
    pub event_log: Vec<LogEntry>,
    /// Heartbeat sessions keyed by SPGWU deployment.
    pub heartbeats: BTreeMap<String, HeartbeatSession>,
    next_pod_id: PodId,
    restarts: BTreeMap<String, u32>,
}

impl ClusterState {
    pub fn new(topology: &TopologyDoc) -> Self {
        Self {
            desired: BTreeMap::new(),
            pods: BTreeMap::new(),
            nodes: topology.nodes.clone(),
            ip_allocator: IpAllocator::new(topology.ip_pools.pod_cidr),
            event_log: Vec::new(),
            heartbeats: BTreeMap::new(),
            next_pod_id: 1,
            restarts: BTreeMap::new(),
        }
    }

    /// Initial timers: the periodic heartbeat.
    pub fn start(&self, now: SimTime) -> Vec<Wakeup> {
        vec![Wakeup {
            at: now + catalog::HEARTBEAT_INTERVAL,
            event: OrchEvent::HeartbeatTick,
        }]
    }

    pub fn live_pod(&self, deployment: &str) -> Option<&Pod> {
        self.pods
            .values()
            .find(|p| p.deployment == deployment && p.is_live())
    }

    pub fn live_pods(&self) -> impl Iterator<Item = &Pod> {
        self.pods.values().filter(|p| p.is_live())
    }

    /// Lowest-id serving pod of `kind`.
    pub fn serving_pod(&self, kind: VnfKind) -> Option<&Pod> {
        self.pods
            .values()
            .find(|p| p.vnf_kind == kind && p.is_serving())
    }

    /// True when every desired deployment has a serving pod.
    pub fn all_serving(&self) -> bool {
        self.desired
            .keys()
            .all(|d| self.live_pod(d).is_some_and(Pod::is_serving))
    }

    pub fn probe(&self, ip: Ipv4Addr, port: u16) -> ProbeResult {
        let open = self
            .live_pods()
            .any(|p| p.ip == Some(ip) && p.ports.contains(&port) && p.phase == PodPhase::Ready);
        if open {
            ProbeResult::Open
        } else {
            ProbeResult::Closed
        }
    }

    fn log(&mut self, time: SimTime, pod: Option<PodId>, deployment: &str, what: LogWhat) {
        if let Some(last) = self.event_log.last() {
            debug_assert!(last.time <= time, "event log went backwards");
        }
        self.event_log.push(LogEntry {
            time,
            pod,
            deployment: deployment.to_string(),
            what,
        });
    }

    fn action(&mut self, time: SimTime, pod: PodId, what: impl Into<String>) {
        let dep = self.pods[&pod].deployment.clone();
        self.log(time, Some(pod), &dep, LogWhat::Action(what.into()));
    }

    fn transition(&mut self, pod_id: PodId, to: PodPhase, now: SimTime, reason: Option<String>) {
        let pod = self.pods.get_mut(&pod_id).expect("known pod");
        let from = pod.phase;
        assert!(
            from.can_transition_to(to),
            "illegal transition {from} -> {to}"
        );
        pod.phase = to;
        pod.phase_entered_at = now;
        match to {
            PodPhase::ContainersReady => pod.containers_ready_at = Some(now),
            PodPhase::Ready => pod.serving = true,
            _ => {}
        }
        if to.is_terminal() {
            pod.serving = false;
            if let Some(ip) = pod.ip {
                self.ip_allocator.release(ip);
            }
        }
        let dep = pod.deployment.clone();
        self.log(
            now,
            Some(pod_id),
            &dep,
            LogWhat::Transition { from, to, reason },
        );
    }

    fn update_reservations(&mut self) {
        let reserved = self.desired.values().filter_map(|d| d.static_ip).collect();
        self.ip_allocator.set_reserved(reserved);
    }

    /// Records `doc` as desired. Creates a pod if none is live; replaces the
    /// live pod if the document changed.
    pub fn apply(&mut self, doc: DeploymentDoc, now: SimTime) -> Vec<Wakeup> {
        let mut wake = Vec::new();
        match self.desired.get(&doc.name) {
            Some(existing) if *existing == doc => return wake,
            Some(_) => {
                if let Some(old) = self.live_pod(&doc.name).map(|p| p.pod_id) {
                    self.transition(old, PodPhase::Failed, now, Some("replaced".into()));
                }
                self.restarts.remove(&doc.name);
            }
            None => {}
        }
        self.desired.insert(doc.name.clone(), doc);
        self.update_reservations();
        wake.extend(self.reconcile(now));
        wake.extend(self.refresh_readiness(now));
        wake
    }

    /// Drops a deployment from the desired state, terminating its pod.
    pub fn remove(&mut self, name: &str, now: SimTime) -> Vec<Wakeup> {
        if self.desired.remove(name).is_none() {
            return Vec::new();
        }
        self.update_reservations();
        if let Some(pod) = self.live_pod(name).map(|p| (p.pod_id, p.phase)) {
            let to = if pod.1 == PodPhase::Ready {
                PodPhase::Succeeded
            } else {
                PodPhase::Failed
            };
            self.transition(pod.0, to, now, Some("removed".into()));
        }
        self.heartbeats.remove(name);
        self.refresh_readiness(now)
    }

    /// Creates pods for desired deployments without a live one and binds
    /// every unbound Pending pod.
    fn reconcile(&mut self, now: SimTime) -> Vec<Wakeup> {
        let missing: Vec<String> = self
            .desired
            .keys()
            .filter(|d| self.live_pod(d).is_none())
            .cloned()
            .collect();
        for name in missing {
            self.create_pod(&name, now);
        }
        let unbound: Vec<PodId> = self
            .pods
            .values()
            .filter(|p| p.phase == PodPhase::Pending && p.node.is_none())
            .map(|p| p.pod_id)
            .collect();
        let mut wake = Vec::new();
        for id in unbound {
            wake.extend(self.bind(id, now));
        }
        wake
    }

    fn create_pod(&mut self, deployment: &str, now: SimTime) -> PodId {
        let doc = &self.desired[deployment];
        let id = self.next_pod_id;
        self.next_pod_id += 1;
        let restart_count = *self.restarts.get(deployment).unwrap_or(&0);
        let pod = Pod {
            pod_id: id,
            deployment: deployment.to_string(),
            vnf_kind: doc.vnf_kind,
            phase: PodPhase::Pending,
            node: None,
            ip: None,
            ports: catalog::pod_ports(doc.vnf_kind, &doc.ports),
            init_gates: doc.init_gates.clone(),
            gate_attempts: vec![0; doc.init_gates.len()],
            current_gate: 0,
            restart_count,
            created_at: now,
            phase_entered_at: now,
            containers_ready_at: None,
            serving: false,
            condition: None,
            flexran_enabled: doc.flexran_enabled(),
        };
        self.pods.insert(id, pod);
        self.log(now, Some(id), deployment, LogWhat::Created);
        id
    }

    /// Node binding and address assignment; starts the init gates.
    fn bind(&mut self, pod_id: PodId, now: SimTime) -> Vec<Wakeup> {
        let deployment = self.pods[&pod_id].deployment.clone();
        let doc = self.desired[&deployment].clone();
        let node = match schedule_pod(&doc.node_selector, &self.nodes) {
            Ok(n) => n.to_string(),
            Err(e) => {
                let pod = self.pods.get_mut(&pod_id).expect("known pod");
                if pod.condition.as_deref() != Some("NoMatchingNode") {
                    pod.condition = Some("NoMatchingNode".into());
                    self.action(now, pod_id, format!("condition:NoMatchingNode {e}"));
                }
                return Vec::new();
            }
        };
        let ip = match self.ip_allocator.allocate(pod_id, doc.static_ip) {
            Ok(ip) => ip,
            Err(e) => {
                let pod = self.pods.get_mut(&pod_id).expect("known pod");
                pod.condition = Some(format!("{e}"));
                self.action(now, pod_id, format!("condition:{e}"));
                return Vec::new();
            }
        };
        let pod = self.pods.get_mut(&pod_id).expect("known pod");
        pod.node = Some(node.clone());
        pod.ip = Some(ip);
        pod.condition = None;
        self.action(now, pod_id, format!("bound:{node}"));
        self.action(now, pod_id, format!("ip:{ip}"));
        self.start_gate(pod_id, 0, now)
    }

    fn start_gate(&mut self, pod_id: PodId, gate: usize, now: SimTime) -> Vec<Wakeup> {
        let pod = &self.pods[&pod_id];
        match pod.init_gates.get(gate) {
            Some(g) => vec![Wakeup {
                at: now + secs(g.interval),
                event: OrchEvent::GateRetry { pod: pod_id, gate },
            }],
            None => {
                self.transition(pod_id, PodPhase::Initialized, now, None);
                vec![Wakeup {
                    at: now + CONTAINER_START_LATENCY,
                    event: OrchEvent::ContainerStart { pod: pod_id },
                }]
            }
        }
    }

    fn gate_retry(&mut self, pod_id: PodId, gate: usize, now: SimTime) -> Vec<Wakeup> {
        let Some(pod) = self.pods.get(&pod_id) else {
            return Vec::new();
        };
        if pod.phase != PodPhase::Pending || pod.current_gate != gate {
            return Vec::new();
        }
        let g = pod.init_gates[gate];
        let target = format!("{}:{}", g.target_ip, g.target_port);
        if self.probe(g.target_ip, g.target_port) == ProbeResult::Open {
            self.action(now, pod_id, format!("gate-pass:{target}"));
            self.pods.get_mut(&pod_id).expect("known pod").current_gate += 1;
            return self.start_gate(pod_id, gate + 1, now);
        }
        let pod = self.pods.get_mut(&pod_id).expect("known pod");
        pod.gate_attempts[gate] += 1;
        let attempts = pod.gate_attempts[gate];
        self.action(now, pod_id, format!("gate-fail:{target}#{attempts}"));
        if attempts >= g.retries {
            self.fail(pod_id, now, "InitGateExhausted")
        } else {
            vec![Wakeup {
                at: now + secs(g.interval),
                event: OrchEvent::GateRetry { pod: pod_id, gate },
            }]
        }
    }

    fn fail(&mut self, pod_id: PodId, now: SimTime, reason: &str) -> Vec<Wakeup> {
        let pod = &self.pods[&pod_id];
        let next = pod.restart_count + 1;
        let dep = pod.deployment.clone();
        self.transition(pod_id, PodPhase::Failed, now, Some(reason.into()));
        if self.desired.contains_key(&dep) {
            self.restarts.insert(dep, next);
        }
        vec![Wakeup {
            at: now,
            event: OrchEvent::Reconcile,
        }]
    }

    /// Fault injection: the pod fails at `now` and is replaced on the next
    /// reconcile.
    pub fn kill_pod(&mut self, pod_id: PodId, now: SimTime) -> Result<Vec<Wakeup>, OrchError> {
        match self.pods.get(&pod_id) {
            Some(p) if p.is_live() => {}
            _ => return Err(OrchError::UnknownPod(pod_id)),
        }
        let mut wake = self.fail(pod_id, now, "killed");
        wake.extend(self.refresh_readiness(now));
        Ok(wake)
    }

    fn heartbeat_tick(&mut self, now: SimTime) -> Vec<Wakeup> {
        let Some(spgwc) = self
            .desired
            .values()
            .find(|d| d.vnf_kind == VnfKind::Spgwc)
            .map(|d| d.name.clone())
        else {
            return self.next_tick(now);
        };
        let user_planes: Vec<String> = self
            .desired
            .values()
            .filter(|d| d.vnf_kind == VnfKind::Spgwu)
            .map(|d| d.name.clone())
            .collect();
        let peer = |s: &Self, dep: &str| match s.live_pod(dep).filter(|p| p.is_up()) {
            Some(p) => PeerState::Up(p.pod_id),
            None => PeerState::Down,
        };
        for spgwu in user_planes {
            let a = peer(self, &spgwc);
            let b = peer(self, &spgwu);
            let both_up = matches!((a, b), (PeerState::Up(_), PeerState::Up(_)));
            if !self.heartbeats.contains_key(&spgwu) {
                if !both_up {
                    continue;
                }
                self.heartbeats
                    .insert(spgwu.clone(), HeartbeatSession::new(&spgwc, &spgwu));
            }
            let session = self.heartbeats.get_mut(&spgwu).expect("just inserted");
            let flipped = session.tick(a, b);
            let status = session.status;
            if let PeerState::Up(id) = b {
                if both_up {
                    self.action(now, id, "HEARTBEAT");
                }
            }
            if flipped {
                let what = match status {
                    SessionStatus::Healthy => "heartbeat-healthy",
                    SessionStatus::Unhealthy => "heartbeat-unhealthy",
                };
                self.log(now, None, &spgwu, LogWhat::Action(what.into()));
            }
        }
        let mut wake = self.next_tick(now);
        wake.extend(self.refresh_readiness(now));
        wake
    }

    fn next_tick(&self, now: SimTime) -> Vec<Wakeup> {
        vec![Wakeup {
            at: now + catalog::HEARTBEAT_INTERVAL,
            event: OrchEvent::HeartbeatTick,
        }]
    }

    /// Re-evaluates readiness rules in dependency order until nothing changes.
    /// Dependents of a pod that just turned Ready are re-checked 1 ms later.
    pub fn refresh_readiness(&mut self, now: SimTime) -> Vec<Wakeup> {
        let order = catalog::topological_order();
        let mut became_ready = false;
        for _ in 0..=self.pods.len() {
            let mut changed = false;
            for &kind in &order {
                let ids: Vec<PodId> = self
                    .pods
                    .values()
                    .filter(|p| {
                        p.vnf_kind == kind
                            && matches!(p.phase, PodPhase::ContainersReady | PodPhase::Ready)
                    })
                    .map(|p| p.pod_id)
                    .collect();
                for id in ids {
                    let before = self.pods[&id].phase;
                    changed |= self.evaluate(id, now);
                    became_ready |= before != self.pods[&id].phase;
                }
            }
            if !changed {
                break;
            }
        }
        if became_ready {
            vec![Wakeup {
                at: now + 1,
                event: OrchEvent::ReadinessCheck,
            }]
        } else {
            Vec::new()
        }
    }

    fn evaluate(&mut self, pod_id: PodId, now: SimTime) -> bool {
        let pod = &self.pods[&pod_id];
        let holds = catalog::readiness_rule(pod, self, now);
        let (phase, serving, kind) = (pod.phase, pod.serving, pod.vnf_kind);
        match (phase, serving, holds) {
            (PodPhase::ContainersReady, _, true) => {
                self.transition(pod_id, PodPhase::Ready, now, None);
            }
            (PodPhase::Ready, true, false) => {
                self.pods.get_mut(&pod_id).expect("known pod").serving = false;
                self.action(now, pod_id, "NotReady");
                return true;
            }
            (PodPhase::Ready, false, true) => {
                self.pods.get_mut(&pod_id).expect("known pod").serving = true;
                self.action(now, pod_id, "Serving");
            }
            _ => return false,
        }
        if kind == VnfKind::Mme {
            if let Some(hss) = self.serving_pod(VnfKind::Hss).map(|p| p.pod_id) {
                self.action(now, hss, "STATE_OPEN");
            }
        }
        true
    }

    /// Handles one fired orchestrator event.
    pub fn step(&mut self, now: SimTime, event: &OrchEvent) -> Vec<Wakeup> {
        let mut wake = match *event {
            OrchEvent::Reconcile => self.reconcile(now),
            OrchEvent::GateRetry { pod, gate } => self.gate_retry(pod, gate, now),
            OrchEvent::ContainerStart { pod } => self.container_start(pod, now),
            OrchEvent::ReadinessCheck => Vec::new(),
            OrchEvent::HeartbeatTick => return self.heartbeat_tick(now),
        };
        wake.extend(self.refresh_readiness(now));
        wake
    }

    fn container_start(&mut self, pod_id: PodId, now: SimTime) -> Vec<Wakeup> {
        match self.pods.get(&pod_id) {
            Some(p) if p.phase == PodPhase::Initialized => {}
            _ => return Vec::new(),
        }
        self.transition(pod_id, PodPhase::ContainersReady, now, None);
        if catalog::readiness_rule_of(self.pods[&pod_id].vnf_kind)
            == catalog::ReadinessRule::TableInit
        {
            vec![Wakeup {
                at: now + catalog::TABLE_INIT_LATENCY,
                event: OrchEvent::ReadinessCheck,
            }]
        } else {
            Vec::new()
        }
    }

    /// `time_ms<TAB>pod_id<TAB>deployment<TAB>transition`, one line per entry.
    pub fn event_log_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.event_log {
            let pod = e.pod.map_or_else(|| "-".to_string(), |p| p.to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.time, pod, e.deployment, e.what
            ));
        }
        out
    }
}

/// Control-plane-only driver: a cluster on its own event queue.
#[derive(Debug, Clone)]
pub struct ClusterSim {
    pub sim: Simulator<OrchEvent>,
    pub cluster: ClusterState,
}

impl ClusterSim {
    pub fn new(topology: &TopologyDoc) -> Self {
        let cluster = ClusterState::new(topology);
        let mut sim = Simulator::new();
        for w in cluster.start(0) {
            sim.schedule(w.at, w.event).expect("start is in the future");
        }
        Self { sim, cluster }
    }

    pub fn now(&self) -> SimTime {
        self.sim.now()
    }

    fn enqueue(&mut self, wake: Vec<Wakeup>) {
        for w in wake {
            self.sim
                .schedule(w.at, w.event)
                .expect("wakeups are never in the past");
        }
    }

    pub fn apply(&mut self, doc: DeploymentDoc) {
        let wake = self.cluster.apply(doc, self.now());
        self.enqueue(wake);
    }

    pub fn kill(&mut self, pod: PodId) -> Result<(), OrchError> {
        let wake = self.cluster.kill_pod(pod, self.now())?;
        self.enqueue(wake);
        Ok(())
    }

    pub fn run_until(&mut self, t_end: SimTime) -> Result<usize, SimError> {
        let cluster = &mut self.cluster;
        self.sim.run_until(t_end, |sim, ev| {
            for w in cluster.step(ev.at, &ev.kind) {
                sim.schedule(w.at, w.event)
                    .expect("wakeups are never in the past");
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::IpPools;

    fn node(name: &str, env: &str) -> NodeSpec {
        NodeSpec {
            name: name.into(),
            labels: [("environment".to_string(), env.to_string())].into(),
            role: NodeRole::Worker,
        }
    }

    fn selector(env: &str) -> BTreeMap<String, String> {
        [("environment".to_string(), env.to_string())].into()
    }

    fn topo() -> TopologyDoc {
        TopologyDoc {
            nodes: vec![
                NodeSpec {
                    name: "master".into(),
                    labels: selector("cloud"),
                    role: NodeRole::Master,
                },
                node("worker1", "edge"),
                node("worker2", "cloud"),
                node("worker3", "cloud"),
            ],
            bridges: vec![],
            links: vec![],
            ip_pools: IpPools {
                pod_cidr: "10.233.0.0/24".parse().unwrap(),
                ue_cidr: "12.0.0.0/24".parse().unwrap(),
            },
        }
    }

    fn doc(name: &str, kind: VnfKind) -> DeploymentDoc {
        DeploymentDoc {
            name: name.into(),
            vnf_kind: kind,
            node_selector: selector("cloud"),
            static_ip: None,
            ports: vec![],
            env: BTreeMap::new(),
            config_map: None,
            init_gates: vec![],
            command: None,
        }
    }

    #[test]
    fn phase_graph_edges() {
        use PodPhase::*;
        let all = [
            Pending,
            Initialized,
            ContainersReady,
            Ready,
            Succeeded,
            Failed,
        ];
        let allowed: Vec<(PodPhase, PodPhase)> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_transition_to(b))
            .collect();
        assert_eq!(
            allowed,
            [
                (Pending, Initialized),
                (Pending, Failed),
                (Initialized, ContainersReady),
                (Initialized, Failed),
                (ContainersReady, Ready),
                (ContainersReady, Failed),
                (Ready, Succeeded),
                (Ready, Failed),
            ]
        );
    }

    #[test]
    fn schedule_prefers_smallest_matching_worker() {
        let nodes = vec![node("worker1", "edge"), node("worker3", "cloud")];
        assert_eq!(schedule_pod(&selector("cloud"), &nodes).unwrap(), "worker3");
        let t = topo();
        assert_eq!(
            schedule_pod(&selector("cloud"), &t.nodes).unwrap(),
            "worker2"
        );
        assert!(matches!(
            schedule_pod(&selector("space"), &t.nodes),
            Err(OrchError::NoMatchingNode(_))
        ));
    }

    #[test]
    fn master_never_hosts_pods() {
        let t = topo();
        assert_eq!(schedule_pod(&BTreeMap::new(), &t.nodes).unwrap(), "worker1");
    }

    #[test]
    fn allocator_static_and_dynamic() {
        let mut a: IpAllocator = IpAllocator::new("10.233.0.0/30".parse().unwrap());
        assert_eq!(a.allocate(1, None).unwrap(), Ipv4Addr::new(10, 233, 0, 1));
        assert_eq!(a.allocate(2, None).unwrap(), Ipv4Addr::new(10, 233, 0, 2));
        assert_eq!(a.allocate(3, None), Err(IpError::PoolExhausted));

        let mut a: IpAllocator = IpAllocator::new("10.233.0.0/24".parse().unwrap());
        let mme = Ipv4Addr::new(10, 233, 0, 130);
        assert_eq!(a.allocate(1, Some(mme)).unwrap(), mme);
        assert_eq!(
            a.allocate(2, Some(mme)),
            Err(IpError::DuplicateStaticIp(mme))
        );
        let outside = Ipv4Addr::new(192, 168, 0, 170);
        assert_eq!(
            a.allocate(3, Some(outside)),
            Err(IpError::OutOfRange(outside))
        );
        assert!(a.release(mme));
        assert_eq!(a.allocate(2, Some(mme)).unwrap(), mme);
    }

    #[test]
    fn apply_is_idempotent_and_replaces_on_change() {
        let mut c = ClusterState::new(&topo());
        let mut mme = doc("mme", VnfKind::Mme);
        c.apply(mme.clone(), 0);
        assert_eq!(c.pods.len(), 1);
        assert_eq!(c.pods[&1].phase, PodPhase::Initialized);
        c.apply(mme.clone(), 0);
        assert_eq!(c.pods.len(), 1);

        mme.env.insert("TZ".into(), "UTC".into());
        c.apply(mme, 5);
        assert_eq!(c.pods[&1].phase, PodPhase::Failed);
        assert_eq!(c.live_pod("mme").unwrap().pod_id, 2);
        assert!(c
            .event_log
            .iter()
            .any(|e| e.what.to_string() == "Initialized->Failed(replaced)"));
    }

    #[test]
    fn apply_with_gates_stays_pending_and_bound() {
        let mut c = ClusterState::new(&topo());
        let mut mme = doc("mme", VnfKind::Mme);
        mme.init_gates.push(InitGate {
            target_ip: Ipv4Addr::new(10, 233, 0, 219),
            target_port: 3868,
            retries: 100,
            interval: 10,
        });
        let wake = c.apply(mme, 0);
        let pod = c.live_pod("mme").unwrap();
        assert_eq!(pod.phase, PodPhase::Pending);
        assert_eq!(pod.node.as_deref(), Some("worker2"));
        assert_eq!(
            wake,
            [Wakeup {
                at: 10_000,
                event: OrchEvent::GateRetry { pod: 1, gate: 0 }
            }]
        );
    }

    #[test]
    fn unschedulable_pod_stays_pending_with_condition() {
        let mut c = ClusterState::new(&topo());
        let mut d = doc("x", VnfKind::MediaServer);
        d.node_selector = selector("space");
        c.apply(d, 0);
        let pod = c.live_pod("x").unwrap();
        assert_eq!(pod.phase, PodPhase::Pending);
        assert_eq!(pod.condition.as_deref(), Some("NoMatchingNode"));
        assert!(pod.node.is_none());
    }

    #[test]
    fn probe_requires_ready_phase() {
        let mut c = ClusterState::new(&topo());
        let mut hss = doc("hss", VnfKind::Hss);
        hss.static_ip = Some(Ipv4Addr::new(10, 233, 0, 219));
        c.apply(hss, 0);
        let ip = Ipv4Addr::new(10, 233, 0, 219);
        assert_eq!(c.probe(ip, 3868), ProbeResult::Closed);
        c.step(1000, &OrchEvent::ContainerStart { pod: 1 });
        // Still ContainersReady: no database yet.
        assert_eq!(c.pods[&1].phase, PodPhase::ContainersReady);
        assert_eq!(c.probe(ip, 3868), ProbeResult::Closed);
        assert_eq!(
            c.probe(Ipv4Addr::new(10, 233, 0, 9), 3868),
            ProbeResult::Closed
        );
    }

    #[test]
    fn kill_twice_is_unknown_pod() {
        let mut c = ClusterState::new(&topo());
        c.apply(doc("srv", VnfKind::MediaServer), 0);
        c.step(1000, &OrchEvent::ContainerStart { pod: 1 });
        assert_eq!(c.pods[&1].phase, PodPhase::Ready);
        c.kill_pod(1, 2000).unwrap();
        assert_eq!(c.pods[&1].phase, PodPhase::Failed);
        assert_eq!(c.kill_pod(1, 2000), Err(OrchError::UnknownPod(1)));
        c.step(2000, &OrchEvent::Reconcile);
        let p = c.live_pod("srv").unwrap();
        assert_eq!((p.pod_id, p.restart_count), (2, 1));
    }

    #[test]
    fn remove_ready_pod_succeeds() {
        let mut c = ClusterState::new(&topo());
        c.apply(doc("srv", VnfKind::MediaServer), 0);
        c.step(1000, &OrchEvent::ContainerStart { pod: 1 });
        c.remove("srv", 2000);
        assert_eq!(c.pods[&1].phase, PodPhase::Succeeded);
        c.step(2000, &OrchEvent::Reconcile);
        assert!(c.live_pod("srv").is_none());
    }

    #[test]
    fn event_log_tsv_format() {
        let mut c = ClusterState::new(&topo());
        c.apply(doc("srv", VnfKind::MediaServer), 0);
        let tsv = c.event_log_tsv();
        let first = tsv.lines().next().unwrap();
        assert_eq!(first, "0\t1\tsrv\tPending");
        assert!(tsv.contains("0\t1\tsrv\tPending->Initialized\n"));
    }
}
