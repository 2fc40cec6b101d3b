//! End-to-end scenario execution: deploy, attach, slice, probe.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::calibration::CalibrationProfile;
use crate::catalog::{self, ue_attach, Bearer, VnfKind};
use crate::manifest::{DeploymentDoc, DeploymentRef, ProbeKind, ScenarioDoc, TopologyDoc};
use crate::netmodel::{Endpoint, FlowId, Network};
use crate::orchestrator::{
    ClusterState, IpAllocator, LogEntry, LogWhat, OrchEvent, PodPhase, Wakeup,
};
use crate::sim::{secs, EventId, RngStream, SimTime, Simulator};
use crate::slicing::{self, RbPool, SliceConfig, SliceController, SliceError, UeChannel};

/// Gap between the last pod turning Ready and the first probe.
pub const PROBE_DELAY: SimTime = secs(10);
/// A probe still running this long after probes started has failed.
pub const PROBE_TIMEOUT: SimTime = secs(86_400);
pub const ATTACH_RETRY: SimTime = secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Metric {
    #[serde(rename = "bitrate_mbps")]
    BitrateMbps,
    #[serde(rename = "rtt_ms")]
    RttMs,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::BitrateMbps => "bitrate_mbps",
            Metric::RttMs => "rtt_ms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub subject: String,
    pub metric: Metric,
    pub value: f64,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
}

impl ResultRow {
    /// `|value - expected| / expected <= tolerance`; `None` without an expectation.
    pub fn pass(&self) -> Option<bool> {
        let expected = self.expected?;
        let tol = self.tolerance.unwrap_or(0.0);
        Some(if tol == 0.0 {
            self.value == expected
        } else {
            ((self.value - expected) / expected).abs() <= tol
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario_name: String,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    /// Time every deployment first had a Ready pod.
    pub all_ready_at: SimTime,
    pub probes_started_at: SimTime,
    pub finished_at: SimTime,
    pub event_log: String,
    /// Flow table right after the probes were installed.
    pub flow_table: String,
    pub control_responses: Vec<String>,
}

impl ScenarioResult {
    /// No row failed its expectation.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass() != Some(false))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("deployment {deployment} not Ready after {duration} s: blocked on {blocked_on}")]
    DeploymentStuck {
        deployment: String,
        blocked_on: String,
        duration: u64,
        event_log: String,
    },
    #[error("probe {probe} failed: {reason}")]
    ProbeFailed {
        probe: String,
        reason: String,
        event_log: String,
    },
    #[error("deployment reference {0:?} was not resolved to a document")]
    UnresolvedDeployment(String),
    #[error("bad slice configuration: {0}")]
    Slices(#[from] SliceError),
}

impl ScenarioError {
    /// Event log up to the failure, when the simulation ran.
    pub fn event_log(&self) -> Option<&str> {
        match self {
            ScenarioError::DeploymentStuck { event_log, .. }
            | ScenarioError::ProbeFailed { event_log, .. } => Some(event_log),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub seed: u64,
    /// Control protocol lines, each optionally carrying `at_ms`.
    pub control: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum SimEvent {
    Orch(OrchEvent),
    Fault(String),
    Control(usize),
    ApplySlices,
    AttachUes,
    StartProbes,
    DownloadDone(usize),
    /// Re-evaluate network state; no action of its own.
    Wake,
    Deadline,
    ProbeTimeout,
}

#[derive(Debug, Clone)]
struct Download {
    ue: String,
    server: String,
    bits: f64,
    started: SimTime,
    /// Progress reference point: `remaining` bits were left at `since`.
    since: SimTime,
    remaining: f64,
    /// Mb/s.
    rate: f64,
    flow: Option<FlowId>,
    done_event: Option<EventId>,
}

impl Download {
    // bits per ms
    fn speed(&self) -> f64 {
        self.rate * 1000.0
    }

    fn finish_time(&self) -> Option<f64> {
        if self.remaining <= 0.0 {
            return Some(self.since as f64);
        }
        (self.rate > 0.0).then(|| self.since as f64 + self.remaining / self.speed())
    }
}

#[derive(Debug, Clone)]
enum ProbeState {
    Waiting,
    Running(Download),
    Done(f64),
}

struct Runner<'a> {
    scenario: &'a ScenarioDoc,
    sim: Simulator<SimEvent>,
    cluster: ClusterState,
    net: Network,
    ue_pool: IpAllocator<String>,
    bearers: BTreeMap<String, Bearer>,
    slices: SliceController,
    channels: Vec<UeChannel>,
    control: Vec<String>,
    responses: Vec<String>,
    probes: Vec<ProbeState>,
    ready_once: BTreeSet<String>,
    all_ready_at: Option<SimTime>,
    probes_started_at: Option<SimTime>,
    attach_scheduled: bool,
    flow_table: String,
}

/// Runs `scenario` with seed `seed` and no control script.
pub fn run_scenario(
    scenario: &ScenarioDoc,
    topology: &TopologyDoc,
    profile: &CalibrationProfile,
    seed: u64,
) -> Result<ScenarioResult, ScenarioError> {
    run_scenario_with(
        scenario,
        topology,
        profile,
        &RunConfig {
            seed,
            control: Vec::new(),
        },
    )
}

/// Bridge overrides applied, then profile losses.
pub fn effective_topology(
    scenario: &ScenarioDoc,
    topology: &TopologyDoc,
    profile: &CalibrationProfile,
) -> TopologyDoc {
    let mut topo = topology.with_overrides(&scenario.bridge_overrides);
    for b in &mut topo.bridges {
        if let Some(loss) = profile.loss_for(b) {
            b.loss = loss;
        }
    }
    topo
}

/// Runs `scenario` to completion. Deployments are applied at time zero in
/// a seed-dependent order; UEs attach once every deployment is Ready and
/// probes start [`PROBE_DELAY`] later.
pub fn run_scenario_with(
    scenario: &ScenarioDoc,
    topology: &TopologyDoc,
    profile: &CalibrationProfile,
    config: &RunConfig,
) -> Result<ScenarioResult, ScenarioError> {
    let mut docs: Vec<DeploymentDoc> = Vec::new();
    for d in &scenario.deployments {
        match d {
            DeploymentRef::Inline(doc) => docs.push(doc.clone()),
            DeploymentRef::Path(p) => return Err(ScenarioError::UnresolvedDeployment(p.clone())),
        }
    }

    let slice_config: Vec<SliceConfig> = scenario
        .slices
        .iter()
        .flatten()
        .map(|s| SliceConfig {
            slice_id: s.slice_id,
            rb: s.rb,
            ue_names: s.ue_names.clone(),
        })
        .collect();
    let slices = SliceController::new(slice_config, RbPool::default())?;
    let channels = scenario
        .ues
        .iter()
        .filter_map(|u| {
            profile
                .efficiency(&u.name, &scenario.name)
                .map(|e| UeChannel {
                    ue_name: u.name.clone(),
                    efficiency: e,
                })
        })
        .collect();

    let topo = effective_topology(scenario, topology, profile);
    let mut r = Runner {
        scenario,
        sim: Simulator::new(),
        cluster: ClusterState::new(&topo),
        net: Network::new(&topo, profile.rate_params),
        ue_pool: IpAllocator::new(topo.ip_pools.ue_cidr),
        bearers: BTreeMap::new(),
        slices,
        channels,
        control: config.control.clone(),
        responses: Vec::new(),
        probes: vec![ProbeState::Waiting; scenario.probes.len()],
        ready_once: BTreeSet::new(),
        all_ready_at: None,
        probes_started_at: None,
        attach_scheduled: false,
        flow_table: String::new(),
    };

    let mut rng = RngStream::new(config.seed);
    for i in (1..docs.len()).rev() {
        let j = rng.below(0, i as u64 + 1) as usize;
        docs.swap(i, j);
    }
    let start = r.cluster.start(0);
    r.enqueue(start);
    for doc in docs {
        let wake = r.cluster.apply(doc, 0);
        r.enqueue(wake);
    }
    for f in &scenario.faults {
        r.schedule(f.at_ms, SimEvent::Fault(f.deployment.clone()));
    }
    for (i, line) in r.control.clone().iter().enumerate() {
        r.schedule(
            slicing::control_time(line).unwrap_or(0),
            SimEvent::Control(i),
        );
    }
    r.schedule(secs(scenario.duration), SimEvent::Deadline);
    r.after_event(0);

    while let Some(ev) = r.sim.pop_due(SimTime::MAX) {
        let now = ev.at;
        r.handle(now, ev.kind)?;
        r.after_event(now);
        // Every control line gets its reply, even one timed after the probes.
        let answered = r.responses.len() == r.control.len();
        if answered
            && r.probes_started_at.is_some()
            && r.probes.iter().all(|p| matches!(p, ProbeState::Done(_)))
        {
            return Ok(r.finish(config.seed, now));
        }
    }
    unreachable!("the heartbeat keeps the queue non-empty")
}

impl Runner<'_> {
    fn schedule(&mut self, at: SimTime, ev: SimEvent) -> EventId {
        let at = at.max(self.sim.now());
        self.sim.schedule(at, ev).expect("clamped to now")
    }

    fn enqueue(&mut self, wake: Vec<Wakeup>) {
        for w in wake {
            self.schedule(w.at, SimEvent::Orch(w.event));
        }
    }

    fn log(&mut self, now: SimTime, deployment: &str, what: String) {
        self.cluster.event_log.push(LogEntry {
            time: now,
            pod: None,
            deployment: deployment.to_string(),
            what: LogWhat::Action(what),
        });
    }

    fn handle(&mut self, now: SimTime, ev: SimEvent) -> Result<(), ScenarioError> {
        match ev {
            SimEvent::Orch(e) => {
                let wake = self.cluster.step(now, &e);
                self.enqueue(wake);
            }
            SimEvent::Fault(dep) => {
                if let Some(id) = self.cluster.live_pod(&dep).map(|p| p.pod_id) {
                    let wake = self.cluster.kill_pod(id, now).expect("live pod");
                    self.enqueue(wake);
                }
            }
            SimEvent::Control(i) => {
                let flexran = self.cluster.serving_pod(VnfKind::FlexRan).is_some();
                self.slices.set_flexran_ready(flexran);
                let line = self.control[i].clone();
                let resp = self.slices.handle_control_msg(&line);
                self.log(now, "control", resp.clone());
                self.responses.push(resp);
                if self.slices.has_pending() {
                    self.schedule(now, SimEvent::ApplySlices);
                }
            }
            SimEvent::ApplySlices => {
                for line in self.slices.apply_pending(now) {
                    self.log(now, "slicing", line);
                }
            }
            SimEvent::AttachUes => {
                self.attach_scheduled = false;
                self.attach_all(now);
            }
            SimEvent::StartProbes => {
                self.probes_started_at = Some(now);
                self.schedule(now + PROBE_TIMEOUT, SimEvent::ProbeTimeout);
            }
            SimEvent::DownloadDone(i) => {
                if let ProbeState::Running(d) = &self.probes[i] {
                    let finish = d
                        .finish_time()
                        .expect("completion scheduled at a positive rate");
                    let elapsed = finish - d.started as f64;
                    // A transfer that never changed rate ran at exactly that rate.
                    let value = if d.since == d.started || elapsed <= 0.0 {
                        d.rate
                    } else {
                        d.bits / elapsed / 1000.0
                    };
                    if let Some(f) = d.flow {
                        self.net.remove_flow(f);
                    }
                    self.probes[i] = ProbeState::Done(value);
                }
            }
            SimEvent::Wake => {}
            SimEvent::Deadline => {
                if self.all_ready_at.is_none() {
                    let (deployment, blocked_on) = self.blocking();
                    return Err(ScenarioError::DeploymentStuck {
                        deployment,
                        blocked_on,
                        duration: self.scenario.duration,
                        event_log: self.cluster.event_log_tsv(),
                    });
                }
            }
            SimEvent::ProbeTimeout => {
                let i = self
                    .probes
                    .iter()
                    .position(|p| !matches!(p, ProbeState::Done(_)))
                    .expect("timeout only fires with probes outstanding");
                let reason = match &self.probes[i] {
                    ProbeState::Waiting => "never started".to_string(),
                    _ => "no progress before timeout".to_string(),
                };
                return Err(ScenarioError::ProbeFailed {
                    probe: self.scenario.probes[i].subject(),
                    reason,
                    event_log: self.cluster.event_log_tsv(),
                });
            }
        }
        Ok(())
    }

    fn attach_all(&mut self, now: SimTime) {
        let mut failed = false;
        for ue in &self.scenario.ues {
            if self.bearers.contains_key(&ue.name) {
                continue;
            }
            match ue_attach(&ue.name, &ue.serving, &self.cluster, &mut self.ue_pool, now) {
                Ok(b) => {
                    let msg = format!("ATTACH {} {}", b.ue_name, b.ue_ip);
                    let at = b.established_at;
                    self.bearers.insert(ue.name.clone(), b);
                    self.log(now, &ue.serving, msg);
                    self.schedule(at, SimEvent::Wake);
                }
                Err(_) => failed = true,
            }
        }
        if failed {
            self.schedule_attach(now + ATTACH_RETRY);
        }
    }

    fn schedule_attach(&mut self, at: SimTime) {
        if !self.attach_scheduled {
            self.attach_scheduled = true;
            self.schedule(at, SimEvent::AttachUes);
        }
    }

    fn after_event(&mut self, now: SimTime) {
        for p in self.cluster.live_pods() {
            if p.phase == PodPhase::Ready {
                self.ready_once.insert(p.deployment.clone());
            }
        }
        if self.all_ready_at.is_none() {
            let all = self.cluster.desired.keys().all(|d| {
                self.cluster
                    .live_pod(d)
                    .is_some_and(|p| p.phase == PodPhase::Ready)
            });
            if all {
                self.all_ready_at = Some(now);
                self.log(now, "scenario", "ALL_READY".into());
                self.schedule_attach(now);
                self.schedule(now + PROBE_DELAY, SimEvent::StartProbes);
            }
        }

        // Bearers lose their user plane when an anchor or RAN pod leaves Ready.
        let broken: Vec<String> = self
            .bearers
            .iter()
            .filter(|(_, b)| !b.is_intact(&self.cluster))
            .map(|(n, _)| n.clone())
            .collect();
        for ue in broken {
            let b = self.bearers.remove(&ue).expect("listed");
            self.ue_pool.release_owner(&ue);
            self.log(now, &b.serving, format!("DETACH {ue}"));
            self.schedule_attach(now + ATTACH_RETRY);
        }

        self.sync_network(now);
    }

    fn sync_network(&mut self, now: SimTime) {
        self.net.placements = self
            .cluster
            .live_pods()
            .filter(|p| p.phase == PodPhase::Ready)
            .filter_map(|p| p.node.clone().map(|n| (p.deployment.clone(), n)))
            .collect();
        self.net.bearers = self
            .bearers
            .iter()
            .filter(|(_, b)| b.established_at <= now)
            .map(|(n, b)| (n.clone(), b.clone()))
            .collect();
        self.net.slice_caps = slicing::rate_caps(self.slices.active(), &self.channels);

        if self.probes_started_at.is_some() {
            self.start_probes(now);
        }

        // Re-install download flows against the current paths.
        let mut fresh = false;
        for p in &mut self.probes {
            if let ProbeState::Running(d) = p {
                if let Some(f) = d.flow.take() {
                    self.net.remove_flow(f);
                }
                d.flow = self
                    .net
                    .add_flow(
                        Endpoint::Pod(d.server.clone()),
                        Endpoint::Ue(d.ue.clone()),
                        None,
                    )
                    .ok();
                fresh = true;
            }
        }
        if !fresh {
            return;
        }
        let rates: BTreeMap<FlowId, f64> = self.net.allocate().into_iter().collect();
        if self.flow_table.is_empty() {
            self.flow_table = self.net.flow_table_tsv();
        }

        let mut reschedule = Vec::new();
        for (i, p) in self.probes.iter_mut().enumerate() {
            let ProbeState::Running(d) = p else { continue };
            let rate = d.flow.and_then(|f| rates.get(&f).copied()).unwrap_or(0.0);
            if rate == d.rate && d.done_event.is_some() {
                continue;
            }
            // Advance progress at the old rate, then switch.
            let moved = d.speed() * (now - d.since) as f64;
            d.remaining = (d.remaining - moved).max(0.0);
            d.since = now;
            d.rate = rate;
            if let Some(e) = d.done_event.take() {
                self.sim.cancel(e);
            }
            if let Some(t) = d.finish_time() {
                reschedule.push((i, t.ceil() as SimTime));
            }
        }
        for (i, at) in reschedule {
            let id = self.schedule(at, SimEvent::DownloadDone(i));
            if let ProbeState::Running(d) = &mut self.probes[i] {
                d.done_event = Some(id);
            }
        }
    }

    fn start_probes(&mut self, now: SimTime) {
        for (i, spec) in self.scenario.probes.iter().enumerate() {
            if !matches!(self.probes[i], ProbeState::Waiting) {
                continue;
            }
            let endpoint = |name: &str| {
                if self.scenario.ues.iter().any(|u| u.name == name) {
                    Endpoint::Ue(name.to_string())
                } else {
                    Endpoint::Pod(name.to_string())
                }
            };
            let src = endpoint(&spec.src);
            let dst = match (&spec.dst, &spec.external_host) {
                (Some(d), _) => endpoint(d),
                (None, Some(h)) => Endpoint::External(h.clone()),
                (None, None) => continue,
            };
            match spec.kind {
                ProbeKind::Rtt => {
                    if let Ok(path) = self.net.path(&src, &dst) {
                        let rtt = path.rtt_ms(&self.net.graph, &self.net.params);
                        self.probes[i] = ProbeState::Done(rtt);
                    }
                }
                ProbeKind::Download => {
                    // Data flows from the server (dst) to the measuring side.
                    if self.net.path(&dst, &src).is_err() {
                        continue;
                    }
                    let Endpoint::Ue(ue) = src else { continue };
                    let bits = spec.payload() as f64 * 8.0;
                    self.probes[i] = ProbeState::Running(Download {
                        ue,
                        server: dst.to_string(),
                        bits,
                        started: now,
                        since: now,
                        remaining: bits,
                        rate: 0.0,
                        flow: None,
                        done_event: None,
                    });
                }
            }
        }
    }

    /// First deployment in dependency order without a Ready pod, and why.
    fn blocking(&self) -> (String, String) {
        let order = catalog::topological_order();
        let mut pending: Vec<&DeploymentDoc> = self
            .cluster
            .desired
            .values()
            .filter(|d| {
                !self
                    .cluster
                    .live_pod(&d.name)
                    .is_some_and(|p| p.phase == PodPhase::Ready)
            })
            .collect();
        pending.sort_by_key(|d| (order.iter().position(|k| *k == d.vnf_kind), d.name.clone()));
        let Some(doc) = pending.first() else {
            return ("-".into(), "nothing".into());
        };
        let Some(pod) = self.cluster.live_pod(&doc.name) else {
            return (doc.name.clone(), "no live pod".into());
        };
        let reason = match pod.phase {
            PodPhase::Pending if pod.node.is_none() => {
                pod.condition.clone().unwrap_or_else(|| "scheduling".into())
            }
            PodPhase::Pending => match pod.init_gates.get(pod.current_gate) {
                Some(g) => {
                    let owner = self
                        .cluster
                        .desired
                        .values()
                        .find(|d| d.static_ip == Some(g.target_ip))
                        .map(|d| format!("{} at ", d.name))
                        .unwrap_or_default();
                    format!("{owner}{}:{}", g.target_ip, g.target_port)
                }
                None => "init gates".into(),
            },
            PodPhase::ContainersReady => {
                catalog::dependency_edges(doc.vnf_kind, doc.flexran_enabled())
                    .into_iter()
                    .find(|dep| self.cluster.serving_pod(dep.kind).is_none())
                    .map(|dep| format!("{} not serving", dep.kind))
                    .unwrap_or_else(|| "readiness condition".into())
            }
            other => format!("phase {other}"),
        };
        (doc.name.clone(), reason)
    }

    fn finish(self, seed: u64, now: SimTime) -> ScenarioResult {
        let rows = self
            .scenario
            .probes
            .iter()
            .zip(&self.probes)
            .map(|(spec, state)| {
                let ProbeState::Done(value) = state else {
                    unreachable!("finish runs after every probe completed")
                };
                ResultRow {
                    subject: spec.subject(),
                    metric: match spec.kind {
                        ProbeKind::Download => Metric::BitrateMbps,
                        ProbeKind::Rtt => Metric::RttMs,
                    },
                    value: *value,
                    expected: spec.expect.as_ref().map(|e| e.value),
                    tolerance: spec.expect.as_ref().map(|e| e.tolerance),
                }
            })
            .collect();
        ScenarioResult {
            scenario_name: self.scenario.name.clone(),
            seed,
            rows,
            all_ready_at: self.all_ready_at.expect("probes ran"),
            probes_started_at: self.probes_started_at.expect("probes ran"),
            finished_at: now,
            event_log: self.cluster.event_log_tsv(),
            flow_table: self.flow_table,
            control_responses: self.responses,
        }
    }
}
