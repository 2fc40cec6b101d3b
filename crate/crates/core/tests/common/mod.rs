#![allow(dead_code)]

use std::collections::BTreeMap;

use cn2f_core::catalog::dependency_edges;
use cn2f_core::manifest::{parse_deployment, DeploymentDoc};
use cn2f_core::orchestrator::{ClusterSim, ClusterState, LogWhat, PodId, PodPhase};
use cn2f_core::scenario::{builtin_file, reference_topology};
use cn2f_core::sim::{secs, RngStream, SimTime};
use num_rational::Ratio;

pub type Q = Ratio<i128>;

/// Links crossed and optional cap.
pub type Flow = (Vec<usize>, Option<Q>);

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Textbook progressive filling in exact arithmetic. Every per-flow cap is a
/// private virtual link; each round raises all unfrozen flows by the smallest
/// equal increment that saturates some constraint, then freezes every flow on
/// a saturated constraint.
pub fn oracle(capacities: &[Q], flows: &[Flow]) -> Vec<Option<Q>> {
    let mut constraints: Vec<(Q, Vec<usize>)> = capacities
        .iter()
        .enumerate()
        .map(|(l, &c)| {
            let members = flows
                .iter()
                .enumerate()
                .filter(|(_, (links, _))| links.contains(&l))
                .map(|(f, _)| f)
                .collect();
            (c, members)
        })
        .collect();
    for (f, (_, cap)) in flows.iter().enumerate() {
        if let Some(c) = cap {
            constraints.push((*c, vec![f]));
        }
    }
    let constrained: Vec<bool> = (0..flows.len())
        .map(|f| constraints.iter().any(|(_, m)| m.contains(&f)))
        .collect();

    let zero = Q::from_integer(0);
    let mut x = vec![zero; flows.len()];
    let mut frozen: Vec<bool> = constrained.iter().map(|c| !c).collect();
    while frozen.iter().any(|f| !f) {
        let mut delta: Option<Q> = None;
        for (c, members) in &constraints {
            let free = members.iter().filter(|&&f| !frozen[f]).count();
            if free == 0 {
                continue;
            }
            let load: Q = members.iter().map(|&f| x[f]).sum();
            let inc = (*c - load) / Q::from_integer(free as i128);
            delta = Some(match delta {
                Some(d) if d <= inc => d,
                _ => inc,
            });
        }
        let delta = delta.expect("some constraint has a free member");
        for f in 0..flows.len() {
            if !frozen[f] {
                x[f] += delta;
            }
        }
        for (c, members) in &constraints {
            let load: Q = members.iter().map(|&f| x[f]).sum();
            if load >= *c {
                for &f in members {
                    frozen[f] = true;
                }
            }
        }
    }
    x.into_iter()
        .zip(constrained)
        .map(|(v, c)| c.then_some(v))
        .collect()
}

/// Every VNF kind that runs as a pod, one deployment each.
pub const FULL_SET: [&str; 10] = [
    "cassandra",
    "hss",
    "mme",
    "spgwc",
    "spgwu-edge",
    "enb-flexran",
    "flexran",
    "media-edge",
    "rcc",
    "rru",
];

pub fn shipped(name: &str) -> DeploymentDoc {
    let text = builtin_file(&format!("deployments/{name}.json")).expect("shipped deployment");
    parse_deployment(text.as_bytes()).expect("shipped deployment parses")
}

/// Pods whose logged transitions leave the lifecycle graph.
pub fn lifecycle_violations(c: &ClusterState) -> Vec<String> {
    let mut phase: BTreeMap<PodId, PodPhase> = BTreeMap::new();
    let mut out = Vec::new();
    for e in &c.event_log {
        let Some(pod) = e.pod else { continue };
        match &e.what {
            LogWhat::Created => {
                if phase.insert(pod, PodPhase::Pending).is_some() {
                    out.push(format!("pod {pod} created twice"));
                }
            }
            LogWhat::Transition { from, to, .. } => match phase.get(&pod) {
                Some(cur) if cur == from && from.can_transition_to(*to) => {
                    phase.insert(pod, *to);
                }
                cur => out.push(format!(
                    "pod {pod} at {cur:?}: {from}->{to} at t={}",
                    e.time
                )),
            },
            LogWhat::Action(_) => {}
        }
    }
    out
}

/// Ready transitions that happened before every dependency had been Ready.
pub fn dependency_violations(c: &ClusterState) -> Vec<String> {
    // pod -> time it entered Ready, while it stays Ready
    let mut ready: BTreeMap<PodId, SimTime> = BTreeMap::new();
    let mut out = Vec::new();
    for e in &c.event_log {
        let (Some(id), LogWhat::Transition { to, .. }) = (e.pod, &e.what) else {
            continue;
        };
        if *to != PodPhase::Ready {
            ready.remove(&id);
            continue;
        }
        let pod = &c.pods[&id];
        for dep in dependency_edges(pod.vnf_kind, pod.flexran_enabled) {
            let ok = ready
                .iter()
                .any(|(q, &t)| c.pods[q].vnf_kind == dep.kind && t < e.time);
            if !ok {
                out.push(format!(
                    "{} (pod {id}) Ready at t={} without {} Ready earlier",
                    pod.deployment, e.time, dep.kind
                ));
            }
        }
        ready.insert(id, e.time);
    }
    out
}

/// Deployments without exactly one live pod that is Ready and serving.
pub fn unconverged(c: &ClusterState) -> Vec<String> {
    c.desired
        .keys()
        .filter(|d| {
            let live: Vec<_> = c.live_pods().filter(|p| &p.deployment == *d).collect();
            !(live.len() == 1 && live[0].is_serving())
        })
        .cloned()
        .collect()
}

pub const CHAOS_UNTIL: SimTime = secs(600);
pub const SETTLE_UNTIL: SimTime = secs(2400);

/// Full VNF set with 1 to 6 random kills in the first ten minutes, then
/// left alone until `SETTLE_UNTIL`.
pub fn chaos_run(seed: u64) -> ClusterSim {
    let mut rng = RngStream::new(seed);
    let mut sim = ClusterSim::new(&reference_topology());
    let mut order: Vec<&str> = FULL_SET.to_vec();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(0, i as u64 + 1) as usize);
    }
    for name in order {
        sim.apply(shipped(name));
    }
    let kills = rng.below(1, 7);
    let mut times: Vec<SimTime> = (0..kills).map(|_| rng.below(1, CHAOS_UNTIL)).collect();
    times.sort_unstable();
    for t in times {
        sim.run_until(t).expect("forward in time");
        let live: Vec<PodId> = sim.cluster.live_pods().map(|p| p.pod_id).collect();
        if live.is_empty() {
            continue;
        }
        let victim = live[rng.below(0, live.len() as u64) as usize];
        sim.kill(victim).expect("victim is live");
    }
    sim.run_until(SETTLE_UNTIL).expect("forward in time");
    sim
}
