use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use cn2f_core::catalog::VnfKind;
use cn2f_core::manifest::{
    parse_deployment, parse_scenario, parse_topology, to_json, validate, DeploymentDoc, InitGate,
};
use cn2f_core::scenario::{builtin_file, builtin_scenario, reference_topology, BUILTIN_SCENARIOS};
use proptest::prelude::*;

const DEPLOYMENTS: [&str; 13] = [
    "cassandra",
    "hss",
    "mme",
    "spgwc",
    "spgwu-edge",
    "spgwu-cloud",
    "enb",
    "enb-flexran",
    "flexran",
    "media-edge",
    "media-cloud",
    "rcc",
    "rru",
];

fn shipped(name: &str) -> DeploymentDoc {
    let text = builtin_file(&format!("deployments/{name}.json")).unwrap();
    parse_deployment(text.as_bytes()).unwrap()
}

fn label() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["edge", "cloud", "ran", "control", "mars"]).prop_map(String::from)
}

fn gate() -> impl Strategy<Value = InitGate> {
    (any::<u8>(), 1u16.., 1u32..200, 1u64..60).prop_map(|(host, port, retries, interval)| {
        InitGate {
            target_ip: Ipv4Addr::new(10, 233, 0, host),
            target_port: port,
            retries,
            interval,
        }
    })
}

fn deployment() -> impl Strategy<Value = DeploymentDoc> {
    (
        "[a-z][a-z0-9-]{0,12}",
        prop::sample::select(VnfKind::ALL.to_vec()),
        prop::option::of(label()),
        prop::option::of(any::<u8>()),
        prop::collection::btree_set(1u16.., 0..4),
        prop::collection::btree_map("[A-Z_]{1,8}", "[ -~]{0,10}", 0..3),
        prop::option::of("[a-z-]{1,10}"),
        prop::collection::vec(gate(), 0..3),
        prop::option::of("[ -~]{0,20}"),
    )
        .prop_map(
            |(name, kind, env, ip, ports, vars, cm, gates, cmd)| DeploymentDoc {
                name,
                vnf_kind: kind,
                node_selector: env
                    .map(|e| BTreeMap::from([("environment".to_string(), e)]))
                    .unwrap_or_default(),
                static_ip: ip.map(|h| Ipv4Addr::new(10, 233, 0, h)),
                ports: ports.into_iter().collect(),
                env: vars,
                config_map: cm,
                init_gates: gates,
                command: cmd,
            },
        )
        .prop_filter("split must parse", |d| d.split_option().is_ok())
}

/// A shipped deployment with a few fields perturbed.
fn mutated() -> impl Strategy<Value = DeploymentDoc> {
    (
        prop::sample::select(DEPLOYMENTS.to_vec()),
        prop::option::of(label()),
        prop::option::of(prop::sample::select(vec![
            130u8, 140, 150, 160, 170, 219, 0, 255,
        ])),
    )
        .prop_map(|(name, env, ip)| {
            let mut d = shipped(name);
            if let Some(e) = env {
                d.node_selector.insert("environment".into(), e);
            }
            if let Some(h) = ip {
                d.static_ip = Some(Ipv4Addr::new(10, 233, 0, h));
            }
            d
        })
}

proptest! {
    #[test]
    fn parsers_are_total(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_topology(&bytes);
        let _ = parse_deployment(&bytes);
        let _ = parse_scenario(&bytes);
    }

    #[test]
    fn parsers_are_total_on_near_miss_json(
        key in prop::sample::select(vec!["name", "vnf_kind", "ports", "init_gates", "nodes", "bridges", "probes", "slices", "duration"]),
        value in prop::sample::select(vec!["null", "-1", "70000", "\"\"", "[]", "{}", "1e999", "\"MME\"", "[{}]"]),
    ) {
        for base in [
            builtin_file("deployments/mme.json").unwrap(),
            builtin_file("topology-reference.json").unwrap(),
            builtin_file("table2-scenario1.json").unwrap(),
        ] {
            let mut v: serde_json::Value = serde_json::from_str(base).unwrap();
            v[key] = serde_json::from_str(value).unwrap_or(serde_json::Value::Null);
            let text = v.to_string();
            let _ = parse_topology(text.as_bytes());
            let _ = parse_deployment(text.as_bytes());
            let _ = parse_scenario(text.as_bytes());
        }
    }

    #[test]
    fn deployment_round_trip(d in deployment()) {
        let text = to_json(&d);
        let back = parse_deployment(text.as_bytes()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn validation_ignores_list_order(
        docs in prop::collection::vec(mutated(), 1..10).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let topo = reference_topology();
        let mut shuffled = docs.clone();
        // Deterministic rotation plus reversal covers distinct permutations.
        let k = (seed % shuffled.len() as u64) as usize;
        shuffled.rotate_left(k);
        if seed & 1 == 1 {
            shuffled.reverse();
        }
        let a = validate(&topo, &docs, None);
        let b = validate(&topo, &shuffled, None);
        prop_assert_eq!(a.lines(), b.lines());
    }
}

#[test]
fn shipped_documents_round_trip() {
    let topo = reference_topology();
    assert_eq!(parse_topology(to_json(&topo).as_bytes()).unwrap(), topo);
    for name in DEPLOYMENTS {
        let d = shipped(name);
        assert_eq!(parse_deployment(to_json(&d).as_bytes()).unwrap(), d);
    }
    for name in BUILTIN_SCENARIOS {
        let s = builtin_scenario(name).unwrap();
        assert_eq!(parse_scenario(to_json(&s).as_bytes()).unwrap(), s, "{name}");
    }
}

#[test]
fn mme_without_hss_is_flagged_but_runnable() {
    let report = validate(&reference_topology(), &[shipped("mme")], None);
    assert!(
        report.has_warning("MissingDependency"),
        "{:?}",
        report.lines()
    );
    assert!(report.has_warning("GateTargetUnresolved"));
    assert!(report.is_runnable());
}

#[test]
fn shipped_scenarios_report_nothing() {
    let topo = reference_topology();
    for name in BUILTIN_SCENARIOS {
        let s = builtin_scenario(name).unwrap();
        let docs: Vec<DeploymentDoc> = s.inline_deployments().cloned().collect();
        let report = validate(&topo, &docs, Some(&s));
        assert!(report.lines().is_empty(), "{name}: {:?}", report.lines());
    }
}

#[test]
fn clashing_static_ips() {
    let mut spgwc = shipped("spgwc");
    spgwc.static_ip = shipped("mme").static_ip;
    let report = validate(&reference_topology(), &[shipped("mme"), spgwc], None);
    assert!(report.has_error("DuplicateStaticIp"));
}
