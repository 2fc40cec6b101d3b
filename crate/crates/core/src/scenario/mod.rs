//! Scenario execution, calibration profiles and the shipped scenarios.

mod calibration;
mod report;
mod runtime;

pub use calibration::{
    fit_calibration, parse_profile, parse_table1, parse_table2, BridgeLoss, CalibrationError,
    CalibrationProfile, Placement, Table1Row, Table2Row, UeEfficiency, FITTED_NAME,
};
pub use report::{emit_table, table_cells, TableFormat, HEADER};
pub use runtime::{
    effective_topology, run_scenario, run_scenario_with, Metric, ResultRow, RunConfig,
    ScenarioError, ScenarioResult, ATTACH_RETRY, PROBE_DELAY, PROBE_TIMEOUT,
};

use crate::manifest::{
    parse_deployment, parse_scenario, parse_topology, DeploymentRef, ManifestError, ScenarioDoc,
    TopologyDoc,
};

pub const TABLE1_TSV: &str = include_str!("../../data/table1.tsv");
pub const TABLE2_TSV: &str = include_str!("../../data/table2.tsv");

pub const REFERENCE_TOPOLOGY: &str = "reference";

// (path relative to the scenario directory, contents)
const FILES: &[(&str, &str)] = &[
    (
        "topology-reference.json",
        include_str!("../../scenarios/topology-reference.json"),
    ),
    (
        "table1-row1-cc.json",
        include_str!("../../scenarios/table1-row1-cc.json"),
    ),
    (
        "table1-row1-ec.json",
        include_str!("../../scenarios/table1-row1-ec.json"),
    ),
    (
        "table1-row2-cc.json",
        include_str!("../../scenarios/table1-row2-cc.json"),
    ),
    (
        "table1-row2-ec.json",
        include_str!("../../scenarios/table1-row2-ec.json"),
    ),
    (
        "table2-scenario1.json",
        include_str!("../../scenarios/table2-scenario1.json"),
    ),
    (
        "table2-scenario2.json",
        include_str!("../../scenarios/table2-scenario2.json"),
    ),
    (
        "table2-scenario3.json",
        include_str!("../../scenarios/table2-scenario3.json"),
    ),
    (
        "split-ran.json",
        include_str!("../../scenarios/split-ran.json"),
    ),
    (
        "deployments/cassandra.json",
        include_str!("../../scenarios/deployments/cassandra.json"),
    ),
    (
        "deployments/hss.json",
        include_str!("../../scenarios/deployments/hss.json"),
    ),
    (
        "deployments/mme.json",
        include_str!("../../scenarios/deployments/mme.json"),
    ),
    (
        "deployments/spgwc.json",
        include_str!("../../scenarios/deployments/spgwc.json"),
    ),
    (
        "deployments/spgwu-edge.json",
        include_str!("../../scenarios/deployments/spgwu-edge.json"),
    ),
    (
        "deployments/spgwu-cloud.json",
        include_str!("../../scenarios/deployments/spgwu-cloud.json"),
    ),
    (
        "deployments/enb.json",
        include_str!("../../scenarios/deployments/enb.json"),
    ),
    (
        "deployments/enb-flexran.json",
        include_str!("../../scenarios/deployments/enb-flexran.json"),
    ),
    (
        "deployments/flexran.json",
        include_str!("../../scenarios/deployments/flexran.json"),
    ),
    (
        "deployments/media-edge.json",
        include_str!("../../scenarios/deployments/media-edge.json"),
    ),
    (
        "deployments/media-cloud.json",
        include_str!("../../scenarios/deployments/media-cloud.json"),
    ),
    (
        "deployments/rcc.json",
        include_str!("../../scenarios/deployments/rcc.json"),
    ),
    (
        "deployments/rru.json",
        include_str!("../../scenarios/deployments/rru.json"),
    ),
];

pub const BUILTIN_SCENARIOS: [&str; 8] = [
    "table1-row1-cc",
    "table1-row1-ec",
    "table1-row2-cc",
    "table1-row2-ec",
    "table2-scenario1",
    "table2-scenario2",
    "table2-scenario3",
    "split-ran",
];

/// Contents of a shipped file, by path relative to the scenario directory.
pub fn builtin_file(path: &str) -> Option<&'static str> {
    let path = path.strip_prefix("./").unwrap_or(path);
    FILES.iter().find(|(p, _)| *p == path).map(|(_, c)| *c)
}

pub fn reference_topology() -> TopologyDoc {
    parse_topology(
        builtin_file("topology-reference.json")
            .expect("shipped")
            .as_bytes(),
    )
    .expect("shipped topology parses")
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("cannot load {path}: {message}")]
    Load { path: String, message: String },
    #[error("{path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: ManifestError,
    },
}

/// Replaces every path reference with the document `load` returns for it.
pub fn resolve_deployments<F>(scenario: &mut ScenarioDoc, mut load: F) -> Result<(), ResolveError>
where
    F: FnMut(&str) -> Result<Vec<u8>, String>,
{
    for d in &mut scenario.deployments {
        if let DeploymentRef::Path(p) = d {
            let text = load(p).map_err(|message| ResolveError::Load {
                path: p.clone(),
                message,
            })?;
            let doc = parse_deployment(&text).map_err(|source| ResolveError::Manifest {
                path: p.clone(),
                source,
            })?;
            *d = DeploymentRef::Inline(doc);
        }
    }
    Ok(())
}

/// A shipped scenario with its deployment references resolved.
pub fn builtin_scenario(name: &str) -> Option<ScenarioDoc> {
    let text = builtin_file(&format!("{name}.json"))?;
    let mut doc = parse_scenario(text.as_bytes()).expect("shipped scenario parses");
    resolve_deployments(&mut doc, |p| {
        builtin_file(p)
            .map(|t| t.as_bytes().to_vec())
            .ok_or_else(|| "not shipped".to_string())
    })
    .expect("shipped references resolve");
    Some(doc)
}

pub fn builtin_profile_names() -> Vec<&'static str> {
    vec!["nominal", "table1", "table2"]
}

/// `nominal` uses default parameters; `table1` is fitted from the placement
/// table; `table2` also carries per-UE slicing efficiencies.
pub fn builtin_profile(name: &str) -> Option<CalibrationProfile> {
    let t1 = || parse_table1(TABLE1_TSV).expect("shipped table parses");
    let t2 = || parse_table2(TABLE2_TSV).expect("shipped table parses");
    let mut p = match name {
        "nominal" => return Some(CalibrationProfile::nominal()),
        "table1" => fit_calibration(&t1(), &[]),
        "table2" => fit_calibration(&t1(), &t2()),
        _ => return None,
    }
    .expect("shipped tables fit");
    p.name = name.to_string();
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::validate;

    #[test]
    fn shipped_scenarios_validate() {
        let topo = reference_topology();
        for name in BUILTIN_SCENARIOS {
            let s = builtin_scenario(name).unwrap();
            let docs: Vec<_> = s.inline_deployments().cloned().collect();
            let report = validate(&topo, &docs, Some(&s));
            assert!(report.errors.is_empty(), "{name}: {:?}", report.lines());
        }
    }

    #[test]
    fn shipped_profiles() {
        for name in builtin_profile_names() {
            let p = builtin_profile(name).unwrap();
            assert_eq!(p.name, name);
            assert!(p.is_valid());
        }
        assert!(builtin_profile("table3").is_none());
        let t2 = builtin_profile("table2").unwrap();
        assert!((t2.efficiency("ue1", "table2-scenario1").unwrap() - 0.21).abs() < 1e-12);
    }

    #[test]
    fn unknown_builtin() {
        assert!(builtin_scenario("nope").is_none());
        assert!(builtin_file("deployments/nope.json").is_none());
    }
}
