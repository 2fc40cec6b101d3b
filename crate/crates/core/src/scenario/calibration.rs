//! Calibration profiles and fitting them from measured tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::BridgeSpec;
use crate::netmodel::{RateParams, TRANSPORT_BRIDGE};

/// Loss measured on `bridge` at a given setting. Applies to every setting
/// of that bridge with bandwidth at most `bandwidth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeLoss {
    pub bridge: String,
    pub bandwidth: f64,
    pub delay: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeEfficiency {
    pub ue: String,
    pub scenario: String,
    /// Mb/s per resource block.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProfile {
    pub name: String,
    pub rate_params: RateParams,
    #[serde(default)]
    pub bridge_loss: Vec<BridgeLoss>,
    #[serde(default)]
    pub ue_efficiencies: Vec<UeEfficiency>,
}

impl CalibrationProfile {
    pub fn nominal() -> Self {
        Self {
            name: "nominal".into(),
            rate_params: RateParams::nominal(),
            bridge_loss: Vec::new(),
            ue_efficiencies: Vec::new(),
        }
    }

    /// Loss for `bridge` at its current setting: the entry with the smallest
    /// bandwidth that still covers it.
    pub fn loss_for(&self, bridge: &BridgeSpec) -> Option<f64> {
        self.bridge_loss
            .iter()
            .filter(|e| e.bridge == bridge.name && bridge.bandwidth <= e.bandwidth)
            .min_by(|a, b| {
                a.bandwidth
                    .total_cmp(&b.bandwidth)
                    .then(b.loss.total_cmp(&a.loss))
            })
            .map(|e| e.loss)
    }

    pub fn efficiency(&self, ue: &str, scenario: &str) -> Option<f64> {
        self.ue_efficiencies
            .iter()
            .find(|e| e.ue == ue && e.scenario == scenario)
            .map(|e| e.efficiency)
    }

    pub fn is_valid(&self) -> bool {
        self.rate_params.is_valid()
            && self
                .bridge_loss
                .iter()
                .all(|e| (0.0..=1.0).contains(&e.loss) && e.bandwidth > 0.0)
            && self
                .ue_efficiencies
                .iter()
                .all(|e| e.efficiency.is_finite() && e.efficiency > 0.0)
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least one zero-delay and one nonzero-delay placement row")]
    InsufficientRows,
    #[error("bad table row: {0}")]
    Table(#[from] csv::Error),
    #[error("bad value in table: {0}")]
    Value(String),
    #[error("bad profile: {0}")]
    Profile(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    #[serde(rename = "CC")]
    Cloud,
    #[serde(rename = "EC")]
    Edge,
}

/// One placement measurement: TN setting, placement, bit rate and RTT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub tn_bandwidth: f64,
    pub tn_delay: f64,
    pub placement: Placement,
    pub bitrate_mbps: f64,
    pub rtt_ms: f64,
}

/// One slicing measurement: a UE's quota and bit rate within a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub scenario: String,
    pub ue: String,
    pub rb: u32,
    pub bitrate_mbps: f64,
}

fn read_tsv<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, CalibrationError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(Into::into)
}

/// Header: `tn_bandwidth tn_delay placement bitrate_mbps rtt_ms`.
pub fn parse_table1(text: &str) -> Result<Vec<Table1Row>, CalibrationError> {
    let rows: Vec<Table1Row> = read_tsv(text)?;
    for r in &rows {
        let ok = [r.tn_bandwidth, r.bitrate_mbps, r.rtt_ms]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && r.tn_delay.is_finite()
            && r.tn_delay >= 0.0;
        if !ok {
            return Err(CalibrationError::Value(format!("{r:?}")));
        }
    }
    Ok(rows)
}

/// Header: `scenario ue rb bitrate_mbps`.
pub fn parse_table2(text: &str) -> Result<Vec<Table2Row>, CalibrationError> {
    let rows: Vec<Table2Row> = read_tsv(text)?;
    for r in &rows {
        if r.rb == 0 || !r.bitrate_mbps.is_finite() || r.bitrate_mbps < 0.0 {
            return Err(CalibrationError::Value(format!("{r:?}")));
        }
    }
    Ok(rows)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0u32), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / f64::from(n))
}

pub const FITTED_NAME: &str = "fitted";

/// Fits a profile: base RTT from zero-delay rows, the delay multiplier from
/// the others, access cap as the best bit rate, a transport loss for every
/// cloud row below the access cap, and per-RB efficiencies.
pub fn fit_calibration(
    table1: &[Table1Row],
    table2: &[Table2Row],
) -> Result<CalibrationProfile, CalibrationError> {
    let base_rtt = mean(
        table1
            .iter()
            .filter(|r| r.tn_delay == 0.0)
            .map(|r| r.rtt_ms),
    )
    .ok_or(CalibrationError::InsufficientRows)?;
    let k = mean(
        table1
            .iter()
            .filter(|r| r.tn_delay > 0.0)
            .map(|r| (r.rtt_ms - base_rtt) / r.tn_delay),
    )
    .ok_or(CalibrationError::InsufficientRows)?;
    let access_cap = table1
        .iter()
        .map(|r| r.bitrate_mbps)
        .fold(f64::NEG_INFINITY, f64::max);

    let rate_params = RateParams {
        base_rtt,
        delay_multiplier: k,
        access_cap,
        ..RateParams::nominal()
    };
    if !rate_params.is_valid() {
        return Err(CalibrationError::Value(format!(
            "fitted parameters {rate_params:?}"
        )));
    }

    let bridge_loss = table1
        .iter()
        .filter(|r| r.placement == Placement::Cloud && r.bitrate_mbps < access_cap)
        .map(|r| BridgeLoss {
            bridge: TRANSPORT_BRIDGE.to_string(),
            bandwidth: r.tn_bandwidth,
            delay: r.tn_delay,
            loss: rate_params.inverse_mathis(r.rtt_ms, r.bitrate_mbps),
        })
        .collect();
    let ue_efficiencies = table2
        .iter()
        .map(|r| UeEfficiency {
            ue: r.ue.clone(),
            scenario: r.scenario.clone(),
            efficiency: r.bitrate_mbps / f64::from(r.rb),
        })
        .collect();

    Ok(CalibrationProfile {
        name: FITTED_NAME.to_string(),
        rate_params,
        bridge_loss,
        ue_efficiencies,
    })
}

pub fn parse_profile(text: &str) -> Result<CalibrationProfile, CalibrationError> {
    let p: CalibrationProfile = serde_json::from_str(text)?;
    if !p.is_valid() {
        return Err(CalibrationError::Value(format!(
            "profile {:?} out of range",
            p.name
        )));
    }
    Ok(p)
}
