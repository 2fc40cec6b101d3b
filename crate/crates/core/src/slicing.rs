//! Resource-block slicing and the line-oriented control protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::sim::SimTime;

pub const DEFAULT_RB_POOL: u32 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbPool {
    total: u32,
}

impl RbPool {
    pub fn new(total: u32) -> Result<Self, SliceError> {
        if total == 0 {
            return Err(SliceError::EmptyPool);
        }
        Ok(Self { total })
    }

    pub fn total(&self) -> u32 {
        self.total
    }
}

impl Default for RbPool {
    fn default() -> Self {
        Self {
            total: DEFAULT_RB_POOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub slice_id: u32,
    pub rb: u32,
    pub ue_names: Vec<String>,
}

/// Radio efficiency of one UE, Mb/s per RB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeChannel {
    pub ue_name: String,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SliceError {
    #[error("quotas sum to {requested} RBs, pool has {total}")]
    ExceedsPool { requested: u64, total: u32 },
    #[error("no slice {0}")]
    UnknownSlice(u32),
    #[error("UE {0} is not in the slice or has no channel")]
    UnknownUe(String),
    #[error("slice {0} defined twice")]
    DuplicateSlice(u32),
    #[error("UE {0} is in more than one slice")]
    UeInMultipleSlices(String),
    #[error("RB pool must be non-empty")]
    EmptyPool,
}

pub fn total_rb(config: &[SliceConfig]) -> u64 {
    config.iter().map(|s| u64::from(s.rb)).sum()
}

/// Checks quota sum, unique slice ids and UE exclusivity.
pub fn check_config(config: &[SliceConfig], pool: &RbPool) -> Result<(), SliceError> {
    let mut ids = BTreeMap::new();
    let mut ues = BTreeMap::new();
    for s in config {
        if ids.insert(s.slice_id, ()).is_some() {
            return Err(SliceError::DuplicateSlice(s.slice_id));
        }
        for ue in &s.ue_names {
            if ues
                .insert(ue.as_str(), s.slice_id)
                .is_some_and(|prev| prev != s.slice_id)
            {
                return Err(SliceError::UeInMultipleSlices(ue.clone()));
            }
        }
    }
    let requested = total_rb(config);
    if requested > u64::from(pool.total()) {
        return Err(SliceError::ExceedsPool {
            requested,
            total: pool.total(),
        });
    }
    Ok(())
}

/// Replaces the quota of `slice_id`.
pub fn set_quota(
    config: &[SliceConfig],
    slice_id: u32,
    rb: u32,
    pool: &RbPool,
) -> Result<Vec<SliceConfig>, SliceError> {
    let mut next = config.to_vec();
    let slice = next
        .iter_mut()
        .find(|s| s.slice_id == slice_id)
        .ok_or(SliceError::UnknownSlice(slice_id))?;
    slice.rb = rb;
    let requested = total_rb(&next);
    if requested > u64::from(pool.total()) {
        return Err(SliceError::ExceedsPool {
            requested,
            total: pool.total(),
        });
    }
    Ok(next)
}

/// `rb * efficiency` for a UE of `slice`.
pub fn slice_rate_cap(
    slice: &SliceConfig,
    ue: &str,
    channels: &[UeChannel],
) -> Result<f64, SliceError> {
    if !slice.ue_names.iter().any(|u| u == ue) {
        return Err(SliceError::UnknownUe(ue.to_string()));
    }
    let ch = channels
        .iter()
        .find(|c| c.ue_name == ue)
        .ok_or_else(|| SliceError::UnknownUe(ue.to_string()))?;
    Ok(f64::from(slice.rb) * ch.efficiency)
}

/// Rate caps of every sliced UE that has a channel.
pub fn rate_caps(config: &[SliceConfig], channels: &[UeChannel]) -> BTreeMap<String, f64> {
    let mut caps = BTreeMap::new();
    for s in config {
        for ue in &s.ue_names {
            if let Ok(c) = slice_rate_cap(s, ue, channels) {
                caps.insert(ue.clone(), c);
            }
        }
    }
    caps
}

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
enum Command {
    SetSlice { slice: u32, rb: u32 },
    GetSlices {},
    AttachUe { ue: String, slice: u32 },
}

fn reject(code: &str) -> String {
    format!(r#"{{"ok":false,"error":"{code}"}}"#)
}

/// Slice state driven by control messages. Accepted changes are staged and
/// become active at the next [`SliceController::apply_pending`].
#[derive(Debug, Clone)]
pub struct SliceController {
    pool: RbPool,
    active: Vec<SliceConfig>,
    staged: Vec<SliceConfig>,
    flexran_ready: bool,
}

impl SliceController {
    pub fn new(config: Vec<SliceConfig>, pool: RbPool) -> Result<Self, SliceError> {
        check_config(&config, &pool)?;
        Ok(Self {
            pool,
            staged: config.clone(),
            active: config,
            flexran_ready: false,
        })
    }

    pub fn pool(&self) -> RbPool {
        self.pool
    }

    /// Configuration in effect for rate allocation.
    pub fn active(&self) -> &[SliceConfig] {
        &self.active
    }

    /// Configuration including accepted but not yet applied changes.
    pub fn staged(&self) -> &[SliceConfig] {
        &self.staged
    }

    pub fn has_pending(&self) -> bool {
        self.staged != self.active
    }

    pub fn set_flexran_ready(&mut self, ready: bool) {
        self.flexran_ready = ready;
    }

    /// Answers one protocol line. Rejected commands change nothing.
    pub fn handle_control_msg(&mut self, line: &str) -> String {
        let mut value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => return reject("parse"),
        };
        let known = value
            .get("cmd")
            .and_then(Value::as_str)
            .is_some_and(|c| matches!(c, "set_slice" | "get_slices" | "attach_ue"));
        if !known {
            return reject(if value.is_object() {
                "unknown_cmd"
            } else {
                "parse"
            });
        }
        if let Some(obj) = value.as_object_mut() {
            obj.remove("at_ms");
        }
        let cmd: Command = match serde_json::from_value(value) {
            Ok(c) => c,
            Err(_) => return reject("parse"),
        };
        if !self.flexran_ready {
            return reject("flexran_not_ready");
        }
        match cmd {
            Command::SetSlice { slice, rb } => {
                match set_quota(&self.staged, slice, rb, &self.pool) {
                    Ok(next) => {
                        self.staged = next;
                        format!(r#"{{"ok":true,"slice":{slice},"rb":{rb}}}"#)
                    }
                    Err(SliceError::UnknownSlice(_)) => reject("unknown_slice"),
                    Err(_) => reject("exceeds_pool"),
                }
            }
            Command::GetSlices {} => {
                let slices: Vec<Value> = self
                    .staged
                    .iter()
                    .map(|s| json!({"slice": s.slice_id, "rb": s.rb, "ues": s.ue_names}))
                    .collect();
                format!(r#"{{"ok":true,"slices":{}}}"#, Value::from(slices))
            }
            Command::AttachUe { ue, slice } => {
                if !self.staged.iter().any(|s| s.slice_id == slice) {
                    return reject("unknown_slice");
                }
                for s in &mut self.staged {
                    s.ue_names.retain(|u| *u != ue);
                    if s.slice_id == slice {
                        s.ue_names.push(ue.clone());
                    }
                }
                format!(r#"{{"ok":true,"ue":{},"slice":{slice}}}"#, Value::from(ue))
            }
        }
    }

    /// Activates staged changes; returns one log line per changed slice.
    pub fn apply_pending(&mut self, now: SimTime) -> Vec<String> {
        let mut log = Vec::new();
        for s in &self.staged {
            let before = self.active.iter().find(|a| a.slice_id == s.slice_id);
            if before != Some(s) {
                log.push(format!(
                    "t={now} slice {} rb={} ues={}",
                    s.slice_id,
                    s.rb,
                    s.ue_names.join(",")
                ));
            }
        }
        self.active = self.staged.clone();
        log
    }
}

/// Timestamp carried by a control line, if any.
pub fn control_time(line: &str) -> Option<u64> {
    serde_json::from_str::<Value>(line)
        .ok()?
        .get("at_ms")?
        .as_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(a: u32, b: u32) -> Vec<SliceConfig> {
        vec![
            SliceConfig {
                slice_id: 1,
                rb: a,
                ue_names: vec!["ue1".into()],
            },
            SliceConfig {
                slice_id: 2,
                rb: b,
                ue_names: vec!["ue2".into()],
            },
        ]
    }

    fn ready(c: Vec<SliceConfig>) -> SliceController {
        let mut s = SliceController::new(c, RbPool::default()).unwrap();
        s.set_flexran_ready(true);
        s
    }

    #[test]
    fn quotas_against_pool() {
        let pool = RbPool::default();
        assert!(check_config(&cfg(5, 20), &pool).is_ok());
        assert_eq!(
            set_quota(&cfg(5, 15), 1, 15, &pool),
            Err(SliceError::ExceedsPool {
                requested: 30,
                total: 25
            })
        );
        assert_eq!(set_quota(&cfg(5, 10), 1, 15, &pool).unwrap(), cfg(15, 10));
        assert_eq!(
            set_quota(&cfg(5, 10), 3, 1, &pool),
            Err(SliceError::UnknownSlice(3))
        );
        assert_eq!(RbPool::new(0), Err(SliceError::EmptyPool));
    }

    #[test]
    fn rate_cap_is_linear_in_rb() {
        let ch = vec![
            UeChannel {
                ue_name: "ue1".into(),
                efficiency: 0.21,
            },
            UeChannel {
                ue_name: "ue2".into(),
                efficiency: 0.1425,
            },
        ];
        let c = cfg(5, 20);
        assert!((slice_rate_cap(&c[0], "ue1", &ch).unwrap() - 1.05).abs() < 1e-12);
        assert!((slice_rate_cap(&c[1], "ue2", &ch).unwrap() - 2.85).abs() < 1e-12);
        assert_eq!(slice_rate_cap(&cfg(0, 0)[0], "ue1", &ch).unwrap(), 0.0);
        assert_eq!(
            slice_rate_cap(&c[0], "ue2", &ch),
            Err(SliceError::UnknownUe("ue2".into()))
        );
    }

    #[test]
    fn ue_in_two_slices_is_rejected() {
        let mut c = cfg(1, 1);
        c[1].ue_names.push("ue1".into());
        assert_eq!(
            check_config(&c, &RbPool::default()),
            Err(SliceError::UeInMultipleSlices("ue1".into()))
        );
    }

    #[test]
    fn control_protocol() {
        let mut s = ready(cfg(5, 10));
        assert_eq!(
            s.handle_control_msg(r#"{"cmd":"set_slice","slice":1,"rb":15}"#),
            r#"{"ok":true,"slice":1,"rb":15}"#
        );
        assert_eq!(
            s.handle_control_msg("not json"),
            r#"{"ok":false,"error":"parse"}"#
        );
        assert_eq!(
            s.handle_control_msg(r#"{"cmd":"set_slice","slice":1,"rb":30}"#),
            r#"{"ok":false,"error":"exceeds_pool"}"#
        );
        assert_eq!(
            s.handle_control_msg(r#"{"cmd":"reboot"}"#),
            r#"{"ok":false,"error":"unknown_cmd"}"#
        );
        assert_eq!(
            s.handle_control_msg(r#"{"cmd":"set_slice","slice":9,"rb":1}"#),
            r#"{"ok":false,"error":"unknown_slice"}"#
        );
        assert_eq!(
            s.handle_control_msg(r#"{"cmd":"set_slice","slice":1}"#),
            r#"{"ok":false,"error":"parse"}"#
        );
    }

    #[test]
    fn changes_wait_for_apply() {
        let mut s = ready(cfg(5, 10));
        s.handle_control_msg(r#"{"cmd":"set_slice","slice":1,"rb":15}"#);
        assert_eq!(s.active(), cfg(5, 10).as_slice());
        assert!(s.has_pending());
        let log = s.apply_pending(2500);
        assert_eq!(log, ["t=2500 slice 1 rb=15 ues=ue1"]);
        assert_eq!(s.active(), cfg(15, 10).as_slice());
        assert!(!s.has_pending());
    }

    #[test]
    fn not_ready_rejects() {
        let mut s = SliceController::new(cfg(5, 10), RbPool::default()).unwrap();
        assert_eq!(
            s.handle_control_msg(r#"{"cmd":"get_slices"}"#),
            r#"{"ok":false,"error":"flexran_not_ready"}"#
        );
    }

    #[test]
    fn attach_moves_ue() {
        let mut s = ready(cfg(5, 10));
        s.handle_control_msg(r#"{"cmd":"attach_ue","ue":"ue1","slice":2}"#);
        s.apply_pending(0);
        assert!(s.active()[0].ue_names.is_empty());
        assert_eq!(s.active()[1].ue_names, ["ue2", "ue1"]);
    }

    #[test]
    fn control_timestamps() {
        assert_eq!(control_time(r#"{"at_ms":5,"cmd":"get_slices"}"#), Some(5));
        assert_eq!(control_time(r#"{"cmd":"get_slices"}"#), None);
    }
}
