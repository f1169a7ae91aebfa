//! JSON bodies of the HTTP API.

use keydetect_core::features::{EventTrace, KeyEvent, KeyKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireKind {
    Down,
    Up,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEvent {
    pub key: String,
    pub kind: WireKind,
    pub t_ms: i64,
}

impl From<&WireEvent> for KeyEvent {
    fn from(e: &WireEvent) -> Self {
        let kind = match e.kind {
            WireKind::Down => KeyKind::Down,
            WireKind::Up => KeyKind::Up,
        };
        KeyEvent::new(e.key.clone(), kind, e.t_ms)
    }
}

impl From<&KeyEvent> for WireEvent {
    fn from(e: &KeyEvent) -> Self {
        let kind = match e.kind {
            KeyKind::Down => WireKind::Down,
            KeyKind::Up => WireKind::Up,
        };
        WireEvent {
            key: e.key.clone(),
            kind,
            t_ms: e.t_ms,
        }
    }
}

pub fn to_trace(events: &[WireEvent]) -> EventTrace {
    EventTrace::new(events.iter().map(KeyEvent::from).collect())
}

pub fn from_trace(trace: &EventTrace) -> Vec<WireEvent> {
    trace.events.iter().map(WireEvent::from).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrollRequest {
    pub nonce: String,
    pub events: Vec<WireEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrollResponse {
    pub attempts: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainRequest {
    /// Falls back to the service default when absent.
    #[serde(default)]
    pub detector: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResponse {
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub events: Vec<WireEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub score: f64,
    pub threshold: f64,
    pub accepted: bool,
    pub detector: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSummary {
    pub id: String,
    pub attempts: usize,
    pub trained: bool,
}
