//! Timing vectors and feature extraction from raw key-event traces.
//!
//! The password is the fixed string `.tie5Roanl` followed by Enter: eleven
//! keystrokes. Each keystroke contributes a hold time (`H`), and each
//! consecutive pair contributes a keydown-keydown (`DD`) and a keyup-keydown
//! (`UD`) latency, for 11 + 10 + 10 = 31 features. Features are laid out in
//! the benchmark CSV order: `H.k, DD.k.k+1, UD.k.k+1` for each key followed by
//! the final `H.Return`.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of timing features per password attempt.
pub const N_FEATURES: usize = 31;

/// Number of keystrokes in the password, including Enter.
pub const N_KEYS: usize = 11;

/// Canonical key symbols of the password, in typing order.
pub const PASSWORD_KEYS: [&str; N_KEYS] = [".", "t", "i", "e", "5", "R", "o", "a", "n", "l", "Enter"];

/// Canonical feature labels in benchmark CSV column order.
pub const FEATURE_LABELS: [&str; N_FEATURES] = [
    "H.period",
    "DD.period.t",
    "UD.period.t",
    "H.t",
    "DD.t.i",
    "UD.t.i",
    "H.i",
    "DD.i.e",
    "UD.i.e",
    "H.e",
    "DD.e.five",
    "UD.e.five",
    "H.five",
    "DD.five.Shift.r",
    "UD.five.Shift.r",
    "H.Shift.r",
    "DD.Shift.r.o",
    "UD.Shift.r.o",
    "H.o",
    "DD.o.a",
    "UD.o.a",
    "H.a",
    "DD.a.n",
    "UD.a.n",
    "H.n",
    "DD.n.l",
    "UD.n.l",
    "H.l",
    "DD.l.Return",
    "UD.l.Return",
    "H.Return",
];

/// Column index of the hold time of keystroke `k`.
pub const fn hold_index(k: usize) -> usize {
    3 * k
}

/// Column index of the keydown-keydown latency from keystroke `k` to `k + 1`.
pub const fn down_down_index(k: usize) -> usize {
    3 * k + 1
}

/// Column index of the keyup-keydown latency from keystroke `k` to `k + 1`.
pub const fn up_down_index(k: usize) -> usize {
    3 * k + 2
}

/// Which family a feature column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Hold,
    DownDown,
    UpDown,
}

pub fn feature_kind(column: usize) -> FeatureKind {
    match column % 3 {
        0 => FeatureKind::Hold,
        1 => FeatureKind::DownDown,
        _ => FeatureKind::UpDown,
    }
}

/// An ordered 31-tuple of timing features, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingVector<T>([T; N_FEATURES]);

impl<T: Scalar> TimingVector<T> {
    /// Wraps raw values. Every entry must be finite.
    pub fn new(values: [T; N_FEATURES]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "feature {} is not finite",
                FEATURE_LABELS[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[T]) -> Result<Self> {
        let arr: [T; N_FEATURES] = values.try_into().map_err(|_| Error::DimensionMismatch {
            expected: N_FEATURES,
            got: values.len(),
        })?;
        Self::new(arr)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.to_vec()
    }

    pub fn cast<U: Scalar>(&self) -> TimingVector<U> {
        TimingVector(self.0.map(|v| U::from_f64(v.as_f64()).expect("finite")))
    }

    /// True when hold and keydown-keydown entries are strictly positive.
    /// Keyup-keydown entries may be negative when keys overlap.
    pub fn has_valid_signs(&self) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, v)| feature_kind(i) == FeatureKind::UpDown || *v > T::zero())
    }
}

impl<T> Deref for TimingVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> AsRef<[T]> for TimingVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyKind {
    Down,
    Up,
}

/// One timestamped key transition. `t_ms` is milliseconds since the attempt started.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEvent {
    pub key: String,
    pub kind: KeyKind,
    pub t_ms: i64,
}

impl KeyEvent {
    pub fn new(key: impl Into<String>, kind: KeyKind, t_ms: i64) -> Self {
        Self {
            key: key.into(),
            kind,
            t_ms,
        }
    }
}

/// The raw keydown/keyup events of a single typing attempt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    pub events: Vec<KeyEvent>,
}

impl EventTrace {
    pub fn new(events: Vec<KeyEvent>) -> Self {
        Self { events }
    }

    /// Shifts every timestamp by `offset_ms`.
    pub fn shifted(&self, offset_ms: i64) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| KeyEvent::new(e.key.clone(), e.kind, e.t_ms + offset_ms))
                .collect(),
        }
    }
}

enum KeyClass {
    Password(usize),
    Modifier,
    Backspace,
    Other,
}

// Accepts both `KeyboardEvent.key` values and layout-independent `code` values.
fn classify_key(key: &str) -> KeyClass {
    let idx = match key {
        "." | "Period" => 0,
        "t" | "KeyT" => 1,
        "i" | "KeyI" => 2,
        "e" | "KeyE" => 3,
        "5" | "Digit5" => 4,
        "R" | "Shift+r" | "Shift+R" | "KeyR" => 5,
        "o" | "KeyO" => 6,
        "a" | "KeyA" => 7,
        "n" | "KeyN" => 8,
        "l" | "KeyL" => 9,
        "Enter" | "Return" | "NumpadEnter" => 10,
        "Shift" | "ShiftLeft" | "ShiftRight" => return KeyClass::Modifier,
        "Backspace" | "Delete" => return KeyClass::Backspace,
        _ => return KeyClass::Other,
    };
    KeyClass::Password(idx)
}

/// Checks a trace and returns the (down, up) timestamps of each password keystroke.
pub fn keystroke_times(trace: &EventTrace) -> Result<[(i64, i64); N_KEYS]> {
    let malformed = |msg: String| Err(Error::MalformedTrace(msg));

    if let Some(w) = trace.events.windows(2).find(|w| w[1].t_ms < w[0].t_ms) {
        return malformed(format!(
            "timestamps decrease ({} ms after {} ms)",
            w[1].t_ms, w[0].t_ms
        ));
    }

    let mut down: [Option<i64>; N_KEYS] = [None; N_KEYS];
    let mut up: [Option<i64>; N_KEYS] = [None; N_KEYS];
    let mut next_key = 0;
    for ev in &trace.events {
        let k = match classify_key(&ev.key) {
            KeyClass::Password(k) => k,
            KeyClass::Modifier => continue,
            KeyClass::Backspace => return malformed("backspace present".into()),
            KeyClass::Other => return malformed(format!("unexpected key {:?}", ev.key)),
        };
        match ev.kind {
            KeyKind::Down => {
                if next_key >= N_KEYS || k != next_key {
                    let expected = PASSWORD_KEYS.get(next_key).copied().unwrap_or("<end>");
                    return malformed(format!(
                        "wrong key sequence: got {:?}, expected {:?}",
                        ev.key, expected
                    ));
                }
                down[k] = Some(ev.t_ms);
                next_key += 1;
            }
            KeyKind::Up => {
                let Some(d) = down[k] else {
                    return malformed(format!("keyup for {:?} without keydown", ev.key));
                };
                if up[k].is_some() {
                    return malformed(format!("repeated keyup for {:?}", ev.key));
                }
                if ev.t_ms <= d {
                    return malformed(format!("zero-length press of {:?}", ev.key));
                }
                up[k] = Some(ev.t_ms);
            }
        }
    }
    if next_key != N_KEYS {
        return malformed(format!(
            "incomplete attempt: {} of {} keystrokes",
            next_key, N_KEYS
        ));
    }

    let mut times = [(0, 0); N_KEYS];
    for k in 0..N_KEYS {
        let Some(u) = up[k] else {
            return malformed(format!("{:?} never released", PASSWORD_KEYS[k]));
        };
        times[k] = (down[k].expect("all keys pressed"), u);
    }
    if let Some(k) = (0..N_KEYS - 1).find(|&k| times[k + 1].0 <= times[k].0) {
        return malformed(format!(
            "simultaneous keydown of {:?} and {:?}",
            PASSWORD_KEYS[k],
            PASSWORD_KEYS[k + 1]
        ));
    }
    Ok(times)
}

/// Extracts the 31 timing features from a raw trace.
///
/// `H_k = up_k - down_k`, `DD_k = down_{k+1} - down_k`, `UD_k = down_{k+1} - up_k`,
/// converted from milliseconds to seconds.
pub fn extract_features<T: Scalar>(trace: &EventTrace) -> Result<TimingVector<T>> {
    let times = keystroke_times(trace)?;
    let secs = |ms: i64| T::lit(ms as f64) / T::lit(1000.0);
    let mut out = [T::zero(); N_FEATURES];
    for k in 0..N_KEYS {
        let (down, up) = times[k];
        out[hold_index(k)] = secs(up - down);
        if k + 1 < N_KEYS {
            let next_down = times[k + 1].0;
            out[down_down_index(k)] = secs(next_down - down);
            out[up_down_index(k)] = secs(next_down - up);
        }
    }
    TimingVector::new(out)
}

/// Builds a synthetic event trace whose extracted features reproduce `v` to
/// millisecond quantization. Every press lasts at least 1 ms and consecutive
/// keydowns are at least 1 ms apart.
pub fn trace_from_vector<T: Scalar>(v: &TimingVector<T>) -> EventTrace {
    let mut events = Vec::with_capacity(2 * N_KEYS);
    let mut down_s = 0.0_f64;
    let mut prev_down_ms = -1_i64;
    for k in 0..N_KEYS {
        let down_ms = ((down_s * 1000.0).round() as i64).max(prev_down_ms + 1);
        let hold_s = v[hold_index(k)].as_f64();
        let up_ms = (((down_s + hold_s) * 1000.0).round() as i64).max(down_ms + 1);
        events.push(KeyEvent::new(PASSWORD_KEYS[k], KeyKind::Down, down_ms));
        events.push(KeyEvent::new(PASSWORD_KEYS[k], KeyKind::Up, up_ms));
        prev_down_ms = down_ms;
        if k + 1 < N_KEYS {
            down_s += v[down_down_index(k)].as_f64();
        }
    }
    events.sort_by_key(|e| e.t_ms);
    EventTrace { events }
}
