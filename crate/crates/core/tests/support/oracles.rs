//! Brute-force reference implementations shared by property and acceptance tests.

use std::collections::HashMap;

use keydetect_core::features::{EventTrace, KeyEvent, KeyKind, PASSWORD_KEYS};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random valid attempt: strictly increasing keydowns, positive holds, with
/// shift presses wrapped around the capital R half the time.
pub fn random_trace(rng: &mut ChaCha8Rng) -> EventTrace {
    let mut events: Vec<(i64, usize, KeyEvent)> = Vec::new();
    let mut t = rng.random_range(0..5_000i64);
    for (k, key) in PASSWORD_KEYS.iter().enumerate() {
        let hold = rng.random_range(1..400i64);
        if *key == "R" && rng.random_bool(0.5) {
            events.push((t - 1, events.len(), KeyEvent::new("ShiftLeft", KeyKind::Down, t - 1)));
            events.push((t + hold + 1, events.len(), KeyEvent::new("ShiftLeft", KeyKind::Up, t + hold + 1)));
        }
        events.push((t, events.len(), KeyEvent::new(*key, KeyKind::Down, t)));
        events.push((t + hold, events.len(), KeyEvent::new(*key, KeyKind::Up, t + hold)));
        if k + 1 < PASSWORD_KEYS.len() {
            t += rng.random_range(1..600i64);
        }
    }
    events.sort_by_key(|(t, seq, _)| (*t, *seq));
    EventTrace::new(events.into_iter().map(|(_, _, e)| e).collect())
}

/// Looks up each password key's press and release by scanning the events.
pub fn brute_force_features(trace: &EventTrace) -> Vec<f64> {
    let mut down: HashMap<&str, i64> = HashMap::new();
    let mut up: HashMap<&str, i64> = HashMap::new();
    for e in &trace.events {
        let map = if e.kind == KeyKind::Down { &mut down } else { &mut up };
        map.entry(e.key.as_str()).or_insert(e.t_ms);
    }
    let mut out = Vec::new();
    for (k, key) in PASSWORD_KEYS.iter().enumerate() {
        out.push((up[key] - down[key]) as f64 / 1000.0);
        if let Some(next) = PASSWORD_KEYS.get(k + 1) {
            out.push((down[next] - down[key]) as f64 / 1000.0);
            out.push((down[next] - up[key]) as f64 / 1000.0);
        }
    }
    out
}

/// Threshold-enumeration reference for ROC, EER and ZFR.
pub struct Oracle {
    // (threshold, false alarm, miss) for every distinct score ascending, then +inf.
    pub sweep: Vec<(f64, f64, f64)>,
}

impl Oracle {
    pub fn new(g: &[f64], i: &[f64]) -> Self {
        let mut ts: Vec<f64> = g.iter().chain(i).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts.push(f64::INFINITY);
        let sweep = ts
            .into_iter()
            .map(|t| {
                let fa = g.iter().filter(|&&s| s >= t).count() as f64 / g.len() as f64;
                let miss = i.iter().filter(|&&s| s < t).count() as f64 / i.len() as f64;
                (t, fa, miss)
            })
            .collect();
        Self { sweep }
    }

    pub fn eer(&self) -> f64 {
        let touching: Vec<f64> = self.sweep.iter().filter(|p| p.1 == p.2).map(|p| p.1).collect();
        if !touching.is_empty() {
            let lo = touching.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = touching.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return (lo + hi) / 2.0;
        }
        for w in self.sweep.windows(2) {
            let (d0, d1) = (w[0].1 - w[0].2, w[1].1 - w[1].2);
            if d0 > 0.0 && d1 < 0.0 {
                let s = d0 / (d0 - d1);
                return w[0].1 + s * (w[1].1 - w[0].1);
            }
        }
        unreachable!("false alarm starts at 1 and miss ends at 1");
    }

    pub fn zfr(&self) -> f64 {
        self.sweep
            .iter()
            .filter(|p| p.2 == 0.0)
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    }
}
