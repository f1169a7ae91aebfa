//! User records and the enroll / train / verify logic, independent of HTTP.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use keydetect_core::detectors::{fit_stat_detector, AnomalyScorer, DetectorKind};
use keydetect_core::features::{extract_features, EventTrace};
use keydetect_core::stats::mean_and_sd;
use keydetect_core::{StatDetectorModel, TimingVector};
use parking_lot::RwLock;

use crate::error::{Result, ServiceError};
use crate::store::{Record, Store};
use crate::wire::{from_trace, to_trace, UserSummary, VerifyResponse, WireEvent};

pub const DEFAULT_MIN_ENROLL: usize = 10;
pub const DEFAULT_THRESHOLD_SDS: f64 = 3.0;
const MAX_ID_LEN: usize = 64;
const MAX_NONCE_LEN: usize = 128;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub min_enroll: usize,
    pub default_detector: DetectorKind,
    /// Threshold is `mean + threshold_sds * sd` of the leave-one-out self-scores.
    pub threshold_sds: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            min_enroll: DEFAULT_MIN_ENROLL,
            default_detector: DetectorKind::ScaledManhattan,
            threshold_sds: DEFAULT_THRESHOLD_SDS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Attempt {
    pub nonce: String,
    pub trace: EventTrace,
    pub vector: TimingVector,
}

#[derive(Debug, Clone)]
pub struct UserModel {
    pub model: StatDetectorModel,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct UserRecord {
    pub id: String,
    pub attempts: Vec<Attempt>,
    nonces: HashSet<String>,
    pub model: Option<UserModel>,
}

impl UserRecord {
    fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            attempts: Vec::new(),
            nonces: HashSet::new(),
            model: None,
        }
    }

    fn summary(&self) -> UserSummary {
        UserSummary {
            id: self.id.clone(),
            attempts: self.attempts.len(),
            trained: self.model.is_some(),
        }
    }
}

pub fn validate_user_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= MAX_ID_LEN
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::InvalidRequest(format!(
            "user id must be 1-{MAX_ID_LEN} characters of [A-Za-z0-9_-], got {id:?}"
        )))
    }
}

fn validate_nonce(nonce: &str) -> Result<()> {
    if nonce.is_empty() || nonce.len() > MAX_NONCE_LEN || nonce.chars().any(char::is_control) {
        return Err(ServiceError::InvalidRequest(format!(
            "nonce must be 1-{MAX_NONCE_LEN} printable characters"
        )));
    }
    Ok(())
}

/// Fits `kind` on all vectors and sets the acceptance threshold from
/// leave-one-out self-scores: each vector is scored by a model fitted on the
/// others.
pub fn calibrate(kind: DetectorKind, vectors: &[TimingVector], threshold_sds: f64) -> Result<UserModel> {
    if vectors.len() < 2 {
        return Err(ServiceError::InsufficientEnrollment {
            have: vectors.len(),
            need: 2,
        });
    }
    let mut loo = Vec::with_capacity(vectors.len());
    for i in 0..vectors.len() {
        let rest: Vec<&[f64]> = vectors
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| v.as_slice())
            .collect();
        let m: StatDetectorModel = fit_stat_detector(kind, &rest)?;
        loo.push(m.score(&vectors[i])?);
    }
    let (mean, sd) = mean_and_sd(&loo);
    let threshold = mean + threshold_sds * sd;
    if !threshold.is_finite() {
        return Err(ServiceError::Core(keydetect_core::Error::InvalidParameter(format!(
            "non-finite threshold for {kind}"
        ))));
    }
    Ok(UserModel {
        model: fit_stat_detector(kind, vectors)?,
        threshold,
    })
}

/// The service state: a map of users, each behind its own lock so writes
/// serialize per user while verifies and listings read in parallel.
pub struct Service {
    config: ServiceConfig,
    store: Option<Store>,
    users: RwLock<BTreeMap<String, Arc<RwLock<UserRecord>>>>,
}

impl Service {
    /// A service with no persistence.
    pub fn in_memory(config: ServiceConfig) -> Self {
        Self {
            config,
            store: None,
            users: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens `store` and replays its logs. Traces are re-validated on replay,
    /// so a record that fails extraction never reaches the enrolled set.
    pub fn open(config: ServiceConfig, store: Store) -> Result<Self> {
        let mut users = BTreeMap::new();
        for (id, records) in store.load_all()? {
            if validate_user_id(&id).is_err() {
                log::warn!("skipping store file for invalid user id {id:?}");
                continue;
            }
            let mut user = UserRecord::new(&id);
            for record in records {
                match record {
                    Record::Enroll { nonce, events } => {
                        let trace = to_trace(&events);
                        match extract_features(&trace) {
                            Ok(vector) if user.nonces.insert(nonce.clone()) => {
                                user.attempts.push(Attempt { nonce, trace, vector });
                            }
                            Ok(_) => {}
                            Err(e) => log::warn!("{id}: dropping stored attempt {nonce:?}: {e}"),
                        }
                    }
                    Record::Train { detector } => {
                        let fitted = detector
                            .parse::<DetectorKind>()
                            .map_err(ServiceError::from)
                            .and_then(|kind| Self::fit_user(&config, &user, kind));
                        match fitted {
                            Ok(m) => user.model = Some(m),
                            Err(e) => {
                                log::warn!("{id}: stored training with {detector} failed on replay: {e}");
                                user.model = None;
                            }
                        }
                    }
                }
            }
            users.insert(id, Arc::new(RwLock::new(user)));
        }
        Ok(Self {
            config,
            store: Some(store),
            users: RwLock::new(users),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn user(&self, id: &str) -> Result<Arc<RwLock<UserRecord>>> {
        validate_user_id(id)?;
        self.users
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownUser(id.to_string()))
    }

    fn fit_user(config: &ServiceConfig, user: &UserRecord, kind: DetectorKind) -> Result<UserModel> {
        if user.attempts.len() < config.min_enroll {
            return Err(ServiceError::InsufficientEnrollment {
                have: user.attempts.len(),
                need: config.min_enroll,
            });
        }
        let vectors: Vec<TimingVector> = user.attempts.iter().map(|a| a.vector).collect();
        calibrate(kind, &vectors, config.threshold_sds)
    }

    /// Adds one attempt and returns the user's attempt count. Re-sending a
    /// nonce already seen for this user changes nothing.
    pub fn enroll(&self, id: &str, nonce: &str, events: &[WireEvent]) -> Result<usize> {
        validate_user_id(id)?;
        validate_nonce(nonce)?;
        let trace = to_trace(events);
        let vector = extract_features(&trace)?;

        let entry = {
            let mut users = self.users.write();
            users
                .entry(id.to_string())
                .or_insert_with(|| Arc::new(RwLock::new(UserRecord::new(id))))
                .clone()
        };
        let mut user = entry.write();
        if user.nonces.contains(nonce) {
            return Ok(user.attempts.len());
        }
        if let Some(store) = &self.store {
            store.append(
                id,
                &Record::Enroll {
                    nonce: nonce.to_string(),
                    events: from_trace(&trace),
                },
            )?;
        }
        user.nonces.insert(nonce.to_string());
        user.attempts.push(Attempt {
            nonce: nonce.to_string(),
            trace,
            vector,
        });
        Ok(user.attempts.len())
    }

    /// Fits the user's detector and returns the new threshold.
    pub fn train(&self, id: &str, detector: Option<&str>) -> Result<f64> {
        let kind = match detector {
            Some(name) => name
                .parse::<DetectorKind>()
                .map_err(|e| ServiceError::InvalidRequest(e.to_string()))?,
            None => self.config.default_detector,
        };
        let entry = self.user(id)?;
        let mut user = entry.write();
        let fitted = Self::fit_user(&self.config, &user, kind)?;
        if let Some(store) = &self.store {
            store.append(
                id,
                &Record::Train {
                    detector: kind.tag().to_string(),
                },
            )?;
        }
        let threshold = fitted.threshold;
        user.model = Some(fitted);
        Ok(threshold)
    }

    /// Scores one attempt against the user's model. Never mutates state.
    pub fn verify(&self, id: &str, events: &[WireEvent]) -> Result<VerifyResponse> {
        let entry = self.user(id)?;
        let vector = extract_features::<f64>(&to_trace(events))?;
        let user = entry.read();
        let fitted = user.model.as_ref().ok_or_else(|| ServiceError::NotTrained(id.to_string()))?;
        let score = fitted.model.score(&vector)?;
        Ok(VerifyResponse {
            score,
            threshold: fitted.threshold,
            accepted: score <= fitted.threshold,
            detector: fitted.model.kind.tag().to_string(),
        })
    }

    pub fn list_users(&self) -> Vec<UserSummary> {
        self.users.read().values().map(|u| u.read().summary()).collect()
    }

    /// A copy of one user's record, for inspection and tests.
    pub fn snapshot(&self, id: &str) -> Result<UserRecord> {
        Ok(self.user(id)?.read().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use keydetect_core::features::trace_from_vector;
    use keydetect_core::synthetic::{generate, SyntheticConfig};

    fn events_of(v: &TimingVector) -> Vec<WireEvent> {
        from_trace(&trace_from_vector(v))
    }

    fn vectors(subject: usize, n: usize) -> Vec<TimingVector> {
        let ds = generate(&SyntheticConfig {
            subjects: 3,
            sessions: 1,
            reps_per_session: 40,
            seed: 4,
            ..SyntheticConfig::default()
        });
        ds.samples_at(subject).iter().take(n).map(|s| s.vector).collect()
    }

    #[test]
    fn ids_validated() {
        assert!(validate_user_id("a_b-9").is_ok());
        assert!(validate_user_id(&"x".repeat(64)).is_ok());
        for bad in ["", "a b", "a/b", "é", &"x".repeat(65)] {
            assert!(validate_user_id(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn calibrate_threshold_is_loo_mean_plus_three_sd() {
        let vs = vectors(0, 10);
        let m = calibrate(DetectorKind::Manhattan, &vs, 3.0).unwrap();
        // Leave-one-out Manhattan score by hand.
        let mut scores = Vec::new();
        for i in 0..vs.len() {
            let mut mean = [0.0; 31];
            for (j, v) in vs.iter().enumerate() {
                if j != i {
                    for f in 0..31 {
                        mean[f] += v[f] / 9.0;
                    }
                }
            }
            scores.push((0..31).map(|f| (vs[i][f] - mean[f]).abs()).sum::<f64>());
        }
        let mu = scores.iter().sum::<f64>() / 10.0;
        let sd = (scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / 10.0).sqrt();
        assert!((m.threshold - (mu + 3.0 * sd)).abs() < 1e-9);
    }

    #[test]
    fn near_identical_attempts_verify() {
        let base = vectors(0, 1)[0];
        let svc = Service::in_memory(ServiceConfig::default());
        for i in 0..10 {
            let mut raw = base.to_vec();
            // Jitter by whole milliseconds so traces stay exact.
            raw[0] += 0.001 * (i % 3) as f64;
            let v = TimingVector::from_slice(&raw).unwrap();
            svc.enroll("u", &format!("n{i}"), &events_of(&v)).unwrap();
        }
        // Two features move by at most 2 ms, so Manhattan self-scores stay tiny.
        let t = svc.train("u", Some("manhattan")).unwrap();
        assert!(t < 0.01, "{t}");
        for detector in [Some("manhattan"), None] {
            svc.train("u", detector).unwrap();
            for a in svc.snapshot("u").unwrap().attempts {
                let d = svc.verify("u", &from_trace(&a.trace)).unwrap();
                assert!(d.accepted, "{d:?}");
            }
        }
        assert_eq!(svc.verify("u", &events_of(&base)).unwrap().detector, "scaled_manhattan");
    }

    #[test]
    fn enrollment_rules() {
        let svc = Service::in_memory(ServiceConfig::default());
        let vs = vectors(1, 10);
        for (i, v) in vs.iter().take(9).enumerate() {
            assert_eq!(svc.enroll("u", &format!("n{i}"), &events_of(v)).unwrap(), i + 1);
        }
        assert!(matches!(
            svc.train("u", None),
            Err(ServiceError::InsufficientEnrollment { have: 9, need: 10 })
        ));
        assert_eq!(svc.enroll("u", "n0", &events_of(&vs[9])).unwrap(), 9);
        assert!(matches!(svc.verify("u", &events_of(&vs[0])), Err(ServiceError::NotTrained(_))));
        assert_eq!(svc.enroll("u", "n9", &events_of(&vs[9])).unwrap(), 10);
        let t1 = svc.train("u", Some("manhattan")).unwrap();
        let t2 = svc.train("u", Some("manhattan")).unwrap();
        assert_eq!(t1, t2);
        assert!(matches!(svc.train("u", Some("nope")), Err(ServiceError::InvalidRequest(_))));
        assert!(matches!(svc.verify("ghost", &events_of(&vs[0])), Err(ServiceError::UnknownUser(_))));
    }

    #[test]
    fn backspace_rejected_without_side_effects() {
        let svc = Service::in_memory(ServiceConfig::default());
        let v = vectors(0, 1)[0];
        svc.enroll("u", "a", &events_of(&v)).unwrap();
        let mut events = events_of(&v);
        events.insert(
            2,
            WireEvent {
                key: "Backspace".into(),
                kind: crate::wire::WireKind::Down,
                t_ms: events[1].t_ms,
            },
        );
        assert!(matches!(svc.enroll("u", "b", &events), Err(ServiceError::MalformedTrace(_))));
        assert_eq!(svc.list_users()[0].attempts, 1);
    }

    #[test]
    fn verify_is_pure() {
        let svc = Service::in_memory(ServiceConfig::default());
        for (i, v) in vectors(2, 12).iter().enumerate() {
            svc.enroll("u", &i.to_string(), &events_of(v)).unwrap();
        }
        svc.train("u", Some("zscore")).unwrap();
        let probe = events_of(&vectors(0, 1)[0]);
        let a = svc.verify("u", &probe).unwrap();
        let b = svc.verify("u", &probe).unwrap();
        assert_eq!(a, b);
        assert_eq!(svc.list_users()[0].attempts, 12);
    }

    #[test]
    fn replay_rebuilds_state_and_rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let vs = vectors(0, 11);
        let threshold;
        {
            let svc = Service::open(ServiceConfig::default(), Store::open(dir.path()).unwrap()).unwrap();
            for (i, v) in vs.iter().take(10).enumerate() {
                svc.enroll("alice", &format!("n{i}"), &events_of(v)).unwrap();
            }
            threshold = svc.train("alice", None).unwrap();
        }
        // A record that bypassed the validator must not be enrolled on replay.
        let store = Store::open(dir.path()).unwrap();
        let mut bad = events_of(&vs[10]);
        bad.truncate(5);
        store
            .append(
                "alice",
                &Record::Enroll {
                    nonce: "bad".into(),
                    events: bad,
                },
            )
            .unwrap();

        let svc = Service::open(ServiceConfig::default(), store).unwrap();
        let users = svc.list_users();
        assert_eq!(
            users,
            [UserSummary {
                id: "alice".into(),
                attempts: 10,
                trained: true
            }]
        );
        let snap = svc.snapshot("alice").unwrap();
        assert!(snap.attempts.iter().all(|a| a.nonce != "bad"));
        assert_eq!(snap.model.unwrap().threshold, threshold);
    }
}
