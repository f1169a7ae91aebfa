use std::net::SocketAddr;
use std::sync::Arc;

use keydetect_core::features::trace_from_vector;
use keydetect_core::synthetic::{generate, SyntheticConfig};
use keydetect_core::TimingVector;
use keydetect_service::wire::{from_trace, UserSummary, VerifyResponse, WireEvent};
use keydetect_service::{BackgroundServer, Service, ServiceConfig, Store};
use serde_json::{json, Value};

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn events(v: &TimingVector) -> Vec<WireEvent> {
    from_trace(&trace_from_vector(v))
}

/// Returns (status, body) for both success and error responses.
fn post(server: &BackgroundServer, path: &str, body: Value) -> (u16, Value) {
    match ureq::post(&server.url(path)).send_json(body) {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

fn post_raw(server: &BackgroundServer, path: &str, body: &str) -> (u16, Value) {
    match ureq::post(&server.url(path)).send_string(body) {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

fn users(server: &BackgroundServer) -> Value {
    ureq::get(&server.url("/api/users")).call().unwrap().into_json().unwrap()
}

fn dataset() -> keydetect_core::Dataset {
    generate(&SyntheticConfig {
        subjects: 11,
        sessions: 2,
        reps_per_session: 20,
        seed: 21,
        ..SyntheticConfig::default()
    })
}

#[test]
fn enroll_train_verify_round_trip() {
    let ds = dataset();
    let server = BackgroundServer::start(Arc::new(Service::in_memory(ServiceConfig::default())), local()).unwrap();
    assert_eq!(users(&server), json!([]));

    let genuine: Vec<TimingVector> = ds.samples_at(1).iter().take(10).map(|s| s.vector).collect();
    for (i, v) in genuine.iter().enumerate() {
        let (code, body) = post(
            &server,
            "/api/users/s002/enroll",
            json!({"nonce": format!("n{i}"), "events": events(v)}),
        );
        assert_eq!(code, 200, "{body}");
        assert_eq!(body["attempts"], i + 1);
    }
    let (code, body) = post(&server, "/api/users/s002/train", json!({"detector": "scaled_manhattan"}));
    assert_eq!(code, 200, "{body}");
    let threshold = body["threshold"].as_f64().unwrap();

    for v in &genuine {
        let (code, body) = post(&server, "/api/users/s002/verify", json!({"events": events(v)}));
        assert_eq!(code, 200);
        let d: VerifyResponse = serde_json::from_value(body).unwrap();
        assert!(d.accepted, "{d:?}");
        assert_eq!(d.threshold, threshold);
        assert_eq!(d.detector, "scaled_manhattan");
    }

    // Five attempts from each of ten other subjects.
    let impostors: Vec<TimingVector> = (0..ds.subjects().len())
        .filter(|&s| s != 1)
        .flat_map(|s| ds.samples_at(s).iter().take(5).map(|x| x.vector))
        .collect();
    assert_eq!(impostors.len(), 50);
    let rejected = impostors
        .iter()
        .filter(|v| {
            let (_, body) = post(&server, "/api/users/s002/verify", json!({"events": events(v)}));
            !body["accepted"].as_bool().unwrap()
        })
        .count();
    assert!(rejected >= 40, "{rejected}/50 rejected");

    let listed: Vec<UserSummary> = serde_json::from_value(users(&server)).unwrap();
    assert_eq!(
        listed,
        [UserSummary {
            id: "s002".into(),
            attempts: 10,
            trained: true
        }]
    );
}

#[test]
fn error_codes() {
    let ds = dataset();
    let server = BackgroundServer::start(Arc::new(Service::in_memory(ServiceConfig::default())), local()).unwrap();
    let v = ds.samples_at(0)[0].vector;

    let (code, body) = post(&server, "/api/users/nobody/verify", json!({"events": events(&v)}));
    assert_eq!((code, body["error_code"].as_str()), (404, Some("unknown_user")));

    let mut bad = events(&v);
    bad.push(WireEvent {
        key: "Backspace".into(),
        kind: keydetect_service::wire::WireKind::Down,
        t_ms: 1,
    });
    let (code, body) = post(&server, "/api/users/u/enroll", json!({"nonce": "x", "events": bad}));
    assert_eq!((code, body["error_code"].as_str()), (422, Some("malformed_trace")));
    assert!(body["message"].as_str().unwrap().len() > 10);

    post(&server, "/api/users/u/enroll", json!({"nonce": "a", "events": events(&v)}));
    let (code, body) = post(&server, "/api/users/u/verify", json!({"events": events(&v)}));
    assert_eq!((code, body["error_code"].as_str()), (409, Some("not_trained")));
    let (code, body) = post_raw(&server, "/api/users/u/train", "");
    assert_eq!((code, body["error_code"].as_str()), (409, Some("insufficient_enrollment")));

    let (code, body) = post_raw(&server, "/api/users/u/enroll", "{not json");
    assert_eq!((code, body["error_code"].as_str()), (400, Some("invalid_request")));
    let (code, body) = post(&server, "/api/users/bad.id/enroll", json!({"nonce": "a", "events": events(&v)}));
    assert_eq!((code, body["error_code"].as_str()), (400, Some("invalid_request")));

    // Duplicate nonce leaves the count alone.
    let (_, body) = post(&server, "/api/users/u/enroll", json!({"nonce": "a", "events": events(&v)}));
    assert_eq!(body["attempts"], 1);
}

#[test]
fn listing_never_exposes_timings() {
    let ds = dataset();
    let server = BackgroundServer::start(Arc::new(Service::in_memory(ServiceConfig::default())), local()).unwrap();
    post(
        &server,
        "/api/users/carol/enroll",
        json!({"nonce": "1", "events": events(&ds.samples_at(0)[0].vector)}),
    );
    let listed = users(&server);
    let obj = listed[0].as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["attempts", "id", "trained"]);
}

#[test]
fn state_survives_restart() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    let probe = events(&ds.samples_at(3)[15].vector);
    let before = {
        let svc = Service::open(ServiceConfig::default(), Store::open(dir.path()).unwrap()).unwrap();
        let server = BackgroundServer::start(Arc::new(svc), local()).unwrap();
        for (i, s) in ds.samples_at(3).iter().take(12).enumerate() {
            post(
                &server,
                "/api/users/dave/enroll",
                json!({"nonce": i.to_string(), "events": events(&s.vector)}),
            );
        }
        post(&server, "/api/users/dave/train", json!({"detector": "zscore"}));
        let (_, body) = post(&server, "/api/users/dave/verify", json!({"events": probe}));
        server.shutdown().unwrap();
        body
    };
    let svc = Service::open(ServiceConfig::default(), Store::open(dir.path()).unwrap()).unwrap();
    let server = BackgroundServer::start(Arc::new(svc), local()).unwrap();
    let (_, after) = post(&server, "/api/users/dave/verify", json!({"events": probe}));
    assert_eq!(before, after);
    assert_eq!(after["detector"], "zscore");
}

#[test]
fn occupied_port_is_an_error() {
    let first = BackgroundServer::start(Arc::new(Service::in_memory(ServiceConfig::default())), local()).unwrap();
    let second = BackgroundServer::start(Arc::new(Service::in_memory(ServiceConfig::default())), first.addr());
    assert!(second.is_err());
}
