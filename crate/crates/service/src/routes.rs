use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use crate::error::{Result, ServiceError};
use crate::state::Service;
use crate::wire::{
    EnrollRequest, EnrollResponse, TrainRequest, TrainResponse, UserSummary, VerifyRequest, VerifyResponse,
};

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/users", get(list_users))
        .route("/api/users/{id}/enroll", post(enroll))
        .route("/api/users/{id}/train", post(train))
        .route("/api/users/{id}/verify", post(verify))
        .with_state(service)
}

// Bodies are parsed by hand so that every rejection uses the API's error shape.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(format!("bad JSON body: {e}")))
}

async fn list_users(State(svc): State<Arc<Service>>) -> Json<Vec<UserSummary>> {
    Json(svc.list_users())
}

async fn enroll(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Result<Json<EnrollResponse>> {
    let req: EnrollRequest = parse(&body)?;
    let attempts = svc.enroll(&id, &req.nonce, &req.events)?;
    log::info!("enroll {id}: {attempts} attempts");
    Ok(Json(EnrollResponse { attempts }))
}

async fn train(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Result<Json<TrainResponse>> {
    let req: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        parse(&body)?
    };
    let threshold = svc.train(&id, req.detector.as_deref())?;
    log::info!("train {id}: threshold {threshold}");
    Ok(Json(TrainResponse { threshold }))
}

async fn verify(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> Result<Json<VerifyResponse>> {
    let req: VerifyRequest = parse(&body)?;
    Ok(Json(svc.verify(&id, &req.events)?))
}
