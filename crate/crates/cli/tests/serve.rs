mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{fixture, pacc, trained_checkpoint, Fixture};
use pacc::data::load_expression;
use pacc::train::Checkpoint;
use pacc_cli::query::{PredictRequest, Predictor};
use pacc_cli::serve::router;

struct Service {
    f: Fixture,
    ckpt: std::path::PathBuf,
    predictor: Arc<Predictor>,
}

fn service() -> Service {
    let f = fixture(12, 10, 24, 11);
    let ckpt = trained_checkpoint(&f, &[]);
    let expr = load_expression(std::io::BufReader::new(std::fs::File::open(&f.expression).unwrap())).unwrap();
    let predictor = Arc::new(Predictor::new(Checkpoint::load(&ckpt).unwrap(), &expr).unwrap());
    Service { f, ckpt, predictor }
}

async fn post(predictor: &Arc<Predictor>, body: &str, content_type: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::post("/v1/predict");
    if let Some(ct) = content_type {
        req = req.header(header::CONTENT_TYPE, ct);
    }
    let resp = router(predictor.clone()).oneshot(req.body(Body::from(body.to_string())).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post_json(predictor: &Arc<Predictor>, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = post(predictor, &body.to_string(), Some("application/json")).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn endpoint_matches_cli_query_bytes() {
    let s = service();
    let out = s.f.out("q");
    let args = [
        "predict", "--checkpoint", &Fixture::s(&s.ckpt), "--expression", &Fixture::s(&s.f.expression), "--query", "c1ccc2ccccc2c1",
        "--cell-id", "C01", "--top-k-genes", "5", "--out", &Fixture::s(&out),
    ];
    assert_eq!(pacc(&args), 0);
    let cli = std::fs::read(out.join("prediction.json")).unwrap();
    let (status, body) = post(&s.predictor, r#"{"smiles":"c1ccc2ccccc2c1","cell_id":"C01","top_k_genes":5}"#, Some("application/json")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, cli);
}

#[tokio::test]
async fn error_statuses() {
    let s = service();
    let p = &s.predictor;
    let (status, body) = post_json(p, json!({"smiles": "C1CC", "cell_id": "C00"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["detail"].as_str().unwrap().contains("UnclosedRingBond"), "{body}");

    let (status, _) = post_json(p, json!({"smiles": "CCO", "cell_id": "C99"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post_json(p, json!({"smiles": "CCO", "expression": [1.0, 2.0]})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = post_json(p, json!({"smiles": "CCO", "cell_id": "C00", "expression": vec![0.0; 24]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json(p, json!({"smiles": "CCO"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json(p, json!({"smiles": "CCO", "cell_id": "C00", "colour": 1})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(p, "{not json", Some("application/json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(p, r#"{"smiles":"CCO","cell_id":"C00"}"#, Some("text/plain")).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let (status, _) = post(p, r#"{"smiles":"CCO","cell_id":"C00"}"#, None).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let long = "C".repeat(500);
    let (status, _) = post_json(p, json!({"smiles": long, "cell_id": "C00"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn full_gene_attention_and_tokens() {
    let s = service();
    let (status, body) = post_json(&s.predictor, json!({"smiles": "OC(=O)c1ccncc1", "cell_id": "C02", "top_k_genes": 24})).await;
    assert_eq!(status, StatusCode::OK);
    let genes = body["gene_attention"].as_array().unwrap();
    assert_eq!(genes.len(), 24);
    let total: f64 = genes.iter().map(|g| g["weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
    assert!(genes.windows(2).all(|w| w[0]["weight"].as_f64() >= w[1]["weight"].as_f64()));
    let tokens = body["token_attention"].as_array().unwrap();
    let joined: String = tokens.iter().map(|t| t["name"].as_str().unwrap()).collect();
    let canonical = pacc::chem::canonical_form(&pacc::chem::parse_smiles("OC(=O)c1ccncc1").unwrap());
    assert_eq!(joined, canonical);
    let mass: f64 = tokens.iter().map(|t| t["weight"].as_f64().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-5);

    // explicit expression equal to a known cell's values gives the same answer
    let expr = load_expression(std::io::BufReader::new(std::fs::File::open(&s.f.expression).unwrap())).unwrap();
    let cells = expr.restrict(&s.predictor.checkpoint().panel).unwrap();
    let values = cells.iter().find(|c| c.id == "C02").unwrap().expression.clone();
    let (_, explicit) = post_json(&s.predictor, json!({"smiles": "OC(=O)c1ccncc1", "expression": values, "top_k_genes": 24})).await;
    assert_eq!(explicit, body);
}

#[tokio::test]
async fn health_reports_checkpoint_hash() {
    let s = service();
    let resp = router(s.predictor.clone()).oneshot(Request::get("/v1/health").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["checkpoint"], Checkpoint::load(&s.ckpt).unwrap().hash());
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let s = service();
    let req = r#"{"smiles":"CC(=O)Nc1ccc(O)cc1","cell_id":"C04"}"#;
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let p = s.predictor.clone();
            tokio::spawn(async move { post(&p, req, Some("application/json")).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (status, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    let direct = s.predictor.predict(&serde_json::from_str::<PredictRequest>(req).unwrap()).unwrap();
    assert_eq!(serde_json::to_vec(&direct).unwrap(), bodies[0]);
}
