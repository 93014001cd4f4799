use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use sentifuse_annotation::http::{router, AppState};
use sentifuse_annotation::CampaignStore;
use sentifuse_core::dataset::{
    write_dataset, ClassSet, Dataset, DatasetId, FeatureRecord, Scene, SUN_DIM,
};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(image_dir: Option<std::path::PathBuf>, data_dir: Option<std::path::PathBuf>) -> Router {
    router(Arc::new(AppState {
        store: CampaignStore::in_memory(),
        image_dir,
        data_dir,
    }))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap()
            .to_vec(),
    )
}

async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn image_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("photo{i:02}")).collect()
}

fn grades(items: &Value, grade: i64) -> Vec<Value> {
    items
        .as_array()
        .unwrap()
        .iter()
        .map(|it| json!({"image_id": it["image_id"], "grade": grade}))
        .collect()
}

#[tokio::test]
async fn full_block_round_trip() {
    let app = app(None, None);
    let (s, body) = call_json(
        &app,
        "POST",
        "/campaigns",
        Some(json!({"campaign_id": "c1", "image_ids": image_ids(30), "seed": 3})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(body["forms_total"], 10);

    let (s, block) = call_json(&app, "GET", "/campaigns/c1/next-block?volunteer=ana", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(block["status"], "form");
    let items = &block["items"];
    assert_eq!(items.as_array().unwrap().len(), 15);
    let first = items[0]["image_id"].as_str().unwrap();
    assert_eq!(items[0]["url"], format!("/images/{first}"));
    let form = block["form_id"].as_str().unwrap().to_string();
    let uri = format!("/forms/{form}/grades");

    let mut partial = grades(items, 3);
    partial.pop();
    let (s, err) = call_json(
        &app,
        "POST",
        &uri,
        Some(json!({"volunteer_id": "ana", "grades": partial})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "incomplete_block");

    let mut out_of_range = grades(items, 3);
    out_of_range[0]["grade"] = json!(6);
    let (s, err) = call_json(
        &app,
        "POST",
        &uri,
        Some(json!({"volunteer_id": "ana", "grades": out_of_range})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "grade_out_of_range");

    let (s, err) = call_json(
        &app,
        "POST",
        &uri,
        Some(json!({"volunteer_id": "bo", "grades": grades(items, 3)})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "lease_mismatch");

    let (s, ok) = call_json(
        &app,
        "POST",
        &uri,
        Some(json!({"volunteer_id": "ana", "grades": grades(items, 5)})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ok["grades"], 15);

    let (s, err) = call_json(
        &app,
        "POST",
        &uri,
        Some(json!({"volunteer_id": "ana", "grades": grades(items, 5)})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "already_submitted");

    let (s, status) = call_json(&app, "GET", "/campaigns/c1/status", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(status["submitted"], 1);

    let (s, export) = call_json(&app, "GET", "/campaigns/c1/export", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(export["grades"].as_array().unwrap().len(), 15);
    assert_eq!(export["complete"], false);
    assert_eq!(export["grades"][0]["volunteer_id"], "ana");

    let (s, csv) = call(&app, "GET", "/campaigns/c1/export?format=csv", None).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("image_id,volunteer_id,grade,form_id\n"));
    assert_eq!(text.lines().count(), 16);
    let parsed = sentifuse_core::dataset::read_grades_csv(text.as_bytes()).unwrap();
    assert!(parsed.iter().all(|g| g.grade == 5));
}

#[tokio::test]
async fn request_errors() {
    let app = app(None, None);
    let (s, err) = call_json(&app, "GET", "/campaigns/none/status", None).await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::NOT_FOUND, Some("unknown_campaign"))
    );

    let (s, err) = call_json(
        &app,
        "POST",
        "/campaigns",
        Some(json!({"campaign_id": "small", "image_ids": image_ids(5)})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "block_larger_than_campaign");

    let (s, err) = call_json(
        &app,
        "POST",
        "/campaigns",
        Some(json!({"campaign_id": "x"})),
    )
    .await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::BAD_REQUEST, Some("invalid_request"))
    );

    let (s, _) = call_json(
        &app,
        "POST",
        "/campaigns",
        Some(json!({"campaign_id": "c", "image_ids": image_ids(15), "min_raters": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, err) = call_json(&app, "GET", "/campaigns/c/next-block", None).await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::BAD_REQUEST, Some("invalid_volunteer"))
    );

    let (s, err) = call_json(
        &app,
        "POST",
        "/forms/missing/grades",
        Some(json!({"volunteer_id": "a", "grades": []})),
    )
    .await;
    assert_eq!(
        (s, err["error"].as_str()),
        (StatusCode::NOT_FOUND, Some("unknown_form"))
    );

    let (_, block) = call_json(&app, "GET", "/campaigns/c/next-block?volunteer=a", None).await;
    let uri = format!("/forms/{}/grades", block["form_id"].as_str().unwrap());
    call_json(
        &app,
        "POST",
        &uri,
        Some(json!({"volunteer_id": "a", "grades": grades(&block["items"], 2)})),
    )
    .await;
    let (s, done) = call_json(&app, "GET", "/campaigns/c/next-block?volunteer=b", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        done,
        json!({"status": "complete", "reason": "campaign_complete"})
    );
}

#[tokio::test]
async fn campaign_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<FeatureRecord> = image_ids(15)
        .into_iter()
        .map(|id| FeatureRecord {
            image_id: id,
            deep: vec![0.0; 2],
            sun: vec![0.0; SUN_DIM],
            yolo: Default::default(),
            geo: None,
            label: None,
            dataset_id: DatasetId::Custom,
            scene: Scene::Outdoor,
        })
        .collect();
    let ds = Dataset::new(DatasetId::Custom, ClassSet::Ternary, 2, records);
    write_dataset(dir.path().join("pool.toml"), &ds).unwrap();
    let app = app(None, Some(dir.path().to_path_buf()));
    let (s, body) = call_json(
        &app,
        "POST",
        "/campaigns",
        Some(json!({"campaign_id": "m", "manifest": "pool.toml"})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    assert_eq!(body["images_total"], 15);
    assert_eq!(body["forms_total"], 5);

    let (s, err) = call_json(
        &app,
        "POST",
        "/campaigns",
        Some(json!({"campaign_id": "m2", "manifest": "absent.toml"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "invalid_manifest");
}

#[tokio::test]
async fn static_images() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    std::fs::create_dir(&images).unwrap();
    std::fs::write(images.join("photo01.jpg"), b"\xff\xd8jpeg").unwrap();
    std::fs::write(dir.path().join("secret.txt"), b"hidden").unwrap();
    let app = app(Some(images), None);

    let req = Request::builder()
        .uri("/images/photo01")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/jpeg");
    assert_eq!(
        &to_bytes(resp.into_body(), 1024).await.unwrap()[..],
        b"\xff\xd8jpeg"
    );

    let (s, _) = call(&app, "GET", "/images/photo01.jpg", None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&app, "GET", "/images/photo02", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    for uri in [
        "/images/..%2Fsecret.txt",
        "/images/%2E%2E",
        "/images/.hidden",
    ] {
        let (s, body) = call(&app, "GET", uri, None).await;
        assert_ne!(s, StatusCode::OK, "{uri}");
        assert_ne!(body, b"hidden");
    }
}
