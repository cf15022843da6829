use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use softcrowd_core::aggregation::read_count_table;
use softcrowd_core::label_model::{ItemRecord, Manifest};
use softcrowd_core::EmotionClass;
use softcrowd_service::{router, Service, ServiceConfig};
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    dir: TempDir,
    app: Router,
}

fn items(n: usize) -> Vec<ItemRecord> {
    (0..n)
        .map(|i| ItemRecord {
            item_id: format!("item-{i:03}"),
            subject_id: format!("s{}", i % 3),
            posed_emotion: EmotionClass::ALL[i % 7],
            image_path: format!("images/item-{i:03}.pgm"),
        })
        .collect()
}

fn harness() -> Harness {
    let dir = TempDir::new().unwrap();
    let cfg = ServiceConfig { sync: false, ..ServiceConfig::in_dir(dir.path()) };
    let svc = Arc::new(Service::open(cfg).unwrap());
    std::fs::create_dir_all(dir.path().join("assets")).unwrap();
    std::fs::write(dir.path().join("assets/x.pgm"), b"P5\n1 1\n255\n\x80").unwrap();
    let app = router(svc, Some(dir.path().join("assets")));
    Harness { dir, app }
}

impl Harness {
    fn write_manifest(&self, name: &str, items: Vec<ItemRecord>) {
        let manifest = Manifest::new(items).unwrap();
        let mut out = Vec::new();
        manifest.write_jsonl(&mut out).unwrap();
        std::fs::write(self.dir.path().join(name), out).unwrap();
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, b) = self.call(method, uri, body).await;
        (s, if b.is_empty() { Value::Null } else { serde_json::from_slice(&b).unwrap() })
    }

    async fn campaign(&self, manifest: &str, votes: u32, policy: &str) -> String {
        let (s, v) = self
            .json("POST", "/campaigns", Some(json!({"manifest_path": manifest, "votes_per_item": votes, "pool_policy": policy})))
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["campaign_id"].as_str().unwrap().to_string()
    }

    async fn worker(&self, id: &str, consent: bool) -> StatusCode {
        self.json("POST", "/workers", Some(json!({"worker_id": id, "consent": consent}))).await.0
    }

    async fn label(&self, c: &str, w: &str, item: &str, label: &str) -> (StatusCode, Value) {
        self.json("POST", &format!("/campaigns/{c}/labels"), Some(json!({"worker_id": w, "item_id": item, "label": label})))
            .await
    }
}

#[tokio::test]
async fn worker_registration_and_consent() {
    let h = harness();
    let (s, v) = h.json("POST", "/workers", Some(json!({"worker_id": "w1", "consent": true}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["pool"], "unfiltered");
    assert_eq!(h.worker("w1", true).await, StatusCode::CONFLICT);
    assert_eq!(h.worker("", true).await, StatusCode::BAD_REQUEST);
    assert_eq!(h.worker("w2", false).await, StatusCode::CREATED);
    h.write_manifest("m.jsonl", items(3));
    let c = h.campaign("m.jsonl", 2, "any").await;
    let (s, v) = h.json("GET", &format!("/campaigns/{c}/tasks/next?worker_id=w2"), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    assert_eq!(v["error"], "ConsentRequired");
    let (s, v) = h.label(&c, "w2", "item-000", "happy").await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::FORBIDDEN, Some("ConsentRequired")));
    let (s, v) = h.json("GET", "/workers/w1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["n_labels"], 0);
    assert_eq!(h.json("GET", "/workers/nobody", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn labeling_flow_and_status_codes() {
    let h = harness();
    h.write_manifest("m.jsonl", items(2));
    let c = h.campaign("m.jsonl", 1, "any").await;
    for w in ["a", "b", "c"] {
        h.worker(w, true).await;
    }
    let (s, v) = h.json("GET", &format!("/campaigns/{c}/tasks/next?worker_id=a"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["item_id"], "item-000");
    let (s, v) = h.label(&c, "a", "item-000", "happy").await;
    assert_eq!((s, v["event_id"].as_u64()), (StatusCode::CREATED, Some(1)));
    let (s, v) = h.label(&c, "a", "item-000", "sad").await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("DuplicateVote")));
    let (s, v) = h.label(&c, "b", "item-000", "sad").await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::GONE, Some("QuotaReached")));
    // least-voted item next
    let (_, v) = h.json("GET", &format!("/campaigns/{c}/tasks/next?worker_id=b"), None).await;
    assert_eq!(v["item_id"], "item-001");
    assert_eq!(h.label(&c, "b", "item-001", "fear").await.0, StatusCode::CREATED);
    assert_eq!(h.json("GET", &format!("/campaigns/{c}/tasks/next?worker_id=c"), None).await.0, StatusCode::NO_CONTENT);
    let (s, v) = h.label(&c, "a", "nope", "fear").await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownItem")));
    assert_eq!(h.label("c99", "a", "item-000", "fear").await.0, StatusCode::NOT_FOUND);
    let (s, _) = h
        .call("POST", &format!("/campaigns/{c}/labels"), Some(json!({"worker_id": "a", "item_id": "item-001", "label": "bored"})))
        .await;
    assert!(s.is_client_error());
    let (s, v) = h.json("GET", &format!("/campaigns/{c}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["n_complete"].as_u64(), v["n_votes"].as_u64()), (Some(2), Some(2)));
}

#[tokio::test]
async fn idempotency_key_returns_original_event() {
    let h = harness();
    h.write_manifest("m.jsonl", items(3));
    let c = h.campaign("m.jsonl", 5, "any").await;
    h.worker("a", true).await;
    let body = json!({"worker_id": "a", "item_id": "item-002", "label": "sad", "idempotency_key": "k1"});
    let (s1, v1) = h.json("POST", &format!("/campaigns/{c}/labels"), Some(body.clone())).await;
    let (s2, v2) = h.json("POST", &format!("/campaigns/{c}/labels"), Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::OK));
    assert_eq!(v1["event_id"], v2["event_id"]);
    let (_, d) = h.json("GET", &format!("/campaigns/{c}/items/item-002/distribution"), None).await;
    assert_eq!(d["counts"], json!([0, 0, 0, 0, 0, 1, 0]));
}

#[tokio::test]
async fn closed_campaign_and_pool_policy() {
    let h = harness();
    h.write_manifest("m.jsonl", items(2));
    let open = h.campaign("m.jsonl", 3, "any").await;
    let strict = h.campaign("m.jsonl", 3, "filtered_only").await;
    h.worker("a", true).await;
    let (s, v) = h.json("GET", &format!("/campaigns/{strict}/tasks/next?worker_id=a"), None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::FORBIDDEN, Some("PoolIneligible")));
    assert_eq!(h.json("POST", &format!("/campaigns/{open}/close"), None).await.0, StatusCode::OK);
    let (s, v) = h.label(&open, "a", "item-000", "anger").await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("CampaignClosed")));
    let (s, v) = h
        .json("POST", "/campaigns", Some(json!({"manifest_path": "missing.jsonl", "votes_per_item": 3, "pool_policy": "any"})))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, _) = h
        .json("POST", "/campaigns", Some(json!({"manifest_path": "m.jsonl", "votes_per_item": 0, "pool_policy": "any"})))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn filtered_distribution_reproduces_table_row() {
    let h = harness();
    let mut list = items(10);
    list.push(ItemRecord {
        item_id: "10526-happy_F-AA-15".into(),
        subject_id: "F-AA-15".into(),
        posed_emotion: EmotionClass::Happy,
        image_path: "images/10526-happy_F-AA-15.pgm".into(),
    });
    h.write_manifest("m.jsonl", list.clone());
    let c = h.campaign("m.jsonl", 100, "any").await;
    let (_, d) = h.json("GET", &format!("/campaigns/{c}/items/10526-happy_F-AA-15/distribution?pool=filtered"), None).await;
    assert_eq!(d["counts"], json!([0, 0, 0, 0, 0, 0, 0]));
    // 14 workers qualify through 10 accepted reviews each, plus 3 that never qualify
    for w in 0..17 {
        let id = format!("w{w}");
        h.worker(&id, true).await;
        for it in &list[..10] {
            assert_eq!(h.label(&c, &id, &it.item_id, it.posed_emotion.name()).await.0, StatusCode::CREATED);
            if w < 14 {
                let review = json!({"reviewer_id": "r", "worker_id": id, "item_id": it.item_id, "verdict": "accept"});
                assert_eq!(h.json("POST", "/reviews", Some(review)).await.0, StatusCode::CREATED);
            }
        }
        h.label(&c, &id, "10526-happy_F-AA-15", "happy").await;
    }
    let (_, v) = h.json("GET", "/workers/w0", None).await;
    assert_eq!((v["pool"].as_str(), v["accept_rate"].as_f64()), (Some("filtered"), Some(1.0)));
    let (_, d) = h.json("GET", &format!("/campaigns/{c}/items/10526-happy_F-AA-15/distribution?pool=filtered"), None).await;
    assert_eq!(d["counts"], json!([0, 0, 0, 14, 0, 0, 0]));
    let (_, d) = h.json("GET", &format!("/campaigns/{c}/items/10526-happy_F-AA-15/distribution?pool=all"), None).await;
    assert_eq!(d["counts"], json!([0, 0, 0, 17, 0, 0, 0]));
    let dup = json!({"reviewer_id": "r", "worker_id": "w0", "item_id": "item-000", "verdict": "reject"});
    assert_eq!(h.json("POST", "/reviews", Some(dup)).await.0, StatusCode::CONFLICT);
    let unknown = json!({"reviewer_id": "r", "worker_id": "w0", "item_id": "never", "verdict": "reject"});
    assert_eq!(h.json("POST", "/reviews", Some(unknown)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.json("GET", &format!("/campaigns/{c}/items/x/distribution?pool=bogus"), None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn export_round_trips_and_empty_export_is_header_only() {
    let h = harness();
    h.write_manifest("m.jsonl", items(4));
    let c = h.campaign("m.jsonl", 3, "any").await;
    let (s, body) = h.call("GET", &format!("/campaigns/{c}/export?pool=all"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(String::from_utf8(body).unwrap().trim(), "item_id,anger,disgust,fear,happy,neutral,sad,surprised");
    for (w, label) in [("a", "anger"), ("b", "fear"), ("c", "fear")] {
        h.worker(w, true).await;
        for it in items(4) {
            h.label(&c, w, &it.item_id, label).await;
        }
    }
    let (_, body) = h.call("GET", &format!("/campaigns/{c}/export"), None).await;
    let rows = read_count_table(body.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert_eq!(row.counts.counts(), &[1, 0, 2, 0, 0, 0, 0]);
        let (_, d) = h.json("GET", &format!("/campaigns/{c}/items/{}/distribution", row.item_id), None).await;
        assert_eq!(d["counts"], serde_json::to_value(row.counts).unwrap());
    }
    assert_eq!(h.call("GET", "/campaigns/nope/export", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_assets() {
    let h = harness();
    let (s, body) = h.call("GET", "/assets/x.pgm", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.starts_with(b"P5"));
    assert_eq!(h.call("GET", "/assets/none.pgm", None).await.0, StatusCode::NOT_FOUND);
}
