use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::StreamExt;
use nirs_service::{SessionManager, SCHEMA_JSON};
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Server {
    addr: SocketAddr,
    client: reqwest::Client,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn start(sessions_dir: &Path) -> Server {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel();
        let manager = Arc::new(SessionManager::new());
        let dir = sessions_dir.to_path_buf();
        let task = tokio::spawn(async move {
            nirs_service::serve(listener, manager, dir, async {
                rx.await.ok();
            })
            .await
            .unwrap();
        });
        Server { addr, client: reqwest::Client::new(), shutdown: Some(tx), task }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let code = resp.status().as_u16();
        (code, resp.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> Value {
        self.client.get(self.url(path)).send().await.unwrap().json().await.unwrap()
    }

    async fn stop(mut self) {
        let resp = self.client.delete(self.url("/session")).send().await.unwrap();
        assert!(resp.status().is_success() || resp.status().as_u16() == 404);
        self.shutdown.take().unwrap().send(()).ok();
        tokio::time::timeout(Duration::from_secs(10), self.task).await.ok();
    }
}

/// Reads newline-delimited records from `/stream` for `window`.
async fn collect_stream(server: &Server, window: Duration) -> Vec<Value> {
    let resp = server.client.get(server.url("/stream")).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut body = resp.bytes_stream();
    let mut buf = Vec::new();
    let deadline = tokio::time::Instant::now() + window;
    while let Ok(Some(chunk)) = tokio::time::timeout_at(deadline, body.next()).await {
        buf.extend_from_slice(&chunk.unwrap());
    }
    let text = String::from_utf8(buf).unwrap();
    text.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn live_stream_carries_raw_processed_and_status_records() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path()).await;
    let (code, started) = server.post("/session", json!({"source": "sim"})).await;
    assert_eq!(code, 200, "{started}");
    assert_eq!(started["session_id"], 1);

    let records = collect_stream(&server, Duration::from_secs(5)).await;
    let validator = jsonschema::validator_for(&serde_json::from_str(SCHEMA_JSON).unwrap()).unwrap();
    let mut by_type: HashMap<String, Vec<&Value>> = HashMap::new();
    for r in &records {
        assert!(validator.is_valid(r), "record fails schema: {r}");
        by_type.entry(r["type"].as_str().unwrap().to_string()).or_default().push(r);
    }
    let count = |t: &str| by_type.get(t).map_or(0, Vec::len);
    assert!(count("processed") >= 9, "processed records: {}", count("processed"));
    assert!(count("status") >= 4, "status records: {}", count("status"));
    assert!(count("raw") >= 100 && count("raw") <= 5 * 50 + 5, "raw records: {}", count("raw"));
    assert_eq!(count("lag"), 0);
    for (kind, list) in &by_type {
        let times: Vec<f64> = list.iter().map(|r| r["t_s"].as_f64().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[1] >= w[0]), "{kind} times go backwards");
    }
    let last = by_type["processed"].last().unwrap();
    assert_eq!(last["channels"].as_array().unwrap().len(), 24);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn control_round_trip_updates_device_status() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path()).await;
    let (code, _) = server.post("/control", json!({"status_req": {}})).await;
    assert_eq!(code, 404);
    server.post("/session", json!({"source": "sim"})).await;

    let (code, ack) =
        server.post("/control", json!({"set_emitter": {"group": 0, "wavelength_nm": 940, "duty": 2048}})).await;
    assert_eq!(code, 200);
    assert!(validator_accepts(&ack), "{ack}");
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["status"], "ok");
    let acked = Instant::now();
    let status = server.get("/status").await;
    assert!(acked.elapsed() < Duration::from_millis(200));
    assert_eq!(status["session"]["device"]["emitters"][0][1]["duty"], 2048);

    let (code, nack) = server.post("/control", json!({"set_emitter": {"freq_hz": 2000}})).await;
    assert_eq!(code, 200);
    assert_eq!(nack["status"], "bad_param");
    let status = server.get("/status").await;
    assert_eq!(status["session"]["device"]["emitters"][0][1]["freq_hz"], 1000);

    let (code, err) = server.post("/control", json!({"mux_override": {"group": 9, "channel": 0}})).await;
    assert_eq!(code, 400);
    assert!(err["error"].as_str().unwrap().contains("group 9"));
    let (code, _) = server.post("/control", json!({"reboot": {}})).await;
    assert_eq!(code, 400);

    let (code, ack) = server.post("/control", json!({"mux_override": {"group": 3, "channel": 2}})).await;
    assert_eq!((code, ack["status"].as_str()), (200, Some("ok")));
    assert_eq!(server.get("/status").await["session"]["device"]["mux_override"][3], 2);
    server.stop().await;
}

fn validator_accepts(value: &Value) -> bool {
    jsonschema::validator_for(&serde_json::from_str(SCHEMA_JSON).unwrap()).unwrap().is_valid(value)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn status_annotate_and_session_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path()).await;
    let idle = server.get("/status").await;
    assert_eq!(idle["schema_version"], 1);
    assert_eq!(idle["session"], Value::Null);
    let (code, _) = server.post("/annotate", json!({"label": "task", "t_s": 1.0})).await;
    assert_eq!(code, 404);

    server.post("/session", json!({"source": "sim"})).await;
    let (code, _) = server.post("/session", json!({"source": "sim"})).await;
    assert_eq!(code, 409);
    let (code, markers) = server.post("/annotate", json!({"label": "probe-a", "t_s": 2.0})).await;
    assert_eq!(code, 200);
    let (code, _) = server.post("/annotate", json!({"label": "probe-b", "t_s": 1.0})).await;
    assert_eq!(code, 200);
    assert!(markers["markers"].as_array().unwrap().iter().any(|m| m["label"] == "probe-a"));
    let (code, _) = server.post("/annotate", json!({"label": "bad", "t_s": -1.0})).await;
    assert_eq!(code, 400);

    let status = server.get("/status").await;
    let session = &status["session"];
    let mut record = session.clone();
    record["type"] = json!("status");
    assert!(validator_accepts(&record), "{record}");
    assert_eq!(session["state"], "streaming");
    assert_eq!(session["source"], "sim");
    let markers = session["markers"].as_array().unwrap();
    let times: Vec<f64> = markers.iter().map(|m| m["t_s"].as_f64().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]));
    let probes: Vec<&str> =
        markers.iter().filter_map(|m| m["label"].as_str()).filter(|l| l.starts_with("probe")).collect();
    assert_eq!(probes, ["probe-b", "probe-a"]);
    assert!(status["pipeline"].is_object());

    let schema: Value = server.client.get(server.url("/schema")).send().await.unwrap().json().await.unwrap();
    assert_eq!(schema["x-schema-version"], 1);

    tokio::time::sleep(Duration::from_millis(1500)).await;
    let resp = server.client.delete(server.url("/session")).send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let stopped: Value = resp.json().await.unwrap();
    assert_eq!(stopped["error"], Value::Null);
    assert!(stopped["frames_recorded"].as_u64().unwrap() > 1000);
    let session_dir = Path::new(stopped["dir"].as_str().unwrap());
    assert!(session_dir.starts_with(dir.path()));
    let markers_csv = std::fs::read_to_string(session_dir.join("markers.csv")).unwrap();
    assert!(markers_csv.contains("probe-a") && markers_csv.contains("probe-b"));
    assert_eq!(server.get("/status").await["session"]["state"], "stopped");

    let (code, _) = server.post("/session", json!({"source": "replay", "path": "/nonexistent/raw.bin"})).await;
    assert_eq!(code, 422);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn unread_stream_does_not_hold_back_recording() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path()).await;
    let resp = server.client.get(server.url("/stream")).send().await.unwrap();
    let (code, _) = server.post("/session", json!({"source": "sim", "speed": 0.0, "duration_s": 60.0})).await;
    assert_eq!(code, 200);

    let mut last = Value::Null;
    for _ in 0..600 {
        tokio::time::sleep(Duration::from_millis(100)).await;
        last = server.get("/status").await;
        if last["session"]["state"] == "stopped" {
            break;
        }
    }
    assert_eq!(last["session"]["state"], "stopped");
    assert_eq!(last["session"]["frames_recorded"], 60_000);

    drop(resp);
    server.stop().await;
}
