#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use adaptids::client::Client;
use adaptids::{serve_on, AppState};
use adaptids_core::heads::{Detector, HeadType, OpenSetConfig};
use adaptids_core::ingest::{encode_tensor, generate_synthetic, LabeledFlow, SyntheticProfile};
use adaptids_core::lifecycle::{BenignMode, Lifecycle, LifecycleConfig, RetrainSettings};
use adaptids_core::neural::TrainConfig;
use serde_json::{json, Value};

pub const KNOWN: [&str; 3] = ["DoS-Hulk", "FTP-Patator", "PortScan"];
pub const NOVEL: &str = "SSH-Patator";

pub fn pool(names: &[&str]) -> Vec<SyntheticProfile> {
    let all = SyntheticProfile::desk_pool();
    names
        .iter()
        .map(|n| all.iter().find(|p| p.class_name == *n).unwrap().clone())
        .collect()
}

pub fn flows(names: &[&str], per_class: usize, seed: u64) -> Vec<LabeledFlow> {
    generate_synthetic(&pool(names), per_class, seed).unwrap()
}

pub fn settings(learning_rate: Option<f32>) -> RetrainSettings {
    let mut train = TrainConfig::default();
    if let Some(lr) = learning_rate {
        train.learning_rate = lr;
    }
    RetrainSettings {
        train,
        open_set: OpenSetConfig::default(),
        posttrain: None,
    }
}

/// An OpenMax lifecycle over the three known classes, clustering at
/// `threshold` buffered unknowns.
pub fn lifecycle(dir: &std::path::Path, threshold: usize, settings: RetrainSettings) -> Lifecycle {
    let base = flows(&KNOWN, 400, 3);
    let names: Vec<String> = KNOWN.iter().map(|s| s.to_string()).collect();
    let mut d = Detector::untrained(names, HeadType::OpenMax, &settings.open_set, 0).unwrap();
    d.train(&base, &settings.train).unwrap();
    let cfg = LifecycleConfig {
        trigger_threshold: threshold,
        ..Default::default()
    };
    Lifecycle::bootstrap(dir, d, &base, cfg, settings, BenignMode::new(false, "BENIGN")).unwrap()
}

pub struct Server {
    pub url: String,
    pub state: Arc<AppState>,
    stop: Option<mpsc::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(lifecycle: Lifecycle, token: Option<&str>) -> Self {
        let state = Arc::new(AppState {
            lifecycle: Arc::new(lifecycle),
            token: token.map(String::from),
            report_dir: None,
        });
        Self::start_with(state)
    }

    pub fn start_with(state: Arc<AppState>) -> Self {
        let (stop, rx) = mpsc::channel::<()>();
        let (addr_tx, addr_rx) = mpsc::channel::<SocketAddr>();
        let s = state.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let shutdown = async move {
                    let _ = tokio::task::spawn_blocking(move || rx.recv()).await;
                };
                serve_on(listener, s, shutdown).await.unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Server {
            url: format!("http://{addr}"),
            state,
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn client(&self, token: Option<&str>) -> Client {
        Client::new(&self.url, token.map(String::from))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        drop(self.stop.take());
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn flow_batch(flows: &[LabeledFlow]) -> Value {
    let items: Vec<Value> = flows
        .iter()
        .map(|f| json!({ "id": f.id, "tensor": encode_tensor(&f.tensor), "key": f.key.to_string() }))
        .collect();
    json!({ "flows": items })
}

/// Labels the service assigned to `flows`, `None` for rejections.
pub fn verdict_labels(client: &Client, flows: &[LabeledFlow]) -> Vec<Option<String>> {
    let out = client.post("/flows", Some(&flow_batch(flows))).unwrap();
    out["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["label"].as_str().map(String::from))
        .collect()
}

/// Reopens a lifecycle created by [`lifecycle`] with other retrain settings.
pub fn reopen(dir: &std::path::Path, threshold: usize, settings: RetrainSettings) -> Lifecycle {
    let cfg = LifecycleConfig {
        trigger_threshold: threshold,
        ..Default::default()
    };
    Lifecycle::open(dir, cfg, settings, BenignMode::new(false, "BENIGN")).unwrap()
}
