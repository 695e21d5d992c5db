//! Service layer: HTTP API, startup wiring and the analyst client.

pub mod api;
pub mod client;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use adaptids_core::experiment::RunConfig;
use adaptids_core::heads::Detector;
use adaptids_core::ingest::{flows_from_capture, load_manifest, LabeledFlow};
use adaptids_core::lifecycle::{BenignMode, Lifecycle, RetrainSettings};
use adaptids_core::{Error, Result};
use tokio::net::TcpListener;

pub use api::{router, AppState};

/// Flows idle longer than this many seconds are closed during reassembly.
pub const IDLE_TIMEOUT_SECS: f64 = 60.0;

pub fn retrain_settings(cfg: &RunConfig) -> RetrainSettings {
    RetrainSettings {
        train: cfg.train.clone(),
        open_set: cfg.open_set.clone(),
        posttrain: cfg.posttrain_enabled.then(|| cfg.posttrain.clone()),
    }
}

pub fn benign_mode(cfg: &RunConfig) -> BenignMode {
    BenignMode::new(cfg.include_benign, &cfg.benign_label)
}

/// A checkpoint and its training manifest, used to seed an empty state dir.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
}

/// Opens the lifecycle under the configured state dir, seeding it from
/// `bootstrap` when given.
pub fn open_lifecycle(cfg: &RunConfig, bootstrap: Option<&Bootstrap>) -> Result<Lifecycle> {
    let dir = &cfg.serve.state_dir;
    let settings = retrain_settings(cfg);
    match bootstrap {
        Some(b) => {
            let detector = Detector::load(&b.checkpoint)?;
            let training = load_manifest(&b.manifest, None)?;
            Lifecycle::bootstrap(dir, detector, &training, cfg.lifecycle.clone(), settings, benign_mode(cfg))
        }
        None => Lifecycle::open(dir, cfg.lifecycle.clone(), settings, benign_mode(cfg)),
    }
}

/// Flows of a capture (`.pcap`) or a manifest; labels are ignored by callers
/// that only score.
pub fn load_flows(path: &Path) -> Result<Vec<LabeledFlow>> {
    if path.extension().is_some_and(|e| e == "pcap") {
        Ok(flows_from_capture(path, "UNLABELED", IDLE_TIMEOUT_SECS)?.0)
    } else {
        load_manifest(path, None)
    }
}

/// Scores every flow of `path` through the lifecycle.
pub fn replay(lifecycle: &Lifecycle, path: &Path) -> Result<usize> {
    let flows = load_flows(path)?;
    let n = flows.len();
    for f in flows {
        lifecycle.observe(f.into())?;
    }
    tracing::info!(flows = n, file = %path.display(), "replayed");
    Ok(n)
}

/// Serves the API on an already bound listener until `shutdown` resolves.
pub async fn serve_on<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Opens the lifecycle, replays the configured input, binds and serves
/// until ctrl-c.
pub async fn serve(cfg: RunConfig, bootstrap: Option<Bootstrap>) -> anyhow::Result<()> {
    let c = cfg.clone();
    let lifecycle = tokio::task::spawn_blocking(move || -> Result<Lifecycle> {
        let l = open_lifecycle(&c, bootstrap.as_ref())?;
        if let Some(p) = &c.serve.replay {
            replay(&l, p)?;
        }
        Ok(l)
    })
    .await??;
    let listener = TcpListener::bind(&cfg.serve.bind)
        .await
        .map_err(|e| Error::Config(format!("cannot bind {}: {e}", cfg.serve.bind)))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let state = Arc::new(AppState {
        lifecycle: Arc::new(lifecycle),
        token: cfg.serve.token.clone(),
        report_dir: cfg.serve.report_dir.clone(),
    });
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
