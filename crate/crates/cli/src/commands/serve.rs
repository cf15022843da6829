use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use softcrowd_core::worker_quality::QualityPolicy;
use softcrowd_service::store::POLICY_FILE;
use softcrowd_service::{router, Service, ServiceConfig};

use crate::config::{default_version, versioned};
use crate::error::{CliError, Result};
use crate::io;
use crate::run_manifest::Outcome;

/// Service options shared by `serve`, `simulate` and `review`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSettings {
    /// When absent: the policy pinned in the data directory, else the default.
    pub policy: Option<QualityPolicy>,
    /// Snapshot after this many log entries; 0 disables snapshots.
    pub snapshot_every: u64,
    /// fsync each append before acknowledging.
    pub sync: bool,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        let base = ServiceConfig::default();
        Self { policy: None, snapshot_every: base.snapshot_every, sync: base.sync }
    }
}

impl ServiceSettings {
    pub fn resolve(&self, data_dir: &Path) -> Result<ServiceConfig> {
        let pinned = data_dir.join(POLICY_FILE);
        let policy = match self.policy {
            Some(p) => p,
            None if pinned.exists() => io::read_json(&pinned)?,
            None => QualityPolicy::default(),
        };
        policy.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        Ok(ServiceConfig {
            data_dir: data_dir.to_path_buf(),
            policy,
            snapshot_every: self.snapshot_every,
            sync: self.sync,
        })
    }

    pub fn open(&self, data_dir: &Path) -> Result<Service> {
        io::create_dir(data_dir)?;
        Ok(Service::open(self.resolve(data_dir)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub version: u32,
    #[serde(default)]
    pub service: ServiceSettings,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { version: default_version(), service: ServiceSettings::default() }
    }
}

versioned!(ServeConfig);

/// Serves until Ctrl-C.
pub fn run(cfg: &ServeConfig, data_dir: &Path, addr: &str, assets: Option<&Path>) -> Result<Outcome> {
    let service = Arc::new(cfg.service.open(data_dir)?);
    let app = router(service.clone(), assets.map(Path::to_path_buf));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Invariant(format!("tokio runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Usage(e.to_string()))?;
        eprintln!("softcrowd: serving {} on http://{local}", data_dir.display());
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Service { code: "ServeFailed".into(), message: e.to_string() })
    })?;
    service.snapshot_now()?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    inputs.extend(assets.map(Path::to_path_buf));
    Ok(Outcome {
        config: serde_json::json!({ "config": cfg, "addr": addr }),
        seed: None,
        inputs,
        outputs: vec![softcrowd_service::store::LOG_FILE.into(), softcrowd_service::store::SNAPSHOT_FILE.into()],
        ..Outcome::default()
    })
}
