//! Session service for the blinded rater study.
//!
//! Serves grading packets and images, accepts rubric scores, and relays
//! interactive chat to the model bound to each packet. Responses never name a
//! model: a middleware audits every non-image body and replaces offending
//! responses with a 500.

mod api;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use axum::Router;
use oculobench_core::cohort::CohortManifest;
use oculobench_core::endpoint::ChatEndpoint;
use oculobench_core::study::{AssignmentPlan, GradingPacket, Redactor};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

pub use api::{
    ApiError, AssignmentView, ChatReply, ChatRequestBody, PacketStatus, PacketView, Progress, QueueItem,
    ScoreSubmission,
};
pub use store::{ChatLog, ChatLogEntry, ChatRole, ScoreStore, StoreError};

pub const SCORES_FILE: &str = "scores.jsonl";
pub const CHAT_LOG_FILE: &str = "chat_log.jsonl";

/// `[server]` settings and per-rater bearer tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Rater id to static bearer token.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { bind: default_bind(), tokens: BTreeMap::new() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("rater `{0}` has no token")]
    MissingToken(String),
    #[error("token for `{0}` is shared with another rater")]
    SharedToken(String),
    #[error("packet `{0}` is in the plan but was not exported")]
    MissingPacket(String),
    #[error("model `{0}` has no chat endpoint")]
    MissingEndpoint(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything the service needs, assembled by the caller.
pub struct SessionInputs {
    pub plan: AssignmentPlan,
    pub packets: Vec<GradingPacket>,
    pub manifest: CohortManifest,
    /// Directory that manifest image paths are relative to.
    pub image_root: PathBuf,
    pub tokens: BTreeMap<String, String>,
    pub endpoints: BTreeMap<String, Arc<dyn ChatEndpoint>>,
    /// Holds the score store and chat log.
    pub data_dir: PathBuf,
}

pub struct AppState {
    pub(crate) plan: AssignmentPlan,
    pub(crate) packets: HashMap<String, GradingPacket>,
    pub(crate) manifest: CohortManifest,
    pub(crate) image_root: PathBuf,
    pub(crate) token_to_rater: HashMap<String, String>,
    pub(crate) endpoints: BTreeMap<String, Arc<dyn ChatEndpoint>>,
    pub(crate) redactor: Redactor,
    pub(crate) scores: Mutex<ScoreStore>,
    pub(crate) chat: Mutex<ChatLog>,
    pub(crate) sessions: StdMutex<HashMap<(String, String), Arc<Mutex<()>>>>,
}

impl AppState {
    pub fn new(inputs: SessionInputs) -> Result<Self, ServerError> {
        let mut token_to_rater = HashMap::new();
        for rater in &inputs.plan.public.raters {
            let token = inputs.tokens.get(rater).ok_or_else(|| ServerError::MissingToken(rater.clone()))?;
            if token_to_rater.insert(token.clone(), rater.clone()).is_some() {
                return Err(ServerError::SharedToken(rater.clone()));
            }
        }
        let packets: HashMap<String, GradingPacket> =
            inputs.packets.into_iter().map(|p| (p.packet_id.clone(), p)).collect();
        for id in inputs.plan.sealed.packets.keys() {
            if !packets.contains_key(id) {
                return Err(ServerError::MissingPacket(id.clone()));
            }
        }
        for m in inputs.plan.models() {
            if !inputs.endpoints.contains_key(m) {
                return Err(ServerError::MissingEndpoint(m.clone()));
            }
        }
        Ok(AppState {
            scores: Mutex::new(ScoreStore::open(inputs.data_dir.join(SCORES_FILE))?),
            chat: Mutex::new(ChatLog::open(inputs.data_dir.join(CHAT_LOG_FILE))?),
            redactor: Redactor::new(inputs.plan.models()),
            plan: inputs.plan,
            packets,
            manifest: inputs.manifest,
            image_root: inputs.image_root,
            token_to_rater,
            endpoints: inputs.endpoints,
            sessions: StdMutex::new(HashMap::new()),
        })
    }

    pub(crate) fn session_lock(&self, rater_id: &str, packet_id: &str) -> Arc<Mutex<()>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        Arc::clone(map.entry((rater_id.to_string(), packet_id.to_string())).or_default())
    }

    pub fn image_path(&self, image_id: &str) -> Option<PathBuf> {
        self.manifest.get(image_id).map(|r| self.image_root.join(&r.image_path))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    api::routes(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> Result<(), ServerError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr: addr.to_string(), source })?;
    let local: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(addr = ?local, "session service listening");
    axum::serve(listener, router(state))
        .await
        .map_err(|source| ServerError::Bind { addr: addr.to_string(), source })
}
