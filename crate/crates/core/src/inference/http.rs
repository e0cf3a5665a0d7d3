//! OpenAI-compatible chat-completions backend.
//!
//! POSTs `{endpoint}/chat/completions` with the system message and a user
//! message whose content is one text part followed by one base64 `image_url`
//! part per planned frame, in timestamp order. The completion text is read
//! from the first choice's message content.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::protocol::FRAME_PLACEHOLDER;
use crate::sampling::FramePlan;

use super::{Backend, CallFailure, FrameSource, InferenceRequest};

pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model_name: String,
    api_key: Option<String>,
    // extractor invocations already completed, keyed by output directory
    extracted: Mutex<HashSet<PathBuf>>,
}

impl HttpChatBackend {
    pub fn new(
        endpoint: String,
        model_name: String,
        api_key: Option<String>,
        timeout_s: f64,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout_s))
            .build()
            .map_err(|e| Error::Backend(format!("cannot build http client: {e}")))?;
        Ok(HttpChatBackend {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model_name,
            api_key,
            extracted: Mutex::new(HashSet::new()),
        })
    }

    fn frame_parts(&self, request: &InferenceRequest) -> std::result::Result<Vec<Value>, CallFailure> {
        let root = match &request.frame_source {
            FrameSource::None => return Ok(Vec::new()),
            FrameSource::ExtractedDir(root) => root.clone(),
            FrameSource::ExternalCommand { template, video_source, out_root } => {
                self.materialize(template, video_source, &request.frame_plan, out_root)?;
                out_root.clone()
            }
        };
        let dir = root.join(&request.frame_plan.video_id);
        let mut parts = Vec::with_capacity(request.frame_plan.frame_count());
        for rank in 0..request.frame_plan.frame_count() {
            let path = dir.join(format!("{rank:04}.jpg"));
            let bytes = std::fs::read(&path).map_err(|_| {
                CallFailure::permanent(format!("frame_source_missing: {}", path.display()))
            })?;
            let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
            parts.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/jpeg;base64,{encoded}")}
            }));
        }
        Ok(parts)
    }

    // Run the user's extractor once per (out_root, video); concurrent
    // requests for the same video wait rather than race the same files.
    fn materialize(
        &self,
        template: &str,
        video_source: &str,
        plan: &FramePlan,
        out_root: &Path,
    ) -> std::result::Result<(), CallFailure> {
        let outdir = out_root.join(&plan.video_id);
        let mut done = self.extracted.lock().expect("extraction mutex");
        if done.contains(&outdir) {
            return Ok(());
        }
        let last = outdir.join(format!("{:04}.jpg", plan.frame_count().saturating_sub(1)));
        if !last.exists() {
            std::fs::create_dir_all(&outdir)
                .map_err(|e| CallFailure::permanent(format!("extractor_outdir: {e}")))?;
            let timestamps = plan
                .timestamps_s
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",");
            let cmd = template
                .replace("{source}", video_source)
                .replace("{timestamps}", &timestamps)
                .replace("{outdir}", &outdir.to_string_lossy());
            let status = Command::new("sh")
                .arg("-c")
                .arg(&cmd)
                .status()
                .map_err(|e| CallFailure::permanent(format!("extractor_spawn: {e}")))?;
            if !status.success() {
                return Err(CallFailure::permanent(format!(
                    "extractor_failed: exit {status} for {}",
                    plan.video_id
                )));
            }
        }
        done.insert(outdir);
        Ok(())
    }
}

// The prompt template carries the frame placeholder on its own line; frames
// travel as separate message parts, so the line is dropped from the text part.
fn strip_placeholder(user: &str) -> String {
    let with_newline = format!("{FRAME_PLACEHOLDER}\n");
    if user.contains(&with_newline) {
        user.replacen(&with_newline, "", 1)
    } else {
        user.replacen(FRAME_PLACEHOLDER, "", 1)
    }
}

impl Backend for HttpChatBackend {
    fn call(&self, request: &InferenceRequest) -> std::result::Result<String, CallFailure> {
        let mut content = vec![json!({
            "type": "text",
            "text": strip_placeholder(&request.prompt.user),
        })];
        content.extend(self.frame_parts(request)?);
        let body = json!({
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": request.prompt.system},
                {"role": "user", "content": content},
            ],
        });

        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let response = req.json(&body).send().map_err(|e| {
            if e.is_timeout() {
                CallFailure::retryable("timeout")
            } else {
                CallFailure::retryable(format!("transport: {e}"))
            }
        })?;

        let status = response.status();
        if !status.is_success() {
            let reason = format!("http_status_{}", status.as_u16());
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                CallFailure::retryable(reason)
            } else {
                CallFailure::permanent(reason)
            });
        }

        let payload: Value = response
            .json()
            .map_err(|e| CallFailure::permanent(format!("bad_response: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CallFailure::permanent("bad_response: no message content"))
    }
}
