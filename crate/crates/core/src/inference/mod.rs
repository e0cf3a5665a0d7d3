//! Backend dispatch: send prompt+frames requests to a model with bounded
//! concurrency and retries.
//!
//! A [`Backend`] performs one attempt; [`complete`] wraps it with the retry
//! policy and latency accounting; [`dispatch`] runs many requests over a
//! bounded worker pool. Per-request failures are data ([`RawStatus::Failed`])
//! and flow downstream as abstentions — a flaky backend degrades the
//! ensemble, it does not abort the run.

mod http;
mod mock;

pub use http::HttpChatBackend;
pub use mock::{OracleBackend, PositionBiasedBackend, ScriptedBackend};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::PromptPair;
use crate::sampling::FramePlan;
use crate::tta::fnv1a_64;

/// One unit of inference work. `request_id` must be unique within a run; the
/// pipeline composes it from question uid, model id, preset, and permutation
/// digest.
#[derive(Clone, Debug)]
pub struct InferenceRequest {
    pub request_id: String,
    pub prompt: PromptPair,
    pub frame_plan: FramePlan,
    pub frame_source: FrameSource,
}

/// Where frame bytes come from. The harness never decodes video itself.
#[derive(Clone, Debug)]
pub enum FrameSource {
    /// Root directory holding `<video_id>/NNNN.jpg`, NNNN = 0-padded
    /// timestamp rank.
    ExtractedDir(PathBuf),
    /// Run a user-configured extractor command once per video, then read the
    /// produced directory. `{source}`, `{timestamps}`, `{outdir}` in the
    /// template are substituted.
    ExternalCommand {
        template: String,
        video_source: String,
        out_root: PathBuf,
    },
    /// No frames attached (mock backends ignore frames).
    None,
}

/// Outcome of one request after all attempts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub request_id: String,
    #[serde(flatten)]
    pub status: RawStatus,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RawStatus {
    /// The backend's completion text, verbatim.
    Ok { text: String },
    Failed { reason: String },
}

impl RawResult {
    pub fn text(&self) -> Option<&str> {
        match &self.status {
            RawStatus::Ok { text } => Some(text),
            RawStatus::Failed { .. } => None,
        }
    }
}

/// A single attempt's failure: the reason code plus whether retrying can
/// help (timeouts and 5xx yes; missing frames or a 404 no).
#[derive(Clone, Debug)]
pub struct CallFailure {
    pub reason: String,
    pub retryable: bool,
}

impl CallFailure {
    pub fn permanent(reason: impl Into<String>) -> Self {
        CallFailure { reason: reason.into(), retryable: false }
    }

    pub fn retryable(reason: impl Into<String>) -> Self {
        CallFailure { reason: reason.into(), retryable: true }
    }
}

/// One backend attempt. Implementations must be safe for concurrent calls;
/// mock backends are pure functions of (request, backend seed).
pub trait Backend: Send + Sync {
    fn call(&self, request: &InferenceRequest) -> std::result::Result<String, CallFailure>;
}

/// Exponential backoff between retry attempts, with deterministic per-request
/// jitter in [0.5, 1.5).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backoff {
    pub initial_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff { initial_delay_ms: 500, multiplier: 2.0 }
    }
}

impl Backoff {
    fn delay(&self, attempt: u32, request_id: &str, seed: u64) -> Duration {
        if self.initial_delay_ms == 0 {
            return Duration::ZERO;
        }
        let base = self.initial_delay_ms as f64 * self.multiplier.powi(attempt as i32 - 1);
        let mut rng = ChaCha20Rng::seed_from_u64(
            seed ^ fnv1a_64(request_id.as_bytes()) ^ u64::from(attempt),
        );
        let jitter: f64 = rng.random_range(0.5..1.5);
        Duration::from_millis((base * jitter) as u64)
    }
}

/// Backend selection plus dispatch knobs. `kind` is flattened into the same
/// JSON object, so a config reads e.g.
/// `{"kind":"http_chat","endpoint":"http://…","model_name":"m","max_concurrency":8}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub backoff: Backoff,
    #[serde(default)]
    pub seed: u64,
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible chat-completions endpoint. The API key is read from
    /// the named environment variable, never from config contents.
    HttpChat {
        endpoint: String,
        model_name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
    /// Always answers the correct presented letter (needs an answer key).
    MockOracle,
    /// Knows the correct presented letter with probability `p_know`,
    /// otherwise answers presented position 0.
    MockPositionBiased { p_know: f64 },
    /// Replays scripted outcomes per request_id, one per attempt.
    MockScripted {
        script: BTreeMap<String, Vec<ScriptStep>>,
    },
}

/// One scripted attempt outcome: `{"ok":"text"}` or `{"fail":"reason"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    Ok(String),
    Fail(String),
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrency == 0 {
            return Err(Error::Config("max_concurrency must be positive".into()));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::Config("timeout_s must be positive".into()));
        }
        match &self.kind {
            BackendKind::HttpChat { endpoint, model_name, .. } => {
                if endpoint.is_empty() || model_name.is_empty() {
                    return Err(Error::Config(
                        "http_chat requires endpoint and model_name".into(),
                    ));
                }
            }
            BackendKind::MockPositionBiased { p_know } => {
                if !(0.0..=1.0).contains(p_know) {
                    return Err(Error::Config(format!(
                        "p_know must be in [0,1], got {p_know}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Does this backend need the per-request correct-position key?
    pub fn needs_answer_key(&self) -> bool {
        matches!(
            self.kind,
            BackendKind::MockOracle | BackendKind::MockPositionBiased { .. }
        )
    }

    /// Instantiate the backend. `answer_key` maps request_id to the correct
    /// presented position and is required by the label-aware mocks.
    pub fn build(&self, answer_key: Option<&AnswerKey>) -> Result<Arc<dyn Backend>> {
        self.validate()?;
        match &self.kind {
            BackendKind::HttpChat { endpoint, model_name, api_key_env } => {
                let api_key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                Ok(Arc::new(HttpChatBackend::new(
                    endpoint.clone(),
                    model_name.clone(),
                    api_key,
                    self.timeout_s,
                )?))
            }
            BackendKind::MockOracle => {
                let key = answer_key.ok_or_else(|| {
                    Error::Config("mock_oracle requires an answer key".into())
                })?;
                Ok(Arc::new(OracleBackend::new(key.clone())))
            }
            BackendKind::MockPositionBiased { p_know } => {
                let key = answer_key.ok_or_else(|| {
                    Error::Config("mock_position_biased requires an answer key".into())
                })?;
                Ok(Arc::new(PositionBiasedBackend::new(key.clone(), *p_know, self.seed)))
            }
            BackendKind::MockScripted { script } => {
                Ok(Arc::new(ScriptedBackend::new(script.clone())))
            }
        }
    }
}

/// request_id -> correct presented position, for the label-aware mocks.
pub type AnswerKey = HashMap<String, u8>;

/// Run one request to completion: retry retryable failures up to
/// `cfg.retries` times with jittered exponential backoff. `latency_ms` spans
/// all attempts.
pub fn complete(backend: &dyn Backend, request: &InferenceRequest, cfg: &BackendConfig) -> RawResult {
    let start = Instant::now();
    let mut attempts = 0u32;
    let status = loop {
        attempts += 1;
        match backend.call(request) {
            Ok(text) => break RawStatus::Ok { text },
            Err(failure) => {
                if !failure.retryable || attempts > cfg.retries {
                    break RawStatus::Failed { reason: failure.reason };
                }
                let delay = cfg.backoff.delay(attempts, &request.request_id, cfg.seed);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
        }
    };
    RawResult {
        request_id: request.request_id.clone(),
        status,
        latency_ms: start.elapsed().as_millis() as u64,
        attempts,
    }
}

/// Dispatch all requests over at most `cfg.max_concurrency` worker threads.
/// Returns exactly one result per request, in request order, regardless of
/// completion order.
pub fn dispatch(
    requests: &[InferenceRequest],
    backend: &dyn Backend,
    cfg: &BackendConfig,
) -> Result<Vec<RawResult>> {
    cfg.validate()?;
    let mut seen = HashSet::with_capacity(requests.len());
    for r in requests {
        if !seen.insert(r.request_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate request_id {:?}",
                r.request_id
            )));
        }
    }
    if requests.is_empty() {
        return Ok(Vec::new());
    }

    let workers = cfg.max_concurrency.min(requests.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RawResult>>> = Mutex::new(vec![None; requests.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= requests.len() {
                    break;
                }
                let result = complete(backend, &requests[idx], cfg);
                slots.lock().expect("result mutex")[idx] = Some(result);
            });
        }
    });
    let results = slots.into_inner().expect("result mutex");
    Ok(results
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect())
}

/// Append raw results as JSONL.
pub fn write_raw_results<W: std::io::Write>(mut w: W, results: &[RawResult]) -> Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::build_prompt;

    fn request(id: &str) -> InferenceRequest {
        let options = ["cup".to_string(), "ball".to_string(), "box".to_string()];
        InferenceRequest {
            request_id: id.to_string(),
            prompt: build_prompt("what moved?", &options).unwrap(),
            frame_plan: FramePlan {
                video_id: "v0".into(),
                timestamps_s: vec![0.5],
                target_width: 320,
                target_height: 240,
            },
            frame_source: FrameSource::None,
        }
    }

    fn mock_cfg(kind: BackendKind) -> BackendConfig {
        BackendConfig {
            kind,
            max_concurrency: 4,
            timeout_s: 5.0,
            retries: 2,
            backoff: Backoff { initial_delay_ms: 0, multiplier: 2.0 },
            seed: 0,
        }
    }

    #[test]
    fn oracle_answers_correct_presented_letter() {
        let key: AnswerKey = [("r0".to_string(), 2u8)].into_iter().collect();
        let cfg = mock_cfg(BackendKind::MockOracle);
        let backend = cfg.build(Some(&key)).unwrap();
        let out = complete(backend.as_ref(), &request("r0"), &cfg);
        assert_eq!(out.text(), Some("C"));
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn position_biased_with_zero_knowledge_always_answers_a() {
        let key: AnswerKey = (0..20).map(|i| (format!("r{i}"), 1u8)).collect();
        let cfg = mock_cfg(BackendKind::MockPositionBiased { p_know: 0.0 });
        let backend = cfg.build(Some(&key)).unwrap();
        for i in 0..20 {
            let out = complete(backend.as_ref(), &request(&format!("r{i}")), &cfg);
            assert_eq!(out.text(), Some("A"));
        }
    }

    #[test]
    fn position_biased_is_pure_in_request_id_and_seed() {
        let key: AnswerKey = (0..50).map(|i| (format!("r{i}"), (i % 3) as u8)).collect();
        let cfg = mock_cfg(BackendKind::MockPositionBiased { p_know: 0.5 });
        let b1 = cfg.build(Some(&key)).unwrap();
        let b2 = cfg.build(Some(&key)).unwrap();
        for i in 0..50 {
            let req = request(&format!("r{i}"));
            assert_eq!(
                complete(b1.as_ref(), &req, &cfg).text(),
                complete(b2.as_ref(), &req, &cfg).text()
            );
        }
    }

    #[test]
    fn scripted_replays_byte_exact() {
        let script: BTreeMap<String, Vec<ScriptStep>> = [(
            "r0".to_string(),
            vec![ScriptStep::Ok("Answer: B — the ball".to_string())],
        )]
        .into_iter()
        .collect();
        let cfg = mock_cfg(BackendKind::MockScripted { script });
        let backend = cfg.build(None).unwrap();
        let out = complete(backend.as_ref(), &request("r0"), &cfg);
        assert_eq!(out.text(), Some("Answer: B — the ball"));
    }

    #[test]
    fn double_failure_then_success_takes_three_attempts() {
        let script: BTreeMap<String, Vec<ScriptStep>> = [(
            "r0".to_string(),
            vec![
                ScriptStep::Fail("transport".into()),
                ScriptStep::Fail("transport".into()),
                ScriptStep::Ok("B".into()),
            ],
        )]
        .into_iter()
        .collect();
        let cfg = mock_cfg(BackendKind::MockScripted { script });
        let backend = cfg.build(None).unwrap();
        let out = complete(backend.as_ref(), &request("r0"), &cfg);
        assert_eq!(out.text(), Some("B"));
        assert_eq!(out.attempts, 3);
    }

    #[test]
    fn retries_exhaust_into_failure() {
        let script: BTreeMap<String, Vec<ScriptStep>> = [(
            "r0".to_string(),
            vec![
                ScriptStep::Fail("transport".into()),
                ScriptStep::Fail("transport".into()),
                ScriptStep::Fail("transport".into()),
            ],
        )]
        .into_iter()
        .collect();
        let cfg = mock_cfg(BackendKind::MockScripted { script });
        let backend = cfg.build(None).unwrap();
        let out = complete(backend.as_ref(), &request("r0"), &cfg);
        assert_eq!(out.attempts, 3); // retries(2) + 1
        assert!(matches!(out.status, RawStatus::Failed { ref reason } if reason == "transport"));
    }

    #[test]
    fn unscripted_request_fails_without_retry() {
        let cfg = mock_cfg(BackendKind::MockScripted { script: BTreeMap::new() });
        let backend = cfg.build(None).unwrap();
        let out = complete(backend.as_ref(), &request("r9"), &cfg);
        assert_eq!(out.attempts, 1);
        assert!(matches!(out.status, RawStatus::Failed { ref reason } if reason == "unscripted_request"));
    }

    #[test]
    fn dispatch_matches_sequential_reference() {
        let key: AnswerKey = (0..100).map(|i| (format!("r{i}"), (i % 3) as u8)).collect();
        let cfg = mock_cfg(BackendKind::MockOracle);
        let backend = cfg.build(Some(&key)).unwrap();
        let requests: Vec<InferenceRequest> = (0..100).map(|i| request(&format!("r{i}"))).collect();

        let concurrent = dispatch(&requests, backend.as_ref(), &cfg).unwrap();
        let sequential: Vec<RawResult> = requests
            .iter()
            .map(|r| complete(backend.as_ref(), r, &cfg))
            .collect();
        assert_eq!(concurrent.len(), 100);
        for (c, s) in concurrent.iter().zip(&sequential) {
            assert_eq!(c.request_id, s.request_id);
            assert_eq!(c.status, s.status);
        }
    }

    #[test]
    fn dispatch_empty_is_empty() {
        let cfg = mock_cfg(BackendKind::MockScripted { script: BTreeMap::new() });
        let backend = cfg.build(None).unwrap();
        assert!(dispatch(&[], backend.as_ref(), &cfg).unwrap().is_empty());
    }

    #[test]
    fn dispatch_rejects_duplicate_ids() {
        let cfg = mock_cfg(BackendKind::MockScripted { script: BTreeMap::new() });
        let backend = cfg.build(None).unwrap();
        let requests = vec![request("same"), request("same")];
        assert!(dispatch(&requests, backend.as_ref(), &cfg).is_err());
    }

    #[test]
    fn in_flight_never_exceeds_bound() {
        struct Gauge {
            inner: Arc<dyn Backend>,
            current: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Backend for Gauge {
            fn call(&self, request: &InferenceRequest) -> std::result::Result<String, CallFailure> {
                let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(2));
                let out = self.inner.call(request);
                self.current.fetch_sub(1, Ordering::SeqCst);
                out
            }
        }

        let key: AnswerKey = (0..64).map(|i| (format!("r{i}"), 0u8)).collect();
        let cfg = mock_cfg(BackendKind::MockOracle);
        let gauge = Gauge {
            inner: cfg.build(Some(&key)).unwrap(),
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        };
        let requests: Vec<InferenceRequest> = (0..64).map(|i| request(&format!("r{i}"))).collect();
        dispatch(&requests, &gauge, &cfg).unwrap();
        let peak = gauge.peak.load(Ordering::SeqCst);
        assert!(peak <= 4, "peak in-flight {peak} exceeded max_concurrency");
        assert!(peak >= 2, "expected some overlap, saw peak {peak}");
    }

    #[test]
    fn raw_results_serialize_flat() {
        let ok = RawResult {
            request_id: "r0".into(),
            status: RawStatus::Ok { text: "B".into() },
            latency_ms: 3,
            attempts: 1,
        };
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(
            json,
            r#"{"request_id":"r0","status":"ok","text":"B","latency_ms":3,"attempts":1}"#
        );
        let failed = RawResult {
            request_id: "r1".into(),
            status: RawStatus::Failed { reason: "timeout".into() },
            latency_ms: 9000,
            attempts: 3,
        };
        let back: RawResult =
            serde_json::from_str(&serde_json::to_string(&failed).unwrap()).unwrap();
        assert_eq!(back, failed);
    }

    #[test]
    fn backend_config_parses_from_json() {
        let cfg: BackendConfig = serde_json::from_str(
            r#"{"kind":"http_chat","endpoint":"http://127.0.0.1:9","model_name":"m","retries":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.retries, 1);
        assert_eq!(cfg.max_concurrency, 4);
        assert!(cfg.validate().is_ok());

        let cfg: BackendConfig =
            serde_json::from_str(r#"{"kind":"mock_position_biased","p_know":1.5}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
