//! Deterministic offline backends. All three are pure in
//! (request, backend seed), so reruns produce identical artifacts.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::protocol::OPTION_LABELS;
use crate::tta::fnv1a_64;

use super::{AnswerKey, Backend, CallFailure, InferenceRequest, ScriptStep};

/// Always answers the letter of the correct presented position.
pub struct OracleBackend {
    answers: AnswerKey,
}

impl OracleBackend {
    pub fn new(answers: AnswerKey) -> Self {
        OracleBackend { answers }
    }
}

impl Backend for OracleBackend {
    fn call(&self, request: &InferenceRequest) -> Result<String, CallFailure> {
        match self.answers.get(&request.request_id) {
            Some(&pos) => Ok(OPTION_LABELS[pos as usize].to_string()),
            None => Err(CallFailure::permanent("oracle_missing_label")),
        }
    }
}

/// With probability `p_know` answers the correct presented letter, otherwise
/// presented position 0 ("A"). The knowledge draw hashes only the request id
/// and seed, so identical requests always resolve the same way.
pub struct PositionBiasedBackend {
    answers: AnswerKey,
    p_know: f64,
    seed: u64,
}

impl PositionBiasedBackend {
    pub fn new(answers: AnswerKey, p_know: f64, seed: u64) -> Self {
        PositionBiasedBackend { answers, p_know, seed }
    }
}

impl Backend for PositionBiasedBackend {
    fn call(&self, request: &InferenceRequest) -> Result<String, CallFailure> {
        let Some(&correct) = self.answers.get(&request.request_id) else {
            return Err(CallFailure::permanent("oracle_missing_label"));
        };
        let mut rng =
            ChaCha20Rng::seed_from_u64(self.seed ^ fnv1a_64(request.request_id.as_bytes()));
        let pos = if rng.random_bool(self.p_know) { correct } else { 0 };
        Ok(OPTION_LABELS[pos as usize].to_string())
    }
}

/// Replays a fixed script per request id, one step per attempt. Repeated
/// attempts beyond the script fail; requests without a script fail without
/// retry.
pub struct ScriptedBackend {
    script: Mutex<HashMap<String, VecDeque<ScriptStep>>>,
}

impl ScriptedBackend {
    pub fn new(script: BTreeMap<String, Vec<ScriptStep>>) -> Self {
        ScriptedBackend {
            script: Mutex::new(
                script
                    .into_iter()
                    .map(|(id, steps)| (id, steps.into()))
                    .collect(),
            ),
        }
    }
}

impl Backend for ScriptedBackend {
    fn call(&self, request: &InferenceRequest) -> Result<String, CallFailure> {
        let mut script = self.script.lock().expect("script mutex");
        let Some(steps) = script.get_mut(&request.request_id) else {
            return Err(CallFailure::permanent("unscripted_request"));
        };
        match steps.pop_front() {
            Some(ScriptStep::Ok(text)) => Ok(text),
            Some(ScriptStep::Fail(reason)) => Err(CallFailure::retryable(reason)),
            None => Err(CallFailure::permanent("script_exhausted")),
        }
    }
}
