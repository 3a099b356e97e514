//! The black-box LLM abstraction: prompt assembly, a deterministic
//! simulator, an OpenAI-compatible HTTP client, and the labeling functions
//! that turn generations into binary training targets.

mod http;
mod prompts;
mod simulator;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use prompts::{build_pag_summary_prompt, build_rag_prompt, PromptBundle};
pub use simulator::{Simulator, SimulatorBehavior};

use serde::{Deserialize, Serialize};

use crate::error::{HydraError, Result};
use crate::metrics;

/// One sampling request against the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Number of samples to draw (`b` at adaptation time, 1 for labeling
    /// and baselines).
    pub n_samples: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    /// Only the simulator consumes the seed; HTTP backends ignore it.
    pub seed: u64,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(HydraError::Config("n_samples must be at least 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(HydraError::Config(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Which backend flavor a run uses; exactly one is active per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenAiCompatible,
    Simulator,
}

/// A text-in/text-out language model.
pub enum LlmBackend {
    Simulator(Simulator),
    Http(HttpBackend),
}

impl LlmBackend {
    pub fn kind(&self) -> BackendKind {
        match self {
            LlmBackend::Simulator(_) => BackendKind::Simulator,
            LlmBackend::Http(_) => BackendKind::HttpOpenAiCompatible,
        }
    }

    /// Draw exactly `n_samples` generations for the request.
    pub fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        req.validate()?;
        match self {
            LlmBackend::Simulator(sim) => Ok(sim.generate(req)),
            LlmBackend::Http(http) => http.generate(req),
        }
    }

    /// Total calls issued so far (one per request, not per sample).
    pub fn call_count(&self) -> u64 {
        match self {
            LlmBackend::Simulator(sim) => sim.call_count(),
            LlmBackend::Http(http) => http.call_count(),
        }
    }

    /// A short stable fingerprint mixed into cache keys so that responses
    /// from differently-configured backends never collide.
    pub fn cache_fingerprint(&self) -> String {
        match self {
            LlmBackend::Simulator(sim) => format!("sim:{}", sim.fingerprint()),
            LlmBackend::Http(http) => format!("http:{}", http.fingerprint()),
        }
    }
}

/// Anything that can serve generation requests: a raw backend, the caching
/// client, or a test stub.
pub trait TextGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>>;
}

impl TextGenerator for LlmBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        LlmBackend::generate(self, req)
    }
}

impl TextGenerator for Simulator {
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        req.validate()?;
        Ok(Simulator::generate(self, req))
    }
}

/// Binary exact-match label: 1 iff the normalized strings are equal.
pub fn label_exact(generated: &str, gold: &str) -> u8 {
    u8::from(metrics::normalize(generated) == metrics::normalize(gold))
}

/// Softened label for generation tasks: 1 iff ROUGE-1 F1 meets the
/// threshold.
pub fn label_rouge(generated: &str, gold: &str, threshold: f64) -> u8 {
    u8::from(metrics::rouge1(generated, gold) >= threshold)
}

/// Task-appropriate labeling: exact match for classification, ROUGE-softened
/// for generation.
pub fn label_for_task(
    task: &crate::datamodel::TaskSpec,
    generated: &str,
    gold: &str,
    rouge_threshold: f64,
) -> u8 {
    if task.is_generation() {
        label_rouge(generated, gold, rouge_threshold)
    } else {
        label_exact(generated, gold)
    }
}
