//! Deterministic offline LLM.
//!
//! Responses are a pure function of (behavior, prompt, seed, sample index),
//! so every pipeline stage is replayable without network access. The
//! sampling behaviors:
//!
//! * [`SimulatorBehavior::Templated`]: responses assembled from prompt
//!   fragments; the stand-in for free-text generation.
//! * [`SimulatorBehavior::LabelSampler`]: draws from a closed label set,
//!   optionally weighted by how often each label is restated in the prompt
//!   (`icl_weight`). With the synthetic task's label set installed this acts
//!   as the preference oracle: the dataset's per-user gold labels make
//!   user preference learnable from the sampled candidates.
//! * [`SimulatorBehavior::Echo`]: answers looked up from the query the
//!   prompt ends with; a perfect-oracle backend for tests.
//! * [`SimulatorBehavior::Fixed`]: a constant response.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hashing::{fnv1a64, mix64};
use crate::llm::GenerationRequest;
use crate::retriever::Tokenizer;

#[derive(Debug, Clone, PartialEq)]
pub enum SimulatorBehavior {
    Templated,
    LabelSampler {
        labels: Vec<String>,
        icl_weight: f64,
    },
    Echo {
        answers: BTreeMap<String, String>,
        fallback: String,
    },
    Fixed(String),
}

pub struct Simulator {
    behavior: SimulatorBehavior,
    calls: AtomicU64,
}

impl Simulator {
    pub fn new(behavior: SimulatorBehavior) -> Self {
        Simulator {
            behavior,
            calls: AtomicU64::new(0),
        }
    }

    /// Oracle backend returning the mapped gold for whichever query the
    /// prompt ends with.
    pub fn echo(answers: BTreeMap<String, String>) -> Self {
        Simulator::new(SimulatorBehavior::Echo {
            answers,
            fallback: String::new(),
        })
    }

    pub fn fixed(response: &str) -> Self {
        Simulator::new(SimulatorBehavior::Fixed(response.to_string()))
    }

    pub fn behavior(&self) -> &SimulatorBehavior {
        &self.behavior
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn fingerprint(&self) -> String {
        match &self.behavior {
            SimulatorBehavior::Templated => "templated".to_string(),
            SimulatorBehavior::LabelSampler { labels, icl_weight } => {
                format!("labels:{}:{icl_weight}", labels.join(","))
            }
            SimulatorBehavior::Echo { answers, .. } => {
                format!("echo:{:016x}", fnv1a64(format!("{answers:?}").as_bytes()))
            }
            SimulatorBehavior::Fixed(s) => format!("fixed:{:016x}", fnv1a64(s.as_bytes())),
        }
    }

    pub fn generate(&self, req: &GenerationRequest) -> Vec<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        (0..req.n_samples)
            .map(|idx| {
                let raw = self.sample(req, idx);
                truncate_tokens(&raw, req.max_tokens)
            })
            .collect()
    }

    fn sample(&self, req: &GenerationRequest, idx: usize) -> String {
        match &self.behavior {
            SimulatorBehavior::Fixed(s) => s.clone(),
            SimulatorBehavior::Echo { answers, fallback } => {
                echo_lookup(&req.prompt, answers).unwrap_or_else(|| fallback.clone())
            }
            SimulatorBehavior::LabelSampler { labels, icl_weight } => sample_label(
                &req.prompt,
                labels,
                *icl_weight,
                req.temperature,
                req.seed,
                idx,
            ),
            SimulatorBehavior::Templated => {
                templated_response(&req.prompt, req.temperature, req.seed, idx)
            }
        }
    }
}

fn truncate_tokens(s: &str, max_tokens: usize) -> String {
    if max_tokens == 0 {
        return s.to_string();
    }
    let tokens: Vec<&str> = s.split_whitespace().collect();
    if tokens.len() <= max_tokens {
        s.to_string()
    } else {
        tokens[..max_tokens].join(" ")
    }
}

fn sample_rng(prompt: &str, seed: u64, idx: usize) -> ChaCha8Rng {
    let state = mix64(seed ^ fnv1a64(prompt.as_bytes())).wrapping_add(mix64(idx as u64));
    ChaCha8Rng::seed_from_u64(state)
}

/// Count non-overlapping occurrences of the label's token sequence in the
/// prompt's token stream. Case-sensitive so the synthetic "A"/"B" labels do
/// not collide with prose.
fn count_label_mentions(prompt_tokens: &[String], label_tokens: &[String]) -> usize {
    if label_tokens.is_empty() || prompt_tokens.len() < label_tokens.len() {
        return 0;
    }
    let mut count = 0;
    let mut i = 0;
    while i + label_tokens.len() <= prompt_tokens.len() {
        if prompt_tokens[i..i + label_tokens.len()] == *label_tokens {
            count += 1;
            i += label_tokens.len();
        } else {
            i += 1;
        }
    }
    count
}

fn sample_label(
    prompt: &str,
    labels: &[String],
    icl_weight: f64,
    temperature: f64,
    seed: u64,
    idx: usize,
) -> String {
    if labels.is_empty() {
        return String::new();
    }
    let tok = Tokenizer { lowercase: false };
    let prompt_tokens = tok.tokenize(prompt);
    let weights: Vec<f64> = labels
        .iter()
        .map(|label| {
            let mentions = count_label_mentions(&prompt_tokens, &tok.tokenize(label));
            1.0 + icl_weight * mentions as f64
        })
        .collect();

    if temperature == 0.0 {
        // Mode response: the highest-weight label, first on ties.
        let mut best = 0;
        for (i, w) in weights.iter().enumerate() {
            if *w > weights[best] {
                best = i;
            }
        }
        return labels[best].clone();
    }

    let sharpened: Vec<f64> = weights.iter().map(|w| w.powf(1.0 / temperature)).collect();
    let total: f64 = sharpened.iter().sum();
    let mut rng = sample_rng(prompt, seed, idx);
    let mut u = rng.random_range(0.0..1.0) * total;
    for (i, w) in sharpened.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return labels[i].clone();
        }
    }
    labels[labels.len() - 1].clone()
}

fn echo_lookup(prompt: &str, answers: &BTreeMap<String, String>) -> Option<String> {
    let trimmed = prompt.trim_end();
    // Prefer the longest query the prompt ends with, then the longest one it
    // merely contains; BTreeMap order settles exact-length ties.
    let mut best: Option<(&String, usize, bool)> = None;
    for (query, answer) in answers {
        if query.is_empty() {
            continue;
        }
        let suffix = trimmed.ends_with(query.as_str());
        let contained = suffix || trimmed.contains(query.as_str());
        if !contained {
            continue;
        }
        let candidate = (answer, query.len(), suffix);
        best = match best {
            None => Some(candidate),
            Some(current) => {
                let better = (candidate.2, candidate.1) > (current.2, current.1);
                Some(if better { candidate } else { current })
            }
        };
    }
    best.map(|(answer, _, _)| answer.clone())
}

/// Free-text stand-in: quoted fragments of the prompt plus the trailing
/// segment (the query itself) form the candidate pool.
fn templated_response(prompt: &str, temperature: f64, seed: u64, idx: usize) -> String {
    let tail = prompt
        .rsplit(". ")
        .next()
        .unwrap_or(prompt)
        .trim()
        .to_string();

    if temperature == 0.0 {
        return if tail.is_empty() {
            "response".to_string()
        } else {
            tail
        };
    }

    let mut pool: Vec<String> = quoted_fragments(prompt);
    if !tail.is_empty() {
        pool.push(tail.clone());
        // A degraded paraphrase: the tail with every other token kept.
        let thinned: Vec<&str> = tail.split_whitespace().step_by(2).collect();
        if !thinned.is_empty() {
            pool.push(thinned.join(" "));
        }
    }
    if pool.is_empty() {
        pool.push("response".to_string());
    }
    let mut rng = sample_rng(prompt, seed, idx);
    let pick = rng.random_range(0..pool.len());
    pool.swap_remove(pick)
}

fn quoted_fragments(prompt: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(start) = rest.find('"') {
        rest = &rest[start + 1..];
        let Some(end) = rest.find('"') else { break };
        let fragment = &rest[..end];
        if !fragment.trim().is_empty() {
            out.push(fragment.to_string());
        }
        rest = &rest[end + 1..];
    }
    out
}
