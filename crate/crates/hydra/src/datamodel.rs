//! Domain types, JSONL ingestion, user splitting, and the task registry.
//!
//! A dataset is a set of users. Each user carries one query, its gold
//! answer, and an ordered behavior history of (input, output) pairs. Tasks
//! describe what kind of answer is expected (categorical / ordinal /
//! generation), the label set when there is one, the prompt templates, and
//! which metrics apply.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HydraError, Result};
use crate::metrics;

/// The five LaMP tasks in scope plus the synthetic acceptance task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskId {
    #[serde(rename = "lamp-2n")]
    Lamp2N,
    #[serde(rename = "lamp-2m")]
    Lamp2M,
    #[serde(rename = "lamp-3")]
    Lamp3,
    #[serde(rename = "lamp-4")]
    Lamp4,
    #[serde(rename = "lamp-5")]
    Lamp5,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl TaskId {
    pub fn parse(s: &str) -> Result<TaskId> {
        match s.to_ascii_lowercase().as_str() {
            "lamp-2n" | "lamp2n" | "2n" => Ok(TaskId::Lamp2N),
            "lamp-2m" | "lamp2m" | "2m" => Ok(TaskId::Lamp2M),
            "lamp-3" | "lamp3" | "3" => Ok(TaskId::Lamp3),
            "lamp-4" | "lamp4" | "4" => Ok(TaskId::Lamp4),
            "lamp-5" | "lamp5" | "5" => Ok(TaskId::Lamp5),
            "synthetic" | "synth" => Ok(TaskId::Synthetic),
            other => Err(HydraError::Config(format!("unknown task: {other}"))),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskId::Lamp2N => "lamp-2n",
            TaskId::Lamp2M => "lamp-2m",
            TaskId::Lamp3 => "lamp-3",
            TaskId::Lamp4 => "lamp-4",
            TaskId::Lamp5 => "lamp-5",
            TaskId::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Closed label set, unordered (news category, movie tag).
    Categorical,
    /// Closed label set with a numeric order (product rating 1..5).
    Ordinal,
    /// Free text output (headline, title).
    Generation,
}

/// Task descriptor: output kind, label set, prompt templates, metrics.
///
/// Template placeholders: `{input}` / `{output}` in `ppep_template` expand
/// to a history item's input and output text; `{ppeps}` / `{input}` in
/// `aip_template` expand to the joined per-item strings and the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub kind: TaskKind,
    pub label_set: Vec<String>,
    pub ppep_template: String,
    pub aip_template: String,
    pub summary_prompt: String,
    pub metric_set: Vec<String>,
}

const NEWS_CATEGORIES: [&str; 15] = [
    "business",
    "crime",
    "culture & arts",
    "education",
    "entertainment",
    "food & drink",
    "healthy living",
    "parents",
    "politics",
    "religion",
    "science & technology",
    "sports",
    "style & beauty",
    "travel",
    "women",
];

const MOVIE_TAGS: [&str; 15] = [
    "action",
    "based on a book",
    "classic",
    "comedy",
    "dark comedy",
    "dystopia",
    "fantasy",
    "psychology",
    "romance",
    "sci-fi",
    "social commentary",
    "thought-provoking",
    "true story",
    "twist ending",
    "violence",
];

impl TaskSpec {
    /// Registry lookup. Templates follow the LaMP prompt table: per-item
    /// strings joined with ", and ", a period, then the query.
    pub fn for_task(task_id: TaskId) -> TaskSpec {
        let aip_plain = "{ppeps}. {input}".to_string();
        let spec = match task_id {
            TaskId::Lamp2N => TaskSpec {
                task_id,
                kind: TaskKind::Categorical,
                label_set: NEWS_CATEGORIES.iter().map(|s| s.to_string()).collect(),
                ppep_template: "the category for the article: \"{input}\" is \"{output}\""
                    .to_string(),
                aip_template: aip_plain,
                summary_prompt: "Look at the following past articles this journalist has \
                                 written and determine the most popular category they write \
                                 in. Answer in the following form: most popular category: \
                                 <category>"
                    .to_string(),
                metric_set: vec!["accuracy".into(), "macro_f1".into()],
            },
            TaskId::Lamp2M => TaskSpec {
                task_id,
                kind: TaskKind::Categorical,
                label_set: MOVIE_TAGS.iter().map(|s| s.to_string()).collect(),
                ppep_template: "the tag for the movie: \"{input}\" is \"{output}\"".to_string(),
                aip_template: aip_plain,
                summary_prompt: "Which tag does this movie relate to among the following \
                                 tags? Just answer with the tag name without further \
                                 explanation"
                    .to_string(),
                metric_set: vec!["accuracy".into(), "macro_f1".into()],
            },
            TaskId::Lamp3 => TaskSpec {
                task_id,
                kind: TaskKind::Ordinal,
                label_set: (1..=5).map(|i| i.to_string()).collect(),
                ppep_template: "{output} is the score for \"{input}\"".to_string(),
                aip_template: aip_plain,
                summary_prompt: "Based on this user's past reviews, what are the most common \
                                 scores they give for positive and negative reviews? Answer \
                                 in the following form: most common positive score: <most \
                                 common positive score>, most common negative score: <most \
                                 common negative score>"
                    .to_string(),
                metric_set: vec!["mae".into(), "rmse".into()],
            },
            TaskId::Lamp4 => TaskSpec {
                task_id,
                kind: TaskKind::Generation,
                label_set: vec![],
                ppep_template: "\"{output}\" is the title for \"{input}\"".to_string(),
                aip_template: aip_plain,
                summary_prompt: "Given this author's previous articles, try to describe a \
                                 template for their headlines. I want to be able to \
                                 accurately predict the headline given one of their \
                                 articles. Be specific about their style and wording; don't \
                                 tell me anything generic."
                    .to_string(),
                metric_set: vec!["rouge1".into(), "rougeL".into(), "bleu".into()],
            },
            TaskId::Lamp5 => TaskSpec {
                task_id,
                kind: TaskKind::Generation,
                label_set: vec![],
                ppep_template: "\"{output}\" is the title for \"{input}\"".to_string(),
                aip_template: "{ppeps}. Following the given patterns {input}".to_string(),
                summary_prompt: "Given this author's previous publications, try to describe \
                                 a template for their titles. I want to be able to \
                                 accurately predict the title of one of the papers from the \
                                 abstract. Only generate the template description, nothing \
                                 else."
                    .to_string(),
                metric_set: vec!["rouge1".into(), "rougeL".into(), "bleu".into()],
            },
            TaskId::Synthetic => TaskSpec {
                task_id,
                kind: TaskKind::Categorical,
                label_set: vec!["A".into(), "B".into()],
                ppep_template: "the label for \"{input}\" is \"{output}\"".to_string(),
                aip_template: aip_plain,
                summary_prompt: "Based on this user's past items, what label do they assign \
                                 most often? Answer with the label name only."
                    .to_string(),
                metric_set: vec!["accuracy".into(), "macro_f1".into()],
            },
        };
        debug_assert!(spec.validate().is_ok());
        spec
    }

    /// Structural invariants: classification tasks have labels, generation
    /// tasks do not, and every metric id is known.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TaskKind::Categorical | TaskKind::Ordinal => {
                if self.label_set.is_empty() {
                    return Err(HydraError::Config(format!(
                        "task {} is a classification task but has an empty label set",
                        self.task_id
                    )));
                }
            }
            TaskKind::Generation => {
                if !self.label_set.is_empty() {
                    return Err(HydraError::Config(format!(
                        "task {} is a generation task but has a label set",
                        self.task_id
                    )));
                }
            }
        }
        for m in &self.metric_set {
            if !metrics::is_known_metric(m) {
                return Err(HydraError::Config(format!("unknown metric id: {m}")));
            }
        }
        Ok(())
    }

    pub fn is_generation(&self) -> bool {
        self.kind == TaskKind::Generation
    }
}

/// One behavior record: the user's past input and what they produced for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub item_id: String,
    pub query_text: String,
    pub answer_text: String,
}

impl HistoryItem {
    /// Serialized form used for indexing and for reranker inputs.
    pub fn full_text(&self) -> String {
        format!("{} {}", self.query_text, self.answer_text)
    }
}

/// One user: their query, the gold answer, and their behavior history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub query: String,
    pub gold: String,
    pub history: Vec<HistoryItem>,
}

/// A task plus its train/test user split. Train and test user ids are
/// disjoint; personalization for test users is measured on unseen users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: TaskSpec,
    pub train_users: Vec<UserRecord>,
    pub test_users: Vec<UserRecord>,
}

impl Dataset {
    pub fn all_users(&self) -> impl Iterator<Item = &UserRecord> {
        self.train_users.iter().chain(self.test_users.iter())
    }

    /// Train/test user ids never overlap.
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        let train: BTreeSet<&str> = self
            .train_users
            .iter()
            .map(|u| u.user_id.as_str())
            .collect();
        for u in &self.test_users {
            if train.contains(u.user_id.as_str()) {
                return Err(HydraError::Data(format!(
                    "user {} appears in both train and test splits",
                    u.user_id
                )));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| HydraError::Data(format!("failed to write dataset: {e}")))?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Dataset> {
        let file = File::open(path)?;
        let ds: Dataset = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| HydraError::Data(format!("failed to read dataset: {e}")))?;
        ds.validate()?;
        Ok(ds)
    }

    /// Query texts that appear under two or more test users with different
    /// gold answers. On such queries a single shared model cannot be right
    /// for everyone.
    pub fn conflict_queries(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (i, a) in self.test_users.iter().enumerate() {
            for b in self.test_users.iter().skip(i + 1) {
                if a.query == b.query && a.gold != b.gold {
                    out.insert(a.query.clone());
                }
            }
        }
        out
    }
}

#[derive(Deserialize)]
struct RawProfileItem {
    id: String,
    input: String,
    output: String,
}

#[derive(Deserialize)]
struct RawUser {
    user_id: String,
    input: String,
    #[serde(default)]
    output: String,
    #[serde(default)]
    profile: Vec<RawProfileItem>,
}

/// Load a JSONL dataset: one user per line with fields `user_id`, `input`,
/// `output`, and `profile` (a list of `{id, input, output}` objects). An
/// optional `schema-version: 1` first line is skipped. All users land in
/// the train split; use [`split_users`] to carve out a test set.
pub fn load_dataset(path: &Path, task: TaskSpec) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut users: Vec<UserRecord> = Vec::new();
    let mut seen_users: BTreeSet<String> = BTreeSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 1 && trimmed.starts_with("schema-version:") {
            continue;
        }
        let raw: RawUser = serde_json::from_str(trimmed).map_err(|e| HydraError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if !seen_users.insert(raw.user_id.clone()) {
            return Err(HydraError::Parse {
                line: line_no,
                msg: format!("duplicate user_id {:?}", raw.user_id),
            });
        }
        if raw.profile.is_empty() {
            return Err(HydraError::Parse {
                line: line_no,
                msg: format!("user {:?} has an empty history", raw.user_id),
            });
        }
        let mut item_ids = BTreeSet::new();
        let mut history = Vec::with_capacity(raw.profile.len());
        for item in raw.profile {
            if !item_ids.insert(item.id.clone()) {
                return Err(HydraError::Parse {
                    line: line_no,
                    msg: format!("duplicate item id {:?} for user {:?}", item.id, raw.user_id),
                });
            }
            if item.input.is_empty() {
                return Err(HydraError::Parse {
                    line: line_no,
                    msg: format!(
                        "item {:?} for user {:?} has empty input",
                        item.id, raw.user_id
                    ),
                });
            }
            history.push(HistoryItem {
                item_id: item.id,
                query_text: item.input,
                answer_text: item.output,
            });
        }
        users.push(UserRecord {
            user_id: raw.user_id,
            query: raw.input,
            gold: raw.output,
            history,
        });
    }

    Ok(Dataset {
        task,
        train_users: users,
        test_users: vec![],
    })
}

/// Deterministically shuffle all users by seed and take the first `n_train`
/// as the train split and the next `n_test` as the test split.
pub fn split_users(ds: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    let mut users: Vec<UserRecord> = ds.all_users().cloned().collect();
    if n_train + n_test > users.len() {
        return Err(HydraError::Data(format!(
            "requested {}+{} users but dataset has only {}",
            n_train,
            n_test,
            users.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let mut test_users = users.split_off(n_train);
    test_users.truncate(n_test);
    Ok(Dataset {
        task: ds.task.clone(),
        train_users: users,
        test_users,
    })
}

const SYNTH_TOPICS: [&str; 12] = [
    "gardening",
    "chess",
    "cycling",
    "pottery",
    "astronomy",
    "baking",
    "sailing",
    "photography",
    "woodwork",
    "birdwatch",
    "calligraphy",
    "origami",
];
const SYNTH_FILLERS: [&str; 6] = ["notes", "digest", "thread", "recap", "snippet", "memo"];

/// Generate the synthetic conflict task.
///
/// Users come in pairs that share the same query text but carry opposite
/// gold labels ("A" vs "B"), so one shared model cannot beat chance on
/// those queries while per-user heads can. Each user's history restates
/// their own label on topical variants of the query, with a 25% minority of
/// off-topic items labeled the other way so that usefulness is not uniform.
/// Pairs alternate between the train and test splits.
pub fn make_synthetic_task(n_users: usize, history_per_user: usize, seed: u64) -> Result<Dataset> {
    if n_users < 2 {
        return Err(HydraError::Data(format!(
            "synthetic task needs at least 2 users, got {n_users}"
        )));
    }
    let task = TaskSpec::for_task(TaskId::Synthetic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_users = Vec::new();
    let mut test_users = Vec::new();

    for idx in 0..n_users {
        let pair = idx / 2;
        let pref = if idx % 2 == 0 { "A" } else { "B" };
        let anti = if pref == "A" { "B" } else { "A" };
        let topic = SYNTH_TOPICS[pair % SYNTH_TOPICS.len()];
        let filler = SYNTH_FILLERS[(pair / SYNTH_TOPICS.len()) % SYNTH_FILLERS.len()];
        // The pair number keeps queries unique across pairs at any scale;
        // only the two members of a pair share their query text.
        let query = format!("assign a label to this {topic} {filler} {pair} from the weekly feed");

        let mut history = Vec::with_capacity(history_per_user);
        for h in 0..history_per_user {
            // Every fourth item is an off-topic distractor with the
            // opposite label; the rest restate the user's own preference.
            let distractor = h % 4 == 3;
            let (text, answer) = if distractor {
                let other = SYNTH_TOPICS[(pair + 1 + h) % SYNTH_TOPICS.len()];
                (format!("offtopic {other} aside number {h}"), anti)
            } else {
                let variant = SYNTH_FILLERS[h % SYNTH_FILLERS.len()];
                (
                    format!("{topic} {variant} entry {h} from the weekly feed"),
                    pref,
                )
            };
            history.push(HistoryItem {
                item_id: format!("u{idx:03}-h{h:03}"),
                query_text: text,
                answer_text: answer.to_string(),
            });
        }
        // A seeded shuffle so history order carries no label information.
        history.shuffle(&mut rng);

        let record = UserRecord {
            user_id: format!("user{idx:03}"),
            query,
            gold: pref.to_string(),
            history,
        };
        if pair % 2 == 0 {
            train_users.push(record);
        } else {
            test_users.push(record);
        }
    }

    let ds = Dataset {
        task,
        train_users,
        test_users,
    };
    ds.validate()?;
    Ok(ds)
}
