//! Prompt assembly.
//!
//! Each selected history item expands through the task's per-item template
//! (placeholders `{input}` / `{output}`), the expansions are joined with
//! ", and ", and the aggregated template splices the result in front of the
//! query. With no items the prompt degenerates to the bare query.

use crate::datamodel::{HistoryItem, TaskSpec};
use crate::error::{HydraError, Result};

/// The per-item strings and the final assembled prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub ppep_strings: Vec<String>,
    pub aip: String,
}

fn render_item(template: &str, item: &HistoryItem) -> String {
    template
        .replace("{input}", &item.query_text)
        .replace("{output}", &item.answer_text)
}

/// Assemble the retrieval-augmented prompt for `input` with the given
/// profile items.
pub fn build_rag_prompt(task: &TaskSpec, items: &[HistoryItem], input: &str) -> PromptBundle {
    let ppep_strings: Vec<String> = items
        .iter()
        .map(|it| render_item(&task.ppep_template, it))
        .collect();
    let aip = if ppep_strings.is_empty() {
        input.to_string()
    } else {
        task.aip_template
            .replace("{ppeps}", &ppep_strings.join(", and "))
            .replace("{input}", input)
    };
    PromptBundle { ppep_strings, aip }
}

/// Profile-summarization prompt: the task's summary instruction followed by
/// the serialized history, one rendered item per line.
pub fn build_pag_summary_prompt(task: &TaskSpec, history: &[HistoryItem]) -> Result<String> {
    if history.is_empty() {
        return Err(HydraError::Data(
            "cannot build a profile summary prompt from an empty history".into(),
        ));
    }
    let mut out = String::from(&task.summary_prompt);
    out.push('\n');
    for item in history {
        out.push('\n');
        out.push_str(&render_item(&task.ppep_template, item));
    }
    Ok(out)
}
