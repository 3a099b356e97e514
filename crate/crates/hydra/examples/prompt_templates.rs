//! Prompt assembly for every supported task.
//!
//! Shows the per-item template expansion, the ", and " aggregation rule,
//! the zero-shot degenerate case, and the profile-summarization prompts.
//!
//! Run: `cargo run -p hydra --example prompt_templates`

use hydra::datamodel::{HistoryItem, TaskId, TaskSpec};
use hydra::llm::{build_pag_summary_prompt, build_rag_prompt};

fn main() {
    let tasks = [
        (
            TaskId::Lamp2N,
            "Which category does this article belong to?",
        ),
        (TaskId::Lamp2M, "Which tag fits this movie?"),
        (TaskId::Lamp3, "What is the score for this review?"),
        (TaskId::Lamp4, "Generate a headline for this article."),
        (TaskId::Lamp5, "Generate a title for this abstract."),
    ];
    let items = vec![
        HistoryItem {
            item_id: "h0".into(),
            query_text: "first past input".into(),
            answer_text: "first output".into(),
        },
        HistoryItem {
            item_id: "h1".into(),
            query_text: "second past input".into(),
            answer_text: "second output".into(),
        },
    ];

    for (task_id, input) in tasks {
        let task = TaskSpec::for_task(task_id);
        let bundle = build_rag_prompt(&task, &items, input);
        println!("=== {task_id} ===");
        for (i, ppep) in bundle.ppep_strings.iter().enumerate() {
            println!("  item {i}: {ppep}");
        }
        println!("  prompt: {}\n", bundle.aip);
    }

    // No items: the prompt collapses to the bare query.
    let task = TaskSpec::for_task(TaskId::Lamp4);
    let zero_shot = build_rag_prompt(&task, &[], "Generate a headline for this article.");
    println!("zero-shot prompt: {}\n", zero_shot.aip);

    // Profile-summarization instructions used by the PAG baseline.
    for task_id in [TaskId::Lamp2N, TaskId::Lamp3, TaskId::Lamp4] {
        let task = TaskSpec::for_task(task_id);
        let prompt = build_pag_summary_prompt(&task, &items).unwrap();
        let first_line = prompt.lines().next().unwrap();
        println!("{task_id} summary instruction: {first_line}");
    }
}
