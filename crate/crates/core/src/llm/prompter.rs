use super::{Bindings, ChatExchange, LlmGateway, TemplateStore};
use crate::error::Result;
use crate::heuristic::FAILURE_SENTINEL;
use crate::task::TaskSpec;

/// Renders a template with the task's standard bindings and sends it.
#[derive(Clone, Copy)]
pub struct Prompter<'a> {
    pub gateway: &'a LlmGateway,
    pub templates: &'a TemplateStore,
    pub task: &'a TaskSpec,
}

impl<'a> Prompter<'a> {
    pub fn new(gateway: &'a LlmGateway, templates: &'a TemplateStore, task: &'a TaskSpec) -> Self {
        Prompter {
            gateway,
            templates,
            task,
        }
    }

    /// `task_description`, `function_name` and `candidate_signature`.
    pub fn task_bindings<'b>(&self) -> Bindings<'b> {
        let mut b = Bindings::new();
        b.insert("task_description", self.task.task_id.description().to_string());
        b.insert("function_name", self.task.task_id.entry_function().to_string());
        b.insert("candidate_signature", self.task.candidate_signature.clone());
        b
    }

    pub fn ask(&self, template_id: &str, extra: Bindings<'_>, temperature: f64) -> Result<ChatExchange> {
        let mut bindings = self.task_bindings();
        bindings.extend(extra);
        let messages = self.templates.render(template_id, &bindings)?;
        self.gateway.complete_chat(&messages, temperature)
    }
}

/// Fitness as shown in prompts: fixed six decimals, or `failed`.
pub fn format_fitness(value: f64) -> String {
    if value == FAILURE_SENTINEL || !value.is_finite() {
        "failed".to_string()
    } else {
        format!("{value:.6}")
    }
}
