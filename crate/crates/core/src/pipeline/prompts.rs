//! Prompt templates and request builders for the draft and repair agents.

use super::{Exemplar, PipelineError, PromptMode, ScriptSource};
use crate::corpus::ChartTask;
use crate::gateway::{ChatMessage, ChatRequest};

pub const DRAFT_SYSTEM_PROMPT: &str =
    "You are good at generating complete python code from the given chart description.";

/// Import lines every draft starts from.
pub const CODE_PREAMBLE: [&str; 3] = [
    "import matplotlib.pyplot as plt",
    "import pandas as pd",
    "import numpy as np",
];

const DRAFT_USER_HEAD: &str = "Your task is to generate a complete Python code for the given description. Make sure to include all necessary libraries.";
const DRAFT_USER_TAIL: &str =
    "Please generate the corresponding code that generates the plot that has the above description.";

pub const REFLECTION_HEAD: &str = "The following Python code produced an error:";
pub const REFLECTION_INSTRUCTION: &str = "Identify the root cause of the error. Provide a suggestion to fix ONLY the problematic lines,\n    explicitly specifying which parts of the original code should REMAIN UNCHANGED. Return the complete code with the suggested modifications inserted.";

pub const REWRITER_SYSTEM_PROMPT: &str = "You are an expert Python code rewriter. Your task is to rewrite Python code based strictly on the user's suggestions.
- DO NOT modify any part of the code that is not explicitly mentioned in the suggestion.
- Ensure that the rewritten code is functional, error-free, and adheres to Python syntax rules (e.g., indentation, brackets, braces).
- Return ONLY the complete revised code without explanations, comments, or Markdown formatting.
- Follow instructions EXACTLY as provided.";

/// The draft user message for one description.
pub fn draft_user_message(description: &str) -> String {
    format!(
        "{DRAFT_USER_HEAD}\n\nDescription: {description}\n\n{DRAFT_USER_TAIL}\nCode:\n```python\n{}\n",
        CODE_PREAMBLE.join("\n")
    )
}

pub fn build_draft_request(
    task: &ChartTask,
    mode: &PromptMode,
    model_name: &str,
) -> Result<ChatRequest, PipelineError> {
    if task.description.trim().is_empty() {
        return Err(PipelineError::EmptyDescription(task.id.clone()));
    }
    let mut messages = vec![ChatMessage::system(DRAFT_SYSTEM_PROMPT)];
    if let PromptMode::FewShot(exemplars) = mode {
        if exemplars.is_empty() {
            return Err(PipelineError::NoExemplars);
        }
        for Exemplar { description, code } in exemplars {
            messages.push(ChatMessage::user(draft_user_message(description)));
            messages.push(ChatMessage::assistant(code.clone()));
        }
    }
    messages.push(ChatMessage::user(draft_user_message(&task.description)));
    Ok(ChatRequest::new(model_name, messages).with_tag(task.id.clone()))
}

pub fn build_reflection_request(
    code: &ScriptSource,
    error_text: &str,
    model_name: &str,
) -> Result<ChatRequest, PipelineError> {
    if error_text.trim().is_empty() {
        return Err(PipelineError::EmptyErrorText);
    }
    let body = format!(
        "{REFLECTION_HEAD}\n\n{}\n\nError: {error_text}\n\n{REFLECTION_INSTRUCTION}",
        code.code
    );
    Ok(ChatRequest::new(model_name, vec![ChatMessage::user(body)]))
}

pub fn build_rewrite_request(
    code: &ScriptSource,
    suggestion: &str,
    model_name: &str,
) -> Result<ChatRequest, PipelineError> {
    if suggestion.trim().is_empty() {
        return Err(PipelineError::EmptySuggestion);
    }
    let body = format!(
        "Rewrite the following Python code based on this suggestion:\n\nOriginal Code:\n{}\n\nSuggestion:\n{suggestion}",
        code.code
    );
    Ok(ChatRequest::new(
        model_name,
        vec![ChatMessage::system(REWRITER_SYSTEM_PROMPT), ChatMessage::user(body)],
    ))
}
