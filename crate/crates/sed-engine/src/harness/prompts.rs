//! Prompt templates shipped as versioned constants. Placeholders are spelled
//! `{name}` and filled with plain string replacement; the strings themselves
//! are contracts and must not be edited casually.

pub use crate::models::EVAL_PROMPT_TEMPLATE;

/// Inference prompt for multiple-choice questions.
pub const MULTIPLE_CHOICE_INFERENCE_PROMPT: &str = "Select the answer to the question from the options based on the knowledge you have learned.\nQuestion: {question}\nOptions: {options}\nAnswer:";

/// Inference prompt for reading-comprehension questions with references.
pub const READING_INFERENCE_PROMPT: &str = "Given the context and question, answer the question through step-by-step reasoning based on the context.\n---\nContext: {reference_docs}\n\nQuestion: {question}\n---\n\nAnswer:";

/// Inference prompt for math word problems.
pub const MATH_INFERENCE_PROMPT: &str = "Given the following math question, answer it through step-by-step reasoning.\n---\nQuestion: {question}\n---\n\nAnswer:";

/// Few-shot generation template for multiple-choice questions.
pub const MULTIPLE_CHOICE_FEWSHOT_PROMPT: &str = "Select the answer to the target question from the options based on the knowledge you have learned.\n\nThere are some examples that you can refer to:\n---\n{demonstrations}\n---\n\nYou should answer the following question in a similar way to the examples above:\nQuestion: {question_and_options}\nAnswer:";

/// Zero-shot generation template for reading-comprehension questions.
pub const READING_ZEROSHOT_PROMPT: &str = "You are professional at reading comprehension.\n\nThe following is one or several reference documents for you to comprehend and memory:\n---\n{reference_docs}\n---\n\nThe answer to the following question can be inferred through the above reference(s).\nQuestion: {question}\n\nProvide the answer to the given question through step-by-step reasoning. After your reasoning, output your final answer in the format of [[YOUR ANSWER]].\nMake sure the final answer is enclosed by the double square brackets.\n\nLet's think step by step.";

/// Few-shot generation template for math word problems.
pub const MATH_FEWSHOT_PROMPT: &str = "Please help me solve the math problem step by step. You must give your final answer at the end of response like `So, the final answer is $ your answer'. I will provide examples for you:\n\n---\n{demonstrations}\n---\n\nNext, please answer this math problem:\nQuestion: {question}\nAnswer:";

/// Fills `{name}` placeholders in `template` from (name, value) pairs.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
