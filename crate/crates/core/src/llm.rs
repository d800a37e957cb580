//! Prompt construction and text generation for hint explanations and the
//! chat assistant.
//!
//! Providers are synchronous; callers on an async runtime run them on a
//! blocking thread. Every returned text passes through
//! [`enforce_word_limit`], so the word limits hold whatever the provider
//! sends back.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::diff::{DiffItem, DiffReport, Kind, Level};
use crate::sb3::{serialize_project, ProjectAst};

pub const REASONING_MAX_WORDS: usize = 30;
pub const CHAT_MAX_WORDS: usize = 100;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

const LANGUAGE: &str = "Write in the user's language (fallback English).";

const REASONING_ROLE: &str = "Experienced Scratch tutor/evaluator.";
const REASONING_INPUT: &str =
    "Teacher JSON, Student JSON, Discrepancy report (Diff), Teacher's description (optional).";
const REASONING_GOAL: &str = "Explain the detected difference and why it matters.";
const REASONING_RULES: [&str; 6] = [
    "Supportive and non-authoritative",
    "avoid negativity",
    "No full code or long edits",
    "name Scratch blocks in quotes (e.g., \"When green flag clicked\")",
    "Kid-safe and reliable",
    "if uncertain, do not guess",
];
const REASONING_OUTPUT: &str =
    "A concise explanation within 30 words that describe the differences and why it matters.";

const CHAT_ROLE: &str = "Experienced, patient Scratch tutor/evaluator";
const CHAT_INPUT: &str =
    "Student's question, Teacher JSON, Student JSON, Discrepancy report (Diff), Teacher's description (optional).";
const CHAT_GOAL: &str = "Answer the student's question; May explain why the change is needed; May offer 1–2 viable alternatives and when to use them; May connect to broader patterns.";
const CHAT_RULES: [&str; 5] = [
    "Clear and kid-safe",
    "no code dumps or JSON patches",
    "avoid long step-by-step edits",
    "encourage reflection without overwhelming the student",
    "handle follow-up questions gracefully",
];
const CHAT_OUTPUT: &str = "A patient and clear text within 100 words that answers student's question.";

const CHAT_FALLBACK: &str = "I can explain the current hint:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    Reasoning,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutputConstraint {
    pub max_words: usize,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptInputs {
    pub teacher_document: String,
    pub student_document: String,
    pub diff: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub role: String,
    pub input_description: String,
    pub goal: String,
    pub inputs: PromptInputs,
    pub rules: Vec<String>,
    pub language_directive: String,
    pub output_constraint: OutputConstraint,
    /// The item being explained, kept for fallbacks and the stub provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<DiffItem>,
}

impl PromptBundle {
    pub fn max_words(&self) -> usize {
        self.output_constraint.max_words
    }

    /// System part of the prompt: the template with its constraints.
    pub fn system_text(&self) -> String {
        let header = match self.kind {
            PromptKind::Reasoning => "SYSTEM_Reasoning",
            PromptKind::Chat => "SYSTEM_CHAT",
        };
        format!(
            "{header}\nRole: {}\nInput: {}\nGoal: {}\nRules: {}.\nLanguage: {}\nOutput: {}",
            self.role,
            self.input_description,
            self.goal,
            self.rules.join("; "),
            self.language_directive,
            self.output_constraint.text(),
        )
    }

    /// User part of the prompt: the documents and the report.
    pub fn user_text(&self) -> String {
        let i = &self.inputs;
        let mut out = String::new();
        if let Some(q) = &i.question {
            out.push_str(&format!("Student's question:\n{q}\n\n"));
        }
        out.push_str(&format!("Teacher JSON:\n{}\n\n", i.teacher_document));
        out.push_str(&format!("Student JSON:\n{}\n\n", i.student_document));
        out.push_str(&format!("Discrepancy report (Diff):\n{}\n", i.diff));
        if let Some(d) = &i.description {
            out.push_str(&format!("\nTeacher's description:\n{d}\n"));
        }
        out
    }

    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system_text(), self.user_text())
    }
}

impl OutputConstraint {
    fn text(&self) -> String {
        match self.max_words {
            REASONING_MAX_WORDS => REASONING_OUTPUT.to_string(),
            CHAT_MAX_WORDS => CHAT_OUTPUT.to_string(),
            n => format!("Plain text within {n} words."),
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("the question is empty")]
    EmptyQuestion,
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// Text block describing one item for a prompt.
pub fn describe_item(item: &DiffItem) -> String {
    let mut out = format!(
        "[{} {}] at {}\n{}\n",
        item.level, item.kind, item.location, item.message
    );
    if let Some(key) = &item.location.event_key {
        out.push_str(&format!("Sprite: {}\nEvent: {}", item.location.sprite_name.as_deref().unwrap_or("?"), key.hat_opcode));
        if let Some(d) = &key.discriminator {
            out.push_str(&format!(" ({d})"));
        }
        out.push('\n');
    } else if let Some(s) = &item.location.sprite_name {
        out.push_str(&format!("Sprite: {s}\n"));
    }
    if let Some(f) = &item.student_fragment {
        out.push_str("Student blocks:\n");
        for line in f.text() {
            out.push_str(&format!("  {line}\n"));
        }
    }
    if let Some(f) = &item.teacher_fragment {
        out.push_str("Teacher blocks:\n");
        for line in f.text() {
            out.push_str(&format!("  {line}\n"));
        }
    }
    for c in &item.changed_slots {
        out.push_str(&format!("Slot {}: student {} / teacher {}\n", c.slot, c.student, c.teacher));
    }
    out
}

pub fn build_reasoning_prompt(
    teacher: &ProjectAst,
    student: &ProjectAst,
    item: &DiffItem,
    description: Option<&str>,
) -> PromptBundle {
    PromptBundle {
        kind: PromptKind::Reasoning,
        role: REASONING_ROLE.into(),
        input_description: REASONING_INPUT.into(),
        goal: REASONING_GOAL.into(),
        inputs: PromptInputs {
            teacher_document: serialize_project(teacher),
            student_document: serialize_project(student),
            diff: describe_item(item),
            description: description.filter(|d| !d.trim().is_empty()).map(str::to_string),
            question: None,
        },
        rules: REASONING_RULES.iter().map(|s| s.to_string()).collect(),
        language_directive: LANGUAGE.into(),
        output_constraint: OutputConstraint {
            max_words: REASONING_MAX_WORDS,
            format: "plain text".into(),
        },
        item: Some(item.clone()),
    }
}

/// What the chat assistant knows about the session.
#[derive(Debug, Clone, Copy)]
pub struct ChatContext<'a> {
    pub teacher: &'a ProjectAst,
    pub student: &'a ProjectAst,
    pub report: &'a DiffReport,
    pub current: Option<&'a DiffItem>,
    pub description: Option<&'a str>,
}

pub fn build_chat_prompt(question: &str, ctx: ChatContext<'_>) -> Result<PromptBundle, LlmError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(LlmError::EmptyQuestion);
    }
    let mut diff = String::new();
    if let Some(item) = ctx.current {
        diff.push_str("Current hint:\n");
        diff.push_str(&describe_item(item));
    }
    if ctx.report.items.is_empty() {
        diff.push_str("No remaining differences.\n");
    } else {
        diff.push_str("All differences:\n");
        for item in &ctx.report.items {
            diff.push_str(&format!("{}. {}\n", item.severity, item.message));
        }
    }
    Ok(PromptBundle {
        kind: PromptKind::Chat,
        role: CHAT_ROLE.into(),
        input_description: CHAT_INPUT.into(),
        goal: CHAT_GOAL.into(),
        inputs: PromptInputs {
            teacher_document: serialize_project(ctx.teacher),
            student_document: serialize_project(ctx.student),
            diff,
            description: ctx.description.filter(|d| !d.trim().is_empty()).map(str::to_string),
            question: Some(question.to_string()),
        },
        rules: CHAT_RULES.iter().map(|s| s.to_string()).collect(),
        language_directive: LANGUAGE.into(),
        output_constraint: OutputConstraint {
            max_words: CHAT_MAX_WORDS,
            format: "plain text".into(),
        },
        item: ctx.current.cloned(),
    })
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn ends_sentence(word: &str) -> bool {
    let w = word.trim_end_matches(['"', '\'', ')', ']']);
    w.ends_with(['.', '!', '?'])
}

/// Cut `text` to at most `max_words` whitespace-delimited words, preferring
/// the last sentence end inside the limit; otherwise cut hard and close
/// with a period.
pub fn enforce_word_limit(text: &str, max_words: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        return words.join(" ");
    }
    if max_words == 0 {
        return String::new();
    }
    let kept = &words[..max_words];
    if let Some(end) = kept.iter().rposition(|w| ends_sentence(w)) {
        return kept[..=end].join(" ");
    }
    let mut out = kept.join(" ");
    while out.ends_with(|c: char| c.is_ascii_punctuation()) {
        out.pop();
    }
    if out.is_empty() {
        out = kept[..kept.len() - 1].join(" ");
    }
    out.push('.');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Stub,
    /// OpenAI-compatible chat completions endpoint.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            endpoint: String::new(),
            credential_env: None,
            model: String::new(),
            timeout_secs: 20,
            retries: 1,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl ProviderConfig {
    pub fn stub() -> Self {
        ProviderConfig::default()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Something that turns a prompt into text.
pub trait Provider: Send + Sync {
    fn complete(&self, bundle: &PromptBundle, extra: Option<&str>) -> Result<String, LlmError>;
}

impl<F> Provider for F
where
    F: Fn(&PromptBundle, Option<&str>) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, bundle: &PromptBundle, extra: Option<&str>) -> Result<String, LlmError> {
        self(bundle, extra)
    }
}

/// Deterministic offline provider built from the item under discussion.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl Provider for StubProvider {
    fn complete(&self, bundle: &PromptBundle, _extra: Option<&str>) -> Result<String, LlmError> {
        Ok(match bundle.kind {
            PromptKind::Reasoning => match &bundle.item {
                Some(item) => stub_reasoning(item),
                None => "Your project looks close to the reference. Keep going!".to_string(),
            },
            PromptKind::Chat => {
                let q = bundle.inputs.question.as_deref().unwrap_or_default();
                let about = bundle
                    .item
                    .as_ref()
                    .map_or("Your project already matches the reference.".to_string(), stub_reasoning);
                format!("Good question: \"{q}\". {about} Try it, then run the project and watch what changes on the stage.")
            }
        })
    }
}

fn stub_reasoning(item: &DiffItem) -> String {
    let sprite = item.location.sprite_name.as_deref().unwrap_or("the project");
    let event = item.script_title.as_deref().unwrap_or("main");
    match (item.level, item.kind) {
        (Level::Module, Kind::Missing) => {
            format!("The reference has a sprite called {sprite}. Add it so its scripts can run too.")
        }
        (Level::Module, _) => format!("The sprite {sprite} is not in the reference. You may not need it."),
        (Level::Script, Kind::Missing) => {
            format!("{sprite} needs a {event} script. Without it, this part of the program never starts.")
        }
        (Level::Script, _) => format!("{sprite} has an extra {event} script. Check whether it is really needed."),
        (Level::Block, Kind::Missing) => {
            format!("A block is missing in {sprite}'s {event} script. Adding it makes the sprite behave like the reference.")
        }
        (Level::Block, _) => {
            format!("{sprite}'s {event} script has a block the reference does not use. Removing it may fix the behavior.")
        }
        (Level::Parameter, _) => {
            let slot = item.changed_slots.first();
            match slot {
                Some(c) => format!(
                    "In {sprite}'s {event} script, try {} instead of {}. The value changes how the block behaves.",
                    c.teacher, c.student
                ),
                None => format!("A block setting in {sprite}'s {event} script differs from the reference."),
            }
        }
    }
}

/// Provider speaking the OpenAI-compatible chat completions protocol.
pub struct RemoteProvider {
    client: reqwest::blocking::Client,
    config: ProviderConfig,
}

impl RemoteProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        Ok(RemoteProvider { client, config })
    }
}

impl Provider for RemoteProvider {
    fn complete(&self, bundle: &PromptBundle, extra: Option<&str>) -> Result<String, LlmError> {
        let mut user = bundle.user_text();
        if let Some(e) = extra {
            user.push('\n');
            user.push_str(e);
        }
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": bundle.system_text()},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(var) = &self.config.credential_env {
            let key = std::env::var(var)
                .map_err(|_| LlmError::ProviderUnavailable(format!("environment variable {var} is not set")))?;
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        let value: serde_json::Value = resp.json().map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::ProviderUnavailable("response has no message content".into()))
    }
}

/// Counting semaphore capping concurrent provider calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// A provider plus retry, length and concurrency policy.
pub struct Gateway {
    provider: Box<dyn Provider>,
    retries: u32,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(provider: Box<dyn Provider>, retries: u32, max_in_flight: usize) -> Self {
        Gateway {
            provider,
            retries,
            limiter: Limiter {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    pub fn stub() -> Self {
        Gateway::new(Box::new(StubProvider), 0, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, LlmError> {
        let provider: Box<dyn Provider> = match config.kind {
            ProviderKind::Stub => Box::new(StubProvider),
            ProviderKind::Remote => Box::new(RemoteProvider::new(config.clone())?),
        };
        Ok(Gateway::new(provider, config.retries, config.max_in_flight))
    }

    fn call(&self, bundle: &PromptBundle, extra: Option<&str>) -> Option<String> {
        let _slot = self.limiter.acquire();
        for attempt in 0..=self.retries {
            match self.provider.complete(bundle, extra) {
                Ok(text) if !text.trim().is_empty() => return Some(text),
                Ok(_) => log::warn!("provider returned empty text (attempt {attempt})"),
                Err(e) => log::warn!("provider call failed (attempt {attempt}): {e}"),
            }
        }
        None
    }

    /// Ask once more when the answer is more than twice the limit, then cut.
    fn generate(&self, bundle: &PromptBundle) -> Option<String> {
        let limit = bundle.max_words();
        let mut text = self.call(bundle, None)?;
        let n = word_count(&text);
        if n > 2 * limit {
            let note = format!("Your previous answer had {n} words. Answer again in at most {limit} words.");
            if let Some(again) = self.call(bundle, Some(&note)) {
                text = again;
            }
        }
        let out = enforce_word_limit(&text, limit);
        (!out.is_empty()).then_some(out)
    }

    pub fn explain(&self, bundle: &PromptBundle) -> String {
        self.generate(bundle)
            .unwrap_or_else(|| enforce_word_limit(&reasoning_fallback(bundle), bundle.max_words()))
    }

    pub fn chat(&self, bundle: &PromptBundle) -> String {
        self.generate(bundle)
            .unwrap_or_else(|| enforce_word_limit(&chat_fallback(bundle), bundle.max_words()))
    }
}

fn reasoning_fallback(bundle: &PromptBundle) -> String {
    match &bundle.item {
        Some(item) => format!("{}.", item.message.trim_end_matches('.')),
        None => "Compare your project with the reference one step at a time.".to_string(),
    }
}

fn chat_fallback(bundle: &PromptBundle) -> String {
    match &bundle.item {
        Some(item) => format!("{CHAT_FALLBACK} {}.", item.message.trim_end_matches('.')),
        None => format!("{CHAT_FALLBACK} your project already matches the reference."),
    }
}

/// Generate a hint explanation with the given provider configuration.
pub fn generate_explanation(bundle: &PromptBundle, provider: &ProviderConfig) -> Result<String, LlmError> {
    Ok(Gateway::from_config(provider)?.explain(bundle))
}

/// Generate a chat reply with the given provider configuration.
pub fn generate_chat_reply(bundle: &PromptBundle, provider: &ProviderConfig) -> Result<String, LlmError> {
    Ok(Gateway::from_config(provider)?.chat(bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn short_text_is_untouched() {
        assert_eq!(enforce_word_limit("Add the  block.", 30), "Add the block.");
    }

    #[test]
    fn cuts_at_sentence_boundary() {
        let text = "One two three. Four five six seven.";
        assert_eq!(enforce_word_limit(text, 5), "One two three.");
    }

    #[test]
    fn hard_cut_adds_period() {
        assert_eq!(enforce_word_limit("a b c d e,", 3), "a b c.");
        assert_eq!(enforce_word_limit("a b c, d e", 3), "a b c.");
    }

    #[test]
    fn punctuation_only_words() {
        let out = enforce_word_limit("! ! ! ! !", 2);
        assert!(word_count(&out) <= 2);
    }

    #[test]
    fn limiter_caps_concurrency() {
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (l, p) = (live.clone(), peak.clone());
        let provider = move |_: &PromptBundle, _: Option<&str>| {
            let now = l.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            l.fetch_sub(1, Ordering::SeqCst);
            Ok("Fine.".to_string())
        };
        let gw = Arc::new(Gateway::new(Box::new(provider), 0, 2));
        let bundle = sample_bundle();
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (gw, b) = (gw.clone(), bundle.clone());
                std::thread::spawn(move || gw.explain(&b))
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn long_answer_is_requested_again() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let provider = move |_: &PromptBundle, extra: Option<&str>| {
            c.fetch_add(1, Ordering::SeqCst);
            Ok(match extra {
                None => "word ".repeat(80),
                Some(_) => "Short and sweet.".to_string(),
            })
        };
        let gw = Gateway::new(Box::new(provider), 0, 1);
        assert_eq!(gw.explain(&sample_bundle()), "Short and sweet.");
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn failing_provider_falls_back() {
        let provider = |_: &PromptBundle, _: Option<&str>| Err(LlmError::ProviderUnavailable("down".into()));
        let gw = Gateway::new(Box::new(provider), 2, 1);
        let mut bundle = sample_bundle();
        bundle.kind = PromptKind::Chat;
        bundle.output_constraint.max_words = CHAT_MAX_WORDS;
        let reply = gw.chat(&bundle);
        assert!(reply.starts_with(CHAT_FALLBACK), "{reply}");
    }

    fn sample_bundle() -> PromptBundle {
        let p = ProjectAst::empty();
        let item = DiffItem {
            id: "x".into(),
            level: Level::Module,
            kind: Kind::Missing,
            severity: 1,
            location: Default::default(),
            teacher_location: Default::default(),
            message: "The project is missing the character Cat".into(),
            script_title: None,
            student_fragment: None,
            teacher_fragment: None,
            changed_slots: vec![],
            student_source: None,
            teacher_source: None,
        };
        build_reasoning_prompt(&p, &p, &item, None)
    }

    #[test]
    fn reasoning_prompt_carries_template() {
        let b = sample_bundle();
        let text = b.render();
        assert!(text.contains("Role: Experienced Scratch tutor/evaluator."));
        assert!(text.contains("if uncertain, do not guess"));
        assert!(text.contains(LANGUAGE));
        assert!(!text.contains("Teacher's description:"));
        assert_eq!(b.max_words(), 30);
        assert!(b.inputs.question.is_none());
    }
}
