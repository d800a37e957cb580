//! The tutoring loop: sessions holding a reference and an evolving student
//! project, hints with explanations, fixes, revisions and chat.

mod batch;
pub mod http;
mod store;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use batch::{run_batch, run_fix_loop, BatchRow, FixLoop};
pub use store::{SessionStore, DEFAULT_TTL};

use crate::diff::{prepare, script_blocks, BlockStep, DiffError, DiffItem, DiffReport, Fragment, Level};
use crate::llm::{build_chat_prompt, build_reasoning_prompt, ChatContext, Gateway, LlmError};
use crate::render::{stitch, to_render_spec, Highlight, RenderSpec};
use crate::repair::{apply_patch, synthesize_patch, RepairError};
use crate::sb3::{load_sb3, write_sb3, Asset, BlockNode, LoadError, ProjectAst};

pub const COMPLETION_MESSAGE: &str = "Congratulations, your project now implements all target features.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    InProgress,
    Complete,
}

impl Status {
    fn of(report: &DiffReport) -> Self {
        if report.functionally_equivalent {
            Status::Complete
        } else {
            Status::InProgress
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Teacher,
    Student,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Teacher => "teacher",
            Side::Student => "student",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("session is complete")]
    Complete,
    #[error("hint {0} does not belong to the current report")]
    StaleHint(String),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("{side} project: {source}")]
    Load { side: Side, source: LoadError },
    #[error("{side} project: {message}")]
    Analyze { side: Side, message: String },
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error("storage: {0}")]
    Storage(String),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "SESSION_NOT_FOUND",
            SessionError::Complete => "SESSION_COMPLETE",
            SessionError::StaleHint(_) => "STALE_HINT",
            SessionError::EmptyQuestion => "EMPTY_QUESTION",
            SessionError::Load { .. } => "LOAD_ERROR",
            SessionError::Analyze { .. } => "ANALYSIS_ERROR",
            SessionError::Repair(_) => "REPAIR_ERROR",
            SessionError::Storage(_) => "STORAGE_ERROR",
        }
    }
}

impl From<DiffError> for SessionError {
    fn from(e: DiffError) -> Self {
        match e {
            DiffError::Student(x) => SessionError::Analyze {
                side: Side::Student,
                message: x.to_string(),
            },
            DiffError::Teacher(x) => SessionError::Analyze {
                side: Side::Teacher,
                message: x.to_string(),
            },
        }
    }
}

/// Renderer input for one side of a hint: one spec per script or block
/// run, plus the same content as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FragmentView {
    pub specs: Vec<RenderSpec>,
    pub text: Vec<String>,
}

impl FragmentView {
    pub fn new(fragment: &Fragment, item: &DiffItem) -> Self {
        let scripted = |blocks: Vec<BlockNode>| -> RenderSpec {
            let all: Vec<Highlight> = (0..blocks.len()).map(|i| Highlight::block(vec![BlockStep::at(i)])).collect();
            stitch(to_render_spec(&blocks, &all)).expect("script fragments start with their hat")
        };
        let specs = match fragment {
            Fragment::Sprite { scripts, .. } => scripts.iter().map(|s| scripted(script_blocks(s))).collect(),
            Fragment::Script { script } => vec![scripted(script_blocks(script))],
            Fragment::Blocks { blocks } => {
                let highlights: Vec<Highlight> = if item.level == Level::Parameter {
                    item.changed_slots
                        .iter()
                        .map(|c| Highlight::slot(vec![BlockStep::at(0)], c.slot.clone()))
                        .collect()
                } else {
                    (0..blocks.len()).map(|i| Highlight::block(vec![BlockStep::at(i)])).collect()
                };
                to_render_spec(blocks, &highlights)
            }
        };
        FragmentView {
            specs,
            text: fragment.text(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hint {
    /// `{revision}:{item id}`
    pub hint_id: String,
    pub revision: u64,
    pub item: DiffItem,
    pub explanation: String,
    pub student_render: Option<FragmentView>,
    pub teacher_render: Option<FragmentView>,
    pub patch_available: bool,
    /// The fix removes student work.
    pub destructive: bool,
}

pub fn hint_id(revision: u64, item: &DiffItem) -> String {
    format!("{revision}:{}", item.id)
}

fn parse_hint_id(hint_id: &str) -> Option<(u64, &str)> {
    let (rev, item) = hint_id.split_once(':')?;
    Some((rev.parse().ok()?, item))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TranscriptEntry {
    #[serde(rename_all = "camelCase")]
    HintShown { revision: u64, hint_id: String },
    #[serde(rename_all = "camelCase")]
    PatchApplied {
        revision: u64,
        hint_id: String,
        items_before: usize,
        items_after: usize,
    },
    #[serde(rename_all = "camelCase")]
    ManualRevision { revision: u64, items: usize },
    #[serde(rename_all = "camelCase")]
    ChatExchange { revision: u64, question: String, reply: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub teacher: ProjectAst,
    pub student: ProjectAst,
    pub teacher_assets: Vec<Asset>,
    pub student_assets: Vec<Asset>,
    pub description: Option<String>,
    pub report_revision: u64,
    pub current_report: DiffReport,
    pub transcript: Vec<TranscriptEntry>,
    pub status: Status,
    pub current_hint: Option<Hint>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl SessionState {
    fn reanalyze(&mut self) -> Result<(), SessionError> {
        let report = prepare(&self.student, &self.teacher)?.report();
        self.status = Status::of(&report);
        self.current_report = report;
        self.report_revision += 1;
        self.current_hint = None;
        self.updated_at = now();
        Ok(())
    }

    fn outcome(&self) -> Outcome {
        Outcome {
            revision: self.report_revision,
            report: self.current_report.clone(),
            status: self.status,
            message: (self.status == Status::Complete).then(|| COMPLETION_MESSAGE.to_string()),
        }
    }

    /// The student project as a container, with any media that sprites
    /// copied from the reference need.
    pub fn student_sb3(&self) -> Result<Vec<u8>, SessionError> {
        let needed = asset_names(&self.student);
        let mut seen = BTreeSet::new();
        let assets: Vec<Asset> = self
            .student_assets
            .iter()
            .chain(self.teacher_assets.iter().filter(|a| needed.contains(&a.name)))
            .filter(|a| seen.insert(a.name.clone()))
            .cloned()
            .collect();
        write_sb3(&self.student, &assets).map_err(|e| SessionError::Storage(e.to_string()))
    }
}

fn asset_names(p: &ProjectAst) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in &p.targets {
        for key in ["costumes", "sounds"] {
            let Some(list) = t.extra.get(key).and_then(|v| v.as_array()) else { continue };
            for a in list {
                if let Some(name) = a.get("md5ext").and_then(|v| v.as_str()) {
                    out.insert(name.to_string());
                }
            }
        }
    }
    out
}

pub(crate) fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Report and status after a change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Outcome {
    pub revision: u64,
    pub report: DiffReport,
    pub status: Status,
    /// Summative message once the project is complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Created {
    pub session_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

fn load_side(bytes: &[u8], side: Side) -> Result<(ProjectAst, Vec<Asset>), SessionError> {
    let archive = load_sb3(bytes).map_err(|source| SessionError::Load { side, source })?;
    Ok((archive.project, archive.assets))
}

/// Sessions plus the explanation provider.
pub struct Tutor {
    store: SessionStore,
    gateway: Arc<Gateway>,
}

impl Tutor {
    pub fn new(store: SessionStore, gateway: Arc<Gateway>) -> Self {
        Tutor { store, gateway }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn create_session(
        &self,
        teacher: &[u8],
        student: &[u8],
        description: Option<String>,
    ) -> Result<Created, SessionError> {
        let (teacher, teacher_assets) = load_side(teacher, Side::Teacher)?;
        let (student, student_assets) = load_side(student, Side::Student)?;
        let report = prepare(&student, &teacher)?.report();
        let t = now();
        let state = SessionState {
            session_id: self.store.fresh_id(),
            teacher,
            student,
            teacher_assets,
            student_assets,
            description: description.filter(|d| !d.trim().is_empty()),
            report_revision: 0,
            status: Status::of(&report),
            current_report: report,
            transcript: Vec::new(),
            current_hint: None,
            created_at: t,
            updated_at: t,
        };
        let created = Created {
            session_id: state.session_id.clone(),
            outcome: state.outcome(),
        };
        self.store.insert(state)?;
        Ok(created)
    }

    pub fn next_hint(&self, id: &str) -> Result<Hint, SessionError> {
        let handle = self.store.get(id)?;
        let (teacher, student, item, revision, description) = {
            let s = handle.lock().unwrap_or_else(|e| e.into_inner());
            if s.status == Status::Complete {
                return Err(SessionError::Complete);
            }
            if let Some(h) = &s.current_hint {
                return Ok(h.clone());
            }
            let item = s.current_report.items.first().cloned().ok_or(SessionError::Complete)?;
            (s.teacher.clone(), s.student.clone(), item, s.report_revision, s.description.clone())
        };

        let patch = prepare(&student, &teacher)
            .map_err(SessionError::from)
            .and_then(|cmp| Ok(synthesize_patch(&item, &cmp, &student, &teacher)?));
        let bundle = build_reasoning_prompt(&teacher, &student, &item, description.as_deref());
        let explanation = self.gateway.explain(&bundle);
        let hint = Hint {
            hint_id: hint_id(revision, &item),
            revision,
            student_render: item.student_fragment.as_ref().map(|f| FragmentView::new(f, &item)),
            teacher_render: item.teacher_fragment.as_ref().map(|f| FragmentView::new(f, &item)),
            patch_available: patch.is_ok(),
            destructive: patch.as_ref().is_ok_and(|p| p.destructive),
            explanation,
            item,
        };

        let mut s = handle.lock().unwrap_or_else(|e| e.into_inner());
        if s.report_revision != revision {
            return Ok(hint);
        }
        if let Some(h) = &s.current_hint {
            return Ok(h.clone());
        }
        s.current_hint = Some(hint.clone());
        s.transcript.push(TranscriptEntry::HintShown {
            revision,
            hint_id: hint.hint_id.clone(),
        });
        s.updated_at = now();
        self.store.persist(&s)?;
        Ok(hint)
    }

    pub fn apply_fix(&self, id: &str, hint: &str) -> Result<Outcome, SessionError> {
        let handle = self.store.get(id)?;
        let mut s = handle.lock().unwrap_or_else(|e| e.into_inner());
        let stale = || SessionError::StaleHint(hint.to_string());
        let (revision, item_id) = parse_hint_id(hint).ok_or_else(stale)?;
        if revision != s.report_revision {
            return Err(stale());
        }
        let item = s.current_report.item(item_id).cloned().ok_or_else(stale)?;
        let cmp = prepare(&s.student, &s.teacher)?;
        let patch = synthesize_patch(&item, &cmp, &s.student, &s.teacher)?.at_revision(revision);
        let patched = apply_patch(&s.student, &patch)?;
        let before = s.current_report.items.len();
        let previous = (s.student.clone(), s.current_report.clone(), s.status, s.current_hint.clone());
        s.student = patched;
        if let Err(e) = s.reanalyze() {
            (s.student, s.current_report, s.status, s.current_hint) = previous;
            return Err(e);
        }
        let after = s.current_report.items.len();
        let revision = s.report_revision;
        s.transcript.push(TranscriptEntry::PatchApplied {
            revision,
            hint_id: hint.to_string(),
            items_before: before,
            items_after: after,
        });
        self.store.persist(&s)?;
        Ok(s.outcome())
    }

    pub fn submit_revision(&self, id: &str, student: &[u8]) -> Result<Outcome, SessionError> {
        let (project, assets) = load_side(student, Side::Student)?;
        let handle = self.store.get(id)?;
        let mut s = handle.lock().unwrap_or_else(|e| e.into_inner());
        prepare(&project, &s.teacher)?;
        s.student = project;
        s.student_assets = assets;
        s.reanalyze()?;
        let items = s.current_report.items.len();
        let revision = s.report_revision;
        s.transcript.push(TranscriptEntry::ManualRevision {
            revision,
            items,
        });
        self.store.persist(&s)?;
        Ok(s.outcome())
    }

    pub fn chat(&self, id: &str, question: &str) -> Result<String, SessionError> {
        if question.trim().is_empty() {
            return Err(SessionError::EmptyQuestion);
        }
        let handle = self.store.get(id)?;
        let (teacher, student, report, current, description, revision) = {
            let s = handle.lock().unwrap_or_else(|e| e.into_inner());
            (
                s.teacher.clone(),
                s.student.clone(),
                s.current_report.clone(),
                s.current_hint.as_ref().map(|h| h.item.clone()),
                s.description.clone(),
                s.report_revision,
            )
        };
        let bundle = build_chat_prompt(
            question,
            ChatContext {
                teacher: &teacher,
                student: &student,
                report: &report,
                current: current.as_ref(),
                description: description.as_deref(),
            },
        )
        .map_err(|e| match e {
            LlmError::EmptyQuestion => SessionError::EmptyQuestion,
            other => SessionError::Storage(other.to_string()),
        })?;
        let reply = self.gateway.chat(&bundle);
        let mut s = handle.lock().unwrap_or_else(|e| e.into_inner());
        s.transcript.push(TranscriptEntry::ChatExchange {
            revision,
            question: question.trim().to_string(),
            reply: reply.clone(),
        });
        s.updated_at = now();
        self.store.persist(&s)?;
        Ok(reply)
    }

    pub fn report(&self, id: &str) -> Result<Outcome, SessionError> {
        let handle = self.store.get(id)?;
        let s = handle.lock().unwrap_or_else(|e| e.into_inner());
        Ok(s.outcome())
    }

    pub fn project(&self, id: &str) -> Result<Vec<u8>, SessionError> {
        let handle = self.store.get(id)?;
        let s = handle.lock().unwrap_or_else(|e| e.into_inner());
        s.student_sb3()
    }

    pub fn transcript(&self, id: &str) -> Result<Vec<TranscriptEntry>, SessionError> {
        let handle = self.store.get(id)?;
        let s = handle.lock().unwrap_or_else(|e| e.into_inner());
        Ok(s.transcript.clone())
    }
}

/// Text of a hint for terminals.
pub fn hint_text(hint: &Hint) -> String {
    let mut out = format!("{}. {}\n{}\n", hint.item.severity, hint.item.message, hint.explanation);
    for (label, view) in [("yours", &hint.student_render), ("target", &hint.teacher_render)] {
        if let Some(v) = view {
            out.push_str(&format!("-- {label}\n"));
            for line in &v.text {
                out.push_str(&format!("  {line}\n"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::seeded_pairs;

    fn sb3(p: &ProjectAst) -> Vec<u8> {
        write_sb3(p, &[]).unwrap()
    }

    fn tutor() -> Tutor {
        Tutor::new(SessionStore::in_memory(DEFAULT_TTL), Arc::new(Gateway::stub()))
    }

    #[test]
    fn identical_projects_complete_immediately() {
        let f = &seeded_pairs()[0];
        let c = tutor().create_session(&sb3(&f.teacher), &sb3(&f.teacher), None).unwrap();
        assert_eq!(c.outcome.status, Status::Complete);
        assert_eq!(c.outcome.message.as_deref(), Some(COMPLETION_MESSAGE));
    }

    #[test]
    fn malformed_student_names_the_side() {
        let f = &seeded_pairs()[0];
        let t = tutor();
        let err = t.create_session(&sb3(&f.teacher), b"not a project", None).unwrap_err();
        assert!(matches!(err, SessionError::Load { side: Side::Student, .. }));
        assert!(t.store().is_empty());
    }

    #[test]
    fn hint_fix_loop_reaches_completion() {
        let f = &seeded_pairs()[0];
        let t = tutor();
        let c = t.create_session(&sb3(&f.teacher), &sb3(&f.student), None).unwrap();
        assert_eq!(c.outcome.status, Status::InProgress);
        let h = t.next_hint(&c.session_id).unwrap();
        assert_eq!(t.next_hint(&c.session_id).unwrap().hint_id, h.hint_id);
        assert!(f.bug.matches(&h.item));
        assert!(h.patch_available);
        assert!(crate::llm::word_count(&h.explanation) <= 30);
        let out = t.apply_fix(&c.session_id, &h.hint_id).unwrap();
        assert_eq!(out.status, Status::Complete);
        assert_eq!(out.message.as_deref(), Some(COMPLETION_MESSAGE));
        assert!(matches!(t.next_hint(&c.session_id), Err(SessionError::Complete)));
        assert!(matches!(
            t.apply_fix(&c.session_id, &h.hint_id),
            Err(SessionError::StaleHint(_))
        ));
        let log = t.transcript(&c.session_id).unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn revision_invalidates_hints() {
        let f = &seeded_pairs()[3];
        let t = tutor();
        let c = t.create_session(&sb3(&f.teacher), &sb3(&f.student), None).unwrap();
        let h = t.next_hint(&c.session_id).unwrap();
        let same = t.submit_revision(&c.session_id, &sb3(&f.student)).unwrap();
        assert_eq!(same.report.items.len(), c.outcome.report.items.len());
        assert_eq!(same.revision, 1);
        assert!(matches!(
            t.apply_fix(&c.session_id, &h.hint_id),
            Err(SessionError::StaleHint(_))
        ));
        let fixed = t.submit_revision(&c.session_id, &sb3(&f.teacher)).unwrap();
        assert_eq!(fixed.status, Status::Complete);
    }

    #[test]
    fn chat_is_bounded_and_logged() {
        let f = &seeded_pairs()[1];
        let t = tutor();
        let c = t.create_session(&sb3(&f.teacher), &sb3(&f.student), None).unwrap();
        assert!(matches!(t.chat(&c.session_id, "  "), Err(SessionError::EmptyQuestion)));
        let reply = t.chat(&c.session_id, "Why does my bat reset?").unwrap();
        assert!(crate::llm::word_count(&reply) <= 100);
        assert_eq!(t.transcript(&c.session_id).unwrap().len(), 1);
    }

    #[test]
    fn unknown_session() {
        assert!(matches!(tutor().report("nope"), Err(SessionError::NotFound(_))));
    }
}
