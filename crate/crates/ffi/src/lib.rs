//! C ABI for the tutoring engine.
//!
//! Every function returns a [`StitchStatus`]. On failure a message is
//! available from [`stitch_last_error`] on the same thread. Handles and
//! strings returned through out-parameters are owned by the caller and
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use stitch::diff::{diff_projects, DiffReport};
use stitch::llm::Gateway;
use stitch::sb3::{load_sb3, serialize_project, write_sb3, Asset, ProjectAst};
use stitch::session::{run_fix_loop, SessionError, SessionStore, Tutor, DEFAULT_TTL};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StitchStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadError = 3,
    AnalysisError = 4,
    RepairError = 5,
    NotFound = 6,
    SessionComplete = 7,
    StaleHint = 8,
    EmptyQuestion = 9,
    StorageError = 10,
    IndexOutOfRange = 11,
    Panic = 12,
}

/// A loaded project together with its media files.
pub struct StitchProject {
    project: ProjectAst,
    assets: Vec<Asset>,
}

pub struct StitchReport {
    report: DiffReport,
}

pub struct StitchTutor {
    tutor: Tutor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(StitchStatus, String);

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::NotFound(_) => StitchStatus::NotFound,
            SessionError::Complete => StitchStatus::SessionComplete,
            SessionError::StaleHint(_) => StitchStatus::StaleHint,
            SessionError::EmptyQuestion => StitchStatus::EmptyQuestion,
            SessionError::Load { .. } => StitchStatus::LoadError,
            SessionError::Analyze { .. } => StitchStatus::AnalysisError,
            SessionError::Repair(_) => StitchStatus::RepairError,
            SessionError::Storage(_) => StitchStatus::StorageError,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> StitchStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            StitchStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error");
            StitchStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(StitchStatus::NullArgument, "null argument".into())
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Failure> {
    if data.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(StitchStatus::InvalidUtf8, e.to_string()))
}

unsafe fn opt_text<'a>(s: *const c_char) -> Result<Option<&'a str>, Failure> {
    if s.is_null() {
        Ok(None)
    } else {
        text(s).map(Some)
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw();
    Ok(())
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn stitch_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stitch_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Release a byte buffer returned by this library.
///
/// # Safety
/// `data`/`len` must be exactly what this library returned.
#[no_mangle]
pub unsafe extern "C" fn stitch_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Vec::from_raw_parts(data, len, len));
    }
}

/// Load a `.sb3` container or a bare `project.json` document.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stitch_project_load(data: *const u8, len: usize, out: *mut *mut StitchProject) -> StitchStatus {
    guard(|| {
        let archive = load_sb3(bytes(data, len)?).map_err(|e| Failure(StitchStatus::LoadError, e.to_string()))?;
        put(
            out,
            StitchProject {
                project: archive.project,
                assets: archive.assets,
            },
        )
    })
}

/// # Safety
/// `project` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stitch_project_free(project: *mut StitchProject) {
    if !project.is_null() {
        drop(Box::from_raw(project));
    }
}

/// The project document as JSON.
///
/// # Safety
/// Pointers must be valid; free the result with [`stitch_string_free`].
#[no_mangle]
pub unsafe extern "C" fn stitch_project_to_json(project: *const StitchProject, out: *mut *mut c_char) -> StitchStatus {
    guard(|| put_string(out, serialize_project(&borrow(project)?.project)))
}

/// The project as a `.sb3` container.
///
/// # Safety
/// Pointers must be valid; free the result with [`stitch_bytes_free`].
#[no_mangle]
pub unsafe extern "C" fn stitch_project_to_sb3(
    project: *const StitchProject,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> StitchStatus {
    guard(|| {
        let p = borrow(project)?;
        if out_data.is_null() || out_len.is_null() {
            return Err(null());
        }
        let buf = write_sb3(&p.project, &p.assets).map_err(|e| Failure(StitchStatus::StorageError, e.to_string()))?;
        let mut buf = buf.into_boxed_slice();
        *out_len = buf.len();
        *out_data = buf.as_mut_ptr();
        std::mem::forget(buf);
        Ok(())
    })
}

/// Compare a student project with the reference.
///
/// # Safety
/// Pointers must be valid; free the result with [`stitch_report_free`].
#[no_mangle]
pub unsafe extern "C" fn stitch_diff(
    student: *const StitchProject,
    teacher: *const StitchProject,
    out: *mut *mut StitchReport,
) -> StitchStatus {
    guard(|| {
        let report = diff_projects(&borrow(student)?.project, &borrow(teacher)?.project)
            .map_err(|e| Failure(StitchStatus::AnalysisError, e.to_string()))?;
        put(out, StitchReport { report })
    })
}

/// # Safety
/// `report` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stitch_report_free(report: *mut StitchReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of items; 0 for a null report.
///
/// # Safety
/// `report` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn stitch_report_len(report: *const StitchReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.items.len())
}

/// Whether the projects are functionally equivalent.
///
/// # Safety
/// `report` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn stitch_report_equivalent(report: *const StitchReport) -> bool {
    report.as_ref().is_some_and(|r| r.report.functionally_equivalent)
}

/// The whole report as JSON.
///
/// # Safety
/// Pointers must be valid; free the result with [`stitch_string_free`].
#[no_mangle]
pub unsafe extern "C" fn stitch_report_to_json(report: *const StitchReport, out: *mut *mut c_char) -> StitchStatus {
    guard(|| put_string(out, borrow(report)?.report.to_json()))
}

/// One item as JSON, most critical first.
///
/// # Safety
/// Pointers must be valid; free the result with [`stitch_string_free`].
#[no_mangle]
pub unsafe extern "C" fn stitch_report_item_json(
    report: *const StitchReport,
    index: usize,
    out: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let r = borrow(report)?;
        let item = r.report.items.get(index).ok_or_else(|| {
            Failure(
                StitchStatus::IndexOutOfRange,
                format!("index {index} out of range for {} items", r.report.items.len()),
            )
        })?;
        put_string(out, json(item))
    })
}

/// Apply fixes until the projects match (at most items + 2 rounds).
///
/// # Safety
/// Pointers must be valid; free the result with [`stitch_project_free`].
#[no_mangle]
pub unsafe extern "C" fn stitch_fix_all(
    student: *const StitchProject,
    teacher: *const StitchProject,
    out: *mut *mut StitchProject,
) -> StitchStatus {
    guard(|| {
        let s = borrow(student)?;
        let t = borrow(teacher)?;
        let items = diff_projects(&s.project, &t.project)
            .map_err(|e| Failure(StitchStatus::AnalysisError, e.to_string()))?
            .items
            .len();
        let result = run_fix_loop(&s.project, &t.project, items + 2);
        if let Some(e) = result.error {
            return Err(Failure(StitchStatus::RepairError, e));
        }
        let mut assets = s.assets.clone();
        for a in &t.assets {
            if !assets.iter().any(|x| x.name == a.name) {
                assets.push(a.clone());
            }
        }
        put(
            out,
            StitchProject {
                project: result.fixed.expect("fix loop without error keeps a project"),
                assets,
            },
        )
    })
}

/// A tutor with the offline explanation provider. `store_dir` may be null
/// for in-memory sessions.
///
/// # Safety
/// `store_dir` must be null or a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_new(store_dir: *const c_char, out: *mut *mut StitchTutor) -> StitchStatus {
    guard(|| {
        let store = match opt_text(store_dir)? {
            Some(dir) => SessionStore::open(dir, DEFAULT_TTL)?,
            None => SessionStore::in_memory(DEFAULT_TTL),
        };
        put(
            out,
            StitchTutor {
                tutor: Tutor::new(store, Arc::new(Gateway::stub())),
            },
        )
    })
}

/// # Safety
/// `tutor` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_free(tutor: *mut StitchTutor) {
    if !tutor.is_null() {
        drop(Box::from_raw(tutor));
    }
}

/// Start a session; writes `{"sessionId", "revision", "report", "status"}`.
///
/// # Safety
/// Buffers must hold the given lengths; `description` may be null.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_create_session(
    tutor: *const StitchTutor,
    teacher: *const u8,
    teacher_len: usize,
    student: *const u8,
    student_len: usize,
    description: *const c_char,
    out_json: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let t = borrow(tutor)?;
        let created = t.tutor.create_session(
            bytes(teacher, teacher_len)?,
            bytes(student, student_len)?,
            opt_text(description)?.map(str::to_string),
        )?;
        put_string(out_json, json(&created))
    })
}

/// The current hint as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_next_hint(
    tutor: *const StitchTutor,
    session_id: *const c_char,
    out_json: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let hint = borrow(tutor)?.tutor.next_hint(text(session_id)?)?;
        put_string(out_json, json(&hint))
    })
}

/// Apply the fix for a hint; writes the new report and status as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_apply_fix(
    tutor: *const StitchTutor,
    session_id: *const c_char,
    hint_id: *const c_char,
    out_json: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let outcome = borrow(tutor)?.tutor.apply_fix(text(session_id)?, text(hint_id)?)?;
        put_string(out_json, json(&outcome))
    })
}

/// Replace the student project; writes the new report and status as JSON.
///
/// # Safety
/// `student` must hold `student_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_submit_revision(
    tutor: *const StitchTutor,
    session_id: *const c_char,
    student: *const u8,
    student_len: usize,
    out_json: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let outcome = borrow(tutor)?
            .tutor
            .submit_revision(text(session_id)?, bytes(student, student_len)?)?;
        put_string(out_json, json(&outcome))
    })
}

/// Ask a question; writes the reply text.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_chat(
    tutor: *const StitchTutor,
    session_id: *const c_char,
    question: *const c_char,
    out_reply: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let reply = borrow(tutor)?.tutor.chat(text(session_id)?, text(question)?)?;
        put_string(out_reply, reply)
    })
}

/// The current report and status as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stitch_tutor_report(
    tutor: *const StitchTutor,
    session_id: *const c_char,
    out_json: *mut *mut c_char,
) -> StitchStatus {
    guard(|| {
        let outcome = borrow(tutor)?.tutor.report(text(session_id)?)?;
        put_string(out_json, json(&outcome))
    })
}
