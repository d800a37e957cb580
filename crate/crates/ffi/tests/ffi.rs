use std::ffi::{c_char, CStr, CString};
use std::ptr;

use stitch::corpus::seeded_pairs;
use stitch::sb3::write_sb3;
use stitch_ffi::*;

fn take(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { stitch_string_free(s) };
    out
}

fn last_error() -> String {
    let p = stitch_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(bytes: &[u8]) -> *mut StitchProject {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { stitch_project_load(bytes.as_ptr(), bytes.len(), &mut p) }, StitchStatus::Ok);
    p
}

#[test]
fn diff_and_fix_through_handles() {
    let f = &seeded_pairs()[4];
    let s = load(&write_sb3(&f.student, &[]).unwrap());
    let t = load(&write_sb3(&f.teacher, &[]).unwrap());
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(stitch_diff(s, t, &mut r), StitchStatus::Ok);
        assert_eq!(stitch_report_len(r), 1);
        assert!(!stitch_report_equivalent(r));
        let mut js = ptr::null_mut();
        assert_eq!(stitch_report_item_json(r, 0, &mut js), StitchStatus::Ok);
        let item: serde_json::Value = serde_json::from_str(&take(js)).unwrap();
        assert_eq!(item["level"], "BLOCK");
        assert_eq!(stitch_report_item_json(r, 5, &mut js), StitchStatus::IndexOutOfRange);
        assert!(last_error().contains("out of range"));
        let mut whole = ptr::null_mut();
        assert_eq!(stitch_report_to_json(r, &mut whole), StitchStatus::Ok);
        assert!(take(whole).contains("\"functionallyEquivalent\":false"));
        stitch_report_free(r);

        let mut fixed = ptr::null_mut();
        assert_eq!(stitch_fix_all(s, t, &mut fixed), StitchStatus::Ok);
        let mut r2 = ptr::null_mut();
        assert_eq!(stitch_diff(fixed, t, &mut r2), StitchStatus::Ok);
        assert!(stitch_report_equivalent(r2));
        stitch_report_free(r2);

        let mut data = ptr::null_mut();
        let mut len = 0usize;
        assert_eq!(stitch_project_to_sb3(fixed, &mut data, &mut len), StitchStatus::Ok);
        let again = load(std::slice::from_raw_parts(data, len));
        stitch_bytes_free(data, len);
        let mut doc = ptr::null_mut();
        assert_eq!(stitch_project_to_json(again, &mut doc), StitchStatus::Ok);
        assert!(take(doc).contains("\"targets\""));
        stitch_project_free(again);
        stitch_project_free(fixed);
        stitch_project_free(s);
        stitch_project_free(t);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let mut p = ptr::null_mut();
    let junk = b"not a project";
    assert_eq!(
        unsafe { stitch_project_load(junk.as_ptr(), junk.len(), &mut p) },
        StitchStatus::LoadError
    );
    assert!(p.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { stitch_project_load(ptr::null(), 0, &mut p) }, StitchStatus::NullArgument);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { stitch_diff(ptr::null(), ptr::null(), &mut r) }, StitchStatus::NullArgument);
    assert_eq!(unsafe { stitch_report_len(ptr::null()) }, 0);
    unsafe {
        stitch_project_free(ptr::null_mut());
        stitch_string_free(ptr::null_mut());
    }
}

#[test]
fn tutor_session_round_trip() {
    let f = &seeded_pairs()[7];
    let teacher = write_sb3(&f.teacher, &[]).unwrap();
    let student = write_sb3(&f.student, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let dir_c = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut tutor = ptr::null_mut();
        assert_eq!(stitch_tutor_new(dir_c.as_ptr(), &mut tutor), StitchStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(
            stitch_tutor_create_session(
                tutor,
                teacher.as_ptr(),
                teacher.len(),
                student.as_ptr(),
                student.len(),
                ptr::null(),
                &mut out
            ),
            StitchStatus::Ok
        );
        let created: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(created["status"], "IN_PROGRESS");
        let id = CString::new(created["sessionId"].as_str().unwrap()).unwrap();

        assert_eq!(stitch_tutor_next_hint(tutor, id.as_ptr(), &mut out), StitchStatus::Ok);
        let hint: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        let hint_id = CString::new(hint["hintId"].as_str().unwrap()).unwrap();

        let empty = CString::new(" ").unwrap();
        assert_eq!(stitch_tutor_chat(tutor, id.as_ptr(), empty.as_ptr(), &mut out), StitchStatus::EmptyQuestion);

        assert_eq!(stitch_tutor_apply_fix(tutor, id.as_ptr(), hint_id.as_ptr(), &mut out), StitchStatus::Ok);
        let outcome: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(outcome["status"], "COMPLETE");
        assert_eq!(
            stitch_tutor_apply_fix(tutor, id.as_ptr(), hint_id.as_ptr(), &mut out),
            StitchStatus::StaleHint
        );
        assert_eq!(stitch_tutor_next_hint(tutor, id.as_ptr(), &mut out), StitchStatus::SessionComplete);

        assert_eq!(
            stitch_tutor_submit_revision(tutor, id.as_ptr(), student.as_ptr(), student.len(), &mut out),
            StitchStatus::Ok
        );
        assert!(take(out).contains("IN_PROGRESS"));
        stitch_tutor_free(tutor);

        let mut reopened = ptr::null_mut();
        assert_eq!(stitch_tutor_new(dir_c.as_ptr(), &mut reopened), StitchStatus::Ok);
        assert_eq!(stitch_tutor_report(reopened, id.as_ptr(), &mut out), StitchStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(report["revision"], 2);
        let missing = CString::new("ffffffff").unwrap();
        assert_eq!(stitch_tutor_report(reopened, missing.as_ptr(), &mut out), StitchStatus::NotFound);
        stitch_tutor_free(reopened);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/stitch.h")).unwrap();
    for name in [
        "stitch_last_error",
        "stitch_project_load",
        "stitch_diff",
        "stitch_report_item_json",
        "stitch_fix_all",
        "stitch_tutor_create_session",
        "stitch_tutor_apply_fix",
        "typedef struct StitchProject StitchProject",
        "STITCH_STATUS_STALE_HINT = 8",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
