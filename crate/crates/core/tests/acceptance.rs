mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stitch::corpus::{mutate, scale_project, seeded_pairs};
use stitch::diff::{align_blocks_lcs, diff_projects};
use stitch::llm::{
    build_chat_prompt, build_reasoning_prompt, word_count, ChatContext, Gateway, LlmError, PromptBundle,
    CHAT_MAX_WORDS, REASONING_MAX_WORDS,
};
use stitch::normalize::normalize;
use stitch::sb3::{load_sb3, serialize_project, write_sb3, ProjectAst};
use stitch::session::{SessionError, SessionStore, Status, Tutor, DEFAULT_TTL};

const SEEDED_TOP_MIN: usize = 9;
const SEEDED_PRESENT_MIN: usize = 10;
const EQUIVALENCE_PAIRS: usize = 10;
const LATENCY_RUNS: usize = 50;
const LATENCY_SPRITES: usize = 7;
const LATENCY_BLOCKS: usize = 150;
const LATENCY_P95_LIMIT: Duration = Duration::from_millis(500);
const LCS_PAIRS: u64 = 1000;
const LCS_MAX_LEN: usize = 8;
const FIX_SLACK: usize = 2;
const IDEMPOTENCE_VARIANTS: u64 = 500;
const FUZZED_OUTPUTS: u64 = 1000;
const DETERMINISM_RUNS: usize = 5;

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn seeded_bug_detection() -> Line {
    let fixtures = seeded_pairs();
    let mut top = 0;
    let mut present = 0;
    let mut misses = Vec::new();
    for f in &fixtures {
        let r = diff_projects(&f.student, &f.teacher).expect("fixture analyzes");
        let hit = r.items.iter().position(|i| f.bug.matches(i));
        if hit == Some(0) {
            top += 1;
        } else {
            misses.push(f.name.clone());
        }
        if hit.is_some() {
            present += 1;
        }
    }
    Line {
        name: "seeded-bug detection",
        pass: fixtures.len() == 10 && top >= SEEDED_TOP_MIN && present >= SEEDED_PRESENT_MIN,
        detail: format!("top {top}/{}, present {present}/{}, not top: {misses:?}", fixtures.len(), fixtures.len()),
    }
}

fn equivalence_blindness() -> Line {
    let fixtures = seeded_pairs();
    let mut clean = 0;
    let mut total = 0;
    for (k, f) in fixtures.iter().enumerate().take(EQUIVALENCE_PAIRS) {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let v = mutate::alpha_rename(&f.teacher, &mut rng);
        let v = mutate::commute(&v, &mut rng);
        let v = mutate::de_morgan(&v, &mut rng);
        let v = mutate::noise(&v, &mut rng);
        total += 1;
        if diff_projects(&v, &f.teacher).expect("variant analyzes").functionally_equivalent {
            clean += 1;
        }
    }
    Line {
        name: "equivalence blindness",
        pass: total == EQUIVALENCE_PAIRS && clean == total,
        detail: format!("{clean}/{total} variant pairs equivalent"),
    }
}

fn latency() -> Line {
    let mut times = Vec::with_capacity(LATENCY_RUNS);
    let mut blocks = 0;
    for seed in 0..LATENCY_RUNS as u64 {
        let teacher = scale_project(seed, LATENCY_SPRITES, LATENCY_BLOCKS);
        let student = stitch::corpus::perturb_literal(&mutate::equivalent_variant(&teacher, seed), seed);
        blocks += teacher.block_count();
        let start = Instant::now();
        let r = diff_projects(&student, &teacher).expect("scale project analyzes");
        times.push(start.elapsed());
        assert!(!r.to_json().is_empty());
    }
    times.sort();
    let p95 = times[(times.len() * 95).div_ceil(100) - 1];
    Line {
        name: "latency",
        pass: p95 < LATENCY_P95_LIMIT,
        detail: format!(
            "p95 {:.1} ms, max {:.1} ms over {LATENCY_RUNS} runs, {} blocks / {LATENCY_SPRITES} sprites avg",
            p95.as_secs_f64() * 1e3,
            times[times.len() - 1].as_secs_f64() * 1e3,
            blocks / LATENCY_RUNS,
        ),
    }
}

fn lcs_oracle() -> Line {
    let mut agree = 0;
    let mut first_bad = None;
    for seed in 0..LCS_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(0..=LCS_MAX_LEN);
        let m = rng.gen_range(0..=LCS_MAX_LEN);
        let s = common::random_seq(&mut rng, n, 0);
        let t = common::random_seq(&mut rng, m, 0);
        let script = align_blocks_lcs(&common::seq(s.clone()), &common::seq(t.clone()));
        if script.cost() == common::brute_force_cost(&s, &t) && script.apply(&s) == t {
            agree += 1;
        } else if first_bad.is_none() {
            first_bad = Some(seed);
        }
    }
    Line {
        name: "LCS oracle",
        pass: agree == LCS_PAIRS,
        detail: format!("{agree}/{LCS_PAIRS} pairs match brute force, first mismatch {first_bad:?}"),
    }
}

fn fixed_point_repair() -> Line {
    let tutor = Tutor::new(SessionStore::in_memory(DEFAULT_TTL), Arc::new(Gateway::stub()));
    let mut ok = 0;
    let mut failures = Vec::new();
    let fixtures = seeded_pairs();
    for f in &fixtures {
        match run_session(&tutor, &f.student, &f.teacher) {
            Ok(()) => ok += 1,
            Err(e) => failures.push(format!("{}: {e}", f.name)),
        }
    }
    Line {
        name: "fixed-point repair",
        pass: ok == fixtures.len(),
        detail: format!("{ok}/{} pairs converged and reloaded, failures: {failures:?}", fixtures.len()),
    }
}

fn run_session(tutor: &Tutor, student: &ProjectAst, teacher: &ProjectAst) -> Result<(), String> {
    let t = write_sb3(teacher, &[]).map_err(|e| e.to_string())?;
    let s = write_sb3(student, &[]).map_err(|e| e.to_string())?;
    let created = tutor.create_session(&t, &s, None).map_err(|e| e.to_string())?;
    let id = created.session_id;
    let budget = created.outcome.report.items.len() + FIX_SLACK;
    let mut status = created.outcome.status;
    let mut iterations = 0;
    while status != Status::Complete {
        if iterations == budget {
            return Err(format!("not complete after {budget} iterations"));
        }
        let hint = tutor.next_hint(&id).map_err(|e| e.to_string())?;
        status = tutor.apply_fix(&id, &hint.hint_id).map_err(|e| e.to_string())?.status;
        iterations += 1;
    }
    if !matches!(tutor.next_hint(&id), Err(SessionError::Complete)) {
        return Err("complete session still offers hints".into());
    }
    let bytes = tutor.project(&id).map_err(|e| e.to_string())?;
    let reloaded = load_sb3(&bytes).map_err(|e| format!("reload: {e}"))?.project;
    let r = diff_projects(&reloaded, teacher).map_err(|e| e.to_string())?;
    if !r.items.is_empty() {
        return Err(format!("reloaded project has {} items", r.items.len()));
    }
    Ok(())
}

fn normalization_idempotence() -> Line {
    let mut projects: Vec<ProjectAst> = seeded_pairs().into_iter().flat_map(|f| [f.student, f.teacher]).collect();
    let corpus = projects.len();
    for seed in 0..IDEMPOTENCE_VARIANTS {
        let base = &projects[seed as usize % corpus];
        let v = if seed % 5 == 4 {
            mutate::equivalent_variant(&scale_project(seed, 3, 40), seed)
        } else {
            mutate::equivalent_variant(base, seed)
        };
        projects.push(stitch::corpus::perturb_literal(&v, seed));
    }
    let mut stable = 0;
    for p in &projects {
        let once = normalize(p).expect("normalizes").project;
        let twice = normalize(&once).expect("normalizes").project;
        if once == twice {
            stable += 1;
        }
    }
    Line {
        name: "normalization idempotence",
        pass: stable == projects.len(),
        detail: format!("{stable}/{} projects ({corpus} corpus + {IDEMPOTENCE_VARIANTS} variants)", projects.len()),
    }
}

fn word_limits() -> Line {
    let f = &seeded_pairs()[0];
    let report = diff_projects(&f.student, &f.teacher).expect("fixture analyzes");
    let item = &report.items[0];
    let reasoning = build_reasoning_prompt(&f.teacher, &f.student, item, None);
    let ctx = ChatContext {
        teacher: &f.teacher,
        student: &f.student,
        report: &report,
        current: Some(item),
        description: None,
    };
    let chat = build_chat_prompt("Why does this matter?", ctx).expect("non-empty question");
    let mut worst_explain = 0;
    let mut worst_chat = 0;
    for seed in 0..FUZZED_OUTPUTS {
        let provider = move |_: &PromptBundle, extra: Option<&str>| -> Result<String, LlmError> {
            let salt = u64::from(extra.is_some());
            Ok(common::fuzz_output(&mut ChaCha8Rng::seed_from_u64(seed * 2 + salt)))
        };
        let gateway = Gateway::new(Box::new(provider), 1, 1);
        worst_explain = worst_explain.max(word_count(&gateway.explain(&reasoning)));
        worst_chat = worst_chat.max(word_count(&gateway.chat(&chat)));
    }
    let deterministic = stub_pipeline() == stub_pipeline();
    Line {
        name: "word-limit enforcement",
        pass: worst_explain <= REASONING_MAX_WORDS && worst_chat <= CHAT_MAX_WORDS && deterministic,
        detail: format!(
            "max {worst_explain}/{REASONING_MAX_WORDS} explain, {worst_chat}/{CHAT_MAX_WORDS} chat words over {FUZZED_OUTPUTS} outputs, stub pipeline deterministic: {deterministic}"
        ),
    }
}

/// Every hint, chat reply, report and final project of a stub-backed run.
fn stub_pipeline() -> Vec<u8> {
    let tutor = Tutor::new(SessionStore::in_memory(DEFAULT_TTL), Arc::new(Gateway::stub()));
    let mut out = Vec::new();
    for f in seeded_pairs() {
        let t = write_sb3(&f.teacher, &[]).expect("writes");
        let s = write_sb3(&f.student, &[]).expect("writes");
        let created = tutor.create_session(&t, &s, Some(f.name.clone())).expect("session");
        let id = created.session_id;
        out.extend(created.outcome.report.to_json().into_bytes());
        let mut status = created.outcome.status;
        while status != Status::Complete {
            let hint = tutor.next_hint(&id).expect("hint");
            out.extend(serde_json::to_vec(&hint).expect("serializes"));
            out.extend(tutor.chat(&id, "What should I change?").expect("reply").into_bytes());
            let outcome = tutor.apply_fix(&id, &hint.hint_id).expect("fix");
            out.extend(outcome.report.to_json().into_bytes());
            status = outcome.status;
        }
        out.extend(tutor.chat(&id, "Am I done?").expect("reply").into_bytes());
        out.extend(tutor.project(&id).expect("project"));
    }
    out
}

fn report_determinism() -> Line {
    let mut identical = 0;
    let mut total = 0;
    let mut inputs: Vec<(ProjectAst, ProjectAst)> =
        seeded_pairs().into_iter().map(|f| (f.student, f.teacher)).collect();
    for seed in 0..5 {
        let teacher = scale_project(seed, LATENCY_SPRITES, LATENCY_BLOCKS);
        inputs.push((stitch::corpus::perturb_literal(&teacher, seed), teacher));
    }
    for (s, t) in &inputs {
        let s_doc = serialize_project(s);
        let first = diff_projects(s, t).expect("analyzes").to_json();
        let same = (1..DETERMINISM_RUNS).all(|_| {
            let s_again = stitch::sb3::load_project(s_doc.as_bytes()).expect("reloads");
            diff_projects(&s_again, t).expect("analyzes").to_json() == first
        });
        total += 1;
        if same {
            identical += 1;
        }
    }
    Line {
        name: "report determinism",
        pass: identical == total,
        detail: format!("{identical}/{total} inputs byte-identical over {DETERMINISM_RUNS} runs"),
    }
}

fn main() {
    let lines = [
        seeded_bug_detection(),
        equivalence_blindness(),
        latency(),
        lcs_oracle(),
        fixed_point_repair(),
        normalization_idempotence(),
        word_limits(),
        report_determinism(),
    ];
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
