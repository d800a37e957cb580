use stitch::corpus::{scale_project, seeded_pairs};
use stitch::diff::diff_projects;
use stitch::llm::{build_chat_prompt, build_reasoning_prompt, ChatContext, CHAT_MAX_WORDS, REASONING_MAX_WORDS};
use stitch::session::COMPLETION_MESSAGE;

#[test]
fn word_limits() {
    assert_eq!(REASONING_MAX_WORDS, 30);
    assert_eq!(CHAT_MAX_WORDS, 100);
}

#[test]
fn completion_message() {
    assert_eq!(COMPLETION_MESSAGE, "Congratulations, your project now implements all target features.");
}

#[test]
fn fixture_corpus_covers_the_bug_table() {
    let table = [
        ("Clone Wars", "Cloned sprites accumulate over time"),
        ("Bat Maze", "Wrong picked color"),
        ("Ping Pong", "Moving scripts missed"),
        ("Maze Game", "Wrong respawn location"),
        ("Apple Farm", "Missing re-transmission logic"),
        ("Super Mario", "Reversed logic condition"),
        ("Snake Game", "Wrong death determination logic"),
        ("Scratch Clicker", "Value carries over after reset"),
        ("Cat Adventure", "Message mismatch"),
        ("Platformer", "Misordered scripts"),
    ];
    let fixtures = seeded_pairs();
    let got: Vec<(&str, &str)> = fixtures.iter().map(|f| (f.name.as_str(), f.bug.category.as_str())).collect();
    assert_eq!(got, table);
}

fn prompts() -> (String, String) {
    let f = &seeded_pairs()[0];
    let report = diff_projects(&f.student, &f.teacher).unwrap();
    let item = &report.items[0];
    let reasoning = build_reasoning_prompt(&f.teacher, &f.student, item, Some("Catch the falling clones.")).render();
    let ctx = ChatContext {
        teacher: &f.teacher,
        student: &f.student,
        report: &report,
        current: Some(item),
        description: None,
    };
    let chat = build_chat_prompt("Are there alternative solutions?", ctx).unwrap().render();
    (reasoning, chat)
}

#[test]
fn reasoning_template_is_verbatim() {
    let (reasoning, _) = prompts();
    let lines: Vec<&str> = reasoning.lines().take(7).collect();
    assert_eq!(
        lines,
        [
            "SYSTEM_Reasoning",
            "Role: Experienced Scratch tutor/evaluator.",
            "Input: Teacher JSON, Student JSON, Discrepancy report (Diff), Teacher's description (optional).",
            "Goal: Explain the detected difference and why it matters.",
            "Rules: Supportive and non-authoritative; avoid negativity; No full code or long edits; name Scratch blocks in quotes (e.g., \"When green flag clicked\"); Kid-safe and reliable; if uncertain, do not guess.",
            "Language: Write in the user's language (fallback English).",
            "Output: A concise explanation within 30 words that describe the differences and why it matters.",
        ]
    );
    assert!(reasoning.contains("Teacher's description:\nCatch the falling clones."));
}

#[test]
fn chat_template_is_verbatim() {
    let (_, chat) = prompts();
    let lines: Vec<&str> = chat.lines().take(7).collect();
    assert_eq!(
        lines,
        [
            "SYSTEM_CHAT",
            "Role: Experienced, patient Scratch tutor/evaluator",
            "Input: Student's question, Teacher JSON, Student JSON, Discrepancy report (Diff), Teacher's description (optional).",
            "Goal: Answer the student's question; May explain why the change is needed; May offer 1–2 viable alternatives and when to use them; May connect to broader patterns.",
            "Rules: Clear and kid-safe; no code dumps or JSON patches; avoid long step-by-step edits; encourage reflection without overwhelming the student; handle follow-up questions gracefully.",
            "Language: Write in the user's language (fallback English).",
            "Output: A patient and clear text within 100 words that answers student's question.",
        ]
    );
    assert!(chat.contains("Student's question:\nAre there alternative solutions?"));
    assert!(!chat.contains("Teacher's description:"));
}

#[test]
fn scale_projects_have_seven_sprites_and_at_least_150_blocks() {
    for seed in 0..5 {
        let p = scale_project(seed, 7, 150);
        assert_eq!(p.targets.iter().filter(|t| !t.is_stage).count(), 7);
        assert!(p.block_count() >= 150, "seed {seed}: {}", p.block_count());
    }
}
