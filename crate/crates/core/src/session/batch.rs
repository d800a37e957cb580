//! Offline evaluation over a corpus directory.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::read_corpus;
use crate::diff::{prepare, DiffReport};
use crate::repair::{apply_patch, synthesize_patch};
use crate::sb3::ProjectAst;

/// Result of repeatedly fixing the top item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixLoop {
    pub iterations: usize,
    pub converged: bool,
    pub remaining: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub fixed: Option<ProjectAst>,
}

/// Apply the fix for the most critical item until nothing is left or
/// `max_iterations` fixes have been applied.
pub fn run_fix_loop(student: &ProjectAst, teacher: &ProjectAst, max_iterations: usize) -> FixLoop {
    let mut current = student.clone();
    let mut iterations = 0;
    loop {
        let step = prepare(&current, teacher).map_err(|e| e.to_string()).and_then(|cmp| {
            let report = cmp.report();
            match report.items.first() {
                None => Ok(None),
                Some(_) if iterations >= max_iterations => Ok(Some((report.items.len(), None))),
                Some(item) => synthesize_patch(item, &cmp, &current, teacher)
                    .and_then(|p| apply_patch(&current, &p))
                    .map(|next| Some((report.items.len(), Some(next))))
                    .map_err(|e| e.to_string()),
            }
        });
        match step {
            Ok(None) => {
                return FixLoop {
                    iterations,
                    converged: true,
                    remaining: 0,
                    error: None,
                    fixed: Some(current),
                }
            }
            Ok(Some((_, Some(next)))) => {
                current = next;
                iterations += 1;
            }
            Ok(Some((n, None))) => {
                return FixLoop {
                    iterations,
                    converged: false,
                    remaining: n,
                    error: None,
                    fixed: Some(current),
                }
            }
            Err(e) => {
                return FixLoop {
                    iterations,
                    converged: false,
                    remaining: 0,
                    error: Some(e),
                    fixed: None,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchRow {
    pub name: String,
    pub items: usize,
    /// Whether the most critical item is the seeded bug; absent when the
    /// pair has no expectation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_matches: Option<bool>,
    /// Whether any item is the seeded bug.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeded_found: Option<bool>,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Diff and fix every pair under `dir`. Failing pairs get a row with the
/// error and the run continues.
pub fn run_batch(dir: &Path) -> std::io::Result<Vec<BatchRow>> {
    Ok(read_corpus(dir)?
        .into_iter()
        .map(|entry| {
            let mut row = BatchRow {
                name: entry.name.clone(),
                items: 0,
                top_matches: None,
                seeded_found: None,
                latency_ms: 0.0,
                iterations: None,
                converged: false,
                error: None,
            };
            let (student, teacher) = match (entry.student, entry.teacher) {
                (Ok(s), Ok(t)) => (s, t),
                (Err(e), _) | (_, Err(e)) => {
                    row.error = Some(e);
                    return row;
                }
            };
            let start = Instant::now();
            let report: DiffReport = match prepare(&student, &teacher) {
                Ok(cmp) => cmp.report(),
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            row.latency_ms = start.elapsed().as_secs_f64() * 1000.0;
            row.items = report.items.len();
            if let Some(bug) = &entry.bug {
                row.top_matches = Some(report.items.first().is_some_and(|i| bug.matches(i)));
                row.seeded_found = Some(report.items.iter().any(|i| bug.matches(i)));
            }
            let fix = run_fix_loop(&student, &teacher, report.items.len() + 2);
            row.iterations = Some(fix.iterations);
            row.converged = fix.converged;
            row.error = fix.error;
            row
        })
        .collect())
}
