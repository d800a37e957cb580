#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use stitch::corpus::{b, num, BlockBuilder};
use stitch::sb3::{BlockNode, BlockSeq};

/// Small alphabet so that random sequences share many heads.
pub fn random_block(rng: &mut ChaCha8Rng, depth: usize) -> BlockNode {
    let pick = if depth >= 2 { rng.gen_range(0..4) } else { rng.gen_range(0..6) };
    match pick {
        0 => b("motion_movesteps").i("STEPS", num(rng.gen_range(1..=2))),
        1 => b("motion_turnright").i("DEGREES", num(rng.gen_range(1..=2))),
        2 => b("looks_show"),
        3 => b("looks_hide"),
        4 => {
            let n = rng.gen_range(0..=2);
            b("control_repeat")
                .i("TIMES", num(rng.gen_range(1..=2)))
                .sub(random_seq(rng, n, depth + 1))
        }
        _ => {
            let a = rng.gen_range(0..=2);
            let c = rng.gen_range(0..=2);
            b("control_if_else")
                .sub(random_seq(rng, a, depth + 1))
                .sub(random_seq(rng, c, depth + 1))
        }
    }
}

pub fn random_seq(rng: &mut ChaCha8Rng, len: usize, depth: usize) -> Vec<BlockNode> {
    (0..len).map(|_| random_block(rng, depth)).collect()
}

fn heads_match(a: &BlockNode, c: &BlockNode) -> bool {
    a.opcode == c.opcode
}

fn params_differ(a: &BlockNode, c: &BlockNode) -> bool {
    let strip = |x: &BlockNode| {
        let mut y = x.clone();
        y.substacks.clear();
        y.meta = Default::default();
        y
    };
    strip(a) != strip(c)
}

fn substack(x: &BlockNode, k: usize) -> &[BlockNode] {
    x.substacks.get(k).map_or(&[], |s| s.blocks.as_slice())
}

/// Minimal edit cost by enumerating every monotone alignment, without
/// memoization. Unpaired blocks cost 1; paired blocks need equal heads and
/// cost 1 when their parameters differ, plus the cost of their substacks.
pub fn brute_force_cost(s: &[BlockNode], t: &[BlockNode]) -> usize {
    match (s.split_first(), t.split_first()) {
        (None, _) => t.len(),
        (_, None) => s.len(),
        (Some((a, s_rest)), Some((c, t_rest))) => {
            let mut best = 1 + brute_force_cost(s_rest, t);
            best = best.min(1 + brute_force_cost(s, t_rest));
            if heads_match(a, c) {
                let n = a.substacks.len().max(c.substacks.len());
                let inner: usize = (0..n).map(|k| brute_force_cost(substack(a, k), substack(c, k))).sum();
                best = best.min(usize::from(params_differ(a, c)) + inner + brute_force_cost(s_rest, t_rest));
            }
            best
        }
    }
}

pub fn seq(blocks: Vec<BlockNode>) -> BlockSeq {
    BlockSeq::new(blocks)
}

const WORDS: &[&str] = &[
    "the", "cat", "should", "move", "ten", "steps", "because", "forever", "loop", "Scratch", "sprite", "broadcast",
    "\"when green flag clicked\"", "block", "variable", "score", "touching", "edge", "événement", "日本語", "🐱",
    "x:", "(10)", "[score v]", "it's", "well-known", "e.g.",
];
const ENDS: &[&str] = &["", "", "", ".", "!", "?", ",", ";", "...", ".\n", "\n\n", ":"];

/// Random provider output: word soup with random punctuation, spacing and
/// occasional very long runs.
pub fn fuzz_output(rng: &mut ChaCha8Rng) -> String {
    let len = match rng.gen_range(0..10) {
        0 => 0,
        1..=5 => rng.gen_range(1..60),
        6..=8 => rng.gen_range(60..250),
        _ => rng.gen_range(250..1200),
    };
    let mut out = String::new();
    for _ in 0..len {
        out.push_str(WORDS.choose(rng).expect("non-empty"));
        out.push_str(ENDS.choose(rng).expect("non-empty"));
        out.push_str([" ", " ", " ", "  ", "\t", "\n"].choose(rng).expect("non-empty"));
    }
    if rng.gen_bool(0.1) {
        out = out.replace(' ', "");
    }
    out
}
