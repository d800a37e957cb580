//! Minimum-cost alignment of two block sequences.
//!
//! Blocks pair up when their heads agree (same opcode, and same custom block
//! for calls). A pair whose parameters differ costs one MODIFY; unpaired
//! blocks cost one INSERT or DELETE each. Paired C-blocks contribute the
//! cost of aligning their substacks, so nested differences surface at the
//! innermost level.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::sb3::{BlockNode, BlockSeq};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
#[allow(clippy::large_enum_variant)]
pub enum EditOp {
    /// Insert a teacher block before position `index`.
    Insert { index: usize, block: BlockNode },
    /// Remove the block at `index`.
    Delete { index: usize, block: BlockNode },
    /// Give the block at `index` the teacher's parameters.
    Modify {
        index: usize,
        student: BlockNode,
        teacher: BlockNode,
        changed: Vec<String>,
    },
    /// Edit substack `substack` of the block at `index`.
    Descend {
        index: usize,
        substack: usize,
        script: EditScript,
    },
}

/// Ops refer to positions in the sequence as left by the preceding ops, so
/// they replay in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    /// Number of INSERT, DELETE and MODIFY ops, nested ones included.
    pub fn cost(&self) -> usize {
        self.ops
            .iter()
            .map(|op| match op {
                EditOp::Descend { script, .. } => script.cost(),
                _ => 1,
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Replay the script over `seq`.
    pub fn apply(&self, seq: &[BlockNode]) -> Vec<BlockNode> {
        let mut out = seq.to_vec();
        for op in &self.ops {
            match op {
                EditOp::Insert { index, block } => out.insert(*index, block.clone()),
                EditOp::Delete { index, .. } => {
                    out.remove(*index);
                }
                EditOp::Modify { index, teacher, .. } => {
                    let substacks = std::mem::take(&mut out[*index].substacks);
                    out[*index] = teacher.clone();
                    out[*index].substacks = substacks;
                }
                EditOp::Descend {
                    index,
                    substack,
                    script,
                } => {
                    let block = &mut out[*index];
                    if block.substacks.len() <= *substack {
                        block.substacks.resize_with(substack + 1, BlockSeq::default);
                    }
                    let seq = &mut block.substacks[*substack];
                    seq.blocks = script.apply(&seq.blocks);
                }
            }
        }
        out
    }
}

/// One step of an alignment, in sequence order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Pair {
    Both {
        student: usize,
        teacher: usize,
        changed: Vec<String>,
        substacks: Vec<Vec<Pair>>,
    },
    Student(usize),
    Teacher(usize),
}

/// Heads that may pair: same opcode, and same custom block for calls.
pub(crate) fn same_head(a: &BlockNode, b: &BlockNode) -> bool {
    a.opcode == b.opcode && (a.opcode != "procedures_call" || a.proccode() == b.proccode())
}

/// Names of the inputs and fields whose values differ, plus `mutation` when
/// the mutations differ.
pub(crate) fn changed_slots(a: &BlockNode, b: &BlockNode) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for slot in a.inputs.iter().chain(&b.inputs) {
        if a.input(&slot.name).map(|s| &s.value) != b.input(&slot.name).map(|s| &s.value)
            && !names.contains(&slot.name)
        {
            names.push(slot.name.clone());
        }
    }
    for f in a.fields.iter().chain(&b.fields) {
        if a.field(&f.name).map(|x| &x.value) != b.field(&f.name).map(|x| &x.value) && !names.contains(&f.name) {
            names.push(f.name.clone());
        }
    }
    if names.is_empty() && a.mutation != b.mutation {
        names.push("mutation".into());
    }
    names.sort();
    names
}

/// Cost, changed slots and substack alignments of a block pairing.
type Pairing = Option<(usize, Vec<String>, Vec<Vec<Pair>>)>;

struct Aligner<'a> {
    s: &'a [BlockNode],
    t: &'a [BlockNode],
    pairs: HashMap<(usize, usize), Pairing>,
}

impl Aligner<'_> {
    fn pair_cost(&mut self, i: usize, j: usize) -> Option<usize> {
        if let Some(entry) = self.pairs.get(&(i, j)) {
            return entry.as_ref().map(|e| e.0);
        }
        let (a, b) = (&self.s[i], &self.t[j]);
        let entry = same_head(a, b).then(|| {
            let changed = changed_slots(a, b);
            let mut cost = usize::from(!changed.is_empty());
            let n = a.substacks.len().max(b.substacks.len());
            let empty = BlockSeq::default();
            let subs: Vec<Vec<Pair>> = (0..n)
                .map(|k| {
                    let sa = a.substacks.get(k).unwrap_or(&empty);
                    let sb = b.substacks.get(k).unwrap_or(&empty);
                    let (c, pairs) = align(&sa.blocks, &sb.blocks);
                    cost += c;
                    pairs
                })
                .collect();
            (cost, changed, subs)
        });
        let cost = entry.as_ref().map(|e| e.0);
        self.pairs.insert((i, j), entry);
        cost
    }
}

/// Align two sequences; returns the minimum cost and the pairing.
pub(crate) fn align(s: &[BlockNode], t: &[BlockNode]) -> (usize, Vec<Pair>) {
    let (n, m) = (s.len(), t.len());
    let mut al = Aligner {
        s,
        t,
        pairs: HashMap::new(),
    };
    // cost[i][j]: cheapest alignment of s[i..] with t[j..]
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            cost[i][j] = if i == n {
                m - j
            } else if j == m {
                n - i
            } else {
                let mut best = 1 + cost[i + 1][j].min(cost[i][j + 1]);
                if let Some(c) = al.pair_cost(i, j) {
                    best = best.min(c + cost[i + 1][j + 1]);
                }
                best
            };
        }
    }

    let mut out = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m {
            if let Some(c) = al.pair_cost(i, j) {
                if c + cost[i + 1][j + 1] == cost[i][j] {
                    let (_, changed, substacks) = al.pairs.remove(&(i, j)).flatten().expect("pair cost cached");
                    out.push(Pair::Both {
                        student: i,
                        teacher: j,
                        changed,
                        substacks,
                    });
                    i += 1;
                    j += 1;
                    continue;
                }
            }
        }
        if i < n && (j == m || 1 + cost[i + 1][j] == cost[i][j]) {
            out.push(Pair::Student(i));
            i += 1;
        } else {
            out.push(Pair::Teacher(j));
            j += 1;
        }
    }
    (cost[0][0], out)
}

/// Edit script turning `s` into `t`.
pub fn align_blocks_lcs(s: &BlockSeq, t: &BlockSeq) -> EditScript {
    let (_, pairs) = align(&s.blocks, &t.blocks);
    to_script(&pairs, &s.blocks, &t.blocks)
}

fn to_script(pairs: &[Pair], s: &[BlockNode], t: &[BlockNode]) -> EditScript {
    let mut ops = Vec::new();
    let mut w = 0usize;
    for pair in pairs {
        match pair {
            Pair::Both {
                student,
                teacher,
                changed,
                substacks,
            } => {
                let (a, b) = (&s[*student], &t[*teacher]);
                if !changed.is_empty() {
                    ops.push(EditOp::Modify {
                        index: w,
                        student: a.clone(),
                        teacher: b.clone(),
                        changed: changed.clone(),
                    });
                }
                let empty = BlockSeq::default();
                for (k, sub) in substacks.iter().enumerate() {
                    let sa = a.substacks.get(k).unwrap_or(&empty);
                    let sb = b.substacks.get(k).unwrap_or(&empty);
                    let script = to_script(sub, &sa.blocks, &sb.blocks);
                    if !script.is_empty() {
                        ops.push(EditOp::Descend {
                            index: w,
                            substack: k,
                            script,
                        });
                    }
                }
                w += 1;
            }
            Pair::Student(i) => ops.push(EditOp::Delete {
                index: w,
                block: s[*i].clone(),
            }),
            Pair::Teacher(j) => {
                ops.push(EditOp::Insert {
                    index: w,
                    block: t[*j].clone(),
                });
                w += 1;
            }
        }
    }
    EditScript { ops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3::{InputSlot, InputValue, Literal, LiteralKind};

    fn block(opcode: &str, value: &str) -> BlockNode {
        let mut b = BlockNode::new(opcode);
        b.inputs.push(InputSlot {
            name: "STEPS".into(),
            value: InputValue::Literal(Literal {
                kind: LiteralKind::Number,
                value: value.into(),
            }),
            obscured: None,
        });
        b
    }

    fn seq(items: &[(&str, &str)]) -> BlockSeq {
        BlockSeq::new(items.iter().map(|(o, v)| block(o, v)).collect())
    }

    #[test]
    fn deletion_in_the_middle() {
        let s = seq(&[("a", "1"), ("b", "1"), ("c", "1")]);
        let t = seq(&[("a", "1"), ("c", "1")]);
        let script = align_blocks_lcs(&s, &t);
        assert_eq!(script.ops.len(), 1);
        assert!(matches!(&script.ops[0], EditOp::Delete { index: 1, block } if block.opcode == "b"));
        assert_eq!(script.apply(&s.blocks), t.blocks);
    }

    #[test]
    fn parameter_change_is_one_modify() {
        let s = seq(&[("motion_movesteps", "3")]);
        let t = seq(&[("motion_movesteps", "10")]);
        let script = align_blocks_lcs(&s, &t);
        assert_eq!(script.cost(), 1);
        match &script.ops[0] {
            EditOp::Modify { changed, .. } => assert_eq!(changed, &["STEPS".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn different_opcodes_never_modify() {
        let s = seq(&[("a", "1")]);
        let t = seq(&[("b", "1")]);
        let script = align_blocks_lcs(&s, &t);
        assert_eq!(script.cost(), 2);
        assert_eq!(script.apply(&s.blocks), t.blocks);
    }

    #[test]
    fn substacks_align_recursively() {
        let mut outer_s = BlockNode::new("control_forever");
        outer_s.substacks.push(seq(&[("a", "1")]));
        let mut outer_t = BlockNode::new("control_forever");
        outer_t.substacks.push(seq(&[("a", "1"), ("b", "2")]));
        let s = BlockSeq::new(vec![outer_s]);
        let t = BlockSeq::new(vec![outer_t]);
        let script = align_blocks_lcs(&s, &t);
        assert_eq!(script.cost(), 1);
        assert!(matches!(&script.ops[0], EditOp::Descend { index: 0, substack: 0, .. }));
        assert_eq!(script.apply(&s.blocks), t.blocks);
    }

    #[test]
    fn empty_sequences() {
        let e = BlockSeq::default();
        assert!(align_blocks_lcs(&e, &e).is_empty());
        let t = seq(&[("a", "1"), ("b", "1")]);
        assert_eq!(align_blocks_lcs(&e, &t).cost(), 2);
        assert_eq!(align_blocks_lcs(&t, &e).cost(), 2);
    }
}
