//! Pairing of sprites, scripts and canonical names between the two sides.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{align::align, script_blocks};
use crate::normalize::{self, NormalizedAst, RenameEntry};
use crate::sb3::{EntityKind, EventKey, Target};

/// Minimum Jaccard similarity of event-key sets for two differently named
/// sprites to be treated as the same character.
pub const SPRITE_SIMILARITY_THRESHOLD: f64 = 0.5;

/// Indices into the targets of the two normalized projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpritePair {
    pub student: usize,
    pub teacher: usize,
}

/// Stage with stage, then sprites with equal names, then the remaining
/// sprites greedily by event-key similarity.
pub fn match_sprites(student: &NormalizedAst, teacher: &NormalizedAst) -> Vec<SpritePair> {
    let s = &student.project.targets;
    let t = &teacher.project.targets;
    let mut pairs = Vec::new();
    let mut used_s = BTreeSet::new();
    let mut used_t = BTreeSet::new();

    let stage = |ts: &[Target]| ts.iter().position(|x| x.is_stage);
    if let (Some(a), Some(b)) = (stage(s), stage(t)) {
        pairs.push(SpritePair { student: a, teacher: b });
        used_s.insert(a);
        used_t.insert(b);
    }
    for (j, tt) in t.iter().enumerate().filter(|(_, x)| !x.is_stage) {
        if let Some(i) = s.iter().position(|x| !x.is_stage && x.name == tt.name) {
            pairs.push(SpritePair { student: i, teacher: j });
            used_s.insert(i);
            used_t.insert(j);
        }
    }

    let mut candidates = Vec::new();
    for (i, st) in s.iter().enumerate().filter(|(i, x)| !x.is_stage && !used_s.contains(i)) {
        for (j, tt) in t.iter().enumerate().filter(|(j, x)| !x.is_stage && !used_t.contains(j)) {
            let sim = jaccard(st, tt);
            if sim >= SPRITE_SIMILARITY_THRESHOLD {
                candidates.push((sim, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    for (_, i, j) in candidates {
        if used_s.contains(&i) || used_t.contains(&j) {
            continue;
        }
        used_s.insert(i);
        used_t.insert(j);
        pairs.push(SpritePair { student: i, teacher: j });
    }
    pairs.sort_by_key(|p| p.teacher);
    pairs
}

/// Jaccard similarity of the sets of event keys; 0 when both are empty.
pub fn jaccard(a: &Target, b: &Target) -> f64 {
    let ka: BTreeSet<&EventKey> = a.scripts.iter().map(|s| &s.trigger).collect();
    let kb: BTreeSet<&EventKey> = b.scripts.iter().map(|s| &s.trigger).collect();
    let union = ka.union(&kb).count();
    if union == 0 {
        return 0.0;
    }
    ka.intersection(&kb).count() as f64 / union as f64
}

/// Script indices of a matched sprite pair.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptMatch {
    /// (student, teacher)
    pub matched: Vec<(usize, usize)>,
    /// Teacher scripts without a counterpart.
    pub missing: Vec<usize>,
    /// Student scripts without a counterpart.
    pub extra: Vec<usize>,
}

/// Pair scripts with equal triggers. Several scripts under one trigger are
/// paired greedily, closest bodies first.
pub fn match_scripts_by_event(student: &Target, teacher: &Target) -> ScriptMatch {
    let mut groups: BTreeMap<&EventKey, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, s) in student.scripts.iter().enumerate() {
        groups.entry(&s.trigger).or_default().0.push(i);
    }
    for (j, t) in teacher.scripts.iter().enumerate() {
        groups.entry(&t.trigger).or_default().1.push(j);
    }

    let mut out = ScriptMatch::default();
    for (ss, ts) in groups.into_values() {
        let mut candidates = Vec::with_capacity(ss.len() * ts.len());
        for &i in &ss {
            for &j in &ts {
                let (cost, _) = if ss.len() == 1 && ts.len() == 1 {
                    (0, Vec::new())
                } else {
                    align(&script_blocks(&student.scripts[i]), &script_blocks(&teacher.scripts[j]))
                };
                candidates.push((cost, i, j));
            }
        }
        candidates.sort();
        let mut used_s = BTreeSet::new();
        let mut used_t = BTreeSet::new();
        for (_, i, j) in candidates {
            if used_s.contains(&i) || used_t.contains(&j) {
                continue;
            }
            used_s.insert(i);
            used_t.insert(j);
            out.matched.push((i, j));
        }
        out.missing.extend(ts.iter().filter(|j| !used_t.contains(*j)));
        out.extra.extend(ss.iter().filter(|i| !used_s.contains(*i)));
    }
    out.matched.sort_by_key(|p| p.1);
    out.missing.sort();
    out.extra.sort();
    out
}

/// Numeric part of a canonical name (`v3` -> 3, `p1 %s` -> 1).
fn canonical_index(canonical: &str) -> Option<usize> {
    let head = canonical.split(' ').next()?;
    head.get(1..)?.parse().ok()
}

fn of_kind(m: &NormalizedAst, kind: EntityKind) -> Vec<(usize, &RenameEntry)> {
    let mut v: Vec<_> = m
        .rename_map
        .entries
        .iter()
        .filter(|e| e.kind == kind)
        .filter_map(|e| canonical_index(&e.canonical).map(|n| (n, e)))
        .collect();
    v.sort_by_key(|(n, _)| *n);
    v
}

/// Re-key the student's canonical names onto the teacher's.
///
/// Each side is normalized independently, so an entity's canonical index
/// depends on where it is first used. A student project missing an early
/// use would otherwise shift every later name. Entities are paired first
/// by identical original name and owner, then in canonical order among the
/// rest; unpaired student entities get indices past the teacher's.
pub(crate) fn reconcile(student: &mut NormalizedAst, teacher: &NormalizedAst) {
    let mut mapping: HashMap<(EntityKind, String), String> = HashMap::new();
    for kind in [
        EntityKind::Variable,
        EntityKind::List,
        EntityKind::Broadcast,
        EntityKind::Procedure,
    ] {
        let ts = of_kind(teacher, kind);
        let ss = of_kind(student, kind);
        let mut assigned: BTreeMap<usize, usize> = BTreeMap::new();
        let mut taken = BTreeSet::new();
        for (sn, se) in &ss {
            if let Some((tn, _)) = ts
                .iter()
                .find(|(tn, te)| !taken.contains(tn) && te.original == se.original && te.owner == se.owner)
            {
                assigned.insert(*sn, *tn);
                taken.insert(*tn);
            }
        }
        let mut free = ts.iter().map(|(n, _)| *n).filter(|n| !taken.contains(n));
        let mut next = ts.last().map_or(0, |(n, _)| n + 1);
        for (sn, _) in &ss {
            if assigned.contains_key(sn) {
                continue;
            }
            let n = free.next().unwrap_or_else(|| {
                next += 1;
                next - 1
            });
            assigned.insert(*sn, n);
        }
        for (sn, se) in &ss {
            let head_len = se.canonical.split(' ').next().map_or(0, str::len);
            let renamed = format!("{}{}{}", kind.prefix(), assigned[sn], &se.canonical[head_len..]);
            mapping.insert((kind, se.canonical.clone()), renamed);
        }
    }
    if mapping.iter().all(|((_, from), to)| from == to) {
        return;
    }
    let f = |kind: EntityKind, name: &str| mapping.get(&(kind, name.to_string())).cloned();
    normalize::relabel_project(&mut student.project, &f);
    for e in &mut student.rename_map.entries {
        if let Some(new) = f(e.kind, &e.canonical) {
            e.canonical = new;
        }
    }
    normalize::reorder_operands(&mut student.project);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3::{BlockNode, Script};

    fn sprite(name: &str, hats: &[&str]) -> Target {
        let mut t = Target::new(name, false);
        for h in hats {
            t.scripts.push(Script::new(Some(BlockNode::new(*h)), vec![]));
        }
        t
    }

    #[test]
    fn jaccard_bounds() {
        let a = sprite("Cat", &["event_whenflagclicked", "event_whenthisspriteclicked"]);
        let b = sprite("Kitty", &["event_whenflagclicked", "event_whenthisspriteclicked"]);
        let c = sprite("Bat", &["control_start_as_clone"]);
        assert_eq!(jaccard(&a, &b), 1.0);
        assert_eq!(jaccard(&a, &c), 0.0);
    }

    #[test]
    fn duplicate_triggers_pair_by_body() {
        let mut s = Target::new("Cat", false);
        let mut t = Target::new("Cat", false);
        let flag = || Some(BlockNode::new("event_whenflagclicked"));
        s.scripts.push(Script::new(flag(), vec![BlockNode::new("looks_hide")]));
        s.scripts.push(Script::new(flag(), vec![BlockNode::new("looks_show")]));
        t.scripts.push(Script::new(flag(), vec![BlockNode::new("looks_show")]));
        let m = match_scripts_by_event(&s, &t);
        assert_eq!(m.matched, vec![(1, 0)]);
        assert_eq!(m.extra, vec![0]);
        assert!(m.missing.is_empty());
    }

    #[test]
    fn canonical_index_parses_procedures() {
        assert_eq!(canonical_index("p12 %s %b"), Some(12));
        assert_eq!(canonical_index("v0"), Some(0));
    }
}
