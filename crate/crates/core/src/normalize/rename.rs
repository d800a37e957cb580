//! Canonical renaming of variables, lists, broadcasts and custom blocks.
//!
//! Names are assigned as `v0, v1, ...` (`l`, `b`, `p` for the other
//! namespaces) in first-use order: stage first, then sprites by name, then
//! scripts ordered by trigger and name-free shape, then body order. Inside a
//! commutative operator the operands are visited in key order, so swapping
//! them does not change which name is seen first; when both operands look
//! alike and introduce new names the assignment is deferred to a later,
//! unambiguous use.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::rewrite::{canonical_order_with, SortKey};
use super::NormalizeError;
use crate::sb3::catalog;
use crate::sb3::{BlockNode, EntityKind, InputValue, ProjectAst, Script, Target};

/// One renamed entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RenameEntry {
    pub kind: EntityKind,
    /// Owning sprite for sprite-local variables, lists and custom blocks;
    /// `None` for stage (global) entities and broadcasts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    pub original: String,
    pub canonical: String,
}

/// Original name -> canonical name, per namespace.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenameMap {
    pub entries: Vec<RenameEntry>,
}

impl RenameMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn canonical(&self, kind: EntityKind, owner: Option<&str>, original: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.owner.as_deref() == owner && e.original == original)
            .map(|e| e.canonical.as_str())
    }

    /// Reverse lookup; canonical names are unique per namespace.
    pub fn original(&self, kind: EntityKind, canonical: &str) -> Option<&RenameEntry> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.canonical == canonical)
    }
}

/// Identity of an entity inside one project.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct EntityId {
    kind: EntityKind,
    owner: Option<String>,
    name: String,
}

/// Scope information for resolving names used in a target.
struct Scope<'a> {
    target: &'a Target,
}

impl Scope<'_> {
    fn resolve(&self, kind: EntityKind, name: &str) -> EntityId {
        let local = !self.target.is_stage
            && match kind {
                EntityKind::Variable => self.target.variables.values().any(|v| v.name == name),
                EntityKind::List => self.target.lists.values().any(|l| l.name == name),
                EntityKind::Procedure => true,
                EntityKind::Broadcast => false,
            };
        EntityId {
            kind,
            owner: local.then(|| self.target.name.clone()),
            name: name.to_string(),
        }
    }
}

const UNASSIGNED: &str = "\u{0}?";

struct Assigner {
    assigned: HashMap<EntityId, String>,
    order: Vec<EntityId>,
    counters: BTreeMap<EntityKind, usize>,
    deferred: Vec<EntityId>,
}

impl Assigner {
    fn new() -> Self {
        Assigner {
            assigned: HashMap::new(),
            order: Vec::new(),
            counters: BTreeMap::new(),
            deferred: Vec::new(),
        }
    }

    fn assign(&mut self, id: EntityId) {
        if self.assigned.contains_key(&id) {
            return;
        }
        let n = self.counters.entry(id.kind).or_insert(0);
        let canonical = if id.kind == EntityKind::Procedure {
            canonical_proccode(*n, &id.name)
        } else {
            format!("{}{}", id.kind.prefix(), n)
        };
        *n += 1;
        self.assigned.insert(id.clone(), canonical);
        self.order.push(id);
    }

    fn partial_name(&self, scope: &Scope<'_>, kind: EntityKind, name: &str) -> String {
        match self.assigned.get(&scope.resolve(kind, name)) {
            Some(c) => padded(c),
            None => UNASSIGNED.to_string(),
        }
    }

    fn visit_script(&mut self, scope: &Scope<'_>, script: &Script) {
        if let Some(hat) = &script.hat {
            self.visit_block(scope, hat);
        }
        for b in &script.body.blocks {
            self.visit_block(scope, b);
        }
    }

    fn visit_block(&mut self, scope: &Scope<'_>, block: &BlockNode) {
        if let Some(code) = block.proccode() {
            if block.opcode.starts_with("procedures_") {
                self.assign(scope.resolve(EntityKind::Procedure, code));
            }
        }
        let mut fields: Vec<_> = block.fields.iter().collect();
        fields.sort_by(|a, b| a.name.cmp(&b.name));
        for f in fields {
            if let Some(kind) = EntityKind::from_field(&f.name) {
                self.assign(scope.resolve(kind, &f.value));
            }
        }
        let mut inputs: Vec<_> = block.inputs.iter().collect();
        inputs.sort_by(|a, b| a.name.cmp(&b.name));

        if let Some((left, right)) = catalog::commutative_operands(&block.opcode) {
            let empty = InputValue::Empty;
            let a = block.input(left).map_or(&empty, |s| &s.value);
            let b = block.input(right).map_or(&empty, |s| &s.value);
            let names = |k: EntityKind, n: &str| self.partial_name(scope, k, n);
            let ka = SortKey::of_value(a, &names);
            let kb = SortKey::of_value(b, &names);
            if ka == kb && ka.mentions(UNASSIGNED) {
                let mut pending = Vec::new();
                collect_refs(scope, a, &mut pending);
                collect_refs(scope, b, &mut pending);
                for id in pending {
                    if !self.assigned.contains_key(&id) && !self.deferred.contains(&id) {
                        self.deferred.push(id);
                    }
                }
                return;
            }
            let (first, second) = if ka <= kb { (a, b) } else { (b, a) };
            self.visit_value(scope, first);
            self.visit_value(scope, second);
            for slot in inputs {
                if slot.name != left && slot.name != right {
                    self.visit_value(scope, &slot.value);
                }
            }
        } else {
            for slot in inputs {
                self.visit_value(scope, &slot.value);
            }
        }
        for seq in &block.substacks {
            for b in &seq.blocks {
                self.visit_block(scope, b);
            }
        }
    }

    fn visit_value(&mut self, scope: &Scope<'_>, value: &InputValue) {
        match value {
            InputValue::Variable(r) => self.assign(scope.resolve(EntityKind::Variable, &r.name)),
            InputValue::List(r) => self.assign(scope.resolve(EntityKind::List, &r.name)),
            InputValue::Broadcast(r) => self.assign(scope.resolve(EntityKind::Broadcast, &r.name)),
            InputValue::Expression(b) => self.visit_block(scope, b),
            InputValue::Literal(_) | InputValue::Empty => {}
        }
    }

    fn finish(&mut self) {
        for id in std::mem::take(&mut self.deferred) {
            self.assign(id);
        }
    }
}

fn collect_refs(scope: &Scope<'_>, value: &InputValue, out: &mut Vec<EntityId>) {
    match value {
        InputValue::Variable(r) => out.push(scope.resolve(EntityKind::Variable, &r.name)),
        InputValue::List(r) => out.push(scope.resolve(EntityKind::List, &r.name)),
        InputValue::Broadcast(r) => out.push(scope.resolve(EntityKind::Broadcast, &r.name)),
        InputValue::Expression(b) => b.walk(&mut |n| {
            if let Some(code) = n.proccode() {
                out.push(scope.resolve(EntityKind::Procedure, code));
            }
            for f in &n.fields {
                if let Some(kind) = EntityKind::from_field(&f.name) {
                    out.push(scope.resolve(kind, &f.value));
                }
            }
            for s in &n.inputs {
                match &s.value {
                    InputValue::Variable(r) => out.push(scope.resolve(EntityKind::Variable, &r.name)),
                    InputValue::List(r) => out.push(scope.resolve(EntityKind::List, &r.name)),
                    InputValue::Broadcast(r) => out.push(scope.resolve(EntityKind::Broadcast, &r.name)),
                    _ => {}
                }
            }
        }),
        InputValue::Literal(_) | InputValue::Empty => {}
    }
}

/// Zero-padded form of a canonical name so lexical order follows the index.
pub(crate) fn padded(canonical: &str) -> String {
    let head = canonical.split(' ').next().unwrap_or_default();
    let mut chars = head.chars();
    let Some(prefix) = chars.next() else {
        return canonical.to_string();
    };
    match chars.as_str().parse::<usize>() {
        Ok(n) => format!("{prefix}{n:08}{}", &canonical[head.len()..]),
        Err(_) => canonical.to_string(),
    }
}

/// `p<n>` followed by the argument placeholders of the original proccode.
fn canonical_proccode(n: usize, original: &str) -> String {
    let mut out = format!("p{n}");
    let bytes = original.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'%' && matches!(bytes[i + 1], b's' | b'b' | b'n') {
            out.push_str(" %");
            out.push(bytes[i + 1] as char);
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

/// Names with every entity erased, for ordering scripts independently of
/// identifier choice.
fn erased(_: EntityKind, _: &str) -> String {
    "?".to_string()
}

/// Trigger part of a script's ordering key, with entity discriminators
/// erased.
fn trigger_key(script: &Script) -> (String, String) {
    let d = match catalog::hat_discriminator(&script.trigger.hat_opcode) {
        Some("BROADCAST_OPTION") | Some(catalog::PROCCODE) => "?".to_string(),
        _ => script.trigger.discriminator.clone().unwrap_or_default(),
    };
    (script.trigger.hat_opcode.clone(), d)
}

fn script_shape_key(script: &Script, names: super::rewrite::NameFn<'_>) -> Vec<SortKey> {
    let mut keys = Vec::with_capacity(script.body.len() + 1);
    if let Some(hat) = &script.hat {
        keys.push(SortKey::of_block(&canonical_order_with(hat.clone(), names), names));
    }
    for b in &script.body.blocks {
        keys.push(SortKey::of_block(&canonical_order_with(b.clone(), names), names));
    }
    keys
}

/// Result of renaming: the rewritten project, the name map, and for each
/// target the source index of every script in the new order.
pub(crate) struct Renamed {
    pub project: ProjectAst,
    pub map: RenameMap,
    pub script_order: Vec<Vec<usize>>,
}

const MAX_ORDER_ROUNDS: usize = 8;

/// Rename entities in a noise-stripped project.
pub(crate) fn rename(project: &ProjectAst) -> Result<Renamed, NormalizeError> {
    // initial order: trigger, then name-free shape, then source order
    let mut order: Vec<Vec<usize>> = project
        .targets
        .iter()
        .map(|t| {
            let mut idx: Vec<usize> = (0..t.scripts.len()).collect();
            let keys: Vec<_> = t
                .scripts
                .iter()
                .map(|s| (trigger_key(s), script_shape_key(s, &erased)))
                .collect();
            idx.sort_by(|a, b| keys[*a].cmp(&keys[*b]));
            idx
        })
        .collect();

    let mut rounds = 0;
    loop {
        let assigner = assign_names(project, &order);
        let renamed = apply(project, &assigner.assigned, &order);
        let next_order = resort(&renamed, &order);
        rounds += 1;
        if next_order == order || rounds >= MAX_ORDER_ROUNDS {
            let project = if next_order == order {
                renamed
            } else {
                apply(project, &assigner.assigned, &next_order)
            };
            return Ok(Renamed {
                project,
                map: build_map(&assigner)?,
                script_order: next_order,
            });
        }
        order = next_order;
    }
}

type FullKey = ((String, String), Vec<SortKey>, (String, Option<String>), Vec<SortKey>);

fn full_key(script: &Script) -> FullKey {
    let names = |_: EntityKind, n: &str| padded(n);
    (
        trigger_key(script),
        script_shape_key(script, &erased),
        (script.trigger.hat_opcode.clone(), script.trigger.discriminator.as_deref().map(padded)),
        script_shape_key(script, &names),
    )
}

/// New order: sort renamed scripts by their full canonical key. Returned as
/// source indices.
fn resort(renamed: &ProjectAst, order: &[Vec<usize>]) -> Vec<Vec<usize>> {
    renamed
        .targets
        .iter()
        .zip(order)
        .map(|(t, perm)| {
            let keys: Vec<FullKey> = t.scripts.iter().map(full_key).collect();
            let mut idx: Vec<usize> = (0..t.scripts.len()).collect();
            idx.sort_by(|a, b| keys[*a].cmp(&keys[*b]));
            idx.into_iter().map(|i| perm[i]).collect()
        })
        .collect()
}

fn assign_names(project: &ProjectAst, order: &[Vec<usize>]) -> Assigner {
    let mut assigner = Assigner::new();
    for (t, perm) in project.targets.iter().zip(order) {
        let scope = Scope { target: t };
        for &i in perm {
            assigner.visit_script(&scope, &t.scripts[i]);
        }
    }
    assigner.finish();
    assigner
}

fn build_map(assigner: &Assigner) -> Result<RenameMap, NormalizeError> {
    let mut seen: HashMap<(EntityKind, &str), &EntityId> = HashMap::new();
    let mut entries = Vec::with_capacity(assigner.order.len());
    for id in &assigner.order {
        let canonical = &assigner.assigned[id];
        if let Some(prev) = seen.insert((id.kind, canonical.as_str()), id) {
            return Err(NormalizeError::NameCollision {
                kind: id.kind,
                canonical: canonical.clone(),
                first: prev.name.clone(),
                second: id.name.clone(),
            });
        }
        entries.push(RenameEntry {
            kind: id.kind,
            owner: id.owner.clone(),
            original: id.name.clone(),
            canonical: canonical.clone(),
        });
    }
    Ok(RenameMap { entries })
}

/// Rewrite every reference and declaration to its canonical name and lay
/// out scripts in `order`.
fn apply(project: &ProjectAst, names: &HashMap<EntityId, String>, order: &[Vec<usize>]) -> ProjectAst {
    let mut out = project.clone();
    out.broadcasts = project
        .broadcasts
        .values()
        .filter_map(|name| {
            let id = EntityId {
                kind: EntityKind::Broadcast,
                owner: None,
                name: name.clone(),
            };
            names.get(&id).map(|c| (c.clone(), c.clone()))
        })
        .collect();
    for ((target, src), perm) in out.targets.iter_mut().zip(&project.targets).zip(order) {
        let scope = Scope { target: src };
        let lookup = |kind: EntityKind, name: &str| -> String {
            names
                .get(&scope.resolve(kind, name))
                .cloned()
                .unwrap_or_else(|| name.to_string())
        };
        target.scripts = perm.iter().map(|&i| src.scripts[i].clone()).collect();
        for script in &mut target.scripts {
            script.walk_mut(&mut |b| {
                if b.opcode.starts_with("procedures_") {
                    if let Some(code) = b.proccode().map(str::to_string) {
                        let canonical = lookup(EntityKind::Procedure, &code);
                        if let Some(m) = b.mutation.as_mut() {
                            m.insert("proccode".into(), serde_json::Value::String(canonical));
                        }
                    }
                }
                for f in &mut b.fields {
                    if let Some(kind) = EntityKind::from_field(&f.name) {
                        f.value = lookup(kind, &f.value);
                        f.id = None;
                    }
                }
            });
            script.walk_values_mut(&mut |v| match v {
                InputValue::Variable(r) => {
                    r.name = lookup(EntityKind::Variable, &r.name);
                    r.id = None;
                }
                InputValue::List(r) => {
                    r.name = lookup(EntityKind::List, &r.name);
                    r.id = None;
                }
                InputValue::Broadcast(r) => {
                    r.name = lookup(EntityKind::Broadcast, &r.name);
                    r.id = None;
                }
                _ => {}
            });
            script.refresh_trigger();
        }
        let owner = (!src.is_stage).then(|| src.name.clone());
        target.variables = src
            .variables
            .values()
            .filter_map(|v| {
                let id = EntityId {
                    kind: EntityKind::Variable,
                    owner: owner.clone(),
                    name: v.name.clone(),
                };
                names.get(&id).map(|c| {
                    let mut v = v.clone();
                    v.name = c.clone();
                    (c.clone(), v)
                })
            })
            .collect();
        target.lists = src
            .lists
            .values()
            .filter_map(|l| {
                let id = EntityId {
                    kind: EntityKind::List,
                    owner: owner.clone(),
                    name: l.name.clone(),
                };
                names.get(&id).map(|c| {
                    let mut l = l.clone();
                    l.name = c.clone();
                    (c.clone(), l)
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proccode_keeps_placeholders() {
        assert_eq!(canonical_proccode(3, "jump %s high %b"), "p3 %s %b");
        assert_eq!(canonical_proccode(0, "reset"), "p0");
    }

    #[test]
    fn padding_orders_numerically() {
        assert!(padded("v10") > padded("v9"));
        assert_eq!(padded("p2 %s"), "p00000002 %s");
    }
}
