//! Fix synthesis and application.
//!
//! A [`Patch`] is computed from one report item and copies the teacher's
//! blocks (taken from the original, not normalized, teacher project) into
//! the student's project. Names are translated to the student's own names
//! where the student has a counterpart; otherwise the teacher's name is
//! kept and the entity is created first. Anchors address the student's
//! original scripts, so a patch only applies to the project revision it
//! was computed for.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diff::{BlockStep, Comparison, DiffItem, Fragment, Kind, Level, ScriptRef};
use crate::normalize;
use crate::sb3::{
    catalog, fresh_id, BlockMeta, BlockNode, EntityKind, EventKey, InputSlot, InputValue, List, LoadError,
    ProjectAst, Script, Target, Variable,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RepairError {
    #[error("anchor not found: {0}")]
    AnchorNotFound(String),
    #[error("{name:?} already exists with a different kind or scope")]
    ConflictingEntity { kind: EntityKind, name: String },
    #[error("no fix available for {0}")]
    UnsupportedItem(String),
    #[error("patched project is invalid: {0}")]
    Invalid(#[from] LoadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityScope {
    /// Belongs to the patched sprite.
    Local,
    /// Lives on the stage.
    Global,
}

/// New value for a slot of an existing block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum SlotValue {
    Input { slot: InputSlot },
    Field { value: String },
    Mutation { mutation: Option<serde_json::Map<String, Value>> },
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PatchOp {
    CreateEntity {
        kind: EntityKind,
        name: String,
        scope: EntityScope,
        #[serde(default)]
        value: Value,
    },
    CreateSprite {
        target: Target,
    },
    DeleteSprite,
    InsertScript {
        script: Script,
        /// Scripts with the same trigger the sprite had when the patch was
        /// computed.
        expected_count: usize,
    },
    DeleteScript {
        index: usize,
        trigger: EventKey,
    },
    InsertBlocks {
        script: usize,
        path: Vec<BlockStep>,
        blocks: Vec<BlockNode>,
        /// Opcode of the block just before the insertion point.
        after: Option<String>,
    },
    DeleteBlocks {
        script: usize,
        path: Vec<BlockStep>,
        opcodes: Vec<String>,
    },
    ReplaceSlot {
        script: usize,
        path: Vec<BlockStep>,
        opcode: String,
        slot: String,
        value: SlotValue,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Patch {
    /// Sprite (or stage) the ops act on, by its name in the student project.
    pub target_sprite: String,
    pub ops: Vec<PatchOp>,
    /// Id of the report item the patch fixes.
    pub provenance: String,
    /// Report revision the anchors refer to.
    pub revision: u64,
    /// Removes student work.
    pub destructive: bool,
}

impl Patch {
    pub fn at_revision(mut self, revision: u64) -> Self {
        self.revision = revision;
        self
    }
}

/// Compute the fix for one kept report item.
pub fn synthesize_patch(
    item: &DiffItem,
    cmp: &Comparison,
    student: &ProjectAst,
    teacher: &ProjectAst,
) -> Result<Patch, RepairError> {
    let unsupported = || RepairError::UnsupportedItem(item.id.clone());
    if has_unknown(item) {
        return Err(unsupported());
    }
    let mut patch = Patch {
        target_sprite: String::new(),
        ops: Vec::new(),
        provenance: item.id.clone(),
        revision: 0,
        destructive: item.kind == Kind::Extra,
    };
    match (item.level, item.kind) {
        (Level::Module, Kind::Missing) => {
            let name = item.teacher_location.sprite_name.as_deref().ok_or_else(unsupported)?;
            let source = teacher.target(name).ok_or_else(unsupported)?;
            let mut tr = Translator::new(cmp, student, teacher, &student_stage(student)?, source);
            let mut target = source.clone();
            for s in &mut target.scripts {
                tr.script(s);
            }
            target.extra.shift_remove("comments");
            patch.target_sprite = target.name.clone();
            patch.ops.extend(tr.creations());
            patch.ops.push(PatchOp::CreateSprite { target });
        }
        (Level::Module, _) => {
            patch.target_sprite = item.location.sprite_name.clone().ok_or_else(unsupported)?;
            patch.ops.push(PatchOp::DeleteSprite);
        }
        (Level::Script, Kind::Missing) => {
            let ts = item.teacher_source.as_ref().ok_or_else(unsupported)?;
            let (t_target, t_script) = raw_script(teacher, ts)?;
            let s_name = item.location.sprite_name.as_deref().ok_or_else(unsupported)?;
            let s_target = student.target(s_name).ok_or_else(unsupported)?;
            let mut tr = Translator::new(cmp, student, teacher, &s_target.name, t_target);
            let mut script = t_script.clone();
            tr.script(&mut script);
            let expected_count = s_target.scripts.iter().filter(|s| s.trigger == script.trigger).count();
            patch.target_sprite = s_target.name.clone();
            patch.ops.extend(tr.creations());
            patch.ops.push(PatchOp::InsertScript { script, expected_count });
        }
        (Level::Script, _) => {
            let ss = item.student_source.as_ref().ok_or_else(unsupported)?;
            let (_, script) = raw_script(student, ss)?;
            patch.target_sprite = ss.target.clone();
            patch.ops.push(PatchOp::DeleteScript {
                index: ss.index,
                trigger: script.trigger.clone(),
            });
        }
        (Level::Block, kind) => {
            let ss = item.student_source.as_ref().ok_or_else(unsupported)?;
            let ts = item.teacher_source.as_ref().ok_or_else(unsupported)?;
            let path = item.location.block_path.clone().ok_or_else(unsupported)?;
            patch.target_sprite = ss.target.clone();
            let (_, s_script) = raw_script(student, ss)?;
            let (prefix, last) = split_path(&path)?;
            let student_seq = read_seq(s_script, prefix)?;
            if kind == Kind::Missing {
                let count = fragment_len(item.teacher_fragment.as_ref());
                let tpath = item.teacher_location.block_path.as_deref().ok_or_else(unsupported)?;
                let (t_prefix, t_last) = split_path(tpath)?;
                let (t_target, t_script) = raw_script(teacher, ts)?;
                let t_seq = read_seq(t_script, t_prefix)?;
                let blocks = t_seq
                    .get(t_last..t_last + count)
                    .ok_or_else(|| RepairError::AnchorNotFound(format!("teacher blocks at {tpath:?}")))?;
                let mut tr = Translator::new(cmp, student, teacher, &ss.target, t_target);
                let blocks = blocks.iter().cloned().map(|b| tr.block(b)).collect();
                patch.ops.extend(tr.creations());
                patch.ops.push(PatchOp::InsertBlocks {
                    script: ss.index,
                    after: last.checked_sub(1).and_then(|i| student_seq.get(i)).map(|b| b.opcode.clone()),
                    path,
                    blocks,
                });
            } else {
                let count = fragment_len(item.student_fragment.as_ref());
                let opcodes = student_seq
                    .get(last..last + count)
                    .ok_or_else(|| RepairError::AnchorNotFound(format!("student blocks at {path:?}")))?
                    .iter()
                    .map(|b| b.opcode.clone())
                    .collect();
                patch.ops.push(PatchOp::DeleteBlocks {
                    script: ss.index,
                    path,
                    opcodes,
                });
            }
        }
        (Level::Parameter, _) => {
            let ss = item.student_source.as_ref().ok_or_else(unsupported)?;
            let ts = item.teacher_source.as_ref().ok_or_else(unsupported)?;
            let path = item.location.block_path.clone().ok_or_else(unsupported)?;
            let tpath = item.teacher_location.block_path.as_deref().ok_or_else(unsupported)?;
            let (_, s_script) = raw_script(student, ss)?;
            let (t_target, t_script) = raw_script(teacher, ts)?;
            let s_block = read_block(s_script, &path)?;
            let t_block = read_block(t_script, tpath)?;
            let mut tr = Translator::new(cmp, student, teacher, &ss.target, t_target);
            let t_block = tr.block(t_block);
            patch.target_sprite = ss.target.clone();
            let mut ops = Vec::new();
            for change in &item.changed_slots {
                let value = slot_value(&s_block, &t_block, &change.slot).ok_or_else(unsupported)?;
                let slot = raw_slot_name(&s_block, &change.slot);
                ops.push(PatchOp::ReplaceSlot {
                    script: ss.index,
                    path: path.clone(),
                    opcode: s_block.opcode.clone(),
                    slot,
                    value,
                });
            }
            patch.ops.extend(tr.creations());
            patch.ops.extend(ops);
        }
    }
    Ok(patch)
}

fn has_unknown(item: &DiffItem) -> bool {
    let mut unknown = false;
    for f in [&item.student_fragment, &item.teacher_fragment].into_iter().flatten() {
        for b in f.blocks() {
            b.walk(&mut |x| unknown |= !catalog::is_known(&x.opcode));
        }
    }
    unknown
}

fn fragment_len(f: Option<&Fragment>) -> usize {
    match f {
        Some(Fragment::Blocks { blocks }) => blocks.len(),
        _ => 1,
    }
}

fn student_stage(p: &ProjectAst) -> Result<String, RepairError> {
    p.stage()
        .map(|s| s.name.clone())
        .ok_or_else(|| RepairError::AnchorNotFound("stage".into()))
}

fn raw_script<'a>(p: &'a ProjectAst, r: &ScriptRef) -> Result<(&'a Target, &'a Script), RepairError> {
    let t = p
        .target(&r.target)
        .ok_or_else(|| RepairError::AnchorNotFound(format!("sprite {}", r.target)))?;
    let s = t
        .scripts
        .get(r.index)
        .ok_or_else(|| RepairError::AnchorNotFound(format!("script {} of {}", r.index, r.target)))?;
    Ok((t, s))
}

/// Split a block path into the steps leading to a sequence and the index
/// within it.
fn split_path(path: &[BlockStep]) -> Result<(&[BlockStep], usize), RepairError> {
    match path.split_last() {
        Some((last, prefix)) if last.substack.is_none() && prefix.iter().all(|s| s.substack.is_some()) => {
            Ok((prefix, last.index))
        }
        _ => Err(RepairError::AnchorNotFound(format!("malformed path {path:?}"))),
    }
}

/// Run `f` on the sequence reached by `prefix`. The script's top level is
/// its hat (when present) followed by the body.
fn with_seq<R>(
    script: &mut Script,
    prefix: &[BlockStep],
    f: impl FnOnce(&mut Vec<BlockNode>, bool) -> Result<R, RepairError>,
) -> Result<R, RepairError> {
    let had_hat = script.hat.is_some();
    let mut top: Vec<BlockNode> = script.hat.take().into_iter().collect();
    top.append(&mut script.body.blocks);
    let result = descend(&mut top, prefix, f, had_hat);
    if had_hat {
        script.hat = Some(top.remove(0));
    }
    script.body.blocks = top;
    result
}

fn descend<R>(
    seq: &mut Vec<BlockNode>,
    prefix: &[BlockStep],
    f: impl FnOnce(&mut Vec<BlockNode>, bool) -> Result<R, RepairError>,
    hat_first: bool,
) -> Result<R, RepairError> {
    let Some((step, rest)) = prefix.split_first() else {
        return f(seq, hat_first);
    };
    let k = step.substack.unwrap_or(0);
    let block = seq
        .get_mut(step.index)
        .ok_or_else(|| RepairError::AnchorNotFound(format!("block {}", step.index)))?;
    let sub = block
        .substacks
        .get_mut(k)
        .ok_or_else(|| RepairError::AnchorNotFound(format!("substack {k} of {}", block.opcode)))?;
    descend(&mut sub.blocks, rest, f, false)
}

fn read_seq(script: &Script, prefix: &[BlockStep]) -> Result<Vec<BlockNode>, RepairError> {
    let mut copy = script.clone();
    with_seq(&mut copy, prefix, |seq, _| Ok(seq.clone()))
}

fn read_block(script: &Script, path: &[BlockStep]) -> Result<BlockNode, RepairError> {
    let (prefix, last) = split_path(path)?;
    read_seq(script, prefix)?
        .get(last)
        .cloned()
        .ok_or_else(|| RepairError::AnchorNotFound(format!("block at {path:?}")))
}

fn positional_arg(slot: &str) -> Option<usize> {
    slot.strip_prefix("arg")?.parse().ok()
}

/// Input name in the original project for a slot name from the normalized
/// one (procedure arguments are positional there).
fn raw_slot_name(block: &BlockNode, slot: &str) -> String {
    if block.opcode.starts_with("procedures_") {
        if let Some(id) = positional_arg(slot).and_then(|i| block.argument_ids().get(i).cloned()) {
            return id;
        }
    }
    slot.to_string()
}

fn slot_value(student: &BlockNode, teacher: &BlockNode, slot: &str) -> Option<SlotValue> {
    if slot == "mutation" {
        return Some(SlotValue::Mutation {
            mutation: teacher.mutation.clone(),
        });
    }
    let s_name = raw_slot_name(student, slot);
    let t_name = raw_slot_name(teacher, slot);
    if let Some(f) = teacher.field(&t_name) {
        return Some(SlotValue::Field { value: f.value.clone() });
    }
    if let Some(i) = teacher.input(&t_name) {
        let mut slot = i.clone();
        slot.name = s_name;
        return Some(SlotValue::Input { slot });
    }
    (student.input(&s_name).is_some() || student.field(&s_name).is_some()).then_some(SlotValue::Remove)
}

/// Translates teacher names in copied blocks into student names and
/// collects the entities the student still lacks.
struct Translator<'a> {
    cmp: &'a Comparison,
    student: &'a ProjectAst,
    /// Student target receiving the blocks.
    s_target: String,
    /// Teacher target the blocks come from.
    t_target: &'a Target,
    teacher_stage: Option<&'a Target>,
    missing: BTreeMap<(EntityKind, String), (EntityScope, Value)>,
}

impl<'a> Translator<'a> {
    fn new(
        cmp: &'a Comparison,
        student: &'a ProjectAst,
        teacher: &'a ProjectAst,
        s_target: &str,
        t_target: &'a Target,
    ) -> Self {
        Translator {
            cmp,
            student,
            s_target: s_target.to_string(),
            t_target,
            teacher_stage: teacher.stage(),
            missing: BTreeMap::new(),
        }
    }

    fn teacher_local(&self, kind: EntityKind, name: &str) -> bool {
        let t = self.t_target;
        !t.is_stage
            && match kind {
                EntityKind::Variable => t.variables.values().any(|v| v.name == name),
                EntityKind::List => t.lists.values().any(|l| l.name == name),
                EntityKind::Procedure => true,
                EntityKind::Broadcast => false,
            }
    }

    fn teacher_initial(&self, kind: EntityKind, name: &str, local: bool) -> Value {
        let t = if local { Some(self.t_target) } else { self.teacher_stage };
        let Some(t) = t else { return Value::Null };
        match kind {
            EntityKind::Variable => t.variable_by_name(name).map_or(Value::from(0), |(_, v)| v.value.clone()),
            EntityKind::List => t
                .list_by_name(name)
                .map_or(Value::Array(vec![]), |(_, l)| Value::Array(l.items.clone())),
            _ => Value::Null,
        }
    }

    /// Student name for a teacher entity, or `None` when the student has no
    /// counterpart visible from the receiving target.
    fn student_name(&self, kind: EntityKind, name: &str) -> Option<String> {
        let local = self.teacher_local(kind, name);
        let owner = local.then_some(self.t_target.name.as_str());
        let canonical = self.cmp.teacher.rename_map.canonical(kind, owner, name)?;
        let entry = self.cmp.student.rename_map.original(kind, canonical)?;
        match &entry.owner {
            Some(o) if *o != self.s_target => None,
            _ => Some(entry.original.clone()),
        }
    }

    fn block(&mut self, mut block: BlockNode) -> BlockNode {
        let mut refs = BTreeSet::new();
        block.walk(&mut |b| {
            if b.opcode.starts_with("procedures_") {
                if let Some(code) = b.proccode() {
                    refs.insert((EntityKind::Procedure, code.to_string()));
                }
            }
            for f in &b.fields {
                if let Some(kind) = EntityKind::from_field(&f.name) {
                    refs.insert((kind, f.value.clone()));
                }
            }
            for slot in &b.inputs {
                for v in std::iter::once(&slot.value).chain(slot.obscured.as_deref()) {
                    match v {
                        InputValue::Variable(r) => refs.insert((EntityKind::Variable, r.name.clone())),
                        InputValue::List(r) => refs.insert((EntityKind::List, r.name.clone())),
                        InputValue::Broadcast(r) => refs.insert((EntityKind::Broadcast, r.name.clone())),
                        _ => false,
                    };
                }
            }
        });
        let mut map: HashMap<(EntityKind, String), String> = HashMap::new();
        for (kind, name) in refs {
            match self.student_name(kind, &name) {
                Some(s) => {
                    map.insert((kind, name), s);
                }
                None if kind != EntityKind::Procedure => {
                    let local = self.teacher_local(kind, &name);
                    let scope = if local { EntityScope::Local } else { EntityScope::Global };
                    let value = self.teacher_initial(kind, &name, local);
                    self.missing.insert((kind, name), (scope, value));
                }
                None => {}
            }
        }
        normalize::relabel_block(&mut block, &|k, n| map.get(&(k, n.to_string())).cloned());
        self.remap_arguments(&mut block);
        clear_ids(&mut block);
        block
    }

    fn script(&mut self, script: &mut Script) {
        if let Some(h) = script.hat.take() {
            script.hat = Some(self.block(h));
        }
        script.body.blocks = std::mem::take(&mut script.body.blocks)
            .into_iter()
            .map(|b| self.block(b))
            .collect();
        script.refresh_trigger();
    }

    /// Give calls and prototypes of procedures the student already defines
    /// the student's argument ids.
    fn remap_arguments(&self, block: &mut BlockNode) {
        let Some(target) = self.student.target(&self.s_target) else { return };
        let mut protos: HashMap<String, Vec<String>> = HashMap::new();
        for s in &target.scripts {
            s.walk(&mut |b| {
                if b.opcode == "procedures_prototype" {
                    if let Some(code) = b.proccode() {
                        protos.insert(code.to_string(), b.argument_ids());
                    }
                }
            });
        }
        block.walk_mut(&mut |b| {
            if b.opcode != "procedures_call" && b.opcode != "procedures_prototype" {
                return;
            }
            let Some(ids) = b.proccode().and_then(|c| protos.get(c)) else { return };
            let old = b.argument_ids();
            if old.len() != ids.len() || &old == ids {
                return;
            }
            for slot in &mut b.inputs {
                if let Some(i) = old.iter().position(|o| *o == slot.name) {
                    slot.name = ids[i].clone();
                }
            }
            b.set_argument_ids(ids);
        });
    }

    fn creations(&self) -> Vec<PatchOp> {
        self.missing
            .iter()
            .map(|((kind, name), (scope, value))| PatchOp::CreateEntity {
                kind: *kind,
                name: name.clone(),
                scope: *scope,
                value: value.clone(),
            })
            .collect()
    }
}

/// Drop block ids, comment links and reference ids so the copy gets fresh
/// ids and resolves names in its new home.
fn clear_ids(block: &mut BlockNode) {
    block.walk_mut(&mut |b| {
        b.meta = BlockMeta::default();
        for f in &mut b.fields {
            f.id = None;
        }
    });
    block.walk_values_mut(&mut |v| match v {
        InputValue::Variable(r) | InputValue::List(r) | InputValue::Broadcast(r) => r.id = None,
        _ => {}
    });
}

/// Apply all ops of a patch, or none of them.
pub fn apply_patch(student: &ProjectAst, patch: &Patch) -> Result<ProjectAst, RepairError> {
    let mut p = student.clone();
    for op in &patch.ops {
        apply_op(&mut p, &patch.target_sprite, op)?;
    }
    p.assign_fresh_ids();
    p.validate()?;
    Ok(p)
}

fn target_mut<'a>(p: &'a mut ProjectAst, name: &str) -> Result<&'a mut Target, RepairError> {
    p.target_mut(name)
        .ok_or_else(|| RepairError::AnchorNotFound(format!("sprite {name}")))
}

fn script_mut<'a>(p: &'a mut ProjectAst, target: &str, index: usize) -> Result<&'a mut Script, RepairError> {
    target_mut(p, target)?
        .scripts
        .get_mut(index)
        .ok_or_else(|| RepairError::AnchorNotFound(format!("script {index} of {target}")))
}

fn apply_op(p: &mut ProjectAst, target: &str, op: &PatchOp) -> Result<(), RepairError> {
    match op {
        PatchOp::CreateEntity {
            kind,
            name,
            scope,
            value,
        } => create_entity(p, target, *kind, name, *scope, value),
        PatchOp::CreateSprite { target: t } => {
            if p.target(&t.name).is_some() {
                return Err(RepairError::ConflictingEntity {
                    kind: EntityKind::Variable,
                    name: t.name.clone(),
                });
            }
            let mut t = t.clone();
            let used = p.used_ids();
            let mut counter = 0;
            let mut fresh = |used: &mut BTreeSet<String>| {
                let id = fresh_id(&mut counter, used, "ent");
                used.insert(id.clone());
                id
            };
            let mut used = used;
            t.variables = std::mem::take(&mut t.variables)
                .into_values()
                .map(|v| (fresh(&mut used), v))
                .collect();
            t.lists = std::mem::take(&mut t.lists)
                .into_values()
                .map(|l| (fresh(&mut used), l))
                .collect();
            for s in &mut t.scripts {
                s.walk_mut(&mut |b| b.meta = BlockMeta::default());
            }
            p.targets.push(t);
            Ok(())
        }
        PatchOp::DeleteSprite => {
            let pos = p
                .targets
                .iter()
                .position(|t| !t.is_stage && t.name == target)
                .ok_or_else(|| RepairError::AnchorNotFound(format!("sprite {target}")))?;
            p.targets.remove(pos);
            Ok(())
        }
        PatchOp::InsertScript { script, expected_count } => {
            let t = target_mut(p, target)?;
            let count = t.scripts.iter().filter(|s| s.trigger == script.trigger).count();
            if count != *expected_count {
                return Err(RepairError::AnchorNotFound(format!(
                    "{target} has {count} scripts for this trigger, expected {expected_count}"
                )));
            }
            let mut script = script.clone();
            let bottom = t
                .scripts
                .iter()
                .filter_map(|s| s.placement.y)
                .fold(0.0f64, f64::max);
            script.placement.x = Some(0.0);
            script.placement.y = Some(if t.scripts.is_empty() { 0.0 } else { bottom + 200.0 });
            t.scripts.push(script);
            Ok(())
        }
        PatchOp::DeleteScript { index, trigger } => {
            let t = target_mut(p, target)?;
            match t.scripts.get(*index) {
                Some(s) if &s.trigger == trigger => {
                    t.scripts.remove(*index);
                    Ok(())
                }
                _ => Err(RepairError::AnchorNotFound(format!("script {index} of {target}"))),
            }
        }
        PatchOp::InsertBlocks {
            script,
            path,
            blocks,
            after,
        } => {
            let (prefix, at) = split_path(path)?;
            with_seq(script_mut(p, target, *script)?, prefix, |seq, hat_first| {
                let before = at.checked_sub(1).and_then(|i| seq.get(i)).map(|b| &b.opcode);
                if at > seq.len() || (hat_first && at == 0) || before != after.as_ref() {
                    return Err(RepairError::AnchorNotFound(format!("insertion point {path:?}")));
                }
                seq.splice(at..at, blocks.iter().cloned());
                Ok(())
            })
        }
        PatchOp::DeleteBlocks { script, path, opcodes } => {
            let (prefix, at) = split_path(path)?;
            with_seq(script_mut(p, target, *script)?, prefix, |seq, hat_first| {
                let found: Option<Vec<&String>> = seq.get(at..at + opcodes.len()).map(|s| s.iter().map(|b| &b.opcode).collect());
                let expected: Vec<&String> = opcodes.iter().collect();
                if (hat_first && at == 0) || found.as_ref() != Some(&expected) {
                    return Err(RepairError::AnchorNotFound(format!("blocks at {path:?}")));
                }
                seq.drain(at..at + opcodes.len());
                Ok(())
            })
        }
        PatchOp::ReplaceSlot {
            script,
            path,
            opcode,
            slot,
            value,
        } => {
            let (prefix, at) = split_path(path)?;
            with_seq(script_mut(p, target, *script)?, prefix, |seq, _| {
                let block = seq
                    .get_mut(at)
                    .filter(|b| &b.opcode == opcode)
                    .ok_or_else(|| RepairError::AnchorNotFound(format!("{opcode} at {path:?}")))?;
                replace_slot(block, slot, value);
                Ok(())
            })?;
            if let Some(s) = p.target_mut(target).and_then(|t| t.scripts.get_mut(*script)) {
                s.refresh_trigger();
            }
            Ok(())
        }
    }
}

fn replace_slot(block: &mut BlockNode, slot: &str, value: &SlotValue) {
    match value {
        SlotValue::Input { slot: new } => {
            let mut new = new.clone();
            new.name = slot.to_string();
            match block.input_mut(slot) {
                Some(s) => *s = new,
                None => block.inputs.push(new),
            }
        }
        SlotValue::Field { value } => {
            if let Some(f) = block.field_mut(slot) {
                f.value = value.clone();
                f.id = None;
            }
        }
        SlotValue::Mutation { mutation } => block.mutation = mutation.clone(),
        SlotValue::Remove => {
            block.inputs.retain(|s| s.name != slot);
            block.fields.retain(|f| f.name != slot);
        }
    }
}

fn create_entity(
    p: &mut ProjectAst,
    target: &str,
    kind: EntityKind,
    name: &str,
    scope: EntityScope,
    value: &Value,
) -> Result<(), RepairError> {
    let conflict = || RepairError::ConflictingEntity {
        kind,
        name: name.to_string(),
    };
    let has = |t: &Target| match kind {
        EntityKind::Variable => t.variable_by_name(name).is_some(),
        EntityKind::List => t.list_by_name(name).is_some(),
        _ => false,
    };
    let mut used = p.used_ids();
    let id = fresh_id(&mut 0, &used, "ent");
    used.insert(id.clone());
    match kind {
        EntityKind::Broadcast => {
            if !p.broadcasts.values().any(|n| n == name) {
                p.broadcasts.insert(id, name.to_string());
            }
            Ok(())
        }
        EntityKind::Procedure => Ok(()),
        EntityKind::Variable | EntityKind::List => {
            let on_stage = p.target(target).is_none_or(|t| t.is_stage);
            let global = scope == EntityScope::Global || on_stage;
            let stage_has = p.stage().is_some_and(has);
            let home = if global {
                if p.sprites().any(has) {
                    return Err(conflict());
                }
                if stage_has {
                    return Ok(());
                }
                p.stage_mut().ok_or_else(conflict)?
            } else {
                if stage_has {
                    return Err(conflict());
                }
                let t = target_mut(p, target)?;
                if has(t) {
                    return Ok(());
                }
                t
            };
            if kind == EntityKind::Variable {
                home.variables.insert(
                    id,
                    Variable {
                        name: name.to_string(),
                        value: value.clone(),
                        cloud: false,
                    },
                );
            } else {
                let items = value.as_array().cloned().unwrap_or_default();
                home.lists.insert(
                    id,
                    List {
                        name: name.to_string(),
                        items,
                    },
                );
            }
            Ok(())
        }
    }
}

/// References to variables, lists or broadcasts that do not resolve to a
/// declaration visible from their target.
pub fn unresolved_references(p: &ProjectAst) -> Vec<(String, EntityKind, String)> {
    let stage = p.stage();
    let mut out = Vec::new();
    for t in &p.targets {
        let visible = |kind: EntityKind, name: &str| match kind {
            EntityKind::Variable => {
                t.variable_by_name(name).is_some() || stage.is_some_and(|s| s.variable_by_name(name).is_some())
            }
            EntityKind::List => t.list_by_name(name).is_some() || stage.is_some_and(|s| s.list_by_name(name).is_some()),
            EntityKind::Broadcast => p.broadcasts.values().any(|n| n == name),
            EntityKind::Procedure => true,
        };
        for s in &t.scripts {
            let mut check = |kind: EntityKind, name: &str| {
                if !visible(kind, name) {
                    out.push((t.name.clone(), kind, name.to_string()));
                }
            };
            s.walk(&mut |b| {
                for f in &b.fields {
                    if let Some(kind) = EntityKind::from_field(&f.name) {
                        check(kind, &f.value);
                    }
                }
                for slot in &b.inputs {
                    for v in std::iter::once(&slot.value).chain(slot.obscured.as_deref()) {
                        match v {
                            InputValue::Variable(r) => check(EntityKind::Variable, &r.name),
                            InputValue::List(r) => check(EntityKind::List, &r.name),
                            InputValue::Broadcast(r) => check(EntityKind::Broadcast, &r.name),
                            _ => {}
                        }
                    }
                }
            });
        }
    }
    out
}
