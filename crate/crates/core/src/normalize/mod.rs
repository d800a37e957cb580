//! Canonical form of a project.
//!
//! Two projects that differ only in block ids, workspace layout, comments,
//! script or sprite order, identifier names, operand order of commutative
//! operators, or double negation / De Morgan shape normalize to the same
//! [`ProjectAst`].

mod rename;
mod rewrite;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sb3::{BlockMeta, BlockNode, EntityKind, InputValue, LoadError, Placement, ProjectAst, Target};

pub use rename::{RenameEntry, RenameMap};
pub use rewrite::{algebraic_rewrite, canonical_order, identity_names, NameFn, SortKey};

pub(crate) use rename::padded;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error(transparent)]
    Invalid(#[from] LoadError),
    #[error("{kind:?} {first:?} and {second:?} both map to {canonical}")]
    NameCollision {
        kind: EntityKind,
        canonical: String,
        first: String,
        second: String,
    },
}

/// Where a normalized script came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptOrigin {
    pub target: String,
    /// Index of the script in the source target.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizedAst {
    pub project: ProjectAst,
    pub rename_map: RenameMap,
    /// `origins[t][i]` is the source of script `i` of normalized target `t`.
    pub origins: Vec<Vec<ScriptOrigin>>,
}

/// Normalize a project: strip editor noise, rewrite boolean expressions,
/// rename entities canonically and order commutative operands.
pub fn normalize(project: &ProjectAst) -> Result<NormalizedAst, NormalizeError> {
    project.validate()?;
    let mut stripped = strip_noise(project);
    for target in &mut stripped.targets {
        for script in &mut target.scripts {
            if let Some(hat) = script.hat.take() {
                script.hat = Some(rewrite_block(hat));
            }
            script.body.blocks = std::mem::take(&mut script.body.blocks)
                .into_iter()
                .map(rewrite_block)
                .collect();
        }
    }

    let renamed = rename::rename(&stripped)?;
    let mut out = renamed.project;
    reorder_operands(&mut out);
    let origins = out
        .targets
        .iter()
        .zip(&renamed.script_order)
        .map(|(t, perm)| {
            perm.iter()
                .map(|&index| ScriptOrigin {
                    target: t.name.clone(),
                    index,
                })
                .collect()
        })
        .collect();
    Ok(NormalizedAst {
        project: out,
        rename_map: renamed.map,
        origins,
    })
}

/// Apply the expression rewrites to every slot of a statement and recurse
/// into its substacks.
fn rewrite_block(mut block: BlockNode) -> BlockNode {
    for slot in &mut block.inputs {
        slot.value = rewrite::rewrite_value(std::mem::replace(&mut slot.value, InputValue::Empty));
    }
    block.inputs.retain(|s| !matches!(s.value, InputValue::Empty));
    for seq in &mut block.substacks {
        seq.blocks = std::mem::take(&mut seq.blocks).into_iter().map(rewrite_block).collect();
    }
    block
}

fn order_block(block: BlockNode, names: NameFn<'_>) -> BlockNode {
    let mut block = rewrite::canonical_order_with(block, names);
    for seq in &mut block.substacks {
        seq.blocks = std::mem::take(&mut seq.blocks)
            .into_iter()
            .map(|b| order_block(b, names))
            .collect();
    }
    block
}

/// Expression rewrites and operand ordering of a single block tree whose
/// names are already canonical.
pub(crate) fn local_normalize(block: BlockNode) -> BlockNode {
    let names = |_: EntityKind, n: &str| padded(n);
    order_block(rewrite_block(block), &names)
}

/// Reapply commutative operand ordering after names have changed.
pub(crate) fn reorder_operands(project: &mut ProjectAst) {
    let names = |_: EntityKind, n: &str| padded(n);
    for target in &mut project.targets {
        for script in &mut target.scripts {
            if let Some(hat) = script.hat.take() {
                script.hat = Some(order_block(hat, &names));
            }
            script.body.blocks = std::mem::take(&mut script.body.blocks)
                .into_iter()
                .map(|b| order_block(b, &names))
                .collect();
        }
    }
}

/// Rename every entity reference inside a block tree. `f` returns the new
/// name, or `None` to keep the current one.
pub fn relabel_block(block: &mut BlockNode, f: &dyn Fn(EntityKind, &str) -> Option<String>) {
    block.walk_mut(&mut |b| {
        if b.opcode.starts_with("procedures_") {
            if let Some(new) = b.proccode().and_then(|c| f(EntityKind::Procedure, c)) {
                if let Some(m) = b.mutation.as_mut() {
                    m.insert("proccode".into(), Value::String(new));
                }
            }
        }
        for field in &mut b.fields {
            if let Some(kind) = EntityKind::from_field(&field.name) {
                if let Some(new) = f(kind, &field.value) {
                    field.value = new;
                }
            }
        }
    });
    block.walk_values_mut(&mut |v| {
        let (kind, r) = match v {
            InputValue::Variable(r) => (EntityKind::Variable, r),
            InputValue::List(r) => (EntityKind::List, r),
            InputValue::Broadcast(r) => (EntityKind::Broadcast, r),
            _ => return,
        };
        if let Some(new) = f(kind, &r.name) {
            r.name = new;
        }
    });
}

/// Rename every entity in a project whose declarations are keyed by name,
/// as in normalized form.
pub(crate) fn relabel_project(project: &mut ProjectAst, f: &dyn Fn(EntityKind, &str) -> Option<String>) {
    let rename = |kind: EntityKind, name: &String| f(kind, name).unwrap_or_else(|| name.clone());
    project.broadcasts = std::mem::take(&mut project.broadcasts)
        .into_values()
        .map(|n| {
            let n = rename(EntityKind::Broadcast, &n);
            (n.clone(), n)
        })
        .collect();
    for target in &mut project.targets {
        target.variables = std::mem::take(&mut target.variables)
            .into_values()
            .map(|mut v| {
                v.name = rename(EntityKind::Variable, &v.name);
                (v.name.clone(), v)
            })
            .collect();
        target.lists = std::mem::take(&mut target.lists)
            .into_values()
            .map(|mut l| {
                l.name = rename(EntityKind::List, &l.name);
                (l.name.clone(), l)
            })
            .collect();
        for script in &mut target.scripts {
            if let Some(hat) = script.hat.as_mut() {
                relabel_block(hat, f);
            }
            for b in &mut script.body.blocks {
                relabel_block(b, f);
            }
            script.refresh_trigger();
        }
    }
}

const PROCEDURE_MUTATION_KEYS: &[&str] = &["proccode", "argumentids", "argumentnames", "argumentdefaults", "warp"];

/// Remove everything that does not affect behavior: ids, comments,
/// positions, editor state, obscured shadows, initial values and
/// non-procedure mutations. Variables, lists and broadcasts are keyed by
/// name, targets are ordered stage first then sprites by name, and
/// procedure argument ids become positional (`arg0`, `arg1`, ...).
pub fn strip_noise(project: &ProjectAst) -> ProjectAst {
    let mut out = ProjectAst {
        targets: project.targets.iter().map(strip_target).collect(),
        broadcasts: project.broadcasts.values().map(|n| (n.clone(), n.clone())).collect(),
        extra: Default::default(),
    };
    out.targets
        .sort_by(|a, b| (!a.is_stage, &a.name).cmp(&(!b.is_stage, &b.name)));
    out
}

fn strip_target(target: &Target) -> Target {
    let mut t = Target::new(target.name.clone(), target.is_stage);
    t.variables = target
        .variables
        .values()
        .map(|v| {
            let mut v = v.clone();
            v.value = Value::Null;
            v.cloud = false;
            (v.name.clone(), v)
        })
        .collect();
    t.lists = target
        .lists
        .values()
        .map(|l| {
            let mut l = l.clone();
            l.items.clear();
            (l.name.clone(), l)
        })
        .collect();
    t.scripts = target.scripts.clone();
    for script in &mut t.scripts {
        script.placement = Placement::default();
        script.walk_mut(&mut strip_block);
        script.walk_values_mut(&mut |v| {
            if let InputValue::Variable(r) | InputValue::List(r) | InputValue::Broadcast(r) = v {
                r.id = None;
            }
        });
        script.refresh_trigger();
    }
    t
}

fn strip_block(b: &mut BlockNode) {
    b.meta = BlockMeta::default();
    for slot in &mut b.inputs {
        slot.obscured = None;
    }
    b.inputs.retain(|s| !matches!(s.value, InputValue::Empty));
    for f in &mut b.fields {
        f.id = None;
    }
    b.inputs.sort_by(|x, y| x.name.cmp(&y.name));
    b.fields.sort_by(|x, y| x.name.cmp(&y.name));

    let is_procedure = matches!(b.opcode.as_str(), "procedures_prototype" | "procedures_call");
    if !is_procedure {
        b.mutation = None;
        return;
    }
    if let Some(m) = b.mutation.as_mut() {
        m.retain(|k, _| PROCEDURE_MUTATION_KEYS.contains(&k.as_str()));
    }
    let ids = b.argument_ids();
    if ids.is_empty() {
        return;
    }
    let positional: Vec<String> = (0..ids.len()).map(|i| format!("arg{i}")).collect();
    for slot in &mut b.inputs {
        if let Some(i) = ids.iter().position(|id| *id == slot.name) {
            slot.name = positional[i].clone();
        }
    }
    b.inputs.sort_by(|x, y| x.name.cmp(&y.name));
    b.set_argument_ids(&positional);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sb3::{EntityRef, FieldSlot, Script, Variable};

    fn set_var(name: &str, value: &str) -> BlockNode {
        let mut b = BlockNode::new("data_setvariableto");
        b.fields.push(FieldSlot {
            name: "VARIABLE".into(),
            value: name.into(),
            id: Some(format!("id-{name}")),
        });
        b.inputs.push(crate::sb3::InputSlot {
            name: "VALUE".into(),
            value: InputValue::Literal(crate::sb3::Literal {
                kind: crate::sb3::LiteralKind::Text,
                value: value.into(),
            }),
            obscured: None,
        });
        b
    }

    fn project(var: &str, x: f64) -> ProjectAst {
        let mut p = ProjectAst::empty();
        let mut sprite = Target::new("Cat", false);
        sprite.variables.insert(
            format!("id-{var}"),
            Variable {
                name: var.into(),
                value: Value::from(0),
                cloud: false,
            },
        );
        let mut s = Script::new(Some(BlockNode::new("event_whenflagclicked")), vec![set_var(var, "0")]);
        s.placement.x = Some(x);
        sprite.scripts.push(s);
        p.targets.push(sprite);
        p
    }

    #[test]
    fn renaming_and_layout_are_invisible() {
        let a = normalize(&project("score", 10.0)).unwrap();
        let b = normalize(&project("points", 99.0)).unwrap();
        assert_eq!(a.project, b.project);
        assert_eq!(a.rename_map.canonical(EntityKind::Variable, Some("Cat"), "score"), Some("v0"));
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = normalize(&project("score", 1.0)).unwrap().project;
        let twice = normalize(&once).unwrap().project;
        assert_eq!(once, twice);
    }

    #[test]
    fn unused_declarations_are_dropped() {
        let mut p = project("score", 0.0);
        p.stage_mut().unwrap().variables.insert(
            "g".into(),
            Variable {
                name: "unused".into(),
                value: Value::Null,
                cloud: false,
            },
        );
        let n = normalize(&p).unwrap();
        assert!(n.project.stage().unwrap().variables.is_empty());
    }

    #[test]
    fn references_lose_ids() {
        let mut p = project("score", 0.0);
        let mut say = BlockNode::new("looks_say");
        say.inputs.push(crate::sb3::InputSlot {
            name: "MESSAGE".into(),
            value: InputValue::Variable(EntityRef {
                name: "score".into(),
                id: Some("id-score".into()),
            }),
            obscured: None,
        });
        p.targets[1].scripts[0].body.blocks.push(say);
        let n = normalize(&p).unwrap();
        let body = &n.project.targets[1].scripts[0].body.blocks;
        assert_eq!(
            body[1].input("MESSAGE").unwrap().value,
            InputValue::Variable(EntityRef {
                name: "v0".into(),
                id: None
            })
        );
    }

    #[test]
    fn origins_track_script_permutation() {
        let mut p = project("score", 0.0);
        let hat = BlockNode::new("event_whenthisspriteclicked");
        p.targets[1].scripts.insert(0, Script::new(Some(hat), vec![]));
        let n = normalize(&p).unwrap();
        let sprite = &n.origins[1];
        let flag = n.project.targets[1]
            .scripts
            .iter()
            .position(|s| s.trigger.hat_opcode == "event_whenflagclicked")
            .unwrap();
        assert_eq!(sprite[flag].index, 1);
    }
}
