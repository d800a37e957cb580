use std::collections::{BTreeMap, HashSet};
use std::io::{Cursor, Read};

use serde_json::{Map, Value};

use super::catalog::{self, Shape};
use super::{
    BlockMeta, BlockNode, BlockSeq, EntityRef, FieldSlot, InputSlot, InputValue, List, Literal,
    LiteralKind, LoadError, Placement, ProjectAst, Script, Target, Variable,
};

const PROJECT_ENTRY: &str = "project.json";
const MAX_NESTING: usize = 512;
const ZIP_MAGIC: &[u8] = b"PK";

/// A non-document entry of an `.sb3` archive (costume or sound file).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Asset {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// A loaded `.sb3` container: the project plus its media entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Sb3Archive {
    pub project: ProjectAst,
    pub assets: Vec<Asset>,
}

/// Load a project from either an `.sb3` zip container or the bare project
/// document text.
pub fn load_project(input: &[u8]) -> Result<ProjectAst, LoadError> {
    load_sb3(input).map(|a| a.project)
}

/// Like [`load_project`], keeping the archive's media entries.
pub fn load_sb3(input: &[u8]) -> Result<Sb3Archive, LoadError> {
    if input.starts_with(ZIP_MAGIC) {
        let (doc, assets) = read_container(input)?;
        let project = parse_document(&doc)?;
        Ok(Sb3Archive { project, assets })
    } else {
        let project = parse_document(input)?;
        Ok(Sb3Archive {
            project,
            assets: Vec::new(),
        })
    }
}

fn read_container(input: &[u8]) -> Result<(Vec<u8>, Vec<Asset>), LoadError> {
    let mut archive = zip::ZipArchive::new(Cursor::new(input))
        .map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
    let mut doc = None;
    let mut assets = Vec::new();
    for i in 0..archive.len() {
        let mut entry = archive
            .by_index(i)
            .map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_string();
        let mut bytes = Vec::new();
        entry
            .read_to_end(&mut bytes)
            .map_err(|e| LoadError::MalformedContainer(format!("{name}: {e}")))?;
        // some exporters nest everything under a folder
        if name == PROJECT_ENTRY || name.ends_with("/project.json") {
            if doc.is_none() {
                doc = Some(bytes);
            }
        } else {
            assets.push(Asset { name, bytes });
        }
    }
    let doc = doc.ok_or_else(|| {
        LoadError::MalformedContainer(format!("archive has no {PROJECT_ENTRY} entry"))
    })?;
    Ok((doc, assets))
}

fn parse_document(text: &[u8]) -> Result<ProjectAst, LoadError> {
    let root: Value =
        serde_json::from_slice(text).map_err(|e| LoadError::MalformedDocument(e.to_string()))?;
    let Value::Object(mut root) = root else {
        return Err(LoadError::MalformedDocument(
            "project document is not an object".into(),
        ));
    };
    let targets = match root.shift_remove("targets") {
        Some(Value::Array(t)) => t,
        Some(_) => return Err(LoadError::MalformedDocument("`targets` is not an array".into())),
        None => return Err(LoadError::MalformedDocument("missing `targets`".into())),
    };

    let mut project = ProjectAst {
        targets: Vec::with_capacity(targets.len()),
        broadcasts: BTreeMap::new(),
        extra: root,
    };
    for raw in targets {
        let Value::Object(raw) = raw else {
            return Err(LoadError::MalformedDocument("target is not an object".into()));
        };
        let (target, broadcasts) = parse_target(raw)?;
        project.broadcasts.extend(broadcasts);
        project.targets.push(target);
    }
    project.validate()?;
    Ok(project)
}

fn parse_target(mut raw: Map<String, Value>) -> Result<(Target, BTreeMap<String, String>), LoadError> {
    let name = match raw.shift_remove("name") {
        Some(Value::String(s)) => s,
        _ => return Err(LoadError::MalformedDocument("target without a name".into())),
    };
    let is_stage = matches!(raw.shift_remove("isStage"), Some(Value::Bool(true)));

    let variables = match raw.shift_remove("variables") {
        Some(Value::Object(vars)) => parse_variables(&name, vars)?,
        None | Some(Value::Null) => BTreeMap::new(),
        Some(_) => return Err(bad_doc(&name, "variables")),
    };
    let lists = match raw.shift_remove("lists") {
        Some(Value::Object(lists)) => parse_lists(&name, lists)?,
        None | Some(Value::Null) => BTreeMap::new(),
        Some(_) => return Err(bad_doc(&name, "lists")),
    };
    let broadcasts = match raw.shift_remove("broadcasts") {
        Some(Value::Object(b)) => b
            .into_iter()
            .map(|(id, v)| match v {
                Value::String(s) => Ok((id, s)),
                _ => Err(bad_doc(&name, "broadcasts")),
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?,
        None | Some(Value::Null) => BTreeMap::new(),
        Some(_) => return Err(bad_doc(&name, "broadcasts")),
    };
    let blocks = match raw.shift_remove("blocks") {
        Some(Value::Object(b)) => b,
        None | Some(Value::Null) => Map::new(),
        Some(_) => return Err(bad_doc(&name, "blocks")),
    };
    let scripts = ScriptBuilder::new(&blocks)?.build()?;

    Ok((
        Target {
            name,
            is_stage,
            scripts,
            variables,
            lists,
            extra: raw,
        },
        broadcasts,
    ))
}

fn bad_doc(target: &str, key: &str) -> LoadError {
    LoadError::MalformedDocument(format!("target {target:?}: malformed `{key}`"))
}

fn parse_variables(
    target: &str,
    vars: Map<String, Value>,
) -> Result<BTreeMap<String, Variable>, LoadError> {
    vars.into_iter()
        .map(|(id, v)| {
            let Value::Array(parts) = v else {
                return Err(bad_doc(target, "variables"));
            };
            let name = parts
                .first()
                .and_then(scalar_string)
                .ok_or_else(|| bad_doc(target, "variables"))?;
            let value = parts.get(1).cloned().unwrap_or(Value::from(0));
            let cloud = matches!(parts.get(2), Some(Value::Bool(true)));
            Ok((id, Variable { name, value, cloud }))
        })
        .collect()
}

fn parse_lists(target: &str, lists: Map<String, Value>) -> Result<BTreeMap<String, List>, LoadError> {
    lists
        .into_iter()
        .map(|(id, v)| {
            let Value::Array(parts) = v else {
                return Err(bad_doc(target, "lists"));
            };
            let name = parts
                .first()
                .and_then(scalar_string)
                .ok_or_else(|| bad_doc(target, "lists"))?;
            let items = match parts.get(1) {
                Some(Value::Array(items)) => items.clone(),
                None | Some(Value::Null) => Vec::new(),
                Some(_) => return Err(bad_doc(target, "lists")),
            };
            Ok((id, List { name, items }))
        })
        .collect()
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn violation(block_id: &str, reason: impl Into<String>) -> LoadError {
    LoadError::SchemaViolation {
        block_id: block_id.to_string(),
        reason: reason.into(),
    }
}

/// Resolves the flat, id-keyed block table of one target into scripts.
struct ScriptBuilder<'a> {
    table: &'a Map<String, Value>,
    claimed: HashSet<&'a str>,
}

enum RawBlock<'a> {
    Object(&'a Map<String, Value>),
    Primitive(&'a [Value]),
}

impl<'a> ScriptBuilder<'a> {
    fn new(table: &'a Map<String, Value>) -> Result<Self, LoadError> {
        for (id, raw) in table {
            match raw {
                Value::Object(obj) => {
                    for key in ["next", "parent"] {
                        match obj.get(key) {
                            None | Some(Value::Null) => {}
                            Some(Value::String(target)) if table.contains_key(target) => {}
                            Some(Value::String(target)) => {
                                return Err(violation(
                                    id,
                                    format!("dangling {key} reference to missing block {target:?}"),
                                ))
                            }
                            Some(_) => return Err(violation(id, format!("`{key}` is not a block id"))),
                        }
                    }
                    match obj.get("opcode") {
                        Some(Value::String(op)) if !op.is_empty() => {}
                        _ => return Err(violation(id, "missing opcode")),
                    }
                }
                Value::Array(_) => {}
                _ => return Err(violation(id, "block is neither an object nor a primitive")),
            }
        }
        Ok(ScriptBuilder {
            table,
            claimed: HashSet::new(),
        })
    }

    fn raw(&self, id: &str) -> Result<RawBlock<'a>, LoadError> {
        match self.table.get(id) {
            Some(Value::Object(obj)) => Ok(RawBlock::Object(obj)),
            Some(Value::Array(arr)) => Ok(RawBlock::Primitive(arr)),
            _ => Err(violation(id, "reference to missing block")),
        }
    }

    fn claim(&mut self, id: &'a str) -> Result<(), LoadError> {
        if !self.claimed.insert(id) {
            return Err(violation(id, "block is referenced more than once"));
        }
        Ok(())
    }

    fn build(mut self) -> Result<Vec<Script>, LoadError> {
        let table = self.table;
        let mut scripts = Vec::new();
        for (id, raw) in table {
            let top_level = match raw {
                Value::Object(obj) => {
                    matches!(obj.get("topLevel"), Some(Value::Bool(true)))
                        || matches!(obj.get("parent"), None | Some(Value::Null))
                }
                Value::Array(_) => true,
                _ => false,
            };
            if top_level {
                scripts.push(self.script(id)?);
            }
        }
        if let Some(orphan) = table.keys().find(|id| !self.claimed.contains(id.as_str())) {
            return Err(violation(orphan, "block is not reachable from any script"));
        }
        Ok(scripts)
    }

    fn script(&mut self, id: &'a str) -> Result<Script, LoadError> {
        let placement = match self.raw(id)? {
            RawBlock::Object(obj) => Placement {
                x: obj.get("x").and_then(Value::as_f64),
                y: obj.get("y").and_then(Value::as_f64),
            },
            RawBlock::Primitive(arr) => Placement {
                x: arr.get(3).and_then(Value::as_f64),
                y: arr.get(4).and_then(Value::as_f64),
            },
        };
        let is_hat = match self.raw(id)? {
            RawBlock::Object(obj) => obj
                .get("opcode")
                .and_then(Value::as_str)
                .and_then(catalog::lookup)
                .is_some_and(|e| e.shape == Shape::Hat),
            RawBlock::Primitive(_) => false,
        };
        let mut script = if is_hat {
            let (hat, next) = self.block(id, 0)?;
            let body = match next {
                Some(next) => self.chain(next, 0)?,
                None => BlockSeq::default(),
            };
            Script::new(Some(hat), body.blocks)
        } else {
            let body = self.chain(id, 0)?;
            Script::new(None, body.blocks)
        };
        script.placement = placement;
        Ok(script)
    }

    /// Follow next-links starting at `first`.
    fn chain(&mut self, first: &'a str, depth: usize) -> Result<BlockSeq, LoadError> {
        let mut blocks = Vec::new();
        let mut cursor = Some(first);
        while let Some(id) = cursor {
            let (block, next) = self.block(id, depth)?;
            blocks.push(block);
            cursor = next;
        }
        Ok(BlockSeq::new(blocks))
    }

    /// Parse one block; returns it with its next-link.
    fn block(&mut self, id: &'a str, depth: usize) -> Result<(BlockNode, Option<&'a str>), LoadError> {
        if depth > MAX_NESTING {
            return Err(violation(id, "blocks nested too deeply"));
        }
        self.claim(id)?;
        let obj = match self.raw(id)? {
            RawBlock::Object(obj) => obj,
            RawBlock::Primitive(arr) => return Ok((primitive_block(id, arr)?, None)),
        };
        let opcode = obj
            .get("opcode")
            .and_then(Value::as_str)
            .ok_or_else(|| violation(id, "missing opcode"))?
            .to_string();
        let entry = catalog::lookup(&opcode);
        let mut node = BlockNode::new(opcode);
        node.shadow = matches!(obj.get("shadow"), Some(Value::Bool(true)));
        node.meta = BlockMeta {
            id: Some(id.to_string()),
            comment: obj.get("comment").and_then(Value::as_str).map(str::to_string),
        };
        if let Some(m) = obj.get("mutation") {
            match m {
                Value::Object(m) => node.mutation = Some(m.clone()),
                Value::Null => {}
                _ => return Err(violation(id, "mutation is not an object")),
            }
        }

        match obj.get("fields") {
            None | Some(Value::Null) => {}
            Some(Value::Object(fields)) => {
                for (name, raw) in fields {
                    node.fields.push(parse_field(id, name, raw)?);
                }
            }
            Some(_) => return Err(violation(id, "fields is not an object")),
        }

        let mut substacks: Vec<Option<BlockSeq>> = Vec::new();
        match obj.get("inputs") {
            None | Some(Value::Null) => {}
            Some(Value::Object(inputs)) => {
                for (name, raw) in inputs {
                    if let Some(index) = substack_index(name) {
                        let seq = self.substack(id, raw, depth)?;
                        if substacks.len() <= index {
                            substacks.resize(index + 1, None);
                        }
                        substacks[index] = Some(seq);
                    } else {
                        let slot = self.input(id, name, raw, depth)?;
                        node.inputs.push(slot);
                    }
                }
            }
            Some(_) => return Err(violation(id, "inputs is not an object")),
        }
        let want = entry.map_or(0, |e| e.substacks as usize).max(substacks.len());
        node.substacks = (0..want)
            .map(|i| substacks.get_mut(i).and_then(Option::take).unwrap_or_default())
            .collect();

        if let Some(entry) = entry {
            if !entry.variadic {
                for name in node
                    .inputs
                    .iter()
                    .map(|s| s.name.as_str())
                    .chain(node.fields.iter().map(|f| f.name.as_str()))
                {
                    if entry.slot(name).is_none() {
                        return Err(violation(
                            id,
                            format!("slot {name:?} is not defined for opcode {}", entry.opcode),
                        ));
                    }
                }
            }
        }

        let next = match obj.get("next") {
            Some(Value::String(n)) => Some(n.as_str()),
            _ => None,
        };
        Ok((node, next))
    }

    fn substack(&mut self, owner: &str, raw: &'a Value, depth: usize) -> Result<BlockSeq, LoadError> {
        let Value::Array(parts) = raw else {
            return Err(violation(owner, "unknown input shape"));
        };
        match parts.get(1) {
            None | Some(Value::Null) => Ok(BlockSeq::default()),
            Some(Value::String(first)) => self.chain(first, depth + 1),
            Some(_) => Err(violation(owner, "substack does not reference a block")),
        }
    }

    fn input(
        &mut self,
        owner: &str,
        name: &str,
        raw: &'a Value,
        depth: usize,
    ) -> Result<InputSlot, LoadError> {
        let Value::Array(parts) = raw else {
            return Err(violation(owner, format!("unknown input shape for {name:?}")));
        };
        let shadow_kind = parts.first().and_then(Value::as_u64);
        let (value, obscured) = match shadow_kind {
            Some(1) | Some(2) => (self.input_value(owner, parts.get(1), depth)?, None),
            Some(3) => {
                let value = self.input_value(owner, parts.get(1), depth)?;
                let obscured = match parts.get(2) {
                    None | Some(Value::Null) => None,
                    other => Some(Box::new(self.input_value(owner, other, depth)?)),
                };
                (value, obscured)
            }
            _ => return Err(violation(owner, format!("unknown input shape for {name:?}"))),
        };
        Ok(InputSlot {
            name: name.to_string(),
            value,
            obscured,
        })
    }

    fn input_value(
        &mut self,
        owner: &str,
        raw: Option<&'a Value>,
        depth: usize,
    ) -> Result<InputValue, LoadError> {
        match raw {
            None | Some(Value::Null) => Ok(InputValue::Empty),
            Some(Value::String(id)) => {
                if !self.table.contains_key(id) {
                    return Err(violation(owner, format!("input references missing block {id:?}")));
                }
                let (block, _) = self.block(id, depth + 1)?;
                Ok(collapse_shadow(block))
            }
            Some(Value::Array(prim)) => primitive_value(owner, prim),
            Some(_) => Err(violation(owner, "unknown input shape")),
        }
    }
}

fn substack_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("SUBSTACK")?;
    if rest.is_empty() {
        Some(0)
    } else {
        rest.parse::<usize>().ok().filter(|n| *n >= 2).map(|n| n - 1)
    }
}

fn parse_field(owner: &str, name: &str, raw: &Value) -> Result<FieldSlot, LoadError> {
    let (value, id) = match raw {
        Value::Array(parts) => (
            parts.first().and_then(scalar_string).unwrap_or_default(),
            parts.get(1).and_then(Value::as_str).map(str::to_string),
        ),
        other => match scalar_string(other) {
            Some(v) => (v, None),
            None => return Err(violation(owner, format!("malformed field {name:?}"))),
        },
    };
    Ok(FieldSlot {
        name: name.to_string(),
        value,
        id,
    })
}

/// Expanded shadow blocks that stand for a primitive are folded back into
/// the primitive form so both encodings compare equal.
fn collapse_shadow(block: BlockNode) -> InputValue {
    if block.inputs.is_empty() && block.substacks.is_empty() {
        if let Some(kind) = LiteralKind::from_shadow_opcode(&block.opcode) {
            let (_, field) = kind.shadow_opcode();
            if let Some(f) = block.field(field) {
                return InputValue::Literal(Literal {
                    kind,
                    value: f.value.clone(),
                });
            }
        }
        let entity = |field: &str| {
            block.field(field).map(|f| EntityRef {
                name: f.value.clone(),
                id: f.id.clone(),
            })
        };
        match block.opcode.as_str() {
            "event_broadcast_menu" => {
                if let Some(r) = entity("BROADCAST_OPTION") {
                    return InputValue::Broadcast(r);
                }
            }
            "data_variable" if block.meta.comment.is_none() => {
                if let Some(r) = entity("VARIABLE") {
                    return InputValue::Variable(r);
                }
            }
            "data_listcontents" if block.meta.comment.is_none() => {
                if let Some(r) = entity("LIST") {
                    return InputValue::List(r);
                }
            }
            _ => {}
        }
    }
    InputValue::Expression(Box::new(block))
}

fn primitive_value(owner: &str, prim: &[Value]) -> Result<InputValue, LoadError> {
    let code = prim
        .first()
        .and_then(Value::as_u64)
        .ok_or_else(|| violation(owner, "primitive without a type code"))?;
    let text = |i: usize| prim.get(i).and_then(scalar_string);
    if let Some(kind) = LiteralKind::from_code(code) {
        return Ok(InputValue::Literal(Literal {
            kind,
            value: text(1).unwrap_or_default(),
        }));
    }
    let entity = || -> Result<EntityRef, LoadError> {
        Ok(EntityRef {
            name: text(1).ok_or_else(|| violation(owner, "primitive without a name"))?,
            id: prim.get(2).and_then(Value::as_str).map(str::to_string),
        })
    };
    match code {
        11 => Ok(InputValue::Broadcast(entity()?)),
        12 => Ok(InputValue::Variable(entity()?)),
        13 => Ok(InputValue::List(entity()?)),
        _ => Err(violation(owner, format!("unknown primitive type {code}"))),
    }
}

/// A top-level primitive (a loose variable or list reporter on the
/// workspace) becomes a one-block headless stack.
fn primitive_block(id: &str, prim: &[Value]) -> Result<BlockNode, LoadError> {
    let value = primitive_value(id, prim)?;
    let (opcode, field, r) = match value {
        InputValue::Variable(r) => ("data_variable", "VARIABLE", r),
        InputValue::List(r) => ("data_listcontents", "LIST", r),
        InputValue::Broadcast(r) => ("event_broadcast_menu", "BROADCAST_OPTION", r),
        _ => return Err(violation(id, "literal primitive cannot stand alone")),
    };
    let mut node = BlockNode::new(opcode);
    node.fields.push(FieldSlot {
        name: field.to_string(),
        value: r.name,
        id: r.id,
    });
    node.meta.id = Some(id.to_string());
    Ok(node)
}
